use std::io::Cursor;

use cavq::snapshot::{load, read_snapshot, save, write_snapshot, Snapshot, SnapshotError};
use cavq_core::harness::{train, Agents, ScenarioPreset};
use cavq_core::learner::{JointActionSpace, QTable, UpdateMode};
use cavq_core::{Framework, StateKey};
use proptest::prelude::*;

fn round_trip(snap: &Snapshot) -> Snapshot {
    let mut buf = Vec::new();
    write_snapshot(snap, &mut buf).unwrap();
    read_snapshot(Cursor::new(buf)).unwrap()
}

fn table_strategy(key_len: usize, actions: usize) -> impl Strategy<Value = QTable> {
    let bin = prop_oneof![0u16..40, Just(StateKey::ABSENT)];
    let entry = (prop::collection::vec(bin, key_len), 0..actions, -1e6f64..1e6);
    prop::collection::vec(entry, 0..40).prop_map(move |entries| {
        let mut q = QTable::new(actions);
        for (bins, a, v) in entries {
            q.set(&StateKey::from_bins(&bins), a, v);
        }
        q
    })
}

proptest! {
    #[test]
    fn independent_tables_round_trip_exactly(tables in prop::collection::vec(table_strategy(7, 7), 1..5)) {
        let preset = ScenarioPreset::scenario1();
        let snap = Snapshot {
            mode: UpdateMode::Hysteretic,
            framework: Framework::Standalone,
            episode: 123,
            grid: preset.grid(),
            agents: Agents::Independent(tables),
        };
        prop_assert_eq!(round_trip(&snap), snap);
    }

    #[test]
    fn centralized_table_round_trips_exactly(table in table_strategy(5, 49)) {
        let preset = ScenarioPreset::scenario2();
        let snap = Snapshot {
            mode: UpdateMode::Centralized,
            framework: Framework::Combined,
            episode: 0,
            grid: preset.grid(),
            agents: Agents::Centralized {
                table,
                space: JointActionSpace::new(2, 7, usize::MAX).unwrap(),
                key_len: 5,
            },
        };
        prop_assert_eq!(round_trip(&snap), snap);
    }
}

#[test]
fn trained_tables_survive_a_file() {
    let preset = ScenarioPreset::scenario1();
    let mut learner = preset.learner_config();
    learner.total_episodes = 300;
    let outcome = train(&preset, &learner, 9).unwrap();
    let snap = Snapshot {
        mode: learner.mode,
        framework: preset.framework,
        episode: 300,
        grid: preset.grid(),
        agents: outcome.agents,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.txt");
    save(&snap, &path).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back, snap);
    back.check_grid(&preset.grid()).unwrap();
}

#[test]
fn grid_mismatch_is_reported() {
    let snap = Snapshot {
        mode: UpdateMode::Hysteretic,
        framework: Framework::Standalone,
        episode: 0,
        grid: ScenarioPreset::scenario1().grid(),
        agents: Agents::Independent(vec![QTable::new(7)]),
    };
    let other = ScenarioPreset::scenario2().grid();
    assert!(matches!(snap.check_grid(&other), Err(SnapshotError::GridMismatch { .. })));
}

#[test]
fn malformed_files_name_the_line() {
    let mut buf = Vec::new();
    let snap = Snapshot {
        mode: UpdateMode::Independent,
        framework: Framework::Standalone,
        episode: 5,
        grid: ScenarioPreset::scenario1().grid(),
        agents: Agents::Independent(vec![{
            let mut q = QTable::new(7);
            q.set(&StateKey::from_bins(&[1, 2, 3]), 4, 0.5);
            q
        }]),
    };
    write_snapshot(&snap, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();

    let line_of = |bad: &str| match read_snapshot(Cursor::new(bad.as_bytes())) {
        Err(SnapshotError::Format { line, .. }) => line,
        other => panic!("expected a format error, got {other:?}"),
    };
    assert_eq!(line_of(&text.replace("cavq-qtable 1", "cavq-qtable 2")), 1);
    assert_eq!(line_of(&text.replace("mode independent", "mode greedy")), 2);
    assert_eq!(line_of(&text.replace("1,2,3 4 0.5", "1,2,3 9 0.5")), 12);
    assert_eq!(line_of(&text.replace("1,2,3 4 0.5", "1,x,3 4 0.5")), 12);
    assert_eq!(line_of(&text.replace("end\n", "")), 15);
}
