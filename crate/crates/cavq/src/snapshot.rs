//! Line-based Q-table snapshots.
//!
//! ```text
//! cavq-qtable 1
//! mode hysteretic
//! framework standalone
//! episode 200000
//! grid dp=2 position_bins=25 v_min=5 dv=5 speed_bins=3 u_min=-3 du=1 actions=7 schedule_min=2.1333333333333333 schedule_bin=0.5 schedule_bins=10
//! agents 4 actions 7
//! table 0 3
//! 0,1,-,-,-,-,- 3 0.25
//! ...
//! end
//! ```
//!
//! `agents` gives the vehicle count and per-vehicle action count. A
//! centralized snapshot has a single table whose action index is the
//! mixed-radix joint action. Each record holds the comma-separated state
//! bins (`-` for an absent neighbor), the action index and the value printed
//! in shortest round-trip form, so loading restores every value bit for bit.
//! Records are sorted by key and action.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use cavq_core::harness::Agents;
use cavq_core::learner::{JointActionSpace, QTable, UpdateMode};
use cavq_core::{DiscreteGrid, Framework, StateKey};

pub const MAGIC: &str = "cavq-qtable";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("snapshot grid {found} does not match the configured grid {expected}")]
    GridMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub mode: UpdateMode,
    pub framework: Framework,
    pub episode: u64,
    pub grid: DiscreteGrid,
    pub agents: Agents,
}

impl Snapshot {
    pub fn check_grid(&self, expected: &DiscreteGrid) -> Result<(), SnapshotError> {
        if grid_line(&self.grid) != grid_line(expected) {
            return Err(SnapshotError::GridMismatch {
                expected: grid_line(expected),
                found: grid_line(&self.grid),
            });
        }
        Ok(())
    }
}

fn framework_name(f: Framework) -> &'static str {
    match f {
        Framework::Standalone => "standalone",
        Framework::Combined => "combined",
    }
}

fn grid_line(g: &DiscreteGrid) -> String {
    format!(
        "dp={} position_bins={} v_min={} dv={} speed_bins={} u_min={} du={} actions={} schedule_min={} schedule_bin={} schedule_bins={}",
        g.dp,
        g.position_bins,
        g.v_min,
        g.dv,
        g.speed_bins,
        g.u_min,
        g.du,
        g.action_count,
        g.schedule_min,
        g.schedule_bin,
        g.schedule_bins
    )
}

fn key_text(key: &StateKey) -> String {
    let mut s = String::new();
    for (i, b) in key.bins().iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        if *b == StateKey::ABSENT {
            s.push('-');
        } else {
            let _ = write!(s, "{b}");
        }
    }
    s
}

pub fn write_snapshot<W: Write>(snap: &Snapshot, mut out: W) -> Result<(), SnapshotError> {
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(out, "mode {}", snap.mode.name())?;
    writeln!(out, "framework {}", framework_name(snap.framework))?;
    writeln!(out, "episode {}", snap.episode)?;
    writeln!(out, "grid {}", grid_line(&snap.grid))?;
    let (agents, per_agent) = match &snap.agents {
        Agents::Independent(t) => (t.len(), t.first().map_or(snap.grid.action_count, QTable::action_count)),
        Agents::Centralized { space, .. } => (space.agents, space.per_agent),
    };
    writeln!(out, "agents {agents} actions {per_agent}")?;
    for (i, table) in snap.agents.tables().iter().enumerate() {
        let entries = table.sorted_entries();
        writeln!(out, "table {i} {}", entries.len())?;
        for (key, action, value) in entries {
            writeln!(out, "{} {action} {value}", key_text(key))?;
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String, SnapshotError> {
        self.number += 1;
        match self.inner.next() {
            Some(line) => Ok(line?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> SnapshotError {
        SnapshotError::Format {
            line: self.number,
            msg: msg.into(),
        }
    }

    fn field<'a>(&self, line: &'a str, name: &str) -> Result<&'a str, SnapshotError> {
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{name}`")))
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines<impl BufRead>, s: &str) -> Result<T, SnapshotError> {
    s.parse().map_err(|_| lines.err(format!("bad number `{s}`")))
}

fn parse_grid(lines: &Lines<impl BufRead>, text: &str) -> Result<DiscreteGrid, SnapshotError> {
    let mut fields = std::collections::HashMap::new();
    for part in text.split_whitespace() {
        let (k, v) = part.split_once('=').ok_or_else(|| lines.err("bad grid field"))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| lines.err(format!("grid is missing `{k}`")));
    Ok(DiscreteGrid {
        dp: parse_num(lines, get("dp")?)?,
        position_bins: parse_num(lines, get("position_bins")?)?,
        v_min: parse_num(lines, get("v_min")?)?,
        dv: parse_num(lines, get("dv")?)?,
        speed_bins: parse_num(lines, get("speed_bins")?)?,
        u_min: parse_num(lines, get("u_min")?)?,
        du: parse_num(lines, get("du")?)?,
        action_count: parse_num(lines, get("actions")?)?,
        schedule_min: parse_num(lines, get("schedule_min")?)?,
        schedule_bin: parse_num(lines, get("schedule_bin")?)?,
        schedule_bins: parse_num(lines, get("schedule_bins")?)?,
    })
}

fn parse_key(lines: &Lines<impl BufRead>, text: &str) -> Result<StateKey, SnapshotError> {
    let bins = text
        .split(',')
        .map(|b| if b == "-" { Ok(StateKey::ABSENT) } else { parse_num(lines, b) })
        .collect::<Result<Vec<u16>, _>>()?;
    Ok(StateKey::from_bins(&bins))
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<Snapshot, SnapshotError> {
    let mut lines = Lines {
        inner: input.lines(),
        number: 0,
    };
    let header = lines.next()?;
    let version = lines.field(&header, MAGIC)?;
    if parse_num::<u32>(&lines, version)? != VERSION {
        return Err(lines.err(format!("unsupported version {version}")));
    }
    let line = lines.next()?;
    let mode_name = lines.field(&line, "mode")?;
    let mode = UpdateMode::from_name(mode_name).ok_or_else(|| lines.err(format!("unknown mode `{mode_name}`")))?;
    let line = lines.next()?;
    let framework = match lines.field(&line, "framework")? {
        "standalone" => Framework::Standalone,
        "combined" => Framework::Combined,
        other => return Err(lines.err(format!("unknown framework `{other}`"))),
    };
    let line = lines.next()?;
    let episode = parse_num(&lines, lines.field(&line, "episode")?)?;
    let line = lines.next()?;
    let grid = parse_grid(&lines, lines.field(&line, "grid")?)?;
    let line = lines.next()?;
    let rest = lines.field(&line, "agents")?;
    let (agent_text, per_text) = rest
        .split_once(" actions ")
        .ok_or_else(|| lines.err("expected `agents N actions M`"))?;
    let agents: usize = parse_num(&lines, agent_text)?;
    let per_agent: usize = parse_num(&lines, per_text)?;

    let (table_count, actions) = match mode {
        UpdateMode::Centralized => {
            let space = JointActionSpace::new(agents, per_agent, usize::MAX)
                .map_err(|e| lines.err(e.to_string()))?;
            (1, space.size())
        }
        _ => (agents, per_agent),
    };
    let mut tables = Vec::with_capacity(table_count);
    for index in 0..table_count {
        let line = lines.next()?;
        let rest = lines.field(&line, "table")?;
        let (idx, count) = rest.split_once(' ').ok_or_else(|| lines.err("expected `table I COUNT`"))?;
        if parse_num::<usize>(&lines, idx)? != index {
            return Err(lines.err(format!("expected table {index}")));
        }
        let count: usize = parse_num(&lines, count)?;
        let mut q = QTable::new(actions);
        for _ in 0..count {
            let line = lines.next()?;
            let mut parts = line.split(' ');
            let (Some(key), Some(action), Some(value), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(lines.err("expected `KEY ACTION VALUE`"));
            };
            let key = parse_key(&lines, key)?;
            let action: usize = parse_num(&lines, action)?;
            if action >= actions {
                return Err(lines.err(format!("action {action} out of range")));
            }
            q.set(&key, action, parse_num(&lines, value)?);
        }
        tables.push(q);
    }
    if lines.next()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    let agents = match mode {
        UpdateMode::Centralized => Agents::Centralized {
            table: tables.pop().expect("one table"),
            space: JointActionSpace::new(agents, per_agent, usize::MAX).map_err(|e| lines.err(e.to_string()))?,
            key_len: match framework {
                Framework::Standalone => 7,
                Framework::Combined => 5,
            },
        },
        _ => Agents::Independent(tables),
    };
    Ok(Snapshot {
        mode,
        framework,
        episode,
        grid,
        agents,
    })
}

pub fn save(snap: &Snapshot, path: &std::path::Path) -> Result<(), SnapshotError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshot(snap, file)
}

pub fn load(path: &std::path::Path) -> Result<Snapshot, SnapshotError> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}
