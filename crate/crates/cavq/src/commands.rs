use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cavq_core::harness::{
    self, baseline_episode, continue_training, episode_initial_conditions, evaluate, position_overlay,
    schedule_for, Agents, EpisodeLog, NormRecord, OverlaySeries, ScenarioPreset, TrainObserver,
    TrajectorySource, NORM_INTERVAL,
};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::config::ExperimentConfig;
use crate::plots::{overlay_chart, qnorm_chart};
use crate::records::{
    self, baseline_rows, baseline_summary_rows, overlay_rows, read_norms, read_trajectories, schedule_rows,
    write_norms, write_rows, write_summary, ComparisonRow, EpisodeRow, TrainingRow, TrajectoryRow,
};
use crate::snapshot::{self, Snapshot};

#[derive(Debug, Parser)]
#[command(name = "cavq", version, about = "Learned coordination of automated vehicles at a signal-free intersection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train Q-tables and write a snapshot, Q-norm history and training metrics.
    Train(TrainArgs),
    /// Run greedy episodes against a snapshot.
    Eval(EvalArgs),
    /// Run the FIFO schedule with energy-optimal trajectories.
    Baseline(BaselineArgs),
    /// Pair greedy episodes with the baseline on identical traffic.
    Compare(CompareArgs),
    /// Render SVG charts from Q-norm or trajectory CSV files.
    Plot(PlotArgs),
    /// Write the FIFO schedule of one episode.
    FifoDump(FifoDumpArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config file (TOML). Without it the preset is used as is.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Base preset when no config file is given.
    #[arg(long, default_value = "scenario1", conflicts_with = "config")]
    pub preset: String,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides the episode budget.
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Snapshot path; defaults to `<out>/qtable.txt`.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Continue from this snapshot instead of fresh tables.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub episodes: u64,
    /// Also write every step to `<out>/trajectories.csv`.
    #[arg(long)]
    pub trajectories: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1)]
    pub episodes: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub episodes: u64,
    /// Episode drawn in the position overlay.
    #[arg(long, default_value_t = 0)]
    pub overlay_episode: u64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub common: Common,
    /// Q-norm CSV written by `train`.
    #[arg(long)]
    pub norms: Option<PathBuf>,
    /// Trajectory CSV (learned and/or baseline rows).
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub episode: u64,
}

#[derive(Debug, Args)]
pub struct FifoDumpArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub episode: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Baseline(a) => baseline(a),
        Command::Compare(a) => compare(a),
        Command::Plot(a) => plot(a),
        Command::FifoDump(a) => fifo_dump(a),
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset_named(&common.preset)?,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let preset = config.preset()?;
    if !preset.sim.headway_covers_merging_zone(&preset.intersection) {
        warn!(
            "time headway {} s is shorter than the merging-zone crossing time at minimum speed ({} s)",
            preset.sim.time_headway,
            preset.intersection.merging_zone_length / preset.sim.v_min
        );
    }
    Ok(config)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

struct Progress {
    total: u64,
    block: Vec<TrainingRow>,
    crashes: u64,
    reward: f64,
    count: u64,
}

impl TrainObserver for Progress {
    fn on_episode(&mut self, log: &EpisodeLog, epsilon: f64) {
        self.crashes += log.crashed as u64;
        self.reward += log.total_reward();
        self.count += 1;
        let done = log.episode + 1;
        if done % NORM_INTERVAL == 0 || done == self.total {
            self.block.push(TrainingRow {
                episodes: done,
                epsilon,
                crash_rate: self.crashes as f64 / self.count as f64,
                mean_total_reward: self.reward / self.count as f64,
            });
            self.crashes = 0;
            self.reward = 0.0;
            self.count = 0;
        }
        if self.total >= 10 && done % (self.total / 10) == 0 {
            info!("episode {done}/{}: epsilon {epsilon:.3}", self.total);
        }
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut config = load_config(&args.common)?;
    if let Some(n) = args.episodes {
        config.learner.total_episodes = n;
    }
    let preset = config.preset()?;
    let out = &args.common.out;
    prepare_out(out)?;
    fs::write(out.join("config.toml"), config.to_toml()?)?;

    let (agents, start) = match &args.resume {
        Some(path) => {
            let snap = snapshot::load(path).with_context(|| format!("loading {}", path.display()))?;
            snap.check_grid(&preset.grid())?;
            if snap.mode != config.learner.mode {
                bail!("snapshot was trained in {} mode, config asks for {}", snap.mode.name(), config.learner.mode.name());
            }
            (snap.agents, snap.episode)
        }
        None => (Agents::new(&preset, &config.learner)?, 0),
    };
    let mut progress = Progress {
        total: config.learner.total_episodes,
        block: Vec::new(),
        crashes: 0,
        reward: 0.0,
        count: 0,
    };
    info!(
        "training {} for {} episodes (seed {})",
        preset.name, config.learner.total_episodes, config.seed
    );
    let outcome = continue_training(agents, &preset, &config.learner, config.seed, start, &mut progress)?;
    info!(
        "{} of {} training episodes crashed",
        outcome.crashed_episodes, outcome.episodes
    );

    let snap = Snapshot {
        mode: config.learner.mode,
        framework: preset.framework,
        episode: config.learner.total_episodes.max(start),
        grid: preset.grid(),
        agents: outcome.agents,
    };
    let snap_path = args.snapshot.clone().unwrap_or_else(|| out.join("qtable.txt"));
    snapshot::save(&snap, &snap_path).with_context(|| format!("writing {}", snap_path.display()))?;
    write_norm_outputs(out, snap.agents.tables().len(), &outcome.norms)?;
    write_rows(create(out, "training.csv")?, &progress.block)?;
    Ok(())
}

fn write_norm_outputs(out: &Path, agents: usize, norms: &[NormRecord]) -> Result<()> {
    write_norms(create(out, "qnorms.csv")?, agents, norms)?;
    fs::write(out.join("qnorms.svg"), qnorm_chart(norms).to_svg())?;
    Ok(())
}

fn load_snapshot(path: &Path, preset: &ScenarioPreset) -> Result<Snapshot> {
    let snap = snapshot::load(path).with_context(|| format!("loading {}", path.display()))?;
    snap.check_grid(&preset.grid())?;
    if snap.framework != preset.framework {
        bail!("snapshot framework does not match the config");
    }
    Ok(snap)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    let preset = config.preset()?;
    let snap = load_snapshot(&args.snapshot, &preset)?;
    let out = &args.common.out;
    prepare_out(out)?;
    let report = evaluate(&snap.agents, &preset, args.episodes, config.seed, args.trajectories)?;
    write_rows(create(out, "episodes.csv")?, report.episodes.iter().map(EpisodeRow::from))?;
    write_summary(create(out, "summary.csv")?, &report.summary)?;
    if args.trajectories {
        let rows: Vec<TrajectoryRow> = report
            .episodes
            .iter()
            .flat_map(|e| e.records.iter().map(TrajectoryRow::from))
            .collect();
        records::write_trajectories(create(out, "trajectories.csv")?, &rows)?;
    }
    let s = &report.summary;
    println!(
        "episodes {} crashes {} (rear {}, lateral {}) fifo-order {:.3} travel {:.3} s fuel {:.3}{}",
        s.episodes,
        s.crashes,
        s.rear_violation_episodes,
        s.lateral_violation_episodes,
        s.fifo_respected_fraction,
        s.mean_travel_time,
        s.mean_fuel,
        s.mean_merge_error.map_or(String::new(), |e| format!(" merge error {e:.3} s"))
    );
    Ok(())
}

pub fn baseline(args: BaselineArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    let preset = config.preset()?;
    let out = &args.common.out;
    prepare_out(out)?;
    let dt = preset.sim.dt;
    let horizon = preset.sim.max_steps_for(&preset.intersection);
    let mut traj = Vec::new();
    let mut summary = Vec::new();
    for e in 0..args.episodes {
        let run = baseline_episode(&preset, config.seed, e).with_context(|| format!("baseline episode {e}"))?;
        for v in &run.vehicles {
            for w in &v.trajectory.warnings {
                warn!("episode {e} vehicle {}: {w:?}", v.id);
            }
        }
        traj.extend(baseline_rows(e, &run, &preset.intersection, dt, horizon));
        summary.extend(baseline_summary_rows(e, &run, dt));
    }
    records::write_trajectories(create(out, "baseline_trajectories.csv")?, &traj)?;
    write_rows(create(out, "baseline.csv")?, &summary)?;
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    let preset = config.preset()?;
    let snap = load_snapshot(&args.snapshot, &preset)?;
    let out = &args.common.out;
    prepare_out(out)?;
    let dt = preset.sim.dt;
    let report = evaluate(&snap.agents, &preset, args.episodes, config.seed, false)?;
    let baselines = (0..args.episodes)
        .map(|e| baseline_episode(&preset, config.seed, e))
        .collect::<Result<Vec<_>, _>>()?;
    let cmp = harness::compare(&report.episodes, &baselines, dt);
    write_rows(create(out, "comparison.csv")?, cmp.rows.iter().map(ComparisonRow::from))?;
    {
        let mut w = csv::Writer::from_writer(create(out, "comparison_summary.csv")?);
        w.write_record(["metric", "rl", "baseline", "delta"])?;
        let f = |x: f64| x.to_string();
        w.write_record(["travel_time", &f(cmp.mean_rl_travel_time), &f(cmp.mean_baseline_travel_time), &f(cmp.mean_travel_delta)])?;
        w.write_record(["fuel", &f(cmp.mean_rl_fuel), &f(cmp.mean_baseline_fuel), &f(cmp.mean_fuel_delta)])?;
        w.write_record(["paired_vehicles", &cmp.rows.len().to_string(), "", ""])?;
        w.write_record(["baseline_out_of_bounds", &cmp.out_of_bounds.to_string(), "", ""])?;
        w.flush()?;
    }
    write_summary(create(out, "summary.csv")?, &report.summary)?;

    if args.overlay_episode < args.episodes {
        let e = args.overlay_episode;
        let horizon = preset.sim.max_steps_for(&preset.intersection);
        let log = harness::run_greedy_episode(&snap.agents, &preset, config.seed, e, true)?;
        let series = position_overlay(&log, &baselines[e as usize], dt, horizon);
        write_rows(create(out, "overlay.csv")?, overlay_rows(&series))?;
        let chart = overlay_chart(&series, preset.intersection.control_zone_length, preset.intersection.exit_position());
        fs::write(out.join("overlay.svg"), chart.to_svg())?;
        let mut rows: Vec<TrajectoryRow> = log.records.iter().map(TrajectoryRow::from).collect();
        rows.extend(baseline_rows(e, &baselines[e as usize], &preset.intersection, dt, horizon));
        records::write_trajectories(create(out, "overlay_trajectories.csv")?, &rows)?;
    }
    println!(
        "paired vehicles {} ({} baseline out of bounds) travel time rl {:.3} s baseline {:.3} s, fuel rl {:.3} baseline {:.3}",
        cmp.rows.len(),
        cmp.out_of_bounds,
        cmp.mean_rl_travel_time,
        cmp.mean_baseline_travel_time,
        cmp.mean_rl_fuel,
        cmp.mean_baseline_fuel
    );
    Ok(())
}

/// Rebuilds overlay series from trajectory rows of one episode.
pub fn overlay_from_rows(rows: &[TrajectoryRow], episode: u64) -> Vec<OverlaySeries> {
    let mut series: Vec<OverlaySeries> = Vec::new();
    for r in rows.iter().filter(|r| r.episode == episode) {
        let source = if r.source == "baseline" {
            TrajectorySource::Baseline
        } else {
            TrajectorySource::Learned
        };
        match series.iter_mut().find(|s| s.vehicle == r.vehicle && s.source == source) {
            Some(s) => s.points.push((r.time, r.p)),
            None => series.push(OverlaySeries {
                vehicle: r.vehicle,
                source,
                points: vec![(r.time, r.p)],
            }),
        }
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    series.sort_by_key(|s| (s.source == TrajectorySource::Baseline, s.vehicle));
    series
}

pub fn plot(args: PlotArgs) -> Result<()> {
    if args.norms.is_none() && args.trajectories.is_none() {
        bail!("nothing to plot: pass --norms and/or --trajectories");
    }
    let config = load_config(&args.common)?;
    let out = &args.common.out;
    prepare_out(out)?;
    if let Some(path) = &args.norms {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let norms = read_norms(file)?;
        fs::write(out.join("qnorms.svg"), qnorm_chart(&norms).to_svg())?;
    }
    if let Some(path) = &args.trajectories {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let rows = read_trajectories(file)?;
        let series = overlay_from_rows(&rows, args.episode);
        let inter = config.intersection;
        fs::write(
            out.join("overlay.svg"),
            overlay_chart(&series, inter.control_zone_length, inter.exit_position()).to_svg(),
        )?;
    }
    Ok(())
}

pub fn fifo_dump(args: FifoDumpArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    let preset = config.preset()?;
    let out = &args.common.out;
    prepare_out(out)?;
    let spawns = episode_initial_conditions(&preset, config.seed, args.episode);
    let plan = schedule_for(&preset, &spawns)?;
    write_rows(create(out, "schedule.csv")?, schedule_rows(&plan))?;
    Ok(())
}
