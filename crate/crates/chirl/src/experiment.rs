//! Experiment specs, paper-protocol presets and the cell runner.
//!
//! A spec expands into cells `(grid size, trajectory count, seed,
//! algorithm)`. Each cell generates its demos, trains, evaluates and writes
//! its own log; cells run on a bounded worker pool and a failing cell is
//! recorded without touching the others.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, ensure, Context as _, Result};
use serde::{Deserialize, Serialize};

use chirl_core::env::goalnav::{build_goalnav_with, DISCOUNT as GOALNAV_DISCOUNT};
use chirl_core::env::grid::GridLayout;
use chirl_core::env::jctnav::{build_jctnav_with, JctLayout, DISCOUNT as JCTNAV_DISCOUNT, GRID as JCT_GRID};
use chirl_core::env::taxi::{build_taxi, TaxiBundle};
use chirl_core::env::{generate_demo_set, EnvBundle, Expert};
use chirl_core::irl::{mean_evd, train, Algorithm, Clock, DemoSet, EvalTask, RewardModel, TrainingTask};
use chirl_core::metrics::{aggregate, RunRecord};
use chirl_core::reward_net::NetShape;

use crate::formats::{self, CheckpointInfo, IrlConfigFile, ShapeFile};
use crate::tables;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Goalnav,
    Jctnav,
    Taxi,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Goalnav => "goalnav",
            EnvKind::Jctnav => "jctnav",
            EnvKind::Taxi => "taxi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpertKind {
    Soft,
    Greedy,
}

/// Hyperparameter lists whose cross product replaces the base values; an
/// empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSearch {
    pub learning_rate: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub env: EnvKind,
    /// Taxi grid sizes; other environments ignore it.
    pub grid_sizes: Vec<usize>,
    /// Seed of the generated JctNav road layout.
    pub layout_seed: u64,
    /// Layout fixture overriding the built-in GoalNav map or the generated
    /// JctNav roads.
    pub layout: Option<PathBuf>,
    pub algorithms: Vec<String>,
    /// For Taxi, hierarchical episodes; otherwise trajectories dealt
    /// round-robin over the contexts.
    pub traj_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub irl: IrlConfigFile,
    pub net: ShapeFile,
    pub expert: ExpertKind,
    /// Inverse temperature of the soft expert.
    pub beta: f64,
    /// Step limit per demonstration trajectory.
    pub max_len: usize,
    pub eval_tol: f64,
    pub grid_search: Option<GridSearch>,
    /// Demonstrations to load instead of generating; every cell then uses
    /// the whole file.
    pub demos: Option<PathBuf>,
    pub save_demos: bool,
    pub save_checkpoints: bool,
    /// Taxi only: flat-simulator episodes for the success rate (0 skips).
    pub success_episodes: usize,
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            env: EnvKind::Goalnav,
            grid_sizes: vec![5],
            layout_seed: 0,
            layout: None,
            algorithms: vec![Algorithm::Chirl.name().into()],
            traj_counts: vec![64],
            seeds: (0..10).collect(),
            irl: paper_config(1e-2, 1e-3, 0.8, 500),
            net: (&NetShape::default()).into(),
            expert: ExpertKind::Soft,
            beta: 1.0,
            max_len: 200,
            eval_tol: 1e-9,
            grid_search: None,
            demos: None,
            save_demos: false,
            save_checkpoints: false,
            success_episodes: 0,
            out: PathBuf::from("results"),
        }
    }
}

pub const TRAJ_COUNTS: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];

/// Published hyperparameters plus the run settings every preset shares:
/// per-trajectory normalized statistics and EVD every 25 epochs.
fn paper_config(learning_rate: f64, l1: f64, l2: f64, epochs: usize) -> IrlConfigFile {
    IrlConfigFile {
        learning_rate,
        l1,
        l2,
        epochs,
        normalize_by_trajectories: true,
        eval_every: 25,
        ..IrlConfigFile::default()
    }
}

fn names(algos: &[Algorithm]) -> Vec<String> {
    algos.iter().map(|a| a.name().to_string()).collect()
}

pub const PRESET_NAMES: [&str; 5] = ["goalnav", "jctnav", "taxi", "taxi_scaleup", "taxi_ablation"];

pub fn presets() -> Vec<ExperimentSpec> {
    use Algorithm::*;
    let base = ExperimentSpec {
        traj_counts: TRAJ_COUNTS.to_vec(),
        ..ExperimentSpec::default()
    };
    vec![
        ExperimentSpec {
            name: "goalnav".into(),
            env: EnvKind::Goalnav,
            algorithms: names(&[Chirl, MaxEntLinear, DeepIrl, Hirl]),
            irl: paper_config(1e-2, 1e-3, 0.8, 500),
            out: "results/goalnav".into(),
            ..base.clone()
        },
        ExperimentSpec {
            name: "jctnav".into(),
            env: EnvKind::Jctnav,
            algorithms: names(&[Chirl, MaxEntLinear, DeepIrl, Hirl]),
            irl: paper_config(5e-2, 2.0, 0.8, 500),
            out: "results/jctnav".into(),
            ..base.clone()
        },
        ExperimentSpec {
            name: "taxi".into(),
            env: EnvKind::Taxi,
            algorithms: names(&[Chirl, MaxEntLinear, DeepIrl, Hirl]),
            irl: paper_config(1e-2, 1e-3, 0.8, 500),
            success_episodes: 100,
            out: "results/taxi".into(),
            ..base.clone()
        },
        ExperimentSpec {
            name: "taxi_scaleup".into(),
            env: EnvKind::Taxi,
            grid_sizes: vec![5, 10, 15, 20],
            algorithms: names(&[Chirl, ChirlNoAbstraction]),
            traj_counts: vec![256],
            irl: paper_config(1e-2, 1e-3, 0.8, 500),
            out: "results/taxi_scaleup".into(),
            ..base.clone()
        },
        ExperimentSpec {
            name: "taxi_ablation".into(),
            env: EnvKind::Taxi,
            algorithms: names(&[Chirl, ChirlNoAbstraction, Hirl, DeepIrl]),
            irl: paper_config(1e-2, 1e-3, 0.8, 500),
            success_episodes: 100,
            out: "results/taxi_ablation".into(),
            ..base
        },
    ]
}

pub fn preset(name: &str) -> Option<ExperimentSpec> {
    presets().into_iter().find(|p| p.name == name)
}

/// A spec that failed validation; the CLI exits with status 2.
#[derive(Debug)]
pub struct InvalidSpec(pub String);

impl std::fmt::Display for InvalidSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid experiment spec: {}", self.0)
    }
}

impl std::error::Error for InvalidSpec {}

/// One training configuration of one algorithm.
#[derive(Debug, Clone)]
struct Variant {
    algorithm: Algorithm,
    label: String,
    irl: IrlConfigFile,
}

impl ExperimentSpec {
    pub fn validate(&self) -> std::result::Result<(), InvalidSpec> {
        let bad = |m: String| Err(InvalidSpec(m));
        if self.algorithms.is_empty() {
            return bad("no algorithms".into());
        }
        for a in &self.algorithms {
            if a.parse::<Algorithm>().is_err() {
                return bad(format!("unknown algorithm `{a}`"));
            }
        }
        if self.traj_counts.is_empty() || self.traj_counts.contains(&0) && self.demos.is_none() {
            return bad("trajectory counts must be nonempty and positive".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.env == EnvKind::Taxi {
            if self.grid_sizes.is_empty() {
                return bad("no taxi grid sizes".into());
            }
            if let Some(g) = self.grid_sizes.iter().find(|&&g| g == 0 || g % 5 != 0) {
                return bad(format!("taxi grid size {g} is not a positive multiple of 5"));
            }
        }
        if self.irl.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if let Err(e) = self.irl.to_config(0) {
            return bad(e.to_string());
        }
        if self.net.interface == 0 || self.net.hidden.contains(&0) {
            return bad("network widths must be positive".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("expert beta must be positive".into());
        }
        if self.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        for path in self.layout.iter().chain(&self.demos) {
            if !path.exists() {
                return bad(format!("file {} does not exist", path.display()));
            }
        }
        if self.layout.is_some() && self.env == EnvKind::Taxi {
            return bad("taxi layouts are fixed by the grid size".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        formats::sha256_hex(serde_json::to_string(self).expect("spec serializes").as_bytes())
    }

    fn expert(&self) -> Expert {
        match self.expert {
            ExpertKind::Soft => Expert::Soft { beta: self.beta },
            ExpertKind::Greedy => Expert::Greedy,
        }
    }

    fn variants(&self) -> Vec<Variant> {
        let algorithms: Vec<Algorithm> = self.algorithms.iter().map(|a| a.parse().expect("validated")).collect();
        let mut irls = vec![(None, self.irl.clone())];
        if let Some(g) = &self.grid_search {
            let pick = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
            irls.clear();
            for &lr in &pick(&g.learning_rate, self.irl.learning_rate) {
                for &l1 in &pick(&g.l1, self.irl.l1) {
                    for &l2 in &pick(&g.l2, self.irl.l2) {
                        let irl = IrlConfigFile {
                            learning_rate: lr,
                            l1,
                            l2,
                            ..self.irl.clone()
                        };
                        irls.push((Some(format!("lr={lr},l1={l1},l2={l2}")), irl));
                    }
                }
            }
        }
        let mut out = Vec::new();
        for &algorithm in &algorithms {
            for (tag, irl) in &irls {
                let label = match tag {
                    Some(t) => format!("{}[{t}]", algorithm.name()),
                    None => algorithm.name().to_string(),
                };
                out.push(Variant {
                    algorithm,
                    label,
                    irl: irl.clone(),
                });
            }
        }
        out
    }
}

/// A built benchmark shared by all cells of one grid size.
enum Bench {
    Flat(EnvBundle),
    Taxi(TaxiBundle),
}

impl Bench {
    fn build(spec: &ExperimentSpec, grid: usize) -> Result<Self> {
        Ok(match spec.env {
            EnvKind::Goalnav => {
                let layout = match &spec.layout {
                    Some(p) => formats::read_grid_layout(p)?,
                    None => GridLayout::classic_taxi(1),
                };
                Bench::Flat(build_goalnav_with(&layout, GOALNAV_DISCOUNT)?)
            }
            EnvKind::Jctnav => {
                let layout = match &spec.layout {
                    Some(p) => formats::read_jct_layout(p)?,
                    None => JctLayout::generate(JCT_GRID, spec.layout_seed)?,
                };
                Bench::Flat(build_jctnav_with(&layout, JCTNAV_DISCOUNT)?)
            }
            EnvKind::Taxi => Bench::Taxi(build_taxi(grid)?),
        })
    }

    fn env(&self) -> &EnvBundle {
        match self {
            Bench::Flat(e) => e,
            Bench::Taxi(t) => &t.env,
        }
    }

    fn demos(&self, spec: &ExperimentSpec, n_traj: usize, seed: u64) -> Result<DemoSet> {
        if let Some(path) = &spec.demos {
            return formats::read_demos(path, &self.env().dag);
        }
        Ok(match self {
            Bench::Flat(e) => generate_demo_set(e, n_traj, spec.max_len, spec.expert(), seed)?,
            Bench::Taxi(t) => t.generate_episodes(n_traj, spec.expert(), seed)?,
        })
    }

    fn tasks(&self, demos: &DemoSet, algorithm: Algorithm, tol: f64) -> Result<(Vec<TrainingTask>, Vec<EvalTask>)> {
        Ok(match self {
            Bench::Flat(e) => (e.training_tasks(demos), e.eval_tasks(tol)?),
            Bench::Taxi(t) => {
                let abs = algorithm.uses_abstraction();
                (t.training_tasks(demos, abs), t.eval_tasks(abs, tol)?)
            }
        })
    }
}

/// Wall-clock seconds since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub env: String,
    pub algorithm: String,
    pub n_traj: usize,
    pub seed: u64,
    /// `ok` or `failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_evd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_epoch_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_demos: Option<usize>,
    /// Taxi: delivery rate of the learned hierarchical policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<f64>,
    /// Taxi: some context's learned reward was constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate_reward: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub version: String,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    pub table: String,
    pub cells: Vec<CellResult>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub records: Vec<RunRecord>,
    pub cells: Vec<CellResult>,
    pub failed: usize,
}

struct Cell {
    grid: usize,
    n_traj: usize,
    seed: u64,
    variant: usize,
}

fn env_label(spec: &ExperimentSpec, grid: usize) -> String {
    match spec.env {
        EnvKind::Taxi => format!("taxi-{grid}"),
        other => other.name().to_string(),
    }
}

fn file_stem(env: &str, algorithm: &str, n_traj: usize, seed: u64) -> String {
    let algo: String = algorithm
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{env}__{algo}__n{n_traj}__seed{seed}")
}

/// Worker count from `CHIRL_THREADS`, else the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("CHIRL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_cell(spec: &ExperimentSpec, bench: &Bench, variant: &Variant, cell: &Cell, out: &Path, env: &str) -> Result<CellResult> {
    let seed = cell.seed;
    let stem = file_stem(env, &variant.label, cell.n_traj, seed);
    let demos = bench.demos(spec, cell.n_traj, seed)?;
    if spec.save_demos {
        formats::write_demos(&out.join("demos").join(format!("{stem}.jsonl")), &bench.env().dag, &demos)?;
    }
    let (tasks, eval) = bench.tasks(&demos, variant.algorithm, spec.eval_tol)?;
    let shape: NetShape = (&spec.net).into();
    let dag = &bench.env().dag;
    let mut model = RewardModel::new(variant.algorithm.model_kind(), dag, bench.env().feature_dim(), &shape, seed)?;
    let cfg = variant.irl.to_config(seed)?;
    let clock = WallClock::new();
    let logs = train(&mut model, &tasks, &cfg, &clock, &mut |m| Ok(mean_evd(m, &eval)?))?;
    let log_rel = format!("runs/{stem}.csv");
    tables::write_log(&out.join(&log_rel), &logs)?;
    let final_evd = logs.last().map(|l| l.evd).context("no epochs ran")?;
    let mean_epoch_seconds = logs.iter().map(|l| l.epoch_seconds).sum::<f64>() / logs.len() as f64;
    let (mut success_rate, mut degenerate_reward) = (None, None);
    if let Bench::Taxi(t) = bench {
        if spec.success_episodes > 0 {
            let rewards = t.flat_rewards(&model, variant.algorithm.uses_abstraction())?;
            let (rate, degenerate) = t.success_rate(&rewards, spec.success_episodes, seed, 200)?;
            success_rate = Some(rate);
            degenerate_reward = Some(degenerate);
        }
    }
    let checkpoint = if spec.save_checkpoints {
        let info = CheckpointInfo {
            seed,
            algorithm: Some(variant.label.clone()),
            hyperparameters: Some(variant.irl.clone()),
        };
        let path = formats::save_checkpoint(&out.join("checkpoints").join(&stem), &model, dag, &shape, &info)?;
        Some(path.strip_prefix(out).unwrap_or(&path).display().to_string())
    } else {
        None
    };
    Ok(CellResult {
        env: env.to_string(),
        algorithm: variant.label.clone(),
        n_traj: cell.n_traj,
        seed,
        status: "ok".into(),
        error: None,
        log: Some(log_rel),
        final_evd: Some(final_evd),
        mean_epoch_seconds: Some(mean_epoch_seconds),
        demo_trajectories: Some(demos.n_trajectories()),
        truncated_demos: Some(demos.iter().filter(|t| t.truncated).count()),
        success_rate,
        degenerate_reward,
        checkpoint,
    })
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Runs every cell of `spec` and writes logs, `table.csv` and
/// `manifest.json` under `spec.out`. Cell failures are recorded, not
/// returned; errors here mean the spec or output directory is unusable.
pub fn run(spec: &ExperimentSpec) -> Result<RunSummary> {
    spec.validate()?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let wall = Instant::now();
    let out = spec.out.clone();
    fs::create_dir_all(out.join("runs")).with_context(|| format!("creating {}", out.display()))?;
    if spec.save_demos {
        fs::create_dir_all(out.join("demos"))?;
    }
    if spec.save_checkpoints {
        fs::create_dir_all(out.join("checkpoints"))?;
    }

    let grids: Vec<usize> = if spec.env == EnvKind::Taxi { spec.grid_sizes.clone() } else { vec![0] };
    let mut benches = BTreeMap::new();
    for &g in &grids {
        let bench = Bench::build(spec, g).map_err(|e| InvalidSpec(format!("building {}: {e:#}", spec.env.name())))?;
        benches.insert(g, Arc::new(bench));
    }
    let variants = spec.variants();
    let traj_counts: Vec<usize> = if spec.demos.is_some() { vec![0] } else { spec.traj_counts.clone() };
    let mut cells = Vec::new();
    for &grid in &grids {
        for &n_traj in &traj_counts {
            for &seed in &spec.seeds {
                for variant in 0..variants.len() {
                    cells.push(Cell {
                        grid,
                        n_traj,
                        seed,
                        variant,
                    });
                }
            }
        }
    }

    let threads = worker_threads().min(cells.len()).max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                let variant = &variants[cell.variant];
                let env = env_label(spec, cell.grid);
                let bench = &benches[&cell.grid];
                let outcome = catch_unwind(AssertUnwindSafe(|| run_cell(spec, bench, variant, cell, &out, &env)));
                let error = match outcome {
                    Ok(Ok(result)) => {
                        results.lock().expect("results lock")[i] = Some(result);
                        continue;
                    }
                    Ok(Err(e)) => format!("{e:#}"),
                    Err(p) => format!("panicked: {}", panic_message(p)),
                };
                results.lock().expect("results lock")[i] = Some(CellResult {
                    env,
                    algorithm: variant.label.clone(),
                    n_traj: cell.n_traj,
                    seed: cell.seed,
                    status: "failed".into(),
                    error: Some(error),
                    log: None,
                    final_evd: None,
                    mean_epoch_seconds: None,
                    demo_trajectories: None,
                    truncated_demos: None,
                    success_rate: None,
                    degenerate_reward: None,
                    checkpoint: None,
                });
            });
        }
    });
    let cells: Vec<CellResult> = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect();

    let records: Vec<RunRecord> = cells
        .iter()
        .filter(|c| c.status == "ok")
        .map(|c| RunRecord {
            env: c.env.clone(),
            algorithm: c.algorithm.clone(),
            n_traj: c.demo_trajectories.filter(|_| spec.demos.is_some()).unwrap_or(c.n_traj),
            seed: c.seed,
            evd: c.final_evd.unwrap_or(f64::NAN),
            epoch_seconds: c.mean_epoch_seconds.unwrap_or(f64::NAN),
        })
        .collect();
    tables::write_table(&out.join("table.csv"), &aggregate(&records))?;
    let failed = cells.iter().filter(|c| c.status != "ok").count();
    let manifest = Manifest {
        spec_hash: spec.hash(),
        spec: spec.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix_seconds: started,
        wall_clock_seconds: wall.elapsed().as_secs_f64(),
        threads,
        table: "table.csv".into(),
        cells: cells.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text)?;
    Ok(RunSummary {
        out,
        records,
        cells,
        failed,
    })
}

pub fn read_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| InvalidSpec(format!("{}: {e}", path.display())).into())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Checks `expected` names are exactly the presets, in order.
pub fn check_preset_names() -> Result<()> {
    let got: Vec<String> = presets().into_iter().map(|p| p.name).collect();
    ensure!(got == PRESET_NAMES, "preset list drifted: {got:?}");
    Ok(())
}

pub fn preset_or_err(name: &str) -> Result<ExperimentSpec> {
    match preset(name) {
        Some(p) => Ok(p),
        None => bail!(InvalidSpec(format!("unknown preset `{name}`; choose one of {}", PRESET_NAMES.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appendix_hyperparameters() {
        check_preset_names().unwrap();
        let g = preset("goalnav").unwrap();
        assert_eq!((g.irl.learning_rate, g.irl.l1, g.irl.l2, g.irl.epochs), (1e-2, 1e-3, 0.8, 500));
        let j = preset("jctnav").unwrap();
        assert_eq!((j.irl.learning_rate, j.irl.l1, j.irl.l2, j.irl.epochs), (5e-2, 2.0, 0.8, 500));
        let t = preset("taxi").unwrap();
        assert_eq!((t.irl.learning_rate, t.irl.l1, t.irl.l2, t.irl.epochs), (1e-2, 1e-3, 0.8, 500));
        for p in presets() {
            p.validate().unwrap();
            assert_eq!(p.seeds.len(), 10);
        }
        assert_eq!(preset("taxi_scaleup").unwrap().grid_sizes, vec![5, 10, 15, 20]);
    }

    #[test]
    fn grid_search_expands_cross_product() {
        let spec = ExperimentSpec {
            algorithms: vec!["chirl".into(), "hirl".into()],
            grid_search: Some(GridSearch {
                learning_rate: vec![0.1, 0.01],
                l1: vec![],
                l2: vec![0.0, 0.8, 1.0],
            }),
            ..ExperimentSpec::default()
        };
        let v = spec.variants();
        assert_eq!(v.len(), 2 * 2 * 3);
        assert_eq!(v[0].label, "chirl[lr=0.1,l1=0.001,l2=0]");
        assert!(v.iter().all(|x| x.irl.l1 == 1e-3));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let ok = ExperimentSpec::default();
        ok.validate().unwrap();
        for bad in [
            ExperimentSpec { algorithms: vec!["nope".into()], ..ok.clone() },
            ExperimentSpec { seeds: vec![], ..ok.clone() },
            ExperimentSpec { traj_counts: vec![], ..ok.clone() },
            ExperimentSpec { env: EnvKind::Taxi, grid_sizes: vec![7], ..ok.clone() },
            ExperimentSpec { irl: IrlConfigFile { epochs: 0, ..ok.irl.clone() }, ..ok.clone() },
            ExperimentSpec { irl: IrlConfigFile { learning_rate: -1.0, ..ok.irl.clone() }, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn spec_hash_tracks_content() {
        let a = ExperimentSpec::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds.push(99);
        assert_ne!(a.hash(), b.hash());
    }
}
