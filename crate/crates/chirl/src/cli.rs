//! Command-line front end over [`crate::experiment`].

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::Parser;

use crate::experiment::{self, EnvKind, ExpertKind, ExperimentSpec, InvalidSpec};

#[derive(Debug, Parser)]
#[command(name = "chirl", version, about = "Contextual hierarchical IRL experiments")]
pub struct Args {
    /// Start from a named preset (see --list-presets).
    #[arg(long)]
    pub preset: Option<String>,
    /// Start from a JSON experiment spec.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub env: Option<EnvArg>,
    /// Comma-separated algorithms: chirl, chirl-no-abstraction, maxent, deepirl, hirl.
    #[arg(long, value_delimiter = ',')]
    pub algo: Option<Vec<String>>,
    /// Comma-separated trajectory counts.
    #[arg(long, value_delimiter = ',')]
    pub traj: Option<Vec<usize>>,
    /// Seeds as a list (`0,3,7`), a range (`0-9`) or a mix.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l1: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Comma-separated Taxi grid sizes (multiples of 5).
    #[arg(long, value_delimiter = ',')]
    pub grid_size: Option<Vec<usize>>,
    #[arg(long)]
    pub layout_seed: Option<u64>,
    /// Layout fixture (GoalNav grid or JctNav roads).
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One sampled context per step instead of sweeping every context.
    #[arg(long)]
    pub sample_context: bool,
    #[arg(long, value_enum)]
    pub expert: Option<ExpertArg>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Evaluate EVD every N epochs (0 disables).
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Load demonstrations from a JSON-lines file instead of generating them.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long)]
    pub save_demos: bool,
    #[arg(long)]
    pub save_checkpoints: bool,
    /// Taxi: episodes for the learned-policy success rate.
    #[arg(long)]
    pub success_episodes: Option<usize>,
    #[arg(long)]
    pub list_presets: bool,
    /// Print the resolved spec as JSON and exit.
    #[arg(long)]
    pub print_spec: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum EnvArg {
    Goalnav,
    Jctnav,
    Taxi,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ExpertArg {
    Soft,
    Greedy,
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if b < a {
                    bail!("empty seed range {part}");
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse()?),
        }
    }
    Ok(seeds)
}

impl Args {
    pub fn to_spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match (&self.preset, &self.config) {
            (Some(name), _) => experiment::preset_or_err(name)?,
            (None, Some(path)) => experiment::read_spec(path)?,
            (None, None) => ExperimentSpec::default(),
        };
        if let Some(env) = self.env {
            spec.env = match env {
                EnvArg::Goalnav => EnvKind::Goalnav,
                EnvArg::Jctnav => EnvKind::Jctnav,
                EnvArg::Taxi => EnvKind::Taxi,
            };
            if self.preset.is_some() || self.config.is_some() {
                spec.name = format!("{}-{}", spec.name, spec.env.name());
            } else {
                spec.name = spec.env.name().into();
            }
        }
        if let Some(a) = &self.algo {
            spec.algorithms = a.clone();
        }
        if let Some(t) = &self.traj {
            spec.traj_counts = t.clone();
        }
        if let Some(s) = &self.seeds {
            spec.seeds = parse_seeds(s).map_err(|e| InvalidSpec(format!("--seeds: {e}")))?;
        }
        if let Some(e) = self.epochs {
            spec.irl.epochs = e;
        }
        if let Some(v) = self.lr {
            spec.irl.learning_rate = v;
        }
        if let Some(v) = self.l1 {
            spec.irl.l1 = v;
        }
        if let Some(v) = self.l2 {
            spec.irl.l2 = v;
        }
        if let Some(v) = self.eval_every {
            spec.irl.eval_every = v;
        }
        if self.sample_context {
            spec.irl.sample_context = true;
        }
        if let Some(g) = &self.grid_size {
            spec.grid_sizes = g.clone();
        }
        if let Some(s) = self.layout_seed {
            spec.layout_seed = s;
        }
        if let Some(p) = &self.layout {
            spec.layout = Some(p.clone());
        }
        if let Some(p) = &self.out {
            spec.out = p.clone();
        }
        if let Some(e) = self.expert {
            spec.expert = match e {
                ExpertArg::Soft => ExpertKind::Soft,
                ExpertArg::Greedy => ExpertKind::Greedy,
            };
        }
        if let Some(b) = self.beta {
            spec.beta = b;
        }
        if let Some(p) = &self.demos {
            spec.demos = Some(p.clone());
        }
        spec.save_demos |= self.save_demos;
        spec.save_checkpoints |= self.save_checkpoints;
        if let Some(n) = self.success_episodes {
            spec.success_episodes = n;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn invalid(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.is::<InvalidSpec>())
}

/// Runs the CLI and maps outcomes to exit codes: 0 success, 1 a cell
/// failed, 2 invalid spec or usage.
pub fn run(args: Args) -> ExitCode {
    if args.list_presets {
        for p in experiment::presets() {
            println!(
                "{:<14} env={} algos={} lr={} l1={} l2={} epochs={}",
                p.name,
                p.env.name(),
                p.algorithms.join(","),
                p.irl.learning_rate,
                p.irl.l1,
                p.irl.l2,
                p.irl.epochs
            );
        }
        return ExitCode::SUCCESS;
    }
    let spec = match args.to_spec() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if args.print_spec {
        println!("{}", serde_json::to_string_pretty(&spec).expect("spec serializes"));
        return ExitCode::SUCCESS;
    }
    match experiment::run(&spec) {
        Ok(summary) => {
            for c in summary.cells.iter().filter(|c| c.status != "ok") {
                eprintln!(
                    "cell failed: {} {} n={} seed={}: {}",
                    c.env,
                    c.algorithm,
                    c.n_traj,
                    c.seed,
                    c.error.as_deref().unwrap_or("")
                );
            }
            println!(
                "{} cells, {} failed; results in {}",
                summary.cells.len(),
                summary.failed,
                summary.out.display()
            );
            if summary.failed > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if invalid(&e) { 2 } else { 1 })
        }
    }
}
