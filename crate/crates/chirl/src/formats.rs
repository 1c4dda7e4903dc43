//! On-disk formats: MDP and DAG JSON, demonstration JSON-lines, reward
//! checkpoints (JSON manifest plus a little-endian `f64` blob) and layout
//! fixtures.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context as _, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use chirl_core::context::{ContextDag, DagNode, NodeKind};
use chirl_core::env::grid::{GridLayout, Landmark};
use chirl_core::env::jctnav::JctLayout;
use chirl_core::irl::{DemoSet, IrlConfig, ModelKind, Optimizer, RewardModel, Step, Trajectory};
use chirl_core::mdp::{TabularMdp, Transition};
use chirl_core::reward_net::NetShape;

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    /// `[state, action, next_state, probability]`.
    pub transitions: Vec<(usize, usize, usize, f64)>,
    pub features: Vec<Vec<f64>>,
    /// Indices of absorbing terminal states.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terminal: Vec<usize>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            discount: mdp.discount(),
            transitions: mdp.transitions().iter().map(|t| (t.state, t.action, t.next, t.prob)).collect(),
            features: (0..mdp.n_states()).map(|s| mdp.features(s).to_vec()).collect(),
            terminal: (0..mdp.n_states()).filter(|&s| mdp.is_terminal(s)).collect(),
        }
    }

    pub fn to_mdp(&self) -> Result<TabularMdp> {
        let d = self.features.first().map_or(0, Vec::len);
        ensure!(self.features.len() == self.n_states, "expected {} feature rows, got {}", self.n_states, self.features.len());
        ensure!(self.features.iter().all(|r| r.len() == d), "feature rows differ in length");
        let mut terminal = vec![false; self.n_states];
        for &s in &self.terminal {
            ensure!(s < self.n_states, "terminal state {s} out of range");
            terminal[s] = true;
        }
        let transitions = self.transitions.iter().map(|&(s, a, n, p)| Transition::new(s, a, n, p)).collect();
        Ok(TabularMdp::new(
            self.n_states,
            self.n_actions,
            self.discount,
            transitions,
            d,
            self.features.concat(),
            terminal,
        )?)
    }
}

pub fn write_mdp(path: &Path, mdp: &TabularMdp) -> Result<()> {
    write_json(path, &MdpFile::from_mdp(mdp))
}

pub fn read_mdp(path: &Path) -> Result<TabularMdp> {
    read_json::<MdpFile>(path)?.to_mdp()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagNodeFile {
    pub id: String,
    /// `root`, `internal` or `leaf`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<usize>,
    /// Value names; defaults to `"0"`, `"1"`, ... when only a cardinality
    /// is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagFile {
    pub nodes: Vec<DagNodeFile>,
    /// `[from_id, to_id]`.
    pub edges: Vec<(String, String)>,
}

impl DagFile {
    pub fn from_dag(dag: &ContextDag) -> Self {
        let nodes = dag
            .nodes()
            .iter()
            .map(|n| DagNodeFile {
                id: n.id.clone(),
                kind: match n.kind {
                    NodeKind::Root => "root",
                    NodeKind::Internal => "internal",
                    NodeKind::Leaf => "leaf",
                }
                .into(),
                variable: n.variable.clone(),
                cardinality: (n.kind == NodeKind::Internal).then(|| n.values.len()),
                values: (n.kind == NodeKind::Internal).then(|| n.values.clone()),
            })
            .collect();
        let edges = dag
            .edges()
            .iter()
            .map(|&(a, b)| (dag.node(a).id.clone(), dag.node(b).id.clone()))
            .collect();
        Self { nodes, edges }
    }

    pub fn to_dag(&self) -> Result<ContextDag> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let node = match n.kind.as_str() {
                "root" => DagNode::root(&n.id),
                "leaf" => DagNode::leaf(&n.id),
                "internal" => {
                    let variable = n.variable.as_deref().with_context(|| format!("internal node `{}` lacks a variable", n.id))?;
                    match (&n.values, n.cardinality) {
                        (Some(values), card) => {
                            if let Some(c) = card {
                                ensure!(c == values.len(), "node `{}`: cardinality {c} but {} values", n.id, values.len());
                            }
                            let refs: Vec<&str> = values.iter().map(String::as_str).collect();
                            DagNode::internal(&n.id, variable, &refs)
                        }
                        (None, Some(c)) => DagNode::internal_indexed(&n.id, variable, c),
                        (None, None) => bail!("internal node `{}` needs a cardinality or values", n.id),
                    }
                }
                other => bail!("unknown node kind `{other}`"),
            };
            nodes.push(node);
        }
        let edges: Vec<(&str, &str)> = self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        Ok(ContextDag::from_named_edges(nodes, &edges)?)
    }
}

pub fn write_dag(path: &Path, dag: &ContextDag) -> Result<()> {
    write_json(path, &DagFile::from_dag(dag))
}

pub fn read_dag(path: &Path) -> Result<ContextDag> {
    read_json::<DagFile>(path)?.to_dag()
}

/// One line of a demonstration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoLine {
    pub context: Vec<(String, String)>,
    /// `[state, action]`, or `[state, action, outcome]` for macro steps.
    pub steps: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

pub fn write_demos(path: &Path, dag: &ContextDag, demos: &DemoSet) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for t in demos.iter() {
        let line = DemoLine {
            context: dag.label(&t.context),
            steps: t
                .steps
                .iter()
                .map(|s| match s.outcome {
                    Some(o) => vec![s.state, s.action, o],
                    None => vec![s.state, s.action],
                })
                .collect(),
            truncated: t.truncated,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_demos(path: &Path, dag: &ContextDag) -> Result<DemoSet> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut set = DemoSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DemoLine = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let context = dag.resolve_label(&parsed.context).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let steps = parsed
            .steps
            .iter()
            .map(|s| match s.as_slice() {
                &[state, action] => Ok(Step::new(state, action)),
                &[state, action, outcome] => Ok(Step::with_outcome(state, action, outcome)),
                _ => bail!("{}:{}: a step has 2 or 3 entries", path.display(), i + 1),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t = Trajectory::new(context, steps);
        t.truncated = parsed.truncated;
        set.push(t);
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeFile {
    pub interface: usize,
    pub hidden: Vec<usize>,
    pub identity_leaf: bool,
}

impl From<&NetShape> for ShapeFile {
    fn from(s: &NetShape) -> Self {
        Self {
            interface: s.interface,
            hidden: s.hidden.clone(),
            identity_leaf: s.identity_leaf,
        }
    }
}

impl From<&ShapeFile> for NetShape {
    fn from(s: &ShapeFile) -> Self {
        Self {
            interface: s.interface,
            hidden: s.hidden.clone(),
            identity_leaf: s.identity_leaf,
        }
    }
}

/// [`IrlConfig`] as stored in config files and checkpoints. Missing fields
/// take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlConfigFile {
    pub learning_rate: f64,
    pub l1: f64,
    pub l2: f64,
    pub epochs: usize,
    pub vi_tol: f64,
    pub vi_max_iters: usize,
    pub propagate_iters: Option<usize>,
    pub sample_context: bool,
    pub normalize_by_trajectories: bool,
    /// `sgd` or `adam`.
    pub optimizer: String,
    pub eval_every: usize,
}

impl Default for IrlConfigFile {
    fn default() -> Self {
        Self::from_config(&IrlConfig::default())
    }
}

impl IrlConfigFile {
    pub fn from_config(c: &IrlConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            l1: c.l1,
            l2: c.l2,
            epochs: c.epochs,
            vi_tol: c.vi_tol,
            vi_max_iters: c.vi_max_iters,
            propagate_iters: c.propagate_iters,
            sample_context: c.sample_context,
            normalize_by_trajectories: c.normalize_by_trajectories,
            optimizer: match c.optimizer {
                Optimizer::Sgd => "sgd",
                Optimizer::Adam => "adam",
            }
            .into(),
            eval_every: c.eval_every,
        }
    }

    /// The library config; the seed is supplied per run.
    pub fn to_config(&self, seed: u64) -> Result<IrlConfig> {
        let optimizer = match self.optimizer.as_str() {
            "sgd" => Optimizer::Sgd,
            "adam" => Optimizer::Adam,
            other => bail!("unknown optimizer `{other}`"),
        };
        let cfg = IrlConfig {
            learning_rate: self.learning_rate,
            l1: self.l1,
            l2: self.l2,
            epochs: self.epochs,
            vi_tol: self.vi_tol,
            vi_max_iters: self.vi_max_iters,
            propagate_iters: self.propagate_iters,
            seed,
            sample_context: self.sample_context,
            normalize_by_trajectories: self.normalize_by_trajectories,
            optimizer,
            eval_every: self.eval_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const CHECKPOINT_FORMAT: &str = "chirl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn model_kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Modular => "modular",
        ModelKind::Monolithic => "monolithic",
        ModelKind::Linear => "linear",
        ModelKind::PerContext => "per-context",
    }
}

pub fn parse_model_kind(name: &str) -> Result<ModelKind> {
    Ok(match name {
        "modular" => ModelKind::Modular,
        "monolithic" => ModelKind::Monolithic,
        "linear" => ModelKind::Linear,
        "per-context" => ModelKind::PerContext,
        other => bail!("unknown model kind `{other}`"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub model_kind: String,
    pub base_dim: usize,
    pub shape: ShapeFile,
    pub dag: DagFile,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparameters: Option<IrlConfigFile>,
    /// Parameter count of each net, in blob order.
    pub nets: Vec<usize>,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub blob_sha256: String,
}

/// Extra provenance stored with a checkpoint.
#[derive(Debug, Clone, Default)]
pub struct CheckpointInfo {
    pub seed: u64,
    pub algorithm: Option<String>,
    pub hyperparameters: Option<IrlConfigFile>,
}

/// Writes `<stem>.json` and `<stem>.bin`; returns the manifest path.
pub fn save_checkpoint(stem: &Path, model: &RewardModel, dag: &ContextDag, shape: &NetShape, info: &CheckpointInfo) -> Result<PathBuf> {
    let blob_path = stem.with_extension("bin");
    let manifest_path = stem.with_extension("json");
    let mut blob = Vec::with_capacity(model.n_params() * 8);
    for x in model.flat_params() {
        blob.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&blob_path, &blob).with_context(|| format!("writing {}", blob_path.display()))?;
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model_kind: model_kind_name(model.kind()).into(),
        base_dim: model.base_dim(),
        shape: shape.into(),
        dag: DagFile::from_dag(dag),
        seed: info.seed,
        algorithm: info.algorithm.clone(),
        hyperparameters: info.hyperparameters.clone(),
        nets: model.nets().iter().map(|n| n.n_params()).collect(),
        blob: blob_path.file_name().expect("stem has a file name").to_string_lossy().into_owned(),
        blob_sha256: hex::encode(Sha256::digest(&blob)),
    };
    write_json(&manifest_path, &manifest)?;
    Ok(manifest_path)
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<(RewardModel, CheckpointManifest)> {
    let m: CheckpointManifest = read_json(manifest_path)?;
    ensure!(m.format == CHECKPOINT_FORMAT, "not a checkpoint manifest: format `{}`", m.format);
    ensure!(m.version == CHECKPOINT_VERSION, "unsupported checkpoint version {}", m.version);
    let blob_path = manifest_path.parent().unwrap_or(Path::new(".")).join(&m.blob);
    let blob = fs::read(&blob_path).with_context(|| format!("reading {}", blob_path.display()))?;
    ensure!(hex::encode(Sha256::digest(&blob)) == m.blob_sha256, "checksum mismatch for {}", blob_path.display());
    ensure!(blob.len() % 8 == 0, "blob length {} is not a multiple of 8", blob.len());
    let params: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let dag = m.dag.to_dag()?;
    let mut model = RewardModel::new(parse_model_kind(&m.model_kind)?, &dag, m.base_dim, &(&m.shape).into(), m.seed)?;
    let counts: Vec<usize> = model.nets().iter().map(|n| n.n_params()).collect();
    ensure!(counts == m.nets, "net sizes {:?} do not match the manifest {:?}", counts, m.nets);
    model.set_flat_params(&params)?;
    Ok((model, m))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkFile {
    pub name: String,
    pub x: usize,
    pub y: usize,
}

/// Grid world fixture. `walls` are `[row, col]` pairs blocking the move
/// between `(col, row)` and `(col + 1, row)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayoutFile {
    pub width: usize,
    pub height: usize,
    pub walls: Vec<(usize, usize)>,
    pub landmarks: Vec<LandmarkFile>,
}

impl GridLayoutFile {
    pub fn from_layout(g: &GridLayout) -> Self {
        Self {
            width: g.width,
            height: g.height,
            walls: g.walls.clone(),
            landmarks: g
                .landmarks
                .iter()
                .map(|l| LandmarkFile {
                    name: l.name.clone(),
                    x: l.x,
                    y: l.y,
                })
                .collect(),
        }
    }

    pub fn to_layout(&self) -> Result<GridLayout> {
        let g = GridLayout {
            width: self.width,
            height: self.height,
            walls: self.walls.clone(),
            landmarks: self
                .landmarks
                .iter()
                .map(|l| Landmark {
                    name: l.name.clone(),
                    x: l.x,
                    y: l.y,
                })
                .collect(),
        };
        g.validate()?;
        Ok(g)
    }
}

pub fn read_grid_layout(path: &Path) -> Result<GridLayout> {
    read_json::<GridLayoutFile>(path)?.to_layout()
}

pub fn write_grid_layout(path: &Path, layout: &GridLayout) -> Result<()> {
    write_json(path, &GridLayoutFile::from_layout(layout))
}

/// Junction fixture: grid size and the first column/row of the two roads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JctLayoutFile {
    pub size: usize,
    pub col: usize,
    pub row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn read_jct_layout(path: &Path) -> Result<JctLayout> {
    let f: JctLayoutFile = read_json(path)?;
    let layout = JctLayout {
        size: f.size,
        col: f.col,
        row: f.row,
    };
    layout.validate()?;
    Ok(layout)
}

pub fn write_jct_layout(path: &Path, layout: &JctLayout, seed: Option<u64>) -> Result<()> {
    write_json(
        path,
        &JctLayoutFile {
            size: layout.size,
            col: layout.col,
            row: layout.row,
            seed,
        },
    )
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
