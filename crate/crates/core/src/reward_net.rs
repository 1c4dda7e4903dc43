//! Modular reward networks.
//!
//! Every DAG node owns a small MLP module with one parameter set per value of
//! its variable. A context selects one set per node on its path and the
//! selected modules are chained root to leaf, giving a scalar reward per
//! state. All parameters live in one flat buffer so gradients, optimizer
//! state and checkpoints share a single layout.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::{Context, ContextDag, NodeKind};
use crate::math::sqrt;
use crate::mdp::RewardVector;
use crate::{Error, Result};

pub const DEFAULT_INTERFACE: usize = 16;
pub const DEFAULT_HIDDEN: usize = 16;

/// Layer widths used when a net is built from a DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    /// Width of the vector passed between adjacent modules.
    pub interface: usize,
    /// Hidden widths inside each module; empty makes every module linear.
    pub hidden: Vec<usize>,
    /// Leaf module passes its (width 1) input straight through.
    pub identity_leaf: bool,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            interface: DEFAULT_INTERFACE,
            hidden: vec![DEFAULT_HIDDEN],
            identity_leaf: false,
        }
    }
}

impl NetShape {
    /// A single linear map from features to reward.
    pub fn linear() -> Self {
        Self {
            interface: 1,
            hidden: Vec::new(),
            identity_leaf: true,
        }
    }
}

/// One module: layer widths `dims[0] -> dims[1] -> ... -> dims[last]`,
/// repeated once per parameter set. Weights are stored input-major
/// (`w[i * out + o]`), followed by the bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeModule {
    pub node: usize,
    dims: Vec<usize>,
    n_sets: usize,
    offset: usize,
    set_len: usize,
}

impl NodeModule {
    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().expect("module has dims")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn n_sets(&self) -> usize {
        self.n_sets
    }

    /// Scalars per parameter set.
    pub fn set_len(&self) -> usize {
        self.set_len
    }

    pub fn set_range(&self, set: usize) -> Range<usize> {
        let start = self.offset + set * self.set_len;
        start..start + self.set_len
    }

    /// Offsets of layer `layer`'s weights and bias within set `set`.
    fn layer_ranges(&self, set: usize, layer: usize) -> (Range<usize>, Range<usize>) {
        let mut at = self.offset + set * self.set_len;
        for l in 0..layer {
            at += self.dims[l] * self.dims[l + 1] + self.dims[l + 1];
        }
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        (at..at + i * o, at + i * o..at + i * o + o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    /// All parameter sets including the dummy root and leaf.
    pub parameter_sets: usize,
    /// Parameter sets of internal nodes only.
    pub internal_sets: usize,
    pub scalars: usize,
}

/// Gradient buffer congruent with a net's flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients(Vec<f64>);

impl ParamGradients {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn add_assign(&mut self, other: &ParamGradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.0.iter_mut().for_each(|g| *g *= c);
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.0.iter().map(|g| g * g).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

struct Layer {
    w: Range<usize>,
    b: Range<usize>,
    n_in: usize,
    n_out: usize,
    relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModularRewardNet {
    dag: ContextDag,
    feature_dim: usize,
    modules: Vec<NodeModule>,
    params: Vec<f64>,
}

impl ModularRewardNet {
    /// Builds a net with the same shape at every node. Parameters start at 0;
    /// call [`init_params`](Self::init_params).
    pub fn new(dag: ContextDag, feature_dim: usize, shape: &NetShape) -> Result<Self> {
        if shape.interface == 0 || shape.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if shape.identity_leaf && shape.interface != 1 {
            return Err(Error::Config("an identity leaf needs interface width 1".into()));
        }
        let dims = dag
            .nodes()
            .iter()
            .map(|node| {
                let (first, last) = match node.kind {
                    NodeKind::Root => (feature_dim, shape.interface),
                    NodeKind::Internal => (shape.interface, shape.interface),
                    NodeKind::Leaf if shape.identity_leaf => return vec![1],
                    NodeKind::Leaf => (shape.interface, 1),
                };
                let mut d = vec![first];
                d.extend_from_slice(&shape.hidden);
                d.push(last);
                d
            })
            .collect();
        Self::with_dims(dag, feature_dim, dims)
    }

    /// Builds a net from explicit per-node layer widths. A single width
    /// means an identity module without parameters.
    pub fn with_dims(dag: ContextDag, feature_dim: usize, dims: Vec<Vec<usize>>) -> Result<Self> {
        if let Some(v) = dag.validate().first() {
            return Err(Error::InvalidDag(alloc::format!("{v}")));
        }
        if dims.len() != dag.nodes().len() {
            return Err(Error::Dimension {
                what: "module count",
                expected: dag.nodes().len(),
                got: dims.len(),
            });
        }
        let mut modules = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for (node, d) in dims.into_iter().enumerate() {
            if d.is_empty() || d.contains(&0) {
                return Err(Error::Config("layer widths must be positive".into()));
            }
            let kind = dag.node(node).kind;
            if kind == NodeKind::Root && d[0] != feature_dim {
                return Err(Error::Dimension {
                    what: "root input width",
                    expected: feature_dim,
                    got: d[0],
                });
            }
            if kind == NodeKind::Leaf && *d.last().expect("non-empty") != 1 {
                return Err(Error::Dimension {
                    what: "leaf output width",
                    expected: 1,
                    got: *d.last().expect("non-empty"),
                });
            }
            let set_len = d.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
            let n_sets = dag.node(node).cardinality();
            modules.push(NodeModule {
                node,
                dims: d,
                n_sets,
                offset,
                set_len,
            });
            offset += n_sets * set_len;
        }
        for &(from, to) in dag.edges() {
            if modules[from].out_dim() != modules[to].in_dim() {
                return Err(Error::Dimension {
                    what: "module interface",
                    expected: modules[from].out_dim(),
                    got: modules[to].in_dim(),
                });
            }
        }
        Ok(Self {
            dag,
            feature_dim,
            modules,
            params: vec![0.0; offset],
        })
    }

    pub fn dag(&self) -> &ContextDag {
        &self.dag
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn modules(&self) -> &[NodeModule] {
        &self.modules
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: self.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        self.params = params;
        Ok(())
    }

    pub fn set_block(&self, node: usize, set: usize) -> &[f64] {
        &self.params[self.modules[node].set_range(set)]
    }

    pub fn set_block_mut(&mut self, node: usize, set: usize) -> &mut [f64] {
        let range = self.modules[node].set_range(set);
        &mut self.params[range]
    }

    /// Weights (input-major) and bias of one layer of one parameter set.
    pub fn layer_mut(&mut self, node: usize, set: usize, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (w, b) = self.modules[node].layer_ranges(set, layer);
        let (head, tail) = self.params.split_at_mut(b.start);
        (&mut head[w], &mut tail[..b.len()])
    }

    /// Uniform in ±√(6/(fan_in+fan_out)) for weights, zero biases.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in 0..self.modules.len() {
            for set in 0..self.modules[m].n_sets {
                for layer in 0..self.modules[m].n_layers() {
                    let (w, b) = self.modules[m].layer_ranges(set, layer);
                    let (fan_in, fan_out) = (self.modules[m].dims[layer], self.modules[m].dims[layer + 1]);
                    let bound = sqrt(6.0 / (fan_in + fan_out) as f64);
                    for p in &mut self.params[w] {
                        *p = (2.0 * rng.random::<f64>() - 1.0) * bound;
                    }
                    self.params[b].iter_mut().for_each(|p| *p = 0.0);
                }
            }
        }
    }

    /// Parameter ranges of the sets selected by `context`.
    pub fn active_ranges(&self, context: &Context) -> Result<Vec<Range<usize>>> {
        self.dag.check_context(context)?;
        Ok(self
            .dag
            .selections(context)
            .into_iter()
            .map(|(node, set)| self.modules[node].set_range(set))
            .collect())
    }

    fn plan(&self, context: &Context) -> Result<Vec<Layer>> {
        self.dag.check_context(context)?;
        let mut layers = Vec::new();
        for (node, set) in self.dag.selections(context) {
            let module = &self.modules[node];
            for l in 0..module.n_layers() {
                let (w, b) = module.layer_ranges(set, l);
                layers.push(Layer {
                    w,
                    b,
                    n_in: module.dims[l],
                    n_out: module.dims[l + 1],
                    relu: l + 1 < module.n_layers(),
                });
            }
        }
        Ok(layers)
    }

    fn n_rows(&self, features: &[f64]) -> Result<usize> {
        if self.feature_dim == 0 || features.len() % self.feature_dim != 0 {
            return Err(Error::Dimension {
                what: "feature matrix",
                expected: self.feature_dim,
                got: features.len(),
            });
        }
        Ok(features.len() / self.feature_dim)
    }

    /// Runs the chain and returns the input of every layer plus the output.
    fn activations(&self, layers: &[Layer], features: &[f64], n: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(features.to_vec());
        for layer in layers {
            let x = acts.last().expect("input present");
            let w = &self.params[layer.w.clone()];
            let b = &self.params[layer.b.clone()];
            let mut y = Vec::with_capacity(n * layer.n_out);
            for _ in 0..n {
                y.extend_from_slice(b);
            }
            for s in 0..n {
                let row = &mut y[s * layer.n_out..(s + 1) * layer.n_out];
                for (i, &xi) in x[s * layer.n_in..(s + 1) * layer.n_in].iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (yo, wo) in row.iter_mut().zip(&w[i * layer.n_out..(i + 1) * layer.n_out]) {
                        *yo += xi * wo;
                    }
                }
            }
            if layer.relu {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(y);
        }
        acts
    }

    /// Reward of every row of `features` (row-major, `feature_dim` wide).
    pub fn forward(&self, context: &Context, features: &[f64]) -> Result<RewardVector> {
        let n = self.n_rows(features)?;
        let layers = self.plan(context)?;
        let mut acts = self.activations(&layers, features, n);
        RewardVector::new(acts.pop().expect("output present"))
    }

    pub fn backward(&self, context: &Context, features: &[f64], upstream: &[f64]) -> Result<ParamGradients> {
        let mut grads = ParamGradients::zeros(self.params.len());
        self.backward_into(context, features, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Adds `∂(upstream · R) / ∂θ` into `grads`.
    pub fn backward_into(
        &self,
        context: &Context,
        features: &[f64],
        upstream: &[f64],
        grads: &mut ParamGradients,
    ) -> Result<()> {
        let n = self.n_rows(features)?;
        if upstream.len() != n {
            return Err(Error::Dimension {
                what: "upstream gradient",
                expected: n,
                got: upstream.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Dimension {
                what: "gradient buffer",
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let layers = self.plan(context)?;
        let acts = self.activations(&layers, features, n);
        let mut g = upstream.to_vec();
        for (k, layer) in layers.iter().enumerate().rev() {
            let x = &acts[k];
            let (n_in, n_out) = (layer.n_in, layer.n_out);
            {
                let gw = &mut grads.0[layer.w.clone()];
                for s in 0..n {
                    let gs = &g[s * n_out..(s + 1) * n_out];
                    for (i, &xi) in x[s * n_in..(s + 1) * n_in].iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        for (gwo, go) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(gs) {
                            *gwo += xi * go;
                        }
                    }
                }
            }
            {
                let gb = &mut grads.0[layer.b.clone()];
                for s in 0..n {
                    for (gbo, go) in gb.iter_mut().zip(&g[s * n_out..(s + 1) * n_out]) {
                        *gbo += go;
                    }
                }
            }
            if k == 0 {
                break;
            }
            let w = &self.params[layer.w.clone()];
            let mut gx = vec![0.0; n * n_in];
            let prev_relu = layers[k - 1].relu;
            for s in 0..n {
                let gs = &g[s * n_out..(s + 1) * n_out];
                for i in 0..n_in {
                    if prev_relu && x[s * n_in + i] <= 0.0 {
                        continue;
                    }
                    gx[s * n_in + i] = w[i * n_out..(i + 1) * n_out].iter().zip(gs).map(|(a, b)| a * b).sum();
                }
            }
            g = gx;
        }
        Ok(())
    }

    /// `λ1·sgn(θ) + λ2·θ` on the sets active in `context`, zero elsewhere.
    pub fn regularizer_grad(&self, l1: f64, l2: f64, context: &Context) -> Result<ParamGradients> {
        let mut grads = ParamGradients::zeros(self.params.len());
        self.regularizer_grad_into(l1, l2, context, &mut grads)?;
        Ok(grads)
    }

    pub fn regularizer_grad_into(&self, l1: f64, l2: f64, context: &Context, grads: &mut ParamGradients) -> Result<()> {
        for range in self.active_ranges(context)? {
            for (g, &p) in grads.0[range.clone()].iter_mut().zip(&self.params[range]) {
                let sign = if p > 0.0 {
                    1.0
                } else if p < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *g += l1 * sign + l2 * p;
            }
        }
        Ok(())
    }

    /// `λ1·|θκ|₁ + ½λ2·‖θκ‖²` over the sets active in `context`.
    pub fn regularizer_value(&self, l1: f64, l2: f64, context: &Context) -> Result<f64> {
        let mut total = 0.0;
        for range in self.active_ranges(context)? {
            for &p in &self.params[range] {
                total += l1 * p.abs() + 0.5 * l2 * p * p;
            }
        }
        Ok(total)
    }

    /// `θ ← θ − lr·g`.
    pub fn sgd_step(&mut self, grads: &ParamGradients, lr: f64) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::Dimension {
                what: "gradient buffer",
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            *p -= lr * g;
        }
        Ok(())
    }

    pub fn param_count(&self) -> ParamCount {
        let mut count = ParamCount {
            parameter_sets: 0,
            internal_sets: 0,
            scalars: self.params.len(),
        };
        for m in &self.modules {
            count.parameter_sets += m.n_sets;
            if self.dag.node(m.node).kind == NodeKind::Internal {
                count.internal_sets += m.n_sets;
            }
        }
        count
    }
}

/// Adaptive-moment optimizer over the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut ModularRewardNet, grads: &ParamGradients) -> Result<()> {
        if grads.len() != self.m.len() || net.params.len() != self.m.len() {
            return Err(Error::Dimension {
                what: "optimizer state",
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..self.m.len() {
            let g = grads.0[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            net.params[i] -= self.lr * m_hat / (sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::DagNode;
    use alloc::string::ToString;

    fn chain(card: usize) -> ContextDag {
        let nodes = vec![
            DagNode::root("root"),
            DagNode::internal_indexed("v", "v", card),
            DagNode::leaf("leaf"),
        ];
        ContextDag::from_named_edges(nodes, &[("root", "v"), ("v", "leaf")]).unwrap()
    }

    fn shared_child(a: usize, b: usize, c: usize, d: usize) -> ContextDag {
        let nodes = vec![
            DagNode::root("root"),
            DagNode::internal_indexed("A", "A", a),
            DagNode::internal_indexed("B", "B", b),
            DagNode::internal_indexed("C", "C", c),
            DagNode::internal_indexed("D", "D", d),
            DagNode::leaf("leaf"),
        ];
        let edges = [
            ("root", "A"),
            ("root", "B"),
            ("root", "C"),
            ("A", "D"),
            ("B", "D"),
            ("D", "leaf"),
            ("C", "leaf"),
        ];
        ContextDag::from_named_edges(nodes, &edges).unwrap()
    }

    fn ctx(dag: &ContextDag, value: usize) -> Context {
        dag.resolve_label(&[("v".to_string(), value.to_string())]).unwrap()
    }

    fn lcg_features(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
    }

    #[test]
    fn identity_blocks_sum_one_hot_to_one() {
        let d = 3;
        let dag = chain(1);
        let shape = NetShape {
            interface: d,
            hidden: Vec::new(),
            identity_leaf: false,
        };
        let mut net = ModularRewardNet::new(dag.clone(), d, &shape).unwrap();
        for node in 0..2 {
            let (w, _) = net.layer_mut(node, 0, 0);
            for i in 0..d {
                w[i * d + i] = 1.0;
            }
        }
        let (w, _) = net.layer_mut(2, 0, 0);
        w.iter_mut().for_each(|x| *x = 1.0);
        let mut features = vec![0.0; d * d];
        for s in 0..d {
            features[s * d + s] = 1.0;
        }
        let r = net.forward(&ctx(&dag, 0), &features).unwrap();
        assert_eq!(&r[..], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn swapping_sets_swaps_outputs() {
        let dag = chain(2);
        let mut net = ModularRewardNet::new(dag.clone(), 2, &NetShape::default()).unwrap();
        net.init_params(3);
        let features = lcg_features(5, 2, 1);
        let r0 = net.forward(&ctx(&dag, 0), &features).unwrap();
        let r1 = net.forward(&ctx(&dag, 1), &features).unwrap();
        assert_ne!(r0, r1);
        let a = net.set_block(1, 0).to_vec();
        let b = net.set_block(1, 1).to_vec();
        net.set_block_mut(1, 0).copy_from_slice(&b);
        net.set_block_mut(1, 1).copy_from_slice(&a);
        assert_eq!(net.forward(&ctx(&dag, 0), &features).unwrap(), r1);
        assert_eq!(net.forward(&ctx(&dag, 1), &features).unwrap(), r0);
    }

    #[test]
    fn composed_layers_match_dense_oracle() {
        // root, internal and leaf modules, each linear-relu-linear
        let dag = chain(1);
        let shape = NetShape {
            interface: 3,
            hidden: vec![4],
            identity_leaf: false,
        };
        let mut net = ModularRewardNet::new(dag.clone(), 2, &shape).unwrap();
        net.init_params(11);
        // nonzero biases so they are exercised
        let n = net.n_params();
        for (i, p) in net.params_mut().iter_mut().enumerate() {
            *p += 0.01 * (i as f64 / n as f64);
        }
        let features = lcg_features(4, 2, 5);
        let got = net.forward(&ctx(&dag, 0), &features).unwrap();

        // Oracle: rebuild each matrix from the flat buffer and multiply densely.
        let mut x: Vec<Vec<f64>> = features.chunks(2).map(|r| r.to_vec()).collect();
        for node in 0..3 {
            let module = &net.modules()[node];
            for l in 0..module.n_layers() {
                let (wr, br) = module.layer_ranges(0, l);
                let (ni, no) = (module.dims()[l], module.dims()[l + 1]);
                let w = &net.params()[wr];
                let b = &net.params()[br];
                x = x
                    .iter()
                    .map(|row| {
                        (0..no)
                            .map(|o| {
                                let v = b[o] + (0..ni).map(|i| row[i] * w[i * no + o]).sum::<f64>();
                                if l + 1 < module.n_layers() { v.max(0.0) } else { v }
                            })
                            .collect()
                    })
                    .collect();
            }
        }
        for s in 0..4 {
            assert!((got[s] - x[s][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let dag = chain(2);
        let mut net = ModularRewardNet::new(dag.clone(), 3, &NetShape::default()).unwrap();
        net.init_params(1);
        let g = net.backward(&ctx(&dag, 1), &lcg_features(4, 3, 2), &[0.0; 4]).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_weight_gradient_is_upstream_times_feature() {
        let dag = chain(1);
        let dims = vec![vec![1, 1], vec![1], vec![1]];
        let mut net = ModularRewardNet::with_dims(dag.clone(), 1, dims).unwrap();
        net.params_mut()[0] = 0.7;
        let g = net.backward(&ctx(&dag, 0), &[2.5], &[-1.5]).unwrap();
        assert_eq!(g.as_slice(), &[-1.5 * 2.5, -1.5]);
    }

    fn fd_check(net: &mut ModularRewardNet, context: &Context, features: &[f64], upstream: &[f64]) -> f64 {
        let analytic = net.backward(context, features, upstream).unwrap();
        let h = 1e-5;
        let mut numeric = vec![0.0; net.n_params()];
        for i in 0..net.n_params() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up: f64 = net.forward(context, features).unwrap().iter().zip(upstream).map(|(r, u)| r * u).sum();
            net.params_mut()[i] = orig - h;
            let down: f64 = net.forward(context, features).unwrap().iter().zip(upstream).map(|(r, u)| r * u).sum();
            net.params_mut()[i] = orig;
            numeric[i] = (up - down) / (2.0 * h);
        }
        let diff = sqrt(analytic.as_slice().iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum());
        let scale = analytic.norm().max(sqrt(numeric.iter().map(|x| x * x).sum()));
        if scale == 0.0 { 0.0 } else { diff / scale }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let dag = shared_child(2, 2, 2, 3);
        let shape = NetShape {
            interface: 4,
            hidden: vec![5],
            identity_leaf: false,
        };
        let contexts = dag.enumerate_contexts().unwrap();
        for draw in 0..100u64 {
            let mut net = ModularRewardNet::new(dag.clone(), 3, &shape).unwrap();
            // every parameter random, so no unit sits exactly on a ReLU kink
            let params = lcg_features(net.n_params(), 1, draw);
            net.set_params(params).unwrap();
            let features = lcg_features(6, 3, 1000 + draw);
            let upstream = lcg_features(6, 1, 2000 + draw);
            let context = &contexts[draw as usize % contexts.len()];
            let err = fd_check(&mut net, context, &features, &upstream);
            assert!(err <= 1e-4, "draw {draw}: relative error {err}");
        }
    }

    #[test]
    fn backward_touches_only_active_sets_and_is_additive() {
        let dag = shared_child(2, 2, 2, 3);
        let mut net = ModularRewardNet::new(dag.clone(), 3, &NetShape::default()).unwrap();
        net.init_params(9);
        let contexts = dag.enumerate_contexts().unwrap();
        let features = lcg_features(5, 3, 4);
        let upstream = lcg_features(5, 1, 8);
        let (k1, k2) = (&contexts[0], &contexts[contexts.len() - 1]);
        let g1 = net.backward(k1, &features, &upstream).unwrap();
        let active = net.active_ranges(k1).unwrap();
        for (i, g) in g1.as_slice().iter().enumerate() {
            if !active.iter().any(|r| r.contains(&i)) {
                assert_eq!(*g, 0.0);
            }
        }
        let g2 = net.backward(k2, &features, &upstream).unwrap();
        let mut batch = ParamGradients::zeros(net.n_params());
        net.backward_into(k1, &features, &upstream, &mut batch).unwrap();
        net.backward_into(k2, &features, &upstream, &mut batch).unwrap();
        let mut sum = g1.clone();
        sum.add_assign(&g2);
        assert!(crate::math::max_abs_diff(batch.as_slice(), sum.as_slice()) < 1e-12);
    }

    #[test]
    fn inactive_sets_do_not_affect_forward() {
        let dag = shared_child(2, 2, 2, 3);
        let mut net = ModularRewardNet::new(dag.clone(), 3, &NetShape::default()).unwrap();
        net.init_params(2);
        let context = dag.enumerate_contexts().unwrap()[0].clone();
        let features = lcg_features(5, 3, 4);
        let before = net.forward(&context, &features).unwrap();
        let active = net.active_ranges(&context).unwrap();
        for i in 0..net.n_params() {
            if !active.iter().any(|r| r.contains(&i)) {
                net.params_mut()[i] += 1.0;
            }
        }
        assert_eq!(net.forward(&context, &features).unwrap(), before);
    }

    #[test]
    fn regularizer_gradient_formula() {
        let dag = chain(1);
        let dims = vec![vec![1, 1], vec![1], vec![1]];
        let mut net = ModularRewardNet::with_dims(dag.clone(), 1, dims).unwrap();
        let context = ctx(&dag, 0);
        assert!(net.regularizer_grad(1e-3, 0.8, &context).unwrap().as_slice().iter().all(|&g| g == 0.0));
        net.params_mut()[0] = 2.0;
        let g = net.regularizer_grad(0.0, 0.8, &context).unwrap();
        assert!((g.as_slice()[0] - 1.6).abs() < 1e-15);
        assert_eq!(g.as_slice()[1], 0.0);
    }

    #[test]
    fn regularizer_gradient_mixed_signs() {
        // values from the elementwise oracle in notes/oracles/reward_net_oracles.py
        let dag = chain(1);
        let dims = vec![vec![2, 2], vec![2], vec![2, 1]];
        let mut net = ModularRewardNet::with_dims(dag.clone(), 2, dims).unwrap();
        let params = [0.5, -1.25, 0.0, 2.0, -0.1, 0.3, 1.5, -0.75, 0.0];
        net.set_params(params.to_vec()).unwrap();
        let g = net.regularizer_grad(1e-3, 0.8, &ctx(&dag, 0)).unwrap();
        let expected = [0.401, -1.001, 0.0, 1.601, -0.081, 0.241, 1.201, -0.601, 0.0];
        for (a, b) in g.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn sgd_step_and_inverse() {
        let dag = chain(2);
        let mut net = ModularRewardNet::new(dag, 3, &NetShape::default()).unwrap();
        net.init_params(4);
        let orig = net.params().to_vec();
        net.sgd_step(&ParamGradients::zeros(net.n_params()), 0.1).unwrap();
        assert_eq!(net.params(), &orig[..]);
        let grads = ParamGradients::from_vec(lcg_features(net.n_params(), 1, 6));
        net.sgd_step(&grads, 0.01).unwrap();
        net.sgd_step(&grads, -0.01).unwrap();
        assert!(crate::math::max_abs_diff(net.params(), &orig) <= 1e-12);
        let mut bad = grads.clone();
        bad.as_mut_slice()[0] = f64::NAN;
        assert_eq!(net.sgd_step(&bad, 0.1), Err(Error::NonFinite("gradients")));
    }

    #[test]
    fn sgd_single_weight() {
        let dag = chain(1);
        let mut net = ModularRewardNet::with_dims(dag, 1, vec![vec![1, 1], vec![1], vec![1]]).unwrap();
        net.params_mut()[0] = 1.0;
        net.sgd_step(&ParamGradients::from_vec(vec![0.5, 0.0]), 0.01).unwrap();
        assert_eq!(net.params()[0], 0.995);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let dag = chain(3);
        let mut a = ModularRewardNet::new(dag.clone(), 7, &NetShape::default()).unwrap();
        let mut b = a.clone();
        a.init_params(42);
        b.init_params(42);
        assert_eq!(a.params(), b.params());
        b.init_params(43);
        assert_ne!(a.params(), b.params());
        for m in a.modules() {
            for set in 0..m.n_sets() {
                for l in 0..m.n_layers() {
                    let (w, bias) = m.layer_ranges(set, l);
                    let bound = sqrt(6.0 / (m.dims()[l] + m.dims()[l + 1]) as f64);
                    assert!(a.params()[w].iter().all(|p| p.abs() <= bound));
                    assert!(a.params()[bias].iter().all(|&p| p == 0.0));
                }
            }
        }
    }

    #[test]
    fn param_counts() {
        let net = ModularRewardNet::new(chain(4), 5, &NetShape::default()).unwrap();
        let count = net.param_count();
        assert_eq!(count.internal_sets, 4);
        assert_eq!(count.parameter_sets, 6);
        let per_set = |i: usize, o: usize| i * 16 + 16 + 16 * o + o;
        assert_eq!(count.scalars, per_set(5, 16) + 4 * per_set(16, 16) + per_set(16, 1));

        let dag = shared_child(20, 30, 10, 20);
        let net = ModularRewardNet::new(dag.clone(), 4, &NetShape::default()).unwrap();
        let count = net.param_count();
        assert_eq!(count.internal_sets, 20 + 30 + 10 + 20);
        assert!(count.internal_sets < dag.context_count());
    }

    #[test]
    fn adam_moves_against_gradient() {
        let dag = chain(1);
        let mut net = ModularRewardNet::with_dims(dag, 1, vec![vec![1, 1], vec![1], vec![1]]).unwrap();
        let mut opt = Adam::new(net.n_params(), 0.1);
        opt.step(&mut net, &ParamGradients::from_vec(vec![2.0, -3.0])).unwrap();
        // first bias-corrected step has magnitude lr
        assert!((net.params()[0] + 0.1).abs() < 1e-6);
        assert!((net.params()[1] - 0.1).abs() < 1e-6);
    }
}
