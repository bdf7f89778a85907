//! Feedforward tanh networks with a least-squares output layer.
//!
//! Only hidden-layer parameters live in the flat parameter vector. The output
//! layer is linear (no shift) and is re-solved by ridge least squares on every
//! error evaluation, so two parameter vectors that differ only by hidden-layer
//! sign flips or neuron reorderings evaluate to the same error.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::data::{DataKind, Dataset};
use crate::error::{contract, Error, Result};
use crate::mat::Mat;

/// Output-layer transfer: linear for regression, tanh for classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    Regression,
    Classification,
}

/// Layer sizes of a fixed-topology net, input layer first, output layer last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    layer_sizes: Vec<usize>,
    output_mode: OutputMode,
}

impl Topology {
    pub fn new(layer_sizes: Vec<usize>, output_mode: OutputMode) -> Result<Self> {
        contract!(layer_sizes.len() >= 3, "need at least one hidden layer, got {:?}", layer_sizes);
        contract!(layer_sizes.iter().all(|&n| n >= 1), "zero-size layer in {:?}", layer_sizes);
        Ok(Topology { layer_sizes, output_mode })
    }

    /// Parses a dash-separated size list such as `1-3-1`.
    pub fn parse(s: &str, output_mode: OutputMode) -> Result<Self> {
        let sizes = s
            .split('-')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Contract(format!("bad layer size {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Topology::new(sizes, output_mode)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn output_mode(&self) -> OutputMode {
        self.output_mode
    }

    /// Number of hidden-layer parameters: sum over hidden layers of
    /// neurons * (fan-in + 1).
    pub fn param_dim(&self) -> usize {
        let s = &self.layer_sizes;
        (1..s.len() - 1).map(|l| s[l] * (s[l - 1] + 1)).sum()
    }

    pub fn layout(&self) -> Arc<Layout> {
        Arc::new(Layout::new(self.clone()))
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.layer_sizes.iter().map(|n| n.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Per-hidden-layer indexing info for the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerInfo {
    /// Start of this layer's parameters.
    pub offset: usize,
    pub neurons: usize,
    pub fan_in: usize,
    /// Per-neuron slice length: fan_in weights then the shift.
    pub width: usize,
    /// Size of the following layer (the output layer for the last hidden one).
    pub next: usize,
    /// True when the following layer is the output layer, whose weights live
    /// outside the parameter vector.
    pub is_last: bool,
}

/// Index map from (hidden layer, neuron) to slices of the flat vector.
///
/// Within a neuron's slice the fan-in weights come first and the shift is the
/// final entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    topology: Topology,
    layers: Vec<LayerInfo>,
    dim: usize,
}

impl Layout {
    pub fn new(topology: Topology) -> Self {
        let s = topology.layer_sizes();
        let last_hidden = s.len() - 2;
        let mut layers = Vec::with_capacity(last_hidden);
        let mut offset = 0;
        for l in 1..=last_hidden {
            let width = s[l - 1] + 1;
            layers.push(LayerInfo {
                offset,
                neurons: s[l],
                fan_in: s[l - 1],
                width,
                next: s[l + 1],
                is_last: l == last_hidden,
            });
            offset += s[l] * width;
        }
        Layout { topology, layers, dim: offset }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Hidden layers in forward order.
    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn hidden_count(&self) -> usize {
        self.layers.len()
    }

    pub fn check_indices(&self, layer: usize, neuron: usize) -> Result<()> {
        contract!(layer < self.layers.len(), "hidden layer {layer} out of range");
        contract!(neuron < self.layers[layer].neurons, "neuron {neuron} out of range in layer {layer}");
        Ok(())
    }

    /// Slice of neuron parameters: fan-in weights then the shift.
    pub fn eta_range(&self, layer: usize, neuron: usize) -> Range<usize> {
        let li = &self.layers[layer];
        let start = li.offset + neuron * li.width;
        start..start + li.width
    }

    pub fn tau_index(&self, layer: usize, neuron: usize) -> usize {
        self.eta_range(layer, neuron).end - 1
    }

    /// Index of the weight from neuron `src` of hidden layer `layer` into
    /// neuron `dst` of the next hidden layer; `None` when the next layer is
    /// the output layer.
    pub fn next_weight_index(&self, layer: usize, dst: usize, src: usize) -> Option<usize> {
        if self.layers[layer].is_last {
            return None;
        }
        let nx = &self.layers[layer + 1];
        Some(nx.offset + dst * nx.width + src)
    }

    /// Length of the symmetry-relevant block of one neuron: its own
    /// parameters plus outgoing weights into the next hidden layer.
    pub fn beta_len(&self, layer: usize) -> usize {
        let li = &self.layers[layer];
        if li.is_last {
            li.width
        } else {
            li.width + li.next
        }
    }

    /// Visits the flat-vector indices of a neuron's symmetry block in a fixed
    /// order: own parameters first, then outgoing weights.
    pub fn for_each_beta_index(&self, layer: usize, neuron: usize, mut f: impl FnMut(usize)) {
        for i in self.eta_range(layer, neuron) {
            f(i);
        }
        let li = &self.layers[layer];
        if !li.is_last {
            for dst in 0..li.next {
                f(self.next_weight_index(layer, dst, neuron).unwrap());
            }
        }
    }
}

/// Flat hidden-layer parameter vector tied to a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    data: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: Arc<Layout>, data: Vec<f64>) -> Result<Self> {
        contract!(data.len() == layout.dim(), "param length {} != layout dim {}", data.len(), layout.dim());
        Ok(ParamVector { layout, data })
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        let dim = layout.dim();
        ParamVector { layout, data: vec![0.0; dim] }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Output-layer weights, one row per output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputWeights {
    pub w: Mat,
}

/// A parameter vector with its fitted output layer and the hidden activations
/// of the set it was fitted on.
#[derive(Debug, Clone)]
pub struct EvaluatedNet {
    pub params: ParamVector,
    pub out_weights: OutputWeights,
    pub hidden_activations: Mat,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the hidden layers on one input; the result lands in `cur`.
fn hidden_forward_into(
    layout: &Layout,
    theta: &[f64],
    input: &[f64],
    cur: &mut Vec<f64>,
    next: &mut Vec<f64>,
) {
    cur.clear();
    cur.extend_from_slice(input);
    for li in layout.layers() {
        next.clear();
        for n in 0..li.neurons {
            let sl = &theta[li.offset + n * li.width..li.offset + (n + 1) * li.width];
            let (ws, tau) = sl.split_at(li.fan_in);
            next.push((dot(ws, cur) + tau[0]).tanh());
        }
        std::mem::swap(cur, next);
    }
}

/// Full network output for one input.
pub fn forward(params: &ParamVector, out_weights: &OutputWeights, input: &[f64]) -> Result<Vec<f64>> {
    let layout = params.layout();
    let topo = layout.topology();
    contract!(input.len() == topo.input_dim(), "input length {} != {}", input.len(), topo.input_dim());
    let last_hidden = layout.layers().last().unwrap().neurons;
    contract!(
        out_weights.w.rows() == topo.output_dim() && out_weights.w.cols() == last_hidden,
        "output weights {}x{} != {}x{last_hidden}",
        out_weights.w.rows(),
        out_weights.w.cols(),
        topo.output_dim()
    );
    let (mut cur, mut next) = (Vec::new(), Vec::new());
    hidden_forward_into(layout, params.data(), input, &mut cur, &mut next);
    let mut out = Vec::with_capacity(topo.output_dim());
    for r in 0..out_weights.w.rows() {
        let pre = dot(out_weights.w.row(r), &cur);
        out.push(match topo.output_mode() {
            OutputMode::Regression => pre,
            OutputMode::Classification => pre.tanh(),
        });
    }
    Ok(out)
}

/// Canonical form of an activation matrix: zeros normalized to +0.0, each
/// column's first nonzero entry made positive, columns sorted by content with
/// original index as the tie break. Symmetry operators on the last hidden
/// layer only permute and negate activation columns, so all replicas share
/// one canonical form bit for bit. Returns the canonical matrix plus, per
/// canonical slot, the original column index and the sign that was applied.
fn canonical_columns(acts: &Mat) -> (Mat, Vec<(usize, f64)>) {
    let (k, n) = (acts.rows(), acts.cols());
    let norm0 = |v: f64| if v == 0.0 { 0.0 } else { v };
    let mut signs = vec![1.0f64; n];
    for j in 0..n {
        for s in 0..k {
            let v = acts.row(s)[j];
            if v != 0.0 {
                signs[j] = if v > 0.0 { 1.0 } else { -1.0 };
                break;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        for s in 0..k {
            let va = norm0(signs[a] * acts.row(s)[a]);
            let vb = norm0(signs[b] * acts.row(s)[b]);
            match va.total_cmp(&vb) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        a.cmp(&b)
    });
    let mut canon = Mat::zeros(k, n);
    for (p, &j) in order.iter().enumerate() {
        for s in 0..k {
            canon.row_mut(s)[p] = norm0(signs[j] * acts.row(s)[j]);
        }
    }
    (canon, order.into_iter().map(|j| (j, signs[j])).collect())
}

/// Ridge fit in canonical column order. `wt` is n x q over the canonical
/// columns; residuals computed against `canon` are identical for every
/// symmetric replica of the parameters that produced `activations`.
struct RidgeFit {
    canon: Mat,
    slots: Vec<(usize, f64)>,
    wt: DMatrix<f64>,
}

fn ridge_fit(layout: &Layout, activations: &Mat, targets: &Mat) -> Result<RidgeFit> {
    let k = activations.rows();
    let n = activations.cols();
    let q = targets.cols();
    contract!(k >= 1, "empty activation matrix");
    contract!(targets.rows() == k, "targets rows {} != {k}", targets.rows());
    contract!(n == layout.layers().last().unwrap().neurons, "activation cols {n} mismatch");
    contract!(q == layout.topology().output_dim(), "target cols {q} mismatch");

    let scale = match layout.topology().output_mode() {
        OutputMode::Regression => 1.0,
        OutputMode::Classification => 20.0,
    };

    let (canon, slots) = canonical_columns(activations);
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, q);
    for s in 0..k {
        let x = canon.row(s);
        let y = targets.row(s);
        for i in 0..n {
            for j in i..n {
                a[(i, j)] += x[i] * x[j];
            }
            for o in 0..q {
                b[(i, o)] += x[i] * y[o] * scale;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }

    let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
    if trace <= 0.0 {
        // All activations zero: every weight matrix fits equally; pick 0.
        return Ok(RidgeFit { canon, slots, wt: DMatrix::zeros(n, q) });
    }
    let mut lambda = 1e-8 * trace / n as f64;
    for _ in 0..64 {
        let mut reg = a.clone();
        for i in 0..n {
            reg[(i, i)] += lambda;
        }
        if let Some(ch) = reg.cholesky() {
            return Ok(RidgeFit { canon, slots, wt: ch.solve(&b) });
        }
        lambda *= 10.0;
    }
    Err(Error::Contract("normal equations not solvable on non-finite input".into()))
}

/// Solves the output layer by ridge-regularized normal equations, assembled
/// and eliminated in canonical column order so every symmetric replica yields
/// the same fit.
///
/// Classification targets are rescaled by 20 for the linear solve only, so the
/// fitted pre-activations saturate the tanh outputs.
pub fn solve_output_weights(layout: &Layout, activations: &Mat, targets: &Mat) -> Result<OutputWeights> {
    let fit = ridge_fit(layout, activations, targets)?;
    let q = targets.cols();
    let mut w = Mat::zeros(q, activations.cols());
    for (p, &(orig, sign)) in fit.slots.iter().enumerate() {
        for o in 0..q {
            w.row_mut(o)[orig] = sign * fit.wt[(p, o)];
        }
    }
    Ok(OutputWeights { w })
}

/// Checks that a dataset is evaluable under the layout's topology.
fn check_dataset(layout: &Layout, data: &Dataset) -> Result<()> {
    let topo = layout.topology();
    contract!(data.inputs.rows() >= 1, "empty dataset");
    contract!(
        data.inputs.cols() == topo.input_dim(),
        "dataset input dim {} != net input dim {}",
        data.inputs.cols(),
        topo.input_dim()
    );
    contract!(
        data.targets.cols() == topo.output_dim(),
        "dataset target dim {} != net output dim {}",
        data.targets.cols(),
        topo.output_dim()
    );
    let want = match data.kind {
        DataKind::Classification => OutputMode::Classification,
        _ => OutputMode::Regression,
    };
    contract!(topo.output_mode() == want, "output mode does not match dataset kind {:?}", data.kind);
    Ok(())
}

/// Reusable error evaluator holding one training set.
///
/// `mse_of` and `penalized` take raw parameter slices so optimizers can call
/// them without wrapping candidates.
#[derive(Debug, Clone)]
pub struct Evaluator {
    layout: Arc<Layout>,
    inputs: Mat,
    targets: Mat,
    sqrt_dim: f64,
}

impl Evaluator {
    pub fn new(layout: Arc<Layout>, data: &Dataset) -> Result<Self> {
        check_dataset(&layout, data)?;
        Ok(Evaluator {
            sqrt_dim: (layout.dim() as f64).sqrt(),
            inputs: data.inputs.clone(),
            targets: data.targets.clone(),
            layout,
        })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// Hidden activations of every sample, one row per sample.
    fn activations(&self, theta: &[f64]) -> Mat {
        let k = self.inputs.rows();
        let n = self.layout.layers().last().unwrap().neurons;
        let mut acts = Mat::zeros(k, n);
        let (mut cur, mut next) = (Vec::new(), Vec::new());
        for s in 0..k {
            hidden_forward_into(&self.layout, theta, self.inputs.row(s), &mut cur, &mut next);
            acts.row_mut(s).copy_from_slice(&cur);
        }
        acts
    }

    /// Mean squared error with the output layer re-solved on this set.
    /// Solve and residual both run in canonical column order, so the result
    /// is identical for every symmetric replica of `theta`.
    pub fn mse_of(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.layout.dim(), "parameter dimension mismatch");
        let acts = self.activations(theta);
        let fit = ridge_fit(&self.layout, &acts, &self.targets)
            .expect("validated inputs cannot fail the solve");
        let classification = self.layout.topology().output_mode() == OutputMode::Classification;
        let k = self.inputs.rows();
        let n = acts.cols();
        let q = self.targets.cols();
        let mut rss = 0.0;
        for s in 0..k {
            let x = fit.canon.row(s);
            let y = self.targets.row(s);
            for (o, &yo) in y.iter().enumerate() {
                let mut pred = 0.0;
                for p in 0..n {
                    pred += fit.wt[(p, o)] * x[p];
                }
                if classification {
                    pred = pred.tanh();
                }
                let d = yo - pred;
                rss += d * d;
            }
        }
        rss / (k * q) as f64
    }

    /// Objective used by the optimizers: mse inside the ball of radius
    /// sqrt(D), otherwise mse at theta/||theta|| plus 50*(||theta|| - sqrt(D)).
    pub fn penalized(&self, theta: &[f64]) -> f64 {
        let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= self.sqrt_dim {
            self.mse_of(theta)
        } else {
            let scaled: Vec<f64> = theta.iter().map(|v| v / norm).collect();
            self.mse_of(&scaled) + 50.0 * (norm - self.sqrt_dim)
        }
    }
}

/// Mean squared error of one parameter vector on one dataset.
pub fn mse(params: &ParamVector, data: &Dataset) -> Result<f64> {
    let ev = Evaluator::new(params.layout().clone(), data)?;
    Ok(ev.mse_of(params.data()))
}

/// Penalized error of one parameter vector on one dataset.
pub fn penalized_error(params: &ParamVector, data: &Dataset) -> Result<f64> {
    let ev = Evaluator::new(params.layout().clone(), data)?;
    Ok(ev.penalized(params.data()))
}

/// Fits the output layer on `train` and packages the result for inspection
/// and held-out evaluation.
pub fn evaluate_net(params: &ParamVector, train: &Dataset) -> Result<EvaluatedNet> {
    let ev = Evaluator::new(params.layout().clone(), train)?;
    let acts = ev.activations(params.data());
    let out_weights = solve_output_weights(params.layout(), &acts, &train.targets)?;
    Ok(EvaluatedNet { params: params.clone(), out_weights, hidden_activations: acts })
}

impl EvaluatedNet {
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        forward(&self.params, &self.out_weights, input)
    }

    /// Winner-takes-all misclassification rate against one-hot targets.
    pub fn class_error_rate(&self, data: &Dataset) -> Result<f64> {
        contract!(data.kind == DataKind::Classification, "error rate needs a classification set");
        check_dataset(self.params.layout(), data)?;
        let k = data.inputs.rows();
        let mut wrong = 0usize;
        for s in 0..k {
            let out = self.predict(data.inputs.row(s))?;
            let pred = argmax(&out);
            let truth = argmax(data.targets.row(s));
            if pred != truth {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / k as f64)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
