//! Symmetry operators on hidden-layer parameter vectors.
//!
//! A tanh net's error is invariant under negating one hidden neuron's
//! parameters together with its outgoing weights (tanh is odd), and under
//! swapping two neurons of one hidden layer together with their outgoing
//! weight columns. These operators generate a finite group; every orbit
//! contains 2^N * N! replicas per layer of N neurons. The breakers below pick
//! one representative per orbit: `break_invariant` canonicalizes
//! independently of the optimum, `break_mgop` greedily moves a candidate
//! toward a goal estimate, and `break_ideal_bf` enumerates the whole group.
//!
//! Operators only move or negate components, so applying them introduces no
//! floating-point arithmetic error.

use rand::Rng;

use crate::error::{contract, Error, Result};
use crate::net::{Layout, OutputWeights, ParamVector};

/// Default enumeration bound for `break_ideal_bf`.
pub const DEFAULT_BF_CAP: u128 = 10_000_000;

// ---------------------------------------------------------------------------
// primitive operators

/// Negates one neuron's parameters and its outgoing weight column in place.
pub(crate) fn point_in_place(layout: &Layout, theta: &mut [f64], layer: usize, neuron: usize) {
    layout.for_each_beta_index(layer, neuron, |i| theta[i] = -theta[i]);
}

/// Swaps two neurons of one hidden layer, including outgoing weight columns.
pub(crate) fn swap_in_place(layout: &Layout, theta: &mut [f64], layer: usize, a: usize, b: usize) {
    for (i, j) in layout.eta_range(layer, a).zip(layout.eta_range(layer, b)) {
        theta.swap(i, j);
    }
    let li = layout.layers()[layer];
    if !li.is_last {
        for dst in 0..li.next {
            let i = layout.next_weight_index(layer, dst, a).unwrap();
            let j = layout.next_weight_index(layer, dst, b).unwrap();
            theta.swap(i, j);
        }
    }
}

/// Reorders a layer's neurons so that slot `i` receives old neuron
/// `order[i]`, moving outgoing weight columns along.
pub(crate) fn permute_layer(layout: &Layout, theta: &mut [f64], layer: usize, order: &[usize]) {
    let li = layout.layers()[layer];
    debug_assert_eq!(order.len(), li.neurons);
    let mut etas = vec![0.0; li.neurons * li.width];
    for n in 0..li.neurons {
        etas[n * li.width..(n + 1) * li.width].copy_from_slice(&theta[layout.eta_range(layer, n)]);
    }
    for (slot, &src) in order.iter().enumerate() {
        theta[layout.eta_range(layer, slot)]
            .copy_from_slice(&etas[src * li.width..(src + 1) * li.width]);
    }
    if !li.is_last {
        let mut col = vec![0.0; li.neurons];
        for dst in 0..li.next {
            for src in 0..li.neurons {
                col[src] = theta[layout.next_weight_index(layer, dst, src).unwrap()];
            }
            for (slot, &src) in order.iter().enumerate() {
                theta[layout.next_weight_index(layer, dst, slot).unwrap()] = col[src];
            }
        }
    }
}

/// Point operator: negates neuron parameters and outgoing weights.
pub fn apply_point(params: &ParamVector, layer: usize, neuron: usize) -> Result<ParamVector> {
    params.layout().check_indices(layer, neuron)?;
    let mut out = params.clone();
    let layout = out.layout().clone();
    point_in_place(&layout, out.data_mut(), layer, neuron);
    Ok(out)
}

/// Permutation operator: swaps two neurons of one layer.
pub fn apply_perm(params: &ParamVector, layer: usize, j: usize, k: usize) -> Result<ParamVector> {
    params.layout().check_indices(layer, j)?;
    params.layout().check_indices(layer, k)?;
    contract!(j != k, "swap needs two distinct neurons, got {j} twice");
    let mut out = params.clone();
    let layout = out.layout().clone();
    swap_in_place(&layout, out.data_mut(), layer, j, k);
    Ok(out)
}

// ---------------------------------------------------------------------------
// composite operators

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymStep {
    PointFlip { layer: usize, neuron: usize },
    Swap { layer: usize, a: usize, b: usize },
}

/// An ordered sequence of primitive symmetry steps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymmetryOp {
    pub steps: Vec<SymStep>,
}

impl SymmetryOp {
    pub fn new(steps: Vec<SymStep>) -> Self {
        SymmetryOp { steps }
    }

    pub fn apply(&self, params: &ParamVector) -> Result<ParamVector> {
        let mut out = params.clone();
        let layout = out.layout().clone();
        self.apply_in_place(&layout, out.data_mut())?;
        Ok(out)
    }

    pub fn apply_in_place(&self, layout: &Layout, theta: &mut [f64]) -> Result<()> {
        for step in &self.steps {
            match *step {
                SymStep::PointFlip { layer, neuron } => {
                    layout.check_indices(layer, neuron)?;
                    point_in_place(layout, theta, layer, neuron);
                }
                SymStep::Swap { layer, a, b } => {
                    layout.check_indices(layer, a)?;
                    layout.check_indices(layer, b)?;
                    contract!(a != b, "swap needs two distinct neurons");
                    swap_in_place(layout, theta, layer, a, b);
                }
            }
        }
        Ok(())
    }

    /// Applies the operator and the matching output-weight transform: steps on
    /// the last hidden layer flip or swap the corresponding columns of the
    /// output matrix, so the network function is unchanged without a re-solve.
    pub fn apply_with_outputs(
        &self,
        params: &ParamVector,
        out_weights: &OutputWeights,
    ) -> Result<(ParamVector, OutputWeights)> {
        let transformed = self.apply(params)?;
        let layout = params.layout();
        let last = layout.hidden_count() - 1;
        let mut w = out_weights.clone();
        for step in &self.steps {
            match *step {
                SymStep::PointFlip { layer, neuron } if layer == last => {
                    for r in 0..w.w.rows() {
                        w.w.row_mut(r)[neuron] = -w.w.row_mut(r)[neuron];
                    }
                }
                SymStep::Swap { layer, a, b } if layer == last => {
                    for r in 0..w.w.rows() {
                        w.w.row_mut(r).swap(a, b);
                    }
                }
                _ => {}
            }
        }
        Ok((transformed, w))
    }

    /// Draws a random composite operator with the given number of steps.
    pub fn random<R: Rng>(layout: &Layout, step_count: usize, rng: &mut R) -> SymmetryOp {
        let mut steps = Vec::with_capacity(step_count);
        for _ in 0..step_count {
            let layer = rng.gen_range(0..layout.hidden_count());
            let neurons = layout.layers()[layer].neurons;
            if neurons >= 2 && rng.gen_bool(0.5) {
                let a = rng.gen_range(0..neurons);
                let b = loop {
                    let b = rng.gen_range(0..neurons);
                    if b != a {
                        break b;
                    }
                };
                steps.push(SymStep::Swap { layer, a, b });
            } else {
                steps.push(SymStep::PointFlip { layer, neuron: rng.gen_range(0..neurons) });
            }
        }
        SymmetryOp::new(steps)
    }
}

// ---------------------------------------------------------------------------
// goal-independent canonicalization

/// Canonicalizes in place: all shifts nonnegative, then neurons of each layer
/// sorted by shift, descending, with a stable order on ties. Returns whether
/// anything changed.
pub(crate) fn break_invariant_in_place(layout: &Layout, theta: &mut [f64]) -> bool {
    let mut modified = false;
    for layer in 0..layout.hidden_count() {
        let neurons = layout.layers()[layer].neurons;
        for n in 0..neurons {
            if theta[layout.tau_index(layer, n)] < 0.0 {
                point_in_place(layout, theta, layer, n);
                modified = true;
            }
        }
        let mut order: Vec<usize> = (0..neurons).collect();
        order.sort_by(|&a, &b| {
            let ta = theta[layout.tau_index(layer, a)];
            let tb = theta[layout.tau_index(layer, b)];
            tb.partial_cmp(&ta).unwrap_or(std::cmp::Ordering::Equal)
        });
        if order.iter().enumerate().any(|(i, &s)| i != s) {
            permute_layer(layout, theta, layer, &order);
            modified = true;
        }
    }
    modified
}

/// Goal-independent canonical representative of a parameter vector's orbit.
pub fn break_invariant(params: &ParamVector) -> ParamVector {
    let mut out = params.clone();
    let layout = out.layout().clone();
    break_invariant_in_place(&layout, out.data_mut());
    out
}

/// Same canonicalization, decided purely through squared distances to
/// reference vectors instead of sign and order comparisons. Kept as an
/// independent route so the two formulations can be cross-checked; both must
/// select the same representative.
pub fn break_invariant_by_distance(params: &ParamVector) -> ParamVector {
    let mut out = params.clone();
    let layout = out.layout().clone();
    let theta = out.data_mut();
    for layer in 0..layout.hidden_count() {
        let li = layout.layers()[layer];
        // Flip when the negated block is closer to the unit reference
        // (0, ..., 0, 1) than the block itself.
        for n in 0..li.neurons {
            let range = layout.eta_range(layer, n);
            let mut reference = vec![0.0; li.width];
            reference[li.width - 1] = 1.0;
            let mut d_keep = 0.0;
            let mut d_flip = 0.0;
            for (i, r) in range.clone().zip(&reference) {
                d_keep += (theta[i] - r) * (theta[i] - r);
                d_flip += (-theta[i] - r) * (-theta[i] - r);
            }
            if d_keep > d_flip {
                point_in_place(&layout, theta, layer, n);
            }
        }
        // Order two blocks (x|y) against the reference (0,..,0,1 | 0,..,0,0):
        // the block with the larger shift must come first.
        let pair_dist = |theta: &[f64], first: usize, second: usize| -> f64 {
            let mut d = 0.0;
            for (pos, i) in layout.eta_range(layer, first).enumerate() {
                let r = if pos == li.width - 1 { 1.0 } else { 0.0 };
                d += (theta[i] - r) * (theta[i] - r);
            }
            for i in layout.eta_range(layer, second) {
                d += theta[i] * theta[i];
            }
            d
        };
        let mut order: Vec<usize> = (0..li.neurons).collect();
        order.sort_by(|&a, &b| {
            let keep = pair_dist(theta, a, b);
            let swapped = pair_dist(theta, b, a);
            keep.partial_cmp(&swapped).unwrap_or(std::cmp::Ordering::Equal)
        });
        if order.iter().enumerate().any(|(i, &s)| i != s) {
            permute_layer(&layout, theta, layer, &order);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// goal-directed breaking

fn point_distances(
    layout: &Layout,
    theta: &[f64],
    goal: &[f64],
    layer: usize,
    neuron: usize,
) -> (f64, f64) {
    let mut d_keep = 0.0;
    let mut d_flip = 0.0;
    layout.for_each_beta_index(layer, neuron, |i| {
        let dk = theta[i] - goal[i];
        let df = -theta[i] - goal[i];
        d_keep += dk * dk;
        d_flip += df * df;
    });
    (d_keep, d_flip)
}

fn beta_indices(layout: &Layout, layer: usize, neuron: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(layout.beta_len(layer));
    layout.for_each_beta_index(layer, neuron, |i| v.push(i));
    v
}

/// Greedy goal-directed breaking in place; returns whether anything changed.
///
/// Point phase: every neuron's block is flipped when the flipped block is
/// strictly closer to the goal block. Permutation phase: one uniformly random
/// pair per layer, swapped when that strictly decreases the summed block
/// distance. Neither phase can increase the distance to the goal.
pub(crate) fn break_mgop_in_place<R: Rng>(
    layout: &Layout,
    theta: &mut [f64],
    goal: &[f64],
    rng: &mut R,
) -> bool {
    let mut modified = false;
    for layer in 0..layout.hidden_count() {
        for n in 0..layout.layers()[layer].neurons {
            let (d_keep, d_flip) = point_distances(layout, theta, goal, layer, n);
            if d_keep > d_flip {
                point_in_place(layout, theta, layer, n);
                modified = true;
            }
        }
    }
    for layer in 0..layout.hidden_count() {
        let neurons = layout.layers()[layer].neurons;
        if neurons < 2 {
            continue;
        }
        let a = rng.gen_range(0..neurons);
        let b = loop {
            let b = rng.gen_range(0..neurons);
            if b != a {
                break b;
            }
        };
        let ia = beta_indices(layout, layer, a);
        let ib = beta_indices(layout, layer, b);
        let mut d_keep = 0.0;
        let mut d_swap = 0.0;
        for (&i, &j) in ia.iter().zip(&ib) {
            let ka = theta[i] - goal[i];
            let kb = theta[j] - goal[j];
            let sa = theta[i] - goal[j];
            let sb = theta[j] - goal[i];
            d_keep += ka * ka + kb * kb;
            d_swap += sa * sa + sb * sb;
        }
        if d_keep > d_swap {
            swap_in_place(layout, theta, layer, a, b);
            modified = true;
        }
    }
    modified
}

/// Greedy goal-directed breaking; see `break_mgop_in_place`.
pub fn break_mgop<R: Rng>(
    params: &ParamVector,
    goal: &ParamVector,
    rng: &mut R,
) -> Result<(ParamVector, bool)> {
    contract!(params.layout() == goal.layout(), "params and goal layouts differ");
    let mut out = params.clone();
    let layout = out.layout().clone();
    let modified = break_mgop_in_place(&layout, out.data_mut(), goal.data(), rng);
    Ok((out, modified))
}

// ---------------------------------------------------------------------------
// full-group enumeration

/// Number of composite symmetry operators; `None` on overflow.
pub fn group_size(layout: &Layout) -> Option<u128> {
    let mut total: u128 = 1;
    for li in layout.layers() {
        let n = li.neurons as u128;
        let signs = 1u128.checked_shl(li.neurons as u32)?;
        let mut fact: u128 = 1;
        for k in 2..=n {
            fact = fact.checked_mul(k)?;
        }
        total = total.checked_mul(signs.checked_mul(fact)?)?;
    }
    Some(total)
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    while next_permutation(&mut p) {
        out.push(p.clone());
    }
    out
}

/// Visits every symmetric replica of `params` exactly once, the identity
/// first. Fails when the group is larger than `cap`.
pub fn for_each_replica(
    params: &ParamVector,
    cap: u128,
    f: impl FnMut(&[f64]),
) -> Result<()> {
    for_each_replica_core(params.layout(), params.data(), cap, f)
}

fn for_each_replica_core(
    layout: &Layout,
    theta: &[f64],
    cap: u128,
    mut f: impl FnMut(&[f64]),
) -> Result<()> {
    let size = group_size(layout).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::InfeasibleBruteForce { size, cap });
    }
    // Per layer: all (sign mask, permutation) pairs, identity entry first.
    let perms: Vec<Vec<Vec<usize>>> =
        layout.layers().iter().map(|li| all_permutations(li.neurons)).collect();
    let mask_counts: Vec<u64> = layout.layers().iter().map(|li| 1u64 << li.neurons).collect();

    let layers = layout.hidden_count();
    let mut mask_idx = vec![0u64; layers];
    let mut perm_idx = vec![0usize; layers];
    let mut scratch = vec![0.0; layout.dim()];
    loop {
        scratch.copy_from_slice(theta);
        for layer in 0..layers {
            let mask = mask_idx[layer];
            for n in 0..layout.layers()[layer].neurons {
                if mask & (1 << n) != 0 {
                    point_in_place(layout, &mut scratch, layer, n);
                }
            }
            let perm = &perms[layer][perm_idx[layer]];
            if perm_idx[layer] != 0 {
                permute_layer(layout, &mut scratch, layer, perm);
            }
        }
        f(&scratch);

        // Odometer: advance masks fastest, then permutations, layer by layer.
        let mut carry = true;
        for layer in 0..layers {
            if !carry {
                break;
            }
            mask_idx[layer] += 1;
            if mask_idx[layer] < mask_counts[layer] {
                carry = false;
                break;
            }
            mask_idx[layer] = 0;
            perm_idx[layer] += 1;
            if perm_idx[layer] < perms[layer].len() {
                carry = false;
                break;
            }
            perm_idx[layer] = 0;
        }
        if carry {
            return Ok(());
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Slice-level exhaustive ideal breaking; returns whether `theta` changed.
pub(crate) fn break_ideal_bf_in_place(
    layout: &Layout,
    theta: &mut [f64],
    goal: &[f64],
    cap: u128,
) -> Result<bool> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for_each_replica_core(layout, theta, cap, |replica| {
        let d = dist2(replica, goal);
        // Strict improvement keeps the earliest (identity-first) winner.
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, replica.to_vec()));
        }
    })?;
    let (_, data) = best.unwrap();
    let modified = data.as_slice() != &*theta;
    theta.copy_from_slice(&data);
    Ok(modified)
}

/// Exhaustive ideal breaking with an explicit enumeration cap.
pub fn break_ideal_bf_capped(
    params: &ParamVector,
    goal: &ParamVector,
    cap: u128,
) -> Result<ParamVector> {
    contract!(params.layout() == goal.layout(), "params and goal layouts differ");
    let mut out = params.clone();
    let layout = out.layout().clone();
    break_ideal_bf_in_place(&layout, out.data_mut(), goal.data(), cap)?;
    Ok(out)
}

/// Replica of `params` closest to `goal`, by enumeration of the full group.
pub fn break_ideal_bf(params: &ParamVector, goal: &ParamVector) -> Result<ParamVector> {
    break_ideal_bf_capped(params, goal, DEFAULT_BF_CAP)
}

// ---------------------------------------------------------------------------
// worked example: separating-region distances for a two-neuron toy structure

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortVariant {
    SortByA,
    SortByB,
}

/// Distance from a goal (a1, b1, a2, b2) to the separating region induced by
/// sorting two-parameter neurons by their first or second parameter. The
/// region for sorting by `a` is the set with equal a-components; its closest
/// point averages them, so the distance is |a1 - a2| / sqrt(2).
pub fn separation_distance(goal: &[f64], variant: SortVariant) -> Result<f64> {
    contract!(goal.len() == 4, "expected (a1, b1, a2, b2), got {} values", goal.len());
    let d2 = match variant {
        SortVariant::SortByA => (goal[0] - goal[2]) * (goal[0] - goal[2]) / 2.0,
        SortVariant::SortByB => (goal[1] - goal[3]) * (goal[1] - goal[3]) / 2.0,
    };
    Ok(d2.sqrt())
}
