//! Differential evolution, rand/1/bin variant.

use rand::Rng;

use crate::error::{contract, Result};
use crate::evolve::SymmetryBreaker;

pub const DEFAULT_F: f64 = 0.5;
pub const DEFAULT_CR: f64 = 0.9;

/// Generational DE population. `stored_errors[i]` is the last evaluated
/// penalized error of `candidates[i]`, possibly inflated by
/// `de_sb_postprocess`; the true best over all evaluations is tracked
/// separately in `best_params` / `best_error`.
#[derive(Debug, Clone)]
pub struct DePopulation {
    pub candidates: Vec<Vec<f64>>,
    pub stored_errors: Vec<f64>,
    pub f: f64,
    pub cr: f64,
    pub eval_count: u64,
    pub best_params: Vec<f64>,
    pub best_error: f64,
}

impl DePopulation {
    pub fn np(&self) -> usize {
        self.candidates.len()
    }

    pub fn dim(&self) -> usize {
        self.candidates[0].len()
    }

    /// Componentwise mean of the population, the goal estimate used by the
    /// goal-directed breaking modes.
    pub fn centroid(&self) -> Vec<f64> {
        let np = self.np() as f64;
        let mut c = vec![0.0; self.dim()];
        for cand in &self.candidates {
            for (acc, v) in c.iter_mut().zip(cand) {
                *acc += v;
            }
        }
        for v in &mut c {
            *v /= np;
        }
        c
    }
}

/// Uniform population in [-1, 1]^dim, every candidate evaluated once.
pub fn de_init<O, R>(dim: usize, np: usize, objective: O, rng: &mut R) -> Result<DePopulation>
where
    O: Fn(&[f64]) -> f64,
    R: Rng,
{
    contract!(dim >= 1, "dimension must be positive");
    contract!(np >= 4, "population size {np} < 4: mutation needs three distinct partners");
    let candidates: Vec<Vec<f64>> =
        (0..np).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let stored_errors: Vec<f64> = candidates.iter().map(|c| objective(c)).collect();
    let best = stored_errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, &e)| (candidates[i].clone(), e))
        .unwrap();
    Ok(DePopulation {
        candidates,
        stored_errors,
        f: DEFAULT_F,
        cr: DEFAULT_CR,
        eval_count: np as u64,
        best_params: best.0,
        best_error: best.1,
    })
}

fn mutant(x1: &[f64], x2: &[f64], x3: &[f64], f: f64) -> Vec<f64> {
    x1.iter().zip(x2).zip(x3).map(|((a, b), c)| a + f * (b - c)).collect()
}

fn pick_distinct<R: Rng>(np: usize, exclude: &[usize], rng: &mut R) -> usize {
    loop {
        let r = rng.gen_range(0..np);
        if !exclude.contains(&r) {
            return r;
        }
    }
}

/// One generation: trials built from the pre-step population, greedy
/// selection against stored errors, then symmetry breaking on every
/// candidate. Goal-directed modes break toward `goal_estimate` (the caller
/// computes it from the pre-step population) and `Mgop` additionally inflates
/// stored errors per `de_sb_postprocess`.
pub fn de_step<O, R>(
    pop: &mut DePopulation,
    objective: O,
    breaker: Option<&SymmetryBreaker>,
    goal_estimate: Option<&[f64]>,
    rng: &mut R,
) -> Result<()>
where
    O: Fn(&[f64]) -> f64,
    R: Rng,
{
    let np = pop.np();
    let dim = pop.dim();
    if let Some(b) = breaker {
        if b.mode.needs_goal() {
            contract!(goal_estimate.is_some(), "goal-directed breaking needs a goal estimate");
        }
    }

    let mut trials = Vec::with_capacity(np);
    for i in 0..np {
        let r1 = pick_distinct(np, &[i], rng);
        let r2 = pick_distinct(np, &[i, r1], rng);
        let r3 = pick_distinct(np, &[i, r1, r2], rng);
        let v = mutant(&pop.candidates[r1], &pop.candidates[r2], &pop.candidates[r3], pop.f);
        let forced = rng.gen_range(0..dim);
        let mut trial = pop.candidates[i].clone();
        for d in 0..dim {
            if d == forced || rng.gen::<f64>() < pop.cr {
                trial[d] = v[d];
            }
        }
        trials.push(trial);
    }

    let trial_errors: Vec<f64> = trials.iter().map(|t| objective(t)).collect();
    pop.eval_count += np as u64;
    for (t, &e) in trials.iter().zip(&trial_errors) {
        if e < pop.best_error {
            pop.best_error = e;
            pop.best_params = t.clone();
        }
    }

    for (i, (trial, err)) in trials.into_iter().zip(trial_errors).enumerate() {
        if err <= pop.stored_errors[i] {
            pop.candidates[i] = trial;
            pop.stored_errors[i] = err;
        }
    }

    if let Some(b) = breaker {
        if b.mode != super::SbMode::None {
            let mut flags = vec![false; np];
            for (j, cand) in pop.candidates.iter_mut().enumerate() {
                flags[j] = b.break_candidate(cand, goal_estimate, rng)?;
            }
            if b.mode == super::SbMode::Mgop {
                de_sb_postprocess(pop, &flags);
            }
        }
    }
    Ok(())
}

/// Inflates the stored error of every modified candidate in the first half of
/// the population by a factor of 100, making it easier to replace. The
/// inflation persists until the slot is overwritten by a better trial.
pub fn de_sb_postprocess(pop: &mut DePopulation, modified_flags: &[bool]) {
    let half = pop.np() / 2;
    for (j, &m) in modified_flags.iter().enumerate() {
        if m && j < half {
            pop.stored_errors[j] *= 100.0;
        }
    }
}
