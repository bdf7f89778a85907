//! CMA-ES with rank-one and rank-mu covariance updates, cumulative step-size
//! adaptation, and an extra damping term that suppresses step-size growth
//! when symmetry breaking shifts the selected candidates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{contract, Result};
use crate::evolve::{SbMode, SymmetryBreaker};

#[derive(Debug, Clone, Copy)]
pub struct CmaSettings {
    pub initial_sigma: f64,
}

impl CmaSettings {
    /// Initial step size covering a useful fraction of the sampling box.
    pub fn for_dim(dim: usize) -> Self {
        CmaSettings { initial_sigma: 0.3 * (dim as f64).sqrt() }
    }
}

/// Full optimizer state. The best candidate is recorded as evaluated, before
/// any symmetry breaking, and is never inflated.
#[derive(Debug, Clone)]
pub struct CmaState {
    pub dim: usize,
    pub np: usize,
    pub mu: usize,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
    pub eval_count: u64,
    pub generation: u64,
    pub best_params: Vec<f64>,
    pub best_error: f64,
}

/// One generation's evaluated candidates (after breaking), their true errors,
/// and which candidates the breaking step changed.
#[derive(Debug, Clone)]
pub struct CmaGenReport {
    pub candidates: Vec<Vec<f64>>,
    pub errors: Vec<f64>,
    pub modified: Vec<bool>,
    pub best_index: usize,
}

pub fn cmaes_init(dim: usize, np: usize, settings: CmaSettings) -> Result<CmaState> {
    contract!(dim >= 1, "dimension must be positive");
    contract!(np >= 4 && np % 2 == 0, "population size {np} must be even and at least 4");
    contract!(settings.initial_sigma > 0.0, "initial sigma must be positive");
    let n = dim as f64;
    let mu = np / 2;

    let raw: Vec<f64> =
        (1..=mu).map(|j| ((np as f64 + 1.0) / 2.0).ln() - (j as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    let c1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
    let c_mu = (1.0 - c1)
        .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) * (n + 2.0) + mu_eff));
    let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    Ok(CmaState {
        dim,
        np,
        mu,
        mean: DVector::zeros(dim),
        sigma: settings.initial_sigma,
        cov: DMatrix::identity(dim, dim),
        p_sigma: DVector::zeros(dim),
        p_c: DVector::zeros(dim),
        weights,
        mu_eff,
        c_sigma,
        d_sigma,
        c_c,
        c1,
        c_mu,
        chi_n,
        eval_count: 0,
        generation: 0,
        best_params: vec![0.0; dim],
        best_error: f64::INFINITY,
    })
}

/// Recombination mean with modified candidates replaced by the global optimum
/// estimate. Candidates must already be sorted by error; flags and weights
/// align with that order.
pub fn cmaes_sb_mean(
    sorted_candidates: &[&[f64]],
    modified_flags: &[bool],
    goal_estimate: &[f64],
    weights: &[f64],
) -> Vec<f64> {
    assert_eq!(sorted_candidates.len(), weights.len());
    assert_eq!(modified_flags.len(), weights.len());
    let mut m = vec![0.0; goal_estimate.len()];
    for ((cand, &flag), &w) in sorted_candidates.iter().zip(modified_flags).zip(weights) {
        let src: &[f64] = if flag { goal_estimate } else { cand };
        for (acc, v) in m.iter_mut().zip(src) {
            *acc += w * v;
        }
    }
    m
}

/// Damped step-size update: sigma * exp(chi * exp(-0.05 * D^2 * ||s||)).
/// A zero shift recovers the regular update sigma * exp(chi); a large shift
/// freezes sigma.
pub fn sigma_update(sigma: f64, chi: f64, s_norm: f64, dim: f64) -> f64 {
    sigma * (chi * (-0.05 * dim * dim * s_norm).exp()).exp()
}

/// One generation: sample, evaluate, record the best, break every candidate,
/// then update mean, evolution paths, covariance, and step size.
pub fn cmaes_step<O, R>(
    state: &mut CmaState,
    objective: O,
    breaker: Option<&SymmetryBreaker>,
    rng: &mut R,
) -> Result<CmaGenReport>
where
    O: Fn(&[f64]) -> f64,
    R: Rng,
{
    let n = state.dim;
    let np = state.np;
    if let Some(b) = breaker {
        contract!(
            b.layout.dim() == n,
            "breaker layout dim {} != optimizer dim {n}",
            b.layout.dim()
        );
    }

    // Eigendecomposition for sampling and C^{-1/2}; tiny or negative
    // eigenvalues are floored to keep the sampler valid.
    let eig = nalgebra::SymmetricEigen::new(state.cov.clone());
    let max_ev = eig.eigenvalues.max();
    contract!(max_ev.is_finite() && max_ev > 0.0, "covariance lost positive definiteness");
    let floor = max_ev * 1e-14;
    let sqrt_d: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(floor).sqrt()).collect();
    let basis = eig.eigenvectors;

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(np);
    for _ in 0..np {
        let scaled = DVector::from_iterator(
            n,
            sqrt_d.iter().map(|d| d * rng.sample::<f64, _>(StandardNormal)),
        );
        let y = &basis * scaled;
        xs.push((0..n).map(|i| state.mean[i] + state.sigma * y[i]).collect());
    }

    let errors: Vec<f64> = xs.iter().map(|x| objective(x)).collect();
    state.eval_count += np as u64;
    for (x, &e) in xs.iter().zip(&errors) {
        if e < state.best_error {
            state.best_error = e;
            state.best_params = x.clone();
        }
    }

    let mut order: Vec<usize> = (0..np).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]));

    // Breaking preserves each candidate's error, so the order stays valid.
    let mut modified = vec![false; np];
    let mut s_norm = 0.0;
    let breaking = breaker.map_or(false, |b| b.mode != SbMode::None);
    if breaking {
        let b = breaker.unwrap();
        let goal: Option<Vec<f64>> =
            if b.mode.needs_goal() { Some(state.best_params.clone()) } else { None };
        let xs_pre = xs.clone();
        for (j, x) in xs.iter_mut().enumerate() {
            modified[j] = b.break_candidate(x, goal.as_deref(), rng)?;
        }
        let mu = state.mu;
        let mut shift2 = 0.0;
        for i in 0..n {
            let pre: f64 = order[..mu].iter().map(|&j| xs_pre[j][i]).sum::<f64>() / mu as f64;
            let post: f64 = order[..mu].iter().map(|&j| xs[j][i]).sum::<f64>() / mu as f64;
            shift2 += (post - pre) * (post - pre);
        }
        s_norm = shift2.sqrt();
    }

    let mu = state.mu;
    let old_mean = state.mean.clone();
    let use_sb_mean = breaking
        && breaker.unwrap().mode.needs_goal()
        && modified.iter().any(|&m| m);
    let new_mean: DVector<f64> = if use_sb_mean {
        let sorted: Vec<&[f64]> = order[..mu].iter().map(|&j| xs[j].as_slice()).collect();
        let flags: Vec<bool> = order[..mu].iter().map(|&j| modified[j]).collect();
        DVector::from_vec(cmaes_sb_mean(&sorted, &flags, &state.best_params, &state.weights))
    } else {
        let mut m = DVector::zeros(n);
        for (rank, &j) in order[..mu].iter().enumerate() {
            for i in 0..n {
                m[i] += state.weights[rank] * xs[j][i];
            }
        }
        m
    };

    let y_w = (&new_mean - &old_mean) * (1.0 / state.sigma);
    let bty = basis.transpose() * &y_w;
    let scaled = DVector::from_iterator(n, bty.iter().zip(&sqrt_d).map(|(v, d)| v / d));
    let c_inv_sqrt_yw = &basis * scaled;

    let cs = state.c_sigma;
    state.p_sigma =
        &state.p_sigma * (1.0 - cs) + c_inv_sqrt_yw * (cs * (2.0 - cs) * state.mu_eff).sqrt();

    state.generation += 1;
    let gens = state.generation as f64;
    let ps_norm = state.p_sigma.norm();
    let denom = (1.0 - (1.0 - cs).powf(2.0 * gens)).sqrt();
    let h_sigma = if ps_norm / denom < (1.4 + 2.0 / (n as f64 + 1.0)) * state.chi_n {
        1.0
    } else {
        0.0
    };

    let cc = state.c_c;
    state.p_c =
        &state.p_c * (1.0 - cc) + &y_w * (h_sigma * (cc * (2.0 - cc) * state.mu_eff).sqrt());

    let delta_h = (1.0 - h_sigma) * cc * (2.0 - cc);
    let mut cov = &state.cov * (1.0 - state.c1 - state.c_mu + state.c1 * delta_h);
    cov.ger(state.c1, &state.p_c, &state.p_c, 1.0);
    for (rank, &j) in order[..mu].iter().enumerate() {
        let yj = DVector::from_iterator(
            n,
            xs[j].iter().enumerate().map(|(i, &v)| (v - old_mean[i]) / state.sigma),
        );
        cov.ger(state.c_mu * state.weights[rank], &yj, &yj, 1.0);
    }
    state.cov = (&cov + cov.transpose()) * 0.5;

    let chi = (cs / state.d_sigma) * (ps_norm / state.chi_n - 1.0);
    state.sigma = sigma_update(state.sigma, chi, s_norm, n as f64);
    state.mean = new_mean;

    Ok(CmaGenReport { candidates: xs, errors, modified, best_index: order[0] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{OutputMode, ParamVector, Topology};
    use crate::symmetry::break_invariant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn init_state_is_standard() {
        let s = cmaes_init(5, 12, CmaSettings::for_dim(5)).unwrap();
        assert_eq!(s.mean, DVector::zeros(5));
        assert_eq!(s.cov, DMatrix::identity(5, 5));
        assert_eq!(s.p_sigma, DVector::zeros(5));
        assert_eq!(s.p_c, DVector::zeros(5));
        assert!((s.sigma - 0.3 * 5.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.weights.len(), 6);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.weights.windows(2).all(|w| w[0] > w[1]));
        assert!(s.mu_eff > 1.0 && s.mu_eff <= 6.0);
        assert!(s.c1 + s.c_mu <= 1.0);
        assert_eq!(s.eval_count, 0);
    }

    #[test]
    fn init_rejects_bad_population_sizes() {
        assert!(cmaes_init(5, 7, CmaSettings::for_dim(5)).is_err());
        assert!(cmaes_init(5, 2, CmaSettings::for_dim(5)).is_err());
        assert!(cmaes_init(0, 8, CmaSettings::for_dim(1)).is_err());
    }

    #[test]
    fn sphere_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = cmaes_init(5, 12, CmaSettings::for_dim(5)).unwrap();
        while state.eval_count < 20_000 && state.best_error > 1e-9 {
            cmaes_step(&mut state, sphere, None, &mut rng).unwrap();
        }
        assert!(state.best_error < 1e-9, "best error {}", state.best_error);
    }

    #[test]
    fn eval_count_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = cmaes_init(4, 8, CmaSettings::for_dim(4)).unwrap();
        for _ in 0..7 {
            cmaes_step(&mut state, sphere, None, &mut rng).unwrap();
        }
        assert_eq!(state.eval_count, 56);
        assert_eq!(state.generation, 7);
    }

    #[test]
    fn fixed_seed_reproduces_bitwise() {
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = cmaes_init(4, 8, CmaSettings::for_dim(4)).unwrap();
            for _ in 0..10 {
                cmaes_step(&mut state, sphere, None, &mut rng).unwrap();
            }
            state
        };
        let a = run(3);
        let b = run(3);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.cov, b.cov);
        assert_eq!(a.sigma, b.sigma);
        assert_eq!(a.best_error, b.best_error);
        let c = run(4);
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn sb_mean_without_flags_is_weighted_recombination() {
        let c1 = vec![1.0, 0.0];
        let c2 = vec![0.0, 2.0];
        let goal = vec![9.0, 9.0];
        let m = cmaes_sb_mean(&[&c1, &c2], &[false, false], &goal, &[0.7, 0.3]);
        assert!((m[0] - 0.7).abs() < 1e-15);
        assert!((m[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn sb_mean_with_all_flags_is_goal() {
        let c1 = vec![1.0, 0.0];
        let c2 = vec![0.0, 2.0];
        let goal = vec![9.0, -3.0];
        let m = cmaes_sb_mean(&[&c1, &c2], &[true, true], &goal, &[0.7, 0.3]);
        assert!((m[0] - 9.0).abs() < 1e-12);
        assert!((m[1] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn sb_mean_with_half_flags_is_linear_mix() {
        let c1 = vec![1.0, 1.0];
        let c2 = vec![3.0, 5.0];
        let goal = vec![7.0, 9.0];
        let m = cmaes_sb_mean(&[&c1, &c2], &[true, false], &goal, &[0.5, 0.5]);
        assert!((m[0] - (7.0 + 3.0) / 2.0).abs() < 1e-15);
        assert!((m[1] - (9.0 + 5.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn sigma_update_limit_cases() {
        let regular = sigma_update(2.0, 0.3, 0.0, 10.0);
        assert!((regular - 2.0 * 0.3f64.exp()).abs() < 1e-12);
        assert_eq!(sigma_update(2.0, 0.3, 1e9, 10.0), 2.0);
        assert_eq!(sigma_update(2.0, 0.0, 0.123, 10.0), 2.0);
    }

    #[test]
    fn invariant_mode_yields_canonical_candidates() {
        use crate::evolve::SymmetryBreaker;
        let layout = Topology::parse("1-3-1", OutputMode::Regression).unwrap().layout();
        let breaker = SymmetryBreaker::new(layout.clone(), SbMode::Invariant);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = cmaes_init(layout.dim(), 8, CmaSettings::for_dim(layout.dim())).unwrap();
        for _ in 0..5 {
            let report = cmaes_step(&mut state, sphere, Some(&breaker), &mut rng).unwrap();
            for c in &report.candidates {
                let p = ParamVector::new(layout.clone(), c.clone()).unwrap();
                assert_eq!(break_invariant(&p).data(), c.as_slice());
            }
        }
    }

    #[test]
    fn mgop_mode_runs_and_tracks_true_best() {
        use crate::evolve::SymmetryBreaker;
        let layout = Topology::parse("1-2-1", OutputMode::Regression).unwrap().layout();
        let breaker = SymmetryBreaker::new(layout.clone(), SbMode::Mgop);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut state = cmaes_init(layout.dim(), 8, CmaSettings::for_dim(layout.dim())).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            cmaes_step(&mut state, sphere, Some(&breaker), &mut rng).unwrap();
            assert!(state.best_error <= last);
            last = state.best_error;
        }
        assert_eq!(state.best_error, sphere(&state.best_params));
    }
}
