//! Experiment execution: one dataset per experiment, independently seeded
//! repetitions run in parallel, traces recorded on strict improvement.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{fit_normalize, generate, load_digits, DataKind, Dataset, ProblemId};
use crate::error::{contract, Result};
use crate::evolve::{cmaes_init, cmaes_step, de_init, de_step, CmaSettings, SymmetryBreaker};
use crate::net::{evaluate_net, Evaluator, Layout, ParamVector};

use super::trace::{write_trace, ConvergenceTrace};
use super::{problem_defaults, ExperimentConfig, Family};

/// Dataset for one experiment, normalized by training-set statistics.
/// Validation and test parts exist for classification problems only.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub test: Option<Dataset>,
    /// Some input or target dimension had zero variance and was left unscaled.
    pub degenerate_normalization: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_index: usize,
    pub seed: u64,
    pub trace: ConvergenceTrace,
    pub final_error: f64,
    pub wall_secs: f64,
}

/// Builds the experiment dataset. The generator stream is separate from every
/// repetition stream, so run results never depend on dataset draw order.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let split = match config.problem {
        ProblemId::Digits => {
            let path = config
                .digits_file
                .as_ref()
                .ok_or_else(|| crate::error::Error::Config("digits problem needs a dataset file".into()))?;
            Some(load_digits(path, &mut rng)?)
        }
        p => {
            let full = generate(p, config.sample_count, config.noise_sd, &mut rng)?;
            match problem_defaults(p).split {
                Some(sizes) => Some(crate::data::split(&full, sizes, &mut rng)?),
                None => {
                    let (train, stats) = fit_normalize(&full)?;
                    return Ok(PreparedData {
                        train,
                        validation: None,
                        test: None,
                        degenerate_normalization: stats.degenerate,
                    });
                }
            }
        }
    };
    let split = split.expect("classification path always splits");
    let (train, stats) = fit_normalize(&split.train)?;
    Ok(PreparedData {
        train,
        validation: Some(stats.apply(&split.validation)?),
        test: Some(stats.apply(&split.test)?),
        degenerate_normalization: stats.degenerate,
    })
}

/// Runs all repetitions of one experiment. Repetition `i` is seeded with
/// `seed + i`; results come back in repetition order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunOutput>> {
    config.validate()?;
    let data = prepare_data(config)?;
    (0..config.repetitions)
        .into_par_iter()
        .map(|i| single_run(config, &data, i))
        .collect()
}

fn single_run(config: &ExperimentConfig, data: &PreparedData, run_index: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let seed = config.seed.wrapping_add(run_index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = config.topology.layout();
    let evaluator = Evaluator::new(layout.clone(), &data.train)?;
    let objective = |theta: &[f64]| evaluator.penalized(theta);
    let mode = config.method.sb_mode();
    let breaker =
        (mode != crate::evolve::SbMode::None).then(|| SymmetryBreaker::new(layout.clone(), mode));
    let mut recorder = Recorder::new(layout, data)?;

    match config.method.family() {
        Family::De => {
            let mut pop = de_init(config.topology.param_dim(), config.np, &objective, &mut rng)?;
            recorder.observe(pop.eval_count, pop.best_error, &pop.best_params, true)?;
            while pop.eval_count + config.np as u64 <= config.max_evaluations {
                let goal = mode.needs_goal().then(|| pop.centroid());
                de_step(&mut pop, &objective, breaker.as_ref(), goal.as_deref(), &mut rng)?;
                recorder.observe(pop.eval_count, pop.best_error, &pop.best_params, false)?;
            }
        }
        Family::CmaEs => {
            let dim = config.topology.param_dim();
            let mut state = cmaes_init(dim, config.np, CmaSettings::for_dim(dim))?;
            let mut first = true;
            while state.eval_count + config.np as u64 <= config.max_evaluations {
                cmaes_step(&mut state, &objective, breaker.as_ref(), &mut rng)?;
                recorder.observe(state.eval_count, state.best_error, &state.best_params, first)?;
                first = false;
            }
        }
    }

    let trace = recorder.finish();
    let final_error = trace
        .final_error()
        .ok_or_else(|| crate::error::Error::Contract("run produced no trace rows".into()))?;
    Ok(RunOutput {
        run_index,
        seed,
        trace,
        final_error,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Appends trace rows on strict improvement of the best training error. For
/// classification the row additionally carries train/test error rates and is
/// gated on strict improvement of the validation error rate.
struct Recorder<'a> {
    layout: Arc<Layout>,
    data: &'a PreparedData,
    trace: ConvergenceTrace,
    best_recorded: f64,
    best_val_rate: f64,
}

impl<'a> Recorder<'a> {
    fn new(layout: Arc<Layout>, data: &'a PreparedData) -> Result<Self> {
        let classification = data.train.kind == DataKind::Classification;
        if classification {
            contract!(
                data.validation.is_some() && data.test.is_some(),
                "classification data needs validation and test parts"
            );
        }
        Ok(Recorder {
            layout,
            data,
            trace: ConvergenceTrace::new(classification),
            best_recorded: f64::INFINITY,
            best_val_rate: f64::INFINITY,
        })
    }

    fn observe(&mut self, eval_count: u64, best_error: f64, best_params: &[f64], force: bool) -> Result<()> {
        if !force && best_error >= self.best_recorded {
            return Ok(());
        }
        self.best_recorded = best_error;
        if !self.trace.classification {
            return self.trace.record(eval_count, best_error, None);
        }
        let params = ParamVector::new(self.layout.clone(), best_params.to_vec())?;
        let net = evaluate_net(&params, &self.data.train)?;
        let val_rate = net.class_error_rate(self.data.validation.as_ref().unwrap())?;
        if force || val_rate < self.best_val_rate {
            self.best_val_rate = val_rate.min(self.best_val_rate);
            let train_rate = net.class_error_rate(&self.data.train)?;
            let test_rate = net.class_error_rate(self.data.test.as_ref().unwrap())?;
            self.trace.record(eval_count, best_error, Some((train_rate, test_rate)))?;
        }
        Ok(())
    }

    fn finish(self) -> ConvergenceTrace {
        self.trace
    }
}

/// Writes one `.csv` trace and one `.meta.txt` sidecar per repetition.
/// Traces hold only seed-determined content; wall time and config echo go to
/// the sidecar so reruns with the same seed produce byte-identical traces.
pub fn persist_outputs(
    config: &ExperimentConfig,
    outputs: &[RunOutput],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(outputs.len());
    for o in outputs {
        let base = format!(
            "trace_{}_{}_run{:03}",
            config.problem.name(),
            config.method.name(),
            o.run_index
        );
        let trace_path = out_dir.join(format!("{base}.csv"));
        let mut file = std::io::BufWriter::new(fs::File::create(&trace_path)?);
        write_trace(&o.trace, &mut file)?;
        file.flush()?;

        let meta_path = out_dir.join(format!("{base}.meta.txt"));
        let mut meta = String::new();
        meta.push_str(&format!("problem = {}\n", config.problem.name()));
        meta.push_str(&format!("method = {}\n", config.method.name()));
        meta.push_str(&format!("topology = {}\n", config.topology));
        meta.push_str(&format!("np = {}\n", config.np));
        meta.push_str(&format!("evals = {}\n", config.max_evaluations));
        meta.push_str(&format!("reps = {}\n", config.repetitions));
        meta.push_str(&format!("seed = {}\n", config.seed));
        meta.push_str(&format!("samples = {}\n", config.sample_count));
        meta.push_str(&format!("noise_sd = {:e}\n", config.noise_sd));
        meta.push_str(&format!("run_index = {}\n", o.run_index));
        meta.push_str(&format!("run_seed = {}\n", o.seed));
        meta.push_str(&format!("rows = {}\n", o.trace.rows.len()));
        meta.push_str(&format!("final_error = {:e}\n", o.final_error));
        meta.push_str(&format!("wall_secs = {:.3}\n", o.wall_secs));
        fs::write(&meta_path, meta)?;
        paths.push(trace_path);
    }
    Ok(paths)
}
