//! Experiment orchestration: the method matrix, per-problem defaults,
//! repetition scheduling, trace persistence, and statistical reporting.

mod config;
mod report;
mod run;
mod trace;

pub use config::{load_config_file, ConfigOverrides};
pub use report::{
    build_report, collect_final_errors, normalize_report, render_report, FamilyColumn,
    FamilyEntry, StatReport,
};
pub use run::{persist_outputs, prepare_data, run_experiment, PreparedData, RunOutput};
pub use trace::{read_trace, write_trace, ConvergenceTrace, TraceRow};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{DataKind, ProblemId};
use crate::error::{contract, Error, Result};
use crate::evolve::SbMode;
use crate::net::{OutputMode, Topology};

pub const DEFAULT_NOISE_SD: f64 = 5e-3;
pub const DEFAULT_REPETITIONS: usize = 50;
pub const DEFAULT_SEED: u64 = 42;

/// One optimizer variant: a base algorithm crossed with a symmetry-breaking
/// scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    De,
    DeInvSb,
    DeSb,
    DeSbBf,
    CmaEs,
    CmaEsInvSb,
    CmaEsSb,
    CmaEsSbBf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    De,
    CmaEs,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::De => "de",
            Family::CmaEs => "cma-es",
        }
    }
}

impl Method {
    pub fn all() -> &'static [Method] {
        &[
            Method::De,
            Method::DeInvSb,
            Method::DeSb,
            Method::DeSbBf,
            Method::CmaEs,
            Method::CmaEsInvSb,
            Method::CmaEsSb,
            Method::CmaEsSbBf,
        ]
    }

    /// Stable identifier used in CLI arguments and trace file names; contains
    /// no underscores so file names split cleanly on '_'.
    pub fn name(self) -> &'static str {
        match self {
            Method::De => "de",
            Method::DeInvSb => "de-inv-sb",
            Method::DeSb => "de-sb",
            Method::DeSbBf => "de-sb-bf",
            Method::CmaEs => "cma-es",
            Method::CmaEsInvSb => "cma-es-inv-sb",
            Method::CmaEsSb => "cma-es-sb",
            Method::CmaEsSbBf => "cma-es-sb-bf",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Method::De | Method::DeInvSb | Method::DeSb | Method::DeSbBf => Family::De,
            _ => Family::CmaEs,
        }
    }

    pub fn sb_mode(self) -> SbMode {
        match self {
            Method::De | Method::CmaEs => SbMode::None,
            Method::DeInvSb | Method::CmaEsInvSb => SbMode::Invariant,
            Method::DeSb | Method::CmaEsSb => SbMode::Mgop,
            Method::DeSbBf | Method::CmaEsSbBf => SbMode::MgopBruteForce,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::all()
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Benchmark defaults: network shape, dataset size, population sizes, and
/// evaluation budget.
#[derive(Debug, Clone, Copy)]
pub struct ProblemDefaults {
    pub topology: &'static str,
    pub sample_count: usize,
    /// (train, validation, test) sizes; classification problems only.
    pub split: Option<(usize, usize, usize)>,
    pub np_de: usize,
    pub np_cma: usize,
    pub max_evaluations: u64,
}

pub fn problem_defaults(problem: ProblemId) -> ProblemDefaults {
    use ProblemId::*;
    match problem {
        Syn5 => ProblemDefaults {
            topology: "1-3-1",
            sample_count: 200,
            split: None,
            np_de: 80,
            np_cma: 48,
            max_evaluations: 200_000,
        },
        Sinc => ProblemDefaults {
            topology: "1-5-1",
            sample_count: 200,
            split: None,
            np_de: 120,
            np_cma: 400,
            max_evaluations: 200_000,
        },
        IncSinc => ProblemDefaults {
            topology: "1-5-1",
            sample_count: 200,
            split: None,
            np_de: 144,
            np_cma: 400,
            max_evaluations: 200_000,
        },
        Sinc2d => ProblemDefaults {
            topology: "2-3-1-3-1",
            sample_count: 1000,
            split: None,
            np_de: 96,
            np_cma: 1000,
            max_evaluations: 400_000,
        },
        Sinc3d => ProblemDefaults {
            topology: "3-4-1-4-1",
            sample_count: 1000,
            split: None,
            np_de: 120,
            np_cma: 1000,
            max_evaluations: 400_000,
        },
        AutoencCircle => ProblemDefaults {
            topology: "2-5-3-2-1-2-3-5-2",
            sample_count: 200,
            split: None,
            np_de: 64,
            np_cma: 4000,
            max_evaluations: 400_000,
        },
        AutoencSpiral => ProblemDefaults {
            topology: "3-1-3-4-7-3",
            sample_count: 1000,
            split: None,
            np_de: 80,
            np_cma: 400,
            max_evaluations: 400_000,
        },
        AutoencSphere => ProblemDefaults {
            topology: "3-8-5-2-5-8-3",
            sample_count: 1000,
            split: None,
            np_de: 96,
            np_cma: 1000,
            max_evaluations: 400_000,
        },
        TwoCircles => ProblemDefaults {
            topology: "2-4-2-4-2",
            sample_count: 1200,
            split: Some((400, 400, 400)),
            np_de: 80,
            np_cma: 400,
            max_evaluations: 400_000,
        },
        TwoSpirals => ProblemDefaults {
            topology: "2-8-3-1-3-8-2",
            sample_count: 194,
            split: Some((114, 40, 40)),
            np_de: 120,
            np_cma: 1000,
            max_evaluations: 400_000,
        },
        Digits => ProblemDefaults {
            topology: "16-8-3-10-10",
            sample_count: 3000,
            split: Some((1000, 1000, 1000)),
            np_de: 120,
            np_cma: 1000,
            max_evaluations: 1_000_000,
        },
    }
}

/// Expected (input, output) dimensions for each problem.
pub fn problem_dims(problem: ProblemId) -> (usize, usize) {
    use ProblemId::*;
    match problem {
        Syn5 | Sinc | IncSinc => (1, 1),
        Sinc2d => (2, 1),
        Sinc3d => (3, 1),
        AutoencCircle => (2, 2),
        AutoencSpiral | AutoencSphere => (3, 3),
        TwoCircles | TwoSpirals => (2, 2),
        Digits => (16, 10),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemId,
    pub method: Method,
    pub topology: Topology,
    pub np: usize,
    pub max_evaluations: u64,
    pub repetitions: usize,
    pub seed: u64,
    pub sample_count: usize,
    pub noise_sd: f64,
    /// Source file for the handwritten-digits dataset; required for that
    /// problem, ignored elsewhere.
    pub digits_file: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(problem: ProblemId, method: Method) -> Result<Self> {
        let d = problem_defaults(problem);
        let output_mode = match problem.kind() {
            DataKind::Classification => OutputMode::Classification,
            _ => OutputMode::Regression,
        };
        let np = match method.family() {
            Family::De => d.np_de,
            Family::CmaEs => d.np_cma,
        };
        Ok(ExperimentConfig {
            problem,
            method,
            topology: Topology::parse(d.topology, output_mode)?,
            np,
            max_evaluations: d.max_evaluations,
            repetitions: DEFAULT_REPETITIONS,
            seed: DEFAULT_SEED,
            sample_count: d.sample_count,
            noise_sd: DEFAULT_NOISE_SD,
            digits_file: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (d_in, d_out) = problem_dims(self.problem);
        contract!(
            self.topology.input_dim() == d_in && self.topology.output_dim() == d_out,
            "topology {}-...-{} does not fit problem {} ({d_in} in, {d_out} out)",
            self.topology.input_dim(),
            self.topology.output_dim(),
            self.problem.name()
        );
        let class_mode = self.topology.output_mode() == OutputMode::Classification;
        contract!(
            class_mode == (self.problem.kind() == DataKind::Classification),
            "output mode must match problem kind"
        );
        contract!(self.np >= 4, "population size must be at least 4, got {}", self.np);
        if self.method.family() == Family::CmaEs {
            contract!(self.np % 2 == 0, "cma-es population size must be even, got {}", self.np);
        }
        contract!(
            self.max_evaluations >= self.np as u64,
            "budget {} below one population of {}",
            self.max_evaluations,
            self.np
        );
        contract!(self.repetitions >= 1, "need at least one repetition");
        contract!(
            self.noise_sd >= 0.0 && self.noise_sd.is_finite(),
            "noise sd must be finite and non-negative"
        );
        if self.problem == ProblemId::Digits {
            contract!(self.digits_file.is_some(), "digits problem needs a dataset file");
        } else if let Some((a, b, c)) = problem_defaults(self.problem).split {
            contract!(
                self.sample_count >= a + b + c,
                "sample count {} below split {}+{}+{}",
                self.sample_count,
                a,
                b,
                c
            );
        } else {
            contract!(self.sample_count >= 2, "need at least two samples");
        }
        Ok(())
    }
}
