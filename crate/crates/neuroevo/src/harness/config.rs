//! Key=value config files. Settings resolve defaults -> file -> command line,
//! later sources winning.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::ProblemId;
use crate::error::{Error, Result};

use super::{ExperimentConfig, Method};

/// Optional settings from a config file or command-line flags. `None` means
/// "not specified here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub problem: Option<ProblemId>,
    pub method: Option<Method>,
    pub topology: Option<String>,
    pub np: Option<usize>,
    pub max_evaluations: Option<u64>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub sample_count: Option<usize>,
    pub noise_sd: Option<f64>,
    pub out: Option<PathBuf>,
    pub digits_file: Option<PathBuf>,
}

impl ConfigOverrides {
    /// Overlays `higher` on `self`; any setting present in `higher` wins.
    pub fn merge(mut self, higher: ConfigOverrides) -> ConfigOverrides {
        macro_rules! take {
            ($field:ident) => {
                if higher.$field.is_some() {
                    self.$field = higher.$field;
                }
            };
        }
        take!(problem);
        take!(method);
        take!(topology);
        take!(np);
        take!(max_evaluations);
        take!(repetitions);
        take!(seed);
        take!(sample_count);
        take!(noise_sd);
        take!(out);
        take!(digits_file);
        self
    }

    /// Resolves into a validated experiment config, starting from the
    /// problem's catalog defaults.
    pub fn into_config(self) -> Result<ExperimentConfig> {
        let problem =
            self.problem.ok_or_else(|| Error::Config("no problem specified".into()))?;
        let method = self.method.ok_or_else(|| Error::Config("no method specified".into()))?;
        let mut config = ExperimentConfig::defaults(problem, method)?;
        if let Some(t) = &self.topology {
            config.topology = crate::net::Topology::parse(t, config.topology.output_mode())?;
        }
        if let Some(np) = self.np {
            config.np = np;
        }
        if let Some(evals) = self.max_evaluations {
            config.max_evaluations = evals;
        }
        if let Some(reps) = self.repetitions {
            config.repetitions = reps;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(n) = self.sample_count {
            config.sample_count = n;
        }
        if let Some(sd) = self.noise_sd {
            config.noise_sd = sd;
        }
        if self.digits_file.is_some() {
            config.digits_file = self.digits_file;
        }
        config.validate()?;
        Ok(config)
    }
}

pub fn load_config_file(path: &Path) -> Result<ConfigOverrides> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

fn parse_config(text: &str) -> Result<ConfigOverrides> {
    let mut o = ConfigOverrides::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected key = value, got '{line}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let parse_err = |what: &str| Error::Parse {
            line: line_no,
            msg: format!("bad {what} '{value}'"),
        };
        match key {
            "problem" => o.problem = Some(value.parse().map_err(|_| parse_err("problem"))?),
            "method" => o.method = Some(value.parse().map_err(|_| parse_err("method"))?),
            "topology" => o.topology = Some(value.to_string()),
            "np" => o.np = Some(value.parse().map_err(|_| parse_err("np"))?),
            "evals" => {
                o.max_evaluations = Some(value.parse().map_err(|_| parse_err("evals"))?)
            }
            "reps" => o.repetitions = Some(value.parse().map_err(|_| parse_err("reps"))?),
            "seed" => o.seed = Some(value.parse().map_err(|_| parse_err("seed"))?),
            "samples" => o.sample_count = Some(value.parse().map_err(|_| parse_err("samples"))?),
            "noise_sd" => o.noise_sd = Some(value.parse().map_err(|_| parse_err("noise_sd"))?),
            "out" => o.out = Some(PathBuf::from(value)),
            "digits_file" => o.digits_file = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unknown key '{other}'"),
                })
            }
        }
    }
    Ok(o)
}
