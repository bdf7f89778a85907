//! Global optimizers (DE and CMA-ES) with optional symmetry breaking.
//!
//! Each family runs in four flavors: plain, goal-independent canonicalization
//! (`Invariant`), greedy goal-directed breaking (`Mgop`), and exhaustive
//! goal-directed breaking (`MgopBruteForce`). Breaking transforms candidates
//! within their symmetry orbit, so stored objective values stay valid.

use std::sync::Arc;

use rand::Rng;

use crate::error::{contract, Result};
use crate::net::Layout;
use crate::symmetry::{
    break_ideal_bf_in_place, break_invariant_in_place, break_mgop_in_place, DEFAULT_BF_CAP,
};

mod cmaes;
mod de;

pub use cmaes::{
    cmaes_init, cmaes_sb_mean, cmaes_step, sigma_update, CmaGenReport, CmaSettings, CmaState,
};
pub use de::{de_init, de_sb_postprocess, de_step, DePopulation, DEFAULT_CR, DEFAULT_F};

/// Which symmetry-breaking rule runs on candidates after each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbMode {
    None,
    Invariant,
    Mgop,
    MgopBruteForce,
}

impl SbMode {
    /// Goal-directed modes need an optimum estimate to break against.
    pub fn needs_goal(self) -> bool {
        matches!(self, SbMode::Mgop | SbMode::MgopBruteForce)
    }
}

/// Binds a breaking mode to the parameter layout it operates on.
#[derive(Debug, Clone)]
pub struct SymmetryBreaker {
    pub layout: Arc<Layout>,
    pub mode: SbMode,
    pub bf_cap: u128,
}

impl SymmetryBreaker {
    pub fn new(layout: Arc<Layout>, mode: SbMode) -> Self {
        SymmetryBreaker { layout, mode, bf_cap: DEFAULT_BF_CAP }
    }

    /// Breaks one candidate in place; returns whether it changed.
    /// `goal` is required for goal-directed modes and ignored otherwise.
    pub fn break_candidate<R: Rng>(
        &self,
        theta: &mut [f64],
        goal: Option<&[f64]>,
        rng: &mut R,
    ) -> Result<bool> {
        contract!(
            theta.len() == self.layout.dim(),
            "candidate length {} != layout dim {}",
            theta.len(),
            self.layout.dim()
        );
        match self.mode {
            SbMode::None => Ok(false),
            SbMode::Invariant => Ok(break_invariant_in_place(&self.layout, theta)),
            SbMode::Mgop => {
                let goal = require_goal(goal, theta.len())?;
                Ok(break_mgop_in_place(&self.layout, theta, goal, rng))
            }
            SbMode::MgopBruteForce => {
                let goal = require_goal(goal, theta.len())?;
                break_ideal_bf_in_place(&self.layout, theta, goal, self.bf_cap)
            }
        }
    }
}

fn require_goal(goal: Option<&[f64]>, dim: usize) -> Result<&[f64]> {
    match goal {
        Some(g) if g.len() == dim => Ok(g),
        Some(g) => Err(crate::error::Error::Contract(format!(
            "goal length {} != candidate length {dim}",
            g.len()
        ))),
        None => Err(crate::error::Error::Contract(
            "goal-directed breaking needs a goal estimate".into(),
        )),
    }
}
