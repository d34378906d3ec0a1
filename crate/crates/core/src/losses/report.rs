use std::fmt;
use std::str::FromStr;

use crate::diffcore::ops::weighted_sum;
use crate::diffcore::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Gaussian parameters are optimized against the photometric loss.
    DuringIteration,
    /// Fusion, init network and head are refined against occupancy + consistency.
    AfterIteration,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::DuringIteration => "during_iteration",
            Phase::AfterIteration => "after_iteration",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "during_iteration" | "during" => Ok(Phase::DuringIteration),
            "after_iteration" | "after" => Ok(Phase::AfterIteration),
            _ => Err(Error::Parse(format!("unknown phase `{s}`"))),
        }
    }
}

/// Loss terms available at a step. Terms a phase doesn't use may stay `None`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossComponents<T> {
    pub l_rgb: Option<T>,
    pub l1: Option<T>,
    pub dssim: Option<T>,
    pub l_ce: Option<T>,
    pub l_lovasz: Option<T>,
    pub l_occ: Option<T>,
    pub l_pc: Option<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport<T> {
    pub phase: Phase,
    pub l_rgb: T,
    pub l1: T,
    pub dssim: T,
    pub l_ce: T,
    pub l_lovasz: T,
    pub l_occ: T,
    pub l_pc: T,
    pub total: T,
}

pub const CSV_HEADER: &str = "step,phase,l_rgb,l1,dssim,l_ce,l_lovasz,l_occ,l_pc,total";

impl<T: Real> LossReport<T> {
    pub fn csv_row(&self, step: usize) -> String {
        format!(
            "{step},{},{},{},{},{},{},{},{},{}",
            self.phase, self.l_rgb, self.l1, self.dssim, self.l_ce, self.l_lovasz, self.l_occ, self.l_pc, self.total
        )
    }
}

fn need<T>(v: Option<T>, name: &str, phase: Phase) -> Result<T> {
    v.ok_or_else(|| Error::Schedule(format!("{phase} requires {name}")))
}

/// `L_rgb` during iteration; `(1−λ)·L_occ + λ·L_pc` after.
pub fn total_loss<T: Real>(phase: Phase, c: &LossComponents<T>, lambda: T) -> Result<LossReport<T>> {
    let z = T::zero();
    let total = match phase {
        Phase::DuringIteration => need(c.l_rgb, "l_rgb", phase)?,
        Phase::AfterIteration => {
            let occ = need(c.l_occ, "l_occ", phase)?;
            let pc = need(c.l_pc, "l_pc", phase)?;
            (T::one() - lambda) * occ + lambda * pc
        }
    };
    Ok(LossReport {
        phase,
        l_rgb: c.l_rgb.unwrap_or(z),
        l1: c.l1.unwrap_or(z),
        dssim: c.dssim.unwrap_or(z),
        l_ce: c.l_ce.unwrap_or(z),
        l_lovasz: c.l_lovasz.unwrap_or(z),
        l_occ: c.l_occ.unwrap_or(z),
        l_pc: c.l_pc.unwrap_or(z),
        total,
    })
}

/// Tape counterpart of [`total_loss`]: only the vars the phase needs are read,
/// so the other phase's parameters are never reached by the backward pass.
pub fn total_loss_op<T: Real>(tape: &mut Tape<T>, phase: Phase, l_rgb: Option<Var>, l_occ: Option<Var>, l_pc: Option<Var>, lambda: T) -> Result<Var> {
    match phase {
        Phase::DuringIteration => need(l_rgb, "l_rgb", phase),
        Phase::AfterIteration => {
            let occ = need(l_occ, "l_occ", phase)?;
            let pc = need(l_pc, "l_pc", phase)?;
            weighted_sum(tape, &[(T::one() - lambda, occ), (lambda, pc)])
        }
    }
}
