//! Fork network: couples split between two single-server queues.
//!
//! State `(x, y)` counts the men's and the ladies' queue. Couples arrive at
//! rate `nu` and join both queues at once; single men and women arrive at
//! `lambda` and `eta`; the rooms serve at `alpha` and `beta`. On the axes the
//! empty queue simply has no departures, so the analysis runs through the
//! generic pipeline of [`crate::solver::analyze_generic`].
//!
//! Only the x-direction deviation is the model's main object; the y-axis
//! quantities (climb cost, cascade) are produced by the same symmetric
//! construction and are an extrapolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mgf::{RegimeMgf, RegimeRole};
use crate::network::{JumpMeasure, StabilityKind, STABILITY_TOL};
use crate::sim::WalkModel;
use crate::solver::{analyze_generic, LdAnalysis, ModelMgfs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForkParams {
    pub nu: f64,
    pub lambda: f64,
    pub eta: f64,
    pub alpha: f64,
    #[serde(rename = "beta")]
    pub beta_rate: f64,
}

impl ForkParams {
    pub fn new(nu: f64, lambda: f64, eta: f64, alpha: f64, beta_rate: f64) -> Result<Self> {
        let p = Self {
            nu,
            lambda,
            eta,
            alpha,
            beta_rate,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidParams(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nu", self.nu),
            ("lambda", self.lambda),
            ("eta", self.eta),
            ("alpha", self.alpha),
            ("beta", self.beta_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.alpha <= 0.0 || self.beta_rate <= 0.0 {
            return Err(Error::InvalidParams("service rates must be positive".into()));
        }
        if self.lambda + self.nu <= 0.0 || self.eta + self.nu <= 0.0 {
            return Err(Error::InvalidParams("both queues need positive arrival rates".into()));
        }
        Ok(())
    }

    /// Both queues are M/M/1 marginally: stable iff `lambda + nu < alpha` and
    /// `eta + nu < beta`, with [`STABILITY_TOL`] relative bands reported as
    /// `Boundary`.
    pub fn stability(&self) -> StabilityKind {
        let cmp = |load: f64, cap: f64| {
            if (load - cap).abs() <= STABILITY_TOL * cap {
                StabilityKind::Boundary
            } else if load < cap {
                StabilityKind::Stable
            } else {
                StabilityKind::Transient
            }
        };
        match (
            cmp(self.lambda + self.nu, self.alpha),
            cmp(self.eta + self.nu, self.beta_rate),
        ) {
            (StabilityKind::Transient, _) | (_, StabilityKind::Transient) => StabilityKind::Transient,
            (StabilityKind::Boundary, _) | (_, StabilityKind::Boundary) => StabilityKind::Boundary,
            _ => StabilityKind::Stable,
        }
    }

    /// The jitter condition `eta + alpha nu / (lambda + nu) < beta`.
    pub fn jitter_condition(&self) -> bool {
        self.eta + self.alpha * self.nu / (self.lambda + self.nu) < self.beta_rate
    }

    fn arrivals(&self) -> [(i32, i32, f64); 3] {
        [(1, 1, self.nu), (1, 0, self.lambda), (0, 1, self.eta)]
    }
}

/// Interior and x-axis jump measures.
pub fn fork_jumps(p: &ForkParams) -> Result<(JumpMeasure, JumpMeasure)> {
    let a = p.arrivals();
    let interior = JumpMeasure::new(
        a.iter()
            .copied()
            .chain([(-1, 0, p.alpha), (0, -1, p.beta_rate)]),
    )?;
    let boundary = JumpMeasure::new(a.iter().copied().chain([(-1, 0, p.alpha)]))?;
    Ok((interior, boundary))
}

/// Jumps on the y-axis (men's queue empty).
pub fn fork_y_jumps(p: &ForkParams) -> Result<JumpMeasure> {
    JumpMeasure::new(p.arrivals().into_iter().chain([(0, -1, p.beta_rate)]))
}

pub fn fork_mgfs(p: &ForkParams) -> Result<ModelMgfs> {
    let (interior, boundary) = fork_jumps(p)?;
    Ok(ModelMgfs {
        interior: RegimeMgf::new(interior, RegimeRole::Interior)?,
        x_boundary: RegimeMgf::new(boundary, RegimeRole::XBoundary)?,
        y_boundary: RegimeMgf::new(fork_y_jumps(p)?, RegimeRole::YBoundary)?,
    })
}

/// Large-deviation analysis of the men's queue overflowing.
pub fn fork_analyze(p: &ForkParams) -> Result<LdAnalysis> {
    p.validate()?;
    match p.stability() {
        StabilityKind::Stable => analyze_generic(&fork_mgfs(p)?),
        other => Err(Error::RejectsUnstable(other)),
    }
}

/// Simulation model of the fork network.
pub fn fork_model(p: &ForkParams) -> Result<WalkModel> {
    let a = p.arrivals();
    let with = |extra: &[(i32, i32, f64)]| -> Vec<(i32, i32, f64)> {
        a.iter().copied().chain(extra.iter().copied()).collect()
    };
    WalkModel::new(
        &a,
        &with(&[(-1, 0, p.alpha)]),
        &with(&[(0, -1, p.beta_rate)]),
        &with(&[(-1, 0, p.alpha), (0, -1, p.beta_rate)]),
    )
}
