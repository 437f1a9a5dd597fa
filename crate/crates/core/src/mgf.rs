//! Log moment generating functions of compound-Poisson jump measures.
//!
//! For a measure with atoms `(dx, dy, rate)`,
//!
//! ```text
//! M(theta) = sum rate * (exp(theta1 dx + theta2 dy) - 1)
//! ```
//!
//! `M` is convex with `M(0) = 0`. The interior function `M+`, the x-axis
//! function `M-` and the y-axis function `M~` of the modified Jackson network
//! are all instances of [`RegimeMgf`]; nothing here is specific to that
//! network except [`g_minus`], the closed-form x-axis level curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{JumpMeasure, NetworkParams};
use crate::numeric::{expand_until, newton_bisect};

/// Exponents above this raise [`Error::Overflow`].
pub const MAX_EXPONENT: f64 = 700.0;

/// A point in the twist plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub theta1: f64,
    pub theta2: f64,
}

impl ThetaPoint {
    pub const ORIGIN: ThetaPoint = ThetaPoint {
        theta1: 0.0,
        theta2: 0.0,
    };

    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2 }
    }

    pub fn swapped(self) -> Self {
        Self::new(self.theta2, self.theta1)
    }

    pub fn is_finite(&self) -> bool {
        self.theta1.is_finite() && self.theta2.is_finite()
    }
}

/// Which part of the state space a jump measure governs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeRole {
    /// Off both axes (`M+`).
    Interior,
    /// On the x-axis, `y = 0` (`M-`).
    XBoundary,
    /// On the y-axis, `x = 0` (`M~`).
    YBoundary,
}

impl RegimeRole {
    fn transposed(self) -> Self {
        match self {
            RegimeRole::Interior => RegimeRole::Interior,
            RegimeRole::XBoundary => RegimeRole::YBoundary,
            RegimeRole::YBoundary => RegimeRole::XBoundary,
        }
    }
}

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    /// Lower Cholesky factor `(l11, l21, l22)`, or `None` unless positive definite.
    pub fn cholesky(&self) -> Option<(f64, f64, f64)> {
        if !(self.xx > 0.0) {
            return None;
        }
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let d = self.yy - l21 * l21;
        if !(d > 0.0) {
            return None;
        }
        Some((l11, l21, d.sqrt()))
    }

    /// Solves `self * x = rhs` for a positive-definite matrix.
    pub fn solve(&self, rhs: [f64; 2]) -> Option<[f64; 2]> {
        let (l11, l21, l22) = self.cholesky()?;
        let z1 = rhs[0] / l11;
        let z2 = (rhs[1] - l21 * z1) / l22;
        let x2 = z2 / l22;
        let x1 = (z1 - l21 * x2) / l11;
        Some([x1, x2])
    }
}

/// Value, gradient and Hessian of `M` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfEval {
    pub value: f64,
    pub grad: [f64; 2],
    pub hessian: Sym2,
    /// `sum rate * |jump| * exp(theta . jump)`, a magnitude for relative tolerances.
    pub scale: f64,
}

/// A jump measure tagged with its role, evaluated as a log-MGF.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeMgf {
    measure: JumpMeasure,
    role: RegimeRole,
}

impl RegimeMgf {
    /// Interior measures must be steep: atoms on both sides of each axis, so
    /// that every velocity is attainable by a finite twist.
    pub fn new(measure: JumpMeasure, role: RegimeRole) -> Result<Self> {
        let m = Self { measure, role };
        if role == RegimeRole::Interior {
            m.check_steep_axis(0)?;
            m.check_steep_axis(1)?;
        }
        Ok(m)
    }

    pub fn measure(&self) -> &JumpMeasure {
        &self.measure
    }

    pub fn role(&self) -> RegimeRole {
        self.role
    }

    pub fn transposed(&self) -> Self {
        Self {
            measure: self.measure.transposed(),
            role: self.role.transposed(),
        }
    }

    fn check_steep_axis(&self, axis: usize) -> Result<()> {
        let comp = |a: &crate::network::Atom| if axis == 0 { a.dx } else { a.dy };
        let pos = self.measure.atoms().iter().any(|a| comp(a) > 0);
        let neg = self.measure.atoms().iter().any(|a| comp(a) < 0);
        if pos && neg {
            Ok(())
        } else {
            let name = if axis == 0 { "x" } else { "y" };
            Err(Error::NonSteep(format!(
                "{:?} measure needs atoms with positive and negative {name}-jumps",
                self.role
            )))
        }
    }

    fn exponent(theta: ThetaPoint, dx: i32, dy: i32) -> Result<f64> {
        let e = theta.theta1 * dx as f64 + theta.theta2 * dy as f64;
        if !theta.is_finite() || e > MAX_EXPONENT {
            return Err(Error::Overflow { exponent: e });
        }
        Ok(e)
    }

    pub fn eval(&self, theta: ThetaPoint) -> Result<f64> {
        let mut total = 0.0;
        for a in self.measure.atoms() {
            total += a.rate * Self::exponent(theta, a.dx, a.dy)?.exp_m1();
        }
        Ok(total)
    }

    pub fn grad(&self, theta: ThetaPoint) -> Result<[f64; 2]> {
        Ok(self.eval_full(theta)?.grad)
    }

    pub fn hessian(&self, theta: ThetaPoint) -> Result<Sym2> {
        Ok(self.eval_full(theta)?.hessian)
    }

    /// Value, gradient, Hessian and magnitude in one pass.
    pub fn eval_full(&self, theta: ThetaPoint) -> Result<MgfEval> {
        let mut out = MgfEval {
            value: 0.0,
            grad: [0.0; 2],
            hessian: Sym2 {
                xx: 0.0,
                xy: 0.0,
                yy: 0.0,
            },
            scale: 0.0,
        };
        for a in self.measure.atoms() {
            let e = Self::exponent(theta, a.dx, a.dy)?;
            let w = a.rate * e.exp();
            let (dx, dy) = (a.dx as f64, a.dy as f64);
            out.value += a.rate * e.exp_m1();
            out.grad[0] += w * dx;
            out.grad[1] += w * dy;
            out.hessian.xx += w * dx * dx;
            out.hessian.xy += w * dx * dy;
            out.hessian.yy += w * dy * dy;
            out.scale += w * (dx.abs() + dy.abs()) + a.rate;
        }
        Ok(out)
    }

    /// Ratio of the upward to the downward part of `dM/dtheta2`: below one
    /// exactly when the y-velocity at `theta` is negative.
    pub fn vertical_balance(&self, theta: ThetaPoint) -> Result<f64> {
        let (mut up, mut down) = (0.0, 0.0);
        for a in self.measure.atoms() {
            let w = a.rate * Self::exponent(theta, a.dx, a.dy)?.exp();
            if a.dy > 0 {
                up += w * a.dy as f64;
            } else if a.dy < 0 {
                down -= w * a.dy as f64;
            }
        }
        Ok(up / down)
    }

    /// The unique `theta2` with `dM/dtheta2 (theta1, theta2) = 0`, i.e. the
    /// minimizer of `M(theta1, .)`.
    pub fn rightmost_on_vertical_tangent(&self, theta1: f64) -> Result<f64> {
        self.check_steep_axis(1)?;
        // Closed form when all vertical jumps are unit: A z - B / z = 0.
        let (mut up, mut down) = (0.0, 0.0);
        for a in self.measure.atoms() {
            let w = a.rate * Self::exponent(ThetaPoint::new(theta1, 0.0), a.dx, 0)?.exp();
            if a.dy > 0 {
                up += w * a.dy as f64;
            } else if a.dy < 0 {
                down -= w * a.dy as f64;
            }
        }
        let guess = 0.5 * (down / up).ln();
        let deriv = |t2: f64| -> Result<(f64, f64)> {
            let e = self.eval_full(ThetaPoint::new(theta1, t2))?;
            Ok((e.grad[1], e.hessian.yy))
        };
        let (g0, _) = deriv(guess)?;
        if g0 == 0.0 {
            return Ok(guess);
        }
        // dM/dtheta2 is strictly increasing in theta2.
        let step = if g0 > 0.0 { -1.0 } else { 1.0 };
        let bound = if g0 > 0.0 { -MAX_EXPONENT } else { MAX_EXPONENT };
        let other = expand_until(guess, step, bound, |t| Ok(deriv(t)?.0.signum() != g0.signum()))?
            .ok_or(Error::NoSignChange { upper: bound })?;
        newton_bisect(deriv, guess, other)
    }

    /// Zeros `(lower, upper)` of `theta2 -> M(theta1, theta2)`, or `None` when
    /// the vertical line misses the level set `{M = 0}`.
    pub fn level_roots_theta2(&self, theta1: f64) -> Result<Option<(f64, f64)>> {
        let mid = self.rightmost_on_vertical_tangent(theta1)?;
        let f = |t2: f64| -> Result<(f64, f64)> {
            let e = self.eval_full(ThetaPoint::new(theta1, t2))?;
            Ok((e.value, e.grad[1]))
        };
        let fmid = f(mid)?.0;
        if fmid > 0.0 {
            return Ok(None);
        }
        if fmid == 0.0 {
            return Ok(Some((mid, mid)));
        }
        let lo_out = expand_until(mid, -0.5, mid - 2.0 * MAX_EXPONENT, |t| Ok(f(t)?.0 > 0.0))?
            .ok_or(Error::NoSignChange { upper: mid })?;
        let hi_out = expand_until(mid, 0.5, MAX_EXPONENT, |t| Ok(f(t)?.0 > 0.0))?
            .ok_or(Error::NoSignChange { upper: MAX_EXPONENT })?;
        let lower = newton_bisect(f, lo_out, mid)?;
        let upper = newton_bisect(f, mid, hi_out)?;
        Ok(Some((lower, upper)))
    }

    /// Whether `v` lies in the interior of the convex cone spanned by the
    /// jump vectors, the set where the Legendre transform is attained.
    pub fn velocity_attainable(&self, v: [f64; 2]) -> bool {
        let mut angles: Vec<f64> = self
            .measure
            .atoms()
            .iter()
            .map(|a| (a.dy as f64).atan2(a.dx as f64))
            .collect();
        angles.sort_by(|a, b| a.total_cmp(b));
        angles.dedup();
        let two_pi = std::f64::consts::TAU;
        // Largest angular gap between consecutive jump directions.
        let mut gap = (angles[0] + two_pi - angles[angles.len() - 1], angles[angles.len() - 1]);
        for w in angles.windows(2) {
            if w[1] - w[0] > gap.0 {
                gap = (w[1] - w[0], w[0]);
            }
        }
        let eps = 1e-12;
        if gap.0 < std::f64::consts::PI - eps {
            return true;
        }
        if v[0] == 0.0 && v[1] == 0.0 {
            return false;
        }
        // The closed cone is the complement of the open gap.
        let rel = (v[1].atan2(v[0]) - gap.1).rem_euclid(two_pi);
        rel > gap.0 + eps && rel < two_pi - eps
    }
}

/// Level curve `{M- = 0}` of the x-axis measure as a function of `theta1`:
///
/// ```text
/// exp(theta2) = (l1 + l2 + mu1* - l1 e^t1 - mu1* r10 e^-t1) / (l2 + mu1* r12 e^-t1)
/// ```
pub fn g_minus(params: &NetworkParams, theta1: f64) -> Result<f64> {
    let p = params;
    let e = theta1.exp();
    let ei = (-theta1).exp();
    let den = p.lambda2_bar + p.mu1_star * p.r12 * ei;
    if !(den > 0.0) {
        return Err(Error::OutOfRange { theta1 });
    }
    let num = p.lambda1_bar + p.lambda2_bar + p.mu1_star
        - p.lambda1_bar * e
        - p.mu1_star * p.r10() * ei;
    let z = num / den;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::OutOfRange { theta1 });
    }
    Ok(z.ln())
}
