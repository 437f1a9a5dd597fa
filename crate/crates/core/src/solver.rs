//! Rough large-deviation asymptotics of node 1 reaching a high level.
//!
//! Three candidate points on the egg `{M+ = 0}` decide the answer:
//!
//! * `theta_b`, the easternmost point (vertical tangent). Its first
//!   coordinate is the cost of the best path spending no time on the x-axis
//!   (a bridge).
//! * `theta_j`, the crossing of `{M- = 0}` with the lower arc of the egg
//!   between `theta_b` and the theta1-axis, or `theta_b` if there is none.
//!   It prices paths that jitter along the x-axis.
//! * `theta_c`, the egg point at height `log(1/rho2)` east of the vertical
//!   tangent, pricing cascade paths that first climb the y-axis; `theta_b`
//!   when no cascade exists.
//!
//! The regime follows from comparing second coordinates; the decay rate is
//! the first coordinate of the selected point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mgf::{g_minus, RegimeMgf, RegimeRole, ThetaPoint};
use crate::network::{
    boundary_jumps, classify_stability, interior_jumps, reversed_conditions, solve_traffic,
    y_boundary_jumps, NetworkParams, StabilityKind,
};
use crate::numeric::newton_bisect;

/// Absolute tolerance on second coordinates when comparing regimes; ties
/// report `Bridge`.
pub const REGIME_TIE_TOL: f64 = 1e-9;
/// A y-velocity within this (relative) distance of zero is not "strictly negative".
pub const V2_TOL: f64 = 1e-12;
/// Residual allowed when accepting a root of the jitter quadratic.
pub const LEVEL_RESIDUAL_TOL: f64 = 1e-10;

const THETA_B_EPS: f64 = 1e-8;
const THETA_B_CAP: f64 = 50.0;
const ARC_GRID: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Along the x-axis with a positive fraction of time on it.
    Jitter,
    /// Along the x-axis, skimming above it.
    Bridge,
    /// Up the y-axis first, then diagonally down to `(1, 0)`.
    Cascade,
    /// Straight through the interior to `(1, y)` with `y > 0`. Never optimal
    /// for the modified Jackson network; reachable for other models.
    Interior,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::Jitter => "Jitter",
            Regime::Bridge => "Bridge",
            Regime::Cascade => "Cascade",
            Regime::Interior => "Interior",
        };
        f.write_str(s)
    }
}

/// Lagrange multipliers of the three path-family programs at their optima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// Interior program: `u = theta2^b`.
    pub interior_u: f64,
    /// x-axis mixture program: `u1` (on `beta <= 1`), `u2`, `u3` (on the two
    /// velocity-balance constraints).
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    /// Cascade program: `u = log(1/rho2) - theta2^c`; `None` without a y-axis climb.
    pub cascade_u: Option<f64>,
}

/// Full analytic answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdAnalysis {
    pub theta_b: ThetaPoint,
    pub theta_j: ThetaPoint,
    pub theta_c: ThetaPoint,
    /// Crossing of `{M+ = 0}` and `{M~ = 0}`: the y-axis analogue of `theta_j`.
    pub theta_tilde: Option<ThetaPoint>,
    /// Cost per unit height of climbing the y-axis (`log(1/rho2)` for the
    /// modified Jackson network).
    pub y_climb_cost: Option<f64>,
    /// Ratio of upward to downward y-flow under the twist `theta_j`; below
    /// one exactly for a jitter path.
    pub rho: f64,
    pub regime: Regime,
    /// Minimal action, the exponential decay rate of the overflow probability.
    pub rate: f64,
    /// Fraction of time off the x-axis along the x-axis path (1 for bridges).
    pub beta: f64,
    /// Speed of the forward segment along the x-axis path.
    pub forward_speed: f64,
    pub v_plus: [f64; 2],
    pub v_minus: Option<[f64; 2]>,
    pub cascade_height: f64,
    /// `(v, -v h)` of the descending cascade segment.
    pub cascade_velocity: Option<[f64; 2]>,
    /// Optimum of the interior path family when it differs from `theta_b`.
    pub interior_point: Option<ThetaPoint>,
    pub multipliers: Multipliers,
    pub drift_interior: [f64; 2],
    pub drift_x_boundary: [f64; 2],
    pub drift_y_boundary: [f64; 2],
}

impl LdAnalysis {
    /// The predicates that must agree for the x-axis family: the jitter point
    /// sits strictly west of `theta_b`, `beta < 1`, `M-(theta_b) > 0` and `rho < 1`.
    pub fn jitter_predicates(&self, m_minus: &RegimeMgf) -> Result<[bool; 4]> {
        Ok([
            self.theta_j.theta1 < self.theta_b.theta1 - REGIME_TIE_TOL,
            self.beta < 1.0 - REGIME_TIE_TOL,
            m_minus.eval(self.theta_b)? > REGIME_TIE_TOL,
            self.rho < 1.0 - REGIME_TIE_TOL,
        ])
    }
}

/// The three log-MGFs of a quadrant random walk with two flat boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMgfs {
    pub interior: RegimeMgf,
    pub x_boundary: RegimeMgf,
    pub y_boundary: RegimeMgf,
}

impl ModelMgfs {
    pub fn jackson(params: &NetworkParams) -> Result<Self> {
        Ok(Self {
            interior: RegimeMgf::new(interior_jumps(params)?, RegimeRole::Interior)?,
            x_boundary: RegimeMgf::new(boundary_jumps(params)?, RegimeRole::XBoundary)?,
            y_boundary: RegimeMgf::new(y_boundary_jumps(params)?, RegimeRole::YBoundary)?,
        })
    }
}

fn profile(m_plus: &RegimeMgf, theta1: f64) -> Result<(f64, f64)> {
    let t2 = m_plus.rightmost_on_vertical_tangent(theta1)?;
    let e = m_plus.eval_full(ThetaPoint::new(theta1, t2))?;
    // Envelope theorem: d/dtheta1 min_theta2 M = dM/dtheta1 at the minimizer.
    Ok((e.value, e.grad[0]))
}

/// Easternmost point of the egg `{M+ <= 0}`: the unique point with
/// `theta1 > 0`, `dM+/dtheta2 = 0` and `M+ = 0`.
pub fn solve_theta_b(m_plus: &RegimeMgf) -> Result<ThetaPoint> {
    let mut lo = THETA_B_EPS;
    while profile(m_plus, lo)?.0 >= 0.0 {
        lo *= 4.0;
        if lo > THETA_B_CAP {
            return Err(Error::NoSignChange { upper: THETA_B_CAP });
        }
    }
    let mut hi = lo.max(0.125);
    loop {
        if profile(m_plus, hi)?.0 > 0.0 {
            break;
        }
        if hi >= THETA_B_CAP {
            return Err(Error::NoSignChange { upper: THETA_B_CAP });
        }
        lo = hi;
        hi = (2.0 * hi).min(THETA_B_CAP);
    }
    let theta1 = newton_bisect(|t| profile(m_plus, t), lo, hi)?;
    let theta2 = m_plus.rightmost_on_vertical_tangent(theta1)?;
    Ok(ThetaPoint::new(theta1, theta2))
}

/// Coefficients `(a, b, c)` of the quadratic in `x = exp(theta1)` whose
/// positive roots locate the non-trivial crossings of `{M+ = 0}` and `{M- = 0}`.
pub fn jitter_quadratic(params: &NetworkParams) -> (f64, f64, f64) {
    let (l1, l2) = (params.lambda1_bar, params.lambda2_bar);
    let (m1, m2, ms) = (params.mu1, params.mu2, params.mu1_star);
    let (r12, r21, r10, r20) = (params.r12, params.r21, params.r10(), params.r20());
    let help = ms - m1;
    let a = help * (l2 + l1 * r12) * l1 - l2 * m2 * (l2 * r21 + l1);
    let b = -help
        * (l2 * ms + ms * l1 * r12 + l2 * l2 + l1 * l1 * r12 + 2.0 * l1 * l2 * r12 + l1 * l2 * r10)
        + ms * l2 * m2 * (1.0 - 2.0 * r12 * r21)
        - ms * l1 * m2 * r12;
    let c = help * ms * r10 * (l2 + l1 * r12) + ms * ms * m2 * r12 * (r10 + r12 * r20);
    (a, b, c)
}

/// Real roots of `a x^2 + b x + c`, computed without cancellation.
pub fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    let (x1, x2) = (q / a, c / q);
    if x1 == x2 {
        vec![x1]
    } else {
        vec![x1, x2]
    }
}

/// Jitter point of the modified Jackson network from the quadratic; falls back
/// to `theta_b` when no root qualifies.
pub fn solve_theta_j(
    params: &NetworkParams,
    m_plus: &RegimeMgf,
    theta_b: ThetaPoint,
) -> Result<ThetaPoint> {
    let (a, b, c) = jitter_quadratic(params);
    let mut qualifying = Vec::new();
    for x in quadratic_roots(a, b, c) {
        if !(x > 1.0) {
            continue;
        }
        let theta1 = x.ln();
        let Ok(theta2) = g_minus(params, theta1) else {
            continue;
        };
        let theta = ThetaPoint::new(theta1, theta2);
        let Ok(e) = m_plus.eval_full(theta) else {
            continue;
        };
        let scale = e.scale.max(1.0);
        if e.value.abs() > LEVEL_RESIDUAL_TOL * scale {
            continue;
        }
        if e.grad[1] < -V2_TOL * scale {
            qualifying.push((x, theta));
        }
    }
    match qualifying.len() {
        0 => Ok(theta_b),
        1 => Ok(qualifying[0].1),
        _ => Err(Error::AmbiguousRoot {
            roots: qualifying.iter().map(|q| q.0).collect(),
        }),
    }
}

/// Newton polish of a crossing of `{f = 0}` and `{g = 0}`.
fn polish_crossing(f: &RegimeMgf, g: &RegimeMgf, start: ThetaPoint) -> Result<ThetaPoint> {
    let mut t = start;
    for _ in 0..20 {
        let ef = f.eval_full(t)?;
        let eg = g.eval_full(t)?;
        let det = ef.grad[0] * eg.grad[1] - ef.grad[1] * eg.grad[0];
        if det == 0.0 {
            break;
        }
        let d1 = (ef.value * eg.grad[1] - eg.value * ef.grad[1]) / det;
        let d2 = (ef.grad[0] * eg.value - eg.grad[0] * ef.value) / det;
        let next = ThetaPoint::new(t.theta1 - d1, t.theta2 - d2);
        let done = d1.abs() <= 4.0 * f64::EPSILON * t.theta1.abs().max(1e-12)
            && d2.abs() <= 4.0 * f64::EPSILON * t.theta2.abs().max(1e-12);
        t = next;
        if done {
            break;
        }
    }
    Ok(t)
}

/// Generic crossing of `{boundary = 0}` with the lower arc of the egg
/// `{interior = 0}` strictly between the theta1-axis side and `theta_b`,
/// found by tracing the arc on a grid and bisecting each sign change.
///
/// Returns `None` when no crossing has a strictly negative y-velocity.
pub fn boundary_crossing(
    m_plus: &RegimeMgf,
    m_boundary: &RegimeMgf,
    theta_b: ThetaPoint,
) -> Result<Option<ThetaPoint>> {
    let east = theta_b.theta1;
    if !(east > 0.0) {
        return Ok(None);
    }
    let lower = |t1: f64| -> Result<Option<f64>> {
        Ok(m_plus.level_roots_theta2(t1)?.map(|(lo, _)| lo))
    };
    let h = |t1: f64| -> Result<Option<f64>> {
        match lower(t1)? {
            Some(t2) => Ok(Some(m_boundary.eval(ThetaPoint::new(t1, t2))?)),
            None => Ok(None),
        }
    };
    let min_theta1 = 1e-6 * east;
    let mut samples = Vec::with_capacity(ARC_GRID);
    samples.push((east, m_boundary.eval(theta_b)?));
    for k in 1..ARC_GRID {
        let t1 = east * (1.0 - k as f64 / ARC_GRID as f64);
        if t1 < min_theta1 {
            break;
        }
        if let Some(v) = h(t1)? {
            samples.push((t1, v));
        }
    }
    let mut found: Vec<ThetaPoint> = Vec::new();
    for w in samples.windows(2) {
        let ((t_a, h_a), (t_b, h_b)) = (w[0], w[1]);
        if h_a.signum() == h_b.signum() && h_a != 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (t_b, t_a);
        let sign_lo = h_b.signum();
        while hi - lo > 1e-10 * east.max(1.0) {
            let mid = 0.5 * (lo + hi);
            match h(mid)? {
                Some(v) if v.signum() == sign_lo => lo = mid,
                Some(_) => hi = mid,
                None => break,
            }
        }
        let t1 = 0.5 * (lo + hi);
        let t2 = match lower(t1)? {
            Some(t2) => t2,
            None if hi == east => theta_b.theta2,
            None => continue,
        };
        let theta = polish_crossing(m_plus, m_boundary, ThetaPoint::new(t1, t2))?;
        let e = m_plus.eval_full(theta)?;
        let scale = e.scale.max(1.0);
        if theta.theta1 > min_theta1
            && theta.theta1 < east
            && e.grad[1] < -V2_TOL * scale
            && found
                .iter()
                .all(|f| (f.theta1 - theta.theta1).abs() > 1e-8 * east.max(1.0))
        {
            found.push(theta);
        }
    }
    match found.len() {
        0 => Ok(None),
        1 => Ok(Some(found[0])),
        _ => Err(Error::AmbiguousRoot {
            roots: found.iter().map(|t| t.theta1.exp()).collect(),
        }),
    }
}

/// The y-axis analogue of the jitter point: the crossing of `{M~ = 0}` with
/// the western arc of the egg above the theta2-axis.
pub fn y_axis_crossing(m_plus: &RegimeMgf, m_tilde: &RegimeMgf) -> Result<Option<ThetaPoint>> {
    let tp = m_plus.transposed();
    let north = solve_theta_b(&tp)?;
    Ok(boundary_crossing(&tp, &m_tilde.transposed(), north)?.map(ThetaPoint::swapped))
}

/// Cascade point of the modified Jackson network and the climb height `h`.
pub fn solve_theta_c(
    params: &NetworkParams,
    m_plus: &RegimeMgf,
    theta_b: ThetaPoint,
) -> Result<(ThetaPoint, f64)> {
    let t = solve_traffic(params)?;
    let (_, cond_2_3) = reversed_conditions(params)?;
    let climb = t.inv_rho2(params).ln();
    if !(cond_2_3 && climb < theta_b.theta2) {
        return Ok((theta_b, 0.0));
    }
    let theta_c = ThetaPoint::new(t.inv_rho1(params).ln(), climb);
    let [v1, v2] = m_plus.grad(theta_c)?;
    if !(v1 > 0.0) {
        return Err(Error::InternalInconsistency(format!(
            "cascade point has non-positive horizontal speed {v1}"
        )));
    }
    Ok((theta_c, -v2 / v1))
}

/// Generic cascade point for climb cost `climb`: the egg point at that height
/// east of the vertical tangent.
pub fn generic_theta_c(
    m_plus: &RegimeMgf,
    climb: Option<f64>,
    theta_b: ThetaPoint,
) -> Result<(ThetaPoint, f64)> {
    let Some(c) = climb else {
        return Ok((theta_b, 0.0));
    };
    if !(c < theta_b.theta2) {
        return Ok((theta_b, 0.0));
    }
    let Some((_, east)) = m_plus.transposed().level_roots_theta2(c)? else {
        return Ok((theta_b, 0.0));
    };
    let theta_c = ThetaPoint::new(east, c);
    let [v1, v2] = m_plus.grad(theta_c)?;
    if !(v1 > 0.0 && v2 < 0.0) {
        return Ok((theta_b, 0.0));
    }
    Ok((theta_c, -v2 / v1))
}

/// Optimum of the interior path family: `theta_b` when `theta2^b >= 0`,
/// otherwise the egg's crossing of the positive theta1-axis.
pub fn interior_candidate(m_plus: &RegimeMgf, theta_b: ThetaPoint) -> Result<ThetaPoint> {
    if theta_b.theta2 >= 0.0 {
        return Ok(theta_b);
    }
    match m_plus.transposed().level_roots_theta2(0.0)? {
        Some((_, east)) if east > 0.0 => Ok(ThetaPoint::new(east, 0.0)),
        _ => Ok(theta_b),
    }
}

/// Selects the regime by comparing second coordinates; returns it with the rate.
pub fn classify_regime(
    theta_b: ThetaPoint,
    theta_j: ThetaPoint,
    theta_c: ThetaPoint,
    cascade_height: f64,
    y_climb_cost: f64,
) -> Result<(Regime, f64)> {
    let (regime, rate) = if theta_j.theta2 < y_climb_cost.min(theta_b.theta2) - REGIME_TIE_TOL {
        (Regime::Jitter, theta_j.theta1)
    } else if y_climb_cost < theta_j.theta2.min(theta_b.theta2) - REGIME_TIE_TOL {
        if !(cascade_height > 0.0) {
            return Err(Error::InternalInconsistency(
                "cascade selected but no cascade point exists".into(),
            ));
        }
        (Regime::Cascade, theta_c.theta1)
    } else if theta_j.theta2.min(y_climb_cost) < theta_b.theta2 - REGIME_TIE_TOL {
        // Jitter and cascade tie below theta_b: both points coincide and the
        // bridge label only records the tie.
        let rate = if cascade_height > 0.0 {
            theta_j.theta1.min(theta_c.theta1)
        } else {
            theta_j.theta1
        };
        (Regime::Bridge, rate)
    } else {
        (Regime::Bridge, theta_b.theta1)
    };
    let floor = theta_b.theta1.min(theta_j.theta1).min(theta_c.theta1);
    if rate > floor + REGIME_TIE_TOL {
        return Err(Error::InternalInconsistency(format!(
            "{regime} rate {rate} exceeds the smallest candidate {floor}"
        )));
    }
    Ok((regime, rate))
}

struct Candidates {
    theta_b: ThetaPoint,
    theta_j: ThetaPoint,
    theta_c: ThetaPoint,
    height: f64,
    theta_tilde: Option<ThetaPoint>,
    climb: Option<f64>,
    /// Climb cost used by the regime comparison (may differ from `climb`
    /// when no y-axis jitter exists).
    compare_climb: f64,
}

fn assemble(m: &ModelMgfs, c: Candidates) -> Result<LdAnalysis> {
    let (mut regime, mut rate) = classify_regime(
        c.theta_b,
        c.theta_j,
        c.theta_c,
        c.height,
        c.compare_climb,
    )?;
    let interior = interior_candidate(&m.interior, c.theta_b)?;
    let interior_point = (interior != c.theta_b).then_some(interior);
    if let Some(p) = interior_point {
        if p.theta1 < rate - REGIME_TIE_TOL {
            regime = Regime::Interior;
            rate = p.theta1;
        }
    }

    let jitter = c.theta_j != c.theta_b;
    let e_plus = m.interior.eval_full(c.theta_j)?;
    let v_plus_j = e_plus.grad;
    let (beta, forward_speed, v_minus) = if jitter {
        let vm = m.x_boundary.grad(c.theta_j)?;
        let beta = vm[1] / (vm[1] - v_plus_j[1]);
        (beta, beta * v_plus_j[0] + (1.0 - beta) * vm[0], Some(vm))
    } else {
        (1.0, v_plus_j[0], None)
    };
    let rho = m.interior.vertical_balance(c.theta_j)?;

    let (u1, u2, u3) = if jitter {
        (0.0, c.theta_j.theta1 / forward_speed, c.theta_j.theta2 / forward_speed)
    } else {
        (
            m.x_boundary.eval(c.theta_b)? / forward_speed,
            c.theta_b.theta1 / forward_speed,
            c.theta_b.theta2 / forward_speed,
        )
    };
    let cascade_velocity = if c.height > 0.0 {
        Some(m.interior.grad(c.theta_c)?)
    } else {
        None
    };
    let v_plus = match regime {
        Regime::Cascade => m.interior.grad(c.theta_c)?,
        Regime::Interior => m.interior.grad(interior)?,
        _ => v_plus_j,
    };
    Ok(LdAnalysis {
        theta_b: c.theta_b,
        theta_j: c.theta_j,
        theta_c: c.theta_c,
        theta_tilde: c.theta_tilde,
        y_climb_cost: c.climb,
        rho,
        regime,
        rate,
        beta,
        forward_speed,
        v_plus,
        v_minus,
        cascade_height: c.height,
        cascade_velocity,
        interior_point,
        multipliers: Multipliers {
            interior_u: c.theta_b.theta2,
            u1,
            u2,
            u3,
            cascade_u: c.climb.map(|k| k - c.theta_c.theta2),
        },
        drift_interior: m.interior.measure().mean_drift(),
        drift_x_boundary: m.x_boundary.measure().mean_drift(),
        drift_y_boundary: m.y_boundary.measure().mean_drift(),
    })
}

/// Full analysis of a stable modified Jackson network.
pub fn analyze(params: &NetworkParams) -> Result<LdAnalysis> {
    let stability = classify_stability(params)?;
    if stability.kind != StabilityKind::Stable {
        return Err(Error::RejectsUnstable(stability.kind));
    }
    let t = solve_traffic(params)?;
    let m = ModelMgfs::jackson(params)?;
    let theta_b = solve_theta_b(&m.interior)?;
    let theta_j = solve_theta_j(params, &m.interior, theta_b)?;
    let (theta_c, height) = solve_theta_c(params, &m.interior, theta_b)?;
    let (_, cond_2_3) = reversed_conditions(params)?;
    let climb = t.inv_rho2(params).ln();
    let theta_tilde = cond_2_3.then(|| {
        ThetaPoint::new(
            (params.r10() + params.r12 * t.inv_rho2(params)).ln(),
            climb,
        )
    });
    assemble(
        &m,
        Candidates {
            theta_b,
            theta_j,
            theta_c,
            height,
            theta_tilde,
            climb: Some(climb),
            compare_climb: climb,
        },
    )
}

/// Analysis of an arbitrary quadrant walk with flat boundaries, using arc
/// tracing for the jitter points instead of closed forms.
pub fn analyze_generic(m: &ModelMgfs) -> Result<LdAnalysis> {
    let theta_b = solve_theta_b(&m.interior)?;
    let theta_j = boundary_crossing(&m.interior, &m.x_boundary, theta_b)?.unwrap_or(theta_b);
    let theta_tilde = y_axis_crossing(&m.interior, &m.y_boundary)?;
    let climb = theta_tilde.map(|t| t.theta2);
    let (theta_c, height) = generic_theta_c(&m.interior, climb, theta_b)?;
    assemble(
        m,
        Candidates {
            theta_b,
            theta_j,
            theta_c,
            height,
            theta_tilde,
            climb,
            compare_climb: climb.unwrap_or(f64::INFINITY),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    /// Jitter up the y-axis; the climb speed is not determined.
    Climb,
    /// The costly segment that reaches `x = 1`.
    Forward,
    /// Zero-cost return along the natural drift.
    Drift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub id: usize,
    pub kind: SegmentKind,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub velocity: Option<[f64; 2]>,
    pub beta: Option<f64>,
    pub v_plus: Option<[f64; 2]>,
    pub v_minus: Option<[f64; 2]>,
}

/// Optimal fluid path in the unit-scaled plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidPath {
    pub regime: Regime,
    pub segments: Vec<PathSegment>,
}

const PATH_EPS: f64 = 1e-12;

fn drift_step(a: &LdAnalysis, p: [f64; 2]) -> Result<([f64; 2], [f64; 2])> {
    let dp = a.drift_interior;
    let on_x = p[1] <= PATH_EPS;
    let on_y = p[0] <= PATH_EPS;
    let bad = || Error::InternalInconsistency(format!("drift path stalls at {p:?}"));
    if on_x && on_y {
        return Err(bad());
    }
    if on_x {
        let dm = a.drift_x_boundary;
        if dp[1] > 0.0 {
            return interior_leg(dp, p).ok_or_else(bad);
        }
        let w1 = if dm[1] > 0.0 && dp[1] < 0.0 {
            let b0 = dm[1] / (dm[1] - dp[1]);
            b0 * dp[0] + (1.0 - b0) * dm[0]
        } else {
            dm[0]
        };
        if !(w1 < 0.0) {
            return Err(bad());
        }
        return Ok(([w1, 0.0], [0.0, 0.0]));
    }
    if on_y {
        let dt = a.drift_y_boundary;
        if dp[0] > 0.0 {
            return interior_leg(dp, p).ok_or_else(bad);
        }
        let w2 = if dt[0] > 0.0 && dp[0] < 0.0 {
            let b0 = dt[0] / (dt[0] - dp[0]);
            b0 * dp[1] + (1.0 - b0) * dt[1]
        } else {
            dt[1]
        };
        if !(w2 < 0.0) {
            return Err(bad());
        }
        return Ok(([0.0, w2], [0.0, 0.0]));
    }
    interior_leg(dp, p).ok_or_else(bad)
}

fn interior_leg(d: [f64; 2], p: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
    let tx = if d[1] < 0.0 { p[1] / -d[1] } else { f64::INFINITY };
    let ty = if d[0] < 0.0 { p[0] / -d[0] } else { f64::INFINITY };
    let t = tx.min(ty);
    if !t.is_finite() || t <= 0.0 {
        return None;
    }
    let mut end = [p[0] + t * d[0], p[1] + t * d[1]];
    if tx <= ty {
        end[1] = 0.0;
    }
    if ty <= tx {
        end[0] = 0.0;
    }
    Some((d, [end[0].max(0.0), end[1].max(0.0)]))
}

/// Piecewise-linear optimal path: the costly approach to `x = 1` followed by
/// the drift path back to the origin.
pub fn fluid_path(a: &LdAnalysis) -> Result<FluidPath> {
    let mut segments = Vec::new();
    let mut push = |kind, start, end, velocity, beta, v_plus, v_minus| {
        let id = segments.len();
        segments.push(PathSegment {
            id,
            kind,
            start,
            end,
            velocity,
            beta,
            v_plus,
            v_minus,
        });
    };
    let end = match a.regime {
        Regime::Cascade => {
            let h = a.cascade_height;
            push(SegmentKind::Climb, [0.0, 0.0], [0.0, h], None, None, None, None);
            push(
                SegmentKind::Forward,
                [0.0, h],
                [1.0, 0.0],
                a.cascade_velocity,
                None,
                None,
                None,
            );
            [1.0, 0.0]
        }
        Regime::Interior => {
            let v = a.v_plus;
            let end = [1.0, v[1] / v[0]];
            push(SegmentKind::Forward, [0.0, 0.0], end, Some(v), None, None, None);
            end
        }
        Regime::Jitter | Regime::Bridge => {
            let jitter = a.regime == Regime::Jitter;
            push(
                SegmentKind::Forward,
                [0.0, 0.0],
                [1.0, 0.0],
                Some([a.forward_speed, 0.0]),
                Some(if jitter { a.beta } else { 1.0 }),
                jitter.then_some(a.v_plus),
                if jitter { a.v_minus } else { None },
            );
            [1.0, 0.0]
        }
    };
    let mut p = end;
    for _ in 0..32 {
        if p[0].abs() <= PATH_EPS && p[1].abs() <= PATH_EPS {
            break;
        }
        let (v, next) = drift_step(a, p)?;
        push(SegmentKind::Drift, p, next, Some(v), None, None, None);
        p = next;
    }
    if p[0].abs() > PATH_EPS || p[1].abs() > PATH_EPS {
        return Err(Error::InternalInconsistency(
            "drift path did not return to the origin".into(),
        ));
    }
    Ok(FluidPath {
        regime: a.regime,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(l1: f64, l2: f64, m1: f64, m2: f64, ms: f64, r12: f64, r21: f64) -> NetworkParams {
        NetworkParams::new(l1, l2, m1, m2, ms, r12, r21).unwrap()
    }

    #[test]
    fn decoupled_theta_b_closed_form() {
        let params = p(1.0, 1.0, 2.0, 4.0, 2.0, 0.0, 0.0);
        let m = ModelMgfs::jackson(&params).unwrap();
        let tb = solve_theta_b(&m.interior).unwrap();
        assert!((tb.theta1 - (2.0 + 2f64.sqrt()).ln()).abs() < 1e-12);
        assert!((tb.theta2 - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn profile_nonpositive_at_zero() {
        let params = p(1.0, 0.6, 2.0, 2.5, 3.0, 0.3, 0.2);
        let m = ModelMgfs::jackson(&params).unwrap();
        assert!(profile(&m.interior, 0.0).unwrap().0 <= 0.0);
    }

    #[test]
    fn quadratic_roots_are_stable() {
        let r = quadratic_roots(1.0, -1e8, 1.0);
        assert_eq!(r.len(), 2);
        assert!((r[0] - 1e8).abs() / 1e8 < 1e-15);
        assert!((r[1] - 1e-8).abs() / 1e-8 < 1e-15);
        assert_eq!(quadratic_roots(0.0, 2.0, -4.0), vec![2.0]);
        assert!(quadratic_roots(1.0, 0.0, 1.0).is_empty());
    }

    #[test]
    fn jackson_jitter_closed_form() {
        let params = p(1.0, 0.5, 2.0, 2.5, 2.0, 0.3, 0.2);
        let t = solve_traffic(&params).unwrap();
        let a = analyze(&params).unwrap();
        assert_eq!(a.regime, Regime::Jitter);
        assert!((a.rate - t.inv_rho1(&params).ln()).abs() < 1e-10);
        let z2 = params.r20() + params.r21 * t.inv_rho1(&params);
        assert!((a.theta_j.theta2 - z2.ln()).abs() < 1e-10);
        assert!(a.beta > 0.0 && a.beta < 1.0);
        assert!(a.rho < 1.0);
    }

    #[test]
    fn unstable_is_rejected() {
        let params = p(0.5, 2.0, 5.0, 1.5, 5.0, 0.0, 0.0);
        assert!(matches!(
            analyze(&params),
            Err(Error::RejectsUnstable(StabilityKind::Transient))
        ));
    }

    #[test]
    fn tie_reports_bridge() {
        let tb = ThetaPoint::new(1.0, 0.5);
        let tj = ThetaPoint::new(1.0 - 1e-12, 0.5 - 1e-11);
        let (r, rate) = classify_regime(tb, tj, tb, 0.0, 2.0).unwrap();
        assert_eq!(r, Regime::Bridge);
        assert_eq!(rate, 1.0);
        let tc = ThetaPoint::new(0.9, 0.3);
        let tj = ThetaPoint::new(0.9, 0.3 + 1e-12);
        let (r, rate) = classify_regime(tb, tj, tc, 0.2, 0.3).unwrap();
        assert_eq!(r, Regime::Bridge);
        assert_eq!(rate, 0.9);
    }

    #[test]
    fn inconsistent_selection_is_surfaced() {
        // Jitter selected but its theta1 exceeds the cascade candidate.
        let tb = ThetaPoint::new(1.0, 0.5);
        let tj = ThetaPoint::new(0.9, 0.1);
        let tc = ThetaPoint::new(0.5, 0.3);
        assert!(matches!(
            classify_regime(tb, tj, tc, 0.2, 0.3),
            Err(Error::InternalInconsistency(_))
        ));
    }
}
