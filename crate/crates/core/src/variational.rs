//! Direct numerical minimization of the path-family actions.
//!
//! Everything here works from the jump measures alone: local rate functions
//! come from Legendre transforms solved by Newton's method, and each family
//! is minimized by a grid scan followed by pattern search. The closed forms
//! in [`crate::solver`] are never consulted, which makes this module a check
//! on them.
//!
//! Each family is written in perspective form so that the search runs over a
//! jointly convex objective. With `tau = 1 / v1`:
//!
//! ```text
//! interior  tau L+((1, d) / tau),                     d >= 0
//! mixture   a L+(w / a) + b L-(((1, 0) - w) / b),     a, b > 0
//! cascade   h c + tau L+((1, -h) / tau),              h >= 0
//! ```
//!
//! where `a = beta / v1` and `b = (1 - beta) / v1`. The bridge face `b = 0`
//! of the mixture is scanned separately.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mgf::{RegimeMgf, ThetaPoint};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-12;
const GRID_2D: usize = 200;
const GRID_4D: usize = 12;
const MIN_STEP: f64 = 1e-8;
const FACE_TIE: f64 = 1e-10;
/// Residual bound used by the KKT checks.
pub const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendreResult {
    pub v: [f64; 2],
    pub theta_of_v: ThetaPoint,
    /// `theta . v - M(theta)`.
    pub value: f64,
}

fn norm(r: [f64; 2]) -> f64 {
    r[0].hypot(r[1])
}

/// Local rate function `sup_theta (theta . v - M(theta))` and its maximizer.
pub fn legendre(m: &RegimeMgf, v: [f64; 2]) -> Result<LegendreResult> {
    if !v[0].is_finite() || !v[1].is_finite() || !m.velocity_attainable(v) {
        return Err(Error::Unattainable { v1: v[0], v2: v[1] });
    }
    let scale = 1f64
        .max(v[0].abs())
        .max(v[1].abs())
        .max(m.measure().total_rate());
    let mut theta = ThetaPoint::ORIGIN;
    let mut e = m.eval_full(theta)?;
    let mut res = norm([e.grad[0] - v[0], e.grad[1] - v[1]]);
    for _ in 0..NEWTON_MAX_ITER {
        if res <= NEWTON_TOL * scale {
            break;
        }
        let Some(d) = e.hessian.solve([v[0] - e.grad[0], v[1] - e.grad[1]]) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = ThetaPoint::new(theta.theta1 + t * d[0], theta.theta2 + t * d[1]);
            if let Ok(ec) = m.eval_full(cand) {
                let rc = norm([ec.grad[0] - v[0], ec.grad[1] - v[1]]);
                if rc < res {
                    theta = cand;
                    e = ec;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // Roundoff can stall the last digits; 1e-10 is the contract.
    if res > 100.0 * NEWTON_TOL * scale {
        return Err(Error::NonConverged {
            iterations: NEWTON_MAX_ITER,
            residual: res,
        });
    }
    let value = theta.theta1 * v[0] + theta.theta2 * v[1] - e.value;
    Ok(LegendreResult {
        v,
        theta_of_v: theta,
        value: value.max(0.0),
    })
}

fn rate(m: &RegimeMgf, v: [f64; 2]) -> f64 {
    legendre(m, v).map_or(f64::INFINITY, |r| r.value)
}

/// Hooke-Jeeves pattern search with box bounds.
fn pattern_search<F>(f: &F, x0: &[f64], step0: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..x.len() {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let explore = |base: &[f64], fb: f64, step: &[f64]| -> (Vec<f64>, f64) {
        let mut x = base.to_vec();
        let mut fx = fb;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + dir * step[i]).clamp(lo[i], hi[i]);
                if y[i] == x[i] {
                    continue;
                }
                let fy = f(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    break;
                }
            }
        }
        (x, fx)
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut fx = f(&x);
    let mut step = step0.to_vec();
    let mut evals = 0usize;
    while step.iter().any(|&s| s > MIN_STEP) && evals < 200_000 {
        evals += 2 * x.len();
        let (mut y, mut fy) = explore(&x, fx, &step);
        if fy < fx {
            loop {
                let mut p: Vec<f64> = y.iter().zip(&x).map(|(yi, xi)| 2.0 * yi - xi).collect();
                clamp(&mut p);
                x = y;
                fx = fy;
                let fp = f(&p);
                let (z, fz) = explore(&p, fp, &step);
                evals += 2 * x.len() + 1;
                if fz < fx {
                    y = z;
                    fy = fz;
                } else {
                    break;
                }
            }
        } else {
            for s in &mut step {
                *s *= 0.5;
            }
        }
    }
    (x, fx)
}

/// Regular grid over a box; `axes[i]` lists the coordinates along axis `i`.
struct Grid {
    axes: Vec<Vec<f64>>,
}

impl Grid {
    fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    fn index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for i in (0..self.axes.len()).rev() {
            idx[i] = k % self.axes[i].len();
            k /= self.axes[i].len();
        }
        idx
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, ax)| acc * ax.len() + i)
    }

    fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(&i, ax)| ax[i]).collect()
    }

    /// Objective at every node, evaluated in parallel.
    fn evaluate<F: Fn(&[f64]) -> f64 + Sync>(&self, f: &F) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|k| f(&self.point(&self.index(k))))
            .collect()
    }

    /// Up to `k` finite local minima of the grid values, best first, ties
    /// broken by index so the result does not depend on evaluation order.
    fn local_minima(&self, values: &[f64], k: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..values.len())
            .filter(|&i| {
                let v = values[i];
                if !v.is_finite() {
                    return false;
                }
                let idx = self.index(i);
                (0..idx.len()).all(|a| {
                    [-1isize, 1].iter().all(|&d| {
                        let j = idx[a] as isize + d;
                        if j < 0 || j as usize >= self.axes[a].len() {
                            return true;
                        }
                        let mut n = idx.clone();
                        n[a] = j as usize;
                        values[self.flat(&n)] >= v
                    })
                })
            })
            .collect();
        out.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        out.truncate(k);
        out
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Result of one family minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMin<A> {
    pub value: f64,
    pub argmin: A,
    /// Values of further, distinct local minima (should be empty).
    pub other_minima: Vec<f64>,
}

/// Refines from the best few grid minima; keeps the best and reports others.
fn refine<F>(
    f: &F,
    grid: &Grid,
    values: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> Option<(Vec<f64>, f64, Vec<f64>)>
where
    F: Fn(&[f64]) -> f64,
{
    let starts = grid.local_minima(values, 3);
    let mut results: Vec<(Vec<f64>, f64)> = Vec::new();
    for s in starts {
        let idx = grid.index(s);
        let x0 = grid.point(&idx);
        let step: Vec<f64> = grid
            .axes
            .iter()
            .map(|ax| (ax[ax.len() - 1] - ax[0]) / (ax.len() - 1) as f64)
            .collect();
        results.push(pattern_search(f, &x0, &step, lo, hi));
    }
    results.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (best_x, best_f) = results.first()?.clone();
    let mut others: Vec<f64> = Vec::new();
    for (x, fx) in results.iter().skip(1) {
        let far = x.iter().zip(&best_x).any(|(a, b)| (a - b).abs() > 1e-3);
        if far && fx - best_f > 1e-7 && others.iter().all(|o| (o - fx).abs() > 1e-7) {
            others.push(*fx);
        }
    }
    Some((best_x, best_f, others))
}

fn speed_range(m: &RegimeMgf) -> (f64, f64) {
    let r = m.measure().total_rate();
    (1e-3 * r, 10.0 * r)
}

const MAX_ANGLE: f64 = 0.49 * std::f64::consts::PI;

/// Minimal interior action `min L+(v) / v1` over `v1 > 0`, `v2 >= 0`.
pub fn min_interior_action(m_plus: &RegimeMgf) -> Result<OracleMin<[f64; 2]>> {
    let (vlo, vhi) = speed_range(m_plus);
    // x = (ln tau, d2).
    let f = |x: &[f64]| {
        let tau = x[0].exp();
        tau * rate(m_plus, [1.0 / tau, x[1] / tau])
    };
    let grid = Grid {
        axes: vec![
            logspace(1.0 / vhi, 1.0 / vlo, GRID_2D),
            linspace(0.0, MAX_ANGLE, GRID_2D).into_iter().map(f64::tan).collect(),
        ],
    };
    let values = grid.evaluate(&f);
    let lo = [grid.axes[0][0] - 5.0, 0.0];
    let hi = [grid.axes[0][GRID_2D - 1] + 5.0, 1e3];
    let (x, value, other_minima) = refine(&f, &grid, &values, &lo, &hi)
        .ok_or_else(|| Error::InternalInconsistency("interior objective is nowhere finite".into()))?;
    let tau = x[0].exp();
    Ok(OracleMin {
        value,
        argmin: [1.0 / tau, x[1] / tau],
        other_minima,
    })
}

/// Argmin of the x-axis mixture family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureArgmin {
    /// Fraction of time off the boundary.
    pub beta: f64,
    pub v1: f64,
    pub v_plus: [f64; 2],
    /// `None` on the bridge face `beta = 1`.
    pub v_minus: Option<[f64; 2]>,
}

/// Minimal action of paths along the x-axis mixing interior velocity `v+`
/// (fraction `beta`) with boundary velocity `v-`.
pub fn min_mixture_action(
    m_plus: &RegimeMgf,
    m_minus: &RegimeMgf,
) -> Result<OracleMin<MixtureArgmin>> {
    let (vlo, vhi) = speed_range(m_plus);
    let (tlo, thi) = ((1.0 / vhi).ln(), (1.0 / vlo).ln());

    // Bridge face: x = (ln a).
    let face = |x: &[f64]| {
        let a = x[0].exp();
        a * rate(m_plus, [1.0 / a, 0.0])
    };
    let face_grid = Grid {
        axes: vec![linspace(tlo, thi, GRID_2D)],
    };
    let face_values = face_grid.evaluate(&face);
    let (fx, f_face, _) = refine(
        &face,
        &face_grid,
        &face_values,
        &[tlo - 5.0],
        &[thi + 5.0],
    )
    .ok_or_else(|| Error::InternalInconsistency("bridge objective is nowhere finite".into()))?;

    // Interior of the mixture: x = (ln a, ln b, w1, w2) with w2 < 0.
    let mix = |x: &[f64]| {
        let (a, b) = (x[0].exp(), x[1].exp());
        let (w1, w2) = (x[2], x[3]);
        a * rate(m_plus, [w1 / a, w2 / a]) + b * rate(m_minus, [(1.0 - w1) / b, -w2 / b])
    };
    let grid = Grid {
        axes: vec![
            linspace(tlo, thi, GRID_4D),
            linspace(tlo, thi, GRID_4D),
            linspace(-1.0, 2.0, GRID_4D),
            logspace(1e-3, 3.0, GRID_4D).into_iter().map(|l| -l.exp()).collect(),
        ],
    };
    let values = grid.evaluate(&mix);
    let lo = [tlo - 10.0, tlo - 30.0, -1e3, -1e3];
    let hi = [thi + 10.0, thi + 10.0, 1e3, -1e-300];
    let mixed = refine(&mix, &grid, &values, &lo, &hi);

    let bridge = || {
        let a = fx[0].exp();
        MixtureArgmin {
            beta: 1.0,
            v1: 1.0 / a,
            v_plus: [1.0 / a, 0.0],
            v_minus: None,
        }
    };
    let out = match mixed {
        Some((x, f_mix, other_minima)) if f_mix < f_face - FACE_TIE => {
            let (a, b) = (x[0].exp(), x[1].exp());
            OracleMin {
                value: f_mix,
                argmin: MixtureArgmin {
                    beta: a / (a + b),
                    v1: 1.0 / (a + b),
                    v_plus: [x[2] / a, x[3] / a],
                    v_minus: Some([(1.0 - x[2]) / b, -x[3] / b]),
                },
                other_minima,
            }
        }
        _ => OracleMin {
            value: f_face,
            argmin: bridge(),
            other_minima: Vec::new(),
        },
    };
    Ok(out)
}

/// Cost per unit height of reaching `(0, h)`: the y-axis mixture problem,
/// solved on the transposed measures.
pub fn y_climb_cost(m_plus: &RegimeMgf, m_tilde: &RegimeMgf) -> Result<f64> {
    Ok(min_mixture_action(&m_plus.transposed(), &m_tilde.transposed())?.value)
}

/// Argmin of the cascade family: climb height `h` and horizontal speed `v`
/// of the descent with velocity `(v, -v h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeArgmin {
    pub h: f64,
    pub v: f64,
}

/// Minimal action `h c + L+(v, -v h) / v` over `h >= 0`, `v > 0`, where `c`
/// is the climb cost per unit height.
pub fn min_cascade_action(m_plus: &RegimeMgf, climb_cost: f64) -> Result<OracleMin<CascadeArgmin>> {
    let (vlo, vhi) = speed_range(m_plus);
    // x = (ln tau, h).
    let f = |x: &[f64]| {
        let tau = x[0].exp();
        x[1] * climb_cost + tau * rate(m_plus, [1.0 / tau, -x[1] / tau])
    };
    let grid = Grid {
        axes: vec![
            logspace(1.0 / vhi, 1.0 / vlo, GRID_2D),
            linspace(0.0, MAX_ANGLE, GRID_2D).into_iter().map(f64::tan).collect(),
        ],
    };
    let values = grid.evaluate(&f);
    let lo = [grid.axes[0][0] - 5.0, 0.0];
    let hi = [grid.axes[0][GRID_2D - 1] + 5.0, 1e3];
    let (x, value, other_minima) = refine(&f, &grid, &values, &lo, &hi)
        .ok_or_else(|| Error::InternalInconsistency("cascade objective is nowhere finite".into()))?;
    Ok(OracleMin {
        value,
        argmin: CascadeArgmin {
            h: x[1],
            v: 1.0 / x[0].exp(),
        },
        other_minima,
    })
}

/// Largest residual of the interior optimality system at velocity `v`:
/// `grad M+(theta) = v`, `M+(theta) = 0`, `u = theta2 >= 0`, `u v2 = 0`, `v2 >= 0`.
pub fn kkt_interior(m_plus: &RegimeMgf, v: [f64; 2]) -> Result<f64> {
    let l = legendre(m_plus, v)?;
    let th = l.theta_of_v;
    let u = th.theta2;
    Ok([
        m_plus.eval(th)?.abs(),
        (-u).max(0.0),
        (u * v[1]).abs(),
        (-v[1]).max(0.0),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

/// Largest residual of the mixture optimality system. Off the bridge face
/// both pieces share one twist lying on both level curves and the mean
/// velocity is horizontal; on the face the twist lies on `{M+ = 0}` with
/// `M-(theta) <= 0`, so that leaving the face does not pay.
pub fn kkt_mixture(m_plus: &RegimeMgf, m_minus: &RegimeMgf, arg: &MixtureArgmin) -> Result<f64> {
    let lp = legendre(m_plus, arg.v_plus)?;
    let tp = lp.theta_of_v;
    match arg.v_minus {
        Some(vm) if arg.beta < 1.0 => {
            let tm = legendre(m_minus, vm)?.theta_of_v;
            let b = arg.beta;
            Ok([
                (tp.theta1 - tm.theta1).abs(),
                (tp.theta2 - tm.theta2).abs(),
                m_plus.eval(tp)?.abs(),
                m_minus.eval(tm)?.abs(),
                (b * arg.v_plus[1] + (1.0 - b) * vm[1]).abs(),
                (b * arg.v_plus[0] + (1.0 - b) * vm[0] - arg.v1).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max))
        }
        _ => Ok([
            m_plus.eval(tp)?.abs(),
            arg.v_plus[1].abs(),
            m_minus.eval(tp)?.max(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)),
    }
}

/// Largest residual of the cascade optimality system: `M+(theta) = 0`,
/// `u = c - theta2 >= 0`, `u h = 0`.
pub fn kkt_cascade(m_plus: &RegimeMgf, climb_cost: f64, arg: &CascadeArgmin) -> Result<f64> {
    let th = legendre(m_plus, [arg.v, -arg.v * arg.h])?.theta_of_v;
    let u = climb_cost - th.theta2;
    Ok([
        m_plus.eval(th)?.abs(),
        (-u).max(0.0),
        (u * arg.h).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{boundary_jumps, interior_jumps, NetworkParams};
    use crate::mgf::RegimeRole;

    fn mgfs(p: &NetworkParams) -> (RegimeMgf, RegimeMgf) {
        (
            RegimeMgf::new(interior_jumps(p).unwrap(), RegimeRole::Interior).unwrap(),
            RegimeMgf::new(boundary_jumps(p).unwrap(), RegimeRole::XBoundary).unwrap(),
        )
    }

    fn scalar_rate(l: f64, mu: f64, v: f64) -> f64 {
        let z = (v + (v * v + 4.0 * l * mu).sqrt()) / (2.0 * l);
        v * z.ln() - l * (z - 1.0) - mu * (1.0 / z - 1.0)
    }

    #[test]
    fn drift_has_zero_cost() {
        let p = NetworkParams::new(1.0, 0.5, 2.0, 2.5, 3.0, 0.3, 0.2).unwrap();
        let (mp, _) = mgfs(&p);
        let l = legendre(&mp, mp.grad(ThetaPoint::ORIGIN).unwrap()).unwrap();
        assert!(l.value.abs() < 1e-14);
        assert!(l.theta_of_v.theta1.abs() < 1e-12 && l.theta_of_v.theta2.abs() < 1e-12);
    }

    #[test]
    fn decoupled_rate_is_sum_of_scalar_rates() {
        let p = NetworkParams::new(1.0, 1.0, 2.0, 4.0, 2.0, 0.0, 0.0).unwrap();
        let (mp, _) = mgfs(&p);
        for v in [[0.5, 0.5], [3.0, -2.0], [-1.0, 7.0], [10.0, 10.0]] {
            let want = scalar_rate(1.0, 2.0, v[0]) + scalar_rate(1.0, 4.0, v[1]);
            let got = legendre(&mp, v).unwrap().value;
            assert!((got - want).abs() < 1e-10 * want.max(1.0), "{v:?}: {got} vs {want}");
        }
    }

    #[test]
    fn boundary_rate_needs_upward_velocity() {
        let p = NetworkParams::new(1.0, 0.5, 2.0, 2.5, 3.0, 0.3, 0.2).unwrap();
        let (_, mm) = mgfs(&p);
        assert!(matches!(legendre(&mm, [1.0, 0.0]), Err(Error::Unattainable { .. })));
        assert!(matches!(legendre(&mm, [1.0, -0.1]), Err(Error::Unattainable { .. })));
        assert!(legendre(&mm, [1.0, 0.1]).is_ok());
    }

    #[test]
    fn gradient_of_rate_is_theta() {
        let p = NetworkParams::new(1.0, 0.5, 2.0, 2.5, 3.0, 0.3, 0.2).unwrap();
        let (mp, _) = mgfs(&p);
        let v = [1.3, -0.4];
        let th = legendre(&mp, v).unwrap().theta_of_v;
        let h = 1e-5;
        let d1 = (rate(&mp, [v[0] + h, v[1]]) - rate(&mp, [v[0] - h, v[1]])) / (2.0 * h);
        let d2 = (rate(&mp, [v[0], v[1] + h]) - rate(&mp, [v[0], v[1] - h])) / (2.0 * h);
        assert!((d1 - th.theta1).abs() < 1e-7);
        assert!((d2 - th.theta2).abs() < 1e-7);
    }

    #[test]
    fn decoupled_interior_minimum() {
        let p = NetworkParams::new(1.0, 1.0, 2.0, 4.0, 2.0, 0.0, 0.0).unwrap();
        let (mp, _) = mgfs(&p);
        let r = min_interior_action(&mp).unwrap();
        assert!((r.value - (2.0 + 2f64.sqrt()).ln()).abs() < 1e-6);
        assert!(r.argmin[1].abs() < 1e-6);
        assert!(kkt_interior(&mp, r.argmin).unwrap() < KKT_TOL);
    }

    #[test]
    fn pattern_search_respects_bounds() {
        let f = |x: &[f64]| (x[0] + 1.0).powi(2) + (x[1] - 2.0).powi(2);
        let (x, fx) = pattern_search(&f, &[3.0, 3.0], &[1.0, 1.0], &[0.0, -5.0], &[5.0, 5.0]);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.0).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-12);
    }
}
