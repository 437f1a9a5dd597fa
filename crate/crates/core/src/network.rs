//! The two-node modified Jackson network: parameters, traffic equations,
//! stability, and the jump measures of the interior and the two axes.
//!
//! Server 2, when idle, helps server 1, raising the node-1 service rate from
//! `mu1` to `mu1_star` on the x-axis (`y = 0`). Off the x-axis the network
//! behaves like an ordinary two-node Jackson network with routing
//! probabilities `r12` and `r21`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance of the stability comparisons.
pub const STABILITY_TOL: f64 = 1e-9;

/// Raw rates and routing of the modified Jackson network.
///
/// `r10 = 1 - r12` and `r20 = 1 - r21` are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub lambda1_bar: f64,
    pub lambda2_bar: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu1_star: f64,
    pub r12: f64,
    pub r21: f64,
}

impl NetworkParams {
    /// Builds and validates a parameter set.
    pub fn new(
        lambda1_bar: f64,
        lambda2_bar: f64,
        mu1: f64,
        mu2: f64,
        mu1_star: f64,
        r12: f64,
        r21: f64,
    ) -> Result<Self> {
        let p = Self {
            lambda1_bar,
            lambda2_bar,
            mu1,
            mu2,
            mu1_star,
            r12,
            r21,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parses the JSON document `{lambda1_bar, lambda2_bar, mu1, mu2, mu1_star, r12, r21}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidParams(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda1_bar", self.lambda1_bar),
            ("lambda2_bar", self.lambda2_bar),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu1_star", self.mu1_star),
            ("r12", self.r12),
            ("r21", self.r21),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite")));
            }
            if v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be >= 0")));
            }
        }
        if self.mu1 <= 0.0 || self.mu2 <= 0.0 {
            return Err(Error::InvalidParams("mu1 and mu2 must be > 0".into()));
        }
        if self.mu1_star < self.mu1 {
            return Err(Error::InvalidParams("mu1_star must be >= mu1".into()));
        }
        if self.r12 > 1.0 || self.r21 > 1.0 {
            return Err(Error::InvalidParams("routing probabilities must be <= 1".into()));
        }
        if self.r12 * self.r21 >= 1.0 {
            return Err(Error::InvalidParams("r12 * r21 must be < 1 (open network)".into()));
        }
        Ok(())
    }

    pub fn r10(&self) -> f64 {
        1.0 - self.r12
    }

    pub fn r20(&self) -> f64 {
        1.0 - self.r21
    }

    /// Returns a copy with `mu1_star` replaced.
    pub fn with_mu1_star(&self, mu1_star: f64) -> Result<Self> {
        let mut p = *self;
        p.mu1_star = mu1_star;
        p.validate()?;
        Ok(p)
    }

    /// The unmodified Jackson network (`mu1_star = mu1`).
    pub fn is_jackson(&self) -> bool {
        self.mu1_star == self.mu1
    }

    /// Uniformization rate `lambda1_bar + lambda2_bar + mu1_star + mu2`, which
    /// bounds the total outgoing rate of every state.
    pub fn total_rate_bound(&self) -> f64 {
        self.lambda1_bar + self.lambda2_bar + self.mu1_star + self.mu2
    }
}

/// Throughputs and utilizations solving the traffic equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficSolution {
    pub lambda1: f64,
    pub lambda2: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl TrafficSolution {
    /// `1 / rho1` computed as `mu1 / lambda1` to avoid a second rounding.
    pub fn inv_rho1(&self, params: &NetworkParams) -> f64 {
        params.mu1 / self.lambda1
    }

    pub fn inv_rho2(&self, params: &NetworkParams) -> f64 {
        params.mu2 / self.lambda2
    }
}

/// Solves `lambda_i = lambda_i_bar + lambda_{3-i} r_{3-i,i}` in closed form.
pub fn solve_traffic(params: &NetworkParams) -> Result<TrafficSolution> {
    params.validate()?;
    let det = 1.0 - params.r12 * params.r21;
    let lambda1 = (params.lambda1_bar + params.lambda2_bar * params.r21) / det;
    let lambda2 = (params.lambda2_bar + params.lambda1_bar * params.r12) / det;
    if !(lambda1 > 0.0 && lambda2 > 0.0) {
        return Err(Error::DegenerateNetwork { lambda1, lambda2 });
    }
    Ok(TrafficSolution {
        lambda1,
        lambda2,
        rho1: lambda1 / params.mu1,
        rho2: lambda2 / params.mu2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityKind {
    Stable,
    Transient,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityClass {
    pub kind: StabilityKind,
    /// Asymptotic mean change of the node-1 count over one node-2 busy
    /// cycle when node 1 is heavily loaded. `None` when the bounding node-2
    /// busy period has no finite mean (`mu2 <= lambda2_bar + mu1 r12`).
    pub drift: Option<f64>,
    /// `rho2 mu1 + (1 - rho2) mu1_star`, the node-1 capacity threshold.
    pub node1_capacity: f64,
}

/// Mean node-1 increment per node-2 busy cycle for a heavily loaded node 1:
/// the busy-period contribution plus the idle-period contribution.
pub fn busy_cycle_drift(params: &NetworkParams) -> Option<f64> {
    let busy_den = params.mu2 - (params.lambda2_bar + params.mu1 * params.r12);
    let idle_den = params.lambda2_bar + params.mu1_star * params.r12;
    if busy_den <= 0.0 || idle_den <= 0.0 {
        return None;
    }
    let busy = (params.lambda1_bar + params.mu2 * params.r21 - params.mu1) / busy_den;
    let idle = (params.lambda1_bar - params.mu1_star) / idle_den;
    Some(busy + idle)
}

/// Positive recurrence iff `lambda2 < mu2` and
/// `lambda1 < rho2 mu1 + (1 - rho2) mu1_star`. Comparisons within relative
/// [`STABILITY_TOL`] report `Boundary`.
pub fn classify_stability(params: &NetworkParams) -> Result<StabilityClass> {
    let t = solve_traffic(params)?;
    let capacity = t.rho2 * params.mu1 + (1.0 - t.rho2) * params.mu1_star;
    let cmp = |lhs: f64, rhs: f64| -> std::cmp::Ordering {
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        if (lhs - rhs).abs() <= STABILITY_TOL * scale {
            std::cmp::Ordering::Equal
        } else if lhs < rhs {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    };
    use std::cmp::Ordering::*;
    let node2 = cmp(t.lambda2, params.mu2);
    let node1 = cmp(t.lambda1, capacity);
    let kind = if node2 == Greater || node1 == Greater {
        StabilityKind::Transient
    } else if node2 == Equal || node1 == Equal {
        StabilityKind::Boundary
    } else {
        StabilityKind::Stable
    };
    Ok(StabilityClass {
        kind,
        drift: busy_cycle_drift(params),
        node1_capacity: capacity,
    })
}

/// Strict reversed-process conditions.
///
/// The first holds iff `1/rho2 > r20 + r21/rho1` (the reversed process from a
/// large node-1 queue keeps node 2 small); the second iff
/// `1/rho1 > r10 + r12/rho2`. Equality counts as failure.
pub fn reversed_conditions(params: &NetworkParams) -> Result<(bool, bool)> {
    let t = solve_traffic(params)?;
    let inv1 = t.inv_rho1(params);
    let inv2 = t.inv_rho2(params);
    let c22 = inv2 > params.r20() + params.r21 * inv1;
    let c23 = inv1 > params.r10() + params.r12 * inv2;
    Ok((c22, c23))
}

/// One atom of a compound-Poisson jump measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub dx: i32,
    pub dy: i32,
    pub rate: f64,
}

/// A finite set of jump atoms with distinct displacements and positive rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasure {
    atoms: Vec<Atom>,
}

impl JumpMeasure {
    /// Merges duplicate displacements and drops zero-rate atoms.
    pub fn new(atoms: impl IntoIterator<Item = (i32, i32, f64)>) -> Result<Self> {
        let mut merged: Vec<Atom> = Vec::new();
        for (dx, dy, rate) in atoms {
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "atom ({dx}, {dy}) has invalid rate {rate}"
                )));
            }
            if rate == 0.0 || (dx == 0 && dy == 0) {
                continue;
            }
            match merged.iter_mut().find(|a| a.dx == dx && a.dy == dy) {
                Some(a) => a.rate += rate,
                None => merged.push(Atom { dx, dy, rate }),
            }
        }
        if merged.is_empty() {
            return Err(Error::InvalidParams("jump measure has zero total rate".into()));
        }
        Ok(Self { atoms: merged })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_rate(&self) -> f64 {
        self.atoms.iter().map(|a| a.rate).sum()
    }

    pub fn rate_of(&self, dx: i32, dy: i32) -> f64 {
        self.atoms
            .iter()
            .find(|a| a.dx == dx && a.dy == dy)
            .map_or(0.0, |a| a.rate)
    }

    /// Swaps the roles of the two coordinates.
    pub fn transposed(&self) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    dx: a.dy,
                    dy: a.dx,
                    rate: a.rate,
                })
                .collect(),
        }
    }

    /// Mean jump vector `sum rate * (dx, dy)`.
    pub fn mean_drift(&self) -> [f64; 2] {
        self.atoms.iter().fold([0.0, 0.0], |acc, a| {
            [acc[0] + a.rate * a.dx as f64, acc[1] + a.rate * a.dy as f64]
        })
    }
}

/// Jumps off the axes (`x, y >= 1`).
pub fn interior_jumps(params: &NetworkParams) -> Result<JumpMeasure> {
    let p = params;
    JumpMeasure::new([
        (1, 0, p.lambda1_bar),
        (0, 1, p.lambda2_bar),
        (-1, 0, p.mu1 * p.r10()),
        (-1, 1, p.mu1 * p.r12),
        (0, -1, p.mu2 * p.r20()),
        (1, -1, p.mu2 * p.r21),
    ])
}

/// Jumps on the x-axis (`y = 0`), where node 1 is served at `mu1_star`.
pub fn boundary_jumps(params: &NetworkParams) -> Result<JumpMeasure> {
    let p = params;
    JumpMeasure::new([
        (1, 0, p.lambda1_bar),
        (0, 1, p.lambda2_bar),
        (-1, 0, p.mu1_star * p.r10()),
        (-1, 1, p.mu1_star * p.r12),
    ])
}

/// Jumps on the y-axis (`x = 0`), where only node 2 serves.
pub fn y_boundary_jumps(params: &NetworkParams) -> Result<JumpMeasure> {
    let p = params;
    JumpMeasure::new([
        (1, 0, p.lambda1_bar),
        (0, 1, p.lambda2_bar),
        (0, -1, p.mu2 * p.r20()),
        (1, -1, p.mu2 * p.r21),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(l1: f64, l2: f64, m1: f64, m2: f64, ms: f64, r12: f64, r21: f64) -> NetworkParams {
        NetworkParams::new(l1, l2, m1, m2, ms, r12, r21).unwrap()
    }

    #[test]
    fn traffic_without_routing() {
        let t = solve_traffic(&params(1.0, 1.0, 3.0, 3.0, 3.0, 0.0, 0.0)).unwrap();
        assert_eq!(t.lambda1, 1.0);
        assert_eq!(t.lambda2, 1.0);
    }

    #[test]
    fn traffic_with_symmetric_routing() {
        let t = solve_traffic(&params(1.0, 1.0, 3.0, 3.0, 3.0, 0.5, 0.5)).unwrap();
        assert!((t.lambda1 - 2.0).abs() < 1e-15);
        assert!((t.lambda2 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_network_rejected() {
        let p = params(0.0, 1.0, 1.0, 2.0, 1.0, 0.0, 0.0);
        assert!(matches!(solve_traffic(&p), Err(Error::DegenerateNetwork { .. })));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(NetworkParams::new(1.0, 1.0, 2.0, 2.0, 1.0, 0.0, 0.0).is_err());
        assert!(NetworkParams::new(1.0, 1.0, 0.0, 2.0, 1.0, 0.0, 0.0).is_err());
        assert!(NetworkParams::new(1.0, 1.0, 2.0, 2.0, 2.0, 1.0, 1.0).is_err());
        assert!(NetworkParams::new(-1.0, 1.0, 2.0, 2.0, 2.0, 0.0, 0.0).is_err());
        assert!(NetworkParams::new(f64::NAN, 1.0, 2.0, 2.0, 2.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn json_requires_exact_keys() {
        let ok = r#"{"lambda1_bar":1,"lambda2_bar":1,"mu1":2,"mu2":3,"mu1_star":2.5,"r12":0.2,"r21":0.3}"#;
        assert!(NetworkParams::from_json(ok).is_ok());
        let extra = r#"{"lambda1_bar":1,"lambda2_bar":1,"mu1":2,"mu2":3,"mu1_star":2.5,"r12":0.2,"r21":0.3,"x":1}"#;
        assert!(NetworkParams::from_json(extra).is_err());
        let missing = r#"{"lambda1_bar":1,"lambda2_bar":1,"mu1":2,"mu2":3,"r12":0.2,"r21":0.3}"#;
        assert!(NetworkParams::from_json(missing).is_err());
    }

    #[test]
    fn jackson_is_stable_when_both_utilizations_below_one() {
        let s = classify_stability(&params(1.0, 0.5, 2.0, 2.0, 2.0, 0.3, 0.2)).unwrap();
        assert_eq!(s.kind, StabilityKind::Stable);
    }

    #[test]
    fn overloaded_node2_is_transient() {
        let s = classify_stability(&params(0.5, 2.0, 5.0, 1.5, 5.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.kind, StabilityKind::Transient);
    }

    #[test]
    fn exact_capacity_is_boundary() {
        // lambda1 = 2, lambda2 = 1, rho2 = 1/2, capacity = mu1/2 + mu1_star/2 = 2.
        let s = classify_stability(&params(2.0, 1.0, 1.0, 2.0, 3.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.kind, StabilityKind::Boundary);
        assert_eq!(s.node1_capacity, 2.0);
    }

    #[test]
    fn helping_server_stabilizes_overloaded_node1() {
        // rho1 = 1.25 but capacity = 0.5*1.6 + 0.5*4 = 2.8 > 2.
        let p = params(2.0, 1.0, 1.6, 2.0, 4.0, 0.0, 0.0);
        let t = solve_traffic(&p).unwrap();
        assert!(t.rho1 > 1.0);
        let s = classify_stability(&p).unwrap();
        assert_eq!(s.kind, StabilityKind::Stable);
        assert!(s.drift.unwrap() < 0.0);
    }

    #[test]
    fn drift_sign_tracks_stability_for_overloaded_node1() {
        for &ms in &[2.5, 2.9, 3.1, 4.0, 6.0] {
            let p = params(2.0, 1.0, 1.6, 2.0, ms, 0.0, 0.0);
            let s = classify_stability(&p).unwrap();
            let stable = s.kind == StabilityKind::Stable;
            assert_eq!(stable, s.drift.unwrap() < 0.0, "mu1_star={ms}");
        }
    }

    #[test]
    fn jump_measures_match_rate_table() {
        let p = params(1.0, 0.5, 2.0, 3.0, 2.5, 0.25, 0.4);
        let int = interior_jumps(&p).unwrap();
        assert_eq!(int.atoms().len(), 6);
        assert_eq!(int.rate_of(-1, 1), 0.5);
        assert_eq!(int.rate_of(1, -1), 3.0 * 0.4);
        let total = p.lambda1_bar + p.lambda2_bar + p.mu1 + p.mu2;
        assert!((int.total_rate() - total).abs() < 1e-12);
        let b = boundary_jumps(&p).unwrap();
        assert_eq!(b.atoms().len(), 4);
        assert_eq!(b.rate_of(-1, 0), 2.5 * 0.75);
        // Atoms not involving node-1 service agree.
        assert_eq!(b.rate_of(1, 0), int.rate_of(1, 0));
        assert_eq!(b.rate_of(0, 1), int.rate_of(0, 1));
    }

    #[test]
    fn no_help_boundary_is_interior_without_node2_service() {
        let p = params(1.0, 0.5, 2.0, 3.0, 2.0, 0.25, 0.4);
        let int = interior_jumps(&p).unwrap();
        let b = boundary_jumps(&p).unwrap();
        let stripped: Vec<_> = int.atoms().iter().filter(|a| a.dy >= 0).copied().collect();
        assert_eq!(stripped, b.atoms());
    }

    #[test]
    fn full_routing_drops_departure_atom() {
        let p = params(1.0, 0.5, 2.0, 3.0, 2.5, 1.0, 0.4);
        assert_eq!(interior_jumps(&p).unwrap().rate_of(-1, 0), 0.0);
        assert_eq!(boundary_jumps(&p).unwrap().rate_of(-1, 0), 0.0);
    }

    #[test]
    fn jump_measure_merges_and_drops() {
        let m = JumpMeasure::new([(1, 0, 1.0), (1, 0, 2.0), (0, 1, 0.0)]).unwrap();
        assert_eq!(m.atoms().len(), 1);
        assert_eq!(m.rate_of(1, 0), 3.0);
        assert!(JumpMeasure::new([(1, 0, 0.0)]).is_err());
        assert!(JumpMeasure::new([(1, 0, -1.0)]).is_err());
    }

    #[test]
    fn independent_queues_satisfy_both_reversed_conditions() {
        let (a, b) = reversed_conditions(&params(1.0, 1.0, 2.0, 3.0, 2.0, 0.0, 0.0)).unwrap();
        assert!(a && b);
    }

    #[test]
    fn reversed_condition_equality_fails() {
        // lambda1 = 1, lambda2 = 2, 1/rho1 = 2, 1/rho2 = 1.5 = r20 + r21/rho1.
        let p = params(0.0, 2.0, 2.0, 3.0, 2.0, 0.0, 0.5);
        let (c22, _) = reversed_conditions(&p).unwrap();
        assert!(!c22);
    }

    #[test]
    fn failing_first_condition_implies_second_for_stable_jackson() {
        // 1/rho1 ~ 1.276 and 1/rho2 = 1.188 < r20 + r21/rho1 ~ 1.248.
        let p = params(0.08, 1.0, 1.25, 1.1 * 1.08 / 1.0, 1.25, 0.0, 0.9);
        let t = solve_traffic(&p).unwrap();
        assert!(t.rho1 < 1.0 && t.rho2 < 1.0);
        let (c22, c23) = reversed_conditions(&p).unwrap();
        assert!(!c22);
        assert!(c23);
    }
}
