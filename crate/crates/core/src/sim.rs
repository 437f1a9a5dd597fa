//! Regenerative Monte Carlo for quadrant random walks.
//!
//! The chain is uniformized at a constant rate with self-loops, so every
//! step has the same mean duration and time fractions are step fractions.
//! A cycle starts at the first exit from the origin and ends at the first
//! return; the holding time at the origin is counted only for stationary
//! quantities.
//!
//! Work is split into a fixed number of batches whose random streams depend
//! only on the master seed and the unit's index, and batch results are merged
//! in index order, so estimates do not depend on the number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Atom, NetworkParams};

/// Number of independent batches used for batch-means intervals.
pub const BATCHES: u64 = 32;
/// Minimum number of level-reaching excursions for occupancy statistics.
pub const MIN_HITS: usize = 30;
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Origin,
    XAxis,
    YAxis,
    Interior,
}

impl Region {
    pub fn of(x: u64, y: u64) -> Self {
        match (x == 0, y == 0) {
            (true, true) => Region::Origin,
            (false, true) => Region::XAxis,
            (true, false) => Region::YAxis,
            (false, false) => Region::Interior,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// A continuous-time walk on the quadrant whose jump rates depend only on
/// which axes the state touches.
pub trait QueueModel: Sync {
    /// Enabled jumps in `region`; none may leave the quadrant.
    fn jumps(&self, region: Region) -> &[Atom];
    /// Uniformization rate, at least the total rate of every region.
    fn uniform_rate(&self) -> f64;
    /// Geometric decay reference for the y-column of the stationary law.
    fn column_decay_reference(&self) -> Option<f64> {
        None
    }
}

/// Table-driven [`QueueModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct WalkModel {
    regions: [Vec<Atom>; 4],
    uniform_rate: f64,
    column_ratio: Option<f64>,
}

impl WalkModel {
    /// Builds a model from per-region `(dx, dy, rate)` lists; zero rates are
    /// dropped. The uniformization rate is the largest regional total.
    pub fn new(
        origin: &[(i32, i32, f64)],
        x_axis: &[(i32, i32, f64)],
        y_axis: &[(i32, i32, f64)],
        interior: &[(i32, i32, f64)],
    ) -> Result<Self> {
        let build = |list: &[(i32, i32, f64)], region: Region| -> Result<Vec<Atom>> {
            let mut out = Vec::new();
            for &(dx, dy, rate) in list {
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidParams(format!("rate {rate} in {region:?}")));
                }
                let leaves = match region {
                    Region::Origin => dx < 0 || dy < 0,
                    Region::XAxis => dy < 0,
                    Region::YAxis => dx < 0,
                    Region::Interior => false,
                };
                if leaves || dx.abs() > 1 || dy.abs() > 1 {
                    return Err(Error::InvalidParams(format!(
                        "jump ({dx}, {dy}) not allowed in {region:?}"
                    )));
                }
                if rate > 0.0 {
                    out.push(Atom { dx, dy, rate });
                }
            }
            Ok(out)
        };
        let regions = [
            build(origin, Region::Origin)?,
            build(x_axis, Region::XAxis)?,
            build(y_axis, Region::YAxis)?,
            build(interior, Region::Interior)?,
        ];
        let uniform_rate = regions
            .iter()
            .map(|r| r.iter().map(|a| a.rate).sum::<f64>())
            .fold(0.0, f64::max);
        if !(uniform_rate > 0.0) {
            return Err(Error::InvalidParams("model has no positive rate".into()));
        }
        Ok(Self {
            regions,
            uniform_rate,
            column_ratio: None,
        })
    }

    /// Modified Jackson network, uniformized at `l1 + l2 + mu1_star + mu2`.
    pub fn jackson(p: &NetworkParams) -> Result<Self> {
        let arrivals = [(1, 0, p.lambda1_bar), (0, 1, p.lambda2_bar)];
        let node1 = |mu: f64| [(-1, 0, mu * p.r10()), (-1, 1, mu * p.r12)];
        let node2 = [(0, -1, p.mu2 * p.r20()), (1, -1, p.mu2 * p.r21)];
        let cat = |parts: &[&[(i32, i32, f64)]]| parts.concat();
        let mut m = Self::new(
            &arrivals,
            &cat(&[&arrivals, &node1(p.mu1_star)]),
            &cat(&[&arrivals, &node2]),
            &cat(&[&arrivals, &node1(p.mu1), &node2]),
        )?;
        m.uniform_rate = p.lambda1_bar + p.lambda2_bar + p.mu1_star + p.mu2;
        if let Ok(t) = crate::network::solve_traffic(p) {
            m.column_ratio = Some(t.rho2);
        }
        Ok(m)
    }
}

impl QueueModel for WalkModel {
    fn jumps(&self, region: Region) -> &[Atom] {
        &self.regions[region.index()]
    }

    fn uniform_rate(&self) -> f64 {
        self.uniform_rate
    }

    fn column_decay_reference(&self) -> Option<f64> {
        self.column_ratio
    }
}

/// Enabled transitions out of `(x, y)` with their rates.
pub fn step_generator<M: QueueModel + ?Sized>(model: &M, x: u64, y: u64) -> Vec<((u64, u64), f64)> {
    model
        .jumps(Region::of(x, y))
        .iter()
        .map(|a| {
            (
                (
                    (x as i64 + a.dx as i64) as u64,
                    (y as i64 + a.dy as i64) as u64,
                ),
                a.rate,
            )
        })
        .collect()
}

/// Seed of the random stream for the unit addressed by `tags`.
pub fn stream_seed(master: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    tags.iter()
        .fold(splitmix(master), |h, &t| splitmix(h ^ splitmix(t)))
}

fn rng_for(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, tags))
}

/// One uniformized step; returns the new state (unchanged on a self-loop).
#[inline]
fn step<M: QueueModel + ?Sized>(model: &M, rng: &mut ChaCha8Rng, x: u64, y: u64) -> (u64, u64) {
    let mut u = rng.random::<f64>() * model.uniform_rate();
    for a in model.jumps(Region::of(x, y)) {
        if u < a.rate {
            return (
                (x as i64 + a.dx as i64) as u64,
                (y as i64 + a.dy as i64) as u64,
            );
        }
        u -= a.rate;
    }
    (x, y)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Splitting {
    Off,
    /// Fixed-effort splitting: `effort` trajectories per stage per batch.
    FixedEffort { effort: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub master_seed: u64,
    pub levels: Vec<u32>,
    /// Regeneration cycles (split over the batches). With splitting these
    /// are the root trajectories of the first stage.
    pub n_cycles: u64,
    pub splitting: Splitting,
    /// Cap on uniformized steps per cycle or trajectory.
    pub max_events: u64,
    /// Levels below this are left out of the slope fit.
    #[serde(default = "default_min_fit_level")]
    pub min_fit_level: u32,
    /// Node-2 busy cycles simulated for the drift diagnostic (0 disables it).
    #[serde(default)]
    pub drift_cycles: u64,
}

fn default_min_fit_level() -> u32 {
    8
}

impl SimConfig {
    pub fn new(master_seed: u64, levels: Vec<u32>, n_cycles: u64) -> Self {
        Self {
            master_seed,
            levels,
            n_cycles,
            splitting: Splitting::Off,
            max_events: 10_000_000,
            min_fit_level: default_min_fit_level(),
            drift_cycles: 0,
        }
    }

    pub fn with_splitting(mut self, effort: usize) -> Self {
        self.splitting = Splitting::FixedEffort { effort };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cycles == 0 {
            return Err(Error::InvalidConfig("n_cycles must be at least 1".into()));
        }
        if self.max_events == 0 {
            return Err(Error::InvalidConfig("max_events must be at least 1".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidConfig("at least one level is required".into()));
        }
        if self.levels[0] == 0 || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "levels must be strictly increasing positive integers".into(),
            ));
        }
        if let Splitting::FixedEffort { effort } = self.splitting {
            if effort == 0 {
                return Err(Error::InvalidConfig("splitting effort must be positive".into()));
            }
        }
        Ok(())
    }

    fn batches(&self) -> u64 {
        BATCHES.min(self.n_cycles)
    }

    fn batch_cycles(&self, b: u64) -> u64 {
        let n = self.batches();
        (b + 1) * self.n_cycles / n - b * self.n_cycles / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub level: u32,
    pub p_hat: f64,
    /// Half-width of the 95% confidence interval.
    pub ci: f64,
    /// Trajectories that reached the level.
    pub hits: u64,
    /// Mean fraction of time with `y = 0` before first reaching the level.
    pub boundary_fraction: Option<f64>,
    pub boundary_ci: Option<f64>,
    /// Mean of the largest `y` seen before `x` first exceeds `level / 2`.
    pub max_y_half: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEntry {
    pub y: u32,
    /// Estimate of `sum_{j >= y} pi(0, j)`.
    pub mass: f64,
    pub ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub entries: Vec<TailEntry>,
    /// Least-squares slope of `log mass` against `y`.
    pub slope: Option<f64>,
    /// Ratio `r` used in the bound `mass(y) <= c r^y` (model reference if
    /// available, else the fitted decay).
    pub ratio: Option<f64>,
    /// Smallest `c` making the bound hold on the measured entries.
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    /// Mean change of `x` over one node-2 cycle with node 1 saturated.
    pub per_cycle: f64,
    pub ci: f64,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub config: SimConfig,
    pub levels: Vec<LevelEstimate>,
    /// Slope of `-log p_hat(level)` against `level`.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    /// Only without splitting, which distorts occupation times.
    pub tail: Option<TailReport>,
    pub node1_drift: Option<DriftEstimate>,
}

/// Header of [`SimEstimate::to_csv`].
pub const CSV_HEADER: &str = "level,p_hat,ci,boundary_fraction,hits";

impl SimEstimate {
    /// One row per level under [`CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for l in &self.levels {
            let bf = l.boundary_fraction.map(fmt_f64).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                l.level,
                fmt_f64(l.p_hat),
                fmt_f64(l.ci),
                bf,
                l.hits
            ));
        }
        s
    }
}

/// Round-trippable decimal form with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Statistics carried along a trajectory (and inherited by its splits).
#[derive(Debug, Clone)]
struct Lineage {
    x: u64,
    y: u64,
    steps: u64,
    boundary_steps: u64,
    max_y: u64,
    /// `max_y_at[k]`: running max of `y` when `x` first reached `k`.
    max_y_at: Vec<u64>,
}

impl Lineage {
    fn root() -> Self {
        Self {
            x: 0,
            y: 0,
            steps: 0,
            boundary_steps: 0,
            max_y: 0,
            max_y_at: vec![0],
        }
    }

    /// State just after the first exit from the origin. The exit step is
    /// the excursion's first unit of time, spent on the x-axis.
    fn start_excursion(&mut self, x: u64, y: u64) {
        self.x = x;
        self.y = y;
        self.steps = 1;
        self.boundary_steps = 1;
        self.max_y = y;
        if x >= 1 {
            self.max_y_at.push(y);
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct HitStats {
    hits: u64,
    bf_sum: f64,
    bf_sq: f64,
    max_y_half_sum: f64,
}

impl HitStats {
    fn record(&mut self, lin: &Lineage, level: u32) {
        self.hits += 1;
        let bf = lin.boundary_steps as f64 / lin.steps as f64;
        self.bf_sum += bf;
        self.bf_sq += bf * bf;
        let k = (level / 2 + 1) as usize;
        self.max_y_half_sum += lin.max_y_at.get(k).copied().unwrap_or(lin.max_y) as f64;
    }

    fn merge(&mut self, o: &HitStats) {
        self.hits += o.hits;
        self.bf_sum += o.bf_sum;
        self.bf_sq += o.bf_sq;
        self.max_y_half_sum += o.max_y_half_sum;
    }
}

enum Outcome {
    Hit,
    Returned,
}

/// Advances `lin` until `x` reaches `target` or the walk returns to the
/// origin. On a hit of any level in `levels` (sorted) the stats are recorded.
#[allow(clippy::too_many_arguments)]
fn advance<M: QueueModel + ?Sized>(
    model: &M,
    rng: &mut ChaCha8Rng,
    lin: &mut Lineage,
    target: u64,
    levels: &[u32],
    stats: &mut [HitStats],
    cap: u64,
    col0: Option<&mut Vec<u64>>,
) -> Result<Outcome> {
    let mut col0 = col0;
    let mut budget = 0u64;
    loop {
        if lin.x >= target {
            return Ok(Outcome::Hit);
        }
        if lin.x == 0 && lin.y == 0 {
            return Ok(Outcome::Returned);
        }
        budget += 1;
        if budget > cap {
            return Err(Error::CycleCap { max_events: cap });
        }
        lin.steps += 1;
        if lin.y == 0 {
            lin.boundary_steps += 1;
        }
        if lin.x == 0 {
            if let Some(c) = col0.as_deref_mut() {
                let y = lin.y as usize;
                if c.len() <= y {
                    c.resize(y + 1, 0);
                }
                c[y] += 1;
            }
        }
        let (nx, ny) = step(model, rng, lin.x, lin.y);
        lin.x = nx;
        lin.y = ny;
        lin.max_y = lin.max_y.max(ny);
        if nx as usize >= lin.max_y_at.len() {
            lin.max_y_at.push(lin.max_y);
            if let Ok(i) = levels.binary_search(&(nx as u32)) {
                stats[i].record(lin, levels[i]);
            }
        }
    }
}

/// Steps spent at the origin before the first exit; updates `col0`.
fn origin_holding<M: QueueModel + ?Sized>(model: &M, rng: &mut ChaCha8Rng) -> (u64, (u64, u64)) {
    let mut n = 0;
    loop {
        n += 1;
        let s = step(model, rng, 0, 0);
        if s != (0, 0) {
            return (n, s);
        }
    }
}

struct BatchResult {
    /// Batch estimate of `p(level)`.
    p: Vec<f64>,
    stats: Vec<HitStats>,
    cycles: u64,
    total_steps: u64,
    col0: Vec<u64>,
}

fn plain_batch<M: QueueModel + ?Sized>(model: &M, cfg: &SimConfig, b: u64) -> Result<BatchResult> {
    let levels = &cfg.levels;
    let n = cfg.batch_cycles(b);
    let first = b * cfg.n_cycles / cfg.batches();
    let mut stats = vec![HitStats::default(); levels.len()];
    let mut col0 = Vec::new();
    let mut total_steps = 0;
    for i in 0..n {
        let mut rng = rng_for(cfg.master_seed, &[0, first + i]);
        let (hold, (x, y)) = origin_holding(model, &mut rng);
        if col0.is_empty() {
            col0.push(0);
        }
        col0[0] += hold;
        let mut lin = Lineage::root();
        lin.start_excursion(x, y);
        if x >= 1 && levels[0] == 1 {
            stats[0].record(&lin, 1);
        }
        // Run the full cycle (past the top level) for the occupation times.
        advance(
            model,
            &mut rng,
            &mut lin,
            u64::MAX,
            levels,
            &mut stats,
            cfg.max_events,
            Some(&mut col0),
        )?;
        // The exit step is counted in both `hold` and the excursion.
        total_steps += hold + lin.steps - 1;
    }
    let p = stats.iter().map(|s| s.hits as f64 / n as f64).collect();
    Ok(BatchResult {
        p,
        stats,
        cycles: n,
        total_steps,
        col0,
    })
}

fn split_thresholds(levels: &[u32]) -> Vec<u32> {
    let top = *levels.last().unwrap();
    let mut t: Vec<u32> = (1..=top / 2).map(|k| 2 * k).chain(levels.iter().copied()).collect();
    t.sort_unstable();
    t.dedup();
    t
}

fn split_batch<M: QueueModel + ?Sized>(
    model: &M,
    cfg: &SimConfig,
    b: u64,
    effort: usize,
) -> Result<BatchResult> {
    let levels = &cfg.levels;
    let thresholds = split_thresholds(levels);
    let n0 = cfg.batch_cycles(b);
    let mut stats = vec![HitStats::default(); levels.len()];
    let mut p_stage = 1.0;
    let mut p_level = vec![0.0; levels.len()];
    let mut entrants: Vec<Lineage> = Vec::new();
    for (k, &t) in thresholds.iter().enumerate() {
        let mut stage_stats = vec![HitStats::default(); levels.len()];
        let starts = if k == 0 { n0 as usize } else { effort };
        let mut pick_rng = rng_for(cfg.master_seed, &[1, b, k as u64, u64::MAX]);
        let mut next = Vec::new();
        for j in 0..starts {
            let mut rng = rng_for(cfg.master_seed, &[1, b, k as u64, j as u64]);
            let mut lin = if k == 0 {
                let (_, (x, y)) = origin_holding(model, &mut rng);
                let mut lin = Lineage::root();
                lin.start_excursion(x, y);
                if x >= 1 && levels[0] == 1 {
                    stage_stats[0].record(&lin, 1);
                }
                lin
            } else {
                entrants[pick_rng.random_range(0..entrants.len())].clone()
            };
            if let Outcome::Hit = advance(
                model,
                &mut rng,
                &mut lin,
                t as u64,
                levels,
                &mut stage_stats,
                cfg.max_events,
                None,
            )? {
                next.push(lin);
            }
        }
        // Hits recorded in this stage are weighted by the stage's entry probability.
        for (s, st) in stats.iter_mut().zip(&stage_stats) {
            s.merge(st);
        }
        p_stage *= next.len() as f64 / starts as f64;
        // Every level is a threshold.
        if let Ok(i) = levels.binary_search(&t) {
            p_level[i] = p_stage;
        }
        if next.is_empty() {
            break;
        }
        entrants = next;
    }
    Ok(BatchResult {
        p: p_level,
        stats,
        cycles: n0,
        total_steps: 0,
        col0: Vec::new(),
    })
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

/// Least-squares fit `y = a + s x`; returns `(a, s, stderr of s)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let s = sxy / sxx;
    let a = my - s * mx;
    let se = if pts.len() > 2 {
        let ssr: f64 = pts.iter().map(|p| (p.1 - a - s * p.0).powi(2)).sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some((a, s, se))
}

fn run_batches<M: QueueModel + ?Sized>(model: &M, cfg: &SimConfig) -> Result<Vec<BatchResult>> {
    (0..cfg.batches())
        .into_par_iter()
        .map(|b| match cfg.splitting {
            Splitting::Off => plain_batch(model, cfg, b),
            Splitting::FixedEffort { effort } => split_batch(model, cfg, b, effort),
        })
        .collect()
}

fn tail_report<M: QueueModel + ?Sized>(model: &M, batches: &[BatchResult]) -> TailReport {
    let total: u64 = batches.iter().map(|b| b.total_steps).sum();
    let len = batches.iter().map(|b| b.col0.len()).max().unwrap_or(0);
    let suffix = |col: &[u64]| -> Vec<u64> {
        let mut s = vec![0u64; len + 1];
        for y in (0..len).rev() {
            s[y] = s[y + 1] + col.get(y).copied().unwrap_or(0);
        }
        s
    };
    let pooled: Vec<u64> = (0..len)
        .map(|y| batches.iter().map(|b| b.col0.get(y).copied().unwrap_or(0)).sum())
        .collect();
    let pooled_suffix = suffix(&pooled);
    let per_batch: Vec<Vec<u64>> = batches.iter().map(|b| suffix(&b.col0)).collect();
    let mut entries = Vec::new();
    for y in 0..len {
        let mass = pooled_suffix[y] as f64 / total as f64;
        let samples: Vec<f64> = batches
            .iter()
            .zip(&per_batch)
            .filter(|(b, _)| b.total_steps > 0)
            .map(|(b, s)| s[y] as f64 / b.total_steps as f64)
            .collect();
        let ci = if samples.len() >= 2 { mean_ci(&samples).1 } else { f64::INFINITY };
        entries.push(TailEntry {
            y: y as u32,
            mass,
            ci,
        });
    }
    // Fit where the tail is backed by enough occupation steps.
    let fit_pts: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| pooled_suffix[e.y as usize] >= 1000)
        .map(|e| (e.y as f64, e.mass.ln()))
        .collect();
    let slope = linear_fit(&fit_pts).map(|f| f.1);
    let ratio = model.column_decay_reference().or(slope.map(f64::exp));
    let c = ratio.and_then(|r| {
        fit_pts
            .iter()
            .map(|&(y, lm)| (lm - y * r.ln()).exp())
            .reduce(f64::max)
    });
    TailReport {
        entries,
        slope,
        ratio,
        c,
    }
}

/// Overflow probabilities `p(level)`, the fitted decay slope, occupancy
/// statistics and (without splitting) the stationary y-column tail.
pub fn estimate_overflow<M: QueueModel + ?Sized>(model: &M, cfg: &SimConfig) -> Result<SimEstimate> {
    cfg.validate()?;
    let batches = run_batches(model, cfg)?;
    let total_cycles: u64 = batches.iter().map(|b| b.cycles).sum();
    let mut levels = Vec::with_capacity(cfg.levels.len());
    for (i, &level) in cfg.levels.iter().enumerate() {
        let mut st = HitStats::default();
        for b in &batches {
            st.merge(&b.stats[i]);
        }
        let (p_hat, ci) = match cfg.splitting {
            Splitting::Off => {
                let p = st.hits as f64 / total_cycles as f64;
                (p, Z95 * (p * (1.0 - p) / total_cycles as f64).sqrt())
            }
            Splitting::FixedEffort { .. } => {
                let ps: Vec<f64> = batches.iter().map(|b| b.p[i]).collect();
                mean_ci(&ps)
            }
        };
        let (bf, bf_ci, my) = if st.hits > 0 {
            let h = st.hits as f64;
            let m = st.bf_sum / h;
            let var = (st.bf_sq / h - m * m).max(0.0);
            let ci = if st.hits > 1 { Z95 * (var / (h - 1.0)).sqrt() } else { f64::INFINITY };
            (Some(m), Some(ci), Some(st.max_y_half_sum / h))
        } else {
            (None, None, None)
        };
        levels.push(LevelEstimate {
            level,
            p_hat,
            ci,
            hits: st.hits,
            boundary_fraction: bf,
            boundary_ci: bf_ci,
            max_y_half: my,
        });
    }
    let fit_pts: Vec<(f64, f64)> = levels
        .iter()
        .filter(|l| l.level >= cfg.min_fit_level && l.p_hat > 0.0)
        .map(|l| (l.level as f64, -l.p_hat.ln()))
        .collect();
    let fit = linear_fit(&fit_pts);
    let tail = match cfg.splitting {
        Splitting::Off => Some(tail_report(model, &batches)),
        Splitting::FixedEffort { .. } => None,
    };
    let node1_drift = if cfg.drift_cycles > 0 {
        Some(busy_cycle_drift_estimate(
            model,
            cfg.master_seed,
            cfg.drift_cycles,
            cfg.max_events,
        )?)
    } else {
        None
    };
    Ok(SimEstimate {
        config: cfg.clone(),
        levels,
        slope: fit.map(|f| f.1),
        slope_stderr: fit.map(|f| f.2).filter(|s| s.is_finite()),
        tail,
        node1_drift,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupancy {
    pub level: u32,
    pub boundary_fraction: f64,
    pub ci: f64,
    pub hits: u64,
    pub max_y_half: f64,
}

/// Fraction of time on the x-axis before first reaching each level, among
/// excursions that reach it.
pub fn boundary_occupancy<M: QueueModel + ?Sized>(model: &M, cfg: &SimConfig) -> Result<Vec<Occupancy>> {
    let est = estimate_overflow(model, cfg)?;
    est.levels
        .iter()
        .map(|l| {
            if (l.hits as usize) < MIN_HITS {
                return Err(Error::InsufficientHits {
                    level: l.level,
                    hits: l.hits as usize,
                    required: MIN_HITS,
                });
            }
            Ok(Occupancy {
                level: l.level,
                boundary_fraction: l.boundary_fraction.unwrap_or(f64::NAN),
                ci: l.boundary_ci.unwrap_or(f64::INFINITY),
                hits: l.hits,
                max_y_half: l.max_y_half.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Stationary mass of the column `x = 0` above each height.
pub fn stationary_tail<M: QueueModel + ?Sized>(model: &M, cfg: &SimConfig) -> Result<TailReport> {
    let mut plain = cfg.clone();
    plain.splitting = Splitting::Off;
    plain.validate()?;
    let batches = run_batches(model, &plain)?;
    Ok(tail_report(model, &batches))
}

/// Mean change of `x` over a node-2 cycle (an x-axis sojourn followed by a
/// busy period) when node 1 never empties, from `cycles` simulated cycles.
pub fn busy_cycle_drift_estimate<M: QueueModel + ?Sized>(
    model: &M,
    seed: u64,
    cycles: u64,
    cap: u64,
) -> Result<DriftEstimate> {
    let b = BATCHES.min(cycles.max(1));
    let per: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let n = (k + 1) * cycles / b - k * cycles / b;
            let first = k * cycles / b;
            let mut out = Vec::with_capacity(n as usize);
            for i in 0..n {
                let mut rng = rng_for(seed, &[2, first + i]);
                let (mut dx, mut y, mut left) = (0i64, 0u64, false);
                let mut steps = 0u64;
                loop {
                    steps += 1;
                    if steps > cap {
                        return Err(Error::CycleCap { max_events: cap });
                    }
                    // A saturated node 1: the state is taken far from x = 0.
                    let (nx, ny) = step(model, &mut rng, u64::MAX / 2, y);
                    dx += nx as i64 - (u64::MAX / 2) as i64;
                    y = ny;
                    if y > 0 {
                        left = true;
                    } else if left {
                        break;
                    }
                }
                out.push(dx as f64);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let all: Vec<f64> = per.into_iter().flatten().collect();
    let (per_cycle, ci) = mean_ci(&all);
    Ok(DriftEstimate {
        per_cycle,
        ci,
        cycles: all.len() as u64,
    })
}

/// Runs a single trajectory from the origin for `events` steps and returns
/// the final state; used to observe transience.
pub fn run_path<M: QueueModel + ?Sized>(model: &M, seed: u64, events: u64) -> (u64, u64) {
    let mut rng = rng_for(seed, &[3]);
    let (mut x, mut y) = (0, 0);
    for _ in 0..events {
        (x, y) = step(model, &mut rng, x, y);
    }
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::interior_jumps;

    fn jackson(l1: f64, l2: f64, m1: f64, m2: f64, ms: f64, r12: f64, r21: f64) -> WalkModel {
        WalkModel::jackson(&NetworkParams::new(l1, l2, m1, m2, ms, r12, r21).unwrap()).unwrap()
    }

    #[test]
    fn origin_only_has_arrivals() {
        let m = jackson(1.0, 0.5, 2.0, 2.5, 3.0, 0.3, 0.2);
        let g = step_generator(&m, 0, 0);
        let total: f64 = g.iter().map(|t| t.1).sum();
        assert!((total - 1.5).abs() < 1e-15);
        assert!(g.iter().all(|((x, y), _)| *x + *y == 1));
    }

    #[test]
    fn x_axis_uses_combined_effort() {
        let p = NetworkParams::new(1.0, 0.5, 2.0, 2.5, 3.0, 0.3, 0.2).unwrap();
        let m = WalkModel::jackson(&p).unwrap();
        let g = step_generator(&m, 4, 0);
        let rate = |s: (u64, u64)| g.iter().find(|t| t.0 == s).map(|t| t.1).unwrap();
        assert!((rate((3, 0)) - 3.0 * 0.7).abs() < 1e-15);
        assert!((rate((3, 1)) - 3.0 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn interior_matches_jump_measure() {
        let p = NetworkParams::new(1.0, 0.5, 2.0, 2.5, 3.0, 0.3, 0.2).unwrap();
        let m = WalkModel::jackson(&p).unwrap();
        let g = step_generator(&m, 3, 3);
        let jm = interior_jumps(&p).unwrap();
        assert_eq!(g.len(), jm.atoms().len());
        for a in jm.atoms() {
            let to = ((3 + a.dx) as u64, (3 + a.dy) as u64);
            let r = g.iter().find(|t| t.0 == to).unwrap().1;
            assert_eq!(r, a.rate);
        }
    }

    #[test]
    fn rates_within_uniformization_bound() {
        let m = jackson(1.0, 0.5, 2.0, 2.5, 3.0, 0.3, 0.2);
        for (x, y) in [(0, 0), (1, 0), (0, 1), (2, 2)] {
            let total: f64 = step_generator(&m, x, y).iter().map(|t| t.1).sum();
            assert!(total <= m.uniform_rate() + 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(1, vec![2, 4], 0).validate().is_err());
        assert!(SimConfig::new(1, vec![4, 4], 10).validate().is_err());
        assert!(SimConfig::new(1, vec![0, 4], 10).validate().is_err());
        assert!(SimConfig::new(1, vec![2, 4], 10).with_splitting(0).validate().is_err());
        assert!(SimConfig::new(1, vec![2, 4], 10).validate().is_ok());
    }

    #[test]
    fn cycle_cap_is_reported() {
        let m = jackson(1.0, 0.5, 2.0, 2.5, 3.0, 0.3, 0.2);
        let mut cfg = SimConfig::new(3, vec![50], 64);
        cfg.max_events = 2;
        assert!(matches!(
            estimate_overflow(&m, &cfg),
            Err(Error::CycleCap { max_events: 2 })
        ));
    }

    #[test]
    fn gamblers_ruin_reduction() {
        // lambda2 = 0 and no routing: node 1 on the x-axis is an M/M/1 queue
        // served at mu1_star, and a cycle reaches l with the ruin probability.
        let (l, ms) = (1.0, 2.0);
        let m = jackson(l, 0.0, 1.5, 1.0, ms, 0.0, 0.0);
        let cfg = SimConfig::new(11, vec![2, 3, 5, 8], 200_000);
        let est = estimate_overflow(&m, &cfg).unwrap();
        let r = ms / l;
        for e in &est.levels {
            let exact = (r - 1.0) / (r.powi(e.level as i32) - 1.0);
            assert!(
                (e.p_hat - exact).abs() <= e.ci * 1.5 + 1e-12,
                "level {}: {} vs {exact} (ci {})",
                e.level,
                e.p_hat,
                e.ci
            );
            assert_eq!(e.boundary_fraction, Some(1.0));
        }
    }

    #[test]
    fn linear_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 + 0.5 * i as f64)).collect();
        let (a, s, se) = linear_fit(&pts).unwrap();
        assert!((a - 2.0).abs() < 1e-12 && (s - 0.5).abs() < 1e-12 && se < 1e-12);
    }

    #[test]
    fn seeds_differ_by_tag() {
        assert_ne!(stream_seed(1, &[0, 1]), stream_seed(1, &[0, 2]));
        assert_ne!(stream_seed(1, &[0, 1]), stream_seed(2, &[0, 1]));
        assert_eq!(stream_seed(7, &[1, 2, 3]), stream_seed(7, &[1, 2, 3]));
    }
}
