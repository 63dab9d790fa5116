//! Stationary ergodic space-time coefficient fields `a(y, s, ω)` with
//! seed-deterministic sampling, exact translation, and an empirical
//! decorrelation diagnostic.
//!
//! Checkerboard cells take i.i.d. values through a counter-based hash of
//! (seed, integer cell coordinates), so the field supports random access
//! without storage and reproduces identically regardless of evaluation order.
//! Stationarity is realized by a uniform random offset of one cell per
//! sample; integer-lattice checkerboards are otherwise only Z^{d+1}-invariant.

use crate::grid::SpaceTimePoint;
use crate::rng::{cell_hash, derive_seed, stream, unit_f64};
use crate::stats;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvKind {
    /// `a ≡ value`
    Constant { value: f64 },
    /// Spatially periodic in the first axis, constant in time: the table
    /// tiles the x-axis with cells of width `cell_x`.
    Periodic { table: Vec<f64>, cell_x: f64 },
    /// I.i.d. two-valued cells on boxes of size `cell_x^d × cell_t`;
    /// `P[value_high] = p_high`.
    CheckerboardIid {
        value_low: f64,
        value_high: f64,
        p_high: f64,
        cell_x: f64,
        cell_t: f64,
    },
    /// Checkerboard convolved per axis with a box kernel of half-width
    /// `smoothing` (in units of the cell, 0 < smoothing <= 1/2), giving a
    /// Lipschitz field with the same range.
    CheckerboardMollified {
        value_low: f64,
        value_high: f64,
        p_high: f64,
        cell_x: f64,
        cell_t: f64,
        smoothing: f64,
    },
}

/// Law of the coefficient field: kind plus spatial dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub d: usize,
    #[serde(flatten)]
    pub kind: EnvKind,
}

impl EnvSpec {
    pub fn constant(d: usize, value: f64) -> Self {
        EnvSpec { d, kind: EnvKind::Constant { value } }
    }

    pub fn periodic(d: usize, table: Vec<f64>, cell_x: f64) -> Self {
        EnvSpec { d, kind: EnvKind::Periodic { table, cell_x } }
    }

    pub fn checkerboard(d: usize, value_low: f64, value_high: f64) -> Self {
        EnvSpec {
            d,
            kind: EnvKind::CheckerboardIid {
                value_low,
                value_high,
                p_high: 0.5,
                cell_x: 1.0,
                cell_t: 1.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > 2 {
            return Err(Error::param("environment.d", format!("supported dimensions are 1 and 2, got {}", self.d)));
        }
        let (lo, hi) = self.range();
        if !(lo > 0.0 && hi.is_finite() && hi >= lo) {
            return Err(Error::param(
                "environment",
                format!("coefficient range [{lo}, {hi}] must lie in (0, inf)"),
            ));
        }
        match &self.kind {
            EnvKind::Constant { .. } => {}
            EnvKind::Periodic { table, cell_x } => {
                if table.is_empty() {
                    return Err(Error::param("environment.table", "empty period table"));
                }
                if !(*cell_x > 0.0) {
                    return Err(Error::param("environment.cell_x", "cell size must be positive"));
                }
            }
            EnvKind::CheckerboardIid { p_high, cell_x, cell_t, .. } => {
                if !(0.0..=1.0).contains(p_high) {
                    return Err(Error::param("environment.p_high", "probability outside [0, 1]"));
                }
                if !(*cell_x > 0.0 && *cell_t > 0.0) {
                    return Err(Error::param("environment.cell_x", "cell sizes must be positive"));
                }
            }
            EnvKind::CheckerboardMollified { p_high, cell_x, cell_t, smoothing, .. } => {
                if !(0.0..=1.0).contains(p_high) {
                    return Err(Error::param("environment.p_high", "probability outside [0, 1]"));
                }
                if !(*cell_x > 0.0 && *cell_t > 0.0) {
                    return Err(Error::param("environment.cell_x", "cell sizes must be positive"));
                }
                if !(*smoothing > 0.0 && *smoothing <= 0.5) {
                    return Err(Error::param("environment.smoothing", "need 0 < smoothing <= 1/2"));
                }
            }
        }
        Ok(())
    }

    /// Attainable coefficient range `[λ_a, Λ_a]`.
    pub fn range(&self) -> (f64, f64) {
        match &self.kind {
            EnvKind::Constant { value } => (*value, *value),
            EnvKind::Periodic { table, .. } => {
                let lo = table.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            EnvKind::CheckerboardIid { value_low, value_high, .. }
            | EnvKind::CheckerboardMollified { value_low, value_high, .. } => {
                (value_low.min(*value_high), value_low.max(*value_high))
            }
        }
    }

    /// Smallest oscillation length in space, used by the grid-resolution rule.
    pub fn min_cell_x(&self) -> Option<f64> {
        match &self.kind {
            EnvKind::Constant { .. } => None,
            EnvKind::Periodic { cell_x, .. } => Some(*cell_x),
            EnvKind::CheckerboardIid { cell_x, .. }
            | EnvKind::CheckerboardMollified { cell_x, .. } => Some(*cell_x),
        }
    }

    /// Smallest oscillation length in time.
    pub fn min_cell_t(&self) -> Option<f64> {
        match &self.kind {
            EnvKind::Constant { .. } | EnvKind::Periodic { .. } => None,
            EnvKind::CheckerboardIid { cell_t, .. }
            | EnvKind::CheckerboardMollified { cell_t, .. } => Some(*cell_t),
        }
    }
}

/// One realized environment ω: spec + seed + stationarizing offset. Shifts
/// from [`EnvSample::translate`] are kept as a list and applied in order, so
/// `translate(e, v).value(p)` reproduces `e.value(p + v)` bit for bit.
#[derive(Clone, Debug)]
pub struct EnvSample {
    spec: EnvSpec,
    seed: u64,
    offset_x: Vec<f64>,
    offset_t: f64,
    shifts: Vec<(Vec<f64>, f64)>,
}

/// Draws one environment: the cell values are functions of (seed, cell), the
/// stationarizing offset is uniform over one cell.
pub fn sample_env(spec: &EnvSpec, seed: u64) -> EnvSample {
    let mut rng = stream(derive_seed(seed, "env-offset", 0));
    let (offset_x, offset_t) = match &spec.kind {
        EnvKind::Constant { .. } => (vec![0.0; spec.d], 0.0),
        EnvKind::Periodic { table, cell_x } => {
            let period = table.len() as f64 * cell_x;
            let mut off = vec![0.0; spec.d];
            off[0] = rng.random_range(0.0..period);
            (off, 0.0)
        }
        EnvKind::CheckerboardIid { cell_x, cell_t, .. }
        | EnvKind::CheckerboardMollified { cell_x, cell_t, .. } => {
            let off = (0..spec.d).map(|_| rng.random_range(0.0..*cell_x)).collect();
            (off, rng.random_range(0.0..*cell_t))
        }
    };
    EnvSample { spec: spec.clone(), seed, offset_x, offset_t, shifts: Vec::new() }
}

impl EnvSample {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Field value at environment coordinates (y, s).
    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        debug_assert_eq!(x.len(), self.spec.d);
        let mut xs = [0.0f64; 2];
        xs[..x.len()].copy_from_slice(x);
        let mut ts = t;
        for (sx, st) in &self.shifts {
            for (xi, si) in xs[..x.len()].iter_mut().zip(sx) {
                *xi += si;
            }
            ts += st;
        }
        self.raw_value(&xs[..x.len()], ts)
    }

    /// Field value at `(x/eps, t/eps²)`; `eps = 0` means no oscillation
    /// scaling, i.e. the arguments are used directly.
    pub fn value_scaled(&self, x: &[f64], t: f64, eps: f64) -> f64 {
        if eps > 0.0 {
            let mut xs = [0.0f64; 2];
            for (o, v) in xs[..x.len()].iter_mut().zip(x) {
                *o = v / eps;
            }
            self.value(&xs[..x.len()], t / (eps * eps))
        } else {
            self.value(x, t)
        }
    }

    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        match &self.spec.kind {
            EnvKind::Constant { value } => *value,
            EnvKind::Periodic { table, cell_x } => {
                let len = table.len() as i64;
                let u = (x[0] + self.offset_x[0]) / cell_x;
                let idx = (u.floor() as i64).rem_euclid(len) as usize;
                table[idx]
            }
            EnvKind::CheckerboardIid { value_low, value_high, p_high, cell_x, cell_t } => {
                let mut cells = [0i64; 3];
                for i in 0..x.len() {
                    cells[i] = ((x[i] + self.offset_x[i]) / cell_x).floor() as i64;
                }
                cells[x.len()] = ((t + self.offset_t) / cell_t).floor() as i64;
                self.cell_value(&cells[..=x.len()], *value_low, *value_high, *p_high)
            }
            EnvKind::CheckerboardMollified {
                value_low,
                value_high,
                p_high,
                cell_x,
                cell_t,
                smoothing,
            } => {
                let d = x.len();
                // per-axis coordinates in cell units
                let mut u = [0.0f64; 3];
                for i in 0..d {
                    u[i] = (x[i] + self.offset_x[i]) / cell_x;
                }
                u[d] = (t + self.offset_t) / cell_t;
                // box kernel of half-width `smoothing` per axis: at most two
                // cells overlap, with weights given by the overlap lengths
                let mut base = [0i64; 3];
                let mut w_hi = [0.0f64; 3];
                for i in 0..=d {
                    let lo = u[i] - smoothing;
                    let c = lo.floor();
                    base[i] = c as i64;
                    // part of the kernel lying in cell c+1
                    let over = (u[i] + smoothing - (c + 1.0)).max(0.0);
                    w_hi[i] = (over / (2.0 * smoothing)).min(1.0);
                }
                let mut acc = 0.0;
                let mut cells = [0i64; 3];
                for mask in 0..(1usize << (d + 1)) {
                    let mut w = 1.0;
                    for i in 0..=d {
                        let hi_side = (mask >> i) & 1 == 1;
                        w *= if hi_side { w_hi[i] } else { 1.0 - w_hi[i] };
                        cells[i] = base[i] + if hi_side { 1 } else { 0 };
                    }
                    if w > 0.0 {
                        acc += w * self.cell_value(&cells[..=d], *value_low, *value_high, *p_high);
                    }
                }
                acc
            }
        }
    }

    #[inline]
    fn cell_value(&self, cells: &[i64], lo: f64, hi: f64, p_high: f64) -> f64 {
        if unit_f64(cell_hash(self.seed, cells)) < p_high {
            hi
        } else {
            lo
        }
    }

    /// Translated sample: `translate(e, v).value(p) == e.value(p + v)`
    /// exactly (same floating-point operations in the same order).
    pub fn translate(&self, shift: &SpaceTimePoint) -> EnvSample {
        let mut out = self.clone();
        out.shifts.insert(0, (shift.x.clone(), shift.t));
        out
    }

    /// Cache key for solver row caching: `Some(time cell index)` when the
    /// field is piecewise constant in time, `None` when every step needs a
    /// fresh evaluation.
    pub(crate) fn time_cache_key(&self, t: f64) -> Option<i64> {
        match &self.spec.kind {
            EnvKind::Constant { .. } | EnvKind::Periodic { .. } => Some(0),
            EnvKind::CheckerboardIid { cell_t, .. } => {
                let mut ts = t;
                for (_, st) in &self.shifts {
                    ts += st;
                }
                Some(((ts + self.offset_t) / cell_t).floor() as i64)
            }
            EnvKind::CheckerboardMollified { .. } => None,
        }
    }
}

/// Monte Carlo decorrelation estimate and its standard error.
#[derive(Clone, Debug, Serialize)]
pub struct DecorrelationEstimate {
    pub covariance_abs: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// Estimates `|Cov(f, g_r)|` where `f` is the probe-mean of the field over
/// the unit cube `C_1` and `g_r` is the same functional translated in space
/// so the windows sit at parabolic distance at least `r`; `r = 0` reuses the
/// same window, so the estimate is the variance of the window mean.
pub fn decorrelation_estimate(
    spec: &EnvSpec,
    r: f64,
    n_samples: usize,
    seed: u64,
) -> Result<DecorrelationEstimate> {
    if n_samples < 2 {
        return Err(Error::param("n_samples", "need at least 2 samples"));
    }
    let d = spec.d;
    let probes_per_axis = 8usize;
    let mut probes: Vec<(Vec<f64>, f64)> = Vec::new();
    let step = 2.0 / probes_per_axis as f64;
    let tstep = 1.0 / probes_per_axis as f64;
    let axis: Vec<f64> = (0..probes_per_axis).map(|i| -1.0 + (i as f64 + 0.5) * step).collect();
    let taxis: Vec<f64> = (0..probes_per_axis).map(|i| -1.0 + (i as f64 + 0.5) * tstep).collect();
    match d {
        1 => {
            for &x in &axis {
                for &t in &taxis {
                    probes.push((vec![x], t));
                }
            }
        }
        _ => {
            for &x in &axis {
                for &y in &axis {
                    for &t in &taxis {
                        probes.push((vec![x, y], t));
                    }
                }
            }
        }
    }
    let shift = if r > 0.0 { 2.0 + r } else { 0.0 };
    let mut fs = Vec::with_capacity(n_samples);
    let mut gs = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let env = sample_env(spec, derive_seed(seed, "decorrelation", i as u64));
        let mut f_acc = 0.0;
        let mut g_acc = 0.0;
        let mut xbuf = vec![0.0; d];
        for (x, t) in &probes {
            f_acc += env.value(x, *t);
            xbuf.copy_from_slice(x);
            xbuf[0] += shift;
            g_acc += env.value(&xbuf, *t);
        }
        fs.push(f_acc / probes.len() as f64);
        gs.push(g_acc / probes.len() as f64);
    }
    let f_mean = stats::mean(&fs);
    let g_mean = stats::mean(&gs);
    let prods: Vec<f64> = fs.iter().zip(&gs).map(|(f, g)| (f - f_mean) * (g - g_mean)).collect();
    let cov = stats::mean(&prods) * n_samples as f64 / (n_samples - 1) as f64;
    let se = stats::stderr(&prods);
    Ok(DecorrelationEstimate { covariance_abs: cov.abs(), stderr: se, n_samples })
}
