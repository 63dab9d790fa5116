//! Subadditive averaging over nested cube families (including parabolic
//! n × n² cubes), the greedy Vitali-style covering selection, and a
//! statistical check of the maximal inequality.
//!
//! Processes are discrete: cubes live on the integer lattice and a process
//! evaluates a box `∏ [lo_i, hi_i)` against one environment. Stationarity
//! comes from the environment itself, so translated boxes see translated
//! fields.

use crate::environment::{sample_env, EnvSample, EnvSpec};
use crate::grid::{GridSpec, Region};
use crate::obstacle::{solve_obstacle, Side};
use crate::operators::OperatorSpec;
use crate::rng::derive_seed;
use crate::solver::SolveConfig;
use crate::stats;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Integer box `∏ [lo_i, hi_i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl IntBox {
    pub fn anchored(sides: &[u64]) -> Self {
        IntBox { lo: vec![0; sides.len()], hi: sides.iter().map(|&n| n as i64).collect() }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l) as f64).product()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Nested family of integer cubes exhausting the positive orthant.
#[derive(Clone, Debug)]
pub struct CubeSequence {
    pub dim: usize,
    /// per stage, the side lengths along each axis (strictly growing volume)
    pub stages: Vec<Vec<u64>>,
}

impl CubeSequence {
    pub fn custom(stages: Vec<Vec<u64>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::param("stages", "need at least one stage"));
        }
        let dim = stages[0].len();
        for w in stages.windows(2) {
            if w[0].len() != dim || w[1].len() != dim {
                return Err(Error::param("stages", "inconsistent dimensions"));
            }
            if !w[0].iter().zip(&w[1]).all(|(a, b)| a <= b) {
                return Err(Error::param("stages", "sides must be nondecreasing per axis"));
            }
            if w[0] == w[1] {
                return Err(Error::param("stages", "stages must strictly grow"));
            }
        }
        if stages.iter().any(|s| s.iter().any(|&n| n == 0)) {
            return Err(Error::param("stages", "sides must be positive"));
        }
        Ok(CubeSequence { dim, stages })
    }

    /// Standard cubes `[0, n)^d`.
    pub fn standard(d: usize, sides: &[u64]) -> Result<Self> {
        Self::custom(sides.iter().map(|&n| vec![n; d]).collect())
    }

    /// Parabolic cubes `[0, n)^d × [0, n²)`.
    pub fn parabolic(d_space: usize, sides: &[u64]) -> Result<Self> {
        Self::custom(
            sides
                .iter()
                .map(|&n| {
                    let mut v = vec![n; d_space];
                    v.push(n * n);
                    v
                })
                .collect(),
        )
    }

    pub fn stage_box(&self, j: usize) -> IntBox {
        IntBox::anchored(&self.stages[j])
    }
}

type BoxEvaluator = Arc<dyn Fn(&IntBox, &EnvSample) -> Result<f64> + Send + Sync>;

/// A nonnegative process `R(I, ω)` with `0 <= R <= C |I|`, expected to be
/// stationary and (when flagged) subadditive.
#[derive(Clone)]
pub struct SubadditiveProcess {
    pub name: &'static str,
    pub bound: f64,
    pub subadditive_expected: bool,
    evaluator: BoxEvaluator,
}

impl SubadditiveProcess {
    pub fn new(
        name: &'static str,
        bound: f64,
        subadditive_expected: bool,
        evaluator: impl Fn(&IntBox, &EnvSample) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        SubadditiveProcess { name, bound, subadditive_expected, evaluator: Arc::new(evaluator) }
    }

    pub fn eval(&self, cube: &IntBox, env: &EnvSample) -> Result<f64> {
        let v = (self.evaluator)(cube, env)?;
        if !(v >= 0.0) || v > self.bound * cube.volume() * (1.0 + 1e-9) {
            return Err(Error::Precondition(format!(
                "process {} violated its bound: R = {v}, C|I| = {}",
                self.name,
                self.bound * cube.volume()
            )));
        }
        Ok(v)
    }

    /// `R(I) = |I|`: the trivial additive volume process.
    pub fn volume() -> Self {
        Self::new("volume", 1.0, true, |cube, _| Ok(cube.volume()))
    }

    /// Additive sum of the environment value at each lattice cell center of
    /// the box; the last axis is time.
    pub fn cell_sum(a_max: f64) -> Self {
        Self::new("cell_sum", a_max, true, |cube, env| {
            let d = cube.dim() - 1;
            let mut acc = 0.0;
            let mut idx = cube.lo.clone();
            let mut x = vec![0.0; d];
            loop {
                for i in 0..d {
                    x[i] = idx[i] as f64 + 0.5;
                }
                let t = idx[d] as f64 + 0.5;
                acc += env.value(&x, t);
                // odometer over the box
                let mut axis = 0;
                loop {
                    idx[axis] += 1;
                    if idx[axis] < cube.hi[axis] {
                        break;
                    }
                    idx[axis] = cube.lo[axis];
                    axis += 1;
                    if axis == cube.dim() {
                        return Ok(acc);
                    }
                }
            }
        })
    }

    /// Contact measure of the obstacle problem on the box (last axis time):
    /// stationary and subadditive, bounded by a small multiple of |I| from
    /// the node-counted quadrature.
    pub fn contact_measure(
        op: OperatorSpec,
        ell: f64,
        side: Side,
        resolution: u32,
        cfl: f64,
    ) -> Self {
        Self::new("contact_measure", 1.5, true, move |cube, env| {
            let d = cube.dim() - 1;
            let h = 1.0 / resolution as f64;
            let (_, a_hi) = env.spec().range();
            let dt = cfl * h * h / (2.0 * d as f64 * op.cfl_coefficient(a_hi));
            let region = Region::new_box(
                cube.lo[..d].iter().map(|&v| v as f64).collect(),
                cube.hi[..d].iter().map(|&v| v as f64).collect(),
                cube.lo[d] as f64,
                cube.hi[d] as f64,
            )?;
            let grid = GridSpec::from_region(region, h, dt)?;
            let cfg = SolveConfig { cfl_factor: cfl, eps: 0.0, max_saved_slices: 2 };
            let sol = solve_obstacle(&op, env, ell, 0.0, &cfg, &grid, side)?;
            Ok(sol.contact_measure)
        })
    }
}

/// Per-stage ensemble statistics of `R(I_j, ω) / |I_j|`.
#[derive(Clone, Debug, Serialize)]
pub struct StageStats {
    pub stage: usize,
    pub volume: f64,
    pub mean: f64,
    pub variance: f64,
    /// |mean_j - mean_{j-1}| / max(|mean_j|, 1e-12)
    pub drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicReport {
    pub stages: Vec<StageStats>,
    /// relative drift between the last two stages of the pooled mean
    pub final_drift: f64,
    /// per-ω ratios, `ratios[stage][omega]`
    pub ratios: Vec<Vec<f64>>,
}

/// Evaluates `R/|I|` along the cube sequence for an ω-ensemble.
pub fn ergodic_average(
    proc: &SubadditiveProcess,
    seq: &CubeSequence,
    env_spec: &EnvSpec,
    n_env: usize,
    seed: u64,
) -> Result<ErgodicReport> {
    env_spec.validate()?;
    if env_spec.d + 1 != seq.dim {
        return Err(Error::DimensionMismatch(env_spec.d + 1, seq.dim));
    }
    let per_omega: Vec<Result<Vec<f64>>> = (0..n_env)
        .into_par_iter()
        .map(|i| {
            let env = sample_env(env_spec, derive_seed(seed, "ergodic-env", i as u64));
            let mut ratios = Vec::with_capacity(seq.stages.len());
            for j in 0..seq.stages.len() {
                let cube = seq.stage_box(j);
                ratios.push(proc.eval(&cube, &env)? / cube.volume());
            }
            Ok(ratios)
        })
        .collect();
    let mut by_omega = Vec::with_capacity(n_env);
    for r in per_omega {
        by_omega.push(r?);
    }
    let n_stages = seq.stages.len();
    let mut ratios = vec![Vec::with_capacity(n_env); n_stages];
    for row in &by_omega {
        for (j, &v) in row.iter().enumerate() {
            ratios[j].push(v);
        }
    }
    let mut stages = Vec::with_capacity(n_stages);
    let mut prev_mean: Option<f64> = None;
    for (j, col) in ratios.iter().enumerate() {
        let mean = stats::mean(col);
        let drift = match prev_mean {
            Some(p) => (mean - p).abs() / mean.abs().max(1e-12),
            None => f64::NAN,
        };
        stages.push(StageStats {
            stage: j,
            volume: seq.stage_box(j).volume(),
            mean,
            variance: stats::variance(col),
            drift,
        });
        prev_mean = Some(mean);
    }
    let final_drift = stages.last().map(|s| s.drift).unwrap_or(f64::NAN);
    Ok(ErgodicReport { stages, final_drift, ratios })
}

/// Greedy Vitali-style selection: repeatedly picks the largest-volume cube
/// (lexicographic tie-break on the anchor), discards every anchor inside its
/// 3^d dilation, and skips anchors whose cube would overlap a selected one.
/// Selected cubes are pairwise disjoint and, for nested families,
/// `3^d Σ |I_i| >= |A|`.
pub fn vitali_select(points: &[(Vec<i64>, Vec<u64>)]) -> Vec<usize> {
    let n = points.len();
    let mut active = vec![true; n];
    let mut selected: Vec<usize> = Vec::new();
    let volume = |sides: &Vec<u64>| -> f64 { sides.iter().map(|&s| s as f64).product() };
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (vb, vi) = (volume(&points[b].1), volume(&points[i].1));
                    if vi > vb || (vi == vb && points[i].0 < points[b].0) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let Some(pick) = best else { break };
        active[pick] = false;
        let (u, ns) = &points[pick];
        // overlap with an already selected cube disqualifies the pick
        let overlaps = selected.iter().any(|&s| {
            let (v, ms) = &points[s];
            u.iter().zip(ns.iter()).zip(v.iter().zip(ms.iter())).all(
                |((&ui, &ni), (&vi, &mi))| ui < vi + mi as i64 && vi < ui + ni as i64,
            )
        });
        if !overlaps {
            selected.push(pick);
            // drop every anchor in the dilated box [u - n, u + 2n)
            for i in 0..n {
                if active[i] {
                    let inside = points[i]
                        .0
                        .iter()
                        .zip(u.iter().zip(ns.iter()))
                        .all(|(&pi, (&ui, &ni))| pi >= ui - ni as i64 && pi < ui + 2 * ni as i64);
                    if inside {
                        active[i] = false;
                    }
                }
            }
        }
    }
    selected
}

/// Outcome of the randomized covering-selection verification.
#[derive(Clone, Debug, Serialize)]
pub struct VitaliCheckReport {
    pub instances: usize,
    pub disjointness_failures: usize,
    pub coverage_failures: usize,
    pub pass: bool,
}

/// Runs `instances` random nested-family covering selections in dimension
/// `d` and verifies both postconditions: selected cubes pairwise disjoint
/// (exact integer geometry) and `3^d Σ|I| >= |A|`.
pub fn vitali_randomized_check(d: usize, instances: usize, seed: u64) -> VitaliCheckReport {
    use rand::Rng;
    let mut rng = crate::rng::stream(derive_seed(seed, "vitali-check", d as u64));
    let mut disjointness_failures = 0usize;
    let mut coverage_failures = 0usize;
    for _ in 0..instances {
        let n_points = rng.random_range(1..40);
        let family: Vec<Vec<u64>> = (0..3)
            .map(|j| (0..d).map(|_| 1u64 << (j + rng.random_range(0..2))).collect())
            .collect();
        let points: Vec<(Vec<i64>, Vec<u64>)> = (0..n_points)
            .map(|_| {
                let anchor: Vec<i64> = (0..d).map(|_| rng.random_range(-20..20)).collect();
                let sides = family[rng.random_range(0..family.len())].clone();
                (anchor, sides)
            })
            .collect();
        let sel = vitali_select(&points);
        'pairs: for a in 0..sel.len() {
            for b in (a + 1)..sel.len() {
                let (u, nu) = &points[sel[a]];
                let (v, nv) = &points[sel[b]];
                let overlap = u
                    .iter()
                    .zip(nu.iter())
                    .zip(v.iter().zip(nv.iter()))
                    .all(|((&ui, &ni), (&vi, &mi))| ui < vi + mi as i64 && vi < ui + ni as i64);
                if overlap {
                    disjointness_failures += 1;
                    break 'pairs;
                }
            }
        }
        let total: f64 = sel
            .iter()
            .map(|&i| points[i].1.iter().map(|&s| s as f64).product::<f64>())
            .sum();
        if 3f64.powi(d as i32) * total < n_points as f64 {
            coverage_failures += 1;
        }
    }
    VitaliCheckReport {
        instances,
        disjointness_failures,
        coverage_failures,
        pass: disjointness_failures == 0 && coverage_failures == 0,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxIneqReport {
    pub alpha: f64,
    pub p_emp: f64,
    pub bound: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Statistical check of the maximal inequality for a nonnegative additive
/// process: `P[sup_j R/|I_j| > α] <= (3^d / α) · lim E[R/|I|]`, the limit
/// estimated on the last stage.
pub fn maximal_inequality_check(
    proc: &SubadditiveProcess,
    seq: &CubeSequence,
    env_spec: &EnvSpec,
    alpha: f64,
    n_env: usize,
    seed: u64,
) -> Result<MaxIneqReport> {
    let report = ergodic_average(proc, seq, env_spec, n_env, seed)?;
    let n_stages = seq.stages.len();
    let mut exceed = 0usize;
    for w in 0..n_env {
        if (0..n_stages).any(|j| report.ratios[j][w] > alpha) {
            exceed += 1;
        }
    }
    let p_emp = exceed as f64 / n_env as f64;
    let last = &report.ratios[n_stages - 1];
    let mean_last = stats::mean(last);
    let d = seq.dim as i32;
    let bound = 3f64.powi(d) / alpha * mean_last;
    let se_p = (p_emp * (1.0 - p_emp) / n_env as f64).sqrt();
    let se_bound = 3f64.powi(d) / alpha * stats::stderr(last);
    let stderr = se_p + se_bound;
    Ok(MaxIneqReport { alpha, p_emp, bound, stderr, pass: p_emp <= bound + 3.0 * stderr })
}

/// Spot check `R(I) <= R(I_1) + R(I_2)` on random axis splits of the
/// sequence's cubes.
pub fn subadditivity_spot_check(
    proc: &SubadditiveProcess,
    seq: &CubeSequence,
    env_spec: &EnvSpec,
    n_checks: usize,
    seed: u64,
) -> Result<f64> {
    use rand::Rng;
    let mut worst = 0.0f64;
    let mut rng = crate::rng::stream(derive_seed(seed, "subadd", 0));
    for i in 0..n_checks {
        let env = sample_env(env_spec, derive_seed(seed, "subadd-env", i as u64));
        let stage = rng.random_range(0..seq.stages.len());
        let cube = seq.stage_box(stage);
        let axis = rng.random_range(0..cube.dim());
        let lo = cube.lo[axis];
        let hi = cube.hi[axis];
        if hi - lo < 2 {
            continue;
        }
        let cut = rng.random_range(lo + 1..hi);
        let mut left = cube.clone();
        left.hi[axis] = cut;
        let mut right = cube.clone();
        right.lo[axis] = cut;
        let whole = proc.eval(&cube, &env)?;
        let parts = proc.eval(&left, &env)? + proc.eval(&right, &env)?;
        worst = worst.max(whole - parts);
    }
    Ok(worst)
}
