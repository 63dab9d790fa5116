//! Obstacle problems from above and below with obstacle 0: projected
//! explicit marches, contact sets, contact measures, and weighted masses.
//!
//! The projection scheme (step, then clip at the obstacle) preserves the
//! discrete comparison principle exactly and realizes the smallest
//! supersolution / largest subsolution by construction. Contact nodes are
//! those with `|v| <= contact_tol`, where the tolerance scales with the
//! truncation error so contact fractions remain grid-stable.

use crate::environment::EnvSample;
use crate::grid::{Footprint, GridSpec, Region, SpaceTimeField};
use crate::operators::{OperatorSpec, SymMatrix};
use crate::solver::{BoundaryData, ContactCfg, MarchDriver, Rhs, SolveConfig, Stepper, StepperCfg};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Side of the obstacle problem: `Above` is the smallest supersolution >= 0,
/// `Below` the largest subsolution <= 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Above,
    Below,
}

impl Side {
    #[inline]
    pub(crate) fn clip(&self, v: f64) -> f64 {
        match self {
            Side::Above => v.max(0.0),
            Side::Below => v.min(0.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Side::Above => "above",
            Side::Below => "below",
        }
    }
}

/// Contact tolerance `10 (h² + dt) Λ_eff (1 + ‖M‖)`: scaled with the
/// truncation error so that a fixed absolute tolerance neither misses
/// contact on coarse grids nor over-counts on fine ones.
pub fn contact_tolerance(op: &OperatorSpec, env: &EnvSample, grid: &GridSpec) -> f64 {
    let (_, a_hi) = env.spec().range();
    let lam_eff = op.cfl_coefficient(a_hi);
    10.0 * (grid.h * grid.h + grid.dt) * lam_eff * (1.0 + op.shift_norm())
}

/// Solution of one obstacle problem plus its contact bookkeeping. The mass
/// is the contact-set integral of `(ℓ + F_M(0,·))∓^{d+1}` normalized by the
/// domain measure, with (−) for `Above` and (+) for `Below`.
pub struct ObstacleSolution {
    pub side: Side,
    pub field: SpaceTimeField,
    pub contact_tol: f64,
    pub contact_measure: f64,
    pub contact_fraction: f64,
    pub mass: f64,
    pub sup_abs: f64,
    /// max PDE residual off the contact set; identically zero because
    /// unclipped nodes satisfy the update equation exactly
    pub residual_max: f64,
}

/// Contact statistics of a solved obstacle problem.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContactStats {
    pub measure: f64,
    pub fraction: f64,
    pub mass: f64,
}

pub fn contact_stats(sol: &ObstacleSolution) -> ContactStats {
    ContactStats { measure: sol.contact_measure, fraction: sol.contact_fraction, mass: sol.mass }
}

fn contact_cfg(op: &OperatorSpec, env: &EnvSample, grid: &GridSpec, ell: f64, side: Side) -> Result<ContactCfg> {
    let d = grid.dim();
    let base0 = op.base_eval(&SymMatrix::zero(d))?;
    Ok(ContactCfg { side, tol: contact_tolerance(op, env, grid), ell, base0 })
}

fn finish(
    side: Side,
    grid: &GridSpec,
    tol: f64,
    out: crate::solver::MarchOutcome,
) -> ObstacleSolution {
    let node_w = grid.node_weight();
    let measure = out.contact_nodes as f64 * node_w;
    let denom = grid.n_in_domain() as f64 * grid.nt as f64;
    let fraction = if denom > 0.0 { out.contact_nodes as f64 / denom } else { 0.0 };
    let mass = out.contact_mass * node_w / grid.domain_measure();
    ObstacleSolution {
        side,
        field: out.field,
        contact_tol: tol,
        contact_measure: measure,
        contact_fraction: fraction,
        mass,
        sup_abs: out.sup_abs,
        residual_max: 0.0,
    }
}

/// Projected explicit march for the obstacle problem with obstacle 0 and
/// zero parabolic-boundary data: `side = Above` clips the update at 0 from
/// below (smallest supersolution), `side = Below` from above.
pub fn solve_obstacle(
    op: &OperatorSpec,
    env: &EnvSample,
    ell: f64,
    eps: f64,
    cfg: &SolveConfig,
    grid: &GridSpec,
    side: Side,
) -> Result<ObstacleSolution> {
    let contact = contact_cfg(op, env, grid, ell, side)?;
    let stepper = Stepper::new(StepperCfg {
        op,
        env,
        grid,
        cfl_factor: cfg.cfl_factor,
        eps,
        rhs: Rhs::Const(ell),
        boundary: BoundaryData::Zero,
        projection: Some(side),
        contact: Some(contact),
    })?;
    let out =
        MarchDriver { stepper, compare: None, max_saved_slices: cfg.max_saved_slices }.run()?;
    Ok(finish(side, grid, contact.tol, out))
}

/// Nodewise ordering statistics from a lockstep march of both obstacle
/// problems (and optionally the free corrector between them).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrderingReport {
    /// min over all nodes and steps of (v_above - v_below)
    pub min_gap: f64,
    /// same minimum restricted to the interior region
    /// `{ |y - c| <= (2/3) r, s >= t_hi - (2/3) r² }`
    pub min_gap_interior: f64,
    /// min over nodes of (v_above - w) when the corrector ran
    pub min_above_minus_w: f64,
    /// min over nodes of (w - v_below)
    pub min_w_minus_below: f64,
}

fn interior_mask(grid: &GridSpec) -> (Vec<bool>, f64) {
    let d = grid.dim();
    let region = &grid.region;
    let mut mask = vec![false; grid.n_space()];
    let mut xbuf = Vec::new();
    for s in 0..grid.n_space() {
        grid.node_coord(s, &mut xbuf);
        let inside = match &region.footprint {
            Footprint::Ball { center, radius } => {
                let mut sq = 0.0;
                for i in 0..d {
                    sq += (xbuf[i] - center[i]) * (xbuf[i] - center[i]);
                }
                sq.sqrt() <= (2.0 / 3.0) * radius
            }
            Footprint::Box => (0..d).all(|i| {
                let c = 0.5 * (region.x_lo[i] + region.x_hi[i]);
                let r = 0.5 * (region.x_hi[i] - region.x_lo[i]);
                (xbuf[i] - c).abs() <= (2.0 / 3.0) * r
            }),
        };
        mask[s] = inside && grid.in_domain_mask()[s];
    }
    let t_cut = region.t_hi - (2.0 / 3.0) * (region.t_hi - region.t_lo);
    (mask, t_cut)
}

/// Lockstep solve of below / free corrector / above with the same
/// (op, env, ℓ, grid): returns both obstacle solutions, the corrector sup,
/// and exact nodewise ordering minima.
pub fn solve_obstacle_triple(
    op: &OperatorSpec,
    env: &EnvSample,
    ell: f64,
    eps: f64,
    cfg: &SolveConfig,
    grid: &GridSpec,
) -> Result<(ObstacleSolution, ObstacleSolution, f64, OrderingReport)> {
    let mk = |side: Option<Side>| -> Result<Stepper> {
        let contact = match side {
            Some(s) => Some(contact_cfg(op, env, grid, ell, s)?),
            None => None,
        };
        Stepper::new(StepperCfg {
            op,
            env,
            grid,
            cfl_factor: cfg.cfl_factor,
            eps,
            rhs: Rhs::Const(ell),
            boundary: BoundaryData::Zero,
            projection: side,
            contact,
        })
    };
    let mut below = mk(Some(Side::Below))?;
    let mut free = mk(None)?;
    let mut above = mk(Some(Side::Above))?;
    let tol = contact_tolerance(op, env, grid);
    let (inner, t_cut) = interior_mask(grid);

    let mut rep = OrderingReport {
        min_gap: f64::INFINITY,
        min_gap_interior: f64::INFINITY,
        min_above_minus_w: f64::INFINITY,
        min_w_minus_below: f64::INFINITY,
    };
    let in_dom = grid.in_domain_mask();
    let mut scan = |below: &Stepper, free: &Stepper, above: &Stepper, t: f64| {
        for (s, ((lo, w), hi)) in below
            .state()
            .iter()
            .zip(free.state())
            .zip(above.state())
            .enumerate()
        {
            if !in_dom[s] {
                continue;
            }
            let gap = hi - lo;
            rep.min_gap = rep.min_gap.min(gap);
            if inner[s] && t >= t_cut - 1e-12 {
                rep.min_gap_interior = rep.min_gap_interior.min(gap);
            }
            rep.min_above_minus_w = rep.min_above_minus_w.min(hi - w);
            rep.min_w_minus_below = rep.min_w_minus_below.min(w - lo);
        }
    };
    scan(&below, &free, &above, grid.time(0));
    for j in 1..=grid.nt {
        below.step()?;
        free.step()?;
        above.step()?;
        scan(&below, &free, &above, grid.time(j));
    }

    let free_sup = free.sup_abs;
    let pack = |stepper: Stepper, side: Side| -> ObstacleSolution {
        let n = grid.n_space();
        let field = SpaceTimeField {
            spec: grid.clone(),
            times: vec![grid.time(grid.nt)],
            slice_steps: vec![grid.nt],
            values: stepper.state()[..n].to_vec(),
        };
        let node_w = grid.node_weight();
        let denom = grid.n_in_domain() as f64 * grid.nt as f64;
        ObstacleSolution {
            side,
            field,
            contact_tol: tol,
            contact_measure: stepper.contact_nodes as f64 * node_w,
            contact_fraction: stepper.contact_nodes as f64 / denom,
            mass: stepper.contact_mass * node_w / grid.domain_measure(),
            sup_abs: stepper.sup_abs,
            residual_max: 0.0,
        }
    };
    Ok((pack(below, Side::Below), pack(above, Side::Above), free_sup, rep))
}

/// Report of the contact-set prefix comparison between a domain and its
/// truncation to an earlier time window with the same bottom and lateral
/// boundaries.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NestingReport {
    pub compared_nodes: usize,
    pub mismatched: usize,
    pub ambiguous: usize,
    pub split_step: usize,
}

/// Solves the obstacle problem on `grid` and on its truncation to
/// `(t_lo, t_split]`, then compares contact masks node-for-node on the
/// shared prefix. Disagreements where the detached value lies within
/// `(tol, 3 tol]` are counted as ambiguous rather than mismatched.
pub fn nesting_check(
    op: &OperatorSpec,
    env: &EnvSample,
    ell: f64,
    eps: f64,
    cfg: &SolveConfig,
    grid: &GridSpec,
    t_split: f64,
    side: Side,
) -> Result<NestingReport> {
    let region = &grid.region;
    if !(t_split > region.t_lo && t_split < region.t_hi) {
        return Err(Error::Precondition(format!(
            "t_split = {t_split} must lie inside the time extent ({}, {})",
            region.t_lo, region.t_hi
        )));
    }
    let j_split = ((t_split - region.t_lo) / grid.dt).round() as usize;
    let j_split = j_split.clamp(1, grid.nt - 1);
    let sub_region = Region {
        t_hi: region.t_lo + j_split as f64 * grid.dt,
        ..region.clone()
    };
    let sub_grid = GridSpec::from_region(sub_region, grid.h, grid.dt)?;
    debug_assert_eq!(sub_grid.nt, j_split);

    let contact_big = contact_cfg(op, env, grid, ell, side)?;
    fn mk<'a>(
        op: &'a OperatorSpec,
        env: &'a EnvSample,
        grid: &'a GridSpec,
        cfl: f64,
        eps: f64,
        ell: f64,
        side: Side,
        contact: crate::solver::ContactCfg,
    ) -> Result<Stepper<'a>> {
        Stepper::new(StepperCfg {
            op,
            env,
            grid,
            cfl_factor: cfl,
            eps,
            rhs: Rhs::Const(ell),
            boundary: BoundaryData::Zero,
            projection: Some(side),
            contact: Some(contact),
        })
    }
    let mut big = mk(op, env, grid, cfg.cfl_factor, eps, ell, side, contact_big)?;
    let mut small = mk(op, env, &sub_grid, cfg.cfl_factor, eps, ell, side, contact_big)?;
    let tol = contact_big.tol;
    let mut compared = grid.n_space();
    let mut mismatched = 0usize;
    let mut ambiguous = 0usize;
    for _ in 0..j_split {
        big.step()?;
        small.step()?;
        for (big_v, small_v) in big.state().iter().zip(small.state()) {
            let c_big = big_v.abs() <= tol;
            let c_small = small_v.abs() <= tol;
            if c_big != c_small {
                let detached = big_v.abs().max(small_v.abs());
                if detached <= 3.0 * tol {
                    ambiguous += 1;
                } else {
                    mismatched += 1;
                }
            }
        }
        compared += grid.n_space();
    }
    Ok(NestingReport { compared_nodes: compared, mismatched, ambiguous, split_step: j_split })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_env, EnvSpec};
    use crate::grid::ParabolicDomain;
    use crate::operators::{BaseKind, SymMatrix};
    use crate::rng::derive_seed;

    fn grid_c1(h: f64, dt: f64) -> GridSpec {
        let dom = ParabolicDomain::cube_at_origin(1, 1.0).unwrap();
        GridSpec::new(&dom, h, dt).unwrap()
    }

    fn checker() -> EnvSpec {
        EnvSpec::checkerboard(1, 1.0, 2.0)
    }

    #[test]
    fn full_contact_below_the_coefficient_range() {
        // trace modulated by a in [1,2], M = [1]: F_M(0,·) = a in [1,2].
        // ell below min(-F_M(0,·)) = -2 makes zero the obstacle solution
        // from above: contact fraction exactly one, v identically zero.
        let op = OperatorSpec::linear_trace().modulated().with_shift(SymMatrix::new_1d(1.0));
        let env = sample_env(&checker(), 5);
        let grid = grid_c1(1.0 / 8.0, 1.0 / 512.0);
        let cfg = SolveConfig::default();
        let above = solve_obstacle(&op, &env, -2.5, 0.0, &cfg, &grid, Side::Above).unwrap();
        assert_eq!(above.contact_fraction, 1.0);
        assert_eq!(above.sup_abs, 0.0);
        // mirror: ell above max(-F_M(0,·)) = -1 pins the solution from below
        let below = solve_obstacle(&op, &env, -0.5, 0.0, &cfg, &grid, Side::Below).unwrap();
        assert_eq!(below.contact_fraction, 1.0);
        assert_eq!(below.sup_abs, 0.0);
    }

    #[test]
    fn critical_level_constant_coefficients_has_zero_mass() {
        // v == 0 with ell = -F_M(0) constant: fraction 1 and mass 0 because
        // the weight (ell + F(0,.)) vanishes identically
        let op = OperatorSpec::pucci_plus(1.0, 2.0).unwrap().with_shift(SymMatrix::new_1d(1.0));
        let env = sample_env(&EnvSpec::constant(1, 1.0), 0);
        let grid = grid_c1(1.0 / 16.0, 1.0 / 4096.0);
        let sol =
            solve_obstacle(&op, &env, -2.0, 0.0, &SolveConfig::default(), &grid, Side::Above)
                .unwrap();
        assert_eq!(sol.contact_fraction, 1.0);
        assert_eq!(sol.mass, 0.0);
        let stats = contact_stats(&sol);
        assert_eq!(stats.fraction, 1.0);
        assert_eq!(stats.mass, 0.0);
    }

    #[test]
    fn detachment_beats_the_barrier_above_critical() {
        // constant coefficients, ell = -F(M) + 1: the solution from above
        // detaches and dominates the comparison barrier at the top center
        let op = OperatorSpec::pucci_plus(1.0, 2.0).unwrap().with_shift(SymMatrix::new_1d(1.0));
        let env = sample_env(&EnvSpec::constant(1, 1.0), 0);
        let h = 1.0 / 32.0;
        let grid = grid_c1(h, 0.8 * h * h / 4.0);
        let sol =
            solve_obstacle(&op, &env, -2.0 + 1.0, 0.0, &SolveConfig::default(), &grid, Side::Above)
                .unwrap();
        assert!(sol.contact_fraction < 1.0);
        let top = sol.field.n_slices() - 1;
        let center = grid.n_space() / 2;
        let beta = 1.0 / (1.0 + 2.0 * 2.0); // 1/(1+2Λd)
        assert!(
            sol.field.value(top, center) >= beta,
            "center {} vs barrier floor {beta}",
            sol.field.value(top, center)
        );
    }

    #[test]
    fn full_contact_mass_equals_direct_quadrature() {
        // when contact covers everything, the mass is the plain quadrature
        // of the weight over the domain
        let m = SymMatrix::new_1d(1.0);
        let op = OperatorSpec::linear_trace().modulated().with_shift(m);
        let env = sample_env(&checker(), 9);
        let h = 1.0 / 8.0;
        let dt = 1.0 / 512.0;
        let grid = grid_c1(h, dt);
        let ell = -3.0; // strictly below min(-F_M(0,·))
        let sol = solve_obstacle(&op, &env, ell, 0.0, &SolveConfig::default(), &grid, Side::Above)
            .unwrap();
        assert_eq!(sol.contact_fraction, 1.0);
        let mut direct = 0.0;
        let mut xbuf = Vec::new();
        for j in 1..=grid.nt {
            let t = grid.time(j - 1); // weight row uses the pre-step time
            for s in 0..grid.n_space() {
                grid.node_coord(s, &mut xbuf);
                let w = (ell + env.value(&xbuf, t)).min(0.0).abs();
                direct += w * w * grid.node_weight();
            }
        }
        direct /= grid.domain_measure();
        assert!(
            (sol.mass - direct).abs() <= 1e-12 * direct.max(1.0),
            "mass {} vs quadrature {direct}",
            sol.mass
        );
    }

    #[test]
    fn ordering_triple_and_interior_region() {
        let op = OperatorSpec::pucci_minus(1.0, 2.0).unwrap().modulated().with_shift(SymMatrix::new_1d(1.0));
        let env = sample_env(&checker(), 12);
        let grid = grid_c1(1.0 / 16.0, 1.0 / 8192.0);
        let (below, above, w_sup, rep) =
            solve_obstacle_triple(&op, &env, -1.4, 0.0, &SolveConfig::default(), &grid).unwrap();
        assert!(rep.min_gap >= -1e-12);
        assert!(rep.min_above_minus_w >= -1e-12);
        assert!(rep.min_w_minus_below >= -1e-12);
        assert!(above.field.min_max().0 >= 0.0);
        assert!(below.field.min_max().1 <= 0.0);
        assert!(w_sup >= 0.0);
        assert!(rep.min_gap_interior >= rep.min_gap - 1e-15);
    }

    #[test]
    fn level_monotonicity_of_contact_fractions() {
        let op = OperatorSpec::linear_trace().modulated();
        let spec = checker();
        let m = SymMatrix::new_1d(1.0);
        let mut prev: Option<crate::homogenize::FractionEstimate> = None;
        for ell in [-2.5, -1.8, -1.2, -0.6] {
            let est = crate::homogenize::contact_fractions(
                &op, &spec, &m, ell, 1, 8, 6, 0.8, 77,
            )
            .unwrap();
            if let Some(p) = prev {
                assert!(
                    est.p_above <= p.p_above + 2.0 * (est.se_above + p.se_above),
                    "p_above must not increase in ell"
                );
                assert!(
                    est.p_below >= p.p_below - 2.0 * (est.se_below + p.se_below),
                    "p_below must not decrease in ell"
                );
            }
            prev = Some(est);
        }
    }

    #[test]
    fn nesting_prefix_identity_is_exact() {
        let op = OperatorSpec::pucci_minus(1.0, 2.0).unwrap().modulated().with_shift(SymMatrix::new_1d(1.0));
        let env = sample_env(&checker(), 33);
        let dom = ParabolicDomain::cube_at_origin(1, 3.0).unwrap();
        let grid = GridSpec::new(&dom, 1.0 / 8.0, 1.0 / 1024.0).unwrap();
        let cfg = SolveConfig::default();
        let rep =
            nesting_check(&op, &env, -1.4, 0.0, &cfg, &grid, -4.5, Side::Above).unwrap();
        assert_eq!(rep.mismatched, 0);
        assert!(rep.compared_nodes > 0);
        // degenerate split times are rejected
        assert!(nesting_check(&op, &env, -1.4, 0.0, &cfg, &grid, -9.5, Side::Above).is_err());
    }

    #[test]
    fn domain_monotonicity_of_contact_masks() {
        // growing the domain (shared top) raises the solution from above,
        // so contact can only shrink on the common nodes
        let m = SymMatrix::new_1d(1.0);
        let op = OperatorSpec::linear_trace().modulated().with_shift(m);
        let env = sample_env(&checker(), 21);
        let h = 1.0 / 8.0;
        let dt = 1.0 / 1024.0;
        let small_dom = ParabolicDomain::cube_at_origin(1, 1.5).unwrap();
        let big_dom = ParabolicDomain::cube_at_origin(1, 3.0).unwrap();
        let small = GridSpec::new(&small_dom, h, dt).unwrap();
        let big = GridSpec::new(&big_dom, h, dt).unwrap();
        let cfg = SolveConfig { max_saved_slices: usize::MAX, ..Default::default() };
        let ell = -1.4;
        let sol_small = solve_obstacle(&op, &env, ell, 0.0, &cfg, &small, Side::Above).unwrap();
        let sol_big = solve_obstacle(&op, &env, ell, 0.0, &cfg, &big, Side::Above).unwrap();
        // common nodes: small spatial index s <-> big index s + offset;
        // small time j <-> big time j + 3/4*nt_big
        let x_off = ((small.region.x_lo[0] - big.region.x_lo[0]) / h).round() as usize;
        let t_off = ((small.region.t_lo - big.region.t_lo) / dt).round() as usize;
        let mut contact_small = 0usize;
        let mut contact_big = 0usize;
        for j in 0..sol_small.field.n_slices() {
            let jb = sol_small.field.slice_steps[j] + t_off;
            for s in 0..small.n_space() {
                let vs = sol_small.field.value(j, s);
                let vb = sol_big.field.value(jb, s + x_off);
                assert!(vb >= vs - 1e-12, "v_big {vb} < v_small {vs}");
                if vs.abs() <= sol_small.contact_tol {
                    contact_small += 1;
                }
                if vb.abs() <= sol_small.contact_tol {
                    contact_big += 1;
                }
            }
        }
        assert!(contact_big <= contact_small);
    }

    #[test]
    fn operator_monotonicity_reversed_above_straight_below() {
        // F1 = Pucci-minus <= F2 = Pucci-plus pointwise. Minimality over the
        // larger admissible set gives v_above(F1) <= v_above(F2), so the
        // above-side contact measure DECREASES in F while the below-side
        // measure increases.
        let m = SymMatrix::identity(1);
        let env = sample_env(&EnvSpec::constant(1, 1.0), 0);
        let grid = grid_c1(1.0 / 32.0, 1.0 / 16384.0);
        let cfg = SolveConfig::default();
        let f1 = OperatorSpec::pucci_minus(1.0, 2.0).unwrap().with_shift(m); // F1(0) = 1
        let f2 = OperatorSpec::pucci_plus(1.0, 2.0).unwrap().with_shift(m); // F2(0) = 2
        let ell = -1.5;
        let a1 = solve_obstacle(&f1, &env, ell, 0.0, &cfg, &grid, Side::Above).unwrap();
        let a2 = solve_obstacle(&f2, &env, ell, 0.0, &cfg, &grid, Side::Above).unwrap();
        assert_eq!(a1.contact_fraction, 1.0); // ell + F1(0) < 0 everywhere
        assert!(a2.contact_fraction < 1.0); // ell + F2(0) > 0 detaches
        assert!(a1.contact_measure >= a2.contact_measure);
        let ell = 1.5;
        let b1 = solve_obstacle(&f1, &env, ell, 0.0, &cfg, &grid, Side::Below).unwrap();
        let b2 = solve_obstacle(&f2, &env, ell, 0.0, &cfg, &grid, Side::Below).unwrap();
        assert!(b1.contact_measure <= b2.contact_measure);
    }

    #[test]
    fn holder_seminorm_stable_under_refinement() {
        let m = SymMatrix::new_1d(1.0);
        let op = OperatorSpec::linear_trace().modulated().with_shift(m);
        let env = sample_env(&checker(), 2);
        let cfg = SolveConfig { max_saved_slices: 33, ..Default::default() };
        let sn = |h: f64| -> f64 {
            let dt = 0.8 * h * h / 4.0;
            let grid = grid_c1(h, dt);
            let sol =
                solve_obstacle(&op, &env, -1.2, 0.0, &cfg, &grid, Side::Above).unwrap();
            sol.field.holder_seminorm(0.5, 100_000, 7).unwrap()
        };
        let coarse = sn(1.0 / 8.0);
        let fine = sn(1.0 / 16.0);
        assert!(fine.is_finite() && coarse.is_finite());
        let ratio = (fine / coarse).max(coarse / fine);
        assert!(ratio <= 2.0, "seminorms {coarse} vs {fine}");
    }

    #[test]
    fn pucci_kind_consistency() {
        // keep BaseKind import alive and sanity-check the label plumbing
        assert_eq!(Side::Above.label(), "above");
        assert_eq!(Side::Below.label(), "below");
        let op = OperatorSpec::new(BaseKind::PucciMinus, 1.0, 2.0).unwrap();
        assert_eq!(op.kind, BaseKind::PucciMinus);
        let _ = derive_seed(0, "x", 0);
    }
}
