//! Sup/inf convolutions in space with semiconvexity checks, and the
//! qualitative separation/positivity check for the difference of the two
//! obstacle solutions.
//!
//! The convolutions are brute-force per time slice: at desk scale the O(N²)
//! maximization doubles as its own oracle.

use crate::environment::EnvSample;
use crate::grid::{GridSpec, SpaceTimeField};
use crate::obstacle::{solve_obstacle_triple, Side};
use crate::operators::OperatorSpec;
use crate::solver::SolveConfig;
use crate::{Error, Result};
use serde::Serialize;

/// Result of a sup/inf convolution: the regularized field plus the largest
/// maximizer displacement `max |x - x*|` observed.
pub struct Convolved {
    pub field: SpaceTimeField,
    pub max_displacement: f64,
}

fn convolve(u: &SpaceTimeField, theta: f64, sign: f64) -> Result<Convolved> {
    if !(theta > 0.0) {
        return Err(Error::param("theta", "need theta > 0"));
    }
    let grid = &u.spec;
    let d = grid.dim();
    let n = grid.n_space();
    let mut coords = Vec::with_capacity(n);
    let mut xbuf = Vec::new();
    for s in 0..n {
        grid.node_coord(s, &mut xbuf);
        coords.push(xbuf.clone());
    }
    let in_dom = grid.in_domain_mask();
    let mut values = vec![0.0; u.values.len()];
    let mut max_disp = 0.0f64;
    for j in 0..u.n_slices() {
        let row = u.slice(j);
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_y = s;
            for y in 0..n {
                if !in_dom[y] {
                    continue;
                }
                let mut sq = 0.0;
                for i in 0..d {
                    let dxi = coords[s][i] - coords[y][i];
                    sq += dxi * dxi;
                }
                let cand = sign * row[y] - sq / (2.0 * theta);
                if cand > best {
                    best = cand;
                    best_y = y;
                }
            }
            values[j * n + s] = sign * best;
            let mut sq = 0.0;
            for i in 0..d {
                let dxi = coords[s][i] - coords[best_y][i];
                sq += dxi * dxi;
            }
            max_disp = max_disp.max(sq.sqrt());
        }
    }
    Ok(Convolved {
        field: SpaceTimeField {
            spec: grid.clone(),
            times: u.times.clone(),
            slice_steps: u.slice_steps.clone(),
            values,
        },
        max_displacement: max_disp,
    })
}

/// x-sup convolution `ū_θ(x,t) = max_y [u(y,t) - |x-y|²/(2θ)]`, per time slice.
pub fn sup_convolution_x(u: &SpaceTimeField, theta: f64) -> Result<Convolved> {
    convolve(u, theta, 1.0)
}

/// x-inf convolution `u̲_θ(x,t) = min_y [u(y,t) + |x-y|²/(2θ)]`.
pub fn inf_convolution_x(u: &SpaceTimeField, theta: f64) -> Result<Convolved> {
    convolve(u, theta, -1.0)
}

/// Which one-sided curvature bound to verify.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvexSide {
    /// output of a sup convolution: `D²_h u >= -(1/θ)(1 + h²/θ)`
    Semiconvex,
    /// output of an inf convolution: `D²_h u <= +(1/θ)(1 + h²/θ)`
    Semiconcave,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SemiconvexityReport {
    /// worst signed directional second difference (min for semiconvex,
    /// max for semiconcave)
    pub extreme_second_diff: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks the discrete directional second differences (axes and, for d = 2,
/// the two diagonals) of a convolved field against the one-sided bound.
pub fn semiconvexity_check(
    u: &SpaceTimeField,
    theta: f64,
    side: ConvexSide,
) -> Result<SemiconvexityReport> {
    if !(theta > 0.0) {
        return Err(Error::param("theta", "need theta > 0"));
    }
    let grid = &u.spec;
    let d = grid.dim();
    let n = grid.n_space();
    let h2 = grid.h * grid.h;
    let bound = (1.0 / theta) * (1.0 + h2 / theta);
    let mut extreme = 0.0f64;
    let mut update = |delta: f64| match side {
        ConvexSide::Semiconvex => extreme = extreme.min(delta),
        ConvexSide::Semiconcave => extreme = extreme.max(delta),
    };
    for j in 0..u.n_slices() {
        let row = u.slice(j);
        if d == 1 {
            for i in 1..n - 1 {
                update((row[i - 1] - 2.0 * row[i] + row[i + 1]) / h2);
            }
        } else {
            let row_len = grid.nx[1] + 1;
            let lateral = grid.lateral_mask();
            for s in 0..n {
                if lateral[s] {
                    continue;
                }
                update((row[s - row_len] - 2.0 * row[s] + row[s + row_len]) / h2);
                update((row[s - 1] - 2.0 * row[s] + row[s + 1]) / h2);
                update((row[s - row_len - 1] - 2.0 * row[s] + row[s + row_len + 1]) / (2.0 * h2));
                update((row[s - row_len + 1] - 2.0 * row[s] + row[s + row_len - 1]) / (2.0 * h2));
            }
        }
    }
    let pass = match side {
        ConvexSide::Semiconvex => extreme >= -bound - 1e-12,
        ConvexSide::Semiconcave => extreme <= bound + 1e-12,
    };
    Ok(SemiconvexityReport { extreme_second_diff: extreme, bound, pass })
}

/// Separation of the two obstacle solutions: `h = v̄ - v̲` with its interior
/// minimum over `{ |y| <= (2/3) r, s >= t_hi - (2/3) r² }` and the weighted
/// mass product. Positivity of the interior minimum is asserted only when
/// the mass product clears `theta_mass`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeparationReport {
    pub min_h_global: f64,
    pub min_h_interior: f64,
    pub mass_above: f64,
    pub mass_below: f64,
    pub mass_product: f64,
    pub positive: bool,
    /// false only if the mass product cleared the threshold while the
    /// interior minimum failed to be positive
    pub pass: bool,
}

/// Runs both obstacle problems in lockstep and reports the separation
/// statistics of their difference.
pub fn separation_check(
    op: &OperatorSpec,
    env: &EnvSample,
    ell: f64,
    eps: f64,
    cfg: &SolveConfig,
    grid: &GridSpec,
    theta_mass: f64,
) -> Result<SeparationReport> {
    let (below, above, _w_sup, ordering) = solve_obstacle_triple(op, env, ell, eps, cfg, grid)?;
    debug_assert_eq!(below.side, Side::Below);
    debug_assert_eq!(above.side, Side::Above);
    if ordering.min_gap < -1e-12 {
        return Err(Error::Precondition(format!(
            "obstacle ordering violated: min (v_above - v_below) = {}",
            ordering.min_gap
        )));
    }
    let mass_product = above.mass * below.mass;
    let positive = ordering.min_gap_interior > 0.0;
    let pass = mass_product < theta_mass || positive;
    Ok(SeparationReport {
        min_h_global: ordering.min_gap,
        min_h_interior: ordering.min_gap_interior,
        mass_above: above.mass,
        mass_below: below.mass,
        mass_product,
        positive,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_env, EnvSpec};
    use crate::grid::ParabolicDomain;
    use crate::operators::SymMatrix;

    fn test_grid(h: f64) -> GridSpec {
        let dom = ParabolicDomain::cube_at_origin(1, 1.0).unwrap();
        GridSpec::new(&dom, h, 0.25).unwrap()
    }

    #[test]
    fn sup_convolution_of_linear_data() {
        // u = a·x: ū_θ = a·x + θa²/2 away from the boundary truncation
        let grid = test_grid(1.0 / 64.0);
        let a = 1.25;
        let theta = 0.1;
        let u = SpaceTimeField::from_fn(&grid, |x, _| a * x[0]);
        let conv = sup_convolution_x(&u, theta).unwrap();
        let expect_bump = theta * a * a / 2.0;
        // interior: the maximizer x + aθ = x + 0.125 stays in the domain
        let n = grid.n_space();
        let mut err = 0.0f64;
        for s in 0..n {
            let x = grid.region.x_lo[0] + s as f64 * grid.h;
            if x.abs() < 0.5 {
                err = err.max((conv.field.value(0, s) - (a * x + expect_bump)).abs());
            }
        }
        let quad_err = grid.h * grid.h / theta;
        assert!(err <= quad_err, "err {err} vs allowance {quad_err}");
        // ū >= u always
        for (c, v) in conv.field.values.iter().zip(&u.values) {
            assert!(c >= v);
        }
        // maximizer displacement obeys |x - x*| <= 2θ·Lip(u) + h
        assert!(conv.max_displacement <= 2.0 * theta * a + grid.h + 1e-12);
    }

    #[test]
    fn sup_convolution_of_concave_parabola() {
        // u = -x²/2: ū_θ = -x²/(2(1+θ))
        let grid = test_grid(1.0 / 64.0);
        let theta = 0.25;
        let u = SpaceTimeField::from_fn(&grid, |x, _| -x[0] * x[0] / 2.0);
        let conv = sup_convolution_x(&u, theta).unwrap();
        let n = grid.n_space();
        let mut err = 0.0f64;
        for s in 0..n {
            let x = grid.region.x_lo[0] + s as f64 * grid.h;
            if x.abs() < 0.7 {
                let expect = -x * x / (2.0 * (1.0 + theta));
                err = err.max((conv.field.value(0, s) - expect).abs());
            }
        }
        assert!(err <= grid.h * grid.h / theta, "err {err}");
    }

    #[test]
    fn tiny_theta_reproduces_the_field() {
        // θ below h²/(2·osc): the penalty dominates and y = x wins
        let grid = test_grid(1.0 / 16.0);
        let u = SpaceTimeField::from_fn(&grid, |x, t| (3.0 * x[0]).sin() + 0.2 * t);
        let osc = {
            let (lo, hi) = u.min_max();
            hi - lo
        };
        let theta = grid.h * grid.h / (2.0 * osc) * 0.9;
        let conv = sup_convolution_x(&u, theta).unwrap();
        assert_eq!(conv.field.values, u.values);
        assert_eq!(conv.max_displacement, 0.0);
    }

    #[test]
    fn inf_convolution_mirrors_sup() {
        let grid = test_grid(1.0 / 32.0);
        let u = SpaceTimeField::from_fn(&grid, |x, _| (2.0 * x[0]).cos());
        let theta = 0.05;
        let lo = inf_convolution_x(&u, theta).unwrap();
        let neg = SpaceTimeField::from_fn(&grid, |x, _| -(2.0 * x[0]).cos());
        let hi = sup_convolution_x(&neg, theta).unwrap();
        for (a, b) in lo.field.values.iter().zip(&hi.field.values) {
            assert!((a + b).abs() < 1e-12);
        }
        for (c, v) in lo.field.values.iter().zip(&u.values) {
            assert!(c <= v);
        }
    }

    #[test]
    fn convolution_is_monotone() {
        let grid = test_grid(1.0 / 32.0);
        let u = SpaceTimeField::from_fn(&grid, |x, _| (2.0 * x[0]).sin());
        let v = SpaceTimeField::from_fn(&grid, |x, _| (2.0 * x[0]).sin() + 0.3 + 0.1 * x[0]);
        let cu = sup_convolution_x(&u, 0.1).unwrap();
        let cv = sup_convolution_x(&v, 0.1).unwrap();
        for (a, b) in cu.field.values.iter().zip(&cv.field.values) {
            assert!(a <= b);
        }
    }

    #[test]
    fn semiconvexity_bound_holds_after_convolution_and_fails_on_sawtooth() {
        let grid = test_grid(1.0 / 64.0);
        let theta = 0.05;
        // a genuinely nonsmooth field
        let saw = SpaceTimeField::from_fn(&grid, |x, _| (8.0 * x[0]).sin().asin().abs());
        let raw = semiconvexity_check(&saw, theta, ConvexSide::Semiconvex).unwrap();
        assert!(!raw.pass, "sawtooth should fail: {raw:?}");
        let conv = sup_convolution_x(&saw, theta).unwrap();
        let rep = semiconvexity_check(&conv.field, theta, ConvexSide::Semiconvex).unwrap();
        assert!(rep.pass, "{rep:?}");
        // inf convolution gives the mirrored bound
        let iconv = inf_convolution_x(&saw, theta).unwrap();
        let rep = semiconvexity_check(&iconv.field, theta, ConvexSide::Semiconcave).unwrap();
        assert!(rep.pass, "{rep:?}");
        // constant fields pass trivially
        let c = SpaceTimeField::from_fn(&grid, |_, _| 4.0);
        assert!(semiconvexity_check(&c, theta, ConvexSide::Semiconvex).unwrap().pass);
    }

    #[test]
    fn separation_constant_coefficients() {
        let h = 1.0 / 32.0;
        let dom = ParabolicDomain::cube_at_origin(1, 1.0).unwrap();
        let grid = GridSpec::new(&dom, h, 0.8 * h * h / 4.0).unwrap();
        let env = sample_env(&EnvSpec::constant(1, 1.0), 0);
        let op = OperatorSpec::pucci_minus(1.0, 2.0).unwrap().with_shift(SymMatrix::new_1d(1.0));
        let cfg = SolveConfig::default();
        // at the critical level both solutions vanish: h ≡ 0, masses 0
        let rep = separation_check(&op, &env, -1.0, 0.0, &cfg, &grid, 1e-3).unwrap();
        assert_eq!(rep.min_h_global, 0.0);
        assert_eq!(rep.mass_product, 0.0);
        assert!(rep.pass);
        // one unit above critical: v̄ detaches, v̲ stays zero, h > 0 inside
        let rep = separation_check(&op, &env, 0.0, 0.0, &cfg, &grid, 1e-3).unwrap();
        assert!(rep.min_h_interior > 0.0, "{rep:?}");
        assert!(rep.pass);
    }
}
