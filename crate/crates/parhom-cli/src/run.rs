//! Experiment runners: each maps a validated config to CSV files, a JSON
//! summary, and a list of failed scientific assertions. Everything is a
//! pure function of (config, seed); elapsed times never enter the outputs.

use crate::config::*;
use crate::emit::{csv_table, emit_report, fmt17, ReportFormat};
use crate::CliError;
use parhom_core::environment::sample_env;
use parhom_core::ergodic::{
    ergodic_average, maximal_inequality_check, subadditivity_spot_check, vitali_randomized_check,
    CubeSequence, SubadditiveProcess,
};
use parhom_core::grid::{DomainKind, GridSpec, ParabolicDomain, Region, SpaceTimePoint};
use parhom_core::homogenize::{
    barrier_beta, contact_fractions, corrector_decay, ellipticity_of_fbar, estimate_fbar,
    homogenization_experiment, EffectiveEstimate, EffectiveTable, Method, TableEntry,
};
use parhom_core::moments::{
    estimate_moments, monotonicity_check, product_decay, variance_decay_check, MomentReport,
};
use parhom_core::obstacle::{nesting_check, solve_obstacle_triple, Side};
use parhom_core::regularity::{
    inf_convolution_x, semiconvexity_check, separation_check, sup_convolution_x, ConvexSide,
};
use parhom_core::rng::derive_seed;
use parhom_core::solver::{comparison_check, solve_parabolic, Rhs, SolveConfig};
use parhom_core::{grid::SpaceTimeField, EnvSpec, OperatorSpec, SymMatrix};
use serde_json::{json, Value};

pub const VERSION: &str =
    concat!(env!("CARGO_PKG_VERSION"), "+", env!("PARHOM_GIT_DESCRIBE"));

/// Everything one run produces.
pub struct RunOutput {
    /// (file name, contents)
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
    pub failures: Vec<String>,
}

impl RunOutput {
    fn new() -> Self {
        RunOutput { files: Vec::new(), summary: Value::Null, failures: Vec::new() }
    }

    fn fail(&mut self, msg: impl Into<String>) {
        self.failures.push(msg.into());
    }
}

fn cfl_dt(op: &OperatorSpec, env_spec: &EnvSpec, d: usize, h: f64, cfl: f64) -> f64 {
    let (_, a_hi) = env_spec.range();
    cfl * h * h / (2.0 * d as f64 * op.cfl_coefficient(a_hi))
}

fn scale_cube_grid(
    d: usize,
    scale_k: u32,
    resolution: u32,
    op: &OperatorSpec,
    env_spec: &EnvSpec,
    cfl: f64,
) -> Result<GridSpec, CliError> {
    let h = 1.0 / resolution as f64;
    let dom = ParabolicDomain::cube_at_origin(d, 3f64.powi(scale_k as i32))?;
    Ok(GridSpec::new(&dom, h, cfl_dt(op, env_spec, d, h, cfl))?)
}

/// Dispatches one parsed config; `seed_override` implements `--seed`.
pub fn run_config(cfg: &Config, seed_override: Option<u64>) -> Result<RunOutput, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = seed_override {
        cfg.experiment.seed = seed;
    }
    let mut out = match cfg.experiment.kind {
        ExperimentKind::Solve => run_solve(&cfg)?,
        ExperimentKind::Corrector => run_corrector(&cfg)?,
        ExperimentKind::Obstacle => run_obstacle(&cfg)?,
        ExperimentKind::Effective => run_effective(&cfg)?,
        ExperimentKind::Rate => run_rate(&cfg)?,
        ExperimentKind::Moments => run_moments(&cfg)?,
        ExperimentKind::Ergodic => run_ergodic(&cfg)?,
        ExperimentKind::Regularity => run_regularity(&cfg)?,
    };
    let mut summary = serde_json::Map::new();
    summary.insert("version".into(), json!(VERSION));
    summary.insert("experiment".into(), json!(cfg.experiment.kind.label()));
    summary.insert("seed".into(), json!(cfg.experiment.seed));
    summary.insert(
        "config".into(),
        serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?,
    );
    summary.insert("metrics".into(), std::mem::replace(&mut out.summary, Value::Null));
    summary.insert("failures".into(), json!(out.failures));
    out.summary = Value::Object(summary);
    Ok(out)
}

fn section<'a, T>(opt: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    opt.as_ref()
        .ok_or_else(|| CliError::Config(format!("{name}: section missing")))
}

fn run_solve(cfg: &Config) -> Result<RunOutput, CliError> {
    let sec = section(&cfg.solve, "solve")?;
    let env_spec = &cfg.environment;
    let d = env_spec.d;
    let seed = cfg.experiment.seed;
    let mut out = RunOutput::new();

    if let Some(pairs) = sec.comparison_pairs {
        // randomized comparison-principle battery, one row per operator kind
        let h = 1.0 / cfg.grid.resolution as f64;
        let mut rows = Vec::new();
        let mut worst_overall = 0.0f64;
        for op_sec in cfg.operator_sections() {
            let op = op_sec.to_spec()?;
            let dom = ParabolicDomain::cube_at_origin(d, sec.radius)?;
            let grid = GridSpec::new(&dom, h, cfl_dt(&op, env_spec, d, h, cfg.grid.cfl_factor))?;
            let env = sample_env(env_spec, derive_seed(seed, "solve-env", 0));
            let scfg = SolveConfig {
                cfl_factor: cfg.grid.cfl_factor,
                eps: sec.eps,
                max_saved_slices: 2,
            };
            let rep = comparison_check(&op, &env, &scfg, &grid, pairs, seed)?;
            if !rep.pass {
                out.fail(format!(
                    "comparison principle violated for {}: worst = {}",
                    op_sec.describe(),
                    rep.worst_violation
                ));
            }
            worst_overall = worst_overall.max(rep.worst_violation);
            rows.push(vec![
                op_sec.describe(),
                rep.pairs.to_string(),
                fmt17(rep.worst_violation),
                rep.pass.to_string(),
            ]);
        }
        out.files.push((
            "comparison.csv".into(),
            csv_table("kind,pairs,worst_violation,pass", &rows).into_bytes(),
        ));
        out.summary = json!({ "worst_violation": worst_overall });
        return Ok(out);
    }

    let op = cfg
        .operator_sections()
        .first()
        .ok_or_else(|| CliError::Config("operator: missing".into()))?
        .to_spec()?;
    let kind = match sec.domain {
        DomainCfg::Cube => DomainKind::Cube,
        DomainCfg::Cylinder => DomainKind::Cylinder,
        DomainCfg::Forward => DomainKind::Forward,
    };
    let dom = parhom_core::make_domain(kind, SpaceTimePoint::new(vec![0.0; d], 0.0), sec.radius)?;
    let h = 1.0 / cfg.grid.resolution as f64;
    let grid = GridSpec::new(&dom, h, cfl_dt(&op, env_spec, d, h, cfg.grid.cfl_factor))?;
    let env = sample_env(env_spec, derive_seed(seed, "solve-env", 0));
    let scfg =
        SolveConfig { cfl_factor: cfg.grid.cfl_factor, eps: sec.eps, max_saved_slices: 129 };
    let boundary = sec.boundary.to_data(&grid.region);
    let solved = solve_parabolic(&op, &env, &scfg, &grid, Rhs::Const(sec.rhs), boundary)?;

    let mut rows = Vec::new();
    for j in 0..solved.field.n_slices() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..grid.n_space() {
            if grid.in_domain_mask()[s] {
                let v = solved.field.value(j, s);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        rows.push(vec![fmt17(solved.field.times[j]), fmt17(lo), fmt17(hi)]);
    }
    out.files
        .push(("slices.csv".into(), csv_table("t,min,max", &rows).into_bytes()));
    let holder = match sec.holder_alpha {
        Some(alpha) => {
            Some(solved.field.holder_seminorm(alpha, 200_000, derive_seed(seed, "holder", 0))?)
        }
        None => None,
    };
    out.summary = json!({
        "sup_abs": solved.sup_abs,
        "steps": solved.steps,
        "h": grid.h,
        "dt": grid.dt,
        "holder_seminorm": holder,
    });
    Ok(out)
}

fn resolve_level(
    cfg: &Config,
    op: &OperatorSpec,
    m: &SymMatrix,
    ell: Option<f64>,
    offset: f64,
    estimate: &EstimateCfg,
    tag: &str,
) -> Result<(f64, Option<f64>), CliError> {
    match ell {
        Some(v) => Ok((v + offset, None)),
        None => {
            let opts = estimate.to_options(
                Method::CorrectorZero,
                cfg.grid.cfl_factor,
                cfg.experiment.n_env,
            );
            let est = estimate_fbar(
                op,
                &cfg.environment,
                m,
                &opts,
                derive_seed(cfg.experiment.seed, tag, 0),
            )?;
            Ok((-est.fbar + offset, Some(est.fbar)))
        }
    }
}

fn run_corrector(cfg: &Config) -> Result<RunOutput, CliError> {
    let sec = section(&cfg.corrector, "corrector")?;
    let env_spec = &cfg.environment;
    let seed = cfg.experiment.seed;
    let op = cfg.operator_sections()[0].to_spec()?;
    let m = parse_matrix(&sec.m, "corrector.m")?;
    let mut out = RunOutput::new();
    let (ell, fbar_est) =
        resolve_level(cfg, &op, &m, sec.ell, sec.ell_offset, &sec.estimate, "corrector-level")?;
    let threshold = match (sec.threshold_c, sec.threshold_c_exp) {
        (Some(c0), Some(c1)) => Some((c0, c1)),
        _ => None,
    };
    let report = corrector_decay(
        &op,
        env_spec,
        &m,
        ell,
        &sec.eps_list,
        cfg.experiment.n_env,
        cfg.grid.cfl_factor,
        threshold,
        seed,
    )?;
    let mut rows = Vec::new();
    for r in &report.records {
        rows.push(vec![
            fmt17(r.eps),
            r.n_env.to_string(),
            fmt17(r.q10),
            fmt17(r.median),
            fmt17(r.q90),
            fmt17(r.se_median),
            r.exceed_fraction.map(fmt17).unwrap_or_default(),
        ]);
    }
    out.files.push((
        "corrector_decay.csv".into(),
        csv_table("eps,n,q10,median,q90,se_median,exceed_fraction", &rows).into_bytes(),
    ));
    if sec.assert_nonincreasing {
        for w in report.records.windows(2) {
            let slack = 2.0 * (w[0].se_median + w[1].se_median);
            if w[1].median > w[0].median + slack {
                out.fail(format!(
                    "corrector median increased from eps {} to {}: {} -> {}",
                    w[0].eps, w[1].eps, w[0].median, w[1].median
                ));
            }
        }
    }
    let beta = barrier_beta(&op, env_spec);
    if sec.assert_floor && sec.ell_offset.abs() > 0.0 {
        let floor = 0.5 * beta * sec.ell_offset.abs();
        for r in &report.records {
            if r.median < floor {
                out.fail(format!(
                    "corrector floor violated at eps {}: median {} < {}",
                    r.eps, r.median, floor
                ));
            }
        }
    }
    out.summary = json!({
        "ell": ell,
        "fbar_estimate": fbar_est,
        "slope_median": report.slope_median,
        "barrier_beta": beta,
        "medians": report.records.iter().map(|r| r.median).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn run_obstacle(cfg: &Config) -> Result<RunOutput, CliError> {
    let sec = section(&cfg.obstacle, "obstacle")?;
    let env_spec = &cfg.environment;
    let d = env_spec.d;
    let seed = cfg.experiment.seed;
    let op = cfg.operator_sections()[0].to_spec()?;
    let m = parse_matrix(&sec.m, "obstacle.m")?;
    let shifted = op.clone().with_shift(m);
    let mut out = RunOutput::new();

    let grid = scale_cube_grid(d, sec.scale_k, cfg.grid.resolution, &shifted, env_spec, cfg.grid.cfl_factor)?;
    let scfg = SolveConfig { cfl_factor: cfg.grid.cfl_factor, eps: sec.eps, max_saved_slices: 2 };
    let env = sample_env(env_spec, derive_seed(seed, "obstacle-env", 0));
    let (below, above, w_sup, ordering) =
        solve_obstacle_triple(&shifted, &env, sec.ell, sec.eps, &scfg, &grid)?;

    // sign constraints are exact by projection
    let above_min = above.field.min_max().0;
    let below_max = below.field.min_max().1;
    if above_min < 0.0 {
        out.fail(format!("obstacle-from-above dips negative: {above_min}"));
    }
    if below_max > 0.0 {
        out.fail(format!("obstacle-from-below rises positive: {below_max}"));
    }
    if ordering.min_gap < -1e-12 {
        out.fail(format!("ordering v_below <= v_above violated: {}", ordering.min_gap));
    }
    if ordering.min_above_minus_w < -1e-12 || ordering.min_w_minus_below < -1e-12 {
        out.fail(format!(
            "corrector not between obstacle solutions: above-w {}, w-below {}",
            ordering.min_above_minus_w, ordering.min_w_minus_below
        ));
    }

    let mut rows = vec![
        vec![
            "above".to_string(),
            fmt17(above.contact_measure),
            fmt17(above.contact_fraction),
            fmt17(above.mass),
            fmt17(above.contact_tol),
            fmt17(above.residual_max),
        ],
        vec![
            "below".to_string(),
            fmt17(below.contact_measure),
            fmt17(below.contact_fraction),
            fmt17(below.mass),
            fmt17(below.contact_tol),
            fmt17(below.residual_max),
        ],
    ];
    out.files.push((
        "obstacle.csv".into(),
        csv_table("side,measure,fraction,mass,contact_tol,residual_max", &rows.drain(..).collect::<Vec<_>>())
            .into_bytes(),
    ));

    // ℓ-monotonicity ladder of ensemble contact fractions
    let mut ladder_rows = Vec::new();
    if sec.ladder.len() >= 2 {
        let mut ladder = sec.ladder.clone();
        ladder.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prev: Option<(f64, parhom_core::homogenize::FractionEstimate)> = None;
        for &ell in &ladder {
            let est = contact_fractions(
                &op,
                env_spec,
                &m,
                ell,
                sec.scale_k,
                cfg.grid.resolution,
                cfg.experiment.n_env,
                cfg.grid.cfl_factor,
                derive_seed(seed, "ladder", 0),
            )?;
            ladder_rows.push(vec![
                fmt17(ell),
                fmt17(est.p_above),
                fmt17(est.p_below),
                fmt17(est.se_above),
                fmt17(est.se_below),
            ]);
            if let Some((pell, pest)) = prev {
                let slack_a = 2.0 * (est.se_above + pest.se_above);
                let slack_b = 2.0 * (est.se_below + pest.se_below);
                if est.p_above > pest.p_above + slack_a {
                    out.fail(format!(
                        "p_above increased in ell: {} -> {} at ell {} -> {}",
                        pest.p_above, est.p_above, pell, ell
                    ));
                }
                if est.p_below < pest.p_below - slack_b {
                    out.fail(format!(
                        "p_below decreased in ell: {} -> {} at ell {} -> {}",
                        pest.p_below, est.p_below, pell, ell
                    ));
                }
            }
            prev = Some((ell, est));
        }
        out.files.push((
            "fractions_ladder.csv".into(),
            csv_table("ell,p_above,p_below,se_above,se_below", &ladder_rows).into_bytes(),
        ));
    }

    // contact-set prefix identity on the truncated domain
    let t_split = grid.region.t_lo + sec.nesting_split * (grid.region.t_hi - grid.region.t_lo);
    let nest = nesting_check(&shifted, &env, sec.ell, sec.eps, &scfg, &grid, t_split, Side::Above)?;
    if nest.mismatched != 0 {
        out.fail(format!("nesting mismatch count {}", nest.mismatched));
    }

    out.summary = json!({
        "ell": sec.ell,
        "above": { "fraction": above.contact_fraction, "mass": above.mass },
        "below": { "fraction": below.contact_fraction, "mass": below.mass },
        "w_sup": w_sup,
        "ordering": ordering,
        "nesting": nest,
    });
    Ok(out)
}

struct EstimateRow {
    op_label: String,
    m: SymMatrix,
    est: EffectiveEstimate,
    expected: Option<f64>,
}

fn run_effective(cfg: &Config) -> Result<RunOutput, CliError> {
    let sec = section(&cfg.effective, "effective")?;
    let env_spec = &cfg.environment;
    let seed = cfg.experiment.seed;
    let mut out = RunOutput::new();

    let matrices: Vec<SymMatrix> = match &sec.matrices {
        Some(list) => list
            .iter()
            .map(|e| parse_matrix(e, "effective.matrices"))
            .collect::<Result<_, _>>()?,
        None => {
            if sec.ms.is_empty() {
                return Err(CliError::Config("effective.ms: need at least one matrix".into()));
            }
            sec.ms.iter().map(|&v| SymMatrix::new_1d(v)).collect()
        }
    };
    for m in &matrices {
        if m.dim() != env_spec.d {
            return Err(CliError::Config(format!(
                "effective.matrices: matrix dimension {} does not match environment.d = {}",
                m.dim(),
                env_spec.d
            )));
        }
    }

    let env_is_constant = {
        let (lo, hi) = env_spec.range();
        lo == hi
    };
    let mut rows: Vec<EstimateRow> = Vec::new();
    for op_sec in cfg.operator_sections() {
        let op = op_sec.to_spec()?;
        for (mi, m) in matrices.iter().enumerate() {
            for method in sec.method.methods() {
                let opts = sec.estimate.to_options(method, cfg.grid.cfl_factor, cfg.experiment.n_env);
                let est = estimate_fbar(
                    &op,
                    env_spec,
                    m,
                    &opts,
                    derive_seed(seed, "effective", mi as u64),
                )?;
                let expected = if env_is_constant {
                    let shifted = op.clone().with_shift(*m);
                    let base = shifted.base_eval(&SymMatrix::zero(env_spec.d))?;
                    let a = env_spec.range().0;
                    Some(if op.modulated { a * base } else { base })
                } else {
                    None
                };
                rows.push(EstimateRow { op_label: op_sec.describe(), m: *m, est, expected });
            }
        }
    }

    let mut csv_rows = Vec::new();
    for r in &rows {
        csv_rows.push(vec![
            r.op_label.clone(),
            format!("\"{:?}\"", r.m),
            r.est.method.label().to_string(),
            fmt17(r.est.fbar),
            fmt17(r.est.ell_lo),
            fmt17(r.est.ell_hi),
            r.est.solves.to_string(),
            r.expected.map(fmt17).unwrap_or_default(),
        ]);
    }
    out.files.push((
        "effective.csv".into(),
        csv_table("operator,m,method,fbar,ell_lo,ell_hi,solves,f_exact", &csv_rows).into_bytes(),
    ));

    if let Some(tol_fac) = sec.assert_fixed_point {
        for r in &rows {
            let Some(expect) = r.expected else {
                out.fail("assert_fixed_point requires a constant environment".to_string());
                break;
            };
            let tol = tol_fac * (1.0 + expect.abs());
            if (r.est.fbar - expect).abs() > tol {
                out.fail(format!(
                    "fixed point missed for {} {:?} [{}]: fbar {} vs F(M) {} (tol {})",
                    r.op_label,
                    r.m,
                    r.est.method.label(),
                    r.est.fbar,
                    expect,
                    tol
                ));
            }
        }
    }
    if let (Some(expect), Some(rtol)) = (sec.expect_fbar, sec.expect_rtol) {
        for r in &rows {
            if ((r.est.fbar - expect) / expect).abs() > rtol {
                out.fail(format!(
                    "expected fbar {expect} within {rtol} relative, got {} [{}]",
                    r.est.fbar,
                    r.est.method.label()
                ));
            }
        }
    }
    if sec.assert_method_agreement && sec.method == MethodChoice::Both {
        // finite-scale level resolution of each estimator: the dichotomy
        // transition smears over a few contact tolerances (shrinking like
        // 1/r^2 with the cube scale), and the corrector sign test cannot
        // resolve levels below sup|w| / (beta r^2) by the barrier bound
        let h = 1.0 / sec.estimate.resolution as f64;
        let r2 = 9f64.powi(sec.estimate.scale_k as i32);
        for pair in rows.chunks(2) {
            if pair.len() < 2 {
                continue;
            }
            let (a, b) = (&pair[0], &pair[1]);
            let op = cfg.operator_sections()[0].to_spec()?;
            let (_, a_hi) = env_spec.range();
            let coef = op.cfl_coefficient(a_hi);
            let dt = cfl_dt(&op, env_spec, env_spec.d, h, cfg.grid.cfl_factor);
            let tol_contact = 10.0 * (h * h + dt) * coef * (1.0 + a.m.norm());
            let beta = barrier_beta(&op, env_spec);
            let w_sup = a.est.corrector_sup.or(b.est.corrector_sup).unwrap_or(0.0);
            let slack = (a.est.ell_hi - a.est.ell_lo)
                + (b.est.ell_hi - b.est.ell_lo)
                + 8.0 * tol_contact / r2
                + w_sup / (beta * r2);
            if (a.est.fbar - b.est.fbar).abs() > slack {
                out.fail(format!(
                    "methods disagree for {:?}: {} vs {} (slack {})",
                    a.m, a.est.fbar, b.est.fbar, slack
                ));
            }
        }
    }

    // d = 1 scalar table from the last method's entries
    let mut table_json = None;
    if env_spec.d == 1 && matrices.len() >= 2 {
        let method = *sec.method.methods().last().unwrap();
        let entries: Vec<TableEntry> = rows
            .iter()
            .filter(|r| r.est.method == method && r.op_label == cfg.operator_sections()[0].describe())
            .map(|r| TableEntry {
                m: r.m.entry(0, 0),
                fbar: r.est.fbar,
                ell_lo: r.est.ell_lo,
                ell_hi: r.est.ell_hi,
            })
            .collect();
        if entries.len() >= 2 {
            let table = EffectiveTable::from_entries(entries, sec.normalize_table)?;
            if sec.check_ellipticity {
                if table.entries.len() >= 3 {
                    let op = cfg.operator_sections()[0].to_spec()?;
                    let (a_lo, a_hi) = env_spec.range();
                    let (lo, hi) = op.ellipticity_envelope(env_spec.d, a_lo, a_hi);
                    let rep = ellipticity_of_fbar(&table, lo, hi)?;
                    if !rep.pass {
                        out.fail(format!(
                            "effective table violates ellipticity: {:?}",
                            rep.violations
                        ));
                    }
                } else {
                    out.fail("check_ellipticity needs at least 3 sampled matrices".to_string());
                }
            }
            let name = sec.table_out.clone().unwrap_or_else(|| "fbar_table.json".into());
            out.files.push((name, table.to_json().into_bytes()));
            table_json = Some(serde_json::to_value(&table).unwrap());
        }
    }

    out.summary = json!({
        "estimates": rows
            .iter()
            .map(|r| {
                json!({
                    "operator": r.op_label,
                    "m": r.m,
                    "method": r.est.method.label(),
                    "fbar": r.est.fbar,
                    "ell_lo": r.est.ell_lo,
                    "ell_hi": r.est.ell_hi,
                    "solves": r.est.solves,
                    "f_exact": r.expected,
                })
            })
            .collect::<Vec<_>>(),
        "table": table_json,
    });
    Ok(out)
}

fn run_rate(cfg: &Config) -> Result<RunOutput, CliError> {
    let sec = section(&cfg.rate, "rate")?;
    let env_spec = &cfg.environment;
    if env_spec.d != 1 {
        return Err(CliError::Config("rate: requires environment.d = 1".into()));
    }
    let seed = cfg.experiment.seed;
    let op = cfg.operator_sections()[0].to_spec()?;
    let mut out = RunOutput::new();

    let method = sec.table_method.methods()[0];
    let opts = sec.estimate.to_options(method, cfg.grid.cfl_factor, cfg.experiment.n_env);
    let (table, _) = EffectiveTable::estimate(
        &op,
        env_spec,
        &sec.table_ms,
        &opts,
        true,
        derive_seed(seed, "rate-table", 0),
    )?;

    let region = Region::new_box(vec![-1.0], vec![1.0], 0.0, 1.0)?;
    let boundary = sec.boundary.to_data(&region);
    let report = homogenization_experiment(
        &op,
        env_spec,
        &boundary,
        &sec.eps_list,
        &table,
        cfg.experiment.n_env,
        cfg.grid.cfl_factor,
        sec.effective_resolution,
        seed,
    )?;

    let mut rows = Vec::new();
    for r in &report.records {
        rows.push(vec![
            fmt17(r.eps),
            r.n_env.to_string(),
            fmt17(r.median),
            fmt17(r.q90),
            fmt17(r.mean),
            fmt17(r.se_median),
            fmt17(r.se_q90),
        ]);
    }
    out.files.push((
        "rate.csv".into(),
        csv_table("eps,n,median,q90,mean,se_median,se_q90", &rows).into_bytes(),
    ));
    out.files.push(("fbar_table.json".into(), table.to_json().into_bytes()));

    if sec.assert_decreasing {
        for w in report.records.windows(2) {
            let slack_m = 2.0 * (w[0].se_median + w[1].se_median);
            if w[1].median > w[0].median + slack_m {
                out.fail(format!(
                    "median error increased from eps {} to {}: {} -> {}",
                    w[0].eps, w[1].eps, w[0].median, w[1].median
                ));
            }
            let slack_q = 2.0 * (w[0].se_q90 + w[1].se_q90);
            if w[1].q90 > w[0].q90 + slack_q {
                out.fail(format!(
                    "q90 error increased from eps {} to {}: {} -> {}",
                    w[0].eps, w[1].eps, w[0].q90, w[1].q90
                ));
            }
        }
    }
    out.summary = json!({
        "slope_median": report.slope_median,
        "medians": report.records.iter().map(|r| r.median).collect::<Vec<_>>(),
        "q90s": report.records.iter().map(|r| r.q90).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn run_moments(cfg: &Config) -> Result<RunOutput, CliError> {
    let sec = section(&cfg.moments, "moments")?;
    let env_spec = &cfg.environment;
    let seed = cfg.experiment.seed;
    let op = cfg.operator_sections()[0].to_spec()?;
    let m = parse_matrix(&sec.m, "moments.m")?;
    let mut out = RunOutput::new();
    let (ell, fbar_est) =
        resolve_level(cfg, &op, &m, sec.ell, sec.ell_offset, &sec.estimate, "moments-level")?;

    let mut reports: Vec<MomentReport> = estimate_moments(
        &op,
        env_spec,
        &m,
        ell,
        &sec.k_list,
        cfg.grid.resolution,
        cfg.experiment.n_env,
        cfg.grid.cfl_factor,
        seed,
    )?;

    let rows: Vec<_> = reports.iter().flat_map(|r| r.rows()).collect();
    out.files.push(("moments.csv".into(), emit_report(&rows, ReportFormat::Csv)?));
    out.files.push(("moments.json".into(), emit_report(&rows, ReportFormat::Json)?));

    for r in &reports {
        for (label, s) in [("above", &r.above), ("below", &r.below)] {
            if !(0.0..=1.0 + 1e-12).contains(&s.e) || !(0.0..=1.0 + 1e-12).contains(&s.j) {
                out.fail(format!("moments outside [0,1] at k={} {label}: E={} J={}", r.k, s.e, s.j));
            }
            if s.j < s.e * s.e - 3.0 * s.se_j - 1e-12 {
                out.fail(format!("Cauchy-Schwarz violated at k={} {label}: J={} E^2={}", r.k, s.j, s.e * s.e));
            }
        }
    }

    if sec.negative_control {
        reports.reverse();
    }
    if sec.assert_monotone && reports.len() >= 2 {
        let rep = monotonicity_check(&reports)?;
        if !rep.pass {
            out.fail(format!("scale monotonicity failed: {:?}", rep.pairs));
        }
        out.summary = json!({ "monotonicity": rep });
    }
    let mono = std::mem::replace(&mut out.summary, Value::Null);

    let product = if reports.len() >= 3 {
        let rep = product_decay(&reports)?;
        if sec.assert_product_decay && !rep.decreasing_ok {
            out.fail(format!("product of second moments not decaying: {:?}", rep.j_products));
        }
        Some(rep)
    } else {
        None
    };

    let variance = match sec.variance_parent_k {
        Some(pk) => {
            let rep = variance_decay_check(
                &op,
                env_spec,
                &m,
                ell,
                pk,
                cfg.grid.resolution,
                cfg.experiment.n_env,
                sec.variance_side,
                cfg.grid.cfl_factor,
                derive_seed(seed, "vardecay", 0),
            )?;
            if !rep.pass {
                out.fail(format!(
                    "variance decay bound failed: lhs {} > rhs {} + 3se {}",
                    rep.lhs, rep.rhs, rep.se_lhs
                ));
            }
            Some(rep)
        }
        None => None,
    };

    out.summary = json!({
        "ell": ell,
        "fbar_estimate": fbar_est,
        "monotonicity": mono,
        "product_decay": product,
        "variance_decay": variance,
    });
    Ok(out)
}

fn run_ergodic(cfg: &Config) -> Result<RunOutput, CliError> {
    let sec = section(&cfg.ergodic, "ergodic")?;
    let env_spec = &cfg.environment;
    let seed = cfg.experiment.seed;
    let mut out = RunOutput::new();
    let d = env_spec.d;
    let seq = match sec.sequence {
        SequenceKind::Standard => CubeSequence::standard(d + 1, &sec.sides)?,
        SequenceKind::Parabolic => CubeSequence::parabolic(d, &sec.sides)?,
    };
    let (_, a_hi) = env_spec.range();
    let op = cfg.operator_sections()[0].to_spec()?;
    let proc = match sec.process {
        ProcessKind::Volume => SubadditiveProcess::volume(),
        ProcessKind::CellSum => SubadditiveProcess::cell_sum(a_hi),
        ProcessKind::ContactMeasure => SubadditiveProcess::contact_measure(
            op,
            sec.ell,
            Side::Above,
            cfg.grid.resolution,
            cfg.grid.cfl_factor,
        ),
    };

    let report = ergodic_average(&proc, &seq, env_spec, cfg.experiment.n_env, seed)?;
    let mut rows = Vec::new();
    for s in &report.stages {
        rows.push(vec![
            s.stage.to_string(),
            fmt17(s.volume),
            fmt17(s.mean),
            fmt17(s.variance),
            fmt17(s.drift),
        ]);
    }
    out.files.push((
        "ergodic_stages.csv".into(),
        csv_table("stage,volume,mean,variance,drift", &rows).into_bytes(),
    ));
    if let Some(tol) = sec.drift_tol {
        if !(report.final_drift <= tol) {
            out.fail(format!("last-two-stage drift {} exceeds {}", report.final_drift, tol));
        }
    }

    let vitali = if sec.vitali_instances > 0 {
        let mut reports = Vec::new();
        for dim in 1..=3usize {
            let rep = vitali_randomized_check(dim, sec.vitali_instances, derive_seed(seed, "vitali", dim as u64));
            if !rep.pass {
                out.fail(format!("covering selection failed in d={dim}: {rep:?}"));
            }
            reports.push(rep);
        }
        Some(reports)
    } else {
        None
    };

    let max_ineq = match sec.alpha {
        Some(alpha) => {
            let rep = maximal_inequality_check(&proc, &seq, env_spec, alpha, cfg.experiment.n_env, seed)?;
            if !rep.pass {
                out.fail(format!(
                    "maximal inequality failed: p {} > bound {} + 3se {}",
                    rep.p_emp, rep.bound, rep.stderr
                ));
            }
            Some(rep)
        }
        None => None,
    };

    let subadd = if sec.subadditivity_checks > 0 && proc.subadditive_expected {
        let worst = subadditivity_spot_check(&proc, &seq, env_spec, sec.subadditivity_checks, seed)?;
        if worst > 1e-9 {
            out.fail(format!("subadditivity violated by {worst}"));
        }
        Some(worst)
    } else {
        None
    };

    out.summary = json!({
        "stages": report.stages,
        "final_drift": report.final_drift,
        "vitali": vitali,
        "maximal_inequality": max_ineq,
        "subadditivity_worst": subadd,
    });
    Ok(out)
}

fn run_regularity(cfg: &Config) -> Result<RunOutput, CliError> {
    let sec = section(&cfg.regularity, "regularity")?;
    let env_spec = &cfg.environment;
    let d = env_spec.d;
    let seed = cfg.experiment.seed;
    let theta = sec.theta;
    let mut out = RunOutput::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let check = |out: &mut RunOutput, rows: &mut Vec<Vec<String>>, name: &str, value: f64, bound: f64, pass: bool| {
        rows.push(vec![name.to_string(), fmt17(value), fmt17(bound), pass.to_string()]);
        if !pass {
            out.fail(format!("regularity check {name}: value {value}, bound {bound}"));
        }
    };

    let dom = ParabolicDomain::cube_at_origin(1, 1.0)?;
    let grid = GridSpec::new(&dom, 1.0 / cfg.grid.resolution as f64, 0.25)?;
    let h = grid.h;
    let quad_allow = h * h / theta;

    // closed-form oracle: linear data gains theta a^2/2 in the interior
    let a = 1.25;
    let linear = SpaceTimeField::from_fn(&grid, |x, _| a * x[0]);
    let conv = sup_convolution_x(&linear, theta)?;
    let mut err = 0.0f64;
    for s in 0..grid.n_space() {
        let x = grid.region.x_lo[0] + s as f64 * h;
        if x.abs() < 1.0 - 2.0 * theta * a - h {
            err = err.max((conv.field.value(0, s) - (a * x + theta * a * a / 2.0)).abs());
        }
    }
    check(&mut out, &mut rows, "sup_conv_linear", err, quad_allow, err <= quad_allow);

    // closed-form oracle: concave parabola rescales by 1/(1+theta)
    let quad = SpaceTimeField::from_fn(&grid, |x, _| -x[0] * x[0] / 2.0);
    let conv = sup_convolution_x(&quad, theta)?;
    let mut err = 0.0f64;
    for s in 0..grid.n_space() {
        let x = grid.region.x_lo[0] + s as f64 * h;
        if x.abs() < 0.7 {
            err = err.max((conv.field.value(0, s) + x * x / (2.0 * (1.0 + theta))).abs());
        }
    }
    check(&mut out, &mut rows, "sup_conv_quadratic", err, quad_allow, err <= quad_allow);

    // semiconvexity after convolution, with the sawtooth negative control
    let saw = SpaceTimeField::from_fn(&grid, |x, _| (8.0 * x[0]).sin().asin().abs());
    let raw = semiconvexity_check(&saw, theta, ConvexSide::Semiconvex)?;
    check(&mut out, &mut rows, "sawtooth_negative_control", raw.extreme_second_diff, -raw.bound, !raw.pass);
    let conv = sup_convolution_x(&saw, theta)?;
    let rep = semiconvexity_check(&conv.field, theta, ConvexSide::Semiconvex)?;
    check(&mut out, &mut rows, "semiconvexity_sup", rep.extreme_second_diff, -rep.bound, rep.pass);
    let iconv = inf_convolution_x(&saw, theta)?;
    let rep = semiconvexity_check(&iconv.field, theta, ConvexSide::Semiconcave)?;
    check(&mut out, &mut rows, "semiconcavity_inf", rep.extreme_second_diff, rep.bound, rep.pass);

    // separation of the obstacle pair at the configured levels
    let op = cfg.operator_sections()[0].to_spec()?;
    let m = parse_matrix(&sec.m, "regularity.m")?;
    let shifted = op.clone().with_shift(m);
    let sep_grid = scale_cube_grid(d, 0, cfg.grid.resolution, &shifted, env_spec, cfg.grid.cfl_factor)?;
    let scfg = SolveConfig { cfl_factor: cfg.grid.cfl_factor, eps: 0.0, max_saved_slices: 2 };
    let mut separations = Vec::new();
    for (i, &ell) in sec.ells.iter().enumerate() {
        let env = sample_env(env_spec, derive_seed(seed, "separation-env", i as u64));
        let rep = separation_check(&shifted, &env, ell, 0.0, &scfg, &sep_grid, sec.theta_mass)?;
        check(
            &mut out,
            &mut rows,
            &format!("separation_ell_{i}"),
            rep.min_h_interior,
            0.0,
            rep.pass,
        );
        separations.push(rep);
    }

    out.files.push((
        "regularity.csv".into(),
        csv_table("check,value,bound,pass", &rows).into_bytes(),
    ));
    out.summary = json!({
        "theta": theta,
        "separations": separations,
    });
    Ok(out)
}
