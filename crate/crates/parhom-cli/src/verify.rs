//! Verification catalog: every acceptance criterion as a runnable entry
//! backed by a shipped config file. The `verify` subcommand and the
//! acceptance test suite both go through [`catalog`].

use crate::config::Config;
use crate::run::{run_config, RunOutput};
use std::path::Path;

macro_rules! shipped {
    ($name:literal) => {
        ($name, include_str!(concat!("../../../configs/verify/", $name, ".toml")))
    };
}

pub const SHIPPED_CONFIGS: &[(&str, &str)] = &[
    shipped!("c01_fixed_point_d1"),
    shipped!("c01_fixed_point_d1_modulated"),
    shipped!("c01_fixed_point_d2_corrector"),
    shipped!("c01_fixed_point_d2_dichotomy"),
    shipped!("c02_harmonic_mean"),
    shipped!("c03_method_agreement"),
    shipped!("c04_comparison"),
    shipped!("c05_obstacle"),
    shipped!("c06_rate"),
    shipped!("c07a_corrector_decay"),
    shipped!("c07b_corrector_floor"),
    shipped!("c08_moments"),
    shipped!("c09a_ergodic_contact"),
    shipped!("c09b_ergodic_covering"),
    shipped!("c10_regularity"),
    shipped!("c11_determinism"),
];

pub fn shipped_config(name: &str) -> &'static str {
    SHIPPED_CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .unwrap_or_else(|| panic!("config {name} not embedded"))
}

pub struct Criterion {
    pub id: usize,
    pub title: &'static str,
    pub run: fn(&Path) -> Result<Vec<String>, String>,
}

pub fn catalog() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, title: "constant-coefficient fixed point, both estimators", run: c01 },
        Criterion { id: 2, title: "1D periodic medium: harmonic-mean effective coefficient", run: c02 },
        Criterion { id: 3, title: "estimator agreement on the checkerboard Pucci test", run: c03 },
        Criterion { id: 4, title: "discrete comparison principle, 100 random pairs per kind", run: c04 },
        Criterion { id: 5, title: "obstacle ordering, sign, level-monotonicity, nesting", run: c05 },
        Criterion { id: 6, title: "homogenization error decay along the epsilon ladder", run: c06 },
        Criterion { id: 7, title: "corrector decay and off-level barrier floor", run: c07 },
        Criterion { id: 8, title: "obstacle-mass moment structure and variance decay", run: c08 },
        Criterion { id: 9, title: "covering selection, ergodic averaging, maximal inequality", run: c09 },
        Criterion { id: 10, title: "sup/inf convolution oracles and semiconvexity", run: c10 },
        Criterion { id: 11, title: "byte-identical reruns across seeds and thread counts", run: c11 },
    ]
}

fn run_shipped(name: &str, out_dir: &Path) -> Result<RunOutput, String> {
    let cfg = Config::parse(shipped_config(name)).map_err(|e| format!("{name}: {e}"))?;
    let output = run_config(&cfg, None).map_err(|e| format!("{name}: {e}"))?;
    let dir = out_dir.join("verify").join(name);
    if std::fs::create_dir_all(&dir).is_ok() {
        for (fname, bytes) in &output.files {
            let _ = std::fs::write(dir.join(fname), bytes);
        }
        if let Ok(summary) = serde_json::to_vec_pretty(&output.summary) {
            let _ = std::fs::write(dir.join("summary.json"), summary);
        }
    }
    if output.failures.is_empty() {
        Ok(output)
    } else {
        Err(format!("{name}: {}", output.failures.join("; ")))
    }
}

fn run_all(names: &[&str], out_dir: &Path) -> Result<Vec<RunOutput>, String> {
    names.iter().map(|n| run_shipped(n, out_dir)).collect()
}

fn c01(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(
        &[
            "c01_fixed_point_d1",
            "c01_fixed_point_d1_modulated",
            "c01_fixed_point_d2_corrector",
            "c01_fixed_point_d2_dichotomy",
        ],
        out_dir,
    )?;
    let d1_count = outputs[0].summary["metrics"]["estimates"].as_array().map_or(0, |a| a.len())
        + outputs[1].summary["metrics"]["estimates"].as_array().map_or(0, |a| a.len());
    let mut details = vec![format!(
        "d=1: {} estimates within 1e-2(1+|F|); d=2 corrector: {} estimates",
        d1_count,
        outputs[2].summary["metrics"]["estimates"].as_array().map_or(0, |a| a.len()),
    )];
    if let Some(est) = outputs[3].summary["metrics"]["estimates"].as_array().and_then(|a| a.first())
    {
        let fbar = est["fbar"].as_f64().unwrap_or(f64::NAN);
        let exact = est["f_exact"].as_f64().unwrap_or(f64::NAN);
        details.push(format!(
            "d=2 dichotomy (representative case): fbar {fbar:.4} vs F(M) {exact:.4}, error {:+.4} (feasibility envelope 0.1)",
            fbar - exact
        ));
    }
    Ok(details)
}

fn c02(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(&["c02_harmonic_mean"], out_dir)?;
    let mut details = Vec::new();
    if let Some(arr) = outputs[0].summary["metrics"]["estimates"].as_array() {
        for est in arr {
            details.push(format!(
                "{}: fbar {:.4} (harmonic mean 4/3)",
                est["method"].as_str().unwrap_or("?"),
                est["fbar"].as_f64().unwrap_or(f64::NAN)
            ));
        }
    }
    Ok(details)
}

fn c03(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(&["c03_method_agreement"], out_dir)?;
    let mut details = Vec::new();
    if let Some(arr) = outputs[0].summary["metrics"]["estimates"].as_array() {
        for est in arr {
            details.push(format!(
                "{}: fbar {:.4} bracket [{:.4}, {:.4}]",
                est["method"].as_str().unwrap_or("?"),
                est["fbar"].as_f64().unwrap_or(f64::NAN),
                -est["ell_hi"].as_f64().unwrap_or(f64::NAN),
                -est["ell_lo"].as_f64().unwrap_or(f64::NAN),
            ));
        }
    }
    Ok(details)
}

fn c04(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(&["c04_comparison"], out_dir)?;
    Ok(vec![format!(
        "worst violation {}",
        outputs[0].summary["metrics"]["worst_violation"]
    )])
}

fn c05(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(&["c05_obstacle"], out_dir)?;
    let m = &outputs[0].summary["metrics"];
    Ok(vec![
        format!(
            "min gap {}, nesting mismatches {}",
            m["ordering"]["min_gap"], m["nesting"]["mismatched"]
        ),
    ])
}

fn c06(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(&["c06_rate"], out_dir)?;
    let m = &outputs[0].summary["metrics"];
    Ok(vec![
        format!("medians {}", m["medians"]),
        format!("log-log slope of the median: {}", m["slope_median"]),
    ])
}

fn c07(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(&["c07a_corrector_decay", "c07b_corrector_floor"], out_dir)?;
    Ok(vec![
        format!("decay medians {}", outputs[0].summary["metrics"]["medians"]),
        format!(
            "floor medians {} (beta {})",
            outputs[1].summary["metrics"]["medians"], outputs[1].summary["metrics"]["barrier_beta"]
        ),
    ])
}

fn c08(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(&["c08_moments"], out_dir)?;
    let m = &outputs[0].summary["metrics"];
    Ok(vec![
        format!("J products {}", m["product_decay"]["j_products"]),
        format!(
            "variance decay: lhs {} <= rhs {}",
            m["variance_decay"]["lhs"], m["variance_decay"]["rhs"]
        ),
    ])
}

fn c09(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(&["c09a_ergodic_contact", "c09b_ergodic_covering"], out_dir)?;
    Ok(vec![
        format!("contact process drift {}", outputs[0].summary["metrics"]["final_drift"]),
        format!(
            "maximal inequality: p {} <= bound {}",
            outputs[1].summary["metrics"]["maximal_inequality"]["p_emp"],
            outputs[1].summary["metrics"]["maximal_inequality"]["bound"]
        ),
    ])
}

fn c10(out_dir: &Path) -> Result<Vec<String>, String> {
    let outputs = run_all(&["c10_regularity"], out_dir)?;
    let seps = &outputs[0].summary["metrics"]["separations"];
    Ok(vec![format!("separations {seps}")])
}

/// Runs the determinism workload twice at 1 thread and twice at 8 threads
/// (scoped pools) and demands byte-identical files and summaries.
fn c11(_out_dir: &Path) -> Result<Vec<String>, String> {
    let cfg = Config::parse(shipped_config("c11_determinism"))
        .map_err(|e| format!("c11_determinism: {e}"))?;
    let run_with_threads = |threads: usize| -> Result<Vec<(String, Vec<u8>)>, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let output = pool
            .install(|| run_config(&cfg, None))
            .map_err(|e| format!("c11_determinism: {e}"))?;
        if !output.failures.is_empty() {
            return Err(format!("c11_determinism: {}", output.failures.join("; ")));
        }
        let mut files = output.files;
        files.push((
            "summary.json".into(),
            serde_json::to_vec_pretty(&output.summary).map_err(|e| e.to_string())?,
        ));
        Ok(files)
    };
    let first = run_with_threads(1)?;
    for (label, threads) in [("repeat at 1 thread", 1usize), ("8 threads", 8), ("8 threads repeat", 8)] {
        let other = run_with_threads(threads)?;
        if first.len() != other.len() {
            return Err(format!("{label}: file count differs"));
        }
        for ((n1, b1), (n2, b2)) in first.iter().zip(&other) {
            if n1 != n2 || b1 != b2 {
                return Err(format!("{label}: output {n1} differs byte-wise"));
            }
        }
    }
    Ok(vec![format!(
        "{} output files byte-identical across 4 runs (threads 1, 1, 8, 8)",
        first.len()
    )])
}
