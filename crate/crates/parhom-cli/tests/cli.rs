//! CLI-level contracts: config validation names offending keys, the
//! negative-control fixture fails, example configs parse, and reruns are
//! byte-identical.

use parhom_cli::config::Config;
use parhom_cli::run::run_config;

#[test]
fn bad_configs_name_the_offending_key() {
    let cases = [
        ("[experiment]\nkind = \"solve\"\n", "environment"),
        (
            "[experiment]\nkind = \"solve\"\nn_env = 0\n\n[operator]\nkind = \"pucci_plus\"\n\n[environment]\nd = 1\nkind = \"constant\"\nvalue = 1.0\n\n[solve]\n",
            "n_env",
        ),
        (
            "[experiment]\nkind = \"solve\"\n\n[operator]\nkind = \"pucci_plus\"\n\n[environment]\nd = 1\nkind = \"constant\"\nvalue = -2.0\n\n[solve]\n",
            "environment",
        ),
        (
            "[experiment]\nkind = \"solve\"\n\n[operator]\nkind = \"pucci_plus\"\n\n[environment]\nd = 1\nkind = \"constant\"\nvalue = 1.0\n\n[grid]\ncfl_factor = 1.5\n\n[solve]\n",
            "cfl_factor",
        ),
        (
            "[experiment]\nkind = \"moments\"\n\n[operator]\nkind = \"pucci_plus\"\n\n[environment]\nd = 1\nkind = \"constant\"\nvalue = 1.0\n",
            "moments",
        ),
    ];
    for (text, key) in cases {
        let err = Config::parse(text).unwrap_err().to_string();
        assert!(err.contains(key), "expected `{key}` in error `{err}`");
    }
}

#[test]
fn example_configs_parse() {
    for name in [
        "solve_heat_pulse",
        "corrector_decay",
        "obstacle_contact",
        "effective_table",
        "rate_experiment",
        "moments_scales",
        "moments_negative_control",
        "ergodic_averaging",
        "regularity_checks",
    ] {
        let path = format!("{}/../../configs/examples/{name}.toml", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
        Config::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn negative_control_reports_failures() {
    let path = format!(
        "{}/../../configs/examples/moments_negative_control.toml",
        env!("CARGO_MANIFEST_DIR")
    );
    let cfg = Config::parse(&std::fs::read_to_string(path).unwrap()).unwrap();
    let out = run_config(&cfg, None).unwrap();
    assert!(
        out.failures.iter().any(|f| f.contains("monotonicity")),
        "expected a monotonicity failure, got {:?}",
        out.failures
    );
}

#[test]
fn identical_runs_are_byte_identical() {
    let path =
        format!("{}/../../configs/examples/obstacle_contact.toml", env!("CARGO_MANIFEST_DIR"));
    let cfg = Config::parse(&std::fs::read_to_string(path).unwrap()).unwrap();
    let a = run_config(&cfg, Some(99)).unwrap();
    let b = run_config(&cfg, Some(99)).unwrap();
    assert_eq!(a.files.len(), b.files.len());
    for ((na, ba), (nb, bb)) in a.files.iter().zip(&b.files) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "file {na} differs between identical runs");
    }
    assert_eq!(
        serde_json::to_vec(&a.summary).unwrap(),
        serde_json::to_vec(&b.summary).unwrap()
    );
    // a different seed changes the numbers
    let c = run_config(&cfg, Some(100)).unwrap();
    assert_ne!(
        serde_json::to_vec(&a.summary).unwrap(),
        serde_json::to_vec(&c.summary).unwrap()
    );
}
