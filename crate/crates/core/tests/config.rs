use fermi_rg::config::*;
use rand::Rng;

#[test]
fn default_is_accepted_with_alpha_warning() {
    let cfg = RunConfig::default();
    let report = cfg.validate();
    assert!(report.accepted(), "{:?}", report.errors());
    let alpha = report.checks.iter().find(|c| c.name == "alpha_window").unwrap();
    // α = 10 lies above λ0^{-υ/10} ≈ 1.07 for λ0 = 1e-3, υ = 0.1.
    assert_eq!(alpha.level, CheckLevel::Warning);
}

#[test]
fn aleph_outside_window_is_rejected() {
    let mut cfg = RunConfig::default();
    cfg.scale.aleph = 0.7;
    let report = cfg.validate();
    assert!(!report.accepted());
    assert!(report.errors().iter().any(|e| e.starts_with("aleph")));
}

#[test]
fn upsilon_outside_window_is_rejected() {
    let mut cfg = RunConfig::default();
    cfg.rg.upsilon = 0.3;
    assert!(cfg.validate().errors().iter().any(|e| e.starts_with("upsilon")));
}

#[test]
fn jbar_and_j_max_are_checked() {
    let mut cfg = RunConfig::default();
    cfg.scale.jbar = cfg.scale.j0 + 1;
    let errs = cfg.validate().errors();
    assert!(errs.iter().any(|e| e.starts_with("jbar")));
    assert!(errs.iter().any(|e| e.starts_with("j_max")));
}

#[test]
fn alpha_inside_window_is_ok() {
    let mut cfg = RunConfig::default();
    cfg.rg.alpha = 1.05;
    let alpha = cfg.validate().checks.into_iter().find(|c| c.name == "alpha_window").unwrap();
    assert_eq!(alpha.level, CheckLevel::Ok);
}

#[test]
fn toml_round_trip() {
    let mut cfg = RunConfig { seed: 42, ..RunConfig::default() };
    cfg.rg.coupling = Some(2e-3);
    cfg.flow.j_max = 4;
    let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn partial_file_fills_defaults() {
    let cfg = RunConfig::from_toml("schema_version = 1\nseed = 7\n[rg]\nlambda0 = 0.002\n").unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.rg.lambda0, 0.002);
    assert_eq!(cfg.rg.alpha, 10.0);
    assert_eq!(cfg.scale, RunConfig::default().scale);
}

#[test]
fn wrong_schema_and_unknown_keys_are_errors() {
    assert!(matches!(RunConfig::from_toml("schema_version = 2\n"), Err(ConfigError::Schema { found: 2, expected: 1 })));
    assert!(matches!(RunConfig::from_toml("schema_version = 1\n[rg]\nlamda0 = 0.1\n"), Err(ConfigError::Parse(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = RunConfig::load(std::path::Path::new("/nonexistent/run.toml")).unwrap_err();
    assert!(matches!(err, ConfigError::Io { .. }));
}

#[test]
fn fixture_streams_are_reproducible_and_distinct() {
    let draw = |stream| {
        let mut rng = fixture_rng(3, stream);
        (0..4).map(|_| rng.gen::<u64>()).collect::<Vec<_>>()
    };
    let (a, b, c) = (draw(1), draw(1), draw(2));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn partial_nested_tables_fill_defaults() {
    let cfg = RunConfig::from_toml("schema_version = 1\n[scale]\naleph = 0.55\n[ladders.quadrature]\nn_arc = 64\n").unwrap();
    assert_eq!(cfg.scale.aleph, 0.55);
    assert_eq!(cfg.scale.m, RunConfig::default().scale.m);
    assert_eq!(cfg.ladders.quadrature.n_arc, 64);
    assert_eq!(cfg.ladders.quadrature.n_family, RunConfig::default().ladders.quadrature.n_family);
}
