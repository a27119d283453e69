use std::path::PathBuf;

use entroproj::config::parse_config;
use entroproj::control::SolverOptions;
use entroproj::scenarios;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_match_the_catalogue() {
    for (name, scenario) in scenarios::catalogue() {
        let path = configs_dir().join(format!("{name}.toml"));
        let cfg = parse_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        let expected = scenario;
        assert_eq!(cfg.scenario.grid, expected.grid, "{name}");
        assert_eq!(cfg.scenario.initial, expected.initial, "{name}");
        assert_eq!(cfg.scenario.epsilon, expected.epsilon, "{name}");
        assert_eq!(cfg.scenario.mckean_vlasov, expected.mckean_vlasov, "{name}");
        assert_eq!(cfg.scenario, expected, "{name}");
        assert_eq!(cfg.options, SolverOptions::default(), "{name}");
    }
}

#[test]
fn missing_file_is_a_read_error() {
    let err = parse_config(&configs_dir().join("does_not_exist.toml")).unwrap_err();
    assert!(matches!(err, entroproj::config::ConfigError::Read { .. }));
}
