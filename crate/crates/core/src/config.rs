//! Scenario configuration files.
//!
//! A config is TOML with the sections `[grid]`, `[coefficients]`,
//! `[constraint]`, `[initial]` and optionally `[solver]`. Coefficients are
//! expression strings over `t`, `x` and `m1`.

use std::path::{Path, PathBuf};

use crate::control::SolverOptions;
use crate::expr::Expr;
use crate::model::{Coefficients, ConstraintFunctional, InitialLaw, ModelError, Scenario, SpaceTimeGrid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError { line: usize, column: usize, message: String },
    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("missing key `{key}` in section [{section}]")]
    MissingKey { section: String, key: String },
    #[error("[{section}] {key}: {message}")]
    InvalidValue { section: String, key: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

const SECTIONS: [(&str, &[&str]); 5] = [
    ("grid", &["x_min", "x_max", "nx", "T", "nt"]),
    ("coefficients", &["drift", "sigma", "cost", "grad_W"]),
    ("constraint", &["kind", "psi", "outer", "offset"]),
    ("initial", &["init_kind", "mean", "variance", "table_path"]),
    ("solver", &["epsilon", "uzawa_step", "tol_primal", "tol_slack", "max_outer", "damping", "seed"]),
];

/// A parsed config: the scenario and the solver options.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub options: SolverOptions,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

struct Section<'a> {
    name: &'a str,
    table: &'a toml::Table,
}

impl Section<'_> {
    fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue { section: self.name.into(), key: key.into(), message: message.into() }
    }

    fn real(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(self.invalid(key, format!("expected a number, found {}", v.type_str()))),
        }
    }

    fn real_req(&self, key: &str) -> Result<f64, ConfigError> {
        self.real(key)?.ok_or_else(|| ConfigError::MissingKey { section: self.name.into(), key: key.into() })
    }

    fn count(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(self.invalid(key, format!("expected a nonnegative integer, found {v}"))),
        }
    }

    fn count_req(&self, key: &str) -> Result<u64, ConfigError> {
        self.count(key)?.ok_or_else(|| ConfigError::MissingKey { section: self.name.into(), key: key.into() })
    }

    fn text(&self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(self.invalid(key, format!("expected a string, found {}", v.type_str()))),
        }
    }

    /// An expression given as a string or a bare number.
    fn expr(&self, key: &str) -> Result<Option<Expr>, ConfigError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(Expr::constant(*f))),
            Some(toml::Value::Integer(i)) => Ok(Some(Expr::constant(*i as f64))),
            Some(toml::Value::String(s)) => Expr::parse(s).map(Some).map_err(|e| self.invalid(key, e.to_string())),
            Some(v) => Err(self.invalid(key, format!("expected an expression, found {}", v.type_str()))),
        }
    }

    fn expr_req(&self, key: &str) -> Result<Expr, ConfigError> {
        self.expr(key)?.ok_or_else(|| ConfigError::MissingKey { section: self.name.into(), key: key.into() })
    }
}

/// Parses config text. `base` resolves a relative `table_path`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<Config, ConfigError> {
    let root: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        ConfigError::ParseError { line, column, message: e.message().to_string() }
    })?;
    for (name, value) in &root {
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == name) else {
            return Err(ConfigError::UnknownKey { section: "top level".into(), key: name.clone() });
        };
        let Some(table) = value.as_table() else {
            return Err(ConfigError::InvalidValue { section: name.clone(), key: name.clone(), message: "expected a section".into() });
        };
        if let Some(k) = table.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey { section: name.clone(), key: k.clone() });
        }
    }
    let empty = toml::Table::new();
    let section = |name: &'static str, required: bool| -> Result<Section<'_>, ConfigError> {
        match root.get(name).and_then(|v| v.as_table()) {
            Some(table) => Ok(Section { name, table }),
            None if required => Err(ConfigError::MissingSection(name.into())),
            None => Ok(Section { name, table: &empty }),
        }
    };
    let grid_s = section("grid", true)?;
    let coef_s = section("coefficients", true)?;
    let cons_s = section("constraint", true)?;
    let init_s = section("initial", true)?;
    let solv_s = section("solver", false)?;

    let grid = SpaceTimeGrid::new(
        grid_s.real_req("x_min")?,
        grid_s.real_req("x_max")?,
        grid_s.count_req("nx")? as usize,
        grid_s.real_req("T")?,
        grid_s.count_req("nt")? as usize,
    )?;

    let mut coeffs = Coefficients::new(coef_s.expr_req("drift")?, coef_s.expr_req("sigma")?);
    if let Some(c) = coef_s.expr("cost")? {
        coeffs.cost = c;
    }
    coeffs.grad_w = coef_s.expr("grad_W")?;

    let psi = cons_s.expr_req("psi")?;
    let offset = cons_s.real("offset")?.unwrap_or(0.0);
    let kind = cons_s.text("kind")?.unwrap_or_else(|| "linear".into());
    let constraint = match kind.as_str() {
        "linear" => ConstraintFunctional::linear(psi, offset),
        "convex_of_mean" => {
            let outer = cons_s.expr("outer")?.ok_or(ConfigError::MissingKey { section: "constraint".into(), key: "outer".into() })?;
            ConstraintFunctional::convex_of_mean(psi, outer, offset)?
        }
        other => return Err(cons_s.invalid("kind", format!("expected `linear` or `convex_of_mean`, found `{other}`"))),
    };

    let init_kind = init_s.text("init_kind")?.unwrap_or_else(|| "gaussian".into());
    let initial = match init_kind.as_str() {
        "gaussian" => InitialLaw::Gaussian { mean: init_s.real_req("mean")?, variance: init_s.real_req("variance")? },
        "tabulated" => {
            let rel = init_s.text("table_path")?.ok_or(ConfigError::MissingKey { section: "initial".into(), key: "table_path".into() })?;
            let path = base.join(rel);
            let body = std::fs::read_to_string(&path).map_err(|e| ConfigError::Read { path: path.clone(), message: e.to_string() })?;
            let values: Result<Vec<f64>, _> =
                body.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse::<f64>).collect();
            InitialLaw::Tabulated(values.map_err(|e| init_s.invalid("table_path", e.to_string()))?)
        }
        other => return Err(init_s.invalid("init_kind", format!("expected `gaussian` or `tabulated`, found `{other}`"))),
    };

    let epsilon = solv_s.real("epsilon")?.unwrap_or(0.0);
    let mut options = SolverOptions::default();
    if let Some(v) = solv_s.real("uzawa_step")? {
        options.uzawa_step = v;
    }
    if let Some(v) = solv_s.real("tol_primal")? {
        options.tol_primal = v;
    }
    if let Some(v) = solv_s.real("tol_slack")? {
        options.tol_slack = v;
    }
    if let Some(v) = solv_s.count("max_outer")? {
        options.max_outer = v as usize;
    }
    if let Some(v) = solv_s.real("damping")? {
        options.damping = v;
    }
    if let Some(v) = solv_s.count("seed")? {
        options.seed = v;
    }
    let scenario = Scenario::new(grid, coeffs, constraint, initial, epsilon)?;
    Ok(Config { scenario, options })
}

pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    const BROWNIAN: &str = r#"
[grid]
x_min = -8.0
x_max = 8.0
nx = 200
T = 1.0
nt = 50

[coefficients]
drift = "0"
sigma = "1"

[constraint]
kind = "linear"
psi = "x"
offset = 1.0

[initial]
init_kind = "gaussian"
mean = 0.0
variance = 1.0

[solver]
epsilon = 0.0
"#;

    #[test]
    fn round_trip_matches_library_scenario() {
        let c = parse_config_str(BROWNIAN, Path::new(".")).unwrap();
        assert_eq!(c.scenario, scenarios::inactive(200, 50));
        assert_eq!(c.options, SolverOptions::default());
    }

    #[test]
    fn unknown_key_names_key_and_section() {
        let text = BROWNIAN.replace("sigma = \"1\"", "sigma2 = \"1\"");
        assert_eq!(
            parse_config_str(&text, Path::new(".")),
            Err(ConfigError::UnknownKey { section: "coefficients".into(), key: "sigma2".into() })
        );
    }

    #[test]
    fn missing_section_is_reported() {
        let text = BROWNIAN.replace("[initial]\ninit_kind = \"gaussian\"\nmean = 0.0\nvariance = 1.0\n", "");
        assert_eq!(parse_config_str(&text, Path::new(".")), Err(ConfigError::MissingSection("initial".into())));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = "[grid]\nx_min = -8.0\nx_max = = 8\n";
        match parse_config_str(text, Path::new(".")) {
            Err(ConfigError::ParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_sigma_parses_but_fails_validation() {
        let text = BROWNIAN.replace("sigma = \"1\"", "sigma = \"0\"");
        let c = parse_config_str(&text, Path::new(".")).unwrap();
        assert!(!crate::model::validate_scenario(&c.scenario).passed());
    }

    #[test]
    fn bad_expression_is_an_invalid_value() {
        let text = BROWNIAN.replace("drift = \"0\"", "drift = \"sin(\"");
        assert!(matches!(parse_config_str(&text, Path::new(".")), Err(ConfigError::InvalidValue { .. })));
    }
}
