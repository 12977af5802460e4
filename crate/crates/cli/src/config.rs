use std::path::{Path, PathBuf};

use polybgk::scenarios::{builtin, Experiment};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("unknown key `{key}` at line {line}")]
    UnknownKey { key: String, line: usize },

    #[error("inadmissible mixture parameters: {}", .0.join(", "))]
    ConstraintViolated(Vec<String>),

    #[error("invalid configuration: {0}")]
    Invalid(polybgk::Error),

    #[error("`{0}` is neither a configuration file nor a built-in scenario")]
    NotFound(String),
}

impl From<polybgk::Error> for ConfigError {
    fn from(e: polybgk::Error) -> Self {
        match e {
            polybgk::Error::ConstraintViolated(v) => ConfigError::ConstraintViolated(v),
            other => ConfigError::Invalid(other),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses, resolves and validates a configuration document. `default_name`
/// names the experiment when the document does not.
pub fn parse_config(text: &str, default_name: &str) -> Result<Experiment, ConfigError> {
    let mut exp: Experiment = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        let message = e.message().to_string();
        match message.strip_prefix("unknown field `").and_then(|m| m.split('`').next()) {
            Some(key) => ConfigError::UnknownKey { key: key.to_string(), line },
            None => ConfigError::ParseError { line, message },
        }
    })?;
    if exp.name.trim().is_empty() {
        exp.name = default_name.to_string();
    }
    let exp = exp.resolved();
    exp.validate()?;
    Ok(exp)
}

pub fn load_config(path: &Path) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    parse_config(&text, stem)
}

/// A configuration file if `source` names one, otherwise a built-in scenario.
pub fn load_source(source: &str) -> Result<Experiment, ConfigError> {
    let path = Path::new(source);
    if path.is_file() {
        return load_config(path);
    }
    match builtin(source) {
        Some(e) => Ok(e.resolved()),
        None => Err(ConfigError::NotFound(source.to_string())),
    }
}

/// Command-line replacements for configuration values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Also replaces per-variant time steps.
    pub dt: Option<f64>,
    /// Also replaces per-variant end times.
    pub t_end: Option<f64>,
    pub stride: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut exp: Experiment) -> Result<Experiment, ConfigError> {
        if let Some(seed) = self.seed {
            exp.seed = seed;
        }
        if let Some(dt) = self.dt {
            exp.run.dt = Some(dt);
            exp.variants.iter_mut().for_each(|v| v.dt = None);
        }
        if let Some(t) = self.t_end {
            exp.run.t_end = t;
            exp.variants.iter_mut().for_each(|v| v.t_end = None);
        }
        if let Some(s) = self.stride {
            if s == 0 {
                return Err(ConfigError::Invalid(polybgk::Error::InvalidArgument("stride must be positive".into())));
            }
            exp.run.stride = s;
        }
        Ok(exp)
    }

    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }
}

/// The resolved configuration as a document that loads back to the same
/// experiment.
pub fn to_toml(exp: &Experiment) -> String {
    toml::to_string(exp).expect("experiments serialise to TOML")
}

/// Hex SHA-256 of the resolved configuration document.
pub fn config_hash(exp: &Experiment) -> String {
    Sha256::digest(to_toml(exp).as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_numbers_are_one_based() {
        assert_eq!(line_of("a\nb\nc", 0), 1);
        assert_eq!(line_of("a\nb\nc", 2), 2);
        assert_eq!(line_of("a\nb\nc", 99), 3);
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        match parse_config("model = \"NEW_mixture\"\n\nspecies = [\n", "x") {
            Err(ConfigError::ParseError { line, .. }) => assert!(line >= 3, "{line}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = "model = \"KPP_one_species\"\nspeed = 3\n";
        match parse_config(text, "x") {
            Err(ConfigError::UnknownKey { key, line }) => {
                assert_eq!(key, "speed");
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_replace_variant_values() {
        let e = builtin("regimes").unwrap();
        let o = Overrides { seed: Some(5), dt: Some(0.2), t_end: Some(1.0), stride: Some(3) };
        let r = o.apply(e).unwrap();
        assert_eq!((r.seed, r.run.dt, r.run.t_end, r.run.stride), (5, Some(0.2), 1.0, 3));
        assert!(r.variants.iter().all(|v| v.dt.is_none() && v.t_end.is_none()));
        assert!(Overrides { stride: Some(0), ..Default::default() }.apply(builtin("regimes").unwrap()).is_err());
    }

    #[test]
    fn builtins_round_trip_through_toml() {
        for e in polybgk::scenarios::library() {
            let e = e.resolved();
            let back: Experiment = toml::from_str(&to_toml(&e)).unwrap_or_else(|err| panic!("{}: {err}", e.name));
            assert_eq!(back, e);
            assert_eq!(config_hash(&back), config_hash(&e));
        }
    }
}
