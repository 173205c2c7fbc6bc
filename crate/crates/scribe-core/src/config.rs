//! Layered configuration.
//!
//! Settings resolve in precedence order: caller overrides (CLI flags) >
//! `SCRIBE_*` environment variables > TOML file > built-in defaults. The
//! configuration never holds an API key — only the *name* of the
//! environment variable that holds one.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::proposer::{BackendConfig, ProposerConfig, DEFAULT_API_KEY_ENV};
use crate::search::SearchConfig;
use crate::verifier::VerifierConfig;

/// Complete runtime configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScribeConfig {
    pub verifier: VerifierConfig,
    pub proposer: ProposerConfig,
    pub search: SearchConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not read config file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path} is invalid: {source}")]
    Toml {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("environment variable {var} has invalid value {value:?}: {reason}")]
    Env { var: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

// ---------------------------------------------------------------------------
// TOML overlay
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Overlay {
    verifier: Option<VerifierOverlay>,
    proposer: Option<ProposerOverlay>,
    search: Option<SearchOverlay>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifierOverlay {
    executable: Option<String>,
    time_limit_secs: Option<u64>,
    extra_args: Option<Vec<String>>,
    max_workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposerOverlay {
    k: Option<u32>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    backend: Option<BackendOverlay>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendOverlay {
    kind: Option<String>,
    endpoint: Option<String>,
    model: Option<String>,
    /// Name of the environment variable holding the API key; the key
    /// itself never appears in configuration.
    api_key_env: Option<String>,
    path: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchOverlay {
    max_iterations: Option<u32>,
    strict_progress: Option<bool>,
    stop_on_stall: Option<bool>,
    prompt_prefix_only: Option<bool>,
}

fn apply_overlay(cfg: &mut ScribeConfig, overlay: Overlay) -> Result<(), ConfigError> {
    if let Some(v) = overlay.verifier {
        if let Some(x) = v.executable {
            cfg.verifier.executable = x.into();
        }
        if let Some(x) = v.time_limit_secs {
            cfg.verifier.time_limit_secs = x;
        }
        if let Some(x) = v.extra_args {
            cfg.verifier.extra_args = x;
        }
        if let Some(x) = v.max_workers {
            cfg.verifier.max_workers = x;
        }
    }
    if let Some(p) = overlay.proposer {
        if let Some(x) = p.k {
            cfg.proposer.k = x;
        }
        if let Some(x) = p.temperature {
            cfg.proposer.temperature = x;
        }
        if let Some(x) = p.max_tokens {
            cfg.proposer.max_tokens = x;
        }
        if let Some(b) = p.backend {
            cfg.proposer.backend = merge_backend(
                &cfg.proposer.backend,
                b.kind.as_deref(),
                b.endpoint,
                b.model,
                b.api_key_env,
                b.path,
            )?;
        }
    }
    if let Some(s) = overlay.search {
        if let Some(x) = s.max_iterations {
            cfg.search.max_iterations = x;
        }
        if let Some(x) = s.strict_progress {
            cfg.search.strict_progress = x;
        }
        if let Some(x) = s.stop_on_stall {
            cfg.search.stop_on_stall = x;
        }
        if let Some(x) = s.prompt_prefix_only {
            cfg.search.prompt_prefix_only = x;
        }
    }
    Ok(())
}

/// Fold partial backend settings into the current backend, switching kind
/// when requested.
pub fn merge_backend(
    current: &BackendConfig,
    kind: Option<&str>,
    endpoint: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
    scripted_path: Option<String>,
) -> Result<BackendConfig, ConfigError> {
    let effective_kind = match kind {
        Some(k) => k.to_string(),
        None => match (current, &scripted_path) {
            // A bare script path implies the scripted backend.
            (BackendConfig::Http { .. }, Some(_)) => "scripted".into(),
            (BackendConfig::Http { .. }, None) => "http".into(),
            (BackendConfig::Scripted { .. }, _) => "scripted".into(),
        },
    };
    match effective_kind.as_str() {
        "http" => {
            let (cur_endpoint, cur_model, cur_env) = match current {
                BackendConfig::Http { endpoint, model, api_key_env } => {
                    (endpoint.clone(), model.clone(), api_key_env.clone())
                }
                _ => {
                    let BackendConfig::Http { endpoint, model, api_key_env } =
                        ProposerConfig::default().backend
                    else {
                        unreachable!("default backend is http")
                    };
                    (endpoint, model, api_key_env)
                }
            };
            Ok(BackendConfig::Http {
                endpoint: endpoint.unwrap_or(cur_endpoint),
                model: model.unwrap_or(cur_model),
                api_key_env: api_key_env.unwrap_or(cur_env),
            })
        }
        "scripted" => {
            let cur_path = match current {
                BackendConfig::Scripted { path } => Some(path.clone()),
                _ => None,
            };
            let path = scripted_path.or(cur_path).ok_or_else(|| {
                ConfigError::Invalid("scripted backend needs a script path".into())
            })?;
            Ok(BackendConfig::Scripted { path })
        }
        other => Err(ConfigError::Invalid(format!(
            "unknown backend kind {other:?} (expected \"http\" or \"scripted\")"
        ))),
    }
}

/// Parse and apply a TOML config file.
pub fn apply_file(cfg: &mut ScribeConfig, path: &Path) -> Result<(), ConfigError> {
    let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let overlay: Overlay = toml::from_str(&raw).map_err(|source| ConfigError::Toml {
        path: path.display().to_string(),
        source,
    })?;
    apply_overlay(cfg, overlay)
}

// ---------------------------------------------------------------------------
// Environment overlay
// ---------------------------------------------------------------------------

/// Apply `SCRIBE_*` variables from an explicit (var, value) list. Callers
/// pass `std::env::vars()`; tests pass fixtures.
pub fn apply_env<I>(cfg: &mut ScribeConfig, vars: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut endpoint = None;
    let mut model = None;
    let mut api_key_env = None;
    let mut scripted = None;
    let mut kind = None;
    let mut sorted: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with("SCRIBE_"))
        .collect();
    sorted.sort();
    for (var, value) in sorted {
        let parse_u32 = |value: &str| -> Result<u32, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::Env {
                var: var.clone(),
                value: value.into(),
                reason: "expected a non-negative integer".into(),
            })
        };
        let parse_u64 = |value: &str| -> Result<u64, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::Env {
                var: var.clone(),
                value: value.into(),
                reason: "expected a non-negative integer".into(),
            })
        };
        let parse_bool = |value: &str| -> Result<bool, ConfigError> {
            match value.trim() {
                "1" | "true" | "yes" | "on" => Ok(true),
                "0" | "false" | "no" | "off" => Ok(false),
                _ => Err(ConfigError::Env {
                    var: var.clone(),
                    value: value.into(),
                    reason: "expected a boolean (true/false)".into(),
                }),
            }
        };
        match var.as_str() {
            "SCRIBE_VERIFIER" => cfg.verifier.executable = value.into(),
            "SCRIBE_TIME_LIMIT" => cfg.verifier.time_limit_secs = parse_u64(&value)?,
            "SCRIBE_MAX_WORKERS" => {
                cfg.verifier.max_workers = parse_u64(&value)? as usize;
            }
            "SCRIBE_K" => cfg.proposer.k = parse_u32(&value)?,
            "SCRIBE_TEMPERATURE" => {
                cfg.proposer.temperature = value.trim().parse().map_err(|_| ConfigError::Env {
                    var: var.clone(),
                    value: value.clone(),
                    reason: "expected a number".into(),
                })?;
            }
            "SCRIBE_MAX_TOKENS" => cfg.proposer.max_tokens = parse_u32(&value)?,
            "SCRIBE_MAX_ITERATIONS" => cfg.search.max_iterations = parse_u32(&value)?,
            "SCRIBE_STRICT_PROGRESS" => cfg.search.strict_progress = parse_bool(&value)?,
            "SCRIBE_STOP_ON_STALL" => cfg.search.stop_on_stall = parse_bool(&value)?,
            "SCRIBE_PROMPT_PREFIX_ONLY" => cfg.search.prompt_prefix_only = parse_bool(&value)?,
            "SCRIBE_BACKEND" => kind = Some(value),
            "SCRIBE_ENDPOINT" => endpoint = Some(value),
            "SCRIBE_MODEL" => model = Some(value),
            "SCRIBE_API_KEY_ENV" => api_key_env = Some(value),
            "SCRIBE_SCRIPTED" => scripted = Some(value),
            _ => {} // unknown SCRIBE_ vars are ignored, not errors
        }
    }
    if kind.is_some()
        || endpoint.is_some()
        || model.is_some()
        || api_key_env.is_some()
        || scripted.is_some()
    {
        cfg.proposer.backend = merge_backend(
            &cfg.proposer.backend,
            kind.as_deref(),
            endpoint,
            model,
            api_key_env,
            scripted,
        )?;
    }
    Ok(())
}

/// Resolve the full configuration: defaults, then the optional file, then
/// the process environment.
pub fn load(file: Option<&Path>) -> Result<ScribeConfig, ConfigError> {
    let mut cfg = ScribeConfig::default();
    if let Some(path) = file {
        apply_file(&mut cfg, path)?;
    }
    apply_env(&mut cfg, std::env::vars())?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Structural checks shared by every entry point.
pub fn validate(cfg: &ScribeConfig) -> Result<(), ConfigError> {
    if cfg.verifier.time_limit_secs == 0 {
        return Err(ConfigError::Invalid("verifier.time_limit_secs must be positive".into()));
    }
    if cfg.verifier.max_workers == 0 {
        return Err(ConfigError::Invalid("verifier.max_workers must be at least 1".into()));
    }
    if cfg.proposer.k == 0 {
        return Err(ConfigError::Invalid("proposer.k must be at least 1".into()));
    }
    if cfg.search.max_iterations == 0 {
        return Err(ConfigError::Invalid("search.max_iterations must be at least 1".into()));
    }
    if let BackendConfig::Http { api_key_env, .. } = &cfg.proposer.backend {
        if api_key_env.trim().is_empty() {
            return Err(ConfigError::Invalid(
                "proposer.backend.api_key_env must name an environment variable".into(),
            ));
        }
    }
    Ok(())
}

impl ScribeConfig {
    /// Default API key variable name, re-exported for help text.
    pub fn default_api_key_env() -> &'static str {
        DEFAULT_API_KEY_ENV
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_toml(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults_are_sane() {
        let cfg = ScribeConfig::default();
        assert_eq!(cfg.proposer.k, 5);
        assert_eq!(cfg.search.max_iterations, 5);
        assert!(!cfg.search.strict_progress);
        assert!(!cfg.search.stop_on_stall);
        assert!(validate(&cfg).is_ok());
        match cfg.proposer.backend {
            BackendConfig::Http { api_key_env, .. } => {
                assert_eq!(api_key_env, "OPENAI_API_KEY");
            }
            _ => panic!("default backend is http"),
        }
    }

    #[test]
    fn file_overrides_defaults_partially() {
        let f = write_toml(
            "[verifier]\ntime_limit_secs = 20\n\n[proposer]\nk = 3\n\n[search]\nmax_iterations = 7\n",
        );
        let mut cfg = ScribeConfig::default();
        apply_file(&mut cfg, f.path()).unwrap();
        assert_eq!(cfg.verifier.time_limit_secs, 20);
        assert_eq!(cfg.verifier.max_workers, 4, "untouched fields keep defaults");
        assert_eq!(cfg.proposer.k, 3);
        assert_eq!(cfg.search.max_iterations, 7);
    }

    #[test]
    fn file_can_select_scripted_backend() {
        let f = write_toml("[proposer.backend]\nkind = \"scripted\"\npath = \"oracle.json\"\n");
        let mut cfg = ScribeConfig::default();
        apply_file(&mut cfg, f.path()).unwrap();
        assert_eq!(cfg.proposer.backend, BackendConfig::Scripted { path: "oracle.json".into() });
    }

    #[test]
    fn unknown_keys_are_rejected_with_context() {
        let f = write_toml("[proposer.backend]\napi_key = \"sk-oops\"\n");
        let mut cfg = ScribeConfig::default();
        match apply_file(&mut cfg, f.path()) {
            Err(ConfigError::Toml { path, .. }) => assert!(path.ends_with(".toml")),
            other => panic!("expected toml error, got {other:?}"),
        }
    }

    #[test]
    fn env_overrides_file() {
        let f = write_toml("[proposer]\nk = 3\n");
        let mut cfg = ScribeConfig::default();
        apply_file(&mut cfg, f.path()).unwrap();
        apply_env(&mut cfg, vec![("SCRIBE_K".into(), "9".into())]).unwrap();
        assert_eq!(cfg.proposer.k, 9);
    }

    #[test]
    fn env_can_switch_backend_and_set_path() {
        let mut cfg = ScribeConfig::default();
        apply_env(
            &mut cfg,
            vec![
                ("SCRIBE_BACKEND".into(), "scripted".into()),
                ("SCRIBE_SCRIPTED".into(), "/tmp/s.json".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.proposer.backend, BackendConfig::Scripted { path: "/tmp/s.json".into() });
    }

    #[test]
    fn bad_env_value_is_rejected_with_context() {
        let mut cfg = ScribeConfig::default();
        match apply_env(&mut cfg, vec![("SCRIBE_K".into(), "lots".into())]) {
            Err(ConfigError::Env { var, value, .. }) => {
                assert_eq!(var, "SCRIBE_K");
                assert_eq!(value, "lots");
            }
            other => panic!("expected env error, got {other:?}"),
        }
    }

    #[test]
    fn scripted_without_path_is_invalid() {
        let mut cfg = ScribeConfig::default();
        let err = apply_env(&mut cfg, vec![("SCRIBE_BACKEND".into(), "scripted".into())])
            .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn validation_rejects_zeroes() {
        let mut cfg = ScribeConfig::default();
        cfg.proposer.k = 0;
        assert!(validate(&cfg).is_err());
        let mut cfg = ScribeConfig::default();
        cfg.search.max_iterations = 0;
        assert!(validate(&cfg).is_err());
        let mut cfg = ScribeConfig::default();
        cfg.verifier.time_limit_secs = 0;
        assert!(validate(&cfg).is_err());
    }
}
