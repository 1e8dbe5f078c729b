//! Model configuration files.
//!
//! A config is TOML with the sections `[model]`, `[truncation]`,
//! `[tolerances]` and `[verify]`. Function slots hold DSL strings; the
//! multigraphex kernels also accept the family descriptors
//! `poisson_pmf(mean="...")`, `pmf(expr="...", max_k=N)`,
//! `level_set(f="...")` (for `W`), `level_set(g="...")` (for `S`) and `zero`.
//!
//! ```toml
//! [model]
//! mode = "multigraphex"
//! W = 'poisson_pmf(mean="exp(-x-y)")'
//! I = [0.0, 0.5]
//!
//! [truncation]
//! mark_cap = 40.0
//! ```

use crate::finiteness::CertifyConfig;
use crate::model::{EdgeKernel, Function, KallenbergRep, Model, ModelError, Multigraphex, StarIntensity, VK, X, XY, XYK, XYZ};
use crate::sampler::TruncationConfig;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("slot {slot}: {message}")]
    Descriptor { slot: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Kallenberg,
    Multigraphex,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    mode: Mode,
    f: Option<String>,
    f_symmetric: Option<bool>,
    g: Option<String>,
    g_prime: Option<String>,
    h: Option<String>,
    h_prime: Option<String>,
    l: Option<String>,
    l_prime: Option<String>,
    beta: Option<f64>,
    gamma: Option<f64>,
    #[serde(rename = "W")]
    w: Option<String>,
    #[serde(rename = "S")]
    s: Option<String>,
    #[serde(rename = "S_tail")]
    s_tail: Option<f64>,
    #[serde(rename = "I")]
    i: Option<Vec<f64>>,
    #[serde(rename = "I_tail")]
    i_tail: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruncation {
    mark_cap: Option<f64>,
    max_latent_points: Option<u64>,
    max_atoms: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    tol_1d: Option<f64>,
    tol_2d: Option<f64>,
    tol_z: Option<f64>,
}

/// Parameters of the verification suites.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub seed: u64,
    pub alpha: f64,
    /// Half-width of the swapped intervals `[0, a)`, `[a, 2a)`.
    pub a: f64,
    pub exchangeability_samples: usize,
    pub r: f64,
    pub rp: f64,
    pub independence_samples: usize,
    pub window: f64,
    pub campbell_samples: usize,
    /// `"skew"` doubles the intensity on `[0, a)^2`, breaking exchangeability.
    pub corrupt: Option<String>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            seed: 1,
            alpha: 0.01,
            a: 1.0,
            exchangeability_samples: 2000,
            r: 1.0,
            rp: 2.0,
            independence_samples: 5000,
            window: 1.0,
            campbell_samples: 10_000,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    #[serde(default)]
    truncation: RawTruncation,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    verify: VerifySettings,
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub model: Model,
    pub truncation: TruncationConfig,
    pub tolerances: CertifyConfig,
    pub verify: VerifySettings,
}

pub const DEFAULT_MARK_CAP: f64 = 40.0;

impl ModelConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let model = build_model(&raw.model)?;
        model.validate()?;
        let mut truncation = TruncationConfig::new(raw.truncation.mark_cap.unwrap_or(DEFAULT_MARK_CAP));
        if let Some(n) = raw.truncation.max_latent_points {
            truncation.max_latent_points = n;
        }
        if let Some(n) = raw.truncation.max_atoms {
            truncation.max_atoms = n;
        }
        if !(truncation.mark_cap >= 0.0 && truncation.mark_cap.is_finite()) {
            return Err(ConfigError::Invalid(format!("mark_cap must be finite and nonnegative, got {}", truncation.mark_cap)));
        }
        let mut tolerances = CertifyConfig::default();
        for (value, slot) in [
            (raw.tolerances.tol_1d, &mut tolerances.tol_1d),
            (raw.tolerances.tol_2d, &mut tolerances.tol_2d),
            (raw.tolerances.tol_z, &mut tolerances.tol_z),
        ] {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::Invalid(format!("tolerances must be positive, got {v}")));
                }
                *slot = v;
            }
        }
        Ok(Self {
            model,
            truncation,
            tolerances,
            verify: raw.verify,
        })
    }
}

fn build_model(raw: &RawModel) -> Result<Model, ConfigError> {
    let kallenberg_only = [
        ("f", raw.f.is_some()),
        ("g", raw.g.is_some()),
        ("g_prime", raw.g_prime.is_some()),
        ("h", raw.h.is_some()),
        ("h_prime", raw.h_prime.is_some()),
        ("l", raw.l.is_some()),
        ("l_prime", raw.l_prime.is_some()),
        ("beta", raw.beta.is_some()),
        ("gamma", raw.gamma.is_some()),
        ("f_symmetric", raw.f_symmetric.is_some()),
    ];
    let multigraphex_only = [
        ("W", raw.w.is_some()),
        ("S", raw.s.is_some()),
        ("S_tail", raw.s_tail.is_some()),
        ("I", raw.i.is_some()),
        ("I_tail", raw.i_tail.is_some()),
    ];
    let misplaced = |slots: &[(&str, bool)], mode: &str| -> Result<(), ConfigError> {
        match slots.iter().find(|(_, set)| *set) {
            Some((name, _)) => Err(ConfigError::Invalid(format!("slot {name} does not belong to mode {mode}"))),
            None => Ok(()),
        }
    };
    let slot = |name: &str, text: &Option<String>, vars| -> Result<Function, ConfigError> {
        match text {
            None => Ok(Function::Zero),
            Some(t) => Ok(Function::parse(name, t, vars)?),
        }
    };
    match raw.mode {
        Mode::Kallenberg => {
            misplaced(&multigraphex_only, "kallenberg")?;
            Ok(Model::Kallenberg(KallenbergRep {
                f: slot("f", &raw.f, &XYZ)?,
                f_symmetric: raw.f_symmetric.unwrap_or(false),
                g: slot("g", &raw.g, &XY)?,
                g_prime: slot("g'", &raw.g_prime, &XY)?,
                h: slot("h", &raw.h, &X)?,
                h_prime: slot("h'", &raw.h_prime, &X)?,
                l: slot("l", &raw.l, &X)?,
                l_prime: slot("l'", &raw.l_prime, &X)?,
                beta: raw.beta.unwrap_or(0.0),
                gamma: raw.gamma.unwrap_or(0.0),
            }))
        }
        Mode::Multigraphex => {
            misplaced(&kallenberg_only, "multigraphex")?;
            Ok(Model::Multigraphex(Multigraphex {
                w: match &raw.w {
                    None => EdgeKernel::Zero,
                    Some(t) => edge_kernel(t)?,
                },
                s: match &raw.s {
                    None => StarIntensity::Zero,
                    Some(t) => star_intensity(t)?,
                },
                s_tail: raw.s_tail.unwrap_or(0.0),
                i: raw.i.clone().unwrap_or_default(),
                i_tail: raw.i_tail.unwrap_or(0.0),
            }))
        }
    }
}

/// A family descriptor `name(key=value, ...)`; values are quoted strings or numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub name: String,
    pub args: BTreeMap<String, String>,
}

pub fn parse_descriptor(slot: &str, text: &str) -> Result<Descriptor, ConfigError> {
    let err = |message: String| ConfigError::Descriptor {
        slot: slot.to_string(),
        message,
    };
    let text = text.trim();
    if text == "zero" {
        return Ok(Descriptor {
            name: "zero".into(),
            args: BTreeMap::new(),
        });
    }
    let open = text.find('(').ok_or_else(|| err(format!("expected a family descriptor, got {text:?}")))?;
    if !text.ends_with(')') {
        return Err(err("descriptor must end with ')'".into()));
    }
    let name = text[..open].trim().to_string();
    let body = &text[open + 1..text.len() - 1];
    let mut args = BTreeMap::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let eq = rest.find('=').ok_or_else(|| err(format!("expected key=value in {body:?}")))?;
        let key = rest[..eq].trim().to_string();
        let after = rest[eq + 1..].trim_start();
        let (value, tail) = if let Some(quoted) = after.strip_prefix('"') {
            let end = quoted.find('"').ok_or_else(|| err("unterminated string".into()))?;
            (quoted[..end].to_string(), &quoted[end + 1..])
        } else {
            let end = after.find(',').unwrap_or(after.len());
            (after[..end].trim().to_string(), &after[end..])
        };
        if args.insert(key.clone(), value).is_some() {
            return Err(err(format!("duplicate argument {key}")));
        }
        let tail = tail.trim_start();
        rest = match tail.strip_prefix(',') {
            Some(t) => t.trim_start(),
            None if tail.is_empty() => tail,
            None => return Err(err(format!("unexpected {tail:?}"))),
        };
    }
    Ok(Descriptor { name, args })
}

impl Descriptor {
    fn take(&self, slot: &str, keys: &[&str]) -> Result<Vec<&str>, ConfigError> {
        if let Some(k) = self.args.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(ConfigError::Descriptor {
                slot: slot.into(),
                message: format!("{} takes {:?}, got unknown argument {k}", self.name, keys),
            });
        }
        keys.iter()
            .map(|k| {
                self.args.get(*k).map(String::as_str).ok_or_else(|| ConfigError::Descriptor {
                    slot: slot.into(),
                    message: format!("{} needs argument {k}", self.name),
                })
            })
            .collect()
    }

    fn max_k(&self, slot: &str, text: &str) -> Result<usize, ConfigError> {
        text.parse().map_err(|_| ConfigError::Descriptor {
            slot: slot.into(),
            message: format!("max_k must be a nonnegative integer, got {text:?}"),
        })
    }
}

pub fn edge_kernel(text: &str) -> Result<EdgeKernel, ConfigError> {
    let d = parse_descriptor("W", text)?;
    Ok(match d.name.as_str() {
        "zero" => EdgeKernel::Zero,
        "poisson_pmf" => {
            let a = d.take("W", &["mean"])?;
            EdgeKernel::PoissonPmf {
                mean: Function::parse("W", a[0], &XY)?,
            }
        }
        "pmf" => {
            let a = d.take("W", &["expr", "max_k"])?;
            EdgeKernel::Pmf {
                expr: Function::parse("W", a[0], &XYK)?,
                max_k: d.max_k("W", a[1])?,
            }
        }
        "level_set" => {
            let a = d.take("W", &["f"])?;
            EdgeKernel::LevelSet {
                f: Function::parse("f", a[0], &XYZ)?,
            }
        }
        other => {
            return Err(ConfigError::Descriptor {
                slot: "W".into(),
                message: format!("unknown family {other}; expected poisson_pmf, pmf, level_set or zero"),
            })
        }
    })
}

pub fn star_intensity(text: &str) -> Result<StarIntensity, ConfigError> {
    let d = parse_descriptor("S", text)?;
    Ok(match d.name.as_str() {
        "zero" => StarIntensity::Zero,
        "pmf" => {
            let a = d.take("S", &["expr", "max_k"])?;
            StarIntensity::Pmf {
                expr: Function::parse("S", a[0], &VK)?,
                max_k: d.max_k("S", a[1])?,
            }
        }
        "level_set" => {
            let a = d.take("S", &["g"])?;
            StarIntensity::LevelSet {
                g: Function::parse("g", a[0], &XY)?,
            }
        }
        other => {
            return Err(ConfigError::Descriptor {
                slot: "S".into(),
                message: format!("unknown family {other}; expected pmf, level_set or zero"),
            })
        }
    })
}
