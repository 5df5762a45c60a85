//! Experiment configuration files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! experiment = "cs"          # or "deblur"
//! snr_db = 40                # number of dB, or "inf" / "noise-free"
//! seeds = [0, 1, 2]
//! maxiter = 1500
//! step_tol = 1e-5
//! output_dir = "out/cs"      # overridden by $SPARSEREG_OUTPUT_DIR
//! trace = false              # per-iteration CSVs
//! noise_power = "unit"       # or "measured"
//! x0 = 0.01                  # constant start vector
//!
//! [instance]                 # cs: n, m, s, scale, amplitude
//! n = 200                    # deblur: n, band, sigma, image
//!
//! [algorithms.hv]
//! alpha = 6e-5               # or "auto": discrepancy principle
//! eta = 1.0
//! ```
//!
//! Parameters per algorithm:
//!
//! | algorithm | keys |
//! |---|---|
//! | `hv` | `alpha`, `eta`, `lk` |
//! | `pg` | `beta`, `gamma`, `radius_sq` (number or `"auto"`), `tau1`, `tau2` |
//! | `ista` | `alpha`, `lambda` |
//! | `fista` | `alpha`, `lambda`, `momentum` |
//! | `st` | `alpha`, `eta` or `beta`, `lambda` |
//! | `ht` | `alpha`, `lambda` |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sparsereg::problems::NoisePower;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "SPARSEREG_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted field path, e.g. `algorithms.hv.eta`.
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at `{}` (line {l}): {}", self.field, self.message),
            None => write!(f, "config error at `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        line: None,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Cs,
    Deblur,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Cs => "cs",
            ExperimentKind::Deblur => "deblur",
        }
    }
}

/// Noise level in dB; `+∞` for noise-free data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrDb(pub f64);

impl SnrDb {
    pub const NOISE_FREE: SnrDb = SnrDb(f64::INFINITY);

    pub fn parse(s: &str) -> Result<SnrDb, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "noise-free" | "noisefree" | "none" => Ok(Self::NOISE_FREE),
            t => t
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(SnrDb)
                .ok_or_else(|| format!("expected a number of dB or \"inf\", got {s:?}")),
        }
    }
}

impl fmt::Display for SnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Num(f64),
    Text(String),
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match NumOrText::deserialize(d)? {
            NumOrText::Num(v) if v.is_finite() => Ok(SnrDb(v)),
            NumOrText::Num(v) if v == f64::INFINITY => Ok(SnrDb::NOISE_FREE),
            NumOrText::Num(v) => Err(serde::de::Error::custom(format!("invalid SNR {v}"))),
            NumOrText::Text(s) => SnrDb::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

/// A number, or `"auto"` for a data-driven choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Auto,
    Value(f64),
}

impl<'de> Deserialize<'de> for ParamValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match NumOrText::deserialize(d)? {
            NumOrText::Num(v) => Ok(ParamValue::Value(v)),
            NumOrText::Text(s) if s.eq_ignore_ascii_case("auto") => Ok(ParamValue::Auto),
            NumOrText::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

impl Serialize for ParamValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ParamValue::Auto => s.serialize_str("auto"),
            ParamValue::Value(v) => s.serialize_f64(*v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePowerCfg {
    #[default]
    Unit,
    Measured,
}

impl From<NoisePowerCfg> for NoisePower {
    fn from(v: NoisePowerCfg) -> Self {
        match v {
            NoisePowerCfg::Unit => NoisePower::Unit,
            NoisePowerCfg::Measured => NoisePower::Measured,
        }
    }
}

/// `"unit-power"` or a fixed standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeCfg {
    UnitPower,
    Fixed(f64),
}

impl<'de> Deserialize<'de> for AmplitudeCfg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match NumOrText::deserialize(d)? {
            NumOrText::Num(v) => Ok(AmplitudeCfg::Fixed(v)),
            NumOrText::Text(s) if s == "unit-power" => Ok(AmplitudeCfg::UnitPower),
            NumOrText::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"unit-power\", got {s:?}"
            ))),
        }
    }
}

impl Serialize for AmplitudeCfg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AmplitudeCfg::UnitPower => s.serialize_str("unit-power"),
            AmplitudeCfg::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<AmplitudeCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Ground-truth image as an `n × n` CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<ParamValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_sq: Option<ParamValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<bool>,
}

fn default_maxiter() -> usize {
    1500
}
fn default_step_tol() -> f64 {
    1e-5
}
fn default_x0() -> f64 {
    0.01
}
fn default_snr() -> SnrDb {
    SnrDb::NOISE_FREE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_snr")]
    pub snr_db: SnrDb,
    pub seeds: Vec<u64>,
    #[serde(default = "default_maxiter")]
    pub maxiter: usize,
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub noise_power: NoisePowerCfg,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default)]
    pub instance: InstanceConfig,
    #[serde(default)]
    pub algorithms: BTreeMap<String, AlgorithmConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Fista,
    Ht,
    Hv,
    Ista,
    Pg,
    St,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Fista,
        Algorithm::Ht,
        Algorithm::Hv,
        Algorithm::Ista,
        Algorithm::Pg,
        Algorithm::St,
    ];

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Fista => "fista",
            Algorithm::Ht => "ht",
            Algorithm::Hv => "hv",
            Algorithm::Ista => "ista",
            Algorithm::Pg => "pg",
            Algorithm::St => "st",
        }
    }

    fn allowed_keys(&self) -> &'static [&'static str] {
        match self {
            Algorithm::Hv => &["alpha", "eta", "lk"],
            Algorithm::Pg => &["beta", "gamma", "radius_sq", "tau1", "tau2"],
            Algorithm::Ista | Algorithm::Ht => &["alpha", "lambda"],
            Algorithm::Fista => &["alpha", "lambda", "momentum"],
            Algorithm::St => &["alpha", "eta", "beta", "lambda"],
        }
    }

    pub fn uses_eta(&self) -> bool {
        matches!(self, Algorithm::Hv | Algorithm::St)
    }

    pub fn uses_alpha(&self) -> bool {
        !matches!(self, Algorithm::Pg)
    }
}

/// Validated parameters of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoSpec {
    pub algo: Algorithm,
    /// `None` for PG.
    pub alpha: Option<ParamValue>,
    pub eta: f64,
    /// Explicit `β` (PG, or ST when set instead of `eta`).
    pub beta: Option<f64>,
    pub lk: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub radius_sq: Option<ParamValue>,
    pub tau1: f64,
    pub tau2: f64,
    pub momentum: bool,
}

/// Cross-checked instance shape.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSpec {
    Cs {
        n: usize,
        m: usize,
        s: usize,
        scale: f64,
        amplitude: AmplitudeCfg,
    },
    Deblur {
        n: usize,
        band: usize,
        sigma: f64,
        image: Option<PathBuf>,
    },
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub raw: ExperimentConfig,
    pub instance: InstanceSpec,
    pub algorithms: Vec<AlgoSpec>,
}

impl ExperimentConfig {
    /// Parses TOML text; syntax and type errors carry the line number.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str::<ExperimentConfig>(text).map_err(|e| {
            let line = e
                .span()
                .map(|sp| text[..sp.start.min(text.len())].matches('\n').count() + 1);
            ConfigError {
                field: "<document>".to_string(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn from_file(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("<file>", format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::from_toml_str(&text)?;
        Ok((cfg, text))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unserializable config: {e}\n"))
    }

    /// The output directory after applying the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        if let Some(p) = std::env::var_os(OUTPUT_DIR_ENV).filter(|p| !p.is_empty()) {
            return PathBuf::from(p);
        }
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("out/{}", self.experiment.as_str())))
    }

    /// Semantic checks. `source`, when given, is used to attach line
    /// numbers to the offending keys.
    pub fn validate(&self, source: Option<&str>) -> Result<Validated, ConfigError> {
        self.validate_inner().map_err(|mut e| {
            if e.line.is_none() {
                e.line = source.and_then(|s| locate(s, &e.field));
            }
            e
        })
    }

    fn validate_inner(&self) -> Result<Validated, ConfigError> {
        if self.seeds.is_empty() {
            return Err(err("seeds", "at least one seed is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return Err(err("seeds", format!("duplicate seed {s}")));
            }
        }
        if self.maxiter == 0 {
            return Err(err("maxiter", "must be at least 1"));
        }
        if !(self.step_tol > 0.0 && self.step_tol.is_finite()) {
            return Err(err("step_tol", "must be positive"));
        }
        if !self.x0.is_finite() {
            return Err(err("x0", "must be finite"));
        }
        if self.snr_db.0.is_nan() {
            return Err(err("snr_db", "must be a number or \"inf\""));
        }
        let instance = self.instance_spec()?;
        if self.algorithms.is_empty() {
            return Err(err("algorithms", "at least one algorithm section is required"));
        }
        let mut algorithms = Vec::new();
        for (name, a) in &self.algorithms {
            let algo = Algorithm::from_name(name).ok_or_else(|| {
                let known: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                err(
                    format!("algorithms.{name}"),
                    format!("unknown algorithm; expected one of {}", known.join(", ")),
                )
            })?;
            algorithms.push(algo_spec(algo, a)?);
        }
        Ok(Validated {
            raw: self.clone(),
            instance,
            algorithms,
        })
    }

    fn instance_spec(&self) -> Result<InstanceSpec, ConfigError> {
        let i = &self.instance;
        let forbid = |key: &str, present: bool| -> Result<(), ConfigError> {
            if present {
                Err(err(
                    format!("instance.{key}"),
                    format!("not used by {} experiments", self.experiment.as_str()),
                ))
            } else {
                Ok(())
            }
        };
        match self.experiment {
            ExperimentKind::Cs => {
                forbid("band", i.band.is_some())?;
                forbid("sigma", i.sigma.is_some())?;
                forbid("image", i.image.is_some())?;
                let n = i.n.unwrap_or(200);
                let m = i.m.unwrap_or(n * 2 / 5);
                let s = i.s.unwrap_or(m / 5);
                let scale = i.scale.unwrap_or(0.04);
                if !(0 < s && s <= m && m <= n) {
                    return Err(err(
                        "instance",
                        format!("need 0 < s <= m <= n, got n={n} m={m} s={s}"),
                    ));
                }
                if !(scale >= 0.0 && scale.is_finite()) {
                    return Err(err("instance.scale", "must be nonnegative"));
                }
                let amplitude = i.amplitude.unwrap_or(AmplitudeCfg::UnitPower);
                if let AmplitudeCfg::Fixed(v) = amplitude {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(err("instance.amplitude", "must be positive"));
                    }
                }
                Ok(InstanceSpec::Cs {
                    n,
                    m,
                    s,
                    scale,
                    amplitude,
                })
            }
            ExperimentKind::Deblur => {
                forbid("m", i.m.is_some())?;
                forbid("s", i.s.is_some())?;
                forbid("scale", i.scale.is_some())?;
                forbid("amplitude", i.amplitude.is_some())?;
                let n = i.n.unwrap_or(16);
                let band = i.band.unwrap_or(3);
                let sigma = i.sigma.unwrap_or(0.7);
                if n == 0 {
                    return Err(err("instance.n", "must be positive"));
                }
                if !(1..=n).contains(&band) {
                    return Err(err("instance.band", format!("must lie in [1, {n}]")));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(err("instance.sigma", "must be positive"));
                }
                Ok(InstanceSpec::Deblur {
                    n,
                    band,
                    sigma,
                    image: i.image.clone(),
                })
            }
        }
    }
}

fn algo_spec(algo: Algorithm, a: &AlgorithmConfig) -> Result<AlgoSpec, ConfigError> {
    let name = algo.name();
    let path = |key: &str| format!("algorithms.{name}.{key}");
    let present: [(&str, bool); 10] = [
        ("alpha", a.alpha.is_some()),
        ("eta", a.eta.is_some()),
        ("beta", a.beta.is_some()),
        ("lk", a.lk.is_some()),
        ("gamma", a.gamma.is_some()),
        ("lambda", a.lambda.is_some()),
        ("radius_sq", a.radius_sq.is_some()),
        ("tau1", a.tau1.is_some()),
        ("tau2", a.tau2.is_some()),
        ("momentum", a.momentum.is_some()),
    ];
    for (key, is_set) in present {
        if is_set && !algo.allowed_keys().contains(&key) {
            return Err(err(path(key), format!("not a parameter of `{name}`")));
        }
    }
    let positive = |key: &str, v: Option<f64>, default: f64| -> Result<f64, ConfigError> {
        let v = v.unwrap_or(default);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(err(path(key), format!("must be positive and finite, got {v}")))
        }
    };
    let alpha = if algo.uses_alpha() {
        match a.alpha {
            None => return Err(err(path("alpha"), "required (a number or \"auto\")")),
            Some(ParamValue::Value(v)) if !(v > 0.0 && v.is_finite()) => {
                return Err(err(path("alpha"), format!("must be positive, got {v}")))
            }
            Some(v) => Some(v),
        }
    } else {
        None
    };
    let eta = a.eta.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&eta) {
        return Err(err(path("eta"), format!("must lie in [0, 1], got {eta}")));
    }
    if algo == Algorithm::St && a.eta.is_some() && a.beta.is_some() {
        return Err(err(path("beta"), "give either `eta` or `beta`, not both"));
    }
    if let Some(b) = a.beta {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(err(path("beta"), format!("must be nonnegative, got {b}")));
        }
        if let (Algorithm::St, Some(ParamValue::Value(al))) = (algo, alpha) {
            if b > al {
                return Err(err(path("beta"), format!("must not exceed alpha = {al}")));
            }
        }
    }
    let gamma = positive("gamma", a.gamma, 1.0)?;
    let beta = match algo {
        Algorithm::Pg => {
            let b = a.beta.unwrap_or(0.0);
            if !(gamma > 2.0 * b) {
                return Err(err(path("gamma"), format!("must exceed 2*beta = {}", 2.0 * b)));
            }
            Some(b)
        }
        _ => a.beta,
    };
    let radius_sq = if algo == Algorithm::Pg {
        match a.radius_sq {
            None => return Err(err(path("radius_sq"), "required (a number or \"auto\")")),
            Some(ParamValue::Value(v)) if !(v > 0.0 && v.is_finite()) => {
                return Err(err(path("radius_sq"), format!("must be positive, got {v}")))
            }
            Some(v) => Some(v),
        }
    } else {
        None
    };
    let tau1 = a.tau1.unwrap_or(sparsereg::solvers::MdpOptions::DEFAULT_TAU1);
    let tau2 = a.tau2.unwrap_or(sparsereg::solvers::MdpOptions::DEFAULT_TAU2);
    if !(tau1 > 1.0 && tau2 >= tau1 && tau2.is_finite()) {
        return Err(err(path("tau1"), format!("need 1 < tau1 <= tau2, got {tau1} and {tau2}")));
    }
    Ok(AlgoSpec {
        algo,
        alpha,
        eta,
        beta,
        lk: positive("lk", a.lk, 1.0)?,
        gamma,
        lambda: positive("lambda", a.lambda, 1.0)?,
        radius_sq,
        tau1,
        tau2,
        momentum: a.momentum.unwrap_or(true),
    })
}

/// Best-effort line of a dotted key in TOML source: finds the section header
/// for all but the last component, then the key.
fn locate(source: &str, field: &str) -> Option<usize> {
    let parts: Vec<&str> = field.split('.').collect();
    let (section, key) = match parts.as_slice() {
        [key] => ("", *key),
        [sec @ .., key] => (&field[..sec.join(".").len()], *key),
        [] => return None,
    };
    let mut in_section = section.is_empty();
    let mut header_line = None;
    for (i, line) in source.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            let name = t.trim_start_matches('[').trim_end_matches(']').trim();
            in_section = name == section;
            if in_section {
                header_line = Some(i + 1);
            }
            if name == field {
                return Some(i + 1);
            }
            continue;
        }
        if in_section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}
