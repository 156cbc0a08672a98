//! Model specification and the flat `key = value` configuration it is read
//! from.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Flat `key = value` settings; `#` starts a comment. Later keys override
/// earlier ones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: k + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: k + 1,
                    message: "empty key".into(),
                });
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Parsed value of `key`, or `default` when absent.
    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("cannot parse {key} = {v:?}"))),
        }
    }

    pub fn flag_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::InvalidSpec(format!("{key} must be true or false, not {v:?}"))),
        }
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Family {
    #[default]
    Poisson,
    Gaussian,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" => Ok(Family::Poisson),
            "gaussian" => Ok(Family::Gaussian),
            _ => Err(Error::InvalidSpec(format!("unknown family {s:?}"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Poisson => "poisson",
            Family::Gaussian => "gaussian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interaction {
    None,
    /// iid over every (site, time) pair.
    #[default]
    TypeI,
}

impl FromStr for Interaction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Interaction::None),
            "type1" | "typei" | "type_i" => Ok(Interaction::TypeI),
            _ => Err(Error::InvalidSpec(format!("unknown interaction {s:?} (none or type1)"))),
        }
    }
}

impl fmt::Display for Interaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interaction::None => "none",
            Interaction::TypeI => "type1",
        })
    }
}

/// Gamma(shape, rate) prior on every block precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for HyperPrior {
    fn default() -> Self {
        Self { shape: 1.0, rate: 5e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub intercept: bool,
    /// Covariate columns entering linearly.
    pub fixed_effects: Vec<String>,
    /// BYM: ICAR plus iid site effects.
    pub spatial: bool,
    /// Time bins per day, the seasonal period.
    pub period: usize,
    pub seasonal: bool,
    pub temporal_iid: bool,
    pub interaction: Interaction,
    pub family: Family,
    pub hyperprior: HyperPrior,
    /// Diagonal added to intrinsic blocks.
    pub jitter: f64,
    /// Prior precision of the intercept and fixed effects.
    pub fixed_precision: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            intercept: true,
            fixed_effects: vec![],
            spatial: true,
            period: 12,
            seasonal: true,
            temporal_iid: true,
            interaction: Interaction::TypeI,
            family: Family::Poisson,
            hyperprior: HyperPrior::default(),
            jitter: 1e-6,
            fixed_precision: 1e-6,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::InvalidSpec(format!("period must be at least 2, got {}", self.period)));
        }
        if self.interaction == Interaction::TypeI && !(self.spatial && (self.seasonal || self.temporal_iid)) {
            return Err(Error::InvalidSpec(
                "an interaction needs both a spatial and a temporal component".into(),
            ));
        }
        if !(self.hyperprior.shape > 0.0 && self.hyperprior.rate > 0.0) {
            return Err(Error::InvalidSpec("hyperprior shape and rate must be positive".into()));
        }
        if !(self.jitter > 0.0 && self.fixed_precision > 0.0) {
            return Err(Error::InvalidSpec("jitter and fixed-effect precision must be positive".into()));
        }
        if !self.intercept && self.fixed_effects.is_empty() && !self.spatial && !self.seasonal && !self.temporal_iid {
            return Err(Error::InvalidSpec("model has no latent components".into()));
        }
        Ok(())
    }

    /// Reads `family`, `period`, `seasonal`, `temporal_iid`, `spatial`,
    /// `interaction`, `intercept`, `covariates`, `hyper_a`, `hyper_b`,
    /// `jitter` and `fixed_precision`; other keys are left to the caller.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let spatial = match cfg.get("spatial") {
            None | Some("bym") => true,
            Some("none") => false,
            Some(v) => return Err(Error::InvalidSpec(format!("spatial must be bym or none, not {v:?}"))),
        };
        if let Some(s) = cfg.get("strategy") {
            if s != "gaussian_eb" {
                return Err(Error::InvalidSpec(format!("only strategy = gaussian_eb is supported, not {s:?}")));
            }
        }
        let spec = Self {
            intercept: cfg.flag_or("intercept", d.intercept)?,
            fixed_effects: cfg
                .get("covariates")
                .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
                .unwrap_or_default(),
            spatial,
            period: cfg.parse_or("period", d.period)?,
            seasonal: cfg.flag_or("seasonal", d.seasonal)?,
            temporal_iid: cfg.flag_or("temporal_iid", d.temporal_iid)?,
            interaction: cfg.parse_or("interaction", d.interaction)?,
            family: cfg.parse_or("family", d.family)?,
            hyperprior: HyperPrior {
                shape: cfg.parse_or("hyper_a", d.hyperprior.shape)?,
                rate: cfg.parse_or("hyper_b", d.hyperprior.rate)?,
            },
            jitter: cfg.parse_or("jitter", d.jitter)?,
            fixed_precision: cfg.parse_or("fixed_precision", d.fixed_precision)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}
