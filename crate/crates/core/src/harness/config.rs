//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # Toeplitz rows, circulant columns
//! n = 2000
//! d = 1000
//! xi = toeplitz:0.9
//! sigma = circulant:0.0078:300
//! prior = gaussian
//! lambda_grid = linspace(1.1, 3, 8)
//! lambda_scale = threshold
//! trials = 20
//! seed = 1
//! estimators = optimal, vanilla, whiten
//! amp_steps = 10
//! measure_resolution = 1000
//! out = results.csv
//! ```
//!
//! `#` starts a comment. Covariances are `identity`, `toeplitz:RHO`,
//! `circulant:C:ELL`. With `lambda_scale = threshold` the grid values are
//! multiples of the weak-recovery threshold of the setting.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::model::Prior;
use crate::spectra::{CovarianceModel, DEFAULT_RESOLUTION};

/// Covariance family and parameters, independent of dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovSpec {
    Identity,
    Toeplitz { rho: f64 },
    Circulant { c: f64, ell: usize },
}

impl CovSpec {
    pub fn build(&self, dim: usize) -> Result<CovarianceModel> {
        let built = match *self {
            CovSpec::Identity => CovarianceModel::identity(dim),
            CovSpec::Toeplitz { rho } => CovarianceModel::toeplitz(dim, rho),
            CovSpec::Circulant { c, ell } => CovarianceModel::circulant(dim, c, ell),
        };
        built.map_err(|e| Error::Config(format!("covariance {self} at dimension {dim}: {e}")))
    }
}

impl FromStr for CovSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num =
            |p: &str| p.parse::<f64>().map_err(|_| Error::Config(format!("bad number '{p}' in covariance '{s}'")));
        match parts.as_slice() {
            ["identity"] => Ok(CovSpec::Identity),
            ["toeplitz", rho] => Ok(CovSpec::Toeplitz { rho: num(rho)? }),
            ["circulant", c, ell] => Ok(CovSpec::Circulant {
                c: num(c)?,
                ell: ell.parse().map_err(|_| Error::Config(format!("bad band width '{ell}' in '{s}'")))?,
            }),
            _ => Err(Error::Config(format!(
                "unknown covariance '{s}' (expected identity, toeplitz:RHO, or circulant:C:ELL)"
            ))),
        }
    }
}

impl fmt::Display for CovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovSpec::Identity => write!(f, "identity"),
            CovSpec::Toeplitz { rho } => write!(f, "toeplitz:{rho}"),
            CovSpec::Circulant { c, ell } => write!(f, "circulant:{c}:{ell}"),
        }
    }
}

/// How `lambda_grid` values are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaScale {
    Absolute,
    /// Multiples of the weak-recovery threshold.
    Threshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub xi: CovSpec,
    pub sigma: CovSpec,
    pub prior: Prior,
    pub lambda_grid: Vec<f64>,
    pub lambda_scale: LambdaScale,
    pub trials: usize,
    pub base_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub amp_steps: usize,
    /// Atoms per limiting spectral measure, capped at each dimension.
    pub measure_resolution: usize,
    pub power_tol: f64,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 1000,
            xi: CovSpec::Identity,
            sigma: CovSpec::Identity,
            prior: Prior::Gaussian,
            lambda_grid: Vec::new(),
            lambda_scale: LambdaScale::Absolute,
            trials: 1,
            base_seed: 0,
            estimators: vec![EstimatorKind::OptimalSpectral, EstimatorKind::Vanilla, EstimatorKind::Whiten],
            amp_steps: 10,
            measure_resolution: DEFAULT_RESOLUTION,
            power_tol: crate::estimators::power::DEFAULT_TOL,
            output_path: None,
        }
    }
}

/// Parses `a,b,c` or `linspace(a, b, N)`.
pub fn parse_lambda_grid(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix("linspace(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        let [a, b, count] = parts.as_slice() else {
            return Err(Error::Config(format!("linspace needs three arguments, got '{s}'")));
        };
        let a: f64 = a.parse().map_err(|_| Error::Config(format!("bad linspace start '{a}'")))?;
        let b: f64 = b.parse().map_err(|_| Error::Config(format!("bad linspace end '{b}'")))?;
        let count: usize = count.parse().map_err(|_| Error::Config(format!("bad linspace count '{count}'")))?;
        return Ok(match count {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..count).map(|k| a + (b - a) * k as f64 / (count - 1) as f64).collect(),
        });
    }
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| Error::Config(format!("bad lambda value '{p}'"))))
        .collect()
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value '{value}' for '{key}'")))
}

impl ExperimentConfig {
    /// Parses the flat text format; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets a single key, as from a config line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse_value(key, value)?,
            "d" => self.d = parse_value(key, value)?,
            "xi" => self.xi = value.parse()?,
            "sigma" => self.sigma = value.parse()?,
            "prior" => self.prior = value.parse()?,
            "lambda_grid" => self.lambda_grid = parse_lambda_grid(value)?,
            "lambda_scale" => {
                self.lambda_scale = match value {
                    "absolute" => LambdaScale::Absolute,
                    "threshold" => LambdaScale::Threshold,
                    other => {
                        return Err(Error::Config(format!("lambda_scale must be absolute or threshold, got '{other}'")))
                    }
                }
            }
            "trials" => self.trials = parse_value(key, value)?,
            "seed" => self.base_seed = parse_value(key, value)?,
            "estimators" => {
                self.estimators =
                    value.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::parse).collect::<Result<_>>()?
            }
            "amp_steps" => self.amp_steps = parse_value(key, value)?,
            "measure_resolution" => self.measure_resolution = parse_value(key, value)?,
            "power_tol" => self.power_tol = parse_value(key, value)?,
            "out" => self.output_path = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("n and d must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Config("lambda_grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("lambda values must be finite and non-negative".into()));
        }
        if self.lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("lambda_grid must be strictly increasing".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        let mut sorted = self.estimators.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.estimators.len() {
            return Err(Error::Config("estimators listed twice".into()));
        }
        if self.measure_resolution == 0 {
            return Err(Error::Config("measure_resolution must be positive".into()));
        }
        if !(self.power_tol > 0.0 && self.power_tol <= 1e-8) {
            return Err(Error::Config("power_tol must lie in (0, 1e-8]".into()));
        }
        Ok(())
    }
}
