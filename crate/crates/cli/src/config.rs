use mtlab_core::geometry_green::{Domain, Shape};
use mtlab_core::Error;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Run parameters read from `--config`. Command-line flags override them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub gammas: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub tol: Option<f64>,
    pub gap_tol: Option<f64>,
    pub domain: Option<DomainSpec>,
    pub resolution: Option<f64>,
    pub steps: Option<usize>,
    pub mode: Option<u32>,
    pub count: Option<usize>,
    pub k: Option<usize>,
    pub seeds: Option<usize>,
    pub seed: Option<u64>,
}

/// A domain file: the shape, plus an optional Robin critical point to
/// center the mesh on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub x0: Option<[f64; 2]>,
}

impl DomainSpec {
    pub fn domain(&self) -> Result<Domain, Error> {
        Domain::new(self.shape.clone()).map_err(|e| invalid("domain", e.to_string()))
    }
}

pub fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid { field: field.into(), reason: reason.into() }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, field: &str) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(field, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(field, format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, Error> {
        let cfg: RunConfig = match path {
            Some(p) => read_json(p, "config")?,
            None => RunConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [("tol", self.tol), ("gap_tol", self.gap_tol), ("resolution", self.resolution), ("gamma", self.gamma)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(name, format!("must be positive, got {v}")));
                }
            }
        }
        if let Some(g) = &self.gammas {
            validate_gammas(g)?;
        }
        Ok(())
    }
}

pub fn load_domain(path: &Path) -> Result<DomainSpec, Error> {
    read_json(path, "domain")
}

pub fn validate_gammas(g: &[f64]) -> Result<(), Error> {
    if g.is_empty() {
        return Err(invalid("gammas", "empty gamma grid"));
    }
    if let Some(x) = g.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(invalid("gammas", format!("amplitudes must be positive, got {x}")));
    }
    if g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("gammas", "grid must be strictly ascending"));
    }
    Ok(())
}

pub fn parse_gammas(s: &str) -> Result<Vec<f64>, Error> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| invalid("gammas", format!("`{t}`: {e}"))))
        .collect()
}
