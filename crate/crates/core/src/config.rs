//! Flat key-value run configuration (TOML syntax, no tables) with overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::{DomainSpec, MeshOptions, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `disk`, `square` or `polygon`.
    pub domain: String,
    pub radius: f64,
    pub center: Point,
    /// Half side of the square `[-half, half]²`.
    pub half: f64,
    pub vertices: Vec<Point>,
    pub h: f64,
    /// Enables radial grading towards the origin when set.
    pub grading_r_min: Option<f64>,
    pub grading_ratio: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Subspace level `ℓ`; 0 means the full space.
    pub level: usize,
    pub eps: f64,
    pub eps_schedule: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub eig_count: usize,
    pub eig_tol: f64,
    /// Ball radius for `bubble`; `inf` is allowed.
    pub bubble_radius: f64,
    pub bound_eps: Vec<f64>,
    pub bound_r_min_factor: f64,
    pub bound_ratio: f64,
    pub delta: f64,
    pub profile_radius: f64,
    pub truncation_levels: Vec<f64>,
    pub annulus_inner: f64,
    pub annulus_outer: f64,
    pub output: PathBuf,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: "disk".into(),
            radius: 1.0,
            center: [0.0, 0.0],
            half: 1.0,
            vertices: Vec::new(),
            h: 1.0 / 32.0,
            grading_r_min: None,
            grading_ratio: 1.15,
            beta: 0.5,
            alpha: 0.0,
            level: 0,
            eps: 0.1,
            eps_schedule: vec![0.1, 0.05, 0.02, 0.01, 0.005],
            tol: 1e-7,
            max_iter: 10_000,
            restarts: 0,
            seed: 0,
            eig_count: 6,
            eig_tol: 1e-10,
            bubble_radius: f64::INFINITY,
            bound_eps: vec![1e-2, 1e-3, 1e-4],
            bound_r_min_factor: 0.01,
            bound_ratio: 1.15,
            delta: 0.1,
            profile_radius: 5.0,
            truncation_levels: vec![0.25, 0.5, 0.75],
            annulus_inner: 0.2,
            annulus_outer: 0.8,
            output: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

impl RunConfig {
    /// Parse a config file body; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::builder(text)?.build()
    }

    pub fn builder(text: &str) -> Result<ConfigBuilder> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
            return Err(Error::Parse(format!("config must be flat; `{k}` is a table")));
        }
        Ok(ConfigBuilder { table })
    }

    pub fn load(path: &Path) -> Result<ConfigBuilder> {
        Self::builder(&std::fs::read_to_string(path)?)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        let spec = match self.domain.as_str() {
            "disk" => DomainSpec::disk_at(self.center, self.radius),
            "square" => DomainSpec::square(self.half),
            "polygon" => DomainSpec::polygon(self.vertices.clone()),
            other => return Err(Error::InvalidDomain(format!("unknown domain `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mesh_options(&self) -> MeshOptions {
        match self.grading_r_min {
            Some(r_min) => MeshOptions::graded(self.h, r_min, self.grading_ratio),
            None => MeshOptions::uniform(self.h),
        }
    }

    /// Re-check every parameter the downstream modules would reject.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        self.domain_spec()?;
        if !(self.h.is_finite() && self.h > 0.0) {
            return bad(format!("h = {} must be positive", self.h));
        }
        if let Some(r) = self.grading_r_min {
            if !(r > 0.0 && r < self.h && self.grading_ratio > 1.0) {
                return bad("grading needs 0 < grading_r_min < h and grading_ratio > 1".into());
            }
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad(format!("beta = {} must lie in [0, 1)", self.beta));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        let eps_ok = |e: f64| e > 0.0 && e < 1.0 - self.beta;
        if !eps_ok(self.eps) {
            return bad(format!("eps = {} must lie in (0, 1 - beta)", self.eps));
        }
        if self.eps_schedule.is_empty()
            || !self.eps_schedule.iter().all(|&e| eps_ok(e))
            || self.eps_schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("eps_schedule must be nonempty, strictly decreasing and inside (0, 1 - beta)".into());
        }
        if !(self.tol > 0.0 && self.eig_tol > 0.0 && self.max_iter > 0) {
            return bad("tolerances and max_iter must be positive".into());
        }
        if self.eig_count == 0 || self.eig_count <= self.level {
            return bad(format!("eig_count = {} must exceed level = {}", self.eig_count, self.level));
        }
        if !(self.bubble_radius > 0.0) {
            return bad("bubble_radius must be positive".into());
        }
        if self.bound_eps.is_empty() || !self.bound_eps.iter().all(|&e| e > 0.0 && e < 1.0) {
            return bad("bound_eps entries must lie in (0, 1)".into());
        }
        if !(self.bound_r_min_factor > 0.0 && self.bound_ratio > 1.0) {
            return bad("bound_r_min_factor must be positive and bound_ratio > 1".into());
        }
        if !(self.delta > 0.0 && self.profile_radius > 0.0) {
            return bad("delta and profile_radius must be positive".into());
        }
        if !self.truncation_levels.iter().all(|&g| g > 0.0 && g <= 1.0) {
            return bad("truncation levels must lie in (0, 1]".into());
        }
        if !(self.annulus_inner > 0.0 && self.annulus_outer > self.annulus_inner) {
            return bad("annulus needs 0 < annulus_inner < annulus_outer".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Canonical text of the resolved config.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// A config table awaiting overrides.
#[derive(Clone, Debug, Default)]
pub struct ConfigBuilder {
    table: toml::Table,
}

impl ConfigBuilder {
    /// Set `key` from a TOML literal (`0.5`, `inf`, `[0.1, 0.05]`); anything
    /// that does not parse is taken as a string.
    pub fn set(mut self, key: &str, literal: &str) -> Result<Self> {
        let value = format!("v = {literal}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(literal.to_string()));
        self.table.insert(key.to_string(), value);
        Ok(self)
    }

    pub fn set_value(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.table.insert(key.to_string(), value.into());
        self
    }

    pub fn build(self) -> Result<RunConfig> {
        let cfg: RunConfig = self.table.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml_str(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn overrides_and_rejections() {
        let cfg = RunConfig::builder("beta = 0.25\nh = 0.05\n")
            .unwrap()
            .set("bubble_radius", "inf")
            .unwrap()
            .set("eps_schedule", "[0.2, 0.1]")
            .unwrap()
            .set("output", "runs/a")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(cfg.beta, 0.25);
        assert!(cfg.bubble_radius.is_infinite());
        assert_eq!(cfg.eps_schedule, vec![0.2, 0.1]);
        assert_eq!(cfg.output, PathBuf::from("runs/a"));
        assert_ne!(cfg.hash(), RunConfig::default().hash());

        assert!(matches!(RunConfig::from_toml_str("betta = 0.5"), Err(Error::Parse(_))));
        assert!(matches!(RunConfig::from_toml_str("[mesh]\nh = 0.1"), Err(Error::Parse(_))));
        assert!(RunConfig::from_toml_str("beta = 1.0").is_err());
        assert!(RunConfig::from_toml_str("eps = 0.6").is_err());
        assert!(RunConfig::from_toml_str("eps_schedule = [0.1, 0.2]").is_err());
        assert!(matches!(RunConfig::from_toml_str("domain = \"disk\"\ncenter = [2.0, 0.0]"), Err(Error::OriginOutside)));
        assert!(RunConfig::from_toml_str("domain = \"annulus\"").is_err());
    }
}
