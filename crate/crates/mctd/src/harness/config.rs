//! Experiment configuration: serialized form, validation, fingerprinting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::descent::DescentConfig;
use crate::tree::{MctdConfig, UctParams};
use crate::{Error, Result};

pub const ALGORITHMS: [&str; 4] = ["mctd", "random", "nelder-mead", "turbo"];

/// One experiment: a benchmark, an algorithm, seeds, and every tunable.
/// Defaults are the Ackley settings (descent weight 10, selection exploration
/// 0.5, exploration-node weight 0.1, leaf weights 50 / 0.1, step scale 0.2,
/// descent switch at 10, budget ratio 1:1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub benchmark: String,
    pub dim: usize,
    pub algorithm: String,
    pub max_evals: usize,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,

    // selection
    pub c_d: f64,
    pub c_p: f64,
    pub c_p_explore: f64,
    pub c_d_leaf: f64,
    pub c_p_leaf: f64,
    pub j: usize,
    pub j_leaf: usize,

    // descent
    pub alpha0: f64,
    pub switch_threshold: f64,
    pub n_directions: usize,
    pub fine_budget: usize,

    // optimize loop
    pub iter_budget: usize,
    /// Descent : BO split, e.g. "1:2".
    pub budget_ratio: String,
    /// Samples inherited on expansion; default `min(2*dim, 40)`.
    pub nr: Option<usize>,
    pub batch: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmark: "ackley".into(),
            dim: 20,
            algorithm: "mctd".into(),
            max_evals: 2000,
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: None,
            c_d: 10.0,
            c_p: 0.5,
            c_p_explore: 0.1,
            c_d_leaf: 50.0,
            c_p_leaf: 0.1,
            j: 10,
            j_leaf: 60,
            alpha0: 0.2,
            switch_threshold: 10.0,
            n_directions: 64,
            fine_budget: 16,
            iter_budget: 4,
            budget_ratio: "1:1".into(),
            nr: None,
            batch: 5,
        }
    }
}

impl RunConfig {
    /// Parse a TOML or JSON config file (by extension; TOML otherwise).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !ALGORITHMS.contains(&self.algorithm.as_str()) {
            return Err(Error::UnknownAlgorithm(self.algorithm.clone()));
        }
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.max_evals == 0 {
            return bad("max_evals must be >= 1");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty");
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad("alpha0 must be positive and finite");
        }
        for (name, v) in [
            ("c_d", self.c_d),
            ("c_p", self.c_p),
            ("c_p_explore", self.c_p_explore),
            ("c_d_leaf", self.c_d_leaf),
            ("c_p_leaf", self.c_p_leaf),
            ("switch_threshold", self.switch_threshold),
        ] {
            if v.is_nan() {
                return bad(&format!("{name} must not be NaN"));
            }
        }
        if self.j == 0 || self.j_leaf == 0 {
            return bad("improvement windows must be >= 1");
        }
        if self.n_directions == 0 {
            return bad("n_directions must be >= 1");
        }
        if self.iter_budget == 0 {
            return bad("iter_budget must be >= 1");
        }
        if self.batch == 0 {
            return bad("batch must be >= 1");
        }
        self.parsed_ratio()?;
        Ok(())
    }

    pub fn parsed_ratio(&self) -> Result<(u32, u32)> {
        let parts: Vec<&str> = self.budget_ratio.split(':').collect();
        let err = || {
            Error::Config(format!(
                "budget_ratio must look like \"1:2\", got {:?}",
                self.budget_ratio
            ))
        };
        if parts.len() != 2 {
            return Err(err());
        }
        let a: u32 = parts[0].trim().parse().map_err(|_| err())?;
        let b: u32 = parts[1].trim().parse().map_err(|_| err())?;
        if a + b == 0 {
            return Err(err());
        }
        Ok((a, b))
    }

    pub fn mctd_config(&self) -> Result<MctdConfig> {
        Ok(MctdConfig {
            uct: UctParams {
                c_d: self.c_d,
                c_p: self.c_p,
                c_p_explore: self.c_p_explore,
                c_d_leaf: self.c_d_leaf,
                c_p_leaf: self.c_p_leaf,
                j: self.j,
                j_leaf: self.j_leaf,
            },
            descent: DescentConfig {
                alpha0: self.alpha0,
                switch_threshold: self.switch_threshold,
                n_directions: self.n_directions,
                fine_budget: self.fine_budget,
            },
            iter_budget: self.iter_budget,
            budget_ratio: self.parsed_ratio()?,
            nr: self.nr.unwrap_or((2 * self.dim).min(40)),
            batch: self.batch,
        })
    }

    /// Stable hash of the canonical JSON form; changes iff any field changes.
    pub fn fingerprint(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
