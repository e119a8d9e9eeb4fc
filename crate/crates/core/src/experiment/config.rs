use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{TimeGrid, DEFAULT_PRUNE_FLOOR, DEFAULT_SUBINTERVALS};
use crate::error::{Error, Result};

/// Largest chain the dense pipeline accepts (`C(16, 8) = 12870`).
pub const MAX_SITES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// `(|Φ1> + |Φ2>)/√2`
    Cat,
    /// `(|Φ1><Φ1| + |Φ2><Φ2|)/2`
    Mixed,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Cat => "cat",
            Protocol::Mixed => "mixed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolChoice {
    Cat,
    Mixed,
    Both,
}

impl ProtocolChoice {
    pub fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolChoice::Cat => vec![Protocol::Cat],
            ProtocolChoice::Mixed => vec![Protocol::Mixed],
            ProtocolChoice::Both => vec![Protocol::Cat, Protocol::Mixed],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "L", alias = "l")]
    pub sites: usize,
    #[serde(rename = "J", alias = "j")]
    pub coupling: f64,
    pub h: f64,
    pub disorder_seed: u64,
    pub total_sz: i32,
    pub protocol: ProtocolChoice,
    pub time_window: TimeGrid,
    pub n_subintervals: usize,
    /// `None` resolves to `1e-8` times the spectral width.
    pub degeneracy_tol: Option<f64>,
    /// Monte-Carlo cross-check sample count; 0 skips it.
    pub mc_samples: usize,
    pub output_dir: Option<PathBuf>,
    pub prune_floor: f64,
    /// Energies `[E1, E2]` that `Φ1`, `Φ2` should be closest to. `None` uses
    /// the spectral edges `[E_min, E_max]`.
    pub state_targets: Option<[f64; 2]>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sites: 12,
            coupling: 1.0,
            h: 1.0,
            disorder_seed: 0,
            total_sz: 0,
            protocol: ProtocolChoice::Both,
            time_window: TimeGrid::default(),
            n_subintervals: DEFAULT_SUBINTERVALS,
            degeneracy_tol: None,
            mc_samples: 0,
            output_dir: None,
            prune_floor: DEFAULT_PRUNE_FLOOR,
            state_targets: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.sites < 2 || self.sites % 2 != 0 {
            return fail(format!("L must be even and >= 2, got {}", self.sites));
        }
        if self.sites > MAX_SITES {
            return fail(format!("L = {} exceeds the dense limit {MAX_SITES}", self.sites));
        }
        if !self.coupling.is_finite() || !(self.h >= 0.0 && self.h.is_finite()) {
            return fail(format!("J = {} and h = {} must be finite with h >= 0", self.coupling, self.h));
        }
        let tw = &self.time_window;
        if !(tw.t_end > tw.t_start) {
            return fail(format!("t_end {} must exceed t_start {}", tw.t_end, tw.t_start));
        }
        if tw.n_points < 100 {
            return fail(format!("n_points must be >= 100, got {}", tw.n_points));
        }
        if self.n_subintervals == 0 || tw.n_points < 10 * self.n_subintervals {
            return fail(format!("{} points cannot be split into {} subintervals", tw.n_points, self.n_subintervals));
        }
        if let Some(tol) = self.degeneracy_tol {
            if !(tol >= 0.0) {
                return fail(format!("degeneracy_tol must be >= 0, got {tol}"));
            }
        }
        if !(self.prune_floor >= 0.0 && self.prune_floor < 1.0) {
            return fail(format!("prune_floor must lie in [0, 1), got {}", self.prune_floor));
        }
        if let Some(t) = self.state_targets {
            if !t.iter().all(|x| x.is_finite()) {
                return fail(format!("state_targets must be finite, got {t:?}"));
            }
        }
        if self.mc_samples != 0 && self.mc_samples < crate::haar::MIN_SAMPLES {
            return fail(format!("mc_samples must be 0 or >= {}", crate::haar::MIN_SAMPLES));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { disorder_seed: seed, ..self.clone() }
    }
}
