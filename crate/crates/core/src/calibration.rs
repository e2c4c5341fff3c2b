//! Versioned calibration constants.
//!
//! The audits need concrete thresholds where the theory only asserts that
//! constants exist. They live in one TOML file whose SHA-256 is recorded in
//! every run manifest. The default file is compiled in.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scales::ScaleParams;
use crate::tensor::MaterialParams;

pub const DEFAULT_TOML: &str = include_str!("../calibration/default.toml");

pub const SUPPORTED_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialCal {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eta_core: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleCal {
    pub lambda: f64,
    pub eta_clear: f64,
    pub clear_c: f64,
    pub sigma: f64,
    pub theta: f64,
    pub beta: f64,
    pub bulk_decay_m: f64,
    pub point_cover_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bands {
    pub bulk_factor: f64,
    pub sharpness_floor: f64,
    pub slope_tol: f64,
    pub r2_min: f64,
    pub cover_factor: f64,
    pub decay_factor: f64,
    pub lp_variation: f64,
    pub monotonicity_tol: f64,
    pub hedgehog_energy_spread: f64,
    /// Slack on the energy envelope fitted at the coarsest ε.
    pub envelope_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub version: u32,
    pub material: MaterialCal,
    pub scales: ScaleCal,
    pub bands: Bands,
    /// Hex SHA-256 of the source text.
    #[serde(skip)]
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Calibration {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cal: Calibration =
            toml::from_str(text).map_err(|e| Error::InvalidParams(format!("calibration: {e}")))?;
        if cal.version != SUPPORTED_VERSION {
            return Err(Error::InvalidParams(format!(
                "calibration version {} is not supported (expected {SUPPORTED_VERSION})",
                cal.version
            )));
        }
        cal.material_params()?;
        cal.scale_params()?;
        cal.hash = sha256_hex(text.as_bytes());
        Ok(cal)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn material_params(&self) -> Result<MaterialParams> {
        let m = &self.material;
        if !(m.eta_core > 0.0) {
            return Err(Error::InvalidParams(format!(
                "eta_core must be positive, got {}",
                m.eta_core
            )));
        }
        Ok(MaterialParams::new(m.a, m.b, m.c)?.with_eta_core(m.eta_core))
    }

    pub fn scale_params(&self) -> Result<ScaleParams> {
        let s = &self.scales;
        ScaleParams::new(s.lambda, s.eta_clear, s.sigma, s.theta, s.beta)
    }
}

impl Default for Calibration {
    fn default() -> Self {
        Self::parse(DEFAULT_TOML).expect("embedded calibration is valid")
    }
}
