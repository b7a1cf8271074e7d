//! JSON run configuration. Every section is optional; unknown keys are rejected.

use std::path::Path;

use msgate_motion::noise::{NoiseModel, DEFAULT_QUADRATURE_ORDER};
use msgate_motion::{calibrate_gate, GateParams, MotionalSpec};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gate: GateConfig,
    pub motion: MotionConfig,
    pub noise: NoiseConfig,
    pub sweep: SweepConfig,
    pub phase_scan: PhaseScanConfig,
    pub grid: GridConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub loops: u32,
    pub tau_us: f64,
    pub nu0_mhz: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { loops: 2, tau_us: 60.0, nu0_mhz: 3.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub alpha_sq: f64,
    pub phi_rad: f64,
    pub nbar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(rename = "sigma_Hz", alias = "sigma_hz")]
    pub sigma_hz: f64,
    pub quadrature_order: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma_hz: 600.0, quadrature_order: DEFAULT_QUADRATURE_ORDER }
    }
}

/// Fixed trap-frequency offsets. Empty `alpha_sq`/`phi_rad` fall back to `motion`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub delta_nu_hz: Vec<f64>,
    pub alpha_sq: Vec<f64>,
    pub phi_rad: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseScanConfig {
    pub phi_rad: Vec<f64>,
    pub alpha_sq: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub alpha_sq: Vec<f64>,
    pub nbar: Vec<f64>,
    pub phi_rad: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<String>,
}

fn nonnegative(key: &str, values: &[f64]) -> Result<(), Failure> {
    match values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        Some(v) => Err(Failure::Usage(format!("config key `{key}` must be finite and >= 0, got {v}"))),
        None => Ok(()),
    }
}

fn finite(key: &str, values: &[f64]) -> Result<(), Failure> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Failure::Usage(format!("config key `{key}` must be finite, got {v}"))),
        None => Ok(()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.gate.loops == 0 {
            return Err(Failure::Usage("config key `gate.loops` must be >= 1".into()));
        }
        if !(self.gate.tau_us > 0.0 && self.gate.tau_us.is_finite()) {
            return Err(Failure::Usage(format!("config key `gate.tau_us` must be > 0, got {}", self.gate.tau_us)));
        }
        nonnegative("gate.nu0_mhz", &[self.gate.nu0_mhz])?;
        nonnegative("motion.alpha_sq", &[self.motion.alpha_sq])?;
        nonnegative("motion.nbar", &[self.motion.nbar])?;
        finite("motion.phi_rad", &[self.motion.phi_rad])?;
        nonnegative("noise.sigma_Hz", &[self.noise.sigma_hz])?;
        if self.noise.quadrature_order == 0 {
            return Err(Failure::Usage("config key `noise.quadrature_order` must be >= 1".into()));
        }
        finite("sweep.delta_nu_hz", &self.sweep.delta_nu_hz)?;
        nonnegative("sweep.alpha_sq", &self.sweep.alpha_sq)?;
        finite("sweep.phi_rad", &self.sweep.phi_rad)?;
        finite("phase_scan.phi_rad", &self.phase_scan.phi_rad)?;
        nonnegative("phase_scan.alpha_sq", &self.phase_scan.alpha_sq)?;
        nonnegative("grid.alpha_sq", &self.grid.alpha_sq)?;
        nonnegative("grid.nbar", &self.grid.nbar)?;
        finite("grid.phi_rad", &self.grid.phi_rad)?;
        Ok(())
    }

    pub fn gate_params(&self) -> Result<GateParams, Failure> {
        gate_params(self.gate.loops, self.gate.tau_us, self.gate.nu0_mhz)
    }

    pub fn noise_model(&self) -> Result<NoiseModel, Failure> {
        Ok(NoiseModel::from_hz(self.noise.sigma_hz, self.noise.quadrature_order)?)
    }

    pub fn spec(&self, alpha_sq: f64, phi: f64, nbar: f64) -> Result<MotionalSpec, Failure> {
        Ok(MotionalSpec::from_alpha_sq(alpha_sq, phi, nbar, 1)?)
    }
}

pub fn gate_params(loops: u32, tau_us: f64, nu0_mhz: f64) -> Result<GateParams, Failure> {
    calibrate_gate(loops, tau_us * 1e-6, std::f64::consts::TAU * nu0_mhz * 1e6).map_err(|e| Failure::Usage(e.to_string()))
}

/// `values`, or `fallback` alone when `values` is empty.
pub fn or_single(values: &[f64], fallback: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"gate": {"loops": 2, "tau": 60}}"#).unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
        assert!(serde_json::from_str::<RunConfig>(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg: RunConfig = serde_json::from_str(r#"{"noise": {"sigma_Hz": 200}}"#).unwrap();
        assert_eq!(cfg.gate, GateConfig::default());
        assert_eq!(cfg.noise.sigma_hz, 200.0);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn negative_values_name_the_key() {
        let mut cfg = RunConfig::default();
        cfg.motion.nbar = -0.1;
        match cfg.validate() {
            Err(Failure::Usage(m)) => assert!(m.contains("motion.nbar")),
            other => panic!("{other:?}"),
        }
    }
}
