//! Declarative toolkit configuration. Physical quantities are SI with the
//! unit in the key name.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use imc_core::analysis::{MismatchSpec, SpectrumRegion};
use imc_core::filtersynth::{default_aux_poles, FilterDesignSpec};
use imc_core::numkernel::Matrix;
use imc_core::plantmodel::{reflect_unstable_poles, DelayedRationalPlant};
use imc_core::sigmodel::{harmonic_set, HarmonicSet};
use imc_core::sim::ControllerHold;
use imc_core::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    pub plant: PlantConfig,
    pub design: DesignConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    /// Ascending coefficients `a₀..a_α`.
    pub numerator: Vec<f64>,
    /// Ascending coefficients `b₀..b_β`.
    pub denominator: Vec<f64>,
    pub tau_s: f64,
    /// Mirror right-half-plane denominator roots into the left half-plane
    /// (keeps `|G(jω)|`).
    #[serde(default)]
    pub reflect_unstable_poles: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoKeyword {
    #[serde(rename = "auto")]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AuxPoles {
    Auto(AutoKeyword),
    /// `[re, im]` pairs.
    Explicit(Vec<[f64; 2]>),
}

impl Default for AuxPoles {
    fn default() -> Self {
        AuxPoles::Auto(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_rad_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_s: Option<f64>,
    pub harmonics: usize,
    pub relative_degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub r_weight: f64,
    #[serde(default)]
    pub aux_poles: AuxPoles,
    /// Overrides the smallest admissible controller delay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_s: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub step: f64,
}

/// `G_s = G_m·num/den` with an optional extra delay on the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchConfig {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    #[serde(default)]
    pub extra_delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_sweep_band")]
    pub sweep_band_hz: [f64; 2],
    #[serde(default = "default_sweep_points")]
    pub sweep_points: usize,
    #[serde(default = "default_hinf_band")]
    pub hinf_band_hz: [f64; 2],
    #[serde(default = "default_rel_tol")]
    pub hinf_rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<MismatchConfig>,
}

fn default_sweep_band() -> [f64; 2] {
    [0.1, 100.0]
}
fn default_sweep_points() -> usize {
    2000
}
fn default_hinf_band() -> [f64; 2] {
    [0.01, 200.0]
}
fn default_rel_tol() -> f64 {
    1e-3
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sweep_band_hz: default_sweep_band(),
            sweep_points: default_sweep_points(),
            hinf_band_hz: default_hinf_band(),
            hinf_rel_tol: default_rel_tol(),
            region: None,
            mismatch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum SignalConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Sine {
        omega_rad_s: f64,
        amplitude: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    Sawtooth {
        period_s: f64,
        amplitude: f64,
    },
    /// Cosines at the designed harmonics; amplitudes default to `1/l`.
    Harmonics {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitudes: Option<Vec<f64>>,
    },
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_h")]
    pub h_s: f64,
    pub t_end_s: f64,
    pub t_on_s: f64,
    pub disturbance: SignalConfig,
    #[serde(default)]
    pub reference: SignalConfig,
    #[serde(default = "default_hold")]
    pub controller_hold: ControllerHold,
    #[serde(default = "default_true")]
    pub hold_compensation: bool,
    /// Simulate against the mismatched system of the analysis section.
    #[serde(default)]
    pub use_mismatch: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_window_s: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_window_s: Option<[f64; 2]>,
}

fn default_h() -> f64 {
    1e-3
}
fn default_hold() -> ControllerHold {
    ControllerHold::DelayedTriangle
}
fn default_true() -> bool {
    true
}

impl ToolkitConfig {
    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidSpec(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Cross-field checks that do not need any synthesis.
    pub fn validate(&self) -> Result<()> {
        let plant = self.plant()?;
        self.base_rad_s()?;
        let (alpha, beta) = (plant.alpha(), plant.beta());
        if self.design.relative_degree + alpha < beta {
            return Err(Error::CausalityViolation {
                filter: self.design.relative_degree,
                plant: beta - alpha,
            });
        }
        if self.design.q_scale.is_some() && self.design.q_matrix.is_some() {
            return Err(Error::InvalidSpec("give either q_scale or q_matrix, not both".into()));
        }
        if let Some(a) = &self.analysis {
            for band in [a.sweep_band_hz, a.hinf_band_hz] {
                if !(band[0] > 0.0) || !(band[1] > band[0]) {
                    return Err(Error::InvalidSpec(format!("frequency band {band:?} must satisfy 0 < lo < hi")));
                }
            }
            if let Some(r) = &a.region {
                SpectrumRegion::new((r.re[0], r.re[1]), (r.im[0], r.im[1]), r.step)?;
            }
        }
        if let Some(s) = &self.simulation {
            if !(s.h_s > 0.0) || !(s.t_end_s > 0.0) || !(s.t_on_s >= 0.0) || s.t_on_s > s.t_end_s {
                return Err(Error::InvalidSpec("simulation needs h_s > 0 and 0 <= t_on_s <= t_end_s".into()));
            }
            if s.use_mismatch && self.analysis.as_ref().and_then(|a| a.mismatch.as_ref()).is_none() {
                return Err(Error::InvalidSpec("use_mismatch needs analysis.mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<DelayedRationalPlant> {
        let p = DelayedRationalPlant::new(
            self.plant.numerator.clone(),
            self.plant.denominator.clone(),
            self.plant.tau_s,
        )?;
        if self.plant.reflect_unstable_poles {
            reflect_unstable_poles(&p)
        } else {
            Ok(p)
        }
    }

    pub fn base_rad_s(&self) -> Result<f64> {
        match (self.design.base_rad_s, self.design.period_s) {
            (Some(w), None) if w > 0.0 && w.is_finite() => Ok(w),
            (None, Some(t)) if t > 0.0 && t.is_finite() => Ok(2.0 * PI / t),
            _ => Err(Error::InvalidSpec(
                "design needs exactly one positive base_rad_s or period_s".into(),
            )),
        }
    }

    pub fn harmonic_set(&self) -> Result<HarmonicSet> {
        harmonic_set(self.base_rad_s()?, self.design.harmonics)
    }

    pub fn filter_spec(&self) -> Result<FilterDesignSpec> {
        let h = self.harmonic_set()?;
        let n_r = 2 * h.len() + 1;
        let q = match (&self.design.q_matrix, self.design.q_scale) {
            (Some(rows), _) => Matrix::from_rows(rows)?,
            (None, scale) => Matrix::identity(n_r).scale(scale.unwrap_or(1.0)),
        };
        let aux = match &self.design.aux_poles {
            AuxPoles::Auto(_) => default_aux_poles(&h, self.design.relative_degree),
            AuxPoles::Explicit(list) => list.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
        };
        FilterDesignSpec::new(h, self.design.relative_degree, q, self.design.r_weight, aux)
    }

    pub fn analysis(&self) -> AnalysisConfig {
        self.analysis.clone().unwrap_or_default()
    }

    /// Mismatch built around the controller's model.
    pub fn mismatch(&self, model: &DelayedRationalPlant) -> Result<Option<MismatchSpec>> {
        let Some(m) = self.analysis.as_ref().and_then(|a| a.mismatch.as_ref()) else {
            return Ok(None);
        };
        let mut system = model.cascade(&m.numerator, &m.denominator)?;
        system.tau_s += m.extra_delay_s;
        Ok(Some(MismatchSpec::new(system, model.clone())?))
    }

    /// Configured region, or `Re ∈ [−60, 5]`, `Im ∈ [0, 2.5·ω_k]` at step 0.05.
    pub fn region(&self, h: &HarmonicSet) -> Result<SpectrumRegion> {
        match self.analysis.as_ref().and_then(|a| a.region.as_ref()) {
            Some(r) => SpectrumRegion::new((r.re[0], r.re[1]), (r.im[0], r.im[1]), r.step),
            None => SpectrumRegion::new((-60.0, 5.0), (0.0, 2.5 * h.max_frequency().max(1.0)), 0.05),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "plant": {"numerator": [1.0], "denominator": [1.0, 1.0], "tau_s": 0.1},
        "design": {"base_rad_s": 1.0, "harmonics": 1, "relative_degree": 1}
    }"#;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = ToolkitConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.design.aux_poles, AuxPoles::default());
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        let again = ToolkitConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn causality_checked_at_load() {
        let text = MINIMAL.replace(r#""denominator": [1.0, 1.0]"#, r#""denominator": [1.0, 1.0, 1.0]"#);
        assert!(matches!(
            ToolkitConfig::from_json(&text),
            Err(Error::CausalityViolation { filter: 1, plant: 2 })
        ));
    }

    #[test]
    fn rejects_unknown_keys_and_double_base() {
        let text = MINIMAL.replace(r#""tau_s": 0.1"#, r#""tau_s": 0.1, "tau": 3"#);
        assert!(ToolkitConfig::from_json(&text).is_err());
        let text = MINIMAL.replace(r#""base_rad_s": 1.0"#, r#""base_rad_s": 1.0, "period_s": 6.0"#);
        assert!(ToolkitConfig::from_json(&text).is_err());
    }
}
