//! Experiment configuration: a strict TOML-subset schema with unknown-key
//! rejection, plus the advisory validator for the theorem hypotheses.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::energy::{smallness_max_lambda, smallness_satisfied, POINCARE_CONSTANT};
use crate::error::{Error, Result};
use crate::evolve::SchemeConfig;
use crate::grid::{StripGrid, YScheme};
use crate::wave::{WaveParams, DEFAULT_EPS_MAX};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WaveSection {
    pub s: f64,
    pub eps: f64,
    #[serde(default = "default_c_plus")]
    pub c_plus: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_c_plus() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub l_z: f64,
    pub nz: usize,
    pub lambda: f64,
    pub ny: usize,
    #[serde(default)]
    pub y_scheme: YSchemeTag,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "snake_case")]
pub enum YSchemeTag {
    #[default]
    Centered,
    Spectral,
}

impl From<YSchemeTag> for YScheme {
    fn from(t: YSchemeTag) -> Self {
        match t {
            YSchemeTag::Centered => YScheme::Centered,
            YSchemeTag::Spectral => YScheme::Spectral,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub adaptive_dt: bool,
}

fn default_theta() -> f64 {
    0.5
}

fn default_cfl() -> f64 {
    0.4
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationFamily {
    GaussianBump,
    YMode,
    CustomFile,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    pub family: PerturbationFamily,
    pub amplitude: f64,
    #[serde(default)]
    pub center_z: f64,
    #[serde(default = "default_sigma")]
    pub sigma_z: f64,
    /// Transversal mode index; 0 keeps the data planar.
    #[serde(default)]
    pub y_mode_k: usize,
    #[serde(default)]
    pub file: Option<String>,
}

fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum FormulationTag {
    Perturbation,
    PrimitiveNp,
    PrimitiveNc,
    AllThree,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub formulation: FormulationTag,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub keep_snapshots: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Amplitude,
    Eps,
    Lambda,
    Refinement,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub wave: WaveSection,
    pub grid: GridSection,
    #[serde(default)]
    pub scheme: Option<SchemeSection>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSection>,
    #[serde(default)]
    pub run: Option<RunSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn wave_params(&self) -> Result<WaveParams> {
        let p = WaveParams {
            s: self.wave.s,
            eps: self.wave.eps,
            c_plus: self.wave.c_plus,
        };
        p.validate(DEFAULT_EPS_MAX)?;
        Ok(p)
    }

    pub fn strip_grid(&self) -> Result<StripGrid> {
        Ok(
            StripGrid::new(self.grid.l_z, self.grid.nz, self.grid.lambda, self.grid.ny)?
                .with_y_scheme(self.grid.y_scheme.into()),
        )
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let s = self
            .scheme
            .as_ref()
            .ok_or_else(|| Error::Config("missing [scheme] section".into()))?;
        let cfg = SchemeConfig {
            dt: s.dt,
            t_end: s.t_end,
            theta: s.theta,
            cfl_safety: s.cfl_safety,
            snapshot_stride: s.snapshot_stride,
            adaptive_dt: s.adaptive_dt,
            ..SchemeConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hard validation plus the theorem-hypothesis advisories. Advisories are
    /// returned as warnings; `strict` turns them into errors.
    pub fn validate(&self, strict: bool) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        self.wave_params()?;
        self.strip_grid()?;
        if self.scheme.is_some() {
            self.scheme_config()?;
        }

        let s = self.wave.s;
        let lambda = self.grid.lambda;
        if !smallness_satisfied(s, lambda) {
            warnings.push(format!(
                "smallness advisory: s*lambda*C_p = {:.6} > 1/16 (C_p = 1/(2pi)); the stability theorem assumes s*lambda <= {:.6}",
                s * lambda * POINCARE_CONSTANT,
                smallness_max_lambda(s)
            ));
        }
        if let Some(p) = &self.perturbation {
            if p.amplitude < 0.0 || !p.amplitude.is_finite() {
                return Err(Error::Config(format!("amplitude = {}", p.amplitude)));
            }
            if p.family == PerturbationFamily::CustomFile && p.file.is_none() {
                return Err(Error::Config("custom_file family needs `file`".into()));
            }
            if !(p.sigma_z > 0.0) {
                return Err(Error::Config(format!("sigma_z = {}", p.sigma_z)));
            }
            if p.y_mode_k >= self.grid.ny / 2 {
                return Err(Error::Config(format!(
                    "y_mode_k = {} is not resolved by ny = {}",
                    p.y_mode_k, self.grid.ny
                )));
            }
            // support advisory: the gaussian envelope must die inside the buffer
            let grid = self.strip_grid()?;
            let edge = grid.l_z - grid.buffer_width();
            let dist = (edge - p.center_z.abs()).max(0.0);
            let tail = (-(dist / p.sigma_z).powi(2)).exp();
            if p.family != PerturbationFamily::CustomFile && tail > 1e-12 {
                warnings.push(format!(
                    "support advisory: envelope tail {tail:.3e} at the buffer edge exceeds 1e-12"
                ));
            }
        }
        if strict && !warnings.is_empty() {
            return Err(Error::Config(format!(
                "strict mode: {}",
                warnings.join("; ")
            )));
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[wave]
s = 1.0
eps = 0.05

[grid]
l_z = 20.0
nz = 256
lambda = 0.3
ny = 32

[scheme]
dt = 0.01
t_end = 1.0

[perturbation]
family = "gaussian_bump"
amplitude = 1e-3
sigma_z = 1.5

[run]
formulation = "perturbation"
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml_str(GOOD).unwrap();
        let warnings = cfg.validate(false).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(cfg.wave.c_plus, 1.0);
        assert_eq!(cfg.scheme.as_ref().unwrap().theta, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = GOOD.replace("amplitude = 1e-3", "amplitude = 1e-3\nampltiude = 2.0");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn smallness_advisory_and_strict_mode() {
        let cfg = ExperimentConfig::from_toml_str(&GOOD.replace("lambda = 0.3", "lambda = 0.6")).unwrap();
        let warnings = cfg.validate(false).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("smallness"));
        assert!(cfg.validate(true).is_err());
    }

    #[test]
    fn round_trip_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(GOOD).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unresolved_y_mode_rejected() {
        let bad = GOOD.replace("family = \"gaussian_bump\"", "family = \"y_mode\"\ny_mode_k = 16");
        let cfg = ExperimentConfig::from_toml_str(&bad).unwrap();
        assert!(cfg.validate(false).is_err());
    }
}
