//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//!
//! [signal]
//! scenario = "tones"          # or an explicit [[signal.modes]] list
//! sample_count = 1024
//! snr_db = 10.0               # inf for a clean signal
//! seed = 1
//!
//! [pipeline]
//! method = "cad-spline"
//! sigma = 0.02
//!
//! [sweep]
//! methods = ["cad", "cad-spline"]
//! sigma_min = 0.01
//! sigma_max = 0.05
//! sigma_points = 17
//! realizations = 10
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pipeline::{Method, PipelineConfig, SweepSpec};
use crate::refine::RefineConfig;
use crate::signalgen::{ModeSpec, Scenario, SignalSpec, DEFAULT_SAMPLE_COUNT};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    #[serde(default = "one")]
    pub amplitude: f64,
    /// IF polynomial in `t ∈ [0, 1]`, constant term first, Hz.
    pub if_coeffs: Vec<f64>,
    #[serde(default)]
    pub phase0: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub scenario: Option<String>,
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
    #[serde(default = "default_samples")]
    pub sample_count: usize,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLE_COUNT
}

fn default_snr() -> f64 {
    f64::INFINITY
}

fn default_seed() -> u64 {
    1
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            scenario: Some(Scenario::Tones.name().into()),
            modes: Vec::new(),
            sample_count: DEFAULT_SAMPLE_COUNT,
            snr_db: f64::INFINITY,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub method: String,
    pub sigma: f64,
    pub bins: usize,
    pub m0: Option<usize>,
    pub order_t: Option<usize>,
    pub cadzow_stop: f64,
    pub cadzow_max_iters: usize,
    pub cells: usize,
    pub penalty: f64,
    pub outlier_c: f64,
    pub inflection_width: usize,
    pub boundary_margin: Option<usize>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            method: p.method.name().into(),
            sigma: p.sigma,
            bins: p.bins,
            m0: p.m0,
            order_t: p.order_t,
            cadzow_stop: p.cadzow_stop,
            cadzow_max_iters: p.cadzow_max_iters,
            cells: p.refine.cells,
            penalty: p.refine.penalty,
            outlier_c: p.refine.outlier_c,
            inflection_width: p.refine.inflection_width,
            boundary_margin: p.boundary_margin,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub methods: Vec<String>,
    /// Explicit grid; overrides the min/max/points triple.
    pub sigmas: Option<Vec<f64>>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_points: usize,
    pub realizations: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            sigmas: None,
            sigma_min: 0.01,
            sigma_max: 0.05,
            sigma_points: 17,
            realizations: 10,
        }
    }
}

impl SweepSection {
    pub fn sigma_grid(&self) -> Result<Vec<f64>> {
        if let Some(s) = &self.sigmas {
            if s.is_empty() {
                return Err(Error::Config("sweep.sigmas is empty".into()));
            }
            return Ok(s.clone());
        }
        if self.sigma_points == 0 || !(self.sigma_min > 0.0) || self.sigma_max < self.sigma_min {
            return Err(Error::Config(format!(
                "sigma grid [{}, {}] with {} points is invalid",
                self.sigma_min, self.sigma_max, self.sigma_points
            )));
        }
        if self.sigma_points == 1 {
            return Ok(vec![self.sigma_min]);
        }
        let step = (self.sigma_max - self.sigma_min) / (self.sigma_points - 1) as f64;
        Ok((0..self.sigma_points).map(|i| self.sigma_min + step * i as f64).collect())
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn signal_spec(&self) -> Result<SignalSpec> {
        let s = &self.signal;
        let modes = match (&s.scenario, s.modes.is_empty()) {
            (Some(_), false) => {
                return Err(Error::Config("give either signal.scenario or signal.modes, not both".into()))
            }
            (Some(name), true) => {
                let sc = Scenario::from_name(name)
                    .ok_or_else(|| Error::Config(format!("unknown scenario {name:?}")))?;
                sc.if_coefficients()
                    .iter()
                    .map(|c| ModeSpec::polynomial(1.0, c, 0.0))
                    .collect()
            }
            (None, true) => return Err(Error::Config("signal.modes is empty".into())),
            (None, false) => s
                .modes
                .iter()
                .map(|m| {
                    if m.if_coeffs.is_empty() {
                        return Err(Error::Config("mode if_coeffs is empty".into()));
                    }
                    Ok(ModeSpec::polynomial(m.amplitude, &m.if_coeffs, m.phase0))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let spec = SignalSpec::new(modes, s.sample_count);
        spec.validate()?;
        Ok(spec)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let p = &self.pipeline;
        Ok(PipelineConfig {
            method: Method::from_name(&p.method)?,
            sigma: p.sigma,
            bins: p.bins,
            m0: p.m0,
            order_t: p.order_t,
            cadzow_stop: p.cadzow_stop,
            cadzow_max_iters: p.cadzow_max_iters,
            refine: RefineConfig {
                cells: p.cells,
                penalty: p.penalty,
                outlier_c: p.outlier_c,
                inflection_width: p.inflection_width,
            },
            boundary_margin: p.boundary_margin,
        })
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let methods = self
            .sweep
            .methods
            .iter()
            .map(|m| Method::from_name(m))
            .collect::<Result<Vec<_>>>()?;
        let spec = SweepSpec {
            methods,
            sigmas: self.sweep.sigma_grid()?,
            snr_db: self.signal.snr_db,
            realizations: self.sweep.realizations,
            seed: self.signal.seed,
            base: self.pipeline_config()?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = Config::parse("schema_version = 1").unwrap();
        assert_eq!(c.pipeline_config().unwrap(), PipelineConfig::default());
        assert_eq!(c.signal_spec().unwrap().mode_count(), 2);
        let grid = c.sweep.sigma_grid().unwrap();
        assert_eq!(grid.len(), 17);
        assert!((grid[16] - 0.05).abs() < 1e-15);
        assert_eq!(c.signal.snr_db, f64::INFINITY);
    }

    #[test]
    fn explicit_modes_and_inf_snr() {
        let text = r#"
schema_version = 1
[signal]
sample_count = 512
snr_db = inf
[[signal.modes]]
if_coeffs = [100.0, 20.0]
[[signal.modes]]
amplitude = 0.5
if_coeffs = [150.0]
[pipeline]
method = "cad-tlsa"
sigma = 0.03
"#;
        let c = Config::parse(text).unwrap();
        let spec = c.signal_spec().unwrap();
        assert_eq!(spec.sample_count, 512);
        assert!((spec.modes[0].inst_freq(0.5) - 110.0).abs() < 1e-12);
        assert_eq!(spec.modes[1].amplitude(0.3), 0.5);
        assert_eq!(c.pipeline_config().unwrap().method, Method::CadTlsa);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("schema_version = 2").unwrap_err().is_config());
        assert!(Config::parse("").is_err());
        assert!(Config::parse("schema_version = 1\nbogus = 3").is_err());
        let c = Config::parse("schema_version = 1\n[pipeline]\nmethod = \"prony\"").unwrap();
        assert!(c.pipeline_config().unwrap_err().is_config());
        let c = Config::parse("schema_version = 1\n[signal]\nscenario = \"nope\"").unwrap();
        assert!(c.signal_spec().is_err());
        let c = Config::parse("schema_version = 1\n[signal]\nscenario = \"tones\"\n[[signal.modes]]\nif_coeffs = [1.0]").unwrap();
        assert!(c.signal_spec().is_err());
    }
}
