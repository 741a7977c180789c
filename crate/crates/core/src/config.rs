//! Run configuration files (TOML, or JSON when the file ends in `.json`).
//!
//! ```toml
//! breakpoints = [1.0, 2.0]
//! slopes = [1.0, 2.0, 3.0]
//! shape = "linear"            # linear | cubic | polynomial
//! # coefficients = [0, 0, 0, 1]   # h' coefficients, low to high (polynomial only)
//! strict_mode = true
//!
//! [run]
//! r_min = 0.25
//! r_max = 4.0
//! r_count = 76
//! r_spacing = "linear"        # linear | log
//! epsilons = [0.005, 0.01, 0.02]
//! ```
//!
//! A `[harness]` table (`kind = "van_der_pol"` or `kind = "lienard"` with `damping`)
//! replaces the piecewise system.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{radius_grid, ReportSettings, Spacing};
use crate::error::{Error, Result};
use crate::flow::IntegrationSettings;
use crate::melnikov::DEFAULT_QUAD_TOL;
use crate::model::{LienardHarness, PerturbedSystem, ShapeFunction, ZonePartition};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    breakpoints: Option<Vec<f64>>,
    slopes: Option<Vec<f64>>,
    shape: Option<String>,
    coefficients: Option<Vec<f64>>,
    strict_mode: Option<bool>,
    harness: Option<RawHarness>,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarness {
    kind: String,
    damping: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    r_min: Option<f64>,
    r_max: Option<f64>,
    r_count: Option<usize>,
    r_spacing: Option<Spacing>,
    epsilons: Option<Vec<f64>>,
    fit_epsilons: Option<Vec<f64>>,
    fit_radii: Option<Vec<f64>>,
    tol: Option<f64>,
    seed: Option<u64>,
    jobs: Option<usize>,
    rtol: Option<f64>,
    atol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    Family(PerturbedSystem),
    Harness(LienardHarness),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            r_min: 0.25,
            r_max: 4.0,
            count: 76,
            spacing: Spacing::Linear,
        }
    }
}

impl GridSpec {
    pub fn radii(&self) -> Result<Vec<f64>> {
        radius_grid(self.r_min, self.r_max, self.count, self.spacing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub grid: GridSpec,
    pub epsilons: Vec<f64>,
    pub fit_epsilons: Vec<f64>,
    pub fit_radii: Vec<f64>,
    pub tol: f64,
    pub seed: u64,
    pub jobs: usize,
    pub integration: IntegrationSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemSpec::Family(PerturbedSystem::example()),
            grid: GridSpec::default(),
            epsilons: vec![0.005, 0.01, 0.02],
            fit_epsilons: vec![0.02, 0.01, 0.005, 0.0025],
            fit_radii: vec![1.5],
            tol: DEFAULT_QUAD_TOL,
            seed: 0,
            jobs: 1,
            integration: IntegrationSettings::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::field(field, format!("must be positive and finite, got {v}")))
    }
}

fn positive_list(field: &str, v: Vec<f64>) -> Result<Vec<f64>> {
    for &x in &v {
        positive(field, x)?;
    }
    Ok(v)
}

fn build_system(raw: &RawConfig) -> Result<SystemSpec> {
    let piecewise = raw.breakpoints.is_some() || raw.slopes.is_some() || raw.shape.is_some();
    if let Some(h) = &raw.harness {
        if piecewise {
            return Err(Error::field("harness", "cannot be combined with breakpoints/slopes/shape"));
        }
        return match h.kind.as_str() {
            "van_der_pol" => {
                if h.damping.is_some() {
                    return Err(Error::field("harness.damping", "not used by kind = \"van_der_pol\""));
                }
                Ok(SystemSpec::Harness(LienardHarness::van_der_pol()))
            }
            "lienard" => {
                let damping = h
                    .damping
                    .clone()
                    .ok_or_else(|| Error::field("harness.damping", "required for kind = \"lienard\""))?;
                if damping.is_empty() || damping.iter().any(|c| !c.is_finite()) {
                    return Err(Error::field("harness.damping", "must be a nonempty list of finite numbers"));
                }
                Ok(SystemSpec::Harness(LienardHarness { damping }))
            }
            other => Err(Error::field(
                "harness.kind",
                format!("expected \"van_der_pol\" or \"lienard\", got \"{other}\""),
            )),
        };
    }
    let breakpoints = raw
        .breakpoints
        .clone()
        .ok_or_else(|| Error::field("breakpoints", "missing"))?;
    let slopes = raw.slopes.clone().ok_or_else(|| Error::field("slopes", "missing"))?;
    let partition = ZonePartition::with_mode(breakpoints, slopes, raw.strict_mode.unwrap_or(true))?;
    let shape_name = raw.shape.as_deref().unwrap_or("linear");
    if shape_name != "polynomial" && raw.coefficients.is_some() {
        return Err(Error::field("coefficients", "only allowed with shape = \"polynomial\""));
    }
    let shape = match shape_name {
        "linear" => ShapeFunction::Linear,
        "cubic" => ShapeFunction::Cubic,
        "polynomial" => {
            let c = raw
                .coefficients
                .clone()
                .ok_or_else(|| Error::field("coefficients", "required for shape = \"polynomial\""))?;
            ShapeFunction::polynomial(c).map_err(|e| Error::field("coefficients", e.to_string()))?
        }
        other => {
            return Err(Error::field(
                "shape",
                format!("expected linear, cubic or polynomial, got \"{other}\""),
            ))
        }
    };
    Ok(SystemSpec::Family(PerturbedSystem::new(partition, shape)))
}

impl RunConfig {
    /// Parses a configuration; `json` selects JSON over TOML.
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let raw: RawConfig = if json {
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?
        };
        let system = build_system(&raw)?;
        let d = RunConfig::default();
        let run = raw.run;
        let grid = GridSpec {
            r_min: positive("run.r_min", run.r_min.unwrap_or(d.grid.r_min))?,
            r_max: positive("run.r_max", run.r_max.unwrap_or(d.grid.r_max))?,
            count: run.r_count.unwrap_or(d.grid.count),
            spacing: run.r_spacing.unwrap_or(d.grid.spacing),
        };
        if grid.r_max <= grid.r_min {
            return Err(Error::field("run.r_max", "must exceed run.r_min"));
        }
        if grid.count < 2 {
            return Err(Error::field("run.r_count", "must be at least 2"));
        }
        let mut integration = d.integration;
        integration.rtol = positive("run.rtol", run.rtol.unwrap_or(integration.rtol))?;
        integration.atol = positive("run.atol", run.atol.unwrap_or(integration.atol))?;
        let jobs = run.jobs.unwrap_or(d.jobs);
        if jobs == 0 {
            return Err(Error::field("run.jobs", "must be at least 1"));
        }
        Ok(RunConfig {
            system,
            grid,
            epsilons: positive_list("run.epsilons", run.epsilons.unwrap_or(d.epsilons))?,
            fit_epsilons: positive_list("run.fit_epsilons", run.fit_epsilons.unwrap_or(d.fit_epsilons))?,
            fit_radii: positive_list("run.fit_radii", run.fit_radii.unwrap_or(d.fit_radii))?,
            tol: positive("run.tol", run.tol.unwrap_or(d.tol))?,
            seed: run.seed.unwrap_or(d.seed),
            jobs,
            integration,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json)
    }

    pub fn report_settings(&self) -> Result<ReportSettings> {
        Ok(ReportSettings {
            r_grid: self.grid.radii()?,
            epsilons: self.epsilons.clone(),
            fit_epsilons: self.fit_epsilons.clone(),
            fit_radii: self.fit_radii.clone(),
            quad_tol: self.tol,
            integration: self.integration,
            jobs: self.jobs,
            ..ReportSettings::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::InvalidField { field, .. } => field,
            other => panic!("expected field error, got {other:?}"),
        }
    }

    #[test]
    fn example_config() {
        let c = RunConfig::parse(
            "breakpoints = [1.0, 2.0]\nslopes = [1.0, 2.0, 3.0]\nshape = \"linear\"\n[run]\nr_count = 5\nepsilons = []\n",
            false,
        )
        .unwrap();
        assert_eq!(c.system, SystemSpec::Family(PerturbedSystem::example()));
        assert_eq!(c.grid.radii().unwrap().len(), 5);
        assert!(c.epsilons.is_empty());
        assert_eq!(c.fit_radii, vec![1.5]);
    }

    #[test]
    fn json_and_harness() {
        let c = RunConfig::parse(r#"{"harness": {"kind": "van_der_pol"}}"#, true).unwrap();
        assert_eq!(c.system, SystemSpec::Harness(LienardHarness::van_der_pol()));
        let c = RunConfig::parse("[harness]\nkind = \"lienard\"\ndamping = [1.0, 0.0, -1.0]\n", false).unwrap();
        assert_eq!(c.system, SystemSpec::Harness(LienardHarness::van_der_pol()));
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::parse("breakpoints = [1.0, 2.0]\nslopes = [3.0, 2.0, 1.0]\n", false).unwrap_err();
        assert_eq!(field_of(e), "slopes");
        assert!(RunConfig::parse("breakpoints = [1.0, 2.0]\nslopes = [3.0, 2.0, 1.0]\nstrict_mode = false\n", false).is_ok());
        let e = RunConfig::parse("breakpoints = [1.0]\nslopes = [1.0, 2.0]\nshape = \"quartic\"\n", false).unwrap_err();
        assert_eq!(field_of(e), "shape");
        let e = RunConfig::parse("breakpoints = [1.0]\nslopes = [1.0, 2.0]\nshape = \"polynomial\"\n", false).unwrap_err();
        assert_eq!(field_of(e), "coefficients");
        let e = RunConfig::parse("breakpoints = [1.0]\nslopes = [1.0, 2.0]\n[run]\ntol = -1.0\n", false).unwrap_err();
        assert_eq!(field_of(e), "run.tol");
        let e = RunConfig::parse("slopes = [1.0, 2.0]\n", false).unwrap_err();
        assert_eq!(field_of(e), "breakpoints");
        let e = RunConfig::parse("breakpoints = [1.0]\nslopes = [1.0, 2.0]\nbogus = 1\n", false).unwrap_err();
        assert!(e.to_string().contains("bogus"));
        assert!(RunConfig::load(Path::new("/nonexistent/config.toml")).unwrap_err().is_input_error());
    }
}
