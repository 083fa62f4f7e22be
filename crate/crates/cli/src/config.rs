//! Run configuration: one JSON document describing the experiment; flags
//! only select the subcommand, config path and output directory.

use std::path::{Path, PathBuf};

use filmreduce_core::elasticity::MaterialParams;
use filmreduce_core::error::Error;
use filmreduce_core::expansion::BoundaryCondition;
use filmreduce_core::geometry::Chart;
use filmreduce_core::harness::HSchedule;
use filmreduce_core::solver::SolveOptions;
use filmreduce_core::tensor3::QuadraticForm3;
use nalgebra::Matrix3;
use serde::Deserialize;

/// Which closed-form specialization the energy commands report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Printed,
    Derived,
}

impl Variant {
    pub fn to_energy_variant(self) -> filmreduce_core::limit_energy::EnergyVariant {
        match self {
            Variant::Printed => filmreduce_core::limit_energy::EnergyVariant::AsPrinted,
            Variant::Derived => filmreduce_core::limit_energy::EnergyVariant::DerivedFromGeneral,
        }
    }
}

/// Built-in state selector for the energy/cascade/solve commands.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Token(String),
    Random {
        kind: String,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
}

fn default_amplitude() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    chart: Option<serde_json::Value>,
    #[serde(default)]
    material: Option<serde_json::Value>,
    #[serde(default)]
    qform: Option<serde_json::Value>,
    /// Boundary matrix, nine numbers row-major.
    #[serde(default)]
    boundary: Option<[f64; 9]>,
    #[serde(default)]
    grid: Option<GridSpec>,
    #[serde(default)]
    schedule: Option<HSchedule>,
    #[serde(default)]
    solver: Option<SolveOptions>,
    #[serde(default)]
    variant: Option<Variant>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    state: Option<StateSpec>,
    /// Constraint tolerance for the cascade report.
    #[serde(default)]
    tolerance: Option<f64>,
    /// Sample count for the crosscheck report.
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    out_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    n1: usize,
    n2: usize,
    #[serde(default = "default_n3")]
    n3: usize,
}

fn default_n3() -> usize {
    9
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub chart: Chart,
    pub material: MaterialParams,
    pub qform: QuadraticForm3,
    pub boundary: BoundaryCondition,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub schedule: HSchedule,
    pub solver: SolveOptions,
    pub variant: Variant,
    pub seed: u64,
    pub state: StateSpec,
    pub tolerance: f64,
    pub samples: usize,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigInvalid {
            key: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid {
            key: "<document>".to_string(),
            message: e.to_string(),
        })?;
        let chart = match raw.chart {
            Some(v) => Chart::from_spec(&v)?,
            None => Chart::from_spec(&serde_json::json!({"kind": "planar"}))?,
        };
        let material = match raw.material {
            Some(v) => MaterialParams::from_spec(&v)?,
            None => MaterialParams::default(),
        };
        let qform = match raw.qform {
            Some(v) => QuadraticForm3::from_spec(&v)?,
            None => QuadraticForm3::frobenius(),
        };
        let boundary = match raw.boundary {
            Some(rows) => BoundaryCondition::new(Matrix3::from_row_slice(&rows))?,
            None => BoundaryCondition::identity(),
        };
        let (n1, n2, n3) = match raw.grid {
            Some(g) => (g.n1, g.n2, g.n3),
            None => (17, 17, 9),
        };
        if n1 < filmreduce_core::grid::MIN_NODES
            || n2 < filmreduce_core::grid::MIN_NODES
            || n3 < filmreduce_core::grid::MIN_NODES
        {
            return Err(Error::ConfigInvalid {
                key: "grid".to_string(),
                message: format!(
                    "need at least {} nodes per axis",
                    filmreduce_core::grid::MIN_NODES
                ),
            });
        }
        let schedule = raw.schedule.unwrap_or_default();
        schedule.validate()?;
        let solver = raw.solver.unwrap_or_default();
        solver.validate()?;
        let state = raw
            .state
            .unwrap_or(StateSpec::Token("identity".to_string()));
        if let StateSpec::Token(t) = &state {
            if t != "identity" {
                return Err(Error::ConfigInvalid {
                    key: "state".to_string(),
                    message: format!(
                        "unknown state token '{t}' (use \"identity\" or {{\"kind\":\"random\"}})"
                    ),
                });
            }
        }
        if let StateSpec::Random { kind, amplitude } = &state {
            if kind != "random" {
                return Err(Error::ConfigInvalid {
                    key: "state.kind".to_string(),
                    message: format!("unknown state kind '{kind}'"),
                });
            }
            if !(*amplitude > 0.0) {
                return Err(Error::ConfigInvalid {
                    key: "state.amplitude".to_string(),
                    message: "amplitude must be > 0".to_string(),
                });
            }
        }
        Ok(RunConfig {
            chart,
            material,
            qform,
            boundary,
            n1,
            n2,
            n3,
            schedule,
            solver,
            variant: raw.variant.unwrap_or(Variant::Printed),
            seed: raw.seed.unwrap_or(42),
            state,
            tolerance: raw.tolerance.unwrap_or(1e-10),
            samples: raw.samples.unwrap_or(50),
            out_dir: PathBuf::from(raw.out_dir.unwrap_or_else(|| "out".to_string())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_filled() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.n1, 17);
        assert_eq!(cfg.variant, Variant::Printed);
        assert_eq!(cfg.qform, QuadraticForm3::frobenius());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"sheduler": {}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sheduler"), "{msg}");
    }

    #[test]
    fn nested_values_parse() {
        let cfg = RunConfig::from_json(
            r#"{
                "chart": {"kind": "cylinder", "radius": 2.0},
                "material": {"lambda": 1.5, "mu": 0.5},
                "boundary": [1,0,0, 0,1,0, 0,0,2],
                "grid": {"n1": 9, "n2": 9, "n3": 5},
                "schedule": {"h0": 0.25, "rho": 0.5, "count": 4},
                "variant": "derived",
                "state": {"kind": "random", "amplitude": 0.1},
                "seed": 7
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.material.lambda, 1.5);
        assert_eq!(cfg.variant, Variant::Derived);
        assert_eq!(cfg.boundary.a_tilde[(2, 2)], 2.0);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn invalid_nested_values_name_the_key() {
        assert!(RunConfig::from_json(r#"{"state": "perturbation"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"material": {"lambda": -1.0}}"#).is_err());
        assert!(
            RunConfig::from_json(r#"{"schedule": {"h0": 0.1, "rho": 2.0, "count": 5}}"#).is_err()
        );
    }
}
