//! Experiment configuration: one structured TOML file fully determines a
//! run's outputs for a given code version.

use equitransport::domain::{CostSpec, Geometry, Window};
use equitransport::randmeas::{adjust_quantum, SceneSpec, TargetSpec, WeightDist};
use equitransport::LatticePoint;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub scene: SceneConfig,
    pub cost: CostConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub sample: Option<SampleConfig>,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub mix: Option<MixConfig>,
    #[serde(default)]
    pub costcurve: Option<CostCurveConfig>,
    #[serde(default)]
    pub audit: Option<AuditConfig>,
    #[serde(default)]
    pub metric: Option<MetricConfig>,
    #[serde(default)]
    pub tessellate: Option<TessellateConfig>,
    #[serde(default)]
    pub mosaic: Option<MosaicConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    pub dimension: usize,
    pub seed: u64,
    /// Source density level as `[numerator, denominator]`.
    #[serde(default = "unit_level")]
    pub level: [u64; 2],
    pub target: TargetConfig,
}

fn unit_level() -> [u64; 2] {
    [1, 1]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetConfig {
    /// `poisson | binomial | compound_poisson | lattice | deterministic`
    pub kind: String,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub per_cell: Option<u32>,
    /// `exp1 | poisson1 | unit` for compound processes.
    #[serde(default)]
    pub weights: Option<String>,
    #[serde(default)]
    pub atoms: Option<Vec<DeterministicAtom>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeterministicAtom {
    pub pos: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostConfig {
    /// `euclidean | torus`
    #[serde(default = "euclidean")]
    pub geometry: String,
    #[serde(default)]
    pub torus_side: Option<f64>,
    pub p: f64,
    #[serde(default)]
    pub scale_table: Option<Vec<[f64; 2]>>,
}

fn euclidean() -> String {
    "euclidean".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    /// Grid cells per unit length.
    pub k: u32,
    /// Requested quanta per unit mass; adjusted upward when the density
    /// level is not representable.
    #[serde(default = "default_quantum")]
    pub quantum: u64,
}

fn default_quantum() -> u64 {
    equitransport::randmeas::DEFAULT_QUANTUM
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleConfig {
    pub origin: Vec<i32>,
    pub radius: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Explicit fundamental cells; overrides `origin`/`radius`.
    #[serde(default)]
    pub cells: Option<Vec<Vec<i32>>>,
    #[serde(default)]
    pub origin: Option<Vec<i32>>,
    #[serde(default)]
    pub radius: Option<u32>,
    /// Fixed source margin in cells; omitted = adaptive.
    #[serde(default)]
    pub margin: Option<u32>,
    /// `coupling | semi_source | semi_target` (default `semi_source`).
    #[serde(default)]
    pub mode: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixConfig {
    pub g: Vec<i32>,
    pub r: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostCurveConfig {
    pub r_min: u32,
    pub r_max: u32,
    pub n_seeds: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditConfig {
    pub origin: Vec<i32>,
    pub radius: u32,
    #[serde(default = "default_cycles")]
    pub n_cycles: u64,
    #[serde(default = "default_kmax")]
    pub k_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_chords")]
    pub n_chords: u64,
    #[serde(default = "default_chords")]
    pub n_rays: u64,
}

fn default_cycles() -> u64 {
    1000
}
fn default_kmax() -> usize {
    5
}
fn default_tol() -> f64 {
    1e-9
}
fn default_chords() -> u64 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricConfig {
    pub origin: Vec<i32>,
    pub radius: u32,
    pub n_seeds: u64,
    #[serde(default = "one")]
    pub per_cell: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TessellateConfig {
    /// Explicit fundamental cells; overrides `origin`/`radius`.
    #[serde(default)]
    pub cells: Option<Vec<Vec<i32>>>,
    #[serde(default)]
    pub origin: Option<Vec<i32>>,
    #[serde(default)]
    pub radius: Option<u32>,
    #[serde(default)]
    pub margin: Option<u32>,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default = "default_scale")]
    pub svg_scale: f64,
}

fn default_scale() -> f64 {
    64.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MosaicConfig {
    pub origin: Vec<i32>,
    pub radius: u32,
    #[serde(default = "one")]
    pub per_cell: u32,
    pub sigma: f64,
    pub steps: u32,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, String> {
        toml::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }

    pub fn scene_spec(&self) -> Result<SceneSpec, String> {
        let t = &self.scene.target;
        let target = match t.kind.as_str() {
            "poisson" => TargetSpec::Poisson {
                beta: t.beta.ok_or("scene.target.beta required for kind=poisson")?,
            },
            "binomial" => TargetSpec::Binomial {
                per_cell: t.per_cell.ok_or("scene.target.per_cell required for kind=binomial")?,
            },
            "compound_poisson" => TargetSpec::CompoundPoisson {
                beta: t.beta.ok_or("scene.target.beta required for kind=compound_poisson")?,
                weights: match t.weights.as_deref() {
                    Some("exp1") => WeightDist::Exp1,
                    Some("poisson1") => WeightDist::Poisson1,
                    Some("unit") | None => WeightDist::Unit,
                    Some(other) => {
                        return Err(format!("scene.target.weights: unknown distribution {other}"))
                    }
                },
            },
            "lattice" => TargetSpec::LatticeCenters,
            "deterministic" => TargetSpec::Deterministic {
                atoms: t
                    .atoms
                    .clone()
                    .ok_or("scene.target.atoms required for kind=deterministic")?
                    .into_iter()
                    .map(|a| (a.pos, a.weight))
                    .collect(),
            },
            other => return Err(format!("scene.target.kind: unknown kind {other}")),
        };
        Ok(SceneSpec {
            dimension: self.scene.dimension,
            level: (self.scene.level[0], self.scene.level[1]),
            target,
            seed: self.scene.seed,
        })
    }

    pub fn cost_spec(&self) -> Result<CostSpec, String> {
        let geometry = match self.cost.geometry.as_str() {
            "euclidean" => Geometry::Euclidean,
            "torus" => Geometry::Torus {
                side: self.cost.torus_side.ok_or("cost.torus_side required for torus")?,
            },
            other => return Err(format!("cost.geometry: unknown geometry {other}")),
        };
        let spec = CostSpec::power(geometry, self.cost.p)
            .map_err(|e| format!("cost.p: {e}"))?;
        match &self.cost.scale_table {
            None => Ok(spec),
            Some(table) => spec
                .with_table(table.iter().map(|&[r, v]| (r, v)).collect())
                .map_err(|e| format!("cost.scale_table: {e}")),
        }
    }

    pub fn lattice_point(&self, coords: &[i32]) -> Result<LatticePoint, String> {
        if coords.len() != self.scene.dimension {
            return Err(format!(
                "lattice point dimension {} does not match scene.dimension {}",
                coords.len(),
                self.scene.dimension
            ));
        }
        LatticePoint::new(coords).map_err(|e| e.to_string())
    }

    /// Structural findings: empty means the config is usable as-is.
    pub fn validate(&self) -> Vec<String> {
        let mut findings = Vec::new();
        if !(self.cost.p > 0.0) {
            findings.push(format!("cost.p: must be positive, got {}", self.cost.p));
        }
        if let Err(e) = self.scene_spec() {
            findings.push(e);
        }
        if let Err(e) = self.cost_spec() {
            findings.push(e);
        }
        if self.scene.dimension == 0 || self.scene.dimension > 3 {
            findings.push(format!(
                "scene.dimension: must be 1, 2 or 3, got {}",
                self.scene.dimension
            ));
        }
        if self.grid.k == 0 {
            findings.push("grid.k: must be at least 1".into());
        } else if self.scene.dimension >= 1 && self.scene.dimension <= 3 {
            let level = (self.scene.level[0], self.scene.level[1]);
            match adjust_quantum(self.grid.quantum, self.grid.k, self.scene.dimension, level) {
                Ok(actual) if actual != self.grid.quantum => findings.push(format!(
                    "grid.quantum: {} cannot represent level {}/{} on a k={} grid exactly; \
                     runs will use {} instead",
                    self.grid.quantum, level.0, level.1, self.grid.k, actual
                )),
                Ok(_) => {}
                Err(e) => findings.push(format!("grid.quantum: {e}")),
            }
        }
        if let (Some(side), Some(s)) = (self.cost.torus_side, &self.sample) {
            let w = Window::new(
                LatticePoint::new(&vec![0; self.scene.dimension.clamp(1, 3)]).unwrap(),
                s.radius,
            );
            let diam = w.side() as f64;
            if side < diam {
                findings.push(format!(
                    "cost.torus_side: {side} is smaller than the window diameter {diam}"
                ));
            }
        }
        findings
    }
}
