//! Run configuration: file schema, per-problem defaults and resolution into
//! a fully materialized manifest.
//!
//! Config files are TOML (JSON is accepted as an alternative encoding). Only
//! `problem` is mandatory; everything else falls back to the problem's
//! defaults. The resolved form is embedded verbatim in every result record so
//! a run can be reproduced exactly.

use serde::{Deserialize, Serialize};

use crate::assembly::{CategoryWeights, RescaleMode};
use crate::basis::{Activation, PartitionOfUnity, PouKind};
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Domain, Exclusion};
use crate::problems::{self, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Weak,
    Strong,
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pipeline::Weak => write!(f, "weak"),
            Pipeline::Strong => write!(f, "strong"),
        }
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(Pipeline::Weak),
            "strong" => Ok(Pipeline::Strong),
            other => Err(Error::config(format!("unknown pipeline '{other}'"))),
        }
    }
}

/// Quadrature order selection: `"auto"` or explicit per-axis orders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuadratureOrder {
    Named(String),
    PerAxis(Vec<usize>),
}

impl Default for QuadratureOrder {
    fn default() -> Self {
        QuadratureOrder::Named("auto".into())
    }
}

/// Domain override: bounding box as per-axis `[lo, hi]` plus typed exclusion
/// records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub bounding: Vec<[f64; 2]>,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
}

impl DomainConfig {
    pub fn to_domain(&self) -> Result<Domain> {
        let lo = self.bounding.iter().map(|p| p[0]).collect();
        let hi = self.bounding.iter().map(|p| p[1]).collect();
        Ok(Domain::with_exclusions(AxisBox::new(lo, hi)?, self.exclusions.clone()))
    }

    pub fn from_domain(dom: &Domain) -> Self {
        Self {
            bounding: (0..dom.dim())
                .map(|a| [dom.bounding.lo[a], dom.bounding.hi[a]])
                .collect(),
            exclusions: dom.exclusions.clone(),
        }
    }
}

/// Sweep parameters (`sweep` section of a config file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub s_values: Vec<usize>,
    pub j_values: Vec<usize>,
    pub repeats: usize,
}

/// On-disk config shape: everything except the problem name is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: String,
    pub pipeline: Option<Pipeline>,
    pub subdomain_counts: Option<Vec<usize>>,
    pub features_per_subdomain: Option<usize>,
    pub test_counts: Option<Vec<usize>>,
    pub boundary_partitions: Option<Vec<usize>>,
    pub interior_partitions: Option<Vec<usize>>,
    pub interface_partitions: Option<Vec<usize>>,
    pub weight_range: Option<f64>,
    pub activation: Option<Activation>,
    pub pou: Option<PouKind>,
    pub alpha: Option<f64>,
    pub quadrature_order: Option<QuadratureOrder>,
    pub rcond: Option<f64>,
    pub rescale: Option<RescaleMode>,
    pub weak_weight: Option<f64>,
    pub boundary_weight: Option<f64>,
    pub interface_weight: Option<f64>,
    pub seed: Option<u64>,
    pub metric_grid: Option<Vec<usize>>,
    pub output: Option<String>,
    pub domain: Option<DomainConfig>,
    pub sweep: Option<SweepConfig>,
}

impl ConfigFile {
    pub fn with_problem(problem: &str) -> Self {
        Self { problem: problem.to_string(), ..Default::default() }
    }

    /// Parses TOML, falling back to JSON.
    pub fn parse(text: &str) -> Result<Self> {
        match toml::from_str::<ConfigFile>(text) {
            Ok(cfg) => Ok(cfg),
            Err(toml_err) => match serde_json::from_str::<ConfigFile>(text) {
                Ok(cfg) => Ok(cfg),
                Err(_) => Err(Error::config(format!("config parse failed: {toml_err}"))),
            },
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolves the file against the problem defaults, producing the problem
    /// spec (with any domain override applied) and the full manifest.
    pub fn resolve(&self) -> Result<(ProblemSpec, ResolvedConfig)> {
        let mut problem = match self.problem.as_str() {
            "manufactured2d" => problems::manufactured_poisson2d(),
            name => problems::builtin(name).map_err(|e| Error::config(e.to_string()))?,
        };
        if let Some(dc) = &self.domain {
            let dom = dc.to_domain().map_err(|e| Error::config(e.to_string()))?;
            if dom.dim() != problem.dim() {
                return Err(Error::config("domain override has wrong dimension"));
            }
            problem.domain = dom;
        }
        let d = problem.dim();
        let defaults = problem.defaults.clone();
        let pipeline = self.pipeline.unwrap_or(Pipeline::Weak);
        let pou = self.pou.unwrap_or(PouKind::PsiA);
        let alpha = self.alpha.unwrap_or(0.05);
        let test_counts = self.test_counts.clone().unwrap_or(defaults.test_counts);
        let boundary_partitions =
            self.boundary_partitions.clone().unwrap_or(defaults.boundary_partitions);
        let quadrature_orders = match self.quadrature_order.clone().unwrap_or_default() {
            QuadratureOrder::Named(name) if name == "auto" => {
                // 3 nodes per sine half-wave plus margin, with a floor that
                // resolves the test-function window transitions (cheap in 2D,
                // relaxed in 3D where the node count grows cubically)
                let window_floor = if d <= 2 { 200 } else { 100 };
                test_counts.iter().map(|&k| (3 * k + 10).max(window_floor).max(40)).collect()
            }
            QuadratureOrder::Named(name) => {
                return Err(Error::config(format!("unknown quadrature order '{name}'")))
            }
            QuadratureOrder::PerAxis(orders) => orders,
        };
        let resolved = ResolvedConfig {
            problem: problem.name.clone(),
            pipeline,
            domain: DomainConfig::from_domain(&problem.domain),
            subdomain_counts: self.subdomain_counts.clone().unwrap_or(defaults.subdomain_counts),
            features_per_subdomain: self
                .features_per_subdomain
                .unwrap_or(defaults.features_per_subdomain),
            test_counts,
            boundary_partitions: boundary_partitions.clone(),
            interior_partitions: self
                .interior_partitions
                .clone()
                .unwrap_or_else(|| boundary_partitions.clone()),
            interface_partitions: self
                .interface_partitions
                .clone()
                .unwrap_or(boundary_partitions),
            weight_range: self.weight_range.unwrap_or(1.0),
            activation: self.activation.unwrap_or(Activation::Tanh),
            pou,
            alpha,
            quadrature_orders,
            rcond: self.rcond.unwrap_or(1e-12),
            rescale: self.rescale.unwrap_or(RescaleMode::MaxAbs),
            weights: CategoryWeights {
                weak: self.weak_weight.unwrap_or(1.0),
                boundary: self.boundary_weight.unwrap_or(1.0),
                interface: self.interface_weight.unwrap_or(1.0),
            },
            seed: self.seed.unwrap_or(0),
            metric_grid: self.metric_grid.clone().unwrap_or_else(|| default_metric_grid(d)),
            sweep_axis: defaults.sweep_axis,
        };
        resolved.validate(d)?;
        Ok((problem, resolved))
    }
}

pub fn default_metric_grid(d: usize) -> Vec<usize> {
    match d {
        1 => vec![1001],
        2 => vec![201, 201],
        _ => vec![101, 101, 101],
    }
}

/// Fully materialized configuration; serialized into every result record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub problem: String,
    pub pipeline: Pipeline,
    pub domain: DomainConfig,
    pub subdomain_counts: Vec<usize>,
    pub features_per_subdomain: usize,
    pub test_counts: Vec<usize>,
    pub boundary_partitions: Vec<usize>,
    pub interior_partitions: Vec<usize>,
    pub interface_partitions: Vec<usize>,
    pub weight_range: f64,
    pub activation: Activation,
    pub pou: PouKind,
    pub alpha: f64,
    pub quadrature_orders: Vec<usize>,
    pub rcond: f64,
    pub rescale: RescaleMode,
    pub weights: CategoryWeights,
    pub seed: u64,
    pub metric_grid: Vec<usize>,
    pub sweep_axis: usize,
}

impl ResolvedConfig {
    pub fn partition_of_unity(&self) -> PartitionOfUnity {
        PartitionOfUnity { kind: self.pou, alpha: self.alpha }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let per_axis = [
            ("subdomain_counts", &self.subdomain_counts),
            ("test_counts", &self.test_counts),
            ("boundary_partitions", &self.boundary_partitions),
            ("interior_partitions", &self.interior_partitions),
            ("interface_partitions", &self.interface_partitions),
            ("quadrature_orders", &self.quadrature_orders),
        ];
        for (name, v) in per_axis {
            if v.len() != d {
                return Err(Error::config(format!("{name} must have {d} entries")));
            }
            if v.iter().any(|&c| c == 0) {
                return Err(Error::config(format!("{name} entries must be positive")));
            }
        }
        if self.metric_grid.len() != d || self.metric_grid.iter().any(|&g| g < 2) {
            return Err(Error::config("metric_grid needs at least 2 points per axis"));
        }
        if self.features_per_subdomain == 0 {
            return Err(Error::config("features_per_subdomain must be positive"));
        }
        if !(self.weight_range > 0.0) {
            return Err(Error::config("weight_range must be positive"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::config("alpha must be positive"));
        }
        if !(self.rcond >= 0.0) {
            return Err(Error::config("rcond must be nonnegative"));
        }
        if self.pipeline == Pipeline::Weak && self.pou != PouKind::PsiA {
            return Err(Error::config(
                "weak pipeline requires pou = psi_a (non-overlapping supports)",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_resolves_to_table_defaults() {
        let cfg = ConfigFile::parse("problem = \"helmholtz2d_regular\"").unwrap();
        let (_, resolved) = cfg.resolve().unwrap();
        assert_eq!(resolved.subdomain_counts, vec![4, 1]);
        assert_eq!(resolved.features_per_subdomain, 40);
        assert_eq!(resolved.test_counts, vec![25, 25]);
        assert_eq!(resolved.boundary_partitions, vec![50, 100]);
        assert_eq!(resolved.quadrature_orders, vec![200, 200]);
        assert_eq!(resolved.pipeline, Pipeline::Weak);
        assert_eq!(resolved.seed, 0);
    }

    #[test]
    fn json_is_accepted() {
        let cfg = ConfigFile::parse(r#"{"problem": "heat3d", "seed": 9}"#).unwrap();
        let (problem, resolved) = cfg.resolve().unwrap();
        assert_eq!(problem.name, "heat3d");
        assert_eq!(resolved.seed, 9);
        assert_eq!(resolved.metric_grid, vec![101, 101, 101]);
    }

    #[test]
    fn weak_with_overlapping_pou_is_rejected() {
        let text = "problem = \"static_heat2d\"\npou = \"psi_c\"\n";
        let cfg = ConfigFile::parse(text).unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn strong_with_overlapping_pou_is_fine() {
        let text = "problem = \"static_heat2d\"\npou = \"psi_b\"\npipeline = \"strong\"\n";
        let cfg = ConfigFile::parse(text).unwrap();
        assert!(cfg.resolve().is_ok());
    }

    #[test]
    fn unknown_problem_is_a_config_error() {
        let cfg = ConfigFile::parse("problem = \"nope\"").unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::parse("problem = \"heat3d\"\nbogus = 3\n").is_err());
    }

    #[test]
    fn domain_override_round_trips() {
        let text = r#"
problem = "helmholtz2d_complex"

[domain]
bounding = [[-2.0, 1.0], [0.0, 1.0]]

[[domain.exclusions]]
kind = "disk"
center = [-0.5, 0.5]
radius = 0.1
"#;
        let cfg = ConfigFile::parse(text).unwrap();
        let (problem, resolved) = cfg.resolve().unwrap();
        assert_eq!(problem.domain.exclusions.len(), 1);
        assert_eq!(resolved.domain.exclusions.len(), 1);
        match &problem.domain.exclusions[0] {
            Exclusion::Disk { center, radius } => {
                assert_eq!(*center, [-0.5, 0.5]);
                assert_eq!(*radius, 0.1);
            }
            other => panic!("unexpected exclusion {other:?}"),
        }
    }

    #[test]
    fn explicit_quadrature_orders() {
        let text = "problem = \"helmholtz2d_regular\"\nquadrature_order = [50, 60]\n";
        let cfg = ConfigFile::parse(text).unwrap();
        let (_, resolved) = cfg.resolve().unwrap();
        assert_eq!(resolved.quadrature_orders, vec![50, 60]);
    }

    #[test]
    fn manifest_serializes_deterministically() {
        let cfg = ConfigFile::parse("problem = \"helmholtz2d_complex\"").unwrap();
        let (_, resolved) = cfg.resolve().unwrap();
        let a = serde_json::to_string(&resolved).unwrap();
        let b = serde_json::to_string(&resolved).unwrap();
        assert_eq!(a, b);
        // manifest carries the resolved disk layout
        assert!(a.contains("disk"));
    }
}
