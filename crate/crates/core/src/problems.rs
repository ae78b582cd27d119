//! Benchmark problem definitions, accuracy metrics and the hyperparameter
//! sensitivity sweep.
//!
//! Five built-in problems cover the 2D Helmholtz equation on a regular and a
//! disk-punctured domain, the 2D static heat equation on a square with a
//! square hole, a 3D Poisson problem with a non-smooth boundary condition, and
//! a 3D space-time heat problem. All of them lack classical solutions (kinks
//! or jumps) but have closed-form weak solutions used as references.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::GlobalModel;
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Domain, Exclusion};
use crate::testfn::LinearOperator;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Default hyperparameters of a problem (subdomain split, feature count,
/// per-axis test counts and boundary partitions).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemDefaults {
    pub subdomain_counts: Vec<usize>,
    pub features_per_subdomain: usize,
    pub test_counts: Vec<usize>,
    pub boundary_partitions: Vec<usize>,
    /// Axis varied when sweeping the number of subdomains.
    pub sweep_axis: usize,
}

/// A PDE problem: domain, operator, source, Dirichlet data and an optional
/// closed-form reference solution.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub operator: LinearOperator,
    pub source: ScalarField,
    pub dirichlet: ScalarField,
    pub reference: Option<ScalarField>,
    /// Outer faces of the bounding box carrying no boundary condition,
    /// as `(axis, upper)` pairs.
    pub skip_outer_faces: Vec<(usize, bool)>,
    pub defaults: ProblemDefaults,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("operator", &self.operator)
            .field("defaults", &self.defaults)
            .finish()
    }
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }
}

/// Unit step: 1 where `v > 0`, else 0.
fn indicator(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Disk centers of the punctured Helmholtz domain: two staggered rows of
/// four, hexagonally packed around (-0.5, 0.5) with pitch 0.25 and row offset
/// +/- 0.125. Chosen so no disk touches the subdomain interfaces at x = -1
/// and x = 0.
pub const HEX_DISK_CENTERS: [[f64; 2]; 8] = [
    [-0.9375, 0.375],
    [-0.6875, 0.375],
    [-0.4375, 0.375],
    [-0.1875, 0.375],
    [-0.8125, 0.625],
    [-0.5625, 0.625],
    [-0.3125, 0.625],
    [-0.0625, 0.625],
];

pub const HEX_DISK_RADIUS: f64 = 0.05;

pub const BUILTIN_NAMES: [&str; 5] = [
    "helmholtz2d_regular",
    "helmholtz2d_complex",
    "static_heat2d",
    "poisson3d",
    "heat3d",
];

/// Builds one of the five named benchmark problems.
pub fn builtin(name: &str) -> Result<ProblemSpec> {
    match name {
        "helmholtz2d_regular" => Ok(helmholtz_regular()),
        "helmholtz2d_complex" => Ok(helmholtz_complex()),
        "static_heat2d" => Ok(static_heat()),
        "poisson3d" => Ok(poisson3d()),
        "heat3d" => Ok(heat3d()),
        other => Err(Error::invalid_argument(format!("unknown problem '{other}'"))),
    }
}

fn helmholtz_reference() -> ScalarField {
    Arc::new(|x: &[f64]| x[0].abs().sinh() * (x[1] * x[1]).cos())
}

fn helmholtz_source(lambda: f64) -> ScalarField {
    Arc::new(move |x: &[f64]| {
        let y2 = x[1] * x[1];
        x[0].abs().sinh() * ((1.0 + lambda - 4.0 * y2) * y2.cos() - 2.0 * y2.sin())
    })
}

fn helmholtz_regular() -> ProblemSpec {
    let lambda = 1.0;
    let reference = helmholtz_reference();
    ProblemSpec {
        name: "helmholtz2d_regular".into(),
        domain: Domain::new(AxisBox::new(vec![-1.0, 0.0], vec![1.0, 1.0]).unwrap()),
        operator: LinearOperator::helmholtz(2, lambda),
        source: helmholtz_source(lambda),
        dirichlet: reference.clone(),
        reference: Some(reference),
        skip_outer_faces: vec![],
        defaults: ProblemDefaults {
            // 4x1 split puts an interface on the derivative kink at x = 0
            subdomain_counts: vec![4, 1],
            features_per_subdomain: 40,
            test_counts: vec![25, 25],
            boundary_partitions: vec![50, 100],
            sweep_axis: 0,
        },
    }
}

fn helmholtz_complex() -> ProblemSpec {
    let lambda = 1.0;
    let reference = helmholtz_reference();
    let exclusions = HEX_DISK_CENTERS
        .iter()
        .map(|c| Exclusion::Disk { center: *c, radius: HEX_DISK_RADIUS })
        .collect();
    ProblemSpec {
        name: "helmholtz2d_complex".into(),
        domain: Domain::with_exclusions(
            AxisBox::new(vec![-2.0, 0.0], vec![1.0, 1.0]).unwrap(),
            exclusions,
        ),
        operator: LinearOperator::helmholtz(2, lambda),
        source: helmholtz_source(lambda),
        dirichlet: reference.clone(),
        reference: Some(reference),
        skip_outer_faces: vec![],
        defaults: ProblemDefaults {
            subdomain_counts: vec![3, 1],
            features_per_subdomain: 100,
            test_counts: vec![25, 15],
            boundary_partitions: vec![150, 100],
            sweep_axis: 0,
        },
    }
}

fn static_heat_reference() -> ScalarField {
    Arc::new(|p: &[f64]| {
        let (x, y) = (p[0], p[1]);
        (4.5 * (x * x - x) + 1.0) * indicator((x - y) * (y + x - 1.0))
            + (4.5 * (y - y * y) - 1.0) * indicator((y - x) * (y + x - 1.0))
    })
}

fn static_heat() -> ProblemSpec {
    let reference = static_heat_reference();
    // boundary data per face: +1 on the vertical outer faces, -1 on the
    // horizontal ones, 0 on the hole edges
    let dirichlet: ScalarField = Arc::new(|p: &[f64]| {
        let (x, y) = (p[0], p[1]);
        let tol = 1e-9;
        if x.abs() < tol || (x - 1.0).abs() < tol {
            1.0
        } else if y.abs() < tol || (y - 1.0).abs() < tol {
            -1.0
        } else {
            0.0
        }
    });
    ProblemSpec {
        name: "static_heat2d".into(),
        domain: Domain::with_exclusions(
            AxisBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![Exclusion::Box {
                lo: vec![1.0 / 3.0, 1.0 / 3.0],
                hi: vec![2.0 / 3.0, 2.0 / 3.0],
            }],
        ),
        operator: LinearOperator::laplacian(2),
        source: Arc::new(|p: &[f64]| 9.0 * ((p[0] - p[1]) * (p[1] + p[0] - 1.0)).signum()),
        dirichlet,
        reference: Some(reference),
        skip_outer_faces: vec![],
        defaults: ProblemDefaults {
            subdomain_counts: vec![1, 1],
            features_per_subdomain: 500,
            test_counts: vec![50, 50],
            boundary_partitions: vec![100, 100],
            sweep_axis: 0,
        },
    }
}

fn poisson3d() -> ProblemSpec {
    let reference: ScalarField = Arc::new(|p: &[f64]| {
        let t = p[0] - indicator(p[0] - 0.5);
        t * t * p[1].sin() * (-p[2]).exp()
    });
    ProblemSpec {
        name: "poisson3d".into(),
        domain: Domain::new(
            AxisBox::new(
                vec![0.0, -std::f64::consts::FRAC_PI_2, 0.0],
                vec![1.0, std::f64::consts::FRAC_PI_2, 0.5],
            )
            .unwrap(),
        ),
        operator: LinearOperator::laplacian(3),
        source: Arc::new(|p: &[f64]| 2.0 * p[1].sin() * (-p[2]).exp()),
        dirichlet: reference.clone(),
        reference: Some(reference),
        skip_outer_faces: vec![],
        defaults: ProblemDefaults {
            // interface at the boundary-data kink x = 1/2
            subdomain_counts: vec![2, 1, 1],
            features_per_subdomain: 100,
            test_counts: vec![15, 15, 15],
            boundary_partitions: vec![25, 50, 50],
            sweep_axis: 0,
        },
    }
}

fn heat3d() -> ProblemSpec {
    let a: f64 = 1.0;
    let reference: ScalarField = Arc::new(move |p: &[f64]| {
        (p[0].abs() + p[1].abs() - 1.0).sin() * (-p[2] * p[2] / (a * a)).exp()
    });
    ProblemSpec {
        name: "heat3d".into(),
        // time is the third coordinate of the space-time box
        domain: Domain::new(AxisBox::new(vec![-1.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]).unwrap()),
        operator: LinearOperator::heat(3, a),
        source: Arc::new(move |p: &[f64]| {
            2.0 * (p[0].abs() + p[1].abs() - 1.0).sin()
                * (p[2] - 1.0)
                * (-p[2] * p[2] / (a * a)).exp()
        }),
        dirichlet: reference.clone(),
        reference: Some(reference),
        // no condition on the final-time face
        skip_outer_faces: vec![(2, true)],
        defaults: ProblemDefaults {
            // interface on the kink at x = 0
            subdomain_counts: vec![2, 1, 1],
            features_per_subdomain: 200,
            test_counts: vec![15, 15, 15],
            boundary_partitions: vec![50, 50, 50],
            sweep_axis: 0,
        },
    }
}

/// Smooth manufactured Poisson problem used by the verification suites:
/// `u = sin(pi x) sin(pi y)` on the unit square.
pub fn manufactured_poisson2d() -> ProblemSpec {
    use std::f64::consts::PI;
    let reference: ScalarField = Arc::new(|p: &[f64]| (PI * p[0]).sin() * (PI * p[1]).sin());
    ProblemSpec {
        name: "manufactured2d".into(),
        domain: Domain::new(AxisBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()),
        operator: LinearOperator::laplacian(2),
        source: Arc::new(|p: &[f64]| {
            -2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin()
        }),
        dirichlet: reference.clone(),
        reference: Some(reference),
        skip_outer_faces: vec![],
        defaults: ProblemDefaults {
            subdomain_counts: vec![1, 1],
            features_per_subdomain: 200,
            test_counts: vec![20, 20],
            boundary_partitions: vec![30, 30],
            sweep_axis: 0,
        },
    }
}

/// Accuracy and run bookkeeping of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub l2: f64,
    pub linf: f64,
    pub wall_time_s: f64,
    pub param_count: usize,
    pub rows: usize,
    pub seed: u64,
}

/// Relative discrete L2/Linf errors of `eval` against the reference of
/// `spec`, over a uniform grid restricted to the domain.
pub fn metrics_of_field<F: Fn(&[f64]) -> f64 + Sync>(
    eval: &F,
    spec: &ProblemSpec,
    grid: &[usize],
) -> Result<MetricsReport> {
    let reference = spec
        .reference
        .as_ref()
        .ok_or_else(|| Error::unsupported("problem has no reference solution"))?;
    let d = spec.dim();
    if grid.len() != d || grid.iter().any(|&g| g < 2) {
        return Err(Error::invalid_argument("metric grid needs at least 2 points per axis"));
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let (lo, hi) = (spec.domain.bounding.lo[a], spec.domain.bounding.hi[a]);
            (0..grid[a])
                .map(|i| lo + (hi - lo) * i as f64 / (grid[a] - 1) as f64)
                .collect()
        })
        .collect();
    let total: usize = grid.iter().product();
    let points: Vec<Vec<f64>> = (0..total)
        .filter_map(|flat| {
            let mut rem = flat;
            let mut p = vec![0.0; d];
            for a in 0..d {
                p[a] = axes[a][rem % grid[a]];
                rem /= grid[a];
            }
            spec.domain.contains(&p).then_some(p)
        })
        .collect();
    let contributions: Vec<(f64, f64, f64, f64)> = points
        .par_iter()
        .map(|p| {
            let u = eval(p);
            let ue = reference(p);
            let diff = u - ue;
            (diff * diff, ue * ue, diff.abs(), ue.abs())
        })
        .collect();
    let mut num2 = 0.0;
    let mut den2 = 0.0;
    let mut numi: f64 = 0.0;
    let mut deni: f64 = 0.0;
    for (d2, e2, di, ei) in contributions {
        num2 += d2;
        den2 += e2;
        numi = numi.max(di);
        deni = deni.max(ei);
    }
    if den2 == 0.0 || deni == 0.0 {
        return Err(Error::invalid_argument("reference is identically zero on the metric grid"));
    }
    Ok(MetricsReport {
        l2: (num2 / den2).sqrt(),
        linf: numi / deni,
        wall_time_s: 0.0,
        param_count: 0,
        rows: 0,
        seed: 0,
    })
}

/// Metrics of a solved model; pipeline-level fields (`wall_time_s`, `rows`,
/// `seed`) are filled by the caller.
pub fn metrics(model: &GlobalModel, spec: &ProblemSpec, grid: &[usize]) -> Result<MetricsReport> {
    let mut report = metrics_of_field(&|p: &[f64]| model.eval(p), spec, grid)?;
    report.param_count = model.len();
    Ok(report)
}

/// One aggregated row of a sensitivity sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub subdomains: usize,
    pub features: usize,
    pub param_count: usize,
    pub repeats: usize,
    pub l2_mean: f64,
    pub l2_std: f64,
    pub linf_mean: f64,
    pub linf_std: f64,
    pub time_mean_s: f64,
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `solve` for every `(S, J)` pair once per seed and aggregates the
/// metrics. `solve` receives `(subdomains_along_sweep_axis, features, seed)`.
pub fn sensitivity_sweep<F>(
    s_values: &[usize],
    j_values: &[usize],
    seeds: &[u64],
    solve: F,
) -> Result<Vec<SweepRow>>
where
    F: Fn(usize, usize, u64) -> Result<MetricsReport> + Sync,
{
    if seeds.len() < 2 {
        return Err(Error::invalid_argument("sweep needs at least 2 repeats"));
    }
    let combos: Vec<(usize, usize)> = s_values
        .iter()
        .flat_map(|&s| j_values.iter().map(move |&j| (s, j)))
        .collect();
    let rows: Result<Vec<SweepRow>> = combos
        .par_iter()
        .map(|&(s, j)| {
            let reports: Result<Vec<MetricsReport>> =
                seeds.par_iter().map(|&seed| solve(s, j, seed)).collect();
            let reports = reports?;
            let l2: Vec<f64> = reports.iter().map(|r| r.l2).collect();
            let linf: Vec<f64> = reports.iter().map(|r| r.linf).collect();
            let times: Vec<f64> = reports.iter().map(|r| r.wall_time_s).collect();
            let (l2_mean, l2_std) = mean_std(&l2);
            let (linf_mean, linf_std) = mean_std(&linf);
            Ok(SweepRow {
                subdomains: s,
                features: j,
                param_count: reports.first().map(|r| r.param_count).unwrap_or(0),
                repeats: seeds.len(),
                l2_mean,
                l2_std,
                linf_mean,
                linf_std,
                time_mean_s: times.iter().sum::<f64>() / times.len() as f64,
            })
        })
        .collect();
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unknown_name_is_rejected() {
        assert!(builtin("poisson4d").is_err());
    }

    #[test]
    fn all_builtins_construct() {
        for name in BUILTIN_NAMES {
            let spec = builtin(name).unwrap();
            assert_eq!(spec.name, name);
            assert_eq!(spec.defaults.subdomain_counts.len(), spec.dim());
        }
    }

    #[test]
    fn helmholtz_reference_vanishes_at_x0() {
        let spec = builtin("helmholtz2d_regular").unwrap();
        let u = spec.reference.as_ref().unwrap();
        for y in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(u(&[0.0, y]), 0.0);
        }
    }

    #[test]
    fn helmholtz_source_value() {
        let spec = builtin("helmholtz2d_regular").unwrap();
        let expect = 1.0f64.sinh() * (0.25f64.cos() - 2.0 * 0.25f64.sin());
        assert_relative_eq!((spec.source)(&[1.0, 0.5]), expect, max_relative = 1e-12);
        assert!((expect - 0.5572).abs() < 1e-4);
    }

    #[test]
    fn static_heat_boundary_table() {
        let spec = builtin("static_heat2d").unwrap();
        let g = &spec.dirichlet;
        assert_eq!(g(&[0.4, 0.0]), -1.0);
        assert_eq!(g(&[0.7, 1.0]), -1.0);
        assert_eq!(g(&[0.0, 0.5]), 1.0);
        assert_eq!(g(&[1.0, 0.25]), 1.0);
        assert_eq!(g(&[1.0 / 3.0, 0.5]), 0.0);
        assert_eq!(g(&[0.5, 2.0 / 3.0]), 0.0);
    }

    #[test]
    fn poisson_source_formula() {
        let spec = builtin("poisson3d").unwrap();
        let p = [0.3, 0.8, 0.1];
        assert_relative_eq!(
            (spec.source)(&p),
            2.0 * p[1].sin() * (-p[2]).exp(),
            max_relative = 1e-14
        );
    }

    /// Distance of a point to the kink set of each problem's reference.
    fn kink_distance(name: &str, p: &[f64]) -> f64 {
        match name {
            "helmholtz2d_regular" | "helmholtz2d_complex" | "heat3d" => p[0].abs(),
            "static_heat2d" => {
                let d1 = (p[0] - p[1]).abs() / 2.0f64.sqrt();
                let d2 = (p[0] + p[1] - 1.0).abs() / 2.0f64.sqrt();
                d1.min(d2)
            }
            "poisson3d" => (p[0] - 0.5).abs(),
            _ => f64::INFINITY,
        }
    }

    fn random_interior_point(
        spec: &ProblemSpec,
        rng: &mut ChaCha8Rng,
        margin: f64,
        kink_margin: f64,
    ) -> Vec<f64> {
        let d = spec.dim();
        loop {
            let p: Vec<f64> = (0..d)
                .map(|a| {
                    let lo = spec.domain.bounding.lo[a] + margin;
                    let hi = spec.domain.bounding.hi[a] - margin;
                    rng.random_range(lo..hi)
                })
                .collect();
            let clear_of_exclusions = spec.domain.exclusions.iter().all(|e| match e {
                Exclusion::Disk { center, radius } => {
                    let dx = p[0] - center[0];
                    let dy = p[1] - center[1];
                    (dx * dx + dy * dy).sqrt() > radius + margin
                }
                Exclusion::Box { lo, hi } => {
                    !(0..d).all(|a| p[a] > lo[a] - margin && p[a] < hi[a] + margin)
                }
            });
            if clear_of_exclusions && kink_distance(&spec.name, &p) > kink_margin {
                return p;
            }
        }
    }

    /// Second-order finite-difference application of the problem operator.
    fn fd_operator(spec: &ProblemSpec, p: &[f64], h: f64) -> f64 {
        let u = spec.reference.as_ref().unwrap();
        let mut acc = 0.0;
        for (alpha, c) in &spec.operator.terms {
            let order: usize = alpha.iter().sum();
            let axis = alpha.iter().position(|&o| o > 0);
            let val = match order {
                0 => u(p),
                1 => {
                    let a = axis.unwrap();
                    let mut pp = p.to_vec();
                    let mut pm = p.to_vec();
                    pp[a] += h;
                    pm[a] -= h;
                    (u(&pp) - u(&pm)) / (2.0 * h)
                }
                2 => {
                    let a = axis.unwrap();
                    let mut pp = p.to_vec();
                    let mut pm = p.to_vec();
                    pp[a] += h;
                    pm[a] -= h;
                    (u(&pp) - 2.0 * u(p) + u(&pm)) / (h * h)
                }
                _ => unreachable!(),
            };
            acc += c * val;
        }
        acc
    }

    #[test]
    fn references_satisfy_their_pdes_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for name in BUILTIN_NAMES {
            let spec = builtin(name).unwrap();
            for _ in 0..100 {
                let p = random_interior_point(&spec, &mut rng, 0.02, 0.05);
                let lu = fd_operator(&spec, &p, 1e-4);
                let f = (spec.source)(&p);
                assert!(
                    (lu - f).abs() < 1e-4 * f.abs().max(1.0),
                    "{name} at {p:?}: Lu={lu} f={f}"
                );
            }
        }
    }

    #[test]
    fn poisson_reference_satisfies_pde_to_1e5() {
        let spec = builtin("poisson3d").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let p = random_interior_point(&spec, &mut rng, 0.02, 0.05);
            let lu = fd_operator(&spec, &p, 1e-4);
            let f = (spec.source)(&p);
            assert!((lu - f).abs() < 1e-5 * f.abs().max(1.0), "{p:?}: {lu} vs {f}");
        }
    }

    #[test]
    fn references_match_boundary_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for name in BUILTIN_NAMES {
            let spec = builtin(name).unwrap();
            let u = spec.reference.clone().unwrap();
            let d = spec.dim();
            let mut checked = 0;
            while checked < 100 {
                // random point on a random outer face
                let axis = rng.random_range(0..d);
                let upper = rng.random_bool(0.5);
                if spec.skip_outer_faces.contains(&(axis, upper)) {
                    continue;
                }
                let mut p: Vec<f64> = (0..d)
                    .map(|a| {
                        rng.random_range(spec.domain.bounding.lo[a]..spec.domain.bounding.hi[a])
                    })
                    .collect();
                p[axis] =
                    if upper { spec.domain.bounding.hi[axis] } else { spec.domain.bounding.lo[axis] };
                if spec.domain.excluded(&p) {
                    continue;
                }
                // static heat data is discontinuous where the diagonals meet
                // the boundary (the corners)
                if name == "static_heat2d" && kink_distance(name, &p) < 0.01 {
                    continue;
                }
                assert!(
                    (u(&p) - (spec.dirichlet)(&p)).abs() < 1e-10,
                    "{name} at {p:?}: {} vs {}",
                    u(&p),
                    (spec.dirichlet)(&p)
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn static_heat_reference_matches_hole_data() {
        let spec = builtin("static_heat2d").unwrap();
        let u = spec.reference.clone().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let t = rng.random_range(0.34..0.66);
            for p in [
                [1.0 / 3.0, t],
                [2.0 / 3.0, t],
                [t, 1.0 / 3.0],
                [t, 2.0 / 3.0],
            ] {
                assert!(u(&p).abs() < 1e-10, "hole edge {p:?}: {}", u(&p));
            }
        }
    }

    #[test]
    fn hex_disks_are_inside_and_disjoint() {
        let spec = builtin("helmholtz2d_complex").unwrap();
        for (i, a) in HEX_DISK_CENTERS.iter().enumerate() {
            assert!(spec.domain.bounding.contains_strictly(&[a[0], a[1]]));
            // clear of the 3x1 interface lines at x = -1 and x = 0
            assert!((a[0] + 1.0).abs() > HEX_DISK_RADIUS);
            assert!(a[0].abs() > HEX_DISK_RADIUS);
            for b in &HEX_DISK_CENTERS[i + 1..] {
                let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                assert!(dist > 2.0 * HEX_DISK_RADIUS);
            }
        }
    }

    #[test]
    fn metrics_of_exact_injection_is_zero() {
        let spec = builtin("helmholtz2d_regular").unwrap();
        let u = spec.reference.clone().unwrap();
        let report = metrics_of_field(&|p: &[f64]| u(p), &spec, &[51, 51]).unwrap();
        assert_eq!(report.l2, 0.0);
        assert_eq!(report.linf, 0.0);
    }

    #[test]
    fn metrics_of_zero_field_is_one() {
        let spec = builtin("helmholtz2d_regular").unwrap();
        let report = metrics_of_field(&|_: &[f64]| 0.0, &spec, &[51, 51]).unwrap();
        assert_relative_eq!(report.l2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.linf, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn metrics_of_scaled_reference() {
        let spec = builtin("helmholtz2d_regular").unwrap();
        let u = spec.reference.clone().unwrap();
        let report = metrics_of_field(&|p: &[f64]| 1.01 * u(p), &spec, &[51, 51]).unwrap();
        assert_relative_eq!(report.l2, 0.01, epsilon = 1e-12);
    }

    #[test]
    fn sweep_aggregates_shapes_and_determinism() {
        let rows = sensitivity_sweep(&[1, 2, 4], &[10, 20, 30, 40], &[7, 7], |s, j, seed| {
            // deterministic fake solve: accuracy depends on (s, j, seed) only
            let l2 = 1.0 / (s * j) as f64 + seed as f64 * 0.0;
            Ok(MetricsReport {
                l2,
                linf: 2.0 * l2,
                wall_time_s: 0.001,
                param_count: s * j,
                rows: 0,
                seed,
            })
        })
        .unwrap();
        assert_eq!(rows.len(), 12);
        for row in &rows {
            // identical seeds forced: zero spread
            assert_eq!(row.l2_std, 0.0);
            assert_eq!(row.repeats, 2);
        }
    }

    #[test]
    fn sweep_rejects_single_repeat() {
        assert!(sensitivity_sweep(&[1], &[1], &[7], |_, _, _| {
            Ok(MetricsReport {
                l2: 0.0,
                linf: 0.0,
                wall_time_s: 0.0,
                param_count: 0,
                rows: 0,
                seed: 0,
            })
        })
        .is_err());
    }
}
