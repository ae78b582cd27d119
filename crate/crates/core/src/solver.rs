//! Rank-revealing least-squares solve and end-to-end pipeline orchestration.
//!
//! Random-feature systems are badly conditioned by construction, so the solve
//! is a truncated SVD: singular values below `rcond * sigma_max` are dropped
//! and the minimum-norm solution over the retained subspace is returned.

use std::time::Instant;

use faer::prelude::*;
use ndarray::Array2;

use crate::assembly::{
    apply_category_weights, assemble_strong, assemble_weak, rescale_rows, AssembledSystem,
};
use crate::basis::{sample_basis, GlobalModel, SubdomainBasis};
use crate::config::{Pipeline, ResolvedConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    decompose, interface_points, subdomain_boundary_points, subdomain_interior_points,
    InterfacePoint,
};
use crate::problems::{metrics, MetricsReport, ProblemSpec};
use crate::quadrature::TensorRule;
use crate::testfn::build_test_set;

/// Outcome of a least-squares solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub coefficients: Vec<f64>,
    pub effective_rank: usize,
    pub residual_norm: f64,
    pub largest_singular_value: f64,
    pub smallest_retained_singular_value: f64,
    pub wall_time_s: f64,
    pub rows: usize,
    pub cols: usize,
    /// All-zero rows found during rescaling (diagnostic).
    pub zero_rescaled_rows: usize,
}

/// Minimum-norm least-squares solution of `matrix x ~ rhs` via truncated SVD.
pub fn least_squares(matrix: &Array2<f64>, rhs: &[f64], rcond: f64) -> Result<SolveReport> {
    let (m, n) = matrix.dim();
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("least squares needs a nonempty matrix".into()));
    }
    if rhs.len() != m {
        return Err(Error::InvalidInput("rhs length does not match matrix rows".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite entries in least-squares input".into()));
    }
    let start = Instant::now();

    let a = Mat::from_fn(m, n, |i, j| matrix[[i, j]]);
    let b = Col::from_fn(m, |i| rhs[i]);
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Solver(format!("SVD failed to converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let sigma_max = if k > 0 { s[0] } else { 0.0 };
    let cutoff = rcond * sigma_max;

    // project, damp truncated directions, lift back
    let mut projected = svd.U().transpose() * &b;
    let mut rank = 0;
    let mut smallest_retained = 0.0;
    for i in 0..k {
        if s[i] > cutoff && s[i] > 0.0 {
            projected[i] /= s[i];
            smallest_retained = s[i];
            rank += 1;
        } else {
            projected[i] = 0.0;
        }
    }
    let x = svd.V() * &projected;
    let residual = &a * &x - &b;
    let residual_norm = residual.norm_l2();

    Ok(SolveReport {
        coefficients: (0..n).map(|i| x[i]).collect(),
        effective_rank: rank,
        residual_norm,
        largest_singular_value: sigma_max,
        smallest_retained_singular_value: smallest_retained,
        wall_time_s: start.elapsed().as_secs_f64(),
        rows: m,
        cols: n,
        zero_rescaled_rows: 0,
    })
}

fn sample_all_bases(
    dec: &crate::geometry::Decomposition,
    config: &ResolvedConfig,
) -> Result<Vec<SubdomainBasis>> {
    dec.subdomains
        .iter()
        .enumerate()
        .map(|(n, sub)| {
            sample_basis(
                sub,
                n,
                config.features_per_subdomain,
                config.weight_range,
                config.seed,
                config.activation,
                config.partition_of_unity(),
            )
        })
        .collect()
}

/// Assembles the configured pipeline's system without solving it.
pub fn assemble_problem(
    problem: &ProblemSpec,
    config: &ResolvedConfig,
) -> Result<(AssembledSystem, Vec<SubdomainBasis>, crate::geometry::Decomposition)> {
    let domain = &problem.domain;
    let dec = decompose(&domain.bounding, &config.subdomain_counts)?;
    let bases = sample_all_bases(&dec, config)?;
    let boundary = subdomain_boundary_points(
        &dec,
        domain,
        &config.boundary_partitions,
        &problem.skip_outer_faces,
    )?;
    let interface: Vec<InterfacePoint> = interface_points(&dec, &config.interface_partitions)?
        .into_iter()
        .filter(|p| domain.contains(&p.point))
        .collect();
    let system = match config.pipeline {
        Pipeline::Weak => {
            let counts = vec![config.test_counts.clone(); dec.len()];
            let tests = build_test_set(&dec, &counts, config.alpha)?;
            let rules: Vec<TensorRule> = dec
                .subdomains
                .iter()
                .map(|sub| TensorRule::masked_on(&sub.bounds, &config.quadrature_orders, domain))
                .collect::<Result<_>>()?;
            assemble_weak(problem, &dec, &bases, &tests, &rules, &boundary, &interface)?
        }
        Pipeline::Strong => {
            let interior = subdomain_interior_points(&dec, domain, &config.interior_partitions)?;
            assemble_strong(problem, &dec, &bases, &interior, &boundary, &interface)?
        }
    };
    Ok((system, bases, dec))
}

/// Full pipeline: geometry, bases, assembly, rescaling, least squares.
pub fn solve_problem(
    problem: &ProblemSpec,
    config: &ResolvedConfig,
) -> Result<(GlobalModel, SolveReport)> {
    let start = Instant::now();
    let (system, bases, dec) = assemble_problem(problem, config)?;
    let (mut system, zero_rows) = rescale_rows(system, config.rescale);
    apply_category_weights(&mut system, &config.weights);
    let mut report = least_squares(&system.matrix, &system.rhs, config.rcond)?;
    report.zero_rescaled_rows = zero_rows.len();
    report.wall_time_s = start.elapsed().as_secs_f64();
    let model = GlobalModel::new(dec, bases, report.coefficients.clone())?;
    Ok((model, report))
}

/// One benchmark run: solve plus accuracy metrics against the reference.
pub fn run_problem(
    problem: &ProblemSpec,
    config: &ResolvedConfig,
) -> Result<(GlobalModel, SolveReport, MetricsReport)> {
    let (model, report) = solve_problem(problem, config)?;
    let mut m = metrics(&model, problem, &config.metric_grid)?;
    m.wall_time_s = report.wall_time_s;
    m.rows = report.rows;
    m.seed = config.seed;
    Ok((model, report, m))
}

/// Sensitivity sweep driver: varies the subdomain count along the problem's
/// sweep axis and the per-subdomain feature count, one run per seed.
pub fn run_sweep(
    problem: &ProblemSpec,
    base: &ResolvedConfig,
    s_values: &[usize],
    j_values: &[usize],
    seeds: &[u64],
) -> Result<Vec<crate::problems::SweepRow>> {
    crate::problems::sensitivity_sweep(s_values, j_values, seeds, |s, j, seed| {
        let mut config = base.clone();
        config.subdomain_counts[base.sweep_axis] = s;
        config.features_per_subdomain = j;
        config.seed = seed;
        let (_, _, m) = run_problem(problem, &config)?;
        Ok(m)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_system() {
        let a = Array2::eye(4);
        let b = vec![1.0, -2.0, 3.0, 0.5];
        let report = least_squares(&a, &b, 1e-12).unwrap();
        for (x, e) in report.coefficients.iter().zip(&b) {
            assert_relative_eq!(x, e, epsilon = 1e-14);
        }
        assert_eq!(report.effective_rank, 4);
        assert!(report.residual_norm < 1e-14);
    }

    #[test]
    fn duplicated_column_drops_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut a = Array2::zeros((30, 5));
        for i in 0..30 {
            for j in 0..4 {
                a[[i, j]] = rng.random_range(-1.0..1.0);
            }
            a[[i, 4]] = a[[i, 2]];
        }
        let b: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let report = least_squares(&a, &b, 1e-10).unwrap();
        assert_eq!(report.effective_rank, 4);
        assert!(report.coefficients.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn recovers_planted_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = Array2::from_shape_fn((200, 50), |_| rng.random_range(-1.0..1.0));
        let truth: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = a
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&truth).map(|(x, u)| x * u).sum())
            .collect();
        let report = least_squares(&a, &b, 1e-12).unwrap();
        for (x, u) in report.coefficients.iter().zip(&truth) {
            assert!((x - u).abs() < 1e-10 * u.abs().max(1.0));
        }
        assert_eq!(report.effective_rank, 50);
    }

    #[test]
    fn underdetermined_minimum_norm() {
        // x + y = 2 has minimum-norm solution (1, 1)
        let a = array![[1.0, 1.0]];
        let report = least_squares(&a, &[2.0], 1e-12).unwrap();
        assert_relative_eq!(report.coefficients[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.coefficients[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        let a = array![[1.0, f64::NAN]];
        assert!(matches!(least_squares(&a, &[1.0], 1e-12), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn raising_rcond_never_raises_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = Array2::from_shape_fn((40, 20), |(i, j)| {
            // strongly graded singular values
            rng.random_range(-1.0..1.0) * (0.3f64).powi(j as i32) + (i + j) as f64 * 1e-14
        });
        let b: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut last_rank = usize::MAX;
        for rcond in [1e-14, 1e-10, 1e-6, 1e-3, 1e-1] {
            let report = least_squares(&a, &b, rcond).unwrap();
            assert!(report.effective_rank <= last_rank, "rank grew at rcond={rcond}");
            last_rank = report.effective_rank;
        }
    }

    #[test]
    fn rhs_scaling_scales_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let a = Array2::from_shape_fn((60, 12), |_| rng.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b10: Vec<f64> = b.iter().map(|v| 10.0 * v).collect();
        let r1 = least_squares(&a, &b, 1e-12).unwrap();
        let r10 = least_squares(&a, &b10, 1e-12).unwrap();
        for (x, y) in r1.coefficients.iter().zip(&r10.coefficients) {
            assert_relative_eq!(10.0 * x, y, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_is_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = Array2::from_shape_fn((150, 40), |_| rng.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..150).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r1 = least_squares(&a, &b, 1e-12).unwrap();
        let r2 = least_squares(&a, &b, 1e-12).unwrap();
        for (x, y) in r1.coefficients.iter().zip(&r2.coefficients) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
