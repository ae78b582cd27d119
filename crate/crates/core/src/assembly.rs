//! Assembly of the weak-form and strong-form least-squares systems.
//!
//! The weak system stacks, in order: one row per test function (the weak
//! residual paired against that function), one row per boundary collocation
//! point, one row per interface continuity point. The strong baseline stacks
//! operator collocation rows, boundary rows, interface value-continuity rows
//! and interface normal-derivative rows.
//!
//! Weak rows of subdomain `n` only touch the columns of block `n`, so the
//! weak block is block-diagonal by construction.

use std::io::Write;

use ndarray::{Array2, ArrayD, IxDyn};
use rayon::prelude::*;

use crate::basis::{PouKind, SubdomainBasis};
use crate::error::{Error, Result};
use crate::geometry::{Decomposition, InterfacePoint, SubdomainBoundaryPoint};
use crate::problems::ProblemSpec;
use crate::quadrature::TensorRule;
use crate::testfn::TestSet;

/// Row category of an assembled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowCategory {
    Weak,
    Strong,
    Boundary,
    InterfaceValue,
    InterfaceDeriv,
}

impl RowCategory {
    pub fn code(self) -> u8 {
        match self {
            RowCategory::Weak => 0,
            RowCategory::Strong => 1,
            RowCategory::Boundary => 2,
            RowCategory::InterfaceValue => 3,
            RowCategory::InterfaceDeriv => 4,
        }
    }
}

/// Provenance of one row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowTag {
    Weak { subdomain: usize, multi_index: Vec<usize> },
    Strong { subdomain: usize, point: Vec<f64> },
    Boundary { subdomain: usize, point: Vec<f64> },
    InterfaceValue { left: usize, right: usize, point: Vec<f64> },
    InterfaceDeriv { left: usize, right: usize, point: Vec<f64> },
}

impl RowTag {
    pub fn category(&self) -> RowCategory {
        match self {
            RowTag::Weak { .. } => RowCategory::Weak,
            RowTag::Strong { .. } => RowCategory::Strong,
            RowTag::Boundary { .. } => RowCategory::Boundary,
            RowTag::InterfaceValue { .. } => RowCategory::InterfaceValue,
            RowTag::InterfaceDeriv { .. } => RowCategory::InterfaceDeriv,
        }
    }
}

/// Dense least-squares system with per-row provenance tags.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: Array2<f64>,
    pub rhs: Vec<f64>,
    pub tags: Vec<RowTag>,
    /// Column offset of each subdomain's feature block; a trailing entry
    /// holds the total column count.
    pub block_offsets: Vec<usize>,
}

impl AssembledSystem {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Column of feature `j` of subdomain `n`.
    pub fn column(&self, n: usize, j: usize) -> usize {
        self.block_offsets[n] + j
    }

    /// Binary dump: 16-byte header (magic `WRFM`, u32 rows, u32 cols, u32
    /// reserved), then the row-major matrix as little-endian f64, the rhs,
    /// and one category byte per row.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"WRFM")?;
        w.write_all(&(self.rows() as u32).to_le_bytes())?;
        w.write_all(&(self.cols() as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        for v in self.matrix.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.rhs {
            w.write_all(&v.to_le_bytes())?;
        }
        for tag in &self.tags {
            w.write_all(&[tag.category().code()])?;
        }
        Ok(())
    }
}

fn block_offsets(bases: &[SubdomainBasis]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(bases.len() + 1);
    let mut acc = 0;
    for b in bases {
        offsets.push(acc);
        acc += b.len();
    }
    offsets.push(acc);
    offsets
}

/// Contracts a flat node tensor against one matrix per axis.
///
/// `values` is `(N, J)` where `N = prod(q_dims)` with the LAST axis fastest
/// (the [`TensorRule`] flat order); `factors[a]` is `(K_a, Q_a)`. Returns
/// `(prod(K_a), J)` with rows in lexicographic multi-index order, first axis
/// fastest.
fn tensor_contract(values: &Array2<f64>, q_dims: &[usize], factors: &[Array2<f64>]) -> Array2<f64> {
    let d = q_dims.len();
    let jc = values.ncols();
    debug_assert_eq!(values.nrows(), q_dims.iter().product::<usize>());

    // running tensor, starts as (Q_0, Q_1, ..., Q_{d-1}, J)
    let mut shape: Vec<usize> = q_dims.to_vec();
    shape.push(jc);
    let mut tensor: ArrayD<f64> =
        values.to_owned().into_shape_with_order(IxDyn(&shape)).expect("contiguous reshape");

    for factor in factors.iter() {
        let dims = tensor.shape().to_vec();
        let lead = dims[0];
        let rest: usize = dims[1..].iter().product();
        let flat: Array2<f64> =
            tensor.into_shape_with_order((lead, rest)).expect("contiguous reshape");
        let product = factor.dot(&flat); // (K, rest)
        // rotate: (K, t0, ..., tm) -> (t0, ..., tm, K)
        let mut new_shape = vec![factor.nrows()];
        new_shape.extend_from_slice(&dims[1..]);
        let nd = product.into_shape_with_order(IxDyn(&new_shape)).expect("contiguous reshape");
        let mut perm: Vec<usize> = (1..new_shape.len()).collect();
        perm.push(0);
        tensor = nd.permuted_axes(IxDyn(&perm)).as_standard_layout().into_owned();
    }

    // final layout: (J, K_0, K_1, ..., K_{d-1}); reorder rows so the first
    // axis index is fastest
    let k_dims: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    let k_total: usize = k_dims.iter().product();
    let flat: Array2<f64> =
        tensor.into_shape_with_order((jc, k_total)).expect("contiguous reshape");
    // flat columns are laid out with k_{d-1} fastest; output rows use k_0
    // fastest
    let mut strides = vec![0usize; d];
    let mut s = 1usize;
    for a in (0..d).rev() {
        strides[a] = s;
        s *= k_dims[a];
    }
    let mut out = Array2::zeros((k_total, jc));
    for row in 0..k_total {
        let mut rem = row;
        let mut col_of_flat = 0usize;
        for a in 0..d {
            col_of_flat += (rem % k_dims[a]) * strides[a];
            rem /= k_dims[a];
        }
        for j in 0..jc {
            out[[row, j]] = flat[[j, col_of_flat]];
        }
    }
    out
}

/// Feature values at the rule's nodes, masked nodes zeroed: `(N, len(cols))`.
fn feature_values_at_nodes(
    basis: &SubdomainBasis,
    rule: &TensorRule,
    cols: std::ops::Range<usize>,
) -> Array2<f64> {
    let n = rule.len();
    let jc = cols.len();
    let mut values = Array2::zeros((n, jc));
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if !rule.is_active(i) {
                return vec![0.0; jc];
            }
            let l = basis.subdomain.normalize(rule.point(i));
            cols.clone().map(|j| basis.feature_value(j, &l)).collect()
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (c, v) in row.into_iter().enumerate() {
            values[[i, c]] = v;
        }
    }
    values
}

/// Per-axis matrices `(K_a, Q_a)` holding quadrature weight times the
/// derivative of the 1D windowed-sine factor at each node.
fn test_factor_matrices(
    tests: &[crate::testfn::TestFunction],
    counts: &[usize],
    rule: &TensorRule,
    orders: &[usize],
) -> Vec<Array2<f64>> {
    let d = counts.len();
    (0..d)
        .map(|a| {
            let order = orders[a];
            let axis = &rule.axes[a];
            let q = axis.nodes.len();
            let mut m = Array2::zeros((counts[a], q));
            for k in 0..counts[a] {
                // representative test function with k_a = k + 1: the 1D
                // factor only depends on the axis interval and k_a, and the
                // family enumerates axis 0 fastest
                let stride: usize = counts[..a].iter().product();
                let tf = &tests[k * stride];
                debug_assert_eq!(tf.k[a], k + 1);
                for (qi, (x, w)) in axis.nodes.iter().zip(&axis.weights).enumerate() {
                    m[[k, qi]] = w * tf.axis_factor(a, *x, order);
                }
            }
            m
        })
        .collect()
}

const FEATURE_CHUNK: usize = 128;

/// `||L* phi_k||_{L2}` over the subdomain box for every test function, via
/// per-axis Gram pairings of the windowed-sine factors:
/// `int (sum_a c_a prod_i g^(a_i))^2 = sum_ab c_a c_b prod_i int g^(a_i) g^(b_i)`.
fn adjoint_test_norms(
    family: &[crate::testfn::TestFunction],
    counts: &[usize],
    rule: &TensorRule,
    adjoint_terms: &[(Vec<usize>, f64)],
) -> Vec<f64> {
    let d = counts.len();
    // per-axis, per-order node value tables (no quadrature weights)
    let orders_used: Vec<usize> = (0..3).collect();
    let mut tables: Vec<Vec<Array2<f64>>> = Vec::with_capacity(d);
    for a in 0..d {
        let axis = &rule.axes[a];
        let q = axis.nodes.len();
        let stride: usize = counts[..a].iter().product();
        let per_order: Vec<Array2<f64>> = orders_used
            .iter()
            .map(|&o| {
                let mut m = Array2::zeros((counts[a], q));
                for k in 0..counts[a] {
                    let tf = &family[k * stride];
                    for (qi, x) in axis.nodes.iter().enumerate() {
                        m[[k, qi]] = tf.axis_factor(a, *x, o);
                    }
                }
                m
            })
            .collect();
        tables.push(per_order);
    }
    // per-axis Gram entries int g_k^(oa) g_k^(ob) dx for each k
    let gram = |a: usize, oa: usize, ob: usize, k: usize| -> f64 {
        let axis = &rule.axes[a];
        let va = &tables[a][oa];
        let vb = &tables[a][ob];
        axis.weights
            .iter()
            .enumerate()
            .map(|(q, w)| w * va[[k, q]] * vb[[k, q]])
            .sum()
    };
    family
        .iter()
        .enumerate()
        .map(|(idx, _)| {
            // decompose the flat index into per-axis k indices (axis 0 fastest)
            let mut rem = idx;
            let ks: Vec<usize> = (0..d)
                .map(|a| {
                    let k = rem % counts[a];
                    rem /= counts[a];
                    k
                })
                .collect();
            let mut sq = 0.0;
            for (alpha, ca) in adjoint_terms {
                for (beta, cb) in adjoint_terms {
                    let mut prod = ca * cb;
                    for a in 0..d {
                        prod *= gram(a, alpha[a], beta[a], ks[a]);
                    }
                    sq += prod;
                }
            }
            sq.max(0.0).sqrt()
        })
        .collect()
}

/// Assembles the weak-form system: weak rows ordered by (subdomain,
/// multi-index), then boundary rows, then interface value-continuity rows.
/// Requires the indicator partition of unity; overlapping partitions would
/// couple neighboring blocks inside the weak integrals.
pub fn assemble_weak(
    problem: &ProblemSpec,
    dec: &Decomposition,
    bases: &[SubdomainBasis],
    tests: &TestSet,
    rules: &[TensorRule],
    boundary: &[SubdomainBoundaryPoint],
    interface: &[InterfacePoint],
) -> Result<AssembledSystem> {
    let d = dec.dim();
    if bases.len() != dec.len() || rules.len() != dec.len() || tests.per_subdomain.len() != dec.len()
    {
        return Err(Error::Internal("weak assembly inputs disagree on subdomain count".into()));
    }
    if bases.iter().any(|b| b.pou.kind != PouKind::PsiA) {
        return Err(Error::unsupported(
            "weak assembly requires the indicator partition of unity (psi_a)",
        ));
    }
    for (n, family) in tests.per_subdomain.iter().enumerate() {
        if family.iter().any(|tf| tf.sub_box != dec.subdomains[n].bounds) {
            return Err(Error::Internal("test function attached to the wrong subdomain".into()));
        }
    }

    let offsets = block_offsets(bases);
    let m = *offsets.last().unwrap();
    let weak_rows: usize = tests.per_subdomain.iter().map(|f| f.len()).sum();
    let rows = weak_rows + boundary.len() + interface.len();

    let mut matrix = Array2::zeros((rows, m));
    let mut rhs = vec![0.0; rows];
    let mut tags = Vec::with_capacity(rows);

    // --- weak block, subdomain by subdomain ---
    let adjoint_terms: Vec<(Vec<usize>, f64)> = problem.operator.adjoint_terms();
    let mut row0 = 0;
    for n in 0..dec.len() {
        let family = &tests.per_subdomain[n];
        let counts = &tests.counts[n];
        let k_n = family.len();
        let rule = &rules[n];
        let q_dims = rule.orders();

        // rhs: source contracted against the plain (order-0) factors
        let zero_orders = vec![0usize; d];
        let value_factors = test_factor_matrices(family, counts, rule, &zero_orders);
        let mut source_grid = Array2::zeros((rule.len(), 1));
        for i in 0..rule.len() {
            if rule.is_active(i) {
                source_grid[[i, 0]] = (problem.source)(rule.point(i));
            }
        }
        let w1 = tensor_contract(&source_grid, &q_dims, &value_factors);
        for k in 0..k_n {
            rhs[row0 + k] = w1[[k, 0]];
        }

        // matrix block: one contraction per adjoint term, features chunked
        let term_factors: Vec<(f64, Vec<Array2<f64>>)> = adjoint_terms
            .iter()
            .map(|(alpha, c)| (*c, test_factor_matrices(family, counts, rule, alpha)))
            .collect();
        let j_n = bases[n].len();
        let mut j0 = 0;
        while j0 < j_n {
            let j1 = (j0 + FEATURE_CHUNK).min(j_n);
            let values = feature_values_at_nodes(&bases[n], rule, j0..j1);
            for (coef, factors) in &term_factors {
                let contribution = tensor_contract(&values, &q_dims, factors);
                for k in 0..k_n {
                    for (c, j) in (j0..j1).enumerate() {
                        matrix[[row0 + k, offsets[n] + j]] += coef * contribution[[k, c]];
                    }
                }
            }
            j0 = j1;
        }

        // normalize each weak row by the L2 norm of the adjoint-applied test
        // function over the subdomain box. Row magnitudes then stay
        // comparable across test frequencies; without it, rows whose matrix
        // entries decay exponentially in k (smooth basis against oscillatory
        // tests) turn into amplified noise constraints.
        let norms = adjoint_test_norms(family, counts, rule, &adjoint_terms);
        for k in 0..k_n {
            let norm = norms[k];
            if norm > 0.0 {
                for j in 0..j_n {
                    matrix[[row0 + k, offsets[n] + j]] /= norm;
                }
                rhs[row0 + k] /= norm;
            }
        }

        for tf in family {
            tags.push(RowTag::Weak { subdomain: n, multi_index: tf.k.clone() });
        }
        row0 += k_n;
    }

    // --- boundary rows ---
    for bp in boundary {
        let n = bp.subdomain;
        let l = bases[n].subdomain.normalize(&bp.point);
        for j in 0..bases[n].len() {
            matrix[[row0, offsets[n] + j]] = bases[n].feature_value(j, &l);
        }
        rhs[row0] = (problem.dirichlet)(&bp.point);
        tags.push(RowTag::Boundary { subdomain: n, point: bp.point.clone() });
        row0 += 1;
    }

    // --- interface continuity rows (values only, no derivative rows) ---
    for ip in interface {
        let (left, right) = (ip.left_index, ip.right_index);
        let ll = bases[left].subdomain.normalize(&ip.point);
        let lr = bases[right].subdomain.normalize(&ip.point);
        for j in 0..bases[left].len() {
            matrix[[row0, offsets[left] + j]] = -bases[left].feature_value(j, &ll);
        }
        for j in 0..bases[right].len() {
            matrix[[row0, offsets[right] + j]] = bases[right].feature_value(j, &lr);
        }
        rhs[row0] = 0.0;
        tags.push(RowTag::InterfaceValue { left, right, point: ip.point.clone() });
        row0 += 1;
    }

    debug_assert_eq!(row0, rows);
    Ok(AssembledSystem { matrix, rhs, tags, block_offsets: offsets })
}

/// Pairs an arbitrary scalar field against every test function of one
/// subdomain family: returns `(int field * L*phi_k, int source * phi_k)` per
/// function, via the same tensor contractions the weak block uses. With
/// `absolute` set, integrands are replaced by their per-term absolute values,
/// giving an upper bound on the L1 size of each pairing (a denominator for
/// relative residual checks).
pub fn weak_field_pairings(
    field: &(dyn Fn(&[f64]) -> f64 + Sync),
    source: &(dyn Fn(&[f64]) -> f64 + Sync),
    operator: &crate::testfn::LinearOperator,
    family: &[crate::testfn::TestFunction],
    counts: &[usize],
    rule: &TensorRule,
    absolute: bool,
) -> (Vec<f64>, Vec<f64>) {
    let d = counts.len();
    let q_dims = rule.orders();
    let k_n = family.len();
    let post = |v: f64| if absolute { v.abs() } else { v };

    let mut field_grid = Array2::zeros((rule.len(), 1));
    let mut source_grid = Array2::zeros((rule.len(), 1));
    for i in 0..rule.len() {
        if rule.is_active(i) {
            field_grid[[i, 0]] = post(field(rule.point(i)));
            source_grid[[i, 0]] = post(source(rule.point(i)));
        }
    }

    let mut lhs = vec![0.0; k_n];
    for (alpha, c) in operator.adjoint_terms() {
        let mut factors = test_factor_matrices(family, counts, rule, &alpha);
        if absolute {
            for f in &mut factors {
                f.mapv_inplace(f64::abs);
            }
        }
        let contribution = tensor_contract(&field_grid, &q_dims, &factors);
        let scale = if absolute { c.abs() } else { c };
        for k in 0..k_n {
            lhs[k] += scale * contribution[[k, 0]];
        }
    }

    let zero_orders = vec![0usize; d];
    let mut value_factors = test_factor_matrices(family, counts, rule, &zero_orders);
    if absolute {
        for f in &mut value_factors {
            f.mapv_inplace(f64::abs);
        }
    }
    let rhs_col = tensor_contract(&source_grid, &q_dims, &value_factors);
    let rhs: Vec<f64> = (0..k_n).map(|k| rhs_col[[k, 0]]).collect();
    (lhs, rhs)
}

/// Component-wise `beta <= alpha` subsets with multinomial weights, for the
/// Leibniz expansion of derivatives of a partition-of-unity/feature product.
fn leibniz_subsets(alpha: &[usize]) -> Vec<(Vec<usize>, f64)> {
    let mut subsets = vec![(vec![], 1.0)];
    for &a in alpha {
        let mut next = Vec::new();
        for (prefix, coef) in &subsets {
            for b in 0..=a {
                let binom = match (a, b) {
                    (_, 0) => 1.0,
                    (1, 1) => 1.0,
                    (2, 1) => 2.0,
                    (2, 2) => 1.0,
                    _ => unreachable!("orders above 2 rejected earlier"),
                };
                let mut beta = prefix.clone();
                beta.push(b);
                next.push((beta, coef * binom));
            }
        }
        subsets = next;
    }
    subsets
}

/// Operator applied to the blended column `psi_n * phi_nj` at `x`. With the
/// indicator partition the blend weight is treated as the constant 1 on its
/// own block (one-sided derivatives); smooth partitions contribute their own
/// derivatives through the product rule.
fn strong_entry(
    basis: &SubdomainBasis,
    j: usize,
    x: &[f64],
    operator: &crate::testfn::LinearOperator,
) -> Result<f64> {
    let mut acc = 0.0;
    match basis.pou.kind {
        PouKind::PsiA => {
            for (alpha, c) in &operator.terms {
                acc += c * basis.feature_derivative(j, x, alpha)?;
            }
        }
        _ => {
            let l = basis.subdomain.normalize(x);
            for (alpha, c) in &operator.terms {
                for (beta, binom) in leibniz_subsets(alpha) {
                    let gamma: Vec<usize> =
                        alpha.iter().zip(&beta).map(|(a, b)| a - b).collect();
                    let mut pou = basis.pou.eval(&l, &beta)?;
                    // chain rule of the normalization map for the pou factor
                    for (axis, &b) in beta.iter().enumerate() {
                        for _ in 0..b {
                            pou /= basis.subdomain.half_widths[axis];
                        }
                    }
                    if pou == 0.0 {
                        continue;
                    }
                    acc += c * binom * pou * basis.feature_derivative(j, x, &gamma)?;
                }
            }
        }
    }
    Ok(acc)
}

/// Blend weight of subdomain `n` at `x` for boundary rows: 1 for the
/// indicator partition (the caller picked the containing subdomain), the
/// partition value for smooth kinds.
fn boundary_weight(basis: &SubdomainBasis, l: &[f64]) -> f64 {
    match basis.pou.kind {
        PouKind::PsiA => 1.0,
        _ => {
            let zero = vec![0usize; l.len()];
            basis.pou.eval(l, &zero).unwrap_or(0.0)
        }
    }
}

/// Assembles the strong-form collocation system: operator rows, boundary
/// rows, interface value-continuity rows, interface normal-derivative rows.
pub fn assemble_strong(
    problem: &ProblemSpec,
    dec: &Decomposition,
    bases: &[SubdomainBasis],
    interior: &[(Vec<f64>, usize)],
    boundary: &[SubdomainBoundaryPoint],
    interface: &[InterfacePoint],
) -> Result<AssembledSystem> {
    if bases.len() != dec.len() {
        return Err(Error::Internal("strong assembly inputs disagree on subdomain count".into()));
    }
    let offsets = block_offsets(bases);
    let m = *offsets.last().unwrap();
    let rows = interior.len() + boundary.len() + 2 * interface.len();
    let mut matrix = Array2::zeros((rows, m));
    let mut rhs = vec![0.0; rows];
    let mut tags = Vec::with_capacity(rows);
    let overlapping = bases.iter().any(|b| b.pou.kind != PouKind::PsiA);

    let mut row = 0;
    for (point, n) in interior {
        if overlapping {
            // every block whose partition support reaches the point
            for (b, basis) in bases.iter().enumerate() {
                let l = basis.subdomain.normalize(point);
                if l.iter().any(|t| t.abs() > basis.pou.support_radius()) {
                    continue;
                }
                for j in 0..basis.len() {
                    matrix[[row, offsets[b] + j]] = strong_entry(basis, j, point, &problem.operator)?;
                }
            }
        } else {
            for j in 0..bases[*n].len() {
                matrix[[row, offsets[*n] + j]] =
                    strong_entry(&bases[*n], j, point, &problem.operator)?;
            }
        }
        rhs[row] = (problem.source)(point);
        tags.push(RowTag::Strong { subdomain: *n, point: point.clone() });
        row += 1;
    }

    for bp in boundary {
        if overlapping {
            for (b, basis) in bases.iter().enumerate() {
                let l = basis.subdomain.normalize(&bp.point);
                if l.iter().any(|t| t.abs() > basis.pou.support_radius()) {
                    continue;
                }
                let w = boundary_weight(basis, &l);
                if w == 0.0 {
                    continue;
                }
                for j in 0..basis.len() {
                    matrix[[row, offsets[b] + j]] = w * basis.feature_value(j, &l);
                }
            }
        } else {
            let n = bp.subdomain;
            let l = bases[n].subdomain.normalize(&bp.point);
            for j in 0..bases[n].len() {
                matrix[[row, offsets[n] + j]] = bases[n].feature_value(j, &l);
            }
        }
        rhs[row] = (problem.dirichlet)(&bp.point);
        tags.push(RowTag::Boundary { subdomain: bp.subdomain, point: bp.point.clone() });
        row += 1;
    }

    for ip in interface {
        let (left, right) = (ip.left_index, ip.right_index);
        let ll = bases[left].subdomain.normalize(&ip.point);
        let lr = bases[right].subdomain.normalize(&ip.point);
        // value continuity of the local representations
        for j in 0..bases[left].len() {
            matrix[[row, offsets[left] + j]] = -bases[left].feature_value(j, &ll);
        }
        for j in 0..bases[right].len() {
            matrix[[row, offsets[right] + j]] = bases[right].feature_value(j, &lr);
        }
        tags.push(RowTag::InterfaceValue { left, right, point: ip.point.clone() });
        row += 1;
        // first normal derivative, one-sided per block
        let axis = (0..dec.dim())
            .find(|&a| {
                (dec.subdomains[left].bounds.hi[a] - dec.subdomains[right].bounds.lo[a]).abs()
                    <= 1e-12 * dec.bounding.extent(a)
                    && (ip.point[a] - dec.subdomains[left].bounds.hi[a]).abs()
                        <= 1e-12 * dec.bounding.extent(a)
            })
            .ok_or_else(|| Error::Internal("interface point off any shared face".into()))?;
        let mut deriv = vec![0usize; dec.dim()];
        deriv[axis] = 1;
        for j in 0..bases[left].len() {
            matrix[[row, offsets[left] + j]] =
                -bases[left].feature_derivative(j, &ip.point, &deriv)?;
        }
        for j in 0..bases[right].len() {
            matrix[[row, offsets[right] + j]] =
                bases[right].feature_derivative(j, &ip.point, &deriv)?;
        }
        tags.push(RowTag::InterfaceDeriv { left, right, point: ip.point.clone() });
        row += 1;
    }

    debug_assert_eq!(row, rows);
    Ok(AssembledSystem { matrix, rhs, tags, block_offsets: offsets })
}

/// Row rescaling mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMode {
    None,
    MaxAbs,
}

/// Divides each row (and its rhs entry) by the row's largest absolute matrix
/// entry. All-zero rows are left untouched; their indices are returned.
pub fn rescale_rows(mut system: AssembledSystem, mode: RescaleMode) -> (AssembledSystem, Vec<usize>) {
    let mut zero_rows = Vec::new();
    if mode == RescaleMode::None {
        return (system, zero_rows);
    }
    for (i, mut row) in system.matrix.rows_mut().into_iter().enumerate() {
        let max = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if max == 0.0 {
            zero_rows.push(i);
            continue;
        }
        row.mapv_inplace(|v| v / max);
        system.rhs[i] /= max;
    }
    (system, zero_rows)
}

/// Per-category row multipliers applied after rescaling.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CategoryWeights {
    pub weak: f64,
    pub boundary: f64,
    pub interface: f64,
}

impl Default for CategoryWeights {
    fn default() -> Self {
        Self { weak: 1.0, boundary: 1.0, interface: 1.0 }
    }
}

pub fn apply_category_weights(system: &mut AssembledSystem, weights: &CategoryWeights) {
    for (i, tag) in system.tags.iter().enumerate() {
        let w = match tag.category() {
            RowCategory::Weak | RowCategory::Strong => weights.weak,
            RowCategory::Boundary => weights.boundary,
            RowCategory::InterfaceValue | RowCategory::InterfaceDeriv => weights.interface,
        };
        if w != 1.0 {
            system.matrix.row_mut(i).mapv_inplace(|v| v * w);
            system.rhs[i] *= w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{sample_basis, Activation, PartitionOfUnity};
    use crate::geometry::{
        decompose, interface_points, subdomain_boundary_points, subdomain_interior_points, AxisBox,
    };
    use crate::problems::manufactured_poisson2d;
    use crate::quadrature::TensorRule;
    use crate::testfn::build_test_set;
    use approx::assert_relative_eq;

    fn weak_fixture(
        s: usize,
        j: usize,
        k: usize,
    ) -> (crate::problems::ProblemSpec, AssembledSystem) {
        let problem = manufactured_poisson2d();
        let dec = decompose(&problem.domain.bounding, &[s, 1]).unwrap();
        let bases: Vec<_> = dec
            .subdomains
            .iter()
            .enumerate()
            .map(|(n, sub)| {
                sample_basis(sub, n, j, 1.0, 3, Activation::Tanh, PartitionOfUnity::indicator())
                    .unwrap()
            })
            .collect();
        let counts = vec![vec![k, k]; dec.len()];
        let tests = build_test_set(&dec, &counts, 0.05).unwrap();
        let rules: Vec<_> = dec
            .subdomains
            .iter()
            .map(|sub| TensorRule::masked_on(&sub.bounds, &[40, 40], &problem.domain).unwrap())
            .collect();
        let boundary =
            subdomain_boundary_points(&dec, &problem.domain, &[8, 8], &problem.skip_outer_faces)
                .unwrap();
        let interface: Vec<_> = interface_points(&dec, &[8, 8])
            .unwrap()
            .into_iter()
            .filter(|p| problem.domain.contains(&p.point))
            .collect();
        let system =
            assemble_weak(&problem, &dec, &bases, &tests, &rules, &boundary, &interface).unwrap();
        (problem, system)
    }

    #[test]
    fn weak_row_and_column_counts() {
        let (_, system) = weak_fixture(2, 10, 4);
        // 2 subdomains x 16 weak rows, boundary: per subdomain 3 outer faces
        // x 8 points, interface: 8 points
        assert_eq!(system.cols(), 20);
        let weak = system.tags.iter().filter(|t| t.category() == RowCategory::Weak).count();
        let bnd = system.tags.iter().filter(|t| t.category() == RowCategory::Boundary).count();
        let ifc =
            system.tags.iter().filter(|t| t.category() == RowCategory::InterfaceValue).count();
        assert_eq!(weak, 32);
        assert_eq!(bnd, 2 * 3 * 8);
        assert_eq!(ifc, 8);
        assert_eq!(system.rows(), weak + bnd + ifc);
    }

    #[test]
    fn weak_block_is_block_diagonal() {
        let (_, system) = weak_fixture(2, 6, 3);
        for (i, tag) in system.tags.iter().enumerate() {
            if let RowTag::Weak { subdomain, .. } = tag {
                for n in 0..2 {
                    if n != *subdomain {
                        for j in 0..6 {
                            assert_eq!(
                                system.matrix[[i, system.column(n, j)]],
                                0.0,
                                "weak row {i} leaks into block {n}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_sources_give_zero_rhs() {
        let mut problem = manufactured_poisson2d();
        problem.source = std::sync::Arc::new(|_: &[f64]| 0.0);
        problem.dirichlet = std::sync::Arc::new(|_: &[f64]| 0.0);
        let dec = decompose(&problem.domain.bounding, &[2, 1]).unwrap();
        let bases: Vec<_> = dec
            .subdomains
            .iter()
            .enumerate()
            .map(|(n, sub)| {
                sample_basis(sub, n, 5, 1.0, 1, Activation::Tanh, PartitionOfUnity::indicator())
                    .unwrap()
            })
            .collect();
        let tests = build_test_set(&dec, &vec![vec![3, 3]; 2], 0.05).unwrap();
        let rules: Vec<_> = dec
            .subdomains
            .iter()
            .map(|sub| TensorRule::on_box(&sub.bounds, &[30, 30]).unwrap())
            .collect();
        let boundary =
            subdomain_boundary_points(&dec, &problem.domain, &[4, 4], &[]).unwrap();
        let interface = interface_points(&dec, &[4, 4]).unwrap();
        let system =
            assemble_weak(&problem, &dec, &bases, &tests, &rules, &boundary, &interface).unwrap();
        assert!(system.rhs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn weak_rejects_overlapping_pou() {
        let problem = manufactured_poisson2d();
        let dec = decompose(&problem.domain.bounding, &[1, 1]).unwrap();
        let pou = PartitionOfUnity { kind: crate::basis::PouKind::PsiC, alpha: 0.05 };
        let bases =
            vec![sample_basis(&dec.subdomains[0], 0, 4, 1.0, 1, Activation::Tanh, pou).unwrap()];
        let tests = build_test_set(&dec, &[vec![2, 2]], 0.05).unwrap();
        let rules = vec![TensorRule::on_box(&dec.subdomains[0].bounds, &[20, 20]).unwrap()];
        let err = assemble_weak(&problem, &dec, &bases, &tests, &rules, &[], &[]);
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    /// The weak rows must integrate by parts exactly: applying them to the
    /// coefficient vector of a FEATURE-INDEPENDENT smooth field is awkward,
    /// so instead check one row directly against pointwise quadrature of the
    /// same integrand.
    #[test]
    fn weak_entries_match_direct_quadrature() {
        let (problem, system) = weak_fixture(1, 4, 3);
        let dec = decompose(&problem.domain.bounding, &[1, 1]).unwrap();
        let bases: Vec<_> = dec
            .subdomains
            .iter()
            .enumerate()
            .map(|(n, sub)| {
                sample_basis(sub, n, 4, 1.0, 3, Activation::Tanh, PartitionOfUnity::indicator())
                    .unwrap()
            })
            .collect();
        let tests = build_test_set(&dec, &[vec![3, 3]], 0.05).unwrap();
        let rule = TensorRule::on_box(&dec.subdomains[0].bounds, &[40, 40]).unwrap();
        // row for multi-index (2, 1) is index 1 (first axis fastest); rows
        // come out normalized by ||L* phi_k||
        let tf = &tests.per_subdomain[0][1];
        assert_eq!(tf.k, vec![2, 1]);
        let norm = rule
            .integrate(|x| problem.operator.apply_adjoint(tf, x).unwrap().powi(2))
            .sqrt();
        for j in 0..4 {
            let direct = rule.integrate(|x| {
                let l = bases[0].subdomain.normalize(x);
                bases[0].feature_value(j, &l) * problem.operator.apply_adjoint(tf, x).unwrap()
            });
            assert_relative_eq!(
                system.matrix[[1, j]],
                direct / norm,
                max_relative = 1e-10,
                epsilon = 1e-12
            );
        }
        let direct_rhs =
            rule.integrate(|x| (problem.source)(x) * tf.eval(x, &[0, 0]).unwrap());
        assert_relative_eq!(
            system.rhs[1],
            direct_rhs / norm,
            max_relative = 1e-10,
            epsilon = 1e-12
        );
    }

    #[test]
    fn strong_1d_interface_rows() {
        // 1D problem split in two: exactly one value row and one derivative
        // row at the interface
        let mut problem = manufactured_poisson2d();
        problem.domain = crate::geometry::Domain::new(AxisBox::new(vec![0.0], vec![1.0]).unwrap());
        problem.operator = crate::testfn::LinearOperator::laplacian(1);
        problem.source = std::sync::Arc::new(|_: &[f64]| 1.0);
        problem.dirichlet = std::sync::Arc::new(|_: &[f64]| 0.0);
        let dec = decompose(&problem.domain.bounding, &[2]).unwrap();
        let bases: Vec<_> = dec
            .subdomains
            .iter()
            .enumerate()
            .map(|(n, sub)| {
                sample_basis(sub, n, 3, 1.0, 5, Activation::Tanh, PartitionOfUnity::indicator())
                    .unwrap()
            })
            .collect();
        let interior = subdomain_interior_points(&dec, &problem.domain, &[4]).unwrap();
        let boundary = subdomain_boundary_points(&dec, &problem.domain, &[4], &[]).unwrap();
        let interface = interface_points(&dec, &[4]).unwrap();
        let system =
            assemble_strong(&problem, &dec, &bases, &interior, &boundary, &interface).unwrap();
        let a3 = system
            .tags
            .iter()
            .filter(|t| t.category() == RowCategory::InterfaceValue)
            .count();
        let a4 = system
            .tags
            .iter()
            .filter(|t| t.category() == RowCategory::InterfaceDeriv)
            .count();
        assert_eq!((a3, a4), (1, 1));
        // strong rows carry f on the rhs
        for (i, tag) in system.tags.iter().enumerate() {
            if tag.category() == RowCategory::Strong {
                assert_eq!(system.rhs[i], 1.0);
            }
        }
    }

    #[test]
    fn rescale_examples() {
        let matrix = ndarray::array![[2.0, -4.0], [0.0, 0.0]];
        let system = AssembledSystem {
            matrix,
            rhs: vec![8.0, 3.0],
            tags: vec![
                RowTag::Strong { subdomain: 0, point: vec![0.0] },
                RowTag::Strong { subdomain: 0, point: vec![1.0] },
            ],
            block_offsets: vec![0, 2],
        };
        let (scaled, zero_rows) = rescale_rows(system.clone(), RescaleMode::MaxAbs);
        assert_eq!(scaled.matrix[[0, 0]], 0.5);
        assert_eq!(scaled.matrix[[0, 1]], -1.0);
        assert_eq!(scaled.rhs[0], 2.0);
        // all-zero row untouched and reported
        assert_eq!(scaled.rhs[1], 3.0);
        assert_eq!(zero_rows, vec![1]);

        let (unchanged, _) = rescale_rows(system.clone(), RescaleMode::None);
        assert_eq!(unchanged.matrix, system.matrix);
        assert_eq!(unchanged.rhs, system.rhs);
    }

    #[test]
    fn rescale_preserves_null_residual() {
        // consistent system: rhs = A u; rescaling keeps the residual at zero
        let (_, system) = weak_fixture(1, 5, 3);
        let u: Vec<f64> = (0..5).map(|i| (i as f64 - 2.0) * 0.3).collect();
        let rhs: Vec<f64> = system
            .matrix
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&u).map(|(a, b)| a * b).sum())
            .collect();
        let consistent = AssembledSystem { rhs, ..system };
        let (scaled, _) = rescale_rows(consistent, RescaleMode::MaxAbs);
        for (i, row) in scaled.matrix.rows().into_iter().enumerate() {
            let r: f64 = row.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() - scaled.rhs[i];
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn binary_dump_layout() {
        let (_, system) = weak_fixture(1, 3, 2);
        let mut buf = Vec::new();
        system.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"WRFM");
        let rows = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        assert_eq!(rows, system.rows());
        assert_eq!(cols, system.cols());
        assert_eq!(buf.len(), 16 + 8 * rows * cols + 8 * rows + rows);
        // first matrix entry round-trips
        let v = f64::from_le_bytes(buf[16..24].try_into().unwrap());
        assert_eq!(v, system.matrix[[0, 0]]);
        // category byte of the first row is "weak"
        assert_eq!(buf[16 + 8 * rows * cols + 8 * rows], RowCategory::Weak.code());
    }

    #[test]
    fn tensor_contract_matches_naive_sum() {
        // 2D: contract random values against small factor matrices
        let q = [4usize, 3];
        let jc = 2;
        let n: usize = q.iter().product();
        let values = Array2::from_shape_fn((n, jc), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let f0 = Array2::from_shape_fn((2, q[0]), |(k, i)| (k + 1) as f64 * 0.5 + i as f64);
        let f1 = Array2::from_shape_fn((3, q[1]), |(k, i)| (k as f64 - i as f64) * 0.25);
        let out = tensor_contract(&values, &q, &[f0.clone(), f1.clone()]);
        assert_eq!(out.dim(), (6, jc));
        for k0 in 0..2 {
            for k1 in 0..3 {
                for j in 0..jc {
                    let mut acc = 0.0;
                    for i0 in 0..q[0] {
                        for i1 in 0..q[1] {
                            // node flat order: last axis fastest
                            let node = i0 * q[1] + i1;
                            acc += f0[[k0, i0]] * f1[[k1, i1]] * values[[node, j]];
                        }
                    }
                    let row = k0 + 2 * k1;
                    assert_relative_eq!(out[[row, j]], acc, max_relative = 1e-12, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn tensor_contract_3d_shape_and_order() {
        let q = [3usize, 2, 2];
        let n: usize = q.iter().product();
        let values = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let id0 = Array2::from_shape_fn((3, 3), |(a, b)| (a == b) as usize as f64);
        let id1 = Array2::from_shape_fn((2, 2), |(a, b)| (a == b) as usize as f64);
        let out = tensor_contract(&values, &q, &[id0, id1.clone(), id1]);
        // identity factors: out[row] = values at node with (k0,k1,k2), rows
        // ordered k0 fastest while nodes are flat with the LAST axis fastest
        for k0 in 0..3 {
            for k1 in 0..2 {
                for k2 in 0..2 {
                    let row = k0 + 3 * (k1 + 2 * k2);
                    let node = (k0 * 2 + k1) * 2 + k2;
                    assert_eq!(out[[row, 0]], node as f64);
                }
            }
        }
    }
}
