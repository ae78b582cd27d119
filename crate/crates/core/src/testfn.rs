//! Windowed-sine test functions and the adjoint action of constant-coefficient
//! differential operators on them.
//!
//! Per subdomain the family is the tensor product
//! `prod_i w_i(x_i) * sin(pi k_i (x_i - lo_i) / L_i)` for `k_i = 1..K_i`; the
//! window is a smooth sigmoid product that drives the factor (and its first
//! derivatives) to effectively zero on the subdomain faces, giving compact
//! support in the weak-form sense.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Decomposition};

/// Widening applied to the reference coordinate so the sigmoid transitions
/// sit strictly inside the interval. The window value at the interval
/// endpoints is then about `exp(-STRETCH_PER_ALPHA)`; the raw sigmoid-product
/// profile would be 1/2 there, which is far too large for the weak-form
/// boundary terms to vanish.
const STRETCH_PER_ALPHA: f64 = 18.0;

/// Smooth window on `[x0, x1]`: the C-infinity sigmoid-product profile
/// evaluated on a stretched reference coordinate. The midpoint maps to the
/// profile's center exactly; the endpoints land in its far tail (value below
/// 1e-6 for the default `alpha`), giving effective compact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFunction {
    pub x0: f64,
    pub x1: f64,
    pub alpha: f64,
}

impl WindowFunction {
    pub fn new(x0: f64, x1: f64, alpha: f64) -> Self {
        Self { x0, x1, alpha }
    }

    fn stable_sigmoid(z: f64) -> f64 {
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }

    /// Value or derivative (order 0..=2) with respect to the physical
    /// coordinate.
    pub fn eval(&self, x: f64, order: usize) -> f64 {
        let len = self.x1 - self.x0;
        let stretch = 1.0 + STRETCH_PER_ALPHA * self.alpha;
        let t = stretch * (2.0 * x - self.x0 - self.x1) / len;
        let scale = stretch * 2.0 / len; // dt/dx
        let a = Self::stable_sigmoid((t + 1.0) / self.alpha);
        let b = Self::stable_sigmoid((1.0 - t) / self.alpha);
        let da = a * (1.0 - a) / self.alpha;
        let db = -b * (1.0 - b) / self.alpha;
        match order {
            0 => a * b,
            1 => (da * b + a * db) * scale,
            2 => {
                let dda = (1.0 - 2.0 * a) * da / self.alpha;
                let ddb = -(1.0 - 2.0 * b) * db / self.alpha;
                (dda * b + 2.0 * da * db + a * ddb) * scale * scale
            }
            _ => panic!("window derivative order {order} > 2"),
        }
    }
}

/// Separable windowed-sine test function with per-axis frequency multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub sub_box: AxisBox,
    /// Per-axis frequencies, all at least 1.
    pub k: Vec<usize>,
    pub windows: Vec<WindowFunction>,
}

impl TestFunction {
    pub fn new(sub_box: AxisBox, k: Vec<usize>, alpha: f64) -> Self {
        let windows = (0..sub_box.dim())
            .map(|a| WindowFunction::new(sub_box.lo[a], sub_box.hi[a], alpha))
            .collect();
        Self { sub_box, k, windows }
    }

    pub fn dim(&self) -> usize {
        self.sub_box.dim()
    }

    /// One 1D factor `g(x) = w(x) sin(pi k (x - lo)/L)` or its derivative.
    /// Product rule: `g' = w's + ws'`, `g'' = w''s + 2w's' + ws''`.
    pub fn axis_factor(&self, axis: usize, x: f64, order: usize) -> f64 {
        let lo = self.sub_box.lo[axis];
        let len = self.sub_box.extent(axis);
        let omega = std::f64::consts::PI * self.k[axis] as f64 / len;
        let phase = omega * (x - lo);
        let w = &self.windows[axis];
        match order {
            0 => w.eval(x, 0) * phase.sin(),
            1 => w.eval(x, 1) * phase.sin() + w.eval(x, 0) * omega * phase.cos(),
            2 => {
                w.eval(x, 2) * phase.sin() + 2.0 * w.eval(x, 1) * omega * phase.cos()
                    - w.eval(x, 0) * omega * omega * phase.sin()
            }
            _ => panic!("test function derivative order {order} > 2"),
        }
    }

    /// Partial derivative `prod_i g_i^{(deriv_i)}(x_i)`; per-axis order at
    /// most 2.
    pub fn eval(&self, x: &[f64], deriv: &[usize]) -> Result<f64> {
        if deriv.iter().any(|&o| o > 2) {
            return Err(Error::unsupported("test function per-axis derivative order > 2"));
        }
        Ok((0..self.dim()).map(|a| self.axis_factor(a, x[a], deriv[a])).product())
    }
}

/// Constant-coefficient linear differential operator `sum_a c_a d^a` with
/// every multi-index of total order at most 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOperator {
    /// `(multi_index, coefficient)` pairs.
    pub terms: Vec<(Vec<usize>, f64)>,
}

impl LinearOperator {
    pub fn new(terms: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid_argument("operator needs at least one term"));
        }
        let d = terms[0].0.len();
        for (alpha, _) in &terms {
            if alpha.len() != d {
                return Err(Error::invalid_argument("operator term dimension mismatch"));
            }
            if alpha.iter().sum::<usize>() > 2 {
                return Err(Error::unsupported("operator order above 2"));
            }
        }
        Ok(Self { terms })
    }

    /// Laplacian in `d` dimensions.
    pub fn laplacian(d: usize) -> Self {
        let terms = (0..d)
            .map(|a| {
                let mut alpha = vec![0usize; d];
                alpha[a] = 2;
                (alpha, 1.0)
            })
            .collect();
        Self { terms }
    }

    /// Laplacian plus `lambda` times the identity.
    pub fn helmholtz(d: usize, lambda: f64) -> Self {
        let mut op = Self::laplacian(d);
        op.terms.push((vec![0usize; d], lambda));
        op
    }

    /// Laplacian in the first `d-1` axes minus `a^2` times the first
    /// derivative along the last axis (space-time heat operator).
    pub fn heat(d: usize, a: f64) -> Self {
        let mut terms: Vec<(Vec<usize>, f64)> = (0..d - 1)
            .map(|ax| {
                let mut alpha = vec![0usize; d];
                alpha[ax] = 2;
                (alpha, 1.0)
            })
            .collect();
        let mut time = vec![0usize; d];
        time[d - 1] = 1;
        terms.push((time, -a * a));
        Self { terms }
    }

    pub fn dim(&self) -> usize {
        self.terms[0].0.len()
    }

    /// Adjoint coefficients `(-1)^{|a|} c_a` (constant coefficients only).
    pub fn adjoint_terms(&self) -> Vec<(Vec<usize>, f64)> {
        self.terms
            .iter()
            .map(|(alpha, c)| {
                let order: usize = alpha.iter().sum();
                let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                (alpha.clone(), sign * c)
            })
            .collect()
    }

    /// Applies the operator itself to a test function at `x`.
    pub fn apply(&self, tf: &TestFunction, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (alpha, c) in &self.terms {
            acc += c * tf.eval(x, alpha)?;
        }
        Ok(acc)
    }

    /// Applies the adjoint `sum_a (-1)^{|a|} c_a d^a` to a test function at
    /// `x`. This is the operator the weak rows pair the basis against.
    pub fn apply_adjoint(&self, tf: &TestFunction, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (alpha, c) in self.adjoint_terms() {
            acc += c * tf.eval(x, &alpha)?;
        }
        Ok(acc)
    }
}

/// Per-subdomain families of test functions in lexicographic multi-index
/// order with the first axis fastest.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub per_subdomain: Vec<Vec<TestFunction>>,
    pub counts: Vec<Vec<usize>>,
}

impl TestSet {
    /// Total number of test functions across subdomains.
    pub fn len(&self) -> usize {
        self.per_subdomain.iter().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.per_subdomain.iter().all(|v| v.is_empty())
    }
}

/// Builds the tensor-product family `k_i = 1..=counts[n][i]` on every
/// subdomain of `dec`.
pub fn build_test_set(
    dec: &Decomposition,
    per_axis_counts: &[Vec<usize>],
    alpha: f64,
) -> Result<TestSet> {
    let d = dec.dim();
    if per_axis_counts.len() != dec.len() {
        return Err(Error::invalid_argument("one per-axis count tuple per subdomain required"));
    }
    let mut per_subdomain = Vec::with_capacity(dec.len());
    for (sub, counts) in dec.subdomains.iter().zip(per_axis_counts) {
        if counts.len() != d {
            return Err(Error::invalid_argument("test counts dimension mismatch"));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid_argument("test counts must be positive"));
        }
        let total: usize = counts.iter().product();
        let mut family = Vec::with_capacity(total);
        let mut k = vec![1usize; d];
        for _ in 0..total {
            family.push(TestFunction::new(sub.bounds.clone(), k.clone(), alpha));
            for a in 0..d {
                k[a] += 1;
                if k[a] <= counts[a] {
                    break;
                }
                k[a] = 1;
            }
        }
        per_subdomain.push(family);
    }
    Ok(TestSet { per_subdomain, counts: per_axis_counts.to_vec() })
}
