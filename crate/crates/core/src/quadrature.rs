//! Tensor-product Gauss-Legendre quadrature with node masking for domains
//! with exclusions.

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Domain};

/// Nodes and weights of one axis of a tensor rule, mapped to a physical
/// interval.
#[derive(Debug, Clone)]
pub struct AxisRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[lo, hi]`.
///
/// Roots of the Legendre polynomial are found by Newton iteration to 1e-15;
/// an order-`q` rule integrates polynomials of degree `2q - 1` exactly.
pub fn gauss_nodes(q: usize, lo: f64, hi: f64) -> Result<AxisRule> {
    if q < 1 || q > 256 {
        return Err(Error::invalid_argument(format!("quadrature order {q} out of range 1..=256")));
    }
    let n = q as f64;
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    // roots come in +/- pairs; solve the upper half
    for i in 0..(q + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(q, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(q, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }
    // affine map onto [lo, hi]
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    for i in 0..q {
        nodes[i] = mid + half * nodes[i];
        weights[i] *= half;
    }
    Ok(AxisRule { nodes, weights })
}

/// P_q(x) and its derivative via the three-term recurrence.
fn legendre_with_derivative(q: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=q {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = q as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Tensor-product rule over a box. Flattened node order is row-major with the
/// last axis fastest; summation in [`TensorRule::integrate`] follows that
/// fixed order, so results do not depend on caller-side parallelism.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub axes: Vec<AxisRule>,
    /// Flattened points, `len x dim`, row `i` = coordinates of node `i`.
    points: Vec<f64>,
    weights: Vec<f64>,
    /// `true` where the node lies in the domain (not strictly inside an
    /// exclusion). Trivially all-true for plain boxes.
    mask: Vec<bool>,
    dim: usize,
}

/// One Gauss rule per panel between consecutive breakpoints, with the order
/// budget split proportionally to panel width.
fn composite_axis(order: usize, lo: f64, hi: f64, breaks: &mut Vec<f64>) -> Result<AxisRule> {
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * (hi - lo));
    if breaks.is_empty() {
        return gauss_nodes(order, lo, hi);
    }
    let mut edges = vec![lo];
    edges.extend_from_slice(breaks);
    edges.push(hi);
    let width = hi - lo;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in edges.windows(2) {
        let w = pair[1] - pair[0];
        let q = ((order as f64 * w / width).ceil() as usize).clamp(5, 256);
        let panel = gauss_nodes(q, pair[0], pair[1])?;
        nodes.extend(panel.nodes);
        weights.extend(panel.weights);
    }
    Ok(AxisRule { nodes, weights })
}

impl TensorRule {
    /// Rule over `bounds` with `orders[i]` points along axis `i`.
    pub fn on_box(bounds: &AxisBox, orders: &[usize]) -> Result<Self> {
        let d = bounds.dim();
        if orders.len() != d {
            return Err(Error::invalid_argument("quadrature orders dimension mismatch"));
        }
        let axes: Vec<AxisRule> = (0..d)
            .map(|a| gauss_nodes(orders[a], bounds.lo[a], bounds.hi[a]))
            .collect::<Result<_>>()?;
        Ok(Self::from_axes(axes))
    }

    /// Rule over `bounds` with nodes strictly inside an exclusion of `dom`
    /// masked out.
    ///
    /// Axes are split into panels at the edges of box exclusions, so no panel
    /// straddles a hole boundary and the masking of rectangular holes is
    /// exact. Disk exclusions keep plain node masking with its O(1/Q) error
    /// near the curved boundary.
    pub fn masked_on(bounds: &AxisBox, orders: &[usize], dom: &Domain) -> Result<Self> {
        let d = bounds.dim();
        if orders.len() != d {
            return Err(Error::invalid_argument("quadrature orders dimension mismatch"));
        }
        let axes: Vec<AxisRule> = (0..d)
            .map(|a| {
                let mut breaks: Vec<f64> = Vec::new();
                for excl in &dom.exclusions {
                    if let crate::geometry::Exclusion::Box { lo, hi } = excl {
                        for edge in [lo[a], hi[a]] {
                            if edge > bounds.lo[a] && edge < bounds.hi[a] {
                                breaks.push(edge);
                            }
                        }
                    }
                }
                composite_axis(orders[a], bounds.lo[a], bounds.hi[a], &mut breaks)
            })
            .collect::<Result<_>>()?;
        let mut rule = Self::from_axes(axes);
        if !dom.exclusions.is_empty() {
            for i in 0..rule.len() {
                if dom.excluded(rule.point(i)) {
                    rule.mask[i] = false;
                }
            }
        }
        Ok(rule)
    }

    fn from_axes(axes: Vec<AxisRule>) -> Self {
        let d = axes.len();
        let total: usize = axes.iter().map(|r| r.nodes.len()).product();
        let mut points = Vec::with_capacity(total * d);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let mut w = 1.0;
            for a in 0..d {
                points.push(axes[a].nodes[idx[a]]);
                w *= axes[a].weights[idx[a]];
            }
            weights.push(w);
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < axes[a].nodes.len() {
                    break;
                }
                idx[a] = 0;
            }
        }
        let mask = vec![true; total];
        Self { axes, points, weights, mask, dim: d }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn orders(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.nodes.len()).collect()
    }

    /// Sum of `weight * f(node)` over unmasked nodes, in fixed node order.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            if self.mask[i] {
                acc += self.weights[i] * f(self.point(i));
            }
        }
        acc
    }

    /// Test hook: perturbs one quadrature weight. Used by the validation
    /// suites to prove they catch broken rules.
    pub fn corrupt_weight_for_test(&mut self) {
        if let Some(w) = self.weights.get_mut(0) {
            *w *= 1.001;
        }
    }
}
