//! Random feature functions, partition-of-unity blending and evaluation of
//! the assembled global approximant.
//!
//! Each subdomain carries `J` frozen features `sigma(k . l(x) + b)` acting on
//! normalized coordinates; the global solution blends the per-subdomain sums
//! with a partition of unity. Only the linear output coefficients are ever
//! solved for.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Decomposition, Subdomain};

/// Nonlinear activation with closed-form derivatives up to second order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sin,
    Cos,
}

impl Activation {
    /// Value and the requested derivative order at `z`.
    pub fn eval(&self, z: f64, order: usize) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                match order {
                    0 => t,
                    1 => 1.0 - t * t,
                    2 => -2.0 * t * (1.0 - t * t),
                    _ => panic!("activation derivative order {order} > 2"),
                }
            }
            Activation::Sin => match order {
                0 => z.sin(),
                1 => z.cos(),
                2 => -z.sin(),
                _ => panic!("activation derivative order {order} > 2"),
            },
            Activation::Cos => match order {
                0 => z.cos(),
                1 => -z.sin(),
                2 => -z.cos(),
                _ => panic!("activation derivative order {order} > 2"),
            },
        }
    }
}

/// Frozen direction weights and bias of one feature, acting on normalized
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFeature {
    pub k: Vec<f64>,
    pub b: f64,
}

/// Partition-of-unity family. `PsiA` is the sharp indicator of `[-1,1]^d`,
/// `PsiB` a C^1 trigonometric blend, `PsiC` a C-infinity sigmoid product with
/// sharpness `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PouKind {
    PsiA,
    PsiB,
    PsiC,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    pub kind: PouKind,
    pub alpha: f64,
}

impl PartitionOfUnity {
    pub fn indicator() -> Self {
        Self { kind: PouKind::PsiA, alpha: 0.0 }
    }

    /// 1D value or derivative at normalized coordinate `t`.
    pub fn eval_1d(&self, t: f64, order: usize) -> Result<f64> {
        match self.kind {
            PouKind::PsiA => {
                if order > 0 {
                    return Err(Error::unsupported("psi_a is discontinuous: no derivatives"));
                }
                Ok(if (-1.0..=1.0).contains(&t) { 1.0 } else { 0.0 })
            }
            PouKind::PsiB => Ok(psi_b(t, order)),
            PouKind::PsiC => Ok(psi_c(t, self.alpha, order)),
        }
    }

    /// Tensor-product value/derivative; `deriv[i]` is the order along axis `i`.
    pub fn eval(&self, l: &[f64], deriv: &[usize]) -> Result<f64> {
        if deriv.iter().sum::<usize>() > 2 {
            return Err(Error::unsupported("partition-of-unity derivative order > 2"));
        }
        let mut prod = 1.0;
        for (t, o) in l.iter().zip(deriv) {
            prod *= self.eval_1d(*t, *o)?;
            if prod == 0.0 && self.kind == PouKind::PsiA {
                return Ok(0.0);
            }
        }
        Ok(prod)
    }

    /// Support of the 1D profile in normalized coordinates; evaluation
    /// outside `[-s, s]` is identically zero (psi_c never truncates).
    pub fn support_radius(&self) -> f64 {
        match self.kind {
            PouKind::PsiA => 1.0,
            PouKind::PsiB => 1.25,
            PouKind::PsiC => f64::INFINITY,
        }
    }
}

fn psi_b(t: f64, order: usize) -> f64 {
    use std::f64::consts::PI;
    let abs = t.abs();
    if abs <= 0.75 {
        if order == 0 { 1.0 } else { 0.0 }
    } else if abs <= 1.25 {
        // left ramp (1 + sin 2 pi t)/2, right ramp (1 - sin 2 pi t)/2
        let sign = if t < 0.0 { 1.0 } else { -1.0 };
        match order {
            0 => 0.5 * (1.0 + sign * (2.0 * PI * t).sin()),
            1 => sign * PI * (2.0 * PI * t).cos(),
            2 => -sign * 2.0 * PI * PI * (2.0 * PI * t).sin(),
            _ => panic!("pou derivative order {order} > 2"),
        }
    } else {
        0.0
    }
}

fn sigmoid(z: f64) -> f64 {
    // numerically stable on both tails
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn psi_c(t: f64, alpha: f64, order: usize) -> f64 {
    // s((t+1)/alpha) * s((1-t)/alpha)
    let a = sigmoid((t + 1.0) / alpha);
    let b = sigmoid((1.0 - t) / alpha);
    let da = a * (1.0 - a) / alpha;
    let db = -b * (1.0 - b) / alpha;
    match order {
        0 => a * b,
        1 => da * b + a * db,
        2 => {
            let dda = (1.0 - 2.0 * a) * da / alpha;
            let ddb = -(1.0 - 2.0 * b) * db / alpha;
            dda * b + 2.0 * da * db + a * ddb
        }
        _ => panic!("pou derivative order {order} > 2"),
    }
}

/// Frozen feature set of one subdomain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainBasis {
    pub subdomain: Subdomain,
    pub features: Vec<RandomFeature>,
    pub activation: Activation,
    pub pou: PartitionOfUnity,
}

impl SubdomainBasis {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Pre-activation `k . l + b` for feature `j` at normalized coordinates.
    fn pre_activation(&self, j: usize, l: &[f64]) -> f64 {
        let f = &self.features[j];
        f.k.iter().zip(l).map(|(k, t)| k * t).sum::<f64>() + f.b
    }

    /// Feature value at normalized coordinates (no domain clamping).
    pub fn feature_value(&self, j: usize, l: &[f64]) -> f64 {
        self.activation.eval(self.pre_activation(j, l), 0)
    }

    /// Partial derivative of feature `j` with respect to PHYSICAL coordinates,
    /// `deriv[i]` giving the order along axis `i`, total order at most 2.
    /// The chain rule through the normalization map contributes
    /// `(1/r_i)^{deriv_i}` per axis.
    pub fn feature_derivative(&self, j: usize, x: &[f64], deriv: &[usize]) -> Result<f64> {
        let total: usize = deriv.iter().sum();
        if total > 2 {
            return Err(Error::unsupported("feature derivative order > 2"));
        }
        let l = self.subdomain.normalize(x);
        let z = self.pre_activation(j, &l);
        let mut scale = 1.0;
        for (axis, &o) in deriv.iter().enumerate() {
            for _ in 0..o {
                scale *= self.features[j].k[axis] / self.subdomain.half_widths[axis];
            }
        }
        Ok(self.activation.eval(z, total) * scale)
    }

    /// Like [`feature_derivative`](Self::feature_derivative) for points given
    /// in normalized coordinates (still differentiating in physical ones).
    pub fn feature_derivative_normalized(&self, j: usize, l: &[f64], deriv: &[usize]) -> f64 {
        let total: usize = deriv.iter().sum();
        debug_assert!(total <= 2);
        let z = self.pre_activation(j, l);
        let mut scale = 1.0;
        for (axis, &o) in deriv.iter().enumerate() {
            for _ in 0..o {
                scale *= self.features[j].k[axis] / self.subdomain.half_widths[axis];
            }
        }
        self.activation.eval(z, total) * scale
    }
}

/// Draws the `J` features of subdomain `subdomain_index`. Every feature gets
/// its own counter-based stream keyed by `(seed, subdomain, feature)`, so the
/// result is identical however sampling is scheduled.
pub fn sample_basis(
    sub: &Subdomain,
    subdomain_index: usize,
    feature_count: usize,
    weight_range: f64,
    seed: u64,
    activation: Activation,
    pou: PartitionOfUnity,
) -> Result<SubdomainBasis> {
    if feature_count == 0 {
        return Err(Error::invalid_argument("feature count must be at least 1"));
    }
    if !(weight_range > 0.0) {
        return Err(Error::invalid_argument("weight range R must be positive"));
    }
    let d = sub.dim();
    let features = (0..feature_count)
        .map(|j| {
            let mut rng = feature_rng(seed, subdomain_index, j);
            let k = (0..d).map(|_| uniform_symmetric(&mut rng, weight_range)).collect();
            let b = uniform_symmetric(&mut rng, weight_range);
            RandomFeature { k, b }
        })
        .collect();
    Ok(SubdomainBasis { subdomain: sub.clone(), features, activation, pou })
}

fn feature_rng(seed: u64, subdomain: usize, feature: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((subdomain as u64) << 32) ^ feature as u64);
    rng
}

fn uniform_symmetric(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    rng.random_range(-r..=r)
}

/// Decomposition, per-subdomain bases and the solved coefficient vector.
/// Coefficients are laid out block-wise: all of subdomain 0's features first.
#[derive(Debug, Clone)]
pub struct GlobalModel {
    pub decomposition: Decomposition,
    pub bases: Vec<SubdomainBasis>,
    pub coefficients: Vec<f64>,
}

impl GlobalModel {
    pub fn new(
        decomposition: Decomposition,
        bases: Vec<SubdomainBasis>,
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        if bases.len() != decomposition.len() {
            return Err(Error::invalid_argument("one basis per subdomain required"));
        }
        let m: usize = bases.iter().map(|b| b.len()).sum();
        if coefficients.len() != m {
            return Err(Error::invalid_argument(format!(
                "coefficient vector has {} entries, basis has {m} columns",
                coefficients.len()
            )));
        }
        Ok(Self { decomposition, bases, coefficients })
    }

    /// Total number of coefficients.
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// First coefficient index of subdomain `n`'s block.
    pub fn block_offset(&self, n: usize) -> usize {
        self.bases[..n].iter().map(|b| b.len()).sum()
    }

    /// Local sum `sum_j u_nj phi_nj(l_n(x))` of one subdomain.
    fn local_value(&self, n: usize, l: &[f64]) -> f64 {
        let basis = &self.bases[n];
        let offset = self.block_offset(n);
        (0..basis.len())
            .map(|j| self.coefficients[offset + j] * basis.feature_value(j, l))
            .sum()
    }

    /// Global approximant at `x`. With the indicator partition of unity only
    /// the containing subdomain contributes (ties resolve to the lowest
    /// index); smooth partitions blend every subdomain whose support reaches
    /// `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let pou = self.bases.first().map(|b| b.pou).unwrap_or(PartitionOfUnity::indicator());
        match pou.kind {
            PouKind::PsiA => match self.decomposition.containing_subdomain(x) {
                Some(n) => self.local_value(n, &self.bases[n].subdomain.normalize(x)),
                None => 0.0,
            },
            _ => {
                let radius = pou.support_radius();
                let mut acc = 0.0;
                for n in 0..self.bases.len() {
                    let l = self.bases[n].subdomain.normalize(x);
                    if l.iter().any(|t| t.abs() > radius) {
                        continue;
                    }
                    let zero = vec![0usize; l.len()];
                    let w = pou.eval(&l, &zero).expect("order-0 pou eval");
                    if w != 0.0 {
                        acc += w * self.local_value(n, &l);
                    }
                }
                acc
            }
        }
    }
}
