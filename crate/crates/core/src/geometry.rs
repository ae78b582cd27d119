//! Domains, subdomain decompositions and point sampling.
//!
//! A [`Domain`] is an axis-aligned bounding box with optional circular or
//! rectangular exclusions cut out of it. The solver splits the bounding box
//! into a tensor grid of [`Subdomain`]s; each subdomain carries the affine
//! map that sends it onto the reference cube `[-1,1]^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in 1, 2 or 3 dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::invalid_argument("box lo/hi dimension mismatch"));
        }
        if lo.is_empty() || lo.len() > 3 {
            return Err(Error::invalid_argument("box dimension must be 1, 2 or 3"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::invalid_argument("box requires lo < hi on every axis"));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.extent(i)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi)
    }

    /// Strict-interior membership (used for exclusion tests).
    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(xi, (lo, hi))| *xi > *lo && *xi < *hi)
    }
}

/// A region removed from the bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exclusion {
    Disk { center: [f64; 2], radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Exclusion {
    /// Strict membership: points exactly on the exclusion boundary are not
    /// considered excluded, so they remain usable as boundary collocation
    /// points.
    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        match self {
            Exclusion::Disk { center, radius } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                dx * dx + dy * dy < radius * radius
            }
            Exclusion::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(xi, (l, h))| *xi > *l && *xi < *h),
        }
    }
}

/// Bounding box minus a set of exclusions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub bounding: AxisBox,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
}

impl Domain {
    pub fn new(bounding: AxisBox) -> Self {
        Self { bounding, exclusions: Vec::new() }
    }

    pub fn with_exclusions(bounding: AxisBox, exclusions: Vec<Exclusion>) -> Self {
        Self { bounding, exclusions }
    }

    pub fn dim(&self) -> usize {
        self.bounding.dim()
    }

    /// True iff `x` lies in the bounding box and strictly inside no exclusion.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounding.contains(x) && !self.excluded(x)
    }

    /// True iff `x` lies strictly inside some exclusion.
    pub fn excluded(&self, x: &[f64]) -> bool {
        self.exclusions.iter().any(|e| e.contains_strictly(x))
    }
}

/// One cell of a tensor decomposition together with its normalization map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    pub bounds: AxisBox,
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

impl Subdomain {
    pub fn from_box(bounds: AxisBox) -> Self {
        let center = bounds.center();
        let half_widths = (0..bounds.dim()).map(|i| 0.5 * bounds.extent(i)).collect();
        Self { bounds, center, half_widths }
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Maps the subdomain onto `[-1,1]^d`, component-wise `(x_i - c_i) / r_i`.
    /// No clamping: out-of-box inputs map to values outside `[-1,1]`.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.center.iter().zip(&self.half_widths))
            .map(|(xi, (c, r))| (xi - c) / r)
            .collect()
    }

    pub fn normalize_axis(&self, axis: usize, xi: f64) -> f64 {
        (xi - self.center[axis]) / self.half_widths[axis]
    }
}

/// A face shared by exactly two subdomains of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceFace {
    /// Axis the face is orthogonal to.
    pub axis: usize,
    /// Coordinate of the face along `axis`.
    pub position: f64,
    pub left_index: usize,
    pub right_index: usize,
    /// Extent of the face in the remaining axes: `lo[i]..hi[i]` for `i != axis`.
    pub face_lo: Vec<f64>,
    pub face_hi: Vec<f64>,
}

/// Tensor-grid split of a bounding box into subdomains plus the interfaces
/// between adjacent cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub bounding: AxisBox,
    pub counts: Vec<usize>,
    pub subdomains: Vec<Subdomain>,
    pub interfaces: Vec<InterfaceFace>,
}

impl Decomposition {
    pub fn dim(&self) -> usize {
        self.bounding.dim()
    }

    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    /// Index of the subdomain whose closed box contains `x`. Points on shared
    /// faces resolve to the lowest index.
    pub fn containing_subdomain(&self, x: &[f64]) -> Option<usize> {
        self.subdomains.iter().position(|s| s.bounds.contains(x))
    }

    /// Cell index tuple -> flat subdomain index (axis 0 fastest).
    fn flat_index(counts: &[usize], idx: &[usize]) -> usize {
        let mut flat = 0;
        for axis in (0..counts.len()).rev() {
            flat = flat * counts[axis] + idx[axis];
        }
        flat
    }
}

/// Splits `bounds` into an equal-size tensor grid with `counts[i]` cells per
/// axis and enumerates every interface between adjacent cells.
pub fn decompose(bounds: &AxisBox, counts: &[usize]) -> Result<Decomposition> {
    let d = bounds.dim();
    if counts.len() != d {
        return Err(Error::invalid_argument("per-axis counts dimension mismatch"));
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::invalid_argument("subdomain count must be positive on every axis"));
    }

    let steps: Vec<f64> = (0..d).map(|i| bounds.extent(i) / counts[i] as f64).collect();
    let edge = |axis: usize, k: usize| bounds.lo[axis] + steps[axis] * k as f64;

    let total: usize = counts.iter().product();
    let mut subdomains = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let lo: Vec<f64> = (0..d).map(|a| edge(a, idx[a])).collect();
        let hi: Vec<f64> = (0..d).map(|a| edge(a, idx[a] + 1)).collect();
        subdomains.push(Subdomain::from_box(AxisBox::new(lo, hi)?));
        // advance tuple, axis 0 fastest
        for a in 0..d {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }

    let mut interfaces = Vec::new();
    for axis in 0..d {
        for plane in 1..counts[axis] {
            // every cell pair (left has idx[axis] = plane-1, right = plane)
            let mut other = vec![0usize; d];
            loop {
                let mut left_idx = other.clone();
                left_idx[axis] = plane - 1;
                let mut right_idx = other.clone();
                right_idx[axis] = plane;
                let left = Decomposition::flat_index(counts, &left_idx);
                let right = Decomposition::flat_index(counts, &right_idx);
                let face_lo: Vec<f64> =
                    (0..d).filter(|a| *a != axis).map(|a| edge(a, other[a])).collect();
                let face_hi: Vec<f64> =
                    (0..d).filter(|a| *a != axis).map(|a| edge(a, other[a] + 1)).collect();
                interfaces.push(InterfaceFace {
                    axis,
                    position: edge(axis, plane),
                    left_index: left,
                    right_index: right,
                    face_lo,
                    face_hi,
                });
                // advance over the remaining axes
                let mut done = true;
                for a in (0..d).filter(|a| *a != axis) {
                    other[a] += 1;
                    if other[a] < counts[a] {
                        done = false;
                        break;
                    }
                    other[a] = 0;
                }
                if done {
                    break;
                }
            }
        }
    }

    Ok(Decomposition { bounding: bounds.clone(), counts: counts.to_vec(), subdomains, interfaces })
}

/// Which part of the boundary to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySelect {
    Outer,
    Exclusions,
    All,
}

/// Identifies the boundary face a sampled point lies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FaceTag {
    /// Outer box face orthogonal to `axis`; `upper` selects the hi side.
    Outer { axis: usize, upper: bool },
    /// Boundary of `exclusions[index]`.
    Exclusion { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub point: Vec<f64>,
    pub tag: FaceTag,
}

/// Midpoints of `n` equal cells over `[lo, hi]`.
pub fn midpoints(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|k| lo + h * (k as f64 + 0.5)).collect()
}

/// Samples boundary faces of `dom` with uniform cell-midpoint grids.
///
/// Outer faces use the partitions of the face's tangential axes; a 1D domain
/// yields its two endpoints. Disk boundaries are sampled at uniformly spaced
/// angles with `max(partitions)` points; box-hole boundaries per edge with the
/// edge axis' partition. Outer-face points falling strictly inside an
/// exclusion are dropped.
pub fn boundary_points(
    dom: &Domain,
    partitions: &[usize],
    which: BoundarySelect,
) -> Result<Vec<BoundaryPoint>> {
    let d = dom.dim();
    if partitions.len() != d {
        return Err(Error::invalid_argument("boundary partitions dimension mismatch"));
    }
    if partitions.iter().any(|&p| p == 0) {
        return Err(Error::invalid_argument("boundary partitions must be positive"));
    }
    let mut out = Vec::new();
    if matches!(which, BoundarySelect::Outer | BoundarySelect::All) {
        sample_box_faces(&dom.bounding, partitions, |axis, upper, point| {
            if !dom.excluded(&point) {
                out.push(BoundaryPoint { point, tag: FaceTag::Outer { axis, upper } });
            }
        });
    }
    if matches!(which, BoundarySelect::Exclusions | BoundarySelect::All) {
        for (index, excl) in dom.exclusions.iter().enumerate() {
            match excl {
                Exclusion::Disk { center, radius } => {
                    let n = partitions.iter().copied().max().unwrap_or(1);
                    for k in 0..n {
                        let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                        let point =
                            vec![center[0] + radius * theta.cos(), center[1] + radius * theta.sin()];
                        out.push(BoundaryPoint { point, tag: FaceTag::Exclusion { index } });
                    }
                }
                Exclusion::Box { lo, hi } => {
                    let hole = AxisBox { lo: lo.clone(), hi: hi.clone() };
                    sample_box_faces(&hole, partitions, |_, _, point| {
                        out.push(BoundaryPoint { point, tag: FaceTag::Exclusion { index } });
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Calls `emit(axis, upper, point)` for midpoint grids on every face of `b`.
/// In 1D the faces are the two endpoints themselves.
pub(crate) fn sample_box_faces<F: FnMut(usize, bool, Vec<f64>)>(
    b: &AxisBox,
    partitions: &[usize],
    mut emit: F,
) {
    let d = b.dim();
    for axis in 0..d {
        for (upper, pos) in [(false, b.lo[axis]), (true, b.hi[axis])] {
            let tangential: Vec<usize> = (0..d).filter(|a| *a != axis).collect();
            if tangential.is_empty() {
                emit(axis, upper, vec![pos]);
                continue;
            }
            let grids: Vec<Vec<f64>> = tangential
                .iter()
                .map(|&a| midpoints(b.lo[a], b.hi[a], partitions[a]))
                .collect();
            let mut idx = vec![0usize; tangential.len()];
            loop {
                let mut point = vec![0.0; d];
                point[axis] = pos;
                for (t, &a) in tangential.iter().enumerate() {
                    point[a] = grids[t][idx[t]];
                }
                emit(axis, upper, point);
                let mut done = true;
                for t in 0..tangential.len() {
                    idx[t] += 1;
                    if idx[t] < grids[t].len() {
                        done = false;
                        break;
                    }
                    idx[t] = 0;
                }
                if done {
                    break;
                }
            }
        }
    }
}

/// A boundary collocation point attributed to the subdomain it lies on.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainBoundaryPoint {
    pub point: Vec<f64>,
    pub subdomain: usize,
    pub tag: FaceTag,
}

/// Samples the outer boundary per subdomain: every subdomain face lying on
/// the bounding-box boundary gets its own midpoint grid, so the per-axis
/// partitions apply within each subdomain. Exclusion boundaries are sampled
/// globally and attributed to the containing subdomain. Faces listed in
/// `skip_outer` (as `(axis, upper)` of the bounding box) are not sampled.
pub fn subdomain_boundary_points(
    dec: &Decomposition,
    dom: &Domain,
    partitions: &[usize],
    skip_outer: &[(usize, bool)],
) -> Result<Vec<SubdomainBoundaryPoint>> {
    let d = dec.dim();
    if partitions.len() != d || partitions.iter().any(|&p| p == 0) {
        return Err(Error::invalid_argument("boundary partitions must be positive per axis"));
    }
    let mut out = Vec::new();
    let tol: Vec<f64> = (0..d).map(|a| 1e-12 * dom.bounding.extent(a)).collect();
    for (n, sub) in dec.subdomains.iter().enumerate() {
        let mut on_outer = |axis: usize, upper: bool, point: Vec<f64>| {
            if !dom.excluded(&point) {
                out.push(SubdomainBoundaryPoint {
                    point,
                    subdomain: n,
                    tag: FaceTag::Outer { axis, upper },
                });
            }
        };
        sample_box_faces(&sub.bounds, partitions, |axis, upper, point| {
            let global = if upper {
                (sub.bounds.hi[axis] - dom.bounding.hi[axis]).abs() <= tol[axis]
            } else {
                (sub.bounds.lo[axis] - dom.bounding.lo[axis]).abs() <= tol[axis]
            };
            if global && !skip_outer.contains(&(axis, upper)) {
                on_outer(axis, upper, point);
            }
        });
    }
    for bp in boundary_points(dom, partitions, BoundarySelect::Exclusions)? {
        if let Some(n) = dec.containing_subdomain(&bp.point) {
            out.push(SubdomainBoundaryPoint { point: bp.point, subdomain: n, tag: bp.tag });
        }
    }
    Ok(out)
}

/// Interior collocation points: a cell-midpoint grid with the per-axis
/// partitions inside every subdomain, restricted to the domain.
pub fn subdomain_interior_points(
    dec: &Decomposition,
    dom: &Domain,
    partitions: &[usize],
) -> Result<Vec<(Vec<f64>, usize)>> {
    let d = dec.dim();
    if partitions.len() != d || partitions.iter().any(|&p| p == 0) {
        return Err(Error::invalid_argument("interior partitions must be positive per axis"));
    }
    let mut out = Vec::new();
    for (n, sub) in dec.subdomains.iter().enumerate() {
        let grids: Vec<Vec<f64>> = (0..d)
            .map(|a| midpoints(sub.bounds.lo[a], sub.bounds.hi[a], partitions[a]))
            .collect();
        let total: usize = partitions.iter().product();
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let p: Vec<f64> = (0..d).map(|a| grids[a][idx[a]]).collect();
            if dom.contains(&p) {
                out.push((p, n));
            }
            for a in 0..d {
                idx[a] += 1;
                if idx[a] < partitions[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }
    Ok(out)
}

/// A continuity collocation point on an interface face.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePoint {
    pub point: Vec<f64>,
    pub left_index: usize,
    pub right_index: usize,
}

/// Uniform cell-midpoint grids on every interface face, using the partitions
/// of the face's tangential axes. A 1D interface is the shared point itself.
pub fn interface_points(dec: &Decomposition, partitions: &[usize]) -> Result<Vec<InterfacePoint>> {
    let d = dec.dim();
    if partitions.len() != d {
        return Err(Error::invalid_argument("interface partitions dimension mismatch"));
    }
    if partitions.iter().any(|&p| p == 0) {
        return Err(Error::invalid_argument("interface partitions must be positive"));
    }
    let mut out = Vec::new();
    for face in &dec.interfaces {
        let tangential: Vec<usize> = (0..d).filter(|a| *a != face.axis).collect();
        if tangential.is_empty() {
            out.push(InterfacePoint {
                point: vec![face.position],
                left_index: face.left_index,
                right_index: face.right_index,
            });
            continue;
        }
        let grids: Vec<Vec<f64>> = tangential
            .iter()
            .enumerate()
            .map(|(t, &a)| midpoints(face.face_lo[t], face.face_hi[t], partitions[a]))
            .collect();
        let mut idx = vec![0usize; tangential.len()];
        loop {
            let mut point = vec![0.0; d];
            point[face.axis] = face.position;
            for (t, &a) in tangential.iter().enumerate() {
                point[a] = grids[t][idx[t]];
            }
            out.push(InterfacePoint {
                point,
                left_index: face.left_index,
                right_index: face.right_index,
            });
            let mut done = true;
            for t in 0..tangential.len() {
                idx[t] += 1;
                if idx[t] < grids[t].len() {
                    done = false;
                    break;
                }
                idx[t] = 0;
            }
            if done {
                break;
            }
        }
    }
    Ok(out)
}
