//! Parabolic space-time geometry: cylinders, cubes, parabolic boundaries,
//! parabolic distance, uniform node-centered grids, and discrete norms.
//!
//! Conventions: a cylinder of radius `r` anchored at `(x, t)` is
//! `B_r(x) × (t - r², t]`, a cube is `(x - r, x + r)^d × (t - r², t]`, and a
//! forward cylinder is `B_r(x) × (t, t + r²]`. The parabolic boundary is the
//! bottom slice together with the lateral sides; the top time slice is
//! interior. Grids are uniform and axis-aligned, with nodes covering the
//! domain closure; spatial nodes within `h/2` of the lateral boundary are
//! boundary nodes, and the entire bottom slice is boundary.

use crate::rng::{self, stream};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A point (x, t) in R^d x R.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        SpaceTimePoint { x, t }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Parabolic distance `(|x1 - x2|^2 + |t1 - t2|)^{1/2}`.
pub fn parabolic_distance(p1: &SpaceTimePoint, p2: &SpaceTimePoint) -> Result<f64> {
    if p1.dim() != p2.dim() {
        return Err(Error::DimensionMismatch(p1.dim(), p2.dim()));
    }
    Ok(parabolic_distance_raw(&p1.x, p1.t, &p2.x, p2.t))
}

#[inline]
pub(crate) fn parabolic_distance_raw(x1: &[f64], t1: f64, x2: &[f64], t2: f64) -> f64 {
    let mut sq = 0.0;
    for (a, b) in x1.iter().zip(x2) {
        sq += (a - b) * (a - b);
    }
    (sq + (t1 - t2).abs()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// `B_r(x) × (t - r², t]`
    Cylinder,
    /// `(x - r, x + r)^d × (t - r², t]`
    Cube,
    /// `B_r(x) × (t, t + r²]`
    Forward,
}

/// A parabolic cylinder, cube, or forward cylinder anchored at `center`.
#[derive(Clone, Debug)]
pub struct ParabolicDomain {
    pub kind: DomainKind,
    pub center: SpaceTimePoint,
    pub radius: f64,
}

/// Builds a parabolic domain; the anchor is the top point for backward
/// domains and the bottom point for forward ones.
pub fn make_domain(kind: DomainKind, center: SpaceTimePoint, r: f64) -> Result<ParabolicDomain> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::param("r", format!("radius must be positive, got {r}")));
    }
    Ok(ParabolicDomain { kind, center, radius: r })
}

impl ParabolicDomain {
    /// Cube `C_r` with top point at the origin.
    pub fn cube_at_origin(d: usize, r: f64) -> Result<Self> {
        make_domain(DomainKind::Cube, SpaceTimePoint::new(vec![0.0; d], 0.0), r)
    }

    /// Cylinder `Q_r` with top point at the origin.
    pub fn cylinder_at_origin(d: usize, r: f64) -> Result<Self> {
        make_domain(DomainKind::Cylinder, SpaceTimePoint::new(vec![0.0; d], 0.0), r)
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Time extent as (bottom, top]; the bottom is open in the continuum and
    /// carries the initial data on the discrete grid.
    pub fn time_range(&self) -> (f64, f64) {
        let r2 = self.radius * self.radius;
        match self.kind {
            DomainKind::Cylinder | DomainKind::Cube => (self.center.t - r2, self.center.t),
            DomainKind::Forward => (self.center.t, self.center.t + r2),
        }
    }

    pub fn region(&self) -> Region {
        let (t_lo, t_hi) = self.time_range();
        let d = self.dim();
        let x_lo: Vec<f64> = (0..d).map(|i| self.center.x[i] - self.radius).collect();
        let x_hi: Vec<f64> = (0..d).map(|i| self.center.x[i] + self.radius).collect();
        let footprint = match self.kind {
            DomainKind::Cube => Footprint::Box,
            DomainKind::Cylinder | DomainKind::Forward => {
                if d == 1 {
                    // B_r in one dimension is the interval (-r, r): same as the box
                    Footprint::Box
                } else {
                    Footprint::Ball {
                        center: self.center.x.clone(),
                        radius: self.radius,
                    }
                }
            }
        };
        Region { x_lo, x_hi, t_lo, t_hi, footprint }
    }
}

/// Lateral cross-section of a region: the full bounding box or a ball
/// inscribed in it (cylinders in d >= 2).
#[derive(Clone, Debug)]
pub enum Footprint {
    Box,
    Ball { center: Vec<f64>, radius: f64 },
}

/// Axis-aligned space-time box `∏(x_lo, x_hi) × (t_lo, t_hi]` with an
/// optional ball footprint. The general domain beneath every grid.
#[derive(Clone, Debug)]
pub struct Region {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
    pub footprint: Footprint,
}

impl Region {
    pub fn new_box(x_lo: Vec<f64>, x_hi: Vec<f64>, t_lo: f64, t_hi: f64) -> Result<Self> {
        if x_lo.len() != x_hi.len() {
            return Err(Error::DimensionMismatch(x_lo.len(), x_hi.len()));
        }
        for i in 0..x_lo.len() {
            if !(x_hi[i] > x_lo[i]) {
                return Err(Error::param("x_hi", "empty spatial extent"));
            }
        }
        if !(t_hi > t_lo) {
            return Err(Error::param("t_hi", "empty time extent"));
        }
        Ok(Region { x_lo, x_hi, t_lo, t_hi, footprint: Footprint::Box })
    }

    pub fn dim(&self) -> usize {
        self.x_lo.len()
    }
}

/// Uniform node-centered grid over a region. A single spatial step `h` is
/// shared by all axes (the diagonal stencil directions require it), so every
/// spatial extent must be an integer multiple of `h` after snapping.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub region: Region,
    pub h: f64,
    pub dt: f64,
    /// cells per spatial axis (nodes per axis = nx + 1)
    pub nx: Vec<usize>,
    /// time cells (slices = nt + 1, slice 0 = bottom)
    pub nt: usize,
    strides: Vec<usize>,
    n_space: usize,
    lateral: Vec<bool>,
    in_domain: Vec<bool>,
    n_in_domain: usize,
}

impl GridSpec {
    /// Grid over a parabolic domain with target steps `h` and `dt`; both are
    /// snapped so nodes cover the closure exactly.
    pub fn new(domain: &ParabolicDomain, h_target: f64, dt_target: f64) -> Result<Self> {
        Self::from_region(domain.region(), h_target, dt_target)
    }

    pub fn from_region(region: Region, h_target: f64, dt_target: f64) -> Result<Self> {
        if !(h_target > 0.0) {
            return Err(Error::param("h", "spatial step must be positive"));
        }
        if !(dt_target > 0.0) {
            return Err(Error::param("dt", "time step must be positive"));
        }
        let d = region.dim();
        if d == 0 || d > 2 {
            return Err(Error::param("d", format!("supported dimensions are 1 and 2, got {d}")));
        }
        let ext0 = region.x_hi[0] - region.x_lo[0];
        let n0 = (ext0 / h_target).round().max(2.0) as usize;
        let h = ext0 / n0 as f64;
        let mut nx = vec![n0];
        for i in 1..d {
            let ext = region.x_hi[i] - region.x_lo[i];
            let ni = (ext / h).round().max(2.0) as usize;
            if ((ni as f64) * h - ext).abs() > 1e-9 * ext.max(1.0) {
                return Err(Error::param(
                    "h",
                    format!("axis {i} extent {ext} is not a multiple of h = {h}"),
                ));
            }
            nx.push(ni);
        }
        let t_ext = region.t_hi - region.t_lo;
        let nt = (t_ext / dt_target).ceil().max(1.0) as usize;
        let dt = t_ext / nt as f64;

        let mut strides = vec![0usize; d];
        let mut acc = 1usize;
        for i in (0..d).rev() {
            strides[i] = acc;
            acc *= nx[i] + 1;
        }
        let n_space = acc;

        let mut lateral = vec![false; n_space];
        let mut in_domain = vec![true; n_space];
        let mut coords = vec![0usize; d];
        for s in 0..n_space {
            let mut rem = s;
            for i in 0..d {
                coords[i] = rem / strides[i];
                rem %= strides[i];
            }
            let mut lat = false;
            for i in 0..d {
                if coords[i] == 0 || coords[i] == nx[i] {
                    lat = true;
                }
            }
            if let Footprint::Ball { ref center, radius } = region.footprint {
                let mut sq = 0.0;
                for i in 0..d {
                    let xi = region.x_lo[i] + coords[i] as f64 * h;
                    sq += (xi - center[i]) * (xi - center[i]);
                }
                let rr = sq.sqrt();
                if rr >= radius - 0.5 * h {
                    lat = true;
                }
                if rr > radius + 1e-9 * radius {
                    in_domain[s] = false;
                }
            }
            lateral[s] = lat;
        }
        let n_in_domain = in_domain.iter().filter(|&&b| b).count();

        Ok(GridSpec {
            region,
            h,
            dt,
            nx,
            nt,
            strides,
            n_space,
            lateral,
            in_domain,
            n_in_domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.nx.len()
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn n_in_domain(&self) -> usize {
        self.n_in_domain
    }

    pub fn lateral_mask(&self) -> &[bool] {
        &self.lateral
    }

    pub fn in_domain_mask(&self) -> &[bool] {
        &self.in_domain
    }

    /// Parabolic-boundary mask: bottom slice plus lateral nodes.
    pub fn is_boundary(&self, space_idx: usize, time_idx: usize) -> bool {
        time_idx == 0 || self.lateral[space_idx]
    }

    pub fn time(&self, j: usize) -> f64 {
        self.region.t_lo + j as f64 * self.dt
    }

    pub fn node_coord(&self, space_idx: usize, out: &mut Vec<f64>) {
        out.clear();
        let mut rem = space_idx;
        for i in 0..self.dim() {
            let k = rem / self.strides[i];
            rem %= self.strides[i];
            out.push(self.region.x_lo[i] + k as f64 * self.h);
        }
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..=self.nx[axis])
            .map(|k| self.region.x_lo[axis] + k as f64 * self.h)
            .collect()
    }

    /// Quadrature weight of one space-time node.
    pub fn node_weight(&self) -> f64 {
        self.h.powi(self.dim() as i32) * self.dt
    }

    /// Discrete measure of the domain: in-domain footprint times time extent,
    /// counted so that a full-contact solve has contact fraction exactly one.
    pub fn domain_measure(&self) -> f64 {
        self.n_in_domain as f64 * self.h.powi(self.dim() as i32) * self.nt as f64 * self.dt
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }
}

/// Grid function on (a subsample of) the time slices of a grid.
///
/// Long marches store every `stride`-th slice (plus the final one); norms and
/// seminorms run over the stored slices. The parabolic-boundary mask is
/// exposed through [`GridSpec::is_boundary`] on the stored slice indices.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    pub spec: GridSpec,
    /// times of the stored slices, `times[0] = t_lo`
    pub times: Vec<f64>,
    /// original time indices of the stored slices
    pub slice_steps: Vec<usize>,
    /// row-major `[slice][space]`
    pub values: Vec<f64>,
}

impl SpaceTimeField {
    /// Fills a field from a closure over node coordinates; stores all slices.
    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let n_space = spec.n_space();
        let mut values = Vec::with_capacity((spec.nt + 1) * n_space);
        let mut times = Vec::with_capacity(spec.nt + 1);
        let mut slice_steps = Vec::with_capacity(spec.nt + 1);
        let mut xbuf = Vec::new();
        for j in 0..=spec.nt {
            let t = spec.time(j);
            times.push(t);
            slice_steps.push(j);
            for s in 0..n_space {
                spec.node_coord(s, &mut xbuf);
                values.push(f(&xbuf, t));
            }
        }
        SpaceTimeField { spec: spec.clone(), times, slice_steps, values }
    }

    pub fn n_slices(&self) -> usize {
        self.times.len()
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let n = self.spec.n_space();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn value(&self, slice: usize, space_idx: usize) -> f64 {
        self.values[slice * self.spec.n_space() + space_idx]
    }

    /// Max of |f| over in-domain nodes of the stored slices.
    pub fn sup_norm(&self) -> f64 {
        let mask = self.spec.in_domain_mask();
        let n = self.spec.n_space();
        let mut m = 0.0f64;
        for j in 0..self.n_slices() {
            let row = &self.values[j * n..(j + 1) * n];
            for (s, &v) in row.iter().enumerate() {
                if mask[s] {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mask = self.spec.in_domain_mask();
        let n = self.spec.n_space();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..self.n_slices() {
            let row = &self.values[j * n..(j + 1) * n];
            for (s, &v) in row.iter().enumerate() {
                if mask[s] {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }

    /// Parabolic Hölder seminorm: sup over node pairs of
    /// `|f(p1) - f(p2)| / d(p1, p2)^alpha`. Exhaustive when the pair count
    /// stays within `max_pairs`, otherwise a seed-deterministic random
    /// subsample of `max_pairs` pairs.
    pub fn holder_seminorm(&self, alpha: f64, max_pairs: usize, seed: u64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", format!("need 0 < alpha < 1, got {alpha}")));
        }
        let mask = self.spec.in_domain_mask();
        let n = self.spec.n_space();
        let nodes: Vec<(usize, usize)> = (0..self.n_slices())
            .flat_map(|j| (0..n).filter(|&s| mask[s]).map(move |s| (j, s)))
            .collect();
        let total_pairs = nodes.len() * (nodes.len().saturating_sub(1)) / 2;
        let mut best = 0.0f64;
        let mut xa = Vec::new();
        let mut xb = Vec::new();
        let quot = |a: (usize, usize), b: (usize, usize), xa: &mut Vec<f64>, xb: &mut Vec<f64>| -> f64 {
            self.spec.node_coord(a.1, xa);
            self.spec.node_coord(b.1, xb);
            let dist = parabolic_distance_raw(xa, self.times[a.0], xb, self.times[b.0]);
            if dist == 0.0 {
                return 0.0;
            }
            (self.value(a.0, a.1) - self.value(b.0, b.1)).abs() / dist.powf(alpha)
        };
        if total_pairs <= max_pairs {
            for i in 0..nodes.len() {
                for k in (i + 1)..nodes.len() {
                    best = best.max(quot(nodes[i], nodes[k], &mut xa, &mut xb));
                }
            }
        } else {
            let mut rng = stream(rng::derive_seed(seed, "holder-pairs", 0));
            for _ in 0..max_pairs {
                let i = rng.random_range(0..nodes.len());
                let mut k = rng.random_range(0..nodes.len() - 1);
                if k >= i {
                    k += 1;
                }
                best = best.max(quot(nodes[i], nodes[k], &mut xa, &mut xb));
            }
        }
        Ok(best)
    }

    /// Linear (in x; nearest stored slice in t must match exactly) sample used
    /// by cross-grid comparisons in one dimension.
    pub fn sample_space_linear(&self, slice: usize, x: f64) -> f64 {
        let lo = self.spec.region.x_lo[0];
        let h = self.spec.h;
        let n = self.spec.nx[0];
        let u = ((x - lo) / h).clamp(0.0, n as f64);
        let k = (u.floor() as usize).min(n - 1);
        let frac = u - k as f64;
        let row = self.slice(slice);
        row[k] * (1.0 - frac) + row[k + 1] * frac
    }
}
