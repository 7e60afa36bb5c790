//! Lattice simplicial meshes of axis-aligned boxes and punctured boxes.
//!
//! Every mesh is a Kuhn triangulation: each lattice cell is cut into d!
//! congruent simplices sharing the cell's main diagonal. On such meshes the
//! P1 stiffness matrix for the identity coefficient is an M-matrix, which is
//! what makes the discrete maximum-principle checks in `verify` meaningful.
//!
//! Vertex coordinates are generated as `lo + index * step` with a signed
//! lattice index, so a mesh and its refinements, and an inner mesh and its
//! container, share vertex coordinates bitwise. All nesting maps are exact
//! index maps, never nearest-point searches.

use crate::error::{Error, Result};

/// Hard cap on lattice vertices per mesh (keeps accidental huge builds from
/// exhausting memory before an allocator error would).
const MAX_VERTICES: usize = 1 << 27;

/// Relative tolerance for recognizing lattice-aligned hole faces and padding.
const ALIGN_TOL: f64 = 1e-9;

/// Axis-aligned box domain, optionally punctured by a lattice-aligned
/// rectangular hole, with the padding fraction for the enclosing container.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub dim: usize,
    /// Per-axis `[lo, hi]` bounds of the inner box U.
    pub inner_box: Vec<[f64; 2]>,
    /// Optional per-axis bounds of a hole strictly inside `inner_box`.
    pub hole: Option<Vec<[f64; 2]>>,
    /// Fraction by which the container box extends `inner_box` per axis.
    pub container_padding: f64,
}

impl DomainSpec {
    pub fn unit_box(dim: usize) -> Self {
        DomainSpec {
            dim,
            inner_box: vec![[0.0, 1.0]; dim],
            hole: None,
            container_padding: 0.25,
        }
    }

    /// Symmetric box `[-1,1]^d`, optionally with the centered hole `[-a,a]^d`.
    pub fn symmetric_box(dim: usize, hole_half_width: Option<f64>) -> Self {
        DomainSpec {
            dim,
            inner_box: vec![[-1.0, 1.0]; dim],
            hole: hole_half_width.map(|a| vec![[-a, a]; dim]),
            container_padding: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dim == 2 || self.dim == 3) {
            return Err(Error::invalid(format!(
                "domain.dim must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.inner_box.len() != self.dim {
            return Err(Error::invalid(format!(
                "domain.inner_box must have {} axis bounds, got {}",
                self.dim,
                self.inner_box.len()
            )));
        }
        for (axis, b) in self.inner_box.iter().enumerate() {
            if !(b[1] - b[0] > 0.0) || !b[0].is_finite() || !b[1].is_finite() {
                return Err(Error::invalid(format!(
                    "domain.inner_box axis {axis} has nonpositive extent [{}, {}]",
                    b[0], b[1]
                )));
            }
        }
        if let Some(hole) = &self.hole {
            if hole.len() != self.dim {
                return Err(Error::invalid(format!(
                    "domain.hole must have {} axis bounds, got {}",
                    self.dim,
                    hole.len()
                )));
            }
            for (axis, (h, b)) in hole.iter().zip(&self.inner_box).enumerate() {
                if !(h[1] - h[0] > 0.0) {
                    return Err(Error::invalid(format!(
                        "domain.hole axis {axis} has nonpositive extent"
                    )));
                }
                if !(h[0] > b[0] && h[1] < b[1]) {
                    return Err(Error::invalid(format!(
                        "domain.hole axis {axis} [{}, {}] is not strictly inside inner_box [{}, {}]",
                        h[0], h[1], b[0], b[1]
                    )));
                }
            }
        }
        if !(self.container_padding >= 0.0) || !self.container_padding.is_finite() {
            return Err(Error::invalid(
                "domain.container_padding must be a finite value >= 0",
            ));
        }
        Ok(())
    }

    /// Volume of the box minus the hole.
    pub fn volume(&self) -> f64 {
        let outer: f64 = self.inner_box.iter().map(|b| b[1] - b[0]).product();
        let hole: f64 = self
            .hole
            .as_ref()
            .map(|h| h.iter().map(|b| b[1] - b[0]).product())
            .unwrap_or(0.0);
        outer - hole
    }

    /// Centroid of the inner box (may fall inside the hole).
    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (a, b) in self.inner_box.iter().enumerate() {
            c[a] = 0.5 * (b[0] + b[1]);
        }
        c
    }
}

/// Per-vertex region tag: inside the closed inner box, or only in the
/// container collar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum RegionTag {
    Inner,
    ContainerOnly,
}

#[derive(Clone, Debug)]
struct Lattice {
    dim: usize,
    /// Generating domain and inner subdivision count; a container mesh
    /// remembers both so refinement preserves nesting exactly.
    domain: DomainSpec,
    n_inner: usize,
    /// Container collar width in cells per side (0 for a plain inner mesh).
    collar: usize,
    /// Cells per axis of this mesh (= n_inner + 2*collar).
    cells: [usize; 3],
    step: [f64; 3],
    /// Hole cell range [lo, hi) in this mesh's own cell indices.
    hole_cells: Option<([usize; 3], [usize; 3])>,
    /// vertex lattice index -> vertex id, -1 where removed (hole interior)
    vertex_ids: Vec<i64>,
    /// cell index -> first simplex id, -1 for hole cells
    cell_elems: Vec<i64>,
}

impl Lattice {
    fn coordinate(&self, axis: usize, idx: usize) -> f64 {
        let signed = idx as i64 - self.collar as i64;
        self.domain.inner_box[axis][0] + (signed as f64) * self.step[axis]
    }

    fn vertex_strides(&self) -> [usize; 3] {
        let mut s = [1usize; 3];
        for a in 1..self.dim {
            s[a] = s[a - 1] * (self.cells[a - 1] + 1);
        }
        s
    }

    fn cell_strides(&self) -> [usize; 3] {
        let mut s = [1usize; 3];
        for a in 1..self.dim {
            s[a] = s[a - 1] * self.cells[a - 1];
        }
        s
    }

    fn vertex_lattice_len(&self) -> usize {
        (0..self.dim).map(|a| self.cells[a] + 1).product()
    }

    fn cell_lattice_len(&self) -> usize {
        (0..self.dim).map(|a| self.cells[a]).product()
    }

    fn vertex_linear(&self, idx: &[usize; 3]) -> usize {
        let s = self.vertex_strides();
        (0..self.dim).map(|a| idx[a] * s[a]).sum()
    }

    fn cell_linear(&self, idx: &[usize; 3]) -> usize {
        let s = self.cell_strides();
        (0..self.dim).map(|a| idx[a] * s[a]).sum()
    }

    fn in_hole_interior(&self, v: &[usize; 3]) -> bool {
        match &self.hole_cells {
            None => false,
            Some((lo, hi)) => (0..self.dim).all(|a| v[a] > lo[a] && v[a] < hi[a]),
        }
    }

    fn on_hole_surface(&self, v: &[usize; 3]) -> bool {
        match &self.hole_cells {
            None => false,
            Some((lo, hi)) => {
                (0..self.dim).all(|a| v[a] >= lo[a] && v[a] <= hi[a])
                    && (0..self.dim).any(|a| v[a] == lo[a] || v[a] == hi[a])
            }
        }
    }

    fn on_outer_boundary(&self, v: &[usize; 3]) -> bool {
        (0..self.dim).any(|a| v[a] == 0 || v[a] == self.cells[a])
    }

    fn is_hole_cell(&self, c: &[usize; 3]) -> bool {
        match &self.hole_cells {
            None => false,
            Some((lo, hi)) => (0..self.dim).all(|a| c[a] >= lo[a] && c[a] < hi[a]),
        }
    }

    /// Inner-region vertex: lattice index within the closed inner box.
    fn is_inner_vertex(&self, v: &[usize; 3]) -> bool {
        (0..self.dim).all(|a| v[a] >= self.collar && v[a] <= self.cells[a] - self.collar)
    }
}

/// Axis permutations, lexicographic. Each permutation names one Kuhn simplex
/// of a cell: walk from the low corner adding unit steps in that axis order.
fn axis_permutations(dim: usize) -> &'static [[usize; 3]] {
    const P2: [[usize; 3]; 2] = [[0, 1, 9], [1, 0, 9]];
    const P3: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    match dim {
        2 => &P2,
        3 => &P3,
        _ => panic!("unsupported dimension {dim}"),
    }
}

fn permutation_parity(perm: &[usize]) -> bool {
    // true = odd
    let mut inversions = 0;
    for i in 0..perm.len() {
        for j in (i + 1)..perm.len() {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}

/// Conforming simplicial mesh of a (possibly punctured, possibly padded) box.
#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    simplices: Vec<usize>,
    boundary: Vec<bool>,
    region: Vec<RegionTag>,
    h: f64,
    lattice: Lattice,
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn element_count(&self) -> usize {
        self.simplices.len() / (self.dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn simplex(&self, e: usize) -> &[usize] {
        &self.simplices[e * (self.dim + 1)..(e + 1) * (self.dim + 1)]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count()).filter(|&i| self.boundary[i]).collect()
    }

    pub fn region(&self, i: usize) -> RegionTag {
        self.region[i]
    }

    /// Maximum simplex diameter (= lattice cell diagonal).
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Lattice step per axis.
    pub fn step(&self, axis: usize) -> f64 {
        self.lattice.step[axis]
    }

    /// Inner subdivision count this mesh was generated from.
    pub fn subdivisions(&self) -> usize {
        self.lattice.n_inner
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.lattice.domain
    }

    /// Measure of the meshed region (container box minus hole for container
    /// meshes).
    pub fn volume(&self) -> f64 {
        let outer: f64 = (0..self.dim)
            .map(|a| self.lattice.cells[a] as f64 * self.lattice.step[a])
            .product();
        let hole: f64 = match &self.lattice.hole_cells {
            None => 0.0,
            Some((lo, hi)) => (0..self.dim)
                .map(|a| (hi[a] - lo[a]) as f64 * self.lattice.step[a])
                .product(),
        };
        outer - hole
    }

    pub fn barycenter(&self, e: usize) -> [f64; 3] {
        let mut b = [0.0; 3];
        let verts = self.simplex(e);
        for &v in verts {
            let x = self.vertex(v);
            for a in 0..self.dim {
                b[a] += x[a];
            }
        }
        for a in 0..self.dim {
            b[a] /= (self.dim + 1) as f64;
        }
        b
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        self.signed_volume(self.simplex(e))
    }

    fn signed_volume(&self, verts: &[usize]) -> f64 {
        let v0 = self.vertex(verts[0]);
        match self.dim {
            2 => {
                let a = self.vertex(verts[1]);
                let b = self.vertex(verts[2]);
                let e1 = [a[0] - v0[0], a[1] - v0[1]];
                let e2 = [b[0] - v0[0], b[1] - v0[1]];
                0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
            }
            3 => {
                let a = self.vertex(verts[1]);
                let b = self.vertex(verts[2]);
                let c = self.vertex(verts[3]);
                let e1 = [a[0] - v0[0], a[1] - v0[1], a[2] - v0[2]];
                let e2 = [b[0] - v0[0], b[1] - v0[1], b[2] - v0[2]];
                let e3 = [c[0] - v0[0], c[1] - v0[1], c[2] - v0[2]];
                let det = e1[0] * (e2[1] * e3[2] - e2[2] * e3[1])
                    - e1[1] * (e2[0] * e3[2] - e2[2] * e3[0])
                    + e1[2] * (e2[0] * e3[1] - e2[1] * e3[0]);
                det / 6.0
            }
            _ => unreachable!(),
        }
    }

    /// P1 barycentric gradients and the element volume.
    /// Returns (gradients[local vertex][axis], volume).
    pub fn p1_gradients(&self, e: usize) -> ([[f64; 3]; 4], f64) {
        let verts = self.simplex(e);
        let v0 = self.vertex(verts[0]);
        let mut grads = [[0.0; 3]; 4];
        let vol;
        match self.dim {
            2 => {
                let a = self.vertex(verts[1]);
                let b = self.vertex(verts[2]);
                let e1 = [a[0] - v0[0], a[1] - v0[1]];
                let e2 = [b[0] - v0[0], b[1] - v0[1]];
                let det = e1[0] * e2[1] - e1[1] * e2[0];
                vol = 0.5 * det;
                // rows of inverse edge matrix
                grads[1] = [e2[1] / det, -e2[0] / det, 0.0];
                grads[2] = [-e1[1] / det, e1[0] / det, 0.0];
            }
            3 => {
                let a = self.vertex(verts[1]);
                let b = self.vertex(verts[2]);
                let c = self.vertex(verts[3]);
                let e1 = [a[0] - v0[0], a[1] - v0[1], a[2] - v0[2]];
                let e2 = [b[0] - v0[0], b[1] - v0[1], b[2] - v0[2]];
                let e3 = [c[0] - v0[0], c[1] - v0[1], c[2] - v0[2]];
                let det = e1[0] * (e2[1] * e3[2] - e2[2] * e3[1])
                    - e1[1] * (e2[0] * e3[2] - e2[2] * e3[0])
                    + e1[2] * (e2[0] * e3[1] - e2[1] * e3[0]);
                vol = det / 6.0;
                // rows of E^{-1} via cross products
                let cr = |u: [f64; 3], v: [f64; 3]| {
                    [
                        u[1] * v[2] - u[2] * v[1],
                        u[2] * v[0] - u[0] * v[2],
                        u[0] * v[1] - u[1] * v[0],
                    ]
                };
                let c1 = cr(e2, e3);
                let c2 = cr(e3, e1);
                let c3 = cr(e1, e2);
                grads[1] = [c1[0] / det, c1[1] / det, c1[2] / det];
                grads[2] = [c2[0] / det, c2[1] / det, c2[2] / det];
                grads[3] = [c3[0] / det, c3[1] / det, c3[2] / det];
            }
            _ => unreachable!(),
        }
        for a in 0..self.dim {
            grads[0][a] = -(1..=self.dim).map(|k| grads[k][a]).sum::<f64>();
        }
        (grads, vol)
    }

    /// Physical quadrature points of an element: (point, weight) with weights
    /// summing to the element volume.
    pub fn quadrature(
        &self,
        e: usize,
        rule: crate::quadrature::QuadratureRule,
    ) -> Vec<([f64; 3], f64)> {
        let verts = self.simplex(e);
        let vol = self.element_volume(e);
        crate::quadrature::rule_points(rule, self.dim)
            .into_iter()
            .map(|(lambda, w)| {
                let mut p = [0.0; 3];
                for (k, &v) in verts.iter().enumerate() {
                    let x = self.vertex(v);
                    for a in 0..self.dim {
                        p[a] += lambda[k] * x[a];
                    }
                }
                (p, w * vol)
            })
            .collect()
    }

    /// Locate the element containing `x`, with its barycentric coordinates.
    /// Returns `None` outside the meshed region (including inside the hole).
    pub fn locate(&self, x: &[f64]) -> Option<(usize, [f64; 4])> {
        let lat = &self.lattice;
        let mut cell = [0usize; 3];
        let mut local = [0.0f64; 3];
        for a in 0..self.dim {
            let lo = lat.coordinate(a, 0);
            let t = (x[a] - lo) / lat.step[a];
            if t < -1e-12 || t > lat.cells[a] as f64 + 1e-12 {
                return None;
            }
            let c = (t.floor() as i64).clamp(0, lat.cells[a] as i64 - 1) as usize;
            cell[a] = c;
            local[a] = (t - c as f64).clamp(0.0, 1.0);
        }
        let first = lat.cell_elems[lat.cell_linear(&cell)];
        if first < 0 {
            return None;
        }
        // rank axes by descending local coordinate -> the containing Kuhn simplex
        let mut order = [0usize; 3];
        for a in 0..self.dim {
            order[a] = a;
        }
        let d = self.dim;
        order[..d].sort_by(|&i, &j| local[j].partial_cmp(&local[i]).unwrap().then(i.cmp(&j)));
        let perms = axis_permutations(d);
        let rank = perms
            .iter()
            .position(|p| p[..d] == order[..d])
            .expect("sorted axis order is a valid permutation");
        let elem = first as usize + rank;
        // barycentric along the diagonal path: 1 - t_max, consecutive gaps, t_min
        let mut lambda = [0.0f64; 4];
        lambda[0] = 1.0 - local[order[0]];
        for k in 0..d - 1 {
            lambda[k + 1] = local[order[k]] - local[order[k + 1]];
        }
        lambda[d] = local[order[d - 1]];
        if permutation_parity(&order[..d]) {
            lambda.swap(1, 2);
        }
        Some((elem, lambda))
    }

    /// Exact same-lattice check used by gridded fields for O(1) lookups.
    pub fn same_lattice(&self, other: &Mesh) -> bool {
        self.dim == other.dim
            && self.lattice.n_inner == other.lattice.n_inner
            && self.lattice.collar == other.lattice.collar
            && self.lattice.domain == other.lattice.domain
    }

    /// Uniformly refine: every axis subdivision doubles, h halves, and every
    /// coarse vertex reappears with bitwise identical coordinates.
    pub fn refine_uniform(&self) -> Result<Mesh> {
        build(
            &self.lattice.domain,
            self.lattice.n_inner * 2,
            self.lattice.collar * 2,
        )
    }

    /// Index of the kept vertex nearest to `p` (ties broken by lowest id),
    /// optionally restricted to the inner region.
    pub fn nearest_vertex(&self, p: &[f64], inner_only: bool) -> usize {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for i in 0..self.vertex_count() {
            if inner_only && self.region[i] != RegionTag::Inner {
                continue;
            }
            let x = self.vertex(i);
            let d: f64 = (0..self.dim).map(|a| (x[a] - p[a]) * (x[a] - p[a])).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Exact vertex lookup by coordinates (bitwise match via lattice index).
    pub fn vertex_at(&self, p: &[f64]) -> Option<usize> {
        let lat = &self.lattice;
        let mut idx = [0usize; 3];
        for a in 0..self.dim {
            let lo = lat.coordinate(a, 0);
            let t = (p[a] - lo) / lat.step[a];
            let j = t.round();
            if (t - j).abs() > ALIGN_TOL * (lat.cells[a] as f64) || j < 0.0 || j > lat.cells[a] as f64 {
                return None;
            }
            idx[a] = j as usize;
        }
        let id = lat.vertex_ids[lat.vertex_linear(&idx)];
        (id >= 0).then(|| id as usize)
    }
}

/// Build the Kuhn mesh of `domain` with `n` subdivisions per axis.
pub fn build_mesh(domain: &DomainSpec, n: usize) -> Result<Mesh> {
    build(domain, n, 0)
}

/// Build the container mesh (padded box, same lattice) and the exact index
/// map from the vertices of `build_mesh(domain, n)` into it.
///
/// Requires `container_padding > 0` and lattice-aligned padding
/// (`container_padding * n` integral), so inner vertices coincide with
/// container vertices bitwise.
pub fn container_mesh(domain: &DomainSpec, n: usize) -> Result<(Mesh, Vec<usize>)> {
    domain.validate()?;
    if domain.container_padding <= 0.0 {
        return Err(Error::invalid(
            "container_padding must be > 0: the weight lives on a strictly larger domain",
        ));
    }
    let k_real = domain.container_padding * n as f64;
    let k = k_real.round();
    if (k_real - k).abs() > ALIGN_TOL * n as f64 || k < 1.0 {
        return Err(Error::invalid(format!(
            "container_padding {} is not lattice-aligned for n = {n}; padding must be an integer multiple of 1/{n} (nearest admissible: {})",
            domain.container_padding,
            k.max(1.0) / n as f64
        )));
    }
    let collar = k as usize;
    let container = build(domain, n, collar)?;
    let inner = build(domain, n, 0)?;

    let mut map = Vec::with_capacity(inner.vertex_count());
    let ilat = &inner.lattice;
    let clat = &container.lattice;
    let mut idx = [0usize; 3];
    let dim = domain.dim;
    let mut walk = |map: &mut Vec<usize>| {
        // same traversal order as vertex construction: axis 0 fastest
        let counts: Vec<usize> = (0..dim).map(|a| ilat.cells[a] + 1).collect();
        let total: usize = counts.iter().product();
        for lin in 0..total {
            let mut rem = lin;
            for a in 0..dim {
                idx[a] = rem % counts[a];
                rem /= counts[a];
            }
            if ilat.vertex_ids[ilat.vertex_linear(&idx)] < 0 {
                continue;
            }
            let mut cidx = idx;
            for a in 0..dim {
                cidx[a] += collar;
            }
            let cid = clat.vertex_ids[clat.vertex_linear(&cidx)];
            debug_assert!(cid >= 0);
            map.push(cid as usize);
        }
    };
    walk(&mut map);
    debug_assert_eq!(map.len(), inner.vertex_count());
    Ok((container, map))
}

fn build(domain: &DomainSpec, n: usize, collar: usize) -> Result<Mesh> {
    domain.validate()?;
    if n < 1 {
        return Err(Error::invalid("subdivision count n must be >= 1"));
    }
    let dim = domain.dim;
    let mut step = [0.0f64; 3];
    let mut cells = [1usize; 3];
    for a in 0..dim {
        step[a] = (domain.inner_box[a][1] - domain.inner_box[a][0]) / n as f64;
        cells[a] = n + 2 * collar;
    }

    // hole cell range, in this mesh's own (collar-shifted) cell indices
    let hole_cells = match &domain.hole {
        None => None,
        Some(hole) => {
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            for a in 0..dim {
                for (which, value) in [(0usize, hole[a][0]), (1, hole[a][1])] {
                    let t = (value - domain.inner_box[a][0]) / step[a];
                    let r = t.round();
                    if (t - r).abs() > ALIGN_TOL * n as f64 {
                        return Err(Error::MisalignedHole {
                            axis: a,
                            value,
                            step: step[a],
                            nearest: domain.inner_box[a][0] + r * step[a],
                        });
                    }
                    let idx = r as i64 + collar as i64;
                    if which == 0 {
                        lo[a] = idx as usize;
                    } else {
                        hi[a] = idx as usize;
                    }
                }
                let inner_lo = collar;
                let inner_hi = collar + n;
                if lo[a] <= inner_lo || hi[a] >= inner_hi {
                    return Err(Error::invalid(format!(
                        "n = {n} is too small to separate the hole from the outer boundary on axis {a}"
                    )));
                }
                if hi[a] <= lo[a] {
                    return Err(Error::invalid(format!(
                        "hole has no cells on axis {a} at n = {n}"
                    )));
                }
            }
            Some((lo, hi))
        }
    };

    let mut lattice = Lattice {
        dim,
        domain: domain.clone(),
        n_inner: n,
        collar,
        cells,
        step,
        hole_cells,
        vertex_ids: Vec::new(),
        cell_elems: Vec::new(),
    };

    let nv_lattice = lattice.vertex_lattice_len();
    if nv_lattice > MAX_VERTICES {
        return Err(Error::Resource(format!(
            "mesh would have {nv_lattice} lattice vertices (cap {MAX_VERTICES})"
        )));
    }

    // vertices: axis 0 fastest
    let counts: Vec<usize> = (0..dim).map(|a| cells[a] + 1).collect();
    lattice.vertex_ids = vec![-1; nv_lattice];
    let mut coords = Vec::new();
    let mut boundary = Vec::new();
    let mut region = Vec::new();
    let mut idx = [0usize; 3];
    let mut next_id = 0i64;
    for lin in 0..nv_lattice {
        let mut rem = lin;
        for a in 0..dim {
            idx[a] = rem % counts[a];
            rem /= counts[a];
        }
        if lattice.in_hole_interior(&idx) {
            continue;
        }
        lattice.vertex_ids[lin] = next_id;
        next_id += 1;
        for a in 0..dim {
            coords.push(lattice.coordinate(a, idx[a]));
        }
        boundary.push(lattice.on_outer_boundary(&idx) || lattice.on_hole_surface(&idx));
        region.push(if lattice.is_inner_vertex(&idx) {
            RegionTag::Inner
        } else {
            RegionTag::ContainerOnly
        });
    }

    // elements: cells axis 0 fastest, d! simplices per cell
    let perms = axis_permutations(dim);
    let ncells = lattice.cell_lattice_len();
    lattice.cell_elems = vec![-1; ncells];
    let mut simplices: Vec<usize> = Vec::new();
    let cell_counts: Vec<usize> = (0..dim).map(|a| cells[a]).collect();
    let mut cidx = [0usize; 3];
    let mut elem_count = 0i64;
    for lin in 0..ncells {
        let mut rem = lin;
        for a in 0..dim {
            cidx[a] = rem % cell_counts[a];
            rem /= cell_counts[a];
        }
        if lattice.is_hole_cell(&cidx) {
            continue;
        }
        lattice.cell_elems[lin] = elem_count;
        for perm in perms {
            let mut verts = [0usize; 4];
            let mut walk = cidx;
            verts[0] = lattice.vertex_ids[lattice.vertex_linear(&walk)] as usize;
            for k in 0..dim {
                walk[perm[k]] += 1;
                verts[k + 1] = lattice.vertex_ids[lattice.vertex_linear(&walk)] as usize;
            }
            if permutation_parity(&perm[..dim]) {
                verts.swap(1, 2);
            }
            simplices.extend_from_slice(&verts[..=dim]);
            elem_count += 1;
        }
    }

    let h = (0..dim).map(|a| step[a] * step[a]).sum::<f64>().sqrt();
    let mesh = Mesh {
        dim,
        coords,
        simplices,
        boundary,
        region,
        h,
        lattice,
    };
    debug_assert!((0..mesh.element_count()).all(|e| mesh.element_volume(e) > 0.0));
    Ok(mesh)
}
