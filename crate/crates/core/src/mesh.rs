//! Domains containing the origin and their ring triangulations.
//!
//! Every mesh produced here is built from closed "rings", scaled copies of the
//! boundary about the origin, stitched together pairwise and closed off by a
//! fan around the origin. The origin is therefore always node `0` and the
//! singular weight `|x|^{-2β}` only ever touches element vertices.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Geometry of a bounded planar domain that contains the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainSpec {
    Disk { radius: f64, center: Point },
    /// Counterclockwise vertex list of a simple polygon.
    Polygon { vertices: Vec<Point> },
}

impl DomainSpec {
    pub fn unit_disk() -> Self {
        Self::disk(1.0)
    }

    pub fn disk(radius: f64) -> Self {
        DomainSpec::Disk { radius, center: [0.0, 0.0] }
    }

    /// Disk of the given radius whose center is `center`; the origin must stay inside.
    pub fn disk_at(center: Point, radius: f64) -> Self {
        DomainSpec::Disk { radius, center }
    }

    /// The square `[-half, half]^2`.
    pub fn square(half: f64) -> Self {
        DomainSpec::Polygon {
            vertices: vec![[-half, -half], [half, -half], [half, half], [-half, half]],
        }
    }

    pub fn polygon(vertices: Vec<Point>) -> Self {
        DomainSpec::Polygon { vertices }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::Disk { radius, center } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidDomain(format!("disk radius must be positive, got {radius}")));
                }
                if !(center[0].is_finite() && center[1].is_finite()) {
                    return Err(Error::InvalidDomain("disk center must be finite".into()));
                }
                if norm(*center) >= *radius {
                    return Err(Error::OriginOutside);
                }
                Ok(())
            }
            DomainSpec::Polygon { vertices } => validate_polygon(vertices),
        }
    }

    /// Largest distance from the origin to the boundary.
    pub fn outer_radius(&self) -> f64 {
        match self {
            DomainSpec::Disk { radius, center } => radius + norm(*center),
            DomainSpec::Polygon { vertices } => vertices.iter().map(|&v| norm(v)).fold(0.0, f64::max),
        }
    }

    /// Smallest distance from the origin to the boundary.
    pub fn inradius_at_origin(&self) -> f64 {
        match self {
            DomainSpec::Disk { radius, center } => radius - norm(*center),
            DomainSpec::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| segment_distance([0.0, 0.0], vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DomainSpec::Disk { radius, .. } => 2.0 * radius,
            DomainSpec::Polygon { vertices } => {
                let mut d: f64 = 0.0;
                for a in vertices {
                    for b in vertices {
                        d = d.max(norm(sub(*a, *b)));
                    }
                }
                d
            }
        }
    }

    /// Sample the ring `scale · ∂Ω`, starting on the positive x axis and
    /// ordered counterclockwise. `spacing` is the target node spacing along the
    /// full-scale boundary.
    fn ring(&self, scale: f64, spacing: f64) -> Vec<Point> {
        match self {
            DomainSpec::Disk { radius, center } => {
                let perimeter = 2.0 * PI * radius * scale;
                let per_sector = ((perimeter / (2.0 * PI * spacing * scale)).round() as usize).max(1);
                let n = 6 * per_sector;
                (0..n)
                    .map(|j| {
                        let theta = 2.0 * PI * j as f64 / n as f64;
                        let dir = [theta.cos(), theta.sin()];
                        let d = ray_circle(dir, *center, *radius);
                        [scale * d * dir[0], scale * d * dir[1]]
                    })
                    .collect()
            }
            DomainSpec::Polygon { vertices } => {
                let corners = polygon_from_x_axis(vertices);
                let n = corners.len();
                let mut out = Vec::new();
                for i in 0..n {
                    let a = corners[i];
                    let b = corners[(i + 1) % n];
                    let len = norm(sub(b, a));
                    let m = ((len / spacing).ceil() as usize).max(1);
                    for k in 0..m {
                        let t = k as f64 / m as f64;
                        out.push([
                            scale * (a[0] + t * (b[0] - a[0])),
                            scale * (a[1] + t * (b[1] - a[1])),
                        ]);
                    }
                }
                out
            }
        }
    }
}

fn ray_circle(dir: Point, center: Point, radius: f64) -> f64 {
    // |t·dir − c|² = ρ², positive root.
    let b = dir[0] * center[0] + dir[1] * center[1];
    let c = center[0] * center[0] + center[1] * center[1] - radius * radius;
    b + (b * b - c).sqrt()
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm(sub(p, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(sub(b, a), sub(c, a));
    let d2 = cross(sub(b, a), sub(d, a));
    let d3 = cross(sub(d, c), sub(a, c));
    let d4 = cross(sub(d, c), sub(b, c));
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn validate_polygon(vertices: &[Point]) -> Result<()> {
    let n = vertices.len();
    if n < 3 {
        return Err(Error::InvalidDomain(format!("polygon needs at least 3 vertices, got {n}")));
    }
    if vertices.iter().any(|v| !(v[0].is_finite() && v[1].is_finite())) {
        return Err(Error::InvalidDomain("polygon vertices must be finite".into()));
    }
    let scale = vertices.iter().map(|&v| norm(v)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..n {
        if norm(sub(vertices[(i + 1) % n], vertices[i])) <= 1e-12 * scale {
            return Err(Error::InvalidDomain(format!("polygon edge {i} is degenerate")));
        }
    }
    let area2: f64 = (0..n).map(|i| cross(vertices[i], vertices[(i + 1) % n])).sum();
    if area2.abs() <= 1e-14 * scale * scale {
        return Err(Error::InvalidDomain("polygon has zero area".into()));
    }
    if area2 < 0.0 {
        return Err(Error::InvalidDomain("polygon must be counterclockwise".into()));
    }
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]) {
                return Err(Error::InvalidDomain(format!("polygon edges {i} and {j} intersect")));
            }
        }
    }
    if !point_in_polygon([0.0, 0.0], vertices) {
        return Err(Error::OriginOutside);
    }
    for i in 0..n {
        if cross(vertices[i], vertices[(i + 1) % n]) <= 1e-12 * scale * scale {
            return Err(Error::InvalidDomain(
                "polygon must be strictly star-shaped with respect to the origin".into(),
            ));
        }
    }
    Ok(())
}

fn point_in_polygon(p: Point, vertices: &[Point]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Polygon corners rotated so that the list starts at the boundary point on
/// the positive x axis (inserted as an extra corner when it is not a vertex).
fn polygon_from_x_axis(vertices: &[Point]) -> Vec<Point> {
    let n = vertices.len();
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        // Edge crosses the positive x axis when a is below (or on) and b above.
        if a[1] <= 0.0 && b[1] > 0.0 {
            let t = -a[1] / (b[1] - a[1]);
            let x = a[0] + t * (b[0] - a[0]);
            if x > 0.0 {
                let hit = [x, 0.0];
                let mut out = Vec::with_capacity(n + 1);
                out.push(hit);
                for k in 1..=n {
                    let v = vertices[(i + k) % n];
                    if norm(sub(v, hit)) > 0.0 {
                        out.push(v);
                    }
                }
                return out;
            }
        }
    }
    vertices.to_vec()
}

/// Geometric refinement of the ring spacing toward the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrading {
    /// Radius of the innermost ring.
    pub r_min: f64,
    /// Ratio between consecutive ring radii inside the graded core, > 1.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Radial ring spacing away from the origin.
    pub h: f64,
    pub grading: Option<RadialGrading>,
    /// Radii that must coincide with a ring (exact circles on centered disks).
    pub snap_radii: Vec<f64>,
}

impl MeshOptions {
    pub fn uniform(h: f64) -> Self {
        Self { h, grading: None, snap_radii: Vec::new() }
    }

    pub fn graded(h: f64, r_min: f64, ratio: f64) -> Self {
        Self { h, grading: Some(RadialGrading { r_min, ratio }), snap_radii: Vec::new() }
    }

    pub fn with_snap_radii(mut self, radii: impl IntoIterator<Item = f64>) -> Self {
        self.snap_radii.extend(radii);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ring {
    /// Scale factor relative to the boundary (the radius on a centered unit disk).
    pub scale: f64,
    pub first_node: usize,
    pub len: usize,
}

/// Conforming P1 triangulation with the origin at node 0.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Counterclockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    /// Ring structure; empty for meshes read back from text.
    pub rings: Vec<Ring>,
    /// Maximum edge length.
    pub h: f64,
    dof_of_node: Vec<Option<usize>>,
    node_of_dof: Vec<usize>,
}

/// Triangulate `spec` with ring spacing `h`.
pub fn build_mesh(spec: &DomainSpec, h: f64) -> Result<Mesh> {
    build_mesh_with(spec, &MeshOptions::uniform(h))
}

pub fn build_mesh_with(spec: &DomainSpec, opts: &MeshOptions) -> Result<Mesh> {
    spec.validate()?;
    let diameter = spec.diameter();
    if !(opts.h.is_finite() && opts.h > 0.0 && opts.h < diameter) {
        return Err(Error::InvalidParameter(format!(
            "mesh size h = {} must lie in (0, {diameter})",
            opts.h
        )));
    }
    let r_ref = match spec {
        DomainSpec::Disk { radius, center } if norm(*center) == 0.0 => *radius,
        _ => spec.outer_radius(),
    };
    let scales = ring_scales(r_ref, opts)?;

    let mut nodes = vec![[0.0, 0.0]];
    let mut rings = Vec::with_capacity(scales.len());
    let mut prev_scale = 0.0;
    for &s in &scales {
        // Tangential spacing follows the radial gap below the ring.
        let gap = (s - prev_scale) * r_ref;
        let pts = spec.ring(s, gap / s);
        rings.push(Ring { scale: s, first_node: nodes.len(), len: pts.len() });
        nodes.extend(pts);
        prev_scale = s;
    }

    let mut triangles = Vec::new();
    let first = rings[0];
    for j in 0..first.len {
        let a = first.first_node + j;
        let b = first.first_node + (j + 1) % first.len;
        triangles.push([0, a, b]);
    }
    for w in rings.windows(2) {
        zip_rings(&nodes, w[0], w[1], &mut triangles);
    }

    let outer = *rings.last().unwrap();
    let mut boundary = vec![false; nodes.len()];
    for flag in &mut boundary[outer.first_node..outer.first_node + outer.len] {
        *flag = true;
    }
    Ok(Mesh::from_parts(nodes, triangles, boundary, rings))
}

fn ring_scales(r_ref: f64, opts: &MeshOptions) -> Result<Vec<f64>> {
    let du = opts.h / r_ref;
    let mut scales = Vec::new();
    match opts.grading {
        None => {
            let n = (1.0 / du).ceil() as usize;
            scales.extend((1..=n).map(|k| k as f64 / n as f64));
        }
        Some(g) => {
            if !(g.ratio > 1.0 && g.r_min > 0.0 && g.r_min < opts.h) {
                return Err(Error::InvalidParameter(format!(
                    "grading needs ratio > 1 and 0 < r_min < h, got {g:?}"
                )));
            }
            let s_min = g.r_min / r_ref;
            let shrink = 1.0 - 1.0 / g.ratio;
            // Uniform rings from the boundary inward until geometric spacing is finer.
            let s_switch = du / shrink;
            let n_uniform = ((1.0 - s_switch) / du).floor().max(0.0) as usize;
            let mut s = 1.0;
            scales.push(s);
            for _ in 0..n_uniform {
                s -= du;
                scales.push(s);
            }
            loop {
                s /= g.ratio;
                if s <= s_min * (1.0 + 1e-9) {
                    break;
                }
                scales.push(s);
            }
            scales.push(s_min);
            scales.reverse();
        }
    }
    for &r in &opts.snap_radii {
        let s = r / r_ref;
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParameter(format!("snap radius {r} is outside the domain")));
        }
        let k = scales
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s).abs().total_cmp(&(b.1 - s).abs()))
            .map(|(k, _)| k)
            .unwrap();
        if k + 1 == scales.len() {
            // Never move the boundary ring.
            scales.insert(k, s);
        } else {
            let lo = if k == 0 { 0.0 } else { scales[k - 1] };
            let hi = scales[k + 1];
            if s > lo + 0.35 * (scales[k] - lo) && s < hi - 0.35 * (hi - scales[k]) {
                scales[k] = s;
            } else {
                let pos = scales.partition_point(|&x| x < s);
                if scales.get(pos).is_none_or(|&x| x != s) {
                    scales.insert(pos, s);
                }
            }
        }
    }
    scales.dedup();
    Ok(scales)
}

fn angle(p: Point) -> f64 {
    let a = p[1].atan2(p[0]);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Stitch two consecutive rings by advancing along whichever has the smaller
/// next polar angle. Both rings start on the positive x axis.
fn zip_rings(nodes: &[Point], inner: Ring, outer: Ring, triangles: &mut Vec<[usize; 3]>) {
    let node_in = |i: usize| inner.first_node + i % inner.len;
    let node_out = |j: usize| outer.first_node + j % outer.len;
    let angle_in = |i: usize| {
        if i >= inner.len {
            2.0 * PI + angle(nodes[node_in(i)])
        } else {
            angle(nodes[node_in(i)])
        }
    };
    let angle_out = |j: usize| {
        if j >= outer.len {
            2.0 * PI + angle(nodes[node_out(j)])
        } else {
            angle(nodes[node_out(j)])
        }
    };
    let (mut i, mut j) = (0usize, 0usize);
    while i < inner.len || j < outer.len {
        let advance_outer = if i == inner.len {
            true
        } else if j == outer.len {
            false
        } else {
            // Ties advance the outer ring so equal-angle spokes stay symmetric.
            angle_out(j + 1) <= angle_in(i + 1) + 1e-12
        };
        if advance_outer {
            triangles.push([node_in(i), node_out(j), node_out(j + 1)]);
            j += 1;
        } else {
            triangles.push([node_in(i), node_out(j), node_in(i + 1)]);
            i += 1;
        }
    }
}

impl Mesh {
    pub fn from_parts(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, boundary: Vec<bool>, rings: Vec<Ring>) -> Self {
        let mut dof_of_node = vec![None; nodes.len()];
        let mut node_of_dof = Vec::new();
        for (k, &b) in boundary.iter().enumerate() {
            if !b {
                dof_of_node[k] = Some(node_of_dof.len());
                node_of_dof.push(k);
            }
        }
        let mut h: f64 = 0.0;
        for t in &triangles {
            for e in 0..3 {
                h = h.max(norm(sub(nodes[t[(e + 1) % 3]], nodes[t[e]])));
            }
        }
        Mesh { nodes, triangles, boundary, rings, h, dof_of_node, node_of_dof }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.node_of_dof.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    pub fn node_of_dof(&self, dof: usize) -> usize {
        self.node_of_dof[dof]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.node_of_dof
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area; positive for every element of a valid mesh.
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        0.5 * cross(sub(b, a), sub(c, a))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Expand interior-DOF values to all nodes (zero on the boundary).
    pub fn expand(&self, interior: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (d, &v) in interior.iter().enumerate() {
            out[self.node_of_dof[d]] = v;
        }
        out
    }

    /// Restrict nodal values to interior DOFs.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.node_of_dof.iter().map(|&k| nodal[k]).collect()
    }

    /// Interpolate a function at the nodes.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&p| f(p)).collect()
    }

    /// Ring whose scale is closest to `scale`.
    pub fn nearest_ring(&self, scale: f64) -> Option<&Ring> {
        self.rings.iter().min_by(|a, b| (a.scale - scale).abs().total_cmp(&(b.scale - scale).abs()))
    }

    /// Gradient of the P1 interpolant of `nodal` on element `t`.
    pub fn gradient(&self, t: usize, nodal: &[f64]) -> Point {
        let tri = self.triangles[t];
        let grads = self.basis_gradients(t);
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += nodal[tri[k]] * grads[k][0];
            g[1] += nodal[tri[k]] * grads[k][1];
        }
        g
    }

    /// Gradients of the three barycentric basis functions on element `t`.
    pub fn basis_gradients(&self, t: usize) -> [Point; 3] {
        let [p0, p1, p2] = self.vertices(t);
        let two_area = cross(sub(p1, p0), sub(p2, p0));
        let g = |a: Point, b: Point| [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area];
        [g(p1, p2), g(p2, p0), g(p0, p1)]
    }

    /// Write the mesh in the documented text format, optionally with one
    /// nodal value column.
    pub fn write_text<W: Write>(&self, mut w: W, values: Option<&[f64]>) -> Result<()> {
        if let Some(v) = values {
            if v.len() != self.n_nodes() {
                return Err(Error::DimensionMismatch { expected: self.n_nodes(), got: v.len() });
            }
        }
        let mut s = String::new();
        writeln!(s, "# tm-extremal mesh v1").unwrap();
        writeln!(s, "# nodes: index x y boundary{}", if values.is_some() { " value" } else { "" }).unwrap();
        writeln!(s, "# triangles: index a b c (counterclockwise, zero-based)").unwrap();
        writeln!(s, "nodes {}", self.n_nodes()).unwrap();
        for (k, p) in self.nodes.iter().enumerate() {
            write!(s, "{k} {:.17e} {:.17e} {}", p[0], p[1], u8::from(self.boundary[k])).unwrap();
            if let Some(v) = values {
                write!(s, " {:.17e}", v[k]).unwrap();
            }
            s.push('\n');
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for (k, t) in self.triangles.iter().enumerate() {
            writeln!(s, "{k} {} {} {}", t[0], t[1], t[2]).unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Read a mesh (and the optional value column) written by [`Mesh::write_text`].
    pub fn read_text<R: BufRead>(r: R) -> Result<(Mesh, Option<Vec<f64>>)> {
        let mut lines = r.lines().filter(|l| l.as_ref().map_or(true, |l| !l.trim_start().starts_with('#') && !l.trim().is_empty()));
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Parse("unexpected end of mesh file".into()))?.map_err(Error::from)
        };
        let count = |line: String, key: &str| -> Result<usize> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::Parse(format!("expected section `{key}`")));
            }
            it.next()
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad `{key}` count")))
        };
        let pf = |s: Option<&str>| -> Result<f64> {
            s.and_then(|x| x.parse().ok()).ok_or_else(|| Error::Parse("bad number".into()))
        };
        let n = count(next()?, "nodes")?;
        let mut nodes = Vec::with_capacity(n);
        let mut boundary = Vec::with_capacity(n);
        let mut values = Vec::new();
        for _ in 0..n {
            let line = next()?;
            let mut it = line.split_whitespace().skip(1);
            let x = pf(it.next())?;
            let y = pf(it.next())?;
            let b = it.next().ok_or_else(|| Error::Parse("missing boundary flag".into()))? == "1";
            if let Some(v) = it.next() {
                values.push(pf(Some(v))?);
            }
            nodes.push([x, y]);
            boundary.push(b);
        }
        let m = count(next()?, "triangles")?;
        let mut triangles = Vec::with_capacity(m);
        for _ in 0..m {
            let line = next()?;
            let idx: Vec<usize> = line
                .split_whitespace()
                .skip(1)
                .map(|x| x.parse().map_err(|_| Error::Parse("bad node index".into())))
                .collect::<Result<_>>()?;
            if idx.len() != 3 || idx.iter().any(|&i| i >= n) {
                return Err(Error::Parse("bad triangle row".into()));
            }
            triangles.push([idx[0], idx[1], idx[2]]);
        }
        let values = if values.len() == n { Some(values) } else { None };
        Ok((Mesh::from_parts(nodes, triangles, boundary, Vec::new()), values))
    }
}

/// Point location by grid bucketing plus a brute-force fallback.
pub struct Locator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
        let n = ((mesh.triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let cell = side / n as f64 * (1.0 + 1e-12);
        let (nx, ny) = (n, n);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &k in tri {
                for d in 0..2 {
                    a[d] = a[d].min(mesh.nodes[k][d]);
                    b[d] = b[d].max(mesh.nodes[k][d]);
                }
            }
            let i0 = (((a[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let i1 = (((b[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let j0 = (((a[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            let j1 = (((b[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Locator { mesh, origin: lo, cell, nx, ny, buckets }
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.mesh.vertices(t);
        let area = cross(sub(b, a), sub(c, a));
        let l1 = cross(sub(c, b), sub(p, b)) / area;
        let l2 = cross(sub(a, c), sub(p, c)) / area;
        [l1, l2, 1.0 - l1 - l2]
    }

    /// Element containing `p` and its barycentric coordinates.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let tol = -1e-10;
        let inside = |t: usize| {
            let l = self.barycentric(t, p);
            (l[0].min(l[1]).min(l[2]) >= tol).then_some((t, l))
        };
        let fx = (p[0] - self.origin[0]) / self.cell;
        let fy = (p[1] - self.origin[1]) / self.cell;
        if fx >= 0.0 && fy >= 0.0 {
            let (i, j) = (fx as usize, fy as usize);
            if i < self.nx && j < self.ny {
                if let Some(hit) = self.buckets[j * self.nx + i].iter().find_map(|&t| inside(t)) {
                    return Some(hit);
                }
            }
        }
        (0..self.mesh.triangles.len()).find_map(inside)
    }

    /// P1 interpolation of nodal values at `p`.
    pub fn interpolate(&self, nodal: &[f64], p: Point) -> Result<f64> {
        let (t, l) = self.locate(p).ok_or(Error::OutsideMesh(p[0], p[1]))?;
        let tri = self.mesh.triangles[t];
        Ok(l[0] * nodal[tri[0]] + l[1] * nodal[tri[1]] + l[2] * nodal[tri[2]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_conforming(mesh: &Mesh) {
        for t in 0..mesh.triangles.len() {
            assert!(mesh.triangle_area(t) > 0.0, "element {t} is inverted");
        }
        // Every interior edge is shared by exactly two elements, boundary edges by one.
        let mut edges = std::collections::HashMap::new();
        for tri in &mesh.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &edges {
            if count == 1 {
                assert!(mesh.boundary[a] && mesh.boundary[b], "open edge ({a}, {b}) inside the domain");
            } else {
                assert_eq!(count, 2);
            }
        }
    }

    #[test]
    fn unit_disk_mesh_contract() {
        let mesh = build_mesh(&DomainSpec::unit_disk(), 0.5).unwrap();
        assert_eq!(mesh.nodes[0], [0.0, 0.0]);
        assert!(!mesh.boundary[0]);
        check_conforming(&mesh);
        for (k, p) in mesh.nodes.iter().enumerate() {
            if mesh.boundary[k] {
                assert!((norm(*p) - 1.0).abs() < 1e-12);
            }
        }
        // 1 + 6 + 12 nodes, rings at r = 1/2 and 1.
        assert_eq!(mesh.n_nodes(), 19);
        assert_eq!(mesh.n_boundary(), 12);
    }

    #[test]
    fn square_mesh_bookkeeping() {
        let mesh = build_mesh(&DomainSpec::square(1.0), 0.25).unwrap();
        check_conforming(&mesh);
        assert_eq!(mesh.n_dofs(), mesh.n_nodes() - mesh.n_boundary());
        assert!((mesh.area() - 4.0).abs() < 1e-12);
        for (k, p) in mesh.nodes.iter().enumerate() {
            let on_edge = (p[0].abs() - 1.0).abs() < 1e-12 || (p[1].abs() - 1.0).abs() < 1e-12;
            assert_eq!(mesh.boundary[k], on_edge, "node {k} at {p:?}");
        }
    }

    #[test]
    fn polygon_without_origin_is_rejected() {
        let spec = DomainSpec::polygon(vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]]);
        assert!(matches!(build_mesh(&spec, 0.25), Err(Error::OriginOutside)));
    }

    #[test]
    fn degenerate_polygons_are_rejected() {
        let clockwise = DomainSpec::polygon(vec![[-1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [1.0, -1.0]]);
        assert!(matches!(clockwise.validate(), Err(Error::InvalidDomain(_))));
        let two = DomainSpec::polygon(vec![[-1.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(two.validate(), Err(Error::InvalidDomain(_))));
        let bowtie = DomainSpec::polygon(vec![[-1.0, -1.0], [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0]]);
        assert!(bowtie.validate().is_err());
    }

    #[test]
    fn off_center_disk_and_graded_mesh() {
        let spec = DomainSpec::disk_at([0.3, 0.0], 1.0);
        let mesh = build_mesh(&spec, 0.1).unwrap();
        check_conforming(&mesh);
        let exact = PI;
        assert!((mesh.area() - exact).abs() / exact < 5e-3);

        let graded = build_mesh_with(
            &DomainSpec::unit_disk(),
            &MeshOptions::graded(0.1, 1e-6, 1.2).with_snap_radii([0.0123, 0.5]),
        )
        .unwrap();
        check_conforming(&graded);
        assert_eq!(graded.nodes[0], [0.0, 0.0]);
        assert!((graded.rings[0].scale - 1e-6).abs() < 1e-18);
        for r in [0.0123, 0.5] {
            let ring = graded.nearest_ring(r).unwrap();
            assert!((ring.scale - r).abs() < 1e-15);
            let p = graded.nodes[ring.first_node + 1];
            assert!((norm(p) - r).abs() < 1e-14);
        }
    }

    #[test]
    fn locator_reproduces_linear_functions() {
        let mesh = build_mesh(&DomainSpec::square(1.0), 0.2).unwrap();
        let loc = Locator::new(&mesh);
        let f = mesh.interpolate(|p| 1.0 + 2.0 * p[0] - 3.0 * p[1]);
        for p in [[0.0, 0.0], [0.33, -0.71], [-0.99, 0.99], [0.5, 0.25]] {
            let v = loc.interpolate(&f, p).unwrap();
            assert!((v - (1.0 + 2.0 * p[0] - 3.0 * p[1])).abs() < 1e-12);
        }
        assert!(loc.interpolate(&f, [1.5, 0.0]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mesh = build_mesh(&DomainSpec::unit_disk(), 0.25).unwrap();
        let values = mesh.interpolate(|p| p[0] * p[1]);
        let mut buf = Vec::new();
        mesh.write_text(&mut buf, Some(&values)).unwrap();
        let (back, vals) = Mesh::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.nodes, mesh.nodes);
        assert_eq!(back.triangles, mesh.triangles);
        assert_eq!(back.boundary, mesh.boundary);
        assert_eq!(vals.unwrap(), values);
    }
}
