//! Convex polyhedra, normal cones, boundary condition checks and path
//! margins.
//!
//! A polyhedron is an intersection of half-spaces `<v, x - a> <= 0`. The
//! volatility constraint set for a level `xi` is
//! `K(xi) = ∩_k {x : <h_k, x> >= xi}` (see [`shifted_polyhedron`]).

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coefficients::{dot, Coefficients};
use crate::error::{Error, Result};
use crate::grid::SamplePath;
use crate::rng::RandomSource;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpace {
    pub anchor: Vec<f64>,
    /// Outward normal.
    pub normal: Vec<f64>,
}

impl HalfSpace {
    pub fn new(anchor: Vec<f64>, normal: Vec<f64>) -> Result<Self> {
        if anchor.len() != normal.len() {
            return Err(Error::Dimension(format!(
                "half-space anchor has {} entries, normal has {}",
                anchor.len(),
                normal.len()
            )));
        }
        if normal.iter().all(|&v| v == 0.0) {
            return Err(Error::Domain("half-space normal must be nonzero".into()));
        }
        Ok(Self { anchor, normal })
    }

    /// `<v, x - a>`: nonpositive inside.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.normal
            .iter()
            .zip(x.iter().zip(&self.anchor))
            .map(|(v, (x, a))| v * (x - a))
            .sum()
    }

    /// Right-hand side `<v, a>` of the form `<v, x> <= c`.
    pub fn offset(&self) -> f64 {
        dot(&self.normal, &self.anchor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polyhedron {
    faces: Vec<HalfSpace>,
}

impl Polyhedron {
    pub fn new(faces: Vec<HalfSpace>) -> Result<Self> {
        let Some(first) = faces.first() else {
            return Err(Error::Domain("polyhedron needs at least one face".into()));
        };
        let d = first.normal.len();
        if faces.iter().any(|f| f.normal.len() != d || f.anchor.len() != d) {
            return Err(Error::Dimension("polyhedron faces differ in dimension".into()));
        }
        Ok(Self { faces })
    }

    pub fn dim(&self) -> usize {
        self.faces[0].normal.len()
    }

    pub fn faces(&self) -> &[HalfSpace] {
        &self.faces
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.faces.iter().all(|f| f.value(x) <= tol)
    }

    /// `min_k -<v_k, x - a_k>`, positive in the interior.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.faces
            .iter()
            .map(|f| -f.value(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn active_faces(&self, x: &[f64], tol: f64) -> Vec<usize> {
        (0..self.faces.len())
            .filter(|&k| self.faces[k].value(x).abs() <= tol)
            .collect()
    }

    /// Outward normals of the faces active at `x`; they generate the normal
    /// cone there. Empty in the interior.
    pub fn normal_cone_generators(&self, x: &[f64], tol: f64) -> Vec<Vec<f64>> {
        self.active_faces(x, tol)
            .into_iter()
            .map(|k| self.faces[k].normal.clone())
            .collect()
    }

    /// Euclidean projection of `x` onto the polyhedron.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has {} entries, polyhedron lives in R^{}",
                x.len(),
                self.dim()
            )));
        }
        if self.contains(x, 0.0) {
            return Ok(x.to_vec());
        }
        if self.faces.len() <= MAX_ENUMERATED_FACES {
            if let Some(y) = self.project_active_set(x) {
                return Ok(y);
            }
        }
        self.project_hildreth(x)
    }

    // Tries every active set of size <= d in order of size and keeps the
    // nearest KKT point.
    fn project_active_set(&self, x: &[f64]) -> Option<Vec<f64>> {
        let m = self.faces.len();
        let d = self.dim();
        let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let tol = 1e-12 * scale;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << m) {
            let set: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
            if set.len() > d {
                continue;
            }
            let q = set.len();
            let gram = DMatrix::from_fn(q, q, |i, j| {
                dot(&self.faces[set[i]].normal, &self.faces[set[j]].normal)
            });
            let rhs = DVector::from_fn(q, |i, _| self.faces[set[i]].value(x));
            let Some(lambda) = gram.lu().solve(&rhs) else {
                continue;
            };
            if lambda.iter().any(|&l| l < -tol || !l.is_finite()) {
                continue;
            }
            let mut y = x.to_vec();
            for (i, &k) in set.iter().enumerate() {
                for (yj, vj) in y.iter_mut().zip(&self.faces[k].normal) {
                    *yj -= lambda[i] * vj;
                }
            }
            if !self.contains(&y, tol) {
                continue;
            }
            let dist: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().map_or(true, |(b, _)| dist < *b) {
                best = Some((dist, y));
            }
        }
        best.map(|(_, y)| y)
    }

    // Dual coordinate ascent for min |y - x|^2 subject to <v_k, y> <= c_k.
    fn project_hildreth(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.faces.len();
        let norms: Vec<f64> = self.faces.iter().map(|f| dot(&f.normal, &f.normal)).collect();
        let mut lambda = vec![0.0; m];
        let mut y = x.to_vec();
        for _ in 0..HILDRETH_MAX_SWEEPS {
            let mut change = 0.0f64;
            for k in 0..m {
                let f = &self.faces[k];
                let next = (lambda[k] + f.value(&y) / norms[k]).max(0.0);
                let delta = next - lambda[k];
                if delta != 0.0 {
                    for (yj, vj) in y.iter_mut().zip(&f.normal) {
                        *yj -= delta * vj;
                    }
                    lambda[k] = next;
                    change = change.max(delta.abs());
                }
            }
            if change < 1e-15 {
                return Ok(y);
            }
        }
        if self.contains(&y, 1e-9) {
            Ok(y)
        } else {
            Err(Error::Domain("projection onto the polyhedron did not converge".into()))
        }
    }

    /// Vertices of `P ∩ box`.
    pub fn vertices(&self, bbox: &BoundingBox) -> Result<Vec<Vec<f64>>> {
        let rows: Vec<(Vec<f64>, f64)> = self
            .faces
            .iter()
            .map(|f| (f.normal.clone(), f.offset()))
            .chain(bbox.half_planes())
            .collect();
        enumerate_vertices(&rows, &[], self.dim())
    }

    /// A strict interior point of `P ∩ box` (the vertex centroid) and its
    /// slack, or `None` when the intersection has empty interior.
    pub fn interior_point(&self, bbox: &BoundingBox) -> Result<Option<(Vec<f64>, f64)>> {
        let verts = self.vertices(bbox)?;
        if verts.is_empty() {
            return Ok(None);
        }
        let d = self.dim();
        let mut c = vec![0.0; d];
        for v in &verts {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi / verts.len() as f64;
            }
        }
        let margin = self.slack(&c).min(bbox.slack(&c));
        Ok((margin > 0.0).then_some((c, margin)))
    }
}

const MAX_ENUMERATED_FACES: usize = 12;
const HILDRETH_MAX_SWEEPS: usize = 100_000;

/// `K(xi) = ∩_k Π((xi / h_k[i_k]) e_{i_k}, -h_k)`, i.e. `<h_k, x> >= xi`.
pub fn shifted_polyhedron(h: &[Vec<f64>], anchors: &[usize], xi: f64) -> Result<Polyhedron> {
    if h.len() != anchors.len() {
        return Err(Error::Dimension(format!(
            "{} projection vectors but {} anchor indices",
            h.len(),
            anchors.len()
        )));
    }
    let faces = h
        .iter()
        .zip(anchors)
        .enumerate()
        .map(|(k, (hk, &i))| {
            let coord = *hk.get(i).ok_or_else(|| {
                Error::Dimension(format!("anchor index {i} out of range for h[{k}]"))
            })?;
            if coord == 0.0 {
                return Err(Error::Domain(format!(
                    "h[{k}] has a zero entry at its anchor index {i}"
                )));
            }
            let mut anchor = vec![0.0; hk.len()];
            anchor[i] = xi / coord;
            HalfSpace::new(anchor, hk.iter().map(|v| -v).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Polyhedron::new(faces)
}

/// Axis-aligned box used to bound boundary sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension("box bounds differ in dimension".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Domain("box needs finite lower < upper in every coordinate".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(d: usize, radius: f64) -> Result<Self> {
        Self::new(vec![-radius; d], vec![radius; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }

    fn slack(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| (x - l).min(u - x))
            .fold(f64::INFINITY, f64::min)
    }

    fn half_planes(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        let d = self.dim();
        (0..d).flat_map(move |i| {
            let mut up = vec![0.0; d];
            up[i] = 1.0;
            let mut down = vec![0.0; d];
            down[i] = -1.0;
            [(up, self.upper[i]), (down, -self.lower[i])]
        })
    }
}

/// Vertices of `{x : <g, x> <= c for (g, c) in rows, <g, x> = c for eqs}`.
fn enumerate_vertices(
    rows: &[(Vec<f64>, f64)],
    eqs: &[(Vec<f64>, f64)],
    d: usize,
) -> Result<Vec<Vec<f64>>> {
    if eqs.len() > d {
        return Ok(Vec::new());
    }
    let free = d - eqs.len();
    let scale = rows
        .iter()
        .chain(eqs)
        .map(|(_, c)| c.abs())
        .fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut pick = Vec::with_capacity(free);
    let mut candidate = |pick: &[usize]| {
        let sys: Vec<&(Vec<f64>, f64)> = eqs.iter().chain(pick.iter().map(|&i| &rows[i])).collect();
        let a = DMatrix::from_fn(d, d, |i, j| sys[i].0[j]);
        let b = DVector::from_fn(d, |i, _| sys[i].1);
        let lu = a.lu();
        if lu.determinant().abs() < 1e-12 {
            return;
        }
        let Some(x) = lu.solve(&b) else {
            return;
        };
        let x: Vec<f64> = x.iter().copied().collect();
        if rows.iter().all(|(g, c)| dot(g, &x) <= c + tol)
            && !out
                .iter()
                .any(|v| v.iter().zip(&x).all(|(p, q)| (p - q).abs() <= tol))
        {
            out.push(x);
        }
    };
    combinations(rows.len(), free, &mut pick, 0, &mut candidate);
    Ok(out)
}

fn combinations(n: usize, k: usize, pick: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..n {
        if n - i < k - pick.len() {
            break;
        }
        pick.push(i);
        combinations(n, k, pick, i + 1, f);
        pick.pop();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// Normal-cone conditions on the boundary of the polyhedron.
    Cone,
    /// Invariance conditions on each full face hyperplane.
    Hyperplane,
}

impl std::str::FromStr for CheckMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cone" => Ok(Self::Cone),
            "hyperplane" => Ok(Self::Hyperplane),
            other => Err(Error::Domain(format!(
                "unknown check mode {other:?} (expected cone or hyperplane)"
            ))),
        }
    }
}

impl std::fmt::Display for CheckMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Cone => "cone",
            Self::Hyperplane => "hyperplane",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub samples_per_face: usize,
    pub bbox: BoundingBox,
    pub tol: f64,
    pub seed: u64,
}

impl CheckOptions {
    pub fn new(bbox: BoundingBox) -> Self {
        Self {
            samples_per_face: 256,
            bbox,
            tol: DEFAULT_TOLERANCE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceStatus {
    Pass,
    Fail,
    Unsampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point: Vec<f64>,
    /// Which inner product failed, e.g. `<h, sigma[:,0]>`.
    pub quantity: String,
    pub value: f64,
    /// Amount by which the condition is exceeded.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceReport {
    pub face: usize,
    pub status: FaceStatus,
    pub samples: usize,
    pub vertices: usize,
    /// True when the verdict is exact (affine fields checked at every
    /// vertex of the sampled region).
    pub certified: bool,
    pub worst: Option<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub mode: CheckMode,
    pub xi: f64,
    pub tol: f64,
    pub faces: Vec<FaceReport>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.faces.iter().all(|f| f.status == FaceStatus::Pass)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode {}  xi {}  tol {:e}", self.mode, self.xi, self.tol);
        let _ = writeln!(
            out,
            "{:<6}{:<11}{:>9}{:>10}{:>11}  worst",
            "face", "status", "samples", "vertices", "certified"
        );
        for f in &self.faces {
            let status = match f.status {
                FaceStatus::Pass => "pass",
                FaceStatus::Fail => "FAIL",
                FaceStatus::Unsampled => "unsampled",
            };
            let worst = f.worst.as_ref().map_or_else(
                || "-".to_string(),
                |v| format!("{} = {:.6e} at {:?}", v.quantity, v.value, v.point),
            );
            let _ = writeln!(
                out,
                "{:<6}{:<11}{:>9}{:>10}{:>11}  {}",
                f.face,
                status,
                f.samples,
                f.vertices,
                if f.certified { "yes" } else { "no" },
                worst
            );
        }
        out
    }
}

/// Checks the boundary conditions of `coeffs` on every face of `poly` at
/// the level `xi`.
///
/// Cone mode: on `face ∩ P ∩ box`, with `s` the face's outward normal,
/// `<s, mu> <= tol` and `<s, sigma[:, j]> <= tol` for every column.
/// Hyperplane mode: on the full hyperplane `∩ box`, with `h = -s`,
/// `<h, mu> >= -tol` and `|<h, sigma[:, j]>| <= tol`.
pub fn check_viability_conditions(
    coeffs: &dyn Coefficients,
    poly: &Polyhedron,
    xi: f64,
    mode: CheckMode,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    let d = poly.dim();
    if coeffs.dim() != d || opts.bbox.dim() != d {
        return Err(Error::Dimension(format!(
            "coefficients in R^{}, polyhedron in R^{d}, box in R^{}",
            coeffs.dim(),
            opts.bbox.dim()
        )));
    }
    let affine = coeffs.as_affine().is_some();
    let box_rows: Vec<(Vec<f64>, f64)> = opts.bbox.half_planes().collect();
    let faces = (0..poly.faces().len())
        .map(|k| {
            let face = &poly.faces()[k];
            let eq = [(face.normal.clone(), face.offset())];
            let mut rows = box_rows.clone();
            if mode == CheckMode::Cone {
                rows.extend(
                    poly.faces()
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != k)
                        .map(|(_, f)| (f.normal.clone(), f.offset())),
                );
            }
            let vertices = if affine {
                enumerate_vertices(&rows, &eq, d)?
            } else {
                Vec::new()
            };
            let mut rng = RandomSource::for_stream(opts.seed, k as u64, mode as u64);
            let samples = sample_face(face, poly, k, mode, opts, &mut rng);
            let mut worst: Option<Violation> = None;
            for x in vertices.iter().chain(&samples) {
                if let Some(v) = evaluate(coeffs, &face.normal, xi, x, mode, opts.tol) {
                    if worst.as_ref().map_or(true, |w| v.excess > w.excess) {
                        worst = Some(v);
                    }
                }
            }
            let status = if worst.is_some() {
                FaceStatus::Fail
            } else if vertices.is_empty() && samples.is_empty() {
                FaceStatus::Unsampled
            } else {
                FaceStatus::Pass
            };
            Ok(FaceReport {
                face: k,
                status,
                samples: samples.len(),
                vertices: vertices.len(),
                certified: affine && !vertices.is_empty(),
                worst,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditionReport {
        mode,
        xi,
        tol: opts.tol,
        faces,
    })
}

// Uniform points on the face hyperplane inside the box, solved for the
// coordinate with the largest normal entry. Cone mode also rejects points
// outside the other constraints.
fn sample_face(
    face: &HalfSpace,
    poly: &Polyhedron,
    k: usize,
    mode: CheckMode,
    opts: &CheckOptions,
    rng: &mut RandomSource,
) -> Vec<Vec<f64>> {
    let d = face.normal.len();
    let pivot = (0..d)
        .max_by(|&a, &b| face.normal[a].abs().total_cmp(&face.normal[b].abs()))
        .unwrap_or(0);
    let c = face.offset();
    let mut out = Vec::with_capacity(opts.samples_per_face);
    let max_attempts = 64 * opts.samples_per_face.max(1);
    for _ in 0..max_attempts {
        if out.len() >= opts.samples_per_face {
            break;
        }
        let mut x: Vec<f64> = (0..d)
            .map(|i| opts.bbox.lower[i] + rng.uniform() * (opts.bbox.upper[i] - opts.bbox.lower[i]))
            .collect();
        let rest: f64 = (0..d).filter(|&i| i != pivot).map(|i| face.normal[i] * x[i]).sum();
        x[pivot] = (c - rest) / face.normal[pivot];
        if !opts.bbox.contains(&x, 0.0) {
            continue;
        }
        if mode == CheckMode::Cone
            && poly
                .faces()
                .iter()
                .enumerate()
                .any(|(j, f)| j != k && f.value(&x) > opts.tol)
        {
            continue;
        }
        out.push(x);
    }
    out
}

fn evaluate(
    coeffs: &dyn Coefficients,
    normal: &[f64],
    xi: f64,
    x: &[f64],
    mode: CheckMode,
    tol: f64,
) -> Option<Violation> {
    let d = coeffs.dim();
    let e = coeffs.noise_dim();
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d * e];
    coeffs.drift_into(xi, x, &mut mu);
    coeffs.diffusion_into(xi, x, &mut sigma);
    let column = |j: usize| -> f64 { (0..d).map(|i| normal[i] * sigma[i * e + j]).sum() };
    let s_mu = dot(normal, &mu);
    let mut worst: Option<Violation> = None;
    let mut consider = |quantity: String, value: f64, excess: f64| {
        if excess > 0.0 && worst.as_ref().map_or(true, |w| excess > w.excess) {
            worst = Some(Violation {
                point: x.to_vec(),
                quantity,
                value,
                excess,
            });
        }
    };
    match mode {
        CheckMode::Cone => {
            consider("<s, mu>".into(), s_mu, s_mu - tol);
            for j in 0..e {
                let v = column(j);
                consider(format!("<s, sigma[:,{j}]>"), v, v - tol);
            }
        }
        CheckMode::Hyperplane => {
            consider("<h, mu>".into(), -s_mu, s_mu - tol);
            for j in 0..e {
                let v = -column(j);
                consider(format!("<h, sigma[:,{j}]>"), v, v.abs() - tol);
            }
        }
    }
    worst
}

/// `min_i slack(P, path(t_i))`.
pub fn path_viability_margin(path: &SamplePath, poly: &Polyhedron) -> f64 {
    path.rows().map(|r| poly.slack(r)).fold(f64::INFINITY, f64::min)
}

/// `slack(P, path(t_i))` for every grid time.
pub fn margin_series(path: &SamplePath, poly: &Polyhedron) -> Vec<f64> {
    path.rows().map(|r| poly.slack(r)).collect()
}
