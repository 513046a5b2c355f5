//! Cone-beam acquisition geometry.
//!
//! World units are millimetres in a right-handed frame. A [`Pose`] is a point
//! source plus a flat detector whose normal points back at the source; the
//! detector pixel `(row, col)` is centred at
//! `detector_center + (col + 0.5 - cols/2)·pitch·u + (row + 0.5 - rows/2)·pitch·v`.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > f64::MIN_POSITIVE && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.as_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Flat-panel detector layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub rows: usize,
    pub cols: usize,
    /// Pixel pitch in mm.
    pub pitch: f64,
}

impl DetectorSpec {
    /// 256 × 256 pixels at 450 µm, an 11.52 cm square panel.
    pub const FULL_SCALE: DetectorSpec = DetectorSpec {
        rows: 256,
        cols: 256,
        pitch: 0.45,
    };

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("detector must have at least one row and column"));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::invalid(format!("pixel pitch must be positive, got {}", self.pitch)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub source: Vec3,
    pub detector_center: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub pitch: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Pose {
    /// Source at `source`, detector centred `sdd` mm away along the ray through
    /// `target`, facing the source.
    pub fn aimed(source: Vec3, target: Vec3, sdd: f64, detector: DetectorSpec) -> Result<Pose> {
        detector.validate()?;
        if !(sdd > 0.0 && sdd.is_finite()) {
            return Err(Error::invalid(format!("sdd must be positive, got {sdd}")));
        }
        let w = viewing_direction(source, target)?;
        let up = if w.z.abs() < 0.9 { Vec3::Z } else { Vec3::X };
        let u = up.cross(w).normalized().expect("helper axis is not parallel to w");
        let v = w.cross(u);
        let pose = Pose {
            source,
            detector_center: source + w * sdd,
            u,
            v,
            pitch: detector.pitch,
            rows: detector.rows,
            cols: detector.cols,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn detector(&self) -> DetectorSpec {
        DetectorSpec {
            rows: self.rows,
            cols: self.cols,
            pitch: self.pitch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector().validate()?;
        let fields = [self.source, self.detector_center, self.u, self.v];
        if !fields.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateGeometry("non-finite pose component".into()));
        }
        if (self.u.norm() - 1.0).abs() > ORTHO_TOL || (self.v.norm() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::DegenerateGeometry("detector axes must be unit vectors".into()));
        }
        if self.u.dot(self.v).abs() > ORTHO_TOL {
            return Err(Error::DegenerateGeometry("detector axes must be orthogonal".into()));
        }
        if (self.detector_center - self.source).norm() <= 0.0 {
            return Err(Error::DegenerateGeometry("source coincides with detector centre".into()));
        }
        Ok(())
    }

    /// Source-to-detector distance.
    pub fn sdd(&self) -> f64 {
        (self.detector_center - self.source).norm()
    }

    /// Unit detector normal, pointing from the source towards the detector.
    pub fn normal(&self) -> Vec3 {
        (self.detector_center - self.source) / self.sdd()
    }

    pub fn magnification(&self, object_point: Vec3) -> f64 {
        self.sdd() / (object_point - self.source).norm()
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> Vec3 {
        let du = (col as f64 + 0.5 - self.cols as f64 / 2.0) * self.pitch;
        let dv = (row as f64 + 0.5 - self.rows as f64 / 2.0) * self.pitch;
        self.detector_center + self.u * du + self.v * dv
    }

    /// Continuous detector coordinates `(row, col)` of the perspective
    /// projection of `point`; pixel `(r, c)` spans `[r, r+1) × [c, c+1)`.
    /// `None` if the point is not in front of the source.
    pub fn project(&self, point: Vec3) -> Option<(f64, f64)> {
        let w = self.normal();
        let depth = (point - self.source).dot(w);
        if depth <= 0.0 {
            return None;
        }
        let t = self.sdd() / depth;
        let hit = self.source + (point - self.source) * t;
        let rel = hit - self.detector_center;
        let col = rel.dot(self.u) / self.pitch + self.cols as f64 / 2.0;
        let row = rel.dot(self.v) / self.pitch + self.rows as f64 / 2.0;
        Some((row, col))
    }

    /// Whether the ray from the source through `point` lands on the detector.
    pub fn hits_detector(&self, point: Vec3) -> bool {
        match self.project(point) {
            Some((r, c)) => r >= 0.0 && c >= 0.0 && r < self.rows as f64 && c < self.cols as f64,
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    SphericalCandidates,
    Circular,
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(kind: TrajectoryKind, poses: Vec<Pose>) -> Result<Self> {
        let t = Trajectory { kind, poses };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .poses
            .first()
            .ok_or_else(|| Error::invalid("trajectory has no poses"))?;
        for (i, p) in self.poses.iter().enumerate() {
            p.validate()?;
            if p.detector() != first.detector() {
                return Err(Error::invalid(format!(
                    "pose {i} detector differs from pose 0"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Subset of poses, in the given order.
    pub fn select(&self, ids: &[usize], kind: TrajectoryKind) -> Result<Trajectory> {
        let poses = ids
            .iter()
            .map(|&i| {
                self.poses
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("pose id {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(kind, poses)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Trajectory = serde_json::from_str(s)
            .map_err(|e| Error::format("<trajectory json>", e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: Trajectory =
            serde_json::from_str(&s).map_err(|e| Error::format(path, e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

/// Volume of interest: an axis-aligned box around the evaluated point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Voi {
    pub center: Vec3,
    pub half_extent: Vec3,
}

impl Voi {
    pub fn new(center: Vec3, half_extent: Vec3) -> Result<Self> {
        let h = half_extent;
        if !(h.x > 0.0 && h.y > 0.0 && h.z > 0.0) || !h.is_finite() || !center.is_finite() {
            return Err(Error::invalid(format!("VOI half extent must be positive, got {h}")));
        }
        Ok(Voi { center, half_extent })
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let c = self.center;
        let h = self.half_extent;
        let mut out = [Vec3::ZERO; 8];
        for (i, o) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *o = c + Vec3::new(sx * h.x, sy * h.y, sz * h.z);
        }
        out
    }
}

/// Axis-aligned rectangle of detector pixels, `rows × cols` starting at
/// `(row0, col0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelRect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PixelRect {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fits(&self, rows: usize, cols: usize) -> bool {
        self.row0 + self.rows <= rows && self.col0 + self.cols <= cols
    }

    pub fn contains(&self, other: &PixelRect) -> bool {
        other.row0 >= self.row0
            && other.col0 >= self.col0
            && other.row0 + other.rows <= self.row0 + self.rows
            && other.col0 + other.cols <= self.col0 + self.cols
    }

    /// Row-major linear pixel indices for a detector with `width` columns.
    pub fn indices(&self, width: usize) -> impl Iterator<Item = usize> + '_ {
        (self.row0..self.row0 + self.rows)
            .flat_map(move |r| (self.col0..self.col0 + self.cols).map(move |c| r * width + c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roi {
    pub rect: PixelRect,
    /// The projected VOI extended past the detector edge and was clipped.
    pub clamped: bool,
}

/// Quasi-uniform candidate sources on a sphere of `radius` around `center`
/// (Fibonacci lattice), each with its detector diametrically opposite.
pub fn spherical_trajectory(
    n: usize,
    center: Vec3,
    radius: f64,
    sdd: f64,
    detector: DetectorSpec,
) -> Result<Trajectory> {
    check_orbit(n, radius, sdd)?;
    let poses = fibonacci_sphere(n)
        .into_iter()
        .map(|dir| Pose::aimed(center + dir * radius, center, sdd, detector))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(TrajectoryKind::SphericalCandidates, poses)
}

/// `n` equally spaced sources on the circle of `radius` around `center` in
/// the plane with normal `plane_normal`. The first source lies along the
/// in-plane direction closest to +x.
pub fn circular_trajectory(
    n: usize,
    center: Vec3,
    radius: f64,
    sdd: f64,
    plane_normal: Vec3,
    detector: DetectorSpec,
) -> Result<Trajectory> {
    check_orbit(n, radius, sdd)?;
    let normal = plane_normal
        .normalized()
        .ok_or_else(|| Error::invalid("circular trajectory plane normal is zero"))?;
    let helper = if normal.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    let e1 = (helper - normal * helper.dot(normal))
        .normalized()
        .expect("helper is not parallel to the normal");
    let e2 = normal.cross(e1);
    let poses = (0..n)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let dir = e1 * angle.cos() + e2 * angle.sin();
            Pose::aimed(center + dir * radius, center, sdd, detector)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(TrajectoryKind::Circular, poses)
}

fn check_orbit(n: usize, radius: f64, sdd: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("trajectory needs at least one pose"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    if !(sdd > radius && sdd.is_finite()) {
        return Err(Error::invalid(format!(
            "sdd ({sdd}) must exceed the source radius ({radius})"
        )));
    }
    Ok(())
}

pub(crate) const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653; // π(3 − √5)

/// Fibonacci lattice with `n` points on the full unit sphere,
/// z_i = 1 − (2i+1)/n.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            spiral_point(i, z)
        })
        .collect()
}

pub(crate) fn spiral_point(i: usize, z: f64) -> Vec3 {
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = i as f64 * GOLDEN_ANGLE;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Unit vector from `source` towards `p`.
pub fn viewing_direction(source: Vec3, p: Vec3) -> Result<Vec3> {
    (p - source).normalized().ok_or_else(|| {
        Error::DegenerateGeometry(format!("source {source} coincides with the point {p}"))
    })
}

/// Smallest pixel rectangle containing the projection of all eight VOI
/// corners, clipped to the detector.
pub fn voi_to_roi(pose: &Pose, voi: &Voi) -> Result<Roi> {
    let mut rmin = f64::INFINITY;
    let mut rmax = f64::NEG_INFINITY;
    let mut cmin = f64::INFINITY;
    let mut cmax = f64::NEG_INFINITY;
    for corner in voi.corners() {
        let (r, c) = pose
            .project(corner)
            .ok_or_else(|| Error::NoRoi("VOI is not entirely in front of the source".into()))?;
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        cmin = cmin.min(c);
        cmax = cmax.max(c);
    }
    let (rows, cols) = (pose.rows as f64, pose.cols as f64);
    if rmax < 0.0 || cmax < 0.0 || rmin >= rows || cmin >= cols {
        return Err(Error::NoRoi("VOI projects entirely off the detector".into()));
    }
    let clamp = |lo: f64, hi: f64, n: f64| -> (usize, usize, bool) {
        let first = lo.floor();
        let last = hi.floor();
        let clamped = first < 0.0 || last > n - 1.0;
        let first = first.max(0.0) as usize;
        let last = last.min(n - 1.0) as usize;
        (first, last, clamped)
    };
    let (r0, r1, rc) = clamp(rmin, rmax, rows);
    let (c0, c1, cc) = clamp(cmin, cmax, cols);
    Ok(Roi {
        rect: PixelRect {
            row0: r0,
            col0: c0,
            rows: r1 - r0 + 1,
            cols: c1 - c0 + 1,
        },
        clamped: rc || cc,
    })
}
