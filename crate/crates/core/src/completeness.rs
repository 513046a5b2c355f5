//! Tuy-style data completeness at a point `P`.
//!
//! Each sampled unit vector `u` on the upper hemisphere stands for the normal
//! of a Radon plane through `P`. A view with viewing direction `d` measures
//! that plane when `|dᵀu| < sin Δγ`, i.e. `u` lies within Δγ of the great
//! circle perpendicular to `d`. Rows of the completeness matrix are packed
//! into `u64` words so coverage and marginal gain are OR/popcount scans.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{spiral_point, viewing_direction, Trajectory, Vec3};

/// Default angular gap Δγ in degrees.
pub const DEFAULT_DELTA_GAMMA_DEG: f64 = 0.573;

#[derive(Debug, Clone, PartialEq)]
pub struct Hemisphere {
    pub vectors: Vec<Vec3>,
}

impl Hemisphere {
    pub fn m(&self) -> usize {
        self.vectors.len()
    }
}

/// Fibonacci lattice on the upper hemisphere: `z_i = 1 − (i + ½)/m`.
pub fn sample_hemisphere(m: usize) -> Result<Hemisphere> {
    if m == 0 {
        return Err(Error::invalid("hemisphere needs at least one sample"));
    }
    let vectors = (0..m)
        .map(|i| spiral_point(i, 1.0 - (i as f64 + 0.5) / m as f64))
        .collect();
    Ok(Hemisphere { vectors })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletenessMatrix {
    candidate_ids: Vec<usize>,
    index: HashMap<usize, usize>,
    m: usize,
    words: usize,
    bits: Vec<u64>,
    delta_gamma_deg: f64,
    point: Vec3,
}

fn words_for(m: usize) -> usize {
    m.div_ceil(64)
}

impl CompletenessMatrix {
    /// Builds rows from viewing directions (unit vectors) directly.
    pub fn from_directions(
        candidate_ids: Vec<usize>,
        directions: &[Vec3],
        hemisphere: &Hemisphere,
        point: Vec3,
        delta_gamma_deg: f64,
    ) -> Result<Self> {
        if !(delta_gamma_deg > 0.0 && delta_gamma_deg < 90.0) {
            return Err(Error::invalid(format!(
                "delta_gamma must lie in (0°, 90°), got {delta_gamma_deg}"
            )));
        }
        if candidate_ids.len() != directions.len() {
            return Err(Error::DimMismatch(format!(
                "{} ids for {} directions",
                candidate_ids.len(),
                directions.len()
            )));
        }
        let m = hemisphere.m();
        let words = words_for(m);
        let threshold = delta_gamma_deg.to_radians().sin();
        let row = |d: &Vec3| -> Vec<u64> {
            let mut out = vec![0u64; words];
            for (j, u) in hemisphere.vectors.iter().enumerate() {
                if d.dot(*u).abs() < threshold {
                    out[j / 64] |= 1u64 << (j % 64);
                }
            }
            out
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<u64>> = {
            use rayon::prelude::*;
            directions.par_iter().map(row).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<u64>> = directions.iter().map(row).collect();
        Self::from_packed(candidate_ids, m, rows.concat(), delta_gamma_deg, point)
    }

    /// Rows for sources `s_i` looking at `point`: `d_i = (P − s_i)/‖P − s_i‖`.
    pub fn from_sources(
        candidate_ids: Vec<usize>,
        sources: &[Vec3],
        hemisphere: &Hemisphere,
        point: Vec3,
        delta_gamma_deg: f64,
    ) -> Result<Self> {
        let dirs = sources
            .iter()
            .map(|&s| viewing_direction(s, point))
            .collect::<Result<Vec<_>>>()?;
        Self::from_directions(candidate_ids, &dirs, hemisphere, point, delta_gamma_deg)
    }

    /// Rows for every pose of `trajectory` whose central ray through `point`
    /// lands on its detector; the row's id is the pose index.
    pub fn from_trajectory(
        trajectory: &Trajectory,
        hemisphere: &Hemisphere,
        point: Vec3,
        delta_gamma_deg: f64,
    ) -> Result<Self> {
        let (ids, sources): (Vec<usize>, Vec<Vec3>) = trajectory
            .poses
            .iter()
            .enumerate()
            .filter(|(_, pose)| pose.hits_detector(point))
            .map(|(i, pose)| (i, pose.source))
            .unzip();
        Self::from_sources(ids, &sources, hemisphere, point, delta_gamma_deg)
    }

    pub fn from_packed(
        candidate_ids: Vec<usize>,
        m: usize,
        bits: Vec<u64>,
        delta_gamma_deg: f64,
        point: Vec3,
    ) -> Result<Self> {
        let words = words_for(m);
        if bits.len() != candidate_ids.len() * words {
            return Err(Error::DimMismatch(format!(
                "{} words for {} rows of {m} bits",
                bits.len(),
                candidate_ids.len()
            )));
        }
        if !m.is_multiple_of(64) && words > 0 {
            let mask = !0u64 << (m % 64);
            if bits.chunks(words).any(|r| r[words - 1] & mask != 0) {
                return Err(Error::invalid("bits set beyond column M"));
            }
        }
        let mut index = HashMap::with_capacity(candidate_ids.len());
        for (row, &id) in candidate_ids.iter().enumerate() {
            if index.insert(id, row).is_some() {
                return Err(Error::invalid(format!("duplicate candidate id {id}")));
            }
        }
        Ok(CompletenessMatrix {
            candidate_ids,
            index,
            m,
            words,
            bits,
            delta_gamma_deg,
            point,
        })
    }

    /// Number of candidate rows (N).
    pub fn n(&self) -> usize {
        self.candidate_ids.len()
    }

    /// Number of hemisphere columns (M).
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn words_per_row(&self) -> usize {
        self.words
    }

    pub fn candidate_ids(&self) -> &[usize] {
        &self.candidate_ids
    }

    pub fn delta_gamma_deg(&self) -> f64 {
        self.delta_gamma_deg
    }

    pub fn point(&self) -> Vec3 {
        self.point
    }

    pub fn row_of(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    fn row_checked(&self, id: usize) -> Result<usize> {
        self.row_of(id)
            .ok_or_else(|| Error::invalid(format!("unknown candidate id {id}")))
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.bits[row * self.words..(row + 1) * self.words]
    }

    pub fn bit(&self, row: usize, col: usize) -> bool {
        self.row(row)[col / 64] >> (col % 64) & 1 == 1
    }

    /// Row bits as 0/1 values.
    pub fn row_bools(&self, row: usize) -> Vec<bool> {
        (0..self.m).map(|j| self.bit(row, j)).collect()
    }

    pub fn popcount(&self, row: usize) -> u32 {
        self.row(row).iter().map(|w| w.count_ones()).sum()
    }

    /// Fraction of columns hit by at least one of the given candidates.
    pub fn coverage(&self, subset: &[usize]) -> Result<f64> {
        let mut acc = CoverageSet::new(self);
        for &id in subset {
            acc.add_row(self, self.row_checked(id)?);
        }
        Ok(acc.fraction())
    }

    /// Columns newly covered when `candidate` joins `subset`.
    pub fn marginal_gain(&self, subset: &[usize], candidate: usize) -> Result<u32> {
        if subset.contains(&candidate) {
            return Err(Error::invalid(format!("candidate {candidate} is already selected")));
        }
        let row = self.row_checked(candidate)?;
        let mut acc = CoverageSet::new(self);
        for &id in subset {
            acc.add_row(self, self.row_checked(id)?);
        }
        Ok(acc.gain(self, row))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(64 + self.bits.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.n() as u64).to_le_bytes());
        out.extend_from_slice(&(self.m as u64).to_le_bytes());
        out.extend_from_slice(&self.delta_gamma_deg.to_le_bytes());
        for c in self.point.as_array() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for &id in &self.candidate_ids {
            out.extend_from_slice(&(id as u64).to_le_bytes());
        }
        for w in &self.bits {
            out.extend_from_slice(&w.to_le_bytes());
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::format(path, msg.to_string());
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(4).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("not a completeness matrix file"));
        }
        let version = r.u32().ok_or_else(|| bad("truncated header"))?;
        if version != 1 {
            return Err(bad("unsupported version"));
        }
        let n = r.u64().ok_or_else(|| bad("truncated header"))? as usize;
        let m = r.u64().ok_or_else(|| bad("truncated header"))? as usize;
        let dg = r.f64().ok_or_else(|| bad("truncated header"))?;
        let mut p = [0.0; 3];
        for c in &mut p {
            *c = r.f64().ok_or_else(|| bad("truncated header"))?;
        }
        let expected = n
            .checked_mul(8 + words_for(m) * 8)
            .ok_or_else(|| bad("header sizes overflow"))?;
        if bytes.len() - r.pos != expected {
            return Err(bad("body length does not match N and M"));
        }
        let ids = (0..n).map(|_| r.u64().unwrap() as usize).collect();
        let bits = (0..n * words_for(m)).map(|_| r.u64().unwrap()).collect();
        Self::from_packed(ids, m, bits, dg, Vec3::from(p)).map_err(|e| bad(&e.to_string()))
    }

    /// `candidate_id,popcount` per row.
    pub fn write_popcount_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("candidate_id,popcount\n");
        for (row, id) in self.candidate_ids.iter().enumerate() {
            s.push_str(&format!("{id},{}\n", self.popcount(row)));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

const MAGIC: &[u8; 4] = b"CTCM";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Running union of selected rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSet {
    covered: Vec<u64>,
    m: usize,
}

impl CoverageSet {
    pub fn new(c: &CompletenessMatrix) -> Self {
        CoverageSet {
            covered: vec![0; c.words_per_row()],
            m: c.m(),
        }
    }

    pub fn add_row(&mut self, c: &CompletenessMatrix, row: usize) {
        for (acc, w) in self.covered.iter_mut().zip(c.row(row)) {
            *acc |= w;
        }
    }

    pub fn gain(&self, c: &CompletenessMatrix, row: usize) -> u32 {
        self.covered
            .iter()
            .zip(c.row(row))
            .map(|(acc, w)| (w & !acc).count_ones())
            .sum()
    }

    pub fn count(&self) -> u32 {
        self.covered.iter().map(|w| w.count_ones()).sum()
    }

    pub fn fraction(&self) -> f64 {
        if self.m == 0 {
            0.0
        } else {
            self.count() as f64 / self.m as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{circular_trajectory, spherical_trajectory, DetectorSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_matrix(seed: u64, n: usize, m: usize, density: f64) -> CompletenessMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = words_for(m);
        let mut bits = vec![0u64; n * words];
        for i in 0..n {
            for j in 0..m {
                if rng.random::<f64>() < density {
                    bits[i * words + j / 64] |= 1u64 << (j % 64);
                }
            }
        }
        CompletenessMatrix::from_packed((0..n).collect(), m, bits, 1.0, Vec3::ZERO).unwrap()
    }

    #[test]
    fn hemisphere_samples() {
        let h = sample_hemisphere(1).unwrap();
        assert_eq!(h.m(), 1);
        assert!(h.vectors[0].z >= 0.0);
        let h = sample_hemisphere(1000).unwrap();
        assert_eq!(h.m(), 1000);
        for u in &h.vectors {
            assert!((u.norm() - 1.0).abs() < 1e-12);
            assert!(u.z >= 0.0);
        }
        assert!(sample_hemisphere(0).is_err());
    }

    #[test]
    fn hemisphere_gap_ratio() {
        // nearest-neighbour angles for m = 500 measured at 5.60°..6.32°
        let h = sample_hemisphere(500).unwrap();
        let nn: Vec<f64> = h
            .vectors
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let best = h
                    .vectors
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| a.dot(*b))
                    .fold(-1.0f64, f64::max);
                best.clamp(-1.0, 1.0).acos().to_degrees()
            })
            .collect();
        let lo = nn.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = nn.iter().copied().fold(0.0, f64::max);
        assert!(hi / lo < 2.5);
        assert!((hi / lo - 1.1277).abs() < 1e-3, "{}", hi / lo);
    }

    #[test]
    fn orthogonal_and_parallel_pairs() {
        let h = Hemisphere { vectors: vec![Vec3::Y, Vec3::X] };
        let c = CompletenessMatrix::from_directions(vec![0], &[Vec3::X], &h, Vec3::ZERO, 0.573).unwrap();
        assert!(c.bit(0, 0));
        assert!(!c.bit(0, 1));
        assert!((0.573f64.to_radians().sin() - 0.010_000_57).abs() < 1e-8);
    }

    #[test]
    fn antipodal_symmetry() {
        let up = sample_hemisphere(64).unwrap();
        let down = Hemisphere { vectors: up.vectors.iter().map(|&u| -u).collect() };
        let t = spherical_trajectory(30, Vec3::ZERO, 50.0, 100.0, DetectorSpec { rows: 4, cols: 4, pitch: 1.0 }).unwrap();
        let a = CompletenessMatrix::from_trajectory(&t, &up, Vec3::ZERO, 5.0).unwrap();
        let b = CompletenessMatrix::from_trajectory(&t, &down, Vec3::ZERO, 5.0).unwrap();
        assert_eq!(a.bits, b.bits);
    }

    #[test]
    fn detector_hit_filter() {
        let det = DetectorSpec { rows: 8, cols: 8, pitch: 1.0 };
        let t = circular_trajectory(6, Vec3::ZERO, 50.0, 100.0, Vec3::Z, det).unwrap();
        let h = sample_hemisphere(16).unwrap();
        let all = CompletenessMatrix::from_trajectory(&t, &h, Vec3::ZERO, 2.0).unwrap();
        assert_eq!(all.n(), 6);
        // a point far off-axis projects outside the 8 mm panel
        let off = CompletenessMatrix::from_trajectory(&t, &h, Vec3::new(0.0, 0.0, 20.0), 2.0).unwrap();
        assert_eq!(off.n(), 0);
    }

    #[test]
    fn coverage_basics() {
        let c = random_matrix(1, 6, 70, 0.3);
        assert_eq!(c.coverage(&[]).unwrap(), 0.0);
        let ones = CompletenessMatrix::from_packed(
            vec![0, 1],
            70,
            vec![!0, (1 << 6) - 1, !0, (1 << 6) - 1],
            1.0,
            Vec3::ZERO,
        )
        .unwrap();
        assert_eq!(ones.coverage(&[0, 1]).unwrap(), 1.0);
        assert!(c.coverage(&[99]).is_err());
    }

    #[test]
    fn marginal_gain_rules() {
        let c = random_matrix(2, 8, 100, 0.2);
        assert_eq!(c.marginal_gain(&[], 3).unwrap(), c.popcount(3));
        assert!(c.marginal_gain(&[3], 3).is_err());
        let zero = CompletenessMatrix::from_packed(vec![5], 10, vec![0], 1.0, Vec3::ZERO).unwrap();
        assert_eq!(zero.marginal_gain(&[], 5).unwrap(), 0);
        for seed in 0..20 {
            let c = random_matrix(seed, 8, 77, 0.25);
            let subset = [0, 2, 5];
            for cand in [1, 3, 4, 6, 7] {
                let g = c.marginal_gain(&subset, cand).unwrap() as f64;
                let mut with = subset.to_vec();
                with.push(cand);
                let dc = c.coverage(&with).unwrap() - c.coverage(&subset).unwrap();
                assert!((g - 77.0 * dc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = sample_hemisphere(4).unwrap();
        assert!(CompletenessMatrix::from_sources(vec![0], &[Vec3::ZERO], &h, Vec3::ZERO, 1.0).is_err());
        assert!(CompletenessMatrix::from_sources(vec![0], &[Vec3::X], &h, Vec3::ZERO, 0.0).is_err());
        assert!(CompletenessMatrix::from_sources(vec![0], &[Vec3::X], &h, Vec3::ZERO, 90.0).is_err());
        assert!(CompletenessMatrix::from_packed(vec![1, 1], 4, vec![0, 0], 1.0, Vec3::ZERO).is_err());
        assert!(CompletenessMatrix::from_packed(vec![1], 4, vec![1 << 5], 1.0, Vec3::ZERO).is_err());
    }

    #[test]
    fn binary_round_trip_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let h = sample_hemisphere(130).unwrap();
        let t = spherical_trajectory(25, Vec3::ZERO, 50.0, 100.0, DetectorSpec { rows: 4, cols: 4, pitch: 1.0 }).unwrap();
        let c = CompletenessMatrix::from_trajectory(&t, &h, Vec3::ZERO, 3.0).unwrap();
        let path = dir.path().join("c.bin");
        c.save(&path).unwrap();
        assert_eq!(CompletenessMatrix::load(&path).unwrap(), c);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(CompletenessMatrix::load(&path), Err(Error::Format { .. })));
        let csv = dir.path().join("p.csv");
        c.write_popcount_csv(&csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 26);
        assert_eq!(text.lines().nth(1).unwrap(), format!("0,{}", c.popcount(0)));
    }
}
