//! Dense voxel grids, used both for phantoms and for reconstructions.
//!
//! On disk a volume is a JSON header (`<stem>.json`) next to raw
//! little-endian `f32` values (`<stem>.raw`), x fastest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Voxel lattice: `dims` voxels of edge `voxel_size` mm, with the outer
/// corner of voxel (0,0,0) at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub origin: Vec3,
}

impl Grid {
    /// Grid centred on the world origin.
    pub fn centered(dims: [usize; 3], voxel_size: f64) -> Result<Grid> {
        let half = |n: usize| -(n as f64) * voxel_size / 2.0;
        let g = Grid {
            dims,
            voxel_size,
            origin: Vec3::new(half(dims[0]), half(dims[1]), half(dims[2])),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::invalid(format!("grid dims must be positive, got {:?}", self.dims)));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::invalid(format!("voxel size must be positive, got {}", self.voxel_size)));
        }
        if !self.origin.is_finite() {
            return Err(Error::invalid("grid origin is not finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let s = self.voxel_size;
        self.origin + Vec3::new((x as f64 + 0.5) * s, (y as f64 + 0.5) * s, (z as f64 + 0.5) * s)
    }

    /// Far corner of the grid box.
    pub fn max_corner(&self) -> Vec3 {
        let s = self.voxel_size;
        self.origin
            + Vec3::new(
                self.dims[0] as f64 * s,
                self.dims[1] as f64 * s,
                self.dims[2] as f64 * s,
            )
    }

    /// Voxel box covering the world-space box `center ± half_extent`
    /// (voxels whose centres fall inside), clipped to the grid.
    pub fn voxel_box(&self, center: Vec3, half_extent: Vec3) -> Result<VoxelBox> {
        let lo = center - half_extent;
        let hi = center + half_extent;
        let mut min = [0usize; 3];
        let mut max = [0usize; 3];
        for k in 0..3 {
            let o = self.origin.as_array()[k];
            let (l, h) = (lo.as_array()[k], hi.as_array()[k]);
            // voxel i has centre o + (i + 0.5)s
            let first = ((l - o) / self.voxel_size - 0.5).ceil().max(0.0);
            let last = ((h - o) / self.voxel_size - 0.5).floor().min(self.dims[k] as f64 - 1.0);
            if last < first {
                return Err(Error::invalid("box contains no voxel centre"));
            }
            min[k] = first as usize;
            max[k] = last as usize + 1;
        }
        Ok(VoxelBox { min, max })
    }
}

/// Half-open voxel index box `[min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl VoxelBox {
    pub fn len(&self) -> usize {
        (0..3).map(|k| self.max[k].saturating_sub(self.min[k])).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fits(&self, dims: [usize; 3]) -> bool {
        (0..3).all(|k| self.max[k] <= dims[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: Grid,
    pub values: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeHeader {
    dims: [usize; 3],
    voxel_size: f64,
    origin: Vec3,
    dtype: String,
    layout: String,
}

const DTYPE: &str = "f32le";
const LAYOUT: &str = "x-fastest";

impl Volume {
    pub fn zeros(grid: Grid) -> Volume {
        Volume {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f32>) -> Result<Volume> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::DimMismatch(format!(
                "{} values for a grid of {} voxels",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("volume values must be finite"));
        }
        Ok(Volume { grid, values })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.grid.index(x, y, z)]
    }

    pub fn box_values(&self, b: &VoxelBox) -> Vec<f32> {
        let mut out = Vec::with_capacity(b.len());
        for z in b.min[2]..b.max[2] {
            for y in b.min[1]..b.max[1] {
                for x in b.min[0]..b.max[0] {
                    out.push(self.get(x, y, z));
                }
            }
        }
        out
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    fn paths(stem: &Path) -> (PathBuf, PathBuf) {
        (stem.with_extension("json"), stem.with_extension("raw"))
    }

    /// Writes `<stem>.json` and `<stem>.raw`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let (header_path, raw_path) = Self::paths(stem);
        let header = VolumeHeader {
            dims: self.grid.dims,
            voxel_size: self.grid.voxel_size,
            origin: self.grid.origin,
            dtype: DTYPE.into(),
            layout: LAYOUT.into(),
        };
        let json = serde_json::to_string_pretty(&header).expect("header serializes");
        std::fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;
        write_f32_file(&raw_path, &self.values)
    }

    pub fn load(stem: &Path) -> Result<Volume> {
        let (header_path, raw_path) = Self::paths(stem);
        let text = std::fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
        let h: VolumeHeader =
            serde_json::from_str(&text).map_err(|e| Error::format(&header_path, e.to_string()))?;
        if h.dtype != DTYPE || h.layout != LAYOUT {
            return Err(Error::format(&header_path, "unsupported dtype or layout"));
        }
        let grid = Grid {
            dims: h.dims,
            voxel_size: h.voxel_size,
            origin: h.origin,
        };
        grid.validate().map_err(|e| Error::format(&header_path, e.to_string()))?;
        let values = read_f32_file(&raw_path, grid.len())?;
        Volume::from_values(grid, values)
    }

    /// Centre slices through the volume as 8-bit PGM images, grey levels
    /// spanning `window`: `<stem>_xy.pgm`, `<stem>_xz.pgm`, `<stem>_yz.pgm`.
    pub fn save_center_slices(&self, stem: &Path, window: (f32, f32)) -> Result<Vec<PathBuf>> {
        let [nx, ny, nz] = self.grid.dims;
        let (cx, cy, cz) = (nx / 2, ny / 2, nz / 2);
        let slices: [(&str, usize, usize, Box<dyn Fn(usize, usize) -> f32 + '_>); 3] = [
            ("xy", nx, ny, Box::new(move |a, b| self.get(a, b, cz))),
            ("xz", nx, nz, Box::new(move |a, b| self.get(a, cy, b))),
            ("yz", ny, nz, Box::new(move |a, b| self.get(cx, a, b))),
        ];
        let (lo, hi) = window;
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut written = Vec::new();
        for (name, w, h, at) in slices {
            let path = PathBuf::from(format!("{}_{name}.pgm", stem.display()));
            let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
            // image row 0 is the top: highest second coordinate
            for b in (0..h).rev() {
                for a in 0..w {
                    let g = ((at(a, b) - lo) / span).clamp(0.0, 1.0);
                    bytes.push((g * 255.0).round() as u8);
                }
            }
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

pub(crate) fn write_f32_file(path: &Path, values: &[f32]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_f32_file(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!("expected {} bytes ({expected} f32 values), found {}", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_grid_is_symmetric() {
        let g = Grid::centered([4, 6, 8], 0.5).unwrap();
        assert_eq!(g.origin, Vec3::new(-1.0, -1.5, -2.0));
        assert_eq!(g.max_corner(), Vec3::new(1.0, 1.5, 2.0));
        assert_eq!(g.voxel_center(0, 0, 0), Vec3::new(-0.75, -1.25, -1.75));
    }

    #[test]
    fn voxel_box_selects_centres() {
        let g = Grid::centered([8, 8, 8], 1.0).unwrap();
        let b = g.voxel_box(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(b, VoxelBox { min: [3, 3, 3], max: [5, 5, 5] });
        let b = g.voxel_box(Vec3::ZERO, Vec3::new(100.0, 0.6, 0.6)).unwrap();
        assert_eq!(b, VoxelBox { min: [0, 3, 3], max: [8, 5, 5] });
        assert!(g.voxel_box(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.1, 0.1, 0.1)).is_err());
    }

    #[test]
    fn save_load_and_slices() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::centered([3, 4, 5], 0.7).unwrap();
        let values: Vec<f32> = (0..g.len()).map(|i| i as f32 * 0.25).collect();
        let v = Volume::from_values(g, values).unwrap();
        let stem = dir.path().join("vol");
        v.save(&stem).unwrap();
        assert_eq!(Volume::load(&stem).unwrap(), v);
        let files = v.save_center_slices(&stem, v.min_max()).unwrap();
        let xy = std::fs::read(&files[0]).unwrap();
        assert!(xy.starts_with(b"P5\n3 4\n255\n"));
        assert_eq!(xy.len(), b"P5\n3 4\n255\n".len() + 12);
    }

    #[test]
    fn truncated_raw_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::centered([2, 2, 2], 1.0).unwrap();
        let stem = dir.path().join("v");
        Volume::zeros(g).save(&stem).unwrap();
        std::fs::write(stem.with_extension("raw"), [0u8; 7]).unwrap();
        match Volume::load(&stem) {
            Err(Error::Format { path, .. }) => assert!(path.ends_with("v.raw")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
