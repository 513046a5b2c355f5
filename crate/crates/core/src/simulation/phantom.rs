//! Voxel phantoms built from a small JSON descriptor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::volume::{Grid, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    /// Voxel edge in mm.
    pub voxel_size: f64,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Centred cube of `side` voxels with attenuation `mu` (1/mm).
    UniformCube { mu: f64, side: usize },
    /// The built-in anisotropic specimen, scaled to the grid.
    TestSpecimen,
    /// Explicit cube with bores and inserts.
    Specimen(SpecimenSpec),
}

/// Cube of `cube_mu` with cylindrical bores and dense box inserts; later
/// features overwrite earlier ones (bores first, then blocks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecimenSpec {
    pub cube_mu: f64,
    /// Cube edge in mm, centred on the origin.
    pub cube_side: f64,
    #[serde(default)]
    pub bores: Vec<Bore>,
    #[serde(default)]
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Infinite cylinder along `axis` through `center`, clipped to the cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bore {
    pub center: Vec3,
    pub axis: Axis,
    pub radius: f64,
    #[serde(default)]
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub min: Vec3,
    pub max: Vec3,
    pub mu: f64,
}

impl PhantomSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(format!("phantom descriptor: {e}")))
    }

    /// The anisotropic test specimen on a `dims`-cube grid.
    pub fn test_specimen(n: usize, voxel_size: f64) -> Self {
        PhantomSpec {
            dims: [n, n, n],
            voxel_size,
            shape: Shape::TestSpecimen,
        }
    }
}

/// Test-specimen layout for a grid of half-width `h` mm. Lengths scale with
/// `h` and attenuation with `1/h`, so transmission is the same at any scale.
///
/// A 1.5h cube (24 mm at the 32 mm desk grid) long enough that rays along the
/// body diagonals are strongly attenuated, a dense insert in one corner that
/// makes the (+,+,+) octant even darker, and three air bores near the centre
/// giving edge contrast inside the VOI.
pub fn test_specimen_layout(h: f64) -> SpecimenSpec {
    let mu = 0.09 * 16.0 / h;
    let r = 0.09 * h;
    SpecimenSpec {
        cube_mu: mu,
        cube_side: 1.5 * h,
        bores: vec![
            Bore { center: Vec3::new(0.2 * h, 0.0, 0.0), axis: Axis::Z, radius: r, mu: 0.0 },
            Bore { center: Vec3::new(0.0, -0.2 * h, 0.12 * h), axis: Axis::X, radius: r, mu: 0.0 },
            Bore { center: Vec3::new(-0.15 * h, 0.0, -0.18 * h), axis: Axis::Y, radius: 0.6 * r, mu: 0.0 },
        ],
        blocks: vec![Block {
            min: Vec3::new(0.35 * h, 0.35 * h, 0.35 * h),
            max: Vec3::new(0.75 * h, 0.75 * h, 0.75 * h),
            mu: 3.0 * mu,
        }],
    }
}

pub fn build_phantom(spec: &PhantomSpec) -> Result<Volume> {
    let grid = Grid::centered(spec.dims, spec.voxel_size)?;
    let mut vol = Volume::zeros(grid);
    match &spec.shape {
        Shape::UniformCube { mu, side } => {
            check_mu(*mu)?;
            let [nx, ny, nz] = spec.dims;
            let range = |n: usize| {
                let lo = n.saturating_sub(*side) / 2;
                lo..(lo + side).min(n)
            };
            for z in range(nz) {
                for y in range(ny) {
                    for x in range(nx) {
                        let i = grid.index(x, y, z);
                        vol.values[i] = *mu as f32;
                    }
                }
            }
        }
        Shape::TestSpecimen => {
            let h = spec.dims.iter().copied().min().unwrap() as f64 * spec.voxel_size / 2.0;
            paint_specimen(&mut vol, &test_specimen_layout(h))?;
        }
        Shape::Specimen(s) => paint_specimen(&mut vol, s)?,
    }
    Ok(vol)
}

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("attenuation must be finite and non-negative, got {mu}")))
    }
}

fn paint_specimen(vol: &mut Volume, s: &SpecimenSpec) -> Result<()> {
    check_mu(s.cube_mu)?;
    if !(s.cube_side >= 0.0) {
        return Err(Error::invalid("cube side must be non-negative"));
    }
    for b in &s.bores {
        check_mu(b.mu)?;
        if !(b.radius >= 0.0) {
            return Err(Error::invalid("bore radius must be non-negative"));
        }
    }
    for b in &s.blocks {
        check_mu(b.mu)?;
    }
    let half = s.cube_side / 2.0;
    let grid = vol.grid;
    let [nx, ny, nz] = grid.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = grid.voxel_center(x, y, z);
                if p.x.abs() >= half || p.y.abs() >= half || p.z.abs() >= half {
                    continue;
                }
                let mut mu = s.cube_mu;
                for b in &s.bores {
                    let d = p - b.center;
                    let r2 = match b.axis {
                        Axis::X => d.y * d.y + d.z * d.z,
                        Axis::Y => d.x * d.x + d.z * d.z,
                        Axis::Z => d.x * d.x + d.y * d.y,
                    };
                    if r2 < b.radius * b.radius {
                        mu = b.mu;
                    }
                }
                for b in &s.blocks {
                    if (b.min.x..b.max.x).contains(&p.x)
                        && (b.min.y..b.max.y).contains(&p.y)
                        && (b.min.z..b.max.z).contains(&p.z)
                    {
                        mu = b.mu;
                    }
                }
                vol.values[grid.index(x, y, z)] = mu as f32;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_cube_interior_and_exterior() {
        let spec = PhantomSpec {
            dims: [64, 64, 64],
            voxel_size: 0.5,
            shape: Shape::UniformCube { mu: 0.02, side: 32 },
        };
        let v = build_phantom(&spec).unwrap();
        let inside = |i: usize| (16..48).contains(&i);
        for z in 0..64 {
            for y in 0..64 {
                for x in 0..64 {
                    let expect = if inside(x) && inside(y) && inside(z) { 0.02 } else { 0.0 };
                    assert_eq!(v.get(x, y, z), expect);
                }
            }
        }
    }

    #[test]
    fn zero_mu_is_empty() {
        let spec = PhantomSpec::from_json(
            r#"{"dims":[8,8,8],"voxel_size":1.0,"shape":{"preset":"uniform_cube","mu":0.0,"side":4}}"#,
        )
        .unwrap();
        assert!(build_phantom(&spec).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unknown_preset_rejected() {
        let r = PhantomSpec::from_json(
            r#"{"dims":[8,8,8],"voxel_size":1.0,"shape":{"preset":"teapot"}}"#,
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn specimen_features_present() {
        let v = build_phantom(&PhantomSpec::test_specimen(64, 0.5)).unwrap();
        let lay = test_specimen_layout(16.0);
        let (lo, hi) = v.min_max();
        assert_eq!(lo, 0.0);
        assert!((hi as f64 - lay.blocks[0].mu).abs() < 1e-6);
        // bore through x = 3.2 mm along z is empty, body next to it is not
        let g = v.grid;
        let at = |p: Vec3| {
            let i = ((p.x - g.origin.x) / g.voxel_size) as usize;
            let j = ((p.y - g.origin.y) / g.voxel_size) as usize;
            let k = ((p.z - g.origin.z) / g.voxel_size) as usize;
            v.get(i, j, k)
        };
        assert_eq!(at(Vec3::new(3.3, 0.1, 5.1)), 0.0);
        assert!((at(Vec3::new(-6.1, 4.1, 0.1)) as f64 - lay.cube_mu).abs() < 1e-6);
        assert!(v.values.iter().all(|x| *x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn descriptor_round_trip() {
        let spec = PhantomSpec {
            dims: [16, 16, 16],
            voxel_size: 1.0,
            shape: Shape::Specimen(test_specimen_layout(8.0)),
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(PhantomSpec::from_json(&json).unwrap(), spec);
    }
}
