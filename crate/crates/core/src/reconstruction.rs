//! ART (Kaczmarz) reconstruction from a subset of a projection stack.
//!
//! Every detector pixel is one equation `⟨a_i, x⟩ = b_i`: `a_i` holds the
//! intersection lengths of the source→pixel ray with the voxels (the same
//! traversal as the forward projector) and `b_i = −ln(max(I, 1e−6))`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raytrace::trace;
use crate::simulation::ProjectionImage;
use crate::volume::{Grid, Volume};

const MIN_INTENSITY: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtParams {
    pub sweeps: usize,
    /// Relaxation λ.
    pub relaxation: f64,
    pub seed: u64,
}

impl Default for ArtParams {
    fn default() -> Self {
        ArtParams {
            sweeps: 20,
            relaxation: 0.25,
            seed: 0,
        }
    }
}

/// Line-integral measurement of an intensity pixel.
pub fn measurement(intensity: f32) -> f64 {
    -(intensity.max(MIN_INTENSITY) as f64).ln()
}

fn select<'a>(stack: &'a [ProjectionImage], subset: &[usize]) -> Result<Vec<&'a ProjectionImage>> {
    if subset.is_empty() {
        return Err(Error::invalid("ART needs a nonempty projection subset"));
    }
    subset
        .iter()
        .map(|&id| {
            stack
                .iter()
                .find(|p| p.id == id)
                .ok_or_else(|| Error::invalid(format!("projection id {id} not in the stack")))
        })
        .collect()
}

/// Rays are numbered projection-major: ray `r` is pixel `r % n_pix` of the
/// `r / n_pix`-th selected projection.
fn ray_row(grid: &Grid, proj: &ProjectionImage, pixel: usize, row: &mut Vec<(u32, f32)>) {
    row.clear();
    let cols = proj.cols();
    let end = proj.pose.pixel_center(pixel / cols, pixel % cols);
    trace(grid, proj.pose.source, end, |i, l| row.push((i as u32, l as f32)));
}

pub fn art_reconstruct(stack: &[ProjectionImage], subset: &[usize], grid: Grid, params: &ArtParams) -> Result<Volume> {
    run_art(stack, subset, grid, params, false).map(|(v, _)| v)
}

/// Like [`art_reconstruct`], also returning the residual norm after every
/// sweep (one extra forward pass per sweep).
pub fn art_reconstruct_logged(
    stack: &[ProjectionImage],
    subset: &[usize],
    grid: Grid,
    params: &ArtParams,
) -> Result<(Volume, Vec<f64>)> {
    run_art(stack, subset, grid, params, true)
}

fn run_art(
    stack: &[ProjectionImage],
    subset: &[usize],
    grid: Grid,
    params: &ArtParams,
    log: bool,
) -> Result<(Volume, Vec<f64>)> {
    grid.validate()?;
    if !(0.0..2.0).contains(&params.relaxation) {
        return Err(Error::invalid(format!("relaxation must lie in [0, 2), got {}", params.relaxation)));
    }
    let projs = select(stack, subset)?;
    let n_pix = projs[0].pixels.len();
    if projs.iter().any(|p| p.pixels.len() != n_pix) {
        return Err(Error::invalid("projections in the subset differ in size"));
    }
    let b: Vec<Vec<f64>> = projs
        .iter()
        .map(|p| p.pixels.iter().map(|&v| measurement(v)).collect())
        .collect();
    let mut x = vec![0.0f32; grid.len()];
    let mut order: Vec<u32> = (0..(projs.len() * n_pix) as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut row = Vec::with_capacity(4 * grid.dims.iter().sum::<usize>());
    let mut residuals = Vec::new();
    let lambda = params.relaxation;

    for _ in 0..params.sweeps {
        order.shuffle(&mut rng);
        if lambda > 0.0 {
            for &r in &order {
                let (k, pixel) = (r as usize / n_pix, r as usize % n_pix);
                ray_row(&grid, projs[k], pixel, &mut row);
                let (mut dot, mut norm2) = (0.0f64, 0.0f64);
                for &(i, w) in &row {
                    dot += x[i as usize] as f64 * w as f64;
                    norm2 += w as f64 * w as f64;
                }
                if norm2 == 0.0 {
                    continue;
                }
                let coef = lambda * (b[k][pixel] - dot) / norm2;
                for &(i, w) in &row {
                    x[i as usize] += (coef * w as f64) as f32;
                }
            }
        }
        for v in &mut x {
            *v = v.max(0.0);
        }
        if log {
            residuals.push(residual_of(&projs, &b, &grid, &x));
        }
    }
    Ok((Volume { grid, values: x }, residuals))
}

fn residual_of(projs: &[&ProjectionImage], b: &[Vec<f64>], grid: &Grid, x: &[f32]) -> f64 {
    let per_proj = |k: usize| -> f64 {
        let mut row = Vec::new();
        let mut sum = 0.0;
        for (pixel, bi) in b[k].iter().enumerate() {
            ray_row(grid, projs[k], pixel, &mut row);
            let ax: f64 = row.iter().map(|&(i, w)| x[i as usize] as f64 * w as f64).sum();
            sum += (ax - bi).powi(2);
        }
        sum
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<f64> = {
        use rayon::prelude::*;
        (0..projs.len()).into_par_iter().map(per_proj).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<f64> = (0..projs.len()).map(per_proj).collect();
    parts.iter().sum::<f64>().sqrt()
}

/// `‖Ax − b‖₂` over all rays of the subset.
pub fn residual_norm(stack: &[ProjectionImage], subset: &[usize], volume: &Volume) -> Result<f64> {
    let projs = select(stack, subset)?;
    let b: Vec<Vec<f64>> = projs
        .iter()
        .map(|p| p.pixels.iter().map(|&v| measurement(v)).collect())
        .collect();
    Ok(residual_of(&projs, &b, &volume.grid, &volume.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{spherical_trajectory, DetectorSpec, Pose, Vec3, Voi};
    use crate::simulation::{build_phantom, project_trajectory, PhantomSpec, Shape};

    fn voi() -> Voi {
        Voi::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn single_voxel_single_ray() {
        // one voxel of edge 2 mm crossed along its axis: weight w = 2
        let grid = Grid::centered([1, 1, 1], 2.0).unwrap();
        let det = DetectorSpec { rows: 1, cols: 1, pitch: 0.1 };
        let pose = Pose::aimed(Vec3::new(10.0, 0.0, 0.0), Vec3::ZERO, 20.0, det).unwrap();
        let truth = Volume { grid, values: vec![0.3] };
        let stack = project_trajectory(&truth, &crate::geometry::Trajectory::new(
            crate::geometry::TrajectoryKind::Optimized, vec![pose]).unwrap(), &voi()).unwrap();
        let b = measurement(stack[0].pixels[0]);
        let params = ArtParams { sweeps: 1, relaxation: 1.0, seed: 0 };
        let v = art_reconstruct(&stack, &[0], grid, &params).unwrap();
        assert!((v.values[0] as f64 - b / 2.0).abs() < 1e-7);
        assert!((v.values[0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn zero_relaxation_keeps_zero_volume() {
        let grid = Grid::centered([6, 6, 6], 1.0).unwrap();
        let phantom = build_phantom(&PhantomSpec {
            dims: [6, 6, 6],
            voxel_size: 1.0,
            shape: Shape::UniformCube { mu: 0.1, side: 4 },
        })
        .unwrap();
        let det = DetectorSpec { rows: 8, cols: 8, pitch: 1.5 };
        let t = spherical_trajectory(4, Vec3::ZERO, 30.0, 60.0, det).unwrap();
        let stack = project_trajectory(&phantom, &t, &voi()).unwrap();
        let params = ArtParams { sweeps: 3, relaxation: 0.0, seed: 1 };
        let v = art_reconstruct(&stack, &[0, 1, 2, 3], grid, &params).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert!(art_reconstruct(&stack, &[], grid, &params).is_err());
        assert!(art_reconstruct(&stack, &[0], grid, &ArtParams { relaxation: 2.0, ..params }).is_err());
        assert!(art_reconstruct(&stack, &[17], grid, &params).is_err());
    }

    #[test]
    fn update_satisfies_its_ray() {
        // with λ = 1 a single update lands exactly on the ray's hyperplane
        let grid = Grid::centered([5, 5, 5], 1.0).unwrap();
        let det = DetectorSpec { rows: 7, cols: 7, pitch: 1.0 };
        let pose = Pose::aimed(Vec3::new(20.0, 3.0, -4.0), Vec3::ZERO, 40.0, det).unwrap();
        let mut row = Vec::new();
        let img = ProjectionImage {
            id: 0,
            pose,
            roi: crate::geometry::voi_to_roi(&pose, &voi()).unwrap(),
            pixels: vec![0.5; 49],
        };
        ray_row(&grid, &img, 24, &mut row);
        let mut x: Vec<f32> = (0..grid.len()).map(|i| (i % 7) as f32 * 0.01).collect();
        let bi = measurement(0.5);
        let dot: f64 = row.iter().map(|&(i, w)| x[i as usize] as f64 * w as f64).sum();
        let n2: f64 = row.iter().map(|&(_, w)| (w as f64).powi(2)).sum();
        let coef = (bi - dot) / n2;
        for &(i, w) in &row {
            x[i as usize] += (coef * w as f64) as f32;
        }
        let after: f64 = row.iter().map(|&(i, w)| x[i as usize] as f64 * w as f64).sum();
        assert!((after - bi).abs() < 1e-5);
    }

    #[test]
    fn residual_of_truth_and_zero() {
        let phantom = build_phantom(&PhantomSpec {
            dims: [8, 8, 8],
            voxel_size: 1.0,
            shape: Shape::UniformCube { mu: 0.05, side: 6 },
        })
        .unwrap();
        let det = DetectorSpec { rows: 10, cols: 10, pitch: 1.5 };
        let t = spherical_trajectory(6, Vec3::ZERO, 30.0, 60.0, det).unwrap();
        let stack = project_trajectory(&phantom, &t, &voi()).unwrap();
        let ids: Vec<usize> = (0..6).collect();
        let b_norm = stack
            .iter()
            .flat_map(|p| p.pixels.iter().map(|&v| measurement(v).powi(2)))
            .sum::<f64>()
            .sqrt();
        let exact = residual_norm(&stack, &ids, &phantom).unwrap();
        assert!(exact < 1e-6 * b_norm, "{exact} vs {b_norm}");
        let zero = residual_norm(&stack, &ids, &Volume::zeros(phantom.grid)).unwrap();
        assert!((zero - b_norm).abs() < 1e-12 * b_norm.max(1.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let phantom = build_phantom(&PhantomSpec::test_specimen(10, 1.0)).unwrap();
        let det = DetectorSpec { rows: 12, cols: 12, pitch: 1.6 };
        let t = spherical_trajectory(8, Vec3::ZERO, 30.0, 60.0, det).unwrap();
        let stack = project_trajectory(&phantom, &t, &voi()).unwrap();
        let p = ArtParams { sweeps: 2, relaxation: 0.5, seed: 11 };
        let a = art_reconstruct(&stack, &[1, 3, 5], phantom.grid, &p).unwrap();
        let b = art_reconstruct(&stack, &[1, 3, 5], phantom.grid, &p).unwrap();
        assert_eq!(a, b);
        let c = art_reconstruct(&stack, &[1, 3, 5], phantom.grid, &ArtParams { seed: 12, ..p }).unwrap();
        assert_ne!(a, c);
    }
}
