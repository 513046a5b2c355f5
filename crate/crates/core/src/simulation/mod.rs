//! Synthetic specimen, monochromatic Beer–Lambert projector with Poisson
//! noise, and projection-stack persistence.

mod phantom;
mod stack;

pub use phantom::{build_phantom, test_specimen_layout, Axis, Block, Bore, PhantomSpec, Shape, SpecimenSpec};
pub use stack::{read_stack, write_stack};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{voi_to_roi, Pose, Roi, Trajectory, Voi};
use crate::raytrace::line_integral;
use crate::volume::Volume;

/// Detector image normalised so an unattenuated ray reads 1.0; pixels are
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionImage {
    pub id: usize,
    pub pose: Pose,
    pub roi: Roi,
    pub pixels: Vec<f32>,
}

impl ProjectionImage {
    pub fn rows(&self) -> usize {
        self.pose.rows
    }

    pub fn cols(&self) -> usize {
        self.pose.cols
    }

    pub fn roi_pixels(&self) -> Vec<f32> {
        self.roi.rect.indices(self.cols()).map(|i| self.pixels[i]).collect()
    }

    pub fn roi_min(&self) -> f32 {
        self.roi
            .rect
            .indices(self.cols())
            .map(|i| self.pixels[i])
            .fold(f32::INFINITY, f32::min)
    }
}

/// Noise-free projection: each pixel is `exp(-∫μ dl)` along the ray from
/// the source to the pixel centre.
pub fn forward_project(phantom: &Volume, pose: &Pose, voi: &Voi, id: usize) -> Result<ProjectionImage> {
    if phantom.values.is_empty() {
        return Err(Error::invalid("phantom is empty"));
    }
    pose.validate()?;
    let roi = voi_to_roi(pose, voi)?;
    let mut pixels = Vec::with_capacity(pose.rows * pose.cols);
    for r in 0..pose.rows {
        for c in 0..pose.cols {
            let l = line_integral(&phantom.grid, &phantom.values, pose.source, pose.pixel_center(r, c));
            pixels.push((-l).exp() as f32);
        }
    }
    Ok(ProjectionImage {
        id,
        pose: *pose,
        roi,
        pixels,
    })
}

/// Projects every pose of `trajectory`; image `i` gets id `i`.
pub fn project_trajectory(phantom: &Volume, trajectory: &Trajectory, voi: &Voi) -> Result<Vec<ProjectionImage>> {
    let job = |(i, pose): (usize, &Pose)| forward_project(phantom, pose, voi, i);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        trajectory.poses.par_iter().enumerate().map(job).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        trajectory.poses.iter().enumerate().map(job).collect()
    }
}

/// Poisson counting noise: pixel ← Poisson(photons·pixel)/photons.
///
/// Every pixel draws from its own ChaCha8 stream keyed by `(seed, proj.id)`
/// with the pixel index as stream number, so results do not depend on
/// evaluation order.
pub fn apply_noise(proj: &ProjectionImage, photons_per_ray: u64, seed: u64) -> Result<ProjectionImage> {
    if photons_per_ray == 0 {
        return Err(Error::invalid("photons_per_ray must be at least 1"));
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(proj.id as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"ctrajnoi");
    let base = ChaCha8Rng::from_seed(key);
    let n = photons_per_ray as f64;
    let pixels = proj
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let lambda = n * p.max(0.0) as f64;
            if !(lambda > 0.0) {
                return 0.0;
            }
            let mut rng = base.clone();
            rng.set_stream(i as u64);
            let count: f64 = Poisson::new(lambda).expect("positive finite rate").sample(&mut rng);
            (count / n) as f32
        })
        .collect();
    Ok(ProjectionImage {
        pixels,
        ..proj.clone()
    })
}
