//! Browser demo: live projections of the test specimen and a coverage
//! comparison between greedy-selected and circular trajectories.
//!
//! The plain Rust API below is what the wasm bindings wrap; it also runs
//! natively so it can be tested without a browser.

use serde::Serialize;

use ctraj_core::completeness::{sample_hemisphere, CompletenessMatrix};
use ctraj_core::geometry::{circular_trajectory, spherical_trajectory, DetectorSpec, PixelRect, Pose, Trajectory, Vec3, Voi};
use ctraj_core::metrics::{MetricRow, MetricTable, Range};
use ctraj_core::selector::{greedy_select, Weights};
use ctraj_core::simulation::{build_phantom, forward_project, PhantomSpec};
use ctraj_core::volume::Volume;
use ctraj_core::Result;

const RADIUS: f64 = 100.0;
const SDD: f64 = 200.0;

/// Test specimen on a small grid plus a fixed detector.
pub struct Scene {
    phantom: Volume,
    detector: DetectorSpec,
    voi: Voi,
}

impl Scene {
    /// `n`³ voxels spanning 32 mm, imaged on an `n`×`n` detector.
    pub fn new(n: usize) -> Result<Scene> {
        let voxel = 32.0 / n as f64;
        let phantom = build_phantom(&PhantomSpec::test_specimen(n, voxel))?;
        // magnification 2 and a margin so the whole specimen fits
        let detector = DetectorSpec { rows: n, cols: n, pitch: 2.8 * voxel };
        let voi = Voi::new(Vec3::ZERO, Vec3::new(4.0, 4.0, 4.0))?;
        Ok(Scene { phantom, detector, voi })
    }

    pub fn size(&self) -> usize {
        self.detector.rows
    }

    /// Transmission image for a source at the given azimuth and elevation,
    /// row-major, values in (0, 1].
    pub fn project(&self, azimuth_deg: f64, elevation_deg: f64) -> Result<Vec<f32>> {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let dir = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        let pose = Pose::aimed(dir * RADIUS, Vec3::ZERO, SDD, self.detector)?;
        Ok(forward_project(&self.phantom, &pose, &self.voi, 0)?.pixels)
    }
}

/// Source position and whether the selector picked it.
#[derive(Debug, Clone, Serialize)]
pub struct Source {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageComparison {
    pub k: usize,
    pub greedy_percent: f64,
    pub circular_percent: f64,
    /// Greedy coverage after each pick.
    pub greedy_curve: Vec<f64>,
    pub candidates: Vec<Source>,
    pub circular: Vec<Source>,
}

fn unit_sources(t: &Trajectory, selected: &[usize]) -> Vec<Source> {
    t.poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p.source * (1.0 / RADIUS);
            Source { x: d.x, y: d.y, z: d.z, selected: selected.contains(&i) }
        })
        .collect()
}

/// Greedy coverage selection of `k` out of `n_candidates` spherical views
/// against a `k`-view circular orbit, geometry only.
pub fn compare_coverage(n_candidates: usize, k: usize, m: usize, delta_gamma_deg: f64) -> Result<CoverageComparison> {
    let det = DetectorSpec { rows: 64, cols: 64, pitch: 1.4 };
    let hemi = sample_hemisphere(m)?;
    let candidates = spherical_trajectory(n_candidates, Vec3::ZERO, RADIUS, SDD, det)?;
    let c = CompletenessMatrix::from_trajectory(&candidates, &hemi, Vec3::ZERO, delta_gamma_deg)?;
    let rows = (0..c.n())
        .map(|r| MetricRow {
            candidate_id: c.candidate_ids()[r],
            min_roi: 1.0,
            pixel_intensity: 1.0,
            cnr: 1.0,
            pixel_intensity_norm: 0.0,
            cnr_norm: 0.0,
            completeness_bits: c.row(r).to_vec(),
        })
        .collect();
    let table = MetricTable {
        rows,
        alpha: 0.0,
        m,
        pixel_intensity_range: Range { min: 1.0, max: 1.0 },
        cnr_range: Range { min: 1.0, max: 1.0 },
        background: PixelRect { row0: 0, col0: 0, rows: 1, cols: 1 },
    };
    let log = greedy_select(&table, k, &Weights::coverage_only())?;
    let circular = circular_trajectory(k, Vec3::ZERO, RADIUS, SDD, Vec3::Z, det)?;
    let cc = CompletenessMatrix::from_trajectory(&circular, &hemi, Vec3::ZERO, delta_gamma_deg)?;
    let all_circ: Vec<usize> = (0..k).collect();
    Ok(CoverageComparison {
        k,
        greedy_percent: 100.0 * c.coverage(&log.selected_ids)?,
        circular_percent: 100.0 * cc.coverage(cc.candidate_ids())?,
        greedy_curve: log.iterations.iter().map(|it| 100.0 * it.coverage).collect(),
        candidates: unit_sources(&candidates, &log.selected_ids),
        circular: unit_sources(&circular, &all_circ),
    })
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    fn js_err(e: ctraj_core::Error) -> JsError {
        JsError::new(&e.to_string())
    }

    #[wasm_bindgen]
    pub struct Demo(super::Scene);

    #[wasm_bindgen]
    impl Demo {
        #[wasm_bindgen(constructor)]
        pub fn new(n: usize) -> Result<Demo, JsError> {
            super::Scene::new(n).map(Demo).map_err(js_err)
        }

        pub fn size(&self) -> usize {
            self.0.size()
        }

        pub fn project(&self, azimuth_deg: f64, elevation_deg: f64) -> Result<Vec<f32>, JsError> {
            self.0.project(azimuth_deg, elevation_deg).map_err(js_err)
        }
    }

    /// JSON-encoded coverage comparison.
    #[wasm_bindgen(js_name = compareCoverage)]
    pub fn compare_coverage(n_candidates: usize, k: usize, m: usize, delta_gamma_deg: f64) -> Result<String, JsError> {
        let r = super::compare_coverage(n_candidates, k, m, delta_gamma_deg).map_err(js_err)?;
        Ok(serde_json::to_string(&r).expect("comparison serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projections_change_with_angle() {
        let s = Scene::new(24).unwrap();
        let a = s.project(0.0, 0.0).unwrap();
        let b = s.project(45.0, 35.0).unwrap();
        assert_eq!(a.len(), 24 * 24);
        assert!(a.iter().all(|&p| p > 0.0 && p <= 1.0));
        assert!(a.iter().any(|&p| p < 0.9));
        assert_ne!(a, b);
    }

    #[test]
    fn greedy_beats_circular() {
        let r = compare_coverage(100, 10, 64, 3.0).unwrap();
        assert_eq!(r.candidates.iter().filter(|s| s.selected).count(), 10);
        assert_eq!(r.circular.len(), 10);
        assert!(r.greedy_percent > r.circular_percent, "{r:?}");
        assert!(r.greedy_curve.windows(2).all(|w| w[1] >= w[0]));
        assert!(serde_json::to_string(&r).unwrap().contains("greedy_percent"));
    }
}
