//! Run configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ctraj_core::completeness::DEFAULT_DELTA_GAMMA_DEG;
use ctraj_core::geometry::{DetectorSpec, PixelRect, Vec3, Voi};
use ctraj_core::metrics::DEFAULT_ALPHA;
use ctraj_core::selector::SelectorHyper;
use ctraj_core::simulation::PhantomSpec;
use ctraj_core::volume::Grid;

use crate::PipelineError;

pub const DESK_PRESET: &str = include_str!("../../../configs/desk.json");
pub const PAPER_PRESET: &str = include_str!("../../../configs/paper.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub phantom: PhantomSpec,
    pub trajectory: TrajectoryConfig,
    pub detector: DetectorSpec,
    pub voi: Voi,
    /// Detector rectangle used as the CNR background in every projection.
    pub background: PixelRect,
    /// Photons per unattenuated ray; `null` disables noise.
    pub photons_per_ray: Option<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta_gamma")]
    pub delta_gamma: f64,
    pub m_hemisphere: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub selector: SelectorHyper,
    pub reconstruction: ReconstructionConfig,
    pub evaluation: EvaluationConfig,
    pub seeds: Seeds,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_delta_gamma() -> f64 {
    DEFAULT_DELTA_GAMMA_DEG
}

fn default_k() -> usize {
    50
}

fn default_normal() -> Vec3 {
    Vec3::Z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub n_candidates: usize,
    /// Source-to-VOI-centre distance in mm.
    pub radius: f64,
    /// Source-to-detector distance in mm.
    pub sdd: f64,
    /// Normal of the circular baseline's plane.
    #[serde(default = "default_normal")]
    pub circular_normal: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub sweeps: usize,
    pub relaxation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center: Vec3,
    pub half_extent: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub cnr_roi: BoxSpec,
    pub cnr_background: BoxSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub noise: u64,
    pub selector: u64,
    pub art: u64,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            PipelineError::Config(msg) => PipelineError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn desk() -> Self {
        Self::from_json(DESK_PRESET).expect("desk preset is valid")
    }

    pub fn paper() -> Self {
        Self::from_json(PAPER_PRESET).expect("paper preset is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Sets every seed to `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.seeds = Seeds {
            noise: seed,
            selector: seed,
            art: seed,
        };
    }

    pub fn recon_grid(&self) -> Result<Grid, PipelineError> {
        let r = &self.reconstruction;
        Grid::centered(r.dims, r.voxel_size).map_err(|e| PipelineError::Config(format!("reconstruction grid: {e}")))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        let t = &self.trajectory;
        if t.n_candidates < 2 {
            return bad(format!("n_candidates must be at least 2, got {}", t.n_candidates));
        }
        if !(t.radius > 0.0 && t.sdd > t.radius) {
            return bad(format!("need 0 < radius < sdd, got radius {} sdd {}", t.radius, t.sdd));
        }
        self.detector.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Voi::new(self.voi.center, self.voi.half_extent).map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.background.is_empty() || !self.background.fits(self.detector.rows, self.detector.cols) {
            return bad("background rectangle must be nonempty and inside the detector".into());
        }
        if self.photons_per_ray == Some(0) {
            return bad("photons_per_ray must be positive or null".into());
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if !(self.delta_gamma > 0.0 && self.delta_gamma < 90.0) {
            return bad(format!("delta_gamma must lie in (0, 90) degrees, got {}", self.delta_gamma));
        }
        if self.m_hemisphere == 0 {
            return bad("m_hemisphere must be positive".into());
        }
        if self.k == 0 || self.k > t.n_candidates {
            return bad(format!("k must lie in 1..={}, got {}", t.n_candidates, self.k));
        }
        self.selector.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let r = &self.reconstruction;
        if r.sweeps == 0 || !(r.relaxation > 0.0 && r.relaxation < 2.0) {
            return bad("reconstruction needs sweeps ≥ 1 and relaxation in (0, 2)".into());
        }
        let grid = self.recon_grid()?;
        for (name, b) in [("cnr_roi", self.evaluation.cnr_roi), ("cnr_background", self.evaluation.cnr_background)] {
            let vb = grid
                .voxel_box(b.center, b.half_extent)
                .map_err(|e| PipelineError::Config(format!("{name}: {e}")))?;
            if vb.is_empty() {
                return bad(format!("{name} covers no voxels"));
            }
        }
        Ok(())
    }
}
