//! The six pipeline stages and the run-directory layout they share.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use ctraj_core::completeness::{sample_hemisphere, CompletenessMatrix};
use ctraj_core::evaluation::{compare, compare_rows, CnrBoxes, Candidate};
use ctraj_core::geometry::{circular_trajectory, spherical_trajectory, Trajectory, TrajectoryKind};
use ctraj_core::metrics::{alpha_filter, build_metric_table, pixel_intensity, projection_cnr, MetricTable};
use ctraj_core::reconstruction::{art_reconstruct, ArtParams};
use ctraj_core::selector::{greedy_select, optimize_trajectory, SelectionLog};
use ctraj_core::simulation::build_phantom;
use ctraj_core::simulation::{read_stack, write_stack};
use ctraj_core::simulation::{apply_noise, project_trajectory, ProjectionImage};
use ctraj_core::volume::{Grid, Volume};
use ctraj_core::Error;

use crate::{Config, PipelineError, Stage, StageContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Gru,
    Greedy,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gru => "gru",
            Method::Greedy => "greedy",
        }
    }
}

/// Table II of the source study, kept in the report as non-binding anchors.
fn paper_anchors() -> Value {
    json!({
        "k": 50,
        "circular": { "ssim": 0.38, "psnr_db": 120.0, "cnr": 6.97, "coverage_percent": 45.6 },
        "optimized": { "ssim": 0.49, "psnr_db": 121.0, "cnr": 9.08, "coverage_percent": 60.2 }
    })
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn phantom(&self) -> PathBuf {
        self.stage_dir(Stage::Simulate).join("phantom")
    }

    pub fn candidates(&self) -> PathBuf {
        self.stage_dir(Stage::Simulate).join("candidates.json")
    }

    pub fn circular(&self) -> PathBuf {
        self.stage_dir(Stage::Simulate).join("circular.json")
    }

    pub fn candidate_stack(&self) -> PathBuf {
        self.stage_dir(Stage::Simulate).join("candidate_stack")
    }

    pub fn circular_stack(&self) -> PathBuf {
        self.stage_dir(Stage::Simulate).join("circular_stack")
    }

    pub fn matrix(&self) -> PathBuf {
        self.stage_dir(Stage::Completeness).join("matrix.bin")
    }

    pub fn circular_matrix(&self) -> PathBuf {
        self.stage_dir(Stage::Completeness).join("circular.bin")
    }

    pub fn metric_table(&self) -> PathBuf {
        self.stage_dir(Stage::Optimize).join("metric_table.json")
    }

    pub fn selection(&self, method: Method) -> PathBuf {
        self.stage_dir(Stage::Optimize).join(format!("selection_{}.json", method.name()))
    }

    pub fn volume(&self, name: &str) -> PathBuf {
        self.stage_dir(Stage::Reconstruct).join(name)
    }

    pub fn report_csv(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join("report.csv")
    }

    pub fn report_json(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join("report.json")
    }
}

fn create_dir(dir: &Path, stage: Stage) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).at(stage)
}

fn write_text(path: &Path, text: &str, stage: Stage) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e)).at(stage)
}

fn write_manifest(run: &RunDir, stage: Stage, cfg: &Config, outputs: &[&str]) -> Result<(), PipelineError> {
    let manifest = json!({
        "stage": stage.name(),
        "outputs": outputs,
        "config": serde_json::to_value(cfg).expect("config serializes"),
    });
    let path = run.stage_dir(stage).join("stage.json");
    write_text(&path, &serde_json::to_string_pretty(&manifest).unwrap(), stage)
}

fn noisy(projections: Vec<ProjectionImage>, cfg: &Config, seed: u64) -> ctraj_core::Result<Vec<ProjectionImage>> {
    match cfg.photons_per_ray {
        Some(n) => projections.iter().map(|p| apply_noise(p, n, seed)).collect(),
        None => Ok(projections),
    }
}

fn circular_seed(seed: u64) -> u64 {
    // keeps the circular stack's noise independent of the candidates'
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn simulate(cfg: &Config, run: &RunDir) -> Result<(), PipelineError> {
    let stage = Stage::Simulate;
    create_dir(&run.stage_dir(stage), stage)?;
    let phantom = build_phantom(&cfg.phantom).at(stage)?;
    phantom.save(&run.phantom()).at(stage)?;
    let t = &cfg.trajectory;
    let candidates = spherical_trajectory(t.n_candidates, cfg.voi.center, t.radius, t.sdd, cfg.detector).at(stage)?;
    let circular =
        circular_trajectory(cfg.k, cfg.voi.center, t.radius, t.sdd, t.circular_normal, cfg.detector).at(stage)?;
    candidates.save(&run.candidates()).at(stage)?;
    circular.save(&run.circular()).at(stage)?;

    let stack = project_trajectory(&phantom, &candidates, &cfg.voi).at(stage)?;
    let stack = noisy(stack, cfg, cfg.seeds.noise).at(stage)?;
    write_stack(&run.candidate_stack(), &stack).at(stage)?;
    let circ = project_trajectory(&phantom, &circular, &cfg.voi).at(stage)?;
    let circ = noisy(circ, cfg, circular_seed(cfg.seeds.noise)).at(stage)?;
    write_stack(&run.circular_stack(), &circ).at(stage)?;
    write_manifest(
        run,
        stage,
        cfg,
        &["phantom.json", "phantom.raw", "candidates.json", "circular.json", "candidate_stack", "circular_stack"],
    )
}

/// Per-candidate scalar metrics and the α-filter survivors.
pub fn metrics(cfg: &Config, run: &RunDir) -> Result<Vec<usize>, PipelineError> {
    let stage = Stage::Metrics;
    create_dir(&run.stage_dir(stage), stage)?;
    let stack = read_stack(&run.candidate_stack()).at(stage)?;
    let survivors = alpha_filter(&stack, cfg.alpha);
    let mut csv = String::from("candidate_id,min_roi,pixel_intensity,cnr,survives\n");
    for p in &stack {
        let pi = pixel_intensity(p).at(stage)?;
        let cnr = match projection_cnr(p, &cfg.background) {
            Ok(v) => v.to_string(),
            Err(Error::DegenerateBackground(_)) => "degenerate".into(),
            Err(e) => return Err(e).at(stage),
        };
        let keep = survivors.contains(&p.id);
        writeln!(csv, "{},{},{},{},{}", p.id, p.roi_min(), pi, cnr, keep).unwrap();
    }
    let dir = run.stage_dir(stage);
    write_text(&dir.join("scalars.csv"), &csv, stage)?;
    let summary = json!({
        "alpha": cfg.alpha,
        "candidates": stack.len(),
        "survivors": survivors,
    });
    write_text(&dir.join("survivors.json"), &serde_json::to_string_pretty(&summary).unwrap(), stage)?;
    write_manifest(run, stage, cfg, &["scalars.csv", "survivors.json"])?;
    Ok(survivors)
}

pub fn completeness(cfg: &Config, run: &RunDir) -> Result<(), PipelineError> {
    let stage = Stage::Completeness;
    let dir = run.stage_dir(stage);
    create_dir(&dir, stage)?;
    let hemi = sample_hemisphere(cfg.m_hemisphere).at(stage)?;
    let candidates = Trajectory::load(&run.candidates()).at(stage)?;
    let c = CompletenessMatrix::from_trajectory(&candidates, &hemi, cfg.voi.center, cfg.delta_gamma).at(stage)?;
    c.save(&run.matrix()).at(stage)?;
    c.write_popcount_csv(&dir.join("popcounts.csv")).at(stage)?;
    let circular = Trajectory::load(&run.circular()).at(stage)?;
    let cc = CompletenessMatrix::from_trajectory(&circular, &hemi, cfg.voi.center, cfg.delta_gamma).at(stage)?;
    cc.save(&run.circular_matrix()).at(stage)?;
    write_manifest(run, stage, cfg, &["matrix.bin", "popcounts.csv", "circular.bin"])
}

/// Builds the metric table and runs the requested selectors.
pub fn optimize(cfg: &Config, run: &RunDir, methods: &[Method]) -> Result<Vec<SelectionLog>, PipelineError> {
    let stage = Stage::Optimize;
    let dir = run.stage_dir(stage);
    create_dir(&dir, stage)?;
    let stack = read_stack(&run.candidate_stack()).at(stage)?;
    let c = CompletenessMatrix::load(&run.matrix()).at(stage)?;
    let table = build_metric_table(&stack, &c, cfg.alpha, &cfg.background).at(stage)?;
    table.save_json(&run.metric_table()).at(stage)?;
    table.write_csv(&dir.join("metric_table.csv")).at(stage)?;
    table.write_bits(&dir.join("metric_bits.bin")).at(stage)?;
    if cfg.k > table.len() {
        return Err(Error::invalid(format!(
            "k = {} exceeds the {} candidates surviving the alpha filter",
            cfg.k,
            table.len()
        )))
        .at(stage);
    }
    let candidates = Trajectory::load(&run.candidates()).at(stage)?;
    let mut outputs = vec!["metric_table.json".to_string(), "metric_table.csv".into(), "metric_bits.bin".into()];
    let mut logs = Vec::new();
    for &method in methods {
        let log = run_selector(&table, cfg, method).at(stage)?;
        log.save(&run.selection(method)).at(stage)?;
        let traj = candidates.select(&log.selected_ids, TrajectoryKind::Optimized).at(stage)?;
        let traj_name = format!("trajectory_{}.json", method.name());
        traj.save(&dir.join(&traj_name)).at(stage)?;
        outputs.push(format!("selection_{}.json", method.name()));
        outputs.push(traj_name);
        logs.push(log);
    }
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(run, stage, cfg, &names)?;
    Ok(logs)
}

fn run_selector(table: &MetricTable, cfg: &Config, method: Method) -> ctraj_core::Result<SelectionLog> {
    match method {
        Method::Gru => optimize_trajectory(table, cfg.k, &cfg.selector, cfg.seeds.selector),
        Method::Greedy => greedy_select(table, cfg.k, &cfg.selector.weights),
    }
}

fn art_params(cfg: &Config) -> ArtParams {
    ArtParams {
        sweeps: cfg.reconstruction.sweeps,
        relaxation: cfg.reconstruction.relaxation,
        seed: cfg.seeds.art,
    }
}

/// Reference (all candidates), circular baseline and every selection found.
pub fn reconstruct(cfg: &Config, run: &RunDir) -> Result<(), PipelineError> {
    let stage = Stage::Reconstruct;
    create_dir(&run.stage_dir(stage), stage)?;
    let grid = cfg.recon_grid()?;
    let params = art_params(cfg);
    let phantom = Volume::load(&run.phantom()).at(stage)?;
    let window = (0.0, phantom.min_max().1);

    let stack = read_stack(&run.candidate_stack()).at(stage)?;
    let all: Vec<usize> = stack.iter().map(|p| p.id).collect();
    let mut jobs: Vec<(String, &[ProjectionImage], Vec<usize>)> = vec![("reference".into(), &stack[..], all)];
    let circ = read_stack(&run.circular_stack()).at(stage)?;
    let circ_ids: Vec<usize> = circ.iter().map(|p| p.id).collect();
    jobs.push(("circular".into(), &circ[..], circ_ids));
    for method in [Method::Greedy, Method::Gru] {
        let path = run.selection(method);
        if path.exists() {
            let log = SelectionLog::load(&path).at(stage)?;
            jobs.push((method.name().into(), &stack[..], log.selected_ids));
        }
    }
    let mut outputs = Vec::new();
    for (name, source, ids) in jobs {
        let vol = art_reconstruct(source, &ids, grid, &params).at(stage)?;
        let stem = run.volume(&name);
        vol.save(&stem).at(stage)?;
        vol.save_center_slices(&stem, window).at(stage)?;
        outputs.push(name);
    }
    let names: Vec<String> = outputs.iter().map(|n| format!("{n}.json")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    write_manifest(run, stage, cfg, &refs)
}

/// Box-averages `fine` onto `grid` (voxels assigned by centre).
pub fn resample(fine: &Volume, grid: Grid) -> Volume {
    let mut sum = vec![0.0f64; grid.len()];
    let mut count = vec![0u32; grid.len()];
    let [nx, ny, nz] = fine.dims();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let c = fine.grid.voxel_center(x, y, z);
                let rel = [
                    (c.x - grid.origin.x) / grid.voxel_size,
                    (c.y - grid.origin.y) / grid.voxel_size,
                    (c.z - grid.origin.z) / grid.voxel_size,
                ];
                if rel.iter().zip(grid.dims).all(|(&r, n)| r >= 0.0 && r < n as f64) {
                    let i = grid.index(rel[0] as usize, rel[1] as usize, rel[2] as usize);
                    sum[i] += fine.get(x, y, z) as f64;
                    count[i] += 1;
                }
            }
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { (s / n as f64) as f32 })
        .collect();
    Volume::from_values(grid, values).expect("length matches the grid")
}

pub fn evaluate(cfg: &Config, run: &RunDir) -> Result<ctraj_core::evaluation::QualityReport, PipelineError> {
    let stage = Stage::Evaluate;
    create_dir(&run.stage_dir(stage), stage)?;
    let grid = cfg.recon_grid()?;
    let load = |name: &str| Volume::load(&run.volume(name)).at(stage);
    let reference = load("reference")?;
    let c = CompletenessMatrix::load(&run.matrix()).at(stage)?;
    let cc = CompletenessMatrix::load(&run.circular_matrix()).at(stage)?;

    let mut named: Vec<(String, Volume, f64)> = Vec::new();
    let circ_cov = cc.coverage(cc.candidate_ids()).at(stage)?;
    named.push(("circular".into(), load("circular")?, circ_cov));
    let mut survivors = None;
    for method in [Method::Greedy, Method::Gru] {
        let path = run.selection(method);
        if path.exists() {
            let log = SelectionLog::load(&path).at(stage)?;
            let cov = c.coverage(&log.selected_ids).at(stage)?;
            named.push((method.name().into(), load(method.name())?, cov));
        }
    }
    if run.metric_table().exists() {
        survivors = Some(MetricTable::load_json(&run.metric_table()).at(stage)?.len());
    }
    let full_cov = c.coverage(c.candidate_ids()).at(stage)?;
    named.push(("reference".into(), reference.clone(), full_cov));

    let boxes = {
        let e = &cfg.evaluation;
        CnrBoxes {
            roi: grid.voxel_box(e.cnr_roi.center, e.cnr_roi.half_extent).at(stage)?,
            background: grid.voxel_box(e.cnr_background.center, e.cnr_background.half_extent).at(stage)?,
        }
    };
    let cands: Vec<Candidate<'_>> = named
        .iter()
        .map(|(name, volume, coverage)| Candidate { name, volume, coverage: *coverage })
        .collect();
    let echo = json!({
        "k": cfg.k,
        "alpha": cfg.alpha,
        "delta_gamma": cfg.delta_gamma,
        "m_hemisphere": cfg.m_hemisphere,
        "n_candidates": cfg.trajectory.n_candidates,
        "survivors": survivors,
        "photons_per_ray": cfg.photons_per_ray,
        "art": { "sweeps": cfg.reconstruction.sweeps, "relaxation": cfg.reconstruction.relaxation },
        "seeds": cfg.seeds,
        "paper_anchors": paper_anchors(),
    });
    let mut report = compare(&reference, &cands, &boxes, echo).at(stage)?;
    let phantom = resample(&Volume::load(&run.phantom()).at(stage)?, grid);
    report.phantom_rows = compare_rows(&phantom, &cands, &boxes).at(stage)?;
    report.save(&run.stage_dir(stage)).at(stage)?;
    write_manifest(run, stage, cfg, &["report.csv", "report.json"])?;
    Ok(report)
}

/// Runs `stages` in pipeline order.
pub fn run_pipeline(cfg: &Config, run: &RunDir, stages: &[Stage], methods: &[Method]) -> Result<(), PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&run.root)
        .map_err(|e| Error::io(&run.root, e))
        .at(Stage::Simulate)?;
    let echo = run.root.join("config.json");
    std::fs::write(&echo, cfg.to_json()).map_err(|e| Error::io(&echo, e)).at(Stage::Simulate)?;
    for stage in Stage::ALL {
        if !stages.contains(&stage) {
            continue;
        }
        match stage {
            Stage::Simulate => simulate(cfg, run)?,
            Stage::Metrics => {
                metrics(cfg, run)?;
            }
            Stage::Completeness => completeness(cfg, run)?,
            Stage::Optimize => {
                optimize(cfg, run, methods)?;
            }
            Stage::Reconstruct => reconstruct(cfg, run)?,
            Stage::Evaluate => {
                evaluate(cfg, run)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_averages_blocks() {
        let fine_grid = Grid::centered([4, 4, 4], 0.5).unwrap();
        let values: Vec<f32> = (0..64).map(|i| (i % 4) as f32).collect();
        let fine = Volume::from_values(fine_grid, values).unwrap();
        let coarse = resample(&fine, Grid::centered([2, 2, 2], 1.0).unwrap());
        // x-pairs (0,1) and (2,3) average to 0.5 and 2.5
        assert_eq!(coarse.get(0, 0, 0), 0.5);
        assert_eq!(coarse.get(1, 1, 1), 2.5);
    }

    #[test]
    fn anchors_carry_table_values() {
        let a = paper_anchors();
        assert_eq!(a["circular"]["coverage_percent"], 45.6);
        assert_eq!(a["optimized"]["ssim"], 0.49);
    }
}
