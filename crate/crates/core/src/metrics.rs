//! Per-projection metrics and the candidate table fed to the selectors.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::completeness::CompletenessMatrix;
use crate::error::{Error, Result};
use crate::geometry::PixelRect;
use crate::simulation::ProjectionImage;

/// Default α on normalised intensity.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Quantile used for the pixel-intensity metric.
pub const INTENSITY_QUANTILE: f64 = 0.7;

/// Nearest-rank quantile: the `⌈q·n⌉`-th smallest value (1-based).
pub fn nearest_rank_quantile(values: &[f32], q: f64) -> Result<f32> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of an empty set"));
    }
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let mut v = values.to_vec();
    let (_, nth, _) = v.select_nth_unstable_by(rank - 1, f32::total_cmp);
    Ok(*nth)
}

/// 70 % nearest-rank quantile of the ROI pixels.
pub fn pixel_intensity(proj: &ProjectionImage) -> Result<f32> {
    if proj.roi.rect.is_empty() {
        return Err(Error::invalid(format!("projection {} has an empty ROI", proj.id)));
    }
    nearest_rank_quantile(&proj.roi_pixels(), INTENSITY_QUANTILE)
}

/// Ids of the projections whose smallest ROI pixel is at least `alpha`, in
/// input order.
pub fn alpha_filter(projections: &[ProjectionImage], alpha: f64) -> Vec<usize> {
    projections
        .iter()
        .filter(|p| p.roi_min() as f64 >= alpha)
        .map(|p| p.id)
        .collect()
}

/// Population standard deviation.
pub fn population_std(values: &[f32]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

/// `|max − min| / σ` with max/min over `signal` and σ the population
/// standard deviation of `background`.
pub fn contrast_to_noise(signal: &[f32], background: &[f32]) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::invalid("empty signal region"));
    }
    if background.len() < 2 {
        return Err(Error::invalid("background needs at least two samples"));
    }
    let sigma = population_std(background);
    if !(sigma > 0.0) {
        return Err(Error::DegenerateBackground(
            "background standard deviation is zero; choose a noisy region outside the object shadow".into(),
        ));
    }
    let (lo, hi) = signal
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok((hi as f64 - lo as f64).abs() / sigma)
}

/// CNR of a projection: ROI extremes over the background rectangle's noise.
pub fn projection_cnr(proj: &ProjectionImage, background: &PixelRect) -> Result<f64> {
    if !background.fits(proj.rows(), proj.cols()) {
        return Err(Error::invalid("background rectangle lies outside the detector"));
    }
    let bg: Vec<f32> = background.indices(proj.cols()).map(|i| proj.pixels[i]).collect();
    contrast_to_noise(&proj.roi_pixels(), &bg)
}

/// Min–max normalisation to [0, 1]; a constant column maps to 0.5.
pub fn min_max_normalize(values: &[f64]) -> (Vec<f64>, Range) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = Range { min, max };
    let out = if max > min {
        values.iter().map(|v| (v - min) / (max - min)).collect()
    } else {
        vec![0.5; values.len()]
    };
    (out, range)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub candidate_id: usize,
    pub min_roi: f64,
    pub pixel_intensity: f64,
    pub cnr: f64,
    pub pixel_intensity_norm: f64,
    pub cnr_norm: f64,
    /// Completeness row, packed 64 columns per word.
    pub completeness_bits: Vec<u64>,
}

impl MetricRow {
    pub fn bit(&self, j: usize) -> bool {
        self.completeness_bits[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.completeness_bits.iter().map(|w| w.count_ones()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
    pub alpha: f64,
    pub m: usize,
    pub pixel_intensity_range: Range,
    pub cnr_range: Range,
    pub background: PixelRect,
}

/// α-filters `stack`, scores survivors and attaches their completeness rows.
/// Candidates without a completeness row are dropped as well. Rows are
/// sorted by candidate id.
pub fn build_metric_table(
    stack: &[ProjectionImage],
    completeness: &CompletenessMatrix,
    alpha: f64,
    background: &PixelRect,
) -> Result<MetricTable> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let survivors = alpha_filter(stack, alpha);
    let mut chosen: Vec<&ProjectionImage> = stack
        .iter()
        .filter(|p| survivors.contains(&p.id) && completeness.row_of(p.id).is_some())
        .collect();
    chosen.sort_by_key(|p| p.id);
    if chosen.len() < 2 {
        return Err(Error::InsufficientCandidates { survivors: chosen.len() });
    }
    let score = |p: &&ProjectionImage| -> Result<(f64, f64, f64)> {
        Ok((
            p.roi_min() as f64,
            pixel_intensity(p)? as f64,
            projection_cnr(p, background)?,
        ))
    };
    #[cfg(feature = "parallel")]
    let scores: Vec<(f64, f64, f64)> = {
        use rayon::prelude::*;
        chosen.par_iter().map(score).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let scores: Vec<(f64, f64, f64)> = chosen.iter().map(score).collect::<Result<_>>()?;

    let pis: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let cnrs: Vec<f64> = scores.iter().map(|s| s.2).collect();
    let (pi_norm, pi_range) = min_max_normalize(&pis);
    let (cnr_norm, cnr_range) = min_max_normalize(&cnrs);
    let rows = chosen
        .iter()
        .enumerate()
        .map(|(k, p)| MetricRow {
            candidate_id: p.id,
            min_roi: scores[k].0,
            pixel_intensity: pis[k],
            cnr: cnrs[k],
            pixel_intensity_norm: pi_norm[k],
            cnr_norm: cnr_norm[k],
            completeness_bits: completeness.row(completeness.row_of(p.id).unwrap()).to_vec(),
        })
        .collect();
    Ok(MetricTable {
        rows,
        alpha,
        m: completeness.m(),
        pixel_intensity_range: pi_range,
        cnr_range,
        background: *background,
    })
}

impl MetricTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.candidate_id).collect()
    }

    /// Completeness matrix restricted to the table's rows, in table order.
    pub fn completeness(&self, delta_gamma_deg: f64, point: crate::geometry::Vec3) -> Result<CompletenessMatrix> {
        let bits = self.rows.iter().flat_map(|r| r.completeness_bits.iter().copied()).collect();
        CompletenessMatrix::from_packed(self.ids(), self.m, bits, delta_gamma_deg, point)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from(
            "candidate_id,min_roi,pixel_intensity,pixel_intensity_norm,cnr,cnr_norm,coverage_bits\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.candidate_id,
                r.min_roi,
                r.pixel_intensity,
                r.pixel_intensity_norm,
                r.cnr,
                r.cnr_norm,
                r.popcount()
            ));
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Binary sidecar: `CTMB`, version, N, M, then per row the id and its
    /// packed bits (all little-endian u32/u64).
    pub fn write_bits(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut put = |b: &[u8]| w.write_all(b).map_err(|e| Error::io(path, e));
        put(b"CTMB")?;
        put(&1u32.to_le_bytes())?;
        put(&(self.rows.len() as u64).to_le_bytes())?;
        put(&(self.m as u64).to_le_bytes())?;
        for r in &self.rows {
            put(&(r.candidate_id as u64).to_le_bytes())?;
            for word in &r.completeness_bits {
                put(&word.to_le_bytes())?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).expect("metric table serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}
