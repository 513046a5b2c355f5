//! Volume quality metrics and the trajectory comparison report.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::contrast_to_noise;
use crate::volume::{Volume, VoxelBox};

/// Edge of the cubic SSIM window.
pub const SSIM_WINDOW: usize = 7;

fn same_dims(a: &Volume, b: &Volume) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Data range (max − min) of the reference volume.
pub fn data_range(reference: &Volume) -> f64 {
    let (lo, hi) = reference.min_max();
    hi as f64 - lo as f64
}

/// Mean local SSIM over every full 7³ window, with the data range taken from
/// the reference `b`.
pub fn ssim(a: &Volume, b: &Volume) -> Result<f64> {
    ssim_with_range(a, b, data_range(b))
}

/// SSIM with an explicit data range. Local statistics use uniform 7³
/// windows with sample (n − 1) covariance; `C₁ = (0.01·range)²`,
/// `C₂ = (0.03·range)²`.
pub fn ssim_with_range(a: &Volume, b: &Volume, range: f64) -> Result<f64> {
    same_dims(a, b)?;
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::invalid(format!("SSIM data range must be positive, got {range}")));
    }
    let dims = a.dims();
    let w = SSIM_WINDOW;
    if dims.iter().any(|&d| d < w) {
        return Err(Error::invalid(format!("volume {dims:?} smaller than the {w}³ SSIM window")));
    }
    let sa = SummedVolume::new(dims, |i| a.values[i] as f64);
    let sb = SummedVolume::new(dims, |i| b.values[i] as f64);
    let saa = SummedVolume::new(dims, |i| (a.values[i] as f64).powi(2));
    let sbb = SummedVolume::new(dims, |i| (b.values[i] as f64).powi(2));
    let sab = SummedVolume::new(dims, |i| a.values[i] as f64 * b.values[i] as f64);
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let n = (w * w * w) as f64;
    let cov_norm = n / (n - 1.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for z in 0..=dims[2] - w {
        for y in 0..=dims[1] - w {
            for x in 0..=dims[0] - w {
                let lo = [x, y, z];
                let hi = [x + w, y + w, z + w];
                let ma = sa.sum(lo, hi) / n;
                let mb = sb.sum(lo, hi) / n;
                let va = cov_norm * (saa.sum(lo, hi) / n - ma * ma);
                let vb = cov_norm * (sbb.sum(lo, hi) / n - mb * mb);
                let vab = cov_norm * (sab.sum(lo, hi) / n - ma * mb);
                let num = (2.0 * ma * mb + c1) * (2.0 * vab + c2);
                let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// 3D inclusive prefix sums with a zero border.
struct SummedVolume {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl SummedVolume {
    fn new(dims: [usize; 3], value: impl Fn(usize) -> f64) -> Self {
        let [nx, ny, nz] = dims;
        let (px, py) = (nx + 1, ny + 1);
        let mut data = vec![0.0; px * py * (nz + 1)];
        let at = |x: usize, y: usize, z: usize| x + px * (y + py * z);
        for z in 1..=nz {
            for y in 1..=ny {
                for x in 1..=nx {
                    let v = value((x - 1) + nx * ((y - 1) + ny * (z - 1)));
                    data[at(x, y, z)] = v + data[at(x - 1, y, z)] + data[at(x, y - 1, z)] + data[at(x, y, z - 1)]
                        - data[at(x - 1, y - 1, z)]
                        - data[at(x - 1, y, z - 1)]
                        - data[at(x, y - 1, z - 1)]
                        + data[at(x - 1, y - 1, z - 1)];
                }
            }
        }
        SummedVolume { dims, data }
    }

    /// Sum over `[lo, hi)`.
    fn sum(&self, lo: [usize; 3], hi: [usize; 3]) -> f64 {
        let (px, py) = (self.dims[0] + 1, self.dims[1] + 1);
        let at = |x: usize, y: usize, z: usize| self.data[x + px * (y + py * z)];
        at(hi[0], hi[1], hi[2]) - at(lo[0], hi[1], hi[2]) - at(hi[0], lo[1], hi[2]) - at(hi[0], hi[1], lo[2])
            + at(lo[0], lo[1], hi[2])
            + at(lo[0], hi[1], lo[2])
            + at(hi[0], lo[1], lo[2])
            - at(lo[0], lo[1], lo[2])
    }
}

/// PSNR in dB, or `Identical` when the volumes agree exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    Identical,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::Identical => None,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.4}"),
            Psnr::Identical => f.write_str("identical"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Db(v) => s.serialize_f64(*v),
            Psnr::Identical => s.serialize_str("identical"),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Psnr::Db(v)),
            Repr::Text(t) if t == "identical" => Ok(Psnr::Identical),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR value {t:?}"))),
        }
    }
}

pub fn mse(a: &Volume, b: &Volume) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    Ok(sum / a.values.len() as f64)
}

/// `10·log₁₀(range² / MSE)` with the range of the reference `b`.
pub fn psnr(a: &Volume, b: &Volume) -> Result<Psnr> {
    psnr_with_range(a, b, data_range(b))
}

pub fn psnr_with_range(a: &Volume, b: &Volume, range: f64) -> Result<Psnr> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Db(10.0 * (range * range / e).log10()))
}

/// `|max(roi) − min(roi)| / σ(background)` on voxel boxes.
pub fn volume_cnr(v: &Volume, roi: &VoxelBox, background: &VoxelBox) -> Result<f64> {
    for b in [roi, background] {
        if b.is_empty() || !b.fits(v.dims()) {
            return Err(Error::invalid("voxel box is empty or outside the volume"));
        }
    }
    contrast_to_noise(&v.box_values(roi), &v.box_values(background))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: String,
    pub ssim: f64,
    pub psnr_db: Psnr,
    /// `None` when the background box has zero spread.
    pub cnr: Option<f64>,
    pub coverage_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub rows: Vec<ReportRow>,
    /// Free-form configuration echo (k, α, Δγ, M, seeds, ...).
    pub config: serde_json::Value,
    /// Rows measured against the phantom instead of the reference
    /// reconstruction, for diagnostics.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phantom_rows: Vec<ReportRow>,
}

/// One reconstructed approach to compare.
pub struct Candidate<'a> {
    pub name: &'a str,
    pub volume: &'a Volume,
    /// Unit-sphere coverage in [0, 1].
    pub coverage: f64,
}

pub struct CnrBoxes {
    pub roi: VoxelBox,
    pub background: VoxelBox,
}

pub fn compare_rows(reference: &Volume, candidates: &[Candidate<'_>], boxes: &CnrBoxes) -> Result<Vec<ReportRow>> {
    candidates
        .iter()
        .map(|c| {
            if !(0.0..=1.0).contains(&c.coverage) {
                return Err(Error::invalid(format!("coverage {} outside [0, 1]", c.coverage)));
            }
            let cnr = match volume_cnr(c.volume, &boxes.roi, &boxes.background) {
                Ok(v) => Some(v),
                Err(Error::DegenerateBackground(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(ReportRow {
                approach: c.name.to_string(),
                ssim: ssim(c.volume, reference)?,
                psnr_db: psnr(c.volume, reference)?,
                cnr,
                coverage_percent: 100.0 * c.coverage,
            })
        })
        .collect()
}

pub fn compare(
    reference: &Volume,
    candidates: &[Candidate<'_>],
    boxes: &CnrBoxes,
    config: serde_json::Value,
) -> Result<QualityReport> {
    Ok(QualityReport {
        rows: compare_rows(reference, candidates, boxes)?,
        config,
        phantom_rows: Vec::new(),
    })
}

impl QualityReport {
    /// `Approach,SSIM,PSNR,CNR,Coverage`, preceded by a `#` line echoing the
    /// configuration.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# config={}\n", self.config);
        s.push_str("Approach,SSIM,PSNR,CNR,Coverage\n");
        for r in &self.rows {
            let cnr = r.cnr.map_or("degenerate".to_string(), |v| format!("{v:.4}"));
            s.push_str(&format!(
                "{},{:.4},{},{},{:.2}\n",
                r.approach, r.ssim, r.psnr_db, cnr, r.coverage_percent
            ));
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let csv = dir.join("report.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join("report.json");
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }

    pub fn row(&self, approach: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.approach == approach)
    }
}
