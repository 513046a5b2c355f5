//! Projection stacks on disk: `manifest.json` plus one raw little-endian
//! `f32` row-major file per projection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProjectionImage;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Roi};
use crate::volume::{read_f32_file, write_f32_file};

const FORMAT: &str = "ctraj-projection-stack";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    rows: usize,
    cols: usize,
    dtype: String,
    layout: String,
    projections: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    id: usize,
    file: String,
    pose: Pose,
    roi: Roi,
}

pub fn write_stack(dir: &Path, projections: &[ProjectionImage]) -> Result<()> {
    let (rows, cols) = match projections.first() {
        Some(p) => (p.rows(), p.cols()),
        None => (0, 0),
    };
    for p in projections {
        if p.rows() != rows || p.cols() != cols || p.pixels.len() != rows * cols {
            return Err(Error::invalid(format!(
                "projection {} does not match the stack detector size {rows}×{cols}",
                p.id
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(projections.len());
    for p in projections {
        let file = format!("proj_{:05}.raw", p.id);
        write_f32_file(&dir.join(&file), &p.pixels)?;
        entries.push(Entry {
            id: p.id,
            file,
            pose: p.pose,
            roi: p.roi,
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        rows,
        cols,
        dtype: "f32le".into(),
        layout: "row-major".into(),
        projections: entries,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_stack(dir: &Path) -> Result<Vec<ProjectionImage>> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::format(&path, format!("unsupported stack {} v{}", m.format, m.version)));
    }
    if m.dtype != "f32le" || m.layout != "row-major" {
        return Err(Error::format(&path, "unsupported pixel layout"));
    }
    m.projections
        .into_iter()
        .map(|e| {
            if e.pose.rows != m.rows || e.pose.cols != m.cols {
                return Err(Error::format(&path, format!("projection {} detector size mismatch", e.id)));
            }
            if !e.roi.rect.fits(m.rows, m.cols) || e.roi.rect.is_empty() {
                return Err(Error::format(&path, format!("projection {} ROI outside detector", e.id)));
            }
            e.pose.validate().map_err(|err| Error::format(&path, err.to_string()))?;
            let pixels = read_f32_file(&dir.join(&e.file), m.rows * m.cols)?;
            Ok(ProjectionImage {
                id: e.id,
                pose: e.pose,
                roi: e.roi,
                pixels,
            })
        })
        .collect()
}
