use std::fs;
use std::path::{Path, PathBuf};

use super::consensus::{Camera, ViewSample};
use super::image::{Grid, Image};
use super::synthetic::{corner_scene, SceneConfig};
use super::CriticError;
use crate::repo::Repository;
use crate::sandbox::SmokeReport;

pub const DEPTH_FILE: &str = "depth.bin";

fn io(path: &Path, e: impl std::fmt::Display) -> CriticError {
    CriticError::Io(format!("{}: {e}", path.display()))
}

/// `u32` width and height, then `f32` depths row-major, all little-endian.
pub fn write_depth(path: &Path, depth: &Grid) -> Result<(), CriticError> {
    let mut bytes = Vec::with_capacity(8 + 4 * depth.values.len());
    bytes.extend_from_slice(&(depth.width as u32).to_le_bytes());
    bytes.extend_from_slice(&(depth.height as u32).to_le_bytes());
    for v in &depth.values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| io(path, e))
}

pub fn read_depth(path: &Path) -> Result<Grid, CriticError> {
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().expect("four bytes") };
    if bytes.len() < 8 {
        return Err(io(path, "truncated header"));
    }
    let w = u32::from_le_bytes(word(0)) as usize;
    let h = u32::from_le_bytes(word(4)) as usize;
    if bytes.len() != 8 + 4 * w * h {
        return Err(io(path, format!("expected {} depth bytes, found {}", 4 * w * h, bytes.len() - 8)));
    }
    Ok(Grid {
        width: w,
        height: h,
        values: (0..w * h).map(|i| f32::from_le_bytes(word(8 + 4 * i)) as f64).collect(),
    })
}

/// Every `<root>/<name>/` view, sorted by name. `gt.png` is optional.
pub fn read_views(root: &Path) -> Result<Vec<ViewSample>, CriticError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| io(root, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.iter()
        .map(|d| {
            let cam_path = d.join("camera.json");
            let text = fs::read_to_string(&cam_path).map_err(|e| io(&cam_path, e))?;
            let camera: Camera = serde_json::from_str(&text).map_err(|e| io(&cam_path, e))?;
            let gt_path = d.join("gt.png");
            let view = ViewSample {
                name: d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                render: Image::load_png(&d.join("render.png"))?,
                gt: if gt_path.exists() { Some(Image::load_png(&gt_path)?) } else { None },
                depth: read_depth(&d.join(DEPTH_FILE))?,
                camera,
            };
            view.check()?;
            Ok(view)
        })
        .collect()
}

pub fn write_views(root: &Path, views: &[ViewSample]) -> Result<(), CriticError> {
    for v in views {
        let d = root.join(&v.name);
        fs::create_dir_all(&d).map_err(|e| io(&d, e))?;
        v.render.save_png(&d.join("render.png"))?;
        if let Some(gt) = &v.gt {
            gt.save_png(&d.join("gt.png"))?;
        }
        write_depth(&d.join(DEPTH_FILE), &v.depth)?;
        let cam = serde_json::to_string_pretty(&v.camera).map_err(|e| io(&d, e))?;
        fs::write(d.join("camera.json"), cam + "\n").map_err(|e| io(&d, e))?;
    }
    Ok(())
}

/// Rendered views of a trained repository.
pub trait ViewSource {
    fn views(&self, repo: &Repository, report: &SmokeReport) -> Result<Vec<ViewSample>, CriticError>;
}

/// A view bundle written by the sandbox.
pub struct ViewDir(pub PathBuf);

impl ViewSource for ViewDir {
    fn views(&self, _: &Repository, _: &SmokeReport) -> Result<Vec<ViewSample>, CriticError> {
        read_views(&self.0)
    }
}

/// The synthetic corner scene, standing in for renders of the stub trainer.
pub struct SyntheticViews(pub SceneConfig);

impl ViewSource for SyntheticViews {
    fn views(&self, _: &Repository, _: &SmokeReport) -> Result<Vec<ViewSample>, CriticError> {
        Ok(corner_scene(&self.0).views)
    }
}
