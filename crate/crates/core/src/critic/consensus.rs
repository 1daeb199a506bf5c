use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::image::{Grid, Image};
use super::roi::components;
use super::CriticError;

/// Pinhole camera; camera axes are x right, y down, z forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-from-camera transform, row-major.
    pub pose: [[f64; 4]; 4],
}

impl Camera {
    fn pose(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.pose[r][c])
    }

    fn rotation(&self) -> Matrix3<f64> {
        self.pose().fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::new(self.pose[0][3], self.pose[1][3], self.pose[2][3])
    }

    /// Camera at `eye` looking at `target`, world `up` roughly upward.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>, fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        let f = (target - eye).normalize();
        let r = f.cross(&up).normalize();
        let d = f.cross(&r);
        let mut pose = [[0.0; 4]; 4];
        for i in 0..3 {
            pose[i] = [r[i], d[i], f[i], eye[i]];
        }
        pose[3] = [0.0, 0.0, 0.0, 1.0];
        Camera { fx, fy, cx, cy, pose }
    }

    /// Ray direction in world space through pixel `(u, v)`, scaled so its
    /// camera-space z is 1.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.rotation() * Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Point3<f64> {
        self.center() + self.ray(u, v) * depth
    }

    /// `(u, v, z)` of a world point, `None` behind the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64, f64)> {
        let pc = self.rotation().transpose() * (p - self.center());
        if pc.z <= 0.0 {
            return None;
        }
        Some((self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy, pc.z))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSample {
    pub name: String,
    pub render: Image,
    pub gt: Option<Image>,
    /// Camera-space z per pixel; 0 marks no surface.
    pub depth: Grid,
    pub camera: Camera,
}

impl ViewSample {
    pub fn check(&self) -> Result<(), CriticError> {
        let dims = (self.render.width, self.render.height);
        if let Some(gt) = &self.gt {
            if (gt.width, gt.height) != dims {
                return Err(CriticError::DimensionMismatch {
                    render: dims,
                    gt: (gt.width, gt.height),
                });
            }
        }
        if (self.depth.width, self.depth.height) != dims {
            return Err(CriticError::DimensionMismatch {
                render: dims,
                gt: (self.depth.width, self.depth.height),
            });
        }
        if self.depth.values.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(CriticError::InvalidView(format!("{}: depth must be finite and nonnegative", self.name)));
        }
        Ok(())
    }

    /// Pixels whose mean absolute channel error exceeds `threshold`.
    pub fn error_mask(&self, threshold: f64) -> Result<Vec<bool>, CriticError> {
        let gt = self.gt.as_ref().ok_or_else(|| CriticError::InvalidView(format!("{}: no ground truth", self.name)))?;
        Ok(self
            .render
            .pixels
            .iter()
            .zip(&gt.pixels)
            .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).abs()).sum::<f64>() / 3.0 > threshold)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    /// Other views that must confirm a disagreement.
    pub k: usize,
    /// Depth tolerance as a fraction of the scene extent.
    pub tau_fraction: f64,
    /// Error-mask threshold when masks are derived from ground truth.
    pub error_threshold: f64,
    /// Smallest flagged component reported as a cluster.
    pub min_cluster: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            k: 2,
            tau_fraction: 0.05,
            error_threshold: 0.1,
            min_cluster: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    #[serde(skip)]
    pub masks: Vec<Vec<bool>>,
    /// Flagged pixel count per view.
    pub flagged: Vec<usize>,
    pub centroids: Vec<[f64; 3]>,
    pub tau_d: f64,
}

impl Consensus {
    pub fn total_flagged(&self) -> usize {
        self.flagged.iter().sum()
    }
}

/// Bounding-box diagonal of every surface point seen by any view.
pub fn scene_extent(views: &[ViewSample]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in views {
        for y in 0..v.depth.height {
            for x in 0..v.depth.width {
                let d = v.depth.get(x, y);
                if d > 0.0 {
                    let p = v.camera.unproject(x as f64, y as f64, d).coords;
                    lo = lo.inf(&p);
                    hi = hi.sup(&p);
                }
            }
        }
    }
    if lo.x.is_finite() {
        (hi - lo).norm()
    } else {
        0.0
    }
}

/// Flag error pixels whose geometry the other views contradict.
///
/// `masks` overrides the per-view error masks derived from ground truth.
pub fn cross_view_consensus(
    views: &[ViewSample],
    masks: Option<&[Vec<bool>]>,
    cfg: &ConsensusConfig,
) -> Result<Consensus, CriticError> {
    if views.len() < 2 {
        return Err(CriticError::InsufficientViews(views.len()));
    }
    for v in views {
        v.check()?;
    }
    let errors: Vec<Vec<bool>> = match masks {
        Some(m) if m.len() == views.len() => m.to_vec(),
        Some(m) => {
            return Err(CriticError::InvalidView(format!("{} masks for {} views", m.len(), views.len())));
        }
        None => views.iter().map(|v| v.error_mask(cfg.error_threshold)).collect::<Result<_, _>>()?,
    };
    let tau_d = cfg.tau_fraction * scene_extent(views);

    let mut out = Vec::with_capacity(views.len());
    let mut centroids = Vec::new();
    for (vi, view) in views.iter().enumerate() {
        let (w, h) = (view.depth.width, view.depth.height);
        let mut mask = vec![false; w * h];
        let mut points = vec![Point3::origin(); w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let d = view.depth.get(x, y);
                if !errors[vi][i] || d <= 0.0 {
                    continue;
                }
                let p = view.camera.unproject(x as f64, y as f64, d);
                points[i] = p;
                let mut confirming = 0;
                for (ui, other) in views.iter().enumerate() {
                    if ui == vi {
                        continue;
                    }
                    let Some((u, v, z)) = other.camera.project(&p) else {
                        continue;
                    };
                    let (px, py) = (u.round(), v.round());
                    if px < 0.0 || py < 0.0 || px >= other.depth.width as f64 || py >= other.depth.height as f64 {
                        continue;
                    }
                    let (px, py) = (px as usize, py as usize);
                    let od = other.depth.get(px, py);
                    if od <= 0.0 || errors[ui][py * other.depth.width + px] {
                        continue;
                    }
                    if (od - z).abs() > tau_d {
                        confirming += 1;
                    }
                }
                mask[i] = confirming >= cfg.k;
            }
        }
        for comp in components(&mask, w, h) {
            if comp.len() < cfg.min_cluster {
                continue;
            }
            let sum = comp.iter().fold(Vector3::zeros(), |acc, &(x, y)| acc + points[y * w + x].coords);
            let c = sum / comp.len() as f64;
            centroids.push([c.x, c.y, c.z]);
        }
        out.push(mask);
    }
    Ok(Consensus {
        flagged: out.iter().map(|m| m.iter().filter(|b| **b).count()).collect(),
        masks: out,
        centroids,
        tau_d,
    })
}
