use nalgebra::{Point3, Vector3};

use super::consensus::{Camera, ViewSample};
use super::image::{Grid, Image};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Inject a floater into the first view's render and depth.
    pub floater: bool,
    pub floater_radius: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 64,
            height: 48,
            floater: false,
            floater_radius: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub views: Vec<ViewSample>,
    /// Pixels of the first view covered by the injected floater.
    pub floater_mask: Vec<bool>,
}

const EYES: [[f64; 3]; 3] = [[3.2, 2.2, 3.0], [2.4, 2.6, 3.6], [3.6, 1.8, 2.4]];
const TARGET: [f64; 3] = [0.8, 0.6, 0.8];

/// Smooth texture fixed to world space.
pub fn texture(p: &Point3<f64>) -> [f64; 3] {
    [
        0.55 + 0.35 * (3.0 * p.x).sin(),
        0.55 + 0.35 * (3.0 * p.y + 1.0).sin(),
        0.55 + 0.35 * (3.0 * p.z + 2.0).sin(),
    ]
}

/// Nearest hit of the three walls `x = 0`, `y = 0`, `z = 0` seen from inside
/// the positive octant.
fn hit_corner(o: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    (0..3)
        .filter(|&a| dir[a] < 0.0)
        .map(|a| -o[a] / dir[a])
        .filter(|t| *t > 0.0)
        .min_by(f64::total_cmp)
}

fn hit_sphere(o: &Point3<f64>, dir: &Vector3<f64>, c: &Point3<f64>, r: f64) -> Option<f64> {
    let oc = o - c;
    let a = dir.dot(dir);
    let b = 2.0 * oc.dot(dir);
    let k = oc.dot(&oc) - r * r;
    let disc = b * b - 4.0 * a * k;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    (t > 0.0).then_some(t)
}

/// Three views of a textured concave corner. Rays are scaled to unit
/// camera-space z, so hit parameters are depths.
pub fn corner_scene(cfg: &SceneConfig) -> Scene {
    let (w, h) = (cfg.width, cfg.height);
    let f = 0.8 * w as f64;
    let target = Point3::from(TARGET);
    let floater_at = Point3::from(EYES[0]) + 0.45 * (target - Point3::from(EYES[0]));
    let mut floater_mask = vec![false; w * h];
    let views = EYES
        .iter()
        .enumerate()
        .map(|(vi, eye)| {
            let camera = Camera::look_at(
                Point3::from(*eye),
                target,
                Vector3::y(),
                f,
                f,
                (w as f64 - 1.0) / 2.0,
                (h as f64 - 1.0) / 2.0,
            );
            let o = camera.center();
            let mut gt = Image::new(w, h, [0.0; 3]);
            let mut depth = Grid::new(w, h, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let dir = camera.ray(x as f64, y as f64);
                    if let Some(t) = hit_corner(&o, &dir) {
                        gt.set(x, y, texture(&(o + dir * t)));
                        depth.set(x, y, t);
                    }
                }
            }
            let mut render = gt.clone();
            if cfg.floater && vi == 0 {
                for y in 0..h {
                    for x in 0..w {
                        let dir = camera.ray(x as f64, y as f64);
                        let Some(t) = hit_sphere(&o, &dir, &floater_at, cfg.floater_radius) else {
                            continue;
                        };
                        let d = depth.get(x, y);
                        if d == 0.0 || t < d {
                            render.set(x, y, [0.0; 3]);
                            depth.set(x, y, t);
                            floater_mask[y * w + x] = true;
                        }
                    }
                }
            }
            ViewSample {
                name: format!("view_{vi}"),
                render,
                gt: Some(gt),
                depth,
                camera,
            }
        })
        .collect();
    Scene { views, floater_mask }
}
