use serde::{Deserialize, Serialize};

use super::image::{Grid, Image};
use super::CriticError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub psnr_size: usize,
    pub stride: usize,
    pub ssim_size: usize,
    pub ssim_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of pixel values.
    pub range: f64,
    /// PSNR reported for a window with zero error.
    pub ceiling: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            psnr_size: 16,
            stride: 8,
            ssim_size: 11,
            ssim_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            range: 1.0,
            ceiling: 100.0,
        }
    }
}

/// Windowed PSNR and SSIM on a shared anchor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorField {
    pub psnr: Grid,
    pub ssim: Grid,
    pub config: WindowConfig,
}

impl ErrorField {
    /// Pixel rectangle `[x0, x1) x [y0, y1)` of grid cell `(gx, gy)`.
    pub fn cell_box(&self, gx: usize, gy: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let c = &self.config;
        let x0 = gx * c.stride;
        let y0 = gy * c.stride;
        (x0, y0, (x0 + c.psnr_size).min(width), (y0 + c.psnr_size).min(height))
    }
}

fn anchors(len: usize, size: usize, stride: usize) -> usize {
    (len - size) / stride + 1
}

pub fn psnr_from_mse(mse: f64, range: f64, ceiling: f64) -> f64 {
    if mse <= 0.0 {
        return ceiling;
    }
    (10.0 * (range * range / mse).log10()).min(ceiling)
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Per-pixel SSIM (channel mean) at every valid window centre; `None` where
/// the window does not fit.
fn ssim_centres(a: &Image, b: &Image, cfg: &WindowConfig) -> Vec<Option<f64>> {
    let (w, h) = (a.width, a.height);
    let n = cfg.ssim_size;
    let r = n / 2;
    let g = gaussian_kernel(n, cfg.ssim_sigma);
    let c1 = (cfg.k1 * cfg.range).powi(2);
    let c2 = (cfg.k2 * cfg.range).powi(2);
    let mut out = vec![None; w * h];
    if w < n || h < n {
        return out;
    }
    for cy in r..h - (n - 1 - r) {
        for cx in r..w - (n - 1 - r) {
            let mut total = 0.0;
            for ch in 0..3 {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let wt = g[i] * g[j];
                        let x = a.get(cx + i - r, cy + j - r)[ch];
                        let y = b.get(cx + i - r, cy + j - r)[ch];
                        mx += wt * x;
                        my += wt * y;
                        xx += wt * x * x;
                        yy += wt * y * y;
                        xy += wt * x * y;
                    }
                }
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cxy = xy - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
            out[cy * w + cx] = Some(total / 3.0);
        }
    }
    out
}

/// Sliding-window PSNR and SSIM maps of `render` against `gt`.
///
/// Cell `(gx, gy)` covers the `psnr_size` square at `(gx, gy) * stride`. Its
/// SSIM is the mean local SSIM over window centres inside that square.
pub fn compute_error_fields(render: &Image, gt: &Image, cfg: &WindowConfig) -> Result<ErrorField, CriticError> {
    if (render.width, render.height) != (gt.width, gt.height) {
        return Err(CriticError::DimensionMismatch {
            render: (render.width, render.height),
            gt: (gt.width, gt.height),
        });
    }
    let (w, h) = (render.width, render.height);
    let min = cfg.psnr_size.max(cfg.ssim_size);
    if w < min || h < min || cfg.stride == 0 {
        return Err(CriticError::WindowTooLarge { size: min, width: w, height: h });
    }
    let gw = anchors(w, cfg.psnr_size, cfg.stride);
    let gh = anchors(h, cfg.psnr_size, cfg.stride);
    let local = ssim_centres(render, gt, cfg);
    let mut psnr = Grid::new(gw, gh, 0.0);
    let mut ssim = Grid::new(gw, gh, 0.0);
    for gy in 0..gh {
        for gx in 0..gw {
            let (x0, y0) = (gx * cfg.stride, gy * cfg.stride);
            let mut se = 0.0;
            let (mut s_sum, mut s_n) = (0.0, 0usize);
            for y in y0..y0 + cfg.psnr_size {
                for x in x0..x0 + cfg.psnr_size {
                    let (p, q) = (render.get(x, y), gt.get(x, y));
                    for c in 0..3 {
                        se += (p[c] - q[c]).powi(2);
                    }
                    if let Some(s) = local[y * w + x] {
                        s_sum += s;
                        s_n += 1;
                    }
                }
            }
            let mse = se / (3 * cfg.psnr_size * cfg.psnr_size) as f64;
            psnr.set(gx, gy, psnr_from_mse(mse, cfg.range, cfg.ceiling));
            ssim.set(gx, gy, if s_n == 0 { 1.0 } else { s_sum / s_n as f64 });
        }
    }
    Ok(ErrorField { psnr, ssim, config: *cfg })
}

/// Whole-image PSNR.
pub fn image_psnr(render: &Image, gt: &Image, cfg: &WindowConfig) -> f64 {
    let se: f64 = render
        .pixels
        .iter()
        .zip(&gt.pixels)
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>())
        .sum();
    psnr_from_mse(se / (3 * render.pixels.len()) as f64, cfg.range, cfg.ceiling)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_against_black_is_six_db() {
        let gt = Image::new(32, 32, [0.0; 3]);
        let r = Image::new(32, 32, [0.5; 3]);
        let f = compute_error_fields(&r, &gt, &WindowConfig::default()).unwrap();
        assert_eq!((f.psnr.width, f.psnr.height), (3, 3));
        for v in &f.psnr.values {
            assert!((v - 6.0206).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn identical_images_hit_the_ceiling() {
        let img = Image::from_fn(40, 24, |x, y| [x as f64 / 40.0, y as f64 / 24.0, 0.3]);
        let f = compute_error_fields(&img, &img, &WindowConfig::default()).unwrap();
        assert!(f.psnr.values.iter().all(|v| *v == 100.0));
        assert!(f.ssim.values.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn mismatched_and_tiny_images_are_rejected() {
        let a = Image::new(32, 32, [0.0; 3]);
        let b = Image::new(32, 31, [0.0; 3]);
        assert!(matches!(compute_error_fields(&a, &b, &WindowConfig::default()), Err(CriticError::DimensionMismatch { .. })));
        let t = Image::new(8, 8, [0.0; 3]);
        assert!(matches!(compute_error_fields(&t, &t, &WindowConfig::default()), Err(CriticError::WindowTooLarge { .. })));
    }
}
