use serde::{Deserialize, Serialize};

use super::field::ErrorField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphConfig {
    /// Worst-q percentile of the PSNR map used as the cut.
    pub percentile: f64,
    /// Components smaller than this many pixels are dropped.
    pub min_area: usize,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            percentile: 5.0,
            min_area: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    /// Pixel box `[x0, y0, x1, y1)`.
    pub bbox: [usize; 4],
    pub mean_psnr: f64,
    /// Pixels covered by the union of the component's windows.
    pub area: usize,
    /// Grid cells `(gx, gy)` of the component.
    pub cells: Vec<(usize, usize)>,
}

/// Nearest-rank percentile of `values`.
pub fn percentile_cut(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q / 100.0) * v.len() as f64).ceil() as usize;
    v[k.clamp(1, v.len()) - 1]
}

type Mask = Vec<bool>;

fn morph(mask: &Mask, w: usize, h: usize, dilate: bool) -> Mask {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = !dilate;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let v = mask[ny as usize * w + nx as usize];
                    acc = if dilate { acc || v } else { acc && v };
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Opening then closing with a 3x3 square; out-of-grid neighbours are ignored.
pub fn open_close(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let m = mask.to_vec();
    let opened = morph(&morph(&m, w, h, false), w, h, true);
    morph(&morph(&opened, w, h, true), w, h, false)
}

/// 4-connected components in row-major discovery order.
pub fn components(mask: &[bool], w: usize, h: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.push((x, y));
            let mut push = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        comp.sort_by_key(|&(x, y)| (y, x));
        out.push(comp);
    }
    out
}

/// Regions of highest error in an image of `width` x `height` pixels.
pub fn extract_rois(field: &ErrorField, width: usize, height: usize, cfg: &MorphConfig) -> Vec<Roi> {
    let g = &field.psnr;
    if g.values.is_empty() {
        return Vec::new();
    }
    let cut = percentile_cut(&g.values, cfg.percentile);
    let mask: Vec<bool> = g.values.iter().map(|v| *v < cut).collect();
    let mask = open_close(&mask, g.width, g.height);
    let mut rois: Vec<Roi> = components(&mask, g.width, g.height)
        .into_iter()
        .filter_map(|cells| {
            let mut covered = vec![false; width * height];
            let mut bbox = [usize::MAX, usize::MAX, 0, 0];
            for &(gx, gy) in &cells {
                let (x0, y0, x1, y1) = field.cell_box(gx, gy, width, height);
                bbox = [bbox[0].min(x0), bbox[1].min(y0), bbox[2].max(x1), bbox[3].max(y1)];
                for y in y0..y1 {
                    covered[y * width + x0..y * width + x1].fill(true);
                }
            }
            let area = covered.iter().filter(|c| **c).count();
            if area < cfg.min_area.max(1) {
                return None;
            }
            let mean_psnr = cells.iter().map(|&(x, y)| g.get(x, y)).sum::<f64>() / cells.len() as f64;
            Some(Roi {
                bbox,
                mean_psnr,
                area,
                cells,
            })
        })
        .collect();
    rois.sort_by(|a, b| a.mean_psnr.total_cmp(&b.mean_psnr).then(a.cells.cmp(&b.cells)));
    rois
}
