use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use super::CriticError;

/// Row-major RGB image with channels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [f64; 3]) -> Self {
        Image {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image { width, height, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: [f64; 3]) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn load_png(path: &Path) -> Result<Self, CriticError> {
        let img = image::open(path)
            .map_err(|e| CriticError::Io(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Ok(Image::from_fn(w as usize, h as usize, |x, y| {
            let p = img.get_pixel(x as u32, y as u32).0;
            [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
        }))
    }

    pub fn save_png(&self, path: &Path) -> Result<(), CriticError> {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let buf = ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            let p = self.get(x as usize, y as usize);
            Rgb([q(p[0]), q(p[1]), q(p[2])])
        });
        buf.save(path).map_err(|e| CriticError::Io(format!("{}: {e}", path.display())))
    }
}

/// Row-major scalar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Grid {
            width,
            height,
            values: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Grid { width, height, values }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Grayscale PNG mapping `lo..hi` to black..white.
    pub fn save_png(&self, path: &Path, lo: f64, hi: f64) -> Result<(), CriticError> {
        let buf = ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            let t = ((self.get(x as usize, y as usize) - lo) / (hi - lo)).clamp(0.0, 1.0);
            Luma([(t * 255.0).round() as u8])
        });
        buf.save(path).map_err(|e| CriticError::Io(format!("{}: {e}", path.display())))
    }
}
