//! 8-bit RGB images and PNG I/O.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("png encoding error on {path}: {message}")]
    Png { path: String, message: String },
    #[error("unsupported png layout in {0} (expected 8-bit RGB)")]
    Layout(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major RGB bytes.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Alpha-blends `rgb` over the pixel with opacity `alpha`.
    pub fn blend(&mut self, row: usize, col: usize, rgb: [u8; 3], alpha: f64) {
        let old = self.get(row, col);
        let mut out = [0u8; 3];
        for c in 0..3 {
            let v = alpha * rgb[c] as f64 + (1.0 - alpha) * old[c] as f64;
            out[c] = v.round().clamp(0.0, 255.0) as u8;
        }
        self.set(row, col, out);
    }

    /// Number of pixels whose color differs from `other`.
    pub fn diff_count(&self, other: &Raster) -> usize {
        self.data
            .chunks_exact(3)
            .zip(other.data.chunks_exact(3))
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        let display = path.display().to_string();
        let file = File::create(path).map_err(|source| RasterError::Io { path: display.clone(), source })?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| RasterError::Png { path: display.clone(), message: e.to_string() })?;
        writer
            .write_image_data(&self.data)
            .map_err(|e| RasterError::Png { path: display, message: e.to_string() })
    }

    pub fn load_png(path: &Path) -> Result<Raster, RasterError> {
        let display = path.display().to_string();
        let file = File::open(path).map_err(|source| RasterError::Io { path: display.clone(), source })?;
        let decoder = png::Decoder::new(BufReader::new(file));
        let mut reader = decoder
            .read_info()
            .map_err(|e| RasterError::Png { path: display.clone(), message: e.to_string() })?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| RasterError::Png { path: display.clone(), message: e.to_string() })?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(RasterError::Layout(display));
        }
        buf.truncate(info.buffer_size());
        Ok(Raster { width: info.width as usize, height: info.height as usize, data: buf })
    }
}
