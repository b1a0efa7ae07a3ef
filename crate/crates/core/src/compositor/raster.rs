use std::fmt;
use std::io::Cursor;
use std::path::Path;

use super::CompositorError;
use crate::geometry::BBox;

pub type Rgba = [u8; 4];

/// Row-major RGBA8 image.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Raster({}x{})", self.width, self.height)
    }
}

impl Raster {
    pub fn filled(width: u32, height: u32, color: Rgba) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 4);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_rgba(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, CompositorError> {
        let expected = width as usize * height as usize * 4;
        if pixels.len() != expected {
            return Err(CompositorError::InvalidArgument(format!(
                "{width}x{height} raster needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Build from a per-pixel function.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgba) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 4);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 4
    }

    pub fn get(&self, x: u32, y: u32) -> Rgba {
        let i = self.offset(x, y);
        [
            self.pixels[i],
            self.pixels[i + 1],
            self.pixels[i + 2],
            self.pixels[i + 3],
        ]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgba) {
        let i = self.offset(x, y);
        self.pixels[i..i + 4].copy_from_slice(&c);
    }

    /// Copy of the sub-rectangle.
    pub fn sub_image(&self, rect: PixelRect) -> Result<Raster, CompositorError> {
        rect.check_within(self)?;
        let mut pixels = Vec::with_capacity(rect.width() as usize * rect.height() as usize * 4);
        for y in rect.y0..rect.y1 {
            let a = self.offset(rect.x0, y);
            let b = self.offset(rect.x1 - 1, y) + 4;
            pixels.extend_from_slice(&self.pixels[a..b]);
        }
        Ok(Raster {
            width: rect.width(),
            height: rect.height(),
            pixels,
        })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, CompositorError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(png_err)?;
            writer.write_image_data(&self.pixels).map_err(png_err)?;
            writer.finish().map_err(png_err)?;
        }
        Ok(out)
    }

    /// Decode any 8- or 16-bit PNG into RGBA8.
    pub fn decode_png(bytes: &[u8]) -> Result<Raster, CompositorError> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder.read_info().map_err(png_err)?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| CompositorError::Png("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(png_err)?;
        buf.truncate(info.buffer_size());
        let (w, h) = (info.width, info.height);
        let pixels = match info.color_type {
            png::ColorType::Rgba => buf,
            png::ColorType::Rgb => buf
                .chunks_exact(3)
                .flat_map(|p| [p[0], p[1], p[2], 255])
                .collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g, 255]).collect(),
            png::ColorType::GrayscaleAlpha => buf
                .chunks_exact(2)
                .flat_map(|p| [p[0], p[0], p[0], p[1]])
                .collect(),
            png::ColorType::Indexed => {
                return Err(CompositorError::Png("palette output not expanded".into()));
            }
        };
        Raster::from_rgba(w, h, pixels)
    }

    pub fn read_png(path: &Path) -> Result<Raster, CompositorError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CompositorError::Io(format!("{}: {e}", path.display())))?;
        Raster::decode_png(&bytes).map_err(|e| match e {
            CompositorError::Png(m) => CompositorError::Png(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<(), CompositorError> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes)
            .map_err(|e| CompositorError::Io(format!("{}: {e}", path.display())))
    }
}

fn png_err(e: impl fmt::Display) -> CompositorError {
    CompositorError::Png(e.to_string())
}

/// Integer pixel rectangle, half-open: columns `x0..x1`, rows `y0..y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

/// Slack for boxes that overshoot the raster edge by floating-point noise.
const EDGE_SLACK: f64 = 1e-6;

impl PixelRect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn full(r: &Raster) -> Self {
        Self::new(0, 0, r.width, r.height)
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Every pixel the box touches (floor of the near edges, ceil of the
    /// far edges). The box must lie within the raster.
    pub fn covering(b: &BBox, r: &Raster) -> Result<PixelRect, CompositorError> {
        let (w, h) = (r.width as f64, r.height as f64);
        let ok = [b.x_left, b.y_top, b.x_right, b.y_bottom]
            .iter()
            .all(|v| v.is_finite())
            && b.x_left >= -EDGE_SLACK
            && b.y_top >= -EDGE_SLACK
            && b.x_right <= w + EDGE_SLACK
            && b.y_bottom <= h + EDGE_SLACK
            && b.x_left < b.x_right
            && b.y_top < b.y_bottom;
        if !ok {
            return Err(CompositorError::OutOfBounds {
                region: *b,
                width: r.width,
                height: r.height,
            });
        }
        let lo = |v: f64| v.max(0.0).floor() as u32;
        let hi = |v: f64, lim: u32| (v.ceil().max(0.0) as u32).min(lim);
        Ok(PixelRect::new(
            lo(b.x_left),
            lo(b.y_top),
            hi(b.x_right, r.width),
            hi(b.y_bottom, r.height),
        ))
    }

    fn check_within(&self, r: &Raster) -> Result<(), CompositorError> {
        if self.is_empty() || self.x1 > r.width || self.y1 > r.height {
            return Err(CompositorError::OutOfBounds {
                region: self.to_bbox(),
                width: r.width,
                height: r.height,
            });
        }
        Ok(())
    }

    pub fn to_bbox(&self) -> BBox {
        BBox::new(
            self.x0 as f64,
            self.y0 as f64,
            self.x1 as f64,
            self.y1 as f64,
        )
    }
}
