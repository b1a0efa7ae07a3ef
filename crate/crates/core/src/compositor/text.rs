use serde::{Deserialize, Serialize};

use super::blend_over;
use super::font::{self, ADVANCE, GLYPH_HEIGHT, GLYPH_WIDTH};
use super::raster::{PixelRect, Raster, Rgba};
use super::CompositorError;
use crate::geometry::BBox;

pub const GOLDEN_RATIO: f64 = 1.618;
pub const MIN_FONT_HEIGHT: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    Left,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextStyle {
    pub font_height: u32,
    pub line_height: u32,
    pub color: Rgba,
    pub alignment: Alignment,
}

impl TextStyle {
    pub fn new(font_height: u32, color: Rgba, alignment: Alignment) -> Self {
        Self {
            font_height,
            line_height: line_height_for(font_height),
            color,
            alignment,
        }
    }
}

pub fn line_height_for(font_height: u32) -> u32 {
    (GOLDEN_RATIO * font_height as f64).round() as u32
}

/// Size of a box in whole pixels, as used for fitting.
fn box_dims(b: &BBox) -> Result<(u32, u32), CompositorError> {
    if !(b.width() > 0.0 && b.height() > 0.0 && b.width().is_finite() && b.height().is_finite()) {
        return Err(CompositorError::InvalidArgument(format!(
            "degenerate text box {b:?}"
        )));
    }
    Ok((b.width().floor() as u32, b.height().floor() as u32))
}

/// Greedy word wrap; `None` when some word is wider than `max_width`.
fn wrap(words: &[&str], font_height: u32, max_width: u32) -> Option<Vec<String>> {
    let mut lines: Vec<String> = Vec::new();
    let mut current = String::new();
    for word in words {
        if font::line_width(word.chars().count(), font_height) > max_width {
            return None;
        }
        let candidate_len = if current.is_empty() {
            word.chars().count()
        } else {
            current.chars().count() + 1 + word.chars().count()
        };
        if font::line_width(candidate_len, font_height) <= max_width {
            if !current.is_empty() {
                current.push(' ');
            }
            current.push_str(word);
        } else {
            lines.push(std::mem::take(&mut current));
            current.push_str(word);
        }
    }
    if !current.is_empty() {
        lines.push(current);
    }
    Some(lines)
}

/// Word-wrap `text` at the largest font height (searched down from the box
/// height) whose lines fit the box. The returned style carries a
/// placeholder color; callers pick the color separately.
pub fn layout_text(
    text: &str,
    b: &BBox,
    min_font: u32,
) -> Result<(Vec<String>, TextStyle), CompositorError> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(CompositorError::InvalidArgument(
            "callout text is empty".into(),
        ));
    }
    let (bw, bh) = box_dims(b)?;
    let floor = min_font.max(MIN_FONT_HEIGHT);
    for fh in (floor..=bh).rev() {
        let Some(lines) = wrap(&words, fh, bw) else {
            continue;
        };
        if lines.len() as u64 * line_height_for(fh) as u64 <= bh as u64 {
            return Ok((
                lines,
                TextStyle::new(fh, [255, 255, 255, 255], Alignment::Left),
            ));
        }
    }
    Err(CompositorError::TextOverflow {
        text: text.to_string(),
        box_width: bw,
        box_height: bh,
        min_font: floor,
    })
}

/// Draw `lines` into the box with nearest-neighbour scaled glyphs.
/// Pixels outside the box are never touched.
pub fn render_text(
    raster: &Raster,
    lines: &[String],
    style: &TextStyle,
    b: &BBox,
) -> Result<Raster, CompositorError> {
    let mut out = raster.clone();
    if lines.is_empty() {
        return Ok(out);
    }
    let rect = PixelRect::covering(b, raster)?;
    let fh = style.font_height;
    if fh == 0 {
        return Err(CompositorError::InvalidArgument(
            "font height must be > 0".into(),
        ));
    }
    let scale = fh as f64 / GLYPH_HEIGHT as f64;
    let glyph_px = (GLYPH_WIDTH as f64 * scale).ceil() as u32;
    let lead = style.line_height.saturating_sub(fh) / 2;

    for (i, line) in lines.iter().enumerate() {
        let top = rect.y0 as u64 + i as u64 * style.line_height as u64 + lead as u64;
        let width = font::line_width(line.chars().count(), fh);
        let left = match style.alignment {
            Alignment::Left => rect.x0,
            Alignment::Center => rect.x0 + rect.width().saturating_sub(width) / 2,
        } as u64;
        for (k, c) in line.chars().enumerate() {
            let cell = left + (k as f64 * ADVANCE as f64 * scale).round() as u64;
            for py in 0..fh {
                let row = ((py as f64 / scale) as u32).min(GLYPH_HEIGHT - 1);
                for px in 0..glyph_px {
                    let col = (px as f64 / scale) as u32;
                    if !font::ink(c, col, row) {
                        continue;
                    }
                    let (x, y) = (cell + px as u64, top + py as u64);
                    if x > u32::MAX as u64
                        || y > u32::MAX as u64
                        || !rect.contains(x as u32, y as u32)
                    {
                        continue;
                    }
                    let (x, y) = (x as u32, y as u32);
                    out.set(x, y, blend_over(style.color, out.get(x, y)));
                }
            }
        }
    }
    Ok(out)
}
