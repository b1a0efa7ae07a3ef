//! Raster operations that turn a photoshoot image, a layout and brand
//! elements into a finished banner.

mod crop;
pub mod font;
mod raster;
mod text;

pub use crop::{center_crop_baseline, crop_roi, crop_sized, CropResult, RoiSource};
pub use raster::{PixelRect, Raster, Rgba};
pub use text::{
    layout_text, line_height_for, render_text, Alignment, TextStyle, GOLDEN_RATIO, MIN_FONT_HEIGHT,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::ImageAnnotation;
use crate::energy::{ElementKind, Layout};
use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum CompositorError {
    #[error("png: {0}")]
    Png(String),
    #[error("io: {0}")]
    Io(String),
    #[error("region {region:?} lies outside the {width}x{height} raster")]
    OutOfBounds {
        region: BBox,
        width: u32,
        height: u32,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("text {text:?} does not fit a {box_width}x{box_height} box at font height {min_font}")]
    TextOverflow {
        text: String,
        box_width: u32,
        box_height: u32,
        min_font: u32,
    },
    #[error("layout canvas {layout_width}x{layout_height} does not fit image {image_width}x{image_height}")]
    CanvasMismatch {
        layout_width: f64,
        layout_height: f64,
        image_width: u32,
        image_height: u32,
    },
    #[error("layout: {0}")]
    Layout(String),
}

pub const WHITE: Rgba = [255, 255, 255, 255];
pub const NEAR_BLACK: Rgba = [16, 16, 16, 255];
pub const MIN_CONTRAST: f64 = 4.5;
pub const DEFAULT_GRADIENT_STRENGTH: f64 = 0.25;

/// Straight-alpha source-over.
pub(crate) fn blend_over(src: Rgba, dst: Rgba) -> Rgba {
    match src[3] {
        0 => dst,
        255 => src,
        sa => {
            let sa = sa as f64 / 255.0;
            let da = dst[3] as f64 / 255.0;
            let oa = sa + da * (1.0 - sa);
            let mut out = [0u8; 4];
            for c in 0..3 {
                let v = (src[c] as f64 * sa + dst[c] as f64 * da * (1.0 - sa)) / oa;
                out[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            out[3] = (oa * 255.0).round() as u8;
            out
        }
    }
}

/// Vertical darkening over `region`: RGB is scaled by a factor falling
/// linearly from 1 on the top row to `1 - strength` on the bottom row.
pub fn apply_gradient(
    raster: &Raster,
    region: &BBox,
    strength: f64,
) -> Result<Raster, CompositorError> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(CompositorError::InvalidArgument(format!(
            "gradient strength {strength} not in [0, 1]"
        )));
    }
    let rect = PixelRect::covering(region, raster)?;
    let mut out = raster.clone();
    let rows = rect.height();
    for y in rect.y0..rect.y1 {
        let t = if rows == 1 {
            1.0
        } else {
            (y - rect.y0) as f64 / (rows - 1) as f64
        };
        let factor = 1.0 - strength * t;
        for x in rect.x0..rect.x1 {
            let mut p = out.get(x, y);
            for c in &mut p[..3] {
                *c = (*c as f64 * factor).round() as u8;
            }
            out.set(x, y, p);
        }
    }
    Ok(out)
}

fn linearize(c: u8) -> f64 {
    let v = c as f64 / 255.0;
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Rec. 709 relative luminance of an sRGB colour.
pub fn relative_luminance(c: Rgba) -> f64 {
    0.2126 * linearize(c[0]) + 0.7152 * linearize(c[1]) + 0.0722 * linearize(c[2])
}

pub fn contrast_ratio(l1: f64, l2: f64) -> f64 {
    let (hi, lo) = if l1 >= l2 { (l1, l2) } else { (l2, l1) };
    (hi + 0.05) / (lo + 0.05)
}

/// Mean relative luminance over the pixels covered by `region`.
pub fn mean_luminance(raster: &Raster, region: &BBox) -> Result<f64, CompositorError> {
    let rect = PixelRect::covering(region, raster)?;
    let mut sum = 0.0;
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            sum += relative_luminance(raster.get(x, y));
        }
    }
    Ok(sum / (rect.width() as f64 * rect.height() as f64))
}

/// White on dark regions, near-black on light ones. If the pick misses
/// [`MIN_CONTRAST`], the extreme with the higher contrast is used.
pub fn choose_text_color(raster: &Raster, region: &BBox) -> Result<Rgba, CompositorError> {
    let lum = mean_luminance(raster, region)?;
    let white = contrast_ratio(lum, relative_luminance(WHITE));
    let dark = contrast_ratio(lum, relative_luminance(NEAR_BLACK));
    let pick = if lum < 0.5 {
        (WHITE, white)
    } else {
        (NEAR_BLACK, dark)
    };
    if pick.1 >= MIN_CONTRAST {
        return Ok(pick.0);
    }
    Ok(if white >= dark { WHITE } else { NEAR_BLACK })
}

/// Scale `overlay` to fit the box keeping its aspect (centered,
/// nearest-neighbour) and composite it source-over.
pub fn paste(base: &Raster, overlay: &Raster, b: &BBox) -> Result<Raster, CompositorError> {
    let rect = PixelRect::covering(b, base)?;
    let (ow, oh) = (overlay.width(), overlay.height());
    if ow == 0 || oh == 0 {
        return Err(CompositorError::InvalidArgument("empty overlay".into()));
    }
    let (bw, bh) = (rect.width(), rect.height());
    let s = (bw as f64 / ow as f64).min(bh as f64 / oh as f64);
    let tw = ((ow as f64 * s).round() as u32).clamp(1, bw);
    let th = ((oh as f64 * s).round() as u32).clamp(1, bh);
    let x0 = rect.x0 + (bw - tw) / 2;
    let y0 = rect.y0 + (bh - th) / 2;

    let mut out = base.clone();
    for ty in 0..th {
        let sy = (((ty as f64 + 0.5) * oh as f64 / th as f64) as u32).min(oh - 1);
        for tx in 0..tw {
            let sx = (((tx as f64 + 0.5) * ow as f64 / tw as f64) as u32).min(ow - 1);
            let (x, y) = (x0 + tx, y0 + ty);
            out.set(x, y, blend_over(overlay.get(sx, sy), out.get(x, y)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeOptions {
    pub gradient: bool,
    pub gradient_strength: f64,
    pub min_font: u32,
    pub alignment: Alignment,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        Self {
            gradient: true,
            gradient_strength: DEFAULT_GRADIENT_STRENGTH,
            min_font: MIN_FONT_HEIGHT,
            alignment: Alignment::Left,
        }
    }
}

/// Per-text-element rendering decisions, reported alongside the banner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPlacement {
    pub bbox: BBox,
    pub lines: Vec<String>,
    pub style: Option<TextStyle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub banner: Raster,
    pub crop: CropResult,
    pub text: Vec<TextPlacement>,
}

/// Crop, darken text regions, set the callout and paste the logo.
///
/// The crop is a window of the layout's canvas size placed over the region
/// of interest as [`crop_roi`] places it.
///
/// The callout goes into the first text element; every text element gets
/// the gradient. An empty callout renders no text.
pub fn compose(
    image: &Raster,
    ann: &ImageAnnotation,
    layout: &Layout,
    logo: &Raster,
    callout: &str,
    options: &ComposeOptions,
) -> Result<Composition, CompositorError> {
    let logos: Vec<_> = layout.of_kind(ElementKind::Logo).collect();
    let texts: Vec<_> = layout.of_kind(ElementKind::Text).collect();
    if logos.len() != 1 || texts.is_empty() {
        return Err(CompositorError::Layout(format!(
            "need exactly one logo and at least one text element, got {} and {}",
            logos.len(),
            texts.len()
        )));
    }
    if !(layout.canvas_width > 0.0 && layout.canvas_height > 0.0) {
        return Err(CompositorError::Layout(
            "canvas dimensions must be > 0".into(),
        ));
    }
    let (cw, ch) = (layout.canvas_width.round(), layout.canvas_height.round());
    if cw < 1.0 || ch < 1.0 || cw > image.width() as f64 || ch > image.height() as f64 {
        return Err(CompositorError::CanvasMismatch {
            layout_width: layout.canvas_width,
            layout_height: layout.canvas_height,
            image_width: image.width(),
            image_height: image.height(),
        });
    }
    let crop = crop_sized(image, ann, cw as u32, ch as u32)?;

    let mut banner = crop.raster.clone();
    let mut placements = Vec::with_capacity(texts.len());
    for (i, t) in texts.iter().enumerate() {
        if options.gradient {
            banner = apply_gradient(&banner, &t.bbox, options.gradient_strength)?;
        }
        let mut placement = TextPlacement {
            bbox: t.bbox,
            lines: vec![],
            style: None,
        };
        if i == 0 && !callout.trim().is_empty() {
            let color = choose_text_color(&banner, &t.bbox)?;
            let (lines, mut style) = layout_text(callout, &t.bbox, options.min_font)?;
            style.color = color;
            style.alignment = options.alignment;
            banner = render_text(&banner, &lines, &style, &t.bbox)?;
            placement.lines = lines;
            placement.style = Some(style);
        }
        placements.push(placement);
    }
    banner = paste(&banner, logo, &logos[0].bbox)?;
    Ok(Composition {
        banner,
        crop,
        text: placements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_examples() {
        let gray = Raster::filled(10, 10, [200, 200, 200, 255]);
        let full = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(apply_gradient(&gray, &full, 0.0).unwrap(), gray);
        let g = apply_gradient(&gray, &full, 1.0).unwrap();
        assert_eq!(g.get(3, 9), [0, 0, 0, 255]);
        assert_eq!(g.get(3, 0), [200, 200, 200, 255]);
        let g = apply_gradient(&gray, &full, 0.5).unwrap();
        assert!((g.get(0, 9)[0] as i32 - 100).abs() <= 1);
        assert!(apply_gradient(&gray, &BBox::new(5.0, 5.0, 12.0, 8.0), 0.5).is_err());
        assert!(apply_gradient(&gray, &full, 1.5).is_err());
    }

    #[test]
    fn color_rules() {
        let region = BBox::new(0.0, 0.0, 4.0, 4.0);
        assert_eq!(
            choose_text_color(&Raster::filled(4, 4, [0, 0, 0, 255]), &region).unwrap(),
            WHITE
        );
        assert_eq!(
            choose_text_color(&Raster::filled(4, 4, [255; 4]), &region).unwrap(),
            NEAR_BLACK
        );
    }

    #[test]
    fn mid_gray_forces_higher_contrast_extreme() {
        // hand formula: lin(v) = ((v/255 + 0.055)/1.055)^2.4
        let lin = |v: f64| ((v / 255.0 + 0.055) / 1.055).powf(2.4);
        let l_gray = lin(128.0);
        let vs_white = 1.05 / (l_gray + 0.05);
        let vs_dark = (l_gray + 0.05) / (lin(16.0) + 0.05);
        assert!(l_gray < 0.5 && vs_white < 4.5 && vs_dark >= 4.5);
        let region = BBox::new(0.0, 0.0, 4.0, 4.0);
        assert_eq!(
            choose_text_color(&Raster::filled(4, 4, [128, 128, 128, 255]), &region).unwrap(),
            NEAR_BLACK
        );
    }

    #[test]
    fn paste_examples() {
        let base = Raster::from_fn(20, 20, |x, y| [x as u8, y as u8, 9, 255]);
        let clear = Raster::filled(5, 5, [255, 0, 0, 0]);
        assert_eq!(
            paste(&base, &clear, &BBox::new(2.0, 2.0, 12.0, 12.0)).unwrap(),
            base
        );

        let logo = Raster::from_fn(2, 2, |x, y| [100 + x as u8, 50 + y as u8, 0, 255]);
        let out = paste(&base, &logo, &BBox::new(4.0, 4.0, 8.0, 8.0)).unwrap();
        for y in 4..8 {
            for x in 4..8 {
                assert_eq!(out.get(x, y), logo.get((x - 4) / 2, (y - 4) / 2));
            }
        }

        let wide = Raster::filled(40, 20, [1, 2, 3, 255]);
        let out = paste(&base, &wide, &BBox::new(0.0, 0.0, 16.0, 16.0)).unwrap();
        for x in 0..16 {
            for y in (0..4).chain(12..16) {
                assert_eq!(out.get(x, y), base.get(x, y));
            }
            for y in 4..12 {
                assert_eq!(out.get(x, y), [1, 2, 3, 255]);
            }
        }
        assert!(paste(&base, &wide, &BBox::new(10.0, 10.0, 25.0, 15.0)).is_err());
    }

    #[test]
    fn half_alpha_blend() {
        assert_eq!(
            blend_over([255, 0, 0, 128], [0, 0, 255, 255]),
            [128, 0, 127, 255]
        );
    }
}
