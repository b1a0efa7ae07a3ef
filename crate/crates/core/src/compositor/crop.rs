use serde::{Deserialize, Serialize};

use super::raster::{PixelRect, Raster};
use super::CompositorError;
use crate::annotation::{dominant_article, ImageAnnotation};
use crate::geometry::BBox;

/// Which boxes defined the region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiSource {
    PersonsAndArticle,
    Articles,
    FullImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropResult {
    pub raster: Raster,
    /// Added to source coordinates to get crop coordinates.
    pub offset: (i64, i64),
    /// Crop window in source pixels.
    pub rect: PixelRect,
    pub roi_source: RoiSource,
    /// The region of interest did not fit at the requested aspect; the
    /// window is the maximal rectangle of that aspect, centered on it.
    pub roi_clipped: bool,
}

impl CropResult {
    /// Map an annotation of the source image into crop coordinates. Boxes
    /// are clipped to the window; boxes falling entirely outside are dropped.
    pub fn project(&self, ann: &ImageAnnotation) -> ImageAnnotation {
        let window = BBox::new(
            0.0,
            0.0,
            self.rect.width() as f64,
            self.rect.height() as f64,
        );
        let (dx, dy) = (self.offset.0 as f64, self.offset.1 as f64);
        let map = |b: &BBox| b.translate(dx, dy).intersection(&window);
        let mut out = ann.clone();
        out.width = self.rect.width();
        out.height = self.rect.height();
        out.persons = ann.persons.iter().filter_map(map).collect();
        out.faces = ann
            .faces
            .iter()
            .filter_map(|f| {
                map(&f.bbox).map(|b| crate::annotation::FaceAnnotation {
                    bbox: b,
                    ..f.clone()
                })
            })
            .collect();
        out.articles = ann
            .articles
            .iter()
            .filter_map(|a| {
                map(&a.bbox).map(|b| crate::annotation::ArticleAnnotation {
                    bbox: b,
                    ..a.clone()
                })
            })
            .collect();
        out.text_regions = ann.text_regions.iter().filter_map(map).collect();
        out
    }
}

fn check_aspect(aspect: f64) -> Result<(), CompositorError> {
    if aspect.is_finite() && aspect > 0.0 {
        Ok(())
    } else {
        Err(CompositorError::InvalidArgument(format!(
            "target aspect must be > 0, got {aspect}"
        )))
    }
}

/// Largest `w x h` with `w / h` ≈ `aspect` that fits in `width x height`.
fn maximal_dims(width: u32, height: u32, aspect: f64) -> (u32, u32) {
    if width as f64 / height as f64 >= aspect {
        let w = ((height as f64 * aspect).round() as u32).clamp(1, width);
        (w, height)
    } else {
        let h = ((width as f64 / aspect).round() as u32).clamp(1, height);
        (width, h)
    }
}

/// Window start along one axis: centered on `[lo, hi)`, kept inside
/// `[0, limit)`, and covering `[lo, hi)` whenever `len` allows.
fn place(lo: u32, hi: u32, len: u32, limit: u32) -> u32 {
    let center = (lo as f64 + hi as f64) / 2.0;
    let mut start = (center - len as f64 / 2.0).round().max(0.0) as u32;
    if len >= hi - lo {
        start = start.clamp(hi - len.min(hi), lo);
    }
    start.min(limit - len)
}

fn region_of_interest(ann: &ImageAnnotation) -> (Option<BBox>, RoiSource) {
    let hull = |boxes: &mut dyn Iterator<Item = BBox>| boxes.reduce(|a, b| a.hull(&b));
    if !ann.persons.is_empty() {
        let mut boxes = ann
            .persons
            .iter()
            .copied()
            .chain(dominant_article(ann).map(|(_, b)| b));
        return (hull(&mut boxes), RoiSource::PersonsAndArticle);
    }
    if !ann.articles.is_empty() {
        return (
            hull(&mut ann.articles.iter().map(|a| a.bbox)),
            RoiSource::Articles,
        );
    }
    (None, RoiSource::FullImage)
}

/// ROI as a pixel rectangle and its source; the full image when absent.
fn roi_rect(
    image: &Raster,
    ann: &ImageAnnotation,
) -> Result<(PixelRect, RoiSource), CompositorError> {
    let (w, h) = (image.width(), image.height());
    if w == 0 || h == 0 {
        return Err(CompositorError::InvalidArgument("empty image".into()));
    }
    let (roi, source) = region_of_interest(ann);
    match roi.map(|b| b.intersection(&BBox::new(0.0, 0.0, w as f64, h as f64))) {
        Some(Some(b)) => Ok((PixelRect::covering(&b, image)?, source)),
        _ => Ok((PixelRect::full(image), RoiSource::FullImage)),
    }
}

fn window(
    image: &Raster,
    roi: PixelRect,
    source: RoiSource,
    cw: u32,
    ch: u32,
) -> Result<CropResult, CompositorError> {
    let x0 = place(roi.x0, roi.x1, cw, image.width());
    let y0 = place(roi.y0, roi.y1, ch, image.height());
    let rect = PixelRect::new(x0, y0, x0 + cw, y0 + ch);
    Ok(CropResult {
        raster: image.sub_image(rect)?,
        offset: (-(x0 as i64), -(y0 as i64)),
        rect,
        roi_source: source,
        roi_clipped: source != RoiSource::FullImage && (cw < roi.width() || ch < roi.height()),
    })
}

/// Smallest window of the target aspect containing the region of interest:
/// persons plus the dominant article, else all articles, else the full image.
pub fn crop_roi(
    image: &Raster,
    ann: &ImageAnnotation,
    target_aspect: f64,
) -> Result<CropResult, CompositorError> {
    check_aspect(target_aspect)?;
    let (roi, source) = roi_rect(image, ann)?;
    let (rw, rh) = (roi.width(), roi.height());
    let (mut cw, mut ch) = if rw as f64 / rh as f64 >= target_aspect {
        (rw, (rw as f64 / target_aspect).ceil() as u32)
    } else {
        ((rh as f64 * target_aspect).ceil() as u32, rh)
    };
    if cw > image.width() || ch > image.height() {
        (cw, ch) = maximal_dims(image.width(), image.height(), target_aspect);
    }
    window(image, roi, source, cw, ch)
}

/// Window of exactly `width x height` placed over the region of interest as
/// [`crop_roi`] places it. Repeats a `crop_roi` result given its dimensions.
pub fn crop_sized(
    image: &Raster,
    ann: &ImageAnnotation,
    width: u32,
    height: u32,
) -> Result<CropResult, CompositorError> {
    if width == 0 || height == 0 || width > image.width() || height > image.height() {
        return Err(CompositorError::InvalidArgument(format!(
            "crop {width}x{height} does not fit a {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let (roi, source) = roi_rect(image, ann)?;
    window(image, roi, source, width, height)
}

/// Maximal centered window of the target aspect.
pub fn center_crop_baseline(image: &Raster, target_aspect: f64) -> Result<Raster, CompositorError> {
    check_aspect(target_aspect)?;
    let (w, h) = (image.width(), image.height());
    if w == 0 || h == 0 {
        return Err(CompositorError::InvalidArgument("empty image".into()));
    }
    let (cw, ch) = maximal_dims(w, h, target_aspect);
    let (x0, y0) = ((w - cw) / 2, (h - ch) / 2);
    image.sub_image(PixelRect::new(x0, y0, x0 + cw, y0 + ch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{ArticleAnnotation, ArticleCategory};

    fn ann(w: u32, h: u32) -> ImageAnnotation {
        ImageAnnotation::empty("t", w, h)
    }

    fn img(w: u32, h: u32) -> Raster {
        Raster::from_fn(w, h, |x, y| [x as u8, y as u8, 0, 255])
    }

    #[test]
    fn no_roi_square_is_identity() {
        let c = crop_roi(&img(50, 50), &ann(50, 50), 1.0).unwrap();
        assert_eq!(c.offset, (0, 0));
        assert_eq!(c.raster, img(50, 50));
        assert_eq!(c.roi_source, RoiSource::FullImage);
        assert!(!c.roi_clipped);
    }

    #[test]
    fn tall_person_forces_full_image() {
        let mut a = ann(100, 100);
        a.persons.push(BBox::new(40.0, 0.0, 60.0, 100.0));
        let c = crop_roi(&img(100, 100), &a, 1.0).unwrap();
        assert_eq!(c.rect, PixelRect::new(0, 0, 100, 100));
    }

    #[test]
    fn corner_person_wide_aspect() {
        let mut a = ann(200, 100);
        a.persons.push(BBox::new(0.0, 0.0, 50.0, 50.0));
        let c = crop_roi(&img(200, 100), &a, 2.0).unwrap();
        assert!(c.rect.to_bbox().contains_box(&a.persons[0]));
        assert_eq!(c.rect.width(), 2 * c.rect.height());
    }

    #[test]
    fn articles_fallback_and_clipping_flag() {
        let mut a = ann(100, 100);
        a.articles.push(ArticleAnnotation {
            category: ArticleCategory::Shoes,
            bbox: BBox::new(0.0, 40.0, 100.0, 60.0),
            confidence: 0.9,
        });
        let c = crop_roi(&img(100, 100), &a, 0.5).unwrap();
        assert_eq!(c.roi_source, RoiSource::Articles);
        assert!(c.roi_clipped);
        assert_eq!((c.rect.width(), c.rect.height()), (50, 100));
        assert_eq!(c.rect.x0, 25);
    }

    #[test]
    fn project_clips_and_drops() {
        let mut a = ann(200, 100);
        a.persons.push(BBox::new(0.0, 0.0, 50.0, 50.0));
        a.text_regions.push(BBox::new(190.0, 90.0, 200.0, 100.0));
        let c = crop_roi(&img(200, 100), &a, 1.0).unwrap();
        let p = c.project(&a);
        assert_eq!((p.width, p.height), (c.rect.width(), c.rect.height()));
        assert_eq!(p.persons.len(), 1);
        assert!(p.text_regions.is_empty());
    }

    #[test]
    fn baseline_examples() {
        let r = center_crop_baseline(&img(400, 400), 2.0).unwrap();
        assert_eq!(
            r,
            img(400, 400)
                .sub_image(PixelRect::new(0, 100, 400, 300))
                .unwrap()
        );
        assert_eq!(
            center_crop_baseline(&img(30, 20), 1.5).unwrap(),
            img(30, 20)
        );
        let r = center_crop_baseline(&img(300, 100), 1.0).unwrap();
        assert_eq!(
            r,
            img(300, 100)
                .sub_image(PixelRect::new(100, 0, 200, 100))
                .unwrap()
        );
        assert!(center_crop_baseline(&img(3, 3), 0.0).is_err());
    }
}
