use bannerforge_core::compositor::{
    apply_gradient, compose, crop_roi, crop_sized, ComposeOptions, CompositorError, PixelRect,
    Raster,
};
use bannerforge_core::energy::{ElementBox, ElementKind, Layout};
use bannerforge_core::ga::seeded_rng;
use bannerforge_core::synth::{paint_logo, paint_photo, random_photoshoot};
use bannerforge_core::{BBox, ImageAnnotation};
use proptest::prelude::*;

fn raster() -> impl Strategy<Value = Raster> {
    (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), (w * h * 4) as usize)
            .prop_map(move |px| Raster::from_rgba(w, h, px).unwrap())
    })
}

fn photo(seed: u64, w: u32, h: u32) -> (ImageAnnotation, Raster) {
    let ann = random_photoshoot(&mut seeded_rng(seed), "p", w, h);
    let img = paint_photo(&ann, seed);
    (ann, img)
}

fn inside(rect: &PixelRect, x: u32, y: u32) -> bool {
    rect.contains(x, y)
}

proptest! {
    #[test]
    fn png_round_trip_is_lossless(r in raster()) {
        let back = Raster::decode_png(&r.encode_png().unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn zero_strength_gradient_is_identity(r in raster(), fx in 0.0..1.0f64, fy in 0.0..1.0f64) {
        let region = BBox::new(0.0, 0.0, (r.width() as f64 * fx).max(1.0), (r.height() as f64 * fy).max(1.0));
        let g = apply_gradient(&r, &region, 0.0).unwrap();
        prop_assert_eq!(g.as_bytes(), r.as_bytes());
    }

    #[test]
    fn gradient_only_darkens_inside_region(r in raster(), s in 0.0..=1.0f64) {
        let region = BBox::new(0.0, 0.0, (r.width() as f64 / 2.0).max(1.0), r.height() as f64);
        let g = apply_gradient(&r, &region, s).unwrap();
        let rect = PixelRect::covering(&region, &r).unwrap();
        for y in 0..r.height() {
            for x in 0..r.width() {
                let (a, b) = (r.get(x, y), g.get(x, y));
                if inside(&rect, x, y) {
                    prop_assert!((0..3).all(|c| b[c] <= a[c]) && a[3] == b[3]);
                } else {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn crop_hits_aspect_and_contains_roi(seed in 0u64..10_000, w in 80u32..500, h in 80u32..500, aspect in 0.3..4.0f64) {
        let (ann, img) = photo(seed, w, h);
        let c = crop_roi(&img, &ann, aspect).unwrap();
        let (cw, ch) = (c.raster.width() as f64, c.raster.height() as f64);
        prop_assert!((cw - aspect * ch).abs() < 1.0 || (ch - cw / aspect).abs() < 1.0, "{cw}x{ch} at {aspect}");
        prop_assert!(c.rect.x1 <= w && c.rect.y1 <= h);
        prop_assert_eq!(&c.raster, &img.sub_image(c.rect).unwrap());
        if !c.roi_clipped {
            for p in &ann.persons {
                let r = c.rect.to_bbox();
                prop_assert!(p.x_left >= r.x_left - 1.0 && p.x_right <= r.x_right + 1.0);
                prop_assert!(p.y_top >= r.y_top - 1.0 && p.y_bottom <= r.y_bottom + 1.0);
            }
        }
    }

    #[test]
    fn sized_crop_repeats_aspect_crop(seed in 0u64..10_000, aspect in 0.3..4.0f64) {
        let (ann, img) = photo(seed, 480, 320);
        let a = crop_roi(&img, &ann, aspect).unwrap();
        let b = crop_sized(&img, &ann, a.raster.width(), a.raster.height()).unwrap();
        prop_assert_eq!(a.rect, b.rect);
        prop_assert_eq!(a.roi_source, b.roi_source);
    }

    #[test]
    fn compose_touches_only_element_boxes(seed in 0u64..10_000, fx in 0.0..1.0f64, fy in 0.0..1.0f64, gx in 0.0..1.0f64, gy in 0.0..1.0f64) {
        let (ann, img) = photo(seed, 480, 320);
        let crop = crop_roi(&img, &ann, 1.5).unwrap();
        let (cw, ch) = (crop.raster.width() as f64, crop.raster.height() as f64);
        let (tw, th) = (cw * 0.5, ch * 0.3);
        let text = BBox::from_xywh(fx * (cw - tw), fy * (ch - th), tw, th);
        let (lw, lh) = (cw * 0.2, ch * 0.15);
        let logo_box = BBox::from_xywh(gx * (cw - lw), gy * (ch - lh), lw, lh);
        let layout = Layout::new(cw, ch)
            .with(ElementBox::movable(ElementKind::Text, text))
            .with(ElementBox::movable(ElementKind::Logo, logo_box));
        let logo = paint_logo(40, 20, [200, 0, 0, 255], [255; 4]);
        let out = match compose(&img, &ann, &layout, &logo, "Sale", &ComposeOptions::default()) {
            Err(CompositorError::TextOverflow { .. }) => return Ok(()),
            r => r.unwrap(),
        };
        let banner = &out.banner;
        prop_assert_eq!((banner.width(), banner.height()), (crop.raster.width(), crop.raster.height()));
        let tr = PixelRect::covering(&text, banner).unwrap();
        let lr = PixelRect::covering(&logo_box, banner).unwrap();
        let mut changed_in_text = false;
        for y in 0..banner.height() {
            for x in 0..banner.width() {
                let same = banner.get(x, y) == crop.raster.get(x, y);
                if !inside(&tr, x, y) && !inside(&lr, x, y) {
                    prop_assert!(same, "pixel ({x},{y}) changed outside element boxes");
                } else if inside(&tr, x, y) && !same {
                    changed_in_text = true;
                }
            }
        }
        prop_assert!(changed_in_text);
    }
}
