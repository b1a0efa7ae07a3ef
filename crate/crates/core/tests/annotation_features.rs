use bannerforge_core::annotation::{
    filter_images, parse_annotation, to_json, validate, ArticleCategory, Environment,
    FilterCriteria, Gender,
};
use bannerforge_core::energy::Layout;
use bannerforge_core::features::{extract, FeatureSchema};
use bannerforge_core::ga::seeded_rng;
use bannerforge_core::synth::random_photoshoot;
use bannerforge_core::ImageAnnotation;
use proptest::prelude::*;

fn catalog(seed: u64, n: usize) -> Vec<ImageAnnotation> {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|i| random_photoshoot(&mut rng, &format!("img{i:03}"), 320, 240))
        .collect()
}

fn criteria() -> impl Strategy<Value = FilterCriteria> {
    (
        prop::option::of(prop::sample::select(vec![
            "acme".to_string(),
            "northwind".to_string(),
        ])),
        prop::option::of(prop::sample::select(ArticleCategory::ALL.to_vec())),
        prop::option::of(prop::sample::select(vec![
            Environment::Indoor,
            Environment::Outdoor,
        ])),
        prop::option::of(prop::sample::select(vec![Gender::Male, Gender::Female])),
        0.0..1.0f64,
    )
        .prop_map(
            |(brand, category, environment, gender, max_text_area_fraction)| FilterCriteria {
                brand,
                category,
                environment,
                gender,
                max_text_area_fraction,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_is_an_idempotent_subsequence(seed in 0u64..1000, crit in criteria()) {
        let cat = catalog(seed, 30);
        let ids = filter_images(&cat, &crit);
        let all: Vec<String> = cat.iter().map(|a| a.image_id.clone()).collect();
        let mut it = all.iter();
        prop_assert!(ids.iter().all(|id| it.any(|a| a == id)), "not an ordered subsequence");
        let kept: Vec<ImageAnnotation> = cat.iter().filter(|a| ids.contains(&a.image_id)).cloned().collect();
        prop_assert_eq!(filter_images(&kept, &crit), ids);
    }

    #[test]
    fn generated_annotations_validate_and_round_trip(seed in 0u64..1000) {
        for a in catalog(seed, 5) {
            prop_assert!(validate(&a).is_empty(), "{:?}", validate(&a));
            prop_assert_eq!(parse_annotation(to_json(&a).as_bytes()).unwrap(), a);
        }
    }

    #[test]
    fn features_ignore_box_list_order(seed in 0u64..1000, rot in 0usize..4) {
        let cat = catalog(seed, 8);
        let schema = FeatureSchema::build(&cat, 16).unwrap();
        for a in &cat {
            let mut b = a.clone();
            let k = rot % b.persons.len().max(1);
            b.persons.rotate_left(k);
            let k = rot % b.faces.len().max(1);
            b.faces.rotate_left(k);
            let k = rot % b.articles.len().max(1);
            b.articles.rotate_left(k);
            b.articles.reverse();
            let fa = extract(a, &Layout::from_annotation(a), &schema).unwrap();
            let fb = extract(&b, &Layout::from_annotation(&b), &schema).unwrap();
            prop_assert_eq!(fa.values, fb.values);
        }
    }

    #[test]
    fn schema_ignores_catalog_order(seed in 0u64..1000) {
        let cat = catalog(seed, 12);
        let mut rev = cat.clone();
        rev.reverse();
        let a = FeatureSchema::build(&cat, 16).unwrap();
        let b = FeatureSchema::build(&rev, 16).unwrap();
        prop_assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
