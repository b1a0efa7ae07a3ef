use bannerforge_core::energy::{feasible, total_energy};
use bannerforge_core::ga::{brute_force_layout, evolve, random_search, seeded_rng, GAConfig};
use bannerforge_core::synth::layout_problem;
use proptest::prelude::*;

fn small() -> GAConfig {
    GAConfig {
        population_size: 40,
        generations: 40,
        ..GAConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_are_monotone_feasible_and_reproducible(problem_seed in 0u64..1000, seed in any::<u64>()) {
        let p = layout_problem(problem_seed);
        let cfg = small().with_seed(seed);
        let run = evolve(&p, &cfg).unwrap();
        prop_assert!(run.history.windows(2).all(|w| w[1].best_energy <= w[0].best_energy));
        prop_assert!(feasible(&run.best_layout, &p.bounds));
        prop_assert_eq!(total_energy(&run.best_layout, &p.weights, &p.bounds), run.best_breakdown);
        prop_assert!(run.ranked.windows(2).all(|w| w[0].energy.total <= w[1].energy.total));
        prop_assert_eq!(evolve(&p, &cfg).unwrap(), run);
    }

    #[test]
    fn ga_stays_within_lattice_optimum(problem_seed in 0u64..1000) {
        let p = layout_problem(problem_seed);
        let (_, exact) = brute_force_layout(&p, 12).unwrap();
        let run = evolve(&p, &GAConfig::default().with_seed(problem_seed)).unwrap();
        prop_assert!(run.best_energy <= exact.total * 1.02 + 1e-12, "{} vs {}", run.best_energy, exact.total);
        let rs = random_search(&p, 200, &mut seeded_rng(problem_seed)).unwrap();
        prop_assert!(rs.energy.feasible);
    }
}
