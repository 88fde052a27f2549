use mcmle::fdr::{
    ebh_select, fdp_and_power, inclusion_rate_select, mirror_cutoff, mirror_select, mirror_statistics, random_halves,
    MirrorConfig, MirrorKind, SelectionDiagnostics,
};
use mcmle::inference::CoordinateSplit;
use mcmle::oracle::{exhaustive_ebh_k_star, exhaustive_mirror_cutoff};
use mcmle::solver::soft_threshold;
use mcmle::RngSeed;
use ndarray::Array1;
use proptest::prelude::*;

fn stats(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..max_len)
}

fn estimated_fdp(m: &Array1<f64>, t: f64) -> f64 {
    let below = m.iter().filter(|&&v| v < -t).count() as f64;
    let above = m.iter().filter(|&&v| v > t).count() as f64;
    if below == 0.0 {
        0.0
    } else if above == 0.0 {
        f64::INFINITY
    } else {
        below / above
    }
}

proptest! {
    #[test]
    fn cutoff_controls_estimated_fdp(m in stats(60), q in 0.01f64..0.99) {
        let m = Array1::from(m);
        let (tau, _) = mirror_cutoff(m.view(), q);
        if tau.is_finite() {
            prop_assert!(estimated_fdp(&m, tau) <= q);
        }
        prop_assert_eq!(tau, exhaustive_mirror_cutoff(m.view(), q));
    }

    #[test]
    fn mirror_selection_ignores_common_rescaling(
        pairs in prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0), 1..40),
        scale in 0.1f64..10.0,
        q in 0.05f64..0.5,
    ) {
        let t1: Array1<f64> = pairs.iter().map(|p| p.0).collect();
        let t2: Array1<f64> = pairs.iter().map(|p| p.1).collect();
        let base = mirror_select(t1.view(), t2.view(), &MirrorConfig::new(q)).unwrap();
        let scaled = mirror_select((&t1 * scale).view(), (&t2 * scale).view(), &MirrorConfig::new(q)).unwrap();
        prop_assert_eq!(base.selected, scaled.selected);
    }

    #[test]
    fn mirror_sign_is_symmetric(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        for kind in [MirrorKind::Product, MirrorKind::Sum] {
            let m = mirror_statistics(Array1::from(vec![a]).view(), Array1::from(vec![b]).view(), kind).unwrap()[0];
            let flipped = mirror_statistics(Array1::from(vec![-a]).view(), Array1::from(vec![-b]).view(), kind).unwrap()[0];
            prop_assert_eq!(m, flipped);
            let swapped = mirror_statistics(Array1::from(vec![b]).view(), Array1::from(vec![a]).view(), kind).unwrap()[0];
            prop_assert!((m - swapped).abs() <= 1e-12 * (1.0 + m.abs()));
        }
    }

    #[test]
    fn ebh_threshold_and_oracle(e in prop::collection::vec(0.0f64..200.0, 1..40), q in 0.01f64..0.5) {
        let e = Array1::from(e);
        let r = ebh_select(e.view(), q).unwrap();
        let SelectionDiagnostics::EBh(set) = &r.diagnostics else { unreachable!() };
        let k = set.k_star;
        prop_assert_eq!(k, exhaustive_ebh_k_star(e.view(), q));
        prop_assert_eq!(r.selected.len(), k);
        if k > 0 {
            prop_assert!(k as f64 * e[set.order[k - 1]] / e.len() as f64 >= 1.0 / q);
        }
    }

    #[test]
    fn ebh_selection_grows_when_evidence_doubles(e in prop::collection::vec(0.0f64..100.0, 1..30), q in 0.01f64..0.5) {
        let e = Array1::from(e);
        let base = ebh_select(e.view(), q).unwrap();
        let doubled = ebh_select((&e * 2.0).view(), q).unwrap();
        prop_assert!(base.selected.iter().all(|j| doubled.selected.contains(j)));
    }

    #[test]
    fn inclusion_rate_selection_is_upper_set(rates in prop::collection::vec(0.0f64..1.0, 1..30), q in 0.01f64..0.9) {
        let rates = Array1::from(rates);
        let r = inclusion_rate_select(rates.view(), q).unwrap();
        if let Some(min_in) = r.selected.iter().map(|&j| rates[j]).reduce(f64::min) {
            for j in 0..rates.len() {
                if rates[j] > min_in {
                    prop_assert!(r.selected.contains(&j));
                }
            }
        }
    }

    #[test]
    fn soft_threshold_is_prox_of_l1(z in prop::collection::vec(-10.0f64..10.0, 1..20), kappa in 0.0f64..5.0) {
        let z = Array1::from(z);
        let s = soft_threshold(z.view(), kappa);
        for (zi, si) in z.iter().zip(s.iter()) {
            prop_assert!(si.abs() <= zi.abs());
            prop_assert!(*si == 0.0 || si.signum() == zi.signum());
            if zi.abs() > kappa {
                prop_assert!((zi - si).abs() - kappa <= 1e-12);
            } else {
                prop_assert_eq!(*si, 0.0);
            }
        }
    }

    #[test]
    fn coordinate_split_round_trips(theta in prop::collection::vec(-3.0f64..3.0, 2..25), pick in any::<prop::sample::Index>()) {
        let theta = Array1::from(theta);
        let t = pick.index(theta.len());
        let split = CoordinateSplit::new(theta.view(), t).unwrap();
        prop_assert_eq!(split.alpha_hat, theta[t]);
        prop_assert_eq!(split.beta_hat.len(), theta.len() - 1);
        prop_assert_eq!(split.assemble(split.alpha_hat), theta);
    }

    #[test]
    fn halves_partition_rows(n in 2usize..300, seed in any::<u64>()) {
        let (a, b) = random_halves(n, RngSeed::new(seed, 0));
        prop_assert_eq!(a.len(), n / 2);
        let mut all: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn fdp_and_power_are_proportions(sel in prop::collection::btree_set(0usize..30, 0..30), sup in prop::collection::btree_set(0usize..30, 0..30)) {
        let sel: Vec<usize> = sel.into_iter().collect();
        let sup: Vec<usize> = sup.into_iter().collect();
        let (fdp, power) = fdp_and_power(&sel, &sup);
        prop_assert!((0.0..=1.0).contains(&fdp));
        prop_assert!((0.0..=1.0).contains(&power));
        if sel.is_empty() {
            prop_assert_eq!(fdp, 0.0);
        }
    }
}
