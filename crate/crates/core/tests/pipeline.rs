use std::fs;

use graphon_transfer::clustering::{embed, kmeans};
use graphon_transfer::io::{Column, SignalSeries};
use graphon_transfer::operators::laplacian_spectrum;
use graphon_transfer::pipeline::{execute, Builtin, RunConfig, Source, Stages};
use graphon_transfer::sampling::{pairs, walk, WalkOptions};
use graphon_transfer::{
    degree_profile, eigendecompose, empirical_covariances, galerkin_matrices, make_gaussian,
    quadrature_covariances, transition_density, Graphon32, Graphon64, Operator, QuadratureWeight, Regularization,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn triple_peak_values<T: graphon_transfer::Real>(g: &graphon_transfer::Graphon<T>) -> Vec<f64> {
    let td = transition_density(g, &degree_profile(g, 1000).unwrap()).unwrap();
    let t = walk(&td, 20000, 5, &WalkOptions::default()).unwrap();
    let d = make_gaussian::<T>(20, T::lit(0.05), false).unwrap();
    let om = galerkin_matrices(&empirical_covariances(&d, &pairs(&t)).unwrap(), Regularization::Auto).unwrap();
    let sm = eigendecompose(&om, Operator::K, 3).unwrap();
    sm.spectral_values().iter().take(3).map(|v| v.as_f64()).collect()
}

#[test]
fn single_precision_tracks_double() {
    let a = triple_peak_values(&Graphon64::triple_peak());
    let b = triple_peak_values(&Graphon32::triple_peak());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 2e-2, "{a:?} vs {b:?}");
    }
    assert!(b[1] > 0.9 && b[2] > 0.6);
}

#[test]
fn walks_and_clusters_are_deterministic() {
    let mut cfg = RunConfig::builtin(Builtin::QuadruplePeak);
    cfg.m = 5000;
    let a = execute(&cfg, Stages::ALL).unwrap();
    let b = execute(&cfg, Stages::ALL).unwrap();
    assert_eq!(a.trajectory.states, b.trajectory.states);
    assert_eq!(a.clusters.unwrap().assignments, b.clusters.unwrap().assignments);
    assert_eq!(a.p.unwrap().values, b.p.unwrap().values);
}

#[test]
fn seasonal_signal_has_no_clear_gap() {
    let dir = tempfile::tempdir().unwrap();
    // Annual cycle plus persistent (AR(1)) daily anomalies over ten years.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Normal::new(0.0, 3.0).unwrap();
    let mut anomaly = 0.0;
    let mut csv = String::from("day,temperature\n");
    for day in 0..3650 {
        anomaly = 0.7 * anomaly + noise.sample(&mut rng);
        let t = 10.0 - 12.0 * (2.0 * std::f64::consts::PI * day as f64 / 365.25).cos() + anomaly;
        csv.push_str(&format!("{day},{t:.2}\n"));
    }
    let path = dir.path().join("temps.csv");
    fs::write(&path, csv).unwrap();

    let mut cfg = RunConfig::builtin(Builtin::TriplePeak);
    cfg.source = Source::Signal {
        path,
        column: Column::Name("temperature".into()),
    };
    let res = execute(&cfg, Stages::ALL).unwrap();
    assert!(res.symmetrized);
    assert!(res.spectral.max_imaginary() == 0.0);
    assert!(res.gap.ratio > 0.8, "ratio {}", res.gap.ratio);
    assert!(res.warnings.iter().any(|w| w.contains("gap")), "{:?}", res.warnings);
}

#[test]
fn laplacian_clusters_match_operator_clusters() {
    let mut cfg = RunConfig::builtin(Builtin::TriplePeak);
    cfg.m = 10000;
    let res = execute(&cfg, Stages { cluster: true, reconstruct: false }).unwrap();
    let lap = laplacian_spectrum(&res.spectral).unwrap();
    // Smallest Laplacian eigenvalues pair with the largest operator eigenvalues,
    // and they share eigenvectors, so the embedding and clusters coincide.
    for (l, v) in lap.iter().zip(&res.spectral.values) {
        assert!((l.re - (1.0 - v.re)).abs() < 1e-15);
    }
    assert!(lap.windows(2).take(3).all(|w| w[0].re <= w[1].re));
    let e = embed(&res.spectral, &res.trajectory, 3).unwrap();
    let cm = kmeans(&e, 3, cfg.seed, cfg.restarts).unwrap();
    assert_eq!(cm.assignments, res.clusters.unwrap().assignments);
}

#[test]
fn empirical_covariance_converges_to_quadrature() {
    let g = Graphon64::triple_peak();
    let d = make_gaussian(20, 0.05, false).unwrap();
    let exact = quadrature_covariances(&g, &d, QuadratureWeight::Invariant, 2000).unwrap().cxx;
    let td = transition_density(&g, &degree_profile(&g, 2000).unwrap()).unwrap();
    // Median relative error over seeds: single runs of this metastable walk
    // scatter by a factor of five.
    let errors: Vec<f64> = [2000, 20000, 200000]
        .iter()
        .map(|&m| {
            let mut e: Vec<f64> = (1..=10)
                .map(|seed| {
                    let t = walk(&td, m, seed, &WalkOptions::default()).unwrap();
                    (empirical_covariances(&d, &pairs(&t)).unwrap().cxx - &exact).norm() / exact.norm()
                })
                .collect();
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (e[4] + e[5]) / 2.0
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] < 0.01, "{errors:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signal_scaling_round_trips(raw in prop::collection::vec(-1e4f64..1e4, 10..60)) {
        prop_assume!(raw.iter().any(|v| *v != raw[0]));
        let s = SignalSeries::new("x", raw.clone()).unwrap();
        for (v, u) in raw.iter().zip(s.scaled()) {
            prop_assert!((0.0..=1.0).contains(&u));
            prop_assert!((s.unscale(u) - v).abs() <= 1e-12 * (s.max - s.min).max(1.0));
        }
    }

    #[test]
    fn config_pairs_round_trip(n in 2usize..200, m in 10usize..100000, seed: u64, r in 1usize..=2, sym: bool) {
        let mut cfg = RunConfig::builtin(Builtin::TwoBlock(0.7, 0.1));
        cfg.n = n;
        cfg.m = m;
        cfg.seed = seed;
        cfg.r = graphon_transfer::pipeline::RankChoice::Fixed(r);
        cfg.symmetrize = Some(sym);
        prop_assert_eq!(RunConfig::from_pairs(&cfg.to_pairs()).unwrap(), cfg);
    }
}
