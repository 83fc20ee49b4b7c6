use proptest::prelude::*;

use vacle::calibration::{estimate_sigma2, summarize_noise, CalibrationKey, CalibrationResult};
use vacle::estimators::{
    lwy_estimator, py_with_threshold, tvacle, vacle, wy_estimator, EstimatorConfig,
    Sigma2Mode, Transform,
};
use vacle::spectra::{Family, Provenance, Spectrum};

/// Positive, strictly descending spectra built from positive gaps.
fn spectrum_strategy() -> impl Strategy<Value = (Vec<f64>, usize)> {
    (prop::collection::vec(1e-4f64..3.0, 24..60), 30usize..400).prop_map(|(gaps, n)| {
        let mut v = Vec::with_capacity(gaps.len());
        let mut acc = 0.05;
        for g in gaps.iter().rev() {
            acc += g;
            v.push(acc);
        }
        v.reverse();
        (v, n)
    })
}

fn spectrum(values: Vec<f64>, family: Family, n: usize) -> Spectrum {
    let t = (family == Family::Fisher).then_some(2 * n);
    Spectrum::new(values, n, t, family, Provenance::Simulated).unwrap()
}

fn all_estimates(spec: &Spectrum, sigma2: f64) -> Vec<(usize, Option<Vec<u64>>)> {
    let mut cfg = EstimatorConfig::for_family(spec.family, 0.07);
    cfg.sigma2 = Sigma2Mode::Known(sigma2);
    cfg.edge = Some(2.5);
    let bits = |e: vacle::estimators::Estimate| {
        let trace = e.trace.map(|t| t.ratios.iter().chain(&t.deltas).map(|x| x.to_bits()).collect());
        (e.q_hat, trace)
    };
    vec![
        bits(vacle(spec, &cfg).unwrap()),
        bits(tvacle(spec, &cfg).unwrap()),
        bits(py_with_threshold(spec, sigma2, 0.2, 20, Default::default())),
        bits(lwy_estimator(spec, 0.1, 20).unwrap()),
        bits(wy_estimator(spec, sigma2, 2.5, 0.1, 20).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    // Power-of-two scales keep every normalized value bit-identical.
    #[test]
    fn joint_scaling_leaves_estimates_unchanged(
        (values, n) in spectrum_strategy(),
        k in -20i32..20,
        fam in 0usize..3,
    ) {
        let family = [Family::Population, Family::Fisher, Family::Autocov][fam];
        let s = 2f64.powi(k);
        let base = spectrum(values.clone(), family, n);
        let f = s.powi(family.scale_power());
        let scaled = spectrum(values.iter().map(|v| v * f).collect(), family, n);
        prop_assert_eq!(all_estimates(&base, 1.0), all_estimates(&scaled, s));
    }

    #[test]
    fn estimates_stay_within_search_bound((values, n) in spectrum_strategy(), l in 3usize..24) {
        let spec = spectrum(values, Family::Population, n);
        let l = l.min(spec.len());
        let cfg = EstimatorConfig { l, ..EstimatorConfig::for_family(Family::Population, 0.05) };
        let v = vacle(&spec, &cfg).unwrap();
        let t = tvacle(&spec, &cfg).unwrap();
        prop_assert!(v.q_hat <= l - 2 && t.q_hat <= l - 2);
        prop_assert_eq!(v.trace.unwrap().ratios.len(), l - 2);
        prop_assert!(py_with_threshold(&spec, 1.0, 0.1, l, Default::default()).q_hat <= l);
        prop_assert!(lwy_estimator(&spec, 0.1, l).unwrap().q_hat <= l);
        prop_assert!(wy_estimator(&spec, 1.0, 2.0, 0.1, l).unwrap().q_hat <= l);
    }

    #[test]
    fn transform_derivative_conditions(
        e in 0.5f64..20.0,
        kappa in 1e-3f64..0.5,
        k1 in 0.0f64..10.0,
        k2 in 0.0f64..10.0,
    ) {
        let f = Transform { e, kappa, k1, k2 };
        let lo = f.left() - 2.0 / k1.max(0.1) - 1.0;
        let hi = f.right() + 3.0;
        let mut prev_d = f64::NEG_INFINITY;
        let mut prev_v = f64::NEG_INFINITY;
        let mut grid: Vec<f64> = (0..=400).map(|i| lo + (hi - lo) * i as f64 / 400.0).collect();
        grid.extend([f.left(), f.right(), f.left() - 1.0 / k1.max(f64::MIN_POSITIVE)]);
        grid.retain(|x| x.is_finite());
        grid.sort_by(f64::total_cmp);
        for &x in &grid {
            let d = f.derivative(x);
            let v = f.apply(x);
            prop_assert!(d >= 0.0);
            prop_assert!(d >= prev_d - 1e-12);
            prop_assert!(v >= prev_v - 1e-12);
            if x > f.left() && x < f.right() {
                prop_assert_eq!(d, 1.0);
                prop_assert_eq!(v, x);
            }
            prev_d = d;
            prev_v = v;
        }
    }

    // Spikes above the identity window with the bulk inside it: the
    // transform can only deepen the valley.
    #[test]
    fn transform_deepens_the_valley(
        spikes in prop::collection::vec(0.01f64..4.0, 1..6),
        bulk in prop::collection::vec(0.0f64..1.0, 20..30),
        c_n in 1e-3f64..0.5,
    ) {
        let (e, kappa) = (3.0, 0.2);
        let mut values: Vec<f64> = spikes.iter().map(|s| e + kappa + s).collect();
        values.extend(bulk.iter().map(|b| e - kappa * 0.99 + 1.98 * kappa * b));
        values.sort_by(|a, b| b.total_cmp(a));
        let q = spikes.len();
        let spec = spectrum(values, Family::Population, 100);
        let cfg = EstimatorConfig { edge: Some(e), kappa: Some(kappa), ..EstimatorConfig::for_family(Family::Population, c_n) };
        let plain = vacle(&spec, &cfg).unwrap().trace.unwrap();
        let transformed = tvacle(&spec, &cfg).unwrap().trace.unwrap();
        prop_assert!(transformed.ratios[q - 1] <= plain.ratios[q - 1] * (1.0 + 1e-12));
    }

    #[test]
    fn quantiles_are_monotone_and_ridges_ordered(
        gaps in prop::collection::vec(0.0f64..2.0, 2..300),
        n in 16usize..5000,
    ) {
        let key = CalibrationKey { family: Family::Population, p: 50, n, t: None, reps: gaps.len(), seed: 0 };
        let stats = vec![0.01; gaps.len()];
        let r = summarize_noise(key, &gaps, &stats).unwrap();
        let q = r.quantiles;
        prop_assert!(q.q01 <= q.q05 && q.q05 <= q.q80 && q.q80 <= q.q95 && q.q95 <= q.q99);
        prop_assert!(r.raw.c1 >= r.raw.c2);
        prop_assert!(r.ridges.c1 > 0.0 && r.ridges.c2 > 0.0);
        let back: CalibrationResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn sigma2_estimate_is_equivariant((values, n) in spectrum_strategy(), k in -10i32..10) {
        let spec = spectrum(values.clone(), Family::Population, n);
        let s = 2f64.powi(k);
        let scaled = spectrum(values.iter().map(|v| v * s).collect(), Family::Population, n);
        let c = spec.p as f64 / n as f64;
        prop_assert_eq!(estimate_sigma2(&scaled, c).unwrap(), s * estimate_sigma2(&spec, c).unwrap());
    }
}
