//! Property-based suites for the distributional invariants: Potter-style
//! bounds and the slowly-varying limit for the tail factors, tail
//! monotonicity, convolution doubling, node exchangeability, estimator
//! equivariances, and characteristic-function basics. Statistical cases
//! derive their seeds from proptest inputs but keep tolerances at ≥ 5
//! standard errors so a run is effectively never flaky.

use proptest::prelude::*;
use stable_width_core::heavy::{SlowlyVarying, TailSpec};
use stable_width_core::mlp::{replicate_layer, Activation, LayerConfig, NetworkConfig};
use stable_width_core::rng::SeedTree;
use stable_width_core::stable::{
    cf_multivariate_sas, sample_sas, SpectralAtom, SpectralMeasure, StableParams,
};
use stable_width_core::stats::{cf_distance, ecf, hill_estimator, scale_estimator};

fn log_power(alpha: f64, beta: f64, gamma: f64) -> TailSpec<f64> {
    TailSpec::heavy(alpha, SlowlyVarying::LogPower { beta, gamma }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Potter bounds: for t beyond e⁴⁰ and λ ≤ 100, the slowly varying
    /// ratio is pinched between λ^{−0.1}/1.05 and 1.05·λ^{0.1}.
    #[test]
    fn potter_bounds_log_power(
        alpha in 0.3f64..1.9,
        beta in 0.1f64..2.0,
        gamma in 0.1f64..2.0,
        lam in 1.0f64..100.0,
        j in 0usize..8,
    ) {
        let spec = log_power(alpha, beta, gamma);
        let t = (40.0 + 20.0 * j as f64).exp();
        let ratio = spec.l_zero(lam * t).unwrap() / spec.l_zero(t).unwrap();
        prop_assert!(ratio <= 1.05 * lam.powf(0.1), "ratio {ratio} at λ={lam}, t=e^{}", 40 + 20 * j);
        prop_assert!(ratio >= lam.powf(-0.1) / 1.05, "ratio {ratio} at λ={lam}, t=e^{}", 40 + 20 * j);
    }

    /// The defining slowly-varying limit L(λt)/L(t) → 1, with the error
    /// shrinking as t grows.
    #[test]
    fn slowly_varying_ratio_tends_to_one(
        alpha in 0.3f64..1.9,
        beta in 0.1f64..2.0,
        gamma in 0.1f64..2.0,
        lam in 1.5f64..20.0,
    ) {
        let spec = log_power(alpha, beta, gamma);
        let err = |t: f64| (spec.l_zero(lam * t).unwrap() / spec.l_zero(t).unwrap() - 1.0).abs();
        let near = err(30f64.exp());
        let far = err(120f64.exp());
        prop_assert!(far < 0.06, "ratio error {far} at t=e^120");
        prop_assert!(far <= near + 1e-12, "error grew: {near} → {far}");
    }

    /// A table factor is constant beyond its last knot, so the ratio is 1
    /// exactly out there.
    #[test]
    fn table_factor_is_eventually_exactly_constant(
        alpha in 0.5f64..1.9,
        l_mid in 0.2f64..0.9,
        lam in 2.0f64..50.0,
    ) {
        let spec = TailSpec::heavy(
            alpha,
            SlowlyVarying::Table { points: vec![(1.0, 1.0), (50.0, l_mid), (1000.0, l_mid * 0.5)] },
        ).unwrap();
        let t = 5e4;
        prop_assert_eq!(spec.l_zero(lam * t).unwrap(), spec.l_zero(t).unwrap());
    }

    /// tail_prob is a survival function: within [0, 1] and nonincreasing.
    #[test]
    fn tail_prob_nonincreasing(
        alpha in 0.3f64..1.95,
        beta in 0.1f64..2.0,
        gamma in 0.1f64..2.0,
        t1 in 0.0f64..1e6,
        lam in 1.0f64..1e3,
    ) {
        let spec = log_power(alpha, beta, gamma);
        let (p1, p2) = (spec.tail_prob(t1), spec.tail_prob(t1 * lam + 1e-9));
        prop_assert!((0.0..=1.0).contains(&p1));
        prop_assert!(p2 <= p1 + 1e-12, "tail rose: {p1} → {p2}");
    }

    /// Hill's estimator is exactly scale-free up to float rounding.
    #[test]
    fn hill_scale_free(
        alpha in 0.8f64..1.9,
        c in prop::num::f64::NORMAL.prop_map(|x| 10f64.powf((x % 3.0).clamp(-3.0, 3.0))),
        seed in any::<u64>(),
    ) {
        let p = StableParams::new(alpha, 1.0).unwrap();
        let mut s = vec![0.0f64; 5000];
        sample_sas(&p, &mut SeedTree::new(seed).stream(0), &mut s);
        let scaled: Vec<f64> = s.iter().map(|&x| c * x).collect();
        let a = hill_estimator(&s, 400).unwrap().alpha_hat;
        let b = hill_estimator(&scaled, 400).unwrap().alpha_hat;
        prop_assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} vs {b} under scale {c}");
    }

    /// The characteristic-function scale estimator is scale-equivariant.
    #[test]
    fn scale_estimator_equivariant(
        alpha in 0.6f64..2.0,
        c in 0.1f64..10.0,
        seed in any::<u64>(),
    ) {
        let p = StableParams::new(alpha, 1.0).unwrap();
        let mut s = vec![0.0f64; 2000];
        sample_sas(&p, &mut SeedTree::new(seed).stream(3), &mut s);
        let scaled: Vec<f64> = s.iter().map(|&x| c * x).collect();
        let a = scale_estimator(&s, alpha).unwrap().sigma_hat;
        let b = scale_estimator(&scaled, alpha).unwrap().sigma_hat;
        prop_assert!((b - c * a).abs() <= 1e-9 * (c * a).abs(), "{b} vs {}", c * a);
    }

    /// Univariate CF: value in (0, 1], 1 at zero, even in t.
    #[test]
    fn cf_sas_range_and_symmetry(
        alpha in 0.3f64..=2.0,
        sigma in 0.05f64..10.0,
        t in -50.0f64..50.0,
    ) {
        let p = StableParams::new(alpha, sigma).unwrap();
        let v = p.cf(t);
        prop_assert!((0.0..=1.0).contains(&v), "cf out of range: {v}");
        // Strictly positive whenever exp(−|σt|^α) is representable.
        if (sigma * t.abs()).powf(alpha) < 700.0 {
            prop_assert!(v > 0.0, "cf underflowed early: {v}");
        }
        prop_assert!((p.cf(-t) - v).abs() < 1e-15);
        prop_assert_eq!(p.cf(0.0), 1.0);
    }

    /// Multivariate CF over a random two-atom spectral measure: range and
    /// evenness under t ↦ −t.
    #[test]
    fn cf_multivariate_range_and_symmetry(
        alpha in 0.3f64..=2.0,
        raw in prop::array::uniform4(-1.0f64..1.0),
        w1 in 0.05f64..3.0,
        w2 in 0.05f64..3.0,
        t in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let norm = |v: [f64; 2]| {
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            prop_assume!(n > 1e-3);
            Ok([v[0] / n, v[1] / n])
        };
        let s1 = norm([raw[0], raw[1]])?;
        let s2 = norm([raw[2], raw[3]])?;
        let m = SpectralMeasure::new(2, alpha, vec![
            SpectralAtom { s: s1.to_vec(), w: w1 },
            SpectralAtom { s: s2.to_vec(), w: w2 },
        ]).unwrap();
        let v = cf_multivariate_sas(&m, &t).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0, "cf out of range: {v}");
        let neg = [-t[0], -t[1]];
        prop_assert!((cf_multivariate_sas(&m, &neg).unwrap() - v).abs() < 1e-15);
        prop_assert_eq!(cf_multivariate_sas(&m, &[0.0, 0.0]).unwrap(), 1.0);
    }

    /// The empirical CF of an exactly symmetrized sample has zero imaginary
    /// part and an even real part.
    #[test]
    fn ecf_symmetrized_sample_is_real_and_even(
        vals in prop::collection::vec(-1e3f64..1e3, 3..200),
        t in prop::collection::vec(-10.0f64..10.0, 1..12),
    ) {
        let mut sym: Vec<f64> = vals.clone();
        sym.extend(vals.iter().map(|&v| -v));
        let grid: Vec<f64> = t.clone();
        let e = ecf(&sym, &grid).unwrap();
        for (i, &ti) in grid.iter().enumerate() {
            prop_assert!(e.imag[i].abs() < 1e-12, "imag {} at t={ti}", e.imag[i]);
            let back = ecf(&sym, &[-ti]).unwrap();
            prop_assert!((back.real[0] - e.real[i]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Sums of two i.i.d. regularly varying symmetric variables double the
    /// tail: P(|X + X′| > t) → 2 P(|X| > t).
    #[test]
    fn convolution_tail_doubles(
        alpha in 0.6f64..1.6,
        seed in any::<u64>(),
    ) {
        let spec = TailSpec::heavy(alpha, SlowlyVarying::Constant { c: 1.0 }).unwrap();
        let t = (0.0005f64).powf(-1.0 / alpha); // G(t) = 5·10⁻⁴
        let n = 400_000usize;
        let mut stream = SeedTree::new(seed).stream(1);
        let mut buf = vec![0.0f64; 2 * n];
        spec.sample(&mut stream, &mut buf);
        let count = buf.chunks_exact(2).filter(|p| (p[0] + p[1]).abs() > t).count();
        let ratio = count as f64 / (n as f64 * 0.0005);
        prop_assert!((1.6..=2.6).contains(&ratio), "tail ratio {ratio} at α={alpha}");
    }

    /// Nodes at one hidden layer are exchangeable: two nodes' empirical CFs
    /// agree to Monte Carlo accuracy.
    #[test]
    fn hidden_nodes_exchangeable(
        width in 50usize..400,
        seed in any::<u64>(),
    ) {
        let layer = || LayerConfig::new(
            TailSpec::heavy(1.5, SlowlyVarying::Constant { c: 1.0 }).unwrap(),
            1.0,
        ).unwrap();
        let net = NetworkConfig::new(2, 1, vec![layer(), layer()], Activation::Tanh).unwrap();
        let m = 8000;
        let batch = replicate_layer(
            &net,
            &[vec![1.0, 0.5]],
            &[width],
            2,
            m,
            &[0, 5],
            &SeedTree::new(seed),
        ).unwrap();
        let grid = [0.3f64, 0.9, 1.5];
        let e0 = ecf(&batch.column(0, 0), &grid).unwrap();
        let e1 = ecf(&batch.column(1, 0), &grid).unwrap();
        for i in 0..grid.len() {
            let d = ((e0.real[i] - e1.real[i]).powi(2) + (e0.imag[i] - e1.imag[i]).powi(2)).sqrt();
            prop_assert!(d < 0.06, "node CFs differ by {d} at t={} (width {width})", grid[i]);
        }
    }

    /// The CF distance to the true law shrinks like 1/√m: absolute bounds
    /// at two sample sizes plus weak monotonicity.
    #[test]
    fn cf_distance_shrinks_with_sample_size(
        alpha in 0.8f64..1.8,
        seed in any::<u64>(),
    ) {
        let p = StableParams::new(alpha, 1.0).unwrap();
        let grid: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
        let mut small = vec![0.0f64; 4000];
        let mut large = vec![0.0f64; 64_000];
        sample_sas(&p, &mut SeedTree::new(seed).stream(0), &mut small);
        sample_sas(&p, &mut SeedTree::new(seed).stream(1), &mut large);
        let d_small = cf_distance(&small, |t| p.cf(t), &grid).unwrap();
        let d_large = cf_distance(&large, |t| p.cf(t), &grid).unwrap();
        prop_assert!(d_small.sup < 0.1, "sup {} at m=4000", d_small.sup);
        prop_assert!(d_large.sup < 0.025, "sup {} at m=64000", d_large.sup);
        prop_assert!(d_large.sup <= d_small.sup + 0.005, "{} vs {}", d_large.sup, d_small.sup);
    }
}
