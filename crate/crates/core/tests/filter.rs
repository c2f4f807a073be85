use paris_em::prelude::*;
use paris_em::tables::ResamplingTable;
use rand::SeedableRng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn th(v: [f64; 3]) -> ParamVec64 {
    ParamVec::from_f64(&v)
}

fn chi2_p_value(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = n as f64 * p;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn resampling_counts_pass_goodness_of_fit() {
    let weights = [0.5, 3.0, 1.0, 0.0, 2.5, 1e-3, 7.0];
    let table = ResamplingTable::new(&weights).unwrap();
    let total: f64 = weights.iter().sum();
    let mut rng = SimRng::seed_from_u64(4);
    let mut counts = vec![0u64; weights.len()];
    for _ in 0..100_000 {
        counts[table.sample(&mut rng)] += 1;
    }
    assert_eq!(counts[3], 0);
    let (c, p): (Vec<u64>, Vec<f64>) =
        counts.iter().zip(&weights).filter(|(_, &w)| w > 0.0).map(|(&c, &w)| (c, w / total)).unzip();
    let pv = chi2_p_value(&c, &p);
    assert!(pv > 1e-3, "p-value {pv}");
}

#[test]
fn initial_cloud_targets_conjugate_posterior() {
    // a = 0.6, σ_V² = 0.64 ⇒ stationary prior variance P = 1
    let theta = th([0.6, 0.64, 1.0]);
    let bound = LinearGaussian::default().bind(&theta).unwrap();
    let y0 = 1.3;
    let set = init_filter(&bound, y0, 100_000, &mut SimRng::seed_from_u64(9)).unwrap();
    let mean = self_normalized_estimate(&set, 1, |x, out| out[0] = x).unwrap()[0];
    let (p, r) = (1.0, 1.0);
    let exact = y0 * p / (p + r);
    // importance-sampling error: posterior sd 0.71, ESS ≈ N/1.2
    let tol = 3.0 * (p * r / (p + r)).sqrt() / (100_000f64 / 1.5).sqrt();
    assert!((mean - exact).abs() < tol, "{mean} vs {exact}");
    let one = self_normalized_estimate(&set, 1, |_, out| out[0] = 1.0).unwrap()[0];
    assert_eq!(one, 1.0);
}

#[test]
fn filter_mean_tracks_kalman() {
    let theta = th([0.8, 0.16, 0.81]);
    let data = lg_simulate(&theta, 100, None, &mut SimRng::seed_from_u64(100)).unwrap().observations;
    let kf = kalman_filter(&theta, &data).unwrap();
    let bound = LinearGaussian::default().bind(&theta).unwrap();
    let reps = 20;
    let mut est = vec![vec![0.0; data.len()]; reps];
    for (r, row) in est.iter_mut().enumerate() {
        let mut rng = SimRng::seed_from_u64(1000 + r as u64);
        let mut set = init_filter(&bound, data[0], 5000, &mut rng).unwrap();
        row[0] = self_normalized_estimate(&set, 1, |x, o| o[0] = x).unwrap()[0];
        for t in 1..data.len() {
            set = pf_step(&bound, &set, data[t], &mut rng).unwrap().0;
            row[t] = self_normalized_estimate(&set, 1, |x, o| o[0] = x).unwrap()[0];
            let sum: f64 = set.weights().iter().sum();
            assert!((sum - set.weight_sum()).abs() <= 1e-12 * sum);
        }
    }
    let mut sup_diff: f64 = 0.0;
    let mut sup_se: f64 = 0.0;
    for t in 0..data.len() {
        let m = est.iter().map(|r| r[t]).sum::<f64>() / reps as f64;
        let sd = (est.iter().map(|r| (r[t] - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        sup_diff = sup_diff.max((m - kf.filtered_mean[t]).abs());
        sup_se = sup_se.max(sd / (reps as f64).sqrt());
    }
    assert!(sup_diff <= 3.0 * sup_se, "sup |diff| {sup_diff} vs 3·SE {}", 3.0 * sup_se);
}

#[test]
fn single_particle_deterministic_recurrence_is_bitwise_stable() {
    let theta = th([1.0, 0.0, 1.0]);
    let bound = LinearGaussian::default().bind(&theta).unwrap();
    let run = || {
        let mut rng = SimRng::seed_from_u64(77);
        let mut set = WeightedParticleSet::new(vec![0.25], vec![1.0], 0).unwrap();
        let mut out = Vec::new();
        for t in 0..50 {
            let (next, anc) = pf_step(&bound, &set, (t as f64).sin(), &mut rng).unwrap();
            assert_eq!(anc, vec![0]);
            out.push((next.particles()[0].to_bits(), next.weights()[0].to_bits()));
            set = next;
        }
        out
    };
    let a = run();
    assert!(a.iter().all(|&(x, _)| f64::from_bits(x) == 0.25));
    assert_eq!(a, run());
}

#[test]
fn sv_filter_survives_extreme_observations() {
    // Emission weights underflow in linear scale for y this large; the
    // max-shifted representation keeps the set usable.
    let theta = th([0.975, 0.0256, 0.3969]);
    let bound = StochasticVolatility::default().bind(&theta).unwrap();
    let mut rng = SimRng::seed_from_u64(3);
    let mut set = init_filter(&bound, 0.1, 200, &mut rng).unwrap();
    for y in [40.0, -60.0, 0.0, 1e-8, 25.0] {
        set = pf_step(&bound, &set, y, &mut rng).unwrap().0;
        assert!(!set.is_degenerate());
        let ess = effective_sample_size(&set);
        assert!((1.0..=200.0 + 1e-9).contains(&ess));
        assert!(set.weights().iter().all(|w| w.is_finite() && *w >= 0.0));
    }
}

#[test]
fn effective_sample_size_examples() {
    let s = WeightedParticleSet::<f64>::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 2.0], 0).unwrap();
    assert!((effective_sample_size(&s) - 16.0 / 6.0).abs() < 1e-15);
    let s = WeightedParticleSet::<f64>::new(vec![0.0; 4], vec![0.0, 5.0, 0.0, 0.0], 0).unwrap();
    assert_eq!(effective_sample_size(&s), 1.0);
    assert_eq!(self_normalized_estimate(&s, 1, |x, o| o[0] = x + 7.0).unwrap()[0], 7.0);
}
