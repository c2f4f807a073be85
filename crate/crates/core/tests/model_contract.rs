use paris_em::prelude::*;
use paris_em::ssm::{emission_density, m_step, sample_initial, sample_transition, stat_increment, transition_bound,
    transition_density};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934;

fn th(v: [f64; 3]) -> ParamVec64 {
    ParamVec::from_f64(&v)
}

// Reference Gaussian density written out independently of the library.
fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn transition_density_examples() {
    let lg = LinearGaussian::default();
    let sv = StochasticVolatility::default();
    let q = transition_density(&lg, &th([1.0, 1.0, 1.0]), 0.0, 0.0).unwrap();
    assert!(close(q, INV_SQRT_2PI, 1e-14));
    let q = transition_density(&lg, &th([0.8, 0.16, 1.0]), 1.0, 0.8).unwrap();
    assert!(close(q, 0.997_355_701_003_581_694_849_865_149_836, 1e-14));
    // N(0.1; 0, 0.0256), 30-digit evaluation
    let q = transition_density(&sv, &th([0.975, 0.0256, 1.0]), 0.0, 0.1).unwrap();
    assert!(close(q, 2.051_006_053_439_843_962_891_954_900_52, 1e-14));
}

#[test]
fn transition_bound_examples() {
    let lg = LinearGaussian::default();
    assert!(close(transition_bound(&lg, &th([0.5, 0.25, 1.0])).unwrap(), 0.797_884_560_802_865_355_879_892_119_869, 1e-14));
    assert!(close(transition_bound(&lg, &th([0.5, 1.0, 1.0])).unwrap(), INV_SQRT_2PI, 1e-14));
}

#[test]
fn emission_density_examples() {
    let lg = LinearGaussian::default();
    let sv = StochasticVolatility::default();
    assert!(close(emission_density(&lg, &th([0.5, 1.0, 1.0]), 0.0, 0.0).unwrap(), INV_SQRT_2PI, 1e-14));
    assert!(close(emission_density(&sv, &th([0.5, 1.0, 1.0]), 0.0, 0.0).unwrap(), INV_SQRT_2PI, 1e-14));
    // N(1; 0, 0.3969 e^0.5), 30-digit evaluation
    let g = emission_density(&sv, &th([0.5, 1.0, 0.3969]), 0.5, 1.0).unwrap();
    assert!(close(g, 0.229_698_417_927_841_200_291_708_632_323, 1e-13));
}

#[test]
fn non_positive_variances_are_domain_errors() {
    let lg = LinearGaussian::default();
    let sv = StochasticVolatility::default();
    for bad in [[0.5, 0.0, 1.0], [0.5, -1.0, 1.0], [0.5, 1.0, 0.0], [f64::NAN, 1.0, 1.0]] {
        assert!(matches!(transition_density(&lg, &th(bad), 0.0, 0.0), Err(Error::ParameterDomain { .. })));
        assert!(matches!(transition_bound(&sv, &th(bad)), Err(Error::ParameterDomain { .. })));
        assert!(matches!(emission_density(&sv, &th(bad), 0.0, 0.0), Err(Error::ParameterDomain { .. })));
    }
    assert!(matches!(
        transition_density(&lg, &ParamVec::from_f64(&[0.5, 1.0]), 0.0, 0.0),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn densities_match_reference_formula() {
    let lg = LinearGaussian::default();
    let sv = StochasticVolatility::default();
    let mut rng = SimRng::seed_from_u64(11);
    for _ in 0..1000 {
        let theta = th([rng.random_range(-1.5..1.5), rng.random_range(0.01..3.0), rng.random_range(0.01..3.0)]);
        let (x, x2, y): (f64, f64, f64) =
            (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let q = transition_density(&lg, &theta, x, x2).unwrap();
        assert!(close(q, normal_pdf(x2, theta[0] * x, theta[1]), 1e-12));
        let g = emission_density(&lg, &theta, x, y).unwrap();
        assert!(close(g, normal_pdf(y, x, theta[2]), 1e-12));
        let g = emission_density(&sv, &theta, x, y).unwrap();
        assert!(close(g, normal_pdf(y, 0.0, theta[2] * x.exp()), 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_never_exceeds_bound(a in -1.5f64..1.5, var in 1e-4f64..10.0, seed in any::<u64>()) {
        let theta = th([a, var, 1.0]);
        let mut rng = SimRng::seed_from_u64(seed);
        let lg = LinearGaussian::default();
        let sv = StochasticVolatility::default();
        let (b_lg, b_sv) = (transition_bound(&lg, &theta).unwrap(), transition_bound(&sv, &theta).unwrap());
        let scale = 5.0 * var.sqrt();
        // 10^4 probes per θ, half of them concentrated at the conditional mean
        for i in 0..10_000 {
            let x: f64 = rng.random_range(-10.0..10.0);
            let x2 = if i % 2 == 0 { a * x + rng.random_range(-scale..scale) * 1e-3 } else { rng.random_range(-20.0..20.0) };
            let q = transition_density(&lg, &theta, x, x2).unwrap();
            prop_assert!(q >= 0.0 && q <= b_lg);
            let q = transition_density(&sv, &theta, x, x2).unwrap();
            prop_assert!(q >= 0.0 && q <= b_sv);
        }
    }

    #[test]
    fn sv_emission_respects_envelope(phi in -0.99f64..0.99, b2 in 1e-3f64..10.0, x in -30.0f64..30.0, y in -50.0f64..50.0) {
        prop_assume!(y != 0.0);
        let sv = StochasticVolatility::default();
        let g = emission_density(&sv, &th([phi, 0.1, b2]), x, y).unwrap();
        let envelope = (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt().recip() / y.abs();
        prop_assert!(g >= 0.0 && g <= envelope * (1.0 + 1e-12));
    }

    #[test]
    fn increments_are_additive(xs in prop::collection::vec(-5.0f64..5.0, 2..60), seed in any::<u64>()) {
        let mut rng = SimRng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(-3.0..3.0)).collect();
        let lg = LinearGaussian::default();
        let sv = StochasticVolatility::default();
        let mut acc_lg = [0.0; 4];
        let mut acc_sv = [0.0; 4];
        for t in 0..xs.len() - 1 {
            let a = stat_increment(&lg, xs[t], xs[t + 1], ys[t + 1]);
            let b = stat_increment(&sv, xs[t], xs[t + 1], ys[t + 1]);
            for k in 0..4 {
                acc_lg[k] += a[k];
                acc_sv[k] += b[k];
            }
        }
        // one-pass batch statistic
        let w = xs.windows(2).zip(&ys[1..]);
        let batch_lg = [
            w.clone().map(|(p, _)| p[0] * p[0]).sum::<f64>(),
            w.clone().map(|(p, _)| p[0] * p[1]).sum::<f64>(),
            w.clone().map(|(p, _)| p[1] * p[1]).sum::<f64>(),
            w.clone().map(|(p, y)| (y - p[1]).powi(2)).sum::<f64>(),
        ];
        let batch_sv4: f64 = w.map(|(p, y)| y * y * (-p[1]).exp()).sum();
        for k in 0..4 {
            prop_assert!((acc_lg[k] - batch_lg[k]).abs() <= 1e-12 * batch_lg[k].abs().max(1.0));
        }
        prop_assert!((acc_sv[3] - batch_sv4).abs() <= 1e-12 * batch_sv4.max(1.0));
        prop_assert_eq!(&acc_sv[..3], &acc_lg[..3]);
    }
}

#[test]
fn increment_examples() {
    let lg = LinearGaussian::default();
    let sv = StochasticVolatility::default();
    assert_eq!(stat_increment::<f64, _>(&lg, 1.0, 2.0, 3.0).0, vec![1.0, 2.0, 4.0, 1.0]);
    assert_eq!(stat_increment::<f64, _>(&sv, 1.0, 0.0, 2.0).0, vec![1.0, 0.0, 0.0, 4.0]);
    assert_eq!(stat_increment::<f64, _>(&lg, 0.0, 0.0, 0.0).0, vec![0.0; 4]);
    assert_eq!(stat_increment::<f64, _>(&sv, 0.0, 0.0, 0.0).0, vec![0.0; 4]);
}

fn approx_vec(got: &ParamVec64, want: [f64; 3], tol: f64) {
    for k in 0..3 {
        assert!((got[k] - want[k]).abs() <= tol, "component {k}: {} vs {}", got[k], want[k]);
    }
}

#[test]
fn m_step_examples() {
    let mle = LinearGaussian::default();
    let paper = LinearGaussian::new(LambdaVariant::Paper);
    let z = StatVec64::from_f64(&[1.0, 0.8, 1.0, 0.81]);
    approx_vec(&m_step(&mle, &z).unwrap(), [0.8, 0.36, 0.81], 1e-15);
    approx_vec(&m_step(&paper, &z).unwrap(), [0.8, 0.36, 0.81], 1e-15);
    // z1 ≠ z3: the two first components differ; σ² = 1 − 0.64/2 = 0.68 for both
    let z = StatVec64::from_f64(&[2.0, 0.8, 1.0, 0.81]);
    approx_vec(&m_step(&mle, &z).unwrap(), [0.4, 0.68, 0.81], 1e-15);
    approx_vec(&m_step(&paper, &z).unwrap(), [0.8, 0.68, 0.81], 1e-15);
    let z = StatVec64::from_f64(&[1.0, 0.0, 1.0, 1.0]);
    approx_vec(&m_step(&mle, &z).unwrap(), [0.0, 1.0, 1.0], 0.0);
    let sv = StochasticVolatility::new(LambdaVariant::Paper);
    approx_vec(&m_step(&sv, &StatVec64::from_f64(&[2.0, 0.8, 1.0, 0.81])).unwrap(), [0.8, 0.68, 0.81], 1e-15);
}

#[test]
fn m_step_rejects_degenerate_statistics_and_clamps() {
    let lg = LinearGaussian::default();
    for z in [[0.0, 0.0, 1.0, 1.0], [1.0, 0.0, -1.0, 1.0], [1.0, 0.0, 1.0, 0.0], [1.0, f64::NAN, 1.0, 1.0]] {
        assert!(matches!(m_step(&lg, &StatVec64::from_f64(&z)), Err(Error::DegenerateStatistic(_))));
    }
    // perfectly correlated moments: σ² would be 0, clamped to the floor
    let p = m_step(&lg, &StatVec64::from_f64(&[1.0, 1.0, 1.0, 1.0])).unwrap();
    assert_eq!(p[1], paris_em::models::MIN_VARIANCE);
}

#[test]
fn m_step_recovers_parameters_from_stationary_moments() {
    for (a, s2, su2) in [(0.8, 0.16, 0.81), (-0.5, 2.0, 0.1), (0.975, 0.0256, 0.3969), (0.0, 1.0, 1.0)] {
        let v = s2 / (1.0 - a * a);
        let z = StatVec64::from_f64(&[v, a * v, v, su2]);
        let got = m_step(&LinearGaussian::default(), &z).unwrap();
        approx_vec(&got, [a, s2, su2], 1e-10);
        let got = m_step(&StochasticVolatility::default(), &z).unwrap();
        approx_vec(&got, [a, s2, su2], 1e-10);
    }
}

#[test]
fn degenerate_transition_returns_mean() {
    let lg = LinearGaussian::default();
    let mut rng = SimRng::seed_from_u64(0);
    assert_eq!(sample_transition(&lg, &th([0.8, 0.0, 1.0]), 1.0, &mut rng).unwrap(), 0.8);
}

#[test]
fn transition_sampler_mean() {
    let lg = LinearGaussian::default();
    let bound = lg.bind(&th([0.0, 1.0, 1.0])).unwrap();
    let mut rng = SimRng::seed_from_u64(1);
    let n = 100_000;
    let mean = (0..n).map(|_| bound.sample_transition(3.0, &mut rng)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
}

#[test]
fn initial_sampler_variance() {
    let lg = LinearGaussian::default();
    for theta in [th([0.0, 1.0, 1.0]), th([0.8, 0.36, 1.0])] {
        let bound = lg.bind(&theta).unwrap();
        let mut rng = SimRng::seed_from_u64(2);
        let xs: Vec<f64> = (0..100_000).map(|_| bound.sample_initial(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((0.97..=1.03).contains(&v), "variance {v}");
    }
}

#[test]
fn samplers_are_deterministic() {
    let sv = StochasticVolatility::default();
    let theta = th([0.9, 0.2, 0.5]);
    let draw = |seed| {
        let mut rng = SimRng::seed_from_u64(seed);
        (sample_initial(&sv, &theta, &mut rng).unwrap(), sample_transition(&sv, &theta, 0.3, &mut rng).unwrap())
    };
    assert_eq!(draw(5), draw(5));
    assert_ne!(draw(5), draw(6));
}

#[test]
fn lg_simulator_reproduces_stationary_moments() {
    let (a, s2) = (0.8, 0.36);
    let path = lg_simulate(&th([a, s2, 0.5]), 100_000, None, &mut SimRng::seed_from_u64(21)).unwrap();
    let x = &path.states;
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let cov1 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / n;
    let rho = cov1 / var;
    assert!((rho - a).abs() < 0.01, "lag-1 autocorrelation {rho}");
    // stationary variance 1; sd of the AR(1) sample variance ≈ sqrt(2(1+a²)/((1−a²)n))
    let sd = (2.0 * (1.0 + a * a) / ((1.0 - a * a) * n)).sqrt();
    assert!((var - 1.0).abs() < 3.0 * sd, "variance {var}");
    let r: Vec<f64> = path.observations.iter().zip(x).map(|(y, x)| y - x).collect();
    let rv = r.iter().map(|v| v * v).sum::<f64>() / n;
    assert!((rv - 0.5).abs() < 3.0 * 0.5 * (2.0 / n).sqrt(), "observation noise variance {rv}");
}

#[test]
fn sv_simulator_matches_lognormal_moment() {
    let (phi, s2, b2) = (0.9, 0.1, 0.5);
    let n = 1_000_000;
    let path = sv_simulate(&th([phi, s2, b2]), n - 1, None, &mut SimRng::seed_from_u64(34)).unwrap();
    let mean = path.observations.iter().map(|y| y * y).sum::<f64>() / n as f64;
    let v = s2 / (1.0 - phi * phi);
    let expected = b2 * (v / 2.0).exp();
    // Var(Y²) = 3β⁴e^{2v} − β⁴e^{v}; Cov(Y_0², Y_k²) = β⁴ e^{v} (e^{v φ^k} − 1)
    let var_y2 = b2 * b2 * (3.0 * (2.0 * v).exp() - v.exp());
    let mut acov = 0.0;
    let mut pk = phi;
    while pk > 1e-16 {
        acov += b2 * b2 * v.exp() * ((v * pk).exp() - 1.0);
        pk *= phi;
    }
    let se = ((var_y2 + 2.0 * acov) / n as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "E[Y²] {mean} vs {expected} (se {se})");
}
