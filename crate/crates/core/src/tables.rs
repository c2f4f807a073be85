//! Discrete samplers over particle indices.

use rand::Rng;

use crate::scalar::Real;

/// Cumulative normalized weights; sampling is inverse-CDF by binary search.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplingTable<F> {
    cdf: Vec<F>,
}

impl<F: Real> ResamplingTable<F> {
    /// Returns `None` when the weights do not have a positive finite sum.
    pub fn new(weights: &[F]) -> Option<Self> {
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = F::zero();
        for &w in weights {
            acc += w;
            cdf.push(acc);
        }
        if !(acc > F::zero()) || !acc.is_finite() {
            return None;
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        // Entries after the last positive weight must stay at exactly 1 so
        // that they can never be selected.
        let last_positive = weights.iter().rposition(|&w| w > F::zero()).unwrap();
        for c in cdf[last_positive..].iter_mut() {
            *c = F::one();
        }
        Some(ResamplingTable { cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn cdf(&self) -> &[F] {
        &self.cdf
    }

    /// Index `i` with probability `w_i / Σ w`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = F::of(rng.random::<f64>());
        self.cdf.partition_point(|&c| c <= u)
    }
}

/// Inverse-CDF draw from a prepared table.
pub fn multinomial_draw<F: Real, R: Rng + ?Sized>(table: &ResamplingTable<F>, rng: &mut R) -> usize {
    table.sample(rng)
}

/// Walker/Vose alias table: O(N) construction, O(1) draws.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new<F: Real>(weights: &[F]) -> Option<Self> {
        let n = weights.len();
        let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
        if n == 0 || !(total > 0.0) || !total.is_finite() {
            return None;
        }
        let scale = n as f64 / total;
        let mut prob: Vec<f64> = weights.iter().map(|w| w.as_f64() * scale).collect();
        let mut alias: Vec<usize> = (0..n).collect();
        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s] = l;
            prob[l] -= 1.0 - prob[s];
            if prob[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding. A zero-weight leftover must never be
        // chosen, which holds only if it still has an alias to a positive entry.
        for i in large.into_iter().chain(small) {
            prob[i] = if weights[i] > F::zero() { 1.0 } else { 0.0 };
            if prob[i] == 0.0 {
                alias[i] = weights.iter().position(|&w| w > F::zero()).unwrap();
            }
        }
        Some(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.prob.len() as f64;
        let i = (u as usize).min(self.prob.len() - 1);
        if u - (i as f64) < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frequencies(n: usize, draws: usize, mut f: impl FnMut() -> usize) -> Vec<f64> {
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[f()] += 1;
        }
        counts.into_iter().map(|c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn single_positive_weight_always_selected() {
        let table = ResamplingTable::new(&[1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000).all(|_| multinomial_draw(&table, &mut rng) == 0));
        let alias = AliasTable::new(&[0.0, 0.0, 2.5]).unwrap();
        assert!((0..10_000).all(|_| alias.sample(&mut rng) == 2));
    }

    #[test]
    fn two_equal_weights_are_balanced() {
        let table = ResamplingTable::new(&[1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let freq = frequencies(2, 100_000, || table.sample(&mut rng));
        assert!((0.495..=0.505).contains(&freq[0]), "{freq:?}");
    }

    #[test]
    fn weights_one_two_three_within_three_sigma() {
        let w = [1.0, 2.0, 3.0];
        let draws = 100_000;
        let table = ResamplingTable::new(&w).unwrap();
        let alias = AliasTable::new(&w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f1 = frequencies(3, draws, || table.sample(&mut rng));
        let f2 = frequencies(3, draws, || alias.sample(&mut rng));
        for (i, p) in [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0].into_iter().enumerate() {
            let sd = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((f1[i] - p).abs() < 3.0 * sd, "cdf {i}: {} vs {p}", f1[i]);
            assert!((f2[i] - p).abs() < 3.0 * sd, "alias {i}: {} vs {p}", f2[i]);
        }
    }

    #[test]
    fn zero_total_is_rejected() {
        assert!(ResamplingTable::<f64>::new(&[0.0, 0.0]).is_none());
        assert!(AliasTable::new::<f64>(&[]).is_none());
        assert!(ResamplingTable::new(&[f64::NAN]).is_none());
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let table = ResamplingTable::new(&[0.3, 0.0, 1e-300, 2.0, 0.0]).unwrap();
        let cdf = table.cdf();
        assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*cdf.last().unwrap(), 1.0);
    }
}
