//! Bootstrap particle filter with multinomial resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scalar::Real;
use crate::ssm::BoundModel;
use crate::tables::ResamplingTable;

/// Particles and weights at one time step.
///
/// Weights are stored relative to `exp(log_scale)`: the weight of particle
/// `i` in the model's own units is `weights[i] · exp(log_scale)`. Shifting by
/// the largest log-weight keeps the stored values in range when the emission
/// density underflows; every self-normalized quantity is unaffected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedParticleSet<F> {
    particles: Vec<F>,
    weights: Vec<F>,
    weight_sum: F,
    log_scale: F,
    t: usize,
}

impl<F: Real> WeightedParticleSet<F> {
    /// Builds a set from linear-domain weights.
    pub fn new(particles: Vec<F>, weights: Vec<F>, t: usize) -> Result<Self> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: particles.len().max(1),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= F::zero()) || !w.is_finite()) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        let weight_sum = weights.iter().copied().sum();
        Ok(WeightedParticleSet {
            particles,
            weights,
            weight_sum,
            log_scale: F::zero(),
            t,
        })
    }

    /// Builds a set from log-weights, shifting by the maximum before
    /// exponentiating. Fails with [`Error::Degenerate`] when no weight is
    /// positive.
    pub fn from_log_weights(particles: Vec<F>, mut log_weights: Vec<F>, t: usize) -> Result<Self> {
        let max = log_weights
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(F::neg_infinity(), F::max);
        if !max.is_finite() {
            return Err(Error::Degenerate { t, theta: Vec::new() });
        }
        let mut weight_sum = F::zero();
        for lw in log_weights.iter_mut() {
            let w = if lw.is_nan() { F::zero() } else { (*lw - max).exp() };
            *lw = w;
            weight_sum += w;
        }
        Ok(WeightedParticleSet {
            particles,
            weights: log_weights,
            weight_sum,
            log_scale: max,
            t,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn particles(&self) -> &[F] {
        &self.particles
    }

    /// Stored (scaled) weights.
    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    /// Sum of the stored weights.
    pub fn weight_sum(&self) -> F {
        self.weight_sum
    }

    pub fn log_scale(&self) -> F {
        self.log_scale
    }

    /// Weight of particle `i` in the model's own units.
    pub fn weight(&self, i: usize) -> F {
        self.weights[i] * self.log_scale.exp()
    }

    pub fn normalized_weight(&self, i: usize) -> F {
        self.weights[i] / self.weight_sum
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.weight_sum > F::zero()) || !self.weight_sum.is_finite()
    }

    fn ensure_usable(&self) -> Result<()> {
        if self.is_degenerate() {
            Err(Error::Degenerate { t: self.t, theta: Vec::new() })
        } else {
            Ok(())
        }
    }

    pub fn resampling_table(&self) -> Result<ResamplingTable<F>> {
        ResamplingTable::new(&self.weights).ok_or(Error::Degenerate { t: self.t, theta: Vec::new() })
    }
}

/// Draws `n` particles from the initial law and weights them by the emission
/// density at `y0`.
pub fn init_filter<F: Real, B: BoundModel<F>, R: Rng + ?Sized>(
    model: &B,
    y0: F,
    n: usize,
    rng: &mut R,
) -> Result<WeightedParticleSet<F>> {
    if n == 0 {
        return Err(Error::InvalidConfig("particle count must be at least 1".into()));
    }
    let particles: Vec<F> = (0..n).map(|_| model.sample_initial(rng)).collect();
    let log_w = particles.iter().map(|&x| model.log_emission(x, y0)).collect();
    WeightedParticleSet::from_log_weights(particles, log_w, 0)
}

/// One step of the bootstrap filter: resample, propagate, reweight.
///
/// Returns the new set and the ancestor index of every new particle.
pub fn pf_step<F: Real, B: BoundModel<F>, R: Rng + ?Sized>(
    model: &B,
    set: &WeightedParticleSet<F>,
    y_next: F,
    rng: &mut R,
) -> Result<(WeightedParticleSet<F>, Vec<usize>)> {
    let table = set.resampling_table()?;
    let n = set.len();
    let mut ancestors = Vec::with_capacity(n);
    let mut particles = Vec::with_capacity(n);
    for _ in 0..n {
        let a = table.sample(rng);
        ancestors.push(a);
        particles.push(model.sample_transition(set.particles[a], rng));
    }
    let log_w = particles.iter().map(|&x| model.log_emission(x, y_next)).collect();
    let next = WeightedParticleSet::from_log_weights(particles, log_w, set.t + 1)?;
    Ok((next, ancestors))
}

/// Parallel variant of [`pf_step`].
///
/// Particles are split into `workers` contiguous blocks; block `w` draws from
/// its own stream seeded from `(master_seed, t + 1, w)`. Output is
/// reproducible for a fixed worker count and independent of the thread pool
/// size.
pub fn pf_step_parallel<F: Real, B: BoundModel<F>>(
    model: &B,
    set: &WeightedParticleSet<F>,
    y_next: F,
    master_seed: u64,
    workers: usize,
) -> Result<(WeightedParticleSet<F>, Vec<usize>)> {
    let table = set.resampling_table()?;
    let n = set.len();
    let workers = workers.clamp(1, n);
    let block = n.div_ceil(workers);
    let t_next = set.t + 1;
    let blocks: Vec<(Vec<usize>, Vec<F>, Vec<F>)> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream(master_seed, t_next as u64, w as u64));
            let lo = (w * block).min(n);
            let hi = ((w + 1) * block).min(n);
            let mut anc = Vec::with_capacity(hi - lo);
            let mut xs = Vec::with_capacity(hi - lo);
            let mut lw = Vec::with_capacity(hi - lo);
            for _ in lo..hi {
                let a = table.sample(&mut rng);
                let x = model.sample_transition(set.particles[a], &mut rng);
                anc.push(a);
                xs.push(x);
                lw.push(model.log_emission(x, y_next));
            }
            (anc, xs, lw)
        })
        .collect();
    let mut ancestors = Vec::with_capacity(n);
    let mut particles = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);
    for (a, x, l) in blocks {
        ancestors.extend(a);
        particles.extend(x);
        log_w.extend(l);
    }
    let next = WeightedParticleSet::from_log_weights(particles, log_w, t_next)?;
    Ok((next, ancestors))
}

/// `Σ_i (ω_i / Ω) f(ξ_i)` for a vector-valued `f` of dimension `dim`.
pub fn self_normalized_estimate<F: Real>(
    set: &WeightedParticleSet<F>,
    dim: usize,
    mut f: impl FnMut(F, &mut [F]),
) -> Result<Vec<F>> {
    set.ensure_usable()?;
    let mut acc = vec![F::zero(); dim];
    let mut buf = vec![F::zero(); dim];
    for (&x, &w) in set.particles.iter().zip(&set.weights) {
        if w == F::zero() {
            continue;
        }
        f(x, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += w * *b;
        }
    }
    for a in acc.iter_mut() {
        *a /= set.weight_sum;
    }
    Ok(acc)
}

/// `(Σ ω)² / Σ ω²`, in `[1, N]`.
pub fn effective_sample_size<F: Real>(set: &WeightedParticleSet<F>) -> F {
    let sq: F = set.weights.iter().map(|&w| w * w).sum();
    set.weight_sum * set.weight_sum / sq
}
