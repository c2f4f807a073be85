//! Online smoothing of additive functionals.
//!
//! Every particle `i` carries an auxiliary statistic `τ^i`. When the filter
//! moves from `t-1` to `t`, the new statistic of particle `i` averages
//! `keep · τ_{t-1}^j + gain · s̃(ξ_{t-1}^j, ξ_t^i)` over the backward kernel
//! `j ∝ ω_{t-1}^j q(ξ_{t-1}^j, ξ_t^i)`:
//!
//! * FFBSm takes the exact expectation (`Θ(N²)` per step);
//! * PaRIS averages over `K` sampled indices, drawn directly (`O(N)` each)
//!   or by accept-reject against the transition bound (`O(1)` expected each).
//!
//! `(keep, gain) = (1, 1)` is the plain additive smoother; `(1 - γ, γ)` is the
//! stochastic-approximation form used by online EM.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle::WeightedParticleSet;
use crate::scalar::Real;
use crate::ssm::{BoundModel, StatVec};
use crate::tables::AliasTable;

/// Default number of consecutive accept-reject rejections before a direct draw.
pub const DEFAULT_TRIAL_CAP: usize = 100;

/// Per-particle auxiliary statistics, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxStatMatrix<F> {
    data: Vec<F>,
    dim: usize,
    t: usize,
}

impl<F: Real> AuxStatMatrix<F> {
    /// All-zero statistics at time 0.
    pub fn zeros(n: usize, dim: usize) -> Self {
        AuxStatMatrix { data: vec![F::zero(); n * dim], dim, t: 0 }
    }

    pub fn from_rows(rows: &[Vec<F>], t: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(AuxStatMatrix { data, dim, t })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackwardMode {
    Direct,
    #[default]
    AcceptReject,
}

impl std::str::FromStr for BackwardMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(BackwardMode::Direct),
            "accept-reject" | "ar" => Ok(BackwardMode::AcceptReject),
            other => Err(Error::InvalidConfig(format!("unknown backward mode `{other}`"))),
        }
    }
}

/// How backward indices are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackwardSampleConfig {
    pub k: usize,
    pub mode: BackwardMode,
    pub trial_cap: usize,
}

impl Default for BackwardSampleConfig {
    fn default() -> Self {
        BackwardSampleConfig { k: 2, mode: BackwardMode::AcceptReject, trial_cap: DEFAULT_TRIAL_CAP }
    }
}

impl BackwardSampleConfig {
    /// Any `k ≥ 1`; `k = 1` is meant for tests.
    pub fn new(k: usize, mode: BackwardMode) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("backward draw count must be at least 1".into()));
        }
        Ok(BackwardSampleConfig { k, mode, trial_cap: DEFAULT_TRIAL_CAP })
    }

    /// Requires `k ≥ 2`, below which the smoother is not numerically stable
    /// over long horizons.
    pub fn stable(k: usize, mode: BackwardMode) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidConfig(format!("backward draw count {k} < 2 is unstable")));
        }
        Self::new(k, mode)
    }

    pub fn with_trial_cap(mut self, cap: usize) -> Self {
        self.trial_cap = cap.max(1);
        self
    }

    pub fn is_stable(&self) -> bool {
        self.k >= 2
    }
}

/// Work counters for the backward samplers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackwardStats {
    pub draws: u64,
    pub trials: u64,
    pub fallbacks: u64,
}

impl BackwardStats {
    /// Accept-reject proposals per index drawn; 0 when nothing was drawn by
    /// accept-reject.
    pub fn mean_trials(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.trials as f64 / self.draws as f64
        }
    }

    pub fn merge(&mut self, other: BackwardStats) {
        self.draws += other.draws;
        self.trials += other.trials;
        self.fallbacks += other.fallbacks;
    }
}

/// Backward kernel from the particle set at `t-1`, ready to sample.
pub struct BackwardKernel<'a, F, B> {
    prev: &'a WeightedParticleSet<F>,
    model: &'a B,
    proposal: Option<AliasTable>,
    bound: F,
    scratch: Vec<F>,
}

impl<'a, F: Real, B: BoundModel<F>> BackwardKernel<'a, F, B> {
    pub fn new(prev: &'a WeightedParticleSet<F>, model: &'a B) -> Result<Self> {
        if prev.is_degenerate() {
            return Err(Error::Degenerate { t: prev.t(), theta: Vec::new() });
        }
        Ok(BackwardKernel {
            prev,
            model,
            proposal: None,
            bound: model.transition_bound(),
            scratch: Vec::with_capacity(prev.len()),
        })
    }

    /// Overrides the transition bound used by accept-reject.
    pub fn with_bound(mut self, bound: F) -> Self {
        self.bound = bound;
        self
    }

    /// Fills `scratch` with `ω_j q(ξ_j, x_new)` up to a common factor and
    /// returns their sum, or `None` if every term vanishes. Falls back to a
    /// max-shifted log-domain evaluation when the direct products underflow.
    fn fill_backward_weights(&mut self, x_new: F) -> Option<F> {
        let prev = self.prev;
        let model = self.model;
        self.scratch.clear();
        let mut sum = F::zero();
        for (&x, &w) in prev.particles().iter().zip(prev.weights()) {
            let b = w * model.transition(x, x_new);
            self.scratch.push(b);
            sum += b;
        }
        if sum > F::zero() && sum.is_finite() {
            return Some(sum);
        }
        self.scratch.clear();
        let mut max = F::neg_infinity();
        for (&x, &w) in prev.particles().iter().zip(prev.weights()) {
            let lb = if w > F::zero() { w.ln() + model.log_transition(x, x_new) } else { F::neg_infinity() };
            if lb > max {
                max = lb;
            }
            self.scratch.push(lb);
        }
        if !max.is_finite() {
            return None;
        }
        let mut sum = F::zero();
        for b in self.scratch.iter_mut() {
            *b = (*b - max).exp();
            sum += *b;
        }
        Some(sum)
    }

    /// `K` i.i.d. indices from the normalized backward weights, `O(N)`.
    pub fn draw_direct<R: Rng + ?Sized>(
        &mut self,
        target: usize,
        x_new: F,
        k: usize,
        rng: &mut R,
        out: &mut Vec<usize>,
    ) -> Result<()> {
        let t = self.prev.t() + 1;
        let sum = self.fill_backward_weights(x_new).ok_or(Error::BackwardDegenerate { t, target, theta: Vec::new() })?;
        let last = self.scratch.iter().rposition(|&b| b > F::zero()).unwrap();
        let mut acc = F::zero();
        for b in self.scratch.iter_mut() {
            acc += *b;
            *b = acc;
        }
        for _ in 0..k {
            let u = F::of(rng.random::<f64>()) * sum;
            let j = self.scratch.partition_point(|&c| c <= u).min(last);
            out.push(j);
        }
        Ok(())
    }

    /// `K` indices by accept-reject: propose from the filter weights, accept
    /// with probability `q(ξ_j, x_new) / q⁺`. After `trial_cap` consecutive
    /// rejections the index is drawn directly instead. The law of the output
    /// matches [`Self::draw_direct`].
    pub fn draw_accept_reject<R: Rng + ?Sized>(
        &mut self,
        target: usize,
        x_new: F,
        k: usize,
        trial_cap: usize,
        rng: &mut R,
        out: &mut Vec<usize>,
    ) -> Result<BackwardStats> {
        if self.proposal.is_none() {
            self.proposal = Some(
                AliasTable::new(self.prev.weights())
                    .ok_or(Error::Degenerate { t: self.prev.t(), theta: Vec::new() })?,
            );
        }
        let mut stats = BackwardStats { draws: k as u64, ..Default::default() };
        let particles = self.prev.particles();
        for _ in 0..k {
            let mut accepted = None;
            for _ in 0..trial_cap.max(1) {
                let j = self.proposal.as_ref().unwrap().sample(rng);
                stats.trials += 1;
                let q = self.model.transition(particles[j], x_new);
                if q > self.bound {
                    return Err(Error::ContractViolation { density: q.as_f64(), bound: self.bound.as_f64() });
                }
                if F::of(rng.random::<f64>()) < q / self.bound {
                    accepted = Some(j);
                    break;
                }
            }
            match accepted {
                Some(j) => out.push(j),
                None => {
                    stats.fallbacks += 1;
                    self.draw_direct(target, x_new, 1, rng, out)?;
                }
            }
        }
        Ok(stats)
    }

    /// Normalized backward probabilities for `x_new`.
    pub fn probabilities(&mut self, x_new: F) -> Option<Vec<F>> {
        let sum = self.fill_backward_weights(x_new)?;
        Some(self.scratch.iter().map(|&b| b / sum).collect())
    }
}

/// `K` backward indices for a particle at `x_new`, by direct sampling.
pub fn backward_indices_direct<F: Real, B: BoundModel<F>, R: Rng + ?Sized>(
    prev: &WeightedParticleSet<F>,
    model: &B,
    x_new: F,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(k);
    BackwardKernel::new(prev, model)?.draw_direct(0, x_new, k, rng, &mut out)?;
    Ok(out)
}

/// `K` backward indices by accept-reject against `bound`. Returns the
/// indices and the number of proposals made.
pub fn backward_indices_ar<F: Real, B: BoundModel<F>, R: Rng + ?Sized>(
    prev: &WeightedParticleSet<F>,
    model: &B,
    x_new: F,
    k: usize,
    bound: F,
    trial_cap: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, u64)> {
    let mut out = Vec::with_capacity(k);
    let stats = BackwardKernel::new(prev, model)?
        .with_bound(bound)
        .draw_accept_reject(0, x_new, k, trial_cap, rng, &mut out)?;
    Ok((out, stats.trials))
}

/// Backward indices for every particle of a step: row `i` holds the `K`
/// indices drawn for target particle `i`. Recording them lets two recursions
/// be driven by identical draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackwardIndices {
    k: usize,
    idx: Vec<usize>,
}

impl BackwardIndices {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.idx[i * self.k..(i + 1) * self.k]
    }

    pub fn n_rows(&self) -> usize {
        self.idx.len() / self.k
    }
}

/// Draws backward indices for all particles of `new`.
pub fn draw_backward_indices<F: Real, B: BoundModel<F>, R: Rng + ?Sized>(
    prev: &WeightedParticleSet<F>,
    new: &WeightedParticleSet<F>,
    model: &B,
    cfg: &BackwardSampleConfig,
    rng: &mut R,
) -> Result<(BackwardIndices, BackwardStats)> {
    let mut kernel = BackwardKernel::new(prev, model)?;
    let mut idx = Vec::with_capacity(new.len() * cfg.k);
    let mut stats = BackwardStats::default();
    if prev.len() == 1 {
        // point-mass kernel: nothing to draw
        idx.resize(new.len() * cfg.k, 0);
        stats.draws = idx.len() as u64;
        return Ok((BackwardIndices { k: cfg.k, idx }, stats));
    }
    for (i, &x) in new.particles().iter().enumerate() {
        match cfg.mode {
            BackwardMode::Direct => {
                kernel.draw_direct(i, x, cfg.k, rng, &mut idx)?;
                stats.draws += cfg.k as u64;
            }
            BackwardMode::AcceptReject => {
                stats.merge(kernel.draw_accept_reject(i, x, cfg.k, cfg.trial_cap, rng, &mut idx)?);
            }
        }
    }
    Ok((BackwardIndices { k: cfg.k, idx }, stats))
}

fn check_shapes<F: Real>(
    prev: &WeightedParticleSet<F>,
    prev_aux: &AuxStatMatrix<F>,
    new: &WeightedParticleSet<F>,
) -> Result<()> {
    if prev_aux.n_rows() != prev.len() {
        return Err(Error::DimensionMismatch { expected: prev.len(), got: prev_aux.n_rows() });
    }
    if prev_aux.t() + 1 != new.t() {
        return Err(Error::InvalidConfig(format!(
            "auxiliary statistics at t = {} cannot be advanced to t = {}",
            prev_aux.t(),
            new.t()
        )));
    }
    Ok(())
}

/// `τ_t^i = K⁻¹ Σ_k (keep · τ_{t-1}^{J_k} + gain · s̃(ξ_{t-1}^{J_k}, ξ_t^i))`
/// with given indices.
pub fn apply_backward_indices<F: Real, G>(
    prev: &WeightedParticleSet<F>,
    prev_aux: &AuxStatMatrix<F>,
    new: &WeightedParticleSet<F>,
    indices: &BackwardIndices,
    increment: G,
    keep: F,
    gain: F,
) -> Result<AuxStatMatrix<F>>
where
    G: Fn(F, F, &mut [F]),
{
    check_shapes(prev, prev_aux, new)?;
    if indices.n_rows() != new.len() {
        return Err(Error::DimensionMismatch { expected: new.len(), got: indices.n_rows() });
    }
    let dim = prev_aux.dim();
    let inv_k = F::one() / F::from_usize(indices.k()).unwrap();
    let mut data = vec![F::zero(); new.len() * dim];
    let mut buf = vec![F::zero(); dim];
    for (i, &x) in new.particles().iter().enumerate() {
        let row = &mut data[i * dim..(i + 1) * dim];
        for &j in indices.row(i) {
            increment(prev.particles()[j], x, &mut buf);
            for ((r, &tau), &s) in row.iter_mut().zip(prev_aux.row(j)).zip(&buf) {
                *r += keep * tau + gain * s;
            }
        }
        for r in row.iter_mut() {
            *r *= inv_k;
        }
    }
    Ok(AuxStatMatrix { data, dim, t: new.t() })
}

/// Plain additive PaRIS update.
pub fn paris_update<F: Real, B: BoundModel<F>, G, R: Rng + ?Sized>(
    prev: &WeightedParticleSet<F>,
    prev_aux: &AuxStatMatrix<F>,
    new: &WeightedParticleSet<F>,
    model: &B,
    increment: G,
    cfg: &BackwardSampleConfig,
    rng: &mut R,
) -> Result<(AuxStatMatrix<F>, BackwardStats)>
where
    G: Fn(F, F, &mut [F]),
{
    check_shapes(prev, prev_aux, new)?;
    let (idx, stats) = draw_backward_indices(prev, new, model, cfg, rng)?;
    Ok((apply_backward_indices(prev, prev_aux, new, &idx, increment, F::one(), F::one())?, stats))
}

fn check_gamma<F: Real>(gamma: F) -> Result<()> {
    if gamma > F::zero() && gamma <= F::one() {
        Ok(())
    } else {
        Err(Error::Schedule(format!("step size {gamma} is outside (0, 1]")))
    }
}

/// PaRIS update in stochastic-approximation form with step size `gamma`.
#[allow(clippy::too_many_arguments)]
pub fn online_stat_update<F: Real, B: BoundModel<F>, G, R: Rng + ?Sized>(
    prev: &WeightedParticleSet<F>,
    prev_aux: &AuxStatMatrix<F>,
    new: &WeightedParticleSet<F>,
    model: &B,
    increment: G,
    gamma: F,
    cfg: &BackwardSampleConfig,
    rng: &mut R,
) -> Result<(AuxStatMatrix<F>, BackwardStats)>
where
    G: Fn(F, F, &mut [F]),
{
    check_gamma(gamma)?;
    check_shapes(prev, prev_aux, new)?;
    let (idx, stats) = draw_backward_indices(prev, new, model, cfg, rng)?;
    let aux = apply_backward_indices(prev, prev_aux, new, &idx, increment, F::one() - gamma, gamma)?;
    Ok((aux, stats))
}

/// Exact backward expectation with coefficients `(keep, gain)`; `Θ(N²)`.
pub fn ffbsm_affine_update<F: Real, B: BoundModel<F>, G>(
    prev: &WeightedParticleSet<F>,
    prev_aux: &AuxStatMatrix<F>,
    new: &WeightedParticleSet<F>,
    model: &B,
    increment: G,
    keep: F,
    gain: F,
) -> Result<AuxStatMatrix<F>>
where
    G: Fn(F, F, &mut [F]),
{
    check_shapes(prev, prev_aux, new)?;
    let mut kernel = BackwardKernel::new(prev, model)?;
    let dim = prev_aux.dim();
    let mut data = vec![F::zero(); new.len() * dim];
    let mut buf = vec![F::zero(); dim];
    for (i, &x) in new.particles().iter().enumerate() {
        let sum = kernel
            .fill_backward_weights(x)
            .ok_or(Error::BackwardDegenerate { t: new.t(), target: i, theta: Vec::new() })?;
        let row = &mut data[i * dim..(i + 1) * dim];
        for (j, &b) in kernel.scratch.iter().enumerate() {
            if b == F::zero() {
                continue;
            }
            // normalized first so that a single particle carries weight exactly 1
            let p = b / sum;
            increment(prev.particles()[j], x, &mut buf);
            for ((r, &tau), &s) in row.iter_mut().zip(prev_aux.row(j)).zip(&buf) {
                *r += p * (keep * tau + gain * s);
            }
        }
    }
    Ok(AuxStatMatrix { data, dim, t: new.t() })
}

/// Plain additive FFBSm forward recursion.
pub fn ffbsm_update<F: Real, B: BoundModel<F>, G>(
    prev: &WeightedParticleSet<F>,
    prev_aux: &AuxStatMatrix<F>,
    new: &WeightedParticleSet<F>,
    model: &B,
    increment: G,
) -> Result<AuxStatMatrix<F>>
where
    G: Fn(F, F, &mut [F]),
{
    ffbsm_affine_update(prev, prev_aux, new, model, increment, F::one(), F::one())
}

/// FFBSm counterpart of [`online_stat_update`].
pub fn online_stat_update_ffbsm<F: Real, B: BoundModel<F>, G>(
    prev: &WeightedParticleSet<F>,
    prev_aux: &AuxStatMatrix<F>,
    new: &WeightedParticleSet<F>,
    model: &B,
    increment: G,
    gamma: F,
) -> Result<AuxStatMatrix<F>>
where
    G: Fn(F, F, &mut [F]),
{
    check_gamma(gamma)?;
    ffbsm_affine_update(prev, prev_aux, new, model, increment, F::one() - gamma, gamma)
}

/// `Σ_i ω^i τ^i / Ω`.
pub fn smoothed_estimate<F: Real>(set: &WeightedParticleSet<F>, aux: &AuxStatMatrix<F>) -> Result<StatVec<F>> {
    if aux.n_rows() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: aux.n_rows() });
    }
    if set.is_degenerate() {
        return Err(Error::Degenerate { t: set.t(), theta: Vec::new() });
    }
    let mut acc = vec![F::zero(); aux.dim()];
    for (row, &w) in aux.rows().zip(set.weights()) {
        if w == F::zero() {
            continue;
        }
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += w * v;
        }
    }
    let total = set.weight_sum();
    Ok(StatVec(acc.into_iter().map(|a| a / total).collect()))
}

/// Most index paths [`exact_path_space_oracle`] will enumerate.
pub const PATH_SPACE_LIMIT: f64 = 1e6;

/// Smoothed expectation of an additive functional by enumerating every index
/// path through the particle sets, weighted by the product of backward
/// kernels and the final filter weight. Exponential cost; meant as ground
/// truth on tiny instances (`N^T ≤ 10⁶`).
///
/// `increment(step, x_prev, x_next, out)` is the term for the transition from
/// `sets[step]` to `sets[step + 1]`.
pub fn exact_path_space_oracle<F: Real, B: BoundModel<F>, G>(
    sets: &[WeightedParticleSet<F>],
    model: &B,
    dim: usize,
    increment: G,
) -> Result<StatVec<F>>
where
    G: Fn(usize, F, F, &mut [F]),
{
    let horizon = sets.len().saturating_sub(1);
    let n = sets.first().map_or(0, WeightedParticleSet::len);
    if n == 0 || sets.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidConfig("particle sets must be nonempty and of equal size".into()));
    }
    let paths = (n as f64).powi(horizon as i32);
    if paths > PATH_SPACE_LIMIT {
        return Err(Error::InstanceTooLarge { paths, limit: PATH_SPACE_LIMIT });
    }
    // back[s][i_next * n + i] = backward probability of i at step s given i_next at s + 1
    let mut back = Vec::with_capacity(horizon);
    for s in 0..horizon {
        let mut table = vec![F::zero(); n * n];
        for i_next in 0..n {
            let x_next = sets[s + 1].particles()[i_next];
            let terms: Vec<F> = (0..n)
                .map(|i| sets[s].weights()[i] * model.transition(sets[s].particles()[i], x_next))
                .collect();
            let z: F = terms.iter().copied().sum();
            if !(z > F::zero()) {
                return Err(Error::BackwardDegenerate { t: s + 1, target: i_next, theta: Vec::new() });
            }
            for i in 0..n {
                table[i_next * n + i] = terms[i] / z;
            }
        }
        back.push(table);
    }
    let last = &sets[horizon];
    let mut total = vec![F::zero(); dim];
    let mut f = vec![F::zero(); dim];
    let mut buf = vec![F::zero(); dim];
    let mut path = vec![0usize; horizon + 1];
    loop {
        let mut p = last.weights()[path[horizon]] / last.weight_sum();
        for s in 0..horizon {
            p *= back[s][path[s + 1] * n + path[s]];
        }
        if p > F::zero() {
            f.iter_mut().for_each(|v| *v = F::zero());
            for s in 0..horizon {
                increment(s, sets[s].particles()[path[s]], sets[s + 1].particles()[path[s + 1]], &mut buf);
                for (a, &b) in f.iter_mut().zip(&buf) {
                    *a += b;
                }
            }
            for (a, &b) in total.iter_mut().zip(&f) {
                *a += p * b;
            }
        }
        // odometer
        let mut pos = 0;
        loop {
            if pos > horizon {
                return Ok(StatVec(total));
            }
            path[pos] += 1;
            if path[pos] < n {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}
