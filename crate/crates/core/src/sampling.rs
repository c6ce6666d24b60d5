//! Per-step selection of the sampled terms and the statistics of the
//! resulting random operator `dH = sum_l w_l [l selected] h_l - H1`.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::evolve::StateVector;
use crate::pauli::{spectral_norm, vec_norm, HamiltonianTerm, TermSum};

/// Outcome counts up to which expectations over draws are enumerated exactly.
pub const MAX_ENUMERATED_OUTCOMES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    /// `K` distinct terms uniformly at random, each weighted `n_r / K`.
    UniformBatch,
    /// One term with probability `|c_j| / sum |c|`, weighted `1 / p_j`.
    Importance,
    /// One term with probability `||h_j psi|| / sum ||h_k psi||`, recomputed
    /// from the current state every step.
    StateAdaptive,
}

impl SamplerMode {
    pub fn name(self) -> &'static str {
        match self {
            SamplerMode::UniformBatch => "uniform",
            SamplerMode::Importance => "importance",
            SamplerMode::StateAdaptive => "adaptive",
        }
    }
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplerMode::UniformBatch),
            "importance" => Ok(SamplerMode::Importance),
            "adaptive" => Ok(SamplerMode::StateAdaptive),
            _ => Err(Error::invalid(format!("unknown sampler `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerSpec {
    pub mode: SamplerMode,
    /// Terms drawn per step. Importance modes only support 1.
    pub batch_size: usize,
}

impl SamplerSpec {
    pub fn uniform(batch_size: usize) -> Self {
        SamplerSpec { mode: SamplerMode::UniformBatch, batch_size }
    }

    pub fn importance() -> Self {
        SamplerSpec { mode: SamplerMode::Importance, batch_size: 1 }
    }

    pub fn adaptive() -> Self {
        SamplerSpec { mode: SamplerMode::StateAdaptive, batch_size: 1 }
    }

    pub fn validate(&self, n_r: usize) -> Result<()> {
        match self.mode {
            SamplerMode::UniformBatch => {
                if self.batch_size == 0 {
                    return Err(Error::invalid("batch size must be at least 1"));
                }
                if n_r > 0 && self.batch_size > n_r {
                    return Err(Error::invalid(format!(
                        "batch size {} exceeds the {n_r} sampled terms",
                        self.batch_size
                    )));
                }
            }
            SamplerMode::Importance | SamplerMode::StateAdaptive => {
                if self.batch_size != 1 {
                    return Err(Error::invalid(format!(
                        "{} sampling draws exactly one term per step, got batch size {}",
                        self.mode, self.batch_size
                    )));
                }
            }
        }
        Ok(())
    }

    /// Terms applied per step: 0 when nothing is sampled.
    pub fn effective_batch(&self, n_r: usize) -> usize {
        if n_r == 0 {
            0
        } else {
            self.batch_size
        }
    }
}

/// Selected term indices (ascending) and their weight multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDraw {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl BatchDraw {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

fn normalize_weights(w: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let total = compensated_sum(w.iter().copied());
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::invalid("sampling weights sum to zero"));
    }
    Ok((w.into_iter().map(|x| x / total).collect(), total))
}

/// `p_j = |c_j| / lambda` with `lambda = sum |c_j|`; returns `(p, lambda)`.
pub fn importance_probs(h1: &[HamiltonianTerm]) -> Result<(Vec<f64>, f64)> {
    if h1.is_empty() {
        return Err(Error::invalid("no terms to sample"));
    }
    normalize_weights(h1.iter().map(|t| t.coeff.abs()).collect())
}

/// `p_j = ||h_j psi|| / sum_k ||h_k psi||` for general (possibly grouped) terms.
pub fn state_adaptive_probs(h1: &[TermSum], state: &StateVector) -> Result<Vec<f64>> {
    if h1.is_empty() {
        return Err(Error::invalid("no terms to sample"));
    }
    let w = h1
        .iter()
        .map(|h| {
            if h.n_qubits() != state.n_qubits() {
                return Err(Error::QubitMismatch(h.n_qubits(), state.n_qubits()));
            }
            Ok(vec_norm(&h.apply(state.amplitudes())?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(normalize_weights(w)?.0)
}

/// A sampler bound to a concrete list of sampled terms.
#[derive(Debug, Clone)]
pub struct Sampler {
    spec: SamplerSpec,
    n_r: usize,
    probs: Vec<f64>,
    dist: Option<WeightedIndex<f64>>,
}

impl Sampler {
    pub fn new(spec: SamplerSpec, h1: &[HamiltonianTerm]) -> Result<Self> {
        spec.validate(h1.len())?;
        let n_r = h1.len();
        let (probs, dist) = match spec.mode {
            SamplerMode::UniformBatch => (vec![1.0 / n_r.max(1) as f64; n_r], None),
            _ if n_r == 0 => (Vec::new(), None),
            _ => {
                let (p, _) = importance_probs(h1)?;
                let d = WeightedIndex::new(&p).map_err(|e| Error::invalid(e.to_string()))?;
                (p, Some(d))
            }
        };
        Ok(Sampler { spec, n_r, probs, dist })
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    /// Marginal selection probability of each term for single-draw modes.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> BatchDraw {
        if self.n_r == 0 {
            return BatchDraw { indices: Vec::new(), weights: Vec::new() };
        }
        match self.spec.mode {
            SamplerMode::UniformBatch => uniform_batch(self.n_r, self.spec.batch_size, rng),
            _ => {
                let j = self.dist.as_ref().expect("weighted sampler").sample(rng);
                BatchDraw { indices: vec![j], weights: vec![1.0 / self.probs[j]] }
            }
        }
    }

    /// Draw with probabilities recomputed from `state` (state-adaptive mode);
    /// other modes ignore the state.
    pub fn draw_for_state<R: Rng + ?Sized>(
        &self,
        h1: &[HamiltonianTerm],
        state: &StateVector,
        rng: &mut R,
    ) -> Result<BatchDraw> {
        if self.spec.mode != SamplerMode::StateAdaptive || self.n_r == 0 {
            return Ok(self.draw(rng));
        }
        let sums = h1
            .iter()
            .map(|t| TermSum::from_terms(t.n_qubits(), [t]))
            .collect::<Result<Vec<_>>>()?;
        let p = state_adaptive_probs(&sums, state)?;
        let j = WeightedIndex::new(&p).map_err(|e| Error::invalid(e.to_string()))?.sample(rng);
        Ok(BatchDraw { indices: vec![j], weights: vec![1.0 / p[j]] })
    }
}

fn uniform_batch<R: Rng + ?Sized>(n_r: usize, k: usize, rng: &mut R) -> BatchDraw {
    let w = n_r as f64 / k as f64;
    if k == n_r {
        return BatchDraw { indices: (0..n_r).collect(), weights: vec![1.0; n_r] };
    }
    let mut indices = rand::seq::index::sample(rng, n_r, k).into_vec();
    indices.sort_unstable();
    BatchDraw { weights: vec![w; k], indices }
}

/// Draws one batch.
pub fn sample_batch<R: Rng + ?Sized>(sampler: &Sampler, rng: &mut R) -> BatchDraw {
    sampler.draw(rng)
}

/// `dH = sum_l w_l h_l [l selected] - H1` for one draw.
pub fn delta_h_operator(h1: &[HamiltonianTerm], draw: &BatchDraw) -> Result<TermSum> {
    let n = h1.first().map(|t| t.n_qubits()).ok_or_else(|| Error::invalid("no sampled terms"))?;
    let mut out = TermSum::new(n);
    let mut selected = vec![1.0; h1.len()];
    for (j, w) in draw.iter() {
        selected[j] = 1.0 - w;
    }
    for (t, s) in h1.iter().zip(selected) {
        // coefficient (w - 1) c on selected terms and -c elsewhere
        out.add_term(t.pauli, Complex64::new(-s * t.coeff, 0.0));
    }
    Ok(out)
}

/// Every possible draw with its probability, when there are at most
/// [`MAX_ENUMERATED_OUTCOMES`] of them.
pub fn enumerate_outcomes(h1: &[HamiltonianTerm], spec: &SamplerSpec) -> Result<Option<Vec<(f64, BatchDraw)>>> {
    spec.validate(h1.len())?;
    let n_r = h1.len();
    if n_r == 0 {
        return Ok(Some(vec![(1.0, BatchDraw { indices: Vec::new(), weights: Vec::new() })]));
    }
    match spec.mode {
        SamplerMode::UniformBatch => {
            let k = spec.batch_size;
            let count = binomial(n_r, k);
            if count > MAX_ENUMERATED_OUTCOMES as f64 {
                return Ok(None);
            }
            let w = n_r as f64 / k as f64;
            let p = 1.0 / count;
            Ok(Some(
                (0..n_r)
                    .combinations(k)
                    .map(|indices| (p, BatchDraw { weights: vec![w; k], indices }))
                    .collect(),
            ))
        }
        _ => {
            if n_r > MAX_ENUMERATED_OUTCOMES {
                return Ok(None);
            }
            let (p, _) = importance_probs(h1)?;
            Ok(Some(
                p.iter()
                    .enumerate()
                    .map(|(j, &pj)| (pj, BatchDraw { indices: vec![j], weights: vec![1.0 / pj] }))
                    .collect(),
            ))
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Second-moment operator, its norm, and the almost-sure bound of `dH`.
#[derive(Debug, Clone)]
pub struct DeltaHConstants {
    /// `Sigma = E[dH^2]`.
    pub sigma: TermSum,
    /// `||Sigma||`.
    pub lambda: f64,
    /// Almost-sure size of a draw: a bound on `||dH||`, except for uniform
    /// `K = 1` where it is `n_r max |c|`, the norm of the sampled generator.
    pub gamma: f64,
    /// `sum_j |c_j|`.
    pub coeff_l1: f64,
}

pub fn delta_h_constants(h1: &[HamiltonianTerm], spec: &SamplerSpec) -> Result<DeltaHConstants> {
    let Some(first) = h1.first() else {
        return Err(Error::invalid("no sampled terms"));
    };
    spec.validate(h1.len())?;
    let n = first.n_qubits();
    let n_r = h1.len();
    let sum_sq = compensated_sum(h1.iter().map(|t| t.coeff * t.coeff));
    let coeff_l1 = compensated_sum(h1.iter().map(|t| t.coeff.abs()));
    let h1_sum = TermSum::from_terms(n, h1)?;
    let h1_sq = h1_sum.mul(&h1_sum)?;

    let (sigma, gamma) = match spec.mode {
        SamplerMode::UniformBatch => {
            let k = spec.batch_size;
            if k == n_r {
                (TermSum::new(n), 0.0)
            } else {
                // (1/K) ((n_r - K)/(n_r - 1)) n_r (sum c^2 I - H1^2 / n_r)
                let factor = (n_r - k) as f64 / (k as f64 * (n_r - 1) as f64) * n_r as f64;
                let mut delta = TermSum::scalar(n, Complex64::new(sum_sq, 0.0))?;
                delta.add_assign(&h1_sq.scaled(Complex64::new(-1.0 / n_r as f64, 0.0)))?;
                (delta.scaled(Complex64::new(factor, 0.0)), uniform_gamma(h1, k))
            }
        }
        SamplerMode::Importance | SamplerMode::StateAdaptive => {
            let (p, lambda1) = importance_probs(h1)?;
            // sum_j c_j^2 / p_j = lambda1 * sum_j |c_j|
            let s = compensated_sum(h1.iter().zip(&p).map(|(t, pj)| t.coeff * t.coeff / pj));
            let mut sigma = TermSum::scalar(n, Complex64::new(s, 0.0))?;
            sigma.add_assign(&h1_sq.scaled(Complex64::new(-1.0, 0.0)))?;
            let max_ratio = h1.iter().zip(&p).map(|(t, pj)| t.coeff.abs() / pj).fold(0.0, f64::max);
            debug_assert!((max_ratio - lambda1).abs() <= 1e-12 * lambda1);
            (sigma, max_ratio + spectral_norm(&h1_sum)?)
        }
    };
    let mut sigma = sigma;
    sigma.prune(1e-14 * sum_sq.max(f64::MIN_POSITIVE));
    let lambda = spectral_norm(&sigma)?;
    Ok(DeltaHConstants { sigma, lambda, gamma, coeff_l1 })
}

/// Triangle-inequality bound on `||dH||` for uniform batches.
///
/// A batch `S` gives `dH = (n_r/K - 1) sum_S h - sum_{not S} h`, bounded by
/// `sum |c| + (n_r/K - 2) sum_S |c|`; the worst `S` takes the `K` largest
/// magnitudes when `n_r/K >= 2` and the `K` smallest otherwise. For `K = 1`
/// the conventional `n_r max |c|` is reported instead; it bounds the sampled
/// generator `n_r h_j` rather than `dH` itself.
fn uniform_gamma(h1: &[HamiltonianTerm], k: usize) -> f64 {
    let n_r = h1.len();
    let mut mags: Vec<f64> = h1.iter().map(|t| t.coeff.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    if k == 1 {
        return n_r as f64 * mags[0];
    }
    let ratio = n_r as f64 / k as f64;
    let total: f64 = mags.iter().sum();
    let chosen: f64 = if ratio >= 2.0 { mags[..k].iter().sum() } else { mags[n_r - k..].iter().sum() };
    total + (ratio - 2.0) * chosen
}
