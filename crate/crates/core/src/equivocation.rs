//! Equivocation of the AAA key against an erasure eavesdropper.
//!
//! The per-bit equivocation is `ε_n = Σ_e p(e) h(η(e))`, where `e` ranges
//! over Eve's observation sequences of one bit lane and `η(e)` is the
//! posterior probability that the lane's XOR is zero. Lanes are independent
//! given the (shared) erasure pattern, so the full-key value is `L · ε_n`.
//!
//! Four routes are provided:
//! * closed forms for `n ≤ 3` ([`eps1`], [`eps2`], [`eps3`]) and for
//!   independent packets ([`eps_independent`]);
//! * exact enumeration over all `≤ 3ⁿ` observation sequences ([`exact_eps`]);
//! * Monte Carlo over sampled traces with an exact posterior per sample
//!   ([`mc_eps`]);
//! * a brute-force joint enumeration of the full key for `L ≤ 2`
//!   ([`exact_eps_joint`]), used to check the `L · ε_n` factorisation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::h2;
use crate::rng;
use crate::sources::{self, check_persistence, check_probability, Erasure};
use crate::stats::Moments;

/// Largest `n` accepted by [`exact_eps`].
pub const EXACT_CAP: usize = 12;

/// Largest `n` accepted by [`exact_eps_joint`].
pub const JOINT_CAP: usize = 8;

const MC_BLOCK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Closed,
    Exact,
    Mc,
}

/// Whether a value is per key bit (in `[0, 1]`) or for the whole key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    PerBit,
    FullKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivEstimate {
    pub value: f64,
    pub std_err: f64,
    pub method: Method,
    pub scope: Scope,
    pub n: usize,
    pub alpha: f64,
    pub mu: Erasure,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl EquivEstimate {
    /// Whole-key value `L · ε`. Exact under whole-packet erasure, since the
    /// lanes are independent once the erasure pattern is fixed.
    pub fn full_key(&self, key_len: usize) -> EquivEstimate {
        assert_eq!(
            self.scope,
            Scope::PerBit,
            "estimate is already for the full key"
        );
        EquivEstimate {
            value: self.value * key_len as f64,
            std_err: self.std_err * key_len as f64,
            scope: Scope::FullKey,
            ..self.clone()
        }
    }
}

/// `L (1 − ∏ (1 − μᵢ))`: equivocation of an `L`-bit key built from
/// independent packets.
pub fn eps_independent(mu: &[f64], key_len: usize) -> Result<f64> {
    for &m in mu {
        check_probability("erasure probability", m)?;
    }
    let intercepted_all: f64 = mu.iter().map(|m| 1.0 - m).product();
    Ok(key_len as f64 * (1.0 - intercepted_all))
}

/// `ε₁ = μ`.
pub fn eps1(mu: f64) -> f64 {
    mu
}

/// `ε₂ = μ₁μ₂ + [μ₁(1−μ₂) + (1−μ₁)μ₂] h(α)`.
pub fn eps2(alpha: f64, mu1: f64, mu2: f64) -> f64 {
    mu1 * mu2 + (mu1 * (1.0 - mu2) + (1.0 - mu1) * mu2) * h2(alpha)
}

/// Exact two-packet equivocation, `h(α) (1 − (1−μ₁)(1−μ₂))`.
///
/// Differs from [`eps2`] only in the both-erased term: with no observation
/// the key bit `X₁ ⊕ X₂` is the Markov flip indicator, which is zero with
/// probability `α`, so that event contributes `μ₁μ₂ h(α)` rather than
/// `μ₁μ₂`. The two agree when `h(α) = 1`.
pub fn eps2_exact(alpha: f64, mu1: f64, mu2: f64) -> f64 {
    h2(alpha) * (1.0 - (1.0 - mu1) * (1.0 - mu2))
}

/// Three-packet closed form with equal erasure probabilities:
///
/// `μ³ + 2μμ′h(α) + μ²μ′h(α²+α′²) + μμ′²[2αα′ + (α²+α′²) h(α²/(α²+α′²))]`.
pub fn eps3(alpha: f64, mu: f64) -> f64 {
    let a = alpha;
    let ab = 1.0 - alpha;
    let m = mu;
    let mb = 1.0 - mu;
    let same2 = a * a + ab * ab;
    m.powi(3)
        + 2.0 * m * mb * h2(a)
        + m * m * mb * h2(same2)
        + m * mb * mb * (2.0 * a * ab + same2 * h2(a * a / same2))
}

/// Unnormalised forward pass over (current bit, running parity).
///
/// Returns the normalised posterior `[P(parity=0|e), P(parity=1|e)]` and
/// `ln P(observed values | erasure pattern)`.
fn parity_forward(lane: &[Option<bool>], alpha: f64) -> Result<([f64; 2], f64)> {
    let Some(first) = lane.first() else {
        return Err(Error::EmptyObservation);
    };
    let consistent = |obs: &Option<bool>, x: usize| obs.is_none_or(|v| usize::from(v) == x);

    // state[x][p]: bit value x, parity p
    let mut state = [[0.0f64; 2]; 2];
    for (x, row) in state.iter_mut().enumerate() {
        if consistent(first, x) {
            row[x] = 0.5;
        }
    }
    let mut log_mass = 0.0;
    let mut total = normalise(&mut state)?;
    log_mass += total.ln();
    for obs in &lane[1..] {
        let mut next = [[0.0f64; 2]; 2];
        for (x, row) in state.iter().enumerate() {
            for (p, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for y in 0..2 {
                    if !consistent(obs, y) {
                        continue;
                    }
                    let t = if x == y { alpha } else { 1.0 - alpha };
                    next[y][p ^ y] += w * t;
                }
            }
        }
        state = next;
        total = normalise(&mut state)?;
        log_mass += total.ln();
    }
    Ok((
        [state[0][0] + state[1][0], state[0][1] + state[1][1]],
        log_mass,
    ))
}

fn normalise(state: &mut [[f64; 2]; 2]) -> Result<f64> {
    let total: f64 = state.iter().flatten().sum();
    if total <= 0.0 {
        return Err(Error::ImpossibleObservation);
    }
    state.iter_mut().flatten().for_each(|w| *w /= total);
    Ok(total)
}

/// `η(e) = P(X₁ ⊕ … ⊕ Xₙ = 0 | e)` for one bit lane, computed exactly by a
/// forward pass over the joint (bit, parity) state. `None` marks an erased
/// packet.
pub fn eta_dp(lane: &[Option<bool>], alpha: f64) -> Result<f64> {
    check_persistence(alpha)?;
    Ok(parity_forward(lane, alpha)?.0[0])
}

/// Posterior marginals `βᵢ(e) = P(Xᵢ = 1 | e)` by forward-backward.
pub fn bit_marginals(lane: &[Option<bool>], alpha: f64) -> Result<Vec<f64>> {
    check_persistence(alpha)?;
    if lane.is_empty() {
        return Err(Error::EmptyObservation);
    }
    let n = lane.len();
    let emit = |obs: &Option<bool>, x: usize| -> f64 {
        f64::from(u8::from(obs.is_none_or(|v| usize::from(v) == x)))
    };
    let trans = |x: usize, y: usize| if x == y { alpha } else { 1.0 - alpha };

    let mut fwd = vec![[0.0f64; 2]; n];
    for (x, f) in fwd[0].iter_mut().enumerate() {
        *f = 0.5 * emit(&lane[0], x);
    }
    for i in 1..n {
        for y in 0..2 {
            fwd[i][y] =
                emit(&lane[i], y) * (0..2).map(|x| fwd[i - 1][x] * trans(x, y)).sum::<f64>();
        }
        let s = fwd[i][0] + fwd[i][1];
        if s <= 0.0 {
            return Err(Error::ImpossibleObservation);
        }
        fwd[i].iter_mut().for_each(|w| *w /= s);
    }
    let mut bwd = vec![[1.0f64; 2]; n];
    for i in (0..n - 1).rev() {
        for x in 0..2 {
            bwd[i][x] = (0..2)
                .map(|y| trans(x, y) * emit(&lane[i + 1], y) * bwd[i + 1][y])
                .sum();
        }
        let s = bwd[i][0] + bwd[i][1];
        bwd[i].iter_mut().for_each(|w| *w /= s);
    }
    (0..n)
        .map(|i| {
            let p0 = fwd[i][0] * bwd[i][0];
            let p1 = fwd[i][1] * bwd[i][1];
            if p0 + p1 <= 0.0 {
                Err(Error::ImpossibleObservation)
            } else {
                Ok(p1 / (p0 + p1))
            }
        })
        .collect()
}

/// `η(e) = ½ (1 + ∏ (1 − 2βᵢ(e)))` from exact posterior marginals.
///
/// This product form is exact only when the lane's bits are conditionally
/// independent given `e` (e.g. `α = ½`, or every bit observed). Under
/// Markov persistence the erased bits between observations are correlated
/// and the value departs from [`eta_dp`].
pub fn eta_product(lane: &[Option<bool>], alpha: f64) -> Result<f64> {
    let delta: f64 = bit_marginals(lane, alpha)?
        .iter()
        .map(|b| 1.0 - 2.0 * b)
        .product();
    Ok(0.5 * (1.0 + delta))
}

/// Exact per-bit equivocation `ε_n` by enumerating every erasure pattern and
/// every assignment of the observed bits.
pub fn exact_eps(n: usize, alpha: f64, mu: &Erasure) -> Result<f64> {
    exact_eps_with_cap(n, alpha, mu, EXACT_CAP)
}

pub fn exact_eps_with_cap(n: usize, alpha: f64, mu: &Erasure, cap: usize) -> Result<f64> {
    if n > cap {
        return Err(Error::ResourceCap { n, cap });
    }
    if n == 0 {
        return Ok(0.0);
    }
    check_persistence(alpha)?;
    let mus = mu.per_packet(n)?;

    let mut eps = 0.0;
    let mut lane = vec![None; n];
    for pattern in 0u32..(1 << n) {
        let erased = |i: usize| pattern >> i & 1 == 1;
        let p_pattern: f64 = (0..n)
            .map(|i| if erased(i) { mus[i] } else { 1.0 - mus[i] })
            .product();
        if p_pattern == 0.0 {
            continue;
        }
        let observed: Vec<usize> = (0..n).filter(|&i| !erased(i)).collect();
        let mut inner = 0.0;
        for values in 0u32..(1 << observed.len()) {
            lane.fill(None);
            for (k, &i) in observed.iter().enumerate() {
                lane[i] = Some(values >> k & 1 == 1);
            }
            match parity_forward(&lane, alpha) {
                Ok((post, log_mass)) => inner += log_mass.exp() * h2(post[0]),
                Err(Error::ImpossibleObservation) => {}
                Err(e) => return Err(e),
            }
        }
        eps += p_pattern * inner;
    }
    Ok(eps)
}

/// Exact equivocation as an [`EquivEstimate`] (per bit).
pub fn exact_estimate(n: usize, alpha: f64, mu: &Erasure) -> Result<EquivEstimate> {
    Ok(EquivEstimate {
        value: exact_eps(n, alpha, mu)?,
        std_err: 0.0,
        method: Method::Exact,
        scope: Scope::PerBit,
        n,
        alpha,
        mu: mu.clone(),
        trials: None,
        seed: None,
    })
}

/// `H(K₁,…,K_L | ℰⁿ)` for `L ≤ 2` by brute force over every joint trace of
/// all lanes, grouping traces by what Eve sees. Independent of the
/// per-lane machinery above.
pub fn exact_eps_joint(n: usize, alpha: f64, mu: &Erasure, key_len: usize) -> Result<f64> {
    if n > JOINT_CAP {
        return Err(Error::ResourceCap { n, cap: JOINT_CAP });
    }
    if !(1..=2).contains(&key_len) {
        return Err(Error::Config(format!(
            "joint enumeration supports key lengths 1 and 2, not {key_len}"
        )));
    }
    check_persistence(alpha)?;
    let mus = mu.per_packet(n)?;
    if n == 0 {
        return Ok(0.0);
    }

    // probability of a single-lane trace (bits packed LSB = packet 0)
    let lane_prob = |x: u32| -> f64 {
        let mut p = 0.5;
        for i in 1..n {
            let same = (x >> i & 1) == (x >> (i - 1) & 1);
            p *= if same { alpha } else { 1.0 - alpha };
        }
        p
    };
    let lane_probs: Vec<f64> = (0..1u32 << n).map(lane_prob).collect();
    let parity = |x: u32| (x.count_ones() & 1) as usize;

    let mut total = 0.0;
    for pattern in 0u32..(1 << n) {
        let p_pattern: f64 = (0..n)
            .map(|i| {
                if pattern >> i & 1 == 1 {
                    mus[i]
                } else {
                    1.0 - mus[i]
                }
            })
            .product();
        if p_pattern == 0.0 {
            continue;
        }
        let seen_mask = !pattern & ((1 << n) - 1);
        // observation key -> joint key distribution
        let mut groups: std::collections::HashMap<u64, [f64; 4]> = std::collections::HashMap::new();
        let lanes = 1u32 << n;
        let traces = if key_len == 1 { lanes } else { lanes * lanes };
        for t in 0..traces {
            let (x1, x2) = (t % lanes, t / lanes);
            let p = lane_probs[x1 as usize]
                * if key_len == 2 {
                    lane_probs[x2 as usize]
                } else {
                    1.0
                };
            if p == 0.0 {
                continue;
            }
            let obs = u64::from(x1 & seen_mask) | (u64::from(x2 & seen_mask) << 32);
            let k = parity(x1) | (parity(x2) << 1);
            groups.entry(obs).or_insert([0.0; 4])[k] += p;
        }
        let mut inner = 0.0;
        for dist in groups.values() {
            let mass: f64 = dist.iter().sum();
            let h: f64 = dist
                .iter()
                .filter(|&&q| q > 0.0)
                .map(|&q| -(q / mass) * (q / mass).log2())
                .sum();
            inner += mass * h;
        }
        total += p_pattern * inner;
    }
    Ok(total)
}

/// Monte Carlo estimate of the per-bit equivocation: sample a lane and its
/// erasures, evaluate `h(η)` exactly, average.
///
/// Trials are split into fixed blocks, each drawing from its own stream of
/// `seed`, and merged in block order, so the result does not depend on the
/// number of worker threads.
pub fn mc_eps(n: usize, alpha: f64, mu: &Erasure, trials: u64, seed: u64) -> Result<EquivEstimate> {
    if trials == 0 {
        return Err(Error::Config("Monte Carlo needs at least one trial".into()));
    }
    if n == 0 {
        return Err(Error::EmptyObservation);
    }
    check_persistence(alpha)?;
    let mus = mu.per_packet(n)?;

    let moments = rng::blocks(trials, MC_BLOCK)
        .into_par_iter()
        .map(|(block, count)| {
            let mut rng = rng::stream(seed, block);
            let mut lane = Vec::with_capacity(n);
            let mut m = Moments::default();
            for _ in 0..count {
                sources::sample_lane(&mut rng, alpha, &mus, &mut lane);
                let eta = parity_forward(&lane, alpha)
                    .expect("sampled lanes have positive probability")
                    .0[0];
                m.push(h2(eta));
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);

    Ok(EquivEstimate {
        value: moments.mean,
        std_err: moments.std_err(),
        method: Method::Mc,
        scope: Scope::PerBit,
        n,
        alpha,
        mu: mu.clone(),
        trials: Some(trials),
        seed: Some(seed),
    })
}

/// [`mc_eps`] along a ladder of packet counts; rung `n` uses the derived
/// seed `derive_seed(seed, n)`.
pub fn mc_ladder(
    ladder: &[usize],
    alpha: f64,
    mu: f64,
    trials: u64,
    seed: u64,
) -> Result<Vec<EquivEstimate>> {
    ladder
        .iter()
        .map(|&n| {
            mc_eps(
                n,
                alpha,
                &Erasure::Uniform(mu),
                trials,
                rng::derive_seed(seed, n as u64),
            )
        })
        .collect()
}

/// One grid point of the `ε₂`, `ε₃`, `ε₂/ε₁`, `ε₃/ε₂` surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub alpha: f64,
    pub mu: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub r21: f64,
    pub r32: f64,
}

impl SurfacePoint {
    pub fn at(alpha: f64, mu: f64) -> Self {
        let e1 = eps1(mu);
        let e2 = eps2(alpha, mu, mu);
        let e3 = eps3(alpha, mu);
        Self {
            alpha,
            mu,
            eps2: e2,
            eps3: e3,
            r21: e2 / e1,
            r32: e3 / e2,
        }
    }
}

/// Closed-form surfaces over `alpha_grid × mu_grid`, alpha-major.
pub fn sweep_surface(alpha_grid: &[f64], mu_grid: &[f64]) -> Result<Vec<SurfacePoint>> {
    for &a in alpha_grid {
        check_probability("alpha grid value", a)?;
    }
    for &m in mu_grid {
        if !(m > 0.0 && m <= 1.0) {
            return Err(Error::Domain {
                what: "mu grid value (ratios need mu > 0)",
                value: m,
                lo: 0.0,
                hi: 1.0,
            });
        }
    }
    Ok(alpha_grid
        .par_iter()
        .flat_map_iter(|&a| mu_grid.iter().map(move |&m| SurfacePoint::at(a, m)))
        .collect())
}

/// Fraction of surface points where `f` exceeds `threshold`.
pub fn area_fraction(
    points: &[SurfacePoint],
    f: impl Fn(&SurfacePoint) -> f64,
    threshold: f64,
) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().filter(|p| f(p) > threshold).count() as f64 / points.len() as f64
}
