//! AAA key size over Rayleigh fading versus an ideal reciprocal-channel
//! key generator.
//!
//! Reciprocal baseline: per coherence period both users estimate the shared
//! gain `h ~ CN(0,1)` from `S` unit pilots at power `p` (MMSE), giving
//! `C₁ = log₂((Sp+1)²/(2Sp+1))` key bits per period and `L₁ = γ M C₁`.
//!
//! AAA: a packet of `S` information symbols at rate `R` is lost at Bob when
//! `R > log₂(1+p|h|²)` and at Eve when `R > log₂(1+pγ_m²|g|²)`. Over `M`
//! periods, `L₂ = SR (1 − μ_U^M)(1 − ∏(1 − μ_{E,m}))`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equivocation::eps_independent;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::stats::Moments;

/// Relative tolerance under which `L₁` and `L₂` are reported as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

const MC_BLOCK: u64 = 16_384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonParams {
    /// Pilot (and information) symbols per half period.
    pub s: usize,
    /// Symbol power relative to unit noise.
    pub p: f64,
    /// Coherence periods.
    pub m: usize,
    /// Rate in bits per information symbol.
    pub r: f64,
    /// Key-generation efficiency of the reciprocal method.
    pub gamma: f64,
    /// Eve's large-scale amplitude factor per period (length `m`).
    pub gamma_m: Vec<f64>,
}

impl ComparisonParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.s == 0 {
            return bad("S must be at least 1".into());
        }
        if self.p.is_nan() || self.p <= 0.0 {
            return bad(format!("power p must be positive, got {}", self.p));
        }
        if self.m == 0 {
            return bad("M must be at least 1".into());
        }
        if self.r.is_nan() || self.r <= 0.0 {
            return bad(format!("rate R must be positive, got {}", self.r));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!(
                "efficiency gamma must be in (0, 1], got {}",
                self.gamma
            ));
        }
        if self.gamma_m.len() != self.m {
            return bad(format!(
                "{} Eve amplitude factors given for M = {}",
                self.gamma_m.len(),
                self.m
            ));
        }
        if let Some(g) = self.gamma_m.iter().find(|g| g.is_nan() || **g <= 0.0) {
            return bad(format!("Eve amplitude factors must be positive, got {g}"));
        }
        Ok(())
    }

    /// Raw AAA key size `S·R`.
    pub fn raw_key_bits(&self) -> f64 {
        self.s as f64 * self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preferred {
    #[serde(rename = "AAA")]
    Aaa,
    Reciprocal,
    Tie,
}

impl std::fmt::Display for Preferred {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preferred::Aaa => "AAA",
            Preferred::Reciprocal => "Reciprocal",
            Preferred::Tie => "Tie",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "mu_U")]
    pub mu_u: f64,
    #[serde(rename = "mu_E")]
    pub mu_e: Vec<f64>,
    #[serde(rename = "eps_M")]
    pub eps_m: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    pub preferred: Preferred,
    /// The reciprocal method wins on a single packet's payload; AAA can
    /// close the gap by cascading payloads from several periods.
    pub cascade_advised: bool,
}

/// `C₁ = log₂((Sp+1)² / (2Sp+1))` bits per coherence period.
pub fn c1(s: usize, p: f64) -> f64 {
    let sp = s as f64 * p;
    // log₂(1 + S²p²/(2Sp+1)), same value without cancellation at small Sp
    (sp * sp / (2.0 * sp + 1.0)).ln_1p() / std::f64::consts::LN_2
}

/// Upper bound `log₂(1 + Sp/2)` on [`c1`], tight when `2Sp ≫ 1`.
pub fn c1_upper(s: usize, p: f64) -> f64 {
    (0.5 * s as f64 * p).ln_1p() / std::f64::consts::LN_2
}

/// `L₁ = γ M C₁`.
pub fn l1(params: &ComparisonParams) -> f64 {
    params.gamma * params.m as f64 * c1(params.s, params.p)
}

/// Packet loss at Bob: `1 − exp(−(2^R − 1)/p)`.
pub fn mu_u(r: f64, p: f64) -> f64 {
    -(-(r.exp2() - 1.0) / p).exp_m1()
}

/// High-power approximation `(2^R − 1)/p` of [`mu_u`].
pub fn mu_u_high_power(r: f64, p: f64) -> f64 {
    (r.exp2() - 1.0) / p
}

/// Packet loss at Eve: `1 − exp(−(2^R − 1)/(p γ_m²))`.
pub fn mu_e(r: f64, p: f64, gamma_m: f64) -> f64 {
    mu_u(r, p * gamma_m * gamma_m)
}

/// `L₂ = SR (1 − μ_U^M)(1 − ∏(1 − μ_{E,m}))` with `M = mu_e.len()`.
pub fn l2(s: usize, r: f64, mu_u: f64, mu_e: &[f64]) -> Result<f64> {
    let m = i32::try_from(mu_e.len()).map_err(|_| Error::Config("too many periods".into()))?;
    let delivered = 1.0 - mu_u.powi(m);
    Ok(s as f64 * r * delivered * eps_independent(mu_e, 1)?)
}

/// Evaluates both methods and picks the larger key.
pub fn compare(params: &ComparisonParams) -> Result<ComparisonResult> {
    params.validate()?;
    let c1 = c1(params.s, params.p);
    let l1 = params.gamma * params.m as f64 * c1;
    let mu_u = mu_u(params.r, params.p);
    let mu_e: Vec<f64> = params
        .gamma_m
        .iter()
        .map(|&g| mu_e(params.r, params.p, g))
        .collect();
    let eps_m = eps_independent(&mu_e, 1)?;
    let l2 = l2(params.s, params.r, mu_u, &mu_e)?;
    let preferred = prefer(l1, l2);
    Ok(ComparisonResult {
        c1,
        l1,
        mu_u,
        mu_e,
        eps_m,
        l2,
        preferred,
        cascade_advised: preferred == Preferred::Reciprocal,
    })
}

fn prefer(l1: f64, l2: f64) -> Preferred {
    if (l1 - l2).abs() <= TIE_TOLERANCE * l1.abs().max(l2.abs()) {
        Preferred::Tie
    } else if l2 > l1 {
        Preferred::Aaa
    } else {
        Preferred::Reciprocal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    pub preferred: Preferred,
}

/// [`compare`] for each `M` in `periods`, with Eve's amplitude factor held
/// at `gamma_e` in every period.
pub fn sweep_periods(
    base: &ComparisonParams,
    gamma_e: f64,
    periods: impl IntoIterator<Item = usize>,
) -> Result<Vec<SweepRow>> {
    periods
        .into_iter()
        .map(|m| {
            let params = ComparisonParams {
                m,
                gamma_m: vec![gamma_e; m],
                ..base.clone()
            };
            let res = compare(&params)?;
            Ok(SweepRow {
                m,
                l1: res.l1,
                l2: res.l2,
                preferred: res.preferred,
            })
        })
        .collect()
}

/// First `M` in the sweep at which `L₁` exceeds `L₂`.
pub fn crossover(rows: &[SweepRow]) -> Option<usize> {
    rows.iter()
        .find(|r| r.preferred == Preferred::Reciprocal)
        .map(|r| r.m)
}

fn complex_normal(rng: &mut Rng) -> (f64, f64) {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    (
        re * std::f64::consts::FRAC_1_SQRT_2,
        im * std::f64::consts::FRAC_1_SQRT_2,
    )
}

/// Empirical second moments of the two users' MMSE channel estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmseMoments {
    /// `E|ĥ|²`, target `Sp/(Sp+1)`.
    pub sigma_hhat_sq: f64,
    /// `E|ĥ − h|²`, target `1/(Sp+1)`.
    pub sigma_dh_sq: f64,
    /// `Re E{ĥ ĥ′*}`, target `S²p²/(Sp+1)²`.
    pub cross_corr: f64,
    /// `Im E{ĥ ĥ′*}`, target 0.
    pub cross_corr_im: f64,
    /// `E|ĥ′|²`.
    pub sigma_hhat_prime_sq: f64,
    /// `log₂ σ²_ĥ − log₂ σ̄²` from the empirical moments, target `C₁`.
    pub c1_emp: f64,
    pub trials: u64,
}

/// Simulates `h ~ CN(0,1)`, both pilot directions with unit pilots and
/// unit-variance noise, forms `ĥ = √p/(Sp+1) Σ y_s` and `ĥ′` likewise, and
/// returns their empirical moments.
pub fn mc_validate_mmse(s: usize, p: f64, trials: u64, seed: u64) -> Result<MmseMoments> {
    if trials == 0 {
        return Err(Error::Config("Monte Carlo needs at least one trial".into()));
    }
    if s == 0 || p.is_nan() || p < 0.0 {
        return Err(Error::Config(format!(
            "need S >= 1 and p >= 0, got S = {s}, p = {p}"
        )));
    }
    let sp = s as f64 * p;
    let gain = p.sqrt() / (sp + 1.0);

    let estimate = |rng: &mut Rng, h: (f64, f64)| {
        let mut acc = (0.0, 0.0);
        for _ in 0..s {
            let w = complex_normal(rng);
            acc.0 += p.sqrt() * h.0 + w.0;
            acc.1 += p.sqrt() * h.1 + w.1;
        }
        (gain * acc.0, gain * acc.1)
    };

    let sums = rng::blocks(trials, MC_BLOCK)
        .into_par_iter()
        .map(|(block, count)| {
            let mut rng = rng::stream(seed, block);
            let mut m = [Moments::default(); 5];
            for _ in 0..count {
                let h = complex_normal(&mut rng);
                let a = estimate(&mut rng, h);
                let b = estimate(&mut rng, h);
                m[0].push(a.0 * a.0 + a.1 * a.1);
                m[1].push((a.0 - h.0).powi(2) + (a.1 - h.1).powi(2));
                // a · conj(b)
                m[2].push(a.0 * b.0 + a.1 * b.1);
                m[3].push(a.1 * b.0 - a.0 * b.1);
                m[4].push(b.0 * b.0 + b.1 * b.1);
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold([Moments::default(); 5], |acc, m| {
            std::array::from_fn(|k| acc[k].merge(m[k]))
        });

    let sigma_hhat_sq = sums[0].mean;
    let cross_corr = sums[2].mean;
    let cross_corr_im = sums[3].mean;
    let sigma_hhat_prime_sq = sums[4].mean;
    let c1_emp = if sigma_hhat_sq > 0.0 && sigma_hhat_prime_sq > 0.0 {
        let cond = sigma_hhat_sq
            - (cross_corr * cross_corr + cross_corr_im * cross_corr_im) / sigma_hhat_prime_sq;
        sigma_hhat_sq.log2() - cond.log2()
    } else {
        0.0
    };
    Ok(MmseMoments {
        sigma_hhat_sq,
        sigma_dh_sq: sums[1].mean,
        cross_corr,
        cross_corr_im,
        sigma_hhat_prime_sq,
        c1_emp,
        trials,
    })
}

/// Empirical outage probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageEstimate {
    pub rate: f64,
    pub std_err: f64,
    pub trials: u64,
}

/// Fraction of Rayleigh draws `g ~ CN(0,1)` with `log₂(1 + pγ²|g|²) < R`.
pub fn mc_validate_outage(
    r: f64,
    p: f64,
    gamma_m: f64,
    trials: u64,
    seed: u64,
) -> Result<OutageEstimate> {
    if trials == 0 {
        return Err(Error::Config("Monte Carlo needs at least one trial".into()));
    }
    let snr = p * gamma_m * gamma_m;
    let outages: u64 = rng::blocks(trials, MC_BLOCK)
        .into_par_iter()
        .map(|(block, count)| {
            let mut rng = rng::stream(seed, block);
            (0..count)
                .filter(|_| {
                    let g = complex_normal(&mut rng);
                    (snr * (g.0 * g.0 + g.1 * g.1)).ln_1p() / std::f64::consts::LN_2 < r
                })
                .count() as u64
        })
        .sum();
    let rate = outages as f64 / trials as f64;
    Ok(OutageEstimate {
        rate,
        std_err: (rate * (1.0 - rate) / trials as f64).sqrt(),
        trials,
    })
}
