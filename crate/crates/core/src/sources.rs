//! Packet-bit sources and Eve's view of them.
//!
//! A trace is `n` packets of `L` selected bits each. Bit lane `l` follows a
//! binary Markov chain: the first bit is uniform and each later bit repeats
//! its predecessor with probability `α`. Eve misses each packet as a whole
//! with probability `μᵢ`; otherwise she sees every bit of it exactly.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gf2::{BitMatrix, BitVec};
use crate::rng::{self, Rng};

/// Per-packet erasure probabilities at Eve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Erasure {
    Uniform(f64),
    PerPacket(Vec<f64>),
}

impl Erasure {
    /// Expands to one probability per packet.
    pub fn per_packet(&self, n: usize) -> Result<Vec<f64>> {
        let v = match self {
            Erasure::Uniform(mu) => vec![*mu; n],
            Erasure::PerPacket(v) => {
                if v.len() != n {
                    return Err(Error::Config(format!(
                        "{} erasure probabilities given for {n} packets",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        for &mu in &v {
            check_probability("erasure probability", mu)?;
        }
        Ok(v)
    }
}

impl From<f64> for Erasure {
    fn from(mu: f64) -> Self {
        Erasure::Uniform(mu)
    }
}

impl From<Vec<f64>> for Erasure {
    fn from(v: Vec<f64>) -> Self {
        Erasure::PerPacket(v)
    }
}

impl From<&[f64]> for Erasure {
    fn from(v: &[f64]) -> Self {
        Erasure::PerPacket(v.to_vec())
    }
}

pub(crate) fn check_probability(what: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: p,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

pub(crate) fn check_persistence(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "persistence probability alpha (must be in (0, 1])",
            value: alpha,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

/// Markov packet model: key length, packet count, persistence and erasure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovParams {
    pub key_len: usize,
    pub packets: usize,
    pub alpha: f64,
    pub mu: Erasure,
}

impl MarkovParams {
    pub fn new(key_len: usize, packets: usize, alpha: f64, mu: impl Into<Erasure>) -> Self {
        Self {
            key_len,
            packets,
            alpha,
            mu: mu.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.key_len == 0 {
            return Err(Error::Config("key length must be at least 1".into()));
        }
        check_persistence(self.alpha).map_err(|e| Error::Config(e.to_string()))?;
        self.mu
            .per_packet(self.packets)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn erasure_probs(&self) -> Result<Vec<f64>> {
        self.mu.per_packet(self.packets)
    }
}

/// Generates `n` packets of `L` bits under the Markov model.
pub fn gen_trace(params: &MarkovParams, seed: u64) -> Result<Vec<BitVec>> {
    params.validate()?;
    let mut rng = rng::stream(seed, 0);
    Ok(trace_from_rng(
        &mut rng,
        params.key_len,
        params.packets,
        params.alpha,
    ))
}

pub(crate) fn trace_from_rng(rng: &mut Rng, key_len: usize, n: usize, alpha: f64) -> Vec<BitVec> {
    let mut trace = Vec::with_capacity(n);
    if n == 0 {
        return trace;
    }
    let words = (0..key_len.div_ceil(64))
        .map(|_| rng.random::<u64>())
        .collect();
    let mut current = BitVec::from_words(key_len, words);
    let flip = 1.0 - alpha;
    trace.push(current.clone());
    for _ in 1..n {
        if flip > 0.0 {
            for l in 0..key_len {
                if rng.random_bool(flip) {
                    current.flip(l);
                }
            }
        }
        trace.push(current.clone());
    }
    trace
}

/// One bit lane of the Markov source together with Eve's view of it.
pub(crate) fn sample_lane(rng: &mut Rng, alpha: f64, mus: &[f64], out: &mut Vec<Option<bool>>) {
    out.clear();
    let mut bit = rng.random_bool(0.5);
    for (i, &mu) in mus.iter().enumerate() {
        if i > 0 && !rng.random_bool(alpha) {
            bit = !bit;
        }
        let erased = rng.random_bool(mu);
        out.push(if erased { None } else { Some(bit) });
    }
}

/// Eve's record of one packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observation {
    Observed(BitVec),
    Erased,
}

impl Observation {
    pub fn is_erased(&self) -> bool {
        matches!(self, Observation::Erased)
    }
}

/// Eve's observation sequence `eⁿ`, one entry per packet.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObservationSeq {
    pub entries: Vec<Observation>,
}

impl ObservationSeq {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn missed_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_erased()).count()
    }

    /// Restriction to bit lane `l`: `None` for erased packets.
    pub fn lane(&self, l: usize) -> Vec<Option<bool>> {
        self.entries
            .iter()
            .map(|e| match e {
                Observation::Observed(bits) => Some(bits.get(l)),
                Observation::Erased => None,
            })
            .collect()
    }
}

impl Serialize for ObservationSeq {
    /// Serialized as a list with `null` for erased packets.
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.entries.iter().map(|e| match e {
            Observation::Observed(bits) => Some(bits),
            Observation::Erased => None,
        }))
    }
}

impl<'de> Deserialize<'de> for ObservationSeq {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<Option<BitVec>> = Vec::deserialize(d)?;
        Ok(ObservationSeq {
            entries: raw
                .into_iter()
                .map(|e| e.map_or(Observation::Erased, Observation::Observed))
                .collect(),
        })
    }
}

/// Erases each packet independently with probability `mu[i]`.
pub fn apply_erasure(trace: &[BitVec], mu: &[f64], seed: u64) -> Result<ObservationSeq> {
    if mu.len() != trace.len() {
        return Err(Error::LengthMismatch {
            expected: trace.len(),
            found: mu.len(),
        });
    }
    for &m in mu {
        check_probability("erasure probability", m)?;
    }
    let mut rng = rng::stream(seed, 1);
    Ok(erase_with(&mut rng, trace, mu))
}

pub(crate) fn erase_with(rng: &mut Rng, trace: &[BitVec], mu: &[f64]) -> ObservationSeq {
    let entries = trace
        .iter()
        .zip(mu)
        .map(|(packet, &m)| {
            if rng.random_bool(m) {
                Observation::Erased
            } else {
                Observation::Observed(packet.clone())
            }
        })
        .collect();
    ObservationSeq { entries }
}

/// Distribution of the number of unknown bits `lᵢ` in a leaked packet.
///
/// Text forms: `fixed:k`, `uniform:a..b` (inclusive), `binomial:N,q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeakDist {
    Fixed(usize),
    Uniform { lo: usize, hi: usize },
    Binomial { trials: usize, q: f64 },
}

impl LeakDist {
    pub fn max_value(&self) -> usize {
        match *self {
            LeakDist::Fixed(k) => k,
            LeakDist::Uniform { hi, .. } => hi,
            LeakDist::Binomial { trials, .. } => trials,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LeakDist::Fixed(k) => k as f64,
            LeakDist::Uniform { lo, hi } => (lo + hi) as f64 / 2.0,
            LeakDist::Binomial { trials, q } => trials as f64 * q,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            LeakDist::Fixed(_) => 0.0,
            LeakDist::Uniform { lo, hi } => {
                let k = (hi - lo + 1) as f64;
                (k * k - 1.0) / 12.0
            }
            LeakDist::Binomial { trials, q } => trials as f64 * q * (1.0 - q),
        }
    }

    /// `P(lᵢ ≥ 1)`.
    pub fn prob_positive(&self) -> f64 {
        match *self {
            LeakDist::Fixed(k) => f64::from(u8::from(k >= 1)),
            LeakDist::Uniform { lo, hi } => {
                if lo >= 1 {
                    1.0
                } else {
                    hi as f64 / (hi + 1) as f64
                }
            }
            LeakDist::Binomial { trials, q } => 1.0 - (1.0 - q).powi(trials as i32),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        match *self {
            LeakDist::Fixed(k) => k,
            LeakDist::Uniform { lo, hi } => rng.random_range(lo..=hi),
            LeakDist::Binomial { trials, q } => Binomial::new(trials as u64, q)
                .expect("validated binomial parameters")
                .sample(rng) as usize,
        }
    }

    pub fn validate(&self, key_len: usize) -> Result<()> {
        match *self {
            LeakDist::Uniform { lo, hi } if lo > hi => {
                return Err(Error::Config(format!("uniform:{lo}..{hi} is empty")))
            }
            LeakDist::Binomial { q, .. } if !(0.0..=1.0).contains(&q) => {
                return Err(Error::Config(format!(
                    "binomial success probability {q} outside [0, 1]"
                )))
            }
            _ => {}
        }
        if self.max_value() > key_len {
            return Err(Error::Config(format!(
                "leakage distribution {self} can exceed the key length {key_len}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for LeakDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeakDist::Fixed(k) => write!(f, "fixed:{k}"),
            LeakDist::Uniform { lo, hi } => write!(f, "uniform:{lo}..{hi}"),
            LeakDist::Binomial { trials, q } => write!(f, "binomial:{trials},{q:?}"),
        }
    }
}

impl FromStr for LeakDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse leakage distribution {s:?}"));
        let (kind, arg) = s.trim().split_once(':').ok_or_else(bad)?;
        match kind {
            "fixed" => Ok(LeakDist::Fixed(arg.trim().parse().map_err(|_| bad())?)),
            "uniform" => {
                let (lo, hi) = arg.split_once("..").ok_or_else(bad)?;
                Ok(LeakDist::Uniform {
                    lo: lo.trim().parse().map_err(|_| bad())?,
                    hi: hi.trim().parse().map_err(|_| bad())?,
                })
            }
            "binomial" => {
                let (n, q) = arg.split_once(',').ok_or_else(bad)?;
                Ok(LeakDist::Binomial {
                    trials: n.trim().parse().map_err(|_| bad())?,
                    q: q.trim().parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Eve's residual uncertainty about one packet: `Δmᵢ = Aᵢ aᵢ`, with
/// `Aᵢ` an `L × lᵢ` matrix of full column rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRecord {
    pub matrix: BitMatrix,
    pub unknown_bits: usize,
}

impl LeakageRecord {
    /// The whole-packet erasure model as a leakage record: a missed packet
    /// leaves all `L` bits unknown (`A = I`), an intercepted one none.
    pub fn from_erasure(key_len: usize, missed: bool) -> Self {
        if missed {
            Self {
                matrix: BitMatrix::identity(key_len),
                unknown_bits: key_len,
            }
        } else {
            Self {
                matrix: BitMatrix::zeros(key_len, 0),
                unknown_bits: 0,
            }
        }
    }

    pub fn key_len(&self) -> usize {
        self.matrix.rows()
    }
}

/// Uniform sample from the `rows × cols` GF(2) matrices of rank `cols`,
/// by rejection.
pub(crate) fn sample_full_column_rank(rng: &mut Rng, rows: usize, cols: usize) -> BitMatrix {
    assert!(
        cols <= rows,
        "cannot have {cols} independent columns of length {rows}"
    );
    loop {
        let columns: Vec<BitVec> = (0..cols)
            .map(|_| {
                let words = (0..rows.div_ceil(64))
                    .map(|_| rng.random::<u64>())
                    .collect();
                BitVec::from_words(rows, words)
            })
            .collect();
        let m = BitMatrix::from_columns(rows, &columns).expect("column lengths match");
        if m.rank() == cols {
            return m;
        }
    }
}

pub(crate) fn leakage_from_rng(rng: &mut Rng, key_len: usize, dist: &LeakDist) -> LeakageRecord {
    let l = dist.sample(rng);
    LeakageRecord {
        matrix: sample_full_column_rank(rng, key_len, l),
        unknown_bits: l,
    }
}

/// Draws `n` leakage records: `lᵢ ~ dist`, then `Aᵢ` uniform among full
/// column rank `L × lᵢ` matrices.
pub fn gen_leakage(
    key_len: usize,
    dist: &LeakDist,
    n: usize,
    seed: u64,
) -> Result<Vec<LeakageRecord>> {
    dist.validate(key_len)?;
    let mut rng = rng::stream(seed, 2);
    Ok((0..n)
        .map(|_| leakage_from_rng(&mut rng, key_len, dist))
        .collect())
}

/// Seed for the public bit selection of packet `index` under `master`.
pub fn packet_selection_seed(master: u64, index: u64) -> u64 {
    rng::derive_seed(master, index)
}

/// Pseudorandom selection of `len` distinct payload positions.
///
/// Positions are drawn by a partial Fisher-Yates shuffle, so output bit `j`
/// is `payload[pos_j]` and raising `len` only appends positions: the result
/// for a shorter length is always a prefix of the result for a longer one.
pub fn select_bits(payload: &BitVec, len: usize, seed: u64) -> Result<BitVec> {
    if payload.len() < len {
        return Err(Error::LengthMismatch {
            expected: len,
            found: payload.len(),
        });
    }
    let positions = selection_positions(payload.len(), len, seed);
    Ok(BitVec::from_bools(
        &positions
            .iter()
            .map(|&p| payload.get(p))
            .collect::<Vec<_>>(),
    ))
}

pub fn selection_positions(payload_len: usize, len: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, 3);
    let mut idx: Vec<usize> = (0..payload_len).collect();
    for j in 0..len {
        let k = rng.random_range(j..payload_len);
        idx.swap(j, k);
    }
    idx.truncate(len);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_one_repeats_packets() {
        let p = MarkovParams::new(100, 20, 1.0, 0.0);
        let t = gen_trace(&p, 3).unwrap();
        assert_eq!(t.len(), 20);
        assert!(t.iter().all(|x| *x == t[0]));
    }

    #[test]
    fn trace_is_reproducible() {
        let p = MarkovParams::new(70, 5, 0.7, 0.3);
        assert_eq!(gen_trace(&p, 9).unwrap(), gen_trace(&p, 9).unwrap());
        assert_ne!(gen_trace(&p, 9).unwrap(), gen_trace(&p, 10).unwrap());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(matches!(
            gen_trace(&MarkovParams::new(8, 3, 0.0, 0.1), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            gen_trace(&MarkovParams::new(8, 3, 0.5, 1.5), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            gen_trace(&MarkovParams::new(8, 3, 0.5, vec![0.1, 0.2]), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            gen_trace(&MarkovParams::new(0, 3, 0.5, 0.1), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lag_one_agreement_rates() {
        // α = ½ over 10⁵ pairs, and α = 0.9 on a single lane.
        for (alpha, key_len, n) in [(0.5, 1000usize, 101usize), (0.9, 1, 100_001)] {
            let t = gen_trace(&MarkovParams::new(key_len, n, alpha, 0.0), 11).unwrap();
            let mut agree = 0u64;
            let mut total = 0u64;
            for w in t.windows(2) {
                for l in 0..key_len {
                    agree += u64::from(w[0].get(l) == w[1].get(l));
                    total += 1;
                }
            }
            let rate = agree as f64 / total as f64;
            let sigma = (alpha * (1.0 - alpha) / total as f64).sqrt();
            assert!(
                (rate - alpha).abs() < 3.0 * sigma,
                "alpha {alpha}: rate {rate}"
            );
        }
    }

    #[test]
    fn independent_pairs_are_uniform() {
        let t = gen_trace(&MarkovParams::new(1000, 101, 0.5, 0.0), 5).unwrap();
        let mut counts = [0u64; 4];
        for w in t.windows(2) {
            for l in 0..1000 {
                counts[usize::from(w[0].get(l)) * 2 + usize::from(w[1].get(l))] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let sigma = (0.25 * 0.75 / total as f64).sqrt();
        for c in counts {
            assert!(
                (c as f64 / total as f64 - 0.25).abs() < 3.0 * sigma,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn erasure_extremes_and_fidelity() {
        let t = gen_trace(&MarkovParams::new(16, 50, 0.8, 0.0), 1).unwrap();
        let all = apply_erasure(&t, &[0.0; 50], 2).unwrap();
        assert_eq!(all.missed_count(), 0);
        let none = apply_erasure(&t, &[1.0; 50], 2).unwrap();
        assert_eq!(none.missed_count(), 50);
        let some = apply_erasure(&t, &[0.5; 50], 2).unwrap();
        for (obs, packet) in some.entries.iter().zip(&t) {
            if let Observation::Observed(bits) = obs {
                assert_eq!(bits, packet);
            }
        }
        assert!(apply_erasure(&t, &[0.5; 49], 2).is_err());
    }

    #[test]
    fn erasure_rate() {
        let n = 100_000;
        let t = vec![BitVec::zeros(1); n];
        let obs = apply_erasure(&t, &vec![0.3; n], 8).unwrap();
        let frac = obs.missed_count() as f64 / n as f64;
        let sigma = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((frac - 0.3).abs() < 3.0 * sigma, "{frac}");
    }

    #[test]
    fn observation_json() {
        let seq = ObservationSeq {
            entries: vec![
                Observation::Observed(BitVec::from_bit_str("0101").unwrap()),
                Observation::Erased,
            ],
        };
        let json = serde_json::to_string(&seq).unwrap();
        assert_eq!(json, r#"[{"len":4,"hex":"a"},null]"#);
        let back: ObservationSeq = serde_json::from_str(&json).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn leak_dist_parsing() {
        assert_eq!("fixed:3".parse::<LeakDist>().unwrap(), LeakDist::Fixed(3));
        assert_eq!(
            "uniform:0..8".parse::<LeakDist>().unwrap(),
            LeakDist::Uniform { lo: 0, hi: 8 }
        );
        assert_eq!(
            "binomial:8,0.25".parse::<LeakDist>().unwrap(),
            LeakDist::Binomial { trials: 8, q: 0.25 }
        );
        assert!("gauss:1".parse::<LeakDist>().is_err());
        assert!("uniform:3".parse::<LeakDist>().is_err());
        for d in ["fixed:3", "uniform:0..8", "binomial:8,0.25"] {
            assert_eq!(d.parse::<LeakDist>().unwrap().to_string(), d);
        }
        assert!(LeakDist::Fixed(9).validate(8).is_err());
        assert!(LeakDist::Uniform { lo: 3, hi: 2 }.validate(8).is_err());
    }

    #[test]
    fn leakage_extremes() {
        let recs = gen_leakage(6, &LeakDist::Fixed(0), 3, 1).unwrap();
        assert!(recs
            .iter()
            .all(|r| r.matrix.cols() == 0 && r.matrix.rank() == 0));
        let recs = gen_leakage(6, &LeakDist::Fixed(6), 20, 1).unwrap();
        assert!(recs.iter().all(|r| r.matrix.rank() == 6));
    }

    #[test]
    fn leakage_rank_matches_unknown_bits() {
        let dist = LeakDist::Uniform { lo: 0, hi: 10 };
        for r in gen_leakage(10, &dist, 200, 4).unwrap() {
            assert_eq!(r.matrix.cols(), r.unknown_bits);
            assert_eq!(r.matrix.rank(), r.unknown_bits);
        }
    }

    #[test]
    fn leakage_mean() {
        let dist = LeakDist::Uniform { lo: 0, hi: 4 };
        let n = 10_000;
        let recs = gen_leakage(4, &dist, n, 77).unwrap();
        let mean = recs.iter().map(|r| r.unknown_bits as f64).sum::<f64>() / n as f64;
        let se = (dist.variance() / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn erasure_as_leakage() {
        assert_eq!(LeakageRecord::from_erasure(5, true).matrix.rank(), 5);
        assert_eq!(LeakageRecord::from_erasure(5, false).unknown_bits, 0);
    }

    #[test]
    fn select_bits_contract() {
        let payload = BitVec::from_bit_str("10110010").unwrap();
        let full = select_bits(&payload, 8, 5).unwrap();
        assert_eq!(full.count_ones(), payload.count_ones());
        let mut pos = selection_positions(8, 8, 5);
        pos.sort_unstable();
        assert_eq!(pos, (0..8).collect::<Vec<_>>());

        assert_eq!(
            select_bits(&payload, 4, 42).unwrap(),
            select_bits(&payload, 4, 42).unwrap()
        );
        assert!(matches!(
            select_bits(&payload, 9, 1),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn select_bits_golden() {
        let payload = BitVec::from_bit_str("10110010").unwrap();
        assert_eq!(selection_positions(8, 4, 42), GOLDEN_POSITIONS);
        assert_eq!(
            select_bits(&payload, 4, 42).unwrap().to_bit_string(),
            GOLDEN_BITS
        );
    }

    const GOLDEN_POSITIONS: [usize; 4] = [4, 3, 6, 5];
    const GOLDEN_BITS: &str = "0110";

    #[test]
    fn selection_is_prefix_consistent() {
        let long = selection_positions(200, 150, 3);
        for len in [0, 1, 17, 64, 149] {
            assert_eq!(selection_positions(200, len, 3), long[..len]);
        }
    }
}
