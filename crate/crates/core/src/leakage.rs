//! Partial leakage: Eve's residual error space and its rank.
//!
//! With leakage records `Δmᵢ = Aᵢ aᵢ`, Eve's error in the accumulated key is
//! `A⁽ⁿ⁾ a⁽ⁿ⁾` with `A⁽ⁿ⁾ = [A₁, …, Aₙ]`, and the key keeps at least
//! `rank A⁽ⁿ⁾` bits of equivocation. The state below tracks that rank with a
//! reduced basis of the column space (at most `L` vectors) instead of storing
//! every column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitVec;
use crate::rng;
use crate::sources::{leakage_from_rng, LeakDist, LeakageRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakageState {
    key_len: usize,
    /// `basis[p]` has its lowest set bit at row `p`.
    basis: Vec<Option<BitVec>>,
    rank: usize,
    absorbed: usize,
    columns_seen: usize,
}

impl LeakageState {
    pub fn new(key_len: usize) -> Self {
        Self {
            key_len,
            basis: vec![None; key_len],
            rank: 0,
            absorbed: 0,
            columns_seen: 0,
        }
    }

    pub fn key_len(&self) -> usize {
        self.key_len
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn absorbed(&self) -> usize {
        self.absorbed
    }

    /// Total columns `Σ lᵢ` absorbed so far.
    pub fn columns_seen(&self) -> usize {
        self.columns_seen
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.key_len
    }

    /// Appends the columns of `rec.matrix` to the accumulated matrix.
    pub fn absorb_leak(&mut self, rec: &LeakageRecord) -> Result<()> {
        if rec.matrix.rows() != self.key_len {
            return Err(Error::LengthMismatch {
                expected: self.key_len,
                found: rec.matrix.rows(),
            });
        }
        for col in rec.matrix.columns() {
            self.insert(col);
        }
        self.absorbed += 1;
        self.columns_seen += rec.matrix.cols();
        Ok(())
    }

    /// Inserts one column; returns whether it raised the rank.
    fn insert(&mut self, mut v: BitVec) -> bool {
        if self.is_full_rank() {
            return false;
        }
        while let Some(p) = v.first_one() {
            match &self.basis[p] {
                Some(b) => v ^= b,
                None => {
                    self.basis[p] = Some(v);
                    self.rank += 1;
                    return true;
                }
            }
        }
        false
    }
}

/// Lower bound on the key's equivocation in bits: the accumulated rank.
pub fn equiv_lower_bound(state: &LeakageState) -> usize {
    state.rank()
}

/// `p̂_n`: fraction of trials whose accumulated rank reached `L` within `n`
/// records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnRow {
    pub n: usize,
    pub p_hat: f64,
    pub std_err: f64,
}

const PN_BLOCK: u64 = 256;

/// Monte Carlo estimate of `p_n = P(r_n = L)` for `n = 1..=n_max`.
pub fn estimate_pn(
    key_len: usize,
    dist: &LeakDist,
    n_max: usize,
    trials: u64,
    seed: u64,
) -> Result<Vec<PnRow>> {
    if trials == 0 {
        return Err(Error::Config("Monte Carlo needs at least one trial".into()));
    }
    dist.validate(key_len)?;

    // first_full[k] = number of trials first reaching full rank at step k+1
    let first_full = rng::blocks(trials, PN_BLOCK)
        .into_par_iter()
        .map(|(block, count)| {
            let mut rng = rng::stream(seed, block);
            let mut hist = vec![0u64; n_max];
            for _ in 0..count {
                let mut state = LeakageState::new(key_len);
                for slot in hist.iter_mut() {
                    let rec = leakage_from_rng(&mut rng, key_len, dist);
                    state.absorb_leak(&rec).expect("records have L rows");
                    if state.is_full_rank() {
                        *slot += 1;
                        break;
                    }
                }
            }
            hist
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(vec![0u64; n_max], |mut acc, h| {
            acc.iter_mut().zip(h).for_each(|(a, b)| *a += b);
            acc
        });

    let mut reached = 0u64;
    Ok(first_full
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            reached += c;
            let p = reached as f64 / trials as f64;
            PnRow {
                n: k + 1,
                p_hat: p,
                std_err: (p * (1.0 - p) / trials as f64).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::BitMatrix;
    use crate::sources::gen_leakage;

    fn record(rows: &[&[u8]]) -> LeakageRecord {
        let matrix = BitMatrix::from_rows(rows).unwrap();
        LeakageRecord {
            unknown_bits: matrix.cols(),
            matrix,
        }
    }

    #[test]
    fn absorb_examples() {
        let mut s = LeakageState::new(3);
        s.absorb_leak(&LeakageRecord::from_erasure(3, false))
            .unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.absorbed(), 1);

        let mut s = LeakageState::new(4);
        s.absorb_leak(&LeakageRecord::from_erasure(4, true))
            .unwrap();
        assert_eq!(s.rank(), 4);
        assert_eq!(equiv_lower_bound(&s), 4);

        let mut s = LeakageState::new(3);
        let col = record(&[&[1], &[1], &[0]]);
        s.absorb_leak(&col).unwrap();
        s.absorb_leak(&col).unwrap();
        assert_eq!(s.rank(), 1);
        assert_eq!(s.columns_seen(), 2);
    }

    #[test]
    fn row_mismatch() {
        let mut s = LeakageState::new(4);
        assert!(matches!(
            s.absorb_leak(&record(&[&[1], &[0]])),
            Err(Error::LengthMismatch {
                expected: 4,
                found: 2
            })
        ));
    }

    #[test]
    fn lower_bound_fixture() {
        let mut s = LeakageState::new(8);
        assert_eq!(equiv_lower_bound(&s), 0);
        let rows: Vec<[u8; 3]> = (0..8)
            .map(|r| {
                [
                    u8::from(r == 0),
                    u8::from(r == 1),
                    u8::from(r == 0 || r == 5),
                ]
            })
            .collect();
        let refs: Vec<&[u8]> = rows.iter().map(|r| &r[..]).collect();
        s.absorb_leak(&record(&refs)).unwrap();
        assert_eq!(equiv_lower_bound(&s), 3);
    }

    #[test]
    fn incremental_matches_batch() {
        let recs = gen_leakage(12, &LeakDist::Binomial { trials: 4, q: 0.4 }, 40, 6).unwrap();
        let mut state = LeakageState::new(12);
        let mut batch = BitMatrix::zeros(12, 0);
        let mut last = 0;
        for r in &recs {
            state.absorb_leak(r).unwrap();
            batch = batch.concat_cols(&r.matrix).unwrap();
            assert_eq!(state.rank(), batch.rank());
            assert!(state.rank() >= last);
            last = state.rank();
        }
    }

    #[test]
    fn pn_extremes() {
        let rows = estimate_pn(6, &LeakDist::Fixed(6), 4, 200, 1).unwrap();
        assert!(rows.iter().all(|r| r.p_hat == 1.0));
        let rows = estimate_pn(6, &LeakDist::Fixed(0), 10, 200, 1).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.p_hat == 0.0 && r.std_err == 0.0));
        assert!(estimate_pn(6, &LeakDist::Fixed(7), 3, 10, 1).is_err());
        assert!(estimate_pn(6, &LeakDist::Fixed(1), 3, 0, 1).is_err());
    }

    /// P(rank = L after n uniform nonzero columns), by the rank Markov chain:
    /// a new column lies in a rank-r span with probability (2^r − 1)/(2^L − 1).
    fn full_rank_prob_single_columns(key_len: u32, n: usize) -> f64 {
        let total = (1u64 << key_len) as f64 - 1.0;
        let mut dist = vec![0.0; key_len as usize + 1];
        dist[0] = 1.0;
        for _ in 0..n {
            let mut next = vec![0.0; dist.len()];
            for (r, &p) in dist.iter().enumerate() {
                if r == key_len as usize {
                    next[r] += p;
                    continue;
                }
                let stay = ((1u64 << r) as f64 - 1.0) / total;
                next[r] += p * stay;
                next[r + 1] += p * (1.0 - stay);
            }
            dist = next;
        }
        dist[key_len as usize]
    }

    #[test]
    fn pn_matches_rank_chain() {
        let rows = estimate_pn(4, &LeakDist::Fixed(1), 10, 20_000, 3).unwrap();
        for r in &rows {
            let exact = full_rank_prob_single_columns(4, r.n);
            let tol = 4.0 * (exact * (1.0 - exact) / 20_000.0).sqrt() + 1e-12;
            assert!(
                (r.p_hat - exact).abs() <= tol,
                "n={} {} vs {}",
                r.n,
                r.p_hat,
                exact
            );
        }
        assert!(rows.windows(2).all(|w| w[0].p_hat <= w[1].p_hat));
    }
}
