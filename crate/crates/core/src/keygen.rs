//! The AAA key accumulator.
//!
//! Both parties keep a running XOR of the selected bits of every packet they
//! exchange. The state is one `L`-bit key plus a counter, an update is one
//! XOR, and the final key does not depend on the order packets arrive in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitVec;
use crate::rng;
use crate::sources::{self, MarkovParams, ObservationSeq};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyState {
    pub key: BitVec,
    pub absorbed: usize,
}

impl KeyState {
    pub fn new(key_len: usize) -> Self {
        Self {
            key: BitVec::zeros(key_len),
            absorbed: 0,
        }
    }

    pub fn key_len(&self) -> usize {
        self.key.len()
    }

    /// `key ⊕ packet_bits`, with the packet counter advanced.
    pub fn absorb(&self, packet_bits: &BitVec) -> Result<KeyState> {
        let mut next = self.clone();
        next.absorb_in_place(packet_bits)?;
        Ok(next)
    }

    pub fn absorb_in_place(&mut self, packet_bits: &BitVec) -> Result<()> {
        self.key.xor_assign(packet_bits)?;
        self.absorbed += 1;
        Ok(())
    }

    /// Selects `L` bits from a raw payload with the public per-packet
    /// selection seed `PRF(master_seed, absorbed)` and absorbs them.
    pub fn absorb_payload(&self, payload: &BitVec, master_seed: u64) -> Result<KeyState> {
        let seed = sources::packet_selection_seed(master_seed, self.absorbed as u64);
        let bits = sources::select_bits(payload, self.key_len(), seed)?;
        self.absorb(&bits)
    }
}

/// Concatenates `payloads` in order and selects `target_len` bits from the
/// result, for keys longer than a single payload.
pub fn cascade(payloads: &[BitVec], target_len: usize, seed: u64) -> Result<BitVec> {
    let total: usize = payloads.iter().map(BitVec::len).sum();
    if total < target_len {
        return Err(Error::LengthMismatch {
            expected: target_len,
            found: total,
        });
    }
    let joined = payloads
        .iter()
        .fold(BitVec::zeros(0), |acc, p| acc.concat(p));
    sources::select_bits(&joined, target_len, seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionReport {
    pub alice_key: BitVec,
    pub bob_key: BitVec,
    pub eve_observations: ObservationSeq,
    pub n: usize,
    pub missed_count: usize,
}

impl SessionReport {
    pub fn keys_agree(&self) -> bool {
        self.alice_key == self.bob_key
    }
}

/// Simulates one key-generation session: a Markov packet trace is absorbed
/// by Alice and Bob alike while Eve sees it through per-packet erasures.
pub fn run_session(params: &MarkovParams, seed: u64) -> Result<SessionReport> {
    params.validate()?;
    let trace = sources::gen_trace(params, rng::derive_seed(seed, 0))?;
    let mu = params.erasure_probs()?;
    let eve = sources::apply_erasure(&trace, &mu, rng::derive_seed(seed, 1))?;

    let mut alice = KeyState::new(params.key_len);
    let mut bob = KeyState::new(params.key_len);
    for packet in &trace {
        alice.absorb_in_place(packet)?;
        bob.absorb_in_place(packet)?;
    }
    Ok(SessionReport {
        alice_key: alice.key,
        bob_key: bob.key,
        missed_count: eve.missed_count(),
        eve_observations: eve,
        n: params.packets,
    })
}
