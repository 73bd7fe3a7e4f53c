use proptest::prelude::*;

use aaa_core::baseline::{c1, c1_upper, l2, mu_e, mu_u};
use aaa_core::equivocation::{eta_dp, exact_eps, mc_eps};
use aaa_core::keygen::KeyState;
use aaa_core::sources::Erasure;
use aaa_core::{binary_entropy, rank, xor_into, BitMatrix, BitVec};

fn bitvec(len: usize) -> impl Strategy<Value = BitVec> {
    prop::collection::vec(any::<bool>(), len).prop_map(|b| BitVec::from_bools(&b))
}

fn same_len_triple() -> impl Strategy<Value = (BitVec, BitVec, BitVec)> {
    (0usize..200).prop_flat_map(|n| (bitvec(n), bitvec(n), bitvec(n)))
}

/// Number of distinct vectors spanned by the rows, by enumeration.
fn span_size(rows: &[u32]) -> usize {
    let mut seen = std::collections::HashSet::new();
    for mask in 0u32..(1 << rows.len()) {
        let v = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .fold(0u32, |acc, (_, r)| acc ^ r);
        seen.insert(v);
    }
    seen.len()
}

fn matrix_from_masks(masks: &[u32], cols: usize) -> BitMatrix {
    let rows: Vec<Vec<u8>> = masks
        .iter()
        .map(|m| (0..cols).map(|c| (m >> c & 1) as u8).collect())
        .collect();
    let refs: Vec<&[u8]> = rows.iter().map(Vec::as_slice).collect();
    BitMatrix::from_rows(&refs).unwrap()
}

/// `P(X₁⊕…⊕Xₙ = 0 | observations)` by summing over all 2ⁿ bit sequences.
fn eta_brute(lane: &[Option<bool>], alpha: f64) -> f64 {
    let n = lane.len();
    let (mut even, mut total) = (0.0, 0.0);
    for x in 0u32..(1 << n) {
        let bit = |i: usize| x >> i & 1 == 1;
        if (0..n).any(|i| lane[i].is_some_and(|b| b != bit(i))) {
            continue;
        }
        let p: f64 = 0.5
            * (1..n)
                .map(|i| {
                    if bit(i) == bit(i - 1) {
                        alpha
                    } else {
                        1.0 - alpha
                    }
                })
                .product::<f64>();
        total += p;
        if x.count_ones() % 2 == 0 {
            even += p;
        }
    }
    even / total
}

fn lane_strategy() -> impl Strategy<Value = Vec<Option<bool>>> {
    prop::collection::vec(prop::option::of(any::<bool>()), 1..=10)
}

proptest! {
    #[test]
    fn xor_group_laws((a, b, c) in same_len_triple()) {
        let zero = BitVec::zeros(a.len());
        prop_assert_eq!(xor_into(&a, &b).unwrap(), xor_into(&b, &a).unwrap());
        prop_assert_eq!(
            xor_into(&xor_into(&a, &b).unwrap(), &c).unwrap(),
            xor_into(&a, &xor_into(&b, &c).unwrap()).unwrap()
        );
        prop_assert_eq!(xor_into(&a, &zero).unwrap(), a.clone());
        prop_assert!(xor_into(&a, &a).unwrap().is_zero());
    }

    #[test]
    fn hex_round_trip(v in (0usize..300).prop_flat_map(bitvec)) {
        prop_assert_eq!(BitVec::from_hex(v.len(), &v.to_hex()).unwrap(), v);
    }

    #[test]
    fn rank_matches_span_enumeration(rows in 1usize..=5, cols in 1usize..=5, seed in any::<u64>()) {
        let masks: Vec<u32> = (0..rows)
            .map(|r| (seed >> (5 * r) & 0x1f) as u32 & ((1 << cols) - 1))
            .collect();
        let m = matrix_from_masks(&masks, cols);
        prop_assert_eq!(1usize << rank(&m), span_size(&masks));
        prop_assert!(rank(&m) <= rows.min(cols));
    }

    #[test]
    fn rank_of_concatenation(a in prop::collection::vec(0u32..64, 6), b in prop::collection::vec(0u32..64, 6), ca in 1usize..=6, cb in 1usize..=6) {
        let ma = matrix_from_masks(&a, ca);
        let mb = matrix_from_masks(&b, cb);
        let joined = ma.concat_cols(&mb).unwrap();
        let (ra, rb, rj) = (rank(&ma), rank(&mb), rank(&joined));
        prop_assert!(rj >= ra.max(rb));
        prop_assert!(rj <= ra + rb);
    }

    #[test]
    fn eta_dp_matches_enumeration(lane in lane_strategy(), alpha in 0.01f64..1.0) {
        let dp = eta_dp(&lane, alpha).unwrap();
        prop_assert!((dp - eta_brute(&lane, alpha)).abs() < 1e-12);
    }

    #[test]
    fn entropy_invariant_under_global_flip(lane in lane_strategy(), alpha in 0.01f64..1.0) {
        let flipped: Vec<Option<bool>> = lane.iter().map(|b| b.map(|x| !x)).collect();
        let h = binary_entropy(eta_dp(&lane, alpha).unwrap()).unwrap();
        let hf = binary_entropy(eta_dp(&flipped, alpha).unwrap()).unwrap();
        prop_assert!((h - hf).abs() < 1e-12);
    }

    #[test]
    fn absorb_is_order_invariant(packets in prop::collection::vec(bitvec(24), 1..12), rot in 0usize..12) {
        let fold = |ps: &[BitVec]| ps.iter().fold(KeyState::new(24), |s, p| s.absorb(p).unwrap());
        let mut shuffled = packets.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(fold(&packets).key, fold(&shuffled).key);
        let once = fold(&packets);
        let twice = once.absorb(&packets[0]).unwrap().absorb(&packets[0]).unwrap();
        prop_assert_eq!(twice.key, once.key);
    }

    #[test]
    fn l2_nondecreasing(mu_list in prop::collection::vec(0.0f64..=1.0, 1..30), mu_uu in 0.0f64..1.0, bump in 0.0f64..1.0, which in any::<prop::sample::Index>()) {
        let base = l2(100, 2.0, mu_uu, &mu_list).unwrap();
        let mut more = mu_list.clone();
        more.push(0.5);
        prop_assert!(l2(100, 2.0, mu_uu, &more).unwrap() >= base - 1e-9);
        let mut raised = mu_list.clone();
        let i = which.index(raised.len());
        raised[i] = (raised[i] + bump).min(1.0);
        prop_assert!(l2(100, 2.0, mu_uu, &raised).unwrap() >= base - 1e-9);
    }

    #[test]
    fn mu_e_at_unit_gamma_is_mu_u(r in 0.01f64..8.0, p in 0.01f64..1000.0) {
        prop_assert_eq!(mu_e(r, p, 1.0), mu_u(r, p));
    }
}

#[test]
fn binary_entropy_symmetry_dense() {
    for k in 0..=100_000 {
        let eta = k as f64 / 100_000.0;
        let d = binary_entropy(eta).unwrap() - binary_entropy(1.0 - eta).unwrap();
        assert!(d.abs() <= 1e-15, "eta={eta} d={d}");
    }
}

#[test]
fn independent_case_collapse() {
    for n in 1..=10 {
        for k in 0..=20 {
            let mu = k as f64 / 20.0;
            let e = exact_eps(n, 0.5, &Erasure::Uniform(mu)).unwrap();
            let expect = 1.0 - (1.0 - mu).powi(n as i32);
            assert!((e - expect).abs() < 1e-12, "n={n} mu={mu}");
        }
    }
}

#[test]
fn mc_agrees_with_exact() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    for i in 0..20 {
        let n = rng.random_range(1..=8);
        let alpha = rng.random_range(0.05..0.99);
        let mu = Erasure::PerPacket((0..n).map(|_| rng.random_range(0.0..1.0)).collect());
        let exact = exact_eps(n, alpha, &mu).unwrap();
        let est = mc_eps(n, alpha, &mu, 20_000, i).unwrap();
        assert!(
            (est.value - exact).abs() <= 4.0 * est.std_err + 1e-12,
            "n={n} alpha={alpha} {} vs {exact}",
            est.value
        );
    }
}

#[test]
fn c1_below_upper_bound_log_grid() {
    for k in 0..=400 {
        let sp = 0.1 * 10f64.powf(4.0 * k as f64 / 400.0);
        let (s, p) = (1, sp);
        assert!(c1(s, p) < c1_upper(s, p), "Sp={sp}");
    }
}
