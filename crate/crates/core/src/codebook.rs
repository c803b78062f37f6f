//! Slow-time codebook, subset index coding and the probing pulse.

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The `L - 1` slow-time codewords. Every codeword is unit-modulus, orthogonal
/// to the all-ones vector and to every other codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    length: usize,
    // (L-1) x L, row-major; row i is codeword u_{i+1}
    words: Vec<Complex64>,
}

impl Codebook {
    /// Non-DC columns of the `L`-point DFT basis, `u_l[k] = exp(j 2 pi l k / L)`.
    pub fn dft(length: usize) -> Result<Self> {
        if length < 2 {
            return invalid(format!("codeword length must be >= 2, got {length}"));
        }
        let mut words = Vec::with_capacity((length - 1) * length);
        for l in 1..length {
            for k in 0..length {
                // reduce the phase index first so large L keeps full accuracy
                let idx = (l * k) % length;
                let phase = std::f64::consts::TAU * idx as f64 / length as f64;
                words.push(Complex64::from_polar(1.0, phase));
            }
        }
        Ok(Self { length, words })
    }

    /// Wraps an arbitrary design after checking the codebook invariants.
    pub fn from_codewords(length: usize, codewords: Vec<Vec<Complex64>>) -> Result<Self> {
        if length < 2 || codewords.len() != length - 1 {
            return invalid(format!(
                "expected {} codewords of length {length}",
                length.saturating_sub(1)
            ));
        }
        let tol = 1e-9 * length as f64;
        for (i, u) in codewords.iter().enumerate() {
            if u.len() != length {
                return invalid(format!("codeword {} has length {}", i + 1, u.len()));
            }
            if u.iter().any(|x| (x.norm() - 1.0).abs() > 1e-12) {
                return invalid(format!("codeword {} is not unit-modulus", i + 1));
            }
            if u.iter().sum::<Complex64>().norm() > tol {
                return invalid(format!("codeword {} is not orthogonal to the ones vector", i + 1));
            }
            for (j, v) in codewords.iter().enumerate().skip(i + 1) {
                if inner(u, v).norm() > tol {
                    return invalid(format!("codewords {} and {} are not orthogonal", i + 1, j + 1));
                }
            }
        }
        Ok(Self {
            length,
            words: codewords.into_iter().flatten().collect(),
        })
    }

    /// Codeword length `L` (frame length in PRIs).
    pub fn length(&self) -> usize {
        self.length
    }

    /// Number of codewords, `L - 1`.
    pub fn size(&self) -> usize {
        self.length - 1
    }

    /// Codeword `u_index`, 1-based.
    pub fn codeword(&self, index: usize) -> &[Complex64] {
        assert!(index >= 1 && index < self.length, "codeword index {index} out of range");
        let start = (index - 1) * self.length;
        &self.words[start..start + self.length]
    }

    pub fn codewords(&self) -> impl Iterator<Item = &[Complex64]> {
        self.words.chunks_exact(self.length)
    }

    pub fn ones_direction(&self) -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0); self.length]
    }

    /// Hermitian Gram matrix `G[i][j] = u_i^H u_j`.
    pub fn gram(&self) -> Vec<Vec<Complex64>> {
        self.codewords()
            .map(|u| self.codewords().map(|v| inner(u, v)).collect())
            .collect()
    }
}

/// `u^H v`.
pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn build_codebook(length: usize) -> Result<Codebook> {
    Codebook::dft(length)
}

/// An unordered selection of `N` distinct codewords, stored sorted and 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MessageSubset {
    indices: Vec<usize>,
}

impl MessageSubset {
    /// `codebook_size` is `L - 1`; indices may arrive in any order.
    pub fn new(mut indices: Vec<usize>, codebook_size: usize) -> Result<Self> {
        if indices.is_empty() {
            return invalid("a message subset needs at least one codeword");
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return invalid("message subset contains a repeated codeword");
        }
        if indices[0] == 0 || *indices.last().unwrap() > codebook_size {
            return invalid(format!("codeword indices must lie in 1..={codebook_size}"));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

/// Exact binomial coefficient.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Base-2 logarithm of a positive big integer from its leading 64 bits.
pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return (x.to_u64().unwrap() as f64).log2();
    }
    let shift = bits - 64;
    ((x >> shift).to_u64().unwrap() as f64).log2() + shift as f64
}

fn check_ln(length: usize, active: usize) -> Result<()> {
    if length < 2 {
        return invalid(format!("L must be >= 2, got {length}"));
    }
    if active == 0 || active > length - 1 {
        return invalid(format!("N must satisfy 1 <= N <= L - 1 (L = {length}, N = {active})"));
    }
    Ok(())
}

/// Number of distinct messages, `C(L-1, N)`.
pub fn message_count(length: usize, active: usize) -> Result<BigUint> {
    check_ln(length, active)?;
    Ok(binomial(length - 1, active))
}

/// `(1/L) log2 C(L-1, N)` bits per PRI.
pub fn transmission_rate(length: usize, active: usize) -> Result<f64> {
    Ok(log2_big(&message_count(length, active)?) / length as f64)
}

/// Usable payload bits per frame, `floor(log2 C(L-1, N))`.
pub fn bits_per_frame(length: usize, active: usize) -> Result<usize> {
    Ok(message_count(length, active)?.bits() as usize - 1)
}

/// Lexicographic rank of `subset` among all `N`-subsets of `{1, ..., L-1}`.
pub fn subset_rank(subset: &MessageSubset, length: usize, active: usize) -> Result<BigUint> {
    check_ln(length, active)?;
    let n = length - 1;
    if subset.len() != active || *subset.indices.last().unwrap() > n {
        return invalid(format!(
            "subset {:?} is not an {active}-subset of 1..={n}",
            subset.indices
        ));
    }
    let mut rank = BigUint::zero();
    let mut prev = 0;
    for (i, &c) in subset.indices.iter().enumerate() {
        let remaining = active - i - 1;
        for v in prev + 1..c {
            rank += binomial(n - v, remaining);
        }
        prev = c;
    }
    Ok(rank)
}

/// Inverse of [`subset_rank`].
pub fn subset_unrank(rank: &BigUint, length: usize, active: usize) -> Result<MessageSubset> {
    let total = message_count(length, active)?;
    if rank >= &total {
        return invalid(format!("rank {rank} out of range for {total} messages"));
    }
    let n = length - 1;
    let mut rank = rank.clone();
    let mut indices = Vec::with_capacity(active);
    let mut v = 1;
    for i in 0..active {
        let remaining = active - i - 1;
        loop {
            let block = binomial(n - v, remaining);
            if rank < block {
                break;
            }
            rank -= block;
            v += 1;
        }
        indices.push(v);
        v += 1;
    }
    Ok(MessageSubset { indices })
}

/// Maps a payload of exactly `bits_per_frame(L, N)` bits (MSB first) to its subset.
pub fn encode_bits(bits: &[bool], length: usize, active: usize) -> Result<MessageSubset> {
    let width = bits_per_frame(length, active)?;
    if bits.len() != width {
        return invalid(format!("payload has {} bits, frame carries {width}", bits.len()));
    }
    let rank = bits
        .iter()
        .fold(BigUint::zero(), |acc, &b| (acc << 1u32) + u32::from(b));
    subset_unrank(&rank, length, active)
}

/// Maps a payload value `< 2^bits_per_frame` to its subset.
pub fn encode_value(value: &BigUint, length: usize, active: usize) -> Result<MessageSubset> {
    let width = bits_per_frame(length, active)?;
    if value.bits() as usize > width {
        return invalid(format!("payload {value:#x} does not fit in {width} bits"));
    }
    subset_unrank(value, length, active)
}

/// A phase-coded probing pulse of `G` chips at chip rate `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePulse {
    pub chips: Vec<Complex64>,
    pub chip_rate_hz: f64,
}

impl ProbePulse {
    pub fn new(chips: Vec<Complex64>, chip_rate_hz: f64) -> Result<Self> {
        if chips.is_empty() {
            return invalid("pulse needs at least one chip");
        }
        if chips.iter().any(|c| (c.norm() - 1.0).abs() > 1e-12) {
            return invalid("pulse chips must be unit-modulus");
        }
        if !(chip_rate_hz > 0.0) || !chip_rate_hz.is_finite() {
            return invalid(format!("chip rate must be positive, got {chip_rate_hz}"));
        }
        Ok(Self { chips, chip_rate_hz })
    }

    /// Processing gain `G`.
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Duration `T = G / W` in seconds.
    pub fn duration(&self) -> f64 {
        self.chips.len() as f64 / self.chip_rate_hz
    }

    /// The rectangular-chip waveform at `t` measured in chip periods
    /// (`t = time * W`); zero outside `[0, G)`.
    pub fn at_chip_time(&self, t: f64) -> Complex64 {
        if t < 0.0 {
            return Complex64::zero();
        }
        let idx = t.floor();
        if idx >= self.chips.len() as f64 {
            Complex64::zero()
        } else {
            self.chips[idx as usize]
        }
    }
}

/// A feedback polynomial over GF(2), given by the exponents of its nonzero
/// terms, e.g. `[4, 1, 0]` for `x^4 + x + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackPolynomial(pub Vec<u32>);

impl FeedbackPolynomial {
    pub fn degree(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

/// Output bits of the Fibonacci LFSR `a[n + r] = sum_{e < r} a[n + e]` over
/// one full period. `initial_state` bit `i` holds `a[i]`.
pub fn lfsr_sequence(register_length: u32, taps: &FeedbackPolynomial, initial_state: u32) -> Result<Vec<u8>> {
    if register_length == 0 || register_length > 24 {
        return invalid(format!("register length must lie in 1..=24, got {register_length}"));
    }
    if taps.degree() != register_length || !taps.0.contains(&0) {
        return invalid(format!(
            "feedback polynomial {:?} must have degree {register_length} and a constant term",
            taps.0
        ));
    }
    let mask = (1u32 << register_length) - 1;
    if initial_state & mask == 0 || initial_state > mask {
        return invalid("LFSR initial state must be nonzero and fit the register");
    }
    let feedback: u32 = taps
        .0
        .iter()
        .filter(|&&e| e < register_length)
        .map(|&e| 1u32 << e)
        .sum();
    let mut state = initial_state;
    let mut out = Vec::new();
    loop {
        out.push((state & 1) as u8);
        let bit = (state & feedback).count_ones() & 1;
        state = (state >> 1) | (bit << (register_length - 1));
        if state == initial_state {
            break;
        }
    }
    let expected = mask as usize;
    if out.len() != expected {
        return invalid(format!(
            "polynomial {:?} is not primitive: period {} instead of {expected}",
            taps.0,
            out.len()
        ));
    }
    Ok(out)
}

/// BPSK pulse from one period of an m-sequence (`0 -> +1`, `1 -> -1`).
pub fn msequence_pulse(
    register_length: u32,
    taps: &FeedbackPolynomial,
    initial_state: u32,
    chip_rate_hz: f64,
) -> Result<ProbePulse> {
    let bits = lfsr_sequence(register_length, taps, initial_state)?;
    let chips = bits
        .into_iter()
        .map(|b| Complex64::new(if b == 0 { 1.0 } else { -1.0 }, 0.0))
        .collect();
    ProbePulse::new(chips, chip_rate_hz)
}

/// `x^4 + x + 1` from the all-ones state: 15 chips.
pub fn default_pulse(chip_rate_hz: f64) -> Result<ProbePulse> {
    msequence_pulse(4, &FeedbackPolynomial(vec![4, 1, 0]), 0b1111, chip_rate_hz)
}

/// Primitive trinomials/pentanomials for small register lengths.
pub fn primitive_polynomial(register_length: u32) -> Option<FeedbackPolynomial> {
    let exps: &[u32] = match register_length {
        2 => &[2, 1, 0],
        3 => &[3, 1, 0],
        4 => &[4, 1, 0],
        5 => &[5, 2, 0],
        6 => &[6, 1, 0],
        7 => &[7, 1, 0],
        8 => &[8, 4, 3, 2, 0],
        9 => &[9, 4, 0],
        10 => &[10, 3, 0],
        11 => &[11, 2, 0],
        _ => return None,
    };
    Some(FeedbackPolynomial(exps.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_codebook() {
        let cb = build_codebook(2).unwrap();
        assert_eq!(cb.size(), 1);
        let u = cb.codeword(1);
        assert!((u[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((u[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn alternating_codeword_for_length_four() {
        let cb = build_codebook(4).unwrap();
        let expected = [1.0, -1.0, 1.0, -1.0];
        for (x, e) in cb.codeword(2).iter().zip(expected) {
            assert!((x - Complex64::new(e, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn gram_is_scaled_identity() {
        for l in 2..=64 {
            let cb = build_codebook(l).unwrap();
            let tol = 1e-9 * l as f64;
            for (i, row) in cb.gram().iter().enumerate() {
                for (j, g) in row.iter().enumerate() {
                    let expect = if i == j { l as f64 } else { 0.0 };
                    assert!((g - Complex64::new(expect, 0.0)).norm() < tol, "L={l} ({i},{j})");
                }
            }
            for u in cb.codewords() {
                assert!(inner(&cb.ones_direction(), u).norm() < tol);
                assert!(u.iter().all(|x| (x.norm() - 1.0).abs() <= 1e-12));
            }
        }
        assert!(build_codebook(1).is_err());
    }

    #[test]
    fn from_codewords_rejects_non_orthogonal_sets() {
        let one = Complex64::new(1.0, 0.0);
        assert!(Codebook::from_codewords(2, vec![vec![one, -one]]).is_ok());
        assert!(Codebook::from_codewords(2, vec![vec![one, one]]).is_err());
        let cb = build_codebook(3).unwrap();
        let u1 = cb.codeword(1).to_vec();
        assert!(Codebook::from_codewords(3, vec![u1.clone(), u1]).is_err());
    }

    #[test]
    fn rank_endpoints() {
        let first = MessageSubset::new(vec![1, 2], 4).unwrap();
        let last = MessageSubset::new(vec![4, 3], 4).unwrap();
        assert_eq!(subset_rank(&first, 5, 2).unwrap(), BigUint::zero());
        assert_eq!(subset_rank(&last, 5, 2).unwrap(), BigUint::from(5u32));
        assert_eq!(subset_unrank(&BigUint::zero(), 5, 2).unwrap(), first);
        assert_eq!(subset_unrank(&BigUint::from(5u32), 5, 2).unwrap(), last);
        assert!(subset_unrank(&BigUint::from(6u32), 5, 2).is_err());
    }

    #[test]
    fn rank_unrank_exhaustive() {
        for l in 2..=12 {
            for n in 1..=5.min(l - 1) {
                let total = message_count(l, n).unwrap().to_usize().unwrap();
                let mut prev: Option<MessageSubset> = None;
                for r in 0..total {
                    let rank = BigUint::from(r);
                    let s = subset_unrank(&rank, l, n).unwrap();
                    assert_eq!(s.len(), n);
                    assert_eq!(subset_rank(&s, l, n).unwrap(), rank);
                    if let Some(p) = prev {
                        assert!(p.indices() < s.indices(), "not lexicographic");
                    }
                    prev = Some(s);
                }
            }
        }
    }

    #[test]
    fn malformed_subsets_are_rejected() {
        assert!(MessageSubset::new(vec![], 4).is_err());
        assert!(MessageSubset::new(vec![1, 1], 4).is_err());
        assert!(MessageSubset::new(vec![0, 2], 4).is_err());
        assert!(MessageSubset::new(vec![5], 4).is_err());
        let s = MessageSubset::new(vec![1, 2, 3], 4).unwrap();
        assert!(subset_rank(&s, 5, 2).is_err());
        let wide = MessageSubset::new(vec![1, 9], 9).unwrap();
        assert!(subset_rank(&wide, 5, 2).is_err());
    }

    #[test]
    fn rate_values() {
        assert_eq!(transmission_rate(10, 9).unwrap(), 0.0);
        assert_eq!(binomial(20, 9), BigUint::from(167_960u32));
        let r = transmission_rate(21, 9).unwrap();
        assert!((r - 167_960f64.log2() / 21.0).abs() < 1e-15);
        assert!((r - 0.8265).abs() < 1e-4);
        assert!(transmission_rate(5, 5).is_err());
        assert!(transmission_rate(5, 0).is_err());
        let best = (10..=60)
            .map(|l| (l, transmission_rate(l, 9).unwrap()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(best.0, 21);
    }

    #[test]
    fn rate_for_huge_binomials_uses_exact_integers() {
        // C(511, 255) needs ~507 bits
        let r = transmission_rate(512, 255).unwrap();
        let direct: f64 = (0..255).map(|i| ((511 - i) as f64 / (i + 1) as f64).log2()).sum();
        assert!((r * 512.0 - direct).abs() < 1e-9);
    }

    #[test]
    fn payload_widths() {
        assert_eq!(bits_per_frame(21, 9).unwrap(), 17);
        assert_eq!(bits_per_frame(3, 1).unwrap(), 1);
        assert_eq!(bits_per_frame(10, 9).unwrap(), 0);
    }

    #[test]
    fn payload_encoding() {
        let zero = encode_bits(&[false; 17], 21, 9).unwrap();
        assert_eq!(zero.indices(), &[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert!(encode_bits(&[true; 16], 21, 9).is_err());
        assert!(encode_value(&BigUint::from(1u32 << 17), 21, 9).is_err());
        let v = encode_value(&BigUint::from(5u32), 5, 2);
        assert!(v.is_err(), "C(4,2)=6 leaves only 2 payload bits");
        assert_eq!(encode_value(&BigUint::from(3u32), 5, 2).unwrap().indices(), &[2, 3]);
    }

    #[test]
    fn msequence_balance_and_autocorrelation() {
        let p = default_pulse(50e6).unwrap();
        assert_eq!(p.len(), 15);
        let sum: Complex64 = p.chips.iter().sum();
        assert!((sum.norm() - 1.0).abs() < 1e-12);
        assert!((p.duration() - 0.3e-6).abs() < 1e-18);

        let short = msequence_pulse(2, &primitive_polynomial(2).unwrap(), 0b01, 1.0).unwrap();
        assert_eq!(short.len(), 3);
        for shift in 1..3 {
            let acf: f64 = (0..3).map(|k| (short.chips[k] * short.chips[(k + shift) % 3]).re).sum();
            assert_eq!(acf, -1.0);
        }
    }

    #[test]
    fn msequence_period_is_maximal() {
        for r in 2..=11 {
            let taps = primitive_polynomial(r).unwrap();
            for seed in [1u32, (1 << r) - 1, (0b10 % (1 << r)) | 1] {
                let bits = lfsr_sequence(r, &taps, seed).unwrap();
                assert_eq!(bits.len(), (1usize << r) - 1, "r = {r}");
                // two-level periodic autocorrelation
                let g = bits.len();
                let chips: Vec<i32> = bits.iter().map(|&b| 1 - 2 * b as i32).collect();
                for shift in 1..g.min(40) {
                    let acf: i32 = (0..g).map(|k| chips[k] * chips[(k + shift) % g]).sum();
                    assert_eq!(acf, -1);
                }
            }
        }
    }

    #[test]
    fn lfsr_rejects_bad_configuration() {
        let taps = FeedbackPolynomial(vec![4, 1, 0]);
        assert!(lfsr_sequence(4, &taps, 0).is_err());
        assert!(lfsr_sequence(4, &taps, 16).is_err());
        assert!(lfsr_sequence(4, &FeedbackPolynomial(vec![4, 2, 0]), 1).is_err());
        assert!(lfsr_sequence(3, &taps, 1).is_err());
    }

    #[test]
    fn chip_waveform_lookup() {
        let p = default_pulse(1.0).unwrap();
        assert_eq!(p.at_chip_time(-0.1), Complex64::zero());
        assert_eq!(p.at_chip_time(0.0), p.chips[0]);
        assert_eq!(p.at_chip_time(3.7), p.chips[3]);
        assert_eq!(p.at_chip_time(15.0), Complex64::zero());
    }

    proptest! {
        #[test]
        fn rate_is_symmetric(l in 3usize..200, frac in 0.0f64..1.0) {
            let n = 1 + ((l - 3) as f64 * frac) as usize;
            let a = transmission_rate(l, n).unwrap();
            let b = transmission_rate(l, l - 1 - n).unwrap_or(0.0);
            if n < l - 1 {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn rank_roundtrip_large(l in 20usize..120, n in 1usize..10, seed in any::<u64>()) {
            let n = n.min(l - 1);
            let total = message_count(l, n).unwrap();
            let rank = BigUint::from(seed) % &total;
            let s = subset_unrank(&rank, l, n).unwrap();
            prop_assert_eq!(subset_rank(&s, l, n).unwrap(), rank);
        }
    }
}
