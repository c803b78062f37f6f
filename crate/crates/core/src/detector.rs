//! Noncoherent reader: matched-filter bank over the codebook, energy
//! statistics, top-N selection and bit recovery.

use num_bigint::BigUint;
use num_complex::Complex64;

use crate::channel::ReceivedFrame;
use crate::codebook::{bits_per_frame, subset_rank, Codebook, MessageSubset};
use crate::error::{check_dim, invalid, Result};

/// `T_l = |u_l^H Y|^2 / normalization` for every codeword `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyStatistics {
    /// Indexed by codeword `l - 1`.
    pub t_values: Vec<f64>,
    /// `L sigma^2`, or 1 for a noiseless frame.
    pub normalization: f64,
}

impl EnergyStatistics {
    pub fn new(t_values: Vec<f64>, normalization: f64) -> Result<Self> {
        if let Some(bad) = t_values.iter().find(|t| !(**t >= 0.0)) {
            return invalid(format!("energy statistics must be >= 0, got {bad}"));
        }
        Ok(Self {
            t_values,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_values.is_empty()
    }

    /// Statistic for 1-based codeword `index`.
    pub fn get(&self, index: usize) -> f64 {
        self.t_values[index - 1]
    }
}

/// Complex multiply-accumulates spent by one matched-filter bank.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OperationCount {
    pub multiply_accumulates: usize,
    pub samples_read: usize,
}

pub fn matched_filter_energies(frame: &ReceivedFrame, codebook: &Codebook) -> Result<EnergyStatistics> {
    matched_filter_energies_counted(frame, codebook).map(|(s, _)| s)
}

/// As [`matched_filter_energies`], also reporting the work done.
pub fn matched_filter_energies_counted(
    frame: &ReceivedFrame,
    codebook: &Codebook,
) -> Result<(EnergyStatistics, OperationCount)> {
    let y = &frame.y;
    check_dim("frame rows vs codeword length", codebook.length(), y.rows())?;
    let normalization = if frame.noise_variance > 0.0 {
        codebook.length() as f64 * frame.noise_variance
    } else {
        1.0
    };
    let k_r = y.cols();
    let mut count = OperationCount::default();
    // (L-1) x L by L x K_R product, row by row of the result
    let mut acc = vec![Complex64::new(0.0, 0.0); k_r];
    let t_values = codebook
        .codewords()
        .map(|u| {
            acc.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
            for (r, ur) in u.iter().enumerate() {
                let w = ur.conj();
                for (a, v) in acc.iter_mut().zip(y.row(r)) {
                    *a += w * v;
                }
                count.multiply_accumulates += k_r;
                count.samples_read += k_r;
            }
            acc.iter().map(|a| a.norm_sqr()).sum::<f64>() / normalization
        })
        .collect();
    Ok((
        EnergyStatistics {
            t_values,
            normalization,
        },
        count,
    ))
}

/// The `active` codewords with the largest statistics; ties go to the lower
/// index.
pub fn detect_subset(stats: &EnergyStatistics, active: usize) -> Result<MessageSubset> {
    if active == 0 || active > stats.len() {
        return invalid(format!("cannot select {active} of {} codewords", stats.len()));
    }
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats.t_values[b].total_cmp(&stats.t_values[a]).then(a.cmp(&b)));
    order.truncate(active);
    MessageSubset::new(order.into_iter().map(|i| i + 1).collect(), stats.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodedMessage {
    /// Payload bits, most significant first.
    Bits(Vec<bool>),
    /// The subset's rank lies outside the payload range.
    Erasure,
}

/// Inverse of [`crate::codebook::encode_bits`].
pub fn decode_message(subset: &MessageSubset, length: usize, active: usize) -> Result<DecodedMessage> {
    let rank = subset_rank(subset, length, active)?;
    let width = bits_per_frame(length, active)?;
    if rank.bits() as usize > width {
        return Ok(DecodedMessage::Erasure);
    }
    Ok(DecodedMessage::Bits(rank_bits(&rank, width)))
}

fn rank_bits(rank: &BigUint, width: usize) -> Vec<bool> {
    (0..width).rev().map(|i| rank.bit(i as u64)).collect()
}
