//! Source-tag, tag-reader and source-reader channels, the composite
//! signatures seen by the reader, and synthesis of the received frame
//! `Y_R = X A_STR^H + 1_L i_SR^H + Omega_R`.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, ProbePulse};
use crate::error::{check_dim, invalid, Error, Result};
use crate::matrix::CMatrix;
use crate::ris::{steering_vector, BeamformerSet, Direction, RisGeometry, SpaceTimeCode, SubarrayPartition};

/// Statistics of the stochastic channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub sigma_st: f64,
    pub theta_st: Direction,
    /// Average tag-reader tap power `sigma_TR^2`.
    pub sigma_tr_sq: f64,
    /// Specular-to-diffuse power ratio, linear.
    pub kappa: f64,
    pub taps: usize,
    pub departure_azimuth: (f64, f64),
    pub departure_elevation: (f64, f64),
    /// `Delta_max - Delta_min`, seconds.
    pub delay_spread: f64,
}

/// `gamma_ST = sigma_ST e^{j phi_ST} psi(theta_ST)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StChannel {
    pub sigma_st: f64,
    pub phase: f64,
    pub direction: Direction,
    pub gamma: Vec<Complex64>,
}

impl StChannel {
    pub fn new(sigma_st: f64, phase: f64, direction: Direction, geometry: &RisGeometry) -> Self {
        let scale = Complex64::from_polar(sigma_st, phase);
        let gamma = steering_vector(geometry, direction)
            .into_iter()
            .map(|p| scale * p)
            .collect();
        Self {
            sigma_st,
            phase,
            direction,
            gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrTap {
    pub amplitude: Complex64,
    pub departure: Direction,
    /// Offset from `Delta_min`, seconds.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrChannel {
    pub taps: Vec<TrTap>,
    pub kappa: f64,
    pub sigma_tr_sq: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TapRecord {
    tap: usize,
    re: f64,
    im: f64,
    az_deg: f64,
    el_deg: f64,
    delay_s: f64,
}

impl TrChannel {
    /// One CSV row per tap: `tap,re,im,az_deg,el_deg,delay_s`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (tap, t) in self.taps.iter().enumerate() {
            w.serialize(TapRecord {
                tap,
                re: t.amplitude.re,
                im: t.amplitude.im,
                az_deg: t.departure.azimuth,
                el_deg: t.departure.elevation,
                delay_s: t.delay,
            })
            .map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads taps written by [`TrChannel::write_csv`].
    pub fn read_csv<R: Read>(input: R, kappa: f64, sigma_tr_sq: f64) -> Result<Self> {
        let mut taps = Vec::new();
        for (i, rec) in csv::Reader::from_reader(input).deserialize::<TapRecord>().enumerate() {
            let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
            if rec.tap != i {
                return invalid(format!("tap rows out of order at row {i}"));
            }
            taps.push(TrTap {
                amplitude: Complex64::new(rec.re, rec.im),
                departure: Direction::new(rec.az_deg, rec.el_deg)?,
                delay: rec.delay_s,
            });
        }
        Ok(Self {
            taps,
            kappa,
            sigma_tr_sq,
        })
    }
}

/// `phi_ST ~ U[0, 2 pi)`; magnitude and direction come from `params`.
pub fn draw_st_channel<R: Rng>(params: &ChannelParams, geometry: &RisGeometry, rng: &mut R) -> StChannel {
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    StChannel::new(params.sigma_st, phase, params.theta_st, geometry)
}

fn complex_normal<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn uniform_in<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Independent Rician taps
/// `sigma_TR (sqrt(k/(1+k)) e^{j phi} + sqrt(1/(1+k)) g)` with uniform
/// departure angles and delays.
pub fn draw_tr_channel<R: Rng>(params: &ChannelParams, rng: &mut R) -> Result<TrChannel> {
    if params.taps == 0 {
        return invalid("tag-reader channel needs at least one tap");
    }
    if !(params.kappa >= 0.0) {
        return invalid(format!("Rician factor must be >= 0, got {}", params.kappa));
    }
    let sigma = params.sigma_tr_sq.sqrt();
    let specular = (params.kappa / (1.0 + params.kappa)).sqrt();
    let diffuse = (1.0 / (1.0 + params.kappa)).sqrt();
    let taps = (0..params.taps)
        .map(|_| {
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let g = complex_normal(rng, 1.0);
            let amplitude = sigma * (specular * Complex64::from_polar(1.0, phi) + diffuse * g);
            let departure = Direction {
                azimuth: uniform_in(rng, params.departure_azimuth),
                elevation: uniform_in(rng, params.departure_elevation),
            };
            let delay = params.delay_spread * rng.random::<f64>();
            TrTap {
                amplitude,
                departure,
                delay,
            }
        })
        .collect();
    Ok(TrChannel {
        taps,
        kappa: params.kappa,
        sigma_tr_sq: params.sigma_tr_sq,
    })
}

/// `K_R = ceil((T + delay_spread) W)`.
pub fn samples_per_pri(pulse: &ProbePulse, delay_spread: f64) -> usize {
    let span = pulse.len() as f64 + delay_spread * pulse.chip_rate_hz;
    // absorb representation error of spreads given as whole samples
    (span - 1e-9).ceil().max(1.0) as usize
}

/// Everything the reader's matched filters see from one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSignature {
    /// `K_R x M_RIS`, column `m` is `alpha_STR,m` sampled on the reader grid.
    pub a_str: CMatrix,
    /// `beta_STR,n = A_STR P_n b_n`.
    pub betas: Vec<Vec<Complex64>>,
    /// Direct-path interference samples.
    pub i_sr: Vec<Complex64>,
}

impl CompositeSignature {
    pub fn samples(&self) -> usize {
        self.i_sr.len()
    }

    pub fn beta_norms_sq(&self) -> Vec<f64> {
        self.betas
            .iter()
            .map(|b| b.iter().map(|x| x.norm_sqr()).sum())
            .collect()
    }
}

/// `beta_n = A_STR P_n b_n` for every subarray.
pub fn effective_signatures(
    a_str: &CMatrix,
    partition: &SubarrayPartition,
    beamformers: &BeamformerSet,
) -> Result<Vec<Vec<Complex64>>> {
    check_dim("A_STR columns", partition.total_elements(), a_str.cols())?;
    check_dim("beamformer count", partition.len(), beamformers.vectors.len())?;
    Ok(partition
        .iter()
        .zip(&beamformers.vectors)
        .map(|(members, b)| {
            (0..a_str.rows())
                .map(|k| {
                    let row = a_str.row(k);
                    members.iter().zip(b).map(|(&m, bj)| row[m] * bj).sum()
                })
                .collect()
        })
        .collect())
}

/// Samples `alpha_STR,m(Delta_min + k/W)`
/// `= sqrt(P) gamma_ST,m sum_q gamma_TR,q psi_m(theta_TR,q) a(k/W - tau_q)`
/// with the chip waveform evaluated exactly at fractional delays.
#[allow(clippy::too_many_arguments)]
pub fn assemble_composite(
    pulse: &ProbePulse,
    pulse_power: f64,
    st: &StChannel,
    tr: &TrChannel,
    geometry: &RisGeometry,
    partition: &SubarrayPartition,
    beamformers: &BeamformerSet,
    samples: usize,
    i_sr: Vec<Complex64>,
) -> Result<CompositeSignature> {
    let m_ris = geometry.elements();
    check_dim("gamma_ST length", m_ris, st.gamma.len())?;
    check_dim("i_SR length", samples, i_sr.len())?;
    let amp = pulse_power.sqrt();
    // per tap: steering vector and the delayed pulse on the sample grid
    let taps: Vec<(Vec<Complex64>, Vec<Complex64>)> = tr
        .taps
        .iter()
        .map(|t| {
            let psi = steering_vector(geometry, t.departure);
            let shift = t.delay * pulse.chip_rate_hz;
            let wave = (0..samples)
                .map(|k| amp * t.amplitude * pulse.at_chip_time(k as f64 - shift))
                .collect();
            (psi, wave)
        })
        .collect();
    let mut a = CMatrix::zeros(samples, m_ris);
    for k in 0..samples {
        let row = a.row_mut(k);
        for (psi, wave) in &taps {
            let w = wave[k];
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (r, p) in row.iter_mut().zip(psi) {
                *r += w * p;
            }
        }
        for (r, g) in row.iter_mut().zip(&st.gamma) {
            *r *= g;
        }
    }
    let betas = effective_signatures(&a, partition, beamformers)?;
    Ok(CompositeSignature { a_str: a, betas, i_sr })
}

/// `beta_n` straight from the taps, without forming `A_STR`:
/// `beta_n[k] = sqrt(P) sum_q w_q(k) sum_j gamma_ST,mu psi_mu(theta_q) b_n[j]`
/// where `w_q` is the delayed, scaled pulse of tap `q`.
#[allow(clippy::too_many_arguments)]
pub fn signatures_from_taps(
    pulse: &ProbePulse,
    pulse_power: f64,
    st: &StChannel,
    tr: &TrChannel,
    geometry: &RisGeometry,
    partition: &SubarrayPartition,
    beamformers: &BeamformerSet,
    samples: usize,
) -> Result<Vec<Vec<Complex64>>> {
    check_dim("gamma_ST length", geometry.elements(), st.gamma.len())?;
    check_dim("partition size", geometry.elements(), partition.total_elements())?;
    check_dim("beamformer count", partition.len(), beamformers.vectors.len())?;
    let amp = pulse_power.sqrt();
    let mut betas = vec![vec![Complex64::new(0.0, 0.0); samples]; partition.len()];
    for t in &tr.taps {
        let psi = steering_vector(geometry, t.departure);
        let shift = t.delay * pulse.chip_rate_hz;
        let gains: Vec<Complex64> = partition
            .iter()
            .zip(&beamformers.vectors)
            .map(|(members, b)| members.iter().zip(b).map(|(&m, bj)| st.gamma[m] * psi[m] * bj).sum())
            .collect();
        for k in 0..samples {
            let w = pulse.at_chip_time(k as f64 - shift);
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            let w = amp * t.amplitude * w;
            for (beta, g) in betas.iter_mut().zip(&gains) {
                beta[k] += w * g;
            }
        }
    }
    Ok(betas)
}

/// Direct source-reader path: the pulse scaled by `amplitude` and delayed by
/// `delay` seconds relative to the first reader sample.
pub fn direct_path(
    pulse: &ProbePulse,
    pulse_power: f64,
    amplitude: Complex64,
    delay: f64,
    samples: usize,
) -> Result<Vec<Complex64>> {
    let shift = delay * pulse.chip_rate_hz;
    if !(shift >= 0.0) || shift + pulse.len() as f64 > samples as f64 + 1e-9 {
        return invalid(format!(
            "direct-path delay {delay} s does not fit the {samples}-sample window"
        ));
    }
    let amp = pulse_power.sqrt() * amplitude;
    Ok((0..samples)
        .map(|k| amp * pulse.at_chip_time(k as f64 - shift))
        .collect())
}

/// `sigma^2 = P G B(theta_bar) sigma_TR^2 / (L N snr)`.
pub fn noise_variance_from_snr(
    snr_linear: f64,
    pulse_power: f64,
    processing_gain: usize,
    beampattern_at_target: f64,
    sigma_tr_sq: f64,
    frame_length: usize,
    subarrays: usize,
) -> Result<f64> {
    if !(snr_linear > 0.0) || !snr_linear.is_finite() {
        return invalid(format!("SNR must be positive and finite, got {snr_linear}"));
    }
    Ok(
        pulse_power * processing_gain as f64 * beampattern_at_target * sigma_tr_sq
            / (frame_length as f64 * subarrays as f64 * snr_linear),
    )
}

/// The `L x K_R` sample matrix at the reader.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub y: CMatrix,
    pub noise_variance: f64,
}

fn add_interference_and_noise<R: Rng>(y: &mut CMatrix, i_sr: &[Complex64], noise_variance: f64, rng: &mut R) {
    for r in 0..y.rows() {
        for (v, i) in y.row_mut(r).iter_mut().zip(i_sr) {
            *v += i.conj();
        }
    }
    if noise_variance > 0.0 {
        for v in y.as_mut_slice() {
            *v += complex_normal(rng, noise_variance);
        }
    }
}

/// `Y_R = X A_STR^H + 1_L i_SR^H + Omega_R`, noise drawn row-major.
pub fn synthesize_frame<R: Rng>(
    code: &SpaceTimeCode,
    sig: &CompositeSignature,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    if !(noise_variance >= 0.0) {
        return invalid(format!("noise variance must be >= 0, got {noise_variance}"));
    }
    let mut y = code.matrix.mul_adjoint(&sig.a_str)?;
    add_interference_and_noise(&mut y, &sig.i_sr, noise_variance, rng);
    Ok(ReceivedFrame { y, noise_variance })
}

/// The same frame through the factored signal term `sum_n c_n beta_n^H`,
/// `O(L N K_R)` instead of `O(L M_RIS K_R)`. Identical noise draws.
pub fn synthesize_frame_factored<R: Rng>(
    codebook: &Codebook,
    assignment: &[usize],
    sig: &CompositeSignature,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    check_dim("assignment length", sig.betas.len(), assignment.len())?;
    if !(noise_variance >= 0.0) {
        return invalid(format!("noise variance must be >= 0, got {noise_variance}"));
    }
    let (l, k_r) = (codebook.length(), sig.samples());
    let mut y = CMatrix::zeros(l, k_r);
    for (&cw, beta) in assignment.iter().zip(&sig.betas) {
        let c = codebook.codeword(cw);
        for (r, cl) in c.iter().enumerate() {
            for (v, b) in y.row_mut(r).iter_mut().zip(beta) {
                *v += cl * b.conj();
            }
        }
    }
    add_interference_and_noise(&mut y, &sig.i_sr, noise_variance, rng);
    Ok(ReceivedFrame { y, noise_variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{build_codebook, default_pulse, MessageSubset};
    use crate::ris::{matched_beamformers, space_time_code, square_partition};
    use crate::rng::{Entity, Streams};

    fn params() -> ChannelParams {
        ChannelParams {
            sigma_st: 1.0,
            theta_st: Direction::new(-45.0, 0.0).unwrap(),
            sigma_tr_sq: 1.0,
            kappa: 10.0,
            taps: 3,
            departure_azimuth: (33.0, 57.0),
            departure_elevation: (-12.0, 12.0),
            delay_spread: 15.0 / 50e6,
        }
    }

    #[test]
    fn st_phase_is_reproducible_and_uniform() {
        let g = RisGeometry::new(15, 15, 0.5).unwrap();
        let s = Streams::new(11);
        let a = draw_st_channel(&params(), &g, &mut s.rng(Entity::StPhase, 0));
        let b = draw_st_channel(&params(), &g, &mut s.rng(Entity::StPhase, 0));
        assert_eq!(a, b);
        assert!(a.gamma.iter().all(|x| (x.norm() - 1.0).abs() < 1e-14));

        let mut rng = s.rng(Entity::StPhase, 1);
        let n = 100_000;
        let mean: Complex64 = (0..n)
            .map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU))
            .sum::<Complex64>()
            / n as f64;
        // each component has variance 1/2, so the mean has sd sqrt(1/(2n))
        let sd = (0.5 / n as f64).sqrt();
        assert!(mean.re.abs() < 3.0 * sd && mean.im.abs() < 3.0 * sd);
    }

    #[test]
    fn specular_limit_has_constant_magnitude() {
        let mut p = params();
        p.kappa = 1e12;
        p.sigma_tr_sq = 4.0;
        let tr = draw_tr_channel(&p, &mut Streams::new(3).rng(Entity::TrTaps, 0)).unwrap();
        for t in &tr.taps {
            assert!((t.amplitude.norm() - 2.0).abs() < 1e-5 * 2.0);
        }
    }

    #[test]
    fn rician_power_is_normalized() {
        let mut p = params();
        p.taps = 1;
        let s = Streams::new(5);
        let mut rng = s.rng(Entity::TrTaps, 0);
        let n = 1_000_000;
        let mut power = 0.0;
        for _ in 0..n {
            let tr = draw_tr_channel(&p, &mut rng).unwrap();
            power += tr.taps[0].amplitude.norm_sqr();
        }
        assert!((power / n as f64 - 1.0).abs() < 0.01);
    }

    #[test]
    fn taps_respect_configured_ranges() {
        let p = params();
        let mut rng = Streams::new(9).rng(Entity::TrTaps, 0);
        for _ in 0..2000 {
            for t in draw_tr_channel(&p, &mut rng).unwrap().taps {
                assert!(t.delay >= 0.0 && t.delay <= 15.0 / 50e6);
                assert!((33.0..=57.0).contains(&t.departure.azimuth));
                assert!((-12.0..=12.0).contains(&t.departure.elevation));
            }
        }
        let mut bad = params();
        bad.taps = 0;
        assert!(draw_tr_channel(&bad, &mut rng).is_err());
    }

    #[test]
    fn reference_window_has_thirty_samples() {
        let pulse = default_pulse(50e6).unwrap();
        assert_eq!(samples_per_pri(&pulse, 15.0 / 50e6), 30);
        assert_eq!(samples_per_pri(&pulse, 0.0), 15);
        assert_eq!(samples_per_pri(&pulse, 2.5 / 50e6), 18);
    }

    #[test]
    fn unit_impulse_channel_copies_the_pulse() {
        let g = RisGeometry::new(15, 15, 0.5).unwrap();
        let part = square_partition(&g, 3).unwrap();
        let theta_st = Direction::new(-45.0, 0.0).unwrap();
        let bf = matched_beamformers(&part, &g, theta_st, Direction::new(45.0, 0.0).unwrap());
        let pulse = default_pulse(50e6).unwrap();
        let st = StChannel::new(1.0, 0.0, theta_st, &g);
        let tr = TrChannel {
            taps: vec![TrTap {
                amplitude: Complex64::new(1.0, 0.0),
                departure: Direction::BROADSIDE,
                delay: 0.0,
            }],
            kappa: 0.0,
            sigma_tr_sq: 1.0,
        };
        let sig = assemble_composite(
            &pulse,
            1.0,
            &st,
            &tr,
            &g,
            &part,
            &bf,
            30,
            vec![Complex64::new(0.0, 0.0); 30],
        )
        .unwrap();
        let psi = steering_vector(&g, theta_st);
        for m in 0..225 {
            for k in 0..30 {
                let chip = if k < 15 {
                    pulse.chips[k]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((sig.a_str.get(k, m) - psi[m] * chip).norm() < 1e-15);
            }
        }
        let recomputed = effective_signatures(&sig.a_str, &part, &bf).unwrap();
        assert_eq!(recomputed, sig.betas);
    }

    #[test]
    fn tap_signatures_match_full_assembly() {
        let g = RisGeometry::new(15, 15, 0.5).unwrap();
        let part = square_partition(&g, 3).unwrap();
        let p = params();
        let bf = matched_beamformers(&part, &g, p.theta_st, Direction::new(45.0, 0.0).unwrap());
        let pulse = default_pulse(50e6).unwrap();
        for trial in 0..5 {
            let s = Streams::new(40);
            let st = draw_st_channel(&p, &g, &mut s.rng(Entity::StPhase, trial));
            let tr = draw_tr_channel(&p, &mut s.rng(Entity::TrTaps, trial)).unwrap();
            let full = assemble_composite(
                &pulse,
                2.0,
                &st,
                &tr,
                &g,
                &part,
                &bf,
                30,
                vec![Complex64::new(0.0, 0.0); 30],
            )
            .unwrap();
            let fast = signatures_from_taps(&pulse, 2.0, &st, &tr, &g, &part, &bf, 30).unwrap();
            let scale = full.beta_norms_sq().iter().sum::<f64>().sqrt();
            for (a, b) in full.betas.iter().zip(&fast) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).norm() <= 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn fractional_delays_match_fine_grid_convolution() {
        // upsample the chip sequence by 8, delay taps by whole fine samples,
        // convolve, then decimate back to the reader grid
        let up = 8;
        let g = RisGeometry::new(2, 3, 0.5).unwrap();
        let part = crate::ris::partition_into(&g, 2).unwrap();
        let bf = matched_beamformers(
            &part,
            &g,
            Direction::new(-20.0, 5.0).unwrap(),
            Direction::new(40.0, -3.0).unwrap(),
        );
        let pulse = default_pulse(1.0).unwrap();
        let st = StChannel::new(0.7, 1.1, Direction::new(-20.0, 5.0).unwrap(), &g);
        let offsets = [0usize, 13, 37];
        let tr = TrChannel {
            taps: offsets
                .iter()
                .enumerate()
                .map(|(q, &o)| TrTap {
                    amplitude: Complex64::new(0.3 + q as f64, -0.2 * q as f64),
                    departure: Direction::new(30.0 + 5.0 * q as f64, -4.0 * q as f64).unwrap(),
                    delay: o as f64 / up as f64,
                })
                .collect(),
            kappa: 0.0,
            sigma_tr_sq: 1.0,
        };
        let samples = 21;
        let sig = assemble_composite(
            &pulse,
            1.0,
            &st,
            &tr,
            &g,
            &part,
            &bf,
            samples,
            vec![Complex64::new(0.0, 0.0); samples],
        )
        .unwrap();
        let fine: Vec<Complex64> = pulse.chips.iter().flat_map(|&c| std::iter::repeat_n(c, up)).collect();
        for m in 0..g.elements() {
            let mut response = vec![Complex64::new(0.0, 0.0); samples * up + 64];
            for (t, &o) in tr.taps.iter().zip(&offsets) {
                let psi = steering_vector(&g, t.departure)[m];
                for (i, &c) in fine.iter().enumerate() {
                    response[i + o] += st.gamma[m] * t.amplitude * psi * c;
                }
            }
            for k in 0..samples {
                assert!((sig.a_str.get(k, m) - response[k * up]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn direct_path_cases() {
        let pulse = default_pulse(50e6).unwrap();
        let zero = direct_path(&pulse, 1.0, Complex64::new(0.0, 0.0), 0.0, 30).unwrap();
        assert!(zero.iter().all(|v| v.norm() == 0.0));
        let unit = direct_path(&pulse, 1.0, Complex64::new(1.0, 0.0), 0.0, 30).unwrap();
        assert_eq!(&unit[..15], &pulse.chips[..]);
        assert!(unit[15..].iter().all(|v| v.norm() == 0.0));
        // 2.25 chips late: sample k holds chip floor(k - 2.25)
        let late = direct_path(&pulse, 1.0, Complex64::new(1.0, 0.0), 2.25 / 50e6, 30).unwrap();
        assert_eq!(late[0], Complex64::new(0.0, 0.0));
        assert_eq!(late[2], Complex64::new(0.0, 0.0));
        assert_eq!(late[3], pulse.chips[0]);
        assert_eq!(late[17], pulse.chips[14]);
        assert_eq!(late[18], Complex64::new(0.0, 0.0));
        assert!(direct_path(&pulse, 1.0, Complex64::new(1.0, 0.0), -1e-9, 30).is_err());
        assert!(direct_path(&pulse, 1.0, Complex64::new(1.0, 0.0), 16.0 / 50e6, 30).is_err());
    }

    #[test]
    fn noise_calibration() {
        assert_eq!(noise_variance_from_snr(1.0, 1.0, 1, 1.0, 1.0, 1, 1).unwrap(), 1.0);
        let s = noise_variance_from_snr(1.0, 1.0, 15, 118_125.0, 1.0, 21, 9).unwrap();
        assert!((s - 9375.0).abs() < 1e-9);
        let half = noise_variance_from_snr(2.0, 1.0, 15, 118_125.0, 1.0, 21, 9).unwrap();
        assert!((half - 0.5 * s).abs() < 1e-9);
        assert!(noise_variance_from_snr(0.0, 1.0, 1, 1.0, 1.0, 1, 1).is_err());
        assert!(noise_variance_from_snr(-1.0, 1.0, 1, 1.0, 1.0, 1, 1).is_err());
    }

    struct Small {
        codebook: Codebook,
        code: SpaceTimeCode,
        sig: CompositeSignature,
    }

    fn small(i_amp: f64, active: usize) -> Small {
        let g = RisGeometry::new(2, 2, 0.5).unwrap();
        let part = crate::ris::partition_into(&g, active).unwrap();
        let bf = matched_beamformers(
            &part,
            &g,
            Direction::new(-30.0, 0.0).unwrap(),
            Direction::new(30.0, 0.0).unwrap(),
        );
        let pulse = default_pulse(1.0).unwrap();
        let mut p = params();
        p.delay_spread = 3.0;
        let s = Streams::new(1);
        let st = draw_st_channel(&p, &g, &mut s.rng(Entity::StPhase, 0));
        let tr = draw_tr_channel(&p, &mut s.rng(Entity::TrTaps, 0)).unwrap();
        let i_sr = direct_path(&pulse, 1.0, Complex64::new(i_amp, 0.0), 1.5, 18).unwrap();
        let sig = assemble_composite(&pulse, 1.0, &st, &tr, &g, &part, &bf, 18, i_sr).unwrap();
        let codebook = build_codebook(5).unwrap();
        let subset = MessageSubset::new((1..=active).collect(), 4).unwrap();
        let code = space_time_code(&codebook, &subset, None, &part, &bf).unwrap();
        Small { codebook, code, sig }
    }

    #[test]
    fn noiseless_rank_one_frame() {
        let s = small(0.0, 1);
        let frame = synthesize_frame(&s.code, &s.sig, 0.0, &mut Streams::new(0).rng(Entity::Noise, 0)).unwrap();
        let c = s.codebook.codeword(1);
        for r in 0..5 {
            for k in 0..18 {
                let expect = c[r] * s.sig.betas[0][k].conj();
                assert!((frame.y.get(r, k) - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn interference_adds_identical_rows() {
        let quiet = small(0.0, 2);
        let loud = small(3.0, 2);
        let mut rng = Streams::new(0).rng(Entity::Noise, 0);
        let a = synthesize_frame(&quiet.code, &quiet.sig, 0.0, &mut rng).unwrap();
        let b = synthesize_frame(&loud.code, &loud.sig, 0.0, &mut rng).unwrap();
        for r in 0..5 {
            for k in 0..18 {
                let diff = b.y.get(r, k) - a.y.get(r, k);
                assert!((diff - loud.sig.i_sr[k].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn factored_synthesis_matches_explicit_product() {
        let s = small(2.0, 4);
        let streams = Streams::new(4);
        let a = synthesize_frame(&s.code, &s.sig, 0.3, &mut streams.rng(Entity::Noise, 0)).unwrap();
        let b = synthesize_frame_factored(
            &s.codebook,
            &s.code.assignment,
            &s.sig,
            0.3,
            &mut streams.rng(Entity::Noise, 0),
        )
        .unwrap();
        for (x, y) in a.y.as_slice().iter().zip(b.y.as_slice()) {
            assert!((x - y).norm() <= 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn signal_energy_is_l_times_beta_energy() {
        let s = small(0.0, 4);
        let frame = synthesize_frame(&s.code, &s.sig, 0.0, &mut Streams::new(0).rng(Entity::Noise, 0)).unwrap();
        let expect = 5.0 * s.sig.beta_norms_sq().iter().sum::<f64>();
        assert!((frame.y.norm_sqr() - expect).abs() <= 1e-9 * expect);
    }

    #[test]
    fn noise_has_requested_variance() {
        let s = small(0.0, 1);
        let streams = Streams::new(77);
        let mut rng = streams.rng(Entity::Noise, 0);
        let clean = synthesize_frame(&s.code, &s.sig, 0.0, &mut rng).unwrap();
        let sigma2 = 2.5;
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let f = synthesize_frame(&s.code, &s.sig, sigma2, &mut rng).unwrap();
            // entry (2, 7) minus its known mean
            acc += (f.y.get(2, 7) - clean.y.get(2, 7)).norm_sqr();
        }
        assert!((acc / draws as f64 / sigma2 - 1.0).abs() < 0.02);
        assert!(synthesize_frame(&s.code, &s.sig, -1.0, &mut rng).is_err());
    }

    #[test]
    fn tap_csv_round_trip() {
        let tr = draw_tr_channel(&params(), &mut Streams::new(2).rng(Entity::TrTaps, 0)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("tap,re,im,az_deg,el_deg,delay_s\n"));
        let back = TrChannel::read_csv(buf.as_slice(), tr.kappa, tr.sigma_tr_sq).unwrap();
        assert_eq!(back, tr);
    }
}
