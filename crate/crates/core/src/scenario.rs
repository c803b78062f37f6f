//! A fully built link (array, partition, beamformers, codebook, pulse and
//! channel statistics) from a [`SystemConfig`], plus per-trial draws.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{
    assemble_composite, direct_path, draw_st_channel, draw_tr_channel, noise_variance_from_snr, signatures_from_taps,
    synthesize_frame_factored, ChannelParams, CompositeSignature, ReceivedFrame, StChannel, TrChannel,
};
use crate::codebook::{build_codebook, msequence_pulse, primitive_polynomial, Codebook, MessageSubset, ProbePulse};
use crate::config::SystemConfig;
use crate::error::{invalid, Error, Result};
use crate::ris::{
    beampattern, matched_beamformers, partition_into, steering_vector, BeamformerSet, Direction, RisGeometry,
    SubarrayPartition,
};
use crate::rng::{Entity, Streams};

/// How the receiver noise level is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    /// Calibrated against the beampattern peak and the average tap power.
    SnrDb(f64),
    /// Explicit `sigma^2`.
    Variance(f64),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SystemConfig,
    pub geometry: RisGeometry,
    pub partition: SubarrayPartition,
    pub beamformers: BeamformerSet,
    pub codebook: Codebook,
    pub pulse: ProbePulse,
    pub channel: ChannelParams,
    /// `K_R`.
    pub samples: usize,
    /// `B(theta_bar)` for unit-phase illumination.
    pub peak_beampattern: f64,
    pub interference: Vec<Complex64>,
}

fn direction(v: [f64; 2], key: &str) -> Result<Direction> {
    Direction::new(v[0], v[1]).map_err(|e| Error::Config(format!("{key}: {e}")))
}

impl Scenario {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let geometry = RisGeometry::new(config.ris_rows, config.ris_cols, config.element_spacing)?;
        let partition = partition_into(&geometry, config.subarrays).map_err(|e| Error::Config(e.to_string()))?;
        let theta_st = direction(config.theta_st, "theta_st")?;
        let theta_bar = direction(config.theta_bar, "theta_bar")?;
        let beamformers = matched_beamformers(&partition, &geometry, theta_st, theta_bar);
        let codebook = build_codebook(config.codeword_length)?;
        let degree = (config.processing_gain + 1).trailing_zeros();
        let poly = primitive_polynomial(degree)
            .ok_or_else(|| Error::Config(format!("no m-sequence of length {}", config.processing_gain)))?;
        let pulse = msequence_pulse(degree, &poly, (1 << degree) - 1, config.bandwidth_hz)?;
        let channel = ChannelParams {
            sigma_st: config.sigma_st,
            theta_st,
            sigma_tr_sq: config.sigma_tr * config.sigma_tr,
            kappa: config.kappa_linear(),
            taps: config.tr_taps,
            departure_azimuth: (config.departure_azimuth[0], config.departure_azimuth[1]),
            departure_elevation: (config.departure_elevation[0], config.departure_elevation[1]),
            delay_spread: config.delay_spread_s(),
        };
        let samples = config.samples_per_pri();
        let illumination: Vec<Complex64> = steering_vector(&geometry, theta_st)
            .into_iter()
            .map(|p| p * config.sigma_st)
            .collect();
        let peak_beampattern = beampattern(
            config.codeword_length,
            &beamformers,
            &partition,
            &geometry,
            &illumination,
            &[theta_bar],
        )?[0];
        let interference = direct_path(
            &pulse,
            config.pulse_power,
            Complex64::new(config.interference_amplitude, 0.0),
            config.interference_delay_samples / config.bandwidth_hz,
            samples,
        )?;
        Ok(Self {
            config: config.clone(),
            geometry,
            partition,
            beamformers,
            codebook,
            pulse,
            channel,
            samples,
            peak_beampattern,
            interference,
        })
    }

    pub fn frame_length(&self) -> usize {
        self.codebook.length()
    }

    pub fn active(&self) -> usize {
        self.partition.len()
    }

    pub fn noise_variance(&self, noise: Noise) -> Result<f64> {
        match noise {
            Noise::Variance(v) if v >= 0.0 && v.is_finite() => Ok(v),
            Noise::Variance(v) => invalid(format!("noise variance must be >= 0 and finite, got {v}")),
            Noise::SnrDb(db) => {
                if self.channel.sigma_tr_sq == 0.0 || self.peak_beampattern == 0.0 {
                    return invalid("SNR is undefined without tag-reader gain or illumination; give a noise variance");
                }
                noise_variance_from_snr(
                    10f64.powf(db / 10.0),
                    self.config.pulse_power,
                    self.pulse.len(),
                    self.peak_beampattern,
                    self.channel.sigma_tr_sq,
                    self.frame_length(),
                    self.active(),
                )
            }
        }
    }

    pub fn draw_channels(&self, streams: &Streams, trial: u64) -> Result<(StChannel, TrChannel)> {
        let st = draw_st_channel(&self.channel, &self.geometry, &mut streams.rng(Entity::StPhase, trial));
        let tr = draw_tr_channel(&self.channel, &mut streams.rng(Entity::TrTaps, trial))?;
        Ok((st, tr))
    }

    /// `beta_n` for one channel realization.
    pub fn signatures(&self, st: &StChannel, tr: &TrChannel) -> Result<Vec<Vec<Complex64>>> {
        signatures_from_taps(
            &self.pulse,
            self.config.pulse_power,
            st,
            tr,
            &self.geometry,
            &self.partition,
            &self.beamformers,
            self.samples,
        )
    }

    /// Full composite signature including the source-reader path.
    pub fn composite(&self, st: &StChannel, tr: &TrChannel) -> Result<CompositeSignature> {
        assemble_composite(
            &self.pulse,
            self.config.pulse_power,
            st,
            tr,
            &self.geometry,
            &self.partition,
            &self.beamformers,
            self.samples,
            self.interference.clone(),
        )
    }

    /// Uniform over all `C(L-1, N)` subsets.
    pub fn random_subset<R: Rng>(&self, rng: &mut R) -> MessageSubset {
        let pool = self.codebook.size();
        let picked = rand::seq::index::sample(rng, pool, self.active());
        MessageSubset::new(picked.into_iter().map(|i| i + 1).collect(), pool).expect("sampled subset is valid")
    }

    /// Transmits `subset` with ascending codewords on ascending subarrays.
    pub fn transmit<R: Rng>(
        &self,
        subset: &MessageSubset,
        signature: &CompositeSignature,
        noise_variance: f64,
        rng: &mut R,
    ) -> Result<ReceivedFrame> {
        synthesize_frame_factored(&self.codebook, subset.indices(), signature, noise_variance, rng)
    }

    /// [`Scenario::composite`] without the `A_STR` matrix, for bulk trials.
    pub fn light_composite(&self, betas: Vec<Vec<Complex64>>) -> CompositeSignature {
        CompositeSignature {
            a_str: crate::matrix::CMatrix::zeros(0, 0),
            betas,
            i_sr: self.interference.clone(),
        }
    }
}
