//! Error-probability evaluation: the conditional quadrature averaged over
//! channel draws, the end-to-end Monte Carlo simulator, the rate curve and
//! the parameter sweeps built on them.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codebook::transmission_rate;
use crate::config::SystemConfig;
use crate::detector::{detect_subset, matched_filter_energies};
use crate::error::{invalid, Error, Result};
use crate::rng::{Entity, Streams};
use crate::scenario::{Noise, Scenario};
use crate::specfun::{
    erlang_max_upper_limit, integrate_interval, marcum_saturated, ErlangLadder, MarcumKernel, QuadratureResult,
};

/// Probability that the largest competitor exceeds the cutoff.
pub const QUADRATURE_TAIL_MASS: f64 = 1e-15;
/// A semi-analytic run aborts once more than this fraction of draws fail.
pub const MAX_FAILED_DRAW_FRACTION: f64 = 0.01;
const CHUNK: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "semi-analytic")]
    SemiAnalytic,
    #[serde(rename = "monte-carlo")]
    MonteCarlo,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::SemiAnalytic => "semi-analytic",
            Method::MonteCarlo => "monte-carlo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Trials (Monte Carlo) or channel draws actually averaged.
    pub count: u64,
    pub method: Method,
    /// Draws skipped after a quadrature failure.
    pub failures: u64,
    /// Fraction of wrongly detected codewords (Monte Carlo only).
    pub codeword_error_rate: Option<f64>,
}

/// Neumaier-compensated sum; the result depends only on the input order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn map_range<T, F>(start: u64, end: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (start..end).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (start..end).map(f).collect()
    }
}

/// The error integral for one set of signature energies, with the cutoff
/// and competitor density shared across calls.
#[derive(Debug, Clone)]
pub struct ConditionalSolver {
    frame_length: usize,
    active: usize,
    samples: usize,
    rel_tol: f64,
    upper: f64,
}

impl ConditionalSolver {
    pub fn new(frame_length: usize, active: usize, samples: usize, rel_tol: f64) -> Result<Self> {
        if active == 0 || frame_length < active + 1 {
            return invalid(format!("need L >= N+1 and N >= 1, got L={frame_length}, N={active}"));
        }
        if samples == 0 || samples > u32::MAX as usize {
            return invalid(format!("K_R must be >= 1, got {samples}"));
        }
        if !(rel_tol > 0.0 && rel_tol < 0.1) {
            return invalid(format!("rel_tol must lie in (0, 0.1), got {rel_tol}"));
        }
        let competitors = frame_length - 1 - active;
        let upper = if competitors == 0 {
            0.0
        } else {
            erlang_max_upper_limit(samples as u32, competitors as u32, QUADRATURE_TAIL_MASS)?
        };
        Ok(Self {
            frame_length,
            active,
            samples,
            rel_tol,
            upper,
        })
    }

    pub fn competitors(&self) -> usize {
        self.frame_length - 1 - self.active
    }

    /// `Pr{detected != transmitted | beta}` as
    /// `int (1 - prod_n Q_K(a_n, sqrt(2x))) m f(x) F(x)^(m-1) dx`.
    pub fn error_prob(&self, beta_norms_sq: &[f64], noise_variance: f64) -> Result<QuadratureResult> {
        if beta_norms_sq.len() != self.active {
            return Err(Error::DimensionMismatch {
                context: "signature energies vs subarray count",
                expected: self.active,
                actual: beta_norms_sq.len(),
            });
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return invalid(format!("noise variance must be positive, got {noise_variance}"));
        }
        let m = self.competitors();
        if m == 0 {
            return Ok(QuadratureResult {
                value: 0.0,
                abs_error_estimate: 0.0,
                evaluations: 0,
            });
        }
        let b_max = (2.0 * self.upper).sqrt();
        let mut kernels = Vec::with_capacity(self.active);
        for &e in beta_norms_sq {
            if !(e >= 0.0 && e.is_finite()) {
                return invalid(format!("signature energy must be >= 0, got {e}"));
            }
            let a = (2.0 * self.frame_length as f64 * e / noise_variance).sqrt();
            if !marcum_saturated(a, b_max) {
                kernels.push(MarcumKernel::new(self.samples as u32, a)?);
            }
        }
        if kernels.is_empty() {
            return Ok(QuadratureResult {
                value: 0.0,
                abs_error_estimate: QUADRATURE_TAIL_MASS,
                evaluations: 0,
            });
        }
        let max_order = kernels
            .iter()
            .map(|k| k.max_order())
            .max()
            .unwrap_or(0)
            .max(self.samples);
        let k = self.samples;
        let mf = m as f64;
        let exponent = (m - 1) as i32;
        let integrand = |x: f64| {
            let ladder = ErlangLadder::new(x, max_order);
            let density = mf * ladder.density(k) * ladder.cdf(k).powi(exponent);
            if density == 0.0 {
                return 0.0;
            }
            let log_all_win: f64 = kernels.iter().map(|kern| (-kern.eval_with(&ladder).p).ln_1p()).sum();
            -log_all_win.exp_m1() * density
        };
        let mut r = integrate_interval(integrand, 0.0, self.upper, self.rel_tol, QUADRATURE_TAIL_MASS)?;
        r.value = r.value.clamp(0.0, 1.0);
        r.abs_error_estimate += QUADRATURE_TAIL_MASS;
        Ok(r)
    }
}

/// `Pr{detected != transmitted}` given the signature energies `|beta_n|^2`.
pub fn conditional_error_prob(
    beta_norms_sq: &[f64],
    noise_variance: f64,
    frame_length: usize,
    samples: usize,
    rel_tol: f64,
) -> Result<f64> {
    ConditionalSolver::new(frame_length, beta_norms_sq.len(), samples, rel_tol)?
        .error_prob(beta_norms_sq, noise_variance)
        .map(|r| r.value)
}

/// `1 - conditional_error_prob`.
pub fn conditional_correct_prob(
    beta_norms_sq: &[f64],
    noise_variance: f64,
    frame_length: usize,
    samples: usize,
    rel_tol: f64,
) -> Result<f64> {
    conditional_error_prob(beta_norms_sq, noise_variance, frame_length, samples, rel_tol).map(|e| 1.0 - e)
}

/// Average of the conditional error over `draws` channel realizations, the
/// same realizations [`monte_carlo_pe`] uses for trials `0..draws`.
pub fn semianalytic_pe(scenario: &Scenario, noise: Noise, draws: u64, streams: &Streams) -> Result<PeEstimate> {
    if draws == 0 {
        return invalid("need at least one channel draw");
    }
    let sigma2 = scenario.noise_variance(noise)?;
    let solver = ConditionalSolver::new(
        scenario.frame_length(),
        scenario.active(),
        scenario.samples,
        scenario.config.quadrature_rel_tol,
    )?;
    let per_draw = map_range(0, draws, |d| -> Result<Option<f64>> {
        let (st, tr) = scenario.draw_channels(streams, d)?;
        let norms: Vec<f64> = scenario
            .signatures(&st, &tr)?
            .iter()
            .map(|b| b.iter().map(|x| x.norm_sqr()).sum())
            .collect();
        match solver.error_prob(&norms, sigma2) {
            Ok(r) => Ok(Some(r.value)),
            Err(Error::Convergence { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut values = Vec::with_capacity(per_draw.len());
    let mut failures = 0u64;
    for v in per_draw {
        match v? {
            Some(x) => values.push(x),
            None => failures += 1,
        }
    }
    if failures as f64 > MAX_FAILED_DRAW_FRACTION * draws as f64 {
        return Err(Error::TooManyFailures {
            failed: failures as usize,
            total: draws as usize,
        });
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = if values.len() > 1 {
        compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0)
    } else {
        0.0
    };
    Ok(PeEstimate {
        value: mean.clamp(0.0, 1.0),
        std_error: (var / n).sqrt(),
        count: values.len() as u64,
        method: Method::SemiAnalytic,
        failures,
        codeword_error_rate: None,
    })
}

/// Outcome of one end-to-end trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub subset_error: bool,
    pub wrong_codewords: usize,
}

/// Uniform random message, fresh channel and noise, detection.
pub fn run_trial(scenario: &Scenario, noise_variance: f64, streams: &Streams, trial: u64) -> Result<TrialOutcome> {
    let subset = scenario.random_subset(&mut streams.rng(Entity::Message, trial));
    let (st, tr) = scenario.draw_channels(streams, trial)?;
    let sig = scenario.light_composite(scenario.signatures(&st, &tr)?);
    let frame = scenario.transmit(&subset, &sig, noise_variance, &mut streams.rng(Entity::Noise, trial))?;
    let stats = matched_filter_energies(&frame, &scenario.codebook)?;
    let detected = detect_subset(&stats, scenario.active())?;
    let wrong = detected.indices().iter().filter(|i| !subset.contains(**i)).count();
    Ok(TrialOutcome {
        subset_error: wrong > 0,
        wrong_codewords: wrong,
    })
}

pub fn monte_carlo_pe(scenario: &Scenario, noise: Noise, trials: u64, streams: &Streams) -> Result<PeEstimate> {
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let sigma2 = scenario.noise_variance(noise)?;
    let chunks = trials.div_ceil(CHUNK);
    let counts = map_range(0, chunks, |c| -> Result<(u64, u64)> {
        let mut errors = 0u64;
        let mut wrong = 0u64;
        for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
            let o = run_trial(scenario, sigma2, streams, t)?;
            errors += o.subset_error as u64;
            wrong += o.wrong_codewords as u64;
        }
        Ok((errors, wrong))
    });
    let (mut errors, mut wrong) = (0u64, 0u64);
    for c in counts {
        let (e, w) = c?;
        errors += e;
        wrong += w;
    }
    let p = errors as f64 / trials as f64;
    Ok(PeEstimate {
        value: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        count: trials,
        method: Method::MonteCarlo,
        failures: 0,
        codeword_error_rate: Some(wrong as f64 / (trials as f64 * scenario.active() as f64)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub points: Vec<(usize, f64)>,
}

impl RateCurve {
    /// First `L` attaining the largest rate.
    pub fn argmax(&self) -> Option<(usize, f64)> {
        self.points
            .iter()
            .copied()
            .fold(None, |best: Option<(usize, f64)>, p| match best {
                Some(b) if b.1 >= p.1 => Some(b),
                _ => Some(p),
            })
    }
}

pub fn rate_curve(active: usize, lengths: std::ops::RangeInclusive<usize>) -> Result<RateCurve> {
    if *lengths.start() < active + 1 {
        return invalid(format!("lengths must start at N+1 = {} or above", active + 1));
    }
    let points = lengths
        .map(|l| transmission_rate(l, active).map(|r| (l, r)))
        .collect::<Result<_>>()?;
    Ok(RateCurve { points })
}

/// One line of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_var: f64,
    pub snr_db: f64,
    pub pe: f64,
    pub std_err: f64,
    pub trials: u64,
    pub method: Method,
    pub seed: u64,
}

impl SweepRow {
    fn from_estimate(sweep_var: f64, snr_db: f64, est: &PeEstimate, seed: u64) -> Self {
        Self {
            sweep_var,
            snr_db,
            pe: est.value,
            std_err: est.std_error,
            trials: est.count,
            method: est.method,
            seed,
        }
    }
}

/// Which estimators a sweep evaluates at each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPlan {
    pub trials: u64,
    /// Channel draws for a semi-analytic overlay, if any.
    pub channel_draws: Option<u64>,
}

fn sweep<F>(config: &SystemConfig, snr_db: &[f64], points: &[usize], plan: SweepPlan, apply: F) -> Result<Vec<SweepRow>>
where
    F: Fn(&mut SystemConfig, usize),
{
    let streams = Streams::new(config.seed);
    let mut rows = Vec::new();
    for &p in points {
        let mut cfg = config.clone();
        apply(&mut cfg, p);
        let scenario = Scenario::new(&cfg)?;
        for &snr in snr_db {
            let mc = monte_carlo_pe(&scenario, Noise::SnrDb(snr), plan.trials, &streams)?;
            rows.push(SweepRow::from_estimate(p as f64, snr, &mc, config.seed));
            if let Some(draws) = plan.channel_draws {
                let sa = semianalytic_pe(&scenario, Noise::SnrDb(snr), draws, &streams)?;
                rows.push(SweepRow::from_estimate(p as f64, snr, &sa, config.seed));
            }
        }
    }
    Ok(rows)
}

/// `P_e` against the codeword length `L`.
pub fn sweep_pe_vs_length(
    config: &SystemConfig,
    snr_db: &[f64],
    lengths: &[usize],
    plan: SweepPlan,
) -> Result<Vec<SweepRow>> {
    sweep(config, snr_db, lengths, plan, |c, l| c.codeword_length = l)
}

/// `P_e` against the delay spread in samples; `K_R = G + spread`.
pub fn sweep_pe_vs_delay_spread(
    config: &SystemConfig,
    snr_db: &[f64],
    spreads: &[usize],
    plan: SweepPlan,
) -> Result<Vec<SweepRow>> {
    sweep(config, snr_db, spreads, plan, |c, s| {
        c.delay_spread_samples = s;
        c.interference_delay_samples = c.interference_delay_samples.min(s as f64);
    })
}

pub const SWEEP_HEADER: [&str; 7] = ["sweep_var", "snr_db", "pe", "std_err", "trials", "method", "seed"];

/// CSV with header `sweep_var,snr_db,pe,std_err,trials,method,seed`; floats
/// use shortest round-trip formatting.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(e.to_string());
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.sweep_var.to_string(),
            r.snr_db.to_string(),
            r.pe.to_string(),
            r.std_err.to_string(),
            r.trials.to_string(),
            r.method.to_string(),
            r.seed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(e.to_string()))
}
