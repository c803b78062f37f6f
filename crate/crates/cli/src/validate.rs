use std::path::Path;

use ris_backcom::analysis::{monte_carlo_pe, rate_curve, semianalytic_pe};
use ris_backcom::channel::synthesize_frame;
use ris_backcom::codebook::message_count;
use ris_backcom::config::SystemConfig;
use ris_backcom::detector::{detect_subset, matched_filter_energies};
use ris_backcom::ris::{beampattern, beampattern_explicit, space_time_code, steering_vector, Direction};
use ris_backcom::rng::{Entity, Streams};
use ris_backcom::scenario::{Noise, Scenario};
use ris_backcom::specfun::{erlang_cdf, marcum_q};
use ris_backcom::Result;

use crate::CliError;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Small link used by the statistical checks.
fn small_link(base: &SystemConfig) -> SystemConfig {
    SystemConfig {
        ris_rows: 2,
        ris_cols: 2,
        subarrays: 2,
        codeword_length: 5,
        ..base.clone()
    }
}

pub fn run_all(cfg: &SystemConfig) -> Vec<Check> {
    vec![
        check("rate_argmax", rate_argmax()),
        check("marcum_references", marcum_references()),
        check("erlang_closed_form", erlang_closed_form()),
        check("noiseless_detection", noiseless_detection(cfg)),
        check("beampattern_invariance", beampattern_invariance(cfg)),
        check("zero_signal_error_rate", zero_signal(cfg)),
        check("interference_invariance", interference_invariance(cfg)),
        check("estimator_agreement", estimator_agreement(cfg)),
        check("determinism", determinism(cfg)),
    ]
}

pub fn write_csv(checks: &[Check], out: &Path) -> std::result::Result<(), CliError> {
    let err = |e: csv::Error| CliError::Config(format!("{}: {e}", out.display()));
    let mut w = csv::Writer::from_path(out).map_err(err)?;
    w.write_record(["check", "passed", "detail"]).map_err(err)?;
    for c in checks {
        w.write_record([c.name, if c.passed { "true" } else { "false" }, &c.detail])
            .map_err(err)?;
    }
    w.flush()
        .map_err(|e| CliError::Config(format!("{}: {e}", out.display())))
}

fn rate_argmax() -> Result<(bool, String)> {
    let (l, r) = rate_curve(9, 10..=60)?.argmax().expect("non-empty range");
    Ok((
        l == 21 && (r - 0.82656).abs() < 1e-5,
        format!("N=9 argmax L={l} rate={r:.6}"),
    ))
}

fn bessel_i0(x: f64) -> f64 {
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-17 * sum {
        term *= (x / 2.0) * (x / 2.0) / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn marcum_references() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for k in 1..=6u32 {
        for b in [0.3, 1.0, 2.5, 4.0] {
            let y: f64 = b * b / 2.0;
            let mut term = 1.0;
            let mut sum = 1.0;
            for j in 1..k {
                term *= y / j as f64;
                sum += term;
            }
            worst = worst.max((marcum_q(k, 0.0, b)? - (-y).exp() * sum).abs());
        }
    }
    // Q1(a, a) = (1 + exp(-a^2) I0(a^2)) / 2
    for a in [0.5f64, 1.0, 2.0, 3.0] {
        let want = 0.5 * (1.0 + (-a * a).exp() * bessel_i0(a * a));
        worst = worst.max((marcum_q(1, a, a)? - want).abs());
    }
    Ok((worst < 1e-10, format!("worst abs error {worst:.2e}")))
}

fn erlang_closed_form() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for k in 1..=10u32 {
        for x in [0.1, 1.0, 3.5, 10.0, 20.0] {
            let mut term = 1.0;
            let mut sum = 1.0;
            for j in 1..k {
                term *= x / j as f64;
                sum += term;
            }
            worst = worst.max((erlang_cdf(k, x)? - (1.0 - (-x).exp() * sum)).abs());
        }
    }
    Ok((worst <= 1e-12, format!("worst abs error {worst:.2e}")))
}

fn noiseless_detection(cfg: &SystemConfig) -> Result<(bool, String)> {
    let scenario = Scenario::new(cfg)?;
    let streams = Streams::new(cfg.seed);
    let frames = 50;
    let mut errors = 0;
    for trial in 0..frames {
        let sent = scenario.random_subset(&mut streams.rng(Entity::Message, trial));
        let (st, tr) = scenario.draw_channels(&streams, trial)?;
        let sig = scenario.composite(&st, &tr)?;
        let code = space_time_code(
            &scenario.codebook,
            &sent,
            None,
            &scenario.partition,
            &scenario.beamformers,
        )?;
        let frame = synthesize_frame(&code, &sig, 0.0, &mut streams.rng(Entity::Noise, trial))?;
        let got = detect_subset(&matched_filter_energies(&frame, &scenario.codebook)?, scenario.active())?;
        errors += (got != sent) as usize;
    }
    Ok((errors == 0, format!("{errors} subset errors in {frames} frames")))
}

fn beampattern_invariance(cfg: &SystemConfig) -> Result<(bool, String)> {
    let scenario = Scenario::new(cfg)?;
    let streams = Streams::new(cfg.seed);
    let gamma: Vec<_> = steering_vector(&scenario.geometry, Direction::new(cfg.theta_st[0], cfg.theta_st[1])?)
        .into_iter()
        .map(|p| p * cfg.sigma_st)
        .collect();
    let grid = Direction::grid((-90.0, 90.0), 19, (-30.0, 30.0), 5)?;
    let closed = beampattern(
        scenario.frame_length(),
        &scenario.beamformers,
        &scenario.partition,
        &scenario.geometry,
        &gamma,
        &grid,
    )?;
    let peak = closed.iter().cloned().fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let subset = scenario.random_subset(&mut streams.rng(Entity::Message, trial));
        let code = space_time_code(
            &scenario.codebook,
            &subset,
            None,
            &scenario.partition,
            &scenario.beamformers,
        )?;
        for (a, b) in beampattern_explicit(&code, &scenario.geometry, &gamma, &grid)?
            .iter()
            .zip(&closed)
        {
            worst = worst.max((a - b).abs() / peak);
        }
    }
    let target = Direction::new(cfg.theta_bar[0], cfg.theta_bar[1])?;
    let at_target = beampattern(
        scenario.frame_length(),
        &scenario.beamformers,
        &scenario.partition,
        &scenario.geometry,
        &gamma,
        &[target],
    )?[0];
    let m = scenario.partition.subarray_size() as f64;
    let expected = (scenario.frame_length() * scenario.active()) as f64 * m * m * cfg.sigma_st * cfg.sigma_st;
    let peak_ok = (at_target - expected).abs() <= 1e-9 * expected;
    Ok((
        worst <= 1e-9 && peak_ok,
        format!("max deviation {worst:.1e} of peak, target gain {at_target:.3} (expected {expected})"),
    ))
}

fn zero_signal(cfg: &SystemConfig) -> Result<(bool, String)> {
    let small = SystemConfig {
        sigma_tr: 0.0,
        ..small_link(cfg)
    };
    let scenario = Scenario::new(&small)?;
    let count = message_count(small.codeword_length, small.subarrays)?;
    let target = 1.0 - 1.0 / count.to_string().parse::<f64>().unwrap_or(f64::INFINITY);
    let sa = semianalytic_pe(&scenario, Noise::Variance(1.0), 20, &Streams::new(small.seed))?;
    Ok((
        (sa.value - target).abs() <= 1e-6,
        format!("semi-analytic {:.9} target {target:.9}", sa.value),
    ))
}

fn interference_invariance(cfg: &SystemConfig) -> Result<(bool, String)> {
    let streams = Streams::new(cfg.seed);
    let mut runs = Vec::new();
    for amplitude in [0.0, 1e3] {
        let c = SystemConfig {
            interference_amplitude: amplitude,
            ..cfg.clone()
        };
        let scenario = Scenario::new(&c)?;
        let sigma2 = scenario.noise_variance(Noise::SnrDb(0.0))?;
        let mut detections = Vec::new();
        for trial in 0..20 {
            let sent = scenario.random_subset(&mut streams.rng(Entity::Message, trial));
            let (st, tr) = scenario.draw_channels(&streams, trial)?;
            let sig = scenario.composite(&st, &tr)?;
            let code = space_time_code(
                &scenario.codebook,
                &sent,
                None,
                &scenario.partition,
                &scenario.beamformers,
            )?;
            let frame = synthesize_frame(&code, &sig, sigma2, &mut streams.rng(Entity::Noise, trial))?;
            detections.push(detect_subset(
                &matched_filter_energies(&frame, &scenario.codebook)?,
                scenario.active(),
            )?);
        }
        runs.push(detections);
    }
    let differing = runs[0].iter().zip(&runs[1]).filter(|(a, b)| a != b).count();
    Ok((
        differing == 0,
        format!("{differing} of 20 detections changed under strong interference"),
    ))
}

fn estimator_agreement(cfg: &SystemConfig) -> Result<(bool, String)> {
    let small = small_link(cfg);
    let scenario = Scenario::new(&small)?;
    let streams = Streams::new(small.seed);
    let mc = monte_carlo_pe(&scenario, Noise::SnrDb(0.0), 20_000, &streams)?;
    let sa = semianalytic_pe(&scenario, Noise::SnrDb(0.0), 2_000, &streams)?;
    let se = (mc.std_error.powi(2) + sa.std_error.powi(2)).sqrt();
    let z = (mc.value - sa.value).abs() / se;
    Ok((z <= 4.0, format!("MC {:.4e} SA {:.4e} ({z:.2} se)", mc.value, sa.value)))
}

fn determinism(cfg: &SystemConfig) -> Result<(bool, String)> {
    let small = small_link(cfg);
    let scenario = Scenario::new(&small)?;
    let streams = Streams::new(small.seed);
    let a = monte_carlo_pe(&scenario, Noise::SnrDb(0.0), 5_000, &streams)?;
    let b = monte_carlo_pe(&scenario, Noise::SnrDb(0.0), 5_000, &streams)?;
    let c = semianalytic_pe(&scenario, Noise::SnrDb(0.0), 200, &streams)?;
    let d = semianalytic_pe(&scenario, Noise::SnrDb(0.0), 200, &streams)?;
    let same = a.value.to_bits() == b.value.to_bits() && c.value.to_bits() == d.value.to_bits();
    Ok((
        same,
        format!("repeat runs {}", if same { "bit-identical" } else { "differ" }),
    ))
}
