use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use num_bigint::BigUint;

use ris_backcom::analysis::{rate_curve, sweep_pe_vs_delay_spread, sweep_pe_vs_length, write_sweep_csv, SweepPlan};
use ris_backcom::channel::synthesize_frame;
use ris_backcom::codebook::{bits_per_frame, encode_value};
use ris_backcom::config::SystemConfig;
use ris_backcom::detector::{decode_message, detect_subset, matched_filter_energies, DecodedMessage};
use ris_backcom::ris::{beampattern, beampattern_explicit, space_time_code, steering_vector, Direction};
use ris_backcom::rng::{Entity, Streams};
use ris_backcom::scenario::{Noise, Scenario};

use crate::manifest::RunManifest;
use crate::{validate, Cli, CliError, Command};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| io_err(path, e)
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Rate { .. } => "rate",
        Command::PeVsL { .. } => "pe-vs-l",
        Command::PeVsSpread { .. } => "pe-vs-spread",
        Command::Beampattern { .. } => "beampattern",
        Command::SingleFrame { .. } => "single-frame",
        Command::Validate => "validate",
        Command::ChannelDump { .. } => "channel-dump",
        Command::Replay { .. } => "replay",
    }
}

fn effective_config(cli: &Cli, preset: Option<SystemConfig>) -> Result<SystemConfig, CliError> {
    let mut cfg = match (preset, &cli.global.config) {
        (Some(cfg), _) => cfg,
        (None, Some(path)) => SystemConfig::load(path)?,
        (None, None) => SystemConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.global.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_hex(message: &str) -> Result<BigUint, CliError> {
    let digits = message.trim_start_matches("0x").trim_start_matches("0X");
    if digits.is_empty() {
        return Err(CliError::Usage(format!("empty hex message {message:?}")));
    }
    BigUint::parse_bytes(digits.as_bytes(), 16).ok_or_else(|| CliError::Usage(format!("not a hex number: {message:?}")))
}

fn fmt_subset(indices: &[usize]) -> String {
    let parts: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Runs one parsed command line. `preset` replaces config loading on replay.
pub fn run(cli: &Cli, args: &[String], preset: Option<SystemConfig>) -> Result<(), CliError> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(cli, manifest);
    }
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        // a second initialization (replay) keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = effective_config(cli, preset)?;
    let name = command_name(&cli.command);
    let out = cli
        .global
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    match &cli.command {
        Command::Rate { n, l_min, l_max } => rate(&cfg, *n, *l_min, *l_max, &out)?,
        Command::PeVsL { lengths, sweep } => {
            let (snrs, plan) = sweep_setup(&cfg, sweep);
            let rows = sweep_pe_vs_length(&cfg, &snrs, lengths, plan)?;
            let file = File::create(&out).map_err(|e| io_err(&out, e))?;
            write_sweep_csv(&rows, file)?;
        }
        Command::PeVsSpread { spreads, sweep } => {
            let (snrs, plan) = sweep_setup(&cfg, sweep);
            let rows = sweep_pe_vs_delay_spread(&cfg, &snrs, spreads, plan)?;
            let file = File::create(&out).map_err(|e| io_err(&out, e))?;
            write_sweep_csv(&rows, file)?;
        }
        Command::Beampattern {
            az_min,
            az_max,
            n_az,
            el_min,
            el_max,
            n_el,
            message,
        } => beam(
            &cfg,
            (*az_min, *az_max, *n_az),
            (*el_min, *el_max, *n_el),
            message.as_deref(),
            &out,
        )?,
        Command::SingleFrame { message, snr_db, trial } => single_frame(&cfg, message, *snr_db, *trial, &out)?,
        Command::Validate => {
            let checks = validate::run_all(&cfg);
            validate::write_csv(&checks, &out)?;
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            for c in &checks {
                println!(
                    "{:<34} {}  {}",
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.detail
                );
            }
            RunManifest::new(name, args, &out, &cfg).write(&out)?;
            if !failed.is_empty() {
                return Err(CliError::Validation(failed.join(", ")));
            }
            return Ok(());
        }
        Command::ChannelDump { trial } => {
            let scenario = Scenario::new(&cfg)?;
            let (_, tr) = scenario.draw_channels(&Streams::new(cfg.seed), *trial)?;
            let file = File::create(&out).map_err(|e| io_err(&out, e))?;
            tr.write_csv(file)?;
        }
        Command::Replay { .. } => unreachable!(),
    }
    RunManifest::new(name, args, &out, &cfg).write(&out)?;
    Ok(())
}

fn replay(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let m = RunManifest::read(path)?;
    let mut argv = vec!["risbc".to_string()];
    argv.extend(m.args.iter().cloned());
    let mut recorded = Cli::try_parse_from(&argv).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if matches!(recorded.command, Command::Replay { .. }) {
        return Err(CliError::Config("a manifest cannot record a replay".into()));
    }
    recorded.global.out = Some(cli.global.out.clone().unwrap_or_else(|| PathBuf::from(&m.output)));
    if cli.global.threads.is_some() {
        recorded.global.threads = cli.global.threads;
    }
    // seed and trials are already folded into the recorded config
    recorded.global.seed = None;
    recorded.global.trials = None;
    run(&recorded, &m.args, Some(m.config))
}

fn sweep_setup(cfg: &SystemConfig, sweep: &crate::SweepArgs) -> (Vec<f64>, SweepPlan) {
    let snrs = if sweep.snr_db.is_empty() {
        cfg.snr_grid_db.clone()
    } else {
        sweep.snr_db.clone()
    };
    let plan = SweepPlan {
        trials: cfg.trials,
        channel_draws: sweep.semi_analytic.then(|| sweep.draws.unwrap_or(cfg.channel_draws)),
    };
    (snrs, plan)
}

fn rate(cfg: &SystemConfig, n: Option<usize>, l_min: usize, l_max: usize, out: &Path) -> Result<(), CliError> {
    let n = n.unwrap_or(cfg.subarrays);
    if l_max < l_min {
        return Err(CliError::Usage(format!("--l-max {l_max} is below --l-min {l_min}")));
    }
    let curve = rate_curve(n, l_min..=l_max)?;
    let mut w = csv::Writer::from_path(out).map_err(csv_err(out))?;
    w.write_record(["l", "n", "rate", "bits_per_frame"])
        .map_err(csv_err(out))?;
    for &(l, r) in &curve.points {
        w.write_record([
            l.to_string(),
            n.to_string(),
            r.to_string(),
            bits_per_frame(l, n)?.to_string(),
        ])
        .map_err(csv_err(out))?;
    }
    w.flush().map_err(|e| io_err(out, e))?;
    if let Some((l, r)) = curve.argmax() {
        println!("argmax L={l} rate={r}");
    }
    Ok(())
}

fn beam(
    cfg: &SystemConfig,
    (az_min, az_max, n_az): (f64, f64, usize),
    (el_min, el_max, n_el): (f64, f64, usize),
    message: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let scenario = Scenario::new(cfg)?;
    let grid = Direction::grid((az_min, az_max), n_az, (el_min, el_max), n_el)?;
    let theta_st = Direction::new(cfg.theta_st[0], cfg.theta_st[1])?;
    let gamma: Vec<_> = steering_vector(&scenario.geometry, theta_st)
        .into_iter()
        .map(|p| p * cfg.sigma_st)
        .collect();
    let values = match message {
        None => beampattern(
            scenario.frame_length(),
            &scenario.beamformers,
            &scenario.partition,
            &scenario.geometry,
            &gamma,
            &grid,
        )?,
        Some(hex) => {
            let subset = encode_value(&parse_hex(hex)?, cfg.codeword_length, cfg.subarrays)?;
            let code = space_time_code(
                &scenario.codebook,
                &subset,
                None,
                &scenario.partition,
                &scenario.beamformers,
            )?;
            beampattern_explicit(&code, &scenario.geometry, &gamma, &grid)?
        }
    };
    let mut w = csv::Writer::from_path(out).map_err(csv_err(out))?;
    w.write_record(["azimuth_deg", "elevation_deg", "beampattern"])
        .map_err(csv_err(out))?;
    for (d, v) in grid.iter().zip(&values) {
        w.write_record([d.azimuth.to_string(), d.elevation.to_string(), v.to_string()])
            .map_err(csv_err(out))?;
    }
    w.flush().map_err(|e| io_err(out, e))?;
    Ok(())
}

fn single_frame(cfg: &SystemConfig, message: &str, snr_db: f64, trial: u64, out: &Path) -> Result<(), CliError> {
    let scenario = Scenario::new(cfg)?;
    let value = parse_hex(message)?;
    let (length, active) = (cfg.codeword_length, cfg.subarrays);
    let sent = encode_value(&value, length, active).map_err(|e| CliError::Usage(e.to_string()))?;
    let streams = Streams::new(cfg.seed);
    let (st, tr) = scenario.draw_channels(&streams, trial)?;
    let sig = scenario.composite(&st, &tr)?;
    let code = space_time_code(
        &scenario.codebook,
        &sent,
        None,
        &scenario.partition,
        &scenario.beamformers,
    )?;
    let sigma2 = scenario.noise_variance(Noise::SnrDb(snr_db))?;
    let frame = synthesize_frame(&code, &sig, sigma2, &mut streams.rng(Entity::Noise, trial))?;
    let stats = matched_filter_energies(&frame, &scenario.codebook)?;
    let detected = detect_subset(&stats, active)?;

    let mut w = csv::Writer::from_path(out).map_err(csv_err(out))?;
    w.write_record(["codeword", "statistic", "transmitted", "detected"])
        .map_err(csv_err(out))?;
    for (i, t) in stats.t_values.iter().enumerate() {
        let idx = i + 1;
        w.write_record([
            idx.to_string(),
            t.to_string(),
            (sent.contains(idx) as u8).to_string(),
            (detected.contains(idx) as u8).to_string(),
        ])
        .map_err(csv_err(out))?;
    }
    w.flush().map_err(|e| io_err(out, e))?;

    let width = bits_per_frame(length, active)?;
    let decoded = match decode_message(&detected, length, active)? {
        DecodedMessage::Bits(bits) => {
            let v = bits
                .iter()
                .fold(BigUint::from(0u32), |acc, &b| (acc << 1u32) + BigUint::from(b as u32));
            format!("{v:#x}")
        }
        DecodedMessage::Erasure => "erasure".into(),
    };
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "payload bits: {width}");
    let _ = writeln!(stdout, "message:      {value:#x}");
    let _ = writeln!(stdout, "transmitted:  {}", fmt_subset(sent.indices()));
    let _ = writeln!(stdout, "detected:     {}", fmt_subset(detected.indices()));
    let _ = writeln!(stdout, "decoded:      {decoded}");
    let _ = writeln!(stdout, "match:        {}", if detected == sent { "yes" } else { "no" });
    Ok(())
}
