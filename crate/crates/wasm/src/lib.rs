//! Browser bindings: rate curve, beampattern cut and semi-analytic error probability.

use wasm_bindgen::prelude::*;

use ris_backcom::analysis::{rate_curve as core_rate_curve, semianalytic_pe};
use ris_backcom::config::SystemConfig;
use ris_backcom::ris::{beampattern, steering_vector, Direction};
use ris_backcom::rng::Streams;
use ris_backcom::scenario::{Noise, Scenario};

fn js(e: ris_backcom::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Rates for `L = l_min..=l_max` at `active` subarrays.
#[wasm_bindgen(js_name = rateCurve)]
pub fn rate_curve(active: usize, l_min: usize, l_max: usize) -> Result<Vec<f64>, JsError> {
    if l_max < l_min {
        return Err(JsError::new("l_max below l_min"));
    }
    Ok(core_rate_curve(active, l_min..=l_max)
        .map_err(js)?
        .points
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

/// Azimuth cut at zero elevation, in dB relative to the gain toward the target.
#[wasm_bindgen(js_name = beampatternCut)]
pub fn beampattern_cut(
    source_azimuth: f64,
    target_azimuth: f64,
    subarrays: usize,
    codeword_length: usize,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    let cfg = SystemConfig {
        theta_st: [source_azimuth, 0.0],
        theta_bar: [target_azimuth, 0.0],
        subarrays,
        codeword_length,
        ..SystemConfig::default()
    };
    cfg.validate().map_err(js)?;
    let scenario = Scenario::new(&cfg).map_err(js)?;
    let gamma = steering_vector(&scenario.geometry, Direction::new(source_azimuth, 0.0).map_err(js)?);
    let grid = Direction::grid((-90.0, 90.0), points, (0.0, 0.0), 1).map_err(js)?;
    let values = beampattern(
        codeword_length,
        &scenario.beamformers,
        &scenario.partition,
        &scenario.geometry,
        &gamma,
        &grid,
    )
    .map_err(js)?;
    let peak = scenario.peak_beampattern;
    Ok(values
        .into_iter()
        .map(|v| 10.0 * (v / peak).max(1e-12).log10())
        .collect())
}

/// Semi-analytic subset error probability and its standard error.
#[wasm_bindgen(js_name = errorProbability)]
pub fn error_probability(
    snr_db: f64,
    codeword_length: usize,
    delay_spread_samples: usize,
    draws: u64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let cfg = SystemConfig {
        codeword_length,
        delay_spread_samples,
        seed,
        ..SystemConfig::default()
    };
    cfg.validate().map_err(js)?;
    let scenario = Scenario::new(&cfg).map_err(js)?;
    let est = semianalytic_pe(&scenario, Noise::SnrDb(snr_db), draws, &Streams::new(seed)).map_err(js)?;
    Ok(vec![est.value, est.std_error])
}
