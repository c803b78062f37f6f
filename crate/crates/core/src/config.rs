//! System configuration as a flat TOML table. Every key is optional and
//! falls back to the reference experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub carrier_frequency_hz: f64,
    pub pri_s: f64,
    pub bandwidth_hz: f64,
    /// Chips per probing pulse; must be `2^r - 1` for an m-sequence.
    pub processing_gain: usize,
    pub ris_rows: usize,
    pub ris_cols: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub subarrays: usize,
    pub codeword_length: usize,
    /// `[azimuth, elevation]` in degrees.
    pub theta_st: [f64; 2],
    pub theta_bar: [f64; 2],
    pub sigma_st: f64,
    pub sigma_tr: f64,
    pub pulse_power: f64,
    pub tr_taps: usize,
    pub kappa_tr_db: f64,
    pub departure_azimuth: [f64; 2],
    pub departure_elevation: [f64; 2],
    /// Tag-reader delay spread in samples (`(Delta_max - Delta_min) W`).
    pub delay_spread_samples: usize,
    pub snr_grid_db: Vec<f64>,
    pub trials: u64,
    pub channel_draws: u64,
    pub seed: u64,
    /// Source-reader path amplitude relative to `sqrt(pulse_power)`.
    pub interference_amplitude: f64,
    pub interference_delay_samples: f64,
    pub quadrature_rel_tol: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 24e9,
            pri_s: 3e-6,
            bandwidth_hz: 50e6,
            processing_gain: 15,
            ris_rows: 15,
            ris_cols: 15,
            element_spacing: 0.5,
            subarrays: 9,
            codeword_length: 21,
            theta_st: [-45.0, 0.0],
            theta_bar: [45.0, 0.0],
            sigma_st: 1.0,
            sigma_tr: 1.0,
            pulse_power: 1.0,
            tr_taps: 3,
            kappa_tr_db: 10.0,
            departure_azimuth: [33.0, 57.0],
            departure_elevation: [-12.0, 12.0],
            delay_spread_samples: 15,
            snr_grid_db: vec![-5.0, 0.0, 5.0],
            trials: 100_000,
            channel_draws: 10_000,
            seed: 1,
            interference_amplitude: 1.0,
            interference_delay_samples: 0.0,
            quadrature_rel_tol: 1e-8,
        }
    }
}

fn violation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn kappa_linear(&self) -> f64 {
        10f64.powf(self.kappa_tr_db / 10.0)
    }

    pub fn delay_spread_s(&self) -> f64 {
        self.delay_spread_samples as f64 / self.bandwidth_hz
    }

    /// `K_R = G + delay spread`.
    pub fn samples_per_pri(&self) -> usize {
        self.processing_gain + self.delay_spread_samples
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("pri_s", self.pri_s),
            ("bandwidth_hz", self.bandwidth_hz),
            ("element_spacing", self.element_spacing),
            ("pulse_power", self.pulse_power),
            ("quadrature_rel_tol", self.quadrature_rel_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return violation(format!("{key} must be positive and finite, got {v}"));
            }
        }
        for (key, v) in [("sigma_st", self.sigma_st), ("sigma_tr", self.sigma_tr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return violation(format!("{key} must be >= 0 and finite, got {v}"));
            }
        }
        if !self.interference_amplitude.is_finite() || self.interference_amplitude < 0.0 {
            return violation("interference_amplitude must be >= 0 and finite");
        }
        if !self.kappa_tr_db.is_finite() {
            return violation("kappa_tr_db must be finite");
        }
        if !(self.quadrature_rel_tol < 0.1) {
            return violation("quadrature_rel_tol must be below 0.1");
        }
        let g = self.processing_gain;
        if g < 3 || !(g + 1).is_power_of_two() || g > 2047 {
            return violation(format!("processing_gain must be 2^r - 1 with 2 <= r <= 11, got {g}"));
        }
        if self.ris_rows == 0 || self.ris_cols == 0 {
            return violation("RIS must have at least one row and column");
        }
        let m = self.ris_rows * self.ris_cols;
        if self.subarrays == 0 || !m.is_multiple_of(self.subarrays) {
            return violation(format!(
                "N divides M_RIS: {} subarrays do not divide {m} elements",
                self.subarrays
            ));
        }
        if self.codeword_length < self.subarrays + 1 {
            return violation(format!(
                "L >= N+1 violated: codeword_length {} with {} subarrays",
                self.codeword_length, self.subarrays
            ));
        }
        if self.tr_taps == 0 {
            return violation("tr_taps must be >= 1");
        }
        for (key, [lo, hi], limit) in [
            ("departure_azimuth", self.departure_azimuth, 90.0),
            ("departure_elevation", self.departure_elevation, 90.0),
            ("theta_st", [self.theta_st[0], self.theta_st[0]], 90.0),
            ("theta_bar", [self.theta_bar[0], self.theta_bar[0]], 90.0),
        ] {
            if !(lo <= hi && lo >= -limit && hi <= limit) {
                return violation(format!("{key} must be an ordered range inside [-90, 90] degrees"));
            }
        }
        for (key, el) in [("theta_st", self.theta_st[1]), ("theta_bar", self.theta_bar[1])] {
            if !(el.abs() <= 90.0) {
                return violation(format!("{key} elevation must lie in [-90, 90] degrees"));
            }
        }
        let window = self.samples_per_pri() as f64 / self.bandwidth_hz;
        if window > self.pri_s * (1.0 + 1e-12) {
            return violation(format!(
                "pulse plus delay spread ({window} s) exceeds the PRI ({} s)",
                self.pri_s
            ));
        }
        let delay = self.interference_delay_samples;
        if !(delay >= 0.0 && delay <= self.delay_spread_samples as f64) {
            return violation(format!(
                "interference_delay_samples must lie in [0, {}], got {delay}",
                self.delay_spread_samples
            ));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return violation("snr_grid_db entries must be finite");
        }
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 || self.trials > i64::MAX as u64 || self.channel_draws > i64::MAX as u64 {
            return violation("seed, trials and channel_draws must fit in a signed 64-bit integer");
        }
        if self.trials == 0 || self.channel_draws == 0 {
            return violation("trials and channel_draws must be >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_experiment() {
        let cfg = SystemConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, SystemConfig::default());
        assert_eq!(cfg.carrier_frequency_hz, 24e9);
        assert_eq!(cfg.samples_per_pri(), 30);
        assert!((cfg.kappa_linear() - 10.0).abs() < 1e-12);
        assert!((cfg.delay_spread_s() - 3e-7).abs() < 1e-20);
    }

    #[test]
    fn rejects_short_codewords() {
        let err = SystemConfig::from_toml_str("codeword_length = 5").unwrap_err();
        assert!(err.to_string().contains("L >= N+1"), "{err}");
    }

    #[test]
    fn parse_errors_name_the_key() {
        let err = SystemConfig::from_toml_str("subarrays = \"nine\"")
            .unwrap_err()
            .to_string();
        assert!(err.contains("subarrays") && err.contains("line 1"), "{err}");
        let err = SystemConfig::from_toml_str("\n\nbogus_key = 1")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn invariant_violations() {
        for text in [
            "subarrays = 7",
            "processing_gain = 16",
            "pri_s = 1e-7",
            "bandwidth_hz = -1.0",
            "interference_delay_samples = 16.0",
            "departure_azimuth = [57.0, 33.0]",
            "theta_bar = [95.0, 0.0]",
            "trials = 0",
        ] {
            assert!(
                matches!(SystemConfig::from_toml_str(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn save_load_round_trip() {
        let cfg = SystemConfig {
            codeword_length: 31,
            snr_grid_db: vec![-2.5, 7.25],
            seed: i64::MAX as u64,
            ..SystemConfig::default()
        };
        let dir = std::env::temp_dir().join(format!("risbc-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.toml");
        cfg.save(&path).unwrap();
        assert_eq!(SystemConfig::load(&path).unwrap(), cfg);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
