use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Sampling, pulse shaping and power budget of the training waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    /// Carrier frequency, Hz.
    pub fc: f64,
    /// Bandwidth, Hz.
    pub bandwidth: f64,
    /// Sampling interval, seconds; `1 / bandwidth`.
    pub ts: f64,
    /// Number of delay taps.
    pub nd: usize,
    /// Raised-cosine roll-off.
    pub rolloff: f64,
    /// Pilot length.
    pub q: usize,
    /// Transmit power, dBm.
    pub pt_dbm: f64,
    /// Complex noise variance per sample, W.
    pub noise_psd: f64,
    /// Time reference subtracted from path ToAs; tap `d` samples `d·ts − (toa − t_off)`.
    pub t_off: f64,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        let bandwidth = 1e9;
        Self {
            fc: 73e9,
            bandwidth,
            ts: 1.0 / bandwidth,
            nd: 64,
            rolloff: 0.4,
            q: 64,
            pt_dbm: 40.0,
            // kTB over 1 GHz (-84 dBm) plus a 10 dB noise figure.
            noise_psd: dbm_to_watts(-74.0),
            t_off: 0.0,
        }
    }
}

impl WaveformConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    pub fn pt_watts(&self) -> f64 {
        dbm_to_watts(self.pt_dbm)
    }

    /// Latest in-window delay that keeps the pulse tail inside the taps.
    pub fn max_delay(&self) -> f64 {
        (self.nd as f64 - 1.0 - DELAY_GUARD_TAPS) * self.ts
    }

    pub fn validate(&self) -> crate::Result<()> {
        let rel = (self.ts * self.bandwidth - 1.0).abs();
        if rel > 1e-9 {
            return Err(crate::Error::Config("ts must equal 1/bandwidth".into()));
        }
        if self.nd == 0 || self.q == 0 {
            return Err(crate::Error::Config("nd and q must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(crate::Error::Config("rolloff must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Guard, in taps, kept free at the end of the delay window.
pub const DELAY_GUARD_TAPS: f64 = 4.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Raised-cosine pulse at time `t`.
pub fn raised_cosine(t: f64, cfg: &WaveformConfig) -> f64 {
    let x = t / cfg.ts;
    let beta = cfg.rolloff;
    if beta == 0.0 {
        return sinc(x);
    }
    let den = 1.0 - (2.0 * beta * x).powi(2);
    if den.abs() < 1e-10 {
        (PI / 4.0) * sinc(1.0 / (2.0 * beta))
    } else {
        sinc(x) * (PI * beta * x).cos() / den
    }
}

/// Delay response `[p(t)]_n = f_p(n·ts − t)` over the `nd` taps.
pub fn delay_response(t: f64, cfg: &WaveformConfig) -> Vec<f64> {
    (0..cfg.nd)
        .map(|n| raised_cosine(n as f64 * cfg.ts - t, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn peak_and_zero_crossings() {
        let cfg = WaveformConfig::default();
        assert_eq!(raised_cosine(0.0, &cfg), 1.0);
        for k in [-5i32, -1, 1, 3, 17] {
            assert_abs_diff_eq!(raised_cosine(k as f64 * cfg.ts, &cfg), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn removable_singularity_matches_two_sided_limit() {
        let cfg = WaveformConfig::default();
        let t0 = cfg.ts / (2.0 * 0.4);
        let exact = raised_cosine(t0, &cfg);
        assert_abs_diff_eq!(exact, PI / 4.0 * sinc(1.0 / 0.8), epsilon = 1e-15);
        let lo = raised_cosine(t0 - 1e-9 * cfg.ts, &cfg);
        let hi = raised_cosine(t0 + 1e-9 * cfg.ts, &cfg);
        assert_abs_diff_eq!(exact, lo, epsilon = 1e-6);
        assert_abs_diff_eq!(exact, hi, epsilon = 1e-6);
        assert_abs_diff_eq!(raised_cosine(-t0, &cfg), exact, epsilon = 1e-15);
    }

    #[test]
    fn pulse_energy_stays_confined() {
        let cfg = WaveformConfig::default();
        let lo = DELAY_GUARD_TAPS * cfg.ts;
        for i in 0..=400 {
            let t = lo + (cfg.max_delay() - lo) * i as f64 / 400.0;
            let e: f64 = delay_response(t, &cfg).iter().map(|v| v * v).sum();
            assert!((0.5..=1.5).contains(&e), "t = {t}, energy {e}");
        }
    }
}
