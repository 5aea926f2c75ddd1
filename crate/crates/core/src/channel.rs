//! Discrete-time impairment channel.
//!
//! The frame is delayed by a guard of `frame_offset` symbols, optionally
//! shaped with a root raised-cosine filter at 2 samples/symbol, rotated by the
//! carrier frequency offset and Wiener phase noise, loaded with white Gaussian
//! noise calibrated from the OSNR, then matched-filtered back to 1 sample/symbol.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chirp::TrainingSequence;
use crate::error::{invalid, Result};
use crate::signal::ComplexSignal;

const GUARD_STREAM: u64 = 1;
const PHASE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const PAYLOAD_STREAM: u64 = 4;

/// Samples per symbol while the RRC filter is active.
pub const RRC_OVERSAMPLING: usize = 2;

/// Payload constellation, both normalized to unit mean energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadFormat {
    Qam4,
    #[default]
    Qam16,
}

impl PayloadFormat {
    fn draw(self, rng: &mut ChaCha8Rng) -> Complex64 {
        match self {
            Self::Qam4 => {
                let bits: u8 = rng.random_range(0..4);
                let s = |b: bool| if b { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                Complex64::new(s(bits & 1 == 1), s(bits & 2 == 2))
            }
            Self::Qam16 => {
                let level = |v: u8| (2.0 * v as f64 - 3.0) / 10f64.sqrt();
                Complex64::new(level(rng.random_range(0..4)), level(rng.random_range(0..4)))
            }
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_symbols(format: PayloadFormat, len: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..len).map(|_| format.draw(rng)).collect()
}

/// What fills the `frame_offset` symbols ahead of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardStyle {
    /// Random 16-QAM symbols, standing in for the tail of the previous frame.
    #[default]
    Random,
    Zeros,
}

/// Channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// Guard length ahead of the frame, in symbols.
    pub frame_offset: usize,
    pub cfo_hz: f64,
    /// `None` disables the additive noise.
    pub osnr_db: Option<f64>,
    /// Combined transmitter and local-oscillator linewidth.
    pub linewidth_hz: f64,
    /// Symbol rate.
    pub r_s: f64,
    /// OSNR reference bandwidth.
    pub b_ref_hz: f64,
    pub n_pol: u8,
    pub rrc_enabled: bool,
    pub rrc_taps: usize,
    pub rrc_rolloff: f64,
    pub guard: GuardStyle,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            frame_offset: 100,
            cfo_hz: 3e9,
            osnr_db: Some(10.0),
            linewidth_hz: 200e3,
            r_s: 32e9,
            b_ref_hz: 12.5e9,
            n_pol: 2,
            rrc_enabled: false,
            rrc_taps: 73,
            rrc_rolloff: 0.13,
            guard: GuardStyle::Random,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    /// All impairments off except the frame offset.
    pub fn noiseless(frame_offset: usize, r_s: f64) -> Self {
        Self {
            frame_offset,
            cfo_hz: 0.0,
            osnr_db: None,
            linewidth_hz: 0.0,
            r_s,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_s.is_finite() && self.r_s > 0.0) {
            return Err(invalid(format!(
                "symbol rate must be positive, got {}",
                self.r_s
            )));
        }
        if !(self.b_ref_hz.is_finite() && self.b_ref_hz > 0.0) {
            return Err(invalid(format!(
                "reference bandwidth must be positive, got {}",
                self.b_ref_hz
            )));
        }
        if !matches!(self.n_pol, 1 | 2) {
            return Err(invalid(format!("n_pol must be 1 or 2, got {}", self.n_pol)));
        }
        if !(self.linewidth_hz.is_finite() && self.linewidth_hz >= 0.0) {
            return Err(invalid(format!(
                "linewidth must be non-negative, got {}",
                self.linewidth_hz
            )));
        }
        if !self.cfo_hz.is_finite() {
            return Err(invalid("CFO must be finite"));
        }
        if self.osnr_db.is_some_and(|o| o.is_nan()) {
            return Err(invalid("OSNR must not be NaN"));
        }
        if self.rrc_enabled {
            rrc_taps(self.rrc_taps, self.rrc_rolloff, RRC_OVERSAMPLING)?;
        }
        Ok(())
    }

    /// Linear Es/N0 per symbol, or `None` when noiseless.
    pub fn snr(&self) -> Option<f64> {
        self.osnr_db
            .map(|o| osnr_to_snr(o, self.r_s, self.b_ref_hz, self.n_pol))
    }
}

/// Converts OSNR (dB, in `b_ref`) to linear Es/N0 per symbol and polarization:
/// `OSNR 2 b_ref / (n_pol r_s)`.
pub fn osnr_to_snr(osnr_db: f64, r_s: f64, b_ref: f64, n_pol: u8) -> f64 {
    10f64.powf(osnr_db / 10.0) * 2.0 * b_ref / (n_pol as f64 * r_s)
}

/// Training sequence followed by `payload_len` random payload symbols.
pub fn build_frame(
    ts: &TrainingSequence,
    payload_len: usize,
    format: PayloadFormat,
    seed: u64,
) -> ComplexSignal {
    let mut rng = stream_rng(seed, PAYLOAD_STREAM);
    let mut samples = ts.symbols().to_vec();
    samples.extend(random_symbols(format, payload_len, &mut rng));
    ComplexSignal::from_parts(samples, ts.to_signal().sample_rate_hz())
}

/// Energy-normalized root raised-cosine taps, `sum h^2 = 1`.
pub fn rrc_taps(taps: usize, rolloff: f64, sps: usize) -> Result<Vec<f64>> {
    if taps.is_multiple_of(2) || taps == 0 {
        return Err(invalid(format!("RRC tap count must be odd, got {taps}")));
    }
    if !(rolloff > 0.0 && rolloff < 1.0) {
        return Err(invalid(format!(
            "RRC roll-off must lie in (0, 1), got {rolloff}"
        )));
    }
    if sps == 0 {
        return Err(invalid("samples per symbol must be positive"));
    }
    let b = rolloff;
    let mid = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let t = (k as f64 - mid) / sps as f64;
            if t == 0.0 {
                1.0 - b + 4.0 * b / PI
            } else if ((4.0 * b * t).abs() - 1.0).abs() < 1e-9 {
                let a = PI / (4.0 * b);
                b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    Ok(h)
}

fn convolve(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (j, &hj) in h.iter().enumerate() {
            y[i + j] += xi * hj;
        }
    }
    y
}

/// Zero-stuffs symbols to `sps` samples/symbol and applies the filter `h`.
/// The output carries the full convolution tail.
pub fn rrc_shape(symbols: &[Complex64], h: &[f64], sps: usize) -> Vec<Complex64> {
    let mut up = vec![Complex64::new(0.0, 0.0); symbols.len() * sps];
    for (i, &s) in symbols.iter().enumerate() {
        up[i * sps] = s;
    }
    convolve(&up, h)
}

/// Matched-filters `y` with `h` and picks `symbols` samples at the symbol
/// instants of a signal produced by [`rrc_shape`] with the same taps.
pub fn matched_filter_downsample(
    y: &[Complex64],
    h: &[f64],
    sps: usize,
    symbols: usize,
) -> Vec<Complex64> {
    let filtered = convolve(y, h);
    let delay = h.len() - 1;
    (0..symbols).map(|k| filtered[delay + k * sps]).collect()
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Passes the symbol-rate frame `x` through the channel and returns the
/// received signal at 1 sample/symbol, `frame_offset + x.len()` long.
pub fn apply_impairments(x: &ComplexSignal, cfg: &ChannelConfig) -> Result<ComplexSignal> {
    cfg.validate()?;
    let symbols_es = x.mean_power();
    let mut tx = match cfg.guard {
        GuardStyle::Random => random_symbols(
            PayloadFormat::Qam16,
            cfg.frame_offset,
            &mut stream_rng(cfg.seed, GUARD_STREAM),
        ),
        GuardStyle::Zeros => vec![Complex64::new(0.0, 0.0); cfg.frame_offset],
    };
    tx.extend_from_slice(x.samples());
    let symbol_count = tx.len();

    let (mut wave, sps, taps) = if cfg.rrc_enabled {
        let h = rrc_taps(cfg.rrc_taps, cfg.rrc_rolloff, RRC_OVERSAMPLING)?;
        (
            rrc_shape(&tx, &h, RRC_OVERSAMPLING),
            RRC_OVERSAMPLING,
            Some(h),
        )
    } else {
        (tx, 1, None)
    };
    let dt = 1.0 / (cfg.r_s * sps as f64);

    if cfg.cfo_hz != 0.0 || cfg.linewidth_hz > 0.0 {
        let step = (2.0 * PI * cfg.linewidth_hz * dt).sqrt();
        let mut rng = stream_rng(cfg.seed, PHASE_STREAM);
        let mut walk = 0.0;
        for (n, v) in wave.iter_mut().enumerate() {
            if n > 0 && step > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                walk += step * z;
            }
            let phase = (2.0 * PI * cfg.cfo_hz * n as f64 * dt).rem_euclid(2.0 * PI) + walk;
            *v *= Complex64::from_polar(1.0, phase);
        }
    }

    if let Some(snr) = cfg.snr() {
        // per-sample variance that gives Es/N0 = snr after the matched filter
        let variance = symbols_es / snr;
        let mut rng = stream_rng(cfg.seed, NOISE_STREAM);
        for v in wave.iter_mut() {
            *v += complex_gaussian(&mut rng, variance);
        }
    }

    let rx = match taps {
        Some(h) => matched_filter_downsample(&wave, &h, sps, symbol_count),
        None => wave,
    };
    Ok(ComplexSignal::from_parts(rx, cfg.r_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chirp::build_training_sequence;
    use std::f64::consts::FRAC_PI_4;

    const R_S: f64 = 32e9;

    fn mean_power(samples: &[Complex64]) -> f64 {
        samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / samples.len() as f64
    }

    fn ts() -> TrainingSequence {
        build_training_sequence(-FRAC_PI_4, FRAC_PI_4, 512, 1.0 / R_S).unwrap()
    }

    #[test]
    fn osnr_conversion() {
        let snr = osnr_to_snr(10.0, R_S, 12.5e9, 2);
        assert!((snr - 10.0 * 25.0 / 64.0).abs() < 1e-12);
        assert!((10.0 * snr.log10() - 5.918).abs() < 1e-3);
        assert!((osnr_to_snr(7.0, R_S, 32e9, 2) - 10f64.powf(0.7)).abs() < 1e-12);
        assert!((osnr_to_snr(7.0, R_S, 16e9, 1) - 10f64.powf(0.7)).abs() < 1e-12);
    }

    #[test]
    fn frame_contents() {
        let ts = ts();
        assert_eq!(
            build_frame(&ts, 0, PayloadFormat::Qam16, 1).samples(),
            ts.symbols()
        );
        let f = build_frame(&ts, 4096, PayloadFormat::Qam16, 9);
        assert_eq!(f.len(), 1024 + 4096);
        assert!((mean_power(&f.samples()[1024..]) - 1.0).abs() < 0.02);
        let g = build_frame(&ts, 4096, PayloadFormat::Qam4, 9);
        assert!((mean_power(&g.samples()[1024..]) - 1.0).abs() < 1e-12);
        assert_eq!(f, build_frame(&ts, 4096, PayloadFormat::Qam16, 9));
        assert_ne!(f, build_frame(&ts, 4096, PayloadFormat::Qam16, 10));
    }

    #[test]
    fn clean_channel_is_guard_plus_frame() {
        let ts = ts();
        let x = build_frame(&ts, 64, PayloadFormat::Qam16, 3);
        for guard in [GuardStyle::Random, GuardStyle::Zeros] {
            let cfg = ChannelConfig {
                guard,
                ..ChannelConfig::noiseless(100, R_S)
            };
            let y = apply_impairments(&x, &cfg).unwrap();
            assert_eq!(y.len(), 100 + x.len());
            assert_eq!(&y.samples()[100..], x.samples());
            if guard == GuardStyle::Zeros {
                assert!(y.samples()[..100].iter().all(|v| v.norm() == 0.0));
            }
        }
    }

    #[test]
    fn cfo_phase_advance() {
        let x = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 2000], R_S).unwrap();
        let cfg = ChannelConfig {
            cfo_hz: 3e9,
            ..ChannelConfig::noiseless(0, R_S)
        };
        let y = apply_impairments(&x, &cfg).unwrap();
        for (n, v) in y.samples().iter().enumerate() {
            let expected = Complex64::from_polar(1.0, 2.0 * PI * 3e9 * n as f64 / R_S);
            assert!((v - expected).norm() < 1e-9);
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_calibration() {
        let x = build_frame(&ts(), 100_000, PayloadFormat::Qam16, 4);
        for rrc_enabled in [false, true] {
            let cfg = ChannelConfig {
                frame_offset: 0,
                cfo_hz: 0.0,
                linewidth_hz: 0.0,
                osnr_db: Some(10.0),
                rrc_enabled,
                seed: 11,
                ..ChannelConfig::default()
            };
            let clean = apply_impairments(
                &x,
                &ChannelConfig {
                    osnr_db: None,
                    ..cfg.clone()
                },
            )
            .unwrap();
            let noisy = apply_impairments(&x, &cfg).unwrap();
            let noise: Vec<_> = noisy
                .samples()
                .iter()
                .zip(clean.samples())
                .map(|(a, b)| a - b)
                .collect();
            let measured = 10.0 * (x.mean_power() / mean_power(&noise)).log10();
            let target = 10.0 * cfg.snr().unwrap().log10();
            assert!(
                (measured - target).abs() < 0.2,
                "rrc {rrc_enabled}: {measured} vs {target}"
            );
        }
    }

    #[test]
    fn phase_noise_variance_growth() {
        let linewidth = 1e8;
        let len = 400;
        let x = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); len], R_S).unwrap();
        let trials = 100;
        let mut sum_sq = vec![0.0; len];
        for seed in 0..trials {
            let cfg = ChannelConfig {
                linewidth_hz: linewidth,
                seed,
                ..ChannelConfig::noiseless(0, R_S)
            };
            let y = apply_impairments(&x, &cfg).unwrap();
            let mut unwrapped = 0.0;
            let mut prev = 0.0;
            for (n, v) in y.samples().iter().enumerate() {
                let a = v.arg();
                let mut d = a - prev;
                d -= (d / (2.0 * PI)).round() * 2.0 * PI;
                unwrapped += d;
                prev = a;
                sum_sq[n] += unwrapped * unwrapped;
            }
        }
        let step = 2.0 * PI * linewidth / R_S;
        let ratio = (1..len)
            .map(|n| sum_sq[n] / trials as f64 / (step * n as f64))
            .sum::<f64>()
            / (len - 1) as f64;
        assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn phase_noise_increment_variance() {
        let linewidth = 1e8;
        let x = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 4000], R_S).unwrap();
        let (mut sum, mut count) = (0.0, 0usize);
        for seed in 0..50 {
            let cfg = ChannelConfig {
                linewidth_hz: linewidth,
                seed,
                ..ChannelConfig::noiseless(0, R_S)
            };
            let y = apply_impairments(&x, &cfg).unwrap();
            for w in y.samples().windows(2) {
                let d = (w[1] * w[0].conj()).arg();
                sum += d * d;
                count += 1;
            }
        }
        let ratio = sum / count as f64 / (2.0 * PI * linewidth / R_S);
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn determinism() {
        let x = build_frame(&ts(), 512, PayloadFormat::Qam16, 1);
        let cfg = ChannelConfig {
            rrc_enabled: true,
            seed: 77,
            ..ChannelConfig::default()
        };
        let a = apply_impairments(&x, &cfg).unwrap();
        let b = apply_impairments(&x, &cfg).unwrap();
        assert_eq!(a, b);
        let c = apply_impairments(&x, &ChannelConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rrc_filter_shape() {
        let h = rrc_taps(73, 0.13, 2).unwrap();
        assert_eq!(h.len(), 73);
        for k in 0..73 {
            assert!((h[k] - h[72 - k]).abs() < 1e-12);
        }
        assert!((h.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(rrc_taps(72, 0.13, 2).is_err());
        assert!(rrc_taps(73, 0.0, 2).is_err());
        assert!(rrc_taps(73, 1.0, 2).is_err());
        // t = 1/(4 beta) lands on a tap for beta = 0.25 at 1 sample/symbol
        let special = rrc_taps(9, 0.25, 1).unwrap();
        assert!(special.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rrc_round_trip_recovers_symbols() {
        let x = build_frame(&ts(), 2000, PayloadFormat::Qam16, 5);
        let h = rrc_taps(73, 0.13, 2).unwrap();
        let y = matched_filter_downsample(&rrc_shape(x.samples(), &h, 2), &h, 2, x.len());
        let err: f64 = y
            .iter()
            .zip(x.samples())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let nmse = err / x.energy();
        assert!(nmse <= 1e-3, "{nmse}");
    }
}
