//! Comparison synchronizers: Schmidl-Cox timing on a two-half training
//! sequence, and a delay-correlation CFO estimator on a periodic one.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Training sequence made of `repetitions` copies of a random 4-QAM segment.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedTs {
    segment: Vec<Complex64>,
    repetitions: usize,
}

impl RepeatedTs {
    pub fn new(segment: Vec<Complex64>, repetitions: usize) -> Result<Self> {
        if segment.is_empty() {
            return Err(invalid("segment must not be empty"));
        }
        if repetitions < 2 {
            return Err(invalid(format!(
                "need at least two repetitions, got {repetitions}"
            )));
        }
        Ok(Self {
            segment,
            repetitions,
        })
    }

    /// Random 4-QAM segment of `segment_len` symbols.
    pub fn random(segment_len: usize, repetitions: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let segment = (0..segment_len)
            .map(|_| {
                let s = |b: bool| if b { a } else { -a };
                Complex64::new(s(rng.random()), s(rng.random()))
            })
            .collect();
        Self::new(segment, repetitions)
    }

    pub fn segment(&self) -> &[Complex64] {
        &self.segment
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn len(&self) -> usize {
        self.segment.len() * self.repetitions
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbols(&self) -> Vec<Complex64> {
        self.segment.repeat(self.repetitions)
    }
}

/// How the Schmidl-Cox timing point is read off the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingRule {
    /// Midpoint of the contiguous run within 1% of the maximum.
    #[default]
    PlateauMidpoint,
    /// First maximum.
    Argmax,
}

/// Schmidl-Cox timing metric `M(d) = |P(d)|^2 / R(d)^2` for `d` in
/// `0..search_len`, where `P(d) = sum_m r*(d+m) r(d+m+L)` and
/// `R(d) = (1/2) sum_{m<2L} |r(d+m)|^2`, so `M <= 1`.
///
/// Returns the timing point picked by `rule` and the metric trace.
pub fn schmidl_cox_timing(
    received: &[Complex64],
    half_len: usize,
    search_len: usize,
    rule: TimingRule,
) -> Result<(usize, Vec<f64>)> {
    if half_len == 0 || search_len == 0 {
        return Err(invalid("half length and search length must be positive"));
    }
    let need = search_len - 1 + 2 * half_len;
    if received.len() < need {
        return Err(invalid(format!(
            "received signal has {} samples, the search needs {need}",
            received.len()
        )));
    }
    let l = half_len;
    let r = received;
    let mut p: Complex64 = (0..l).map(|m| r[m].conj() * r[m + l]).sum();
    let mut e: f64 = (0..2 * l).map(|m| r[m].norm_sqr()).sum();
    let mut metric = Vec::with_capacity(search_len);
    for d in 0..search_len {
        if d > 0 {
            p += r[d + l - 1].conj() * r[d + 2 * l - 1] - r[d - 1].conj() * r[d + l - 1];
            e += r[d + 2 * l - 1].norm_sqr() - r[d - 1].norm_sqr();
        }
        let half = 0.5 * e;
        metric.push(if half > 0.0 {
            p.norm_sqr() / (half * half)
        } else {
            0.0
        });
    }
    let d = match rule {
        TimingRule::PlateauMidpoint => plateau_midpoint(&metric),
        TimingRule::Argmax => first_max(&metric).0,
    };
    Ok((d, metric))
}

fn first_max(metric: &[f64]) -> (usize, f64) {
    metric.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |b, (i, &v)| if v > b.1 { (i, v) } else { b },
    )
}

fn plateau_midpoint(metric: &[f64]) -> usize {
    let (peak_at, peak) = first_max(metric);
    let floor = 0.99 * peak;
    let mut lo = peak_at;
    while lo > 0 && metric[lo - 1] >= floor {
        lo -= 1;
    }
    let mut hi = peak_at;
    while hi + 1 < metric.len() && metric[hi + 1] >= floor {
        hi += 1;
    }
    (lo + hi) / 2
}

/// Delay-correlation CFO estimate over `received[start..start + len]`:
/// `arg(sum r*(n) r(n + lag)) / (2 pi lag t)`, unambiguous within
/// `+-1 / (2 lag t)`.
pub fn correlation_cfo(
    received: &[Complex64],
    start: usize,
    len: usize,
    lag: usize,
    t: f64,
) -> Result<f64> {
    if lag == 0 || lag >= len {
        return Err(invalid(format!("lag must lie in 1..{len}, got {lag}")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid(format!(
            "sampling period must be positive, got {t}"
        )));
    }
    let window = received.get(start..start + len).ok_or_else(|| {
        invalid(format!(
            "window {start}..{} runs past the received length {}",
            start + len,
            received.len()
        ))
    })?;
    let acc: Complex64 = window
        .iter()
        .zip(&window[lag..])
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(acc.arg() / (2.0 * PI * lag as f64 * t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    const R_S: f64 = 32e9;

    fn rotate(x: &mut [Complex64], cfo: f64) {
        for (n, v) in x.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, 2.0 * PI * cfo * n as f64 / R_S);
        }
    }

    fn noise(len: usize, seed: u64, variance: f64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (variance / 2.0).sqrt();
        (0..len)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * s, im * s)
            })
            .collect()
    }

    #[test]
    fn repeated_ts_layout() {
        let ts = RepeatedTs::random(4, 256, 1).unwrap();
        assert_eq!(ts.len(), 1024);
        let s = ts.symbols();
        assert_eq!(&s[..4], &s[1020..]);
        assert!(RepeatedTs::random(4, 1, 1).is_err());
        assert!(RepeatedTs::new(vec![], 2).is_err());
    }

    #[test]
    fn clean_halves_give_unit_plateau_at_start() {
        let ts = RepeatedTs::random(512, 2, 3).unwrap();
        let mut rx = ts.symbols();
        rx.extend(noise(600, 4, 1.0));
        let (d, m) = schmidl_cox_timing(&rx, 512, 300, TimingRule::PlateauMidpoint).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12);
        assert_eq!(d, 0);
        assert!(m.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn offset_and_cfo() {
        let ts = RepeatedTs::random(512, 2, 3).unwrap();
        let mut rx = noise(100, 5, 1.0);
        rx.extend(ts.symbols());
        rx.extend(noise(400, 6, 1.0));
        let (_, plain) = schmidl_cox_timing(&rx, 512, 400, TimingRule::PlateauMidpoint).unwrap();
        rotate(&mut rx, 3e9);
        let (d, m) = schmidl_cox_timing(&rx, 512, 400, TimingRule::PlateauMidpoint).unwrap();
        assert_eq!(d, 100);
        for (a, b) in plain.iter().zip(&m) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_noise_metric_stays_low() {
        let rx = noise(4096, 8, 1.0);
        let (_, m) = schmidl_cox_timing(&rx, 512, 2000, TimingRule::PlateauMidpoint).unwrap();
        assert!(m.iter().cloned().fold(0.0, f64::max) < 0.3);
    }

    #[test]
    fn short_input_rejected() {
        let rx = noise(1000, 1, 1.0);
        assert!(schmidl_cox_timing(&rx, 512, 10, TimingRule::PlateauMidpoint).is_err());
        assert!(correlation_cfo(&rx, 900, 200, 4, 1.0 / R_S).is_err());
        assert!(correlation_cfo(&rx, 0, 200, 0, 1.0 / R_S).is_err());
        assert!(correlation_cfo(&rx, 0, 200, 200, 1.0 / R_S).is_err());
    }

    #[test]
    fn correlation_cfo_noiseless() {
        let ts = RepeatedTs::random(64, 16, 2).unwrap();
        let mut rx = ts.symbols();
        assert!(correlation_cfo(&rx, 0, 1024, 64, 1.0 / R_S).unwrap().abs() < 1e-6 * R_S);
        rotate(&mut rx, 100e6);
        let est = correlation_cfo(&rx, 0, 1024, 64, 1.0 / R_S).unwrap();
        assert!((est - 100e6).abs() < 1e-3 * 100e6);

        let long = RepeatedTs::random(512, 2, 2).unwrap();
        let mut rx = long.symbols();
        rotate(&mut rx, 100e6);
        let aliased = correlation_cfo(&rx, 0, 1024, 512, 1.0 / R_S).unwrap();
        assert!(aliased.abs() <= 31.25e6);
        assert!((aliased - (100e6 - 2.0 * 62.5e6)).abs() < 1.0);
    }

    #[test]
    fn longer_window_lowers_variance() {
        let ts = RepeatedTs::random(4, 512, 7).unwrap().symbols();
        let variance = 10f64.powf(-0.5);
        let spread = |len: usize| {
            let errs: Vec<f64> = (0..1000)
                .map(|trial| {
                    let mut rx = ts.clone();
                    rotate(&mut rx, 3e9);
                    for (v, n) in rx.iter_mut().zip(noise(len, 100 + trial, variance)) {
                        *v += n;
                    }
                    correlation_cfo(&rx, 0, len, 4, 1.0 / R_S).unwrap() - 3e9
                })
                .collect();
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / errs.len() as f64
        };
        let (short, mid, long) = (spread(256), spread(1024), spread(2048));
        assert!(short > mid && mid > long, "{short} {mid} {long}");
    }
}
