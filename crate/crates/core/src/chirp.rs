//! Chirp training-sequence design.
//!
//! A linear chirp `f[n] = exp(j pi 2 beta (n - N/2)^2 T^2)` collapses to an
//! impulse under the fractional transform of angle
//! `phi_opt = -atan(1 / (2 beta N T^2))`. The training sequence concatenates two
//! such chirps with different angles, each quantized to 4-QAM for transmission.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::ComplexSignal;

/// Angles closer than this to `0` or `+-pi/2` are rejected as degenerate.
const DEGENERATE_ANGLE: f64 = 1e-9;

/// Angle at which the fractional transform of the chirp with rate parameter
/// `beta` (Hz^2) and `n_s` samples at period `t` becomes an impulse.
pub fn optimal_angle(beta: f64, n_s: usize, t: f64) -> Result<f64> {
    if beta == 0.0 || !beta.is_finite() {
        return Err(invalid(format!(
            "chirp rate parameter must be non-zero and finite, got {beta}"
        )));
    }
    check_geometry(n_s, t)?;
    Ok(-(1.0 / (2.0 * beta * n_s as f64 * t * t)).atan())
}

/// Inverse of [`optimal_angle`]: `beta = -1 / (2 n_s t^2 tan(phi_opt))`.
pub fn rate_for_angle(phi_opt: f64, n_s: usize, t: f64) -> Result<f64> {
    check_angle(phi_opt)?;
    check_geometry(n_s, t)?;
    Ok(-1.0 / (2.0 * n_s as f64 * t * t * phi_opt.tan()))
}

fn check_geometry(n_s: usize, t: f64) -> Result<()> {
    if n_s < 8 {
        return Err(invalid(format!(
            "chirp length must be at least 8, got {n_s}"
        )));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid(format!(
            "sampling period must be positive, got {t}"
        )));
    }
    Ok(())
}

fn check_angle(phi_opt: f64) -> Result<()> {
    if !phi_opt.is_finite()
        || phi_opt.abs() < DEGENERATE_ANGLE
        || phi_opt.abs() > FRAC_PI_2 - DEGENERATE_ANGLE
    {
        return Err(invalid(format!(
            "optimal angle must lie in (-pi/2, 0) or (0, pi/2), got {phi_opt}"
        )));
    }
    Ok(())
}

/// Design parameters of one chirp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec {
    n_s: usize,
    phi_opt: f64,
    beta: f64,
    t: f64,
}

impl ChirpSpec {
    /// Chirp that concentrates at `phi_opt`. `n_s` must be even.
    pub fn from_angle(phi_opt: f64, n_s: usize, t: f64) -> Result<Self> {
        check_even(n_s)?;
        let beta = rate_for_angle(phi_opt, n_s, t)?;
        Ok(Self {
            n_s,
            phi_opt,
            beta,
            t,
        })
    }

    pub fn from_rate(beta: f64, n_s: usize, t: f64) -> Result<Self> {
        check_even(n_s)?;
        let phi_opt = optimal_angle(beta, n_s, t)?;
        check_angle(phi_opt)?;
        Ok(Self {
            n_s,
            phi_opt,
            beta,
            t,
        })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn phi_opt(&self) -> f64 {
        self.phi_opt
    }

    /// Half the chirp rate, in Hz^2.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sample_period(&self) -> f64 {
        self.t
    }
}

fn check_even(n_s: usize) -> Result<()> {
    if !n_s.is_multiple_of(2) {
        return Err(invalid(format!("chirp length must be even, got {n_s}")));
    }
    Ok(())
}

/// Unit-magnitude chirp with its zero-phase sample at index `n_s / 2`.
pub fn generate_chirp(spec: &ChirpSpec) -> ComplexSignal {
    let center = (spec.n_s / 2) as f64;
    let rate = 2.0 * spec.beta * spec.t * spec.t;
    let samples = (0..spec.n_s)
        .map(|n| {
            let k = n as f64 - center;
            Complex64::from_polar(1.0, PI * rate * k * k)
        })
        .collect();
    ComplexSignal::from_parts(samples, 1.0 / spec.t)
}

/// Nearest unit-energy 4-QAM point, `(sign(re) + j sign(im)) / sqrt(2)`, with
/// zero components mapped to `+1`.
pub fn slice_to_qam4(x: &[Complex64]) -> Vec<Complex64> {
    let sign = |v: f64| {
        if v < 0.0 {
            -FRAC_1_SQRT_2
        } else {
            FRAC_1_SQRT_2
        }
    };
    x.iter()
        .map(|s| Complex64::new(sign(s.re), sign(s.im)))
        .collect()
}

/// Which version of each chirp the receiver correlates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// The unquantized chirp.
    #[default]
    Raw,
    /// The 4-QAM symbols actually transmitted.
    Sliced,
}

/// Two sliced chirps back to back, plus their unquantized references.
#[derive(Debug, Clone)]
pub struct TrainingSequence {
    symbols: Vec<Complex64>,
    raw: [ComplexSignal; 2],
    specs: [ChirpSpec; 2],
}

impl TrainingSequence {
    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn n_s(&self) -> usize {
        self.specs[0].n_s
    }

    /// Total length, `2 n_s`.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Spec of chirp `index` (0 or 1).
    pub fn spec(&self, index: usize) -> &ChirpSpec {
        &self.specs[index]
    }

    pub fn raw_chirp(&self, index: usize) -> &ComplexSignal {
        &self.raw[index]
    }

    pub fn sliced_chirp(&self, index: usize) -> &[Complex64] {
        let n = self.n_s();
        &self.symbols[index * n..(index + 1) * n]
    }

    pub fn reference(&self, index: usize, kind: ReferenceKind) -> &[Complex64] {
        match kind {
            ReferenceKind::Raw => self.raw[index].samples(),
            ReferenceKind::Sliced => self.sliced_chirp(index),
        }
    }

    /// The symbols as a signal at the symbol rate.
    pub fn to_signal(&self) -> ComplexSignal {
        ComplexSignal::from_parts(self.symbols.clone(), 1.0 / self.specs[0].t)
    }
}

/// Builds the two-chirp training sequence for angles `phi_1` and `phi_2`,
/// `n_s` samples per chirp, symbol period `t`.
pub fn build_training_sequence(
    phi_1: f64,
    phi_2: f64,
    n_s: usize,
    t: f64,
) -> Result<TrainingSequence> {
    if phi_1 == phi_2 {
        return Err(invalid("the two chirps need different optimal angles"));
    }
    let specs = [
        ChirpSpec::from_angle(phi_1, n_s, t)?,
        ChirpSpec::from_angle(phi_2, n_s, t)?,
    ];
    let raw = [generate_chirp(&specs[0]), generate_chirp(&specs[1])];
    let mut symbols = slice_to_qam4(raw[0].samples());
    symbols.extend(slice_to_qam4(raw[1].samples()));
    Ok(TrainingSequence {
        symbols,
        raw,
        specs,
    })
}
