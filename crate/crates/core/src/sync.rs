//! Joint frame and carrier-frequency synchronization.
//!
//! Each chirp of the training sequence is searched block by block with the
//! fractional correlation metric. The peak shifts of the two chirps,
//! `dn_i = dt cos(phi_i) + df sin(phi_i)`, are solved for the time shift `dt`
//! and the frequency shift `df`, which give the frame offset and the CFO.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chirp::{ReferenceKind, TrainingSequence};
use crate::dfrft::FractionalCorrelator;
use crate::error::{invalid, Error, Result};
use crate::signal::ComplexSignal;

/// Below this `|sin(phi_2 - phi_1)|` the offset system is treated as singular.
const SINGULAR_SIN: f64 = 1e-12;

/// Outcome of the block search for one chirp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpDetection {
    /// Block holding the largest metric peak.
    pub b_hat: usize,
    /// Bin of the peak within that block.
    pub u_hat: usize,
    pub peak_value: f64,
    /// `u_hat - n_s / 2`.
    pub delta_n: i64,
}

impl ChirpDetection {
    fn from_peak(b_hat: usize, u_hat: usize, peak_value: f64, n_s: usize) -> Self {
        Self {
            b_hat,
            u_hat,
            peak_value,
            delta_n: u_hat as i64 - (n_s / 2) as i64,
        }
    }
}

/// Frame offset and CFO estimate with the intermediate quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncEstimate {
    /// Frame offset in symbols.
    pub mu_hat: i64,
    /// CFO in Hz.
    pub gamma_hat: f64,
    /// Time shift within the block, in samples.
    pub delta_t: f64,
    /// Frequency shift, in bins of `r_s / n_s`.
    pub delta_f: f64,
    pub det_1: ChirpDetection,
    /// Chirp-2 detection read from the block after `det_1.b_hat`.
    pub det_2: ChirpDetection,
    /// Chirp-2 detection from its own unconstrained block search.
    pub det_2_search: ChirpDetection,
    /// False when the two block searches disagree.
    pub blocks_consistent: bool,
}

fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Block searcher for one chirp, with the reference transform cached.
#[derive(Debug, Clone)]
pub struct ChirpDetector {
    correlator: FractionalCorrelator,
}

impl ChirpDetector {
    pub fn new(reference: &[Complex64], phi_opt: f64) -> Result<Self> {
        if !reference.len().is_multiple_of(2) {
            return Err(invalid(format!(
                "reference length must be even, got {}",
                reference.len()
            )));
        }
        Ok(Self {
            correlator: FractionalCorrelator::new(reference, phi_opt)?,
        })
    }

    pub fn n_s(&self) -> usize {
        self.correlator.len()
    }

    /// Metric of the block starting at sample `start`.
    pub fn block_metric(&self, received: &[Complex64], start: usize) -> Result<Vec<f64>> {
        let n_s = self.n_s();
        let block = received.get(start..start + n_s).ok_or_else(|| {
            invalid(format!(
                "block at {start} runs past the received length {}",
                received.len()
            ))
        })?;
        self.correlator.metric(block)
    }

    /// Peak of the block starting at sample `start`, reported as block `b`.
    pub fn detect_in_block(
        &self,
        received: &[Complex64],
        start: usize,
        b: usize,
    ) -> Result<ChirpDetection> {
        let (u, v) = argmax(&self.block_metric(received, start)?);
        Ok(ChirpDetection::from_peak(b, u, v, self.n_s()))
    }

    /// Searches blocks `first + b n_s` for `b` in `0..block_count`.
    pub fn detect(
        &self,
        received: &[Complex64],
        first: usize,
        block_count: usize,
    ) -> Result<ChirpDetection> {
        self.check_span(received.len(), first, block_count)?;
        let mut best: Option<ChirpDetection> = None;
        for b in 0..block_count {
            let d = self.detect_in_block(received, first + b * self.n_s(), b)?;
            if best.is_none_or(|cur| d.peak_value > cur.peak_value) {
                best = Some(d);
            }
        }
        Ok(best.expect("block_count checked non-zero"))
    }

    /// Same result as [`ChirpDetector::detect`], with blocks evaluated in parallel.
    pub fn detect_par(
        &self,
        received: &[Complex64],
        first: usize,
        block_count: usize,
    ) -> Result<ChirpDetection> {
        self.check_span(received.len(), first, block_count)?;
        let found = (0..block_count)
            .into_par_iter()
            .map(|b| self.detect_in_block(received, first + b * self.n_s(), b))
            .collect::<Result<Vec<_>>>()?;
        let mut best = found[0];
        for d in &found[1..] {
            if d.peak_value > best.peak_value {
                best = *d;
            }
        }
        Ok(best)
    }

    fn check_span(&self, len: usize, first: usize, block_count: usize) -> Result<()> {
        if block_count == 0 {
            return Err(invalid("block count must be positive"));
        }
        let need = first + block_count * self.n_s();
        if len < need {
            return Err(invalid(format!(
                "received signal has {len} samples, the search needs {need}"
            )));
        }
        Ok(())
    }
}

/// Searches `block_count` blocks of `n_s` samples from the start of
/// `received` for the chirp `reference` concentrating at `phi_opt`.
pub fn detect_chirp(
    received: &ComplexSignal,
    reference: &ComplexSignal,
    phi_opt: f64,
    n_s: usize,
    block_count: usize,
) -> Result<ChirpDetection> {
    if reference.len() != n_s {
        return Err(invalid(format!(
            "reference length {} differs from n_s = {n_s}",
            reference.len()
        )));
    }
    ChirpDetector::new(reference.samples(), phi_opt)?.detect(received.samples(), 0, block_count)
}

fn check_angles(phi_1: f64, phi_2: f64) -> Result<f64> {
    let s = (phi_2 - phi_1).sin();
    if !s.is_finite() || s.abs() < SINGULAR_SIN {
        return Err(Error::Singular(format!(
            "angles {phi_1} and {phi_2} differ by a multiple of pi"
        )));
    }
    Ok(s)
}

/// Solves `dn_i = dt cos(phi_i) + df sin(phi_i)` for `(dt, df)`.
pub fn solve_offsets(delta_n1: i64, delta_n2: i64, phi_1: f64, phi_2: f64) -> Result<(f64, f64)> {
    let s = check_angles(phi_1, phi_2)?;
    let (n1, n2) = (delta_n1 as f64, delta_n2 as f64);
    let dt = (n1 * phi_2.sin() - n2 * phi_1.sin()) / s;
    let df = (n2 * phi_1.cos() - n1 * phi_2.cos()) / s;
    Ok((dt, df))
}

/// Largest CFO magnitude (Hz) the two-chirp system resolves without the
/// peak leaving its block, at time shift `delta_t`.
pub fn cfo_range(phi_1: f64, phi_2: f64, delta_t: f64, n_s: usize, r_s: f64) -> Result<f64> {
    let s = check_angles(phi_1, phi_2)?;
    if n_s == 0 || !(r_s.is_finite() && r_s > 0.0) {
        return Err(invalid("n_s and r_s must be positive"));
    }
    let n = n_s as f64;
    let (c1, c2) = (phi_1.cos(), phi_2.cos());
    let bins = (c1 * (n / 2.0 - 1.0 - delta_t * c2) - c2 * (delta_t * c1 - n / 2.0)) / s;
    Ok((bins * r_s / n).abs())
}

/// Synchronizer for one training sequence, with both chirp references cached.
#[derive(Debug, Clone)]
pub struct Synchronizer {
    detectors: [ChirpDetector; 2],
    phi: [f64; 2],
    n_s: usize,
    parallel: bool,
}

impl Synchronizer {
    pub fn new(ts: &TrainingSequence, reference: ReferenceKind) -> Result<Self> {
        let phi = [ts.spec(0).phi_opt(), ts.spec(1).phi_opt()];
        check_angles(phi[0], phi[1])?;
        Ok(Self {
            detectors: [
                ChirpDetector::new(ts.reference(0, reference), phi[0])?,
                ChirpDetector::new(ts.reference(1, reference), phi[1])?,
            ],
            phi,
            n_s: ts.n_s(),
            parallel: false,
        })
    }

    /// Evaluate the blocks of each search on the rayon pool.
    pub fn with_parallel_blocks(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    /// Estimates the frame offset and CFO of `received` sampled at `r_s`.
    /// Chirp 1 is searched over blocks `b n_s`, chirp 2 over `(b + 1) n_s`.
    pub fn estimate(
        &self,
        received: &[Complex64],
        r_s: f64,
        block_count: usize,
    ) -> Result<SyncEstimate> {
        if !(r_s.is_finite() && r_s > 0.0) {
            return Err(invalid(format!("symbol rate must be positive, got {r_s}")));
        }
        let n_s = self.n_s;
        let search = |d: &ChirpDetector, first| {
            if self.parallel {
                d.detect_par(received, first, block_count)
            } else {
                d.detect(received, first, block_count)
            }
        };
        let det_1 = search(&self.detectors[0], 0)?;
        let det_2_search = search(&self.detectors[1], n_s)?;
        let blocks_consistent = det_2_search.b_hat == det_1.b_hat;
        let det_2 = if blocks_consistent {
            det_2_search
        } else {
            self.detectors[1].detect_in_block(received, (det_1.b_hat + 1) * n_s, det_1.b_hat)?
        };
        let (delta_t, delta_f) =
            solve_offsets(det_1.delta_n, det_2.delta_n, self.phi[0], self.phi[1])?;
        Ok(SyncEstimate {
            mu_hat: delta_t.round() as i64 + (det_1.b_hat * n_s) as i64,
            gamma_hat: delta_f * r_s / n_s as f64,
            delta_t,
            delta_f,
            det_1,
            det_2,
            det_2_search,
            blocks_consistent,
        })
    }
}

/// One-shot estimate against the unquantized chirp references.
pub fn estimate(
    received: &ComplexSignal,
    ts: &TrainingSequence,
    r_s: f64,
    block_count: usize,
) -> Result<SyncEstimate> {
    Synchronizer::new(ts, ReferenceKind::Raw)?.estimate(received.samples(), r_s, block_count)
}
