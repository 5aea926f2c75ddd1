//! Monte-Carlo trials and parameter sweeps.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{correlation_cfo, schmidl_cox_timing, RepeatedTs, TimingRule};
use crate::channel::{apply_impairments, build_frame, ChannelConfig, PayloadFormat};
use crate::chirp::{build_training_sequence, ReferenceKind, TrainingSequence};
use crate::error::{invalid, Error, Result};
use crate::signal::ComplexSignal;
use crate::sync::{cfo_range, Synchronizer};

/// Fixed seed for the baselines' random training segments.
const BASELINE_TS_SEED: u64 = 0x005e_ed0f_b45e;

/// Header of the aggregated sweep CSV.
pub const SWEEP_HEADER: [&str; 7] = [
    "param_value",
    "algorithm",
    "trials",
    "timing_err_prob",
    "mean_timing_err",
    "mean_abs_cfo_err_hz",
    "std_cfo_err_hz",
];

/// Training-sequence geometry: total length `2 n_s`, angles `-phi2opt` and `phi2opt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsGeometry {
    pub ts_length: usize,
    pub phi2opt: f64,
}

impl Default for TsGeometry {
    fn default() -> Self {
        Self {
            ts_length: 1024,
            phi2opt: FRAC_PI_4,
        }
    }
}

impl TsGeometry {
    pub fn n_s(&self) -> usize {
        self.ts_length / 2
    }

    pub fn phi1opt(&self) -> f64 {
        -self.phi2opt
    }

    pub fn validate(&self) -> Result<()> {
        if self.ts_length < 16 || !self.ts_length.is_multiple_of(4) {
            return Err(invalid(format!(
                "TS length must be a multiple of 4 and at least 16, got {}",
                self.ts_length
            )));
        }
        Ok(())
    }

    pub fn build(&self, r_s: f64) -> Result<TrainingSequence> {
        self.validate()?;
        build_training_sequence(self.phi1opt(), self.phi2opt, self.n_s(), 1.0 / r_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Two-chirp fractional correlation, timing and CFO.
    Proposed,
    /// Schmidl-Cox timing on an `[A A]` sequence; no CFO.
    SchmidlCox,
    /// Delay-correlation CFO on a periodic sequence with the true timing; no timing.
    Correlation,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Self::Proposed, Self::SchmidlCox, Self::Correlation];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::SchmidlCox => "schmidl_cox",
            Self::Correlation => "correlation",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "proposed" => Ok(Self::Proposed),
            "schmidl_cox" => Ok(Self::SchmidlCox),
            "correlation" => Ok(Self::Correlation),
            _ => Err(invalid(format!("unknown algorithm '{s}'"))),
        }
    }
}

/// Everything one trial needs apart from the trial index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Experiment {
    pub channel: ChannelConfig,
    pub geometry: TsGeometry,
    /// Payload symbols after the TS; the search covers TS plus payload.
    pub payload_len: usize,
    pub payload_format: PayloadFormat,
    pub reference: ReferenceKind,
    /// Segment length and lag of the correlation baseline.
    pub correlation_lag: usize,
    pub schmidl_cox_rule: TimingRule,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            geometry: TsGeometry::default(),
            payload_len: 4096,
            payload_format: PayloadFormat::Qam16,
            reference: ReferenceKind::Raw,
            correlation_lag: 4,
            schmidl_cox_rule: TimingRule::PlateauMidpoint,
        }
    }
}

impl Experiment {
    /// Number of `n_s` blocks searched, `(ts_length + payload_len) / n_s`.
    pub fn block_count(&self) -> usize {
        (self.geometry.ts_length + self.payload_len) / self.geometry.n_s()
    }

    /// Range of the proposed estimator at the configured frame offset, using
    /// the offset's residue within a block as the time shift.
    pub fn cfo_range(&self) -> Result<f64> {
        let n_s = self.geometry.n_s();
        let residue = ((self.channel.frame_offset + n_s / 2) % n_s) as f64 - (n_s / 2) as f64;
        report_range(&self.geometry, residue, self.channel.r_s)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.geometry.validate()?;
        let lag = self.correlation_lag;
        if lag == 0
            || !self.geometry.ts_length.is_multiple_of(lag)
            || self.geometry.ts_length / lag < 2
        {
            return Err(invalid(format!(
                "correlation lag {lag} must divide the TS length into at least two segments"
            )));
        }
        Ok(())
    }
}

/// CFO range (Hz) of the proposed estimator for `geometry` at time shift `delta_t`.
pub fn report_range(geometry: &TsGeometry, delta_t: f64, r_s: f64) -> Result<f64> {
    geometry.validate()?;
    cfo_range(
        geometry.phi1opt(),
        geometry.phi2opt,
        delta_t,
        geometry.n_s(),
        r_s,
    )
}

/// splitmix64 finalizer over `master + (index + 1) * golden`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Outcome of one trial. Fields an algorithm does not estimate are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial_id: u64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub true_offset: usize,
    pub true_cfo_hz: f64,
    pub est_offset: Option<i64>,
    pub est_cfo_hz: Option<f64>,
    /// `|est_offset - true_offset|`.
    pub timing_error: Option<u64>,
    /// `|est_cfo_hz - true_cfo_hz|`.
    pub cfo_error_hz: Option<f64>,
    pub timing_success: Option<bool>,
    pub blocks_consistent: Option<bool>,
    pub peak_1: Option<f64>,
    pub peak_2: Option<f64>,
}

impl TrialReport {
    fn new(experiment: &Experiment, algorithm: Algorithm, trial_id: u64, seed: u64) -> Self {
        Self {
            trial_id,
            seed,
            algorithm,
            true_offset: experiment.channel.frame_offset,
            true_cfo_hz: experiment.channel.cfo_hz,
            est_offset: None,
            est_cfo_hz: None,
            timing_error: None,
            cfo_error_hz: None,
            timing_success: None,
            blocks_consistent: None,
            peak_1: None,
            peak_2: None,
        }
    }

    fn set_offset(&mut self, est: i64) {
        let err = (est - self.true_offset as i64).unsigned_abs();
        self.est_offset = Some(est);
        self.timing_error = Some(err);
        self.timing_success = Some(err == 0);
    }

    fn set_cfo(&mut self, est: f64) {
        self.est_cfo_hz = Some(est);
        self.cfo_error_hz = Some((est - self.true_cfo_hz).abs());
    }

    /// Signed CFO error, `est - true`.
    pub fn cfo_bias_hz(&self) -> Option<f64> {
        self.est_cfo_hz.map(|e| e - self.true_cfo_hz)
    }
}

/// Prepared state for running many trials of one experiment.
#[derive(Debug, Clone)]
pub struct TrialEngine {
    experiment: Experiment,
    ts: TrainingSequence,
    synchronizer: Synchronizer,
    sc_ts: ComplexSignal,
    corr_ts: ComplexSignal,
}

impl TrialEngine {
    pub fn new(experiment: Experiment) -> Result<Self> {
        experiment.validate()?;
        let r_s = experiment.channel.r_s;
        let ts = experiment.geometry.build(r_s)?;
        let synchronizer = Synchronizer::new(&ts, experiment.reference)?;
        let n_s = experiment.geometry.n_s();
        let len = experiment.geometry.ts_length;
        let lag = experiment.correlation_lag;
        let sc = RepeatedTs::random(n_s, 2, BASELINE_TS_SEED)?;
        let corr = RepeatedTs::random(lag, len / lag, BASELINE_TS_SEED)?;
        Ok(Self {
            sc_ts: ComplexSignal::new(sc.symbols(), r_s)?,
            corr_ts: ComplexSignal::new(corr.symbols(), r_s)?,
            experiment,
            ts,
            synchronizer,
        })
    }

    pub fn experiment(&self) -> &Experiment {
        &self.experiment
    }

    pub fn training_sequence(&self) -> &TrainingSequence {
        &self.ts
    }

    /// Transmit frame for `algorithm`: its TS, the payload, and `2 n_s`
    /// further symbols so the last search block is complete.
    fn frame(&self, algorithm: Algorithm, seed: u64) -> ComplexSignal {
        let e = &self.experiment;
        let n = e.payload_len + 2 * e.geometry.n_s();
        let frame = build_frame(&self.ts, n, e.payload_format, seed);
        let head = match algorithm {
            Algorithm::Proposed => return frame,
            Algorithm::SchmidlCox => &self.sc_ts,
            Algorithm::Correlation => &self.corr_ts,
        };
        let mut samples = head.samples().to_vec();
        samples.extend_from_slice(&frame.samples()[e.geometry.ts_length..]);
        ComplexSignal::new(samples, frame.sample_rate_hz()).expect("finite symbols")
    }

    /// Received signal of trial `trial_id` for `algorithm`'s training sequence.
    pub fn received(&self, algorithm: Algorithm, trial_id: u64) -> Result<ComplexSignal> {
        let seed = trial_seed(self.experiment.channel.seed, trial_id);
        let channel = ChannelConfig {
            seed,
            ..self.experiment.channel.clone()
        };
        apply_impairments(&self.frame(algorithm, seed), &channel)
    }

    /// Runs trial `trial_id`, seeded from the channel seed and the index.
    pub fn run(&self, algorithm: Algorithm, trial_id: u64) -> Result<TrialReport> {
        let e = &self.experiment;
        let seed = trial_seed(e.channel.seed, trial_id);
        let rx = self.received(algorithm, trial_id)?;
        let mut report = TrialReport::new(e, algorithm, trial_id, seed);
        let n_s = e.geometry.n_s();
        let blocks = e.block_count();
        match algorithm {
            Algorithm::Proposed => {
                let est = self
                    .synchronizer
                    .estimate(rx.samples(), e.channel.r_s, blocks)?;
                report.set_offset(est.mu_hat);
                report.set_cfo(est.gamma_hat);
                report.blocks_consistent = Some(est.blocks_consistent);
                report.peak_1 = Some(est.det_1.peak_value);
                report.peak_2 = Some(est.det_2.peak_value);
            }
            Algorithm::SchmidlCox => {
                let (d, metric) =
                    schmidl_cox_timing(rx.samples(), n_s, blocks * n_s, e.schmidl_cox_rule)?;
                report.set_offset(d as i64);
                report.peak_1 = Some(metric[d]);
            }
            Algorithm::Correlation => {
                let cfo = correlation_cfo(
                    rx.samples(),
                    e.channel.frame_offset,
                    e.geometry.ts_length,
                    e.correlation_lag,
                    1.0 / e.channel.r_s,
                )?;
                report.set_cfo(cfo);
            }
        }
        Ok(report)
    }
}

/// One trial of `experiment`.
pub fn run_trial(
    experiment: &Experiment,
    algorithm: Algorithm,
    trial_id: u64,
) -> Result<TrialReport> {
    TrialEngine::new(experiment.clone())?.run(algorithm, trial_id)
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Angle of chirp 2 in radians; chirp 1 uses its negative.
    Phi2opt,
    /// Total TS length in symbols.
    TsLength,
    /// CFO in Hz.
    Cfo,
    /// OSNR in dB.
    Osnr,
}

impl SweepParam {
    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &Experiment, value: f64) -> Result<Experiment> {
        let mut e = base.clone();
        match self {
            Self::Phi2opt => e.geometry.phi2opt = value,
            Self::TsLength => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(invalid(format!(
                        "TS length must be a whole number, got {value}"
                    )));
                }
                e.geometry.ts_length = value as usize;
            }
            Self::Cfo => e.channel.cfo_hz = value,
            Self::Osnr => e.channel.osnr_db = Some(value),
        }
        Ok(e)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "phi2opt" => Ok(Self::Phi2opt),
            "ts_length" => Ok(Self::TsLength),
            "cfo" => Ok(Self::Cfo),
            "osnr" => Ok(Self::Osnr),
            _ => Err(invalid(format!("unknown sweep parameter '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub trials: u64,
    pub base: Experiment,
    pub algorithms: Vec<Algorithm>,
    /// Run trials on the rayon pool; results are identical either way.
    pub parallel: bool,
}

/// Aggregated statistics of one algorithm at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub algorithm: Algorithm,
    pub trials: u64,
    pub timing_err_prob: Option<f64>,
    pub mean_timing_err: Option<f64>,
    pub mean_abs_cfo_err_hz: Option<f64>,
    /// Standard deviation of the signed CFO error.
    pub std_cfo_err_hz: Option<f64>,
}

impl SweepRow {
    /// Aggregates reports in the given order.
    pub fn from_reports(param_value: f64, algorithm: Algorithm, reports: &[TrialReport]) -> Self {
        let n = reports.len() as f64;
        let timing: Vec<u64> = reports.iter().filter_map(|r| r.timing_error).collect();
        let cfo: Vec<f64> = reports.iter().filter_map(|r| r.cfo_bias_hz()).collect();
        let (mut prob, mut mean_t) = (None, None);
        if !timing.is_empty() {
            prob = Some(timing.iter().filter(|&&e| e != 0).count() as f64 / n);
            mean_t = Some(timing.iter().map(|&e| e as f64).sum::<f64>() / n);
        }
        let (mut mean_abs, mut std) = (None, None);
        if !cfo.is_empty() {
            mean_abs = Some(cfo.iter().map(|e| e.abs()).sum::<f64>() / n);
            let mean = cfo.iter().sum::<f64>() / n;
            std = Some((cfo.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n).sqrt());
        }
        Self {
            param_value,
            algorithm,
            trials: reports.len() as u64,
            timing_err_prob: prob,
            mean_timing_err: mean_t,
            mean_abs_cfo_err_hz: mean_abs,
            std_cfo_err_hz: std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Trial reports grouped like `rows`, each group in trial order.
    pub trials: Vec<Vec<TrialReport>>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.rows, writer)
    }

    /// Trial-level rows, with the grid value in the first column.
    pub fn write_trials_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        w.write_record(std::iter::once("param_value").chain(TRIAL_HEADER))?;
        for (row, group) in self.rows.iter().zip(&self.trials) {
            for r in group {
                w.write_record(
                    std::iter::once(row.param_value.to_string()).chain(trial_record(r)),
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Columns of a trial-level row.
pub const TRIAL_HEADER: [&str; 13] = [
    "trial_id",
    "seed",
    "algorithm",
    "true_offset",
    "true_cfo_hz",
    "est_offset",
    "est_cfo_hz",
    "timing_error",
    "cfo_error_hz",
    "timing_success",
    "blocks_consistent",
    "peak_1",
    "peak_2",
];

fn trial_record(r: &TrialReport) -> [String; 13] {
    [
        r.trial_id.to_string(),
        r.seed.to_string(),
        r.algorithm.to_string(),
        r.true_offset.to_string(),
        r.true_cfo_hz.to_string(),
        opt(r.est_offset),
        opt(r.est_cfo_hz),
        opt(r.timing_error),
        opt(r.cfo_error_hz),
        opt(r.timing_success),
        opt(r.blocks_consistent),
        opt(r.peak_1),
        opt(r.peak_2),
    ]
}

/// Writes trial reports under [`TRIAL_HEADER`].
pub fn write_trials<W: Write>(reports: &[TrialReport], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(TRIAL_HEADER)?;
    for r in reports {
        w.write_record(trial_record(r))?;
    }
    w.flush()?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes aggregated rows under [`SWEEP_HEADER`].
pub fn write_rows<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record(&[
            r.param_value.to_string(),
            r.algorithm.to_string(),
            r.trials.to_string(),
            opt(r.timing_err_prob),
            opt(r.mean_timing_err),
            opt(r.mean_abs_cfo_err_hz),
            opt(r.std_cfo_err_hz),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every algorithm at every grid point. Trial `i` uses the same seed at
/// every point, so points differ only by the swept parameter.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.grid.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    if spec.trials == 0 {
        return Err(invalid("a sweep needs at least one trial per point"));
    }
    if spec.algorithms.is_empty() {
        return Err(invalid("no algorithm selected"));
    }
    let engines = spec
        .grid
        .iter()
        .map(|&v| TrialEngine::new(spec.param.apply(&spec.base, v)?))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Algorithm)> = (0..engines.len())
        .flat_map(|p| spec.algorithms.iter().map(move |&a| (p, a)))
        .collect();
    let run_group = |&(p, a): &(usize, Algorithm)| -> Result<Vec<TrialReport>> {
        if spec.parallel {
            (0..spec.trials)
                .into_par_iter()
                .map(|i| engines[p].run(a, i))
                .collect()
        } else {
            (0..spec.trials).map(|i| engines[p].run(a, i)).collect()
        }
    };
    let trials = if spec.parallel {
        jobs.par_iter().map(run_group).collect::<Result<Vec<_>>>()?
    } else {
        jobs.iter().map(run_group).collect::<Result<Vec<_>>>()?
    };
    let rows = jobs
        .iter()
        .zip(&trials)
        .map(|(&(p, a), group)| SweepRow::from_reports(spec.grid[p], a, group))
        .collect();
    Ok(SweepResult { rows, trials })
}
