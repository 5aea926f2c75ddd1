//! Complex baseband sample buffers and their on-disk formats.
//!
//! Two interchange formats are supported: a CSV table with `index,real,imag`
//! columns, and raw interleaved little-endian `f64` pairs (`re, im, re, im, ...`).

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// A non-empty run of finite complex samples taken at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("signal must contain at least one sample"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(invalid(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples
            .iter()
            .position(|s| !(s.re.is_finite() && s.im.is_finite()))
        {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts(samples: Vec<Complex64>, sample_rate_hz: f64) -> Self {
        debug_assert!(!samples.is_empty());
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false for a constructed signal.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }

    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    /// Copies `len` samples starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        let end = start
            .checked_add(len)
            .filter(|&e| e <= self.len() && len > 0)
            .ok_or_else(|| {
                invalid(format!(
                    "window [{start}, {start}+{len}) outside signal of length {}",
                    self.len()
                ))
            })?;
        Ok(Self::from_parts(
            self.samples[start..end].to_vec(),
            self.sample_rate_hz,
        ))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["index", "real", "imag"])?;
        for (i, s) in self.samples.iter().enumerate() {
            out.write_record([i.to_string(), s.re.to_string(), s.im.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the `index,real,imag` table written by [`ComplexSignal::write_csv`].
    /// Rows must appear in index order.
    pub fn read_csv<R: Read>(reader: R, sample_rate_hz: f64) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let mut samples = Vec::new();
        for (row, record) in input.deserialize::<(usize, f64, f64)>().enumerate() {
            let (index, re, im) = record?;
            if index != row {
                return Err(invalid(format!("row {row} carries index {index}")));
            }
            samples.push(Complex64::new(re, im));
        }
        Self::new(samples, sample_rate_hz)
    }

    pub fn write_f64le<W: Write>(&self, mut writer: W) -> Result<()> {
        let mut buf = Vec::with_capacity(self.len() * 16);
        for s in &self.samples {
            buf.extend_from_slice(&s.re.to_le_bytes());
            buf.extend_from_slice(&s.im.to_le_bytes());
        }
        writer.write_all(&buf)?;
        Ok(())
    }

    pub fn read_f64le<R: Read>(mut reader: R, sample_rate_hz: f64) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() % 16 != 0 {
            return Err(invalid(format!(
                "raw stream length {} is not a multiple of 16 bytes",
                bytes.len()
            )));
        }
        let samples = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8-byte chunk"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8-byte chunk"));
                Complex64::new(re, im)
            })
            .collect();
        Self::new(samples, sample_rate_hz)
    }
}

pub(crate) fn energy(samples: &[Complex64]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum()
}
