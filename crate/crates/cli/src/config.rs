//! Config file and flag merging. Every flag has a key of the same name
//! (underscores for dashes); flags win over the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use fracsync::harness::{Algorithm, Experiment};
use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub ts_length: Option<usize>,
    pub phi2opt: Option<f64>,
    pub frame_offset: Option<usize>,
    pub cfo_hz: Option<f64>,
    pub osnr_db: Option<f64>,
    pub awgn: Option<bool>,
    pub linewidth_hz: Option<f64>,
    pub symbol_rate: Option<f64>,
    pub rrc: Option<bool>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub algorithm: Option<String>,
    pub param: Option<String>,
    pub grid: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags shared by every command that builds an experiment.
#[derive(Debug, Default, Clone, Args)]
pub struct ExperimentArgs {
    /// Total training-sequence length in symbols (two chirps).
    #[arg(long)]
    pub ts_length: Option<usize>,
    /// Angle of chirp 2 in radians; chirp 1 uses its negative.
    #[arg(long, allow_hyphen_values = true)]
    pub phi2opt: Option<f64>,
    /// Guard symbols ahead of the frame.
    #[arg(long)]
    pub frame_offset: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub cfo_hz: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub osnr_db: Option<f64>,
    /// Disable additive noise.
    #[arg(long)]
    pub no_awgn: bool,
    /// Combined laser linewidth; 0 disables phase noise.
    #[arg(long)]
    pub linewidth_hz: Option<f64>,
    /// Symbol rate in Bd.
    #[arg(long)]
    pub symbol_rate: Option<f64>,
    /// Root-raised-cosine shaping and matched filtering.
    #[arg(long, overrides_with = "no_rrc")]
    pub rrc: bool,
    #[arg(long, overrides_with = "rrc")]
    pub no_rrc: bool,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ExperimentArgs {
    fn rrc(&self) -> Option<bool> {
        match (self.rrc, self.no_rrc) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }

    /// Defaults, then the file, then the flags.
    pub fn experiment(&self, file: &FileConfig) -> Result<Experiment> {
        let mut e = Experiment::default();
        let c = &mut e.channel;
        let g = &mut e.geometry;
        if let Some(v) = self.ts_length.or(file.ts_length) {
            g.ts_length = v;
        }
        if let Some(v) = self.phi2opt.or(file.phi2opt) {
            g.phi2opt = v;
        }
        if let Some(v) = self.frame_offset.or(file.frame_offset) {
            c.frame_offset = v;
        }
        if let Some(v) = self.cfo_hz.or(file.cfo_hz) {
            c.cfo_hz = v;
        }
        if let Some(v) = self.osnr_db.or(file.osnr_db) {
            c.osnr_db = Some(v);
        }
        if self.no_awgn || file.awgn == Some(false) {
            c.osnr_db = None;
        }
        if let Some(v) = self.linewidth_hz.or(file.linewidth_hz) {
            c.linewidth_hz = v;
        }
        if let Some(v) = self.symbol_rate.or(file.symbol_rate) {
            c.r_s = v;
        }
        if let Some(v) = self.rrc().or(file.rrc) {
            c.rrc_enabled = v;
        }
        if let Some(v) = self.seed.or(file.seed) {
            c.seed = v;
        }
        e.validate()?;
        Ok(e)
    }
}

/// `all`, or a comma-separated list of algorithm names.
pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>> {
    if s.trim() == "all" {
        return Ok(Algorithm::ALL.to_vec());
    }
    let list = s
        .split(',')
        .map(|a| a.trim().parse::<Algorithm>())
        .collect::<Result<Vec<_>, _>>()?;
    if list.is_empty() {
        bail!("no algorithm given");
    }
    Ok(list)
}

/// Comma-separated values, or `start:step:stop` with `stop` included.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| -> Result<f64> {
        t.trim()
            .parse::<f64>()
            .with_context(|| format!("bad grid value '{t}'"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                bail!("range grid needs step > 0 and stop >= start");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|k| start + k as f64 * step).collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => bail!("grid must be a list or start:step:stop"),
    };
    if grid.is_empty() {
        bail!("grid is empty");
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str("cfo_hz = 1e9\nts_length = 512\nrrc = true").unwrap();
        let args = ExperimentArgs {
            cfo_hz: Some(2e9),
            no_rrc: true,
            ..Default::default()
        };
        let e = args.experiment(&file).unwrap();
        assert_eq!(e.channel.cfo_hz, 2e9);
        assert_eq!(e.geometry.ts_length, 512);
        assert!(!e.channel.rrc_enabled);
        assert_eq!(e.channel.frame_offset, 100);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<FileConfig>("cfo = 1").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(
            parse_grid("4:2:12").unwrap(),
            vec![4.0, 6.0, 8.0, 10.0, 12.0]
        );
        assert_eq!(parse_grid("-1e9, 0,1e9").unwrap(), vec![-1e9, 0.0, 1e9]);
        assert_eq!(parse_grid("0:0.1:0.3").unwrap().len(), 4);
        assert!(parse_grid("1:0:2").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn algorithm_lists() {
        assert_eq!(parse_algorithms("all").unwrap().len(), 3);
        assert_eq!(
            parse_algorithms("proposed, schmidl-cox").unwrap(),
            vec![Algorithm::Proposed, Algorithm::SchmidlCox]
        );
        assert!(parse_algorithms("foo").is_err());
    }
}
