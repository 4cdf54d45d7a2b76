use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One logged iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LogRecord {
    pub iteration: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub info_loss: f64,
    /// Mean D probability on real samples.
    pub d_real: f64,
    /// Mean D probability on generated samples.
    pub d_fake: f64,
    /// Seconds since the run (or resume) started.
    pub wall: f64,
    pub grad_norm_d: f64,
    pub grad_norm_g: f64,
    /// Bit 0: D gradients clipped; bit 1: G gradients clipped.
    pub clipped: u8,
}

pub const LOG_HEADER: &str =
    "# iteration d_loss g_loss info_loss d_real d_fake wall grad_norm_d grad_norm_g clipped";

impl LogRecord {
    pub fn to_line(&self) -> String {
        format!(
            "iteration={} d_loss={} g_loss={} info_loss={} d_real={} d_fake={} wall={:.3} grad_norm_d={} grad_norm_g={} clipped={}",
            self.iteration,
            self.d_loss,
            self.g_loss,
            self.info_loss,
            self.d_real,
            self.d_fake,
            self.wall,
            self.grad_norm_d,
            self.grad_norm_g,
            self.clipped
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut r = Self::default();
        for field in line.split_whitespace() {
            let (k, v) = field.split_once('=')?;
            match k {
                "iteration" => r.iteration = v.parse().ok()?,
                "d_loss" => r.d_loss = v.parse().ok()?,
                "g_loss" => r.g_loss = v.parse().ok()?,
                "info_loss" => r.info_loss = v.parse().ok()?,
                "d_real" => r.d_real = v.parse().ok()?,
                "d_fake" => r.d_fake = v.parse().ok()?,
                "wall" => r.wall = v.parse().ok()?,
                "grad_norm_d" => r.grad_norm_d = v.parse().ok()?,
                "grad_norm_g" => r.grad_norm_g = v.parse().ok()?,
                "clipped" => r.clipped = v.parse().ok()?,
                _ => {}
            }
        }
        Some(r)
    }
}

/// Loss history, one record per logged iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn push(&mut self, r: LogRecord) {
        debug_assert!(self.records.last().is_none_or(|l| l.iteration < r.iteration));
        self.records.push(r);
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{}", r.to_line());
        }
        s
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut log = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let r = LogRecord::parse(line)
                .ok_or_else(|| Error::Parse { path: source.into(), line: i + 1, msg: "bad log record".into() })?;
            if log.records.last().is_some_and(|l| l.iteration >= r.iteration) {
                return Err(Error::Parse { path: source.into(), line: i + 1, msg: "iterations must increase".into() });
            }
            log.records.push(r);
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The loss columns only, for determinism comparisons.
    pub fn loss_columns(&self) -> Vec<[f64; 6]> {
        self.records.iter().map(|r| [r.d_loss, r.g_loss, r.info_loss, r.d_real, r.d_fake, r.grad_norm_g]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut log = TrainLog::default();
        log.push(LogRecord { iteration: 5, d_loss: 1.25, g_loss: 0.5, clipped: 2, ..LogRecord::default() });
        log.push(LogRecord { iteration: 10, d_loss: 1.0, info_loss: 0.125, ..LogRecord::default() });
        let back = TrainLog::parse(&log.to_text(), "log").unwrap();
        assert_eq!(back, log);
        assert_eq!(log.to_text().lines().count(), 3);
        assert!(TrainLog::parse("iteration=2\niteration=1\n", "x").is_err());
    }
}
