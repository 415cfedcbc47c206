//! Multichannel time-series panels, CSV interchange and detrending.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// `n` channels of `T` samples at spacing `dt`, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    dt: f64,
    channels: Vec<Vec<f64>>,
}

impl TimeSeriesPanel {
    pub fn new(dt: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Invalid(format!("sampling interval must be positive, got {dt}")));
        }
        let t = channels.first().map_or(0, Vec::len);
        if channels.is_empty() || t == 0 {
            return Err(Error::Invalid("panel needs at least one channel and one sample".into()));
        }
        for (i, c) in channels.iter().enumerate() {
            if c.len() != t {
                return Err(Error::Invalid(format!("channel {} has {} samples, expected {t}", i + 1, c.len())));
            }
            if let Some(k) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite value in channel {} at sample {k}", i + 1)));
            }
        }
        Ok(Self { dt, channels })
    }

    pub fn n(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Invalid(format!("sampling interval must be positive, got {dt}")));
        }
        self.dt = dt;
        Ok(self)
    }

    /// Keeps samples `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Invalid(format!("bad sample range {start}..{end}")));
        }
        Self::new(self.dt, self.channels.iter().map(|c| c[start..end].to_vec()).collect())
    }

    /// Writes `t,x1,...,xn` followed by one row per sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n()).map(|i| format!("x{i}")));
        w.write_record(&header).map_err(csv_io)?;
        let mut row = Vec::with_capacity(self.n() + 1);
        for k in 0..self.len() {
            row.clear();
            row.push((k as f64 * self.dt).to_string());
            row.extend(self.channels.iter().map(|c| c[k].to_string()));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV format written by [`write_csv`](Self::write_csv).
    /// The first column is time; `dt` is the spacing of its first two rows.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = r.headers().map_err(|e| csv_parse(&e, 1))?.clone();
        if header.len() < 2 || header.get(0) != Some("t") {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `t,x1,...,xn`".into(),
            });
        }
        let n = header.len() - 1;
        let mut times = Vec::new();
        let mut channels = vec![Vec::new(); n];
        for (k, rec) in r.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| csv_parse(&e, line))?;
            if rec.len() != n + 1 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, found {}", n + 1, rec.len()),
                });
            }
            let mut vals = rec.iter().map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line, msg: format!("bad number `{f}`") })
            });
            times.push(vals.next().unwrap()?);
            for c in channels.iter_mut() {
                c.push(vals.next().unwrap()?);
            }
        }
        if times.is_empty() {
            return Err(Error::Parse { line: 2, msg: "no samples".into() });
        }
        let dt = if times.len() >= 2 { times[1] - times[0] } else { 1.0 };
        if !(dt > 0.0) {
            return Err(Error::Parse { line: 3, msg: "time column must increase".into() });
        }
        Self::new(dt, channels)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn csv_parse(e: &csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    Error::Parse { line, msg: e.to_string() }
}

/// Removes the least-squares affine trend from every channel.
pub fn detrend(p: &TimeSeriesPanel) -> Result<TimeSeriesPanel> {
    let t = p.len();
    if t < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: t });
    }
    let tf = t as f64;
    let k_mean = (tf - 1.0) / 2.0;
    let k_var: f64 = (0..t).map(|k| (k as f64 - k_mean).powi(2)).sum();
    let channels = p
        .channels()
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / tf;
            let cov: f64 = c
                .iter()
                .enumerate()
                .map(|(k, v)| (k as f64 - k_mean) * (v - mean))
                .sum();
            let slope = cov / k_var;
            c.iter()
                .enumerate()
                .map(|(k, v)| v - mean - slope * (k as f64 - k_mean))
                .collect()
        })
        .collect();
    TimeSeriesPanel::new(p.dt(), channels)
}
