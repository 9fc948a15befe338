//! On-disk trace format and truth sidecar.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "GIMPTRC\0"
//! hlen       u64      length of the JSON header
//! header     hlen bytes of UTF-8 JSON (TraceHeader)
//! monitor    n_windows x f64
//! samples    n_samples x f64, position in m
//! ```

use super::{Impulse, ImpulseOrigin, ImpulseTrain, NoiseConfig, OscillatorConfig, ReadoutSource};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"GIMPTRC\0";
const BLOCK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: String,
    pub sample_rate: f64,
    pub duration: f64,
    pub n_samples: usize,
    pub n_windows: usize,
    pub seed: u64,
    pub oscillator: OscillatorConfig,
    pub noise: NoiseConfig,
    pub calibration_schedule: Vec<f64>,
    /// Free-form labels such as gas and nominal pressure.
    #[serde(default)]
    pub metadata: std::collections::BTreeMap<String, String>,
}

/// Streams `source` to `path`.
pub fn write_trace(
    path: &Path,
    header: &TraceHeader,
    source: &mut dyn ReadoutSource,
) -> Result<()> {
    if header.n_samples != source.total_samples()
        || header.n_windows != source.monitor_power().len()
    {
        return Err(Error::Misaligned(
            "trace header does not match the source".into(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    let json = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in source.monitor_power() {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = vec![0.0; BLOCK];
    let mut bytes = Vec::with_capacity(BLOCK * 8);
    let mut written = 0;
    loop {
        let n = source.read(&mut buf)?;
        if n == 0 {
            break;
        }
        bytes.clear();
        for v in &buf[..n] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
        written += n;
    }
    if written != header.n_samples {
        return Err(Error::Format(format!(
            "source ended after {written} of {} samples",
            header.n_samples
        )));
    }
    w.flush()?;
    Ok(())
}

/// Reader for the trace format; streams samples on demand.
pub struct TraceFile {
    header: TraceHeader,
    monitor: Vec<f64>,
    reader: BufReader<File>,
    pos: usize,
    bytes: Vec<u8>,
}

impl TraceFile {
    pub fn open(path: &Path) -> Result<Self> {
        let mut reader = BufReader::with_capacity(1 << 20, File::open(path)?);
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "{} is not a trace file",
                path.display()
            )));
        }
        let mut len = [0u8; 8];
        reader.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::Format("trace header too large".into()));
        }
        let mut json = vec![0u8; len];
        reader.read_exact(&mut json)?;
        let value: serde_json::Value = serde_json::from_slice(&json)?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Format("trace header lacks schema_version".into()))?;
        crate::schema::check(version)?;
        let header: TraceHeader = serde_json::from_value(value)?;
        let mut monitor = vec![0.0; header.n_windows];
        let mut b = [0u8; 8];
        for m in monitor.iter_mut() {
            reader.read_exact(&mut b)?;
            *m = f64::from_le_bytes(b);
        }
        Ok(TraceFile {
            header,
            monitor,
            reader,
            pos: 0,
            bytes: Vec::new(),
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }
}

impl ReadoutSource for TraceFile {
    fn sample_rate(&self) -> f64 {
        self.header.sample_rate
    }
    fn total_samples(&self) -> usize {
        self.header.n_samples
    }
    fn monitor_power(&self) -> &[f64] {
        &self.monitor
    }
    fn calibration_schedule(&self) -> &[f64] {
        &self.header.calibration_schedule
    }
    fn read(&mut self, out: &mut [f64]) -> Result<usize> {
        let n = out.len().min(self.header.n_samples - self.pos);
        self.bytes.resize(n * 8, 0);
        self.reader.read_exact(&mut self.bytes)?;
        for (o, c) in out.iter_mut().zip(self.bytes.chunks_exact(8)) {
            *o = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        }
        self.pos += n;
        Ok(n)
    }
}

/// Truth sidecar: `# schema_version`, then `time_s,amplitude_kevc,origin` rows.
pub fn write_truth_csv(path: &Path, train: &ImpulseTrain) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# schema_version={}", crate::schema::VERSION)?;
    writeln!(w, "time_s,amplitude_kevc,origin")?;
    for i in train.iter() {
        writeln!(w, "{},{},{}", i.time, i.amplitude, i.origin.as_str())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv(path: &Path) -> Result<ImpulseTrain> {
    let r = BufReader::new(File::open(path)?);
    let mut impulses = Vec::new();
    let mut saw_version = false;
    for line in r.lines() {
        let line = line?;
        if let Some(v) = line.strip_prefix("# schema_version=") {
            crate::schema::check(v)?;
            saw_version = true;
            continue;
        }
        if line.starts_with("time_s") || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Format(format!("bad truth row `{line}`")));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("`{s}`: {e}")))
        };
        impulses.push(Impulse {
            time: parse(cols[0])?,
            amplitude: parse(cols[1])?,
            origin: ImpulseOrigin::parse(cols[2])?,
        });
    }
    if !saw_version {
        return Err(Error::Format(
            "truth file lacks a schema_version line".into(),
        ));
    }
    Ok(ImpulseTrain::new(impulses))
}
