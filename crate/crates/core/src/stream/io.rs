//! Versioned text format for feature streams.
//!
//! ```text
//! EDGESYNC-STREAM v1 C=<classes> D=<features> rate=<hz> n=<count>
//! <time>,<label>,<f1>,...,<fD>
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so save/load is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{FeatureStream, StreamMeta, StreamRecord};
use crate::error::{Error, Result};
use crate::util::write_atomic;

const MAGIC: &str = "EDGESYNC-STREAM";

pub fn write_stream<W: Write + ?Sized>(stream: &FeatureStream, out: &mut W) -> std::io::Result<()> {
    let m = &stream.meta;
    writeln!(out, "{MAGIC} v1 C={} D={} rate={} n={}", m.classes, m.features, m.rate_hz, stream.len())?;
    let mut line = String::new();
    for r in &stream.records {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "{},{}", r.time, r.label);
        for f in &r.features {
            let _ = write!(line, ",{f}");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_feature_file(path: &Path, stream: &FeatureStream) -> Result<()> {
    write_atomic(path, |w| write_stream(stream, w))
}

pub fn load_feature_file(path: &Path) -> Result<FeatureStream> {
    let file = File::open(path)?;
    let mut s = read_stream(BufReader::new(file), path)?;
    s.name = path.display().to_string();
    Ok(s)
}

fn header_field<T: std::str::FromStr>(tok: Option<&str>, key: &str) -> Option<T> {
    tok?.strip_prefix(key)?.parse().ok()
}

/// Parses a whole stream; any malformed record fails the entire read.
pub fn read_stream<R: BufRead>(input: R, origin: &Path) -> Result<FeatureStream> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Err(err(1, "empty stream file".into())),
    };
    let mut tok = header.split_whitespace();
    if tok.next() != Some(MAGIC) || tok.next() != Some("v1") {
        return Err(err(1, format!("expected `{MAGIC} v1` header")));
    }
    let classes: usize = header_field(tok.next(), "C=").ok_or_else(|| err(1, "bad or missing C=".into()))?;
    let features: usize = header_field(tok.next(), "D=").ok_or_else(|| err(1, "bad or missing D=".into()))?;
    let rate_hz: f64 = header_field(tok.next(), "rate=").ok_or_else(|| err(1, "bad or missing rate=".into()))?;
    let n: usize = header_field(tok.next(), "n=").ok_or_else(|| err(1, "bad or missing n=".into()))?;
    if classes < 2 || features == 0 || !(rate_hz > 0.0) || !rate_hz.is_finite() {
        return Err(err(1, "header values out of range".into()));
    }

    let mut records = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let time: f64 = parts
            .next()
            .and_then(|t| t.trim().parse().ok())
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| err(line_no, "bad time field".into()))?;
        let label: usize = parts
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| err(line_no, "bad label field".into()))?;
        if label >= classes {
            return Err(err(line_no, format!("record {} has label {label}, but C={classes}", records.len())));
        }
        let feats: Vec<f64> = parts
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(line_no, format!("bad feature value: {e}")))?;
        if feats.len() != features {
            return Err(err(line_no, format!("expected {features} features, got {}", feats.len())));
        }
        if feats.iter().any(|f| !f.is_finite()) {
            return Err(err(line_no, "non-finite feature".into()));
        }
        if let Some(prev) = records.last().map(|r: &StreamRecord| r.time) {
            if time <= prev {
                return Err(err(line_no, format!("timestamp {time} does not increase (previous {prev})")));
            }
        }
        records.push(StreamRecord {
            time,
            label,
            features: feats,
        });
    }
    if records.len() != n {
        return Err(err(
            n + 1,
            format!("header declares {n} records, found {} (truncated file?)", records.len()),
        ));
    }
    Ok(FeatureStream {
        meta: StreamMeta {
            classes,
            features,
            rate_hz,
        },
        name: String::new(),
        records,
    })
}
