//! Delimiter-separated series files with a `# key=value` header block.

use crate::error::{Error, Result};
use crate::montecarlo::TrajectorySummary;
use crate::qcore::C64;
use crate::series::{CorrelationSeries, SeriesKind};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} has no file name", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

fn header(series: &CorrelationSeries) -> BTreeMap<String, String> {
    let mut h = series.attrs.clone();
    h.insert("kind".into(), series.kind.to_string());
    h.insert("normalized".into(), series.normalized.to_string());
    h.insert("scale".into(), series.scale.to_string());
    h
}

pub fn series_to_csv(series: &CorrelationSeries, stderr: Option<&[f64]>) -> Result<String> {
    if let Some(e) = stderr {
        if e.len() != series.len() {
            return Err(Error::Format(format!("{} stderr values for {} delays", e.len(), series.len())));
        }
    }
    let mut out = String::new();
    for (k, v) in header(series) {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::Format(format!("header entry {k:?} cannot be written")));
        }
        out.push_str(&format!("# {k}={v}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut cols = vec!["delay_ns", "value_re", "value_im"];
    if stderr.is_some() {
        cols.push("stderr");
    }
    w.write_record(&cols).map_err(csv_err)?;
    for k in 0..series.len() {
        let mut row = vec![series.delays[k].to_string(), series.values[k].re.to_string(), series.values[k].im.to_string()];
        if let Some(e) = stderr {
            row.push(e[k].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    out.push_str(&String::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?);
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_series(path: &Path, series: &CorrelationSeries, stderr: Option<&[f64]>) -> Result<()> {
    atomic_write(path, series_to_csv(series, stderr)?.as_bytes())
}

/// Parses a series file; the stderr column is returned when present.
pub fn series_from_csv(text: &str) -> Result<(CorrelationSeries, Option<Vec<f64>>)> {
    let mut attrs = BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let kv = line.trim_start_matches('#').trim();
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("header line without '=': {line:?}")))?;
        attrs.insert(k.to_string(), v.to_string());
    }
    let kind: SeriesKind = attrs
        .remove("kind")
        .ok_or_else(|| Error::Format("missing kind header".into()))?
        .parse()?;
    let normalized = match attrs.remove("normalized").as_deref() {
        Some("true") => true,
        Some("false") => false,
        other => return Err(Error::Format(format!("bad normalized header {other:?}"))),
    };
    let scale: f64 = attrs
        .remove("scale")
        .ok_or_else(|| Error::Format("missing scale header".into()))?
        .parse()
        .map_err(|e| Error::Format(format!("bad scale: {e}")))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let cols: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let has_err = match cols.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["delay_ns", "value_re", "value_im"] => false,
        ["delay_ns", "value_re", "value_im", "stderr"] => true,
        _ => return Err(Error::Format(format!("unexpected columns {cols:?}"))),
    };
    let (mut d, mut v, mut e) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Format(format!("row {}: missing column {i}", line + 1)))?
                .parse()
                .map_err(|err| Error::Format(format!("row {}: {err}", line + 1)))
        };
        d.push(num(0)?);
        v.push(C64::new(num(1)?, num(2)?));
        if has_err {
            e.push(num(3)?);
        }
    }
    let mut s = CorrelationSeries::new(d, v, kind, normalized)?;
    s.scale = scale;
    s.attrs = attrs;
    Ok((s, has_err.then_some(e)))
}

pub fn read_series(path: &Path) -> Result<(CorrelationSeries, Option<Vec<f64>>)> {
    series_from_csv(&fs::read_to_string(path)?)
}

/// Per-trajectory summaries with the run parameters in the header.
pub fn ensemble_dump_csv(params: &BTreeMap<String, String>, rows: &[TrajectorySummary]) -> Result<String> {
    let mut out = String::new();
    for (k, v) in params {
        out.push_str(&format!("# {k}={v}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    out.push_str(&String::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?);
    Ok(out)
}
