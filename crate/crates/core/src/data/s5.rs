//! Labeled series as CSV with a `timestamp,value,is_anomaly` header. Columns
//! are located by name, so their order does not matter.

use std::path::Path;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| names.contains(&h.trim()))
}

/// The series id is the file stem.
pub fn read_s5(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_s5(file, &id, &path.display().to_string())
}

pub(crate) fn parse_s5(reader: impl std::io::Read, id: &str, origin: &str) -> Result<TimeSeries> {
    let fail = |reason: String| Error::Parse {
        path: origin.to_string(),
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| fail(e.to_string()))?.clone();
    let ts_col = column(&headers, &["timestamp", "timestamps"]).ok_or_else(|| fail("missing column `timestamp`".into()))?;
    let v_col = column(&headers, &["value"]).ok_or_else(|| fail("missing column `value`".into()))?;
    let l_col = column(&headers, &["is_anomaly", "anomaly"]).ok_or_else(|| fail("missing column `is_anomaly`".into()))?;
    let (mut timestamps, mut values, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let rec = rec.map_err(|e| fail(format!("row {row}: {e}")))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let ts = field(ts_col);
        let t = ts
            .parse::<i64>()
            .ok()
            .or_else(|| ts.parse::<f64>().ok().filter(|f| f.fract() == 0.0).map(|f| f as i64))
            .ok_or_else(|| fail(format!("row {row}: bad timestamp `{ts}`")))?;
        let v: f64 = field(v_col)
            .parse()
            .map_err(|_| fail(format!("row {row}: bad value `{}`", field(v_col))))?;
        let l = match field(l_col) {
            "0" | "0.0" => false,
            "1" | "1.0" => true,
            other => return Err(fail(format!("row {row}: is_anomaly must be 0 or 1, got `{other}`"))),
        };
        timestamps.push(t);
        values.push(v);
        labels.push(l);
    }
    TimeSeries::new(id, timestamps, values, Some(labels))
}

/// Unlabeled series are written with every `is_anomaly` set to 0.
pub fn write_s5(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    w.write_record(["timestamp", "value", "is_anomaly"]).map_err(csv_err)?;
    for i in 0..series.len() {
        let l = series.labels.as_ref().is_some_and(|l| l[i]);
        w.write_record([
            series.timestamps[i].to_string(),
            series.values[i].to_string(),
            u8::from(l).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
