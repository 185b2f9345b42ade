//! On-disk oracle datasets.
//!
//! A dataset is a directory holding
//!
//! - `dataset.json`: `{format_version, window_size, count, fingerprint, grids}`
//! - `examples.csv`: one row per window with the columns
//!   `window_id,parent_id,start_index,detector_label,param_label,combo_index,window_score,tp,fp,fn,tn,anomaly_indices`
//!   (`anomaly_indices` is a `;`-separated list of positions inside the window)
//! - `windows.f64`: the raw window values, `count * window_size` little-endian
//!   IEEE-754 doubles in row order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detectors::GridSet;
use crate::error::{Error, Result};
use crate::metrics::ConfusionCounts;
use crate::oracle::{ComboScore, LabeledDataset, SupervisedExample};
use crate::series::Window;

pub const DATASET_FORMAT_VERSION: u32 = 1;

const HEADER: [&str; 12] = [
    "window_id",
    "parent_id",
    "start_index",
    "detector_label",
    "param_label",
    "combo_index",
    "window_score",
    "tp",
    "fp",
    "fn",
    "tn",
    "anomaly_indices",
];

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    window_size: usize,
    count: usize,
    fingerprint: String,
    grids: GridSet,
}

pub fn write_dataset(data: &LabeledDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta {
        format_version: DATASET_FORMAT_VERSION,
        window_size: data.window_size,
        count: data.len(),
        fingerprint: data.grids.fingerprint(),
        grids: data.grids.clone(),
    };
    let meta_path = dir.join("dataset.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;

    let csv_path = dir.join("examples.csv");
    let csv_err = |e: csv::Error| Error::Parse {
        path: csv_path.display().to_string(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    w.write_record(HEADER).map_err(csv_err)?;
    let mut raw = Vec::with_capacity(data.len() * data.window_size * 8);
    for (i, e) in data.examples.iter().enumerate() {
        let p = &e.provenance;
        let anomalies: Vec<String> = e
            .window
            .labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l)
            .map(|(j, _)| j.to_string())
            .collect();
        w.write_record([
            i.to_string(),
            e.window.parent_id.clone(),
            e.window.start_index.to_string(),
            e.detector_label.to_string(),
            e.param_label.to_string(),
            p.combo_index.to_string(),
            p.window_score.to_string(),
            p.counts.tp.to_string(),
            p.counts.fp.to_string(),
            p.counts.fn_.to_string(),
            p.counts.tn.to_string(),
            anomalies.join(";"),
        ])
        .map_err(csv_err)?;
        for v in &e.raw_values {
            raw.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let bin_path = dir.join("windows.f64");
    std::fs::write(&bin_path, raw).map_err(|e| Error::io(&bin_path, e))
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join("dataset.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&text)?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "dataset format {} is not supported (expected {DATASET_FORMAT_VERSION})",
            meta.format_version
        )));
    }
    if meta.grids.fingerprint() != meta.fingerprint {
        return Err(Error::Format("dataset grid fingerprint does not match its grids".into()));
    }
    let n = meta.window_size;
    let bin_path = dir.join("windows.f64");
    let bytes = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if bytes.len() != meta.count * n * 8 {
        return Err(Error::Format(format!(
            "windows.f64 holds {} bytes, expected {}",
            bytes.len(),
            meta.count * n * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let csv_path = dir.join("examples.csv");
    let fail = |row: usize, reason: String| Error::Parse {
        path: csv_path.display().to_string(),
        reason: format!("row {row}: {reason}"),
    };
    let mut rdr = csv::Reader::from_path(&csv_path).map_err(|e| fail(1, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| fail(1, e.to_string()))?;
    if headers.iter().ne(HEADER) {
        return Err(fail(1, format!("unexpected header, expected {}", HEADER.join(","))));
    }
    let mut examples = Vec::with_capacity(meta.count);
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| fail(row, e.to_string()))?;
        if i >= meta.count {
            return Err(fail(row, "more rows than dataset.json declares".into()));
        }
        let num = |c: usize| -> Result<u64> {
            rec[c].parse().map_err(|_| fail(row, format!("`{}` in column {} is not an integer", &rec[c], HEADER[c])))
        };
        let mut labels = vec![false; n];
        for idx in rec[11].split(';').filter(|s| !s.is_empty()) {
            let j: usize = idx.parse().map_err(|_| fail(row, format!("bad anomaly index `{idx}`")))?;
            *labels.get_mut(j).ok_or_else(|| fail(row, format!("anomaly index {j} outside window")))? = true;
        }
        let window_score: f64 = rec[6].parse().map_err(|_| fail(row, "bad window_score".into()))?;
        let provenance = ComboScore {
            combo_index: num(5)? as usize,
            detector_class: num(3)? as usize,
            param_index: num(4)? as usize,
            counts: ConfusionCounts::new(num(7)?, num(8)?, num(9)?, num(10)?),
            window_score,
        };
        let raw = Window {
            parent_id: rec[1].to_string(),
            start_index: num(2)? as usize,
            values: values[i * n..(i + 1) * n].to_vec(),
            labels,
            normalized: false,
        };
        examples.push(SupervisedExample::from_raw(&raw, provenance));
    }
    if examples.len() != meta.count {
        return Err(Error::Format(format!(
            "examples.csv has {} rows, dataset.json declares {}",
            examples.len(),
            meta.count
        )));
    }
    LabeledDataset::new(examples, n, meta.grids)
}
