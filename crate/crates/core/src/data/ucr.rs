//! UCR-style classification text: one series per row, class label first,
//! fields separated by commas or whitespace.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct UcrExample {
    pub class: i64,
    pub values: Vec<f64>,
}

pub fn read_ucr(path: impl AsRef<Path>) -> Result<Vec<UcrExample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ucr(&text, &path.display().to_string())
}

pub(crate) fn parse_ucr(text: &str, origin: &str) -> Result<Vec<UcrExample>> {
    let fail = |line: usize, reason: String| Error::Parse {
        path: origin.to_string(),
        reason: format!("line {line}: {reason}"),
    };
    let mut out: Vec<UcrExample> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty());
        let head = fields.next().unwrap_or_default();
        // older archive files write the class as a float
        let class = head
            .parse::<i64>()
            .ok()
            .or_else(|| head.parse::<f64>().ok().filter(|f| f.fract() == 0.0).map(|f| f as i64))
            .ok_or_else(|| fail(line_no, format!("class `{head}` is not an integer")))?;
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|_| fail(line_no, format!("bad value `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(fail(line_no, "no values".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(fail(line_no, format!("non-finite value {v}")));
        }
        if let Some(first) = out.first() {
            if first.values.len() != values.len() {
                return Err(fail(
                    line_no,
                    format!("{} values where earlier rows have {}", values.len(), first.values.len()),
                ));
            }
        }
        out.push(UcrExample { class, values });
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("{origin} has no rows")));
    }
    Ok(out)
}

pub fn class_count(examples: &[UcrExample]) -> usize {
    examples.iter().map(|e| e.class).collect::<BTreeSet<_>>().len()
}

/// Tab-separated, class first.
pub fn write_ucr(examples: &[UcrExample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for e in examples {
        text.push_str(&e.class.to_string());
        for v in &e.values {
            text.push('\t');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
