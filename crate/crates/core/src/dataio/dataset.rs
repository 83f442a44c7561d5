//! Text dataset format.
//!
//! ```text
//! #meta N=2 D=8 L=3
//! 0,2<TAB>1:0.5 7:1.0
//! <TAB>3:1.0
//! ```
//!
//! One row per line: comma-separated label ids (empty for no labels), a tab,
//! then `index:value` pairs with strictly increasing indices. Values are
//! written in shortest round-trip form. Without a header, `D` and `L` are
//! inferred as one past the largest index and label id.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{LabelVector, MultiLabelDataset, SparseInstance};

struct Header {
    n: usize,
    d: usize,
    l: usize,
}

struct Row {
    line: usize,
    labels: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

pub fn parse_dataset(path: impl AsRef<Path>) -> Result<MultiLabelDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_dataset_str(&text, path)
}

/// Parses dataset text; `source` only labels error messages.
pub fn parse_dataset_str(text: &str, source: &Path) -> Result<MultiLabelDataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut header: Option<Header> = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(rest) = raw.strip_prefix("#meta") {
            if header.is_some() || !rows.is_empty() {
                return Err(err(number, "header must be the first line".into()));
            }
            header = Some(parse_header(rest).map_err(|m| err(number, m))?);
            continue;
        }
        if raw.starts_with('#') {
            continue;
        }
        rows.push(parse_row(raw, number).map_err(|m| err(number, m))?);
    }
    if rows.is_empty() {
        return Err(err(0, "no data rows".into()));
    }

    let (d, l) = match &header {
        Some(h) => {
            if h.n != rows.len() {
                return Err(err(1, format!("header declares N={} but found {} rows", h.n, rows.len())));
            }
            (h.d, h.l)
        }
        None => {
            let d = rows.iter().filter_map(|r| r.entries.last()).map(|e| e.0 + 1).max();
            let l = rows.iter().filter_map(|r| r.labels.iter().max()).map(|m| m + 1).max();
            match (d, l) {
                (Some(d), Some(l)) => (d, l),
                _ => return Err(err(0, "cannot infer D and L without a header".into())),
            }
        }
    };

    let mut instances = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for row in rows {
        let x = SparseInstance::new(d, row.entries).map_err(|e| err(row.line, e.to_string()))?;
        let y = LabelVector::new(l, row.labels).map_err(|e| err(row.line, e.to_string()))?;
        instances.push(x);
        labels.push(y);
    }
    MultiLabelDataset::new(instances, labels, d, l)
}

fn parse_header(rest: &str) -> std::result::Result<Header, String> {
    let (mut n, mut d, mut l) = (None, None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format!("malformed header field `{field}`"))?;
        let value: usize = value
            .parse()
            .map_err(|_| format!("header value `{value}` is not an integer"))?;
        match key {
            "N" => n = Some(value),
            "D" => d = Some(value),
            "L" => l = Some(value),
            _ => return Err(format!("unknown header key `{key}`")),
        }
    }
    match (n, d, l) {
        (Some(n), Some(d), Some(l)) => Ok(Header { n, d, l }),
        _ => Err("header must declare N, D and L".into()),
    }
}

fn parse_row(raw: &str, line: usize) -> std::result::Result<Row, String> {
    let (label_part, feature_part) = raw
        .split_once('\t')
        .ok_or_else(|| "expected a tab between labels and features".to_string())?;
    let labels = if label_part.is_empty() {
        Vec::new()
    } else {
        label_part
            .split(',')
            .map(|t| t.parse::<usize>().map_err(|_| format!("bad label id `{t}`")))
            .collect::<std::result::Result<_, _>>()?
    };
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for token in feature_part.split(' ').filter(|t| !t.is_empty()) {
        let (index, value) = token
            .split_once(':')
            .ok_or_else(|| format!("expected index:value, got `{token}`"))?;
        let index: usize = index.parse().map_err(|_| format!("bad feature index `{index}`"))?;
        let value: f64 = value.parse().map_err(|_| format!("bad feature value `{value}`"))?;
        if let Some(&(previous, _)) = entries.last() {
            if index <= previous {
                return Err(format!("feature indices not strictly increasing ({previous} then {index})"));
            }
        }
        entries.push((index, value));
    }
    Ok(Row { line, labels, entries })
}

/// Dataset text with a `#meta` header.
pub fn serialize_dataset(dataset: &MultiLabelDataset) -> String {
    let mut out = format!(
        "#meta N={} D={} L={}\n",
        dataset.len(),
        dataset.num_features(),
        dataset.num_labels()
    );
    for (x, y) in dataset.iter() {
        let labels: Vec<String> = y.labels().iter().map(usize::to_string).collect();
        out.push_str(&labels.join(","));
        out.push('\t');
        for (k, (index, value)) in x.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            // Debug formatting of f64 is the shortest string that parses back exactly
            let _ = write!(out, "{index}:{value:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(dataset: &MultiLabelDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serialize_dataset(dataset))?;
    Ok(())
}

/// Label names, one per line, in label-id order.
pub fn read_label_names(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let names: Vec<String> = text.lines().map(str::to_string).collect();
    if let Some(i) = names.iter().position(|n| n.trim().is_empty()) {
        return Err(Error::Parse {
            path: PathBuf::from(path),
            line: i + 1,
            message: "empty label name".into(),
        });
    }
    Ok(names)
}

pub fn write_label_names(names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let mut text = names.join("\n");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
