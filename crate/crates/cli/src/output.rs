//! Prediction files, label-list parsing and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mlreg::LabelVector;
use serde::Serialize;

use crate::error::{CliError, Result};

/// One comma-separated label list per line (an empty line is the empty set).
pub fn write_predictions(predictions: &[LabelVector], path: &Path) -> Result<()> {
    let mut text = String::new();
    for y in predictions {
        let ids: Vec<String> = y.labels().iter().map(usize::to_string).collect();
        let _ = writeln!(text, "{}", ids.join(","));
    }
    fs::write(path, text).map_err(CliError::io(path))
}

/// Raw label-id lists, one per line.
pub fn read_label_lists(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_label_lists(&text, path)
}

pub fn parse_label_lists(text: &str, path: &Path) -> Result<Vec<Vec<usize>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.trim();
            if line.is_empty() {
                return Ok(Vec::new());
            }
            line.split(',')
                .map(|t| {
                    t.trim().parse::<usize>().map_err(|_| CliError::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("bad label id `{t}`"),
                    })
                })
                .collect()
        })
        .collect()
}

/// `<path>.<suffix>`, keeping the original extension.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub library_version: &'a str,
    pub seed: u64,
    pub config: C,
    pub outputs: Vec<String>,
}

/// Writes `<primary>.manifest.json` describing the run.
pub fn write_manifest<C: Serialize>(command: &str, seed: u64, config: C, outputs: &[&Path]) -> Result<()> {
    let primary = outputs.first().ok_or_else(|| CliError::Usage("manifest needs an output".into()))?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        library_version: mlreg::VERSION,
        seed,
        config,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json(&manifest, &sidecar(primary, "manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_lists_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.txt");
        let ys = vec![
            LabelVector::new(4, [0, 2]).unwrap(),
            LabelVector::empty(4),
            LabelVector::new(4, [3]).unwrap(),
        ];
        write_predictions(&ys, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "0,2\n\n3\n");
        assert_eq!(read_label_lists(&path).unwrap(), vec![vec![0, 2], vec![], vec![3]]);
    }

    #[test]
    fn bad_ids_report_their_line() {
        match parse_label_lists("1\n2,x\n", Path::new("p.txt")) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sidecar_keeps_extension() {
        assert_eq!(sidecar(Path::new("out/model.mlr"), "log.json"), PathBuf::from("out/model.mlr.log.json"));
    }
}
