use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, LogRow};
use crate::error::{Error, Result};

/// Which input columns hold the canonical fields.
///
/// The canonical layout is `cycle_id,test_id,verdict,duration,f1..fK`.
/// Other formats (for instance the semicolon separated Paint-Control and
/// IOFROL exports) are read by naming their columns here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub cycle_id: String,
    pub test_id: String,
    pub verdict: String,
    pub duration: String,
    /// Code feature columns in order. `None` picks every `f<N>` column.
    pub features: Option<Vec<String>>,
    pub delimiter: char,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            cycle_id: "cycle_id".into(),
            test_id: "test_id".into(),
            verdict: "verdict".into(),
            duration: "duration".into(),
            features: None,
            delimiter: ',',
        }
    }
}

fn is_feature_column(name: &str) -> bool {
    name.strip_prefix('f')
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

pub fn read_log_rows(path: &Path, mapping: &ColumnMapping) -> Result<Vec<LogRow>> {
    if !mapping.delimiter.is_ascii() {
        return Err(Error::InvalidConfig(format!(
            "delimiter {:?} is not ASCII",
            mapping.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let cycle_col = column(&mapping.cycle_id)?;
    let test_col = column(&mapping.test_id)?;
    let verdict_col = column(&mapping.verdict)?;
    let duration_col = column(&mapping.duration)?;
    let feature_cols: Vec<usize> = match &mapping.features {
        Some(names) => names.iter().map(|n| column(n)).collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(_, h)| is_feature_column(h))
            .map(|(i, _)| i)
            .collect(),
    };

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            row: line,
            message,
        };
        let field = |col: usize, name: &str| {
            record
                .get(col)
                .ok_or_else(|| bad(format!("missing field `{name}`")))
        };

        let cycle_id: u64 = field(cycle_col, &mapping.cycle_id)?
            .parse()
            .map_err(|e| bad(format!("cycle id: {e}")))?;
        if cycle_id == 0 {
            return Err(bad("cycle id must be positive".into()));
        }
        let test_id = field(test_col, &mapping.test_id)?.to_string();
        if test_id.is_empty() {
            return Err(bad("empty test id".into()));
        }
        let verdict = match field(verdict_col, &mapping.verdict)? {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("verdict `{other}` is not 0 or 1"))),
        };
        let duration: f64 = field(duration_col, &mapping.duration)?
            .parse()
            .map_err(|e| bad(format!("duration: {e}")))?;
        if !duration.is_finite() || duration < 0.0 {
            return Err(bad(format!("duration {duration} is not a nonnegative number")));
        }
        let features = feature_cols
            .iter()
            .map(|&c| {
                let v: f64 = field(c, &headers[c])?
                    .parse()
                    .map_err(|e| bad(format!("feature `{}`: {e}", &headers[c])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad(format!("feature `{}` is not finite", &headers[c])))
                }
            })
            .collect::<Result<Vec<f64>>>()?;

        rows.push(LogRow {
            cycle_id,
            test_id,
            verdict,
            duration,
            features,
        });
    }
    Ok(rows)
}

/// Reads an execution log and derives the per-cycle features.
pub fn load_dataset(path: &Path, mapping: &ColumnMapping, history_len: usize) -> Result<Dataset> {
    let rows = read_log_rows(path, mapping)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::from_rows(name, rows, history_len)
}

/// Writes the canonical CSV. Loading the file again reproduces the dataset.
pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    write!(out, "cycle_id,test_id,verdict,duration")?;
    for k in 1..=ds.code_dim {
        write!(out, ",f{k}")?;
    }
    writeln!(out)?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for cycle in &ds.cycles {
        for r in &cycle.records {
            let mut fields = vec![
                cycle.cycle_id.to_string(),
                r.test_id.clone(),
                r.verdict.to_string(),
                r.duration.to_string(),
            ];
            fields.extend(r.code_features.iter().map(f64::to_string));
            writer.write_record(&fields)?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DEFAULT_HISTORY_LEN;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_canonical_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "two.csv",
            "cycle_id,test_id,verdict,duration,f1,f2\n\
             1,a,0,1.5,0.1,0.2\n2,a,1,2.5,0.3,0.4\n1,b,1,3,0,0\n\
             2,b,0,1,0,0\n1,c,0,1,0,0\n2,c,0,1,0,0\n",
        );
        let ds = load_dataset(&p, &ColumnMapping::default(), DEFAULT_HISTORY_LEN).unwrap();
        assert_eq!(ds.name, "two");
        assert_eq!(ds.cycles.len(), 2);
        assert_eq!(ds.max_tests, 3);
        assert_eq!(ds.code_dim, 2);
        assert_eq!(ds.feature_dim, 2 + 4 + 2);
        assert_eq!(ds.cycles[1].record("a").unwrap().exec_time, 1.5);
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "bad.csv",
            "cycle_id,test_id,verdict,duration\n1,a,0,1\n1,b,2,1\n",
        );
        let err = load_dataset(&p, &ColumnMapping::default(), 4).unwrap_err();
        match err {
            Error::MalformedRow { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "nov.csv", "cycle_id,test_id,duration\n1,a,1\n");
        let err = load_dataset(&p, &ColumnMapping::default(), 4).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "verdict"));
    }

    #[test]
    fn duplicate_pair_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "dup.csv",
            "cycle_id,test_id,verdict,duration\n1,a,0,1\n1,a,0,1\n",
        );
        assert!(matches!(
            load_dataset(&p, &ColumnMapping::default(), 4),
            Err(Error::DuplicateRecord { .. })
        ));
    }

    #[test]
    fn custom_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "paint.csv",
            "Id;Name;Duration;CalcPrio;LastRun;NumRuns;NumErrors;Verdict;Cycle;LastResults\n\
             1;T1;12;0;2016-01-01;1;0;0;1;[]\n2;T2;3;0;2016-01-01;1;0;1;1;[]\n",
        );
        let mapping = ColumnMapping {
            cycle_id: "Cycle".into(),
            test_id: "Name".into(),
            verdict: "Verdict".into(),
            duration: "Duration".into(),
            features: Some(Vec::new()),
            delimiter: ';',
        };
        let ds = load_dataset(&p, &mapping, 4).unwrap();
        assert_eq!(ds.cycles[0].len(), 2);
        assert_eq!(ds.code_dim, 0);
        assert!(ds.cycles[0].failed);
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "in.csv",
            "cycle_id,test_id,verdict,duration,f1\n1,a,0,0.1,0.7\n1,b,1,2.25,0.3\n2,a,1,0.2,0.9\n",
        );
        let ds = load_dataset(&p, &ColumnMapping::default(), 4).unwrap();
        let out = dir.path().join("in_copy.csv");
        write_dataset_csv(&ds, &out).unwrap();
        let again = load_dataset(&out, &ColumnMapping::default(), 4).unwrap();
        assert_eq!(again.cycles, ds.cycles);
    }
}
