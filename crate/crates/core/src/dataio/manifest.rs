//! JSON Lines manifests: one `{"id", "split", "world", "class"?, "features"}` object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::hierarchy::WorldHierarchy;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub id: String,
    pub split: Split,
    pub world: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub features: Vec<f64>,
}

impl ManifestRow {
    fn from_record<F: Scalar>(h: &WorldHierarchy, r: &SampleRecord<F>) -> Self {
        ManifestRow {
            id: r.id.clone(),
            split: r.split,
            world: h.worlds()[r.label.depth()].clone(),
            class: r.label.class_id().map(|c| h.classes()[c].clone()),
            features: r.features.iter().map(|v| v.as_f64()).collect(),
        }
    }

    fn into_record<F: Scalar>(
        self,
        h: &WorldHierarchy,
    ) -> std::result::Result<SampleRecord<F>, String> {
        let label = h
            .label(&self.world, self.class.as_deref())
            .map_err(|e| e.to_string())?;
        let mut features = Vec::with_capacity(self.features.len());
        for (i, v) in self.features.iter().enumerate() {
            let x = F::from_f64(*v).filter(|x| x.is_finite());
            match x {
                Some(x) => features.push(x),
                None => return Err(format!("feature {i} of '{}' is not finite", self.id)),
            }
        }
        Ok(SampleRecord {
            id: self.id,
            features,
            label,
            split: self.split,
        })
    }
}

/// Parses manifest lines, appending to `out`. Blank lines are skipped.
pub fn read_manifest<F: Scalar, R: BufRead>(
    reader: R,
    source: &str,
    h: &WorldHierarchy,
    out: &mut Vec<SampleRecord<F>>,
) -> Result<()> {
    let mut dim = out.first().map(|r| r.features.len());
    let mut ids: std::collections::HashSet<String> = out.iter().map(|r| r.id.clone()).collect();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let fail = |message: String| Error::Load {
            path: source.to_string(),
            line: line_no,
            message,
        };
        let line = line.map_err(|e| fail(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let record: SampleRecord<F> = row.into_record(h).map_err(fail)?;
        match dim {
            None => dim = Some(record.features.len()),
            Some(d) if d != record.features.len() => {
                return Err(fail(format!(
                    "dimension mismatch: expected {d}, got {}",
                    record.features.len()
                )))
            }
            _ => {}
        }
        if !ids.insert(record.id.clone()) {
            return Err(fail(format!("duplicate id '{}'", record.id)));
        }
        out.push(record);
    }
    Ok(())
}

pub fn load_manifest<F: Scalar>(path: &Path, h: &WorldHierarchy) -> Result<Dataset<F>> {
    load_manifests(&[path], h)
}

/// Loads several manifests into one dataset; ids must be unique across all files.
pub fn load_manifests<F: Scalar, P: AsRef<Path>>(
    paths: &[P],
    h: &WorldHierarchy,
) -> Result<Dataset<F>> {
    let mut records = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_manifest(
            BufReader::new(file),
            &path.display().to_string(),
            h,
            &mut records,
        )?;
    }
    Dataset::new(h.clone(), records)
}

pub fn write_manifest<'a, F, I>(path: &Path, h: &WorldHierarchy, records: I) -> Result<()>
where
    F: Scalar,
    I: IntoIterator<Item = &'a SampleRecord<F>>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &ManifestRow::from_record(h, r))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
