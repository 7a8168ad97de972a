//! Feature matrix export: dense TSV, and raw little-endian float64 with a
//! JSON shape sidecar.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, View};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShape {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub view: View,
    pub column_labels: Vec<String>,
}

impl FeatureMatrix {
    pub fn to_tsv(&self) -> String {
        let mut out = self.column_labels().join("\t");
        out.push('\n');
        for i in 0..self.n_rows() {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push('\t');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn shape(&self) -> FeatureShape {
        FeatureShape {
            rows: self.n_rows(),
            cols: self.dim(),
            dtype: "float64".into(),
            byte_order: "little".into(),
            layout: "row-major".into(),
            view: self.view(),
            column_labels: self.column_labels().to_vec(),
        }
    }

    /// Writes `<stem>.tsv`, `<stem>.f64` and `<stem>.json` into `dir`.
    pub fn write_all(&self, dir: &Path, stem: &str) -> Result<()> {
        let write = |name: String, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        write(format!("{stem}.tsv"), self.to_tsv().as_bytes())?;
        write(format!("{stem}.f64"), &self.to_le_bytes())?;
        let json = serde_json::to_string_pretty(&self.shape()).map_err(|e| Error::Internal(e.to_string()))?;
        write(format!("{stem}.json"), json.as_bytes())
    }
}

/// Reads a binary feature file back using its sidecar.
pub fn read_binary(bin: &Path, sidecar: &Path) -> Result<FeatureMatrix> {
    let shape_text = std::fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let shape: FeatureShape = serde_json::from_str(&shape_text)
        .map_err(|e| Error::parse(&sidecar.display().to_string(), e.line(), e.to_string()))?;
    if shape.dtype != "float64" || shape.byte_order != "little" || shape.layout != "row-major" {
        return Err(Error::Data(format!("unsupported feature encoding in {}", sidecar.display())));
    }
    let bytes = std::fs::read(bin).map_err(|e| Error::io(bin, e))?;
    if bytes.len() != shape.rows * shape.cols * 8 {
        return Err(Error::Data(format!("{} has {} bytes, expected {}", bin.display(), bytes.len(), shape.rows * shape.cols * 8)));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    FeatureMatrix::new(shape.rows, shape.cols, values, shape.view, shape.column_labels)
}
