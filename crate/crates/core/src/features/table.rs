use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::volume::ClassLabel;

use super::schema::{FeatureKind, FeatureSchema};

/// One case's values, aligned to a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub schema_version: String,
    pub case_id: String,
    pub label: Option<ClassLabel>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(
        schema: &FeatureSchema,
        case_id: String,
        label: Option<ClassLabel>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let v = FeatureVector {
            schema_version: schema.version.clone(),
            case_id,
            label,
            values,
        };
        v.check(schema)?;
        Ok(v)
    }

    pub fn check(&self, schema: &FeatureSchema) -> Result<()> {
        if self.schema_version != schema.version {
            return Err(Error::SchemaMismatch(format!(
                "vector has schema {}, expected {}",
                self.schema_version, schema.version
            )));
        }
        if self.values.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "vector has {} values, schema has {}",
                self.values.len(),
                schema.len()
            )));
        }
        for (j, (&v, def)) in self.values.iter().zip(&schema.features).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row: 0, column: j });
            }
            if def.kind == FeatureKind::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::SchemaMismatch(format!("binary feature {} has value {v}", def.id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, schema: &FeatureSchema, id: &str) -> Option<f64> {
        schema.index_of(id).map(|i| self.values[i])
    }
}

/// Rows of feature vectors sharing one schema; the CSV feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema: FeatureSchema,
    pub rows: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn new(schema: FeatureSchema, rows: Vec<FeatureVector>) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            row.check(&schema).map_err(|e| match e {
                Error::NonFiniteFeature { column, .. } => Error::NonFiniteFeature { row: r, column },
                other => other,
            })?;
        }
        Ok(FeatureTable { schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Labels of every row; fails if any row is unlabeled.
    pub fn labels(&self) -> Result<Vec<ClassLabel>> {
        self.rows
            .iter()
            .map(|r| {
                r.label
                    .ok_or_else(|| Error::InvalidParameter(format!("case {} has no label", r.case_id)))
            })
            .collect()
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[index]).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["case_id".to_string(), "label".to_string()];
        header.extend(self.schema.ids().map(str::to_string));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.case_id.clone(),
                row.label.map(|l| l.as_str().to_string()).unwrap_or_default(),
            ];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::io("<csv buffer>", e.into_error()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    pub fn from_csv(bytes: &[u8], schema: &FeatureSchema) -> Result<FeatureTable> {
        let mut r = csv::Reader::from_reader(bytes);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != "case_id" || header[1] != "label" {
            return Err(Error::SchemaMismatch(
                "feature table must start with columns case_id,label".into(),
            ));
        }
        let columns = &header[2..];
        for id in schema.ids() {
            if !columns.iter().any(|c| c == id) {
                return Err(Error::SchemaMismatch(format!("missing column {id}")));
            }
        }
        if columns.len() != schema.len() || !columns.iter().zip(schema.ids()).all(|(c, id)| c == id) {
            let extra: Vec<&String> = columns.iter().filter(|c| schema.index_of(c).is_none()).collect();
            return Err(Error::SchemaMismatch(if extra.is_empty() {
                "feature columns are out of schema order".into()
            } else {
                format!("unexpected column {}", extra[0])
            }));
        }
        let mut rows = Vec::new();
        for (r_idx, rec) in r.records().enumerate() {
            let rec = rec?;
            let label = match &rec[1] {
                "" => None,
                s => Some(ClassLabel::parse(s).ok_or_else(|| {
                    Error::SchemaMismatch(format!("row {r_idx}: label {s:?} is not covid/other/empty"))
                })?),
            };
            let values = rec
                .iter()
                .skip(2)
                .enumerate()
                .map(|(j, s)| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::SchemaMismatch(format!("row {r_idx}: column {} is not a number", columns[j])))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(FeatureVector {
                schema_version: schema.version.clone(),
                case_id: rec[0].to_string(),
                label,
                values,
            });
        }
        FeatureTable::new(schema.clone(), rows)
    }

    pub fn read_csv(path: &Path, schema: &FeatureSchema) -> Result<FeatureTable> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        FeatureTable::from_csv(&bytes, schema)
    }
}
