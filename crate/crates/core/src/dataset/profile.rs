//! Delimited-text profile files: one run record per line after a header.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::domain::{InputFeatures, KnobSpace, RunRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Column names of a profile file. Knob columns are the knob names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileSchema {
    pub input_column: String,
    pub feature_columns: Vec<String>,
    pub distance_column: String,
    pub cost_column: String,
    /// Read when present; written for normalized datasets.
    pub error_column: String,
    /// Optional per-input probability weight.
    pub weight_column: Option<String>,
}

impl Default for ProfileSchema {
    fn default() -> Self {
        ProfileSchema {
            input_column: "input_id".into(),
            feature_columns: Vec::new(),
            distance_column: "distance".into(),
            cost_column: "cost".into(),
            error_column: "error".into(),
            weight_column: None,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Data {
            line: 1,
            reason: format!("missing column `{name}` in header"),
        })
}

fn cell<F: Scalar>(row: &csv::StringRecord, idx: usize, name: &str, line: usize) -> Result<F> {
    let text = row.get(idx).map(str::trim).unwrap_or("");
    if text.is_empty() {
        return Err(Error::Data {
            line,
            reason: format!("missing value in column `{name}`"),
        });
    }
    let v: f64 = text.parse().map_err(|_| Error::Data {
        line,
        reason: format!("column `{name}`: `{text}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Data {
            line,
            reason: format!("column `{name}`: non-finite value `{text}`"),
        });
    }
    Ok(F::of(v))
}

/// Reads a profile file. Knob cells hold level values, not indices.
pub fn read_profile<F: Scalar, R: Read>(
    reader: R,
    schema: &ProfileSchema,
    space: &KnobSpace<F>,
) -> Result<Dataset<F>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let input_col = column(&headers, &schema.input_column)?;
    let feature_cols = schema
        .feature_columns
        .iter()
        .map(|f| column(&headers, f))
        .collect::<Result<Vec<_>>>()?;
    let knob_cols = space
        .knobs()
        .iter()
        .map(|k| column(&headers, k.name()))
        .collect::<Result<Vec<_>>>()?;
    let distance_col = column(&headers, &schema.distance_column)?;
    let cost_col = column(&headers, &schema.cost_column)?;
    let error_col = column(&headers, &schema.error_column).ok();
    let weight_col = match &schema.weight_column {
        Some(w) => Some(column(&headers, w)?),
        None => None,
    };

    let mut ds = Dataset::new(space.clone(), schema.feature_columns.clone());
    let mut saw_error = false;
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Data {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let input_id = row.get(input_col).unwrap_or("").trim().to_string();
        if input_id.is_empty() {
            return Err(Error::Data {
                line,
                reason: format!("missing value in column `{}`", schema.input_column),
            });
        }
        let features = feature_cols
            .iter()
            .zip(&schema.feature_columns)
            .map(|(&c, name)| cell(&row, c, name, line))
            .collect::<Result<Vec<F>>>()?;
        let values = knob_cols
            .iter()
            .zip(space.knobs())
            .map(|(&c, k)| cell(&row, c, k.name(), line))
            .collect::<Result<Vec<F>>>()?;
        let setting = space.setting_from_values(&values).map_err(|e| Error::Data {
            line,
            reason: e.to_string(),
        })?;
        let mut record = RunRecord::new(
            input_id.clone(),
            InputFeatures(features),
            setting,
            cell(&row, distance_col, &schema.distance_column, line)?,
            cell(&row, cost_col, &schema.cost_column, line)?,
        );
        if let Some(c) = error_col {
            record.error = Some(cell(&row, c, &schema.error_column, line)?);
            saw_error = true;
        }
        ds.push(record).map_err(|e| Error::Data {
            line,
            reason: e.to_string(),
        })?;
        if let (Some(c), Some(name)) = (weight_col, &schema.weight_column) {
            ds.set_weight(&input_id, cell(&row, c, name, line)?)?;
        }
    }
    if saw_error {
        ds.normalized = true;
    }
    Ok(ds)
}

/// Writes records in canonical `(input, setting)` order.
pub fn write_profile<F: Scalar, W: Write>(
    writer: W,
    ds: &Dataset<F>,
    schema: &ProfileSchema,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let with_error = ds.is_normalized();
    let weight_name = schema
        .weight_column
        .clone()
        .or_else(|| ds.has_custom_weights().then(|| "weight".to_string()));
    let mut header = vec![schema.input_column.clone()];
    header.extend(ds.feature_names().iter().cloned());
    header.extend(ds.space().knobs().iter().map(|k| k.name().to_string()));
    header.push(schema.distance_column.clone());
    header.push(schema.cost_column.clone());
    if with_error {
        header.push(schema.error_column.clone());
    }
    if let Some(name) = &weight_name {
        header.push(name.clone());
    }
    let csv_err = |e: csv::Error| Error::Data {
        line: 0,
        reason: e.to_string(),
    };
    w.write_record(&header).map_err(csv_err)?;
    for r in ds.records() {
        let mut row = vec![r.input_id.clone()];
        row.extend(r.features.0.iter().map(|v| v.to_string()));
        row.extend(ds.space().values(&r.setting).iter().map(|v| v.to_string()));
        row.push(r.distance.to_string());
        row.push(r.cost.to_string());
        if with_error {
            row.push(r.error.unwrap_or_else(F::zero).to_string());
        }
        if weight_name.is_some() {
            row.push(ds.weight(&r.input_id).to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<profile>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Knob, KnobSetting};

    fn space() -> KnobSpace<f64> {
        KnobSpace::new(vec![
            Knob::new("iter1", vec![1.0, 2.0], 1).unwrap(),
            Knob::new("iter2", vec![10.0, 20.0], 1).unwrap(),
        ])
        .unwrap()
    }

    fn schema() -> ProfileSchema {
        ProfileSchema {
            feature_columns: vec!["nodes".into()],
            ..ProfileSchema::default()
        }
    }

    #[test]
    fn reads_values_and_maps_to_levels() {
        let text = "input_id,nodes,iter1,iter2,distance,cost\n\
                    g1,100,2,10,0.5,3.25\n\
                    g1,100,1,20,1.5,2\n";
        let ds = read_profile(text.as_bytes(), &schema(), &space()).unwrap();
        assert_eq!(ds.len(), 2);
        let r = ds.record("g1", &KnobSetting(vec![1, 0])).unwrap();
        assert_eq!(r.cost, 3.25);
        assert_eq!(r.features.0, vec![100.0]);
        assert!(!ds.is_normalized());
    }

    #[test]
    fn missing_and_nan_cells_report_line() {
        let text = "input_id,nodes,iter1,iter2,distance,cost\n\
                    g1,100,2,10,0.5,3\n\
                    g1,100,1,20,,2\n";
        match read_profile(text.as_bytes(), &schema(), &space()) {
            Err(Error::Data { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected data error, got {other:?}"),
        }
        let text = "input_id,nodes,iter1,iter2,distance,cost\ng1,NaN,2,10,0.5,3\n";
        match read_profile(text.as_bytes(), &schema(), &space()) {
            Err(Error::Data { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("nodes"));
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_level_value_is_an_error() {
        let text = "input_id,nodes,iter1,iter2,distance,cost\ng1,1,3,10,0.5,3\n";
        assert!(matches!(
            read_profile(text.as_bytes(), &schema(), &space()),
            Err(Error::Data { line: 2, .. })
        ));
    }

    #[test]
    fn missing_column_is_an_error() {
        let text = "input_id,iter1,iter2,distance,cost\ng1,2,10,0.5,3\n";
        assert!(read_profile(text.as_bytes(), &schema(), &space()).is_err());
    }

    #[test]
    fn normalized_round_trip() {
        let text = "input_id,nodes,iter1,iter2,distance,cost\n\
                    g1,100,2,10,0.5,3.25\n\
                    g1,100,1,20,1.5,2\n\
                    g2,7,1,20,4,2\n\
                    g2,7,2,20,1,9\n";
        let ds = read_profile(text.as_bytes(), &schema(), &space())
            .unwrap()
            .normalize_errors();
        let mut buf = Vec::new();
        write_profile(&mut buf, &ds, &schema()).unwrap();
        let back = read_profile(buf.as_slice(), &schema(), &space()).unwrap();
        assert!(back.is_normalized());
        assert_eq!(back.records().collect::<Vec<_>>(), ds.records().collect::<Vec<_>>());
    }
}
