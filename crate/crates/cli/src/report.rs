//! Report files: JSON objects with sorted keys or CSV rows, with byte
//! output that depends only on the reported values.

use serde_json::{Map, Value};

#[derive(Debug, Clone)]
pub struct Grid {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Report {
    fields: Map<String, Value>,
    grid: Option<Grid>,
}

fn float_value(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

impl Report {
    pub fn new(target: &str, provenance: &str) -> Self {
        let mut fields = Map::new();
        fields.insert("target".into(), Value::String(target.into()));
        fields.insert("provenance".into(), Value::String(provenance.into()));
        Report { fields, grid: None }
    }

    pub fn set_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.fields.insert(key.into(), float_value(value));
        self
    }

    pub fn set_u64(&mut self, key: &str, value: u64) -> &mut Self {
        self.fields.insert(key.into(), Value::from(value));
        self
    }

    pub fn set_bool(&mut self, key: &str, value: bool) -> &mut Self {
        self.fields.insert(key.into(), Value::Bool(value));
        self
    }

    pub fn set_str(&mut self, key: &str, value: &str) -> &mut Self {
        self.fields.insert(key.into(), Value::String(value.into()));
        self
    }

    pub fn set_null(&mut self, key: &str) -> &mut Self {
        self.fields.insert(key.into(), Value::Null);
        self
    }

    pub fn set_grid(&mut self, columns: &[&str], rows: Vec<Vec<f64>>) -> &mut Self {
        self.grid = Some(Grid {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        });
        self
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.fields.get(key).and_then(Value::as_f64)
    }

    pub fn to_json(&self) -> String {
        let mut whole = self.fields.clone();
        if let Some(grid) = &self.grid {
            let rows: Vec<Value> = grid
                .rows
                .iter()
                .map(|row| {
                    let mut obj = Map::new();
                    for (col, v) in grid.columns.iter().zip(row) {
                        obj.insert(col.clone(), float_value(*v));
                    }
                    Value::Object(obj)
                })
                .collect();
            whole.insert("grid".into(), Value::Array(rows));
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(whole))
            .expect("report values are always serializable");
        text.push('\n');
        text
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(grid) = &self.grid {
            out.push_str(&grid.columns.join(","));
            out.push('\n');
            for row in &grid.rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        } else {
            out.push_str("key,value\n");
            for (key, value) in &self.fields {
                let cell = match value {
                    Value::Null => String::new(),
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                out.push_str(&format!("{key},{cell}\n"));
            }
        }
        out
    }
}
