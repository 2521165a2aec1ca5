//! Flat result tables with a commented header block, written as CSV or
//! JSON. Numeric cells round-trip through 17 significant digits.

use std::io::Write;

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub command: String,
    /// Resolved configuration, one key per line, in insertion order.
    pub config: Vec<(String, String)>,
    /// Grid values skipped before evaluation.
    pub excluded_gamma: Vec<f64>,
    /// Scalar results that do not fit the row grid, e.g. tuned penalties.
    pub summary: Vec<(String, f64)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(command: &str, columns: Vec<&'static str>) -> Self {
        Table {
            command: command.to_string(),
            config: Vec::new(),
            excluded_gamma: Vec::new(),
            summary: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    pub fn summary(&mut self, key: &str, value: f64) {
        self.summary.push((key.to_string(), value));
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Fraction of evaluated rows (excluded rows do not count) whose
    /// status column reads `ok` or `warn`.
    pub fn ok_fraction(&self) -> f64 {
        let status = self.columns.iter().position(|c| *c == "status");
        let Some(j) = status else { return 1.0 };
        let mut evaluated = 0usize;
        let mut good = 0usize;
        for row in &self.rows {
            if let Cell::Text(s) = &row[j] {
                if s == "excluded" {
                    continue;
                }
                evaluated += 1;
                if s == "ok" || s == "warn" {
                    good += 1;
                }
            }
        }
        if evaluated == 0 {
            1.0
        } else {
            good as f64 / evaluated as f64
        }
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "# rrl {}", self.command)?;
        for (k, v) in &self.config {
            writeln!(out, "# {k} = {v}")?;
        }
        if !self.excluded_gamma.is_empty() {
            let list: Vec<String> =
                self.excluded_gamma.iter().map(|g| format!("{g}")).collect();
            writeln!(out, "# excluded_gamma = {}", list.join(","))?;
        }
        for (k, v) in &self.summary {
            writeln!(out, "# {k} = {v:.16e}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let mut fields = Vec::with_capacity(row.len());
            for cell in row {
                fields.push(match cell {
                    Cell::Num(v) => format!("{v:.16e}"),
                    Cell::Int(v) => v.to_string(),
                    Cell::Text(s) => s.clone(),
                    Cell::Empty => String::new(),
                });
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn write_json(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let config: serde_json::Map<String, serde_json::Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: serde_json::Map<String, serde_json::Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(col, cell)| {
                        let v = match cell {
                            Cell::Num(v) => serde_json::json!(v),
                            Cell::Int(v) => serde_json::json!(v),
                            Cell::Text(s) => serde_json::json!(s),
                            Cell::Empty => serde_json::Value::Null,
                        };
                        (col.to_string(), v)
                    })
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect();
        let summary: serde_json::Map<String, serde_json::Value> = self
            .summary
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::json!(v)))
            .collect();
        let doc = serde_json::json!({
            "command": self.command,
            "config": config,
            "excluded_gamma": self.excluded_gamma,
            "summary": summary,
            "rows": rows,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)
    }
}
