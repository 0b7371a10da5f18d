use photostat::io::fmt_f64;
use serde_json::{Map, Number, Value};

#[derive(Clone, Debug)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Rectangular result set written as CSV or as a JSON array of records.
#[derive(Clone, Debug)]
pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(v) => v.to_string(),
                    Cell::Float(v) => fmt_f64(*v),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Non-finite floats become `null`.
    pub fn to_json(&self) -> String {
        let records: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (k, c) in self.columns.iter().zip(row) {
                    let v = match c {
                        Cell::Int(v) => Value::from(*v),
                        Cell::Float(v) => Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
                        Cell::Text(s) => Value::from(s.as_str()),
                    };
                    m.insert((*k).to_owned(), v);
                }
                Value::Object(m)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&records).expect("table serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_layouts() {
        let mut t = Table::new(&["n", "p", "ok"]);
        t.push(vec![1u64.into(), 0.25.into(), true.into()]);
        t.push(vec![2u64.into(), f64::NAN.into(), false.into()]);
        assert_eq!(t.to_csv(), "n,p,ok\n1,2.5000000000000000e-1,true\n2,NaN,false\n");
        let v: Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v[0]["p"], 0.25);
        assert!(v[1]["p"].is_null());
    }
}
