//! Report emission: one structured result rendered as JSON (default), CSV,
//! or plain text. All numeric fields carry 12 significant digits; output is
//! byte-deterministic for fixed inputs and seed.

use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

/// Rounds to 12 significant digits, so the JSON rendering of the value is
/// the 12-digit decimal.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap()
}

/// `%.12g`-style rendering: 12 significant digits, decimal where readable,
/// scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{x:.11e}");
    let (_, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("scientific exponent");
    if !(-5..12).contains(&exp) {
        let (mantissa, _) = sci.split_once('e').unwrap();
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}"))
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

/// JSON value for a float: 12 significant digits, infinities as null.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(sig12(x))
    } else {
        Value::Null
    }
}

/// One command result: a JSON object plus tabular and textual projections.
#[derive(Debug, Clone, Default)]
pub struct Report {
    fields: Map<String, Value>,
    csv_header: Vec<String>,
    csv_rows: Vec<Vec<String>>,
    text_lines: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut report = Self::default();
        report.fields.insert("command".into(), Value::from(command));
        report.push_text(format!("command: {command}"));
        report
    }

    pub fn field(&mut self, key: &str, value: Value) -> &mut Self {
        self.push_text(format!("{key}: {}", text_of(&value)));
        self.fields.insert(key.into(), value);
        self
    }

    pub fn number(&mut self, key: &str, value: f64) -> &mut Self {
        self.push_text(format!("{key}: {}", fmt_sig(value)));
        self.fields.insert(key.into(), num(value));
        self
    }

    /// A nested object that shows up in text as indented lines.
    pub fn object(&mut self, key: &str, value: Value) -> &mut Self {
        self.push_text(format!("{key}:"));
        if let Value::Object(map) = &value {
            for (k, v) in map {
                self.push_text(format!("  {k}: {}", text_of(v)));
            }
        }
        self.fields.insert(key.into(), value);
        self
    }

    pub fn table(&mut self, header: &[&str], rows: Vec<Vec<String>>) -> &mut Self {
        self.csv_header = header.iter().map(|s| s.to_string()).collect();
        self.csv_rows = rows;
        self
    }

    fn push_text(&mut self, line: String) {
        self.text_lines.push(line);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let value = Value::Object(self.fields.clone());
                let mut out = serde_json::to_string_pretty(&value).expect("serializable report");
                out.push('\n');
                out
            }
            Format::Text => {
                let mut out = self.text_lines.join("\n");
                out.push('\n');
                out
            }
            Format::Csv => {
                let mut out = String::new();
                if self.csv_header.is_empty() {
                    // Fall back to key,value rows.
                    out.push_str("key,value\n");
                    for (k, v) in &self.fields {
                        out.push_str(&format!("{k},{}\n", csv_escape(&text_of(v))));
                    }
                } else {
                    out.push_str(&self.csv_header.join(","));
                    out.push('\n');
                    for row in &self.csv_rows {
                        let escaped: Vec<String> =
                            row.iter().map(|cell| csv_escape(cell)).collect();
                        out.push_str(&escaped.join(","));
                        out.push('\n');
                    }
                }
                out
            }
        }
    }
}

fn text_of(value: &Value) -> String {
    match value {
        Value::Null => "null".to_string(),
        Value::String(s) => s.clone(),
        Value::Number(n) => n
            .as_f64()
            .map(fmt_sig)
            .unwrap_or_else(|| n.to_string()),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

fn csv_escape(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(0.09), "0.09");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(-0.5), "-0.5");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(1.23456789e-9), "1.23456789e-9");
        assert_eq!(fmt_sig(123456789012345.0), "1.23456789012e14");
    }

    #[test]
    fn sig12_rounds() {
        assert_eq!(sig12(1.0 / 3.0), 0.333333333333);
        assert_eq!(sig12(2.0), 2.0);
    }

    #[test]
    fn report_renders_all_formats() {
        let mut report = Report::new("demo");
        report.number("value", 0.25);
        report.field("flag", Value::from(true));
        let json = report.render(Format::Json);
        assert!(json.contains("\"value\": 0.25"));
        let text = report.render(Format::Text);
        assert!(text.contains("value: 0.25"));
        let csv = report.render(Format::Csv);
        assert!(csv.starts_with("key,value\n"));
    }
}
