use std::fmt::Display;
use std::io::Write;

use prodreid_core::service::ServiceError;
use prodreid_core::{EvalError, FeatureError, ImagingError, IndexError, PlaneError, ReidError};
use serde_json::{json, Value};

use crate::Format;

/// Error printed as `{"error": kind, "message": ...}` on standard error.
#[derive(Debug)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &str, message: impl Display) -> Self {
        Self {
            kind: kind.to_owned(),
            message: message.to_string(),
        }
    }

    pub fn report(&self) {
        eprintln!("{}", json!({ "error": self.kind, "message": self.message }));
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::new(e.kind(), &e)
            }
        }
    )*};
}

failure_from!(EvalError, FeatureError, ImagingError, IndexError, PlaneError, ReidError, ServiceError);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("IoFailure", e)
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn csv_row<'a>(cells: impl IntoIterator<Item = &'a str>) -> String {
    cells.into_iter().map(csv_field).collect::<Vec<_>>().join(",")
}

/// Writes to standard output; a closed pipe is not an error.
pub fn out(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush());
}

/// Prints `value` on standard output. In CSV mode an object with a `hits`
/// array becomes one row per hit; any other object becomes a header row and
/// a value row.
pub fn emit(value: &Value, format: Format) {
    match format {
        Format::Json => out(&format!("{value}\n")),
        Format::Csv => {
            let Some(obj) = value.as_object() else {
                out(&format!("{}\n", cell(value)));
                return;
            };
            if let Some(hits) = obj.get("hits").and_then(Value::as_array) {
                out("rank,id,label,distance\n");
                for (rank, h) in hits.iter().enumerate() {
                    let r = (rank + 1).to_string();
                    let cells = [r, cell(&h["id"]), cell(&h["label"]), cell(&h["distance"])];
                    out(&format!("{}\n", csv_row(cells.iter().map(String::as_str))));
                }
                return;
            }
            out(&format!("{}\n", csv_row(obj.keys().map(String::as_str))));
            let values: Vec<String> = obj.values().map(cell).collect();
            out(&format!("{}\n", csv_row(values.iter().map(String::as_str))));
        }
    }
}
