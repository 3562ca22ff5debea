//! Number formatting and writers shared by the subcommands.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::Failure;

/// Shortest form of `x` rounded to 12 significant digits. Magnitudes below
/// `1e-5` use exponent notation; `-inf` and `inf` are spelled out.
pub fn num(x: f64) -> String {
    if x.is_infinite() {
        return if x < 0.0 { "-inf".into() } else { "inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".into()
    } else if rounded.abs() < 1e-5 {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

/// JSON has no infinities, so `-inf` becomes the string `"-inf"`.
pub fn value_json(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::json!(num(x))
    }
}

/// Destination for a command's main output: a file, or stdout.
pub struct Emit<'a> {
    path: Option<&'a Path>,
}

impl<'a> Emit<'a> {
    pub fn new(path: Option<&'a Path>) -> Emit<'a> {
        Emit { path }
    }

    fn write(&self, bytes: &[u8]) -> Result<(), Failure> {
        let res = match self.path {
            Some(p) => fs::write(p, bytes),
            None => io::stdout().lock().write_all(bytes),
        };
        res.map_err(|e| Failure::output(format!("cannot write output: {e}")))
    }

    pub fn text(&self, text: &str) -> Result<(), Failure> {
        self.write(text.as_bytes())
    }

    pub fn json<T: Serialize>(&self, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Failure::output(format!("cannot serialize output: {e}")))?;
        text.push('\n');
        self.write(text.as_bytes())
    }

    pub fn csv(&self, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let fail = |e: csv::Error| Failure::output(format!("cannot format csv: {e}"));
        w.write_record(header).map_err(fail)?;
        for row in rows {
            w.write_record(row).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::output(format!("cannot format csv: {e}")))?;
        self.write(&bytes)
    }
}
