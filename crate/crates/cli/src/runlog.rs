//! JSON-lines run log. Each line is one event object with `event` and
//! `elapsed_s` keys. Timings make the log non-reproducible, so it is kept
//! apart from the dataset payload.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{Map, Value};

use crate::error::CliError;

pub struct RunLog {
    out: Option<(PathBuf, BufWriter<File>)>,
    start: Instant,
    error: Option<std::io::Error>,
}

impl RunLog {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let f = File::create(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        Ok(Self {
            out: Some((path.to_path_buf(), BufWriter::new(f))),
            start: Instant::now(),
            error: None,
        })
    }

    /// A log that records nothing.
    pub fn disabled() -> Self {
        Self {
            out: None,
            start: Instant::now(),
            error: None,
        }
    }

    pub fn elapsed_s(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Appends one event. `fields` must be a JSON object or null. Write
    /// errors are held until [`RunLog::finish`].
    pub fn event(&mut self, name: &str, fields: Value) {
        let elapsed = self.elapsed_s();
        let Some((_, w)) = self.out.as_mut() else {
            return;
        };
        let mut obj = Map::new();
        obj.insert("event".into(), Value::from(name));
        obj.insert("elapsed_s".into(), Value::from(elapsed));
        if let Value::Object(extra) = fields {
            obj.extend(extra);
        }
        let line = serde_json::to_string(&Value::Object(obj)).expect("log event serializes");
        if let Err(e) = writeln!(w, "{line}") {
            self.error.get_or_insert(e);
        }
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        if let Some((path, mut w)) = self.out.take() {
            if let Some(e) = self.error.take() {
                return Err(CliError::io(path.display().to_string(), e));
            }
            w.flush()
                .map_err(|e| CliError::io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}
