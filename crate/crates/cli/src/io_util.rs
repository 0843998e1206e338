//! Atomic output files and the `index,probability` site format.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// A file written next to its destination and renamed into place on commit.
/// Dropping it uncommitted removes the temporary file.
pub struct AtomicFile {
    path: PathBuf,
    tmp: PathBuf,
    writer: Option<BufWriter<File>>,
}

impl AtomicFile {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, CliError> {
        let path = path.into();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
        let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
        let file = File::create(&tmp).map_err(CliError::io(&tmp))?;
        Ok(Self {
            path,
            tmp,
            writer: Some(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn commit(mut self) -> Result<(), CliError> {
        let writer = self.writer.take().expect("writer present until commit");
        let file = writer.into_inner().map_err(|e| CliError::Io {
            path: self.tmp.clone(),
            source: e.into_error(),
        })?;
        file.sync_all().map_err(CliError::io(&self.tmp))?;
        fs::rename(&self.tmp, &self.path).map_err(CliError::io(&self.path))
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.writer
            .as_mut()
            .expect("writer present until commit")
            .write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.writer
            .as_mut()
            .expect("writer present until commit")
            .flush()
    }
}

impl Drop for AtomicFile {
    fn drop(&mut self) {
        if self.writer.take().is_some() {
            let _ = fs::remove_file(&self.tmp);
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut file = AtomicFile::create(path)?;
    file.write_all(bytes).map_err(CliError::io(path))?;
    file.commit()
}

/// CSV writer over an atomic file with LF line endings.
pub struct CsvSink {
    writer: csv::Writer<AtomicFile>,
    path: PathBuf,
}

impl CsvSink {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, CliError> {
        let path = path.into();
        let file = AtomicFile::create(&path)?;
        let writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file);
        Ok(Self { writer, path })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<(), CliError> {
        self.writer
            .serialize(row)
            .map_err(|e| CliError::data(&self.path, e))
    }

    pub fn write_record<I, T>(&mut self, record: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer
            .write_record(record)
            .map_err(|e| CliError::data(&self.path, e))
    }

    pub fn commit(self) -> Result<(), CliError> {
        let path = self.path;
        let file = self
            .writer
            .into_inner()
            .map_err(|e| CliError::data(&path, e.error()))?;
        file.commit()
    }
}

/// Reads every row of a headed CSV file.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::data(path, e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| CliError::data(path, e)))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbabilityRow {
    index: usize,
    probability: f64,
}

pub fn read_probabilities(path: &Path) -> Result<Vec<f64>, CliError> {
    let rows: Vec<ProbabilityRow> = read_rows(path)?;
    if rows.is_empty() {
        return Err(CliError::data(path, "no rows"));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r.index != i {
                Err(CliError::data(
                    path,
                    format!("row {}: expected index {i}, found {}", i + 1, r.index),
                ))
            } else if !(0.0..=1.0).contains(&r.probability) {
                Err(CliError::data(
                    path,
                    format!(
                        "row {}: probability {} outside [0, 1]",
                        i + 1,
                        r.probability
                    ),
                ))
            } else {
                Ok(r.probability)
            }
        })
        .collect()
}

pub fn write_probabilities(path: &Path, values: &[f64]) -> Result<(), CliError> {
    let mut sink = CsvSink::create(path)?;
    for (index, &probability) in values.iter().enumerate() {
        sink.write(&ProbabilityRow { index, probability })?;
    }
    sink.commit()
}
