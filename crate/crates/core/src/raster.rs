//! ASCII grid rasters: a `ncols`/`nrows`/`cellsize`/`nodata_value` header
//! followed by `nrows` whitespace-separated rows, top row first.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("header is missing `{0}`")]
    MissingHeader(&'static str),
    #[error("expected {expected} values, found {found}")]
    CellCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid<T> {
    pub ncols: usize,
    pub nrows: usize,
    pub cellsize: T,
    pub nodata_value: T,
    /// Row-major, row 0 at the top.
    pub values: Vec<T>,
}

/// How cell values are rendered when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueFormat {
    /// Shortest representation that parses back to the same value.
    RoundTrip,
    /// Fixed number of decimal places.
    Fixed(usize),
}

impl<T: Scalar> AsciiGrid<T> {
    pub fn new(ncols: usize, nrows: usize, cellsize: T, values: Vec<T>) -> Self {
        assert_eq!(values.len(), ncols * nrows);
        Self { ncols, nrows, cellsize, nodata_value: T::of(-9999.0), values }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.ncols + col]
    }

    pub fn read_path(path: &Path) -> Result<Self, RasterError> {
        let io = |source| RasterError::Io { path: path.display().to_string(), source };
        let file = File::open(path).map_err(io)?;
        Self::read(BufReader::new(file))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, RasterError> {
        let mut ncols = None;
        let mut nrows = None;
        let mut cellsize = None;
        let mut nodata = None;
        let mut values = Vec::new();
        let mut in_header = true;

        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| RasterError::Io { path: "<stream>".into(), source })?;
            let line_no = idx + 1;
            let mut tokens = line.split_whitespace().peekable();
            let Some(&first) = tokens.peek() else { continue };
            if in_header && first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let key = first.to_ascii_lowercase();
                tokens.next();
                let value = tokens.next().ok_or_else(|| RasterError::Parse {
                    line: line_no,
                    message: format!("header `{key}` has no value"),
                })?;
                let bad = || RasterError::Parse {
                    line: line_no,
                    message: format!("header `{key}` has invalid value `{value}`"),
                };
                match key.as_str() {
                    "ncols" => ncols = Some(value.parse::<usize>().map_err(|_| bad())?),
                    "nrows" => nrows = Some(value.parse::<usize>().map_err(|_| bad())?),
                    "cellsize" => cellsize = Some(value.parse::<T>().map_err(|_| bad())?),
                    "nodata_value" => nodata = Some(value.parse::<T>().map_err(|_| bad())?),
                    // georeferencing is carried by some writers; it has no role here
                    "xllcorner" | "yllcorner" | "xllcenter" | "yllcenter" => {}
                    _ => {
                        return Err(RasterError::Parse {
                            line: line_no,
                            message: format!("unknown header key `{first}`"),
                        })
                    }
                }
                continue;
            }
            in_header = false;
            for token in tokens {
                let v = token.parse::<T>().map_err(|_| RasterError::Parse {
                    line: line_no,
                    message: format!("`{token}` is not a number"),
                })?;
                values.push(v);
            }
        }

        let ncols = ncols.ok_or(RasterError::MissingHeader("ncols"))?;
        let nrows = nrows.ok_or(RasterError::MissingHeader("nrows"))?;
        let cellsize = cellsize.ok_or(RasterError::MissingHeader("cellsize"))?;
        let nodata_value = nodata.unwrap_or(T::of(-9999.0));
        if values.len() != ncols * nrows {
            return Err(RasterError::CellCount { expected: ncols * nrows, found: values.len() });
        }
        Ok(Self { ncols, nrows, cellsize, nodata_value, values })
    }

    pub fn write_path(&self, path: &Path, format: ValueFormat) -> Result<(), RasterError> {
        let io = |source| RasterError::Io { path: path.display().to_string(), source };
        let file = File::create(path).map_err(io)?;
        let mut writer = BufWriter::new(file);
        self.write(&mut writer, format).map_err(io)?;
        writer.flush().map_err(io)
    }

    pub fn write<W: Write>(&self, writer: &mut W, format: ValueFormat) -> std::io::Result<()> {
        writeln!(writer, "ncols {}", self.ncols)?;
        writeln!(writer, "nrows {}", self.nrows)?;
        writeln!(writer, "cellsize {}", self.cellsize)?;
        writeln!(writer, "nodata_value {}", self.nodata_value)?;
        let mut line = String::new();
        for row in self.values.chunks(self.ncols) {
            line.clear();
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                match format {
                    ValueFormat::RoundTrip => line.push_str(&v.to_string()),
                    ValueFormat::Fixed(places) => line.push_str(&format!("{:.*}", places, v)),
                }
            }
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }
}
