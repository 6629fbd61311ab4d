//! Columnar tables of 64-bit values, stored as little-endian binary or CSV.
//!
//! Binary layout: magic `VMNTBL01`, `u64` record count, `u64` column count,
//! then per column `u64` name length, UTF-8 name, `u8` type tag and `u64`
//! width, then each column's `records * width` values in column order.
//! CSV expands a width-`w` column `x` into headers `x[0]..x[w-1]`; floats are
//! written in shortest round-trip form with `.` as the decimal separator.
//! Every record has the same number of fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"VMNTBL01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Binary,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Binary => "bin",
            Format::Csv => "csv",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" => Ok(Format::Binary),
            "csv" => Ok(Format::Csv),
            other => Err(Error::param("format", format!("expected binary or csv, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    U64,
    I64,
    F64,
}

impl ColumnType {
    fn tag(self) -> u8 {
        match self {
            ColumnType::U64 => 1,
            ColumnType::I64 => 2,
            ColumnType::F64 => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(ColumnType::U64),
            2 => Some(ColumnType::I64),
            3 => Some(ColumnType::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub dtype: ColumnType,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    U64(Vec<u64>),
    I64(Vec<i64>),
    F64(Vec<f64>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::U64(v) => v.len(),
            ColumnData::I64(v) => v.len(),
            ColumnData::F64(v) => v.len(),
        }
    }

    fn dtype(&self) -> ColumnType {
        match self {
            ColumnData::U64(_) => ColumnType::U64,
            ColumnData::I64(_) => ColumnType::I64,
            ColumnData::F64(_) => ColumnType::F64,
        }
    }

    fn empty(dtype: ColumnType, capacity: usize) -> Self {
        match dtype {
            ColumnType::U64 => ColumnData::U64(Vec::with_capacity(capacity)),
            ColumnType::I64 => ColumnData::I64(Vec::with_capacity(capacity)),
            ColumnType::F64 => ColumnData::F64(Vec::with_capacity(capacity)),
        }
    }

    fn csv_field(&self, idx: usize) -> String {
        match self {
            ColumnData::U64(v) => v[idx].to_string(),
            ColumnData::I64(v) => v[idx].to_string(),
            ColumnData::F64(v) => format!("{:?}", v[idx]),
        }
    }

    fn push_str(&mut self, s: &str) -> std::result::Result<(), String> {
        match self {
            ColumnData::U64(v) => v.push(s.parse().map_err(|e| format!("{s:?}: {e}"))?),
            ColumnData::I64(v) => v.push(s.parse().map_err(|e| format!("{s:?}: {e}"))?),
            ColumnData::F64(v) => v.push(s.parse().map_err(|e| format!("{s:?}: {e}"))?),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub width: usize,
    pub data: ColumnData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub n_records: usize,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(n_records: usize) -> Self {
        Table {
            n_records,
            columns: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, width: usize, data: ColumnData) -> &mut Self {
        assert_eq!(
            data.len(),
            self.n_records * width,
            "column {name} has {} values for {} records of width {width}",
            data.len(),
            self.n_records
        );
        self.columns.push(Column {
            name: name.to_string(),
            width,
            data,
        });
        self
    }

    pub fn with_u64(mut self, name: &str, width: usize, values: Vec<u64>) -> Self {
        self.push(name, width, ColumnData::U64(values));
        self
    }

    pub fn with_i64(mut self, name: &str, width: usize, values: Vec<i64>) -> Self {
        self.push(name, width, ColumnData::I64(values));
        self
    }

    pub fn with_f64(mut self, name: &str, width: usize, values: Vec<f64>) -> Self {
        self.push(name, width, ColumnData::F64(values));
        self
    }

    pub fn schema(&self) -> Vec<ColumnSpec> {
        self.columns
            .iter()
            .map(|c| ColumnSpec {
                name: c.name.clone(),
                dtype: c.data.dtype(),
                width: c.width,
            })
            .collect()
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Data(format!("missing column {name}")))
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match &self.column(name)?.data {
            ColumnData::U64(v) => Ok(v),
            _ => Err(Error::Data(format!("column {name} is not u64"))),
        }
    }

    pub fn i64s(&self, name: &str) -> Result<&[i64]> {
        match &self.column(name)?.data {
            ColumnData::I64(v) => Ok(v),
            _ => Err(Error::Data(format!("column {name} is not i64"))),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match &self.column(name)?.data {
            ColumnData::F64(v) => Ok(v),
            _ => Err(Error::Data(format!("column {name} is not f64"))),
        }
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let res = match format {
            Format::Binary => self.write_binary(&mut out),
            Format::Csv => self.write_csv(&mut out),
        };
        res.and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
    }

    fn write_binary(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.n_records as u64).to_le_bytes())?;
        out.write_all(&(self.columns.len() as u64).to_le_bytes())?;
        for c in &self.columns {
            out.write_all(&(c.name.len() as u64).to_le_bytes())?;
            out.write_all(c.name.as_bytes())?;
            out.write_all(&[c.data.dtype().tag()])?;
            out.write_all(&(c.width as u64).to_le_bytes())?;
        }
        for c in &self.columns {
            match &c.data {
                ColumnData::U64(v) => v.iter().try_for_each(|x| out.write_all(&x.to_le_bytes()))?,
                ColumnData::I64(v) => v.iter().try_for_each(|x| out.write_all(&x.to_le_bytes()))?,
                ColumnData::F64(v) => v.iter().try_for_each(|x| out.write_all(&x.to_le_bytes()))?,
            }
        }
        Ok(())
    }

    fn write_csv(&self, out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(csv_header(&self.schema()))?;
        let mut fields = Vec::new();
        for rec in 0..self.n_records {
            fields.clear();
            for c in &self.columns {
                for k in rec * c.width..(rec + 1) * c.width {
                    fields.push(c.data.csv_field(k));
                }
            }
            w.write_record(&fields)?;
        }
        w.flush()
    }

    /// Reads a table; CSV needs the expected schema, binary checks it when given.
    pub fn read(path: &Path, format: Format, schema: Option<&[ColumnSpec]>) -> Result<Table> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let table = match format {
            Format::Binary => read_binary(path, BufReader::new(file))?,
            Format::Csv => {
                let schema = schema.ok_or_else(|| Error::format(path, "CSV tables need a schema"))?;
                read_csv(path, BufReader::new(file), schema)?
            }
        };
        if let Some(expected) = schema {
            if table.schema() != expected {
                return Err(Error::format(path, "columns differ from the manifest schema"));
            }
        }
        Ok(table)
    }
}

/// CSV header names for a schema.
pub fn csv_header(schema: &[ColumnSpec]) -> Vec<String> {
    let mut names = Vec::new();
    for c in schema {
        if c.width == 1 {
            names.push(c.name.clone());
        } else {
            names.extend((0..c.width).map(|w| format!("{}[{w}]", c.name)));
        }
    }
    names
}

fn read_u64(path: &Path, r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::format(path, format!("truncated table: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_binary(path: &Path, mut r: impl Read) -> Result<Table> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::format(path, format!("truncated header: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::format(path, "not a table file"));
    }
    let n_records = read_u64(path, &mut r)? as usize;
    let n_columns = read_u64(path, &mut r)? as usize;
    let mut specs = Vec::with_capacity(n_columns);
    for _ in 0..n_columns {
        let len = read_u64(path, &mut r)? as usize;
        if len > 4096 {
            return Err(Error::format(path, "column name too long"));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::format(path, format!("truncated header: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::format(path, "column name is not UTF-8"))?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)
            .map_err(|e| Error::format(path, format!("truncated header: {e}")))?;
        let dtype = ColumnType::from_tag(tag[0]).ok_or_else(|| Error::format(path, format!("bad type tag {}", tag[0])))?;
        let width = read_u64(path, &mut r)? as usize;
        specs.push(ColumnSpec { name, dtype, width });
    }
    let mut table = Table::new(n_records);
    for spec in specs {
        let n = n_records * spec.width;
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)
            .map_err(|e| Error::format(path, format!("truncated column {}: {e}", spec.name)))?;
        let words = raw.chunks_exact(8).map(|b| <[u8; 8]>::try_from(b).unwrap());
        let data = match spec.dtype {
            ColumnType::U64 => ColumnData::U64(words.map(u64::from_le_bytes).collect()),
            ColumnType::I64 => ColumnData::I64(words.map(i64::from_le_bytes).collect()),
            ColumnType::F64 => ColumnData::F64(words.map(f64::from_le_bytes).collect()),
        };
        table.push(&spec.name, spec.width, data);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after the last column"));
    }
    Ok(table)
}

fn read_csv(path: &Path, r: impl Read, schema: &[ColumnSpec]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    if header.iter().ne(csv_header(schema).iter().map(String::as_str)) {
        return Err(Error::format(path, "line 1: header does not match the schema"));
    }
    let mut columns: Vec<ColumnData> = schema.iter().map(|s| ColumnData::empty(s.dtype, 0)).collect();
    let mut n_records = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::format(path, format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut it = record.iter();
        for (spec, col) in schema.iter().zip(columns.iter_mut()) {
            for _ in 0..spec.width {
                let field = it.next().ok_or_else(|| Error::format(path, format!("line {line}: too few fields")))?;
                col.push_str(field)
                    .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
            }
        }
        n_records += 1;
    }
    let mut table = Table::new(n_records);
    for (spec, data) in schema.iter().zip(columns) {
        table.push(&spec.name, spec.width, data);
    }
    Ok(table)
}
