//! Schemas and columnar, memory-resident table storage.
//!
//! Every value has a fixed byte width and there are no NULLs, so a column is a
//! single contiguous little-endian buffer of `row_count * width` bytes. Column
//! buffers are backed by `u64` words which keeps them 8-byte aligned.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Longest supported `CHAR(n)`.
pub const MAX_CHAR_LEN: u16 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("table `{0}` already exists")]
    DuplicateTable(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Arity { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse `{text}` as {ty}")]
    Unparsable { line: usize, text: String, ty: DataType },
    #[error("line {line}: value of {len} bytes overflows {ty}")]
    CharOverflow { line: usize, len: usize, ty: DataType },
    #[error("generator has {found} column distributions, schema has {expected} columns")]
    GenSpecMismatch { expected: usize, found: usize },
    #[error("invalid generator: {0}")]
    InvalidGenSpec(String),
    #[error("row has {found} values, schema has {expected} columns")]
    RowArity { expected: usize, found: usize },
    #[error("value {value} does not fit column type {ty}")]
    ValueType { value: String, ty: DataType },
}

/// Column type. All types are fixed width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Int32,
    Int64,
    Float64,
    Bool,
    Char(u16),
}

impl DataType {
    pub fn width(self) -> usize {
        match self {
            DataType::Int32 => 4,
            DataType::Int64 | DataType::Float64 => 8,
            DataType::Bool => 1,
            DataType::Char(n) => n as usize,
        }
    }

    /// Natural alignment used when the type is laid out inside a tuple.
    pub fn align(self) -> usize {
        match self {
            DataType::Char(_) => 1,
            other => other.width(),
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int32 | DataType::Int64 | DataType::Float64)
    }

    pub fn is_integer(self) -> bool {
        matches!(self, DataType::Int32 | DataType::Int64)
    }

    pub fn is_char(self) -> bool {
        matches!(self, DataType::Char(_))
    }

    fn validate(self) -> Result<(), CatalogError> {
        match self {
            DataType::Char(n) if n == 0 || n > MAX_CHAR_LEN => Err(CatalogError::InvalidSchema(
                format!("CHAR length {n} outside 1..={MAX_CHAR_LEN}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Int32 => f.write_str("INT32"),
            DataType::Int64 => f.write_str("INT64"),
            DataType::Float64 => f.write_str("FLOAT64"),
            DataType::Bool => f.write_str("BOOL"),
            DataType::Char(n) => write!(f, "CHAR({n})"),
        }
    }
}

impl std::str::FromStr for DataType {
    type Err = String;

    /// Parses the `Display` spelling, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let u = s.trim().to_ascii_uppercase();
        match u.as_str() {
            "INT32" => Ok(DataType::Int32),
            "INT64" => Ok(DataType::Int64),
            "FLOAT64" => Ok(DataType::Float64),
            "BOOL" => Ok(DataType::Bool),
            _ => u
                .strip_prefix("CHAR(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|n| n.trim().parse::<u16>().ok())
                .filter(|&n| n > 0)
                .map(DataType::Char)
                .ok_or_else(|| format!("unknown type `{s}`")),
        }
    }
}

/// A single scalar value. `Char` always holds exactly `n` bytes, zero padded.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int32(i32),
    Int64(i64),
    Float64(f64),
    Bool(bool),
    Char(Box<[u8]>),
}

impl Value {
    pub fn data_type(&self) -> DataType {
        match self {
            Value::Int32(_) => DataType::Int32,
            Value::Int64(_) => DataType::Int64,
            Value::Float64(_) => DataType::Float64,
            Value::Bool(_) => DataType::Bool,
            Value::Char(b) => DataType::Char(b.len() as u16),
        }
    }

    /// Builds a `CHAR(n)` value from `text`, zero padding to `n` bytes.
    pub fn char_padded(text: &[u8], n: u16) -> Option<Value> {
        if text.len() > n as usize {
            return None;
        }
        let mut bytes = vec![0u8; n as usize];
        bytes[..text.len()].copy_from_slice(text);
        Some(Value::Char(bytes.into_boxed_slice()))
    }

    /// Little-endian fixed-width encoding, as stored in column buffers.
    pub fn write_bytes(&self, out: &mut [u8]) {
        match self {
            Value::Int32(v) => out.copy_from_slice(&v.to_le_bytes()),
            Value::Int64(v) => out.copy_from_slice(&v.to_le_bytes()),
            Value::Float64(v) => out.copy_from_slice(&v.to_le_bytes()),
            Value::Bool(v) => out[0] = *v as u8,
            Value::Char(b) => out.copy_from_slice(b),
        }
    }

    pub fn read_bytes(ty: DataType, bytes: &[u8]) -> Value {
        match ty {
            DataType::Int32 => Value::Int32(i32::from_le_bytes(bytes[..4].try_into().unwrap())),
            DataType::Int64 => Value::Int64(i64::from_le_bytes(bytes[..8].try_into().unwrap())),
            DataType::Float64 => {
                Value::Float64(f64::from_le_bytes(bytes[..8].try_into().unwrap()))
            }
            DataType::Bool => Value::Bool(bytes[0] != 0),
            DataType::Char(n) => Value::Char(bytes[..n as usize].into()),
        }
    }

    /// The zero value of a type (empty string for `CHAR`).
    pub fn zero(ty: DataType) -> Value {
        match ty {
            DataType::Int32 => Value::Int32(0),
            DataType::Int64 => Value::Int64(0),
            DataType::Float64 => Value::Float64(0.0),
            DataType::Bool => Value::Bool(false),
            DataType::Char(n) => Value::Char(vec![0; n as usize].into_boxed_slice()),
        }
    }

    /// Text form used by CSV output. Floats use the shortest round-trip form.
    pub fn to_text(&self) -> String {
        match self {
            Value::Int32(v) => v.to_string(),
            Value::Int64(v) => v.to_string(),
            Value::Float64(v) => format!("{v:?}"),
            Value::Bool(v) => v.to_string(),
            Value::Char(b) => {
                let end = b.iter().rposition(|&c| c != 0).map_or(0, |p| p + 1);
                String::from_utf8_lossy(&b[..end]).into_owned()
            }
        }
    }

    pub fn parse(text: &str, ty: DataType) -> Option<Value> {
        match ty {
            DataType::Int32 => text.parse().ok().map(Value::Int32),
            DataType::Int64 => text.parse().ok().map(Value::Int64),
            DataType::Float64 => text
                .parse::<f64>()
                .ok()
                .filter(|v| !v.is_nan())
                .map(Value::Float64),
            DataType::Bool => match text {
                "true" | "TRUE" | "1" => Some(Value::Bool(true)),
                "false" | "FALSE" | "0" => Some(Value::Bool(false)),
                _ => None,
            },
            DataType::Char(n) => Value::char_padded(text.as_bytes(), n),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Char(_) => write!(f, "'{}'", self.to_text()),
            _ => f.write_str(&self.to_text()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnDef {
    pub name: String,
    pub ty: DataType,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, ty: DataType) -> Self {
        ColumnDef { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableSchema {
    /// Creates a schema, checking that names are identifiers, column names
    /// are unique and there is at least one column.
    pub fn new(name: impl Into<String>, columns: Vec<ColumnDef>) -> Result<Self, CatalogError> {
        let schema = TableSchema { name: name.into(), columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        if !is_identifier(&self.name) {
            return Err(CatalogError::InvalidSchema(format!("bad table name `{}`", self.name)));
        }
        if self.columns.is_empty() {
            return Err(CatalogError::InvalidSchema(format!("table `{}` has no columns", self.name)));
        }
        for (i, col) in self.columns.iter().enumerate() {
            if !is_identifier(&col.name) {
                return Err(CatalogError::InvalidSchema(format!("bad column name `{}`", col.name)));
            }
            col.ty.validate()?;
            if self.columns[..i].iter().any(|c| c.name == col.name) {
                return Err(CatalogError::InvalidSchema(format!(
                    "duplicate column `{}` in `{}`",
                    col.name, self.name
                )));
            }
        }
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn row_width(&self) -> usize {
        self.columns.iter().map(|c| c.ty.width()).sum()
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// One column's values, stored in an 8-byte aligned buffer.
#[derive(Clone, PartialEq)]
pub struct ColumnData {
    words: Vec<u64>,
    len: usize,
}

impl ColumnData {
    fn new() -> Self {
        ColumnData { words: Vec::new(), len: 0 }
    }

    fn with_len(len: usize) -> Self {
        ColumnData { words: vec![0; len.div_ceil(8)], len }
    }

    pub fn bytes(&self) -> &[u8] {
        // SAFETY: u64 storage reinterpreted as bytes; len <= 8 * words.len().
        unsafe { std::slice::from_raw_parts(self.words.as_ptr().cast::<u8>(), self.len) }
    }

    fn bytes_mut(&mut self) -> &mut [u8] {
        // SAFETY: as above, with unique access.
        unsafe { std::slice::from_raw_parts_mut(self.words.as_mut_ptr().cast::<u8>(), self.len) }
    }

    fn grow(&mut self, extra: usize) -> &mut [u8] {
        let old = self.len;
        self.len += extra;
        self.words.resize(self.len.div_ceil(8), 0);
        &mut self.bytes_mut()[old..]
    }
}

impl fmt::Debug for ColumnData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ColumnData({} bytes)", self.len)
    }
}

/// A columnar table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: TableSchema,
    row_count: usize,
    columns: Vec<ColumnData>,
}

impl Table {
    pub fn new(schema: TableSchema) -> Self {
        let columns = schema.columns.iter().map(|_| ColumnData::new()).collect();
        Table { schema, row_count: 0, columns }
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column_bytes(&self, col: usize) -> &[u8] {
        self.columns[col].bytes()
    }

    pub fn value(&self, row: usize, col: usize) -> Value {
        let ty = self.schema.columns[col].ty;
        let w = ty.width();
        Value::read_bytes(ty, &self.columns[col].bytes()[row * w..(row + 1) * w])
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        (0..self.columns.len()).map(|c| self.value(row, c)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<Value>> + '_ {
        (0..self.row_count).map(|r| self.row(r))
    }

    /// Appends a row. Values must match the column types exactly, except
    /// that shorter `CHAR` values are zero padded.
    pub fn push_row(&mut self, values: &[Value]) -> Result<(), CatalogError> {
        if values.len() != self.columns.len() {
            return Err(CatalogError::RowArity { expected: self.columns.len(), found: values.len() });
        }
        let mut coerced = Vec::with_capacity(values.len());
        for (value, col) in values.iter().zip(&self.schema.columns) {
            let v = match (value, col.ty) {
                (Value::Char(b), DataType::Char(n)) => Value::char_padded(trim_zeros(b), n),
                (v, ty) if v.data_type() == ty => Some(v.clone()),
                _ => None,
            };
            coerced.push(v.ok_or_else(|| CatalogError::ValueType {
                value: value.to_string(),
                ty: col.ty,
            })?);
        }
        for ((value, col), data) in coerced.iter().zip(&self.schema.columns).zip(&mut self.columns) {
            value.write_bytes(data.grow(col.ty.width()));
        }
        self.row_count += 1;
        Ok(())
    }

    /// Renders the table as CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.schema.columns.iter().map(|c| c.name.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(Value::to_text).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Appends CSV rows. Returns the number of rows appended. Errors carry
    /// 1-based line numbers; on error no rows are appended.
    pub fn ingest_csv(&mut self, text: &str, header: bool) -> Result<usize, CatalogError> {
        let mut staged = Table::new(self.schema.clone());
        for (idx, line) in text.split('\n').enumerate() {
            let line_no = idx + 1;
            let line = line.strip_suffix('\r').unwrap_or(line);
            if (header && idx == 0) || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != self.schema.columns.len() {
                return Err(CatalogError::Arity {
                    line: line_no,
                    expected: self.schema.columns.len(),
                    found: fields.len(),
                });
            }
            let mut row = Vec::with_capacity(fields.len());
            for (field, col) in fields.iter().zip(&self.schema.columns) {
                let field = field.trim();
                if let DataType::Char(n) = col.ty {
                    if field.len() > n as usize {
                        return Err(CatalogError::CharOverflow { line: line_no, len: field.len(), ty: col.ty });
                    }
                }
                row.push(Value::parse(field, col.ty).ok_or_else(|| CatalogError::Unparsable {
                    line: line_no,
                    text: field.to_string(),
                    ty: col.ty,
                })?);
            }
            staged.push_row(&row)?;
        }
        let added = staged.row_count;
        for (dst, src) in self.columns.iter_mut().zip(&staged.columns) {
            dst.grow(src.len).copy_from_slice(src.bytes());
        }
        self.row_count += added;
        Ok(added)
    }
}

fn trim_zeros(b: &[u8]) -> &[u8] {
    let end = b.iter().rposition(|&c| c != 0).map_or(0, |p| p + 1);
    &b[..end]
}

/// Per-column value distribution for synthetic data.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// Integers drawn uniformly from `lo..=hi`. BOOL columns take `v != 0`,
    /// FLOAT64 columns the integer as a float, CHAR columns its decimal text.
    UniformInt { lo: i64, hi: i64 },
    /// Floats drawn uniformly from `[0, 1)`.
    UniformFloat01,
    /// The row index.
    Sequential,
    Const(Value),
}

/// Recipe for a synthetic table.
///
/// Each column draws from its own ChaCha8 stream: the generator is seeded
/// with `seed` and the stream number is the column index, so columns are
/// pairwise independent and a fixed `(schema, spec)` always yields the same
/// bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub rows: usize,
    pub columns: Vec<Distribution>,
    pub seed: u64,
}

pub fn generate(schema: &TableSchema, spec: &GenSpec) -> Result<Table, CatalogError> {
    schema.validate()?;
    if spec.columns.len() != schema.columns.len() {
        return Err(CatalogError::GenSpecMismatch {
            expected: schema.columns.len(),
            found: spec.columns.len(),
        });
    }
    let mut table = Table::new(schema.clone());
    for (c, (dist, col)) in spec.columns.iter().zip(&schema.columns).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(c as u64);
        let width = col.ty.width();
        let mut data = ColumnData::with_len(spec.rows * width);
        let bytes = data.bytes_mut();
        if let Distribution::UniformInt { lo, hi } = dist {
            if lo > hi {
                return Err(CatalogError::InvalidGenSpec(format!("lo {lo} > hi {hi}")));
            }
        }
        for row in 0..spec.rows {
            let value = match dist {
                Distribution::UniformInt { lo, hi } => int_value(rng.gen_range(*lo..=*hi), col.ty),
                Distribution::UniformFloat01 => match col.ty {
                    DataType::Float64 => Some(Value::Float64(rng.gen::<f64>())),
                    _ => None,
                },
                Distribution::Sequential => int_value(row as i64, col.ty),
                Distribution::Const(v) => match (v, col.ty) {
                    (Value::Char(b), DataType::Char(n)) => Value::char_padded(trim_zeros(b), n),
                    (v, ty) if v.data_type() == ty => Some(v.clone()),
                    _ => None,
                },
            }
            .ok_or_else(|| {
                CatalogError::InvalidGenSpec(format!("{dist:?} cannot produce {}", col.ty))
            })?;
            value.write_bytes(&mut bytes[row * width..(row + 1) * width]);
        }
        table.columns[c] = data;
    }
    table.row_count = spec.rows;
    Ok(table)
}

fn int_value(v: i64, ty: DataType) -> Option<Value> {
    Some(match ty {
        DataType::Int32 => Value::Int32(v as i32),
        DataType::Int64 => Value::Int64(v),
        DataType::Float64 => Value::Float64(v as f64),
        DataType::Bool => Value::Bool(v != 0),
        DataType::Char(n) => {
            let text = v.to_string();
            let cut = text.len().min(n as usize);
            return Value::char_padded(&text.as_bytes()[..cut], n);
        }
    })
}

/// Resolves to a registered table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TableHandle(pub usize);

/// Registry of named tables. Tables are shared behind `Arc` so executors can
/// hold them while the catalog stays usable.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    tables: Vec<Arc<Table>>,
    by_name: HashMap<String, TableHandle>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn define_table(&mut self, schema: TableSchema) -> Result<TableHandle, CatalogError> {
        schema.validate()?;
        self.register(Table::new(schema))
    }

    pub fn generate_table(&mut self, schema: TableSchema, spec: &GenSpec) -> Result<TableHandle, CatalogError> {
        let table = generate(&schema, spec)?;
        self.register(table)
    }

    /// Registers an already built table.
    pub fn register(&mut self, table: Table) -> Result<TableHandle, CatalogError> {
        let name = table.schema.name.clone();
        if self.by_name.contains_key(&name) {
            return Err(CatalogError::DuplicateTable(name));
        }
        let handle = TableHandle(self.tables.len());
        self.tables.push(Arc::new(table));
        self.by_name.insert(name, handle);
        Ok(handle)
    }

    pub fn ingest_csv(&mut self, handle: TableHandle, text: &str, header: bool) -> Result<usize, CatalogError> {
        Arc::make_mut(&mut self.tables[handle.0]).ingest_csv(text, header)
    }

    pub fn table(&self, handle: TableHandle) -> &Table {
        &self.tables[handle.0]
    }

    pub fn shared(&self, handle: TableHandle) -> Arc<Table> {
        Arc::clone(&self.tables[handle.0])
    }

    pub fn handle(&self, name: &str) -> Option<TableHandle> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Result<&Table, CatalogError> {
        self.handle(name)
            .map(|h| self.table(h))
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    pub fn schema(&self, name: &str) -> Result<&TableSchema, CatalogError> {
        self.get(name).map(Table::schema)
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn data_type_spellings_round_trip() {
        for t in [DataType::Int32, DataType::Int64, DataType::Float64, DataType::Bool, DataType::Char(12)] {
            assert_eq!(t.to_string().parse::<DataType>().unwrap(), t);
        }
        assert_eq!("char( 3 )".parse::<DataType>().unwrap(), DataType::Char(3));
        assert!("CHAR(0)".parse::<DataType>().is_err());
        assert!("TEXT".parse::<DataType>().is_err());
    }

    use super::*;

    fn r_schema() -> TableSchema {
        TableSchema::new("R", vec![ColumnDef::new("x", DataType::Int32)]).unwrap()
    }

    #[test]
    fn define_and_redefine() {
        let mut cat = Catalog::new();
        let h = cat.define_table(r_schema()).unwrap();
        assert_eq!(cat.table(h).row_count(), 0);
        assert_eq!(cat.define_table(r_schema()), Err(CatalogError::DuplicateTable("R".into())));
    }

    #[test]
    fn duplicate_column_names_rejected() {
        let err = TableSchema::new(
            "R",
            vec![ColumnDef::new("x", DataType::Int32), ColumnDef::new("x", DataType::Int64)],
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::InvalidSchema(_)));
        assert!(TableSchema::new("R", vec![]).is_err());
        assert!(TableSchema::new("R", vec![ColumnDef::new("c", DataType::Char(0))]).is_err());
    }

    #[test]
    fn csv_ingest() {
        let mut cat = Catalog::new();
        let h = cat.define_table(r_schema()).unwrap();
        assert_eq!(cat.ingest_csv(h, "1\n2\n3\n", false).unwrap(), 3);
        assert_eq!(cat.table(h).value(2, 0), Value::Int32(3));
        assert_eq!(
            cat.ingest_csv(h, "1,2\n", false),
            Err(CatalogError::Arity { line: 1, expected: 1, found: 2 })
        );
        assert_eq!(cat.table(h).row_count(), 3);
        assert!(matches!(
            cat.ingest_csv(h, "x\n4\nfour\n", true),
            Err(CatalogError::Unparsable { line: 3, .. })
        ));
    }

    #[test]
    fn csv_char_overflow() {
        let mut cat = Catalog::new();
        let s = TableSchema::new("S", vec![ColumnDef::new("c", DataType::Char(4))]).unwrap();
        let h = cat.define_table(s).unwrap();
        assert!(matches!(
            cat.ingest_csv(h, "abcdef", false),
            Err(CatalogError::CharOverflow { line: 1, len: 6, .. })
        ));
        cat.ingest_csv(h, "ab\n", false).unwrap();
        assert_eq!(cat.table(h).column_bytes(0), b"ab\0\0");
    }

    #[test]
    fn buffers_are_aligned_and_sized() {
        let schema = TableSchema::new(
            "T",
            vec![
                ColumnDef::new("a", DataType::Int32),
                ColumnDef::new("b", DataType::Bool),
                ColumnDef::new("c", DataType::Char(3)),
                ColumnDef::new("d", DataType::Float64),
            ],
        )
        .unwrap();
        let spec = GenSpec {
            rows: 37,
            columns: vec![
                Distribution::Sequential,
                Distribution::UniformInt { lo: 0, hi: 1 },
                Distribution::UniformInt { lo: 0, hi: 999 },
                Distribution::UniformFloat01,
            ],
            seed: 1,
        };
        let t = generate(&schema, &spec).unwrap();
        let total: usize = (0..4).map(|c| t.column_bytes(c).len()).sum();
        assert_eq!(total, t.row_count() * schema.row_width());
        for c in 0..4 {
            assert_eq!(t.column_bytes(c).as_ptr() as usize % 8, 0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GenSpec { rows: 100, columns: vec![Distribution::UniformInt { lo: 0, hi: 9 }], seed: 7 };
        let a = generate(&r_schema(), &spec).unwrap();
        let b = generate(&r_schema(), &spec).unwrap();
        assert_eq!(a.column_bytes(0), b.column_bytes(0));
        let other = generate(&r_schema(), &GenSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.column_bytes(0), other.column_bytes(0));
    }

    #[test]
    fn float01_range() {
        let schema = TableSchema::new("F", vec![ColumnDef::new("f", DataType::Float64)]).unwrap();
        let spec = GenSpec { rows: 10_000, columns: vec![Distribution::UniformFloat01], seed: 3 };
        let t = generate(&schema, &spec).unwrap();
        for r in 0..t.row_count() {
            let Value::Float64(v) = t.value(r, 0) else { panic!() };
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn uniform_binary_frequencies() {
        // Binomial(10_000, 1/2): sd = 50, so [4500, 5500] is a +/- 10 sd window;
        // the two-sided tail mass outside it is below 1e-22.
        let n = 10_000f64;
        let sd = (n * 0.5 * 0.5).sqrt();
        let (lo, hi) = ((n / 2.0 - 10.0 * sd) as usize, (n / 2.0 + 10.0 * sd) as usize);
        assert_eq!((lo, hi), (4500, 5500));
        for seed in 0..5 {
            let spec = GenSpec { rows: 10_000, columns: vec![Distribution::UniformInt { lo: 0, hi: 1 }], seed };
            let t = generate(&r_schema(), &spec).unwrap();
            let ones = (0..t.row_count()).filter(|&r| t.value(r, 0) == Value::Int32(1)).count();
            assert!((lo..=hi).contains(&ones), "seed {seed}: {ones}");
            assert!((lo..=hi).contains(&(10_000 - ones)));
        }
    }

    #[test]
    fn gen_spec_mismatch() {
        let spec = GenSpec { rows: 1, columns: vec![], seed: 0 };
        assert!(matches!(generate(&r_schema(), &spec), Err(CatalogError::GenSpecMismatch { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let schema = TableSchema::new(
            "T",
            vec![
                ColumnDef::new("a", DataType::Int64),
                ColumnDef::new("f", DataType::Float64),
                ColumnDef::new("c", DataType::Char(5)),
                ColumnDef::new("b", DataType::Bool),
            ],
        )
        .unwrap();
        let spec = GenSpec {
            rows: 50,
            columns: vec![
                Distribution::UniformInt { lo: i64::MIN / 2, hi: i64::MAX / 2 },
                Distribution::UniformFloat01,
                Distribution::UniformInt { lo: 0, hi: 99999 },
                Distribution::UniformInt { lo: 0, hi: 1 },
            ],
            seed: 11,
        };
        let t = generate(&schema, &spec).unwrap();
        let mut back = Table::new(schema);
        back.ingest_csv(&t.to_csv(), true).unwrap();
        assert_eq!(back, t);
    }
}
