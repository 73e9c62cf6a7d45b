//! Linear memory layout for one query.

use std::fmt;

use super::RuntimeError;
use crate::catalog::{Catalog, TableSchema};
use crate::codegen::TupleLayout;
use crate::wasm::PAGE_SIZE;

/// Bytes reserved at address 0. Word 0 holds the number of rows in the
/// result region.
pub const HEADER_BYTES: u64 = 16;

/// Addressable bytes of a 32-bit linear memory.
pub const MAX_MEMORY_BYTES: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentKind {
    Header,
    /// Literal bytes written by the module's data segment.
    Const,
    Column { table: String, column: String },
    Heap,
    SortArray { id: usize },
    Result,
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentKind::Header => write!(f, "HEADER"),
            SegmentKind::Const => write!(f, "CONST"),
            SegmentKind::Column { table, column } => write!(f, "COLUMN({table}.{column})"),
            SegmentKind::Heap => write!(f, "HEAP"),
            SegmentKind::SortArray { id } => write!(f, "SORT_ARRAY({id})"),
            SegmentKind::Result => write!(f, "RESULT"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub offset: u64,
    pub length: u64,
}

impl Segment {
    pub fn end(&self) -> u64 {
        self.offset + self.length
    }
}

/// A table mapped into memory, possibly one window at a time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableMapping {
    pub table: String,
    /// Argument of `rewire_next_chunk` for this table.
    pub id: u32,
    pub total_rows: u64,
    /// Rows resident at once; equals `total_rows` unless chunked.
    pub rows_per_chunk: u64,
    pub chunked: bool,
    /// `(column index in the table schema, segment index)` per mapped column.
    pub columns: Vec<(usize, usize)>,
}

/// Where result rows go and how they are laid out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultRegion {
    pub segment: usize,
    pub capacity_rows: u64,
    pub layout: TupleLayout,
    pub schema: TableSchema,
}

/// What a compiled query needs in memory besides its tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryRequest {
    /// Tables scanned, with the column indices read.
    pub tables: Vec<(String, Vec<usize>)>,
    pub const_bytes: u64,
    pub heap_bytes: u64,
    /// `(sort node id, bytes)`.
    pub sort_arrays: Vec<(usize, u64)>,
    /// Result row layout and schema, when the plan returns rows.
    pub result: Option<(TupleLayout, TableSchema)>,
    pub result_bytes: u64,
    /// Tables larger than this many bytes are mapped one window at a time.
    pub window_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryManifest {
    pub total_pages: u32,
    /// Disjoint, 8-byte aligned, in address order.
    pub segments: Vec<Segment>,
    pub window: Option<u64>,
    /// Imported global names with their values.
    pub globals: Vec<(String, u32)>,
    pub tables: Vec<TableMapping>,
    pub result: Option<ResultRegion>,
}

fn align8(n: u64) -> u64 {
    (n + 7) & !7
}

pub fn column_global(table: &str, column: &str) -> String {
    format!("col_{table}_{column}")
}

pub fn rows_global(table: &str) -> String {
    format!("rows_{table}")
}

impl MemoryManifest {
    pub fn segment(&self, kind: &SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| &s.kind == kind)
    }

    pub fn global(&self, name: &str) -> Option<u32> {
        self.globals.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn table(&self, name: &str) -> Option<&TableMapping> {
        self.tables.iter().find(|t| t.table == name)
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_pages as u64 * PAGE_SIZE as u64
    }
}

/// Lays out memory as header, constants, column segments, heap, sort
/// arrays and result region, in that order.
pub fn plan_memory(req: &MemoryRequest, catalog: &Catalog) -> Result<MemoryManifest, RuntimeError> {
    let mut segments = Vec::new();
    let mut at = 0u64;
    let mut push = |segments: &mut Vec<Segment>, kind, length: u64| {
        let offset = at;
        at = align8(at + length);
        segments.push(Segment { kind, offset, length });
        segments.len() - 1
    };
    push(&mut segments, SegmentKind::Header, HEADER_BYTES);
    push(&mut segments, SegmentKind::Const, req.const_bytes);

    let mut globals = Vec::new();
    let mut tables = Vec::new();
    for (id, (name, cols)) in req.tables.iter().enumerate() {
        let table = catalog.get(name).map_err(|e| RuntimeError::Memory(e.to_string()))?;
        let schema = table.schema();
        let total_rows = table.row_count() as u64;
        let row_width = schema.row_width() as u64;
        let table_bytes = total_rows * row_width;
        let (chunked, rows_per_chunk) = match req.window_bytes {
            Some(w) if table_bytes > w => {
                let rpc = w / row_width.max(1);
                if rpc == 0 {
                    return Err(RuntimeError::Memory(format!(
                        "window of {w} bytes is smaller than one row of {name} ({row_width} bytes)"
                    )));
                }
                (true, rpc)
            }
            _ => (false, total_rows),
        };
        let mut columns = Vec::new();
        for &c in cols {
            let def = &schema.columns[c];
            let seg = push(
                &mut segments,
                SegmentKind::Column { table: name.clone(), column: def.name.clone() },
                rows_per_chunk * def.ty.width() as u64,
            );
            globals.push((column_global(name, &def.name), segments[seg].offset as u32));
            columns.push((c, seg));
        }
        globals.push((rows_global(name), rows_per_chunk.min(total_rows) as u32));
        tables.push(TableMapping { table: name.clone(), id: id as u32, total_rows, rows_per_chunk, chunked, columns });
    }

    push(&mut segments, SegmentKind::Heap, req.heap_bytes);
    for &(id, bytes) in &req.sort_arrays {
        push(&mut segments, SegmentKind::SortArray { id }, bytes);
    }
    let result = match &req.result {
        Some((layout, schema)) => {
            let stride = layout.stride as u64;
            let capacity_rows = (req.result_bytes / stride).max(1);
            let seg = push(&mut segments, SegmentKind::Result, capacity_rows * stride);
            Some(ResultRegion { segment: seg, capacity_rows, layout: layout.clone(), schema: schema.clone() })
        }
        None => None,
    };

    let end = segments.last().map(Segment::end).unwrap_or(0);
    if end > MAX_MEMORY_BYTES {
        return Err(RuntimeError::Memory(format!(
            "query needs {end} bytes of linear memory, more than the 4 GiB limit"
        )));
    }
    let total_pages = end.div_ceil(PAGE_SIZE as u64).max(1) as u32;
    Ok(MemoryManifest { total_pages, segments, window: req.window_bytes, globals, tables, result })
}
