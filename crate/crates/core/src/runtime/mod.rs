//! Host side of query execution: memory provisioning, table chunking,
//! result retrieval and timing.

mod engine;
mod memory;

pub use engine::{
    CompiledModule, EngineAdapter, EngineInstance, EngineKind, HostHandler, NoHost, OptLevel, WasmiAdapter,
    WasmtimeAdapter,
};
pub use memory::{
    column_global, plan_memory, rows_global, MemoryManifest, MemoryRequest, ResultRegion, Segment, SegmentKind,
    TableMapping, HEADER_BYTES, MAX_MEMORY_BYTES,
};

use std::any::Any;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::catalog::{Catalog, Table, Value};
use crate::query::CompiledQuery;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("memory layout: {0}")]
    Memory(String),
    #[error("engine: {0}")]
    Engine(String),
    #[error("trap: {0}")]
    Trap(String),
    #[error("corrupt result region: {0}")]
    Corrupt(String),
}

/// Phase durations in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    /// Plan to validated module bytes.
    pub codegen_us: f64,
    /// Engine compilation of the module; zero when a prepared instance is reused.
    pub engine_compile_us: f64,
    /// The `run` call, including callbacks.
    pub exec_us: f64,
    /// Instantiation and copying the initial table chunks into memory.
    pub setup_us: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    /// Windows of chunked tables made resident, the initial one included.
    pub chunks_served: u64,
    pub result_flushes: u64,
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub table: Table,
    pub timings: Timings,
    pub counters: Counters,
}

fn micros(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e6
}

fn read_u32(mem: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(mem[at..at + 4].try_into().expect("4 bytes"))
}

/// Decodes the rows currently in the result region.
pub fn extract_result(manifest: &MemoryManifest, memory: &[u8]) -> Result<Table, RuntimeError> {
    let region = manifest.result.as_ref().ok_or_else(|| RuntimeError::Corrupt("plan has no result region".into()))?;
    let mut table = Table::new(region.schema.clone());
    append_rows(manifest, region, memory, &mut table)?;
    Ok(table)
}

fn append_rows(
    manifest: &MemoryManifest,
    region: &ResultRegion,
    memory: &[u8],
    out: &mut Table,
) -> Result<(), RuntimeError> {
    if memory.len() < HEADER_BYTES as usize {
        return Err(RuntimeError::Corrupt("memory smaller than the header".into()));
    }
    let count = read_u32(memory, 0) as u64;
    if count > region.capacity_rows {
        return Err(RuntimeError::Corrupt(format!(
            "row count {count} exceeds region capacity {}",
            region.capacity_rows
        )));
    }
    let base = manifest.segments[region.segment].offset as usize;
    let stride = region.layout.stride as usize;
    let mut row = Vec::with_capacity(region.layout.fields.len());
    for r in 0..count as usize {
        row.clear();
        let at = base + r * stride;
        for f in &region.layout.fields {
            let start = at + f.offset as usize;
            row.push(Value::read_bytes(f.ty, &memory[start..start + f.ty.width()]));
        }
        out.push_row(&row).map_err(|e| RuntimeError::Corrupt(e.to_string()))?;
    }
    Ok(())
}

struct Feed {
    table: Arc<Table>,
    /// `(column index, segment offset, width)`.
    columns: Vec<(usize, usize, usize)>,
    total_rows: u64,
    rows_per_chunk: u64,
    chunked: bool,
    /// First row of the next window.
    next_row: u64,
}

impl Feed {
    fn copy_window(&self, mem: &mut [u8], start: u64) -> u64 {
        let n = self.rows_per_chunk.min(self.total_rows - start);
        for &(c, offset, w) in &self.columns {
            let src = &self.table.column_bytes(c)[start as usize * w..(start + n) as usize * w];
            mem[offset..offset + src.len()].copy_from_slice(src);
        }
        n
    }
}

/// Serves chunk requests and drains the result region.
struct QueryHost {
    manifest: MemoryManifest,
    feeds: Vec<Feed>,
    result: Option<Table>,
    counters: Counters,
}

impl QueryHost {
    fn new(manifest: &MemoryManifest, catalog: &Catalog) -> Result<QueryHost, RuntimeError> {
        let mut feeds = Vec::new();
        for t in &manifest.tables {
            let handle = catalog.handle(&t.table).ok_or_else(|| RuntimeError::Memory(format!("unknown table {}", t.table)))?;
            let table = catalog.shared(handle);
            if table.row_count() as u64 != t.total_rows {
                return Err(RuntimeError::Memory(format!(
                    "table {} has {} rows, the module was compiled for {}",
                    t.table,
                    table.row_count(),
                    t.total_rows
                )));
            }
            let columns = t
                .columns
                .iter()
                .map(|&(c, seg)| (c, manifest.segments[seg].offset as usize, table.schema().columns[c].ty.width()))
                .collect();
            feeds.push(Feed {
                table,
                columns,
                total_rows: t.total_rows,
                rows_per_chunk: t.rows_per_chunk,
                chunked: t.chunked,
                next_row: 0,
            });
        }
        let result = manifest.result.as_ref().map(|r| Table::new(r.schema.clone()));
        Ok(QueryHost { manifest: manifest.clone(), feeds, result, counters: Counters::default() })
    }

    /// Makes the first window of every table resident.
    fn load_initial(&mut self, mem: &mut [u8]) {
        for f in &mut self.feeds {
            let n = f.copy_window(mem, 0);
            f.next_row = n;
            if f.chunked {
                self.counters.chunks_served += 1;
            }
        }
    }

    /// Resets counters and collected rows for another run over resident data.
    fn reset(&mut self) {
        self.counters = Counters::default();
        self.counters.chunks_served = self.feeds.iter().filter(|f| f.chunked).count() as u64;
        if let Some(r) = &self.manifest.result {
            self.result = Some(Table::new(r.schema.clone()));
        }
    }

    fn drain(&mut self, mem: &mut [u8]) -> Result<(), RuntimeError> {
        let (Some(region), Some(out)) = (&self.manifest.result, &mut self.result) else {
            return Ok(());
        };
        append_rows(&self.manifest, region, mem, out)?;
        mem[0..4].copy_from_slice(&0u32.to_le_bytes());
        Ok(())
    }
}

impl HostHandler for QueryHost {
    fn rewire_next_chunk(&mut self, mem: &mut [u8], table: i32) -> Result<i32, String> {
        let f = self.feeds.get_mut(table as usize).ok_or_else(|| format!("no table with id {table}"))?;
        if f.next_row >= f.total_rows {
            // Exhausted: put the first window back for the next scan.
            f.next_row = f.copy_window(mem, 0);
            return Ok(0);
        }
        let n = f.copy_window(mem, f.next_row);
        f.next_row += n;
        self.counters.chunks_served += 1;
        Ok(n as i32)
    }

    fn result_flush(&mut self, mem: &mut [u8]) -> Result<(), String> {
        self.counters.result_flushes += 1;
        self.drain(mem).map_err(|e| e.to_string())
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// A compiled and instantiated query whose tables are resident; it can be
/// run repeatedly without recompiling.
pub struct Prepared {
    instance: Box<dyn EngineInstance>,
    manifest: MemoryManifest,
    timings: Timings,
    runs: usize,
}

impl Prepared {
    pub fn new(compiled: &CompiledQuery, catalog: &Catalog, adapter: &dyn EngineAdapter) -> Result<Prepared, RuntimeError> {
        let t = Instant::now();
        let module = adapter.compile(&compiled.binary)?;
        let engine_compile_us = micros(t);
        let t = Instant::now();
        let host = QueryHost::new(&compiled.manifest, catalog)?;
        let mut instance = module.instantiate(compiled.manifest.total_pages, &compiled.manifest.globals, Box::new(host))?;
        with_query_host(instance.as_mut(), |mem, host| host.load_initial(mem));
        let timings = Timings { codegen_us: compiled.stats.codegen_us, engine_compile_us, setup_us: micros(t), exec_us: 0.0 };
        Ok(Prepared { instance, manifest: compiled.manifest.clone(), timings, runs: 0 })
    }

    pub fn manifest(&self) -> &MemoryManifest {
        &self.manifest
    }

    pub fn run(&mut self) -> Result<ExecutionResult, RuntimeError> {
        if self.runs > 0 {
            with_query_host(self.instance.as_mut(), |_, host| host.reset());
            self.timings.engine_compile_us = 0.0;
            self.timings.setup_us = 0.0;
        }
        self.runs += 1;
        let t = Instant::now();
        self.instance.call("run")?;
        let exec_us = micros(t);
        let (table, counters) = with_query_host(self.instance.as_mut(), |mem, host| {
            host.drain(mem)?;
            let table = host.result.clone().ok_or_else(|| RuntimeError::Corrupt("plan has no result region".into()))?;
            Ok::<_, RuntimeError>((table, host.counters))
        })?;
        Ok(ExecutionResult { table, timings: Timings { exec_us, ..self.timings }, counters })
    }
}

fn with_query_host<R>(instance: &mut dyn EngineInstance, f: impl FnOnce(&mut [u8], &mut QueryHost) -> R) -> R {
    let mut f = Some(f);
    let mut out = None;
    instance.with_host(&mut |mem, host| {
        let host = host.as_any_mut().downcast_mut::<QueryHost>().expect("instance created with a QueryHost");
        out = Some((f.take().expect("called once"))(mem, host));
    });
    out.expect("with_host calls back")
}

/// Compiles the module in the engine, maps the tables and runs the query.
pub fn execute(compiled: &CompiledQuery, catalog: &Catalog, adapter: &dyn EngineAdapter) -> Result<ExecutionResult, RuntimeError> {
    Prepared::new(compiled, catalog, adapter)?.run()
}
