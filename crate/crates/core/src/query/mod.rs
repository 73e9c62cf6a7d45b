//! Translates a physical plan into one WebAssembly module: one internal
//! function per pipeline plus an exported `run` that calls them in
//! dependency order.

mod bindings;

pub use bindings::{compile_expression, Access, Bindings};

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use thiserror::Error;

use crate::catalog::{Catalog, DataType, TableSchema, Value};
use crate::codegen::{
    emit_cmp, emit_quicksort, load_field, store_field, trap_if, CodegenError, ConstPool, HashTable, HashTableSpec,
    Heap, OrderSpec, ShortCircuit, TupleLayout, Val,
};
use crate::pipeline::{dissect, topo_order, Op, Pipeline, PipelineError, Sink, Source};
use crate::plan::{
    classify_predicate, output_scope, result_schema, typecheck, AggFn, AggKind, CheapnessClass, CmpOp, Expr,
    PlanError, PlanNode, Scope,
};
use crate::runtime::{
    column_global, plan_memory, rows_global, MemoryManifest, MemoryRequest, RuntimeError, SegmentKind,
    HEADER_BYTES,
};
use crate::wasm::{
    render_wat, BlockType, FuncBuilder, FuncIdx, FuncType, GlobalIdx, Instr, LoadOp, Local, ModuleBuilder, NumOp,
    StoreOp, ValType,
};

/// Name of the exported entry point.
pub const ENTRY: &str = "run";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterStyle {
    /// A conditional branch around the rest of the pipeline.
    #[default]
    Branching,
    /// Predicates fold into a 0/1 mask that scales the updates of an
    /// ungrouped aggregate. Other pipelines still branch.
    Branchless,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileOptions {
    pub filter_style: FilterStyle,
    pub short_circuit: ShortCircuit,
    /// Slots allocated when a hash table is created; rounded up to a power of two.
    pub initial_ht_capacity: u32,
    /// Heap size. `None` sizes the heap from row-count bounds.
    pub heap_bytes: Option<u64>,
    /// Result region size; rows beyond it are flushed to the host.
    pub result_bytes: u64,
    /// Tables larger than this are mapped one window at a time.
    pub window_bytes: Option<u64>,
    /// Ceiling on estimated join output rows when sizing memory.
    pub max_rows_estimate: u64,
    pub emit_wat: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            filter_style: FilterStyle::Branching,
            short_circuit: ShortCircuit::Auto,
            initial_ht_capacity: 1024,
            heap_bytes: None,
            result_bytes: 1 << 20,
            window_bytes: None,
            max_rows_estimate: 1 << 23,
            emit_wat: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompileStats {
    pub codegen_us: f64,
    pub binary_size: usize,
}

#[derive(Debug, Clone)]
pub struct CompiledQuery {
    pub binary: Vec<u8>,
    pub wat: Option<String>,
    pub manifest: MemoryManifest,
    pub schema: TableSchema,
    pub stats: CompileStats,
    /// Name of the exported entry point, always [`ENTRY`].
    pub entry: &'static str,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Memory(#[from] RuntimeError),
}

/// Static facts about the plan, indexed by pre-order node id.
struct Analysis<'p> {
    nodes: Vec<&'p PlanNode>,
    children: Vec<Vec<usize>>,
    scopes: Vec<Scope>,
    /// Output columns some consumer reads.
    required: Vec<Vec<bool>>,
    /// Upper bound on output rows.
    bounds: Vec<u64>,
}

fn analyze<'p>(plan: &'p PlanNode, catalog: &Catalog, max_rows: u64) -> Result<Analysis<'p>, CompileError> {
    let nodes = plan.preorder();
    let ids: HashMap<*const PlanNode, usize> =
        nodes.iter().enumerate().map(|(i, n)| (*n as *const PlanNode, i)).collect();
    let children: Vec<Vec<usize>> =
        nodes.iter().map(|n| n.children().iter().map(|c| ids[&(*c as *const PlanNode)]).collect()).collect();
    let scopes = nodes.iter().map(|n| output_scope(n, catalog)).collect::<Result<Vec<_>, _>>()?;

    let mut bounds = vec![0u64; nodes.len()];
    for i in (0..nodes.len()).rev() {
        let ch = &children[i];
        bounds[i] = match nodes[i] {
            PlanNode::Scan { table } => catalog.get(table).map(|t| t.row_count() as u64).unwrap_or(0),
            PlanNode::HashGroupBy { keys, .. } if keys.is_empty() => 1,
            PlanNode::HashJoin { .. } => bounds[ch[0]].saturating_mul(bounds[ch[1]]).min(max_rows),
            _ => bounds[ch[0]],
        };
    }

    let mut required: Vec<Vec<bool>> = scopes.iter().map(|s| vec![false; s.columns.len()]).collect();
    required[0].iter_mut().for_each(|r| *r = true);
    for i in 0..nodes.len() {
        let ch = &children[i];
        let mine = required[i].clone();
        let mark = |req: &mut Vec<bool>, e: &Expr, scope: &Scope| -> Result<(), PlanError> {
            for c in e.columns() {
                req[scope.resolve(c)?] = true;
            }
            Ok(())
        };
        match nodes[i] {
            PlanNode::Scan { .. } => {}
            PlanNode::Filter { pred, .. } => {
                let mut r = mine;
                mark(&mut r, pred, &scopes[ch[0]])?;
                required[ch[0]] = r;
            }
            PlanNode::Project { exprs, .. } => {
                let mut r = vec![false; scopes[ch[0]].columns.len()];
                for (e, _) in exprs.iter().zip(&mine).filter(|(_, m)| **m) {
                    mark(&mut r, e, &scopes[ch[0]])?;
                }
                required[ch[0]] = r;
            }
            PlanNode::HashGroupBy { keys, aggs, .. } => {
                let mut r = vec![false; scopes[ch[0]].columns.len()];
                for e in keys.iter().chain(aggs.iter().filter_map(|a| a.arg.as_ref())) {
                    mark(&mut r, e, &scopes[ch[0]])?;
                }
                required[ch[0]] = r;
            }
            PlanNode::HashJoin { keys, .. } => {
                let nb = scopes[ch[0]].columns.len();
                let mut b = mine[..nb].to_vec();
                let mut p = mine[nb..].to_vec();
                for (l, r) in keys {
                    mark(&mut b, l, &scopes[ch[0]])?;
                    mark(&mut p, r, &scopes[ch[1]])?;
                }
                required[ch[0]] = b;
                required[ch[1]] = p;
            }
            PlanNode::Sort { order, .. } => {
                let mut r = mine;
                for k in order {
                    mark(&mut r, &k.expr, &scopes[ch[0]])?;
                }
                required[ch[0]] = r;
            }
        }
    }
    Ok(Analysis { nodes, children, scopes, required, bounds })
}

fn collect_char_literals(plan: &PlanNode, pool: &mut ConstPool) {
    fn walk(e: &Expr, pool: &mut ConstPool) {
        match e {
            Expr::Literal(Value::Char(b)) => {
                pool.intern(b);
            }
            Expr::Literal(_) | Expr::Column(_) => {}
            Expr::Arith { left, right, .. } | Expr::Cmp { left, right, .. } => {
                walk(left, pool);
                walk(right, pool);
            }
            Expr::Logic { operands, .. } => operands.iter().for_each(|o| walk(o, pool)),
        }
    }
    for n in plan.preorder() {
        match n {
            PlanNode::Scan { .. } => {}
            PlanNode::Filter { pred, .. } => walk(pred, pool),
            PlanNode::Project { exprs, .. } => exprs.iter().for_each(|e| walk(e, pool)),
            PlanNode::HashGroupBy { keys, aggs, .. } => {
                keys.iter().chain(aggs.iter().filter_map(|a| a.arg.as_ref())).for_each(|e| walk(e, pool))
            }
            PlanNode::HashJoin { keys, .. } => keys.iter().for_each(|(l, r)| {
                walk(l, pool);
                walk(r, pool);
            }),
            PlanNode::Sort { order, .. } => order.iter().for_each(|k| walk(&k.expr, pool)),
        }
    }
}

fn columns_of(scope: &Scope, pick: impl Fn(usize) -> bool) -> Vec<(String, String, DataType)> {
    scope
        .columns
        .iter()
        .enumerate()
        .filter(|(i, _)| pick(*i))
        .map(|(_, c)| (c.qualifier.clone(), c.name.clone(), c.ty))
        .collect()
}

/// Slot or static-row layout of a grouping: keys, then aggregates, then a
/// hidden count per `AVG`.
struct GroupInfo {
    keys: Vec<Expr>,
    aggs: Vec<AggFn>,
    layout: TupleLayout,
    spec: Option<HashTableSpec>,
    avg_count: Vec<Option<usize>>,
    /// Address of the single row of an ungrouped aggregate.
    static_addr: u32,
}

struct JoinInfo {
    build_keys: Vec<Expr>,
    probe_keys: Vec<Expr>,
    spec: HashTableSpec,
    /// Slot field holding each build-side output column, if kept.
    build_field: Vec<Option<usize>>,
}

struct SortInfo {
    order: OrderSpec,
    /// Child scope index of each array field.
    source: Vec<usize>,
    base: u32,
    capacity: u32,
    count: GlobalIdx,
    qsort: FuncIdx,
}

struct ResultTarget {
    base: u32,
    capacity: u32,
    layout: TupleLayout,
    count: GlobalIdx,
    flush: FuncIdx,
}

/// Accumulators of an ungrouped aggregate while its pipeline runs.
struct ScalarState {
    /// Per aggregate: running value and, for `AVG` the count and for
    /// `MIN`/`MAX` a seen flag.
    acc: Vec<(Val, Option<Local>)>,
}

struct ScanTable {
    id: u32,
    chunked: bool,
    rows: GlobalIdx,
    columns: HashMap<usize, GlobalIdx>,
}

struct Emitter<'a, 'p> {
    an: &'a Analysis<'p>,
    opts: &'a CompileOptions,
    consts: ConstPool,
    groups: BTreeMap<usize, GroupInfo>,
    joins: BTreeMap<usize, JoinInfo>,
    sorts: BTreeMap<usize, SortInfo>,
    tables: BTreeMap<usize, HashTable>,
    scans: HashMap<String, ScanTable>,
    rewire: Option<FuncIdx>,
    result: Option<ResultTarget>,
    mask: Option<Local>,
    scalar: Option<ScalarState>,
}

/// Compiles `plan` into a validated module and its memory manifest.
pub fn compile_query(plan: &PlanNode, catalog: &Catalog, options: &CompileOptions) -> Result<CompiledQuery, CompileError> {
    let started = Instant::now();
    let an = analyze(plan, catalog, options.max_rows_estimate.max(1))?;
    let schema = result_schema(&an.scopes[0]);
    let graph = dissect(plan);
    let order = topo_order(&graph)?;

    let mut consts = ConstPool::new(HEADER_BYTES as u32);
    collect_char_literals(plan, &mut consts);
    let const_len = consts.bytes().len();

    let mut groups = BTreeMap::new();
    let mut joins = BTreeMap::new();
    let mut sort_layouts = BTreeMap::new();
    let mut heap_static = 0u64;
    let mut heap_dynamic = 0u64;
    for (i, node) in an.nodes.iter().enumerate() {
        let ch = &an.children[i];
        match node {
            PlanNode::HashGroupBy { keys, aggs, .. } => {
                let mut fields = columns_of(&an.scopes[i], |_| true);
                let mut avg_count = vec![None; aggs.len()];
                for (j, a) in aggs.iter().enumerate() {
                    if a.kind == AggKind::Avg {
                        avg_count[j] = Some(fields.len());
                        fields.push((String::new(), format!("#count{j}"), DataType::Int64));
                    }
                }
                let (layout, spec, static_addr) = if keys.is_empty() {
                    let layout = TupleLayout::new(&fields);
                    let addr = heap_static;
                    heap_static += layout.stride as u64;
                    (layout, None, addr as u32)
                } else {
                    let spec = HashTableSpec::new(&fields, keys.len(), options.initial_ht_capacity);
                    heap_dynamic += spec.heap_bytes_for(an.bounds[ch[0]]);
                    (spec.slot.clone(), Some(spec), 0)
                };
                groups.insert(i, GroupInfo { keys: keys.clone(), aggs: aggs.clone(), layout, spec, avg_count, static_addr });
            }
            PlanNode::HashJoin { keys, .. } => {
                let bscope = &an.scopes[ch[0]];
                let mut fields = Vec::new();
                for (k, (l, _)) in keys.iter().enumerate() {
                    fields.push((String::new(), format!("#key{k}"), typecheck(l, bscope)?));
                }
                let mut build_field = vec![None; bscope.columns.len()];
                for (c, col) in bscope.columns.iter().enumerate() {
                    if an.required[i][c] {
                        build_field[c] = Some(fields.len());
                        fields.push((col.qualifier.clone(), col.name.clone(), col.ty));
                    }
                }
                let spec = HashTableSpec::new(&fields, keys.len(), options.initial_ht_capacity);
                heap_dynamic += spec.heap_bytes_for(an.bounds[ch[0]]);
                joins.insert(
                    i,
                    JoinInfo {
                        build_keys: keys.iter().map(|(l, _)| l.clone()).collect(),
                        probe_keys: keys.iter().map(|(_, r)| r.clone()).collect(),
                        spec,
                        build_field,
                    },
                );
            }
            PlanNode::Sort { order, .. } => {
                let cscope = &an.scopes[ch[0]];
                let source: Vec<usize> = (0..cscope.columns.len()).filter(|&c| an.required[ch[0]][c]).collect();
                let layout = TupleLayout::new(&columns_of(cscope, |c| an.required[ch[0]][c]));
                let order = OrderSpec::new(order.iter().map(|k| (k.expr.clone(), k.direction)).collect(), layout)?;
                let rows = an.bounds[ch[0]].max(1);
                sort_layouts.insert(i, (order, source, rows));
            }
            _ => {}
        }
    }

    let mut tables: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, node) in an.nodes.iter().enumerate() {
        if let PlanNode::Scan { table } = node {
            let pos = match tables.iter().position(|(t, _)| t == table) {
                Some(p) => p,
                None => {
                    tables.push((table.clone(), Vec::new()));
                    tables.len() - 1
                }
            };
            for (c, &r) in an.required[i].iter().enumerate() {
                if r && !tables[pos].1.contains(&c) {
                    tables[pos].1.push(c);
                }
            }
        }
    }
    tables.iter_mut().for_each(|(_, cols)| cols.sort_unstable());

    let result_layout = TupleLayout::from_scope(&an.scopes[0]);
    let result_rows = (options.result_bytes / result_layout.stride as u64).clamp(1, an.bounds[0].max(1));
    let heap_bytes = heap_static + options.heap_bytes.unwrap_or(heap_dynamic) + 8;
    let req = MemoryRequest {
        tables,
        const_bytes: const_len as u64,
        heap_bytes,
        sort_arrays: sort_layouts.iter().map(|(&i, (o, _, rows))| (i, rows * o.stride() as u64)).collect(),
        result: Some((result_layout.clone(), schema.clone())),
        result_bytes: result_rows * result_layout.stride as u64,
        window_bytes: options.window_bytes,
    };
    let manifest = plan_memory(&req, catalog)?;

    let mut mb = ModuleBuilder::new();
    mb.import_memory(manifest.total_pages);
    let mut imported: HashMap<&str, GlobalIdx> = HashMap::new();
    for (name, _) in &manifest.globals {
        imported.insert(name, mb.import_global(name, ValType::I32));
    }
    let mut scans = HashMap::new();
    for t in &manifest.tables {
        let schema = catalog.schema(&t.table).map_err(|_| PlanError::UnknownTable(t.table.clone()))?;
        let columns = t
            .columns
            .iter()
            .map(|&(c, _)| (c, imported[column_global(&t.table, &schema.columns[c].name).as_str()]))
            .collect();
        scans.insert(
            t.table.clone(),
            ScanTable { id: t.id, chunked: t.chunked, rows: imported[rows_global(&t.table).as_str()], columns },
        );
    }
    let rewire = manifest
        .tables
        .iter()
        .any(|t| t.chunked)
        .then(|| mb.import_func("rewire_next_chunk", &FuncType::new(&[ValType::I32], &[ValType::I32])));
    let flush = mb.import_func("result_flush", &FuncType::new(&[], &[]));

    let heap_seg = manifest.segment(&SegmentKind::Heap).expect("heap segment");
    let heap_base = heap_seg.offset as u32;
    let heap_top = mb.add_global_init(ValType::I32, true, Instr::I32Const((heap_base as u64 + heap_static) as i32));
    let heap = Heap { top: heap_top, limit: heap_seg.end() as u32 };
    for g in groups.values_mut() {
        g.static_addr += heap_base;
    }
    let result_count = mb.add_global(ValType::I32, true);
    let mut hash_tables = BTreeMap::new();
    for (&i, g) in &groups {
        if let Some(spec) = &g.spec {
            hash_tables.insert(i, HashTable::declare(&mut mb, spec.clone(), heap));
        }
    }
    for (&i, j) in &joins {
        hash_tables.insert(i, HashTable::declare(&mut mb, j.spec.clone(), heap));
    }
    let mut sort_counts = BTreeMap::new();
    for &i in sort_layouts.keys() {
        sort_counts.insert(i, mb.add_global(ValType::I32, true));
    }
    let mut sorts = BTreeMap::new();
    for (i, (order, source, rows)) in sort_layouts {
        let qsort = emit_quicksort(&mut mb, &order)?;
        let seg = manifest.segment(&SegmentKind::SortArray { id: i }).expect("sort segment");
        let capacity = rows.min(u32::MAX as u64) as u32;
        sorts.insert(i, SortInfo { order, source, base: seg.offset as u32, capacity, count: sort_counts[&i], qsort });
    }
    let region = manifest.result.as_ref().expect("result region");
    let result = ResultTarget {
        base: manifest.segments[region.segment].offset as u32,
        capacity: region.capacity_rows as u32,
        layout: region.layout.clone(),
        count: result_count,
        flush,
    };

    let mut em = Emitter {
        an: &an,
        opts: options,
        consts,
        groups,
        joins,
        sorts,
        tables: hash_tables,
        scans,
        rewire,
        result: Some(result),
        mask: None,
        scalar: None,
    };
    let mut pipeline_funcs = Vec::new();
    for p in &order {
        let mut fb = mb.begin_function(&FuncType::new(&[], &[]));
        mb.set_function_name(fb.index(), &format!("pipeline{}", p.id));
        em.emit_pipeline(&mut fb, p)?;
        pipeline_funcs.push(mb.finish_function(fb).map_err(CodegenError::from)?);
    }
    if em.consts.bytes().len() != const_len {
        return Err(CodegenError::Unsupported("literal interned after memory layout".into()).into());
    }

    let mut fb = mb.begin_function(&FuncType::new(&[], &[]));
    mb.set_function_name(fb.index(), ENTRY);
    fb.i32_const((heap_base as u64 + heap_static) as i32);
    fb.global_set(heap_top);
    fb.i32_const(0);
    fb.global_set(result_count);
    for f in &pipeline_funcs {
        fb.call(*f);
    }
    fb.i32_const(0);
    fb.global_get(result_count);
    fb.store(StoreOp::I32, 0);
    let run = mb.finish_function(fb).map_err(CodegenError::from)?;
    mb.export_func(ENTRY, run);
    if !em.consts.bytes().is_empty() {
        mb.add_data(em.consts.base(), em.consts.bytes().to_vec());
    }
    let module = mb.finish().map_err(CodegenError::from)?;
    let codegen_us = started.elapsed().as_secs_f64() * 1e6;

    let wat = options.emit_wat.then(|| render_wat(&module));
    let binary = module.into_bytes();
    let stats = CompileStats { codegen_us, binary_size: binary.len() };
    Ok(CompiledQuery { binary, wat, manifest, schema, stats, entry: ENTRY })
}

fn short_circuit_for(mode: ShortCircuit, e: &Expr, scope: &Scope) -> bool {
    match mode {
        ShortCircuit::Always => true,
        ShortCircuit::Never => false,
        ShortCircuit::Auto => classify_predicate(e, scope) == CheapnessClass::Costly,
    }
}

fn extend_to(fb: &mut FuncBuilder, v: Val, to: DataType) {
    fb.local_get(v.local);
    match (v.ty, to) {
        (DataType::Int32, DataType::Int64) => fb.num(NumOp::I64ExtendI32S),
        (DataType::Int32, DataType::Float64) => fb.num(NumOp::F64ConvertI32S),
        (DataType::Int64, DataType::Float64) => fb.num(NumOp::F64ConvertI64S),
        _ => {}
    }
}

fn add_op(ty: DataType) -> NumOp {
    match ty {
        DataType::Float64 => NumOp::F64Add,
        DataType::Int64 => NumOp::I64Add,
        _ => NumOp::I32Add,
    }
}

fn zero(fb: &mut FuncBuilder, ty: DataType) {
    match ValType::of(ty) {
        ValType::I64 => fb.i64_const(0),
        ValType::F64 => fb.f64_const(0.0),
        _ => fb.i32_const(0),
    }
}

impl Emitter<'_, '_> {
    fn sc(&self, e: &Expr, scope: &Scope) -> bool {
        self.mask.is_none() && short_circuit_for(self.opts.short_circuit, e, scope)
    }

    fn expr(&mut self, fb: &mut FuncBuilder, e: &Expr, env: &mut Bindings) -> Result<Val, CodegenError> {
        let sc = self.sc(e, &env.scope);
        compile_expression(fb, e, env, &mut self.consts, sc)
    }

    fn emit_pipeline(&mut self, fb: &mut FuncBuilder, p: &Pipeline) -> Result<(), CodegenError> {
        self.mask = None;
        self.scalar = None;
        match p.sink {
            Sink::MaterializeHashTable(n) => {
                if let Some(ht) = self.tables.get(&n.0) {
                    ht.emit_init(fb);
                } else {
                    self.init_scalar(fb, n.0);
                    let only_filters = p.ops.iter().all(|o| matches!(o, Op::Filter(_) | Op::Project(_)));
                    if self.opts.filter_style == FilterStyle::Branchless && only_filters {
                        self.mask = Some(fb.fresh_local(ValType::I32));
                    }
                }
            }
            Sink::MaterializeSortArray(n) => {
                fb.i32_const(0);
                fb.global_set(self.sorts[&n.0].count);
            }
            Sink::ResultSink => {}
        }

        self.emit_source(fb, p)?;

        match p.sink {
            Sink::MaterializeHashTable(n) if self.scalar.is_some() => self.finish_scalar(fb, n.0),
            Sink::MaterializeSortArray(n) => {
                let s = &self.sorts[&n.0];
                fb.i32_const(s.base as i32);
                fb.i32_const(s.base as i32);
                fb.global_get(s.count);
                fb.i32_const(s.order.stride() as i32);
                fb.num(NumOp::I32Mul);
                fb.num(NumOp::I32Add);
                fb.call(s.qsort);
            }
            _ => {}
        }
        Ok(())
    }

    fn emit_source(&mut self, fb: &mut FuncBuilder, p: &Pipeline) -> Result<(), CodegenError> {
        match &p.source {
            Source::TableScan { table, node } => self.emit_table_scan(fb, p, table, node.0),
            Source::BreakerScan { breaker } => {
                let n = breaker.0;
                let scope = self.an.scopes[n].clone();
                if let Some(s) = self.sorts.get(&n) {
                    let stride = s.order.stride() as i32;
                    let mut access = vec![Access::Unavailable; scope.columns.len()];
                    let ptr = fb.fresh_local(ValType::I32);
                    let end = fb.fresh_local(ValType::I32);
                    for (f, &c) in s.source.iter().enumerate() {
                        access[c] = Access::Tuple { ptr, offset: s.order.layout.fields[f].offset };
                    }
                    fb.i32_const(s.base as i32);
                    fb.local_tee(ptr);
                    fb.global_get(s.count);
                    fb.i32_const(stride);
                    fb.num(NumOp::I32Mul);
                    fb.num(NumOp::I32Add);
                    fb.local_set(end);
                    let done = fb.block(BlockType::Empty);
                    let top = fb.loop_(BlockType::Empty);
                    fb.local_get(ptr);
                    fb.local_get(end);
                    fb.num(NumOp::I32GeU);
                    fb.br_if(done);
                    self.emit_row(fb, p, Bindings { scope, access })?;
                    fb.local_get(ptr);
                    fb.i32_const(stride);
                    fb.num(NumOp::I32Add);
                    fb.local_set(ptr);
                    fb.br(top);
                    fb.end();
                    fb.end();
                    return Ok(());
                }
                let g = &self.groups[&n];
                let static_addr = g.static_addr;
                let fields: Vec<(DataType, u32)> = g.layout.fields.iter().map(|f| (f.ty, f.offset)).collect();
                let avg: Vec<(usize, usize)> = g
                    .avg_count
                    .iter()
                    .enumerate()
                    .filter_map(|(j, c)| c.map(|c| (g.keys.len() + j, c)))
                    .collect();
                let required = self.an.required[n].clone();
                let make_env = |fb: &mut FuncBuilder, slot: Local, keyed: bool| {
                    let mut access: Vec<Access> = (0..scope.columns.len())
                        .map(|c| Access::Tuple { ptr: slot, offset: fields[c].1 })
                        .collect();
                    if keyed {
                        for &(out, cnt) in &avg {
                            if !required[out] {
                                continue;
                            }
                            let sum = load_field(fb, DataType::Float64, slot, fields[out].1);
                            let n = load_field(fb, DataType::Int64, slot, fields[cnt].1);
                            fb.local_get(sum.local);
                            fb.local_get(n.local);
                            fb.num(NumOp::F64ConvertI64S);
                            fb.num(NumOp::F64Div);
                            let local = fb.fresh_local(ValType::F64);
                            fb.local_set(local);
                            access[out] = Access::Value(Val { local, ty: DataType::Float64 });
                        }
                    }
                    Bindings { scope: scope.clone(), access }
                };
                match self.tables.get(&n).cloned() {
                    Some(ht) => {
                        let mut failure = None;
                        ht.emit_scan(fb, &mut |fb, slot| {
                            let env = make_env(fb, slot, true);
                            self.emit_row(fb, p, env).map_err(|e| {
                                failure = Some(e);
                                CodegenError::Unsupported("aborted".into())
                            })
                        })
                        .map_err(|e| failure.take().unwrap_or(e))
                    }
                    None => {
                        let slot = fb.fresh_local(ValType::I32);
                        fb.i32_const(static_addr as i32);
                        fb.local_set(slot);
                        let env = make_env(fb, slot, false);
                        self.emit_row(fb, p, env)
                    }
                }
            }
        }
    }

    fn emit_table_scan(&mut self, fb: &mut FuncBuilder, p: &Pipeline, table: &str, node: usize) -> Result<(), CodegenError> {
        let st = self
            .scans
            .get(table)
            .ok_or_else(|| CodegenError::Unsupported(format!("table {table} is not mapped")))?;
        let (id, chunked, rows_global) = (st.id, st.chunked, st.rows);
        let scope = self.an.scopes[node].clone();
        let row = fb.fresh_local(ValType::I32);
        let n = fb.fresh_local(ValType::I32);
        let access: Vec<Access> = (0..scope.columns.len())
            .map(|c| match (self.an.required[node][c], st.columns.get(&c)) {
                (true, Some(&base)) => Access::Segment { base, row, width: scope.columns[c].ty.width() as u32 },
                _ => Access::Unavailable,
            })
            .collect();
        fb.global_get(rows_global);
        fb.local_set(n);
        let done = fb.block(BlockType::Empty);
        let chunk = fb.loop_(BlockType::Empty);
        fb.i32_const(0);
        fb.local_set(row);
        let rows_end = fb.block(BlockType::Empty);
        let top = fb.loop_(BlockType::Empty);
        fb.local_get(row);
        fb.local_get(n);
        fb.num(NumOp::I32GeU);
        fb.br_if(rows_end);
        self.emit_row(fb, p, Bindings { scope, access })?;
        fb.local_get(row);
        fb.i32_const(1);
        fb.num(NumOp::I32Add);
        fb.local_set(row);
        fb.br(top);
        fb.end();
        fb.end();
        if chunked {
            let rewire = self.rewire.expect("rewire imported for chunked tables");
            fb.i32_const(id as i32);
            fb.call(rewire);
            fb.local_tee(n);
            fb.num(NumOp::I32Eqz);
            fb.br_if(done);
            fb.br(chunk);
        }
        fb.end();
        fb.end();
        Ok(())
    }

    fn emit_row(&mut self, fb: &mut FuncBuilder, p: &Pipeline, env: Bindings) -> Result<(), CodegenError> {
        if let Some(m) = self.mask {
            fb.i32_const(1);
            fb.local_set(m);
        }
        self.emit_ops(fb, p, 0, env)
    }

    fn emit_ops(&mut self, fb: &mut FuncBuilder, p: &Pipeline, i: usize, mut env: Bindings) -> Result<(), CodegenError> {
        let Some(op) = p.ops.get(i) else {
            return self.emit_sink(fb, p.sink, env);
        };
        match *op {
            Op::Filter(n) => {
                let PlanNode::Filter { pred, .. } = self.an.nodes[n.0] else { unreachable!() };
                let v = self.expr(fb, pred, &mut env)?;
                match self.mask {
                    Some(m) => {
                        fb.local_get(m);
                        fb.local_get(v.local);
                        fb.num(NumOp::I32And);
                        fb.local_set(m);
                        self.emit_ops(fb, p, i + 1, env)
                    }
                    None => {
                        fb.local_get(v.local);
                        fb.if_(BlockType::Empty);
                        self.emit_ops(fb, p, i + 1, env)?;
                        fb.end();
                        Ok(())
                    }
                }
            }
            Op::Project(n) => {
                let PlanNode::Project { exprs, .. } = self.an.nodes[n.0] else { unreachable!() };
                let mut access = Vec::with_capacity(exprs.len());
                for (j, e) in exprs.iter().enumerate() {
                    access.push(if self.an.required[n.0][j] {
                        Access::Value(self.expr(fb, e, &mut env)?)
                    } else {
                        Access::Unavailable
                    });
                }
                self.emit_ops(fb, p, i + 1, Bindings { scope: self.an.scopes[n.0].clone(), access })
            }
            Op::Probe(n) => {
                let j = &self.joins[&n.0];
                let probe_keys = j.probe_keys.clone();
                let fields: Vec<Option<u32>> =
                    j.build_field.iter().map(|f| f.map(|f| j.spec.slot.fields[f].offset)).collect();
                let mut keys = Vec::with_capacity(probe_keys.len());
                for k in &probe_keys {
                    keys.push(self.expr(fb, k, &mut env)?);
                }
                let ht = self.tables[&n.0].clone();
                let scope = self.an.scopes[n.0].clone();
                let mut failure = None;
                ht.emit_lookup(fb, &keys, &mut |fb, slot| {
                    let mut access: Vec<Access> = fields
                        .iter()
                        .map(|f| match f {
                            Some(offset) => Access::Tuple { ptr: slot, offset: *offset },
                            None => Access::Unavailable,
                        })
                        .collect();
                    access.extend(env.access.iter().copied());
                    self.emit_ops(fb, p, i + 1, Bindings { scope: scope.clone(), access }).map_err(|e| {
                        failure = Some(e);
                        CodegenError::Unsupported("aborted".into())
                    })
                })
                .map_err(|e| failure.take().unwrap_or(e))
            }
        }
    }

    fn emit_sink(&mut self, fb: &mut FuncBuilder, sink: Sink, mut env: Bindings) -> Result<(), CodegenError> {
        match sink {
            Sink::ResultSink => {
                let r = self.result.as_ref().expect("result target");
                let (base, cap, count, flush, stride) = (r.base, r.capacity, r.count, r.flush, r.layout.stride);
                let offsets: Vec<u32> = r.layout.fields.iter().map(|f| f.offset).collect();
                fb.global_get(count);
                fb.i32_const(cap as i32);
                fb.num(NumOp::I32GeU);
                fb.if_(BlockType::Empty);
                fb.i32_const(0);
                fb.global_get(count);
                fb.store(StoreOp::I32, 0);
                fb.call(flush);
                fb.i32_const(0);
                fb.load(LoadOp::I32, 0);
                fb.global_set(count);
                fb.end();
                let ptr = fb.fresh_local(ValType::I32);
                fb.i32_const(base as i32);
                fb.global_get(count);
                fb.i32_const(stride as i32);
                fb.num(NumOp::I32Mul);
                fb.num(NumOp::I32Add);
                fb.local_set(ptr);
                for (c, off) in offsets.into_iter().enumerate() {
                    let v = env.value(fb, c)?;
                    store_field(fb, v, ptr, off);
                }
                fb.global_get(count);
                fb.i32_const(1);
                fb.num(NumOp::I32Add);
                fb.global_set(count);
                Ok(())
            }
            Sink::MaterializeSortArray(n) => {
                let s = &self.sorts[&n.0];
                let (base, cap, count, stride) = (s.base, s.capacity, s.count, s.order.stride());
                let targets: Vec<(usize, u32)> =
                    s.source.iter().zip(&s.order.layout.fields).map(|(&c, f)| (c, f.offset)).collect();
                fb.global_get(count);
                fb.i32_const(cap as i32);
                fb.num(NumOp::I32GeU);
                trap_if(fb);
                let ptr = fb.fresh_local(ValType::I32);
                fb.i32_const(base as i32);
                fb.global_get(count);
                fb.i32_const(stride as i32);
                fb.num(NumOp::I32Mul);
                fb.num(NumOp::I32Add);
                fb.local_set(ptr);
                for (c, off) in targets {
                    let v = env.value(fb, c)?;
                    store_field(fb, v, ptr, off);
                }
                fb.global_get(count);
                fb.i32_const(1);
                fb.num(NumOp::I32Add);
                fb.global_set(count);
                Ok(())
            }
            Sink::MaterializeHashTable(n) => {
                if let Some(j) = self.joins.get(&n.0) {
                    let build_keys = j.build_keys.clone();
                    let stores: Vec<(usize, u32)> = j
                        .build_field
                        .iter()
                        .enumerate()
                        .filter_map(|(c, f)| f.map(|f| (c, j.spec.slot.fields[f].offset)))
                        .collect();
                    let mut keys = Vec::new();
                    for k in &build_keys {
                        keys.push(self.expr(fb, k, &mut env)?);
                    }
                    let ht = self.tables[&n.0].clone();
                    let slot = ht.emit_insert(fb, &keys)?;
                    for (c, off) in stores {
                        let v = env.value(fb, c)?;
                        store_field(fb, v, slot, off);
                    }
                    return Ok(());
                }
                if self.scalar.is_some() {
                    return self.update_scalar(fb, n.0, env);
                }
                self.update_group(fb, n.0, env)
            }
        }
    }

    fn agg_args(&mut self, fb: &mut FuncBuilder, aggs: &[AggFn], env: &mut Bindings) -> Result<Vec<Option<Val>>, CodegenError> {
        aggs.iter()
            .map(|a| a.arg.as_ref().map(|e| self.expr(fb, e, env)).transpose())
            .collect()
    }

    fn update_group(&mut self, fb: &mut FuncBuilder, n: usize, mut env: Bindings) -> Result<(), CodegenError> {
        let g = &self.groups[&n];
        let (key_exprs, aggs, avg_count) = (g.keys.clone(), g.aggs.clone(), g.avg_count.clone());
        let fields: Vec<(DataType, u32)> = g.layout.fields.iter().map(|f| (f.ty, f.offset)).collect();
        let mut keys = Vec::new();
        for k in &key_exprs {
            keys.push(self.expr(fb, k, &mut env)?);
        }
        let args = self.agg_args(fb, &aggs, &mut env)?;
        let ht = self.tables[&n].clone();
        let (slot, is_new) = ht.emit_insert_or_get(fb, &keys)?;
        for (j, a) in aggs.iter().enumerate() {
            let (ty, off) = fields[keys.len() + j];
            match a.kind {
                AggKind::CountStar => {
                    fb.local_get(slot);
                    fb.local_get(slot);
                    fb.load(LoadOp::I64, off);
                    fb.i64_const(1);
                    fb.num(NumOp::I64Add);
                    fb.store(StoreOp::I64, off);
                }
                AggKind::Sum | AggKind::Avg => {
                    let v = args[j].expect("aggregate argument");
                    let cur = load_field(fb, ty, slot, off);
                    fb.local_get(cur.local);
                    extend_to(fb, v, ty);
                    fb.num(add_op(ty));
                    fb.local_set(cur.local);
                    store_field(fb, cur, slot, off);
                    if let Some(c) = avg_count[j] {
                        let off = fields[c].1;
                        fb.local_get(slot);
                        fb.local_get(slot);
                        fb.load(LoadOp::I64, off);
                        fb.i64_const(1);
                        fb.num(NumOp::I64Add);
                        fb.store(StoreOp::I64, off);
                    }
                }
                AggKind::Min | AggKind::Max => {
                    let v = args[j].expect("aggregate argument");
                    let cur = load_field(fb, ty, slot, off);
                    let op = if a.kind == AggKind::Min { CmpOp::Lt } else { CmpOp::Gt };
                    emit_cmp(fb, op, v, cur)?;
                    fb.local_get(is_new);
                    fb.num(NumOp::I32Or);
                    fb.if_(BlockType::Empty);
                    store_field(fb, v, slot, off);
                    fb.end();
                }
            }
        }
        Ok(())
    }

    fn init_scalar(&mut self, fb: &mut FuncBuilder, n: usize) {
        let g = &self.groups[&n];
        let mut acc = Vec::new();
        for (j, a) in g.aggs.iter().enumerate() {
            let ty = g.layout.fields[j].ty;
            let local = fb.fresh_local(ValType::of(ty));
            zero(fb, ty);
            fb.local_set(local);
            let aux = match a.kind {
                AggKind::Avg => Some(fb.fresh_local(ValType::I64)),
                AggKind::Min | AggKind::Max => Some(fb.fresh_local(ValType::I32)),
                _ => None,
            };
            if let Some(x) = aux {
                zero(fb, if a.kind == AggKind::Avg { DataType::Int64 } else { DataType::Int32 });
                fb.local_set(x);
            }
            acc.push((Val { local, ty }, aux));
        }
        self.scalar = Some(ScalarState { acc });
    }

    fn update_scalar(&mut self, fb: &mut FuncBuilder, n: usize, mut env: Bindings) -> Result<(), CodegenError> {
        let aggs = self.groups[&n].aggs.clone();
        let args = self.agg_args(fb, &aggs, &mut env)?;
        let mask = self.mask;
        let state = self.scalar.as_ref().expect("scalar state");
        for (j, a) in aggs.iter().enumerate() {
            let (acc, aux) = state.acc[j];
            let count_into = |fb: &mut FuncBuilder, c: Local| {
                fb.local_get(c);
                match mask {
                    Some(m) => {
                        fb.local_get(m);
                        fb.num(NumOp::I64ExtendI32U);
                    }
                    None => fb.i64_const(1),
                }
                fb.num(NumOp::I64Add);
                fb.local_set(c);
            };
            match a.kind {
                AggKind::CountStar => count_into(fb, acc.local),
                AggKind::Sum | AggKind::Avg => {
                    let v = args[j].expect("aggregate argument");
                    fb.local_get(acc.local);
                    extend_to(fb, v, acc.ty);
                    if let Some(m) = mask {
                        zero(fb, acc.ty);
                        fb.local_get(m);
                        fb.emit(Instr::Select);
                    }
                    fb.num(add_op(acc.ty));
                    fb.local_set(acc.local);
                    if let Some(c) = aux {
                        count_into(fb, c);
                    }
                }
                AggKind::Min | AggKind::Max => {
                    let v = args[j].expect("aggregate argument");
                    let seen = aux.expect("seen flag");
                    let take = fb.fresh_local(ValType::I32);
                    let op = if a.kind == AggKind::Min { CmpOp::Lt } else { CmpOp::Gt };
                    emit_cmp(fb, op, v, acc)?;
                    fb.local_get(seen);
                    fb.num(NumOp::I32Eqz);
                    fb.num(NumOp::I32Or);
                    if let Some(m) = mask {
                        fb.local_get(m);
                        fb.num(NumOp::I32And);
                    }
                    fb.local_set(take);
                    fb.local_get(v.local);
                    fb.local_get(acc.local);
                    fb.local_get(take);
                    fb.emit(Instr::Select);
                    fb.local_set(acc.local);
                    fb.local_get(seen);
                    match mask {
                        Some(m) => fb.local_get(m),
                        None => fb.i32_const(1),
                    }
                    fb.num(NumOp::I32Or);
                    fb.local_set(seen);
                }
            }
        }
        Ok(())
    }

    fn finish_scalar(&mut self, fb: &mut FuncBuilder, n: usize) {
        let g = &self.groups[&n];
        let state = self.scalar.take().expect("scalar state");
        let ptr = fb.fresh_local(ValType::I32);
        fb.i32_const(g.static_addr as i32);
        fb.local_set(ptr);
        for (j, a) in g.aggs.iter().enumerate() {
            let (acc, aux) = state.acc[j];
            let off = g.layout.fields[j].offset;
            if a.kind == AggKind::Avg {
                let cnt = aux.expect("avg count");
                fb.local_get(acc.local);
                fb.local_get(cnt);
                fb.num(NumOp::F64ConvertI64S);
                fb.num(NumOp::F64Div);
                fb.f64_const(0.0);
                fb.local_get(cnt);
                fb.i64_const(0);
                fb.num(NumOp::I64Ne);
                fb.emit(Instr::Select);
                fb.local_set(acc.local);
            }
            store_field(fb, acc, ptr, off);
        }
    }
}
