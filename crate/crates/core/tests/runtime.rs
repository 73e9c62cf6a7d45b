use wasmql::catalog::{Catalog, ColumnDef, DataType, Distribution, GenSpec, Table, TableSchema, Value};
use wasmql::codegen::kernels::Kernel;
use wasmql::corpus::compare_results;
use wasmql::interp::interpret;
use wasmql::query::{compile_query, CompileOptions, CompiledQuery};
use wasmql::runtime::{execute, extract_result, OptLevel, Prepared, RuntimeError, WasmiAdapter, WasmtimeAdapter};
use wasmql::sql::parse_sql;
use wasmql::wasm::{FuncType, ModuleBuilder, StoreOp};

const KIB: u64 = 1024;
const MIB: u64 = 1024 * 1024;

fn wasmtime() -> WasmtimeAdapter {
    WasmtimeAdapter::new(OptLevel::Fast)
}

fn gen(name: &str, cols: &[(&str, DataType, Distribution)], rows: usize, seed: u64) -> Table {
    let schema = TableSchema::new(name, cols.iter().map(|(n, t, _)| ColumnDef::new(*n, *t)).collect()).unwrap();
    wasmql::catalog::generate(&schema, &GenSpec { rows, columns: cols.iter().map(|c| c.2.clone()).collect(), seed })
        .unwrap()
}

fn catalog(tables: Vec<Table>) -> Catalog {
    let mut c = Catalog::new();
    for t in tables {
        c.register(t).unwrap();
    }
    c
}

fn compile(sql: &str, cat: &Catalog, options: &CompileOptions) -> CompiledQuery {
    compile_query(&parse_sql(sql).unwrap(), cat, options).unwrap()
}

fn two_column_query() -> (Catalog, CompiledQuery) {
    let t = gen("T", &[("a", DataType::Int32, Distribution::Sequential), ("f", DataType::Float64, Distribution::UniformFloat01)], 10, 1);
    let cat = catalog(vec![t]);
    let q = compile("SELECT T.a, T.f FROM T", &cat, &CompileOptions::default());
    (cat, q)
}

#[test]
fn extract_decodes_rows_bit_exactly() {
    let (_, q) = two_column_query();
    let region = q.manifest.result.clone().unwrap();
    let base = q.manifest.segments[region.segment].offset as i32;
    let (fa, ff) = (region.layout.fields[0].offset as i32, region.layout.fields[1].offset as i32);
    let stride = region.layout.stride as i32;
    let rows: [(i32, u64); 3] = [
        (i32::MIN, (-0.0f64).to_bits()),
        (7, 0x7ff8_dead_beef_0001),
        (-1, 1),
    ];

    // A module that stores the rows and the count itself.
    let mut mb = ModuleBuilder::new();
    mb.import_memory(q.manifest.total_pages);
    let mut fb = mb.begin_function(&FuncType::new(&[], &[]));
    for (i, &(a, f)) in rows.iter().enumerate() {
        let at = base + i as i32 * stride;
        fb.i32_const(at + fa);
        fb.i32_const(a);
        fb.store(StoreOp::I32, 0);
        fb.i32_const(at + ff);
        fb.i64_const(f as i64);
        fb.store(StoreOp::I64, 0);
    }
    fb.i32_const(0);
    fb.i32_const(rows.len() as i32);
    fb.store(StoreOp::I32, 0);
    let f = mb.finish_function(fb).unwrap();
    mb.export_func("run", f);
    let mut k = Kernel::new(mb.finish().unwrap(), &wasmtime(), q.manifest.total_pages).unwrap();

    assert_eq!(extract_result(&q.manifest, k.memory()).unwrap().row_count(), 0);
    k.call("run").unwrap();
    let t = extract_result(&q.manifest, k.memory()).unwrap();
    assert_eq!(t.row_count(), 3);
    for (i, &(a, f)) in rows.iter().enumerate() {
        assert_eq!(t.value(i, 0), Value::Int32(a));
        let Value::Float64(got) = t.value(i, 1) else { panic!("not a float") };
        assert_eq!(got.to_bits(), f, "row {i}");
    }

    let cap = region.capacity_rows as u32;
    k.write(0, &(cap + 1).to_le_bytes());
    assert!(matches!(extract_result(&q.manifest, k.memory()), Err(RuntimeError::Corrupt(_))));
    k.write(0, &cap.to_le_bytes());
    assert_eq!(extract_result(&q.manifest, k.memory()).unwrap().row_count(), cap as usize);
}

/// `T(v INT64)` of exactly 1 MiB.
fn one_mib_table() -> Catalog {
    catalog(vec![gen("T", &[("v", DataType::Int64, Distribution::UniformInt { lo: 0, hi: 9_999 })], (MIB / 8) as usize, 7)])
}

const CHUNK_QUERIES: [&str; 4] = [
    "SELECT COUNT(*), SUM(T.v), MIN(T.v), MAX(T.v), AVG(T.v) FROM T WHERE T.v > 100",
    "SELECT T.v / 100, COUNT(*), MAX(T.v) FROM T GROUP BY T.v / 100",
    "SELECT T.v FROM T WHERE T.v < 50 ORDER BY T.v DESC",
    "SELECT T.v, T.v * 2 FROM T WHERE T.v < 300",
];

#[test]
fn windowed_runs_equal_the_resident_run() {
    let cat = one_mib_table();
    for sql in CHUNK_QUERIES {
        let plan = parse_sql(sql).unwrap();
        let want = interpret(&plan, &cat).unwrap();
        let mut tables = Vec::new();
        for (window, chunks) in [(Some(64 * KIB), 16), (Some(128 * KIB), 8), (None, 0)] {
            let options = CompileOptions { window_bytes: window, ..CompileOptions::default() };
            let q = compile_query(&plan, &cat, &options).unwrap();
            assert_eq!(q.manifest.table("T").unwrap().chunked, window.is_some());
            let r = execute(&q, &cat, &wasmtime()).unwrap();
            assert_eq!(r.counters.chunks_served, chunks, "{sql} window {window:?}");
            compare_results(&plan, &cat, &want, &r.table).unwrap_or_else(|e| panic!("{sql} window {window:?}: {e}"));
            tables.push(r.table);
        }
        // Without a sort the row order is the scan order, so windows must not change it.
        if !sql.contains("ORDER") && !sql.contains("GROUP") {
            assert_eq!(tables[0].to_csv(), tables[2].to_csv());
            assert_eq!(tables[1].to_csv(), tables[2].to_csv());
        }
    }
}

#[test]
fn windowing_agrees_on_wasmi() {
    let cat = one_mib_table();
    let plan = parse_sql(CHUNK_QUERIES[1]).unwrap();
    let want = interpret(&plan, &cat).unwrap();
    let options = CompileOptions { window_bytes: Some(64 * KIB), ..CompileOptions::default() };
    let r = execute(&compile_query(&plan, &cat, &options).unwrap(), &cat, &WasmiAdapter::new()).unwrap();
    assert_eq!(r.counters.chunks_served, 16);
    compare_results(&plan, &cat, &want, &r.table).unwrap();
}

#[test]
fn scaled_two_table_mapping_windows_only_the_large_table() {
    // A = 1 MiB, B = 5 MiB, window = 2 MiB, result region = 1 MiB.
    let a = gen("A", &[("k", DataType::Int64, Distribution::Sequential)], (MIB / 8) as usize, 1);
    let b = gen("B", &[("k", DataType::Int64, Distribution::UniformInt { lo: 0, hi: 200_000 })], (5 * MIB / 8) as usize, 2);
    let cat = catalog(vec![a, b]);
    let options = CompileOptions { window_bytes: Some(2 * MIB), result_bytes: MIB, ..CompileOptions::default() };
    for sql in ["SELECT COUNT(*), SUM(B.k) FROM A, B WHERE A.k = B.k", "SELECT A.k, B.k FROM A, B WHERE A.k = B.k"] {
        let plan = parse_sql(sql).unwrap();
        let q = compile_query(&plan, &cat, &options).unwrap();
        assert!(!q.manifest.table("A").unwrap().chunked);
        assert!(q.manifest.table("B").unwrap().chunked);
        let r = execute(&q, &cat, &wasmtime()).unwrap();
        assert_eq!(r.counters.chunks_served, 3, "{sql}");
        let want = interpret(&plan, &cat).unwrap();
        compare_results(&plan, &cat, &want, &r.table).unwrap_or_else(|e| panic!("{sql}: {e}"));
        if sql.contains("A.k, B.k") {
            // About 3.3 MiB of rows through a 1 MiB region.
            assert!(r.counters.result_flushes >= 3, "{} flushes", r.counters.result_flushes);
        }
    }
}

#[test]
fn prepared_rerun_skips_engine_compilation() {
    let cat = one_mib_table();
    let q = compile(CHUNK_QUERIES[0], &cat, &CompileOptions { window_bytes: Some(64 * KIB), ..CompileOptions::default() });
    let mut p = Prepared::new(&q, &cat, &wasmtime()).unwrap();
    let first = p.run().unwrap();
    let second = p.run().unwrap();
    assert!(first.timings.engine_compile_us > 0.0);
    assert_eq!(second.timings.engine_compile_us, 0.0);
    assert!(second.timings.exec_us > 0.0);
    assert_eq!(first.table.to_csv(), second.table.to_csv());
    assert_eq!(first.counters, second.counters);
}

#[test]
fn division_by_zero_traps_and_the_interpreter_errors() {
    let cat = one_mib_table();
    let sql = "SELECT 10 / (T.v - T.v) FROM T";
    let plan = parse_sql(sql).unwrap();
    assert!(interpret(&plan, &cat).is_err());
    let err = execute(&compile(sql, &cat, &CompileOptions::default()), &cat, &wasmtime()).unwrap_err();
    assert!(matches!(err, RuntimeError::Trap(_)), "{err}");
}

#[test]
fn heap_exhaustion_is_reported_as_a_trap() {
    let cat = one_mib_table();
    let options = CompileOptions { heap_bytes: Some(64 * KIB), initial_ht_capacity: 8, ..CompileOptions::default() };
    let q = compile("SELECT T.v, COUNT(*) FROM T GROUP BY T.v", &cat, &options);
    let err = execute(&q, &cat, &wasmtime()).unwrap_err();
    assert!(matches!(err, RuntimeError::Trap(_)), "{err}");
}
