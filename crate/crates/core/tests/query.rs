//! Structure and end-to-end checks on compiled queries. Module structure is
//! read back with wasmparser, independently of the encoder.

use std::sync::Arc;

use wasmparser::{Operator, Parser, Payload, TypeRef};
use wasmql::catalog::{Catalog, ColumnDef, DataType, Table, TableSchema};
use wasmql::corpus::compare_results;
use wasmql::interp::{interpret, interpret_with, JoinStrategy};
use wasmql::codegen::ShortCircuit;
use wasmql::query::{compile_query, CompileOptions, CompiledQuery};
use wasmql::runtime::{execute, EngineAdapter, OptLevel, WasmiAdapter, WasmtimeAdapter};
use wasmql::sql::parse_sql;

#[derive(Debug, Default)]
struct Body {
    calls: Vec<u32>,
    global_gets: Vec<u32>,
    /// Operator names seen while inside at least one `loop`.
    in_loop: Vec<String>,
}

#[derive(Debug, Default)]
struct Inspected {
    global_imports: Vec<String>,
    imported_funcs: u32,
    exports: Vec<(String, u32)>,
    bodies: Vec<Body>,
}

impl Inspected {
    fn export(&self, name: &str) -> u32 {
        self.exports.iter().find(|(n, _)| n == name).expect("export").1
    }

    fn body_of_export(&self, name: &str) -> &Body {
        &self.bodies[(self.export(name) - self.imported_funcs) as usize]
    }
}

fn inspect(bytes: &[u8]) -> Inspected {
    let mut out = Inspected::default();
    for payload in Parser::new(0).parse_all(bytes) {
        match payload.unwrap() {
            Payload::ImportSection(r) => {
                for imp in r.into_imports() {
                    let imp = imp.unwrap();
                    match imp.ty {
                        TypeRef::Global(_) => out.global_imports.push(imp.name.to_string()),
                        TypeRef::Func(_) => out.imported_funcs += 1,
                        _ => {}
                    }
                }
            }
            Payload::ExportSection(r) => {
                for e in r {
                    let e = e.unwrap();
                    out.exports.push((e.name.to_string(), e.index));
                }
            }
            Payload::CodeSectionEntry(body) => {
                let mut b = Body::default();
                // Frame kinds: true for `loop`.
                let mut frames: Vec<bool> = Vec::new();
                for op in body.get_operators_reader().unwrap() {
                    let op = op.unwrap();
                    if frames.contains(&true) {
                        let name = format!("{op:?}");
                        b.in_loop.push(name.split([' ', '{', '(']).next().unwrap().to_string());
                    }
                    match op {
                        Operator::Loop { .. } => frames.push(true),
                        Operator::Block { .. } | Operator::If { .. } => frames.push(false),
                        Operator::End => {
                            frames.pop();
                        }
                        Operator::Call { function_index } => b.calls.push(function_index),
                        Operator::GlobalGet { global_index } => b.global_gets.push(global_index),
                        _ => {}
                    }
                }
                out.bodies.push(b);
            }
            _ => {}
        }
    }
    out
}

fn table(name: &str, cols: &[(&str, DataType)], csv: &str) -> Table {
    let schema = TableSchema::new(name, cols.iter().map(|&(n, t)| ColumnDef::new(n, t)).collect()).unwrap();
    let mut t = Table::new(schema);
    t.ingest_csv(csv, false).unwrap();
    t
}

fn catalog(tables: Vec<Table>) -> Catalog {
    let mut c = Catalog::new();
    for t in tables {
        c.register(t).unwrap();
    }
    c
}

fn r_val() -> Catalog {
    let rows: String = (0..100).map(|i| format!("{},{}\n", i as f64 * 0.1, i)).collect();
    catalog(vec![table("R", &[("val", DataType::Float64), ("other", DataType::Int64)], &rows)])
}

fn compile(sql: &str, cat: &Catalog, options: &CompileOptions) -> CompiledQuery {
    compile_query(&parse_sql(sql).unwrap(), cat, options).unwrap()
}

fn run_checked(sql: &str, cat: &Catalog, options: &CompileOptions) -> Table {
    let plan = parse_sql(sql).unwrap();
    let compiled = compile_query(&plan, cat, options).unwrap();
    let want = interpret(&plan, cat).unwrap();
    let adapters: [Arc<dyn EngineAdapter>; 2] = [Arc::new(WasmtimeAdapter::new(OptLevel::Fast)), Arc::new(WasmiAdapter::new())];
    let mut got = None;
    for a in adapters {
        let r = execute(&compiled, cat, a.as_ref()).unwrap();
        compare_results(&plan, cat, &want, &r.table).unwrap_or_else(|e| panic!("{}: {e}", a.name()));
        got = Some(r.table);
    }
    got.unwrap()
}

#[test]
fn filter_query_is_a_compact_loop_with_a_float_compare() {
    let cat = r_val();
    let options = CompileOptions { emit_wat: true, ..CompileOptions::default() };
    let q = compile(wasmql::bench::FILTER_SQL, &cat, &options);
    assert!(q.binary.len() <= 2048, "{} bytes", q.binary.len());
    let wat = q.wat.as_deref().unwrap();
    let lt = wat.find("f64.lt").expect("f64.lt in WAT");
    assert!(wat[..lt].contains("loop"), "f64.lt outside any loop:\n{wat}");

    let m = inspect(&q.binary);
    let in_loop = m.bodies.iter().any(|b| b.in_loop.iter().any(|o| o == "F64Lt"));
    assert!(in_loop, "binary has no f64.lt inside a loop");

    let t = run_checked(wasmql::bench::FILTER_SQL, &cat, &CompileOptions::default());
    // 0.0, 0.1, ..., 3.1 as computed in f64
    let below = (0..100).filter(|&i| (i as f64 * 0.1) < 3.14).count();
    assert_eq!(t.row_count(), below);
}

#[test]
fn unused_columns_are_never_touched() {
    let cat = r_val();
    let options = CompileOptions { emit_wat: true, ..CompileOptions::default() };
    let q = compile(wasmql::bench::FILTER_SQL, &cat, &options);
    let m = inspect(&q.binary);
    assert!(m.global_imports.iter().any(|g| g == "col_R_val"), "{:?}", m.global_imports);
    assert!(!m.global_imports.iter().any(|g| g.contains("other")), "{:?}", m.global_imports);
    assert!(!q.wat.unwrap().contains("other"));
    assert!(q.manifest.global("col_R_other").is_none());

    // Selecting the column brings its import and loads in.
    let q2 = compile("SELECT R.other FROM R WHERE R.val < 3.14", &cat, &options);
    let m2 = inspect(&q2.binary);
    let idx = m2.global_imports.iter().position(|g| g == "col_R_other").expect("imported") as u32;
    assert!(m2.bodies.iter().any(|b| b.global_gets.contains(&idx)));
}

fn fig2_fixture() -> Catalog {
    // R(x, id) and S(x, rid), four rows each.
    let r = table("R", &[("x", DataType::Int32), ("id", DataType::Int32)], "10,1\n50,2\n10,3\n30,4\n");
    let s = table("S", &[("x", DataType::Int32), ("rid", DataType::Int32)], "7,1\n3,1\n9,3\n5,4\n");
    catalog(vec![r, s])
}

#[test]
fn two_table_grouping_plan_has_three_pipelines_run_in_order() {
    let cat = fig2_fixture();
    let q = compile(wasmql::bench::FIG2_SQL, &cat, &CompileOptions::default());
    let m = inspect(&q.binary);
    assert_eq!(m.bodies.len(), 4, "three pipeline functions plus run");
    let run = m.body_of_export("run");
    let run_idx = m.export("run");
    let defined: Vec<u32> = (0..4).map(|i| i + m.imported_funcs).filter(|&f| f != run_idx).collect();
    assert_eq!(run.calls, defined, "run must call every pipeline once in order");
    for (i, b) in m.bodies.iter().enumerate() {
        if i as u32 + m.imported_funcs != run_idx {
            assert!(b.calls.iter().all(|&c| c < m.imported_funcs), "pipeline {i} calls a defined function");
        }
    }
}

#[test]
fn two_table_grouping_plan_matches_golden_result() {
    let cat = fig2_fixture();
    let golden = include_str!("golden/fig2.csv");
    let plan = parse_sql(wasmql::bench::FIG2_SQL).unwrap();
    for strategy in [JoinStrategy::Hash, JoinStrategy::NestedLoop] {
        let t = interpret_with(&plan, &cat, strategy).unwrap();
        assert_eq!(sorted_body(&t.to_csv()), sorted_body(golden), "{strategy:?}");
    }
    let t = run_checked(wasmql::bench::FIG2_SQL, &cat, &CompileOptions::default());
    assert_eq!(sorted_body(&t.to_csv()), sorted_body(golden));
    assert_eq!(t.to_csv().lines().next(), golden.lines().next());
}

fn sorted_body(csv: &str) -> Vec<&str> {
    let mut rows: Vec<&str> = csv.lines().skip(1).collect();
    rows.sort();
    rows
}

#[test]
fn order_by_two_keys_sorts_with_one_qsort() {
    let rows: String = (0..500).map(|i| format!("{},{}\n", (i * 7919) % 13, (i * 104729) % 101)).collect();
    let cat = catalog(vec![table("T", &[("a", DataType::Int32), ("b", DataType::Int64)], &rows)]);
    let sql = "SELECT T.a, T.b FROM T ORDER BY T.a DESC, T.b";
    let q = compile(sql, &cat, &CompileOptions::default());
    let m = inspect(&q.binary);
    // run, the fill pipeline, the output pipeline and qsort.
    assert_eq!(m.bodies.len(), 4);
    let self_calls: Vec<usize> = m
        .bodies
        .iter()
        .enumerate()
        .filter(|(i, b)| b.calls.contains(&(*i as u32 + m.imported_funcs)))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(self_calls.len(), 1, "exactly one recursive function");
    let qsort = self_calls[0] as u32 + m.imported_funcs;
    let callers = m.bodies.iter().filter(|b| b.calls.contains(&qsort)).count();
    assert_eq!(callers, 2, "qsort is called by itself and by the fill pipeline");
    let t = run_checked(sql, &cat, &CompileOptions::default());
    assert_eq!(t.row_count(), 500);
}

#[test]
fn conjunction_without_short_circuit_uses_integer_and() {
    let rows: String = (0..50).map(|i| format!("{},{}\n", i, 50 - i)).collect();
    let cat = catalog(vec![table("R", &[("x", DataType::Int32), ("y", DataType::Int32)], &rows)]);
    let sql = "SELECT COUNT(*) FROM R WHERE R.x < 42 AND R.y > 13";
    let never = CompileOptions { short_circuit: ShortCircuit::Never, ..CompileOptions::default() };
    let always = CompileOptions { short_circuit: ShortCircuit::Always, ..CompileOptions::default() };
    let m = inspect(&compile(sql, &cat, &never).binary);
    assert!(m.bodies.iter().any(|b| b.in_loop.iter().any(|o| o == "I32And")));
    let n_never = run_checked(sql, &cat, &never);
    let n_always = run_checked(sql, &cat, &always);
    assert_eq!(n_never.to_csv(), n_always.to_csv());
}

#[test]
fn malformed_sql_is_rejected_before_compilation() {
    let e = parse_sql("SELEC 1").unwrap_err();
    assert_eq!(e.offset, 0);
}
