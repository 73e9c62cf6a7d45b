//! Acceptance criteria 1 to 10. Each test writes one `criterion N: PASS|FAIL`
//! line to stdout (bypassing the test harness capture) before asserting.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasmparser::{Operator, Parser, Payload};
use wasmql::bench::{self, BenchConfig, Suite};
use wasmql::catalog::{Catalog, ColumnDef, DataType, Distribution, GenSpec, TableSchema};
use wasmql::codegen::kernels::{calls, export_body, hash_module, hash_slot_spec, home_bucket, sort_module, Kernel, DATA_BASE};
use wasmql::codegen::{OrderSpec, TupleLayout};
use wasmql::corpus::{compare_results, operator_kinds, random_catalog, CorpusConfig, PlanGen};
use wasmql::interp::interpret;
use wasmql::plan::{col, Direction};
use wasmql::query::{compile_query, CompileOptions};
use wasmql::runtime::{execute, OptLevel, WasmtimeAdapter};
use wasmql::sql::parse_sql;

fn report(n: u32, ok: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn adapter() -> WasmtimeAdapter {
    WasmtimeAdapter::new(OptLevel::Fast)
}

#[test]
fn criterion_01_differential_correctness() {
    let start = Instant::now();
    let cfg = CorpusConfig::default();
    assert!(cfg.max_rows <= 10_000 && cfg.max_depth <= 4);
    let (mut plans, mut failures, mut rejected) = (0, Vec::new(), 0);
    let mut kinds = HashSet::new();
    for seed in 0..10u64 {
        let cat = random_catalog(1000 + seed, &cfg);
        let mut gen = PlanGen::new(seed, &cat, cfg.clone());
        for _ in 0..30 {
            let plan = gen.plan();
            kinds.extend(operator_kinds(&plan));
            plans += 1;
            let want = interpret(&plan, &cat);
            let got = compile_query(&plan, &cat, &CompileOptions::default())
                .map_err(|e| e.to_string())
                .and_then(|q| execute(&q, &cat, &adapter()).map_err(|e| e.to_string()));
            let outcome = match (want, got) {
                (Ok(w), Ok(g)) => compare_results(&plan, &cat, &w, &g.table),
                // Both executors must reject the same plans, e.g. division by zero.
                (Err(_), Err(_)) => {
                    rejected += 1;
                    Ok(())
                }
                (w, g) => Err(format!("interpreter ok: {}, module ok: {}", w.is_ok(), g.is_ok())),
            };
            if let Err(e) = outcome {
                failures.push(format!("seed {seed}: {plan}: {e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let all_kinds = ["Scan", "Filter", "Project", "HashGroupBy", "HashJoin", "Sort"];
    let missing: Vec<_> = all_kinds.iter().filter(|k| !kinds.contains(**k)).collect();
    let ok = plans == 300 && failures.is_empty() && missing.is_empty() && elapsed <= Duration::from_secs(180) && rejected * 10 < plans;
    report(
        1,
        ok,
        &format!(
            "{plans} plans, {} mismatches, {rejected} rejected by both, missing operators {missing:?}, {:.1}s",
            failures.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok, "{failures:#?}");
}

fn xyz() -> TupleLayout {
    TupleLayout::new(&[
        ("R".into(), "x".into(), DataType::Int32),
        ("R".into(), "y".into(), DataType::Int32),
        ("R".into(), "z".into(), DataType::Int64),
    ])
}

type Row = (i32, i32, i64);

fn encode(layout: &TupleLayout, rows: &[Row]) -> Vec<u8> {
    let s = layout.stride as usize;
    let [fx, fy, fz] = [0, 1, 2].map(|i| layout.fields[i].offset as usize);
    let mut out = vec![0u8; rows.len() * s];
    for (i, &(x, y, z)) in rows.iter().enumerate() {
        let t = &mut out[i * s..];
        t[fx..fx + 4].copy_from_slice(&x.to_le_bytes());
        t[fy..fy + 4].copy_from_slice(&y.to_le_bytes());
        t[fz..fz + 8].copy_from_slice(&z.to_le_bytes());
    }
    out
}

fn decode(layout: &TupleLayout, bytes: &[u8]) -> Vec<Row> {
    let [fx, fy, fz] = [0, 1, 2].map(|i| layout.fields[i].offset as usize);
    bytes
        .chunks(layout.stride as usize)
        .map(|t| {
            (
                i32::from_le_bytes(t[fx..fx + 4].try_into().unwrap()),
                i32::from_le_bytes(t[fy..fy + 4].try_into().unwrap()),
                i64::from_le_bytes(t[fz..fz + 8].try_into().unwrap()),
            )
        })
        .collect()
}

/// Sort keys of the tests: a column or the sum `R.x + R.y`.
#[derive(Clone, Copy, Debug)]
enum Key {
    X,
    Y,
    Z,
    XPlusY,
}

fn key_value(k: Key, r: &Row) -> i64 {
    match k {
        Key::X => r.0 as i64,
        Key::Y => r.1 as i64,
        Key::Z => r.2,
        Key::XPlusY => r.0.wrapping_add(r.1) as i64,
    }
}

fn spec(keys: &[(Key, Direction)]) -> OrderSpec {
    let expr = |k| match k {
        Key::X => col("R", "x"),
        Key::Y => col("R", "y"),
        Key::Z => col("R", "z"),
        Key::XPlusY => col("R", "x").add(col("R", "y")),
    };
    OrderSpec::new(keys.iter().map(|&(k, d)| (expr(k), d)).collect(), xyz()).unwrap()
}

/// Lexicographic oracle: the tuple of key values, negated where descending.
fn oracle_less(keys: &[(Key, Direction)], a: &Row, b: &Row) -> bool {
    let project = |r: &Row| -> Vec<i128> {
        keys.iter()
            .map(|&(k, d)| {
                let v = key_value(k, r) as i128;
                if d == Direction::Desc { -v } else { v }
            })
            .collect()
    };
    project(a) < project(b)
}

fn kernel_less(k: &mut Kernel, a: &Row, b: &Row) -> bool {
    let layout = xyz();
    k.write(DATA_BASE, &encode(&layout, &[*a, *b]));
    k.set_arg(0, DATA_BASE);
    k.set_arg(1, DATA_BASE + layout.stride);
    k.call("compare").unwrap();
    k.arg(2) == 1
}

#[test]
fn criterion_02_compare_encoding() {
    let mut mismatches = 0;
    let mut checked = 0;
    let dirs = [Direction::Asc, Direction::Desc];

    // Exhaustive: 2-key tuples over {-1, 0, 1}.
    let keys2 = [(Key::X, Direction::Asc), (Key::Y, Direction::Asc)];
    let mut k = Kernel::new(sort_module(&spec(&keys2), 1).unwrap(), &adapter(), 1).unwrap();
    let domain: Vec<Row> = (-1..=1).flat_map(|x| (-1..=1).map(move |y| (x, y, 0))).collect();
    for a in &domain {
        for b in &domain {
            checked += 1;
            mismatches += (kernel_less(&mut k, a, b) != oracle_less(&keys2, a, b)) as u32;
        }
    }
    let exhaustive = checked;

    // Random 3-key pairs under every direction combination.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for mask in 0..8 {
        let keys: Vec<_> = [Key::X, Key::Y, Key::Z].iter().enumerate().map(|(i, &c)| (c, dirs[(mask >> i) & 1])).collect();
        let mut k = Kernel::new(sort_module(&spec(&keys), 1).unwrap(), &adapter(), 1).unwrap();
        for _ in 0..1250 {
            let row = |rng: &mut ChaCha8Rng| -> Row {
                if rng.gen_bool(0.5) {
                    (rng.gen_range(-1..=1), rng.gen_range(-1..=1), rng.gen_range(-1..=1))
                } else {
                    (rng.gen(), rng.gen(), rng.gen())
                }
            };
            let (a, b) = (row(&mut rng), row(&mut rng));
            checked += 1;
            mismatches += (kernel_less(&mut k, &a, &b) != oracle_less(&keys, &a, &b)) as u32;
        }
    }
    let ok = exhaustive == 81 && checked == 10_081 && mismatches == 0;
    report(2, ok, &format!("{exhaustive} exhaustive + {} random pairs, {mismatches} mismatches", checked - exhaustive));
    assert!(ok);
}

/// `n` rows where each row repeats an earlier one with probability `dup`.
fn rows_with_duplicates(rng: &mut ChaCha8Rng, n: usize, dup: f64) -> Vec<Row> {
    let mut rows: Vec<Row> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.gen_bool(dup) {
            let j = rng.gen_range(0..i);
            rows.push(rows[j]);
        } else {
            rows.push((rng.gen_range(-1000..1000), rng.gen_range(-1000..1000), rng.gen()));
        }
    }
    rows
}

fn sorted(mut v: Vec<Row>) -> Vec<Row> {
    v.sort();
    v
}

#[test]
fn criterion_03_partition_property() {
    let keys = [(Key::X, Direction::Asc), (Key::Z, Direction::Desc)];
    let layout = xyz();
    let s = layout.stride;
    let mut k = Kernel::new(sort_module(&spec(&keys), 2).unwrap(), &adapter(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let n = if case < 4 { case * 1365 } else { rng.gen_range(0..=4096) };
        let dup = (case % 11) as f64 / 10.0;
        let rows = if case % 11 == 10 { vec![(5, 5, 5); n] } else { rows_with_duplicates(&mut rng, n, dup) };
        let pivot = if !rows.is_empty() && rng.gen_bool(0.5) { rows[rng.gen_range(0..rows.len())] } else { (0, 0, 0) };
        let begin = DATA_BASE + s;
        k.write(DATA_BASE, &encode(&layout, &[pivot]));
        k.write(begin, &encode(&layout, &rows));
        k.set_arg(0, begin);
        k.set_arg(1, begin + n as u32 * s);
        k.set_arg(2, DATA_BASE);
        k.call("partition").unwrap();
        let split = ((k.arg(3) - begin) / s) as usize;
        let out = decode(&layout, &k.read(begin, n as u32 * s));
        let left_ok = out[..split].iter().all(|r| oracle_less(&keys, r, &pivot));
        let right_ok = out[split..].iter().all(|r| !oracle_less(&keys, r, &pivot));
        if !(left_ok && right_ok && sorted(out) == sorted(rows)) {
            failures.push(case);
        }
    }
    let ok = failures.is_empty();
    report(3, ok, &format!("1000 arrays (sizes 0-4096, duplicate rates 0-100%, all-equal included), failures {failures:?}"));
    assert!(ok);
}

fn check_sort(k: &mut Kernel, keys: &[(Key, Direction)], rows: &[Row]) -> bool {
    let layout = xyz();
    let s = layout.stride;
    k.write(DATA_BASE, &encode(&layout, rows));
    k.set_arg(0, DATA_BASE);
    k.set_arg(1, DATA_BASE + rows.len() as u32 * s);
    k.call("sort").unwrap();
    let out = decode(&layout, &k.read(DATA_BASE, rows.len() as u32 * s));
    let is_sorted = out.windows(2).all(|w| !oracle_less(keys, &w[1], &w[0]));
    is_sorted && sorted(out) == sorted(rows.to_vec())
}

#[test]
fn criterion_04_quicksort_property() {
    let key_sets: [&[(Key, Direction)]; 4] = [
        &[(Key::X, Direction::Asc)],
        &[(Key::Y, Direction::Desc), (Key::X, Direction::Asc)],
        &[(Key::X, Direction::Asc), (Key::Y, Direction::Desc), (Key::Z, Direction::Asc)],
        &[(Key::XPlusY, Direction::Asc), (Key::Z, Direction::Asc)],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut runs, mut failures) = (0, Vec::new());
    for keys in key_sets {
        let mut k = Kernel::new(sort_module(&spec(keys), 32).unwrap(), &adapter(), 32).unwrap();
        for n in [0usize, 1, 2, 3, 10, 1000, 10_000, 100_000] {
            for dup in [0.0, 0.5, 0.99] {
                let rows = rows_with_duplicates(&mut rng, n, dup);
                runs += 1;
                if !check_sort(&mut k, keys, &rows) {
                    failures.push((keys.len(), n, dup));
                }
            }
        }
        let mut asc = rows_with_duplicates(&mut rng, 100_000, 0.0);
        asc.sort_by_key(|r| key_value(keys[0].0, r));
        for rows in [asc.clone(), asc.into_iter().rev().collect(), vec![(1, 2, 3); 100_000]] {
            runs += 1;
            if !check_sort(&mut k, keys, &rows) {
                failures.push((keys.len(), rows.len(), -1.0));
            }
        }
    }
    let ok = failures.is_empty();
    report(4, ok, &format!("{runs} sorts up to 100000 tuples with 1-3 keys incl. [R.x+R.y, R.z], failures {failures:?}"));
    assert!(ok);
}

#[test]
fn criterion_05_hash_table_property() {
    let spec = hash_slot_spec(&[DataType::Int64], 8);
    let (stride, k_off, n_off) = (spec.stride(), spec.slot.fields[0].offset as usize, spec.slot.fields[1].offset as usize);
    let pages = 64;
    let mut k = Kernel::new(hash_module(&[DataType::Int64], 8, 4096, pages).unwrap(), &adapter(), pages).unwrap();
    k.call("init").unwrap();

    // Random keys plus keys sharing their home bucket in every table of up
    // to 4096 slots.
    let target = home_bucket(&0i64.to_le_bytes(), 4096);
    let colliding: Vec<i64> = (1i64..).filter(|x| home_bucket(&x.to_le_bytes(), 4096) == target).take(64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut keys: Vec<i64> = (0..5000).map(|_| rng.gen_range(-2000..2000)).collect();
    keys.extend(colliding.iter().flat_map(|&c| [c, c]));
    let mut oracle: HashMap<i64, u32> = HashMap::new();
    let mut growths = 0;
    let mut cap = k.arg(4);
    for key in keys {
        k.write(DATA_BASE, &key.to_le_bytes());
        k.set_arg(0, DATA_BASE);
        k.call("upsert").unwrap();
        *oracle.entry(key).or_default() += 1;
        if k.arg(4) != cap {
            growths += 1;
            cap = k.arg(4);
        }
    }
    let out = 3 << 20;
    k.set_arg(0, out);
    k.call("dump").unwrap();
    let slots = k.arg(1);
    let stored: HashMap<i64, u32> = k
        .read(out, slots * stride)
        .chunks(stride as usize)
        .map(|s| {
            let key = i64::from_le_bytes(s[k_off..k_off + 8].try_into().unwrap());
            (key, i64::from_le_bytes(s[n_off..n_off + 8].try_into().unwrap()) as u32)
        })
        .collect();
    let ok = growths >= 2 && stored == oracle && slots as usize == oracle.len();
    report(
        5,
        ok,
        &format!("{} distinct keys ({} bucket-colliding), {growths} growth cycles, final capacity {cap}, stored set equals map: {}", oracle.len(), colliding.len(), stored == oracle),
    );
    assert!(ok);
}

#[test]
fn criterion_06_chunk_invariance() {
    let schema = TableSchema::new("T", vec![ColumnDef::new("v", DataType::Int64)]).unwrap();
    let t = wasmql::catalog::generate(
        &schema,
        &GenSpec { rows: 1 << 17, columns: vec![Distribution::UniformInt { lo: 0, hi: 9_999 }], seed: 6 },
    )
    .unwrap();
    assert_eq!(t.row_count() * 8, 1 << 20);
    let mut cat = Catalog::new();
    cat.register(t).unwrap();
    let queries = [
        "SELECT COUNT(*), SUM(T.v), MIN(T.v) FROM T WHERE T.v > 100",
        "SELECT T.v / 100, COUNT(*) FROM T GROUP BY T.v / 100",
        "SELECT T.v FROM T WHERE T.v < 30 ORDER BY T.v",
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for sql in queries {
        let plan = parse_sql(sql).unwrap();
        let mut results = Vec::new();
        let mut chunks = Vec::new();
        for window in [Some(64u64 << 10), Some(128 << 10), None] {
            let options = CompileOptions { window_bytes: window, ..CompileOptions::default() };
            let r = execute(&compile_query(&plan, &cat, &options).unwrap(), &cat, &adapter()).unwrap();
            chunks.push(r.counters.chunks_served);
            results.push(r.table);
        }
        let same = results.iter().all(|t| compare_results(&plan, &cat, &results[2], t).is_ok());
        let counts_ok = chunks.iter().zip([16u64, 8, 0]).all(|(&c, want)| c.abs_diff(want) <= 1);
        ok &= same && counts_ok;
        notes.push(format!("{chunks:?}"));
    }
    report(6, ok, &format!("1 MiB table, windows 64K/128K/inf, chunks served per query {}", notes.join(" ")));
    assert!(ok);
}

fn median_codegen_us(sql: &str, cat: &Catalog) -> f64 {
    let plan = parse_sql(sql).unwrap();
    let options = CompileOptions::default();
    let mut samples = Vec::new();
    for _ in 0..51 {
        let t = Instant::now();
        let q = compile_query(&plan, cat, &options).unwrap();
        samples.push(t.elapsed().as_secs_f64() * 1e6);
        assert!(q.stats.codegen_us > 0.0);
    }
    bench::median(&samples)
}

#[test]
fn criterion_07_codegen_latency() {
    let mut cat = Catalog::new();
    cat.register(bench::lineitem(1000, 1)).unwrap();
    let q1 = median_codegen_us(bench::TPCH_Q1_SQL, &cat);
    let fig2 = median_codegen_us(bench::FIG2_SQL, &bench::fig2_catalog(1000, 1).unwrap());
    let ok = q1 <= 5000.0 && fig2 <= 5000.0;
    report(7, ok, &format!("median compile_query: Q1-shaped {q1:.0} us, two-table grouping {fig2:.0} us (bound 5000 us)"));
    assert!(ok);
}

#[test]
fn criterion_08_module_compactness() {
    let schema = TableSchema::new("R", vec![ColumnDef::new("val", DataType::Float64)]).unwrap();
    let t = wasmql::catalog::generate(&schema, &GenSpec { rows: 1000, columns: vec![Distribution::UniformFloat01], seed: 8 }).unwrap();
    let mut cat = Catalog::new();
    cat.register(t).unwrap();
    let q = compile_query(&parse_sql(bench::FILTER_SQL).unwrap(), &cat, &CompileOptions::default()).unwrap();
    let ok = q.binary.len() <= 2048;
    report(8, ok, &format!("filter query module is {} bytes (bound 2048)", q.binary.len()));
    assert!(ok);
}

/// Per defined function: the call targets in its body.
fn binary_calls(bytes: &[u8]) -> (u32, Vec<Vec<u32>>) {
    let (mut imported, mut bodies) = (0, Vec::new());
    for payload in Parser::new(0).parse_all(bytes) {
        match payload.unwrap() {
            Payload::ImportSection(r) => {
                imported += r.into_imports().filter(|i| matches!(i.as_ref().unwrap().ty, wasmparser::TypeRef::Func(_))).count() as u32;
            }
            Payload::CodeSectionEntry(body) => {
                let calls = body
                    .get_operators_reader()
                    .unwrap()
                    .into_iter()
                    .filter_map(|op| match op.unwrap() {
                        Operator::Call { function_index } => Some(function_index),
                        _ => None,
                    })
                    .collect();
                bodies.push(calls);
            }
            _ => {}
        }
    }
    (imported, bodies)
}

#[test]
fn criterion_09_inlining() {
    let order = spec(&[(Key::XPlusY, Direction::Asc), (Key::Z, Direction::Desc)]);
    let m = sort_module(&order, 1).unwrap();
    let helpers_inline = ["swap", "compare", "partition", "median"].iter().all(|n| calls(export_body(&m, n).unwrap()).is_empty());
    let qsort = m.exports.iter().find(|(n, _)| n == "qsort").unwrap().1;
    let one_self_call = calls(export_body(&m, "qsort").unwrap()) == vec![qsort];

    // The same shape inside a compiled query, read back from the binary.
    let mut cat = Catalog::new();
    cat.register(bench::lineitem(100, 1)).unwrap();
    let q = compile_query(&parse_sql(bench::TPCH_Q1_SQL).unwrap(), &cat, &CompileOptions::default()).unwrap();
    let (imported, bodies) = binary_calls(&q.binary);
    let recursive: Vec<usize> = (0..bodies.len()).filter(|&i| bodies[i].contains(&(i as u32 + imported))).collect();
    let query_ok = recursive.len() == 1 && bodies[recursive[0]].len() == 1;
    let ok = helpers_inline && one_self_call && query_ok;
    report(
        9,
        ok,
        &format!("swap/compare/partition/median call-free: {helpers_inline}; qsort single self-call: {one_self_call}; Q1 module: {query_ok}"),
    );
    assert!(ok);
}

#[test]
fn criterion_10_selectivity_shape_soft() {
    let cfg = BenchConfig { rows: 1_000_000, reps: 5, opt: OptLevel::Full, ..BenchConfig::default() };
    let r = bench::run_suite(Suite::Selectivity, &cfg).unwrap();
    let at = |p: &str| r.rows.iter().find(|x| x.parameter == p).unwrap().exec_us;
    let (lo, mid, hi) = (at("sel=1%"), at("sel=50%"), at("sel=99%"));
    let shape = mid >= lo && mid >= hi;
    let flag = if shape { "shape as expected" } else { "FLAGGED: 50% is not the slowest (hardware dependent, not gating)" };
    report(10, true, &format!("t_exec 1%={lo:.0}us 50%={mid:.0}us 99%={hi:.0}us; {flag}"));
}
