//! Desk-scale benchmark suites. Every query is first checked against the
//! reference interpreter; timings are only recorded for correct results.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, ColumnDef, DataType, Distribution, GenSpec, Table, TableSchema, Value};
use crate::corpus::compare_results;
use crate::interp::{interpret, EvalError};
use crate::plan::PlanNode;
use crate::query::{compile_query, CompileError, CompileOptions};
use crate::runtime::{execute, EngineKind, OptLevel, RuntimeError};
use crate::sql::{parse_sql, SqlError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("reference interpreter: {0}")]
    Eval(#[from] EvalError),
    #[error("{query} ({parameter}): result differs from the reference interpreter: {detail}")]
    Mismatch { query: String, parameter: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Selectivity,
    ConjSelectivity,
    GroupBy,
    Aggregates,
    Join,
    Sort,
    Tpch,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Selectivity,
        Suite::ConjSelectivity,
        Suite::GroupBy,
        Suite::Aggregates,
        Suite::Join,
        Suite::Sort,
        Suite::Tpch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Selectivity => "selectivity",
            Suite::ConjSelectivity => "conj-selectivity",
            Suite::GroupBy => "groupby",
            Suite::Aggregates => "aggregates",
            Suite::Join => "join",
            Suite::Sort => "sort",
            Suite::Tpch => "tpch",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
            format!("unknown suite `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Rows of the main table of each suite.
    pub rows: usize,
    /// Repetitions per measurement; the median is reported.
    pub reps: usize,
    pub seed: u64,
    pub engine: EngineKind,
    pub opt: OptLevel,
    pub options: CompileOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            rows: 1_000_000,
            reps: 5,
            seed: 42,
            engine: EngineKind::Wasmtime,
            opt: OptLevel::Full,
            options: CompileOptions::default(),
        }
    }
}

/// One measured `(query, parameter)` point; times are medians in microseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub suite: String,
    pub query: String,
    pub parameter: String,
    pub codegen_us: f64,
    pub engine_compile_us: f64,
    pub exec_us: f64,
    pub result_rows: usize,
    pub binary_bytes: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

pub const CSV_HEADER: &str = "suite,query,parameter,t_codegen_us,t_engine_compile_us,t_exec_us,result_rows,binary_bytes";

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.1},{:.1},{:.1},{},{}\n",
                r.suite, r.query, r.parameter, r.codegen_us, r.engine_compile_us, r.exec_us, r.result_rows, r.binary_bytes
            ));
        }
        out
    }
}

/// Median of a non-empty sample.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Thresholds of the selectivity sweeps, in percent.
pub const SELECTIVITIES: [u32; 11] = [1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 99];

pub const FIG2_SQL: &str = "SELECT R.x, MIN(S.x) FROM R, S WHERE R.x < 42 AND R.id = S.rid GROUP BY R.x";
pub const FILTER_SQL: &str = "SELECT 1 FROM R WHERE R.val < 3.14";

pub const TPCH_Q1_SQL: &str = "SELECT l_returnflag, l_linestatus, SUM(l_quantity), SUM(l_extendedprice), \
     SUM(l_extendedprice * (1.0 - l_discount)), SUM(l_extendedprice * (1.0 - l_discount) * (1.0 + l_tax)), \
     AVG(l_quantity), AVG(l_extendedprice), AVG(l_discount), COUNT(*) \
     FROM lineitem WHERE l_shipdate <= 10471 \
     GROUP BY l_returnflag, l_linestatus ORDER BY l_returnflag, l_linestatus";

pub const TPCH_Q6_SQL: &str = "SELECT SUM(l_extendedprice * l_discount) FROM lineitem \
     WHERE l_shipdate >= 8766 AND l_shipdate < 9131 AND l_discount >= 0.05 AND l_discount <= 0.07 \
     AND l_quantity < 24.0";

fn schema(name: &str, cols: &[(&str, DataType)]) -> TableSchema {
    TableSchema::new(name, cols.iter().map(|&(n, t)| ColumnDef::new(n, t)).collect()).expect("valid schema")
}

fn uniform(lo: i64, hi: i64) -> Distribution {
    Distribution::UniformInt { lo, hi }
}

fn generated(name: &str, cols: &[(&str, DataType, Distribution)], rows: usize, seed: u64) -> Result<Table, CatalogError> {
    let s = schema(name, &cols.iter().map(|(n, t, _)| (*n, *t)).collect::<Vec<_>>());
    crate::catalog::generate(&s, &GenSpec { rows, columns: cols.iter().map(|c| c.2.clone()).collect(), seed })
}

fn catalog_of(tables: Vec<Table>) -> Result<Catalog, CatalogError> {
    let mut c = Catalog::new();
    for t in tables {
        c.register(t)?;
    }
    Ok(c)
}

/// `lineitem` with the columns Q1 and Q6 touch. Dates are days since
/// 1970-01-01 between 1992-01-02 and 1998-12-01.
pub fn lineitem(rows: usize, seed: u64) -> Table {
    let s = schema(
        "lineitem",
        &[
            ("l_quantity", DataType::Float64),
            ("l_extendedprice", DataType::Float64),
            ("l_discount", DataType::Float64),
            ("l_tax", DataType::Float64),
            ("l_returnflag", DataType::Char(1)),
            ("l_linestatus", DataType::Char(1)),
            ("l_shipdate", DataType::Int32),
        ],
    );
    let mut t = Table::new(s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flag = |c: u8| Value::Char(Box::new([c]));
    for _ in 0..rows {
        let qty = rng.gen_range(1..=50) as f64;
        let row = [
            Value::Float64(qty),
            Value::Float64(qty * rng.gen_range(900.0..10_500.0f64).round()),
            Value::Float64(rng.gen_range(0..=10) as f64 / 100.0),
            Value::Float64(rng.gen_range(0..=8) as f64 / 100.0),
            flag(b"ANR"[rng.gen_range(0..3)]),
            flag(b"FO"[rng.gen_range(0..2)]),
            Value::Int32(rng.gen_range(8036..=10561)),
        ];
        t.push_row(&row).expect("row matches schema");
    }
    t
}

/// `R(x, id)` and `S(x, rid)` for the two-table grouping example, with
/// every `S.rid` referencing some `R.id`.
pub fn fig2_catalog(rows: usize, seed: u64) -> Result<Catalog, CatalogError> {
    let n = rows.max(1) as i64;
    let r = generated("R", &[("x", DataType::Int32, uniform(0, 99)), ("id", DataType::Int32, Distribution::Sequential)], rows, seed)?;
    let s = generated("S", &[("x", DataType::Int32, uniform(0, 999)), ("rid", DataType::Int32, uniform(0, n - 1))], rows, seed + 1)?;
    catalog_of(vec![r, s])
}

struct Runner<'a> {
    cfg: &'a BenchConfig,
    report: BenchReport,
    suite: Suite,
}

impl Runner<'_> {
    fn measure(&mut self, query: &str, parameter: String, catalog: &Catalog, sql: &str) -> Result<(), BenchError> {
        let plan: PlanNode = parse_sql(sql)?;
        let adapter = self.cfg.engine.adapter(self.cfg.opt);
        let compiled = compile_query(&plan, catalog, &self.cfg.options)?;
        let first = execute(&compiled, catalog, adapter.as_ref())?;
        let expected = interpret(&plan, catalog)?;
        compare_results(&plan, catalog, &expected, &first.table).map_err(|detail| BenchError::Mismatch {
            query: query.into(),
            parameter: parameter.clone(),
            detail,
        })?;
        let (mut cg, mut ec, mut ex) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..self.cfg.reps.max(1) {
            let compiled = compile_query(&plan, catalog, &self.cfg.options)?;
            let r = execute(&compiled, catalog, adapter.as_ref())?;
            cg.push(compiled.stats.codegen_us);
            ec.push(r.timings.engine_compile_us);
            ex.push(r.timings.exec_us);
        }
        self.report.rows.push(BenchRow {
            suite: self.suite.name().into(),
            query: query.into(),
            parameter,
            codegen_us: median(&cg),
            engine_compile_us: median(&ec),
            exec_us: median(&ex),
            result_rows: first.table.row_count(),
            binary_bytes: compiled.binary.len(),
        });
        Ok(())
    }
}

/// Generates the suite's data, runs its parameter grid and returns one row
/// per point.
pub fn run_suite(suite: Suite, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let mut run = Runner { cfg, report: BenchReport::default(), suite };
    let (n, seed) = (cfg.rows, cfg.seed);
    let i32t = DataType::Int32;
    let i64t = DataType::Int64;
    match suite {
        Suite::Selectivity => {
            let cat = catalog_of(vec![generated("T", &[("x", i32t, uniform(0, 99))], n, seed)?])?;
            for p in SELECTIVITIES {
                let sql = format!("SELECT COUNT(*) FROM T WHERE T.x < {p}");
                run.measure("count_lt", format!("sel={p}%"), &cat, &sql)?;
            }
        }
        Suite::ConjSelectivity => {
            let cat = catalog_of(vec![generated("T", &[("x", i32t, uniform(0, 99)), ("y", i32t, uniform(0, 99))], n, seed)?])?;
            for p in SELECTIVITIES {
                let sql = format!("SELECT COUNT(*) FROM T WHERE T.x < {p} AND T.y < {p}");
                run.measure("count_lt_and", format!("sel={p}%"), &cat, &sql)?;
            }
        }
        Suite::GroupBy => {
            for d in [1usize, 10, 100, 1_000, 10_000, 100_000].into_iter().filter(|&d| d <= n.max(1)) {
                let t = generated("T", &[("g", i32t, uniform(0, d as i64 - 1)), ("v", i64t, uniform(0, 1000))], n, seed)?;
                let cat = catalog_of(vec![t])?;
                run.measure("group_count_sum", format!("groups={d}"), &cat, "SELECT T.g, COUNT(*), SUM(T.v) FROM T GROUP BY T.g")?;
            }
        }
        Suite::Aggregates => {
            let mut cols = vec![("g", i32t, uniform(0, 99))];
            let names = ["a1", "a2", "a3", "a4", "a5"];
            cols.extend(names.iter().map(|&a| (a, i64t, uniform(-1000, 1000))));
            let cat = catalog_of(vec![generated("T", &cols, n, seed)?])?;
            for k in 1..=names.len() {
                let sums: Vec<_> = names[..k].iter().map(|a| format!("SUM(T.{a})")).collect();
                let sql = format!("SELECT T.g, {} FROM T GROUP BY T.g", sums.join(", "));
                run.measure("group_sums", format!("aggregates={k}"), &cat, &sql)?;
            }
        }
        Suite::Join => {
            for build in [n / 100, n / 10, n].into_iter().filter(|&b| b > 0) {
                let r = generated("R", &[("id", i32t, Distribution::Sequential), ("p", i64t, uniform(0, 1000))], build, seed)?;
                let s = generated("S", &[("rid", i32t, uniform(0, build as i64 - 1)), ("q", i64t, uniform(0, 1000))], n, seed + 1)?;
                let cat = catalog_of(vec![r, s])?;
                let sql = "SELECT COUNT(*), SUM(S.q) FROM R, S WHERE R.id = S.rid";
                run.measure("equi_join", format!("build_rows={build}"), &cat, sql)?;
            }
        }
        Suite::Sort => {
            let cols = [("a", i32t, uniform(0, n as i64)), ("b", i64t, uniform(0, 100)), ("c", DataType::Float64, Distribution::UniformFloat01)];
            let cat = catalog_of(vec![generated("T", &cols, n, seed)?])?;
            run.measure("order_by", "keys=1".into(), &cat, "SELECT T.a, T.b FROM T ORDER BY T.a")?;
            run.measure("order_by", "keys=2".into(), &cat, "SELECT T.a, T.b FROM T ORDER BY T.b DESC, T.a")?;
        }
        Suite::Tpch => {
            let cat = catalog_of(vec![lineitem(n, seed)])?;
            run.measure("q1", format!("rows={n}"), &cat, TPCH_Q1_SQL)?;
            run.measure("q6", format!("rows={n}"), &cat, TPCH_Q6_SQL)?;
        }
    }
    Ok(run.report)
}
