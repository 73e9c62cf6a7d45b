use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wasmql::bench::{run_suite, BenchConfig, Suite};
use wasmql::catalog::{Catalog, ColumnDef, DataType, Table, TableSchema};
use wasmql::query::{compile_query, CompileError, CompileOptions, FilterStyle};
use wasmql::runtime::{execute, EngineKind, OptLevel, RuntimeError};
use wasmql::sql::parse_sql;

/// Compiles SQL queries to WebAssembly and runs them.
#[derive(Debug, Parser)]
#[command(name = "wasmql", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs the query in a file and prints its result.
    Exec(ExecArgs),
    /// Runs a benchmark suite and writes CSV timings.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Opt {
    Fast,
    Full,
}

impl From<Opt> for OptLevel {
    fn from(o: Opt) -> OptLevel {
        match o {
            Opt::Fast => OptLevel::Fast,
            Opt::Full => OptLevel::Full,
        }
    }
}

#[derive(Debug, clap::Args)]
struct ExecArgs {
    /// File holding one SELECT statement.
    file: PathBuf,
    /// Registers a table from a CSV file whose header is `column:TYPE,...`.
    #[arg(long = "table", value_name = "NAME=PATH")]
    tables: Vec<String>,
    /// Registers a generated `lineitem` table with this many rows.
    #[arg(long, value_name = "ROWS")]
    lineitem: Option<usize>,
    /// Writes the module as WebAssembly text to stderr.
    #[arg(long)]
    dump_wat: bool,
    /// Compiles filters under ungrouped aggregates without branches.
    #[arg(long)]
    branchless_filter: bool,
    /// Maps tables larger than this many bytes one window at a time.
    #[arg(long, value_name = "N")]
    window_bytes: Option<u64>,
    #[arg(long, value_enum, default_value = "full")]
    engine_opt: Opt,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    /// One of selectivity, conj-selectivity, groupby, aggregates, join, sort, tpch.
    suite: String,
    /// Rows of each suite's main table.
    #[arg(long, default_value_t = 1_000_000)]
    rows: usize,
    /// Repetitions per point; the median is reported.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "full")]
    engine_opt: Opt,
    #[arg(long)]
    branchless_filter: bool,
    /// Writes the CSV here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// A message and the exit code it maps to: 1 for user errors, 2 for
/// internal ones.
struct Failure {
    code: u8,
    message: String,
}

fn user(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn internal(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn compile_failure(e: CompileError) -> Failure {
    match e {
        CompileError::Plan(_) | CompileError::Memory(_) => user(e.to_string()),
        _ => internal(e.to_string()),
    }
}

fn runtime_failure(e: RuntimeError) -> Failure {
    match e {
        // Division by zero and heap or sort-array limits surface as traps.
        RuntimeError::Trap(_) => user(format!("query aborted: {e}")),
        _ => internal(e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Exec(args) => exec(args),
        Command::Bench(args) => bench(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn engine() -> Result<EngineKind, Failure> {
    EngineKind::from_env().map_err(|e| user(e.to_string()))
}

fn load_table(spec: &str) -> Result<Table, Failure> {
    let (name, path) = spec.split_once('=').ok_or_else(|| user(format!("--table expects NAME=PATH, got `{spec}`")))?;
    let text = std::fs::read_to_string(path).map_err(|e| user(format!("{path}: {e}")))?;
    let (header, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let columns = header
        .trim_end_matches('\r')
        .split(',')
        .map(|c| {
            let (col, ty) = c.split_once(':').ok_or_else(|| user(format!("{path}: header column `{c}` lacks `:TYPE`")))?;
            let ty: DataType = ty.parse().map_err(|e| user(format!("{path}: {e}")))?;
            Ok(ColumnDef::new(col.trim(), ty))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let schema = TableSchema::new(name, columns).map_err(|e| user(format!("{path}: {e}")))?;
    let mut table = Table::new(schema);
    table.ingest_csv(body, false).map_err(|e| user(format!("{path}: {e}")))?;
    Ok(table)
}

fn render_table(t: &Table) -> String {
    let header: Vec<String> = t.schema().columns.iter().map(|c| c.name.clone()).collect();
    let rows: Vec<Vec<String>> = t.rows().map(|r| r.iter().map(|v| v.to_text()).collect()).collect();
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out.push_str(&format!("({} rows)\n", rows.len()));
    out
}

fn exec(args: ExecArgs) -> Result<(), Failure> {
    let sql = read(&args.file)?;
    let plan = parse_sql(&sql).map_err(|e| user(e.to_string()))?;
    let mut catalog = Catalog::new();
    for spec in &args.tables {
        catalog.register(load_table(spec)?).map_err(|e| user(e.to_string()))?;
    }
    if let Some(rows) = args.lineitem {
        catalog.register(wasmql::bench::lineitem(rows, 42)).map_err(|e| user(e.to_string()))?;
    }
    let options = CompileOptions {
        filter_style: if args.branchless_filter { FilterStyle::Branchless } else { FilterStyle::Branching },
        window_bytes: args.window_bytes,
        emit_wat: args.dump_wat,
        ..CompileOptions::default()
    };
    let compiled = compile_query(&plan, &catalog, &options).map_err(compile_failure)?;
    if let Some(wat) = &compiled.wat {
        eprintln!("{wat}");
    }
    let adapter = engine()?.adapter(args.engine_opt.into());
    let r = execute(&compiled, &catalog, adapter.as_ref()).map_err(runtime_failure)?;
    match args.format {
        Format::Table => print!("{}", render_table(&r.table)),
        Format::Csv => print!("{}", r.table.to_csv()),
    }
    eprintln!(
        "{} rows; codegen {:.1} us, engine compile {:.1} us, exec {:.1} us; {} bytes; {} chunks, {} flushes ({})",
        r.table.row_count(),
        r.timings.codegen_us,
        r.timings.engine_compile_us,
        r.timings.exec_us,
        compiled.binary.len(),
        r.counters.chunks_served,
        r.counters.result_flushes,
        adapter.name(),
    );
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let suite: Suite = args.suite.parse().map_err(user)?;
    if args.rows == 0 || args.reps == 0 {
        return Err(user("--rows and --reps must be positive"));
    }
    let cfg = BenchConfig {
        rows: args.rows,
        reps: args.reps,
        seed: args.seed,
        engine: engine()?,
        opt: args.engine_opt.into(),
        options: CompileOptions {
            filter_style: if args.branchless_filter { FilterStyle::Branchless } else { FilterStyle::Branching },
            ..CompileOptions::default()
        },
    };
    let report = run_suite(suite, &cfg).map_err(|e| internal(e.to_string()))?;
    let csv = report.to_csv();
    match &args.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| user(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(())
}
