use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Workspace {
        let ws = Workspace { dir: tempfile::tempdir().unwrap() };
        let rows: String = (0..20_000).map(|i| format!("{},{}\n", i % 97, (i * 31) % 1000)).collect();
        ws.file("t.csv", &format!("g:INT32,v:INT64\n{rows}"));
        ws
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn table_arg(&self) -> String {
        format!("T={}", self.dir.path().join("t.csv").display())
    }
}

fn wasmql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wasmql")).args(args).output().unwrap()
}

fn exec(ws: &Workspace, sql: &Path, extra: &[&str]) -> Output {
    let table = ws.table_arg();
    let mut args = vec!["exec", sql.to_str().unwrap(), "--table", &table];
    args.extend_from_slice(extra);
    wasmql(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn malformed_sql_exits_with_one_and_emits_no_module() {
    let ws = Workspace::new();
    let sql = ws.file("bad.sql", "SELEC T.g FROM T");
    let o = exec(&ws, &sql, &["--dump-wat"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    assert!(!stderr(&o).contains("(module"));
    assert!(stderr(&o).contains("error"));
}

#[test]
fn windowed_execution_prints_the_same_rows() {
    let ws = Workspace::new();
    let sql = ws.file("q.sql", "SELECT T.g, COUNT(*), SUM(T.v) FROM T GROUP BY T.g ORDER BY T.g");
    let plain = exec(&ws, &sql, &["--format", "csv"]);
    let windowed = exec(&ws, &sql, &["--format", "csv", "--window-bytes", "65536"]);
    assert!(plain.status.success(), "{}", stderr(&plain));
    assert!(windowed.status.success(), "{}", stderr(&windowed));
    assert_eq!(stdout(&plain), stdout(&windowed));
    assert_eq!(stdout(&plain).lines().count(), 98);
    // 20000 rows of 12 bytes make 240000 bytes, so four 64 KiB windows.
    assert!(stderr(&windowed).contains("4 chunks"), "{}", stderr(&windowed));
    assert!(stderr(&plain).contains("0 chunks"), "{}", stderr(&plain));
}

#[test]
fn dump_wat_goes_to_stderr_only() {
    let ws = Workspace::new();
    let sql = ws.file("q.sql", "SELECT COUNT(*) FROM T WHERE T.v < 500");
    let o = exec(&ws, &sql, &["--dump-wat", "--format", "csv", "--engine-opt", "fast"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("(module"));
    assert!(!stdout(&o).contains("(module"));
    let out = stdout(&o);
    let count: usize = out.lines().nth(1).unwrap().parse().unwrap();
    let want = (0..20_000).filter(|i| (i * 31) % 1000 < 500).count();
    assert_eq!(count, want);
}

#[test]
fn table_format_aligns_columns() {
    let ws = Workspace::new();
    let sql = ws.file("q.sql", "SELECT T.g, T.v FROM T WHERE T.v = 0 ORDER BY T.g");
    let o = exec(&ws, &sql, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("g"));
    assert!(lines[1].starts_with("-"));
    assert!(lines.last().unwrap().ends_with("rows)"));
}

#[test]
fn division_by_zero_is_a_user_error() {
    let ws = Workspace::new();
    let sql = ws.file("q.sql", "SELECT T.v / (T.g - T.g) FROM T");
    let o = exec(&ws, &sql, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn unknown_table_and_bad_header_are_user_errors() {
    let ws = Workspace::new();
    let sql = ws.file("q.sql", "SELECT U.a FROM U");
    assert_eq!(exec(&ws, &sql, &[]).status.code(), Some(1));
    let bad = ws.file("bad.csv", "a:WIDGET\n1\n");
    let arg = format!("U={}", bad.display());
    let o = wasmql(&["exec", sql.to_str().unwrap(), "--table", &arg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("WIDGET"), "{}", stderr(&o));
}

#[test]
fn lineitem_tpch_q6_runs() {
    let ws = Workspace::new();
    let sql = ws.file("q6.sql", wasmql::bench::TPCH_Q6_SQL);
    let o = wasmql(&["exec", sql.to_str().unwrap(), "--lineitem", "5000", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn bench_writes_csv() {
    let ws = Workspace::new();
    let out = ws.dir.path().join("sel.csv");
    let o = wasmql(&["bench", "selectivity", "--rows", "2000", "--reps", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("suite,query,parameter,"));
    assert_eq!(csv.lines().count(), 12);
    assert_eq!(wasmql(&["bench", "nonsense"]).status.code(), Some(1));
}
