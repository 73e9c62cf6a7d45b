//! Line-oriented plan text, used for fixtures and dumps.
//!
//! Each operator occupies one line; its inputs follow on the next lines,
//! indented by two more spaces. A join lists its build input first.
//!
//! ```text
//! Project R.x, min
//!   HashGroupBy keys(R.x) aggs(MIN(S.x))
//!     HashJoin R.id = S.rid
//!       Filter (R.x < 42)
//!         Scan R
//!       Scan S
//! ```
//!
//! Operator lines:
//!
//! | form | notes |
//! |------|-------|
//! | `Scan <table>` | |
//! | `Filter <expr>` | |
//! | `Project <expr>, ...` | |
//! | `HashGroupBy keys(<expr>, ...) aggs(<agg>, ...)` | either list may be empty |
//! | `HashJoin <build expr> = <probe expr>, ...` | one pair per key |
//! | `Sort <expr> ASC\|DESC, ...` | |
//!
//! Expressions use the syntax of [`Expr`]'s `Display`: `INT64` literals
//! carry an `i64` suffix and `'ab':4` is a `CHAR(4)` literal.

use thiserror::Error;

use super::{AggFn, CmpOp, Direction, Expr, PlanNode, SortKey};
use crate::sql::{Parser, SqlError};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("plan text line {line}: {message}")]
pub struct PlanTextError {
    pub line: usize,
    pub message: String,
}

pub fn to_text(plan: &PlanNode) -> String {
    let mut out = String::new();
    write_node(plan, 0, &mut out);
    out
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

fn write_node(n: &PlanNode, depth: usize, out: &mut String) {
    out.push_str(&"  ".repeat(depth));
    match n {
        PlanNode::Scan { table } => out.push_str(&format!("Scan {table}")),
        PlanNode::Filter { pred, .. } => out.push_str(&format!("Filter {pred}")),
        PlanNode::Project { exprs, .. } => out.push_str(&format!("Project {}", join(exprs))),
        PlanNode::HashGroupBy { keys, aggs, .. } => {
            out.push_str(&format!("HashGroupBy keys({}) aggs({})", join(keys), join(aggs)))
        }
        PlanNode::HashJoin { keys, .. } => {
            let pairs: Vec<String> = keys.iter().map(|(b, p)| format!("{b} = {p}")).collect();
            out.push_str(&format!("HashJoin {}", pairs.join(", ")))
        }
        PlanNode::Sort { order, .. } => {
            let keys: Vec<String> = order
                .iter()
                .map(|k| format!("{} {}", k.expr, if k.direction == Direction::Asc { "ASC" } else { "DESC" }))
                .collect();
            out.push_str(&format!("Sort {}", keys.join(", ")))
        }
    }
    out.push('\n');
    for c in n.children() {
        write_node(c, depth + 1, out);
    }
}

struct Line<'a> {
    number: usize,
    indent: usize,
    text: &'a str,
}

pub fn from_text(text: &str) -> Result<PlanNode, PlanTextError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim_start_matches(' ');
        if trimmed.trim().is_empty() {
            continue;
        }
        let indent = raw.len() - trimmed.len();
        if indent % 2 != 0 {
            return Err(PlanTextError { line: i + 1, message: "odd indentation".into() });
        }
        lines.push(Line { number: i + 1, indent: indent / 2, text: trimmed.trim_end() });
    }
    if lines.is_empty() {
        return Err(PlanTextError { line: 1, message: "empty plan".into() });
    }
    if lines[0].indent != 0 {
        return Err(PlanTextError { line: lines[0].number, message: "root must not be indented".into() });
    }
    let mut pos = 0;
    let node = parse_node(&lines, &mut pos, 0)?;
    if let Some(extra) = lines.get(pos) {
        return Err(PlanTextError { line: extra.number, message: "unexpected extra operator".into() });
    }
    Ok(node)
}

fn parse_node(lines: &[Line], pos: &mut usize, depth: usize) -> Result<PlanNode, PlanTextError> {
    let line = &lines[*pos];
    *pos += 1;
    let fail = |message: String| PlanTextError { line: line.number, message };
    let (op, rest) = line.text.split_once(' ').unwrap_or((line.text, ""));
    let mut p = Parser::new(rest).map_err(|e| sql_err(line, e))?;
    let child = |pos: &mut usize| -> Result<Box<PlanNode>, PlanTextError> {
        match lines.get(*pos) {
            Some(l) if l.indent == depth + 1 => parse_node(lines, pos, depth + 1).map(Box::new),
            Some(l) => Err(PlanTextError { line: l.number, message: "bad indentation".into() }),
            None => Err(fail(format!("{op} is missing an input"))),
        }
    };
    let node = match op {
        "Scan" => {
            let table = p.ident().map_err(|e| sql_err(line, e))?;
            p.expect_end().map_err(|e| sql_err(line, e))?;
            return Ok(PlanNode::Scan { table });
        }
        "Filter" => {
            let pred = whole(&mut p, line, Parser::parse_expr)?;
            PlanNode::Filter { pred, child: child(pos)? }
        }
        "Project" => {
            let exprs = whole(&mut p, line, |p| list(p, Parser::parse_expr))?;
            PlanNode::Project { exprs, child: child(pos)? }
        }
        "HashGroupBy" => {
            let (keys, aggs) = whole(&mut p, line, |p| {
                p.expect_kw("keys")?;
                let keys = paren_list(p, Parser::parse_expr)?;
                p.expect_kw("aggs")?;
                let aggs: Vec<AggFn> = paren_list(p, Parser::parse_agg_fn)?;
                Ok((keys, aggs))
            })?;
            PlanNode::HashGroupBy { keys, aggs, child: child(pos)? }
        }
        "HashJoin" => {
            let keys = whole(&mut p, line, |p| {
                list(p, |p| {
                    let at = p.offset();
                    match p.parse_expr()? {
                        Expr::Cmp { op: CmpOp::Eq, left, right } => Ok((*left, *right)),
                        _ => Err(SqlError::new(at, "expected `build = probe`")),
                    }
                })
            })?;
            let build = child(pos)?;
            let probe = child(pos)?;
            PlanNode::HashJoin { keys, build, probe }
        }
        "Sort" => {
            let order = whole(&mut p, line, |p| {
                list(p, |p| {
                    let expr = p.parse_expr()?;
                    let direction = if p.eat_kw("DESC") {
                        Direction::Desc
                    } else {
                        p.expect_kw("ASC")?;
                        Direction::Asc
                    };
                    Ok(SortKey { expr, direction })
                })
            })?;
            PlanNode::Sort { order, child: child(pos)? }
        }
        other => return Err(fail(format!("unknown operator `{other}`"))),
    };
    if let Some(l) = lines.get(*pos) {
        if l.indent > depth {
            return Err(PlanTextError { line: l.number, message: "too many inputs".into() });
        }
    }
    Ok(node)
}

fn sql_err(line: &Line, e: SqlError) -> PlanTextError {
    let col = line.text.split_once(' ').map_or(line.text.len(), |(op, _)| op.len() + 1) + e.offset;
    PlanTextError { line: line.number, message: format!("column {}: {}", col + 1, e.message) }
}

fn whole<T>(
    p: &mut Parser,
    line: &Line,
    f: impl FnOnce(&mut Parser) -> Result<T, SqlError>,
) -> Result<T, PlanTextError> {
    let v = f(p).map_err(|e| sql_err(line, e))?;
    p.expect_end().map_err(|e| sql_err(line, e))?;
    Ok(v)
}

fn list<T>(p: &mut Parser, mut item: impl FnMut(&mut Parser) -> Result<T, SqlError>) -> Result<Vec<T>, SqlError> {
    let mut out = vec![item(p)?];
    while p.eat_sym(",") {
        out.push(item(p)?);
    }
    Ok(out)
}

fn paren_list<T>(p: &mut Parser, item: impl FnMut(&mut Parser) -> Result<T, SqlError>) -> Result<Vec<T>, SqlError> {
    p.expect_sym("(")?;
    if p.eat_sym(")") {
        return Ok(Vec::new());
    }
    let out = list(p, item)?;
    p.expect_sym(")")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Value;
    use crate::plan::*;

    fn fig2() -> PlanNode {
        PlanNode::scan("R")
            .filter(col("R", "x").lt(lit_i32(42)))
            .join(PlanNode::scan("S"), vec![(col("R", "id"), col("S", "rid"))])
            .group_by(vec![col("R", "x")], vec![AggFn::min(col("S", "x"))])
            .project(vec![col("R", "x"), col("", "min")])
    }

    #[test]
    fn renders_fig2() {
        let expected = "Project R.x, min\n  HashGroupBy keys(R.x) aggs(MIN(S.x))\n    HashJoin R.id = S.rid\n      Filter (R.x < 42)\n        Scan R\n      Scan S\n";
        assert_eq!(to_text(&fig2()), expected);
        assert_eq!(from_text(expected).unwrap(), fig2());
    }

    #[test]
    fn round_trips() {
        let plans = vec![
            fig2(),
            PlanNode::scan("T").group_by(vec![], vec![AggFn::count_star(), AggFn::avg(col("T", "v"))]),
            PlanNode::scan("T").group_by(vec![col("T", "a").mul(lit_i64(3))], vec![]),
            PlanNode::scan("R")
                .sort(vec![SortKey::asc(col("R", "x").add(col("R", "y"))), SortKey::desc(col("R", "z"))]),
            PlanNode::scan("A").join(
                PlanNode::scan("B").filter(col("B", "s").ne(lit(Value::char_padded(b"q'", 6).unwrap()))),
                vec![(col("A", "k"), col("B", "k")), (col("A", "c").lt(lit_i32(0)), col("B", "d").lt(lit_i32(0)))],
            ),
            PlanNode::scan("R").filter(Expr::or(vec![
                col("R", "f").ge(lit_f64(-0.25)),
                Expr::not(col("R", "b").eq(lit(Value::Bool(true)))),
            ])),
        ];
        for p in plans {
            let text = to_text(&p);
            assert_eq!(from_text(&text).unwrap(), p, "{text}");
        }
    }

    #[test]
    fn errors_name_lines() {
        assert_eq!(from_text("Scan R\nScan S").unwrap_err().line, 2);
        assert_eq!(from_text("Filter (R.x <\n  Scan R").unwrap_err().line, 1);
        assert_eq!(from_text("Filter R.x\n    Scan R").unwrap_err().line, 2);
        assert_eq!(from_text("HashJoin A.k = B.k\n  Scan A").unwrap_err().line, 1);
        assert_eq!(from_text("Wibble\n").unwrap_err().line, 1);
        assert!(from_text("").is_err());
    }
}
