//! A small SQL subset translated directly into physical plans.
//!
//! ```text
//! SELECT <expr|agg>, ... | *
//! FROM t [, t]
//! [WHERE <pred>]
//! [GROUP BY <expr>, ...]
//! [ORDER BY <expr> [ASC|DESC], ...]
//! ```
//!
//! Conjuncts of the WHERE clause that mention a single table are applied
//! directly above that table's scan, equalities between the two tables become
//! join keys with the first table as build side, and anything else is
//! filtered after the join. There is no optimizer.

pub(crate) mod lexer;

use thiserror::Error;

use crate::catalog::Value;
use crate::plan::{agg_output_name, AggFn, AggKind, ArithOp, CmpOp, ColumnRef, Direction, Expr, LogicOp, PlanNode, SortKey};
use lexer::{tokenize, Tok, Token};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct SqlError {
    pub offset: usize,
    pub message: String,
}

impl SqlError {
    pub fn new(offset: usize, message: impl Into<String>) -> SqlError {
        SqlError { offset, message: message.into() }
    }
}

const RESERVED: [&str; 14] =
    ["SELECT", "FROM", "WHERE", "GROUP", "BY", "ORDER", "ASC", "DESC", "AND", "OR", "NOT", "TRUE", "FALSE", "AS"];

const AGG_PREFIX: &str = "#agg";

/// Recursive-descent parser over a token stream.
pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: usize,
    /// Aggregates found so far, or `None` where they are not allowed.
    aggs: Option<Vec<AggFn>>,
}

impl Parser {
    pub fn new(src: &str) -> Result<Parser, SqlError> {
        Ok(Parser { toks: tokenize(src)?, pos: 0, end: src.len(), aggs: None })
    }

    pub fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, SqlError> {
        Err(SqlError::new(self.offset(), message))
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.pos += 1;
        }
        hit
    }

    pub fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected {kw}"))
        }
    }

    pub fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym);
        if hit {
            self.pos += 1;
        }
        hit
    }

    pub fn expect_sym(&mut self, sym: &str) -> Result<(), SqlError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.err(format!("expected `{sym}`"))
        }
    }

    pub fn expect_end(&self) -> Result<(), SqlError> {
        if self.at_end() {
            Ok(())
        } else {
            self.err("unexpected trailing input")
        }
    }

    pub fn ident(&mut self) -> Result<String, SqlError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !RESERVED.iter().any(|k| s.eq_ignore_ascii_case(k)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected an identifier"),
        }
    }

    pub fn parse_expr(&mut self) -> Result<Expr, SqlError> {
        self.logic_chain(LogicOp::Or)
    }

    fn logic_chain(&mut self, op: LogicOp) -> Result<Expr, SqlError> {
        let (kw, next): (&str, fn(&mut Parser) -> Result<Expr, SqlError>) = match op {
            LogicOp::Or => ("OR", |p| p.logic_chain(LogicOp::And)),
            _ => ("AND", Parser::parse_not),
        };
        let first = next(self)?;
        let mut operands = vec![first];
        while self.eat_kw(kw) {
            operands.push(next(self)?);
        }
        Ok(if operands.len() == 1 { operands.pop().unwrap() } else { Expr::Logic { op, operands } })
    }

    fn parse_not(&mut self) -> Result<Expr, SqlError> {
        if self.eat_kw("NOT") {
            return Ok(Expr::not(self.parse_not()?));
        }
        self.parse_cmp()
    }

    fn parse_cmp(&mut self) -> Result<Expr, SqlError> {
        let left = self.parse_additive()?;
        let op = match self.peek() {
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym("=")) => CmpOp::Eq,
            Some(Tok::Sym("<>")) | Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            _ => return Ok(left),
        };
        self.pos += 1;
        let right = self.parse_additive()?;
        Ok(Expr::cmp(op, left, right))
    }

    fn parse_additive(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_multiplicative()?;
        loop {
            let op = if self.eat_sym("+") {
                ArithOp::Add
            } else if self.eat_sym("-") {
                ArithOp::Sub
            } else {
                return Ok(left);
            };
            left = Expr::arith(op, left, self.parse_multiplicative()?);
        }
    }

    fn parse_multiplicative(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_unary()?;
        loop {
            let op = if self.eat_sym("*") {
                ArithOp::Mul
            } else if self.eat_sym("/") {
                ArithOp::Div
            } else {
                return Ok(left);
            };
            left = Expr::arith(op, left, self.parse_unary()?);
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, SqlError> {
        if !self.eat_sym("-") {
            return self.parse_primary();
        }
        let at = self.offset();
        let v = match self.peek().cloned() {
            Some(Tok::Int { value, wide }) => int_literal(-value, wide, at)?,
            Some(Tok::Float(f)) => Value::Float64(-f),
            _ => return self.err("unary minus applies only to numeric literals"),
        };
        self.pos += 1;
        Ok(Expr::Literal(v))
    }

    fn parse_primary(&mut self) -> Result<Expr, SqlError> {
        let at = self.offset();
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of input");
        };
        match tok {
            Tok::Int { value, wide } => {
                self.pos += 1;
                Ok(Expr::Literal(int_literal(value, wide, at)?))
            }
            Tok::Float(f) => {
                self.pos += 1;
                Ok(Expr::Literal(Value::Float64(f)))
            }
            Tok::Str { bytes, width } => {
                self.pos += 1;
                let n = width.unwrap_or(bytes.len().clamp(1, u16::MAX as usize) as u16);
                if n == 0 || n > crate::catalog::MAX_CHAR_LEN {
                    return Err(SqlError::new(at, format!("bad CHAR width {n}")));
                }
                Value::char_padded(&bytes, n)
                    .map(Expr::Literal)
                    .ok_or_else(|| SqlError::new(at, "string longer than its declared width"))
            }
            Tok::Sym("(") => {
                self.pos += 1;
                let e = self.parse_expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(_) if self.eat_kw("TRUE") => Ok(Expr::Literal(Value::Bool(true))),
            Tok::Ident(_) if self.eat_kw("FALSE") => Ok(Expr::Literal(Value::Bool(false))),
            Tok::Ident(name) if agg_kind(&name).is_some() && self.peek_at(1) == Some(&Tok::Sym("(")) => {
                let agg = self.parse_agg_fn()?;
                match &mut self.aggs {
                    None => Err(SqlError::new(at, format!("aggregate {agg} is not allowed here"))),
                    Some(list) => {
                        let i = list.iter().position(|a| *a == agg).unwrap_or_else(|| {
                            list.push(agg);
                            list.len() - 1
                        });
                        Ok(Expr::Column(ColumnRef { table: String::new(), column: format!("{AGG_PREFIX}{i}") }))
                    }
                }
            }
            Tok::Ident(_) => {
                let first = self.ident()?;
                if self.eat_sym(".") {
                    let column = self.ident()?;
                    Ok(Expr::Column(ColumnRef { table: first, column }))
                } else {
                    Ok(Expr::Column(ColumnRef { table: String::new(), column: first }))
                }
            }
            Tok::Sym(s) => self.err(format!("unexpected `{s}`")),
        }
    }

    /// `COUNT(*)`, `SUM(e)`, `MIN(e)`, `MAX(e)` or `AVG(e)`.
    pub fn parse_agg_fn(&mut self) -> Result<AggFn, SqlError> {
        let kind = match self.peek() {
            Some(Tok::Ident(s)) => agg_kind(s),
            _ => None,
        };
        let Some(kind) = kind else {
            return self.err("expected an aggregate function");
        };
        self.pos += 1;
        self.expect_sym("(")?;
        if kind == AggKind::CountStar {
            self.expect_sym("*")?;
            self.expect_sym(")")?;
            return Ok(AggFn::count_star());
        }
        let outer = self.aggs.take();
        let arg = self.parse_expr();
        self.aggs = outer;
        let arg = arg?;
        self.expect_sym(")")?;
        Ok(AggFn { kind, arg: Some(arg) })
    }
}

fn agg_kind(name: &str) -> Option<AggKind> {
    [AggKind::CountStar, AggKind::Sum, AggKind::Min, AggKind::Max, AggKind::Avg]
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(name))
}

fn int_literal(value: i128, wide: bool, at: usize) -> Result<Value, SqlError> {
    if !wide {
        if let Ok(v) = i32::try_from(value) {
            return Ok(Value::Int32(v));
        }
    }
    i64::try_from(value)
        .map(Value::Int64)
        .map_err(|_| SqlError::new(at, "integer literal out of range"))
}

/// Parses a standalone scalar expression.
pub fn parse_expr(text: &str) -> Result<Expr, SqlError> {
    let mut p = Parser::new(text)?;
    let e = p.parse_expr()?;
    p.expect_end()?;
    Ok(e)
}

/// Parses one statement of the SQL subset into a plan.
pub fn parse_sql(text: &str) -> Result<PlanNode, SqlError> {
    let mut p = Parser::new(text)?;
    p.expect_kw("SELECT")?;
    p.aggs = Some(Vec::new());
    let select = if p.eat_sym("*") { None } else { Some(comma_list(&mut p, Parser::parse_expr)?) };
    let aggs = p.aggs.take();

    let from_at = p.offset();
    p.expect_kw("FROM")?;
    let tables = comma_list(&mut p, Parser::ident)?;
    if tables.len() > 2 {
        return Err(SqlError::new(from_at, "at most two tables are supported"));
    }
    if tables.len() == 2 && tables[0] == tables[1] {
        return Err(SqlError::new(from_at, "self-joins are not supported"));
    }

    let where_at = p.offset();
    let pred = if p.eat_kw("WHERE") { Some(p.parse_expr()?) } else { None };
    let grouped = p.eat_kw("GROUP");
    let group_keys = if grouped {
        p.expect_kw("BY")?;
        comma_list(&mut p, Parser::parse_expr)?
    } else {
        Vec::new()
    };

    p.aggs = aggs;
    let order = if p.eat_kw("ORDER") {
        p.expect_kw("BY")?;
        comma_list(&mut p, |p| {
            let expr = p.parse_expr()?;
            let direction = if p.eat_kw("DESC") {
                Direction::Desc
            } else {
                p.eat_kw("ASC");
                Direction::Asc
            };
            Ok(SortKey { expr, direction })
        })?
    } else {
        Vec::new()
    };
    let aggs = p.aggs.take().unwrap_or_default();
    p.expect_end()?;

    let query = Query { tables, select, pred, group_keys, grouped: grouped || !aggs.is_empty(), order, aggs };
    query.into_plan(from_at, where_at)
}

fn comma_list<T>(p: &mut Parser, mut item: impl FnMut(&mut Parser) -> Result<T, SqlError>) -> Result<Vec<T>, SqlError> {
    let mut out = vec![item(p)?];
    while p.eat_sym(",") {
        out.push(item(p)?);
    }
    Ok(out)
}

struct Query {
    tables: Vec<String>,
    select: Option<Vec<Expr>>,
    pred: Option<Expr>,
    group_keys: Vec<Expr>,
    grouped: bool,
    order: Vec<SortKey>,
    aggs: Vec<AggFn>,
}

impl Query {
    fn into_plan(mut self, from_at: usize, where_at: usize) -> Result<PlanNode, SqlError> {
        if self.tables.len() == 1 {
            let t = self.tables[0].clone();
            let q = |e: &mut Expr| qualify(e, &t);
            self.select.iter_mut().flatten().for_each(q);
            self.pred.iter_mut().for_each(q);
            self.group_keys.iter_mut().for_each(q);
            self.order.iter_mut().for_each(|k| qualify(&mut k.expr, &t));
            for a in &mut self.aggs {
                a.arg.iter_mut().for_each(q);
            }
        }

        let mut per_table: Vec<Vec<Expr>> = vec![Vec::new(); self.tables.len()];
        let mut keys = Vec::new();
        let mut residual = Vec::new();
        let conjuncts = match self.pred {
            Some(Expr::Logic { op: LogicOp::And, operands }) => operands,
            Some(e) => vec![e],
            None => vec![],
        };
        for c in conjuncts {
            let Some(used) = tables_of(&c, &self.tables) else {
                residual.push(c);
                continue;
            };
            match used.as_slice() {
                [] => per_table[0].push(c),
                [i] => per_table[*i].push(c),
                _ => match c {
                    Expr::Cmp { op: CmpOp::Eq, left, right } => {
                        match (tables_of(&left, &self.tables).as_deref(), tables_of(&right, &self.tables).as_deref()) {
                            (Some([0]), Some([1])) => keys.push((*left, *right)),
                            (Some([1]), Some([0])) => keys.push((*right, *left)),
                            _ => residual.push(Expr::Cmp { op: CmpOp::Eq, left, right }),
                        }
                    }
                    c => residual.push(c),
                },
            }
        }

        let scan = |i: usize, preds: Vec<Expr>| {
            let s = PlanNode::scan(&self.tables[i]);
            match conjunction(preds) {
                Some(p) => s.filter(p),
                None => s,
            }
        };
        let mut per_table = per_table.into_iter();
        let mut node = scan(0, per_table.next().unwrap());
        if self.tables.len() == 2 {
            if keys.is_empty() {
                return Err(SqlError::new(
                    where_at,
                    format!("joining {} and {} needs an equality between them", self.tables[0], self.tables[1]),
                ));
            }
            node = node.join(scan(1, per_table.next().unwrap()), keys);
        }
        if let Some(p) = conjunction(residual) {
            node = node.filter(p);
        }

        let rewrite = |e: &Expr| rewrite_output(e, &self.group_keys, &self.aggs, self.grouped);
        if self.grouped {
            if self.select.is_none() {
                return Err(SqlError::new(from_at, "SELECT * cannot be combined with aggregation"));
            }
            node = node.group_by(self.group_keys.clone(), self.aggs.clone());
        }
        if !self.order.is_empty() {
            let order = self.order.iter().map(|k| SortKey { expr: rewrite(&k.expr), direction: k.direction }).collect();
            node = node.sort(order);
        }
        if let Some(select) = &self.select {
            node = node.project(select.iter().map(rewrite).collect());
        }
        Ok(node)
    }
}

fn qualify(e: &mut Expr, table: &str) {
    match e {
        Expr::Column(c) if c.table.is_empty() && !c.column.starts_with(AGG_PREFIX) => c.table = table.into(),
        Expr::Column(_) | Expr::Literal(_) => {}
        Expr::Arith { left, right, .. } | Expr::Cmp { left, right, .. } => {
            qualify(left, table);
            qualify(right, table);
        }
        Expr::Logic { operands, .. } => operands.iter_mut().for_each(|o| qualify(o, table)),
    }
}

/// Indices of the FROM tables `e` references, or `None` if a reference is
/// unqualified or names another table.
fn tables_of(e: &Expr, tables: &[String]) -> Option<Vec<usize>> {
    let mut used = Vec::new();
    for c in e.columns() {
        let i = tables.iter().position(|t| *t == c.table)?;
        if !used.contains(&i) {
            used.push(i);
        }
    }
    used.sort_unstable();
    Some(used)
}

fn conjunction(mut preds: Vec<Expr>) -> Option<Expr> {
    match preds.len() {
        0 => None,
        1 => preds.pop(),
        _ => Some(Expr::and(preds)),
    }
}

/// Rewrites an expression evaluated above the grouping operator: grouping
/// keys become references to the key columns and aggregate placeholders
/// become references to the aggregate columns.
fn rewrite_output(e: &Expr, keys: &[Expr], aggs: &[AggFn], grouped: bool) -> Expr {
    if grouped {
        if let Some(i) = keys.iter().position(|k| k == e) {
            return match e {
                Expr::Column(_) => e.clone(),
                _ => Expr::Column(ColumnRef { table: String::new(), column: format!("key{i}") }),
            };
        }
    }
    let r = |x: &Expr| Box::new(rewrite_output(x, keys, aggs, grouped));
    match e {
        Expr::Column(c) => match c.column.strip_prefix(AGG_PREFIX) {
            Some(i) if c.table.is_empty() => Expr::Column(ColumnRef {
                table: String::new(),
                column: agg_output_name(aggs, i.parse().unwrap()),
            }),
            _ => e.clone(),
        },
        Expr::Literal(_) => e.clone(),
        Expr::Arith { op, left, right } => Expr::Arith { op: *op, left: r(left), right: r(right) },
        Expr::Cmp { op, left, right } => Expr::Cmp { op: *op, left: r(left), right: r(right) },
        Expr::Logic { op, operands } => Expr::Logic {
            op: *op,
            operands: operands.iter().map(|o| rewrite_output(o, keys, aggs, grouped)).collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::*;

    #[test]
    fn fig2_query() {
        let plan = parse_sql("SELECT R.x, MIN(S.x) FROM R, S WHERE R.x < 42 AND R.id = S.rid GROUP BY R.x").unwrap();
        let expected = PlanNode::scan("R")
            .filter(col("R", "x").lt(lit_i32(42)))
            .join(PlanNode::scan("S"), vec![(col("R", "id"), col("S", "rid"))])
            .group_by(vec![col("R", "x")], vec![AggFn::min(col("S", "x"))])
            .project(vec![col("R", "x"), col("", "min")]);
        assert_eq!(plan, expected);
    }

    #[test]
    fn count_star_filter_under_aggregate() {
        let plan = parse_sql("SELECT COUNT(*) FROM T WHERE T.x < 10").unwrap();
        let expected = PlanNode::scan("T")
            .filter(col("T", "x").lt(lit_i32(10)))
            .group_by(vec![], vec![AggFn::count_star()])
            .project(vec![col("", "count")]);
        assert_eq!(plan, expected);
    }

    #[test]
    fn syntax_error_offsets() {
        assert_eq!(parse_sql("SELEC 1").unwrap_err().offset, 0);
        assert_eq!(parse_sql("SELECT x FROM").unwrap_err().offset, 13);
        assert_eq!(parse_sql("SELECT x FROM R WHERE").unwrap_err().offset, 21);
        assert_eq!(parse_sql("SELECT x FROM R WHERE MIN(x) > 1").unwrap_err().offset, 22);
        assert_eq!(parse_sql("SELECT x FROM R S").unwrap_err().offset, 16);
    }

    #[test]
    fn unqualified_names_and_order() {
        let plan = parse_sql("SELECT x, y FROM R WHERE x > 3 ORDER BY x + y, z DESC").unwrap();
        let expected = PlanNode::scan("R")
            .filter(col("R", "x").gt(lit_i32(3)))
            .sort(vec![SortKey::asc(col("R", "x").add(col("R", "y"))), SortKey::desc(col("R", "z"))])
            .project(vec![col("R", "x"), col("R", "y")]);
        assert_eq!(plan, expected);
    }

    #[test]
    fn computed_group_keys_and_order_by_aggregate() {
        let plan =
            parse_sql("SELECT x + 1, SUM(y), MIN(y) FROM R GROUP BY x + 1 ORDER BY SUM(y) DESC, MAX(y)").unwrap();
        let key = col("R", "x").add(lit_i32(1));
        let expected = PlanNode::scan("R")
            .group_by(
                vec![key],
                vec![AggFn::sum(col("R", "y")), AggFn::min(col("R", "y")), AggFn::max(col("R", "y"))],
            )
            .sort(vec![SortKey::desc(col("", "sum")), SortKey::asc(col("", "max"))])
            .project(vec![col("", "key0"), col("", "sum"), col("", "min")]);
        assert_eq!(plan, expected);
    }

    #[test]
    fn join_orientation_and_residual() {
        let plan = parse_sql("SELECT * FROM A, B WHERE B.k = A.k AND A.v + B.v > 1 AND B.w = 2").unwrap();
        let expected = PlanNode::scan("A")
            .join(PlanNode::scan("B").filter(col("B", "w").eq(lit_i32(2))), vec![(col("A", "k"), col("B", "k"))])
            .filter(col("A", "v").add(col("B", "v")).gt(lit_i32(1)));
        assert_eq!(plan, expected);
        assert!(parse_sql("SELECT * FROM A, B WHERE A.x < 1").is_err());
    }

    #[test]
    fn literals() {
        assert_eq!(parse_expr("-2147483648").unwrap(), lit_i32(i32::MIN));
        assert_eq!(parse_expr("2147483648").unwrap(), lit_i64(2147483648));
        assert_eq!(parse_expr("-3i64").unwrap(), lit_i64(-3));
        assert_eq!(parse_expr("'ab':4").unwrap(), lit(Value::char_padded(b"ab", 4).unwrap()));
        assert_eq!(parse_expr("NOT TRUE").unwrap(), Expr::not(lit(Value::Bool(true))));
        assert!(parse_expr("-x").is_err());
        assert!(parse_expr("'abc':2").is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "((R.x + R.y) * 2)",
            "((R.a < 1) AND (R.b > 2) AND (NOT (R.c = 'x':8)))",
            "((R.v >= -0.5) OR (R.w <> 1e300))",
            "(R.z / -9223372036854775808i64)",
        ] {
            let e = parse_expr(s).unwrap();
            assert_eq!(e.to_string(), s);
            assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
        }
    }
}
