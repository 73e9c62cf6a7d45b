//! Tuple-at-a-time interpreter over the same plans. Slow and direct; the
//! compiled modules are tested against it.

use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, DataType, Table, Value};
use crate::plan::{
    output_scope, result_schema, unify_numeric, AggFn, AggKind, ArithOp, CmpOp, Direction, Expr, LogicOp, PlanError,
    PlanNode, Scope, SortKey,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("integer division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("integer overflow in `{0}`")]
    Overflow(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// How the interpreter evaluates joins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JoinStrategy {
    #[default]
    Hash,
    NestedLoop,
}

fn widen(v: &Value, to: DataType) -> Value {
    match (v, to) {
        (Value::Int32(x), DataType::Int64) => Value::Int64(*x as i64),
        _ => v.clone(),
    }
}

/// Three-way comparison of two values of comparable types. `CHAR` values
/// of different widths compare as if zero padded; `NaN` is unordered and
/// reported as `None`.
pub fn compare_values(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Char(x), Value::Char(y)) => {
            let n = x.len().max(y.len());
            let at = |s: &[u8], i: usize| s.get(i).copied().unwrap_or(0);
            Some((0..n).map(|i| at(x, i).cmp(&at(y, i))).find(|o| o.is_ne()).unwrap_or(Ordering::Equal))
        }
        (Value::Int32(x), Value::Int32(y)) => Some(x.cmp(y)),
        (Value::Int64(_) | Value::Int32(_), Value::Int64(_) | Value::Int32(_)) => {
            let (Value::Int64(x), Value::Int64(y)) = (widen(a, DataType::Int64), widen(b, DataType::Int64)) else {
                unreachable!()
            };
            Some(x.cmp(&y))
        }
        (Value::Float64(x), Value::Float64(y)) => x.partial_cmp(y),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

/// Evaluates `expr` over `row`, whose values follow `scope`. Every operand
/// of `AND`/`OR` is evaluated, so a division by zero anywhere is an error.
pub fn eval_expr(expr: &Expr, scope: &Scope, row: &[Value]) -> Result<Value, EvalError> {
    Ok(match expr {
        Expr::Column(c) => row[scope.resolve(c)?].clone(),
        Expr::Literal(v) => v.clone(),
        Expr::Arith { op, left, right } => {
            let (a, b) = (eval_expr(left, scope, row)?, eval_expr(right, scope, row)?);
            let ty = unify_numeric(a.data_type(), b.data_type())
                .ok_or_else(|| PlanError::TypeMismatch { expr: expr.to_string(), detail: "arithmetic".into() })?;
            let fail = |e: fn(String) -> EvalError| e(expr.to_string());
            match (widen(&a, ty), widen(&b, ty)) {
                (Value::Int32(x), Value::Int32(y)) => Value::Int32(match op {
                    ArithOp::Add => x.wrapping_add(y),
                    ArithOp::Sub => x.wrapping_sub(y),
                    ArithOp::Mul => x.wrapping_mul(y),
                    ArithOp::Div if y == 0 => return Err(fail(EvalError::DivisionByZero)),
                    ArithOp::Div => x.checked_div(y).ok_or_else(|| fail(EvalError::Overflow))?,
                }),
                (Value::Int64(x), Value::Int64(y)) => Value::Int64(match op {
                    ArithOp::Add => x.wrapping_add(y),
                    ArithOp::Sub => x.wrapping_sub(y),
                    ArithOp::Mul => x.wrapping_mul(y),
                    ArithOp::Div if y == 0 => return Err(fail(EvalError::DivisionByZero)),
                    ArithOp::Div => x.checked_div(y).ok_or_else(|| fail(EvalError::Overflow))?,
                }),
                (Value::Float64(x), Value::Float64(y)) => Value::Float64(match op {
                    ArithOp::Add => x + y,
                    ArithOp::Sub => x - y,
                    ArithOp::Mul => x * y,
                    ArithOp::Div => x / y,
                }),
                _ => return Err(PlanError::InvalidArith { expr: expr.to_string(), ty }.into()),
            }
        }
        Expr::Cmp { op, left, right } => {
            let (a, b) = (eval_expr(left, scope, row)?, eval_expr(right, scope, row)?);
            Value::Bool(match compare_values(&a, &b) {
                Some(ord) => op.holds(ord),
                None => *op == CmpOp::Ne,
            })
        }
        Expr::Logic { op, operands } => {
            let mut vals = Vec::with_capacity(operands.len());
            for o in operands {
                vals.push(matches!(eval_expr(o, scope, row)?, Value::Bool(true)));
            }
            Value::Bool(match op {
                LogicOp::Not => !vals[0],
                LogicOp::And => vals.iter().all(|&v| v),
                LogicOp::Or => vals.iter().any(|&v| v),
            })
        }
    })
}

/// Key bytes: values are equal as keys iff their encodings are.
fn key_bytes(vals: &[Value]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in vals {
        let mut buf = vec![0u8; v.data_type().width()];
        v.write_bytes(&mut buf);
        out.extend_from_slice(&buf);
    }
    out
}

struct Rows {
    scope: Scope,
    rows: Vec<Vec<Value>>,
}

/// Runs `plan` and returns its result rows.
pub fn interpret(plan: &PlanNode, catalog: &Catalog) -> Result<Table, EvalError> {
    interpret_with(plan, catalog, JoinStrategy::Hash)
}

pub fn interpret_with(plan: &PlanNode, catalog: &Catalog, joins: JoinStrategy) -> Result<Table, EvalError> {
    let out = run(plan, catalog, joins)?;
    let mut table = Table::new(result_schema(&out.scope));
    for r in &out.rows {
        table.push_row(r)?;
    }
    Ok(table)
}

fn run(plan: &PlanNode, catalog: &Catalog, joins: JoinStrategy) -> Result<Rows, EvalError> {
    let scope = output_scope(plan, catalog)?;
    let rows = match plan {
        PlanNode::Scan { table } => catalog.get(table)?.rows().collect(),
        PlanNode::Filter { pred, child } => {
            let input = run(child, catalog, joins)?;
            let mut rows = Vec::new();
            for r in input.rows {
                if eval_expr(pred, &input.scope, &r)? == Value::Bool(true) {
                    rows.push(r);
                }
            }
            rows
        }
        PlanNode::Project { exprs, child } => {
            let input = run(child, catalog, joins)?;
            input
                .rows
                .iter()
                .map(|r| exprs.iter().map(|e| eval_expr(e, &input.scope, r)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<_, _>>()?
        }
        PlanNode::HashGroupBy { keys, aggs, child } => {
            let input = run(child, catalog, joins)?;
            group(keys, aggs, &input, &scope)?
        }
        PlanNode::HashJoin { keys, build, probe } => {
            let b = run(build, catalog, joins)?;
            let p = run(probe, catalog, joins)?;
            let eval_keys = |side: &Rows, r: &[Value], left: bool| -> Result<Vec<u8>, EvalError> {
                let vals = keys
                    .iter()
                    .map(|(l, rk)| eval_expr(if left { l } else { rk }, &side.scope, r))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(key_bytes(&vals))
            };
            let build_keys = b.rows.iter().map(|r| eval_keys(&b, r, true)).collect::<Result<Vec<_>, _>>()?;
            let mut rows = Vec::new();
            let mut emit = |bi: usize, pr: &[Value]| {
                let mut row = b.rows[bi].clone();
                row.extend_from_slice(pr);
                rows.push(row);
            };
            match joins {
                JoinStrategy::Hash => {
                    let mut table: HashMap<&[u8], Vec<usize>> = HashMap::new();
                    for (i, k) in build_keys.iter().enumerate() {
                        table.entry(k).or_default().push(i);
                    }
                    for pr in &p.rows {
                        let k = eval_keys(&p, pr, false)?;
                        for &bi in table.get(k.as_slice()).map(Vec::as_slice).unwrap_or(&[]) {
                            emit(bi, pr);
                        }
                    }
                }
                JoinStrategy::NestedLoop => {
                    for pr in &p.rows {
                        let k = eval_keys(&p, pr, false)?;
                        for (bi, bk) in build_keys.iter().enumerate() {
                            if *bk == k {
                                emit(bi, pr);
                            }
                        }
                    }
                }
            }
            rows
        }
        PlanNode::Sort { order, child } => {
            let input = run(child, catalog, joins)?;
            let mut keyed = Vec::with_capacity(input.rows.len());
            for r in input.rows {
                let k = order.iter().map(|o| eval_expr(&o.expr, &input.scope, &r)).collect::<Result<Vec<_>, _>>()?;
                keyed.push((k, r));
            }
            keyed.sort_by(|a, b| compare_keys(order, &a.0, &b.0));
            keyed.into_iter().map(|(_, r)| r).collect()
        }
    };
    Ok(Rows { scope, rows })
}

/// Lexicographic order of evaluated sort keys. Unordered values tie.
pub fn compare_keys(order: &[SortKey], a: &[Value], b: &[Value]) -> Ordering {
    for (k, (x, y)) in order.iter().zip(a.iter().zip(b)) {
        let o = compare_values(x, y).unwrap_or(Ordering::Equal);
        let o = if k.direction == Direction::Desc { o.reverse() } else { o };
        if o.is_ne() {
            return o;
        }
    }
    Ordering::Equal
}

#[derive(Clone)]
enum Acc {
    Count(i64),
    SumInt(i64),
    SumFloat(f64),
    Avg(f64, i64),
    Extreme(Option<Value>),
}

impl Acc {
    fn new(a: &AggFn, out: DataType) -> Acc {
        match a.kind {
            AggKind::CountStar => Acc::Count(0),
            AggKind::Sum if out == DataType::Float64 => Acc::SumFloat(0.0),
            AggKind::Sum => Acc::SumInt(0),
            AggKind::Avg => Acc::Avg(0.0, 0),
            AggKind::Min | AggKind::Max => Acc::Extreme(None),
        }
    }

    fn update(&mut self, kind: AggKind, v: Option<Value>) {
        match (self, v) {
            (Acc::Count(n), _) => *n += 1,
            (Acc::SumInt(s), Some(Value::Int32(x))) => *s = s.wrapping_add(x as i64),
            (Acc::SumInt(s), Some(Value::Int64(x))) => *s = s.wrapping_add(x),
            (Acc::SumFloat(s), Some(Value::Float64(x))) => *s += x,
            (Acc::Avg(s, n), Some(v)) => {
                *s += match v {
                    Value::Int32(x) => x as f64,
                    Value::Int64(x) => x as f64,
                    Value::Float64(x) => x,
                    _ => 0.0,
                };
                *n += 1;
            }
            (Acc::Extreme(cur), Some(v)) => {
                let want = if kind == AggKind::Min { Ordering::Less } else { Ordering::Greater };
                let take = match cur {
                    None => true,
                    Some(c) => compare_values(&v, c) == Some(want),
                };
                if take {
                    *cur = Some(v);
                }
            }
            _ => {}
        }
    }

    fn finish(self, out: DataType) -> Value {
        match self {
            Acc::Count(n) | Acc::SumInt(n) => Value::Int64(n),
            Acc::SumFloat(s) => Value::Float64(s),
            Acc::Avg(s, n) => Value::Float64(if n == 0 { 0.0 } else { s / n as f64 }),
            Acc::Extreme(v) => v.unwrap_or_else(|| Value::zero(out)),
        }
    }
}

/// Groups in order of first appearance. Without keys there is exactly one
/// output row, all zeros when the input is empty.
fn group(keys: &[Expr], aggs: &[AggFn], input: &Rows, out: &Scope) -> Result<Vec<Vec<Value>>, EvalError> {
    let out_types: Vec<DataType> = out.columns[keys.len()..].iter().map(|c| c.ty).collect();
    let fresh = || aggs.iter().zip(&out_types).map(|(a, t)| Acc::new(a, *t)).collect::<Vec<_>>();
    let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut groups: Vec<(Vec<Value>, Vec<Acc>)> = Vec::new();
    if keys.is_empty() {
        groups.push((vec![], fresh()));
    }
    for r in &input.rows {
        let kv = keys.iter().map(|k| eval_expr(k, &input.scope, r)).collect::<Result<Vec<_>, _>>()?;
        let args = aggs
            .iter()
            .map(|a| a.arg.as_ref().map(|e| eval_expr(e, &input.scope, r)).transpose())
            .collect::<Result<Vec<_>, _>>()?;
        let g = if keys.is_empty() {
            0
        } else {
            *index.entry(key_bytes(&kv)).or_insert_with(|| {
                groups.push((kv, fresh()));
                groups.len() - 1
            })
        };
        for ((acc, a), v) in groups[g].1.iter_mut().zip(aggs).zip(args) {
            acc.update(a.kind, v);
        }
    }
    Ok(groups
        .into_iter()
        .map(|(mut k, accs)| {
            k.extend(accs.into_iter().zip(&out_types).map(|(a, t)| a.finish(*t)));
            k
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnDef, TableSchema};
    use crate::plan::{col, lit_i32, lit_i64, OutputColumn};

    fn t(rows: &[(i32, i32)]) -> Catalog {
        let schema =
            TableSchema::new("R", vec![ColumnDef::new("x", DataType::Int32), ColumnDef::new("y", DataType::Int32)])
                .unwrap();
        let mut tab = Table::new(schema);
        for &(x, y) in rows {
            tab.push_row(&[Value::Int32(x), Value::Int32(y)]).unwrap();
        }
        let mut c = Catalog::new();
        c.register(tab).unwrap();
        c
    }

    fn scope() -> Scope {
        Scope::new(vec![
            OutputColumn { qualifier: "R".into(), name: "x".into(), ty: DataType::Int32 },
            OutputColumn { qualifier: "R".into(), name: "y".into(), ty: DataType::Int32 },
        ])
    }

    #[test]
    fn literal_and_column_arithmetic() {
        let s = scope();
        assert_eq!(eval_expr(&lit_i32(1).add(lit_i32(2)), &s, &[]).unwrap(), Value::Int32(3));
        let row = [Value::Int32(1), Value::Int32(2)];
        assert_eq!(eval_expr(&col("R", "x").add(col("R", "y")), &s, &row).unwrap(), Value::Int32(3));
        assert_eq!(eval_expr(&col("R", "x").add(lit_i64(5)), &s, &row).unwrap(), Value::Int64(6));
    }

    #[test]
    fn integer_division_by_zero_is_an_error() {
        let s = scope();
        let row = [Value::Int32(7), Value::Int32(0)];
        let e = eval_expr(&col("R", "x").div(col("R", "y")), &s, &row);
        assert!(matches!(e, Err(EvalError::DivisionByZero(_))));
        let e = eval_expr(&Expr::or(vec![col("R", "x").gt(lit_i32(0)), col("R", "x").div(col("R", "y")).eq(lit_i32(1))]), &s, &row);
        assert!(e.is_err(), "every operand is evaluated");
    }

    #[test]
    fn count_with_predicate() {
        let cat = t(&(0..10).map(|i| (i, 0)).collect::<Vec<_>>());
        let plan = PlanNode::scan("R").filter(col("R", "x").lt(lit_i32(5))).group_by(vec![], vec![AggFn::count_star()]);
        let out = interpret(&plan, &cat).unwrap();
        assert_eq!(out.rows().collect::<Vec<_>>(), vec![vec![Value::Int64(5)]]);
    }

    #[test]
    fn group_by_two_distinct_values() {
        let cat = t(&[(1, 0), (1, 0), (2, 0)]);
        let plan = PlanNode::scan("R").group_by(vec![col("R", "x")], vec![AggFn::count_star()]);
        let out = interpret(&plan, &cat).unwrap();
        assert_eq!(
            out.rows().collect::<Vec<_>>(),
            vec![vec![Value::Int32(1), Value::Int64(2)], vec![Value::Int32(2), Value::Int64(1)]]
        );
    }

    #[test]
    fn empty_ungrouped_aggregates_are_zero() {
        let cat = t(&[]);
        let plan = PlanNode::scan("R").group_by(
            vec![],
            vec![AggFn::count_star(), AggFn::min(col("R", "x")), AggFn::avg(col("R", "y"))],
        );
        let out = interpret(&plan, &cat).unwrap();
        assert_eq!(out.rows().collect::<Vec<_>>(), vec![vec![Value::Int64(0), Value::Int32(0), Value::Float64(0.0)]]);
    }

    #[test]
    fn sort_is_stable() {
        let cat = t(&[(2, 0), (1, 1), (2, 2), (1, 3)]);
        let plan = PlanNode::scan("R").sort(vec![SortKey::asc(col("R", "x"))]);
        let ys: Vec<Value> = interpret(&plan, &cat).unwrap().rows().map(|r| r[1].clone()).collect();
        assert_eq!(ys, [1, 3, 0, 2].map(Value::Int32));
    }

    #[test]
    fn char_compare_pads_with_zeros() {
        let a = Value::char_padded(b"ab", 2).unwrap();
        let b = Value::char_padded(b"ab", 4).unwrap();
        let c = Value::char_padded(b"ab\x01", 4).unwrap();
        assert_eq!(compare_values(&a, &b), Some(Ordering::Equal));
        assert_eq!(compare_values(&a, &c), Some(Ordering::Less));
    }
}
