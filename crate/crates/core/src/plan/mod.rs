//! Physical plans, scalar expressions and their type rules.

mod expr;
pub mod text;

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::catalog::{Catalog, ColumnDef, DataType, TableSchema};

pub use expr::*;

/// Maximum number of sort keys in one ORDER BY.
pub const MAX_SORT_KEYS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unresolved column `{0}`")]
    UnresolvedColumn(String),
    #[error("ambiguous column `{0}`")]
    AmbiguousColumn(String),
    #[error("type mismatch in `{expr}`: {detail}")]
    TypeMismatch { expr: String, detail: String },
    #[error("arithmetic over {ty} in `{expr}`")]
    InvalidArith { expr: String, ty: DataType },
    #[error("invalid aggregate `{0}`")]
    InvalidAggregate(String),
    #[error("aggregate `{0}` used outside of a grouping operator")]
    AggregateOutsideGroupBy(String),
    #[error("invalid plan: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub expr: Expr,
    pub direction: Direction,
}

impl SortKey {
    pub fn asc(expr: Expr) -> SortKey {
        SortKey { expr, direction: Direction::Asc }
    }

    pub fn desc(expr: Expr) -> SortKey {
        SortKey { expr, direction: Direction::Desc }
    }
}

/// Physical operator tree. The build side of a join is its left child.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanNode {
    Scan { table: String },
    Filter { pred: Expr, child: Box<PlanNode> },
    Project { exprs: Vec<Expr>, child: Box<PlanNode> },
    HashGroupBy { keys: Vec<Expr>, aggs: Vec<AggFn>, child: Box<PlanNode> },
    /// Equi-join on `build.e = probe.e` for every pair in `keys`.
    HashJoin { keys: Vec<(Expr, Expr)>, build: Box<PlanNode>, probe: Box<PlanNode> },
    Sort { order: Vec<SortKey>, child: Box<PlanNode> },
}

impl PlanNode {
    pub fn scan(table: &str) -> PlanNode {
        PlanNode::Scan { table: table.into() }
    }

    pub fn filter(self, pred: Expr) -> PlanNode {
        PlanNode::Filter { pred, child: Box::new(self) }
    }

    pub fn project(self, exprs: Vec<Expr>) -> PlanNode {
        PlanNode::Project { exprs, child: Box::new(self) }
    }

    pub fn group_by(self, keys: Vec<Expr>, aggs: Vec<AggFn>) -> PlanNode {
        PlanNode::HashGroupBy { keys, aggs, child: Box::new(self) }
    }

    pub fn sort(self, order: Vec<SortKey>) -> PlanNode {
        PlanNode::Sort { order, child: Box::new(self) }
    }

    /// Joins with `self` as the build side.
    pub fn join(self, probe: PlanNode, keys: Vec<(Expr, Expr)>) -> PlanNode {
        PlanNode::HashJoin { keys, build: Box::new(self), probe: Box::new(probe) }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PlanNode::Scan { .. } => "Scan",
            PlanNode::Filter { .. } => "Filter",
            PlanNode::Project { .. } => "Project",
            PlanNode::HashGroupBy { .. } => "HashGroupBy",
            PlanNode::HashJoin { .. } => "HashJoin",
            PlanNode::Sort { .. } => "Sort",
        }
    }

    pub fn children(&self) -> Vec<&PlanNode> {
        match self {
            PlanNode::Scan { .. } => vec![],
            PlanNode::Filter { child, .. }
            | PlanNode::Project { child, .. }
            | PlanNode::HashGroupBy { child, .. }
            | PlanNode::Sort { child, .. } => vec![child],
            PlanNode::HashJoin { build, probe, .. } => vec![build, probe],
        }
    }

    /// Nodes in pre-order; a node's position is its [`NodeId`].
    pub fn preorder(&self) -> Vec<&PlanNode> {
        let mut out = Vec::new();
        fn walk<'a>(n: &'a PlanNode, out: &mut Vec<&'a PlanNode>) {
            out.push(n);
            for c in n.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn is_breaker(&self) -> bool {
        matches!(self, PlanNode::HashGroupBy { .. } | PlanNode::HashJoin { .. } | PlanNode::Sort { .. })
    }

    /// Tables referenced by scans, in pre-order, without duplicates.
    pub fn tables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for n in self.preorder() {
            if let PlanNode::Scan { table } = n {
                if !out.contains(&table.as_str()) {
                    out.push(table);
                }
            }
        }
        out
    }
}

impl fmt::Display for PlanNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&text::to_text(self))
    }
}

/// Index of a node in [`PlanNode::preorder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// A column visible to expressions above an operator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutputColumn {
    /// Source table, or empty for computed columns.
    pub qualifier: String,
    pub name: String,
    pub ty: DataType,
}

/// Columns an expression may reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scope {
    pub columns: Vec<OutputColumn>,
}

impl Scope {
    pub fn new(columns: Vec<OutputColumn>) -> Scope {
        Scope { columns }
    }

    pub fn from_schemas(schemas: &[TableSchema]) -> Scope {
        Scope {
            columns: schemas
                .iter()
                .flat_map(|s| {
                    s.columns.iter().map(|c| OutputColumn {
                        qualifier: s.name.clone(),
                        name: c.name.clone(),
                        ty: c.ty,
                    })
                })
                .collect(),
        }
    }

    /// Position of the column `c` names. An empty table qualifier matches
    /// any column with that name.
    pub fn resolve(&self, c: &ColumnRef) -> Result<usize, PlanError> {
        let mut found = None;
        for (i, oc) in self.columns.iter().enumerate() {
            if oc.name == c.column && (c.table.is_empty() || oc.qualifier == c.table) {
                if found.is_some() {
                    return Err(PlanError::AmbiguousColumn(c.to_string()));
                }
                found = Some(i);
            }
        }
        found.ok_or_else(|| PlanError::UnresolvedColumn(c.to_string()))
    }

    pub fn concat(&self, other: &Scope) -> Scope {
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Scope { columns }
    }
}

/// Computes the type of `expr`. Pure and idempotent.
///
/// Mixed `INT32`/`INT64` arithmetic and comparisons widen to `INT64`; there
/// is no implicit conversion between integers and floats. `CHAR` values of
/// different widths compare as if zero padded to the longer width.
pub fn typecheck(expr: &Expr, scope: &Scope) -> Result<DataType, PlanError> {
    match expr {
        Expr::Column(c) => Ok(scope.columns[scope.resolve(c)?].ty),
        Expr::Literal(v) => Ok(v.data_type()),
        Expr::Arith { left, right, .. } => {
            let (l, r) = (typecheck(left, scope)?, typecheck(right, scope)?);
            for t in [l, r] {
                if !t.is_numeric() {
                    return Err(PlanError::InvalidArith { expr: expr.to_string(), ty: t });
                }
            }
            unify_numeric(l, r).ok_or_else(|| mismatch(expr, l, r))
        }
        Expr::Cmp { left, right, .. } => {
            let (l, r) = (typecheck(left, scope)?, typecheck(right, scope)?);
            let ok = match (l, r) {
                (DataType::Char(_), DataType::Char(_)) => true,
                _ if l.is_numeric() && r.is_numeric() => unify_numeric(l, r).is_some(),
                _ => l == r,
            };
            if ok {
                Ok(DataType::Bool)
            } else {
                Err(mismatch(expr, l, r))
            }
        }
        Expr::Logic { op, operands } => {
            let arity_ok = match op {
                LogicOp::Not => operands.len() == 1,
                _ => operands.len() >= 2,
            };
            if !arity_ok {
                return Err(PlanError::Invalid(format!("bad operand count in `{expr}`")));
            }
            for o in operands {
                let t = typecheck(o, scope)?;
                if t != DataType::Bool {
                    return Err(PlanError::TypeMismatch {
                        expr: expr.to_string(),
                        detail: format!("logical operand `{o}` is {t}, expected BOOL"),
                    });
                }
            }
            Ok(DataType::Bool)
        }
    }
}

fn mismatch(expr: &Expr, l: DataType, r: DataType) -> PlanError {
    PlanError::TypeMismatch { expr: expr.to_string(), detail: format!("{l} vs {r}") }
}

/// Common type of two numeric operands, if any.
pub fn unify_numeric(l: DataType, r: DataType) -> Option<DataType> {
    match (l, r) {
        _ if l == r => Some(l),
        (DataType::Int32, DataType::Int64) | (DataType::Int64, DataType::Int32) => Some(DataType::Int64),
        _ => None,
    }
}

/// Name of the column aggregate `i` produces. A kind that appears once is
/// named after the function (`count`, `min`, ...); repeated kinds get the
/// aggregate's position as suffix (`min_0`, `min_2`).
pub fn agg_output_name(aggs: &[AggFn], i: usize) -> String {
    let kind = aggs[i].kind;
    if aggs.iter().filter(|a| a.kind == kind).count() == 1 {
        kind.name().to_string()
    } else {
        format!("{}_{i}", kind.name())
    }
}

/// Whether predicate evaluation warrants short-circuiting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheapnessClass {
    Cheap,
    Costly,
}

/// `CHAR` comparisons longer than this many bytes are costly.
pub const CHEAP_CHAR_BYTES: u16 = 8;

/// Numeric and boolean comparisons are cheap; a comparison of `CHAR`
/// values wider than [`CHEAP_CHAR_BYTES`] makes the whole predicate costly.
pub fn classify_predicate(pred: &Expr, scope: &Scope) -> CheapnessClass {
    fn costly(e: &Expr, scope: &Scope) -> bool {
        match e {
            Expr::Column(_) | Expr::Literal(_) => false,
            Expr::Arith { left, right, .. } => costly(left, scope) || costly(right, scope),
            Expr::Cmp { left, right, .. } => {
                let wide = |x: &Expr| {
                    matches!(typecheck(x, scope), Ok(DataType::Char(n)) if n > CHEAP_CHAR_BYTES)
                };
                wide(left) || wide(right)
            }
            Expr::Logic { operands, .. } => operands.iter().any(|o| costly(o, scope)),
        }
    }
    if costly(pred, scope) {
        CheapnessClass::Costly
    } else {
        CheapnessClass::Cheap
    }
}

/// Output columns of every operator, computed bottom-up.
pub fn output_scope(plan: &PlanNode, catalog: &Catalog) -> Result<Scope, PlanError> {
    match plan {
        PlanNode::Scan { table } => {
            let schema = catalog.schema(table).map_err(|_| PlanError::UnknownTable(table.clone()))?;
            Ok(Scope::from_schemas(std::slice::from_ref(schema)))
        }
        PlanNode::Filter { pred, child } => {
            let scope = output_scope(child, catalog)?;
            let t = typecheck(pred, &scope)?;
            if t != DataType::Bool {
                return Err(PlanError::TypeMismatch {
                    expr: pred.to_string(),
                    detail: format!("filter predicate is {t}, expected BOOL"),
                });
            }
            Ok(scope)
        }
        PlanNode::Project { exprs, child } => {
            let scope = output_scope(child, catalog)?;
            if exprs.is_empty() {
                return Err(PlanError::Invalid("empty projection".into()));
            }
            let mut out = Vec::with_capacity(exprs.len());
            for (i, e) in exprs.iter().enumerate() {
                let ty = typecheck(e, &scope)?;
                out.push(match e {
                    Expr::Column(c) => {
                        let src = &scope.columns[scope.resolve(c)?];
                        OutputColumn { qualifier: src.qualifier.clone(), name: src.name.clone(), ty }
                    }
                    _ => OutputColumn { qualifier: String::new(), name: format!("expr{i}"), ty },
                });
            }
            Ok(Scope::new(out))
        }
        PlanNode::HashGroupBy { keys, aggs, child } => {
            let scope = output_scope(child, catalog)?;
            if keys.is_empty() && aggs.is_empty() {
                return Err(PlanError::Invalid("grouping without keys or aggregates".into()));
            }
            let mut out = Vec::new();
            for (i, k) in keys.iter().enumerate() {
                let ty = typecheck(k, &scope)?;
                out.push(match k {
                    Expr::Column(c) => {
                        let src = &scope.columns[scope.resolve(c)?];
                        OutputColumn { qualifier: src.qualifier.clone(), name: src.name.clone(), ty }
                    }
                    _ => OutputColumn { qualifier: String::new(), name: format!("key{i}"), ty },
                });
            }
            for (i, a) in aggs.iter().enumerate() {
                let arg_ty = match (&a.kind, &a.arg) {
                    (AggKind::CountStar, None) => None,
                    (AggKind::CountStar, Some(_)) | (_, None) => {
                        return Err(PlanError::InvalidAggregate(a.to_string()))
                    }
                    (_, Some(e)) => {
                        let t = typecheck(e, &scope)?;
                        if !t.is_numeric() {
                            return Err(PlanError::InvalidAggregate(a.to_string()));
                        }
                        Some(t)
                    }
                };
                out.push(OutputColumn {
                    qualifier: String::new(),
                    name: agg_output_name(aggs, i),
                    ty: a.kind.result_type(arg_ty),
                });
            }
            Ok(Scope::new(out))
        }
        PlanNode::HashJoin { keys, build, probe } => {
            let b = output_scope(build, catalog)?;
            let p = output_scope(probe, catalog)?;
            if keys.is_empty() {
                return Err(PlanError::Invalid("join without key".into()));
            }
            for (l, r) in keys {
                let (lt, rt) = (typecheck(l, &b)?, typecheck(r, &p)?);
                if lt != rt {
                    return Err(PlanError::TypeMismatch {
                        expr: format!("{l} = {r}"),
                        detail: format!("join keys {lt} vs {rt}"),
                    });
                }
            }
            Ok(b.concat(&p))
        }
        PlanNode::Sort { order, child } => {
            let scope = output_scope(child, catalog)?;
            if order.is_empty() || order.len() > MAX_SORT_KEYS {
                return Err(PlanError::Invalid(format!(
                    "sort needs 1..={MAX_SORT_KEYS} keys, got {}",
                    order.len()
                )));
            }
            for k in order {
                if typecheck(&k.expr, &scope)? == DataType::Bool {
                    return Err(PlanError::TypeMismatch {
                        expr: k.expr.to_string(),
                        detail: "BOOL is not a sort key type".into(),
                    });
                }
            }
            Ok(scope)
        }
    }
}

/// Validates `plan` against `catalog` and returns its result schema.
/// Result column names are the output column names, suffixed with the
/// column position where a name repeats.
pub fn validate(plan: &PlanNode, catalog: &Catalog) -> Result<TableSchema, PlanError> {
    let scope = output_scope(plan, catalog)?;
    Ok(result_schema(&scope))
}

pub fn result_schema(scope: &Scope) -> TableSchema {
    let mut seen = HashSet::new();
    let columns = scope
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let name = if seen.insert(c.name.clone()) { c.name.clone() } else { format!("{}_{i}", c.name) };
            seen.insert(name.clone());
            ColumnDef::new(name, c.ty)
        })
        .collect();
    TableSchema { name: "result".into(), columns }
}
