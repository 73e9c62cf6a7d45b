use std::fmt;

use crate::catalog::{DataType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    /// Applies the comparison to an ordering.
    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Ge => ord != Less,
            CmpOp::Gt => ord == Greater,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogicOp {
    And,
    Or,
    Not,
}

/// A qualified column reference. An empty `table` names a column produced
/// by an operator (aggregates, computed grouping keys, projections).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: &str, column: &str) -> ColumnRef {
        ColumnRef { table: table.into(), column: column.into() }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.table.is_empty() {
            f.write_str(&self.column)
        } else {
            write!(f, "{}.{}", self.table, self.column)
        }
    }
}

/// Scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Value),
    Arith { op: ArithOp, left: Box<Expr>, right: Box<Expr> },
    Cmp { op: CmpOp, left: Box<Expr>, right: Box<Expr> },
    /// `And`/`Or` take two or more operands, `Not` exactly one.
    Logic { op: LogicOp, operands: Vec<Expr> },
}

pub fn col(table: &str, column: &str) -> Expr {
    Expr::Column(ColumnRef { table: table.into(), column: column.into() })
}

pub fn lit(value: Value) -> Expr {
    Expr::Literal(value)
}

pub fn lit_i32(v: i32) -> Expr {
    Expr::Literal(Value::Int32(v))
}

pub fn lit_i64(v: i64) -> Expr {
    Expr::Literal(Value::Int64(v))
}

pub fn lit_f64(v: f64) -> Expr {
    Expr::Literal(Value::Float64(v))
}

pub fn lit_str(s: &str) -> Expr {
    Expr::Literal(Value::char_padded(s.as_bytes(), s.len().max(1) as u16).expect("fits"))
}

impl Expr {
    pub fn arith(op: ArithOp, left: Expr, right: Expr) -> Expr {
        Expr::Arith { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn cmp(op: CmpOp, left: Expr, right: Expr) -> Expr {
        Expr::Cmp { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn and(operands: Vec<Expr>) -> Expr {
        Expr::Logic { op: LogicOp::And, operands }
    }

    pub fn or(operands: Vec<Expr>) -> Expr {
        Expr::Logic { op: LogicOp::Or, operands }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(operand: Expr) -> Expr {
        Expr::Logic { op: LogicOp::Not, operands: vec![operand] }
    }

    pub fn add(self, rhs: Expr) -> Expr {
        Expr::arith(ArithOp::Add, self, rhs)
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::arith(ArithOp::Sub, self, rhs)
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::arith(ArithOp::Mul, self, rhs)
    }

    pub fn div(self, rhs: Expr) -> Expr {
        Expr::arith(ArithOp::Div, self, rhs)
    }

    pub fn lt(self, rhs: Expr) -> Expr {
        Expr::cmp(CmpOp::Lt, self, rhs)
    }

    pub fn le(self, rhs: Expr) -> Expr {
        Expr::cmp(CmpOp::Le, self, rhs)
    }

    pub fn eq(self, rhs: Expr) -> Expr {
        Expr::cmp(CmpOp::Eq, self, rhs)
    }

    pub fn ne(self, rhs: Expr) -> Expr {
        Expr::cmp(CmpOp::Ne, self, rhs)
    }

    pub fn ge(self, rhs: Expr) -> Expr {
        Expr::cmp(CmpOp::Ge, self, rhs)
    }

    pub fn gt(self, rhs: Expr) -> Expr {
        Expr::cmp(CmpOp::Gt, self, rhs)
    }

    /// Calls `f` on every column reference, left to right.
    pub fn for_each_column<'a>(&'a self, f: &mut impl FnMut(&'a ColumnRef)) {
        match self {
            Expr::Column(c) => f(c),
            Expr::Literal(_) => {}
            Expr::Arith { left, right, .. } | Expr::Cmp { left, right, .. } => {
                left.for_each_column(f);
                right.for_each_column(f);
            }
            Expr::Logic { operands, .. } => operands.iter().for_each(|o| o.for_each_column(f)),
        }
    }

    pub fn columns(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        self.for_each_column(&mut |c| out.push(c));
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Literal(v) => fmt_literal(v, f),
            Expr::Arith { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
            Expr::Cmp { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
            Expr::Logic { op: LogicOp::Not, operands } => write!(f, "(NOT {})", operands[0]),
            Expr::Logic { op, operands } => {
                let sep = if *op == LogicOp::And { " AND " } else { " OR " };
                f.write_str("(")?;
                for (i, o) in operands.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    write!(f, "{o}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Literal syntax shared with the SQL lexer: `INT64` literals carry an
/// `i64` suffix, floats always contain `.`, `e`, `inf`, and `CHAR(n)`
/// literals are written unpadded with an explicit width when it exceeds the
/// text length.
fn fmt_literal(v: &Value, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match v {
        Value::Int32(x) => write!(f, "{x}"),
        Value::Int64(x) => write!(f, "{x}i64"),
        Value::Float64(x) if x.is_infinite() => {
            f.write_str(if *x > 0.0 { "1e999" } else { "-1e999" })
        }
        Value::Float64(x) => write!(f, "{x:?}"),
        Value::Bool(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
        Value::Char(bytes) => {
            let text = v.to_text();
            write!(f, "'{}'", text.replace('\'', "''"))?;
            if text.len() != bytes.len() {
                write!(f, ":{}", bytes.len())?;
            }
            Ok(())
        }
    }
}

/// Aggregate function kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggKind {
    CountStar,
    Sum,
    Min,
    Max,
    Avg,
}

impl AggKind {
    pub fn name(self) -> &'static str {
        match self {
            AggKind::CountStar => "count",
            AggKind::Sum => "sum",
            AggKind::Min => "min",
            AggKind::Max => "max",
            AggKind::Avg => "avg",
        }
    }

    /// Result type for an argument of type `arg`.
    pub fn result_type(self, arg: Option<DataType>) -> DataType {
        match (self, arg) {
            (AggKind::CountStar, _) => DataType::Int64,
            (AggKind::Avg, _) => DataType::Float64,
            (AggKind::Sum, Some(DataType::Float64)) => DataType::Float64,
            (AggKind::Sum, _) => DataType::Int64,
            (_, Some(t)) => t,
            (_, None) => DataType::Int64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggFn {
    pub kind: AggKind,
    pub arg: Option<Expr>,
}

impl AggFn {
    pub fn count_star() -> AggFn {
        AggFn { kind: AggKind::CountStar, arg: None }
    }

    pub fn sum(e: Expr) -> AggFn {
        AggFn { kind: AggKind::Sum, arg: Some(e) }
    }

    pub fn min(e: Expr) -> AggFn {
        AggFn { kind: AggKind::Min, arg: Some(e) }
    }

    pub fn max(e: Expr) -> AggFn {
        AggFn { kind: AggKind::Max, arg: Some(e) }
    }

    pub fn avg(e: Expr) -> AggFn {
        AggFn { kind: AggKind::Avg, arg: Some(e) }
    }
}

impl fmt::Display for AggFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.arg {
            None => write!(f, "{}(*)", self.kind.name().to_uppercase()),
            Some(e) => write!(f, "{}({e})", self.kind.name().to_uppercase()),
        }
    }
}
