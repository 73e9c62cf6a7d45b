//! Seeded random tables and plans for differential testing, plus result
//! comparison that tolerates tie order and float rounding.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{generate, Catalog, ColumnDef, DataType, Distribution, GenSpec, Table, TableSchema, Value};
use crate::interp::{compare_keys, compare_values, eval_expr};
use crate::plan::{
    output_scope, typecheck, validate, AggFn, ArithOp, CmpOp, ColumnRef, Expr, PlanNode, Scope, SortKey,
};

/// Limits for generated corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusConfig {
    pub max_rows: usize,
    pub max_depth: usize,
    /// Upper bound on the product of join input sizes.
    pub max_join_product: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { max_rows: 10_000, max_depth: 4, max_join_product: 2_000_000 }
    }
}

fn pick_rows(rng: &mut ChaCha8Rng, max: usize) -> usize {
    match rng.gen_range(0..10) {
        0 => 0,
        1 => rng.gen_range(1..=3).min(max),
        2 => max,
        _ => rng.gen_range(1..=max.min(2_000).max(1)),
    }
}

/// Three tables with a spread of types and key domains:
/// `A(id, k, w, v, c, f)`, `B(a_id, k, x, s, v)` and `C(k, n, t)`.
pub fn random_catalog(seed: u64, cfg: &CorpusConfig) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_rows = pick_rows(&mut rng, cfg.max_rows);
    let mut cat = Catalog::new();
    let a = TableSchema::new(
        "A",
        vec![
            ColumnDef::new("id", DataType::Int32),
            ColumnDef::new("k", DataType::Int32),
            ColumnDef::new("w", DataType::Int64),
            ColumnDef::new("v", DataType::Float64),
            ColumnDef::new("c", DataType::Char(4)),
            ColumnDef::new("f", DataType::Bool),
        ],
    )
    .expect("schema");
    let spec = GenSpec {
        rows: a_rows,
        columns: vec![
            Distribution::Sequential,
            Distribution::UniformInt { lo: 0, hi: 19 },
            Distribution::UniformInt { lo: -1000, hi: 1000 },
            Distribution::UniformFloat01,
            Distribution::UniformInt { lo: 0, hi: 30 },
            Distribution::UniformInt { lo: 0, hi: 1 },
        ],
        seed: rng.gen(),
    };
    cat.register(generate(&a, &spec).expect("generate A")).expect("register");

    let b = TableSchema::new(
        "B",
        vec![
            ColumnDef::new("a_id", DataType::Int32),
            ColumnDef::new("k", DataType::Int32),
            ColumnDef::new("x", DataType::Int64),
            ColumnDef::new("s", DataType::Char(12)),
            ColumnDef::new("v", DataType::Float64),
        ],
    )
    .expect("schema");
    let spec = GenSpec {
        rows: pick_rows(&mut rng, cfg.max_rows),
        columns: vec![
            Distribution::UniformInt { lo: 0, hi: a_rows.max(1) as i64 + 5 },
            Distribution::UniformInt { lo: 0, hi: 19 },
            Distribution::UniformInt { lo: -50, hi: 50 },
            Distribution::UniformInt { lo: 0, hi: 500 },
            Distribution::UniformInt { lo: -100, hi: 100 },
        ],
        seed: rng.gen(),
    };
    cat.register(generate(&b, &spec).expect("generate B")).expect("register");

    let c = TableSchema::new(
        "C",
        vec![
            ColumnDef::new("k", DataType::Int32),
            ColumnDef::new("n", DataType::Int64),
            ColumnDef::new("t", DataType::Char(2)),
        ],
    )
    .expect("schema");
    let spec = GenSpec {
        rows: rng.gen_range(0..=40),
        columns: vec![
            Distribution::Sequential,
            Distribution::UniformInt { lo: 1, hi: 9 },
            Distribution::UniformInt { lo: 0, hi: 99 },
        ],
        seed: rng.gen(),
    };
    cat.register(generate(&c, &spec).expect("generate C")).expect("register");
    cat
}

/// Generates well-typed plans over a catalog.
pub struct PlanGen<'c> {
    rng: ChaCha8Rng,
    catalog: &'c Catalog,
    cfg: CorpusConfig,
}

/// Columns referable without ambiguity, with their types.
fn referable(scope: &Scope) -> Vec<(ColumnRef, DataType)> {
    scope
        .columns
        .iter()
        .map(|c| (ColumnRef { table: c.qualifier.clone(), column: c.name.clone() }, c.ty))
        .filter(|(r, _)| scope.resolve(r).is_ok())
        .collect()
}

fn bound(plan: &PlanNode, catalog: &Catalog) -> u64 {
    match plan {
        PlanNode::Scan { table } => catalog.get(table).map(|t| t.row_count() as u64).unwrap_or(0),
        PlanNode::HashGroupBy { keys, .. } if keys.is_empty() => 1,
        PlanNode::HashJoin { build, probe, .. } => bound(build, catalog).saturating_mul(bound(probe, catalog)),
        PlanNode::Filter { child, .. }
        | PlanNode::Project { child, .. }
        | PlanNode::HashGroupBy { child, .. }
        | PlanNode::Sort { child, .. } => bound(child, catalog),
    }
}

impl<'c> PlanGen<'c> {
    pub fn new(seed: u64, catalog: &'c Catalog, cfg: CorpusConfig) -> PlanGen<'c> {
        PlanGen { rng: ChaCha8Rng::seed_from_u64(seed), catalog, cfg }
    }

    /// A validated plan of depth at most `max_depth`.
    pub fn plan(&mut self) -> PlanNode {
        loop {
            let depth = if self.rng.gen_bool(0.05) { 1 } else { self.rng.gen_range(2.min(self.cfg.max_depth)..=self.cfg.max_depth) };
            let p = self.node(depth);
            if validate(&p, self.catalog).is_ok() {
                return p;
            }
        }
    }

    fn node(&mut self, depth: usize) -> PlanNode {
        if depth <= 1 {
            let t = ["A", "B", "C"].choose(&mut self.rng).expect("tables");
            return PlanNode::scan(t);
        }
        match self.rng.gen_range(0..5) {
            0 => {
                let child = self.node(depth - 1);
                let scope = self.scope(&child);
                let pred = self.predicate(&scope, 2);
                child.filter(pred)
            }
            1 => {
                let child = self.node(depth - 1);
                let scope = self.scope(&child);
                let n = self.rng.gen_range(1..=4);
                let exprs = (0..n).map(|_| self.any_expr(&scope)).collect();
                child.project(exprs)
            }
            2 => {
                let child = self.node(depth - 1);
                let scope = self.scope(&child);
                let nkeys = self.rng.gen_range(0..=2);
                let keys: Vec<Expr> = (0..nkeys).map(|_| self.key_expr(&scope)).collect();
                let naggs = self.rng.gen_range(usize::from(keys.is_empty())..=3);
                let aggs = (0..naggs).map(|_| self.aggregate(&scope)).collect();
                child.group_by(keys, aggs)
            }
            3 => {
                let build = self.node(depth - 1);
                let probe = self.node(depth - 1);
                if bound(&build, self.catalog).saturating_mul(bound(&probe, self.catalog)) > self.cfg.max_join_product {
                    return build;
                }
                let (bs, ps) = (self.scope(&build), self.scope(&probe));
                let mut pairs = Vec::new();
                for (br, bt) in referable(&bs) {
                    for (pr, pt) in referable(&ps) {
                        if bt == pt && bt != DataType::Float64 {
                            pairs.push((Expr::Column(br.clone()), Expr::Column(pr)));
                        }
                    }
                }
                if pairs.is_empty() {
                    return probe;
                }
                let n = if pairs.len() > 1 && self.rng.gen_bool(0.2) { 2 } else { 1 };
                let keys = pairs.choose_multiple(&mut self.rng, n).cloned().collect();
                build.join(probe, keys)
            }
            _ => {
                let child = self.node(depth - 1);
                let scope = self.scope(&child);
                let n = self.rng.gen_range(1..=3);
                let mut order = Vec::new();
                for _ in 0..n {
                    let Some(e) = self.sort_expr(&scope) else { return child };
                    order.push(if self.rng.gen_bool(0.5) { SortKey::asc(e) } else { SortKey::desc(e) });
                }
                child.sort(order)
            }
        }
    }

    fn scope(&self, p: &PlanNode) -> Scope {
        output_scope(p, self.catalog).unwrap_or_default()
    }

    fn columns_of(&self, scope: &Scope, pred: impl Fn(DataType) -> bool) -> Vec<ColumnRef> {
        referable(scope).into_iter().filter(|(_, t)| pred(*t)).map(|(r, _)| r).collect()
    }

    fn literal(&mut self, ty: DataType) -> Expr {
        Expr::Literal(match ty {
            DataType::Int32 => Value::Int32(self.rng.gen_range(-5..40)),
            DataType::Int64 => Value::Int64(self.rng.gen_range(-200..200)),
            DataType::Float64 => Value::Float64(self.rng.gen_range(0..100) as f64 / 100.0),
            DataType::Bool => Value::Bool(self.rng.gen()),
            DataType::Char(n) => {
                let text = self.rng.gen_range(0..300).to_string();
                let width = (n as usize).max(text.len()) + self.rng.gen_range(0..2);
                Value::char_padded(text.as_bytes(), width as u16).expect("fits")
            }
        })
    }

    /// A numeric expression of a type compatible with `ty`.
    fn numeric(&mut self, scope: &Scope, ty: DataType, depth: usize) -> Expr {
        let cols = self.columns_of(scope, |t| if ty == DataType::Float64 { t == ty } else { t.is_integer() && t != DataType::Bool });
        if depth > 0 && self.rng.gen_bool(0.35) {
            let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div].choose(&mut self.rng).expect("ops");
            let left = self.numeric(scope, ty, depth - 1);
            let right = if op == ArithOp::Div {
                // Divisors are nonzero constants other than -1.
                match ty {
                    DataType::Float64 => Expr::Literal(Value::Float64(self.rng.gen_range(2..9) as f64)),
                    DataType::Int64 => Expr::Literal(Value::Int64(self.rng.gen_range(2..9))),
                    _ => Expr::Literal(Value::Int32(self.rng.gen_range(2..9))),
                }
            } else {
                self.numeric(scope, ty, depth - 1)
            };
            return Expr::arith(op, left, right);
        }
        if !cols.is_empty() && self.rng.gen_bool(0.75) {
            return Expr::Column(cols.choose(&mut self.rng).expect("cols").clone());
        }
        self.literal(ty)
    }

    fn predicate(&mut self, scope: &Scope, depth: usize) -> Expr {
        let roll = self.rng.gen_range(0..10);
        if depth > 0 && roll < 3 {
            let n = self.rng.gen_range(2..=3);
            let ops = (0..n).map(|_| self.predicate(scope, depth - 1)).collect();
            return if self.rng.gen_bool(0.5) { Expr::and(ops) } else { Expr::or(ops) };
        }
        if depth > 0 && roll == 3 {
            return Expr::not(self.predicate(scope, depth - 1));
        }
        let bools = self.columns_of(scope, |t| t == DataType::Bool);
        if roll == 4 && !bools.is_empty() {
            return Expr::Column(bools.choose(&mut self.rng).expect("bools").clone());
        }
        let op = *[CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ne, CmpOp::Ge, CmpOp::Gt].choose(&mut self.rng).expect("ops");
        let chars = self.columns_of(scope, |t| t.is_char());
        if roll == 5 && !chars.is_empty() {
            let c = chars.choose(&mut self.rng).expect("chars").clone();
            let ty = typecheck(&Expr::Column(c.clone()), scope).expect("typed");
            let other = if chars.len() > 1 && self.rng.gen_bool(0.3) {
                Expr::Column(chars.choose(&mut self.rng).expect("chars").clone())
            } else {
                self.literal(ty)
            };
            return Expr::cmp(op, Expr::Column(c), other);
        }
        let ty = *[DataType::Int32, DataType::Int64, DataType::Float64].choose(&mut self.rng).expect("types");
        let left = self.numeric(scope, ty, 1);
        let right_ty = match ty {
            DataType::Float64 => DataType::Float64,
            _ => *[DataType::Int32, DataType::Int64].choose(&mut self.rng).expect("types"),
        };
        let right = self.numeric(scope, right_ty, 1);
        Expr::cmp(op, left, right)
    }

    fn any_expr(&mut self, scope: &Scope) -> Expr {
        let cols = referable(scope);
        match self.rng.gen_range(0..10) {
            0..=4 if !cols.is_empty() => Expr::Column(cols.choose(&mut self.rng).expect("cols").0.clone()),
            5 => self.predicate(scope, 1),
            _ => {
                let ty = *[DataType::Int32, DataType::Int64, DataType::Float64].choose(&mut self.rng).expect("types");
                self.numeric(scope, ty, 2)
            }
        }
    }

    fn key_expr(&mut self, scope: &Scope) -> Expr {
        let cols = self.columns_of(scope, |t| t != DataType::Float64);
        if !cols.is_empty() && self.rng.gen_bool(0.8) {
            return Expr::Column(cols.choose(&mut self.rng).expect("cols").clone());
        }
        let e = self.numeric(scope, DataType::Int64, 1);
        if e.columns().is_empty() {
            self.any_expr(scope)
        } else {
            e
        }
    }

    fn sort_expr(&mut self, scope: &Scope) -> Option<Expr> {
        let cols = self.columns_of(scope, |t| t != DataType::Bool);
        if cols.is_empty() {
            return None;
        }
        if self.rng.gen_bool(0.2) {
            let ints = self.columns_of(scope, |t| t == DataType::Int32 || t == DataType::Int64);
            if ints.len() >= 2 {
                let a = ints.choose(&mut self.rng).expect("ints").clone();
                let b = ints.choose(&mut self.rng).expect("ints").clone();
                return Some(Expr::Column(a).add(Expr::Column(b)));
            }
        }
        Some(Expr::Column(cols.choose(&mut self.rng).expect("cols").clone()))
    }

    fn aggregate(&mut self, scope: &Scope) -> AggFn {
        let ty = *[DataType::Int32, DataType::Int64, DataType::Float64].choose(&mut self.rng).expect("types");
        let arg = self.numeric(scope, ty, 1);
        match self.rng.gen_range(0..5) {
            0 => AggFn::count_star(),
            1 => AggFn::sum(arg),
            2 => AggFn::min(arg),
            3 => AggFn::max(arg),
            _ => AggFn::avg(arg),
        }
    }
}

/// Kinds of operator appearing in `plan`.
pub fn operator_kinds(plan: &PlanNode) -> Vec<&'static str> {
    let mut kinds: Vec<&'static str> = plan.preorder().iter().map(|n| n.kind_name()).collect();
    kinds.sort_unstable();
    kinds.dedup();
    kinds
}

fn close(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float64(x), Value::Float64(y)) => {
            x.to_bits() == y.to_bits() || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()) || (x.is_nan() && y.is_nan())
        }
        _ => a == b,
    }
}

fn row_order(a: &[Value], b: &[Value]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Value::Float64(x), Value::Float64(y)) => x.total_cmp(y),
            _ => compare_values(x, y).unwrap_or(Ordering::Equal),
        })
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Checks that `actual` holds the same rows as `expected`, in any order,
/// with FLOAT64 values equal within 1e-9 relative. When the plan's root is
/// a sort, `actual` must also be ordered by its keys.
pub fn compare_results(plan: &PlanNode, catalog: &Catalog, expected: &Table, actual: &Table) -> Result<(), String> {
    if expected.schema() != actual.schema() {
        return Err(format!("schema {:?} vs {:?}", expected.schema(), actual.schema()));
    }
    if expected.row_count() != actual.row_count() {
        return Err(format!("{} rows expected, {} produced", expected.row_count(), actual.row_count()));
    }
    let mut exp: Vec<Vec<Value>> = expected.rows().collect();
    let mut act: Vec<Vec<Value>> = actual.rows().collect();
    if let PlanNode::Sort { order, .. } = plan {
        let scope = output_scope(plan, catalog).map_err(|e| e.to_string())?;
        let keys = |r: &[Value]| -> Result<Vec<Value>, String> {
            order.iter().map(|k| eval_expr(&k.expr, &scope, r).map_err(|e| e.to_string())).collect()
        };
        for w in act.windows(2) {
            if compare_keys(order, &keys(&w[0])?, &keys(&w[1])?) == Ordering::Greater {
                return Err(format!("rows out of order: {:?} before {:?}", w[0], w[1]));
            }
        }
    }
    exp.sort_by(|a, b| row_order(a, b));
    act.sort_by(|a, b| row_order(a, b));
    for (i, (e, a)) in exp.iter().zip(&act).enumerate() {
        if e.len() != a.len() || !e.iter().zip(a).all(|(x, y)| close(x, y)) {
            return Err(format!("row {i} differs: expected {e:?}, got {a:?}"));
        }
    }
    Ok(())
}
