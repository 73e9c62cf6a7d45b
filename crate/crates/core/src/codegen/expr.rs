use super::{Binder, CodegenError, ConstPool, Val};
use crate::catalog::{DataType, Value};
use crate::plan::{unify_numeric, ArithOp, CmpOp, Expr, LogicOp, PlanError};
use crate::wasm::{BlockType, FuncBuilder, LoadOp, Local, NumOp, ValType};

/// How `AND`/`OR` operands are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShortCircuit {
    /// Short-circuit only predicates classified as costly.
    #[default]
    Auto,
    Always,
    Never,
}

pub struct ExprCtx<'a> {
    pub consts: &'a mut ConstPool,
    /// Evaluate later `AND`/`OR` operands only when needed.
    pub short_circuit: bool,
}

fn fresh(fb: &mut FuncBuilder, ty: DataType) -> Val {
    let local = fb.fresh_local(ValType::of(ty));
    fb.local_set(local);
    Val { local, ty }
}

/// Pushes `v`, sign-extending an `INT32` when `to` is `INT64`.
fn push_as(fb: &mut FuncBuilder, v: Val, to: DataType) {
    fb.local_get(v.local);
    if v.ty == DataType::Int32 && to == DataType::Int64 {
        fb.num(NumOp::I64ExtendI32S);
    }
}

/// Emits code evaluating `e` and returns the local holding its value.
pub fn compile_expr(
    fb: &mut FuncBuilder,
    e: &Expr,
    binder: &mut dyn Binder,
    ctx: &mut ExprCtx,
) -> Result<Val, CodegenError> {
    match e {
        Expr::Column(c) => binder.column(fb, c),
        Expr::Literal(v) => {
            match v {
                Value::Int32(x) => fb.i32_const(*x),
                Value::Int64(x) => fb.i64_const(*x),
                Value::Float64(x) => fb.f64_const(*x),
                Value::Bool(b) => fb.i32_const(*b as i32),
                Value::Char(bytes) => {
                    let addr = ctx.consts.intern(bytes);
                    fb.i32_const(addr as i32);
                }
            }
            Ok(fresh(fb, v.data_type()))
        }
        Expr::Arith { op, left, right } => {
            let a = compile_expr(fb, left, binder, ctx)?;
            let b = compile_expr(fb, right, binder, ctx)?;
            let ty = unify_numeric(a.ty, b.ty).filter(|t| t.is_numeric()).ok_or_else(|| {
                PlanError::TypeMismatch { expr: e.to_string(), detail: format!("{} vs {}", a.ty, b.ty) }
            })?;
            push_as(fb, a, ty);
            push_as(fb, b, ty);
            use NumOp::*;
            let num = match (ty, op) {
                (DataType::Int32, ArithOp::Add) => I32Add,
                (DataType::Int32, ArithOp::Sub) => I32Sub,
                (DataType::Int32, ArithOp::Mul) => I32Mul,
                (DataType::Int32, ArithOp::Div) => I32DivS,
                (DataType::Int64, ArithOp::Add) => I64Add,
                (DataType::Int64, ArithOp::Sub) => I64Sub,
                (DataType::Int64, ArithOp::Mul) => I64Mul,
                (DataType::Int64, ArithOp::Div) => I64DivS,
                (_, ArithOp::Add) => F64Add,
                (_, ArithOp::Sub) => F64Sub,
                (_, ArithOp::Mul) => F64Mul,
                (_, ArithOp::Div) => F64Div,
            };
            fb.num(num);
            Ok(fresh(fb, ty))
        }
        Expr::Cmp { op, left, right } => {
            let a = compile_expr(fb, left, binder, ctx)?;
            let b = compile_expr(fb, right, binder, ctx)?;
            emit_cmp(fb, *op, a, b)?;
            Ok(fresh(fb, DataType::Bool))
        }
        Expr::Logic { op: LogicOp::Not, operands } => {
            let v = compile_expr(fb, &operands[0], binder, ctx)?;
            fb.local_get(v.local);
            fb.num(NumOp::I32Eqz);
            Ok(fresh(fb, DataType::Bool))
        }
        Expr::Logic { op, operands } => {
            let and = *op == LogicOp::And;
            let first = compile_expr(fb, &operands[0], binder, ctx)?;
            if ctx.short_circuit {
                let res = fb.fresh_local(ValType::I32);
                fb.local_get(first.local);
                fb.local_set(res);
                let mut opened = 0;
                for o in &operands[1..] {
                    fb.local_get(res);
                    if !and {
                        fb.num(NumOp::I32Eqz);
                    }
                    fb.if_(BlockType::Empty);
                    opened += 1;
                    let v = compile_expr(fb, o, binder, ctx)?;
                    fb.local_get(v.local);
                    fb.local_set(res);
                }
                for _ in 0..opened {
                    fb.end();
                }
                Ok(Val { local: res, ty: DataType::Bool })
            } else {
                let mut vals = vec![first];
                for o in &operands[1..] {
                    vals.push(compile_expr(fb, o, binder, ctx)?);
                }
                fb.local_get(vals[0].local);
                for v in &vals[1..] {
                    fb.local_get(v.local);
                    fb.num(if and { NumOp::I32And } else { NumOp::I32Or });
                }
                Ok(fresh(fb, DataType::Bool))
            }
        }
    }
}

/// Pushes the `i32` outcome of `a op b`.
pub(crate) fn emit_cmp(fb: &mut FuncBuilder, op: CmpOp, a: Val, b: Val) -> Result<(), CodegenError> {
    use NumOp::*;
    if let (DataType::Char(na), DataType::Char(nb)) = (a.ty, b.ty) {
        let c = emit_char_cmp(fb, a.local, na as u32, b.local, nb as u32);
        fb.local_get(c);
        fb.i32_const(0);
        fb.num(match op {
            CmpOp::Lt => I32LtS,
            CmpOp::Le => I32LeS,
            CmpOp::Eq => I32Eq,
            CmpOp::Ne => I32Ne,
            CmpOp::Ge => I32GeS,
            CmpOp::Gt => I32GtS,
        });
        return Ok(());
    }
    let ty = if a.ty == DataType::Bool && b.ty == DataType::Bool {
        DataType::Bool
    } else {
        unify_numeric(a.ty, b.ty).filter(|t| t.is_numeric()).ok_or_else(|| {
            CodegenError::Unsupported(format!("comparison of {} with {}", a.ty, b.ty))
        })?
    };
    push_as(fb, a, ty);
    push_as(fb, b, ty);
    let ops = match ty {
        DataType::Int64 => [I64LtS, I64LeS, I64Eq, I64Ne, I64GeS, I64GtS],
        DataType::Float64 => [F64Lt, F64Le, F64Eq, F64Ne, F64Ge, F64Gt],
        DataType::Bool => [I32LtU, I32LeU, I32Eq, I32Ne, I32GeU, I32GtU],
        _ => [I32LtS, I32LeS, I32Eq, I32Ne, I32GeS, I32GtS],
    };
    let i = match op {
        CmpOp::Lt => 0,
        CmpOp::Le => 1,
        CmpOp::Eq => 2,
        CmpOp::Ne => 3,
        CmpOp::Ge => 4,
        CmpOp::Gt => 5,
    };
    fb.num(ops[i]);
    Ok(())
}

/// Emits a bytewise comparison of the `na` bytes at `a` with the `nb`
/// bytes at `b`, the shorter one read as if zero padded. Returns a local
/// holding -1, 0 or 1.
pub fn emit_char_cmp(fb: &mut FuncBuilder, a: Local, na: u32, b: Local, nb: u32) -> Local {
    let res = fb.fresh_local(ValType::I32);
    let i = fb.fresh_local(ValType::I32);
    let x = fb.fresh_local(ValType::I32);
    let y = fb.fresh_local(ValType::I32);
    fb.i32_const(0);
    fb.local_set(res);
    let m = na.min(nb);
    if m > 0 {
        fb.i32_const(0);
        fb.local_set(i);
        let done = fb.block(BlockType::Empty);
        let top = fb.loop_(BlockType::Empty);
        for (p, v) in [(a, x), (b, y)] {
            fb.local_get(p);
            fb.local_get(i);
            fb.num(NumOp::I32Add);
            fb.load(LoadOp::I32U8, 0);
            fb.local_set(v);
        }
        fb.local_get(x);
        fb.local_get(y);
        fb.num(NumOp::I32GtU);
        fb.local_get(x);
        fb.local_get(y);
        fb.num(NumOp::I32LtU);
        fb.num(NumOp::I32Sub);
        fb.local_tee(res);
        fb.br_if(done);
        fb.local_get(i);
        fb.i32_const(1);
        fb.num(NumOp::I32Add);
        fb.local_tee(i);
        fb.i32_const(m as i32);
        fb.num(NumOp::I32LtU);
        fb.br_if(top);
        fb.end();
        fb.end();
    }
    if na != nb {
        // Equal so far: any nonzero byte in the longer tail decides.
        let (p, n, sign) = if na > nb { (a, na, 1) } else { (b, nb, -1) };
        fb.local_get(res);
        fb.num(NumOp::I32Eqz);
        fb.if_(BlockType::Empty);
        fb.i32_const(m as i32);
        fb.local_set(i);
        let done = fb.block(BlockType::Empty);
        let top = fb.loop_(BlockType::Empty);
        fb.local_get(p);
        fb.local_get(i);
        fb.num(NumOp::I32Add);
        fb.load(LoadOp::I32U8, 0);
        fb.if_(BlockType::Empty);
        fb.i32_const(sign);
        fb.local_set(res);
        fb.br(done);
        fb.end();
        fb.local_get(i);
        fb.i32_const(1);
        fb.num(NumOp::I32Add);
        fb.local_tee(i);
        fb.i32_const(n as i32);
        fb.num(NumOp::I32LtU);
        fb.br_if(top);
        fb.end();
        fb.end();
        fb.end();
    }
    res
}
