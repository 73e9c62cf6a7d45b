use super::{compile_expr, emit_char_cmp, CodegenError, ConstPool, ExprCtx, TupleBinder, TupleLayout, Val};
use crate::catalog::DataType;
use crate::plan::{typecheck, Direction, Expr, OutputColumn, Scope, MAX_SORT_KEYS};
use crate::wasm::{BlockType, Instr, FuncBuilder, FuncIdx, FuncType, LoadOp, Local, ModuleBuilder, NumOp, StoreOp, ValType};

/// Sort order over materialized tuples: key expressions over the fields
/// of `layout`, most significant first.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSpec {
    pub keys: Vec<(Expr, Direction)>,
    pub layout: TupleLayout,
}

impl OrderSpec {
    /// Checks that there are 1 to 16 keys and that each one is an
    /// orderable expression over the layout.
    pub fn new(keys: Vec<(Expr, Direction)>, layout: TupleLayout) -> Result<OrderSpec, CodegenError> {
        if keys.is_empty() || keys.len() > MAX_SORT_KEYS {
            return Err(CodegenError::Unsupported(format!("{} sort keys", keys.len())));
        }
        let scope = Scope::new(
            layout
                .fields
                .iter()
                .map(|f| OutputColumn { qualifier: f.qualifier.clone(), name: f.name.clone(), ty: f.ty })
                .collect(),
        );
        for (e, _) in &keys {
            let ty = typecheck(e, &scope)?;
            if ty == DataType::Bool {
                return Err(CodegenError::Unsupported(format!("BOOL sort key `{e}`")));
            }
            if e.columns().is_empty() {
                return Err(CodegenError::Unsupported(format!("constant sort key `{e}`")));
            }
        }
        Ok(OrderSpec { keys, layout })
    }

    pub fn stride(&self) -> u32 {
        self.layout.stride
    }
}

/// Swaps the tuples at `a` and `b` word by word.
pub fn emit_swap(fb: &mut FuncBuilder, stride: u32, a: Local, b: Local) {
    let t = fb.fresh_local(ValType::I64);
    for w in (0..stride).step_by(8) {
        fb.local_get(a);
        fb.load(LoadOp::I64, w);
        fb.local_set(t);
        fb.local_get(a);
        fb.local_get(b);
        fb.load(LoadOp::I64, w);
        fb.store(StoreOp::I64, w);
        fb.local_get(b);
        fb.local_get(t);
        fb.store(StoreOp::I64, w);
    }
}

fn key_value(fb: &mut FuncBuilder, order: &OrderSpec, key: &Expr, ptr: Local) -> Result<Val, CodegenError> {
    // Keys reference columns and are never BOOL, so they hold no CHAR literal.
    let mut consts = ConstPool::new(0);
    let mut binder = TupleBinder { layout: &order.layout, ptr };
    let v = compile_expr(fb, key, &mut binder, &mut ExprCtx { consts: &mut consts, short_circuit: false })?;
    debug_assert!(consts.bytes().is_empty());
    Ok(v)
}

/// Pushes -1, 0 or 1 for the key at `a` against the key at `b`, ascending.
fn push_key_cmp(fb: &mut FuncBuilder, order: &OrderSpec, key: &Expr, a: Local, b: Local) -> Result<(), CodegenError> {
    let x = key_value(fb, order, key, a)?;
    let y = key_value(fb, order, key, b)?;
    if let DataType::Char(n) = x.ty {
        let c = emit_char_cmp(fb, x.local, n as u32, y.local, n as u32);
        fb.local_get(c);
        return Ok(());
    }
    let (gt, lt) = match x.ty {
        DataType::Int32 => (NumOp::I32GtS, NumOp::I32LtS),
        DataType::Int64 => (NumOp::I64GtS, NumOp::I64LtS),
        DataType::Float64 => (NumOp::F64Gt, NumOp::F64Lt),
        t => return Err(CodegenError::Unsupported(format!("sort key of type {t}"))),
    };
    fb.local_get(x.local);
    fb.local_get(y.local);
    fb.num(gt);
    fb.local_get(x.local);
    fb.local_get(y.local);
    fb.num(lt);
    fb.num(NumOp::I32Sub);
    Ok(())
}

/// Emits the branch-free lexicographic comparator. Each key contributes
/// `v = 2v + gt - lt` (operands swapped for descending keys), so the first
/// differing key decides the sign. Returns a local holding 1 iff the
/// tuple at `a` sorts strictly before the tuple at `b`.
pub fn emit_compare(fb: &mut FuncBuilder, order: &OrderSpec, a: Local, b: Local) -> Result<Local, CodegenError> {
    let v = fb.fresh_local(ValType::I32);
    fb.i32_const(0);
    fb.local_set(v);
    for (key, dir) in &order.keys {
        fb.local_get(v);
        fb.i32_const(1);
        fb.num(NumOp::I32Shl);
        match dir {
            Direction::Asc => push_key_cmp(fb, order, key, a, b)?,
            Direction::Desc => push_key_cmp(fb, order, key, b, a)?,
        }
        fb.num(NumOp::I32Add);
        fb.local_set(v);
    }
    fb.local_get(v);
    fb.i32_const(0);
    fb.num(NumOp::I32LtS);
    let c = fb.fresh_local(ValType::I32);
    fb.local_set(c);
    Ok(c)
}

/// `dst += flag * stride`, or `-=`, with `flag` in {0, 1}.
fn step(fb: &mut FuncBuilder, dst: Local, flag: Local, stride: u32, add: bool) {
    fb.local_get(dst);
    fb.local_get(flag);
    fb.i32_const(stride as i32);
    fb.num(NumOp::I32Mul);
    fb.num(if add { NumOp::I32Add } else { NumOp::I32Sub });
    fb.local_set(dst);
}

fn partition_with(
    fb: &mut FuncBuilder,
    order: &OrderSpec,
    begin: Local,
    end: Local,
    pivot: Local,
    le: bool,
) -> Result<Local, CodegenError> {
    let l = fb.fresh_local(ValType::I32);
    let r = fb.fresh_local(ValType::I32);
    let last = fb.fresh_local(ValType::I32);
    fb.local_get(begin);
    fb.local_set(l);
    fb.local_get(end);
    fb.local_set(r);
    let exit = fb.block(BlockType::Empty);
    let top = fb.loop_(BlockType::Empty);
    fb.local_get(l);
    fb.local_get(r);
    fb.num(NumOp::I32GeU);
    fb.br_if(exit);
    fb.local_get(r);
    fb.i32_const(order.stride() as i32);
    fb.num(NumOp::I32Sub);
    fb.local_set(last);
    emit_swap(fb, order.stride(), l, last);
    let (cl, cr) = if le {
        // Left keeps `<= pivot`, right keeps `> pivot`.
        let cl = emit_compare(fb, order, pivot, l)?;
        fb.local_get(cl);
        fb.num(NumOp::I32Eqz);
        fb.local_set(cl);
        (cl, emit_compare(fb, order, pivot, last)?)
    } else {
        // Left keeps `< pivot`, right keeps `>= pivot`.
        let cl = emit_compare(fb, order, l, pivot)?;
        let cr = emit_compare(fb, order, last, pivot)?;
        fb.local_get(cr);
        fb.num(NumOp::I32Eqz);
        fb.local_set(cr);
        (cl, cr)
    };
    step(fb, l, cl, order.stride(), true);
    step(fb, r, cr, order.stride(), false);
    fb.br(top);
    fb.end();
    fb.end();
    Ok(l)
}

/// Emits the branch-free partition of `[begin, end)` around the tuple at
/// `pivot`, which must lie outside the range. Every iteration swaps the
/// two boundary tuples and then advances each cursor if its tuple is on
/// the correct side. Returns a local with the first tuple not ordered
/// before the pivot.
pub fn emit_partition(
    fb: &mut FuncBuilder,
    order: &OrderSpec,
    begin: Local,
    end: Local,
    pivot: Local,
) -> Result<Local, CodegenError> {
    partition_with(fb, order, begin, end, pivot, false)
}

/// Emits the selection of the median of the tuples at `a`, `b`, `c`
/// without branches. Returns a local holding its address.
pub fn emit_median_of_three(
    fb: &mut FuncBuilder,
    order: &OrderSpec,
    a: Local,
    b: Local,
    c: Local,
) -> Result<Local, CodegenError> {
    let ab = emit_compare(fb, order, a, b)?;
    let bc = emit_compare(fb, order, b, c)?;
    let ac = emit_compare(fb, order, a, c)?;
    let sel = |fb: &mut FuncBuilder, x: Local, y: Local, cond: Local| {
        fb.local_get(x);
        fb.local_get(y);
        fb.local_get(cond);
        fb.emit(Instr::Select);
    };
    let m = fb.fresh_local(ValType::I32);
    // a < b: median is b, or max(a, c) when c <= b
    fb.local_get(b);
    sel(fb, c, a, ac);
    fb.local_get(bc);
    fb.emit(Instr::Select);
    // b <= a: median is a, or max(b, c) when c <= a
    fb.local_get(a);
    sel(fb, c, b, bc);
    fb.local_get(ac);
    fb.emit(Instr::Select);
    fb.local_get(ab);
    fb.emit(Instr::Select);
    fb.local_set(m);
    Ok(m)
}

/// Adds a recursive `qsort(begin, end)` function specialized for `order`
/// to `mb` and returns its index. The function sorts the tuples in the
/// byte range `[begin, end)` in place.
///
/// Only the smaller side of each partition is sorted by a recursive call;
/// the larger side is handled by the enclosing loop, which bounds the
/// recursion depth by log2 of the tuple count. When the pivot is the
/// minimum of its range, the run of tuples equal to it is split off with a
/// second partition and skipped.
pub fn emit_quicksort(mb: &mut ModuleBuilder, order: &OrderSpec) -> Result<FuncIdx, CodegenError> {
    if order.stride() == 0 || order.stride() % 8 != 0 {
        return Err(CodegenError::Unsupported(format!("tuple stride {}", order.stride())));
    }
    let sig = FuncType::new(&[ValType::I32, ValType::I32], &[]);
    let idx = mb.declare_function(&sig);
    mb.set_function_name(idx, "qsort");
    let mut owned = mb.begin_declared(idx);
    let fb = &mut owned;
    let s = order.stride() as i32;
    let (begin, end) = (fb.param(0), fb.param(1));
    let tmp = |fb: &mut FuncBuilder| fb.fresh_local(ValType::I32);
    let (mid, last, lo, pm1, sb, se, nb, ne, small) =
        (tmp(fb), tmp(fb), tmp(fb), tmp(fb), tmp(fb), tmp(fb), tmp(fb), tmp(fb), tmp(fb));

    let exit = fb.block(BlockType::Empty);
    let outer = fb.loop_(BlockType::Empty);
    fb.local_get(end);
    fb.local_get(begin);
    fb.num(NumOp::I32Sub);
    fb.i32_const(2 * s);
    fb.num(NumOp::I32LeU);
    fb.br_if(exit);

    // mid = begin + ((n / stride) / 2) * stride
    fb.local_get(begin);
    fb.local_get(end);
    fb.local_get(begin);
    fb.num(NumOp::I32Sub);
    fb.i32_const(s);
    fb.num(NumOp::I32DivU);
    fb.i32_const(1);
    fb.num(NumOp::I32ShrU);
    fb.i32_const(s);
    fb.num(NumOp::I32Mul);
    fb.num(NumOp::I32Add);
    fb.local_set(mid);
    fb.local_get(end);
    fb.i32_const(s);
    fb.num(NumOp::I32Sub);
    fb.local_set(last);
    let m = emit_median_of_three(fb, order, begin, mid, last)?;
    emit_swap(fb, order.stride(), begin, m);

    fb.local_get(begin);
    fb.i32_const(s);
    fb.num(NumOp::I32Add);
    fb.local_set(lo);
    let p = emit_partition(fb, order, lo, end, begin)?;
    fb.local_get(p);
    fb.i32_const(s);
    fb.num(NumOp::I32Sub);
    fb.local_set(pm1);
    emit_swap(fb, order.stride(), begin, pm1);

    fb.local_get(pm1);
    fb.local_get(begin);
    fb.num(NumOp::I32Eq);
    fb.if_(BlockType::Empty);
    let q = partition_with(fb, order, p, end, begin, true)?;
    fb.local_get(q);
    fb.local_set(begin);
    fb.br(outer);
    fb.end();

    // small = (pm1 - begin) < (end - p)
    fb.local_get(pm1);
    fb.local_get(begin);
    fb.num(NumOp::I32Sub);
    fb.local_get(end);
    fb.local_get(p);
    fb.num(NumOp::I32Sub);
    fb.num(NumOp::I32LtU);
    fb.local_set(small);
    for (dst, left, right) in [(sb, begin, p), (se, pm1, end), (nb, p, begin), (ne, end, pm1)] {
        fb.local_get(left);
        fb.local_get(right);
        fb.local_get(small);
        fb.emit(Instr::Select);
        fb.local_set(dst);
    }
    fb.local_get(se);
    fb.local_get(sb);
    fb.num(NumOp::I32Sub);
    fb.i32_const(2 * s);
    fb.num(NumOp::I32GeU);
    fb.if_(BlockType::Empty);
    fb.local_get(sb);
    fb.local_get(se);
    fb.call(idx);
    fb.end();
    fb.local_get(nb);
    fb.local_set(begin);
    fb.local_get(ne);
    fb.local_set(end);
    fb.br(outer);
    fb.end();
    fb.end();

    // At most two tuples remain.
    fb.local_get(end);
    fb.local_get(begin);
    fb.num(NumOp::I32Sub);
    fb.i32_const(2 * s);
    fb.num(NumOp::I32Eq);
    fb.if_(BlockType::Empty);
    fb.local_get(begin);
    fb.i32_const(s);
    fb.num(NumOp::I32Add);
    fb.local_set(mid);
    let c = emit_compare(fb, order, mid, begin)?;
    fb.local_get(c);
    fb.if_(BlockType::Empty);
    emit_swap(fb, order.stride(), begin, mid);
    fb.end();
    fb.end();
    mb.finish_function(owned)?;
    Ok(idx)
}
