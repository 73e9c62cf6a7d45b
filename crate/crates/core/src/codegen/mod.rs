//! Specialized code emitters: expressions, tuple swaps, comparators,
//! partitioning, Quicksort, hashing and hash tables.
//!
//! Every emitter writes instructions straight into the caller's
//! [`FuncBuilder`]; apart from the recursive `qsort` function nothing is
//! emitted as a callable routine.

mod expr;
mod hash;
pub mod kernels;
mod layout;
mod sort;

pub(crate) use expr::emit_cmp;
pub use expr::{compile_expr, emit_char_cmp, ExprCtx, ShortCircuit};
pub use hash::{emit_hash, emit_hash_vals, fnv1a64, HashTable, HashTableSpec, Heap, FNV_OFFSET, FNV_PRIME};
pub use layout::{Field, TupleBinder, TupleLayout};
pub use sort::{
    emit_compare, emit_median_of_three, emit_partition, emit_quicksort, emit_swap, OrderSpec,
};

use std::collections::HashMap;

use thiserror::Error;

use crate::catalog::DataType;
use crate::plan::{ColumnRef, PlanError};
use crate::wasm::{BuildError, FuncBuilder, Instr, LoadOp, Local, NumOp, StoreOp, ValType};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodegenError {
    #[error("unbound column `{0}`")]
    Unbound(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// A computed value held in a local. `CHAR` values are pointers to their
/// `n` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Val {
    pub local: Local,
    pub ty: DataType,
}

/// Resolves column references to values while code is being emitted.
pub trait Binder {
    fn column(&mut self, fb: &mut FuncBuilder, c: &ColumnRef) -> Result<Val, CodegenError>;

    fn column_type(&self, c: &ColumnRef) -> Result<DataType, CodegenError>;
}

/// Byte strings placed in a read-only area of linear memory.
#[derive(Debug, Clone, Default)]
pub struct ConstPool {
    base: u32,
    bytes: Vec<u8>,
    index: HashMap<Vec<u8>, u32>,
}

impl ConstPool {
    pub fn new(base: u32) -> ConstPool {
        ConstPool { base, bytes: Vec::new(), index: HashMap::new() }
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    /// Address of `bytes` in the pool, appending them if new.
    pub fn intern(&mut self, bytes: &[u8]) -> u32 {
        if let Some(&a) = self.index.get(bytes) {
            return a;
        }
        let addr = self.base + self.bytes.len() as u32;
        self.bytes.extend_from_slice(bytes);
        while self.bytes.len() % 8 != 0 {
            self.bytes.push(0);
        }
        self.index.insert(bytes.to_vec(), addr);
        addr
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Rebases the pool; addresses handed out before are invalidated.
    pub fn rebase(&mut self, base: u32) {
        let shift = |a: u32| a - self.base + base;
        self.index = self.index.iter().map(|(k, &a)| (k.clone(), shift(a))).collect();
        self.base = base;
    }
}

/// Pushes the value of a field of type `ty` at `ptr + offset`. For `CHAR`
/// this pushes the field's address.
pub fn emit_load_field(fb: &mut FuncBuilder, ty: DataType, ptr: Local, offset: u32) {
    fb.local_get(ptr);
    match ty {
        DataType::Int32 => fb.load(LoadOp::I32, offset),
        DataType::Int64 => fb.load(LoadOp::I64, offset),
        DataType::Float64 => fb.load(LoadOp::F64, offset),
        DataType::Bool => fb.load(LoadOp::I32U8, offset),
        DataType::Char(_) => {
            if offset != 0 {
                fb.i32_const(offset as i32);
                fb.num(NumOp::I32Add);
            }
        }
    }
}

/// Loads a field into a fresh local.
pub fn load_field(fb: &mut FuncBuilder, ty: DataType, ptr: Local, offset: u32) -> Val {
    emit_load_field(fb, ty, ptr, offset);
    let local = fb.fresh_local(ValType::of(ty));
    fb.local_set(local);
    Val { local, ty }
}

/// Stores `v` into the field at `ptr + offset`, copying the bytes of `CHAR` values.
pub fn store_field(fb: &mut FuncBuilder, v: Val, ptr: Local, offset: u32) {
    match v.ty {
        DataType::Char(n) => copy_bytes(fb, v.local, 0, ptr, offset, n as u32),
        ty => {
            fb.local_get(ptr);
            fb.local_get(v.local);
            let op = match ty {
                DataType::Int32 => StoreOp::I32,
                DataType::Int64 => StoreOp::I64,
                DataType::Float64 => StoreOp::F64,
                _ => StoreOp::I32U8,
            };
            fb.store(op, offset);
        }
    }
}

/// Unrolled copy of `len` bytes, eight at a time where possible.
pub fn copy_bytes(fb: &mut FuncBuilder, src: Local, src_off: u32, dst: Local, dst_off: u32, len: u32) {
    let mut i = 0;
    while i < len {
        let (load, store, w) = if len - i >= 8 {
            (LoadOp::I64, StoreOp::I64, 8)
        } else if len - i >= 4 {
            (LoadOp::I32, StoreOp::I32, 4)
        } else {
            (LoadOp::I32U8, StoreOp::I32U8, 1)
        };
        fb.local_get(dst);
        fb.local_get(src);
        fb.load(load, src_off + i);
        fb.store(store, dst_off + i);
        i += w;
    }
}

/// Emits `local = value` for a constant.
pub fn set_i32(fb: &mut FuncBuilder, l: Local, v: i32) {
    fb.i32_const(v);
    fb.local_set(l);
}

/// Emits `dst = a + b` on `i32` locals.
pub fn add_i32(fb: &mut FuncBuilder, dst: Local, a: Local, b: i32) {
    fb.local_get(a);
    fb.i32_const(b);
    fb.num(NumOp::I32Add);
    fb.local_set(dst);
}

/// Emits `unreachable` guarded by the `i32` condition on the stack.
pub fn trap_if(fb: &mut FuncBuilder) {
    fb.if_(crate::wasm::BlockType::Empty);
    fb.emit(Instr::Unreachable);
    fb.end();
}
