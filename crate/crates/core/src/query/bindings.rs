use crate::catalog::DataType;
use crate::codegen::{compile_expr, load_field, Binder, CodegenError, ConstPool, ExprCtx, Val};
use crate::plan::{ColumnRef, Expr, Scope};
use crate::wasm::{FuncBuilder, GlobalIdx, LoadOp, Local, NumOp, ValType};

/// How generated code reaches one column of the current tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    /// Element `row` of the column segment whose address is in global `base`.
    Segment { base: GlobalIdx, row: Local, width: u32 },
    /// Field at `ptr + offset` of a materialized tuple.
    Tuple { ptr: Local, offset: u32 },
    /// Already computed.
    Value(Val),
    /// Not needed downstream, so never loaded.
    Unavailable,
}

/// Access recipes for the columns of `scope`, by position.
#[derive(Debug, Clone, PartialEq)]
pub struct Bindings {
    pub scope: Scope,
    pub access: Vec<Access>,
}

impl Bindings {
    /// Loads column `i` into a local. `CHAR` columns yield their address.
    pub fn value(&mut self, fb: &mut FuncBuilder, i: usize) -> Result<Val, CodegenError> {
        let col = &self.scope.columns[i];
        let ty = col.ty;
        match self.access[i] {
            Access::Segment { base, row, width } => {
                fb.global_get(base);
                fb.local_get(row);
                if width != 1 {
                    fb.i32_const(width as i32);
                    fb.num(NumOp::I32Mul);
                }
                fb.num(NumOp::I32Add);
                match ty {
                    DataType::Int32 => fb.load(LoadOp::I32, 0),
                    DataType::Int64 => fb.load(LoadOp::I64, 0),
                    DataType::Float64 => fb.load(LoadOp::F64, 0),
                    DataType::Bool => fb.load(LoadOp::I32U8, 0),
                    DataType::Char(_) => {}
                }
                let local = fb.fresh_local(ValType::of(ty));
                fb.local_set(local);
                Ok(Val { local, ty })
            }
            Access::Tuple { ptr, offset } => Ok(load_field(fb, ty, ptr, offset)),
            Access::Value(v) => Ok(v),
            Access::Unavailable => Err(CodegenError::Unbound(format!("{}.{}", col.qualifier, col.name))),
        }
    }
}

impl Binder for Bindings {
    fn column(&mut self, fb: &mut FuncBuilder, c: &ColumnRef) -> Result<Val, CodegenError> {
        let i = self.scope.resolve(c)?;
        self.value(fb, i)
    }

    fn column_type(&self, c: &ColumnRef) -> Result<DataType, CodegenError> {
        Ok(self.scope.columns[self.scope.resolve(c)?].ty)
    }
}

/// Emits code evaluating `expr` against `bindings` and returns the local
/// holding the result.
pub fn compile_expression(
    fb: &mut FuncBuilder,
    expr: &Expr,
    bindings: &mut Bindings,
    consts: &mut ConstPool,
    short_circuit: bool,
) -> Result<Val, CodegenError> {
    compile_expr(fb, expr, bindings, &mut ExprCtx { consts, short_circuit })
}
