//! Programmatic construction of WebAssembly modules (MVP subset).
//!
//! [`ModuleBuilder`] collects imports, globals, functions and exports;
//! [`FuncBuilder`] appends instructions while tracking control frames and
//! operand types, so malformed code is rejected when it is emitted rather
//! than by the engine. Finished modules encode to the binary format and
//! render to WAT.

mod builder;
mod encode;
mod instr;
mod wat;

pub use builder::{BuildError, FuncBuilder, Label, ModuleBuilder};
pub use instr::{BlockType, Instr, LoadOp, NumOp, StoreOp};
pub use wat::render_wat;

use std::fmt;

use crate::catalog::DataType;

/// Bytes per linear-memory page.
pub const PAGE_SIZE: u64 = 65536;
/// Pages in a 4 GiB memory.
pub const MAX_PAGES: u32 = 65536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValType {
    I32,
    I64,
    F32,
    F64,
}

impl ValType {
    /// Register type holding a value of `ty`. `CHAR` values are addressed
    /// through an `i32` pointer.
    pub fn of(ty: DataType) -> ValType {
        match ty {
            DataType::Int32 | DataType::Bool | DataType::Char(_) => ValType::I32,
            DataType::Int64 => ValType::I64,
            DataType::Float64 => ValType::F64,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ValType::I32 => 0x7f,
            ValType::I64 => 0x7e,
            ValType::F32 => 0x7d,
            ValType::F64 => 0x7c,
        }
    }
}

impl fmt::Display for ValType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValType::I32 => "i32",
            ValType::I64 => "i64",
            ValType::F32 => "f32",
            ValType::F64 => "f64",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct FuncType {
    pub params: Vec<ValType>,
    pub results: Vec<ValType>,
}

impl FuncType {
    pub fn new(params: &[ValType], results: &[ValType]) -> FuncType {
        FuncType { params: params.to_vec(), results: results.to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Local(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FuncIdx(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalIdx(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub enum ImportKind {
    Memory { min_pages: u32 },
    Global { ty: ValType },
    Func { type_idx: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Import {
    pub module: String,
    pub name: String,
    pub kind: ImportKind,
}

/// A module-defined global with a constant initializer.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDef {
    pub ty: ValType,
    pub mutable: bool,
    pub init: Instr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub type_idx: u32,
    /// Declared locals beyond the parameters.
    pub locals: Vec<ValType>,
    /// Body without the final `end`.
    pub body: Vec<Instr>,
    /// Shown as a comment in WAT output.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSegment {
    pub offset: u32,
    pub bytes: Vec<u8>,
}

/// A finished, validated module.
#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub types: Vec<FuncType>,
    pub imports: Vec<Import>,
    pub functions: Vec<Function>,
    pub globals: Vec<GlobalDef>,
    pub exports: Vec<(String, FuncIdx)>,
    pub data: Vec<DataSegment>,
    bytes: Vec<u8>,
}

impl Module {
    /// The binary encoding.
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn imported_funcs(&self) -> u32 {
        self.imports.iter().filter(|i| matches!(i.kind, ImportKind::Func { .. })).count() as u32
    }

    pub fn imported_globals(&self) -> u32 {
        self.imports.iter().filter(|i| matches!(i.kind, ImportKind::Global { .. })).count() as u32
    }

    /// The defined function with absolute index `idx`.
    pub fn function(&self, idx: FuncIdx) -> Option<&Function> {
        idx.0.checked_sub(self.imported_funcs()).and_then(|i| self.functions.get(i as usize))
    }

    /// Absolute index of the imported or defined global named by an import.
    pub fn global_import(&self, name: &str) -> Option<GlobalIdx> {
        self.imports
            .iter()
            .filter(|i| matches!(i.kind, ImportKind::Global { .. }))
            .position(|i| i.name == name)
            .map(|p| GlobalIdx(p as u32))
    }

    pub fn export(&self, name: &str) -> Option<FuncIdx> {
        self.exports.iter().find(|(n, _)| n == name).map(|(_, f)| *f)
    }

    pub fn memory_min_pages(&self) -> Option<u32> {
        self.imports.iter().find_map(|i| match i.kind {
            ImportKind::Memory { min_pages } => Some(min_pages),
            _ => None,
        })
    }
}
