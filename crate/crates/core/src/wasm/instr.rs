use std::fmt;

use super::ValType;
use ValType::*;

macro_rules! num_ops {
    ($($name:ident = $code:literal, $text:literal, [$($p:ident),*] -> $r:ident;)*) => {
        /// Numeric, comparison and conversion instructions.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum NumOp {
            $($name),*
        }

        impl NumOp {
            pub const ALL: &'static [NumOp] = &[$(NumOp::$name),*];

            pub fn opcode(self) -> u8 {
                match self { $(NumOp::$name => $code),* }
            }

            pub fn mnemonic(self) -> &'static str {
                match self { $(NumOp::$name => $text),* }
            }

            pub fn params(self) -> &'static [ValType] {
                match self { $(NumOp::$name => &[$($p),*]),* }
            }

            pub fn result(self) -> ValType {
                match self { $(NumOp::$name => $r),* }
            }
        }
    };
}

num_ops! {
    I32Eqz = 0x45, "i32.eqz", [I32] -> I32;
    I32Eq = 0x46, "i32.eq", [I32, I32] -> I32;
    I32Ne = 0x47, "i32.ne", [I32, I32] -> I32;
    I32LtS = 0x48, "i32.lt_s", [I32, I32] -> I32;
    I32LtU = 0x49, "i32.lt_u", [I32, I32] -> I32;
    I32GtS = 0x4a, "i32.gt_s", [I32, I32] -> I32;
    I32GtU = 0x4b, "i32.gt_u", [I32, I32] -> I32;
    I32LeS = 0x4c, "i32.le_s", [I32, I32] -> I32;
    I32LeU = 0x4d, "i32.le_u", [I32, I32] -> I32;
    I32GeS = 0x4e, "i32.ge_s", [I32, I32] -> I32;
    I32GeU = 0x4f, "i32.ge_u", [I32, I32] -> I32;
    I64Eqz = 0x50, "i64.eqz", [I64] -> I32;
    I64Eq = 0x51, "i64.eq", [I64, I64] -> I32;
    I64Ne = 0x52, "i64.ne", [I64, I64] -> I32;
    I64LtS = 0x53, "i64.lt_s", [I64, I64] -> I32;
    I64LtU = 0x54, "i64.lt_u", [I64, I64] -> I32;
    I64GtS = 0x55, "i64.gt_s", [I64, I64] -> I32;
    I64GtU = 0x56, "i64.gt_u", [I64, I64] -> I32;
    I64LeS = 0x57, "i64.le_s", [I64, I64] -> I32;
    I64LeU = 0x58, "i64.le_u", [I64, I64] -> I32;
    I64GeS = 0x59, "i64.ge_s", [I64, I64] -> I32;
    I64GeU = 0x5a, "i64.ge_u", [I64, I64] -> I32;
    F64Eq = 0x61, "f64.eq", [F64, F64] -> I32;
    F64Ne = 0x62, "f64.ne", [F64, F64] -> I32;
    F64Lt = 0x63, "f64.lt", [F64, F64] -> I32;
    F64Gt = 0x64, "f64.gt", [F64, F64] -> I32;
    F64Le = 0x65, "f64.le", [F64, F64] -> I32;
    F64Ge = 0x66, "f64.ge", [F64, F64] -> I32;
    I32Add = 0x6a, "i32.add", [I32, I32] -> I32;
    I32Sub = 0x6b, "i32.sub", [I32, I32] -> I32;
    I32Mul = 0x6c, "i32.mul", [I32, I32] -> I32;
    I32DivS = 0x6d, "i32.div_s", [I32, I32] -> I32;
    I32DivU = 0x6e, "i32.div_u", [I32, I32] -> I32;
    I32RemS = 0x6f, "i32.rem_s", [I32, I32] -> I32;
    I32RemU = 0x70, "i32.rem_u", [I32, I32] -> I32;
    I32And = 0x71, "i32.and", [I32, I32] -> I32;
    I32Or = 0x72, "i32.or", [I32, I32] -> I32;
    I32Xor = 0x73, "i32.xor", [I32, I32] -> I32;
    I32Shl = 0x74, "i32.shl", [I32, I32] -> I32;
    I32ShrS = 0x75, "i32.shr_s", [I32, I32] -> I32;
    I32ShrU = 0x76, "i32.shr_u", [I32, I32] -> I32;
    I64Add = 0x7c, "i64.add", [I64, I64] -> I64;
    I64Sub = 0x7d, "i64.sub", [I64, I64] -> I64;
    I64Mul = 0x7e, "i64.mul", [I64, I64] -> I64;
    I64DivS = 0x7f, "i64.div_s", [I64, I64] -> I64;
    I64DivU = 0x80, "i64.div_u", [I64, I64] -> I64;
    I64RemS = 0x81, "i64.rem_s", [I64, I64] -> I64;
    I64RemU = 0x82, "i64.rem_u", [I64, I64] -> I64;
    I64And = 0x83, "i64.and", [I64, I64] -> I64;
    I64Or = 0x84, "i64.or", [I64, I64] -> I64;
    I64Xor = 0x85, "i64.xor", [I64, I64] -> I64;
    I64Shl = 0x86, "i64.shl", [I64, I64] -> I64;
    I64ShrS = 0x87, "i64.shr_s", [I64, I64] -> I64;
    I64ShrU = 0x88, "i64.shr_u", [I64, I64] -> I64;
    F64Abs = 0x99, "f64.abs", [F64] -> F64;
    F64Neg = 0x9a, "f64.neg", [F64] -> F64;
    F64Add = 0xa0, "f64.add", [F64, F64] -> F64;
    F64Sub = 0xa1, "f64.sub", [F64, F64] -> F64;
    F64Mul = 0xa2, "f64.mul", [F64, F64] -> F64;
    F64Div = 0xa3, "f64.div", [F64, F64] -> F64;
    F64Min = 0xa4, "f64.min", [F64, F64] -> F64;
    F64Max = 0xa5, "f64.max", [F64, F64] -> F64;
    I32WrapI64 = 0xa7, "i32.wrap_i64", [I64] -> I32;
    I64ExtendI32S = 0xac, "i64.extend_i32_s", [I32] -> I64;
    I64ExtendI32U = 0xad, "i64.extend_i32_u", [I32] -> I64;
    F64ConvertI32S = 0xb7, "f64.convert_i32_s", [I32] -> F64;
    F64ConvertI64S = 0xb9, "f64.convert_i64_s", [I64] -> F64;
    I64ReinterpretF64 = 0xbd, "i64.reinterpret_f64", [F64] -> I64;
    F64ReinterpretI64 = 0xbf, "f64.reinterpret_i64", [I64] -> F64;
}

macro_rules! mem_ops {
    ($enum:ident { $($name:ident = $code:literal, $text:literal, $ty:ident, $align:literal;)* }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $enum {
            $($name),*
        }

        impl $enum {
            pub fn opcode(self) -> u8 {
                match self { $($enum::$name => $code),* }
            }

            pub fn mnemonic(self) -> &'static str {
                match self { $($enum::$name => $text),* }
            }

            /// Type of the loaded or stored value.
            pub fn val_type(self) -> ValType {
                match self { $($enum::$name => $ty),* }
            }

            /// log2 of the access width, used as the alignment hint.
            pub fn align(self) -> u32 {
                match self { $($enum::$name => $align),* }
            }
        }
    };
}

mem_ops!(LoadOp {
    I32 = 0x28, "i32.load", I32, 2;
    I64 = 0x29, "i64.load", I64, 3;
    F32 = 0x2a, "f32.load", F32, 2;
    F64 = 0x2b, "f64.load", F64, 3;
    I32U8 = 0x2d, "i32.load8_u", I32, 0;
    I32S8 = 0x2c, "i32.load8_s", I32, 0;
    I64U8 = 0x31, "i64.load8_u", I64, 0;
});

mem_ops!(StoreOp {
    I32 = 0x36, "i32.store", I32, 2;
    I64 = 0x37, "i64.store", I64, 3;
    F32 = 0x38, "f32.store", F32, 2;
    F64 = 0x39, "f64.store", F64, 3;
    I32U8 = 0x3a, "i32.store8", I32, 0;
    I64U8 = 0x3c, "i64.store8", I64, 0;
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockType {
    Empty,
    Value(ValType),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instr {
    Unreachable,
    Nop,
    Block(BlockType),
    Loop(BlockType),
    If(BlockType),
    Else,
    End,
    /// Branch to the label `n` frames out.
    Br(u32),
    BrIf(u32),
    Return,
    Call(u32),
    Drop,
    Select,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    /// Load with a static byte offset.
    Load(LoadOp, u32),
    Store(StoreOp, u32),
    I32Const(i32),
    I64Const(i64),
    F32Const(f32),
    F64Const(f64),
    Num(NumOp),
}

impl From<NumOp> for Instr {
    fn from(op: NumOp) -> Instr {
        Instr::Num(op)
    }
}

impl Instr {
    pub fn is_call(&self) -> bool {
        matches!(self, Instr::Call(_))
    }
}

/// WAT spelling of a float constant; finite values use the shortest
/// decimal that reads back to the same bits.
pub(crate) fn float_text(bits: u64, finite_text: String, mantissa_bits: u32) -> String {
    let exp_bits = if mantissa_bits == 52 { 11 } else { 8 };
    let sign = bits >> (mantissa_bits + exp_bits) & 1 == 1;
    let exp = (bits >> mantissa_bits) & ((1 << exp_bits) - 1);
    let mantissa = bits & ((1u64 << mantissa_bits) - 1);
    let s = if sign { "-" } else { "" };
    if exp == (1 << exp_bits) - 1 {
        if mantissa == 0 {
            format!("{s}inf")
        } else {
            format!("{s}nan:0x{mantissa:x}")
        }
    } else {
        finite_text
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bt = |b: &BlockType| match b {
            BlockType::Empty => String::new(),
            BlockType::Value(t) => format!(" (result {t})"),
        };
        match self {
            Instr::Unreachable => f.write_str("unreachable"),
            Instr::Nop => f.write_str("nop"),
            Instr::Block(b) => write!(f, "block{}", bt(b)),
            Instr::Loop(b) => write!(f, "loop{}", bt(b)),
            Instr::If(b) => write!(f, "if{}", bt(b)),
            Instr::Else => f.write_str("else"),
            Instr::End => f.write_str("end"),
            Instr::Br(d) => write!(f, "br {d}"),
            Instr::BrIf(d) => write!(f, "br_if {d}"),
            Instr::Return => f.write_str("return"),
            Instr::Call(i) => write!(f, "call {i}"),
            Instr::Drop => f.write_str("drop"),
            Instr::Select => f.write_str("select"),
            Instr::LocalGet(i) => write!(f, "local.get {i}"),
            Instr::LocalSet(i) => write!(f, "local.set {i}"),
            Instr::LocalTee(i) => write!(f, "local.tee {i}"),
            Instr::GlobalGet(i) => write!(f, "global.get {i}"),
            Instr::GlobalSet(i) => write!(f, "global.set {i}"),
            Instr::Load(op, off) => mem(f, op.mnemonic(), *off),
            Instr::Store(op, off) => mem(f, op.mnemonic(), *off),
            Instr::I32Const(v) => write!(f, "i32.const {v}"),
            Instr::I64Const(v) => write!(f, "i64.const {v}"),
            Instr::F32Const(v) => write!(f, "f32.const {}", float_text(v.to_bits() as u64, format!("{v:?}"), 23)),
            Instr::F64Const(v) => write!(f, "f64.const {}", float_text(v.to_bits(), format!("{v:?}"), 52)),
            Instr::Num(op) => f.write_str(op.mnemonic()),
        }
    }
}

fn mem(f: &mut fmt::Formatter<'_>, name: &str, offset: u32) -> fmt::Result {
    if offset == 0 {
        f.write_str(name)
    } else {
        write!(f, "{name} offset={offset}")
    }
}
