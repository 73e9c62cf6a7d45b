//! Binary encoding of finished modules.

use std::ops::Range;

use super::{BlockType, ImportKind, Instr, Module, ValType};

pub(crate) fn uleb(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub(crate) fn sleb(out: &mut Vec<u8>, mut v: i64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        let done = (v == 0 && byte & 0x40 == 0) || (v == -1 && byte & 0x40 != 0);
        if done {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn name(out: &mut Vec<u8>, s: &str) {
    uleb(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

fn section(out: &mut Vec<u8>, id: u8, body: &[u8]) {
    out.push(id);
    uleb(out, body.len() as u64);
    out.extend_from_slice(body);
}

fn block_type(out: &mut Vec<u8>, bt: BlockType) {
    match bt {
        BlockType::Empty => out.push(0x40),
        BlockType::Value(t) => out.push(t.code()),
    }
}

pub(crate) fn instr(out: &mut Vec<u8>, i: &Instr) {
    match *i {
        Instr::Unreachable => out.push(0x00),
        Instr::Nop => out.push(0x01),
        Instr::Block(bt) => {
            out.push(0x02);
            block_type(out, bt);
        }
        Instr::Loop(bt) => {
            out.push(0x03);
            block_type(out, bt);
        }
        Instr::If(bt) => {
            out.push(0x04);
            block_type(out, bt);
        }
        Instr::Else => out.push(0x05),
        Instr::End => out.push(0x0b),
        Instr::Br(d) => {
            out.push(0x0c);
            uleb(out, d as u64);
        }
        Instr::BrIf(d) => {
            out.push(0x0d);
            uleb(out, d as u64);
        }
        Instr::Return => out.push(0x0f),
        Instr::Call(f) => {
            out.push(0x10);
            uleb(out, f as u64);
        }
        Instr::Drop => out.push(0x1a),
        Instr::Select => out.push(0x1b),
        Instr::LocalGet(i) => {
            out.push(0x20);
            uleb(out, i as u64);
        }
        Instr::LocalSet(i) => {
            out.push(0x21);
            uleb(out, i as u64);
        }
        Instr::LocalTee(i) => {
            out.push(0x22);
            uleb(out, i as u64);
        }
        Instr::GlobalGet(i) => {
            out.push(0x23);
            uleb(out, i as u64);
        }
        Instr::GlobalSet(i) => {
            out.push(0x24);
            uleb(out, i as u64);
        }
        Instr::Load(op, offset) => {
            out.push(op.opcode());
            uleb(out, op.align() as u64);
            uleb(out, offset as u64);
        }
        Instr::Store(op, offset) => {
            out.push(op.opcode());
            uleb(out, op.align() as u64);
            uleb(out, offset as u64);
        }
        Instr::I32Const(v) => {
            out.push(0x41);
            sleb(out, v as i64);
        }
        Instr::I64Const(v) => {
            out.push(0x42);
            sleb(out, v);
        }
        Instr::F32Const(v) => {
            out.push(0x43);
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        Instr::F64Const(v) => {
            out.push(0x44);
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        Instr::Num(op) => out.push(op.opcode()),
    }
}

/// Consecutive locals of one type share an entry.
fn local_groups(locals: &[ValType]) -> Vec<(u32, ValType)> {
    let mut groups: Vec<(u32, ValType)> = Vec::new();
    for &t in locals {
        match groups.last_mut() {
            Some((n, g)) if *g == t => *n += 1,
            _ => groups.push((1, t)),
        }
    }
    groups
}

/// Encodes `m`, returning the bytes and the byte range of each function body.
pub(crate) fn encode(m: &Module) -> (Vec<u8>, Vec<Range<usize>>) {
    let mut out = b"\0asm".to_vec();
    out.extend_from_slice(&1u32.to_le_bytes());

    if !m.types.is_empty() {
        let mut s = Vec::new();
        uleb(&mut s, m.types.len() as u64);
        for t in &m.types {
            s.push(0x60);
            uleb(&mut s, t.params.len() as u64);
            s.extend(t.params.iter().map(|p| p.code()));
            uleb(&mut s, t.results.len() as u64);
            s.extend(t.results.iter().map(|r| r.code()));
        }
        section(&mut out, 1, &s);
    }

    if !m.imports.is_empty() {
        let mut s = Vec::new();
        uleb(&mut s, m.imports.len() as u64);
        for i in &m.imports {
            name(&mut s, &i.module);
            name(&mut s, &i.name);
            match i.kind {
                ImportKind::Func { type_idx } => {
                    s.push(0x00);
                    uleb(&mut s, type_idx as u64);
                }
                ImportKind::Memory { min_pages } => {
                    s.push(0x02);
                    s.push(0x00);
                    uleb(&mut s, min_pages as u64);
                }
                ImportKind::Global { ty } => {
                    s.push(0x03);
                    s.push(ty.code());
                    s.push(0x00);
                }
            }
        }
        section(&mut out, 2, &s);
    }

    if !m.functions.is_empty() {
        let mut s = Vec::new();
        uleb(&mut s, m.functions.len() as u64);
        for f in &m.functions {
            uleb(&mut s, f.type_idx as u64);
        }
        section(&mut out, 3, &s);
    }

    if !m.globals.is_empty() {
        let mut s = Vec::new();
        uleb(&mut s, m.globals.len() as u64);
        for g in &m.globals {
            s.push(g.ty.code());
            s.push(g.mutable as u8);
            instr(&mut s, &g.init);
            s.push(0x0b);
        }
        section(&mut out, 6, &s);
    }

    if !m.exports.is_empty() {
        let mut s = Vec::new();
        uleb(&mut s, m.exports.len() as u64);
        for (n, f) in &m.exports {
            name(&mut s, n);
            s.push(0x00);
            uleb(&mut s, f.0 as u64);
        }
        section(&mut out, 7, &s);
    }

    let mut ranges = Vec::new();
    if !m.functions.is_empty() {
        let mut s = Vec::new();
        uleb(&mut s, m.functions.len() as u64);
        let mut local_ranges = Vec::new();
        for f in &m.functions {
            let mut body = Vec::new();
            let groups = local_groups(&f.locals);
            uleb(&mut body, groups.len() as u64);
            for (n, t) in groups {
                uleb(&mut body, n as u64);
                body.push(t.code());
            }
            for i in &f.body {
                instr(&mut body, i);
            }
            body.push(0x0b);
            uleb(&mut s, body.len() as u64);
            local_ranges.push(s.len()..s.len() + body.len());
            s.extend_from_slice(&body);
        }
        out.push(10);
        uleb(&mut out, s.len() as u64);
        let base = out.len();
        ranges = local_ranges.into_iter().map(|r| r.start + base..r.end + base).collect();
        out.extend_from_slice(&s);
    }

    if !m.data.is_empty() {
        let mut s = Vec::new();
        uleb(&mut s, m.data.len() as u64);
        for d in &m.data {
            s.push(0x00);
            instr(&mut s, &Instr::I32Const(d.offset as i32));
            s.push(0x0b);
            uleb(&mut s, d.bytes.len() as u64);
            s.extend_from_slice(&d.bytes);
        }
        section(&mut out, 11, &s);
    }

    (out, ranges)
}
