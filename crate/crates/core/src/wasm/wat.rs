//! WebAssembly text rendering.

use std::fmt::Write;

use super::{ImportKind, Instr, Module};

/// Renders `m` in the text format. Indices are numeric, so parsing the text
/// back yields the same binary.
pub fn render_wat(m: &Module) -> String {
    let mut out = String::from("(module\n");
    for (i, t) in m.types.iter().enumerate() {
        let _ = write!(out, "  (type (;{i};) (func");
        if !t.params.is_empty() {
            out.push_str(" (param");
            t.params.iter().for_each(|p| {
                let _ = write!(out, " {p}");
            });
            out.push(')');
        }
        if !t.results.is_empty() {
            out.push_str(" (result");
            t.results.iter().for_each(|r| {
                let _ = write!(out, " {r}");
            });
            out.push(')');
        }
        out.push_str("))\n");
    }
    let (mut nf, mut ng) = (0u32, 0u32);
    for imp in &m.imports {
        let _ = write!(out, "  (import \"{}\" \"{}\" ", imp.module, imp.name);
        match imp.kind {
            ImportKind::Memory { min_pages } => {
                let _ = write!(out, "(memory (;0;) {min_pages})");
            }
            ImportKind::Global { ty } => {
                let _ = write!(out, "(global (;{ng};) {ty})");
                ng += 1;
            }
            ImportKind::Func { type_idx } => {
                let _ = write!(out, "(func (;{nf};) (type {type_idx}))");
                nf += 1;
            }
        }
        out.push_str(")\n");
    }
    for (i, f) in m.functions.iter().enumerate() {
        let _ = write!(out, "  (func (;{};) (type {})", nf + i as u32, f.type_idx);
        if let Some(name) = &f.name {
            let _ = write!(out, " ;; {name}");
        }
        out.push('\n');
        if !f.locals.is_empty() {
            out.push_str("    (local");
            for l in &f.locals {
                let _ = write!(out, " {l}");
            }
            out.push_str(")\n");
        }
        let mut depth = 0usize;
        for ins in &f.body {
            if matches!(ins, Instr::End | Instr::Else) {
                depth = depth.saturating_sub(1);
            }
            let _ = writeln!(out, "    {}{ins}", "  ".repeat(depth));
            if matches!(ins, Instr::Block(_) | Instr::Loop(_) | Instr::If(_) | Instr::Else) {
                depth += 1;
            }
        }
        out.push_str("  )\n");
    }
    for (i, g) in m.globals.iter().enumerate() {
        let ty = if g.mutable { format!("(mut {})", g.ty) } else { g.ty.to_string() };
        let _ = writeln!(out, "  (global (;{};) {ty} ({}))", ng + i as u32, g.init);
    }
    for (name, f) in &m.exports {
        let _ = writeln!(out, "  (export \"{name}\" (func {}))", f.0);
    }
    for (i, d) in m.data.iter().enumerate() {
        let _ = write!(out, "  (data (;{i};) (i32.const {}) \"", d.offset as i32);
        for &b in &d.bytes {
            if (0x20..0x7f).contains(&b) && b != b'"' && b != b'\\' {
                out.push(b as char);
            } else {
                let _ = write!(out, "\\{b:02x}");
            }
        }
        out.push_str("\")\n");
    }
    out.push_str(")\n");
    out
}
