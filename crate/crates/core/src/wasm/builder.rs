use thiserror::Error;

use super::{
    encode, BlockType, DataSegment, FuncIdx, FuncType, Function, GlobalDef, GlobalIdx, Import, ImportKind, Instr,
    LoadOp, Local, Module, NumOp, StoreOp, ValType, MAX_PAGES,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error("function {func}: instruction {offset} `{instr}`: {reason}")]
    Instr { func: u32, offset: usize, instr: String, reason: String },
    #[error("function {func}: {reason}")]
    Function { func: u32, reason: String },
    #[error("module: {0}")]
    Module(String),
    #[error("validation failed{}: {reason}", func.map(|f| format!(" in function {f}")).unwrap_or_default())]
    Validation { func: Option<u32>, reason: String },
}

/// Collects the parts of a module. Imports must be declared before any
/// function or global is defined so indices stay stable.
#[derive(Debug, Default)]
pub struct ModuleBuilder {
    types: Vec<FuncType>,
    imports: Vec<Import>,
    globals: Vec<GlobalDef>,
    /// Signature of each function, imported ones first.
    func_types: Vec<u32>,
    bodies: Vec<Option<Function>>,
    exports: Vec<(String, FuncIdx)>,
    data: Vec<DataSegment>,
    names: Vec<Option<String>>,
    error: Option<BuildError>,
}

impl ModuleBuilder {
    pub fn new() -> ModuleBuilder {
        ModuleBuilder::default()
    }

    fn imported_funcs(&self) -> usize {
        self.func_types.len() - self.bodies.len()
    }

    fn imported_globals(&self) -> u32 {
        self.imports.iter().filter(|i| matches!(i.kind, ImportKind::Global { .. })).count() as u32
    }

    fn fail(&mut self, e: BuildError) {
        self.error.get_or_insert(e);
    }

    fn check_import_order(&mut self, what: &str) {
        if !self.bodies.is_empty() || !self.globals.is_empty() {
            self.fail(BuildError::Module(format!("{what} imported after definitions")));
        }
    }

    /// Index of `ty` in the type section, adding it if new.
    pub fn type_index(&mut self, ty: &FuncType) -> u32 {
        match self.types.iter().position(|t| t == ty) {
            Some(i) => i as u32,
            None => {
                self.types.push(ty.clone());
                self.types.len() as u32 - 1
            }
        }
    }

    pub fn import_memory(&mut self, min_pages: u32) {
        self.check_import_order("memory");
        if min_pages > MAX_PAGES {
            self.fail(BuildError::Module(format!("{min_pages} pages exceed 4 GiB")));
        }
        if self.imports.iter().any(|i| matches!(i.kind, ImportKind::Memory { .. })) {
            self.fail(BuildError::Module("second memory".into()));
        }
        self.imports.push(Import { module: "env".into(), name: "memory".into(), kind: ImportKind::Memory { min_pages } });
    }

    /// Imports an immutable global from `env`.
    pub fn import_global(&mut self, name: &str, ty: ValType) -> GlobalIdx {
        self.check_import_order("global");
        self.imports.push(Import { module: "env".into(), name: name.into(), kind: ImportKind::Global { ty } });
        GlobalIdx(self.imported_globals() - 1)
    }

    pub fn import_func(&mut self, name: &str, sig: &FuncType) -> FuncIdx {
        self.check_import_order("function");
        let type_idx = self.type_index(sig);
        self.imports.push(Import { module: "env".into(), name: name.into(), kind: ImportKind::Func { type_idx } });
        self.func_types.push(type_idx);
        FuncIdx(self.func_types.len() as u32 - 1)
    }

    /// Defines a global initialized to the zero of its type.
    pub fn add_global(&mut self, ty: ValType, mutable: bool) -> GlobalIdx {
        let init = match ty {
            ValType::I32 => Instr::I32Const(0),
            ValType::I64 => Instr::I64Const(0),
            ValType::F32 => Instr::F32Const(0.0),
            ValType::F64 => Instr::F64Const(0.0),
        };
        self.add_global_init(ty, mutable, init)
    }

    pub fn add_global_init(&mut self, ty: ValType, mutable: bool, init: Instr) -> GlobalIdx {
        let ok = matches!(
            (ty, init),
            (ValType::I32, Instr::I32Const(_))
                | (ValType::I64, Instr::I64Const(_))
                | (ValType::F32, Instr::F32Const(_))
                | (ValType::F64, Instr::F64Const(_))
        );
        if !ok {
            self.fail(BuildError::Module(format!("global initializer `{init}` is not a {ty} constant")));
        }
        self.globals.push(GlobalDef { ty, mutable, init });
        GlobalIdx(self.imported_globals() + self.globals.len() as u32 - 1)
    }

    fn global_type(&self, idx: u32) -> Option<(ValType, bool)> {
        let imported: Vec<ValType> = self
            .imports
            .iter()
            .filter_map(|i| match i.kind {
                ImportKind::Global { ty } => Some(ty),
                _ => None,
            })
            .collect();
        match imported.get(idx as usize) {
            Some(&t) => Some((t, false)),
            None => self.globals.get(idx as usize - imported.len()).map(|g| (g.ty, g.mutable)),
        }
    }

    /// Reserves a function index so it can be called before its body exists.
    pub fn declare_function(&mut self, sig: &FuncType) -> FuncIdx {
        let type_idx = self.type_index(sig);
        self.func_types.push(type_idx);
        self.bodies.push(None);
        self.names.push(None);
        FuncIdx(self.func_types.len() as u32 - 1)
    }

    pub fn set_function_name(&mut self, f: FuncIdx, name: &str) {
        if let Some(slot) = (f.0 as usize).checked_sub(self.imported_funcs()).and_then(|i| self.names.get_mut(i)) {
            *slot = Some(name.to_string());
        }
    }

    /// Declares a function and starts its body.
    pub fn begin_function(&mut self, sig: &FuncType) -> FuncBuilder {
        let idx = self.declare_function(sig);
        self.begin_declared(idx)
    }

    /// Starts the body of a function reserved with [`declare_function`](Self::declare_function).
    pub fn begin_declared(&mut self, idx: FuncIdx) -> FuncBuilder {
        let sig = self.types[self.func_types[idx.0 as usize] as usize].clone();
        let funcs = self.func_types.iter().map(|&t| self.types[t as usize].clone()).collect();
        let globals = (0..self.imported_globals() + self.globals.len() as u32)
            .map(|i| self.global_type(i).unwrap())
            .collect();
        FuncBuilder::new(idx, sig, funcs, globals)
    }

    /// Closes the function and stores its body.
    pub fn finish_function(&mut self, fb: FuncBuilder) -> Result<FuncIdx, BuildError> {
        let idx = fb.index;
        let name = (idx.0 as usize).checked_sub(self.imported_funcs()).and_then(|i| self.names[i].clone());
        let type_idx = self.func_types[idx.0 as usize];
        let mut f = fb.finish()?;
        f.type_idx = type_idx;
        f.name = name;
        let slot = idx.0 as usize - self.imported_funcs();
        if self.bodies[slot].is_some() {
            return Err(BuildError::Function { func: idx.0, reason: "defined twice".into() });
        }
        self.bodies[slot] = Some(f);
        Ok(idx)
    }

    pub fn export_func(&mut self, name: &str, f: FuncIdx) {
        if self.exports.iter().any(|(n, _)| n == name) {
            self.fail(BuildError::Module(format!("duplicate export `{name}`")));
        }
        self.exports.push((name.into(), f));
    }

    /// Adds an active data segment initializing memory at `offset`.
    pub fn add_data(&mut self, offset: u32, bytes: Vec<u8>) {
        self.data.push(DataSegment { offset, bytes });
    }

    /// Encodes the module and checks it with an independent validator.
    pub fn finish(self) -> Result<Module, BuildError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let first_defined = self.imported_funcs() as u32;
        let mut functions = Vec::with_capacity(self.bodies.len());
        for (i, b) in self.bodies.into_iter().enumerate() {
            match b {
                Some(f) => functions.push(f),
                None => {
                    return Err(BuildError::Function { func: first_defined + i as u32, reason: "declared but never defined".into() })
                }
            }
        }
        let mut module = Module {
            types: self.types,
            imports: self.imports,
            functions,
            globals: self.globals,
            exports: self.exports,
            data: self.data,
            bytes: Vec::new(),
        };
        let (bytes, bodies) = encode::encode(&module);
        if let Err(e) = wasmparser::Validator::new().validate_all(&bytes) {
            let func = bodies.iter().position(|r| r.contains(&(e.offset() as usize))).map(|i| first_defined + i as u32);
            return Err(BuildError::Validation { func, reason: e.message().to_string() });
        }
        module.bytes = bytes;
        Ok(module)
    }
}

/// A branch target: the control frame opened by `block`, `loop` or `if`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrameKind {
    Func,
    Block,
    Loop,
    If,
    Else,
}

#[derive(Debug, Clone)]
struct Frame {
    kind: FrameKind,
    results: Vec<ValType>,
    height: usize,
    unreachable: bool,
}

/// Appends instructions to one function body, type checking each one.
///
/// The first error is kept and reported by [`ModuleBuilder::finish_function`];
/// later instructions are still recorded but no longer checked.
#[derive(Debug)]
pub struct FuncBuilder {
    index: FuncIdx,
    sig: FuncType,
    locals: Vec<ValType>,
    body: Vec<Instr>,
    stack: Vec<Option<ValType>>,
    frames: Vec<Frame>,
    funcs: Vec<FuncType>,
    globals: Vec<(ValType, bool)>,
    error: Option<BuildError>,
}

impl FuncBuilder {
    fn new(index: FuncIdx, sig: FuncType, funcs: Vec<FuncType>, globals: Vec<(ValType, bool)>) -> FuncBuilder {
        let frame = Frame { kind: FrameKind::Func, results: sig.results.clone(), height: 0, unreachable: false };
        FuncBuilder {
            index,
            sig,
            locals: Vec::new(),
            body: Vec::new(),
            stack: Vec::new(),
            frames: vec![frame],
            funcs,
            globals,
            error: None,
        }
    }

    pub fn index(&self) -> FuncIdx {
        self.index
    }

    pub fn param(&self, i: u32) -> Local {
        assert!((i as usize) < self.sig.params.len(), "no parameter {i}");
        Local(i)
    }

    /// A new local, initialized to zero by the engine.
    pub fn fresh_local(&mut self, ty: ValType) -> Local {
        self.locals.push(ty);
        Local((self.sig.params.len() + self.locals.len() - 1) as u32)
    }

    pub fn local_type(&self, l: Local) -> Option<ValType> {
        let (i, p) = (l.0 as usize, self.sig.params.len());
        if i < p {
            Some(self.sig.params[i])
        } else {
            self.locals.get(i - p).copied()
        }
    }

    pub fn body(&self) -> &[Instr] {
        &self.body
    }

    pub fn error(&self) -> Option<&BuildError> {
        self.error.as_ref()
    }

    /// Depth of open control frames, not counting the function itself.
    pub fn open_frames(&self) -> usize {
        self.frames.len() - 1
    }

    fn fail(&mut self, instr: &Instr, reason: String) {
        if self.error.is_none() {
            self.error = Some(BuildError::Instr {
                func: self.index.0,
                offset: self.body.len(),
                instr: instr.to_string(),
                reason,
            });
        }
    }

    fn push(&mut self, t: ValType) {
        self.stack.push(Some(t));
    }

    fn pop(&mut self, expect: Option<ValType>) -> Result<Option<ValType>, String> {
        let frame = self.frames.last().unwrap();
        if self.stack.len() == frame.height {
            if frame.unreachable {
                return Ok(expect);
            }
            return Err(match expect {
                Some(t) => format!("expected {t} but the operand stack is empty"),
                None => "operand stack is empty".into(),
            });
        }
        let got = self.stack.pop().unwrap();
        match (got, expect) {
            (Some(g), Some(e)) if g != e => Err(format!("expected {e}, found {g}")),
            (None, e) => Ok(e),
            (g, _) => Ok(g),
        }
    }

    fn pop_all(&mut self, types: &[ValType]) -> Result<(), String> {
        for &t in types.iter().rev() {
            self.pop(Some(t))?;
        }
        Ok(())
    }

    fn set_unreachable(&mut self) {
        let frame = self.frames.last_mut().unwrap();
        self.stack.truncate(frame.height);
        frame.unreachable = true;
    }

    fn label_types(&self, depth: u32) -> Result<Vec<ValType>, String> {
        let n = self.frames.len();
        if depth as usize >= n {
            return Err(format!("branch depth {depth} exceeds {n} open frames"));
        }
        let frame = &self.frames[n - 1 - depth as usize];
        Ok(if frame.kind == FrameKind::Loop { Vec::new() } else { frame.results.clone() })
    }

    fn local(&self, i: u32) -> Result<ValType, String> {
        self.local_type(Local(i)).ok_or_else(|| format!("no local {i}"))
    }

    fn open(&mut self, kind: FrameKind, bt: BlockType) {
        let results = match bt {
            BlockType::Empty => vec![],
            BlockType::Value(t) => vec![t],
        };
        self.frames.push(Frame { kind, results, height: self.stack.len(), unreachable: false });
    }

    fn check(&mut self, instr: &Instr) -> Result<(), String> {
        use Instr::*;
        match *instr {
            Unreachable => self.set_unreachable(),
            Nop => {}
            Block(bt) => self.open(FrameKind::Block, bt),
            Loop(bt) => self.open(FrameKind::Loop, bt),
            If(bt) => {
                self.pop(Some(ValType::I32))?;
                self.open(FrameKind::If, bt);
            }
            Else => {
                let frame = self.frames.last().unwrap().clone();
                if frame.kind != FrameKind::If {
                    return Err("`else` without matching `if`".into());
                }
                self.pop_all(&frame.results)?;
                if self.stack.len() != frame.height {
                    return Err("values left on the stack at `else`".into());
                }
                let f = self.frames.last_mut().unwrap();
                f.kind = FrameKind::Else;
                f.unreachable = false;
            }
            End => {
                if self.frames.len() == 1 {
                    return Err("`end` without an open block".into());
                }
                let frame = self.frames.last().unwrap().clone();
                self.pop_all(&frame.results)?;
                if self.stack.len() != frame.height {
                    return Err("values left on the stack at `end`".into());
                }
                if frame.kind == FrameKind::If && !frame.results.is_empty() {
                    return Err("`if` with a result needs an `else`".into());
                }
                self.frames.pop();
                for t in frame.results {
                    self.push(t);
                }
            }
            Br(d) => {
                let types = self.label_types(d)?;
                self.pop_all(&types)?;
                self.set_unreachable();
            }
            BrIf(d) => {
                self.pop(Some(ValType::I32))?;
                let types = self.label_types(d)?;
                self.pop_all(&types)?;
                for t in types {
                    self.push(t);
                }
            }
            Return => {
                let results = self.sig.results.clone();
                self.pop_all(&results)?;
                self.set_unreachable();
            }
            Call(f) => {
                let sig = self.funcs.get(f as usize).cloned().ok_or_else(|| format!("no function {f}"))?;
                self.pop_all(&sig.params)?;
                for t in sig.results {
                    self.push(t);
                }
            }
            Drop => {
                self.pop(None)?;
            }
            Select => {
                self.pop(Some(ValType::I32))?;
                let a = self.pop(None)?;
                let b = self.pop(a)?;
                match a.or(b) {
                    Some(t) => self.push(t),
                    None => self.stack.push(None),
                }
            }
            LocalGet(i) => {
                let t = self.local(i)?;
                self.push(t);
            }
            LocalSet(i) => {
                let t = self.local(i)?;
                self.pop(Some(t))?;
            }
            LocalTee(i) => {
                let t = self.local(i)?;
                self.pop(Some(t))?;
                self.push(t);
            }
            GlobalGet(i) => {
                let (t, _) = *self.globals.get(i as usize).ok_or_else(|| format!("no global {i}"))?;
                self.push(t);
            }
            GlobalSet(i) => {
                let (t, mutable) = *self.globals.get(i as usize).ok_or_else(|| format!("no global {i}"))?;
                if !mutable {
                    return Err(format!("global {i} is immutable"));
                }
                self.pop(Some(t))?;
            }
            Load(op, _) => {
                self.pop(Some(ValType::I32))?;
                self.push(op.val_type());
            }
            Store(op, _) => {
                self.pop(Some(op.val_type()))?;
                self.pop(Some(ValType::I32))?;
            }
            I32Const(_) => self.push(ValType::I32),
            I64Const(_) => self.push(ValType::I64),
            F32Const(_) => self.push(ValType::F32),
            F64Const(_) => self.push(ValType::F64),
            Num(op) => {
                self.pop_all(op.params())?;
                self.push(op.result());
            }
        }
        Ok(())
    }

    /// Appends `instr` after checking it against the operand stack.
    pub fn emit(&mut self, instr: impl Into<Instr>) {
        let instr = instr.into();
        if self.error.is_none() {
            if let Err(reason) = self.check(&instr) {
                self.fail(&instr, reason);
            }
        }
        self.body.push(instr);
    }

    fn relative(&mut self, label: Label) -> u32 {
        if label.0 >= self.frames.len() {
            let reason = "branch to a closed label".to_string();
            self.fail(&Instr::Br(0), reason);
            return 0;
        }
        (self.frames.len() - 1 - label.0) as u32
    }

    /// Label of the function body; branching to it returns.
    pub fn function_label(&self) -> Label {
        Label(0)
    }

    pub fn block(&mut self, bt: BlockType) -> Label {
        self.emit(Instr::Block(bt));
        Label(self.frames.len() - 1)
    }

    pub fn loop_(&mut self, bt: BlockType) -> Label {
        self.emit(Instr::Loop(bt));
        Label(self.frames.len() - 1)
    }

    /// Pops an `i32` condition and opens an `if` frame.
    pub fn if_(&mut self, bt: BlockType) -> Label {
        self.emit(Instr::If(bt));
        Label(self.frames.len() - 1)
    }

    pub fn else_(&mut self) {
        self.emit(Instr::Else);
    }

    pub fn end(&mut self) {
        self.emit(Instr::End);
    }

    pub fn br(&mut self, label: Label) {
        let d = self.relative(label);
        self.emit(Instr::Br(d));
    }

    pub fn br_if(&mut self, label: Label) {
        let d = self.relative(label);
        self.emit(Instr::BrIf(d));
    }

    pub fn call(&mut self, f: FuncIdx) {
        self.emit(Instr::Call(f.0));
    }

    pub fn local_get(&mut self, l: Local) {
        self.emit(Instr::LocalGet(l.0));
    }

    pub fn local_set(&mut self, l: Local) {
        self.emit(Instr::LocalSet(l.0));
    }

    pub fn local_tee(&mut self, l: Local) {
        self.emit(Instr::LocalTee(l.0));
    }

    pub fn global_get(&mut self, g: GlobalIdx) {
        self.emit(Instr::GlobalGet(g.0));
    }

    pub fn global_set(&mut self, g: GlobalIdx) {
        self.emit(Instr::GlobalSet(g.0));
    }

    pub fn i32_const(&mut self, v: i32) {
        self.emit(Instr::I32Const(v));
    }

    pub fn i64_const(&mut self, v: i64) {
        self.emit(Instr::I64Const(v));
    }

    pub fn f64_const(&mut self, v: f64) {
        self.emit(Instr::F64Const(v));
    }

    pub fn load(&mut self, op: LoadOp, offset: u32) {
        self.emit(Instr::Load(op, offset));
    }

    pub fn store(&mut self, op: StoreOp, offset: u32) {
        self.emit(Instr::Store(op, offset));
    }

    pub fn num(&mut self, op: NumOp) {
        self.emit(Instr::Num(op));
    }

    /// Checks that all frames are closed and the results are on the stack.
    fn finish(mut self) -> Result<Function, BuildError> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        if self.frames.len() > 1 {
            return Err(BuildError::Function {
                func: self.index.0,
                reason: format!("{} unclosed block(s)", self.frames.len() - 1),
            });
        }
        let results = self.sig.results.clone();
        let end_check = self.pop_all(&results).and_then(|_| {
            if self.stack.is_empty() {
                Ok(())
            } else {
                Err(format!("{} extra value(s) left on the stack", self.stack.len()))
            }
        });
        if let Err(reason) = end_check {
            return Err(BuildError::Function { func: self.index.0, reason: format!("at function end: {reason}") });
        }
        Ok(Function { type_idx: 0, locals: self.locals, body: self.body, name: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ValType::*;

    fn sig(p: &[ValType], r: &[ValType]) -> FuncType {
        FuncType::new(p, r)
    }

    #[test]
    fn params_are_locals() {
        let mut m = ModuleBuilder::new();
        let fb = m.begin_function(&sig(&[I32, I32], &[]));
        assert_eq!(fb.local_type(Local(0)), Some(I32));
        assert_eq!(fb.local_type(Local(1)), Some(I32));
        assert_eq!(fb.local_type(Local(2)), None);
    }

    #[test]
    fn fresh_local_indices() {
        let mut m = ModuleBuilder::new();
        let mut fb = m.begin_function(&sig(&[], &[]));
        assert_eq!(fb.fresh_local(I64), Local(0));
        assert_eq!(fb.fresh_local(I32), Local(1));
        let mut fb2 = m.begin_function(&sig(&[I32], &[]));
        assert_eq!(fb2.fresh_local(F64), Local(1));
    }

    #[test]
    fn missing_result_fails_at_finish() {
        let mut m = ModuleBuilder::new();
        let fb = m.begin_function(&sig(&[], &[I64]));
        let err = m.finish_function(fb).unwrap_err();
        assert!(matches!(err, BuildError::Function { func: 0, .. }), "{err}");
    }

    #[test]
    fn distinct_function_indices() {
        let mut m = ModuleBuilder::new();
        let a = m.begin_function(&sig(&[], &[]));
        let b = m.begin_function(&sig(&[], &[]));
        assert_eq!((a.index(), b.index()), (FuncIdx(0), FuncIdx(1)));
    }

    #[test]
    fn f64_lt_leaves_i32() {
        let mut m = ModuleBuilder::new();
        m.import_memory(1);
        let mut fb = m.begin_function(&sig(&[], &[I32]));
        fb.i32_const(0);
        fb.load(LoadOp::F64, 0);
        fb.f64_const(3.14);
        fb.num(NumOp::F64Lt);
        m.finish_function(fb).unwrap();
        m.finish().unwrap();
    }

    #[test]
    fn loop_back_edge() {
        let mut m = ModuleBuilder::new();
        let mut fb = m.begin_function(&sig(&[I32], &[]));
        let l = fb.loop_(BlockType::Empty);
        fb.local_get(Local(0));
        fb.i32_const(1);
        fb.num(NumOp::I32Sub);
        fb.local_tee(Local(0));
        fb.br_if(l);
        fb.end();
        assert_eq!(fb.body()[5], Instr::BrIf(0));
        m.finish_function(fb).unwrap();
        m.finish().unwrap();
    }

    #[test]
    fn add_with_one_operand_fails() {
        let mut m = ModuleBuilder::new();
        let mut fb = m.begin_function(&sig(&[], &[]));
        fb.i32_const(1);
        fb.num(NumOp::I32Add);
        match fb.error() {
            Some(BuildError::Instr { offset: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbalanced_blocks_name_function() {
        let mut m = ModuleBuilder::new();
        let ok = m.begin_function(&sig(&[], &[]));
        m.finish_function(ok).unwrap();
        let mut fb = m.begin_function(&sig(&[], &[]));
        fb.block(BlockType::Empty);
        let err = m.finish_function(fb).unwrap_err();
        assert_eq!(err, BuildError::Function { func: 1, reason: "1 unclosed block(s)".into() });
        let mut fb = m.begin_function(&sig(&[], &[]));
        fb.end();
        assert!(matches!(m.finish_function(fb).unwrap_err(), BuildError::Instr { func: 2, offset: 0, .. }));
    }

    #[test]
    fn labels_resolve_to_relative_depths() {
        let mut m = ModuleBuilder::new();
        let mut fb = m.begin_function(&sig(&[I32], &[]));
        let outer = fb.block(BlockType::Empty);
        let inner = fb.loop_(BlockType::Empty);
        fb.local_get(Local(0));
        fb.if_(BlockType::Empty);
        fb.br(outer);
        fb.else_();
        fb.br(inner);
        fb.end();
        fb.end();
        fb.end();
        assert!(fb.body().contains(&Instr::Br(2)));
        assert!(fb.body().contains(&Instr::Br(1)));
        m.finish_function(fb).unwrap();
        m.finish().unwrap();
    }

    #[test]
    fn if_with_result_requires_else() {
        let mut m = ModuleBuilder::new();
        let mut fb = m.begin_function(&sig(&[], &[I32]));
        fb.i32_const(1);
        fb.if_(BlockType::Value(I32));
        fb.i32_const(2);
        fb.end();
        assert!(fb.error().is_some());
    }

    #[test]
    fn unreachable_code_is_polymorphic() {
        let mut m = ModuleBuilder::new();
        let mut fb = m.begin_function(&sig(&[], &[I64]));
        fb.emit(Instr::Unreachable);
        fb.num(NumOp::I64Add);
        m.finish_function(fb).unwrap();
        m.finish().unwrap();
    }

    #[test]
    fn immutable_global_set_rejected() {
        let mut m = ModuleBuilder::new();
        let g = m.import_global("rows_R", I32);
        let mut fb = m.begin_function(&sig(&[], &[]));
        fb.i32_const(0);
        fb.global_set(g);
        assert!(fb.error().is_some());
    }

    #[test]
    fn late_import_is_an_error() {
        let mut m = ModuleBuilder::new();
        m.declare_function(&sig(&[], &[]));
        m.import_global("g", I32);
        assert!(matches!(m.finish(), Err(BuildError::Module(_))));
    }

    #[test]
    fn undefined_function_is_an_error() {
        let mut m = ModuleBuilder::new();
        m.declare_function(&sig(&[], &[]));
        assert!(matches!(m.finish(), Err(BuildError::Function { func: 0, .. })));
    }
}
