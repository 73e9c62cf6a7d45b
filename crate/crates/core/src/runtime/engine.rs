//! Engine adapters. A module is compiled once and may be instantiated
//! against a host-provided memory; imports are resolved by name.

use std::any::Any;
use std::sync::OnceLock;

use super::RuntimeError;

/// Receives the module's calls to `env.rewire_next_chunk` and
/// `env.result_flush`.
pub trait HostHandler: Any {
    fn rewire_next_chunk(&mut self, memory: &mut [u8], table: i32) -> Result<i32, String>;
    fn result_flush(&mut self, memory: &mut [u8]) -> Result<(), String>;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// Host for modules that never call back.
pub struct NoHost;

impl HostHandler for NoHost {
    fn rewire_next_chunk(&mut self, _: &mut [u8], table: i32) -> Result<i32, String> {
        Err(format!("unexpected chunk request for table {table}"))
    }

    fn result_flush(&mut self, _: &mut [u8]) -> Result<(), String> {
        Err("unexpected result flush".into())
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptLevel {
    /// Quick baseline compilation.
    Fast,
    /// Optimizing compilation.
    #[default]
    Full,
}

impl std::str::FromStr for OptLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(OptLevel::Fast),
            "full" => Ok(OptLevel::Full),
            _ => Err(format!("unknown optimization level `{s}` (expected fast or full)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EngineKind {
    /// Cranelift-based JIT.
    #[default]
    Wasmtime,
    /// Interpreter.
    Wasmi,
}

impl EngineKind {
    /// Reads `WASMQL_ENGINE` (`wasmtime` or `wasmi`); defaults to wasmtime.
    pub fn from_env() -> Result<EngineKind, RuntimeError> {
        match std::env::var("WASMQL_ENGINE") {
            Ok(v) => v.parse().map_err(RuntimeError::Engine),
            Err(_) => Ok(EngineKind::default()),
        }
    }

    pub fn adapter(self, opt: OptLevel) -> Box<dyn EngineAdapter> {
        match self {
            EngineKind::Wasmtime => Box::new(WasmtimeAdapter::new(opt)),
            EngineKind::Wasmi => Box::new(WasmiAdapter::new()),
        }
    }
}

impl std::str::FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wasmtime" => Ok(EngineKind::Wasmtime),
            "wasmi" => Ok(EngineKind::Wasmi),
            _ => Err(format!("unknown engine `{s}` (expected wasmtime or wasmi)")),
        }
    }
}

pub trait EngineAdapter {
    fn name(&self) -> &'static str;
    fn compile(&self, binary: &[u8]) -> Result<Box<dyn CompiledModule>, RuntimeError>;
}

pub trait CompiledModule {
    /// Instantiates with a fresh memory of `pages` pages and the given
    /// immutable `i32` globals.
    fn instantiate(
        &self,
        pages: u32,
        globals: &[(String, u32)],
        host: Box<dyn HostHandler>,
    ) -> Result<Box<dyn EngineInstance>, RuntimeError>;
}

pub trait EngineInstance {
    fn memory(&mut self) -> &mut [u8];
    /// Calls an export taking and returning nothing.
    fn call(&mut self, export: &str) -> Result<(), RuntimeError>;
    /// Gives `f` the memory together with the host state.
    fn with_host(&mut self, f: &mut dyn FnMut(&mut [u8], &mut dyn HostHandler));
}

fn global_value(globals: &[(String, u32)], name: &str) -> Result<u32, RuntimeError> {
    globals
        .iter()
        .find(|(n, _)| n == name)
        .map(|&(_, v)| v)
        .ok_or_else(|| RuntimeError::Engine(format!("no value for imported global `{name}`")))
}

// ---- wasmtime ----

pub struct WasmtimeAdapter {
    engine: &'static wasmtime::Engine,
}

impl WasmtimeAdapter {
    pub fn new(opt: OptLevel) -> WasmtimeAdapter {
        static FAST: OnceLock<wasmtime::Engine> = OnceLock::new();
        static FULL: OnceLock<wasmtime::Engine> = OnceLock::new();
        let make = |level| {
            let mut config = wasmtime::Config::new();
            config.cranelift_opt_level(level);
            wasmtime::Engine::new(&config).expect("default wasmtime configuration")
        };
        let engine = match opt {
            OptLevel::Fast => FAST.get_or_init(|| make(wasmtime::OptLevel::None)),
            OptLevel::Full => FULL.get_or_init(|| make(wasmtime::OptLevel::Speed)),
        };
        WasmtimeAdapter { engine }
    }
}

impl EngineAdapter for WasmtimeAdapter {
    fn name(&self) -> &'static str {
        "wasmtime"
    }

    fn compile(&self, binary: &[u8]) -> Result<Box<dyn CompiledModule>, RuntimeError> {
        let module = wasmtime::Module::new(self.engine, binary).map_err(|e| RuntimeError::Engine(format!("{e:#}")))?;
        Ok(Box::new(WasmtimeModule { engine: self.engine, module }))
    }
}

struct WasmtimeModule {
    engine: &'static wasmtime::Engine,
    module: wasmtime::Module,
}

struct WtState {
    host: Box<dyn HostHandler>,
    memory: Option<wasmtime::Memory>,
}

fn wt_err(e: wasmtime::Error) -> RuntimeError {
    match e.downcast_ref::<wasmtime::Trap>() {
        Some(trap) => RuntimeError::Trap(trap.to_string()),
        None => RuntimeError::Trap(format!("{e:#}")),
    }
}

impl CompiledModule for WasmtimeModule {
    fn instantiate(
        &self,
        pages: u32,
        globals: &[(String, u32)],
        host: Box<dyn HostHandler>,
    ) -> Result<Box<dyn EngineInstance>, RuntimeError> {
        use wasmtime::{Caller, ExternType, Func, Global, GlobalType, Linker, Memory, MemoryType, Mutability, Store, Val, ValType};
        let engine_err = |e: wasmtime::Error| RuntimeError::Engine(format!("{e:#}"));
        let mut store = Store::new(self.engine, WtState { host, memory: None });
        let memory = Memory::new(&mut store, MemoryType::new(pages, None)).map_err(engine_err)?;
        store.data_mut().memory = Some(memory);
        let mut linker = Linker::new(self.engine);
        for imp in self.module.imports() {
            match imp.ty() {
                ExternType::Memory(_) => {
                    linker.define(&store, imp.module(), imp.name(), memory).map_err(engine_err)?;
                }
                ExternType::Global(_) => {
                    let v = global_value(globals, imp.name())?;
                    let g = Global::new(&mut store, GlobalType::new(ValType::I32, Mutability::Const), Val::I32(v as i32))
                        .map_err(engine_err)?;
                    linker.define(&store, imp.module(), imp.name(), g).map_err(engine_err)?;
                }
                ExternType::Func(_) => {
                    let f = match imp.name() {
                        "rewire_next_chunk" => Func::wrap(&mut store, |mut caller: Caller<'_, WtState>, t: i32| {
                            let mem = caller.data().memory.expect("memory is set before instantiation");
                            let (bytes, state) = mem.data_and_store_mut(&mut caller);
                            state.host.rewire_next_chunk(bytes, t).map_err(wasmtime::Error::msg)
                        }),
                        "result_flush" => Func::wrap(&mut store, |mut caller: Caller<'_, WtState>| {
                            let mem = caller.data().memory.expect("memory is set before instantiation");
                            let (bytes, state) = mem.data_and_store_mut(&mut caller);
                            state.host.result_flush(bytes).map_err(wasmtime::Error::msg)
                        }),
                        other => return Err(RuntimeError::Engine(format!("unknown host function `{other}`"))),
                    };
                    linker.define(&store, imp.module(), imp.name(), f).map_err(engine_err)?;
                }
                other => return Err(RuntimeError::Engine(format!("unsupported import {other:?}"))),
            }
        }
        let instance = linker.instantiate(&mut store, &self.module).map_err(wt_err)?;
        Ok(Box::new(WasmtimeInstance { store, memory, instance }))
    }
}

struct WasmtimeInstance {
    store: wasmtime::Store<WtState>,
    memory: wasmtime::Memory,
    instance: wasmtime::Instance,
}

impl EngineInstance for WasmtimeInstance {
    fn memory(&mut self) -> &mut [u8] {
        self.memory.data_mut(&mut self.store)
    }

    fn call(&mut self, export: &str) -> Result<(), RuntimeError> {
        let f = self
            .instance
            .get_typed_func::<(), ()>(&mut self.store, export)
            .map_err(|e| RuntimeError::Engine(format!("export `{export}`: {e:#}")))?;
        f.call(&mut self.store, ()).map_err(wt_err)
    }

    fn with_host(&mut self, f: &mut dyn FnMut(&mut [u8], &mut dyn HostHandler)) {
        let (bytes, state) = self.memory.data_and_store_mut(&mut self.store);
        f(bytes, state.host.as_mut())
    }
}

// ---- wasmi ----

pub struct WasmiAdapter {
    engine: wasmi::Engine,
}

impl WasmiAdapter {
    pub fn new() -> WasmiAdapter {
        let mut config = wasmi::Config::default();
        config.compilation_mode(wasmi::CompilationMode::Eager);
        WasmiAdapter { engine: wasmi::Engine::new(&config) }
    }
}

impl Default for WasmiAdapter {
    fn default() -> Self {
        WasmiAdapter::new()
    }
}

impl EngineAdapter for WasmiAdapter {
    fn name(&self) -> &'static str {
        "wasmi"
    }

    fn compile(&self, binary: &[u8]) -> Result<Box<dyn CompiledModule>, RuntimeError> {
        let module = wasmi::Module::new(&self.engine, binary).map_err(|e| RuntimeError::Engine(e.to_string()))?;
        Ok(Box::new(WasmiModule { engine: self.engine.clone(), module }))
    }
}

struct WasmiModule {
    engine: wasmi::Engine,
    module: wasmi::Module,
}

struct WiState {
    host: Box<dyn HostHandler>,
    memory: Option<wasmi::Memory>,
}

fn wi_err(e: wasmi::Error) -> RuntimeError {
    match e.as_trap_code() {
        Some(code) => RuntimeError::Trap(code.to_string()),
        None => RuntimeError::Trap(e.to_string()),
    }
}

impl CompiledModule for WasmiModule {
    fn instantiate(
        &self,
        pages: u32,
        globals: &[(String, u32)],
        host: Box<dyn HostHandler>,
    ) -> Result<Box<dyn EngineInstance>, RuntimeError> {
        use wasmi::{Caller, ExternType, Func, Global, Linker, Memory, MemoryType, Mutability, Store, Val};
        let engine_err = |e: wasmi::Error| RuntimeError::Engine(e.to_string());
        let mut store = Store::new(&self.engine, WiState { host, memory: None });
        let memory = Memory::new(&mut store, MemoryType::new(pages, None)).map_err(engine_err)?;
        store.data_mut().memory = Some(memory);
        let mut linker = Linker::<WiState>::new(&self.engine);
        for imp in self.module.imports() {
            let (m, n) = (imp.module(), imp.name());
            let link_err = |e: wasmi::errors::LinkerError| RuntimeError::Engine(e.to_string());
            match imp.ty() {
                ExternType::Memory(_) => {
                    linker.define(m, n, memory).map_err(link_err)?;
                }
                ExternType::Global(_) => {
                    let v = global_value(globals, n)?;
                    let g = Global::new(&mut store, Val::I32(v as i32), Mutability::Const);
                    linker.define(m, n, g).map_err(link_err)?;
                }
                ExternType::Func(_) => {
                    let f = match n {
                        "rewire_next_chunk" => Func::wrap(&mut store, |mut caller: Caller<'_, WiState>, t: i32| {
                            let mem = caller.data().memory.expect("memory is set before instantiation");
                            let (bytes, state) = mem.data_and_store_mut(&mut caller);
                            state.host.rewire_next_chunk(bytes, t).map_err(wasmi::Error::new)
                        }),
                        "result_flush" => Func::wrap(&mut store, |mut caller: Caller<'_, WiState>| {
                            let mem = caller.data().memory.expect("memory is set before instantiation");
                            let (bytes, state) = mem.data_and_store_mut(&mut caller);
                            state.host.result_flush(bytes).map_err(wasmi::Error::new)
                        }),
                        other => return Err(RuntimeError::Engine(format!("unknown host function `{other}`"))),
                    };
                    linker.define(m, n, f).map_err(link_err)?;
                }
                other => return Err(RuntimeError::Engine(format!("unsupported import {other:?}"))),
            }
        }
        let instance = linker.instantiate_and_start(&mut store, &self.module).map_err(wi_err)?;
        Ok(Box::new(WasmiInstance { store, memory, instance }))
    }
}

struct WasmiInstance {
    store: wasmi::Store<WiState>,
    memory: wasmi::Memory,
    instance: wasmi::Instance,
}

impl EngineInstance for WasmiInstance {
    fn memory(&mut self) -> &mut [u8] {
        self.memory.data_mut(&mut self.store)
    }

    fn call(&mut self, export: &str) -> Result<(), RuntimeError> {
        let f = self
            .instance
            .get_typed_func::<(), ()>(&self.store, export)
            .map_err(|e| RuntimeError::Engine(format!("export `{export}`: {e}")))?;
        f.call(&mut self.store, ()).map_err(wi_err)
    }

    fn with_host(&mut self, f: &mut dyn FnMut(&mut [u8], &mut dyn HostHandler)) {
        let (bytes, state) = self.memory.data_and_store_mut(&mut self.store);
        f(bytes, state.host.as_mut())
    }
}
