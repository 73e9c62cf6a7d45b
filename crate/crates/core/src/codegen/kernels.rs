//! Standalone modules wrapping single emitters, for exercising them in
//! isolation. Every export takes no parameters: arguments and results are
//! `u32` words at the start of memory (see [`Kernel::arg`]) and data lives
//! from [`DATA_BASE`] on.

use thiserror::Error;

use super::{
    add_i32, copy_bytes, emit_compare, emit_median_of_three, emit_partition, emit_quicksort, emit_swap, load_field,
    store_field, CodegenError, HashTable, HashTableSpec, Heap, OrderSpec, TupleLayout, Val,
};
use crate::catalog::DataType;
use crate::runtime::{EngineAdapter, EngineInstance, NoHost, RuntimeError};
use crate::wasm::{BlockType, BuildError, FuncIdx, FuncType, Instr, LoadOp, Module, ModuleBuilder, NumOp, StoreOp, ValType};

/// Number of argument words.
pub const ARGS: u32 = 16;
/// First byte free for test data.
pub const DATA_BASE: u32 = 64;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// An instantiated kernel module. Memory persists across calls.
pub struct Kernel {
    pub module: Module,
    instance: Box<dyn EngineInstance>,
}

impl Kernel {
    pub fn new(module: Module, adapter: &dyn EngineAdapter, pages: u32) -> Result<Kernel, KernelError> {
        let compiled = adapter.compile(module.bytes())?;
        let instance = compiled.instantiate(pages, &[], Box::new(NoHost))?;
        Ok(Kernel { module, instance })
    }

    pub fn memory(&mut self) -> &mut [u8] {
        self.instance.memory()
    }

    pub fn set_arg(&mut self, i: u32, v: u32) {
        let at = (4 * i) as usize;
        self.memory()[at..at + 4].copy_from_slice(&v.to_le_bytes());
    }

    pub fn arg(&mut self, i: u32) -> u32 {
        let at = (4 * i) as usize;
        u32::from_le_bytes(self.memory()[at..at + 4].try_into().unwrap())
    }

    pub fn write(&mut self, at: u32, bytes: &[u8]) {
        self.memory()[at as usize..at as usize + bytes.len()].copy_from_slice(bytes);
    }

    pub fn read(&mut self, at: u32, len: u32) -> Vec<u8> {
        self.memory()[at as usize..(at + len) as usize].to_vec()
    }

    pub fn call(&mut self, export: &str) -> Result<(), KernelError> {
        Ok(self.instance.call(export)?)
    }

    /// The body of the function exported as `name`.
    pub fn body(&self, name: &str) -> Option<&[Instr]> {
        export_body(&self.module, name)
    }
}

pub fn export_body<'m>(module: &'m Module, name: &str) -> Option<&'m [Instr]> {
    let idx = module.exports.iter().find(|(n, _)| n == name)?.1;
    module.function(idx).map(|f| f.body.as_slice())
}

/// Call targets appearing in `body`.
pub fn calls(body: &[Instr]) -> Vec<FuncIdx> {
    body.iter()
        .filter_map(|i| match i {
            Instr::Call(f) => Some(FuncIdx(*f)),
            _ => None,
        })
        .collect()
}

fn arg_local(fb: &mut crate::wasm::FuncBuilder, i: u32) -> crate::wasm::Local {
    let l = fb.fresh_local(ValType::I32);
    fb.i32_const(0);
    fb.load(LoadOp::I32, 4 * i);
    fb.local_set(l);
    l
}

fn set_result(fb: &mut crate::wasm::FuncBuilder, i: u32, v: crate::wasm::Local) {
    fb.i32_const(0);
    fb.local_get(v);
    fb.store(StoreOp::I32, 4 * i);
}

/// Sorting kernels for `order`:
///
/// | export      | arguments              | result   |
/// |-------------|------------------------|----------|
/// | `compare`   | a, b                   | arg 2    |
/// | `swap`      | a, b                   |          |
/// | `partition` | begin, end, pivot      | arg 3    |
/// | `median`    | a, b, c                | arg 3    |
/// | `sort`      | begin, end             |          |
///
/// The exported `qsort` is the recursive sort function itself.
pub fn sort_module(order: &OrderSpec, pages: u32) -> Result<Module, KernelError> {
    let mut mb = ModuleBuilder::new();
    mb.import_memory(pages);
    let unit = FuncType::new(&[], &[]);

    let mut fb = mb.begin_function(&unit);
    let (a, b) = (arg_local(&mut fb, 0), arg_local(&mut fb, 1));
    let c = emit_compare(&mut fb, order, a, b)?;
    set_result(&mut fb, 2, c);
    let f = mb.finish_function(fb)?;
    mb.export_func("compare", f);

    let mut fb = mb.begin_function(&unit);
    let (a, b) = (arg_local(&mut fb, 0), arg_local(&mut fb, 1));
    emit_swap(&mut fb, order.stride(), a, b);
    let f = mb.finish_function(fb)?;
    mb.export_func("swap", f);

    let mut fb = mb.begin_function(&unit);
    let (begin, end, pivot) = (arg_local(&mut fb, 0), arg_local(&mut fb, 1), arg_local(&mut fb, 2));
    let p = emit_partition(&mut fb, order, begin, end, pivot)?;
    set_result(&mut fb, 3, p);
    let f = mb.finish_function(fb)?;
    mb.export_func("partition", f);

    let mut fb = mb.begin_function(&unit);
    let (a, b, c) = (arg_local(&mut fb, 0), arg_local(&mut fb, 1), arg_local(&mut fb, 2));
    let m = emit_median_of_three(&mut fb, order, a, b, c)?;
    set_result(&mut fb, 3, m);
    let f = mb.finish_function(fb)?;
    mb.export_func("median", f);

    let qsort = emit_quicksort(&mut mb, order)?;
    mb.export_func("qsort", qsort);
    let mut fb = mb.begin_function(&unit);
    let (begin, end) = (arg_local(&mut fb, 0), arg_local(&mut fb, 1));
    fb.local_get(begin);
    fb.local_get(end);
    fb.call(qsort);
    let f = mb.finish_function(fb)?;
    mb.export_func("sort", f);
    Ok(mb.finish()?)
}

/// Hash table kernels. Slots hold the key fields followed by an `INT64`
/// counter `n`; keys are read from a tuple laid out by [`key_layout`] at
/// the address in arg 0.
///
/// | export   | effect                                                              |
/// |----------|---------------------------------------------------------------------|
/// | `init`   | allocates the table                                                 |
/// | `upsert` | insert-or-get, then `n += 1`; arg 1 = slot, arg 2 = new flag        |
/// | `insert` | always claims a slot with `n = 1`; arg 1 = slot                     |
/// | `lookup` | arg 1 = matching slots, arg 2 = sum of their `n`                    |
/// | `dump`   | copies every occupied slot to the address in arg 0; arg 1 = slots   |
///
/// Every export also stores the entry count in arg 3 and the capacity in
/// arg 4. The heap starts at `heap_base` and ends with memory.
pub fn hash_module(keys: &[DataType], initial_capacity: u32, heap_base: u32, pages: u32) -> Result<Module, KernelError> {
    let spec = hash_slot_spec(keys, initial_capacity);
    let n_off = spec.slot.fields[keys.len()].offset;
    let input = key_layout(keys);

    let mut mb = ModuleBuilder::new();
    mb.import_memory(pages);
    let top = mb.add_global_init(ValType::I32, true, Instr::I32Const(heap_base as i32));
    let table = HashTable::declare(&mut mb, spec, Heap { top, limit: pages * 65536 });
    let unit = FuncType::new(&[], &[]);

    let stats = |fb: &mut crate::wasm::FuncBuilder| {
        fb.i32_const(0);
        fb.global_get(table.count);
        fb.store(StoreOp::I32, 12);
        fb.i32_const(0);
        fb.global_get(table.cap);
        fb.store(StoreOp::I32, 16);
    };
    let load_keys = |fb: &mut crate::wasm::FuncBuilder| -> Vec<Val> {
        let ptr = arg_local(fb, 0);
        input.fields.iter().map(|f| load_field(fb, f.ty, ptr, f.offset)).collect()
    };

    let mut fb = mb.begin_function(&unit);
    table.emit_init(&mut fb);
    stats(&mut fb);
    let f = mb.finish_function(fb)?;
    mb.export_func("init", f);

    let mut fb = mb.begin_function(&unit);
    let kv = load_keys(&mut fb);
    let (slot, is_new) = table.emit_insert_or_get(&mut fb, &kv)?;
    fb.local_get(is_new);
    fb.if_(BlockType::Empty);
    fb.local_get(slot);
    fb.i64_const(0);
    fb.store(StoreOp::I64, n_off);
    fb.end();
    fb.local_get(slot);
    fb.local_get(slot);
    fb.load(LoadOp::I64, n_off);
    fb.i64_const(1);
    fb.num(NumOp::I64Add);
    fb.store(StoreOp::I64, n_off);
    set_result(&mut fb, 1, slot);
    set_result(&mut fb, 2, is_new);
    stats(&mut fb);
    let f = mb.finish_function(fb)?;
    mb.export_func("upsert", f);

    let mut fb = mb.begin_function(&unit);
    let kv = load_keys(&mut fb);
    let slot = table.emit_insert(&mut fb, &kv)?;
    let one = fb.fresh_local(ValType::I64);
    fb.i64_const(1);
    fb.local_set(one);
    store_field(&mut fb, Val { local: one, ty: DataType::Int64 }, slot, n_off);
    set_result(&mut fb, 1, slot);
    stats(&mut fb);
    let f = mb.finish_function(fb)?;
    mb.export_func("insert", f);

    let mut fb = mb.begin_function(&unit);
    let kv = load_keys(&mut fb);
    let (hits, sum) = (fb.fresh_local(ValType::I32), fb.fresh_local(ValType::I32));
    table.emit_lookup(&mut fb, &kv, &mut |fb, slot| {
        fb.local_get(hits);
        fb.i32_const(1);
        fb.num(NumOp::I32Add);
        fb.local_set(hits);
        fb.local_get(sum);
        fb.local_get(slot);
        fb.load(LoadOp::I64, n_off);
        fb.num(NumOp::I32WrapI64);
        fb.num(NumOp::I32Add);
        fb.local_set(sum);
        Ok(())
    })?;
    set_result(&mut fb, 1, hits);
    set_result(&mut fb, 2, sum);
    stats(&mut fb);
    let f = mb.finish_function(fb)?;
    mb.export_func("lookup", f);

    let mut fb = mb.begin_function(&unit);
    let out = arg_local(&mut fb, 0);
    let n = fb.fresh_local(ValType::I32);
    let stride = table.spec.stride();
    table.emit_scan(&mut fb, &mut |fb, slot| {
        copy_bytes(fb, slot, 0, out, 0, stride);
        add_i32(fb, out, out, stride as i32);
        add_i32(fb, n, n, 1);
        Ok(())
    })?;
    set_result(&mut fb, 1, n);
    stats(&mut fb);
    let f = mb.finish_function(fb)?;
    mb.export_func("dump", f);
    Ok(mb.finish()?)
}

/// Slot layout used by [`hash_module`]: the keys, then the counter `n`.
pub fn hash_slot_spec(keys: &[DataType], initial_capacity: u32) -> HashTableSpec {
    let mut fields: Vec<(String, String, DataType)> =
        keys.iter().enumerate().map(|(i, &t)| (String::new(), format!("k{i}"), t)).collect();
    fields.push((String::new(), "n".into(), DataType::Int64));
    HashTableSpec::new(&fields, keys.len(), initial_capacity)
}

/// Layout of the key tuple read by the hash kernels.
pub fn key_layout(keys: &[DataType]) -> TupleLayout {
    let fields: Vec<_> = keys.iter().enumerate().map(|(i, &t)| (String::new(), format!("k{i}"), t)).collect();
    TupleLayout::new(&fields)
}

/// Home bucket of a key with encoded bytes `key` in a table of `cap` slots,
/// as computed by the generated probe code.
pub fn home_bucket(key: &[u8], cap: u32) -> u32 {
    let h = super::fnv1a64(key);
    ((h ^ (h >> 32)) as u32) & (cap - 1)
}
