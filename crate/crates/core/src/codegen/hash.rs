use super::{copy_bytes, emit_char_cmp, emit_load_field, load_field, store_field, trap_if, CodegenError, TupleLayout, Val};
use crate::catalog::DataType;
use crate::wasm::{BlockType, FuncBuilder, GlobalIdx, LoadOp, Local, ModuleBuilder, NumOp, StoreOp, ValType};

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// `h = (h ^ byte) * prime` for the `i64` byte on the stack.
fn mix_byte(fb: &mut FuncBuilder, h: Local) {
    fb.local_get(h);
    fb.num(NumOp::I64Xor);
    fb.i64_const(FNV_PRIME as i64);
    fb.num(NumOp::I64Mul);
    fb.local_set(h);
}

/// Mixes the little-endian bytes of `v` into the `i64` hash in `h`. Floats
/// are hashed by their bit pattern, `CHAR(n)` by its `n` bytes.
pub fn emit_hash(fb: &mut FuncBuilder, h: Local, v: Val) {
    if let DataType::Char(n) = v.ty {
        let p = fb.fresh_local(ValType::I32);
        let end = fb.fresh_local(ValType::I32);
        fb.local_get(v.local);
        fb.local_tee(p);
        fb.i32_const(n as i32);
        fb.num(NumOp::I32Add);
        fb.local_set(end);
        let exit = fb.block(BlockType::Empty);
        let top = fb.loop_(BlockType::Empty);
        fb.local_get(p);
        fb.local_get(end);
        fb.num(NumOp::I32GeU);
        fb.br_if(exit);
        fb.local_get(p);
        fb.load(LoadOp::I64U8, 0);
        mix_byte(fb, h);
        fb.local_get(p);
        fb.i32_const(1);
        fb.num(NumOp::I32Add);
        fb.local_set(p);
        fb.br(top);
        fb.end();
        fb.end();
        return;
    }
    let x = fb.fresh_local(ValType::I64);
    fb.local_get(v.local);
    match v.ty {
        DataType::Int32 | DataType::Bool => fb.num(NumOp::I64ExtendI32U),
        DataType::Float64 => fb.num(NumOp::I64ReinterpretF64),
        _ => {}
    }
    fb.local_set(x);
    for i in 0..v.ty.width() as i64 {
        fb.local_get(x);
        if i > 0 {
            fb.i64_const(8 * i);
            fb.num(NumOp::I64ShrU);
        }
        fb.i64_const(0xff);
        fb.num(NumOp::I64And);
        mix_byte(fb, h);
    }
}

/// Hashes the concatenated bytes of `vals`. Returns the `i64` local.
pub fn emit_hash_vals(fb: &mut FuncBuilder, vals: &[Val]) -> Local {
    let h = fb.fresh_local(ValType::I64);
    fb.i64_const(FNV_OFFSET as i64);
    fb.local_set(h);
    for v in vals {
        emit_hash(fb, h, *v);
    }
    h
}

/// Bump allocator over the heap area: `top` is a mutable `i32` global and
/// allocations past `limit` trap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Heap {
    pub top: GlobalIdx,
    pub limit: u32,
}

impl Heap {
    /// Returns a local with the start of a fresh `size`-byte block.
    fn alloc(&self, fb: &mut FuncBuilder, size: Local) -> Local {
        let start = fb.fresh_local(ValType::I32);
        fb.global_get(self.top);
        fb.local_tee(start);
        fb.num(NumOp::I64ExtendI32U);
        fb.local_get(size);
        fb.num(NumOp::I64ExtendI32U);
        fb.num(NumOp::I64Add);
        fb.i64_const(self.limit as i64);
        fb.num(NumOp::I64GtU);
        trap_if(fb);
        fb.local_get(start);
        fb.local_get(size);
        fb.num(NumOp::I32Add);
        fb.global_set(self.top);
        start
    }
}

/// Slot layout of an open-addressing table. The first `key_count` fields
/// are the key; a zero tag byte marks an empty slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashTableSpec {
    pub slot: TupleLayout,
    pub tag_offset: u32,
    pub key_count: usize,
    /// A power of two.
    pub initial_capacity: u32,
}

impl HashTableSpec {
    pub fn new(fields: &[(String, String, DataType)], key_count: usize, initial_capacity: u32) -> HashTableSpec {
        let (slot, tag_offset) = TupleLayout::new(fields).with_tag();
        HashTableSpec { slot, tag_offset, key_count, initial_capacity: initial_capacity.max(8).next_power_of_two() }
    }

    pub fn stride(&self) -> u32 {
        self.slot.stride
    }

    /// Capacity once `rows` entries have been inserted.
    pub fn capacity_for(&self, rows: u64) -> u64 {
        let mut cap = self.initial_capacity as u64;
        while rows * 10 > cap * 7 {
            cap *= 2;
        }
        cap
    }

    /// Heap bytes allocated by a table that ends up holding `rows` entries,
    /// counting every table abandoned while growing.
    pub fn heap_bytes_for(&self, rows: u64) -> u64 {
        let final_cap = self.capacity_for(rows);
        let mut cap = self.initial_capacity as u64;
        let mut total = cap;
        while cap < final_cap {
            cap *= 2;
            total += cap;
        }
        total * self.stride() as u64
    }
}

/// A hash table held in linear memory and addressed through three
/// mutable globals: base address, capacity and entry count.
#[derive(Debug, Clone)]
pub struct HashTable {
    pub spec: HashTableSpec,
    pub base: GlobalIdx,
    pub cap: GlobalIdx,
    pub count: GlobalIdx,
    heap: Heap,
}

impl HashTable {
    /// Adds the table's globals. Must run before any function is begun.
    pub fn declare(mb: &mut ModuleBuilder, spec: HashTableSpec, heap: Heap) -> HashTable {
        let base = mb.add_global(ValType::I32, true);
        let cap = mb.add_global(ValType::I32, true);
        let count = mb.add_global(ValType::I32, true);
        HashTable { spec, base, cap, count, heap }
    }

    fn key_fields(&self) -> impl Iterator<Item = (DataType, u32)> + '_ {
        self.spec.slot.fields[..self.spec.key_count].iter().map(|f| (f.ty, f.offset))
    }

    /// Allocates and clears the initial slots.
    pub fn emit_init(&self, fb: &mut FuncBuilder) {
        let cap = self.spec.initial_capacity;
        fb.i32_const(cap as i32);
        fb.global_set(self.cap);
        fb.i32_const(0);
        fb.global_set(self.count);
        self.emit_alloc_slots(fb);
    }

    /// Allocates `cap` cleared slots and points `base` at them.
    fn emit_alloc_slots(&self, fb: &mut FuncBuilder) {
        let size = fb.fresh_local(ValType::I32);
        fb.global_get(self.cap);
        fb.i32_const(self.spec.stride() as i32);
        fb.num(NumOp::I32Mul);
        fb.local_set(size);
        let start = self.heap.alloc(fb, size);
        fb.local_get(start);
        fb.global_set(self.base);
        let p = fb.fresh_local(ValType::I32);
        let end = fb.fresh_local(ValType::I32);
        fb.local_get(start);
        fb.local_tee(p);
        fb.local_get(size);
        fb.num(NumOp::I32Add);
        fb.local_set(end);
        let exit = fb.block(BlockType::Empty);
        let top = fb.loop_(BlockType::Empty);
        fb.local_get(p);
        fb.local_get(end);
        fb.num(NumOp::I32GeU);
        fb.br_if(exit);
        fb.local_get(p);
        fb.i64_const(0);
        fb.store(StoreOp::I64, 0);
        fb.local_get(p);
        fb.i32_const(8);
        fb.num(NumOp::I32Add);
        fb.local_set(p);
        fb.br(top);
        fb.end();
        fb.end();
    }

    /// Leaves the home slot index of hash `h` in a fresh local.
    fn emit_bucket(&self, fb: &mut FuncBuilder, h: Local) -> Local {
        let idx = fb.fresh_local(ValType::I32);
        fb.local_get(h);
        fb.local_get(h);
        fb.i64_const(32);
        fb.num(NumOp::I64ShrU);
        fb.num(NumOp::I64Xor);
        fb.num(NumOp::I32WrapI64);
        fb.global_get(self.cap);
        fb.i32_const(1);
        fb.num(NumOp::I32Sub);
        fb.num(NumOp::I32And);
        fb.local_set(idx);
        idx
    }

    fn emit_slot_addr(&self, fb: &mut FuncBuilder, idx: Local, slot: Local) {
        fb.global_get(self.base);
        fb.local_get(idx);
        fb.i32_const(self.spec.stride() as i32);
        fb.num(NumOp::I32Mul);
        fb.num(NumOp::I32Add);
        fb.local_set(slot);
    }

    fn emit_next(&self, fb: &mut FuncBuilder, idx: Local) {
        fb.local_get(idx);
        fb.i32_const(1);
        fb.num(NumOp::I32Add);
        fb.global_get(self.cap);
        fb.i32_const(1);
        fb.num(NumOp::I32Sub);
        fb.num(NumOp::I32And);
        fb.local_set(idx);
    }

    fn emit_tag(&self, fb: &mut FuncBuilder, slot: Local) {
        fb.local_get(slot);
        fb.load(LoadOp::I32U8, self.spec.tag_offset);
    }

    /// Pushes 1 iff the key stored at `slot` equals `keys`. Floats compare
    /// by bit pattern.
    fn emit_keys_eq(&self, fb: &mut FuncBuilder, slot: Local, keys: &[Val]) {
        fb.i32_const(1);
        for ((ty, off), v) in self.key_fields().zip(keys) {
            match ty {
                DataType::Char(n) => {
                    let p = fb.fresh_local(ValType::I32);
                    emit_load_field(fb, ty, slot, off);
                    fb.local_set(p);
                    let c = emit_char_cmp(fb, p, n as u32, v.local, n as u32);
                    fb.local_get(c);
                    fb.num(NumOp::I32Eqz);
                }
                DataType::Float64 => {
                    fb.local_get(slot);
                    fb.load(LoadOp::I64, off);
                    fb.local_get(v.local);
                    fb.num(NumOp::I64ReinterpretF64);
                    fb.num(NumOp::I64Eq);
                }
                DataType::Int64 => {
                    emit_load_field(fb, ty, slot, off);
                    fb.local_get(v.local);
                    fb.num(NumOp::I64Eq);
                }
                _ => {
                    emit_load_field(fb, ty, slot, off);
                    fb.local_get(v.local);
                    fb.num(NumOp::I32Eq);
                }
            }
            fb.num(NumOp::I32And);
        }
    }

    fn check_keys(&self, keys: &[Val]) -> Result<(), CodegenError> {
        let expect: Vec<DataType> = self.key_fields().map(|(t, _)| t).collect();
        let got: Vec<DataType> = keys.iter().map(|v| v.ty).collect();
        if expect != got {
            return Err(CodegenError::Unsupported(format!("hash key types {got:?}, table has {expect:?}")));
        }
        Ok(())
    }

    /// Doubles the table when one more entry would push the load factor
    /// above 0.7, reinserting every entry.
    fn emit_grow_check(&self, fb: &mut FuncBuilder) {
        let stride = self.spec.stride();
        fb.global_get(self.count);
        fb.i32_const(1);
        fb.num(NumOp::I32Add);
        fb.i32_const(10);
        fb.num(NumOp::I32Mul);
        fb.global_get(self.cap);
        fb.i32_const(7);
        fb.num(NumOp::I32Mul);
        fb.num(NumOp::I32GtU);
        fb.if_(BlockType::Empty);
        let (p, old_end) = (fb.fresh_local(ValType::I32), fb.fresh_local(ValType::I32));
        fb.global_get(self.base);
        fb.local_tee(p);
        fb.global_get(self.cap);
        fb.i32_const(stride as i32);
        fb.num(NumOp::I32Mul);
        fb.num(NumOp::I32Add);
        fb.local_set(old_end);
        fb.global_get(self.cap);
        fb.i32_const(1);
        fb.num(NumOp::I32Shl);
        fb.global_set(self.cap);
        self.emit_alloc_slots(fb);

        let exit = fb.block(BlockType::Empty);
        let top = fb.loop_(BlockType::Empty);
        fb.local_get(p);
        fb.local_get(old_end);
        fb.num(NumOp::I32GeU);
        fb.br_if(exit);
        self.emit_tag(fb, p);
        fb.if_(BlockType::Empty);
        let keys: Vec<Val> = self.key_fields().map(|(ty, off)| load_field(fb, ty, p, off)).collect();
        let slot = self.emit_find_empty(fb, &keys);
        copy_bytes(fb, p, 0, slot, 0, stride);
        fb.end();
        fb.local_get(p);
        fb.i32_const(stride as i32);
        fb.num(NumOp::I32Add);
        fb.local_set(p);
        fb.br(top);
        fb.end();
        fb.end();
        fb.end();
    }

    /// Probes from the home slot of `keys` to the first empty slot.
    fn emit_find_empty(&self, fb: &mut FuncBuilder, keys: &[Val]) -> Local {
        let h = emit_hash_vals(fb, keys);
        let idx = self.emit_bucket(fb, h);
        let slot = fb.fresh_local(ValType::I32);
        let found = fb.block(BlockType::Empty);
        let probe = fb.loop_(BlockType::Empty);
        self.emit_slot_addr(fb, idx, slot);
        self.emit_tag(fb, slot);
        fb.num(NumOp::I32Eqz);
        fb.br_if(found);
        self.emit_next(fb, idx);
        fb.br(probe);
        fb.end();
        fb.end();
        slot
    }

    fn emit_fill(&self, fb: &mut FuncBuilder, slot: Local, keys: &[Val]) {
        fb.local_get(slot);
        fb.i32_const(1);
        fb.store(StoreOp::I32U8, self.spec.tag_offset);
        for ((_, off), v) in self.key_fields().zip(keys) {
            store_field(fb, *v, slot, off);
        }
        fb.global_get(self.count);
        fb.i32_const(1);
        fb.num(NumOp::I32Add);
        fb.global_set(self.count);
    }

    /// Finds the slot holding `keys`, claiming an empty one if there is
    /// none. Returns the slot address and a flag set for a new slot.
    pub fn emit_insert_or_get(&self, fb: &mut FuncBuilder, keys: &[Val]) -> Result<(Local, Local), CodegenError> {
        self.check_keys(keys)?;
        self.emit_grow_check(fb);
        let h = emit_hash_vals(fb, keys);
        let idx = self.emit_bucket(fb, h);
        let slot = fb.fresh_local(ValType::I32);
        let is_new = fb.fresh_local(ValType::I32);
        let found = fb.block(BlockType::Empty);
        let probe = fb.loop_(BlockType::Empty);
        self.emit_slot_addr(fb, idx, slot);
        self.emit_tag(fb, slot);
        fb.num(NumOp::I32Eqz);
        fb.if_(BlockType::Empty);
        self.emit_fill(fb, slot, keys);
        fb.i32_const(1);
        fb.local_set(is_new);
        fb.br(found);
        fb.end();
        self.emit_keys_eq(fb, slot, keys);
        fb.if_(BlockType::Empty);
        fb.i32_const(0);
        fb.local_set(is_new);
        fb.br(found);
        fb.end();
        self.emit_next(fb, idx);
        fb.br(probe);
        fb.end();
        fb.end();
        Ok((slot, is_new))
    }

    /// Claims a new slot for `keys` even if equal keys are present.
    pub fn emit_insert(&self, fb: &mut FuncBuilder, keys: &[Val]) -> Result<Local, CodegenError> {
        self.check_keys(keys)?;
        self.emit_grow_check(fb);
        let slot = self.emit_find_empty(fb, keys);
        self.emit_fill(fb, slot, keys);
        Ok(slot)
    }

    /// Runs `body` on every slot whose key equals `keys`.
    pub fn emit_lookup(
        &self,
        fb: &mut FuncBuilder,
        keys: &[Val],
        body: &mut dyn FnMut(&mut FuncBuilder, Local) -> Result<(), CodegenError>,
    ) -> Result<(), CodegenError> {
        self.check_keys(keys)?;
        let h = emit_hash_vals(fb, keys);
        let idx = self.emit_bucket(fb, h);
        let slot = fb.fresh_local(ValType::I32);
        let done = fb.block(BlockType::Empty);
        let probe = fb.loop_(BlockType::Empty);
        self.emit_slot_addr(fb, idx, slot);
        self.emit_tag(fb, slot);
        fb.num(NumOp::I32Eqz);
        fb.br_if(done);
        self.emit_keys_eq(fb, slot, keys);
        fb.if_(BlockType::Empty);
        body(fb, slot)?;
        fb.end();
        self.emit_next(fb, idx);
        fb.br(probe);
        fb.end();
        fb.end();
        Ok(())
    }

    /// Runs `body` on every occupied slot in slot order.
    pub fn emit_scan(
        &self,
        fb: &mut FuncBuilder,
        body: &mut dyn FnMut(&mut FuncBuilder, Local) -> Result<(), CodegenError>,
    ) -> Result<(), CodegenError> {
        let stride = self.spec.stride() as i32;
        let (p, end) = (fb.fresh_local(ValType::I32), fb.fresh_local(ValType::I32));
        fb.global_get(self.base);
        fb.local_tee(p);
        fb.global_get(self.cap);
        fb.i32_const(stride);
        fb.num(NumOp::I32Mul);
        fb.num(NumOp::I32Add);
        fb.local_set(end);
        let exit = fb.block(BlockType::Empty);
        let top = fb.loop_(BlockType::Empty);
        fb.local_get(p);
        fb.local_get(end);
        fb.num(NumOp::I32GeU);
        fb.br_if(exit);
        self.emit_tag(fb, p);
        fb.if_(BlockType::Empty);
        body(fb, p)?;
        fb.end();
        fb.local_get(p);
        fb.i32_const(stride);
        fb.num(NumOp::I32Add);
        fb.local_set(p);
        fb.br(top);
        fb.end();
        fb.end();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn capacity_grows_by_doubling() {
        let spec = HashTableSpec::new(&[("".into(), "k".into(), DataType::Int32)], 1, 8);
        assert_eq!(spec.capacity_for(0), 8);
        assert_eq!(spec.capacity_for(5), 8);
        assert_eq!(spec.capacity_for(6), 16);
        assert_eq!(spec.capacity_for(100), 256);
        assert_eq!(spec.heap_bytes_for(6), (8 + 16) * spec.stride() as u64);
    }
}
