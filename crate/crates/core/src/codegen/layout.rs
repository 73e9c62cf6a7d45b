use super::{load_field, Binder, CodegenError, Val};
use crate::catalog::DataType;
use crate::plan::{ColumnRef, Scope};
use crate::wasm::{FuncBuilder, Local};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub qualifier: String,
    pub name: String,
    pub ty: DataType,
    pub offset: u32,
}

/// Row-wise layout of a materialized tuple. Fields are placed by
/// descending alignment so no padding is needed between them; the stride
/// is a multiple of 8.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleLayout {
    pub fields: Vec<Field>,
    pub stride: u32,
}

fn round8(n: u32) -> u32 {
    (n + 7) & !7
}

impl TupleLayout {
    pub fn new(columns: &[(String, String, DataType)]) -> TupleLayout {
        let mut order: Vec<usize> = (0..columns.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(columns[i].2.align()));
        let mut offsets = vec![0u32; columns.len()];
        let mut at = 0u32;
        for i in order {
            offsets[i] = at;
            at += columns[i].2.width() as u32;
        }
        let fields = columns
            .iter()
            .zip(offsets)
            .map(|((q, n, ty), offset)| Field { qualifier: q.clone(), name: n.clone(), ty: *ty, offset })
            .collect();
        TupleLayout { fields, stride: round8(at).max(8) }
    }

    pub fn from_scope(scope: &Scope) -> TupleLayout {
        let cols: Vec<_> = scope.columns.iter().map(|c| (c.qualifier.clone(), c.name.clone(), c.ty)).collect();
        TupleLayout::new(&cols)
    }

    pub fn resolve(&self, c: &ColumnRef) -> Result<&Field, CodegenError> {
        let mut hits =
            self.fields.iter().filter(|f| f.name == c.column && (c.table.is_empty() || f.qualifier == c.table));
        match (hits.next(), hits.next()) {
            (Some(f), None) => Ok(f),
            (Some(_), Some(_)) => Err(CodegenError::Unsupported(format!("ambiguous column `{c}`"))),
            _ => Err(CodegenError::Unbound(c.to_string())),
        }
    }

    /// Appends a one-byte occupancy tag after the fields and returns the
    /// extended layout with the tag's offset.
    pub fn with_tag(&self) -> (TupleLayout, u32) {
        let end = self.fields.iter().map(|f| f.offset + f.ty.width() as u32).max().unwrap_or(0);
        (TupleLayout { fields: self.fields.clone(), stride: round8(end + 1) }, end)
    }
}

/// Binds column references to the fields of a tuple at `ptr`.
pub struct TupleBinder<'a> {
    pub layout: &'a TupleLayout,
    pub ptr: Local,
}

impl Binder for TupleBinder<'_> {
    fn column(&mut self, fb: &mut FuncBuilder, c: &ColumnRef) -> Result<Val, CodegenError> {
        let f = self.layout.resolve(c)?;
        Ok(load_field(fb, f.ty, self.ptr, f.offset))
    }

    fn column_type(&self, c: &ColumnRef) -> Result<DataType, CodegenError> {
        Ok(self.layout.resolve(c)?.ty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(tys: &[DataType]) -> Vec<(String, String, DataType)> {
        tys.iter().enumerate().map(|(i, t)| ("T".into(), format!("c{i}"), *t)).collect()
    }

    #[test]
    fn fields_are_aligned_and_disjoint() {
        use DataType::*;
        let all = [Int32, Int64, Float64, Bool, Char(3), Char(9), Int32, Bool];
        for mask in 1u32..(1 << all.len()) {
            let tys: Vec<_> = (0..all.len()).filter(|i| mask & (1 << i) != 0).map(|i| all[i]).collect();
            let l = TupleLayout::new(&cols(&tys));
            assert_eq!(l.stride % 8, 0);
            let mut used = vec![false; l.stride as usize];
            for f in &l.fields {
                assert_eq!(f.offset as usize % f.ty.align(), 0, "{f:?}");
                for b in f.offset..f.offset + f.ty.width() as u32 {
                    assert!(!used[b as usize], "overlap at {b}");
                    used[b as usize] = true;
                }
            }
            let (tagged, tag) = l.with_tag();
            assert!(!used.get(tag as usize).copied().unwrap_or(false));
            assert!(tag < tagged.stride);
        }
    }

    #[test]
    fn resolve_by_qualifier() {
        let l = TupleLayout::new(&[
            ("R".into(), "a".into(), DataType::Int32),
            ("S".into(), "a".into(), DataType::Int64),
        ]);
        assert_eq!(l.resolve(&ColumnRef::new("S", "a")).unwrap().ty, DataType::Int64);
        assert!(l.resolve(&ColumnRef::new("", "a")).is_err());
        assert!(matches!(l.resolve(&ColumnRef::new("R", "b")), Err(CodegenError::Unbound(_))));
    }
}
