//! Widening by folding adjacent spatial atoms into list segments.
//!
//! A fold replaces two compatible atoms meeting at an existential joint by
//! one segment whose minimum length is the saturated sum of theirs. Each fold
//! removes at least one spatial atom, so repeated folding terminates.

use std::collections::BTreeSet;

use crate::formula::{
    canonicalize, normalize, DllShape, NllShape, PureAtom, SllShape, SpatialAtom, StateSet, SymbolicHeap, Var,
    DEFAULT_LENGTH_LIMIT,
};
use crate::solver::check_sat;

/// Which list shapes may be folded, and where minimum lengths saturate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Abstraction {
    pub sll: Vec<SllShape>,
    pub dll: Vec<DllShape>,
    pub nll: Vec<NllShape>,
    pub length_limit: u8,
}

impl Default for Abstraction {
    fn default() -> Self {
        Abstraction {
            sll: vec![SllShape::default()],
            dll: vec![DllShape::default()],
            nll: vec![NllShape::default()],
            length_limit: DEFAULT_LENGTH_LIMIT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldKind {
    Sll,
    Dll,
    Nll,
}

struct SllView {
    min: u8,
    src: Var,
    dst: Var,
}

struct DllView {
    min: u8,
    first: Var,
    last: Var,
    prev: Var,
    next: Var,
}

/// A top-level NLL cell together with its nested list, or an `nls` atom.
struct NllUnit {
    atoms: Vec<usize>,
    min: u8,
    src: Var,
    dst: Var,
    sink: Var,
}

fn has_exact_fields(fields: &[(crate::formula::Field, Var)], names: &[&str]) -> bool {
    fields.len() == names.len() && names.iter().all(|n| fields.iter().any(|(f, _)| &**f == *n))
}

fn sll_view(a: &SpatialAtom, shape: &SllShape) -> Option<SllView> {
    match a {
        SpatialAtom::PointsTo { src, fields } if has_exact_fields(fields, &[&shape.next]) => Some(SllView {
            min: 1,
            src: src.clone(),
            dst: fields[0].1.clone(),
        }),
        SpatialAtom::Ls { min, src, dst, shape: s } if s == shape => Some(SllView {
            min: *min,
            src: src.clone(),
            dst: dst.clone(),
        }),
        _ => None,
    }
}

fn dll_view(a: &SpatialAtom, shape: &DllShape) -> Option<DllView> {
    match a {
        SpatialAtom::PointsTo { src, fields } if has_exact_fields(fields, &[&shape.next, &shape.prev]) => {
            Some(DllView {
                min: 1,
                first: src.clone(),
                last: src.clone(),
                prev: a.field(&shape.prev)?.clone(),
                next: a.field(&shape.next)?.clone(),
            })
        }
        SpatialAtom::Dls {
            min,
            first,
            last,
            prev,
            next,
            shape: s,
        } if s == shape => Some(DllView {
            min: *min,
            first: first.clone(),
            last: last.clone(),
            prev: prev.clone(),
            next: next.clone(),
        }),
        _ => None,
    }
}

fn nll_unit(h: &SymbolicHeap, i: usize, shape: &NllShape) -> Option<NllUnit> {
    match &h.spatial[i] {
        SpatialAtom::Nls {
            min,
            src,
            dst,
            sink,
            shape: s,
        } if s == shape => Some(NllUnit {
            atoms: vec![i],
            min: *min,
            src: src.clone(),
            dst: dst.clone(),
            sink: sink.clone(),
        }),
        a @ SpatialAtom::PointsTo { src, fields } if has_exact_fields(fields, &[&shape.next, &shape.nested]) => {
            let next = a.field(&shape.next)?.clone();
            let w = a.field(&shape.nested)?.clone();
            let inner = SllShape {
                next: shape.inner.clone(),
            };
            let nested = h
                .spatial
                .iter()
                .enumerate()
                .find(|(j, b)| *j != i && b.root() == &w && b.min_cells() > 0);
            let (atoms, sink) = match nested {
                None => (vec![i], w),
                Some((j, b)) => {
                    let v = sll_view(b, &inner)?;
                    if !w.is_ex() || h.occurrences(&w) != 2 {
                        return None;
                    }
                    (vec![i, j], v.dst)
                }
            };
            Some(NllUnit {
                atoms,
                min: 1,
                src: src.clone(),
                dst: next,
                sink,
            })
        }
        _ => None,
    }
}

impl Abstraction {
    fn cap(&self, a: u8, b: u8) -> u8 {
        a.saturating_add(b).min(self.length_limit)
    }

    /// True when `h` forces `x` and `z` apart.
    fn apart(h: &SymbolicHeap, x: &Var, z: &Var) -> bool {
        x != z && !check_sat(&h.clone().with_pure(PureAtom::eq(x.clone(), z.clone()))).is_sat()
    }

    fn replace(h: &SymbolicHeap, remove: &[usize], atom: SpatialAtom) -> Option<SymbolicHeap> {
        let mut out = h.clone();
        out.spatial = h
            .spatial
            .iter()
            .enumerate()
            .filter(|(i, _)| !remove.contains(i))
            .map(|(_, a)| a.clone())
            .collect();
        out.spatial.push(atom);
        normalize(&out).ok()
    }

    fn joint_ok(y: &Var, scope: &BTreeSet<Var>) -> bool {
        y.is_ex() && !scope.contains(y)
    }

    /// Folds the leftmost pair `A(x, y) * B(y, z)` of singly-linked atoms.
    pub fn try_fold_sll(&self, h: &SymbolicHeap, scope: &BTreeSet<Var>) -> Option<SymbolicHeap> {
        for shape in &self.sll {
            let views: Vec<Option<SllView>> = h.spatial.iter().map(|a| sll_view(a, shape)).collect();
            for (i, a) in views.iter().enumerate() {
                let Some(a) = a else { continue };
                if !Self::joint_ok(&a.dst, scope) || h.occurrences(&a.dst) != 2 {
                    continue;
                }
                for (j, b) in views.iter().enumerate() {
                    let Some(b) = b else { continue };
                    if i == j || b.src != a.dst || !Self::apart(h, &a.src, &b.dst) {
                        continue;
                    }
                    let atom = SpatialAtom::Ls {
                        min: self.cap(a.min, b.min),
                        src: a.src.clone(),
                        dst: b.dst.clone(),
                        shape: shape.clone(),
                    };
                    if let Some(out) = Self::replace(h, &[i, j], atom) {
                        return Some(out);
                    }
                }
            }
        }
        None
    }

    /// Folds the leftmost pair of doubly-linked atoms whose next and prev
    /// links agree at the joint.
    pub fn try_fold_dll(&self, h: &SymbolicHeap, scope: &BTreeSet<Var>) -> Option<SymbolicHeap> {
        for shape in &self.dll {
            let views: Vec<Option<DllView>> = h.spatial.iter().map(|a| dll_view(a, shape)).collect();
            for (i, a) in views.iter().enumerate() {
                let Some(a) = a else { continue };
                for (j, b) in views.iter().enumerate() {
                    let Some(b) = b else { continue };
                    if i == j || a.next != b.first || b.prev != a.last || !Self::joint_ok(&b.first, scope) {
                        continue;
                    }
                    let local = |v: &Var| {
                        h.spatial[i].vars().iter().chain(h.spatial[j].vars().iter()).filter(|x| **x == v).count()
                            == h.occurrences(v)
                    };
                    let inner_ok = |v: &Var| Self::joint_ok(v, scope) && local(v);
                    // A joint that stays as the new segment's `last` may be shared.
                    let joints_ok = (b.first == b.last || local(&b.first))
                        && (a.last == a.first || inner_ok(&a.last));
                    if !joints_ok || !Self::apart(h, &a.first, &b.next) {
                        continue;
                    }
                    let atom = SpatialAtom::Dls {
                        min: self.cap(a.min, b.min),
                        first: a.first.clone(),
                        last: b.last.clone(),
                        prev: a.prev.clone(),
                        next: b.next.clone(),
                        shape: shape.clone(),
                    };
                    if let Some(out) = Self::replace(h, &[i, j], atom) {
                        return Some(out);
                    }
                }
            }
        }
        None
    }

    /// Folds the leftmost pair of nested-list units sharing a sink.
    pub fn try_fold_nll(&self, h: &SymbolicHeap, scope: &BTreeSet<Var>) -> Option<SymbolicHeap> {
        for shape in &self.nll {
            let units: Vec<Option<NllUnit>> = (0..h.spatial.len()).map(|i| nll_unit(h, i, shape)).collect();
            for a in units.iter().flatten() {
                if !Self::joint_ok(&a.dst, scope) || h.occurrences(&a.dst) != 2 {
                    continue;
                }
                for b in units.iter().flatten() {
                    if b.src != a.dst
                        || b.sink != a.sink
                        || b.atoms.iter().any(|k| a.atoms.contains(k))
                        || !Self::apart(h, &a.src, &b.dst)
                    {
                        continue;
                    }
                    let atom = SpatialAtom::Nls {
                        min: self.cap(a.min, b.min),
                        src: a.src.clone(),
                        dst: b.dst.clone(),
                        sink: a.sink.clone(),
                        shape: shape.clone(),
                    };
                    let remove: Vec<usize> = a.atoms.iter().chain(&b.atoms).copied().collect();
                    if let Some(out) = Self::replace(h, &remove, atom) {
                        return Some(out);
                    }
                }
            }
        }
        None
    }

    /// One fold step in the fixed order SLL, DLL, NLL.
    pub fn fold_once(&self, h: &SymbolicHeap, scope: &BTreeSet<Var>) -> Option<(FoldKind, SymbolicHeap)> {
        if let Some(out) = self.try_fold_sll(h, scope) {
            return Some((FoldKind::Sll, out));
        }
        if let Some(out) = self.try_fold_dll(h, scope) {
            return Some((FoldKind::Dll, out));
        }
        self.try_fold_nll(h, scope).map(|out| (FoldKind::Nll, out))
    }

    /// Folds until no fold applies.
    pub fn fold_all(&self, h: &SymbolicHeap, scope: &BTreeSet<Var>) -> SymbolicHeap {
        let mut cur = h.clone();
        while let Some((_, next)) = self.fold_once(&cur, scope) {
            debug_assert!(next.spatial.len() < cur.spatial.len());
            cur = next;
        }
        cur
    }

    /// Folds every member to a fixpoint and deduplicates up to renaming of
    /// existentials.
    pub fn widen(&self, s: &StateSet, scope: &BTreeSet<Var>) -> StateSet {
        s.iter().map(|h| canonicalize(&self.fold_all(h, scope))).collect()
    }
}
