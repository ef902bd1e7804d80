//! Heap operations behind the transfer functions.

use std::collections::BTreeSet;

use crate::formula::{normalize, NllShape, PureAtom, SllShape, SpatialAtom, SymbolicHeap, Var};
use crate::solver::check_sat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerefError {
    Null,
    UseAfterFree,
    /// Not allocated by any atom, and not known to be nil or freed.
    Unallocated,
}

/// Normalizes and drops pure atoms about existentials that no spatial atom
/// mentions; such atoms only constrain values nobody can reach.
pub fn simplify(h: &SymbolicHeap) -> Option<SymbolicHeap> {
    let mut h = normalize(h).ok()?;
    let live: BTreeSet<Var> = h.spatial.iter().flat_map(|a| a.vars()).cloned().collect();
    h.pure.retain(|p| p.vars().into_iter().all(|v| !v.is_ex() || live.contains(v)));
    h.exists = h.vars().into_iter().filter(Var::is_ex).collect();
    Some(h)
}

/// `n` existentials unused in `h`.
pub fn fresh(h: &SymbolicHeap, n: usize) -> Vec<Var> {
    let mut probe = h.clone();
    (0..n)
        .map(|_| {
            let v = probe.fresh_ex();
            probe.exists.insert(v.clone());
            v
        })
        .collect()
}

/// Detaches `x` from its current value, which other names keep.
pub fn forget(h: &SymbolicHeap, x: &Var) -> SymbolicHeap {
    let e = fresh(h, 1).remove(0);
    simplify(&h.substitute(x, &e)).expect("renaming to a fresh variable is consistent")
}

pub fn int_of(h: &SymbolicHeap, x: &Var) -> Option<i64> {
    h.int_value(&h.rep(x))
}

fn without(h: &SymbolicHeap, i: usize) -> SymbolicHeap {
    let mut out = h.clone();
    out.spatial.remove(i);
    out
}

fn with_atoms(mut h: SymbolicHeap, atoms: impl IntoIterator<Item = SpatialAtom>) -> SymbolicHeap {
    for a in atoms {
        h = h.with_spatial(a);
    }
    h
}

fn sll_cell(src: Var, shape: &SllShape, next: Var) -> SpatialAtom {
    SpatialAtom::points_to(src, [(shape.next.clone(), next)])
}

fn nll_cell(src: Var, shape: &NllShape, next: Var, nested: Var) -> SpatialAtom {
    SpatialAtom::points_to(src, [(shape.next.clone(), next), (shape.nested.clone(), nested)])
}

fn nested(w: Var, sink: Var, shape: &NllShape) -> SpatialAtom {
    SpatialAtom::Ls {
        min: 0,
        src: w,
        dst: sink,
        shape: SllShape {
            next: shape.inner.clone(),
        },
    }
}

/// Case split of the list atom at index `i` exposing the cell at `r`.
/// The first component holds the branch in which the segment is empty.
fn unfold(h: &SymbolicHeap, i: usize, r: &Var) -> (Option<SymbolicHeap>, Vec<SymbolicHeap>) {
    let rest = without(h, i);
    let mut cells = Vec::new();
    let empty;
    match h.spatial[i].clone() {
        SpatialAtom::Ls { min, src, dst, shape } => {
            empty = (min == 0).then(|| rest.clone().with_pure(PureAtom::eq(src.clone(), dst.clone())));
            let rest = rest.with_pure(PureAtom::neq(src.clone(), dst.clone()));
            if min <= 1 {
                cells.push(with_atoms(rest.clone(), [sll_cell(src.clone(), &shape, dst.clone())]));
            }
            let y = fresh(h, 1).remove(0);
            cells.push(with_atoms(
                rest,
                [
                    sll_cell(src, &shape, y.clone()),
                    SpatialAtom::Ls {
                        min: min.saturating_sub(1).max(1),
                        src: y,
                        dst,
                        shape,
                    },
                ],
            ));
        }
        SpatialAtom::Dls {
            min,
            first,
            last,
            prev,
            next,
            shape,
        } => {
            empty = (min == 0).then(|| {
                rest.clone()
                    .with_pure(PureAtom::eq(first.clone(), next.clone()))
                    .with_pure(PureAtom::eq(last.clone(), prev.clone()))
            });
            let rest = rest
                .with_pure(PureAtom::neq(first.clone(), next.clone()))
                .with_pure(PureAtom::neq(last.clone(), next.clone()));
            let cell = |src: Var, n: Var, p: Var| {
                SpatialAtom::points_to(src, [(shape.next.clone(), n), (shape.prev.clone(), p)])
            };
            if min <= 1 {
                cells.push(with_atoms(
                    rest.clone().with_pure(PureAtom::eq(first.clone(), last.clone())),
                    [cell(r.clone(), next.clone(), prev.clone())],
                ));
            }
            let y = fresh(h, 1).remove(0);
            let m = min.saturating_sub(1).max(1);
            let split = if *r == first {
                [
                    cell(first.clone(), y.clone(), prev.clone()),
                    SpatialAtom::Dls {
                        min: m,
                        first: y,
                        last,
                        prev: first,
                        next,
                        shape: shape.clone(),
                    },
                ]
            } else {
                [
                    SpatialAtom::Dls {
                        min: m,
                        first,
                        last: y.clone(),
                        prev,
                        next: last.clone(),
                        shape: shape.clone(),
                    },
                    cell(last, next, y),
                ]
            };
            cells.push(with_atoms(rest, split));
        }
        SpatialAtom::Nls {
            min,
            src,
            dst,
            sink,
            shape,
        } => {
            empty = (min == 0).then(|| rest.clone().with_pure(PureAtom::eq(src.clone(), dst.clone())));
            let rest = rest.with_pure(PureAtom::neq(src.clone(), dst.clone()));
            let v = fresh(h, 2);
            let (w, y) = (v[0].clone(), v[1].clone());
            if min <= 1 {
                cells.push(with_atoms(
                    rest.clone(),
                    [
                        nll_cell(src.clone(), &shape, dst.clone(), w.clone()),
                        nested(w.clone(), sink.clone(), &shape),
                    ],
                ));
            }
            cells.push(with_atoms(
                rest,
                [
                    nll_cell(src, &shape, y.clone(), w.clone()),
                    nested(w, sink.clone(), &shape),
                    SpatialAtom::Nls {
                        min: min.saturating_sub(1).max(1),
                        src: y,
                        dst,
                        sink,
                        shape,
                    },
                ],
            ));
        }
        _ => unreachable!("only list atoms unfold"),
    }
    (empty, cells)
}

pub type Branch = Result<SymbolicHeap, (DerefError, SymbolicHeap)>;

/// Exposes the cell that program variable `x` points to.
///
/// Each branch is either a heap in which `x` is the source of a points-to
/// atom, or the reason `x` cannot be dereferenced together with the heap of
/// that branch. Branches that normalize to a contradiction are dropped; error
/// branches are checked for satisfiability.
pub fn materialize(h: &SymbolicHeap, x: &Var) -> Vec<Branch> {
    let mut out = Vec::new();
    mat(h, x, &mut out);
    out
}

fn mat(h: &SymbolicHeap, x: &Var, out: &mut Vec<Branch>) {
    let r = h.rep(x);
    let err = |e: DerefError, out: &mut Vec<Branch>| {
        if check_sat(h).is_sat() {
            out.push(Err((e, h.clone())));
        }
    };
    if r.is_nil() {
        return err(DerefError::Null, out);
    }
    let mut list = None;
    for (i, a) in h.spatial.iter().enumerate() {
        match a {
            SpatialAtom::PointsTo { src, .. } if *src == r => {
                out.push(Ok(h.clone()));
                return;
            }
            SpatialAtom::Freed(src) if *src == r => return err(DerefError::UseAfterFree, out),
            SpatialAtom::Ls { src, .. } | SpatialAtom::Nls { src, .. } if *src == r => {
                list = list.or(Some(i));
            }
            SpatialAtom::Dls { first, last, .. } if *first == r || *last == r => {
                list = list.or(Some(i));
            }
            _ => {}
        }
    }
    let Some(i) = list else {
        return err(DerefError::Unallocated, out);
    };
    let (empty, cells) = unfold(h, i, &r);
    if let Some(e) = empty.and_then(|e| simplify(&e)) {
        mat(&e, x, out);
    }
    for c in cells {
        if let Some(c) = simplify(&c) {
            out.push(Ok(c));
        }
    }
}

/// Removes atoms no program variable can reach. Returns the remaining heap,
/// whether a cell was certainly lost, and whether one may have been.
pub fn collect_garbage(h: &SymbolicHeap) -> (SymbolicHeap, bool, bool) {
    let mut reached: BTreeSet<Var> = h.vars().into_iter().filter(Var::is_prog).collect();
    let mut live = vec![false; h.spatial.len()];
    loop {
        let mut changed = false;
        for (i, a) in h.spatial.iter().enumerate() {
            if live[i] {
                continue;
            }
            let entry = match a {
                SpatialAtom::Dls { first, last, .. } => reached.contains(first) || reached.contains(last),
                _ => reached.contains(a.root()),
            };
            if entry {
                live[i] = true;
                changed = true;
                reached.extend(a.vars().into_iter().cloned());
            }
        }
        if !changed {
            break;
        }
    }
    let (mut lost, mut maybe) = (false, false);
    for (a, l) in h.spatial.iter().zip(&live) {
        if !l && !matches!(a, SpatialAtom::Freed(_)) {
            if a.min_cells() > 0 {
                lost = true;
            } else {
                maybe = true;
            }
        }
    }
    if live.iter().all(|l| *l) {
        return (h.clone(), false, false);
    }
    let mut out = h.clone();
    out.spatial = h
        .spatial
        .iter()
        .zip(&live)
        .filter(|(_, l)| **l)
        .map(|(a, _)| a.clone())
        .collect();
    (simplify(&out).unwrap_or(out), lost, maybe)
}
