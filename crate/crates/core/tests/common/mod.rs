#![allow(dead_code)]

pub mod corpus;
pub mod heaps;
pub mod oracle;
pub mod program;

use std::sync::Arc;

use oracle::{OModel, OSlot};
use shapeck::formula::{PureAtom, SpatialAtom, SymbolicHeap, Var};
use shapeck::solver::{HeapModel, Slot};

pub fn to_heap_model(m: &OModel) -> HeapModel {
    let mut h = HeapModel::new(m.size());
    for (i, s) in m.slots.iter().enumerate() {
        let slot = match s {
            OSlot::Dangling => Slot::Dangling,
            OSlot::Freed => Slot::Freed,
            OSlot::Cell(n) => Slot::Cell(vec![(Arc::from("next"), *n as u32)]),
        };
        h.set(i as u32 + 1, slot);
    }
    for (v, l) in m.vars.iter().zip(&m.stack) {
        h.stack.insert(Var::prog(v), *l as u32);
    }
    h
}

/// Spatial atoms over `x`, `y` and nil: points-to, segments of minimum
/// length 0 to 2, and freed cells.
pub fn family_atoms() -> Vec<SpatialAtom> {
    let srcs = [Var::prog("x"), Var::prog("y")];
    let dsts = [Var::prog("x"), Var::prog("y"), Var::Nil];
    let mut out = Vec::new();
    for s in &srcs {
        for d in &dsts {
            out.push(SpatialAtom::next_cell(s.clone(), d.clone()));
        }
    }
    for min in 0..=2 {
        for s in &srcs {
            for d in &dsts {
                out.push(SpatialAtom::ls(min, s.clone(), d.clone()));
            }
        }
    }
    for s in &srcs {
        out.push(SpatialAtom::Freed(s.clone()));
    }
    out
}

/// No pure atom, or one equality or disequality between two of `x`, `y`, nil.
pub fn family_pures() -> Vec<Option<PureAtom>> {
    let (x, y) = (Var::prog("x"), Var::prog("y"));
    let pairs = [(x.clone(), y.clone()), (x, Var::Nil), (y, Var::Nil)];
    let mut out = vec![None];
    for (a, b) in pairs {
        out.push(Some(PureAtom::eq(a.clone(), b.clone())));
        out.push(Some(PureAtom::neq(a, b)));
    }
    out
}

/// Every heap with at most two spatial atoms and at most one pure atom over
/// `x`, `y` and nil, before normalization.
pub fn family() -> Vec<SymbolicHeap> {
    let atoms = family_atoms();
    let mut spatial: Vec<Vec<SpatialAtom>> = vec![Vec::new()];
    for i in 0..atoms.len() {
        spatial.push(vec![atoms[i].clone()]);
        for j in i..atoms.len() {
            spatial.push(vec![atoms[i].clone(), atoms[j].clone()]);
        }
    }
    let mut out = Vec::new();
    for s in &spatial {
        for p in family_pures() {
            out.push(SymbolicHeap::new([], p, s.iter().cloned()));
        }
    }
    out
}
