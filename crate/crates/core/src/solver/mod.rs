//! Satisfiability and entailment of symbolic heaps by bounded model search.

mod model;
mod satisfy;
mod search;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub use model::{HeapModel, Loc, Slot, NIL};
pub use satisfy::satisfies;

use crate::formula::{canonicalize, normalize, SpatialAtom, SymbolicHeap, Var};
use search::Limits;

/// Longest nested list tried when enumerating models of nested segments.
const NESTED_LEN: usize = 2;
/// Largest enumeration kept in the memo.
const MEMO_MODELS: usize = 50_000;
/// Memoized model lists are dropped wholesale beyond this many entries.
const MEMO_CAPACITY: usize = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Bound {
    pub max_locations: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(HeapModel),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

/// Location bound: points-to and freed atoms, two cells of slack per
/// segment beyond its minimum, one per distinct non-nil pointer variable,
/// plus one.
pub fn compute_bound(h: &SymbolicHeap) -> Bound {
    let ints = h.int_vars();
    let atoms: usize = h
        .spatial
        .iter()
        .map(|a| match a {
            SpatialAtom::PointsTo { .. } | SpatialAtom::Freed(_) => 1,
            _ => a.min_cells() + 2,
        })
        .sum();
    let vars = h.vars().iter().filter(|v| !v.is_nil() && !ints.contains(v)).count();
    Bound {
        max_locations: atoms + vars + 1,
    }
}

pub fn check_sat(h: &SymbolicHeap) -> SatResult {
    let Ok(h) = normalize(h) else {
        return SatResult::Unsat;
    };
    let bound = compute_bound(&h).max_locations;
    // Keeping unconstrained variables apart at minimal lengths is the most
    // permissive choice; the aliasing pass is a fallback.
    for aliasing in [false, true] {
        let limits = Limits {
            extra_vars: Vec::new(),
            extra_ints: Vec::new(),
            max_len: 0,
            nested_len: 0,
            aliasing,
        };
        let mut found = None;
        search::models(&h, &limits, &mut |m| {
            if m.size() <= bound {
                found = Some(m);
                false
            } else {
                true
            }
        });
        if let Some(m) = found {
            return SatResult::Sat(m);
        }
    }
    SatResult::Unsat
}

/// Whether every model of `lhs` within the combined bound is a model of `rhs`.
pub fn check_entail(lhs: &SymbolicHeap, rhs: &SymbolicHeap) -> bool {
    find_counter_model(lhs, rhs).is_none()
}

/// A model of `lhs` that does not satisfy `rhs`, if one exists within the combined bound.
pub fn find_counter_model(lhs: &SymbolicHeap, rhs: &SymbolicHeap) -> Option<HeapModel> {
    let lhs = normalize(lhs).ok()?;
    let rhs = match normalize(rhs) {
        Ok(r) => r,
        Err(_) => {
            return match check_sat(&lhs) {
                SatResult::Sat(m) => Some(m),
                SatResult::Unsat => None,
            };
        }
    };
    if canonicalize(&lhs) == canonicalize(&rhs) {
        return None;
    }
    let budget = compute_bound(&lhs).max_locations + compute_bound(&rhs).max_locations;
    let lhs_vars = lhs.vars();
    let rhs_ints = rhs.int_vars();
    let extra_ints: Vec<Var> = rhs_ints
        .iter()
        .filter(|v| v.is_prog() && !lhs_vars.contains(v))
        .cloned()
        .collect();
    let extra_vars: Vec<Var> = rhs
        .free_vars()
        .into_iter()
        .filter(|v| !lhs_vars.contains(v) && !rhs_ints.contains(v))
        .collect();
    let max_len = rhs.alloc_count() + 1;
    let limits = Limits {
        extra_vars,
        extra_ints,
        max_len,
        nested_len: NESTED_LEN.min(max_len),
        aliasing: true,
    };
    counter_model(&lhs, &rhs, limits, budget)
}

type Memo = Mutex<HashMap<(SymbolicHeap, Limits), Arc<Vec<HeapModel>>>>;

/// Searches the candidate models of `lhs`, stopping at the first one that
/// falsifies `rhs`. Complete enumerations of moderate size are memoized.
fn counter_model(lhs: &SymbolicHeap, rhs: &SymbolicHeap, limits: Limits, budget: usize) -> Option<HeapModel> {
    static MEMO: OnceLock<Memo> = OnceLock::new();
    let memo = MEMO.get_or_init(Default::default);
    let refutes = |m: &HeapModel| m.size() <= budget && !satisfy::satisfies_normalized(m, rhs);
    let key = (lhs.clone(), limits);
    let hit = memo.lock().unwrap().get(&key).cloned();
    if let Some(models) = hit {
        return models.iter().find(|m| refutes(m)).cloned();
    }
    let mut seen = Some(Vec::new());
    let mut found = None;
    search::models(&key.0, &key.1, &mut |m| {
        if refutes(&m) {
            found = Some(m);
            return false;
        }
        if let Some(v) = &mut seen {
            if v.len() < MEMO_MODELS {
                v.push(m);
            } else {
                seen = None;
            }
        }
        true
    });
    if let (None, Some(models)) = (&found, seen) {
        let mut memo = memo.lock().unwrap();
        if memo.len() >= MEMO_CAPACITY {
            memo.clear();
        }
        memo.insert(key, Arc::new(models));
    }
    found
}
