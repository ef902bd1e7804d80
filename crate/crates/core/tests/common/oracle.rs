//! Brute-force reference semantics for singly-linked heaps.
//!
//! Shares nothing with the solver except the formula types: models are
//! enumerated exhaustively in first-reference order, existentials and
//! footprints are guessed exhaustively, and each atom is checked directly.
//! Only the `next` field, `ls`, points-to and `freed` atoms are supported.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use shapeck::formula::{PureAtom, SpatialAtom, SymbolicHeap, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OSlot {
    Dangling,
    Freed,
    Cell(usize),
}

/// Locations are `1..=slots.len()`; `0` is nil.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OModel {
    pub vars: Vec<String>,
    pub stack: Vec<usize>,
    pub slots: Vec<OSlot>,
}

impl OModel {
    pub fn size(&self) -> usize {
        self.slots.len()
    }

    fn slot(&self, l: usize) -> &OSlot {
        if l == 0 {
            &OSlot::Dangling
        } else {
            &self.slots[l - 1]
        }
    }

    pub fn cells(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, OSlot::Cell(_))).count()
    }
}

/// Every model over `vars` with at most `max` locations, up to renaming.
/// Locations are numbered by first reference: stack first, then the fields
/// of each location in order. Unreferenced locations are never dangling.
pub fn universe(vars: &[&str], max: usize) -> Vec<OModel> {
    generate(vars, max, true)
}

/// Models in which every location is reachable from the stack. Heaps
/// without existentials have no other models: each owned cell is the root of
/// an atom or lies on a segment from its root.
pub fn reachable_universe(vars: &[&str], max: usize) -> Vec<OModel> {
    generate(vars, max, false)
}

fn generate(vars: &[&str], max: usize, garbage: bool) -> Vec<OModel> {
    let mut out = Vec::new();
    let names: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
    let mut stack = Vec::new();
    let mut g = Gen {
        vars: &names,
        max,
        garbage,
        out: &mut out,
    };
    g.stack(&mut stack, 0);
    out
}

struct Gen<'a> {
    vars: &'a [String],
    max: usize,
    garbage: bool,
    out: &'a mut Vec<OModel>,
}

impl Gen<'_> {
    fn stack(&mut self, stack: &mut Vec<usize>, labels: usize) {
        if stack.len() == self.vars.len() {
            let mut slots = Vec::new();
            self.slots(stack, &mut slots, labels);
            return;
        }
        for v in 0..=labels {
            stack.push(v);
            self.stack(stack, labels);
            stack.pop();
        }
        if labels < self.max {
            stack.push(labels + 1);
            self.stack(stack, labels + 1);
            stack.pop();
        }
    }

    fn slots(&mut self, stack: &[usize], slots: &mut Vec<OSlot>, labels: usize) {
        let i = slots.len() + 1;
        let (labels, garbage) = if i > labels {
            self.out.push(OModel {
                vars: self.vars.to_vec(),
                stack: stack.to_vec(),
                slots: slots.clone(),
            });
            if labels == self.max || !self.garbage {
                return;
            }
            (i, true)
        } else {
            (labels, false)
        };
        let mut options = Vec::new();
        if !garbage {
            options.push((OSlot::Dangling, labels));
        }
        options.push((OSlot::Freed, labels));
        for n in 0..=labels {
            options.push((OSlot::Cell(n), labels));
        }
        if labels < self.max {
            options.push((OSlot::Cell(labels + 1), labels + 1));
        }
        for (s, l) in options {
            slots.push(s);
            self.slots(stack, slots, l);
            slots.pop();
        }
    }
}

fn value(m: &OModel, env: &[(Var, usize)], v: &Var) -> usize {
    match v {
        Var::Nil => 0,
        Var::Prog(n) => {
            let i = m
                .vars
                .iter()
                .position(|x| x == &**n)
                .unwrap_or_else(|| panic!("{n} is not on the oracle stack"));
            m.stack[i]
        }
        Var::Ex(_) => env.iter().find(|(x, _)| x == v).map(|(_, l)| *l).expect("bound existential"),
    }
}

fn next_of(m: &OModel, l: usize) -> Option<usize> {
    match m.slot(l) {
        OSlot::Cell(n) => Some(*n),
        _ => None,
    }
}

/// The reference satisfaction relation.
pub fn satisfies(m: &OModel, h: &SymbolicHeap) -> bool {
    let mut exs: Vec<Var> = h.exists.iter().cloned().collect();
    for v in h.vars() {
        if v.is_ex() && !exs.contains(&v) {
            exs.push(v);
        }
    }
    let n = m.size();
    let combos = (n + 1).pow(exs.len() as u32);
    (0..combos).any(|code| {
        let mut c = code;
        let env: Vec<(Var, usize)> = exs
            .iter()
            .map(|v| {
                let l = c % (n + 1);
                c /= n + 1;
                (v.clone(), l)
            })
            .collect();
        satisfies_with(m, h, &env)
    })
}

fn satisfies_with(m: &OModel, h: &SymbolicHeap, env: &[(Var, usize)]) -> bool {
    let val = |v: &Var| value(m, env, v);
    for p in &h.pure {
        let ok = match p {
            PureAtom::Eq(a, b) => val(a) == val(b),
            PureAtom::Neq(a, b) => val(a) != val(b),
            PureAtom::IntVal(..) => panic!("the oracle has no integers"),
        };
        if !ok {
            return false;
        }
    }
    let owned: Vec<usize> = (1..=m.size()).filter(|&l| *m.slot(l) != OSlot::Dangling).collect();
    let k = h.spatial.len();
    if k == 0 {
        return owned.is_empty() && stack_ok(m, h, env, &[]);
    }
    let combos = k.pow(owned.len() as u32);
    (0..combos).any(|code| {
        let mut c = code;
        let mut footprint: Vec<Vec<usize>> = vec![Vec::new(); k];
        for &l in &owned {
            footprint[c % k].push(l);
            c /= k;
        }
        h.spatial
            .iter()
            .zip(&footprint)
            .all(|(a, f)| atom_holds(m, env, a, f))
            && stack_ok(m, h, env, &footprint)
    })
}

fn atom_holds(m: &OModel, env: &[(Var, usize)], a: &SpatialAtom, f: &[usize]) -> bool {
    let val = |v: &Var| value(m, env, v);
    match a {
        SpatialAtom::PointsTo { src, fields } => {
            assert!(
                fields.len() == 1 && &*fields[0].0 == "next",
                "the oracle only knows the next field"
            );
            f == [val(src)] && next_of(m, val(src)) == Some(val(&fields[0].1))
        }
        SpatialAtom::Freed(x) => f == [val(x)] && *m.slot(val(x)) == OSlot::Freed,
        SpatialAtom::Ls { min, src, dst, shape } => {
            assert_eq!(&*shape.next, "next", "the oracle only knows the next field");
            let (s, d) = (val(src), val(dst));
            if f.is_empty() {
                return s == d && *min == 0;
            }
            let mut seen = Vec::new();
            let mut cur = s;
            while f.contains(&cur) && !seen.contains(&cur) {
                seen.push(cur);
                match next_of(m, cur) {
                    Some(n) => cur = n,
                    None => return false,
                }
            }
            seen.len() == f.len() && cur == d && !f.contains(&d) && seen.len() >= *min as usize
        }
        SpatialAtom::Dls { .. } | SpatialAtom::Nls { .. } => panic!("the oracle only knows singly-linked lists"),
    }
}

/// Stack variables pointing at owned cells must name the first cell of an
/// atom rooted at a program variable.
fn stack_ok(m: &OModel, h: &SymbolicHeap, env: &[(Var, usize)], footprint: &[Vec<usize>]) -> bool {
    m.stack.iter().all(|&l| {
        l == 0
            || *m.slot(l) == OSlot::Dangling
            || h.spatial.iter().zip(footprint).any(|(a, f)| {
                !f.is_empty() && a.root().is_prog() && value(m, env, a.root()) == l
            })
    })
}

fn prog_vars(hs: &[&SymbolicHeap]) -> Vec<String> {
    let mut out: Vec<String> = hs
        .iter()
        .flat_map(|h| h.free_vars())
        .map(|v| v.name().to_string())
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Sweeps keyed by program variables, location bound and whether garbage is allowed.
type SweepCache = HashMap<(Vec<String>, usize, bool), Rc<Vec<OModel>>>;

/// The models to sweep for `hs`, shared between calls.
fn models_for(hs: &[&SymbolicHeap], max: usize) -> Rc<Vec<OModel>> {
    thread_local! {
        static CACHE: RefCell<SweepCache> = RefCell::new(HashMap::new());
    }
    let vars = prog_vars(hs);
    let garbage = hs.iter().any(|h| h.vars().iter().any(Var::is_ex));
    CACHE.with(|c| {
        c.borrow_mut()
            .entry((vars.clone(), max, garbage))
            .or_insert_with(|| {
                let names: Vec<&str> = vars.iter().map(String::as_str).collect();
                Rc::new(generate(&names, max, garbage))
            })
            .clone()
    })
}

pub fn oracle_check_sat(h: &SymbolicHeap, max: usize) -> Option<OModel> {
    models_for(&[h], max).iter().find(|m| satisfies(m, h)).cloned()
}

pub fn oracle_check_entail(lhs: &SymbolicHeap, rhs: &SymbolicHeap, max: usize) -> bool {
    oracle_counter_model(lhs, rhs, max).is_none()
}

pub fn oracle_counter_model(lhs: &SymbolicHeap, rhs: &SymbolicHeap, max: usize) -> Option<OModel> {
    models_for(&[lhs, rhs], max)
        .iter()
        .find(|m| satisfies(m, lhs) && !satisfies(m, rhs))
        .cloned()
}

/// Fewest allocated cells over all models up to `max` locations.
pub fn smallest_model_cells(h: &SymbolicHeap, max: usize) -> Option<usize> {
    models_for(&[h], max)
        .iter()
        .filter(|m| satisfies(m, h))
        .map(|m| m.cells())
        .min()
}
