//! Model checking of a single symbolic heap against a concrete model.
//!
//! Beyond the usual precise semantics of separating conjunction, sharing is
//! explicit: a stack variable whose value is an owned location must point to
//! a boundary cell of an atom whose binder at that cell is a program
//! variable. Boundary cells are the first cell of every atom and the last
//! cell of a doubly-linked segment. Hence no program variable aliases the
//! interior of a segment or a cell whose only name is existential.

use std::collections::BTreeMap;

use super::model::{HeapModel, Loc, Slot, NIL};
use crate::formula::{normalize, Field, PureAtom, SpatialAtom, SymbolicHeap, Var};

/// Whether `m` is a model of `h`. Existentials are chosen freely; every
/// program variable of `h` must be on the stack of `m`.
pub fn satisfies(m: &HeapModel, h: &SymbolicHeap) -> bool {
    match normalize(h) {
        Ok(h) => satisfies_normalized(m, &h),
        Err(_) => false,
    }
}

pub(crate) fn satisfies_normalized(m: &HeapModel, h: &SymbolicHeap) -> bool {
    for p in &h.pure {
        if let PureAtom::IntVal(x, v) = p {
            if x.is_prog() && m.ints.get(x) != Some(&Some(*v)) {
                return false;
            }
        }
    }
    let Some(matcher) = Matcher::new(m, h) else {
        return false;
    };
    let st = State {
        env: matcher.initial.clone(),
        owner: vec![None; m.size() + 1],
        boundary: Vec::new(),
        pending: Vec::new(),
    };
    let remaining: Vec<usize> = (0..matcher.atoms.len()).collect();
    matcher.solve(st, remaining)
}

enum Atom {
    Pt {
        src: usize,
        fields: Vec<(Field, usize)>,
    },
    Ls {
        min: usize,
        src: usize,
        dst: usize,
        next: Field,
    },
    Dls {
        min: usize,
        first: usize,
        last: usize,
        prev: usize,
        next: usize,
        nf: Field,
        pf: Field,
    },
    Nls {
        min: usize,
        src: usize,
        dst: usize,
        sink: usize,
        nf: Field,
        df: Field,
        inf: Field,
    },
    Freed(usize),
}

impl Atom {
    fn anchor(&self) -> usize {
        match self {
            Atom::Pt { src, .. } | Atom::Ls { src, .. } | Atom::Nls { src, .. } | Atom::Freed(src) => {
                *src
            }
            Atom::Dls { first, .. } => *first,
        }
    }
}

#[derive(Clone)]
struct State {
    env: Vec<Option<Loc>>,
    owner: Vec<Option<usize>>,
    /// Boundary cells with the variable naming them.
    boundary: Vec<(Loc, usize)>,
    /// Variable equalities deferred until both sides are bound.
    pending: Vec<(usize, usize)>,
}

impl State {
    fn unify(&mut self, v: usize, l: Loc) -> bool {
        match self.env[v] {
            Some(old) => old == l,
            None => {
                self.env[v] = Some(l);
                true
            }
        }
    }

    fn unify_vars(&mut self, a: usize, b: usize) -> bool {
        match (self.env[a], self.env[b]) {
            (Some(x), Some(y)) => x == y,
            (Some(x), None) => self.unify(b, x),
            (None, Some(y)) => self.unify(a, y),
            (None, None) => {
                self.pending.push((a, b));
                true
            }
        }
    }

    fn free(&self, l: Loc) -> bool {
        l != NIL && self.owner[l as usize].is_none()
    }
}

struct Matcher<'a> {
    m: &'a HeapModel,
    vars: Vec<Var>,
    atoms: Vec<Atom>,
    pure: Vec<(bool, usize, usize)>,
    initial: Vec<Option<Loc>>,
}

impl<'a> Matcher<'a> {
    fn new(m: &'a HeapModel, h: &SymbolicHeap) -> Option<Matcher<'a>> {
        let mut index: BTreeMap<Var, usize> = BTreeMap::new();
        let mut vars = Vec::new();
        let mut id = |v: &Var| -> usize {
            *index.entry(v.clone()).or_insert_with(|| {
                vars.push(v.clone());
                vars.len() - 1
            })
        };
        let atoms: Vec<Atom> = h
            .spatial
            .iter()
            .map(|a| match a {
                SpatialAtom::PointsTo { src, fields } => Atom::Pt {
                    src: id(src),
                    fields: fields.iter().map(|(f, v)| (f.clone(), id(v))).collect(),
                },
                SpatialAtom::Ls { min, src, dst, shape } => Atom::Ls {
                    min: *min as usize,
                    src: id(src),
                    dst: id(dst),
                    next: shape.next.clone(),
                },
                SpatialAtom::Dls {
                    min,
                    first,
                    last,
                    prev,
                    next,
                    shape,
                } => Atom::Dls {
                    min: *min as usize,
                    first: id(first),
                    last: id(last),
                    prev: id(prev),
                    next: id(next),
                    nf: shape.next.clone(),
                    pf: shape.prev.clone(),
                },
                SpatialAtom::Nls {
                    min,
                    src,
                    dst,
                    sink,
                    shape,
                } => Atom::Nls {
                    min: *min as usize,
                    src: id(src),
                    dst: id(dst),
                    sink: id(sink),
                    nf: shape.next.clone(),
                    df: shape.nested.clone(),
                    inf: shape.inner.clone(),
                },
                SpatialAtom::Freed(x) => Atom::Freed(id(x)),
            })
            .collect();
        let pure = h
            .pure
            .iter()
            .filter_map(|p| match p {
                PureAtom::Eq(a, b) => Some((true, id(a), id(b))),
                PureAtom::Neq(a, b) => Some((false, id(a), id(b))),
                PureAtom::IntVal(..) => None,
            })
            .collect();
        let mut initial = vec![None; vars.len()];
        for (i, v) in vars.iter().enumerate() {
            initial[i] = match v {
                Var::Nil => Some(NIL),
                Var::Prog(_) => Some(*m.stack.get(v)?),
                Var::Ex(_) => None,
            };
        }
        Some(Matcher {
            m,
            vars,
            atoms,
            pure,
            initial,
        })
    }

    fn locations(&self) -> impl Iterator<Item = Loc> {
        0..=self.m.size() as Loc
    }

    fn has_fields(&self, l: Loc, names: &[&Field]) -> bool {
        match self.m.cell(l) {
            Some(fs) => fs.len() == names.len() && names.iter().all(|n| fs.iter().any(|(f, _)| f == *n)),
            None => false,
        }
    }

    fn field(&self, l: Loc, name: &Field) -> Loc {
        self.m
            .cell(l)
            .and_then(|fs| fs.iter().find(|(f, _)| f == name))
            .map(|(_, v)| *v)
            .expect("field presence checked by has_fields")
    }

    fn solve(&self, st: State, remaining: Vec<usize>) -> bool {
        if remaining.is_empty() {
            return self.finish(st);
        }
        let pick = remaining
            .iter()
            .position(|&a| {
                let atom = &self.atoms[a];
                st.env[atom.anchor()].is_some()
                    && !matches!(atom, Atom::Nls { sink, .. } if st.env[*sink].is_none())
            })
            .or_else(|| {
                remaining
                    .iter()
                    .position(|&a| st.env[self.atoms[a].anchor()].is_some())
            });
        let Some(pos) = pick else {
            // Only existentially rooted atoms are left: guess a root.
            let anchor = self.atoms[remaining[0]].anchor();
            return self.locations().any(|l| {
                let mut st = st.clone();
                st.env[anchor] = Some(l);
                self.solve(st, remaining.clone())
            });
        };
        let mut rest = remaining.clone();
        let a = rest.remove(pos);
        match &self.atoms[a] {
            Atom::Pt { src, fields } => {
                let s = st.env[*src].unwrap();
                let names: Vec<&Field> = fields.iter().map(|(f, _)| f).collect();
                if !st.free(s) || !self.has_fields(s, &names) {
                    return false;
                }
                let mut st = st;
                for (f, v) in fields {
                    if !st.unify(*v, self.field(s, f)) {
                        return false;
                    }
                }
                st.owner[s as usize] = Some(a);
                st.boundary.push((s, *src));
                self.solve(st, rest)
            }
            Atom::Freed(x) => {
                let s = st.env[*x].unwrap();
                if !st.free(s) || *self.m.slot(s) != Slot::Freed {
                    return false;
                }
                let mut st = st;
                st.owner[s as usize] = Some(a);
                st.boundary.push((s, *x));
                self.solve(st, rest)
            }
            Atom::Ls { min, src, dst, next } => {
                let s = st.env[*src].unwrap();
                self.ls_step(st, &rest, a, *min, *src, *dst, next, s, 0)
            }
            Atom::Dls {
                min,
                first,
                last,
                prev,
                next,
                nf,
                pf,
            } => {
                let f = st.env[*first].unwrap();
                if *min == 0 {
                    let mut e = st.clone();
                    if e.unify_vars(*next, *first) && e.unify_vars(*last, *prev) && self.solve(e, rest.clone()) {
                        return true;
                    }
                }
                if !st.free(f) || !self.has_fields(f, &[nf, pf]) {
                    return false;
                }
                let mut st = st;
                if !st.unify(*prev, self.field(f, pf)) {
                    return false;
                }
                st.owner[f as usize] = Some(a);
                st.boundary.push((f, *first));
                self.dls_step(st, &rest, a, f, 1)
            }
            Atom::Nls { sink, .. } if st.env[*sink].is_none() => {
                let sink = *sink;
                self.locations().any(|l| {
                    let mut st = st.clone();
                    st.env[sink] = Some(l);
                    self.solve(st, remaining.clone())
                })
            }
            Atom::Nls { src, .. } => {
                let s = st.env[*src].unwrap();
                self.nls_step(st, &rest, a, s, 0)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn ls_step(
        &self,
        st: State,
        rest: &[usize],
        a: usize,
        min: usize,
        src: usize,
        dst: usize,
        next: &Field,
        cur: Loc,
        count: usize,
    ) -> bool {
        let bound_dst = st.env[dst];
        if count >= min && st.owner[cur as usize] != Some(a) && bound_dst.is_none_or(|d| d == cur) {
            let mut stop = st.clone();
            stop.env[dst] = Some(cur);
            if self.solve(stop, rest.to_vec()) {
                return true;
            }
        }
        if bound_dst == Some(cur) || !st.free(cur) || !self.has_fields(cur, &[next]) {
            return false;
        }
        let mut st = st;
        st.owner[cur as usize] = Some(a);
        if count == 0 {
            st.boundary.push((cur, src));
        }
        let nxt = self.field(cur, next);
        self.ls_step(st, rest, a, min, src, dst, next, nxt, count + 1)
    }

    fn dls_step(&self, st: State, rest: &[usize], a: usize, cur: Loc, count: usize) -> bool {
        let Atom::Dls {
            min,
            last,
            next,
            nf,
            pf,
            ..
        } = &self.atoms[a]
        else {
            unreachable!()
        };
        let nxt = self.field(cur, nf);
        if count >= *min && st.owner[nxt as usize] != Some(a) && st.env[*last].is_none_or(|l| l == cur) {
            let mut stop = st.clone();
            stop.env[*last] = Some(cur);
            if stop.unify(*next, nxt) {
                stop.boundary.push((cur, *last));
                if self.solve(stop, rest.to_vec()) {
                    return true;
                }
            }
        }
        if st.env[*last] == Some(cur)
            || !st.free(nxt)
            || !self.has_fields(nxt, &[nf, pf])
            || self.field(nxt, pf) != cur
        {
            return false;
        }
        let mut st = st;
        st.owner[nxt as usize] = Some(a);
        self.dls_step(st, rest, a, nxt, count + 1)
    }

    fn nls_step(&self, st: State, rest: &[usize], a: usize, cur: Loc, count: usize) -> bool {
        let Atom::Nls {
            min,
            src,
            dst,
            sink,
            nf,
            df,
            inf,
        } = &self.atoms[a]
        else {
            unreachable!()
        };
        let bound_dst = st.env[*dst];
        if count >= *min && st.owner[cur as usize] != Some(a) && bound_dst.is_none_or(|d| d == cur) {
            let mut stop = st.clone();
            stop.env[*dst] = Some(cur);
            if self.solve(stop, rest.to_vec()) {
                return true;
            }
        }
        if bound_dst == Some(cur) || !st.free(cur) || !self.has_fields(cur, &[nf, df]) {
            return false;
        }
        let mut st = st;
        st.owner[cur as usize] = Some(a);
        if count == 0 {
            st.boundary.push((cur, *src));
        }
        let k = st.env[*sink].unwrap();
        let mut c = self.field(cur, df);
        while c != k {
            if !st.free(c) || !self.has_fields(c, &[inf]) {
                return false;
            }
            st.owner[c as usize] = Some(a);
            c = self.field(c, inf);
        }
        let nxt = self.field(cur, nf);
        self.nls_step(st, rest, a, nxt, count + 1)
    }

    fn finish(&self, st: State) -> bool {
        if self.m.owned().any(|l| st.owner[l as usize].is_none()) {
            return false;
        }
        for &l in self.m.stack.values() {
            if l != NIL
                && *self.m.slot(l) != Slot::Dangling
                && !st
                    .boundary
                    .iter()
                    .any(|&(b, var)| b == l && self.vars[var].is_prog())
            {
                return false;
            }
        }
        let mut constraints: Vec<(bool, usize, usize)> = self.pure.clone();
        constraints.extend(st.pending.iter().map(|&(a, b)| (true, a, b)));
        let unbound: Vec<usize> = constraints
            .iter()
            .flat_map(|&(_, a, b)| [a, b])
            .filter(|&v| st.env[v].is_none())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        self.assign(&mut st.env.clone(), &unbound, &constraints)
    }

    fn assign(&self, env: &mut Vec<Option<Loc>>, unbound: &[usize], cs: &[(bool, usize, usize)]) -> bool {
        match unbound.split_first() {
            None => cs.iter().all(|&(eq, a, b)| (env[a] == env[b]) == eq),
            Some((&v, rest)) => self.locations().any(|l| {
                env[v] = Some(l);
                let ok = self.assign(env, rest, cs);
                env[v] = None;
                ok
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_heap;
    use std::sync::Arc;

    fn chain(vars: &[(&str, Loc)], links: &[(Loc, Loc)]) -> HeapModel {
        let mut m = HeapModel::new(links.len().max(vars.iter().map(|v| v.1 as usize).max().unwrap_or(0)));
        for &(l, n) in links {
            m.set(l, Slot::Cell(vec![(Arc::from("next"), n)]));
        }
        for &(v, l) in vars {
            m.stack.insert(Var::prog(v), l);
        }
        m
    }

    fn sat(m: &HeapModel, h: &str) -> bool {
        satisfies(m, &parse_heap(h).unwrap())
    }

    #[test]
    fn single_cell() {
        let m = chain(&[("x", 1)], &[(1, NIL)]);
        assert!(sat(&m, "x -> (next: nil)"));
        assert!(!sat(&m, "ls(2+; x, nil)"));
        assert!(sat(&m, "ls(1+; x, nil)"));
        assert!(!sat(&m, "emp"));
    }

    #[test]
    fn existential_chain() {
        let m = chain(&[("x", 1)], &[(1, 2), (2, NIL)]);
        assert!(sat(&m, "E y . x -> (next: y) * ls(1+; y, nil)"));
        assert!(sat(&m, "ls(2+; x, nil)"));
        assert!(!sat(&m, "E y . x -> (next: y) * ls(2+; y, nil)"));
    }

    #[test]
    fn program_variable_must_not_alias_interior() {
        let m = chain(&[("x", 1), ("z", 2)], &[(1, 2), (2, NIL)]);
        assert!(!sat(&m, "ls(2+; x, nil)"));
        assert!(sat(&m, "x -> (next: z) * z -> (next: nil)"));
        assert!(!sat(&m, "E y . x -> (next: y) * y -> (next: nil)"));
    }

    #[test]
    fn segments_are_acyclic() {
        let m = chain(&[("x", 1)], &[(1, 2), (2, 1)]);
        assert!(!sat(&m, "E y . ls(1+; x, y)"));
        assert!(sat(&m, "E y . x -> (next: y) * y -> (next: x)"));
    }

    #[test]
    fn doubly_linked() {
        let mut m = HeapModel::new(2);
        let cell = |n: Loc, p: Loc| Slot::Cell(vec![(Arc::from("next"), n), (Arc::from("prev"), p)]);
        m.set(1, cell(2, NIL));
        m.set(2, cell(NIL, 1));
        m.stack.insert(Var::prog("x"), 1);
        m.stack.insert(Var::prog("t"), 2);
        assert!(sat(&m, "dls(2+; x, t, nil, nil)"));
        assert!(sat(&m, "dls(1+; x, x, nil, t) * t -> (next: nil, prev: x)"));
        assert!(!sat(&m, "dls(2+; x, t, x, nil)"));
        m.set(2, cell(NIL, 2));
        assert!(!sat(&m, "dls(2+; x, t, nil, nil)"));
    }

    #[test]
    fn nested() {
        let mut m = HeapModel::new(3);
        m.set(1, Slot::Cell(vec![(Arc::from("nested"), 3), (Arc::from("next"), 2)]));
        m.set(2, Slot::Cell(vec![(Arc::from("nested"), NIL), (Arc::from("next"), NIL)]));
        m.set(3, Slot::Cell(vec![(Arc::from("next"), NIL)]));
        m.stack.insert(Var::prog("x"), 1);
        assert!(sat(&m, "nls(2+; x, nil, nil)"));
        assert!(!sat(&m, "nls(3+; x, nil, nil)"));
        assert!(sat(&m, "E s . nls(1+; x, nil, s)"));
    }

    #[test]
    fn freed_and_pure() {
        let mut m = HeapModel::new(2);
        m.set(1, Slot::Freed);
        m.stack.insert(Var::prog("x"), 1);
        m.stack.insert(Var::prog("y"), 2);
        m.ints.insert(Var::prog("i"), Some(3));
        assert!(sat(&m, "freed(x)"));
        assert!(sat(&m, "x != y & y != nil & i = 3 & freed(x)"));
        assert!(!sat(&m, "i = 4 & freed(x)"));
        assert!(!sat(&m, "x = y & freed(x)"));
        assert!(sat(&m, "E e . e != x & freed(x)"));
    }
}
