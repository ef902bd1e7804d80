use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{PureAtom, SpatialAtom, SymbolicHeap, Var};

/// The heap is syntactically unsatisfiable.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("contradiction: {0}")]
pub struct Contradiction(pub String);

struct Classes {
    parent: BTreeMap<Var, Var>,
}

impl Classes {
    fn find(&mut self, v: &Var) -> Var {
        let mut cur = v.clone();
        while let Some(p) = self.parent.get(&cur) {
            if *p == cur {
                break;
            }
            cur = p.clone();
        }
        let root = cur;
        let mut cur = v.clone();
        while let Some(p) = self.parent.get(&cur).cloned() {
            if p == root {
                break;
            }
            self.parent.insert(cur, root.clone());
            cur = p;
        }
        root
    }

    // The smaller variable wins: nil, then program variables, then existentials.
    fn union(&mut self, a: &Var, b: &Var) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return;
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent.insert(drop, keep.clone());
        self.parent.entry(keep.clone()).or_insert(keep);
    }
}

/// Collapses equality classes onto one representative, drops unused
/// existentials, duplicates and trivial atoms, and sorts the spatial part.
///
/// Program variables that are merged into another representative keep an
/// explicit `Eq(rep, var)` atom so that no program variable is forgotten.
pub fn normalize(h: &SymbolicHeap) -> Result<SymbolicHeap, Contradiction> {
    let mut classes = Classes {
        parent: BTreeMap::new(),
    };
    for p in &h.pure {
        if let PureAtom::Eq(a, b) = p {
            classes.union(a, b);
        }
    }
    let members: Vec<Var> = classes.parent.keys().cloned().collect();
    let mut rep_of: BTreeMap<Var, Var> = BTreeMap::new();
    for v in members {
        let r = classes.find(&v);
        rep_of.insert(v, r);
    }
    let mut subst = |v: &Var| rep_of.get(v).cloned().unwrap_or_else(|| v.clone());

    let mut pure = BTreeSet::new();
    let mut ints: BTreeMap<Var, i64> = BTreeMap::new();
    for p in &h.pure {
        match p {
            PureAtom::Eq(..) => {}
            PureAtom::Neq(a, b) => {
                let (a, b) = (subst(a), subst(b));
                if a == b {
                    return Err(Contradiction(format!("{a} != {a}")));
                }
                pure.insert(PureAtom::neq(a, b));
            }
            PureAtom::IntVal(x, v) => {
                let x = subst(x);
                if let Some(old) = ints.insert(x.clone(), *v) {
                    if old != *v {
                        return Err(Contradiction(format!("{x} = {old} and {x} = {v}")));
                    }
                }
                pure.insert(PureAtom::IntVal(x, *v));
            }
        }
    }
    for (v, r) in &rep_of {
        if v != r && v.is_prog() {
            pure.insert(PureAtom::eq(r.clone(), v.clone()));
        }
    }

    let mut spatial = Vec::with_capacity(h.spatial.len());
    let mut allocated: BTreeSet<Var> = BTreeSet::new();
    let mut claim = |v: &Var, what: &SpatialAtom| -> Result<(), Contradiction> {
        if v.is_nil() {
            return Err(Contradiction(format!("nil allocated by {what}")));
        }
        if !allocated.insert(v.clone()) {
            return Err(Contradiction(format!("{v} allocated twice")));
        }
        Ok(())
    };
    for s in &h.spatial {
        let s = s.map_vars(&mut subst);
        match &s {
            SpatialAtom::PointsTo { src, .. } | SpatialAtom::Freed(src) => claim(src, &s)?,
            SpatialAtom::Ls { min, src, dst, .. } | SpatialAtom::Nls { min, src, dst, .. } => {
                if src == dst {
                    if *min > 0 {
                        return Err(Contradiction(format!("cyclic segment {s}")));
                    }
                    continue;
                }
                if *min > 0 {
                    claim(src, &s)?;
                }
            }
            SpatialAtom::Dls {
                min,
                first,
                last,
                prev,
                next,
                ..
            } => {
                if first == next && last == prev && *min == 0 {
                    continue;
                }
                if *min > 0 {
                    if first == next || last == next {
                        return Err(Contradiction(format!("cyclic segment {s}")));
                    }
                    if *min > 1 && first == last {
                        return Err(Contradiction(format!("short segment {s}")));
                    }
                    claim(first, &s)?;
                    if last != first {
                        claim(last, &s)?;
                    }
                }
            }
        }
        spatial.push(s);
    }
    spatial.sort();
    // Separation already makes allocated cells distinct from each other and from nil.
    let implied = |v: &Var| v.is_nil() || allocated.contains(v);
    pure.retain(|p| match p {
        PureAtom::Neq(a, b) => !(implied(a) && implied(b)),
        _ => true,
    });

    let mut out = SymbolicHeap {
        exists: BTreeSet::new(),
        pure,
        spatial,
    };
    out.exists = out.vars().into_iter().filter(Var::is_ex).collect();
    Ok(out)
}

/// Renames existentials to `_0, _1, ...` in an order that depends only on
/// the shape of the heap, so that heaps equal up to renaming of bound
/// variables usually become syntactically identical.
pub fn canonicalize(h: &SymbolicHeap) -> SymbolicHeap {
    if h.exists.is_empty() {
        return h.clone();
    }
    let hole = Var::Ex(Arc::from("?"));
    let mut mask = |v: &Var| if v.is_ex() { hole.clone() } else { v.clone() };
    let mut atoms: Vec<(SpatialAtom, &SpatialAtom)> =
        h.spatial.iter().map(|a| (a.map_vars(&mut mask), a)).collect();
    atoms.sort();
    let mut pures: Vec<(PureAtom, &PureAtom)> =
        h.pure.iter().map(|p| (p.map_vars(&mut mask), p)).collect();
    pures.sort();

    let mut names: BTreeMap<Var, Var> = BTreeMap::new();
    let mut visit = |v: &Var| {
        if v.is_ex() && !names.contains_key(v) {
            let n = names.len();
            names.insert(v.clone(), Var::Ex(Arc::from(format!("_{n}"))));
        }
    };
    for (_, a) in &atoms {
        a.vars().into_iter().for_each(&mut visit);
    }
    for (_, p) in &pures {
        p.vars().into_iter().for_each(&mut visit);
    }
    for v in &h.exists {
        visit(v);
    }
    let mut rename = |v: &Var| names.get(v).cloned().unwrap_or_else(|| v.clone());
    let mut spatial: Vec<SpatialAtom> = h.spatial.iter().map(|a| a.map_vars(&mut rename)).collect();
    spatial.sort();
    SymbolicHeap {
        exists: h.exists.iter().map(&mut rename).collect(),
        pure: h.pure.iter().map(|p| p.map_vars(&mut rename)).collect(),
        spatial,
    }
}
