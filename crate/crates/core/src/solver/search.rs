//! Candidate model generation.
//!
//! Models of a normalized heap are built from its structure: each
//! possibly-empty segment is either empty or not, equality classes are
//! formed, unallocated classes are mapped onto nil, an allocated class, or a
//! fresh location, and segments are unrolled to concrete lengths. Every
//! candidate is validated with `satisfies`, so construction only has to be
//! complete, not exact.

use std::collections::{BTreeMap, BTreeSet};

use super::model::{HeapModel, Loc, Slot, NIL};
use super::satisfy::satisfies_normalized;
use crate::formula::{Field, PureAtom, SpatialAtom, SymbolicHeap, Var};

/// Limits on the candidates produced for one heap.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct Limits {
    /// Extra program pointer variables to place on the stack.
    pub extra_vars: Vec<Var>,
    /// Extra integer variables, left unconstrained.
    pub extra_ints: Vec<Var>,
    /// Longest unrolling of a segment, and the most cells all segments and
    /// nested lists together may add beyond their minimal lengths.
    pub max_len: usize,
    /// Longest nested list of a nested segment.
    pub nested_len: usize,
    /// Try every way of aliasing unallocated variables; otherwise keep them apart.
    pub aliasing: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Shape {
    Empty,
    /// Doubly-linked segment of exactly one cell.
    Single,
    NonEmpty,
}

struct Uf(Vec<usize>);

impl Uf {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        self.0[i] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

struct Gen<'a> {
    h: &'a SymbolicHeap,
    vars: Vec<Var>,
    index: BTreeMap<Var, usize>,
    ints: BTreeMap<Var, Option<i64>>,
    limits: &'a Limits,
}

/// Calls `visit` on candidate models of `h` (already normalized) until it returns false.
pub(crate) fn models(h: &SymbolicHeap, limits: &Limits, visit: &mut dyn FnMut(HeapModel) -> bool) {
    let int_vars = h.int_vars();
    let mut vars: Vec<Var> = vec![Var::Nil];
    for v in h.vars().into_iter().chain(limits.extra_vars.iter().cloned()) {
        if !v.is_nil() && !int_vars.contains(&v) && !vars.contains(&v) {
            vars.push(v);
        }
    }
    let index = vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    let mut ints: BTreeMap<Var, Option<i64>> = limits.extra_ints.iter().map(|v| (v.clone(), None)).collect();
    for p in &h.pure {
        if let PureAtom::IntVal(x, v) = p {
            if x.is_prog() {
                ints.insert(x.clone(), Some(*v));
            }
        }
    }
    let g = Gen {
        h,
        vars,
        index,
        ints,
        limits,
    };
    let options: Vec<Vec<Shape>> = h.spatial.iter().map(shape_options).collect();
    let mut choice = Vec::with_capacity(options.len());
    g.shapes(&options, &mut choice, visit);
}

fn shape_options(a: &SpatialAtom) -> Vec<Shape> {
    let mut out = Vec::new();
    match a {
        SpatialAtom::Ls { min, .. } | SpatialAtom::Nls { min, .. } => {
            if *min == 0 {
                out.push(Shape::Empty);
            }
            out.push(Shape::NonEmpty);
        }
        SpatialAtom::Dls { min, first, last, .. } => {
            if *min == 0 {
                out.push(Shape::Empty);
            }
            if *min <= 1 {
                out.push(Shape::Single);
            }
            if first != last {
                out.push(Shape::NonEmpty);
            }
        }
        _ => out.push(Shape::NonEmpty),
    }
    out
}

/// Concrete layout of one candidate before locations are assigned.
#[derive(Clone)]
struct Plan {
    /// Location group of each variable index.
    group: Vec<usize>,
    groups: usize,
    nil_group: usize,
    shapes: Vec<Shape>,
    lens: Vec<usize>,
    nested: Vec<Vec<usize>>,
    /// Cells added so far beyond minimal lengths.
    extra: usize,
}

impl Gen<'_> {
    fn id(&self, v: &Var) -> usize {
        self.index[v]
    }

    fn shapes(&self, options: &[Vec<Shape>], choice: &mut Vec<Shape>, visit: &mut dyn FnMut(HeapModel) -> bool) -> bool {
        if choice.len() == options.len() {
            return self.classes(choice, visit);
        }
        for &s in &options[choice.len()] {
            choice.push(s);
            let go_on = self.shapes(options, choice, visit);
            choice.pop();
            if !go_on {
                return false;
            }
        }
        true
    }

    fn classes(&self, shapes: &[Shape], visit: &mut dyn FnMut(HeapModel) -> bool) -> bool {
        let n = self.vars.len();
        let mut uf = Uf((0..n).collect());
        for p in &self.h.pure {
            if let PureAtom::Eq(a, b) = p {
                uf.union(self.id(a), self.id(b));
            }
        }
        let mut roots = Vec::new();
        for (a, &s) in self.h.spatial.iter().zip(shapes) {
            match (a, s) {
                (SpatialAtom::PointsTo { src, .. } | SpatialAtom::Freed(src), _) => roots.push(self.id(src)),
                (SpatialAtom::Ls { src, dst, .. } | SpatialAtom::Nls { src, dst, .. }, Shape::Empty) => {
                    uf.union(self.id(src), self.id(dst))
                }
                (SpatialAtom::Ls { src, .. } | SpatialAtom::Nls { src, .. }, _) => roots.push(self.id(src)),
                (
                    SpatialAtom::Dls {
                        first,
                        last,
                        prev,
                        next,
                        ..
                    },
                    _,
                ) => match s {
                    Shape::Empty => {
                        uf.union(self.id(first), self.id(next));
                        uf.union(self.id(last), self.id(prev));
                    }
                    Shape::Single => {
                        uf.union(self.id(first), self.id(last));
                        roots.push(self.id(first));
                    }
                    Shape::NonEmpty => {
                        roots.push(self.id(first));
                        roots.push(self.id(last));
                    }
                },
            }
        }
        let class: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
        let nil_class = class[0];
        let mut alloc: BTreeSet<usize> = BTreeSet::new();
        for r in roots {
            if class[r] == nil_class || !alloc.insert(class[r]) {
                return true;
            }
        }
        let neq: Vec<(usize, usize)> = self
            .h
            .pure
            .iter()
            .filter_map(|p| match p {
                PureAtom::Neq(a, b) => Some((self.id(a), self.id(b))),
                _ => None,
            })
            .collect();
        if neq.iter().any(|&(a, b)| class[a] == class[b]) {
            return true;
        }
        // Groups: nil first, then allocated classes, then unallocated ones as chosen.
        let mut base_group: BTreeMap<usize, usize> = BTreeMap::new();
        base_group.insert(nil_class, 0);
        for &c in &alloc {
            let g = base_group.len();
            base_group.insert(c, g);
        }
        let free_classes: Vec<usize> = class
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|c| !base_group.contains_key(c))
            .collect();
        let mut assign = Vec::with_capacity(free_classes.len());
        self.alias(
            shapes,
            &class,
            &base_group,
            &free_classes,
            &neq,
            &mut assign,
            base_group.len(),
            visit,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn alias(
        &self,
        shapes: &[Shape],
        class: &[usize],
        base: &BTreeMap<usize, usize>,
        free: &[usize],
        neq: &[(usize, usize)],
        assign: &mut Vec<usize>,
        groups: usize,
        visit: &mut dyn FnMut(HeapModel) -> bool,
    ) -> bool {
        if assign.len() == free.len() {
            let group: Vec<usize> = class
                .iter()
                .map(|c| match base.get(c) {
                    Some(g) => *g,
                    None => assign[free.iter().position(|f| f == c).unwrap()],
                })
                .collect();
            if neq.iter().any(|&(a, b)| group[a] == group[b]) {
                return true;
            }
            let plan = Plan {
                group,
                groups,
                nil_group: 0,
                shapes: shapes.to_vec(),
                lens: Vec::new(),
                nested: Vec::new(),
                extra: 0,
            };
            return self.lengths(plan, visit);
        }
        // A fresh location first, so the most separated candidate comes first.
        assign.push(groups);
        let go_on = self.alias(shapes, class, base, free, neq, assign, groups + 1, visit);
        assign.pop();
        if !go_on {
            return false;
        }
        if self.limits.aliasing {
            for g in 0..groups {
                assign.push(g);
                let go_on = self.alias(shapes, class, base, free, neq, assign, groups, visit);
                assign.pop();
                if !go_on {
                    return false;
                }
            }
        }
        true
    }

    fn lengths(&self, plan: Plan, visit: &mut dyn FnMut(HeapModel) -> bool) -> bool {
        let i = plan.lens.len();
        if i == self.h.spatial.len() {
            return self.nested(plan, visit);
        }
        let a = &self.h.spatial[i];
        let lo = match (plan.shapes[i], a) {
            (Shape::Empty, _) => 0,
            (Shape::Single, _) => 1,
            (Shape::NonEmpty, SpatialAtom::Dls { .. }) => (a.min_cells()).max(2),
            (Shape::NonEmpty, _) => a.min_cells().max(1),
        };
        let hi = if a.is_list() && plan.shapes[i] == Shape::NonEmpty {
            lo.max(self.limits.max_len).min(lo + self.limits.max_len - plan.extra)
        } else {
            lo
        };
        for len in lo..=hi {
            let mut next = plan.clone();
            next.lens.push(len);
            next.extra += len - lo;
            if !self.lengths(next, visit) {
                return false;
            }
        }
        true
    }

    fn nested(&self, plan: Plan, visit: &mut dyn FnMut(HeapModel) -> bool) -> bool {
        let i = plan.nested.len();
        if i == self.h.spatial.len() {
            return self.build_all(&plan, visit);
        }
        let tops = if matches!(self.h.spatial[i], SpatialAtom::Nls { .. }) {
            plan.lens[i]
        } else {
            0
        };
        let mut lens = vec![0; tops];
        loop {
            let added: usize = lens.iter().sum();
            if plan.extra + added <= self.limits.max_len {
                let mut next = plan.clone();
                next.nested.push(lens.clone());
                next.extra += added;
                if !self.nested(next, visit) {
                    return false;
                }
            }
            // Odometer over nested lengths.
            let mut k = 0;
            while k < tops && lens[k] == self.limits.nested_len {
                lens[k] = 0;
                k += 1;
            }
            if k == tops {
                return true;
            }
            lens[k] += 1;
        }
    }

    fn build_all(&self, plan: &Plan, visit: &mut dyn FnMut(HeapModel) -> bool) -> bool {
        let interior: usize = (0..self.h.spatial.len()).map(|i| self.interior_cells(plan, i)).sum();
        let size = plan.groups - 1 + interior;
        let mut loc: Vec<Loc> = (0..plan.groups as Loc).collect();
        loc[plan.nil_group] = NIL;
        let base = self.build(plan, &loc, size);
        if satisfies_normalized(&base, self.h) && !visit(base) {
            return false;
        }
        if !self.limits.aliasing || interior == 0 {
            return true;
        }
        // Existential-only unallocated groups may also name interior cells.
        let movable: Vec<usize> = (1..plan.groups)
            .filter(|&g| {
                let members: Vec<&Var> = (0..self.vars.len())
                    .filter(|&v| plan.group[v] == g)
                    .map(|v| &self.vars[v])
                    .collect();
                members.iter().all(|v| v.is_ex()) && !self.is_allocated_group(plan, g)
            })
            .collect();
        let combos = (interior + 1).checked_pow(movable.len() as u32).unwrap_or(usize::MAX);
        if movable.is_empty() || combos > 256 {
            return true;
        }
        let first_interior = plan.groups as Loc;
        for code in 1..combos {
            let mut c = code;
            let mut loc = loc.clone();
            for &g in &movable {
                let pick = c % (interior + 1);
                c /= interior + 1;
                if pick > 0 {
                    loc[g] = first_interior + pick as Loc - 1;
                }
            }
            let m = self.build(plan, &loc, size);
            if satisfies_normalized(&m, self.h) && !visit(m) {
                return false;
            }
        }
        true
    }

    fn is_allocated_group(&self, plan: &Plan, g: usize) -> bool {
        self.h.spatial.iter().zip(&plan.shapes).any(|(a, s)| {
            *s != Shape::Empty
                && match a {
                    SpatialAtom::Dls { first, last, .. } => {
                        plan.group[self.id(first)] == g || plan.group[self.id(last)] == g
                    }
                    _ => plan.group[self.id(a.root())] == g,
                }
        })
    }

    fn interior_cells(&self, plan: &Plan, i: usize) -> usize {
        let len = plan.lens[i];
        match &self.h.spatial[i] {
            SpatialAtom::Ls { .. } => len.saturating_sub(1),
            SpatialAtom::Dls { .. } => {
                if plan.shapes[i] == Shape::NonEmpty {
                    len - 2
                } else {
                    0
                }
            }
            SpatialAtom::Nls { .. } => len.saturating_sub(1) + plan.nested[i].iter().sum::<usize>(),
            _ => 0,
        }
    }

    fn build(&self, plan: &Plan, loc: &[Loc], size: usize) -> HeapModel {
        let mut m = HeapModel::new(size);
        let at = |v: &Var| loc[plan.group[self.index[v]]];
        let mut fresh = plan.groups as Loc;
        let mut next_fresh = || {
            let l = fresh;
            fresh += 1;
            l
        };
        let link = |f: &Field, l: Loc| (f.clone(), l);
        for (i, a) in self.h.spatial.iter().enumerate() {
            let len = plan.lens[i];
            match a {
                SpatialAtom::PointsTo { src, fields } => {
                    m.set(at(src), Slot::Cell(fields.iter().map(|(f, v)| (f.clone(), at(v))).collect()));
                }
                SpatialAtom::Freed(x) => m.set(at(x), Slot::Freed),
                SpatialAtom::Ls { src, dst, shape, .. } => {
                    if len == 0 {
                        continue;
                    }
                    let mut cells = vec![at(src)];
                    cells.extend((1..len).map(|_| next_fresh()));
                    for k in 0..len {
                        let to = if k + 1 < len { cells[k + 1] } else { at(dst) };
                        m.set(cells[k], Slot::Cell(vec![link(&shape.next, to)]));
                    }
                }
                SpatialAtom::Dls {
                    first,
                    last,
                    prev,
                    next,
                    shape,
                    ..
                } => {
                    if len == 0 {
                        continue;
                    }
                    let mut cells = vec![at(first)];
                    if len > 1 {
                        cells.extend((2..len).map(|_| next_fresh()));
                        cells.push(at(last));
                    }
                    for k in 0..len {
                        let n = if k + 1 < len { cells[k + 1] } else { at(next) };
                        let p = if k > 0 { cells[k - 1] } else { at(prev) };
                        let mut fs = vec![link(&shape.next, n), link(&shape.prev, p)];
                        fs.sort();
                        m.set(cells[k], Slot::Cell(fs));
                    }
                }
                SpatialAtom::Nls {
                    src, dst, sink, shape, ..
                } => {
                    if len == 0 {
                        continue;
                    }
                    let mut tops = vec![at(src)];
                    tops.extend((1..len).map(|_| next_fresh()));
                    for k in 0..len {
                        let to = if k + 1 < len { tops[k + 1] } else { at(dst) };
                        let inner: Vec<Loc> = (0..plan.nested[i][k]).map(|_| next_fresh()).collect();
                        for (j, &c) in inner.iter().enumerate() {
                            let n = inner.get(j + 1).copied().unwrap_or_else(|| at(sink));
                            m.set(c, Slot::Cell(vec![link(&shape.inner, n)]));
                        }
                        let head = inner.first().copied().unwrap_or_else(|| at(sink));
                        let mut fs = vec![link(&shape.next, to), link(&shape.nested, head)];
                        fs.sort();
                        m.set(tops[k], Slot::Cell(fs));
                    }
                }
            }
        }
        for v in &self.vars {
            if v.is_prog() {
                m.stack.insert(v.clone(), at(v));
            }
        }
        m.ints = self.ints.clone();
        m
    }
}
