//! Symbolic heaps: existentially quantified separating conjunctions of pure
//! and spatial atoms, plus the syntactic simplifications applied to them.

mod normalize;
mod syntax;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

pub use normalize::{canonicalize, normalize, Contradiction};
pub use syntax::{parse_entailment, parse_heap, FormulaParseError};

pub type Name = Arc<str>;
pub type Field = Arc<str>;

/// Upper limit on tracked minimum lengths of list predicates.
pub const DEFAULT_LENGTH_LIMIT: u8 = 2;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Nil,
    Prog(Name),
    Ex(Name),
}

impl Var {
    pub fn prog(name: &str) -> Var {
        Var::Prog(Arc::from(name))
    }

    pub fn ex(name: &str) -> Var {
        Var::Ex(Arc::from(name))
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, Var::Nil)
    }

    pub fn is_prog(&self) -> bool {
        matches!(self, Var::Prog(_))
    }

    pub fn is_ex(&self) -> bool {
        matches!(self, Var::Ex(_))
    }

    pub fn name(&self) -> &str {
        match self {
            Var::Nil => "nil",
            Var::Prog(n) | Var::Ex(n) => n,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PureAtom {
    Eq(Var, Var),
    Neq(Var, Var),
    /// Exact value of an integer program variable.
    IntVal(Var, i64),
}

impl PureAtom {
    pub fn eq(a: Var, b: Var) -> PureAtom {
        if a <= b {
            PureAtom::Eq(a, b)
        } else {
            PureAtom::Eq(b, a)
        }
    }

    pub fn neq(a: Var, b: Var) -> PureAtom {
        if a <= b {
            PureAtom::Neq(a, b)
        } else {
            PureAtom::Neq(b, a)
        }
    }

    pub fn vars(&self) -> Vec<&Var> {
        match self {
            PureAtom::Eq(a, b) | PureAtom::Neq(a, b) => vec![a, b],
            PureAtom::IntVal(x, _) => vec![x],
        }
    }

    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Var) -> PureAtom {
        match self {
            PureAtom::Eq(a, b) => PureAtom::eq(f(a), f(b)),
            PureAtom::Neq(a, b) => PureAtom::neq(f(a), f(b)),
            PureAtom::IntVal(x, v) => PureAtom::IntVal(f(x), *v),
        }
    }
}

/// Link fields of a singly-linked segment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SllShape {
    pub next: Field,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DllShape {
    pub next: Field,
    pub prev: Field,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NllShape {
    pub next: Field,
    pub nested: Field,
    /// Link field of the nested singly-linked lists.
    pub inner: Field,
}

impl Default for SllShape {
    fn default() -> Self {
        SllShape { next: Arc::from("next") }
    }
}

impl Default for DllShape {
    fn default() -> Self {
        DllShape {
            next: Arc::from("next"),
            prev: Arc::from("prev"),
        }
    }
}

impl Default for NllShape {
    fn default() -> Self {
        NllShape {
            next: Arc::from("next"),
            nested: Arc::from("nested"),
            inner: Arc::from("next"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpatialAtom {
    /// One heap cell; `fields` is sorted by field name.
    PointsTo { src: Var, fields: Vec<(Field, Var)> },
    /// Acyclic singly-linked segment of at least `min` cells.
    Ls {
        min: u8,
        src: Var,
        dst: Var,
        shape: SllShape,
    },
    /// Acyclic doubly-linked segment.
    Dls {
        min: u8,
        first: Var,
        last: Var,
        prev: Var,
        next: Var,
        shape: DllShape,
    },
    /// Acyclic segment of cells each owning a nested list ending at `sink`.
    Nls {
        min: u8,
        src: Var,
        dst: Var,
        sink: Var,
        shape: NllShape,
    },
    Freed(Var),
}

impl SpatialAtom {
    pub fn points_to(src: Var, fields: impl IntoIterator<Item = (Field, Var)>) -> SpatialAtom {
        let mut fields: Vec<_> = fields.into_iter().collect();
        fields.sort();
        SpatialAtom::PointsTo { src, fields }
    }

    pub fn next_cell(src: Var, next: Var) -> SpatialAtom {
        SpatialAtom::points_to(src, [(Arc::from("next"), next)])
    }

    pub fn ls(min: u8, src: Var, dst: Var) -> SpatialAtom {
        SpatialAtom::Ls {
            min,
            src,
            dst,
            shape: SllShape::default(),
        }
    }

    /// Minimum number of allocated cells in any model of the atom.
    pub fn min_cells(&self) -> usize {
        match self {
            SpatialAtom::PointsTo { .. } => 1,
            SpatialAtom::Ls { min, .. } | SpatialAtom::Dls { min, .. } | SpatialAtom::Nls { min, .. } => {
                *min as usize
            }
            SpatialAtom::Freed(_) => 0,
        }
    }

    pub fn is_list(&self) -> bool {
        matches!(
            self,
            SpatialAtom::Ls { .. } | SpatialAtom::Dls { .. } | SpatialAtom::Nls { .. }
        )
    }

    /// The variable naming the first cell of the atom's footprint.
    pub fn root(&self) -> &Var {
        match self {
            SpatialAtom::PointsTo { src, .. }
            | SpatialAtom::Ls { src, .. }
            | SpatialAtom::Nls { src, .. }
            | SpatialAtom::Freed(src) => src,
            SpatialAtom::Dls { first, .. } => first,
        }
    }

    pub fn vars(&self) -> Vec<&Var> {
        match self {
            SpatialAtom::PointsTo { src, fields } => {
                std::iter::once(src).chain(fields.iter().map(|(_, v)| v)).collect()
            }
            SpatialAtom::Ls { src, dst, .. } => vec![src, dst],
            SpatialAtom::Dls {
                first,
                last,
                prev,
                next,
                ..
            } => vec![first, last, prev, next],
            SpatialAtom::Nls { src, dst, sink, .. } => vec![src, dst, sink],
            SpatialAtom::Freed(x) => vec![x],
        }
    }

    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Var) -> SpatialAtom {
        match self {
            SpatialAtom::PointsTo { src, fields } => SpatialAtom::PointsTo {
                src: f(src),
                fields: fields.iter().map(|(n, v)| (n.clone(), f(v))).collect(),
            },
            SpatialAtom::Ls { min, src, dst, shape } => SpatialAtom::Ls {
                min: *min,
                src: f(src),
                dst: f(dst),
                shape: shape.clone(),
            },
            SpatialAtom::Dls {
                min,
                first,
                last,
                prev,
                next,
                shape,
            } => SpatialAtom::Dls {
                min: *min,
                first: f(first),
                last: f(last),
                prev: f(prev),
                next: f(next),
                shape: shape.clone(),
            },
            SpatialAtom::Nls {
                min,
                src,
                dst,
                sink,
                shape,
            } => SpatialAtom::Nls {
                min: *min,
                src: f(src),
                dst: f(dst),
                sink: f(sink),
                shape: shape.clone(),
            },
            SpatialAtom::Freed(x) => SpatialAtom::Freed(f(x)),
        }
    }

    pub fn field(&self, name: &str) -> Option<&Var> {
        match self {
            SpatialAtom::PointsTo { fields, .. } => {
                fields.iter().find(|(n, _)| &**n == name).map(|(_, v)| v)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolicHeap {
    pub exists: BTreeSet<Var>,
    pub pure: BTreeSet<PureAtom>,
    pub spatial: Vec<SpatialAtom>,
}

impl SymbolicHeap {
    pub fn emp() -> SymbolicHeap {
        SymbolicHeap::default()
    }

    pub fn new(
        exists: impl IntoIterator<Item = Var>,
        pure: impl IntoIterator<Item = PureAtom>,
        spatial: impl IntoIterator<Item = SpatialAtom>,
    ) -> SymbolicHeap {
        SymbolicHeap {
            exists: exists.into_iter().collect(),
            pure: pure.into_iter().collect(),
            spatial: spatial.into_iter().collect(),
        }
    }

    pub fn with_pure(mut self, atom: PureAtom) -> SymbolicHeap {
        for v in atom.vars() {
            if v.is_ex() {
                self.exists.insert(v.clone());
            }
        }
        self.pure.insert(atom);
        self
    }

    pub fn with_spatial(mut self, atom: SpatialAtom) -> SymbolicHeap {
        for v in atom.vars() {
            if v.is_ex() {
                self.exists.insert(v.clone());
            }
        }
        self.spatial.push(atom);
        self
    }

    pub fn is_emp(&self) -> bool {
        self.spatial.is_empty()
    }

    /// Every variable occurring in an atom.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for p in &self.pure {
            out.extend(p.vars().into_iter().cloned());
        }
        for s in &self.spatial {
            out.extend(s.vars().into_iter().cloned());
        }
        out
    }

    /// Program variables occurring in an atom.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        self.vars().into_iter().filter(Var::is_prog).collect()
    }

    /// Variables holding integers: those constrained by an exact value.
    pub fn int_vars(&self) -> BTreeSet<Var> {
        self.pure
            .iter()
            .filter_map(|p| match p {
                PureAtom::IntVal(x, _) => Some(x.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn occurrences(&self, v: &Var) -> usize {
        let pure = self
            .pure
            .iter()
            .flat_map(|p| p.vars())
            .filter(|x| *x == v)
            .count();
        let spatial = self
            .spatial
            .iter()
            .flat_map(|s| s.vars())
            .filter(|x| *x == v)
            .count();
        pure + spatial
    }

    pub fn int_value(&self, x: &Var) -> Option<i64> {
        self.pure.iter().find_map(|p| match p {
            PureAtom::IntVal(y, v) if y == x => Some(*v),
            _ => None,
        })
    }

    /// Representative of `x` under the kept program-variable equalities.
    pub fn rep(&self, x: &Var) -> Var {
        for p in &self.pure {
            if let PureAtom::Eq(a, b) = p {
                if b == x && a < b {
                    return a.clone();
                }
                if a == x && b < a {
                    return b.clone();
                }
            }
        }
        x.clone()
    }

    /// Replaces every occurrence of `from` by `to`, keeping the binder set in sync.
    pub fn substitute(&self, from: &Var, to: &Var) -> SymbolicHeap {
        assert!(!from.is_nil(), "nil cannot be substituted");
        let mut f = |v: &Var| if v == from { to.clone() } else { v.clone() };
        let mut exists: BTreeSet<Var> = self.exists.iter().map(&mut f).collect();
        exists.retain(Var::is_ex);
        if to.is_ex() {
            exists.insert(to.clone());
        }
        if from.is_ex() && from != to {
            exists.remove(from);
        }
        SymbolicHeap {
            exists,
            pure: self.pure.iter().map(|p| p.map_vars(&mut f)).collect(),
            spatial: self.spatial.iter().map(|s| s.map_vars(&mut f)).collect(),
        }
    }

    /// Lower bound on the number of allocated cells in any model.
    pub fn alloc_count(&self) -> usize {
        self.spatial.iter().map(SpatialAtom::min_cells).sum()
    }

    /// An existential name not used in this heap.
    pub fn fresh_ex(&self) -> Var {
        let used = self.vars();
        let mut i = self.exists.len();
        loop {
            let v = Var::Ex(Arc::from(format!("_{i}")));
            if !used.contains(&v) && !self.exists.contains(&v) {
                return v;
            }
            i += 1;
        }
    }

    /// Spatial atom whose footprint starts at `x`, with its index.
    pub fn atom_rooted_at(&self, x: &Var) -> Option<(usize, &SpatialAtom)> {
        self.spatial.iter().enumerate().find(|(_, a)| a.root() == x)
    }
}

/// A finite disjunction of symbolic heaps.
pub type StateSet = BTreeSet<SymbolicHeap>;

impl fmt::Display for PureAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PureAtom::Eq(a, b) => write!(f, "{a} = {b}"),
            PureAtom::Neq(a, b) => write!(f, "{a} != {b}"),
            PureAtom::IntVal(x, v) => write!(f, "{x} = {v}"),
        }
    }
}

impl fmt::Display for SpatialAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialAtom::PointsTo { src, fields } => {
                write!(f, "{src} -> (")?;
                for (i, (n, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{n}: {v}")?;
                }
                f.write_str(")")
            }
            SpatialAtom::Ls {
                min,
                src,
                dst,
                shape,
            } => {
                f.write_str("ls")?;
                if *shape != SllShape::default() {
                    write!(f, "[{}]", shape.next)?;
                }
                write!(f, "({min}+; {src}, {dst})")
            }
            SpatialAtom::Dls {
                min,
                first,
                last,
                prev,
                next,
                shape,
            } => {
                f.write_str("dls")?;
                if *shape != DllShape::default() {
                    write!(f, "[{}, {}]", shape.next, shape.prev)?;
                }
                write!(f, "({min}+; {first}, {last}, {prev}, {next})")
            }
            SpatialAtom::Nls {
                min,
                src,
                dst,
                sink,
                shape,
            } => {
                f.write_str("nls")?;
                if *shape != NllShape::default() {
                    write!(f, "[{}, {}, {}]", shape.next, shape.nested, shape.inner)?;
                }
                write!(f, "({min}+; {src}, {dst}, {sink})")
            }
            SpatialAtom::Freed(x) => write!(f, "freed({x})"),
        }
    }
}

impl fmt::Display for SymbolicHeap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.exists.is_empty() {
            f.write_str("E")?;
            for v in &self.exists {
                write!(f, " {v}")?;
            }
            f.write_str(" . ")?;
        }
        for p in &self.pure {
            write!(f, "{p} & ")?;
        }
        if self.spatial.is_empty() {
            return f.write_str("emp");
        }
        for (i, s) in self.spatial.iter().enumerate() {
            if i > 0 {
                f.write_str(" * ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}
