//! Forward abstract interpretation over the control-flow graphs.
//!
//! Every CFG location holds a set of normalized, canonical symbolic heaps.
//! Calls are analyzed once per calling context: the part of the caller's heap
//! reachable from the arguments becomes the callee's precondition, the rest
//! is framed, and the callee's exit states are cached as a summary.

mod ops;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde_json::{json, Value};

use crate::abstraction::Abstraction;
use crate::cfg::{Cfg, Edge, Label, Node};
use crate::formula::{
    canonicalize, DllShape, NllShape, PureAtom, SllShape, SpatialAtom, StateSet, SymbolicHeap, Var,
};
use crate::frontend::{
    classify_structs, ArithOp, Atom, CmpOp, Cond, Expr, FunDef, Program, Rhs, StmtKind, StructKind, Type,
};
use crate::solver::{check_entail, check_sat};

pub use ops::{collect_garbage, forget, materialize, simplify, Branch, DerefError};

const RET: &str = "$ret";
const CALL_RESULT: &str = "$r";
const TEMP: &str = "$t";
/// Holds the value being assigned while the target is forgotten.
const MOVE: &str = "$m";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    /// Integers are tracked exactly within `[-int_range, int_range]`.
    pub int_range: i64,
    pub length_limit: u8,
    pub abstraction: bool,
    pub loop_ceiling: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            int_range: 5,
            length_limit: crate::formula::DEFAULT_LENGTH_LIMIT,
            abstraction: true,
            loop_ceiling: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    ValidDeref,
    ValidFree,
    ValidMemtrack,
}

impl Property {
    pub const ALL: [Property; 3] = [Property::ValidDeref, Property::ValidFree, Property::ValidMemtrack];

    pub fn name(self) -> &'static str {
        match self {
            Property::ValidDeref => "valid-deref",
            Property::ValidFree => "valid-free",
            Property::ValidMemtrack => "valid-memtrack",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown property {s}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    True,
    False,
    Unknown,
    Error,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::True => "TRUE",
            Outcome::False => "FALSE",
            Outcome::Unknown => "UNKNOWN",
            Outcome::Error => "ERROR",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub function: String,
    pub line: usize,
}

/// `trace` is present exactly when the outcome is FALSE.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub property: Property,
    pub outcome: Outcome,
    pub trace: Option<Vec<TraceStep>>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("loop at line {line} of {function} did not stabilize within {limit} iterations")]
    LoopCeiling { function: String, line: usize, limit: usize },
    #[error("line {line}: unsupported feature: {feature}")]
    Unsupported { line: usize, feature: String },
}

/// Exit states of `function` started from `pre`. Both sides speak about the
/// callee's ghost variables: `$p<i>` holds the value of the `i`th argument,
/// `$c<j>` the other caller values the callee can reach, and `$ret` the
/// return value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Summary {
    pub function: String,
    pub pre: SymbolicHeap,
    /// Exit heaps, each flagged when it depends on an imprecise condition.
    pub post: Vec<(SymbolicHeap, bool)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    /// Analyses per function; a summary hit does not count.
    pub analyses: BTreeMap<String, usize>,
    /// CFG locations processed per function.
    pub node_visits: BTreeMap<String, usize>,
    /// Largest iteration count seen per loop, keyed by `function:line`.
    pub loop_iterations: BTreeMap<String, usize>,
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub verdicts: Vec<Verdict>,
    pub stats: Stats,
    /// Heaps at the exit of the entry function before locals go out of scope.
    pub exit_states: StateSet,
    /// Per-location states of every analyzed calling context.
    pub states: Value,
}

#[derive(Clone, Debug, Default)]
struct Info {
    trace: Vec<TraceStep>,
    imprecise: bool,
}

#[derive(Default)]
struct Finding {
    definite: Option<Vec<TraceStep>>,
    maybe: bool,
}

/// Joins `incoming` into `current`, dropping every heap entailed by another.
/// Entailment is only attempted when the left side allocates at least as
/// many cells as the right side.
pub fn join(current: &StateSet, incoming: &StateSet) -> StateSet {
    let mut out: Vec<SymbolicHeap> = Vec::new();
    for h in current.iter().chain(incoming) {
        let h = canonicalize(h);
        if out.iter().any(|t| covers(t, &h)) {
            continue;
        }
        out.retain(|t| !covers(&h, t));
        out.push(h);
    }
    out.into_iter().collect()
}

/// `t` describes every model of `s`.
fn covers(t: &SymbolicHeap, s: &SymbolicHeap) -> bool {
    entails(s, t)
}

/// Entailment behind cheap filters: the allocation-count heuristic and a
/// syntactic comparison of what both sides say about program variables.
/// The filters only ever answer "no"; a spurious "no" keeps a redundant heap.
fn entails(lhs: &SymbolicHeap, rhs: &SymbolicHeap) -> bool {
    lhs == rhs || (lhs.alloc_count() >= rhs.alloc_count() && !clash(lhs, rhs) && check_entail(lhs, rhs))
}

/// The two heaps disagree on an alias, a nil test, an integer value, or a
/// field of a cell named by a program variable.
fn clash(lhs: &SymbolicHeap, rhs: &SymbolicHeap) -> bool {
    let progs: Vec<Var> = rhs.vars().into_iter().filter(Var::is_prog).collect();
    let same = |x: &Var, y: &Var| lhs.rep(x) == lhs.rep(y);
    for x in &progs {
        let rx = rhs.rep(x);
        if rx.is_nil() && !lhs.rep(x).is_nil() {
            return true;
        }
        if rx.is_prog() && rx != *x && !same(x, &rx) {
            return true;
        }
        if let Some(n) = rhs.int_value(&rx) {
            if ops::int_of(lhs, x) != Some(n) {
                return true;
            }
        }
    }
    for a in &rhs.spatial {
        let r = a.root();
        if !r.is_prog() {
            continue;
        }
        let l = lhs.atom_rooted_at(&lhs.rep(r)).map(|(_, b)| b);
        match (a, l) {
            (SpatialAtom::Freed(_), Some(SpatialAtom::Freed(_))) => {}
            (SpatialAtom::Freed(_), _) => return true,
            (SpatialAtom::PointsTo { fields, .. }, Some(b @ SpatialAtom::PointsTo { .. })) => {
                for (f, v) in fields {
                    let Some(w) = b.field(f) else { return true };
                    let fixed = v.is_nil() || v.is_prog();
                    if fixed && lhs.rep(w) != lhs.rep(v) {
                        return true;
                    }
                }
            }
            (SpatialAtom::PointsTo { .. }, Some(SpatialAtom::Freed(_)) | None) => return true,
            // Some model of the segment links the root to an unnamed interior cell.
            (SpatialAtom::PointsTo { .. }, Some(b)) => {
                let link = match b {
                    SpatialAtom::Ls { shape, .. } => &shape.next,
                    SpatialAtom::Dls { shape, .. } => &shape.next,
                    SpatialAtom::Nls { shape, .. } => &shape.next,
                    _ => continue,
                };
                if a.field(link).is_some_and(|v| v.is_nil() || v.is_prog()) {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}

/// Every heap of `s` is entailed by some heap of `t`; candidates are tried
/// in order of increasing difference in allocation counts.
pub fn is_fixpoint(s: &StateSet, t: &StateSet) -> bool {
    s.iter().all(|si| {
        let mut cands: Vec<&SymbolicHeap> = t.iter().filter(|tj| si.alloc_count() >= tj.alloc_count()).collect();
        cands.sort_by_key(|tj| si.alloc_count() - tj.alloc_count());
        cands.into_iter().any(|tj| entails(si, tj))
    })
}

/// A value passed to a callee.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArgValue {
    Ptr(Var),
    Int(i64),
}

/// A caller heap split at a call site.
struct Cut {
    pre: SymbolicHeap,
    frame: SymbolicHeap,
    /// Ghost variable to the caller value it stands for.
    back: BTreeMap<Var, Var>,
}

fn rename(h: &SymbolicHeap, map: &BTreeMap<Var, Var>) -> SymbolicHeap {
    let mut f = |v: &Var| map.get(v).cloned().unwrap_or_else(|| v.clone());
    let mut out = SymbolicHeap {
        exists: BTreeSet::new(),
        pure: h.pure.iter().map(|p| p.map_vars(&mut f)).collect(),
        spatial: h.spatial.iter().map(|a| a.map_vars(&mut f)).collect(),
    };
    out.exists = out.vars().into_iter().filter(Var::is_ex).collect();
    out
}

fn ghost_param(i: usize) -> Var {
    Var::prog(&format!("$p{i}"))
}

fn is_ghost(v: &Var) -> bool {
    v.is_prog() && (v.name().starts_with("$p") || v.name().starts_with("$c"))
}

/// Splits `h` into the part reachable from the arguments, renamed to ghost
/// variables, and the frame.
fn cut(h: &SymbolicHeap, formals: &[String], args: &[ArgValue], k: i64) -> Cut {
    let args: Vec<ArgValue> = args
        .iter()
        .map(|a| match a {
            ArgValue::Ptr(v) => ArgValue::Ptr(h.rep(v)),
            ArgValue::Int(n) => ArgValue::Int(*n),
        })
        .collect();
    let args = &args[..];
    let mut reached: BTreeSet<Var> = args
        .iter()
        .filter_map(|a| match a {
            ArgValue::Ptr(v) if !v.is_nil() => Some(h.rep(v)),
            ArgValue::Int(_) => None,
            ArgValue::Ptr(_) => None,
        })
        .collect();
    let mut local = vec![false; h.spatial.len()];
    loop {
        let mut changed = false;
        for (i, a) in h.spatial.iter().enumerate() {
            let entry = match a {
                SpatialAtom::Dls { first, last, .. } => reached.contains(first) || reached.contains(last),
                _ => reached.contains(a.root()),
            };
            if !local[i] && entry {
                local[i] = true;
                changed = true;
                reached.extend(a.vars().into_iter().cloned());
            }
        }
        if !changed {
            break;
        }
    }
    let mut lpart = SymbolicHeap::emp();
    let mut frame = SymbolicHeap::emp();
    for (a, l) in h.spatial.iter().zip(&local) {
        if *l {
            lpart.spatial.push(a.clone());
        } else {
            frame.spatial.push(a.clone());
        }
    }
    for p in &h.pure {
        if p.vars().into_iter().all(|v| v.is_nil() || reached.contains(v)) {
            lpart.pure.insert(p.clone());
        } else {
            frame.pure.insert(p.clone());
        }
    }
    let frame_vars = frame.vars();
    let mut map: BTreeMap<Var, Var> = BTreeMap::new();
    let mut extra = Vec::new();
    for (i, a) in args.iter().enumerate() {
        let g = ghost_param(i);
        match a {
            ArgValue::Ptr(v) if v.is_nil() => extra.push(PureAtom::eq(g, Var::Nil)),
            ArgValue::Ptr(v) => {
                let v = h.rep(v);
                match map.get(&v) {
                    Some(other) => extra.push(PureAtom::eq(g, other.clone())),
                    None => {
                        map.insert(v, g);
                    }
                }
            }
            ArgValue::Int(n) if n.abs() <= k => extra.push(PureAtom::IntVal(g, *n)),
            ArgValue::Int(_) => {}
        }
    }
    let mut j = 0;
    for v in lpart.vars() {
        if !v.is_nil() && !map.contains_key(&v) && (v.is_prog() || frame_vars.contains(&v)) {
            map.insert(v, Var::prog(&format!("$c{j}")));
            j += 1;
        }
    }
    let mut pre = rename(&lpart, &map);
    for p in extra {
        pre = pre.with_pure(p);
    }
    for (i, f) in formals.iter().enumerate() {
        pre = pre.with_pure(PureAtom::eq(Var::prog(f), ghost_param(i)));
    }
    let pre = canonicalize(&simplify(&pre).expect("a part of a consistent heap is consistent"));
    let mut back: BTreeMap<Var, Var> = map.into_iter().map(|(v, g)| (g, v)).collect();
    for (i, a) in args.iter().enumerate() {
        if let ArgValue::Ptr(v) = a {
            if v.is_nil() {
                back.insert(ghost_param(i), Var::Nil);
            }
        }
    }
    frame.exists = frame.vars().into_iter().filter(Var::is_ex).collect();
    Cut { pre, frame, back }
}

/// The caller heap after the call: the frame joined with one exit heap of
/// the callee. The return value is bound to `$r`.
fn combine(frame: &SymbolicHeap, back: &BTreeMap<Var, Var>, post: &SymbolicHeap) -> Option<SymbolicHeap> {
    let exs: Vec<Var> = post.exists.iter().cloned().collect();
    let mut probe = frame.clone();
    for v in back.values() {
        if v.is_ex() {
            probe.exists.insert(v.clone());
        }
    }
    let fresh = ops::fresh(&probe, exs.len());
    let mut map: BTreeMap<Var, Var> = exs.into_iter().zip(fresh).collect();
    let mut extra = Vec::new();
    for v in post.vars() {
        if is_ghost(&v) {
            match back.get(&v) {
                Some(c) => {
                    map.insert(v, c.clone());
                }
                // An integer literal argument: forget it.
                None => extra.push(v),
            }
        }
    }
    map.insert(Var::prog(RET), Var::prog(CALL_RESULT));
    let mut q = rename(post, &map);
    for v in extra {
        q.pure.retain(|p| !p.vars().contains(&&v));
        q.spatial.iter().for_each(|a| debug_assert!(!a.vars().contains(&&v)));
    }
    let mut out = frame.clone();
    out.pure.extend(q.pure);
    out.spatial.extend(q.spatial);
    simplify(&out)
}

/// Applies a cached summary at a call site if the part of `h` reachable
/// from `args` matches its precondition exactly, after normalization and
/// renaming of existentials. The return value is discarded.
pub fn apply_summary(s: &Summary, formals: &[String], args: &[ArgValue], h: &SymbolicHeap, k: i64) -> Option<StateSet> {
    let c = cut(h, formals, args, k);
    if c.pre != canonicalize(&s.pre) {
        return None;
    }
    Some(
        s.post
            .iter()
            .filter_map(|(q, _)| combine(&c.frame, &c.back, q))
            .map(|h| canonicalize(&forget(&h, &Var::prog(CALL_RESULT))))
            .collect(),
    )
}

fn eval_expr(h: &SymbolicHeap, e: &Expr) -> Option<i128> {
    let atom = |a: &Atom| -> Option<i128> {
        match a {
            Atom::Int(n) => Some(*n as i128),
            Atom::Var(x) => ops::int_of(h, &Var::prog(x)).map(i128::from),
            Atom::Null => None,
        }
    };
    let mut acc = atom(&e.first)?;
    for (op, a) in &e.rest {
        let v = atom(a)?;
        acc = match op {
            ArithOp::Add => acc + v,
            ArithOp::Sub => acc - v,
        };
    }
    Some(acc)
}

fn ptr_value(a: &Atom) -> Var {
    match a {
        Atom::Null => Var::Nil,
        Atom::Var(x) => Var::prog(x),
        Atom::Int(_) => unreachable!("integers are not pointers"),
    }
}

/// Rank of every node in reverse postorder.
fn rpo(cfg: &Cfg) -> Vec<usize> {
    let mut seen = vec![false; cfg.nodes];
    let mut post = Vec::new();
    let mut stack = vec![(cfg.entry, 0usize)];
    seen[cfg.entry] = true;
    while let Some((v, k)) = stack.pop() {
        match cfg.out_edges(v).nth(k) {
            None => post.push(v),
            Some((_, e)) => {
                stack.push((v, k + 1));
                if !seen[e.dst] {
                    seen[e.dst] = true;
                    stack.push((e.dst, 0));
                }
            }
        }
    }
    let mut rank = vec![0; cfg.nodes];
    for (i, v) in post.iter().rev().enumerate() {
        rank[*v] = i;
    }
    rank
}

type States = BTreeMap<SymbolicHeap, Info>;

pub struct Engine<'p> {
    program: &'p Program,
    config: Config,
    abstraction: Abstraction,
    cfgs: BTreeMap<String, Rc<Cfg>>,
    summaries: HashMap<(String, SymbolicHeap, bool), Rc<Summary>>,
    findings: BTreeMap<Property, Finding>,
    stats: Stats,
    dumps: Vec<Value>,
}

impl<'p> Engine<'p> {
    pub fn new(program: &'p Program, config: Config) -> Engine<'p> {
        let kinds = classify_structs(program);
        let mut abstraction = Abstraction {
            sll: Vec::new(),
            dll: Vec::new(),
            nll: Vec::new(),
            length_limit: config.length_limit,
        };
        for kind in kinds.values() {
            match kind {
                StructKind::Sll { next } => abstraction.sll.push(SllShape { next: next.as_str().into() }),
                StructKind::Dll { next, prev } => abstraction.dll.push(DllShape {
                    next: next.as_str().into(),
                    prev: prev.as_str().into(),
                }),
                StructKind::Nll { .. } | StructKind::Plain => {}
            }
        }
        for s in &program.structs {
            if let StructKind::Nll { next, nested } = &kinds[&s.name] {
                let Some(crate::frontend::FieldType::Ptr(target)) = s.field(nested) else { continue };
                if let Some(StructKind::Sll { next: inner }) = kinds.get(target) {
                    abstraction.nll.push(NllShape {
                        next: next.as_str().into(),
                        nested: nested.as_str().into(),
                        inner: inner.as_str().into(),
                    });
                }
            }
        }
        abstraction.sll.sort();
        abstraction.sll.dedup();
        abstraction.dll.sort();
        abstraction.dll.dedup();
        abstraction.nll.sort();
        abstraction.nll.dedup();
        let cfgs = program
            .functions
            .iter()
            .map(|f| (f.name.clone(), Rc::new(Cfg::build(f))))
            .collect();
        Engine {
            program,
            config,
            abstraction,
            cfgs,
            summaries: HashMap::new(),
            findings: Property::ALL.into_iter().map(|p| (p, Finding::default())).collect(),
            stats: Stats::default(),
            dumps: Vec::new(),
        }
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    /// Analyzes the entry function from the empty heap.
    pub fn run(mut self) -> Result<Analysis, EngineError> {
        let main = self
            .program
            .function(&self.program.entry)
            .expect("validated programs have an entry function");
        let exits = match self.analyze(main, SymbolicHeap::emp(), Info::default()) {
            Ok(exits) => exits,
            Err(EngineError::Unsupported { .. }) => {
                return Ok(Analysis {
                    verdicts: Property::ALL
                        .into_iter()
                        .map(|property| Verdict {
                            property,
                            outcome: Outcome::Error,
                            trace: None,
                        })
                        .collect(),
                    stats: self.stats,
                    exit_states: StateSet::new(),
                    states: Value::Array(self.dumps),
                })
            }
            Err(e) => return Err(e),
        };
        let mut exit_states = StateSet::new();
        for (h, info) in exits {
            exit_states.insert(h.clone());
            let mut out = h;
            for v in out.free_vars() {
                out = forget(&out, &v);
            }
            self.collect(out, &info);
        }
        let verdicts = Property::ALL
            .into_iter()
            .map(|property| {
                let f = &self.findings[&property];
                let (outcome, trace) = match (&f.definite, f.maybe) {
                    (Some(t), _) => (Outcome::False, Some(t.clone())),
                    (None, true) => (Outcome::Unknown, None),
                    (None, false) => (Outcome::True, None),
                };
                Verdict {
                    property,
                    outcome,
                    trace,
                }
            })
            .collect();
        Ok(Analysis {
            verdicts,
            stats: self.stats,
            exit_states,
            states: Value::Array(self.dumps),
        })
    }

    fn report(&mut self, p: Property, definite: bool, info: &Info) {
        let f = self.findings.get_mut(&p).expect("every property has a finding");
        if definite && !info.imprecise {
            f.definite.get_or_insert_with(|| info.trace.clone());
        } else {
            f.maybe = true;
        }
    }

    /// Drops unreachable atoms, reporting lost cells.
    fn collect(&mut self, h: SymbolicHeap, info: &Info) -> SymbolicHeap {
        let (out, lost, maybe) = collect_garbage(&h);
        if lost {
            self.report(Property::ValidMemtrack, true, info);
        } else if maybe {
            self.report(Property::ValidMemtrack, false, info);
        }
        out
    }

    fn deref_error(&mut self, p: Property, e: DerefError, info: &Info) {
        self.report(p, e != DerefError::Unallocated, info);
    }

    /// Rejects dereferences of structs with three or more self-references.
    fn check_deref(&self, f: &FunDef, x: &str, line: usize) -> Result<(), EngineError> {
        if let Some(Type::Ptr(s)) = f.var_type(x) {
            if let Some(d) = self.program.struct_def(s) {
                if d.pointer_fields().filter(|(_, t)| *t == s).count() >= 3 {
                    return Err(EngineError::Unsupported {
                        line,
                        feature: format!("struct {s} with three or more self-referential fields"),
                    });
                }
            }
        }
        Ok(())
    }

    fn analyze(&mut self, f: &FunDef, pre: SymbolicHeap, info: Info) -> Result<Vec<(SymbolicHeap, Info)>, EngineError> {
        *self.stats.analyses.entry(f.name.clone()).or_default() += 1;
        let cfg = Rc::clone(&self.cfgs[&f.name]);
        let rank = rpo(&cfg);
        let live = cfg.live_vars();
        let mut states: Vec<States> = vec![States::new(); cfg.nodes];
        let mut pending: Vec<BTreeSet<SymbolicHeap>> = vec![BTreeSet::new(); cfg.nodes];
        let mut visits = vec![0usize; cfg.nodes];
        let mut work: BTreeSet<(usize, Node)> = BTreeSet::new();
        if self.insert(&mut states[cfg.entry], &mut pending[cfg.entry], pre, info) {
            work.insert((rank[cfg.entry], cfg.entry));
        }
        while let Some((_, v)) = work.pop_first() {
            let todo = std::mem::take(&mut pending[v]);
            *self.stats.node_visits.entry(f.name.clone()).or_default() += 1;
            if cfg.loop_heads.contains(&v) {
                visits[v] += 1;
                let line = cfg.out_edges(v).map(|(_, e)| e.line).next().unwrap_or(f.line);
                let key = format!("{}:{line}", f.name);
                let seen = self.stats.loop_iterations.entry(key).or_default();
                *seen = (*seen).max(visits[v]);
                if visits[v] > self.config.loop_ceiling {
                    return Err(EngineError::LoopCeiling {
                        function: f.name.clone(),
                        line,
                        limit: self.config.loop_ceiling,
                    });
                }
            }
            for h in todo {
                let Some(info) = states[v].get(&h).cloned() else { continue };
                for (_, e) in cfg.out_edges(v) {
                    for (s, i) in self.transfer(f, e, &h, &info)? {
                        let s = if cfg.loop_heads.contains(&e.dst) { forget_dead(&s, &live[e.dst], f) } else { s };
                        let s = if self.config.abstraction && cfg.loop_heads.contains(&e.dst) && visits[e.dst] >= 1 {
                            self.abstraction.fold_all(&s, &BTreeSet::new())
                        } else {
                            s
                        };
                        if self.insert(&mut states[e.dst], &mut pending[e.dst], s, i) {
                            work.insert((rank[e.dst], e.dst));
                        }
                    }
                }
            }
        }
        self.dumps.push(json!({
            "function": f.name,
            "pre": pre_string(&states[cfg.entry]),
            "locations": states
                .iter()
                .enumerate()
                .map(|(n, s)| (n.to_string(), Value::from(s.keys().map(|h| h.to_string()).collect::<Vec<_>>())))
                .collect::<serde_json::Map<String, Value>>(),
        }));
        Ok(states[cfg.exit].iter().map(|(h, i)| (h.clone(), i.clone())).collect())
    }

    /// Adds `h` to `states` unless an existing heap covers it; removes the
    /// heaps it covers. Returns whether `h` was added.
    fn insert(&self, states: &mut States, pending: &mut BTreeSet<SymbolicHeap>, h: SymbolicHeap, info: Info) -> bool {
        let h = canonicalize(&h);
        if let Some(old) = states.get_mut(&h) {
            old.imprecise &= info.imprecise;
            return false;
        }
        let mut order: Vec<&SymbolicHeap> = states.keys().filter(|t| h.alloc_count() >= t.alloc_count()).collect();
        order.sort_by_key(|t| h.alloc_count() - t.alloc_count());
        if let Some(t) = order.into_iter().find(|t| entails(&h, t)).cloned() {
            if let Some(old) = states.get_mut(&t) {
                old.imprecise &= info.imprecise;
            }
            return false;
        }
        let covered: Vec<SymbolicHeap> = states
            .keys()
            .filter(|t| entails(t, &h))
            .cloned()
            .collect();
        for t in covered {
            states.remove(&t);
            pending.remove(&t);
        }
        states.insert(h.clone(), info);
        pending.insert(h);
        true
    }

    fn transfer(
        &mut self,
        f: &FunDef,
        e: &Edge,
        h: &SymbolicHeap,
        info: &Info,
    ) -> Result<Vec<(SymbolicHeap, Info)>, EngineError> {
        let mut info = info.clone();
        if e.label != Label::Skip {
            info.trace.push(TraceStep {
                function: f.name.clone(),
                line: e.line,
            });
        }
        let out: Vec<(SymbolicHeap, Info)> = match &e.label {
            Label::Skip => vec![(h.clone(), info)],
            Label::Assume(c) => self.assume(f, c, true, h, info),
            Label::AssumeNot(c) => self.assume(f, c, false, h, info),
            Label::Stmt(s) => match &s.kind {
                StmtKind::Assign(x, Rhs::Call(g, args)) => self.call(g, args, Some(x), h, info)?,
                StmtKind::Call(g, args) => self.call(g, args, None, h, info)?,
                StmtKind::Assign(x, r) => self
                    .assign(f, &Var::prog(x), r, h, &info, e.line)?
                    .into_iter()
                    .map(|h| (h, info.clone()))
                    .collect(),
                StmtKind::Store(x, fld, r) => self.store(f, x, fld, r, h, &info, e.line)?,
                StmtKind::Free(x) => self.free(f, x, h, &info, e.line)?,
                StmtKind::Return(r) => {
                    let ret = Var::prog(RET);
                    let out = match r {
                        None => h.clone(),
                        Some(ex) if ex.rest.is_empty() => match &ex.first {
                            Atom::Int(n) => self.set_int(h, &ret, Some(*n as i128)),
                            a => set_ptr(h, &ret, ptr_value(a)),
                        },
                        Some(ex) => self.set_int(h, &ret, eval_expr(h, ex)),
                    };
                    vec![(out, info)]
                }
                StmtKind::If(..) | StmtKind::While(..) => unreachable!("control flow is lowered to edges"),
            },
        };
        Ok(out
            .into_iter()
            .map(|(h, i)| {
                let h = self.collect(h, &i);
                (h, i)
            })
            .collect())
    }

    fn set_int(&self, h: &SymbolicHeap, x: &Var, v: Option<i128>) -> SymbolicHeap {
        let out = forget(h, x);
        match v {
            Some(v) if v.abs() <= self.config.int_range as i128 => out.with_pure(PureAtom::IntVal(x.clone(), v as i64)),
            _ => out,
        }
    }

    fn assign(
        &mut self,
        f: &FunDef,
        x: &Var,
        r: &Rhs,
        h: &SymbolicHeap,
        info: &Info,
        line: usize,
    ) -> Result<Vec<SymbolicHeap>, EngineError> {
        let one = |h: SymbolicHeap| Ok(vec![h]);
        match r {
            Rhs::Null => one(set_ptr(h, x, Var::Nil)),
            Rhs::Int(n) => one(self.set_int(h, x, Some(*n as i128))),
            Rhs::Var(y) => one(set_ptr(h, x, Var::prog(y))),
            Rhs::Nondet => one(forget(h, x)),
            Rhs::Arith(ex) => one(self.set_int(h, x, eval_expr(h, ex))),
            Rhs::Malloc(s) => {
                let def = self.program.struct_def(s).expect("validated struct");
                let ptrs: Vec<&str> = def.pointer_fields().map(|(n, _)| n).collect();
                let base = forget(h, x);
                let vals = ops::fresh(&base, ptrs.len());
                let cell = SpatialAtom::points_to(x.clone(), ptrs.iter().map(|n| (n.to_string().into(), Var::Nil)).zip(vals).map(|((n, _), v)| (n, v)));
                one(simplify(&base.with_spatial(cell)).expect("a fresh cell is consistent"))
            }
            Rhs::Load(y, fld) => {
                self.check_deref(f, y, line)?;
                let mut out = Vec::new();
                for b in materialize(h, &Var::prog(y)) {
                    match b {
                        Ok(b) => {
                            let r = b.rep(&Var::prog(y));
                            let v = b
                                .atom_rooted_at(&r)
                                .and_then(|(_, a)| a.field(fld).cloned());
                            out.push(match v {
                                Some(v) => set_ptr(&b, x, v),
                                None => forget(&b, x),
                            });
                        }
                        Err((e, _)) => self.deref_error(Property::ValidDeref, e, info),
                    }
                }
                Ok(out)
            }
            Rhs::Call(..) => unreachable!("calls are handled by the caller"),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn store(
        &mut self,
        f: &FunDef,
        x: &str,
        fld: &str,
        r: &Rhs,
        h: &SymbolicHeap,
        info: &Info,
        line: usize,
    ) -> Result<Vec<(SymbolicHeap, Info)>, EngineError> {
        let value = match r {
            Rhs::Null => Some(Var::Nil),
            Rhs::Var(y) => Some(Var::prog(y)),
            Rhs::Int(_) | Rhs::Arith(_) | Rhs::Nondet => None,
            Rhs::Load(..) | Rhs::Malloc(_) | Rhs::Call(..) => {
                // Evaluate into a temporary, store it, then drop it.
                let t = Var::prog(TEMP);
                let firsts: Vec<(SymbolicHeap, Info)> = match r {
                    Rhs::Call(g, args) => self.call(g, args, Some(TEMP), h, info.clone())?,
                    _ => self
                        .assign(f, &t, r, h, info, line)?
                        .into_iter()
                        .map(|h| (h, info.clone()))
                        .collect(),
                };
                let mut out = Vec::new();
                for (h1, i1) in firsts {
                    for (h2, i2) in self.store(f, x, fld, &Rhs::Var(TEMP.to_string()), &h1, &i1, line)? {
                        out.push((forget(&h2, &t), i2));
                    }
                }
                return Ok(out);
            }
        };
        self.check_deref(f, x, line)?;
        let mut out = Vec::new();
        for b in materialize(h, &Var::prog(x)) {
            match b {
                Ok(b) => {
                    let r = b.rep(&Var::prog(x));
                    let (i, a) = b.atom_rooted_at(&r).expect("materialized cell");
                    let mut b2 = b.clone();
                    if let (SpatialAtom::PointsTo { src, fields }, Some(v)) = (a, &value) {
                        if fields.iter().any(|(n, _)| &**n == fld) {
                            let fields = fields
                                .iter()
                                .map(|(n, old)| (n.clone(), if &**n == fld { v.clone() } else { old.clone() }))
                                .collect::<Vec<_>>();
                            b2.spatial[i] = SpatialAtom::points_to(src.clone(), fields);
                        }
                    }
                    if let Some(b2) = simplify(&b2) {
                        out.push((b2, info.clone()));
                    }
                }
                Err((e, _)) => self.deref_error(Property::ValidDeref, e, info),
            }
        }
        Ok(out)
    }

    fn free(
        &mut self,
        f: &FunDef,
        x: &str,
        h: &SymbolicHeap,
        info: &Info,
        line: usize,
    ) -> Result<Vec<(SymbolicHeap, Info)>, EngineError> {
        self.check_deref(f, x, line)?;
        let mut out = Vec::new();
        for b in materialize(h, &Var::prog(x)) {
            match b {
                Ok(b) => {
                    let r = b.rep(&Var::prog(x));
                    let (i, _) = b.atom_rooted_at(&r).expect("materialized cell");
                    let mut b2 = b.clone();
                    b2.spatial[i] = SpatialAtom::Freed(r);
                    if let Some(b2) = simplify(&b2) {
                        out.push((b2, info.clone()));
                    }
                }
                // free(NULL) does nothing.
                Err((DerefError::Null, b)) => out.push((b, info.clone())),
                Err((e, _)) => self.deref_error(Property::ValidFree, e, info),
            }
        }
        Ok(out)
    }

    fn is_int(f: &FunDef, a: &Atom) -> bool {
        match a {
            Atom::Int(_) => true,
            Atom::Null => false,
            Atom::Var(x) => f.var_type(x) == Some(&Type::Int),
        }
    }

    fn assume(&mut self, f: &FunDef, c: &Cond, positive: bool, h: &SymbolicHeap, info: Info) -> Vec<(SymbolicHeap, Info)> {
        let Cond::Cmp(a, op, b) = c else {
            return vec![(h.clone(), info)];
        };
        if Self::is_int(f, a) || Self::is_int(f, b) {
            let val = |x: &Atom| match x {
                Atom::Int(n) => Some(*n),
                Atom::Var(v) => ops::int_of(h, &Var::prog(v)),
                Atom::Null => None,
            };
            return match (val(a), val(b)) {
                (Some(va), Some(vb)) => {
                    let holds = match op {
                        CmpOp::Eq => va == vb,
                        CmpOp::Neq => va != vb,
                        CmpOp::Lt => va < vb,
                        CmpOp::Leq => va <= vb,
                    };
                    if holds == positive {
                        vec![(h.clone(), info)]
                    } else {
                        Vec::new()
                    }
                }
                _ => vec![(
                    h.clone(),
                    Info {
                        imprecise: true,
                        ..info
                    },
                )],
            };
        }
        let (va, vb) = (ptr_value(a), ptr_value(b));
        let eq = (*op == CmpOp::Eq) == positive;
        let atom = if eq { PureAtom::eq(va, vb) } else { PureAtom::neq(va, vb) };
        match simplify(&h.clone().with_pure(atom)) {
            Some(h2) if check_sat(&h2).is_sat() => vec![(h2, info)],
            _ => Vec::new(),
        }
    }

    fn call(
        &mut self,
        g: &str,
        args: &[Atom],
        target: Option<&str>,
        h: &SymbolicHeap,
        info: Info,
    ) -> Result<Vec<(SymbolicHeap, Info)>, EngineError> {
        let callee = self.program.function(g).expect("validated call");
        let formals: Vec<String> = callee.params.iter().map(|(_, n)| n.clone()).collect();
        let values: Vec<ArgValue> = args
            .iter()
            .map(|a| match a {
                Atom::Int(n) => ArgValue::Int(*n),
                a => ArgValue::Ptr(ptr_value(a)),
            })
            .collect();
        let c = cut(h, &formals, &values, self.config.int_range);
        let key = (g.to_string(), c.pre.clone(), info.imprecise);
        let summary = match self.summaries.get(&key) {
            Some(s) => Rc::clone(s),
            None => {
                let exits = self.analyze(callee, c.pre.clone(), info.clone())?;
                let mut post: BTreeMap<SymbolicHeap, bool> = BTreeMap::new();
                for (q, qi) in exits {
                    let mut q = q;
                    for v in q.free_vars() {
                        if !is_ghost(&v) && v.name() != RET {
                            q = forget(&q, &v);
                        }
                    }
                    let q = canonicalize(&self.collect(q, &qi));
                    let flag = post.entry(q).or_insert(qi.imprecise);
                    *flag &= qi.imprecise;
                }
                let s = Rc::new(Summary {
                    function: g.to_string(),
                    pre: c.pre.clone(),
                    post: post.into_iter().collect(),
                });
                self.summaries.insert(key, Rc::clone(&s));
                s
            }
        };
        let r = Var::prog(CALL_RESULT);
        let mut out = Vec::new();
        for (q, qi) in &summary.post {
            let Some(mut res) = combine(&c.frame, &c.back, q) else { continue };
            if let Some(x) = target {
                let x = Var::prog(x);
                res = forget(&res, &x).with_pure(PureAtom::eq(x, r.clone()));
                match simplify(&res) {
                    Some(r) => res = r,
                    None => continue,
                }
            }
            res = forget(&res, &r);
            out.push((
                res,
                Info {
                    trace: info.trace.clone(),
                    imprecise: info.imprecise || *qi,
                },
            ));
        }
        Ok(out)
    }
}

fn set_ptr(h: &SymbolicHeap, x: &Var, v: Var) -> SymbolicHeap {
    if *x == v {
        return h.clone();
    }
    // Route the value through a temporary so that `v` survives forgetting `x`.
    let t = Var::prog(MOVE);
    let h1 = simplify(&h.clone().with_pure(PureAtom::eq(t.clone(), v))).expect("fresh temporary");
    let h2 = forget(&h1, x).with_pure(PureAtom::eq(x.clone(), t.clone()));
    forget(&simplify(&h2).expect("fresh variable"), &t)
}

/// Forgets the locals and parameters of `f` that are dead at a location.
fn forget_dead(h: &SymbolicHeap, live: &BTreeSet<String>, f: &FunDef) -> SymbolicHeap {
    let mut out = h.clone();
    for (_, x) in f.params.iter().chain(&f.locals) {
        if !live.contains(x) {
            out = forget(&out, &Var::prog(x));
        }
    }
    out
}

fn pre_string(s: &States) -> Vec<String> {
    s.keys().map(|h| h.to_string()).collect()
}

/// Analyzes `p` from its entry function.
pub fn analyze_program(p: &Program, config: Config) -> Result<Analysis, EngineError> {
    Engine::new(p, config).run()
}
