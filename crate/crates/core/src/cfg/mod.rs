//! Control-flow graphs with one statement or branch guard per edge.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::frontend::{Atom, Cond, FunDef, Rhs, Stmt, StmtKind};

pub type Node = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Label {
    /// A simple statement; never `If` or `While`.
    Stmt(Stmt),
    Assume(Cond),
    AssumeNot(Cond),
    /// Falls through an empty body, or leads from a fresh entry into a loop.
    Skip,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: Node,
    pub label: Label,
    pub dst: Node,
    pub line: usize,
}

/// Nodes are `0..nodes`; every node is reachable from `entry`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub function: String,
    pub nodes: usize,
    pub edges: Vec<Edge>,
    pub entry: Node,
    pub exit: Node,
    pub loop_heads: BTreeSet<Node>,
}

struct Builder {
    nodes: usize,
    edges: Vec<Edge>,
    exit: Node,
}

impl Builder {
    fn node(&mut self) -> Node {
        self.nodes += 1;
        self.nodes - 1
    }

    fn edge(&mut self, src: Node, label: Label, dst: Node, line: usize) {
        self.edges.push(Edge { src, label, dst, line });
    }

    /// Lowers `body` so that it runs from `from` and ends at `to`.
    fn seq(&mut self, body: &[Stmt], from: Node, to: Node, line: usize) {
        if body.is_empty() {
            self.edge(from, Label::Skip, to, line);
            return;
        }
        let mut cur = from;
        for (i, s) in body.iter().enumerate() {
            if let StmtKind::Return(_) = s.kind {
                self.edge(cur, Label::Stmt(s.clone()), self.exit, s.line);
                return;
            }
            let next = if i + 1 == body.len() { to } else { self.node() };
            self.stmt(s, cur, next);
            cur = next;
        }
    }

    /// Like `seq`, but an empty body adds no edge and yields `to` directly.
    fn branch(&mut self, body: &[Stmt], to: Node, line: usize) -> Node {
        if body.is_empty() {
            return to;
        }
        let start = self.node();
        self.seq(body, start, to, line);
        start
    }

    fn stmt(&mut self, s: &Stmt, from: Node, to: Node) {
        match &s.kind {
            StmtKind::If(c, t, e) => {
                let t = self.branch(t, to, s.line);
                self.edge(from, Label::Assume(c.clone()), t, s.line);
                let e = self.branch(e.as_deref().unwrap_or_default(), to, s.line);
                self.edge(from, Label::AssumeNot(c.clone()), e, s.line);
            }
            StmtKind::While(c, b) => {
                let b = self.branch(b, from, s.line);
                self.edge(from, Label::Assume(c.clone()), b, s.line);
                self.edge(from, Label::AssumeNot(c.clone()), to, s.line);
            }
            _ => self.edge(from, Label::Stmt(s.clone()), to, s.line),
        }
    }
}

impl Cfg {
    pub fn build(f: &FunDef) -> Cfg {
        let mut b = Builder {
            nodes: 2,
            edges: Vec::new(),
            exit: 1,
        };
        b.seq(&f.body, 0, 1, f.line);
        let mut entry = 0;
        if b.edges.iter().any(|e| e.dst == 0) {
            // A loop at the start of the body: keep the entry free of incoming edges.
            entry = b.node();
            b.edge(entry, Label::Skip, 0, f.line);
        }
        let mut cfg = Cfg {
            function: f.name.clone(),
            nodes: b.nodes,
            edges: b.edges,
            entry,
            exit: 1,
            loop_heads: BTreeSet::new(),
        };
        cfg.prune();
        cfg.loop_heads = cfg.back_edges().into_iter().map(|i| cfg.edges[i].dst).collect();
        cfg
    }

    /// Drops nodes after a `return` and renumbers the rest in discovery order.
    fn prune(&mut self) {
        let mut order = vec![usize::MAX; self.nodes];
        let mut queue = vec![self.entry];
        order[self.entry] = 0;
        let mut n = 1;
        while let Some(v) = queue.pop() {
            for e in self.edges.iter().filter(|e| e.src == v) {
                if order[e.dst] == usize::MAX {
                    order[e.dst] = n;
                    n += 1;
                    queue.push(e.dst);
                }
            }
        }
        self.edges.retain(|e| order[e.src] != usize::MAX);
        for e in &mut self.edges {
            e.src = order[e.src];
            e.dst = order[e.dst];
        }
        self.exit = order[self.exit];
        self.entry = 0;
        self.nodes = n;
    }

    pub fn out_edges(&self, v: Node) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.src == v)
    }

    /// Indices of edges closing a cycle in a depth-first walk from `entry`
    /// that follows edges in order.
    pub fn back_edges(&self) -> BTreeSet<usize> {
        // 0 unvisited, 1 on the stack, 2 finished.
        let mut state = vec![0u8; self.nodes];
        let mut out = BTreeSet::new();
        let mut stack: Vec<(Node, usize)> = vec![(self.entry, 0)];
        state[self.entry] = 1;
        while let Some((v, k)) = stack.pop() {
            let next = self.out_edges(v).nth(k);
            match next {
                None => state[v] = 2,
                Some((i, e)) => {
                    stack.push((v, k + 1));
                    match state[e.dst] {
                        0 => {
                            state[e.dst] = 1;
                            stack.push((e.dst, 0));
                        }
                        1 => {
                            out.insert(i);
                        }
                        _ => {}
                    }
                }
            }
        }
        out
    }

    /// Variables that some path from each node reads before writing.
    pub fn live_vars(&self) -> Vec<BTreeSet<String>> {
        let mut live = vec![BTreeSet::new(); self.nodes];
        let mut changed = true;
        while changed {
            changed = false;
            for e in self.edges.iter().rev() {
                let (defs, uses) = def_use(&e.label);
                let mut l: BTreeSet<String> = live[e.dst].iter().filter(|v| !defs.contains(v)).cloned().collect();
                l.extend(uses);
                let before = live[e.src].len();
                live[e.src].extend(l);
                changed |= live[e.src].len() != before;
            }
        }
        live
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph \"{}\" {{", self.function);
        for v in 0..self.nodes {
            let shape = if v == self.entry || v == self.exit {
                "doublecircle"
            } else if self.loop_heads.contains(&v) {
                "box"
            } else {
                "circle"
            };
            let _ = writeln!(s, "  n{v} [shape={shape}];");
        }
        for e in &self.edges {
            let label = match &e.label {
                Label::Stmt(st) => st.head(),
                Label::Assume(c) => format!("[{c}]"),
                Label::AssumeNot(c) => format!("[!({c})]"),
                Label::Skip => "skip".to_string(),
            };
            let _ = writeln!(
                s,
                "  n{} -> n{} [label=\"{}\"];",
                e.src,
                e.dst,
                label.replace('\\', "\\\\").replace('"', "\\\"")
            );
        }
        s.push_str("}\n");
        s
    }
}

fn atom_var(a: &Atom) -> Option<String> {
    match a {
        Atom::Var(x) => Some(x.clone()),
        Atom::Null | Atom::Int(_) => None,
    }
}

fn cond_vars(c: &Cond) -> Vec<String> {
    match c {
        Cond::Cmp(a, _, b) => atom_var(a).into_iter().chain(atom_var(b)).collect(),
        Cond::Nondet => Vec::new(),
    }
}

/// Variables an edge writes and reads.
fn def_use(label: &Label) -> (Vec<String>, Vec<String>) {
    let rhs_uses = |r: &Rhs| -> Vec<String> {
        match r {
            Rhs::Var(y) | Rhs::Load(y, _) => vec![y.clone()],
            Rhs::Call(_, args) => args.iter().filter_map(atom_var).collect(),
            Rhs::Arith(e) => atom_var(&e.first).into_iter().chain(e.rest.iter().filter_map(|(_, a)| atom_var(a))).collect(),
            Rhs::Null | Rhs::Int(_) | Rhs::Malloc(_) | Rhs::Nondet => Vec::new(),
        }
    };
    match label {
        Label::Assume(c) | Label::AssumeNot(c) => (Vec::new(), cond_vars(c)),
        Label::Skip => (Vec::new(), Vec::new()),
        Label::Stmt(s) => match &s.kind {
            StmtKind::Assign(x, r) => (vec![x.clone()], rhs_uses(r)),
            StmtKind::Store(x, _, r) => {
                let mut u = rhs_uses(r);
                u.push(x.clone());
                (Vec::new(), u)
            }
            StmtKind::Free(x) => (Vec::new(), vec![x.clone()]),
            StmtKind::Return(e) => (
                Vec::new(),
                e.iter()
                    .flat_map(|e| atom_var(&e.first).into_iter().chain(e.rest.iter().filter_map(|(_, a)| atom_var(a))))
                    .collect(),
            ),
            StmtKind::Call(_, args) => (Vec::new(), args.iter().filter_map(atom_var).collect()),
            StmtKind::If(..) | StmtKind::While(..) => (Vec::new(), Vec::new()),
        },
    }
}
