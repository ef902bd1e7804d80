mod common;

use std::collections::BTreeSet;

use common::program::{body, branch_count, main_with};
use proptest::prelude::*;
use shapeck::cfg::{Cfg, Label, Node};
use shapeck::frontend::{parse_program, FunDef, Stmt, StmtKind};

fn cfg_of(src: &str) -> Cfg {
    let p = parse_program(src).unwrap();
    Cfg::build(p.function(&p.entry).unwrap())
}

/// Nodes reachable from the entry, never passing through `avoid`.
fn reachable(g: &Cfg, avoid: Option<Node>) -> BTreeSet<Node> {
    let mut seen = BTreeSet::new();
    if avoid == Some(g.entry) {
        return seen;
    }
    let mut stack = vec![g.entry];
    seen.insert(g.entry);
    while let Some(v) = stack.pop() {
        for e in g.edges.iter().filter(|e| e.src == v) {
            if Some(e.dst) != avoid && seen.insert(e.dst) {
                stack.push(e.dst);
            }
        }
    }
    seen
}

/// `d` dominates `n` iff removing `d` cuts `n` off from the entry.
fn dominates(g: &Cfg, d: Node, n: Node) -> bool {
    d == n || !reachable(g, Some(d)).contains(&n)
}

fn acyclic_without_back_edges(g: &Cfg) -> bool {
    let back = g.back_edges();
    let kept: Vec<_> = g.edges.iter().enumerate().filter(|(i, _)| !back.contains(i)).map(|(_, e)| e).collect();
    let mut indeg = vec![0usize; g.nodes];
    for e in &kept {
        indeg[e.dst] += 1;
    }
    let mut ready: Vec<Node> = (0..g.nodes).filter(|&v| indeg[v] == 0).collect();
    let mut done = 0;
    while let Some(v) = ready.pop() {
        done += 1;
        for e in kept.iter().filter(|e| e.src == v) {
            indeg[e.dst] -= 1;
            if indeg[e.dst] == 0 {
                ready.push(e.dst);
            }
        }
    }
    done == g.nodes
}

#[test]
fn straight_line_is_a_chain() {
    for n in 0..6 {
        let stmts: String = (0..n).map(|k| format!("i = {k}; ")).collect();
        let f = parse_program(&format!("void main() {{ int i; {stmts}}}")).unwrap();
        let g = Cfg::build(&f.functions[0]);
        assert_eq!(g.nodes, n.max(1) + 1, "{n} statements");
        assert_eq!(g.edges.len(), g.nodes - 1);
        assert!(g.loop_heads.is_empty());
    }
}

#[test]
fn single_loop_has_one_head() {
    let g = cfg_of("int main() { int i; i = 0; while (i < 3) { i = i + 1; } return i; }");
    assert_eq!(g.loop_heads.len(), 1);
    assert_eq!(g.back_edges().len(), 1);
}

#[test]
fn nested_loops_have_dominated_heads() {
    let g = cfg_of(
        "int main() { int i; int j; i = 0;\n\
         while (i < 3) { j = 0; while (j < 3) { j = j + 1; } i = i + 1; }\n\
         return 0; }",
    );
    assert_eq!(g.loop_heads.len(), 2);
    let heads: Vec<Node> = g.loop_heads.iter().copied().collect();
    let (a, b) = (heads[0], heads[1]);
    let (outer, inner) = if dominates(&g, a, b) { (a, b) } else { (b, a) };
    assert!(dominates(&g, outer, inner));
    assert!(!dominates(&g, inner, outer));
    // Every back edge targets a node that dominates its source.
    for i in g.back_edges() {
        let e = &g.edges[i];
        assert!(dominates(&g, e.dst, e.src));
    }
}

#[test]
fn leading_loop_gets_a_fresh_entry() {
    let g = cfg_of("int main() { int i; i = 0; while (i < 3) { i = i + 1; } return 0; }");
    assert!(g.edges.iter().all(|e| e.dst != g.entry));
    let f = parse_program("void main() { while (nondet()) { } }").unwrap();
    let g = Cfg::build(&f.functions[0]);
    assert!(g.edges.iter().all(|e| e.dst != g.entry));
    assert!(matches!(g.edges.iter().find(|e| e.src == g.entry).unwrap().label, Label::Skip));
}

fn while_count(body: &[Stmt]) -> usize {
    body.iter()
        .map(|s| match &s.kind {
            StmtKind::If(_, t, e) => while_count(t) + while_count(e.as_deref().unwrap_or_default()),
            StmtKind::While(_, b) => 1 + while_count(b),
            _ => 0,
        })
        .sum()
}

/// Drops the trailing `return`, so the body is a tree of branches and loops.
fn void_main(mut f: FunDef) -> FunDef {
    f.body.pop();
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn graph_shape_invariants(b in body()) {
        let f = void_main(main_with(b));
        let g = Cfg::build(&f);
        prop_assert_eq!(g.edges.len(), g.nodes - 1 + branch_count(&f.body));
        prop_assert!(acyclic_without_back_edges(&g));
        prop_assert_eq!(reachable(&g, None).len(), g.nodes);
        prop_assert!(g.edges.iter().all(|e| e.dst != g.entry));
        prop_assert!(g.edges.iter().all(|e| e.src != g.exit));
        prop_assert!(g.edges.iter().all(|e| e.src < g.nodes && e.dst < g.nodes));
        for i in g.back_edges() {
            let e = &g.edges[i];
            prop_assert!(dominates(&g, e.dst, e.src));
            prop_assert!(g.loop_heads.contains(&e.dst));
        }
    }

    #[test]
    fn one_loop_head_per_while(b in body()) {
        let f = void_main(main_with(b));
        let g = Cfg::build(&f);
        prop_assert_eq!(g.loop_heads.len(), while_count(&f.body));
    }
}
