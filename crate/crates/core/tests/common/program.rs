//! Random well-typed programs over a fixed set of declarations.
//!
//! Pointers `p`, `q` have type `struct node*` (a singly-linked struct), `d`
//! has type `struct dnode*` (doubly-linked), and `i`, `j` are integers. The
//! helper `mk` takes a list and an integer and returns a new head.

use proptest::prelude::*;
use shapeck::frontend::{
    ArithOp, Atom, CmpOp, Cond, Expr, FieldType, FunDef, Program, Rhs, Stmt, StmtKind, StructDef, Type,
};

fn stmt(kind: StmtKind) -> Stmt {
    Stmt { kind, line: 0 }
}

fn var(x: &str) -> Atom {
    Atom::Var(x.to_string())
}

fn node_ptr() -> impl Strategy<Value = String> {
    prop_oneof![Just("p".to_string()), Just("q".to_string())]
}

fn int_var() -> impl Strategy<Value = String> {
    prop_oneof![Just("i".to_string()), Just("j".to_string())]
}

fn int_atom() -> impl Strategy<Value = Atom> {
    prop_oneof![(-9i64..=9).prop_map(Atom::Int), int_var().prop_map(Atom::Var)]
}

fn op() -> impl Strategy<Value = ArithOp> {
    prop_oneof![Just(ArithOp::Add), Just(ArithOp::Sub)]
}

fn node_rhs() -> impl Strategy<Value = Rhs> {
    prop_oneof![
        Just(Rhs::Null),
        node_ptr().prop_map(Rhs::Var),
        node_ptr().prop_map(|y| Rhs::Load(y, "next".to_string())),
        Just(Rhs::Malloc("node".to_string())),
        (node_ptr(), int_atom()).prop_map(|(y, k)| Rhs::Call("mk".to_string(), vec![var(&y), k])),
    ]
}

fn int_rhs() -> impl Strategy<Value = Rhs> {
    prop_oneof![
        (-9i64..=9).prop_map(Rhs::Int),
        Just(Rhs::Nondet),
        int_var().prop_map(Rhs::Var),
        (int_atom(), prop::collection::vec((op(), int_atom()), 1..3))
            .prop_map(|(first, rest)| Rhs::Arith(Expr { first, rest })),
    ]
}

fn simple() -> impl Strategy<Value = Stmt> {
    prop_oneof![
        (node_ptr(), node_rhs()).prop_map(|(x, r)| StmtKind::Assign(x, r)),
        prop_oneof![Just(Rhs::Malloc("dnode".to_string())), Just(Rhs::Load("d".into(), "prev".into()))]
            .prop_map(|r| StmtKind::Assign("d".to_string(), r)),
        (int_var(), int_rhs()).prop_map(|(x, r)| StmtKind::Assign(x, r)),
        (node_ptr(), prop_oneof![Just(Rhs::Null), node_ptr().prop_map(Rhs::Var)])
            .prop_map(|(x, r)| StmtKind::Store(x, "next".to_string(), r)),
        Just(StmtKind::Store("d".into(), "prev".into(), Rhs::Var("d".into()))),
        prop_oneof![node_ptr(), Just("d".to_string())].prop_map(StmtKind::Free),
        (node_ptr(), int_atom()).prop_map(|(y, k)| StmtKind::Call("mk".to_string(), vec![var(&y), k])),
    ]
    .prop_map(stmt)
}

fn cond() -> impl Strategy<Value = Cond> {
    let ptr_op = prop_oneof![Just(CmpOp::Eq), Just(CmpOp::Neq)];
    let int_op = prop_oneof![Just(CmpOp::Eq), Just(CmpOp::Neq), Just(CmpOp::Lt), Just(CmpOp::Leq)];
    prop_oneof![
        Just(Cond::Nondet),
        (node_ptr(), ptr_op, prop_oneof![Just(Atom::Null), node_ptr().prop_map(Atom::Var)])
            .prop_map(|(x, o, b)| Cond::Cmp(Atom::Var(x), o, b)),
        (int_var(), int_op, int_atom()).prop_map(|(x, o, b)| Cond::Cmp(Atom::Var(x), o, b)),
    ]
}

/// Statement lists without `return`, nested up to three levels.
pub fn body() -> impl Strategy<Value = Vec<Stmt>> {
    let leaf = prop::collection::vec(simple(), 0..4);
    leaf.prop_recursive(3, 24, 4, |inner| {
        let compound = prop_oneof![
            (cond(), inner.clone(), prop::option::of(inner.clone()))
                .prop_map(|(c, t, e)| stmt(StmtKind::If(c, t, e))),
            (cond(), inner).prop_map(|(c, b)| stmt(StmtKind::While(c, b))),
        ];
        prop::collection::vec(prop_oneof![2 => simple(), 1 => compound], 0..5)
    })
}

pub fn structs() -> Vec<StructDef> {
    let ptr = |s: &str| FieldType::Ptr(s.to_string());
    vec![
        StructDef {
            name: "node".into(),
            fields: vec![("next".into(), ptr("node"))],
            line: 0,
        },
        StructDef {
            name: "dnode".into(),
            fields: vec![("next".into(), ptr("dnode")), ("prev".into(), ptr("dnode"))],
            line: 0,
        },
    ]
}

fn mk() -> FunDef {
    let node = Type::Ptr("node".into());
    FunDef {
        name: "mk".into(),
        ret: node.clone(),
        params: vec![(node.clone(), "a".into()), (Type::Int, "k".into())],
        locals: vec![(node, "r".into())],
        body: vec![
            stmt(StmtKind::Assign("r".into(), Rhs::Malloc("node".into()))),
            stmt(StmtKind::Store("r".into(), "next".into(), Rhs::Var("a".into()))),
            stmt(StmtKind::Return(Some(Expr {
                first: var("r"),
                rest: vec![],
            }))),
        ],
        line: 0,
    }
}

/// `main` with the fixed locals around `body`, ending in `return 0;`.
pub fn main_with(mut body: Vec<Stmt>) -> FunDef {
    let node = Type::Ptr("node".into());
    body.push(stmt(StmtKind::Return(Some(Expr {
        first: Atom::Int(0),
        rest: vec![],
    }))));
    FunDef {
        name: "main".into(),
        ret: Type::Int,
        params: vec![],
        locals: vec![
            (node.clone(), "p".into()),
            (node, "q".into()),
            (Type::Ptr("dnode".into()), "d".into()),
            (Type::Int, "i".into()),
            (Type::Int, "j".into()),
        ],
        body,
        line: 0,
    }
}

pub fn program() -> impl Strategy<Value = Program> {
    body().prop_map(|b| Program {
        structs: structs(),
        functions: vec![mk(), main_with(b)],
        entry: "main".into(),
    })
}

/// Number of `if` and `while` statements, at any depth.
pub fn branch_count(body: &[Stmt]) -> usize {
    body.iter()
        .map(|s| match &s.kind {
            StmtKind::If(_, t, e) => 1 + branch_count(t) + branch_count(e.as_deref().unwrap_or_default()),
            StmtKind::While(_, b) => 1 + branch_count(b),
            _ => 0,
        })
        .sum()
}
