//! The input language: a small C-like language with structs, pointers,
//! integers, `malloc`/`free`, `if`, `while` and non-recursive calls.

mod ast;
mod lexer;
mod parser;

use std::collections::{BTreeMap, BTreeSet};

pub use ast::*;
pub use parser::parse_syntax;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FrontendError {
    #[error("{line}:{col}: parse error: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("{line}:{col}: unsupported feature: {feature}")]
    Unsupported { line: usize, col: usize, feature: String },
}

impl FrontendError {
    pub fn parse(line: usize, col: usize, message: impl Into<String>) -> FrontendError {
        FrontendError::Parse {
            line,
            col,
            message: message.into(),
        }
    }

    pub fn unsupported(line: usize, col: usize, feature: impl Into<String>) -> FrontendError {
        FrontendError::Unsupported {
            line,
            col,
            feature: feature.into(),
        }
    }

    pub fn position(&self) -> (usize, usize) {
        match self {
            FrontendError::Parse { line, col, .. } | FrontendError::Unsupported { line, col, .. } => (*line, *col),
        }
    }

    pub fn is_unsupported(&self) -> bool {
        matches!(self, FrontendError::Unsupported { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StructKind {
    Sll { next: String },
    Dll { next: String, prev: String },
    Nll { next: String, nested: String },
    Plain,
}

/// Guesses a list shape for every struct from its pointer fields.
///
/// One self-referential pointer and nothing else is a singly-linked list, two
/// are a doubly-linked list, and one plus a pointer to a singly-linked struct
/// is a nested list. A struct with `next` and `inner` both pointing to itself
/// is therefore a DLL even when it is meant as a nested list.
pub fn classify_structs(p: &Program) -> BTreeMap<String, StructKind> {
    let mut kinds = BTreeMap::new();
    for s in &p.structs {
        let (own, other): (Vec<_>, Vec<_>) = s.pointer_fields().partition(|(_, t)| *t == s.name);
        let kind = match (own.as_slice(), other.as_slice()) {
            ([(n, _)], []) => StructKind::Sll { next: n.to_string() },
            ([(n, _), (pv, _)], []) => StructKind::Dll {
                next: n.to_string(),
                prev: pv.to_string(),
            },
            _ => StructKind::Plain,
        };
        kinds.insert(s.name.clone(), kind);
    }
    for s in &p.structs {
        let (own, other): (Vec<_>, Vec<_>) = s.pointer_fields().partition(|(_, t)| *t == s.name);
        if let ([(n, _)], [(nested, target)]) = (own.as_slice(), other.as_slice()) {
            if matches!(kinds.get(*target), Some(StructKind::Sll { .. })) {
                kinds.insert(
                    s.name.clone(),
                    StructKind::Nll {
                        next: n.to_string(),
                        nested: nested.to_string(),
                    },
                );
            }
        }
    }
    kinds
}

/// Parses and checks a program: declarations, field accesses, types, calls,
/// the entry function, recursion, and integer fields in list structs.
pub fn parse_program(src: &str) -> Result<Program, FrontendError> {
    let p = parse_syntax(src)?;
    validate(&p)?;
    Ok(p)
}

fn invalid<T>(line: usize, msg: impl Into<String>) -> Result<T, FrontendError> {
    Err(FrontendError::parse(line, 1, msg))
}

fn validate(p: &Program) -> Result<(), FrontendError> {
    let mut names = BTreeSet::new();
    for s in &p.structs {
        if !names.insert(&s.name) {
            return invalid(s.line, format!("struct {} declared twice", s.name));
        }
    }
    for s in &p.structs {
        let mut fields = BTreeSet::new();
        for (n, t) in &s.fields {
            if !fields.insert(n) {
                return invalid(s.line, format!("field {n} declared twice in struct {}", s.name));
            }
            if let FieldType::Ptr(t) = t {
                if p.struct_def(t).is_none() {
                    return invalid(s.line, format!("unknown struct {t}"));
                }
            }
        }
    }
    let kinds = classify_structs(p);
    for s in &p.structs {
        if kinds[&s.name] != StructKind::Plain && s.fields.iter().any(|(_, t)| *t == FieldType::Int) {
            return Err(FrontendError::unsupported(
                s.line,
                1,
                format!("integer fields in list struct {}", s.name),
            ));
        }
    }
    let mut funs = BTreeSet::new();
    for f in &p.functions {
        if !funs.insert(&f.name) {
            return invalid(f.line, format!("function {} declared twice", f.name));
        }
    }
    match p.function(&p.entry) {
        None => return invalid(1, format!("no entry function {}", p.entry)),
        Some(f) if !f.params.is_empty() => return invalid(f.line, format!("{} takes parameters", p.entry)),
        Some(_) => {}
    }
    for f in &p.functions {
        Checker { p, f }.function()?;
    }
    recursion(p)
}

struct Checker<'a> {
    p: &'a Program,
    f: &'a FunDef,
}

impl Checker<'_> {
    fn function(&self) -> Result<(), FrontendError> {
        let mut vars = BTreeSet::new();
        for (t, n) in self.f.params.iter().chain(&self.f.locals) {
            if !vars.insert(n) {
                return invalid(self.f.line, format!("variable {n} declared twice"));
            }
            match t {
                Type::Void => return invalid(self.f.line, format!("variable {n} has type void")),
                Type::Ptr(s) if self.p.struct_def(s).is_none() => {
                    return invalid(self.f.line, format!("unknown struct {s}"))
                }
                _ => {}
            }
        }
        if let Type::Ptr(s) = &self.f.ret {
            if self.p.struct_def(s).is_none() {
                return invalid(self.f.line, format!("unknown struct {s}"));
            }
        }
        self.block(&self.f.body)
    }

    fn var(&self, line: usize, x: &str) -> Result<&Type, FrontendError> {
        match self.f.var_type(x) {
            Some(t) => Ok(t),
            None => invalid(line, format!("undeclared variable {x}")),
        }
    }

    fn field(&self, line: usize, x: &str, fld: &str) -> Result<Type, FrontendError> {
        let Type::Ptr(s) = self.var(line, x)? else {
            return invalid(line, format!("{x} is not a struct pointer"));
        };
        match self.p.struct_def(s).and_then(|d| d.field(fld)) {
            Some(FieldType::Ptr(t)) => Ok(Type::Ptr(t.clone())),
            Some(FieldType::Int) => Ok(Type::Int),
            None => invalid(line, format!("struct {s} has no field {fld}")),
        }
    }

    /// `None` stands for `NULL`, which fits every pointer type.
    fn atom(&self, line: usize, a: &Atom) -> Result<Option<Type>, FrontendError> {
        Ok(match a {
            Atom::Var(x) => Some(self.var(line, x)?.clone()),
            Atom::Null => None,
            Atom::Int(_) => Some(Type::Int),
        })
    }

    fn int_expr(&self, line: usize, e: &Expr) -> Result<(), FrontendError> {
        for a in std::iter::once(&e.first).chain(e.rest.iter().map(|(_, a)| a)) {
            if self.atom(line, a)? != Some(Type::Int) {
                return invalid(line, format!("{a} is not an integer"));
            }
        }
        Ok(())
    }

    fn call(&self, line: usize, g: &str, args: &[Atom]) -> Result<Type, FrontendError> {
        let Some(callee) = self.p.function(g) else {
            return invalid(line, format!("unknown function {g}"));
        };
        if callee.params.len() != args.len() {
            return invalid(line, format!("{g} expects {} arguments", callee.params.len()));
        }
        for ((t, _), a) in callee.params.iter().zip(args) {
            if !fits(t, self.atom(line, a)?.as_ref()) {
                return invalid(line, format!("argument {a} does not match {t}"));
            }
        }
        Ok(callee.ret.clone())
    }

    fn rhs(&self, line: usize, r: &Rhs) -> Result<Option<Type>, FrontendError> {
        Ok(match r {
            Rhs::Null => None,
            Rhs::Int(_) | Rhs::Nondet => Some(Type::Int),
            Rhs::Var(y) => Some(self.var(line, y)?.clone()),
            Rhs::Load(y, fld) => Some(self.field(line, y, fld)?),
            Rhs::Malloc(s) => {
                if self.p.struct_def(s).is_none() {
                    return invalid(line, format!("unknown struct {s}"));
                }
                Some(Type::Ptr(s.clone()))
            }
            Rhs::Call(g, args) => Some(self.call(line, g, args)?),
            Rhs::Arith(e) => {
                self.int_expr(line, e)?;
                Some(Type::Int)
            }
        })
    }

    fn cond(&self, line: usize, c: &Cond) -> Result<(), FrontendError> {
        if let Cond::Cmp(a, op, b) = c {
            let (ta, tb) = (self.atom(line, a)?, self.atom(line, b)?);
            let ints = ta == Some(Type::Int) && tb == Some(Type::Int);
            let ptrs = !matches!(ta, Some(Type::Int)) && !matches!(tb, Some(Type::Int));
            if !ints && !ptrs {
                return invalid(line, format!("cannot compare {a} and {b}"));
            }
            if ptrs && matches!(op, CmpOp::Lt | CmpOp::Leq) {
                return Err(FrontendError::unsupported(line, 1, "pointer ordering"));
            }
        }
        Ok(())
    }

    fn block(&self, body: &[Stmt]) -> Result<(), FrontendError> {
        body.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&self, s: &Stmt) -> Result<(), FrontendError> {
        let line = s.line;
        match &s.kind {
            StmtKind::Assign(x, r) => {
                let t = self.var(line, x)?.clone();
                if !fits(&t, self.rhs(line, r)?.as_ref()) {
                    return invalid(line, format!("cannot assign {r} to {x}"));
                }
            }
            StmtKind::Store(x, fld, r) => {
                let t = self.field(line, x, fld)?;
                if !fits(&t, self.rhs(line, r)?.as_ref()) {
                    return invalid(line, format!("cannot assign {r} to {x}->{fld}"));
                }
            }
            StmtKind::Free(x) => {
                if !matches!(self.var(line, x)?, Type::Ptr(_)) {
                    return invalid(line, format!("{x} is not a pointer"));
                }
            }
            StmtKind::If(c, t, e) => {
                self.cond(line, c)?;
                self.block(t)?;
                if let Some(e) = e {
                    self.block(e)?;
                }
            }
            StmtKind::While(c, b) => {
                self.cond(line, c)?;
                self.block(b)?;
            }
            StmtKind::Return(e) => match (&self.f.ret, e) {
                (Type::Void, None) => {}
                (Type::Void, Some(_)) => return invalid(line, "void function returns a value"),
                (_, None) => return invalid(line, "missing return value"),
                (t, Some(e)) => {
                    let got = if e.rest.is_empty() {
                        self.atom(line, &e.first)?
                    } else {
                        self.int_expr(line, e)?;
                        Some(Type::Int)
                    };
                    if !fits(t, got.as_ref()) {
                        return invalid(line, format!("cannot return {e} from {}", self.f.name));
                    }
                }
            },
            StmtKind::Call(g, args) => {
                self.call(line, g, args)?;
            }
        }
        Ok(())
    }
}

fn fits(target: &Type, value: Option<&Type>) -> bool {
    match (target, value) {
        (Type::Ptr(_), None) => true,
        (Type::Void, _) | (_, Some(Type::Void)) | (Type::Int, None) => false,
        (t, Some(v)) => t == v,
    }
}

fn calls(body: &[Stmt], out: &mut Vec<(String, usize)>) {
    for s in body {
        match &s.kind {
            StmtKind::Call(g, _) | StmtKind::Assign(_, Rhs::Call(g, _)) | StmtKind::Store(_, _, Rhs::Call(g, _)) => {
                out.push((g.clone(), s.line))
            }
            StmtKind::If(_, t, e) => {
                calls(t, out);
                calls(e.as_deref().unwrap_or_default(), out);
            }
            StmtKind::While(_, b) => calls(b, out),
            _ => {}
        }
    }
}

fn recursion(p: &Program) -> Result<(), FrontendError> {
    let graph: BTreeMap<&str, Vec<(String, usize)>> = p
        .functions
        .iter()
        .map(|f| {
            let mut out = Vec::new();
            calls(&f.body, &mut out);
            (f.name.as_str(), out)
        })
        .collect();
    // 0 unvisited, 1 on the stack, 2 done.
    fn visit(g: &BTreeMap<&str, Vec<(String, usize)>>, f: &str, state: &mut BTreeMap<String, u8>) -> Option<usize> {
        state.insert(f.to_string(), 1);
        for (h, line) in &g[f] {
            match state.get(h).copied().unwrap_or(0) {
                1 => return Some(*line),
                0 => {
                    if let Some(l) = visit(g, h, state) {
                        return Some(l);
                    }
                }
                _ => {}
            }
        }
        state.insert(f.to_string(), 2);
        None
    }
    let mut state = BTreeMap::new();
    for f in &p.functions {
        if state.get(&f.name).copied().unwrap_or(0) == 0 {
            if let Some(line) = visit(&graph, &f.name, &mut state) {
                return Err(FrontendError::unsupported(line, 1, "recursion"));
            }
        }
    }
    Ok(())
}
