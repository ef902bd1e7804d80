use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Void,
    Int,
    /// Pointer to the named struct.
    Ptr(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FieldType {
    Ptr(String),
    Int,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructDef {
    pub name: String,
    pub fields: Vec<(String, FieldType)>,
    pub line: usize,
}

impl StructDef {
    pub fn field(&self, name: &str) -> Option<&FieldType> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn pointer_fields(&self) -> impl Iterator<Item = (&str, &str)> {
        self.fields.iter().filter_map(|(n, t)| match t {
            FieldType::Ptr(s) => Some((n.as_str(), s.as_str())),
            FieldType::Int => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunDef {
    pub name: String,
    pub ret: Type,
    pub params: Vec<(Type, String)>,
    pub locals: Vec<(Type, String)>,
    pub body: Vec<Stmt>,
    pub line: usize,
}

impl FunDef {
    pub fn var_type(&self, x: &str) -> Option<&Type> {
        self.params
            .iter()
            .chain(&self.locals)
            .find(|(_, n)| n == x)
            .map(|(t, _)| t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub structs: Vec<StructDef>,
    pub functions: Vec<FunDef>,
    pub entry: String,
}

impl Program {
    pub fn struct_def(&self, name: &str) -> Option<&StructDef> {
        self.structs.iter().find(|s| s.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// The same program with every source line set to 0.
    pub fn without_lines(&self) -> Program {
        let mut p = self.clone();
        for s in &mut p.structs {
            s.line = 0;
        }
        for f in &mut p.functions {
            f.line = 0;
            strip(&mut f.body);
        }
        p
    }
}

fn strip(body: &mut [Stmt]) {
    for s in body {
        s.line = 0;
        match &mut s.kind {
            StmtKind::If(_, t, e) => {
                strip(t);
                strip(e.as_deref_mut().unwrap_or_default());
            }
            StmtKind::While(_, b) => strip(b),
            _ => {}
        }
    }
}

/// A variable, `NULL`, or an integer literal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Atom {
    Var(String),
    Null,
    Int(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
}

/// `first (op atom)*` with at least one operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr {
    pub first: Atom,
    pub rest: Vec<(ArithOp, Atom)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Rhs {
    Null,
    Int(i64),
    Var(String),
    Load(String, String),
    Malloc(String),
    Call(String, Vec<Atom>),
    Nondet,
    Arith(Expr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Neq,
    Lt,
    Leq,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    Cmp(Atom, CmpOp, Atom),
    Nondet,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StmtKind {
    Assign(String, Rhs),
    Store(String, String, Rhs),
    Free(String),
    If(Cond, Vec<Stmt>, Option<Vec<Stmt>>),
    While(Cond, Vec<Stmt>),
    Return(Option<Expr>),
    Call(String, Vec<Atom>),
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Void => write!(f, "void"),
            Type::Int => write!(f, "int"),
            Type::Ptr(s) => write!(f, "struct {s}*"),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Var(x) => write!(f, "{x}"),
            Atom::Null => write!(f, "NULL"),
            Atom::Int(n) => write!(f, "{n}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.first)?;
        for (op, a) in &self.rest {
            let op = match op {
                ArithOp::Add => "+",
                ArithOp::Sub => "-",
            };
            write!(f, " {op} {a}")?;
        }
        Ok(())
    }
}

fn args(xs: &[Atom]) -> String {
    xs.iter().map(Atom::to_string).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for Rhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rhs::Null => write!(f, "NULL"),
            Rhs::Int(n) => write!(f, "{n}"),
            Rhs::Var(x) => write!(f, "{x}"),
            Rhs::Load(x, fld) => write!(f, "{x}->{fld}"),
            Rhs::Malloc(s) => write!(f, "malloc(sizeof(struct {s}))"),
            Rhs::Call(g, xs) => write!(f, "{g}({})", args(xs)),
            Rhs::Nondet => write!(f, "nondet()"),
            Rhs::Arith(e) => write!(f, "{e}"),
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::Nondet => write!(f, "nondet()"),
            Cond::Cmp(a, op, b) => {
                let op = match op {
                    CmpOp::Eq => "==",
                    CmpOp::Neq => "!=",
                    CmpOp::Lt => "<",
                    CmpOp::Leq => "<=",
                };
                write!(f, "{a} {op} {b}")
            }
        }
    }
}

impl Stmt {
    /// The statement on one line; blocks are elided.
    pub fn head(&self) -> String {
        match &self.kind {
            StmtKind::Assign(x, r) => format!("{x} = {r};"),
            StmtKind::Store(x, fld, r) => format!("{x}->{fld} = {r};"),
            StmtKind::Free(x) => format!("free({x});"),
            StmtKind::If(c, ..) => format!("if ({c})"),
            StmtKind::While(c, _) => format!("while ({c})"),
            StmtKind::Return(None) => "return;".to_string(),
            StmtKind::Return(Some(e)) => format!("return {e};"),
            StmtKind::Call(g, xs) => format!("{g}({});", args(xs)),
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "    ".repeat(depth);
        match &self.kind {
            StmtKind::If(c, t, e) => {
                writeln!(f, "{pad}if ({c}) {{")?;
                block(f, t, depth + 1)?;
                match e {
                    None => writeln!(f, "{pad}}}"),
                    Some(e) => {
                        writeln!(f, "{pad}}} else {{")?;
                        block(f, e, depth + 1)?;
                        writeln!(f, "{pad}}}")
                    }
                }
            }
            StmtKind::While(c, b) => {
                writeln!(f, "{pad}while ({c}) {{")?;
                block(f, b, depth + 1)?;
                writeln!(f, "{pad}}}")
            }
            _ => writeln!(f, "{pad}{}", self.head()),
        }
    }
}

fn block(f: &mut fmt::Formatter<'_>, body: &[Stmt], depth: usize) -> fmt::Result {
    body.iter().try_for_each(|s| s.write(f, depth))
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.structs {
            writeln!(f, "struct {} {{", s.name)?;
            for (n, t) in &s.fields {
                match t {
                    FieldType::Ptr(p) => writeln!(f, "    struct {p}* {n};")?,
                    FieldType::Int => writeln!(f, "    int {n};")?,
                }
            }
            writeln!(f, "}};")?;
            writeln!(f)?;
        }
        for (i, fun) in self.functions.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            let params: Vec<String> = fun.params.iter().map(|(t, n)| format!("{t} {n}")).collect();
            writeln!(f, "{} {}({}) {{", fun.ret, fun.name, params.join(", "))?;
            for (t, n) in &fun.locals {
                writeln!(f, "    {t} {n};")?;
            }
            block(f, &fun.body, 1)?;
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}
