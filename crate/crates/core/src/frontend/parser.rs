use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::FrontendError;

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "for", "do", "switch", "case", "default", "goto", "break", "continue", "typedef", "union", "enum", "static",
    "extern", "char", "float", "double", "long", "short", "unsigned", "signed", "const", "volatile",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn line(&self) -> usize {
        self.toks[self.pos].line
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (l, c) = self.here();
        Err(FrontendError::parse(l, c, msg))
    }

    fn unsupported<T>(&self, what: &str) -> PResult<T> {
        let (l, c) = self.here();
        Err(FrontendError::unsupported(l, c, what))
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(x) => format!("`{x}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    /// Rejects tokens that belong to C but not to the language.
    fn screen(&self) -> PResult<()> {
        match self.peek() {
            Tok::Sym("[") | Tok::Sym("]") => self.unsupported("arrays"),
            Tok::Sym("&") => self.unsupported("address-of"),
            Tok::Sym("&&") | Tok::Sym("||") | Tok::Sym("!") => self.unsupported("compound conditions"),
            Tok::Sym("++") | Tok::Sym("--") | Tok::Sym("+=") | Tok::Sym("-=") => {
                self.unsupported("increment operators")
            }
            Tok::Sym(".") => self.unsupported("struct values"),
            Tok::Sym("#") => self.unsupported("preprocessor directives"),
            Tok::Sym(">") | Tok::Sym(">=") => self.unsupported("`>` comparisons"),
            Tok::Sym("/") | Tok::Sym("%") | Tok::Sym("|") | Tok::Sym("^") | Tok::Sym("~") | Tok::Sym("?") => {
                self.unsupported("this operator")
            }
            Tok::Ident(k) if UNSUPPORTED_KEYWORDS.contains(&k.as_str()) => {
                let k = k.clone();
                self.unsupported(&format!("`{k}`"))
            }
            _ => Ok(()),
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            return Ok(());
        }
        self.screen()?;
        self.error(format!("expected `{s}`, found {}", self.describe()))
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            return Ok(());
        }
        self.screen()?;
        self.error(format!("expected `{k}`, found {}", self.describe()))
    }

    fn ident(&mut self) -> PResult<String> {
        self.screen()?;
        match self.peek().clone() {
            Tok::Ident(x) if !is_reserved(&x) => {
                self.bump();
                Ok(x)
            }
            _ => self.error(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn is_type_start(&self) -> bool {
        self.is_kw("int") || self.is_kw("void") || self.is_kw("struct")
    }

    fn ty(&mut self) -> PResult<Type> {
        self.screen()?;
        if self.is_kw("int") {
            self.bump();
            if self.is_sym("*") {
                return self.unsupported("integer pointers");
            }
            Ok(Type::Int)
        } else if self.is_kw("void") {
            self.bump();
            if self.is_sym("*") {
                return self.unsupported("void pointers");
            }
            Ok(Type::Void)
        } else if self.is_kw("struct") {
            self.bump();
            let s = self.ident()?;
            if !self.is_sym("*") {
                return self.unsupported("struct values");
            }
            self.bump();
            if self.is_sym("*") {
                return self.unsupported("pointers to pointers");
            }
            Ok(Type::Ptr(s))
        } else {
            self.error(format!("expected type, found {}", self.describe()))
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut structs = Vec::new();
        let mut functions = Vec::new();
        while *self.peek() != Tok::Eof {
            self.screen()?;
            if self.is_kw("struct") && matches!(self.peek_at(2), Tok::Sym("{")) {
                structs.push(self.structdef()?);
            } else {
                functions.push(self.fundef()?);
            }
        }
        Ok(Program {
            structs,
            functions,
            entry: "main".to_string(),
        })
    }

    fn structdef(&mut self) -> PResult<StructDef> {
        let line = self.line();
        self.expect_kw("struct")?;
        let name = self.ident()?;
        self.expect_sym("{")?;
        let mut fields = Vec::new();
        while !self.is_sym("}") {
            let t = match self.ty()? {
                Type::Int => FieldType::Int,
                Type::Ptr(s) => FieldType::Ptr(s),
                Type::Void => return self.error("fields cannot be void"),
            };
            let n = self.ident()?;
            self.expect_sym(";")?;
            fields.push((n, t));
        }
        self.bump();
        self.expect_sym(";")?;
        Ok(StructDef { name, fields, line })
    }

    fn fundef(&mut self) -> PResult<FunDef> {
        let line = self.line();
        let ret = self.ty()?;
        let name = self.ident()?;
        if self.is_sym(";") || self.is_sym("=") {
            return self.unsupported("global variables");
        }
        self.screen()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if self.is_kw("void") && matches!(self.peek_at(1), Tok::Sym(")")) {
            self.bump();
        }
        while !self.is_sym(")") {
            if !params.is_empty() {
                self.expect_sym(",")?;
            }
            let t = self.ty()?;
            let n = self.ident()?;
            params.push((t, n));
        }
        self.bump();
        if self.is_sym(";") {
            return self.unsupported("function prototypes");
        }
        self.expect_sym("{")?;
        let mut locals = Vec::new();
        while self.is_type_start() {
            let t = self.ty()?;
            let n = self.ident()?;
            if self.is_sym("=") {
                return self.unsupported("initializers in declarations");
            }
            self.expect_sym(";")?;
            locals.push((t, n));
        }
        let body = self.stmts()?;
        self.expect_sym("}")?;
        Ok(FunDef {
            name,
            ret,
            params,
            locals,
            body,
            line,
        })
    }

    fn stmts(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        while !self.is_sym("}") && *self.peek() != Tok::Eof {
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_sym("{")?;
        let body = self.stmts()?;
        self.expect_sym("}")?;
        Ok(body)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        self.screen()?;
        let line = self.line();
        let kind = if self.is_type_start() {
            return self.unsupported("declarations after statements");
        } else if self.is_sym("*") {
            return self.unsupported("dereference with `*`");
        } else if self.is_kw("free") {
            self.bump();
            self.expect_sym("(")?;
            let x = self.ident()?;
            self.expect_sym(")")?;
            self.expect_sym(";")?;
            StmtKind::Free(x)
        } else if self.is_kw("if") {
            self.bump();
            let c = self.paren_cond()?;
            let t = self.block()?;
            let e = if self.is_kw("else") {
                self.bump();
                if self.is_kw("if") {
                    Some(vec![self.stmt()?])
                } else {
                    Some(self.block()?)
                }
            } else {
                None
            };
            StmtKind::If(c, t, e)
        } else if self.is_kw("while") {
            self.bump();
            let c = self.paren_cond()?;
            StmtKind::While(c, self.block()?)
        } else if self.is_kw("return") {
            self.bump();
            let e = if self.is_sym(";") { None } else { Some(self.expr()?) };
            self.expect_sym(";")?;
            StmtKind::Return(e)
        } else {
            let x = self.ident()?;
            if self.is_sym("(") {
                let args = self.args()?;
                self.expect_sym(";")?;
                StmtKind::Call(x, args)
            } else if self.is_sym("->") {
                self.bump();
                let f = self.ident()?;
                if self.is_sym("->") {
                    return self.unsupported("chained field access");
                }
                self.expect_sym("=")?;
                let r = self.rhs()?;
                self.expect_sym(";")?;
                StmtKind::Store(x, f, r)
            } else {
                self.expect_sym("=")?;
                let r = self.rhs()?;
                self.expect_sym(";")?;
                StmtKind::Assign(x, r)
            }
        };
        Ok(Stmt { kind, line })
    }

    fn args(&mut self) -> PResult<Vec<Atom>> {
        self.expect_sym("(")?;
        let mut out = Vec::new();
        while !self.is_sym(")") {
            if !out.is_empty() {
                self.expect_sym(",")?;
            }
            out.push(self.atom()?);
        }
        self.bump();
        Ok(out)
    }

    fn atom(&mut self) -> PResult<Atom> {
        self.screen()?;
        let sign = if self.is_sym("-") {
            self.bump();
            -1
        } else if self.is_sym("+") {
            self.bump();
            1
        } else {
            0
        };
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Atom::Int(if sign < 0 { -n } else { n }))
            }
            _ if sign != 0 => self.error("expected integer after sign"),
            Tok::Ident(k) if k == "NULL" => {
                self.bump();
                Ok(Atom::Null)
            }
            _ => Ok(Atom::Var(self.ident()?)),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let first = self.atom()?;
        let mut rest = Vec::new();
        loop {
            let op = if self.is_sym("+") {
                ArithOp::Add
            } else if self.is_sym("-") {
                ArithOp::Sub
            } else {
                break;
            };
            self.bump();
            rest.push((op, self.atom()?));
        }
        if self.is_sym("*") {
            return self.unsupported("multiplication");
        }
        Ok(Expr { first, rest })
    }

    fn rhs(&mut self) -> PResult<Rhs> {
        self.screen()?;
        if self.is_kw("malloc") {
            self.bump();
            self.expect_sym("(")?;
            self.expect_kw("sizeof")?;
            self.expect_sym("(")?;
            self.expect_kw("struct")?;
            let s = self.ident()?;
            self.expect_sym(")")?;
            self.expect_sym(")")?;
            return Ok(Rhs::Malloc(s));
        }
        if let (Tok::Ident(g), Tok::Sym("(")) = (self.peek().clone(), self.peek_at(1)) {
            if is_reserved(&g) && g != "nondet" {
                return self.error(format!("unexpected `{g}`"));
            }
            self.bump();
            let args = self.args()?;
            if g == "nondet" {
                if !args.is_empty() {
                    return self.error("nondet takes no arguments");
                }
                return Ok(Rhs::Nondet);
            }
            return Ok(Rhs::Call(g, args));
        }
        if let (Tok::Ident(x), Tok::Sym("->")) = (self.peek().clone(), self.peek_at(1)) {
            self.bump();
            self.bump();
            let f = self.ident()?;
            if self.is_sym("->") {
                return self.unsupported("chained field access");
            }
            return Ok(Rhs::Load(x, f));
        }
        let e = self.expr()?;
        Ok(match (e.first.clone(), e.rest.is_empty()) {
            (Atom::Null, true) => Rhs::Null,
            (Atom::Int(n), true) => Rhs::Int(n),
            (Atom::Var(x), true) => Rhs::Var(x),
            _ => Rhs::Arith(e),
        })
    }

    fn paren_cond(&mut self) -> PResult<Cond> {
        self.expect_sym("(")?;
        let c = if self.is_kw("nondet") && matches!(self.peek_at(1), Tok::Sym("(")) {
            self.bump();
            self.expect_sym("(")?;
            self.expect_sym(")")?;
            Cond::Nondet
        } else {
            let a = self.atom()?;
            self.screen()?;
            let op = match self.peek() {
                Tok::Sym("==") => CmpOp::Eq,
                Tok::Sym("!=") => CmpOp::Neq,
                Tok::Sym("<") => CmpOp::Lt,
                Tok::Sym("<=") => CmpOp::Leq,
                _ => return self.error(format!("expected comparison, found {}", self.describe())),
            };
            self.bump();
            let b = self.atom()?;
            Cond::Cmp(a, op, b)
        };
        self.expect_sym(")")?;
        Ok(c)
    }
}

fn is_reserved(x: &str) -> bool {
    matches!(
        x,
        "struct" | "int" | "void" | "if" | "else" | "while" | "return" | "free" | "malloc" | "sizeof" | "NULL" | "nondet"
    ) || UNSUPPORTED_KEYWORDS.contains(&x)
}

/// Parses the source text without checking declarations.
pub fn parse_syntax(src: &str) -> Result<Program, FrontendError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    p.program()
}
