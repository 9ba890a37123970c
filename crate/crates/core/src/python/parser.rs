//! Recursive-descent parser producing the reduced tree in [`super::ast`].
//!
//! Covers Python 3 statement and expression syntax. Anything the grammar
//! does not recognise is a [`SyntaxError`]; callers treat the file as
//! unparseable rather than guessing.

use std::fmt;

use super::ast::*;
use super::lexer::{tokenize, Comment, LexError, StrTok, Tok, Token};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: u32,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for SyntaxError {}

impl From<LexError> for SyntaxError {
    fn from(e: LexError) -> Self {
        SyntaxError {
            line: e.line,
            message: e.message,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedFile {
    pub module: Module,
    pub comments: Vec<Comment>,
    pub line_count: u32,
}

pub fn parse_module(src: &str) -> Result<ParsedFile, SyntaxError> {
    let lexed = tokenize(src)?;
    let mut p = Parser {
        toks: lexed.tokens,
        pos: 0,
    };
    let body = p.file()?;
    Ok(ParsedFile {
        module: Module { body },
        comments: lexed.comments,
        line_count: lexed.line_count,
    })
}

type PResult<T> = Result<T, SyntaxError>;

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

const AUG_OPS: &[&str] = &[
    "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "^=", "|=", "@=",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn tok(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn tok_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(SyntaxError {
            line: self.line(),
            message: message.into(),
        })
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.tok(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.tok(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.err(format!("expected `{op}`, found {:?}", self.tok()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {:?}", self.tok()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.tok().clone() {
            Tok::Name(n) if !KEYWORDS.contains(&n.as_str()) => {
                self.bump();
                Ok(n)
            }
            other => self.err(format!("expected identifier, found {other:?}")),
        }
    }

    fn at_name(&self) -> bool {
        matches!(self.tok(), Tok::Name(n) if !KEYWORDS.contains(&n.as_str()))
    }

    // ---- statements -----------------------------------------------------

    fn file(&mut self) -> PResult<Vec<Stmt>> {
        let mut body = Vec::new();
        loop {
            match self.tok() {
                Tok::End => break,
                Tok::Newline => {
                    self.bump();
                }
                _ => body.extend(self.statement()?),
            }
        }
        Ok(body)
    }

    fn statement(&mut self) -> PResult<Vec<Stmt>> {
        let line = self.line();
        let compound = match self.tok() {
            Tok::Indent => return self.err("unexpected indent"),
            Tok::Op("@") => Some(self.decorated()?),
            Tok::Name(n) => match n.as_str() {
                "if" => Some(self.if_stmt()?),
                "while" => Some(self.while_stmt()?),
                "for" => Some(self.for_stmt()?),
                "try" => Some(self.try_stmt()?),
                "with" => Some(self.with_stmt()?),
                "def" => Some(self.funcdef(Vec::new())?),
                "class" => Some(self.classdef(Vec::new())?),
                "async" => {
                    self.bump();
                    match self.tok() {
                        Tok::Name(n) if n == "def" => Some(self.funcdef(Vec::new())?),
                        Tok::Name(n) if n == "for" => Some(self.for_stmt()?),
                        Tok::Name(n) if n == "with" => Some(self.with_stmt()?),
                        _ => return self.err("expected def, for or with after async"),
                    }
                }
                "match" => self.try_match()?,
                _ => None,
            },
            _ => None,
        };
        if let Some(kind) = compound {
            return Ok(vec![Stmt { kind, line }]);
        }
        self.simple_stmts()
    }

    fn simple_stmts(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            let line = self.line();
            let kind = self.small_stmt()?;
            out.push(Stmt { kind, line });
            if self.eat_op(";") {
                if matches!(self.tok(), Tok::Newline | Tok::End) {
                    break;
                }
                continue;
            }
            break;
        }
        match self.tok() {
            Tok::Newline => {
                self.bump();
            }
            Tok::End => {}
            other => return self.err(format!("unexpected token {other:?}")),
        }
        Ok(out)
    }

    fn small_stmt(&mut self) -> PResult<StmtKind> {
        if let Tok::Name(n) = self.tok().clone() {
            match n.as_str() {
                "pass" | "break" | "continue" => {
                    self.bump();
                    return Ok(StmtKind::Pass);
                }
                "return" => {
                    self.bump();
                    let v = if self.at_stmt_end() {
                        None
                    } else {
                        Some(self.star_expressions()?)
                    };
                    return Ok(StmtKind::Return(v));
                }
                "raise" => {
                    self.bump();
                    let mut v = Vec::new();
                    if !self.at_stmt_end() {
                        v.push(self.test()?);
                        if self.eat_kw("from") {
                            v.push(self.test()?);
                        }
                    }
                    return Ok(StmtKind::Other(v));
                }
                "global" | "nonlocal" => {
                    self.bump();
                    let mut names = vec![self.ident()?];
                    while self.eat_op(",") {
                        names.push(self.ident()?);
                    }
                    return Ok(if n == "global" {
                        StmtKind::Global(names)
                    } else {
                        StmtKind::Nonlocal(names)
                    });
                }
                "del" => {
                    self.bump();
                    let t = self.exprlist()?;
                    let targets = match t.kind {
                        ExprKind::Sequence(items) => items,
                        _ => vec![t],
                    };
                    return Ok(StmtKind::Delete(targets));
                }
                "assert" => {
                    self.bump();
                    let mut v = vec![self.test()?];
                    if self.eat_op(",") {
                        v.push(self.test()?);
                    }
                    return Ok(StmtKind::Other(v));
                }
                "import" => return self.import_name(),
                "from" => return self.import_from(),
                "type"
                    if matches!(self.tok_at(1), Tok::Name(_))
                        && !KEYWORDS.contains(&self.tok_at(1).name_str()) =>
                {
                    // type alias statement: `type X[T] = ...`
                    self.bump();
                    self.ident()?;
                    if self.is_op("[") {
                        self.skip_balanced()?;
                    }
                    self.expect_op("=")?;
                    let v = self.test()?;
                    return Ok(StmtKind::Other(vec![v]));
                }
                _ => {}
            }
        }
        self.expr_stmt()
    }

    fn at_stmt_end(&self) -> bool {
        matches!(self.tok(), Tok::Newline | Tok::End | Tok::Op(";"))
    }

    fn expr_stmt(&mut self) -> PResult<StmtKind> {
        let first = self.star_expressions_or_yield()?;
        if self.eat_op(":") {
            let annotation = self.test()?;
            let value = if self.eat_op("=") {
                Some(self.star_expressions_or_yield()?)
            } else {
                None
            };
            return Ok(StmtKind::AnnAssign {
                target: first,
                annotation,
                value,
            });
        }
        if let Tok::Op(op) = self.tok() {
            if AUG_OPS.contains(op) {
                self.bump();
                let value = self.star_expressions_or_yield()?;
                return Ok(StmtKind::AugAssign {
                    target: first,
                    value,
                });
            }
        }
        if self.is_op("=") {
            let mut chain = vec![first];
            while self.eat_op("=") {
                chain.push(self.star_expressions_or_yield()?);
            }
            let value = chain.pop().unwrap();
            return Ok(StmtKind::Assign {
                targets: chain,
                value,
            });
        }
        Ok(StmtKind::Expr(first))
    }

    fn dotted_name(&mut self) -> PResult<String> {
        let mut name = self.ident_or_kw_free()?;
        while self.is_op(".") {
            self.bump();
            name.push('.');
            name.push_str(&self.ident_or_kw_free()?);
        }
        Ok(name)
    }

    // `match`/`type`/`case` are soft keywords and valid module names
    fn ident_or_kw_free(&mut self) -> PResult<String> {
        self.ident()
    }

    fn import_name(&mut self) -> PResult<StmtKind> {
        self.expect_kw("import")?;
        let mut names = Vec::new();
        loop {
            let name = self.dotted_name()?;
            let asname = if self.eat_kw("as") {
                Some(self.ident()?)
            } else {
                None
            };
            names.push(Alias { name, asname });
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(StmtKind::Import(names))
    }

    fn import_from(&mut self) -> PResult<StmtKind> {
        self.expect_kw("from")?;
        let mut level = 0;
        loop {
            if self.eat_op(".") {
                level += 1;
            } else if self.eat_op("...") {
                level += 3;
            } else {
                break;
            }
        }
        let module = if self.is_kw("import") {
            None
        } else {
            Some(self.dotted_name()?)
        };
        self.expect_kw("import")?;
        let mut names = Vec::new();
        if self.eat_op("*") {
            names.push(Alias {
                name: "*".into(),
                asname: None,
            });
            return Ok(StmtKind::ImportFrom {
                module,
                level,
                names,
            });
        }
        let paren = self.eat_op("(");
        loop {
            if paren && self.is_op(")") {
                break;
            }
            let name = self.ident()?;
            let asname = if self.eat_kw("as") {
                Some(self.ident()?)
            } else {
                None
            };
            names.push(Alias { name, asname });
            if !self.eat_op(",") {
                break;
            }
        }
        if paren {
            self.expect_op(")")?;
        }
        Ok(StmtKind::ImportFrom {
            module,
            level,
            names,
        })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        if matches!(self.tok(), Tok::Newline) {
            self.bump();
            if !matches!(self.tok(), Tok::Indent) {
                return self.err("expected an indented block");
            }
            self.bump();
            let mut body = Vec::new();
            loop {
                match self.tok() {
                    Tok::Dedent => {
                        self.bump();
                        break;
                    }
                    Tok::End => break,
                    Tok::Newline => {
                        self.bump();
                    }
                    _ => body.extend(self.statement()?),
                }
            }
            Ok(body)
        } else {
            self.simple_stmts()
        }
    }

    fn if_stmt(&mut self) -> PResult<StmtKind> {
        // `if` or `elif`
        self.bump();
        let test = self.named_test()?;
        let body = self.block()?;
        let orelse = if self.is_kw("elif") {
            let line = self.line();
            let kind = self.if_stmt()?;
            vec![Stmt { kind, line }]
        } else if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        Ok(StmtKind::If { test, body, orelse })
    }

    fn while_stmt(&mut self) -> PResult<StmtKind> {
        self.expect_kw("while")?;
        let test = self.named_test()?;
        let body = self.block()?;
        let orelse = if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        Ok(StmtKind::While { test, body, orelse })
    }

    fn for_stmt(&mut self) -> PResult<StmtKind> {
        self.expect_kw("for")?;
        let target = self.exprlist()?;
        self.expect_kw("in")?;
        let iter = self.star_expressions()?;
        let body = self.block()?;
        let orelse = if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        Ok(StmtKind::For {
            target,
            iter,
            body,
            orelse,
        })
    }

    fn try_stmt(&mut self) -> PResult<StmtKind> {
        self.expect_kw("try")?;
        let body = self.block()?;
        let mut handlers = Vec::new();
        while self.eat_kw("except") {
            self.eat_op("*");
            let mut kind = None;
            let mut name = None;
            if !self.is_op(":") {
                kind = Some(self.test_list_as_expr()?);
                if self.eat_kw("as") {
                    name = Some(self.ident()?);
                }
            }
            let hbody = self.block()?;
            handlers.push(Handler {
                kind,
                name,
                body: hbody,
            });
        }
        let orelse = if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        let finalbody = if self.eat_kw("finally") {
            self.block()?
        } else {
            Vec::new()
        };
        if handlers.is_empty() && finalbody.is_empty() {
            return self.err("try without except or finally");
        }
        Ok(StmtKind::Try {
            body,
            handlers,
            orelse,
            finalbody,
        })
    }

    fn with_stmt(&mut self) -> PResult<StmtKind> {
        self.expect_kw("with")?;
        let mut items = Vec::new();
        // parenthesized with-items: `with (a as b, c as d):`
        let save = self.pos;
        if self.is_op("(") {
            self.bump();
            let ok = (|| -> PResult<Vec<(Expr, Option<Expr>)>> {
                let mut v = Vec::new();
                loop {
                    if self.is_op(")") {
                        break;
                    }
                    let e = self.test()?;
                    let t = if self.eat_kw("as") {
                        Some(self.star_target()?)
                    } else {
                        None
                    };
                    v.push((e, t));
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op(")")?;
                if !self.is_op(":") {
                    return self.err("not a parenthesized with");
                }
                Ok(v)
            })();
            match ok {
                Ok(v) => items = v,
                Err(_) => self.pos = save,
            }
        }
        if items.is_empty() {
            loop {
                let e = self.test()?;
                let t = if self.eat_kw("as") {
                    Some(self.star_target()?)
                } else {
                    None
                };
                items.push((e, t));
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        let body = self.block()?;
        Ok(StmtKind::With { items, body })
    }

    fn star_target(&mut self) -> PResult<Expr> {
        self.expr_bitor()
    }

    fn decorated(&mut self) -> PResult<StmtKind> {
        let mut decorators = Vec::new();
        while self.eat_op("@") {
            decorators.push(self.named_test()?);
            match self.tok() {
                Tok::Newline => {
                    self.bump();
                }
                _ => return self.err("expected newline after decorator"),
            }
        }
        self.eat_kw("async");
        if self.is_kw("def") {
            self.funcdef(decorators)
        } else if self.is_kw("class") {
            self.classdef(decorators)
        } else {
            self.err("expected def or class after decorator")
        }
    }

    fn type_params(&mut self) -> PResult<()> {
        if self.is_op("[") {
            self.skip_balanced()?;
        }
        Ok(())
    }

    fn skip_balanced(&mut self) -> PResult<()> {
        let mut depth = 0usize;
        loop {
            match self.tok() {
                Tok::Op("(") | Tok::Op("[") | Tok::Op("{") => depth += 1,
                Tok::Op(")") | Tok::Op("]") | Tok::Op("}") => {
                    depth -= 1;
                    if depth == 0 {
                        self.bump();
                        return Ok(());
                    }
                }
                Tok::End => return self.err("unbalanced brackets"),
                _ => {}
            }
            self.bump();
        }
    }

    fn funcdef(&mut self, decorators: Vec<Expr>) -> PResult<StmtKind> {
        self.expect_kw("def")?;
        let name = self.ident()?;
        self.type_params()?;
        self.expect_op("(")?;
        let params = self.params(")")?;
        self.expect_op(")")?;
        let returns = if self.eat_op("->") {
            Some(self.test()?)
        } else {
            None
        };
        let body = self.block()?;
        Ok(StmtKind::FunctionDef {
            name,
            params,
            decorators,
            returns,
            body,
        })
    }

    fn params(&mut self, close: &str) -> PResult<Vec<Param>> {
        let mut out = Vec::new();
        loop {
            if self.is_op(close) {
                break;
            }
            if self.eat_op("/") {
            } else if self.eat_op("**") || self.eat_op("*") {
                if self.at_name() {
                    let name = self.ident()?;
                    if close == ")" && self.eat_op(":") {
                        self.test()?;
                    }
                    out.push(Param {
                        name,
                        default: None,
                    });
                }
            } else {
                let name = self.ident()?;
                if close == ")" && self.eat_op(":") {
                    self.test()?;
                }
                let default = if self.eat_op("=") {
                    Some(self.test()?)
                } else {
                    None
                };
                out.push(Param { name, default });
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(out)
    }

    fn classdef(&mut self, decorators: Vec<Expr>) -> PResult<StmtKind> {
        self.expect_kw("class")?;
        let name = self.ident()?;
        self.type_params()?;
        let mut bases = Vec::new();
        if self.eat_op("(") {
            let call = self.call_args()?;
            bases.extend(call.0);
            bases.extend(call.1.into_iter().map(|k| k.value));
            self.expect_op(")")?;
        }
        let body = self.block()?;
        Ok(StmtKind::ClassDef {
            name,
            bases,
            decorators,
            body,
        })
    }

    fn try_match(&mut self) -> PResult<Option<StmtKind>> {
        // soft keyword: only a match statement if `match <expr>:` NEWLINE INDENT case
        let save = self.pos;
        self.bump();
        let subject = match self.star_expressions() {
            Ok(e) => e,
            Err(_) => {
                self.pos = save;
                return Ok(None);
            }
        };
        if !(self.is_op(":")
            && matches!(self.tok_at(1), Tok::Newline)
            && matches!(self.tok_at(2), Tok::Indent)
            && matches!(self.tok_at(3), Tok::Name(n) if n == "case"))
        {
            self.pos = save;
            return Ok(None);
        }
        self.bump();
        self.bump();
        self.bump();
        let mut cases = Vec::new();
        loop {
            match self.tok() {
                Tok::Dedent => {
                    self.bump();
                    break;
                }
                Tok::End => break,
                Tok::Newline => {
                    self.bump();
                }
                Tok::Name(n) if n == "case" => {
                    self.bump();
                    // pattern and guard: skip to the block colon at depth 0
                    let mut depth = 0usize;
                    loop {
                        match self.tok() {
                            Tok::Op("(") | Tok::Op("[") | Tok::Op("{") => depth += 1,
                            Tok::Op(")") | Tok::Op("]") | Tok::Op("}") => {
                                depth = depth.saturating_sub(1)
                            }
                            Tok::Op(":") if depth == 0 => break,
                            Tok::Newline | Tok::End => return self.err("malformed case"),
                            _ => {}
                        }
                        self.bump();
                    }
                    cases.push(self.block()?);
                }
                _ => return self.err("expected `case`"),
            }
        }
        Ok(Some(StmtKind::Match { subject, cases }))
    }

    // ---- expressions ----------------------------------------------------

    fn star_expressions_or_yield(&mut self) -> PResult<Expr> {
        if self.is_kw("yield") {
            return self.yield_expr();
        }
        self.star_expressions()
    }

    fn yield_expr(&mut self) -> PResult<Expr> {
        let line = self.line();
        self.expect_kw("yield")?;
        if self.eat_kw("from") {
            let e = self.test()?;
            return Ok(Expr::new(ExprKind::Other(vec![e]), line));
        }
        if matches!(self.tok(), Tok::Newline | Tok::End)
            || self.is_op(")")
            || self.is_op("=")
            || self.is_op(";")
        {
            return Ok(Expr::new(ExprKind::Constant, line));
        }
        let e = self.star_expressions()?;
        Ok(Expr::new(ExprKind::Other(vec![e]), line))
    }

    /// Comma-separated expressions; a trailing comma or several items yield
    /// a tuple.
    fn star_expressions(&mut self) -> PResult<Expr> {
        let line = self.line();
        let first = self.star_test()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.expr_start() {
                items.push(self.star_test()?);
            } else {
                break;
            }
        }
        Ok(Expr::new(ExprKind::Sequence(items), line))
    }

    fn test_list_as_expr(&mut self) -> PResult<Expr> {
        self.star_expressions()
    }

    fn exprlist(&mut self) -> PResult<Expr> {
        let line = self.line();
        let first = self.star_expr_bitor()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.expr_start() && !self.is_kw("in") {
                items.push(self.star_expr_bitor()?);
            } else {
                break;
            }
        }
        Ok(Expr::new(ExprKind::Sequence(items), line))
    }

    fn star_expr_bitor(&mut self) -> PResult<Expr> {
        let line = self.line();
        if self.eat_op("*") {
            let e = self.expr_bitor()?;
            return Ok(Expr::new(ExprKind::Starred(Box::new(e)), line));
        }
        self.expr_bitor()
    }

    fn expr_start(&self) -> bool {
        match self.tok() {
            Tok::Name(n) => {
                !KEYWORDS.contains(&n.as_str())
                    || matches!(
                        n.as_str(),
                        "None" | "True" | "False" | "not" | "lambda" | "await" | "yield"
                    )
            }
            Tok::Number | Tok::Str(_) => true,
            Tok::Op(o) => matches!(*o, "(" | "[" | "{" | "-" | "+" | "~" | "*" | "..."),
            _ => false,
        }
    }

    fn star_test(&mut self) -> PResult<Expr> {
        let line = self.line();
        if self.eat_op("*") {
            let e = self.expr_bitor()?;
            return Ok(Expr::new(ExprKind::Starred(Box::new(e)), line));
        }
        self.named_test()
    }

    fn named_test(&mut self) -> PResult<Expr> {
        let line = self.line();
        if self.at_name() && matches!(self.tok_at(1), Tok::Op(":=")) {
            let name = self.ident()?;
            self.bump();
            let value = self.test()?;
            return Ok(Expr::new(
                ExprKind::NamedExpr(
                    Box::new(Expr::new(ExprKind::Name(name), line)),
                    Box::new(value),
                ),
                line,
            ));
        }
        self.test()
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        let line = self.line();
        let body = self.or_test()?;
        if self.is_kw("if") {
            // guard against comprehension `if` clauses: those are handled by
            // the caller because they never have an `else`
            let save = self.pos;
            self.bump();
            let test = self.or_test()?;
            if self.eat_kw("else") {
                let orelse = self.test()?;
                return Ok(Expr::new(
                    ExprKind::IfExp {
                        test: Box::new(test),
                        body: Box::new(body),
                        orelse: Box::new(orelse),
                    },
                    line,
                ));
            }
            self.pos = save;
        }
        Ok(body)
    }

    fn test_nocond(&mut self) -> PResult<Expr> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        self.or_test()
    }

    fn lambda(&mut self) -> PResult<Expr> {
        let line = self.line();
        self.expect_kw("lambda")?;
        let params = self.params(":")?;
        self.expect_op(":")?;
        let body = self.test()?;
        let mut kids: Vec<Expr> = params.into_iter().filter_map(|p| p.default).collect();
        kids.push(body);
        Ok(Expr::new(ExprKind::Other(kids), line))
    }

    fn or_test(&mut self) -> PResult<Expr> {
        let line = self.line();
        let first = self.and_test()?;
        if !self.is_kw("or") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_kw("or") {
            items.push(self.and_test()?);
        }
        Ok(Expr::new(ExprKind::Other(items), line))
    }

    fn and_test(&mut self) -> PResult<Expr> {
        let line = self.line();
        let first = self.not_test()?;
        if !self.is_kw("and") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_kw("and") {
            items.push(self.not_test()?);
        }
        Ok(Expr::new(ExprKind::Other(items), line))
    }

    fn not_test(&mut self) -> PResult<Expr> {
        let line = self.line();
        if self.eat_kw("not") {
            let e = self.not_test()?;
            return Ok(Expr::new(ExprKind::Other(vec![e]), line));
        }
        self.comparison()
    }

    fn comp_op(&mut self) -> bool {
        match self.tok() {
            Tok::Op(o) if matches!(*o, "<" | ">" | "==" | ">=" | "<=" | "!=") => {
                self.bump();
                true
            }
            Tok::Name(n) if n == "in" => {
                self.bump();
                true
            }
            Tok::Name(n) if n == "not" && matches!(self.tok_at(1), Tok::Name(m) if m == "in") => {
                self.bump();
                self.bump();
                true
            }
            Tok::Name(n) if n == "is" => {
                self.bump();
                self.eat_kw("not");
                true
            }
            _ => false,
        }
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let line = self.line();
        let first = self.expr_bitor()?;
        let mut items = vec![first];
        while self.comp_op() {
            items.push(self.expr_bitor()?);
        }
        if items.len() == 1 {
            Ok(items.pop().unwrap())
        } else {
            Ok(Expr::new(ExprKind::Other(items), line))
        }
    }

    fn binary(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        let line = self.line();
        let first = next(self)?;
        let mut items = vec![first];
        loop {
            let matched = matches!(self.tok(), Tok::Op(o) if ops.contains(o));
            if !matched {
                break;
            }
            self.bump();
            items.push(next(self)?);
        }
        if items.len() == 1 {
            Ok(items.pop().unwrap())
        } else {
            Ok(Expr::new(ExprKind::Other(items), line))
        }
    }

    fn expr_bitor(&mut self) -> PResult<Expr> {
        self.binary(&["|"], Self::expr_xor)
    }

    fn expr_xor(&mut self) -> PResult<Expr> {
        self.binary(&["^"], Self::expr_and)
    }

    fn expr_and(&mut self) -> PResult<Expr> {
        self.binary(&["&"], Self::expr_shift)
    }

    fn expr_shift(&mut self) -> PResult<Expr> {
        self.binary(&["<<", ">>"], Self::expr_arith)
    }

    fn expr_arith(&mut self) -> PResult<Expr> {
        self.binary(&["+", "-"], Self::expr_term)
    }

    fn expr_term(&mut self) -> PResult<Expr> {
        self.binary(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let line = self.line();
        if matches!(self.tok(), Tok::Op("+") | Tok::Op("-") | Tok::Op("~")) {
            self.bump();
            let e = self.factor()?;
            return Ok(Expr::new(ExprKind::Other(vec![e]), line));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let line = self.line();
        let base = if self.eat_kw("await") {
            let e = self.primary()?;
            Expr::new(ExprKind::Other(vec![e]), line)
        } else {
            self.primary()?
        };
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(Expr::new(ExprKind::Other(vec![base, exp]), line));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        loop {
            let line = self.line();
            if self.eat_op(".") {
                let name = match self.tok().clone() {
                    Tok::Name(n) => {
                        self.bump();
                        n
                    }
                    other => return self.err(format!("expected attribute name, found {other:?}")),
                };
                e = Expr::new(ExprKind::Attribute(Box::new(e), name), line);
            } else if self.is_op("(") {
                let call_line = e.line;
                self.bump();
                let (args, keywords) = self.call_args()?;
                self.expect_op(")")?;
                e = Expr::new(
                    ExprKind::Call(Box::new(Call {
                        func: e,
                        args,
                        keywords,
                    })),
                    call_line,
                );
            } else if self.is_op("[") {
                self.bump();
                let idx = self.subscript_list()?;
                self.expect_op("]")?;
                e = Expr::new(ExprKind::Other(vec![e, idx]), line);
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn call_args(&mut self) -> PResult<(Vec<Expr>, Vec<Keyword>)> {
        let mut args = Vec::new();
        let mut keywords = Vec::new();
        loop {
            if self.is_op(")") {
                break;
            }
            let line = self.line();
            if self.eat_op("**") {
                let v = self.test()?;
                keywords.push(Keyword {
                    name: None,
                    value: v,
                });
            } else if self.eat_op("*") {
                let v = self.test()?;
                args.push(Expr::new(ExprKind::Starred(Box::new(v)), line));
            } else if matches!(self.tok(), Tok::Name(_)) && matches!(self.tok_at(1), Tok::Op("=")) {
                let name = self.ident()?;
                self.bump();
                let v = self.test()?;
                keywords.push(Keyword {
                    name: Some(name),
                    value: v,
                });
            } else {
                let v = self.named_test()?;
                if self.is_kw("for") || self.is_kw("async") {
                    let g = self.comprehension(v, line)?;
                    args.push(g);
                } else {
                    args.push(v);
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok((args, keywords))
    }

    fn subscript_list(&mut self) -> PResult<Expr> {
        let line = self.line();
        let mut items = vec![self.subscript()?];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            items.push(self.subscript()?);
        }
        if items.len() == 1 {
            Ok(items.pop().unwrap())
        } else {
            Ok(Expr::new(ExprKind::Other(items), line))
        }
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let line = self.line();
        let mut parts = Vec::new();
        if !self.is_op(":") {
            parts.push(self.star_test()?);
            if !self.is_op(":") {
                return Ok(parts.pop().unwrap());
            }
        }
        // slice
        while self.eat_op(":") {
            if !(self.is_op(":") || self.is_op("]") || self.is_op(",")) {
                parts.push(self.test()?);
            }
        }
        Ok(Expr::new(ExprKind::Other(parts), line))
    }

    fn comprehension(&mut self, elt: Expr, line: u32) -> PResult<Expr> {
        let mut kids = vec![elt];
        loop {
            if self.eat_kw("async") {
                self.expect_kw("for")?;
            } else if !self.eat_kw("for") {
                break;
            }
            kids.push(self.exprlist()?);
            self.expect_kw("in")?;
            kids.push(self.or_test()?);
            while self.eat_kw("if") {
                kids.push(self.test_nocond()?);
            }
        }
        Ok(Expr::new(ExprKind::Other(kids), line))
    }

    fn atom(&mut self) -> PResult<Expr> {
        let line = self.line();
        match self.tok().clone() {
            Tok::Name(n) => match n.as_str() {
                "None" | "True" | "False" => {
                    self.bump();
                    Ok(Expr::new(ExprKind::Constant, line))
                }
                _ if KEYWORDS.contains(&n.as_str()) => {
                    self.err(format!("unexpected keyword `{n}`"))
                }
                _ => {
                    self.bump();
                    Ok(Expr::new(ExprKind::Name(n), line))
                }
            },
            Tok::Number => {
                self.bump();
                Ok(Expr::new(ExprKind::Constant, line))
            }
            Tok::Op("...") => {
                self.bump();
                Ok(Expr::new(ExprKind::Constant, line))
            }
            Tok::Str(_) => self.strings(),
            Tok::Op("(") => {
                self.bump();
                if self.eat_op(")") {
                    return Ok(Expr::new(ExprKind::Sequence(Vec::new()), line));
                }
                if self.is_kw("yield") {
                    let y = self.yield_expr()?;
                    self.expect_op(")")?;
                    return Ok(y);
                }
                let first = self.star_test()?;
                if self.is_kw("for") || self.is_kw("async") {
                    let g = self.comprehension(first, line)?;
                    self.expect_op(")")?;
                    return Ok(g);
                }
                if self.eat_op(")") {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.is_op(")") {
                        break;
                    }
                    items.push(self.star_test()?);
                }
                self.expect_op(")")?;
                Ok(Expr::new(ExprKind::Sequence(items), line))
            }
            Tok::Op("[") => {
                self.bump();
                if self.eat_op("]") {
                    return Ok(Expr::new(ExprKind::Sequence(Vec::new()), line));
                }
                let first = self.star_test()?;
                if self.is_kw("for") || self.is_kw("async") {
                    let g = self.comprehension(first, line)?;
                    self.expect_op("]")?;
                    return Ok(g);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.is_op("]") {
                        break;
                    }
                    items.push(self.star_test()?);
                }
                self.expect_op("]")?;
                Ok(Expr::new(ExprKind::Sequence(items), line))
            }
            Tok::Op("{") => self.dict_or_set(),
            other => self.err(format!("unexpected token {other:?}")),
        }
    }

    fn dict_or_set(&mut self) -> PResult<Expr> {
        let line = self.line();
        self.expect_op("{")?;
        let mut kids = Vec::new();
        if self.eat_op("}") {
            return Ok(Expr::new(ExprKind::Other(kids), line));
        }
        let mut first = true;
        loop {
            if self.is_op("}") {
                break;
            }
            if self.eat_op("**") {
                kids.push(self.expr_bitor()?);
            } else {
                let k = self.star_test()?;
                if self.eat_op(":") {
                    let v = self.test()?;
                    kids.push(k);
                    kids.push(v);
                } else {
                    kids.push(k);
                }
            }
            if first && (self.is_kw("for") || self.is_kw("async")) {
                let elt = Expr::new(ExprKind::Other(std::mem::take(&mut kids)), line);
                let g = self.comprehension(elt, line)?;
                self.expect_op("}")?;
                return Ok(g);
            }
            first = false;
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op("}")?;
        Ok(Expr::new(ExprKind::Other(kids), line))
    }

    fn strings(&mut self) -> PResult<Expr> {
        let line = self.line();
        let mut parts: Vec<StrTok> = Vec::new();
        while let Tok::Str(s) = self.tok().clone() {
            parts.push(s);
            self.bump();
        }
        let is_bytes = parts.iter().any(|p| p.is_bytes);
        let has_placeholders = parts.iter().any(|p| p.has_placeholders);
        let value = parts.iter().map(|p| p.value.as_str()).collect::<String>();
        Ok(Expr::new(
            ExprKind::Str(StrLit {
                value,
                parts: parts.len(),
                is_bytes,
                has_placeholders,
            }),
            line,
        ))
    }
}

trait TokExt {
    fn name_str(&self) -> &str;
}

impl TokExt for Tok {
    fn name_str(&self) -> &str {
        match self {
            Tok::Name(n) => n,
            _ => "",
        }
    }
}
