//! A reduced Python syntax tree.
//!
//! Only the node kinds the reuse analysis inspects are distinguished; every
//! other compound expression collapses into `Expr::Other` with its children
//! so nested calls are still visited.

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Name(String),
    Str(StrLit),
    Attribute(Box<Expr>, String),
    Call(Box<Call>),
    IfExp {
        test: Box<Expr>,
        body: Box<Expr>,
        orelse: Box<Expr>,
    },
    /// Tuple or list display; also the shape of unpacking targets.
    Sequence(Vec<Expr>),
    Starred(Box<Expr>),
    NamedExpr(Box<Expr>, Box<Expr>),
    /// Numbers, `None`, `True`, `...` and similar leaves.
    Constant,
    Other(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrLit {
    pub value: String,
    /// Number of adjacent literal tokens concatenated into this one.
    pub parts: usize,
    pub is_bytes: bool,
    pub has_placeholders: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub func: Expr,
    pub args: Vec<Expr>,
    pub keywords: Vec<Keyword>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyword {
    /// `None` for `**kwargs` splats.
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alias {
    pub name: String,
    pub asname: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub default: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Handler {
    pub kind: Option<Expr>,
    pub name: Option<String>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Import(Vec<Alias>),
    ImportFrom {
        module: Option<String>,
        level: usize,
        names: Vec<Alias>,
    },
    Assign {
        targets: Vec<Expr>,
        value: Expr,
    },
    AnnAssign {
        target: Expr,
        annotation: Expr,
        value: Option<Expr>,
    },
    AugAssign {
        target: Expr,
        value: Expr,
    },
    Expr(Expr),
    If {
        test: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    For {
        target: Expr,
        iter: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    While {
        test: Expr,
        body: Vec<Stmt>,
        orelse: Vec<Stmt>,
    },
    With {
        items: Vec<(Expr, Option<Expr>)>,
        body: Vec<Stmt>,
    },
    Try {
        body: Vec<Stmt>,
        handlers: Vec<Handler>,
        orelse: Vec<Stmt>,
        finalbody: Vec<Stmt>,
    },
    Match {
        subject: Expr,
        cases: Vec<Vec<Stmt>>,
    },
    FunctionDef {
        name: String,
        params: Vec<Param>,
        decorators: Vec<Expr>,
        returns: Option<Expr>,
        body: Vec<Stmt>,
    },
    ClassDef {
        name: String,
        bases: Vec<Expr>,
        decorators: Vec<Expr>,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Delete(Vec<Expr>),
    Global(Vec<String>),
    Nonlocal(Vec<String>),
    /// raise / assert / yield-less leaves carrying expressions to visit.
    Other(Vec<Expr>),
    Pass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub body: Vec<Stmt>,
}

impl Expr {
    pub fn new(kind: ExprKind, line: u32) -> Self {
        Expr { kind, line }
    }

    /// Dotted path for `a.b.c` chains of names, e.g. `self.model_name`.
    pub fn dotted(&self) -> Option<String> {
        match &self.kind {
            ExprKind::Name(n) => Some(n.clone()),
            ExprKind::Attribute(base, attr) => base.dotted().map(|b| format!("{b}.{attr}")),
            _ => None,
        }
    }

    /// Immediate sub-expressions, in source order.
    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Name(_) | ExprKind::Str(_) | ExprKind::Constant => Vec::new(),
            ExprKind::Attribute(b, _) => vec![b],
            ExprKind::Call(c) => {
                let mut v = vec![&c.func];
                v.extend(c.args.iter());
                v.extend(c.keywords.iter().map(|k| &k.value));
                v
            }
            ExprKind::IfExp { test, body, orelse } => vec![body, test, orelse],
            ExprKind::Sequence(items) | ExprKind::Other(items) => items.iter().collect(),
            ExprKind::Starred(e) => vec![e],
            ExprKind::NamedExpr(t, v) => vec![t, v],
        }
    }
}
