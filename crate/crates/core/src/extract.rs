//! Static PTM-occurrence extraction from Python-syntax sources.
//!
//! The analysis is a single linear pass per scope. Each name maps to the set
//! of values it may hold at the current program point; `if`/`try`/loop
//! bodies fork the environment and merge it back, which is how conditional
//! reassignments yield one occurrence per branch value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::catalog::{CallKind, Catalog, PtmIndex, ReuseSignature};
use crate::multiset::Multiset;
use crate::python::ast::{Call, Expr, ExprKind, Param, Stmt, StmtKind};
use crate::python::{parse_module, Comment, Module};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    Literal,
    Variable,
    ConditionalBranch,
    Attribute,
    ClassDefault,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PtmOccurrence {
    pub ptm_id: String,
    pub file_path: String,
    pub line: u32,
    pub signature: ReuseSignature,
    pub resolution: Resolution,
    pub indexed: bool,
    /// Fully qualified callee (e.g. `transformers.AutoModel.from_pretrained`),
    /// or `None` when the callee is not rooted in any import.
    pub callee: Option<String>,
    /// Literal `revision=` pin passed alongside the identifier, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision_pin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSnapshot {
    pub file_path: String,
    /// Logical identity that survives renames; equals `file_path` unless a
    /// rename was tracked.
    pub file_id: String,
    pub revision: String,
    pub occurrences: Vec<PtmOccurrence>,
}

impl FileSnapshot {
    pub fn counts(&self) -> Multiset<String> {
        self.occurrences.iter().map(|o| o.ptm_id.clone()).collect()
    }
}

/// An import that binds a local name to a module or a symbol in it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImportBinding {
    pub alias: String,
    /// Top-level package, e.g. `transformers`.
    pub library: String,
    /// Full dotted module path that was imported from.
    pub module: String,
    /// Imported symbol for `from` imports (`*` for star imports).
    pub symbol: Option<String>,
    pub line: u32,
}

impl ImportBinding {
    /// Qualified path the alias refers to.
    pub fn path(&self) -> String {
        match &self.symbol {
            Some(s) if s != "*" => format!("{}.{}", self.module, s),
            _ => self.module.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Parse,
    Decode,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file_path: String,
    pub line: u32,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {:?}: {}",
            self.file_path, self.line, self.kind, self.message
        )
    }
}

/// Returns true when `path` lies under the library namespace.
fn within_library(path: &str, library: &str) -> bool {
    path == library
        || (path.len() > library.len()
            && path.starts_with(library)
            && path.as_bytes()[library.len()] == b'.')
}

fn related(module: &str, library: &str) -> bool {
    within_library(module, library) || within_library(library, module)
}

/// Import bindings in the file that refer to a catalog library, in source
/// order. Relative imports never match.
pub fn match_imports(module: &Module, catalog: &Catalog) -> Vec<ImportBinding> {
    let mut out = Vec::new();
    collect_imports(&module.body, &mut out);
    let libs = catalog.libraries();
    out.retain(|b| libs.iter().any(|l| related(&b.module, l)));
    out
}

fn collect_imports(body: &[Stmt], out: &mut Vec<ImportBinding>) {
    for s in body {
        out.extend(import_bindings(s));
        for child in child_blocks(s) {
            collect_imports(child, out);
        }
    }
}

fn import_bindings(s: &Stmt) -> Vec<ImportBinding> {
    match &s.kind {
        StmtKind::Import(names) => names
            .iter()
            .map(|a| {
                let top = a.name.split('.').next().unwrap_or(&a.name).to_string();
                match &a.asname {
                    Some(alias) => ImportBinding {
                        alias: alias.clone(),
                        library: top,
                        module: a.name.clone(),
                        symbol: None,
                        line: s.line,
                    },
                    None => ImportBinding {
                        alias: top.clone(),
                        library: top.clone(),
                        module: top,
                        symbol: None,
                        line: s.line,
                    },
                }
            })
            .collect(),
        StmtKind::ImportFrom {
            module: Some(m),
            level: 0,
            names,
        } => {
            let top = m.split('.').next().unwrap_or(m).to_string();
            names
                .iter()
                .map(|a| ImportBinding {
                    alias: a.asname.clone().unwrap_or_else(|| a.name.clone()),
                    library: top.clone(),
                    module: m.clone(),
                    symbol: Some(a.name.clone()),
                    line: s.line,
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

fn child_blocks(s: &Stmt) -> Vec<&[Stmt]> {
    match &s.kind {
        StmtKind::If { body, orelse, .. }
        | StmtKind::For { body, orelse, .. }
        | StmtKind::While { body, orelse, .. } => vec![body, orelse],
        StmtKind::With { body, .. }
        | StmtKind::FunctionDef { body, .. }
        | StmtKind::ClassDef { body, .. } => vec![body],
        StmtKind::Try {
            body,
            handlers,
            orelse,
            finalbody,
        } => {
            let mut v: Vec<&[Stmt]> = vec![body, orelse, finalbody];
            v.extend(handlers.iter().map(|h| h.body.as_slice()));
            v
        }
        StmtKind::Match { cases, .. } => cases.iter().map(Vec::as_slice).collect(),
        _ => Vec::new(),
    }
}

// ---- value environment ------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str {
        value: String,
        origin: Resolution,
    },
    /// Something imported, addressed by qualified path.
    Import {
        path: String,
        is_module: bool,
    },
    /// Result of calling something from a library.
    Object {
        path: String,
    },
    Class(Rc<ClassCtx>),
    Unknown(&'static str),
}

impl Value {
    fn same_as(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Str { value: a, .. }, Value::Str { value: b, .. }) => a == b,
            (Value::Class(a), Value::Class(b)) => Rc::ptr_eq(a, b),
            _ => self == other,
        }
    }
}

type ValueSet = Vec<Value>;
type Env = BTreeMap<String, ValueSet>;

#[derive(Debug, PartialEq, Default)]
struct ClassCtx {
    name: String,
    class_attrs: Env,
    instance_attrs: std::cell::RefCell<Env>,
}

fn push_unique(set: &mut ValueSet, v: Value) {
    if let Some(existing) = set.iter_mut().find(|e| e.same_as(&v)) {
        if let (Value::Str { origin: o1, .. }, Value::Str { origin: o2, .. }) = (existing, &v) {
            if *o2 == Resolution::ConditionalBranch {
                *o1 = Resolution::ConditionalBranch;
            }
        }
        return;
    }
    set.push(v);
}

fn mark_conditional(set: &mut ValueSet) {
    for v in set.iter_mut() {
        if let Value::Str { origin, .. } = v {
            *origin = Resolution::ConditionalBranch;
        }
    }
}

fn sets_equal(a: Option<&ValueSet>, b: Option<&ValueSet>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => {
            a.len() == b.len() && a.iter().all(|x| b.iter().any(|y| x.same_as(y)))
        }
        _ => false,
    }
}

/// Joins the environments of alternative control-flow paths.
fn merge(branches: Vec<Env>) -> Env {
    let keys: BTreeSet<String> = branches.iter().flat_map(|e| e.keys().cloned()).collect();
    let mut out = Env::new();
    for k in keys {
        let first = branches[0].get(&k);
        let all_same = branches.iter().all(|e| sets_equal(first, e.get(&k)));
        let mut merged = ValueSet::new();
        for b in &branches {
            if let Some(set) = b.get(&k) {
                for v in set {
                    push_unique(&mut merged, v.clone());
                }
            }
        }
        if !all_same {
            mark_conditional(&mut merged);
        }
        out.insert(k, merged);
    }
    out
}

// ---- analysis -----------------------------------------------------------------

struct Scope {
    env: Env,
    /// Frozen enclosing environments, innermost first.
    outer: Vec<Rc<Env>>,
    class: Option<Rc<ClassCtx>>,
    self_name: Option<String>,
    deferred: Vec<Deferred>,
}

enum Deferred {
    Function {
        params: Vec<Param>,
        body: Vec<Stmt>,
    },
    Class {
        ctx: Rc<ClassCtx>,
        methods: Vec<Method>,
        outer: Vec<Rc<Env>>,
    },
}

struct Method {
    name: String,
    params: Vec<Param>,
    body: Vec<Stmt>,
    is_static: bool,
}

impl Scope {
    fn new(outer: Vec<Rc<Env>>) -> Self {
        Scope {
            env: Env::new(),
            outer,
            class: None,
            self_name: None,
            deferred: Vec::new(),
        }
    }

    fn lookup_name(&self, name: &str) -> Option<ValueSet> {
        if let Some(v) = self.env.get(name) {
            return Some(v.clone());
        }
        self.outer.iter().find_map(|e| e.get(name).cloned())
    }
}

/// Raw candidate reuse sites before false-positive filtering, with the
/// diagnostics collected on the way.
pub struct Extraction {
    pub occurrences: Vec<PtmOccurrence>,
    pub bindings: Vec<ImportBinding>,
    pub diagnostics: Vec<Diagnostic>,
    pub comments: Vec<Comment>,
    pub line_count: u32,
}

struct Analyzer<'a> {
    catalog: &'a Catalog,
    index: &'a PtmIndex,
    file_path: &'a str,
    patterns: BTreeSet<&'a str>,
    occurrences: Vec<(usize, PtmOccurrence)>,
    diagnostics: Vec<Diagnostic>,
    seq: usize,
}

/// Parses `src` and extracts every call matching a catalog call pattern whose
/// PTM argument resolves to at least one string value. The callee binding is
/// recorded but not enforced here; see [`crate::filters::apply_fp_filters`].
pub fn extract_occurrences(
    src: &str,
    file_path: &str,
    catalog: &Catalog,
    index: &PtmIndex,
) -> Extraction {
    let parsed = match parse_module(src) {
        Ok(p) => p,
        Err(e) => {
            return Extraction {
                occurrences: Vec::new(),
                bindings: Vec::new(),
                diagnostics: vec![Diagnostic {
                    file_path: file_path.to_string(),
                    line: e.line,
                    kind: DiagnosticKind::Parse,
                    message: e.message,
                }],
                comments: Vec::new(),
                line_count: src.lines().count().max(1) as u32,
            }
        }
    };
    let mut a = Analyzer {
        catalog,
        index,
        file_path,
        patterns: catalog.call_patterns(),
        occurrences: Vec::new(),
        diagnostics: Vec::new(),
        seq: 0,
    };
    let mut scope = Scope::new(Vec::new());
    a.exec_block(&mut scope, &parsed.module.body);
    a.finish_scope(scope);

    let mut occ = a.occurrences;
    occ.sort_by(|(sa, a), (sb, b)| a.line.cmp(&b.line).then(sa.cmp(sb)));
    let mut diagnostics = a.diagnostics;
    diagnostics.sort_by(|a, b| a.line.cmp(&b.line).then_with(|| a.message.cmp(&b.message)));
    diagnostics.dedup();
    Extraction {
        occurrences: occ.into_iter().map(|(_, o)| o).collect(),
        bindings: match_imports(&parsed.module, catalog),
        diagnostics,
        comments: parsed.comments,
        line_count: parsed.line_count,
    }
}

impl<'a> Analyzer<'a> {
    fn finish_scope(&mut self, scope: Scope) {
        let Scope {
            env,
            outer,
            deferred,
            ..
        } = scope;
        let mut chain = vec![Rc::new(env)];
        chain.extend(outer);
        for d in deferred {
            match d {
                Deferred::Function { params, body } => {
                    self.run_function(&params, &body, chain.clone(), None, None);
                }
                Deferred::Class {
                    ctx,
                    methods,
                    outer: class_outer,
                } => {
                    // methods see the module/function scope that defined the
                    // class, not the class body
                    let mut mchain = chain.clone();
                    if class_outer.len() + 1 < mchain.len() {
                        mchain.truncate(class_outer.len() + 1);
                    }
                    let (init, rest): (Vec<_>, Vec<_>) =
                        methods.into_iter().partition(|m| m.name == "__init__");
                    for m in init.iter().chain(rest.iter()) {
                        let self_name = if m.is_static {
                            None
                        } else {
                            m.params.first().map(|p| p.name.clone())
                        };
                        let final_env = self.run_function(
                            &m.params,
                            &m.body,
                            mchain.clone(),
                            Some(ctx.clone()),
                            self_name.clone(),
                        );
                        if m.name == "__init__" {
                            if let Some(sn) = self_name {
                                let prefix = format!("{sn}.");
                                let mut attrs = ctx.instance_attrs.borrow_mut();
                                for (k, v) in final_env.iter() {
                                    if let Some(attr) = k.strip_prefix(&prefix) {
                                        if !attr.contains('.') {
                                            attrs.insert(attr.to_string(), v.clone());
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn run_function(
        &mut self,
        params: &[Param],
        body: &[Stmt],
        outer: Vec<Rc<Env>>,
        class: Option<Rc<ClassCtx>>,
        self_name: Option<String>,
    ) -> Env {
        let mut scope = Scope::new(outer);
        scope.class = class;
        scope.self_name = self_name.clone();
        for p in params {
            if let Some(d) = &p.default {
                self.visit_expr(&mut scope, d);
            }
            if Some(&p.name) != self_name.as_ref() {
                scope
                    .env
                    .insert(p.name.clone(), vec![Value::Unknown("function parameter")]);
            }
        }
        self.exec_block(&mut scope, body);
        let env = scope.env.clone();
        self.finish_scope(scope);
        env
    }

    fn exec_block(&mut self, scope: &mut Scope, body: &[Stmt]) {
        for s in body {
            self.exec_stmt(scope, s);
        }
    }

    fn exec_branch(&mut self, scope: &mut Scope, pre: &Env, body: &[Stmt]) -> Env {
        scope.env = pre.clone();
        self.exec_block(scope, body);
        std::mem::take(&mut scope.env)
    }

    fn exec_stmt(&mut self, scope: &mut Scope, s: &Stmt) {
        match &s.kind {
            StmtKind::Import(_) | StmtKind::ImportFrom { .. } => {
                for b in import_bindings(s) {
                    let is_module = b.symbol.is_none();
                    if b.symbol.as_deref() == Some("*") {
                        // star import: resolve bare calls to catalog functions
                        for sig in self.catalog.signatures() {
                            if related(&b.module, &sig.library_name) {
                                scope.env.insert(
                                    sig.call_pattern.clone(),
                                    vec![Value::Import {
                                        path: format!("{}.{}", b.module, sig.call_pattern),
                                        is_module: false,
                                    }],
                                );
                            }
                        }
                        continue;
                    }
                    scope.env.insert(
                        b.alias.clone(),
                        vec![Value::Import {
                            path: b.path(),
                            is_module,
                        }],
                    );
                }
            }
            StmtKind::Assign { targets, value } => {
                self.visit_expr(scope, value);
                let vals = self.eval(scope, value);
                for t in targets {
                    self.assign(scope, t, vals.clone());
                }
            }
            StmtKind::AnnAssign { target, value, .. } => {
                if let Some(v) = value {
                    self.visit_expr(scope, v);
                    let vals = self.eval(scope, v);
                    self.assign(scope, target, vals);
                }
            }
            StmtKind::AugAssign { target, value } => {
                self.visit_expr(scope, value);
                self.assign(scope, target, vec![Value::Unknown("augmented assignment")]);
            }
            StmtKind::Expr(e) | StmtKind::Return(Some(e)) => self.visit_expr(scope, e),
            StmtKind::Other(es) => {
                for e in es {
                    self.visit_expr(scope, e);
                }
            }
            StmtKind::Delete(ts) => {
                for t in ts {
                    if let Some(k) = t.dotted() {
                        scope.env.remove(&k);
                    }
                }
            }
            StmtKind::If { test, body, orelse } => {
                self.visit_expr(scope, test);
                let pre = std::mem::take(&mut scope.env);
                let a = self.exec_branch(scope, &pre, body);
                let b = self.exec_branch(scope, &pre, orelse);
                scope.env = merge(vec![a, b]);
            }
            StmtKind::For {
                target,
                iter,
                body,
                orelse,
            } => {
                self.visit_expr(scope, iter);
                let pre = std::mem::take(&mut scope.env);
                let mut loop_pre = pre.clone();
                bind_unknown(&mut loop_pre, target, "loop variable");
                let a = self.exec_branch(scope, &loop_pre, body);
                let a = {
                    let mut after = a;
                    self.exec_block_into(scope, &mut after, orelse);
                    after
                };
                let b = self.exec_branch(scope, &pre, orelse);
                scope.env = merge(vec![a, b]);
            }
            StmtKind::While { test, body, orelse } => {
                self.visit_expr(scope, test);
                let pre = std::mem::take(&mut scope.env);
                let mut a = self.exec_branch(scope, &pre, body);
                self.exec_block_into(scope, &mut a, orelse);
                let b = self.exec_branch(scope, &pre, orelse);
                scope.env = merge(vec![a, b]);
            }
            StmtKind::With { items, body } => {
                for (e, t) in items {
                    self.visit_expr(scope, e);
                    if let Some(t) = t {
                        bind_unknown(&mut scope.env, t, "context manager value");
                    }
                }
                self.exec_block(scope, body);
            }
            StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            } => {
                let pre = std::mem::take(&mut scope.env);
                let mut main = self.exec_branch(scope, &pre, body);
                self.exec_block_into(scope, &mut main, orelse);
                let mut paths = vec![main];
                for h in handlers {
                    let mut hpre = pre.clone();
                    if let Some(n) = &h.name {
                        hpre.insert(n.clone(), vec![Value::Unknown("exception")]);
                    }
                    paths.push(self.exec_branch(scope, &hpre, &h.body));
                }
                scope.env = merge(paths);
                self.exec_block(scope, finalbody);
            }
            StmtKind::Match { subject, cases } => {
                self.visit_expr(scope, subject);
                let pre = std::mem::take(&mut scope.env);
                let mut paths = vec![pre.clone()];
                for c in cases {
                    paths.push(self.exec_branch(scope, &pre, c));
                }
                scope.env = merge(paths);
            }
            StmtKind::FunctionDef {
                name,
                params,
                decorators,
                body,
                ..
            } => {
                for d in decorators {
                    self.visit_expr(scope, d);
                }
                scope
                    .env
                    .insert(name.clone(), vec![Value::Unknown("function")]);
                scope.deferred.push(Deferred::Function {
                    params: params.clone(),
                    body: body.clone(),
                });
            }
            StmtKind::ClassDef {
                name,
                bases,
                decorators,
                body,
            } => {
                for e in bases.iter().chain(decorators) {
                    self.visit_expr(scope, e);
                }
                self.exec_class(scope, name, body);
            }
            StmtKind::Return(None)
            | StmtKind::Global(_)
            | StmtKind::Nonlocal(_)
            | StmtKind::Pass => {}
        }
    }

    fn exec_block_into(&mut self, scope: &mut Scope, env: &mut Env, body: &[Stmt]) {
        if body.is_empty() {
            return;
        }
        scope.env = std::mem::take(env);
        self.exec_block(scope, body);
        *env = std::mem::take(&mut scope.env);
    }

    fn exec_class(&mut self, scope: &mut Scope, name: &str, body: &[Stmt]) {
        let mut chain = vec![Rc::new(scope.env.clone())];
        chain.extend(scope.outer.iter().cloned());
        let mut cscope = Scope::new(chain.clone());
        let mut methods = Vec::new();
        for s in body {
            match &s.kind {
                StmtKind::FunctionDef {
                    name,
                    params,
                    decorators,
                    body,
                    ..
                } => {
                    for d in decorators {
                        self.visit_expr(&mut cscope, d);
                    }
                    let is_static = decorators
                        .iter()
                        .any(|d| d.dotted().as_deref() == Some("staticmethod"));
                    methods.push(Method {
                        name: name.clone(),
                        params: params.clone(),
                        body: body.clone(),
                        is_static,
                    });
                }
                _ => self.exec_stmt(&mut cscope, s),
            }
        }
        // nested classes/functions inside the class body are analysed with
        // the class body environment
        let class_attrs = cscope.env.clone();
        let nested = std::mem::take(&mut cscope.deferred);
        let ctx = Rc::new(ClassCtx {
            name: name.to_string(),
            class_attrs,
            instance_attrs: Default::default(),
        });
        if !nested.is_empty() {
            let mut tmp = Scope::new(chain.clone());
            tmp.deferred = nested;
            self.finish_scope(tmp);
        }
        scope
            .env
            .insert(name.to_string(), vec![Value::Class(ctx.clone())]);
        scope.deferred.push(Deferred::Class {
            ctx,
            methods,
            outer: scope.outer.clone(),
        });
    }

    fn assign(&mut self, scope: &mut Scope, target: &Expr, vals: ValueSet) {
        match &target.kind {
            ExprKind::Name(_) | ExprKind::Attribute(..) => {
                if let Some(k) = target.dotted() {
                    scope.env.insert(k, vals);
                }
            }
            ExprKind::Sequence(items) => {
                for t in items {
                    bind_unknown(&mut scope.env, t, "unpacked value");
                }
            }
            ExprKind::Starred(t) => bind_unknown(&mut scope.env, t, "unpacked value"),
            _ => {}
        }
    }

    /// Abstract value(s) of an expression at the current program point.
    fn eval(&self, scope: &Scope, e: &Expr) -> ValueSet {
        match &e.kind {
            ExprKind::Str(s) => {
                if s.is_bytes {
                    vec![Value::Unknown("bytes literal")]
                } else if s.has_placeholders {
                    vec![Value::Unknown("f-string with placeholders")]
                } else {
                    vec![Value::Str {
                        value: s.value.clone(),
                        origin: Resolution::Variable,
                    }]
                }
            }
            ExprKind::Name(n) => scope
                .lookup_name(n)
                .unwrap_or_else(|| vec![Value::Unknown("unbound name")]),
            ExprKind::Attribute(base, attr) => self.eval_attribute(scope, e, base, attr),
            ExprKind::IfExp { body, orelse, .. } => {
                let mut out = self.eval(scope, body);
                for v in self.eval(scope, orelse) {
                    push_unique(&mut out, v);
                }
                mark_conditional(&mut out);
                out
            }
            ExprKind::NamedExpr(_, v) => self.eval(scope, v),
            ExprKind::Call(c) => match self.callee_path(scope, &c.func) {
                Some(CalleeRef::Qualified(path)) | Some(CalleeRef::Instance(path)) => {
                    vec![Value::Object { path }]
                }
                None => vec![Value::Unknown("call result")],
            },
            _ => vec![Value::Unknown("non-string expression")],
        }
    }

    fn eval_attribute(&self, scope: &Scope, whole: &Expr, base: &Expr, attr: &str) -> ValueSet {
        if let Some(key) = whole.dotted() {
            if let Some(v) = scope.env.get(&key) {
                let mut v = v.clone();
                retag(&mut v, Resolution::Attribute);
                return v;
            }
        }
        if let (ExprKind::Name(root), Some(sn)) = (&base.kind, &scope.self_name) {
            if root == sn {
                if let Some(ctx) = &scope.class {
                    if let Some(v) = ctx.instance_attrs.borrow().get(attr) {
                        let mut v = v.clone();
                        retag(&mut v, Resolution::Attribute);
                        return v;
                    }
                    if let Some(v) = ctx.class_attrs.get(attr) {
                        let mut v = v.clone();
                        retag(&mut v, Resolution::ClassDefault);
                        return v;
                    }
                }
                return vec![Value::Unknown("unknown attribute")];
            }
        }
        if let Some(key) = whole.dotted() {
            if let Some(v) = scope.outer.iter().find_map(|e| e.get(&key)) {
                let mut v = v.clone();
                retag(&mut v, Resolution::Attribute);
                return v;
            }
        }
        let mut out = ValueSet::new();
        for b in self.eval(scope, base) {
            let v = match b {
                Value::Import { path, .. } => vec![Value::Import {
                    path: format!("{path}.{attr}"),
                    is_module: false,
                }],
                Value::Object { path } => vec![Value::Object { path }],
                Value::Class(ctx) => match ctx.class_attrs.get(attr) {
                    Some(v) => {
                        let mut v = v.clone();
                        retag(&mut v, Resolution::ClassDefault);
                        v
                    }
                    None => vec![Value::Unknown("unknown class attribute")],
                },
                _ => vec![Value::Unknown("attribute of unresolved value")],
            };
            for x in v {
                push_unique(&mut out, x);
            }
        }
        out
    }

    fn callee_path(&self, scope: &Scope, func: &Expr) -> Option<CalleeRef> {
        let vals = match &func.kind {
            ExprKind::Name(_) | ExprKind::Attribute(..) => self.eval(scope, func),
            _ => return None,
        };
        // an attribute on an instance keeps the instance's origin
        for v in vals {
            match v {
                Value::Import { path, .. } => return Some(CalleeRef::Qualified(path)),
                Value::Object { path } => {
                    if let ExprKind::Attribute(_, attr) = &func.kind {
                        return Some(CalleeRef::Instance(format!("{path}.{attr}")));
                    }
                    return Some(CalleeRef::Instance(path));
                }
                _ => {}
            }
        }
        None
    }

    fn visit_expr(&mut self, scope: &mut Scope, e: &Expr) {
        for c in e.children() {
            self.visit_expr(scope, c);
        }
        match &e.kind {
            ExprKind::Call(call) => self.check_call(scope, call, e.line),
            ExprKind::NamedExpr(t, v) => {
                let vals = self.eval(scope, v);
                self.assign(scope, t, vals);
            }
            _ => {}
        }
    }

    fn check_call(&mut self, scope: &Scope, call: &Call, line: u32) {
        let syntactic = match &call.func.kind {
            ExprKind::Name(n) => n.as_str(),
            ExprKind::Attribute(_, a) => a.as_str(),
            _ => return,
        };
        let callee = self.callee_path(scope, &call.func);
        let pattern: String = match &callee {
            Some(CalleeRef::Qualified(p)) => p.rsplit('.').next().unwrap_or(p).to_string(),
            _ => syntactic.to_string(),
        };
        if !self.patterns.contains(pattern.as_str()) {
            return;
        }
        let receiver_is_bare_module = match &call.func.kind {
            ExprKind::Attribute(base, _) => matches!(
                self.eval(scope, base).first(),
                Some(Value::Import {
                    is_module: true,
                    ..
                })
            ),
            _ => false,
        };
        let bare_name = matches!(call.func.kind, ExprKind::Name(_));

        let sig = self.pick_signature(
            &pattern,
            callee.as_ref(),
            bare_name,
            receiver_is_bare_module,
        );
        let Some((sig, bound)) = sig else { return };

        let Some(arg) = select_arg(call, &sig) else {
            if bound && has_splat(call) {
                self.diag(
                    line,
                    format!("{sig}: identifier passed through *args/**kwargs"),
                );
            }
            return;
        };
        let resolved = self.resolve_arg(scope, arg);
        let callee_str = callee.as_ref().map(|c| c.path().to_string());
        let revision_pin = call
            .keywords
            .iter()
            .find(|k| k.name.as_deref() == Some("revision"))
            .and_then(|k| match &k.value.kind {
                ExprKind::Str(s) if !s.has_placeholders => Some(s.value.clone()),
                _ => None,
            });
        let mut emitted = BTreeSet::new();
        for r in resolved {
            match r {
                Ok((value, resolution, at)) => {
                    if value.trim().is_empty() || !emitted.insert(value.clone()) {
                        continue;
                    }
                    self.seq += 1;
                    self.occurrences.push((
                        self.seq,
                        PtmOccurrence {
                            indexed: self.index.contains(&value),
                            ptm_id: value,
                            file_path: self.file_path.to_string(),
                            line: at,
                            signature: sig.clone(),
                            resolution,
                            callee: callee_str.clone(),
                            revision_pin: revision_pin.clone(),
                        },
                    ));
                }
                Err(reason) => {
                    if bound {
                        self.diag(arg.line, format!("{sig}: unresolved identifier ({reason})"));
                    }
                }
            }
        }
    }

    fn pick_signature(
        &self,
        pattern: &str,
        callee: Option<&CalleeRef>,
        bare_name: bool,
        receiver_is_bare_module: bool,
    ) -> Option<(ReuseSignature, bool)> {
        let sigs: Vec<&ReuseSignature> = self.catalog.with_call(pattern).collect();
        if sigs.is_empty() {
            return None;
        }
        let shape_ok = |s: &ReuseSignature| -> bool {
            match (callee, s.call_kind) {
                (Some(CalleeRef::Qualified(p)), CallKind::Function) => {
                    within_library(p, &s.library_name) && (bare_name || receiver_is_bare_module)
                }
                (Some(CalleeRef::Qualified(p)), CallKind::Classmethod | CallKind::Method) => {
                    within_library(p, &s.library_name) && !bare_name && !receiver_is_bare_module
                }
                (Some(CalleeRef::Instance(p)), CallKind::Method) => {
                    within_library(p, &s.library_name)
                }
                _ => false,
            }
        };
        // longest library match wins
        let mut best: Option<&ReuseSignature> = None;
        for s in &sigs {
            if shape_ok(s) && best.is_none_or(|b| s.library_name.len() > b.library_name.len()) {
                best = Some(s);
            }
        }
        match best {
            Some(s) => Some(((*s).clone(), true)),
            // unbound or foreign callee: keep the candidate for filter logging
            None => {
                let kind_fits = |s: &&&ReuseSignature| match s.call_kind {
                    CallKind::Function => bare_name || receiver_is_bare_module,
                    _ => !bare_name && !receiver_is_bare_module,
                };
                let s = sigs.iter().find(kind_fits).unwrap_or(&sigs[0]);
                Some(((*s).clone(), false))
            }
        }
    }

    fn resolve_arg(
        &self,
        scope: &Scope,
        arg: &Expr,
    ) -> Vec<Result<(String, Resolution, u32), &'static str>> {
        if let ExprKind::Str(s) = &arg.kind {
            if s.is_bytes {
                return vec![Err("bytes literal")];
            }
            if s.has_placeholders {
                return vec![Err("f-string with placeholders")];
            }
            if s.parts > 1 {
                return vec![Err("implicitly concatenated literal")];
            }
            return vec![Ok((s.value.clone(), Resolution::Literal, arg.line))];
        }
        let vals = match &arg.kind {
            ExprKind::IfExp { .. } => self.eval(scope, arg),
            ExprKind::Name(_) | ExprKind::Attribute(..) => self.eval(scope, arg),
            ExprKind::Call(_) => return vec![Err("call result")],
            _ => return vec![Err("non-string expression")],
        };
        let mut out = Vec::new();
        let mut had_unknown = None;
        for v in vals {
            match v {
                Value::Str { value, origin } => out.push(Ok((value, origin, arg.line))),
                Value::Unknown(r) => had_unknown = Some(r),
                _ => had_unknown = Some("non-string value"),
            }
        }
        if let Some(r) = had_unknown {
            out.push(Err(r));
        }
        out
    }

    fn diag(&mut self, line: u32, message: String) {
        self.diagnostics.push(Diagnostic {
            file_path: self.file_path.to_string(),
            line,
            kind: DiagnosticKind::Unresolved,
            message,
        });
    }
}

enum CalleeRef {
    Qualified(String),
    Instance(String),
}

impl CalleeRef {
    fn path(&self) -> &str {
        match self {
            CalleeRef::Qualified(p) | CalleeRef::Instance(p) => p,
        }
    }
}

fn retag(set: &mut ValueSet, to: Resolution) {
    for v in set.iter_mut() {
        if let Value::Str { origin, .. } = v {
            if *origin != Resolution::ConditionalBranch {
                *origin = to;
            }
        }
    }
}

fn bind_unknown(env: &mut Env, target: &Expr, why: &'static str) {
    match &target.kind {
        ExprKind::Sequence(items) => {
            for t in items {
                bind_unknown(env, t, why);
            }
        }
        ExprKind::Starred(t) => bind_unknown(env, t, why),
        _ => {
            if let Some(k) = target.dotted() {
                env.insert(k, vec![Value::Unknown(why)]);
            }
        }
    }
}

fn select_arg<'c>(call: &'c Call, sig: &ReuseSignature) -> Option<&'c Expr> {
    if let Some(kw) = &sig.ptm_arg.keyword {
        if let Some(k) = call.keywords.iter().find(|k| k.name.as_deref() == Some(kw)) {
            return Some(&k.value);
        }
    }
    let p = sig.ptm_arg.position?;
    // positions after a *splat are unknowable
    let before_splat = call
        .args
        .iter()
        .take_while(|a| !matches!(a.kind, ExprKind::Starred(_)))
        .count();
    if p < before_splat {
        call.args.get(p)
    } else {
        None
    }
}

fn has_splat(call: &Call) -> bool {
    call.args
        .iter()
        .any(|a| matches!(a.kind, ExprKind::Starred(_)))
        || call.keywords.iter().any(|k| k.name.is_none())
}

/// Decodes file bytes, falling back to lossy UTF-8 with a diagnostic.
pub fn decode_source(bytes: &[u8], file_path: &str) -> (String, Option<Diagnostic>) {
    match std::str::from_utf8(bytes) {
        Ok(s) => (s.to_string(), None),
        Err(e) => (
            String::from_utf8_lossy(bytes).into_owned(),
            Some(Diagnostic {
                file_path: file_path.to_string(),
                line: 0,
                kind: DiagnosticKind::Decode,
                message: format!("invalid UTF-8, decoded lossily: {e}"),
            }),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ArgSpec;

    fn catalog() -> Catalog {
        Catalog::builtin()
    }

    fn ids(src: &str) -> Vec<(String, Resolution)> {
        let ex = extract_occurrences(src, "src/m.py", &catalog(), &PtmIndex::default());
        ex.occurrences
            .into_iter()
            .filter(|o| o.callee.is_some())
            .map(|o| (o.ptm_id, o.resolution))
            .collect()
    }

    #[test]
    fn submodule_import_binds_library() {
        let f = parse_module("from transformers.models.auto import AutoModel\n").unwrap();
        let b = match_imports(&f.module, &catalog());
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].alias, "AutoModel");
        assert_eq!(b[0].library, "transformers");
    }

    #[test]
    fn unrelated_import_is_not_bound() {
        let f = parse_module("import json\n").unwrap();
        assert!(match_imports(&f.module, &catalog()).is_empty());
    }

    #[test]
    fn module_alias_binding() {
        let f = parse_module("import transformers as tf\nm = tf.AutoModel.from_pretrained(x)\n")
            .unwrap();
        let b = match_imports(&f.module, &catalog());
        assert_eq!(b[0].alias, "tf");
        assert_eq!(b[0].library, "transformers");
        assert_eq!(
            ids("import transformers as tf\nm = tf.AutoModel.from_pretrained('a/b')\n"),
            vec![("a/b".to_string(), Resolution::Literal)]
        );
    }

    #[test]
    fn literal_call() {
        let src = "from transformers import AutoModelForMaskedLM\nhf = AutoModelForMaskedLM.from_pretrained(\"FacebookAI/roberta-base\")\n";
        let ex = extract_occurrences(src, "src/m.py", &catalog(), &PtmIndex::default());
        assert_eq!(ex.occurrences.len(), 1);
        let o = &ex.occurrences[0];
        assert_eq!(o.ptm_id, "FacebookAI/roberta-base");
        assert_eq!(o.resolution, Resolution::Literal);
        assert_eq!(o.line, 2);
        assert_eq!(
            o.callee.as_deref(),
            Some("transformers.AutoModelForMaskedLM.from_pretrained")
        );
    }

    #[test]
    fn latest_assignment_wins() {
        let src = "import spacy\nname = 'm1'\nname = 'm2'\nspacy.load(name)\n";
        assert_eq!(ids(src), vec![("m2".to_string(), Resolution::Variable)]);
    }

    #[test]
    fn conditional_branches_each_produce_an_occurrence() {
        let src = "import spacy\nif gpu:\n    name = 'big'\nelse:\n    name = 'small'\nspacy.load(name)\n";
        assert_eq!(
            ids(src),
            vec![
                ("big".to_string(), Resolution::ConditionalBranch),
                ("small".to_string(), Resolution::ConditionalBranch)
            ]
        );
    }

    #[test]
    fn ternary_argument() {
        let src = "import spacy\nspacy.load('a' if x else 'b')\n";
        assert_eq!(ids(src).len(), 2);
    }

    #[test]
    fn comments_and_strings_do_not_count() {
        let src =
            "import spacy\n# spacy.load('x')\ns = \"spacy.load('y')\"\n'''\nspacy.load('z')\n'''\n";
        assert!(ids(src).is_empty());
    }

    #[test]
    fn module_constant_used_in_function() {
        let src = "from transformers import AutoModel\nMODEL = 'bert-base-uncased'\ndef build():\n    return AutoModel.from_pretrained(MODEL)\n";
        assert_eq!(
            ids(src),
            vec![("bert-base-uncased".to_string(), Resolution::Variable)]
        );
    }

    #[test]
    fn constructor_attribute_and_class_default() {
        let src = r#"
from transformers import UperNetForSemanticSegmentation, AutoModel
class Seg:
    default_id = "org/default"
    def __init__(self):
        self.model_id = "openmmlab/upernet-swin-large"
    def load(self):
        a = UperNetForSemanticSegmentation.from_pretrained(self.model_id)
        b = AutoModel.from_pretrained(self.default_id)
        c = AutoModel.from_pretrained(Seg.default_id)
"#;
        assert_eq!(
            ids(src),
            vec![
                (
                    "openmmlab/upernet-swin-large".to_string(),
                    Resolution::Attribute
                ),
                ("org/default".to_string(), Resolution::ClassDefault),
                ("org/default".to_string(), Resolution::ClassDefault),
            ]
        );
    }

    #[test]
    fn unresolved_parameter_is_diagnostic() {
        let src = "from transformers import AutoModel\ndef f(name):\n    return AutoModel.from_pretrained(name)\n";
        let ex = extract_occurrences(src, "a.py", &catalog(), &PtmIndex::default());
        assert!(ex.occurrences.is_empty());
        assert_eq!(ex.diagnostics.len(), 1);
        assert_eq!(ex.diagnostics[0].kind, DiagnosticKind::Unresolved);
    }

    #[test]
    fn fstring_with_placeholder_is_unresolved() {
        let src =
            "import spacy\nspacy.load(f'{lang}_core_web_sm')\nspacy.load(f'en_core_web_sm')\n";
        assert_eq!(
            ids(src),
            vec![("en_core_web_sm".to_string(), Resolution::Literal)]
        );
    }

    #[test]
    fn keyword_argument_and_revision_pin() {
        let src = "from huggingface_hub import hf_hub_download\nhf_hub_download(repo_id='org/m', filename='x.bin', revision='v2')\n";
        let ex = extract_occurrences(src, "a.py", &catalog(), &PtmIndex::default());
        assert_eq!(ex.occurrences[0].ptm_id, "org/m");
        assert_eq!(ex.occurrences[0].revision_pin.as_deref(), Some("v2"));
    }

    #[test]
    fn foreign_callee_is_kept_unbound() {
        let src = "import json\njson.load('cfg.json')\n";
        let ex = extract_occurrences(src, "a.py", &catalog(), &PtmIndex::default());
        assert_eq!(ex.occurrences.len(), 1);
        assert_eq!(ex.occurrences[0].callee.as_deref(), Some("json.load"));
        assert_eq!(ex.occurrences[0].signature.library_name, "spacy");
    }

    #[test]
    fn instance_method_call() {
        let src = "from diffusers import DiffusionPipeline\npipe = DiffusionPipeline.from_pretrained('a/base')\npipe.load_lora_weights('b/lora')\n";
        assert_eq!(
            ids(src),
            vec![
                ("a/base".to_string(), Resolution::Literal),
                ("b/lora".to_string(), Resolution::Literal)
            ]
        );
    }

    #[test]
    fn aliased_function_import() {
        let src = "from spacy import load as sl\nnlp = sl('en_core_web_sm')\n";
        assert_eq!(
            ids(src),
            vec![("en_core_web_sm".to_string(), Resolution::Literal)]
        );
    }

    #[test]
    fn function_kind_rejects_instance_shape() {
        let cat = Catalog::from_signatures([ReuseSignature::new(
            "spacy",
            "load",
            CallKind::Function,
            ArgSpec::position(0),
        )]);
        let src = "import spacy\nnlp = spacy.blank('en')\nnlp.load('x')\n";
        let ex = extract_occurrences(src, "a.py", &cat, &PtmIndex::default());
        // kept as an unbound candidate only
        assert!(ex.occurrences.iter().all(|o| o.callee.is_some()));
        assert_eq!(ex.occurrences.len(), 1);
    }

    #[test]
    fn syntax_error_gives_empty_extraction() {
        let ex = extract_occurrences("def f(:\n", "bad.py", &catalog(), &PtmIndex::default());
        assert!(ex.occurrences.is_empty());
        assert_eq!(ex.diagnostics[0].kind, DiagnosticKind::Parse);
    }

    #[test]
    fn indexed_flag() {
        let idx = PtmIndex::parse("bert-base-uncased\n");
        let src = "from transformers import AutoModel\nAutoModel.from_pretrained('bert-base-uncased')\nAutoModel.from_pretrained('local/unknown')\n";
        let ex = extract_occurrences(src, "a.py", &catalog(), &idx);
        assert!(ex.occurrences[0].indexed);
        assert!(!ex.occurrences[1].indexed);
    }

    #[test]
    fn lazy_import_inside_function() {
        let src = "def f():\n    import spacy\n    return spacy.load('en_core_web_sm')\n";
        assert_eq!(ids(src).len(), 1);
    }
}
