//! Python-syntax front end: tokenizer, reduced syntax tree, and parser.

pub mod ast;
pub mod lexer;
pub mod parser;

pub use ast::{Expr, ExprKind, Module, Stmt, StmtKind};
pub use lexer::Comment;
pub use parser::{parse_module, ParsedFile, SyntaxError};
