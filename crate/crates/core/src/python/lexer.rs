//! Tokenizer for Python source.
//!
//! Produces logical-line tokens with INDENT/DEDENT, collects comments on the
//! side, and keeps string literal text so the resolver can work on values.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Number,
    Str(StrTok),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrTok {
    /// Decoded value. For f-strings this is the literal text with `{{`/`}}`
    /// collapsed; only meaningful when `has_placeholders` is false.
    pub value: String,
    pub is_bytes: bool,
    pub is_fstring: bool,
    pub has_placeholders: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub line: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: u32,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "!=", "%=", "&=", "**", "*=", "+=", "-=", "->", "//", "/=",
    ":=", "<<", "<=", "==", ">=", ">>", "@=", "^=", "|=", "~", "%", "&", "(", ")", "*", "+", ",",
    "-", ".", "/", ":", ";", "<", "=", ">", "@", "[", "]", "^", "{", "|", "}", "!",
];

pub struct Lexed {
    pub tokens: Vec<Token>,
    pub comments: Vec<Comment>,
    pub line_count: u32,
}

pub fn tokenize(src: &str) -> Result<Lexed, LexError> {
    Lexer::new(src).run()
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    line_start: usize,
    depth: usize,
    indents: Vec<usize>,
    tokens: Vec<Token>,
    comments: Vec<Comment>,
    at_line_start: bool,
}

impl Lexer {
    fn new(src: &str) -> Self {
        let src_trim = src.strip_prefix('\u{feff}').unwrap_or(src);
        Lexer {
            chars: src_trim.chars().collect(),
            pos: 0,
            line: 1,
            line_start: 0,
            depth: 0,
            indents: vec![0],
            tokens: Vec::new(),
            comments: Vec::new(),
            at_line_start: true,
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, LexError> {
        Err(LexError {
            line: self.line,
            message: message.into(),
        })
    }

    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn push(&mut self, tok: Tok, line: u32, start: usize) {
        let col = (start.saturating_sub(self.line_start)) as u32;
        self.tokens.push(Token { tok, line, col });
    }

    fn newline(&mut self) {
        self.line += 1;
        self.line_start = self.pos;
    }

    fn run(mut self) -> Result<Lexed, LexError> {
        while self.pos < self.chars.len() {
            if self.at_line_start && self.depth == 0 && self.handle_indent()? {
                continue;
            }
            let c = self.chars[self.pos];
            match c {
                '\n' | '\r' => {
                    self.pos += 1;
                    if c == '\r' && self.peek(0) == Some('\n') {
                        self.pos += 1;
                    }
                    if self.depth == 0 {
                        let last_is_newline = matches!(
                            self.tokens.last().map(|t| &t.tok),
                            None | Some(Tok::Newline) | Some(Tok::Indent) | Some(Tok::Dedent)
                        );
                        if !last_is_newline {
                            let line = self.line;
                            self.push(Tok::Newline, line, self.pos - 1);
                        }
                        self.at_line_start = true;
                    }
                    self.newline();
                }
                ' ' | '\t' | '\x0c' => self.pos += 1,
                '#' => self.comment(),
                '\\' => {
                    // explicit line joining
                    let mut p = self.pos + 1;
                    if self.chars.get(p) == Some(&'\r') {
                        p += 1;
                    }
                    if self.chars.get(p) == Some(&'\n') {
                        self.pos = p + 1;
                        self.newline();
                    } else if p >= self.chars.len() {
                        self.pos = p;
                    } else {
                        return self.err("unexpected character after line continuation");
                    }
                }
                '"' | '\'' => self.string(String::new())?,
                c if c.is_ascii_digit() => self.number(),
                '.' if self.peek(1).is_some_and(|d| d.is_ascii_digit()) => self.number(),
                c if c == '_' || c.is_alphabetic() => self.name()?,
                _ => self.operator()?,
            }
        }
        if self.depth > 0 {
            return self.err("unexpected end of file inside brackets");
        }
        let line = self.line;
        if !matches!(
            self.tokens.last().map(|t| &t.tok),
            None | Some(Tok::Newline) | Some(Tok::Dedent) | Some(Tok::Indent)
        ) {
            self.push(Tok::Newline, line, self.pos);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, line, self.pos);
        }
        self.push(Tok::End, line, self.pos);
        let line_count = if self.chars.last() == Some(&'\n') {
            self.line - 1
        } else {
            self.line
        };
        Ok(Lexed {
            tokens: self.tokens,
            comments: self.comments,
            line_count: line_count.max(1),
        })
    }

    /// Measures indentation at the start of a logical line. Returns true when
    /// the line was blank or comment-only and has been consumed.
    fn handle_indent(&mut self) -> Result<bool, LexError> {
        let mut width = 0usize;
        let mut p = self.pos;
        while let Some(&c) = self.chars.get(p) {
            match c {
                ' ' => width += 1,
                '\t' => width = (width / 8 + 1) * 8,
                '\x0c' => width = 0,
                _ => break,
            }
            p += 1;
        }
        match self.chars.get(p) {
            None => {
                self.pos = p;
                return Ok(true);
            }
            Some('\n') | Some('\r') | Some('#') => {
                self.pos = p;
                if self.chars[p] == '#' {
                    self.comment();
                }
                if let Some(&c) = self.chars.get(self.pos) {
                    self.pos += 1;
                    if c == '\r' && self.peek(0) == Some('\n') {
                        self.pos += 1;
                    }
                    self.newline();
                }
                return Ok(true);
            }
            Some('\\') => {
                // a continuation right at the start of a line: treat as blank join
            }
            _ => {}
        }
        self.pos = p;
        self.at_line_start = false;
        let current = *self.indents.last().unwrap();
        let line = self.line;
        if width > current {
            self.indents.push(width);
            self.push(Tok::Indent, line, p);
        } else if width < current {
            while width < *self.indents.last().unwrap() {
                self.indents.pop();
                self.push(Tok::Dedent, line, p);
            }
            if width != *self.indents.last().unwrap() {
                return self.err("unindent does not match any outer indentation level");
            }
        }
        Ok(false)
    }

    fn comment(&mut self) {
        let start = self.pos;
        while let Some(c) = self.peek(0) {
            if c == '\n' || c == '\r' {
                break;
            }
            self.pos += 1;
        }
        let text: String = self.chars[start + 1..self.pos].iter().collect();
        self.comments.push(Comment {
            line: self.line,
            text: text.trim().to_string(),
        });
    }

    fn number(&mut self) {
        let start = self.pos;
        let line = self.line;
        let mut prev = ' ';
        while let Some(c) = self.peek(0) {
            let ok = c.is_ascii_alphanumeric()
                || c == '_'
                || c == '.'
                || ((c == '+' || c == '-') && (prev == 'e' || prev == 'E') && !self.is_hex(start));
            if !ok {
                break;
            }
            prev = c;
            self.pos += 1;
        }
        self.push(Tok::Number, line, start);
    }

    fn is_hex(&self, start: usize) -> bool {
        matches!(
            (self.chars.get(start), self.chars.get(start + 1)),
            (Some('0'), Some('x')) | (Some('0'), Some('X'))
        )
    }

    fn name(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        let line = self.line;
        while let Some(c) = self.peek(0) {
            if c == '_' || c.is_alphanumeric() {
                self.pos += 1;
            } else {
                break;
            }
        }
        let word: String = self.chars[start..self.pos].iter().collect();
        if matches!(self.peek(0), Some('"') | Some('\''))
            && word.len() <= 2
            && word
                .chars()
                .all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'))
        {
            return self.string(word);
        }
        self.push(Tok::Name(word), line, start);
        Ok(())
    }

    fn operator(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        let line = self.line;
        for op in OPERATORS {
            let n = op.chars().count();
            if self.pos + n <= self.chars.len()
                && self.chars[self.pos..self.pos + n]
                    .iter()
                    .copied()
                    .eq(op.chars())
            {
                self.pos += n;
                match *op {
                    "(" | "[" | "{" => self.depth += 1,
                    ")" | "]" | "}" => {
                        if self.depth == 0 {
                            return self.err(format!("unmatched `{op}`"));
                        }
                        self.depth -= 1;
                    }
                    _ => {}
                }
                self.push(Tok::Op(op), line, start);
                return Ok(());
            }
        }
        self.err(format!("invalid character {:?}", self.chars[self.pos]))
    }

    fn string(&mut self, prefix: String) -> Result<(), LexError> {
        let lower = prefix.to_ascii_lowercase();
        let raw = lower.contains('r');
        let is_bytes = lower.contains('b');
        let is_fstring = lower.contains('f');
        let start = self.pos - prefix.chars().count();
        let line = self.line;
        let quote = self.chars[self.pos];
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };

        let mut value = String::new();
        let mut has_placeholders = false;
        let mut brace_depth = 0usize;
        loop {
            let Some(c) = self.peek(0) else {
                return Err(LexError {
                    line,
                    message: "unterminated string literal".into(),
                });
            };
            if c == quote && brace_depth == 0 {
                if !triple {
                    self.pos += 1;
                    break;
                }
                if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                    self.pos += 3;
                    break;
                }
            }
            if (c == '\n' || c == '\r') && !triple && brace_depth == 0 {
                return Err(LexError {
                    line,
                    message: "unterminated string literal".into(),
                });
            }
            if is_fstring {
                if c == '{' {
                    if brace_depth == 0 && self.peek(1) == Some('{') {
                        value.push('{');
                        self.pos += 2;
                        continue;
                    }
                    brace_depth += 1;
                    has_placeholders = true;
                    self.pos += 1;
                    continue;
                }
                if c == '}' {
                    if brace_depth == 0 {
                        if self.peek(1) == Some('}') {
                            self.pos += 1;
                        }
                        value.push('}');
                        self.pos += 1;
                        continue;
                    }
                    brace_depth -= 1;
                    self.pos += 1;
                    continue;
                }
                if brace_depth > 0 {
                    if c == '\n' {
                        self.pos += 1;
                        self.newline();
                    } else {
                        self.pos += 1;
                    }
                    continue;
                }
            }
            if c == '\\' {
                let Some(n) = self.peek(1) else {
                    self.pos += 1;
                    continue;
                };
                if raw {
                    value.push('\\');
                    value.push(n);
                    self.pos += 2;
                    if n == '\n' {
                        self.newline();
                    }
                    continue;
                }
                self.pos += 2;
                match n {
                    '\n' => self.newline(),
                    'n' => value.push('\n'),
                    't' => value.push('\t'),
                    'r' => value.push('\r'),
                    '0' => value.push('\0'),
                    '\\' | '\'' | '"' => value.push(n),
                    'x' => self.hex_escape(2, &mut value),
                    'u' if !is_bytes => self.hex_escape(4, &mut value),
                    'U' if !is_bytes => self.hex_escape(8, &mut value),
                    _ => {
                        value.push('\\');
                        value.push(n);
                    }
                }
                continue;
            }
            if c == '\n' {
                value.push(c);
                self.pos += 1;
                self.newline();
                continue;
            }
            value.push(c);
            self.pos += 1;
        }
        self.push(
            Tok::Str(StrTok {
                value,
                is_bytes,
                is_fstring,
                has_placeholders,
            }),
            line,
            start,
        );
        Ok(())
    }

    fn hex_escape(&mut self, digits: usize, out: &mut String) {
        let end = (self.pos + digits).min(self.chars.len());
        let hex: String = self.chars[self.pos..end].iter().collect();
        match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
            Some(ch) if hex.len() == digits => {
                out.push(ch);
                self.pos = end;
            }
            _ => out.push('\\'),
        }
    }
}
