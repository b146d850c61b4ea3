//! Recursive-descent parser for the Objective-C interface subset.
//!
//! Supported: `@interface` / `@protocol` blocks (including categories and
//! generic class parameters), method declarations, generics, protocol
//! qualification, block types, inline struct literals and C scalars.
//! `@property`, macros and preprocessor lines are skipped and counted.
//! A malformed method is reported and parsing resumes at the next `;` or
//! `@end`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexer::{lex, Tok, Token};
use super::types::{default_collection_classes, is_c_scalar_word, StructField, TypeExpr, TypeKind};
use super::{MethodDecl, Param, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub collection_classes: BTreeSet<String>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { collection_classes: default_collection_classes() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

type PResult<T> = Result<T, ParseError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Interface,
    Protocol,
    /// Methods found outside any `@interface` / `@protocol` block.
    TopLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInterface {
    pub name: String,
    pub kind: ContainerKind,
    pub category: Option<String>,
    pub superclass: Option<String>,
    pub methods: Vec<MethodDecl>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub properties: usize,
    pub preprocessor_lines: usize,
    pub macros: usize,
    pub unsupported: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderAst {
    pub source_header: String,
    pub framework: String,
    pub interfaces: Vec<ClassInterface>,
    pub skipped: SkipCounts,
    pub errors: Vec<ParseError>,
}

impl HeaderAst {
    pub fn methods(&self) -> impl Iterator<Item = &MethodDecl> {
        self.interfaces.iter().flat_map(|i| i.methods.iter())
    }
}

pub fn parse_header(text: &str) -> HeaderAst {
    parse_header_with(text, "", &ParseOptions::default())
}

pub fn parse_header_with(text: &str, source_header: &str, opts: &ParseOptions) -> HeaderAst {
    let lexed = lex(text);
    let mut p = Parser::new(&lexed.tokens, opts, source_header);
    let mut ast = HeaderAst { source_header: source_header.to_string(), ..HeaderAst::default() };
    ast.skipped.preprocessor_lines = lexed.preprocessor_lines;
    p.parse_top(&mut ast);
    ast
}

/// Parses one method declaration, as emitted by a model or typed by a user.
/// The `+`/`-` marker and the trailing `;` are optional here.
pub fn parse_method(text: &str, opts: &ParseOptions) -> PResult<MethodDecl> {
    let lexed = lex(text);
    let mut p = Parser::new(&lexed.tokens, opts, "");
    let m = p.parse_method("", false)?;
    if let Some(t) = p.peek() {
        return Err(p.error_at(t, "end of declaration"));
    }
    Ok(m)
}

pub fn parse_type(text: &str, opts: &ParseOptions) -> PResult<TypeExpr> {
    let lexed = lex(text);
    let mut p = Parser::new(&lexed.tokens, opts, "");
    let t = p.parse_type()?;
    if let Some(tok) = p.peek() {
        return Err(p.error_at(tok, "end of type"));
    }
    Ok(t)
}

const DROPPED_QUALIFIERS: &[&str] = &[
    "volatile",
    "restrict",
    "__restrict",
    "nullable",
    "nonnull",
    "null_unspecified",
    "null_resettable",
    "_Nullable",
    "_Nonnull",
    "_Null_unspecified",
    "_Nullable_result",
    "__nullable",
    "__nonnull",
    "__null_unspecified",
    "__kindof",
    "__strong",
    "__weak",
    "__unsafe_unretained",
    "__autoreleasing",
    "__block",
    "in",
    "out",
    "inout",
    "bycopy",
    "byref",
    "oneway",
    "NS_NOESCAPE",
];

fn is_macro_name(s: &str) -> bool {
    if s == "__attribute__" || s == "__deprecated" || s == "__unused" {
        return true;
    }
    s.len() > 1
        && s.chars().any(|c| c.is_ascii_uppercase())
        && s.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    opts: &'a ParseOptions,
    source_header: &'a str,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [Token], opts: &'a ParseOptions, source_header: &'a str) -> Self {
        Parser { toks, pos: 0, opts, source_header }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        self.toks.get(self.pos + n)
    }

    fn peek_punct(&self, c: char) -> bool {
        self.peek().is_some_and(|t| t.is_punct(c))
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Token, expected: &str) -> ParseError {
        ParseError { line: t.line, column: t.column, expected: expected.to_string(), found: t.describe() }
    }

    fn error_here(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error_at(t, expected),
            None => {
                let (line, column) = self.toks.last().map(|t| (t.line, t.column + 1)).unwrap_or((1, 1));
                ParseError { line, column, expected: expected.to_string(), found: "end of input".to_string() }
            }
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<&'a Token> {
        if self.peek_punct(c) {
            Ok(self.bump().unwrap())
        } else {
            Err(self.error_here(&format!("`{c}`")))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.error_here(what)),
        }
    }

    /// Skips a balanced `( ... )` group starting at the current `(`.
    fn skip_parens(&mut self) {
        let mut depth = 0usize;
        while let Some(t) = self.bump() {
            if t.is_punct('(') {
                depth += 1;
            } else if t.is_punct(')') {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return;
                }
            }
        }
    }

    /// Skips a macro invocation: the name plus an optional argument list.
    fn skip_macro(&mut self) {
        self.bump();
        if self.peek_punct('(') {
            self.skip_parens();
        }
    }

    /// Skips to the end of a statement (`;` at brace depth 0, consumed), or
    /// up to an `@end` (not consumed). Returns the first token at which a
    /// `)` closed more parentheses than were open, if any.
    fn skip_statement(&mut self) -> Option<&'a Token> {
        let mut braces = 0usize;
        let mut parens = 0i64;
        let mut unbalanced = None;
        while let Some(t) = self.peek() {
            if t.is_at("end") && braces == 0 {
                return unbalanced;
            }
            self.pos += 1;
            match &t.tok {
                Tok::Punct('{') => braces += 1,
                Tok::Punct('}') => {
                    braces = braces.saturating_sub(1);
                    if braces == 0 && self.peek_punct(';') {
                        self.pos += 1;
                        return unbalanced;
                    }
                }
                Tok::Punct('(') => parens += 1,
                Tok::Punct(')') => {
                    parens -= 1;
                    if parens < 0 && unbalanced.is_none() {
                        unbalanced = Some(t);
                    }
                }
                Tok::Punct(';') if braces == 0 => return unbalanced,
                _ => {}
            }
        }
        unbalanced
    }

    fn recover(&mut self) {
        while let Some(t) = self.peek() {
            if t.is_at("end") {
                return;
            }
            self.pos += 1;
            if t.is_punct(';') {
                return;
            }
        }
    }

    fn parse_top(&mut self, ast: &mut HeaderAst) {
        let mut loose = ClassInterface {
            name: String::new(),
            kind: ContainerKind::TopLevel,
            category: None,
            superclass: None,
            methods: Vec::new(),
        };
        while let Some(t) = self.peek() {
            match &t.tok {
                Tok::At(kw) if kw == "interface" || kw == "protocol" => {
                    if let Some(iface) = self.parse_container(ast) {
                        ast.interfaces.push(iface);
                    }
                }
                Tok::At(kw) if kw == "end" => {
                    self.bump();
                }
                Tok::At(kw) if kw == "implementation" => {
                    ast.skipped.unsupported += 1;
                    while let Some(t) = self.bump() {
                        if t.is_at("end") {
                            break;
                        }
                    }
                }
                Tok::At(_) => {
                    ast.skipped.unsupported += 1;
                    self.bump();
                    self.skip_statement();
                }
                Tok::Punct('+') | Tok::Punct('-') | Tok::Punct('(') => {
                    self.method_with_recovery("", &mut loose.methods, ast);
                }
                Tok::Ident(name) if is_macro_name(name) => {
                    ast.skipped.macros += 1;
                    self.skip_macro();
                }
                _ => self.other_statement(ast),
            }
        }
        if !loose.methods.is_empty() {
            ast.interfaces.insert(0, loose);
        }
    }

    fn other_statement(&mut self, ast: &mut HeaderAst) {
        let start = self.peek().expect("called with a token available");
        if let Some(_bad) = self.skip_statement() {
            // A stray `)` cannot close anything here: this is a method
            // declaration that lost its opening parenthesis.
            let err = ParseError {
                line: start.line,
                column: start.column,
                expected: "`(`".to_string(),
                found: start.describe(),
            };
            ast.errors.push(err);
        } else {
            ast.skipped.unsupported += 1;
        }
    }

    fn method_with_recovery(&mut self, owner: &str, out: &mut Vec<MethodDecl>, ast: &mut HeaderAst) {
        match self.parse_method(owner, true) {
            Ok(m) => out.push(m),
            Err(e) => {
                ast.errors.push(e);
                self.recover();
            }
        }
    }

    fn parse_container(&mut self, ast: &mut HeaderAst) -> Option<ClassInterface> {
        let kw = self.bump().unwrap();
        let kind = if kw.is_at("protocol") { ContainerKind::Protocol } else { ContainerKind::Interface };
        let name = match self.expect_ident("class or protocol name") {
            Ok(n) => n,
            Err(e) => {
                ast.errors.push(e);
                self.recover();
                return None;
            }
        };
        // forward declaration: `@protocol Foo;` / `@protocol Foo, Bar;`
        if kind == ContainerKind::Protocol && (self.peek_punct(';') || self.peek_punct(',')) {
            self.skip_statement();
            return None;
        }
        let mut iface = ClassInterface { name, kind, category: None, superclass: None, methods: Vec::new() };
        if self.peek_punct('<') && kind == ContainerKind::Interface {
            // generic class parameters or protocol list
            self.skip_angles();
        }
        if self.peek_punct('(') {
            self.bump();
            let mut cat = String::new();
            while let Some(t) = self.peek() {
                if t.is_punct(')') {
                    self.bump();
                    break;
                }
                if let Tok::Ident(s) = &t.tok {
                    cat.push_str(s);
                }
                self.bump();
            }
            iface.category = Some(cat);
        }
        if self.peek_punct(':') {
            self.bump();
            iface.superclass = self.expect_ident("superclass name").ok();
        }
        if self.peek_punct('<') {
            self.skip_angles();
        }
        if self.peek_punct('{') {
            // instance variable block
            let mut depth = 0usize;
            while let Some(t) = self.bump() {
                if t.is_punct('{') {
                    depth += 1;
                } else if t.is_punct('}') {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
            }
        }
        while let Some(t) = self.peek() {
            match &t.tok {
                Tok::At(kw) if kw == "end" => {
                    self.bump();
                    break;
                }
                Tok::At(kw) if kw == "property" => {
                    ast.skipped.properties += 1;
                    self.skip_statement();
                }
                Tok::At(kw)
                    if matches!(
                        kw.as_str(),
                        "optional" | "required" | "public" | "private" | "protected" | "package"
                    ) =>
                {
                    self.bump();
                }
                Tok::At(kw) if kw == "interface" || kw == "protocol" => {
                    // missing @end: close this container and let the caller continue
                    ast.errors.push(self.error_at(t, "`@end`"));
                    break;
                }
                Tok::Punct('+') | Tok::Punct('-') | Tok::Punct('(') => {
                    let owner = iface.name.clone();
                    self.method_with_recovery(&owner, &mut iface.methods, ast);
                }
                Tok::Ident(name) if is_macro_name(name) => {
                    ast.skipped.macros += 1;
                    self.skip_macro();
                }
                _ => self.other_statement(ast),
            }
        }
        Some(iface)
    }

    fn skip_angles(&mut self) {
        let mut depth = 0usize;
        while let Some(t) = self.bump() {
            if t.is_punct('<') {
                depth += 1;
            } else if t.is_punct('>') {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return;
                }
            }
        }
    }

    fn span_of(&self, t: &Token) -> SourceSpan {
        SourceSpan { line: t.line, column: t.column }
    }

    fn parse_method(&mut self, owner: &str, require_semicolon: bool) -> PResult<MethodDecl> {
        let start = match self.peek() {
            Some(t) => t,
            None => return Err(self.error_here("method declaration")),
        };
        let mut is_class_method = false;
        let mut has_marker = false;
        if start.is_punct('+') || start.is_punct('-') {
            is_class_method = start.is_punct('+');
            has_marker = true;
            self.bump();
        }
        let return_type = if self.peek_punct('(') {
            self.bump();
            let t = self.parse_type()?;
            self.expect_punct(')')?;
            t
        } else if has_marker
            && matches!(self.peek(), Some(Token { tok: Tok::Ident(_), .. }))
            && self.peek_at(1).is_none_or(|n| n.is_punct(':') || n.is_punct(';') || matches!(n.tok, Tok::Ident(_)))
        {
            // no explicit return type: defaults to id
            TypeExpr::id()
        } else {
            return Err(self.error_here("`(`"));
        };

        let first = self.expect_ident("selector")?;
        let mut selector_pieces = Vec::new();
        let mut params = Vec::new();
        if self.peek_punct(':') {
            let mut piece = first;
            loop {
                self.expect_punct(':')?;
                self.expect_punct('(')?;
                let ty = self.parse_type()?;
                self.expect_punct(')')?;
                let name = self.expect_ident("parameter name")?;
                selector_pieces.push(format!("{piece}:"));
                params.push(Param { name, ty });
                match (self.peek(), self.peek_at(1)) {
                    (Some(Token { tok: Tok::Ident(s), .. }), Some(n)) if n.is_punct(':') => {
                        piece = s.clone();
                        self.bump();
                    }
                    (Some(t), _) if t.is_punct(':') => piece = String::new(),
                    _ => break,
                }
            }
        } else {
            selector_pieces.push(first);
        }

        let mut variadic = false;
        if self.peek_punct(',') && matches!(self.peek_at(1), Some(Token { tok: Tok::Ellipsis, .. })) {
            if params.is_empty() {
                return Err(self.error_here("`;`"));
            }
            self.bump();
            self.bump();
            variadic = true;
        }

        // trailing availability / attribute macros
        while let Some(Token { tok: Tok::Ident(name), .. }) = self.peek() {
            if !is_macro_name(name) {
                break;
            }
            self.skip_macro();
        }

        if self.peek_punct(';') {
            self.bump();
        } else if require_semicolon || self.peek().is_some() {
            return Err(self.error_here("`;`"));
        }

        Ok(MethodDecl {
            is_class_method,
            selector_pieces,
            return_type,
            params,
            variadic,
            owning_class: owner.to_string(),
            source_header: self.source_header.to_string(),
            source_span: self.span_of(start),
        })
    }

    /// Consumes qualifiers; returns true if a `const` was among them.
    fn skip_qualifiers(&mut self) -> bool {
        let mut saw_const = false;
        while let Some(Token { tok: Tok::Ident(s), .. }) = self.peek() {
            if s == "const" {
                saw_const = true;
            } else if !DROPPED_QUALIFIERS.contains(&s.as_str()) {
                break;
            }
            self.bump();
        }
        saw_const
    }

    fn parse_type(&mut self) -> PResult<TypeExpr> {
        let mut is_const = self.skip_qualifiers();
        let mut ty = match self.peek() {
            Some(t) if t.is_ident("struct") => self.parse_struct()?,
            Some(Token { tok: Tok::Ident(w), .. }) if is_c_scalar_word(w) => {
                let mut words = Vec::new();
                while let Some(Token { tok: Tok::Ident(w), .. }) = self.peek() {
                    if is_c_scalar_word(w) {
                        words.push(w.clone());
                        self.bump();
                    } else if w == "const" {
                        is_const = true;
                        self.bump();
                    } else {
                        break;
                    }
                }
                TypeExpr::new(TypeKind::Other, words.join(" "))
            }
            Some(Token { tok: Tok::Ident(name), .. }) => {
                let name = name.clone();
                self.bump();
                let mut t = TypeExpr::new(TypeKind::Other, name);
                if self.peek_punct('<') {
                    self.parse_angles(&mut t)?;
                }
                t
            }
            _ => return Err(self.error_here("type")),
        };
        is_const |= self.skip_qualifiers();
        ty.is_const = is_const;
        loop {
            if self.peek_punct('*') {
                self.bump();
                ty.pointer_depth += 1;
                // qualifiers after a star (`* const`, `* _Nullable`) are dropped
                self.skip_qualifiers();
            } else {
                break;
            }
        }
        if self.peek_punct('(') && self.peek_at(1).is_some_and(|t| t.is_punct('^')) {
            ty.reclassify(&self.opts.collection_classes);
            return self.parse_block(ty);
        }
        ty.reclassify(&self.opts.collection_classes);
        Ok(ty)
    }

    fn parse_block(&mut self, return_type: TypeExpr) -> PResult<TypeExpr> {
        self.expect_punct('(')?;
        self.expect_punct('^')?;
        self.skip_qualifiers();
        if let Some(Token { tok: Tok::Ident(_), .. }) = self.peek() {
            self.bump();
        }
        self.expect_punct(')')?;
        self.expect_punct('(')?;
        let mut params = Vec::new();
        let void_only =
            self.peek().is_some_and(|t| t.is_ident("void")) && self.peek_at(1).is_some_and(|t| t.is_punct(')'));
        if void_only {
            self.bump();
        } else if !self.peek_punct(')') {
            loop {
                let p = self.parse_type()?;
                if let Some(Token { tok: Tok::Ident(_), .. }) = self.peek() {
                    self.bump();
                }
                params.push(p);
                if self.peek_punct(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        Ok(TypeExpr::block(return_type, params))
    }

    fn parse_struct(&mut self) -> PResult<TypeExpr> {
        self.bump(); // `struct`
        let tag = match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) => {
                let s = s.clone();
                self.bump();
                s
            }
            _ => String::new(),
        };
        if self.peek_punct('{') {
            self.bump();
            let mut fields = Vec::new();
            while !self.peek_punct('}') {
                let ty = self.parse_type()?;
                let name = self.expect_ident("field name")?;
                self.expect_punct(';')?;
                fields.push(StructField { ty, name });
            }
            self.bump();
            let mut t = TypeExpr::new(TypeKind::InlineStruct, tag);
            t.struct_fields = fields;
            Ok(t)
        } else if tag.is_empty() {
            Err(self.error_here("struct tag or `{`"))
        } else {
            Ok(TypeExpr::new(TypeKind::StructRef, tag))
        }
    }

    fn parse_angles(&mut self, t: &mut TypeExpr) -> PResult<()> {
        self.expect_punct('<')?;
        let mut items = Vec::new();
        loop {
            items.push(self.parse_type()?);
            if self.peek_punct(',') {
                self.bump();
            } else {
                break;
            }
        }
        self.expect_punct('>')?;
        let bare = |x: &TypeExpr| {
            x.kind == TypeKind::Other
                && x.pointer_depth == 0
                && x.generic_args.is_empty()
                && x.protocols.is_empty()
                && !x.is_const
                && !x.base_name.contains(' ')
        };
        let is_protocol_list = match t.base_name.as_str() {
            "id" | "Class" => true,
            b if self.opts.collection_classes.contains(b) => false,
            _ => items.iter().all(bare),
        };
        if is_protocol_list {
            if let Some(bad) = items.iter().find(|x| !bare(x)) {
                let tok = self.toks[self.pos - 1].clone();
                return Err(ParseError {
                    line: tok.line,
                    column: tok.column,
                    expected: "protocol name".into(),
                    found: format!("type `{}`", bad.canonical()),
                });
            }
            t.protocols = items.into_iter().map(|x| x.base_name).collect();
        } else {
            t.generic_args = items;
        }
        Ok(())
    }
}
