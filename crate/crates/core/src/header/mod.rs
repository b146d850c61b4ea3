//! Objective-C header model: parsing, inference-target discovery, symbol
//! binding and type canonicalization.

mod lexer;
mod parser;
mod types;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::{
    parse_header, parse_header_with, parse_method, parse_type, ClassInterface, ContainerKind, HeaderAst, ParseError,
    ParseOptions, SkipCounts,
};
pub use types::{
    declarator, default_collection_classes, BlockSignature, StructField, TypeExpr, TypeKind, DEFAULT_COLLECTION_CLASSES,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: TypeExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodDecl {
    pub is_class_method: bool,
    /// Keyword pieces keep their trailing `:`; a unary selector is one piece
    /// without a colon.
    pub selector_pieces: Vec<String>,
    pub return_type: TypeExpr,
    pub params: Vec<Param>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub variadic: bool,
    pub owning_class: String,
    pub source_header: String,
    pub source_span: SourceSpan,
}

impl MethodDecl {
    pub fn selector(&self) -> String {
        self.selector_pieces.concat()
    }

    pub fn marker(&self) -> char {
        if self.is_class_method {
            '+'
        } else {
            '-'
        }
    }

    /// Number of type positions: the return type plus one per parameter.
    pub fn position_count(&self) -> usize {
        self.params.len() + 1
    }

    /// Position 0 is the return type, 1..=n the parameters in order.
    pub fn type_at(&self, position: usize) -> Option<&TypeExpr> {
        if position == 0 {
            Some(&self.return_type)
        } else {
            self.params.get(position - 1).map(|p| &p.ty)
        }
    }

    pub fn type_at_mut(&mut self, position: usize) -> Option<&mut TypeExpr> {
        if position == 0 {
            Some(&mut self.return_type)
        } else {
            self.params.get_mut(position - 1).map(|p| &mut p.ty)
        }
    }

    pub fn positions(&self) -> impl Iterator<Item = (usize, &TypeExpr)> {
        std::iter::once(&self.return_type).chain(self.params.iter().map(|p| &p.ty)).enumerate()
    }

    pub fn param_name(&self, position: usize) -> Option<&str> {
        position.checked_sub(1).and_then(|i| self.params.get(i)).map(|p| p.name.as_str())
    }

    pub fn symbol_text(&self) -> String {
        format!("{}[{} {}]", self.marker(), self.owning_class, self.selector())
    }

    /// Structural equality ignoring provenance (class, header, span).
    pub fn same_signature(&self, other: &MethodDecl) -> bool {
        self.is_class_method == other.is_class_method
            && self.selector_pieces == other.selector_pieces
            && self.return_type == other.return_type
            && self.params == other.params
            && self.variadic == other.variadic
    }

    /// Canonical type strings for every position, in position order.
    pub fn canonical_types(&self) -> Vec<String> {
        self.positions().map(|(_, t)| t.canonical()).collect()
    }

    pub fn arity_consistent(&self) -> bool {
        let keyword = self.selector_pieces.iter().filter(|p| p.ends_with(':')).count();
        !self.selector_pieces.is_empty() && keyword == self.params.len()
    }

    pub fn render(&self) -> String {
        render_signature(self)
    }
}

impl fmt::Display for MethodDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_signature(self))
    }
}

pub fn render_signature(decl: &MethodDecl) -> String {
    let mut s = format!("{} ({})", decl.marker(), decl.return_type.canonical());
    if decl.params.is_empty() {
        s.push_str(decl.selector_pieces.first().map(String::as_str).unwrap_or(""));
    } else {
        for (i, (piece, p)) in decl.selector_pieces.iter().zip(&decl.params).enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(piece);
            s.push('(');
            s.push_str(&p.ty.canonical());
            s.push(')');
            s.push_str(&p.name);
        }
        if decl.variadic {
            s.push_str(", ...");
        }
    }
    s.push(';');
    s
}

pub fn canonicalize_type(t: &TypeExpr) -> String {
    t.canonical()
}

/// Canonical form of a type spelled as text. Falls back to the trimmed,
/// whitespace-collapsed text when it does not parse.
pub fn canonicalize_type_text(text: &str, opts: &ParseOptions) -> String {
    match parse_type(text, opts) {
        Ok(t) => t.canonical(),
        Err(_) => text.split_whitespace().collect::<Vec<_>>().join(" "),
    }
}

/// Which type kinds make a position an inference target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityConfig {
    pub kinds: BTreeSet<TypeKind>,
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        AmbiguityConfig {
            kinds: [TypeKind::IdType, TypeKind::VoidPointer, TypeKind::InlineStruct].into_iter().collect(),
        }
    }
}

impl AmbiguityConfig {
    pub fn is_ambiguous(&self, t: &TypeExpr) -> bool {
        self.kinds.contains(&t.kind)
    }

    pub fn ambiguous_positions(&self, decl: &MethodDecl) -> BTreeSet<usize> {
        decl.positions().filter(|(_, t)| self.is_ambiguous(t)).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorSymbol {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<u64>,
}

impl SelectorSymbol {
    pub fn well_formed(&self) -> bool {
        (self.text.starts_with("+[") || self.text.starts_with("-[")) && self.text.ends_with(']')
    }

    /// The selector part of `±[Class selector]`.
    pub fn selector(&self) -> Option<&str> {
        let inner = self.text.get(2..self.text.len().checked_sub(1)?)?;
        inner.split_once(' ').map(|(_, sel)| sel)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceTarget {
    pub decl: MethodDecl,
    pub ambiguous_positions: BTreeSet<usize>,
    pub bound_symbol: Option<SelectorSymbol>,
    pub framework: String,
}

impl InferenceTarget {
    pub fn symbol_text(&self) -> String {
        self.bound_symbol.as_ref().map(|s| s.text.clone()).unwrap_or_else(|| self.decl.symbol_text())
    }
}

pub fn find_inference_targets(ast: &HeaderAst, ambiguity: &AmbiguityConfig) -> Vec<InferenceTarget> {
    ast.methods()
        .filter_map(|m| {
            let positions = ambiguity.ambiguous_positions(m);
            (!positions.is_empty()).then(|| InferenceTarget {
                decl: m.clone(),
                ambiguous_positions: positions,
                bound_symbol: None,
                framework: ast.framework.clone(),
            })
        })
        .collect()
}

/// Symbol rows as ingested; duplicates are kept so that collisions can be
/// detected at binding time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    rows: Vec<(String, u64)>,
    index: HashMap<String, Vec<usize>>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, symbol: impl Into<String>, address: u64) {
        let symbol = symbol.into();
        self.index.entry(symbol.clone()).or_default().push(self.rows.len());
        self.rows.push((symbol, address));
    }

    pub fn lookup(&self, symbol: &str) -> Vec<u64> {
        self.index.get(symbol).map(|ix| ix.iter().map(|&i| self.rows[i].1).collect()).unwrap_or_default()
    }

    pub fn rows(&self) -> &[(String, u64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains_address(&self, address: u64) -> bool {
        self.rows.iter().any(|(_, a)| *a == address)
    }
}

impl FromIterator<(String, u64)> for SymbolTable {
    fn from_iter<I: IntoIterator<Item = (String, u64)>>(iter: I) -> Self {
        let mut t = SymbolTable::new();
        for (s, a) in iter {
            t.insert(s, a);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("symbol collision: `{symbol}` appears at {addresses:x?}")]
    SymbolCollision { symbol: String, addresses: Vec<u64> },
}

pub fn bind_symbol(mut target: InferenceTarget, symtab: &SymbolTable) -> Result<InferenceTarget, BindError> {
    let text = target.decl.symbol_text();
    let hits = symtab.lookup(&text);
    if hits.len() > 1 {
        return Err(BindError::SymbolCollision { symbol: text, addresses: hits });
    }
    target.bound_symbol = Some(SelectorSymbol { text, address: hits.first().copied() });
    Ok(target)
}
