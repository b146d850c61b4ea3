//! Semantic linter over candidate method signatures.
//!
//! Every finding carries a fixed severity. High findings are hard
//! constraints (a candidate with one is inadmissible); medium and low
//! findings are soft and only add cost during selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::header::{
    declarator, default_collection_classes, parse_method, parse_type, MethodDecl, ParseError, ParseOptions, TypeExpr,
    TypeKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constraint {
    SyntaxErrors,
    NoStructs,
    SelectorMismatch,
    StructRefs,
    GenericCollections,
    NoIdGenerics,
    ConventionalTypes,
    MethodNotParsed,
}

impl Constraint {
    pub const ALL: [Constraint; 8] = [
        Constraint::SyntaxErrors,
        Constraint::NoStructs,
        Constraint::SelectorMismatch,
        Constraint::StructRefs,
        Constraint::GenericCollections,
        Constraint::NoIdGenerics,
        Constraint::ConventionalTypes,
        Constraint::MethodNotParsed,
    ];

    pub fn severity(self) -> Severity {
        match self {
            Constraint::SyntaxErrors
            | Constraint::NoStructs
            | Constraint::SelectorMismatch
            | Constraint::MethodNotParsed => Severity::High,
            Constraint::StructRefs | Constraint::GenericCollections | Constraint::NoIdGenerics => Severity::Medium,
            Constraint::ConventionalTypes => Severity::Low,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constraint::SyntaxErrors => "SyntaxErrors",
            Constraint::NoStructs => "NoStructs",
            Constraint::SelectorMismatch => "SelectorMismatch",
            Constraint::StructRefs => "StructRefs",
            Constraint::GenericCollections => "GenericCollections",
            Constraint::NoIdGenerics => "NoIdGenerics",
            Constraint::ConventionalTypes => "ConventionalTypes",
            Constraint::MethodNotParsed => "MethodNotParsed",
        }
    }

    pub fn message_type(self) -> &'static str {
        match self {
            Constraint::SyntaxErrors => "Syntax Violation",
            Constraint::NoStructs => "Inline Struct Detected",
            Constraint::SelectorMismatch => "Selector Divergence",
            Constraint::StructRefs => "Raw Struct Pointer Used",
            Constraint::GenericCollections => "Missing Generic Parameter",
            Constraint::NoIdGenerics => "Generic Type is id",
            Constraint::ConventionalTypes => "Non-conventional Scalar Type",
            Constraint::MethodNotParsed => "Method Not Parsed",
        }
    }

    /// Report category label; `None` for syntax errors, which are always
    /// accompanied by a `MethodNotParsed` finding and reported under it.
    pub fn report_category(self) -> Option<&'static str> {
        match self {
            Constraint::SyntaxErrors => None,
            Constraint::NoStructs => Some("No Structs"),
            Constraint::SelectorMismatch => Some("Selector Mismatch"),
            Constraint::StructRefs => Some("Struct Refs"),
            Constraint::GenericCollections => Some("Generic Collections"),
            Constraint::NoIdGenerics => Some("No ID Generics"),
            Constraint::ConventionalTypes => Some("Conventional Types"),
            Constraint::MethodNotParsed => Some("Method Not Parsed"),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Constraint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Constraint::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown constraint `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub constraint: Constraint,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

impl Diagnostic {
    pub fn new(constraint: Constraint, message: impl Into<String>) -> Self {
        Diagnostic {
            constraint,
            severity: constraint.severity(),
            position: None,
            message: format!("{}: {}", constraint.message_type(), message.into()),
            suggestion: None,
        }
    }

    pub fn at(mut self, position: usize) -> Self {
        self.position = Some(position);
        self
    }

    pub fn with_suggestion(mut self, suggestion: impl Into<String>) -> Self {
        self.suggestion = Some(suggestion.into());
        self
    }

    pub fn is_hard(&self) -> bool {
        self.severity == Severity::High
    }

    /// `constraint: message; suggestion` line used in feedback prompts.
    pub fn feedback_line(&self) -> String {
        match &self.suggestion {
            Some(s) => format!("{}: {}; suggestion: {}", self.constraint, self.message, s),
            None => format!("{}: {}", self.constraint, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticSet {
    pub candidate: String,
    pub diags: Vec<Diagnostic>,
}

impl DiagnosticSet {
    pub fn is_clean(&self) -> bool {
        self.diags.is_empty()
    }

    pub fn has_hard(&self) -> bool {
        self.diags.iter().any(Diagnostic::is_hard)
    }

    pub fn count(&self, c: Constraint) -> usize {
        self.diags.iter().filter(|d| d.constraint == c).count()
    }

    pub fn hard_count(&self) -> usize {
        self.diags.iter().filter(|d| d.is_hard()).count()
    }
}

/// Splits findings into hard (high) and soft (medium, low), keeping
/// multiplicity and order.
pub fn partition(set: &DiagnosticSet) -> (Vec<Diagnostic>, Vec<Diagnostic>) {
    set.diags.iter().cloned().partition(Diagnostic::is_hard)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LintConfig {
    pub enabled_constraints: BTreeSet<Constraint>,
    pub collection_classes: BTreeSet<String>,
    /// Non-conventional scalar spelling → conventional spelling.
    pub scalar_conventions: BTreeMap<String, String>,
    /// Element type offered in suggestions for collections lacking generics.
    pub generic_placeholder: String,
    /// Inline struct layout (canonical field types joined by ", ") → named type.
    pub struct_layouts: BTreeMap<String, String>,
}

impl Default for LintConfig {
    fn default() -> Self {
        LintConfig {
            enabled_constraints: Constraint::ALL.into_iter().collect(),
            collection_classes: default_collection_classes(),
            scalar_conventions: BTreeMap::from([("_Bool".to_string(), "BOOL".to_string())]),
            generic_placeholder: "NSString *".to_string(),
            struct_layouts: BTreeMap::from([("double, double".to_string(), "CGPoint".to_string())]),
        }
    }
}

impl LintConfig {
    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions { collection_classes: self.collection_classes.clone() }
    }

    fn on(&self, c: Constraint) -> bool {
        self.enabled_constraints.contains(&c)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CandidateRef<'a> {
    Text(&'a str),
    Decl(&'a MethodDecl),
}

impl<'a> From<&'a str> for CandidateRef<'a> {
    fn from(s: &'a str) -> Self {
        CandidateRef::Text(s)
    }
}

impl<'a> From<&'a String> for CandidateRef<'a> {
    fn from(s: &'a String) -> Self {
        CandidateRef::Text(s)
    }
}

impl<'a> From<&'a MethodDecl> for CandidateRef<'a> {
    fn from(d: &'a MethodDecl) -> Self {
        CandidateRef::Decl(d)
    }
}

pub fn lint<'a>(candidate: impl Into<CandidateRef<'a>>, original: &MethodDecl, cfg: &LintConfig) -> DiagnosticSet {
    match candidate.into() {
        CandidateRef::Text(text) => match parse_method(text, &cfg.parse_options()) {
            Ok(decl) => {
                let mut set = lint_decl(&decl, original, cfg);
                set.candidate = text.to_string();
                set
            }
            Err(err) => parse_failure(text, &err, cfg),
        },
        CandidateRef::Decl(decl) => lint_decl(decl, original, cfg),
    }
}

fn parse_failure(text: &str, err: &ParseError, cfg: &LintConfig) -> DiagnosticSet {
    let mut diags = Vec::new();
    if cfg.on(Constraint::SyntaxErrors) {
        let mut d = Diagnostic::new(Constraint::SyntaxErrors, err.to_string());
        if let Some(fix) = insertion_fix(text, err, cfg) {
            d = d.with_suggestion(fix);
        }
        diags.push(d);
    }
    if cfg.on(Constraint::MethodNotParsed) {
        diags.push(Diagnostic::new(Constraint::MethodNotParsed, "candidate is not a method declaration"));
    }
    DiagnosticSet { candidate: text.to_string(), diags }
}

/// If the parser expected a single punctuation token, try inserting it at
/// the error location and keep the result when it parses.
fn insertion_fix(text: &str, err: &ParseError, cfg: &LintConfig) -> Option<String> {
    let inner = err.expected.strip_prefix('`')?.strip_suffix('`')?;
    let mut chars = inner.chars();
    let c = chars.next()?;
    if chars.next().is_some() || c.is_alphanumeric() {
        return None;
    }
    let offset = byte_offset(text, err.line, err.column)?;
    let mut fixed = String::with_capacity(text.len() + 1);
    fixed.push_str(&text[..offset]);
    fixed.push(c);
    fixed.push_str(&text[offset..]);
    parse_method(&fixed, &cfg.parse_options()).ok().map(|_| fixed)
}

fn byte_offset(text: &str, line: usize, column: usize) -> Option<usize> {
    let (mut l, mut c) = (1, 1);
    for (i, ch) in text.char_indices() {
        if l == line && c == column {
            return Some(i);
        }
        if ch == '\n' {
            l += 1;
            c = 1;
        } else {
            c += 1;
        }
    }
    (l == line && c == column).then_some(text.len())
}

fn lint_decl(decl: &MethodDecl, original: &MethodDecl, cfg: &LintConfig) -> DiagnosticSet {
    let mut diags = Vec::new();
    if cfg.on(Constraint::SelectorMismatch) {
        check_selector(decl, original, &mut diags);
    }
    type Check = fn(&TypeExpr, &LintConfig) -> Option<(String, Option<TypeExpr>)>;
    let checks: [(Constraint, Check); 5] = [
        (Constraint::NoStructs, check_inline_struct),
        (Constraint::StructRefs, check_struct_ref),
        (Constraint::GenericCollections, check_missing_generics),
        (Constraint::NoIdGenerics, check_id_generics),
        (Constraint::ConventionalTypes, check_conventional),
    ];
    for (constraint, check) in checks {
        if !cfg.on(constraint) {
            continue;
        }
        for (pos, ty) in decl.positions() {
            let mut nodes = Vec::new();
            ty.walk(&mut |t| nodes.push(t));
            for (n, node) in nodes.iter().enumerate() {
                let Some((message, replacement)) = check(node, cfg) else { continue };
                let mut d = Diagnostic::new(constraint, message).at(pos);
                if let Some(rep) = replacement {
                    let mut fixed = ty.clone();
                    replace_nth(&mut fixed, n, &rep);
                    d = d.with_suggestion(declarator(&fixed, decl.param_name(pos).unwrap_or("")));
                }
                diags.push(d);
            }
        }
    }
    DiagnosticSet { candidate: decl.render(), diags }
}

fn check_selector(decl: &MethodDecl, original: &MethodDecl, diags: &mut Vec<Diagnostic>) {
    let expected = original.selector();
    let n = decl.selector_pieces.len().max(original.selector_pieces.len());
    for i in 0..n {
        let got = decl.selector_pieces.get(i);
        let want = original.selector_pieces.get(i);
        if got == want {
            continue;
        }
        let msg = match (got, want) {
            (Some(g), Some(w)) => format!("piece {} is `{g}`, expected `{w}`", i + 1),
            (Some(g), None) => format!("unexpected extra piece {} `{g}`", i + 1),
            (None, Some(w)) => format!("missing piece {} `{w}`", i + 1),
            (None, None) => unreachable!(),
        };
        diags.push(Diagnostic::new(Constraint::SelectorMismatch, msg).with_suggestion(expected.clone()));
    }
}

fn check_inline_struct(t: &TypeExpr, cfg: &LintConfig) -> Option<(String, Option<TypeExpr>)> {
    if t.kind != TypeKind::InlineStruct {
        return None;
    }
    let layout = t.struct_fields.iter().map(|f| f.ty.canonical()).collect::<Vec<_>>().join(", ");
    let replacement = cfg.struct_layouts.get(&layout).map(|name| {
        let mut r = TypeExpr::new(TypeKind::Other, name.clone());
        r.pointer_depth = t.pointer_depth;
        r.is_const = t.is_const;
        r
    });
    Some((format!("`{}`", t.canonical()), replacement))
}

fn check_struct_ref(t: &TypeExpr, _cfg: &LintConfig) -> Option<(String, Option<TypeExpr>)> {
    if t.kind != TypeKind::StructRef {
        return None;
    }
    // struct __CFString * → CFStringRef
    let mut r = TypeExpr::new(TypeKind::Other, format!("{}Ref", t.base_name.trim_start_matches('_')));
    r.pointer_depth = t.pointer_depth.saturating_sub(1);
    Some((format!("`{}`", t.canonical()), Some(r)))
}

fn check_missing_generics(t: &TypeExpr, cfg: &LintConfig) -> Option<(String, Option<TypeExpr>)> {
    if t.kind != TypeKind::Collection || !t.generic_args.is_empty() {
        return None;
    }
    let slots = if t.base_name.contains("Dictionary") || t.base_name.contains("MapTable") { 2 } else { 1 };
    let replacement = parse_type(&cfg.generic_placeholder, &cfg.parse_options()).ok().map(|ph| {
        let mut r = t.clone();
        r.generic_args = vec![ph; slots];
        r
    });
    Some((format!("`{}` has no element type", t.canonical()), replacement))
}

fn check_id_generics(t: &TypeExpr, _cfg: &LintConfig) -> Option<(String, Option<TypeExpr>)> {
    if t.kind != TypeKind::Collection || !t.generic_args.iter().any(|g| g.kind == TypeKind::IdType) {
        return None;
    }
    let mut r = t.clone();
    r.generic_args.clear();
    Some((format!("`{}`", t.canonical()), Some(r)))
}

fn check_conventional(t: &TypeExpr, cfg: &LintConfig) -> Option<(String, Option<TypeExpr>)> {
    if t.kind != TypeKind::Scalar {
        return None;
    }
    let conventional = cfg.scalar_conventions.get(&t.base_name)?;
    let mut r = t.clone();
    r.base_name = conventional.clone();
    Some((format!("`{}`, use `{conventional}`", t.base_name), Some(r)))
}

/// Replaces the `target`-th node of a pre-order walk (same order as
/// [`TypeExpr::walk`]).
fn replace_nth(t: &mut TypeExpr, target: usize, replacement: &TypeExpr) {
    fn go(t: &mut TypeExpr, counter: &mut usize, target: usize, rep: &TypeExpr) -> bool {
        if *counter == target {
            *t = rep.clone();
            return true;
        }
        *counter += 1;
        for g in &mut t.generic_args {
            if go(g, counter, target, rep) {
                return true;
            }
        }
        if let Some(b) = &mut t.block_signature {
            if go(&mut b.return_type, counter, target, rep) {
                return true;
            }
            for p in &mut b.params {
                if go(p, counter, target, rep) {
                    return true;
                }
            }
        }
        for f in &mut t.struct_fields {
            if go(&mut f.ty, counter, target, rep) {
                return true;
            }
        }
        false
    }
    let mut counter = 0;
    go(t, &mut counter, target, replacement);
}

/// Applies a diagnostic's suggestion to the candidate text, returning the
/// corrected candidate. `None` when there is nothing mechanical to apply.
pub fn apply_suggestion(candidate: &str, diag: &Diagnostic, cfg: &LintConfig) -> Option<String> {
    let suggestion = diag.suggestion.as_deref()?;
    let opts = cfg.parse_options();
    match diag.constraint {
        Constraint::SyntaxErrors => Some(suggestion.to_string()),
        Constraint::MethodNotParsed => None,
        Constraint::SelectorMismatch => {
            let mut decl = parse_method(candidate, &opts).ok()?;
            let pieces = split_selector(suggestion);
            if pieces.len() != decl.selector_pieces.len() {
                return None;
            }
            decl.selector_pieces = pieces;
            Some(decl.render())
        }
        _ => {
            let mut decl = parse_method(candidate, &opts).ok()?;
            let pos = diag.position?;
            let name = decl.param_name(pos).unwrap_or("").to_string();
            let type_text =
                if name.is_empty() { suggestion } else { suggestion.strip_suffix(name.as_str())?.trim_end() };
            let ty = parse_type(type_text, &opts).ok()?;
            *decl.type_at_mut(pos)? = ty;
            Some(decl.render())
        }
    }
}

/// `doSomething:withArg2:` → `["doSomething:", "withArg2:"]`.
pub fn split_selector(sel: &str) -> Vec<String> {
    if !sel.contains(':') {
        return vec![sel.to_string()];
    }
    sel.split_inclusive(':').map(str::to_string).collect()
}
