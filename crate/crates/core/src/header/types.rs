use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Coarse classification of a type expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeKind {
    Scalar,
    ObjectPointer,
    IdType,
    VoidPointer,
    InlineStruct,
    StructRef,
    Collection,
    ProtocolQualified,
    Block,
    ClassType,
    Other,
}

impl TypeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeKind::Scalar => "scalar",
            TypeKind::ObjectPointer => "object-pointer",
            TypeKind::IdType => "id-type",
            TypeKind::VoidPointer => "void-pointer",
            TypeKind::InlineStruct => "inline-struct",
            TypeKind::StructRef => "struct-ref",
            TypeKind::Collection => "collection",
            TypeKind::ProtocolQualified => "protocol-qualified",
            TypeKind::Block => "block",
            TypeKind::ClassType => "class-type",
            TypeKind::Other => "other",
        }
    }
}

impl fmt::Display for TypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TypeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "scalar" => TypeKind::Scalar,
            "object-pointer" => TypeKind::ObjectPointer,
            "id-type" => TypeKind::IdType,
            "void-pointer" => TypeKind::VoidPointer,
            "inline-struct" => TypeKind::InlineStruct,
            "struct-ref" => TypeKind::StructRef,
            "collection" => TypeKind::Collection,
            "protocol-qualified" => TypeKind::ProtocolQualified,
            "block" => TypeKind::Block,
            "class-type" => TypeKind::ClassType,
            "other" => TypeKind::Other,
            _ => return Err(format!("unknown type kind `{s}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSignature {
    pub return_type: TypeExpr,
    pub params: Vec<TypeExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StructField {
    pub ty: TypeExpr,
    pub name: String,
}

/// A parsed type. Nullability and ownership annotations are dropped at
/// parse time, so two spellings that differ only in those compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeExpr {
    pub kind: TypeKind,
    /// Identifier text. Multi-word C scalars keep their words joined by a
    /// single space; struct kinds hold the tag (empty when anonymous).
    pub base_name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generic_args: Vec<TypeExpr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub protocols: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_signature: Option<Box<BlockSignature>>,
    #[serde(default)]
    pub pointer_depth: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_const: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub struct_fields: Vec<StructField>,
}

pub const DEFAULT_COLLECTION_CLASSES: &[&str] =
    &["NSArray", "NSDictionary", "NSSet", "NSOrderedSet", "NSMutableArray", "NSMutableDictionary", "NSMutableSet"];

pub fn default_collection_classes() -> BTreeSet<String> {
    DEFAULT_COLLECTION_CLASSES.iter().map(|s| s.to_string()).collect()
}

/// Words that may make up a builtin C scalar spelling.
pub(crate) const C_SCALAR_WORDS: &[&str] =
    &["void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "_Bool", "bool"];

/// Value typedefs from the Apple SDKs and <stdint.h> that denote scalars.
pub(crate) const SCALAR_TYPEDEFS: &[&str] = &[
    "BOOL",
    "Boolean",
    "NSInteger",
    "NSUInteger",
    "CGFloat",
    "NSTimeInterval",
    "unichar",
    "UniChar",
    "OSStatus",
    "size_t",
    "ssize_t",
    "intptr_t",
    "uintptr_t",
    "int8_t",
    "int16_t",
    "int32_t",
    "int64_t",
    "uint8_t",
    "uint16_t",
    "uint32_t",
    "uint64_t",
    "UInt8",
    "UInt16",
    "UInt32",
    "UInt64",
    "SInt8",
    "SInt16",
    "SInt32",
    "SInt64",
    "pid_t",
    "uid_t",
    "mode_t",
    "off_t",
];

impl TypeExpr {
    pub fn new(kind: TypeKind, base_name: impl Into<String>) -> Self {
        TypeExpr {
            kind,
            base_name: base_name.into(),
            generic_args: Vec::new(),
            protocols: Vec::new(),
            block_signature: None,
            pointer_depth: 0,
            is_const: false,
            struct_fields: Vec::new(),
        }
    }

    pub fn scalar(name: &str) -> Self {
        TypeExpr::new(TypeKind::Scalar, name)
    }

    pub fn void() -> Self {
        TypeExpr::scalar("void")
    }

    pub fn id() -> Self {
        TypeExpr::new(TypeKind::IdType, "id")
    }

    pub fn object(class: &str) -> Self {
        TypeExpr { pointer_depth: 1, ..TypeExpr::new(TypeKind::ObjectPointer, class) }
    }

    pub fn block(return_type: TypeExpr, params: Vec<TypeExpr>) -> Self {
        TypeExpr {
            block_signature: Some(Box::new(BlockSignature { return_type, params })),
            ..TypeExpr::new(TypeKind::Block, "")
        }
    }

    /// Recomputes `kind` from the structural fields. Block and struct kinds
    /// are decided by the parser and kept as-is.
    pub fn reclassify(&mut self, collections: &BTreeSet<String>) {
        if matches!(self.kind, TypeKind::Block | TypeKind::InlineStruct | TypeKind::StructRef) {
            return;
        }
        self.kind = classify_named(
            &self.base_name,
            self.pointer_depth,
            !self.generic_args.is_empty(),
            !self.protocols.is_empty(),
            collections,
        );
    }

    /// Pre-order walk over this type and every nested type (generic
    /// arguments, block return/parameters, struct fields).
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a TypeExpr)) {
        f(self);
        for g in &self.generic_args {
            g.walk(f);
        }
        if let Some(b) = &self.block_signature {
            b.return_type.walk(f);
            for p in &b.params {
                p.walk(f);
            }
        }
        for field in &self.struct_fields {
            field.ty.walk(f);
        }
    }

    /// True if any protocol annotation appears anywhere in the tree.
    pub fn mentions_protocol(&self) -> bool {
        let mut found = false;
        self.walk(&mut |t| found |= !t.protocols.is_empty());
        found
    }

    pub fn canonical(&self) -> String {
        let mut s = String::new();
        self.write_canonical(&mut s);
        s
    }

    fn write_canonical(&self, out: &mut String) {
        if self.is_const {
            out.push_str("const ");
        }
        match self.kind {
            TypeKind::InlineStruct => {
                out.push_str("struct ");
                if !self.base_name.is_empty() {
                    out.push_str(&self.base_name);
                    out.push(' ');
                }
                out.push_str("{ ");
                for f in &self.struct_fields {
                    out.push_str(&declarator(&f.ty, &f.name));
                    out.push_str("; ");
                }
                out.push('}');
            }
            TypeKind::StructRef => {
                out.push_str("struct ");
                out.push_str(&self.base_name);
            }
            TypeKind::Block => {
                let sig = self.block_signature.as_ref().expect("block kind carries a signature");
                sig.return_type.write_canonical(out);
                out.push_str(" (^)(");
                if sig.params.is_empty() {
                    out.push_str("void");
                }
                for (i, p) in sig.params.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    p.write_canonical(out);
                }
                out.push(')');
            }
            _ => {
                out.push_str(&self.base_name);
                if !self.generic_args.is_empty() {
                    out.push('<');
                    for (i, g) in self.generic_args.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        g.write_canonical(out);
                    }
                    out.push('>');
                }
                if !self.protocols.is_empty() {
                    out.push('<');
                    out.push_str(&self.protocols.join(", "));
                    out.push('>');
                }
            }
        }
        if self.pointer_depth > 0 {
            out.push(' ');
            for _ in 0..self.pointer_depth {
                out.push('*');
            }
        }
    }

    /// Checks the structural invariants of the kind field.
    pub fn check_invariants(&self, collections: &BTreeSet<String>) -> Result<(), String> {
        let mut err = None;
        self.walk(&mut |t| {
            if err.is_some() {
                return;
            }
            if t.kind == TypeKind::Collection && (!collections.contains(&t.base_name) || t.pointer_depth < 1) {
                err = Some(format!("collection `{}` violates base/pointer rule", t.canonical()));
            }
            if t.kind == TypeKind::ProtocolQualified && t.protocols.is_empty() {
                err = Some("protocol-qualified type without protocols".into());
            }
            if (t.kind == TypeKind::Block) != t.block_signature.is_some() {
                err = Some("block signature present iff kind is block".into());
            }
            if t.kind == TypeKind::IdType && !t.generic_args.is_empty() {
                err = Some("id carries generic arguments".into());
            }
        });
        err.map_or(Ok(()), Err)
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// `T name`, or `T *name` when the type ends in a pointer star.
pub fn declarator(ty: &TypeExpr, name: &str) -> String {
    let t = ty.canonical();
    if name.is_empty() {
        t
    } else if t.ends_with('*') {
        format!("{t}{name}")
    } else {
        format!("{t} {name}")
    }
}

pub(crate) fn is_c_scalar_word(w: &str) -> bool {
    C_SCALAR_WORDS.contains(&w)
}

pub(crate) fn classify_named(
    base: &str,
    depth: u32,
    has_generics: bool,
    has_protocols: bool,
    collections: &BTreeSet<String>,
) -> TypeKind {
    match base {
        "id" if has_protocols => TypeKind::ProtocolQualified,
        "id" => TypeKind::IdType,
        "Class" if has_protocols => TypeKind::ProtocolQualified,
        "Class" => TypeKind::ClassType,
        "void" if depth > 0 => TypeKind::VoidPointer,
        _ if has_protocols => TypeKind::ProtocolQualified,
        _ if depth >= 1 && collections.contains(base) => TypeKind::Collection,
        _ if depth == 0 && is_scalar_spelling(base) => TypeKind::Scalar,
        _ if depth >= 1 && !is_scalar_spelling(base) && (has_generics || starts_upper(base)) => TypeKind::ObjectPointer,
        _ => TypeKind::Other,
    }
}

fn starts_upper(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_uppercase() || c == '_')
}

pub(crate) fn is_scalar_spelling(base: &str) -> bool {
    SCALAR_TYPEDEFS.contains(&base) || base.split(' ').all(is_c_scalar_word)
}
