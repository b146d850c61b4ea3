//! Analysis tools exposed to the model, served from an ingested workspace
//! snapshot instead of live binary tooling.
//!
//! Workspace layout:
//!
//! ```text
//! <root>/manifest.json            {"framework": "...", "os_build": "..."}
//! <root>/symbols.json             [{"symbol": "-[Foo reset]", "address": "0x1000"}, ...]
//! <root>/disas/<hex-addr>.txt     instruction window per address
//! <root>/dec/<hex-addr>.txt       pseudocode per address
//! <root>/headers/<Name>.h         stripped headers
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::header::{parse_header_with, HeaderAst, ParseOptions, SymbolTable};

pub const DEFAULT_DISAS_WINDOW: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    SymAddr,
    Disas,
    Dec,
    HdrRead,
    HdrScan,
    Yield,
}

impl ToolName {
    pub const ALL: [ToolName; 6] =
        [ToolName::SymAddr, ToolName::Disas, ToolName::Dec, ToolName::HdrRead, ToolName::HdrScan, ToolName::Yield];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::SymAddr => "sym_addr",
            ToolName::Disas => "disas",
            ToolName::Dec => "dec",
            ToolName::HdrRead => "hdr_read",
            ToolName::HdrScan => "hdr_scan",
            ToolName::Yield => "yield",
        }
    }

    pub fn parse(s: &str) -> Option<ToolName> {
        ToolName::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Selector,
    Address,
    HeaderName,
    LineCount,
    Signature,
}

impl ParamKind {
    /// JSON-schema type used when describing tools on the wire.
    pub fn json_type(self) -> &'static str {
        match self {
            ParamKind::LineCount => "integer",
            _ => "string",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDef {
    pub name: ToolName,
    pub params: Vec<ToolParam>,
    pub description: String,
}

impl ToolDef {
    fn new(name: ToolName, params: &[(&str, ParamKind, bool)], description: &str) -> Self {
        ToolDef {
            name,
            params: params.iter().map(|(n, k, r)| ToolParam { name: n.to_string(), kind: *k, required: *r }).collect(),
            description: description.to_string(),
        }
    }

    /// JSON schema for the parameters object.
    pub fn parameters_schema(&self) -> serde_json::Value {
        let props: serde_json::Map<String, serde_json::Value> =
            self.params.iter().map(|p| (p.name.clone(), serde_json::json!({ "type": p.kind.json_type() }))).collect();
        let required: Vec<&str> = self.params.iter().filter(|p| p.required).map(|p| p.name.as_str()).collect();
        serde_json::json!({ "type": "object", "properties": props, "required": required })
    }
}

/// The six-tool inventory.
pub fn standard_profile() -> Vec<ToolDef> {
    use ParamKind::*;
    vec![
        ToolDef::new(
            ToolName::SymAddr,
            &[("selector", Selector, true)],
            "Resolve a symbol such as -[Class selector:] to its address in the binary.",
        ),
        ToolDef::new(
            ToolName::Disas,
            &[("address", Address, true), ("window_lines", LineCount, false)],
            "Return an ARM64 disassembly window (default 64 lines) starting at an address.",
        ),
        ToolDef::new(
            ToolName::Dec,
            &[("address", Address, true)],
            "Return decompiler pseudocode for the function at an address.",
        ),
        ToolDef::new(
            ToolName::HdrRead,
            &[("header", HeaderName, true)],
            "Return the full text of a header of the current framework.",
        ),
        ToolDef::new(ToolName::HdrScan, &[], "List the headers available for the current framework."),
        yield_def(),
    ]
}

fn yield_def() -> ToolDef {
    ToolDef::new(
        ToolName::Yield,
        &[("signature", ParamKind::Signature, true)],
        "Return the final, fully typed Objective-C method declaration and stop.",
    )
}

/// Profile without analysis tools (only `yield`), for unassisted runs.
pub fn yield_only_profile() -> Vec<ToolDef> {
    vec![yield_def()]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub args: BTreeMap<String, String>,
    pub turn_index: usize,
}

impl ToolCall {
    pub fn new(tool: &str, args: &[(&str, &str)]) -> Self {
        ToolCall {
            tool_name: tool.to_string(),
            args: args.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            turn_index: 0,
        }
    }

    pub fn same_invocation(&self, other: &ToolCall) -> bool {
        self.tool_name == other.tool_name && self.args == other.args
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationReason {
    UnknownTool,
    MissingArg,
    UnknownArg,
    DanglingReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Hallucinated { reason: HallucinationReason, detail: String },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    fn bad(reason: HallucinationReason, detail: impl Into<String>) -> Self {
        Verdict::Hallucinated { reason, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Ok,
    InvalidCall,
    ProviderError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub status: ToolStatus,
    pub payload: String,
    pub verdict: Verdict,
    /// Exact repeat of an earlier (tool, args) pair in the same trace.
    #[serde(default)]
    pub redundant: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IngestWarning {
    MalformedSymbolRow { row: usize, reason: String },
    OrphanDisas { address: u64 },
    OrphanDec { address: u64 },
    BadFileName { path: String },
    UnreadableFile { path: String, reason: String },
    MissingSymbols,
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestWarning::MalformedSymbolRow { row, reason } => write!(f, "symbols.json row {row}: {reason}"),
            IngestWarning::OrphanDisas { address } => write!(f, "disas window {address:#x} has no symbol"),
            IngestWarning::OrphanDec { address } => write!(f, "pseudocode {address:#x} has no symbol"),
            IngestWarning::BadFileName { path } => write!(f, "unrecognised file name {path}"),
            IngestWarning::UnreadableFile { path, reason } => write!(f, "cannot read {path}: {reason}"),
            IngestWarning::MissingSymbols => f.write_str("symbols.json missing; symbol table is empty"),
        }
    }
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("missing manifest: {0}")]
    MissingManifest(PathBuf),
    #[error("malformed {file}: {message}")]
    MalformedJson { file: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub framework: String,
    #[serde(default)]
    pub os_build: String,
}

#[derive(Debug, Clone, Default)]
pub struct Workspace {
    pub root: PathBuf,
    pub framework: String,
    pub os_build: String,
    pub symtab: SymbolTable,
    pub disas_index: BTreeMap<u64, String>,
    pub dec_index: BTreeMap<u64, String>,
    pub headers: BTreeMap<String, String>,
    pub warnings: Vec<IngestWarning>,
}

/// Parses `0x180017F48`, `180017f48` and similar.
pub fn parse_address(s: &str) -> Option<u64> {
    let s = s.trim();
    let hex = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if hex.is_empty() {
        return None;
    }
    u64::from_str_radix(hex, 16).ok()
}

pub fn format_address(a: u64) -> String {
    format!("{a:#x}")
}

/// Parses the contents of `symbols.json`. Rows that are not objects with a
/// string `symbol` and a hex `address` are skipped with a warning.
pub fn parse_symbols_json(bytes: &[u8]) -> Result<(SymbolTable, Vec<IngestWarning>), WorkspaceError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| WorkspaceError::MalformedJson { file: "symbols.json".into(), message: e.to_string() })?;
    let rows = value.as_array().ok_or_else(|| WorkspaceError::MalformedJson {
        file: "symbols.json".into(),
        message: "top level is not an array".into(),
    })?;
    let mut table = SymbolTable::new();
    let mut warnings = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let row_no = i + 1;
        let symbol = row.get("symbol").and_then(|v| v.as_str());
        let address = row.get("address").and_then(|v| v.as_str());
        match (symbol, address) {
            (Some(s), Some(a)) => match parse_address(a) {
                Some(addr) => table.insert(s, addr),
                None => warnings
                    .push(IngestWarning::MalformedSymbolRow { row: row_no, reason: format!("bad address `{a}`") }),
            },
            (None, _) => {
                warnings.push(IngestWarning::MalformedSymbolRow { row: row_no, reason: "missing \"symbol\"".into() })
            }
            (_, None) => {
                warnings.push(IngestWarning::MalformedSymbolRow { row: row_no, reason: "missing \"address\"".into() })
            }
        }
    }
    Ok((table, warnings))
}

pub fn ingest_workspace(root: &Path) -> Result<Workspace, WorkspaceError> {
    let manifest_path = root.join("manifest.json");
    let manifest_bytes = match fs::read(&manifest_path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(WorkspaceError::MissingManifest(manifest_path))
        }
        Err(source) => return Err(WorkspaceError::Io { path: manifest_path, source }),
    };
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| WorkspaceError::MalformedJson { file: "manifest.json".into(), message: e.to_string() })?;

    let mut ws = Workspace {
        root: root.to_path_buf(),
        framework: manifest.framework,
        os_build: manifest.os_build,
        ..Workspace::default()
    };

    match fs::read(root.join("symbols.json")) {
        Ok(bytes) => {
            let (table, warnings) = parse_symbols_json(&bytes)?;
            ws.symtab = table;
            ws.warnings.extend(warnings);
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => ws.warnings.push(IngestWarning::MissingSymbols),
        Err(source) => return Err(WorkspaceError::Io { path: root.join("symbols.json"), source }),
    }

    ws.disas_index = read_address_dir(&root.join("disas"), &mut ws.warnings);
    ws.dec_index = read_address_dir(&root.join("dec"), &mut ws.warnings);
    for (dir, is_disas) in [(&ws.disas_index, true), (&ws.dec_index, false)] {
        for &addr in dir.keys() {
            if !ws.symtab.contains_address(addr) {
                ws.warnings.push(if is_disas {
                    IngestWarning::OrphanDisas { address: addr }
                } else {
                    IngestWarning::OrphanDec { address: addr }
                });
            }
        }
    }

    for (path, name) in sorted_entries(&root.join("headers")) {
        if !name.ends_with(".h") {
            continue;
        }
        match fs::read_to_string(&path) {
            Ok(text) => {
                ws.headers.insert(name, text);
            }
            Err(e) => ws
                .warnings
                .push(IngestWarning::UnreadableFile { path: path.display().to_string(), reason: e.to_string() }),
        }
    }
    Ok(ws)
}

fn sorted_entries(dir: &Path) -> Vec<(PathBuf, String)> {
    let Ok(rd) = fs::read_dir(dir) else { return Vec::new() };
    let mut v: Vec<(PathBuf, String)> = rd
        .filter_map(Result::ok)
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| (e.path(), e.file_name().to_string_lossy().into_owned()))
        .collect();
    v.sort_by(|a, b| a.1.cmp(&b.1));
    v
}

fn read_address_dir(dir: &Path, warnings: &mut Vec<IngestWarning>) -> BTreeMap<u64, String> {
    let mut out = BTreeMap::new();
    for (path, name) in sorted_entries(dir) {
        let Some(addr) = name.strip_suffix(".txt").and_then(parse_address) else {
            warnings.push(IngestWarning::BadFileName { path: path.display().to_string() });
            continue;
        };
        match fs::read_to_string(&path) {
            Ok(text) => {
                out.insert(addr, text);
            }
            Err(e) => {
                warnings.push(IngestWarning::UnreadableFile { path: path.display().to_string(), reason: e.to_string() })
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolFailure {
    #[error("symbol not present")]
    NotFound,
    #[error("dangling reference: {0}")]
    Dangling(String),
}

impl Workspace {
    pub fn new(framework: &str) -> Self {
        Workspace { framework: framework.to_string(), ..Workspace::default() }
    }

    pub fn sym_addr(&self, selector: &str) -> Result<u64, ToolFailure> {
        self.symtab.lookup(selector).first().copied().ok_or(ToolFailure::NotFound)
    }

    pub fn disas(&self, address: u64, window_lines: usize) -> Result<String, ToolFailure> {
        let text = self.disas_index.get(&address).ok_or_else(|| ToolFailure::Dangling(format_address(address)))?;
        Ok(text.lines().take(window_lines).collect::<Vec<_>>().join("\n"))
    }

    pub fn dec(&self, address: u64) -> Result<String, ToolFailure> {
        self.dec_index.get(&address).cloned().ok_or_else(|| ToolFailure::Dangling(format_address(address)))
    }

    fn header_key(&self, name: &str) -> Option<&str> {
        if let Some((k, _)) = self.headers.get_key_value(name) {
            return Some(k);
        }
        self.headers.get_key_value(&format!("{name}.h")).map(|(k, _)| k.as_str())
    }

    pub fn hdr_read(&self, name: &str) -> Result<String, ToolFailure> {
        self.header_key(name).map(|k| self.headers[k].clone()).ok_or_else(|| ToolFailure::Dangling(name.to_string()))
    }

    pub fn hdr_scan(&self) -> Vec<String> {
        self.headers.keys().cloned().collect()
    }

    /// Parses every header, tagging the ASTs with this framework.
    pub fn parse_headers(&self, opts: &ParseOptions) -> Vec<HeaderAst> {
        self.headers
            .iter()
            .map(|(name, text)| {
                let mut ast = parse_header_with(text, name, opts);
                ast.framework = self.framework.clone();
                ast
            })
            .collect()
    }
}

pub fn validate_call(call: &ToolCall, defs: &[ToolDef], ws: &Workspace) -> Verdict {
    let Some(def) = ToolName::parse(&call.tool_name).and_then(|n| defs.iter().find(|d| d.name == n)) else {
        return Verdict::bad(HallucinationReason::UnknownTool, call.tool_name.clone());
    };
    for p in &def.params {
        if p.required && !call.args.contains_key(&p.name) {
            return Verdict::bad(HallucinationReason::MissingArg, p.name.clone());
        }
    }
    for (name, value) in &call.args {
        let Some(p) = def.params.iter().find(|p| &p.name == name) else {
            return Verdict::bad(HallucinationReason::UnknownArg, name.clone());
        };
        match p.kind {
            ParamKind::Address => {
                let known = match def.name {
                    ToolName::Disas => parse_address(value).is_some_and(|a| ws.disas_index.contains_key(&a)),
                    ToolName::Dec => parse_address(value).is_some_and(|a| ws.dec_index.contains_key(&a)),
                    _ => parse_address(value).is_some(),
                };
                if !known {
                    return Verdict::bad(HallucinationReason::DanglingReference, value.clone());
                }
            }
            ParamKind::HeaderName => {
                if ws.header_key(value).is_none() {
                    return Verdict::bad(HallucinationReason::DanglingReference, value.clone());
                }
            }
            ParamKind::LineCount => {
                if !value.trim().parse::<usize>().is_ok_and(|n| n > 0) {
                    return Verdict::bad(HallucinationReason::UnknownArg, format!("{name}={value}"));
                }
            }
            ParamKind::Selector | ParamKind::Signature => {}
        }
    }
    Verdict::Valid
}

/// Validates and executes tool calls against a shared workspace.
#[derive(Debug, Clone)]
pub struct Toolbox {
    pub workspace: Arc<Workspace>,
    pub defs: Vec<ToolDef>,
}

impl Toolbox {
    pub fn new(workspace: Arc<Workspace>, defs: Vec<ToolDef>) -> Self {
        Toolbox { workspace, defs }
    }

    pub fn standard(workspace: Arc<Workspace>) -> Self {
        Toolbox::new(workspace, standard_profile())
    }

    /// `history` holds the calls issued earlier in the same trace, used to
    /// flag exact repeats.
    pub fn execute(&self, call: &ToolCall, history: &[ToolCall]) -> ToolResult {
        let verdict = validate_call(call, &self.defs, &self.workspace);
        let redundant = history.iter().any(|c| c.same_invocation(call));
        if let Verdict::Hallucinated { reason, detail } = &verdict {
            return ToolResult {
                status: ToolStatus::InvalidCall,
                payload: format!(
                    "invalid call ({}): {detail}",
                    serde_json::to_value(reason).unwrap().as_str().unwrap()
                ),
                verdict,
                redundant,
            };
        }
        let ws = &self.workspace;
        let arg = |k: &str| call.args.get(k).map(String::as_str).unwrap_or("");
        let outcome: Result<String, ToolFailure> = match ToolName::parse(&call.tool_name).expect("validated") {
            ToolName::SymAddr => match ws.sym_addr(arg("selector")) {
                Ok(a) => Ok(format_address(a)),
                Err(e) => Ok(e.to_string()),
            },
            ToolName::Disas => {
                let window =
                    call.args.get("window_lines").and_then(|w| w.trim().parse().ok()).unwrap_or(DEFAULT_DISAS_WINDOW);
                ws.disas(parse_address(arg("address")).unwrap_or_default(), window)
            }
            ToolName::Dec => ws.dec(parse_address(arg("address")).unwrap_or_default()),
            ToolName::HdrRead => ws.hdr_read(arg("header")),
            ToolName::HdrScan => Ok(ws.hdr_scan().join("\n")),
            ToolName::Yield => {
                return ToolResult {
                    status: ToolStatus::ProviderError,
                    payload: "yield has no provider; it ends the dialogue".into(),
                    verdict,
                    redundant,
                }
            }
        };
        match outcome {
            Ok(payload) => ToolResult { status: ToolStatus::Ok, payload, verdict, redundant },
            Err(e) => ToolResult { status: ToolStatus::ProviderError, payload: e.to_string(), verdict, redundant },
        }
    }
}
