//! Workspace-level driver: target discovery, concurrent inference and
//! header reconstruction.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::agent::{refine, AgentConfig, AgentError, InferenceTrace, ModelBackend, PromptContext};
use crate::header::{bind_symbol, find_inference_targets, AmbiguityConfig, HeaderAst, InferenceTarget, MethodDecl};
use crate::toolbox::{standard_profile, yield_only_profile, Toolbox, Workspace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRef {
    pub header: String,
    pub target: InferenceTarget,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discovery {
    pub targets: Vec<TargetRef>,
    /// Symbols bound to more than one address; these targets are skipped.
    pub collisions: Vec<String>,
    pub parse_errors: usize,
}

/// Parses every workspace header and binds the ambiguous methods to symbols.
pub fn discover(ws: &Workspace, asts: &[HeaderAst], ambiguity: &AmbiguityConfig) -> Discovery {
    let mut d = Discovery::default();
    for ast in asts {
        d.parse_errors += ast.errors.len();
        for t in find_inference_targets(ast, ambiguity) {
            match bind_symbol(t, &ws.symtab) {
                Ok(t) => d.targets.push(TargetRef { header: ast.source_header.clone(), target: t }),
                Err(e) => d.collisions.push(e.to_string()),
            }
        }
    }
    d
}

pub fn toolbox_for(ws: Arc<Workspace>, cfg: &AgentConfig) -> Toolbox {
    let defs = if cfg.tools_enabled { standard_profile() } else { yield_only_profile() };
    Toolbox::new(ws, defs)
}

/// Runs `refine` for every target on up to `jobs` threads. Each target gets
/// a fresh backend from `make_backend`; results come back in target order.
pub fn infer_all<F>(
    targets: &[TargetRef],
    asts: &[HeaderAst],
    toolbox: &Toolbox,
    cfg: &AgentConfig,
    jobs: usize,
    make_backend: F,
) -> Vec<Result<InferenceTrace, AgentError>>
where
    F: Fn(&InferenceTarget) -> Box<dyn ModelBackend> + Sync,
{
    let by_header: HashMap<&str, &HeaderAst> = asts.iter().map(|a| (a.source_header.as_str(), a)).collect();
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<InferenceTrace, AgentError>>>> =
        targets.iter().map(|_| Mutex::new(None)).collect();
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(tr) = targets.get(i) else { break };
        let ast = by_header.get(tr.header.as_str()).copied();
        let ctx = PromptContext::for_target(&tr.target, ast, toolbox);
        let mut backend = make_backend(&tr.target);
        let res = refine(&tr.target, &ctx, backend.as_mut(), toolbox, cfg);
        *slots[i].lock().unwrap() = Some(res);
    };
    let jobs = jobs.clamp(1, targets.len().max(1));
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot filled")).collect()
}

/// The stripped declaration with its ambiguous positions taken from the
/// trace's accepted candidate. `None` if the trace did not converge or the
/// candidate's arity differs.
pub fn accepted_decl(trace: &InferenceTrace) -> Option<MethodDecl> {
    if !trace.converged {
        return None;
    }
    let cand = trace.final_decl()?;
    let mut out = trace.target.decl.clone();
    if cand.position_count() != out.position_count() {
        return None;
    }
    for &p in &trace.target.ambiguous_positions {
        *out.type_at_mut(p)? = cand.type_at(p)?.clone();
    }
    Some(out)
}

pub fn provenance_comment(trace: &InferenceTrace) -> String {
    let iters = trace.iterations.len();
    let cost = trace.final_candidate.as_ref().map(|c| c.soft_cost);
    match (trace.converged, cost) {
        (true, Some(c)) => format!("/* sigrec: converged iterations={iters} soft_cost={c} */"),
        (false, Some(c)) => format!("/* sigrec: unresolved iterations={iters} best_soft_cost={c} */"),
        (_, None) => format!("/* sigrec: unresolved iterations={iters} no_candidate */"),
    }
}

fn line_starts(text: &str) -> Vec<usize> {
    std::iter::once(0).chain(text.match_indices('\n').map(|(i, _)| i + 1)).collect()
}

/// Byte offset of a 1-based (line, column) position.
fn offset_of(text: &str, starts: &[usize], line: usize, column: usize) -> Option<usize> {
    let start = *starts.get(line.checked_sub(1)?)?;
    let rest = &text[start..];
    rest.char_indices().nth(column.checked_sub(1)?).map(|(i, _)| start + i)
}

/// End (exclusive) of the declaration starting at `from`: just past the
/// first `;` outside braces and parentheses.
fn decl_end(text: &str, from: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, ch) in text[from..].char_indices() {
        match ch {
            '(' | '{' => depth += 1,
            ')' | '}' => depth -= 1,
            ';' if depth <= 0 => return Some(from + i + 1),
            _ => {}
        }
    }
    None
}

/// Rewrites a header: every traced method is re-rendered with its accepted
/// types (or left as is when unresolved) and followed by a provenance
/// comment; a summary trailer closes the file.
pub fn reconstruct_header(text: &str, traces: &[&InferenceTrace]) -> String {
    let starts = line_starts(text);
    let mut edits: Vec<(usize, usize, String)> = Vec::new();
    for t in traces {
        let span = t.target.decl.source_span;
        let Some(begin) = offset_of(text, &starts, span.line, span.column) else { continue };
        let Some(end) = decl_end(text, begin) else { continue };
        let body = match accepted_decl(t) {
            Some(d) => d.render(),
            None => text[begin..end].to_string(),
        };
        edits.push((begin, end, format!("{body} {}", provenance_comment(t))));
    }
    edits.sort_by_key(|e| e.0);
    edits.dedup_by_key(|e| e.0);
    let mut out = String::with_capacity(text.len() + 64 * edits.len());
    let mut at = 0;
    for (b, e, s) in edits {
        if b < at {
            continue;
        }
        out.push_str(&text[at..b]);
        out.push_str(&s);
        at = e;
    }
    out.push_str(&text[at..]);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    let converged = traces.iter().filter(|t| t.converged).count();
    out.push_str(&format!(
        "// sigrec: {} targets, {} converged, {} unresolved\n",
        traces.len(),
        converged,
        traces.len() - converged
    ));
    out
}
