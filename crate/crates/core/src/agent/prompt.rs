use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::header::{HeaderAst, InferenceTarget};
use crate::linter::DiagnosticSet;
use crate::toolbox::{format_address, ToolDef, Toolbox};

const NEIGHBOR_RADIUS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireToolCall {
    pub name: String,
    pub arguments: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<WireToolCall>,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message { role, content: content.into(), name: None, tool_calls: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NaturalEvidence {
    pub declaration: String,
    pub neighbors: Vec<String>,
    pub header: String,
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicEvidence {
    pub symbol: String,
    pub address: Option<u64>,
    pub tools: Vec<ToolDef>,
    pub framework: String,
    pub os_build: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub natural: NaturalEvidence,
    pub symbolic: SymbolicEvidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<DiagnosticSet>,
}

impl PromptContext {
    /// Builds the iteration-1 context. `ast` is the header the target came
    /// from, used for neighboring declarations.
    pub fn for_target(target: &InferenceTarget, ast: Option<&HeaderAst>, toolbox: &Toolbox) -> Self {
        let decl = &target.decl;
        let mut neighbors = Vec::new();
        if let Some(iface) = ast.and_then(|a| a.interfaces.iter().find(|i| i.methods.iter().any(|m| m == decl))) {
            let at = iface.methods.iter().position(|m| m == decl).unwrap_or(0);
            let lo = at.saturating_sub(NEIGHBOR_RADIUS);
            let hi = (at + NEIGHBOR_RADIUS + 1).min(iface.methods.len());
            neighbors.extend(iface.methods[lo..hi].iter().filter(|m| *m != decl).map(|m| m.render()));
        }
        let address = target.bound_symbol.as_ref().and_then(|s| s.address);
        PromptContext {
            natural: NaturalEvidence {
                declaration: decl.render(),
                neighbors,
                header: decl.source_header.clone(),
                class_name: decl.owning_class.clone(),
            },
            symbolic: SymbolicEvidence {
                symbol: target.symbol_text(),
                address,
                tools: toolbox.defs.clone(),
                framework: if target.framework.is_empty() {
                    toolbox.workspace.framework.clone()
                } else {
                    target.framework.clone()
                },
                os_build: toolbox.workspace.os_build.clone(),
            },
            feedback: None,
        }
    }
}

fn tool_line(def: &ToolDef) -> String {
    let params: Vec<String> = def
        .params
        .iter()
        .map(|p| format!("{}: {}{}", p.name, p.kind.json_type(), if p.required { "" } else { "?" }))
        .collect();
    format!("- {}({}): {}", def.name, params.join(", "), def.description)
}

/// Serializes a context into chat messages. Pure and deterministic.
pub fn assemble_prompt(ctx: &PromptContext) -> Vec<Message> {
    let mut system = String::from(
        "You recover Objective-C method signatures from stripped framework headers.\n\
         Replace every underspecified type (id, void *, inline struct literals) with the most \
         specific type the evidence supports. Keep the selector, the parameter count and the \
         parameter names unchanged. Finish by calling yield with one complete method declaration.\n\nTools:\n",
    );
    for def in &ctx.symbolic.tools {
        system.push_str(&tool_line(def));
        system.push('\n');
    }

    let n = &ctx.natural;
    let s = &ctx.symbolic;
    let mut user = String::new();
    let _ = writeln!(user, "Declaration:\n{}\n", n.declaration);
    let _ = writeln!(user, "Class: {}", n.class_name);
    let _ = writeln!(user, "Header: {}", n.header);
    if !n.neighbors.is_empty() {
        user.push_str("Neighboring declarations:\n");
        for d in &n.neighbors {
            let _ = writeln!(user, "  {d}");
        }
    }
    let _ = writeln!(user, "\nSymbol: {}", s.symbol);
    match s.address {
        Some(a) => {
            let _ = writeln!(user, "Address: {}", format_address(a));
        }
        None => user.push_str("Address: unknown\n"),
    }
    let _ = writeln!(user, "Framework: {}", s.framework);
    if !s.os_build.is_empty() {
        let _ = writeln!(user, "OS build: {}", s.os_build);
    }

    let mut messages = vec![Message::new(Role::System, system), Message::new(Role::User, user)];
    if let Some(fb) = &ctx.feedback {
        let mut text =
            format!("The previous candidate was rejected by the linter.\nCandidate: {}\nDiagnostics:\n", fb.candidate);
        for d in &fb.diags {
            let _ = writeln!(text, "- {}", d.feedback_line());
        }
        messages.push(Message::new(Role::User, text));
    }
    messages
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::header::{find_inference_targets, parse_header_with, AmbiguityConfig, ParseOptions};
    use crate::linter::{lint, LintConfig};
    use crate::toolbox::Workspace;
    use std::sync::Arc;

    fn setup() -> (InferenceTarget, HeaderAst, Toolbox) {
        let ast = parse_header_with(
            "@interface Foo : NSObject\n- (void)a;\n- (id)b:(id)x;\n- (BOOL)c;\n@end\n",
            "Foo.h",
            &ParseOptions::default(),
        );
        let t = find_inference_targets(&ast, &AmbiguityConfig::default()).remove(0);
        let mut ws = Workspace::new("Demo");
        ws.os_build = "25A1".into();
        (t, ast, Toolbox::standard(Arc::new(ws)))
    }

    #[test]
    fn first_iteration_has_no_feedback() {
        let (t, ast, tb) = setup();
        let ctx = PromptContext::for_target(&t, Some(&ast), &tb);
        let msgs = assemble_prompt(&ctx);
        assert_eq!(msgs.len(), 2);
        let user = &msgs[1].content;
        assert!(user.contains("- (id)b:(id)x;"));
        assert!(user.contains("- (void)a;") && user.contains("- (BOOL)c;"));
        assert!(user.contains("Symbol: -[Foo b:]"));
        assert!(user.contains("Framework: Demo"));
        assert!(msgs[0].content.contains("- disas(address: string, window_lines: integer?)"));
        assert_eq!(msgs, assemble_prompt(&ctx));
    }

    #[test]
    fn feedback_block_lists_diagnostics() {
        let (t, ast, tb) = setup();
        let mut ctx = PromptContext::for_target(&t, Some(&ast), &tb);
        let cfg = LintConfig::default();
        ctx.feedback = Some(lint("- (NSArray *)b:(NSNumber *)x;", &t.decl, &cfg));
        let msgs = assemble_prompt(&ctx);
        assert_eq!(msgs.len(), 3);
        assert!(msgs[2].content.contains("suggestion: NSArray<NSString *> *"), "{}", msgs[2].content);
    }
}
