//! ReAct dialogue and constraint-guided refinement loop.

mod backend;
mod prompt;

pub use backend::{
    parse_response, parse_script, BackendError, ModelBackend, ModelRequest, ModelTurn, RemoteBackend, RemoteConfig,
    ScriptKind, ScriptTurn, ScriptedBackend, API_KEY_ENV,
};
pub use prompt::{assemble_prompt, Message, NaturalEvidence, PromptContext, Role, SymbolicEvidence, WireToolCall};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::header::{parse_method, InferenceTarget, MethodDecl};
use crate::linter::{DiagnosticSet, LintConfig};
use crate::selector::{score, select_scored, ScoredCandidate, SelectError, Selection, SeverityWeights};
use crate::toolbox::{ToolCall, ToolName, ToolResult, Toolbox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Stop at the first iteration with an admissible candidate.
    #[default]
    FirstAdmissible,
    /// Stop once an admissible candidate's soft cost has settled: it is zero
    /// or equal to the previous iteration's admissible cost.
    StableSoftCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_iters: usize,
    pub max_turns: usize,
    pub pool_size: usize,
    pub tools_enabled: bool,
    pub feedback_enabled: bool,
    pub stop_rule: StopRule,
    pub weights: SeverityWeights,
    pub lint: LintConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_iters: 10,
            max_turns: 16,
            pool_size: 5,
            tools_enabled: true,
            feedback_enabled: true,
            stop_rule: StopRule::FirstAdmissible,
            weights: SeverityWeights::default(),
            lint: LintConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no candidate signature within {max_turns} turns")]
    NoCandidate { max_turns: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Select(#[from] SelectError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call: ToolCall,
    pub result: ToolResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueOutcome {
    Yielded,
    /// Budget expired; the candidate was taken from a text turn.
    Harvested,
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub turns: Vec<ModelTurn>,
    pub calls: Vec<CallRecord>,
    pub outcome: DialogueOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
}

impl Dialogue {
    pub fn candidate(&self, max_turns: usize) -> Result<&str, AgentError> {
        self.candidate.as_deref().ok_or(AgentError::NoCandidate { max_turns })
    }
}

/// Last line (or whole text) of any text turn that parses as a method
/// declaration.
fn harvest(turns: &[ModelTurn], cfg: &LintConfig) -> Option<String> {
    let opts = cfg.parse_options();
    turns.iter().rev().find_map(|t| {
        let ModelTurn::Text(text) = t else { return None };
        std::iter::once(text.trim())
            .chain(text.lines().rev().map(str::trim))
            .find(|l| !l.is_empty() && parse_method(l, &opts).is_ok())
            .map(str::to_string)
    })
}

/// One dialogue. `history` holds every call issued earlier in the trace and
/// is extended with this dialogue's calls.
#[allow(clippy::too_many_arguments)]
pub fn run_react(
    symbol: &str,
    iteration: usize,
    prompt: &[Message],
    backend: &mut dyn ModelBackend,
    toolbox: &Toolbox,
    max_turns: usize,
    history: &mut Vec<ToolCall>,
    cfg: &LintConfig,
) -> Result<Dialogue, BackendError> {
    let mut messages = prompt.to_vec();
    let mut turns = Vec::new();
    let mut calls = Vec::new();
    for turn_index in 0..max_turns {
        let turn =
            backend.generate(&ModelRequest { messages: &messages, tools: &toolbox.defs, target: symbol, iteration })?;
        let turn = match turn {
            ModelTurn::ToolCall(c)
                if ToolName::parse(&c.tool_name) == Some(ToolName::Yield) && c.args.contains_key("signature") =>
            {
                ModelTurn::Yield(c.args["signature"].clone())
            }
            ModelTurn::ToolCall(mut c) => {
                c.turn_index = turn_index;
                ModelTurn::ToolCall(c)
            }
            other => other,
        };
        turns.push(turn.clone());
        match turn {
            ModelTurn::Yield(sig) => {
                return Ok(Dialogue { turns, calls, outcome: DialogueOutcome::Yielded, candidate: Some(sig) });
            }
            ModelTurn::Text(text) => messages.push(Message::new(Role::Assistant, text)),
            ModelTurn::ToolCall(call) => {
                let result = toolbox.execute(&call, history);
                let mut assistant = Message::new(Role::Assistant, "");
                assistant.tool_calls.push(WireToolCall {
                    name: call.tool_name.clone(),
                    arguments: serde_json::to_value(&call.args).unwrap_or_default(),
                });
                messages.push(assistant);
                let mut tool_msg = Message::new(Role::Tool, result.payload.clone());
                tool_msg.name = Some(call.tool_name.clone());
                messages.push(tool_msg);
                history.push(call.clone());
                calls.push(CallRecord { call, result });
            }
        }
    }
    let candidate = harvest(&turns, cfg);
    let outcome = if candidate.is_some() { DialogueOutcome::Harvested } else { DialogueOutcome::NoCandidate };
    Ok(Dialogue { turns, calls, outcome, candidate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub prompt: Vec<Message>,
    pub dialogues: Vec<Dialogue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
}

impl IterationRecord {
    /// Chosen candidate, or the representative inadmissible one.
    pub fn best(&self) -> Option<&ScoredCandidate> {
        self.selection.as_ref().and_then(|s| s.best()).map(|(_, c)| c)
    }

    pub fn calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.dialogues.iter().flat_map(|d| d.calls.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTrace {
    pub target: InferenceTarget,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged_at: Option<usize>,
    #[serde(rename = "final", default, skip_serializing_if = "Option::is_none")]
    pub final_candidate: Option<ScoredCandidate>,
}

impl InferenceTrace {
    pub fn calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.iterations.iter().flat_map(|i| i.calls())
    }

    pub fn tool_call_count(&self) -> usize {
        self.calls().count()
    }

    /// Diagnostics of every scored candidate across all iterations.
    pub fn all_diagnostics(&self) -> impl Iterator<Item = &DiagnosticSet> {
        self.iterations.iter().filter_map(|i| i.selection.as_ref()).flat_map(|s| s.scored().iter().map(|c| &c.diags))
    }

    /// The candidate types accepted in the final answer, if any.
    pub fn final_decl(&self) -> Option<&MethodDecl> {
        self.final_candidate.as_ref().and_then(|c| c.decl.as_ref())
    }
}

/// Sort key over candidates from any iteration: admissible first, then
/// fewer hard findings, then lower soft cost.
fn overall_rank(c: &ScoredCandidate) -> (bool, usize, f64) {
    (!c.admissible, c.diags.hard_count(), c.soft_cost)
}

fn better(a: &ScoredCandidate, b: &ScoredCandidate) -> bool {
    overall_rank(a).partial_cmp(&overall_rank(b)) == Some(std::cmp::Ordering::Less)
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_iters == 0 || self.max_turns == 0 || self.pool_size == 0 {
            return Err(AgentError::Config("max_iters, max_turns and pool_size must be at least 1".into()));
        }
        self.weights.validate()?;
        Ok(())
    }
}

/// Runs the refinement loop for one target. `base` is the iteration-1
/// context; its feedback field is ignored.
pub fn refine(
    target: &InferenceTarget,
    base: &PromptContext,
    backend: &mut dyn ModelBackend,
    toolbox: &Toolbox,
    cfg: &AgentConfig,
) -> Result<InferenceTrace, AgentError> {
    cfg.validate()?;
    let symbol = target.symbol_text();
    let mut ctx = base.clone();
    ctx.feedback = None;
    ctx.symbolic.tools = toolbox.defs.clone();

    let mut trace = InferenceTrace {
        target: target.clone(),
        iterations: Vec::new(),
        converged: false,
        converged_at: None,
        final_candidate: None,
    };
    let mut history: Vec<ToolCall> = Vec::new();
    let mut prev_admissible_cost: Option<f64> = None;

    for iteration in 1..=cfg.max_iters {
        let prompt = assemble_prompt(&ctx);
        let mut dialogues = Vec::new();
        for _ in 0..cfg.pool_size {
            match run_react(&symbol, iteration, &prompt, backend, toolbox, cfg.max_turns, &mut history, &cfg.lint) {
                Ok(d) => dialogues.push(d),
                Err(BackendError::ScriptExhausted { .. }) if !dialogues.is_empty() => break,
                Err(e) => return Err(e.into()),
            }
        }
        let scored: Vec<ScoredCandidate> = dialogues
            .iter()
            .filter_map(|d| d.candidate.as_deref())
            .map(|c| score(c, &target.decl, &cfg.weights, &cfg.lint))
            .collect();
        let selection = if scored.is_empty() { None } else { Some(select_scored(scored)?) };
        let record = IterationRecord { iteration, prompt, dialogues, selection };

        let best = record.best().cloned();
        trace.iterations.push(record);
        let Some(best) = best else { continue };

        if trace.final_candidate.as_ref().is_none_or(|f| better(&best, f)) || best.admissible {
            trace.final_candidate = Some(best.clone());
        }
        if best.admissible {
            let stop = match cfg.stop_rule {
                StopRule::FirstAdmissible => true,
                StopRule::StableSoftCost => best.soft_cost == 0.0 || prev_admissible_cost == Some(best.soft_cost),
            };
            if stop {
                trace.converged = true;
                trace.converged_at = Some(iteration);
                break;
            }
            prev_admissible_cost = Some(best.soft_cost);
        } else {
            prev_admissible_cost = None;
        }
        if cfg.feedback_enabled {
            ctx.feedback = Some(best.diags.clone());
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::header::{AmbiguityConfig, ParseOptions};
    use crate::toolbox::{Verdict, Workspace};
    use std::sync::Arc;

    fn target(decl: &str) -> InferenceTarget {
        let d = parse_method(decl, &ParseOptions::default()).unwrap();
        let mut d = d;
        d.owning_class = "Foo".into();
        InferenceTarget {
            ambiguous_positions: AmbiguityConfig::default().ambiguous_positions(&d),
            decl: d,
            bound_symbol: None,
            framework: "Demo".into(),
        }
    }

    fn toolbox() -> Toolbox {
        let mut ws = Workspace::new("Demo");
        ws.symtab.insert("-[Foo load:]", 0x180017F48);
        ws.disas_index.insert(0x180017F48, "ldr x0, [x1]\nret".into());
        Toolbox::standard(Arc::new(ws))
    }

    fn script(json: &str) -> ScriptedBackend {
        ScriptedBackend::from_json(json.as_bytes()).unwrap()
    }

    fn run(t: &InferenceTarget, b: &mut dyn ModelBackend, cfg: &AgentConfig) -> InferenceTrace {
        let tb = toolbox();
        let ctx = PromptContext::for_target(t, None, &tb);
        refine(t, &ctx, b, &tb, cfg).unwrap()
    }

    #[test]
    fn immediate_yield() {
        let t = target("- (void)reset;");
        let tb = toolbox();
        let mut b = script(r#"[{"kind":"yield","signature":"- (void)reset;"}]"#);
        let d = run_react("-[Foo reset]", 1, &[], &mut b, &tb, 16, &mut Vec::new(), &LintConfig::default()).unwrap();
        assert_eq!(d.turns.len(), 1);
        assert_eq!(d.candidate.as_deref(), Some("- (void)reset;"));
        let trace = run(&t, &mut script(r#"[{"kind":"yield","signature":"- (void)reset;"}]"#), &AgentConfig::default());
        assert!(trace.converged);
        assert_eq!(trace.converged_at, Some(1));
        assert_eq!(trace.iterations.len(), 1);
        assert_eq!(trace.iterations[0].dialogues.len(), 1);
    }

    #[test]
    fn tool_call_then_yield() {
        let tb = toolbox();
        let mut b = script(
            r#"[{"kind":"tool_call","tool":"disas","args":{"address":"0x180017F48"}},
                {"kind":"yield","signature":"- (void)load:(NSString *)x;"}]"#,
        );
        let d = run_react("-[Foo load:]", 1, &[], &mut b, &tb, 16, &mut Vec::new(), &LintConfig::default()).unwrap();
        assert_eq!(d.calls.len(), 1);
        assert_eq!(d.calls[0].result.verdict, Verdict::Valid);
        assert_eq!(d.calls[0].result.payload, "ldr x0, [x1]\nret");
        assert_eq!(d.outcome, DialogueOutcome::Yielded);
    }

    #[test]
    fn endless_tool_calls_hit_turn_budget() {
        let tb = toolbox();
        let mut b = script(r#"[{"kind":"tool_call","tool":"hdr_scan","repeat":true}]"#);
        let d = run_react("-[Foo x]", 1, &[], &mut b, &tb, 16, &mut Vec::new(), &LintConfig::default()).unwrap();
        assert_eq!(d.calls.len(), 16);
        assert_eq!(d.outcome, DialogueOutcome::NoCandidate);
        assert!(matches!(d.candidate(16), Err(AgentError::NoCandidate { max_turns: 16 })));
        assert!(d.calls[1].result.redundant);
    }

    #[test]
    fn harvest_takes_last_parseable_text() {
        let tb = toolbox();
        let mut b = script(
            r#"[{"kind":"text","content":"maybe\n- (void)a:(NSString *)x;"},
                {"kind":"text","content":"or - (void)a:(NSNumber *)x; hmm"},
                {"kind":"text","content":"thinking"}]"#,
        );
        let d = run_react("-[Foo a:]", 1, &[], &mut b, &tb, 3, &mut Vec::new(), &LintConfig::default()).unwrap();
        assert_eq!(d.outcome, DialogueOutcome::Harvested);
        assert_eq!(d.candidate.as_deref(), Some("- (void)a:(NSString *)x;"));
    }

    #[test]
    fn feedback_drives_second_iteration() {
        let t = target("- (void)run:(id)args;");
        let mut b = script(
            r#"[{"iteration":1,"kind":"yield","signature":"- (void)run:(NSArray *)args;"},
                {"iteration":2,"kind":"yield","signature":"- (void)run:(NSArray<NSString *> *)args;"}]"#,
        );
        let cfg = AgentConfig { stop_rule: StopRule::StableSoftCost, ..AgentConfig::default() };
        let trace = run(&t, &mut b, &cfg);
        assert_eq!(trace.converged_at, Some(2));
        assert_eq!(trace.iterations.len(), 2);
        assert!(trace.iterations[1].prompt[2].content.contains("suggestion: NSArray<NSString *> *args"));
        assert_eq!(trace.final_candidate.unwrap().soft_cost, 0.0);

        let mut b = script(
            r#"[{"iteration":1,"kind":"yield","signature":"- (void)run:(NSArray *)args;"},
                {"iteration":2,"kind":"yield","signature":"- (void)run:(NSArray<NSString *> *)args;"}]"#,
        );
        let cfg = AgentConfig { pool_size: 1, ..AgentConfig::default() };
        let trace = run(&t, &mut b, &cfg);
        // NSArray without generics is only a medium finding, so iteration 1 is admissible
        assert_eq!(trace.converged_at, Some(1));
    }

    #[test]
    fn never_admissible_runs_full_budget() {
        let t = target("- (void)run:(id)args;");
        let mut b = script(r#"[{"kind":"yield","signature":"- (void)walk:(NSString *)args;","repeat":true}]"#);
        let trace = run(&t, &mut b, &AgentConfig::default());
        assert!(!trace.converged);
        assert_eq!(trace.iterations.len(), 10);
        assert!(trace.iterations.iter().all(|i| i.dialogues.len() == 5));
        assert!(!trace.final_candidate.unwrap().admissible);
        for w in trace.iterations.windows(2) {
            let fb = w[1].prompt.last().unwrap();
            let prev = w[0].best().unwrap();
            assert!(fb.content.contains(&prev.diags.diags[0].feedback_line()));
        }
    }

    #[test]
    fn exhausted_script_with_empty_pool_is_an_error() {
        let t = target("- (void)run:(id)args;");
        let tb = toolbox();
        let ctx = PromptContext::for_target(&t, None, &tb);
        let mut b = script("[]");
        assert!(matches!(
            refine(&t, &ctx, &mut b, &tb, &AgentConfig::default()),
            Err(AgentError::Backend(BackendError::ScriptExhausted { .. }))
        ));
        assert!(refine(&t, &ctx, &mut b, &tb, &AgentConfig { max_iters: 0, ..AgentConfig::default() }).is_err());
    }
}
