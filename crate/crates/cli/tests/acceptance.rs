//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sigrec_core::agent::{
    refine, AgentConfig, BackendError, CallRecord, Dialogue, DialogueOutcome, InferenceTrace, IterationRecord, Message,
    ModelBackend, ModelRequest, ModelTurn, PromptContext, Role, ScriptedBackend, StopRule,
};
use sigrec_core::bench::{
    eval_count, match_ground_truth, sample_balanced, split, stratify, BinKey, FrameworkEntry, SizeBin,
};
use sigrec_core::header::{
    default_collection_classes, find_inference_targets, parse_header_with, parse_method, parse_type, AmbiguityConfig,
    MethodDecl, Param, ParseOptions, SourceSpan, TypeExpr, TypeKind,
};
use sigrec_core::linter::{apply_suggestion, lint, Constraint, Diagnostic, DiagnosticSet, LintConfig, Severity};
use sigrec_core::metrics::{
    build_report, em_accuracy, eval_record, pm_accuracy, EvalRecord, MetricsConfig, PositionScore,
};
use sigrec_core::pipeline::{discover, infer_all, toolbox_for};
use sigrec_core::selector::{score, select_scored, ScoredCandidate, Selection, SeverityWeights};
use sigrec_core::toolbox::{HallucinationReason, ToolCall, ToolResult, ToolStatus, Toolbox, Verdict, Workspace};

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("linter rule table", Duration::from_secs(1), rule_table),
        ("selection oracle", Duration::from_secs(5), selection_oracle),
        ("metric oracle", Duration::from_secs(5), metric_oracle),
        ("static baseline", Duration::from_secs(5), static_baseline),
        ("feedback ablation", Duration::from_secs(30), feedback_ablation),
        ("convergence and budget safety", Duration::from_secs(30), budget_safety),
        ("bench determinism", Duration::from_secs(5), bench_determinism),
        ("parser round trip", Duration::from_secs(5), parser_round_trip),
        ("end-to-end hermetic run", Duration::from_secs(60), end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let res = res.and_then(|s| if took > limit { Err(format!("took {took:?}, limit {limit:?}")) } else { Ok(s) });
        match res {
            Ok(s) => println!("PASS {} {name}: {s} [{} ms]", i + 1, took.as_millis()),
            Err(e) => {
                failed += 1;
                println!("FAIL {} {name}: {e} [{} ms]", i + 1, took.as_millis());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn opts() -> ParseOptions {
    ParseOptions::default()
}

fn decl(text: &str) -> MethodDecl {
    parse_method(text, &opts()).unwrap_or_else(|e| panic!("`{text}`: {e}"))
}

// 1 ------------------------------------------------------------------------

/// (constraint, severity, original, violating candidate, expected suggestion)
const TABLE: [(Constraint, Severity, &str, &str, &str); 7] = [
    (Constraint::SyntaxErrors, Severity::High, "- (void)doSomething;", "void) doSomething;", "(void) doSomething;"),
    (
        Constraint::NoStructs,
        Severity::High,
        "- (void)setCenter:(id)center;",
        "- (void)setCenter:(struct { double x0; double x1; })center;",
        "CGPoint center",
    ),
    (
        Constraint::SelectorMismatch,
        Severity::High,
        "- (void)doSomething:(id)a withArg2:(id)b;",
        "- (void)doSomething:(id)a argument2:(id)b;",
        "doSomething:withArg2:",
    ),
    (
        Constraint::StructRefs,
        Severity::Medium,
        "- (id)copyWithZone:(void *)zone;",
        "- (id)copyWithZone:(struct _NSZone *)zone;",
        "NSZoneRef zone",
    ),
    (
        Constraint::GenericCollections,
        Severity::Medium,
        "- (void)run:(id)args;",
        "- (void)run:(NSArray *)args;",
        "NSArray<NSString *> *args",
    ),
    (
        Constraint::NoIdGenerics,
        Severity::Medium,
        "- (void)setValues:(id)values;",
        "- (void)setValues:(NSArray<id> *)values;",
        "NSArray *values",
    ),
    (
        Constraint::ConventionalTypes,
        Severity::Low,
        "- (void)setEnabled:(id)isEnabled;",
        "- (void)setEnabled:(_Bool)isEnabled;",
        "BOOL isEnabled",
    ),
];

fn rule_table() -> Check {
    let cfg = LintConfig::default();
    let mut passed = 0;
    for (c, sev, original, candidate, suggestion) in TABLE {
        let orig = decl(original);
        let set = lint(candidate, &orig, &cfg);
        // a syntax error is always accompanied by its parse-failure marker
        let allowed: &[Constraint] =
            if c == Constraint::SyntaxErrors { &[Constraint::SyntaxErrors, Constraint::MethodNotParsed] } else { &[c] };
        let hit: Vec<&Diagnostic> = set.diags.iter().filter(|d| d.constraint == c).collect();
        ensure!(
            hit.len() == 1 && hit[0].severity == sev && set.diags.iter().all(|d| allowed.contains(&d.constraint)),
            "{c}: expected one {sev} finding, got {:?}",
            set.diags
        );
        ensure!(hit[0].suggestion.as_deref() == Some(suggestion), "{c}: suggestion {:?}", hit[0].suggestion);
        passed += 1;

        let fixed =
            apply_suggestion(candidate, hit[0], &cfg).ok_or_else(|| format!("{c}: suggestion not applicable"))?;
        let again = lint(fixed.as_str(), &orig, &cfg);
        ensure!(again.count(c) == 0, "{c}: `{fixed}` still reports {:?}", again.diags);
        passed += 1;
    }
    Ok(format!("{passed}/14 assertions"))
}

// 2 ------------------------------------------------------------------------

const ALL_CONSTRAINTS: [Constraint; 8] = [
    Constraint::SyntaxErrors,
    Constraint::NoStructs,
    Constraint::SelectorMismatch,
    Constraint::MethodNotParsed,
    Constraint::StructRefs,
    Constraint::GenericCollections,
    Constraint::NoIdGenerics,
    Constraint::ConventionalTypes,
];

fn selection_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1ec7);
    let mut chosen = 0;
    for trial in 0..1000 {
        let (medium, low) = if rng.gen_bool(0.5) {
            let low = rng.gen_range(0..4) as f64;
            (low + rng.gen_range(0..4) as f64, low)
        } else {
            let low = rng.gen_range(0.0..5.0);
            (low + rng.gen_range(0.0..5.0), low)
        };
        let weights = SeverityWeights::new(medium, low).map_err(|e| e.to_string())?;
        let size = rng.gen_range(1..=16);
        let high_rate = rng.gen_range(0.0..0.3);
        let mut pool = Vec::new();
        let mut counts = Vec::new();
        for i in 0..size {
            let n = rng.gen_range(0..=6);
            let mut diags = Vec::new();
            let (mut h, mut m, mut l) = (0, 0, 0);
            for _ in 0..n {
                let c = if rng.gen_bool(high_rate) {
                    ALL_CONSTRAINTS[rng.gen_range(0..4)]
                } else {
                    ALL_CONSTRAINTS[rng.gen_range(4..8)]
                };
                match c.severity() {
                    Severity::High => h += 1,
                    Severity::Medium => m += 1,
                    Severity::Low => l += 1,
                }
                diags.push(Diagnostic::new(c, "synthetic"));
            }
            let text = format!("candidate {i}");
            let set = DiagnosticSet { candidate: text.clone(), diags };
            pool.push(ScoredCandidate::from_diagnostics(text, None, set, &weights));
            counts.push((h, m, l));
        }

        // brute force: a candidate wins if it is admissible and no other
        // admissible candidate is cheaper, or equally cheap and earlier
        let cost = |(_, m, l): (usize, usize, usize)| m as f64 * medium + l as f64 * low;
        let admissible = |k: usize| counts[k].0 == 0;
        let want = (0..size).find(|&i| {
            admissible(i)
                && (0..size).all(|j| {
                    !admissible(j)
                        || cost(counts[i]) < cost(counts[j])
                        || (cost(counts[i]) == cost(counts[j]) && i <= j)
                })
        });

        let sel = select_scored(pool).map_err(|e| e.to_string())?;
        match (want, &sel) {
            (Some(w), Selection::Chosen { index, scored }) => {
                ensure!(*index == w, "trial {trial}: chose {index}, oracle {w}");
                ensure!(
                    scored[*index].soft_cost == cost(counts[w]),
                    "trial {trial}: cost {} vs {}",
                    scored[*index].soft_cost,
                    cost(counts[w])
                );
                chosen += 1;
            }
            (None, Selection::NoAdmissible { .. }) => {}
            _ => return Err(format!("trial {trial}: oracle {want:?}, selector {:?}", sel.chosen().map(|c| &c.text))),
        }
    }
    Ok(format!("1000/1000 pools agree ({chosen} with an admissible candidate)"))
}

// 3 ------------------------------------------------------------------------

const POOLS: [(&str, &[&str]); 5] = [
    ("scalar", &["NSInteger", "BOOL", "double", "unsigned long long", "float"]),
    (
        "collection",
        &[
            "NSArray<NSString *> *",
            "NSDictionary<NSString *, NSNumber *> *",
            "NSSet<NSURL *> *",
            "NSArray<NSNumber *> *",
        ],
    ),
    ("protocol", &["id<NSCopying>", "NSObject<NSCoding> *", "id<NSSecureCoding, NSCopying>"]),
    ("block", &["void (^)(NSError *)", "BOOL (^)(id, NSUInteger)", "void (^)(void)"]),
    ("plain", &["NSString *", "NSURL *", "NSData *"]),
];

const RESULT_TYPES: [&str; 3] = ["NSString *", "NSNumber *", "NSData *"];

fn synthetic_trace(labels: &[usize], converged: bool, calls: &[bool]) -> InferenceTrace {
    let orig = decl("- (id)value;");
    let t = find_inference_targets(
        &parse_header_with("@interface S : NSObject\n- (id)value;\n@end\n", "S.h", &opts()),
        &AmbiguityConfig::default(),
    )
    .remove(0);
    let cfg = LintConfig::default();
    let weights = SeverityWeights::default();
    let iterations: Vec<IterationRecord> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let text = format!("- ({})value;", RESULT_TYPES[l]);
            let sc = score(text.as_str(), &orig, &weights, &cfg);
            let records = if i == 0 {
                calls
                    .iter()
                    .map(|&ok| CallRecord {
                        call: ToolCall::new(if ok { "dec" } else { "objdump" }, &[]),
                        result: ToolResult {
                            status: if ok { ToolStatus::Ok } else { ToolStatus::InvalidCall },
                            payload: String::new(),
                            verdict: if ok {
                                Verdict::Valid
                            } else {
                                Verdict::Hallucinated {
                                    reason: HallucinationReason::UnknownTool,
                                    detail: "objdump".into(),
                                }
                            },
                            redundant: false,
                        },
                    })
                    .collect()
            } else {
                Vec::new()
            };
            IterationRecord {
                iteration: i + 1,
                prompt: Vec::new(),
                dialogues: vec![Dialogue {
                    turns: Vec::new(),
                    calls: records,
                    outcome: DialogueOutcome::Yielded,
                    candidate: Some(text),
                }],
                selection: Some(select_scored(vec![sc]).unwrap()),
            }
        })
        .collect();
    let final_candidate = iterations.last().and_then(|r| r.best().cloned());
    InferenceTrace {
        target: t,
        converged_at: converged.then_some(iterations.len()),
        iterations,
        converged,
        final_candidate,
    }
}

fn close(name: &str, got: Option<f64>, want: f64) -> Result<(), String> {
    match got {
        Some(g) if (g - want).abs() <= 1e-12 => Ok(()),
        _ => Err(format!("{name}: {got:?} vs oracle {want}")),
    }
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut records = Vec::new();
    let mut traces = Vec::new();
    // oracle tallies
    let (mut pm_sum, mut em_hits, mut methods) = (0.0, 0usize, 0usize);
    let mut sub: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let (mut used, mut stable, mut valid, mut bad) = (0usize, 0usize, 0usize, 0usize);

    for m in 0..50 {
        let n = rng.gen_range(1..=4);
        let mut positions = Vec::new();
        let (mut c, mut s) = (0usize, 0usize);
        for p in 0..n {
            let (cat, pool) = POOLS[rng.gen_range(0..POOLS.len())];
            let gt = pool[rng.gen_range(0..pool.len())];
            let excluded = p > 0 && rng.gen_bool(0.15);
            let correct = rng.gen_bool(0.6);
            let inferred = if correct {
                gt.replace(" *", "*")
            } else {
                let others: Vec<&&str> = pool.iter().filter(|t| **t != gt).collect();
                others[rng.gen_range(0..others.len())].to_string()
            };
            if !excluded {
                s += 1;
                c += correct as usize;
                let e = sub.entry(cat).or_default();
                e.0 += correct as usize;
                e.1 += 1;
            }
            positions.push(PositionScore {
                index: p,
                gt: (!excluded).then(|| gt.to_string()),
                inferred: Some(inferred),
            });
        }
        methods += 1;
        pm_sum += c as f64 / s as f64;
        em_hits += (c == s) as usize;
        records.push(EvalRecord { method_id: format!("Synth:-[S m{m}]"), positions, trace_ref: Some(m) });

        let len = rng.gen_range(1..=13);
        let labels: Vec<usize> = (0..len).map(|_| rng.gen_range(0..2)).collect();
        let converged = rng.gen_bool(0.5);
        let calls: Vec<bool> = (0..rng.gen_range(0..=4)).map(|_| rng.gen_bool(0.75)).collect();
        let k = len.min(10);
        stable += ((converged && len == 1) || (k >= 2 && labels[k - 1] == labels[k - 2])) as usize;
        used += !calls.is_empty() as usize;
        valid += calls.iter().filter(|b| **b).count();
        bad += calls.iter().filter(|b| !**b).count();
        traces.push(synthetic_trace(&labels, converged, &calls));
    }

    let r = build_report(&records, &traces, &MetricsConfig::default());
    let ratio = |(k, n): (usize, usize)| k as f64 / n as f64;
    close("PM", r.pm, pm_sum / methods as f64)?;
    close("EM", r.em, em_hits as f64 / methods as f64)?;
    close("BTC", r.btc, ratio(sub["scalar"]))?;
    close("CI", r.ci, ratio(sub["collection"]))?;
    close("DPI", r.dpi, ratio(sub["protocol"]))?;
    close("BTI", r.bti, ratio(sub["block"]))?;
    close("tool usage", r.tool_usage_rate, used as f64 / 50.0)?;
    close("stability", r.inference_stability, stable as f64 / 50.0)?;
    close("TCC", r.tcc, ratio((valid, valid + bad)))?;
    close("HR", r.hr, ratio((bad, valid + bad)))?;
    Ok(format!("10 metrics over {methods} methods and {} calls match the recount", valid + bad))
}

// 4 ------------------------------------------------------------------------

/// Class-dump header and typed truth where every method has at least one
/// `id` position. Returns the expected PM.
fn baseline_fixture() -> (String, String, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut stripped = String::from("@interface BLThing : NSObject\n");
    let mut gt = stripped.clone();
    let mut sum = 0.0;
    let n = 24;
    for m in 0..n {
        let arity = rng.gen_range(0..=3);
        let mut ambiguous = vec![false; arity + 1];
        // at least one ambiguous position
        let forced = rng.gen_range(0..=arity);
        for (i, a) in ambiguous.iter_mut().enumerate() {
            *a = i == forced || rng.gen_bool(0.4);
        }
        let pick = |a: bool, s: &mut String, g: &mut String| {
            if a {
                s.push_str("id");
                g.push_str("NSString *");
            } else {
                s.push_str("NSInteger");
                g.push_str("NSInteger");
            }
        };
        let (mut s, mut g) = (String::from("- ("), String::from("- ("));
        pick(ambiguous[0], &mut s, &mut g);
        s.push(')');
        g.push(')');
        if arity == 0 {
            s.push_str(&format!("m{m};"));
            g.push_str(&format!("m{m};"));
        }
        for p in 0..arity {
            let piece = if p == 0 { format!("m{m}") } else { format!("k{p}") };
            for t in [&mut s, &mut g] {
                t.push_str(&format!("{}{piece}:(", if p == 0 { "" } else { " " }));
            }
            pick(ambiguous[p + 1], &mut s, &mut g);
            for t in [&mut s, &mut g] {
                t.push_str(&format!(")a{p}"));
            }
        }
        if arity > 0 {
            s.push(';');
            g.push(';');
        }
        stripped.push_str(&s);
        stripped.push('\n');
        gt.push_str(&g);
        gt.push('\n');
        let concrete = ambiguous.iter().filter(|a| !**a).count();
        sum += concrete as f64 / ambiguous.len() as f64;
    }
    stripped.push_str("@end\n");
    gt.push_str("@end\n");
    (stripped, gt, sum / n as f64)
}

fn static_baseline() -> Check {
    let (stripped, gt, want_pm) = baseline_fixture();
    let parse = |t: &str| {
        let mut a = parse_header_with(t, "BLThing.h", &opts());
        a.framework = "Baseline".into();
        a
    };
    let (s, g) = (parse(&stripped), parse(&gt));
    ensure!(s.errors.is_empty() && g.errors.is_empty(), "fixture does not parse: {:?} {:?}", s.errors, g.errors);
    let (records, report) = match_ground_truth(&[s], &[g], &AmbiguityConfig::default());
    ensure!(records.len() == 24 && report.unmatched_gt.is_empty(), "matched {} of 24", records.len());
    ensure!(
        records.iter().all(|r| r.position_types.iter().any(|p| p.was_ambiguous)),
        "a method has no ambiguous position"
    );
    // no-op inferrer: every position keeps its stripped type
    let evals: Vec<EvalRecord> = records.iter().map(|r| eval_record(r, None, None)).collect();
    let em = em_accuracy(&evals, &opts()).map_err(|e| e.to_string())?;
    let pm = pm_accuracy(&evals, &opts()).map_err(|e| e.to_string())?;
    ensure!(em == 0.0, "EM {em}");
    ensure!((pm - want_pm).abs() <= 1e-12, "PM {pm} vs {want_pm}");
    Ok(format!("EM = 0.0, PM = {pm:.4} (expected {want_pm:.4})"))
}

// 5 ------------------------------------------------------------------------

const ABL_STRIPPED: &str = "@interface ABWidget : NSObject
- (id)title;
- (void)setTitle:(id)title;
- (id)identifier;
- (void)setURL:(id)url;
- (id)count;
- (void)setPayload:(id)payload;
- (id)error;
- (void)setDate:(id)date;
- (id)items;
- (void)setOrigin:(struct { double x0; double x1; })origin;
- (id)tags;
- (id)names;
@end
";

const ABL_TRUTH: &str = "@interface ABWidget : NSObject
- (NSString *)title;
- (void)setTitle:(NSString *)title;
- (NSUUID *)identifier;
- (void)setURL:(NSURL *)url;
- (NSNumber *)count;
- (void)setPayload:(NSData *)payload;
- (NSError *)error;
- (void)setDate:(NSDate *)date;
- (NSArray<NSString *> *)items;
- (void)setOrigin:(CGPoint)origin;
- (NSSet<NSString *> *)tags;
- (NSOrderedSet<NSString *> *)names;
@end
";

/// (selector, first guess, decompiler evidence)
const ABL_GUESSES: [(&str, &str, Option<&str>); 12] = [
    ("title", "- (NSString *)title;", None),
    ("setTitle:", "- (void)setTitle:(NSString *)title;", None),
    ("identifier", "- (NSUUID *)identifier;", None),
    ("setURL:", "- (void)setURL:(NSURL *)url;", None),
    ("count", "- (NSString *)count;", Some("position 0: NSNumber *")),
    ("setPayload:", "- (void)setPayload:(NSString *)payload;", Some("position 1: NSData *")),
    ("error", "- (NSString *)error;", Some("position 0: NSError *")),
    ("setDate:", "- (void)setDate:(NSString *)date;", Some("position 1: NSDate *")),
    ("items", "- (NSArray *)items;", None),
    ("setOrigin:", "- (void)setOrigin:(struct { double x0; double x1; })origin;", None),
    ("tags", "- (NSSet *)tags;", None),
    ("names", "- (NSOrderedSet *)names;", None),
];

const FEEDBACK_HEAD: &str = "The previous candidate was rejected by the linter.";

/// Test double for a model: starts from a fixed guess, reads decompiler
/// evidence when tools are offered, and applies exactly the linter
/// suggestions shown in a feedback message.
struct Corrector {
    originals: BTreeMap<String, MethodDecl>,
}

impl Corrector {
    fn guess(target: &str) -> (&'static str, Option<&'static str>) {
        let sel = target.trim_end_matches(']').rsplit(' ').next().unwrap_or("");
        ABL_GUESSES.iter().find(|g| g.0 == sel).map(|g| (g.1, g.2)).expect("known selector")
    }

    fn with_evidence(guess: &str, evidence: &str) -> String {
        let mut d = decl(guess);
        for line in evidence.lines() {
            let Some(rest) = line.trim().strip_prefix("// position ") else { continue };
            let Some((pos, ty)) = rest.split_once(": ") else { continue };
            if let (Ok(p), Ok(t)) = (pos.parse::<usize>(), parse_type(ty, &opts())) {
                if let Some(slot) = d.type_at_mut(p) {
                    *slot = t;
                }
            }
        }
        d.render()
    }

    fn correct(&self, target: &str, feedback: &str) -> String {
        let cfg = LintConfig::default();
        let orig = &self.originals[target];
        let mut cand = feedback.lines().find_map(|l| l.strip_prefix("Candidate: ")).unwrap_or_default().to_string();
        let shown: BTreeSet<&str> = feedback.lines().filter_map(|l| l.strip_prefix("- ")).collect();
        let mut applied = BTreeSet::new();
        loop {
            let set = lint(cand.as_str(), orig, &cfg);
            let next = set
                .diags
                .iter()
                .find(|d| shown.contains(d.feedback_line().as_str()) && !applied.contains(&d.feedback_line()));
            let Some(d) = next else { break };
            applied.insert(d.feedback_line());
            if let Some(fixed) = apply_suggestion(&cand, d, &cfg) {
                cand = fixed;
            }
        }
        cand
    }
}

impl ModelBackend for Corrector {
    fn generate(&mut self, req: &ModelRequest<'_>) -> Result<ModelTurn, BackendError> {
        if let Some(fb) = req.messages.iter().find(|m| m.role == Role::User && m.content.starts_with(FEEDBACK_HEAD)) {
            return Ok(ModelTurn::Yield(self.correct(req.target, &fb.content)));
        }
        let (guess, _) = Corrector::guess(req.target);
        let tools_offered = req.tools.iter().any(|t| t.name.as_str() == "dec");
        let evidence: Vec<&Message> = req.messages.iter().filter(|m| m.role == Role::Tool).collect();
        if tools_offered && evidence.is_empty() {
            let address = req
                .messages
                .iter()
                .flat_map(|m| m.content.lines())
                .find_map(|l| l.strip_prefix("Address: "))
                .unwrap_or("0x0")
                .to_string();
            return Ok(ModelTurn::ToolCall(ToolCall::new("dec", &[("address", &address)])));
        }
        let text = evidence.iter().fold(guess.to_string(), |g, m| Corrector::with_evidence(&g, &m.content));
        Ok(ModelTurn::Yield(text))
    }
}

fn ablation_workspace() -> Workspace {
    let mut ws = Workspace::new("AblationKit");
    ws.headers.insert("ABWidget.h".into(), ABL_STRIPPED.into());
    for (i, (sel, _, evidence)) in ABL_GUESSES.iter().enumerate() {
        let addr = 0x1000 + 0x40 * i as u64;
        ws.symtab.insert(format!("-[ABWidget {sel}]"), addr);
        let mut body = format!("void sub_{addr:x}(id self, SEL _cmd) {{\n  objc_msgSend(self, \"{sel}\");\n}}\n");
        if let Some(e) = evidence {
            body.push_str(&format!("// {e}\n"));
        }
        ws.dec_index.insert(addr, body);
    }
    ws
}

fn ablation_em(tools: bool, feedback: bool) -> Result<f64, String> {
    let ws = Arc::new(ablation_workspace());
    let asts = ws.parse_headers(&opts());
    let amb = AmbiguityConfig::default();
    let found = discover(&ws, &asts, &amb);
    let cfg = AgentConfig {
        tools_enabled: tools,
        feedback_enabled: feedback,
        stop_rule: StopRule::StableSoftCost,
        ..AgentConfig::default()
    };
    let tb = toolbox_for(ws.clone(), &cfg);
    let originals: BTreeMap<String, MethodDecl> =
        found.targets.iter().map(|t| (t.target.symbol_text(), t.target.decl.clone())).collect();
    let traces: Vec<InferenceTrace> =
        infer_all(&found.targets, &asts, &tb, &cfg, 4, |_| Box::new(Corrector { originals: originals.clone() }))
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
    let mut truth = parse_header_with(ABL_TRUTH, "ABWidget.h", &opts());
    truth.framework = "AblationKit".into();
    let (records, _) = match_ground_truth(&asts, &[truth], &amb);
    ensure!(records.len() == 12, "matched {} of 12", records.len());
    let by_symbol: BTreeMap<String, &InferenceTrace> = traces.iter().map(|t| (t.target.symbol_text(), t)).collect();
    let evals: Vec<EvalRecord> =
        records.iter().map(|r| eval_record(r, by_symbol.get(&r.stripped_decl.symbol_text()).copied(), None)).collect();
    em_accuracy(&evals, &opts()).map_err(|e| e.to_string())
}

fn feedback_ablation() -> Check {
    let one_shot = ablation_em(false, false)?;
    let tool_context = ablation_em(true, false)?;
    let feedback = ablation_em(true, true)?;
    ensure!(
        one_shot < tool_context && tool_context < feedback,
        "EM one-shot {one_shot:.3}, tool-context {tool_context:.3}, feedback {feedback:.3}"
    );
    Ok(format!("EM {:.1} < {:.1} < {:.1}", one_shot * 100.0, tool_context * 100.0, feedback * 100.0))
}

// 6 ------------------------------------------------------------------------

fn adversarial(script: &str) -> Result<(InferenceTrace, AgentConfig), String> {
    let ast = parse_header_with("@interface ADV : NSObject\n- (id)value;\n@end\n", "ADV.h", &opts());
    let target = find_inference_targets(&ast, &AmbiguityConfig::default()).remove(0);
    let mut ws = Workspace::new("Adversarial");
    ws.headers.insert("ADV.h".into(), "@interface ADV : NSObject\n- (id)value;\n@end\n".into());
    ws.symtab.insert("-[ADV value]", 0x4000);
    let tb = Toolbox::standard(Arc::new(ws));
    let cfg = AgentConfig::default();
    let ctx = PromptContext::for_target(&target, Some(&ast), &tb);
    let mut backend = ScriptedBackend::from_json(script.as_bytes()).map_err(|e| e.to_string())?;
    let trace = refine(&target, &ctx, &mut backend, &tb, &cfg).map_err(|e| e.to_string())?;
    Ok((trace, cfg))
}

fn budget_safety() -> Check {
    let mut turns_seen = 0;
    // tool calls forever, then chatter that never contains a declaration
    for script in [
        r#"[{"kind":"tool_call","tool":"hdr_scan","repeat":true}]"#,
        r#"[{"kind":"tool_call","tool":"disas","args":{"address":"0x4000"},"repeat":true}]"#,
        r#"[{"kind":"text","content":"still thinking","repeat":true}]"#,
    ] {
        let (t, cfg) = adversarial(script)?;
        ensure!(!t.converged && t.final_candidate.is_none(), "endless dialogue converged");
        ensure!(t.iterations.len() == cfg.max_iters, "{} iterations", t.iterations.len());
        for it in &t.iterations {
            ensure!(
                it.dialogues.len() == cfg.pool_size && it.selection.is_none(),
                "incomplete iteration {}",
                it.iteration
            );
            for d in &it.dialogues {
                ensure!(d.turns.len() == cfg.max_turns, "dialogue ran {} turns", d.turns.len());
                ensure!(d.outcome == DialogueOutcome::NoCandidate, "outcome {:?}", d.outcome);
                turns_seen += d.turns.len();
            }
        }
    }
    // candidates that can never be admissible
    for sig in ["- (struct { int a; })value;", "value without a marker", "- (id)otherValue;"] {
        let script = serde_json::json!([{ "kind": "yield", "signature": sig, "repeat": true }]).to_string();
        let (t, cfg) = adversarial(&script)?;
        ensure!(!t.converged && t.converged_at.is_none(), "`{sig}` converged");
        ensure!(t.iterations.len() == cfg.max_iters, "`{sig}`: {} iterations", t.iterations.len());
        ensure!(
            t.iterations.iter().all(|i| matches!(i.selection, Some(Selection::NoAdmissible { .. }))),
            "`{sig}`: an iteration is missing its selection"
        );
        let f = t.final_candidate.as_ref().ok_or("no final candidate")?;
        ensure!(!f.admissible && f.text == sig, "`{sig}`: final {:?}", f.text);
        // a fixed point that is never accepted still counts as stable
        ensure!(sigrec_core::metrics::is_stable(&t, 10), "`{sig}`: not stable");
    }
    Ok(format!("6 adversarial scripts stop at max_turns/K ({turns_seen} turns bounded)"))
}

// 7 ------------------------------------------------------------------------

fn bench_run(frameworks: &[FrameworkEntry]) -> Result<String, String> {
    let bins = stratify(frameworks);
    let sample = sample_balanced(&bins, 5, 2024, false);
    let sp = split(&sample.selected, 0.7, 7).map_err(|e| e.to_string())?;
    let bins: Vec<(&BinKey, &Vec<FrameworkEntry>)> = bins.iter().collect();
    serde_json::to_string(&(bins, &sample, &sp)).map_err(|e| e.to_string())
}

fn bench_determinism() -> Check {
    for (count, bin) in [
        (10, SizeBin::Small),
        (11, SizeBin::Medium),
        (100, SizeBin::Medium),
        (101, SizeBin::Large),
        (1000, SizeBin::Large),
        (1001, SizeBin::Oversize),
    ] {
        ensure!(SizeBin::of(count) == bin, "{count} methods binned as {}", SizeBin::of(count));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let categories = ["System", "Media", "Network", "Graphics", "Developer"];
    let edges = [1, 10, 11, 100, 101, 1000, 1001, 5000];
    let mut frameworks: Vec<FrameworkEntry> = (0..400)
        .map(|i| FrameworkEntry {
            name: format!("Framework{i:03}"),
            category: categories[rng.gen_range(0..categories.len())].to_string(),
            method_count: if rng.gen_bool(0.3) { edges[rng.gen_range(0..edges.len())] } else { rng.gen_range(1..2000) },
            gt_header_paths: Vec::new(),
            stripped_header_paths: Vec::new(),
        })
        .collect();
    frameworks.shuffle(&mut rng);

    let first = bench_run(&frameworks)?;
    for run in 2..=5 {
        ensure!(bench_run(&frameworks)? == first, "run {run} differs");
    }

    let bins = stratify(&frameworks);
    for (key, members) in &bins {
        ensure!(members.iter().all(|m| SizeBin::of(m.method_count) == key.size_bin), "misbinned member in {key:?}");
    }
    let sample = sample_balanced(&bins, 5, 2024, false);
    let expected: usize =
        bins.iter().filter(|(k, _)| k.size_bin != SizeBin::Oversize).map(|(_, m)| m.len().min(5)).sum();
    ensure!(sample.selected.len() == expected, "sampled {} of {expected}", sample.selected.len());
    let sp = split(&sample.selected, 0.7, 7).map_err(|e| e.to_string())?;
    for row in &sp.ratios {
        ensure!(row.eval == eval_count(row.train + row.eval, 0.7), "{}: {} eval", row.category, row.eval);
    }
    Ok(format!("5 identical runs ({} bytes), edges 10/11/100/101/1000/1001 verified", first.len()))
}

// 8 ------------------------------------------------------------------------

const CLASSES: [&str; 6] = ["NSString", "NSNumber", "NSData", "NSError", "NSURL", "NSObject"];
const PROTOCOLS: [&str; 4] = ["NSCopying", "NSCoding", "NSSecureCoding", "NSFastEnumeration"];
const SCALARS: [&str; 10] =
    ["int", "BOOL", "NSInteger", "NSUInteger", "CGFloat", "double", "unsigned long long", "long long", "char", "float"];
const NAMES: [&str; 8] = ["value", "item", "index", "handler", "options", "count", "key", "target"];
const STRUCTS: [&str; 3] = ["struct _NSZone *", "struct { double x0; double x1; }", "struct CGRect"];

fn fix_kinds(t: &mut TypeExpr, collections: &BTreeSet<String>) {
    for g in &mut t.generic_args {
        fix_kinds(g, collections);
    }
    if let Some(b) = &mut t.block_signature {
        fix_kinds(&mut b.return_type, collections);
        for p in &mut b.params {
            fix_kinds(p, collections);
        }
    }
    t.reclassify(collections);
}

fn protocols(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.gen_range(1..=2);
    PROTOCOLS.choose_multiple(rng, n).map(|s| s.to_string()).collect()
}

fn gen_object(rng: &mut ChaCha8Rng, depth: u32) -> TypeExpr {
    match rng.gen_range(0..5) {
        0 => TypeExpr::id(),
        1 => TypeExpr { protocols: protocols(rng), ..TypeExpr::id() },
        2 if depth < 2 => {
            let (base, n) = [("NSArray", 1), ("NSSet", 1), ("NSDictionary", 2)][rng.gen_range(0..3)];
            let args = (0..n).map(|_| gen_object(rng, depth + 1)).collect();
            TypeExpr { generic_args: args, ..TypeExpr::object(base) }
        }
        3 => TypeExpr { protocols: protocols(rng), ..TypeExpr::object("NSObject") },
        _ => TypeExpr::object(CLASSES[rng.gen_range(0..CLASSES.len())]),
    }
}

fn gen_type(rng: &mut ChaCha8Rng, depth: u32) -> TypeExpr {
    match rng.gen_range(0..10) {
        0..=2 => TypeExpr::scalar(SCALARS[rng.gen_range(0..SCALARS.len())]),
        3..=5 => gen_object(rng, depth),
        6 if depth < 1 => {
            let ret = if rng.gen_bool(0.5) { TypeExpr::void() } else { gen_type(rng, depth + 1) };
            let params = (0..rng.gen_range(0..=3)).map(|_| gen_type(rng, depth + 1)).collect();
            TypeExpr::block(ret, params)
        }
        7 => TypeExpr { pointer_depth: 1, is_const: rng.gen_bool(0.3), ..TypeExpr::void() },
        8 => parse_type(STRUCTS[rng.gen_range(0..STRUCTS.len())], &opts()).expect("struct spelling parses"),
        _ => TypeExpr::new(TypeKind::ClassType, "Class"),
    }
}

fn gen_method(rng: &mut ChaCha8Rng) -> MethodDecl {
    let arity = rng.gen_range(0..=4);
    let collections = default_collection_classes();
    let ty = |rng: &mut ChaCha8Rng| {
        let mut t = gen_type(rng, 0);
        fix_kinds(&mut t, &collections);
        t
    };
    let mut return_type = if rng.gen_bool(0.25) { TypeExpr::void() } else { ty(rng) };
    fix_kinds(&mut return_type, &collections);
    let mut pieces = Vec::new();
    let mut params = Vec::new();
    if arity == 0 {
        pieces.push(format!("{}Value", NAMES[rng.gen_range(0..NAMES.len())]));
    }
    for i in 0..arity {
        pieces.push(format!("{}{i}:", if i == 0 { "perform" } else { "with" }));
        params.push(Param { name: format!("{}{i}", NAMES[rng.gen_range(0..NAMES.len())]), ty: ty(rng) });
    }
    MethodDecl {
        is_class_method: rng.gen_bool(0.2),
        selector_pieces: pieces,
        return_type,
        params,
        variadic: false,
        owning_class: String::new(),
        source_header: String::new(),
        source_span: SourceSpan::default(),
    }
}

fn parser_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let collections = default_collection_classes();
    let mut kinds = BTreeSet::new();
    for i in 0..500 {
        let d = gen_method(&mut rng);
        for (_, t) in d.positions() {
            t.check_invariants(&collections).map_err(|e| format!("generator produced an invalid type: {e}"))?;
            t.walk(&mut |n| {
                kinds.insert(n.kind);
            });
        }
        let text = d.render();
        let back = parse_method(&text, &opts()).map_err(|e| format!("#{i} `{text}`: {e}"))?;
        ensure!(back.same_signature(&d), "#{i} `{text}` re-parsed as `{}`", back.render());
    }
    for k in [TypeKind::Scalar, TypeKind::Collection, TypeKind::ProtocolQualified, TypeKind::Block] {
        ensure!(kinds.contains(&k), "generator never produced {k}");
    }
    Ok(format!("500/500 declarations, {} type kinds covered", kinds.len()))
}

// 9 ------------------------------------------------------------------------

fn sigrec(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sigrec")).args(args).output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn end_to_end() -> Check {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/demo");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |q: &Path| q.to_str().unwrap().to_string();
    let run = tmp.path().join("run");
    let dataset = tmp.path().join("dataset.json");
    let eval = tmp.path().join("eval");
    sigrec(&[
        "infer",
        "--workspace",
        &p(&fixture.join("workspace")),
        "--script",
        &p(&fixture.join("script.json")),
        "--out",
        &p(&run),
        "--jobs",
        "4",
    ])?;
    sigrec(&[
        "bench-build",
        "--gt",
        &p(&fixture.join("gt")),
        "--stripped",
        &p(&fixture.join("stripped")),
        "--seed",
        "7",
        "--out",
        &p(&dataset),
    ])?;
    sigrec(&["bench-eval", "--dataset", &p(&dataset), "--traces", &p(&run.join("traces.jsonl")), "--out", &p(&eval)])?;
    for name in ["report.json", "report.md"] {
        let got = fs::read(eval.join(name)).map_err(|e| e.to_string())?;
        let want = fs::read(fixture.join("golden").join(name)).map_err(|e| e.to_string())?;
        ensure!(got == want, "{name} differs from the golden copy");
    }
    Ok("report.json and report.md match the golden copies byte for byte".into())
}
