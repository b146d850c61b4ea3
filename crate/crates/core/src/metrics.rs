//! Accuracy, behavioural and subtask metrics over evaluated methods and
//! inference traces, plus report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::InferenceTrace;
use crate::bench::BenchRecord;
use crate::header::{canonicalize_type, canonicalize_type_text, parse_type, ParseOptions, TypeExpr, TypeKind};
use crate::linter::{Constraint, DiagnosticSet};

pub const DEFAULT_SCALAR_BASES: &[&str] = &[
    "int",
    "BOOL",
    "long",
    "long long",
    "char",
    "short",
    "float",
    "double",
    "unsigned",
    "unsigned int",
    "unsigned long",
    "unsigned long long",
    "unsigned char",
    "unsigned short",
    "NSInteger",
    "NSUInteger",
];

/// Figure-7 style categories, in report order.
pub const HISTOGRAM_CATEGORIES: [&str; 7] = [
    "Conventional Types",
    "Generic Collections",
    "No ID Generics",
    "No Structs",
    "Selector Mismatch",
    "Struct Refs",
    "Method Not Parsed",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionScore {
    pub index: usize,
    /// `None` marks a position excluded from scoring.
    pub gt: Option<String>,
    pub inferred: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method_id: String,
    pub positions: Vec<PositionScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_ref: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub stability_k: usize,
    /// Count exact repeats of earlier calls as hallucinated.
    pub count_redundant: bool,
    pub scalar_bases: Vec<String>,
    pub parse: ParseOptions,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            stability_k: 10,
            count_redundant: false,
            scalar_bases: DEFAULT_SCALAR_BASES.iter().map(|s| s.to_string()).collect(),
            parse: ParseOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no scorable methods")]
    EmptyCorpus,
}

impl PositionScore {
    pub fn scored(&self) -> bool {
        self.gt.is_some()
    }

    pub fn correct(&self, opts: &ParseOptions) -> bool {
        match (&self.gt, &self.inferred) {
            (Some(g), Some(i)) => canonicalize_type_text(g, opts) == canonicalize_type_text(i, opts),
            _ => false,
        }
    }
}

impl EvalRecord {
    /// (correct, scored) over non-excluded positions.
    pub fn tally(&self, opts: &ParseOptions) -> (usize, usize) {
        let scored: Vec<_> = self.positions.iter().filter(|p| p.scored()).collect();
        (scored.iter().filter(|p| p.correct(opts)).count(), scored.len())
    }
}

/// Scores a bench record against a trace. Ambiguous positions take the
/// type from the trace's final candidate; everything else, and every
/// position when there is no usable candidate, keeps the stripped type.
pub fn eval_record(rec: &BenchRecord, trace: Option<&InferenceTrace>, trace_ref: Option<usize>) -> EvalRecord {
    let cand = trace.and_then(|t| t.final_decl());
    let positions = rec
        .position_types
        .iter()
        .map(|p| {
            let inferred = match cand {
                Some(c) if p.was_ambiguous => c.type_at(p.position).map(canonicalize_type),
                _ => rec.stripped_decl.type_at(p.position).map(canonicalize_type),
            };
            PositionScore { index: p.position, gt: p.gt_type.clone(), inferred }
        })
        .collect();
    EvalRecord { method_id: rec.method_id(), positions, trace_ref }
}

fn scorable<'a>(records: &'a [EvalRecord], opts: &'a ParseOptions) -> impl Iterator<Item = (usize, usize)> + 'a {
    records.iter().map(|r| r.tally(opts)).filter(|(_, n)| *n > 0)
}

/// Mean over methods of the fraction of correct scored positions.
pub fn pm_accuracy(records: &[EvalRecord], opts: &ParseOptions) -> Result<f64, MetricsError> {
    let v: Vec<f64> = scorable(records, opts).map(|(c, n)| c as f64 / n as f64).collect();
    if v.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Correct positions over all scored positions, pooled across methods.
pub fn pm_pooled(records: &[EvalRecord], opts: &ParseOptions) -> Result<f64, MetricsError> {
    let (c, n) = scorable(records, opts).fold((0, 0), |(a, b), (c, n)| (a + c, b + n));
    if n == 0 {
        return Err(MetricsError::EmptyCorpus);
    }
    Ok(c as f64 / n as f64)
}

pub fn em_accuracy(records: &[EvalRecord], opts: &ParseOptions) -> Result<f64, MetricsError> {
    let v: Vec<bool> = scorable(records, opts).map(|(c, n)| c == n).collect();
    if v.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    Ok(v.iter().filter(|b| **b).count() as f64 / v.len() as f64)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn tool_usage_rate(traces: &[InferenceTrace]) -> Option<f64> {
    ratio(traces.iter().filter(|t| t.tool_call_count() > 0).count(), traces.len())
}

/// Canonical types of each iteration's representative candidate; the raw
/// text stands in when the candidate did not parse.
fn iteration_signatures(trace: &InferenceTrace) -> Vec<Option<Vec<String>>> {
    trace
        .iterations
        .iter()
        .map(|it| {
            it.best().map(|c| match &c.decl {
                Some(d) => d.canonical_types(),
                None => vec![c.text.clone()],
            })
        })
        .collect()
}

/// A trace is stable when its candidate is unchanged between the last two
/// iterations within the first `k`, or when it converged at iteration 1.
pub fn is_stable(trace: &InferenceTrace, k: usize) -> bool {
    if trace.converged_at == Some(1) {
        return true;
    }
    let sigs = iteration_signatures(trace);
    let n = sigs.len().min(k);
    n >= 2 && sigs[n - 1].is_some() && sigs[n - 1] == sigs[n - 2]
}

pub fn inference_stability(traces: &[InferenceTrace], k: usize) -> Option<f64> {
    ratio(traces.iter().filter(|t| is_stable(t, k)).count(), traces.len())
}

/// (valid, hallucinated) call counts.
pub fn call_counts(traces: &[InferenceTrace], count_redundant: bool) -> (usize, usize) {
    let mut valid = 0;
    let mut bad = 0;
    for c in traces.iter().flat_map(|t| t.calls()) {
        if c.result.verdict.is_valid() && !(count_redundant && c.result.redundant) {
            valid += 1;
        } else {
            bad += 1;
        }
    }
    (valid, bad)
}

pub fn tcc(traces: &[InferenceTrace], count_redundant: bool) -> Option<f64> {
    let (v, b) = call_counts(traces, count_redundant);
    ratio(v, v + b)
}

pub fn hr(traces: &[InferenceTrace], count_redundant: bool) -> Option<f64> {
    let (v, b) = call_counts(traces, count_redundant);
    ratio(b, v + b)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSet {
    pub scalar: bool,
    pub collection: bool,
    pub protocol_qualified: bool,
    pub block: bool,
}

pub fn classify_position(t: &TypeExpr, scalar_bases: &[String]) -> SubtaskSet {
    SubtaskSet {
        scalar: t.kind == TypeKind::Scalar && scalar_bases.contains(&t.base_name),
        collection: t.kind == TypeKind::Collection,
        protocol_qualified: t.mentions_protocol(),
        block: t.kind == TypeKind::Block,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubtaskScores {
    pub btc: Option<f64>,
    pub ci: Option<f64>,
    pub dpi: Option<f64>,
    pub bti: Option<f64>,
}

impl SubtaskScores {
    /// Mean of the applicable scores.
    pub fn average(&self) -> Option<f64> {
        let v: Vec<f64> = [self.btc, self.ci, self.dpi, self.bti].into_iter().flatten().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Block positions compare by canonical text, which spells out the return
/// type and every parameter type in order.
pub fn subtask_accuracies(records: &[EvalRecord], cfg: &MetricsConfig) -> SubtaskScores {
    let mut tallies = [(0usize, 0usize); 4];
    for p in records.iter().flat_map(|r| r.positions.iter()) {
        let Some(gt) = &p.gt else { continue };
        let Ok(t) = parse_type(gt, &cfg.parse) else { continue };
        let set = classify_position(&t, &cfg.scalar_bases);
        let ok = p.correct(&cfg.parse) as usize;
        for (i, member) in [set.scalar, set.collection, set.protocol_qualified, set.block].into_iter().enumerate() {
            if member {
                tallies[i].0 += ok;
                tallies[i].1 += 1;
            }
        }
    }
    let [s, c, p, b] = tallies.map(|(k, n)| ratio(k, n));
    SubtaskScores { btc: s, ci: c, dpi: p, bti: b }
}

/// Counts per report category, zero-filled over all seven categories.
pub fn diagnostic_histogram<'a>(sets: impl IntoIterator<Item = &'a DiagnosticSet>) -> BTreeMap<String, usize> {
    let mut h: BTreeMap<String, usize> = HISTOGRAM_CATEGORIES.iter().map(|c| (c.to_string(), 0)).collect();
    for d in sets.into_iter().flat_map(|s| s.diags.iter()) {
        if let Some(cat) = d.constraint.report_category() {
            *h.entry(cat.to_string()).or_default() += 1;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub methods: usize,
    pub scored_positions: usize,
    pub traces: usize,
    pub tool_calls: usize,
    pub pm: Option<f64>,
    pub pm_pooled: Option<f64>,
    pub em: Option<f64>,
    pub tool_usage_rate: Option<f64>,
    pub inference_stability: Option<f64>,
    pub tcc: Option<f64>,
    pub hr: Option<f64>,
    pub btc: Option<f64>,
    pub ci: Option<f64>,
    pub dpi: Option<f64>,
    pub bti: Option<f64>,
    pub avg_subtask: Option<f64>,
    pub diagnostic_histogram: BTreeMap<String, usize>,
}

pub fn build_report(records: &[EvalRecord], traces: &[InferenceTrace], cfg: &MetricsConfig) -> MetricsReport {
    let opts = &cfg.parse;
    let sub = subtask_accuracies(records, cfg);
    let (v, b) = call_counts(traces, cfg.count_redundant);
    MetricsReport {
        methods: scorable(records, opts).count(),
        scored_positions: scorable(records, opts).map(|(_, n)| n).sum(),
        traces: traces.len(),
        tool_calls: v + b,
        pm: pm_accuracy(records, opts).ok(),
        pm_pooled: pm_pooled(records, opts).ok(),
        em: em_accuracy(records, opts).ok(),
        tool_usage_rate: tool_usage_rate(traces),
        inference_stability: inference_stability(traces, cfg.stability_k),
        tcc: tcc(traces, cfg.count_redundant),
        hr: hr(traces, cfg.count_redundant),
        btc: sub.btc,
        ci: sub.ci,
        dpi: sub.dpi,
        bti: sub.bti,
        avg_subtask: sub.average(),
        diagnostic_histogram: diagnostic_histogram(traces.iter().flat_map(|t| t.all_diagnostics())),
    }
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}", x * 100.0),
        None => "--".to_string(),
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Markdown with the headline table in the usual column order, then the
    /// diagnostic histogram.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Avg. | PM | EM | Tool Usage | Stability | TCC | HR | BTC | CI | DPI | BTI |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        let cells = [
            self.avg_subtask,
            self.pm,
            self.em,
            self.tool_usage_rate,
            self.inference_stability,
            self.tcc,
            self.hr,
            self.btc,
            self.ci,
            self.dpi,
            self.bti,
        ];
        let row: Vec<String> = cells.iter().map(|c| pct(*c)).collect();
        let _ = writeln!(out, "| {} |", row.join(" | "));
        let _ = writeln!(
            out,
            "\nMethods: {}. Scored positions: {}. Traces: {}. Tool calls: {}. Pooled PM: {}.",
            self.methods,
            self.scored_positions,
            self.traces,
            self.tool_calls,
            pct(self.pm_pooled)
        );
        out.push_str("\n| Diagnostic | Count |\n|---|---|\n");
        for cat in HISTOGRAM_CATEGORIES {
            let _ = writeln!(out, "| {cat} | {} |", self.diagnostic_histogram.get(cat).copied().unwrap_or(0));
        }
        out
    }
}

/// Whether a constraint is counted in the histogram.
pub fn in_histogram(c: Constraint) -> bool {
    c.report_category().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(i: usize, gt: Option<&str>, inf: Option<&str>) -> PositionScore {
        PositionScore { index: i, gt: gt.map(String::from), inferred: inf.map(String::from) }
    }

    fn rec(ps: Vec<PositionScore>) -> EvalRecord {
        EvalRecord { method_id: "m".into(), positions: ps, trace_ref: None }
    }

    fn o() -> ParseOptions {
        ParseOptions::default()
    }

    #[test]
    fn pm_and_em() {
        let r = rec(vec![
            pos(0, Some("void"), Some("void")),
            pos(1, Some("NSString *"), Some("NSString*")),
            pos(2, Some("NSNumber *"), Some("id")),
            pos(3, Some("BOOL"), None),
            pos(4, None, Some("id")),
        ]);
        assert_eq!(pm_accuracy(std::slice::from_ref(&r), &o()), Ok(0.5));
        assert_eq!(em_accuracy(std::slice::from_ref(&r), &o()), Ok(0.0));
        let good = rec(vec![pos(0, Some("nullable NSString *"), Some("NSString * _Nonnull"))]);
        assert_eq!(em_accuracy(std::slice::from_ref(&good), &o()), Ok(1.0));
        assert_eq!(pm_accuracy(&[good, r.clone()], &o()), Ok(0.75));
        assert_eq!(pm_pooled(&[r], &o()), Ok(0.5));
        assert_eq!(pm_accuracy(&[], &o()), Err(MetricsError::EmptyCorpus));
        assert_eq!(em_accuracy(&[rec(vec![pos(0, None, None)])], &o()), Err(MetricsError::EmptyCorpus));
    }

    #[test]
    fn classification() {
        let bases = MetricsConfig::default().scalar_bases;
        let c = |s: &str| classify_position(&parse_type(s, &o()).unwrap(), &bases);
        assert_eq!(c("BOOL"), SubtaskSet { scalar: true, ..Default::default() });
        assert_eq!(c("unsigned long long"), SubtaskSet { scalar: true, ..Default::default() });
        assert_eq!(c("CGFloat"), SubtaskSet::default());
        assert_eq!(c("id<NSCopying>"), SubtaskSet { protocol_qualified: true, ..Default::default() });
        assert_eq!(
            c("NSArray<id<NSCopying>> *"),
            SubtaskSet { collection: true, protocol_qualified: true, ..Default::default() }
        );
        assert_eq!(c("void (^)(NSError *)"), SubtaskSet { block: true, ..Default::default() });
    }

    #[test]
    fn subtasks() {
        let cfg = MetricsConfig::default();
        let r = rec(vec![
            pos(0, Some("BOOL"), Some("BOOL")),
            pos(1, Some("void (^)(NSError *)"), Some("void (^)(NSString *)")),
            pos(2, Some("NSArray<NSString *> *"), Some("NSArray<NSString *> *")),
        ]);
        let s = subtask_accuracies(&[r], &cfg);
        assert_eq!(s.btc, Some(1.0));
        assert_eq!(s.bti, Some(0.0));
        assert_eq!(s.ci, Some(1.0));
        assert_eq!(s.dpi, None);
        assert_eq!(s.average(), Some(2.0 / 3.0));
    }

    #[test]
    fn empty_traces_give_na_tool_metrics() {
        let r = build_report(&[rec(vec![pos(0, Some("BOOL"), Some("BOOL"))])], &[], &MetricsConfig::default());
        assert_eq!(r.tool_usage_rate, None);
        assert_eq!(r.tcc, None);
        assert_eq!(r.hr, None);
        assert_eq!(r.diagnostic_histogram.len(), 7);
        let md = r.to_markdown();
        assert!(md.contains("| 100.0 | 100.0 | 100.0 | -- | -- | -- | -- | 100.0 | -- | -- | -- |"), "{md}");
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn histogram_skips_syntax_companion() {
        assert!(!in_histogram(Constraint::SyntaxErrors));
        assert!(Constraint::ALL.iter().filter(|c| in_histogram(**c)).count() == 7);
    }
}
