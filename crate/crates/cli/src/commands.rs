use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sigrec_core::agent::{
    AgentConfig, AgentError, BackendError, InferenceTrace, ModelBackend, RemoteBackend, RemoteConfig, ScriptedBackend,
    StopRule,
};
use sigrec_core::bench::{build_dataset, BenchConfig, DatasetManifest};
use sigrec_core::header::{parse_method, AmbiguityConfig, MethodDecl};
use sigrec_core::linter;
use sigrec_core::metrics::{build_report, eval_record, MetricsConfig, MetricsReport};
use sigrec_core::pipeline::{discover, infer_all, reconstruct_header, toolbox_for};
use sigrec_core::selector::SeverityWeights;
use sigrec_core::toolbox::{ingest_workspace, Workspace};

use crate::{BackendKind, BenchBuildArgs, BenchEvalArgs, InferArgs, ReportFormat};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Backend(_) => "backend",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn stdout_line(s: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{s}");
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    framework: &'a str,
    os_build: &'a str,
    symbols: usize,
    disas: usize,
    dec: usize,
    headers: Vec<String>,
    warnings: Vec<String>,
}

fn load_workspace(root: &Path) -> Result<Workspace, CliError> {
    ingest_workspace(root).map_err(data)
}

pub fn ingest(root: &Path) -> Result<(), CliError> {
    let ws = load_workspace(root)?;
    let s = IngestSummary {
        framework: &ws.framework,
        os_build: &ws.os_build,
        symbols: ws.symtab.len(),
        disas: ws.disas_index.len(),
        dec: ws.dec_index.len(),
        headers: ws.hdr_scan(),
        warnings: ws.warnings.iter().map(|w| w.to_string()).collect(),
    };
    stdout_line(&serde_json::to_string_pretty(&s).expect("summary serializes"));
    Ok(())
}

fn load_agent_config(path: Option<&Path>) -> Result<AgentConfig, CliError> {
    match path {
        Some(p) => serde_json::from_slice(&read(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => Ok(AgentConfig::default()),
    }
}

#[derive(Serialize)]
struct LintRow {
    line: usize,
    candidate: String,
    diagnostics: Vec<linter::Diagnostic>,
}

pub fn lint(file: &Path, config: Option<&Path>, json: bool) -> Result<(), CliError> {
    let cfg = load_agent_config(config)?.lint;
    let opts = cfg.parse_options();
    let text = String::from_utf8(read(file)?).map_err(data)?;
    let placeholder = parse_method("- (void)_;", &opts).expect("placeholder parses");
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("//") {
            continue;
        }
        let (original, candidate) = match line.split_once("=>") {
            Some((o, c)) => {
                let o = parse_method(o.trim(), &opts)
                    .map_err(|e| CliError::Data(format!("line {}: original does not parse: {e}", i + 1)))?;
                (o, c.trim())
            }
            None => (parse_method(line, &opts).unwrap_or_else(|_| placeholder.clone()), line),
        };
        let set = linter::lint(candidate, &original, &cfg);
        rows.push(LintRow { line: i + 1, candidate: candidate.to_string(), diagnostics: set.diags });
    }
    if json {
        stdout_line(&serde_json::to_string_pretty(&rows).expect("rows serialize"));
    } else {
        for r in &rows {
            for d in &r.diagnostics {
                stdout_line(&format!("{}:{}: [{}] {}", file.display(), r.line, d.severity, d.feedback_line()));
            }
        }
        let total: usize = rows.iter().map(|r| r.diagnostics.len()).sum();
        stdout_line(&format!("{total} diagnostic(s) in {} declaration(s)", rows.len()));
    }
    Ok(())
}

pub fn parse_weights(spec: &str) -> Result<SeverityWeights, CliError> {
    let mut w = SeverityWeights::default();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("bad weight `{part}`; expected medium=X,low=Y")))?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("bad weight value `{v}`")))?;
        match k.trim() {
            "medium" => w.medium = v,
            "low" => w.low = v,
            other => return Err(CliError::Usage(format!("unknown weight `{other}`"))),
        }
    }
    w.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(w)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BackendSettings {
    pub kind: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

/// Written to `<out>/config.json` for every inference run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub workspace: PathBuf,
    pub framework: String,
    pub backend: BackendSettings,
    pub agent: AgentConfig,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct InferSummary {
    targets: usize,
    converged: usize,
    unresolved: usize,
    collisions: Vec<String>,
    headers: Vec<String>,
}

fn agent_from_args(a: &InferArgs) -> Result<AgentConfig, CliError> {
    let mut cfg = load_agent_config(a.config.as_deref())?;
    if let Some(k) = a.max_iters {
        cfg.max_iters = k;
    }
    if let Some(n) = a.max_turns {
        cfg.max_turns = n;
    }
    if let Some(p) = a.pool_size {
        cfg.pool_size = p;
    }
    if let Some(w) = &a.weights {
        cfg.weights = parse_weights(w)?;
    }
    if a.no_tools {
        cfg.tools_enabled = false;
    }
    if a.no_feedback {
        cfg.feedback_enabled = false;
    }
    if a.stable_stop {
        cfg.stop_rule = StopRule::StableSoftCost;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

enum BackendSource {
    Script(ScriptedBackend),
    Remote(RemoteConfig),
}

impl BackendSource {
    fn make(&self) -> Box<dyn ModelBackend> {
        match self {
            BackendSource::Script(s) => Box::new(s.clone()),
            BackendSource::Remote(c) => Box::new(RemoteBackend::from_env(c.clone())),
        }
    }
}

fn agent_error(e: AgentError) -> CliError {
    match e {
        AgentError::Backend(BackendError::InvalidScript(m)) => CliError::Data(format!("invalid script: {m}")),
        AgentError::Backend(b) => CliError::Backend(b.to_string()),
        AgentError::Config(m) => CliError::Usage(m),
        other => CliError::Data(other.to_string()),
    }
}

pub fn infer(a: &InferArgs) -> Result<(), CliError> {
    let cfg = agent_from_args(a)?;
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let source = match a.backend {
        BackendKind::Scripted => {
            let path = a.script.as_ref().ok_or_else(|| CliError::Usage("--backend scripted needs --script".into()))?;
            BackendSource::Script(ScriptedBackend::from_json(&read(path)?).map_err(data)?)
        }
        BackendKind::Remote => {
            let endpoint =
                a.endpoint.clone().ok_or_else(|| CliError::Usage("--backend remote needs --endpoint".into()))?;
            let model = a.model.clone().ok_or_else(|| CliError::Usage("--backend remote needs --model".into()))?;
            BackendSource::Remote(RemoteConfig { endpoint, model, temperature: 0.0, timeout_secs: 120 })
        }
    };

    let ws = load_workspace(&a.workspace)?;
    for w in &ws.warnings {
        log::warn!("{w}");
    }
    let asts = ws.parse_headers(&cfg.lint.parse_options());
    let found = discover(&ws, &asts, &AmbiguityConfig::default());
    log::info!("{} inference targets", found.targets.len());

    let run = RunConfig {
        workspace: a.workspace.clone(),
        framework: ws.framework.clone(),
        backend: BackendSettings {
            kind: a.backend,
            script: a.script.clone(),
            endpoint: a.endpoint.clone(),
            model: a.model.clone(),
        },
        agent: cfg.clone(),
        seed: a.seed,
        jobs: a.jobs,
        out: a.out.clone(),
    };
    write(&a.out.join("config.json"), &(serde_json::to_string_pretty(&run).expect("config serializes") + "\n"))?;

    let ws = Arc::new(ws);
    let toolbox = toolbox_for(ws.clone(), &cfg);
    let results = infer_all(&found.targets, &asts, &toolbox, &cfg, a.jobs, |_| source.make());
    let traces: Vec<InferenceTrace> = results.into_iter().collect::<Result<_, _>>().map_err(agent_error)?;

    let mut jsonl = String::new();
    for t in &traces {
        jsonl.push_str(&serde_json::to_string(t).expect("trace serializes"));
        jsonl.push('\n');
    }
    write(&a.out.join("traces.jsonl"), &jsonl)?;

    let mut by_header: BTreeMap<&str, Vec<&InferenceTrace>> = BTreeMap::new();
    for (t, r) in traces.iter().zip(&found.targets) {
        by_header.entry(r.header.as_str()).or_default().push(t);
    }
    let mut written = Vec::new();
    for (name, text) in &ws.headers {
        let ts = by_header.get(name.as_str()).cloned().unwrap_or_default();
        write(&a.out.join("headers").join(name), &reconstruct_header(text, &ts))?;
        written.push(name.clone());
    }
    let converged = traces.iter().filter(|t| t.converged).count();
    let summary = InferSummary {
        targets: traces.len(),
        converged,
        unresolved: traces.len() - converged,
        collisions: found.collisions,
        headers: written,
    };
    let s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&a.out.join("summary.json"), &(s.clone() + "\n"))?;
    stdout_line(&s);
    Ok(())
}

pub fn bench_build(a: &BenchBuildArgs) -> Result<(), CliError> {
    if a.n_per_bin == 0 {
        return Err(CliError::Usage("--n-per-bin must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&a.eval_fraction) {
        return Err(CliError::Usage("--eval-fraction must lie in [0, 1]".into()));
    }
    let cfg = BenchConfig {
        n_per_bin: a.n_per_bin,
        eval_fraction: a.eval_fraction,
        sample_seed: a.seed,
        split_seed: a.split_seed.unwrap_or(a.seed),
        include_oversize: a.include_oversize,
    };
    let m = build_dataset(&a.gt, &a.stripped, &cfg, &AmbiguityConfig::default(), &Default::default()).map_err(data)?;
    write(&a.out, &(serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n"))?;
    stdout_line(&format!(
        "{} frameworks, {} sampled ({} eval / {} train), {} records",
        m.frameworks.len(),
        m.sample.selected.len(),
        m.split.eval.len(),
        m.split.train.len(),
        m.records.len()
    ));
    Ok(())
}

pub fn read_traces(path: &Path) -> Result<Vec<InferenceTrace>, CliError> {
    let text = String::from_utf8(read(path)?).map_err(data)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn trace_key(framework: &str, decl: &MethodDecl) -> (String, String) {
    (framework.to_string(), decl.symbol_text())
}

pub fn evaluate(manifest: &DatasetManifest, traces: &[InferenceTrace], a: &BenchEvalArgs) -> MetricsReport {
    let index: HashMap<(String, String), usize> =
        traces.iter().enumerate().map(|(i, t)| (trace_key(&t.target.framework, &t.target.decl), i)).collect();
    let records: Vec<_> = manifest
        .records
        .iter()
        .filter(|r| a.all_splits || manifest.split.eval.contains(&r.framework))
        .filter(|r| a.all_methods || r.position_types.iter().any(|p| p.was_ambiguous))
        .collect();
    let mut evals = Vec::new();
    let mut used = Vec::new();
    for r in records {
        let ti = index.get(&trace_key(&r.framework, &r.stripped_decl)).copied();
        if let Some(i) = ti {
            used.push(traces[i].clone());
        }
        let trace_ref = ti.map(|_| used.len() - 1);
        evals.push(eval_record(r, trace_ref.map(|i| &used[i]), trace_ref));
    }
    let cfg =
        MetricsConfig { stability_k: a.stability_k, count_redundant: a.count_redundant, ..MetricsConfig::default() };
    build_report(&evals, &used, &cfg)
}

pub fn bench_eval(a: &BenchEvalArgs) -> Result<(), CliError> {
    let manifest: DatasetManifest = serde_json::from_slice(&read(&a.dataset)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.dataset.display())))?;
    let traces = match &a.traces {
        Some(p) => read_traces(p)?,
        None => Vec::new(),
    };
    let report = evaluate(&manifest, &traces, a);
    if report.methods == 0 {
        return Err(CliError::Data("no scorable methods in the selected split".into()));
    }
    write(&a.out.join("report.json"), &report.to_json())?;
    write(&a.out.join("report.md"), &report.to_markdown())?;
    print!("{}", report.to_markdown());
    Ok(())
}

pub fn report(path: &Path, format: ReportFormat) -> Result<(), CliError> {
    let r: MetricsReport =
        serde_json::from_slice(&read(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    match format {
        ReportFormat::Json => print!("{}", r.to_json()),
        ReportFormat::Markdown => print!("{}", r.to_markdown()),
    }
    Ok(())
}
