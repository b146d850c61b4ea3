//! Benchmark construction: ground-truth matching, size/category
//! stratification, balanced sampling and framework-level splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::header::{canonicalize_type, parse_header_with, AmbiguityConfig, HeaderAst, MethodDecl, ParseOptions};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameworkEntry {
    pub name: String,
    pub category: String,
    pub method_count: usize,
    #[serde(default)]
    pub gt_header_paths: Vec<String>,
    #[serde(default)]
    pub stripped_header_paths: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionType {
    pub position: usize,
    /// Canonical ground-truth spelling; `None` when the ground truth itself
    /// uses an ambiguous type and the position is not scored.
    pub gt_type: Option<String>,
    pub was_ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub framework: String,
    pub class_name: String,
    pub stripped_decl: MethodDecl,
    pub gt_decl: MethodDecl,
    pub position_types: Vec<PositionType>,
}

impl BenchRecord {
    pub fn method_id(&self) -> String {
        format!("{}:{}", self.framework, self.gt_decl.symbol_text())
    }

    pub fn scored_positions(&self) -> usize {
        self.position_types.iter().filter(|p| p.gt_type.is_some()).count()
    }
}

type MatchKey = (String, bool, String);

fn key_of(m: &MethodDecl) -> MatchKey {
    (m.owning_class.clone(), m.is_class_method, m.selector())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub duplicates_stripped: Vec<String>,
    pub duplicates_gt: Vec<String>,
    pub unmatched_stripped: Vec<String>,
    pub unmatched_gt: Vec<String>,
    /// Matched methods dropped because no position is scorable.
    pub unscorable: Vec<String>,
}

fn index(asts: &[HeaderAst]) -> (Vec<(MatchKey, &MethodDecl, &str)>, BTreeSet<MatchKey>) {
    let mut counts: HashMap<MatchKey, usize> = HashMap::new();
    let mut rows = Vec::new();
    for ast in asts {
        for m in ast.methods() {
            let k = key_of(m);
            *counts.entry(k.clone()).or_default() += 1;
            rows.push((k, m, ast.framework.as_str()));
        }
    }
    let dups = counts.into_iter().filter(|(_, n)| *n > 1).map(|(k, _)| k).collect();
    (rows, dups)
}

fn key_text((class, is_class, sel): &MatchKey) -> String {
    format!("{}[{class} {sel}]", if *is_class { '+' } else { '-' })
}

/// Pairs stripped and ground-truth methods one-to-one on
/// (class, class/instance, selector).
pub fn match_ground_truth(
    stripped: &[HeaderAst],
    gt: &[HeaderAst],
    ambiguity: &AmbiguityConfig,
) -> (Vec<BenchRecord>, MatchReport) {
    let (s_rows, s_dups) = index(stripped);
    let (g_rows, g_dups) = index(gt);
    let g_map: HashMap<&MatchKey, &MethodDecl> =
        g_rows.iter().filter(|(k, ..)| !g_dups.contains(k)).map(|(k, m, _)| (k, *m)).collect();
    let s_keys: BTreeSet<&MatchKey> = s_rows.iter().map(|(k, ..)| k).collect();

    let mut report = MatchReport {
        duplicates_stripped: s_dups.iter().map(key_text).collect(),
        duplicates_gt: g_dups.iter().map(key_text).collect(),
        ..MatchReport::default()
    };
    let mut records = Vec::new();
    for (k, s, framework) in &s_rows {
        if s_dups.contains(k) {
            continue;
        }
        if g_dups.contains(k) {
            continue;
        }
        let Some(g) = g_map.get(k) else {
            report.unmatched_stripped.push(key_text(k));
            continue;
        };
        let position_types: Vec<PositionType> = g
            .positions()
            .map(|(i, t)| PositionType {
                position: i,
                gt_type: (!ambiguity.is_ambiguous(t)).then(|| canonicalize_type(t)),
                was_ambiguous: s.type_at(i).is_some_and(|st| ambiguity.is_ambiguous(st)),
            })
            .collect();
        let rec = BenchRecord {
            framework: framework.to_string(),
            class_name: k.0.clone(),
            stripped_decl: (*s).clone(),
            gt_decl: (*g).clone(),
            position_types,
        };
        if rec.scored_positions() == 0 {
            report.unscorable.push(key_text(k));
            continue;
        }
        records.push(rec);
    }
    for (k, ..) in &g_rows {
        if !g_dups.contains(k) && !s_keys.contains(k) {
            report.unmatched_gt.push(key_text(k));
        }
    }
    (records, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBin {
    Small,
    Medium,
    Large,
    Oversize,
}

impl SizeBin {
    /// small ≤ 10, medium 11–100, large 101–1000, oversize above.
    pub fn of(method_count: usize) -> SizeBin {
        match method_count {
            0..=10 => SizeBin::Small,
            11..=100 => SizeBin::Medium,
            101..=1000 => SizeBin::Large,
            _ => SizeBin::Oversize,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SizeBin::Small => "small",
            SizeBin::Medium => "medium",
            SizeBin::Large => "large",
            SizeBin::Oversize => "oversize",
        }
    }
}

impl fmt::Display for SizeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinKey {
    pub category: String,
    pub size_bin: SizeBin,
}

pub type Bins = BTreeMap<BinKey, Vec<FrameworkEntry>>;

/// Members of each cell are sorted by framework name.
pub fn stratify(frameworks: &[FrameworkEntry]) -> Bins {
    let mut bins: Bins = BTreeMap::new();
    for f in frameworks {
        bins.entry(BinKey { category: f.category.clone(), size_bin: SizeBin::of(f.method_count) })
            .or_default()
            .push(f.clone());
    }
    for members in bins.values_mut() {
        members.sort_by(|a, b| a.name.cmp(&b.name));
    }
    bins
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub bin: BinKey,
    pub available: usize,
    pub requested: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub selected: Vec<FrameworkEntry>,
    pub shortfalls: Vec<Shortfall>,
    /// Oversize cells left out of sampling.
    pub excluded: Vec<String>,
}

pub fn sample_balanced(bins: &Bins, n_per_bin: usize, seed: u64, include_oversize: bool) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Sample { selected: Vec::new(), shortfalls: Vec::new(), excluded: Vec::new() };
    for (key, members) in bins {
        if key.size_bin == SizeBin::Oversize && !include_oversize {
            out.excluded.extend(members.iter().map(|m| m.name.clone()));
            continue;
        }
        let take = n_per_bin.min(members.len());
        if take < n_per_bin {
            out.shortfalls.push(Shortfall { bin: key.clone(), available: members.len(), requested: n_per_bin });
        }
        let mut picked = sample(&mut rng, members.len(), take).into_vec();
        picked.sort_unstable();
        out.selected.extend(picked.into_iter().map(|i| members[i].clone()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub category: String,
    pub train: usize,
    pub eval: usize,
    pub train_ratio: f64,
    pub eval_ratio: f64,
}

impl RatioRow {
    fn new(category: &str, train: usize, eval: usize) -> Self {
        let n = (train + eval).max(1) as f64;
        RatioRow {
            category: category.to_string(),
            train,
            eval,
            train_ratio: train as f64 / n,
            eval_ratio: eval as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub eval_fraction: f64,
    pub train: Vec<String>,
    pub eval: Vec<String>,
    pub ratios: Vec<RatioRow>,
    pub total: RatioRow,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("eval_fraction must lie in [0, 1], got {0}")]
    BadFraction(f64),
    #[error("n_per_bin must be positive")]
    BadSampleSize,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed {file}: {message}")]
    Malformed { file: String, message: String },
}

/// Number of frameworks sent to evaluation out of `n`, rounding half up.
pub fn eval_count(n: usize, eval_fraction: f64) -> usize {
    ((n as f64 * eval_fraction + 0.5 + 1e-9).floor() as usize).min(n)
}

/// Framework-level split per category. Names within the train and eval
/// lists are sorted.
pub fn split(selection: &[FrameworkEntry], eval_fraction: f64, seed: u64) -> Result<Split, BenchError> {
    if !(0.0..=1.0).contains(&eval_fraction) {
        return Err(BenchError::BadFraction(eval_fraction));
    }
    let mut by_cat: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for f in selection {
        by_cat.entry(f.category.as_str()).or_default().push(f.name.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut eval, mut ratios) = (Vec::new(), Vec::new(), Vec::new());
    for (cat, mut names) in by_cat {
        names.sort_unstable();
        names.dedup();
        names.shuffle(&mut rng);
        let k = eval_count(names.len(), eval_fraction);
        eval.extend(names[..k].iter().map(|s| s.to_string()));
        train.extend(names[k..].iter().map(|s| s.to_string()));
        ratios.push(RatioRow::new(cat, names.len() - k, k));
    }
    train.sort();
    eval.sort();
    let total = RatioRow::new("Total", train.len(), eval.len());
    Ok(Split { eval_fraction, train, eval, ratios, total })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub n_per_bin: usize,
    pub eval_fraction: f64,
    pub sample_seed: u64,
    pub split_seed: u64,
    pub include_oversize: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { n_per_bin: 5, eval_fraction: 0.70, sample_seed: 0, split_seed: 0, include_oversize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub category: String,
    pub size_bin: SizeBin,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: BenchConfig,
    pub frameworks: Vec<FrameworkEntry>,
    pub bins: Vec<BinSummary>,
    pub sample: Sample,
    pub split: Split,
    pub match_report: MatchReport,
    /// Records of every sampled framework, in framework order.
    pub records: Vec<BenchRecord>,
}

impl DatasetManifest {
    pub fn eval_records(&self) -> impl Iterator<Item = &BenchRecord> {
        self.records.iter().filter(|r| self.split.eval.contains(&r.framework))
    }
}

fn read_headers(
    dir: &Path,
    framework: &str,
    rel_root: &Path,
    opts: &ParseOptions,
) -> Result<(Vec<HeaderAst>, Vec<String>), BenchError> {
    let mut names: Vec<_> = match fs::read_dir(dir) {
        Ok(rd) => {
            rd.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.extension().is_some_and(|e| e == "h")).collect()
        }
        Err(_) => return Ok((Vec::new(), Vec::new())),
    };
    names.sort();
    let mut asts = Vec::new();
    let mut paths = Vec::new();
    for p in names {
        let text = fs::read_to_string(&p)
            .map_err(|e| BenchError::Io { path: p.display().to_string(), message: e.to_string() })?;
        let file = p.file_name().unwrap().to_string_lossy().into_owned();
        let mut ast = parse_header_with(&text, &file, opts);
        ast.framework = framework.to_string();
        asts.push(ast);
        let rel = p.strip_prefix(rel_root).unwrap_or(&p);
        paths.push(rel.to_string_lossy().replace('\\', "/"));
    }
    Ok((asts, paths))
}

fn subdirs(dir: &Path) -> Result<Vec<String>, BenchError> {
    let rd =
        fs::read_dir(dir).map_err(|e| BenchError::Io { path: dir.display().to_string(), message: e.to_string() })?;
    let mut v: Vec<String> = rd
        .filter_map(Result::ok)
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    Ok(v)
}

pub const UNCATEGORIZED: &str = "Uncategorized";

/// Builds a dataset from `gt_dir/<Framework>/*.h` and
/// `stripped_dir/<Framework>/*.h`. Categories come from
/// `gt_dir/categories.json` (`{"Framework": "Category"}`).
pub fn build_dataset(
    gt_dir: &Path,
    stripped_dir: &Path,
    cfg: &BenchConfig,
    ambiguity: &AmbiguityConfig,
    opts: &ParseOptions,
) -> Result<DatasetManifest, BenchError> {
    if cfg.n_per_bin == 0 {
        return Err(BenchError::BadSampleSize);
    }
    let cat_path = gt_dir.join("categories.json");
    let categories: BTreeMap<String, String> = match fs::read(&cat_path) {
        Ok(b) => serde_json::from_slice(&b)
            .map_err(|e| BenchError::Malformed { file: "categories.json".into(), message: e.to_string() })?,
        Err(_) => BTreeMap::new(),
    };

    let mut frameworks = Vec::new();
    let mut all_records: BTreeMap<String, Vec<BenchRecord>> = BTreeMap::new();
    let mut report = MatchReport::default();
    for name in subdirs(gt_dir)? {
        let stripped_fw = stripped_dir.join(&name);
        if !stripped_fw.is_dir() {
            continue;
        }
        let (gt_asts, gt_paths) = read_headers(&gt_dir.join(&name), &name, gt_dir, opts)?;
        let (s_asts, s_paths) = read_headers(&stripped_fw, &name, stripped_dir, opts)?;
        let (records, r) = match_ground_truth(&s_asts, &gt_asts, ambiguity);
        report.duplicates_stripped.extend(r.duplicates_stripped);
        report.duplicates_gt.extend(r.duplicates_gt);
        report.unmatched_stripped.extend(r.unmatched_stripped);
        report.unmatched_gt.extend(r.unmatched_gt);
        report.unscorable.extend(r.unscorable);
        frameworks.push(FrameworkEntry {
            category: categories.get(&name).cloned().unwrap_or_else(|| UNCATEGORIZED.to_string()),
            name: name.clone(),
            method_count: records.len(),
            gt_header_paths: gt_paths,
            stripped_header_paths: s_paths,
        });
        all_records.insert(name, records);
    }

    let bins = stratify(&frameworks);
    let sample = sample_balanced(&bins, cfg.n_per_bin, cfg.sample_seed, cfg.include_oversize);
    let split = split(&sample.selected, cfg.eval_fraction, cfg.split_seed)?;
    let mut chosen: Vec<&str> = sample.selected.iter().map(|f| f.name.as_str()).collect();
    chosen.sort_unstable();
    let records = chosen.iter().flat_map(|n| all_records.remove(*n).unwrap_or_default()).collect();
    Ok(DatasetManifest {
        config: cfg.clone(),
        bins: bins
            .iter()
            .map(|(k, v)| BinSummary {
                category: k.category.clone(),
                size_bin: k.size_bin,
                members: v.iter().map(|f| f.name.clone()).collect(),
            })
            .collect(),
        frameworks,
        sample,
        split,
        match_report: report,
        records,
    })
}
