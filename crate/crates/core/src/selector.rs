//! Candidate selection: every hard constraint must hold, and among the
//! admissible candidates the one with the smallest weighted soft cost wins.
//!
//! The search space is the finite candidate pool, so selection is an
//! exhaustive scoring pass; ties go to the earliest pool index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::header::{parse_method, MethodDecl};
use crate::linter::{lint, CandidateRef, DiagnosticSet, LintConfig, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityWeights {
    pub medium: f64,
    pub low: f64,
}

impl Default for SeverityWeights {
    fn default() -> Self {
        SeverityWeights { medium: 2.0, low: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("invalid weights (need medium >= low >= 0): medium={medium}, low={low}")]
    InvalidWeights { medium: f64, low: f64 },
    #[error("candidate pool is empty")]
    EmptyPool,
}

impl SeverityWeights {
    pub fn new(medium: f64, low: f64) -> Result<Self, SelectError> {
        let w = SeverityWeights { medium, low };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        let ok = self.medium.is_finite() && self.low.is_finite() && self.low >= 0.0 && self.medium >= self.low;
        if ok {
            Ok(())
        } else {
            Err(SelectError::InvalidWeights { medium: self.medium, low: self.low })
        }
    }

    /// Weight of one soft finding; high findings carry no weight because
    /// they are constraints, not costs.
    pub fn weight(&self, severity: Severity) -> f64 {
        match severity {
            Severity::High => 0.0,
            Severity::Medium => self.medium,
            Severity::Low => self.low,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decl: Option<MethodDecl>,
    pub diags: DiagnosticSet,
    pub admissible: bool,
    pub soft_cost: f64,
}

impl ScoredCandidate {
    pub fn from_diagnostics(
        text: String,
        decl: Option<MethodDecl>,
        diags: DiagnosticSet,
        weights: &SeverityWeights,
    ) -> Self {
        let admissible = !diags.has_hard();
        // from counts so equal multisets cost exactly the same
        let count = |s: Severity| diags.diags.iter().filter(|d| d.severity == s).count() as f64;
        let soft_cost = count(Severity::Medium) * weights.medium + count(Severity::Low) * weights.low;
        ScoredCandidate { text, decl, diags, admissible, soft_cost }
    }

    /// Ordering used to pick a representative among inadmissible
    /// candidates: fewest hard findings, then lowest soft cost.
    fn inadmissible_rank(&self) -> (usize, f64) {
        (self.diags.hard_count(), self.soft_cost)
    }
}

pub fn score<'a>(
    candidate: impl Into<CandidateRef<'a>>,
    original: &MethodDecl,
    weights: &SeverityWeights,
    cfg: &LintConfig,
) -> ScoredCandidate {
    let candidate = candidate.into();
    let diags = lint(candidate, original, cfg);
    let (text, decl) = match candidate {
        CandidateRef::Text(t) => (t.to_string(), parse_method(t, &cfg.parse_options()).ok()),
        CandidateRef::Decl(d) => (d.render(), Some(d.clone())),
    };
    ScoredCandidate::from_diagnostics(text, decl, diags, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Selection {
    Chosen { index: usize, scored: Vec<ScoredCandidate> },
    NoAdmissible { scored: Vec<ScoredCandidate> },
}

impl Selection {
    pub fn scored(&self) -> &[ScoredCandidate] {
        match self {
            Selection::Chosen { scored, .. } | Selection::NoAdmissible { scored } => scored,
        }
    }

    pub fn chosen(&self) -> Option<&ScoredCandidate> {
        match self {
            Selection::Chosen { index, scored } => scored.get(*index),
            Selection::NoAdmissible { .. } => None,
        }
    }

    /// The chosen candidate, or the best-ranked inadmissible one.
    pub fn best(&self) -> Option<(usize, &ScoredCandidate)> {
        match self {
            Selection::Chosen { index, scored } => Some((*index, &scored[*index])),
            Selection::NoAdmissible { scored } => best_inadmissible(scored).map(|i| (i, &scored[i])),
        }
    }
}

/// Index of the admissible candidate with minimal soft cost, earliest on ties.
pub fn argmin_admissible(scored: &[ScoredCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in scored.iter().enumerate() {
        if !c.admissible {
            continue;
        }
        match best {
            Some(b) if scored[b].soft_cost <= c.soft_cost => {}
            _ => best = Some(i),
        }
    }
    best
}

fn best_inadmissible(scored: &[ScoredCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in scored.iter().enumerate() {
        match best {
            Some(b) if scored[b].inadmissible_rank() <= c.inadmissible_rank() => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Selects from an already-scored pool.
pub fn select_scored(scored: Vec<ScoredCandidate>) -> Result<Selection, SelectError> {
    if scored.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    Ok(match argmin_admissible(&scored) {
        Some(index) => Selection::Chosen { index, scored },
        None => Selection::NoAdmissible { scored },
    })
}

pub fn select_best<'a, C>(
    pool: &'a [C],
    original: &MethodDecl,
    weights: &SeverityWeights,
    cfg: &LintConfig,
) -> Result<Selection, SelectError>
where
    &'a C: Into<CandidateRef<'a>>,
{
    weights.validate()?;
    let scored = pool.iter().map(|c| score(c, original, weights, cfg)).collect();
    select_scored(scored)
}
