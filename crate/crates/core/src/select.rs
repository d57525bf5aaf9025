//! Choosing which entities to generalize.
//!
//! The production path thresholds the priority score: every entity with
//! ψ strictly above τ is generalized. The knapsack view (maximize retained
//! utility under a retained-risk budget and a residual-entropy floor) is
//! solved exhaustively for small instances to measure how far the threshold
//! rule is from optimal.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, Document};
use crate::error::{Error, Result};
use crate::scoring::{ScoreVector, Weights};

pub const MAX_EXACT_ITEMS: usize = 22;
pub const DEFAULT_MARGIN: f64 = 0.01;
pub const DEFAULT_B_PRIV: f64 = 0.5;
pub const DEFAULT_ETA: f64 = 8.0;
pub const DEFAULT_MIN_DELTA: u64 = 16;
/// Absolute slack on the risk budget so that float summation order cannot
/// flip feasibility (0.1 + 0.2 > 0.3).
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub doc_id: String,
    pub generalize_set: BTreeSet<usize>,
    pub keep_set: BTreeSet<usize>,
    pub tau_used: f64,
}

impl Selection {
    /// Generalizes `generalize_set` and keeps every other entity of `doc`.
    pub fn new(doc: &Document, generalize_set: BTreeSet<usize>, tau_used: f64) -> Result<Self> {
        let n = doc.entities.len();
        if let Some(&i) = generalize_set.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        let keep_set = (0..n).filter(|i| !generalize_set.contains(i)).collect();
        Ok(Selection {
            doc_id: doc.id.clone(),
            generalize_set,
            keep_set,
            tau_used,
        })
    }

    pub fn generalize_all(doc: &Document) -> Self {
        Selection {
            doc_id: doc.id.clone(),
            generalize_set: (0..doc.entities.len()).collect(),
            keep_set: BTreeSet::new(),
            tau_used: f64::NEG_INFINITY,
        }
    }

    pub(crate) fn check_against(&self, doc: &Document) -> Result<()> {
        let n = doc.entities.len();
        for &i in self.generalize_set.iter().chain(&self.keep_set) {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
        }
        if self.generalize_set.intersection(&self.keep_set).next().is_some() {
            return Err(Error::InvalidInput("generalize and keep sets intersect".into()));
        }
        if self.generalize_set.len() + self.keep_set.len() != n {
            return Err(Error::InvalidInput(format!("selection covers {} of {n} entities", self.generalize_set.len() + self.keep_set.len())));
        }
        Ok(())
    }
}

/// `u = β·s_retr + γ·s_knw`.
pub fn utility_contribution(s: &ScoreVector, w: &Weights) -> f64 {
    w.beta * s.s_retr + w.gamma * s.s_knw
}

fn scores_of(doc: &Document) -> Result<Vec<ScoreVector>> {
    doc.entities
        .iter()
        .enumerate()
        .map(|(i, e)| e.scores.ok_or(Error::Unscored(i)))
        .collect()
}

/// Sum of utility over the kept entities.
pub fn total_utility(doc: &Document, sel: &Selection, w: &Weights) -> Result<f64> {
    let n = doc.entities.len();
    let mut total = 0.0;
    for &i in &sel.keep_set {
        let e = doc.entities.get(i).ok_or(Error::IndexOutOfRange { index: i, len: n })?;
        total += utility_contribution(&e.scores.ok_or(Error::Unscored(i))?, w);
    }
    Ok(total)
}

/// Generalize every entity whose ψ is strictly greater than `tau`.
pub fn select_by_threshold(doc: &Document, tau: f64) -> Result<Selection> {
    let scores = scores_of(doc)?;
    let generalize_set = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.psi > tau)
        .map(|(i, _)| i)
        .collect();
    Selection::new(doc, generalize_set, tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    pub doc: Document,
    pub critical_indices: BTreeSet<usize>,
}

impl CalibrationSample {
    pub fn new(doc: Document, critical_indices: BTreeSet<usize>) -> Result<Self> {
        let n = doc.entities.len();
        if let Some(&i) = critical_indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        Ok(CalibrationSample { doc, critical_indices })
    }
}

/// One line of a calibration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRecord {
    pub id: String,
    pub critical: Vec<usize>,
}

pub fn load_calibration_records(path: impl AsRef<Path>) -> Result<Vec<CalibrationRecord>> {
    read_jsonl(path)
}

/// τ = (smallest ψ among critical entities) − margin.
pub fn calibrate_threshold(samples: &[CalibrationSample], margin: f64) -> Result<f64> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::InvalidInput(format!("margin must be finite and non-negative, got {margin}")));
    }
    let mut min_psi: Option<f64> = None;
    for s in samples {
        for &i in &s.critical_indices {
            let e = s.doc.entities.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: s.doc.entities.len(),
            })?;
            let psi = e.scores.ok_or(Error::Unscored(i))?.psi;
            min_psi = Some(min_psi.map_or(psi, |m| m.min(psi)));
        }
    }
    min_psi.map(|m| m - margin).ok_or(Error::NoCalibrationSignal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    pub utilities: Vec<f64>,
    pub risks: Vec<f64>,
    pub b_priv: f64,
    pub eta: f64,
    pub min_delta: u64,
}

impl KnapsackInstance {
    pub fn new(utilities: Vec<f64>, risks: Vec<f64>, b_priv: f64, eta: f64, min_delta: u64) -> Result<Self> {
        let inst = KnapsackInstance {
            utilities,
            risks,
            b_priv,
            eta,
            min_delta,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Items are the document's entities: utility from the kept-side
    /// contribution, risk from marginal privacy risk.
    pub fn from_document(doc: &Document, w: &Weights, b_priv: f64, eta: f64, min_delta: u64) -> Result<Self> {
        let scores = scores_of(doc)?;
        KnapsackInstance::new(
            scores.iter().map(|s| utility_contribution(s, w)).collect(),
            scores.iter().map(|s| s.s_priv).collect(),
            b_priv,
            eta,
            min_delta,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.utilities.len() != self.risks.len() {
            return Err(Error::InvalidInput(format!(
                "{} utilities but {} risks",
                self.utilities.len(),
                self.risks.len()
            )));
        }
        if self.utilities.iter().chain(&self.risks).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite utility or risk".into()));
        }
        if self.utilities.iter().any(|&u| u < 0.0) {
            return Err(Error::InvalidInput("utilities must be non-negative".into()));
        }
        if self.b_priv.is_nan() || self.eta.is_nan() || self.b_priv < 0.0 || self.eta < 0.0 {
            return Err(Error::InvalidInput("b_priv and eta must be non-negative".into()));
        }
        if self.min_delta < 2 {
            return Err(Error::InvalidInput("min_delta must be at least 2".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utilities.is_empty()
    }

    /// Bits contributed by each generalized item.
    pub fn bits_per_item(&self) -> f64 {
        (self.min_delta as f64).log2()
    }

    pub fn kept_risk(&self, keep: &BTreeSet<usize>) -> f64 {
        keep.iter().map(|&i| self.risks[i]).sum()
    }

    pub fn kept_utility(&self, keep: &BTreeSet<usize>) -> f64 {
        keep.iter().map(|&i| self.utilities[i]).sum()
    }

    pub fn budget_ok(&self, keep: &BTreeSet<usize>) -> bool {
        self.kept_risk(keep) <= self.b_priv + BUDGET_TOLERANCE
    }

    pub fn entropy_ok(&self, n_generalized: usize) -> bool {
        n_generalized as f64 * self.bits_per_item() >= self.eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExactOutcome {
    Optimal {
        keep_set: BTreeSet<usize>,
        generalize_set: BTreeSet<usize>,
        utility: f64,
    },
    Infeasible,
}

impl ExactOutcome {
    pub fn utility(&self) -> Option<f64> {
        match self {
            ExactOutcome::Optimal { utility, .. } => Some(*utility),
            ExactOutcome::Infeasible => None,
        }
    }

    pub fn into_selection(self, doc: &Document) -> Result<Option<Selection>> {
        match self {
            ExactOutcome::Optimal { generalize_set, .. } => Selection::new(doc, generalize_set, f64::NAN).map(Some),
            ExactOutcome::Infeasible => Ok(None),
        }
    }
}

fn mask_to_set(mask: u32, n: usize) -> BTreeSet<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

/// Exhaustive search over all 2^n keep sets.
///
/// Feasible means retained risk ≤ `b_priv` and `|E_G|·log2(min_delta) ≥ eta`.
/// Among optimal utilities, the larger keep set wins, then the
/// lexicographically smallest keep-index sequence.
pub fn exact_select(inst: &KnapsackInstance) -> Result<ExactOutcome> {
    inst.validate()?;
    let n = inst.len();
    if n > MAX_EXACT_ITEMS {
        return Err(Error::TooLarge { n, max: MAX_EXACT_ITEMS });
    }
    let bits = inst.bits_per_item();
    let mut best: Option<(f64, BTreeSet<usize>)> = None;
    for mask in 0u32..(1u32 << n) {
        let kept = mask.count_ones() as usize;
        if ((n - kept) as f64) * bits < inst.eta {
            continue;
        }
        let mut risk = 0.0;
        let mut util = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                risk += inst.risks[i];
                util += inst.utilities[i];
            }
        }
        if risk > inst.b_priv + BUDGET_TOLERANCE {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bu, bset)) => {
                if util != *bu {
                    util > *bu
                } else if kept != bset.len() {
                    kept > bset.len()
                } else {
                    mask_to_set(mask, n) < *bset
                }
            }
        };
        if better {
            best = Some((util, mask_to_set(mask, n)));
        }
    }
    Ok(match best {
        Some((utility, keep_set)) => ExactOutcome::Optimal {
            generalize_set: (0..n).filter(|i| !keep_set.contains(i)).collect(),
            keep_set,
            utility,
        },
        None => ExactOutcome::Infeasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub doc_id: String,
    pub n_entities: usize,
    pub greedy_utility: f64,
    pub exact_utility: Option<f64>,
    /// greedy / exact; present only when the greedy selection is feasible.
    pub ratio: Option<f64>,
    pub budget_violation: bool,
    pub entropy_violation: bool,
    pub exact_infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub tau: f64,
    pub b_priv: f64,
    pub eta: f64,
    pub min_delta: u64,
    pub entries: Vec<GapEntry>,
    pub mean_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
    pub violations: usize,
}

/// Compares threshold selection against the exhaustive optimum, per document.
pub fn greedy_gap_report(docs: &[Document], tau: f64, w: &Weights, b_priv: f64, eta: f64, min_delta: u64) -> Result<GapReport> {
    let mut entries = Vec::with_capacity(docs.len());
    for doc in docs {
        let inst = KnapsackInstance::from_document(doc, w, b_priv, eta, min_delta)?;
        let greedy = select_by_threshold(doc, tau)?;
        let greedy_utility = inst.kept_utility(&greedy.keep_set);
        let budget_violation = !inst.budget_ok(&greedy.keep_set);
        let entropy_violation = !inst.entropy_ok(greedy.generalize_set.len());
        let exact = exact_select(&inst)?;
        let exact_utility = exact.utility();
        let ratio = if budget_violation || entropy_violation {
            None
        } else {
            match exact_utility {
                Some(e) if e > 0.0 => Some((greedy_utility / e).min(1.0)),
                _ => Some(1.0),
            }
        };
        entries.push(GapEntry {
            doc_id: doc.id.clone(),
            n_entities: inst.len(),
            greedy_utility,
            exact_utility,
            ratio,
            budget_violation,
            entropy_violation,
            exact_infeasible: exact_utility.is_none(),
        });
    }
    let ratios: Vec<f64> = entries.iter().filter_map(|e| e.ratio).collect();
    Ok(GapReport {
        tau,
        b_priv,
        eta,
        min_delta,
        mean_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
        min_ratio: ratios.iter().copied().reduce(f64::min),
        violations: entries.iter().filter(|e| e.budget_violation || e.entropy_violation).count(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyBound {
    /// Σ log2(size_i).
    pub sum_bits: f64,
    /// |E_G| · log2(min size).
    pub simplified_bits: f64,
}

/// Residual-entropy lower bound over the generalized entities' class sizes.
pub fn entropy_lower_bound(class_sizes: &[u64]) -> Result<EntropyBound> {
    if let Some(s) = class_sizes.iter().find(|&&s| s < 2) {
        return Err(Error::InvalidInput(format!("class size {s} provides no hiding; sizes must be at least 2")));
    }
    let sum_bits = class_sizes.iter().map(|&s| (s as f64).log2()).sum();
    let simplified_bits = match class_sizes.iter().min() {
        Some(&m) => class_sizes.len() as f64 * (m as f64).log2(),
        None => 0.0,
    };
    debug_assert!(sum_bits >= simplified_bits - 1e-9);
    Ok(EntropyBound {
        sum_bits,
        simplified_bits,
    })
}
