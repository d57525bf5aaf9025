//! Text-overlap metrics and rank correlation.

use std::collections::{BTreeMap, HashMap};

use crate::corpus::Document;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_N: usize = 4;
pub const DEFAULT_ROUGE_BETA: f64 = 1.2;

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn ngram_counts<'t, 'a>(toks: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU over whitespace tokens.
///
/// Unigram precision is unsmoothed; higher orders use add-one smoothing.
/// Brevity penalty `exp(1 - r/c)` applies when the candidate is shorter.
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> Result<f64> {
    if max_n == 0 {
        return Err(Error::InvalidInput("max_n must be at least 1".into()));
    }
    let r = tokens(reference);
    if r.is_empty() {
        return Err(Error::InvalidInput("empty BLEU reference".into()));
    }
    let c = tokens(candidate);
    if c.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cc = ngram_counts(&c, n);
        let rc = ngram_counts(&r, n);
        let total: usize = cc.values().sum();
        let matched: usize = cc.iter().map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0))).sum();
        let p = if n == 1 {
            if matched == 0 {
                return Ok(0.0);
            }
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let bp = if c.len() < r.len() {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    Ok(bp * (log_sum / max_n as f64).exp())
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure over whitespace tokens: `(1+β²)PR / (R + β²P)`.
pub fn rouge_l(candidate: &str, reference: &str, beta: f64) -> f64 {
    let c = tokens(candidate);
    let r = tokens(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&c, &r) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / c.len() as f64;
    let rec = lcs / r.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * p * rec / (rec + b2 * p)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!("length mismatch: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two observations".into()));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in correlation input".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok(pearson(&average_ranks(xs), &average_ranks(ys)))
}

/// Pairwise Spearman among (s_priv, s_knw, s_retr), pooled over every scored
/// entity of `docs`. Pairs whose correlation is undefined are omitted.
pub fn feature_overlap(docs: &[Document]) -> BTreeMap<String, f64> {
    let (mut p, mut k, mut r) = (Vec::new(), Vec::new(), Vec::new());
    for s in docs.iter().flat_map(|d| d.entities.iter().filter_map(|e| e.scores)) {
        p.push(s.s_priv);
        k.push(s.s_knw);
        r.push(s.s_retr);
    }
    let mut out = BTreeMap::new();
    for (name, a, b) in [("s_priv~s_knw", &p, &k), ("s_priv~s_retr", &p, &r), ("s_knw~s_retr", &k, &r)] {
        if let Ok(rho) = spearman(a, b) {
            out.insert(name.to_string(), rho);
        }
    }
    out
}
