//! Topological similarity: correlation between pairwise object distances and
//! pairwise message edit distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::language::{Dataset, Language};
use crate::objectspace::{object_distance, Message, ObjectId, SpaceSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    #[default]
    Spearman,
    Pearson,
}

impl std::str::FromStr for CorrelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spearman" => Ok(CorrelationKind::Spearman),
            "pearson" => Ok(CorrelationKind::Pearson),
            other => Err(Error::Config(format!("unknown correlation kind `{other}`"))),
        }
    }
}

/// Unit-cost Levenshtein distance over arbitrary symbol sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn message_distance(m_i: &Message, m_j: &Message) -> usize {
    levenshtein(&m_i.0, &m_j.0)
}

/// Correlation of the two distance vectors. Constant inputs give 0.
pub fn correlation(x: &[f64], y: &[f64], kind: CorrelationKind) -> f64 {
    assert_eq!(x.len(), y.len());
    match kind {
        CorrelationKind::Pearson => pearson_or_zero(x, y),
        CorrelationKind::Spearman => pearson_or_zero(&average_ranks(x), &average_ranks(y)),
    }
}

/// Pearson coefficient, or `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn pearson_or_zero(x: &[f64], y: &[f64]) -> f64 {
    pearson(x, y).unwrap_or(0.0)
}

/// 1-based ranks with ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

fn pairwise_rho<'a>(
    spec: &SpaceSpec,
    items: &[(&'a ObjectId, &'a Message)],
    kind: CorrelationKind,
) -> f64 {
    let n = items.len();
    let mut dx = Vec::with_capacity(n * (n - 1) / 2);
    let mut dm = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dx.push(object_distance(spec, items[i].0, items[j].0));
            dm.push(message_distance(items[i].1, items[j].1) as f64);
        }
    }
    correlation(&dx, &dm, kind)
}

/// ρ of a total language over all object pairs.
pub fn topological_similarity(
    spec: &SpaceSpec,
    lang: &Language,
    kind: CorrelationKind,
) -> Result<f64> {
    if lang.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "topological similarity needs at least 3 objects, got {}",
            lang.len()
        )));
    }
    let items: Vec<_> = lang.iter().collect();
    Ok(pairwise_rho(spec, &items, kind))
}

/// ρ of a language restricted to a subset of objects, given by canonical index.
pub fn topological_similarity_on(
    spec: &SpaceSpec,
    lang: &Language,
    subset: &[usize],
    kind: CorrelationKind,
) -> Result<f64> {
    if subset.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "topological similarity needs at least 3 objects, got {}",
            subset.len()
        )));
    }
    let objects = lang.objects();
    let items: Vec<_> = subset
        .iter()
        .map(|&i| (&objects[i], &lang.messages()[i]))
        .collect();
    Ok(pairwise_rho(spec, &items, kind))
}

/// ρ over all unordered pairs of dataset entries (repeated objects included).
pub fn topsim_of_dataset(spec: &SpaceSpec, d: &Dataset, kind: CorrelationKind) -> Result<f64> {
    if d.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "dataset topological similarity needs at least 3 pairs, got {}",
            d.len()
        )));
    }
    let items: Vec<_> = d.pairs().iter().map(|p| (&p.object, &p.message)).collect();
    Ok(pairwise_rho(spec, &items, kind))
}
