//! Diagnostics over speakers, languages and run records.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::SpeakerAgent;
use crate::language::Language;
use crate::nil::GenerationRecord;
use crate::objectspace::SpaceSpec;
use crate::topsim::{pearson, topological_similarity, CorrelationKind};
use crate::{Error, Result};

pub const DEFAULT_MC_SAMPLES: usize = 50;

/// Monte-Carlo estimate of the expected ρ under the speaker's language
/// distribution: `(mean, standard error)` over `k` sampled languages.
pub fn expected_rho_mc<R: Rng + ?Sized>(
    a: &SpeakerAgent,
    spec: &SpaceSpec,
    k: usize,
    rng: &mut R,
    kind: CorrelationKind,
) -> Result<(f64, f64)> {
    Ok(mean_and_se(&sample_rhos(a, spec, k, rng, kind)?))
}

/// ρ of `k` languages sampled from the speaker.
pub fn sample_rhos<R: Rng + ?Sized>(
    a: &SpeakerAgent,
    spec: &SpaceSpec,
    k: usize,
    rng: &mut R,
    kind: CorrelationKind,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Config("need at least one language sample".into()));
    }
    a.sample_languages(k, rng)
        .iter()
        .map(|l| topological_similarity(spec, l, kind))
        .collect()
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Number of distinct messages in the language.
pub fn message_type_count(lang: &Language) -> usize {
    let mut m: Vec<_> = lang.messages().iter().collect();
    m.sort();
    m.dedup();
    m.len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoHistogram {
    pub generation: Option<usize>,
    /// `counts.len() + 1` increasing edges from -1 to 1.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl RhoHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Equal-width bins over `[-1, 1]`; each bin is half-open on the right except the last.
pub fn rho_histogram(samples: &[f64], bins: usize) -> Result<RhoHistogram> {
    if bins < 2 {
        return Err(Error::Config("a histogram needs at least 2 bins".into()));
    }
    let edges: Vec<f64> = (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for &s in nonempty(samples)? {
        let k = ((s + 1.0) / 2.0 * bins as f64).floor();
        counts[(k.max(0.0) as usize).min(bins - 1)] += 1;
    }
    Ok(RhoHistogram {
        generation: None,
        edges,
        counts,
    })
}

/// Five groups `ρ <= 0.2`, `(0.2, 0.4]`, `(0.4, 0.6]`, `(0.6, 0.8]`, `> 0.8`.
pub fn rho_groups(samples: &[f64]) -> Result<RhoHistogram> {
    let cuts = [0.2, 0.4, 0.6, 0.8];
    let mut counts = vec![0; 5];
    for &s in nonempty(samples)? {
        counts[cuts.iter().filter(|&&c| s > c).count()] += 1;
    }
    Ok(RhoHistogram {
        generation: None,
        edges: vec![-1.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        counts,
    })
}

fn nonempty(samples: &[f64]) -> Result<&[f64]> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples to bin".into()));
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationSplit {
    /// Canonical object indices, sorted.
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

impl ValidationSplit {
    pub fn valid_size(&self) -> usize {
        self.valid.len()
    }
}

/// Uniformly random disjoint split with `valid_size` held-out objects.
pub fn make_validation_split<R: Rng + ?Sized>(
    spec: &SpaceSpec,
    valid_size: usize,
    rng: &mut R,
) -> Result<ValidationSplit> {
    let n = spec.object_count();
    if valid_size >= n {
        return Err(Error::InsufficientObjects {
            needed: valid_size + 1,
            available: n,
        });
    }
    let mut all: Vec<usize> = (0..n).collect();
    if valid_size > 0 {
        all.shuffle(rng);
    }
    let mut valid = all.split_off(n - valid_size);
    all.sort_unstable();
    valid.sort_unstable();
    Ok(ValidationSplit { train: all, valid })
}

/// Pearson r over run-level `(final ρ, validation accuracy)` pairs.
pub fn rho_vs_validation_correlation(runs: &[(f64, f64)]) -> Result<f64> {
    if runs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 3 runs, got {}",
            runs.len()
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = runs.iter().copied().unzip();
    pearson(&x, &y).ok_or_else(|| Error::UndefinedCorrelation("a run-level vector is constant".into()))
}

/// First generation whose trailing `window`-generation mean greedy ρ exceeds `threshold`.
pub fn g_threshold(records: &[GenerationRecord], threshold: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    (window..=records.len()).find_map(|end| {
        let w = &records[end - window..end];
        let mean = w.iter().map(|r| r.rho_greedy).sum::<f64>() / window as f64;
        (mean > threshold).then(|| records[end - 1].generation)
    })
}

/// Mean greedy ρ over the last `n` generations.
pub fn mean_last_rho(records: &[GenerationRecord], n: usize) -> f64 {
    let tail = &records[records.len().saturating_sub(n)..];
    tail.iter().map(|r| r.rho_greedy).sum::<f64>() / tail.len().max(1) as f64
}

/// Mean of an arbitrary record statistic over the last `n` generations.
pub fn mean_last(records: &[GenerationRecord], n: usize, f: impl Fn(&GenerationRecord) -> f64) -> f64 {
    let tail = &records[records.len().saturating_sub(n)..];
    tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::NetConfig;
    use crate::language::{generate_compositional, generate_degenerate};
    use crate::objectspace::Message;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(generation: usize, rho: f64) -> GenerationRecord {
        GenerationRecord {
            generation,
            rho_greedy: rho,
            ..GenerationRecord::default()
        }
    }

    #[test]
    fn deterministic_speaker_has_zero_standard_error() {
        let spec = SpaceSpec::new(2, 4, 2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = SpeakerAgent::new(&spec, &NetConfig { hidden_size: 8, init_scale: 0.1 }, &mut rng);
        a.params_mut().tensors_mut()[crate::agents::speaker::OUT_B][[0, 1]] = 60.0;
        let (m, se) = expected_rho_mc(&a, &spec, 20, &mut rng, CorrelationKind::Spearman).unwrap();
        let g = topological_similarity(&spec, &a.greedy_language(), CorrelationKind::Spearman).unwrap();
        assert_eq!((m, se), (g, 0.0));
    }

    #[test]
    fn mc_matches_exhaustive_enumeration() {
        // 4 objects, 2 one-symbol messages: 16 languages, each weighted by its probability
        let spec = SpaceSpec::new(2, 2, 1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = SpeakerAgent::new(&spec, &NetConfig { hidden_size: 6, init_scale: 1.0 }, &mut rng);
        let mut exact = 0.0;
        let mut mass = 0.0;
        for code in 0..16usize {
            let msgs = (0..4).map(|i| Message(vec![(code >> i) & 1])).collect();
            let l = Language::from_messages(&spec, msgs).unwrap();
            let p = a.language_log_prob(&l).exp();
            mass += p;
            exact += p * topological_similarity(&spec, &l, CorrelationKind::Spearman).unwrap();
        }
        assert!((mass - 1.0).abs() < 1e-9);
        let (est, se) = expected_rho_mc(&a, &spec, 4000, &mut rng, CorrelationKind::Spearman).unwrap();
        assert!((est - exact).abs() <= 3.0 * se, "{est} vs {exact} (se {se})");
    }

    #[test]
    fn uniform_speaker_prior_rho_is_low() {
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = SpeakerAgent::new(&spec, &NetConfig { hidden_size: 8, init_scale: 0.1 }, &mut rng);
        a.params_mut().tensors_mut()[crate::agents::speaker::OUT_W].fill(0.0);
        let (m, _) = expected_rho_mc(&a, &spec, 50, &mut rng, CorrelationKind::Spearman).unwrap();
        assert!(m < 0.4, "{m}");
    }

    #[test]
    fn message_types() {
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(message_type_count(&generate_compositional(&spec, &mut rng).unwrap()), 64);
        assert_eq!(message_type_count(&generate_degenerate(&spec, &Message(vec![1, 2])).unwrap()), 1);
    }

    #[test]
    fn histograms() {
        let h = rho_histogram(&[1.0; 7], 10).unwrap();
        assert_eq!(h.counts[9], 7);
        assert_eq!(h.edges.len(), 11);
        let h = rho_histogram(&[-1.0, -0.05, 0.0, 0.19, 0.2], 10).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 0, 1, 2, 1, 0, 0, 0]);
        let g = rho_groups(&[0.2, 0.21, 0.4, 0.61, 0.8, 0.95, -0.3]).unwrap();
        assert_eq!(g.counts, vec![2, 2, 0, 2, 1]);
        assert!(rho_histogram(&[], 10).is_err());
        assert!(rho_histogram(&[0.1], 1).is_err());
    }

    #[test]
    fn validation_splits() {
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let s0 = make_validation_split(&spec, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((s0.train.len(), s0.valid.len()), (64, 0));
        let s = make_validation_split(&spec, 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((s.train.len(), s.valid_size()), (56, 8));
        assert!(s.valid.iter().all(|v| !s.train.contains(v)));
        assert_eq!(s, make_validation_split(&spec, 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap());
        assert!(make_validation_split(&spec, 64, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn run_level_correlation() {
        let line: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert_eq!(rho_vs_validation_correlation(&line).unwrap(), 1.0);
        let anti: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, -3.0 * i as f64)).collect();
        assert_eq!(rho_vs_validation_correlation(&anti).unwrap(), -1.0);
        assert!(matches!(
            rho_vs_validation_correlation(&[(1.0, 0.5), (1.0, 0.6), (1.0, 0.7)]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(rho_vs_validation_correlation(&line[..2]).is_err());
    }

    #[test]
    fn threshold_generation() {
        let flat: Vec<_> = (1..=10).map(|g| record(g, 0.9)).collect();
        assert_eq!(g_threshold(&flat, 0.85, 3), Some(3));
        let low: Vec<_> = (1..=10).map(|g| record(g, 0.5)).collect();
        assert_eq!(g_threshold(&low, 0.85, 3), None);
    }

    proptest! {
        #[test]
        fn histogram_counts_are_order_free(mut v in prop::collection::vec(-1.0f64..=1.0, 1..60), seed in any::<u64>()) {
            let h = rho_histogram(&v, 10).unwrap();
            prop_assert_eq!(h.total(), v.len());
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(rho_histogram(&v, 10).unwrap().counts, h.counts);
        }

        #[test]
        fn raising_the_threshold_never_moves_earlier(
            rhos in prop::collection::vec(-1.0f64..=1.0, 1..30), t1 in 0.01f64..0.99, t2 in 0.01f64..0.99,
        ) {
            let recs: Vec<_> = rhos.iter().enumerate().map(|(i, &r)| record(i + 1, r)).collect();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            if let Some(g_hi) = g_threshold(&recs, hi, 3) {
                let g_lo = g_threshold(&recs, lo, 3);
                prop_assert!(g_lo.is_some() && g_lo.unwrap() <= g_hi);
            }
        }
    }
}
