//! Total languages, transmitted datasets, the language taxonomy and the exact
//! class-counting formulas.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectspace::{enumerate_objects, Message, ObjectId, SpaceSpec};

/// A total mapping from objects to messages, stored in canonical object order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Language {
    objects: Vec<ObjectId>,
    messages: Vec<Message>,
}

impl Language {
    pub fn from_messages(spec: &SpaceSpec, messages: Vec<Message>) -> Result<Self> {
        if messages.len() != spec.object_count() {
            return Err(Error::CannotConstruct(format!(
                "language must cover all {} objects, got {} messages",
                spec.object_count(),
                messages.len()
            )));
        }
        for m in &messages {
            spec.check_message(m)?;
        }
        Ok(Language {
            objects: enumerate_objects(spec),
            messages,
        })
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn objects(&self) -> &[ObjectId] {
        &self.objects
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    /// Message for the object with canonical index `i`.
    pub fn message(&self, i: usize) -> &Message {
        &self.messages[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ObjectId, &Message)> {
        self.objects.iter().zip(&self.messages)
    }

    pub fn is_injective(&self) -> bool {
        let set: HashSet<&Message> = self.messages.iter().collect();
        set.len() == self.messages.len()
    }

    /// Writes one `{"object":[..],"message":[..]}` record per line.
    pub fn write_jsonl<W: Write>(&self, w: W) -> Result<()> {
        write_pairs(w, self.iter())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }

    /// Reads a language file; records may come in any order but must cover
    /// every object exactly once.
    pub fn read_jsonl<R: BufRead>(spec: &SpaceSpec, r: R) -> Result<Self> {
        let pairs = read_pairs(spec, r)?;
        let mut slots: Vec<Option<Message>> = vec![None; spec.object_count()];
        for p in pairs {
            let i = spec.object_index(&p.object);
            if slots[i].replace(p.message).is_some() {
                return Err(Error::Checkpoint(format!(
                    "object {:?} appears twice in language file",
                    p.object.0
                )));
            }
        }
        let messages = slots
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                m.ok_or_else(|| {
                    Error::Checkpoint(format!("object {:?} missing", spec.object_at(i).0))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Language::from_messages(spec, messages)
    }

    pub fn load(spec: &SpaceSpec, path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_jsonl(spec, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPair {
    pub object: ObjectId,
    pub message: Message,
}

/// Multiset of object-message pairs handed from one generation to the next.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pairs: Vec<DataPair>,
}

impl Dataset {
    pub fn new(pairs: Vec<DataPair>) -> Self {
        Dataset { pairs }
    }

    /// One pair per object.
    pub fn from_language(lang: &Language) -> Self {
        Dataset::new(
            lang.iter()
                .map(|(o, m)| DataPair {
                    object: o.clone(),
                    message: m.clone(),
                })
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[DataPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, pair: DataPair) {
        self.pairs.push(pair);
    }

    pub fn write_jsonl<W: Write>(&self, w: W) -> Result<()> {
        write_pairs(w, self.pairs.iter().map(|p| (&p.object, &p.message)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }

    pub fn read_jsonl<R: BufRead>(spec: &SpaceSpec, r: R) -> Result<Self> {
        Ok(Dataset::new(read_pairs(spec, r)?))
    }
}

fn write_pairs<'a, W: Write>(
    mut w: W,
    pairs: impl Iterator<Item = (&'a ObjectId, &'a Message)>,
) -> Result<()> {
    #[derive(Serialize)]
    struct Rec<'a> {
        object: &'a ObjectId,
        message: &'a Message,
    }
    for (object, message) in pairs {
        serde_json::to_writer(&mut w, &Rec { object, message })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_pairs<R: BufRead>(spec: &SpaceSpec, r: R) -> Result<Vec<DataPair>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: DataPair = serde_json::from_str(&line)
            .map_err(|e| Error::Checkpoint(format!("line {}: {e}", lineno + 1)))?;
        spec.check_object(&p.object)?;
        spec.check_message(&p.message)?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageClass {
    Degenerate,
    AmbiguousWithDegenerateComponent,
    Holistic,
    Compositional,
}

impl LanguageClass {
    pub fn is_unambiguous(self) -> bool {
        matches!(self, LanguageClass::Holistic | LanguageClass::Compositional)
    }
}

/// Uniformly random (not necessarily injective) language.
pub fn random_language<R: Rng + ?Sized>(spec: &SpaceSpec, rng: &mut R) -> Language {
    let messages = (0..spec.object_count())
        .map(|_| random_message(spec, rng))
        .collect();
    Language::from_messages(spec, messages).expect("valid by construction")
}

pub fn random_message<R: Rng + ?Sized>(spec: &SpaceSpec, rng: &mut R) -> Message {
    Message(
        (0..spec.message_length)
            .map(|_| rng.gen_range(0..spec.vocab_size))
            .collect(),
    )
}

/// Random perfectly compositional language.
///
/// Attributes get distinct message positions and every attribute gets an
/// injective value-to-symbol table. Unused positions hold symbol 0. For
/// messages of length three or more, per-position symbol sets are
/// disjoint whenever the vocabulary allows it.
pub fn generate_compositional<R: Rng + ?Sized>(spec: &SpaceSpec, rng: &mut R) -> Result<Language> {
    let (na, nv, nl, v) = (
        spec.n_attributes,
        spec.n_values,
        spec.message_length,
        spec.vocab_size,
    );
    if nl < na {
        return Err(Error::CannotConstruct(format!(
            "message length {nl} is shorter than the number of attributes {na}"
        )));
    }
    if v < nv {
        return Err(Error::CannotConstruct(format!(
            "vocabulary size {v} is smaller than the number of values {nv}"
        )));
    }
    let mut positions: Vec<usize> = (0..nl).collect();
    positions.shuffle(rng);
    positions.truncate(na);

    let filler = nl > na;
    let disjoint = nl >= 3 && v >= na * nv + usize::from(filler);
    let tables: Vec<Vec<usize>> = if disjoint {
        let mut symbols: Vec<usize> = (usize::from(filler)..v).collect();
        symbols.shuffle(rng);
        symbols.chunks(nv).take(na).map(|c| c.to_vec()).collect()
    } else {
        (0..na)
            .map(|_| {
                let mut s: Vec<usize> = (0..v).collect();
                s.shuffle(rng);
                s.truncate(nv);
                s
            })
            .collect()
    };

    let messages = enumerate_objects(spec)
        .iter()
        .map(|x| {
            let mut m = vec![0; nl];
            for (a, &value) in x.0.iter().enumerate() {
                m[positions[a]] = tables[a][value];
            }
            Message(m)
        })
        .collect();
    Language::from_messages(spec, messages)
}

/// Reassigns the same messages to objects by a uniform random permutation.
pub fn permute_language<R: Rng + ?Sized>(lang: &Language, rng: &mut R) -> Language {
    let mut messages = lang.messages.clone();
    messages.shuffle(rng);
    Language {
        objects: lang.objects.clone(),
        messages,
    }
}

pub fn generate_degenerate(spec: &SpaceSpec, m: &Message) -> Result<Language> {
    spec.check_message(m)?;
    Language::from_messages(spec, vec![m.clone(); spec.object_count()])
}

/// Places `lang` in the taxonomy; compositionality is decided by exhaustive
/// search over attribute-to-position assignments.
pub fn classify_language(spec: &SpaceSpec, lang: &Language) -> LanguageClass {
    let first = &lang.messages[0];
    if lang.messages.iter().all(|m| m == first) {
        return LanguageClass::Degenerate;
    }
    if !lang.is_injective() {
        return LanguageClass::AmbiguousWithDegenerateComponent;
    }
    let mut assignment = Vec::with_capacity(spec.n_attributes);
    let mut used = vec![false; spec.message_length];
    if search_assignment(spec, lang, &mut assignment, &mut used) {
        LanguageClass::Compositional
    } else {
        LanguageClass::Holistic
    }
}

fn search_assignment(
    spec: &SpaceSpec,
    lang: &Language,
    assignment: &mut Vec<usize>,
    used: &mut [bool],
) -> bool {
    if assignment.len() == spec.n_attributes {
        return explains(spec, lang, assignment, used);
    }
    for pos in 0..spec.message_length {
        if used[pos] {
            continue;
        }
        used[pos] = true;
        assignment.push(pos);
        let found = search_assignment(spec, lang, assignment, used);
        assignment.pop();
        used[pos] = false;
        if found {
            return true;
        }
    }
    false
}

/// Whether per-attribute injective tables at the given positions, with all
/// other positions constant, reproduce the language exactly.
fn explains(spec: &SpaceSpec, lang: &Language, assignment: &[usize], used: &[bool]) -> bool {
    let unassigned: Vec<usize> = (0..spec.message_length).filter(|&p| !used[p]).collect();
    let first = &lang.messages[0];
    if lang
        .messages
        .iter()
        .any(|m| unassigned.iter().any(|&p| m.0[p] != first.0[p]))
    {
        return false;
    }
    for (a, &pos) in assignment.iter().enumerate() {
        let mut table: Vec<Option<usize>> = vec![None; spec.n_values];
        for (x, m) in lang.iter() {
            let sym = m.0[pos];
            match table[x.0[a]] {
                None => table[x.0[a]] = Some(sym),
                Some(s) if s == sym => {}
                Some(_) => return false,
            }
        }
        let syms: HashSet<usize> = table.iter().flatten().copied().collect();
        if syms.len() != spec.n_values {
            return false;
        }
    }
    true
}

/// Exact sizes of the language classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageCounts {
    pub all: BigUint,
    pub unambiguous: BigUint,
    pub compositional: BigUint,
    pub holistic: BigUint,
    /// False when the message space is smaller than the object space.
    pub unambiguous_feasible: bool,
    /// False when `message_length < n_attributes` or `vocab_size < n_values`.
    pub compositional_feasible: bool,
}

/// `n · (n-1) ⋯ (n-k+1)`; zero when `k > n`.
pub fn falling_factorial(n: &BigUint, k: u64) -> BigUint {
    let mut acc = BigUint::one();
    let mut term = n.clone();
    for _ in 0..k {
        if term.is_zero() {
            return BigUint::zero();
        }
        acc *= &term;
        term -= 1u32;
    }
    acc
}

pub fn count_language_classes(spec: &SpaceSpec) -> LanguageCounts {
    let m = BigUint::from(spec.vocab_size).pow(spec.message_length as u32);
    let n = BigUint::from(spec.n_values).pow(spec.n_attributes as u32);
    let n_u64 = u64::try_from(&n).expect("object count fits in u64");

    let all = num_traits::pow(m.clone(), n_u64 as usize);
    let unambiguous_feasible = m >= n;
    let unambiguous = falling_factorial(&m, n_u64);

    let compositional_feasible =
        spec.message_length >= spec.n_attributes && spec.vocab_size >= spec.n_values;
    let compositional = if compositional_feasible {
        let positions = falling_factorial(
            &BigUint::from(spec.message_length),
            spec.n_attributes as u64,
        );
        let tables =
            falling_factorial(&BigUint::from(spec.vocab_size), spec.n_values as u64);
        positions * tables.pow(spec.n_attributes as u32)
    } else {
        BigUint::zero()
    };
    let holistic = if unambiguous >= compositional {
        &unambiguous - &compositional
    } else {
        BigUint::zero()
    };
    LanguageCounts {
        all,
        unambiguous,
        compositional,
        holistic,
        unambiguous_feasible,
        compositional_feasible,
    }
}

/// Every message of the spec in lexicographic order.
pub fn all_messages(spec: &SpaceSpec) -> Vec<Message> {
    let mut out = vec![vec![]];
    for _ in 0..spec.message_length {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..spec.vocab_size).map(move |s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(Message).collect()
}

/// Every language of the spec, provided there are at most `limit` of them.
pub fn enumerate_languages(spec: &SpaceSpec, limit: u64) -> Result<Vec<Language>> {
    let total = count_language_classes(spec).all;
    if total > BigUint::from(limit) {
        return Err(Error::Config(format!("{total} languages exceed the enumeration limit {limit}")));
    }
    let msgs = all_messages(spec);
    let n = spec.object_count();
    let total = usize::try_from(&total).expect("bounded by limit");
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; n];
    for _ in 0..total {
        out.push(Language::from_messages(spec, digits.iter().map(|&d| msgs[d].clone()).collect())?);
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < msgs.len() {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}

/// Class sizes obtained by classifying every language one by one.
pub fn count_by_enumeration(spec: &SpaceSpec, limit: u64) -> Result<LanguageCounts> {
    let formula = count_language_classes(spec);
    let mut c = [0u64; 4];
    for l in enumerate_languages(spec, limit)? {
        c[0] += 1;
        match classify_language(spec, &l) {
            LanguageClass::Compositional => {
                c[1] += 1;
                c[2] += 1;
            }
            LanguageClass::Holistic => {
                c[1] += 1;
                c[3] += 1;
            }
            _ => {}
        }
    }
    Ok(LanguageCounts {
        all: c[0].into(),
        unambiguous: c[1].into(),
        compositional: c[2].into(),
        holistic: c[3].into(),
        ..formula
    })
}

/// `size` independent uniform object-message pairs.
pub fn random_dataset<R: Rng + ?Sized>(spec: &SpaceSpec, size: usize, rng: &mut R) -> Dataset {
    Dataset::new(
        (0..size)
            .map(|_| DataPair {
                object: spec.object_at(rng.gen_range(0..spec.object_count())),
                message: random_message(spec, rng),
            })
            .collect(),
    )
}

/// Appended degenerate pairs are capped at this multiple of the original
/// dataset when `fraction` reaches 1.
pub const MAX_DEGENERATE_MULTIPLE: usize = 99;

/// Appends pairs from `degenerate_lang` (uniform objects) until they make up
/// at least `fraction` of the result.
pub fn mix_degenerate<R: Rng + ?Sized>(
    dataset: &Dataset,
    degenerate_lang: &Language,
    fraction: f64,
    rng: &mut R,
) -> Result<Dataset> {
    mix_pairs(dataset, Dataset::from_language(degenerate_lang).pairs(), fraction, rng)
}

/// Appends pairs drawn uniformly from `pool` until they make up at least
/// `fraction` of the result.
pub fn mix_pairs<R: Rng + ?Sized>(
    dataset: &Dataset,
    pool: &[DataPair],
    fraction: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if dataset.is_empty() || pool.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "degenerate fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = dataset.len();
    let extra = if fraction >= 1.0 {
        n * MAX_DEGENERATE_MULTIPLE
    } else {
        let k = (fraction * n as f64 / (1.0 - fraction)).ceil() as usize;
        // guard against the ceil landing one short through rounding
        if (k as f64) < fraction * (n + k) as f64 {
            k + 1
        } else {
            k
        }
    };
    let mut out = dataset.clone();
    for _ in 0..extra {
        out.push(pool[rng.gen_range(0..pool.len())].clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topsim::{topological_similarity, CorrelationKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn msg(s: &str) -> Message {
        Message(s.bytes().map(|b| (b - b'a') as usize).collect())
    }

    fn toy() -> SpaceSpec {
        SpaceSpec::new(2, 2, 2, 2).unwrap()
    }

    // Object order for the toy spec with (color, shape), blue=0 red=1, box=0 circle=1:
    // BB, BC, RB, RC.
    fn toy_lang(bb: &str, rb: &str, bc: &str, rc: &str) -> Language {
        Language::from_messages(&toy(), vec![msg(bb), msg(bc), msg(rb), msg(rc)]).unwrap()
    }

    fn brute_counts(spec: &SpaceSpec) -> [usize; 4] {
        let c = count_by_enumeration(spec, 1 << 20).unwrap();
        [&c.all, &c.unambiguous, &c.compositional, &c.holistic].map(|v| usize::try_from(v).unwrap())
    }

    #[test]
    fn toy_examples_classify() {
        let spec = toy();
        assert_eq!(
            classify_language(&spec, &toy_lang("aa", "ba", "ab", "bb")),
            LanguageClass::Compositional
        );
        assert_eq!(
            classify_language(&spec, &toy_lang("ba", "aa", "ab", "bb")),
            LanguageClass::Holistic
        );
        assert_eq!(
            classify_language(&spec, &toy_lang("aa", "bb", "aa", "bb")),
            LanguageClass::AmbiguousWithDegenerateComponent
        );
        let deg = generate_degenerate(&spec, &msg("aa")).unwrap();
        assert_eq!(classify_language(&spec, &deg), LanguageClass::Degenerate);
        assert!(deg.messages().iter().all(|m| *m == msg("aa")));
    }

    #[test]
    fn toy_counts_match_formulas_and_enumeration() {
        let c = count_language_classes(&toy());
        assert_eq!(c.all, BigUint::from(256u32));
        assert_eq!(c.unambiguous, BigUint::from(24u32));
        assert_eq!(c.compositional, BigUint::from(8u32));
        assert_eq!(c.holistic, BigUint::from(16u32));
        assert_eq!(brute_counts(&toy()), [256, 24, 8, 16]);
    }

    #[test]
    fn smallest_spec_counts() {
        let spec = SpaceSpec::new(1, 2, 1, 2).unwrap();
        let c = count_language_classes(&spec);
        assert_eq!(
            [&c.all, &c.unambiguous, &c.compositional, &c.holistic],
            [
                &BigUint::from(4u32),
                &BigUint::from(2u32),
                &BigUint::from(2u32),
                &BigUint::from(0u32)
            ]
        );
        assert_eq!(brute_counts(&spec), [4, 2, 2, 0]);
    }

    #[test]
    fn full_scale_counts_are_exact() {
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let c = count_language_classes(&spec);
        // 2 * (8!)^2, computed independently with u128
        let f8: u128 = (1..=8).product();
        assert_eq!(c.compositional, BigUint::from(2 * f8 * f8));
        assert_eq!(c.compositional, BigUint::from(3_251_404_800u64));
        assert_eq!(c.all, BigUint::from(64u32).pow(64));
        // 64! since M = N = 64
        let mut f64_ = BigUint::one();
        for k in 1..=64u32 {
            f64_ *= k;
        }
        assert_eq!(c.unambiguous, f64_);
        assert_eq!(c.holistic, &f64_ - &c.compositional);
    }

    #[test]
    fn infeasible_counts_are_flagged() {
        let spec = SpaceSpec::new(2, 4, 1, 3).unwrap();
        let c = count_language_classes(&spec);
        assert!(!c.unambiguous_feasible);
        assert!(!c.compositional_feasible);
        assert!(c.unambiguous.is_zero());
        assert!(c.compositional.is_zero());
        assert!(c.holistic.is_zero());
    }

    #[test]
    fn compositional_generator_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = toy();
        let mut seen = HashSet::new();
        for _ in 0..200 {
            let l = generate_compositional(&spec, &mut rng).unwrap();
            assert_eq!(classify_language(&spec, &l), LanguageClass::Compositional);
            seen.insert(l.messages().to_vec());
        }
        // all 8 toy compositional languages are reachable
        assert_eq!(seen.len(), 8);
        assert!(seen.contains(toy_lang("aa", "ba", "ab", "bb").messages()));

        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        for _ in 0..5 {
            let l = generate_compositional(&spec, &mut rng).unwrap();
            assert_eq!(
                topological_similarity(&spec, &l, CorrelationKind::Spearman).unwrap(),
                1.0
            );
        }
        assert!(generate_compositional(&SpaceSpec::new(3, 2, 2, 4).unwrap(), &mut rng).is_err());
        assert!(generate_compositional(&SpaceSpec::new(2, 4, 2, 3).unwrap(), &mut rng).is_err());
    }

    #[test]
    fn filler_positions_use_symbol_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = SpaceSpec::new(2, 3, 4, 3).unwrap();
        let l = generate_compositional(&spec, &mut rng).unwrap();
        let constant: Vec<usize> = (0..4)
            .filter(|&p| l.messages().iter().all(|m| m.0[p] == l.message(0).0[p]))
            .collect();
        assert_eq!(constant.len(), 2);
        assert!(constant.iter().all(|&p| l.message(0).0[p] == 0));
        assert_eq!(classify_language(&spec, &l), LanguageClass::Compositional);
    }

    #[test]
    fn permutation_preserves_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let l = generate_compositional(&spec, &mut rng).unwrap();
        let p = permute_language(&l, &mut rng);
        assert!(p.is_injective());
        let mut a = l.messages().to_vec();
        let mut b = p.messages().to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let mean: f64 = (0..100)
            .map(|_| {
                let p = permute_language(&l, &mut rng);
                topological_similarity(&spec, &p, CorrelationKind::Spearman).unwrap()
            })
            .sum::<f64>()
            / 100.0;
        // object and message distances are exchangeable under a uniform shuffle
        assert!(mean.abs() < 0.05, "mean permuted rho {mean}");
    }

    #[test]
    fn random_dataset_is_valid_and_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let d = random_dataset(&spec, 10, &mut rng);
        assert_eq!(d.len(), 10);
        let d = random_dataset(&spec, 8000, &mut rng);
        let mut counts = [0usize; 8];
        for p in d.pairs() {
            spec.check_object(&p.object).unwrap();
            for &s in p.message.symbols() {
                counts[s] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / 16000.0 - 0.125).abs() < 0.015);
        }
    }

    #[test]
    fn degenerate_mixing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let d = random_dataset(&spec, 100, &mut rng);
        let deg_msg = Message(vec![7, 7]);
        let deg = generate_degenerate(&spec, &deg_msg).unwrap();
        let mixed = mix_degenerate(&d, &deg, 0.5, &mut rng).unwrap();
        assert_eq!(mixed.len(), 200);
        assert!(mixed.pairs()[100..].iter().all(|p| p.message == deg_msg));
        let mixed = mix_degenerate(&d, &deg, 0.6, &mut rng).unwrap();
        let k = mixed.len() - 100;
        assert!(k as f64 / mixed.len() as f64 >= 0.6);
        let mixed = mix_degenerate(&d, &deg, 1.0, &mut rng).unwrap();
        assert_eq!(mixed.len(), 100 * (1 + MAX_DEGENERATE_MULTIPLE));
        assert!(mix_degenerate(&Dataset::default(), &deg, 0.5, &mut rng).is_err());
        assert!(mix_degenerate(&d, &deg, 0.0, &mut rng).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
        let l = generate_compositional(&spec, &mut rng).unwrap();
        let mut buf = Vec::new();
        l.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 64);
        assert!(text.starts_with("{\"object\":[0,0],\"message\":["));
        assert_eq!(Language::read_jsonl(&spec, &buf[..]).unwrap(), l);

        let mut bad = text.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert!(Language::read_jsonl(&spec, bad.as_bytes()).is_err());
        bad.push_str("\n{\"object\":[9,0],\"message\":[0,0]}");
        assert!(Language::read_jsonl(&spec, bad.as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn generated_compositional_languages_classify_and_score(
            na in 1usize..=3, nv in 2usize..=4, extra_len in 0usize..=1,
            extra_vocab in 0usize..=8, seed in any::<u64>(),
        ) {
            let spec = SpaceSpec::new(na, nv, na + extra_len, nv + extra_vocab).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = generate_compositional(&spec, &mut rng).unwrap();
            prop_assert_eq!(classify_language(&spec, &l), LanguageClass::Compositional);
            let disjoint_ok = spec.vocab_size
                >= na * nv + usize::from(spec.message_length > na);
            if na >= 2 && (spec.message_length <= 2 || disjoint_ok) {
                let rho = topological_similarity(&spec, &l, CorrelationKind::Spearman).unwrap();
                prop_assert_eq!(rho, 1.0);
            }
        }
    }
}
