//! A small two-genre toy language and length-binned corpora drawn from it.
//!
//! Sentences are clauses `Det [Adj] N [Adv] V Det [Adj] N [Prep Det [Adj] N]`
//! joined by conjunctions. Generation picks the exact word count first and
//! then fills optional slots to hit it, so every length bin is reachable.

use std::collections::HashSet;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_jsonl};
use crate::tokenizer::{encode_text, TokenSeq, Vocab, UNK};

/// Half-open word-count bins; the last one is closed at 100.
pub const LENGTH_BINS: [(usize, usize); 8] = [
    (5, 10),
    (10, 15),
    (15, 20),
    (20, 25),
    (25, 30),
    (30, 35),
    (35, 40),
    (40, 100),
];

pub const MIN_LEN: usize = 5;
pub const MAX_LEN: usize = 100;

pub fn bin_of(len: usize) -> Option<usize> {
    if len == MAX_LEN {
        return Some(LENGTH_BINS.len() - 1);
    }
    LENGTH_BINS
        .iter()
        .position(|&(lo, hi)| len >= lo && len < hi)
}

pub fn bin_label(bin: usize) -> String {
    let (lo, hi) = LENGTH_BINS[bin];
    format!("{lo}-{hi}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub genre: String,
    pub text: String,
    pub tokens: TokenSeq,
    pub length: usize,
    pub bin: usize,
}

impl SentenceRecord {
    pub fn new(id: String, genre: String, text: String, tokens: TokenSeq) -> Result<Self> {
        let length = tokens.len();
        let bin = bin_of(length).ok_or_else(|| {
            Error::InvalidTokens(format!("sentence {id} has {length} words, outside 5..=100"))
        })?;
        Ok(Self {
            id,
            genre,
            text,
            tokens,
            length,
            bin,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.length || bin_of(self.length) != Some(self.bin) {
            return Err(Error::InvalidTokens(format!(
                "record {} has inconsistent length or bin",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// `counts[b]` sentences in bin `b`, dealt round-robin across genres.
    Binned { counts: Vec<usize> },
    /// `per_genre` sentences per genre with lengths uniform in `min..=max`.
    Range {
        min: usize,
        max: usize,
        per_genre: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub layout: Layout,
    pub genres: Vec<String>,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn binned(per_bin: usize, genres: &[&str], seed: u64) -> Self {
        Self {
            layout: Layout::Binned {
                counts: vec![per_bin; LENGTH_BINS.len()],
            },
            genres: genres.iter().map(|g| g.to_string()).collect(),
            seed,
        }
    }

    pub fn range(min: usize, max: usize, per_genre: usize, genres: &[&str], seed: u64) -> Self {
        Self {
            layout: Layout::Range {
                min,
                max,
                per_genre,
            },
            genres: genres.iter().map(|g| g.to_string()).collect(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.genres.is_empty() {
            return Err(Error::Config("corpus needs at least one genre".into()));
        }
        match &self.layout {
            Layout::Binned { counts } if counts.len() != LENGTH_BINS.len() => {
                Err(Error::Config(format!(
                    "expected {} bin counts, got {}",
                    LENGTH_BINS.len(),
                    counts.len()
                )))
            }
            Layout::Range { min, max, .. } if *min < MIN_LEN || max < min || *max > MAX_LEN => Err(
                Error::Config(format!("length range {min}..={max} outside 5..=100")),
            ),
            _ => Ok(()),
        }
    }

    /// (genre index, length range) for every requested sentence, in order.
    fn slots(&self) -> Vec<(usize, usize, usize)> {
        let g = self.genres.len();
        match &self.layout {
            Layout::Binned { counts } => {
                let mut out = Vec::new();
                for (b, &c) in counts.iter().enumerate() {
                    let (lo, hi) = LENGTH_BINS[b];
                    let hi = if b == LENGTH_BINS.len() - 1 {
                        hi
                    } else {
                        hi - 1
                    };
                    out.extend((0..c).map(|j| (j % g, lo, hi)));
                }
                out
            }
            Layout::Range {
                min,
                max,
                per_genre,
            } => (0..g)
                .flat_map(|gi| (0..*per_genre).map(move |_| (gi, *min, *max)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreLexicon {
    pub name: String,
    pub nouns: Vec<String>,
    pub verbs: Vec<String>,
    pub adjectives: Vec<String>,
    pub prepositions: Vec<String>,
    pub conjunctions: Vec<String>,
    /// Verbs a noun can take as subject (indices into `verbs`).
    pub noun_verbs: Vec<Vec<usize>>,
    /// Adjectives a noun accepts.
    pub noun_adjectives: Vec<Vec<usize>>,
    /// Prepositions a verb licenses.
    pub verb_prepositions: Vec<Vec<usize>>,
}

impl GenreLexicon {
    /// Builds the selection tables from a fixed seed.
    pub fn new(
        name: &str,
        nouns: &str,
        verbs: &str,
        adjectives: &str,
        prepositions: &str,
        conjunctions: &str,
        seed: u64,
    ) -> Self {
        let (nouns, verbs, adjectives, prepositions) = (
            words(nouns),
            words(verbs),
            words(adjectives),
            words(prepositions),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = |rows: usize, of: usize, k: usize| -> Vec<Vec<usize>> {
            (0..rows)
                .map(|_| rand::seq::index::sample(&mut rng, of, k.min(of)).into_vec())
                .collect()
        };
        let noun_verbs = table(nouns.len(), verbs.len(), 3);
        let noun_adjectives = table(nouns.len(), adjectives.len(), 2);
        let verb_prepositions = table(verbs.len(), prepositions.len(), 2);
        Self {
            name: name.into(),
            nouns,
            verbs,
            adjectives,
            prepositions,
            conjunctions: words(conjunctions),
            noun_verbs,
            noun_adjectives,
            verb_prepositions,
        }
    }
}

/// Sentences are clauses `NP V NP [P NP]` joined by conjunctions. A noun
/// phrase either introduces an entity (`a [Adj] N`) or refers back to one
/// already mentioned (`the N`); verbs, adjectives and prepositions are
/// restricted by the word they attach to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGrammar {
    pub new_determiner: String,
    pub old_determiner: String,
    pub genres: Vec<GenreLexicon>,
    pub max_clauses: usize,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

impl Default for ToyGrammar {
    fn default() -> Self {
        Self {
            new_determiner: "a".into(),
            old_determiner: "the".into(),
            genres: vec![
                GenreLexicon::new(
                    "tale",
                    "king fox girl wolf castle forest river bird queen witch dragon boy giant sword tower horse",
                    "saw found loved chased feared met followed crossed",
                    "old little dark brave golden quiet",
                    "near under beyond into",
                    "and then",
                    11,
                ),
                GenreLexicon::new(
                    "news",
                    "minister council market company report city bank court union player team voter budget senate factory mayor",
                    "announced rejected approved reported signed criticized won funded",
                    "new local national annual major public",
                    "in after before during",
                    "but while",
                    12,
                ),
            ],
            max_clauses: 20,
        }
    }
}

/// Zipf-like weights so the language has a learnable skew.
fn pick_index<R: Rng>(rng: &mut R, n: usize) -> usize {
    let w: Vec<f64> = (0..n).map(|r| 1.0 / (r as f64 + 1.5)).collect();
    WeightedIndex::new(&w).expect("nonempty choice").sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Np {
    New,
    NewAdj,
    Old,
}

impl Np {
    const ALL: [Np; 3] = [Np::New, Np::NewAdj, Np::Old];

    fn len(self) -> usize {
        match self {
            Np::NewAdj => 3,
            _ => 2,
        }
    }
}

const CLAUSE_MIN: usize = 5;
const CLAUSE_MAX: usize = 11;

impl ToyGrammar {
    pub fn genre(&self, name: &str) -> Option<&GenreLexicon> {
        self.genres.iter().find(|g| g.name == name)
    }

    pub fn min_len(&self) -> usize {
        CLAUSE_MIN
    }

    /// Longest reachable sentence, capped at the corpus maximum.
    pub fn max_len(&self) -> usize {
        let c = self.max_clauses.max(1);
        (c * CLAUSE_MAX + (c - 1)).min(MAX_LEN)
    }

    /// Every terminal, each once, in a fixed order. Feeding this to
    /// `build_vocab` gives the closed vocabulary of the language.
    pub fn lexicon_text(&self) -> String {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut add = |list: &[String]| {
            for w in list {
                if seen.insert(w.clone()) {
                    out.push(w.clone());
                }
            }
        };
        add(&[self.new_determiner.clone(), self.old_determiner.clone()]);
        for g in &self.genres {
            add(&g.nouns);
            add(&g.verbs);
            add(&g.adjectives);
            add(&g.prepositions);
            add(&g.conjunctions);
        }
        out.join(" ")
    }

    fn noun_phrase<R: Rng>(
        &self,
        g: &GenreLexicon,
        kind: Np,
        mentioned: &mut Vec<usize>,
        out: &mut Vec<String>,
        rng: &mut R,
    ) -> usize {
        match kind {
            Np::Old => {
                let n = mentioned[rng.random_range(0..mentioned.len())];
                out.push(self.old_determiner.clone());
                out.push(g.nouns[n].clone());
                n
            }
            Np::New | Np::NewAdj => {
                let fresh: Vec<usize> = (0..g.nouns.len())
                    .filter(|n| !mentioned.contains(n))
                    .collect();
                let n = fresh[pick_index(rng, fresh.len())];
                out.push(self.new_determiner.clone());
                if kind == Np::NewAdj {
                    let adjs = &g.noun_adjectives[n];
                    out.push(g.adjectives[adjs[pick_index(rng, adjs.len())]].clone());
                }
                out.push(g.nouns[n].clone());
                mentioned.push(n);
                n
            }
        }
    }

    /// A sentence of exactly `len` words, or `None` if this draw ran into a
    /// dead end.
    pub fn sentence<R: Rng>(&self, genre: &str, len: usize, rng: &mut R) -> Option<Vec<String>> {
        let g = self.genre(genre)?;
        if len < CLAUSE_MIN || len > self.max_len() {
            return None;
        }
        let mut mentioned: Vec<usize> = Vec::new();
        let mut out = Vec::with_capacity(len);
        let mut clauses = 0;
        while out.len() < len {
            if clauses == self.max_clauses {
                return None;
            }
            if clauses > 0 {
                let c = &g.conjunctions;
                out.push(c[pick_index(rng, c.len())].clone());
            }
            let rem = len - out.len();
            let mut shapes = Vec::new();
            for s in Np::ALL {
                for o in Np::ALL {
                    for p in [None, Some(Np::New), Some(Np::NewAdj), Some(Np::Old)] {
                        let kinds = [Some(s), Some(o), p];
                        let fresh = kinds.iter().flatten().filter(|k| **k != Np::Old).count();
                        if fresh + mentioned.len() > g.nouns.len() {
                            continue;
                        }
                        if mentioned.is_empty() && s == Np::Old {
                            continue;
                        }
                        let l = s.len() + 1 + o.len() + p.map_or(0, |p| 1 + p.len());
                        if l == rem || (l < rem && rem - l > CLAUSE_MIN) {
                            shapes.push((s, o, p));
                        }
                    }
                }
            }
            if shapes.is_empty() {
                return None;
            }
            let (s, o, p) = shapes[rng.random_range(0..shapes.len())];
            let subj = self.noun_phrase(g, s, &mut mentioned, &mut out, rng);
            let vs = &g.noun_verbs[subj];
            let v = vs[pick_index(rng, vs.len())];
            out.push(g.verbs[v].clone());
            self.noun_phrase(g, o, &mut mentioned, &mut out, rng);
            if let Some(p) = p {
                let ps = &g.verb_prepositions[v];
                out.push(g.prepositions[ps[pick_index(rng, ps.len())]].clone());
                self.noun_phrase(g, p, &mut mentioned, &mut out, rng);
            }
            clauses += 1;
        }
        debug_assert_eq!(out.len(), len);
        Some(out)
    }
}

fn check_reachable(g: &ToyGrammar, spec: &CorpusSpec) -> Result<()> {
    match &spec.layout {
        Layout::Binned { counts } => {
            for (b, &c) in counts.iter().enumerate() {
                let (lo, _) = LENGTH_BINS[b];
                if c > 0 && (lo > g.max_len()) {
                    return Err(Error::UnreachableBin { bin: bin_label(b) });
                }
            }
        }
        Layout::Range { min, .. } => {
            if *min > g.max_len() {
                return Err(Error::UnreachableBin {
                    bin: format!("{min}-"),
                });
            }
        }
    }
    Ok(())
}

/// Draws a corpus, skipping any sentence in `exclude` or already drawn.
pub fn gen_corpus_excluding(
    g: &ToyGrammar,
    vocab: &Vocab,
    spec: &CorpusSpec,
    exclude: &HashSet<Vec<u32>>,
) -> Result<Vec<SentenceRecord>> {
    spec.validate()?;
    for name in &spec.genres {
        if g.genre(name).is_none() {
            return Err(Error::Config(format!("grammar has no genre {name:?}")));
        }
    }
    check_reachable(g, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut out = Vec::new();
    for (idx, (gi, lo, hi)) in spec.slots().into_iter().enumerate() {
        let genre = &spec.genres[gi];
        let hi = hi.min(g.max_len());
        let mut tries = 0;
        loop {
            tries += 1;
            if tries > 10_000 {
                return Err(Error::UnreachableBin {
                    bin: format!("{lo}-{hi} ({genre}, no new sentences)"),
                });
            }
            let len = rng.random_range(lo..=hi);
            let Some(ws) = g.sentence(genre, len, &mut rng) else {
                continue;
            };
            let text = ws.join(" ");
            let tokens = encode_text(vocab, &text)?;
            if tokens.ids().contains(&UNK) {
                return Err(Error::Config(format!("vocabulary does not cover {text:?}")));
            }
            if exclude.contains(tokens.ids()) || !seen.insert(tokens.ids().to_vec()) {
                continue;
            }
            out.push(SentenceRecord::new(
                format!("{genre}-{idx:04}"),
                genre.clone(),
                text,
                tokens,
            )?);
            break;
        }
    }
    Ok(out)
}

pub fn gen_corpus(g: &ToyGrammar, vocab: &Vocab, spec: &CorpusSpec) -> Result<Vec<SentenceRecord>> {
    gen_corpus_excluding(g, vocab, spec, &HashSet::new())
}

pub fn token_set(records: &[SentenceRecord]) -> HashSet<Vec<u32>> {
    records.iter().map(|r| r.tokens.ids().to_vec()).collect()
}

/// I.i.d. uniform non-special tokens, lengths uniform within each slot.
pub fn gen_gibberish(vocab: &Vocab, spec: &CorpusSpec) -> Result<Vec<SentenceRecord>> {
    spec.validate()?;
    let ids = vocab.word_ids();
    if ids.is_empty() {
        return Err(Error::Config("vocabulary has no words".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    for (idx, (_, lo, hi)) in spec.slots().into_iter().enumerate() {
        let len = rng.random_range(lo..=hi);
        let toks: Vec<u32> = (0..len).map(|_| rng.random_range(ids.clone())).collect();
        let text = crate::tokenizer::decode_ids(vocab, &toks)?;
        out.push(SentenceRecord::new(
            format!("gibberish-{idx:04}"),
            "gibberish".into(),
            text,
            TokenSeq::new(toks)?,
        )?);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[SentenceRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_corpus(path: &Path) -> Result<Vec<SentenceRecord>> {
    let recs: Vec<SentenceRecord> = read_jsonl(path)?;
    for r in &recs {
        r.validate()?;
    }
    Ok(recs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::build_vocab;

    fn setup() -> (ToyGrammar, Vocab) {
        let g = ToyGrammar::default();
        let v = build_vocab(&g.lexicon_text()).unwrap();
        (g, v)
    }

    #[test]
    fn bins() {
        assert_eq!(bin_of(4), None);
        assert_eq!(bin_of(5), Some(0));
        assert_eq!(bin_of(9), Some(0));
        assert_eq!(bin_of(10), Some(1));
        assert_eq!(bin_of(39), Some(6));
        assert_eq!(bin_of(40), Some(7));
        assert_eq!(bin_of(100), Some(7));
        assert_eq!(bin_of(101), None);
    }

    #[test]
    fn every_length_is_exact() {
        let (g, _) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for len in 5..=100 {
            for genre in ["tale", "news"] {
                let s = (0..50)
                    .find_map(|_| g.sentence(genre, len, &mut rng))
                    .unwrap();
                assert_eq!(s.len(), len);
            }
        }
        assert!(g.sentence("tale", 4, &mut rng).is_none());
    }

    #[test]
    fn binned_quota_and_determinism() {
        let (g, v) = setup();
        let spec = CorpusSpec::binned(8, &["tale", "news"], 3);
        let c = gen_corpus(&g, &v, &spec).unwrap();
        assert_eq!(c.len(), 64);
        for b in 0..8 {
            let in_bin: Vec<_> = c.iter().filter(|r| r.bin == b).collect();
            assert_eq!(in_bin.len(), 8);
            assert_eq!(in_bin.iter().filter(|r| r.genre == "tale").count(), 4);
        }
        assert!(c.iter().all(|r| r.validate().is_ok()));
        assert_eq!(c, gen_corpus(&g, &v, &spec).unwrap());
    }

    #[test]
    fn disjoint_draws() {
        let (g, v) = setup();
        let src = gen_corpus(&g, &v, &CorpusSpec::range(5, 20, 16, &["tale", "news"], 1)).unwrap();
        let lrc = gen_corpus_excluding(
            &g,
            &v,
            &CorpusSpec::binned(8, &["tale", "news"], 1),
            &token_set(&src),
        )
        .unwrap();
        assert!(token_set(&src).is_disjoint(&token_set(&lrc)));
        assert_eq!(token_set(&src).len(), 32);
    }

    #[test]
    fn unreachable_bin_is_named() {
        let (mut g, v) = setup();
        g.max_clauses = 1;
        match gen_corpus(&g, &v, &CorpusSpec::binned(1, &["tale"], 0)) {
            Err(Error::UnreachableBin { bin }) => assert_eq!(bin, "15-20"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gibberish_shape() {
        let (_, v) = setup();
        let c = gen_gibberish(&v, &CorpusSpec::binned(8, &["gibberish"], 2)).unwrap();
        assert_eq!(c.len(), 64);
        assert!(c
            .iter()
            .all(|r| r.genre == "gibberish" && r.validate().is_ok()));
        assert!(c.iter().all(|r| r.tokens.ids().iter().all(|&t| t > 2)));
    }

    #[test]
    fn corpus_file_roundtrip() {
        let (g, v) = setup();
        let c = gen_corpus(&g, &v, &CorpusSpec::range(5, 9, 3, &["news"], 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        write_corpus(&p, &c).unwrap();
        assert_eq!(read_corpus(&p).unwrap(), c);
    }
}
