//! Encode, recover and score every (d', sentence, init) item, then reduce the
//! records into per-cell and per-dimension summaries.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpora::{bin_label, SentenceRecord};
use crate::encoder::{encode_init, init_seed, EncodeConfig, StopReason};
use crate::error::{Error, Result};
use crate::injection::{InjectionConfig, InjectionSpec};
use crate::linalg::Real;
use crate::metrics::{aggregate, score, AggregateMetrics, MetricSet};
use crate::model::ModelWeights;
use crate::recovery::{recover, DecodeConfig, Termination};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemKey {
    pub d_prime: usize,
    pub sentence_id: String,
    pub init: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub best_loss: f64,
    pub best_step: usize,
    pub steps: usize,
    pub stop_reason: StopReason,
    pub final_lr: f64,
    /// Best-loss latent, row-major `(d'/k) × k`.
    pub latent: Vec<f64>,
    pub recovered: Vec<u32>,
    pub terminated_by: Termination,
    pub metrics: MetricSet,
    pub loss_trace: Vec<f64>,
}

/// One line of a sweep file. Exactly one of `result` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub d_prime: usize,
    pub sentence_id: String,
    pub genre: String,
    pub bin: usize,
    pub length: usize,
    pub init: usize,
    pub seed: u64,
    pub result: Option<ItemResult>,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn key(&self) -> ItemKey {
        ItemKey {
            d_prime: self.d_prime,
            sentence_id: self.sentence_id.clone(),
            init: self.init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    /// Template whose `d_prime` is replaced per dimension.
    pub injection: InjectionConfig,
    pub encode: EncodeConfig,
    pub decode: DecodeConfig,
    pub d_primes: Vec<usize>,
}

impl SweepPlan {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.d_primes.is_empty() {
            return Err(Error::Config("empty d' list".into()));
        }
        for &dp in &self.d_primes {
            self.config_for(dp).validate(d)?;
        }
        self.encode.validate()?;
        self.decode.validate()
    }

    pub fn config_for(&self, d_prime: usize) -> InjectionConfig {
        InjectionConfig {
            d_prime,
            ..self.injection.clone()
        }
    }
}

/// Per-sentence base seed, so reordering or subsetting the corpus leaves
/// every other item's trajectory unchanged.
pub fn item_seed(base: u64, d_prime: usize, sentence_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in sentence_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    base ^ h ^ (d_prime as u64).wrapping_mul(0xd6e8_feb8_6659_fd93)
}

/// All items in canonical order: d', then corpus order, then init.
pub fn sweep_items(corpus: &[SentenceRecord], plan: &SweepPlan) -> Vec<(usize, usize, usize)> {
    let mut items = Vec::new();
    for &dp in &plan.d_primes {
        for s in 0..corpus.len() {
            for i in 0..plan.encode.n_inits {
                items.push((dp, s, i));
            }
        }
    }
    items
}

fn run_item<T: Real>(
    w: &ModelWeights<T>,
    spec: &InjectionSpec<T>,
    plan: &SweepPlan,
    sent: &SentenceRecord,
    init: usize,
) -> SweepRecord {
    let dp = spec.config.d_prime;
    let enc = EncodeConfig {
        seed: item_seed(plan.encode.seed, dp, &sent.id),
        ..plan.encode.clone()
    };
    let mut rec = SweepRecord {
        d_prime: dp,
        sentence_id: sent.id.clone(),
        genre: sent.genre.clone(),
        bin: sent.bin,
        length: sent.length,
        init,
        seed: init_seed(enc.seed, init),
        result: None,
        error: None,
    };
    let outcome = (|| -> Result<ItemResult> {
        let r = encode_init(w, &sent.tokens, spec, &enc, init)?;
        let out = recover(w, spec, &r.best_z, &plan.decode)?;
        Ok(ItemResult {
            best_loss: r.best_loss,
            best_step: r.best_step,
            steps: r.steps,
            stop_reason: r.stop_reason,
            final_lr: r.final_lr,
            latent: r.best_z.to_f64(),
            metrics: score(sent.tokens.ids(), &out.tokens)?,
            recovered: out.tokens,
            terminated_by: out.terminated_by,
            loss_trace: r.loss_trace,
        })
    })();
    match outcome {
        Ok(r) if r.stop_reason == StopReason::NonFinite => {
            rec.error = Some(format!("non-finite loss or gradient at step {}", r.steps))
        }
        Ok(r) => rec.result = Some(r),
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Runs every item not in `done`, handing records to `sink` in canonical
/// order. Items run in parallel in chunks; a chunk is emitted only once all
/// of it has finished, so an interrupted sweep leaves a clean prefix.
pub fn run_sweep<T: Real>(
    w: &ModelWeights<T>,
    corpus: &[SentenceRecord],
    plan: &SweepPlan,
    done: &HashSet<ItemKey>,
    mut sink: impl FnMut(&SweepRecord) -> Result<()>,
) -> Result<usize> {
    plan.validate(w.config.d)?;
    let mut specs = BTreeMap::new();
    for &dp in &plan.d_primes {
        specs.insert(
            dp,
            InjectionSpec::<T>::build(plan.config_for(dp), &w.config)?,
        );
    }
    let todo: Vec<_> = sweep_items(corpus, plan)
        .into_iter()
        .filter(|&(dp, s, i)| {
            !done.contains(&ItemKey {
                d_prime: dp,
                sentence_id: corpus[s].id.clone(),
                init: i,
            })
        })
        .collect();
    let chunk = (rayon::current_num_threads() * 2).max(1);
    let mut written = 0;
    for part in todo.chunks(chunk) {
        let recs: Vec<SweepRecord> = part
            .par_iter()
            .map(|&(dp, s, i)| run_item(w, &specs[&dp], plan, &corpus[s], i))
            .collect();
        for r in &recs {
            sink(r)?;
        }
        written += recs.len();
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub config_hash: String,
    pub weights_hash: String,
    pub seed: u64,
    pub n_inits: usize,
}

/// Means over sentences of the per-sentence init aggregates, and the spread
/// of the init-mean scores across sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub d_prime: usize,
    pub bin: usize,
    pub bin_label: String,
    pub genre: String,
    pub n_sentences: usize,
    pub mean: AggregateMetrics,
    pub em_std: f64,
    pub pm_std: f64,
    pub bleu_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSummary {
    pub d_prime: usize,
    /// Macro-average over genres of the per-genre BLEU means.
    pub bleu_bar: f64,
    /// Per-genre means over sentences.
    pub genres: BTreeMap<String, AggregateMetrics>,
    /// Unweighted average of the genre means; its `bleu` is `bleu_bar`.
    pub macro_mean: AggregateMetrics,
    /// Pooled over all sentences, ignoring genre.
    pub mean: AggregateMetrics,
    pub bleu_std: f64,
    /// Share of sentences whose best init reaches BLEU 100.
    pub perfect_share: f64,
    pub n_sentences: usize,
    pub n_records: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub d_prime: usize,
    pub sentence_id: String,
    pub init: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<CellSummary>,
    pub dims: Vec<DimSummary>,
    pub failures: Vec<Failure>,
    pub meta: Option<SweepMeta>,
}

impl SweepReport {
    pub fn dim(&self, d_prime: usize) -> Option<&DimSummary> {
        self.dims.iter().find(|d| d.d_prime == d_prime)
    }

    pub fn bleu_bars(&self) -> Vec<(usize, f64)> {
        self.dims.iter().map(|d| (d.d_prime, d.bleu_bar)).collect()
    }

    /// Init-mean BLEU averaged over every sentence of `bin` at `d_prime`.
    pub fn bin_bleu(&self, d_prime: usize, bin: usize) -> Option<f64> {
        let cells: Vec<_> = self
            .cells
            .iter()
            .filter(|c| c.d_prime == d_prime && c.bin == bin)
            .collect();
        let n: usize = cells.iter().map(|c| c.n_sentences).sum();
        if n == 0 {
            return None;
        }
        Some(
            cells
                .iter()
                .map(|c| c.mean.bleu * c.n_sentences as f64)
                .sum::<f64>()
                / n as f64,
        )
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mean_of(aggs: &[AggregateMetrics]) -> AggregateMetrics {
    let n = aggs.len() as f64;
    let m = |f: fn(&AggregateMetrics) -> f64| aggs.iter().map(f).sum::<f64>() / n;
    AggregateMetrics {
        n: aggs.len(),
        em: m(|a| a.em),
        pm: m(|a| a.pm),
        bleu: m(|a| a.bleu),
        em_max: m(|a| a.em_max),
        pm_max: m(|a| a.pm_max),
        bleu_max: m(|a| a.bleu_max),
    }
}

struct SentenceAgg<'a> {
    genre: &'a str,
    bin: usize,
    agg: AggregateMetrics,
}

/// Reduces sweep records. Failed records are listed and excluded from the
/// averages; a sentence with no successful init drops out of its cell.
pub fn build_report(records: &[SweepRecord], meta: Option<SweepMeta>) -> Result<SweepReport> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.key()) {
            return Err(Error::Mismatch(format!(
                "duplicate record for d'={} sentence {} init {}",
                r.d_prime, r.sentence_id, r.init
            )));
        }
    }
    let mut by_sentence: BTreeMap<usize, BTreeMap<&str, Vec<&SweepRecord>>> = BTreeMap::new();
    let mut order: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    let mut failures = Vec::new();
    for r in records {
        let per = by_sentence.entry(r.d_prime).or_default();
        if !per.contains_key(r.sentence_id.as_str()) {
            order.entry(r.d_prime).or_default().push(&r.sentence_id);
        }
        per.entry(&r.sentence_id).or_default().push(r);
        if let Some(e) = &r.error {
            failures.push(Failure {
                d_prime: r.d_prime,
                sentence_id: r.sentence_id.clone(),
                init: r.init,
                error: e.clone(),
            });
        }
    }
    let mut cells = Vec::new();
    let mut dims = Vec::new();
    for (&dp, per) in &by_sentence {
        let mut sents = Vec::new();
        for id in &order[&dp] {
            let recs = &per[id];
            let ms: Vec<MetricSet> = recs
                .iter()
                .filter_map(|r| r.result.as_ref().map(|x| x.metrics))
                .collect();
            if ms.is_empty() {
                continue;
            }
            sents.push(SentenceAgg {
                genre: &recs[0].genre,
                bin: recs[0].bin,
                agg: aggregate(&ms)?,
            });
        }
        let n_records: usize = per.values().map(|v| v.len()).sum();
        let n_failed = failures.iter().filter(|f| f.d_prime == dp).count();
        let mut groups: BTreeMap<(usize, &str), Vec<AggregateMetrics>> = BTreeMap::new();
        let mut by_genre: BTreeMap<&str, Vec<AggregateMetrics>> = BTreeMap::new();
        for s in &sents {
            groups.entry((s.bin, s.genre)).or_default().push(s.agg);
            by_genre.entry(s.genre).or_default().push(s.agg);
        }
        for ((bin, genre), aggs) in &groups {
            let col = |f: fn(&AggregateMetrics) -> f64| aggs.iter().map(f).collect::<Vec<_>>();
            cells.push(CellSummary {
                d_prime: dp,
                bin: *bin,
                bin_label: bin_label(*bin),
                genre: genre.to_string(),
                n_sentences: aggs.len(),
                mean: mean_of(aggs),
                em_std: mean_std(&col(|a| a.em)).1,
                pm_std: mean_std(&col(|a| a.pm)).1,
                bleu_std: mean_std(&col(|a| a.bleu)).1,
            });
        }
        if sents.is_empty() {
            continue;
        }
        let genres: BTreeMap<String, AggregateMetrics> = by_genre
            .iter()
            .map(|(g, v)| (g.to_string(), mean_of(v)))
            .collect();
        let macro_mean = mean_of(&genres.values().copied().collect::<Vec<_>>());
        let all: Vec<AggregateMetrics> = sents.iter().map(|s| s.agg).collect();
        let bleus: Vec<f64> = all.iter().map(|a| a.bleu).collect();
        dims.push(DimSummary {
            d_prime: dp,
            bleu_bar: macro_mean.bleu,
            genres,
            macro_mean,
            mean: mean_of(&all),
            bleu_std: mean_std(&bleus).1,
            perfect_share: all.iter().filter(|a| a.bleu_max >= 100.0).count() as f64
                / all.len() as f64,
            n_sentences: all.len(),
            n_records,
            n_failed,
        });
    }
    Ok(SweepReport {
        cells,
        dims,
        failures,
        meta,
    })
}

/// Runs a whole sweep in memory and reduces it.
pub fn sweep_dimension<T: Real>(
    w: &ModelWeights<T>,
    corpus: &[SentenceRecord],
    plan: &SweepPlan,
) -> Result<(Vec<SweepRecord>, SweepReport)> {
    let mut records = Vec::new();
    run_sweep(w, corpus, plan, &HashSet::new(), |r| {
        records.push(r.clone());
        Ok(())
    })?;
    let report = build_report(&records, None)?;
    Ok((records, report))
}

/// Per sentence at `d_prime`, the latent of the init with the highest BLEU;
/// ties go to the lowest init index. Sentences appear in first-seen order.
pub fn select_best_latents(
    records: &[SweepRecord],
    d_prime: usize,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut order = Vec::new();
    let mut best: BTreeMap<&str, (usize, f64, &[f64])> = BTreeMap::new();
    let mut ids = BTreeSet::new();
    for r in records.iter().filter(|r| r.d_prime == d_prime) {
        if ids.insert(r.sentence_id.as_str()) {
            order.push(r.sentence_id.as_str());
        }
        let Some(res) = &r.result else { continue };
        let cand = (r.init, res.metrics.bleu, res.latent.as_slice());
        best.entry(&r.sentence_id)
            .and_modify(|b| {
                if cand.1 > b.1 || (cand.1 == b.1 && cand.0 < b.0) {
                    *b = cand;
                }
            })
            .or_insert(cand);
    }
    order
        .into_iter()
        .map(|id| {
            best.get(id)
                .map(|b| (id.to_string(), b.2.to_vec()))
                .ok_or_else(|| Error::Mismatch(format!("sentence {id} has no successful init")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(dp: usize, id: &str, genre: &str, init: usize, bleu: f64) -> SweepRecord {
        SweepRecord {
            d_prime: dp,
            sentence_id: id.into(),
            genre: genre.into(),
            bin: 0,
            length: 6,
            init,
            seed: 0,
            result: Some(ItemResult {
                best_loss: 0.0,
                best_step: 0,
                steps: 0,
                stop_reason: StopReason::LossThreshold,
                final_lr: 0.01,
                latent: vec![init as f64, bleu],
                recovered: vec![],
                terminated_by: Termination::Eos,
                metrics: MetricSet {
                    em: bleu,
                    pm: bleu,
                    bleu,
                },
                loss_trace: vec![],
            }),
            error: None,
        }
    }

    #[test]
    fn hand_built_bleu_bar() {
        let recs = vec![
            rec(8, "a", "g1", 0, 80.0),
            rec(8, "b", "g1", 0, 100.0),
            rec(8, "c", "g2", 0, 60.0),
            rec(8, "d", "g2", 0, 100.0),
        ];
        let r = build_report(&recs, None).unwrap();
        let d = r.dim(8).unwrap();
        assert_eq!(d.genres["g1"].bleu, 90.0);
        assert_eq!(d.genres["g2"].bleu, 80.0);
        assert_eq!(d.genres["g1"].n, 2);
        assert_eq!(d.bleu_bar, 85.0);
        assert_eq!(d.perfect_share, 0.5);
    }

    #[test]
    fn macro_average_with_unequal_genres() {
        let recs = vec![
            rec(8, "a", "g1", 0, 100.0),
            rec(8, "b", "g1", 0, 100.0),
            rec(8, "c", "g1", 0, 100.0),
            rec(8, "d", "g2", 0, 0.0),
        ];
        let d = build_report(&recs, None).unwrap().dims[0].clone();
        assert_eq!(d.bleu_bar, 50.0);
        assert_eq!(d.mean.bleu, 75.0);
    }

    #[test]
    fn failures_are_reported_not_averaged() {
        let mut bad = rec(8, "a", "g1", 1, 0.0);
        bad.result = None;
        bad.error = Some("boom".into());
        let recs = vec![rec(8, "a", "g1", 0, 40.0), bad];
        let r = build_report(&recs, None).unwrap();
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.dims[0].bleu_bar, 40.0);
        assert_eq!(r.dims[0].n_records, 2);
        assert_eq!(r.dims[0].n_failed, 1);
    }

    #[test]
    fn duplicates_rejected() {
        let recs = vec![rec(8, "a", "g1", 0, 1.0), rec(8, "a", "g1", 0, 2.0)];
        assert!(build_report(&recs, None).is_err());
    }

    #[test]
    fn cell_std_is_across_sentence_means() {
        let recs = vec![
            rec(8, "a", "g1", 0, 100.0),
            rec(8, "a", "g1", 1, 80.0),
            rec(8, "b", "g1", 0, 70.0),
            rec(8, "b", "g1", 1, 70.0),
        ];
        let r = build_report(&recs, None).unwrap();
        let c = &r.cells[0];
        assert_eq!(c.n_sentences, 2);
        assert_eq!(c.mean.bleu, 80.0);
        assert_eq!(c.mean.bleu_max, 85.0);
        assert!((c.bleu_std - 10.0).abs() < 1e-12);
        assert_eq!(r.bin_bleu(8, 0), Some(80.0));
        assert_eq!(r.bin_bleu(8, 3), None);
    }

    #[test]
    fn best_latent_selection() {
        let one = select_best_latents(&[rec(4, "a", "g", 0, 50.0)], 4).unwrap();
        assert_eq!(one[0].1, vec![0.0, 50.0]);
        let two = select_best_latents(&[rec(4, "a", "g", 0, 90.0), rec(4, "a", "g", 1, 100.0)], 4)
            .unwrap();
        assert_eq!(two[0].1[0], 1.0);
        let tie = select_best_latents(&[rec(4, "a", "g", 1, 100.0), rec(4, "a", "g", 0, 100.0)], 4)
            .unwrap();
        assert_eq!(tie[0].1[0], 0.0);
    }

    #[test]
    fn item_seed_depends_on_all_parts() {
        let s = item_seed(1, 16, "s1");
        assert_eq!(s, item_seed(1, 16, "s1"));
        assert_ne!(s, item_seed(2, 16, "s1"));
        assert_ne!(s, item_seed(1, 32, "s1"));
        assert_ne!(s, item_seed(1, 16, "s2"));
    }
}
