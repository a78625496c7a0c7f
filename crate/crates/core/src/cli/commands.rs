use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    build_report, cells_csv, compare_real_vs_gibberish, dimension_csv, interpolate_latents,
    intrinsic_dimension, item_seed, lambda_grid, line_plot_svg, pca_cumulative_variance,
    recovery_csv, run_sweep, select_best_latents, PcaReport, Series, SweepMeta, SweepPlan,
    SweepRecord, SweepReport,
};
use crate::corpora::{
    gen_corpus_excluding, gen_gibberish, read_corpus, token_set, write_corpus, SentenceRecord,
    ToyGrammar, LENGTH_BINS,
};
use crate::encoder::{encode_sentence, EncodeConfig, StopReason};
use crate::error::{Error, Result};
use crate::injection::{InjectionConfig, InjectionSpec, LatentState};
use crate::io::{
    append_jsonl, read_json, read_jsonl, sha256_hex, write_atomic, write_json, write_jsonl,
};
use crate::linalg::Real;
use crate::metrics::{aggregate, score, AggregateMetrics, MetricSet};
use crate::model::{
    hash_weights_file, heldout_loss, load_weights_as, save_weights, train_toy_lm, ModelWeights,
    TrainConfig,
};
use crate::recovery::{recover, Termination};
use crate::tokenizer::{build_vocab, decode_ids, TokenSeq, Vocab};

use super::config::{corpus_path, Config, CORPORA};
use super::manifest::{check_upstream, Run, RunStatus};

/// What a command reports back to the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    ItemFailures(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub sentence_id: String,
    pub d_prime: usize,
    pub init: Option<usize>,
    pub error: String,
}

fn weights_path(out: &Path) -> PathBuf {
    out.join("model.weights")
}

fn vocab_path(out: &Path) -> PathBuf {
    out.join("vocab.json")
}

fn corpus_stem(path: &Path) -> String {
    path.file_stem()
        .map_or("corpus".into(), |s| s.to_string_lossy().into_owned())
}

fn outcome(run: Run, failures: &[ItemFailure], path: &Path) -> Result<Outcome> {
    if failures.is_empty() {
        if path.exists() {
            std::fs::remove_file(path)?;
        }
        run.finish(RunStatus::Ok)?;
        Ok(Outcome::Ok)
    } else {
        write_json(path, &failures)?;
        run.finish(RunStatus::ItemFailures)?;
        Ok(Outcome::ItemFailures(failures.len()))
    }
}

pub fn gen_corpus(cfg: &Config) -> Result<Outcome> {
    let out = &cfg.run.out_dir;
    let mut run = Run::start(out, "gen-corpus", cfg, &[])?;
    let g = ToyGrammar::default();
    let vocab = build_vocab(&g.lexicon_text())?;
    let vp = vocab_path(out);
    vocab.save(&vp)?;
    run.output(&vp)?;
    let mut seen = HashSet::new();
    for name in CORPORA {
        let spec = cfg.corpus.spec(name, cfg.seed)?;
        let recs = if name == "grc" {
            gen_gibberish(&vocab, &spec)?
        } else {
            gen_corpus_excluding(&g, &vocab, &spec, &seen)?
        };
        seen.extend(token_set(&recs));
        let p = corpus_path(out, name);
        write_corpus(&p, &recs)?;
        run.output(&p)?;
    }
    run.finish(RunStatus::Ok)?;
    Ok(Outcome::Ok)
}

fn load_vocab(out: &Path) -> Result<Vocab> {
    let vp = vocab_path(out);
    check_upstream(out, "gen-corpus", &vp)?;
    Vocab::load(&vp)
}

fn load_corpus(out: &Path, name: &str) -> Result<(PathBuf, Vec<SentenceRecord>)> {
    let p = corpus_path(out, name);
    check_upstream(out, "gen-corpus", &p)?;
    let recs = read_corpus(&p)?;
    Ok((p, recs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub weights_hash: String,
    pub untrained_heldout_loss: f64,
    pub report: crate::model::TrainReport,
}

pub fn train_lm<T: Real>(cfg: &Config) -> Result<Outcome> {
    let out = &cfg.run.out_dir;
    let vocab = load_vocab(out)?;
    let (cp, corpus) = load_corpus(out, "train")?;
    let mut run = Run::start(out, "train-lm", cfg, &[&vocab_path(out), &cp])?;
    let mc = cfg.model.model_config(vocab.size(), cfg.precision);
    let tc = TrainConfig {
        seed: cfg.stage_seed(cfg.train.seed),
        ..cfg.train.clone()
    };
    let seqs: Vec<TokenSeq> = corpus.iter().map(|r| r.tokens.clone()).collect();
    let (w, report) = train_toy_lm::<T>(&seqs, &mc, &tc)?;
    let untrained = crate::model::init_weights::<T>(&mc, tc.seed)?;
    let every = tc.heldout_every.max(2);
    let held: Vec<&TokenSeq> = seqs
        .iter()
        .enumerate()
        .filter(|(i, _)| i % every == 0)
        .map(|(_, s)| s)
        .collect();
    let wp = weights_path(out);
    save_weights(&w, &wp)?;
    run.output(&wp)?;
    let sp = out.join("train_report.json");
    write_json(
        &sp,
        &TrainSummary {
            weights_hash: hash_weights_file(&wp)?,
            untrained_heldout_loss: heldout_loss(&untrained, &held)?,
            report,
        },
    )?;
    run.output(&sp)?;
    run.finish(RunStatus::Ok)?;
    Ok(Outcome::Ok)
}

fn load_model<T: Real>(out: &Path) -> Result<(ModelWeights<T>, String)> {
    let wp = weights_path(out);
    check_upstream(out, "train-lm", &wp)?;
    let w = load_weights_as::<T>(&wp)?;
    Ok((w, hash_weights_file(&wp)?))
}

/// Hash tying encode records to the injection setup that produced them.
pub fn spec_hash(inj: &InjectionConfig) -> String {
    sha256_hex(&serde_json::to_vec(inj).expect("config serializes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRecord {
    pub sentence_id: String,
    pub genre: String,
    pub bin: usize,
    pub length: usize,
    pub target: Vec<u32>,
    pub d_prime: usize,
    pub k: usize,
    pub init: usize,
    pub seed: u64,
    pub threshold: f64,
    pub best_loss: f64,
    pub best_step: usize,
    pub steps: usize,
    pub stop_reason: StopReason,
    pub final_lr: f64,
    pub latent: Vec<f64>,
    pub loss_trace: Vec<f64>,
    pub weights_hash: String,
    pub spec_hash: String,
}

pub fn encode<T: Real>(cfg: &Config) -> Result<Outcome> {
    let out = &cfg.run.out_dir;
    let (w, wh) = load_model::<T>(out)?;
    let (cp, corpus) = load_corpus(out, &cfg.encode_corpus)?;
    let run = Run::start(out, "encode", cfg, &[&weights_path(out), &cp])?;
    let spec = InjectionSpec::<T>::build(cfg.injection.clone(), &w.config)?;
    let sh = spec_hash(&cfg.injection);
    let dp = cfg.injection.d_prime;
    let results: Vec<(usize, Result<Vec<EncodeRecord>>)> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let ec = EncodeConfig {
                seed: item_seed(cfg.stage_seed(cfg.encode.seed), dp, &s.id),
                ..cfg.encode.clone()
            };
            let r = encode_sentence(&w, &s.tokens, &spec, &ec).map(|res| {
                res.inits
                    .into_iter()
                    .map(|ir| EncodeRecord {
                        sentence_id: s.id.clone(),
                        genre: s.genre.clone(),
                        bin: s.bin,
                        length: s.length,
                        target: s.tokens.ids().to_vec(),
                        d_prime: dp,
                        k: cfg.injection.k,
                        init: ir.init,
                        seed: ir.seed,
                        threshold: res.threshold,
                        best_loss: ir.best_loss,
                        best_step: ir.best_step,
                        steps: ir.steps,
                        stop_reason: ir.stop_reason,
                        final_lr: ir.final_lr,
                        latent: ir.best_z.to_f64(),
                        loss_trace: ir.loss_trace,
                        weights_hash: wh.clone(),
                        spec_hash: sh.clone(),
                    })
                    .collect()
            });
            (i, r)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(v) => records.extend(v),
            Err(e) => failures.push(ItemFailure {
                sentence_id: corpus[i].id.clone(),
                d_prime: dp,
                init: None,
                error: e.to_string(),
            }),
        }
    }
    for r in &records {
        if r.stop_reason == StopReason::NonFinite {
            failures.push(ItemFailure {
                sentence_id: r.sentence_id.clone(),
                d_prime: dp,
                init: Some(r.init),
                error: "non-finite loss or gradient".into(),
            });
        }
    }
    let ep = out.join("encode.jsonl");
    write_jsonl(&ep, &records)?;
    let mut run = run;
    run.output(&ep)?;
    outcome(run, &failures, &out.join("encode-failures.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverRecord {
    pub sentence_id: String,
    pub d_prime: usize,
    pub init: usize,
    pub target: Vec<u32>,
    pub tokens: Vec<u32>,
    pub text: String,
    pub terminated_by: Termination,
    pub logprobs: Vec<f64>,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverSummary {
    pub label: String,
    pub n_sentences: usize,
    /// Per-sentence init aggregates, averaged over sentences.
    pub mean: AggregateMetrics,
    pub perfect_share: f64,
}

pub fn recover_cmd<T: Real>(cfg: &Config) -> Result<Outcome> {
    let out = &cfg.run.out_dir;
    let (w, wh) = load_model::<T>(out)?;
    let vocab = load_vocab(out)?;
    let ep = out.join("encode.jsonl");
    check_upstream(out, "encode", &ep)?;
    let recs: Vec<EncodeRecord> = read_jsonl(&ep)?;
    let mut run = Run::start(out, "recover", cfg, &[&weights_path(out), &ep])?;
    let mut specs: BTreeMap<usize, InjectionSpec<T>> = BTreeMap::new();
    for r in &recs {
        if r.weights_hash != wh {
            return Err(Error::HashMismatch {
                expected: r.weights_hash.clone(),
                found: wh,
            });
        }
        let inj = InjectionConfig {
            d_prime: r.d_prime,
            ..cfg.injection.clone()
        };
        let found = spec_hash(&inj);
        if r.spec_hash != found {
            return Err(Error::HashMismatch {
                expected: r.spec_hash.clone(),
                found,
            });
        }
        if !specs.contains_key(&r.d_prime) {
            specs.insert(r.d_prime, InjectionSpec::build(inj, &w.config)?);
        }
    }
    let rows: Vec<std::result::Result<RecoverRecord, ItemFailure>> = recs
        .par_iter()
        .map(|r| {
            let spec = &specs[&r.d_prime];
            let go = || -> Result<RecoverRecord> {
                let z = LatentState::new(
                    r.latent.iter().map(|&v| T::lit(v)).collect(),
                    r.d_prime,
                    spec.config.k,
                )?;
                let o = recover(&w, spec, &z, &cfg.decode)?;
                Ok(RecoverRecord {
                    sentence_id: r.sentence_id.clone(),
                    d_prime: r.d_prime,
                    init: r.init,
                    metrics: score(&r.target, &o.tokens)?,
                    text: decode_ids(&vocab, &o.tokens)?,
                    target: r.target.clone(),
                    tokens: o.tokens,
                    terminated_by: o.terminated_by,
                    logprobs: o.logprobs,
                })
            };
            go().map_err(|e| ItemFailure {
                sentence_id: r.sentence_id.clone(),
                d_prime: r.d_prime,
                init: Some(r.init),
                error: e.to_string(),
            })
        })
        .collect();
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for r in rows {
        match r {
            Ok(v) => done.push(v),
            Err(f) => failures.push(f),
        }
    }
    let rp = out.join("recover.jsonl");
    write_jsonl(&rp, &done)?;
    run.output(&rp)?;
    let summary = summarize_recovery(&done, &recovery_label(cfg))?;
    let sp = out.join("recover_summary.json");
    write_json(&sp, &summary)?;
    run.output(&sp)?;
    outcome(run, &failures, &out.join("recover-failures.json"))
}

fn recovery_label(cfg: &Config) -> String {
    let init = match cfg.encode.init {
        crate::encoder::InitStrategy::XavierNormal => "Xavier",
        crate::encoder::InitStrategy::L2Normalized => "L2",
    };
    let mech = match cfg.injection.mechanism {
        crate::injection::Mechanism::None => "None".to_string(),
        m => format!("{m} k={}", cfg.injection.k),
    };
    format!(
        "{init} {} {mech} d'={}",
        cfg.injection.locations, cfg.injection.d_prime
    )
}

pub fn summarize_recovery(rows: &[RecoverRecord], label: &str) -> Result<Vec<RecoverSummary>> {
    let mut by: BTreeMap<usize, BTreeMap<&str, Vec<MetricSet>>> = BTreeMap::new();
    for r in rows {
        by.entry(r.d_prime)
            .or_default()
            .entry(&r.sentence_id)
            .or_default()
            .push(r.metrics);
    }
    let mut out = Vec::new();
    for (dp, sents) in by {
        let aggs = sents
            .values()
            .map(|m| aggregate(m))
            .collect::<Result<Vec<_>>>()?;
        let n = aggs.len() as f64;
        let m = |f: fn(&AggregateMetrics) -> f64| aggs.iter().map(f).sum::<f64>() / n;
        out.push(RecoverSummary {
            label: if label.is_empty() {
                format!("d'={dp}")
            } else {
                label.to_string()
            },
            n_sentences: aggs.len(),
            mean: AggregateMetrics {
                n: aggs.len(),
                em: m(|a| a.em),
                pm: m(|a| a.pm),
                bleu: m(|a| a.bleu),
                em_max: m(|a| a.em_max),
                pm_max: m(|a| a.pm_max),
                bleu_max: m(|a| a.bleu_max),
            },
            perfect_share: aggs.iter().filter(|a| a.bleu_max >= 100.0).count() as f64 / n,
        });
    }
    Ok(out)
}

/// Everything that determines sweep records, used to refuse resuming a
/// sweep under different settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepIdentity {
    pub plan: SweepPlan,
    pub corpus_hash: String,
    pub weights_hash: String,
    pub precision: crate::linalg::Precision,
}

impl SweepIdentity {
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("identity serializes"))
    }
}

pub fn sweep_paths(out: &Path, name: &str) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let dir = out.join("sweep");
    (
        dir.join(format!("{name}.jsonl")),
        dir.join(format!("{name}.identity.json")),
        dir.join(format!("{name}.report.json")),
        dir.join(format!("{name}.failures.json")),
    )
}

pub fn sweep<T: Real>(cfg: &Config) -> Result<Outcome> {
    let out = &cfg.run.out_dir;
    let (w, wh) = load_model::<T>(out)?;
    let (cp, corpus) = load_corpus(out, &cfg.sweep.corpus)?;
    let name = corpus_stem(&cp);
    let command = format!("sweep-{name}");
    let mut run = Run::start(out, &command, cfg, &[&weights_path(out), &cp])?;
    let plan = SweepPlan {
        injection: cfg.injection.clone(),
        encode: EncodeConfig {
            seed: cfg.stage_seed(cfg.encode.seed),
            ..cfg.encode.clone()
        },
        decode: cfg.decode.clone(),
        d_primes: cfg.sweep.d_primes.clone(),
    };
    let identity = SweepIdentity {
        plan: plan.clone(),
        corpus_hash: crate::io::file_sha256(&cp)?,
        weights_hash: wh,
        precision: cfg.precision,
    };
    let (rp, ip, reportp, fp) = sweep_paths(out, &name);
    let mut existing: Vec<SweepRecord> = Vec::new();
    if cfg.run.resume && rp.exists() {
        let prev: SweepIdentity = read_json(&ip)?;
        if prev.hash() != identity.hash() {
            return Err(Error::HashMismatch {
                expected: prev.hash(),
                found: identity.hash(),
            });
        }
        existing = read_jsonl(&rp)?;
    }
    write_json(&ip, &identity)?;
    // rewrite the clean prefix so a torn last line is dropped
    write_jsonl(&rp, &existing)?;
    let done: HashSet<_> = existing.iter().map(|r| r.key()).collect();
    let mut file = OpenOptions::new().append(true).open(&rp)?;
    let mut fresh = Vec::new();
    run_sweep(&w, &corpus, &plan, &done, |r| {
        append_jsonl(&mut file, r)?;
        fresh.push(r.clone());
        Ok(())
    })?;
    drop(file);
    existing.extend(fresh);
    let canon = canonical_order(&corpus, &plan, existing);
    write_jsonl(&rp, &canon)?;
    run.output(&rp)?;
    let report = build_report(
        &canon,
        Some(SweepMeta {
            config_hash: identity.hash(),
            weights_hash: identity.weights_hash.clone(),
            seed: plan.encode.seed,
            n_inits: plan.encode.n_inits,
        }),
    )?;
    write_json(&reportp, &report)?;
    run.output(&reportp)?;
    let failures: Vec<ItemFailure> = report
        .failures
        .iter()
        .map(|f| ItemFailure {
            sentence_id: f.sentence_id.clone(),
            d_prime: f.d_prime,
            init: Some(f.init),
            error: f.error.clone(),
        })
        .collect();
    outcome(run, &failures, &fp)
}

fn canonical_order(
    corpus: &[SentenceRecord],
    plan: &SweepPlan,
    recs: Vec<SweepRecord>,
) -> Vec<SweepRecord> {
    let pos: BTreeMap<&str, usize> = corpus
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let dpos: BTreeMap<usize, usize> = plan
        .d_primes
        .iter()
        .enumerate()
        .map(|(i, &d)| (d, i))
        .collect();
    let mut recs = recs;
    recs.sort_by_key(|r| {
        (
            dpos.get(&r.d_prime).copied().unwrap_or(usize::MAX),
            pos.get(r.sentence_id.as_str())
                .copied()
                .unwrap_or(usize::MAX),
            r.init,
        )
    });
    recs
}

fn sweep_records(out: &Path, corpus: &str) -> Result<(String, Vec<SweepRecord>)> {
    let name = corpus_stem(&corpus_path(out, corpus));
    let (rp, ..) = sweep_paths(out, &name);
    check_upstream(out, &format!("sweep-{name}"), &rp)?;
    Ok((name, read_jsonl(&rp)?))
}

fn pick_dim(requested: usize, recs: &[SweepRecord]) -> Result<usize> {
    if requested > 0 {
        return Ok(requested);
    }
    recs.iter()
        .map(|r| r.d_prime)
        .max()
        .ok_or_else(|| Error::Mismatch("sweep has no records".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaOutput {
    pub sweep: String,
    pub d_prime: usize,
    pub sentence_ids: Vec<String>,
    /// Leading components needed for 95% of the variance, and that count as
    /// a share of the latent dimension.
    pub components_95: usize,
    pub components_95_share: f64,
    pub report: PcaReport,
}

pub fn pca(cfg: &Config) -> Result<Outcome> {
    let out = &cfg.run.out_dir;
    let (name, recs) = sweep_records(out, &cfg.sweep.corpus)?;
    let (rp, ..) = sweep_paths(out, &name);
    let mut run = Run::start(out, "pca", cfg, &[&rp])?;
    let dp = pick_dim(cfg.pca_d_prime, &recs)?;
    let best = select_best_latents(&recs, dp)?;
    let rows: Vec<Vec<f64>> = best.iter().map(|b| b.1.clone()).collect();
    let report = pca_cumulative_variance(&rows)?;
    let c95 = report.components_for(0.95);
    let po = PcaOutput {
        sweep: name,
        d_prime: dp,
        sentence_ids: best.into_iter().map(|b| b.0).collect(),
        components_95: c95,
        components_95_share: c95 as f64 / report.n_components as f64,
        report,
    };
    let pp = out.join("pca_report.json");
    write_json(&pp, &po)?;
    run.output(&pp)?;
    run.finish(RunStatus::Ok)?;
    Ok(Outcome::Ok)
}

pub fn interpolate<T: Real>(cfg: &Config) -> Result<Outcome> {
    let out = &cfg.run.out_dir;
    let (w, _) = load_model::<T>(out)?;
    let vocab = load_vocab(out)?;
    let (_, corpus) = load_corpus(out, &cfg.sweep.corpus)?;
    let (name, recs) = sweep_records(out, &cfg.sweep.corpus)?;
    let (rp, ..) = sweep_paths(out, &name);
    let mut run = Run::start(out, "interpolate", cfg, &[&weights_path(out), &rp])?;
    let dp = pick_dim(cfg.interpolate.d_prime, &recs)?;
    let best: BTreeMap<String, Vec<f64>> = select_best_latents(&recs, dp)?.into_iter().collect();
    let perfect = |id: &str| {
        recs.iter().any(|r| {
            r.d_prime == dp
                && r.sentence_id == id
                && r.result
                    .as_ref()
                    .is_some_and(|x| x.metrics.em == 100.0 && x.metrics.bleu == 100.0)
        })
    };
    let (a, b) = if cfg.interpolate.first.is_empty() || cfg.interpolate.second.is_empty() {
        let ids: Vec<&SentenceRecord> = corpus
            .iter()
            .filter(|s| best.contains_key(&s.id) && perfect(&s.id))
            .take(2)
            .collect();
        if ids.len() < 2 {
            return Err(Error::Mismatch(format!(
                "fewer than two exactly recovered sentences at d'={dp}"
            )));
        }
        (ids[0].id.clone(), ids[1].id.clone())
    } else {
        (
            cfg.interpolate.first.clone(),
            cfg.interpolate.second.clone(),
        )
    };
    let find = |id: &str| -> Result<(&SentenceRecord, &Vec<f64>)> {
        let s = corpus
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Mismatch(format!("no sentence {id}")))?;
        let z = best
            .get(id)
            .ok_or_else(|| Error::Mismatch(format!("no latent for {id} at d'={dp}")))?;
        Ok((s, z))
    };
    let (s1, z1) = find(&a)?;
    let (s2, z2) = find(&b)?;
    let spec = InjectionSpec::<T>::build(
        InjectionConfig {
            d_prime: dp,
            ..cfg.injection.clone()
        },
        &w.config,
    )?;
    let lat =
        |z: &[f64]| LatentState::new(z.iter().map(|&v| T::lit(v)).collect(), dp, spec.config.k);
    let report = interpolate_latents(
        &w,
        &spec,
        &vocab,
        &lat(z1)?,
        s1.tokens.ids(),
        &lat(z2)?,
        s2.tokens.ids(),
        &lambda_grid(cfg.interpolate.steps),
        &cfg.decode,
    )?;
    let ip = out.join("interpolation.json");
    write_json(
        &ip,
        &serde_json::json!({"first_id": a, "second_id": b, "d_prime": dp, "report": report}),
    )?;
    run.output(&ip)?;
    run.finish(RunStatus::Ok)?;
    Ok(Outcome::Ok)
}

fn bin_mid(bin: usize) -> f64 {
    let (lo, hi) = LENGTH_BINS[bin];
    (lo + hi) as f64 / 2.0
}

/// Writes CSV tables and SVG plots for whatever reports exist in the run
/// directory.
pub fn report(cfg: &Config) -> Result<Outcome> {
    let out = &cfg.run.out_dir;
    let dir = out.join("report");
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut sweeps: BTreeMap<String, SweepReport> = BTreeMap::new();
    for name in ["src", "lrc", "grc"] {
        let (_, _, rp, _) = sweep_paths(out, name);
        if rp.exists() {
            sweeps.insert(name.into(), read_json(&rp)?);
            inputs.push(rp);
        }
    }
    let summary = out.join("recover_summary.json");
    let pcap = out.join("pca_report.json");
    for p in [&summary, &pcap] {
        if p.exists() {
            inputs.push(p.clone());
        }
    }
    let refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let mut run = Run::start(out, "report", cfg, &refs)?;
    let emit = |run: &mut Run, file: &str, body: String| -> Result<()> {
        let p = dir.join(file);
        write_atomic(&p, body.as_bytes())?;
        run.output(&p)
    };
    if summary.exists() {
        let rows: Vec<RecoverSummary> = read_json(&summary)?;
        let t: Vec<(String, AggregateMetrics)> =
            rows.into_iter().map(|r| (r.label, r.mean)).collect();
        emit(&mut run, "recovery.csv", recovery_csv(&t)?)?;
    }
    for (name, rep) in &sweeps {
        emit(
            &mut run,
            &format!("dimensions-{name}.csv"),
            dimension_csv(rep)?,
        )?;
        emit(&mut run, &format!("cells-{name}.csv"), cells_csv(rep)?)?;
        let series: Vec<Series> = rep
            .dims
            .iter()
            .map(|d| Series {
                name: format!("d'={}", d.d_prime),
                points: (0..LENGTH_BINS.len())
                    .filter_map(|b| rep.bin_bleu(d.d_prime, b).map(|v| (bin_mid(b), v)))
                    .collect(),
            })
            .collect();
        emit(
            &mut run,
            &format!("bleu-vs-length-{name}.svg"),
            line_plot_svg(
                &format!("BLEU by sentence length ({name})"),
                "sentence length",
                "BLEU",
                &series,
            ),
        )?;
        let mut dims = serde_json::Map::new();
        for tau in [50.0, 90.0, 95.0, 99.0] {
            dims.insert(
                format!("{tau}"),
                serde_json::json!(intrinsic_dimension(rep, tau)),
            );
        }
        emit(
            &mut run,
            &format!("intrinsic-dimension-{name}.json"),
            serde_json::to_string_pretty(&dims)? + "\n",
        )?;
    }
    if !sweeps.is_empty() {
        let series: Vec<Series> = sweeps
            .iter()
            .map(|(n, r)| Series {
                name: n.clone(),
                points: r
                    .bleu_bars()
                    .into_iter()
                    .map(|(d, b)| (d as f64, b))
                    .collect(),
            })
            .collect();
        emit(
            &mut run,
            "bleu-bar.svg",
            line_plot_svg("BLEU-bar by latent dimension", "d'", "BLEU-bar", &series),
        )?;
    }
    if let (Some(real), Some(gib)) = (sweeps.get("lrc"), sweeps.get("grc")) {
        let rows = compare_real_vs_gibberish(real, gib)?;
        emit(
            &mut run,
            "real-vs-gibberish.json",
            serde_json::to_string_pretty(&rows)? + "\n",
        )?;
    }
    if pcap.exists() {
        let po: PcaOutput = read_json(&pcap)?;
        let pts = po
            .report
            .cumulative
            .iter()
            .enumerate()
            .map(|(i, &c)| ((i + 1) as f64, c))
            .collect();
        emit(
            &mut run,
            "pca-cumulative.svg",
            line_plot_svg(
                &format!("Cumulative explained variance (d'={})", po.d_prime),
                "components",
                "explained variance",
                &[Series {
                    name: po.sweep.clone(),
                    points: pts,
                }],
            ),
        )?;
    }
    run.finish(RunStatus::Ok)?;
    Ok(Outcome::Ok)
}
