//! Decodes along the straight line between the latents of two sentences.
//!
//! ```text
//! cargo run --release --example interpolate -- [lm.weights]
//! ```

use sentspace::analysis::{interpolate_latents, lambda_grid};
use sentspace::corpora::{gen_corpus, gen_corpus_excluding, token_set, CorpusSpec, ToyGrammar};
use sentspace::encoder::{encode_sentence, EncodeConfig};
use sentspace::injection::{InjectionConfig, InjectionSpec, Locations, Mechanism};
use sentspace::model::{load_weights, train_toy_lm, ModelConfig, ModelWeights, TrainConfig};
use sentspace::recovery::DecodeConfig;
use sentspace::tokenizer::{build_vocab, TokenSeq};

fn main() -> sentspace::Result<()> {
    let grammar = ToyGrammar::default();
    let vocab = build_vocab(&grammar.lexicon_text())?;
    let train = gen_corpus(
        &grammar,
        &vocab,
        &CorpusSpec::range(5, 40, 500, &["tale", "news"], 7),
    )?;
    let w: ModelWeights<f64> = match std::env::args().nth(1) {
        Some(p) => load_weights(p.as_ref())?,
        None => {
            let seqs: Vec<TokenSeq> = train.iter().map(|r| r.tokens.clone()).collect();
            let cfg = TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            };
            train_toy_lm(&seqs, &ModelConfig::desk(vocab.size()), &cfg)?.0
        }
    };
    let pair = gen_corpus_excluding(
        &grammar,
        &vocab,
        &CorpusSpec::range(6, 9, 1, &["tale", "news"], 8),
        &token_set(&train),
    )?;
    let spec = InjectionSpec::<f64>::build(
        InjectionConfig::new(Locations::ALL, Mechanism::None, 1, 64),
        &w.config,
    )?;
    let enc = EncodeConfig::default();
    let z1 = encode_sentence(&w, &pair[0].tokens, &spec, &enc)?
        .best()
        .best_z
        .clone();
    let z2 = encode_sentence(&w, &pair[1].tokens, &spec, &enc)?
        .best()
        .best_z
        .clone();

    let report = interpolate_latents(
        &w,
        &spec,
        &vocab,
        &z1,
        pair[0].tokens.ids(),
        &z2,
        pair[1].tokens.ids(),
        &lambda_grid(10),
        &DecodeConfig::default(),
    )?;
    for r in &report.rows {
        println!(
            "{:.1}  [{}/{}]  {}",
            r.lambda, r.overlap_first, r.overlap_second, r.text
        );
    }
    Ok(())
}
