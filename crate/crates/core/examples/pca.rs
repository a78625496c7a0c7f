//! Explained variance of recovered latents: encodes a small corpus, keeps
//! the best init per sentence and prints the cumulative variance curve.
//!
//! ```text
//! cargo run --release --example pca -- [lm.weights]
//! ```

use sentspace::analysis::{
    pca_cumulative_variance, select_best_latents, sweep_dimension, SweepPlan,
};
use sentspace::corpora::{gen_corpus, gen_corpus_excluding, token_set, CorpusSpec, ToyGrammar};
use sentspace::encoder::EncodeConfig;
use sentspace::injection::{InjectionConfig, Locations, Mechanism};
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
    let src = gen_corpus_excluding(
        &grammar,
        &vocab,
        &CorpusSpec::range(5, 12, 12, &["tale", "news"], 5),
        &token_set(&train),
    )?;
    let plan = SweepPlan {
        injection: InjectionConfig::new(Locations::ALL, Mechanism::None, 1, 32),
        encode: EncodeConfig {
            n_inits: 2,
            ..EncodeConfig::default()
        },
        decode: DecodeConfig::default(),
        d_primes: vec![32],
    };
    let (records, _) = sweep_dimension(&w, &src, &plan)?;
    let rows: Vec<Vec<f64>> = select_best_latents(&records, 32)?
        .into_iter()
        .map(|(_, z)| z)
        .collect();
    let pca = pca_cumulative_variance(&rows)?;
    println!("{} latents of dimension 32", pca.n_samples);
    for (i, c) in pca.cumulative.iter().enumerate().take(12) {
        println!(
            "  {:>2} components: {:5.1}%  {}",
            i + 1,
            100.0 * c,
            "#".repeat((40.0 * c) as usize)
        );
    }
    println!(
        "95% of the variance needs {} components",
        pca.components_for(0.95)
    );
    Ok(())
}
