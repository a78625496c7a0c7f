//! Compares how well sentences of the toy language and uniform gibberish of
//! the same lengths can be stored at several latent sizes.
//!
//! ```text
//! cargo run --release --example real_vs_gibberish -- [lm.weights]
//! ```

use sentspace::analysis::{compare_real_vs_gibberish, sweep_dimension, SweepPlan};
use sentspace::corpora::{
    gen_corpus, gen_corpus_excluding, gen_gibberish, token_set, CorpusSpec, Layout, ToyGrammar,
};
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
    let spec = CorpusSpec {
        layout: Layout::Binned {
            counts: vec![2, 2, 2, 0, 0, 0, 0, 0],
        },
        genres: vec!["tale".into(), "news".into()],
        seed: 77,
    };
    let real = gen_corpus_excluding(&grammar, &vocab, &spec, &token_set(&train))?;
    let gib = gen_gibberish(&vocab, &spec)?;
    let plan = SweepPlan {
        injection: InjectionConfig::new(Locations::ALL, Mechanism::None, 1, 16),
        encode: EncodeConfig {
            n_inits: 2,
            ..EncodeConfig::default()
        },
        decode: DecodeConfig::default(),
        d_primes: vec![16, 32],
    };
    let (_, r) = sweep_dimension(&w, &real, &plan)?;
    let (_, g) = sweep_dimension(&w, &gib, &plan)?;
    println!(
        "{:>4} {:>8} {:>10} {:>8}",
        "d'", "real", "gibberish", "delta"
    );
    for row in compare_real_vs_gibberish(&r, &g)? {
        println!(
            "{:>4} {:>8.2} {:>10.2} {:>8.2}",
            row.d_prime, row.real, row.gibberish, row.delta
        );
    }
    Ok(())
}
