//! Encodes a few unseen sentences into a 64-dimensional latent and decodes
//! them back, printing per-init loss, stop reason and scores.
//!
//! ```text
//! cargo run --release --example encode_recover -- [lm.weights]
//! ```

use sentspace::corpora::{gen_corpus, gen_corpus_excluding, token_set, CorpusSpec, ToyGrammar};
use sentspace::encoder::{encode_sentence, EncodeConfig};
use sentspace::injection::{InjectionConfig, InjectionSpec, Locations, Mechanism};
use sentspace::metrics::score;
use sentspace::model::{load_weights, train_toy_lm, ModelConfig, ModelWeights, TrainConfig};
use sentspace::recovery::{recover, DecodeConfig};
use sentspace::tokenizer::{build_vocab, decode_ids, TokenSeq};

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
            println!("no weights given, training a short model first");
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
        &CorpusSpec::range(5, 15, 2, &["tale", "news"], 99),
        &token_set(&train),
    )?;
    let spec = InjectionSpec::<f64>::build(
        InjectionConfig::new(Locations::ALL, Mechanism::None, 1, 64),
        &w.config,
    )?;
    let enc = EncodeConfig::default();
    let dec = DecodeConfig::default();
    for s in &src {
        println!("\n{}", s.text);
        let res = encode_sentence(&w, &s.tokens, &spec, &enc)?;
        for r in &res.inits {
            let out = recover(&w, &spec, &r.best_z, &dec)?;
            let m = score(s.tokens.ids(), &out.tokens)?;
            println!(
                "  init {}: loss {:.3} after {} steps ({}), BLEU {:.1} EM {:.1} -> {}",
                r.init,
                r.best_loss,
                r.steps,
                r.stop_reason,
                m.bleu,
                m.em,
                decode_ids(&vocab, &out.tokens)?
            );
        }
    }
    Ok(())
}
