//! Trains the toy language model and saves it. Pass an output path to keep
//! the weights; other examples accept it as their first argument.
//!
//! ```text
//! cargo run --release --example train_lm -- lm.weights
//! ```

use std::path::PathBuf;

use sentspace::corpora::{gen_corpus, CorpusSpec, ToyGrammar};
use sentspace::model::{save_weights, train_toy_lm, weights_file_hash, ModelConfig, TrainConfig};
use sentspace::tokenizer::{build_vocab, TokenSeq};

fn main() -> sentspace::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "lm.weights".into());
    let grammar = ToyGrammar::default();
    let vocab = build_vocab(&grammar.lexicon_text())?;
    let train = gen_corpus(
        &grammar,
        &vocab,
        &CorpusSpec::range(5, 40, 500, &["tale", "news"], 7),
    )?;
    let seqs: Vec<TokenSeq> = train.iter().map(|r| r.tokens.clone()).collect();

    let cfg = TrainConfig {
        epochs: 40,
        ..TrainConfig::default()
    };
    let t = std::time::Instant::now();
    let (w, report) = train_toy_lm::<f64>(&seqs, &ModelConfig::desk(vocab.size()), &cfg)?;
    println!(
        "{} steps in {:.0}s, held-out loss {:.3} -> {:.3}",
        report.steps,
        t.elapsed().as_secs_f64(),
        report.initial_heldout_loss,
        report.final_heldout_loss
    );
    for (e, l) in report.epoch_train_loss.iter().enumerate().step_by(5) {
        println!("  epoch {e:>2}: train loss {l:.3}");
    }
    save_weights(&w, &out)?;
    println!(
        "saved {} ({})",
        out.display(),
        &weights_file_hash(&w)?[..16]
    );
    Ok(())
}
