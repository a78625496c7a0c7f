//! Sweeps the latent dimension over a length-binned corpus and prints the
//! per-dimension summary, BLEU by length bin and the intrinsic dimension.
//!
//! ```text
//! cargo run --release --example sweep -- [lm.weights]
//! ```

use sentspace::analysis::{dimension_csv, intrinsic_dimension, sweep_dimension, SweepPlan};
use sentspace::corpora::{
    bin_label, gen_corpus, gen_corpus_excluding, token_set, CorpusSpec, Layout, ToyGrammar,
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
            counts: vec![2, 2, 2, 2, 2, 2, 2, 0],
        },
        genres: vec!["tale".into(), "news".into()],
        seed: 123,
    };
    let lrc = gen_corpus_excluding(&grammar, &vocab, &spec, &token_set(&train))?;
    let plan = SweepPlan {
        injection: InjectionConfig::new(Locations::ALL, Mechanism::None, 1, 16),
        encode: EncodeConfig {
            n_inits: 2,
            ..EncodeConfig::default()
        },
        decode: DecodeConfig::default(),
        d_primes: vec![16, 32, 48, 64],
    };
    let (records, report) = sweep_dimension(&w, &lrc, &plan)?;
    println!(
        "{} records, {} failed\n",
        records.len(),
        report.failures.len()
    );
    print!("{}", dimension_csv(&report)?);

    println!("\nBLEU by length bin");
    for d in &report.dims {
        let row: Vec<String> = (0..7)
            .map(|b| {
                report
                    .bin_bleu(d.d_prime, b)
                    .map_or("-".into(), |v| format!("{}:{v:.0}", bin_label(b)))
            })
            .collect();
        println!("  d'={:<3} {}", d.d_prime, row.join(" "));
    }
    for tau in [50.0, 90.0, 99.0] {
        println!(
            "intrinsic dimension at tau={tau}: {:?}",
            intrinsic_dimension(&report, tau)
        );
    }
    Ok(())
}
