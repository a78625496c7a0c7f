//! Draws the toy language's length-binned corpus and a matching gibberish
//! corpus, then prints a few sentences per bin.

use sentspace::corpora::{
    bin_label, gen_corpus, gen_gibberish, CorpusSpec, ToyGrammar, LENGTH_BINS,
};
use sentspace::tokenizer::build_vocab;

fn main() -> sentspace::Result<()> {
    let grammar = ToyGrammar::default();
    let vocab = build_vocab(&grammar.lexicon_text())?;
    println!("vocabulary: {} tokens", vocab.size());

    let spec = CorpusSpec::binned(2, &["tale", "news"], 1);
    let real = gen_corpus(&grammar, &vocab, &spec)?;
    let gib = gen_gibberish(&vocab, &spec)?;
    for bin in 0..LENGTH_BINS.len() {
        println!("-- bin {}", bin_label(bin));
        for (r, g) in real.iter().zip(&gib).filter(|(r, _)| r.bin == bin) {
            println!("  [{}] {}", r.genre, r.text);
            println!("  [gibberish] {}", g.text);
        }
    }
    Ok(())
}
