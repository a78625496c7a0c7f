#![allow(dead_code)]

use sentspace::corpora::{gen_corpus, CorpusSpec, SentenceRecord, ToyGrammar};
use sentspace::model::{train_toy_lm, ModelConfig, ModelWeights, TrainConfig, TrainReport};
use sentspace::tokenizer::{build_vocab, TokenSeq, Vocab};

pub const GENRES: [&str; 2] = ["tale", "news"];

/// Sentence BLEU with exponential smoothing, written without hash maps:
/// n-grams are matched greedily against a shrinking pool of reference
/// n-grams, which clips counts the same way.
pub fn bleu_oracle(reference: &[u32], hyp: &[u32]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut k = 1.0f64;
    let mut product = 1.0f64;
    for n in 1..=4usize {
        if hyp.len() < n {
            return 0.0;
        }
        let mut pool: Vec<&[u32]> = if reference.len() >= n {
            (0..=reference.len() - n)
                .map(|i| &reference[i..i + n])
                .collect()
        } else {
            Vec::new()
        };
        let total = hyp.len() - n + 1;
        let mut matched = 0usize;
        for i in 0..total {
            let g = &hyp[i..i + n];
            if let Some(pos) = pool.iter().position(|x| *x == g) {
                pool.swap_remove(pos);
                matched += 1;
            }
        }
        let p = if matched == 0 {
            k *= 2.0;
            1.0 / (k * total as f64)
        } else {
            matched as f64 / total as f64
        };
        product *= p;
    }
    let bp = if hyp.len() < reference.len() {
        (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * product.powf(0.25)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

/// Explained-variance ratios straight from the definition.
pub fn pca_ratios_oracle(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    let ev: Vec<f64> = jacobi_eigenvalues(cov)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let tr: f64 = ev.iter().sum();
    ev.iter().map(|v| v / tr).collect()
}

pub struct Desk {
    pub grammar: ToyGrammar,
    pub vocab: Vocab,
    pub train: Vec<SentenceRecord>,
    pub weights: ModelWeights<f64>,
    pub report: TrainReport,
}

pub fn train_config() -> TrainConfig {
    TrainConfig {
        epochs: 40,
        ..TrainConfig::default()
    }
}

/// The desk-scale language model: 1000 sentences of 5 to 40 words.
pub fn desk_lm() -> Desk {
    let grammar = ToyGrammar::default();
    let vocab = build_vocab(&grammar.lexicon_text()).unwrap();
    let train = gen_corpus(&grammar, &vocab, &CorpusSpec::range(5, 40, 500, &GENRES, 7)).unwrap();
    let seqs: Vec<TokenSeq> = train.iter().map(|r| r.tokens.clone()).collect();
    let (weights, report) =
        train_toy_lm::<f64>(&seqs, &ModelConfig::desk(vocab.size()), &train_config()).unwrap();
    Desk {
        grammar,
        vocab,
        train,
        weights,
        report,
    }
}
