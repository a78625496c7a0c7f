use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpora::{CorpusSpec, Layout, LENGTH_BINS};
use crate::encoder::EncodeConfig;
use crate::error::{Error, Result};
use crate::injection::InjectionConfig;
use crate::io::sha256_hex;
use crate::linalg::Precision;
use crate::model::{ModelConfig, TrainConfig};
use crate::recovery::DecodeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::desk(4);
        Self {
            d: m.d,
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            d_ff: m.d_ff,
            max_len: m.max_len,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, vocab_size: usize, precision: Precision) -> ModelConfig {
        ModelConfig {
            d: self.d,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            vocab_size,
            max_len: self.max_len,
            precision,
        }
    }
}

/// Layouts of the four generated corpora. Each draws with its own seed
/// derived from the run seed; the evaluation corpora exclude the training
/// sentences and each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub genres: Vec<String>,
    pub train: Layout,
    pub src: Layout,
    pub lrc: Layout,
    pub grc: Layout,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            genres: vec!["tale".into(), "news".into()],
            train: Layout::Range {
                min: 5,
                max: 40,
                per_genre: 500,
            },
            src: Layout::Range {
                min: 5,
                max: 20,
                per_genre: 16,
            },
            lrc: Layout::Binned {
                counts: vec![8; LENGTH_BINS.len()],
            },
            grc: Layout::Binned {
                counts: vec![8; LENGTH_BINS.len()],
            },
        }
    }
}

pub const CORPORA: [&str; 4] = ["train", "src", "lrc", "grc"];

impl CorpusSection {
    pub fn spec(&self, name: &str, seed: u64) -> Result<CorpusSpec> {
        let (layout, salt) = match name {
            "train" => (&self.train, 1),
            "src" => (&self.src, 2),
            "lrc" => (&self.lrc, 3),
            "grc" => (&self.grc, 4),
            other => return Err(Error::Config(format!("unknown corpus {other:?}"))),
        };
        Ok(CorpusSpec {
            layout: layout.clone(),
            genres: self.genres.clone(),
            seed: seed.wrapping_mul(31).wrapping_add(salt),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub corpus: String,
    pub d_primes: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            corpus: "lrc".into(),
            d_primes: vec![16, 32, 48, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolateSection {
    /// Sentence ids; when empty the first two exactly recovered sentences
    /// are used.
    pub first: String,
    pub second: String,
    pub steps: usize,
    /// Sweep dimension to take latents from; 0 selects the largest.
    pub d_prime: usize,
}

impl Default for InterpolateSection {
    fn default() -> Self {
        Self {
            first: String::new(),
            second: String::new(),
            steps: 10,
            d_prime: 0,
        }
    }
}

/// Execution settings that never change results and are left out of the
/// config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub resume: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs/demo"),
            threads: 0,
            resume: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub precision: Precision,
    pub run: RunSection,
    /// Corpus the `encode` command reads.
    pub encode_corpus: String,
    pub corpus: CorpusSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub injection: InjectionConfig,
    pub encode: EncodeConfig,
    pub decode: DecodeConfig,
    pub sweep: SweepSection,
    pub interpolate: InterpolateSection,
    /// Dimension whose best latents feed PCA; 0 selects the largest swept.
    pub pca_d_prime: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F64,
            run: RunSection::default(),
            encode_corpus: "src".into(),
            corpus: CorpusSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            injection: InjectionConfig::default(),
            encode: EncodeConfig::default(),
            decode: DecodeConfig::default(),
            sweep: SweepSection::default(),
            interpolate: InterpolateSection::default(),
            pca_d_prime: 0,
        }
    }
}

pub const DEMO_CONFIG: &str = include_str!("demo.toml");

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn demo() -> Self {
        Self::parse(DEMO_CONFIG).expect("bundled demo config parses")
    }

    /// Hash of the canonical JSON form, ignoring the `run` section.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run = RunSection::default();
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    /// Derives a stage seed from the run seed and the stage's own seed.
    pub fn stage_seed(&self, own: u64) -> u64 {
        self.seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(own)
    }
}

/// Resolves a corpus argument: a bare corpus name maps into the run
/// directory, anything else is taken as a path.
pub fn corpus_path(out_dir: &Path, name: &str) -> PathBuf {
    if CORPORA.contains(&name) {
        out_dir.join("corpus").join(format!("{name}.jsonl"))
    } else {
        PathBuf::from(name)
    }
}
