//! Drives every subcommand of the `sentspace` tool in-process on a tiny
//! configuration and lists what each stage wrote.

use std::process::ExitCode;

const TINY: &str = r#"
seed = 1

[corpus]
train = { kind = "range", min = 5, max = 12, per_genre = 40 }
src = { kind = "range", min = 5, max = 8, per_genre = 2 }
lrc = { kind = "binned", counts = [2, 2, 0, 0, 0, 0, 0, 0] }
grc = { kind = "binned", counts = [2, 2, 0, 0, 0, 0, 0, 0] }

[model]
d = 32
n_layers = 1
n_heads = 2
d_ff = 64

[train]
epochs = 20

[injection]
d_prime = 32

[encode]
n_inits = 2
max_steps = 300

[sweep]
corpus = "src"
d_primes = [16, 32]
"#;

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).expect("write config");
    let out = dir.path().join("run");
    let base = [
        "sentspace",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ];
    let stages: [&[&str]; 9] = [
        &["gen-corpus"],
        &["train-lm"],
        &["encode"],
        &["recover"],
        &["sweep"],
        &["sweep", "--corpus", "lrc"],
        &["sweep", "--corpus", "grc"],
        &["pca", "--corpus", "lrc"],
        &["report"],
    ];
    for stage in stages {
        let args: Vec<&str> = base.iter().chain(stage.iter()).copied().collect();
        let code = sentspace::cli::main_with_args(args);
        println!("{:<24} {code:?}", stage.join(" "));
    }
    let code = sentspace::cli::main_with_args(base.iter().copied().chain(["interpolate"]));
    println!(
        "{:<24} {code:?} (needs two exactly recovered sentences)",
        "interpolate"
    );

    let mut files: Vec<_> = walk(&out);
    files.sort();
    for f in files {
        println!("  {}", f.strip_prefix(&out).unwrap().display());
    }
    ExitCode::SUCCESS
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
