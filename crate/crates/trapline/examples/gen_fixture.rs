//! Generate a synthetic camera-trap dataset plus a ready-to-run config.
//!
//! Usage:
//!   cargo run -p trapline --example gen_fixture -- <dir> [demo|blank-mix|contrast] [seed]
//!
//! Writes images, ground-truth sidecars, and scene scripts under
//! `<dir>/input`, and a `run.json` config pointing at them with mock
//! endpoints and the bundled knowledge corpus.

use std::path::PathBuf;

use trapline::config::PipelineConfig;
use trapline::fixtures::{
    fixture_corpus_dir, write_blank_mix_fixture, write_contrast_fixture, write_demo_fixture,
};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next().map(PathBuf::from) else {
        eprintln!("usage: gen_fixture <dir> [demo|blank-mix|contrast] [seed]");
        std::process::exit(2);
    };
    let kind = args.next().unwrap_or_else(|| "demo".to_string());
    let seed: u64 = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(7);

    let input = dir.join("input");
    let output = dir.join("out");
    match kind.as_str() {
        "demo" => write_demo_fixture(&input, seed).expect("write demo fixture"),
        "blank-mix" => write_blank_mix_fixture(&input, 10, 7, seed).expect("write blank mix"),
        "contrast" => write_contrast_fixture(&input, 10, seed).expect("write contrast fixture"),
        other => {
            eprintln!("unknown fixture kind {other}; use demo, blank-mix, or contrast");
            std::process::exit(2);
        }
    }

    let mut config = PipelineConfig::mock_defaults(input.clone(), output);
    config.corpus_dir = Some(fixture_corpus_dir());
    config.seed = seed;
    config.run_date = Some("2024-10-23".to_string());
    let config_path = dir.join("run.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&config).expect("config serializes") + "\n",
    )
    .expect("write config");

    println!("fixture: {}", input.display());
    println!("config:  {}", config_path.display());
    println!("next:    trapline run --config {}", config_path.display());
}
