use std::fmt::Write;

use anyhow::Result;
use serde_json::json;
use triage_core::synth::{synthetic_corpus, SynthConfig};

use crate::fsutil::{refuse_overwrite, write_atomic};
use crate::SynthArgs;

pub fn run(args: &SynthArgs) -> Result<()> {
    refuse_overwrite(&args.out, args.force)?;
    let corpus = synthetic_corpus(&SynthConfig {
        reports: args.reports,
        seed: args.seed,
        label_noise: args.label_noise,
        ..SynthConfig::default()
    });
    let mut out = String::new();
    for r in corpus.reports() {
        let row = json!({
            "id": r.id,
            "project": r.project,
            "title": r.title,
            "body": r.body,
            "label": r.oracle_label.map(|l| l.as_str()),
        });
        writeln!(out, "{row}")?;
    }
    write_atomic(&args.out, out.as_bytes())?;
    println!("wrote {} reports to {}", corpus.len(), args.out.display());
    Ok(())
}
