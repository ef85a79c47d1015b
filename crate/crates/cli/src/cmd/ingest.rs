use anyhow::{Context, Result};
use triage_core::corpus::load_dataset;

use crate::fsutil::{refuse_overwrite, write_atomic};
use crate::IngestArgs;

pub fn run(args: &IngestArgs) -> Result<()> {
    refuse_overwrite(&args.out, args.force)?;
    let (corpus, manifest) = load_dataset(&args.input, args.format.into())
        .with_context(|| format!("reading {}", args.input.display()))?;
    write_atomic(&args.out, corpus.to_json()?.as_bytes())?;
    println!(
        "reports={} bugs={} nonbugs={} unlabeled={}",
        manifest.report_count,
        manifest.bug_count,
        manifest.nonbug_count,
        manifest.report_count - manifest.bug_count - manifest.nonbug_count
    );
    Ok(())
}
