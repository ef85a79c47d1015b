use anyhow::{bail, Context, Result};
use log::info;
use triage_core::corpus::Corpus;
use triage_core::engine::trace::trace_csv_string;
use triage_core::engine::{LabelSource, RunState};

use crate::fsutil::write_atomic;
use crate::SimulateArgs;

pub fn run(args: &SimulateArgs) -> Result<()> {
    let config = args.run.to_config()?;
    let corpus = Corpus::load(&args.corpus)
        .with_context(|| format!("loading corpus {}", args.corpus.display()))?;
    if let Some(r) = corpus.reports().iter().find(|r| r.oracle_label.is_none()) {
        bail!("report `{}` has no oracle label; simulation needs every report labeled", r.id);
    }

    let mut state = match &args.checkpoint {
        Some(path) if path.exists() => {
            let state = RunState::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            if state.config != config {
                bail!("checkpoint {} was written with a different configuration", path.display());
            }
            info!("resuming from {} at t={}", path.display(), state.t());
            state
        }
        _ => RunState::init(corpus, config)?,
    };
    while !state.is_finished() {
        let record = state.run_timestep(LabelSource::Oracle)?;
        eprintln!(
            "t={} f1={} pseudo={} |D_u|={}",
            record.t,
            record.metrics.map(|m| format!("{:.4}", m.f1)).unwrap_or_else(|| "-".into()),
            record.pseudo_count,
            record.du_size
        );
        if let Some(path) = &args.checkpoint {
            state.save(path)?;
        }
    }
    if state.depleted {
        eprintln!("unlabeled pool exhausted after {} timestep(s)", state.t());
    }
    write_atomic(&args.out, trace_csv_string(&state.trace).as_bytes())?;
    println!("wrote {} timestep(s) to {}", state.trace.len(), args.out.display());
    Ok(())
}
