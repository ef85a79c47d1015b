use std::time::Duration;

use anyhow::Result;
use triage_client::Client;
use triage_core::api::{CorrectionRequest, JobStatus, LabelSubmission, RunSummary};

use crate::fsutil::write_atomic;
use crate::{RunsArgs, RunsCommand};

fn print_summary(s: &RunSummary) {
    println!("run      {}", s.run_id);
    println!("corpus   {}", s.corpus);
    println!("phase    {}", serde_json::to_value(s.phase).unwrap_or_default().as_str().unwrap_or("?"));
    println!("t        {} of {}", s.t, s.timesteps);
    println!("pending  {}", s.queue_pending);
    if let Some(m) = s.latest_metrics {
        println!("f1       {:.4} (precision {:.4}, recall {:.4})", m.f1, m.precision, m.recall);
    }
    if s.depleted {
        println!("unlabeled pool exhausted");
    }
    match &s.job {
        JobStatus::Idle => {}
        JobStatus::Running { target_t } => println!("job      advancing to t={target_t}"),
        JobStatus::Completed { t } => println!("job      completed t={t}"),
        JobStatus::Failed { target_t, code, message, retryable } => println!(
            "job      failed at t={target_t}: {code}: {message}{}",
            if *retryable { " (retryable)" } else { "" }
        ),
    }
}

fn emit(text: &str, out: Option<&std::path::Path>) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub async fn run(args: &RunsArgs) -> Result<()> {
    let client = Client::new(&args.server);
    match &args.command {
        RunsCommand::Create { corpus, run } => {
            let summary = client.create_run(corpus, &run.to_config()?).await?;
            print_summary(&summary);
        }
        RunsCommand::List => {
            for s in client.list_runs().await? {
                println!("{}  {}  t={}/{}  pending={}", s.run_id, s.corpus, s.t, s.timesteps, s.queue_pending);
            }
        }
        RunsCommand::Status { run_id } => print_summary(&client.run(run_id).await?),
        RunsCommand::Queue { run_id, json } => {
            let q = client.queue(run_id).await?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&q)?);
            } else {
                for e in &q.entries {
                    println!(
                        "{}  score={:.3}  {}",
                        e.id,
                        e.aggregate,
                        e.title.lines().next().unwrap_or_default()
                    );
                }
            }
        }
        RunsCommand::Label { run_id, id, label, readability, identifiability, elapsed_ms, labeler } => {
            let ack = client
                .submit_label(
                    run_id,
                    &LabelSubmission {
                        report_id: id.clone(),
                        label: (*label).into(),
                        readability_rating: *readability,
                        identifiability_rating: *identifiability,
                        elapsed_ms: *elapsed_ms,
                        labeler: labeler.clone(),
                    },
                )
                .await?;
            println!("labeled {}; {} pending", ack.report_id, ack.queue_pending);
        }
        RunsCommand::Correct { run_id, id, label, labeler } => {
            let ack = client
                .correct_label(
                    run_id,
                    &CorrectionRequest {
                        report_id: id.clone(),
                        label: (*label).into(),
                        labeler: labeler.clone(),
                    },
                )
                .await?;
            println!("corrected {}", ack.report_id);
        }
        RunsCommand::Advance { run_id, wait, timeout_secs } => {
            let accepted = client.advance(run_id).await?;
            if *wait {
                let s = client
                    .wait_for_job(run_id, Duration::from_millis(250), Duration::from_secs(*timeout_secs))
                    .await?;
                print_summary(&s);
                if let JobStatus::Failed { message, .. } = s.job {
                    anyhow::bail!("advance failed: {message}");
                }
            } else if let JobStatus::Running { target_t } = accepted.job {
                println!("advancing {run_id} to t={target_t}");
            }
        }
        RunsCommand::Trace { run_id, csv, out } => {
            let text = if *csv {
                client.trace_csv(run_id).await?
            } else {
                serde_json::to_string_pretty(&client.trace(run_id).await?)? + "\n"
            };
            emit(&text, out.as_deref())?;
        }
        RunsCommand::Annotations { run_id, out } => {
            emit(&client.annotations_csv(run_id).await?, out.as_deref())?;
        }
    }
    Ok(())
}
