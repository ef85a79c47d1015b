use std::collections::HashMap;

use anyhow::{bail, Context, Result};
use log::info;
use tokio::net::TcpListener;
use triage_core::corpus::Corpus;

use crate::ServeArgs;

pub async fn run(args: &ServeArgs) -> Result<()> {
    let mut corpora = HashMap::new();
    for path in &args.corpus {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .with_context(|| format!("no file name in {}", path.display()))?;
        let corpus = Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))?;
        info!("corpus `{name}`: {} reports", corpus.len());
        if corpora.insert(name.clone(), corpus).is_some() {
            bail!("two corpora share the name `{name}`");
        }
    }
    let state = triage_service::open_state(&args.state_dir, corpora)?;
    let addr = format!("{}:{}", args.host, args.port);
    let listener = TcpListener::bind(&addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    triage_service::serve(listener, state, shutdown_signal()).await?;
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("installing SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
    eprintln!("shutting down");
}
