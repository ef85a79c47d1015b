pub mod compare;
pub mod ingest;
pub mod runs;
pub mod serve;
pub mod simulate;
pub mod synth;
