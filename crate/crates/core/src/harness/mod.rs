//! Batch experiments on top of the engine: synthetic corpora, evaluation,
//! threshold sweeps, ablation grids and the end-to-end pipeline.

mod corpus;
mod eval;
pub mod io;
mod model;
mod pipeline;
mod svg;

pub use corpus::{gen_corpus, CorpusConfig, CorpusFile, Task, TaskSet};
pub use eval::{
    ablate, evaluate, evaluate_with_transcripts, parse_taus, sweep, task_seed, AblationCell, AblationReport, EvalReport,
    SweepReport, SweepRow, TaskResult,
};
pub use model::{load_model, ModelSpec};
pub use pipeline::{
    build_records, record_trajectories, DistillStage,
    run_pipeline, CorpusStage, Manifest, ManifestEntry, ModelStage, PipelineConfig,
    PipelineSummary,
};
pub use svg::render_svg;

use std::path::PathBuf;

use thiserror::Error;

use crate::aup::AupError;
use crate::denoiser::DenoiseError;
use crate::engine::EngineError;
use crate::sequence::SequenceError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Aup(#[from] AupError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Denoiser(#[from] DenoiseError),
    #[error("task {task}: {source}")]
    Task {
        task: usize,
        #[source]
        source: EngineError,
    },
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    /// Process exit code: 1 usage or configuration, 2 bad input data,
    /// 3 internal invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Data(_) | HarnessError::Io { .. } | HarnessError::Parse { .. } => 2,
            HarnessError::Aup(AupError::InvalidParameter(_)) => 1,
            HarnessError::Aup(_) => 2,
            HarnessError::Sequence(e) => match e {
                SequenceError::InvalidSchedule(_) | SequenceError::InvalidVocab(_) => 1,
                SequenceError::Teacher { source, .. } => denoise_code(source),
                _ => 2,
            },
            HarnessError::Denoiser(e) => denoise_code(e),
            HarnessError::Task { source, .. } => match source {
                EngineError::Config(_) => 1,
                EngineError::Denoiser { source, .. } => denoise_code(source),
                EngineError::Contract(_) | EngineError::Invariant(_) | EngineError::Terminated => 3,
            },
            HarnessError::Stage { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn at(self, stage: &'static str) -> Self {
        HarnessError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

fn denoise_code(e: &DenoiseError) -> i32 {
    match e {
        DenoiseError::Config(_) => 1,
        DenoiseError::Training(_) | DenoiseError::Fit(_) => 2,
        DenoiseError::Contract(_) => 3,
    }
}
