use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::dccl::DcclError;
use crate::encoder::EncoderError;
use crate::evaluation::EvalError;
use crate::lexicon::LexiconError;
use crate::prompting::PromptError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Dccl(#[from] DcclError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }

    /// Process exit code: 2 config, 3 data, 4 runtime/training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Corpus(_) | Error::Lexicon(_) | Error::Io { .. } => 3,
            Error::Eval(
                EvalError::IdMismatch(_)
                | EvalError::LengthMismatch { .. }
                | EvalError::EmptyInput
                | EvalError::DimensionMismatch { .. }
                | EvalError::TooFewSamples { .. }
                | EvalError::Malformed { .. },
            ) => 3,
            Error::Encoder(e) | Error::Dccl(DcclError::Encoder(e)) => encoder_exit_code(e),
            Error::Dccl(DcclError::InvalidConfig(_)) => 2,
            Error::Dccl(DcclError::SingleDomainDataset | DcclError::MissingClass(_) | DcclError::Corpus(_)) => 3,
            Error::Prompt(PromptError::MissingEndpoint(_) | PromptError::UnknownTemplate(_)) => 2,
            Error::Prompt(PromptError::Corpus(_)) => 3,
            Error::Dccl(_) | Error::Prompt(_) | Error::Eval(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

fn encoder_exit_code(e: &EncoderError) -> i32 {
    match e {
        EncoderError::InvalidConfig(_) => 2,
        EncoderError::Checkpoint(_) | EncoderError::Corpus(_) => 3,
        _ => 4,
    }
}
