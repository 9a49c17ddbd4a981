use thiserror::Error;

/// Error taxonomy shared by every module.
///
/// `Dimension` covers shape and size violations, `Config` covers invalid
/// hyperparameters, `Format` covers file-format violations (bad magic,
/// truncation, NaN payloads), `UndefinedMetric` is raised when a metric has
/// no valid pixels to average over, and `SceneSpec` covers invalid synthetic
/// scene descriptions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("scene spec error: {0}")]
    SceneSpec(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
