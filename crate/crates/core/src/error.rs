use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("scan is empty")]
    EmptyScan,
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("no usable voxels")]
    NoUsableVoxels,
    #[error("no correspondences")]
    NoCorrespondences,
    #[error("no observable directions")]
    NoObservableDirections,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(&'static str),
    #[error("sensor pose lies outside the environment")]
    SensorOutside,
    #[error("empty input")]
    EmptyInput,
}
