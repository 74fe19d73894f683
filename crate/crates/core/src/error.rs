use thiserror::Error;

use crate::boosting::BoostError;
use crate::data::DataError;
use crate::nn::NnError;
use crate::surgery::SurgeryError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Boost(#[from] BoostError),

    #[error(transparent)]
    Surgery(#[from] SurgeryError),
}
