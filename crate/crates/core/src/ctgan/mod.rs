//! Conditional tabular GAN used to sample a test point's locality.

mod gmm;
mod io;
mod layout;
mod train;

pub use gmm::{fit_em, fit_mode_normalizer, EmFit, Mode, ModeNormalizer, DEFAULT_K_MODES, MIN_STDEV, MODE_WEIGHT_FLOOR};
pub use io::{HEADER_FILE, PARAMS_FILE};
pub use layout::{sample_cond_vector, CategoryCounts, CondChoice, EncodedLayout, FrequencyTable, Segment};
pub use train::{train_ctgan, CtganConfig, CtganModel, EpochLosses, GUMBEL_TAU};
