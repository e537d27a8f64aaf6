//! Probabilistic filter banks as spectral-mixture Gaussian processes.
//!
//! A signal is modelled as a sum of frequency-shifted Matérn Gaussian
//! processes. Each channel has an exact linear state-space form, so
//! posterior subbands, reconstructions and the marginal likelihood come from
//! Kalman filtering and smoothing in `O(M³T)` time, while hyperparameters are
//! fitted in the frequency domain against the periodogram.

pub mod error;
pub mod kalman;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod sampling;
pub mod state_space;
pub mod subbands;
pub mod whittle;

pub use error::{Error, Result};
pub use kalman::{
    kalman_filter, log_marginal_likelihood, reconstruct, rts_smoother, smooth, CovarianceStorage, FilterOutput,
    ObservationSequence, PosteriorSummary, Reconstruction,
};
pub use kernel::{MaternComponent, MaternOrder, SpectralMixtureModel};
pub use state_space::{
    apply_frequency_shift, assemble_model_sde, discretize, matern_baseband_sde, rotation_matrix, ChannelLayout,
    DiscreteStateSpace, LtiSde,
};
pub use sampling::{sample_posterior, sample_posterior_lean, sample_prior, PriorSample};
pub use subbands::{extract_subbands, SubbandTrack, Subbands};
pub use whittle::{
    compute_periodogram, fit, init_model, smooth_spectrum, whittle_gradient, whittle_loglik, FitConfig, FitResult,
    Periodogram, Termination,
};
pub use oracle::{dense_gp_loglik, dense_gp_posterior, DenseRoute};

// Book chapters compiled as doc-tests so their snippets stay in sync with the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/state_space.md")]
    mod state_space {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/missing_data.md")]
    mod missing_data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
