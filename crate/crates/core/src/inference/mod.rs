//! Binned negative-binomial likelihood, joint MAP fits, posterior sampling
//! and the summaries reported per gas.

mod mcmc;
mod model;
mod nb;
mod optimize;
mod sensitivity;
mod summary;

pub use mcmc::{
    autocorrelation_time, box_to_logit, default_scales, effective_sample_size, logit_log_jacobian,
    logit_to_box, run_ensemble, run_mapped, run_mcmc, split_rhat, McmcSettings, Posterior,
};
pub use model::{
    DatasetParams, FitDataset, JointModel, LikelihoodForm, ModelParams, ModelSettings,
};
pub use nb::{nb_log_pmf, nb_tail_significance, sample_counts, sample_nb, DEFAULT_OVERDISPERSION};
pub use optimize::{fit_map, gradient_norm, minimize_bounded, MapFit, Minimum, NelderMeadSettings};
pub use sensitivity::{
    background_only_fit, fixed_signal_fit, BackgroundFit, FixedSignalFit, ProfilePoint,
    SensitivitySettings,
};
pub use summary::{
    compare_to_gauge, estimate_pressures, summarize, DatasetSummary, GaugeComparison, Interval,
    PosteriorSummary, PressureEstimate,
};
