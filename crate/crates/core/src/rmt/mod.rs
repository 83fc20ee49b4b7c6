//! Random-matrix oracles: limiting spectral laws, support edges,
//! phase-transition thresholds and spike forward maps for the three model
//! families.

mod autocov;
mod fisher;
mod marchenko_pastur;
pub mod quad;

pub use autocov::{
    autocov_factor_limit, autocov_identifiable_count, autocov_t1, AutocovLaw, EdgeTransform,
    FactorLimit, FactorSignature, EDGE_OFFSET, EDGE_OFFSET_SENSITIVITY,
};
pub use fisher::{fisher_identifiable_count, fisher_spike_map, FisherLaw};
pub use marchenko_pastur::{
    mp_quantile, pop_identifiable_count, pop_spike_map, pop_threshold, MpLaw,
};
