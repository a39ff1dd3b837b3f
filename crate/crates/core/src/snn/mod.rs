//! Leaky integrate-and-fire networks converted from tailored CNNs.

mod lif;
mod model;
mod normalize;

pub use lif::{lif_step, LifConfig, LifState, SpikeFn};
pub use model::{
    convert, forward_spiking, readout, readout_counts, simulate, Activity, Record, SnnModel,
    StepOutput,
};
pub use normalize::{
    max_positive_input, normalize_data_based, normalize_model_based, record_max_activations,
};
