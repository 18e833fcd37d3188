//! Synthetic channel data: generation, pilot observations, persistence,
//! cleaning and classic augmentation.

pub mod augment;
pub mod clean;
pub mod dataset;
pub mod delay;
pub mod generate;
pub mod pilot;
pub mod sample;
pub mod scenario;

pub use augment::augment_classic;
pub use clean::{clean_dataset, CleanPolicy, DEFAULT_ZSCORE_THRESHOLD, IQR_FENCE};
pub use dataset::{
    build_dataset, load_dataset, save_dataset, ChannelDataset, DatasetError, GenerationConfig, ImbalanceRatio, Manifest,
    FORMAT_VERSION, MANIFEST_FILE, PAYLOAD_FILE, SAMPLE_BYTES,
};
pub use delay::{rms_delay_spread, rms_delay_spread_taps};
pub use generate::{generate_channel, generate_channel_with, MultipathParams};
pub use pilot::{interpolate_pilots, make_pilot_observation, noise_variance, observe, PilotError, PilotMask, PilotObservation};
pub use sample::{AugmentKind, ChannelMatrix, ChannelSample, Origin, GRID_LEN, N_ANT, N_SC};
pub use scenario::{CarrierBand, Environment, Mobility, ScenarioClass};
