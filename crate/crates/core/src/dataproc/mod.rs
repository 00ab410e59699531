//! Preprocessing of raw smart-meter recordings into labelled windows.
//!
//! The pipeline per house is: read CSV, [`resample`] onto a regular grid by
//! interval averaging, [`forward_fill`] short gaps, [`derive_status`] from the
//! appliance sub-meter, then [`make_windows`] into non-overlapping, kW-scaled
//! windows. Datasets from several houses are concatenated, optionally
//! balanced, and houses are split into train/validation/test sets.

mod cache;
mod csvio;
mod profile;
mod series;
mod split;
mod windows;

pub use cache::{load_dataset, save_dataset, DATASET_FORMAT_VERSION};
pub use csvio::{parse_timestamp, read_house_csv, write_house_csv, write_status_csv, HouseRecording};
pub use profile::{load_profiles, ApplianceProfile};
pub use series::{derive_status, forward_fill, resample, PowerSeries};
pub use split::{split_houses, split_houses_stratified, HouseSplit, SplitRatios};
pub use windows::{balance_undersample, broadcast_possession_label, make_windows, WindowDataset, SCALE_W_PER_UNIT};

/// Window length used throughout.
pub const DEFAULT_WINDOW_LEN: usize = 510;
