use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::WindowDataset;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format_version: u32,
    dataset: WindowDataset,
}

/// Stores a preprocessed dataset as JSON so later runs skip preprocessing.
pub fn save_dataset(data: &WindowDataset, path: &Path) -> Result<()> {
    data.validate()?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let cache = CacheFile { format_version: DATASET_FORMAT_VERSION, dataset: data.clone() };
    serde_json::to_writer(BufWriter::new(file), &cache).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_dataset(path: &Path) -> Result<WindowDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let cache: CacheFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if cache.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "dataset format version {} is not supported (expected {DATASET_FORMAT_VERSION})",
            cache.format_version
        )));
    }
    cache.dataset.validate()?;
    Ok(cache.dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataproc::{make_windows, PowerSeries};
    use crate::localizer::StatusSeries;

    #[test]
    fn cache_round_trip() {
        let agg = PowerSeries::regular("h", 0, 60, (0..12).map(|i| i as f64 * 37.25).collect());
        let st = StatusSeries::new((0..12).map(|i| (i % 5 == 0) as u8).collect(), "a");
        let d = make_windows(&agg, Some(&st), Some(&agg), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);
        std::fs::write(&path, "{\"format_version\":9,\"dataset\":null}").unwrap();
        assert!(load_dataset(&path).is_err());
    }
}
