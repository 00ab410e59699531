use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Error, Result};

/// Per-appliance constants: ON threshold, mean ON power and the forward-fill
/// limit of the dataset it comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceProfile {
    pub name: String,
    pub on_threshold_w: f64,
    pub mean_power_w: f64,
    pub max_ffill_s: i64,
}

impl ApplianceProfile {
    pub fn new(name: impl Into<String>, on_threshold_w: f64, mean_power_w: f64, max_ffill_s: i64) -> Result<Self> {
        let p = Self { name: name.into(), on_threshold_w, mean_power_w, max_ffill_s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.on_threshold_w > 0.0 && self.on_threshold_w <= self.mean_power_w) {
            return Err(validation_err!(
                "profile {}: need 0 < on_threshold_w ({}) <= mean_power_w ({})",
                self.name,
                self.on_threshold_w,
                self.mean_power_w
            ));
        }
        if self.max_ffill_s < 0 {
            return Err(validation_err!("profile {}: max_ffill_s must be non-negative", self.name));
        }
        Ok(())
    }

    /// Reference appliances. Forward-fill limits follow the public datasets
    /// the appliances are usually studied on (3 min for kitchen and laundry
    /// appliances, 30 min for the shower, 90 min for the EV).
    pub fn builtin(name: &str) -> Option<Self> {
        let (thr, mean, ffill) = match name {
            "dishwasher" => (300.0, 800.0, 180),
            "washing_machine" => (300.0, 500.0, 180),
            "microwave" => (200.0, 1000.0, 180),
            "kettle" => (500.0, 2000.0, 180),
            "shower" => (1000.0, 8000.0, 1800),
            "electric_vehicle" => (1000.0, 4000.0, 5400),
            _ => return None,
        };
        Some(Self { name: name.into(), on_threshold_w: thr, mean_power_w: mean, max_ffill_s: ffill })
    }
}

#[derive(Debug, Deserialize)]
struct ProfileFile {
    #[serde(default)]
    appliance: Vec<ApplianceProfile>,
}

/// Reads `[[appliance]]` tables (`name`, `on_threshold_w`, `mean_power_w`,
/// `max_ffill_s`) from a TOML file.
pub fn load_profiles(path: &Path) -> Result<Vec<ApplianceProfile>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ProfileFile =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e.message())))?;
    for p in &file.appliance {
        p.validate()?;
    }
    Ok(file.appliance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        for name in ["dishwasher", "washing_machine", "microwave", "kettle", "shower", "electric_vehicle"] {
            ApplianceProfile::builtin(name).unwrap().validate().unwrap();
        }
        assert!(ApplianceProfile::builtin("fridge").is_none());
    }

    #[test]
    fn threshold_must_not_exceed_mean_power() {
        assert!(ApplianceProfile::new("x", 900.0, 800.0, 0).is_err());
        assert!(ApplianceProfile::new("x", 0.0, 800.0, 0).is_err());
    }

    #[test]
    fn loads_profiles_from_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        std::fs::write(
            &path,
            "[[appliance]]\nname = \"dishwasher\"\non_threshold_w = 300.0\nmean_power_w = 800.0\nmax_ffill_s = 180\n",
        )
        .unwrap();
        assert_eq!(load_profiles(&path).unwrap(), vec![ApplianceProfile::builtin("dishwasher").unwrap()]);
        std::fs::write(&path, "[[appliance]]\nname = \"x\"\n").unwrap();
        assert!(load_profiles(&path).is_err());
    }
}
