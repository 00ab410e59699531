use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Error, Result};
use crate::gradcore::seeded_rng;

/// Fractions of houses per split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.7, validation: 0.1, test: 0.2 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(*r > 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split ratios must be positive and sum to 1, got {}/{}/{}",
                self.train, self.validation, self.test
            )));
        }
        Ok(())
    }
}

/// Disjoint house sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl HouseSplit {
    pub fn role(&self, house: &str) -> Option<&'static str> {
        let has = |v: &Vec<String>| v.iter().any(|h| h == house);
        if has(&self.train) {
            Some("train")
        } else if has(&self.validation) {
            Some("validation")
        } else if has(&self.test) {
            Some("test")
        } else {
            None
        }
    }
}

fn sizes(n: usize, ratios: &SplitRatios) -> (usize, usize, usize) {
    let val = ((n as f64 * ratios.validation).round() as usize).max(1);
    let test = ((n as f64 * ratios.test).round() as usize).max(1);
    (n.saturating_sub(val + test), val, test)
}

fn unique_sorted(houses: &[String]) -> Result<Vec<String>> {
    let set: BTreeSet<&String> = houses.iter().collect();
    if set.len() != houses.len() {
        return Err(validation_err!("house ids must be unique"));
    }
    Ok(set.into_iter().cloned().collect())
}

fn split_group(houses: Vec<String>, ratios: &SplitRatios, seed: u64) -> Result<HouseSplit> {
    let (train, val, _) = sizes(houses.len(), ratios);
    if houses.len() < 3 || train == 0 {
        return Err(validation_err!("need at least 3 houses to split, got {}", houses.len()));
    }
    let mut shuffled = houses;
    shuffled.shuffle(&mut seeded_rng(seed));
    let mut rest = shuffled.split_off(train);
    let test = rest.split_off(val);
    let mut out = HouseSplit { train: shuffled, validation: rest, test };
    out.train.sort();
    out.validation.sort();
    out.test.sort();
    Ok(out)
}

/// Seeded random partition of house ids. Validation and test get at least
/// one house each; the input order does not matter.
pub fn split_houses(houses: &[String], ratios: SplitRatios, seed: u64) -> Result<HouseSplit> {
    ratios.validate()?;
    split_group(unique_sorted(houses)?, &ratios, seed)
}

/// Splits owners and non-owners separately so every split contains both.
/// Each group needs at least three houses.
pub fn split_houses_stratified(houses: &[(String, bool)], ratios: SplitRatios, seed: u64) -> Result<HouseSplit> {
    ratios.validate()?;
    let ids: Vec<String> = houses.iter().map(|(h, _)| h.clone()).collect();
    unique_sorted(&ids)?;
    let group = |owns: bool| -> Vec<String> {
        let mut g: Vec<String> = houses.iter().filter(|(_, o)| *o == owns).map(|(h, _)| h.clone()).collect();
        g.sort();
        g
    };
    let owners = split_group(group(true), &ratios, seed)?;
    let others = split_group(group(false), &ratios, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let merge = |a: Vec<String>, b: Vec<String>| {
        let mut v: Vec<String> = a.into_iter().chain(b).collect();
        v.sort();
        v
    };
    Ok(HouseSplit {
        train: merge(owners.train, others.train),
        validation: merge(owners.validation, others.validation),
        test: merge(owners.test, others.test),
    })
}
