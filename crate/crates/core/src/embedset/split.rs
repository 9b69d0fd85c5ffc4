use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EmbedBag, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.10,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        let parts = r.as_array();
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!("split ratios must be non-negative, got {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios must sum to 1, got {parts:?}")));
        }
        Ok(r)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Largest-remainder apportionment of `n` items over the ratios; remainder
/// ties go to the earlier split.
fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| r * n as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Assigns every bag to train/val/test so that all bags of a patient share a
/// split. Patients are stratified by their maximum bag label and shuffled
/// with a seeded generator; each stratum is apportioned separately.
pub fn split_patients(bags: &[EmbedBag], ratios: SplitRatios, seed: u64) -> Result<BTreeMap<String, Split>> {
    let ratios = SplitRatios::new(ratios.train, ratios.val, ratios.test)?;
    if bags.is_empty() {
        return Err(Error::invalid("cannot split an empty bag list"));
    }
    let mut patient_label: BTreeMap<&str, u8> = BTreeMap::new();
    for bag in bags {
        let e = patient_label.entry(bag.patient_id.as_str()).or_insert(0);
        *e = (*e).max(bag.label);
    }
    let n_splits = ratios.as_array().iter().filter(|&&r| r > 0.0).count();
    if patient_label.len() < n_splits {
        return Err(Error::invalid(format!(
            "{} patients cannot fill {n_splits} splits",
            patient_label.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: BTreeMap<&str, Split> = BTreeMap::new();
    for stratum in [0u8, 1] {
        let mut patients: Vec<&str> = patient_label
            .iter()
            .filter(|(_, &l)| l == stratum)
            .map(|(&p, _)| p)
            .collect();
        patients.shuffle(&mut rng);
        let counts = apportion(patients.len(), ratios.as_array());
        let mut it = patients.into_iter();
        for (split, &count) in Split::ALL.iter().zip(&counts) {
            for p in it.by_ref().take(count) {
                assignment.insert(p, *split);
            }
        }
    }

    Ok(bags
        .iter()
        .map(|b| (b.bag_id.clone(), assignment[b.patient_id.as_str()]))
        .collect())
}
