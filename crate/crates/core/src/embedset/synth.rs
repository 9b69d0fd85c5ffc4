//! Synthetic sparse-signal datasets for desk-scale experiments.
//!
//! Background instances are isotropic Gaussian noise. In a positive bag a few
//! tiles are shifted along one fixed unit direction; the bag's global
//! embeddings get a quarter of that shift, so the global stream carries only a
//! weak version of the signal.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{split_patients, EmbedBag, EmbedDataset, SplitRatios, TileGeom, ViewRecord};
use crate::error::{Error, Result};
use crate::tilegeom::TileRect;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_bags: usize,
    pub dim: usize,
    /// Inclusive range of views per bag.
    pub views_per_bag: (usize, usize),
    /// Inclusive range of tiles per view.
    pub tiles_per_view: (usize, usize),
    /// Inclusive range of planted signal tiles per positive bag.
    pub signal_tiles_per_positive: (usize, usize),
    pub signal_shift: f64,
    pub noise_scale: f64,
    pub positive_rate: f64,
    pub bags_per_patient: usize,
    pub tile_size: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_bags: 600,
            dim: 32,
            views_per_bag: (1, 2),
            tiles_per_view: (20, 200),
            signal_tiles_per_positive: (1, 3),
            signal_shift: 2.0,
            noise_scale: 1.0,
            positive_rate: 0.5,
            bags_per_patient: 2,
            tile_size: 64,
            seed: 7,
        }
    }
}

/// Ground truth the generator planted, for localization checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// Unit direction of the signal shift.
    pub direction: Vec<f64>,
    /// Tile row indices of planted signal tiles per positive bag.
    pub signal_tiles: BTreeMap<String, Vec<usize>>,
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        let range_ok = |(lo, hi): (usize, usize)| lo <= hi;
        if self.dim < 2 {
            return Err(Error::invalid("synthetic datasets need dim >= 2"));
        }
        if !range_ok(self.views_per_bag) || self.views_per_bag.0 == 0 {
            return Err(Error::invalid(format!("bad views_per_bag range {:?}", self.views_per_bag)));
        }
        if !range_ok(self.tiles_per_view) {
            return Err(Error::invalid(format!("bad tiles_per_view range {:?}", self.tiles_per_view)));
        }
        if !range_ok(self.signal_tiles_per_positive) {
            return Err(Error::invalid(format!(
                "bad signal_tiles_per_positive range {:?}",
                self.signal_tiles_per_positive
            )));
        }
        let min_tiles = self.views_per_bag.0 * self.tiles_per_view.0;
        if self.signal_tiles_per_positive.1 > min_tiles {
            return Err(Error::invalid(format!(
                "up to {} signal tiles requested but a bag may hold only {min_tiles} tiles",
                self.signal_tiles_per_positive.1
            )));
        }
        if !(0.0..=1.0).contains(&self.positive_rate) {
            return Err(Error::invalid("positive_rate must lie in [0, 1]"));
        }
        if self.bags_per_patient == 0 || self.tile_size == 0 {
            return Err(Error::invalid("bags_per_patient and tile_size must be at least 1"));
        }
        if !(self.signal_shift.is_finite() && self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::invalid("signal_shift and noise_scale must be finite, noise_scale >= 0"));
        }
        Ok(())
    }
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<EmbedDataset> {
    synth_dataset_with_truth(cfg).map(|(ds, _)| ds)
}

/// Generates the dataset and assigns 70/10/20 patient-grouped splits with the
/// same seed.
pub fn synth_dataset_with_truth(cfg: &SynthConfig) -> Result<(EmbedDataset, SynthTruth)> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;

    let mut direction: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let noise_row = |rng: &mut ChaCha8Rng, shift: f64| -> Vec<f32> {
        (0..d)
            .map(|k| {
                let z: f64 = rng.sample(StandardNormal);
                (cfg.noise_scale * z + shift * direction[k]) as f32
            })
            .collect()
    };

    let mut dataset = EmbedDataset::new("synthetic", d, cfg.tile_size);
    let mut signal_tiles = BTreeMap::new();
    for i in 0..cfg.n_bags {
        let bag_id = format!("B{i:05}");
        let label = u8::from(rng.random::<f64>() < cfg.positive_rate);
        let n_views = rng.random_range(cfg.views_per_bag.0..=cfg.views_per_bag.1);

        let mut views = Vec::with_capacity(n_views);
        let mut tile_geoms = Vec::new();
        for v in 0..n_views {
            let m = rng.random_range(cfg.tiles_per_view.0..=cfg.tiles_per_view.1);
            let cols = (m as f64).sqrt().ceil().max(1.0) as u32;
            let rows = (m as u32).div_ceil(cols).max(1);
            let ts = cfg.tile_size;
            views.push(ViewRecord {
                view_id: format!("V{v}"),
                image_width: cols * ts,
                image_height: rows * ts,
                tile_size: ts,
            });
            for k in 0..m as u32 {
                let (cx, cy) = (k % cols, k / cols);
                tile_geoms.push(TileGeom {
                    view_index: v,
                    rect: TileRect::new(cx * ts, cy * ts, (cx + 1) * ts, (cy + 1) * ts),
                });
            }
        }
        let n_tiles = tile_geoms.len();

        let global_shift = if label == 1 { cfg.signal_shift / 4.0 } else { 0.0 };
        let mut global_embeds = Vec::with_capacity(n_views * d);
        for _ in 0..n_views {
            global_embeds.extend(noise_row(&mut rng, global_shift));
        }

        let mut planted = vec![false; n_tiles];
        if label == 1 {
            let k = rng.random_range(cfg.signal_tiles_per_positive.0..=cfg.signal_tiles_per_positive.1);
            let mut chosen = index::sample(&mut rng, n_tiles, k).into_vec();
            chosen.sort_unstable();
            for &j in &chosen {
                planted[j] = true;
            }
            signal_tiles.insert(bag_id.clone(), chosen);
        }
        let mut tile_embeds = Vec::with_capacity(n_tiles * d);
        for &is_signal in &planted {
            let shift = if is_signal { cfg.signal_shift } else { 0.0 };
            tile_embeds.extend(noise_row(&mut rng, shift));
        }

        dataset.bags.push(EmbedBag {
            bag_id,
            patient_id: format!("P{:05}", i / cfg.bags_per_patient),
            label,
            dim: d,
            views,
            global_embeds,
            tile_embeds,
            tile_geoms,
        });
    }

    if !dataset.bags.is_empty() {
        dataset.splits = split_patients(&dataset.bags, SplitRatios::default(), cfg.seed)?;
    }
    dataset.validate()?;
    Ok((
        dataset,
        SynthTruth {
            direction,
            signal_tiles,
        },
    ))
}
