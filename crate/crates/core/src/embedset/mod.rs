//! The embeddings dataset: labeled bags of global (per-view) and local
//! (per-tile) embeddings produced by a frozen encoder.
//!
//! Embeddings are stored at 32-bit precision and promoted to 64-bit whenever
//! the head touches them. Invalid data is an error at load time; nothing is
//! repaired silently.

mod container;
mod split;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tilegeom::TileRect;

pub use container::{read_dataset, write_dataset, GEOMS_FILE, GLOBAL_FILE, MANIFEST_FILE, TILES_FILE};
pub use split::{split_patients, SplitRatios};
pub use synth::{synth_dataset, synth_dataset_with_truth, SynthConfig, SynthTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewRecord {
    pub view_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub tile_size: u32,
}

/// A tile's pixel box within one view of its bag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGeom {
    pub view_index: usize,
    pub rect: TileRect,
}

/// One labeled bag.
///
/// `global_embeds` holds one row of length `dim` per view and `tile_embeds`
/// one row per tile, both row-major. `tile_geoms[j]` locates tile row `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedBag {
    pub bag_id: String,
    pub patient_id: String,
    pub label: u8,
    pub dim: usize,
    pub views: Vec<ViewRecord>,
    pub global_embeds: Vec<f32>,
    pub tile_embeds: Vec<f32>,
    pub tile_geoms: Vec<TileGeom>,
}

impl EmbedBag {
    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_tiles(&self) -> usize {
        self.tile_geoms.len()
    }

    pub fn global_row(&self, view: usize) -> &[f32] {
        &self.global_embeds[view * self.dim..(view + 1) * self.dim]
    }

    pub fn tile_row(&self, tile: usize) -> &[f32] {
        &self.tile_embeds[tile * self.dim..(tile + 1) * self.dim]
    }

    /// Number of tiles belonging to each view.
    pub fn tiles_per_view(&self) -> Vec<usize> {
        let mut counts = vec![0; self.views.len()];
        for g in &self.tile_geoms {
            if let Some(c) = counts.get_mut(g.view_index) {
                *c += 1;
            }
        }
        counts
    }

    /// Checks every bag-level invariant against the dataset dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |reason: String| Error::InvalidBag {
            bag_id: self.bag_id.clone(),
            reason,
        };
        if self.dim != dim {
            return Err(Error::Dimension(format!(
                "bag {} has embedding dimension {}, dataset has {dim}",
                self.bag_id, self.dim
            )));
        }
        if self.label > 1 {
            return Err(bad(format!("label {} is not binary", self.label)));
        }
        if self.views.is_empty() {
            return Err(bad("bag has no views".into()));
        }
        if self.global_embeds.len() != self.views.len() * dim {
            return Err(Error::Dimension(format!(
                "bag {}: {} global values for {} views of dimension {dim}",
                self.bag_id,
                self.global_embeds.len(),
                self.views.len()
            )));
        }
        if self.tile_embeds.len() != self.tile_geoms.len() * dim {
            return Err(Error::Dimension(format!(
                "bag {}: {} tile values for {} tiles of dimension {dim}",
                self.bag_id,
                self.tile_embeds.len(),
                self.tile_geoms.len()
            )));
        }
        for v in &self.views {
            if v.image_width == 0 || v.image_height == 0 || v.tile_size == 0 {
                return Err(bad(format!("view {} has a zero dimension", v.view_id)));
            }
        }
        for (j, g) in self.tile_geoms.iter().enumerate() {
            let view = self
                .views
                .get(g.view_index)
                .ok_or_else(|| bad(format!("tile {j} references missing view {}", g.view_index)))?;
            if !g.rect.is_valid_within(view.image_width, view.image_height) {
                return Err(bad(format!(
                    "tile {j} box {:?} outside view {} ({}x{})",
                    g.rect, view.view_id, view.image_width, view.image_height
                )));
            }
        }
        if !self.global_embeds.iter().chain(&self.tile_embeds).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                bag_id: self.bag_id.clone(),
            });
        }
        Ok(())
    }
}

/// A whole embeddings dataset from one encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedDataset {
    pub encoder_name: String,
    pub embed_dim: usize,
    pub tile_size: u32,
    pub bags: Vec<EmbedBag>,
    pub splits: BTreeMap<String, Split>,
}

impl EmbedDataset {
    pub fn new(encoder_name: impl Into<String>, embed_dim: usize, tile_size: u32) -> Self {
        EmbedDataset {
            encoder_name: encoder_name.into(),
            embed_dim,
            tile_size,
            bags: Vec::new(),
            splits: BTreeMap::new(),
        }
    }

    pub fn bag(&self, bag_id: &str) -> Option<&EmbedBag> {
        self.bags.iter().find(|b| b.bag_id == bag_id)
    }

    pub fn split_of(&self, bag_id: &str) -> Option<Split> {
        self.splits.get(bag_id).copied()
    }

    /// Bags assigned to `split`, in dataset order.
    pub fn split_bags(&self, split: Split) -> Vec<&EmbedBag> {
        self.bags
            .iter()
            .filter(|b| self.split_of(&b.bag_id) == Some(split))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Dimension("embedding dimension must be at least 1".into()));
        }
        let mut ids = HashSet::new();
        for bag in &self.bags {
            if !ids.insert(bag.bag_id.as_str()) {
                return Err(Error::InvalidBag {
                    bag_id: bag.bag_id.clone(),
                    reason: "duplicate bag id".into(),
                });
            }
            bag.validate(self.embed_dim)?;
            if let Some(v) = bag.views.iter().find(|v| v.tile_size != self.tile_size) {
                return Err(Error::InvalidBag {
                    bag_id: bag.bag_id.clone(),
                    reason: format!(
                        "view {} uses tile size {}, dataset uses {}",
                        v.view_id, v.tile_size, self.tile_size
                    ),
                });
            }
        }
        if let Some(missing) = self.splits.keys().find(|id| !ids.contains(id.as_str())) {
            return Err(Error::invalid(format!("split assignment for unknown bag {missing}")));
        }
        check_patient_leakage(&self.bags, &self.splits)
    }
}

/// Fails if any patient has bags in more than one split.
pub fn check_patient_leakage(bags: &[EmbedBag], splits: &BTreeMap<String, Split>) -> Result<()> {
    let mut seen: HashMap<&str, Split> = HashMap::new();
    for bag in bags {
        let Some(&split) = splits.get(&bag.bag_id) else {
            continue;
        };
        match seen.get(bag.patient_id.as_str()) {
            Some(&prev) if prev != split => {
                let (first, second) = if prev < split { (prev, split) } else { (split, prev) };
                return Err(Error::PatientLeakage {
                    patient_id: bag.patient_id.clone(),
                    first: first.to_string(),
                    second: second.to_string(),
                });
            }
            Some(_) => {}
            None => {
                seen.insert(&bag.patient_id, split);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// A hand-built bag with `views` views of 100x100 pixels and `tiles` tiles
    /// all on view 0.
    pub fn tiny_bag(id: &str, patient: &str, label: u8, dim: usize, views: usize, tiles: usize) -> EmbedBag {
        let views_rec = (0..views)
            .map(|v| ViewRecord {
                view_id: format!("v{v}"),
                image_width: 100,
                image_height: 100,
                tile_size: 10,
            })
            .collect();
        EmbedBag {
            bag_id: id.into(),
            patient_id: patient.into(),
            label,
            dim,
            views: views_rec,
            global_embeds: (0..views * dim).map(|i| i as f32 * 0.25).collect(),
            tile_embeds: (0..tiles * dim).map(|i| -(i as f32) * 0.5).collect(),
            tile_geoms: (0..tiles)
                .map(|j| TileGeom {
                    view_index: 0,
                    rect: TileRect::new(10 * j as u32, 0, 10 * j as u32 + 10, 10),
                })
                .collect(),
        }
    }
}
