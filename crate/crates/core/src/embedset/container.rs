//! On-disk container: a directory holding
//!
//! - `manifest.json`: format tag, version, encoder name, dimensions and one
//!   record per bag with row offsets into the binary arrays,
//! - `global.f32`, `tiles.f32`: little-endian `f32`, row-major, `embed_dim`
//!   values per row,
//! - `tile_geoms.i32`: little-endian `i32`, five per tile
//!   (`view_index, x0, y0, x1, y1`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbedBag, EmbedDataset, Split, TileGeom, ViewRecord};
use crate::error::{Error, Result};
use crate::tilegeom::TileRect;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GLOBAL_FILE: &str = "global.f32";
pub const TILES_FILE: &str = "tiles.f32";
pub const GEOMS_FILE: &str = "tile_geoms.i32";

const FORMAT_TAG: &str = "milpf-embeddings";
const FORMAT_VERSION: u32 = 1;
const GEOM_FIELDS: usize = 5;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    format_version: u32,
    encoder_name: String,
    embed_dim: usize,
    tile_size: u32,
    n_global_rows: u64,
    n_tile_rows: u64,
    bags: Vec<BagRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BagRecord {
    bag_id: String,
    patient_id: String,
    label: u8,
    split: Option<Split>,
    global_offset: u64,
    tile_offset: u64,
    views: Vec<ViewEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewEntry {
    view_id: String,
    width: u32,
    height: u32,
    n_tiles: u64,
}

pub fn write_dataset(dataset: &EmbedDataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let dim = dataset.embed_dim;
    let mut global = Vec::new();
    let mut tiles = Vec::new();
    let mut geoms = Vec::new();
    let mut records = Vec::with_capacity(dataset.bags.len());
    let (mut g_rows, mut t_rows) = (0u64, 0u64);

    for bag in &dataset.bags {
        let per_view = bag.tiles_per_view();
        records.push(BagRecord {
            bag_id: bag.bag_id.clone(),
            patient_id: bag.patient_id.clone(),
            label: bag.label,
            split: dataset.split_of(&bag.bag_id),
            global_offset: g_rows,
            tile_offset: t_rows,
            views: bag
                .views
                .iter()
                .zip(&per_view)
                .map(|(v, &n)| ViewEntry {
                    view_id: v.view_id.clone(),
                    width: v.image_width,
                    height: v.image_height,
                    n_tiles: n as u64,
                })
                .collect(),
        });

        for v in &bag.global_embeds {
            global.extend_from_slice(&v.to_le_bytes());
        }
        for v in &bag.tile_embeds {
            tiles.extend_from_slice(&v.to_le_bytes());
        }
        for g in &bag.tile_geoms {
            let fields = [g.view_index as u32, g.rect.x0, g.rect.y0, g.rect.x1, g.rect.y1];
            for f in fields {
                let v = i32::try_from(f)
                    .map_err(|_| Error::invalid(format!("bag {}: tile coordinate {f} exceeds i32", bag.bag_id)))?;
                geoms.extend_from_slice(&v.to_le_bytes());
            }
        }
        g_rows += bag.n_views() as u64;
        t_rows += bag.n_tiles() as u64;
    }
    debug_assert_eq!(global.len() as u64, g_rows * dim as u64 * 4);

    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        format_version: FORMAT_VERSION,
        encoder_name: dataset.encoder_name.clone(),
        embed_dim: dim,
        tile_size: dataset.tile_size,
        n_global_rows: g_rows,
        n_tile_rows: t_rows,
        bags: records,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');

    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write(GLOBAL_FILE, &global)?;
    write(TILES_FILE, &tiles)?;
    write(GEOMS_FILE, &geoms)?;
    write(MANIFEST_FILE, &json)
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| Error::io(path, e))
}

/// Checks a payload's byte length against the manifest. A payload that holds
/// a whole number of rows of the wrong width is reported as a dimension
/// mismatch rather than truncation.
fn check_payload(name: &str, found: usize, rows: u64, width: usize, elem: usize, what: &str) -> Result<()> {
    let expected = rows * width as u64 * elem as u64;
    let found = found as u64;
    if found == expected {
        return Ok(());
    }
    if rows > 0 && found % (rows * elem as u64) == 0 {
        let actual = found / (rows * elem as u64);
        return Err(Error::Dimension(format!(
            "{name}: manifest declares {what} {width} but payload holds rows of {actual} values"
        )));
    }
    Err(Error::PayloadSize {
        file: name.into(),
        expected,
        found,
    })
}

pub fn read_dataset(dir: &Path) -> Result<EmbedDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let raw = read_file(dir, MANIFEST_FILE)?;
    let manifest: Manifest = serde_json::from_slice(&raw).map_err(|source| Error::Manifest {
        path: manifest_path,
        source,
    })?;
    if manifest.format != FORMAT_TAG {
        return Err(Error::Format(format!(
            "format tag '{}' (expected '{FORMAT_TAG}')",
            manifest.format
        )));
    }
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "format_version {} (this build reads version {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let dim = manifest.embed_dim;
    if dim == 0 {
        return Err(Error::Dimension("embed_dim must be at least 1".into()));
    }

    let global = read_file(dir, GLOBAL_FILE)?;
    let tiles = read_file(dir, TILES_FILE)?;
    let geoms = read_file(dir, GEOMS_FILE)?;
    check_payload(GLOBAL_FILE, global.len(), manifest.n_global_rows, dim, 4, "embed_dim")?;
    check_payload(TILES_FILE, tiles.len(), manifest.n_tile_rows, dim, 4, "embed_dim")?;
    check_payload(GEOMS_FILE, geoms.len(), manifest.n_tile_rows, GEOM_FIELDS, 4, "geometry width")?;

    let f32s = |bytes: &[u8]| -> Vec<f32> {
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    };
    let global = f32s(&global);
    let tiles = f32s(&tiles);
    let geoms: Vec<i32> = geoms
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut dataset = EmbedDataset::new(manifest.encoder_name, dim, manifest.tile_size);
    for rec in manifest.bags {
        let n_views = rec.views.len() as u64;
        let n_tiles: u64 = rec.views.iter().map(|v| v.n_tiles).sum();
        let out_of_range = |what: &str, offset: u64, n: u64, total: u64| Error::InvalidBag {
            bag_id: rec.bag_id.clone(),
            reason: format!("{what} rows {offset}..{} exceed the {total} stored rows", offset + n),
        };
        if rec.global_offset + n_views > manifest.n_global_rows {
            return Err(out_of_range("global", rec.global_offset, n_views, manifest.n_global_rows));
        }
        if rec.tile_offset + n_tiles > manifest.n_tile_rows {
            return Err(out_of_range("tile", rec.tile_offset, n_tiles, manifest.n_tile_rows));
        }
        let g0 = rec.global_offset as usize * dim;
        let t0 = rec.tile_offset as usize * dim;
        let geo0 = rec.tile_offset as usize * GEOM_FIELDS;

        let mut tile_geoms = Vec::with_capacity(n_tiles as usize);
        for j in 0..n_tiles as usize {
            let f = &geoms[geo0 + j * GEOM_FIELDS..geo0 + (j + 1) * GEOM_FIELDS];
            if f.iter().any(|&v| v < 0) {
                return Err(Error::InvalidBag {
                    bag_id: rec.bag_id.clone(),
                    reason: format!("tile {j} has negative geometry {f:?}"),
                });
            }
            tile_geoms.push(TileGeom {
                view_index: f[0] as usize,
                rect: TileRect::new(f[1] as u32, f[2] as u32, f[3] as u32, f[4] as u32),
            });
        }

        let bag = EmbedBag {
            bag_id: rec.bag_id,
            patient_id: rec.patient_id,
            label: rec.label,
            dim,
            views: rec
                .views
                .iter()
                .map(|v| ViewRecord {
                    view_id: v.view_id.clone(),
                    image_width: v.width,
                    image_height: v.height,
                    tile_size: manifest.tile_size,
                })
                .collect(),
            global_embeds: global[g0..g0 + n_views as usize * dim].to_vec(),
            tile_embeds: tiles[t0..t0 + n_tiles as usize * dim].to_vec(),
            tile_geoms,
        };
        let declared: Vec<usize> = rec.views.iter().map(|v| v.n_tiles as usize).collect();
        if bag.tiles_per_view() != declared {
            return Err(Error::InvalidBag {
                bag_id: bag.bag_id,
                reason: format!(
                    "per-view tile counts {declared:?} disagree with tile geometry {:?}",
                    bag_geom_counts(&geoms[geo0..geo0 + n_tiles as usize * GEOM_FIELDS], n_views as usize)
                ),
            });
        }
        if let Some(split) = rec.split {
            dataset.splits.insert(bag.bag_id.clone(), split);
        }
        dataset.bags.push(bag);
    }
    dataset.validate()?;
    Ok(dataset)
}

fn bag_geom_counts(fields: &[i32], n_views: usize) -> Vec<usize> {
    let mut counts = vec![0; n_views];
    for f in fields.chunks_exact(GEOM_FIELDS) {
        if let Some(c) = counts.get_mut(f[0] as usize) {
            *c += 1;
        }
    }
    counts
}
