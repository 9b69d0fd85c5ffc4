//! Attention heatmaps over overlapping tiles and box extraction from them.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use crate::embedset::{EmbedBag, ViewRecord};
use crate::error::{Error, Result};
use crate::metrics::ScoredBox;
use crate::milhead::{forward, AggKind, BagFeatures, Model};
use crate::tilegeom::TileRect;

pub const DEFAULT_BOX_THRESHOLD: f64 = 0.5;

/// Per-pixel heat of one view, row-major, max-normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub heat: Vec<f64>,
}

impl Heatmap {
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.heat[y as usize * self.width as usize + x as usize]
    }
}

/// Unnormalized accumulation: `sum[p] = Σ α_t` over tiles covering `p`, and
/// `coverage[p]` the number of those tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatAccumulator {
    pub width: u32,
    pub height: u32,
    pub sum: Vec<f64>,
    pub coverage: Vec<u32>,
}

impl HeatAccumulator {
    pub fn new(view: &ViewRecord, tiles: &[(TileRect, f64)]) -> Result<Self> {
        let (w, h) = (view.image_width, view.image_height);
        let n = w as usize * h as usize;
        let mut acc = HeatAccumulator {
            width: w,
            height: h,
            sum: vec![0.0; n],
            coverage: vec![0; n],
        };
        for (rect, alpha) in tiles {
            if !rect.is_valid_within(w, h) {
                return Err(Error::invalid(format!(
                    "tile {rect:?} lies outside view {} ({w}x{h})",
                    view.view_id
                )));
            }
            if !alpha.is_finite() {
                return Err(Error::invalid(format!("non-finite tile weight {alpha}")));
            }
            for y in rect.y0..rect.y1 {
                let row = y as usize * w as usize;
                for x in rect.x0..rect.x1 {
                    acc.sum[row + x as usize] += alpha;
                    acc.coverage[row + x as usize] += 1;
                }
            }
        }
        Ok(acc)
    }

    /// `sum / coverage`, zero where no tile reaches.
    pub fn raw(&self) -> Vec<f64> {
        self.sum
            .iter()
            .zip(&self.coverage)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect()
    }
}

/// Coverage-normalized, then max-normalized accumulation of tile weights.
/// An all-zero accumulation stays all zero.
pub fn attention_heatmap(view: &ViewRecord, tiles: &[(TileRect, f64)]) -> Result<Heatmap> {
    let mut heat = HeatAccumulator::new(view, tiles)?.raw();
    let max = heat.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        heat.iter_mut().for_each(|v| *v /= max);
    }
    Ok(Heatmap {
        view_id: view.view_id.clone(),
        width: view.image_width,
        height: view.image_height,
        heat,
    })
}

/// Local-stream attention weights of a bag, one per tile row. The softmax
/// spans every tile of the bag.
pub fn tile_attention(bag: &EmbedBag, model: &Model) -> Result<Vec<f64>> {
    if model.params.agg().local != AggKind::Attention {
        return Err(Error::invalid(format!(
            "heatmaps need an attention local stream, model has {}",
            model.params.agg().local
        )));
    }
    let out = forward(&BagFeatures::from(bag), &model.params)?;
    out.local_weights
        .ok_or_else(|| Error::invalid(format!("bag {} has no tiles", bag.bag_id)))
}

/// One heatmap per view of the bag, each built from that view's slice of
/// the bag-wide attention distribution.
pub fn bag_heatmaps(bag: &EmbedBag, model: &Model) -> Result<Vec<Heatmap>> {
    let alpha = tile_attention(bag, model)?;
    bag.views
        .iter()
        .enumerate()
        .map(|(v, view)| {
            let tiles: Vec<(TileRect, f64)> = bag
                .tile_geoms
                .iter()
                .zip(&alpha)
                .filter(|(g, _)| g.view_index == v)
                .map(|(g, &a)| (g.rect, a))
                .collect();
            attention_heatmap(view, &tiles)
        })
        .collect()
}

/// Index of the largest weight; the first wins ties.
pub fn top_index(weights: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &w) in weights.iter().enumerate() {
        if best.is_none_or(|b| w > weights[b]) {
            best = Some(i);
        }
    }
    best
}

/// Bounding boxes of the 8-connected components of `heat >= threshold`,
/// each scored by its peak heat, highest score first.
pub fn boxes_from_heatmap(h: &Heatmap, threshold: f64) -> Result<Vec<ScoredBox>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let (w, ht) = (h.width as usize, h.height as usize);
    let mut seen = vec![false; w * ht];
    let mut queue = VecDeque::new();
    let mut boxes = Vec::new();
    for start in 0..w * ht {
        if seen[start] || h.heat[start] < threshold {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut peak = f64::MIN;
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
            peak = peak.max(h.heat[i]);
            for ny in y.saturating_sub(1)..=(y + 1).min(ht - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !seen[j] && h.heat[j] >= threshold {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        boxes.push(ScoredBox {
            view_id: h.view_id.clone(),
            x0: x0 as f64,
            y0: y0 as f64,
            x1: x1 as f64,
            y1: y1 as f64,
            score: peak,
        });
    }
    boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(boxes)
}

/// Binary greymap, heat scaled to 0..=255.
pub fn write_pgm(path: &Path, h: &Heatmap) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", h.width, h.height).into_bytes();
    bytes.extend(h.heat.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Heatmap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));

    // Header: magic, width, height, maxval; '#' comments run to end of line.
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad("non-ASCII header"))?);
    }
    i += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit greymaps are supported"));
    }
    let n = width as usize * height as usize;
    let data = bytes.get(i..i + n).ok_or_else(|| bad("truncated pixel data"))?;
    let view_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Heatmap {
        view_id,
        width,
        height,
        heat: data.iter().map(|&b| b as f64 / maxval as f64).collect(),
    })
}
