//! Uniform tile grids over an image, with optional overlap.
//!
//! Grid positions sit at multiples of the stride. The last tile along each
//! axis is clamped so its far edge lands on the image border; a position that
//! coincides with the previous one after clamping is emitted once. An axis
//! shorter than the tile gets a single tile spanning the whole axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl TileRect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        TileRect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }

    pub fn is_valid_within(&self, width: u32, height: u32) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub image_width: u32,
    pub image_height: u32,
    pub tile_size: u32,
    /// Fraction of the tile shared with its neighbour, in `[0, 1)`.
    pub overlap: f64,
}

impl GridSpec {
    pub fn new(image_width: u32, image_height: u32, tile_size: u32, overlap: f64) -> Result<Self> {
        if image_width == 0 || image_height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1"));
        }
        if tile_size == 0 {
            return Err(Error::invalid("tile size must be at least 1"));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::invalid(format!("overlap {overlap} outside [0, 1)")));
        }
        Ok(GridSpec {
            image_width,
            image_height,
            tile_size,
            overlap,
        })
    }

    /// `round_half_up(tile_size × (1 − overlap))`, never below one pixel.
    pub fn stride(&self) -> u32 {
        let raw = self.tile_size as f64 * (1.0 - self.overlap);
        ((raw + 0.5).floor() as u32).max(1)
    }

    fn axis(&self, len: u32) -> Vec<(u32, u32)> {
        axis_spans(len, self.tile_size, self.stride())
    }
}

/// Start/end pairs of the tiles along one axis.
fn axis_spans(len: u32, tile: u32, stride: u32) -> Vec<(u32, u32)> {
    if tile >= len {
        return vec![(0, len)];
    }
    let mut spans = Vec::new();
    let mut pos = 0u32;
    loop {
        if pos + tile >= len {
            let last = len - tile;
            if spans.last().map(|&(s, _)| s) != Some(last) {
                spans.push((last, len));
            }
            break;
        }
        spans.push((pos, pos + tile));
        pos += stride;
    }
    spans
}

/// All tiles of the grid in row-major order.
pub fn tile_grid(spec: &GridSpec) -> Vec<TileRect> {
    let xs = spec.axis(spec.image_width);
    let ys = spec.axis(spec.image_height);
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            tiles.push(TileRect { x0, y0, x1, y1 });
        }
    }
    tiles
}

/// Number of grid tiles containing pixel `(x, y)`.
pub fn coverage_count(spec: &GridSpec, x: u32, y: u32) -> Result<usize> {
    if x >= spec.image_width || y >= spec.image_height {
        return Err(Error::invalid(format!(
            "pixel ({x}, {y}) outside {}x{} image",
            spec.image_width, spec.image_height
        )));
    }
    // The grid is a product of two axis partitions.
    let along = |spans: Vec<(u32, u32)>, p: u32| spans.iter().filter(|&&(a, b)| a <= p && p < b).count();
    Ok(along(spec.axis(spec.image_width), x) * along(spec.axis(spec.image_height), y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(tiles: &[TileRect], x: u32, y: u32) -> usize {
        tiles.iter().filter(|t| t.contains(x, y)).count()
    }

    #[test]
    fn exact_tiling_without_overlap() {
        let spec = GridSpec::new(1024, 1024, 512, 0.0).unwrap();
        let tiles = tile_grid(&spec);
        assert_eq!(
            tiles,
            vec![
                TileRect::new(0, 0, 512, 512),
                TileRect::new(512, 0, 1024, 512),
                TileRect::new(0, 512, 512, 1024),
                TileRect::new(512, 512, 1024, 1024),
            ]
        );
        assert_eq!(coverage_count(&spec, 100, 700).unwrap(), 1);
    }

    #[test]
    fn overlapping_grid_clamps_last_position() {
        let spec = GridSpec::new(1024, 1024, 512, 0.75).unwrap();
        assert_eq!(spec.stride(), 128);
        let tiles = tile_grid(&spec);
        // Independent enumeration: positions 0,128,... clamped to 512 and deduplicated.
        let mut starts: Vec<u32> = (0..1024).step_by(128).map(|p| p.min(1024 - 512)).collect();
        starts.dedup();
        assert_eq!(starts, vec![0, 128, 256, 384, 512]);
        assert_eq!(tiles.len(), starts.len() * starts.len());
        for (i, t) in tiles.iter().enumerate() {
            assert_eq!(t.y0, starts[i / 5]);
            assert_eq!(t.x0, starts[i % 5]);
            assert_eq!(t.width(), 512);
            assert_eq!(t.height(), 512);
        }
        let c = coverage_count(&spec, 512, 512).unwrap();
        assert_eq!(c, scan(&tiles, 512, 512));
        assert_eq!(c, 16);
    }

    #[test]
    fn small_image_gets_one_clamped_tile() {
        let spec = GridSpec::new(300, 300, 512, 0.0).unwrap();
        assert_eq!(tile_grid(&spec), vec![TileRect::new(0, 0, 300, 300)]);
    }

    #[test]
    fn stride_rounds_half_up_and_never_reaches_zero() {
        assert_eq!(GridSpec::new(10, 10, 3, 0.5).unwrap().stride(), 2);
        assert_eq!(GridSpec::new(10, 10, 1, 0.5).unwrap().stride(), 1);
        assert_eq!(GridSpec::new(10, 10, 1, 0.75).unwrap().stride(), 1);
        assert_eq!(GridSpec::new(10, 10, 2, 0.75).unwrap().stride(), 1);
    }

    #[test]
    fn rejects_bad_specs_and_pixels() {
        assert!(GridSpec::new(0, 5, 2, 0.0).is_err());
        assert!(GridSpec::new(5, 5, 0, 0.0).is_err());
        assert!(GridSpec::new(5, 5, 2, 1.0).is_err());
        let spec = GridSpec::new(5, 5, 2, 0.0).unwrap();
        assert!(coverage_count(&spec, 5, 0).is_err());
        assert_eq!(coverage_count(&spec, 0, 0).unwrap(), 1);
    }

    #[test]
    fn coverage_matches_membership_scan_exhaustively() {
        for w in [1u32, 7, 16, 33, 64] {
            for h in [1u32, 9, 40, 64] {
                for tile in 1..=16 {
                    for overlap in [0.0, 0.5, 0.75] {
                        let spec = GridSpec::new(w, h, tile, overlap).unwrap();
                        let tiles = tile_grid(&spec);
                        for t in &tiles {
                            assert!(t.is_valid_within(w, h));
                        }
                        for y in 0..h {
                            for x in 0..w {
                                let c = coverage_count(&spec, x, y).unwrap();
                                assert!(c >= 1);
                                assert_eq!(c, scan(&tiles, x, y), "{w}x{h} tile {tile} overlap {overlap} at ({x},{y})");
                            }
                        }
                    }
                }
            }
        }
    }
}
