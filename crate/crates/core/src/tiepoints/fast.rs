//! FAST-9 segment-test corner detector.

use rayon::prelude::*;

use crate::geo::{Band, PixelPoint};

/// Bresenham circle of radius 3, clockwise from 12 o'clock, as `(dx, dy)`.
pub const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC: usize = 9;
const RADIUS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub col: usize,
    pub row: usize,
    pub score: f32,
}

impl Corner {
    /// Pixel-center coordinates of the corner.
    pub fn point(&self) -> PixelPoint {
        PixelPoint::center_of(self.col, self.row)
    }
}

/// Longest circular run of `true` in a 16-element ring.
fn longest_run(flags: u16) -> usize {
    if flags == u16::MAX {
        return 16;
    }
    let doubled = (flags as u32) | ((flags as u32) << 16);
    let (mut best, mut run) = (0, 0);
    for i in 0..32 {
        if doubled & (1 << i) != 0 {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best.min(16)
}

/// Segment test at `(col, row)`: `Some(score)` when at least nine
/// contiguous circle pixels are all brighter than `center + t` or all
/// darker than `center - t`. The score is the larger of the summed
/// bright and dark excesses over the threshold.
///
/// The caller guarantees the full circle lies inside the grid.
pub fn segment_test(band: &Band, col: usize, row: usize, threshold: f32) -> Option<f32> {
    let center = band.get(col, row);
    if band.is_nodata(center) {
        return None;
    }
    let ring = |i: usize| {
        let (dx, dy) = CIRCLE[i];
        band.get((col as i32 + dx) as usize, (row as i32 + dy) as usize)
    };
    // Any nine-arc covers at least two of the four compass pixels.
    let hi = center + threshold;
    let lo = center - threshold;
    let compass = [ring(0), ring(4), ring(8), ring(12)];
    if compass.iter().filter(|&&v| v > hi).count() < 2 && compass.iter().filter(|&&v| v < lo).count() < 2 {
        return None;
    }
    let (mut bright, mut dark) = (0u16, 0u16);
    let (mut bright_sum, mut dark_sum) = (0.0f32, 0.0f32);
    for i in 0..16 {
        let v = ring(i);
        if band.is_nodata(v) {
            return None;
        }
        if v > hi {
            bright |= 1 << i;
            bright_sum += v - hi;
        } else if v < lo {
            dark |= 1 << i;
            dark_sum += lo - v;
        }
    }
    if longest_run(bright) >= ARC || longest_run(dark) >= ARC {
        Some(bright_sum.max(dark_sum))
    } else {
        None
    }
}

/// FAST-9 corners with 3x3 non-maximum suppression, strongest first (ties
/// by row then column), truncated to `max_count`.
pub fn detect_corners(band: &Band, max_count: usize, threshold: u32) -> Vec<Corner> {
    let (w, h) = band.dims();
    if w < 2 * RADIUS + 1 || h < 2 * RADIUS + 1 || max_count == 0 {
        return Vec::new();
    }
    let t = threshold.max(1) as f32;
    let scores: Vec<f32> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..w).map(move |col| {
                if row < RADIUS || row + RADIUS >= h || col < RADIUS || col + RADIUS >= w {
                    0.0
                } else {
                    segment_test(band, col, row, t).unwrap_or(0.0)
                }
            })
        })
        .collect();

    let mut corners = Vec::new();
    for row in RADIUS..h - RADIUS {
        for col in RADIUS..w - RADIUS {
            let s = scores[row * w + col];
            if s <= 0.0 {
                continue;
            }
            let mut keep = true;
            'nms: for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (c, r) = ((col as i32 + dx) as usize, (row as i32 + dy) as usize);
                    let n = scores[r * w + c];
                    // Equal scores: the earlier pixel in raster order wins.
                    if n > s || (n == s && (dy < 0 || (dy == 0 && dx < 0))) {
                        keep = false;
                        break 'nms;
                    }
                }
            }
            if keep {
                corners.push(Corner { col, row, score: s });
            }
        }
    }
    corners.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.row.cmp(&b.row)).then(a.col.cmp(&b.col)));
    corners.truncate(max_count);
    corners
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::AffineGeoTransform;

    fn image(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> Band {
        let data = (0..h).flat_map(|r| (0..w).map(move |c| (c, r))).map(|(c, r)| f(c, r)).collect();
        Band::from_grid("img", w, h, AffineGeoTransform::north_up(0.0, 0.0, 1.0, -1.0), data).unwrap()
    }

    #[test]
    fn ring_runs() {
        assert_eq!(longest_run(0), 0);
        assert_eq!(longest_run(u16::MAX), 16);
        assert_eq!(longest_run(0b1111_0000_0000_1111), 8);
        assert_eq!(longest_run(0b1111_1000_0000_1111), 9);
    }

    #[test]
    fn constant_image_has_no_corners() {
        assert!(detect_corners(&image(32, 32, |_, _| 77.0), 100, 10).is_empty());
    }

    #[test]
    fn single_bright_dot() {
        let img = image(21, 21, |c, r| if (c, r) == (10, 10) { 255.0 } else { 10.0 });
        let corners = detect_corners(&img, 100, 20);
        assert_eq!(corners.len(), 1);
        assert_eq!((corners[0].col, corners[0].row), (10, 10));
        assert_eq!(corners[0].point(), PixelPoint::new(10.5, 10.5));
    }

    #[test]
    fn max_count_and_order() {
        let img = image(40, 12, |c, r| match (c, r) {
            (8, 6) => 100.0,
            (20, 6) => 200.0,
            (32, 6) => 150.0,
            _ => 0.0,
        });
        let corners = detect_corners(&img, 2, 10);
        let cols: Vec<usize> = corners.iter().map(|c| c.col).collect();
        assert_eq!(cols, vec![20, 32]);
    }

    #[test]
    fn nodata_blocks_detection() {
        let img = image(21, 21, |c, r| if (c, r) == (10, 10) { 255.0 } else if c == 13 { 0.0 } else { 10.0 })
            .with_nodata(Some(0.0));
        assert!(detect_corners(&img, 10, 20).is_empty());
    }
}
