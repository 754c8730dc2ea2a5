//! Patch normalized-cross-correlation matching with mutual-best and ratio
//! filtering, then subpixel refinement on the 3x3 correlation surface.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Provenance, TiePoint, TiePointSet};
use crate::error::Result;
use crate::geo::{Band, PixelPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Patch half-width; patches are `(2r + 1)²` pixels.
    pub patch_radius: usize,
    /// Lowe ratio on descriptor distance `sqrt(2 - 2 ncc)`.
    pub ratio: f64,
    /// Only consider warp keypoints within this many pixels of the base
    /// location, when set.
    pub search_radius: Option<f64>,
    /// Hill-climbing steps allowed before the subpixel fit.
    pub refine_steps: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            patch_radius: 8,
            ratio: 0.9,
            search_radius: None,
            refine_steps: 3,
        }
    }
}

/// Zero-mean, unit-norm patch around integer pixel `(col, row)`, or `None`
/// when the patch leaves the grid, touches nodata or is flat.
fn descriptor(band: &Band, col: isize, row: isize, r: usize) -> Option<Vec<f64>> {
    let r = r as isize;
    let (w, h) = (band.width() as isize, band.height() as isize);
    if col - r < 0 || row - r < 0 || col + r >= w || row + r >= h {
        return None;
    }
    let mut v = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for y in row - r..=row + r {
        for x in col - r..=col + r {
            let s = band.get(x as usize, y as usize);
            if band.is_nodata(s) {
                return None;
            }
            v.push(s as f64);
        }
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|s| *s -= mean);
    let norm = v.iter().map(|s| s * s).sum::<f64>().sqrt();
    if norm <= 1e-9 {
        return None;
    }
    v.iter_mut().for_each(|s| *s /= norm);
    Some(v)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn distance(ncc: f64) -> f64 {
    (2.0 - 2.0 * ncc).max(0.0).sqrt()
}

struct Keypoint {
    col: isize,
    row: isize,
    desc: Vec<f64>,
}

fn keypoints(band: &Band, pts: &[PixelPoint], radius: usize) -> Vec<Keypoint> {
    // One extra pixel of margin for the refinement neighbourhood.
    pts.iter()
        .filter_map(|p| {
            let (col, row) = (p.x.floor() as isize, p.y.floor() as isize);
            descriptor(band, col, row, radius + 1)?;
            Some(Keypoint {
                col,
                row,
                desc: descriptor(band, col, row, radius)?,
            })
        })
        .collect()
}

/// Correlation of `desc` with the warp patch centred at `(col, row)`.
fn response(warp: &Band, desc: &[f64], col: isize, row: isize, radius: usize) -> Option<f64> {
    descriptor(warp, col, row, radius).map(|d| dot(desc, &d))
}

/// Subpixel offset of the peak of the least-squares quadratic through a
/// 3x3 response grid `z[dy + 1][dx + 1]`.
fn quadratic_peak(z: &[[f64; 3]; 3]) -> Option<(f64, f64)> {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxy = 0.0;
    let (mut col_outer, mut col_mid, mut row_outer, mut row_mid) = (0.0, 0.0, 0.0, 0.0);
    for (j, line) in z.iter().enumerate() {
        let y = j as f64 - 1.0;
        for (i, &v) in line.iter().enumerate() {
            let x = i as f64 - 1.0;
            sx += x * v;
            sy += y * v;
            sxy += x * y * v;
            if i == 1 {
                col_mid += v;
            } else {
                col_outer += v;
            }
            if j == 1 {
                row_mid += v;
            } else {
                row_outer += v;
            }
        }
    }
    // Least-squares coefficients of c1 x + c2 y + c3 x² + c4 xy + c5 y².
    let c1 = sx / 6.0;
    let c2 = sy / 6.0;
    let c3 = (col_outer - 2.0 * col_mid) / 6.0;
    let c4 = sxy / 4.0;
    let c5 = (row_outer - 2.0 * row_mid) / 6.0;
    let (hxx, hxy, hyy) = (2.0 * c3, c4, 2.0 * c5);
    let det = hxx * hyy - hxy * hxy;
    if !(hxx < 0.0 && det > 0.0) {
        return None;
    }
    let dx = (-c1 * hyy + c2 * hxy) / det;
    let dy = (-c2 * hxx + c1 * hxy) / det;
    (dx.abs() <= 1.0 && dy.abs() <= 1.0).then_some((dx, dy))
}

/// Refined warp location (continuous pixel coordinates) and peak NCC.
fn refine(warp: &Band, desc: &[f64], mut col: isize, mut row: isize, cfg: &MatchConfig) -> Option<(PixelPoint, f64)> {
    let r = cfg.patch_radius;
    let mut grid = [[0.0; 3]; 3];
    for step in 0..=cfg.refine_steps {
        let mut best = (0isize, 0isize, f64::NEG_INFINITY);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let v = response(warp, desc, col + dx, row + dy, r)?;
                grid[(dy + 1) as usize][(dx + 1) as usize] = v;
                if v > best.2 {
                    best = (dx, dy, v);
                }
            }
        }
        if (best.0, best.1) == (0, 0) || step == cfg.refine_steps {
            break;
        }
        col += best.0;
        row += best.1;
    }
    let peak = grid[1][1];
    let center = PixelPoint::center_of(col as usize, row as usize);
    if peak >= 1.0 - 1e-9 {
        return Some((center, peak));
    }
    let (dx, dy) = quadratic_peak(&grid).unwrap_or((0.0, 0.0));
    Some((PixelPoint::new(center.x + dx, center.y + dy), peak))
}

/// Pair base and warp keypoints by patch correlation.
///
/// A pair survives when each side is the other's best match and the best
/// descriptor distance is below `ratio` times the second best. Warp
/// locations are then refined to subpixel precision unless the match is
/// exact. Keypoints whose patch does not fit inside the grid are dropped.
pub fn describe_and_match(
    base: &Band,
    warp: &Band,
    base_pts: &[PixelPoint],
    warp_pts: &[PixelPoint],
    cfg: &MatchConfig,
) -> Result<TiePointSet> {
    let bk = keypoints(base, base_pts, cfg.patch_radius);
    let wk = keypoints(warp, warp_pts, cfg.patch_radius);
    let gsd = base.gsd();
    let empty = || TiePointSet::new(Vec::new(), Provenance::Builtin, gsd, base.dims(), warp.dims());
    if bk.is_empty() || wk.is_empty() {
        return empty();
    }

    let near = |b: &Keypoint, w: &Keypoint| match cfg.search_radius {
        Some(r) => (((b.col - w.col).pow(2) + (b.row - w.row).pow(2)) as f64) <= r * r,
        None => true,
    };

    // Full correlation matrix, row per base keypoint.
    let nw = wk.len();
    let scores: Vec<f64> = bk
        .par_iter()
        .flat_map_iter(|b| {
            wk.iter()
                .map(move |w| if near(b, w) { dot(&b.desc, &w.desc) } else { f64::NEG_INFINITY })
        })
        .collect();

    // Best and second-best warp candidate for every base keypoint.
    let forward: Vec<Option<(usize, f64, f64)>> = scores
        .chunks(nw)
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            let mut second = f64::NEG_INFINITY;
            for (j, &s) in row.iter().enumerate() {
                if s == f64::NEG_INFINITY {
                    continue;
                }
                match best {
                    Some((_, bs)) if s <= bs => second = second.max(s),
                    Some((_, bs)) => {
                        second = bs;
                        best = Some((j, s));
                    }
                    None => best = Some((j, s)),
                }
            }
            best.map(|(j, s)| (j, s, second))
        })
        .collect();

    // Best base keypoint for every warp keypoint.
    let mut backward: Vec<Option<(usize, f64)>> = vec![None; nw];
    for (i, row) in scores.chunks(nw).enumerate() {
        for (slot, &s) in backward.iter_mut().zip(row) {
            if s > f64::NEG_INFINITY && slot.is_none_or(|(_, bs)| s > bs) {
                *slot = Some((i, s));
            }
        }
    }
    let backward: Vec<Option<usize>> = backward.into_iter().map(|b| b.map(|(i, _)| i)).collect();

    let points: Vec<TiePoint> = forward
        .par_iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let (j, best, second) = (*f)?;
            if backward[j] != Some(i) {
                return None;
            }
            if second > f64::NEG_INFINITY && distance(best) >= cfg.ratio * distance(second) {
                return None;
            }
            let b = &bk[i];
            let w = &wk[j];
            let (wp, peak) = refine(warp, &b.desc, w.col, w.row, cfg)?;
            if !super::inside(wp, warp.dims()) {
                return None;
            }
            let score = ((peak + 1.0) / 2.0).clamp(0.0, 1.0);
            Some(TiePoint::new(PixelPoint::center_of(b.col as usize, b.row as usize), wp, score))
        })
        .collect();
    TiePointSet::new(points, Provenance::Builtin, gsd, base.dims(), warp.dims())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_peak_recovers_paraboloid_vertex() {
        let (px, py) = (0.3, -0.2);
        let mut z = [[0.0; 3]; 3];
        for (j, line) in z.iter_mut().enumerate() {
            for (i, v) in line.iter_mut().enumerate() {
                let (x, y) = (i as f64 - 1.0, j as f64 - 1.0);
                *v = 1.0 - 0.5 * (x - px).powi(2) - 0.3 * (y - py).powi(2) + 0.1 * (x - px) * (y - py);
            }
        }
        let (dx, dy) = quadratic_peak(&z).unwrap();
        assert!((dx - px).abs() < 1e-12 && (dy - py).abs() < 1e-12);
    }

    #[test]
    fn saddle_has_no_peak() {
        let mut z = [[0.0; 3]; 3];
        for (j, line) in z.iter_mut().enumerate() {
            for (i, v) in line.iter_mut().enumerate() {
                let (x, y) = (i as f64 - 1.0, j as f64 - 1.0);
                *v = x * x - y * y;
            }
        }
        assert!(quadratic_peak(&z).is_none());
    }
}
