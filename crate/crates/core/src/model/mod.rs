//! Polynomial misalignment-correction models.
//!
//! A model maps working-resolution base pixel coordinates `(x_b, y_b)` to
//! corrected warp pixel coordinates:
//!
//! ```text
//! shift:      x̂ = a1 + x_b
//! affine:     x̂ = a1 + a2 x_b + a3 y_b
//! quadratic:  x̂ = a1 + a2 x_b + a3 y_b + a4 x_b² + a5 x_b y_b + a6 y_b²
//! ```
//!
//! with the same form for `ŷ` in the `b` coefficients. Coefficients are
//! estimated by linear least squares on the reprojection error; the `x` and
//! `y` systems are independent and share one factorization.

pub mod lstsq;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GridSpec, PixelPoint};
use crate::tiepoints::TiePoint;
use lstsq::HouseholderQr;

/// Condition limit above which a fit is reported as rank deficient.
pub const RANK_DEFICIENT_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Shift,
    Affine,
    Quadratic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Shift, ModelKind::Affine, ModelKind::Quadratic];

    pub fn params_per_axis(self) -> usize {
        match self {
            ModelKind::Shift => 1,
            ModelKind::Affine => 3,
            ModelKind::Quadratic => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Shift => "shift",
            ModelKind::Affine => "affine",
            ModelKind::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(ModelKind::Shift),
            "affine" => Ok(ModelKind::Affine),
            "quadratic" => Ok(ModelKind::Quadratic),
            other => Err(Error::invalid(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Monomial basis row for `p`: `[1]`, `[1, x, y]` or `[1, x, y, x², xy, y²]`.
pub fn design_row(kind: ModelKind, p: PixelPoint) -> Vec<f64> {
    let mut row = [0.0; 6];
    let n = fill_row(kind, p.x, p.y, &mut row);
    row[..n].to_vec()
}

#[inline]
fn fill_row(kind: ModelKind, x: f64, y: f64, row: &mut [f64; 6]) -> usize {
    row[0] = 1.0;
    match kind {
        ModelKind::Shift => 1,
        ModelKind::Affine => {
            row[1] = x;
            row[2] = y;
            3
        }
        ModelKind::Quadratic => {
            row[1] = x;
            row[2] = y;
            row[3] = x * x;
            row[4] = x * y;
            row[5] = y * y;
            6
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawModel {
    kind: ModelKind,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Coefficients `a` (for x̂) and `b` (for ŷ) in working-resolution pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct CorrectionModel {
    kind: ModelKind,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl TryFrom<RawModel> for CorrectionModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        CorrectionModel::new(raw.kind, raw.a, raw.b)
    }
}

impl CorrectionModel {
    pub fn new(kind: ModelKind, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let k = kind.params_per_axis();
        if a.len() != k || b.len() != k {
            return Err(Error::invalid(format!(
                "{kind} model needs {k} coefficients per axis, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::invalid("model coefficients must be finite"));
        }
        Ok(Self { kind, a, b })
    }

    /// The model that leaves coordinates unchanged.
    pub fn identity(kind: ModelKind) -> Self {
        let (a, b) = match kind {
            ModelKind::Shift => (vec![0.0], vec![0.0]),
            ModelKind::Affine => (vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]),
            ModelKind::Quadratic => (
                vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            ),
        };
        Self { kind, a, b }
    }

    pub fn shift(dx: f64, dy: f64) -> Self {
        Self {
            kind: ModelKind::Shift,
            a: vec![dx],
            b: vec![dy],
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Same mapping expressed in a larger basis.
    pub fn promote(&self, kind: ModelKind) -> Result<Self> {
        if kind < self.kind {
            return Err(Error::invalid(format!("cannot express a {} model as {kind}", self.kind)));
        }
        let mut out = Self::identity(kind);
        match self.kind {
            ModelKind::Shift => {
                out.a[0] = self.a[0];
                out.b[0] = self.b[0];
            }
            _ => {
                out.a[..self.a.len()].copy_from_slice(&self.a);
                out.b[..self.b.len()].copy_from_slice(&self.b);
            }
        }
        Ok(out)
    }

    /// Maximum displacement `|evaluate(p) - p|` over a regular grid of
    /// sample points covering `width x height`.
    pub fn max_displacement(&self, width: usize, height: usize, steps: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..=steps {
            for j in 0..=steps {
                let p = PixelPoint::new(
                    width as f64 * i as f64 / steps as f64,
                    height as f64 * j as f64 / steps as f64,
                );
                let q = evaluate(self, p);
                worst = worst.max((q.x - p.x).hypot(q.y - p.y));
            }
        }
        worst
    }
}

/// Corrected warp location for base location `p`.
#[inline]
pub fn evaluate(model: &CorrectionModel, p: PixelPoint) -> PixelPoint {
    let (x, y) = (p.x, p.y);
    let (a, b) = (&model.a, &model.b);
    match model.kind {
        ModelKind::Shift => PixelPoint::new(a[0] + x, b[0] + y),
        ModelKind::Affine => PixelPoint::new(a[0] + a[1] * x + a[2] * y, b[0] + b[1] * x + b[2] * y),
        ModelKind::Quadratic => PixelPoint::new(
            a[0] + a[1] * x + a[2] * y + a[3] * x * x + a[4] * x * y + a[5] * y * y,
            b[0] + b[1] * x + b[2] * y + b[3] * x * x + b[4] * x * y + b[5] * y * y,
        ),
    }
}

/// Affine change of variables mapping the base-point bounding box onto
/// `[-1, 1]²`.
#[derive(Debug, Clone, Copy)]
struct Normalization {
    cx: f64,
    sx: f64,
    cy: f64,
    sy: f64,
}

impl Normalization {
    fn of<'a>(points: impl Iterator<Item = &'a PixelPoint>) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let half = |lo: f64, hi: f64| {
            let s = 0.5 * (hi - lo);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        };
        Self {
            cx: 0.5 * (x0 + x1),
            sx: half(x0, x1),
            cy: 0.5 * (y0 + y1),
            sy: half(y0, y1),
        }
    }

    /// Re-express normalized-basis coefficients `c` in raw pixel coordinates.
    fn expand(&self, kind: ModelKind, c: &[f64]) -> Vec<f64> {
        // u = al*x + be, v = ga*y + de
        let (al, be) = (1.0 / self.sx, -self.cx / self.sx);
        let (ga, de) = (1.0 / self.sy, -self.cy / self.sy);
        match kind {
            ModelKind::Shift => vec![c[0]],
            ModelKind::Affine => vec![c[0] + c[1] * be + c[2] * de, c[1] * al, c[2] * ga],
            ModelKind::Quadratic => vec![
                c[0] + c[1] * be + c[2] * de + c[3] * be * be + c[4] * be * de + c[5] * de * de,
                c[1] * al + 2.0 * c[3] * al * be + c[4] * al * de,
                c[2] * ga + c[4] * be * ga + 2.0 * c[5] * ga * de,
                c[3] * al * al,
                c[4] * al * ga,
                c[5] * ga * ga,
            ],
        }
    }
}

/// Least-squares fit over all of `tps`.
pub fn fit(kind: ModelKind, tps: &[TiePoint]) -> Result<CorrectionModel> {
    fit_subset(kind, tps, None, RANK_DEFICIENT_CONDITION)
}

/// Least-squares fit over `tps[i]` for `i` in `subset` (all points when
/// `None`), failing with [`Error::RankDeficient`] when the scaled design
/// matrix condition exceeds `max_condition`.
pub fn fit_subset(
    kind: ModelKind,
    tps: &[TiePoint],
    subset: Option<&[usize]>,
    max_condition: f64,
) -> Result<CorrectionModel> {
    let k = kind.params_per_axis();
    let pick = |i: usize| match subset {
        Some(s) => &tps[s[i]],
        None => &tps[i],
    };
    let n = subset.map_or(tps.len(), <[usize]>::len);
    if n < k {
        return Err(Error::InsufficientPoints { needed: k, got: n });
    }
    let norm = Normalization::of((0..n).map(|i| &pick(i).base));
    let mut design = vec![0.0; n * k];
    let mut tx = Vec::with_capacity(n);
    let mut ty = Vec::with_capacity(n);
    let mut row = [0.0; 6];
    for i in 0..n {
        let tp = pick(i);
        let u = (tp.base.x - norm.cx) / norm.sx;
        let v = (tp.base.y - norm.cy) / norm.sy;
        fill_row(kind, u, v, &mut row);
        for j in 0..k {
            design[j * n + i] = row[j];
        }
        match kind {
            ModelKind::Shift => {
                tx.push(tp.warp.x - tp.base.x);
                ty.push(tp.warp.y - tp.base.y);
            }
            _ => {
                tx.push(tp.warp.x);
                ty.push(tp.warp.y);
            }
        }
    }
    let qr = HouseholderQr::new(design, n, k);
    let condition = qr.condition();
    if condition.is_nan() || condition > max_condition {
        return Err(Error::RankDeficient { condition });
    }
    let rank_deficient = || Error::RankDeficient {
        condition: f64::INFINITY,
    };
    let ca = qr.solve(&tx).ok_or_else(rank_deficient)?;
    let cb = qr.solve(&ty).ok_or_else(rank_deficient)?;
    CorrectionModel::new(kind, norm.expand(kind, &ca), norm.expand(kind, &cb))
}

/// Residual `warp - evaluate(base)` for one tiepoint.
#[inline]
pub fn residual(model: &CorrectionModel, tp: &TiePoint) -> (f64, f64) {
    let p = evaluate(model, tp.base);
    (tp.warp.x - p.x, tp.warp.y - p.y)
}

/// Root-mean-square reprojection error of `model` over `tps`.
pub fn reprojection_rmse(model: &CorrectionModel, tps: &[TiePoint]) -> Result<f64> {
    if tps.is_empty() {
        return Err(Error::EmptySet);
    }
    let sum: f64 = tps
        .iter()
        .map(|tp| {
            let (dx, dy) = residual(model, tp);
            dx * dx + dy * dy
        })
        .sum();
    Ok((sum / tps.len() as f64).sqrt())
}

/// Before/after reprojection errors of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Identity-model RMSE over the inliers.
    pub rmse_before: f64,
    /// Fitted-model RMSE over the inliers.
    pub rmse_after: f64,
    pub inlier_count: usize,
    pub total_count: usize,
    /// `warp - evaluate(base)` for every tiepoint, inlier or not.
    pub residuals: Vec<[f64; 2]>,
}

impl FitReport {
    pub fn new(model: &CorrectionModel, tps: &[TiePoint], inliers: &[bool]) -> Result<Self> {
        assert_eq!(tps.len(), inliers.len());
        let chosen: Vec<TiePoint> = tps
            .iter()
            .zip(inliers)
            .filter_map(|(tp, &keep)| keep.then_some(*tp))
            .collect();
        let identity = CorrectionModel::identity(ModelKind::Shift);
        Ok(Self {
            rmse_before: reprojection_rmse(&identity, &chosen)?,
            rmse_after: reprojection_rmse(model, &chosen)?,
            inlier_count: chosen.len(),
            total_count: tps.len(),
            residuals: tps
                .iter()
                .map(|tp| {
                    let (dx, dy) = residual(model, tp);
                    [dx, dy]
                })
                .collect(),
        })
    }
}

/// Serialized model emitted next to aligned rasters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(flatten)]
    pub model: CorrectionModel,
    pub working_gsd_m: f64,
    pub base_grid: GridSpec,
    pub warp_grid: GridSpec,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::AffineGeoTransform;

    fn pt(x: f64, y: f64) -> PixelPoint {
        PixelPoint::new(x, y)
    }

    #[test]
    fn design_rows() {
        assert_eq!(design_row(ModelKind::Quadratic, pt(0.0, 0.0)), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(design_row(ModelKind::Affine, pt(2.0, 3.0)), vec![1.0, 2.0, 3.0]);
        assert_eq!(design_row(ModelKind::Quadratic, pt(2.0, 3.0)), vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(design_row(ModelKind::Shift, pt(2.0, 3.0)), vec![1.0]);
    }

    #[test]
    fn evaluate_identity_and_shift() {
        let id = CorrectionModel::new(ModelKind::Affine, vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(evaluate(&id, pt(7.25, -3.0)), pt(7.25, -3.0));
        let s = CorrectionModel::shift(1.5, -2.0);
        assert_eq!(evaluate(&s, pt(10.0, 10.0)), pt(11.5, 8.0));
    }

    #[test]
    fn coefficient_count_validated() {
        assert!(CorrectionModel::new(ModelKind::Affine, vec![0.0; 2], vec![0.0; 3]).is_err());
        assert!(CorrectionModel::new(ModelKind::Shift, vec![f64::NAN], vec![0.0]).is_err());
        let bad = r#"{"kind":"quadratic","a":[0,1,0],"b":[0,0,1]}"#;
        assert!(serde_json::from_str::<CorrectionModel>(bad).is_err());
    }

    #[test]
    fn identity_fit_has_zero_residuals() {
        let tps: Vec<TiePoint> = (0..20)
            .map(|i| {
                let p = pt((i * 7 % 31) as f64, (i * 13 % 29) as f64);
                TiePoint::new(p, p, 1.0)
            })
            .collect();
        for kind in ModelKind::ALL {
            let m = fit(kind, &tps).unwrap();
            assert!(reprojection_rmse(&m, &tps).unwrap() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn three_point_affine_interpolates() {
        let truth = CorrectionModel::new(ModelKind::Affine, vec![2.0, 1.01, 0.02], vec![-1.0, -0.01, 0.99]).unwrap();
        let tps: Vec<TiePoint> = [pt(10.0, 10.0), pt(400.0, 50.0), pt(100.0, 300.0)]
            .into_iter()
            .map(|b| TiePoint::new(b, evaluate(&truth, b), 1.0))
            .collect();
        let m = fit(ModelKind::Affine, &tps).unwrap();
        assert!(reprojection_rmse(&m, &tps).unwrap() <= 1e-9);
    }

    #[test]
    fn collinear_affine_is_rank_deficient() {
        let tps: Vec<TiePoint> = (0..5)
            .map(|i| {
                let p = pt(i as f64 * 10.0, i as f64 * 5.0);
                TiePoint::new(p, p, 1.0)
            })
            .collect();
        assert!(matches!(fit(ModelKind::Affine, &tps), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn insufficient_points() {
        let p = pt(1.0, 1.0);
        let tps = vec![TiePoint::new(p, p, 1.0); 2];
        assert!(matches!(
            fit(ModelKind::Affine, &tps),
            Err(Error::InsufficientPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn rmse_examples() {
        assert!(matches!(reprojection_rmse(&CorrectionModel::shift(0.0, 0.0), &[]), Err(Error::EmptySet)));
        let one = [TiePoint::new(pt(1.0, 1.0), pt(4.0, 5.0), 1.0)];
        assert_eq!(reprojection_rmse(&CorrectionModel::identity(ModelKind::Affine), &one).unwrap(), 5.0);
    }

    #[test]
    fn promote_preserves_mapping() {
        let s = CorrectionModel::shift(1.0, 2.0);
        let q = s.promote(ModelKind::Quadratic).unwrap();
        assert_eq!(evaluate(&q, pt(3.0, 4.0)), evaluate(&s, pt(3.0, 4.0)));
        assert!(q.promote(ModelKind::Affine).is_err());
    }

    #[test]
    fn model_document_layout() {
        let grid = GridSpec {
            transform: AffineGeoTransform::north_up(0.0, 0.0, 10.0, -10.0),
            width: 4,
            height: 4,
        };
        let doc = ModelDocument {
            model: CorrectionModel::shift(1.0, 2.0),
            working_gsd_m: 10.0,
            base_grid: grid,
            warp_grid: grid,
        };
        let v = serde_json::to_value(&doc).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["kind", "a", "b", "working_gsd_m", "base_grid", "warp_grid"]);
        let back: ModelDocument = serde_json::from_value(v).unwrap();
        assert_eq!(back, doc);
    }
}
