//! Scene manifests, tile lookup and best-of-month pairing.
//!
//! Each high-resolution monthly mosaic is paired with the least cloudy
//! low-resolution scene of every sensor acquired in the same calendar month.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geo::{project, Aoi, Band, PixelPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    Landsat8,
    Sentinel2,
    Planet,
}

impl Sensor {
    /// Sensors paired against the monthly mosaic.
    pub const LOW_RES: [Sensor; 2] = [Sensor::Landsat8, Sensor::Sentinel2];

    pub fn as_str(self) -> &'static str {
        match self {
            Sensor::Landsat8 => "landsat8",
            Sensor::Sentinel2 => "sentinel2",
            Sensor::Planet => "planet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub sensor: Sensor,
    pub acquisition_date: NaiveDate,
    /// Cloud cover over the AOI, in `[0, 1]`.
    pub cloud_fraction: f64,
    pub footprint: Aoi,
    /// WRS2 `path_row` for Landsat, MGRS tile for Sentinel.
    pub tile_index: String,
    /// Band name to file path.
    #[serde(default)]
    pub asset_paths: BTreeMap<String, String>,
}

impl SceneRecord {
    pub fn validate(&self) -> Result<()> {
        if self.scene_id.is_empty() {
            return Err(Error::invalid("empty scene_id"));
        }
        if !(0.0..=1.0).contains(&self.cloud_fraction) {
            return Err(Error::invalid(format!("cloud_fraction {} outside [0, 1]", self.cloud_fraction)));
        }
        self.footprint.validate()
    }

    pub fn year_month(&self) -> (i32, u32) {
        (self.acquisition_date.year(), self.acquisition_date.month())
    }
}

/// One monthly mosaic to pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanetMonth {
    pub scene_id: String,
    pub year: i32,
    pub month: u32,
}

impl PlanetMonth {
    pub fn new(scene_id: impl Into<String>, year: i32, month: u32) -> Self {
        Self {
            scene_id: scene_id.into(),
            year,
            month,
        }
    }

    /// Folder label `YYYY-MM`.
    pub fn label(&self) -> String {
        format!("{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthSlot {
    pub year: i32,
    pub month: u32,
    pub reference_scene_id: String,
    pub landsat8: Option<SceneRecord>,
    pub sentinel2: Option<SceneRecord>,
}

impl MonthSlot {
    pub fn label(&self) -> String {
        format!("{:04}-{:02}", self.year, self.month)
    }

    pub fn chosen(&self, sensor: Sensor) -> Option<&SceneRecord> {
        match sensor {
            Sensor::Landsat8 => self.landsat8.as_ref(),
            Sensor::Sentinel2 => self.sentinel2.as_ref(),
            Sensor::Planet => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileIndexEntry {
    pub tile_index: String,
    /// Bounding rectangle of the tile footprint.
    pub footprint: Aoi,
}

/// Tiles intersecting `aoi` with positive area, largest overlap first
/// (ties by tile id).
pub fn tiles_for_aoi(aoi: &Aoi, index: &[TileIndexEntry]) -> Result<Vec<String>> {
    if index.is_empty() {
        return Err(Error::invalid("tile index is empty"));
    }
    let mut hits: Vec<(f64, &str)> = index
        .iter()
        .filter(|t| t.footprint.crs_id == aoi.crs_id)
        .map(|t| (t.footprint.intersection_area(aoi), t.tile_index.as_str()))
        .filter(|(a, _)| *a > 0.0)
        .collect();
    if hits.is_empty() {
        return Err(Error::NoTile);
    }
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    Ok(hits.into_iter().map(|(_, id)| id.to_string()).collect())
}

/// Candidates whose footprint overlaps `aoi`.
pub fn candidates_for_aoi(candidates: &[SceneRecord], aoi: &Aoi) -> Vec<SceneRecord> {
    candidates
        .iter()
        .filter(|c| c.footprint.crs_id == aoi.crs_id && c.footprint.intersection_area(aoi) > 0.0)
        .cloned()
        .collect()
}

/// Total order used to pick the best scene: least cloud, then latest date,
/// then smallest scene id.
fn better(a: &SceneRecord, b: &SceneRecord) -> bool {
    a.cloud_fraction
        .total_cmp(&b.cloud_fraction)
        .then(b.acquisition_date.cmp(&a.acquisition_date))
        .then(a.scene_id.cmp(&b.scene_id))
        .is_lt()
}

/// Pick, per mosaic month and low-resolution sensor, the least cloudy scene
/// in that calendar month with `cloud_fraction <= max_cloud`.
pub fn pair_months(planet_stack: &[PlanetMonth], candidates: &[SceneRecord], max_cloud: f64) -> Vec<MonthSlot> {
    let mut best: BTreeMap<(i32, u32, Sensor), &SceneRecord> = BTreeMap::new();
    for c in candidates {
        if c.sensor == Sensor::Planet || c.cloud_fraction > max_cloud {
            continue;
        }
        let (y, m) = c.year_month();
        best.entry((y, m, c.sensor))
            .and_modify(|cur| {
                if better(c, cur) {
                    *cur = c;
                }
            })
            .or_insert(c);
    }
    planet_stack
        .iter()
        .map(|p| {
            let pick = |s| best.get(&(p.year, p.month, s)).map(|r| (*r).clone());
            MonthSlot {
                year: p.year,
                month: p.month,
                reference_scene_id: p.scene_id.clone(),
                landsat8: pick(Sensor::Landsat8),
                sentinel2: pick(Sensor::Sentinel2),
            }
        })
        .collect()
}

pub fn parse_manifest(text: &str) -> Result<Vec<SceneRecord>> {
    let values: Vec<Value> = serde_json::from_str(text).map_err(|e| Error::ManifestParse {
        index: 0,
        message: e.to_string(),
    })?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            let rec: SceneRecord = serde_json::from_value(v).map_err(|e| Error::ManifestParse {
                index,
                message: e.to_string(),
            })?;
            rec.validate().map_err(|e| Error::ManifestParse {
                index,
                message: e.to_string(),
            })?;
            Ok(rec)
        })
        .collect()
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SceneRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_manifest(&text).map_err(|e| e.in_file(path))
}

pub fn write_manifest(records: &[SceneRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serde_json::to_string_pretty(records)?).map_err(|e| Error::from(e).in_file(path))
}

pub fn load_planet_months(path: impl AsRef<Path>) -> Result<Vec<PlanetMonth>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    let months: Vec<PlanetMonth> = serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))?;
    for m in &months {
        if !(1..=12).contains(&m.month) {
            return Err(Error::invalid(format!("month {} out of range", m.month)).in_file(path));
        }
    }
    Ok(months)
}

/// Plan document: `YYYY-MM` to chosen scene ids and their assets, in slot
/// order.
pub fn plan_document(slots: &[MonthSlot]) -> Result<Value> {
    let mut plan = Map::new();
    for slot in slots {
        let label = slot.label();
        if plan.contains_key(&label) {
            return Err(Error::invalid(format!("month {label} appears twice in the plan")));
        }
        let mut assets = Vec::new();
        for sensor in Sensor::LOW_RES {
            if let Some(rec) = slot.chosen(sensor) {
                assets.extend(rec.asset_paths.values().cloned());
            }
        }
        let id = |s: Sensor| slot.chosen(s).map(|r| r.scene_id.clone());
        plan.insert(
            label,
            json!({
                "planet": slot.reference_scene_id,
                "landsat8": id(Sensor::Landsat8),
                "sentinel2": id(Sensor::Sentinel2),
                "assets": assets,
            }),
        );
    }
    Ok(Value::Object(plan))
}

pub fn write_plan(slots: &[MonthSlot], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = plan_document(slots)?;
    fs::write(path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::from(e).in_file(path))
}

/// Fraction of valid mask pixels whose center lies in `aoi` that are
/// flagged cloudy (non-zero).
pub fn cloud_fraction_from_mask(mask: &Band, aoi: &Aoi) -> Result<f64> {
    let (w, h) = mask.dims();
    let (mut valid, mut cloudy) = (0usize, 0usize);
    for row in 0..h {
        for col in 0..w {
            let p = project(mask.transform(), PixelPoint::center_of(col, row));
            if p.x < aoi.min_x || p.x > aoi.max_x || p.y < aoi.min_y || p.y > aoi.max_y {
                continue;
            }
            let v = mask.get(col, row);
            if mask.is_nodata(v) {
                continue;
            }
            valid += 1;
            if v != 0.0 {
                cloudy += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(cloudy as f64 / valid as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::AffineGeoTransform;

    fn aoi(x0: f64, y0: f64, x1: f64, y1: f64) -> Aoi {
        Aoi::new(x0, y0, x1, y1, "EPSG:32611").unwrap()
    }

    fn scene(id: &str, sensor: Sensor, date: &str, cloud: f64) -> SceneRecord {
        SceneRecord {
            scene_id: id.into(),
            sensor,
            acquisition_date: date.parse().unwrap(),
            cloud_fraction: cloud,
            footprint: aoi(0.0, 0.0, 100.0, 100.0),
            tile_index: "040_030".into(),
            asset_paths: BTreeMap::from([("pan".to_string(), format!("{id}/pan.tif"))]),
        }
    }

    #[test]
    fn tile_lookup() {
        let index = vec![
            TileIndexEntry {
                tile_index: "A".into(),
                footprint: aoi(0.0, 0.0, 100.0, 100.0),
            },
            TileIndexEntry {
                tile_index: "B".into(),
                footprint: aoi(100.0, 0.0, 200.0, 100.0),
            },
        ];
        assert_eq!(tiles_for_aoi(&aoi(10.0, 10.0, 20.0, 20.0), &index).unwrap(), vec!["A"]);
        assert_eq!(tiles_for_aoi(&aoi(90.0, 10.0, 130.0, 20.0), &index).unwrap(), vec!["B", "A"]);
        assert!(matches!(tiles_for_aoi(&aoi(500.0, 0.0, 600.0, 10.0), &index), Err(Error::NoTile)));
        // Touching edges is not an intersection.
        assert!(matches!(tiles_for_aoi(&aoi(200.0, 0.0, 300.0, 10.0), &index), Err(Error::NoTile)));
    }

    #[test]
    fn least_cloud_wins_with_tie_breaks() {
        let months = [PlanetMonth::new("p1", 2020, 1), PlanetMonth::new("p2", 2020, 3)];
        let cands = vec![
            scene("l-a", Sensor::Landsat8, "2020-01-05", 0.4),
            scene("l-b", Sensor::Landsat8, "2020-01-21", 0.1),
            scene("s-a", Sensor::Sentinel2, "2020-01-02", 0.2),
            scene("s-b", Sensor::Sentinel2, "2020-01-12", 0.2),
            scene("s-c", Sensor::Sentinel2, "2020-03-12", 0.9),
        ];
        let slots = pair_months(&months, &cands, 0.5);
        assert_eq!(slots[0].landsat8.as_ref().unwrap().scene_id, "l-b");
        assert_eq!(slots[0].sentinel2.as_ref().unwrap().scene_id, "s-b");
        assert!(slots[1].landsat8.is_none() && slots[1].sentinel2.is_none());
    }

    #[test]
    fn manifest_errors_carry_index() {
        let ok = serde_json::to_string(&scene("x", Sensor::Landsat8, "2020-01-01", 0.1)).unwrap();
        let bad = serde_json::to_string(&scene("y", Sensor::Landsat8, "2020-01-01", 1.5)).unwrap();
        match parse_manifest(&format!("[{ok},{bad}]")) {
            Err(Error::ManifestParse { index: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_manifest("[]").unwrap().is_empty());
        let bad_date = ok.replace("2020-01-01", "2020-02-30");
        assert!(matches!(parse_manifest(&format!("[{bad_date}]")), Err(Error::ManifestParse { index: 0, .. })));
    }

    #[test]
    fn plan_layout() {
        let slots = pair_months(
            &[PlanetMonth::new("p", 2019, 7)],
            &[scene("l", Sensor::Landsat8, "2019-07-04", 0.0)],
            0.3,
        );
        let doc = plan_document(&slots).unwrap();
        assert_eq!(
            doc.to_string(),
            r#"{"2019-07":{"planet":"p","landsat8":"l","sentinel2":null,"assets":["l/pan.tif"]}}"#
        );
        let dup = [slots[0].clone(), slots[0].clone()];
        assert!(plan_document(&dup).is_err());
    }

    #[test]
    fn mask_fraction() {
        let gt = AffineGeoTransform::north_up(0.0, 4.0, 1.0, -1.0);
        let mask = Band::from_grid("mask", 4, 4, gt, vec![1., 1., 0., 0., 1., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.]).unwrap();
        assert_eq!(cloud_fraction_from_mask(&mask, &aoi(0.0, 0.0, 4.0, 4.0)).unwrap(), 0.25);
        assert_eq!(cloud_fraction_from_mask(&mask, &aoi(0.0, 2.0, 2.0, 4.0)).unwrap(), 1.0);
    }
}
