//! Helpers shared by integration test targets.

use std::cmp::Reverse;
use std::path::PathBuf;

use chrono::Datelike;
use coreg::catalog::{PlanetMonth, SceneRecord, Sensor};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Exhaustive per-slot scan, written without the library's tie-break helper.
/// Returns the chosen Landsat-8 and Sentinel-2 ids for every month.
pub fn brute_force_pairing(months: &[PlanetMonth], cands: &[SceneRecord], max_cloud: f64) -> Vec<[Option<String>; 2]> {
    months
        .iter()
        .map(|m| {
            [Sensor::Landsat8, Sensor::Sentinel2].map(|sensor| {
                let mut eligible: Vec<&SceneRecord> = cands
                    .iter()
                    .filter(|c| {
                        c.sensor == sensor
                            && c.acquisition_date.year() == m.year
                            && c.acquisition_date.month() == m.month
                            && c.cloud_fraction <= max_cloud
                    })
                    .collect();
                eligible.sort_by_key(|c| {
                    (
                        (c.cloud_fraction * 1e12) as i64,
                        Reverse(c.acquisition_date),
                        c.scene_id.clone(),
                    )
                });
                eligible.first().map(|c| c.scene_id.clone())
            })
        })
        .collect()
}
