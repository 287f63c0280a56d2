//! Classic fingerprint matching without pre-computation: every raw scan
//! vector stored in the radio map is compared against the query. Used as
//! the reference for the pre-computed path's speedup.

use crate::error::{Error, Result};
use crate::locator::QueryVector;
use crate::radiomap::{ApId, GridPoint, RadioMap};

/// Raw scan vectors per point. Vector `i` at a point holds the `i`-th
/// sample of each AP there, or the floor where that AP has fewer samples.
#[derive(Debug, Clone)]
pub struct RawIndex {
    aps: Vec<ApId>,
    floor: f64,
    points: Vec<(GridPoint, Vec<Vec<f64>>)>,
}

impl RawIndex {
    pub fn new(map: &RadioMap) -> Self {
        let aps = map.visible_aps();
        let floor = map.floor_dbm() as f64;
        let mut points = Vec::new();
        for p in map.grid().points() {
            let Some(cell) = map.by_point(p) else {
                continue;
            };
            let depth = cell.values().map(Vec::len).max().unwrap_or(0);
            if depth == 0 {
                continue;
            }
            let vectors = (0..depth)
                .map(|i| {
                    aps.iter()
                        .map(|ap| {
                            cell.get(ap)
                                .and_then(|s| s.get(i))
                                .map_or(floor, |s| s.rssi_dbm as f64)
                        })
                        .collect()
                })
                .collect();
            points.push((p, vectors));
        }
        RawIndex { aps, floor, points }
    }

    pub fn vector_count(&self) -> usize {
        self.points.iter().map(|(_, v)| v.len()).sum()
    }

    /// Nearest raw vector; returns its point, distance and the number of
    /// distance evaluations.
    pub fn locate(&self, query: &QueryVector) -> Result<(GridPoint, f64, usize)> {
        if self.aps.is_empty() {
            return Err(Error::NoUsableAps);
        }
        let q: Vec<f64> = self
            .aps
            .iter()
            .map(|ap| query.get(ap).unwrap_or(self.floor))
            .collect();
        let mut best: Option<(GridPoint, f64)> = None;
        let mut evaluations = 0;
        for (p, vectors) in &self.points {
            for v in vectors {
                let d = q
                    .iter()
                    .zip(v)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                evaluations += 1;
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((*p, d));
                }
            }
        }
        let (p, d) = best.ok_or(Error::NoFingerprints("raw"))?;
        Ok((p, d, evaluations))
    }
}
