//! Online positioning: nearest stored fingerprint by Euclidean distance in
//! RSSI space.
//!
//! An AP missing from either the query or a fingerprint contributes the
//! floor RSSI in its place. Each query costs one distance evaluation per
//! surveyed grid point, whatever the number of raw samples behind the table.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::radiomap::{ApId, GridPoint};
use crate::stats::{StatTable, Technique};

/// One scan: the RSSI of every AP the device heard.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryVector {
    readings: BTreeMap<ApId, f64>,
}

impl QueryVector {
    pub fn new(readings: BTreeMap<ApId, f64>) -> Result<Self> {
        if readings.is_empty() {
            return Err(Error::InvalidQuery("no AP readings".into()));
        }
        if let Some((ap, v)) = readings.iter().find(|(_, v)| !v.is_finite() || **v > 0.0) {
            return Err(Error::InvalidQuery(format!(
                "{ap}: rssi {v} outside [floor, 0]"
            )));
        }
        Ok(QueryVector { readings })
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let readings = pairs
            .into_iter()
            .map(|(ap, v)| Ok((ApId::new(ap)?, v)))
            .collect::<Result<_>>()?;
        Self::new(readings)
    }

    pub fn get(&self, ap: &ApId) -> Option<f64> {
        self.readings.get(ap).copied()
    }

    pub fn readings(&self) -> &BTreeMap<ApId, f64> {
        &self.readings
    }
}

/// Restricts which APs take part in matching.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApFilter {
    include: Option<BTreeSet<ApId>>,
    rssi_min: Option<f64>,
    rssi_max: Option<f64>,
}

impl ApFilter {
    pub fn new(
        include: Option<BTreeSet<ApId>>,
        rssi_min: Option<f64>,
        rssi_max: Option<f64>,
    ) -> Result<Self> {
        if let (Some(lo), Some(hi)) = (rssi_min, rssi_max) {
            if lo > hi {
                return Err(Error::InvalidFilter(format!(
                    "rssi_min {lo} exceeds rssi_max {hi}"
                )));
            }
        }
        Ok(ApFilter {
            include,
            rssi_min,
            rssi_max,
        })
    }

    fn admits(&self, ap: &ApId, query_rssi: f64) -> bool {
        self.include.as_ref().is_none_or(|set| set.contains(ap))
            && self.rssi_min.is_none_or(|lo| query_rssi >= lo)
            && self.rssi_max.is_none_or(|hi| query_rssi <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub point: GridPoint,
    pub distance: f64,
    pub technique: Technique,
}

/// Euclidean distance over `axis`, substituting `floor` for any AP absent
/// on either side.
pub fn euclidean_distance(
    query: &QueryVector,
    fingerprint: &BTreeMap<ApId, f64>,
    axis: &[ApId],
    floor: f64,
) -> Result<f64> {
    if axis.is_empty() {
        return Err(Error::NoUsableAps);
    }
    let sum: f64 = axis
        .iter()
        .map(|ap| {
            let q = query.get(ap).unwrap_or(floor);
            let f = fingerprint.get(ap).copied().unwrap_or(floor);
            (q - f) * (q - f)
        })
        .sum();
    Ok(sum.sqrt())
}

/// Keeps the APs of `axis` admitted by `filter`, in axis order. An AP the
/// query did not hear is judged at `floor`.
pub fn apply_ap_filter(
    axis: &[ApId],
    query: &QueryVector,
    filter: &ApFilter,
    floor: f64,
) -> Result<Vec<ApId>> {
    let kept: Vec<ApId> = axis
        .iter()
        .filter(|ap| filter.admits(ap, query.get(ap).unwrap_or(floor)))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::NoUsableAps);
    }
    Ok(kept)
}

/// Query values laid out against the table's AP axis after filtering.
struct PreparedQuery {
    slots: Vec<(usize, f64)>,
    floor: f64,
}

impl PreparedQuery {
    fn new(query: &QueryVector, table: &StatTable, filter: Option<&ApFilter>) -> Result<Self> {
        let floor = table.floor_dbm() as f64;
        if let Some((ap, v)) = query.readings().iter().find(|(_, v)| **v < floor) {
            return Err(Error::InvalidQuery(format!(
                "{ap}: rssi {v} below floor {floor}"
            )));
        }
        let axis = match filter {
            Some(f) => apply_ap_filter(table.aps(), query, f, floor)?,
            None if table.aps().is_empty() => return Err(Error::NoUsableAps),
            None => table.aps().to_vec(),
        };
        let slots = axis
            .iter()
            .map(|ap| {
                let idx = table.ap_index(ap).expect("axis drawn from table");
                (idx, query.get(ap).unwrap_or(floor))
            })
            .collect();
        Ok(PreparedQuery { slots, floor })
    }

    fn distance(&self, fingerprint: &[Option<f64>]) -> f64 {
        self.slots
            .iter()
            .map(|&(idx, q)| {
                let d = q - fingerprint[idx].unwrap_or(self.floor);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Argmin over surveyed points in row-major order; the first minimum
    /// wins, which is the lexicographically smallest (row, col).
    fn nearest(
        &self,
        table: &StatTable,
        technique: Technique,
    ) -> Result<(PositionEstimate, usize)> {
        let mut best: Option<(usize, f64)> = None;
        let mut evaluations = 0;
        for idx in 0..table.grid().len() {
            let fp = table.fingerprint_at(technique, idx);
            if fp.iter().all(Option::is_none) {
                continue;
            }
            let d = self.distance(fp);
            evaluations += 1;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((idx, d));
            }
        }
        let (idx, distance) = best.ok_or(Error::NoFingerprints(technique.name()))?;
        Ok((
            PositionEstimate {
                point: table.grid().point_at(idx),
                distance,
                technique,
            },
            evaluations,
        ))
    }
}

pub fn locate(
    query: &QueryVector,
    table: &StatTable,
    technique: Technique,
    filter: Option<&ApFilter>,
) -> Result<PositionEstimate> {
    locate_instrumented(query, table, technique, filter).map(|(est, _)| est)
}

/// Like [`locate`], also returning how many distance evaluations were made.
pub fn locate_instrumented(
    query: &QueryVector,
    table: &StatTable,
    technique: Technique,
    filter: Option<&ApFilter>,
) -> Result<(PositionEstimate, usize)> {
    PreparedQuery::new(query, table, filter)?.nearest(table, technique)
}

/// One estimate per technique.
pub fn locate_all(
    query: &QueryVector,
    table: &StatTable,
    filter: Option<&ApFilter>,
) -> Result<BTreeMap<Technique, PositionEstimate>> {
    let prepared = PreparedQuery::new(query, table, filter)?;
    Technique::ALL
        .into_iter()
        .map(|t| prepared.nearest(table, t).map(|(est, _)| (t, est)))
        .collect()
}
