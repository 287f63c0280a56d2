//! Fingerprint summary statistics and the pre-computed [`StatTable`].
//!
//! Eight techniques reduce a (point, AP) sample list to one RSSI value:
//! the extrema, the mode, the arithmetic mean and the midrange, plus the
//! same four-way family computed over the inner-quartile subset. Quartiles
//! use linear interpolation at fractional rank `p * (n - 1)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::radiomap::{ApId, GridPoint, GridSpec, RadioMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Technique {
    Maximum,
    Minimum,
    Mode,
    QuartilesMode,
    Average,
    QuartilesAverage,
    MeanValue,
    QuartilesMeanValue,
}

impl Technique {
    pub const ALL: [Technique; 8] = [
        Technique::Maximum,
        Technique::Minimum,
        Technique::Mode,
        Technique::QuartilesMode,
        Technique::Average,
        Technique::QuartilesAverage,
        Technique::MeanValue,
        Technique::QuartilesMeanValue,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Kebab-case name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            Technique::Maximum => "maximum",
            Technique::Minimum => "minimum",
            Technique::Mode => "mode",
            Technique::QuartilesMode => "quartiles-mode",
            Technique::Average => "average",
            Technique::QuartilesAverage => "quartiles-average",
            Technique::MeanValue => "mean-value",
            Technique::QuartilesMeanValue => "quartiles-mean-value",
        }
    }

    /// Whether the statistic is computed over the inner-quartile subset.
    pub fn is_quartile(self) -> bool {
        matches!(
            self,
            Technique::QuartilesMode | Technique::QuartilesAverage | Technique::QuartilesMeanValue
        )
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Technique::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownTechnique(s.to_owned()))
    }
}

/// Most frequent value; frequency ties go to the strongest (greatest) value.
pub fn mode(samples: &[i32]) -> Result<i32> {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &v in samples {
        *counts.entry(v).or_default() += 1;
    }
    // ascending iteration with >= keeps the greatest tied value
    let mut best: Option<(i32, usize)> = None;
    for (v, c) in counts {
        if best.is_none_or(|(_, bc)| c >= bc) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v).ok_or(Error::EmptySamples)
}

/// Linearly interpolated quantile of an ascending slice at rank `p * (n - 1)`.
///
/// Panics on an empty slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn quartiles_of_sorted(sorted: &[i32]) -> (f64, f64) {
    let as_f64: Vec<f64> = sorted.iter().map(|&v| v as f64).collect();
    (
        quantile_sorted(&as_f64, 0.25),
        quantile_sorted(&as_f64, 0.75),
    )
}

pub fn quartile_bounds(samples: &[i32]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    Ok(quartiles_of_sorted(&sorted))
}

/// Range of the ascending slice lying inside [q1, q3], or the whole slice
/// when that range is empty.
fn inner_range(sorted: &[i32]) -> &[i32] {
    let (q1, q3) = quartiles_of_sorted(sorted);
    let start = sorted.partition_point(|&v| (v as f64) < q1);
    let end = sorted.partition_point(|&v| (v as f64) <= q3);
    if start < end {
        &sorted[start..end]
    } else {
        sorted
    }
}

/// Samples within [Q1, Q3], in ascending order.
pub fn inner_quartile_filter(samples: &[i32]) -> Result<Vec<i32>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    Ok(inner_range(&sorted).to_vec())
}

/// Maximum, Minimum, Mode, Average, MeanValue of a non-empty ascending slice.
fn base_stats(sorted: &[i32]) -> [f64; 5] {
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];

    let mut mode = sorted[0];
    let mut best = 0;
    let mut i = 0;
    while i < sorted.len() {
        let run = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        if run >= best {
            best = run;
            mode = sorted[i];
        }
        i += run;
    }

    let sum: i64 = sorted.iter().map(|&v| v as i64).sum();
    [
        max as f64,
        min as f64,
        mode as f64,
        sum as f64 / sorted.len() as f64,
        (max as f64 + min as f64) / 2.0,
    ]
}

/// All eight technique values, indexed by [`Technique::index`].
pub fn summarize_all(samples: &[i32]) -> Result<[f64; 8]> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let [max, min, mode, avg, mid] = base_stats(&sorted);
    let [_, _, q_mode, q_avg, q_mid] = base_stats(inner_range(&sorted));
    Ok([max, min, mode, q_mode, avg, q_avg, mid, q_mid])
}

pub fn summarize(samples: &[i32], technique: Technique) -> Result<f64> {
    summarize_all(samples).map(|all| all[technique.index()])
}

/// Per-technique, per-point, per-AP summary values for a whole radio map.
#[derive(Debug, Clone, PartialEq)]
pub struct StatTable {
    grid: GridSpec,
    floor_dbm: i32,
    aps: Vec<ApId>,
    // values[technique][point_index * aps.len() + ap_index]
    values: Vec<Vec<Option<f64>>>,
}

impl StatTable {
    /// Assembles a table from explicit values: `values[t]` is a row-major
    /// list of per-point fingerprints aligned with `aps`.
    pub fn from_parts(
        grid: GridSpec,
        floor_dbm: i32,
        aps: Vec<ApId>,
        values: Vec<Vec<Vec<Option<f64>>>>,
    ) -> Result<Self> {
        if values.len() != Technique::ALL.len() {
            return Err(Error::Format(format!(
                "expected {} techniques, found {}",
                Technique::ALL.len(),
                values.len()
            )));
        }
        if aps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("AP list must be strictly sorted".into()));
        }
        let mut flat = Vec::with_capacity(values.len());
        for per_point in values {
            if per_point.len() != grid.len() {
                return Err(Error::Format(format!(
                    "expected {} points, found {}",
                    grid.len(),
                    per_point.len()
                )));
            }
            let mut row = Vec::with_capacity(grid.len() * aps.len());
            for fp in per_point {
                if fp.len() != aps.len() {
                    return Err(Error::Format(format!(
                        "expected {} AP values per point, found {}",
                        aps.len(),
                        fp.len()
                    )));
                }
                row.extend(fp);
            }
            flat.push(row);
        }
        Ok(StatTable {
            grid,
            floor_dbm,
            aps,
            values: flat,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn floor_dbm(&self) -> i32 {
        self.floor_dbm
    }

    /// Canonical AP axis; fingerprints are aligned with it.
    pub fn aps(&self) -> &[ApId] {
        &self.aps
    }

    pub fn ap_index(&self, ap: &ApId) -> Option<usize> {
        self.aps.binary_search(ap).ok()
    }

    /// Fingerprint of `p` under `technique`, aligned with [`StatTable::aps`].
    pub fn fingerprint(&self, technique: Technique, p: GridPoint) -> Option<&[Option<f64>]> {
        let idx = self.grid.index(p)?;
        Some(self.fingerprint_at(technique, idx))
    }

    pub(crate) fn fingerprint_at(
        &self,
        technique: Technique,
        point_index: usize,
    ) -> &[Option<f64>] {
        let n = self.aps.len();
        &self.values[technique.index()][point_index * n..(point_index + 1) * n]
    }

    pub fn value(&self, technique: Technique, p: GridPoint, ap: &ApId) -> Option<f64> {
        let ap_idx = self.ap_index(ap)?;
        self.fingerprint(technique, p)?[ap_idx]
    }

    /// Number of (technique, point, ap) slots, missing ones included.
    pub fn entry_count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }
}

/// Pre-computes every technique for every sampled (point, ap) pair,
/// walking the by-AP view of the map.
pub fn precompute(map: &RadioMap) -> StatTable {
    let grid = *map.grid();
    let aps = map.visible_aps();
    let n = aps.len();
    let mut values = vec![vec![None; grid.len() * n]; Technique::ALL.len()];

    for (ap_idx, points) in map.by_ap().values().enumerate() {
        for (point, samples) in points {
            let rssi: Vec<i32> = samples.iter().map(|s| s.rssi_dbm).collect();
            let Ok(summary) = summarize_all(&rssi) else {
                continue;
            };
            let slot = grid.index(*point).expect("map points lie inside grid") * n + ap_idx;
            for (t, v) in summary.into_iter().enumerate() {
                values[t][slot] = Some(v);
            }
        }
    }

    StatTable {
        grid,
        floor_dbm: map.floor_dbm(),
        aps,
        values,
    }
}
