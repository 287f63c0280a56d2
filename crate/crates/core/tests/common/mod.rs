//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the statistics or matching code it is used to check.

#![allow(dead_code)]

use std::collections::BTreeMap;

use wifipos::radiomap::{ApId, GridPoint, RadioMap};
use wifipos::{QueryVector, Technique};

pub fn brute_mode(v: &[i32]) -> i32 {
    let mut best_val = v[0];
    let mut best_count = 0;
    for &x in v {
        let count = v.iter().filter(|&&y| y == x).count();
        if count > best_count || (count == best_count && x > best_val) {
            best_val = x;
            best_count = count;
        }
    }
    best_val
}

fn sorted_f64(v: &[i32]) -> Vec<f64> {
    // insertion sort keeps the oracle free of library sorting helpers
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for &x in v {
        let x = x as f64;
        let pos = out.iter().position(|&y| y > x).unwrap_or(out.len());
        out.insert(pos, x);
    }
    out
}

pub fn brute_quantile(v: &[i32], p: f64) -> f64 {
    let s = sorted_f64(v);
    let pos = p * (s.len() as f64 - 1.0);
    let i = pos.floor() as usize;
    if i + 1 >= s.len() {
        return s[s.len() - 1];
    }
    s[i] + (pos - i as f64) * (s[i + 1] - s[i])
}

pub fn brute_quartiles(v: &[i32]) -> (f64, f64) {
    (brute_quantile(v, 0.25), brute_quantile(v, 0.75))
}

/// Samples inside [q1, q3], ascending; full list (ascending) when none are.
pub fn brute_filter(v: &[i32]) -> Vec<i32> {
    let (q1, q3) = brute_quartiles(v);
    let mut kept: Vec<i32> = v
        .iter()
        .copied()
        .filter(|&x| q1 <= x as f64 && x as f64 <= q3)
        .collect();
    if kept.is_empty() {
        kept = v.to_vec();
    }
    sorted_f64(&kept).into_iter().map(|x| x as i32).collect()
}

fn base(v: &[i32], t: Technique) -> f64 {
    let max = v.iter().copied().fold(i32::MIN, i32::max) as f64;
    let min = v.iter().copied().fold(i32::MAX, i32::min) as f64;
    match t {
        Technique::Maximum => max,
        Technique::Minimum => min,
        Technique::Mode | Technique::QuartilesMode => brute_mode(v) as f64,
        Technique::Average | Technique::QuartilesAverage => {
            v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
        }
        Technique::MeanValue | Technique::QuartilesMeanValue => (max + min) / 2.0,
    }
}

pub fn brute_summarize(v: &[i32], t: Technique) -> f64 {
    match t {
        Technique::QuartilesMode | Technique::QuartilesAverage | Technique::QuartilesMeanValue => {
            base(&brute_filter(v), t)
        }
        _ => base(v, t),
    }
}

pub fn is_mean_based(t: Technique) -> bool {
    matches!(
        t,
        Technique::Average
            | Technique::QuartilesAverage
            | Technique::MeanValue
            | Technique::QuartilesMeanValue
    )
}

/// Locates `query` by re-summarizing the raw by-point samples of every grid
/// point for technique `t`. Returns `None` when no point has samples.
pub fn reference_locate(
    query: &QueryVector,
    map: &RadioMap,
    t: Technique,
) -> Option<(GridPoint, f64)> {
    let floor = map.floor_dbm() as f64;
    let axis = map.visible_aps();
    let mut best: Option<(GridPoint, f64)> = None;
    for p in map.grid().points() {
        let cell = map.by_point(p)?;
        if cell.is_empty() {
            continue;
        }
        let fp: BTreeMap<&ApId, f64> = cell
            .iter()
            .map(|(ap, s)| {
                let rssi: Vec<i32> = s.iter().map(|x| x.rssi_dbm).collect();
                (ap, brute_summarize(&rssi, t))
            })
            .collect();
        let mut sum = 0.0;
        for ap in &axis {
            let q = query.get(ap).unwrap_or(floor);
            let f = fp.get(ap).copied().unwrap_or(floor);
            sum += (q - f) * (q - f);
        }
        let d = sum.sqrt();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((p, d));
        }
    }
    best
}
