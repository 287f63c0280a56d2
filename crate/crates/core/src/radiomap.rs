//! Survey data model and the dual-indexed radio map.
//!
//! A [`RadioMap`] keeps every survey sample twice: once grouped by access
//! point (each AP holds the grid points where it was heard) and once in a
//! rows x cols matrix where each cell holds the APs heard at that point.
//! The by-AP view feeds offline pre-computation, the by-point view feeds
//! online matching. Both are materialized independently and must mirror
//! each other; [`check_consistency`] verifies that.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RSSI substituted for an AP that is absent from a vector.
pub const DEFAULT_FLOOR_DBM: i32 = -100;

/// Opaque access-point identifier (BSSID or network name).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ApId(String);

impl TryFrom<String> for ApId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        ApId::new(s)
    }
}

impl From<ApId> for String {
    fn from(ap: ApId) -> String {
        ap.0
    }
}

impl ApId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidQuery("empty AP identifier".into()));
        }
        Ok(ApId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ApId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Rectangular survey grid with square cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    rows: u32,
    cols: u32,
    cell_size_m: f64,
}

impl GridSpec {
    pub fn new(rows: u32, cols: u32, cell_size_m: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGrid(format!("{rows}x{cols} has no cells")));
        }
        if !(cell_size_m.is_finite() && cell_size_m > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell size {cell_size_m} m must be positive"
            )));
        }
        Ok(GridSpec {
            rows,
            cols,
            cell_size_m,
        })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: GridPoint) -> bool {
        (1..=self.rows).contains(&p.row) && (1..=self.cols).contains(&p.col)
    }

    /// Row-major index of `p`. Row-major order is also lexicographic
    /// (row, col) order.
    pub fn index(&self, p: GridPoint) -> Option<usize> {
        self.contains(p)
            .then(|| (p.row - 1) as usize * self.cols as usize + (p.col - 1) as usize)
    }

    pub fn point_at(&self, index: usize) -> GridPoint {
        let cols = self.cols as usize;
        GridPoint {
            row: (index / cols) as u32 + 1,
            col: (index % cols) as u32 + 1,
        }
    }

    /// All points in row-major order.
    pub fn points(&self) -> impl Iterator<Item = GridPoint> + '_ {
        (0..self.len()).map(|i| self.point_at(i))
    }

    /// True when `p` sits on the outer boundary of the grid.
    pub fn is_edge(&self, p: GridPoint) -> bool {
        p.row == 1 || p.col == 1 || p.row == self.rows || p.col == self.cols
    }

    /// Cell center in meters, x along columns and y along rows, with the
    /// grid's outer corner at the origin.
    pub fn center_m(&self, p: GridPoint) -> (f64, f64) {
        (
            (p.col as f64 - 0.5) * self.cell_size_m,
            (p.row as f64 - 0.5) * self.cell_size_m,
        )
    }
}

/// 1-based (row, col) grid coordinate. Orders lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPoint {
    pub row: u32,
    pub col: u32,
}

impl GridPoint {
    pub const fn new(row: u32, col: u32) -> Self {
        GridPoint { row, col }
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.row, self.col)
    }
}

/// One (RSSI, link quality) reading of one AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawSample {
    pub rssi_dbm: i32,
    pub lq: u8,
}

impl RawSample {
    pub const fn new(rssi_dbm: i32, lq: u8) -> Self {
        RawSample { rssi_dbm, lq }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyRecord {
    pub point: GridPoint,
    pub ap: ApId,
    pub sample: RawSample,
    /// Ordinal of this sample within its (point, ap) stream.
    pub seq: u64,
}

/// Parses survey CSV rows (`row,col,ap_id,rssi_dbm,lq`, header optional).
///
/// `seq` is assigned per (point, ap) in file order.
pub fn ingest_scans<R: Read>(input: R) -> Result<Vec<SurveyRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut records = Vec::new();
    let mut next_seq: HashMap<(GridPoint, ApId), u64> = HashMap::new();
    let mut first = true;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if std::mem::take(&mut first) && row.get(0).is_some_and(|f| f.eq_ignore_ascii_case("row")) {
            continue;
        }
        if row.len() != 5 {
            return Err(Error::parse(
                line,
                format!(
                    "expected 5 fields (row,col,ap_id,rssi_dbm,lq), found {}",
                    row.len()
                ),
            ));
        }
        let row_idx: u32 = parse_field(&row[0], "row", line)?;
        let col_idx: u32 = parse_field(&row[1], "col", line)?;
        let ap = ApId::new(&row[2]).map_err(|_| Error::parse(line, "empty ap_id"))?;
        let rssi: i32 = parse_field(&row[3], "rssi_dbm", line)?;
        let lq: i64 = parse_field(&row[4], "lq", line)?;
        if rssi > 0 {
            return Err(Error::parse(
                line,
                format!("rssi_dbm {rssi} is above 0 dBm"),
            ));
        }
        if !(0..=100).contains(&lq) {
            return Err(Error::parse(line, format!("lq {lq} outside 0..100")));
        }
        let point = GridPoint::new(row_idx, col_idx);
        let seq = next_seq.entry((point, ap.clone())).or_insert(0);
        records.push(SurveyRecord {
            point,
            ap,
            sample: RawSample::new(rssi, lq as u8),
            seq: *seq,
        });
        *seq += 1;
    }
    if records.is_empty() {
        return Err(Error::NoSurveyData);
    }
    Ok(records)
}

pub fn ingest_scans_path(path: &Path) -> Result<Vec<SurveyRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_scans(std::io::BufReader::new(file))
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line: u64) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("{name} `{field}` is not a valid integer")))
}

/// The survey database, stored in two mirrored layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    grid: GridSpec,
    floor_dbm: i32,
    by_ap: BTreeMap<ApId, BTreeMap<GridPoint, Vec<RawSample>>>,
    by_point: Vec<BTreeMap<ApId, Vec<RawSample>>>,
}

pub fn build_radio_map(records: &[SurveyRecord], grid: GridSpec) -> Result<RadioMap> {
    build_radio_map_with_floor(records, grid, DEFAULT_FLOOR_DBM)
}

pub fn build_radio_map_with_floor(
    records: &[SurveyRecord],
    grid: GridSpec,
    floor_dbm: i32,
) -> Result<RadioMap> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut streams: BTreeMap<(GridPoint, ApId), Vec<(u64, RawSample)>> = BTreeMap::new();
    for (index, rec) in records.iter().enumerate() {
        if !grid.contains(rec.point) {
            return Err(Error::OutOfGrid {
                index,
                ap: rec.ap.to_string(),
                point: rec.point,
                rows: grid.rows,
                cols: grid.cols,
            });
        }
        let invalid = |message: String| Error::InvalidRecord {
            index,
            ap: rec.ap.to_string(),
            point: rec.point,
            message,
        };
        let rssi = rec.sample.rssi_dbm;
        if rssi > 0 || rssi < floor_dbm {
            return Err(invalid(format!("rssi {rssi} dBm outside [{floor_dbm}, 0]")));
        }
        if rec.sample.lq > 100 {
            return Err(invalid(format!("lq {} outside 0..100", rec.sample.lq)));
        }
        streams
            .entry((rec.point, rec.ap.clone()))
            .or_default()
            .push((rec.seq, rec.sample));
    }

    let mut ordered = Vec::with_capacity(streams.len());
    for ((point, ap), mut stream) in streams {
        stream.sort_by_key(|(seq, _)| *seq);
        if let Some(w) = stream.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidRecord {
                index: 0,
                ap: ap.to_string(),
                point,
                message: format!("duplicate seq {}", w[0].0),
            });
        }
        ordered.push((point, ap, stream.into_iter().map(|(_, s)| s).collect()));
    }
    Ok(RadioMap::from_streams(grid, floor_dbm, ordered))
}

impl RadioMap {
    /// Materializes both views from already ordered (point, ap) streams.
    /// Callers guarantee every point lies inside `grid`.
    pub(crate) fn from_streams(
        grid: GridSpec,
        floor_dbm: i32,
        streams: Vec<(GridPoint, ApId, Vec<RawSample>)>,
    ) -> Self {
        let mut by_ap: BTreeMap<ApId, BTreeMap<GridPoint, Vec<RawSample>>> = BTreeMap::new();
        let mut by_point = vec![BTreeMap::new(); grid.len()];
        for (point, ap, samples) in streams {
            let idx = grid.index(point).expect("stream point inside grid");
            by_ap
                .entry(ap.clone())
                .or_default()
                .insert(point, samples.clone());
            by_point[idx].insert(ap, samples);
        }
        RadioMap {
            grid,
            floor_dbm,
            by_ap,
            by_point,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn floor_dbm(&self) -> i32 {
        self.floor_dbm
    }

    /// By-AP view: for each AP, the points where it was sampled.
    pub fn by_ap(&self) -> &BTreeMap<ApId, BTreeMap<GridPoint, Vec<RawSample>>> {
        &self.by_ap
    }

    /// By-point view: the APs sampled at `p`.
    pub fn by_point(&self, p: GridPoint) -> Option<&BTreeMap<ApId, Vec<RawSample>>> {
        self.grid.index(p).map(|i| &self.by_point[i])
    }

    /// Samples of `ap` at `p`, read from the by-point view.
    pub fn samples_at(&self, p: GridPoint, ap: &ApId) -> Option<&[RawSample]> {
        self.by_point(p)?.get(ap).map(Vec::as_slice)
    }

    /// Lexicographically sorted list of every AP in the map.
    pub fn visible_aps(&self) -> Vec<ApId> {
        self.by_ap.keys().cloned().collect()
    }

    pub fn sample_count_by_ap(&self) -> usize {
        self.by_ap
            .values()
            .flat_map(|points| points.values())
            .map(Vec::len)
            .sum()
    }

    pub fn sample_count_by_point(&self) -> usize {
        self.by_point
            .iter()
            .flat_map(|cell| cell.values())
            .map(Vec::len)
            .sum()
    }
}

pub fn visible_aps(map: &RadioMap) -> Vec<ApId> {
    map.visible_aps()
}

/// One (ap, point) whose sample multiset differs between the two views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub ap: ApId,
    pub point: GridPoint,
    pub by_ap_count: usize,
    pub by_point_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub mismatches: Vec<Mismatch>,
    pub total_by_ap: usize,
    pub total_by_point: usize,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty() && self.total_by_ap == self.total_by_point
    }
}

pub fn check_consistency(map: &RadioMap) -> ConsistencyReport {
    let mut pairs: BTreeMap<(ApId, GridPoint), (Vec<RawSample>, Vec<RawSample>)> = BTreeMap::new();
    for (ap, points) in &map.by_ap {
        for (point, samples) in points {
            pairs.entry((ap.clone(), *point)).or_default().0 = samples.clone();
        }
    }
    for (idx, cell) in map.by_point.iter().enumerate() {
        let point = map.grid.point_at(idx);
        for (ap, samples) in cell {
            pairs.entry((ap.clone(), point)).or_default().1 = samples.clone();
        }
    }

    let mismatches = pairs
        .into_iter()
        .filter_map(|((ap, point), (mut a, mut b))| {
            a.sort_unstable();
            b.sort_unstable();
            (a != b).then_some(Mismatch {
                ap,
                point,
                by_ap_count: a.len(),
                by_point_count: b.len(),
            })
        })
        .collect();

    ConsistencyReport {
        mismatches,
        total_by_ap: map.sample_count_by_ap(),
        total_by_point: map.sample_count_by_point(),
    }
}
