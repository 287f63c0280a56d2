//! Versioned JSON persistence for radio maps and stat tables.
//!
//! Output is deterministic: maps are keyed by sorted AP ids, points are
//! written in row-major order and floats use shortest round-trip form.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::radiomap::{ApId, GridPoint, GridSpec, RadioMap, RawSample};
use crate::stats::{StatTable, Technique};

pub const MAP_FORMAT: &str = "wifipos-radiomap";
pub const TABLE_FORMAT: &str = "wifipos-stattable";
pub const BUNDLE_FORMAT: &str = "wifipos-bundle";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GridDoc {
    rows: u32,
    cols: u32,
    cell_size_m: f64,
}

impl GridDoc {
    fn from_grid(g: &GridSpec) -> Self {
        GridDoc {
            rows: g.rows(),
            cols: g.cols(),
            cell_size_m: g.cell_size_m(),
        }
    }

    fn to_grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.rows, self.cols, self.cell_size_m)
    }
}

#[derive(Serialize, Deserialize)]
struct PointDoc {
    row: u32,
    col: u32,
    /// Per AP, ordered `[rssi_dbm, lq]` pairs.
    samples: BTreeMap<ApId, Vec<(i32, u8)>>,
}

#[derive(Serialize, Deserialize)]
struct MapDoc {
    format: String,
    version: u32,
    floor_dbm: i32,
    grid: GridDoc,
    aps: Vec<ApId>,
    points: Vec<PointDoc>,
}

#[derive(Serialize, Deserialize)]
struct TechniqueDoc {
    technique: String,
    /// Row-major per-point fingerprints aligned with `aps`; null = no samples.
    values: Vec<Vec<Option<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    format: String,
    version: u32,
    floor_dbm: i32,
    grid: GridDoc,
    aps: Vec<ApId>,
    techniques: Vec<TechniqueDoc>,
}

#[derive(Serialize, Deserialize)]
struct BundleDoc {
    format: String,
    version: u32,
    map: MapDoc,
    stats: TableDoc,
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Format(format!(
            "expected `{expected}`, found `{format}`"
        )));
    }
    if version != VERSION {
        return Err(Error::Format(format!(
            "{format} version {version} is not supported"
        )));
    }
    Ok(())
}

fn map_doc(map: &RadioMap) -> MapDoc {
    let grid = map.grid();
    let points = grid
        .points()
        .filter_map(|p| {
            let cell = map.by_point(p)?;
            (!cell.is_empty()).then(|| PointDoc {
                row: p.row,
                col: p.col,
                samples: cell
                    .iter()
                    .map(|(ap, s)| (ap.clone(), s.iter().map(|s| (s.rssi_dbm, s.lq)).collect()))
                    .collect(),
            })
        })
        .collect();
    MapDoc {
        format: MAP_FORMAT.into(),
        version: VERSION,
        floor_dbm: map.floor_dbm(),
        grid: GridDoc::from_grid(grid),
        aps: map.visible_aps(),
        points,
    }
}

fn map_from_doc(doc: MapDoc) -> Result<RadioMap> {
    check_header(&doc.format, doc.version, MAP_FORMAT)?;
    let grid = doc.grid.to_grid()?;
    let declared: BTreeSet<&ApId> = doc.aps.iter().collect();
    let mut seen = BTreeSet::new();
    let mut streams = Vec::new();
    let mut points_seen = BTreeSet::new();
    for pd in doc.points {
        let point = GridPoint::new(pd.row, pd.col);
        if !grid.contains(point) {
            return Err(Error::Format(format!("point {point} outside grid")));
        }
        if !points_seen.insert(point) {
            return Err(Error::Format(format!("point {point} listed twice")));
        }
        for (ap, samples) in pd.samples {
            if !declared.contains(&ap) {
                return Err(Error::Format(format!("AP {ap} missing from the AP list")));
            }
            if samples.is_empty() {
                return Err(Error::Format(format!(
                    "empty sample list for {ap} at {point}"
                )));
            }
            if let Some((rssi, lq)) = samples
                .iter()
                .find(|(rssi, lq)| *rssi > 0 || *rssi < doc.floor_dbm || *lq > 100)
            {
                return Err(Error::Format(format!(
                    "sample ({rssi}, {lq}) for {ap} at {point} out of range"
                )));
            }
            seen.insert(ap.clone());
            let samples = samples
                .into_iter()
                .map(|(r, q)| RawSample::new(r, q))
                .collect();
            streams.push((point, ap, samples));
        }
    }
    if seen.len() != declared.len() {
        return Err(Error::Format("AP list names APs without samples".into()));
    }
    Ok(RadioMap::from_streams(grid, doc.floor_dbm, streams))
}

fn table_doc(table: &StatTable) -> TableDoc {
    let grid = table.grid();
    let techniques = Technique::ALL
        .into_iter()
        .map(|t| TechniqueDoc {
            technique: t.name().into(),
            values: grid
                .points()
                .map(|p| table.fingerprint(t, p).expect("point in grid").to_vec())
                .collect(),
        })
        .collect();
    TableDoc {
        format: TABLE_FORMAT.into(),
        version: VERSION,
        floor_dbm: table.floor_dbm(),
        grid: GridDoc::from_grid(grid),
        aps: table.aps().to_vec(),
        techniques,
    }
}

fn table_from_doc(doc: TableDoc) -> Result<StatTable> {
    check_header(&doc.format, doc.version, TABLE_FORMAT)?;
    let grid = doc.grid.to_grid()?;
    let mut by_name: BTreeMap<String, Vec<Vec<Option<f64>>>> = doc
        .techniques
        .into_iter()
        .map(|t| (t.technique, t.values))
        .collect();
    let values = Technique::ALL
        .into_iter()
        .map(|t| {
            by_name
                .remove(t.name())
                .ok_or_else(|| Error::Format(format!("technique {t} missing")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Format(format!("unknown technique `{extra}`")));
    }
    StatTable::from_parts(grid, doc.floor_dbm, doc.aps, values)
}

fn to_bytes<T: Serialize>(doc: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec(doc).expect("documents serialize");
    out.push(b'\n');
    out
}

fn from_bytes<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_map(map: &RadioMap) -> Vec<u8> {
    to_bytes(&map_doc(map))
}

pub fn decode_map(bytes: &[u8]) -> Result<RadioMap> {
    map_from_doc(from_bytes(bytes)?)
}

pub fn encode_table(table: &StatTable) -> Vec<u8> {
    to_bytes(&table_doc(table))
}

pub fn decode_table(bytes: &[u8]) -> Result<StatTable> {
    table_from_doc(from_bytes(bytes)?)
}

/// A radio map together with its pre-computed stat table; the `.wfp` file.
#[derive(Debug, Clone, PartialEq)]
pub struct MapBundle {
    pub map: RadioMap,
    pub table: StatTable,
}

impl MapBundle {
    pub fn encode(&self) -> Vec<u8> {
        to_bytes(&BundleDoc {
            format: BUNDLE_FORMAT.into(),
            version: VERSION,
            map: map_doc(&self.map),
            stats: table_doc(&self.table),
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let doc: BundleDoc = from_bytes(bytes)?;
        check_header(&doc.format, doc.version, BUNDLE_FORMAT)?;
        let map = map_from_doc(doc.map)?;
        let table = table_from_doc(doc.stats)?;
        if table.grid() != map.grid() || table.aps() != map.visible_aps().as_slice() {
            return Err(Error::Format(
                "stat table does not match the radio map".into(),
            ));
        }
        Ok(MapBundle { map, table })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radiomap::{build_radio_map, SurveyRecord};
    use crate::stats::precompute;

    fn small_map() -> RadioMap {
        let rec = |r, c, ap: &str, rssi, seq| SurveyRecord {
            point: GridPoint::new(r, c),
            ap: ApId::new(ap).unwrap(),
            sample: RawSample::new(rssi, 40),
            seq,
        };
        build_radio_map(
            &[
                rec(1, 1, "B", -61, 0),
                rec(1, 1, "A", -50, 0),
                rec(1, 1, "A", -55, 1),
                rec(2, 3, "A", -70, 0),
            ],
            GridSpec::new(2, 3, 1.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn map_round_trip_is_exact() {
        let map = small_map();
        let bytes = encode_map(&map);
        let back = decode_map(&bytes).unwrap();
        assert_eq!(back, map);
        assert_eq!(encode_map(&back), bytes);
    }

    #[test]
    fn table_round_trip_is_exact() {
        let table = precompute(&small_map());
        let back = decode_table(&encode_table(&table)).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn bundle_round_trip_and_mismatch() {
        let map = small_map();
        let bundle = MapBundle {
            table: precompute(&map),
            map,
        };
        assert_eq!(MapBundle::decode(&bundle.encode()).unwrap(), bundle);

        let text = String::from_utf8(bundle.encode()).unwrap();
        let wrong_version = text.replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(
            MapBundle::decode(wrong_version.as_bytes()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rejects_wrong_format_and_garbage() {
        let table_bytes = encode_table(&precompute(&small_map()));
        assert!(decode_map(&table_bytes).is_err());
        assert!(decode_map(b"not json").is_err());
    }
}
