//! Offline batch evaluation: hit rates, per-point estimate histograms,
//! positional error in meters and flat-file reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde_json::json;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::locator::{locate_all, ApFilter, PositionEstimate, QueryVector};
use crate::radiomap::{GridPoint, GridSpec};
use crate::stats::{quantile_sorted, StatTable, Technique};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledQuery {
    pub truth: GridPoint,
    pub query: QueryVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub truth: GridPoint,
    pub estimates: BTreeMap<Technique, PositionEstimate>,
}

/// Every technique's estimate for every labeled query, in query order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    grid: GridSpec,
    outcomes: Vec<QueryOutcome>,
}

impl BatchResult {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn outcomes(&self) -> &[QueryOutcome] {
        &self.outcomes
    }

    pub fn truth_points(&self) -> BTreeSet<GridPoint> {
        self.outcomes.iter().map(|o| o.truth).collect()
    }

    /// (truth, estimate) pairs for one technique.
    pub fn estimates(&self, t: Technique) -> impl Iterator<Item = (GridPoint, &PositionEstimate)> {
        self.outcomes
            .iter()
            .filter_map(move |o| o.estimates.get(&t).map(|e| (o.truth, e)))
    }

    pub fn estimates_at(&self, truth: GridPoint, t: Technique) -> Vec<&PositionEstimate> {
        self.estimates(t)
            .filter(|(tp, _)| *tp == truth)
            .map(|(_, e)| e)
            .collect()
    }
}

pub fn batch_locate(
    queries: &[LabeledQuery],
    table: &StatTable,
    filter: Option<&ApFilter>,
) -> Result<BatchResult> {
    if queries.is_empty() {
        return Err(Error::NoEstimates("an empty query batch".into()));
    }
    let grid = *table.grid();
    let outcomes = queries
        .iter()
        .enumerate()
        .map(|(index, lq)| {
            let annotate = |e: Error| Error::Query {
                index,
                source: Box::new(e),
            };
            if !grid.contains(lq.truth) {
                return Err(annotate(Error::InvalidQuery(format!(
                    "truth {} outside grid",
                    lq.truth
                ))));
            }
            let estimates = locate_all(&lq.query, table, filter).map_err(annotate)?;
            Ok(QueryOutcome {
                truth: lq.truth,
                estimates,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BatchResult { grid, outcomes })
}

/// Percentage of estimates landing exactly on the true cell.
pub fn hit_rate(result: &BatchResult, t: Technique) -> Result<f64> {
    let (hits, total) = hit_counts(result, t);
    if total == 0 {
        return Err(Error::NoEstimates(t.to_string()));
    }
    Ok(100.0 * hits as f64 / total as f64)
}

fn hit_counts(result: &BatchResult, t: Technique) -> (usize, usize) {
    result.estimates(t).fold((0, 0), |(h, n), (truth, e)| {
        (h + usize::from(e.point == truth), n + 1)
    })
}

/// Rounds a percentage to one decimal.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

pub fn position_histogram(
    result: &BatchResult,
    truth: GridPoint,
    t: Technique,
) -> BTreeMap<GridPoint, usize> {
    let mut hist = BTreeMap::new();
    for e in result.estimates_at(truth, t) {
        *hist.entry(e.point).or_default() += 1;
    }
    hist
}

pub fn error_meters(truth: GridPoint, estimate: GridPoint, grid: &GridSpec) -> f64 {
    let dr = truth.row as f64 - estimate.row as f64;
    let dc = truth.col as f64 - estimate.col as f64;
    grid.cell_size_m() * dr.hypot(dc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    All,
    /// Truth points off the grid boundary.
    Inner,
    /// Truth points on the grid boundary.
    Edge,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::All, Region::Inner, Region::Edge];

    pub fn name(self) -> &'static str {
        match self {
            Region::All => "all",
            Region::Inner => "inner",
            Region::Edge => "edge",
        }
    }

    pub fn includes(self, grid: &GridSpec, p: GridPoint) -> bool {
        match self {
            Region::All => true,
            Region::Inner => !grid.is_edge(p),
            Region::Edge => grid.is_edge(p),
        }
    }
}

/// Error of every estimate whose truth lies in `region`, in query order.
pub fn errors_in(result: &BatchResult, t: Technique, region: Region) -> Vec<f64> {
    let grid = result.grid;
    result
        .estimates(t)
        .filter(|(truth, _)| region.includes(&grid, *truth))
        .map(|(truth, e)| error_meters(truth, e.point, &grid))
        .collect()
}

/// 95th percentile of the error distribution, using the same
/// interpolation as the quartile statistics.
pub fn p95_error(result: &BatchResult, t: Technique, region: Region) -> Result<f64> {
    let mut errors = errors_in(result, t, region);
    if errors.is_empty() {
        return Err(Error::NoEstimates(format!(
            "{t} in region {}",
            region.name()
        )));
    }
    errors.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&errors, 0.95))
}

pub fn max_error(result: &BatchResult, t: Technique, region: Region) -> Result<f64> {
    errors_in(result, t, region)
        .into_iter()
        .reduce(f64::max)
        .ok_or_else(|| Error::NoEstimates(format!("{t} in region {}", region.name())))
}

/// A per-region value; `None` when no truth point falls in the region.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ByRegion {
    pub all: Option<f64>,
    pub inner: Option<f64>,
    pub edge: Option<f64>,
}

impl ByRegion {
    fn collect(mut f: impl FnMut(Region) -> Option<f64>) -> Self {
        ByRegion {
            all: f(Region::All),
            inner: f(Region::Inner),
            edge: f(Region::Edge),
        }
    }

    pub fn get(&self, region: Region) -> Option<f64> {
        match region {
            Region::All => self.all,
            Region::Inner => self.inner,
            Region::Edge => self.edge,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TechniqueSummary {
    pub technique: Technique,
    pub hits: usize,
    pub queries: usize,
    /// Hit percentage, rounded to one decimal.
    pub hit_rate: f64,
    pub p95_error_m: ByRegion,
    pub max_error_m: ByRegion,
    pub errors_m: Vec<f64>,
    /// Estimate counts per truth point.
    pub histograms: BTreeMap<GridPoint, BTreeMap<GridPoint, usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub techniques: Vec<TechniqueSummary>,
}

impl AnalysisReport {
    pub fn technique(&self, t: Technique) -> Option<&TechniqueSummary> {
        self.techniques.iter().find(|s| s.technique == t)
    }

    /// Techniques by descending hit rate; ties keep technique order.
    pub fn ranked(&self) -> Vec<&TechniqueSummary> {
        let mut v: Vec<_> = self.techniques.iter().collect();
        v.sort_by(|a, b| {
            b.hit_rate
                .total_cmp(&a.hit_rate)
                .then(a.technique.cmp(&b.technique))
        });
        v
    }
}

pub fn build_report(result: &BatchResult) -> Result<AnalysisReport> {
    let truths = result.truth_points();
    let techniques = Technique::ALL
        .into_iter()
        .map(|t| {
            let (hits, queries) = hit_counts(result, t);
            let hit_rate = round1(hit_rate(result, t)?);
            Ok(TechniqueSummary {
                technique: t,
                hits,
                queries,
                hit_rate,
                p95_error_m: ByRegion::collect(|r| p95_error(result, t, r).ok()),
                max_error_m: ByRegion::collect(|r| max_error(result, t, r).ok()),
                errors_m: errors_in(result, t, Region::All),
                histograms: truths
                    .iter()
                    .map(|&p| (p, position_histogram(result, p, t)))
                    .collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(AnalysisReport { techniques })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" => Ok(ReportFormat::Jsonl),
            other => Err(Error::Format(format!("unknown report format `{other}`"))),
        }
    }
}

pub const REPORT_CSV_HEADER: &str = "technique,metric,region,value";

pub fn render_report(report: &AnalysisReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Jsonl => render_jsonl(report),
    }
}

fn render_csv(report: &AnalysisReport) -> String {
    let mut out = String::new();
    out.push_str(REPORT_CSV_HEADER);
    out.push('\n');
    for s in &report.techniques {
        let t = s.technique;
        let _ = writeln!(out, "{t},hit_rate,all,{:.1}", s.hit_rate);
        let _ = writeln!(out, "{t},hits,all,{}", s.hits);
        let _ = writeln!(out, "{t},queries,all,{}", s.queries);
        for (metric, values) in [
            ("p95_error_m", &s.p95_error_m),
            ("max_error_m", &s.max_error_m),
        ] {
            for region in Region::ALL {
                if let Some(v) = values.get(region) {
                    let _ = writeln!(out, "{t},{metric},{},{v:.4}", region.name());
                }
            }
        }
        for (truth, hist) in &s.histograms {
            for (est, count) in hist {
                let _ = writeln!(out, "{t},estimate_count:{est},point:{truth},{count}");
            }
        }
    }
    out
}

fn render_jsonl(report: &AnalysisReport) -> String {
    let region_obj = |r: &ByRegion| {
        json!({
            "all": r.all.map(round4),
            "inner": r.inner.map(round4),
            "edge": r.edge.map(round4),
        })
    };
    let mut out = String::new();
    for s in &report.techniques {
        let histograms: Vec<_> = s
            .histograms
            .iter()
            .map(|(truth, hist)| {
                let counts: serde_json::Map<String, serde_json::Value> = hist
                    .iter()
                    .map(|(p, c)| (p.to_string(), json!(c)))
                    .collect();
                json!({ "truth": truth.to_string(), "counts": counts })
            })
            .collect();
        let line = json!({
            "technique": s.technique.name(),
            "hits": s.hits,
            "queries": s.queries,
            "hit_rate": s.hit_rate,
            "p95_error_m": region_obj(&s.p95_error_m),
            "max_error_m": region_obj(&s.max_error_m),
            "histograms": histograms,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Writes the report atomically; identical reports give identical bytes.
pub fn export_report(report: &AnalysisReport, path: &Path, format: ReportFormat) -> Result<()> {
    write_atomic(path, render_report(report, format).as_bytes())
}

/// Reads the `hit_rate` rows of a CSV report, in file order.
pub fn read_hit_rates<R: Read>(input: R) -> Result<Vec<(Technique, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rates = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            Error::parse(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 4 {
            return Err(Error::parse(line, "expected technique,metric,region,value"));
        }
        if &row[1] != "hit_rate" || &row[2] != "all" {
            continue;
        }
        let t: Technique = row[0].parse()?;
        let v: f64 = row[3]
            .parse()
            .map_err(|_| Error::parse(line, format!("bad hit rate `{}`", &row[3])))?;
        rates.push((t, v));
    }
    if rates.is_empty() {
        return Err(Error::Format("report has no hit_rate rows".into()));
    }
    Ok(rates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid6() -> GridSpec {
        GridSpec::new(6, 6, 1.0).unwrap()
    }

    /// Batch with one technique's estimates filled for every technique.
    fn synthetic_batch(pairs: &[(GridPoint, GridPoint)]) -> BatchResult {
        let outcomes = pairs
            .iter()
            .map(|&(truth, est)| QueryOutcome {
                truth,
                estimates: Technique::ALL
                    .into_iter()
                    .map(|t| {
                        (
                            t,
                            PositionEstimate {
                                point: est,
                                distance: 0.0,
                                technique: t,
                            },
                        )
                    })
                    .collect(),
            })
            .collect();
        BatchResult {
            grid: grid6(),
            outcomes,
        }
    }

    fn fig4_batch() -> BatchResult {
        let truth = GridPoint::new(4, 6);
        let mut pairs = vec![(truth, truth); 87];
        pairs.extend([(truth, GridPoint::new(4, 4)); 2]);
        synthetic_batch(&pairs)
    }

    #[test]
    fn hit_rate_87_of_89() {
        let b = fig4_batch();
        let rate = hit_rate(&b, Technique::QuartilesAverage).unwrap();
        assert_eq!(round1(rate), 97.8);
        assert_eq!(format!("{rate:.0}"), "98");
    }

    #[test]
    fn histogram_of_fig4_scenario() {
        let b = fig4_batch();
        let h = position_histogram(&b, GridPoint::new(4, 6), Technique::Average);
        assert_eq!(
            h,
            BTreeMap::from([(GridPoint::new(4, 4), 2), (GridPoint::new(4, 6), 87)])
        );
    }

    #[test]
    fn all_hits_and_empty() {
        let p = GridPoint::new(2, 2);
        let b = synthetic_batch(&[(p, p)]);
        assert_eq!(hit_rate(&b, Technique::Mode).unwrap(), 100.0);
        assert_eq!(
            position_histogram(&b, p, Technique::Mode),
            BTreeMap::from([(p, 1)])
        );

        let empty = BatchResult {
            grid: grid6(),
            outcomes: vec![],
        };
        assert!(hit_rate(&empty, Technique::Mode).is_err());
        assert!(p95_error(&empty, Technique::Mode, Region::All).is_err());
    }

    #[test]
    fn error_meter_examples() {
        let g = grid6();
        assert_eq!(
            error_meters(GridPoint::new(4, 6), GridPoint::new(4, 6), &g),
            0.0
        );
        assert_eq!(
            error_meters(GridPoint::new(4, 6), GridPoint::new(4, 4), &g),
            2.0
        );
        assert_eq!(
            error_meters(GridPoint::new(2, 1), GridPoint::new(5, 1), &g),
            3.0
        );
        let half = GridSpec::new(6, 6, 0.5).unwrap();
        assert_eq!(
            error_meters(GridPoint::new(1, 1), GridPoint::new(4, 5), &half),
            2.5
        );
    }

    #[test]
    fn p95_interpolates_between_last_two_errors() {
        // 19 hits then one 2 m miss: rank 0.95 * 19 = 18.05 sits between a
        // 0 and the 2, so the value is 0 + 0.05 * 2
        let truth = GridPoint::new(3, 3);
        let mut pairs = vec![(truth, truth); 19];
        pairs.push((truth, GridPoint::new(3, 5)));
        let b = synthetic_batch(&pairs);
        let v = p95_error(&b, Technique::Average, Region::All).unwrap();
        assert!((v - 0.1).abs() < 1e-12, "{v}");
        assert_eq!(max_error(&b, Technique::Average, Region::All).unwrap(), 2.0);

        let all_hits = synthetic_batch(&vec![(truth, truth); 20]);
        assert_eq!(
            p95_error(&all_hits, Technique::Average, Region::All).unwrap(),
            0.0
        );
    }

    #[test]
    fn regions_split_inner_and_edge() {
        let inner = GridPoint::new(3, 3);
        let edge = GridPoint::new(1, 4);
        let b = synthetic_batch(&[(inner, GridPoint::new(3, 4)), (edge, GridPoint::new(4, 4))]);
        assert_eq!(p95_error(&b, Technique::Mode, Region::Inner).unwrap(), 1.0);
        assert_eq!(p95_error(&b, Technique::Mode, Region::Edge).unwrap(), 3.0);
        assert_eq!(errors_in(&b, Technique::Mode, Region::All), vec![1.0, 3.0]);

        let only_inner = synthetic_batch(&[(inner, inner)]);
        assert!(p95_error(&only_inner, Technique::Mode, Region::Edge).is_err());
    }

    #[test]
    fn csv_report_shape_and_rank_readback() {
        let report = build_report(&fig4_batch()).unwrap();
        let csv = render_report(&report, ReportFormat::Csv);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(REPORT_CSV_HEADER));
        assert!(csv.contains("quartiles-average,hit_rate,all,97.8\n"));
        assert!(csv.contains("average,estimate_count:4.4,point:4.6,2\n"));
        // (4,6) is an edge point on a 6x6 grid, so no inner rows appear
        assert!(!csv.contains(",inner,"));

        let rates = read_hit_rates(csv.as_bytes()).unwrap();
        assert_eq!(rates.len(), 8);
        assert!(rates.iter().all(|(_, v)| *v == 97.8));
    }

    #[test]
    fn jsonl_one_line_per_technique() {
        let report = build_report(&fig4_batch()).unwrap();
        let jsonl = render_report(&report, ReportFormat::Jsonl);
        assert_eq!(jsonl.lines().count(), 8);
        let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
        assert_eq!(first["technique"], "maximum");
        assert_eq!(first["hits"], 87);
        assert_eq!(first["histograms"][0]["counts"]["4.4"], 2);
    }

    #[test]
    fn ranking_orders_by_hit_rate() {
        let mut report = build_report(&fig4_batch()).unwrap();
        report.techniques[5].hit_rate = 99.0;
        let ranked: Vec<_> = report.ranked().iter().map(|s| s.technique).collect();
        assert_eq!(ranked[0], Technique::QuartilesAverage);
        assert_eq!(ranked[1], Technique::Maximum);
    }
}
