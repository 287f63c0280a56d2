//! Text formats for scans: query files, labeled-query files and survey CSV
//! output.
//!
//! Query files hold either one inline scan per line
//! (`ap_id:rssi[;ap_id:rssi...]`) or columnar rows (`seq,ap_id,rssi_dbm`)
//! where consecutive rows sharing a `seq` form one scan.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use crate::analysis::LabeledQuery;
use crate::error::{Error, Result};
use crate::locator::QueryVector;
use crate::radiomap::{ApId, GridPoint, SurveyRecord};

fn parse_rssi(s: &str, line: u64) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(line, format!("rssi `{}` is not a number", s.trim())))
}

fn insert_reading(
    readings: &mut BTreeMap<ApId, f64>,
    ap: &str,
    rssi: f64,
    line: u64,
) -> Result<()> {
    let ap = ApId::new(ap.trim()).map_err(|_| Error::parse(line, "empty ap_id"))?;
    if readings.insert(ap.clone(), rssi).is_some() {
        return Err(Error::parse(
            line,
            format!("AP {ap} appears twice in one scan"),
        ));
    }
    Ok(())
}

fn finish(readings: BTreeMap<ApId, f64>, line: u64) -> Result<QueryVector> {
    QueryVector::new(readings).map_err(|e| Error::parse(line, e.to_string()))
}

/// Parses one inline scan, `ap_id:rssi[;ap_id:rssi...]`.
pub fn parse_inline_query(text: &str, line: u64) -> Result<QueryVector> {
    let mut readings = BTreeMap::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (ap, rssi) = part
            .rsplit_once(':')
            .ok_or_else(|| Error::parse(line, format!("`{part}` is not ap_id:rssi")))?;
        insert_reading(&mut readings, ap, parse_rssi(rssi, line)?, line)?;
    }
    finish(readings, line)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Inline,
    Columnar,
}

/// Streams scans from a query file in input order. Each item carries the
/// line number where its scan starts.
pub struct QueryStream<R> {
    lines: std::io::Lines<R>,
    line_no: u64,
    layout: Option<Layout>,
    // columnar scan being assembled: (seq, start line, readings)
    pending: Option<(String, u64, BTreeMap<ApId, f64>)>,
    done: bool,
}

impl<R: BufRead> QueryStream<R> {
    pub fn new(reader: R) -> Self {
        QueryStream {
            lines: reader.lines(),
            line_no: 0,
            layout: None,
            pending: None,
            done: false,
        }
    }

    fn flush(&mut self) -> Option<Result<(u64, QueryVector)>> {
        self.pending
            .take()
            .map(|(_, start, readings)| finish(readings, start).map(|q| (start, q)))
    }

    fn step(&mut self) -> Option<Result<(u64, QueryVector)>> {
        loop {
            let line = match self.lines.next() {
                None => {
                    self.done = true;
                    return self.flush();
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(Error::parse(self.line_no + 1, e.to_string())));
                }
                Some(Ok(l)) => l,
            };
            self.line_no += 1;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let layout = *self.layout.get_or_insert(if text.contains(':') {
                Layout::Inline
            } else {
                Layout::Columnar
            });
            match layout {
                Layout::Inline => {
                    let line = self.line_no;
                    return Some(parse_inline_query(text, line).map(|q| (line, q)));
                }
                Layout::Columnar => {
                    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
                    if fields.first() == Some(&"seq") {
                        continue;
                    }
                    if fields.len() != 3 {
                        return Some(Err(Error::parse(
                            self.line_no,
                            format!("expected seq,ap_id,rssi_dbm, found {} fields", fields.len()),
                        )));
                    }
                    let rssi = match parse_rssi(fields[2], self.line_no) {
                        Ok(v) => v,
                        Err(e) => return Some(Err(e)),
                    };
                    let emitted = match &self.pending {
                        Some((seq, _, _)) if seq != fields[0] => self.flush(),
                        _ => None,
                    };
                    let line_no = self.line_no;
                    let (_, _, readings) = self
                        .pending
                        .get_or_insert_with(|| (fields[0].to_owned(), line_no, BTreeMap::new()));
                    if let Err(e) = insert_reading(readings, fields[1], rssi, line_no) {
                        return Some(Err(e));
                    }
                    if emitted.is_some() {
                        return emitted;
                    }
                }
            }
        }
    }
}

impl<R: BufRead> Iterator for QueryStream<R> {
    type Item = Result<(u64, QueryVector)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.step();
        if matches!(item, Some(Err(_))) {
            self.done = true;
        }
        item
    }
}

// (truth, seq) key, start line, readings
type PendingScan = ((GridPoint, String), u64, BTreeMap<ApId, f64>);

pub const LABELED_HEADER: &str = "truth_row,truth_col,seq,ap_id,rssi_dbm";

/// Reads `truth_row,truth_col,seq,ap_id,rssi_dbm` rows; consecutive rows with
/// the same (truth_row, truth_col, seq) form one labeled scan.
pub fn read_labeled_queries<R: BufRead>(reader: R) -> Result<Vec<LabeledQuery>> {
    let mut out = Vec::new();
    let mut pending: Option<PendingScan> = None;
    let flush = |pending: &mut Option<PendingScan>, out: &mut Vec<LabeledQuery>| -> Result<()> {
        if let Some(((truth, _), start, readings)) = pending.take() {
            out.push(LabeledQuery {
                truth,
                query: finish(readings, start)?,
            });
        }
        Ok(())
    };

    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with("truth_row") {
            continue;
        }
        let f: Vec<&str> = text.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::parse(
                line_no,
                format!("expected {LABELED_HEADER}, found {} fields", f.len()),
            ));
        }
        let coord = |s: &str, name: &str| {
            s.parse::<u32>()
                .map_err(|_| Error::parse(line_no, format!("{name} `{s}` is not a valid integer")))
        };
        let truth = GridPoint::new(coord(f[0], "truth_row")?, coord(f[1], "truth_col")?);
        let key = (truth, f[2].to_owned());
        let rssi = parse_rssi(f[4], line_no)?;
        if pending.as_ref().is_some_and(|(k, _, _)| *k != key) {
            flush(&mut pending, &mut out)?;
        }
        let (_, _, readings) = pending.get_or_insert_with(|| (key, line_no, BTreeMap::new()));
        insert_reading(readings, f[3], rssi, line_no)?;
    }
    flush(&mut pending, &mut out)?;
    if out.is_empty() {
        return Err(Error::NoEstimates("an empty labeled-query file".into()));
    }
    Ok(out)
}

/// Labeled-query CSV with a header; `seq` is the query's index in `queries`.
pub fn render_labeled_queries(queries: &[LabeledQuery]) -> String {
    let mut out = String::new();
    out.push_str(LABELED_HEADER);
    out.push('\n');
    for (seq, lq) in queries.iter().enumerate() {
        for (ap, v) in lq.query.readings() {
            let _ = writeln!(out, "{},{},{seq},{ap},{v}", lq.truth.row, lq.truth.col);
        }
    }
    out
}

/// Inline query lines, one scan per line.
pub fn render_inline_queries<'a>(queries: impl IntoIterator<Item = &'a QueryVector>) -> String {
    let mut out = String::new();
    for q in queries {
        let parts: Vec<String> = q
            .readings()
            .iter()
            .map(|(ap, v)| format!("{ap}:{v}"))
            .collect();
        out.push_str(&parts.join(";"));
        out.push('\n');
    }
    out
}

pub const SURVEY_HEADER: &str = "row,col,ap_id,rssi_dbm,lq";

pub fn render_survey_csv(records: &[SurveyRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 20);
    out.push_str(SURVEY_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.point.row, r.point.col, r.ap, r.sample.rssi_dbm, r.sample.lq
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(text: &str) -> Result<Vec<(u64, QueryVector)>> {
        QueryStream::new(text.as_bytes()).collect()
    }

    #[test]
    fn inline_lines() {
        let qs = collect("A:-50;B:-60\n\nC:-70.5\n").unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].0, 1);
        assert_eq!(
            qs[0].1,
            QueryVector::from_pairs([("A", -50.0), ("B", -60.0)]).unwrap()
        );
        assert_eq!(qs[1].0, 3);
        assert_eq!(qs[1].1.get(&ApId::new("C").unwrap()), Some(-70.5));
    }

    #[test]
    fn columnar_groups_by_seq() {
        let qs = collect("seq,ap_id,rssi_dbm\n0,A,-50\n0,B,-60\n1,A,-55\n").unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].1.readings().len(), 2);
        assert_eq!(qs[1].0, 4);
        assert_eq!(qs[1].1, QueryVector::from_pairs([("A", -55.0)]).unwrap());
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        let err = collect("A:-50\nB=-60\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = collect("A:-50;A:-51\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = collect("0,A,x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = collect("A:5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn stream_stops_after_error() {
        let mut s = QueryStream::new("A:-50\nbad\nB:-60\n".as_bytes());
        assert!(s.next().unwrap().is_ok());
        assert!(s.next().unwrap().is_err());
        assert!(s.next().is_none());
    }

    #[test]
    fn labeled_round_trip() {
        let qs = vec![
            LabeledQuery {
                truth: GridPoint::new(4, 6),
                query: QueryVector::from_pairs([("AP1", -52.0), ("AP2", -61.0)]).unwrap(),
            },
            LabeledQuery {
                truth: GridPoint::new(4, 6),
                query: QueryVector::from_pairs([("AP1", -53.0)]).unwrap(),
            },
        ];
        let text = render_labeled_queries(&qs);
        assert!(text.starts_with(LABELED_HEADER));
        assert!(text.contains("4,6,0,AP1,-52\n"));
        assert_eq!(read_labeled_queries(text.as_bytes()).unwrap(), qs);
        assert!(read_labeled_queries(LABELED_HEADER.as_bytes()).is_err());
        assert!(read_labeled_queries("1,x,0,A,-50\n".as_bytes()).is_err());
    }

    #[test]
    fn inline_render_parses_back() {
        let q = QueryVector::from_pairs([("A", -50.0), ("B", -60.25)]).unwrap();
        let text = render_inline_queries([&q]);
        assert_eq!(text, "A:-50;B:-60.25\n");
        assert_eq!(collect(&text).unwrap()[0].1, q);
    }
}
