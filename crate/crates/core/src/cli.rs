//! The `wifipos` command line: simulate, build, locate, analyze, report,
//! and a `pipeline` shortcut chaining the offline stages.
//!
//! Exit status is 0 on success, 1 on a runtime error (one diagnostic line
//! on stderr) and 2 on a usage error. Output files are written atomically.

use std::ffi::OsString;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    batch_locate, build_report, export_report, read_hit_rates, round1, ReportFormat,
};
use crate::error::Error;
use crate::fsutil::write_atomic;
use crate::locator::{locate, ApFilter};
use crate::queries::{
    read_labeled_queries, render_labeled_queries, render_survey_csv, QueryStream,
};
use crate::radiomap::{
    build_radio_map_with_floor, check_consistency, ingest_scans_path, ApId, GridSpec,
    DEFAULT_FLOOR_DBM,
};
use crate::stats::{precompute, Technique};
use crate::store::MapBundle;
use crate::synth::{generate_queries, generate_survey, SynthEnv};

#[derive(Debug, Parser)]
#[command(name = "wifipos", version, about = "Wi-Fi fingerprint positioning")]
#[command(allow_negative_numbers = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic survey (and optionally labeled queries).
    Simulate {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        samples_per_point: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write labeled queries for every grid point.
        #[arg(long)]
        queries_out: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        queries_per_point: usize,
    },
    /// Build the radio map and pre-computed statistics from a survey CSV.
    Build {
        #[arg(long)]
        scans: PathBuf,
        /// Grid dimensions as ROWSxCOLS, e.g. 6x6.
        #[arg(long, value_parser = parse_dims)]
        grid: (u32, u32),
        #[arg(long)]
        cell_m: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FLOOR_DBM, allow_negative_numbers = true)]
        floor_dbm: i32,
    },
    /// Locate each scan of a query file; prints `row,col,distance` per scan.
    Locate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, value_parser = parse_technique)]
        technique: Technique,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Run every technique over labeled queries and write a report.
    Analyze {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: ReportFormat,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Rank techniques in a CSV report by hit rate.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        top: usize,
    },
    /// simulate -> build -> analyze inside a work directory.
    Pipeline {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples_per_point: usize,
        #[arg(long, default_value_t = 20)]
        queries_per_point: usize,
        #[arg(long)]
        work_dir: PathBuf,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: ReportFormat,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct FilterArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub rssi_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub rssi_max: Option<f64>,
    /// Comma-separated AP ids to keep.
    #[arg(long, value_delimiter = ',')]
    pub include_aps: Option<Vec<String>>,
}

impl FilterArgs {
    fn to_filter(&self) -> Result<Option<ApFilter>, CliError> {
        if self.rssi_min.is_none() && self.rssi_max.is_none() && self.include_aps.is_none() {
            return Ok(None);
        }
        let include = self
            .include_aps
            .as_ref()
            .map(|ids| ids.iter().map(|s| ApId::new(s.trim())).collect())
            .transpose()
            .map_err(|e| CliError::Usage(format!("--include-aps: {e}")))?;
        ApFilter::new(include, self.rssi_min, self.rssi_max)
            .map(Some)
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn parse_dims(s: &str) -> Result<(u32, u32), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("`{s}` is not ROWSxCOLS"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<u32>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("`{s}` is not ROWSxCOLS with positive counts"))
    };
    Ok((parse(r)?, parse(c)?))
}

fn parse_technique(s: &str) -> Result<Technique, String> {
    s.parse().map_err(|e: Error| {
        let names: Vec<_> = Technique::ALL.iter().map(|t| t.name()).collect();
        format!("{e}; expected one of {}", names.join(", "))
    })
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn distinct(paths: &[(&str, &Path)]) -> Result<(), CliError> {
    for (i, (a, pa)) in paths.iter().enumerate() {
        for (b, pb) in &paths[i + 1..] {
            if pa == pb {
                return Err(CliError::Usage(format!(
                    "--{a} and --{b} name the same file"
                )));
            }
        }
    }
    Ok(())
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Runtime(Error::io("<stdout>", e))
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            env,
            samples_per_point,
            out,
            queries_out,
            queries_per_point,
        } => {
            let mut paths = vec![("env", env.as_path()), ("out", out.as_path())];
            if let Some(q) = &queries_out {
                paths.push(("queries-out", q.as_path()));
            }
            distinct(&paths)?;
            let (records, queries) = simulate(
                &env,
                samples_per_point,
                &out,
                queries_out.as_deref(),
                queries_per_point,
            )?;
            writeln!(
                stdout,
                "simulate: {records} survey records, {queries} labeled queries"
            )
            .map_err(stdout_err)?;
        }
        Command::Build {
            scans,
            grid,
            cell_m,
            out,
            floor_dbm,
        } => {
            distinct(&[("scans", &scans), ("out", &out)])?;
            let grid = GridSpec::new(grid.0, grid.1, cell_m)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let bundle = build(&scans, grid, floor_dbm, &out)?;
            writeln!(
                stdout,
                "build: {} samples, {} APs, {}x{} grid",
                bundle.map.sample_count_by_point(),
                bundle.table.aps().len(),
                grid.rows(),
                grid.cols()
            )
            .map_err(stdout_err)?;
        }
        Command::Locate {
            map,
            query,
            technique,
            filter,
        } => {
            distinct(&[("map", &map), ("query", &query)])?;
            let filter = filter.to_filter()?;
            let bundle = MapBundle::load(&map)?;
            let file = std::fs::File::open(&query).map_err(|e| Error::io(&query, e))?;
            for item in QueryStream::new(BufReader::new(file)) {
                let (line, q) = item?;
                let est = locate(&q, &bundle.table, technique, filter.as_ref())
                    .map_err(|e| Error::parse(line, e.to_string()))?;
                writeln!(
                    stdout,
                    "{},{},{}",
                    est.point.row, est.point.col, est.distance
                )
                .map_err(stdout_err)?;
                stdout.flush().map_err(stdout_err)?;
            }
        }
        Command::Analyze {
            map,
            labeled,
            out,
            format,
            filter,
        } => {
            distinct(&[("map", &map), ("labeled", &labeled), ("out", &out)])?;
            let filter = filter.to_filter()?;
            let n = analyze(&map, &labeled, &out, format, filter.as_ref())?;
            writeln!(stdout, "analyze: {n} labeled queries x 8 techniques").map_err(stdout_err)?;
        }
        Command::Report { input, top } => {
            let file = std::fs::File::open(&input).map_err(|e| Error::io(&input, e))?;
            let mut rates = read_hit_rates(BufReader::new(file))?;
            rates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            writeln!(stdout, "rank,technique,hit_pct,hit_rate").map_err(stdout_err)?;
            for (rank, (t, rate)) in rates.iter().take(top).enumerate() {
                writeln!(stdout, "{},{t},{:.0},{:.1}", rank + 1, rate, round1(*rate))
                    .map_err(stdout_err)?;
            }
        }
        Command::Pipeline {
            env,
            samples_per_point,
            queries_per_point,
            work_dir,
            format,
        } => {
            let report = run_pipeline_end_to_end(
                &env,
                samples_per_point,
                queries_per_point,
                &work_dir,
                format,
            )?;
            writeln!(stdout, "pipeline: report written to {}", report.display())
                .map_err(stdout_err)?;
        }
    }
    Ok(())
}

/// Writes a synthetic survey, and labeled queries at every grid point when
/// `queries_out` is given. Returns (survey records, labeled queries).
pub fn simulate(
    env_path: &Path,
    samples_per_point: usize,
    out: &Path,
    queries_out: Option<&Path>,
    queries_per_point: usize,
) -> Result<(usize, usize), Error> {
    let env = SynthEnv::load(env_path)?;
    let records = generate_survey(&env, samples_per_point)?;
    let queries = match queries_out {
        Some(_) => {
            let truths: Vec<_> = env.grid.points().collect();
            generate_queries(&env, &truths, queries_per_point)?
        }
        None => Vec::new(),
    };
    write_atomic(out, render_survey_csv(&records).as_bytes())?;
    if let Some(q) = queries_out {
        write_atomic(q, render_labeled_queries(&queries).as_bytes())?;
    }
    Ok((records.len(), queries.len()))
}

pub fn build(scans: &Path, grid: GridSpec, floor_dbm: i32, out: &Path) -> Result<MapBundle, Error> {
    let records = ingest_scans_path(scans)?;
    let map = build_radio_map_with_floor(&records, grid, floor_dbm)?;
    let report = check_consistency(&map);
    if !report.is_consistent() {
        return Err(Error::Format(format!(
            "radio map views disagree on {} (ap, point) pairs",
            report.mismatches.len()
        )));
    }
    let bundle = MapBundle {
        table: precompute(&map),
        map,
    };
    bundle.save(out)?;
    Ok(bundle)
}

/// Returns the number of labeled queries processed.
pub fn analyze(
    map: &Path,
    labeled: &Path,
    out: &Path,
    format: ReportFormat,
    filter: Option<&ApFilter>,
) -> Result<usize, Error> {
    let bundle = MapBundle::load(map)?;
    let file = std::fs::File::open(labeled).map_err(|e| Error::io(labeled, e))?;
    let queries = read_labeled_queries(BufReader::new(file))?;
    let result = batch_locate(&queries, &bundle.table, filter)?;
    let report = build_report(&result)?;
    export_report(&report, out, format)?;
    Ok(queries.len())
}

/// Runs simulate, build and analyze with intermediate files `survey.csv`,
/// `queries.csv` and `map.wfp` in `work_dir`; returns the report path.
pub fn run_pipeline_end_to_end(
    env_path: &Path,
    samples_per_point: usize,
    queries_per_point: usize,
    work_dir: &Path,
    format: ReportFormat,
) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
    let env = SynthEnv::load(env_path)?;
    let survey = work_dir.join("survey.csv");
    let queries = work_dir.join("queries.csv");
    let map = work_dir.join("map.wfp");
    let report = work_dir.join(match format {
        ReportFormat::Csv => "report.csv",
        ReportFormat::Jsonl => "report.jsonl",
    });
    simulate(
        env_path,
        samples_per_point,
        &survey,
        Some(&queries),
        queries_per_point,
    )?;
    build(&survey, env.grid, env.floor_dbm, &map)?;
    analyze(&map, &queries, &report, format, None)?;
    Ok(report)
}
