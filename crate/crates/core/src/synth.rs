//! Synthetic RF environment: log-distance path loss with Gaussian
//! shadowing, used to generate surveys and labeled queries.
//!
//! Every (point, AP) sample stream draws from its own ChaCha stream keyed
//! by the environment seed, so output depends only on the environment and
//! the requested counts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::LabeledQuery;
use crate::error::{Error, Result};
use crate::locator::QueryVector;
use crate::radiomap::{ApId, GridPoint, GridSpec, RawSample, SurveyRecord, DEFAULT_FLOOR_DBM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthAp {
    pub id: ApId,
    /// Position in meters; x runs along columns, y along rows.
    pub x: f64,
    pub y: f64,
    /// Received power at 1 m.
    pub p0_dbm: f64,
    /// Path-loss exponent.
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEnv {
    pub grid: GridSpec,
    pub aps: Vec<SynthAp>,
    pub sigma_db: f64,
    pub floor_dbm: i32,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    seed: u64,
    sigma_db: f64,
    #[serde(default = "default_floor")]
    floor_dbm: i32,
    grid: GridFile,
    aps: Vec<SynthAp>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    rows: u32,
    cols: u32,
    cell_m: f64,
}

fn default_floor() -> i32 {
    DEFAULT_FLOOR_DBM
}

const QUERY_DOMAIN: u64 = 1 << 63;

impl SynthEnv {
    pub fn new(
        grid: GridSpec,
        aps: Vec<SynthAp>,
        sigma_db: f64,
        floor_dbm: i32,
        seed: u64,
    ) -> Result<Self> {
        let env = SynthEnv {
            grid,
            aps,
            sigma_db,
            floor_dbm,
            seed,
        };
        env.validate()?;
        Ok(env)
    }

    /// Three APs at the area corners (0, 0), (width, 0) and (0, height),
    /// each with p0 = -40 dBm and n = 2.5.
    pub fn corner_aps(grid: GridSpec, sigma_db: f64, seed: u64) -> Self {
        let w = grid.cols() as f64 * grid.cell_size_m();
        let h = grid.rows() as f64 * grid.cell_size_m();
        let ap = |id: &str, x, y| SynthAp {
            id: ApId::new(id).expect("non-empty id"),
            x,
            y,
            p0_dbm: -40.0,
            n: 2.5,
        };
        SynthEnv {
            grid,
            aps: vec![ap("AP1", 0.0, 0.0), ap("AP2", w, 0.0), ap("AP3", 0.0, h)],
            sigma_db,
            floor_dbm: DEFAULT_FLOOR_DBM,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.aps.is_empty() {
            return Err(Error::InvalidEnv("no APs".into()));
        }
        if !(self.sigma_db.is_finite() && self.sigma_db >= 0.0) {
            return Err(Error::InvalidEnv(format!(
                "sigma_db {} must be >= 0",
                self.sigma_db
            )));
        }
        if self.floor_dbm > 0 {
            return Err(Error::InvalidEnv(format!(
                "floor_dbm {} above 0",
                self.floor_dbm
            )));
        }
        let mut seen = BTreeSet::new();
        for ap in &self.aps {
            if ap.id.as_str().is_empty() {
                return Err(Error::InvalidEnv("empty AP id".into()));
            }
            if !seen.insert(&ap.id) {
                return Err(Error::InvalidEnv(format!("duplicate AP {}", ap.id)));
            }
            if !(ap.n.is_finite() && ap.n > 0.0) {
                return Err(Error::InvalidEnv(format!("{}: n must be > 0", ap.id)));
            }
            if !(ap.p0_dbm <= 0.0 && ap.p0_dbm >= self.floor_dbm as f64) {
                return Err(Error::InvalidEnv(format!(
                    "{}: p0 {} must lie in [floor {}, 0]",
                    ap.id, ap.p0_dbm, self.floor_dbm
                )));
            }
            if !(ap.x.is_finite() && ap.y.is_finite()) {
                return Err(Error::InvalidEnv(format!("{}: non-finite position", ap.id)));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: EnvFile = toml::from_str(s).map_err(|e| Error::InvalidEnv(e.to_string()))?;
        let grid = GridSpec::new(file.grid.rows, file.grid.cols, file.grid.cell_m)?;
        SynthEnv::new(grid, file.aps, file.sigma_db, file.floor_dbm, file.seed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let file = EnvFile {
            seed: self.seed,
            sigma_db: self.sigma_db,
            floor_dbm: self.floor_dbm,
            grid: GridFile {
                rows: self.grid.rows(),
                cols: self.grid.cols(),
                cell_m: self.grid.cell_size_m(),
            },
            aps: self.aps.clone(),
        };
        toml::to_string(&file).expect("env serializes")
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn draw(&self, rng: &mut ChaCha8Rng, expected: f64) -> i32 {
        let noisy = if self.sigma_db > 0.0 {
            let normal = Normal::new(0.0, self.sigma_db).expect("sigma validated");
            expected + normal.sample(rng)
        } else {
            expected
        };
        (noisy.round() as i32).clamp(self.floor_dbm, 0)
    }

    /// Link quality as a linear map of [floor, 0] dBm onto [0, 100].
    fn link_quality(&self, rssi: i32) -> u8 {
        if self.floor_dbm == 0 {
            return 100;
        }
        let frac = (rssi - self.floor_dbm) as f64 / (-self.floor_dbm) as f64;
        (100.0 * frac).round().clamp(0.0, 100.0) as u8
    }
}

/// Noise-free RSSI of `ap` at the center of `p`, clipped at the floor.
pub fn expected_rssi(env: &SynthEnv, ap: &SynthAp, p: GridPoint) -> f64 {
    let (x, y) = env.grid.center_m(p);
    let d = (x - ap.x).hypot(y - ap.y).max(1.0);
    (ap.p0_dbm - 10.0 * ap.n * d.log10()).max(env.floor_dbm as f64)
}

/// Noise-free fingerprint of `p`, rounded like generated samples.
pub fn noiseless_fingerprint(env: &SynthEnv, p: GridPoint) -> BTreeMap<ApId, i32> {
    env.aps
        .iter()
        .map(|ap| {
            let v = (expected_rssi(env, ap, p).round() as i32).clamp(env.floor_dbm, 0);
            (ap.id.clone(), v)
        })
        .collect()
}

/// `samples_per_point` scans at every grid point, each hearing every AP.
/// Records come scan by scan in row-major point order.
pub fn generate_survey(env: &SynthEnv, samples_per_point: usize) -> Result<Vec<SurveyRecord>> {
    env.validate()?;
    if samples_per_point == 0 {
        return Err(Error::InvalidEnv("samples_per_point must be >= 1".into()));
    }
    let mut records = Vec::with_capacity(env.grid.len() * env.aps.len() * samples_per_point);
    for (pi, p) in env.grid.points().enumerate() {
        let expected: Vec<f64> = env.aps.iter().map(|ap| expected_rssi(env, ap, p)).collect();
        let mut rngs: Vec<ChaCha8Rng> = (0..env.aps.len())
            .map(|ai| env.rng(((pi as u64) << 20) | ai as u64))
            .collect();
        for k in 0..samples_per_point {
            for (ai, ap) in env.aps.iter().enumerate() {
                let rssi = env.draw(&mut rngs[ai], expected[ai]);
                records.push(SurveyRecord {
                    point: p,
                    ap: ap.id.clone(),
                    sample: RawSample::new(rssi, env.link_quality(rssi)),
                    seq: k as u64,
                });
            }
        }
    }
    Ok(records)
}

/// `per_point` independent scans at each listed truth point. Each list
/// position draws from its own streams, so repeated points get fresh noise.
pub fn generate_queries(
    env: &SynthEnv,
    truth_points: &[GridPoint],
    per_point: usize,
) -> Result<Vec<LabeledQuery>> {
    env.validate()?;
    if per_point == 0 {
        return Err(Error::InvalidEnv("queries per point must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(truth_points.len() * per_point);
    for (ti, &truth) in truth_points.iter().enumerate() {
        if !env.grid.contains(truth) {
            return Err(Error::InvalidEnv(format!(
                "truth point {truth} outside grid"
            )));
        }
        let expected: Vec<f64> = env
            .aps
            .iter()
            .map(|ap| expected_rssi(env, ap, truth))
            .collect();
        let mut rngs: Vec<ChaCha8Rng> = (0..env.aps.len())
            .map(|ai| env.rng(QUERY_DOMAIN | ((ti as u64) << 20) | ai as u64))
            .collect();
        for _ in 0..per_point {
            let readings = env
                .aps
                .iter()
                .enumerate()
                .map(|(ai, ap)| (ap.id.clone(), env.draw(&mut rngs[ai], expected[ai]) as f64))
                .collect();
            out.push(LabeledQuery {
                truth,
                query: QueryVector::new(readings)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(sigma: f64) -> SynthEnv {
        SynthEnv::corner_aps(GridSpec::new(6, 6, 1.0).unwrap(), sigma, 7)
    }

    fn single_ap_env(p0: f64, n: f64, x: f64, y: f64) -> SynthEnv {
        let ap = SynthAp {
            id: ApId::new("A").unwrap(),
            x,
            y,
            p0_dbm: p0,
            n,
        };
        SynthEnv::new(GridSpec::new(30, 30, 1.0).unwrap(), vec![ap], 0.0, -100, 1).unwrap()
    }

    #[test]
    fn expected_rssi_examples() {
        let e = single_ap_env(-40.0, 2.0, 0.5, 0.5);
        // AP at the cell center of (1, 1)
        assert_eq!(expected_rssi(&e, &e.aps[0], GridPoint::new(1, 1)), -40.0);
        // d = 10 m along the row
        let v = expected_rssi(&e, &e.aps[0], GridPoint::new(1, 11));
        assert!((v - -60.0).abs() < 1e-12, "{v}");

        let steep = single_ap_env(-40.0, 4.0, 0.5, 0.5);
        assert_eq!(
            expected_rssi(&steep, &steep.aps[0], GridPoint::new(30, 30)),
            -100.0
        );
    }

    #[test]
    fn survey_scale_and_zero_noise() {
        let e = env(0.0);
        let recs = generate_survey(&e, 100).unwrap();
        assert_eq!(recs.len(), 10_800);
        for r in &recs {
            assert_eq!(r.sample.rssi_dbm, noiseless_fingerprint(&e, r.point)[&r.ap]);
        }
        assert!(generate_survey(&e, 0).is_err());
    }

    #[test]
    fn seed_determinism() {
        let e = env(3.0);
        assert_eq!(
            generate_survey(&e, 20).unwrap(),
            generate_survey(&e, 20).unwrap()
        );
        let mut other = e.clone();
        other.seed = 8;
        assert_ne!(
            generate_survey(&e, 20).unwrap(),
            generate_survey(&other, 20).unwrap()
        );
    }

    #[test]
    fn lq_is_monotone_in_rssi() {
        let e = env(4.0);
        let recs = generate_survey(&e, 30).unwrap();
        let mut pairs: Vec<_> = recs
            .iter()
            .map(|r| (r.sample.rssi_dbm, r.sample.lq))
            .collect();
        pairs.sort();
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(e.link_quality(-100), 0);
        assert_eq!(e.link_quality(0), 100);
        assert_eq!(e.link_quality(-50), 50);
    }

    #[test]
    fn query_batches() {
        let e = env(0.0);
        let truths: Vec<GridPoint> = (1..=5).map(|c| GridPoint::new(4, c)).collect();
        let qs = generate_queries(&e, &truths, 89).unwrap();
        assert_eq!(qs.len(), 445);
        for q in &qs {
            let fp = noiseless_fingerprint(&e, q.truth);
            for (ap, v) in q.query.readings() {
                assert_eq!(*v, fp[ap] as f64);
            }
        }
        assert!(generate_queries(&e, &[GridPoint::new(7, 1)], 1).is_err());
    }

    #[test]
    fn query_streams_differ_per_point() {
        let e = env(3.0);
        let qs = generate_queries(&e, &[GridPoint::new(3, 3), GridPoint::new(3, 3)], 50).unwrap();
        let (a, b) = qs.split_at(50);
        let residuals = |half: &[LabeledQuery]| -> Vec<f64> {
            half.iter()
                .flat_map(|q| q.query.readings().values().copied().collect::<Vec<_>>())
                .collect()
        };
        assert_ne!(residuals(a), residuals(b));
    }

    #[test]
    fn env_validation_and_toml_round_trip() {
        let e = env(3.0);
        let text = e.to_toml_string();
        assert_eq!(SynthEnv::from_toml_str(&text).unwrap(), e);

        let mut bad = e.clone();
        bad.aps[0].n = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = e.clone();
        bad.sigma_db = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = e.clone();
        bad.aps[1].p0_dbm = -120.0;
        assert!(bad.validate().is_err());
        let mut bad = e;
        bad.aps[2].id = bad.aps[0].id.clone();
        assert!(bad.validate().is_err());
    }
}
