//! Output-SINR metrics and the Monte-Carlo harness.
//!
//! Each run draws the mismatch, generates `K` signal-inclusive snapshots, forms
//! `R̂`, builds every requested beamformer and scores it against the run's
//! actual steering vector and the true interference-plus-noise covariance.
//! Runs are independent and are evaluated in parallel; results are reduced in
//! run-index order so the output does not depend on scheduling.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{self, Method, MethodParams};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, HermitianEigen};
use crate::sector::{Feasibility, SectorModel};
use crate::sim::{
    self, draw_actual_steering, generate_snapshots, sample_covariance, stream, Scenario,
};

/// SINR values are floored here instead of returning `-inf`.
pub const SINR_FLOOR_DB: f64 = -200.0;
/// A per-run SINR may exceed the optimum by at most this much (rounding).
pub const OPTIMAL_SLACK_DB: f64 = 1e-6;
/// Fraction of failed runs above which a method's curve is marked invalid.
pub const MAX_FAILURE_RATE: f64 = 0.05;

fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(SINR_FLOOR_DB)
    } else {
        SINR_FLOOR_DB
    }
}

/// `σ_s² |w^H a|² / (w^H R_{i+n} w)` in dB.
pub fn output_sinr(w: &CVector, actual: &CVector, sigma_s2: f64, r_in: &CMatrix) -> Result<f64> {
    if w.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::Domain("output SINR of a zero weight vector".into()));
    }
    let num = sigma_s2 * w.dotc(actual).norm_sqr();
    let den = w.dotc(&(r_in * w)).re;
    if !(den > 0.0) {
        return Err(Error::Domain(format!("non-positive output noise power {den:e}")));
    }
    Ok(to_db(num / den))
}

/// `σ_s² a^H R_{i+n}⁻¹ a` in dB.
pub fn optimal_sinr(actual: &CVector, sigma_s2: f64, r_in: &CMatrix) -> Result<f64> {
    let eig = HermitianEigen::new(r_in);
    if !(eig.min() > 0.0) {
        return Err(Error::Domain("interference-plus-noise covariance is not PD".into()));
    }
    let inv = eig.map(|l| 1.0 / l);
    Ok(to_db(sigma_s2 * actual.dotc(&(inv * actual)).re))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Snapshots,
    SnrDb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl Sweep {
    /// `K ∈ {10, 20, …, 100}`.
    pub fn reference_snapshots() -> Self {
        Self {
            variable: SweepVariable::Snapshots,
            values: (1..=10).map(|i| 10.0 * i as f64).collect(),
        }
    }

    /// SNR from −10 to 30 dB in 5 dB steps.
    pub fn reference_snr() -> Self {
        Self {
            variable: SweepVariable::SnrDb,
            values: (0..=8).map(|i| -10.0 + 5.0 * i as f64).collect(),
        }
    }

    fn scenario_at(&self, base: &Scenario, x: f64) -> Result<Scenario> {
        let mut s = base.clone();
        match self.variable {
            SweepVariable::Snapshots => {
                if !(x >= 1.0 && x.fract() == 0.0) {
                    return Err(Error::Domain(format!("snapshot count {x} is not a positive integer")));
                }
                s.num_snapshots = x as usize;
            }
            SweepVariable::SnrDb => s.snr_db = x,
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Db,
    Linear,
}

#[derive(Debug, Clone)]
pub struct HarnessOptions {
    pub runs: usize,
    pub methods: Vec<Method>,
    pub params: MethodParams,
    pub quadrature_step: f64,
    pub num_dominant: usize,
    pub averaging: Averaging,
    pub diagonal_loading: Option<f64>,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl HarnessOptions {
    pub fn reference(m: usize, runs: usize) -> Self {
        Self {
            runs,
            methods: vec![
                Method::Proposed,
                Method::MvSmi,
                Method::WorstCase,
                Method::Eigenspace,
                Method::SubspaceClosedForm,
            ],
            params: MethodParams::reference(m),
            quadrature_step: crate::sector::DEFAULT_STEP_DEG,
            num_dominant: crate::sector::DEFAULT_NUM_DOMINANT,
            averaging: Averaging::Db,
            diagonal_loading: None,
            threads: None,
        }
    }
}

/// A plotted series: one beamformer or the optimal-SINR bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Series {
    Method(Method),
    Optimal,
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Series::Method(m) => m.fmt(f),
            Series::Optimal => f.write_str("optimal"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesStats {
    pub series: Series,
    pub mean_sinr_db: f64,
    pub stderr_db: f64,
    pub failures: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub stats: Vec<SeriesStats>,
}

impl CurvePoint {
    pub fn get(&self, series: Series) -> Option<&SeriesStats> {
        self.stats.iter().find(|s| s.series == series)
    }

    pub fn mean(&self, method: Method) -> f64 {
        self.get(Series::Method(method))
            .map(|s| s.mean_sinr_db)
            .unwrap_or(f64::NAN)
    }

    pub fn optimal(&self) -> f64 {
        self.get(Series::Optimal)
            .map(|s| s.mean_sinr_db)
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SinrCurve {
    pub sweep_variable: SweepVariable,
    pub points: Vec<CurvePoint>,
    pub runs: usize,
    pub digest: String,
}

impl SinrCurve {
    /// Every method stayed under the failure threshold at every point.
    pub fn is_valid(&self) -> bool {
        self.points.iter().all(|p| p.stats.iter().all(|s| s.valid))
    }

    pub fn point(&self, x: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.x == x)
    }
}

/// Per-run outcome.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub optimal_db: f64,
    pub sinr_db: Vec<std::result::Result<f64, String>>,
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregate dB samples in the requested domain; returns `(mean dB, stderr dB)`.
pub fn aggregate(samples_db: &[f64], averaging: Averaging) -> (f64, f64) {
    match averaging {
        Averaging::Db => mean_stderr(samples_db),
        Averaging::Linear => {
            let lin: Vec<f64> = samples_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
            let (m, se) = mean_stderr(&lin);
            (to_db(m), 10.0 / std::f64::consts::LN_10 * se / m)
        }
    }
}

fn digest(base: &Scenario, sweep: &Sweep, opts: &HarnessOptions) -> String {
    let text = format!("{base:?}|{sweep:?}|{:?}|{:?}|{}|{}|{:?}|{:?}",
        opts.methods, opts.params, opts.quadrature_step, opts.num_dominant, opts.averaging, opts.diagonal_loading);
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn build_sector_model(base: &Scenario, opts: &HarnessOptions) -> Result<SectorModel> {
    let model = SectorModel::build(
        &base.geometry,
        base.sector()?,
        opts.quadrature_step,
        opts.num_dominant,
    )?;
    match model.feasibility() {
        Feasibility::StrictlyFeasible => Ok(model),
        Feasibility::Boundary => Err(Error::BoundaryFeasible {
            lambda_min: model.c_tilde_min_eig,
        }),
        Feasibility::Infeasible => Err(Error::Infeasible {
            ratio: model.delta0 / model.num_elements() as f64,
            lambda_min: model.c_tilde_min_eig,
        }),
    }
}

/// One Monte-Carlo run at a fixed scenario.
pub fn run_once(
    scenario: &Scenario,
    sector: &SectorModel,
    r_in: &CMatrix,
    opts: &HarnessOptions,
    run: usize,
) -> Result<RunRecord> {
    let actual = draw_actual_steering(scenario, &mut scenario.rng(run as u64, stream::MISMATCH))?;
    let x = generate_snapshots(
        scenario,
        &actual,
        &mut scenario.rng(run as u64, stream::SNAPSHOTS),
    )?;
    let mut r_hat = sample_covariance(&x)?;
    if let Some(delta) = opts.diagonal_loading {
        r_hat = r_hat.with_diagonal_loading(delta)?;
    }
    let sigma_s2 = scenario.signal_power();
    let optimal_db = optimal_sinr(&actual, sigma_s2, r_in)?;
    let presumed = scenario.presumed()?.into_inner();
    let mut sinr_db = Vec::with_capacity(opts.methods.len());
    for &method in &opts.methods {
        let res = beamform::build(method, &r_hat, &presumed, sector, &opts.params)
            .and_then(|bw| output_sinr(&bw.w, &actual, sigma_s2, r_in));
        if let Ok(v) = res {
            if v > optimal_db + OPTIMAL_SLACK_DB {
                return Err(Error::Harness(format!(
                    "{method} SINR {v} dB exceeds optimum {optimal_db} dB in run {run}"
                )));
            }
        }
        sinr_db.push(res.map_err(|e| e.to_string()));
    }
    Ok(RunRecord {
        run,
        optimal_db,
        sinr_db,
    })
}

/// All run records at one sweep point, in run order.
pub fn run_point(
    scenario: &Scenario,
    sector: &SectorModel,
    opts: &HarnessOptions,
) -> Result<Vec<RunRecord>> {
    scenario.validate()?;
    let r_in = sim::true_interference_plus_noise_covariance(scenario)?;
    let records: Vec<Result<RunRecord>> = (0..opts.runs)
        .into_par_iter()
        .map(|run| run_once(scenario, sector, &r_in, opts, run))
        .collect();
    records.into_iter().collect()
}

fn reduce_point(x: f64, records: &[RunRecord], opts: &HarnessOptions) -> CurvePoint {
    let runs = records.len();
    let mut stats = Vec::with_capacity(opts.methods.len() + 1);
    for (i, &method) in opts.methods.iter().enumerate() {
        let ok: Vec<f64> = records
            .iter()
            .filter_map(|r| r.sinr_db[i].as_ref().ok().copied())
            .collect();
        let failures = runs - ok.len();
        let (mean, se) = aggregate(&ok, opts.averaging);
        stats.push(SeriesStats {
            series: Series::Method(method),
            mean_sinr_db: mean,
            stderr_db: se,
            failures,
            valid: (failures as f64) <= MAX_FAILURE_RATE * runs as f64,
        });
    }
    let opt: Vec<f64> = records.iter().map(|r| r.optimal_db).collect();
    let (mean, se) = aggregate(&opt, opts.averaging);
    stats.push(SeriesStats {
        series: Series::Optimal,
        mean_sinr_db: mean,
        stderr_db: se,
        failures: 0,
        valid: true,
    });
    CurvePoint { x, stats }
}

/// Mean output SINR of each method across the sweep.
pub fn run_monte_carlo(base: &Scenario, sweep: &Sweep, opts: &HarnessOptions) -> Result<SinrCurve> {
    if opts.runs == 0 {
        return Err(Error::Domain("runs must be >= 1".into()));
    }
    if sweep.values.is_empty() {
        return Err(Error::Domain("sweep has no points".into()));
    }
    base.validate()?;
    let sector = build_sector_model(base, opts)?;
    let mut xs = sweep.values.clone();
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let body = || -> Result<Vec<CurvePoint>> {
        xs.iter()
            .map(|&x| {
                let scenario = sweep.scenario_at(base, x)?;
                let records = run_point(&scenario, &sector, opts)?;
                Ok(reduce_point(x, &records, opts))
            })
            .collect()
    };
    let points = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Harness(format!("thread pool: {e}")))?
            .install(body)?,
        None => body()?,
    };
    Ok(SinrCurve {
        sweep_variable: sweep.variable,
        points,
        runs: opts.runs,
        digest: digest(base, sweep, opts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{steering, ArrayGeometry};
    use crate::linalg::{hermitianize, C64};
    use crate::sim::MismatchModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matched_filter_in_white_noise() {
        let g = ArrayGeometry::half_wavelength(10).unwrap();
        let a = steering(&g, 3.0).unwrap().into_inner();
        let id = CMatrix::identity(10, 10);
        let w = a.unscale(a.norm());
        let v = output_sinr(&w, &a, 1.0, &id).unwrap();
        assert!((v - 10.0).abs() < 1e-12);
        assert!((optimal_sinr(&a, 100.0, &id).unwrap() - 30.0).abs() < 1e-12);
        assert!(output_sinr(&CVector::zeros(10), &a, 1.0, &id).is_err());
    }

    #[test]
    fn orthogonal_weights_are_floored() {
        let one = C64::new(1.0, 0.0);
        let a = CVector::from_vec(vec![one, one]);
        let w = CVector::from_vec(vec![one, -one]);
        let v = output_sinr(&w, &a, 1.0, &CMatrix::identity(2, 2)).unwrap();
        assert_eq!(v, SINR_FLOOR_DB);
    }

    #[test]
    fn optimum_dominates_random_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = 6;
        let rc = |rng: &mut ChaCha8Rng| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let g = CMatrix::from_fn(m, m, |_, _| rc(&mut rng));
        let r_in = hermitianize(&(&g * g.adjoint() + CMatrix::identity(m, m)));
        let a = CVector::from_fn(m, |_, _| rc(&mut rng));
        let opt = optimal_sinr(&a, 2.0, &r_in).unwrap();
        let inv = HermitianEigen::new(&r_in).map(|l| 1.0 / l);
        let w_opt = (inv * &a).scale(3.7);
        assert!((output_sinr(&w_opt, &a, 2.0, &r_in).unwrap() - opt).abs() < 1e-10);
        for _ in 0..1000 {
            let w = CVector::from_fn(m, |_, _| rc(&mut rng));
            assert!(output_sinr(&w, &a, 2.0, &r_in).unwrap() <= opt + 1e-12);
        }
    }

    #[test]
    fn sinr_scale_invariant() {
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let a = steering(&g, 10.0).unwrap().into_inner();
        let w = steering(&g, 12.0).unwrap().into_inner();
        let r = CMatrix::identity(4, 4);
        let s1 = output_sinr(&w, &a, 1.0, &r).unwrap();
        let s2 = output_sinr(&w.map(|z| z * C64::new(-3.0, 2.0)), &a, 1.0, &r).unwrap();
        assert!((s1 - s2).abs() < 1e-10);
    }

    #[test]
    fn adding_interference_never_helps() {
        let mut s = Scenario::reference(MismatchModel::Exact);
        let a = s.presumed().unwrap().into_inner();
        let with = optimal_sinr(&a, 100.0, &sim::true_interference_plus_noise_covariance(&s).unwrap()).unwrap();
        s.interferers.pop();
        let fewer = optimal_sinr(&a, 100.0, &sim::true_interference_plus_noise_covariance(&s).unwrap()).unwrap();
        s.interferers.clear();
        let none = optimal_sinr(&a, 100.0, &sim::true_interference_plus_noise_covariance(&s).unwrap()).unwrap();
        assert!(with <= fewer && fewer <= none);
    }

    #[test]
    fn aggregation_of_constant_series() {
        let xs = vec![7.5; 64];
        assert_eq!(mean_stderr(&xs), (7.5, 0.0));
        let (m, se) = aggregate(&xs, Averaging::Linear);
        assert!((m - 7.5).abs() < 1e-12 && se.abs() < 1e-12);
        // Alternating ±1 around a constant: stderr = sd/√n.
        for n in [16usize, 64, 256] {
            let xs: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let (_, se) = mean_stderr(&xs);
            let sd = (n as f64 / (n - 1) as f64).sqrt();
            assert!((se - sd / (n as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_run_is_reproducible() {
        let base = Scenario::reference(MismatchModel::PhaseDistortion { variance: 0.04 });
        let sweep = Sweep {
            variable: SweepVariable::Snapshots,
            values: vec![20.0, 10.0],
        };
        let opts = HarnessOptions::reference(10, 1);
        let a = run_monte_carlo(&base, &sweep, &opts).unwrap();
        let b = run_monte_carlo(&base, &sweep, &HarnessOptions { threads: Some(2), ..opts }).unwrap();
        assert_eq!(a.points[0].x, 10.0);
        for (p, q) in a.points.iter().zip(&b.points) {
            for (s, t) in p.stats.iter().zip(&q.stats) {
                assert_eq!(s.mean_sinr_db.to_bits(), t.mean_sinr_db.to_bits());
            }
        }
        assert_eq!(a.digest, b.digest.clone());
    }

    #[test]
    fn rejects_empty_inputs() {
        let base = Scenario::reference(MismatchModel::Exact);
        let opts = HarnessOptions::reference(10, 0);
        assert!(run_monte_carlo(&base, &Sweep::reference_snapshots(), &opts).is_err());
        let opts = HarnessOptions::reference(10, 1);
        let empty = Sweep { variable: SweepVariable::SnrDb, values: vec![] };
        assert!(run_monte_carlo(&base, &empty, &opts).is_err());
    }
}
