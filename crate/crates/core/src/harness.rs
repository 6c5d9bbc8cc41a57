//! Experiment harness: the benchmark schemes, parameter sweeps along the
//! figure axes, CSV emission, and the runtime verification suites.
//!
//! Schemes:
//! - `alg3`: the full alternating transmit/compression optimization
//! - `bench1`: uniform (scaled-identity) quantization noise sized so the
//!   rate meets the cap exactly at uniform transmit power, then transmit
//!   optimization only
//! - `bench2`: fixed uniform transmit covariance, compression optimized
//! - `bench3`: infinite fronthaul (no compression noise), transmit
//!   optimized; a lower bound for every other scheme
//! - `ebc`: estimate-then-beamform-then-compress with Lr = 2K
//!   eigen-beamformers
//! - `bench4`/`bench5`: EBC with Lr = 2K - 1 / 2K + 1 beamformers
//! - `bench6`: EBC with the 2K DFT columns nearest the estimated angles
//! - `bench7`: EBC machinery at C = I (no dimension reduction)

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{self, SolverConfig};
use crate::ebc::{self, AoaConfig, EbcPlan};
use crate::fim::{self};
use crate::fronthaul;
use crate::linalg::{random_hermitian_psd, rel_frob_c, rel_frob_r, CMat, RMat};
use crate::optimizer::{self, DesignPoint, OptimConfig};
use crate::oracle;
use crate::scenario::{GaussianPrior, SampleSet, Scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Alg3,
    Bench1,
    Bench2,
    Bench3,
    Ebc,
    Bench4,
    Bench5,
    Bench6,
    Bench7,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Scheme::Alg3 => "alg3",
            Scheme::Bench1 => "bench1",
            Scheme::Bench2 => "bench2",
            Scheme::Bench3 => "bench3",
            Scheme::Ebc => "ebc",
            Scheme::Bench4 => "bench4",
            Scheme::Bench5 => "bench5",
            Scheme::Bench6 => "bench6",
            Scheme::Bench7 => "bench7",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "alg3" => Scheme::Alg3,
            "bench1" => Scheme::Bench1,
            "bench2" => Scheme::Bench2,
            "bench3" => Scheme::Bench3,
            "ebc" => Scheme::Ebc,
            "bench4" => Scheme::Bench4,
            "bench5" => Scheme::Bench5,
            "bench6" => Scheme::Bench6,
            "bench7" => Scheme::Bench7,
            other => return Err(crate::Error::Config(format!("unknown scheme '{other}'"))),
        })
    }
}

/// Everything a scheme run needs besides the scenario itself.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub optim: OptimConfig,
    pub aoa: AoaConfig,
    /// Optional warm start for `alg3` (used by sweeps along axes where
    /// the previous optimum stays feasible).
    pub warm_start: Option<DesignPoint>,
}

/// One row of a sweep output.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub axis: String,
    pub value: f64,
    pub scheme: Scheme,
    pub pcrb: f64,
    /// PCRB / K, the per-target average.
    pub apcrb: f64,
    pub outer_iters: usize,
    pub wall_ms: f64,
    pub status: String,
    /// The final design, for warm starts and inspection.
    pub point: Option<DesignPoint>,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.12e},{:.12e},{},{:.1},{}",
            self.axis,
            self.value,
            self.scheme,
            self.pcrb,
            self.apcrb,
            self.outer_iters,
            self.wall_ms,
            self.status
        )
    }
}

pub const CSV_HEADER: &str = "axis,value,scheme,pcrb,apcrb,outer_iters,wall_ms,status";

/// Run one scheme on one scenario; failures are returned as `Err` and
/// recorded (not fatal) by [`sweep`].
pub fn run_scheme(
    scheme: Scheme,
    scenario: &Scenario,
    samples: &SampleSet,
    cfg: &RunConfig,
) -> crate::Result<ResultRow> {
    let started = Instant::now();
    let k = scenario.num_targets();
    let (pcrb, outer_iters, status, point) = match scheme {
        Scheme::Alg3 => {
            let rep = match &cfg.warm_start {
                Some(p) => {
                    optimizer::alternate_from(scenario, samples, &cfg.optim, p.clone())?
                }
                None => optimizer::alternate(scenario, samples, &cfg.optim)?,
            };
            (rep.point.objective, rep.outer_iters, summarize(&rep.flags), Some(rep.point))
        }
        Scheme::Bench1 => {
            // uniform quantization sized to meet the cap exactly at
            // uniform transmit power, then transmit optimization only
            let r0: Vec<CMat> = (0..scenario.num_bs())
                .map(|u| {
                    fim::scaled_identity(scenario.mt, scenario.power_w[u] / scenario.mt as f64)
                })
                .collect();
            let q = optimizer::uniform_compression_for_rate(scenario, samples, &r0, 1.0)?;
            let res = optimizer::sca_transmit(scenario, samples, &q, &r0, true, &cfg.optim)?;
            (res.point.objective, res.inner_iters, summarize(&res.flags), Some(res.point))
        }
        Scheme::Bench2 => {
            let r0: Vec<CMat> = (0..scenario.num_bs())
                .map(|u| {
                    fim::scaled_identity(scenario.mt, scenario.power_w[u] / scenario.mt as f64)
                })
                .collect();
            let q0 = optimizer::uniform_compression_for_rate(
                scenario,
                samples,
                &r0,
                cfg.optim.init_rate_fraction,
            )?;
            let res = optimizer::sca_compress(scenario, samples, &r0, &q0, &cfg.optim)?;
            (res.point.objective, res.inner_iters, summarize(&res.flags), Some(res.point))
        }
        Scheme::Bench3 => {
            let r0: Vec<CMat> = (0..scenario.num_bs())
                .map(|u| {
                    fim::scaled_identity(scenario.mt, scenario.power_w[u] / scenario.mt as f64)
                })
                .collect();
            let q0 = fim::zero_q(scenario);
            let res = optimizer::sca_transmit(scenario, samples, &q0, &r0, false, &cfg.optim)?;
            (res.point.objective, res.inner_iters, summarize(&res.flags), Some(res.point))
        }
        Scheme::Ebc => {
            let plan = EbcPlan::estimate(scenario, &cfg.aoa)?;
            let rep = ebc::optimize_ebc(scenario, samples, &plan, &cfg.optim)?;
            (rep.point.objective, rep.outer_iters, summarize(&rep.flags), Some(rep.point))
        }
        Scheme::Bench4 | Scheme::Bench5 => {
            let lr = if scheme == Scheme::Bench4 { 2 * k - 1 } else { 2 * k + 1 };
            let mut theta = Vec::new();
            for n in 0..scenario.num_bs() {
                theta.push(ebc::estimate_aoa(scenario, n, &cfg.aoa)?);
            }
            let plan = EbcPlan::from_angles_with_lr(scenario, &theta, lr)?;
            let rep = ebc::optimize_ebc(scenario, samples, &plan, &cfg.optim)?;
            (rep.point.objective, rep.outer_iters, summarize(&rep.flags), Some(rep.point))
        }
        Scheme::Bench6 => {
            let mut c = Vec::new();
            for n in 0..scenario.num_bs() {
                let theta = ebc::estimate_aoa(scenario, n, &cfg.aoa)?;
                c.push(dft_beamformers(scenario.mr, &theta, 2 * k));
            }
            let plan = EbcPlan {
                theta_hat: vec![Vec::new(); scenario.num_bs()],
                c,
                lr: 2 * k,
            };
            let rep = ebc::optimize_ebc(scenario, samples, &plan, &cfg.optim)?;
            (rep.point.objective, rep.outer_iters, summarize(&rep.flags), Some(rep.point))
        }
        Scheme::Bench7 => {
            let eye = vec![CMat::identity(scenario.mr, scenario.mr); scenario.num_bs()];
            let plan =
                EbcPlan { theta_hat: vec![Vec::new(); scenario.num_bs()], c: eye, lr: scenario.mr };
            let rep = ebc::optimize_ebc(scenario, samples, &plan, &cfg.optim)?;
            (rep.point.objective, rep.outer_iters, summarize(&rep.flags), Some(rep.point))
        }
    };
    Ok(ResultRow {
        axis: String::new(),
        value: 0.0,
        scheme,
        pcrb,
        apcrb: pcrb / k as f64,
        outer_iters,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        status,
        point,
    })
}

fn summarize(flags: &[String]) -> String {
    if flags.is_empty() {
        "ok".to_string()
    } else {
        format!("flagged:{}", flags.len())
    }
}

/// The 2K DFT columns whose spatial frequencies are nearest the
/// estimated angles (two per angle, collisions resolved to the next
/// nearest unused column).
fn dft_beamformers(mr: usize, theta: &[f64], lr: usize) -> CMat {
    let mut chosen: Vec<usize> = Vec::new();
    let pick = |target: f64, chosen: &mut Vec<usize>| {
        let mut order: Vec<usize> = (0..mr).collect();
        let dist = |m: usize| {
            let d = (m as f64 - target).rem_euclid(mr as f64);
            d.min(mr as f64 - d)
        };
        order.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap());
        for m in order {
            if !chosen.contains(&m) {
                chosen.push(m);
                return;
            }
        }
    };
    for &t in theta {
        // steering phase pi sin(t) matches DFT frequency 2 pi m / Mr
        let target = (mr as f64 * t.sin() / 2.0).rem_euclid(mr as f64);
        pick(target, &mut chosen);
        pick(target, &mut chosen);
    }
    while chosen.len() < lr {
        pick(0.0, &mut chosen);
    }
    let scale = 1.0 / (mr as f64).sqrt();
    CMat::from_fn(mr, lr, |p, j| {
        let m = chosen[j] as f64;
        Complex64::from_polar(scale, 2.0 * std::f64::consts::PI * p as f64 * m / mr as f64)
    })
}

/// Sweep axes matching the paper's figure variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PowerDbm,
    FronthaulBits,
    NumTargets,
    NumBs,
    Mt,
    Mr,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SweepAxis::PowerDbm => "power_dbm",
            SweepAxis::FronthaulBits => "fronthaul_bits",
            SweepAxis::NumTargets => "num_targets",
            SweepAxis::NumBs => "num_bs",
            SweepAxis::Mt => "mt",
            SweepAxis::Mr => "mr",
        };
        write!(f, "{s}")
    }
}

/// Declarative sweep: axis, values, schemes, scenario path, output path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub scenario: String,
    pub output: String,
    /// Warm-start alg3 along the axis when the previous optimum stays
    /// feasible (power and fronthaul axes); defaults on.
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

fn default_true() -> bool {
    true
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> crate::Result<Self> {
        toml::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))
    }
}

/// Apply one axis value to a scenario config.
pub fn apply_axis(
    base: &ScenarioConfig,
    axis: SweepAxis,
    value: f64,
) -> crate::Result<ScenarioConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::PowerDbm => cfg.power_dbm.iter_mut().for_each(|p| *p = value),
        SweepAxis::FronthaulBits => cfg.fronthaul_bits.iter_mut().for_each(|d| *d = value),
        SweepAxis::NumTargets => {
            let k = value as usize;
            if k < 1 || k > cfg.targets.len() {
                return Err(crate::Error::Config(format!(
                    "num_targets {k} outside 1..={}",
                    cfg.targets.len()
                )));
            }
            cfg.targets.truncate(k);
        }
        SweepAxis::NumBs => {
            let n = value as usize;
            if n < 1 || n > cfg.bs_positions.len() {
                return Err(crate::Error::Config(format!(
                    "num_bs {n} outside 1..={}",
                    cfg.bs_positions.len()
                )));
            }
            cfg.bs_positions.truncate(n);
            cfg.power_dbm.truncate(n);
            cfg.fronthaul_bits.truncate(n);
        }
        SweepAxis::Mt => cfg.mt = value as usize,
        SweepAxis::Mr => cfg.mr = value as usize,
    }
    Ok(cfg)
}

/// Run a sweep: one row per (axis value, scheme), in deterministic axis
/// order; per-row failures are recorded in the status column and the
/// sweep continues.
pub fn sweep(
    base: &ScenarioConfig,
    spec: &SweepSpec,
    optim: &OptimConfig,
    aoa: &AoaConfig,
) -> crate::Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut warm: Option<DesignPoint> = None;
    let warm_axis =
        matches!(spec.axis, SweepAxis::PowerDbm | SweepAxis::FronthaulBits) && spec.warm_start;
    for &value in &spec.values {
        let cfg_v = apply_axis(base, spec.axis, value)?;
        let scenario = Scenario::from_config(&cfg_v)?;
        let samples = scenario.sample_set()?;
        for &scheme in &spec.schemes {
            let run_cfg = RunConfig {
                optim: optim.clone(),
                aoa: aoa.clone(),
                warm_start: if scheme == Scheme::Alg3 && warm_axis { warm.clone() } else { None },
            };
            let mut row = match run_scheme(scheme, &scenario, &samples, &run_cfg) {
                Ok(row) => row,
                Err(e) => ResultRow {
                    axis: spec.axis.to_string(),
                    value,
                    scheme,
                    pcrb: f64::NAN,
                    apcrb: f64::NAN,
                    outer_iters: 0,
                    wall_ms: 0.0,
                    status: format!("error: {e}"),
                    point: None,
                },
            };
            row.axis = spec.axis.to_string();
            row.value = value;
            if scheme == Scheme::Alg3 && warm_axis {
                warm = row.point.clone();
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_rows_csv<W: std::io::Write>(w: &mut W, rows: &[ResultRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv_line())?;
    }
    Ok(())
}

/// Serializable design point (JSON, complex entries as [re, im] pairs).
#[derive(Debug, Serialize, Deserialize)]
pub struct DesignPointFile {
    pub r: Vec<Vec<Vec<[f64; 2]>>>,
    pub q: Vec<Vec<Vec<[f64; 2]>>>,
}

impl DesignPointFile {
    pub fn from_point(point: &DesignPoint) -> Self {
        let enc = |m: &CMat| -> Vec<Vec<[f64; 2]>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect()
        };
        DesignPointFile {
            r: point.r.iter().map(&enc).collect(),
            q: point.q.iter().map(&enc).collect(),
        }
    }

    pub fn matrices(&self) -> (Vec<CMat>, Vec<CMat>) {
        let dec = |m: &Vec<Vec<[f64; 2]>>| -> CMat {
            CMat::from_fn(m.len(), m[0].len(), |i, j| Complex64::new(m[i][j][0], m[i][j][1]))
        };
        (self.r.iter().map(&dec).collect(), self.q.iter().map(&dec).collect())
    }
}

/// One verification suite outcome.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &'static str, detail: String) -> Self {
        CheckResult { name, passed: true, detail }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        CheckResult { name, passed: false, detail }
    }
}

/// Random small instance used by the verification suites: two BSs, two
/// targets, order-one attenuation and noise so every FIM path is well
/// scaled.
pub fn random_verification_scenario(seed: u64, mt: usize, mr: usize, samples: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ScenarioConfig {
        bs_positions: vec![
            [0.5 + 0.4 * rng.random::<f64>(), 0.1 * rng.random::<f64>()],
            [-0.5 - 0.4 * rng.random::<f64>(), 0.1 * rng.random::<f64>()],
        ],
        targets: vec![
            GaussianPrior {
                center: [0.4 * rng.random::<f64>(), 0.7 + 0.3 * rng.random::<f64>()],
                radius: 0.02 + 0.02 * rng.random::<f64>(),
            },
            GaussianPrior {
                center: [-0.4 * rng.random::<f64>(), 0.6 + 0.3 * rng.random::<f64>()],
                radius: 0.02 + 0.02 * rng.random::<f64>(),
            },
        ],
        mt,
        mr,
        wavelength_m: 0.1,
        noise_psd_dbm_hz: -169.0,
        bandwidth_hz: 1e6,
        power_dbm: vec![31.0, 31.0],
        fronthaul_bits: vec![6.0, 6.0],
        mc_samples: samples,
        seed,
        rcs_m2: 1.0,
    };
    let mut scn = Scenario::from_config(&cfg).unwrap();
    for n in 0..2 {
        for u in 0..2 {
            for k in 0..2 {
                scn.attenuation[n][u][k] =
                    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
        }
    }
    scn.noise_power = 0.5 + rng.random::<f64>();
    scn
}

/// As above but keeping the physical path-loss attenuation, boosted so
/// the echo information competes with the prior (for optimizer suites).
pub fn random_optimization_scenario(seed: u64) -> Scenario {
    let mut scn = random_verification_scenario(seed, 3, 3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
    // restore physical noise, re-draw attenuation at a boosted magnitude
    let noise = 10f64.powf(-13.9);
    scn.noise_power = noise;
    for n in 0..2 {
        for u in 0..2 {
            for k in 0..2 {
                let mag = 2e-6 * (0.5 + rng.random::<f64>());
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                scn.attenuation[n][u][k] = Complex64::from_polar(mag, phase);
            }
        }
    }
    scn
}

/// Suite: the three FIM paths agree pairwise on random small instances.
pub fn check_fim_agreement(instances: usize) -> CheckResult {
    let name = "fim-oracle-agreement";
    let mut worst_elem = 0.0f64;
    let mut worst_fd = 0.0f64;
    for seed in 0..instances as u64 {
        let scn = random_verification_scenario(9000 + seed, 3, 3, 1);
        let samples = match scn.sample_set() {
            Ok(s) => s,
            Err(e) => return CheckResult::fail(name, format!("sampling failed: {e}")),
        };
        let geom = &samples.samples[0];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<CMat> = (0..2).map(|_| random_hermitian_psd(&mut rng, scn.mt, 1.0)).collect();
        let q: Vec<CMat> =
            (0..2).map(|_| random_hermitian_psd(&mut rng, scn.mr, scn.noise_power)).collect();
        let oinv = match fim::noise_shape_inverses(&scn, &q) {
            Ok(o) => o,
            Err(e) => return CheckResult::fail(name, e.to_string()),
        };
        let f1 = fim::block_f1(&scn, geom, &r, &oinv).unwrap();
        let f2 = fim::block_f2(&scn, geom, &r, &oinv).unwrap();
        let f3 = fim::block_f3(&scn, geom, &r, &oinv).unwrap();
        let (e1, e2, e3) = oracle::fim_elementwise(&scn, geom, &r, &oinv);
        worst_elem = worst_elem
            .max(rel_frob_c(&f1, &e1))
            .max(rel_frob_c(&f2, &e2))
            .max(rel_frob_c(&f3, &e3));
        let assembled = fim::assemble_f0_zeta(&f1, &f2, &f3).unwrap();
        let fd = oracle::fim_finite_difference(&scn, geom, &r, &oinv, oracle::FdConfig::default());
        worst_fd = worst_fd.max(rel_frob_r(&assembled, &fd));
    }
    let detail = format!(
        "{instances} instances: elementwise worst {worst_elem:.2e} (tol 1e-10), \
         finite-difference worst {worst_fd:.2e} (tol 1e-4)"
    );
    if worst_elem < 1e-10 && worst_fd < 1e-4 {
        CheckResult::pass(name, detail)
    } else {
        CheckResult::fail(name, detail)
    }
}

/// Suite: both surrogates are tangent at the expansion point and majorize
/// the true rate elsewhere.
pub fn check_surrogate_contracts(trials: usize) -> CheckResult {
    let name = "surrogate-contracts";
    let scn = {
        let mut s = random_verification_scenario(777, 3, 3, 4);
        s.noise_power = 1.0;
        s
    };
    let samples = scn.sample_set().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut worst_tangency = 0.0f64;
    let mut worst_major = 0.0f64;
    let rand_r = |rng: &mut ChaCha8Rng| -> Vec<CMat> {
        (0..2).map(|_| random_hermitian_psd(rng, scn.mt, 2.0)).collect()
    };
    for trial in 0..trials {
        let n = trial % 2;
        let r_tilde = rand_r(&mut rng);
        let mut q = random_hermitian_psd(&mut rng, scn.mr, scn.noise_power);
        for i in 0..scn.mr {
            q[(i, i)] += Complex64::new(0.2 * scn.noise_power, 0.0);
        }
        let truth = fronthaul::rate_d(&scn, &samples, &r_tilde, n, &q).unwrap();
        let sur = fronthaul::surrogate_dhat(&scn, &samples, &r_tilde, &r_tilde, n, &q).unwrap();
        worst_tangency = worst_tangency.max((sur - truth).abs() / truth.max(1.0));
        let r_other = rand_r(&mut rng);
        let sur = fronthaul::surrogate_dhat(&scn, &samples, &r_other, &r_tilde, n, &q).unwrap();
        let truth = fronthaul::rate_d(&scn, &samples, &r_other, n, &q).unwrap();
        worst_major = worst_major.max((truth - sur) / truth.max(1.0));
    }
    let rand_t = |rng: &mut ChaCha8Rng| -> CMat {
        let g = random_hermitian_psd(rng, scn.mr, 1.0);
        let (vals, vecs) = crate::linalg::herm_eigen(&g);
        let mut d = CMat::zeros(scn.mr, scn.mr);
        for i in 0..scn.mr {
            let frac = 0.05 + 0.9 * (vals[i] / vals[scn.mr - 1]).clamp(0.0, 1.0);
            d[(i, i)] = Complex64::new(frac / scn.noise_power, 0.0);
        }
        crate::linalg::hermitize(&(&vecs * d * vecs.adjoint()))
    };
    for trial in 0..trials {
        let n = trial % 2;
        let r_bar = rand_r(&mut rng);
        let t_bar = rand_t(&mut rng);
        let truth = fronthaul::rate_d_t(&scn, &samples, &r_bar, n, &t_bar).unwrap();
        let sur =
            fronthaul::surrogate_dtilde(&scn, &samples, &r_bar, n, &t_bar, &t_bar).unwrap();
        worst_tangency = worst_tangency.max((sur - truth).abs() / truth.max(1.0));
        let t = rand_t(&mut rng);
        let sur = fronthaul::surrogate_dtilde(&scn, &samples, &r_bar, n, &t_bar, &t).unwrap();
        let truth = fronthaul::rate_d_t(&scn, &samples, &r_bar, n, &t).unwrap();
        worst_major = worst_major.max((truth - sur) / truth.max(1.0));
    }
    let detail = format!(
        "{trials} trials per surrogate: tangency gap {worst_tangency:.2e} (tol 1e-9), \
         majorization deficit {worst_major:.2e} (tol 1e-9)"
    );
    if worst_tangency <= 1e-9 && worst_major <= 1e-9 {
        CheckResult::pass(name, detail)
    } else {
        CheckResult::fail(name, detail)
    }
}

/// Suite: the beamformed FIM with true angles and no compression noise
/// matches the full FIM, and is invariant under column recombination.
pub fn check_theorem2_invariance(instances: usize) -> CheckResult {
    let name = "theorem2-invariance";
    let mut worst = 0.0f64;
    for seed in 0..instances as u64 {
        let mut scn = random_verification_scenario(5000 + seed, 3, 6, 1);
        scn.mc_samples = 1;
        let samples = scn.sample_set().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<CMat> = (0..2).map(|_| random_hermitian_psd(&mut rng, scn.mt, 1.0)).collect();
        let theta: Vec<Vec<f64>> = samples.samples[0].theta.clone();
        let plan = match EbcPlan::from_angles(&scn, &theta) {
            Ok(p) => p,
            Err(e) => return CheckResult::fail(name, e.to_string()),
        };
        let full = fim::pfim(&scn, &samples, &r, &fim::zero_q(&scn)).unwrap();
        let p_full = fim::pcrb(&full, 2).unwrap();
        let q0r = vec![CMat::zeros(plan.lr, plan.lr); 2];
        let reduced = ebc::fim_ebc(&scn, &samples, &r, &plan.c, &q0r).unwrap();
        let p_red = fim::pcrb(&reduced, 2).unwrap();
        worst = worst.max((p_red - p_full).abs() / p_full);
        let l = CMat::from_fn(plan.lr, plan.lr, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        }) + CMat::identity(plan.lr, plan.lr) * Complex64::new(2.0, 0.0);
        let cl: Vec<CMat> = plan.c.iter().map(|c| c * &l).collect();
        let reduced_l = ebc::fim_ebc(&scn, &samples, &r, &cl, &q0r).unwrap();
        let p_red_l = fim::pcrb(&reduced_l, 2).unwrap();
        worst = worst.max((p_red_l - p_full).abs() / p_full);
    }
    let detail =
        format!("{instances} instances: worst relative PCRB deviation {worst:.2e} (tol 1e-6)");
    if worst <= 1e-6 {
        CheckResult::pass(name, detail)
    } else {
        CheckResult::fail(name, detail)
    }
}

/// Suite: the transmit SCA, compression SCA, and alternating loops all
/// produce nonincreasing objective traces on random scenarios.
pub fn check_descent(instances: usize) -> CheckResult {
    let name = "descent";
    let cfg = OptimConfig::default();
    let mut worst_rise = 0.0f64;
    for seed in 0..instances as u64 {
        let scn = random_optimization_scenario(3000 + seed);
        let samples = scn.sample_set().unwrap();
        let rep = match optimizer::alternate(&scn, &samples, &cfg) {
            Ok(r) => r,
            Err(e) => return CheckResult::fail(name, format!("seed {seed}: {e}")),
        };
        let trace = rep.objective_trace();
        if trace.is_empty() {
            return CheckResult::fail(name, format!("seed {seed}: empty trace"));
        }
        let mut last = f64::INFINITY;
        for v in trace {
            if last.is_finite() {
                worst_rise = worst_rise.max((v - last) / last.abs().max(1e-300));
            }
            last = v;
        }
    }
    let detail =
        format!("{instances} scenarios: worst relative objective rise {worst_rise:.2e} (tol 1e-6)");
    if worst_rise <= 1e-6 {
        CheckResult::pass(name, detail)
    } else {
        CheckResult::fail(name, detail)
    }
}

/// Suite: the Schur-complement reformulation reproduces the inverse
/// diagonal of fixed PD matrices.
pub fn check_schur_reformulation(instances: usize) -> CheckResult {
    let name = "schur-lmi";
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let dim = 6;
        let n_t = 4;
        let mut fz = random_hermitian_psd(&mut rng, dim, 1.0);
        for i in 0..dim {
            fz[(i, i)] += Complex64::new(0.5, 0.0);
        }
        let f = crate::linalg::symmetrize(&RMat::from_fn(dim, dim, |i, j| fz[(i, j)].re));
        let inv = nalgebra::Cholesky::new(f.clone()).unwrap().inverse();
        let want: f64 = (0..n_t).map(|i| inv[(i, i)]).sum();
        let mut p = convex::SdpProblem::new();
        let ts: Vec<convex::ScalarVar> = (0..n_t).map(|_| p.scalar_var()).collect();
        for t in &ts {
            p.nonneg(*t);
        }
        let expr = convex::SymExpr { dim, constant: f, terms: Vec::new() };
        convex::add_schur_pcrb_lmis(&mut p, &expr, &ts, None).unwrap();
        let obj: Vec<(convex::ScalarVar, f64)> = ts.iter().map(|t| (*t, 1.0)).collect();
        p.set_objective(&obj);
        match p.solve(&SolverConfig::from_env()) {
            Ok(rep) => worst = worst.max((rep.objective - want).abs() / want),
            Err(e) => return CheckResult::fail(name, e.to_string()),
        }
    }
    let detail = format!("{instances} random PD matrices: worst relative gap {worst:.2e} (tol 1e-5)");
    if worst <= 1e-5 {
        CheckResult::pass(name, detail)
    } else {
        CheckResult::fail(name, detail)
    }
}

/// Suite: the SCA optimizers land within 1% of exhaustive grid search on
/// the one-degree-of-freedom mini problems.
pub fn check_mini_grid() -> CheckResult {
    let name = "mini-grid";
    let cfg = OptimConfig::default();
    let mini = |mt: usize, mr: usize, dbar: f64| -> Scenario {
        let mut scn = Scenario::from_config(&ScenarioConfig {
            bs_positions: vec![[0.0, 0.0]],
            targets: vec![GaussianPrior { center: [0.2, 0.9], radius: 0.03 }],
            mt,
            mr,
            wavelength_m: 0.1,
            noise_psd_dbm_hz: -169.0,
            bandwidth_hz: 1e6,
            power_dbm: vec![31.0],
            fronthaul_bits: vec![dbar],
            mc_samples: 3,
            seed: 42,
            rcs_m2: 1.0,
        })
        .unwrap();
        scn.attenuation[0][0][0] *= Complex64::new(1e3, 0.0);
        scn
    };
    // transmit problem (fronthaul cap active)
    let scn = mini(2, 2, 6.0);
    let samples = scn.sample_set().unwrap();
    let start = optimizer::init_feasible(&scn, &samples, &cfg).unwrap();
    let sca = optimizer::sca_transmit(&scn, &samples, &start.q, &start.r, true, &cfg).unwrap();
    let grid = oracle::grid_transmit_mini(&scn, &samples, &start.q[0], Some(6.0), 16).unwrap();
    let rel_t = (sca.point.objective - grid.objective).abs() / grid.objective;
    // compression problem (scalar q)
    let scn = mini(2, 1, 3.0);
    let samples = scn.sample_set().unwrap();
    let start = optimizer::init_feasible(&scn, &samples, &cfg).unwrap();
    let sca = optimizer::sca_compress(&scn, &samples, &start.r, &start.q, &cfg).unwrap();
    let grid = oracle::grid_compress_mini(&scn, &samples, &start.r, 3.0, 4000).unwrap();
    let rel_c = (sca.point.objective - grid.objective).abs() / grid.objective;
    let detail =
        format!("transmit gap {rel_t:.2e}, compression gap {rel_c:.2e} (tol 1e-2 each)");
    if rel_t < 1e-2 && rel_c < 1e-2 {
        CheckResult::pass(name, detail)
    } else {
        CheckResult::fail(name, detail)
    }
}

/// The `verify` entry point: the oracle agreement, surrogate,
/// Theorem-2 invariance, and descent suites.
pub fn verify() -> Vec<CheckResult> {
    vec![
        check_fim_agreement(20),
        check_surrogate_contracts(100),
        check_theorem2_invariance(20),
        check_descent(10),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_config() -> ScenarioConfig {
        ScenarioConfig {
            bs_positions: vec![[0.8660254037844386, 0.0], [-0.8660254037844386, 0.0]],
            targets: vec![
                GaussianPrior { center: [0.4330127018922193, 0.75], radius: 0.03 },
                GaussianPrior { center: [0.0, 0.75], radius: 0.048 },
            ],
            mt: 3,
            mr: 3,
            wavelength_m: 0.1,
            noise_psd_dbm_hz: -169.0,
            bandwidth_hz: 1e6,
            power_dbm: vec![31.0, 31.0],
            fronthaul_bits: vec![8.0, 8.0],
            mc_samples: 3,
            seed: 7,
            rcs_m2: 1.0,
        }
    }

    #[test]
    fn sweep_rows_deterministic_modulo_walltime() {
        let base = desk_config();
        let spec = SweepSpec {
            axis: SweepAxis::PowerDbm,
            values: vec![25.0, 31.0],
            schemes: vec![Scheme::Bench3],
            scenario: String::new(),
            output: String::new(),
            warm_start: true,
        };
        let optim = OptimConfig::default();
        let aoa = AoaConfig::default();
        let rows1 = sweep(&base, &spec, &optim, &aoa).unwrap();
        let rows2 = sweep(&base, &spec, &optim, &aoa).unwrap();
        let strip = |rows: &[ResultRow]| -> Vec<String> {
            rows.iter()
                .map(|r| {
                    let line = r.csv_line();
                    let cols: Vec<&str> = line.split(',').collect();
                    // drop the wall_ms column (index 6)
                    cols.iter()
                        .enumerate()
                        .filter(|(i, _)| *i != 6)
                        .map(|(_, c)| *c)
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect()
        };
        assert_eq!(strip(&rows1), strip(&rows2));
    }

    #[test]
    fn axis_application() {
        let base = desk_config();
        let cfg = apply_axis(&base, SweepAxis::PowerDbm, 25.0).unwrap();
        assert!(cfg.power_dbm.iter().all(|&p| p == 25.0));
        let cfg = apply_axis(&base, SweepAxis::NumTargets, 1.0).unwrap();
        assert_eq!(cfg.targets.len(), 1);
        assert!(apply_axis(&base, SweepAxis::NumTargets, 9.0).is_err());
        let cfg = apply_axis(&base, SweepAxis::Mr, 6.0).unwrap();
        assert_eq!(cfg.mr, 6);
    }

    #[test]
    fn design_point_file_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = vec![random_hermitian_psd(&mut rng, 3, 1.0)];
        let q = vec![random_hermitian_psd(&mut rng, 2, 1.0)];
        let point = DesignPoint {
            r: r.clone(),
            q: q.clone(),
            objective: 0.0,
            pseudo_inverse: false,
            power_slack: vec![0.0],
            rate_slack: vec![0.0],
        };
        let file = DesignPointFile::from_point(&point);
        let text = serde_json::to_string(&file).unwrap();
        let back: DesignPointFile = serde_json::from_str(&text).unwrap();
        let (r2, q2) = back.matrices();
        assert!(rel_frob_c(&r[0], &r2[0]) < 1e-15);
        assert!(rel_frob_c(&q[0], &q2[0]) < 1e-15);
    }

    #[test]
    fn dft_beamformers_are_orthonormal() {
        let c = dft_beamformers(8, &[0.2, -0.4], 4);
        let gram = c.adjoint() * &c;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)].re - want).abs() < 1e-10);
                assert!(gram[(i, j)].im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn scheme_parsing_roundtrip() {
        for s in ["alg3", "bench1", "bench2", "bench3", "ebc", "bench4", "bench5", "bench6", "bench7"]
        {
            let scheme: Scheme = s.parse().unwrap();
            assert_eq!(scheme.to_string(), s);
        }
        assert!("nope".parse::<Scheme>().is_err());
    }
}
