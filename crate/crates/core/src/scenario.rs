//! Scenario definition: BS geometry, target priors, array responses,
//! channel attenuation, and the frozen Monte-Carlo sample set.
//!
//! Every expectation in the crate is a sample average over one `SampleSet`
//! drawn here once per run (sample-average approximation); freezing the
//! draws keeps the optimization objective deterministic so descent checks
//! are meaningful.
//!
//! Conventions:
//! - positions are in km, wavelengths in m, powers in W (linear)
//! - the angle between a BS and a target is `atan2(dx, dy)` (x-offset over
//!   y-offset); targets must sit in front of the arrays (dy > 0), draws
//!   violating this are rejected and redrawn
//! - arrays are half-wavelength ULAs with reference element 0, so the
//!   steering entry for element m is `exp(j*pi*m*sin(theta))`

use nalgebra::Vector2;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::{CMat, CVec};

/// Geometry failures during sampling or angle evaluation.
#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate geometry: target coincides with a BS")]
    DegenerateGeometry,
    #[error("sampling failed: {0} retries exhausted drawing a valid sample")]
    SamplingFailed(usize),
}

/// Isotropic Gaussian prior on one target position (std `radius_km` per axis).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianPrior {
    /// Center of the possible location region (km).
    pub center: [f64; 2],
    /// Standard deviation per coordinate (km).
    pub radius: f64,
}

impl GaussianPrior {
    pub fn center_vec(&self) -> Vector2<f64> {
        Vector2::new(self.center[0], self.center[1])
    }
}

/// On-disk scenario description (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub bs_positions: Vec<[f64; 2]>,
    pub targets: Vec<GaussianPrior>,
    #[serde(alias = "Mt")]
    pub mt: usize,
    #[serde(alias = "Mr")]
    pub mr: usize,
    pub wavelength_m: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub power_dbm: Vec<f64>,
    pub fronthaul_bits: Vec<f64>,
    pub mc_samples: usize,
    pub seed: u64,
    pub rcs_m2: f64,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> crate::Result<Self> {
        toml::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> crate::Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config serializes")
    }
}

/// Fully resolved scenario: geometry, priors, physical constants, frozen
/// attenuation coefficients, budgets.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// BS positions (km).
    pub bs_positions: Vec<Vector2<f64>>,
    /// Per-target Gaussian priors.
    pub priors: Vec<GaussianPrior>,
    /// Transmit antennas per BS.
    pub mt: usize,
    /// Receive antennas per BS.
    pub mr: usize,
    /// Carrier wavelength (m).
    pub wavelength_m: f64,
    /// Noise power sigma^2 (W, linear).
    pub noise_power: f64,
    /// Attenuation coefficients b[n][u][k]: transmit BS u -> target k ->
    /// receive BS n. Frozen per scenario (deterministic nuisance).
    pub attenuation: Vec<Vec<Vec<Complex64>>>,
    /// Transmit power budgets (W).
    pub power_w: Vec<f64>,
    /// Fronthaul capacities (bits per sample).
    pub fronthaul_bits: Vec<f64>,
    /// Monte-Carlo sample count S.
    pub mc_samples: usize,
    /// Master seed; both the attenuation phases and the sample draws
    /// derive from it.
    pub rng_seed: u64,
    /// Radar cross-section used by the attenuation model (m^2).
    pub rcs_m2: f64,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> crate::Result<Self> {
        if cfg.targets.is_empty() || cfg.bs_positions.is_empty() {
            return Err(crate::Error::Config("need at least one BS and one target".into()));
        }
        if cfg.mt < 1 || cfg.mr < 1 {
            return Err(crate::Error::Config("Mt and Mr must be at least 1".into()));
        }
        if cfg.power_dbm.len() != cfg.bs_positions.len()
            || cfg.fronthaul_bits.len() != cfg.bs_positions.len()
        {
            return Err(crate::Error::Config(
                "power_dbm and fronthaul_bits must have one entry per BS".into(),
            ));
        }
        if cfg.targets.iter().any(|t| t.radius <= 0.0) {
            return Err(crate::Error::Config("target radius must be positive".into()));
        }
        if cfg.mc_samples < 1 {
            return Err(crate::Error::Config("mc_samples must be at least 1".into()));
        }
        let noise_power = dbm_to_watt(cfg.noise_psd_dbm_hz + 10.0 * cfg.bandwidth_hz.log10());
        let power_w: Vec<f64> = cfg.power_dbm.iter().map(|&p| dbm_to_watt(p)).collect();
        if cfg.fronthaul_bits.iter().any(|&d| d <= 0.0) {
            return Err(crate::Error::Config("fronthaul capacity must be positive".into()));
        }
        let bs_positions: Vec<Vector2<f64>> =
            cfg.bs_positions.iter().map(|p| Vector2::new(p[0], p[1])).collect();
        let mut scn = Scenario {
            bs_positions,
            priors: cfg.targets.clone(),
            mt: cfg.mt,
            mr: cfg.mr,
            wavelength_m: cfg.wavelength_m,
            noise_power,
            attenuation: Vec::new(),
            power_w,
            fronthaul_bits: cfg.fronthaul_bits.clone(),
            mc_samples: cfg.mc_samples,
            rng_seed: cfg.seed,
            rcs_m2: cfg.rcs_m2,
        };
        let mut rng = scn.derived_rng(RngStream::Attenuation);
        scn.attenuation = gen_attenuation(&scn, &mut rng);
        Ok(scn)
    }

    pub fn num_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn num_targets(&self) -> usize {
        self.priors.len()
    }

    /// A deterministic child RNG for one of the scenario's random inputs.
    pub fn derived_rng(&self, stream: RngStream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(stream as u64);
        rng
    }

    /// Draw the frozen Monte-Carlo sample set for this scenario.
    pub fn sample_set(&self) -> crate::Result<SampleSet> {
        let mut rng = self.derived_rng(RngStream::Samples);
        draw_samples(self, &mut rng)
    }
}

/// Independent RNG streams derived from the scenario seed.
#[derive(Debug, Clone, Copy)]
pub enum RngStream {
    Attenuation = 1,
    Samples = 2,
    Snapshots = 3,
}

fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Angle between a BS and a target: `atan2(dx, dy)` per the x-over-y
/// convention. For targets in front of the array (dy > 0) this lands in
/// (-pi/2, pi/2).
pub fn angle_between(bs_pos: Vector2<f64>, target_pos: Vector2<f64>) -> Result<f64, GeometryError> {
    let d = target_pos - bs_pos;
    if d.norm() < 1e-12 {
        return Err(GeometryError::DegenerateGeometry);
    }
    Ok(d.x.atan2(d.y))
}

/// Jacobian of the angle w.r.t. the target position:
/// `[dy, -dx] / (dx^2 + dy^2)`.
///
/// This is the algebraic form of the tan/cot expressions with the
/// removable singularities removed, valid whenever the target does not
/// coincide with the BS.
pub fn angle_jacobian(
    bs_pos: Vector2<f64>,
    target_pos: Vector2<f64>,
) -> Result<Vector2<f64>, GeometryError> {
    let d = target_pos - bs_pos;
    let r2 = d.norm_squared();
    if r2 < 1e-24 {
        return Err(GeometryError::DegenerateGeometry);
    }
    Ok(Vector2::new(d.y / r2, -d.x / r2))
}

/// Half-wavelength ULA steering vector: element m = exp(j*pi*m*sin(theta)).
pub fn steering(theta: f64, m: usize) -> CVec {
    let s = theta.sin();
    CVec::from_fn(m, |i, _| Complex64::from_polar(1.0, std::f64::consts::PI * i as f64 * s))
}

/// Elementwise derivative of [`steering`] w.r.t. theta:
/// element m = j*pi*m*cos(theta)*exp(j*pi*m*sin(theta)).
pub fn steering_derivative(theta: f64, m: usize) -> CVec {
    let s = theta.sin();
    let c = theta.cos();
    CVec::from_fn(m, |i, _| {
        let phase = Complex64::from_polar(1.0, std::f64::consts::PI * i as f64 * s);
        Complex64::new(0.0, std::f64::consts::PI * i as f64 * c) * phase
    })
}

/// Per-sample derived geometry: one prior draw plus everything the FIM
/// and rate evaluations need at that draw.
#[derive(Debug, Clone)]
pub struct SampleGeometry {
    /// Target positions (km), one per target.
    pub positions: Vec<Vector2<f64>>,
    /// theta[n][k]: angle between BS n and target k.
    pub theta: Vec<Vec<f64>>,
    /// Receive steering matrices A_n (Mr x K) and derivatives.
    pub a: Vec<CMat>,
    pub a_dot: Vec<CMat>,
    /// Transmit steering matrices V_n (Mt x K) and derivatives.
    pub v: Vec<CMat>,
    pub v_dot: Vec<CMat>,
    /// jac[n][k] = d theta_{n,k} / d q_k (1/km).
    pub jac: Vec<Vec<Vector2<f64>>>,
    /// Channel matrices g[n][u] = A_n B_{n,u} V_u^T (Mr x Mt).
    pub g: Vec<Vec<CMat>>,
}

impl SampleGeometry {
    /// Build the per-sample geometry for given target positions.
    pub fn at_positions(
        scenario: &Scenario,
        positions: &[Vector2<f64>],
    ) -> Result<Self, GeometryError> {
        let n = scenario.num_bs();
        let k = scenario.num_targets();
        let mut theta = vec![vec![0.0; k]; n];
        let mut jac = vec![vec![Vector2::zeros(); k]; n];
        for (ni, bs) in scenario.bs_positions.iter().enumerate() {
            for (ki, q) in positions.iter().enumerate() {
                theta[ni][ki] = angle_between(*bs, *q)?;
                jac[ni][ki] = angle_jacobian(*bs, *q)?;
            }
        }
        let mut a = Vec::with_capacity(n);
        let mut a_dot = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut v_dot = Vec::with_capacity(n);
        for ni in 0..n {
            let mut an = CMat::zeros(scenario.mr, k);
            let mut adn = CMat::zeros(scenario.mr, k);
            let mut vn = CMat::zeros(scenario.mt, k);
            let mut vdn = CMat::zeros(scenario.mt, k);
            for ki in 0..k {
                an.set_column(ki, &steering(theta[ni][ki], scenario.mr));
                adn.set_column(ki, &steering_derivative(theta[ni][ki], scenario.mr));
                vn.set_column(ki, &steering(theta[ni][ki], scenario.mt));
                vdn.set_column(ki, &steering_derivative(theta[ni][ki], scenario.mt));
            }
            a.push(an);
            a_dot.push(adn);
            v.push(vn);
            v_dot.push(vdn);
        }
        let mut g = vec![vec![CMat::zeros(0, 0); n]; n];
        for ni in 0..n {
            for ui in 0..n {
                g[ni][ui] = channel_matrix(&a[ni], &scenario.attenuation[ni][ui], &v[ui]);
            }
        }
        Ok(SampleGeometry { positions: positions.to_vec(), theta, a, a_dot, v, v_dot, jac, g })
    }
}

/// G = A diag(b) V^T.
pub fn channel_matrix(a: &CMat, b: &[Complex64], v: &CMat) -> CMat {
    let k = b.len();
    let mut scaled = CMat::zeros(a.nrows(), k);
    for ki in 0..k {
        scaled.set_column(ki, &(a.column(ki) * b[ki]));
    }
    &scaled * v.transpose()
}

/// The frozen Monte-Carlo sample set.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub samples: Vec<SampleGeometry>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

const MAX_REDRAWS: usize = 1000;
/// Minimum forward offset (km) a draw must keep from every BS's array
/// plane; draws behind or on the plane would leave the (-pi/2, pi/2)
/// angle branch.
const MIN_FORWARD_KM: f64 = 1e-6;

/// Draw S i.i.d. samples from the product of target priors, rejecting
/// draws that put any target behind (or numerically on) a BS array plane
/// or on top of a BS.
pub fn draw_samples<R: Rng>(scenario: &Scenario, rng: &mut R) -> crate::Result<SampleSet> {
    let k = scenario.num_targets();
    let mut samples = Vec::with_capacity(scenario.mc_samples);
    let normals: Vec<(Normal<f64>, Normal<f64>)> = scenario
        .priors
        .iter()
        .map(|p| {
            (
                Normal::new(p.center[0], p.radius).expect("radius > 0"),
                Normal::new(p.center[1], p.radius).expect("radius > 0"),
            )
        })
        .collect();
    for _ in 0..scenario.mc_samples {
        let mut attempt = 0usize;
        let geom = loop {
            attempt += 1;
            if attempt > MAX_REDRAWS {
                return Err(GeometryError::SamplingFailed(MAX_REDRAWS).into());
            }
            let mut pos = Vec::with_capacity(k);
            for (nx, ny) in &normals {
                pos.push(Vector2::new(nx.sample(rng), ny.sample(rng)));
            }
            if !draw_is_valid(scenario, &pos) {
                continue;
            }
            match SampleGeometry::at_positions(scenario, &pos) {
                Ok(g) => break g,
                Err(_) => continue,
            }
        };
        samples.push(geom);
    }
    Ok(SampleSet { samples })
}

fn draw_is_valid(scenario: &Scenario, positions: &[Vector2<f64>]) -> bool {
    for bs in &scenario.bs_positions {
        for q in positions {
            let d = q - bs;
            if d.y <= MIN_FORWARD_KM || d.norm() < 1e-9 {
                return false;
            }
        }
    }
    true
}

/// Attenuation coefficients from the radar equation,
/// |b|^2 = lambda^2 rcs / ((4 pi)^3 d_u^2 d_n^2), with distances measured
/// to the prior centers (in meters) and a seeded uniform phase. The
/// coefficients model round-trip path loss plus RCS and stay frozen for
/// the scenario's lifetime.
pub fn gen_attenuation<R: Rng>(scenario: &Scenario, rng: &mut R) -> Vec<Vec<Vec<Complex64>>> {
    let n = scenario.num_bs();
    let k = scenario.num_targets();
    let four_pi_cubed = (4.0 * std::f64::consts::PI).powi(3);
    let mut b = vec![vec![vec![Complex64::default(); k]; n]; n];
    for ni in 0..n {
        for ui in 0..n {
            for ki in 0..k {
                let center = scenario.priors[ki].center_vec();
                let d_rx_m = (center - scenario.bs_positions[ni]).norm() * 1e3;
                let d_tx_m = (center - scenario.bs_positions[ui]).norm() * 1e3;
                let mag2 = scenario.wavelength_m.powi(2) * scenario.rcs_m2
                    / (four_pi_cubed * d_tx_m.powi(2) * d_rx_m.powi(2));
                let phase = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
                b[ni][ui][ki] = Complex64::from_polar(mag2.sqrt(), phase);
            }
        }
    }
    b
}
