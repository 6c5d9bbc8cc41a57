//! Fronthaul compression rate and its SCA surrogates, in both the
//! (R, Q) and the (R, T) parameterizations, where `T = (sigma^2 I + Q)^{-1}`.
//!
//! The rate of BS n is the Gaussian test-channel mutual information
//!
//! ```text
//! D_n = E_q[ log2 |J_n + sigma^2 I + Q_n| - log2 |Q_n| ],
//! J_n = sum_u G_{n,u} R_u G_{n,u}^H,
//! ```
//!
//! which is concave in {R_u} and, after the variable change, concave in
//! T_n except for the convex `-log2|I - sigma^2 T_n|` term. The two
//! surrogates linearize exactly the concave log-det parts around an
//! expansion point, so each is tangent there and upper-bounds the true
//! rate everywhere.
//!
//! All T-side quantities are evaluated through `O = T^{-1}` using
//! `K = J - J (O + J)^{-1} J` and log-det differences; the direct
//! `J^{1/2} T J^{1/2}` forms lose several digits once `J` and `sigma^2`
//! differ by many orders of magnitude.

use num_complex::Complex64;

use crate::linalg::{
    herm_eigen, hermitize, inv_hermitian_pd, ln_det_hermitian_pd, CMat,
};
use crate::scenario::{SampleSet, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum RateError {
    #[error("rate unbounded: compression noise covariance is singular")]
    Unbounded,
    #[error("T outside its feasible range (0 < T < sigma^-2 I)")]
    TOutOfRange,
}

const LN2: f64 = std::f64::consts::LN_2;
/// Strict-PD floor applied to Q eigenvalues when evaluating log2|Q|,
/// relative to sigma^2. Solver output can carry eigenvalues a hair below
/// zero; anything clearly negative is an error instead.
const Q_FLOOR_REL: f64 = 1e-10;
/// Eigenvalues of `I - sigma^2 T` below this are clamped (T essentially
/// touching the zero-compression boundary).
pub const T_BOUNDARY_EPS: f64 = 1e-9;

/// Per-BS rate context: the aggregate signal covariance at every sample,
/// frozen so repeated rate/surrogate evaluations don't rebuild it.
pub struct RateContext {
    /// J_n per sample (Hermitian PSD).
    pub j: Vec<CMat>,
    pub sigma2: f64,
    dim: usize,
}

impl RateContext {
    /// Signal covariances of BS `n` under transmit covariances `r`.
    pub fn new(scenario: &Scenario, samples: &SampleSet, r: &[CMat], n: usize) -> Self {
        let j = samples
            .samples
            .iter()
            .map(|geom| {
                let mut acc = CMat::zeros(scenario.mr, scenario.mr);
                for (u, ru) in r.iter().enumerate() {
                    let g = &geom.g[n][u];
                    acc += g * ru * g.adjoint();
                }
                hermitize(&acc)
            })
            .collect();
        RateContext { j, sigma2: scenario.noise_power, dim: scenario.mr }
    }

    /// Reduced-dimension variant: signal covariances `C^H J C` seen after
    /// receive beamforming with `c` (Mr x Lr).
    pub fn beamformed(
        scenario: &Scenario,
        samples: &SampleSet,
        r: &[CMat],
        n: usize,
        c: &CMat,
    ) -> Self {
        let full = Self::new(scenario, samples, r, n);
        let j = full.j.iter().map(|jm| hermitize(&(c.adjoint() * jm * c))).collect();
        RateContext { j, sigma2: scenario.noise_power, dim: c.ncols() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// log2 |Q| with the strict-PD eigenvalue floor.
    fn log2_det_q(&self, q: &CMat) -> Result<f64, RateError> {
        let floor = Q_FLOOR_REL * self.sigma2;
        let (vals, _) = herm_eigen(q);
        let scale = vals[vals.len() - 1].abs().max(self.sigma2);
        let mut acc = 0.0;
        for &v in vals.iter() {
            if v < -1e-8 * scale {
                return Err(RateError::Unbounded);
            }
            acc += v.max(floor).ln();
        }
        Ok(acc / LN2)
    }

    /// Rate in bits per sample at compression covariance `q`.
    pub fn rate(&self, q: &CMat) -> Result<f64, RateError> {
        let ld_q = self.log2_det_q(q)?;
        let mut acc = 0.0;
        for jm in &self.j {
            let mut num = jm + hermitize(q);
            for i in 0..num.nrows() {
                num[(i, i)] += Complex64::new(self.sigma2, 0.0);
            }
            let ld = ln_det_hermitian_pd(&num).ok_or(RateError::Unbounded)?;
            acc += ld / LN2 - ld_q;
        }
        Ok(acc / self.j.len() as f64)
    }

    /// Rate in the T parameterization; identical in value to
    /// `rate(T^{-1} - sigma^2 I)`, which is how it is evaluated.
    pub fn rate_t(&self, t: &CMat) -> Result<f64, RateError> {
        let (q, _) = t_to_q(t, self.sigma2)?;
        self.rate(&q)
    }

    /// Surrogate for the rate as a function of {R_u}, linearized around
    /// the expansion covariances that produced `sigma_bar` (per sample):
    /// tangent at the expansion point, global upper bound elsewhere.
    ///
    /// `sigma_bar[s] = J_bar_s + sigma^2 I + Q`, evaluated by the caller
    /// at the expansion transmit covariances.
    pub fn surrogate_r(&self, sigma_bar: &[CMat], q: &CMat) -> Result<SurrogateR, RateError> {
        let ld_q = self.log2_det_q(q)?;
        let mut constant = -ld_q;
        let mut sig_inv = Vec::with_capacity(sigma_bar.len());
        for sb in sigma_bar {
            let ld = ln_det_hermitian_pd(sb).ok_or(RateError::Unbounded)? / LN2;
            let inv = inv_hermitian_pd(sb).ok_or(RateError::Unbounded)?;
            // log2|Sigma(R)| <= log2|Sigma_bar| + tr[Sigma_bar^-1 (Sigma - Sigma_bar)]/ln2
            constant += (ld - sb.nrows() as f64 / LN2) / sigma_bar.len() as f64;
            sig_inv.push(inv);
        }
        Ok(SurrogateR { sig_inv, constant, sigma2: self.sigma2 })
    }

    /// Surrogate for the rate as a function of T_n, linearized around the
    /// expansion point given as the pair `(t_bar, o_bar = t_bar^{-1})`.
    /// The convex `-log2|I - sigma^2 T|` term is kept exact.
    pub fn surrogate_t(&self, t_bar: &CMat, o_bar: &CMat) -> Result<SurrogateT, RateError> {
        let mut constant = 0.0;
        let mut kmats = Vec::with_capacity(self.j.len());
        let ld_obar = ln_det_hermitian_pd(o_bar).ok_or(RateError::TOutOfRange)?;
        for jm in &self.j {
            let w = hermitize(&(o_bar + jm));
            let ld_w = ln_det_hermitian_pd(&w).ok_or(RateError::TOutOfRange)?;
            let winv = inv_hermitian_pd(&w).ok_or(RateError::TOutOfRange)?;
            // K = J - J (O_bar + J)^{-1} J  ==  J^{1/2} Omega_bar^{-1} J^{1/2}
            let k = hermitize(&(jm - jm * winv * jm));
            // tr(Omega_bar^{-1}) = dim - tr(T_bar K)
            let tr_tk = (t_bar * &k).trace().re;
            // log2|Omega_bar| = log2|O_bar + J| - log2|O_bar|
            constant += ((ld_w - ld_obar) / LN2 - tr_tk / LN2) / self.j.len() as f64;
            kmats.push(k);
        }
        Ok(SurrogateT { kmats, constant, sigma2: self.sigma2, n_samples: self.j.len() })
    }
}

/// Convert a T-form covariance back to Q, clamping eigenvalues of
/// `I - sigma^2 T` at [`T_BOUNDARY_EPS`]; the flag reports whether any
/// clamp fired. Eigenvalues meaningfully outside [0, sigma^-2] error out.
pub fn t_to_q(t: &CMat, sigma2: f64) -> Result<(CMat, bool), RateError> {
    let (vals, vecs) = herm_eigen(t);
    let dim = vals.len();
    let mut clamped = false;
    let mut qd = CMat::zeros(dim, dim);
    for i in 0..dim {
        let tau = vals[i];
        if tau < -1e-10 / sigma2 || tau * sigma2 > 1.0 + 1e-6 {
            return Err(RateError::TOutOfRange);
        }
        // mu = 1 - sigma^2 tau is Q's share of O relative to O itself
        let mut mu = 1.0 - sigma2 * tau;
        if mu < T_BOUNDARY_EPS {
            mu = T_BOUNDARY_EPS;
            clamped = true;
        }
        let tau_f = if tau <= 1e-14 / sigma2 {
            clamped = true;
            1e-14 / sigma2
        } else {
            tau
        };
        // Q eigenvalue: 1/tau - sigma^2 = mu / tau
        qd[(i, i)] = Complex64::new(mu / tau_f, 0.0);
    }
    Ok((hermitize(&(&vecs * qd * vecs.adjoint())), clamped))
}

/// Inverse noise shape `O = T^{-1}` computed through the same clamped
/// eigendecomposition as [`t_to_q`].
pub fn t_to_o(t: &CMat, sigma2: f64) -> Result<CMat, RateError> {
    let (q, _) = t_to_q(t, sigma2)?;
    let mut o = q;
    for i in 0..o.nrows() {
        o[(i, i)] += Complex64::new(sigma2, 0.0);
    }
    Ok(o)
}

/// Affine-in-R surrogate: `constant + fixed_trace(q) + sum_u tr(H_u R_u)/ln2`.
pub struct SurrogateR {
    /// Per-sample inverses of the expansion covariance.
    pub sig_inv: Vec<CMat>,
    constant: f64,
    sigma2: f64,
}

impl SurrogateR {
    /// Hermitian coefficient H_{n,u} = avg_s G^H Sigma_bar_s^-1 G so that
    /// the R-dependent part is `sum_u tr(H_u R_u) / ln2`.
    pub fn coefficient(
        &self,
        scenario: &Scenario,
        samples: &SampleSet,
        n: usize,
        u: usize,
    ) -> CMat {
        let mut acc = CMat::zeros(scenario.mt, scenario.mt);
        for (s, geom) in samples.samples.iter().enumerate() {
            let g = &geom.g[n][u];
            acc += g.adjoint() * &self.sig_inv[s] * g;
        }
        hermitize(&acc) / Complex64::new(samples.len() as f64, 0.0)
    }

    /// Beamformed variant: coefficients for the rate seen through `c`.
    pub fn coefficient_beamformed(
        &self,
        scenario: &Scenario,
        samples: &SampleSet,
        n: usize,
        u: usize,
        c: &CMat,
    ) -> CMat {
        let mut acc = CMat::zeros(scenario.mt, scenario.mt);
        for (s, geom) in samples.samples.iter().enumerate() {
            let g = c.adjoint() * &geom.g[n][u];
            acc += g.adjoint() * &self.sig_inv[s] * g;
        }
        hermitize(&acc) / Complex64::new(samples.len() as f64, 0.0)
    }

    /// Scalar contribution of the fixed `sigma^2 I + Q` part:
    /// `avg_s tr[Sigma_bar_s^-1 (sigma^2 I + Q)] / ln2`.
    pub fn fixed_trace(&self, q: &CMat) -> f64 {
        let mut oq = hermitize(q);
        for i in 0..oq.nrows() {
            oq[(i, i)] += Complex64::new(self.sigma2, 0.0);
        }
        let mut acc = 0.0;
        for inv in &self.sig_inv {
            acc += (inv * &oq).trace().re;
        }
        acc / (self.sig_inv.len() as f64 * LN2)
    }

    /// Everything independent of both R and the trace of the fixed part.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Evaluate the surrogate at transmit covariances `r`.
    pub fn eval(
        &self,
        scenario: &Scenario,
        samples: &SampleSet,
        n: usize,
        r: &[CMat],
        q: &CMat,
    ) -> f64 {
        let mut val = self.constant + self.fixed_trace(q);
        for (u, ru) in r.iter().enumerate() {
            let h = self.coefficient(scenario, samples, n, u);
            val += (h * ru).trace().re / LN2;
        }
        val
    }
}

/// Surrogate in T: affine part `constant + tr(K T)/ln2` plus the exact
/// convex term `-log2|I - sigma^2 T|`.
pub struct SurrogateT {
    /// Per-sample K_s = J_s^{1/2} Omega_bar_s^{-1} J_s^{1/2}.
    pub kmats: Vec<CMat>,
    pub constant: f64,
    pub sigma2: f64,
    n_samples: usize,
}

impl SurrogateT {
    /// Averaged Hermitian coefficient of T in the affine part.
    pub fn coefficient(&self) -> CMat {
        let mut acc = self.kmats[0].clone();
        for k in &self.kmats[1..] {
            acc += k;
        }
        hermitize(&acc) / Complex64::new(self.n_samples as f64, 0.0)
    }

    /// -log2|I - sigma^2 T| through the eigenvalues of T.
    pub fn convex_term(&self, t: &CMat) -> Result<f64, RateError> {
        let (vals, _) = herm_eigen(t);
        let mut acc = 0.0;
        for &tau in vals.iter() {
            if tau < -1e-10 / self.sigma2 || tau * self.sigma2 > 1.0 + 1e-6 {
                return Err(RateError::TOutOfRange);
            }
            let mu = (1.0 - self.sigma2 * tau).max(T_BOUNDARY_EPS);
            acc -= mu.ln() / LN2;
        }
        Ok(acc)
    }

    /// Exact evaluation: affine part plus the kept-convex log-det term.
    pub fn eval(&self, t: &CMat) -> Result<f64, RateError> {
        let k = self.coefficient();
        let affine = self.constant + (k * t).trace().re / LN2;
        Ok(affine + self.convex_term(t)?)
    }
}

/// Fronthaul rate of BS `n` (bits per sample) at design `(r, q_n)`.
pub fn rate_d(
    scenario: &Scenario,
    samples: &SampleSet,
    r: &[CMat],
    n: usize,
    q_n: &CMat,
) -> Result<f64, RateError> {
    RateContext::new(scenario, samples, r, n).rate(q_n)
}

/// Rate of BS `n` in the T parameterization.
pub fn rate_d_t(
    scenario: &Scenario,
    samples: &SampleSet,
    r: &[CMat],
    n: usize,
    t_n: &CMat,
) -> Result<f64, RateError> {
    RateContext::new(scenario, samples, r, n).rate_t(t_n)
}

/// Affine-in-R upper bound on the rate of BS `n`, expanded at `r_tilde`.
pub fn surrogate_dhat(
    scenario: &Scenario,
    samples: &SampleSet,
    r: &[CMat],
    r_tilde: &[CMat],
    n: usize,
    q_n: &CMat,
) -> Result<f64, RateError> {
    let ctx = RateContext::new(scenario, samples, r_tilde, n);
    let sigma_bar: Vec<CMat> = ctx
        .j
        .iter()
        .map(|jm| {
            let mut sb = jm + hermitize(q_n);
            for i in 0..sb.nrows() {
                sb[(i, i)] += Complex64::new(ctx.sigma2, 0.0);
            }
            sb
        })
        .collect();
    let sur = ctx.surrogate_r(&sigma_bar, q_n)?;
    Ok(sur.eval(scenario, samples, n, r, q_n))
}

/// Upper bound on the T-form rate of BS `n`, expanded at `t_bar`
/// (the convex log-det term is kept exact).
pub fn surrogate_dtilde(
    scenario: &Scenario,
    samples: &SampleSet,
    r_bar: &[CMat],
    n: usize,
    t_bar: &CMat,
    t: &CMat,
) -> Result<f64, RateError> {
    let ctx = RateContext::new(scenario, samples, r_bar, n);
    let o_bar = t_to_o(t_bar, ctx.sigma2)?;
    ctx.surrogate_t(t_bar, &o_bar)?.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fim::scaled_identity;
    use crate::linalg::random_hermitian_psd;
    use crate::scenario::{GaussianPrior, ScenarioConfig};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario() -> Scenario {
        Scenario::from_config(&ScenarioConfig {
            bs_positions: vec![[0.8, 0.0], [-0.8, 0.0]],
            targets: vec![
                GaussianPrior { center: [0.4, 0.8], radius: 0.03 },
                GaussianPrior { center: [-0.1, 0.7], radius: 0.048 },
            ],
            mt: 3,
            mr: 3,
            wavelength_m: 0.1,
            noise_psd_dbm_hz: -169.0,
            bandwidth_hz: 1e6,
            power_dbm: vec![31.0, 31.0],
            fronthaul_bits: vec![8.0, 8.0],
            mc_samples: 4,
            seed: 10,
            rcs_m2: 1.0,
        })
        .unwrap()
    }

    /// Lift the echo power into the same ballpark as the noise so the
    /// rate tests exercise a nontrivial J (the agreement and surrogate
    /// properties themselves are scale-free).
    fn boosted_scenario() -> Scenario {
        let mut scn = scenario();
        for n in 0..2 {
            for u in 0..2 {
                for k in 0..2 {
                    scn.attenuation[n][u][k] *= Complex64::new(2e3, 0.0);
                }
            }
        }
        scn
    }

    fn random_r(scn: &Scenario, rng: &mut ChaCha8Rng) -> Vec<CMat> {
        (0..scn.num_bs()).map(|_| random_hermitian_psd(rng, scn.mt, scn.power_w[0])).collect()
    }

    #[test]
    fn zero_signal_identity_q_gives_mr_bits() {
        let scn = scenario();
        let samples = scn.sample_set().unwrap();
        let r0 = vec![CMat::zeros(scn.mt, scn.mt); 2];
        let q = scaled_identity(scn.mr, scn.noise_power);
        let rate = rate_d(&scn, &samples, &r0, 0, &q).unwrap();
        assert_relative_eq!(rate, scn.mr as f64, max_relative = 1e-12);
        // T = (2 sigma^2)^-1 I matches the same point through the T form
        let t = scaled_identity(scn.mr, 1.0 / (2.0 * scn.noise_power));
        let rate_t = rate_d_t(&scn, &samples, &r0, 0, &t).unwrap();
        assert_relative_eq!(rate_t, scn.mr as f64, max_relative = 1e-10);
    }

    #[test]
    fn rate_monotonicity_sweeps() {
        let scn = boosted_scenario();
        let samples = scn.sample_set().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_r(&scn, &mut rng);
        // strictly decreasing in Q along Q = t I
        let mut last = f64::INFINITY;
        for i in 0..8 {
            let q = scaled_identity(scn.mr, scn.noise_power * 10f64.powi(i - 3));
            let rate = rate_d(&scn, &samples, &r, 0, &q).unwrap();
            assert!(rate < last);
            last = rate;
        }
        // nondecreasing in R along R = t I
        let q = scaled_identity(scn.mr, scn.noise_power);
        let mut last = -1.0;
        for i in 0..6 {
            let rs = vec![scaled_identity(scn.mt, scn.power_w[0] * 10f64.powi(i)); 2];
            let rate = rate_d(&scn, &samples, &rs, 0, &q).unwrap();
            assert!(rate >= last - 1e-12);
            last = rate;
        }
        // increasing in T along T = t I
        let mut last = -1.0;
        for i in 1..8 {
            let t = scaled_identity(scn.mr, 0.999 * i as f64 / (8.0 * scn.noise_power));
            let rate = rate_d_t(&scn, &samples, &r, 0, &t).unwrap();
            assert!(rate > last);
            last = rate;
        }
    }

    #[test]
    fn q_and_t_forms_agree() {
        let scn = boosted_scenario();
        let samples = scn.sample_set().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let r = random_r(&scn, &mut rng);
            let q = {
                let mut q = random_hermitian_psd(&mut rng, scn.mr, scn.noise_power);
                for i in 0..scn.mr {
                    q[(i, i)] += Complex64::new(0.1 * scn.noise_power, 0.0);
                }
                q
            };
            let mut o = q.clone();
            for i in 0..scn.mr {
                o[(i, i)] += Complex64::new(scn.noise_power, 0.0);
            }
            let t = crate::linalg::inv_hermitian_pd(&o).unwrap();
            let via_q = rate_d(&scn, &samples, &r, 1, &q).unwrap();
            let via_t = rate_d_t(&scn, &samples, &r, 1, &t).unwrap();
            assert!((via_q - via_t).abs() <= 1e-9 * via_q.abs().max(1.0));
        }
    }

    #[test]
    fn rate_nonnegative() {
        let scn = boosted_scenario();
        let samples = scn.sample_set().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let r = random_r(&scn, &mut rng);
            let mut q = random_hermitian_psd(&mut rng, scn.mr, scn.noise_power);
            for i in 0..scn.mr {
                q[(i, i)] += Complex64::new(1e-3 * scn.noise_power, 0.0);
            }
            assert!(rate_d(&scn, &samples, &r, 0, &q).unwrap() >= 0.0);
        }
    }

    #[test]
    fn singular_q_is_an_error() {
        let scn = scenario();
        let samples = scn.sample_set().unwrap();
        let r0 = vec![CMat::zeros(scn.mt, scn.mt); 2];
        let mut q = CMat::zeros(scn.mr, scn.mr);
        q[(0, 0)] = Complex64::new(-1.0 * scn.noise_power, 0.0);
        assert!(rate_d(&scn, &samples, &r0, 0, &q).is_err());
    }

    #[test]
    fn surrogate_r_tangent_and_majorizing() {
        let scn = boosted_scenario();
        let samples = scn.sample_set().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..50 {
            let r_tilde = random_r(&scn, &mut rng);
            let q = {
                let mut q = random_hermitian_psd(&mut rng, scn.mr, scn.noise_power);
                for i in 0..scn.mr {
                    q[(i, i)] += Complex64::new(0.2 * scn.noise_power, 0.0);
                }
                q
            };
            let n = trial % 2;
            let at_tilde = surrogate_dhat(&scn, &samples, &r_tilde, &r_tilde, n, &q).unwrap();
            let truth = rate_d(&scn, &samples, &r_tilde, n, &q).unwrap();
            assert!((at_tilde - truth).abs() <= 1e-9 * truth.max(1.0), "tangency trial {trial}");
            let r_other = random_r(&scn, &mut rng);
            let sur = surrogate_dhat(&scn, &samples, &r_other, &r_tilde, n, &q).unwrap();
            let truth_other = rate_d(&scn, &samples, &r_other, n, &q).unwrap();
            assert!(
                sur >= truth_other - 1e-9 * truth_other.max(1.0),
                "majorization trial {trial}"
            );
        }
    }

    #[test]
    fn surrogate_r_gradient_matches_finite_difference() {
        let scn = boosted_scenario();
        let samples = scn.sample_set().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r_tilde = random_r(&scn, &mut rng);
        let q = scaled_identity(scn.mr, scn.noise_power);
        let n = 0;
        // directional derivatives along random Hermitian directions must
        // match the true rate's at the expansion point
        for _ in 0..5 {
            let dir = random_hermitian_psd(&mut rng, scn.mt, scn.power_w[0] * 0.1);
            let h = 1e-6;
            let mut rp = r_tilde.clone();
            rp[1] = &rp[1] + &dir * Complex64::new(h, 0.0);
            let mut rm = r_tilde.clone();
            rm[1] = &rm[1] - &dir * Complex64::new(h, 0.0);
            let fd = (rate_d(&scn, &samples, &rp, n, &q).unwrap()
                - rate_d(&scn, &samples, &rm, n, &q).unwrap())
                / (2.0 * h);
            let sd = (surrogate_dhat(&scn, &samples, &rp, &r_tilde, n, &q).unwrap()
                - surrogate_dhat(&scn, &samples, &rm, &r_tilde, n, &q).unwrap())
                / (2.0 * h);
            assert!((fd - sd).abs() <= 1e-5 * fd.abs().max(1e-12));
        }
    }

    #[test]
    fn surrogate_t_tangent_majorizing_gradient() {
        let scn = boosted_scenario();
        let samples = scn.sample_set().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r_bar = random_r(&scn, &mut rng);
        let s2 = scn.noise_power;
        let rand_t = |rng: &mut ChaCha8Rng| {
            // random T strictly inside (0, sigma^-2 I)
            let g = random_hermitian_psd(rng, scn.mr, 1.0);
            let (vals, vecs) = herm_eigen(&g);
            let mut d = CMat::zeros(scn.mr, scn.mr);
            for i in 0..scn.mr {
                let frac = 0.05 + 0.9 * (vals[i] / vals[scn.mr - 1]).clamp(0.0, 1.0);
                d[(i, i)] = Complex64::new(frac / s2, 0.0);
            }
            hermitize(&(&vecs * d * vecs.adjoint()))
        };
        for trial in 0..50 {
            let n = trial % 2;
            let t_bar = rand_t(&mut rng);
            let truth = rate_d_t(&scn, &samples, &r_bar, n, &t_bar).unwrap();
            let sur = surrogate_dtilde(&scn, &samples, &r_bar, n, &t_bar, &t_bar).unwrap();
            assert!((sur - truth).abs() <= 1e-9 * truth.max(1.0), "tangency trial {trial}");
            let t = rand_t(&mut rng);
            let sur = surrogate_dtilde(&scn, &samples, &r_bar, n, &t_bar, &t).unwrap();
            let truth = rate_d_t(&scn, &samples, &r_bar, n, &t).unwrap();
            assert!(sur >= truth - 1e-9 * truth.max(1.0), "majorization trial {trial}");
        }
        // gradient check at the expansion point
        let t_bar = rand_t(&mut rng);
        let dir = random_hermitian_psd(&mut rng, scn.mr, 0.01 / s2);
        let h = 1e-4 * s2; // scaled so T stays interior
        let tp = &t_bar + &dir * Complex64::new(h, 0.0);
        let tm = &t_bar - &dir * Complex64::new(h, 0.0);
        let fd = (rate_d_t(&scn, &samples, &r_bar, 0, &tp).unwrap()
            - rate_d_t(&scn, &samples, &r_bar, 0, &tm).unwrap())
            / (2.0 * h);
        let sd = (surrogate_dtilde(&scn, &samples, &r_bar, 0, &t_bar, &tp).unwrap()
            - surrogate_dtilde(&scn, &samples, &r_bar, 0, &t_bar, &tm).unwrap())
            / (2.0 * h);
        assert!((fd - sd).abs() <= 1e-4 * fd.abs().max(1e-9));
    }

    #[test]
    fn t_boundary_clamp_flags() {
        let s2 = 1.0;
        // tau at sigma^-2 exactly: Q would be singular, clamp instead
        let t = scaled_identity(3, 1.0);
        let (q, clamped) = t_to_q(&t, s2).unwrap();
        assert!(clamped);
        assert!(q[(0, 0)].re > 0.0);
        // tau far above the bound is an error
        let t = scaled_identity(3, 2.0);
        assert!(t_to_q(&t, s2).is_err());
    }
}
