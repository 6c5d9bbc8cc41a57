//! Independent brute-force verifiers.
//!
//! Three code paths compute the same information matrices in this crate:
//! the production block assembly in [`crate::fim`], the elementwise
//! quadratic forms here, and the finite-difference path here. The latter
//! two exist only to check the first and deliberately share none of its
//! Hadamard/block machinery: the elementwise path evaluates scalar
//! quadratic forms one entry at a time, and the finite-difference path
//! differentiates the mean map numerically.
//!
//! A small exhaustive grid searcher covers the one- and two-degree-of-
//! freedom mini problems used to sanity-check the SCA optimizers.

use num_complex::Complex64;

use crate::fim::FimDims;
use crate::linalg::{psd_sqrt, CMat, CVec, RMat};
use crate::scenario::{channel_matrix, steering, SampleGeometry, SampleSet, Scenario};

/// Step sizes for the central-difference mean-map derivatives.
#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    /// Step for angle parameters (rad).
    pub angle_step: f64,
    /// Step for attenuation parameters (absolute; the mean map is linear
    /// in b so any step is exact up to rounding).
    pub b_step: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { angle_step: 1e-6, b_step: 1e-6 }
    }
}

/// Flattened copy of the zeta parameters for one sample.
#[derive(Clone)]
struct ZetaPoint {
    theta: Vec<Vec<f64>>,            // [n][k]
    b: Vec<Vec<Vec<Complex64>>>,     // [n][u][k]
}

impl ZetaPoint {
    fn of(scenario: &Scenario, geom: &SampleGeometry) -> Self {
        ZetaPoint { theta: geom.theta.clone(), b: scenario.attenuation.clone() }
    }

    fn perturbed(&self, dims: FimDims, idx: usize, step: f64) -> (Self, f64) {
        let mut out = self.clone();
        let t = dims.theta_len();
        let bl = dims.b_len();
        if idx < t {
            let (n, k) = (idx / dims.n_targets, idx % dims.n_targets);
            out.theta[n][k] += step;
        } else if idx < t + bl {
            let j = idx - t;
            let (nu, k) = (j / dims.n_targets, j % dims.n_targets);
            let (n, u) = (nu / dims.n_bs, nu % dims.n_bs);
            out.b[n][u][k] += Complex64::new(step, 0.0);
        } else {
            let j = idx - t - bl;
            let (nu, k) = (j / dims.n_targets, j % dims.n_targets);
            let (n, u) = (nu / dims.n_bs, nu % dims.n_bs);
            out.b[n][u][k] += Complex64::new(0.0, step);
        }
        (out, step)
    }
}

/// Mean map realized at covariance level: for each receive BS m, transmit
/// BS v and basis index p, the component `G_{m,v}(zeta) R_v^{1/2} e_p`.
/// Summing outer products over (v, p) reproduces the covariance-level
/// expectation, so the FIM assembled from these components equals the one
/// for random transmit signals with covariance R_v.
fn mean_components(
    scenario: &Scenario,
    z: &ZetaPoint,
    sqrt_r: &[CMat],
) -> Vec<Vec<Vec<CVec>>> {
    let n = scenario.num_bs();
    let mt = scenario.mt;
    // steering matrices at the perturbed angles
    let mut a = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for ni in 0..n {
        let mut an = CMat::zeros(scenario.mr, scenario.num_targets());
        let mut vn = CMat::zeros(scenario.mt, scenario.num_targets());
        for ki in 0..scenario.num_targets() {
            an.set_column(ki, &steering(z.theta[ni][ki], scenario.mr));
            vn.set_column(ki, &steering(z.theta[ni][ki], scenario.mt));
        }
        a.push(an);
        v.push(vn);
    }
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        let mut per_v = Vec::with_capacity(n);
        for vi in 0..n {
            let g = channel_matrix(&a[m], &z.b[m][vi], &v[vi]);
            let mut per_p = Vec::with_capacity(mt);
            for p in 0..mt {
                per_p.push(&g * sqrt_r[vi].column(p));
            }
            per_v.push(per_p);
        }
        out.push(per_v);
    }
    out
}

/// Finite-difference information matrix over zeta:
/// `F(i,j) = 2 Re sum_m sum_{v,p} d_i^H O_m^{-1} d_j` with `d_i` the
/// central difference of the mean components w.r.t. zeta_i.
pub fn fim_finite_difference(
    scenario: &Scenario,
    geom: &SampleGeometry,
    r: &[CMat],
    oinv: &[CMat],
    cfg: FdConfig,
) -> RMat {
    let dims = FimDims::of(scenario);
    let d = dims.zeta_len();
    let sqrt_r: Vec<CMat> = r.iter().map(psd_sqrt).collect();
    let base = ZetaPoint::of(scenario, geom);
    // derivative components per zeta index
    let mut derivs: Vec<Vec<Vec<Vec<CVec>>>> = Vec::with_capacity(d);
    for i in 0..d {
        let step = if i < dims.theta_len() { cfg.angle_step } else { cfg.b_step };
        let (zp, h) = base.perturbed(dims, i, step);
        let (zm, _) = base.perturbed(dims, i, -step);
        let fp = mean_components(scenario, &zp, &sqrt_r);
        let fm = mean_components(scenario, &zm, &sqrt_r);
        let mut di = fp;
        for m in 0..scenario.num_bs() {
            for v in 0..scenario.num_bs() {
                for p in 0..scenario.mt {
                    di[m][v][p] = (&di[m][v][p] - &fm[m][v][p]) / Complex64::new(2.0 * h, 0.0);
                }
            }
        }
        derivs.push(di);
    }
    let mut f = RMat::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut acc = Complex64::default();
            for m in 0..scenario.num_bs() {
                for v in 0..scenario.num_bs() {
                    for p in 0..scenario.mt {
                        let od = &oinv[m] * &derivs[j][m][v][p];
                        acc += derivs[i][m][v][p].dotc(&od);
                    }
                }
            }
            f[(i, j)] = 2.0 * acc.re;
            f[(j, i)] = f[(i, j)];
        }
    }
    f
}

/// Scalar quadratic form `(col_k of X)^T R conj(col_i of Y)`, evaluated
/// literally.
fn tquad(x: &CMat, k: usize, r: &CMat, y: &CMat, i: usize) -> Complex64 {
    let xk = x.column(k);
    let yi = y.column(i);
    let mut acc = Complex64::default();
    for p in 0..r.nrows() {
        for q in 0..r.ncols() {
            acc += xk[p] * r[(p, q)] * yi[q].conj();
        }
    }
    acc
}

/// Scalar Gram entry `(col_i of X)^H Oinv (col_k of Y)`.
fn gquad(x: &CMat, i: usize, oinv: &CMat, y: &CMat, k: usize) -> Complex64 {
    let xi = x.column(i);
    let yk = y.column(k);
    let mut acc = Complex64::default();
    for p in 0..oinv.nrows() {
        for q in 0..oinv.ncols() {
            acc += xi[p].conj() * oinv[(p, q)] * yk[q];
        }
    }
    acc
}

/// Elementwise evaluation of the three complex information blocks from
/// the per-element quadratic-form expressions. Independent of the block
/// assembly in [`crate::fim`].
pub fn fim_elementwise(
    scenario: &Scenario,
    geom: &SampleGeometry,
    r: &[CMat],
    oinv: &[CMat],
) -> (CMat, CMat, CMat) {
    let dims = FimDims::of(scenario);
    let (n, k) = (dims.n_bs, dims.n_targets);
    let b = &scenario.attenuation;
    let a = &geom.a;
    let ad = &geom.a_dot;
    let v = &geom.v;
    let vd = &geom.v_dot;

    let mut f1 = CMat::zeros(n * k, n * k);
    for bn in 0..n {
        for bu in 0..n {
            for i in 0..k {
                for c in 0..k {
                    let val = if bn == bu {
                        let mut t = Complex64::default();
                        // angle-angle via Adot on both sides, all transmitters
                        for vb in 0..n {
                            t += b[bn][vb][i].conj()
                                * b[bn][vb][c]
                                * gquad(&ad[bn], i, &oinv[bn], &ad[bn], c)
                                * tquad(&v[vb], c, &r[vb], &v[vb], i);
                        }
                        // cross terms at the own BS
                        t += b[bn][bn][i].conj()
                            * b[bn][bn][c]
                            * gquad(&ad[bn], i, &oinv[bn], &a[bn], c)
                            * tquad(&vd[bn], c, &r[bn], &v[bn], i);
                        t += b[bn][bn][i].conj()
                            * b[bn][bn][c]
                            * gquad(&a[bn], i, &oinv[bn], &ad[bn], c)
                            * tquad(&v[bn], c, &r[bn], &vd[bn], i);
                        // Vdot on both sides, observed by every receive BS
                        for m in 0..n {
                            t += b[m][bn][i].conj()
                                * b[m][bn][c]
                                * gquad(&a[m], i, &oinv[m], &a[m], c)
                                * tquad(&vd[bn], c, &r[bn], &vd[bn], i);
                        }
                        t
                    } else {
                        b[bn][bu][i].conj()
                            * b[bn][bu][c]
                            * gquad(&ad[bn], i, &oinv[bn], &a[bn], c)
                            * tquad(&vd[bu], c, &r[bu], &v[bu], i)
                            + b[bu][bn][i].conj()
                                * b[bu][bn][c]
                                * gquad(&a[bu], i, &oinv[bu], &ad[bu], c)
                                * tquad(&v[bn], c, &r[bn], &vd[bn], i)
                    };
                    f1[(bn * k + i, bu * k + c)] = val;
                }
            }
        }
    }

    let mut f2 = CMat::zeros(n * k, n * n * k);
    for tn in 0..n {
        for bn in 0..n {
            for bu in 0..n {
                for i in 0..k {
                    for c in 0..k {
                        let mut val = Complex64::default();
                        if tn == bn {
                            val += b[tn][bu][i].conj()
                                * gquad(&ad[tn], i, &oinv[tn], &a[tn], c)
                                * tquad(&v[bu], c, &r[bu], &v[bu], i);
                            if bu == tn {
                                val += b[tn][tn][i].conj()
                                    * gquad(&a[tn], i, &oinv[tn], &a[tn], c)
                                    * tquad(&v[tn], c, &r[tn], &vd[tn], i);
                            }
                        } else if bu == tn {
                            val += b[bn][tn][i].conj()
                                * gquad(&a[bn], i, &oinv[bn], &a[bn], c)
                                * tquad(&v[tn], c, &r[tn], &vd[tn], i);
                        }
                        f2[(tn * k + i, (bn * n + bu) * k + c)] = val;
                    }
                }
            }
        }
    }

    let mut f3 = CMat::zeros(n * n * k, n * n * k);
    for bn in 0..n {
        for bu in 0..n {
            for i in 0..k {
                for c in 0..k {
                    f3[((bn * n + bu) * k + i, (bn * n + bu) * k + c)] =
                        gquad(&a[bn], i, &oinv[bn], &a[bn], c)
                            * tquad(&v[bu], c, &r[bu], &v[bu], i);
                }
            }
        }
    }

    (f1, f2, f3)
}

/// Outcome of an exhaustive grid search.
#[derive(Debug, Clone)]
pub struct GridResult {
    pub objective: f64,
    /// Best transmit covariance (transmit problem) or best scalar q
    /// wrapped in a 1x1 matrix (compression problem).
    pub argmin: CMat,
}

/// Exhaustive search over 2x2 Hermitian PSD transmit covariances for the
/// single-BS single-target problem, parameterized by power back-off
/// gamma, trace split f, off-diagonal magnitude fraction rho, and
/// off-diagonal phase phi:
///
/// ```text
/// R = [f*g*P,            rho*sqrt(r11 r22) e^{j phi};
///      conj(...),        (1-f)*g*P]
/// ```
///
/// A coarse pass over the full box is followed by three zoom rounds
/// around the incumbent so the optimum is located well inside 1%.
pub fn grid_transmit_mini(
    scenario: &Scenario,
    samples: &SampleSet,
    qbar: &CMat,
    dbar: Option<f64>,
    steps: usize,
) -> crate::Result<GridResult> {
    assert_eq!(scenario.mt, 2, "transmit grid oracle is for Mt = 2");
    assert_eq!(scenario.num_bs(), 1);
    let pbar = scenario.power_w[0];
    let two_pi = 2.0 * std::f64::consts::PI;
    let eval = |g: f64, f: f64, rho: f64, phi: f64| -> crate::Result<Option<(f64, CMat)>> {
        let p = g * pbar;
        let r11 = f * p;
        let r22 = (1.0 - f) * p;
        let r12 = Complex64::from_polar(rho * (r11 * r22).sqrt(), phi);
        let rmat = CMat::from_row_slice(
            2,
            2,
            &[Complex64::new(r11, 0.0), r12, r12.conj(), Complex64::new(r22, 0.0)],
        );
        if let Some(cap) = dbar {
            let rate = crate::fronthaul::rate_d(scenario, samples, &[rmat.clone()], 0, qbar)?;
            if rate > cap {
                return Ok(None);
            }
        }
        let fmat = crate::fim::pfim(scenario, samples, &[rmat.clone()], &[qbar.clone()])?;
        Ok(Some((crate::fim::pcrb(&fmat, 1)?, rmat)))
    };
    // parameter box: (gamma, f, rho, phi)
    let mut center = [1.0, 0.5, 0.5, std::f64::consts::PI];
    let mut width = [if dbar.is_some() { 1.0 } else { 0.0 }, 1.0, 1.0, two_pi];
    let mut best: (f64, CMat, [f64; 4]) = (f64::INFINITY, CMat::zeros(2, 2), center);
    for round in 0..4 {
        let n = if round == 0 { steps } else { 10 };
        let axis_points = |c: f64, w: f64, lo: f64, hi: f64| -> Vec<f64> {
            if w == 0.0 {
                return vec![c];
            }
            (0..=n)
                .map(|i| (c - w / 2.0 + w * i as f64 / n as f64).clamp(lo, hi))
                .collect()
        };
        let gs = axis_points(center[0], width[0], 1e-6, 1.0);
        let fs = axis_points(center[1], width[1], 0.0, 1.0);
        let rhos = axis_points(center[2], width[2], 0.0, 1.0);
        let phis = axis_points(center[3], width[3], 0.0, two_pi);
        for &g in &gs {
            for &f in &fs {
                for &rho in &rhos {
                    for &phi in &phis {
                        if let Some((val, rmat)) = eval(g, f, rho, phi)? {
                            if val < best.0 {
                                best = (val, rmat, [g, f, rho, phi]);
                            }
                        }
                    }
                }
            }
        }
        center = best.2;
        for w in width.iter_mut() {
            *w *= 0.2;
        }
    }
    Ok(GridResult { objective: best.0, argmin: best.1 })
}

/// Exhaustive log-spaced search over the scalar compression noise power
/// for the Mr = 1 problem, subject to the fronthaul cap.
pub fn grid_compress_mini(
    scenario: &Scenario,
    samples: &SampleSet,
    rbar: &[CMat],
    dbar: f64,
    steps: usize,
) -> crate::Result<GridResult> {
    assert_eq!(scenario.mr, 1, "compression grid oracle is for Mr = 1");
    let s2 = scenario.noise_power;
    let mut best = (f64::INFINITY, CMat::zeros(1, 1));
    for i in 0..=steps {
        // q in [1e-8, 1e10] * sigma^2, log-spaced
        let expo = -8.0 + 18.0 * i as f64 / steps as f64;
        let q = s2 * 10f64.powf(expo);
        let qmat = CMat::from_element(1, 1, Complex64::new(q, 0.0));
        let qs: Vec<CMat> = (0..scenario.num_bs()).map(|_| qmat.clone()).collect();
        let mut feasible = true;
        for n in 0..scenario.num_bs() {
            if crate::fronthaul::rate_d(scenario, samples, rbar, n, &qmat)? > dbar {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let fmat = crate::fim::pfim(scenario, samples, rbar, &qs)?;
        let val = crate::fim::pcrb(&fmat, scenario.num_targets())?;
        if val < best.0 {
            best = (val, qmat);
        }
    }
    Ok(GridResult { objective: best.0, argmin: best.1 })
}
