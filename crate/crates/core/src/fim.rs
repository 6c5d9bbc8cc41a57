//! Fisher information assembly and PCRB evaluation.
//!
//! The estimated parameter vector is `xi = [q; b_R; b_I]` (target positions
//! plus real/imaginary attenuation parts). The information in the
//! de-quantized signals is first expressed over `zeta = [theta; b_R; b_I]`
//! (angles instead of positions) through three complex block matrices
//! F1 (angle-angle), F2 (angle-attenuation) and F3 (attenuation-
//! attenuation), then mapped to `xi` with the chain-rule Jacobian and
//! averaged over the Monte-Carlo sample set. Adding the prior information
//! gives the posterior FIM; the PCRB is the trace of its inverse restricted
//! to the position coordinates.
//!
//! Block builders work in complex arithmetic; the factor 2 and the
//! real/imaginary layout are applied once at assembly.

use num_complex::Complex64;

use crate::linalg::{hermitize, inv_hermitian_pd, sym_eigen, symmetrize, CMat, RMat};
use crate::scenario::{SampleGeometry, SampleSet, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum FimError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("noise shape O = sigma^2 I + Q is not positive definite")]
    NoiseShapeNotPd,
    #[error("singular posterior FIM")]
    SingularFim,
}

/// Problem dimensions and the index layout of `zeta` and `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FimDims {
    /// Number of BSs (N).
    pub n_bs: usize,
    /// Number of targets (K).
    pub n_targets: usize,
}

impl FimDims {
    pub fn of(scenario: &Scenario) -> Self {
        FimDims { n_bs: scenario.num_bs(), n_targets: scenario.num_targets() }
    }

    /// NK angle parameters.
    pub fn theta_len(&self) -> usize {
        self.n_bs * self.n_targets
    }

    /// N^2 K attenuation coefficients (per real/imag part).
    pub fn b_len(&self) -> usize {
        self.n_bs * self.n_bs * self.n_targets
    }

    /// dim(zeta) = NK + 2 N^2 K.
    pub fn zeta_len(&self) -> usize {
        self.theta_len() + 2 * self.b_len()
    }

    /// dim(xi) = 2K + 2 N^2 K.
    pub fn xi_len(&self) -> usize {
        2 * self.n_targets + 2 * self.b_len()
    }

    /// Index of theta_{n,k} inside the angle block.
    pub fn idx_theta(&self, n: usize, k: usize) -> usize {
        n * self.n_targets + k
    }

    /// Index of b_{n,u,k} inside one attenuation block (receive BS n
    /// outer, transmit BS u inner, target k fastest).
    pub fn idx_b(&self, n: usize, u: usize, k: usize) -> usize {
        (n * self.n_bs + u) * self.n_targets + k
    }
}

/// Per-sample ingredients of the Proposition-style blocks: the receive
/// Gram matrices through `O^{-1}` and the transmit quadratic forms
/// through `R^*`. Both the full-dimension and the beamformed (EBC) paths
/// reduce to this structure.
pub(crate) struct SampleFimInputs {
    /// aa[m] = Aeff_m^H Oinv_m Aeff_m, K x K.
    pub aa: Vec<CMat>,
    /// ada[m] = Aeff_m^H Oinv_m Adot_eff_m.
    pub ada: Vec<CMat>,
    /// daa[m] = Adot_eff_m^H Oinv_m Aeff_m.
    pub daa: Vec<CMat>,
    /// dada[m] = Adot_eff_m^H Oinv_m Adot_eff_m.
    pub dada: Vec<CMat>,
    /// vv[u] = V_u^H R_u^* V_u, K x K.
    pub vv: Vec<CMat>,
    /// dvv[u] = Vdot_u^H R_u^* V_u.
    pub dvv: Vec<CMat>,
    /// vdv[u] = V_u^H R_u^* Vdot_u.
    pub vdv: Vec<CMat>,
    /// dvdv[u] = Vdot_u^H R_u^* Vdot_u.
    pub dvdv: Vec<CMat>,
}

impl SampleFimInputs {
    /// Standard receive side: Aeff = A, noise shape O = sigma^2 I + Q.
    pub(crate) fn standard(geom: &SampleGeometry, r: &[CMat], oinv: &[CMat]) -> Self {
        Self::with_receive(geom, r, &geom.a, &geom.a_dot, oinv)
    }

    /// Beamformed receive side: Aeff = C^H A, with the reduced noise shape
    /// inverse supplied by the caller.
    pub(crate) fn beamformed(
        geom: &SampleGeometry,
        r: &[CMat],
        c: &[CMat],
        oinv_eff: &[CMat],
    ) -> Self {
        let a_eff: Vec<CMat> = geom.a.iter().zip(c).map(|(a, cn)| cn.adjoint() * a).collect();
        let ad_eff: Vec<CMat> =
            geom.a_dot.iter().zip(c).map(|(a, cn)| cn.adjoint() * a).collect();
        Self::with_receive(geom, r, &a_eff, &ad_eff, oinv_eff)
    }

    fn with_receive(
        geom: &SampleGeometry,
        r: &[CMat],
        a_eff: &[CMat],
        ad_eff: &[CMat],
        oinv: &[CMat],
    ) -> Self {
        Self::from_grams(recv_grams(a_eff, ad_eff, oinv), tx_grams(geom, r))
    }

    pub(crate) fn from_grams(recv: RecvGrams, tx: TxGrams) -> Self {
        SampleFimInputs {
            aa: recv.aa,
            ada: recv.ada,
            daa: recv.daa,
            dada: recv.dada,
            vv: tx.vv,
            dvv: tx.dvv,
            vdv: tx.vdv,
            dvdv: tx.dvdv,
        }
    }
}

/// Receive-side Gram matrices through `O^{-1}` (per BS, K x K).
#[derive(Clone)]
pub(crate) struct RecvGrams {
    pub aa: Vec<CMat>,
    pub ada: Vec<CMat>,
    pub daa: Vec<CMat>,
    pub dada: Vec<CMat>,
}

/// Transmit-side quadratic forms through `R^*` (per BS, K x K).
#[derive(Clone)]
pub(crate) struct TxGrams {
    pub vv: Vec<CMat>,
    pub dvv: Vec<CMat>,
    pub vdv: Vec<CMat>,
    pub dvdv: Vec<CMat>,
}

pub(crate) fn recv_grams(a_eff: &[CMat], ad_eff: &[CMat], oinv: &[CMat]) -> RecvGrams {
    let n = a_eff.len();
    let mut aa = Vec::with_capacity(n);
    let mut ada = Vec::with_capacity(n);
    let mut daa = Vec::with_capacity(n);
    let mut dada = Vec::with_capacity(n);
    for m in 0..n {
        let oa = &oinv[m] * &a_eff[m];
        let oad = &oinv[m] * &ad_eff[m];
        aa.push(a_eff[m].adjoint() * &oa);
        ada.push(a_eff[m].adjoint() * &oad);
        daa.push(ad_eff[m].adjoint() * &oa);
        dada.push(ad_eff[m].adjoint() * &oad);
    }
    RecvGrams { aa, ada, daa, dada }
}

pub(crate) fn tx_grams(geom: &SampleGeometry, r: &[CMat]) -> TxGrams {
    let n = r.len();
    let mut vv = Vec::with_capacity(n);
    let mut dvv = Vec::with_capacity(n);
    let mut vdv = Vec::with_capacity(n);
    let mut dvdv = Vec::with_capacity(n);
    for m in 0..n {
        let rc = r[m].conjugate();
        let rv = &rc * &geom.v[m];
        let rvd = &rc * &geom.v_dot[m];
        vv.push(geom.v[m].adjoint() * &rv);
        dvv.push(geom.v_dot[m].adjoint() * &rv);
        vdv.push(geom.v[m].adjoint() * &rvd);
        dvdv.push(geom.v_dot[m].adjoint() * &rvd);
    }
    TxGrams { vv, dvv, vdv, dvdv }
}

/// `diag(bl)^* M diag(br)`: entry (a,c) = conj(bl[a]) * M[a,c] * br[c].
fn sandwich(bl: &[Complex64], m: &CMat, br: &[Complex64]) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |a, c| bl[a].conj() * m[(a, c)] * br[c])
}

/// `diag(bl)^* M`: entry (a,c) = conj(bl[a]) * M[a,c].
fn left_sandwich(bl: &[Complex64], m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |a, c| bl[a].conj() * m[(a, c)])
}

fn check_shapes(
    dims: FimDims,
    scenario: &Scenario,
    r: &[CMat],
    o_like: &[CMat],
    o_dim: usize,
) -> Result<(), FimError> {
    if r.len() != dims.n_bs || o_like.len() != dims.n_bs {
        return Err(FimError::Shape(format!(
            "expected {} per-BS matrices, got R: {}, O-side: {}",
            dims.n_bs,
            r.len(),
            o_like.len()
        )));
    }
    for (idx, rm) in r.iter().enumerate() {
        if rm.nrows() != scenario.mt || rm.ncols() != scenario.mt {
            return Err(FimError::Shape(format!(
                "R[{idx}] is {}x{}, expected {}x{}",
                rm.nrows(),
                rm.ncols(),
                scenario.mt,
                scenario.mt
            )));
        }
    }
    for (idx, om) in o_like.iter().enumerate() {
        if om.nrows() != o_dim || om.ncols() != o_dim {
            return Err(FimError::Shape(format!(
                "O-side[{idx}] is {}x{}, expected {}x{}",
                om.nrows(),
                om.ncols(),
                o_dim,
                o_dim
            )));
        }
    }
    Ok(())
}

pub(crate) fn f1_from_inputs(
    dims: FimDims,
    b: &[Vec<Vec<Complex64>>],
    inp: &SampleFimInputs,
) -> CMat {
    let (n, k) = (dims.n_bs, dims.n_targets);
    let mut f1 = CMat::zeros(n * k, n * k);
    for i in 0..n {
        for nn in 0..n {
            let mut block = CMat::zeros(k, k);
            if i == nn {
                for u in 0..n {
                    block += inp.aa[u].component_mul(&sandwich(&b[u][i], &inp.dvdv[i], &b[u][i]));
                    block += inp.dada[i].component_mul(&sandwich(&b[i][u], &inp.vv[u], &b[i][u]));
                }
                block += inp.ada[i].component_mul(&sandwich(&b[i][i], &inp.dvv[i], &b[i][i]));
                block += inp.daa[i].component_mul(&sandwich(&b[i][i], &inp.vdv[i], &b[i][i]));
            } else {
                block += inp.daa[i].component_mul(&sandwich(&b[i][nn], &inp.vdv[nn], &b[i][nn]));
                block += inp.ada[nn].component_mul(&sandwich(&b[nn][i], &inp.dvv[i], &b[nn][i]));
            }
            f1.view_mut((i * k, nn * k), (k, k)).copy_from(&block);
        }
    }
    f1
}

pub(crate) fn f2_from_inputs(
    dims: FimDims,
    b: &[Vec<Vec<Complex64>>],
    inp: &SampleFimInputs,
) -> CMat {
    let (n, k) = (dims.n_bs, dims.n_targets);
    let mut f2 = CMat::zeros(n * k, n * n * k);
    for i in 0..n {
        for bn in 0..n {
            for bu in 0..n {
                let col = (bn * n + bu) * k;
                if i == bn && i == bu {
                    let block = inp.daa[i].component_mul(&left_sandwich(&b[i][i], &inp.vv[i]))
                        + inp.aa[i].component_mul(&left_sandwich(&b[i][i], &inp.dvv[i]));
                    f2.view_mut((i * k, col), (k, k)).copy_from(&block);
                } else if i == bn {
                    let block = inp.daa[i].component_mul(&left_sandwich(&b[i][bu], &inp.vv[bu]));
                    f2.view_mut((i * k, col), (k, k)).copy_from(&block);
                } else if i == bu {
                    let block = inp.aa[bn].component_mul(&left_sandwich(&b[bn][i], &inp.dvv[i]));
                    f2.view_mut((i * k, col), (k, k)).copy_from(&block);
                }
                // remaining (i != bn, i != bu) blocks stay exactly zero
            }
        }
    }
    f2
}

pub(crate) fn f3_from_inputs(
    dims: FimDims,
    _b: &[Vec<Vec<Complex64>>],
    inp: &SampleFimInputs,
) -> CMat {
    let (n, k) = (dims.n_bs, dims.n_targets);
    let mut f3 = CMat::zeros(n * n * k, n * n * k);
    for bn in 0..n {
        for bu in 0..n {
            let at = (bn * n + bu) * k;
            let block = inp.aa[bn].component_mul(&inp.vv[bu]);
            f3.view_mut((at, at), (k, k)).copy_from(&block);
        }
    }
    f3
}

/// Angle-angle information block F1 (NK x NK).
pub fn block_f1(
    scenario: &Scenario,
    geom: &SampleGeometry,
    r: &[CMat],
    oinv: &[CMat],
) -> Result<CMat, FimError> {
    let dims = FimDims::of(scenario);
    check_shapes(dims, scenario, r, oinv, scenario.mr)?;
    let inp = SampleFimInputs::standard(geom, r, oinv);
    Ok(f1_from_inputs(dims, &scenario.attenuation, &inp))
}

/// Angle-attenuation information block F2 (NK x N^2 K). Blocks whose
/// angle BS differs from both attenuation BSs are exactly zero.
pub fn block_f2(
    scenario: &Scenario,
    geom: &SampleGeometry,
    r: &[CMat],
    oinv: &[CMat],
) -> Result<CMat, FimError> {
    let dims = FimDims::of(scenario);
    check_shapes(dims, scenario, r, oinv, scenario.mr)?;
    let inp = SampleFimInputs::standard(geom, r, oinv);
    Ok(f2_from_inputs(dims, &scenario.attenuation, &inp))
}

/// Attenuation-attenuation information block F3 (N^2 K x N^2 K); only the
/// per-(receive BS, transmit BS) diagonal blocks are nonzero.
pub fn block_f3(
    scenario: &Scenario,
    geom: &SampleGeometry,
    r: &[CMat],
    oinv: &[CMat],
) -> Result<CMat, FimError> {
    let dims = FimDims::of(scenario);
    check_shapes(dims, scenario, r, oinv, scenario.mr)?;
    let inp = SampleFimInputs::standard(geom, r, oinv);
    Ok(f3_from_inputs(dims, &scenario.attenuation, &inp))
}

/// Assemble the real information matrix over `zeta` from the complex
/// blocks:
///
/// ```text
/// F0_zeta = 2 [  Re F1    Re F2   -Im F2 ;
///               Re F2^T   Re F3   -Im F3 ;
///              -Im F2^T  -Im F3^T  Re F3 ]
/// ```
///
/// The lower triangle is mirrored from the upper one so the result is
/// exactly symmetric.
pub fn assemble_f0_zeta(f1: &CMat, f2: &CMat, f3: &CMat) -> Result<RMat, FimError> {
    let t = f1.nrows();
    let b = f3.nrows();
    if f1.ncols() != t || f2.nrows() != t || f2.ncols() != b || f3.ncols() != b {
        return Err(FimError::Shape(format!(
            "inconsistent block dims: F1 {}x{}, F2 {}x{}, F3 {}x{}",
            f1.nrows(),
            f1.ncols(),
            f2.nrows(),
            f2.ncols(),
            f3.nrows(),
            f3.ncols()
        )));
    }
    let f1h = hermitize(f1);
    let f3h = hermitize(f3);
    let d = t + 2 * b;
    let mut out = RMat::zeros(d, d);
    for i in 0..t {
        for j in 0..t {
            out[(i, j)] = 2.0 * f1h[(i, j)].re;
        }
        for j in 0..b {
            out[(i, t + j)] = 2.0 * f2[(i, j)].re;
            out[(i, t + b + j)] = -2.0 * f2[(i, j)].im;
        }
    }
    for i in 0..b {
        for j in 0..b {
            out[(t + i, t + j)] = 2.0 * f3h[(i, j)].re;
            out[(t + i, t + b + j)] = -2.0 * f3h[(i, j)].im;
            out[(t + b + i, t + b + j)] = 2.0 * f3h[(i, j)].re;
        }
    }
    // mirror the strict lower triangle from the upper one
    for i in 0..d {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    Ok(out)
}

/// Chain-rule Jacobian U arranged so that `F0_xi = U F0_zeta U^T`: the
/// angle columns carry the per-target position Jacobians and both
/// attenuation blocks carry identities.
pub fn chain_rule_u(dims: FimDims, geom: &SampleGeometry) -> RMat {
    let (xi, zeta) = (dims.xi_len(), dims.zeta_len());
    let t = dims.theta_len();
    let k2 = 2 * dims.n_targets;
    let mut u = RMat::zeros(xi, zeta);
    for n in 0..dims.n_bs {
        for k in 0..dims.n_targets {
            let col = dims.idx_theta(n, k);
            u[(2 * k, col)] = geom.jac[n][k].x;
            u[(2 * k + 1, col)] = geom.jac[n][k].y;
        }
    }
    for j in 0..2 * dims.b_len() {
        u[(k2 + j, t + j)] = 1.0;
    }
    u
}

/// Prior information: block-diagonal `r_k^{-2} I_2` on the position
/// coordinates, zero elsewhere (the attenuation has no prior).
pub fn prior_fim(scenario: &Scenario) -> RMat {
    let dims = FimDims::of(scenario);
    let mut fp = RMat::zeros(dims.xi_len(), dims.xi_len());
    for (k, prior) in scenario.priors.iter().enumerate() {
        let w = 1.0 / (prior.radius * prior.radius);
        fp[(2 * k, 2 * k)] = w;
        fp[(2 * k + 1, 2 * k + 1)] = w;
    }
    fp
}

/// Noise-shape inverses `(sigma^2 I + Q_n)^{-1}`.
pub fn noise_shape_inverses(scenario: &Scenario, q: &[CMat]) -> Result<Vec<CMat>, FimError> {
    q.iter()
        .map(|qn| {
            let mut o = hermitize(qn);
            for i in 0..o.nrows() {
                o[(i, i)] += Complex64::new(scenario.noise_power, 0.0);
            }
            inv_hermitian_pd(&o).ok_or(FimError::NoiseShapeNotPd)
        })
        .collect()
}

/// Data information over `xi` for one sample: `U F0_zeta U^T`.
pub(crate) fn sample_f0_xi(
    dims: FimDims,
    b: &[Vec<Vec<Complex64>>],
    geom: &SampleGeometry,
    inp: &SampleFimInputs,
) -> Result<RMat, FimError> {
    let f1 = f1_from_inputs(dims, b, inp);
    let f2 = f2_from_inputs(dims, b, inp);
    let f3 = f3_from_inputs(dims, b, inp);
    let f0z = assemble_f0_zeta(&f1, &f2, &f3)?;
    let u = chain_rule_u(dims, geom);
    Ok(&u * f0z * u.transpose())
}

/// Posterior FIM: sample average of `U F0_zeta U^T` plus the prior FIM.
pub fn pfim(
    scenario: &Scenario,
    samples: &SampleSet,
    r: &[CMat],
    q: &[CMat],
) -> Result<RMat, FimError> {
    let dims = FimDims::of(scenario);
    check_shapes(dims, scenario, r, q, scenario.mr)?;
    let oinv = noise_shape_inverses(scenario, q)?;
    let mut acc = RMat::zeros(dims.xi_len(), dims.xi_len());
    for geom in &samples.samples {
        let inp = SampleFimInputs::standard(geom, r, &oinv);
        acc += sample_f0_xi(dims, &scenario.attenuation, geom, &inp)?;
    }
    acc /= samples.len() as f64;
    acc += prior_fim(scenario);
    Ok(symmetrize(&acc))
}

/// PCRB: sum of the first 2K diagonal entries of the inverse PFIM.
///
/// The attenuation blocks can sit many orders of magnitude above the
/// position blocks, so the matrix is Jacobi-scaled (`D F D`,
/// `D = diag(F_ii^{-1/2})`) before factorization; the wanted diagonal
/// entries transform back exactly.
pub fn pcrb(pfim: &RMat, n_targets: usize) -> Result<f64, FimError> {
    let d = pfim.nrows();
    let mut scale = vec![0.0; d];
    for i in 0..d {
        let fii = pfim[(i, i)];
        if !(fii > 0.0) || !fii.is_finite() {
            return Err(FimError::SingularFim);
        }
        scale[i] = 1.0 / fii.sqrt();
    }
    let scaled = RMat::from_fn(d, d, |i, j| pfim[(i, j)] * scale[i] * scale[j]);
    let chol = nalgebra::Cholesky::new(symmetrize(&scaled)).ok_or(FimError::SingularFim)?;
    let inv = chol.inverse();
    Ok((0..2 * n_targets).map(|i| inv[(i, i)] * scale[i] * scale[i]).sum())
}

/// PCRB with an eigenvalue pseudo-inverse fallback for near-singular
/// matrices; the flag reports whether the fallback was used.
pub fn pcrb_with_fallback(pfim: &RMat, n_targets: usize) -> (f64, bool) {
    if let Ok(v) = pcrb(pfim, n_targets) {
        return (v, false);
    }
    let (vals, vecs) = sym_eigen(pfim);
    let vmax = vals[vals.len() - 1].max(0.0);
    let floor = vmax * 1e-14;
    let mut acc = 0.0;
    for i in 0..2 * n_targets {
        let mut s = 0.0;
        for (j, &lam) in vals.iter().enumerate() {
            if lam > floor {
                s += vecs[(i, j)] * vecs[(i, j)] / lam;
            }
        }
        acc += s;
    }
    (acc, true)
}

/// Everything the Fisher-information pipeline produces for one design
/// point, retained per sample for inspection and tests.
pub struct FimBundle {
    pub dims: FimDims,
    /// Per-sample complex blocks.
    pub f1: Vec<CMat>,
    pub f2: Vec<CMat>,
    pub f3: Vec<CMat>,
    /// Per-sample real information over zeta.
    pub f0_zeta: Vec<RMat>,
    /// Per-sample chain-rule Jacobians.
    pub u: Vec<RMat>,
    /// Sample-averaged information over xi.
    pub f0_xi: RMat,
    /// Prior information.
    pub prior: RMat,
    /// Total posterior FIM.
    pub total: RMat,
}

impl FimBundle {
    pub fn compute(
        scenario: &Scenario,
        samples: &SampleSet,
        r: &[CMat],
        q: &[CMat],
    ) -> Result<Self, FimError> {
        let dims = FimDims::of(scenario);
        check_shapes(dims, scenario, r, q, scenario.mr)?;
        let oinv = noise_shape_inverses(scenario, q)?;
        let mut f1v = Vec::new();
        let mut f2v = Vec::new();
        let mut f3v = Vec::new();
        let mut f0zv = Vec::new();
        let mut uv = Vec::new();
        let mut f0_xi = RMat::zeros(dims.xi_len(), dims.xi_len());
        for geom in &samples.samples {
            let inp = SampleFimInputs::standard(geom, r, &oinv);
            let f1 = f1_from_inputs(dims, &scenario.attenuation, &inp);
            let f2 = f2_from_inputs(dims, &scenario.attenuation, &inp);
            let f3 = f3_from_inputs(dims, &scenario.attenuation, &inp);
            let f0z = assemble_f0_zeta(&f1, &f2, &f3)?;
            let u = chain_rule_u(dims, geom);
            f0_xi += &u * &f0z * u.transpose();
            f1v.push(f1);
            f2v.push(f2);
            f3v.push(f3);
            f0zv.push(f0z);
            uv.push(u);
        }
        f0_xi /= samples.len() as f64;
        let prior = prior_fim(scenario);
        let total = symmetrize(&(&f0_xi + &prior));
        Ok(FimBundle { dims, f1: f1v, f2: f2v, f3: f3v, f0_zeta: f0zv, u: uv, f0_xi, prior, total })
    }
}

/// Write a real matrix as CSV (one row per line) for debugging.
pub fn write_matrix_csv<W: std::io::Write>(w: &mut W, m: &RMat) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn zero_q(scenario: &Scenario) -> Vec<CMat> {
    vec![CMat::zeros(scenario.mr, scenario.mr); scenario.num_bs()]
}

pub fn scaled_identity(dim: usize, s: f64) -> CMat {
    CMat::from_diagonal_element(dim, dim, Complex64::new(s, 0.0))
}
