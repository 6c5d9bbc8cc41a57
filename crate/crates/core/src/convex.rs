//! Declarative builder for the semidefinite subproblems and the conic
//! solver backend.
//!
//! Variables are complex Hermitian PSD matrices (embedded for the solver
//! as real symmetric matrices of doubled dimension, `[X_R, -X_I; X_I,
//! X_R]`) plus real scalars. Constraints are real-symmetric LMIs (the
//! Schur-complement blocks), Hermitian PSD constraints on affine matrix
//! expressions, and linear rows. The objective is linear.
//!
//! Problems are lowered to the standard conic form `min q'x` s.t.
//! `Ax + s = b, s in K` and handed to Clarabel. A built problem can be
//! cloned and extended; the SCA compression loop adds cutting planes
//! that way.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use num_complex::Complex64;

use crate::linalg::{hermitize, CMat, RMat};

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("builder: {0}")]
    Builder(String),
    #[error("subproblem infeasible")]
    Infeasible,
    #[error("subproblem unbounded (dual infeasible)")]
    Unbounded,
    #[error("numerical failure in solver: {0}")]
    Numerical(String),
}

/// Solver tolerances; `PCRB_SOLVER_TOL` overrides the relative gap from
/// the environment.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol_gap_rel: 1e-7, tol_feas: 1e-8, max_iter: 200, verbose: false }
    }
}

impl SolverConfig {
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var("PCRB_SOLVER_TOL") {
            if let Ok(tol) = v.parse::<f64>() {
                cfg.tol_gap_rel = tol;
            }
        }
        cfg
    }
}

/// Handle to a Hermitian matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatVar(usize);

/// Handle to a scalar variable (index into the solver's x vector).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarVar(pub usize);

/// Affine real-symmetric matrix expression `constant + sum_j x_j * terms_j`.
#[derive(Debug, Clone)]
pub struct SymExpr {
    pub dim: usize,
    pub constant: RMat,
    /// (x index, dense symmetric coefficient).
    pub terms: Vec<(usize, RMat)>,
}

/// Affine complex Hermitian expression with sparse coefficient triplets.
/// Triplet lists must be Hermitian-complete: for every off-diagonal entry
/// (p, q, z) the counterpart (q, p, conj z) is present too.
#[derive(Debug, Clone)]
pub struct HermExpr {
    pub dim: usize,
    pub constant: Vec<(usize, usize, Complex64)>,
    pub terms: Vec<(usize, Vec<(usize, usize, Complex64)>)>,
}

impl HermExpr {
    pub fn identity(dim: usize, scale: f64) -> Self {
        HermExpr {
            dim,
            constant: (0..dim).map(|i| (i, i, Complex64::new(scale, 0.0))).collect(),
            terms: Vec::new(),
        }
    }

    pub fn from_matrix(m: &CMat) -> Self {
        let dim = m.nrows();
        let mut constant = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                if m[(i, j)].norm() > 0.0 {
                    constant.push((i, j, m[(i, j)]));
                }
            }
        }
        HermExpr { dim, constant, terms: Vec::new() }
    }

    /// Add `scale * X` for a matrix variable.
    pub fn add_var(&mut self, problem: &SdpProblem, var: MatVar, scale: f64) {
        let (offset, dim) = problem.mat_vars[var.0];
        assert_eq!(dim, self.dim, "variable dimension mismatch");
        for p in 0..hermitian_param_count(dim) {
            let trips = hermitian_basis_triplets(dim, p)
                .into_iter()
                .map(|(i, j, z)| (i, j, z * scale))
                .collect();
            self.terms.push((offset + p, trips));
        }
    }
}

/// Number of real parameters of a Hermitian dim x dim matrix.
pub fn hermitian_param_count(dim: usize) -> usize {
    dim * dim
}

/// Sparse triplets of the `p`-th Hermitian basis matrix. Layout: the
/// `dim` diagonal entries first, then (re, im) pairs for the upper
/// triangle in column-major order.
pub fn hermitian_basis_triplets(dim: usize, p: usize) -> Vec<(usize, usize, Complex64)> {
    if p < dim {
        return vec![(p, p, Complex64::new(1.0, 0.0))];
    }
    let mut idx = p - dim;
    for j in 1..dim {
        for i in 0..j {
            if idx == 0 {
                return vec![(i, j, Complex64::new(1.0, 0.0)), (j, i, Complex64::new(1.0, 0.0))];
            }
            if idx == 1 {
                return vec![(i, j, Complex64::new(0.0, 1.0)), (j, i, Complex64::new(0.0, -1.0))];
            }
            idx -= 2;
        }
    }
    panic!("hermitian basis index {p} out of range for dim {dim}");
}

/// Reconstruct a Hermitian matrix from its parameter slice.
pub fn hermitian_from_params(dim: usize, params: &[f64]) -> CMat {
    let mut out = CMat::zeros(dim, dim);
    for (p, &v) in params.iter().enumerate() {
        for (i, j, z) in hermitian_basis_triplets(dim, p) {
            out[(i, j)] += z * v;
        }
    }
    out
}

/// Parameters of a Hermitian matrix (inverse of [`hermitian_from_params`]).
pub fn params_from_hermitian(m: &CMat) -> Vec<f64> {
    let dim = m.nrows();
    let mut out = Vec::with_capacity(hermitian_param_count(dim));
    for i in 0..dim {
        out.push(m[(i, i)].re);
    }
    for j in 1..dim {
        for i in 0..j {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

#[derive(Clone)]
enum Block {
    /// Real PSD cone over svec of a `dim x dim` symmetric matrix.
    Psd { dim: usize, trips: Vec<(usize, usize, f64)>, rhs: Vec<f64> },
}

/// Declarative conic problem.
#[derive(Default, Clone)]
pub struct SdpProblem {
    nvars: usize,
    obj: Vec<(usize, f64)>,
    /// (offset into x, complex dimension) per Hermitian variable.
    mat_vars: Vec<(usize, usize)>,
    eq_trips: Vec<(usize, usize, f64)>,
    eq_rhs: Vec<f64>,
    ineq_trips: Vec<(usize, usize, f64)>,
    ineq_rhs: Vec<f64>,
    blocks: Vec<Block>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    /// Declare a Hermitian PSD matrix variable (adds the PSD cone on its
    /// real embedding).
    pub fn hermitian_var(&mut self, dim: usize) -> MatVar {
        let var = self.hermitian_var_unconstrained(dim);
        let mut expr = HermExpr { dim, constant: Vec::new(), terms: Vec::new() };
        expr.add_var(self, var, 1.0);
        self.add_herm_psd(&expr);
        var
    }

    /// Declare the parameters of a Hermitian matrix variable without the
    /// PSD constraint.
    pub fn hermitian_var_unconstrained(&mut self, dim: usize) -> MatVar {
        let offset = self.nvars;
        self.nvars += hermitian_param_count(dim);
        self.mat_vars.push((offset, dim));
        MatVar(self.mat_vars.len() - 1)
    }

    pub fn scalar_var(&mut self) -> ScalarVar {
        self.nvars += 1;
        ScalarVar(self.nvars - 1)
    }

    /// Constrain a scalar variable to be nonnegative.
    pub fn nonneg(&mut self, v: ScalarVar) {
        self.add_linear_le(&[(v.0, -1.0)], 0.0);
    }

    pub fn mat_var_span(&self, var: MatVar) -> (usize, usize) {
        self.mat_vars[var.0]
    }

    pub fn set_objective(&mut self, terms: &[(ScalarVar, f64)]) {
        self.obj = terms.iter().map(|(v, c)| (v.0, *c)).collect();
    }

    /// `sum coeff_i x_i <= rhs`.
    pub fn add_linear_le(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        let row = self.ineq_rhs.len();
        for &(c, v) in coeffs {
            self.ineq_trips.push((row, c, v));
        }
        self.ineq_rhs.push(rhs);
    }

    /// `sum coeff_i x_i = rhs`.
    pub fn add_linear_eq(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        let row = self.eq_rhs.len();
        for &(c, v) in coeffs {
            self.eq_trips.push((row, c, v));
        }
        self.eq_rhs.push(rhs);
    }

    /// Trace of a matrix variable as linear coefficients (for power
    /// constraints and trace objectives).
    pub fn trace_coeffs(&self, var: MatVar) -> Vec<(usize, f64)> {
        let (offset, dim) = self.mat_vars[var.0];
        (0..dim).map(|i| (offset + i, 1.0)).collect()
    }

    /// Real-symmetric LMI `expr(x) >= 0`.
    pub fn add_sym_lmi(&mut self, expr: &SymExpr) {
        let d = expr.dim;
        let mut rhs = vec![0.0; svec_len(d)];
        for i in 0..d {
            for j in i..d {
                rhs[svec_index(i, j)] = expr.constant[(i, j)] * svec_scale(i, j);
            }
        }
        let mut trips = Vec::new();
        for (x_idx, coef) in &expr.terms {
            for i in 0..d {
                for j in i..d {
                    let v = coef[(i, j)];
                    if v != 0.0 {
                        // s = b - Ax, so A carries the negated coefficient
                        trips.push((svec_index(i, j), *x_idx, -v * svec_scale(i, j)));
                    }
                }
            }
        }
        self.blocks.push(Block::Psd { dim: d, trips, rhs });
    }

    /// Hermitian PSD constraint `expr(x) >= 0` via the real embedding.
    pub fn add_herm_psd(&mut self, expr: &HermExpr) {
        let d = 2 * expr.dim;
        let mut rhs = vec![0.0; svec_len(d)];
        for &(p, q, z) in &expr.constant {
            for (i, j, v) in embed_upper_entries(expr.dim, p, q, z) {
                rhs[svec_index(i, j)] += v * svec_scale(i, j);
            }
        }
        let mut trips = Vec::new();
        for (x_idx, ctrips) in &expr.terms {
            for &(p, q, z) in ctrips {
                for (i, j, v) in embed_upper_entries(expr.dim, p, q, z) {
                    trips.push((svec_index(i, j), *x_idx, -v * svec_scale(i, j)));
                }
            }
        }
        self.blocks.push(Block::Psd { dim: d, trips, rhs });
    }

    /// Lower to Clarabel data: (A, b, cones, q).
    fn assemble(&self) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>, Vec<f64>) {
        let n_eq = self.eq_rhs.len();
        let n_ineq = self.ineq_rhs.len();
        let mut rows = n_eq + n_ineq;
        let mut cones = Vec::new();
        if n_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }
        if n_ineq > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_ineq));
        }
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::with_capacity(rows);
        trips.extend(self.eq_trips.iter().copied());
        b.extend(self.eq_rhs.iter().copied());
        trips.extend(self.ineq_trips.iter().map(|&(r, c, v)| (n_eq + r, c, v)));
        b.extend(self.ineq_rhs.iter().copied());
        for block in &self.blocks {
            match block {
                Block::Psd { dim, trips: bt, rhs } => {
                    trips.extend(bt.iter().map(|&(r, c, v)| (rows + r, c, v)));
                    b.extend(rhs.iter().copied());
                    cones.push(SupportedConeT::PSDTriangleConeT(*dim));
                    rows += rhs.len();
                }
            }
        }
        // sorted triplets with duplicates summed -> CSC
        trips.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut colcount = vec![0usize; self.nvars];
        let mut rowval: Vec<usize> = Vec::with_capacity(trips.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &trips {
            if last == Some((c, r)) {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                colcount[c] += 1;
                last = Some((c, r));
            }
        }
        let mut colptr = vec![0usize; self.nvars + 1];
        for c in 0..self.nvars {
            colptr[c + 1] = colptr[c] + colcount[c];
        }
        let a = CscMatrix::new(rows, self.nvars, colptr, rowval, nzval);
        let mut q = vec![0.0; self.nvars];
        for &(c, v) in &self.obj {
            q[c] += v;
        }
        (a, b, cones, q)
    }

    /// Solve with Clarabel. Infeasibility and numerical failures are
    /// surfaced as errors; max-iterations returns a flagged report.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<SolverReport, SolveError> {
        let (a, b, cones, q) = self.assemble();
        let p = CscMatrix::<f64>::zeros((self.nvars, self.nvars));
        let settings = DefaultSettings {
            verbose: cfg.verbose,
            max_iter: cfg.max_iter,
            tol_gap_rel: cfg.tol_gap_rel,
            tol_feas: cfg.tol_feas,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| SolveError::Builder(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIter,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(SolveError::Infeasible)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return Err(SolveError::Unbounded)
            }
            s => return Err(SolveError::Numerical(format!("{s:?}"))),
        };
        let matrices = self
            .mat_vars
            .iter()
            .map(|&(offset, dim)| {
                hermitize(&hermitian_from_params(dim, &sol.x[offset..offset + dim * dim]))
            })
            .collect();
        Ok(SolverReport {
            status,
            objective: sol.obj_val,
            x: sol.x.clone(),
            matrices,
            iterations: sol.iterations as usize,
            solve_time: sol.solve_time,
            r_prim: sol.r_prim,
            r_dual: sol.r_dual,
        })
    }

    /// Text dump of the lowered conic problem (dims, objective, cone
    /// list, b, and A as row/col/value triplets) for external checks.
    pub fn dump_conic<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let (a, b, cones, q) = self.assemble();
        writeln!(w, "# conic problem: min q'x  s.t.  A x + s = b, s in K")?;
        writeln!(w, "nvars {}", self.nvars)?;
        writeln!(w, "nrows {}", b.len())?;
        write!(w, "q")?;
        for v in &q {
            write!(w, " {v:.17e}")?;
        }
        writeln!(w)?;
        writeln!(w, "cones {}", cones.len())?;
        for c in &cones {
            match c {
                SupportedConeT::ZeroConeT(d) => writeln!(w, "zero {d}")?,
                SupportedConeT::NonnegativeConeT(d) => writeln!(w, "nonneg {d}")?,
                SupportedConeT::PSDTriangleConeT(d) => writeln!(w, "psd_triangle {d}")?,
                _ => writeln!(w, "other")?,
            }
        }
        write!(w, "b")?;
        for v in &b {
            write!(w, " {v:.17e}")?;
        }
        writeln!(w)?;
        writeln!(w, "A_triplets {}", a.nzval.len())?;
        for col in 0..a.n {
            for idx in a.colptr[col]..a.colptr[col + 1] {
                writeln!(w, "{} {} {:.17e}", a.rowval[idx], col, a.nzval[idx])?;
            }
        }
        Ok(())
    }
}

/// svec length of a d x d symmetric matrix.
pub fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Column-major upper-triangle index used by the PSD triangle cone.
pub fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

/// Off-diagonal entries are scaled by sqrt(2) in the triangle cone.
pub fn svec_scale(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        std::f64::consts::SQRT_2
    }
}

/// Upper-triangle entries of the real embedding contributed by one
/// complex triplet (p, q, z) of a Hermitian-complete list. The real
/// blocks take their upper entries from the p <= q triplets; the
/// imaginary block sits entirely in the embedding's upper-right
/// quadrant, so every triplet contributes its `-Im` entry there.
fn embed_upper_entries(dim: usize, p: usize, q: usize, z: Complex64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(3);
    if p <= q {
        out.push((p, q, z.re));
        out.push((p + dim, q + dim, z.re));
    }
    if z.im != 0.0 || p != q {
        out.push((p, q + dim, -z.im));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    AlmostOptimal,
    MaxIter,
}

/// Solver outcome: status, objective, primal values, and residuals.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Hermitian matrix variables, symmetrized, in declaration order.
    pub matrices: Vec<CMat>,
    pub iterations: usize,
    pub solve_time: f64,
    pub r_prim: f64,
    pub r_dual: f64,
}

impl SolverReport {
    pub fn matrix(&self, var: MatVar) -> &CMat {
        &self.matrices[var.0]
    }

    pub fn scalar(&self, var: ScalarVar) -> f64 {
        self.x[var.0]
    }
}

/// Add the 2K Schur-complement LMIs `[F(x), e_i; e_i^T, t_i] >= 0` that
/// lower the PCRB objective into the auxiliary scalars `t`.
///
/// `fim` must be an affine real-symmetric expression of the active
/// variables; a non-symmetric constant or coefficient is a builder error.
///
/// `jacobi`, when given, preconditions each LMI by the congruence
/// `diag(jacobi, 1)`: the F block becomes `D F D` and the border becomes
/// `jacobi_i e_i`, which leaves the implied bound `t_i >= [F^{-1}]_ii`
/// exactly unchanged while collapsing the dynamic range inside the cone
/// (the solver equilibrates whole cones, not entries).
pub fn add_schur_pcrb_lmis(
    problem: &mut SdpProblem,
    fim: &SymExpr,
    ts: &[ScalarVar],
    jacobi: Option<&[f64]>,
) -> Result<(), SolveError> {
    let d = fim.dim;
    let sym_ok = |m: &RMat| -> bool {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
                scale = scale.max(m[(i, j)].abs());
            }
        }
        worst <= 1e-9 * scale.max(1e-300)
    };
    if !sym_ok(&fim.constant) || fim.terms.iter().any(|(_, m)| !sym_ok(m)) {
        return Err(SolveError::Builder("FIM expression is not symmetric".into()));
    }
    if let Some(j) = jacobi {
        if j.len() != d || j.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SolveError::Builder("invalid Jacobi scale for the Schur LMIs".into()));
        }
    }
    let scale_at = |i: usize| jacobi.map_or(1.0, |j| j[i]);
    let rescale = |m: &RMat| -> RMat {
        RMat::from_fn(d, d, |i, j| m[(i, j)] * scale_at(i) * scale_at(j))
    };
    for (i, t) in ts.iter().enumerate() {
        let mut constant = RMat::zeros(d + 1, d + 1);
        constant.view_mut((0, 0), (d, d)).copy_from(&rescale(&fim.constant));
        constant[(i, d)] = scale_at(i);
        constant[(d, i)] = scale_at(i);
        let mut terms: Vec<(usize, RMat)> = fim
            .terms
            .iter()
            .map(|(x_idx, coef)| {
                let mut big = RMat::zeros(d + 1, d + 1);
                big.view_mut((0, 0), (d, d)).copy_from(&rescale(coef));
                (*x_idx, big)
            })
            .collect();
        let mut tmat = RMat::zeros(d + 1, d + 1);
        tmat[(d, d)] = 1.0;
        terms.push((t.0, tmat));
        problem.add_sym_lmi(&SymExpr { dim: d + 1, constant, terms });
    }
    Ok(())
}

/// Jacobi scale vector `1/sqrt(diag F(x))` for an affine FIM expression
/// evaluated at the expansion point's parameters.
pub fn jacobi_scale_at(fim: &SymExpr, x: &[f64]) -> Vec<f64> {
    let d = fim.dim;
    let mut diag = vec![0.0; d];
    for i in 0..d {
        diag[i] = fim.constant[(i, i)];
    }
    for (idx, coef) in &fim.terms {
        let xv = x.get(*idx).copied().unwrap_or(0.0);
        if xv != 0.0 {
            for i in 0..d {
                diag[i] += xv * coef[(i, i)];
            }
        }
    }
    let dmax = diag.iter().cloned().fold(1e-300, f64::max);
    diag.iter().map(|&v| 1.0 / v.max(1e-12 * dmax).sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{min_eig_herm, random_hermitian_psd};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn min_trace_over_shifted_identity() {
        // min tr(R) s.t. R >= I  ->  R = I, objective = dim
        let dim = 3;
        let mut p = SdpProblem::new();
        let r = p.hermitian_var(dim);
        let mut expr = HermExpr::identity(dim, -1.0);
        expr.add_var(&p, r, 1.0);
        p.add_herm_psd(&expr);
        let t = p.scalar_var();
        let mut coeffs = p.trace_coeffs(r);
        coeffs.push((t.0, -1.0));
        p.add_linear_eq(&coeffs, 0.0);
        p.set_objective(&[(t, 1.0)]);
        let rep = p.solve(&SolverConfig::default()).unwrap();
        assert_relative_eq!(rep.objective, dim as f64, max_relative = 1e-6);
        let rm = rep.matrix(r);
        for i in 0..dim {
            for j in 0..dim {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((rm[(i, j)].re - want).abs() < 1e-5);
                assert!(rm[(i, j)].im.abs() < 1e-5);
            }
        }
    }

    #[test]
    fn complex_embedding_recovers_min_eigenvalue() {
        // min t s.t. X + t I >= 0 with X fixed Hermitian -> t = -lambda_min
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 4;
        let mut x = random_hermitian_psd(&mut rng, dim, 1.0);
        for i in 0..dim {
            x[(i, i)] -= Complex64::new(0.7, 0.0);
        }
        let lam_min = min_eig_herm(&x);
        let mut p = SdpProblem::new();
        let t = p.scalar_var();
        let mut expr = HermExpr::from_matrix(&x);
        for i in 0..dim {
            expr.terms.push((t.0, vec![(i, i, Complex64::new(1.0, 0.0))]));
        }
        p.add_herm_psd(&expr);
        p.set_objective(&[(t, 1.0)]);
        let rep = p.solve(&SolverConfig::default()).unwrap();
        assert_relative_eq!(rep.objective, -lam_min, max_relative = 1e-5);
    }

    fn schur_trace_problem(f: &RMat, n_t: usize) -> (SdpProblem, Vec<ScalarVar>) {
        let mut p = SdpProblem::new();
        let ts: Vec<ScalarVar> = (0..n_t).map(|_| p.scalar_var()).collect();
        for t in &ts {
            p.nonneg(*t);
        }
        let fim = SymExpr { dim: f.nrows(), constant: f.clone(), terms: Vec::new() };
        add_schur_pcrb_lmis(&mut p, &fim, &ts, None).unwrap();
        let obj: Vec<(ScalarVar, f64)> = ts.iter().map(|t| (*t, 1.0)).collect();
        p.set_objective(&obj);
        (p, ts)
    }

    #[test]
    fn schur_lmis_reproduce_inverse_diagonal() {
        // fixed diagonal F: optimal t_i = 1 / F_ii
        let d = 5;
        let mut f = RMat::zeros(d, d);
        for i in 0..d {
            f[(i, i)] = (i + 1) as f64;
        }
        let (p, ts) = schur_trace_problem(&f, 4);
        let rep = p.solve(&SolverConfig::default()).unwrap();
        for (i, t) in ts.iter().enumerate() {
            assert_relative_eq!(rep.scalar(*t), 1.0 / (i + 1) as f64, max_relative = 1e-5);
        }

        // random PD F: sum t = sum of leading inverse diagonal entries
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..10 {
            let dim = 6;
            let mut fz = random_hermitian_psd(&mut rng, dim, 1.0);
            for i in 0..dim {
                fz[(i, i)] += Complex64::new(0.5, 0.0);
            }
            let f = crate::linalg::symmetrize(&RMat::from_fn(dim, dim, |i, j| fz[(i, j)].re));
            let inv = nalgebra::Cholesky::new(f.clone()).unwrap().inverse();
            let want: f64 = (0..4).map(|i| inv[(i, i)]).sum();
            let (p, _) = schur_trace_problem(&f, 4);
            let rep = p.solve(&SolverConfig::default()).unwrap();
            assert!(
                (rep.objective - want).abs() <= 1e-5 * want,
                "trial {trial}: got {} want {want}",
                rep.objective
            );
        }
    }

    #[test]
    fn zero_row_makes_schur_infeasible() {
        let d = 4;
        let mut f = RMat::zeros(d, d);
        for i in 1..d {
            f[(i, i)] = 1.0;
        }
        // row/col 0 zero: e_0 not in range(F). The LMI set is empty but
        // only weakly so (violations vanish as t -> infinity), so the
        // solver either certifies infeasibility or runs t off to
        // infinity without reaching optimality.
        let (p, ts) = schur_trace_problem(&f, 2);
        match p.solve(&SolverConfig::default()) {
            Err(SolveError::Infeasible) | Err(SolveError::Unbounded) => {}
            Ok(rep) => {
                assert!(
                    rep.status != SolveStatus::Optimal || rep.scalar(ts[0]) > 1e6,
                    "expected infeasible or unbounded t, got {rep:?}"
                );
            }
            Err(e) => panic!("unexpected solver error: {e}"),
        }
    }

    #[test]
    fn resolve_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dim = 5;
        let mut fz = random_hermitian_psd(&mut rng, dim, 1.0);
        for i in 0..dim {
            fz[(i, i)] += Complex64::new(0.3, 0.0);
        }
        let f = crate::linalg::symmetrize(&RMat::from_fn(dim, dim, |i, j| fz[(i, j)].re));
        let (p, _) = schur_trace_problem(&f, 3);
        let a = p.solve(&SolverConfig::default()).unwrap();
        let b = p.solve(&SolverConfig::default()).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-9 * a.objective.abs().max(1.0));
    }

    #[test]
    fn returned_matrices_are_nearly_psd() {
        let dim = 3;
        let mut p = SdpProblem::new();
        let r = p.hermitian_var(dim);
        let t = p.scalar_var();
        let mut coeffs = p.trace_coeffs(r);
        coeffs.push((t.0, -1.0));
        p.add_linear_eq(&coeffs, 0.0);
        // keep R away from zero: R >= 0.5 I
        let mut expr = HermExpr::identity(dim, -0.5);
        expr.add_var(&p, r, 1.0);
        p.add_herm_psd(&expr);
        p.set_objective(&[(t, 1.0)]);
        let rep = p.solve(&SolverConfig::default()).unwrap();
        let rm = rep.matrix(r);
        let trace = rm.trace().re;
        assert!(min_eig_herm(rm) >= -1e-8 * trace.max(1e-300));
    }

    #[test]
    fn params_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_hermitian_psd(&mut rng, 4, 1.0);
        let params = params_from_hermitian(&m);
        let back = hermitian_from_params(4, &params);
        assert!(crate::linalg::rel_frob_c(&m, &back) < 1e-14);
    }

    #[test]
    fn dump_conic_roundtrips_dims() {
        let d = 3;
        let mut f = RMat::zeros(d, d);
        for i in 0..d {
            f[(i, i)] = 1.0 + i as f64;
        }
        let (p, _) = schur_trace_problem(&f, 2);
        let mut buf = Vec::new();
        p.dump_conic(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("nvars 2"));
        assert!(text.contains("psd_triangle 4"));
    }
}
