//! Real symmetric conic problems and a primal-dual interior-point backend.
//!
//! Problem form:
//!
//! ```text
//! minimize    cᵀy
//! subject to  F_k(y) = C_k + Σ_i y_i A_{k,i} ⪰ 0   for every block k
//!             G y = h
//! ```
//!
//! with free variables `y`. The Lagrangian dual is
//!
//! ```text
//! maximize    −Σ_k ⟨C_k, X_k⟩ + hᵀλ
//! subject to  Σ_k ⟨A_{k,i}, X_k⟩ + (Gᵀλ)_i = c_i,   X_k ⪰ 0.
//! ```
//!
//! The backend is an infeasible-start path-following method with the HKM
//! search direction and a Mehrotra predictor-corrector step.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Sparse real symmetric matrix stored as a full entry list (both triangles).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v` at (i, j) and (j, i); once on the diagonal.
    pub fn push_sym(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i, j, v));
        if i != j {
            self.entries.push((j, i, v));
        }
    }

    pub fn from_dense(m: &DMatrix<f64>, drop_below: f64) -> Self {
        let mut s = SparseSym::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)].abs() > drop_below {
                    s.entries.push((i, j, m[(i, j)]));
                }
            }
        }
        s
    }

    pub fn scaled(&self, c: f64) -> Self {
        SparseSym { entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * c)).collect() }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, d: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, v)| v * d[(i, j)]).sum()
    }

    fn add_to(&self, d: &mut DMatrix<f64>, c: f64) {
        for &(i, j, v) in &self.entries {
            d[(i, j)] += c * v;
        }
    }
}

/// One linear matrix inequality `C + Σ_i y_i A_i ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub size: usize,
    pub constant: DMatrix<f64>,
    /// `(variable index, coefficient matrix)`; a variable appears at most once.
    pub terms: Vec<(usize, SparseSym)>,
}

impl LmiBlock {
    pub fn new(size: usize) -> Self {
        LmiBlock { size, constant: DMatrix::zeros(size, size), terms: Vec::new() }
    }

    pub fn evaluate(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for (i, a) in &self.terms {
            a.add_to(&mut f, y[*i]);
        }
        f
    }

    fn apply(&self, dy: &DVector<f64>) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.size, self.size);
        for (i, a) in &self.terms {
            a.add_to(&mut f, dy[*i]);
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub n_vars: usize,
    pub objective: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
}

impl ConicProblem {
    pub fn new(n_vars: usize) -> Self {
        ConicProblem {
            n_vars,
            objective: DVector::zeros(n_vars),
            blocks: Vec::new(),
            eq_matrix: DMatrix::zeros(0, n_vars),
            eq_rhs: DVector::zeros(0),
        }
    }

    fn check(&self) -> Result<(), SolverError> {
        if self.objective.len() != self.n_vars {
            return Err(SolverError::Malformed("objective length".into()));
        }
        if self.eq_matrix.ncols() != self.n_vars || self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err(SolverError::Malformed("equality shape".into()));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.constant.nrows() != b.size || b.constant.ncols() != b.size {
                return Err(SolverError::Malformed(format!("block {k} constant shape")));
            }
            for (i, a) in &b.terms {
                if *i >= self.n_vars {
                    return Err(SolverError::Malformed(format!("block {k} variable index {i}")));
                }
                if a.entries.iter().any(|&(p, q, _)| p >= b.size || q >= b.size) {
                    return Err(SolverError::Malformed(format!("block {k} entry out of range")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolverStatus {
    Solved,
    /// Residuals reached `reduced_tol` but not `tol` before stalling.
    AlmostSolved,
    MaxIterations,
    Stalled,
    InconsistentEqualities,
}

impl SolverStatus {
    pub fn is_solved(self) -> bool {
        matches!(self, SolverStatus::Solved | SolverStatus::AlmostSolved)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolverStatus,
    pub y: DVector<f64>,
    /// `Z_k = F_k(y)` at the returned point.
    pub slack: Vec<DMatrix<f64>>,
    /// Dual PSD matrices `X_k`.
    pub dual: Vec<DMatrix<f64>>,
    /// Multipliers of the equality rows as supplied (redundant rows get a
    /// least-norm share).
    pub eq_dual: DVector<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    /// Merit accepted as [`SolverStatus::AlmostSolved`] when `tol` is out of
    /// reach.
    pub reduced_tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-8, reduced_tol: 5e-5, max_iter: 120, step_fraction: 0.95 }
    }
}

/// Any backend able to solve a [`ConicProblem`].
pub trait ConicSolver {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution, SolverError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InteriorPointSolver {
    pub settings: SolverSettings,
}

impl InteriorPointSolver {
    pub fn new(settings: SolverSettings) -> Self {
        InteriorPointSolver { settings }
    }
}

/// Equality rows reduced to an orthonormal basis of their row space.
struct ReducedEqualities {
    g: DMatrix<f64>,
    h: DVector<f64>,
    /// Maps reduced multipliers back to the original rows.
    back: DMatrix<f64>,
    inconsistency: f64,
}

fn reduce_equalities(g: &DMatrix<f64>, h: &DVector<f64>) -> ReducedEqualities {
    let m_e = g.nrows();
    if m_e == 0 {
        return ReducedEqualities { g: g.clone(), h: h.clone(), back: DMatrix::zeros(0, 0), inconsistency: 0.0 };
    }
    let ggt = g * g.transpose();
    let eig = ggt.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..m_e).filter(|&k| eig.eigenvalues[k] > 1e-10 * lmax.max(1e-300)).collect();
    let mut t = DMatrix::zeros(keep.len(), m_e);
    for (r, &k) in keep.iter().enumerate() {
        let s = 1.0 / eig.eigenvalues[k].sqrt();
        for c in 0..m_e {
            t[(r, c)] = eig.eigenvectors[(c, k)] * s;
        }
    }
    let mut inconsistency: f64 = 0.0;
    for k in (0..m_e).filter(|k| !keep.contains(k)) {
        let v = eig.eigenvectors.column(k);
        inconsistency = inconsistency.max(v.dot(h).abs());
    }
    let g_red = &t * g;
    let h_red = &t * h;
    ReducedEqualities { g: g_red, h: h_red, back: t.transpose(), inconsistency }
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Largest step α ≤ 1/… keeping `x + α dx` positive definite (∞ if any step works).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(ch) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(li) = l.clone().try_inverse() else {
        return 0.0;
    };
    let t = sym(&li * dx * li.transpose());
    let lmin = t.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

/// Refinement passes per Newton solve.
const REFINE_STEPS: usize = 3;
/// Iterations without a better merit before giving up.
const STALL_WINDOW: usize = 10;

struct Direction {
    dy: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
    dx: Vec<DMatrix<f64>>,
    dl: DVector<f64>,
}

struct Factorization {
    m_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// M⁻¹Gᵀ
    mig: DMatrix<f64>,
    s_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl ConicSolver for InteriorPointSolver {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution, SolverError> {
        problem.check()?;
        let eq = reduce_equalities(&problem.eq_matrix, &problem.eq_rhs);
        let scale_h = 1.0 + problem.eq_rhs.norm();
        if eq.inconsistency > 1e-7 * scale_h {
            let m = problem.n_vars;
            return Ok(ConicSolution {
                status: SolverStatus::InconsistentEqualities,
                y: DVector::zeros(m),
                slack: problem.blocks.iter().map(|b| b.constant.clone()).collect(),
                dual: problem.blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect(),
                eq_dual: DVector::zeros(problem.eq_rhs.len()),
                primal_objective: f64::NAN,
                dual_objective: f64::NAN,
                primal_infeasibility: eq.inconsistency,
                dual_infeasibility: f64::NAN,
                iterations: 0,
            });
        }
        Ipm { p: problem, eq: &eq, s: self.settings }.run()
    }
}

struct Ipm<'a> {
    p: &'a ConicProblem,
    eq: &'a ReducedEqualities,
    s: SolverSettings,
}

impl Ipm<'_> {
    fn a_star(&self, ds: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.p.n_vars);
        for (b, d) in self.p.blocks.iter().zip(ds) {
            for (i, a) in &b.terms {
                out[*i] += a.dot(d);
            }
        }
        out
    }

    fn schur(&self, xs: &[DMatrix<f64>], zinvs: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.p.n_vars;
        let mut mat = DMatrix::zeros(m, m);
        for ((b, x), zi) in self.p.blocks.iter().zip(xs).zip(zinvs) {
            let n = b.size;
            let mut pm = DMatrix::zeros(n, n);
            for (ti, (i, ai)) in b.terms.iter().enumerate() {
                pm.fill(0.0);
                // P = X A_i Z⁻¹
                for &(p, q, v) in &ai.entries {
                    for r in 0..n {
                        let c = v * zi[(q, r)];
                        if c == 0.0 {
                            continue;
                        }
                        let xcol = x.column(p);
                        let mut pcol = pm.column_mut(r);
                        pcol.axpy(c, &xcol, 1.0);
                    }
                }
                for (j, aj) in &b.terms[ti..] {
                    // Tr(A_j P) = Σ A_j[r,s] P[s,r]
                    let v: f64 = aj.entries.iter().map(|&(r, s, w)| w * pm[(s, r)]).sum();
                    mat[(*i, *j)] += v;
                    if i != j {
                        mat[(*j, *i)] += v;
                    }
                }
            }
        }
        // The per-block loop fills (i,j) and (j,i) from one side only when both
        // variables occur in the block, which keeps the result symmetric.
        mat
    }

    fn factor(&self, mut mat: DMatrix<f64>) -> Result<Factorization, SolverError> {
        let m = mat.nrows();
        let diag_max = (0..m).map(|i| mat[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut reg = 0.0;
        let m_chol = loop {
            if let Some(c) = mat.clone().cholesky() {
                break c;
            }
            reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
            if reg > 1e-4 * diag_max {
                return Err(SolverError::Numerical("Schur complement is not positive definite".into()));
            }
            for i in 0..m {
                mat[(i, i)] += reg;
            }
        };
        let g = &self.eq.g;
        if g.nrows() == 0 {
            return Ok(Factorization { m_chol, mig: DMatrix::zeros(m, 0), s_chol: None });
        }
        let mig = m_chol.solve(&g.transpose());
        let mut s = g * &mig;
        let s_diag = (0..s.nrows()).map(|i| s[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut reg = 0.0;
        let s_chol = loop {
            if let Some(c) = s.clone().cholesky() {
                break c;
            }
            reg = if reg == 0.0 { 1e-14 * s_diag } else { reg * 100.0 };
            if reg > 1e-4 * s_diag {
                return Err(SolverError::Numerical("equality Schur complement is singular".into()));
            }
            for i in 0..s.nrows() {
                s[(i, i)] += reg;
            }
        };
        Ok(Factorization { m_chol, mig, s_chol: Some(s_chol) })
    }

    /// Solves `M dy − Gᵀ dl = r1`, `G dy = r2` with the factored Schur complement.
    fn solve_reduced(&self, fac: &Factorization, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mut dy = fac.m_chol.solve(r1);
        let dl = if let Some(sc) = &fac.s_chol {
            let dl = sc.solve(&(r2 - &self.eq.g * &dy));
            dy += &fac.mig * &dl;
            dl
        } else {
            DVector::zeros(0)
        };
        (dy, dl)
    }

    /// `M dy = A*(X A(dy) Z⁻¹)` evaluated through the blocks.
    fn apply_schur(&self, xs: &[DMatrix<f64>], zinvs: &[DMatrix<f64>], dy: &DVector<f64>) -> DVector<f64> {
        let prods: Vec<DMatrix<f64>> =
            self.p.blocks.iter().zip(xs).zip(zinvs).map(|((b, x), zi)| x * b.apply(dy) * zi).collect();
        self.a_star(&prods)
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        fac: &Factorization,
        xs: &[DMatrix<f64>],
        zinvs: &[DMatrix<f64>],
        rzinv: &[DMatrix<f64>],
        rps: &[DMatrix<f64>],
        rd: &DVector<f64>,
        re: &DVector<f64>,
    ) -> Direction {
        // rhs1 = A*(R Z⁻¹) − A*(X r_p Z⁻¹) − r_d
        let xrpz: Vec<DMatrix<f64>> = xs.iter().zip(rps).zip(zinvs).map(|((x, rp), zi)| x * rp * zi).collect();
        let rhs1 = self.a_star(rzinv) - self.a_star(&xrpz) - rd;
        let (mut dy, mut dl) = self.solve_reduced(fac, &rhs1, re);
        // Iterative refinement against the exact operator; the factorization
        // may be regularized or badly conditioned near the optimum.
        let scale = 1.0 + rhs1.norm() + re.norm();
        for _ in 0..REFINE_STEPS {
            let r1 = &rhs1 - self.apply_schur(xs, zinvs, &dy) + self.eq.g.transpose() * &dl;
            let r2 = re - &self.eq.g * &dy;
            if r1.norm() + r2.norm() <= 1e-14 * scale {
                break;
            }
            let (cy, cl) = self.solve_reduced(fac, &r1, &r2);
            dy += cy;
            dl += cl;
        }
        let mut dz = Vec::with_capacity(xs.len());
        let mut dx = Vec::with_capacity(xs.len());
        for (k, b) in self.p.blocks.iter().enumerate() {
            let dzk = b.apply(&dy) + &rps[k];
            let dxk = sym(&rzinv[k] - &xs[k] * &dzk * &zinvs[k]);
            dz.push(dzk);
            dx.push(dxk);
        }
        Direction { dy, dz, dx, dl }
    }

    fn run(&self) -> Result<ConicSolution, SolverError> {
        let p = self.p;
        let m = p.n_vars;
        let n_tot: usize = p.blocks.iter().map(|b| b.size).sum();
        let c_norm = p.objective.norm();
        let cmax = p.blocks.iter().map(|b| frob(&b.constant)).fold(0.0, f64::max);
        let h_norm = self.eq.h.norm();
        let a_max = p
            .blocks
            .iter()
            .flat_map(|b| b.terms.iter().map(|(_, a)| a.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()))
            .fold(0.0, f64::max)
            .max(1e-12);
        let xi_x = 10f64.max((n_tot as f64).sqrt()).max((1.0 + c_norm) / (1.0 + a_max));
        let xi_z = 10f64.max((n_tot as f64).sqrt()).max(cmax).max((1.0 + c_norm) / a_max.sqrt());

        let mut y = DVector::zeros(m);
        let mut zs: Vec<DMatrix<f64>> = p.blocks.iter().map(|b| DMatrix::identity(b.size, b.size) * xi_z).collect();
        let mut xs: Vec<DMatrix<f64>> = p.blocks.iter().map(|b| DMatrix::identity(b.size, b.size) * xi_x).collect();
        let mut lam = DVector::zeros(self.eq.g.nrows());

        let mut best: Option<(f64, ConicSolution)> = None;
        let mut status = SolverStatus::MaxIterations;
        let mut iterations = 0;
        let mut last_improved = 0;
        for iter in 0..self.s.max_iter {
            iterations = iter;
            let rps: Vec<DMatrix<f64>> = p.blocks.iter().zip(&zs).map(|(b, z)| b.evaluate(&y) - z).collect();
            let rd = &p.objective - self.a_star(&xs) - self.eq.g.transpose() * &lam;
            let re = &self.eq.h - &self.eq.g * &y;
            let gap: f64 = xs.iter().zip(&zs).map(|(x, z)| inner(x, z)).sum();
            let mu = gap / n_tot.max(1) as f64;
            let pobj = p.objective.dot(&y);
            let dobj = -p.blocks.iter().zip(&xs).map(|(b, x)| inner(&b.constant, x)).sum::<f64>() + self.eq.h.dot(&lam);
            let rp_norm = rps.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
            let pinf = (rp_norm / (1.0 + cmax)).max(re.norm() / (1.0 + h_norm));
            let dinf = rd.norm() / (1.0 + c_norm);
            let relgap = (pobj - dobj).abs().max(gap.abs()) / (1.0 + pobj.abs() + dobj.abs());
            let merit = pinf.max(dinf).max(relgap);
            let snapshot = |st: SolverStatus| ConicSolution {
                status: st,
                y: y.clone(),
                slack: p.blocks.iter().map(|b| b.evaluate(&y)).collect(),
                dual: xs.clone(),
                eq_dual: &self.eq.back * &lam,
                primal_objective: pobj,
                dual_objective: dobj,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                iterations: iter,
            };
            if merit < self.s.tol {
                return Ok(snapshot(SolverStatus::Solved));
            }
            if best.as_ref().is_none_or(|(b, _)| merit < *b) {
                best = Some((merit, snapshot(SolverStatus::MaxIterations)));
                last_improved = iter;
            } else if iter - last_improved >= STALL_WINDOW {
                status = SolverStatus::Stalled;
                break;
            }

            let mut zinvs = Vec::with_capacity(zs.len());
            for z in &zs {
                match spd_inverse(z) {
                    Some(zi) => zinvs.push(zi),
                    None => {
                        status = SolverStatus::Stalled;
                        break;
                    }
                }
            }
            if zinvs.len() != zs.len() {
                break;
            }
            let fac = match self.factor(self.schur(&xs, &zinvs)) {
                Ok(f) => f,
                Err(_) => {
                    status = SolverStatus::Stalled;
                    break;
                }
            };

            // Predictor.
            let rz_aff: Vec<DMatrix<f64>> = xs.iter().map(|x| -x).collect();
            let aff = self.direction(&fac, &xs, &zinvs, &rz_aff, &rps, &rd, &re);
            let ap = steps(&zs, &aff.dz).min(1.0);
            let ad = steps(&xs, &aff.dx).min(1.0);
            let gap_aff: f64 = xs
                .iter()
                .zip(&zs)
                .zip(aff.dx.iter().zip(&aff.dz))
                .map(|((x, z), (dx, dz))| inner(&(x + dx * ad), &(z + dz * ap)))
                .sum();
            let mut sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);
            // Keep complementarity from running ahead of feasibility.
            if pinf.max(dinf) > relgap {
                sigma = sigma.max(0.5);
            }

            // Corrector.
            let rzinv: Vec<DMatrix<f64>> = xs
                .iter()
                .zip(&zinvs)
                .zip(aff.dx.iter().zip(&aff.dz))
                .map(|((x, zi), (dx, dz))| {
                    let n = x.nrows();
                    DMatrix::identity(n, n) * (sigma * mu) * zi - x - dx * dz * zi
                })
                .collect();
            let dir = self.direction(&fac, &xs, &zinvs, &rzinv, &rps, &rd, &re);
            let tau = self.s.step_fraction;
            let ap = (tau * steps(&zs, &dir.dz)).min(1.0);
            let ad = (tau * steps(&xs, &dir.dx)).min(1.0);
            if ap < 1e-12 && ad < 1e-12 {
                status = SolverStatus::Stalled;
                break;
            }
            y += &dir.dy * ap;
            for (z, dz) in zs.iter_mut().zip(&dir.dz) {
                *z += dz * ap;
            }
            for (x, dx) in xs.iter_mut().zip(&dir.dx) {
                *x += dx * ad;
            }
            lam += &dir.dl * ad;
        }
        let (merit, mut sol) = best.expect("at least one iterate");
        sol.status = if merit < self.s.reduced_tol.max(self.s.tol) { SolverStatus::AlmostSolved } else { status };
        sol.iterations = iterations;
        Ok(sol)
    }
}

fn steps(base: &[DMatrix<f64>], dirs: &[DMatrix<f64>]) -> f64 {
    base.iter().zip(dirs).map(|(b, d)| max_step(b, d)).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(p: &ConicProblem) -> ConicSolution {
        InteriorPointSolver::default().solve(p).unwrap()
    }

    #[test]
    fn minimal_eigenvalue_as_sdp() {
        // max t s.t. A − tI ⪰ 0  ⇔  min −t; optimum t = λ_min(A).
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let mut p = ConicProblem::new(1);
        p.objective[0] = -1.0;
        let mut b = LmiBlock::new(3);
        b.constant = a.clone();
        let mut id = SparseSym::new();
        for i in 0..3 {
            id.push_sym(i, i, -1.0);
        }
        b.terms.push((0, id));
        p.blocks.push(b);
        let s = solve(&p);
        assert_eq!(s.status, SolverStatus::Solved);
        let lmin = 2.0 - 2f64.sqrt();
        assert!((s.y[0] - lmin).abs() < 1e-7, "{}", s.y[0]);
        assert!((s.dual[0].trace() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn equality_constrained_problem() {
        // min y0 + y1  s.t. [[y0, 1],[1, y1]] ⪰ 0, y0 − y1 = 0  → y0 = y1 = 1.
        let mut p = ConicProblem::new(2);
        p.objective = DVector::from_vec(vec![1.0, 1.0]);
        let mut b = LmiBlock::new(2);
        b.constant = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mut a0 = SparseSym::new();
        a0.push_sym(0, 0, 1.0);
        let mut a1 = SparseSym::new();
        a1.push_sym(1, 1, 1.0);
        b.terms = vec![(0, a0), (1, a1)];
        p.blocks.push(b);
        // Duplicate row exercises the rank reduction.
        p.eq_matrix = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 2.0, -2.0]);
        p.eq_rhs = DVector::zeros(2);
        let s = solve(&p);
        assert_eq!(s.status, SolverStatus::Solved);
        assert!((s.y[0] - 1.0).abs() < 1e-7 && (s.y[1] - 1.0).abs() < 1e-7);
        assert!((s.primal_objective - s.dual_objective).abs() < 1e-7);
    }

    #[test]
    fn inconsistent_equalities_are_reported() {
        let mut p = ConicProblem::new(1);
        let mut b = LmiBlock::new(1);
        let mut a = SparseSym::new();
        a.push_sym(0, 0, 1.0);
        b.terms.push((0, a));
        p.blocks.push(b);
        p.eq_matrix = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        p.eq_rhs = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(solve(&p).status, SolverStatus::InconsistentEqualities);
    }

    #[test]
    fn malformed_problem_is_rejected() {
        let mut p = ConicProblem::new(1);
        let mut b = LmiBlock::new(2);
        let mut a = SparseSym::new();
        a.push_sym(0, 5, 1.0);
        b.terms.push((0, a));
        p.blocks.push(b);
        assert!(matches!(InteriorPointSolver::default().solve(&p), Err(SolverError::Malformed(_))));
    }
}
