//! Robustness certification against a cone and witness handling.
//!
//! The primal is
//!
//! ```text
//! minimize r  s.t.  E_k + r N_k = X1_k + X2_k,  X1 ∈ C_1,  X2 ∈ C_2
//! ```
//!
//! with `C_1`, `C_2` the two ordered cones. `X2` is eliminated, `r` is free,
//! and the returned `signed_robustness` is the optimum (negative when the
//! object lies strictly inside the separable cone). The witness
//! `S = P_k + T_k` (P_k ⪰ 0, T_k ⊥ L_k) is rebuilt from the dual matrices
//! and equality multipliers and satisfies `S * N = 1`, `S * E = −r*`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Certifiable, OperatorFamily};
use crate::hilbert::{min_eigenvalue, CMat, LabeledOperator, C64};
use crate::sdp::cone::{
    family_coords, from_orthonormal_coords, ordered_rows, orthonormal_row_basis, row_matrix, ConeKind, ConeSpec, Row,
};
use crate::sdp::embed::{
    dual_from_embedded, embed_complex, functional_coefficients, param_basis, HermitianLmi, HermitianProblem, SparseHerm,
};
use crate::sdp::solver::{ConicSolver, InteriorPointSolver, SolverSettings, SolverStatus};

/// Robustness values within ± this margin of zero are undecided.
pub const DECISION_MARGIN: f64 = 1e-6;
/// Residual tolerance for witness membership checks.
pub const WITNESS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Noncausal,
    Separable,
    Boundary,
}

impl Verdict {
    pub fn from_signed(signed: f64, margin: f64) -> Verdict {
        if signed > margin {
            Verdict::Noncausal
        } else if signed < -margin {
            Verdict::Separable
        } else {
            Verdict::Boundary
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Noncausal => "noncausal",
            Verdict::Separable => "separable",
            Verdict::Boundary => "boundary",
        }
    }
}

/// Dual-cone element with the index structure of the certified object.
/// Operators follow the pairing `S * E = Σ Tr[Sᵀ E]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessFamily {
    pub operators: OperatorFamily,
    /// PSD parts P_k of the decomposition `S = P_k + T_k`, one family per
    /// ordered cone, when known.
    pub psd_parts: Option<Vec<OperatorFamily>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    pub cone: ConeKind,
    /// max(0, signed_robustness)
    pub robustness: f64,
    pub signed_robustness: f64,
    pub verdict: Verdict,
    pub status: SolverStatus,
    /// |signed_robustness + S * E|
    pub duality_gap: f64,
    /// Disagreement between the two reconstructions of the witness.
    pub witness_mismatch: f64,
    pub witness: Option<WitnessFamily>,
    pub iterations: usize,
    pub solve_time_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub solver: SolverSettings,
    pub margin: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { solver: SolverSettings::default(), margin: DECISION_MARGIN }
    }
}

impl CertifyOptions {
    pub fn with_tol(tol: f64) -> Self {
        CertifyOptions { solver: SolverSettings { tol, ..Default::default() }, ..Default::default() }
    }
}

/// Robustness of `object` w.r.t. `cone` and the noise `noise`, with the
/// default interior-point backend.
pub fn certify(object: &impl Certifiable, cone: &ConeSpec, noise: &impl Certifiable) -> Result<CertificationResult> {
    certify_with(object, cone, noise, &CertifyOptions::default(), &InteriorPointSolver::default())
}

pub fn certify_with(
    object: &impl Certifiable,
    cone: &ConeSpec,
    noise: &impl Certifiable,
    opts: &CertifyOptions,
    solver: &dyn ConicSolver,
) -> Result<CertificationResult> {
    let start = Instant::now();
    let e = object.family();
    let nz = noise.family();
    e.check_same_shape(&nz)?;
    let orders = cone.ordered_cones(&e)?;
    let factors = e.factors().to_vec();
    let rows = [ordered_rows(&orders[0], &factors)?, ordered_rows(&orders[1], &factors)?];

    let n = e.elements[0].dim();
    let np = n * n;
    let ne = e.len();
    let r_idx = ne * np;
    let m = r_idx + 1;
    let basis: Vec<SparseHerm> = (0..np).map(|i| param_basis(n, i)).collect();

    let mut blocks = Vec::with_capacity(2 * ne);
    for k in 0..ne {
        blocks.push(HermitianLmi {
            size: n,
            constant: CMat::zeros(n, n),
            terms: (0..np).map(|i| (k * np + i, basis[i].clone())).collect(),
        });
    }
    for k in 0..ne {
        let mut terms: Vec<(usize, SparseHerm)> = (0..np).map(|i| (k * np + i, basis[i].scaled(-1.0))).collect();
        terms.push((r_idx, SparseHerm::from_dense(nz.elements[k].matrix())));
        blocks.push(HermitianLmi { size: n, constant: e.elements[k].hermitian_part().into_matrix(), terms });
    }

    let n_rows = rows[0].len() + rows[1].len();
    let mut g = DMatrix::zeros(n_rows, m);
    let mut h = DVector::zeros(n_rows);
    for (i, row) in rows[0].iter().enumerate() {
        for (k, gam) in &row.parts {
            for (j, c) in functional_coefficients(gam).into_iter().enumerate() {
                g[(i, k * np + j)] += c;
            }
        }
    }
    let off = rows[0].len();
    for (i, row) in rows[1].iter().enumerate() {
        for (k, gam) in &row.parts {
            for (j, c) in functional_coefficients(gam).into_iter().enumerate() {
                g[(off + i, k * np + j)] -= c;
            }
        }
        g[(off + i, r_idx)] = row.apply(&nz);
        h[off + i] = -row.apply(&e);
    }
    let mut objective = DVector::zeros(m);
    objective[r_idx] = 1.0;
    let problem = embed_complex(&HermitianProblem { n_vars: m, objective, blocks, eq_matrix: g, eq_rhs: h })?;
    let sol = solver.solve(&problem)?;
    if !sol.status.is_solved() {
        return Err(Error::SolverStatus { status: sol.status });
    }

    let signed = sol.y[r_idx];
    // Witness from either side of the stationarity condition.
    let mut sides: [Vec<CMat>; 2] = [Vec::with_capacity(ne), Vec::with_capacity(ne)];
    let mut psd: [Vec<CMat>; 2] = [Vec::with_capacity(ne), Vec::with_capacity(ne)];
    for side in 0..2 {
        for k in 0..ne {
            let z = dual_from_embedded(&sol.dual[side * ne + k]);
            psd[side].push(z.clone());
            sides[side].push(z);
        }
        let offset = if side == 0 { 0 } else { off };
        for (i, row) in rows[side].iter().enumerate() {
            let lam = sol.eq_dual[offset + i];
            for (k, gam) in &row.parts {
                sides[side][*k] += gam * C64::new(lam, 0.0);
            }
        }
    }
    let mut mismatch: f64 = 0.0;
    let mut ops = Vec::with_capacity(ne);
    for (s0, s1) in sides[0].iter().zip(&sides[1]) {
        let d = s0 - s1;
        mismatch = mismatch.max(d.iter().map(|z| z.norm()).fold(0.0, f64::max));
        let avg = (s0 + s1) * C64::new(0.5, 0.0);
        let herm = (&avg + avg.adjoint()) * C64::new(0.5, 0.0);
        // Frobenius pairing Re Tr[S E] equals Tr[conj(S)ᵀ E].
        ops.push(LabeledOperator::new(factors.clone(), herm.map(|z| z.conj()))?);
    }
    let to_family = |mats: &[CMat]| -> Result<OperatorFamily> {
        let els = mats
            .iter()
            .map(|mm| {
                let h = (mm + mm.adjoint()) * C64::new(0.5, 0.0);
                LabeledOperator::new(factors.clone(), h.map(|z| z.conj()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        OperatorFamily::new(e.keys.clone(), els)
    };
    let raw = WitnessFamily {
        operators: OperatorFamily::new(e.keys.clone(), ops)?,
        psd_parts: Some(vec![to_family(&psd[0])?, to_family(&psd[1])?]),
    };
    let witness = polish_witness(&raw, cone, &nz)?;
    let s_e = apply_witness(&witness, &e)?;
    Ok(CertificationResult {
        cone: cone.kind,
        robustness: signed.max(0.0),
        signed_robustness: signed,
        verdict: Verdict::from_signed(signed, opts.margin),
        status: sol.status,
        duality_gap: (signed + s_e).abs(),
        witness_mismatch: mismatch,
        witness: Some(witness),
        iterations: sol.iterations,
        solve_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// `S * E = Σ_k Tr[S_kᵀ E_k]`.
pub fn apply_witness(s: &WitnessFamily, object: &impl Certifiable) -> Result<f64> {
    s.operators.pairing(&object.family())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MembershipMethod {
    /// Supplied PSD parts checked directly.
    Decomposition,
    /// Decomposition searched for with a feasibility SDP.
    Feasibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderMembership {
    pub order: String,
    pub method: MembershipMethod,
    /// Smallest eigenvalue over the PSD parts (or the optimal margin of the
    /// feasibility search).
    pub min_eigenvalue: f64,
    /// Distance of S − P from the allowed subspace (0 for the feasibility search).
    pub span_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub orders: Vec<OrderMembership>,
    /// S * N when a noise object was given.
    pub normalization: Option<f64>,
    pub valid: bool,
}

/// Checks `S ∈ C_1* ∩ C_2*` (and `S * N ≤ 1` when `noise` is given).
/// Returns the report; [`verify_witness`] turns a failure into an error.
pub fn check_witness(s: &WitnessFamily, cone: &ConeSpec, noise: Option<&OperatorFamily>) -> Result<WitnessReport> {
    let fam = &s.operators;
    let orders = cone.ordered_cones(fam)?;
    let factors = fam.factors().to_vec();
    let n = fam.elements[0].dim();
    // Work in the Frobenius picture: S_F = conj(S).
    let s_f: Vec<CMat> = fam.elements.iter().map(|e| e.matrix().map(|z| z.conj())).collect();
    let mut out = Vec::new();
    for (side, oc) in orders.iter().enumerate() {
        let rows = ordered_rows(oc, &factors)?;
        let basis = orthonormal_row_basis(&row_matrix(&rows, fam.len(), n));
        let membership = match s.psd_parts.as_ref().and_then(|p| p.get(side)) {
            Some(parts) => {
                parts.check_same_shape(fam)?;
                let p_f: Vec<CMat> = parts.elements.iter().map(|e| e.matrix().map(|z| z.conj())).collect();
                let min_eig = p_f.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
                let diff: Vec<CMat> = s_f.iter().zip(&p_f).map(|(a, b)| a - b).collect();
                let v = DVector::from_vec(family_coords(&diff.iter().collect::<Vec<_>>()));
                let proj = basis.transpose() * (&basis * &v);
                let span_residual = (&v - proj).amax();
                OrderMembership {
                    order: oc.label.clone(),
                    method: MembershipMethod::Decomposition,
                    min_eigenvalue: min_eig,
                    span_residual,
                    passed: min_eig >= -WITNESS_TOL && span_residual <= WITNESS_TOL,
                }
            }
            None => {
                let t = feasibility_margin(&s_f, &basis, n)?;
                OrderMembership {
                    order: oc.label.clone(),
                    method: MembershipMethod::Feasibility,
                    min_eigenvalue: t,
                    span_residual: 0.0,
                    passed: t >= -1e-7,
                }
            }
        };
        out.push(membership);
    }
    let normalization = match noise {
        Some(nz) => Some(s.operators.pairing(nz)?),
        None => None,
    };
    let valid = out.iter().all(|o| o.passed) && normalization.is_none_or(|v| v <= 1.0 + WITNESS_TOL);
    Ok(WitnessReport { orders: out, normalization, valid })
}

/// Like [`check_witness`], but a failed membership is an error.
pub fn verify_witness(s: &WitnessFamily, cone: &ConeSpec, noise: Option<&OperatorFamily>) -> Result<WitnessReport> {
    let report = check_witness(s, cone, noise)?;
    if report.valid {
        return Ok(report);
    }
    let mut why = Vec::new();
    for o in report.orders.iter().filter(|o| !o.passed) {
        why.push(format!(
            "order {}: min eigenvalue {:.3e}, span residual {:.3e}",
            o.order, o.min_eigenvalue, o.span_residual
        ));
    }
    if let Some(v) = report.normalization.filter(|v| *v > 1.0 + WITNESS_TOL) {
        why.push(format!("normalization S*N = {v:.9} exceeds 1"));
    }
    Err(Error::NotAWitness(why.join("; ")))
}

/// Makes the decomposition `S = P_k + T_k` exact: T_k is projected onto the
/// allowed span, the smallest eigenvalue of the P_k is lifted to zero by
/// adding a multiple of 𝟙 to S, and S is rescaled to `S * N = 1`. Removes
/// the solver's residual infeasibility from the returned witness.
fn polish_witness(s: &WitnessFamily, cone: &ConeSpec, noise: &OperatorFamily) -> Result<WitnessFamily> {
    let fam = &s.operators;
    let Some(parts) = s.psd_parts.as_ref() else {
        return Ok(s.clone());
    };
    let orders = cone.ordered_cones(fam)?;
    let factors = fam.factors().to_vec();
    let n = fam.elements[0].dim();
    let np = n * n;
    let s_f: Vec<CMat> = fam.elements.iter().map(|e| e.matrix().map(|z| z.conj())).collect();
    let mut p_new: Vec<Vec<CMat>> = Vec::with_capacity(2);
    let mut lam_min = f64::INFINITY;
    for (side, oc) in orders.iter().enumerate() {
        let rows = ordered_rows(oc, &factors)?;
        let basis = orthonormal_row_basis(&row_matrix(&rows, fam.len(), n));
        let p_f: Vec<CMat> = parts[side].elements.iter().map(|e| e.matrix().map(|z| z.conj())).collect();
        let diff: Vec<CMat> = s_f.iter().zip(&p_f).map(|(a, b)| a - b).collect();
        let v = DVector::from_vec(family_coords(&diff.iter().collect::<Vec<_>>()));
        let proj = basis.transpose() * (&basis * &v);
        let side_parts: Vec<CMat> = s_f
            .iter()
            .enumerate()
            .map(|(k, sk)| sk - from_orthonormal_coords(n, &proj.as_slice()[k * np..(k + 1) * np]))
            .collect();
        lam_min = side_parts.iter().map(min_eigenvalue).fold(lam_min, f64::min);
        p_new.push(side_parts);
    }
    let lift = CMat::identity(n, n) * C64::new((-lam_min).max(0.0), 0.0);
    let to_ops = |mats: Vec<CMat>| -> Result<OperatorFamily> {
        let els = mats
            .into_iter()
            .map(|m| {
                let h = (&m + &lift + (&m + &lift).adjoint()) * C64::new(0.5, 0.0);
                LabeledOperator::new(factors.clone(), h.map(|z| z.conj()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        OperatorFamily::new(fam.keys.clone(), els)
    };
    let operators = to_ops(s_f)?;
    let psd_parts = p_new.into_iter().map(to_ops).collect::<Result<Vec<_>>>()?;
    let norm = operators.pairing(noise)?;
    let c = if norm > 0.0 { 1.0 / norm } else { 1.0 };
    Ok(WitnessFamily { operators: operators.scale(c), psd_parts: Some(psd_parts.iter().map(|p| p.scale(c)).collect()) })
}

/// max t such that S − T − t𝟙 ⪰ 0 elementwise for some T in the span of
/// the (orthonormal) rows.
fn feasibility_margin(s_f: &[CMat], basis: &DMatrix<f64>, n: usize) -> Result<f64> {
    let ne = s_f.len();
    let np = n * n;
    let nr = basis.nrows();
    let t_idx = nr;
    let mut blocks = Vec::with_capacity(ne);
    let ident = SparseHerm::from_dense(&CMat::identity(n, n)).scaled(-1.0);
    for (k, s) in s_f.iter().enumerate() {
        let mut terms = Vec::with_capacity(nr + 1);
        for j in 0..nr {
            let coords: Vec<f64> = (0..np).map(|c| basis[(j, k * np + c)]).collect();
            if coords.iter().all(|v| *v == 0.0) {
                continue;
            }
            let gam = from_orthonormal_coords(n, &coords);
            terms.push((j, SparseHerm::from_dense(&gam).scaled(-1.0)));
        }
        terms.push((t_idx, ident.clone()));
        let herm = (s + s.adjoint()) * C64::new(0.5, 0.0);
        blocks.push(HermitianLmi { size: n, constant: herm, terms });
    }
    let mut objective = DVector::zeros(nr + 1);
    objective[t_idx] = -1.0;
    let problem = HermitianProblem {
        n_vars: nr + 1,
        objective,
        blocks,
        eq_matrix: DMatrix::zeros(0, nr + 1),
        eq_rhs: DVector::zeros(0),
    };
    let sol = InteriorPointSolver::default().solve(&embed_complex(&problem)?)?;
    if !sol.status.is_solved() {
        return Err(Error::SolverStatus { status: sol.status });
    }
    Ok(sol.y[t_idx])
}

/// Rows of both ordered cones, for callers that need the raw functionals.
pub fn cone_rows(cone: &ConeSpec, family: &OperatorFamily) -> Result<[Vec<Row>; 2]> {
    let orders = cone.ordered_cones(family)?;
    let f = family.factors().to_vec();
    Ok([ordered_rows(&orders[0], &f)?, ordered_rows(&orders[1], &f)?])
}
