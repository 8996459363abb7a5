//! Complex Hermitian problems and their real symmetric embedding.
//!
//! A Hermitian `M = A + iB` maps to `[[A, −B], [B, A]]`. The map preserves
//! positive semidefiniteness in both directions and doubles every eigenvalue
//! multiplicity; for Hermitian `H` and real symmetric `X`,
//! `⟨embed(H), X⟩ = Re Tr[H · dual_from_embedded(X)]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{CMat, C64, HERMITICITY_TOL};
use crate::sdp::solver::{ConicProblem, LmiBlock, SparseSym};

/// Sparse Hermitian matrix as a full entry list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseHerm {
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseHerm {
    pub fn from_dense(m: &CMat) -> Self {
        let mut s = SparseHerm::default();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)].norm() > 0.0 {
                    s.entries.push((i, j, m[(i, j)]));
                }
            }
        }
        s
    }

    pub fn scaled(&self, c: f64) -> Self {
        SparseHerm { entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * c)).collect() }
    }

    fn embed(&self, n: usize) -> SparseSym {
        let mut out = SparseSym::new();
        for &(p, q, v) in &self.entries {
            if v.re != 0.0 {
                out.entries.push((p, q, v.re));
                out.entries.push((p + n, q + n, v.re));
            }
            if v.im != 0.0 {
                out.entries.push((p + n, q, v.im));
                out.entries.push((p, q + n, -v.im));
            }
        }
        out
    }
}

/// `C + Σ_i y_i A_i ⪰ 0` with Hermitian data.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianLmi {
    pub size: usize,
    pub constant: CMat,
    pub terms: Vec<(usize, SparseHerm)>,
}

/// Conic problem over Hermitian blocks with real free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianProblem {
    pub n_vars: usize,
    pub objective: DVector<f64>,
    pub blocks: Vec<HermitianLmi>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
}

/// Real symmetric embedding of a Hermitian matrix.
pub fn embed_matrix(m: &CMat) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let v = m[(i, j)];
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i + n, j)] = v.im;
            out[(i, j + n)] = -v.im;
        }
    }
    out
}

/// Complex matrix `Z` with `⟨embed(H), X⟩ = Re Tr[H Z]` for all Hermitian `H`;
/// PSD whenever `X` is.
pub fn dual_from_embedded(x: &DMatrix<f64>) -> CMat {
    let n = x.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        C64::new(x[(i, j)] + x[(i + n, j + n)], x[(i + n, j)] - x[(i, j + n)])
    })
}

/// Inverse of [`embed_matrix`] on its range.
pub fn unembed_matrix(x: &DMatrix<f64>) -> CMat {
    dual_from_embedded(x) * C64::new(0.5, 0.0)
}

fn hermiticity(m: &CMat) -> f64 {
    m.iter().zip(m.adjoint().iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

fn sparse_hermiticity(s: &SparseHerm, n: usize) -> f64 {
    let mut d = CMat::zeros(n, n);
    for &(i, j, v) in &s.entries {
        d[(i, j)] += v;
    }
    hermiticity(&d)
}

/// Embeds every block; rejects non-Hermitian data.
pub fn embed_complex(problem: &HermitianProblem) -> Result<ConicProblem> {
    let mut blocks = Vec::with_capacity(problem.blocks.len());
    for b in &problem.blocks {
        let n = b.size;
        let dev = hermiticity(&b.constant);
        if dev > HERMITICITY_TOL {
            return Err(Error::Algebra(crate::hilbert::AlgebraError::NotHermitian { deviation: dev }));
        }
        let mut lmi = LmiBlock::new(2 * n);
        lmi.constant = embed_matrix(&b.constant);
        for (i, a) in &b.terms {
            let dev = sparse_hermiticity(a, n);
            if dev > HERMITICITY_TOL {
                return Err(Error::Algebra(crate::hilbert::AlgebraError::NotHermitian { deviation: dev }));
            }
            lmi.terms.push((*i, a.embed(n)));
        }
        blocks.push(lmi);
    }
    Ok(ConicProblem {
        n_vars: problem.n_vars,
        objective: problem.objective.clone(),
        blocks,
        eq_matrix: problem.eq_matrix.clone(),
        eq_rhs: problem.eq_rhs.clone(),
    })
}

/// Real coordinates of an n×n Hermitian matrix: `n` diagonal entries, then
/// for each `p < q` the pair (Re, Im) of entry (p, q). `n²` in total.
pub fn param_count(n: usize) -> usize {
    n * n
}

fn pair_index(n: usize, i: usize) -> (usize, usize, bool) {
    let k = i - n;
    let (pair, imag) = (k / 2, k % 2 == 1);
    let mut p = 0;
    let mut rem = pair;
    while rem >= n - 1 - p {
        rem -= n - 1 - p;
        p += 1;
    }
    (p, p + 1 + rem, imag)
}

/// Basis operator of coordinate `i`: `E_dd`, `E_pq + E_qp` or `i(E_pq − E_qp)`.
pub fn param_basis(n: usize, i: usize) -> SparseHerm {
    let mut s = SparseHerm::default();
    if i < n {
        s.entries.push((i, i, C64::new(1.0, 0.0)));
    } else {
        let (p, q, imag) = pair_index(n, i);
        if imag {
            s.entries.push((p, q, C64::new(0.0, 1.0)));
            s.entries.push((q, p, C64::new(0.0, -1.0)));
        } else {
            s.entries.push((p, q, C64::new(1.0, 0.0)));
            s.entries.push((q, p, C64::new(1.0, 0.0)));
        }
    }
    s
}

/// Coefficients `Re Tr[G H_i]` of the linear functional `H ↦ Re Tr[G H]`
/// in the coordinates above.
pub fn functional_coefficients(g: &CMat) -> Vec<f64> {
    let n = g.nrows();
    let mut out = Vec::with_capacity(n * n);
    for d in 0..n {
        out.push(g[(d, d)].re);
    }
    for p in 0..n {
        for q in p + 1..n {
            out.push(g[(p, q)].re + g[(q, p)].re);
            out.push(g[(p, q)].im - g[(q, p)].im);
        }
    }
    out
}

/// Hermitian matrix from its coordinates.
pub fn params_to_operator(n: usize, vals: &[f64]) -> CMat {
    let mut m = CMat::zeros(n, n);
    for d in 0..n {
        m[(d, d)] = C64::new(vals[d], 0.0);
    }
    let mut k = n;
    for p in 0..n {
        for q in p + 1..n {
            let (re, im) = (vals[k], vals[k + 1]);
            m[(p, q)] = C64::new(re, im);
            m[(q, p)] = C64::new(re, -im);
            k += 2;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{hermitian_eigenvalues, pauli};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMat {
        let m = CMat::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&m + m.adjoint()) * C64::new(0.5, 0.0)
    }

    fn sorted_real_eigs(m: &DMatrix<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn identity_embeds_to_identity() {
        let e = embed_matrix(&CMat::identity(2, 2));
        assert_eq!(e, DMatrix::identity(4, 4));
    }

    #[test]
    fn pauli_y_spectrum_doubles() {
        let ev = sorted_real_eigs(&embed_matrix(&pauli(2)));
        let want = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_spectrum_has_doubled_multiplicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..6 {
            let h = random_hermitian(n, &mut rng);
            let ev = sorted_real_eigs(&embed_matrix(&h));
            let hv = hermitian_eigenvalues(&h);
            for (k, lam) in hv.iter().enumerate() {
                assert!((ev[2 * k] - lam).abs() < 1e-10 && (ev[2 * k + 1] - lam).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn embedded_pairing_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_hermitian(3, &mut rng);
        let z = random_hermitian(3, &mut rng);
        let x = embed_matrix(&z);
        let lhs = embed_matrix(&h).dot(&x);
        let rhs = (&h * dual_from_embedded(&x)).trace().re;
        assert!((lhs - rhs).abs() < 1e-12);
        assert!((unembed_matrix(&x) - &z).iter().all(|d| d.norm() < 1e-14));
    }

    #[test]
    fn coordinates_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let g = random_hermitian(n, &mut rng);
        let h = random_hermitian(n, &mut rng);
        // Coordinates of h: Re Tr[h_i* ...] read off directly.
        let vals: Vec<f64> = (0..n * n)
            .map(|i| {
                let (p, q, v) = param_basis(n, i).entries[0];
                if v.im == 0.0 { h[(p, q)].re } else { h[(p, q)].im }
            })
            .collect();
        let back = params_to_operator(n, &vals);
        assert!((&back - &h).iter().all(|d| d.norm() < 1e-14));
        let coeffs = functional_coefficients(&g);
        let lin: f64 = coeffs.iter().zip(&vals).map(|(c, v)| c * v).sum();
        assert!((lin - (&g * &h).trace().re).abs() < 1e-12);
    }

    #[test]
    fn non_hermitian_data_is_rejected() {
        let mut c = CMat::zeros(2, 2);
        c[(0, 1)] = C64::new(1.0, 0.0);
        let p = HermitianProblem {
            n_vars: 0,
            objective: DVector::zeros(0),
            blocks: vec![HermitianLmi { size: 2, constant: c, terms: vec![] }],
            eq_matrix: DMatrix::zeros(0, 0),
            eq_rhs: DVector::zeros(0),
        };
        assert!(embed_complex(&p).is_err());
    }
}
