//! Labeled multi-factor operator algebra.
//!
//! A [`LabeledOperator`] is a dense complex matrix acting on an ordered tensor
//! product of named factors. Row and column indices use a mixed-radix encoding
//! with the first factor most significant. Every public operation returns its
//! result with factors in the global canonical order (see [`canonical_rank`]),
//! so two operators on the same factor set can be compared entrywise.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Max-entry tolerance for Hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-9;
/// Tolerance on the smallest eigenvalue for PSD checks.
pub const PSD_TOL: f64 = 1e-9;

/// Known factor names in canonical order. Unknown names sort after these,
/// lexicographically.
pub const CANONICAL_ORDER: [&str; 12] = [
    "A_I", "A_O", "B_I", "B_O", "F", "At", "At_I", "At_O", "Bt", "Bt_I", "Bt_O", "Ft",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error("factor `{0}` appears more than once")]
    DuplicateFactor(String),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("dimension mismatch on `{name}`: {left} vs {right}")]
    DimMismatch { name: String, left: usize, right: usize },
    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("factor lists differ: [{left}] vs [{right}]")]
    FactorMismatch { left: String, right: String },
    #[error("matrix side {side} does not match factor dimensions (expected {expected})")]
    ShapeMismatch { side: usize, expected: usize },
}

/// A named Hilbert-space factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceLabel {
    pub name: String,
    pub dim: usize,
}

impl SpaceLabel {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        assert!(dim >= 1, "factor dimension must be positive");
        SpaceLabel { name: name.into(), dim }
    }

    /// Qubit factor.
    pub fn qubit(name: impl Into<String>) -> Self {
        Self::new(name, 2)
    }
}

impl fmt::Display for SpaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.dim)
    }
}

/// Sort key of a factor name in the global canonical order.
pub fn canonical_rank(name: &str) -> (usize, &str) {
    match CANONICAL_ORDER.iter().position(|k| *k == name) {
        Some(i) => (i, ""),
        None => (CANONICAL_ORDER.len(), name),
    }
}

fn names(factors: &[SpaceLabel]) -> String {
    factors.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(",")
}

fn check_unique(factors: &[SpaceLabel]) -> Result<(), AlgebraError> {
    let mut seen = BTreeSet::new();
    for f in factors {
        if !seen.insert(f.name.as_str()) {
            return Err(AlgebraError::DuplicateFactor(f.name.clone()));
        }
    }
    Ok(())
}

fn total_dim(factors: &[SpaceLabel]) -> usize {
    factors.iter().map(|f| f.dim).product()
}

/// Canonical permutation: `perm[k]` is the position in `factors` of the
/// k-th factor in canonical order.
fn canonical_perm(factors: &[SpaceLabel]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..factors.len()).collect();
    perm.sort_by(|&a, &b| canonical_rank(&factors[a].name).cmp(&canonical_rank(&factors[b].name)));
    perm
}

/// For a reordering `perm` of factors with dimensions `dims`, returns for each
/// linear index of the reordered space the linear index in the original space.
fn index_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; n];
    for _ in 0..total {
        let old: usize = digits.iter().zip(perm).map(|(&d, &p)| d * strides[p]).sum();
        out.push(old);
        for k in (0..n).rev() {
            digits[k] += 1;
            if digits[k] < new_dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    out
}

fn permute_matrix(mat: &CMat, map: &[usize]) -> CMat {
    let n = map.len();
    CMat::from_fn(n, n, |i, j| mat[(map[i], map[j])])
}

/// Dense complex operator on an ordered set of named factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorDoc", into = "OperatorDoc")]
pub struct LabeledOperator {
    factors: Vec<SpaceLabel>,
    mat: CMat,
}

impl LabeledOperator {
    /// Builds an operator whose matrix is written in the order of `factors`;
    /// the result is reordered canonically.
    pub fn new(factors: Vec<SpaceLabel>, mat: CMat) -> Result<Self, AlgebraError> {
        check_unique(&factors)?;
        let expected = total_dim(&factors);
        if mat.nrows() != expected || mat.ncols() != expected {
            return Err(AlgebraError::ShapeMismatch { side: mat.nrows(), expected });
        }
        Ok(Self::canonicalize(factors, mat))
    }

    fn canonicalize(factors: Vec<SpaceLabel>, mat: CMat) -> Self {
        let perm = canonical_perm(&factors);
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return LabeledOperator { factors, mat };
        }
        let dims: Vec<usize> = factors.iter().map(|f| f.dim).collect();
        let map = index_map(&dims, &perm);
        let factors = perm.iter().map(|&p| factors[p].clone()).collect();
        LabeledOperator { factors, mat: permute_matrix(&mat, &map) }
    }

    /// Builds from real and imaginary parts written in the given factor order.
    pub fn from_real(factors: Vec<SpaceLabel>, re: DMatrix<f64>) -> Result<Self, AlgebraError> {
        Self::new(factors, re.map(|x| C64::new(x, 0.0)))
    }

    pub fn scalar(value: C64) -> Self {
        LabeledOperator { factors: vec![], mat: CMat::from_element(1, 1, value) }
    }

    pub fn identity(factors: Vec<SpaceLabel>) -> Result<Self, AlgebraError> {
        let d = total_dim(&factors);
        Self::new(factors, CMat::identity(d, d))
    }

    pub fn zeros(factors: Vec<SpaceLabel>) -> Result<Self, AlgebraError> {
        let d = total_dim(&factors);
        Self::new(factors, CMat::zeros(d, d))
    }

    /// Projector |i⟩⟨i| on a single factor.
    pub fn basis_projector(label: SpaceLabel, i: usize) -> Self {
        let d = label.dim;
        let mut m = CMat::zeros(d, d);
        m[(i, i)] = C64::new(1.0, 0.0);
        LabeledOperator { factors: vec![label], mat: m }
    }

    pub fn factors(&self) -> &[SpaceLabel] {
        &self.factors
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn factor_names(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn has_factor(&self, name: &str) -> bool {
        self.factors.iter().any(|f| f.name == name)
    }

    pub fn factor(&self, name: &str) -> Option<&SpaceLabel> {
        self.factors.iter().find(|f| f.name == name)
    }

    /// Product of dimensions of the named factors.
    pub fn dim_of(&self, over: &[&str]) -> Result<usize, AlgebraError> {
        let mut d = 1;
        for name in over {
            d *= self.factor(name).ok_or_else(|| AlgebraError::UnknownFactor(name.to_string()))?.dim;
        }
        Ok(d)
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn scale(&self, c: f64) -> Self {
        LabeledOperator { factors: self.factors.clone(), mat: &self.mat * C64::new(c, 0.0) }
    }

    pub fn scale_complex(&self, c: C64) -> Self {
        LabeledOperator { factors: self.factors.clone(), mat: &self.mat * c }
    }

    pub fn adjoint(&self) -> Self {
        LabeledOperator { factors: self.factors.clone(), mat: self.mat.adjoint() }
    }

    pub fn transpose(&self) -> Self {
        LabeledOperator { factors: self.factors.clone(), mat: self.mat.transpose() }
    }

    pub fn conj(&self) -> Self {
        LabeledOperator { factors: self.factors.clone(), mat: self.mat.map(|z| z.conj()) }
    }

    fn same_factors(&self, other: &Self) -> Result<(), AlgebraError> {
        if self.factors != other.factors {
            return Err(AlgebraError::FactorMismatch { left: names(&self.factors), right: names(&other.factors) });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.same_factors(other)?;
        Ok(LabeledOperator { factors: self.factors.clone(), mat: &self.mat + &other.mat })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.same_factors(other)?;
        Ok(LabeledOperator { factors: self.factors.clone(), mat: &self.mat - &other.mat })
    }

    /// Matrix product of two operators on the same factors.
    pub fn compose(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.same_factors(other)?;
        Ok(LabeledOperator { factors: self.factors.clone(), mat: &self.mat * &other.mat })
    }

    /// Max-entry distance to `other`; factor lists must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, AlgebraError> {
        self.same_factors(other)?;
        Ok(max_abs(&(&self.mat - &other.mat)))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.mat)
    }

    /// Max-entry deviation from Hermiticity.
    pub fn hermiticity_deviation(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    pub fn hermitian_part(&self) -> Self {
        let m = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        LabeledOperator { factors: self.factors.clone(), mat: m }
    }

    fn positions(&self, over: &[&str]) -> Result<Vec<usize>, AlgebraError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(over.len());
        for name in over {
            if !seen.insert(*name) {
                return Err(AlgebraError::DuplicateFactor(name.to_string()));
            }
            let p = self
                .factors
                .iter()
                .position(|f| f.name == *name)
                .ok_or_else(|| AlgebraError::UnknownFactor(name.to_string()))?;
            out.push(p);
        }
        Ok(out)
    }

    /// Rewrites the matrix with factors in the order `perm` (positions into
    /// the current factor list). The result is not canonical; internal use.
    fn reorder(&self, perm: &[usize]) -> (Vec<SpaceLabel>, CMat) {
        let dims: Vec<usize> = self.factors.iter().map(|f| f.dim).collect();
        let factors = perm.iter().map(|&p| self.factors[p].clone()).collect();
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return (factors, self.mat.clone());
        }
        (factors, permute_matrix(&self.mat, &index_map(&dims, perm)))
    }

    /// Splits factors into (kept, selected) positions, each in current order.
    fn split(&self, over: &[&str]) -> Result<(Vec<usize>, Vec<usize>), AlgebraError> {
        let sel = self.positions(over)?;
        let mut sel_sorted = sel.clone();
        sel_sorted.sort_unstable();
        let kept = (0..self.factors.len()).filter(|k| !sel_sorted.contains(k)).collect();
        Ok((kept, sel_sorted))
    }

    /// Tensor product M ⊗ N.
    pub fn tensor(&self, other: &Self) -> Result<Self, AlgebraError> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        check_unique(&factors)?;
        Ok(Self::canonicalize(factors, self.mat.kronecker(&other.mat)))
    }

    /// Tensor product with the identity on `extra` factors.
    pub fn pad_identity(&self, extra: &[SpaceLabel]) -> Result<Self, AlgebraError> {
        if extra.is_empty() {
            return Ok(self.clone());
        }
        self.tensor(&Self::identity(extra.to_vec())?)
    }

    /// Partial trace over the named factors.
    pub fn partial_trace(&self, over: &[&str]) -> Result<Self, AlgebraError> {
        let (kept, traced) = self.split(over)?;
        if traced.is_empty() {
            return Ok(self.clone());
        }
        let mut perm = kept.clone();
        perm.extend(&traced);
        let (_, m) = self.reorder(&perm);
        let dk: usize = kept.iter().map(|&k| self.factors[k].dim).product();
        let dt: usize = traced.iter().map(|&k| self.factors[k].dim).product();
        let mut out = CMat::zeros(dk, dk);
        for i in 0..dk {
            for j in 0..dk {
                let mut s = C64::new(0.0, 0.0);
                for t in 0..dt {
                    s += m[(i * dt + t, j * dt + t)];
                }
                out[(i, j)] = s;
            }
        }
        let factors = kept.iter().map(|&k| self.factors[k].clone()).collect();
        Ok(LabeledOperator { factors, mat: out })
    }

    /// Partial transpose in the computational basis of the named factors.
    pub fn partial_transpose(&self, over: &[&str]) -> Result<Self, AlgebraError> {
        let (kept, sel) = self.split(over)?;
        if sel.is_empty() {
            return Ok(self.clone());
        }
        let mut perm = kept.clone();
        perm.extend(&sel);
        let (_, m) = self.reorder(&perm);
        let dk: usize = kept.iter().map(|&k| self.factors[k].dim).product();
        let ds: usize = sel.iter().map(|&k| self.factors[k].dim).product();
        let mut out = CMat::zeros(dk * ds, dk * ds);
        for i in 0..dk {
            for j in 0..dk {
                for s in 0..ds {
                    for t in 0..ds {
                        out[(i * ds + s, j * ds + t)] = m[(i * ds + t, j * ds + s)];
                    }
                }
            }
        }
        let factors: Vec<SpaceLabel> = perm.iter().map(|&p| self.factors[p].clone()).collect();
        Ok(Self::canonicalize(factors, out))
    }

    /// Trace-out-and-replace: (Tr_X M) ⊗ 𝟙^X / d_X.
    pub fn trace_replace(&self, over: &[&str]) -> Result<Self, AlgebraError> {
        let (_, sel) = self.split(over)?;
        if sel.is_empty() {
            return Ok(self.clone());
        }
        let labels: Vec<SpaceLabel> = sel.iter().map(|&k| self.factors[k].clone()).collect();
        let d = total_dim(&labels) as f64;
        self.partial_trace(over)?.pad_identity(&labels).map(|m| m.scale(1.0 / d))
    }

    /// Applies a product of trace-replace maps, each either `_X` or `_{[1−X]}`.
    /// All terms act on factor sets of the same operator and commute when
    /// disjoint.
    pub fn trace_replace_expr(&self, terms: &[ReplaceTerm]) -> Result<Self, AlgebraError> {
        let mut acc = self.clone();
        for term in terms {
            acc = match term {
                ReplaceTerm::Replace(set) => acc.trace_replace(&as_strs(set))?,
                ReplaceTerm::Complement(set) => {
                    let r = acc.trace_replace(&as_strs(set))?;
                    acc.sub(&r)?
                }
            };
        }
        Ok(acc)
    }

    /// Renames factors; names absent from `map` are kept.
    pub fn relabel(&self, map: &[(&str, &str)]) -> Result<Self, AlgebraError> {
        let lookup: HashMap<&str, &str> = map.iter().copied().collect();
        let factors: Vec<SpaceLabel> = self
            .factors
            .iter()
            .map(|f| SpaceLabel { name: lookup.get(f.name.as_str()).map_or(f.name.clone(), |n| n.to_string()), dim: f.dim })
            .collect();
        check_unique(&factors)?;
        Ok(Self::canonicalize(factors, self.mat.clone()))
    }

    /// Merges the named factors, in the given order (first most significant),
    /// into a single factor called `name`.
    pub fn fuse(&self, parts: &[&str], name: &str) -> Result<Self, AlgebraError> {
        let sel = self.positions(parts)?;
        let kept: Vec<usize> = (0..self.factors.len()).filter(|k| !sel.contains(k)).collect();
        let mut perm = kept.clone();
        perm.extend(&sel);
        let (_, m) = self.reorder(&perm);
        let dim = sel.iter().map(|&k| self.factors[k].dim).product();
        let mut factors: Vec<SpaceLabel> = kept.iter().map(|&k| self.factors[k].clone()).collect();
        factors.push(SpaceLabel::new(name, dim));
        check_unique(&factors)?;
        Ok(Self::canonicalize(factors, m))
    }

    /// Expresses the operator with factors in the given order. Returns the
    /// raw matrix; the operator itself stays canonical.
    pub fn matrix_in_order(&self, order: &[&str]) -> Result<CMat, AlgebraError> {
        let perm = self.positions(order)?;
        if perm.len() != self.factors.len() {
            return Err(AlgebraError::FactorMismatch { left: names(&self.factors), right: order.join(",") });
        }
        Ok(self.reorder(&perm).1)
    }

    /// Link product M * N = Tr_Y[(M ⊗ 𝟙^Z)^{T_Y} (𝟙^X ⊗ N)] over shared factors Y.
    pub fn link(&self, other: &Self) -> Result<Self, AlgebraError> {
        let mut shared = Vec::new();
        for f in &self.factors {
            if let Some(g) = other.factor(&f.name) {
                if g.dim != f.dim {
                    return Err(AlgebraError::DimMismatch { name: f.name.clone(), left: f.dim, right: g.dim });
                }
                shared.push(f.name.as_str());
            }
        }
        let (xm, ym) = self.split(&shared)?;
        let (zn, yn) = other.split(&shared)?;
        // Both operands list Y in canonical order, so ym and yn agree by name.
        let mut perm_m = xm.clone();
        perm_m.extend(&ym);
        let mut perm_n = yn.clone();
        perm_n.extend(&zn);
        let (_, m) = self.reorder(&perm_m);
        let (_, n) = other.reorder(&perm_n);
        let dx: usize = xm.iter().map(|&k| self.factors[k].dim).product();
        let dz: usize = zn.iter().map(|&k| other.factors[k].dim).product();
        let dy: usize = ym.iter().map(|&k| self.factors[k].dim).product();
        // P[(x,x'),(y'',y)] = M[(x,y''),(x',y)], Q[(y'',y),(z,z')] = N[(y'',z),(y,z')].
        let p = CMat::from_fn(dx * dx, dy * dy, |r, c| {
            let (x, xp) = (r / dx, r % dx);
            let (ypp, y) = (c / dy, c % dy);
            m[(x * dy + ypp, xp * dy + y)]
        });
        let q = CMat::from_fn(dy * dy, dz * dz, |r, c| {
            let (ypp, y) = (r / dy, r % dy);
            let (z, zp) = (c / dz, c % dz);
            n[(ypp * dz + z, y * dz + zp)]
        });
        let pq = p * q;
        let out = CMat::from_fn(dx * dz, dx * dz, |r, c| {
            let (x, z) = (r / dz, r % dz);
            let (xp, zp) = (c / dz, c % dz);
            pq[(x * dx + xp, z * dz + zp)]
        });
        let mut factors: Vec<SpaceLabel> = xm.iter().map(|&k| self.factors[k].clone()).collect();
        factors.extend(zn.iter().map(|&k| other.factors[k].clone()));
        Ok(Self::canonicalize(factors, out))
    }

    /// Frobenius-type pairing Tr[Mᵀ N] = M * N for operators on identical factors.
    pub fn pairing(&self, other: &Self) -> Result<C64, AlgebraError> {
        self.same_factors(other)?;
        Ok(self.mat.iter().zip(other.mat.iter()).map(|(a, b)| a * b).sum())
    }

    /// Hermiticity and smallest-eigenvalue report.
    pub fn psd_check(&self, tol: f64) -> Result<PsdReport, AlgebraError> {
        let deviation = self.hermiticity_deviation();
        if deviation > HERMITICITY_TOL {
            return Err(AlgebraError::NotHermitian { deviation });
        }
        let min_eigenvalue = min_eigenvalue(&self.mat);
        Ok(PsdReport { is_psd: min_eigenvalue >= -tol, min_eigenvalue })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>, AlgebraError> {
        let deviation = self.hermiticity_deviation();
        if deviation > HERMITICITY_TOL {
            return Err(AlgebraError::NotHermitian { deviation });
        }
        Ok(hermitian_eigenvalues(&self.mat))
    }
}

/// Term of a trace-replace expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplaceTerm {
    /// `_X`
    Replace(Vec<String>),
    /// `_{[1−X]}`
    Complement(Vec<String>),
}

impl ReplaceTerm {
    pub fn replace(over: &[&str]) -> Self {
        ReplaceTerm::Replace(over.iter().map(|s| s.to_string()).collect())
    }

    pub fn complement(over: &[&str]) -> Self {
        ReplaceTerm::Complement(over.iter().map(|s| s.to_string()).collect())
    }
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(|s| s.as_str()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Unitary Fourier matrix of size `n`.
fn fourier(n: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |j, k| C64::from_polar(s, 2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64))
}

/// Eigen-decomposition of the Hermitian part of `m` (unsorted), with
/// eigenvectors as columns. The complex tridiagonalization occasionally
/// breaks down to NaN on large sparse, highly degenerate inputs; those are
/// retried in a Fourier-rotated basis.
pub fn hermitian_eigen(m: &CMat) -> (DVector<f64>, CMat) {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.clone().symmetric_eigen();
    let finite = |e: &nalgebra::SymmetricEigen<C64, nalgebra::Dyn>| {
        e.eigenvalues.iter().all(|v| v.is_finite()) && e.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    };
    if finite(&eig) {
        return (eig.eigenvalues, eig.eigenvectors);
    }
    let f = fourier(h.nrows());
    let rotated = f.adjoint() * &h * &f;
    let rotated = (&rotated + rotated.adjoint()) * C64::new(0.5, 0.0);
    let eig = rotated.symmetric_eigen();
    (eig.eigenvalues, f * eig.eigenvectors)
}

/// Index sets of the connected components of the nonzero pattern of `h`.
fn sparsity_blocks(h: &CMat) -> Vec<Vec<usize>> {
    let n = h.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..j {
            if h[(i, j)] != C64::new(0.0, 0.0) {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut blocks: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        blocks.entry(r).or_default().push(i);
    }
    blocks.into_values().collect()
}

fn dense_hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let ev: Vec<f64> = if h.iter().all(|z| z.im == 0.0) {
        h.map(|z| z.re).symmetric_eigenvalues().iter().copied().collect()
    } else {
        h.clone().symmetric_eigenvalues().iter().copied().collect()
    };
    if ev.iter().any(|v| !v.is_finite()) {
        return hermitian_eigen(h).0.iter().copied().collect();
    }
    ev
}

/// Ascending eigenvalues of the Hermitian part of `m`. Block-diagonal
/// structure (up to a permutation) is split off first.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let blocks = sparsity_blocks(&h);
    let mut ev = if blocks.len() > 1 {
        let mut ev = Vec::with_capacity(h.nrows());
        for b in blocks {
            let sub = CMat::from_fn(b.len(), b.len(), |i, j| h[(b[i], b[j])]);
            ev.extend(dense_hermitian_eigenvalues(&sub));
        }
        ev
    } else {
        dense_hermitian_eigenvalues(&h)
    };
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Ket on an ordered set of named factors; same conventions as
/// [`LabeledOperator`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledKet {
    factors: Vec<SpaceLabel>,
    vec: CVec,
}

impl LabeledKet {
    pub fn new(factors: Vec<SpaceLabel>, vec: CVec) -> Result<Self, AlgebraError> {
        check_unique(&factors)?;
        let expected = total_dim(&factors);
        if vec.len() != expected {
            return Err(AlgebraError::ShapeMismatch { side: vec.len(), expected });
        }
        Ok(Self::canonicalize(factors, vec))
    }

    fn canonicalize(factors: Vec<SpaceLabel>, vec: CVec) -> Self {
        let perm = canonical_perm(&factors);
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return LabeledKet { factors, vec };
        }
        let dims: Vec<usize> = factors.iter().map(|f| f.dim).collect();
        let map = index_map(&dims, &perm);
        let factors = perm.iter().map(|&p| factors[p].clone()).collect();
        LabeledKet { factors, vec: CVec::from_fn(map.len(), |i, _| vec[map[i]]) }
    }

    /// Computational basis ket |i⟩ on one factor.
    pub fn basis(label: SpaceLabel, i: usize) -> Self {
        let mut v = CVec::zeros(label.dim);
        v[i] = C64::new(1.0, 0.0);
        LabeledKet { factors: vec![label], vec: v }
    }

    /// Ket on one factor from its amplitudes.
    pub fn from_amplitudes(label: SpaceLabel, amps: &[C64]) -> Result<Self, AlgebraError> {
        Self::new(vec![label], CVec::from_column_slice(amps))
    }

    pub fn factors(&self) -> &[SpaceLabel] {
        &self.factors
    }

    pub fn vector(&self) -> &CVec {
        &self.vec
    }

    pub fn tensor(&self, other: &Self) -> Result<Self, AlgebraError> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        check_unique(&factors)?;
        Ok(Self::canonicalize(factors, self.vec.kronecker(&other.vec)))
    }

    pub fn add(&self, other: &Self) -> Result<Self, AlgebraError> {
        if self.factors != other.factors {
            return Err(AlgebraError::FactorMismatch { left: names(&self.factors), right: names(&other.factors) });
        }
        Ok(LabeledKet { factors: self.factors.clone(), vec: &self.vec + &other.vec })
    }

    pub fn scale(&self, c: C64) -> Self {
        LabeledKet { factors: self.factors.clone(), vec: &self.vec * c }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.vec.norm_squared()
    }

    /// |ψ⟩⟨ψ|
    pub fn projector(&self) -> LabeledOperator {
        LabeledOperator { factors: self.factors.clone(), mat: &self.vec * self.vec.adjoint() }
    }
}

/// Non-normalized maximally entangled ket |𝟙⟩⟩ = Σ_i |i⟩|i⟩ on two factors.
pub fn max_entangled(x: &SpaceLabel, y: &SpaceLabel) -> Result<LabeledKet, AlgebraError> {
    if x.dim != y.dim {
        return Err(AlgebraError::DimMismatch { name: format!("{}/{}", x.name, y.name), left: x.dim, right: y.dim });
    }
    let d = x.dim;
    let mut v = CVec::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = C64::new(1.0, 0.0);
    }
    LabeledKet::new(vec![x.clone(), y.clone()], v)
}

/// Projector |𝟙⟩⟩⟨⟨𝟙| on two factors; the Choi matrix of the identity channel.
pub fn max_entangled_projector(x: &SpaceLabel, y: &SpaceLabel) -> Result<LabeledOperator, AlgebraError> {
    Ok(max_entangled(x, y)?.projector())
}

/// JSON form of an operator: row-major real and imaginary parts in the
/// canonical factor order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDoc {
    pub factors: Vec<SpaceLabel>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<LabeledOperator> for OperatorDoc {
    fn from(op: LabeledOperator) -> Self {
        let n = op.dim();
        let re = (0..n).map(|i| (0..n).map(|j| op.mat[(i, j)].re).collect()).collect();
        let im = (0..n).map(|i| (0..n).map(|j| op.mat[(i, j)].im).collect()).collect();
        OperatorDoc { factors: op.factors, re, im }
    }
}

impl TryFrom<OperatorDoc> for LabeledOperator {
    type Error = AlgebraError;

    fn try_from(doc: OperatorDoc) -> Result<Self, AlgebraError> {
        let n = total_dim(&doc.factors);
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !rows_ok(&doc.re) || !rows_ok(&doc.im) {
            let side = doc.re.len();
            return Err(AlgebraError::ShapeMismatch { side, expected: n });
        }
        let mat = CMat::from_fn(n, n, |i, j| C64::new(doc.re[i][j], doc.im[i][j]));
        LabeledOperator::new(doc.factors, mat)
    }
}

/// Orthogonal Hermitian basis of d×d matrices: the identity first, then the
/// symmetric, antisymmetric and traceless diagonal generalized Gell-Mann
/// matrices.
pub fn hermitian_basis(d: usize) -> Vec<CMat> {
    let mut out = vec![CMat::identity(d, d)];
    for p in 0..d {
        for q in p + 1..d {
            let mut s = CMat::zeros(d, d);
            s[(p, q)] = C64::new(1.0, 0.0);
            s[(q, p)] = C64::new(1.0, 0.0);
            out.push(s);
            let mut a = CMat::zeros(d, d);
            a[(p, q)] = C64::new(0.0, -1.0);
            a[(q, p)] = C64::new(0.0, 1.0);
            out.push(a);
        }
    }
    for l in 1..d {
        let mut g = CMat::zeros(d, d);
        for k in 0..l {
            g[(k, k)] = C64::new(1.0, 0.0);
        }
        g[(l, l)] = C64::new(-(l as f64), 0.0);
        out.push(g);
    }
    out
}

/// Free-function forms of the core operations.
pub fn tensor(m: &LabeledOperator, n: &LabeledOperator) -> Result<LabeledOperator, AlgebraError> {
    m.tensor(n)
}

pub fn partial_trace(m: &LabeledOperator, over: &[&str]) -> Result<LabeledOperator, AlgebraError> {
    m.partial_trace(over)
}

pub fn partial_transpose(m: &LabeledOperator, over: &[&str]) -> Result<LabeledOperator, AlgebraError> {
    m.partial_transpose(over)
}

pub fn trace_replace(m: &LabeledOperator, over: &[&str]) -> Result<LabeledOperator, AlgebraError> {
    m.trace_replace(over)
}

pub fn link_product(m: &LabeledOperator, n: &LabeledOperator) -> Result<LabeledOperator, AlgebraError> {
    m.link(n)
}

pub fn psd_check(m: &LabeledOperator, tol: f64) -> Result<PsdReport, AlgebraError> {
    m.psd_check(tol)
}

/// Single-qubit Pauli matrices, index 0..=3 for 𝟙, X, Y, Z.
pub fn pauli(k: usize) -> CMat {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match k {
        0 => CMat::from_row_slice(2, 2, &[o, z, z, o]),
        1 => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        3 => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => panic!("Pauli index out of range"),
    }
}

/// Pauli string on qubit factors; one letter from I, X, Y, Z per factor.
pub fn pauli_string(labels: &[&str], letters: &str) -> Result<LabeledOperator, AlgebraError> {
    assert_eq!(labels.len(), letters.len(), "one Pauli letter per factor");
    let mut mat = CMat::identity(1, 1);
    for c in letters.chars() {
        let k = match c {
            'I' => 0,
            'X' => 1,
            'Y' => 2,
            'Z' => 3,
            _ => panic!("unknown Pauli letter `{c}`"),
        };
        mat = mat.kronecker(&pauli(k));
    }
    LabeledOperator::new(labels.iter().map(|n| SpaceLabel::qubit(*n)).collect(), mat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(name: &str) -> SpaceLabel {
        SpaceLabel::qubit(name)
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn phi_plus() -> LabeledOperator {
        max_entangled_projector(&q("A_I"), &q("B_I")).unwrap().scale(0.5)
    }

    fn sample_matrix(d: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMat::from_fn(d, d, |_, _| c(next(), next()))
    }

    #[test]
    fn block_split_eigenvalues_match_dense() {
        // Two Hermitian blocks interleaved on indices {0, 2, 4} and {1, 3}.
        let a = sample_matrix(3, 11);
        let a = (&a + a.adjoint()) * c(0.5, 0.0);
        let b = sample_matrix(2, 12);
        let b = (&b + b.adjoint()) * c(0.5, 0.0);
        let (ia, ib) = ([0, 2, 4], [1, 3]);
        let mut m = CMat::zeros(5, 5);
        for i in 0..3 {
            for j in 0..3 {
                m[(ia[i], ia[j])] = a[(i, j)];
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                m[(ib[i], ib[j])] = b[(i, j)];
            }
        }
        assert_eq!(sparsity_blocks(&m).len(), 2);
        let split = hermitian_eigenvalues(&m);
        let mut dense: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        for (x, y) in split.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_fallback_preserves_spectrum() {
        let m = sample_matrix(6, 5);
        let h = (&m + m.adjoint()) * c(0.5, 0.0);
        let f = fourier(6);
        let rotated = f.adjoint() * &h * &f;
        let mut a: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        let mut b: Vec<f64> = rotated.symmetric_eigenvalues().iter().copied().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let (vals, vecs) = hermitian_eigen(&h);
        let recon = &vecs * CMat::from_diagonal(&vals.map(|v| c(v, 0.0))) * vecs.adjoint();
        assert!(max_abs(&(recon - &h)) < 1e-12);
    }

    #[test]
    fn canonical_order_is_applied() {
        let m = LabeledOperator::identity(vec![q("zz"), q("B_O"), q("aux"), q("A_I")]).unwrap();
        assert_eq!(m.factor_names(), vec!["A_I", "B_O", "aux", "zz"]);
    }

    #[test]
    fn tensor_of_identities() {
        let a = LabeledOperator::identity(vec![q("A_I")]).unwrap();
        let b = LabeledOperator::identity(vec![q("B_I")]).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert_eq!(ab.dim(), 4);
        assert!((ab.trace() - c(4.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn tensor_of_basis_projectors() {
        let p = LabeledOperator::basis_projector(q("A_I"), 0).tensor(&LabeledOperator::basis_projector(q("B_I"), 1)).unwrap();
        let mut expected = CMat::zeros(4, 4);
        expected[(1, 1)] = c(1.0, 0.0);
        assert_eq!(p.matrix(), &expected);
    }

    #[test]
    fn tensor_rejects_overlap() {
        let a = LabeledOperator::identity(vec![q("A_I")]).unwrap();
        assert_eq!(a.tensor(&a), Err(AlgebraError::DuplicateFactor("A_I".into())));
    }

    #[test]
    fn tensor_reorders_operands() {
        let m = LabeledOperator::new(vec![q("B_I")], sample_matrix(2, 1)).unwrap();
        let n = LabeledOperator::new(vec![q("A_I")], sample_matrix(2, 2)).unwrap();
        let mn = m.tensor(&n).unwrap();
        let direct = n.matrix().kronecker(m.matrix());
        assert!(max_abs(&(mn.matrix() - direct)) < 1e-15);
    }

    #[test]
    fn maximally_entangled_marginal() {
        let rho = phi_plus().partial_trace(&["B_I"]).unwrap();
        let expected = LabeledOperator::identity(vec![q("A_I")]).unwrap().scale(0.5);
        assert!(rho.max_abs_diff(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn partial_trace_of_product() {
        let m = LabeledOperator::new(vec![q("A_I")], sample_matrix(2, 3)).unwrap();
        let n = LabeledOperator::new(vec![q("B_I"), q("B_O")], sample_matrix(4, 4)).unwrap();
        let pt = m.tensor(&n).unwrap().partial_trace(&["B_I", "B_O"]).unwrap();
        let expected = m.scale_complex(n.trace());
        assert!(pt.max_abs_diff(&expected).unwrap() < 1e-14);
    }

    #[test]
    fn partial_trace_middle_factor_matches_index_sum() {
        let raw = sample_matrix(8, 5);
        let m = LabeledOperator::new(vec![q("A_I"), q("A_O"), q("B_I")], raw.clone()).unwrap();
        let pt = m.partial_trace(&["A_O"]).unwrap();
        let oracle = CMat::from_fn(4, 4, |r, s| {
            let (i1, i3) = (r / 2, r % 2);
            let (j1, j3) = (s / 2, s % 2);
            (0..2).map(|k| raw[(i1 * 4 + k * 2 + i3, j1 * 4 + k * 2 + j3)]).sum()
        });
        assert!(max_abs(&(pt.matrix() - oracle)) < 1e-14);
    }

    #[test]
    fn full_trace_gives_scalar() {
        let m = LabeledOperator::new(vec![q("A_I"), q("B_I")], sample_matrix(4, 6)).unwrap();
        let s = m.partial_trace(&["A_I", "B_I"]).unwrap();
        assert!(s.factors().is_empty());
        assert!((s.trace() - m.trace()).norm() < 1e-14);
    }

    #[test]
    fn unknown_factor_errors() {
        let m = LabeledOperator::identity(vec![q("A_I")]).unwrap();
        assert_eq!(m.partial_trace(&["B_I"]), Err(AlgebraError::UnknownFactor("B_I".into())));
        assert_eq!(m.partial_transpose(&["B_I"]), Err(AlgebraError::UnknownFactor("B_I".into())));
        assert_eq!(m.trace_replace(&["B_I"]), Err(AlgebraError::UnknownFactor("B_I".into())));
    }

    #[test]
    fn partial_transpose_of_product_and_full() {
        let m = LabeledOperator::new(vec![q("A_I")], sample_matrix(2, 7)).unwrap();
        let n = LabeledOperator::new(vec![q("B_I")], sample_matrix(2, 8)).unwrap();
        let pt = m.tensor(&n).unwrap().partial_transpose(&["B_I"]).unwrap();
        let expected = m.tensor(&n.transpose()).unwrap();
        assert!(pt.max_abs_diff(&expected).unwrap() < 1e-15);
        let mn = m.tensor(&n).unwrap();
        let full = mn.partial_transpose(&["A_I", "B_I"]).unwrap();
        assert!(full.max_abs_diff(&mn.transpose()).unwrap() < 1e-15);
        assert!(pt.partial_transpose(&["B_I"]).unwrap().max_abs_diff(&mn).unwrap() < 1e-15);
    }

    #[test]
    fn partial_transpose_of_bell_state_is_half_swap() {
        let pt = phi_plus().partial_transpose(&["B_I"]).unwrap();
        let ev = pt.eigenvalues().unwrap();
        let expected = [-0.5, 0.5, 0.5, 0.5];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut swap = CMat::zeros(4, 4);
        for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            swap[(i, j)] = c(0.5, 0.0);
        }
        assert!(max_abs(&(pt.matrix() - swap)) < 1e-15);
    }

    #[test]
    fn trace_replace_identities() {
        let id = LabeledOperator::identity(vec![q("A_I"), q("A_O")]).unwrap();
        assert!(id.trace_replace(&["A_O"]).unwrap().max_abs_diff(&id).unwrap() < 1e-15);
        let m = LabeledOperator::new(vec![q("A_I"), q("A_O")], sample_matrix(4, 9)).unwrap();
        let r = m.trace_replace(&["A_O"]).unwrap();
        let zero = r.trace_replace_expr(&[ReplaceTerm::complement(&["A_O"])]).unwrap();
        assert!(zero.max_abs() < 1e-15);
        assert!((r.trace() - m.trace()).norm() < 1e-14);
        assert!(r.trace_replace(&["A_O"]).unwrap().max_abs_diff(&r).unwrap() < 1e-15);
    }

    #[test]
    fn link_with_identity_is_partial_trace() {
        let m = LabeledOperator::new(vec![q("A_I"), q("B_I")], sample_matrix(4, 10)).unwrap();
        let id = LabeledOperator::identity(vec![q("B_I")]).unwrap();
        let l = m.link(&id).unwrap();
        assert!(l.max_abs_diff(&m.partial_trace(&["B_I"]).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn link_with_all_shared_is_born_rule() {
        let e = LabeledOperator::new(vec![q("At"), q("Bt")], sample_matrix(4, 11)).unwrap();
        let rho = LabeledOperator::new(vec![q("At"), q("Bt")], sample_matrix(4, 12)).unwrap();
        let l = e.link(&rho).unwrap();
        let born = (e.matrix().transpose() * rho.matrix()).trace();
        assert!((l.trace() - born).norm() < 1e-14);
        assert!((e.pairing(&rho).unwrap() - born).norm() < 1e-14);
    }

    #[test]
    fn link_without_shared_is_tensor() {
        let m = LabeledOperator::new(vec![q("A_I")], sample_matrix(2, 13)).unwrap();
        let n = LabeledOperator::new(vec![q("B_O")], sample_matrix(2, 14)).unwrap();
        assert!(m.link(&n).unwrap().max_abs_diff(&m.tensor(&n).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn link_rejects_dim_mismatch() {
        let m = LabeledOperator::identity(vec![q("A_I")]).unwrap();
        let n = LabeledOperator::identity(vec![SpaceLabel::new("A_I", 3)]).unwrap();
        assert!(matches!(m.link(&n), Err(AlgebraError::DimMismatch { .. })));
    }

    #[test]
    fn teleportation_identity() {
        let phi = max_entangled_projector(&q("At"), &q("A_I")).unwrap();
        let m = LabeledOperator::new(vec![q("A_I")], sample_matrix(2, 15)).unwrap();
        let out = phi.link(&m).unwrap();
        let expected = m.relabel(&[("A_I", "At")]).unwrap();
        assert!(out.max_abs_diff(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn max_entangled_qubit() {
        let v = max_entangled(&q("A_O"), &q("B_I")).unwrap();
        let expected = [1.0, 0.0, 0.0, 1.0];
        for (a, b) in v.vector().iter().zip(expected) {
            assert_eq!(*a, c(b, 0.0));
        }
        let p = v.projector();
        assert!((p.trace() - c(2.0, 0.0)).norm() < 1e-15);
        let choi_tp = p.partial_trace(&["B_I"]).unwrap();
        assert!(choi_tp.max_abs_diff(&LabeledOperator::identity(vec![q("A_O")]).unwrap()).unwrap() < 1e-15);
        assert!(max_entangled(&q("A_O"), &SpaceLabel::new("B_I", 3)).is_err());
    }

    #[test]
    fn psd_check_reports() {
        let m = LabeledOperator::identity(vec![q("A_I"), q("B_I")]).unwrap().scale(0.25);
        let r = m.psd_check(PSD_TOL).unwrap();
        assert!(r.is_psd);
        assert!((r.min_eigenvalue - 0.25).abs() < 1e-14);
        let d = LabeledOperator::from_real(vec![q("A_I")], DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1])).unwrap();
        assert!(!d.psd_check(PSD_TOL).unwrap().is_psd);
        let nh = LabeledOperator::from_real(vec![q("A_I")], DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
        assert!(matches!(nh.psd_check(PSD_TOL), Err(AlgebraError::NotHermitian { .. })));
    }

    #[test]
    fn fuse_merges_in_given_order() {
        let a = LabeledOperator::new(vec![q("alpha")], sample_matrix(2, 16)).unwrap();
        let b = LabeledOperator::new(vec![q("A_I")], sample_matrix(2, 17)).unwrap();
        let fused = a.tensor(&b).unwrap().fuse(&["alpha", "A_I"], "X").unwrap();
        assert_eq!(fused.factors(), &[SpaceLabel::new("X", 4)]);
        let direct = a.matrix().kronecker(b.matrix());
        assert!(max_abs(&(fused.matrix() - direct)) < 1e-15);
    }

    #[test]
    fn ket_tensor_is_canonical() {
        let k = LabeledKet::basis(q("B_I"), 1).tensor(&LabeledKet::basis(q("A_I"), 0)).unwrap();
        assert_eq!(k.factors()[0].name, "A_I");
        assert_eq!(k.vector()[1], c(1.0, 0.0));
    }

    #[test]
    fn hermitian_basis_is_orthogonal_and_complete() {
        for d in 1..5 {
            let b = hermitian_basis(d);
            assert_eq!(b.len(), d * d);
            for (i, x) in b.iter().enumerate() {
                assert!(max_abs(&(x - x.adjoint())) < 1e-15);
                for y in &b[..i] {
                    assert!((x.adjoint() * y).trace().norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let op = LabeledOperator::new(vec![q("B_I"), q("A_O")], sample_matrix(4, 7)).unwrap();
        let text = serde_json::to_string(&op).unwrap();
        let back: LabeledOperator = serde_json::from_str(&text).unwrap();
        assert_eq!(back.factors(), op.factors());
        assert!(back.max_abs_diff(&op).unwrap() < 1e-15);
    }
}
