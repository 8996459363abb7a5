//! Cone descriptions: each causally separable cone is the Minkowski sum of
//! two ordered cones, and each ordered cone is the PSD cone intersected with
//! a linear subspace given by partial-trace constraints.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{OperatorFamily, OutcomeKey};
use crate::hilbert::{hermitian_basis, AlgebraError, CMat, LabeledOperator, SpaceLabel, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConeKind {
    /// D-POVM (E_ab) with orders Ã≺B̃ and B̃≺Ã.
    #[serde(rename = "dpovm-bipartite")]
    DpovmBipartite,
    /// D-POVM (E_abf) with orders Ã≺B̃≺F̃ and B̃≺Ã≺F̃.
    #[serde(rename = "dpovm-2f")]
    DpovmTwoPlusF,
    /// A single element on Ã_I Ã_O B̃_I B̃_O.
    #[serde(rename = "mdci-element")]
    MdciElement,
    /// Elements (E_f) on Ã_I Ã_O B̃_I B̃_O F̃.
    #[serde(rename = "mdci-element-family")]
    MdciElementFamilyF,
    /// TTU assemblage (w_{f|z}) on A_I A_O B_I B_O.
    #[serde(rename = "mdci-ttu")]
    MdciTtu,
    /// TUU assemblage (w_{b,f|y,z}) on A_I A_O.
    #[serde(rename = "mdci-tuu")]
    MdciTuu,
    #[serde(rename = "process-bipartite")]
    ProcessBipartite,
    #[serde(rename = "process-2f")]
    ProcessTwoPlusF,
}

pub const ALL_KINDS: [ConeKind; 8] = [
    ConeKind::DpovmBipartite,
    ConeKind::DpovmTwoPlusF,
    ConeKind::MdciElement,
    ConeKind::MdciElementFamilyF,
    ConeKind::MdciTtu,
    ConeKind::MdciTuu,
    ConeKind::ProcessBipartite,
    ConeKind::ProcessTwoPlusF,
];

impl ConeKind {
    pub fn name(self) -> &'static str {
        match self {
            ConeKind::DpovmBipartite => "dpovm-bipartite",
            ConeKind::DpovmTwoPlusF => "dpovm-2f",
            ConeKind::MdciElement => "mdci-element",
            ConeKind::MdciElementFamilyF => "mdci-element-family",
            ConeKind::MdciTtu => "mdci-ttu",
            ConeKind::MdciTuu => "mdci-tuu",
            ConeKind::ProcessBipartite => "process-bipartite",
            ConeKind::ProcessTwoPlusF => "process-2f",
        }
    }

    pub fn from_name(name: &str) -> Option<ConeKind> {
        ALL_KINDS.iter().copied().find(|k| k.name() == name)
    }
}

/// Which factors play which role. For the D-POVM cones only the unions
/// `a_in ∪ a_out` (Ã) and `b_in ∪ b_out` (B̃) matter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSplit {
    pub a_in: Vec<String>,
    pub a_out: Vec<String>,
    pub b_in: Vec<String>,
    pub b_out: Vec<String>,
    pub f: Vec<String>,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl FactorSplit {
    pub fn new(a_in: &[&str], a_out: &[&str], b_in: &[&str], b_out: &[&str], f: &[&str]) -> Self {
        FactorSplit { a_in: strings(a_in), a_out: strings(a_out), b_in: strings(b_in), b_out: strings(b_out), f: strings(f) }
    }

    pub fn alice(&self) -> Vec<String> {
        self.a_in.iter().chain(&self.a_out).cloned().collect()
    }

    pub fn bob(&self) -> Vec<String> {
        self.b_in.iter().chain(&self.b_out).cloned().collect()
    }

    pub fn all(&self) -> Vec<String> {
        self.alice().into_iter().chain(self.bob()).chain(self.f.iter().cloned()).collect()
    }
}

/// Index ranges; unused slots are 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cardinalities {
    pub n_a: usize,
    pub n_b: usize,
    pub n_f: usize,
    pub n_y: usize,
    pub n_z: usize,
}

impl Default for Cardinalities {
    fn default() -> Self {
        Cardinalities { n_a: 1, n_b: 1, n_f: 1, n_y: 1, n_z: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub kind: ConeKind,
    pub split: FactorSplit,
    pub cardinalities: Cardinalities,
    /// Process cones only: impose validity of each ordered part explicitly.
    pub part_validity: bool,
}

/// A linear condition on the elements of one ordered part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinearConstraint {
    /// For every group G: Tr_T Σ_{k∈G} X_k acts as the identity on Q,
    /// i.e. `_{[1−Q]} Tr_T Σ_{k∈G} X_k = 0`.
    IdentityOn { name: String, groups: Vec<Vec<usize>>, traced: Vec<String>, identity_on: Vec<String> },
    /// Tr_T Σ_{k∈G_j} X_k is the same for all groups G_j.
    EqualAcross { name: String, groups: Vec<Vec<usize>>, traced: Vec<String> },
}

impl LinearConstraint {
    pub fn name(&self) -> &str {
        match self {
            LinearConstraint::IdentityOn { name, .. } | LinearConstraint::EqualAcross { name, .. } => name,
        }
    }
}

/// One ordered cone: PSD elements subject to linear constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderedCone {
    pub label: String,
    pub constraints: Vec<LinearConstraint>,
}

/// Linear functional `X ↦ Σ_k Re Tr[Γ_k X_k]` on a family.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub parts: Vec<(usize, CMat)>,
}

impl Row {
    pub fn apply_mats(&self, mats: &[&CMat]) -> f64 {
        self.parts.iter().map(|(k, g)| (g * mats[*k]).trace().re).sum()
    }

    pub fn apply(&self, family: &OperatorFamily) -> f64 {
        let mats: Vec<&CMat> = family.elements.iter().map(|e| e.matrix()).collect();
        self.apply_mats(&mats)
    }
}

impl ConeSpec {
    fn build(kind: ConeKind, split: FactorSplit, cardinalities: Cardinalities) -> Result<Self> {
        let c = cardinalities;
        if [c.n_a, c.n_b, c.n_f, c.n_y, c.n_z].contains(&0) {
            return Err(Error::InvalidParam("cardinalities must be at least 1".into()));
        }
        let mut names = split.all();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParam("factor split lists a factor twice".into()));
        }
        Ok(ConeSpec { kind, split, cardinalities, part_validity: true })
    }

    /// Bipartite D-POVM (E_ab) on Ã ⊗ B̃.
    pub fn dpovm_bipartite(alice: &[&str], bob: &[&str], n_a: usize, n_b: usize) -> Result<Self> {
        let split = FactorSplit::new(&[], alice, &[], bob, &[]);
        Self::build(ConeKind::DpovmBipartite, split, Cardinalities { n_a, n_b, ..Default::default() })
    }

    /// (2+F) D-POVM (E_abf) on Ã ⊗ B̃ ⊗ F̃; `fiona` may be empty.
    pub fn dpovm_two_plus_f(
        alice: &[&str],
        bob: &[&str],
        fiona: &[&str],
        n_a: usize,
        n_b: usize,
        n_f: usize,
    ) -> Result<Self> {
        let split = FactorSplit::new(&[], alice, &[], bob, fiona);
        Self::build(ConeKind::DpovmTwoPlusF, split, Cardinalities { n_a, n_b, n_f, ..Default::default() })
    }

    /// Single element on Ã_I Ã_O B̃_I B̃_O.
    pub fn mdci_element(a_in: &[&str], a_out: &[&str], b_in: &[&str], b_out: &[&str]) -> Result<Self> {
        let split = FactorSplit::new(a_in, a_out, b_in, b_out, &[]);
        Self::build(ConeKind::MdciElement, split, Cardinalities::default())
    }

    /// Elements (E_f) on Ã_I Ã_O B̃_I B̃_O F̃.
    pub fn mdci_element_family(split: FactorSplit, n_f: usize) -> Result<Self> {
        Self::build(ConeKind::MdciElementFamilyF, split, Cardinalities { n_f, ..Default::default() })
    }

    /// TTU assemblage (w_{f|z}) on A_I A_O B_I B_O.
    pub fn mdci_ttu(n_f: usize, n_z: usize) -> Result<Self> {
        let split = FactorSplit::new(&["A_I"], &["A_O"], &["B_I"], &["B_O"], &[]);
        Self::build(ConeKind::MdciTtu, split, Cardinalities { n_f, n_z, ..Default::default() })
    }

    /// TUU assemblage (w_{b,f|y,z}) on A_I A_O.
    pub fn mdci_tuu(n_b: usize, n_f: usize, n_y: usize, n_z: usize) -> Result<Self> {
        let split = FactorSplit::new(&["A_I"], &["A_O"], &[], &[], &[]);
        Self::build(ConeKind::MdciTuu, split, Cardinalities { n_b, n_f, n_y, n_z, ..Default::default() })
    }

    pub fn process_bipartite() -> Self {
        let split = FactorSplit::new(&["A_I"], &["A_O"], &["B_I"], &["B_O"], &[]);
        ConeSpec { kind: ConeKind::ProcessBipartite, split, cardinalities: Cardinalities::default(), part_validity: true }
    }

    pub fn process_two_plus_f() -> Self {
        let split = FactorSplit::new(&["A_I"], &["A_O"], &["B_I"], &["B_O"], &["F"]);
        ConeSpec { kind: ConeKind::ProcessTwoPlusF, split, cardinalities: Cardinalities::default(), part_validity: true }
    }

    pub fn with_part_validity(mut self, on: bool) -> Self {
        self.part_validity = on;
        self
    }

    fn expected_keys(&self) -> Vec<OutcomeKey> {
        let c = self.cardinalities;
        let r = |n: usize| (0..n).map(Some).collect::<Vec<_>>();
        let mut out = Vec::new();
        match self.kind {
            ConeKind::DpovmBipartite => {
                for a in r(c.n_a) {
                    for b in r(c.n_b) {
                        out.push(OutcomeKey { a, b, ..Default::default() });
                    }
                }
            }
            ConeKind::DpovmTwoPlusF => {
                for a in r(c.n_a) {
                    for b in r(c.n_b) {
                        for f in r(c.n_f) {
                            out.push(OutcomeKey { a, b, f, ..Default::default() });
                        }
                    }
                }
            }
            ConeKind::MdciElement | ConeKind::ProcessBipartite | ConeKind::ProcessTwoPlusF => {
                out.push(OutcomeKey::default());
            }
            ConeKind::MdciElementFamilyF => {
                for f in r(c.n_f) {
                    out.push(OutcomeKey { f, ..Default::default() });
                }
            }
            ConeKind::MdciTtu => {
                for f in r(c.n_f) {
                    for z in r(c.n_z) {
                        out.push(OutcomeKey { f, z, ..Default::default() });
                    }
                }
            }
            ConeKind::MdciTuu => {
                for b in r(c.n_b) {
                    for f in r(c.n_f) {
                        for y in r(c.n_y) {
                            for z in r(c.n_z) {
                                out.push(OutcomeKey { b, f, y, z, ..Default::default() });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Checks that `family` has the index structure and factors this cone expects.
    pub fn check_family(&self, family: &OperatorFamily) -> Result<()> {
        let mut want = self.expected_keys();
        want.sort();
        let mut have = family.keys.clone();
        have.sort();
        if want != have {
            return Err(Error::InvalidParam(format!(
                "{} cone expects {} elements with matching indices, got {}",
                self.kind.name(),
                want.len(),
                have.len()
            )));
        }
        let mut want_f = self.split.all();
        want_f.sort();
        let mut have_f: Vec<String> = family.factors().iter().map(|f| f.name.clone()).collect();
        have_f.sort();
        if want_f != have_f {
            return Err(Error::InvalidParam(format!(
                "{} cone expects factors [{}], object has [{}]",
                self.kind.name(),
                want_f.join(","),
                have_f.join(",")
            )));
        }
        Ok(())
    }

    /// The two ordered cones whose sum is the separable cone.
    pub fn ordered_cones(&self, family: &OperatorFamily) -> Result<[OrderedCone; 2]> {
        self.check_family(family)?;
        let s = &self.split;
        let (alice, bob) = (s.alice(), s.bob());
        let group_by = |key: &dyn Fn(&OutcomeKey) -> OutcomeKey| -> Vec<Vec<usize>> {
            let mut map: BTreeMap<OutcomeKey, Vec<usize>> = BTreeMap::new();
            for (i, k) in family.keys.iter().enumerate() {
                map.entry(key(k)).or_default().push(i);
            }
            map.into_values().collect()
        };
        let all = vec![(0..family.len()).collect::<Vec<usize>>()];
        let id_on = |name: &str, groups: Vec<Vec<usize>>, traced: &[String], q: &[String]| LinearConstraint::IdentityOn {
            name: name.to_string(),
            groups,
            traced: traced.to_vec(),
            identity_on: q.to_vec(),
        };
        let eq_across = |name: &str, groups: Vec<Vec<usize>>, traced: &[String]| LinearConstraint::EqualAcross {
            name: name.to_string(),
            groups,
            traced: traced.to_vec(),
        };
        let cat = |a: &[String], b: &[String]| -> Vec<String> { a.iter().chain(b).cloned().collect() };
        let cones = match self.kind {
            ConeKind::DpovmBipartite => {
                let by_a = group_by(&|k| OutcomeKey { a: k.a, ..Default::default() });
                let by_b = group_by(&|k| OutcomeKey { b: k.b, ..Default::default() });
                [
                    OrderedCone {
                        label: "At<Bt".into(),
                        constraints: vec![id_on("sum_b", by_a, &[], &bob), id_on("sum_ab", all.clone(), &bob, &alice)],
                    },
                    OrderedCone {
                        label: "Bt<At".into(),
                        constraints: vec![id_on("sum_a", by_b, &[], &alice), id_on("sum_ab", all, &alice, &bob)],
                    },
                ]
            }
            ConeKind::DpovmTwoPlusF => {
                let f = &s.f;
                let by_ab = group_by(&|k| OutcomeKey { a: k.a, b: k.b, ..Default::default() });
                let by_a = group_by(&|k| OutcomeKey { a: k.a, ..Default::default() });
                let by_b = group_by(&|k| OutcomeKey { b: k.b, ..Default::default() });
                [
                    OrderedCone {
                        label: "At<Bt<Ft".into(),
                        constraints: vec![
                            id_on("sum_f", by_ab.clone(), &[], f),
                            id_on("sum_bf", by_a, f, &bob),
                            id_on("sum_abf", all.clone(), &cat(&bob, f), &alice),
                        ],
                    },
                    OrderedCone {
                        label: "Bt<At<Ft".into(),
                        constraints: vec![
                            id_on("sum_f", by_ab, &[], f),
                            id_on("sum_af", by_b, f, &alice),
                            id_on("sum_abf", all, &cat(&alice, f), &bob),
                        ],
                    },
                ]
            }
            ConeKind::MdciElement => [
                OrderedCone { label: "At<Bt".into(), constraints: vec![id_on("element", all.clone(), &[], &s.b_out)] },
                OrderedCone { label: "Bt<At".into(), constraints: vec![id_on("element", all, &[], &s.a_out)] },
            ],
            ConeKind::MdciElementFamilyF => [
                OrderedCone {
                    label: "At<Bt<Ft".into(),
                    constraints: vec![id_on("sum_f", all.clone(), &[], &cat(&s.b_out, &s.f))],
                },
                OrderedCone {
                    label: "Bt<At<Ft".into(),
                    constraints: vec![id_on("sum_f", all, &[], &cat(&s.a_out, &s.f))],
                },
            ],
            ConeKind::MdciTtu => {
                let by_z = group_by(&|k| OutcomeKey { z: k.z, ..Default::default() });
                [
                    OrderedCone {
                        label: "A<B".into(),
                        constraints: vec![
                            id_on("sum_f", by_z.clone(), &[], &s.b_out),
                            eq_across("z_independent", by_z.clone(), &s.b_out),
                        ],
                    },
                    OrderedCone {
                        label: "B<A".into(),
                        constraints: vec![
                            id_on("sum_f", by_z.clone(), &[], &s.a_out),
                            eq_across("z_independent", by_z, &s.a_out),
                        ],
                    },
                ]
            }
            ConeKind::MdciTuu => {
                let z0 = family.keys.iter().filter_map(|k| k.z).min();
                let mut first = Vec::new();
                let mut second = Vec::new();
                let by_by = group_by(&|k| OutcomeKey { b: k.b, y: k.y, ..Default::default() });
                for g in &by_by {
                    // Groups over z within one (b, y), each summing over f.
                    let mut by_z: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
                    for &i in g {
                        by_z.entry(family.keys[i].z).or_default().push(i);
                    }
                    let z_groups: Vec<Vec<usize>> = by_z.into_values().collect();
                    first.push(eq_across("z_independent", z_groups.clone(), &[]));
                    second.push(id_on("sum_f", z_groups.clone(), &[], &s.a_out));
                    second.push(eq_across("z_independent", z_groups, &s.a_out));
                }
                let mut by_y: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
                for (i, k) in family.keys.iter().enumerate() {
                    if k.z == z0 {
                        by_y.entry(k.y).or_default().push(i);
                    }
                }
                let by_y: Vec<Vec<usize>> = by_y.into_values().collect();
                first.push(id_on("sum_bf", by_y.clone(), &[], &s.a_out));
                first.push(eq_across("y_independent", by_y, &s.a_out));
                [
                    OrderedCone { label: "A<B".into(), constraints: first },
                    OrderedCone { label: "B<A".into(), constraints: second },
                ]
            }
            ConeKind::ProcessBipartite | ConeKind::ProcessTwoPlusF => {
                let f = &s.f;
                let mut first = vec![id_on("[1-B_O]", all.clone(), f, &s.b_out)];
                let mut second = vec![id_on("[1-A_O]", all.clone(), f, &s.a_out)];
                if self.part_validity {
                    first.push(id_on("part validity [1-A_O]", all.clone(), &cat(f, &bob), &s.a_out));
                    second.push(id_on("part validity [1-B_O]", all, &cat(f, &alice), &s.b_out));
                }
                [
                    OrderedCone { label: "A<B".into(), constraints: first },
                    OrderedCone { label: "B<A".into(), constraints: second },
                ]
            }
        };
        Ok(cones)
    }
}

/// All multi-indices into per-factor Hermitian bases, skipping those that are
/// the identity on every flagged factor (when any factor is flagged).
fn product_indices(dims: &[usize], flags: &[bool]) -> Vec<Vec<usize>> {
    let any_flag = flags.iter().any(|&b| b);
    let sizes: Vec<usize> = dims.iter().map(|d| d * d).collect();
    let total: usize = sizes.iter().product();
    let mut out = Vec::new();
    let mut digits = vec![0usize; dims.len()];
    for _ in 0..total {
        let nontrivial = digits.iter().zip(flags).any(|(&d, &f)| f && d != 0);
        if !any_flag || nontrivial {
            out.push(digits.clone());
        }
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < sizes[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    out
}

fn product_operator(labels: &[SpaceLabel], bases: &[Vec<CMat>], digits: &[usize], traced: &[SpaceLabel]) -> Result<CMat> {
    let mut m = CMat::identity(1, 1);
    for (k, &d) in digits.iter().enumerate() {
        m = m.kronecker(&bases[k][d]);
    }
    let op = LabeledOperator::new(labels.to_vec(), m)?.pad_identity(traced)?;
    Ok(op.into_matrix())
}

/// Functionals whose common kernel is the subspace cut out by `constraint`.
/// Rows from one constraint are linearly independent.
pub fn constraint_rows(constraint: &LinearConstraint, factors: &[SpaceLabel]) -> Result<Vec<Row>> {
    let (groups, traced) = match constraint {
        LinearConstraint::IdentityOn { groups, traced, .. } | LinearConstraint::EqualAcross { groups, traced, .. } => {
            (groups, traced)
        }
    };
    for t in traced {
        if !factors.iter().any(|f| &f.name == t) {
            return Err(AlgebraError::UnknownFactor(t.clone()).into());
        }
    }
    let kept: Vec<SpaceLabel> = factors.iter().filter(|f| !traced.contains(&f.name)).cloned().collect();
    let traced_labels: Vec<SpaceLabel> = factors.iter().filter(|f| traced.contains(&f.name)).cloned().collect();
    let dims: Vec<usize> = kept.iter().map(|f| f.dim).collect();
    let bases: Vec<Vec<CMat>> = dims.iter().map(|&d| hermitian_basis(d)).collect();
    let mut rows = Vec::new();
    match constraint {
        LinearConstraint::IdentityOn { identity_on, .. } => {
            for q in identity_on {
                if !kept.iter().any(|f| &f.name == q) {
                    return Err(AlgebraError::UnknownFactor(q.clone()).into());
                }
            }
            let flags: Vec<bool> = kept.iter().map(|f| identity_on.contains(&f.name)).collect();
            if !flags.iter().any(|&b| b) {
                return Ok(rows);
            }
            for digits in product_indices(&dims, &flags) {
                let g = product_operator(&kept, &bases, &digits, &traced_labels)?;
                for group in groups {
                    rows.push(Row { parts: group.iter().map(|&k| (k, g.clone())).collect() });
                }
            }
        }
        LinearConstraint::EqualAcross { .. } => {
            if groups.len() < 2 {
                return Ok(rows);
            }
            for digits in product_indices(&dims, &vec![false; dims.len()]) {
                let g = product_operator(&kept, &bases, &digits, &traced_labels)?;
                for group in &groups[1..] {
                    let mut parts: Vec<(usize, CMat)> = group.iter().map(|&k| (k, g.clone())).collect();
                    parts.extend(groups[0].iter().map(|&k| (k, -g.clone())));
                    rows.push(Row { parts });
                }
            }
        }
    }
    Ok(rows)
}

/// All rows of an ordered cone.
pub fn ordered_rows(cone: &OrderedCone, factors: &[SpaceLabel]) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for c in &cone.constraints {
        rows.extend(constraint_rows(c, factors)?);
    }
    Ok(rows)
}

/// Real coordinates of a Hermitian matrix in a Frobenius-orthonormal basis.
pub fn orthonormal_coords(m: &CMat) -> Vec<f64> {
    let n = m.nrows();
    let s = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for d in 0..n {
        out.push(m[(d, d)].re);
    }
    for p in 0..n {
        for q in p + 1..n {
            out.push(s * m[(p, q)].re);
            out.push(s * m[(p, q)].im);
        }
    }
    out
}

/// Inverse of [`orthonormal_coords`].
pub fn from_orthonormal_coords(n: usize, v: &[f64]) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMat::zeros(n, n);
    for d in 0..n {
        m[(d, d)] = C64::new(v[d], 0.0);
    }
    let mut k = n;
    for p in 0..n {
        for q in p + 1..n {
            m[(p, q)] = C64::new(s * v[k], s * v[k + 1]);
            m[(q, p)] = m[(p, q)].conj();
            k += 2;
        }
    }
    m
}

/// Row functionals as a matrix in orthonormal family coordinates. Entry
/// (i, ·) is the coordinate vector of the Hermitian part of Γ_i.
pub fn row_matrix(rows: &[Row], n_elements: usize, dim: usize) -> DMatrix<f64> {
    let np = dim * dim;
    let mut r = DMatrix::zeros(rows.len(), n_elements * np);
    for (i, row) in rows.iter().enumerate() {
        for (k, g) in &row.parts {
            for (j, v) in orthonormal_coords(g).iter().enumerate() {
                r[(i, k * np + j)] += v;
            }
        }
    }
    r
}

/// Orthonormal basis (as rows) of the span of the rows of `r`.
pub fn orthonormal_row_basis(r: &DMatrix<f64>) -> DMatrix<f64> {
    if r.nrows() == 0 {
        return r.clone();
    }
    let eig = (r * r.transpose()).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..r.nrows()).filter(|&k| eig.eigenvalues[k] > 1e-10 * lmax.max(1e-300)).collect();
    let mut t = DMatrix::zeros(keep.len(), r.nrows());
    for (i, &k) in keep.iter().enumerate() {
        let s = 1.0 / eig.eigenvalues[k].sqrt();
        for c in 0..r.nrows() {
            t[(i, c)] = eig.eigenvectors[(c, k)] * s;
        }
    }
    t * r
}

/// Family of Hermitian matrices as one coordinate vector.
pub fn family_coords(mats: &[&CMat]) -> Vec<f64> {
    mats.iter().flat_map(|m| orthonormal_coords(m)).collect()
}
