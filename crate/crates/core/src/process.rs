//! Process matrices: scenarios, validity, named constructions and
//! device-dependent certification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};
use crate::family::{Certifiable, OperatorFamily};
use crate::hilbert::{
    max_entangled, pauli_string, LabeledKet, LabeledOperator, OperatorDoc, ReplaceTerm, SpaceLabel, C64, PSD_TOL,
};
use crate::sdp::{certify_with, CertificationResult, CertifyOptions, ConeSpec};
use crate::sdp::solver::InteriorPointSolver;

/// Residual tolerance of the validity checks.
pub const VALIDITY_TOL: f64 = 1e-9;

/// Name of the target system traced out of the switch.
pub const SWITCH_TARGET: &str = "Tgt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioVariant {
    Bipartite,
    TwoPlusF,
}

/// Factor dimensions of a bipartite or (2+F) scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioKind {
    pub variant: ScenarioVariant,
    pub d_ai: usize,
    pub d_ao: usize,
    pub d_bi: usize,
    pub d_bo: usize,
    pub d_f: Option<usize>,
}

impl ScenarioKind {
    pub fn bipartite(d_ai: usize, d_ao: usize, d_bi: usize, d_bo: usize) -> Result<Self> {
        let k = ScenarioKind { variant: ScenarioVariant::Bipartite, d_ai, d_ao, d_bi, d_bo, d_f: None };
        k.check()?;
        Ok(k)
    }

    pub fn two_plus_f(d_ai: usize, d_ao: usize, d_bi: usize, d_bo: usize, d_f: usize) -> Result<Self> {
        let k = ScenarioKind { variant: ScenarioVariant::TwoPlusF, d_ai, d_ao, d_bi, d_bo, d_f: Some(d_f) };
        k.check()?;
        Ok(k)
    }

    pub fn qubit_bipartite() -> Self {
        ScenarioKind { variant: ScenarioVariant::Bipartite, d_ai: 2, d_ao: 2, d_bi: 2, d_bo: 2, d_f: None }
    }

    pub fn qubit_two_plus_f() -> Self {
        ScenarioKind { variant: ScenarioVariant::TwoPlusF, d_ai: 2, d_ao: 2, d_bi: 2, d_bo: 2, d_f: Some(2) }
    }

    fn check(&self) -> Result<()> {
        if [self.d_ai, self.d_ao, self.d_bi, self.d_bo].contains(&0) || self.d_f == Some(0) {
            return Err(Error::InvalidParam("scenario dimensions must be at least 1".into()));
        }
        let has_f = self.d_f.is_some();
        if has_f != (self.variant == ScenarioVariant::TwoPlusF) {
            return Err(Error::InvalidParam("F is present exactly in the (2+F) scenario".into()));
        }
        Ok(())
    }

    pub fn factors(&self) -> Vec<SpaceLabel> {
        let mut f = vec![
            SpaceLabel::new("A_I", self.d_ai),
            SpaceLabel::new("A_O", self.d_ao),
            SpaceLabel::new("B_I", self.d_bi),
            SpaceLabel::new("B_O", self.d_bo),
        ];
        if let Some(d) = self.d_f {
            f.push(SpaceLabel::new("F", d));
        }
        f
    }

    /// Reads the dimensions off an operator's factors.
    pub fn from_factors(factors: &[SpaceLabel]) -> Result<Self> {
        let dim = |n: &str| factors.iter().find(|f| f.name == n).map(|f| f.dim);
        let get = |n: &str| dim(n).ok_or_else(|| Error::InvalidParam(format!("process lacks factor {n}")));
        let (ai, ao, bi, bo) = (get("A_I")?, get("A_O")?, get("B_I")?, get("B_O")?);
        let expected = 4 + usize::from(dim("F").is_some());
        if factors.len() != expected {
            return Err(Error::InvalidParam("process has factors outside A_I, A_O, B_I, B_O, F".into()));
        }
        match dim("F") {
            Some(df) => Self::two_plus_f(ai, ao, bi, bo, df),
            None => Self::bipartite(ai, ao, bi, bo),
        }
    }

    /// d_{A_O} d_{B_O}
    pub fn trace_norm(&self) -> f64 {
        (self.d_ao * self.d_bo) as f64
    }

    pub fn cone(&self) -> ConeSpec {
        match self.variant {
            ScenarioVariant::Bipartite => ConeSpec::process_bipartite(),
            ScenarioVariant::TwoPlusF => ConeSpec::process_two_plus_f(),
        }
    }
}

/// A validated process matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProcessDoc", into = "ProcessDoc")]
pub struct ProcessMatrix {
    kind: ScenarioKind,
    w: LabeledOperator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDoc {
    pub kind: ScenarioVariant,
    #[serde(flatten)]
    pub op: OperatorDoc,
}

impl From<ProcessMatrix> for ProcessDoc {
    fn from(p: ProcessMatrix) -> Self {
        ProcessDoc { kind: p.kind.variant, op: p.w.into() }
    }
}

impl TryFrom<ProcessDoc> for ProcessMatrix {
    type Error = Error;

    fn try_from(doc: ProcessDoc) -> Result<Self> {
        let w = LabeledOperator::try_from(doc.op)?;
        let kind = ScenarioKind::from_factors(w.factors())?;
        if kind.variant != doc.kind {
            return Err(Error::InvalidParam("declared kind does not match the factors".into()));
        }
        validate_process(w, kind)
    }
}

impl ProcessMatrix {
    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn operator(&self) -> &LabeledOperator {
        &self.w
    }

    /// 𝟙/(d_{A_I} d_{B_I} d_F): trace d_{A_O} d_{B_O}.
    pub fn white_noise(kind: ScenarioKind) -> Result<Self> {
        let id = LabeledOperator::identity(kind.factors())?;
        let d_in = (kind.d_ai * kind.d_bi * kind.d_f.unwrap_or(1)) as f64;
        validate_process(id.scale(1.0 / d_in), kind)
    }

    /// (W + r·N)/(1 + r)
    pub fn mix(&self, other: &ProcessMatrix, r: f64) -> Result<Self> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::InvalidParam(format!("noise weight must be finite and ≥ 0, got {r}")));
        }
        if self.kind != other.kind {
            return Err(Error::InvalidParam("processes belong to different scenarios".into()));
        }
        let w = self.w.add(&other.w.scale(r))?.scale(1.0 / (1.0 + r));
        Ok(ProcessMatrix { kind: self.kind, w })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("process serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Wraps an operator without validation, for callers that validated it.
    pub(crate) fn new_unchecked(kind: ScenarioKind, w: LabeledOperator) -> Self {
        ProcessMatrix { kind, w }
    }
}

impl Certifiable for ProcessMatrix {
    fn family(&self) -> OperatorFamily {
        OperatorFamily::single(self.w.clone())
    }
}

/// Names and trace-replace expressions of the projective validity
/// constraints: `_{[1−A_O]B}`, `_{[1−B_O]A}`, `_{[1−A_O][1−B_O]}` (each
/// followed by `F` in the (2+F) scenario).
pub fn validity_constraints(kind: ScenarioKind) -> Vec<(String, Vec<ReplaceTerm>)> {
    let (f, suffix): (Vec<&str>, &str) = match kind.variant {
        ScenarioVariant::Bipartite => (vec![], ""),
        ScenarioVariant::TwoPlusF => (vec!["F"], "F"),
    };
    let with_f = |base: &[&'static str]| -> Vec<&'static str> { base.iter().chain(&f).copied().collect() };
    vec![
        (
            format!("[1-A_O]B{suffix}"),
            vec![ReplaceTerm::replace(&with_f(&["B_I", "B_O"])), ReplaceTerm::complement(&["A_O"])],
        ),
        (
            format!("[1-B_O]A{suffix}"),
            vec![ReplaceTerm::replace(&with_f(&["A_I", "A_O"])), ReplaceTerm::complement(&["B_O"])],
        ),
        (
            format!("[1-A_O][1-B_O]{suffix}"),
            vec![ReplaceTerm::replace(&f), ReplaceTerm::complement(&["A_O"]), ReplaceTerm::complement(&["B_O"])],
        ),
    ]
}

/// Every validity check with its residual.
pub fn process_report(w: &LabeledOperator, kind: ScenarioKind) -> Result<ValidationReport> {
    let mut names: Vec<String> = w.factors().iter().map(|f| f.name.clone()).collect();
    let mut want: Vec<String> = kind.factors().iter().map(|f| f.name.clone()).collect();
    names.sort();
    want.sort();
    if names != want || kind.factors().iter().any(|f| w.factor(&f.name) != Some(f)) {
        return Err(Error::InvalidParam(format!(
            "process factors [{}] do not match the scenario [{}]",
            names.join(","),
            want.join(",")
        )));
    }
    let mut report = ValidationReport::new("process");
    report.push("hermitian", w.hermiticity_deviation(), VALIDITY_TOL);
    let herm = w.hermitian_part();
    let min_eig = crate::hilbert::min_eigenvalue(herm.matrix());
    report.push_lower_bound("psd", min_eig, PSD_TOL);
    let tr = w.trace();
    report.push("trace", (tr - C64::new(kind.trace_norm(), 0.0)).norm(), VALIDITY_TOL * kind.trace_norm());
    for (name, terms) in validity_constraints(kind) {
        let residual = herm.trace_replace_expr(&terms)?.max_abs();
        report.push(name, residual, VALIDITY_TOL);
    }
    Ok(report)
}

/// Validates `w` as a process of the given scenario.
pub fn validate_process(w: LabeledOperator, kind: ScenarioKind) -> Result<ProcessMatrix> {
    process_report(&w, kind)?.into_result()?;
    Ok(ProcessMatrix { kind, w })
}

/// Parameters of the named families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub q: f64,
    pub epsilon: f64,
    pub r: f64,
    pub xi: f64,
}

/// Mixing weight at which the perturbed family has maximal robustness.
pub fn feix_q_star() -> f64 {
    3f64.sqrt() - 1.0
}

/// Perturbation paired with [`feix_q_star`].
pub fn feix_epsilon_star() -> f64 {
    4.0 / 3f64.sqrt() - 2.0
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams { q: feix_q_star(), epsilon: feix_epsilon_star(), r: 0.0, xi: 0.01 }
    }
}

/// Largest |1 − q + ε| keeping the perturbed family PSD.
pub fn feix_bound(q: f64) -> f64 {
    ((1.0 - q) * (q + 3.0) / 3.0).max(0.0).sqrt()
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::InvalidParam(format!("q = {} is outside [0, 1]", self.q)));
        }
        if self.r < 0.0 || !self.r.is_finite() {
            return Err(Error::InvalidParam(format!("r = {} must be finite and ≥ 0", self.r)));
        }
        if (1.0 - self.q + self.epsilon).abs() > feix_bound(self.q) + 1e-12 {
            return Err(Error::InvalidParam(format!(
                "|1 − q + ε| = {:.6} exceeds the positivity bound {:.6}",
                (1.0 - self.q + self.epsilon).abs(),
                feix_bound(self.q)
            )));
        }
        if !self.xi.is_finite() {
            return Err(Error::InvalidParam("ξ must be finite".into()));
        }
        Ok(())
    }
}

/// The quantum switch with target |0⟩ and control |+⟩, target output traced out.
pub fn quantum_switch() -> ProcessMatrix {
    let q = SpaceLabel::qubit;
    let (ai, ao, bi, bo, f, t) = (q("A_I"), q("A_O"), q("B_I"), q("B_O"), q("F"), q(SWITCH_TARGET));
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let build = || -> Result<LabeledOperator> {
        let first = LabeledKet::basis(ai.clone(), 0)
            .tensor(&max_entangled(&ao, &bi)?)?
            .tensor(&max_entangled(&bo, &t)?)?
            .tensor(&LabeledKet::basis(f.clone(), 0))?;
        let second = LabeledKet::basis(bi.clone(), 0)
            .tensor(&max_entangled(&bo, &ai)?)?
            .tensor(&max_entangled(&ao, &t)?)?
            .tensor(&LabeledKet::basis(f.clone(), 1))?;
        let w = first.scale(s).add(&second.scale(s))?;
        Ok(w.projector().partial_trace(&[SWITCH_TARGET])?)
    };
    let w = build().expect("switch construction is well formed");
    ProcessMatrix::new_unchecked(ScenarioKind::qubit_two_plus_f(), w)
}

/// (W_QS + r·𝟙/8)/(1 + r)
pub fn depolarized_switch(r: f64) -> Result<ProcessMatrix> {
    let qs = quantum_switch();
    qs.mix(&ProcessMatrix::white_noise(qs.kind)?, r)
}

/// 𝟙/4 + (q/12)(𝟙XX𝟙 + 𝟙YY𝟙 + 𝟙ZZ𝟙) + ((1−q+ε)/4) Z𝟙XZ, factors written
/// A_I A_O B_I B_O.
pub fn feix_process(q: f64, epsilon: f64) -> Result<ProcessMatrix> {
    ScenarioParams { q, epsilon, r: 0.0, xi: 0.0 }.validate()?;
    let labels = ["A_I", "A_O", "B_I", "B_O"];
    let mut w = pauli_string(&labels, "IIII")?.scale(0.25);
    for s in ["IXXI", "IYYI", "IZZI"] {
        w = w.add(&pauli_string(&labels, s)?.scale(q / 12.0))?;
    }
    w = w.add(&pauli_string(&labels, "ZIXZ")?.scale((1.0 - q + epsilon) / 4.0))?;
    Ok(ProcessMatrix::new_unchecked(ScenarioKind::qubit_bipartite(), w))
}

/// The perturbed family at q = √3 − 1, ε = 4/√3 − 2, mixed with white noise.
pub fn depolarized_feix(r: f64) -> Result<ProcessMatrix> {
    let w = feix_process(feix_q_star(), feix_epsilon_star())?;
    w.mix(&ProcessMatrix::white_noise(w.kind)?, r)
}

/// Random robustness of `w` against `noise` in the process-level cone.
pub fn certify_process(w: &ProcessMatrix, noise: &ProcessMatrix) -> Result<CertificationResult> {
    certify_process_with(w, noise, true, &CertifyOptions::default())
}

/// As [`certify_process`]; `part_validity` toggles the explicit validity
/// constraints on the ordered parts.
pub fn certify_process_with(
    w: &ProcessMatrix,
    noise: &ProcessMatrix,
    part_validity: bool,
    opts: &CertifyOptions,
) -> Result<CertificationResult> {
    if w.kind != noise.kind {
        return Err(Error::InvalidParam("process and noise belong to different scenarios".into()));
    }
    let cone = w.kind.cone().with_part_validity(part_validity);
    certify_with(w, &cone, noise, opts, &InteriorPointSolver::new(opts.solver))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{CMat, CVec};

    #[test]
    fn white_noise_is_valid() {
        for kind in [ScenarioKind::qubit_bipartite(), ScenarioKind::two_plus_f(2, 3, 3, 2, 2).unwrap()] {
            let w = ProcessMatrix::white_noise(kind).unwrap();
            assert!((w.operator().trace().re - kind.trace_norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn switch_is_valid_rank_two_with_trace_four() {
        let w = quantum_switch();
        let report = process_report(w.operator(), w.kind()).unwrap();
        assert!(report.is_valid(), "{report}");
        for c in &report.checks {
            if c.name.starts_with('[') {
                assert!(c.residual < 1e-12, "{}: {}", c.name, c.residual);
            }
        }
        assert!((w.operator().trace().re - 4.0).abs() < 1e-12);
        let ev = w.operator().eigenvalues().unwrap();
        assert_eq!(ev.iter().filter(|x| x.abs() > 1e-10).count(), 2);
    }

    /// |w⟩ written out entry by entry, index order (A_I, A_O, B_I, B_O, F, T).
    fn switch_ket_oracle() -> CVec {
        let idx = |ai: usize, ao: usize, bi: usize, bo: usize, f: usize, t: usize| {
            ((((ai * 2 + ao) * 2 + bi) * 2 + bo) * 2 + f) * 2 + t
        };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = CVec::zeros(64);
        for i in 0..2 {
            for j in 0..2 {
                // |0⟩^{A_I}|i i⟩^{A_O B_I}|j j⟩^{B_O T}|0⟩^F
                v[idx(0, i, i, j, 0, j)] += C64::new(s, 0.0);
                // |0⟩^{B_I}|i i⟩^{B_O A_I}|j j⟩^{A_O T}|1⟩^F
                v[idx(i, j, 0, i, 1, j)] += C64::new(s, 0.0);
            }
        }
        v
    }

    #[test]
    fn plus_slice_matches_ket_oracle() {
        let w = quantum_switch();
        let plus = LabeledKet::from_amplitudes(SpaceLabel::qubit("F"), &[C64::new(0.5f64.sqrt(), 0.0); 2]).unwrap();
        let got = w.operator().link(&plus.projector()).unwrap();
        // ⟨+|^F on the oracle ket, then trace out T.
        let v = switch_ket_oracle();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut u = CVec::zeros(32);
        for rest in 0..16 {
            for t in 0..2 {
                let f0 = (rest * 2) * 2 + t;
                let f1 = (rest * 2 + 1) * 2 + t;
                u[rest * 2 + t] = (v[f0] + v[f1]) * s;
            }
        }
        let mut want = CMat::zeros(16, 16);
        for r in 0..16 {
            for c in 0..16 {
                for t in 0..2 {
                    want[(r, c)] += u[r * 2 + t] * u[c * 2 + t].conj();
                }
            }
        }
        let diff = (got.matrix() - want).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn perturbation_on_alice_output_breaks_first_constraint() {
        let w = quantum_switch();
        let labels = ["A_I", "A_O", "B_I", "B_O", "F"];
        let bad = w.operator().add(&pauli_string(&labels, "IZIII").unwrap().scale(0.1)).unwrap();
        let report = process_report(&bad, w.kind()).unwrap();
        let c = report.check("[1-A_O]BF").unwrap();
        assert!(!c.passed && c.residual > 0.01);
        assert!(report.check("[1-B_O]AF").unwrap().passed);
        assert!(matches!(validate_process(bad, w.kind()), Err(Error::Invalid(_))));
    }

    #[test]
    fn depolarized_switch_limits() {
        let w0 = depolarized_switch(0.0).unwrap();
        assert_eq!(w0.operator(), quantum_switch().operator());
        let big = depolarized_switch(1e6).unwrap();
        let noise = ProcessMatrix::white_noise(ScenarioKind::qubit_two_plus_f()).unwrap();
        assert!(big.operator().max_abs_diff(noise.operator()).unwrap() < 1e-6);
        assert!(matches!(depolarized_switch(-0.1), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn feix_family_is_valid_and_bounded() {
        let w = feix_process(feix_q_star(), feix_epsilon_star()).unwrap();
        let report = process_report(w.operator(), w.kind()).unwrap();
        assert!(report.is_valid(), "{report}");
        assert!((w.operator().trace().re - 4.0).abs() < 1e-12);
        // The bound is tight at the starred parameters.
        let lmin = w.operator().eigenvalues().unwrap()[0];
        assert!(lmin.abs() < 1e-12, "{lmin}");
        assert!(matches!(feix_process(0.5, 2.0), Err(Error::InvalidParam(_))));
        assert!(matches!(feix_process(1.5, 0.0), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn json_round_trip() {
        let w = quantum_switch();
        let back = ProcessMatrix::from_json(&w.to_json()).unwrap();
        assert_eq!(back.kind(), w.kind());
        assert!(back.operator().max_abs_diff(w.operator()).unwrap() < 1e-15);
    }

    #[test]
    fn json_with_wrong_kind_is_rejected() {
        let text = quantum_switch().to_json().replace("TwoPlusF", "Bipartite");
        assert!(ProcessMatrix::from_json(&text).is_err());
    }
}
