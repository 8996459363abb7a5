//! Quantum instruments, POVMs and trusted input-state sets.
//!
//! An instrument element is a Choi matrix on `factors_in ∪ factors_out`.
//! Ancillas carrying trusted inputs count as inputs; the instrument is
//! trace preserving when `Tr_out Σ_k M_k = 𝟙_in`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};
use crate::hilbert::{
    max_entangled_projector, pauli, CMat, LabeledKet, LabeledOperator, SpaceLabel, C64, PSD_TOL,
};
use crate::process::ScenarioKind;

/// Residual tolerance for instrument and POVM validity.
pub const INSTRUMENT_TOL: f64 = 1e-9;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn sorted_names(f: &[SpaceLabel]) -> Vec<&str> {
    let mut v: Vec<&str> = f.iter().map(|l| l.name.as_str()).collect();
    v.sort_unstable();
    v
}

/// Family of CP maps (Choi matrices) sharing input and output factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstrumentDoc", into = "InstrumentDoc")]
pub struct Instrument {
    role: String,
    factors_in: Vec<SpaceLabel>,
    factors_out: Vec<SpaceLabel>,
    outcomes: Vec<String>,
    elements: Vec<LabeledOperator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentDoc {
    pub role: String,
    pub factors_in: Vec<SpaceLabel>,
    pub factors_out: Vec<SpaceLabel>,
    #[serde(default)]
    pub outcomes: Vec<String>,
    pub elements: Vec<LabeledOperator>,
}

impl From<Instrument> for InstrumentDoc {
    fn from(i: Instrument) -> Self {
        InstrumentDoc {
            role: i.role,
            factors_in: i.factors_in,
            factors_out: i.factors_out,
            outcomes: i.outcomes,
            elements: i.elements,
        }
    }
}

impl TryFrom<InstrumentDoc> for Instrument {
    type Error = Error;

    fn try_from(d: InstrumentDoc) -> Result<Self> {
        let outcomes = if d.outcomes.is_empty() { None } else { Some(d.outcomes) };
        Instrument::with_outcomes(d.role, d.factors_in, d.factors_out, d.elements, outcomes)
    }
}

impl Instrument {
    /// Checks that every element acts on exactly `factors_in ∪ factors_out`.
    /// Validity (CP, TP) is reported by [`validate_instrument`].
    pub fn new(
        role: impl Into<String>,
        factors_in: Vec<SpaceLabel>,
        factors_out: Vec<SpaceLabel>,
        elements: Vec<LabeledOperator>,
    ) -> Result<Self> {
        Self::with_outcomes(role, factors_in, factors_out, elements, None)
    }

    pub fn with_outcomes(
        role: impl Into<String>,
        factors_in: Vec<SpaceLabel>,
        factors_out: Vec<SpaceLabel>,
        elements: Vec<LabeledOperator>,
        outcomes: Option<Vec<String>>,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidParam("instrument needs at least one element".into()));
        }
        let mut all: Vec<SpaceLabel> = factors_in.iter().chain(&factors_out).cloned().collect();
        all.sort_by(|a, b| a.name.cmp(&b.name));
        if all.windows(2).any(|w| w[0].name == w[1].name) {
            return Err(Error::InvalidParam("a factor is declared both as input and output".into()));
        }
        for (k, e) in elements.iter().enumerate() {
            let mut have = e.factors().to_vec();
            have.sort_by(|a, b| a.name.cmp(&b.name));
            if have != all {
                return Err(Error::InvalidParam(format!(
                    "element {k} acts on [{}], declared factors are [{}]",
                    sorted_names(&have).join(","),
                    sorted_names(&all).join(",")
                )));
            }
        }
        let outcomes = outcomes.unwrap_or_else(|| (0..elements.len()).map(|k| k.to_string()).collect());
        if outcomes.len() != elements.len() {
            return Err(Error::InvalidParam("one outcome label per element".into()));
        }
        Ok(Instrument { role: role.into(), factors_in, factors_out, outcomes, elements })
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn factors_in(&self) -> &[SpaceLabel] {
        &self.factors_in
    }

    pub fn factors_out(&self) -> &[SpaceLabel] {
        &self.factors_out
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn elements(&self) -> &[LabeledOperator] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Same instrument with every element multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Instrument {
        Instrument { elements: self.elements.iter().map(|e| e.scale(c)).collect(), ..self.clone() }
    }

    /// Factors not in `untrusted`, i.e. the trusted ancillas.
    pub fn ancilla_factors(&self, untrusted: &[&str]) -> Vec<SpaceLabel> {
        self.factors_in.iter().filter(|f| !untrusted.contains(&f.name.as_str())).cloned().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instrument serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// PSD operators on one factor set summing to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Povm {
    factors: Vec<SpaceLabel>,
    elements: Vec<LabeledOperator>,
}

impl Povm {
    pub fn new(factors: Vec<SpaceLabel>, elements: Vec<LabeledOperator>) -> Result<Self> {
        let inst = Instrument::new("povm", factors.clone(), vec![], elements)?;
        Ok(Povm { factors, elements: inst.elements })
    }

    /// Projective measurement onto the given kets.
    pub fn from_kets(kets: &[LabeledKet]) -> Result<Self> {
        let first = kets.first().ok_or_else(|| Error::InvalidParam("POVM needs at least one element".into()))?;
        Self::new(first.factors().to_vec(), kets.iter().map(|k| k.projector()).collect())
    }

    /// Trivial single-outcome POVM {𝟙}.
    pub fn trivial(factors: Vec<SpaceLabel>) -> Result<Self> {
        let id = LabeledOperator::identity(factors.clone())?;
        Self::new(factors, vec![id])
    }

    pub fn factors(&self) -> &[SpaceLabel] {
        &self.factors
    }

    pub fn elements(&self) -> &[LabeledOperator] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// The POVM as an instrument with no output factors.
    pub fn to_instrument(&self, role: &str) -> Instrument {
        Instrument {
            role: role.to_string(),
            factors_in: self.factors.clone(),
            factors_out: vec![],
            outcomes: (0..self.elements.len()).map(|k| k.to_string()).collect(),
            elements: self.elements.clone(),
        }
    }

    pub fn report(&self) -> Result<ValidationReport> {
        validate_instrument(&self.to_instrument("povm"))
    }
}

/// Per-element PSD residuals (`max(0, −λ_min)`) and the TP residual
/// `max|Tr_out Σ M_k − 𝟙_in|`.
pub fn validate_instrument(inst: &Instrument) -> Result<ValidationReport> {
    let mut report = ValidationReport::new(format!("instrument {}", inst.role));
    for (k, e) in inst.elements.iter().enumerate() {
        let psd = e.psd_check(PSD_TOL)?;
        report.push(format!("psd[{}]", inst.outcomes[k]), (-psd.min_eigenvalue).max(0.0), INSTRUMENT_TOL);
    }
    let mut sum = inst.elements[0].clone();
    for e in &inst.elements[1..] {
        sum = sum.add(e)?;
    }
    let out: Vec<&str> = inst.factors_out.iter().map(|f| f.name.as_str()).collect();
    let reduced = sum.partial_trace(&out)?;
    let id = LabeledOperator::identity(inst.factors_in.clone())?;
    report.push("trace-preserving", reduced.max_abs_diff(&id)?, INSTRUMENT_TOL);
    Ok(report)
}

/// Names of the trusted factors a teleporting instrument adds for one party.
fn tilde(name: &str) -> String {
    let (party, io) = name.split_at(1);
    format!("{party}t{io}")
}

fn teleporter(role: &str, d_in: usize, d_out: usize, input: &str, output: &str) -> Result<Instrument> {
    let (ti, to) = (SpaceLabel::new(tilde(input), d_in), SpaceLabel::new(tilde(output), d_out));
    let (ui, uo) = (SpaceLabel::new(input, d_in), SpaceLabel::new(output, d_out));
    let phi_in = max_entangled_projector(&ti, &ui)?;
    let phi_out = max_entangled_projector(&to, &uo)?;
    let m0 = phi_in.scale(1.0 / d_in as f64).tensor(&phi_out)?;
    let rest = LabeledOperator::identity(vec![ti.clone(), ui.clone()])?.sub(&phi_in.scale(1.0 / d_in as f64))?;
    let m1 = rest.tensor(&phi_out)?;
    Instrument::new(role, vec![ti, ui, to], vec![uo], vec![m0, m1])
}

/// Two-outcome instruments whose element 0 is
/// `(1/d_I)|𝟙⟩⟩⟨⟨𝟙|^{X̃_I X_I} ⊗ |𝟙⟩⟩⟨⟨𝟙|^{X̃_O X_O}`, completed with
/// `(𝟙 − (1/d_I)|𝟙⟩⟩⟨⟨𝟙|)^{X̃_I X_I} ⊗ |𝟙⟩⟩⟨⟨𝟙|^{X̃_O X_O}`. Trusted factors are
/// At_I, At_O, Bt_I, Bt_O.
pub fn teleport_instruments(kind: ScenarioKind) -> Result<(Instrument, Instrument)> {
    Ok((
        teleporter("alice", kind.d_ai, kind.d_ao, "A_I", "A_O")?,
        teleporter("bob", kind.d_bi, kind.d_bo, "B_I", "B_O")?,
    ))
}

/// `M_k = |k⟩⟨k|^{X_I} ⊗ |𝟙⟩⟩⟨⟨𝟙|^{X̃ X_O}` on qubits: measure the input,
/// forward the trusted qubit.
fn measure_and_forward(role: &str, anc: &str, input: &str, output: &str) -> Result<Instrument> {
    let q = SpaceLabel::qubit;
    let phi = max_entangled_projector(&q(anc), &q(output))?;
    let elements = (0..2)
        .map(|k| LabeledOperator::basis_projector(q(input), k).tensor(&phi))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Instrument::new(role, vec![q(anc), q(input)], vec![q(output)], elements)
}

fn plus_minus(label: &str) -> [LabeledKet; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let l = SpaceLabel::qubit(label);
    [
        LabeledKet::from_amplitudes(l.clone(), &[c(s), c(s)]).expect("qubit ket"),
        LabeledKet::from_amplitudes(l, &[c(s), c(-s)]).expect("qubit ket"),
    ]
}

/// Qubit {|+⟩, |−⟩} measurement on `label`; outcome 0 is +.
pub fn plus_minus_povm(label: &str) -> Povm {
    Povm::from_kets(&plus_minus(label)).expect("two qubit projectors")
}

/// Switch instruments: Alice and Bob measure their input in the
/// computational basis and forward their trusted qubit (At, Bt); Fiona
/// measures F in the {|±⟩} basis.
pub fn qs_instruments() -> Result<(Instrument, Instrument, Povm)> {
    Ok((
        measure_and_forward("alice", "At", "A_I", "A_O")?,
        measure_and_forward("bob", "Bt", "B_I", "B_O")?,
        plus_minus_povm("F"),
    ))
}

/// (|+,+⟩ + ξ|−,0⟩)/√(1+ξ²) on Bt_I ⊗ B_I.
pub fn feix_bob_state(xi: f64) -> LabeledKet {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let n = 1.0 / (1.0 + xi * xi).sqrt();
    // Index order (Bt_I, B_I); |+,+⟩ = ½Σ|ij⟩, |−,0⟩ = (|00⟩ − |10⟩)/√2.
    let amps = [0.5 + xi * s, 0.5, 0.5 - xi * s, 0.5].map(|v| c(v * n));
    LabeledKet::new(vec![SpaceLabel::qubit("Bt_I"), SpaceLabel::qubit("B_I")], crate::hilbert::CVec::from_column_slice(&amps))
        .expect("two-qubit ket")
}

/// Instruments for the perturbed bipartite process: Alice measures A_I and
/// forwards At; Bob has trusted Bt_I, Bt_O with
/// `M_0 = |ψ⟩⟨ψ|^{Bt_I B_I} ⊗ Π^{Bt_O B_O}` and
/// `M_1 = 𝟙 ⊗ Π − |+⟩⟨+|^{Bt_I} ⊗ |−⟩⟨−|^{B_I} ⊗ Z^{Bt_O} ⊗ Z^{B_O} − M_0`,
/// Π = |00⟩⟨00| + |11⟩⟨11|.
pub fn feix_instruments(xi: f64) -> Result<(Instrument, Instrument)> {
    if !xi.is_finite() {
        return Err(Error::InvalidParam("ξ must be finite".into()));
    }
    let alice = measure_and_forward("alice", "At", "A_I", "A_O")?;
    let q = SpaceLabel::qubit;
    let mut pi = CMat::zeros(4, 4);
    pi[(0, 0)] = c(1.0);
    pi[(3, 3)] = c(1.0);
    let pi = LabeledOperator::new(vec![q("Bt_O"), q("B_O")], pi)?;
    let m0 = feix_bob_state(xi).projector().tensor(&pi)?;
    let [plus, _] = plus_minus("Bt_I");
    let [_, minus] = plus_minus("B_I");
    let zz = LabeledOperator::new(vec![q("Bt_O"), q("B_O")], pauli(3).kronecker(&pauli(3)))?;
    let twist = plus.projector().tensor(&minus.projector())?.tensor(&zz)?;
    let m1 = LabeledOperator::identity(vec![q("Bt_I"), q("B_I")])?.tensor(&pi)?.sub(&twist)?.sub(&m0)?;
    let lambda = m1.psd_check(PSD_TOL)?.min_eigenvalue;
    if lambda < -INSTRUMENT_TOL {
        return Err(Error::InvalidParam(format!("ξ = {xi} makes Bob's second element non-PSD (λ_min = {lambda:.3e})")));
    }
    let bob = Instrument::new("bob", vec![q("Bt_I"), q("B_I"), q("Bt_O")], vec![q("B_O")], vec![m0, m1])?;
    Ok((alice, bob))
}

/// `M_a = Σ_x |x⟩⟨x|^{anc} ⊗ M_{a|x}` over families indexed by the
/// classical input x.
pub fn classical_embedding(families: &[Instrument], ancilla: &str) -> Result<Instrument> {
    let first = families.first().ok_or_else(|| Error::InvalidParam("need at least one family".into()))?;
    for f in families {
        if f.len() != first.len() {
            return Err(Error::InvalidParam("families have different numbers of outcomes".into()));
        }
        if sorted_names(&f.factors_in) != sorted_names(&first.factors_in)
            || sorted_names(&f.factors_out) != sorted_names(&first.factors_out)
        {
            return Err(Error::InvalidParam("families act on different factors".into()));
        }
    }
    let anc = SpaceLabel::new(ancilla, families.len());
    let mut elements = Vec::with_capacity(first.len());
    for a in 0..first.len() {
        let mut acc: Option<LabeledOperator> = None;
        for (x, f) in families.iter().enumerate() {
            let term = LabeledOperator::basis_projector(anc.clone(), x).tensor(&f.elements[a])?;
            acc = Some(match acc {
                None => term,
                Some(s) => s.add(&term)?,
            });
        }
        elements.push(acc.expect("at least one family"));
    }
    let mut factors_in = vec![anc];
    factors_in.extend(first.factors_in.iter().cloned());
    Instrument::with_outcomes(
        first.role.clone(),
        factors_in,
        first.factors_out.clone(),
        elements,
        Some(first.outcomes.clone()),
    )
}

/// Per element, `max|Tr_{out} M_k − (Tr_{X̃_O,out} M_k) ⊗ 𝟙^{X̃_O}/d_{X̃_O}|`:
/// zero iff the marginal on the trusted output ancilla is trivial.
pub fn mdci_check(inst: &Instrument, trusted_out: &[&str]) -> Result<ValidationReport> {
    let mut report = ValidationReport::new(format!("instrument {} marginal factorization", inst.role));
    let out: Vec<&str> = inst.factors_out.iter().map(|f| f.name.as_str()).collect();
    for (k, e) in inst.elements.iter().enumerate() {
        let reduced = e.partial_trace(&out)?;
        let replaced = reduced.trace_replace(trusted_out)?;
        report.push(format!("marginal[{}]", inst.outcomes[k]), reduced.max_abs_diff(&replaced)?, INSTRUMENT_TOL);
    }
    Ok(report)
}

/// Trusted input states with a dual frame: `Σ_x Tr[D_xᵀ σ] ρ_x = σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumInputSet {
    pub label: SpaceLabel,
    pub states: Vec<CMat>,
    pub dual_frame: Vec<CMat>,
}

/// Largest Gram eigenvalue ratio below which the frame counts as singular.
const FRAME_RANK_TOL: f64 = 1e-10;

impl QuantumInputSet {
    /// Computes the dual frame from the Gram matrix `G_xy = Tr[ρ_x ρ_y]`.
    pub fn new(label: SpaceLabel, states: Vec<CMat>) -> Result<Self> {
        let d = label.dim;
        for (x, s) in states.iter().enumerate() {
            if s.nrows() != d || s.ncols() != d {
                return Err(Error::InvalidParam(format!("state {x} is not {d}×{d}")));
            }
        }
        let n = states.len();
        let gram = nalgebra::DMatrix::<f64>::from_fn(n, n, |x, y| (&states[x] * &states[y]).trace().re);
        let eig = gram.symmetric_eigen();
        let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let rank = eig.eigenvalues.iter().filter(|v| **v > FRAME_RANK_TOL * top.max(1.0)).count();
        if rank < d * d {
            return Err(Error::Frame(format!("states span a space of dimension {rank}, need {}", d * d)));
        }
        let cut = FRAME_RANK_TOL * top.max(1.0);
        let inv = eig.eigenvalues.map(|v| if v > cut { 1.0 / v } else { 0.0 });
        let pinv = &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
        // c_x = Tr[D̃_x σ] with D̃_x = Σ_y G⁺_xy ρ_y; D_x = D̃_xᵀ.
        let dual_frame = (0..n)
            .map(|x| {
                let mut acc = CMat::zeros(d, d);
                for (y, s) in states.iter().enumerate() {
                    acc += s * c(pinv[(x, y)]);
                }
                acc.transpose()
            })
            .collect();
        Ok(QuantumInputSet { label, states, dual_frame })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, x: usize) -> LabeledOperator {
        LabeledOperator::new(vec![self.label.clone()], self.states[x].clone()).expect("state matches label")
    }

    /// Coefficients `c_x = Tr[D_xᵀ σ]`.
    pub fn coefficients(&self, sigma: &CMat) -> Vec<f64> {
        self.dual_frame.iter().map(|dx| dx.iter().zip(sigma.iter()).map(|(a, b)| a * b).sum::<C64>().re).collect()
    }

    /// `Σ_x c_x ρ_x`
    pub fn reconstruct(&self, coeffs: &[f64]) -> CMat {
        let d = self.label.dim;
        let mut acc = CMat::zeros(d, d);
        for (s, cx) in self.states.iter().zip(coeffs) {
            acc += s * c(*cx);
        }
        acc
    }

    /// Max entry error of reconstructing each element of the Hermitian basis.
    pub fn reconstruction_residual(&self) -> f64 {
        crate::hilbert::hermitian_basis(self.label.dim)
            .iter()
            .map(|h| crate::hilbert::max_abs(&(self.reconstruct(&self.coefficients(h)) - h)))
            .fold(0.0, f64::max)
    }
}

fn qubit_quartet() -> Vec<CMat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let kets = [
        [c(1.0), c(0.0)],
        [c(0.0), c(1.0)],
        [c(s), c(s)],
        [c(s), C64::new(0.0, s)],
    ];
    kets.iter()
        .map(|k| {
            let v = crate::hilbert::CVec::from_column_slice(k);
            &v * v.adjoint()
        })
        .collect()
}

/// Pure states |i⟩, (|i⟩+|j⟩)/√2, (|i⟩+i|j⟩)/√2 for i < j: d² states.
fn pairwise_states(d: usize) -> Vec<CMat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut kets = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut v = crate::hilbert::CVec::zeros(d);
        v[i] = c(1.0);
        kets.push(v);
    }
    for i in 0..d {
        for j in i + 1..d {
            for phase in [c(s), C64::new(0.0, s)] {
                let mut v = crate::hilbert::CVec::zeros(d);
                v[i] = c(s);
                v[j] = phase;
                kets.push(v);
            }
        }
    }
    kets.iter().map(|v| v * v.adjoint()).collect()
}

/// Tomographically complete pure-state set on a factor of dimension `dim`:
/// the qubit quartet {|0⟩,|1⟩,|+⟩,|+i⟩} and its tensor powers when `dim` is
/// a power of two, otherwise basis states and pairwise superpositions.
pub fn tomo_input_set(label: SpaceLabel) -> Result<QuantumInputSet> {
    let dim = label.dim;
    if dim < 2 {
        return Err(Error::InvalidParam("input dimension must be at least 2".into()));
    }
    let states = if dim.is_power_of_two() {
        let quartet = qubit_quartet();
        let mut acc = vec![CMat::identity(1, 1)];
        let mut d = 1;
        while d < dim {
            acc = acc.iter().flat_map(|a| quartet.iter().map(move |q| a.kronecker(q))).collect();
            d *= 2;
        }
        acc
    } else {
        pairwise_states(dim)
    };
    QuantumInputSet::new(label, states)
}
