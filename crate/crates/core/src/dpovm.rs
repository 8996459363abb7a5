//! Distributed POVMs and assemblages induced by instruments acting on a
//! process matrix, plus the inverse construction for causally separable
//! D-POVMs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};
use crate::family::{Certifiable, OperatorFamily, OutcomeKey};
use crate::hilbert::{
    hermitian_eigen, max_entangled_projector, CMat, CVec, LabeledKet, LabeledOperator, SpaceLabel, C64, PSD_TOL,
};
use crate::instruments::{Instrument, Povm, QuantumInputSet};
use crate::process::{process_report, validate_process, ProcessMatrix, ScenarioKind, ScenarioVariant};
use crate::sdp::{ConeSpec, FactorSplit};

/// Residual tolerance for D-POVM and assemblage validity.
pub const DPOVM_TOL: f64 = 1e-9;

/// Eigenvalues at or below this are dropped from spectral decompositions.
pub const RANK_CUTOFF: f64 = 1e-10;

const UNTRUSTED_ALICE: [&str; 2] = ["A_I", "A_O"];
const UNTRUSTED_BOB: [&str; 2] = ["B_I", "B_O"];

/// A D-POVM: elements on the trusted factors, keyed by outcomes and
/// classical inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DpovmDoc", into = "DpovmDoc")]
pub struct Dpovm {
    family: OperatorFamily,
    split: FactorSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpovmEntry {
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub f: Option<usize>,
    pub y: Option<usize>,
    pub z: Option<usize>,
    pub op: LabeledOperator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpovmDoc {
    pub split: FactorSplit,
    pub elements: Vec<DpovmEntry>,
}

impl From<Dpovm> for DpovmDoc {
    fn from(d: Dpovm) -> Self {
        let elements = d
            .family
            .keys
            .iter()
            .zip(d.family.elements)
            .map(|(k, op)| DpovmEntry { a: k.a, b: k.b, f: k.f, y: k.y, z: k.z, op })
            .collect();
        DpovmDoc { split: d.split, elements }
    }
}

impl TryFrom<DpovmDoc> for Dpovm {
    type Error = Error;

    fn try_from(doc: DpovmDoc) -> Result<Self> {
        let keys = doc.elements.iter().map(|e| OutcomeKey { a: e.a, b: e.b, f: e.f, y: e.y, z: e.z }).collect();
        let elements = doc.elements.into_iter().map(|e| e.op).collect();
        Dpovm::new(OperatorFamily::new(keys, elements)?, doc.split)
    }
}

fn names(f: &[SpaceLabel]) -> Vec<String> {
    let mut v: Vec<String> = f.iter().map(|l| l.name.clone()).collect();
    v.sort();
    v
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(|s| s.as_str()).collect()
}

/// Trusted factor names ending in `_O` are outputs, the rest inputs.
fn split_io(trusted: &[SpaceLabel]) -> (Vec<String>, Vec<String>) {
    let (o, i): (Vec<&SpaceLabel>, Vec<&SpaceLabel>) = trusted.iter().partition(|l| l.name.ends_with("_O"));
    (i.iter().map(|l| l.name.clone()).collect(), o.iter().map(|l| l.name.clone()).collect())
}

impl Dpovm {
    /// Checks that the elements act on exactly the factors named by `split`.
    pub fn new(family: OperatorFamily, split: FactorSplit) -> Result<Self> {
        let mut want = split.all();
        want.sort();
        if names(family.factors()) != want {
            return Err(Error::InvalidParam(format!(
                "elements act on [{}], split names [{}]",
                names(family.factors()).join(","),
                want.join(",")
            )));
        }
        Ok(Dpovm { family, split })
    }

    pub fn family(&self) -> &OperatorFamily {
        &self.family
    }

    pub fn split(&self) -> &FactorSplit {
        &self.split
    }

    pub fn get(&self, key: &OutcomeKey) -> Option<&LabeledOperator> {
        self.family.get(key)
    }

    /// (self + r·other)/(1 + r)
    pub fn mix(&self, other: &Dpovm, r: f64) -> Result<Dpovm> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::InvalidParam(format!("noise weight must be finite and ≥ 0, got {r}")));
        }
        let family = self.family.add_scaled(&other.family, r)?.scale(1.0 / (1.0 + r));
        Ok(Dpovm { family, split: self.split.clone() })
    }

    /// Convex combination `q·self + (1 − q)·other`.
    pub fn convex(&self, other: &Dpovm, q: f64) -> Result<Dpovm> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParam(format!("weight must lie in [0, 1], got {q}")));
        }
        let family = self.family.scale(q).add_scaled(&other.family, 1.0 - q)?;
        Ok(Dpovm { family, split: self.split.clone() })
    }

    /// Each element replaced by `𝟙/n`, with n the number of outcome tuples
    /// per classical input.
    pub fn uniform_noise(&self) -> Result<Dpovm> {
        let mut per_input: BTreeMap<(Option<usize>, Option<usize>), usize> = BTreeMap::new();
        for k in &self.family.keys {
            *per_input.entry((k.y, k.z)).or_default() += 1;
        }
        let id = LabeledOperator::identity(self.family.factors().to_vec())?;
        let elements = self.family.keys.iter().map(|k| id.scale(1.0 / per_input[&(k.y, k.z)] as f64)).collect();
        Ok(Dpovm { family: OperatorFamily::new(self.family.keys.clone(), elements)?, split: self.split.clone() })
    }

    /// The separable cone matching the outcome structure (no classical inputs).
    pub fn cone(&self) -> Result<ConeSpec> {
        let keys = &self.family.keys;
        if keys.iter().any(|k| k.y.is_some() || k.z.is_some()) {
            return Err(Error::InvalidParam("D-POVM cones take no classical inputs".into()));
        }
        let count = |slot: fn(&OutcomeKey) -> Option<usize>| self.family.distinct(slot).len();
        let (alice, bob) = (self.split.alice(), self.split.bob());
        if keys.iter().all(|k| k.f.is_none()) {
            ConeSpec::dpovm_bipartite(&as_strs(&alice), &as_strs(&bob), count(|k| k.a), count(|k| k.b))
        } else {
            ConeSpec::dpovm_two_plus_f(
                &as_strs(&alice),
                &as_strs(&bob),
                &as_strs(&self.split.f),
                count(|k| k.a),
                count(|k| k.b),
                count(|k| k.f),
            )
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("D-POVM serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl Certifiable for Dpovm {
    fn family(&self) -> OperatorFamily {
        self.family.clone()
    }
}

/// PSD residual per element and, per classical input, `max|Σ_outcomes E − 𝟙|`.
pub fn validate_dpovm(e: &Dpovm) -> Result<ValidationReport> {
    let mut report = ValidationReport::new("D-POVM");
    let mut worst_psd: f64 = 0.0;
    for el in &e.family.elements {
        worst_psd = worst_psd.max(-el.psd_check(PSD_TOL)?.min_eigenvalue);
    }
    report.push("psd", worst_psd.max(0.0), DPOVM_TOL);
    let id = LabeledOperator::identity(e.family.factors().to_vec())?;
    let inputs: Vec<(Option<usize>, Option<usize>)> = {
        let mut v: Vec<_> = e.family.keys.iter().map(|k| (k.y, k.z)).collect();
        v.sort();
        v.dedup();
        v
    };
    for (y, z) in inputs {
        let sum = e.family.sum_where(|k| k.y == y && k.z == z)?;
        let label = match (y, z) {
            (None, None) => "normalization".to_string(),
            _ => format!("normalization[y={y:?},z={z:?}]"),
        };
        report.push(label, sum.max_abs_diff(&id)?, DPOVM_TOL);
    }
    Ok(report)
}

fn check_party(inst: &Instrument, w: &ProcessMatrix, untrusted: &[&str]) -> Result<()> {
    for name in untrusted {
        let want = w.operator().factor(name).map(|f| f.dim);
        let have = inst.factors_in().iter().chain(inst.factors_out()).find(|f| f.name == *name).map(|f| f.dim);
        if want != have {
            return Err(Error::InvalidParam(format!(
                "instrument {} does not match the process on {name} ({have:?} vs {want:?})",
                inst.role()
            )));
        }
    }
    for f in inst.factors_in().iter().chain(inst.factors_out()) {
        if w.operator().has_factor(&f.name) && !untrusted.contains(&f.name.as_str()) {
            return Err(Error::InvalidParam(format!("instrument {} acts on another party's factor {}", inst.role(), f.name)));
        }
    }
    Ok(())
}

fn trusted_of(inst: &Instrument, w: &ProcessMatrix) -> Vec<SpaceLabel> {
    inst.factors_in().iter().filter(|f| !w.operator().has_factor(&f.name)).cloned().collect()
}

/// `E_{a,b(,f)|y,z} = (M_a ⊗ M_{b|y} ⊗ M_{f|z}) * W`. `bob` and `fiona` are
/// indexed by the classical inputs y and z; a single entry means no input
/// (key slot `None`); `fiona` is empty in the bipartite scenario.
pub fn induce_dpovm(w: &ProcessMatrix, alice: &Instrument, bob: &[Instrument], fiona: &[Instrument]) -> Result<Dpovm> {
    let kind = w.kind();
    if bob.is_empty() {
        return Err(Error::InvalidParam("Bob needs at least one instrument".into()));
    }
    let two_f = kind.variant == ScenarioVariant::TwoPlusF;
    if two_f == fiona.is_empty() {
        return Err(Error::InvalidParam("Fiona's devices are required exactly in the (2+F) scenario".into()));
    }
    check_party(alice, w, &UNTRUSTED_ALICE)?;
    for b in bob {
        check_party(b, w, &UNTRUSTED_BOB)?;
    }
    for f in fiona {
        check_party(f, w, &["F"])?;
    }
    let alice_t = trusted_of(alice, w);
    let bob_t = trusted_of(&bob[0], w);
    let fiona_t = fiona.first().map(|f| trusted_of(f, w)).unwrap_or_default();
    if bob.iter().any(|b| names(&trusted_of(b, w)) != names(&bob_t))
        || fiona.iter().any(|f| names(&trusted_of(f, w)) != names(&fiona_t))
    {
        return Err(Error::InvalidParam("devices for different inputs use different trusted factors".into()));
    }
    let (a_in, a_out) = split_io(&alice_t);
    let (b_in, b_out) = split_io(&bob_t);
    let f_names: Vec<String> = fiona_t.iter().map(|l| l.name.clone()).collect();
    let split = FactorSplit {
        a_in,
        a_out,
        b_in,
        b_out,
        f: f_names,
    };
    let slot = |n: usize, i: usize| if n > 1 { Some(i) } else { None };
    let mut keys = Vec::new();
    let mut elements = Vec::new();
    for (a, ma) in alice.elements().iter().enumerate() {
        let wa = ma.link(w.operator())?;
        for (y, inst_b) in bob.iter().enumerate() {
            for (b, mb) in inst_b.elements().iter().enumerate() {
                let wab = wa.link(mb)?;
                if fiona.is_empty() {
                    keys.push(OutcomeKey { a: Some(a), b: Some(b), y: slot(bob.len(), y), ..Default::default() });
                    elements.push(wab);
                    continue;
                }
                for (z, inst_f) in fiona.iter().enumerate() {
                    for (f, mf) in inst_f.elements().iter().enumerate() {
                        keys.push(OutcomeKey {
                            a: Some(a),
                            b: Some(b),
                            f: Some(f),
                            y: slot(bob.len(), y),
                            z: slot(fiona.len(), z),
                        });
                        elements.push(wab.link(mf)?);
                    }
                }
            }
        }
    }
    Dpovm::new(OperatorFamily::new(keys, elements)?, split)
}

/// `Tr[Eᵀ (⊗_i ρ_i)]`; the inputs must cover exactly the element's factors.
pub fn probability(element: &LabeledOperator, inputs: &[LabeledOperator]) -> Result<f64> {
    let mut rho = LabeledOperator::scalar(C64::new(1.0, 0.0));
    for r in inputs {
        rho = rho.tensor(r)?;
    }
    Ok(element.pairing(&rho)?.re)
}

/// Residuals of the two one-way no-signalling conditions of a bipartite
/// D-POVM: `Σ_b E_ab = E_a ⊗ 𝟙^{B̃}` and `Σ_a E_ab = 𝟙^{Ã} ⊗ E_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoSignalling {
    pub a_before_b: f64,
    pub b_before_a: f64,
}

pub fn nosig_marginals(e: &Dpovm) -> Result<NoSignalling> {
    let keys = &e.family.keys;
    if keys.iter().any(|k| k.a.is_none() || k.b.is_none() || k.f.is_some() || k.y.is_some() || k.z.is_some()) {
        return Err(Error::InvalidParam("no-signalling marginals need a bipartite (a, b) D-POVM".into()));
    }
    let (alice, bob) = (e.split.alice(), e.split.bob());
    let residual = |group: fn(&OutcomeKey) -> Option<usize>, other: &[String]| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for g in e.family.distinct(group) {
            let m = e.family.sum_where(|k| group(k) == g)?;
            let r = m.trace_replace(&as_strs(other))?;
            worst = worst.max(m.max_abs_diff(&r)?);
        }
        Ok(worst)
    };
    Ok(NoSignalling { a_before_b: residual(|k| k.a, &bob)?, b_before_a: residual(|k| k.b, &alice)? })
}

/// Outcome probabilities for every combination of trusted inputs.
/// `p[k][x]`, where x enumerates input tuples with the first set most
/// significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub keys: Vec<OutcomeKey>,
    pub input_counts: Vec<usize>,
    pub p: Vec<Vec<f64>>,
}

fn input_tuples(counts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &n in counts {
        out = out.iter().flat_map(|t| (0..n).map(move |x| [t.clone(), vec![x]].concat())).collect();
    }
    out
}

fn check_input_sets(factors: &[SpaceLabel], sets: &[QuantumInputSet]) -> Result<()> {
    let mut have: Vec<SpaceLabel> = sets.iter().map(|s| s.label.clone()).collect();
    have.sort_by(|a, b| a.name.cmp(&b.name));
    let mut want = factors.to_vec();
    want.sort_by(|a, b| a.name.cmp(&b.name));
    if have != want {
        return Err(Error::InvalidParam("input sets must cover each trusted factor exactly once".into()));
    }
    Ok(())
}

/// `P(k | x) = Tr[E_kᵀ ⊗_i ρ_{x_i}]` with one input set per trusted factor.
pub fn correlations(e: &Dpovm, sets: &[QuantumInputSet]) -> Result<Correlations> {
    check_input_sets(e.family.factors(), sets)?;
    let counts: Vec<usize> = sets.iter().map(|s| s.len()).collect();
    let tuples = input_tuples(&counts);
    let mut p = Vec::with_capacity(e.family.len());
    for el in &e.family.elements {
        let mut row = Vec::with_capacity(tuples.len());
        for t in &tuples {
            let states: Vec<LabeledOperator> = t.iter().zip(sets).map(|(&x, s)| s.state(x)).collect();
            row.push(probability(el, &states)?);
        }
        p.push(row);
    }
    Ok(Correlations { keys: e.family.keys.clone(), input_counts: counts, p })
}

/// `Σ_{k,x} s_k^{(x)} P(k|x)` where `S_k = Σ_x s_k^{(x)} ⊗_i ρ_{x_i}` is
/// expanded with the dual frames. Equals `S * E` when `P` comes from E.
pub fn witness_value_from_correlations(s: &OperatorFamily, sets: &[QuantumInputSet], p: &Correlations) -> Result<f64> {
    check_input_sets(s.factors(), sets)?;
    let counts: Vec<usize> = sets.iter().map(|s| s.len()).collect();
    if counts != p.input_counts {
        return Err(Error::InvalidParam("correlation table and input sets disagree on input counts".into()));
    }
    let tuples = input_tuples(&counts);
    for (x, _) in tuples.iter().enumerate() {
        let total: f64 = p.p.iter().map(|row| row[x]).sum();
        let inputs_per_group = {
            let mut g: Vec<_> = p.keys.iter().map(|k| (k.y, k.z)).collect();
            g.sort();
            g.dedup();
            g.len() as f64
        };
        if (total - inputs_per_group).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!("probabilities for input tuple {x} are not normalized")));
        }
    }
    let duals: Vec<LabeledOperator> = tuples
        .iter()
        .map(|t| {
            let mut d = LabeledOperator::scalar(C64::new(1.0, 0.0));
            for (&x, set) in t.iter().zip(sets) {
                d = d.tensor(&LabeledOperator::new(vec![set.label.clone()], set.dual_frame[x].clone())?)?;
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for (key, sk) in s.iter() {
        let row = p
            .keys
            .iter()
            .position(|k| k == key)
            .ok_or_else(|| Error::InvalidParam(format!("no probabilities for outcome {key:?}")))?;
        for (x, d) in duals.iter().enumerate() {
            // s_k^{(x)} = Tr[(⊗D)ᵀ S_k]
            total += d.pairing(sk)?.re * p.p[row][x];
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssemblageKind {
    /// (w_{f|z}) on A_I A_O B_I B_O.
    Ttu,
    /// (w_{b,f|y,z}) on A_I A_O.
    Tuu,
}

/// Unnormalized operators induced on the untrusted spaces by the devices of
/// the remaining parties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assemblage {
    pub kind: AssemblageKind,
    family: OperatorFamily,
}

impl Assemblage {
    pub fn family(&self) -> &OperatorFamily {
        &self.family
    }

    pub fn mix(&self, other: &Assemblage, r: f64) -> Result<Assemblage> {
        if self.kind != other.kind {
            return Err(Error::InvalidParam("assemblages of different kinds".into()));
        }
        if r < 0.0 || !r.is_finite() {
            return Err(Error::InvalidParam(format!("noise weight must be finite and ≥ 0, got {r}")));
        }
        let family = self.family.add_scaled(&other.family, r)?.scale(1.0 / (1.0 + r));
        Ok(Assemblage { kind: self.kind, family })
    }

    pub fn cone(&self) -> Result<ConeSpec> {
        let n = |slot: fn(&OutcomeKey) -> Option<usize>| self.family.distinct(slot).len();
        match self.kind {
            AssemblageKind::Ttu => ConeSpec::mdci_ttu(n(|k| k.f), n(|k| k.z)),
            AssemblageKind::Tuu => ConeSpec::mdci_tuu(n(|k| k.b), n(|k| k.f), n(|k| k.y), n(|k| k.z)),
        }
    }

    /// TTU: Σ_f w_{f|z} is the same for all z and a valid bipartite process.
    /// TUU: Σ_f w_{b,f|y,z} does not depend on z, and
    /// Σ_{b,f} w_{b,f|y,z} = ρ_y ⊗ 𝟙^{A_O} with Tr ρ_y = 1.
    pub fn report(&self) -> Result<ValidationReport> {
        let fam = &self.family;
        let mut report = ValidationReport::new(match self.kind {
            AssemblageKind::Ttu => "TTU assemblage",
            AssemblageKind::Tuu => "TUU assemblage",
        });
        let mut worst_psd: f64 = 0.0;
        for el in &fam.elements {
            worst_psd = worst_psd.max(-el.psd_check(PSD_TOL)?.min_eigenvalue);
        }
        report.push("psd", worst_psd.max(0.0), DPOVM_TOL);
        let zs = fam.distinct(|k| k.z);
        match self.kind {
            AssemblageKind::Ttu => {
                let base = fam.sum_where(|k| k.z == zs[0])?;
                let mut spread: f64 = 0.0;
                for z in &zs[1..] {
                    spread = spread.max(fam.sum_where(|k| k.z == *z)?.max_abs_diff(&base)?);
                }
                report.push("marginal independent of z", spread, DPOVM_TOL);
                let kind = ScenarioKind::from_factors(base.factors())?;
                report.merge(process_report(&base, kind)?);
            }
            AssemblageKind::Tuu => {
                let mut spread: f64 = 0.0;
                for b in fam.distinct(|k| k.b) {
                    for y in fam.distinct(|k| k.y) {
                        let base = fam.sum_where(|k| k.b == b && k.y == y && k.z == zs[0])?;
                        for z in &zs[1..] {
                            let other = fam.sum_where(|k| k.b == b && k.y == y && k.z == *z)?;
                            spread = spread.max(other.max_abs_diff(&base)?);
                        }
                    }
                }
                report.push("marginal independent of z", spread, DPOVM_TOL);
                let d_out = fam.factors().iter().find(|f| f.name == "A_O").map_or(1, |f| f.dim) as f64;
                let (mut shape, mut norm): (f64, f64) = (0.0, 0.0);
                for y in fam.distinct(|k| k.y) {
                    let m = fam.sum_where(|k| k.y == y && k.z == zs[0])?;
                    shape = shape.max(m.max_abs_diff(&m.trace_replace(&["A_O"])?)?);
                    norm = norm.max((m.trace().re - d_out).abs());
                }
                report.push("identity on A_O", shape, DPOVM_TOL);
                report.push("normalization", norm, DPOVM_TOL);
            }
        }
        Ok(report)
    }
}

impl Certifiable for Assemblage {
    fn family(&self) -> OperatorFamily {
        self.family.clone()
    }
}

fn require_two_plus_f(w: &ProcessMatrix) -> Result<()> {
    if w.kind().variant != ScenarioVariant::TwoPlusF {
        return Err(Error::InvalidParam("assemblages are built from a (2+F) process".into()));
    }
    Ok(())
}

fn check_povm(p: &Povm, w: &ProcessMatrix) -> Result<()> {
    let df = w.operator().factor("F").map(|f| f.dim);
    if p.factors().len() != 1 || p.factors()[0].name != "F" || Some(p.factors()[0].dim) != df {
        return Err(Error::InvalidParam("Fiona's POVMs must act on F alone".into()));
    }
    Ok(())
}

/// `w_{f|z} = M_{f|z} * W` on A_I A_O B_I B_O.
pub fn ttu_assemblage(w: &ProcessMatrix, fiona: &[Povm]) -> Result<Assemblage> {
    require_two_plus_f(w)?;
    if fiona.is_empty() {
        return Err(Error::InvalidParam("Fiona needs at least one POVM".into()));
    }
    let mut keys = Vec::new();
    let mut elements = Vec::new();
    for (z, p) in fiona.iter().enumerate() {
        check_povm(p, w)?;
        for (f, m) in p.elements().iter().enumerate() {
            keys.push(OutcomeKey { f: Some(f), z: Some(z), ..Default::default() });
            elements.push(m.link(w.operator())?);
        }
    }
    Ok(Assemblage { kind: AssemblageKind::Ttu, family: OperatorFamily::new(keys, elements)? })
}

/// `w_{b,f|y,z} = (M_{b|y} ⊗ M_{f|z}) * W` on A_I A_O.
pub fn tuu_assemblage(w: &ProcessMatrix, bob: &[Instrument], fiona: &[Povm]) -> Result<Assemblage> {
    require_two_plus_f(w)?;
    if fiona.is_empty() || bob.is_empty() {
        return Err(Error::InvalidParam("Bob and Fiona need at least one device each".into()));
    }
    for b in bob {
        check_party(b, w, &UNTRUSTED_BOB)?;
        if !trusted_of(b, w).is_empty() {
            return Err(Error::InvalidParam("Bob's instruments act on untrusted factors only".into()));
        }
    }
    let mut keys = Vec::new();
    let mut elements = Vec::new();
    for (y, inst) in bob.iter().enumerate() {
        for (b, mb) in inst.elements().iter().enumerate() {
            let wb = mb.link(w.operator())?;
            for (z, p) in fiona.iter().enumerate() {
                check_povm(p, w)?;
                for (f, mf) in p.elements().iter().enumerate() {
                    keys.push(OutcomeKey { b: Some(b), f: Some(f), y: Some(y), z: Some(z), ..Default::default() });
                    elements.push(wb.link(mf)?);
                }
            }
        }
    }
    Ok(Assemblage { kind: AssemblageKind::Tuu, family: OperatorFamily::new(keys, elements)? })
}

/// Nonzero eigenvectors scaled by √λ (eigenvalues ≤ [`RANK_CUTOFF`] dropped).
fn weighted_eigenvectors(m: &CMat) -> Vec<CVec> {
    let (values, vectors) = hermitian_eigen(m);
    let mut out = Vec::new();
    for (k, &lam) in values.iter().enumerate() {
        if lam > RANK_CUTOFF {
            out.push(vectors.column(k) * C64::new(lam.sqrt(), 0.0));
        }
    }
    out
}

/// Instruments realizing a single-order D-POVM through an identity channel
/// from the first party's output `link_out` to the second party's input
/// `link_in`. Returns the first party's elements (on its trusted factors and
/// `link_out`), the second party's elements (on its trusted factors and
/// `link_in`) and the channel dimension.
struct OrderedRealization {
    first: Vec<LabeledOperator>,
    second: Vec<LabeledOperator>,
    dim: usize,
}

fn realize_order(
    e: &Dpovm,
    alice_first: bool,
    link_out: &str,
    link_in: &str,
) -> Result<OrderedRealization> {
    let fam = &e.family;
    let labels = |ns: &[String]| -> Vec<SpaceLabel> {
        ns.iter().map(|n| fam.factors().iter().find(|f| &f.name == n).cloned().expect("split factor present")).collect()
    };
    let (alice, bob) = (labels(&e.split.alice()), labels(&e.split.bob()));
    let (first, second) = if alice_first { (alice, bob) } else { (bob, alice) };
    let first_names: Vec<&str> = first.iter().map(|f| f.name.as_str()).collect();
    let second_names: Vec<&str> = second.iter().map(|f| f.name.as_str()).collect();
    let ds: usize = second.iter().map(|f| f.dim).product();
    let n_a = fam.distinct(|k| k.a).len();
    let n_b = fam.distinct(|k| k.b).len();
    let (n1, n2) = if alice_first { (n_a, n_b) } else { (n_b, n_a) };
    let key = |i: usize, j: usize| if alice_first { OutcomeKey::ab(i, j) } else { OutcomeKey::ab(j, i) };
    let element = |i: usize, j: usize| -> Result<CMat> {
        let el = fam.get(&key(i, j)).ok_or_else(|| Error::InvalidParam("D-POVM is missing an (a, b) element".into()))?;
        Ok(el.matrix_in_order(&[first_names.clone(), second_names.clone()].concat())?)
    };
    // Marginal of the first party and its spectral vectors.
    let mut marg_vecs = Vec::with_capacity(n1);
    for i in 0..n1 {
        let mut sum = LabeledOperator::zeros(fam.factors().to_vec())?;
        for j in 0..n2 {
            sum = sum.add(fam.get(&key(i, j)).expect("checked above"))?;
        }
        let m = sum.partial_trace(&second_names)?.scale(1.0 / ds as f64);
        marg_vecs.push(weighted_eigenvectors(&m.matrix_in_order(&first_names)?));
    }
    let offsets: Vec<usize> = marg_vecs
        .iter()
        .scan(0, |acc, v| {
            let o = *acc;
            *acc += v.len();
            Some(o)
        })
        .collect();
    let dim = marg_vecs.iter().map(|v| v.len()).sum::<usize>().max(1);
    let out = SpaceLabel::new(link_out, dim);
    let inp = SpaceLabel::new(link_in, dim);
    let mut first_ops = Vec::with_capacity(n1);
    for (i, vecs) in marg_vecs.iter().enumerate() {
        let df: usize = first.iter().map(|f| f.dim).product();
        let mut m = CVec::zeros(df * dim);
        for (k, v) in vecs.iter().enumerate() {
            for p in 0..df {
                m[p * dim + offsets[i] + k] = v[p];
            }
        }
        let ket = LabeledKet::new([first.clone(), vec![out.clone()]].concat(), m)?;
        first_ops.push(ket.projector());
    }
    let mut second_ops = Vec::with_capacity(n2);
    let df: usize = first.iter().map(|f| f.dim).product();
    for j in 0..n2 {
        let mut acc = CMat::zeros(ds * dim, ds * dim);
        for (i, vecs) in marg_vecs.iter().enumerate() {
            for joint in weighted_eigenvectors(&element(i, j)?) {
                let mut m = CVec::zeros(ds * dim);
                for (k, v) in vecs.iter().enumerate() {
                    let norm = v.norm_squared();
                    for s in 0..ds {
                        let mut amp = C64::new(0.0, 0.0);
                        for p in 0..df {
                            amp += v[p].conj() * joint[p * ds + s];
                        }
                        m[s * dim + offsets[i] + k] = amp / norm;
                    }
                }
                acc += &m * m.adjoint();
            }
        }
        second_ops.push(LabeledOperator::new([second.clone(), vec![inp.clone()]].concat(), acc)?);
    }
    Ok(OrderedRealization { first: first_ops, second: second_ops, dim })
}

/// Trivial stand-in for an absent order: outcome 0 always, channel of
/// dimension 1.
fn trivial_order(e: &Dpovm, alice_first: bool, link_out: &str, link_in: &str) -> Result<OrderedRealization> {
    let fam = &e.family;
    let labels = |ns: &[String]| -> Vec<SpaceLabel> {
        ns.iter().map(|n| fam.factors().iter().find(|f| &f.name == n).cloned().expect("split factor present")).collect()
    };
    let (alice, bob) = (labels(&e.split.alice()), labels(&e.split.bob()));
    let (first, second) = if alice_first { (alice, bob) } else { (bob, alice) };
    let n_a = fam.distinct(|k| k.a).len();
    let n_b = fam.distinct(|k| k.b).len();
    let (n1, n2) = if alice_first { (n_a, n_b) } else { (n_b, n_a) };
    let ops = |parties: &[SpaceLabel], link: &str, n: usize| -> Result<Vec<LabeledOperator>> {
        let f = [parties.to_vec(), vec![SpaceLabel::new(link, 1)]].concat();
        let id = LabeledOperator::identity(f.clone())?;
        let zero = LabeledOperator::zeros(f)?;
        Ok((0..n).map(|k| if k == 0 { id.clone() } else { zero.clone() }).collect())
    };
    Ok(OrderedRealization { first: ops(&first, link_out, n1)?, second: ops(&second, link_in, n2)?, dim: 1 })
}

/// A process and instruments reproducing a D-POVM.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub process: ProcessMatrix,
    pub alice: Instrument,
    pub bob: Instrument,
}

const ALPHA: &str = "alpha";
const BETA: &str = "beta";
const A_I0: &str = "A_I0";
const B_I0: &str = "B_I0";

/// Builds a causally separable process and instruments whose induced D-POVM
/// is `q·a_first + (1 − q)·b_first`. Each part must satisfy its one-way
/// no-signalling condition; a part with zero weight may be `None`. Alice's
/// input is α ⊗ A_I⁰ and Bob's β ⊗ B_I⁰, where the qubits α, β carry the
/// classical order flag.
pub fn realize_separable_dpovm(q: f64, a_first: Option<&Dpovm>, b_first: Option<&Dpovm>) -> Result<Realization> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParam(format!("weight must lie in [0, 1], got {q}")));
    }
    let reference = a_first.or(b_first).ok_or_else(|| Error::InvalidParam("need at least one ordered part".into()))?;
    for (part, weight, name) in [(a_first, q, "Ã≺B̃"), (b_first, 1.0 - q, "B̃≺Ã")] {
        match part {
            None if weight > 0.0 => return Err(Error::InvalidParam(format!("part {name} has weight {weight} but is missing"))),
            Some(p) => {
                p.family.check_same_shape(&reference.family)?;
                if p.split != reference.split {
                    return Err(Error::InvalidParam("parts use different factor splits".into()));
                }
                let ns = nosig_marginals(p)?;
                let r = if name == "Ã≺B̃" { ns.a_before_b } else { ns.b_before_a };
                if r > 1e-8 {
                    return Err(Error::InvalidParam(format!("part {name} signals against its order (residual {r:.3e})")));
                }
                let v = validate_dpovm(p)?;
                if v.max_residual() > 1e-8 {
                    return Err(Error::InvalidParam(format!("part {name} is not a valid D-POVM: {v}")));
                }
            }
            None => {}
        }
    }
    let ab = match a_first {
        Some(p) => realize_order(p, true, "A_O", B_I0)?,
        None => trivial_order(reference, true, "A_O", B_I0)?,
    };
    let ba = match b_first {
        Some(p) => realize_order(p, false, "B_O", A_I0)?,
        None => trivial_order(reference, false, "B_O", A_I0)?,
    };
    let (d_ao, d_bo) = (ab.dim, ba.dim);
    let (ao, bo) = (SpaceLabel::new("A_O", d_ao), SpaceLabel::new("B_O", d_bo));
    let (ai0, bi0) = (SpaceLabel::new(A_I0, d_bo), SpaceLabel::new(B_I0, d_ao));
    let proj = |name: &str, k: usize| LabeledOperator::basis_projector(SpaceLabel::qubit(name), k);
    let id = |l: &SpaceLabel| LabeledOperator::identity(vec![l.clone()]);

    let mut alice_ops = Vec::new();
    for (m1, m2) in ab.first.iter().zip(&ba.second) {
        let t0 = proj(ALPHA, 0).tensor(&id(&ai0)?)?.tensor(m1)?;
        let t1 = proj(ALPHA, 1).tensor(m2)?.tensor(&id(&ao)?.scale(1.0 / d_ao as f64))?;
        alice_ops.push(t0.add(&t1)?.fuse(&[ALPHA, A_I0], "A_I")?);
    }
    let mut bob_ops = Vec::new();
    for (m1, m2) in ab.second.iter().zip(&ba.first) {
        let t0 = proj(BETA, 0).tensor(m1)?.tensor(&id(&bo)?.scale(1.0 / d_bo as f64))?;
        let t1 = proj(BETA, 1).tensor(&id(&bi0)?)?.tensor(m2)?;
        bob_ops.push(t0.add(&t1)?.fuse(&[BETA, B_I0], "B_I")?);
    }
    let w0 = proj(ALPHA, 0)
        .tensor(&proj(BETA, 0))?
        .tensor(&id(&ai0)?.scale(1.0 / d_bo as f64))?
        .tensor(&max_entangled_projector(&ao, &bi0)?)?
        .tensor(&id(&bo)?)?
        .scale(q);
    let w1 = proj(ALPHA, 1)
        .tensor(&proj(BETA, 1))?
        .tensor(&id(&bi0)?.scale(1.0 / d_ao as f64))?
        .tensor(&max_entangled_projector(&bo, &ai0)?)?
        .tensor(&id(&ao)?)?
        .scale(1.0 - q);
    let w = w0.add(&w1)?.fuse(&[ALPHA, A_I0], "A_I")?.fuse(&[BETA, B_I0], "B_I")?;
    let kind = ScenarioKind::bipartite(2 * d_bo, d_ao, 2 * d_ao, d_bo)?;
    let process = validate_process(w, kind)?;

    let split = &reference.split;
    let trusted = |names: Vec<String>| -> Vec<SpaceLabel> {
        names
            .iter()
            .map(|n| reference.family.factors().iter().find(|f| &f.name == n).cloned().expect("split factor present"))
            .collect()
    };
    let a_in = [trusted(split.alice()), vec![SpaceLabel::new("A_I", 2 * d_bo)]].concat();
    let b_in = [trusted(split.bob()), vec![SpaceLabel::new("B_I", 2 * d_ao)]].concat();
    let alice = Instrument::new("alice", a_in, vec![ao], alice_ops)?;
    let bob = Instrument::new("bob", b_in, vec![bo], bob_ops)?;
    Ok(Realization { process, alice, bob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::max_abs;
    use crate::instruments::{qs_instruments, teleport_instruments, tomo_input_set, validate_instrument};
    use crate::process::quantum_switch;

    fn qs_dpovm() -> Dpovm {
        let (a, b, f) = qs_instruments().unwrap();
        induce_dpovm(&quantum_switch(), &a, &[b], &[f.to_instrument("fiona")]).unwrap()
    }

    /// Tr_{T}|e_{a,b,±}⟩⟨e_{a,b,±}| with
    /// |e_{a,b,±}⟩ = ½(δ_{a0}|b⟩^{Ã}|𝟙⟩⟩^{B̃T} ± δ_{b0}|a⟩^{B̃}|𝟙⟩⟩^{ÃT}),
    /// index order (Ã, B̃, T).
    fn closed_form(a: usize, b: usize, f: usize) -> CMat {
        let sign = if f == 0 { 1.0 } else { -1.0 };
        let mut v = CVec::zeros(8);
        let idx = |at: usize, bt: usize, t: usize| (at * 2 + bt) * 2 + t;
        for i in 0..2 {
            if a == 0 {
                v[idx(b, i, i)] += C64::new(0.5, 0.0);
            }
            if b == 0 {
                v[idx(i, a, i)] += C64::new(0.5 * sign, 0.0);
            }
        }
        let full = &v * v.adjoint();
        CMat::from_fn(4, 4, |r, c| (0..2).map(|t| full[(r * 2 + t, c * 2 + t)]).sum())
    }

    #[test]
    fn switch_dpovm_matches_closed_form() {
        let e = qs_dpovm();
        assert_eq!(e.family().len(), 8);
        for a in 0..2 {
            for b in 0..2 {
                for f in 0..2 {
                    let el = e.get(&OutcomeKey::abf(a, b, f)).unwrap();
                    let m = el.matrix_in_order(&["At", "Bt"]).unwrap();
                    assert!(max_abs(&(m - closed_form(a, b, f))) < 1e-12, "({a},{b},{f})");
                }
            }
        }
        let r = validate_dpovm(&e).unwrap();
        assert!(r.max_residual() < 1e-12, "{r}");
    }

    #[test]
    fn white_noise_induces_uniform_dpovm() {
        let (a, b, f) = qs_instruments().unwrap();
        let w = ProcessMatrix::white_noise(ScenarioKind::qubit_two_plus_f()).unwrap();
        let e = induce_dpovm(&w, &a, &[b], &[f.to_instrument("fiona")]).unwrap();
        assert!(e.family().max_abs_diff(e.uniform_noise().unwrap().family()).unwrap() < 1e-14);
    }

    #[test]
    fn teleported_element_is_rescaled_process() {
        let w = crate::process::feix_process(crate::process::feix_q_star(), crate::process::feix_epsilon_star()).unwrap();
        let (a, b) = teleport_instruments(w.kind()).unwrap();
        let e = induce_dpovm(&w, &a, &[b], &[]).unwrap();
        let e00 = e.get(&OutcomeKey::ab(0, 0)).unwrap();
        let want = w
            .operator()
            .relabel(&[("A_I", "At_I"), ("A_O", "At_O"), ("B_I", "Bt_I"), ("B_O", "Bt_O")])
            .unwrap()
            .scale(0.25);
        assert!(e00.max_abs_diff(&want).unwrap() < 1e-14);
        assert_eq!(e.split().a_in, vec!["At_I".to_string()]);
        assert_eq!(e.split().a_out, vec!["At_O".to_string()]);
    }

    #[test]
    fn instrument_on_wrong_dimension_is_rejected() {
        let w = ProcessMatrix::white_noise(ScenarioKind::bipartite(3, 2, 2, 2).unwrap()).unwrap();
        let (a, b) = teleport_instruments(ScenarioKind::qubit_bipartite()).unwrap();
        assert!(matches!(induce_dpovm(&w, &a, &[b], &[]), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn probabilities_two_ways() {
        let e = qs_dpovm();
        let q = SpaceLabel::qubit;
        let rho_a = LabeledOperator::basis_projector(q("At"), 0);
        let rho_b = LabeledOperator::basis_projector(q("Bt"), 0);
        let direct = probability(e.get(&OutcomeKey::abf(0, 0, 0)).unwrap(), &[rho_a.clone(), rho_b.clone()]).unwrap();
        // Full contraction of W with instruments and inputs.
        let (a, b, f) = qs_instruments().unwrap();
        let full = quantum_switch()
            .operator()
            .link(&a.elements()[0].link(&rho_a).unwrap())
            .unwrap()
            .link(&b.elements()[0].link(&rho_b).unwrap())
            .unwrap()
            .link(&f.elements()[0])
            .unwrap();
        assert!((direct - full.trace().re).abs() < 1e-12);
        let uniform = LabeledOperator::identity(vec![q("At"), q("Bt")]).unwrap().scale(0.25);
        let rho_p = LabeledOperator::identity(vec![q("At")]).unwrap().scale(0.5);
        assert!((probability(&uniform, &[rho_p, rho_b]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn switch_dpovm_signals_both_ways_when_marginalized_over_f() {
        let e = qs_dpovm();
        let keys: Vec<OutcomeKey> = (0..4).map(|k| OutcomeKey::ab(k / 2, k % 2)).collect();
        let els = keys.iter().map(|k| e.family().sum_where(|x| x.a == k.a && x.b == k.b).unwrap()).collect();
        let ab = Dpovm::new(OperatorFamily::new(keys, els).unwrap(), e.split().clone()).unwrap();
        let ns = nosig_marginals(&ab).unwrap();
        assert!(ns.a_before_b > 1e-3 && ns.b_before_a > 1e-3, "{ns:?}");
    }

    #[test]
    fn constant_witness_from_correlations() {
        let e = qs_dpovm();
        let sets = [tomo_input_set(SpaceLabel::qubit("At")).unwrap(), tomo_input_set(SpaceLabel::qubit("Bt")).unwrap()];
        let p = correlations(&e, &sets).unwrap();
        let ones = e.family().map(|el| LabeledOperator::identity(el.factors().to_vec()).unwrap());
        let v = witness_value_from_correlations(&ones, &sets, &p).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn json_uses_explicit_keys() {
        let e = qs_dpovm();
        let text = e.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let first = &v["elements"][0];
        assert!(first["a"].is_number() && first["y"].is_null() && first["op"].is_object());
        assert_eq!(Dpovm::from_json(&text).unwrap(), e);
    }

    #[test]
    fn ttu_single_trivial_povm_gives_marginal() {
        let w = quantum_switch();
        let t = ttu_assemblage(&w, &[Povm::trivial(vec![SpaceLabel::qubit("F")]).unwrap()]).unwrap();
        let want = w.operator().partial_trace(&["F"]).unwrap();
        assert!(t.family().elements[0].max_abs_diff(&want).unwrap() < 1e-14);
        assert!(t.report().unwrap().is_valid());
    }

    #[test]
    fn switch_ttu_elements_have_rank_two() {
        let w = quantum_switch();
        let t = ttu_assemblage(&w, &[crate::instruments::plus_minus_povm("F")]).unwrap();
        for el in &t.family().elements {
            let rank = el.eigenvalues().unwrap().iter().filter(|v| **v > 1e-10).count();
            assert!(rank <= 2);
        }
        let r = t.report().unwrap();
        assert!(r.is_valid(), "{r}");
    }

    #[test]
    fn realize_product_dpovm() {
        let q = SpaceLabel::qubit;
        let ea = [LabeledOperator::basis_projector(q("At"), 0), LabeledOperator::basis_projector(q("At"), 1)];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = LabeledKet::from_amplitudes(q("Bt"), &[C64::new(s, 0.0), C64::new(s, 0.0)]).unwrap().projector();
        let minus = LabeledOperator::identity(vec![q("Bt")]).unwrap().sub(&plus).unwrap();
        let eb = [plus, minus];
        let mut keys = Vec::new();
        let mut els = Vec::new();
        for (a, pa) in ea.iter().enumerate() {
            for (b, pb) in eb.iter().enumerate() {
                keys.push(OutcomeKey::ab(a, b));
                els.push(pa.tensor(pb).unwrap());
            }
        }
        let split = FactorSplit::new(&[], &["At"], &[], &["Bt"], &[]);
        let e = Dpovm::new(OperatorFamily::new(keys, els).unwrap(), split).unwrap();
        for q in [1.0, 0.3, 0.0] {
            let real = realize_separable_dpovm(q, Some(&e), Some(&e)).unwrap();
            for inst in [&real.alice, &real.bob] {
                assert!(validate_instrument(inst).unwrap().max_residual() < 1e-12);
            }
            let back = induce_dpovm(&real.process, &real.alice, std::slice::from_ref(&real.bob), &[]).unwrap();
            assert!(back.family().max_abs_diff(e.family()).unwrap() < 1e-12, "q = {q}");
        }
        let pure = realize_separable_dpovm(1.0, Some(&e), None).unwrap();
        // Only the α = β = 0 block carries weight.
        let w = pure.process.operator();
        let m = w.matrix();
        let dim_ai = w.factor("A_I").unwrap().dim;
        let dim_bi = w.factor("B_I").unwrap().dim;
        assert_eq!((dim_ai, dim_bi), (2, 4));
        let back = induce_dpovm(&pure.process, &pure.alice, std::slice::from_ref(&pure.bob), &[]).unwrap();
        assert!(back.family().max_abs_diff(e.family()).unwrap() < 1e-12);
        let ai = |i: usize| i / (m.nrows() / dim_ai);
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if ai(r) == 1 || ai(c) == 1 {
                    assert!(m[(r, c)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn signalling_part_is_rejected() {
        let e = qs_dpovm();
        let keys: Vec<OutcomeKey> = (0..4).map(|k| OutcomeKey::ab(k / 2, k % 2)).collect();
        let els = keys.iter().map(|k| e.family().sum_where(|x| x.a == k.a && x.b == k.b).unwrap()).collect();
        let ab = Dpovm::new(OperatorFamily::new(keys, els).unwrap(), e.split().clone()).unwrap();
        assert!(matches!(realize_separable_dpovm(1.0, Some(&ab), None), Err(Error::InvalidParam(_))));
    }
}
