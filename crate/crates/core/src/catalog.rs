//! Named scenarios: processes, devices, cones and noise objects that need no
//! input files, plus the hand-built witness for the switch D-POVM.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dpovm::{induce_dpovm, tuu_assemblage, ttu_assemblage, validate_dpovm, Dpovm};
use crate::error::{Error, Result, ValidationReport};
use crate::family::{OperatorFamily, OutcomeKey};
use crate::hilbert::{max_abs, CMat, CVec, LabeledKet, LabeledOperator, SpaceLabel, C64};
use crate::instruments::{
    feix_instruments, plus_minus_povm, qs_instruments, teleport_instruments, validate_instrument, Instrument,
};
use crate::process::{feix_process, process_report, quantum_switch, ProcessMatrix, ScenarioParams, ScenarioVariant};
use crate::sdp::certify::{certify_with, CertificationResult, CertifyOptions, WitnessFamily};
use crate::sdp::solver::InteriorPointSolver;
use crate::sdp::{threshold_scan, ConeSpec, ScanOptions, ScanResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Switch D-POVM from the measure-and-forward instruments, (2+F) D-POVM cone.
    QsSdiqi,
    /// Switch TTU assemblage, Fiona measuring {|±⟩}.
    QsTtu,
    /// Switch TUU assemblage, Bob in the computational or {|±⟩} basis.
    QsTuu,
    /// Switch process, (2+F) process cone.
    QsDd,
    /// Perturbed bipartite process with the ξ-dependent instruments.
    FeixSdiqi,
    /// Perturbed bipartite process, bipartite process cone.
    FeixDd,
}

pub const ALL_SCENARIOS: [Scenario; 6] =
    [Scenario::QsSdiqi, Scenario::FeixSdiqi, Scenario::QsDd, Scenario::QsTtu, Scenario::QsTuu, Scenario::FeixDd];

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::QsSdiqi => "qs-sdiqi",
            Scenario::QsTtu => "qs-ttu",
            Scenario::QsTuu => "qs-tuu",
            Scenario::QsDd => "qs-dd",
            Scenario::FeixSdiqi => "feix-sdiqi",
            Scenario::FeixDd => "feix-dd",
        }
    }

    /// Reference noise threshold for the default parameters.
    pub fn reference_threshold(self) -> f64 {
        match self {
            Scenario::QsSdiqi => 2.0 - 2.0 * (2.0f64 / 3.0).sqrt(),
            Scenario::QsTtu => 1.319,
            Scenario::QsTuu => 0.194,
            Scenario::QsDd => 1.576,
            Scenario::FeixSdiqi => 0.113,
            Scenario::FeixDd => 4.0 / 3f64.sqrt() - 2.0,
        }
    }

    /// Accepted deviation from [`Scenario::reference_threshold`].
    pub fn tolerance(self) -> f64 {
        match self {
            Scenario::QsSdiqi | Scenario::FeixDd => 0.002,
            Scenario::FeixSdiqi => 0.003,
            Scenario::QsTtu | Scenario::QsTuu | Scenario::QsDd => 0.01,
        }
    }

    /// Default scan bracket (noncausal at the low end, not at the high end).
    pub fn bracket(self) -> (f64, f64) {
        match self {
            Scenario::QsSdiqi | Scenario::QsTuu | Scenario::FeixDd => (0.0, 1.0),
            Scenario::FeixSdiqi => (0.0, 0.5),
            Scenario::QsTtu | Scenario::QsDd => (1.0, 2.0),
        }
    }

    /// Object, noise and cone at the given parameters.
    pub fn instance(self, params: &ScenarioParams) -> Result<Instance> {
        params.validate()?;
        let r = params.r;
        match self {
            Scenario::QsSdiqi => {
                let (a, b, f) = qs_instruments()?;
                let fi = [f.to_instrument("fiona")];
                let e = induce_dpovm(&quantum_switch(), &a, std::slice::from_ref(&b), &fi)?;
                let noise = induce_dpovm(&white(&quantum_switch())?, &a, std::slice::from_ref(&b), &fi)?;
                let mut report = instrument_report(&[&a, &b, &fi[0]])?;
                report.merge(validate_dpovm(&e)?);
                Instance::from_dpovm(e.mix(&noise, r)?, noise, report)
            }
            Scenario::FeixSdiqi => {
                let w = feix_process(params.q, params.epsilon)?;
                let (a, b) = feix_instruments(params.xi)?;
                let e = induce_dpovm(&w, &a, std::slice::from_ref(&b), &[])?;
                let noise = induce_dpovm(&white(&w)?, &a, std::slice::from_ref(&b), &[])?;
                let mut report = process_report(w.operator(), w.kind())?;
                report.merge(instrument_report(&[&a, &b])?);
                report.merge(validate_dpovm(&e)?);
                Instance::from_dpovm(e.mix(&noise, r)?, noise, report)
            }
            Scenario::QsTtu => {
                let w = quantum_switch();
                let fiona = [plus_minus_povm("F")];
                let t = ttu_assemblage(&w, &fiona)?;
                let noise = ttu_assemblage(&white(&w)?, &fiona)?;
                let report = t.report()?;
                Ok(Instance { cone: t.cone()?, object: t.mix(&noise, r)?.family().clone(), noise: noise.family().clone(), report })
            }
            Scenario::QsTuu => {
                let w = quantum_switch();
                let fiona = [plus_minus_povm("F")];
                let bob = tuu_bob_instruments()?;
                let t = tuu_assemblage(&w, &bob, &fiona)?;
                let noise = tuu_assemblage(&white(&w)?, &bob, &fiona)?;
                let mut report = instrument_report(&bob.iter().collect::<Vec<_>>())?;
                report.merge(t.report()?);
                Ok(Instance { cone: t.cone()?, object: t.mix(&noise, r)?.family().clone(), noise: noise.family().clone(), report })
            }
            Scenario::QsDd => Instance::from_process(&quantum_switch(), r),
            Scenario::FeixDd => Instance::from_process(&feix_process(params.q, params.epsilon)?, r),
        }
    }

    /// Bisects the noise level over `bracket` (default: [`Scenario::bracket`]).
    pub fn scan(
        self,
        params: &ScenarioParams,
        bracket: Option<(f64, f64)>,
        opts: &CertifyOptions,
        scan_opts: ScanOptions,
    ) -> Result<ScanResult> {
        let (lo, hi) = bracket.unwrap_or(self.bracket());
        // Build the r = 0 instance once; probes only remix it.
        let base = self.instance(&ScenarioParams { r: 0.0, ..*params })?;
        base.report.clone().into_result()?;
        threshold_scan(|r| base.remixed(r)?.certify(opts), lo, hi, scan_opts)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_SCENARIOS
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown scenario {s:?}")))
    }
}

fn white(w: &ProcessMatrix) -> Result<ProcessMatrix> {
    ProcessMatrix::white_noise(w.kind())
}

fn instrument_report(insts: &[&Instrument]) -> Result<ValidationReport> {
    let mut report = ValidationReport::new("instruments");
    for inst in insts {
        for c in validate_instrument(inst)?.checks {
            report.push(format!("{}: {}", inst.role(), c.name), c.residual, c.tolerance);
        }
    }
    Ok(report)
}

/// An object to certify, its white-noise counterpart and the cone.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub object: OperatorFamily,
    pub noise: OperatorFamily,
    pub cone: ConeSpec,
    /// Validity of the ingredients (process, devices, induced object).
    pub report: ValidationReport,
}

impl Instance {
    pub fn from_dpovm(e: Dpovm, noise: Dpovm, report: ValidationReport) -> Result<Instance> {
        Ok(Instance { cone: e.cone()?, object: e.family().clone(), noise: noise.family().clone(), report })
    }

    /// `(w + r·𝟙°)/(1 + r)` in the process cone of `w`'s scenario.
    pub fn from_process(w: &ProcessMatrix, r: f64) -> Result<Instance> {
        let noise = white(w)?;
        let report = process_report(w.operator(), w.kind())?;
        let mixed = w.mix(&noise, r)?;
        Ok(Instance {
            cone: w.kind().cone(),
            object: OperatorFamily::single(mixed.operator().clone()),
            noise: OperatorFamily::single(noise.operator().clone()),
            report,
        })
    }

    /// Element (0, 0) of the D-POVM obtained by teleporting both parties'
    /// systems to trusted ancillas, mixed with its white-noise counterpart,
    /// in the single-element cone. Bipartite processes only.
    pub fn teleported(w: &ProcessMatrix, r: f64) -> Result<Instance> {
        if w.kind().variant != ScenarioVariant::Bipartite {
            return Err(Error::InvalidParam("teleported elements need a bipartite process".into()));
        }
        let (a, b) = teleport_instruments(w.kind())?;
        let e = induce_dpovm(w, &a, std::slice::from_ref(&b), &[])?;
        let noise = induce_dpovm(&white(w)?, &a, std::slice::from_ref(&b), &[])?;
        let key = OutcomeKey::ab(0, 0);
        let pick = |d: &Dpovm| -> Result<OperatorFamily> {
            let el = d.get(&key).ok_or_else(|| Error::InvalidParam("teleported D-POVM lacks element (0, 0)".into()))?;
            Ok(OperatorFamily::single(el.clone()))
        };
        let mut report = process_report(w.operator(), w.kind())?;
        report.merge(instrument_report(&[&a, &b])?);
        report.merge(validate_dpovm(&e)?);
        let instance = Instance {
            object: pick(&e)?,
            noise: pick(&noise)?,
            cone: ConeSpec::mdci_element(&["At_I"], &["At_O"], &["Bt_I"], &["Bt_O"])?,
            report,
        };
        instance.remixed(r)
    }

    /// `(object + r·noise)/(1 + r)`.
    pub fn remixed(&self, r: f64) -> Result<Instance> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::InvalidParam(format!("noise weight must be finite and ≥ 0, got {r}")));
        }
        let object = self.object.add_scaled(&self.noise, r)?.scale(1.0 / (1.0 + r));
        Ok(Instance { object, ..self.clone() })
    }

    pub fn certify(&self, opts: &CertifyOptions) -> Result<CertificationResult> {
        certify_with(&self.object, &self.cone, &self.noise, opts, &InteriorPointSolver::new(opts.solver))
    }
}

/// Bob's devices for the TUU test: y = 0 measures and re-prepares in the
/// computational basis, y = 1 in the {|±⟩} basis.
pub fn tuu_bob_instruments() -> Result<Vec<Instrument>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bases: [[[f64; 2]; 2]; 2] = [[[1.0, 0.0], [0.0, 1.0]], [[s, s], [s, -s]]];
    bases
        .iter()
        .enumerate()
        .map(|(y, basis)| {
            let elements = basis
                .iter()
                .map(|v| {
                    let amps = [C64::new(v[0], 0.0), C64::new(v[1], 0.0)];
                    let ket = |name: &str| LabeledKet::from_amplitudes(SpaceLabel::qubit(name), &amps);
                    Ok(ket("B_I")?.projector().tensor(&ket("B_O")?.projector())?)
                })
                .collect::<Result<Vec<_>>>()?;
            Instrument::new(format!("bob[y={y}]"), vec![SpaceLabel::qubit("B_I")], vec![SpaceLabel::qubit("B_O")], elements)
        })
        .collect()
}

/// Switch D-POVM `(E_QS + r·E°)/(1 + r)` and its white-noise counterpart.
pub fn qs_dpovm(r: f64) -> Result<(Dpovm, Dpovm)> {
    let (a, b, f) = qs_instruments()?;
    let fi = [f.to_instrument("fiona")];
    let e = induce_dpovm(&quantum_switch(), &a, std::slice::from_ref(&b), &fi)?;
    let noise = induce_dpovm(&white(&quantum_switch())?, &a, &[b], &fi)?;
    Ok((e.mix(&noise, r)?, noise))
}

/// Witness for the switch D-POVM, `S_abf = P_abf + T_abf` for each order,
/// on At ⊗ Bt with
/// u = (√6 + 2)/3, v = √6 − 2 and |ψ^±_{u,v}⟩ = √u|01⟩ ± √v|10⟩.
/// Attains `S * E_QS = −(√(uv) − v)` and `S * E° = 1`.
pub fn qs_witness() -> Result<WitnessFamily> {
    let u = (6f64.sqrt() + 2.0) / 3.0;
    let v = 6f64.sqrt() - 2.0;
    let factors = vec![SpaceLabel::qubit("At"), SpaceLabel::qubit("Bt")];
    let op = |m: CMat| LabeledOperator::new(factors.clone(), m);
    let psi = |x: f64, y: f64, sign: f64| {
        let mut k = CVec::zeros(4);
        k[1] = C64::new(x.sqrt(), 0.0);
        k[2] = C64::new(sign * y.sqrt(), 0.0);
        &k * k.adjoint()
    };
    let diag = |entries: [f64; 4]| CMat::from_diagonal(&CVec::from_iterator(4, entries.map(|x| C64::new(x, 0.0))));
    let w = u - v;
    let mut keys = Vec::new();
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    let mut s = Vec::new();
    // Basis order |At Bt⟩: 00, 01, 10, 11.
    for a in 0..2 {
        for b in 0..2 {
            for f in 0..2 {
                // f = 0 (+) pairs with the antisymmetric combination.
                let sign = if f == 0 { -1.0 } else { 1.0 };
                let (m1, m2) = match (a, b) {
                    (0, 0) => (psi(v, u, sign), psi(u, v, sign)),
                    (0, 1) => (diag([w, 0.0, 0.0, 0.0]), diag([0.0, w, 0.0, 0.0])),
                    (1, 0) => (diag([0.0, 0.0, w, 0.0]), diag([w, 0.0, 0.0, 0.0])),
                    _ => (CMat::zeros(4, 4), CMat::zeros(4, 4)),
                };
                let t1 = if a == 0 { diag([-w, w, 0.0, 0.0]) } else { CMat::zeros(4, 4) };
                let t2 = if b == 0 { diag([-w, 0.0, w, 0.0]) } else { CMat::zeros(4, 4) };
                let total = &m1 + &t1;
                debug_assert!(max_abs(&(&total - (&m2 + &t2))) < 1e-12);
                keys.push(OutcomeKey::abf(a, b, f));
                s.push(op(total)?);
                p1.push(op(m1)?);
                p2.push(op(m2)?);
            }
        }
    }
    Ok(WitnessFamily {
        operators: OperatorFamily::new(keys.clone(), s)?,
        psd_parts: Some(vec![OperatorFamily::new(keys.clone(), p1)?, OperatorFamily::new(keys, p2)?]),
    })
}

/// Devices for a custom process file: Alice's instrument, Bob's per input
/// y, Fiona's per input z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSet {
    pub alice: Instrument,
    pub bob: Vec<Instrument>,
    #[serde(default)]
    pub fiona: Vec<Instrument>,
}

impl InstrumentSet {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn report(&self) -> Result<ValidationReport> {
        let all: Vec<&Instrument> = std::iter::once(&self.alice).chain(&self.bob).chain(&self.fiona).collect();
        instrument_report(&all)
    }

    /// D-POVM induced on `w` together with the white-noise counterpart.
    pub fn instance(&self, w: &ProcessMatrix, r: f64) -> Result<Instance> {
        let e = induce_dpovm(w, &self.alice, &self.bob, &self.fiona)?;
        let noise = induce_dpovm(&white(w)?, &self.alice, &self.bob, &self.fiona)?;
        let mut report = process_report(w.operator(), w.kind())?;
        report.merge(self.report()?);
        report.merge(validate_dpovm(&e)?);
        Instance::from_dpovm(e.mix(&noise, r)?, noise, report)
    }
}
