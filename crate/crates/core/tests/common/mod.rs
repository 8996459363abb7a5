//! Seeded random generators shared by the integration tests.
#![allow(dead_code)]

use causalcert::dpovm::{induce_dpovm, Dpovm};
use causalcert::hilbert::{CMat, LabeledOperator, SpaceLabel, C64};
use causalcert::instruments::Instrument;
use causalcert::process::{validate_process, validity_constraints, ProcessMatrix, ScenarioKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn qubits(names: &[&str]) -> Vec<SpaceLabel> {
    names.iter().map(|n| SpaceLabel::qubit(*n)).collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut impl Rng, factors: Vec<SpaceLabel>) -> LabeledOperator {
    let d: usize = factors.iter().map(|f| f.dim).product();
    let m = random_matrix(rng, d, d);
    LabeledOperator::new(factors, (&m + m.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

/// `G G†` with G of the given column count (the rank, generically).
pub fn random_psd(rng: &mut impl Rng, factors: Vec<SpaceLabel>, rank: usize) -> LabeledOperator {
    let d: usize = factors.iter().map(|f| f.dim).product();
    let g = random_matrix(rng, d, rank);
    LabeledOperator::new(factors, &g * g.adjoint()).unwrap()
}

pub fn random_density(rng: &mut impl Rng, factors: Vec<SpaceLabel>) -> LabeledOperator {
    let d: usize = factors.iter().map(|f| f.dim).product();
    let p = random_psd(rng, factors, d);
    let t = p.trace().re;
    p.scale(1.0 / t)
}

fn inverse_sqrt(m: &CMat) -> CMat {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|v| C64::new(1.0 / v.sqrt(), 0.0));
    &eig.eigenvectors * CMat::from_diagonal(&d) * eig.eigenvectors.adjoint()
}

/// Random CP elements on `ins ⊗ outs` rescaled so that `Σ_k Tr_out M_k = 𝟙`.
pub fn random_instrument(
    rng: &mut impl Rng,
    role: &str,
    ins: Vec<SpaceLabel>,
    outs: Vec<SpaceLabel>,
    n: usize,
) -> Instrument {
    let all: Vec<SpaceLabel> = ins.iter().chain(&outs).cloned().collect();
    let d: usize = all.iter().map(|f| f.dim).product();
    let d_in: usize = ins.iter().map(|f| f.dim).product();
    // Each element alone keeps Σ_k Tr_out M_k invertible.
    let min_rank = d_in.div_ceil(d / d_in);
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        let rank = rng.gen_range(min_rank..=d);
        raw.push(random_psd(rng, all.clone(), rank));
    }
    let out_names: Vec<&str> = outs.iter().map(|f| f.name.as_str()).collect();
    let mut total = LabeledOperator::zeros(ins.clone()).unwrap();
    for r in &raw {
        total = total.add(&r.partial_trace(&out_names).unwrap()).unwrap();
    }
    let order: Vec<&str> = ins.iter().map(|f| f.name.as_str()).collect();
    let s = LabeledOperator::new(ins.clone(), inverse_sqrt(&total.matrix_in_order(&order).unwrap()))
        .unwrap()
        .pad_identity(&outs)
        .unwrap();
    let elements = raw.iter().map(|r| s.compose(r).unwrap().compose(&s).unwrap()).collect();
    Instrument::new(role, ins, outs, elements).unwrap()
}

/// Qubit process compatible with `first ≺ second`: a state on first's
/// input and a memory M, then a channel from M and first's output to
/// second's input; second's output is discarded.
pub fn random_ordered_process(rng: &mut impl Rng, alice_first: bool, memory: usize) -> ProcessMatrix {
    let (fi, fo, si, so) = if alice_first { ("A_I", "A_O", "B_I", "B_O") } else { ("B_I", "B_O", "A_I", "A_O") };
    let m = SpaceLabel::new("M", memory);
    let sigma = random_density(rng, vec![SpaceLabel::qubit(fi), m.clone()]);
    let channel = random_instrument(rng, "channel", vec![m, SpaceLabel::qubit(fo)], vec![SpaceLabel::qubit(si)], 1);
    let w = sigma.link(&channel.elements()[0]).unwrap().pad_identity(&[SpaceLabel::qubit(so)]).unwrap();
    validate_process(w, ScenarioKind::qubit_bipartite()).unwrap()
}

pub fn convex(a: &ProcessMatrix, b: &ProcessMatrix, q: f64) -> ProcessMatrix {
    let w = a.operator().scale(q).add(&b.operator().scale(1.0 - q)).unwrap();
    validate_process(w, a.kind()).unwrap()
}

pub fn random_separable_process(rng: &mut impl Rng) -> ProcessMatrix {
    let ab = random_ordered_process(rng, true, 2);
    let ba = random_ordered_process(rng, false, 2);
    let q = rng.gen_range(0.0..1.0);
    convex(&ab, &ba, q)
}

/// Orthogonal projection onto the span of valid processes (traceless part
/// removed by the constraint terms, trace kept).
pub fn project_valid(x: &LabeledOperator, kind: ScenarioKind) -> LabeledOperator {
    let mut out = x.clone();
    for (_, terms) in validity_constraints(kind) {
        out = out.sub(&x.trace_replace_expr(&terms).unwrap()).unwrap();
    }
    out
}

/// White noise plus a random valid traceless direction, pushed close to
/// the PSD boundary. Valid, separable or not.
pub fn random_boundary_process(rng: &mut impl Rng) -> ProcessMatrix {
    let kind = ScenarioKind::qubit_bipartite();
    let white = ProcessMatrix::white_noise(kind).unwrap();
    let h = project_valid(&random_hermitian(rng, kind.factors()), kind);
    let id = LabeledOperator::identity(kind.factors()).unwrap();
    let h = h.sub(&id.scale(h.trace().re / 16.0)).unwrap();
    let lam = h.eigenvalues().unwrap()[0];
    let base = white.operator().matrix()[(0, 0)].re;
    let t = 0.999 * base / -lam;
    validate_process(white.operator().add(&h.scale(t)).unwrap(), kind).unwrap()
}

/// Ordered D-POVM on trusted qubits At, Bt, induced by random instruments
/// on a random process compatible with the given order.
pub fn random_ordered_dpovm(rng: &mut impl Rng, alice_first: bool, n_a: usize, n_b: usize) -> Dpovm {
    let w = random_ordered_process(rng, alice_first, 2);
    let alice = random_instrument(rng, "alice", qubits(&["At", "A_I"]), qubits(&["A_O"]), n_a);
    let bob = random_instrument(rng, "bob", qubits(&["Bt", "B_I"]), qubits(&["B_O"]), n_b);
    induce_dpovm(&w, &alice, &[bob], &[]).unwrap()
}
