//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::time::Instant;

use causalcert::catalog::{qs_dpovm, qs_witness, Scenario};
use causalcert::dpovm::{
    correlations, induce_dpovm, nosig_marginals, realize_separable_dpovm, validate_dpovm, witness_value_from_correlations,
};
use causalcert::family::OperatorFamily;
use causalcert::hilbert::{LabeledOperator, SpaceLabel};
use causalcert::instruments::{teleport_instruments, tomo_input_set};
use causalcert::process::{certify_process, ProcessMatrix, ScenarioParams};
use causalcert::sdp::certify::{apply_witness, certify, verify_witness, CertifyOptions};
use causalcert::sdp::{ConeSpec, ScanOptions};
use rand::Rng;

use common::*;

type Criterion = Result<String, String>;

fn e2s(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn scan(s: Scenario, params: &ScenarioParams) -> Result<f64, String> {
    s.scan(params, None, &CertifyOptions::default(), ScanOptions::default()).map(|r| r.threshold).map_err(e2s)
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Criterion {
    let msg = format!("{name} = {got:.5} (expected {want:.5} ± {tol})");
    if (got - want).abs() <= tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c1_switch_sdiqi_threshold() -> Criterion {
    let t = scan(Scenario::QsSdiqi, &ScenarioParams::default())?;
    within("SDI-QI switch threshold", t, 2.0 - 2.0 * (2.0f64 / 3.0).sqrt(), 0.002)
}

fn c2_switch_witness() -> Criterion {
    let s = qs_witness().map_err(e2s)?;
    let (e, noise) = qs_dpovm(0.0).map_err(e2s)?;
    let cone = e.cone().map_err(e2s)?;
    verify_witness(&s, &cone, Some(noise.family())).map_err(e2s)?;
    let on_e = apply_witness(&s, &e).map_err(e2s)?;
    let on_noise = apply_witness(&s, &noise).map_err(e2s)?;
    let want = -(2.0 - 2.0 * (2.0f64 / 3.0).sqrt());
    let msg = format!("S*E_QS = {on_e:.10}, S*E° = {on_noise:.10}, member of both dual cones");
    if (on_e - want).abs() < 1e-8 && (on_noise - 1.0).abs() < 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c3_perturbed_process() -> Criterion {
    let params = ScenarioParams::default();
    let dd = Scenario::FeixDd.instance(&params).map_err(e2s)?.certify(&CertifyOptions::default()).map_err(e2s)?;
    let a = within("process robustness", dd.robustness, 4.0 / 3f64.sqrt() - 2.0, 1e-3)?;
    let t = scan(Scenario::FeixSdiqi, &params)?;
    let b = within("SDI-QI threshold (ξ = 0.01)", t, 0.113, 0.003)?;
    let zero = ScenarioParams { xi: 0.0, ..params };
    let sep = Scenario::FeixSdiqi.instance(&zero).map_err(e2s)?.certify(&CertifyOptions::default()).map_err(e2s)?;
    let c = format!("ξ = 0 robustness {:.2e}", sep.signed_robustness);
    if sep.signed_robustness > 1e-6 {
        return Err(format!("{a}; {b}; {c}"));
    }
    Ok(format!("{a}; {b}; {c}"))
}

fn c4_switch_process_threshold() -> Criterion {
    let t = scan(Scenario::QsDd, &ScenarioParams::default())?;
    within("process-level switch threshold", t, 1.576, 0.01)
}

fn c5_assemblage_thresholds() -> Criterion {
    let params = ScenarioParams::default();
    let ttu = scan(Scenario::QsTtu, &params)?;
    let tuu = scan(Scenario::QsTuu, &params)?;
    let dd = Scenario::QsDd.instance(&params).map_err(e2s)?.certify(&CertifyOptions::default()).map_err(e2s)?.robustness;
    let a = within("TTU threshold", ttu, 1.319, 0.01)?;
    let b = within("TUU threshold", tuu, 0.194, 0.01)?;
    let msg = format!("{a}; {b}; ordering {tuu:.3} ≤ {ttu:.3} ≤ {dd:.3}");
    if tuu <= ttu && ttu <= dd {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn teleported_robustness(w: &ProcessMatrix) -> Result<f64, String> {
    let (a, b) = teleport_instruments(w.kind()).map_err(e2s)?;
    let e = induce_dpovm(w, &a, std::slice::from_ref(&b), &[]).map_err(e2s)?;
    let noise = induce_dpovm(&ProcessMatrix::white_noise(w.kind()).map_err(e2s)?, &a, &[b], &[]).map_err(e2s)?;
    let key = causalcert::family::OutcomeKey::ab(0, 0);
    let e00 = OperatorFamily::single(e.get(&key).unwrap().clone());
    let n00 = OperatorFamily::single(noise.get(&key).unwrap().clone());
    let cone = ConeSpec::mdci_element(&["At_I"], &["At_O"], &["Bt_I"], &["Bt_O"]).map_err(e2s)?;
    Ok(certify(&e00, &cone, &n00).map_err(e2s)?.signed_robustness)
}

fn c6_teleportation_soundness() -> Criterion {
    let mut rng = rng(6);
    let mut worst_sep = f64::NEG_INFINITY;
    for _ in 0..50 {
        let w = random_separable_process(&mut rng);
        worst_sep = worst_sep.max(teleported_robustness(&w)?);
    }
    let mut found = 0;
    let mut tried = 0;
    let mut least_nonsep = f64::INFINITY;
    while found < 20 {
        tried += 1;
        if tried > 2000 {
            return Err(format!("only {found} nonseparable samples in {tried} draws"));
        }
        let w = random_boundary_process(&mut rng);
        let noise = ProcessMatrix::white_noise(w.kind()).map_err(e2s)?;
        if certify_process(&w, &noise).map_err(e2s)?.signed_robustness <= 1e-6 {
            continue;
        }
        found += 1;
        least_nonsep = least_nonsep.min(teleported_robustness(&w)?);
    }
    let msg = format!(
        "separable: max robustness {worst_sep:.2e} over 50; nonseparable: min robustness {least_nonsep:.2e} over 20 ({tried} draws)"
    );
    if worst_sep <= 1e-6 && least_nonsep > 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c7_algebra_invariants() -> Criterion {
    let mut rng = rng(7);
    let mut worst: [f64; 5] = [0.0; 5];
    for _ in 0..1000 {
        // Link products over a shared factor chain X–Y–Z.
        let dx = rng.gen_range(1..=3);
        let dy = rng.gen_range(1..=3);
        let dz = rng.gen_range(1..=3);
        let (x, y, z, u) = (SpaceLabel::new("X", dx), SpaceLabel::new("Y", dy), SpaceLabel::new("Z", dz), SpaceLabel::new("U", 2));
        let m = random_hermitian(&mut rng, vec![x.clone(), y.clone()]);
        let n = random_hermitian(&mut rng, vec![y.clone(), z.clone()]);
        let k = random_hermitian(&mut rng, vec![z.clone(), u.clone()]);
        let d = |a: &LabeledOperator, b: &LabeledOperator| a.max_abs_diff(b).unwrap();
        worst[0] = worst[0].max(d(&m.link(&n).unwrap(), &n.link(&m).unwrap()));
        let left = m.link(&n).unwrap().link(&k).unwrap();
        let right = m.link(&n.link(&k).unwrap()).unwrap();
        worst[1] = worst[1].max(d(&left, &right));
        // PSD closure under link products.
        let p = random_psd(&mut rng, vec![x.clone(), y.clone()], 2);
        let q = random_psd(&mut rng, vec![y.clone(), z.clone()], 2);
        let lam = p.link(&q).unwrap().eigenvalues().unwrap()[0];
        worst[2] = worst[2].max((-lam).max(0.0));
        // Tr_{YZ} = Tr_Y ∘ Tr_Z and Tr preserved.
        let t = random_hermitian(&mut rng, vec![x.clone(), y.clone(), z.clone()]);
        let both = t.partial_trace(&["Y", "Z"]).unwrap();
        let seq = t.partial_trace(&["Z"]).unwrap().partial_trace(&["Y"]).unwrap();
        worst[3] = worst[3].max(d(&both, &seq)).max((t.trace() - both.trace()).norm());
        // trace_replace idempotent.
        let once = t.trace_replace(&["Y"]).unwrap();
        worst[4] = worst[4].max(d(&once, &once.trace_replace(&["Y"]).unwrap()));
    }
    let names = ["commutativity", "associativity", "PSD closure", "partial trace", "trace_replace idempotence"];
    let msg = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    if worst.iter().all(|w| *w < 1e-10) {
        Ok(format!("1000 cases each: {msg}"))
    } else {
        Err(msg)
    }
}

fn c8_dpovm_normalization() -> Criterion {
    let mut rng = rng(8);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let w = if i % 2 == 0 { random_separable_process(&mut rng) } else { random_boundary_process(&mut rng) };
        let (n_a, n_b) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let alice = random_instrument(&mut rng, "alice", qubits(&["At", "A_I"]), qubits(&["A_O"]), n_a);
        let bob = random_instrument(&mut rng, "bob", qubits(&["Bt", "B_I"]), qubits(&["B_O"]), n_b);
        let e = induce_dpovm(&w, &alice, &[bob], &[]).map_err(e2s)?;
        let report = validate_dpovm(&e).map_err(e2s)?;
        worst = worst.max(report.max_residual());
    }
    let msg = format!("200 random pairs, max residual {worst:.2e}");
    if worst < 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c9_realization_round_trip() -> Criterion {
    let mut rng = rng(9);
    let mut worst: f64 = 0.0;
    let mut nosig: f64 = 0.0;
    for _ in 0..50 {
        let (n_a, n_b) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let ab = random_ordered_dpovm(&mut rng, true, n_a, n_b);
        let ba = random_ordered_dpovm(&mut rng, false, n_a, n_b);
        let q = rng.gen_range(0.0..1.0);
        let target = ab.convex(&ba, q).map_err(e2s)?;
        let real = realize_separable_dpovm(q, Some(&ab), Some(&ba)).map_err(e2s)?;
        let back = induce_dpovm(&real.process, &real.alice, std::slice::from_ref(&real.bob), &[]).map_err(e2s)?;
        worst = worst.max(back.family().max_abs_diff(target.family()).map_err(e2s)?);
        nosig = nosig.max(nosig_marginals(&ab).map_err(e2s)?.a_before_b);
        nosig = nosig.max(nosig_marginals(&ba).map_err(e2s)?.b_before_a);
    }
    let msg = format!("50 random separable D-POVMs, max residual {worst:.2e} (ordered parts signal at most {nosig:.1e})");
    if worst < 1e-8 && nosig < 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c10_witness_from_correlations() -> Criterion {
    let s = qs_witness().map_err(e2s)?;
    let (e, _) = qs_dpovm(0.0).map_err(e2s)?;
    let sets = [
        tomo_input_set(SpaceLabel::qubit("At")).map_err(e2s)?,
        tomo_input_set(SpaceLabel::qubit("Bt")).map_err(e2s)?,
    ];
    let p = correlations(&e, &sets).map_err(e2s)?;
    let v = witness_value_from_correlations(&s.operators, &sets, &p).map_err(e2s)?;
    within("witness value from P(a,b,f|x,y)", v, -(2.0 - 2.0 * (2.0f64 / 3.0).sqrt()), 1e-6)
}

#[test]
fn acceptance() {
    type Check = (&'static str, fn() -> Criterion);
    let criteria: [Check; 10] = [
        ("switch SDI-QI threshold", c1_switch_sdiqi_threshold),
        ("switch witness", c2_switch_witness),
        ("perturbed bipartite process", c3_perturbed_process),
        ("switch process threshold", c4_switch_process_threshold),
        ("TTU/TUU thresholds", c5_assemblage_thresholds),
        ("teleportation soundness", c6_teleportation_soundness),
        ("algebra invariants", c7_algebra_invariants),
        ("D-POVM normalization", c8_dpovm_normalization),
        ("separable realization round trip", c9_realization_round_trip),
        ("witness from correlations", c10_witness_from_correlations),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail} ({secs:.1} s)", i + 1),
            Err(detail) => {
                println!("[FAIL] {:>2} {name}: {detail} ({secs:.1} s)", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
