use causalcert::process::*;
use causalcert::sdp::certify::{apply_witness, verify_witness, CertifyOptions};
use causalcert::sdp::Verdict;

fn white(w: &ProcessMatrix) -> ProcessMatrix {
    ProcessMatrix::white_noise(w.kind()).unwrap()
}

#[test]
fn perturbed_family_at_optimum() {
    let w = feix_process(feix_q_star(), feix_epsilon_star()).unwrap();
    let res = certify_process(&w, &white(&w)).unwrap();
    assert!(res.status.is_solved());
    assert!((res.robustness - feix_epsilon_star()).abs() < 1e-4, "{}", res.robustness);
    assert_eq!(res.verdict, Verdict::Noncausal);
    assert!(res.duality_gap < 1e-6, "gap {}", res.duality_gap);
}

#[test]
fn witness_certifies_the_perturbed_family() {
    let w = feix_process(feix_q_star(), feix_epsilon_star()).unwrap();
    let noise = white(&w);
    let res = certify_process(&w, &noise).unwrap();
    let s = res.witness.expect("noncausal result carries a witness");
    let report = verify_witness(&s, &w.kind().cone().with_part_validity(true), None).unwrap();
    assert!(report.valid, "{report:?}");
    let value = apply_witness(&s, &w).unwrap();
    assert!(value < -0.3, "S * W = {value}");
    assert!((apply_witness(&s, &noise).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn unperturbed_mixtures_are_separable() {
    for q in [0.0, 0.3, 0.7, 1.0] {
        let w = feix_process(q, 0.0).unwrap();
        let res = certify_process(&w, &white(&w)).unwrap();
        assert!(res.signed_robustness <= 1e-6, "q = {q}: {}", res.signed_robustness);
        assert_ne!(res.verdict, Verdict::Noncausal);
    }
}

#[test]
fn robustness_falls_with_added_noise() {
    let r0 = feix_epsilon_star();
    let mut last = f64::INFINITY;
    for r in [0.0, 0.05, 0.1, 0.2] {
        let res = certify_process(&depolarized_feix(r).unwrap(), &white(&depolarized_feix(0.0).unwrap())).unwrap();
        // (W + rN)/(1 + r) needs (R₀ − r)/(1 + r) more noise.
        let expected = (r0 - r) / (1.0 + r);
        assert!((res.signed_robustness - expected).abs() < 1e-4, "r = {r}: {} vs {expected}", res.signed_robustness);
        assert!(res.signed_robustness < last);
        last = res.signed_robustness;
    }
}

#[test]
fn part_validity_constraints_do_not_change_the_value() {
    let w = feix_process(feix_q_star(), feix_epsilon_star()).unwrap();
    let opts = CertifyOptions::default();
    let with = certify_process_with(&w, &white(&w), true, &opts).unwrap();
    let without = certify_process_with(&w, &white(&w), false, &opts).unwrap();
    assert!((with.signed_robustness - without.signed_robustness).abs() < 1e-5);
}

#[test]
fn switch_process_robustness() {
    let w = quantum_switch();
    let res = certify_process(&w, &white(&w)).unwrap();
    assert!(res.status.is_solved());
    assert!((res.robustness - 1.576).abs() < 0.01, "{}", res.robustness);
    assert_eq!(res.verdict, Verdict::Noncausal);
}

#[test]
fn mismatched_noise_is_rejected() {
    let w = quantum_switch();
    let other = ProcessMatrix::white_noise(ScenarioKind::qubit_bipartite()).unwrap();
    assert!(certify_process(&w, &other).is_err());
}
