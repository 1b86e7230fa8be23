//! Acceptance criteria A1-A11. Each test prints one PASS/FAIL line.

use qnn_core::reproduce::{run_criterion, DEFAULT_SEED};

fn check(id: &str) {
    let r = run_criterion(id, DEFAULT_SEED).expect("criterion runs");
    println!("{r}");
    assert!(r.passed, "{r}");
}

#[test]
fn a01_pruning_equivalence() {
    check("A1");
}

#[test]
fn a02_lightcone_soundness() {
    check("A2");
}

#[test]
fn a03_gradient_exactness() {
    check("A3");
}

#[test]
fn a04_linearized_dynamics() {
    check("A4");
}

#[test]
fn a05_lazy_training_scaling() {
    check("A5");
}

#[test]
fn a06_training_convergence() {
    check("A6");
}

#[test]
fn a07_non_gaussian_counterexample() {
    check("A7");
}

#[test]
fn a08_gaussianization_with_width() {
    check("A8");
}

#[test]
fn a09_fourier_sandwich() {
    check("A9");
}

#[test]
fn a10_noisy_training() {
    check("A10");
}

#[test]
fn a11_gp_agreement() {
    check("A11");
}
