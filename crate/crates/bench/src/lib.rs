//! Shared setup for the benchmarks.

use dlm_core::assembly::{CoupledSystem, CouplingForm, CouplingMethod, Discretization};
use dlm_core::verification::{make_test, Level, PressureElement, TestCase};

/// Test case and its discretization at refinement `n`.
pub fn discretization(test: u32, n: usize) -> (TestCase, Discretization) {
    let case = make_test(test).expect("known test");
    let disc = case.discretize(Level::new(n), PressureElement::Bp).expect("discretization");
    (case, disc)
}

pub fn system(test: u32, n: usize, method: CouplingMethod) -> CoupledSystem {
    let (case, disc) = discretization(test, n);
    CoupledSystem::assemble(&disc, &case.exact, method, CouplingForm::H1, Default::default()).expect("assembly")
}
