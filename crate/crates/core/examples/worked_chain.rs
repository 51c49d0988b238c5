//! The two-state worked chain from the README: exact rates and the
//! invariant slow direction of a constant stochastic cocycle.

use stocycle::lyapunov::lyapunov_periodic;
use stocycle::{BasePoint, BaseSystem, CocycleSpec, StochasticMatrix};

fn main() -> stocycle::Result<()> {
    let s = StochasticMatrix::from_rows(&[&[0.5, 0.5], &[0.25, 0.75]])?;
    let spec = CocycleSpec::constant(BaseSystem::cycle(1), s)?;
    let (report, estimate) = lyapunov_periodic(&spec, &BasePoint::Cycle(0))?;
    // Rates are descending: the fixed rate 0 on the diagonal line, then
    // ln(1/4) on the slow eigenvector (2, -1).
    assert!(report.exponents[0].value.abs() < 1e-12);
    assert!((report.exponents[1].value - 0.25f64.ln()).abs() < 1e-12);
    assert_eq!(estimate.subspaces.len(), 2);
    for e in &report.exponents {
        println!("rate {:+.6} multiplicity {}", e.value, e.multiplicity);
    }
    Ok(())
}
