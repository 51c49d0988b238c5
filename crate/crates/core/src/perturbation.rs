//! The straight-line deformation of a stochastic cocycle toward its
//! averaging projection, and the algebraic identities it satisfies.
//!
//! For a stochastic matrix `S` and `rho` in `[0, 1]`, the deformation is
//! the convex combination `P + rho (S - P)` with `P` the rank-one
//! averaging projection. It fixes the all-ones direction, scales the
//! normal part linearly (`normal(deform(S, rho)) = rho normal(S)`), and
//! therefore shifts every negative growth rate by exactly `log rho` on
//! periodic orbits while keeping minus-infinity rates in place. The power
//! series of the deformed iterates, the tail series for the deformed
//! slow directions, and the Lipschitz continuity of the family are
//! checked here as well.
//!
//! Inequalities between deformed cocycles are stated in the oscillation
//! operator seminorm ([`crate::linalg::oscillation_norm`]), the norm in
//! which stochastic matrices are universal contractions; spectral-norm
//! analogues can fail for extreme inputs.

use nalgebra::{DMatrix, DVector};

use crate::base::BasePoint;
use crate::cocycle::CocycleSpec;
use crate::error::{Error, Result};
use crate::linalg::{oscillation_norm, ProjectionPair, StochasticMatrix};
use crate::lyapunov::{lyapunov_periodic, Exponent};

/// Default truncation tail target for [`sigma_series`].
pub const SERIES_TAIL: f64 = 1e-12;
/// Hard cap on series length.
pub const SERIES_MAX_TERMS: usize = 100_000;

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("rho = {rho} outside [0, 1]")));
    }
    Ok(())
}

/// The convex combination `P + rho (S - P)`: entrywise
/// `(1 - rho)/n + rho s_ij`, which is manifestly stochastic for `rho` in
/// `[0, 1]`.
pub fn deform(s: &StochasticMatrix, rho: f64) -> Result<StochasticMatrix> {
    check_rho(rho)?;
    let n = s.n();
    let uniform = (1.0 - rho) / n as f64;
    let m = DMatrix::from_fn(n, n, |i, j| uniform + rho * s.entries()[(i, j)]);
    StochasticMatrix::new(m)
}

/// A cocycle together with a deformation parameter; the deformed generator
/// is materialized on construction so every value is validated once.
#[derive(Clone, Debug)]
pub struct DeformedCocycle {
    original: CocycleSpec,
    deformed: CocycleSpec,
    rho: f64,
}

impl DeformedCocycle {
    pub fn new(c: &CocycleSpec, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        // deform is affine in the matrix argument, so mapping interpolation
        // anchors is the same as deforming interpolated values.
        let generator = c.generator().map_matrices(|m| deform(m, rho))?;
        let deformed = CocycleSpec::new(c.base().clone(), generator)?;
        Ok(Self { original: c.clone(), deformed, rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn original(&self) -> &CocycleSpec {
        &self.original
    }

    /// The deformed cocycle as a spec of its own.
    pub fn spec(&self) -> &CocycleSpec {
        &self.deformed
    }
}

/// Distance between two deformed matrices against the family's Lipschitz
/// bound: returns `(lhs, bound)` with
/// `lhs = osc(deform(S, rho) - deform(T, rho'))` and
/// `bound = |rho - rho'| + rho' osc(S - T)`, both in the oscillation
/// seminorm, where the inequality `lhs <= bound` is a theorem.
pub fn lipschitz_check(
    s: &StochasticMatrix,
    t: &StochasticMatrix,
    rho: f64,
    rho_prime: f64,
) -> Result<(f64, f64)> {
    if s.n() != t.n() {
        return Err(Error::DimensionMismatch(format!("{}x{} vs {}x{}", s.n(), s.n(), t.n(), t.n())));
    }
    let ds = deform(s, rho)?;
    let dt = deform(t, rho_prime)?;
    let lhs = oscillation_norm(&(ds.entries() - dt.entries()));
    let bound =
        (rho - rho_prime).abs() + rho_prime * oscillation_norm(&(s.entries() - t.entries()));
    Ok((lhs, bound))
}

/// The `n`-th power of the deformed matrix evaluated through its series
/// form `sum_{k=0..n} rho^k P (S Q)^k + rho^n (Q S Q)^n`, asserted against
/// the directly computed power within `1e-11`.
pub fn deformed_power(s: &StochasticMatrix, rho: f64, n: usize) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    let dim = s.n();
    let proj = ProjectionPair::new(dim);
    let sq = s.entries() * proj.q();

    // Series accumulation: P (SQ)^k terms plus the closing normal term.
    let mut series = DMatrix::zeros(dim, dim);
    let mut sq_power = DMatrix::identity(dim, dim);
    let mut rho_power = 1.0;
    for _ in 0..=n {
        series += proj.p() * &sq_power * rho_power;
        sq_power = &sq * &sq_power;
        rho_power *= rho;
    }
    let normal = proj.normal_part(s)?;
    let mut normal_power = DMatrix::identity(dim - 1, dim - 1);
    for _ in 0..n {
        normal_power = normal.matrix() * &normal_power;
    }
    series += proj.n_basis()
        * &normal_power
        * proj.n_basis().transpose()
        * rho.powi(n as i32);

    let direct = {
        let d = deform(s, rho)?;
        let mut acc = DMatrix::identity(dim, dim);
        for _ in 0..n {
            acc = d.entries() * &acc;
        }
        acc
    };
    let defect = crate::linalg::operator_norm(&(&series - &direct));
    assert!(
        defect <= 1e-11,
        "deformed power series defect {defect:.3e} at n = {n}, rho = {rho}"
    );
    Ok(series)
}

/// Number of terms that push the geometric tail below [`SERIES_TAIL`].
pub fn default_series_length(rho: f64) -> usize {
    let k = ((SERIES_TAIL * (1.0 - rho)).ln() / rho.ln()).ceil();
    (k.max(1.0) as usize).min(SERIES_MAX_TERMS)
}

/// Partial sum of the tail series for the deformed slow direction over
/// `v`: `-sum_{k=1..K} rho^k (u-component of (S Q)^k v)`. With `K = None`
/// the length comes from [`default_series_length`]. The sum converges for
/// `rho < 1` because the coefficients are generated by a power-bounded
/// matrix; `rho = 1` is refused (the limit exists only in the Abel sense).
pub fn sigma_series(
    s: &StochasticMatrix,
    rho: f64,
    v: &DVector<f64>,
    terms: Option<usize>,
) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) || rho == 0.0 {
        return Err(Error::InvalidInput(format!("sigma_series needs rho in (0, 1), got {rho}")));
    }
    if v.len() != s.n() {
        return Err(Error::DimensionMismatch(format!(
            "vector in R^{}, matrix is {}x{}",
            v.len(),
            s.n(),
            s.n()
        )));
    }
    let k_max = terms.unwrap_or_else(|| default_series_length(rho)).min(SERIES_MAX_TERMS);
    let proj = ProjectionPair::new(s.n());
    let sq = s.entries() * proj.q();
    let mut iter = &sq * v;
    let mut rho_power = rho;
    let mut sum = 0.0;
    for _ in 1..=k_max {
        sum -= rho_power * proj.u_coeff(&iter);
        iter = &sq * &iter;
        rho_power *= rho;
    }
    Ok(sum)
}

/// The deformed companion of `v`: the point of the deformed slow graph
/// over the normal part of `v`, namely `sigma^rho(Qv) u + Qv`. As `rho`
/// approaches one this converges to `v` itself when `v` spans a
/// negative-rate direction.
pub fn phi(s: &StochasticMatrix, rho: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    let sigma = sigma_series(s, rho, v, None)?;
    let proj = ProjectionPair::new(s.n());
    let normal = proj.project(crate::linalg::ProjectionKind::Q, v)?;
    Ok(proj.u() * sigma + normal)
}

/// One row of the exponent-shift table.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ShiftRow {
    /// A negative (or minus-infinity) rate of the original cocycle.
    pub original: f64,
    /// The rate it should deform to: `original + log rho`, with
    /// minus-infinity fixed.
    pub expected: f64,
    /// The matching rate measured on the deformed cocycle.
    pub observed: f64,
}

impl ShiftRow {
    pub fn defect(&self) -> f64 {
        if self.expected == f64::NEG_INFINITY && self.observed == f64::NEG_INFINITY {
            0.0
        } else {
            (self.expected - self.observed).abs()
        }
    }
}

/// Exponent bookkeeping for the deformation over a periodic orbit.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ShiftTable {
    pub rho: f64,
    pub rows: Vec<ShiftRow>,
    /// Largest per-row defect (0 when every row matches exactly).
    pub max_defect: f64,
    /// Measured top rate of the deformed cocycle (stays 0: the fixed
    /// direction is untouched).
    pub top_rate: f64,
}

/// Compares the periodic-orbit rates of a cocycle and its deformation:
/// every rate strictly below zero must shift by exactly `log rho`
/// (minus-infinity staying put), while the rate of the fixed direction
/// stays zero. Rates at zero with multiplicity `m` contribute one
/// untouched copy (the fixed direction) and `m - 1` shifted ones.
pub fn exponent_shift_check(c: &CocycleSpec, x: &BasePoint, rho: f64) -> Result<ShiftTable> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "exponent shift needs rho in (0, 1], got {rho}"
        )));
    }
    let (original_report, _) = lyapunov_periodic(c, x)?;
    let deformed = DeformedCocycle::new(c, rho)?;
    let (deformed_report, _) = lyapunov_periodic(deformed.spec(), x)?;

    // The normal rates are the full list minus one copy of the top (zero)
    // rate carried by the fixed direction.
    let strip_top = |exponents: &[Exponent]| -> Vec<f64> {
        let mut rates: Vec<f64> = exponents
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity))
            .collect();
        // Sorted descending by construction; drop the leading (zero) rate.
        rates.remove(0);
        rates
    };
    let original_rates = strip_top(&original_report.exponents);
    let deformed_rates = strip_top(&deformed_report.exponents);
    if original_rates.len() != deformed_rates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} normal rates before, {} after",
            original_rates.len(),
            deformed_rates.len()
        )));
    }

    let log_rho = rho.ln();
    let mut rows = Vec::with_capacity(original_rates.len());
    let mut max_defect = 0.0f64;
    for (orig, obs) in original_rates.iter().zip(&deformed_rates) {
        let expected =
            if *orig == f64::NEG_INFINITY { f64::NEG_INFINITY } else { orig + log_rho };
        let row = ShiftRow { original: *orig, expected, observed: *obs };
        max_defect = max_defect.max(row.defect());
        rows.push(row);
    }
    let top_rate = deformed_report
        .exponents
        .first()
        .map(|e| e.value)
        .unwrap_or(f64::NAN);
    Ok(ShiftTable { rho, rows, max_defect, top_rate })
}
