//! Constructive transport inside the stochastic family: given two nearby
//! zero-sum unit directions, build a near-identity stochastic matrix that
//! carries one to a scalar multiple of the other, with explicit
//! dimension-dependent constants.
//!
//! The reachable set of a vector `v` under matrices at identity-distance
//! `eps` is a coordinate-wise box ([`orbit_bounds`]): row `i` can move
//! `v_i` toward the smallest coordinate `alpha` or the largest `beta` by
//! at most an `eps` fraction. [`transport`] picks the scale
//! `t = (max(beta, |alpha|) - sqrt(eps)) / (max(beta, |alpha|) + eps)`
//! and realizes `T v = t w` with two-point row mixes; [`access`]
//! post-composes with an arbitrary stochastic matrix to redirect its
//! image, `S x = lambda R y`, while keeping `R` inside an `eps`-ball of
//! `S`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, random_simplex_row, vector_angle, StochasticMatrix};

/// Unit-norm and zero-sum tolerance on input directions.
const DIRECTION_TOL: f64 = 1e-12;
/// Allowed overshoot when checking that a target coordinate stays inside
/// its reachable interval (violations mean a precondition breach).
const MEMBERSHIP_SLACK: f64 = 1e-10;

/// Dimension-dependent constants of the transport construction.
///
/// `d` bounds the extreme coordinates of zero-sum unit vectors from
/// below (`beta(v), |alpha(v)| >= 1/d`), and `c = d + 2 d^2` converts a
/// direction distance `eps` into the identity-distance budget
/// `c sqrt(eps)` of the carrier matrix.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Constants {
    pub n: usize,
    /// `(n - 1) sqrt(n)`.
    pub d: f64,
    /// `d + 2 d^2`, equivalently `(n - 1) sqrt(n) + 2 n (n - 1)^2`.
    pub c: f64,
}

impl Constants {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("transport constants need n >= 2, got {n}")));
        }
        let d = (n - 1) as f64 * (n as f64).sqrt();
        Ok(Self { n, d, c: d + 2.0 * d * d })
    }

    /// Largest direction angle [`access`] accepts for a perturbation
    /// budget `eps`: `eps^2 / c^2`.
    pub fn angle_budget(&self, eps: f64) -> f64 {
        eps * eps / (self.c * self.c)
    }
}

/// Per-coordinate reachable intervals of `v` under stochastic matrices
/// at identity-distance at most `eps`: coordinate `i` sweeps exactly
/// `[v_i + eps (alpha - v_i), v_i + eps (beta - v_i)]` with `alpha` the
/// smallest and `beta` the largest coordinate of `v`.
pub fn orbit_bounds(v: &DVector<f64>, eps: f64) -> Result<Vec<(f64, f64)>> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidInput(format!("eps = {eps} outside [0, 1]")));
    }
    if v.is_empty() {
        return Err(Error::InvalidInput("empty vector".into()));
    }
    let alpha = v.min();
    let beta = v.max();
    Ok(v.iter().map(|&vi| (vi + eps * (alpha - vi), vi + eps * (beta - vi))).collect())
}

/// A carrier matrix together with the parameters that produced it.
#[derive(Clone, Debug)]
pub struct TransportResult {
    /// The stochastic carrier `T` with `T v = t w`.
    pub matrix: StochasticMatrix,
    /// The scale on the target direction; positive, at most 1.
    pub t: f64,
    /// The direction distance the construction was budgeted for.
    pub epsilon_in: f64,
    /// Scale slack `sqrt(epsilon_in)` subtracted in the numerator of `t`.
    pub delta1: f64,
    /// Identity-distance budget of the carrier, canonically `c delta1`.
    pub delta2: f64,
    /// Row mix parameters in `[0, 1]`: row `i` moves `delta2` of its mass
    /// to the extreme coordinates, split `theta_row[i]` toward the
    /// minimum and the rest toward the maximum.
    pub theta_row: Vec<f64>,
}

impl TransportResult {
    /// `max_ij |T_ij - delta_ij|`, the identity distance of the carrier;
    /// bounded by `delta2` by construction.
    pub fn max_identity_deviation(&self) -> f64 {
        let t = self.matrix.entries();
        let mut worst = 0.0f64;
        for i in 0..t.nrows() {
            for j in 0..t.ncols() {
                let id = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((t[(i, j)] - id).abs());
            }
        }
        worst
    }
}

/// Index of the smallest / largest coordinate, ties broken toward the
/// smallest index so the carrier is deterministic.
fn extreme_indices(v: &DVector<f64>) -> (usize, usize) {
    let mut jmin = 0;
    let mut jmax = 0;
    for (j, &x) in v.iter().enumerate() {
        if x < v[jmin] {
            jmin = j;
        }
        if x > v[jmax] {
            jmax = j;
        }
    }
    (jmin, jmax)
}

/// Stochastic matrix with `T v = target`, moving `delta2` of each row's
/// mass onto the extreme coordinates of `v`. Errors when some target
/// coordinate leaves its reachable interval (equivalently, when the row
/// mix parameter falls outside `[0, 1]`).
fn carrier(
    v: &DVector<f64>,
    target: &DVector<f64>,
    delta2: f64,
) -> Result<(StochasticMatrix, Vec<f64>)> {
    let n = v.len();
    if delta2 == 0.0 {
        let gap = (target - v).norm();
        if gap > MEMBERSHIP_SLACK {
            return Err(Error::TransportPrecondition(format!(
                "zero budget cannot move the vector (target distance {gap:.3e})"
            )));
        }
        return Ok((StochasticMatrix::identity(n), vec![0.5; n]));
    }
    let alpha = v.min();
    let beta = v.max();
    let range = beta - alpha;
    if range <= 1e-13 {
        return Err(Error::InvalidInput(
            "degenerate coordinate range: vector is a multiple of the all-ones direction".into(),
        ));
    }
    let (jmin, jmax) = extreme_indices(v);
    let mut entries = DMatrix::zeros(n, n);
    let mut thetas = Vec::with_capacity(n);
    for i in 0..n {
        // Solve (1 - delta2) v_i + delta2 (theta alpha + (1 - theta) beta)
        // = target_i for theta.
        let c_i = (target[i] - (1.0 - delta2) * v[i]) / delta2;
        let theta = (beta - c_i) / range;
        if !(-MEMBERSHIP_SLACK..=1.0 + MEMBERSHIP_SLACK).contains(&theta) {
            return Err(Error::TransportPrecondition(format!(
                "target coordinate {i} leaves its reachable interval: mix parameter {theta:.6}"
            )));
        }
        let theta = theta.clamp(0.0, 1.0);
        entries[(i, i)] += 1.0 - delta2;
        entries[(i, jmin)] += delta2 * theta;
        entries[(i, jmax)] += delta2 * (1.0 - theta);
        thetas.push(theta);
    }
    Ok((StochasticMatrix::new(entries)?, thetas))
}

fn check_direction(label: &str, v: &DVector<f64>) -> Result<()> {
    if (v.norm() - 1.0).abs() > DIRECTION_TOL {
        return Err(Error::InvalidInput(format!("{label} is not a unit vector: norm {}", v.norm())));
    }
    let mean_mass = v.sum().abs() / (v.len() as f64).sqrt();
    if mean_mass > DIRECTION_TOL {
        return Err(Error::InvalidInput(format!(
            "{label} is not zero-sum: mean component {mean_mass:.3e}"
        )));
    }
    Ok(())
}

fn transport_with(
    v: &DVector<f64>,
    w: &DVector<f64>,
    eps: f64,
    delta1: f64,
    delta2: f64,
) -> Result<TransportResult> {
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", v.len(), w.len())));
    }
    Constants::new(v.len())?;
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidInput(format!("eps = {eps} outside [0, 1]")));
    }
    check_direction("source", v)?;
    check_direction("target", w)?;
    let dist = (v - w).norm();
    if dist > eps + 1e-15 {
        return Err(Error::TransportPrecondition(format!(
            "direction distance {dist:.6e} exceeds the budget {eps:.6e}"
        )));
    }
    if delta2 > 1.0 {
        return Err(Error::InvalidInput(format!(
            "identity-distance budget {delta2:.6} exceeds 1; eps = {eps} is too large for n = {}",
            v.len()
        )));
    }
    // Zero-sum unit vectors have beta > 0 > alpha, both at least 1/d in
    // magnitude; the scale eats the slack delta1 plus the distance budget.
    let m = v.max().max(-v.min());
    let t = (m - delta1) / (m + eps);
    if t <= 0.0 {
        return Err(Error::TransportPrecondition(format!(
            "scale collapsed: extreme coordinate {m:.6} does not dominate the slack {delta1:.6}"
        )));
    }
    let (matrix, theta_row) = carrier(v, &(w * t), delta2)?;
    let residual = (matrix.entries() * v - w * t).norm();
    assert!(residual <= 1e-12, "carrier residual {residual:.3e}");
    Ok(TransportResult { matrix, t, epsilon_in: eps, delta1, delta2, theta_row })
}

/// Builds a stochastic `T` with `T v = t w` for zero-sum unit directions
/// at distance at most `eps`, using the canonical parameters
/// `delta1 = sqrt(eps)` and `delta2 = c sqrt(eps)`. The carrier stays
/// within `delta2` of the identity entrywise, and the scale satisfies
/// `t >= 1 - d (sqrt(eps) + eps)`.
pub fn transport(v: &DVector<f64>, w: &DVector<f64>, eps: f64) -> Result<TransportResult> {
    let k = Constants::new(v.len())?;
    let delta1 = eps.sqrt();
    transport_with(v, w, eps, delta1, k.c * delta1)
}

/// Outcome of redirecting a stochastic matrix through a carrier.
#[derive(Clone, Debug)]
pub struct AccessResult {
    /// The redirected matrix `R = S T`.
    pub r: StochasticMatrix,
    /// The scalar with `S x = lambda R y`; negative when `y` points
    /// against `x`.
    pub lambda: f64,
    /// The carrier that was composed onto `S`.
    pub transport: TransportResult,
    /// Unsigned angle between the input directions.
    pub angle: f64,
    /// Measured spectral distance between `S` and `R`; at most the `eps`
    /// the call was budgeted with.
    pub norm_gap: f64,
    /// `|S x - lambda R y|`, the defect of the redirect identity.
    pub composition_residual: f64,
}

/// Redirects `S`: builds a stochastic `R` at spectral distance at most
/// `eps` from `S` and a scalar `lambda` with `S x = lambda R y`, for
/// zero-sum unit directions `x`, `y` at angle at most `eps^2 / c^2`.
///
/// The carrier budget starts at the canonical `c sqrt(|y - x|)` and is
/// tightened against the measured distance until the composite fits
/// `eps`; the row-mix membership check bounds how far the tightening can
/// go, and the search fails loudly if the budget cannot be met.
pub fn access(
    s: &StochasticMatrix,
    x: &DVector<f64>,
    y: &DVector<f64>,
    eps: f64,
) -> Result<AccessResult> {
    let n = s.n();
    if x.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {n}x{n}, directions have {} and {} entries",
            x.len(),
            y.len()
        )));
    }
    let k = Constants::new(n)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!("eps = {eps} outside (0, 1]")));
    }
    check_direction("x", x)?;
    check_direction("y", y)?;
    let angle = vector_angle(x, y)?;
    let budget = k.angle_budget(eps);
    if angle > budget + 1e-15 {
        return Err(Error::TransportPrecondition(format!(
            "angle {angle:.6e} exceeds the admissible {budget:.6e} for eps = {eps}"
        )));
    }
    // Work with the representative of y on x's side; the sign moves into
    // lambda.
    let sign = if x.dot(y) >= 0.0 { 1.0 } else { -1.0 };
    let y_aligned = y * sign;
    // Chord below arc: |y - x| <= angle(x, y) for unit vectors.
    let eps_t = (&y_aligned - x).norm().min(1.0);

    let mut best_gap = f64::INFINITY;
    let delta1_floor = (2.0 * k.d * eps_t).min(eps_t.sqrt());
    let mut delta1 = eps_t.sqrt();
    for _ in 0..12 {
        let mut delta2 = (k.c * delta1).min(1.0);
        for _ in 0..24 {
            match transport_with(&y_aligned, x, eps_t, delta1, delta2) {
                Ok(tr) => {
                    let r = StochasticMatrix::new(s.entries() * tr.matrix.entries())?;
                    let gap = operator_norm(&(s.entries() - r.entries()));
                    best_gap = best_gap.min(gap);
                    if gap <= eps {
                        let lambda = sign / tr.t;
                        let residual = (s.entries() * x - r.entries() * y * lambda).norm();
                        assert!(
                            residual <= 1e-11,
                            "redirect identity defect {residual:.3e}"
                        );
                        return Ok(AccessResult {
                            r,
                            lambda,
                            transport: tr,
                            angle,
                            norm_gap: gap,
                            composition_residual: residual,
                        });
                    }
                    delta2 *= (eps / gap) * 0.9;
                }
                // Membership floor reached for this slack: shrinking the
                // budget further only fails harder, so relax through a
                // smaller slack instead (a larger scale t needs less
                // motion per row).
                Err(Error::TransportPrecondition(_)) => break,
                Err(other) => return Err(other),
            }
        }
        if delta1 <= delta1_floor {
            break;
        }
        delta1 = (delta1 / 4.0).max(delta1_floor);
    }
    Err(Error::NoConvergence { iterations: 12 * 24, residual: best_gap })
}

/// Random stochastic matrix at identity distance at most `eps`: each row
/// is `(1 - eta_i) e_i + eta_i q_i` with `eta_i` uniform in `[0, eps]`
/// and `q_i` uniform on the simplex.
pub fn sample_s_epsilon(n: usize, eps: f64, rng: &mut crate::Rng) -> Result<StochasticMatrix> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidInput(format!("eps = {eps} outside [0, 1]")));
    }
    use rand::Rng as _;
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        let eta = eps * rng.random::<f64>();
        let q = random_simplex_row(n, rng);
        for j in 0..n {
            entries[(i, j)] = eta * q[j];
        }
        entries[(i, i)] += 1.0 - eta;
    }
    StochasticMatrix::new(entries)
}
