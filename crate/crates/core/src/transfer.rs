//! Fibred piecewise-affine interval maps, their relative transfer
//! cocycle, invariant density families, and the induced stochastic
//! cocycle.
//!
//! A [`PartitionFamily`] assigns to each base point a positive `n x n`
//! weight matrix of total mass one; its entries are the lengths of the
//! `n^2` cells of a partition of `[0, 1]`, laid out row-major
//! ([`build_intervals`]). The fibred map sends cell `(i, j)` at `x`
//! affinely onto row interval `j` at `f(x)` ([`fibred_map`]), making each
//! fibre map an `n`-fold cover of the circle. Summing over preimages
//! weighted by reciprocal slopes turns the transfer operator on locally
//! constant functions into the positive matrix cocycle
//! `A^x_ij = |cell(i, j) at x| / |row j at f(x)|` ([`ruelle_matrix`]).
//!
//! The interval-length vector is an exact right eigenfamily of `A` with
//! eigenvalue one, so a positive left family `h` with
//! `h_x^T A^x = h_{f(x)}^T` exists; [`solve_density`] approximates it by
//! pulling the cone of positive vectors back along the inverse orbit
//! (Birkhoff contraction in the Hilbert projective metric), and
//! [`normalized_cocycle`] uses it to rescale `A` into a stochastic
//! cocycle over the inverse base, which the Lyapunov and domination
//! machinery then analyzes ([`analyze_ruelle`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::base::{BasePoint, BaseSystem};
use crate::cocycle::{Anchor, CocycleSpec, Generator};
use crate::domination::DominationCertificate;
use crate::eig::left_perron;
use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, matrix_rows, StochasticMatrix};
use crate::lyapunov::{lyapunov_periodic, lyapunov_qr, Exponent, QrOptions};

/// Weight-matrix total-mass tolerance.
const MASS_TOL: f64 = 1e-12;
/// Hilbert-metric convergence target for density pullbacks.
pub const DENSITY_TOL: f64 = 1e-10;
/// Stochasticity tolerance allowed before renormalizing a density-scaled
/// cocycle value.
const COLUMN_SUM_TOL: f64 = 1e-10;

/// A positive matrix whose entries sum to one: the cell lengths of an
/// `n^2`-cell interval partition, laid out row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "weights must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidInput("weights must be strictly positive".into()));
        }
        let total: f64 = entries.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "weights must have total mass 1, got {total}"
            )));
        }
        Ok(Self { entries })
    }

    /// Convenience constructor from row slices.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let vecs: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Self::new(matrix_from_rows(&vecs)?)
    }

    /// The constant family value with every cell length `1/n^2`.
    pub fn uniform(n: usize) -> Self {
        Self { entries: DMatrix::from_element(n, n, 1.0 / (n * n) as f64) }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Row masses: the lengths of the coarse intervals.
    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| self.entries.row(i).sum())
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Serialize for WeightMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_rows(&self.entries).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WeightMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let m = matrix_from_rows(&rows).map_err(D::Error::custom)?;
        WeightMatrix::new(m).map_err(D::Error::custom)
    }
}

/// An interpolation anchor for weight families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightAnchor {
    pub t: f64,
    pub matrix: WeightMatrix,
}

/// A deterministic map from base points to weight matrices, mirroring the
/// shapes of cocycle generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeightGenerator {
    Constant { matrix: WeightMatrix },
    Tabulated { matrices: Vec<WeightMatrix> },
    LocallyConstant { cuts: Vec<f64>, matrices: Vec<WeightMatrix> },
    Interpolated { anchors: Vec<WeightAnchor> },
}

impl WeightGenerator {
    fn dimension(&self) -> Option<usize> {
        match self {
            WeightGenerator::Constant { matrix } => Some(matrix.n()),
            WeightGenerator::Tabulated { matrices }
            | WeightGenerator::LocallyConstant { matrices, .. } => {
                matrices.first().map(WeightMatrix::n)
            }
            WeightGenerator::Interpolated { anchors } => anchors.first().map(|a| a.matrix.n()),
        }
    }

    fn values(&self) -> Vec<&WeightMatrix> {
        match self {
            WeightGenerator::Constant { matrix } => vec![matrix],
            WeightGenerator::Tabulated { matrices }
            | WeightGenerator::LocallyConstant { matrices, .. } => matrices.iter().collect(),
            WeightGenerator::Interpolated { anchors } => {
                anchors.iter().map(|a| &a.matrix).collect()
            }
        }
    }
}

fn default_floor() -> f64 {
    PartitionFamily::DEFAULT_FLOOR
}

/// A continuous family of `n^2`-cell interval partitions over a base
/// system, described by the cell-length matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFamily {
    base: BaseSystem,
    ell: WeightGenerator,
    #[serde(default = "default_floor")]
    floor: f64,
}

impl PartitionFamily {
    /// Smallest admissible cell length; keeps every Ruelle matrix
    /// entrywise positive with a uniform Birkhoff contraction
    /// coefficient.
    pub const DEFAULT_FLOOR: f64 = 1e-6;

    pub fn new(base: BaseSystem, ell: WeightGenerator) -> Result<Self> {
        Self::with_floor(base, ell, Self::DEFAULT_FLOOR)
    }

    pub fn with_floor(base: BaseSystem, ell: WeightGenerator, floor: f64) -> Result<Self> {
        let pf = Self { base, ell, floor };
        pf.validate()?;
        Ok(pf)
    }

    /// Re-check every structural invariant (also used after
    /// deserialization, which bypasses the constructor).
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.floor > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cell-length floor must be positive, got {}",
                self.floor
            )));
        }
        let n = self
            .ell
            .dimension()
            .ok_or_else(|| Error::InvalidInput("weight family has no matrices".into()))?;
        for m in self.ell.values() {
            if m.n() != n {
                return Err(Error::DimensionMismatch(format!(
                    "weight family mixes {}x{} with {n}x{n}",
                    m.n(),
                    m.n()
                )));
            }
            if m.min_entry() < self.floor {
                return Err(Error::InvalidInput(format!(
                    "cell length {:.3e} below the floor {:.3e}",
                    m.min_entry(),
                    self.floor
                )));
            }
        }
        match &self.ell {
            WeightGenerator::Constant { .. } => {}
            WeightGenerator::Tabulated { matrices } => match self.base.period() {
                Some(q) if q == matrices.len() => {}
                Some(q) => {
                    return Err(Error::InvalidInput(format!(
                        "tabulated weights have {} matrices for a cycle of period {q}",
                        matrices.len()
                    )));
                }
                None => {
                    return Err(Error::InvalidInput(
                        "tabulated weights require a cycle base".into(),
                    ));
                }
            },
            WeightGenerator::LocallyConstant { cuts, matrices } => {
                if cuts.len() != matrices.len() || cuts.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "{} cuts for {} weight matrices",
                        cuts.len(),
                        matrices.len()
                    )));
                }
                if cuts[0] != 0.0
                    || cuts.windows(2).any(|w| w[0] >= w[1])
                    || *cuts.last().unwrap() >= 1.0
                {
                    return Err(Error::InvalidInput(
                        "cuts must start at 0 and increase strictly within [0,1)".into(),
                    ));
                }
            }
            WeightGenerator::Interpolated { anchors } => {
                if anchors.is_empty() {
                    return Err(Error::InvalidInput("no weight anchors".into()));
                }
                if anchors.windows(2).any(|w| w[0].t >= w[1].t)
                    || anchors[0].t < 0.0
                    || anchors.last().unwrap().t >= 1.0
                {
                    return Err(Error::InvalidInput(
                        "anchor coordinates must be strictly increasing within [0,1)".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.ell.dimension().expect("validated at construction")
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn generator(&self) -> &WeightGenerator {
        &self.ell
    }

    /// The cell-length matrix at a point. Interpolation mixes anchors
    /// convexly, which preserves positivity and total mass.
    pub fn weights_at(&self, x: &BasePoint) -> Result<WeightMatrix> {
        self.base.validate_point(x)?;
        match &self.ell {
            WeightGenerator::Constant { matrix } => Ok(matrix.clone()),
            WeightGenerator::Tabulated { matrices } => match x {
                BasePoint::Cycle(i) => Ok(matrices[*i].clone()),
                _ => Err(Error::InvalidInput("tabulated weights off a cycle".into())),
            },
            WeightGenerator::LocallyConstant { cuts, matrices } => {
                let t = x.scalar_coordinate(&self.base);
                let idx = match cuts.binary_search_by(|c| c.partial_cmp(&t).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i - 1,
                };
                Ok(matrices[idx].clone())
            }
            WeightGenerator::Interpolated { anchors } => {
                let t = x.scalar_coordinate(&self.base);
                if anchors.len() == 1 {
                    return Ok(anchors[0].matrix.clone());
                }
                let (left, right, span, offset) = match anchors.iter().position(|a| a.t > t) {
                    Some(0) | None => {
                        let last = anchors.len() - 1;
                        let span = anchors[0].t + 1.0 - anchors[last].t;
                        let offset = if t >= anchors[last].t {
                            t - anchors[last].t
                        } else {
                            t + 1.0 - anchors[last].t
                        };
                        (last, 0, span, offset)
                    }
                    Some(i) => (i - 1, i, anchors[i].t - anchors[i - 1].t, t - anchors[i - 1].t),
                };
                let w = offset / span;
                WeightMatrix::new(
                    anchors[left].matrix.entries() * (1.0 - w)
                        + anchors[right].matrix.entries() * w,
                )
            }
        }
    }
}

/// The partition of `[0, 1]` at one base point: `n^2 + 1` fine
/// breakpoints (row-major cells) and the `n + 1` coarse breakpoints of
/// the row intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalTable {
    n: usize,
    breaks: Vec<f64>,
    coarse: Vec<f64>,
}

impl IntervalTable {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Fine breakpoints, length `n^2 + 1`, starting at 0 and ending at 1.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Coarse breakpoints, length `n + 1`.
    pub fn coarse_breaks(&self) -> &[f64] {
        &self.coarse
    }

    /// Endpoints of cell `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> (f64, f64) {
        let k = i * self.n + j;
        (self.breaks[k], self.breaks[k + 1])
    }

    pub fn cell_length(&self, i: usize, j: usize) -> f64 {
        let (a, b) = self.cell(i, j);
        b - a
    }

    /// Endpoints of coarse interval `j` (the union of row `j`'s cells).
    pub fn coarse_interval(&self, j: usize) -> (f64, f64) {
        (self.coarse[j], self.coarse[j + 1])
    }

    pub fn coarse_length(&self, j: usize) -> f64 {
        self.coarse[j + 1] - self.coarse[j]
    }

    /// The cell containing `omega`; cells are half-open `[a, b)` so the
    /// location is single-valued.
    pub fn locate(&self, omega: f64) -> Result<(usize, usize)> {
        if !(0.0..1.0).contains(&omega) {
            return Err(Error::InvalidInput(format!("point {omega} outside [0, 1)")));
        }
        let idx = match self.breaks.binary_search_by(|b| b.partial_cmp(&omega).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let idx = idx.min(self.n * self.n - 1);
        Ok((idx / self.n, idx % self.n))
    }
}

/// Cumulative row-major partition of `[0, 1]` by the cell lengths at `x`.
pub fn build_intervals(pf: &PartitionFamily, x: &BasePoint) -> Result<IntervalTable> {
    let w = pf.weights_at(x)?;
    let n = w.n();
    let mut breaks = Vec::with_capacity(n * n + 1);
    breaks.push(0.0);
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += w.entries()[(i, j)];
            breaks.push(acc);
        }
    }
    let total = *breaks.last().unwrap();
    if (total - 1.0).abs() > 1e-14 {
        return Err(Error::InvalidInput(format!("partition total {total} drifted from 1")));
    }
    // Pin the endpoint so the final cell is exactly [.., 1).
    *breaks.last_mut().unwrap() = 1.0;
    let coarse = (0..=n).map(|k| breaks[k * n]).collect();
    Ok(IntervalTable { n, breaks, coarse })
}

/// The fibred piecewise-affine map at `x`: locate the cell of `omega` and
/// apply the orientation-preserving affine bijection onto the matching
/// coarse interval one base step ahead. Each fibre map covers the circle
/// `n` times.
pub fn fibred_map(pf: &PartitionFamily, x: &BasePoint, omega: f64) -> Result<f64> {
    let here = build_intervals(pf, x)?;
    let ahead = build_intervals(pf, &pf.base().step(x)?)?;
    let (i, j) = here.locate(omega)?;
    let (a, b) = here.cell(i, j);
    let (c, d) = ahead.coarse_interval(j);
    let out = c + (omega - a) * (d - c) / (b - a);
    // The exact image lies in [c, d) inside [0, 1); rounding can only
    // touch the right endpoint, which is the same circle point as 0.
    Ok(if out >= 1.0 { 0.0 } else { out.max(0.0) })
}

/// Smallest two-step slope product over all itineraries `(i, j, k)`
/// starting at `x`: the expansion constant of the composed fibre maps.
pub fn min_two_step_expansion(pf: &PartitionFamily, x: &BasePoint) -> Result<f64> {
    let n = pf.n();
    let fx = pf.base().step(x)?;
    let here = build_intervals(pf, x)?;
    let mid = build_intervals(pf, &fx)?;
    let far = build_intervals(pf, &pf.base().step(&fx)?)?;
    let mut worst = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let first = mid.coarse_length(j) / here.cell_length(i, j);
            for k in 0..n {
                let second = far.coarse_length(k) / mid.cell_length(j, k);
                worst = worst.min(first * second);
            }
        }
    }
    Ok(worst)
}

/// The relative transfer matrix at `x`: `A_ij = |cell(i, j) at x| /
/// |coarse j at f(x)|`, strictly positive. Acting on locally constant
/// functions by `(L_x f)_j = sum_i A_ij f_i`, it satisfies the exact
/// length duality `A^x (lengths at f(x)) = lengths at x`.
pub fn ruelle_matrix(pf: &PartitionFamily, x: &BasePoint) -> Result<DMatrix<f64>> {
    let w = pf.weights_at(x)?;
    let ahead = pf.weights_at(&pf.base().step(x)?)?;
    let coarse = ahead.row_sums();
    let n = w.n();
    Ok(DMatrix::from_fn(n, n, |i, j| w.entries()[(i, j)] / coarse[j]))
}

/// Hilbert projective distance between two entrywise-positive vectors:
/// `log(max_i u_i/v_i) - log(min_i u_i/v_i)`; zero exactly on rays.
pub fn hilbert_distance(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", u.len(), v.len())));
    }
    if u.iter().any(|&x| x <= 0.0) || v.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidInput("Hilbert distance needs positive vectors".into()));
    }
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    for i in 0..u.len() {
        let r = u[i] / v[i];
        max_ratio = max_ratio.max(r);
        min_ratio = min_ratio.min(r);
    }
    Ok((max_ratio / min_ratio).ln())
}

/// An invariant-density approximation at one point.
#[derive(Clone, Debug, Serialize)]
pub struct DensityResult {
    /// The positive density vector at the requested point, unit sum.
    pub h: Vec<f64>,
    /// Pullback depth that produced it.
    pub depth: usize,
    /// Hilbert distance between the depth-`m` and depth-`(m-1)`
    /// pullbacks: the convergence measure of the cone contraction.
    pub hilbert_step: f64,
    /// Defect of the invariance identity `h_x^T A^x = h_{f(x)}^T` with
    /// both sides at depth `m` (Euclidean norm).
    pub invariance_residual: f64,
}

impl DensityResult {
    pub fn h_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.h)
    }
}

fn normalize_positive(v: &DVector<f64>) -> DVector<f64> {
    v / v.sum()
}

/// Pullback power method for the invariant density at `x`: seed the
/// uniform positive vector `m` steps into the past and push it forward
/// through the transposed transfer matrices, normalizing each step.
/// Positivity of the matrices contracts the Hilbert metric, so the
/// iterates converge geometrically; if the last step still moves more
/// than [`DENSITY_TOL`], the call fails and a larger `m_pullback` is
/// needed.
pub fn solve_density(pf: &PartitionFamily, x: &BasePoint, m_pullback: usize) -> Result<DensityResult> {
    if m_pullback == 0 {
        return Err(Error::InvalidInput("pullback depth must be >= 1".into()));
    }
    let n = pf.n();
    let inverse = pf.base().inverse()?;
    // back[k] = f^{-k}(x).
    let mut back = Vec::with_capacity(m_pullback + 1);
    back.push(*x);
    for k in 1..=m_pullback {
        back.push(inverse.step(&back[k - 1])?);
    }
    let uniform = DVector::from_element(n, 1.0 / n as f64);
    // Two chains, seeded at depth m and m - 1; they traverse the same
    // matrices, so the pair costs one sweep.
    let mut deep = uniform.clone();
    let mut shallow = uniform;
    for k in (1..=m_pullback).rev() {
        let at = ruelle_matrix(pf, &back[k])?.transpose();
        deep = normalize_positive(&(&at * &deep));
        if k < m_pullback {
            shallow = normalize_positive(&(&at * &shallow));
        }
    }
    let hilbert_step = hilbert_distance(&deep, &shallow)?;
    // Depth-m density at f(x) is the shallow chain pushed through x,
    // because its seed sits exactly m steps behind f(x). Invariance
    // compares the pushed density with it as unit-sum vectors (the push
    // itself carries a per-step scale).
    let a_here = ruelle_matrix(pf, x)?.transpose();
    let at_image = normalize_positive(&(&a_here * &shallow));
    let invariance_residual = (normalize_positive(&(&a_here * &deep)) - &at_image).norm();
    if hilbert_step > DENSITY_TOL {
        return Err(Error::NoConvergence { iterations: m_pullback, residual: hilbert_step });
    }
    Ok(DensityResult {
        h: deep.iter().copied().collect(),
        depth: m_pullback,
        hilbert_step,
        invariance_residual,
    })
}

/// Rescales a transfer matrix by a density pair into a stochastic value:
/// `B_ij = h_i A_ij / h'_j` has unit column sums when `h^T A = h'^T`, so
/// its transpose is row-stochastic.
fn stochastic_value(
    a: &DMatrix<f64>,
    h_here: &DVector<f64>,
    h_ahead: &DVector<f64>,
) -> Result<StochasticMatrix> {
    let n = a.nrows();
    let b = DMatrix::from_fn(n, n, |i, j| h_here[i] * a[(i, j)] / h_ahead[j]);
    let bt = b.transpose();
    // Defect before renormalization must be small; renormalizing then
    // makes the value exactly stochastic.
    let worst = (0..n)
        .map(|j| (bt.row(j).sum() - 1.0).abs())
        .fold(0.0f64, f64::max);
    if worst > COLUMN_SUM_TOL {
        return Err(Error::NotStochastic(format!(
            "density scaling leaves column-sum defect {worst:.3e}"
        )));
    }
    StochasticMatrix::renormalize_rows(&bt)
}

/// The density-normalized stochastic cocycle over the inverse base: at a
/// point `y` the generator value is `(B^{f^{-1}(y)})^T`, so one inverse
/// step applies the transpose of the forward transfer step that lands on
/// `y`.
///
/// Exact closed forms exist when the weight family is constant (any
/// base; one Perron solve) or the base is a finite cycle (one Perron
/// solve propagated exactly around the period). Other combinations have
/// no finite generator representation — approximate them with
/// [`normalized_cocycle_sampled`].
pub fn normalized_cocycle(pf: &PartitionFamily) -> Result<CocycleSpec> {
    let inverse = pf.base().inverse()?;
    if let WeightGenerator::Constant { .. } = pf.generator() {
        let x = pf.base().origin();
        let a = ruelle_matrix(pf, &x)?;
        let (lambda, h) = left_perron(&a)?;
        if (lambda - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "transfer matrix has relative Perron root {lambda}, expected 1"
            )));
        }
        let b = stochastic_value(&a, &h, &h)?;
        return CocycleSpec::new(inverse, Generator::Constant { matrix: b });
    }
    let Some(q) = pf.base().period() else {
        return Err(Error::InvalidInput(
            "continuous-base density families have no exact finite representation; \
             use normalized_cocycle_sampled"
                .into(),
        ));
    };
    // One Perron solve at position 0, then exact propagation: defining
    // h_{i+1} = A_i^T h_i keeps every column sum of B_i exactly one.
    let a: Vec<DMatrix<f64>> = (0..q)
        .map(|i| ruelle_matrix(pf, &BasePoint::Cycle(i)))
        .collect::<Result<_>>()?;
    let mut period_product = DMatrix::identity(pf.n(), pf.n());
    for m in &a {
        period_product = &period_product * m;
    }
    let (lambda, h0) = left_perron(&period_product)?;
    if (lambda - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "transfer cycle has relative Perron root {lambda}, expected 1"
        )));
    }
    let mut h = Vec::with_capacity(q + 1);
    h.push(h0);
    for i in 0..q {
        let next = a[i].transpose() * &h[i];
        h.push(next);
    }
    let mut values = Vec::with_capacity(q);
    for i in 0..q {
        values.push(stochastic_value(&a[i], &h[i], &h[i + 1])?);
    }
    // Over the reverse cycle the generator at position y is the
    // transposed forward value from y - 1.
    let matrices = (0..q).map(|y| values[(y + q - 1) % q].clone()).collect();
    CocycleSpec::new(inverse, Generator::Tabulated { matrices })
}

/// Interpolated approximation of the normalized cocycle for weight
/// families over a circle rotation: densities are pulled back to depth
/// `depth` at `anchors` evenly spaced anchor coordinates and the scaled
/// values interpolated in between. Returns the spec and the largest
/// stochasticity defect absorbed by renormalization at the anchors.
pub fn normalized_cocycle_sampled(
    pf: &PartitionFamily,
    anchors: usize,
    depth: usize,
) -> Result<(CocycleSpec, f64)> {
    let BaseSystem::Rotation { alpha } = pf.base() else {
        return Err(Error::InvalidInput(
            "sampled normalization interpolates along one circle coordinate; it needs a \
             rotation base"
                .into(),
        ));
    };
    if anchors < 2 {
        return Err(Error::InvalidInput("need at least 2 anchors".into()));
    }
    let inverse = pf.base().inverse()?;
    let mut anchor_values = Vec::with_capacity(anchors);
    let mut worst_defect = 0.0f64;
    for k in 0..anchors {
        let t = k as f64 / anchors as f64;
        // Generator position t on the inverse base corresponds to the
        // forward transfer step from f^{-1}(t).
        let x = {
            let raw = t - alpha;
            BasePoint::Circle(raw - raw.floor())
        };
        let fx = pf.base().step(&x)?;
        let a = ruelle_matrix(pf, &x)?;
        let h_here = solve_density(pf, &x, depth)?.h_vector();
        let h_ahead = solve_density(pf, &fx, depth)?.h_vector();
        let n = a.nrows();
        let b = DMatrix::from_fn(n, n, |i, j| h_here[i] * a[(i, j)] / h_ahead[j]).transpose();
        let defect = (0..n).map(|j| (b.row(j).sum() - 1.0).abs()).fold(0.0f64, f64::max);
        worst_defect = worst_defect.max(defect);
        if defect > COLUMN_SUM_TOL {
            return Err(Error::NotStochastic(format!(
                "anchor {k}: density scaling leaves defect {defect:.3e}; increase depth"
            )));
        }
        anchor_values.push(Anchor { t, matrix: StochasticMatrix::renormalize_rows(&b)? });
    }
    let spec = CocycleSpec::new(inverse, Generator::Interpolated { anchors: anchor_values })?;
    Ok((spec, worst_defect))
}

/// Knobs for [`analyze_ruelle`].
#[derive(Clone, Copy, Debug)]
pub struct RuelleOptions {
    /// Sample-orbit length for certification (and rate estimation on
    /// aperiodic bases).
    pub orbit_len: usize,
    /// Largest iterate count tried for domination certificates.
    pub m_max: usize,
    /// Pullback depth for the density diagnostic.
    pub pullback_depth: usize,
}

impl Default for RuelleOptions {
    fn default() -> Self {
        Self { orbit_len: 64, m_max: 64, pullback_depth: 200 }
    }
}

/// Outcome of the transfer pipeline at one sample point.
#[derive(Clone, Debug, Serialize)]
pub struct RuelleReport {
    /// Growth rates of the normalized cocycle (descending, with
    /// multiplicities; minus-infinity allowed).
    pub exponents: Vec<Exponent>,
    /// Number of distinct spectrum points.
    pub spectrum_points: usize,
    /// True when the spectrum has exactly the fixed rate plus one other
    /// point.
    pub two_point: bool,
    /// Certificate for the fixed-line versus contracting-complement
    /// splitting, when one was found.
    pub certificate: Option<DominationCertificate>,
    /// Why the certificate is missing, when it is.
    pub certificate_note: Option<String>,
    /// Certificate for the full distinct-rate splitting on periodic
    /// orbits with at least three spectrum points.
    pub oseledets_certificate: Option<DominationCertificate>,
    pub oseledets_note: Option<String>,
    /// Density invariance defect at the sample point (pullback
    /// diagnostic).
    pub h_invariance_residual: f64,
    /// Largest defect of the exact length duality over the sample orbit.
    pub conformality_defect: f64,
}

/// Length-duality defect at one point: `A^x g_{f(x)} = g_x` for the
/// coarse-length vectors `g`, which holds in exact arithmetic.
pub fn conformality_defect(pf: &PartitionFamily, x: &BasePoint) -> Result<f64> {
    let a = ruelle_matrix(pf, x)?;
    let g_here = pf.weights_at(x)?.row_sums();
    let g_ahead = pf.weights_at(&pf.base().step(x)?)?.row_sums();
    Ok((a * g_ahead - g_here).amax())
}

/// Runs the full pipeline at `x`: normalized cocycle, growth rates,
/// domination certificates, and the exactness diagnostics.
pub fn analyze_ruelle(
    pf: &PartitionFamily,
    x: &BasePoint,
    opts: &RuelleOptions,
) -> Result<RuelleReport> {
    let b = normalized_cocycle(pf)?;

    // Growth rates: exact on periodic bases or constant generators, QR
    // estimation otherwise.
    let report = if b.base().period().is_some() {
        lyapunov_periodic(&b, x)?.0
    } else if let Generator::Constant { matrix } = b.generator() {
        let synthetic = CocycleSpec::constant(BaseSystem::cycle(1), matrix.clone())?;
        lyapunov_periodic(&synthetic, &BasePoint::Cycle(0))?.0
    } else {
        lyapunov_qr(&b, x, opts.orbit_len.max(100), 1, &QrOptions::default())?
    };
    let spectrum_points = report.exponents.len();
    let two_point = spectrum_points == 2;

    // Fixed line against the contracting complement.
    let (certificate, certificate_note) =
        match crate::domination::contracting_case(&b, x, opts.orbit_len.min(256)) {
            Ok((_, cert)) => (Some(cert), None),
            Err(e) => (None, Some(e.to_string())),
        };

    // Full distinct-rate splitting on cycles with a richer spectrum.
    let (oseledets_certificate, oseledets_note) = if b.base().period().is_some()
        && spectrum_points >= 3
    {
        match crate::domination::certify_oseledets(&b, x, opts.m_max) {
            Ok(cert) => (Some(cert), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    let h_invariance_residual = solve_density(pf, x, opts.pullback_depth)?.invariance_residual;
    let mut conformality = 0.0f64;
    let mut cur = *x;
    for _ in 0..opts.orbit_len.min(64) {
        conformality = conformality.max(conformality_defect(pf, &cur)?);
        cur = pf.base().step(&cur)?;
    }

    Ok(RuelleReport {
        exponents: report.exponents,
        spectrum_points,
        two_point,
        certificate,
        certificate_note,
        oseledets_certificate,
        oseledets_note,
        h_invariance_residual,
        conformality_defect: conformality,
    })
}
