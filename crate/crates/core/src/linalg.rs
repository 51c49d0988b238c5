//! Dense small-n linear algebra for stochastic-matrix cocycles.
//!
//! Provides row-stochastic matrices, the rank-one projection `P` onto the
//! all-ones direction together with its complement `Q`, orthonormal
//! subspaces, spectral norms and co-norms, angles, and the affine `Theta`
//! coordinates that identify `QS`-images with zero-sum matrices.
//!
//! All norms are Euclidean operator norms computed via SVD; matrices are
//! small (target `n <= 64`), so exact dense factorizations are cheap.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance for row-stochasticity validation (entry range and row sums).
pub const STOCH_TOL: f64 = 1e-10;

/// Relative singular-value cutoff used for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

fn dims(a: &DMatrix<f64>) -> (usize, usize) {
    (a.nrows(), a.ncols())
}

/// Largest singular value of a dense matrix; zero for empty shapes.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let svd = a.clone().svd(false, false);
    svd.singular_values.max()
}

/// Smallest singular value of a dense matrix; zero signals a kernel.
///
/// For an injective restriction `A|_W` call this on `A * basis(W)`; for an
/// invertible square map it equals `1 / operator_norm(A^{-1})`.
pub fn co_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let svd = a.clone().svd(false, false);
    svd.singular_values.min()
}

/// `sigma_max(A B)` where `B` is an orthonormal basis of the domain.
pub fn operator_norm_restricted(a: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    operator_norm(&(a * basis))
}

/// `sigma_min(A B)` where `B` is an orthonormal basis of the domain.
pub fn co_norm_restricted(a: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    co_norm(&(a * basis))
}

/// Numerical rank via SVD with a relative cutoff.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let svd = a.clone().svd(false, false);
    let cutoff = svd.singular_values.max() * rel_tol;
    svd.singular_values.iter().filter(|&&s| s > cutoff).count()
}

/// An `n x n` row-stochastic matrix: entries in `[0, 1]`, unit row sums.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
}

impl StochasticMatrix {
    /// Validate and wrap a dense matrix. Fails unless the matrix is square
    /// with `n >= 2`, entries within `[-tol, 1 + tol]`, and row sums within
    /// `tol` of one.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(entries, STOCH_TOL)
    }

    /// Like [`StochasticMatrix::new`] with an explicit validation tolerance.
    pub fn with_tolerance(entries: DMatrix<f64>, tol: f64) -> Result<Self> {
        let (r, c) = dims(&entries);
        if r != c {
            return Err(Error::DimensionMismatch(format!("{r}x{c} is not square")));
        }
        if r < 2 {
            return Err(Error::InvalidInput(format!("n = {r} but n >= 2 required")));
        }
        for i in 0..r {
            let mut sum = 0.0;
            for j in 0..c {
                let s = entries[(i, j)];
                if !s.is_finite() || s < -tol || s > 1.0 + tol {
                    return Err(Error::NotStochastic(format!(
                        "entry ({i},{j}) = {s} outside [0,1]"
                    )));
                }
                sum += s;
            }
            if (sum - 1.0).abs() > tol {
                return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { entries })
    }

    /// Build from row slices.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(m)
    }

    /// The identity matrix as a stochastic matrix.
    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n) }
    }

    /// The matrix with every entry `1/n`; this is the matrix of `P`.
    pub fn uniform(n: usize) -> Self {
        Self { entries: DMatrix::from_element(n, n, 1.0 / n as f64) }
    }

    /// Explicit row-renormalization repair. Never applied silently: callers
    /// opt in when a matrix drifted outside tolerance. Requires nonnegative
    /// entries (after clamping tiny negatives) and positive row sums.
    pub fn renormalize_rows(raw: &DMatrix<f64>) -> Result<Self> {
        let (r, c) = dims(raw);
        if r != c || r < 2 {
            return Err(Error::DimensionMismatch(format!("{r}x{c}")));
        }
        let mut m = raw.clone();
        for i in 0..r {
            for j in 0..c {
                if m[(i, j)] < 0.0 {
                    if m[(i, j)] < -1e-6 {
                        return Err(Error::NotStochastic(format!(
                            "entry ({i},{j}) = {} too negative to repair",
                            m[(i, j)]
                        )));
                    }
                    m[(i, j)] = 0.0;
                }
            }
            let sum: f64 = m.row(i).iter().sum();
            if sum <= 0.0 {
                return Err(Error::NotStochastic(format!("row {i} has zero mass")));
            }
            for j in 0..c {
                m[(i, j)] /= sum;
            }
        }
        Self::new(m)
    }

    /// Matrix dimension `n`.
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Dense entries, row-major semantics.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Consume into the dense matrix.
    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    /// Matrix product; stochastic matrices are closed under multiplication.
    pub fn product(&self, rhs: &Self) -> Self {
        Self { entries: &self.entries * &rhs.entries }
    }

    /// Apply to a column vector.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.entries * v
    }

    /// Dobrushin ergodicity coefficient `max_{i,k} (1/2) sum_j |s_ij - s_kj|`.
    ///
    /// Equals the operator norm of the normal action in the oscillation
    /// norm on the zero-sum hyperplane, and never exceeds one. The spectral
    /// norm of the normal part can exceed one for extreme matrices; this
    /// coefficient is the bound that holds universally.
    pub fn dobrushin_coefficient(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in (i + 1)..n {
                let d: f64 = (0..n)
                    .map(|j| (self.entries[(i, j)] - self.entries[(k, j)]).abs())
                    .sum();
                worst = worst.max(0.5 * d);
            }
        }
        worst
    }
}

impl std::ops::Mul for &StochasticMatrix {
    type Output = StochasticMatrix;
    fn mul(self, rhs: &StochasticMatrix) -> StochasticMatrix {
        self.product(rhs)
    }
}

impl Serialize for StochasticMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_rows(&self.entries).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StochasticMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let m = matrix_from_rows(&rows).map_err(D::Error::custom)?;
        StochasticMatrix::new(m).map_err(D::Error::custom)
    }
}

/// Row-major nested vectors for JSON round trips.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Parse row-major nested vectors; rejects ragged input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let c = rows[0].len();
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::DimensionMismatch("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Which of the two mutually orthogonal projections to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionKind {
    /// Projection onto the all-ones direction `u R`.
    P,
    /// Projection onto the zero-sum hyperplane `N = u^perp`.
    Q,
}

/// The pair `P = u u^T`, `Q = I - P` for `u = (1,...,1)/sqrt(n)`, plus a
/// fixed orthonormal basis of `N = u^perp`.
///
/// The basis is the Householder complement of `u` (columns `2..n` of the
/// reflection swapping `e_1` and `u`), so normal-operator coordinates are
/// reproducible across runs.
#[derive(Clone, Debug)]
pub struct ProjectionPair {
    n: usize,
    u: DVector<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    n_basis: DMatrix<f64>,
}

impl ProjectionPair {
    /// Build the pair for dimension `n >= 2`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "projection pair needs n >= 2, got {n}");
        let nf = n as f64;
        let u = DVector::from_element(n, 1.0 / nf.sqrt());
        let p = &u * u.transpose();
        let q = DMatrix::identity(n, n) - &p;
        // Householder reflection H = I - 2 w w^T / |w|^2 with w = u - e_1
        // maps e_1 to u; its remaining columns span u^perp.
        let mut w = u.clone();
        w[0] -= 1.0;
        let h = DMatrix::identity(n, n) - (&w * w.transpose()) * (2.0 / w.norm_squared());
        let n_basis = h.columns(1, n - 1).into_owned();
        Self { n, u, p, q, n_basis }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The unit all-ones vector.
    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    /// Matrix of the rank-one projection onto `u R`.
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Matrix of the complementary projection onto `N`.
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Orthonormal `n x (n-1)` basis of `N`.
    pub fn n_basis(&self) -> &DMatrix<f64> {
        &self.n_basis
    }

    /// Apply `P` or `Q` to a vector.
    pub fn project(&self, which: ProjectionKind, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} != n = {}",
                v.len(),
                self.n
            )));
        }
        Ok(match which {
            ProjectionKind::P => &self.p * v,
            ProjectionKind::Q => &self.q * v,
        })
    }

    /// Coefficient of `v` along `u`.
    pub fn u_coeff(&self, v: &DVector<f64>) -> f64 {
        self.u.dot(v)
    }

    /// Coordinates of the `N`-component of an ambient vector.
    pub fn ambient_to_normal(&self, v: &DVector<f64>) -> DVector<f64> {
        self.n_basis.transpose() * v
    }

    /// Ambient vector of normal coordinates.
    pub fn normal_to_ambient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.n_basis * w
    }

    /// Matrix of `Q S Q` restricted to `N`, in `N`-basis coordinates.
    pub fn normal_part(&self, s: &StochasticMatrix) -> Result<NormalOperator> {
        self.normal_part_of(s.entries())
    }

    /// Normal part of an arbitrary dense matrix.
    pub fn normal_part_of(&self, m: &DMatrix<f64>) -> Result<NormalOperator> {
        if dims(m) != (self.n, self.n) {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, projections are for n = {}",
                m.nrows(),
                m.ncols(),
                self.n
            )));
        }
        let mat = self.n_basis.transpose() * m * &self.n_basis;
        Ok(NormalOperator { matrix: mat })
    }
}

/// The action of a matrix on `N` expressed in the fixed `N`-basis; an
/// `(n-1) x (n-1)` dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalOperator {
    matrix: DMatrix<f64>,
}

impl NormalOperator {
    /// Identity on `N` (dimension `n - 1`).
    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim) }
    }

    /// Wrap an explicit normal-coordinates matrix.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch("normal operator must be square".into()));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Composition `self âˆ˜ rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &Self) -> Self {
        Self { matrix: &self.matrix * &rhs.matrix }
    }

    /// Spectral norm of the normal action.
    pub fn norm(&self) -> f64 {
        operator_norm(&self.matrix)
    }

    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.matrix * w
    }
}

/// A linear subspace of `R^d` stored as a `d x k` matrix with orthonormal
/// columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Wrap a basis that is already orthonormal (checked to `1e-12`).
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let k = basis.ncols();
        if k == 0 || k > basis.nrows() {
            return Err(Error::InvalidInput(format!(
                "subspace of dimension {k} in R^{}",
                basis.nrows()
            )));
        }
        let gram = basis.transpose() * &basis;
        let defect = (&gram - DMatrix::identity(k, k)).amax();
        if defect > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "basis not orthonormal: Gram defect {defect:.3e}"
            )));
        }
        Ok(Self { basis })
    }

    /// Orthonormalize spanning columns via QR; fails if they are
    /// numerically dependent.
    pub fn orthonormalized(cols: &DMatrix<f64>) -> Result<Self> {
        let k = cols.ncols();
        if k == 0 || k > cols.nrows() {
            return Err(Error::InvalidInput(format!(
                "cannot span a {k}-dimensional subspace of R^{}",
                cols.nrows()
            )));
        }
        let qr = cols.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let scale = operator_norm(cols).max(f64::MIN_POSITIVE);
        for i in 0..k {
            if r[(i, i)].abs() <= scale * RANK_TOL {
                return Err(Error::InvalidInput(format!(
                    "spanning columns are rank deficient (r[{i},{i}] ~ 0)"
                )));
            }
        }
        Ok(Self { basis: q.columns(0, k).into_owned() })
    }

    /// Span of a single nonzero vector.
    pub fn line(v: &DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::InvalidInput("zero vector spans no line".into()));
        }
        Ok(Self { basis: DMatrix::from_column_slice(v.len(), 1, (v / norm).as_slice()) })
    }

    /// The full ambient space.
    pub fn full(dim: usize) -> Self {
        Self { basis: DMatrix::identity(dim, dim) }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    /// Relative distance of `v` from the subspace, `|(I - BB^T)v| / |v|`.
    pub fn defect(&self, v: &DVector<f64>) -> f64 {
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (v - self.project(v)).norm() / norm
    }

    /// Largest sine of a principal angle from `other` into `self`:
    /// `|(I - BB^T) C|` for orthonormal bases `B`, `C`. Zero iff
    /// `other` is contained in `self`.
    pub fn containment_defect(&self, other: &Subspace) -> f64 {
        let residual = other.basis() - self.basis() * (self.basis.transpose() * other.basis());
        operator_norm(&residual)
    }

    /// Direct sum with another subspace of the same ambient space.
    pub fn direct_sum(&self, other: &Subspace) -> Result<Subspace> {
        if self.ambient_dim() != other.ambient_dim() {
            return Err(Error::DimensionMismatch("ambient dims differ".into()));
        }
        let mut cols = DMatrix::zeros(self.ambient_dim(), self.dim() + other.dim());
        cols.columns_mut(0, self.dim()).copy_from(&self.basis);
        cols.columns_mut(self.dim(), other.dim()).copy_from(&other.basis);
        Subspace::orthonormalized(&cols)
    }
}

/// Non-oriented angle between a nonzero vector and a subspace, in
/// `[0, pi/2]`. Computed as `atan2` of the rejection and projection norms,
/// which stays accurate at both ends of the range (an `arccos` of the
/// projected norm cannot resolve angles below ~1e-8).
pub fn angle(v: &DVector<f64>, w: &Subspace) -> Result<f64> {
    if v.len() != w.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "vector in R^{}, subspace in R^{}",
            v.len(),
            w.ambient_dim()
        )));
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::InvalidInput("angle of the zero vector".into()));
    }
    let unit = v / norm;
    let inside = w.basis() * (w.basis().transpose() * &unit);
    let rejection = (&unit - &inside).norm();
    Ok(rejection.atan2(inside.norm()))
}

/// Non-oriented angle between two nonzero vectors, in `[0, pi/2]`, via the
/// same `atan2` construction as [`angle`].
pub fn vector_angle(v: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
    let (nv, nw) = (v.norm(), w.norm());
    if nv == 0.0 || nw == 0.0 {
        return Err(Error::InvalidInput("angle of the zero vector".into()));
    }
    let unit_v = v / nv;
    let unit_w = w / nw;
    let along = unit_v.dot(&unit_w);
    let rejection = (&unit_v - &unit_w * along).norm();
    Ok(rejection.atan2(along.abs()))
}

/// `Theta` coordinates of a matrix with unit row sums: `(QS, kappa(S))`
/// where `kappa(S)_j` is the column-`j` mean. `QS` has all row and column
/// sums zero.
pub fn theta(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (r, c) = dims(s);
    if r != c {
        return Err(Error::DimensionMismatch(format!("{r}x{c} is not square")));
    }
    for i in 0..r {
        let sum: f64 = s.row(i).iter().sum();
        if (sum - 1.0).abs() > STOCH_TOL {
            return Err(Error::InvalidInput(format!("row {i} sums to {sum}, expected 1")));
        }
    }
    let kappa = DVector::from_fn(c, |j, _| s.column(j).iter().sum::<f64>() / r as f64);
    let a = DMatrix::from_fn(r, c, |i, j| s[(i, j)] - kappa[j]);
    Ok((a, kappa))
}

/// Inverse of [`theta`]: `(A, v) -> A_ij + v_j`. Requires `A` to have
/// vanishing row and column sums and `v` to sum to one.
pub fn theta_inv(a: &DMatrix<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (r, c) = dims(a);
    if r != c || v.len() != c {
        return Err(Error::DimensionMismatch(format!("A is {r}x{c}, v has length {}", v.len())));
    }
    for i in 0..r {
        let rs: f64 = a.row(i).iter().sum();
        let cs: f64 = a.column(i).iter().sum();
        if rs.abs() > STOCH_TOL || cs.abs() > STOCH_TOL {
            return Err(Error::InvalidInput(format!(
                "row/column sums of A must vanish (row {i}: {rs:.3e}, col {i}: {cs:.3e})"
            )));
        }
    }
    let vs: f64 = v.iter().sum();
    if (vs - 1.0).abs() > STOCH_TOL {
        return Err(Error::InvalidInput(format!("v sums to {vs}, expected 1")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| a[(i, j)] + v[j]))
}

/// Oscillation operator seminorm `max_{i,k} (1/2) sum_j |a_ij - a_kj|`.
///
/// For a matrix with constant row sums this is the tight operator norm
/// induced on the quotient modulo constants by the oscillation seminorm
/// `max(v) - min(v)`. It is subadditive and submultiplicative against
/// stochastic factors; on a stochastic matrix it coincides with
/// [`StochasticMatrix::dobrushin_coefficient`]. Inequalities between
/// stochastic-matrix differences that fail in the spectral norm are
/// theorems in this one.
pub fn oscillation_norm(a: &DMatrix<f64>) -> f64 {
    let (r, c) = dims(a);
    let mut worst: f64 = 0.0;
    for i in 0..r {
        for k in (i + 1)..r {
            let d: f64 = (0..c).map(|j| (a[(i, j)] - a[(k, j)]).abs()).sum();
            worst = worst.max(0.5 * d);
        }
    }
    worst
}

/// Membership test for the image of the stochastic matrices under `Q`:
/// vanishing row and column sums and `sum_j min_i A_ij >= -1`.
pub fn in_qs_image(a: &DMatrix<f64>) -> bool {
    let (r, c) = dims(a);
    if r != c || r == 0 {
        return false;
    }
    for i in 0..r {
        let rs: f64 = a.row(i).iter().sum();
        let cs: f64 = a.column(i).iter().sum();
        if rs.abs() > 1e-10 || cs.abs() > 1e-10 {
            return false;
        }
    }
    let min_sum: f64 = (0..c)
        .map(|j| (0..r).map(|i| a[(i, j)]).fold(f64::INFINITY, f64::min))
        .sum();
    min_sum >= -1.0 - 1e-10
}

/// Row-sampling profile for [`random_stochastic`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RowProfile {
    /// Rows i.i.d. uniform on the simplex (Dirichlet(1,...,1)).
    Uniform,
    /// Rows `(1 - eps) e_i + eps * Dirichlet`, concentrated near the
    /// identity.
    NearIdentity(f64),
}

/// Draw a point of the unit simplex via normalized unit exponentials.
pub fn random_simplex_row(n: usize, rng: &mut crate::Rng) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| {
        let x: f64 = rng.random();
        -(1.0 - x).ln()
    });
    let sum = v.iter().sum::<f64>();
    v /= sum;
    v
}

/// Random stochastic matrix with i.i.d. rows drawn per `profile`.
pub fn random_stochastic(n: usize, rng: &mut crate::Rng, profile: RowProfile) -> StochasticMatrix {
    assert!(n >= 2, "random_stochastic needs n >= 2");
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = random_simplex_row(n, rng);
        match profile {
            RowProfile::Uniform => {
                for j in 0..n {
                    m[(i, j)] = row[j];
                }
            }
            RowProfile::NearIdentity(eps) => {
                for j in 0..n {
                    let id = if i == j { 1.0 } else { 0.0 };
                    m[(i, j)] = (1.0 - eps) * id + eps * row[j];
                }
            }
        }
    }
    StochasticMatrix { entries: m }
}

/// Rank-repair a singular stochastic matrix into an invertible one at
/// spectral distance at most `eps`.
///
/// Finds a row lying in the span of the others, replaces it by a nearby
/// simplex vector outside that span, and repeats until full rank. The
/// per-row budget is `eps / sqrt(defect)` so the total Frobenius (hence
/// spectral) change stays within `eps`.
pub fn make_invertible(
    s: &StochasticMatrix,
    eps: f64,
    rng: &mut crate::Rng,
) -> Result<StochasticMatrix> {
    if eps <= 0.0 {
        return Err(Error::InvalidInput(format!("eps = {eps} must be positive")));
    }
    let n = s.n();
    let mut m = s.entries().clone();
    let start_rank = rank(&m, RANK_TOL);
    if start_rank == n {
        return Ok(s.clone());
    }
    let repairs = n - start_rank;
    let budget = eps / (repairs as f64).sqrt();
    const MAX_DRAWS: usize = 64;

    let mut current_rank = start_rank;
    while current_rank < n {
        // A row is redundant when deleting it does not drop the rank.
        let mut redundant = None;
        for l in 0..n {
            if rank(&m.clone().remove_row(l), RANK_TOL) == current_rank {
                redundant = Some(l);
                break;
            }
        }
        let l = redundant.ok_or_else(|| {
            Error::RepairFailed(format!("rank {current_rank} < {n} but no redundant row found"))
        })?;

        let old_row = m.row(l).transpose().into_owned();
        let mut replaced = false;
        for _ in 0..MAX_DRAWS {
            let draw = random_simplex_row(n, rng);
            let dist = (&draw - &old_row).norm();
            let step = if dist <= budget { 1.0 } else { budget / dist };
            let candidate = &old_row * (1.0 - step) + &draw * step;
            let mut trial = m.clone();
            for j in 0..n {
                trial[(l, j)] = candidate[j];
            }
            if rank(&trial, RANK_TOL) > current_rank {
                m = trial;
                replaced = true;
                break;
            }
        }
        if !replaced {
            return Err(Error::RepairFailed(format!(
                "row {l}: {MAX_DRAWS} draws with budget {budget:.3e} never left the span; raise eps"
            )));
        }
        current_rank += 1;
    }
    StochasticMatrix::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use approx::assert_abs_diff_eq;

    fn dv(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn projection_identities() {
        for n in 2..=8 {
            let pp = ProjectionPair::new(n);
            let p = pp.p();
            let q = pp.q();
            let id = DMatrix::identity(n, n);
            assert!((p * p - p).amax() < 1e-12);
            assert!((q * q - q).amax() < 1e-12);
            assert!((p * q).amax() < 1e-12);
            assert!((q * p).amax() < 1e-12);
            assert!((p + q - id).amax() < 1e-12);
            let gram = pp.n_basis().transpose() * pp.n_basis();
            assert!((gram - DMatrix::identity(n - 1, n - 1)).amax() < 1e-12);
            assert!((pp.n_basis().transpose() * pp.u()).amax() < 1e-12);
        }
    }

    #[test]
    fn project_examples() {
        let pp = ProjectionPair::new(2);
        let pv = pp.project(ProjectionKind::P, &dv(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(pv[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pv[1], 0.5, epsilon = 1e-15);

        let u = pp.u().clone();
        let pu = pp.project(ProjectionKind::P, &u).unwrap();
        assert!((pu - &u).norm() < 1e-15);

        let pp3 = ProjectionPair::new(3);
        let qv = pp3.project(ProjectionKind::Q, &dv(&[1.0, 1.0, 1.0])).unwrap();
        assert!(qv.norm() < 1e-14);

        assert!(pp.project(ProjectionKind::P, &dv(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn normal_part_two_by_two() {
        // S = [[1-a, a], [b, 1-b]] acts on span{(1,-1)/sqrt(2)} by 1-a-b.
        let pp = ProjectionPair::new(2);
        for (a, b) in [(0.25, 0.25), (0.5, 0.25), (0.1, 0.7)] {
            let s = StochasticMatrix::from_rows(&[&[1.0 - a, a], &[b, 1.0 - b]]).unwrap();
            let nop = pp.normal_part(&s).unwrap();
            assert_eq!(nop.dim(), 1);
            assert_abs_diff_eq!(nop.matrix()[(0, 0)], 1.0 - a - b, epsilon = 1e-14);
        }
    }

    #[test]
    fn normal_part_uniform_and_identity() {
        for n in 2..=6 {
            let pp = ProjectionPair::new(n);
            let s = StochasticMatrix::uniform(n);
            assert!(pp.normal_part(&s).unwrap().matrix().amax() < 1e-14);
            let id = StochasticMatrix::identity(n);
            let nid = pp.normal_part(&id).unwrap();
            assert!((nid.matrix() - DMatrix::identity(n - 1, n - 1)).amax() < 1e-14);
        }
    }

    #[test]
    fn norms_and_conorms() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_abs_diff_eq!(operator_norm(&id), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(co_norm(&id), 1.0, epsilon = 1e-14);

        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(operator_norm(&a), 2.0_f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(co_norm(&a), 0.0, epsilon = 1e-14);

        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert_abs_diff_eq!(co_norm(&d), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn angle_examples() {
        let pp = ProjectionPair::new(2);
        let w = Subspace::line(&dv(&[1.0, -1.0])).unwrap();
        assert_abs_diff_eq!(
            angle(pp.u(), &w).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
        let wu = Subspace::line(pp.u()).unwrap();
        assert_abs_diff_eq!(angle(pp.u(), &wu).unwrap(), 0.0, epsilon = 1e-7);
        let w2 = Subspace::line(&dv(&[2.0, -1.0])).unwrap();
        assert_abs_diff_eq!(angle(pp.u(), &w2).unwrap(), 3.0_f64.atan(), epsilon = 1e-12);
        assert!(angle(&dv(&[0.0, 0.0]), &w).is_err());
    }

    #[test]
    fn angle_matches_grid_search() {
        // Independent oracle: minimize over a fine grid of unit vectors in
        // a 2-dimensional subspace.
        let mut rng = seeded_rng(7);
        for _ in 0..20 {
            let n = 4;
            let cols = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() - 0.5);
            let w = match Subspace::orthonormalized(&cols) {
                Ok(w) => w,
                Err(_) => continue,
            };
            let v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            if v.norm() < 1e-3 {
                continue;
            }
            let fast = angle(&v, &w).unwrap();
            let vhat = &v / v.norm();
            let mut best = f64::INFINITY;
            let grid = 20000;
            for k in 0..grid {
                let t = std::f64::consts::PI * (k as f64) / grid as f64;
                let dir = w.basis().column(0) * t.cos() + w.basis().column(1) * t.sin();
                let c = vhat.dot(&dir).abs().min(1.0);
                best = best.min(c.acos());
            }
            assert!((fast - best).abs() < 1e-6, "fast {fast} grid {best}");
        }
    }

    #[test]
    fn theta_round_trip_and_examples() {
        let s = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        let (a, v) = theta(&s).unwrap();
        assert_abs_diff_eq!(a[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(0, 1)], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(1, 0)], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(1, 1)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-15);

        let back = theta_inv(&a, &v).unwrap();
        assert!((back - &s).amax() < 1e-15);

        let half = theta_inv(&DMatrix::zeros(2, 2), &dv(&[0.5, 0.5])).unwrap();
        assert!((half - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-15);

        let mut rng = seeded_rng(11);
        for _ in 0..100 {
            let n = 2 + (rng.random::<u32>() % 5) as usize;
            let s = random_stochastic(n, &mut rng, RowProfile::Uniform);
            let (a, v) = theta(s.entries()).unwrap();
            let back = theta_inv(&a, &v).unwrap();
            assert!((back - s.entries()).amax() < 1e-13);
        }
    }

    #[test]
    fn qs_image_membership() {
        let a = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!(in_qs_image(&a));
        assert!(in_qs_image(&DMatrix::zeros(2, 2)));
        let b = DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]);
        assert!(!in_qs_image(&b));

        // QS of any stochastic matrix lies in the image set.
        let mut rng = seeded_rng(3);
        for _ in 0..50 {
            let n = 2 + (rng.random::<u32>() % 7) as usize;
            let s = random_stochastic(n, &mut rng, RowProfile::Uniform);
            let (a, _) = theta(s.entries()).unwrap();
            assert!(in_qs_image(&a));
        }
    }

    #[test]
    fn stochastic_validation_and_products() {
        assert!(StochasticMatrix::from_rows(&[&[0.6, 0.5], &[0.5, 0.5]]).is_err());
        assert!(StochasticMatrix::from_rows(&[&[1.1, -0.1], &[0.5, 0.5]]).is_err());

        let mut rng = seeded_rng(5);
        for _ in 0..50 {
            let n = 2 + (rng.random::<u32>() % 7) as usize;
            let s = random_stochastic(n, &mut rng, RowProfile::Uniform);
            let t = random_stochastic(n, &mut rng, RowProfile::Uniform);
            let st = &s * &t;
            assert!(StochasticMatrix::with_tolerance(st.entries().clone(), 1e-13).is_ok());
        }
    }

    #[test]
    fn random_profiles() {
        let mut rng = seeded_rng(42);
        let s = random_stochastic(5, &mut rng, RowProfile::Uniform);
        for i in 0..5 {
            let sum: f64 = s.entries().row(i).iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-14);
        }
        let eps = 0.05;
        let t = random_stochastic(5, &mut rng, RowProfile::NearIdentity(eps));
        for i in 0..5 {
            for j in 0..5 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((t.entries()[(i, j)] - id).abs() <= eps + 1e-15);
            }
        }
        // Fixed seed reproduces byte-identical matrices.
        let a = random_stochastic(4, &mut seeded_rng(123), RowProfile::Uniform);
        let b = random_stochastic(4, &mut seeded_rng(123), RowProfile::Uniform);
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn make_invertible_repairs_rank() {
        let mut rng = seeded_rng(17);

        // Already invertible: unchanged.
        let s = StochasticMatrix::from_rows(&[&[0.75, 0.25], &[0.25, 0.75]]).unwrap();
        let t = make_invertible(&s, 0.1, &mut rng).unwrap();
        assert_eq!(t.entries(), s.entries());

        // The flat matrix, n = 2.
        let flat = StochasticMatrix::uniform(2);
        let t = make_invertible(&flat, 0.1, &mut rng).unwrap();
        assert_eq!(rank(t.entries(), RANK_TOL), 2);
        for i in 0..2 {
            let d = (t.entries().row(i).transpose() - DVector::from_element(2, 0.5)).norm();
            assert!(d <= 0.1 + 1e-12);
        }

        // 100 random singular matrices, n <= 5: full rank after repair and
        // the spectral distance stays within eps.
        for _ in 0..100 {
            let n = 2 + (rng.random::<u32>() % 4) as usize;
            let s = random_stochastic(n, &mut rng, RowProfile::Uniform);
            let mut m = s.entries().clone();
            // Duplicate a row to force singularity.
            let src = (rng.random::<u32>() as usize) % n;
            let mut dst = (rng.random::<u32>() as usize) % n;
            if dst == src {
                dst = (dst + 1) % n;
            }
            for j in 0..n {
                m[(dst, j)] = m[(src, j)];
            }
            let singular = StochasticMatrix::new(m).unwrap();
            let eps = 0.05;
            let fixed = make_invertible(&singular, eps, &mut rng).unwrap();
            assert_eq!(rank(fixed.entries(), RANK_TOL), n);
            assert!(operator_norm(&(fixed.entries() - singular.entries())) <= eps + 1e-12);
        }
    }

    #[test]
    fn dobrushin_is_a_contraction_bound() {
        let mut rng = seeded_rng(29);
        for _ in 0..50 {
            let n = 2 + (rng.random::<u32>() % 7) as usize;
            let s = random_stochastic(n, &mut rng, RowProfile::Uniform);
            let c = s.dobrushin_coefficient();
            assert!((0.0..=1.0 + 1e-12).contains(&c));
        }
        // Extreme matrix whose normal part has spectral norm > 1 still has
        // Dobrushin coefficient <= 1.
        let s = StochasticMatrix::from_rows(&[
            &[1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0],
        ])
        .unwrap();
        let pp = ProjectionPair::new(3);
        let nop = pp.normal_part(&s).unwrap();
        assert!(nop.norm() > 1.0 + 1e-6);
        assert!(s.dobrushin_coefficient() <= 1.0 + 1e-15);
    }

    #[test]
    fn matrix_json_round_trip() {
        let s = StochasticMatrix::from_rows(&[&[0.5, 0.5], &[0.25, 0.75]]).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, "[[0.5,0.5],[0.25,0.75]]");
        let back: StochasticMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back.entries(), s.entries());
    }
}
