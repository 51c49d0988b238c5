//! Dominated splittings: ratio certificates, the sup-inf identity, and the
//! graph-transform construction of slow complements.
//!
//! A splitting `F^1 ⊕ … ⊕ F^k` along an orbit is `m`-dominated when, for
//! every cut `j`, the fast tail is uniformly weaker than the slow head:
//! `|S(m,x) restricted to F^{>j}| / m(S(m,x) restricted to F^{<=j}) <= 1/2`
//! at every sampled point, where `m(·)` is the co-norm (smallest singular
//! value of the restriction). [`certify_domination`] searches for the
//! smallest such `m`; [`solve_sigma`] builds the invariant complement of a
//! contracted normal block as the graph of a bundle map obtained from a
//! fixed-point iteration; [`lift_splitting`] and [`contracting_case`]
//! assemble full splittings out of normal data.
//!
//! Splittings come in two coordinate systems, distinguished by their
//! ambient dimension: subspaces of `R^n` pair with the full cocycle, and
//! subspaces of the `(n-1)`-dimensional normal coordinates pair with the
//! normal cocycle. Every entry point dispatches on that dimension.

use nalgebra::{DMatrix, RowDVector};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::base::{BasePoint, OrbitSegment};
use crate::cocycle::CocycleSpec;
use crate::error::{Error, Result};
use crate::linalg::{
    co_norm_restricted, operator_norm, operator_norm_restricted, ProjectionPair, Subspace,
};
use crate::lyapunov::SubspaceField;

/// Ratio threshold in the domination inequality.
pub const DOMINATION_BOUND: f64 = 0.5;
/// Additive slack applied when comparing ratios against the threshold.
pub const DOMINATION_SLACK: f64 = 1e-12;
/// Splittings must be invariant within this residual to be certified.
pub const INVARIANCE_TOL: f64 = 1e-8;
/// A restriction whose co-norm falls below this floor is treated as
/// singular (a kernel direction meets the slow block).
pub const SINGULAR_FLOOR: f64 = 1e-13;
/// The graph-transform iteration stops once updates fall below this size.
pub const SIGMA_UPDATE_TOL: f64 = 1e-12;
/// Iteration budget for the graph transform.
pub const SIGMA_MAX_ITERS: usize = 10_000;
/// Bound enforced on the one-step conjugation identity of a solved field.
pub const SIGMA_IDENTITY_TOL: f64 = 1e-10;

/// A direct-sum decomposition of one fiber into ordered components.
#[derive(Clone, Debug)]
pub struct Splitting {
    components: Vec<Subspace>,
}

impl Splitting {
    /// Validates that the components are nonempty, share an ambient space,
    /// and span it with a well-conditioned direct sum.
    pub fn new(components: Vec<Subspace>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("a splitting needs at least one component".into()));
        }
        let ambient = components[0].ambient_dim();
        if components.iter().any(|s| s.ambient_dim() != ambient) {
            return Err(Error::DimensionMismatch(
                "splitting components live in different ambient spaces".into(),
            ));
        }
        if components.iter().any(|s| s.dim() == 0) {
            return Err(Error::InvalidInput("splitting components must have positive dimension".into()));
        }
        let total: usize = components.iter().map(Subspace::dim).sum();
        if total != ambient {
            return Err(Error::DimensionMismatch(format!(
                "component dimensions sum to {total}, ambient space has dimension {ambient}"
            )));
        }
        // Folding through direct_sum rejects ill-conditioned (nearly
        // intersecting) component pairs.
        let mut sum = components[0].clone();
        for c in &components[1..] {
            sum = sum.direct_sum(c)?;
        }
        Ok(Self { components })
    }

    /// Two-component convenience constructor.
    pub fn pair(slow: Subspace, fast: Subspace) -> Result<Self> {
        Self::new(vec![slow, fast])
    }

    pub fn components(&self) -> &[Subspace] {
        &self.components
    }

    pub fn ambient_dim(&self) -> usize {
        self.components[0].ambient_dim()
    }

    /// Number of components.
    pub fn blocks(&self) -> usize {
        self.components.len()
    }

    /// Component dimensions in order.
    pub fn dims(&self) -> Vec<usize> {
        self.components.iter().map(Subspace::dim).collect()
    }

    /// The coarsening at cut `j` (1-based): the join of the first `j`
    /// components and the join of the rest, in that order.
    pub fn cut(&self, j: usize) -> Result<(Subspace, Subspace)> {
        if j == 0 || j >= self.components.len() {
            return Err(Error::InvalidInput(format!(
                "cut index {j} out of range for {} components",
                self.components.len()
            )));
        }
        let join = |parts: &[Subspace]| -> Result<Subspace> {
            let mut sum = parts[0].clone();
            for p in &parts[1..] {
                sum = sum.direct_sum(p)?;
            }
            Ok(sum)
        };
        Ok((join(&self.components[..j])?, join(&self.components[j..])?))
    }
}

/// A splitting attached to every point of an orbit segment.
#[derive(Clone, Debug)]
pub struct SplittingField {
    orbit: OrbitSegment,
    splittings: Vec<Splitting>,
}

impl SplittingField {
    pub fn new(c: &CocycleSpec, orbit: OrbitSegment, splittings: Vec<Splitting>) -> Result<Self> {
        if orbit.len() != splittings.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} orbit points, {} splittings",
                orbit.len(),
                splittings.len()
            )));
        }
        let n = c.n();
        for s in &splittings {
            if s.ambient_dim() != n && s.ambient_dim() + 1 != n {
                return Err(Error::DimensionMismatch(format!(
                    "splitting ambient dimension {} matches neither n = {n} nor n - 1",
                    s.ambient_dim()
                )));
            }
        }
        let dims = splittings[0].dims();
        if splittings.iter().any(|s| s.dims() != dims) {
            return Err(Error::DimensionMismatch(
                "component dimensions vary along the orbit".into(),
            ));
        }
        Ok(Self { orbit, splittings })
    }

    /// The same splitting at every point of the orbit of `x`.
    pub fn constant(
        c: &CocycleSpec,
        x: &BasePoint,
        len: usize,
        splitting: Splitting,
    ) -> Result<Self> {
        let orbit = c.base().orbit(x, len)?;
        let splittings = vec![splitting; orbit.len()];
        Self::new(c, orbit, splittings)
    }

    pub fn orbit(&self) -> &OrbitSegment {
        &self.orbit
    }

    pub fn splittings(&self) -> &[Splitting] {
        &self.splittings
    }

    pub fn ambient_dim(&self) -> usize {
        self.splittings[0].ambient_dim()
    }

    /// Worst one-step invariance defect over components and consecutive
    /// pairs (wrapping when the orbit covers a full period). Ambient
    /// splittings are transported by the cocycle itself, normal-coordinate
    /// splittings by its normal part.
    pub fn invariance_residual(&self, c: &CocycleSpec) -> Result<f64> {
        let len = self.orbit.len();
        let wraps = c.base().period() == Some(len);
        let pairs = if wraps { len } else { len.saturating_sub(1) };
        let normal = self.ambient_dim() + 1 == c.n();
        let proj = ProjectionPair::new(c.n());
        let mut worst = 0.0f64;
        for i in 0..pairs {
            let step = c.value_at(&self.orbit.points()[i])?;
            let op = if normal {
                proj.normal_part(&step)?.matrix().clone()
            } else {
                step.into_inner()
            };
            let target = &self.splittings[(i + 1) % len];
            for (comp, tgt) in self.splittings[i].components().iter().zip(target.components()) {
                let image = &op * comp.basis();
                let defect =
                    operator_norm(&(&image - tgt.basis() * (tgt.basis().transpose() * &image)));
                worst = worst.max(defect);
            }
        }
        Ok(worst)
    }
}

/// Evidence that a sampled splitting is `m`-dominated.
#[derive(Clone, Debug)]
pub struct DominationCertificate {
    /// The certified iterate count.
    pub m: usize,
    /// Largest ratio observed over the sample and over all cuts.
    pub worst_ratio: f64,
    /// Worst-cut ratio at each sampled point, in orbit order.
    pub per_point_ratios: Vec<f64>,
    /// The splitting at the first sampled point.
    pub splitting: Splitting,
    /// Human-readable description of the sample the ratios range over.
    pub sample_description: String,
}

impl DominationCertificate {
    /// A certificate is valid when its worst ratio clears the threshold.
    pub fn is_valid(&self) -> bool {
        self.worst_ratio <= DOMINATION_BOUND + DOMINATION_SLACK
    }
}

impl Serialize for DominationCertificate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut state = serializer.serialize_struct("DominationCertificate", 4)?;
        state.serialize_field("m", &self.m)?;
        state.serialize_field("worst_ratio", &self.worst_ratio)?;
        state.serialize_field("points", &self.per_point_ratios)?;
        state.serialize_field("splitting_dims", &self.splitting.dims())?;
        state.end()
    }
}

/// The `m`-step matrix matching the splitting's coordinate system: the full
/// product for ambient splittings, the composed normal part otherwise.
fn m_step_matrix(
    c: &CocycleSpec,
    proj: &ProjectionPair,
    ambient_dim: usize,
    x: &BasePoint,
    m: usize,
) -> Result<DMatrix<f64>> {
    if ambient_dim == c.n() {
        Ok(c.iterate(x, m)?.into_inner())
    } else if ambient_dim + 1 == c.n() {
        Ok(c.iterate_normal(proj, x, m)?.matrix().clone())
    } else {
        Err(Error::DimensionMismatch(format!(
            "splitting ambient dimension {ambient_dim} matches neither n = {} nor n - 1",
            c.n()
        )))
    }
}

fn cut_ratio(a: &DMatrix<f64>, slow: &Subspace, fast: &Subspace) -> Result<f64> {
    let num = operator_norm_restricted(a, fast.basis());
    let den = co_norm_restricted(a, slow.basis());
    if den <= SINGULAR_FLOOR {
        return Err(Error::SingularRestriction(format!(
            "the iterated cocycle has co-norm {den:.3e} on the slow block; a kernel direction \
             meets it (collapsing directions must sit in the fast block)"
        )));
    }
    Ok(num / den)
}

/// Domination ratio of a splitting at one point: the worst cut of
/// `|S(m,x)|fast| / m(S(m,x)|slow)` over all coarsenings.
///
/// Callers are responsible for invariance of the splitting; this evaluates
/// the ratio as given. Errors when a slow restriction is singular.
pub fn domination_ratio(
    c: &CocycleSpec,
    splitting: &Splitting,
    x: &BasePoint,
    m: usize,
) -> Result<f64> {
    let proj = ProjectionPair::new(c.n());
    let a = m_step_matrix(c, &proj, splitting.ambient_dim(), x, m)?;
    let mut worst = 0.0f64;
    for j in 1..splitting.blocks() {
        let (slow, fast) = splitting.cut(j)?;
        worst = worst.max(cut_ratio(&a, &slow, &fast)?);
    }
    Ok(worst)
}

/// Two independent evaluations of the domination ratio of a two-component
/// splitting: once via restricted singular values of the iterate, once via
/// extreme eigenvalues of the restricted Gram matrices. Both compute
/// `sup_{w in fast} |A w|/|w| / inf_{v in slow} |A v|/|v|`; their agreement
/// is a floating-point consistency check, not a mathematical one.
pub fn supinf_identity_check(
    c: &CocycleSpec,
    splitting: &Splitting,
    x: &BasePoint,
    m: usize,
) -> Result<(f64, f64)> {
    if splitting.blocks() != 2 {
        return Err(Error::InvalidInput(format!(
            "the sup-inf check compares one cut; got {} components",
            splitting.blocks()
        )));
    }
    let proj = ProjectionPair::new(c.n());
    let a = m_step_matrix(c, &proj, splitting.ambient_dim(), x, m)?;
    let slow = &splitting.components()[0];
    let fast = &splitting.components()[1];
    let lhs = cut_ratio(&a, slow, fast)?;

    let gram_extremes = |basis: &DMatrix<f64>| -> (f64, f64) {
        let image = &a * basis;
        let gram = image.transpose() * &image;
        let eigs = gram.symmetric_eigen().eigenvalues;
        let max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        (max.max(0.0).sqrt(), min.max(0.0).sqrt())
    };
    let (sup, _) = gram_extremes(fast.basis());
    let (_, inf) = gram_extremes(slow.basis());
    if inf <= SINGULAR_FLOOR {
        return Err(Error::SingularRestriction(format!(
            "Gram route finds co-norm {inf:.3e} on the slow block"
        )));
    }
    Ok((lhs, sup / inf))
}

fn ratios_at(
    c: &CocycleSpec,
    field: &SplittingField,
    m: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut per_point = Vec::with_capacity(field.orbit().len());
    let mut worst = 0.0f64;
    for (x, splitting) in field.orbit().points().iter().zip(field.splittings()) {
        let r = domination_ratio(c, splitting, x, m)?;
        worst = worst.max(r);
        per_point.push(r);
    }
    Ok((worst, per_point))
}

fn describe_sample(field: &SplittingField) -> String {
    format!(
        "{} sampled points from {:?}",
        field.orbit().len(),
        field.orbit().origin()
    )
}

/// Searches for the smallest `m <= m_max` at which the sampled splitting is
/// dominated (every cut, every point). On failure the error carries the
/// best ratio observed and the iterate count that produced it.
pub fn certify_domination(
    c: &CocycleSpec,
    field: &SplittingField,
    m_max: usize,
) -> Result<DominationCertificate> {
    if m_max == 0 {
        return Err(Error::InvalidInput("need m_max >= 1".into()));
    }
    let residual = field.invariance_residual(c)?;
    if residual > INVARIANCE_TOL {
        return Err(Error::NotInvariant { residual, tolerance: INVARIANCE_TOL });
    }
    let mut best = (1usize, f64::INFINITY);
    for m in 1..=m_max {
        let (worst, per_point) = ratios_at(c, field, m)?;
        if worst <= DOMINATION_BOUND + DOMINATION_SLACK {
            return Ok(DominationCertificate {
                m,
                worst_ratio: worst,
                per_point_ratios: per_point,
                splitting: field.splittings()[0].clone(),
                sample_description: describe_sample(field),
            });
        }
        if worst < best.1 {
            best = (m, worst);
        }
    }
    Err(Error::NotDominated { m_max, best_m: best.0, best_ratio: best.1 })
}

/// A family of bundle maps from a normal block into the fixed line,
/// attached to the points of an orbit segment. The graph of each map is
/// the invariant complement produced by [`solve_sigma`].
#[derive(Clone, Debug)]
pub struct SigmaField {
    orbit: OrbitSegment,
    /// Domain of each map: a subspace of the normal coordinates.
    domains: Vec<Subspace>,
    /// Each map as a row vector on full normal coordinates (supported on
    /// the domain).
    rows: Vec<RowDVector<f64>>,
    /// Worst one-step conjugation-identity defect over the sample.
    pub residual: f64,
    /// Sup-norm update sizes of the fixed-point iteration, in order; they
    /// decay geometrically at the contraction rate of the normal block.
    pub iteration_residuals: Vec<f64>,
}

impl SigmaField {
    pub fn orbit(&self) -> &OrbitSegment {
        &self.orbit
    }

    pub fn domains(&self) -> &[Subspace] {
        &self.domains
    }

    /// The map at sample index `i` as a row on normal coordinates.
    pub fn row_at(&self, i: usize) -> &RowDVector<f64> {
        &self.rows[i]
    }

    /// The single matrix entry of the map at index `i`, for
    /// one-dimensional domains in one-dimensional normal spaces.
    pub fn scalar_at(&self, i: usize) -> Result<f64> {
        if self.rows[i].len() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "map at index {i} has {} normal coordinates, expected 1",
                self.rows[i].len()
            )));
        }
        Ok(self.rows[i][0])
    }

    /// The graph of the map at index `i` as an ambient subspace: the span
    /// of `(sigma(v), v)` over domain vectors `v`, written in ambient
    /// coordinates.
    pub fn graph_at(&self, i: usize, proj: &ProjectionPair) -> Result<Subspace> {
        let domain = &self.domains[i];
        let d = domain.dim();
        let n = proj.n();
        let mut cols = DMatrix::zeros(n, d);
        for j in 0..d {
            let v = domain.basis().column(j).into_owned();
            let coeff = (&self.rows[i] * &v)[0];
            let ambient = proj.normal_to_ambient(&v) + proj.u() * coeff;
            cols.set_column(j, &ambient);
        }
        Subspace::orthonormalized(&cols)
    }
}

/// Solves the graph-transform fixed point over the sampled orbit: the
/// family of maps `sigma_x` from the normal block `N2` into the fixed line
/// satisfying `sigma_x + (P S_x on N) = sigma_{f(x)} ∘ (normal part of
/// S_x)` on `N2_x`.
///
/// The `m_hat`-step transform is iterated from the zero map; each update
/// appends one term of the geometric tail series, so updates shrink at the
/// measured contraction rate of the normal block. The orbit is extended
/// forward as needed, so the sample itself need not be recurrent.
///
/// Errors when the `m_hat`-step normal restriction is not a `1/2`-
/// contraction at some sample point (the hypothesis that makes the
/// transform contract), when the iteration budget runs out, or when the
/// solved field fails the one-step identity within
/// [`SIGMA_IDENTITY_TOL`].
pub fn solve_sigma(c: &CocycleSpec, n2: &SubspaceField, m_hat: usize) -> Result<SigmaField> {
    if m_hat == 0 {
        return Err(Error::InvalidInput("need m_hat >= 1".into()));
    }
    let n = c.n();
    let proj = ProjectionPair::new(n);
    let len = n2.orbit().len();
    if len == 0 {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if n2.spaces().iter().any(|s| s.ambient_dim() + 1 != n) {
        return Err(Error::DimensionMismatch(
            "the graph transform wants normal-coordinate subspaces (ambient n - 1)".into(),
        ));
    }
    let d = n2.spaces()[0].dim();
    if d == 0 {
        return Err(Error::InvalidInput("the normal block must have positive dimension".into()));
    }
    if n2.spaces().iter().any(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch("normal block dimension varies along the orbit".into()));
    }

    // Contraction hypothesis at every sample point.
    let mut sup = 0.0f64;
    for (x, space) in n2.orbit().points().iter().zip(n2.spaces()) {
        let m = c.iterate_normal(&proj, x, m_hat)?;
        sup = sup.max(operator_norm_restricted(m.matrix(), space.basis()));
    }
    if sup > DOMINATION_BOUND + DOMINATION_SLACK {
        return Err(Error::NoContraction { norm: sup, bound: DOMINATION_BOUND });
    }

    // Per-point iteration state: the current partial sum `s`, the composed
    // normal restriction `v` columns, and the current extension point.
    let mut sums: Vec<RowDVector<f64>> = vec![RowDVector::zeros(d); len];
    let mut composed: Vec<DMatrix<f64>> =
        n2.spaces().iter().map(|s| s.basis().clone()).collect();
    let mut heads: Vec<BasePoint> = n2.orbit().points().to_vec();
    let mut updates = Vec::new();
    let mut converged = false;
    for _ in 0..SIGMA_MAX_ITERS {
        let mut update = 0.0f64;
        for i in 0..len {
            let step = c.iterate(&heads[i], m_hat)?.into_inner();
            let mixed_row = proj.u().transpose() * &step * proj.n_basis();
            let term = &mixed_row * &composed[i];
            update = update.max(term.norm());
            sums[i] -= term;
            composed[i] = proj.normal_part_of(&step)?.matrix() * &composed[i];
            let mut next = heads[i];
            for _ in 0..m_hat {
                next = c.base().step(&next)?;
            }
            heads[i] = next;
        }
        updates.push(update);
        if update <= SIGMA_UPDATE_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: SIGMA_MAX_ITERS,
            residual: updates.last().copied().unwrap_or(f64::INFINITY),
        });
    }

    // Express each map on full normal coordinates.
    let rows: Vec<RowDVector<f64>> = sums
        .iter()
        .zip(n2.spaces())
        .map(|(s, space)| s * space.basis().transpose())
        .collect();

    // One-step conjugation identity across consecutive sample points.
    let wraps = c.base().period() == Some(len);
    let pairs = if wraps { len } else { len.saturating_sub(1) };
    let mut residual = 0.0f64;
    for i in 0..pairs {
        let next = (i + 1) % len;
        let step = c.value_at(&n2.orbit().points()[i])?.into_inner();
        let mixed_row = proj.u().transpose() * &step * proj.n_basis();
        let normal = proj.normal_part_of(&step)?;
        let lhs = (&rows[i] + mixed_row) * n2.spaces()[i].basis();
        let rhs = (&rows[next] * normal.matrix()) * n2.spaces()[i].basis();
        residual = residual.max((lhs - rhs).norm());
    }
    if residual > SIGMA_IDENTITY_TOL {
        return Err(Error::NotInvariant { residual, tolerance: SIGMA_IDENTITY_TOL });
    }

    Ok(SigmaField {
        orbit: n2.orbit().clone(),
        domains: n2.spaces().to_vec(),
        rows,
        residual,
        iteration_residuals: updates,
    })
}

/// Lifts a two-component normal splitting `N1 ⊕ N2` (with `N2` the
/// `m_hat`-contracted block) to an ambient splitting: the slow component is
/// the fixed line joined with `N1`, the fast one is the graph of the
/// solved bundle map over `N2`. Returns the lifted field together with a
/// certificate whose iterate count is the smallest multiple of `m_hat`
/// with `2C / 2^(m/m_hat) <= 1/2`, where `C` is the measured
/// norm-equivalence constant between graph vectors and their normal parts.
pub fn lift_splitting(
    c: &CocycleSpec,
    normal_splitting: &SplittingField,
    m_hat: usize,
) -> Result<(SplittingField, DominationCertificate)> {
    let n = c.n();
    if normal_splitting.ambient_dim() + 1 != n {
        return Err(Error::DimensionMismatch(
            "lift_splitting expects a splitting in normal coordinates (ambient n - 1)".into(),
        ));
    }
    if normal_splitting.splittings()[0].blocks() != 2 {
        return Err(Error::InvalidInput(format!(
            "lift_splitting expects two normal components, got {}; for a fully contracted \
             normal space use contracting_case",
            normal_splitting.splittings()[0].blocks()
        )));
    }
    let proj = ProjectionPair::new(n);
    let orbit = normal_splitting.orbit().clone();
    let n2_spaces: Vec<Subspace> = normal_splitting
        .splittings()
        .iter()
        .map(|s| s.components()[1].clone())
        .collect();
    let n2 = SubspaceField::new(c, orbit.clone(), n2_spaces)?;
    let sigma = solve_sigma(c, &n2, m_hat)?;

    let u = proj.u().clone();
    let mut lifted = Vec::with_capacity(orbit.len());
    let mut min_angle = f64::INFINITY;
    let mut c_const = 1.0f64;
    for (i, split) in normal_splitting.splittings().iter().enumerate() {
        let n1 = &split.components()[0];
        let mut slow_cols = DMatrix::zeros(n, 1 + n1.dim());
        slow_cols.set_column(0, &u);
        for j in 0..n1.dim() {
            let col = proj.normal_to_ambient(&n1.basis().column(j).into_owned());
            slow_cols.set_column(1 + j, &col);
        }
        let slow = Subspace::from_orthonormal(slow_cols)?;
        let fast = sigma.graph_at(i, &proj)?;
        min_angle = min_angle.min(crate::linalg::angle(&u, &fast)?);
        let normal_conorm = co_norm_restricted(proj.q(), fast.basis());
        if normal_conorm <= SINGULAR_FLOOR {
            return Err(Error::SingularRestriction(
                "a graph direction lies along the fixed line".into(),
            ));
        }
        c_const = c_const.max(1.0 / normal_conorm);
        lifted.push(Splitting::pair(slow, fast)?);
    }
    assert!(
        min_angle > 1e-3,
        "graph angle to the fixed line degenerated: {min_angle:.3e}"
    );
    let field = SplittingField::new(c, orbit, lifted)?;

    let k = ((4.0 * c_const).log2().ceil() as usize).max(1);
    let m_star = k * m_hat;
    let cap = m_star + 64 * m_hat;
    let residual = field.invariance_residual(c)?;
    if residual > INVARIANCE_TOL {
        return Err(Error::NotInvariant { residual, tolerance: INVARIANCE_TOL });
    }
    let mut best = (m_star, f64::INFINITY);
    let mut m = m_star;
    while m <= cap {
        let (worst, per_point) = ratios_at(c, &field, m)?;
        if worst <= DOMINATION_BOUND + DOMINATION_SLACK {
            let cert = DominationCertificate {
                m,
                worst_ratio: worst,
                per_point_ratios: per_point,
                splitting: field.splittings()[0].clone(),
                sample_description: format!(
                    "{}; min angle to the fixed line {:.3e}; norm-equivalence constant {:.6}",
                    describe_sample(&field),
                    min_angle,
                    c_const
                ),
            };
            return Ok((field, cert));
        }
        if worst < best.1 {
            best = (m, worst);
        }
        m += m_hat;
    }
    Err(Error::NotDominated { m_max: cap, best_m: best.0, best_ratio: best.1 })
}

/// The splitting produced by a uniformly contracted normal part: the fixed
/// line plus the graph of the bundle map over the whole normal space.
/// Requires every sampled one-step normal norm below one; the certificate
/// is found by the ascending search.
pub fn contracting_case(
    c: &CocycleSpec,
    x: &BasePoint,
    len: usize,
) -> Result<(SplittingField, DominationCertificate)> {
    let n = c.n();
    let proj = ProjectionPair::new(n);
    let orbit = c.base().orbit(x, len)?;

    let mut sup = 0.0f64;
    for p in orbit.points() {
        sup = sup.max(proj.normal_part(&c.value_at(p)?)?.norm());
    }
    if sup >= 1.0 - 1e-12 {
        return Err(Error::NoContraction { norm: sup, bound: 1.0 });
    }

    // Smallest iterate count whose sampled normal products are 1/2-
    // contractions; one-step norms below one force geometric decay.
    let mut m_hat = 0usize;
    for candidate in 1..=512usize {
        let mut worst = 0.0f64;
        for p in orbit.points() {
            worst = worst.max(c.iterate_normal(&proj, p, candidate)?.norm());
        }
        if worst <= DOMINATION_BOUND + DOMINATION_SLACK {
            m_hat = candidate;
            break;
        }
    }
    if m_hat == 0 {
        return Err(Error::NoConvergence { iterations: 512, residual: sup });
    }

    let full_normal = Subspace::full(n - 1);
    let n2 = SubspaceField::new(c, orbit.clone(), vec![full_normal; orbit.len()])?;
    let sigma = solve_sigma(c, &n2, m_hat)?;

    let u_line = Subspace::line(proj.u())?;
    let mut splittings = Vec::with_capacity(orbit.len());
    let mut c_const = 1.0f64;
    for i in 0..orbit.len() {
        let graph = sigma.graph_at(i, &proj)?;
        let normal_conorm = co_norm_restricted(proj.q(), graph.basis());
        if normal_conorm > SINGULAR_FLOOR {
            c_const = c_const.max(1.0 / normal_conorm);
        }
        splittings.push(Splitting::pair(u_line.clone(), graph)?);
    }
    let field = SplittingField::new(c, orbit, splittings)?;
    let m_max = (8 + ((4.0 * c_const).log2().ceil() as usize).max(1)) * m_hat;
    let cert = certify_domination(c, &field, m_max)?;
    Ok((field, cert))
}

/// Domination certificate for the full distinct-rate splitting of a
/// periodic cocycle, assembled from the exact per-point rate-block
/// subspaces.
pub fn certify_oseledets(
    c: &CocycleSpec,
    x: &BasePoint,
    m_max: usize,
) -> Result<DominationCertificate> {
    let q = c
        .base()
        .period()
        .ok_or_else(|| Error::InvalidInput("periodic base required".into()))?;
    let orbit = c.base().orbit(x, q)?;
    let mut splittings = Vec::with_capacity(q);
    let mut dims: Option<Vec<usize>> = None;
    for point in orbit.points() {
        let (_, estimate) = crate::lyapunov::lyapunov_periodic(c, point)?;
        let blocks: Vec<Subspace> = estimate.subspaces.to_vec();
        let here: Vec<usize> = blocks.iter().map(Subspace::dim).collect();
        match &dims {
            None => dims = Some(here),
            Some(d) if *d == here => {}
            Some(d) => {
                return Err(Error::InvalidInput(format!(
                    "rate-block dimensions change along the orbit: {d:?} vs {here:?}"
                )));
            }
        }
        splittings.push(Splitting::new(blocks)?);
    }
    let field = SplittingField::new(c, orbit, splittings)?;
    certify_domination(c, &field, m_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::BaseSystem;
    use nalgebra::DVector;
    use crate::cocycle::Generator;
    use crate::linalg::{random_stochastic, theta_inv, RowProfile, StochasticMatrix};
    use crate::lyapunov::lyapunov_periodic;
    use crate::seeded_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;

    fn constant_spec(rows: &[&[f64]]) -> CocycleSpec {
        CocycleSpec::constant(BaseSystem::cycle(1), StochasticMatrix::from_rows(rows).unwrap())
            .unwrap()
    }

    fn two_block_n2() -> Splitting {
        let u_line = Subspace::line(&DVector::from_column_slice(&[1.0, 1.0])).unwrap();
        let anti = Subspace::line(&DVector::from_column_slice(&[1.0, -1.0])).unwrap();
        Splitting::pair(u_line, anti).unwrap()
    }

    /// A 3x3 stochastic matrix with a prescribed diagonal normal part and
    /// prescribed column means.
    fn three_by_three_with_normal_diag(d1: f64, d2: f64, kappa: &[f64; 3]) -> StochasticMatrix {
        let proj = ProjectionPair::new(3);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[d1, d2]));
        let a = proj.n_basis() * d * proj.n_basis().transpose();
        let s = theta_inv(&a, &DVector::from_column_slice(kappa)).unwrap();
        StochasticMatrix::new(s).unwrap()
    }

    #[test]
    fn ratio_worked_examples() {
        // Symmetric two-state chain: normal factor 1/2 against the fixed
        // line's factor 1.
        let spec = constant_spec(&[&[0.75, 0.25], &[0.25, 0.75]]);
        let split = two_block_n2();
        let r1 = domination_ratio(&spec, &split, &BasePoint::Cycle(0), 1).unwrap();
        assert_abs_diff_eq!(r1, 0.5, epsilon = 1e-12);
        let r3 = domination_ratio(&spec, &split, &BasePoint::Cycle(0), 3).unwrap();
        assert_abs_diff_eq!(r3, 0.125, epsilon = 1e-12);

        // The identity cocycle never separates anything.
        let id = CocycleSpec::constant(BaseSystem::cycle(1), StochasticMatrix::identity(2))
            .unwrap();
        for m in [1, 2, 5] {
            let r = domination_ratio(&id, &two_block_n2(), &BasePoint::Cycle(0), m).unwrap();
            assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_slow_block_is_an_error() {
        // The flat chain kills the zero-sum line; putting it in the slow
        // block must be refused.
        let spec = CocycleSpec::constant(BaseSystem::cycle(1), StochasticMatrix::uniform(2))
            .unwrap();
        let anti = Subspace::line(&DVector::from_column_slice(&[1.0, -1.0])).unwrap();
        let u_line = Subspace::line(&DVector::from_column_slice(&[1.0, 1.0])).unwrap();
        let bad = Splitting::pair(anti, u_line).unwrap();
        assert!(matches!(
            domination_ratio(&spec, &bad, &BasePoint::Cycle(0), 1),
            Err(Error::SingularRestriction(_))
        ));
    }

    #[test]
    fn supinf_routes_agree() {
        let mut rng = seeded_rng(31);
        let mut checked = 0;
        for _ in 0..100 {
            let n = rng.random_range(2..6usize);
            let s = crate::linalg::make_invertible(
                &random_stochastic(n, &mut rng, RowProfile::Uniform),
                1e-3,
                &mut rng,
            )
            .unwrap();
            let spec = CocycleSpec::constant(BaseSystem::cycle(1), s).unwrap();
            // Random orthogonal two-block splitting.
            let raw = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            let qr = raw.qr();
            let q = qr.q();
            let d_slow = rng.random_range(1..n);
            let slow = Subspace::orthonormalized(&q.columns(0, d_slow).into_owned()).unwrap();
            let fast =
                Subspace::orthonormalized(&q.columns(d_slow, n - d_slow).into_owned()).unwrap();
            let split = Splitting::pair(slow, fast).unwrap();
            let m = rng.random_range(1..4usize);
            let (lhs, rhs) =
                supinf_identity_check(&spec, &split, &BasePoint::Cycle(0), m).unwrap();
            // Random splittings can come close to the iterate's kernel,
            // inflating the ratio; the agreement is relative in that scale.
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.max(1.0),
                "routes disagree: {lhs} vs {rhs} (n = {n}, m = {m})"
            );
            checked += 1;
        }
        assert_eq!(checked, 100);

        // One-dimensional blocks reduce to scalar division.
        let spec = constant_spec(&[&[0.5, 0.5], &[0.25, 0.75]]);
        let (lhs, rhs) =
            supinf_identity_check(&spec, &two_block_n2(), &BasePoint::Cycle(0), 2).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-14);

        let sym = constant_spec(&[&[0.75, 0.25], &[0.25, 0.75]]);
        let (lhs, rhs) =
            supinf_identity_check(&sym, &two_block_n2(), &BasePoint::Cycle(0), 1).unwrap();
        assert_abs_diff_eq!(lhs, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rhs, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn certify_worked_examples() {
        let spec = constant_spec(&[&[0.75, 0.25], &[0.25, 0.75]]);
        let field =
            SplittingField::constant(&spec, &BasePoint::Cycle(0), 1, two_block_n2()).unwrap();
        let cert = certify_domination(&spec, &field, 8).unwrap();
        assert_eq!(cert.m, 1);
        assert_abs_diff_eq!(cert.worst_ratio, 0.5, epsilon = 1e-12);
        assert!(cert.is_valid());

        // Serialized form exposes exactly the documented keys.
        let json = serde_json::to_value(&cert).unwrap();
        let obj = json.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["m", "points", "splitting_dims", "worst_ratio"]);
        assert_eq!(json["splitting_dims"], serde_json::json!([1, 1]));

        // The identity cocycle fails with best ratio one.
        let id = CocycleSpec::constant(BaseSystem::cycle(1), StochasticMatrix::identity(2))
            .unwrap();
        let field_id =
            SplittingField::constant(&id, &BasePoint::Cycle(0), 1, two_block_n2()).unwrap();
        match certify_domination(&id, &field_id, 6) {
            Err(Error::NotDominated { m_max, best_ratio, .. }) => {
                assert_eq!(m_max, 6);
                assert_abs_diff_eq!(best_ratio, 1.0, epsilon = 1e-12);
            }
            other => panic!("expected NotDominated, got {other:?}"),
        }

        // Three ordered blocks with normal factors 1/2 and 1/8: both cuts
        // certify at m = 1.
        let s3 = three_by_three_with_normal_diag(0.5, 0.125, &[1.0 / 3.0; 3]);
        let spec3 = CocycleSpec::constant(BaseSystem::cycle(1), s3).unwrap();
        let proj = ProjectionPair::new(3);
        let u_line = Subspace::line(proj.u()).unwrap();
        let dir1 = Subspace::line(&proj.n_basis().column(0).into_owned()).unwrap();
        let dir2 = Subspace::line(&proj.n_basis().column(1).into_owned()).unwrap();
        let split3 = Splitting::new(vec![u_line, dir1, dir2]).unwrap();
        let field3 = SplittingField::constant(&spec3, &BasePoint::Cycle(0), 1, split3).unwrap();
        let cert3 = certify_domination(&spec3, &field3, 4).unwrap();
        assert_eq!(cert3.m, 1);
        assert_abs_diff_eq!(cert3.worst_ratio, 0.5, epsilon = 1e-10);
        assert_eq!(cert3.splitting.dims(), vec![1, 1, 1]);

        // The same data viewed in normal coordinates: factors 1/2 and 1/8
        // give ratio 1/4 at m = 1.
        let e1 = Subspace::line(&DVector::from_column_slice(&[1.0, 0.0])).unwrap();
        let e2 = Subspace::line(&DVector::from_column_slice(&[0.0, 1.0])).unwrap();
        let nsplit = Splitting::pair(e1, e2).unwrap();
        let nfield = SplittingField::constant(&spec3, &BasePoint::Cycle(0), 1, nsplit).unwrap();
        let ncert = certify_domination(&spec3, &nfield, 4).unwrap();
        assert_eq!(ncert.m, 1);
        assert_abs_diff_eq!(ncert.worst_ratio, 0.25, epsilon = 1e-10);
    }

    #[test]
    fn certify_rejects_non_invariant_splittings() {
        // (1, -1) is not an eigdirection of this asymmetric chain once it
        // is paired with a transverse line other than u, so the crooked
        // splitting below is not invariant.
        let spec = constant_spec(&[&[0.5, 0.5], &[0.25, 0.75]]);
        let crooked = Splitting::pair(
            Subspace::line(&DVector::from_column_slice(&[1.0, 0.0])).unwrap(),
            Subspace::line(&DVector::from_column_slice(&[0.0, 1.0])).unwrap(),
        )
        .unwrap();
        let field = SplittingField::constant(&spec, &BasePoint::Cycle(0), 1, crooked).unwrap();
        assert!(matches!(
            certify_domination(&spec, &field, 4),
            Err(Error::NotInvariant { .. })
        ));
    }

    #[test]
    fn sigma_worked_examples() {
        let proj = ProjectionPair::new(2);

        // Symmetric chain: the anti-diagonal line is already invariant, so
        // the map vanishes.
        let sym = constant_spec(&[&[0.75, 0.25], &[0.25, 0.75]]);
        let n2 = SubspaceField::constant(&sym, &BasePoint::Cycle(0), 1, Subspace::full(1))
            .unwrap();
        let sigma = solve_sigma(&sym, &n2, 1).unwrap();
        assert!(sigma.row_at(0).norm() < 1e-14);
        assert!(sigma.residual <= 1e-12);

        // Asymmetric chain: the slow eigenvector (2, -1) is the graph of
        // the scalar map 1/3 over the normal line.
        let asym = constant_spec(&[&[0.5, 0.5], &[0.25, 0.75]]);
        let n2a = SubspaceField::constant(&asym, &BasePoint::Cycle(0), 1, Subspace::full(1))
            .unwrap();
        let sig = solve_sigma(&asym, &n2a, 1).unwrap();
        assert_abs_diff_eq!(sig.scalar_at(0).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        let graph = sig.graph_at(0, &proj).unwrap();
        let target = DVector::from_column_slice(&[2.0, -1.0]);
        assert!(crate::linalg::angle(&target, &graph).unwrap() < 1e-10);
        assert!(sig.residual <= 1e-12);
        // Updates decay geometrically at the normal contraction rate 1/4.
        for pair in sig.iteration_residuals.windows(2) {
            assert!(pair[1] <= pair[0] * 0.25 + 1e-15);
        }

        // The flat chain has zero normal part and zero map.
        let flat = CocycleSpec::constant(BaseSystem::cycle(1), StochasticMatrix::uniform(3))
            .unwrap();
        let n2f = SubspaceField::constant(&flat, &BasePoint::Cycle(0), 1, Subspace::full(2))
            .unwrap();
        let sf = solve_sigma(&flat, &n2f, 1).unwrap();
        assert!(sf.row_at(0).norm() < 1e-14);
        let graph = sf.graph_at(0, &ProjectionPair::new(3)).unwrap();
        let u3 = DVector::from_element(3, 1.0);
        assert!(graph.project(&u3).norm() < 1e-12);
    }

    #[test]
    fn sigma_requires_the_contraction_hypothesis() {
        // Normal factor 0.9: the one-step transform is no contraction, but
        // seven steps give 0.9^7 < 1/2.
        let slow = constant_spec(&[&[0.95, 0.05], &[0.05, 0.95]]);
        let n2 = SubspaceField::constant(&slow, &BasePoint::Cycle(0), 1, Subspace::full(1))
            .unwrap();
        match solve_sigma(&slow, &n2, 1) {
            Err(Error::NoContraction { norm, bound }) => {
                assert_abs_diff_eq!(norm, 0.9, epsilon = 1e-12);
                assert_abs_diff_eq!(bound, 0.5, epsilon = 1e-15);
            }
            other => panic!("expected NoContraction, got {other:?}"),
        }
        let sig = solve_sigma(&slow, &n2, 7).unwrap();
        assert!(sig.row_at(0).norm() < 1e-14, "symmetric chain still has a vanishing map");
    }

    #[test]
    fn sigma_on_a_non_recurrent_sample() {
        // Constant generator over an irrational rotation: the fixed point
        // is the same at every point; the solver must not rely on the
        // sample wrapping around.
        let s = StochasticMatrix::from_rows(&[&[0.5, 0.5], &[0.25, 0.75]]).unwrap();
        let spec = CocycleSpec::constant(BaseSystem::golden_rotation(), s).unwrap();
        let x = BasePoint::Circle(0.2);
        let orbit = spec.base().orbit(&x, 20).unwrap();
        let spaces = vec![Subspace::full(1); 20];
        let n2 = SubspaceField::new(&spec, orbit, spaces).unwrap();
        let sig = solve_sigma(&spec, &n2, 1).unwrap();
        for i in 0..20 {
            assert_abs_diff_eq!(sig.scalar_at(i).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        }
        assert!(sig.residual <= 1e-12);
    }

    #[test]
    fn lift_three_block_spec() {
        // Normal part diag(1/4, 1/16) and non-uniform column means: the
        // mixed part is nonzero, so the graph map is nontrivial.
        let s = three_by_three_with_normal_diag(0.25, 0.0625, &[0.5, 0.3, 0.2]);
        let spec = CocycleSpec::constant(BaseSystem::cycle(1), s).unwrap();
        let e1 = Subspace::line(&DVector::from_column_slice(&[1.0, 0.0])).unwrap();
        let e2 = Subspace::line(&DVector::from_column_slice(&[0.0, 1.0])).unwrap();
        let nfield = SplittingField::constant(
            &spec,
            &BasePoint::Cycle(0),
            1,
            Splitting::pair(e1, e2).unwrap(),
        )
        .unwrap();
        let (field, cert) = lift_splitting(&spec, &nfield, 1).unwrap();
        assert!(cert.is_valid());
        assert_eq!(cert.splitting.dims(), vec![2, 1]);
        // The certified iterate count comes from the measured constant:
        // sigma = -p / (1 - 1/16) with p the mixed coefficient on the
        // second normal direction.
        let proj = ProjectionPair::new(3);
        let p_row = proj.u().transpose() * spec.value_at(&BasePoint::Cycle(0)).unwrap().entries()
            * proj.n_basis();
        let sigma_expected = -p_row[1] / (1.0 - 0.0625);
        let c_expected = (1.0 + sigma_expected * sigma_expected).sqrt();
        let k_expected = ((4.0 * c_expected).log2().ceil()) as usize;
        assert_eq!(cert.m, k_expected);
        assert!(field.invariance_residual(&spec).unwrap() <= 1e-10);

        // Image check: the cocycle maps each fast fiber onto the next.
        let fast = &field.splittings()[0].components()[1];
        let image = spec.value_at(&BasePoint::Cycle(0)).unwrap().entries() * fast.basis();
        let defect = operator_norm(
            &(&image - fast.basis() * (fast.basis().transpose() * &image)),
        );
        assert!(defect <= 1e-10, "fast bundle not invariant: {defect:.3e}");
    }

    #[test]
    fn lift_over_a_two_point_cycle() {
        // Same normal diagonal at both points but different column means:
        // the graph map genuinely varies along the orbit.
        let sa = three_by_three_with_normal_diag(0.25, 0.0625, &[0.5, 0.3, 0.2]);
        let sb = three_by_three_with_normal_diag(0.25, 0.0625, &[0.2, 0.45, 0.35]);
        let spec = CocycleSpec::new(
            BaseSystem::cycle(2),
            Generator::Tabulated { matrices: vec![sa, sb] },
        )
        .unwrap();
        let e1 = Subspace::line(&DVector::from_column_slice(&[1.0, 0.0])).unwrap();
        let e2 = Subspace::line(&DVector::from_column_slice(&[0.0, 1.0])).unwrap();
        let nfield = SplittingField::constant(
            &spec,
            &BasePoint::Cycle(0),
            2,
            Splitting::pair(e1, e2).unwrap(),
        )
        .unwrap();
        let (field, cert) = lift_splitting(&spec, &nfield, 1).unwrap();
        assert!(cert.is_valid());
        assert_eq!(cert.per_point_ratios.len(), 2);
        assert!(field.invariance_residual(&spec).unwrap() <= 1e-10);
        // The two graph lines differ (the mixed parts differ).
        let f0 = &field.splittings()[0].components()[1];
        let f1 = &field.splittings()[1].components()[1];
        let overlap = (f0.basis().transpose() * f1.basis())[(0, 0)].abs();
        assert!(overlap < 1.0 - 1e-6, "graphs coincide unexpectedly");
    }

    #[test]
    fn lift_rejects_degenerate_normal_splittings() {
        let spec = constant_spec(&[&[0.75, 0.25], &[0.25, 0.75]]);
        // n = 2 leaves no room for two positive-dimensional normal blocks.
        assert!(Splitting::pair(Subspace::full(0), Subspace::full(1)).is_err());
        // And a one-block normal splitting is pointed at contracting_case.
        let whole = Splitting::new(vec![Subspace::full(1)]).unwrap();
        let nfield =
            SplittingField::constant(&spec, &BasePoint::Cycle(0), 1, whole).unwrap();
        assert!(matches!(
            lift_splitting(&spec, &nfield, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn contracting_case_worked_examples() {
        // Symmetric chain: slow line u, fast line (1, -1), certificate at
        // m = 1 with ratio 1/2.
        let sym = constant_spec(&[&[0.75, 0.25], &[0.25, 0.75]]);
        let (field, cert) = contracting_case(&sym, &BasePoint::Cycle(0), 1).unwrap();
        assert_eq!(cert.m, 1);
        assert_abs_diff_eq!(cert.worst_ratio, 0.5, epsilon = 1e-12);
        let fast = &field.splittings()[0].components()[1];
        let anti = DVector::from_column_slice(&[1.0, -1.0]);
        assert!(crate::linalg::angle(&anti, fast).unwrap() < 1e-10);

        // Flat chain: the whole zero-sum plane dies in one step.
        let flat = CocycleSpec::constant(BaseSystem::cycle(1), StochasticMatrix::uniform(3))
            .unwrap();
        let (field_f, cert_f) = contracting_case(&flat, &BasePoint::Cycle(0), 1).unwrap();
        assert_eq!(cert_f.m, 1);
        assert_abs_diff_eq!(cert_f.worst_ratio, 0.0, epsilon = 1e-14);
        assert_eq!(field_f.splittings()[0].dims(), vec![1, 2]);

        // Asymmetric chain: the fast line is the slow eigenvector (2, -1).
        let asym = constant_spec(&[&[0.5, 0.5], &[0.25, 0.75]]);
        let (field_a, _cert_a) = contracting_case(&asym, &BasePoint::Cycle(0), 1).unwrap();
        let fast_a = &field_a.splittings()[0].components()[1];
        let target = DVector::from_column_slice(&[2.0, -1.0]);
        assert!(crate::linalg::angle(&target, fast_a).unwrap() < 1e-10);
    }

    #[test]
    fn contracting_case_matches_periodic_exponents() {
        // The fast bundle agrees with the negative-rate directions of the
        // exact periodic computation, and its rates sit below the measured
        // one-step bound.
        let asym = constant_spec(&[&[0.5, 0.5], &[0.25, 0.75]]);
        let (field, _) = contracting_case(&asym, &BasePoint::Cycle(0), 1).unwrap();
        let (report, estimate) = lyapunov_periodic(&asym, &BasePoint::Cycle(0)).unwrap();
        let proj = ProjectionPair::new(2);
        let sup_log = proj
            .normal_part(&asym.value_at(&BasePoint::Cycle(0)).unwrap())
            .unwrap()
            .norm()
            .ln();
        let fast = &field.splittings()[0].components()[1];
        for (e, sub) in report.exponents.iter().zip(&estimate.subspaces) {
            if e.value < -1e-9 {
                assert!(e.value <= sup_log + 1e-9, "rate {} above bound {sup_log}", e.value);
                let overlap = (fast.basis().transpose() * sub.basis()).norm();
                assert!(
                    (overlap - 1.0).abs() < 1e-6,
                    "fast bundle misses the negative-rate direction"
                );
            }
        }

        // A normal block with spectral norm above one is refused and the
        // caller pointed elsewhere.
        let hostile = constant_spec(&[&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert!(matches!(
            contracting_case(&hostile, &BasePoint::Cycle(0), 1),
            Err(Error::NoContraction { .. })
        ));
    }

    #[test]
    fn certified_splittings_separate_exponents() {
        // Iterating the ratio inequality separates rates by at least
        // (log 2) / m.
        let cases: Vec<(CocycleSpec, SplittingField, usize)> = {
            let sym = constant_spec(&[&[0.75, 0.25], &[0.25, 0.75]]);
            let field =
                SplittingField::constant(&sym, &BasePoint::Cycle(0), 1, two_block_n2()).unwrap();

            let s3 = three_by_three_with_normal_diag(0.5, 0.125, &[1.0 / 3.0; 3]);
            let spec3 = CocycleSpec::constant(BaseSystem::cycle(1), s3).unwrap();
            let proj = ProjectionPair::new(3);
            let split3 = Splitting::new(vec![
                Subspace::line(proj.u()).unwrap(),
                Subspace::line(&proj.n_basis().column(0).into_owned()).unwrap(),
                Subspace::line(&proj.n_basis().column(1).into_owned()).unwrap(),
            ])
            .unwrap();
            let field3 =
                SplittingField::constant(&spec3, &BasePoint::Cycle(0), 1, split3).unwrap();
            vec![(sym, field, 8), (spec3, field3, 8)]
        };
        for (spec, field, m_max) in cases {
            let cert = certify_domination(&spec, &field, m_max).unwrap();
            let (report, estimate) = lyapunov_periodic(&spec, &BasePoint::Cycle(0)).unwrap();
            // Assign each exponent to the splitting component containing
            // its subspace, then check consecutive component extremes.
            let splitting = &field.splittings()[0];
            let mut per_block: Vec<Vec<f64>> = vec![Vec::new(); splitting.blocks()];
            for (e, sub) in report.exponents.iter().zip(&estimate.subspaces) {
                for (b, comp) in splitting.components().iter().enumerate() {
                    if splitting.ambient_dim() == spec.n() && comp.containment_defect(sub) < 1e-8
                    {
                        per_block[b].push(e.value);
                    }
                }
            }
            let sep = (2.0f64).ln() / cert.m as f64 - 1e-8;
            for w in per_block.windows(2) {
                if w[0].is_empty() || w[1].is_empty() {
                    continue;
                }
                let slow_min = w[0].iter().copied().fold(f64::INFINITY, f64::min);
                let fast_max = w[1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    slow_min - fast_max >= sep,
                    "separation {} below {sep}",
                    slow_min - fast_max
                );
            }
        }
    }

    #[test]
    fn splitting_validation() {
        // Dimensions must fill the ambient space.
        let u_line = Subspace::line(&DVector::from_column_slice(&[1.0, 1.0, 1.0])).unwrap();
        assert!(Splitting::new(vec![u_line.clone()]).is_err());
        // Nearly parallel components are refused by the direct-sum fold.
        let almost = Subspace::line(&DVector::from_column_slice(&[1.0, 1.0, 1.0 + 1e-14]))
            .unwrap();
        let third = Subspace::line(&DVector::from_column_slice(&[1.0, -1.0, 0.0])).unwrap();
        assert!(Splitting::new(vec![u_line, almost, third]).is_err());
    }
}
