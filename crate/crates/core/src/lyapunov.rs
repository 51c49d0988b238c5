//! Lyapunov spectrum estimation and invariant-subspace recovery.
//!
//! Two routes:
//!
//! - **QR orbit method**: push an orthonormal frame through the cocycle,
//!   re-orthonormalize every `stride` steps, and average the log diagonal
//!   of the triangular factors. Works on any base system; converges like a
//!   time average.
//! - **Periodic exact method**: on a finite cycle, growth rates are
//!   exactly `(1/q) log |eigenvalue|` of the period product and the
//!   invariant subspaces are its generalized eigenspaces.
//!
//! Directions whose singular data collapses below an explicit floor are
//! reported as minus infinity rather than as a large negative number:
//! floating point cannot distinguish deep contraction from outright
//! singularity, so the floor is a visible, configurable policy.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::base::{BasePoint, OrbitSegment};
use crate::cocycle::CocycleSpec;
use crate::eig;
use crate::error::{Error, Result};
use crate::linalg::{operator_norm, operator_norm_restricted, ProjectionPair, Subspace};

/// Additive gap (nats per step) under which finite-time exponent
/// estimates are merged into one multiplicity block.
pub const TAU_GAP: f64 = 1e-3;

/// Running averages below this are flagged as minus infinity.
pub const LOG_FLOOR: f64 = -40.0;

/// Per-step triangular diagonal entries at or below this absolute floor
/// mark a direction as collapsed (rank loss), independent of `LOG_FLOOR`.
pub const SING_FLOOR: f64 = 1e-13;

/// Tuning knobs for [`lyapunov_qr`] and [`stable_bundle`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QrOptions {
    pub tau_gap: f64,
    pub log_floor: f64,
    pub sing_floor: f64,
    /// Steps run before log accumulation starts, letting the frame align
    /// with the growth filtration. The initial frame is misaligned by an
    /// O(1) angle whose log is charged once; without a warm-up that bias
    /// decays only like 1/L. `None` selects `min(l/10, 10^4)` rounded down
    /// to whole strides.
    pub warmup: Option<usize>,
}

impl Default for QrOptions {
    fn default() -> Self {
        Self { tau_gap: TAU_GAP, log_floor: LOG_FLOOR, sing_floor: SING_FLOOR, warmup: None }
    }
}

/// One exponent with its multiplicity; `value` may be
/// `f64::NEG_INFINITY`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponent {
    pub value: f64,
    pub multiplicity: usize,
}

impl Exponent {
    pub fn is_minus_infinity(&self) -> bool {
        self.value == f64::NEG_INFINITY
    }
}

/// Serialize non-finite rates as strings (JSON has no infinities).
pub(crate) fn rate_to_json(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::Value::from(v)
    } else if v == f64::NEG_INFINITY {
        serde_json::Value::from("-inf")
    } else if v == f64::INFINITY {
        serde_json::Value::from("inf")
    } else {
        serde_json::Value::from("nan")
    }
}

pub(crate) fn rate_from_json(v: &serde_json::Value) -> Option<f64> {
    match v {
        serde_json::Value::Number(x) => x.as_f64(),
        serde_json::Value::String(s) => match s.as_str() {
            "-inf" => Some(f64::NEG_INFINITY),
            "inf" => Some(f64::INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serde_json::Map::new();
        map.insert("value".into(), rate_to_json(self.value));
        map.insert("multiplicity".into(), serde_json::Value::from(self.multiplicity));
        serde_json::Value::Object(map).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        let value = v
            .get("value")
            .and_then(rate_from_json)
            .ok_or_else(|| D::Error::custom("missing or malformed exponent value"))?;
        let multiplicity = v
            .get("multiplicity")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| D::Error::custom("missing multiplicity"))? as usize;
        Ok(Exponent { value, multiplicity })
    }
}

/// A finite-time convergence checkpoint: per-direction running averages
/// (ungrouped, one per frame column).
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub step: usize,
    pub estimates: Vec<f64>,
}

/// Which algorithm produced a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    QrOrbit { length: usize, stride: usize },
    PeriodicExact { period: usize },
}

/// Estimated spectrum with diagnostics.
#[derive(Clone, Debug)]
pub struct LyapunovReport {
    /// Descending; multiplicities sum to the ambient dimension.
    pub exponents: Vec<Exponent>,
    pub method: Method,
    /// Convergence trace at each re-orthonormalization checkpoint
    /// (empty for the periodic-exact method).
    pub series: Vec<SeriesPoint>,
    /// Set when the estimates had not stabilized at the requested length.
    pub warning: Option<String>,
}

impl LyapunovReport {
    /// Ambient dimension recovered from multiplicities.
    pub fn dimension(&self) -> usize {
        self.exponents.iter().map(|e| e.multiplicity).sum()
    }

    /// Finite exponents in descending order, expanded by multiplicity.
    pub fn expanded_rates(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for e in &self.exponents {
            for _ in 0..e.multiplicity {
                out.push(e.value);
            }
        }
        out
    }
}

/// Invariant subspaces attached to a periodic-orbit report.
#[derive(Clone, Debug)]
pub struct OseledetsEstimate {
    pub point: BasePoint,
    /// One subspace per exponent block, same order as the report.
    pub subspaces: Vec<Subspace>,
    /// Worst invariance defect of each block along the cycle.
    pub residuals: Vec<f64>,
    /// Condition number of the stacked block bases (direct-sum health).
    pub stacked_condition: f64,
}

/// Group descending growth rates into multiplicity blocks using an
/// additive gap; minus-infinity rates form their own final block.
fn group_rates(mut rates: Vec<f64>, tau_gap: f64) -> Vec<Exponent> {
    rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut out: Vec<Exponent> = Vec::new();
    for r in rates {
        match out.last_mut() {
            Some(e)
                if (e.value == f64::NEG_INFINITY && r == f64::NEG_INFINITY)
                    || (e.value.is_finite() && r.is_finite() && e.value - r <= tau_gap) =>
            {
                // Fold into the running mean so the block stays within
                // tau_gap of its representative.
                let k = (e.multiplicity + 1) as f64;
                if e.value.is_finite() {
                    e.value += (r - e.value) / k;
                }
                e.multiplicity += 1;
            }
            _ => out.push(Exponent { value: r, multiplicity: 1 }),
        }
    }
    out
}

/// QR orbit method. `l` is the number of cocycle steps, `stride` the
/// re-orthonormalization interval.
pub fn lyapunov_qr(
    c: &CocycleSpec,
    x: &BasePoint,
    l: usize,
    stride: usize,
    opts: &QrOptions,
) -> Result<LyapunovReport> {
    if stride == 0 || l < stride {
        return Err(Error::InvalidInput(format!("need l >= stride >= 1, got l={l} stride={stride}")));
    }
    let n = c.n();
    let warmup = match opts.warmup {
        Some(w) => w / stride * stride,
        None => (l / 10).min(10_000) / stride * stride,
    };
    if warmup >= l {
        return Err(Error::InvalidInput(format!("warmup {warmup} swallows the whole orbit {l}")));
    }
    let averaged = (l - warmup) as f64;
    let mut frame = DMatrix::<f64>::identity(n, n);
    let mut sums = vec![0.0f64; n];
    let mut dead = vec![false; n];
    let mut series = Vec::new();
    let mut cur = *x;
    let mut since_qr = 0usize;

    for step in 1..=l {
        frame = c.value_at(&cur)?.entries() * frame;
        cur = c.base().step(&cur)?;
        since_qr += 1;
        if since_qr == stride || step == l {
            since_qr = 0;
            let qr = frame.clone().qr();
            let mut q = qr.q();
            let r = qr.r();
            for i in 0..n {
                let mut d = r[(i, i)];
                if d < 0.0 {
                    d = -d;
                    for j in 0..n {
                        q[(j, i)] = -q[(j, i)];
                    }
                }
                if dead[i] {
                    continue;
                }
                if d <= opts.sing_floor {
                    // Rank collapse is terminal: the direction stays dead.
                    dead[i] = true;
                } else if step > warmup {
                    sums[i] += d.ln();
                }
            }
            frame = q;
            if step > warmup {
                let estimates: Vec<f64> = (0..n)
                    .map(|i| {
                        if dead[i] {
                            f64::NEG_INFINITY
                        } else {
                            sums[i] / (step - warmup) as f64
                        }
                    })
                    .collect();
                series.push(SeriesPoint { step, estimates });
            }
        }
    }

    let rates: Vec<f64> = (0..n)
        .map(|i| {
            let r = sums[i] / averaged;
            if dead[i] || r < opts.log_floor {
                f64::NEG_INFINITY
            } else {
                r
            }
        })
        .collect();

    // Stability heuristic: compare against the checkpoint nearest to l/2.
    let warning = series
        .iter()
        .min_by_key(|p| p.step.abs_diff(l / 2))
        .filter(|_| series.len() >= 2)
        .and_then(|half| {
            let drift = half
                .estimates
                .iter()
                .zip(&rates)
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if drift > opts.tau_gap {
                Some(format!(
                    "estimates drifted {drift:.2e} nats/step over the second half; \
                     consider a longer orbit"
                ))
            } else {
                None
            }
        });

    Ok(LyapunovReport {
        exponents: group_rates(rates, opts.tau_gap),
        method: Method::QrOrbit { length: l, stride },
        series,
        warning,
    })
}

/// Exact spectrum and Oseledets blocks on a finite cycle, from the
/// eigen-structure of the period product at `x`.
pub fn lyapunov_periodic(
    c: &CocycleSpec,
    x: &BasePoint,
) -> Result<(LyapunovReport, OseledetsEstimate)> {
    let q = c
        .base()
        .period()
        .ok_or_else(|| Error::InvalidInput("periodic analysis requires a cycle base".into()))?;
    c.base().validate_point(x)?;
    let n = c.n();

    let orbit = c.base().orbit(x, q)?;
    let products: Vec<DMatrix<f64>> = orbit
        .points()
        .iter()
        .map(|p| c.iterate(p, q).map(|m| m.into_inner()))
        .collect::<Result<_>>()?;

    let eigs = eig::complex_eigenvalues(&products[0]);
    let groups = eig::group_by_modulus(&eigs, eig::MODULUS_MERGE_TOL);

    let exponents: Vec<Exponent> = groups
        .iter()
        .map(|g| Exponent {
            value: if g.modulus == 0.0 { f64::NEG_INFINITY } else { g.modulus.ln() / q as f64 },
            multiplicity: g.multiplicity(),
        })
        .collect();

    // One subspace per block at every cycle point (period products at
    // different points are conjugate, so one eigenvalue list serves all),
    // then invariance defects of S_x(block at x) inside (block at f(x)).
    let mut subspaces_here = Vec::with_capacity(groups.len());
    let mut residuals = Vec::with_capacity(groups.len());
    for g in &groups {
        let per_point: Vec<Subspace> = products
            .iter()
            .map(|m| eig::modulus_group_subspace(m, &g.eigenvalues))
            .collect::<Result<_>>()?;
        let mut worst = 0.0f64;
        for i in 0..q {
            let next = &per_point[(i + 1) % q];
            let s_i = c.value_at(&orbit.points()[i])?;
            let image = s_i.entries() * per_point[i].basis();
            let defect = operator_norm(&(&image - next.basis() * (next.basis().transpose() * &image)));
            worst = worst.max(defect);
        }
        residuals.push(worst);
        subspaces_here.push(per_point.into_iter().next().expect("q >= 1"));
    }

    let mut stacked = DMatrix::<f64>::zeros(n, n);
    let mut col = 0;
    for s in &subspaces_here {
        stacked.columns_mut(col, s.dim()).copy_from(s.basis());
        col += s.dim();
    }
    let svd = stacked.svd(false, false);
    let stacked_condition = svd.singular_values.max() / svd.singular_values.min().max(1e-300);

    let report = LyapunovReport {
        exponents,
        method: Method::PeriodicExact { period: q },
        series: Vec::new(),
        warning: None,
    };
    let estimate = OseledetsEstimate {
        point: *x,
        subspaces: subspaces_here,
        residuals,
        stacked_condition,
    };
    Ok((report, estimate))
}

/// Estimate of the bundle of directions growing strictly slower than
/// `lambda_cut`, from the right-singular subspace of the `l`-step product.
///
/// Fails when some finite-time rate sits within `tau_gap` of the cut (no
/// spectral gap) and when no direction lies below the cut.
pub fn stable_bundle(
    c: &CocycleSpec,
    x: &BasePoint,
    l: usize,
    lambda_cut: f64,
    opts: &QrOptions,
) -> Result<Subspace> {
    if l == 0 {
        return Err(Error::InvalidInput("need l >= 1".into()));
    }
    let n = c.n();
    let m = c.iterate(x, l)?.into_inner();
    let svd = m.clone().svd(false, true);
    let rates: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| if s <= 0.0 { f64::NEG_INFINITY } else { s.ln() / l as f64 })
        .collect();
    for r in &rates {
        if r.is_finite() && (r - lambda_cut).abs() < opts.tau_gap {
            return Err(Error::NoSpectralGap(format!(
                "finite-time rate {r:.6} within tau_gap of the cut {lambda_cut:.6}"
            )));
        }
    }
    let dim = rates.iter().filter(|&&r| r < lambda_cut).count();
    if dim == 0 {
        return Err(Error::NoSpectralGap(format!(
            "no direction grows slower than {lambda_cut:.6}; the bundle is trivial"
        )));
    }
    if dim == n {
        return Ok(Subspace::full(n));
    }
    let v_t = svd.v_t.as_ref().expect("requested v_t");
    let mut basis = DMatrix::zeros(n, dim);
    for (col, row_idx) in ((n - dim)..n).enumerate() {
        for i in 0..n {
            basis[(i, col)] = v_t[(row_idx, i)];
        }
    }
    Subspace::from_orthonormal(basis)
}

/// A subspace attached to every point of an orbit segment.
#[derive(Clone, Debug)]
pub struct SubspaceField {
    orbit: OrbitSegment,
    spaces: Vec<Subspace>,
}

impl SubspaceField {
    pub fn new(c: &CocycleSpec, orbit: OrbitSegment, spaces: Vec<Subspace>) -> Result<Self> {
        if orbit.len() != spaces.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} orbit points, {} subspaces",
                orbit.len(),
                spaces.len()
            )));
        }
        // Ambient-dimension n fields pair with the cocycle itself; n - 1
        // fields live in normal coordinates and pair with its normal part.
        if spaces.iter().any(|s| s.ambient_dim() != c.n() && s.ambient_dim() + 1 != c.n()) {
            return Err(Error::DimensionMismatch(
                "subspace ambient dimension matches neither n nor n - 1".into(),
            ));
        }
        Ok(Self { orbit, spaces })
    }

    /// A constant subspace over the orbit of `x` of length `len`.
    pub fn constant(c: &CocycleSpec, x: &BasePoint, len: usize, space: Subspace) -> Result<Self> {
        let orbit = c.base().orbit(x, len)?;
        let spaces = vec![space; orbit.len()];
        Self::new(c, orbit, spaces)
    }

    pub fn orbit(&self) -> &OrbitSegment {
        &self.orbit
    }

    pub fn spaces(&self) -> &[Subspace] {
        &self.spaces
    }

    /// Worst one-step invariance defect `|(I - B' B'^T) S_x B_x|` over
    /// consecutive pairs (wrapping when the orbit covers a full cycle).
    /// Normal-coordinate fields are transported by the normal part of the
    /// step instead of the step itself.
    pub fn invariance_residual(&self, c: &CocycleSpec) -> Result<f64> {
        let len = self.orbit.len();
        let wraps = c.base().period() == Some(len);
        let pairs = if wraps { len } else { len.saturating_sub(1) };
        let normal = self.spaces[0].ambient_dim() + 1 == c.n();
        let proj = ProjectionPair::new(c.n());
        let mut worst = 0.0f64;
        for i in 0..pairs {
            let target = &self.spaces[(i + 1) % len];
            let s = c.value_at(&self.orbit.points()[i])?;
            let op = if normal {
                proj.normal_part(&s)?.matrix().clone()
            } else {
                s.into_inner()
            };
            let image = op * self.spaces[i].basis();
            let defect =
                operator_norm(&(&image - target.basis() * (target.basis().transpose() * &image)));
            worst = worst.max(defect);
        }
        Ok(worst)
    }
}

/// Outcome of the uniform-contraction search.
#[derive(Clone, Debug)]
pub struct ContractionCheck {
    pub contracting: bool,
    /// First iterate count at which the supremum dropped below one.
    pub n_found: Option<usize>,
    /// The supremum of restricted norms at `n_found` (or at `n_max` when
    /// the search failed).
    pub sup_norm: f64,
}

/// Search for the first `k <= n_max` with
/// `sup_x |S(k, x) restricted to V_x| < 1 - 1e-10` over the field's orbit.
pub fn check_uniform_contraction(
    c: &CocycleSpec,
    field: &SubspaceField,
    n_max: usize,
    invariance_tol: f64,
) -> Result<ContractionCheck> {
    if n_max == 0 {
        return Err(Error::InvalidInput("need n_max >= 1".into()));
    }
    if field.spaces().iter().any(|s| s.ambient_dim() != c.n()) {
        return Err(Error::DimensionMismatch(
            "the contraction search restricts the full cocycle; pass ambient subspaces".into(),
        ));
    }
    let residual = field.invariance_residual(c)?;
    if residual > invariance_tol {
        return Err(Error::NotInvariant { residual, tolerance: invariance_tol });
    }
    let mut sup_at_last = f64::INFINITY;
    for k in 1..=n_max {
        let mut sup = 0.0f64;
        for (x, space) in field.orbit().points().iter().zip(field.spaces()) {
            let m = c.iterate(x, k)?;
            sup = sup.max(operator_norm_restricted(m.entries(), space.basis()));
        }
        sup_at_last = sup;
        if sup < 1.0 - 1e-10 {
            return Ok(ContractionCheck { contracting: true, n_found: Some(k), sup_norm: sup });
        }
    }
    Ok(ContractionCheck { contracting: false, n_found: None, sup_norm: sup_at_last })
}
