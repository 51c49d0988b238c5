//! Assembly of a base system and a matrix generator into an iterable
//! cocycle.
//!
//! The `k`-step product along an orbit is `S(k, x) = S_{f^{k-1}(x)} ... S_x`,
//! and its normal part factors through the zero-sum hyperplane: composing
//! one-step normal parts reproduces `Q S(k, x) Q`. Products here are plain
//! accumulations with no re-orthogonalization; stabilized long-orbit
//! iteration lives in the Lyapunov module.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, BaseSystem};
use crate::error::{Error, Result};
use crate::linalg::{NormalOperator, ProjectionPair, StochasticMatrix};

/// An interpolation anchor: a scalar coordinate with its matrix value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub t: f64,
    pub matrix: StochasticMatrix,
}

/// A deterministic map from base points to stochastic matrices.
///
/// Families are evaluated through the point's scalar coordinate in
/// `[0, 1)` (see [`BasePoint::scalar_coordinate`]); tabulated generators
/// index the finite cycle directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Generator {
    /// One matrix everywhere.
    Constant { matrix: StochasticMatrix },
    /// One matrix per cycle position; requires a cycle base of equal
    /// period.
    Tabulated { matrices: Vec<StochasticMatrix> },
    /// Piecewise constant on half-open cells `[cuts[j], cuts[j+1])` with
    /// `cuts[0] = 0`; the last cell wraps to 1.
    LocallyConstant { cuts: Vec<f64>, matrices: Vec<StochasticMatrix> },
    /// Convex interpolation between anchors, wrapping around the circle;
    /// stochasticity is preserved because the simplex is convex.
    Interpolated { anchors: Vec<Anchor> },
}

impl Generator {
    fn dimension(&self) -> Option<usize> {
        match self {
            Generator::Constant { matrix } => Some(matrix.n()),
            Generator::Tabulated { matrices } | Generator::LocallyConstant { matrices, .. } => {
                matrices.first().map(|m| m.n())
            }
            Generator::Interpolated { anchors } => anchors.first().map(|a| a.matrix.n()),
        }
    }

    /// Apply a matrix map to every generator value, preserving the shape.
    /// For interpolated generators the map is applied to the anchors, which
    /// agrees with mapping pointwise values whenever the map is affine.
    pub fn map_matrices<F>(&self, mut f: F) -> Result<Generator>
    where
        F: FnMut(&StochasticMatrix) -> Result<StochasticMatrix>,
    {
        Ok(match self {
            Generator::Constant { matrix } => Generator::Constant { matrix: f(matrix)? },
            Generator::Tabulated { matrices } => Generator::Tabulated {
                matrices: matrices.iter().map(&mut f).collect::<Result<Vec<_>>>()?,
            },
            Generator::LocallyConstant { cuts, matrices } => Generator::LocallyConstant {
                cuts: cuts.clone(),
                matrices: matrices.iter().map(&mut f).collect::<Result<Vec<_>>>()?,
            },
            Generator::Interpolated { anchors } => Generator::Interpolated {
                anchors: anchors
                    .iter()
                    .map(|a| Ok(Anchor { t: a.t, matrix: f(&a.matrix)? }))
                    .collect::<Result<Vec<_>>>()?,
            },
        })
    }
}

/// A base system together with a generator: the full cocycle description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleSpec {
    base: BaseSystem,
    generator: Generator,
}

impl CocycleSpec {
    /// Validate and assemble. Checks the base system, uniform matrix
    /// dimensions, cycle/tabulation length agreement, and cut/anchor
    /// orderings.
    pub fn new(base: BaseSystem, generator: Generator) -> Result<Self> {
        base.validate()?;
        let n = generator
            .dimension()
            .ok_or_else(|| Error::InvalidInput("generator has no matrices".into()))?;
        let check_dims = |mats: &[StochasticMatrix]| -> Result<()> {
            for m in mats {
                if m.n() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "generator mixes {}x{} with {n}x{n}",
                        m.n(),
                        m.n()
                    )));
                }
            }
            Ok(())
        };
        match &generator {
            Generator::Constant { .. } => {}
            Generator::Tabulated { matrices } => {
                check_dims(matrices)?;
                match base.period() {
                    Some(q) if q == matrices.len() => {}
                    Some(q) => {
                        return Err(Error::InvalidInput(format!(
                            "tabulated generator has {} matrices for a cycle of period {q}",
                            matrices.len()
                        )));
                    }
                    None => {
                        return Err(Error::InvalidInput(
                            "tabulated generator requires a cycle base".into(),
                        ));
                    }
                }
            }
            Generator::LocallyConstant { cuts, matrices } => {
                check_dims(matrices)?;
                if cuts.len() != matrices.len() || cuts.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "{} cuts for {} matrices",
                        cuts.len(),
                        matrices.len()
                    )));
                }
                if cuts[0] != 0.0 {
                    return Err(Error::InvalidInput("first cut must be 0".into()));
                }
                if cuts.windows(2).any(|w| w[0] >= w[1]) || *cuts.last().unwrap() >= 1.0 {
                    return Err(Error::InvalidInput(
                        "cuts must be strictly increasing within [0,1)".into(),
                    ));
                }
            }
            Generator::Interpolated { anchors } => {
                check_dims(&anchors.iter().map(|a| a.matrix.clone()).collect::<Vec<_>>())?;
                if anchors.is_empty() {
                    return Err(Error::InvalidInput("no anchors".into()));
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
        Ok(Self { base, generator })
    }

    /// Constant generator over the given base.
    pub fn constant(base: BaseSystem, matrix: StochasticMatrix) -> Result<Self> {
        Self::new(base, Generator::Constant { matrix })
    }

    /// Matrix dimension `n`.
    pub fn n(&self) -> usize {
        self.generator.dimension().expect("validated at construction")
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// The generator value `S_x`.
    pub fn value_at(&self, x: &BasePoint) -> Result<StochasticMatrix> {
        self.base.validate_point(x)?;
        match (&self.generator, x) {
            (Generator::Constant { matrix }, _) => Ok(matrix.clone()),
            (Generator::Tabulated { matrices }, BasePoint::Cycle(i)) => Ok(matrices[*i].clone()),
            (Generator::Tabulated { .. }, _) => {
                Err(Error::InvalidInput("tabulated generator off a cycle".into()))
            }
            (Generator::LocallyConstant { cuts, matrices }, _) => {
                let t = x.scalar_coordinate(&self.base);
                // Last cell whose left endpoint is <= t: cells are
                // half-open so the value at a breakpoint is single-valued.
                let idx = match cuts.binary_search_by(|c| c.partial_cmp(&t).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i - 1,
                };
                Ok(matrices[idx].clone())
            }
            (Generator::Interpolated { anchors }, _) => {
                let t = x.scalar_coordinate(&self.base);
                if anchors.len() == 1 {
                    return Ok(anchors[0].matrix.clone());
                }
                // Bracket t between consecutive anchors, wrapping the last
                // interval around to the first anchor plus one turn.
                let (left, right, span, offset) = match anchors
                    .iter()
                    .position(|a| a.t > t)
                {
                    Some(0) | None => {
                        let last = anchors.len() - 1;
                        let span = anchors[0].t + 1.0 - anchors[last].t;
                        let offset =
                            if t >= anchors[last].t { t - anchors[last].t } else { t + 1.0 - anchors[last].t };
                        (last, 0, span, offset)
                    }
                    Some(i) => (i - 1, i, anchors[i].t - anchors[i - 1].t, t - anchors[i - 1].t),
                };
                let w = offset / span;
                let m = anchors[left].matrix.entries() * (1.0 - w)
                    + anchors[right].matrix.entries() * w;
                StochasticMatrix::with_tolerance(m, 1e-12)
            }
        }
    }

    /// Generator values along the forward orbit of length `k`.
    pub fn generators_along(&self, x: &BasePoint, k: usize) -> Result<Vec<StochasticMatrix>> {
        let mut out = Vec::with_capacity(k);
        let mut cur = *x;
        for step in 0..k {
            out.push(self.value_at(&cur)?);
            if step + 1 < k {
                cur = self.base.step(&cur)?;
            }
        }
        Ok(out)
    }

    /// The `k`-step product `S_{f^{k-1}(x)} ... S_x`; the identity for
    /// `k = 0`.
    pub fn iterate(&self, x: &BasePoint, k: usize) -> Result<StochasticMatrix> {
        self.base.validate_point(x)?;
        let mut acc = StochasticMatrix::identity(self.n());
        let mut cur = *x;
        for _ in 0..k {
            acc = &self.value_at(&cur)? * &acc;
            cur = self.base.step(&cur)?;
        }
        Ok(acc)
    }

    /// The `k`-step normal product: one-step normal parts composed along
    /// the orbit. Equals the normal part of [`CocycleSpec::iterate`].
    pub fn iterate_normal(
        &self,
        p: &ProjectionPair,
        x: &BasePoint,
        k: usize,
    ) -> Result<NormalOperator> {
        if p.n() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "projections for n = {}, cocycle has n = {}",
                p.n(),
                self.n()
            )));
        }
        self.base.validate_point(x)?;
        let mut acc = NormalOperator::identity(self.n() - 1);
        let mut cur = *x;
        for _ in 0..k {
            let step = p.normal_part(&self.value_at(&cur)?)?;
            acc = step.compose(&acc);
            cur = self.base.step(&cur)?;
        }
        Ok(acc)
    }

    /// The three-term decomposition of the `k`-step product: the rank-one
    /// projection, the mixed part `P S(k,x) Q`, and the composed normal
    /// part brought back to ambient coordinates. The three matrices sum to
    /// `S(k, x)`.
    pub fn decompose(
        &self,
        p: &ProjectionPair,
        x: &BasePoint,
        k: usize,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let full = self.iterate(x, k)?;
        let normal = self.iterate_normal(p, x, k)?;
        let p_part = p.p().clone();
        let mixed = p.p() * full.entries() * p.q();
        let normal_ambient = p.n_basis() * normal.matrix() * p.n_basis().transpose();
        Ok((p_part, mixed, normal_ambient))
    }
}
