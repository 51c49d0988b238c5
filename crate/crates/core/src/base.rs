//! Ergodic base systems driving a cocycle: circle rotations, hyperbolic
//! torus automorphisms, and finite cycles.
//!
//! All three variants are invertible, so backward orbits (needed by the
//! transfer-operator pipeline) are exact. Finite cycles are the exactness
//! workhorse: on a periodic orbit the asymptotic theory reduces to
//! eigen-analysis of one matrix product.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractional part mapped into `[0, 1)`.
fn wrap01(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Distance on the circle `R/Z`.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 1.0;
    d.min(1.0 - d)
}

/// An invertible, ergodic driver for the base dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaseSystem {
    /// Rotation `t -> t + alpha (mod 1)` on the circle; ergodic for
    /// irrational `alpha`.
    Rotation { alpha: f64 },
    /// Automorphism of the 2-torus given by an integer matrix with
    /// determinant `+-1`.
    Torus { matrix: [[i64; 2]; 2] },
    /// The single cycle `i -> i + 1 (mod q)` on `{0, ..., q-1}`; `reverse`
    /// flips the direction (used for inverse systems).
    Cycle {
        q: usize,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        reverse: bool,
    },
}

/// A point of the state space of some [`BaseSystem`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasePoint {
    Circle(f64),
    Torus(f64, f64),
    Cycle(usize),
}

impl BasePoint {
    /// A scalar coordinate in `[0, 1)` used to evaluate generator
    /// families: the circle point itself, the first torus coordinate, or
    /// `i/q` on a cycle.
    pub fn scalar_coordinate(&self, sys: &BaseSystem) -> f64 {
        match (self, sys) {
            (BasePoint::Circle(t), _) => *t,
            (BasePoint::Torus(a, _), _) => *a,
            (BasePoint::Cycle(i), BaseSystem::Cycle { q, .. }) => *i as f64 / *q as f64,
            (BasePoint::Cycle(i), _) => *i as f64,
        }
    }
}

fn det2(m: &[[i64; 2]; 2]) -> i64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

impl BaseSystem {
    /// Rotation by the fractional part of the golden ratio, the default
    /// irrational angle.
    pub fn golden_rotation() -> Self {
        BaseSystem::Rotation { alpha: (5.0_f64.sqrt() - 1.0) / 2.0 }
    }

    /// Forward cycle of period `q >= 1`.
    pub fn cycle(q: usize) -> Self {
        BaseSystem::Cycle { q, reverse: false }
    }

    /// Validate structural invariants (unimodular torus matrix, positive
    /// cycle length, angle in `[0,1)`).
    pub fn validate(&self) -> Result<()> {
        match self {
            BaseSystem::Rotation { alpha } => {
                if !alpha.is_finite() || !(0.0..1.0).contains(alpha) {
                    return Err(Error::InvalidInput(format!(
                        "rotation angle {alpha} outside [0,1)"
                    )));
                }
            }
            BaseSystem::Torus { matrix } => {
                let d = det2(matrix);
                if d.abs() != 1 {
                    return Err(Error::InvalidInput(format!(
                        "torus matrix determinant {d}, need +-1"
                    )));
                }
            }
            BaseSystem::Cycle { q, .. } => {
                if *q == 0 {
                    return Err(Error::InvalidInput("cycle period must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Check that a point belongs to this system's state space.
    pub fn validate_point(&self, x: &BasePoint) -> Result<()> {
        let ok = match (self, x) {
            (BaseSystem::Rotation { .. }, BasePoint::Circle(t)) => {
                t.is_finite() && (0.0..1.0).contains(t)
            }
            (BaseSystem::Torus { .. }, BasePoint::Torus(a, b)) => {
                a.is_finite() && b.is_finite() && (0.0..1.0).contains(a) && (0.0..1.0).contains(b)
            }
            (BaseSystem::Cycle { q, .. }, BasePoint::Cycle(i)) => i < q,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("point {x:?} invalid for base {self:?}")))
        }
    }

    /// One forward step `f(x)`.
    pub fn step(&self, x: &BasePoint) -> Result<BasePoint> {
        self.validate_point(x)?;
        Ok(match (self, x) {
            (BaseSystem::Rotation { alpha }, BasePoint::Circle(t)) => {
                BasePoint::Circle(wrap01(t + alpha))
            }
            (BaseSystem::Torus { matrix: m }, BasePoint::Torus(a, b)) => BasePoint::Torus(
                wrap01(m[0][0] as f64 * a + m[0][1] as f64 * b),
                wrap01(m[1][0] as f64 * a + m[1][1] as f64 * b),
            ),
            (BaseSystem::Cycle { q, reverse }, BasePoint::Cycle(i)) => {
                BasePoint::Cycle(if *reverse { (i + q - 1) % q } else { (i + 1) % q })
            }
            _ => unreachable!("validated above"),
        })
    }

    /// The inverse automorphism as a new system.
    pub fn inverse(&self) -> Result<BaseSystem> {
        self.validate()?;
        Ok(match self {
            BaseSystem::Rotation { alpha } => BaseSystem::Rotation { alpha: wrap01(1.0 - alpha) },
            BaseSystem::Torus { matrix: m } => {
                let d = det2(m); // +-1, so 1/d = d and the adjugate stays integer
                BaseSystem::Torus {
                    matrix: [[d * m[1][1], -d * m[0][1]], [-d * m[1][0], d * m[0][0]]],
                }
            }
            BaseSystem::Cycle { q, reverse } => BaseSystem::Cycle { q: *q, reverse: !reverse },
        })
    }

    /// Period when the system is a finite cycle.
    pub fn period(&self) -> Option<usize> {
        match self {
            BaseSystem::Cycle { q, .. } => Some(*q),
            _ => None,
        }
    }

    /// Forward orbit `x, f(x), ..., f^{L-1}(x)`.
    pub fn orbit(&self, x: &BasePoint, len: usize) -> Result<OrbitSegment> {
        if len == 0 {
            return Err(Error::InvalidInput("orbit length must be >= 1".into()));
        }
        self.validate()?;
        self.validate_point(x)?;
        let mut points = Vec::with_capacity(len);
        let mut cur = *x;
        points.push(cur);
        for _ in 1..len {
            cur = self.step(&cur)?;
            points.push(cur);
        }
        Ok(OrbitSegment { points })
    }

    /// Draw `count` i.i.d. points from the invariant measure: Haar on the
    /// circle/torus, uniform on `{0, ..., q-1}`.
    pub fn sample_mu(&self, rng: &mut crate::Rng, count: usize) -> Result<Vec<BasePoint>> {
        if count == 0 {
            return Err(Error::InvalidInput("sample count must be >= 1".into()));
        }
        self.validate()?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(match self {
                BaseSystem::Rotation { .. } => BasePoint::Circle(rng.random::<f64>()),
                BaseSystem::Torus { .. } => {
                    BasePoint::Torus(rng.random::<f64>(), rng.random::<f64>())
                }
                BaseSystem::Cycle { q, .. } => BasePoint::Cycle(rng.random_range(0..*q)),
            });
        }
        Ok(out)
    }

    /// A canonical starting point: 0 on the circle/cycle, the origin on
    /// the torus.
    pub fn origin(&self) -> BasePoint {
        match self {
            BaseSystem::Rotation { .. } => BasePoint::Circle(0.0),
            BaseSystem::Torus { .. } => BasePoint::Torus(0.0, 0.0),
            BaseSystem::Cycle { .. } => BasePoint::Cycle(0),
        }
    }
}

/// A finite stretch of forward orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitSegment {
    points: Vec<BasePoint>,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn origin(&self) -> &BasePoint {
        &self.points[0]
    }

    pub fn points(&self) -> &[BasePoint] {
        &self.points
    }
}
