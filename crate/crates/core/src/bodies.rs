//! Convex bodies presented by generator points of their polar.
//!
//! For a body `B` with polar `C`, the Minkowski functional is
//! `||x|| = max_{f in C} f(x)`, so a finite generator set for `C` is all the
//! construction needs. Symmetric bodies list one generator per antipodal pair.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of generators a built-in constructor may emit.
pub const DEFAULT_GENERATOR_CAP: usize = 1 << 20;

const RANK_TOL: f64 = 1e-10;
const INTERIOR_TOL: f64 = 1e-9;
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BodyKind {
    SymmetricPolytope,
    NonsymmetricPolytope,
    SampledSmooth,
}

impl BodyKind {
    /// Whether antipodes of the generators are implied.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, BodyKind::NonsymmetricPolytope)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingInfo {
    pub source: String,
    pub p: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub d: usize,
    pub kind: BodyKind,
    pub generators: Vec<Vec<f64>>,
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingInfo>,
}

impl BodySpec {
    pub fn is_symmetric(&self) -> bool {
        self.kind.is_symmetric()
    }

    /// Minkowski functional of the generator polytope: `max_f f.x`, over
    /// `+-f` when the body is symmetric.
    pub fn exact_norm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::ShapeMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let sym = self.is_symmetric();
        let best = self
            .generators
            .iter()
            .map(|f| {
                let v: f64 = f.iter().zip(x).map(|(a, b)| a * b).sum();
                if sym {
                    v.abs()
                } else {
                    v
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(best)
    }

    /// Re-checks every structural invariant. Called by all constructors and
    /// when loading a body from disk.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidBody("dimension must be positive".into()));
        }
        if self.generators.is_empty() {
            return Err(Error::InvalidBody("no generators".into()));
        }
        for (i, g) in self.generators.iter().enumerate() {
            if g.len() != self.d {
                return Err(Error::InvalidBody(format!(
                    "generator {i} has length {} (expected {})",
                    g.len(),
                    self.d
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidBody(format!("generator {i} is not finite")));
            }
            if g.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidBody(format!("generator {i} is the zero vector")));
            }
        }
        if numeric_rank(&self.generators, self.d) < self.d {
            return Err(Error::InvalidBody(format!(
                "generators do not span R^{}",
                self.d
            )));
        }
        if !self.is_symmetric() && !origin_is_interior(&self.generators)? {
            return Err(Error::InvalidBody(
                "origin is not interior to the convex hull of the generators".into(),
            ));
        }
        Ok(())
    }
}

/// Polar of the l1 ball: the cube, one vertex per antipodal pair.
pub fn make_l1(d: usize) -> Result<BodySpec> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be positive".into()));
    }
    let count = 1usize
        .checked_shl((d - 1) as u32)
        .filter(|&c| c <= DEFAULT_GENERATOR_CAP && d <= 64)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "l1 in d={d} needs 2^{} generators, above the cap {DEFAULT_GENERATOR_CAP}",
                d - 1
            ))
        })?;
    let generators = (0..count)
        .map(|mask| {
            let mut g = vec![1.0; d];
            for (j, slot) in g.iter_mut().enumerate().skip(1) {
                // bit (d-1-j) so that the last coordinate flips fastest
                if mask >> (d - 1 - j) & 1 == 1 {
                    *slot = -1.0;
                }
            }
            g
        })
        .collect();
    Ok(BodySpec {
        d,
        kind: BodyKind::SymmetricPolytope,
        generators,
        label: format!("l1-d{d}"),
        sampling: None,
    })
}

/// Polar of the l-infinity ball: the cross-polytope.
pub fn make_linf(d: usize) -> Result<BodySpec> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be positive".into()));
    }
    let generators = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        })
        .collect();
    Ok(BodySpec {
        d,
        kind: BodyKind::SymmetricPolytope,
        generators,
        label: format!("linf-d{d}"),
        sampling: None,
    })
}

/// Inner polytope approximation of the l_p norm: `m` points on the unit sphere
/// of the dual l_q norm (`1/p + 1/q = 1`), always including the axes.
///
/// The remaining points are the functionals attaining the norm at primal
/// directions stratified over a half sphere (antipodes are implied), with
/// random jitter inside each stratum: equal angular slices in d = 2, a
/// Fibonacci lattice in d = 3. Higher dimensions use Gaussian directions.
pub fn make_lp_sampled(d: usize, p: f64, m: usize, seed: u64) -> Result<BodySpec> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be positive".into()));
    }
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!("p must be > 1 (got {p})")));
    }
    if m < d {
        return Err(Error::InvalidArgument(format!(
            "need at least d={d} samples (got {m})"
        )));
    }
    if m > DEFAULT_GENERATOR_CAP {
        return Err(Error::InvalidArgument(format!(
            "{m} samples exceeds the cap {DEFAULT_GENERATOR_CAP}"
        )));
    }
    let q = p / (p - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generators: Vec<Vec<f64>> = make_linf(d)?.generators;
    let extra = m - d;
    let phase = std::f64::consts::TAU * rng.random::<f64>();
    for k in 0..extra {
        let dir: Vec<f64> = if d == 2 {
            let theta = std::f64::consts::PI * (k as f64 + rng.random::<f64>()) / extra as f64;
            vec![theta.cos(), theta.sin()]
        } else if d == 3 {
            // jittered Fibonacci lattice on the upper hemisphere
            let z = (k as f64 + rng.random::<f64>()) / extra as f64;
            let phi = phase + GOLDEN_ANGLE * k as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            vec![rho * phi.cos(), rho * phi.sin(), z]
        } else {
            loop {
                let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                if g.iter().any(|v: &f64| *v != 0.0) {
                    break g;
                }
            }
        };
        // map the primal direction to the functional exposing it: the gradient
        // of the l_p norm, sign(u)|u|^{p-1}
        let grad: Vec<f64> = dir.iter().map(|u| u.signum() * u.abs().powf(p - 1.0)).collect();
        generators.push(normalize_lq(&grad, q));
    }
    let spec = BodySpec {
        d,
        kind: BodyKind::SampledSmooth,
        generators,
        label: format!("l{p}-sampled-d{d}"),
        sampling: Some(SamplingInfo {
            source: "lp".into(),
            p,
            samples: m,
            seed,
        }),
    };
    spec.validate()?;
    Ok(spec)
}

fn normalize_lq(v: &[f64], q: f64) -> Vec<f64> {
    let scale = v.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let norm = scale
        * v.iter()
            .map(|t| (t.abs() / scale).powf(q))
            .sum::<f64>()
            .powf(1.0 / q);
    v.iter().map(|t| t / norm).collect()
}

/// Validated body from explicit polar generators.
pub fn from_polar_vertices(points: Vec<Vec<f64>>, symmetric: bool) -> Result<BodySpec> {
    let d = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidBody("no generators".into()))?;
    let spec = BodySpec {
        d,
        kind: if symmetric {
            BodyKind::SymmetricPolytope
        } else {
            BodyKind::NonsymmetricPolytope
        },
        generators: points,
        label: if symmetric { "symmetric-polytope" } else { "polytope" }.into(),
        sampling: None,
    };
    spec.validate()?;
    Ok(spec)
}

/// Rank of the row set by eigenvalues of its second-moment matrix, relative
/// threshold 1e-10.
pub(crate) fn numeric_rank(rows: &[Vec<f64>], d: usize) -> usize {
    let mut m = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        let v = DVector::from_column_slice(r);
        m.ger(1.0, &v, &v, 1.0);
    }
    let eig = m.symmetric_eigenvalues();
    let top = eig.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    eig.iter().filter(|&&l| l > RANK_TOL * top).count()
}

/// Decides whether the origin is interior to `conv(points)`, assuming the
/// points span the ambient space.
///
/// Minimizes `G(y) = log sum_i exp(p_i . y)` with damped Newton steps. `G` has
/// a minimizer iff the origin is interior; there the softmax weights are a
/// strictly positive convex combination of the points equal to zero. When the
/// origin is outside or on the boundary the iterates escape to infinity and the
/// weight of some point collapses, which the certificate rejects.
pub fn origin_is_interior(points: &[Vec<f64>]) -> Result<bool> {
    let d = points.first().map(Vec::len).unwrap_or(0);
    if d == 0 {
        return Ok(false);
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Ok(false);
    }
    let pts: Vec<DVector<f64>> = points
        .iter()
        .map(|p| DVector::from_iterator(d, p.iter().map(|v| v / scale)))
        .collect();

    // Past this radius the smallest attainable weight is below exp(-2 * 50),
    // far under the certificate threshold.
    const MAX_RADIUS: f64 = 50.0;
    const MAX_ITERS: usize = 500;

    let mut y = DVector::<f64>::zeros(d);
    for _ in 0..MAX_ITERS {
        let (value, grad, hess, weights) = lse_terms(&pts, &y);
        if grad.norm() <= 1e-12 {
            let residual = pts
                .iter()
                .zip(&weights)
                .fold(DVector::zeros(d), |acc: DVector<f64>, (p, w)| acc + p * *w)
                .norm();
            let min_w = weights.iter().cloned().fold(f64::INFINITY, f64::min);
            return Ok(residual <= INTERIOR_TOL && min_w >= INTERIOR_TOL);
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        // backtracking on G
        let mut t = 1.0;
        let slope = grad.dot(&step);
        loop {
            let candidate = &y - &step * t;
            let (cv, ..) = lse_terms(&pts, &candidate);
            if cv <= value - 1e-4 * t * slope || t < 1e-12 {
                y = candidate;
                break;
            }
            t *= 0.5;
        }
        if y.norm() > MAX_RADIUS {
            return Ok(false);
        }
    }
    Ok(false)
}

fn lse_terms(
    pts: &[DVector<f64>],
    y: &DVector<f64>,
) -> (f64, DVector<f64>, DMatrix<f64>, Vec<f64>) {
    let d = y.len();
    let vals: Vec<f64> = pts.iter().map(|p| p.dot(y)).collect();
    let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = vals.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let mut grad = DVector::zeros(d);
    for (p, w) in pts.iter().zip(&weights) {
        grad.axpy(*w, p, 1.0);
    }
    let mut hess = DMatrix::zeros(d, d);
    for (p, w) in pts.iter().zip(&weights) {
        hess.ger(*w, p, p, 1.0);
    }
    hess.ger(-1.0, &grad, &grad, 1.0);
    (top + total.ln(), grad, hess, weights)
}
