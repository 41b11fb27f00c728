//! Minimum-volume enclosing (Löwner) ellipsoids of finite point sets.
//!
//! Both variants reduce to the D-optimal design problem: find probability
//! weights `u` maximizing `log det sum_i u_i z_i z_i^T`. The solver is the
//! Fedorov-Wynn / Khachiyan rank-one ascent with Wolfe-Atwood away steps,
//! maintaining the inverse moment matrix by Sherman-Morrison updates and
//! refreshing it from a Cholesky factorization periodically.
//!
//! Point sets that do not span the ambient space are handled by first
//! restricting to their carrier subspace.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-7;
pub const DEFAULT_MAX_UPDATES: usize = 1_000_000;

/// Relative eigenvalue threshold of the second-moment matrix below which a
/// direction is considered flat.
pub const CARRIER_REL_TOL: f64 = 1e-10;

const REFRESH_EVERY: usize = 64;

/// `{center + basis * u : u^T shape^{-1} u <= 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    /// `N x r`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// `r x r`, symmetric positive definite.
    pub shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn dim_ambient(&self) -> usize {
        self.center.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// `h(y) = center . y + sqrt(z^T Q z)` with `z = basis^T y`.
    pub fn support(&self, y: &DVector<f64>) -> f64 {
        let z = self.basis.tr_mul(y);
        let quad = z.dot(&(&self.shape * &z));
        self.center.dot(y) + quad.max(0.0).sqrt()
    }

    /// Support value with the center term dropped.
    pub fn centered_support(&self, y: &DVector<f64>) -> f64 {
        let z = self.basis.tr_mul(y);
        z.dot(&(&self.shape * &z)).max(0.0).sqrt()
    }

    /// Quadratic form `(B^T(u-c))^T Q^{-1} (B^T(u-c))` and the distance of
    /// `u - c` from the carrier subspace, for each point.
    pub fn membership(&self, points: &[DVector<f64>]) -> Result<Vec<(f64, f64)>> {
        if self.rank() == 0 {
            return Ok(points
                .iter()
                .map(|p| (0.0, (p - &self.center).norm()))
                .collect());
        }
        let chol = self
            .shape
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("ellipsoid shape is not positive definite".into()))?;
        Ok(points
            .iter()
            .map(|p| {
                let diff = p - &self.center;
                let z = self.basis.tr_mul(&diff);
                let off = (&diff - &self.basis * &z).norm();
                let s = chol.l().solve_lower_triangular(&z).expect("triangular solve");
                (s.norm_squared(), off)
            })
            .collect())
    }

    /// Scales about the center: the set `center + factor * (E - center)`.
    pub fn scaled(&self, factor: f64) -> Ellipsoid {
        Ellipsoid {
            center: self.center.clone(),
            basis: self.basis.clone(),
            shape: &self.shape * (factor * factor),
        }
    }
}

/// An ellipsoid centered at the origin inscribed in `conv(points) - offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Inscribed {
    pub ellipsoid: Ellipsoid,
    /// The translation `w`; zero for symmetric bodies.
    pub offset: DVector<f64>,
    /// `sqrt(r)` for symmetric sets, `r` otherwise.
    pub containment_factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub eps: f64,
    pub max_updates: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps: DEFAULT_EPS,
            max_updates: DEFAULT_MAX_UPDATES,
        }
    }
}

impl SolverOptions {
    pub fn with_eps(eps: f64) -> Self {
        SolverOptions {
            eps,
            ..Default::default()
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must lie in (0, 1) (got {})",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Löwner ellipsoid of `{+-p : p in points}`, centered at the origin.
pub fn mvee_symmetric(points: &[DVector<f64>], opts: SolverOptions) -> Result<Ellipsoid> {
    opts.check()?;
    let dim = ambient_dim(points)?;
    let basis = carrier_basis(points, dim, None);
    let r = basis.ncols();
    if r == 0 {
        return Err(Error::InvalidArgument(
            "all points are zero; the symmetric hull is a single point".into(),
        ));
    }
    let coords: Vec<DVector<f64>> = points.iter().map(|p| basis.tr_mul(p)).collect();
    let weights = d_optimal_weights(&coords, r, 0.0, opts)?;
    let moment = weighted_moment(&coords, &weights, None);
    Ok(Ellipsoid {
        center: DVector::zeros(dim),
        basis,
        shape: moment * r as f64,
    })
}

/// Löwner ellipsoid of `points` with a free center, via the lift
/// `z -> (z, 1)` to a centered problem one dimension up.
pub fn mvee_general(points: &[DVector<f64>], opts: SolverOptions) -> Result<Ellipsoid> {
    opts.check()?;
    let dim = ambient_dim(points)?;
    let mean = points
        .iter()
        .fold(DVector::zeros(dim), |acc: DVector<f64>, p| acc + p)
        / points.len() as f64;
    let basis = carrier_basis(points, dim, Some(&mean));
    let r = basis.ncols();
    if r == 0 {
        return Ok(Ellipsoid {
            center: mean,
            basis,
            shape: DMatrix::zeros(0, 0),
        });
    }
    let coords: Vec<DVector<f64>> = points.iter().map(|p| basis.tr_mul(&(p - &mean))).collect();
    let lifted: Vec<DVector<f64>> = coords
        .iter()
        .map(|z| DVector::from_iterator(r + 1, z.iter().cloned().chain(std::iter::once(1.0))))
        .collect();
    let weights = d_optimal_weights(&lifted, r, 1.0, opts)?;
    let c = coords
        .iter()
        .zip(&weights)
        .fold(DVector::zeros(r), |acc: DVector<f64>, (z, w)| acc + z * *w);
    let cov = weighted_moment(&coords, &weights, Some(&c));
    Ok(Ellipsoid {
        center: mean + &basis * c,
        basis,
        shape: cov * r as f64,
    })
}

/// Shrinks a Löwner ellipsoid so that it lies inside the hull of the points
/// it encloses: by `1/sqrt(r)` about the origin for symmetric sets, and by
/// `1/r` after translating the center to the origin otherwise.
pub fn inscribed_from_enclosing(enclosing: &Ellipsoid, symmetric: bool) -> Result<Inscribed> {
    let r = enclosing.rank();
    if r == 0 {
        return Err(Error::InvalidArgument(
            "cannot inscribe in a rank-0 ellipsoid".into(),
        ));
    }
    let rf = r as f64;
    let dim = enclosing.dim_ambient();
    if symmetric {
        Ok(Inscribed {
            ellipsoid: Ellipsoid {
                center: DVector::zeros(dim),
                basis: enclosing.basis.clone(),
                shape: &enclosing.shape / rf,
            },
            offset: DVector::zeros(dim),
            containment_factor: rf.sqrt(),
        })
    } else {
        Ok(Inscribed {
            ellipsoid: Ellipsoid {
                center: DVector::zeros(dim),
                basis: enclosing.basis.clone(),
                shape: &enclosing.shape / (rf * rf),
            },
            offset: enclosing.center.clone(),
            containment_factor: rf,
        })
    }
}

fn ambient_dim(points: &[DVector<f64>]) -> Result<usize> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty point set".into()))?;
    let dim = first.len();
    for p in points {
        if p.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite point".into()));
        }
    }
    Ok(dim)
}

/// Orthonormal basis (columns, by decreasing spread) of the span of
/// `points - origin`.
fn carrier_basis(points: &[DVector<f64>], dim: usize, origin: Option<&DVector<f64>>) -> DMatrix<f64> {
    let m = points.len();
    let shifted = |p: &DVector<f64>| match origin {
        Some(o) => p - o,
        None => p.clone(),
    };
    let mut picks: Vec<(f64, DVector<f64>)> = if m < dim {
        let cols: Vec<DVector<f64>> = points.iter().map(shifted).collect();
        let tall = DMatrix::from_columns(&cols);
        let svd = SVD::new(tall, true, false);
        let u = svd.u.expect("left singular vectors requested");
        svd.singular_values
            .iter()
            .enumerate()
            .map(|(k, s)| (s * s, u.column(k).into_owned()))
            .collect()
    } else {
        let mut moment = DMatrix::<f64>::zeros(dim, dim);
        for p in points {
            let v = shifted(p);
            moment.ger(1.0, &v, &v, 1.0);
        }
        let eig = SymmetricEigen::new(moment);
        eig.eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| (*l, eig.eigenvectors.column(k).into_owned()))
            .collect()
    };
    let top = picks.iter().map(|(l, _)| *l).fold(0.0, f64::max);
    picks.retain(|(l, _)| top > 0.0 && *l > CARRIER_REL_TOL * top);
    picks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let cols: Vec<DVector<f64>> = picks
        .into_iter()
        .map(|(_, mut v)| {
            // fix the sign so the largest-magnitude entry is positive
            let (imax, _) = v
                .iter()
                .enumerate()
                .fold((0, 0.0), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
            if v[imax] < 0.0 {
                v.neg_mut();
            }
            v
        })
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn weighted_moment(coords: &[DVector<f64>], weights: &[f64], center: Option<&DVector<f64>>) -> DMatrix<f64> {
    let k = coords[0].len();
    let mut x = DMatrix::<f64>::zeros(k, k);
    for (z, &w) in coords.iter().zip(weights) {
        if w > 0.0 {
            match center {
                Some(c) => {
                    let v = z - c;
                    x.ger(w, &v, &v, 1.0);
                }
                None => x.ger(w, z, z, 1.0),
            }
        }
    }
    // exact symmetry
    let xt = x.transpose();
    (x + xt) * 0.5
}

/// `kappa_i = z_i^T X^{-1} z_i` for all points, plus `log det X`.
fn refresh(coords: &[DVector<f64>], weights: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>, f64)> {
    let x = weighted_moment(coords, weights, None);
    let chol = x.cholesky().ok_or_else(|| Error::NotConverged {
        iterations: 0,
        violation: f64::INFINITY,
    })?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let inv = chol.inverse();
    let kappa = coords.iter().map(|z| z.dot(&(&inv * z))).collect();
    Ok((inv, kappa, logdet))
}

/// D-optimal design weights for `coords` (each of length `k`), run until the
/// membership value `(kappa - offset) / r` is at most `1 + eps` for every
/// point and the log-determinant has stalled.
fn d_optimal_weights(coords: &[DVector<f64>], r: usize, offset: f64, opts: SolverOptions) -> Result<Vec<f64>> {
    let m = coords.len();
    let k = coords[0].len() as f64;
    let rf = r as f64;
    let mut weights = vec![1.0 / m as f64; m];
    let (mut inv, mut kappa, mut logdet) = refresh(coords, &weights)?;
    let violation = |kappa: &[f64]| {
        kappa
            .iter()
            .map(|&v| (v - offset) / rf - 1.0)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut last_change = f64::INFINITY;
    let mut since_refresh = 0usize;

    for iteration in 0..opts.max_updates {
        if violation(&kappa) <= opts.eps && last_change <= opts.eps / 10.0 {
            // confirm on freshly factored quantities before accepting
            let (i2, k2, l2) = refresh(coords, &weights)?;
            inv = i2;
            kappa = k2;
            logdet = l2;
            since_refresh = 0;
            if violation(&kappa) <= opts.eps {
                return Ok(weights);
            }
        }

        let (j, kmax) = kappa
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let support = weights.iter().filter(|&&w| w > 0.0).count();
        let (l, kmin) = kappa
            .iter()
            .zip(&weights)
            .enumerate()
            .filter(|(_, (_, &w))| w > 0.0)
            .fold((0, f64::INFINITY), |(bi, bv), (i, (&v, _))| if v < bv { (i, v) } else { (bi, bv) });

        let toward = kmax / k - 1.0 >= 1.0 - kmin / k || support <= 1;
        let (idx, kap, alpha) = if toward {
            (j, kmax, (kmax - k) / (k * (kmax - 1.0)))
        } else {
            let floor = -weights[l] / (1.0 - weights[l]);
            let a = if kmin > 1.0 {
                ((kmin - k) / (k * (kmin - 1.0))).max(floor)
            } else {
                floor
            };
            (l, kmin, a)
        };
        if !alpha.is_finite() || alpha == 0.0 {
            // nothing left to improve at working precision
            let (_, k2, _) = refresh(coords, &weights)?;
            if violation(&k2) <= opts.eps {
                return Ok(weights);
            }
            return Err(Error::NotConverged {
                iterations: iteration,
                violation: violation(&k2),
            });
        }

        let dropped = !toward && alpha <= -weights[idx] / (1.0 - weights[idx]);
        for w in weights.iter_mut() {
            *w *= 1.0 - alpha;
        }
        weights[idx] += alpha;
        if dropped {
            weights[idx] = 0.0;
        }

        let denom = 1.0 - alpha + alpha * kap;
        let new_logdet = logdet + (k - 1.0) * (1.0 - alpha).ln() + denom.ln();
        last_change = (new_logdet - logdet).abs() / k;
        logdet = new_logdet;

        since_refresh += 1;
        if since_refresh >= REFRESH_EVERY {
            let (i2, k2, l2) = refresh(coords, &weights)?;
            inv = i2;
            kappa = k2;
            logdet = l2;
            since_refresh = 0;
        } else {
            let beta = alpha / denom;
            let g = &inv * &coords[idx];
            inv.ger(-beta, &g, &g, 1.0);
            inv /= 1.0 - alpha;
            for (kv, z) in kappa.iter_mut().zip(coords) {
                let s = z.dot(&g);
                *kv = (*kv - beta * s * s) / (1.0 - alpha);
            }
        }
    }
    let (_, kappa, _) = refresh(coords, &weights)?;
    Err(Error::NotConverged {
        iterations: opts.max_updates,
        violation: violation(&kappa),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn assert_mat_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= tol, "{a} vs {b}");
        }
    }

    /// Full-space shape matrix `B Q B^T`.
    fn dense_shape(e: &Ellipsoid) -> DMatrix<f64> {
        &e.basis * &e.shape * e.basis.transpose()
    }

    #[test]
    fn symmetric_unit_disk() {
        let e = mvee_symmetric(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], SolverOptions::default()).unwrap();
        assert_eq!(e.rank(), 2);
        assert_mat_close(&dense_shape(&e), &DMatrix::identity(2, 2), 1e-9);
    }

    #[test]
    fn symmetric_square_vertices() {
        let e = mvee_symmetric(&[v(&[1.0, 1.0]), v(&[1.0, -1.0])], SolverOptions::default()).unwrap();
        assert_mat_close(&dense_shape(&e), &(DMatrix::identity(2, 2) * 2.0), 1e-9);
    }

    #[test]
    fn symmetric_segment_is_rank_one() {
        let e = mvee_symmetric(&[v(&[2.0, 0.0])], SolverOptions::default()).unwrap();
        assert_eq!(e.rank(), 1);
        assert!((e.basis[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(e.basis[(1, 0)].abs() < 1e-12);
        assert!((e.shape[(0, 0)] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_rejects_zero_set() {
        assert!(mvee_symmetric(&[v(&[0.0, 0.0])], SolverOptions::default()).is_err());
        assert!(mvee_symmetric(&[], SolverOptions::default()).is_err());
        assert!(mvee_symmetric(&[v(&[1.0])], SolverOptions::with_eps(0.0)).is_err());
    }

    #[test]
    fn general_interval() {
        let e = mvee_general(&[v(&[-1.0]), v(&[0.5])], SolverOptions::default()).unwrap();
        assert!((e.center[0] + 0.25).abs() < 1e-12);
        assert!((e.shape[(0, 0)] - 9.0 / 16.0).abs() < 1e-9);
    }

    #[test]
    fn general_equilateral_triangle() {
        let pts: Vec<_> = (0..3)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0 + 0.3;
                v(&[t.cos(), t.sin()])
            })
            .collect();
        let e = mvee_general(&pts, SolverOptions::default()).unwrap();
        assert!(e.center.norm() < 1e-9);
        assert_mat_close(&dense_shape(&e), &DMatrix::identity(2, 2), 1e-7);
    }

    #[test]
    fn general_triangle_centers_at_centroid() {
        // any triangle is an affine image of the equilateral one, so its
        // Löwner ellipse is centered at the centroid
        let pts = vec![v(&[0.0, 0.0]), v(&[4.0, 0.0]), v(&[1.0, 3.0])];
        let e = mvee_general(&pts, SolverOptions::default()).unwrap();
        let centroid = v(&[5.0 / 3.0, 1.0]);
        assert!((&e.center - centroid).norm() < 1e-6);
    }

    #[test]
    fn general_single_point_is_rank_zero() {
        let e = mvee_general(&[v(&[3.0, -1.0])], SolverOptions::default()).unwrap();
        assert_eq!(e.rank(), 0);
        assert_eq!(e.center, v(&[3.0, -1.0]));
        assert!(inscribed_from_enclosing(&e, false).is_err());
    }

    #[test]
    fn inscribed_examples() {
        let disk = Ellipsoid {
            center: DVector::zeros(2),
            basis: DMatrix::identity(2, 2),
            shape: DMatrix::identity(2, 2),
        };
        let e = inscribed_from_enclosing(&disk, true).unwrap();
        assert_mat_close(&e.ellipsoid.shape, &(DMatrix::identity(2, 2) * 0.5), 1e-15);
        assert!((e.containment_factor - 2f64.sqrt()).abs() < 1e-15);

        let interval = mvee_general(&[v(&[-1.0]), v(&[0.5])], SolverOptions::default()).unwrap();
        let e = inscribed_from_enclosing(&interval, false).unwrap();
        assert!((e.offset[0] + 0.25).abs() < 1e-12);
        assert!((e.ellipsoid.shape[(0, 0)].sqrt() - 0.75).abs() < 1e-9);
        assert_eq!(e.ellipsoid.center[0], 0.0);

        let sphere = Ellipsoid {
            center: DVector::zeros(3),
            basis: DMatrix::identity(3, 3),
            shape: DMatrix::identity(3, 3) * 3.0,
        };
        let e = inscribed_from_enclosing(&sphere, true).unwrap();
        assert_mat_close(&e.ellipsoid.shape, &DMatrix::identity(3, 3), 1e-15);
    }

    #[test]
    fn deterministic_output() {
        let pts: Vec<_> = (0..12)
            .map(|i| {
                let t = i as f64;
                v(&[t.sin(), (1.3 * t).cos(), (0.7 * t).sin() + 0.2])
            })
            .collect();
        let a = mvee_general(&pts, SolverOptions::default()).unwrap();
        let b = mvee_general(&pts, SolverOptions::default()).unwrap();
        assert_eq!(a, b);
        let a = mvee_symmetric(&pts, SolverOptions::default()).unwrap();
        let b = mvee_symmetric(&pts, SolverOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn iteration_cap_reports_violation() {
        let pts: Vec<_> = (0..30)
            .map(|i| {
                let t = i as f64 * 0.37;
                v(&[t.sin() * 3.0, (2.1 * t).cos(), (0.3 * t).sin()])
            })
            .collect();
        let err = mvee_symmetric(
            &pts,
            SolverOptions {
                eps: 1e-9,
                max_updates: 2,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 2, .. }));
    }
}
