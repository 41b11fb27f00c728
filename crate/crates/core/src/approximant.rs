//! The polynomial approximant of a norm or Minkowski functional.
//!
//! Generators `f` of the polar body are lifted to `sigma(f)` in the symmetric
//! tensor space; the Löwner ellipsoid of the lifted set, shrunk into the hull,
//! gives an ellipsoid `E` with `E <= D <= c E`. The support value of `E` at
//! `sigma(x)` is `q(x) = sqrt(sigma(x)^T A sigma(x))`, and `p = q^2`.
//!
//! `A` is stored factored as `C^T K C`: `C` (`r x N`) has orthonormal rows
//! spanning the carrier of the lifted set and `K` (`r x r`) is the ellipsoid
//! shape in carrier coordinates.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bodies::BodySpec;
use crate::error::{Error, Result};
use crate::mvee::{self, SolverOptions};
use crate::symtensor::{multi_indices, sym_dim, MultiIndex, VeroneseMap};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_DIM_CAP: usize = 3000;
pub const DEFAULT_EXPAND_CAP: usize = 200_000;

const ORTHONORMAL_TOL: f64 = 1e-10;
const RADICAND_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub eps: f64,
    pub dim_cap: usize,
    pub max_updates: usize,
    pub seed: Option<u64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            eps: mvee::DEFAULT_EPS,
            dim_cap: DEFAULT_DIM_CAP,
            max_updates: mvee::DEFAULT_MAX_UPDATES,
            seed: None,
        }
    }
}

/// Effective and worst-case sandwich constants.
///
/// Symmetric bodies: `(dim D)^{1/2n}` and `binom(n+d-1, n)^{1/2n}`, the factor
/// between the lower and upper norm bounds. General bodies: `dim D` and
/// `binom(n+d-1, n)`, the factor multiplying `sqrt(p)` in the upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub effective: f64,
    pub theorem: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    pub eps: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormBounds {
    pub lower: f64,
    /// Upper bound with the effective constant.
    pub upper: f64,
    /// Upper bound with the worst-case constant; never below `upper`.
    pub upper_theorem: f64,
}

#[derive(Clone, Debug)]
pub struct NormApproximant {
    d: usize,
    n: usize,
    map: VeroneseMap,
    carrier: DMatrix<f64>,
    core: DMatrix<f64>,
    /// Lower Cholesky factor of `core`.
    core_factor: DMatrix<f64>,
    w: Vec<f64>,
    constants: Constants,
    body: BodySpec,
    build: BuildInfo,
}

/// Builds the approximant of `spec` at odd degree `n`.
pub fn build(spec: &BodySpec, n: usize, opts: BuildOptions) -> Result<NormApproximant> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::EvenDegree(n));
    }
    spec.validate()?;
    let dim = sym_dim(spec.d, n)?;
    if dim > opts.dim_cap {
        return Err(Error::DimensionCap {
            dim,
            cap: opts.dim_cap,
        });
    }
    let map = VeroneseMap::new(spec.d, n)?;
    let lifted = spec
        .generators
        .iter()
        .map(|f| map.lift(f).map(|s| DVector::from_vec(s.coords)))
        .collect::<Result<Vec<_>>>()?;
    let solver = SolverOptions {
        eps: opts.eps,
        max_updates: opts.max_updates,
    };
    let symmetric = spec.is_symmetric();
    let enclosing = if symmetric {
        mvee::mvee_symmetric(&lifted, solver)?
    } else {
        mvee::mvee_general(&lifted, solver)?
    };
    let inscribed = mvee::inscribed_from_enclosing(&enclosing, symmetric)?;
    let carrier = inscribed.ellipsoid.basis.transpose();
    let core = inscribed.ellipsoid.shape;
    let w = if symmetric {
        vec![0.0; dim]
    } else {
        inscribed.offset.iter().cloned().collect()
    };
    let build = BuildInfo {
        eps: opts.eps,
        seed: opts.seed.or(spec.sampling.as_ref().map(|s| s.seed)),
    };
    NormApproximant::assemble(spec.clone(), n, map, carrier, core, w, build)
}

impl NormApproximant {
    fn assemble(
        body: BodySpec,
        n: usize,
        map: VeroneseMap,
        carrier: DMatrix<f64>,
        core: DMatrix<f64>,
        w: Vec<f64>,
        build: BuildInfo,
    ) -> Result<Self> {
        let r = carrier.nrows();
        let core_factor = core
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidApproximant("core matrix is not positive definite".into()))?
            .l();
        let constants = constants_for(body.d, n, r, body.is_symmetric())?;
        Ok(NormApproximant {
            d: body.d,
            n,
            map,
            carrier,
            core,
            core_factor,
            w,
            constants,
            body,
            build,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `binom(n+d-1, n)`.
    pub fn sym_dim(&self) -> usize {
        self.map.dim()
    }

    /// Dimension of the lifted hull `D` (rank of `A`).
    pub fn dim_d(&self) -> usize {
        self.carrier.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.body.is_symmetric()
    }

    pub fn constants(&self) -> Constants {
        self.constants
    }

    pub fn body(&self) -> &BodySpec {
        &self.body
    }

    pub fn build_info(&self) -> &BuildInfo {
        &self.build
    }

    pub fn veronese_map(&self) -> &VeroneseMap {
        &self.map
    }

    /// The center functional `w` in symmetric coordinates.
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn carrier(&self) -> &DMatrix<f64> {
        &self.carrier
    }

    pub fn core(&self) -> &DMatrix<f64> {
        &self.core
    }

    /// Dense `N x N` Gram matrix `A = C^T K C`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.carrier.tr_mul(&(&self.core * &self.carrier))
    }

    fn lift(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut buf = vec![0.0; self.map.dim()];
        self.map.lift_into(x, &mut buf)?;
        Ok(DVector::from_vec(buf))
    }

    /// `(q(x), r(x))` from a single lift.
    pub fn eval_qr(&self, x: &[f64]) -> Result<(f64, f64)> {
        let s = self.lift(x)?;
        let z = &self.carrier * &s;
        let t = self.core_factor.tr_mul(&z);
        let r = if self.is_symmetric() {
            0.0
        } else {
            s.iter().zip(&self.w).map(|(a, b)| a * b).sum()
        };
        Ok((t.norm(), r))
    }

    /// `p(x) = sigma(x)^T A sigma(x)`.
    pub fn eval_p(&self, x: &[f64]) -> Result<f64> {
        let (q, _) = self.eval_qr(x)?;
        Ok(q * q)
    }

    /// `q(x) = sqrt(p(x))`, the support value of the inscribed ellipsoid.
    pub fn eval_q(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_qr(x)?.0)
    }

    /// `r(x) = <w, sigma(x)>`; identically zero for symmetric bodies.
    pub fn eval_r(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_qr(x)?.1)
    }

    pub fn norm_bounds(&self, x: &[f64]) -> Result<NormBounds> {
        let (q, r) = self.eval_qr(x)?;
        let inv_n = 1.0 / self.n as f64;
        if self.is_symmetric() {
            let base = q.powf(inv_n);
            return Ok(NormBounds {
                lower: base,
                upper: self.constants.effective * base,
                upper_theorem: self.constants.theorem * base,
            });
        }
        let root = |v: f64| -> Result<f64> {
            let scale = r.abs() + self.constants.theorem * q;
            if v < -RADICAND_TOL * scale {
                return Err(Error::NegativeRadicand { value: v });
            }
            Ok(v.max(0.0).powf(inv_n))
        };
        Ok(NormBounds {
            // may be negative before rooting; the functional is nonnegative
            lower: (r + q).max(0.0).powf(inv_n),
            upper: root(r + self.constants.effective * q)?,
            upper_theorem: root(r + self.constants.theorem * q)?,
        })
    }

    /// Rows `L_k` with `p(x) = sum_k (L_k . sigma(x))^2`.
    pub fn sos_factor(&self) -> Vec<Vec<f64>> {
        let rows = self.core_factor.tr_mul(&self.carrier);
        rows.row_iter().map(|r| r.iter().cloned().collect()).collect()
    }

    /// Monomial coefficients of `p` in degree-2n graded-lex order.
    pub fn expand_monomials(&self) -> Result<Vec<(MultiIndex, f64)>> {
        self.expand_monomials_capped(DEFAULT_EXPAND_CAP)
    }

    pub fn expand_monomials_capped(&self, cap: usize) -> Result<Vec<(MultiIndex, f64)>> {
        let count = sym_dim(self.d, 2 * self.n)?;
        if count > cap {
            return Err(Error::DimensionCap { dim: count, cap });
        }
        let targets = multi_indices(self.d, 2 * self.n)?;
        let position: HashMap<&MultiIndex, usize> =
            targets.iter().enumerate().map(|(i, a)| (a, i)).collect();
        let gram = self.gram();
        let indices = self.map.indices();
        let weights = self.map.weights();
        let mut coef = vec![0.0; targets.len()];
        let mut sum = vec![0u32; self.d];
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                for (slot, (x, y)) in sum.iter_mut().zip(a.exponents().iter().zip(b.exponents())) {
                    *slot = x + y;
                }
                let key = MultiIndex::new(sum.clone());
                coef[position[&key]] += weights[i] * weights[j] * gram[(i, j)];
            }
        }
        Ok(targets.into_iter().zip(coef).collect())
    }

    pub fn to_file_format(&self) -> ApproximantFile {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().cloned().collect()).collect()
        };
        ApproximantFile {
            format_version: FORMAT_VERSION,
            d: self.d,
            n: self.n,
            ordering: "grlex".into(),
            carrier_basis: rows(&self.carrier),
            core: rows(&self.core),
            w: self.w.clone(),
            dim_d: self.dim_d(),
            constants: self.constants,
            body: self.body.clone(),
            build: self.build.clone(),
        }
    }

    /// Re-validates every invariant of a deserialized approximant.
    pub fn from_file_format(file: ApproximantFile) -> Result<Self> {
        let bad = |msg: String| Error::InvalidApproximant(msg);
        if file.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format_version {}", file.format_version)));
        }
        if file.ordering != "grlex" {
            return Err(bad(format!("unsupported ordering {:?}", file.ordering)));
        }
        if file.n % 2 == 0 {
            return Err(Error::EvenDegree(file.n));
        }
        file.body.validate()?;
        if file.body.d != file.d {
            return Err(bad(format!("d = {} but body has d = {}", file.d, file.body.d)));
        }
        let dim = sym_dim(file.d, file.n)?;
        let r = file.dim_d;
        if file.carrier_basis.len() != r || file.core.len() != r {
            return Err(bad(format!("dim_D = {r} does not match the matrix sizes")));
        }
        if r == 0 || r > dim {
            return Err(bad(format!("dim_D = {r} out of range 1..={dim}")));
        }
        if file.carrier_basis.iter().any(|row| row.len() != dim)
            || file.core.iter().any(|row| row.len() != r)
            || file.w.len() != dim
        {
            return Err(bad("ragged or mis-sized arrays".into()));
        }
        let all = file
            .carrier_basis
            .iter()
            .chain(&file.core)
            .flatten()
            .chain(&file.w);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(bad("non-finite entries".into()));
        }
        let carrier = DMatrix::from_fn(r, dim, |i, j| file.carrier_basis[i][j]);
        let core = DMatrix::from_fn(r, r, |i, j| file.core[i][j]);
        let gram = &carrier * carrier.transpose();
        if (gram - DMatrix::identity(r, r)).amax() > ORTHONORMAL_TOL {
            return Err(bad("carrier basis is not orthonormal".into()));
        }
        if (&core - core.transpose()).amax() > 1e-12 * core.amax() {
            return Err(bad("core matrix is not symmetric".into()));
        }
        if file.body.is_symmetric() && file.w.iter().any(|&v| v != 0.0) {
            return Err(bad("symmetric approximant must have w = 0".into()));
        }
        let map = VeroneseMap::new(file.d, file.n)?;
        let body = file.body;
        let appr = Self::assemble(body, file.n, map, carrier, core, file.w, file.build)?;
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !rel(appr.constants.effective, file.constants.effective)
            || !rel(appr.constants.theorem, file.constants.theorem)
        {
            return Err(bad("stored constants disagree with dim_D".into()));
        }
        Ok(appr)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_file_format())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_format(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// On-disk layout of an approximant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximantFile {
    pub format_version: u32,
    pub d: usize,
    pub n: usize,
    pub ordering: String,
    /// `r x N`, row-major.
    pub carrier_basis: Vec<Vec<f64>>,
    /// `r x r`.
    pub core: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    #[serde(rename = "dim_D")]
    pub dim_d: usize,
    pub constants: Constants,
    pub body: BodySpec,
    pub build: BuildInfo,
}

fn constants_for(d: usize, n: usize, r: usize, symmetric: bool) -> Result<Constants> {
    let dim = sym_dim(d, n)? as f64;
    let r = r as f64;
    Ok(if symmetric {
        let e = 1.0 / (2.0 * n as f64);
        Constants {
            effective: r.powf(e),
            theorem: dim.powf(e),
        }
    } else {
        Constants {
            effective: r,
            theorem: dim,
        }
    })
}

/// Evaluates a coefficient table at `x`.
pub fn eval_expansion(terms: &[(MultiIndex, f64)], x: &[f64]) -> f64 {
    terms.iter().map(|(a, c)| c * a.eval(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::{from_polar_vertices, make_l1, make_linf};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn interval() -> BodySpec {
        from_polar_vertices(vec![vec![-1.0], vec![0.5]], false).unwrap()
    }

    #[test]
    fn l1_n1_is_euclidean() {
        let a = build(&make_l1(3).unwrap(), 1, BuildOptions::default()).unwrap();
        assert_eq!(a.dim_d(), 3);
        let g = a.gram();
        assert!((g - DMatrix::identity(3, 3)).amax() < 1e-9);
        assert!(close(a.eval_p(&[1.0, 2.0, 2.0]).unwrap(), 9.0, 1e-9));
        assert_eq!(a.eval_p(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(a.eval_r(&[1.0, 2.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn linf_n3_closed_form() {
        let a = build(&make_linf(2).unwrap(), 3, BuildOptions::default()).unwrap();
        assert_eq!(a.dim_d(), 2);
        assert!(close(a.eval_p(&[1.0, 1.0]).unwrap(), 1.0, 1e-9));
        let x: [f64; 2] = [0.3, -1.7];
        let expected = (x[0].powi(6) + x[1].powi(6)) / 2.0;
        assert!(close(a.eval_p(&x).unwrap(), expected, 1e-9));
        let b = a.norm_bounds(&[1.0, 1.0]).unwrap();
        assert!(close(b.lower, 1.0, 1e-9));
    }

    #[test]
    fn interval_example() {
        let a = build(&interval(), 1, BuildOptions::default()).unwrap();
        assert_eq!(a.dim_d(), 1);
        assert!(close(a.w()[0], -0.25, 1e-12));
        assert!(close(a.eval_p(&[1.0]).unwrap(), 9.0 / 16.0, 1e-9));
        assert!(close(a.eval_r(&[2.0]).unwrap(), -0.5, 1e-12));
        assert!(close(a.eval_r(&[-1.0]).unwrap(), 0.25, 1e-12));
        let b = a.norm_bounds(&[-1.0]).unwrap();
        assert!(close(b.lower, 1.0, 1e-9) && close(b.upper, 1.0, 1e-9));
    }

    #[test]
    fn l1_d4_bounds() {
        let a = build(&make_l1(4).unwrap(), 1, BuildOptions::default()).unwrap();
        let b = a.norm_bounds(&[1.0; 4]).unwrap();
        assert!(close(b.lower, 2.0, 1e-9));
        assert!(close(b.upper, 4.0, 1e-9));
    }

    #[test]
    fn rejects_even_degree_and_cap() {
        let spec = make_linf(2).unwrap();
        assert!(matches!(
            build(&spec, 2, BuildOptions::default()),
            Err(Error::EvenDegree(2))
        ));
        let opts = BuildOptions {
            dim_cap: 3,
            ..Default::default()
        };
        assert!(matches!(
            build(&spec, 3, opts),
            Err(Error::DimensionCap { dim: 4, cap: 3 })
        ));
    }

    #[test]
    fn expansion_examples() {
        let a = build(&make_l1(2).unwrap(), 1, BuildOptions::default()).unwrap();
        let terms = a.expand_monomials().unwrap();
        let want = [1.0, 0.0, 1.0];
        assert_eq!(terms.len(), 3);
        for ((_, c), w) in terms.iter().zip(want) {
            assert!(close(*c, w, 1e-9));
        }

        let a = build(&make_linf(2).unwrap(), 3, BuildOptions::default()).unwrap();
        for (alpha, c) in a.expand_monomials().unwrap() {
            let pure = alpha.exponents().contains(&6);
            assert!(close(c, if pure { 0.5 } else { 0.0 }, 1e-9), "{alpha}: {c}");
        }
        assert!(matches!(
            a.expand_monomials_capped(3),
            Err(Error::DimensionCap { .. })
        ));
    }

    #[test]
    fn sos_factor_examples() {
        let a = build(&make_l1(3).unwrap(), 1, BuildOptions::default()).unwrap();
        let rows = a.sos_factor();
        assert_eq!(rows.len(), 3);
        let m = DMatrix::from_fn(3, 3, |i, j| rows[i][j]);
        assert!((m.tr_mul(&m) - DMatrix::identity(3, 3)).amax() < 1e-9);

        let one_d = build(&make_l1(1).unwrap(), 5, BuildOptions::default()).unwrap();
        assert_eq!(one_d.sos_factor().len(), 1);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let a = build(&interval(), 3, BuildOptions::default()).unwrap();
        let text = a.to_json().unwrap();
        let b = NormApproximant::from_json(&text).unwrap();
        assert_eq!(b.to_json().unwrap(), text);
        for x in [-2.0, -0.3, 0.7, 5.0] {
            assert_eq!(a.eval_p(&[x]).unwrap(), b.eval_p(&[x]).unwrap());
            assert_eq!(a.eval_r(&[x]).unwrap(), b.eval_r(&[x]).unwrap());
        }
    }

    #[test]
    fn loading_rejects_tampered_files() {
        let a = build(&make_linf(2).unwrap(), 3, BuildOptions::default()).unwrap();
        let good = a.to_file_format();

        let mut f = good.clone();
        f.n = 2;
        assert!(NormApproximant::from_file_format(f).is_err());

        let mut f = good.clone();
        f.carrier_basis[0][0] *= 1.5;
        assert!(NormApproximant::from_file_format(f).is_err());

        let mut f = good.clone();
        f.core[0][0] = -1.0;
        assert!(NormApproximant::from_file_format(f).is_err());

        let mut f = good.clone();
        f.w[0] = 0.1;
        assert!(NormApproximant::from_file_format(f).is_err());

        let mut f = good.clone();
        f.constants.effective = 7.0;
        assert!(NormApproximant::from_file_format(f).is_err());

        let mut f = good;
        f.ordering = "lex".into();
        assert!(NormApproximant::from_file_format(f).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = build(&make_linf(2).unwrap(), 1, BuildOptions::default()).unwrap();
        assert!(matches!(a.eval_p(&[1.0]), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(a.norm_bounds(&[1.0, 2.0, 3.0]), Err(Error::ShapeMismatch { .. })));
    }
}
