//! Multi-index combinatorics and the weighted Veronese embedding.
//!
//! The n-th tensor power of a vector lives in the symmetric part of the tensor
//! space, whose coordinates are indexed by exponent tuples of total degree n.
//! Weighting each monomial by the square root of its multinomial coefficient
//! makes the restriction of the Euclidean pairing a plain dot product:
//! `<veronese(f), veronese(x)> = (f . x)^n`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent tuple `(a_1, ..., a_d)` of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Evaluates the monomial `prod x_i^a_i`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// `binom(n + d - 1, n)`, the number of monomials of degree `n` in `d` variables.
pub fn sym_dim(d: usize, n: usize) -> Result<usize> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "sym_dim requires d >= 1 and n >= 1 (got d={d}, n={n})"
        )));
    }
    let overflow = || Error::DimensionOverflow { d, n };
    // binom(n+d-1, k) built up as a running product; each partial value is itself
    // a binomial coefficient, so the division is exact.
    let k = n.min(d - 1) as u128;
    let top = (n + d - 1) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul(top - k + i).ok_or_else(overflow)? / i;
    }
    usize::try_from(acc).map_err(|_| overflow())
}

/// All exponent tuples of total degree `n` in `d` variables, graded-lex order
/// (lexicographically descending).
pub fn multi_indices(d: usize, n: usize) -> Result<Vec<MultiIndex>> {
    let count = sym_dim(d, n)?;
    let mut out = Vec::with_capacity(count);
    let mut current = vec![0u32; d];
    fill_grlex(&mut current, 0, n as u32, &mut out);
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

fn fill_grlex(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for a in (0..=remaining).rev() {
        current[pos] = a;
        fill_grlex(current, pos + 1, remaining - a, out);
    }
    current[pos] = 0;
}

/// `n! / (a_1! ... a_d!)` with `n = sum a_i`, computed exactly.
pub fn multinomial(alpha: &MultiIndex) -> Result<u128> {
    let mut acc: u128 = 1;
    let mut seen: u128 = 0;
    for &a in alpha.exponents() {
        // multiply by binom(seen + a, a) incrementally
        for j in 1..=a as u128 {
            seen += 1;
            acc = acc.checked_mul(seen).ok_or(Error::DimensionOverflow {
                d: alpha.dim(),
                n: alpha.degree(),
            })? / j;
        }
    }
    Ok(acc)
}

/// A point of the symmetric tensor space in weighted monomial coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymVector {
    pub d: usize,
    pub n: usize,
    pub coords: Vec<f64>,
}

impl SymVector {
    pub fn zeros(d: usize, n: usize) -> Result<Self> {
        Ok(SymVector {
            d,
            n,
            coords: vec![0.0; sym_dim(d, n)?],
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }
}

/// Euclidean inner product in symmetric coordinates.
pub fn pairing(u: &SymVector, v: &SymVector) -> Result<f64> {
    if u.d != v.d {
        return Err(Error::ShapeMismatch {
            expected: u.d,
            got: v.d,
        });
    }
    if u.n != v.n {
        return Err(Error::ShapeMismatch {
            expected: u.n,
            got: v.n,
        });
    }
    if u.coords.len() != v.coords.len() {
        return Err(Error::ShapeMismatch {
            expected: u.coords.len(),
            got: v.coords.len(),
        });
    }
    Ok(dot(&u.coords, &v.coords))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-shot Veronese lift. Prefer [`VeroneseMap`] when lifting many points.
pub fn veronese(x: &[f64], n: usize) -> Result<SymVector> {
    VeroneseMap::new(x.len(), n)?.lift(x)
}

/// Precomputed index set and weights for lifting d-vectors to degree n.
#[derive(Clone, Debug)]
pub struct VeroneseMap {
    d: usize,
    n: usize,
    indices: Vec<MultiIndex>,
    weights: Vec<f64>,
}

impl VeroneseMap {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        let indices = multi_indices(d, n)?;
        let weights = indices
            .iter()
            .map(|a| multinomial(a).map(|m| (m as f64).sqrt()))
            .collect::<Result<Vec<_>>>()?;
        Ok(VeroneseMap {
            d,
            n,
            indices,
            weights,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// `sqrt(multinomial(n; alpha))` per coordinate.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Position of each multi-index in the canonical ordering.
    pub fn position_map(&self) -> HashMap<MultiIndex, usize> {
        self.indices
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, a)| (a, i))
            .collect()
    }

    pub fn lift(&self, x: &[f64]) -> Result<SymVector> {
        let mut coords = vec![0.0; self.dim()];
        self.lift_into(x, &mut coords)?;
        Ok(SymVector {
            d: self.d,
            n: self.n,
            coords,
        })
    }

    pub fn lift_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::ShapeMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if out.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: out.len(),
            });
        }
        // powers[i * (n+1) + k] = x_i^k
        let stride = self.n + 1;
        let mut powers = vec![1.0; self.d * stride];
        for (i, &xi) in x.iter().enumerate() {
            for k in 1..stride {
                powers[i * stride + k] = powers[i * stride + k - 1] * xi;
            }
        }
        for ((slot, alpha), w) in out.iter_mut().zip(&self.indices).zip(&self.weights) {
            let mut v = *w;
            for (i, &a) in alpha.exponents().iter().enumerate() {
                if a > 0 {
                    v *= powers[i * stride + a as usize];
                }
            }
            *slot = v;
        }
        Ok(())
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0f64..2.0, d)
    }

    proptest! {
        #[test]
        fn norm_identity(x in (1usize..5).prop_flat_map(vec_strategy), half in 0usize..4) {
            let n = 2 * half + 1;
            let v = veronese(&x, n).unwrap();
            let s: f64 = x.iter().map(|t| t * t).sum();
            let expected = s.powi(n as i32);
            prop_assert!((v.norm_squared() - expected).abs() <= 1e-12 * expected.max(1e-300));
        }

        #[test]
        fn pairing_identity(
            (f, x) in (1usize..6).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
            n in 1usize..8,
        ) {
            let map = VeroneseMap::new(f.len(), n).unwrap();
            let got = pairing(&map.lift(&f).unwrap(), &map.lift(&x).unwrap()).unwrap();
            let fx: f64 = f.iter().zip(&x).map(|(a, b)| a * b).sum();
            let expected = fx.powi(n as i32);
            // cancellation error is bounded by the product of norms
            let scale = (f.iter().map(|t| t * t).sum::<f64>() * x.iter().map(|t| t * t).sum::<f64>())
                .powf(n as f64 / 2.0);
            prop_assert!((got - expected).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn odd_homogeneity(x in vec_strategy(3), t in -3.0f64..3.0, half in 0usize..3) {
            let n = 2 * half + 1;
            let map = VeroneseMap::new(3, n).unwrap();
            let a = map.lift(&x.iter().map(|v| v * t).collect::<Vec<_>>()).unwrap();
            let b = map.lift(&x).unwrap();
            let tn = t.powi(n as i32);
            for (u, v) in a.coords.iter().zip(&b.coords) {
                prop_assert!((u - tn * v).abs() <= 1e-12 * (1.0 + (tn * v).abs()));
            }
        }

        #[test]
        fn grlex_is_a_bijection(d in 1usize..5, n in 1usize..7) {
            let list = multi_indices(d, n).unwrap();
            prop_assert_eq!(list.len(), sym_dim(d, n).unwrap());
            prop_assert!(list.iter().all(|a| a.degree() == n && a.dim() == d));
            // strictly descending lexicographic order implies no duplicates
            prop_assert!(list.windows(2).all(|w| w[0] > w[1]));
        }
    }
}
