//! Polynomial maps with exact first and second derivatives.

use std::fmt;

use nalgebra::DMatrix;

/// A differentiable map `R^d -> R^k` with analytic Jacobian and per-output
/// Hessians. Implementations must be pure.
pub trait SmoothMap: Send + Sync + fmt::Debug {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Declared smoothness order, 1 or 2.
    fn order(&self) -> u8 {
        2
    }

    fn value(&self, z: &[f64]) -> Vec<f64>;

    /// Jacobian, `output_dim x input_dim`.
    fn jacobian(&self, z: &[f64]) -> DMatrix<f64>;

    /// Hessian of output `k`, `input_dim x input_dim`.
    fn hessian(&self, z: &[f64], k: usize) -> DMatrix<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Sparse multivariate polynomial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: Vec<Monomial>,
}

fn powi(v: f64, k: u32) -> f64 {
    v.powi(k as i32)
}

impl Polynomial {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// Adds `coef * prod z_i^powers_i`. Missing trailing powers are zero.
    pub fn term(mut self, coef: f64, powers: &[u32]) -> Self {
        let mut p = vec![0; self.dim];
        p[..powers.len()].copy_from_slice(powers);
        self.terms.push(Monomial { coef, powers: p });
        self
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim).term(c, &[])
    }

    /// `coef * z_i`.
    pub fn linear(dim: usize, i: usize, coef: f64) -> Self {
        let mut p = vec![0; dim];
        p[i] = 1;
        let mut out = Self::new(dim);
        out.terms.push(Monomial { coef, powers: p });
        out
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.powers
                    .iter()
                    .zip(z)
                    .fold(t.coef, |acc, (&k, &v)| acc * powi(v, k))
            })
            .sum()
    }

    pub fn partial(&self, z: &[f64], i: usize) -> f64 {
        let mut s = 0.0;
        for t in &self.terms {
            let ki = t.powers[i];
            if ki == 0 {
                continue;
            }
            let mut acc = t.coef * ki as f64;
            for (j, (&k, &v)) in t.powers.iter().zip(z).enumerate() {
                let e = if j == i { k - 1 } else { k };
                acc *= powi(v, e);
            }
            s += acc;
        }
        s
    }

    pub fn second_partial(&self, z: &[f64], i: usize, j: usize) -> f64 {
        let mut s = 0.0;
        for t in &self.terms {
            let mut e = t.powers.clone();
            let mut acc = t.coef;
            if e[i] == 0 {
                continue;
            }
            acc *= e[i] as f64;
            e[i] -= 1;
            if e[j] == 0 {
                continue;
            }
            acc *= e[j] as f64;
            e[j] -= 1;
            for (&k, &v) in e.iter().zip(z) {
                acc *= powi(v, k);
            }
            s += acc;
        }
        s
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|t| t.coef != 0.0)
            .map(|t| t.powers.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

/// Vector of polynomials sharing one input space.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap {
    input_dim: usize,
    components: Vec<Polynomial>,
}

impl PolyMap {
    pub fn new(input_dim: usize, components: Vec<Polynomial>) -> Self {
        assert!(
            components.iter().all(|p| p.dim == input_dim),
            "polynomial dimension does not match map input"
        );
        Self {
            input_dim,
            components,
        }
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }
}

impl SmoothMap for PolyMap {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.components.len()
    }

    fn value(&self, z: &[f64]) -> Vec<f64> {
        self.components.iter().map(|p| p.eval(z)).collect()
    }

    fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.components.len(), self.input_dim, |k, i| {
            self.components[k].partial(z, i)
        })
    }

    fn hessian(&self, z: &[f64], k: usize) -> DMatrix<f64> {
        let p = &self.components[k];
        DMatrix::from_fn(self.input_dim, self.input_dim, |i, j| {
            p.second_partial(z, i, j)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_mixed_monomial() {
        // 3 x^2 y - y + 2
        let p = Polynomial::new(2)
            .term(3.0, &[2, 1])
            .term(-1.0, &[0, 1])
            .term(2.0, &[]);
        let z = [1.5, -2.0];
        assert_eq!(p.eval(&z), 3.0 * 2.25 * -2.0 + 2.0 + 2.0);
        assert_eq!(p.partial(&z, 0), 6.0 * 1.5 * -2.0);
        assert_eq!(p.partial(&z, 1), 3.0 * 2.25 - 1.0);
        assert_eq!(p.second_partial(&z, 0, 0), 6.0 * -2.0);
        assert_eq!(p.second_partial(&z, 0, 1), 6.0 * 1.5);
        assert_eq!(p.second_partial(&z, 1, 0), 6.0 * 1.5);
        assert_eq!(p.second_partial(&z, 1, 1), 0.0);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn polymap_shapes() {
        let m = PolyMap::new(
            2,
            vec![Polynomial::linear(2, 1, 1.0), Polynomial::constant(2, 4.0)],
        );
        assert_eq!(m.value(&[0.0, 3.0]), vec![3.0, 4.0]);
        let j = m.jacobian(&[0.0, 3.0]);
        assert_eq!((j.nrows(), j.ncols()), (2, 2));
        assert_eq!(j[(0, 1)], 1.0);
        assert_eq!(m.hessian(&[0.0, 0.0], 0), DMatrix::zeros(2, 2));
    }
}
