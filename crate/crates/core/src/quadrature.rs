//! Gauss-type quadrature rules on the reference interval `[-1, 1]`.
//!
//! Nodes and weights come from the Golub–Welsch eigenvalue formulation of the
//! three-term recurrence for Jacobi polynomials.

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i g(x_i)`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

/// `n`-point rule for `∫_{-1}^{1} (1 - x)^a (1 + x)^b g(x) dx`, exact for
/// polynomials of degree `2n - 1`.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if !(a > -1.0 && b > -1.0) {
        return Err(Error::Domain(format!(
            "Jacobi exponents ({a}, {b}) must exceed -1"
        )));
    }
    if n == 0 {
        return Ok(QuadratureRule {
            nodes: Vec::new(),
            weights: Vec::new(),
        });
    }
    let ab = a + b;
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        jacobi[(k, k)] = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            let t = 2.0 * kf + ab;
            (b * b - a * a) / (t * (t + 2.0))
        };
        if k + 1 < n {
            let m = kf + 1.0;
            let t = 2.0 * m + ab;
            // The m = 1 case is written with the (m + a + b) factor cancelled
            // so that a + b = -1 does not produce 0/0.
            let beta = if k == 0 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                4.0 * m * (m + a) * (m + b) * (m + ab) / (t * t * (t + 1.0) * (t - 1.0))
            };
            jacobi[(k, k + 1)] = beta.sqrt();
            jacobi[(k + 1, k)] = beta.sqrt();
        }
    }
    let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
        - ln_gamma(ab + 2.0))
    .exp();
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

pub fn gauss_legendre(n: usize) -> QuadratureRule {
    gauss_jacobi(n, 0.0, 0.0).expect("Legendre exponents are valid")
}

/// The `p + 1` Gauss–Lobatto–Legendre points: the endpoints plus the zeros
/// of `P_p'`, which are the Gauss–Jacobi(1, 1) nodes.
pub fn gauss_lobatto_nodes(p: usize) -> Vec<f64> {
    match p {
        0 => vec![0.0],
        1 => vec![-1.0, 1.0],
        _ => {
            let interior = gauss_jacobi(p - 1, 1.0, 1.0).expect("valid exponents");
            let mut nodes = Vec::with_capacity(p + 1);
            nodes.push(-1.0);
            nodes.extend(interior.nodes);
            nodes.push(1.0);
            nodes
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(6);
        for m in 0..12 {
            let exact = if m % 2 == 0 { 2.0 / (m as f64 + 1.0) } else { 0.0 };
            let got = rule.integrate(|x| x.powi(m));
            assert!((got - exact).abs() < 1e-14, "m = {m}: {got} vs {exact}");
        }
    }

    #[test]
    fn jacobi_moments_match_beta_function() {
        // ∫ (1-x)^a (1+x)^b (1+x)^m dx = 2^{a+b+m+1} B(a+1, b+m+1).
        for (a, b) in [(0.0, 0.4), (0.0, -0.4), (0.3, -0.7), (1.0, 1.0), (0.0, -0.5)] {
            let rule = gauss_jacobi(5, a, b).unwrap();
            for m in 0..10 {
                let exact = 2f64.powf(a + b + m as f64 + 1.0) * beta(a + 1.0, b + m as f64 + 1.0);
                let got = rule.integrate(|x| (1.0 + x).powi(m));
                assert!(
                    (got - exact).abs() < 1e-13 * exact.abs().max(1.0),
                    "a = {a}, b = {b}, m = {m}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn nodes_are_sorted_and_interior() {
        let rule = gauss_jacobi(9, 0.0, -0.6).unwrap();
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(rule.nodes.iter().all(|x| x.abs() < 1.0));
        assert!(rule.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn lobatto_nodes() {
        let nodes = gauss_lobatto_nodes(2);
        assert_eq!(nodes.len(), 3);
        assert!(nodes[1].abs() < 1e-15);
        let nodes = gauss_lobatto_nodes(3);
        let x = (1.0f64 / 5.0).sqrt();
        assert!((nodes[1] + x).abs() < 1e-14 && (nodes[2] - x).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonintegrable_weight() {
        assert!(gauss_jacobi(3, 0.0, -1.0).is_err());
    }
}
