use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Fractional order `s` together with the quantities derived from it: the
/// weight exponent `alpha = 1 - 2s` and the extension normalization
/// `d_s = 2^(1-2s) Γ(1-s) / Γ(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalParams {
    s: f64,
    alpha: f64,
    d_s: f64,
}

impl FractionalParams {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!(
                "fractional order s = {s} must lie in (0, 1)"
            )));
        }
        let alpha = 1.0 - 2.0 * s;
        let d_s = 2f64.powf(alpha) * gamma(1.0 - s) / gamma(s);
        Ok(Self { s, alpha, d_s })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d_s(&self) -> f64 {
        self.d_s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_order_is_unweighted() {
        let p = FractionalParams::new(0.5).unwrap();
        assert_eq!(p.alpha(), 0.0);
        assert!((p.d_s() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn normalization_matches_closed_form() {
        // Γ(0.75)/Γ(0.25) = 0.3379891200336424..., 2^0.5 times that.
        let p = FractionalParams::new(0.25).unwrap();
        assert!((p.alpha() - 0.5).abs() < 1e-15);
        assert!((p.d_s() - 2f64.sqrt() * 0.337_989_120_033_642_4).abs() < 1e-12);
    }

    #[test]
    fn rejects_orders_outside_unit_interval() {
        for s in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(FractionalParams::new(s).is_err(), "s = {s}");
        }
    }
}
