//! Model parameters: self-propulsion, Morse interaction, noise, roosting.
//!
//! The continuum model evolves a phase-space density f(x, v, t) in 2+2
//! dimensions under
//!
//! ```text
//! df/dt + div_x(v f) + div_v( [ v(alpha - beta|v|^2)
//!                               - grad(U * rho)
//!                               - (grad phi . v_perp) v_perp ] f )
//!       = (A^2/2) div_v( v f + grad_v f )
//! ```
//!
//! where `rho` is the spatial marginal of `f`, `U` is a Morse pair potential,
//! `phi` an optional confining ("roost") potential and `A` the noise strength.
//! The same coefficients drive the microscopic particle system.

use crate::error::{Error, Result};

/// Quartic roost potential `phi(x) = (b/4) (|x|/R)^4`.
///
/// Its gradient `(b/R^4) |x|^2 x` is smooth everywhere, including the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roosting {
    /// Stiffness `b` (> 0).
    pub b: f64,
    /// Radius scale `R` (> 0).
    pub r: f64,
}

impl Roosting {
    /// Potential value at position `x`.
    pub fn phi(&self, x: [f64; 2]) -> f64 {
        let s2 = (x[0] * x[0] + x[1] * x[1]) / (self.r * self.r);
        0.25 * self.b * s2 * s2
    }

    /// Gradient of the potential at `x`; zero at the origin.
    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        let r4 = self.r * self.r * self.r * self.r;
        let c = self.b * (x[0] * x[0] + x[1] * x[1]) / r4;
        [c * x[0], c * x[1]]
    }
}

/// Physical constants of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Propulsion gain `alpha` (> 0).
    pub alpha: f64,
    /// Friction gain `beta` (> 0).
    pub beta: f64,
    /// Morse attraction strength `C_a` (>= 0).
    pub c_a: f64,
    /// Morse repulsion strength `C_r` (>= 0).
    pub c_r: f64,
    /// Morse attraction range `l_a` (> 0).
    pub l_a: f64,
    /// Morse repulsion range `l_r` (> 0).
    pub l_r: f64,
    /// Noise strength `A` (>= 0).
    pub noise_a: f64,
    /// Optional roost potential; `None` means no roosting term.
    pub roosting: Option<Roosting>,
}

impl ModelParams {
    /// Reference constants used throughout the milling studies.
    pub fn reference() -> Self {
        ModelParams {
            alpha: 0.07,
            beta: 0.05,
            c_a: 20.0,
            c_r: 50.0,
            l_a: 100.0,
            l_r: 2.0,
            noise_a: 0.0,
            roosting: None,
        }
    }

    /// Validate positivity/sign constraints.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.c_a >= 0.0) || !(self.c_r >= 0.0) {
            return Err(Error::Config(format!(
                "interaction strengths must be >= 0, got c_a={} c_r={}",
                self.c_a, self.c_r
            )));
        }
        if !(self.l_a > 0.0) || !(self.l_r > 0.0) {
            return Err(Error::Config(format!(
                "interaction ranges must be > 0, got l_a={} l_r={}",
                self.l_a, self.l_r
            )));
        }
        if !(self.noise_a >= 0.0) || !self.noise_a.is_finite() {
            return Err(Error::Config(format!("noise_a must be >= 0, got {}", self.noise_a)));
        }
        if let Some(roost) = &self.roosting {
            if !(roost.b > 0.0) || !(roost.r > 0.0) {
                return Err(Error::Config(format!(
                    "roosting parameters must be > 0, got b={} r={}",
                    roost.b, roost.r
                )));
            }
        }
        Ok(())
    }

    /// Cruise speed `sqrt(alpha/beta)` of the propulsion term.
    pub fn cruise_speed(&self) -> f64 {
        (self.alpha / self.beta).sqrt()
    }

    /// Roost gradient at `x`, zero when roosting is absent.
    pub fn roost_grad(&self, x: [f64; 2]) -> [f64; 2] {
        match &self.roosting {
            Some(roost) => roost.grad(x),
            None => [0.0, 0.0],
        }
    }

    /// Roost potential at `x`, zero when roosting is absent.
    pub fn roost_potential(&self, x: [f64; 2]) -> f64 {
        match &self.roosting {
            Some(roost) => roost.phi(x),
            None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_constants_validate() {
        let p = ModelParams::reference();
        p.validate().unwrap();
        assert!((p.cruise_speed() - (0.07f64 / 0.05).sqrt()).abs() < 1e-15);
        assert!((p.cruise_speed() - 1.1832159566199232).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_signs() {
        let mut p = ModelParams::reference();
        p.alpha = 0.0;
        assert!(p.validate().is_err());
        p = ModelParams::reference();
        p.beta = -1.0;
        assert!(p.validate().is_err());
        p = ModelParams::reference();
        p.l_r = 0.0;
        assert!(p.validate().is_err());
        p = ModelParams::reference();
        p.noise_a = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn roost_gradient_matches_potential() {
        let roost = Roosting { b: 2.0, r: 10.0 };
        // Central differences on phi agree with the closed-form gradient.
        let x = [3.0, -4.0];
        let eps = 1e-6;
        let g = roost.grad(x);
        for axis in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[axis] += eps;
            xm[axis] -= eps;
            let fd = (roost.phi(xp) - roost.phi(xm)) / (2.0 * eps);
            assert!((fd - g[axis]).abs() < 1e-6, "axis {axis}: fd {fd} vs {g:?}");
        }
        assert_eq!(roost.grad([0.0, 0.0]), [0.0, 0.0]);
    }
}
