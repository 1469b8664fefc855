//! Exponentially fitted face fluxes.
//!
//! For `J = D c' + z c M phi'` across a face of width `h` between nodes `i`
//! (left) and `j` (right), with `psi = z (M/D)(phi_j - phi_i)`:
//!
//! `J = (D/h) [B(-psi) c_j - B(psi) c_i]`,  `B(x) = x / (e^x - 1)`.
//!
//! The flux vanishes exactly when `c_j / c_i = exp(-psi)`, i.e. on discrete
//! Boltzmann profiles.

/// Bernoulli function `x / (e^x - 1)`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - 0.5 * x + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// Derivative of [`bernoulli`].
pub fn bernoulli_prime(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        -0.5 + x / 6.0
    } else if x > 700.0 {
        0.0
    } else if x < -700.0 {
        -1.0
    } else {
        let e = x.exp_m1();
        (e - x * (e + 1.0)) / (e * e)
    }
}

/// `(x/2) coth(x/2) = B(x) + x/2`, even in `x`.
pub fn symmetric_bernoulli(x: f64) -> f64 {
    bernoulli(x) + 0.5 * x
}

/// Transport coefficients of one grid axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisCoeff {
    pub d: f64,
    pub m: f64,
}

/// Diffusivities at or below this are treated as zero.
pub const BLOCKED: f64 = 1e-12;

impl AxisCoeff {
    pub fn is_blocked(&self) -> bool {
        self.d <= BLOCKED && self.m <= BLOCKED
    }
}

/// Linearized face flux `J = a_j c_j - a_i c_i` for species charge `z`.
///
/// Returns `(a_i, a_j)` such that `J = a_j c_j - a_i c_i`. `dphi = phi_j - phi_i`.
pub fn face_weights(k: AxisCoeff, z: f64, h: f64, dphi: f64) -> (f64, f64) {
    if k.is_blocked() {
        return (0.0, 0.0);
    }
    if k.d <= BLOCKED {
        // pure drift, upwinded
        let v = z * k.m * dphi / h;
        return if v > 0.0 { (0.0, v) } else { (-v, 0.0) };
    }
    let psi = z * k.m / k.d * dphi;
    let g = k.d / h;
    (g * bernoulli(psi), g * bernoulli(-psi))
}

/// Face flux and its partial derivatives `(J, dJ/dc_i, dJ/dc_j, dJ/dphi_i, dJ/dphi_j)`.
pub fn face_flux_jacobian(
    k: AxisCoeff,
    z: f64,
    h: f64,
    c_i: f64,
    c_j: f64,
    dphi: f64,
) -> (f64, f64, f64, f64, f64) {
    if k.is_blocked() {
        return (0.0, 0.0, 0.0, 0.0, 0.0);
    }
    if k.d <= BLOCKED {
        let v = z * k.m * dphi / h;
        let dv = z * k.m / h;
        return if v > 0.0 {
            (v * c_j, 0.0, v, -dv * c_j, dv * c_j)
        } else {
            (v * c_i, v, 0.0, -dv * c_i, dv * c_i)
        };
    }
    let r = z * k.m / k.d;
    let psi = r * dphi;
    let g = k.d / h;
    let j = g * (bernoulli(-psi) * c_j - bernoulli(psi) * c_i);
    let dpsi = g * (-bernoulli_prime(-psi) * c_j - bernoulli_prime(psi) * c_i) * r;
    (j, -g * bernoulli(psi), g * bernoulli(-psi), -dpsi, dpsi)
}

/// Species face flux in drift-diffusion form.
pub fn species_flux(k: AxisCoeff, z: f64, h: f64, c_i: f64, c_j: f64, phi_i: f64, phi_j: f64) -> f64 {
    let (a_i, a_j) = face_weights(k, z, h, phi_j - phi_i);
    a_j * c_j - a_i * c_i
}

/// The same face flux written through the Slotboom variable `u = c e^{z phi}`
/// (requires `D = M`): `J = (D/h) B(psi) e^{-z phi_i} (u_j - u_i)`.
pub fn slotboom_flux(d: f64, z: f64, h: f64, c_i: f64, c_j: f64, phi_i: f64, phi_j: f64) -> f64 {
    let u_i = c_i * (z * phi_i).exp();
    let u_j = c_j * (z * phi_j).exp();
    let psi = z * (phi_j - phi_i);
    d / h * bernoulli(psi) * (-z * phi_i).exp() * (u_j - u_i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_is_smooth_across_the_switch() {
        for x in [-1e-4, 1e-4] {
            let lo = x * (1.0 - 1e-9);
            let hi = x * (1.0 + 1e-9);
            assert!((bernoulli(lo) - bernoulli(hi)).abs() < 1e-12);
            assert!((bernoulli_prime(lo) - bernoulli_prime(hi)).abs() < 1e-8);
        }
        assert_eq!(bernoulli(0.0), 1.0);
        assert!((bernoulli(-3.0) - bernoulli(3.0) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for x in [-20.0, -2.0, -0.01, 0.3, 5.0, 40.0] {
            let e = 1e-6;
            let fd = (bernoulli(x + e) - bernoulli(x - e)) / (2.0 * e);
            assert!((fd - bernoulli_prime(x)).abs() < 1e-7, "{x}");
        }
    }

    #[test]
    fn flux_vanishes_on_boltzmann_profile() {
        let k = AxisCoeff { d: 0.4, m: 0.4 };
        let (pi, pj) = (0.3f64, -1.1f64);
        let c_i = 2.0;
        let c_j = c_i * (-(pj - pi)).exp();
        assert!(species_flux(k, 1.0, 0.1, c_i, c_j, pi, pj).abs() < 1e-13);
    }

    #[test]
    fn jacobian_matches_difference_quotient() {
        let k = AxisCoeff { d: 0.5, m: 0.3 };
        let (ci, cj, pi, pj, h) = (1.3, 0.7, 0.2, -0.9, 0.05);
        for z in [1.0, -1.0] {
            let (_, di, dj, dpi, dpj) = face_flux_jacobian(k, z, h, ci, cj, pj - pi);
            let f = |ci: f64, cj: f64, pi: f64, pj: f64| species_flux(k, z, h, ci, cj, pi, pj);
            let e = 1e-7;
            assert!(((f(ci + e, cj, pi, pj) - f(ci - e, cj, pi, pj)) / (2.0 * e) - di).abs() < 1e-6);
            assert!(((f(ci, cj + e, pi, pj) - f(ci, cj - e, pi, pj)) / (2.0 * e) - dj).abs() < 1e-6);
            assert!(((f(ci, cj, pi + e, pj) - f(ci, cj, pi - e, pj)) / (2.0 * e) - dpi).abs() < 1e-6);
            assert!(((f(ci, cj, pi, pj + e) - f(ci, cj, pi, pj - e)) / (2.0 * e) - dpj).abs() < 1e-6);
        }
    }

    #[test]
    fn pure_drift_is_upwind() {
        let k = AxisCoeff { d: 0.0, m: 1.0 };
        // positive species, potential rising to the right: J = M phi' c_j
        assert_eq!(species_flux(k, 1.0, 1.0, 2.0, 3.0, 0.0, 1.0), 3.0);
        assert_eq!(species_flux(k, 1.0, 1.0, 2.0, 3.0, 1.0, 0.0), -2.0);
        let blocked = AxisCoeff { d: 0.0, m: 0.0 };
        assert_eq!(species_flux(blocked, 1.0, 1.0, 2.0, 3.0, 0.0, 1.0), 0.0);
    }
}
