//! Complete elliptic integral `K`, the modulus function `μ` and its inverse,
//! and the closed-form trapezoid modulus `M(h)`.
//!
//! Everything here goes through the arithmetic–geometric mean. The
//! complementary modulus is always carried alongside `r` so that values of `r`
//! within rounding of 1 keep full relative accuracy in `r'`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, LN_2, PI};

use crate::error::SpecialFunctionError;

/// A modulus `r ∈ (0, 1)` together with `r' = √(1 − r²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticParams {
    pub r: f64,
    pub r_prime: f64,
}

impl EllipticParams {
    pub fn new(r: f64) -> Result<Self, SpecialFunctionError> {
        if !(r > 0.0 && r < 1.0) {
            return Err(SpecialFunctionError::Domain {
                arg: r,
                domain: "(0, 1)",
            });
        }
        Ok(Self {
            r,
            r_prime: complement(r),
        })
    }

    /// Both members given; the caller vouches for `r² + r'² = 1`.
    fn from_pair(r: f64, r_prime: f64) -> Self {
        Self { r, r_prime }
    }

    pub fn swapped(self) -> Self {
        Self {
            r: self.r_prime,
            r_prime: self.r,
        }
    }
}

fn complement(r: f64) -> f64 {
    ((1.0 - r) * (1.0 + r)).sqrt()
}

/// Arithmetic–geometric mean of two nonnegative numbers.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        if next == a {
            break;
        }
        a = next;
    }
    0.5 * (a + b)
}

/// `K(r) = ∫₀¹ dx / √((1−x²)(1−r²x²))` for `0 ≤ r < 1`.
pub fn ellip_k(r: f64) -> Result<f64, SpecialFunctionError> {
    if !(0.0..1.0).contains(&r) {
        return Err(SpecialFunctionError::Domain {
            arg: r,
            domain: "[0, 1)",
        });
    }
    Ok(k_from_complement(complement(r)))
}

/// `K(r)` given the complementary modulus `r'` directly.
pub fn k_from_complement(r_prime: f64) -> f64 {
    FRAC_PI_2 / agm(1.0, r_prime)
}

/// `μ(r) = (π/2)·K(r')/K(r)`.
pub fn mu(r: f64) -> Result<f64, SpecialFunctionError> {
    Ok(mu_params(EllipticParams::new(r)?))
}

pub fn mu_params(p: EllipticParams) -> f64 {
    FRAC_PI_2 * agm(1.0, p.r_prime) / agm(1.0, p.r)
}

/// Inverse of [`mu`]. Values of `y` below about 0.25 give an `r` that rounds
/// to 1; use [`mu_inv_params`] when `r'` is needed.
pub fn mu_inv(y: f64) -> Result<f64, SpecialFunctionError> {
    mu_inv_params(y).map(|p| p.r)
}

/// Inverse of `μ`, returning `r` and `r'` both to full relative accuracy.
pub fn mu_inv_params(y: f64) -> Result<EllipticParams, SpecialFunctionError> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(SpecialFunctionError::Domain {
            arg: y,
            domain: "(0, ∞)",
        });
    }
    if y >= FRAC_PI_2 {
        let r = mu_inv_small(y)?;
        Ok(EllipticParams::from_pair(r, complement(r)))
    } else {
        // μ(r)·μ(r') = π²/4
        let s = mu_inv_small(PI * PI / (4.0 * y))?;
        Ok(EllipticParams::from_pair(complement(s), s))
    }
}

/// Root of `μ(r) = y` on `(0, 1/√2]`, for `y ≥ π/2`.
///
/// Bisection in `ln r` (μ is close to `ln(4/r)` there) and a Newton polish
/// using `dμ/d ln r = −π² / (4 r'² K(r)²)`.
fn mu_inv_small(y: f64) -> Result<f64, SpecialFunctionError> {
    let f = |ln_r: f64| {
        let r = ln_r.exp();
        mu_params(EllipticParams::from_pair(r, complement(r))) - y
    };
    let mut lo = -700.0_f64;
    let mut hi = FRAC_1_SQRT_2.ln();
    if f(lo) < 0.0 {
        return Err(SpecialFunctionError::Domain {
            arg: y,
            domain: "(0, 700]",
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut ln_r = 0.5 * (lo + hi);
    for _ in 0..3 {
        let r = ln_r.exp();
        let rp = complement(r);
        let k = k_from_complement(rp);
        let slope = -PI * PI / (4.0 * rp * rp * k * k);
        let next = ln_r - f(ln_r) / slope;
        if !next.is_finite() || next == ln_r {
            break;
        }
        ln_r = next;
    }
    Ok(ln_r.exp())
}

/// Conformal modulus of the trapezoid `(1+hi, (h−1)i, 0, 1)` for `h > 1`,
/// in closed form via elliptic integrals.
pub fn bowman_modulus(h: f64) -> Result<f64, SpecialFunctionError> {
    if !(h > 1.0 && h.is_finite()) {
        return Err(SpecialFunctionError::Domain {
            arg: h,
            domain: "(1, ∞)",
        });
    }
    let c = 2.0 * h - 1.0;
    let t1 = mu_inv_params(PI / (2.0 * c))?;
    let t2 = mu_inv_params(PI * c / 2.0)?;
    let sum = t1.r + t2.r;
    let s = (t1.r - t2.r) / sum;
    // 1 − s² = 4·t1·t2 / (t1 + t2)², exact in form, no cancellation
    let one_minus_s2 = 4.0 * t1.r * t2.r / (sum * sum);
    let r = s * s;
    let r_prime = (one_minus_s2 * (1.0 + r)).sqrt();
    // K(r)/K(r') = agm(1, r)/agm(1, r')
    Ok(agm(1.0, r) / agm(1.0, r_prime))
}

/// Large-`h` approximation `h − 1/2 − log 2/π`; the remainder is `O(e^{−πh})`.
pub fn asymptotic_modulus(h: f64) -> f64 {
    h - 0.5 - LN_2 / PI
}
