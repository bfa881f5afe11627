//! Small numeric helpers shared across modules.

use num_complex::Complex64;

pub const PI: f64 = core::f64::consts::PI;
pub const TAU: f64 = core::f64::consts::TAU;

/// `e(x) = exp(2 pi i x)`.
#[inline]
pub fn e(turns: f64) -> Complex64 {
    let (s, c) = libm::sincos(TAU * turns);
    Complex64::new(c, s)
}

/// Modulus of a complex number.
#[inline]
pub fn abs(z: Complex64) -> f64 {
    libm::hypot(z.re, z.im)
}

/// `z` divided by its modulus, or `1` when `z == 0`.
#[inline]
pub fn phase(z: Complex64) -> Complex64 {
    let r = abs(z);
    if r == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z / r
    }
}

/// Floor of the square root of `n`, exact for every `u64`.
pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut r = libm::sqrt(n as f64) as u64;
    while r.checked_mul(r).is_none_or(|sq| sq > n) {
        r -= 1;
    }
    while (r + 1).checked_mul(r + 1).is_some_and(|sq| sq <= n) {
        r += 1;
    }
    r
}

/// Floor of the `b`-th root of `n` for a positive integer `b`, exact.
pub fn iroot(n: u64, b: u32) -> u64 {
    assert!(b >= 1, "root index must be positive");
    if b == 1 || n < 2 {
        return n;
    }
    let pow_le = |r: u64| -> bool {
        let mut acc: u128 = 1;
        for _ in 0..b {
            acc *= r as u128;
            if acc > n as u128 {
                return false;
            }
        }
        true
    };
    let mut r = libm::pow(n as f64, 1.0 / b as f64) as u64;
    while r > 0 && !pow_le(r) {
        r -= 1;
    }
    while pow_le(r + 1) {
        r += 1;
    }
    r
}

/// Floor of `n^beta` for real `beta > 0`, corrected so that exact integer
/// powers are not lost to rounding.
pub fn floor_pow(n: u64, beta: f64) -> u64 {
    let approx = libm::pow(n as f64, beta);
    let r = libm::floor(approx);
    let up = r + 1.0;
    if libm::fabs(libm::pow(up, 1.0 / beta) - n as f64) <= 1e-9 * n as f64 {
        up as u64
    } else {
        r as u64
    }
}

/// Greatest common divisor.
pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// `x^p` for `x >= 0`, with `0^p = 0` for `p > 0`.
#[inline]
pub fn pow(x: f64, p: f64) -> f64 {
    libm::pow(x, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_roots_are_exact() {
        for n in 0..5000u64 {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n);
            let q = iroot(n, 4);
            assert!(q.pow(4) <= n && (q + 1).pow(4) > n);
        }
        assert_eq!(isqrt(u64::MAX), 4294967295);
        assert_eq!(iroot(1 << 60, 3), 1 << 20);
    }

    #[test]
    fn floor_pow_hits_exact_powers() {
        assert_eq!(floor_pow(1024, 0.5), 32);
        assert_eq!(floor_pow(4096, 1.0 / 3.0), 16);
        assert_eq!(floor_pow(1000, 1.0 / 3.0), 10);
        assert_eq!(floor_pow(999, 1.0 / 3.0), 9);
    }
}
