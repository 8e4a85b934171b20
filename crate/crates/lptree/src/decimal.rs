//! Decimal rendering of exact rationals for human-facing output. The exact
//! numerator/denominator always travels alongside; this is display only.

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

fn pow10(e: u32) -> BigUint {
    BigUint::from(10u32).pow(e)
}

/// Is `num/den >= 10^e`?
fn ge_pow10(num: &BigUint, den: &BigUint, e: i64) -> bool {
    if e >= 0 {
        *num >= den * pow10(e as u32)
    } else {
        num * pow10((-e) as u32) >= *den
    }
}

/// Rounds to `sig` significant digits and renders plainly when the exponent is
/// moderate, in scientific notation otherwise. Trailing zeros are trimmed, so
/// exact integers come out bare (`2`, not `2.000…`).
pub fn decimal_string(r: &BigRational, sig: usize) -> String {
    assert!(sig >= 1);
    if r.is_zero() {
        return "0".to_owned();
    }
    let sign = if r.is_negative() { "-" } else { "" };
    let num = r.numer().magnitude();
    let den = r.denom().magnitude();
    // Exponent e with 10^e <= |r| < 10^(e+1); the digit-length guess is off by
    // at most one, so the correction loops run at most once each.
    let mut e = num.to_string().len() as i64 - den.to_string().len() as i64;
    while !ge_pow10(num, den, e) {
        e -= 1;
    }
    while ge_pow10(num, den, e + 1) {
        e += 1;
    }
    // Round |r| * 10^(sig-1-e) to an integer: sig significant digits.
    let shift = sig as i64 - 1 - e;
    let (scaled_num, scaled_den) = if shift >= 0 {
        (num * pow10(shift as u32), den.clone())
    } else {
        (num.clone(), den * pow10((-shift) as u32))
    };
    let (mut q, rem) = scaled_num.div_rem(&scaled_den);
    if &rem * BigUint::from(2u32) >= scaled_den {
        q += BigUint::from(1u32);
    }
    let mut digits = q.to_string();
    if digits.len() > sig {
        // Rounding carried into a new leading digit (e.g. 999.. -> 1000..).
        digits.truncate(sig);
        e += 1;
    }
    if e < -4 || e >= 18 {
        let head = &digits[..1];
        let tail = digits[1..].trim_end_matches('0');
        if tail.is_empty() {
            format!("{sign}{head}e{e}")
        } else {
            format!("{sign}{head}.{tail}e{e}")
        }
    } else if e >= 0 {
        let int_len = e as usize + 1;
        if int_len >= digits.len() {
            let zeros = "0".repeat(int_len - digits.len());
            format!("{sign}{digits}{zeros}")
        } else {
            let frac = digits[int_len..].trim_end_matches('0');
            if frac.is_empty() {
                format!("{sign}{}", &digits[..int_len])
            } else {
                format!("{sign}{}.{frac}", &digits[..int_len])
            }
        }
    } else {
        let zeros = "0".repeat((-e - 1) as usize);
        let frac = digits.trim_end_matches('0');
        format!("{sign}0.{zeros}{frac}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn renders_common_values() {
        assert_eq!(decimal_string(&ratio(2, 1), 12), "2");
        assert_eq!(decimal_string(&ratio(21, 10), 12), "2.1");
        assert_eq!(decimal_string(&ratio(1, 40), 12), "0.025");
        assert_eq!(decimal_string(&ratio(1, 3), 12), "0.333333333333");
        assert_eq!(decimal_string(&ratio(2, 3), 12), "0.666666666667");
        assert_eq!(decimal_string(&ratio(-21, 10), 12), "-2.1");
        assert_eq!(decimal_string(&ratio(0, 1), 12), "0");
        assert_eq!(decimal_string(&ratio(1000, 1), 12), "1000");
    }

    #[test]
    fn switches_to_scientific_for_extreme_magnitudes() {
        let big = BigRational::from_integer(BigInt::from(2).pow(100));
        assert_eq!(decimal_string(&big, 12), "1.26765060023e30");
        assert_eq!(decimal_string(&ratio(1, 10_000_000), 12), "1e-7");
        assert_eq!(decimal_string(&ratio(3, 20_000_000), 12), "1.5e-7");
        // e = 18 boundary goes scientific; e = 17 stays plain.
        let e18 = BigRational::from_integer(BigInt::from(10).pow(18));
        assert_eq!(decimal_string(&e18, 12), "1e18");
        let e17 = BigRational::from_integer(BigInt::from(10).pow(17));
        assert_eq!(decimal_string(&e17, 12), "100000000000000000");
    }

    #[test]
    fn rounds_half_away_from_zero_at_the_last_digit() {
        // 1/7 = 0.142857142857142857... -> 0.142857142857
        assert_eq!(decimal_string(&ratio(1, 7), 12), "0.142857142857");
        assert_eq!(decimal_string(&ratio(1, 7), 3), "0.143");
        assert_eq!(decimal_string(&ratio(2, 3), 3), "0.667");
        // Carry across the leading digit: 0.9999 at 3 digits -> 1.
        assert_eq!(decimal_string(&ratio(9999, 10000), 3), "1");
        assert_eq!(decimal_string(&ratio(15, 10), 1), "2");
    }
}
