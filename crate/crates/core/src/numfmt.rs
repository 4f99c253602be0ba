//! Shortest `%.Ng`-style rendering of reals, used for every numeric cell the
//! harness writes.

/// Formats `x` with `digits` significant digits following C's `%g` rules:
/// scientific notation when the decimal exponent is below -4 or at least
/// `digits`, trailing zeros removed. Negative zero renders as `0`.
pub fn format_sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

/// Ten significant digits, the precision of `scores.csv`.
pub fn g10(x: f64) -> String {
    format_sig(x, 10)
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        // Expected strings produced by Python's format(x, ".10g").
        let table: &[(f64, &str)] = &[
            (1.0, "1"),
            (0.5, "0.5"),
            (2.0 / 3.0, "0.6666666667"),
            (1e-05, "1e-05"),
            (1.23456789012e-05, "1.23456789e-05"),
            (0.0001, "0.0001"),
            (0.00012345678901, "0.000123456789"),
            (123456789012.0, "1.23456789e+11"),
            (1234567890.0, "1234567890"),
            (9999999999.5, "1e+10"),
            (0.99999999995, "0.9999999999"),
            (-0.8, "-0.8"),
            (-2.0 / 3.0, "-0.6666666667"),
            (0.06666666667, "0.06666666667"),
            (1e21, "1e+21"),
            (5e-324, "4.940656458e-324"),
            (0.1 + 0.2, "0.3"),
            (12345.678901234, "12345.6789"),
        ];
        for &(x, want) in table {
            assert_eq!(g10(x), want, "formatting {x:e}");
        }
    }

    #[test]
    fn zero_and_specials() {
        assert_eq!(g10(0.0), "0");
        assert_eq!(g10(-0.0), "0");
        assert_eq!(g10(f64::NAN), "nan");
        assert_eq!(format_sig(0.123456, 2), "0.12");
    }

    #[test]
    fn round_trips_to_ten_digits() {
        for x in [0.1234567890123, -0.987654321, 0.5000000001] {
            let back: f64 = g10(x).parse().unwrap();
            assert!((back - x).abs() <= x.abs() * 1e-9);
        }
    }
}
