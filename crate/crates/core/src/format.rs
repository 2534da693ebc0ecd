//! Decimal formatting with a fixed number of significant digits.

/// Formats `x` with `digits` significant digits, in the style of C's `%.{digits}g`.
///
/// Trailing zeros are removed. The output parses back with `str::parse::<f64>`.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap_or((sci.as_str(), "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_values() {
        assert_eq!(fmt_sig(0.6625, 17), "0.66249999999999998");
        assert_eq!(fmt_sig(0.6625, 15), "0.6625");
        assert_eq!(fmt_sig(10.0, 15), "10");
        assert_eq!(fmt_sig(1.0e-7, 15), "1e-7");
        assert_eq!(fmt_sig(123456.5, 3), "1.23e5");
        assert_eq!(fmt_sig(0.0, 15), "0");
    }

    proptest! {
        #[test]
        fn seventeen_digits_round_trip(x in proptest::num::f64::NORMAL) {
            let s = fmt_sig(x, 17);
            prop_assert_eq!(s.parse::<f64>().unwrap(), x);
        }

        #[test]
        fn fifteen_digit_text_is_stable(x in 1e-3f64..1e7) {
            let s = fmt_sig(x, 15);
            let again = fmt_sig(s.parse::<f64>().unwrap(), 15);
            prop_assert_eq!(s, again);
        }
    }
}
