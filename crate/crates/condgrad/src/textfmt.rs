//! Plain-text float formatting for instance files, factor exports, and CSV.
//!
//! Mirrors C's `%.Pg`: P significant digits, trailing zeros stripped, and a
//! switch to exponential notation when the decimal exponent falls outside
//! `[-4, P)`. Seventeen significant digits round-trip any finite `f64`.

/// Formats `x` like C's `%.*g` with `prec` significant digits.
pub fn format_g(x: f64, prec: usize) -> String {
    let prec = prec.max(1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    // Render in exponential form first; its exponent already reflects the
    // rounding to `prec` digits (e.g. 9.99 at one digit becomes 1e1).
    let exp_form = format!("{:.*e}", prec - 1, x);
    let (mantissa, exp_str) = exp_form
        .split_once('e')
        .expect("exponential format always contains 'e'");
    let exponent: i32 = exp_str.parse().expect("exponent parses");

    if exponent < -4 || exponent >= prec as i32 {
        let mantissa = strip_trailing_zeros(mantissa);
        format!("{mantissa}e{}{:02}", if exponent < 0 { '-' } else { '+' }, exponent.abs())
    } else {
        let frac_digits = (prec as i32 - 1 - exponent).max(0) as usize;
        let fixed = format!("{:.*}", frac_digits, x);
        strip_trailing_zeros(&fixed).to_string()
    }
}

/// Shorthand for the 17-digit form used by on-disk instance and factor files.
pub fn format_g17(x: f64) -> String {
    format_g(x, 17)
}

/// Shorthand for the 12-digit form used by metric CSV files.
pub fn format_g12(x: f64) -> String {
    format_g(x, 12)
}

fn strip_trailing_zeros(s: &str) -> &str {
    if !s.contains('.') {
        return s;
    }
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.')
}
