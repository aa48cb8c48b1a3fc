//! Number rendering shared by the CSV and JSON writers.

/// Significant digits used for every probability written out.
pub const SIG_DIGITS: usize = 12;

/// Render `x` like C's `%.12g`: 12 significant digits, trailing zeros
/// dropped, scientific notation outside `[1e-5, 1e12)`.
pub fn sig12(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= SIG_DIGITS as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

/// `x` rounded to 12 significant digits, for JSON output.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    sig12(x).parse().expect("sig12 output parses")
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
