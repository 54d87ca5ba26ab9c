//! Stable number formatting for file exports.

/// Fixed six-decimal formatting used by the booking history CSV.
pub fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    // "-0.000000" and "0.000000" must not differ between runs
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Formats `x` with `digits` significant digits in plain decimal notation.
pub fn sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// Rounds to `digits` significant digits, for JSON payloads.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    sig(x, digits).parse().unwrap_or(x)
}

/// Nine significant digits, the precision of policy and solver exports.
pub fn sig9(x: f64) -> String {
    sig(x, 9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed6_formats() {
        assert_eq!(fixed6(1.0), "1.000000");
        assert_eq!(fixed6(-0.0000001), "0.000000");
        assert_eq!(fixed6(0.1234567), "0.123457");
    }

    #[test]
    fn sig_digits() {
        assert_eq!(sig(0.916666666666, 9), "0.916666667");
        assert_eq!(sig(12345.678901234, 9), "12345.6789");
        assert_eq!(sig(100.0, 9), "100");
        assert_eq!(sig(-2.5e-7, 3), "-0.00000025");
        assert_eq!(sig(0.0, 9), "0");
        assert_eq!(round_sig(1.0 / 3.0, 9), 0.333333333);
    }
}
