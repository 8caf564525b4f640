//! Stable float formatting for written artifacts.

/// Significant digits kept for computed outputs.
pub const SIG_DIGITS: usize = 9;

/// Rounds to `digits` significant decimal digits. Non-finite values pass
/// through unchanged.
pub fn round_sig(v: f64, digits: usize) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), v);
    s.parse().unwrap_or(v)
}

/// Shortest decimal that reads back as `round_sig(v, SIG_DIGITS)`.
pub fn num(v: f64) -> String {
    let r = round_sig(v, SIG_DIGITS);
    if r == 0.0 {
        // Avoid "-0".
        return "0".into();
    }
    format!("{r}")
}
