//! Float formatting shared by the text interchange formats.

/// Formats `x` with `digits` significant digits, `%g`-style: fixed notation
/// for moderate exponents, scientific otherwise, trailing zeros trimmed.
pub(crate) fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (0.9999996 -> 1.00000).
    let sci = format!("{:.*e}", digits - 1, x);
    let (mant, e) = sci.split_once('e').expect("scientific format");
    let e: i32 = e.parse().expect("exponent");
    let exp = exp.max(e);
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}", trim(mant), e)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
