//! Fixed numeric formatting shared by all CSV writers.

/// Six decimals; never emits a negative zero.
pub(crate) fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// Twelve significant digits in scientific notation.
pub(crate) fn sig12(x: f64) -> String {
    format!("{:.11e}", x + 0.0)
}
