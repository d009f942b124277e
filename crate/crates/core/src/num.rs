//! Small numeric helpers shared by the flow models.

/// Floor of a product that is mathematically rational, guarded against
/// representation error.  `0.3 * 10.0` evaluates to `2.999…` in binary
/// floating point; the nudge keeps such should-be-exact values from rounding
/// down one count too far.  The nudge is far below the 1e-4 quantum used for
/// all ratio parameters, so it never crosses a genuine fractional boundary.
pub(crate) const FLOOR_NUDGE: f64 = 1e-9;

pub fn floor_count(x: f64) -> i64 {
    (x + FLOOR_NUDGE).floor() as i64
}

/// Quantise a ratio to the 1e-4 grid used throughout the crate.  Generated
/// scenarios only ever contain ratios on this grid, which keeps serialised
/// files short and floor computations away from boundaries.
pub fn quantize_ratio(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}
