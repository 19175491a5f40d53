/// Relative distance from an exact .5 tie treated as a tie. Absorbs the
/// representation error of values like `0.4625 * 100`.
const TIE_EPS: f64 = 1e-9;

/// Rounds half to even at `decimals` places.
pub fn round_half_even(x: f64, decimals: u32) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    let floor = scaled.floor();
    let frac = scaled - floor;
    let tol = TIE_EPS * scaled.abs().max(1.0);
    let rounded = if (frac - 0.5).abs() <= tol {
        if floor % 2.0 == 0.0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        scaled.round()
    };
    rounded / scale
}

/// A rate in [0, 1] as a percentage with one decimal.
pub fn format_pct(rate: f64) -> String {
    let v = round_half_even(rate * 100.0, 1);
    // avoid "-0.0"
    format!("{:.1}", if v == 0.0 { 0.0 } else { v })
}

/// Seconds rounded half-even to a whole number.
pub fn format_seconds(seconds: f64) -> String {
    format!("{:.0}", round_half_even(seconds, 0))
}
