//! Special functions. `erf`/`erfc` come from `libm`, which is accurate to a
//! few ulp; `statrs` supplies the gamma function.

pub use libm::{erf, erfc};
pub use statrs::function::gamma::gamma;

/// Scaled complementary error function `exp(x^2) * erfc(x)` for `x >= 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 25.0 {
        erfc(x) * (x * x).exp()
    } else {
        // asymptotic series; relative truncation error below 1e-11 for x >= 25
        let inv2 = 1.0 / (2.0 * x * x);
        let series = 1.0 - inv2 + 3.0 * inv2 * inv2 - 15.0 * inv2.powi(3) + 105.0 * inv2.powi(4);
        series / (x * std::f64::consts::PI.sqrt())
    }
}
