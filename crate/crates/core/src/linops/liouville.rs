//! Schrödinger form of `L₁` after the Liouville change of variables.

use crate::error::{Error, Result};

fn sech2(z: f64) -> f64 {
    let s = 1.0 / z.cosh();
    s * s
}

/// `V = -3ψ + 3ψ''/(4(c - ψ)) + 5ψ'²/(16(c - ψ)²)` with `ψ = (c - 2ω)sech²(z sqrt(c - 2ω)/2)`.
pub fn liouville_transform_potential(c: f64, omega: f64, zgrid: &[f64]) -> Result<Vec<f64>> {
    if !(c > 2.0 * omega) {
        return Err(Error::Parameter(format!("c ≤ 2ω (c = {c}, ω = {omega})")));
    }
    let amp = c - 2.0 * omega;
    let b = 0.5 * amp.sqrt();
    Ok(zgrid
        .iter()
        .map(|&z| {
            let s = sech2(b * z);
            let t = (b * z).tanh();
            let psi = amp * s;
            let dpsi = -2.0 * amp * b * s * t;
            let d2psi = amp * b * b * (4.0 * s - 6.0 * s * s);
            let gap = c - psi;
            -3.0 * psi + 3.0 * d2psi / (4.0 * gap) + 5.0 * dpsi * dpsi / (16.0 * gap * gap)
        })
        .collect())
}

/// Rational form of the potential for `c = 6, ω = 1`:
/// `(-90S + 110S² - 35S³)/(3 - 2S)²`, `S = sech² z`.
pub fn liouville_potential_closed_form(z: f64) -> f64 {
    let s = sech2(z);
    (-90.0 * s + 110.0 * s * s - 35.0 * s * s * s) / (3.0 - 2.0 * s).powi(2)
}

/// Reference rational form `(90S - 116S² + 44S³)/(3 - 2S)²` for `c = 6, ω = 1`.
pub fn liouville_potential_reference(z: f64) -> f64 {
    let s = sech2(z);
    (90.0 * s - 116.0 * s * s + 44.0 * s * s * s) / (3.0 - 2.0 * s).powi(2)
}
