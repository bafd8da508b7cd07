//! Tabulated N-function constructor: bytes become (t, phi) samples; the
//! constructor either rejects them or yields a function whose evaluation
//! path (value, derivative, inverses, conjugate) never panics and stays
//! monotone.

#![no_main]

use libfuzzer_sys::fuzz_target;
use odg::nfunc::NFunction;

fuzz_target!(|data: &[u8]| {
    let mut points = Vec::new();
    for chunk in data.chunks_exact(16) {
        let t = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let phi = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        points.push((t, phi));
        if points.len() >= 64 {
            break;
        }
    }
    let Ok(phi) = NFunction::tabulated(&points) else { return };
    for t in [1e-6, 0.5, 1.0, 3.0, 1e6] {
        let _ = phi.deriv(t);
        let _ = phi.inv(t);
        let _ = phi.deriv_inv(t);
        let _ = phi.conjugate(t);
    }
    if let (Ok(a), Ok(b)) = (phi.eval(1.0), phi.eval(2.0)) {
        if a.is_finite() && b.is_finite() {
            assert!(a <= b * (1.0 + 1e-9), "evaluation lost monotonicity: {a} > {b}");
        }
    }
});
