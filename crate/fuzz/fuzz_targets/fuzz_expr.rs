//! Expression grammar: parsing never panics on any UTF-8 input, accepted
//! expressions evaluate totally (NaN/inf allowed, no panics), and the
//! stored source re-parses.

#![no_main]

use libfuzzer_sys::fuzz_target;
use odg::expr::Expr;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(expr) = Expr::parse(src) {
        for x in [&[][..], &[0.3, -0.7], &[1e300, -1e300], &[f64::NAN, 0.0]] {
            let _ = expr.eval(x);
        }
        Expr::parse(expr.source()).expect("stored source must re-parse");
    }
});
