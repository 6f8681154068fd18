use std::f64::consts::PI;

use holocyte_core::field::gradient;
use holocyte_core::unwrap::{unwrap_phase, wrap, wrap_field};
use holocyte_core::{Grid, RealField};
use proptest::prelude::*;

fn max_dev_after_offset(a: &RealField, b: &RealField) -> f64 {
    let n = a.as_slice().len() as f64;
    let off = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x - y)
        .sum::<f64>()
        / n;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y - off).abs())
        .fold(0.0, f64::max)
}

#[test]
fn steep_ramp_round_trip() {
    let truth = RealField::from_fn(Grid::square(256), |_, c| 0.3 * c as f64);
    let out = unwrap_phase(&wrap_field(&truth)).unwrap();
    let err = max_dev_after_offset(out.values(), &truth);
    assert!(err < 1e-6, "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Sums of a few plane waves and a bowl, scaled so per-pixel slopes stay
    // below π: the wrapped differences then equal the true ones.
    #[test]
    fn itoh_exactness(
        ax in -1.2f64..1.2, ay in -1.2f64..1.2,
        amp in 0.0f64..20.0, fx in 0.005f64..0.05, fy in 0.005f64..0.05,
        bowl in -0.002f64..0.002,
    ) {
        let n = 64;
        let truth = RealField::from_fn(Grid::new(n, n + 7, 1.0).unwrap(), |r, c| {
            let (x, y) = (c as f64, r as f64);
            ax * x + ay * y
                + amp * (2.0 * PI * (fx * x + fy * y)).sin()
                + bowl * ((x - 30.0).powi(2) + (y - 35.0).powi(2))
        });
        let (gx, gy) = gradient(&truth);
        let steepest = gx.as_slice().iter().chain(gy.as_slice()).fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assume!(steepest < PI * 0.95);
        let wrapped = wrap_field(&truth);
        let out = unwrap_phase(&wrapped).unwrap();
        prop_assert!(max_dev_after_offset(out.values(), &truth) < 1e-6);

        // Congruence: re-wrapping the output gives back the input up to the
        // constant offset.
        let shift = wrap(out.values().as_slice()[0] - wrapped.values().as_slice()[0]);
        for (u, w) in out.values().as_slice().iter().zip(wrapped.values().as_slice()) {
            prop_assert!(wrap(u - w - shift).abs() < 1e-6);
        }
    }
}
