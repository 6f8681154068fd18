use std::time::Instant;

use holocyte_core::holo::{
    make_phantom, make_reference, synthesize_hologram, OpticalConfig, PhantomSpec, PhaseProfile,
};
use holocyte_core::metrics::{masked_rmse, radial_edge_width};
use holocyte_core::recon::{fourier_reconstruct, optimize_reconstruct, wrapped_phase, ReconConfig};
use holocyte_core::unwrap::unwrap_phase;
use holocyte_core::{ComplexField, RealField};

fn unwrapped(o: &ComplexField) -> RealField {
    let (w, _) = wrapped_phase(o);
    unwrap_phase(&w).unwrap().into_values()
}

#[test]
fn dome_phantom_round_trip() {
    let cfg = OpticalConfig::default();
    let spec = PhantomSpec {
        nucleus_radius: 40.0,
        peak_phase: 2.5,
        ..PhantomSpec::default()
    };
    let truth = make_phantom(&spec, 3, &cfg).unwrap();
    let beam = cfg.reference();
    let h =
        synthesize_hologram(&truth.object_field, &make_reference(cfg.grid, beam), 0.0, 0).unwrap();

    let start = Instant::now();
    let rec = optimize_reconstruct(&h, &beam, &ReconConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let phase = unwrapped(&rec.field);
    let rmse = masked_rmse(&phase, truth.phase_truth.values(), truth.mask.bits()).unwrap();
    eprintln!(
        "dome: rmse {rmse:.4} rad, {} iterations, {:.2?}",
        rec.trace.len() - 1,
        elapsed
    );
    assert!(rmse < 0.05, "{rmse}");
    for pair in rec.trace.windows(2) {
        assert!(pair[1].cost.total <= pair[0].cost.total);
    }
}

#[test]
fn step_edge_is_sharper_than_fourier() {
    let cfg = OpticalConfig::default();
    let spec = PhantomSpec {
        profile: PhaseProfile::FlatTop,
        nucleus_radius: 40.0,
        peak_phase: 1.0,
        center: Some([128.0, 128.0]),
        ..PhantomSpec::default()
    };
    let truth = make_phantom(&spec, 5, &cfg).unwrap();
    let beam = cfg.reference();
    let h =
        synthesize_hologram(&truth.object_field, &make_reference(cfg.grid, beam), 0.0, 0).unwrap();
    let rc = ReconConfig::default();
    let fourier = fourier_reconstruct(&h, &beam, rc.filter_radius(&beam)).unwrap();
    let opt = optimize_reconstruct(&h, &beam, &rc).unwrap();
    let fw = radial_edge_width(&unwrapped(&fourier), (128, 128), 72, 10).unwrap();
    let ow = radial_edge_width(&unwrapped(&opt.field), (128, 128), 72, 10).unwrap();
    eprintln!(
        "edge width: fourier {fw:.3} px, optimized {ow:.3} px, ratio {:.3}",
        ow / fw
    );
    assert!(fw > 1.0 / (2.0 * rc.filter_radius(&beam)) * 0.5);
    assert!(ow <= 0.5 * fw, "{ow} vs {fw}");
}
