//! Recovery of the complex object wave from a single off-axis hologram.
//!
//! Two routes are provided:
//!
//! * [`fourier_reconstruct`]: isolate the `R*O` lobe of the hologram
//!   spectrum with a hard circular window and demodulate. Fast, but a
//!   low-pass filter.
//! * [`optimize_reconstruct`]: minimize
//!   `C(O) = Σ (H - |R + O|²)² + Σ (sqrt(1 + |∇O|²/δ²) - 1)`
//!   by alternating backtracking gradient steps on the data term and on the
//!   modified Huber penalty, starting from the Fourier estimate.
//!
//! Gradients follow the conjugate-field (Wirtinger) convention: `g` is such
//! that `C(O + dO) - C(O) = 2 Re<g, dO> + o(|dO|)`, so `-g` is the steepest
//! descent direction in the real and imaginary parts jointly.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Error, Result};
use crate::fft::{bin_frequency, Fft2};
use crate::field::{
    check_same_grid, divergence_into, gradient, ComplexField, Field, Grid, RealField,
};
use crate::holo::{make_reference, ReferenceBeam};
use crate::unwrap::PhaseMap;

/// Sufficient-decrease constant of the Armijo test.
const ARMIJO: f64 = 1e-4;
/// Halvings after which a search direction is abandoned.
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    /// `δ = delta_factor · median |∇O|`.
    pub delta_factor: f64,
    pub max_outer_iterations: usize,
    pub c1_steps: usize,
    pub c2_steps: usize,
    pub relative_cost_tolerance: f64,
    /// Cycles per pixel; `None` uses half the DC to cross-term distance.
    pub fourier_filter_radius: Option<f64>,
    /// Re-estimate δ from the current iterate at every outer iteration. Off
    /// by default: on noise-free data the median gradient of the flat
    /// background decays towards zero and the penalty becomes ill-posed.
    pub refresh_delta: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            delta_factor: 1.0,
            max_outer_iterations: 200,
            c1_steps: 5,
            c2_steps: 1,
            relative_cost_tolerance: 1e-6,
            fourier_filter_radius: None,
            refresh_delta: false,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_factor > 0.0) {
            bail!(InvalidConfig, "delta factor must be positive");
        }
        if self.max_outer_iterations == 0 || self.c1_steps == 0 || self.c2_steps == 0 {
            bail!(InvalidConfig, "iteration counts must be at least 1");
        }
        if !(self.relative_cost_tolerance > 0.0) {
            bail!(InvalidConfig, "cost tolerance must be positive");
        }
        if let Some(r) = self.fourier_filter_radius {
            if !(r > 0.0 && r < 0.5) {
                bail!(
                    InvalidConfig,
                    "Fourier filter radius must lie in (0, 0.5), got {r}"
                );
            }
        }
        Ok(())
    }

    pub fn filter_radius(&self, beam: &ReferenceBeam) -> f64 {
        self.fourier_filter_radius
            .unwrap_or(beam.carrier_frequency() / 2.0)
    }
}

/// Data term, penalty and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub c1: f64,
    pub c2: f64,
    pub total: f64,
}

/// One row of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 0 is the initial estimate.
    pub iteration: usize,
    pub cost: CostBreakdown,
    pub delta: f64,
    /// Last accepted step lengths of the data and penalty sub-problems.
    pub c1_step: f64,
    pub c2_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub field: ComplexField,
    pub trace: Vec<IterationRecord>,
    pub delta: f64,
    pub converged: bool,
}

/// Estimated plane reference from a hologram recorded without a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub beam: ReferenceBeam,
}

/// Locates the fringe carrier of an empty-object hologram.
///
/// The strongest non-DC bin of the FFT gives the carrier to within half a
/// bin. It is then refined by maximizing the magnitude of the Hann-windowed
/// discrete-time Fourier transform of `H - mean(H)` over continuous
/// frequencies (golden-section search, alternating axes). A parabolic fit on
/// the FFT magnitudes alone is biased by up to a quarter bin for carriers
/// between bins, which leaves a phase ramp of several radians across the ROI.
///
/// An intensity pattern cannot tell `+f` from `-f`; the peak with `f_x > 0`
/// (or `f_x = 0`, `f_y > 0`) is reported. The amplitude assumes balanced
/// arms: `R₀ = sqrt(mean(H) / 2)`.
pub fn calibrate_reference(h: &RealField) -> Result<Calibration> {
    let grid = h.grid();
    let (w, ht) = (grid.width, grid.height);
    let plan = Fft2::new(w, ht)?;
    let mut spec = h.to_complex().into_vec();
    plan.forward(&mut spec);
    let mag: Vec<f64> = spec.iter().map(|v| v.norm()).collect();

    let (mut best, mut best_mag) = (0usize, -1.0);
    for (i, &m) in mag.iter().enumerate().skip(1) {
        if m > best_mag {
            best = i;
            best_mag = m;
        }
    }
    if !(best_mag > 1e-9 * mag[0].max(f64::MIN_POSITIVE)) {
        bail!(Calibration, "no fringe carrier in the spectrum");
    }
    let (mut ky, mut kx) = (best / w, best % w);
    let (mut fx, mut fy) = (bin_frequency(kx, w), bin_frequency(ky, ht));
    if fx < 0.0 || (fx == 0.0 && fy < 0.0) {
        kx = (w - kx) % w;
        ky = (ht - ky) % ht;
        fx = bin_frequency(kx, w);
        fy = bin_frequency(ky, ht);
    }
    let bins = (fx * w as f64).hypot(fy * ht as f64);
    if bins <= 3.0 {
        bail!(
            Calibration,
            "carrier peak only {bins:.2} bins from DC; tilt too small to separate terms"
        );
    }
    let search = CarrierSearch::new(h);
    let (mut tilt_x, mut tilt_y) = (fx, fy);
    for _ in 0..CARRIER_ROUNDS {
        tilt_x = golden_max(tilt_x - 1.0 / w as f64, tilt_x + 1.0 / w as f64, |f| {
            search.power(f, tilt_y)
        });
        tilt_y = golden_max(tilt_y - 1.0 / ht as f64, tilt_y + 1.0 / ht as f64, |f| {
            search.power(tilt_x, f)
        });
    }
    let amplitude = (h.mean() / 2.0).sqrt();
    Ok(Calibration {
        beam: ReferenceBeam::new(amplitude, tilt_x, tilt_y),
    })
}

const CARRIER_ROUNDS: usize = 4;
const GOLDEN_STEPS: usize = 48;

/// Hann-windowed, mean-free hologram for evaluating its spectrum at
/// arbitrary frequencies.
struct CarrierSearch {
    width: usize,
    data: Vec<f64>,
}

impl CarrierSearch {
    fn new(h: &RealField) -> Self {
        let (w, ht) = (h.width(), h.height());
        let hann = |i: usize, n: usize| 0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / n as f64).cos();
        let mean = h.mean();
        let data = h
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - mean) * hann(i % w, w) * hann(i / w, ht))
            .collect();
        Self { width: w, data }
    }

    /// `|Σ h(x, y) exp(-i2π(f_x x + f_y y))|²`.
    fn power(&self, fx: f64, fy: f64) -> f64 {
        let ex: Vec<Complex64> = (0..self.width)
            .map(|x| Complex64::from_polar(1.0, -2.0 * PI * fx * x as f64))
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (y, row) in self.data.chunks_exact(self.width).enumerate() {
            let s: Complex64 = row.iter().zip(&ex).map(|(&v, &e)| e * v).sum();
            acc += s * Complex64::from_polar(1.0, -2.0 * PI * fy * y as f64);
        }
        acc.norm_sqr()
    }
}

/// Maximizer of a unimodal function on `[a, b]`.
fn golden_max(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_STEPS {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Wrap-aware distance between two frequencies in cycles per pixel.
#[inline]
fn freq_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 1.0;
    d.min(1.0 - d)
}

/// Fourier-filter baseline.
///
/// For `R = R₀ exp(i2πf·x)` the lobe carrying `O` (the `R*O` term) sits at
/// `-f` under the `exp(-2πi kn/N)` transform convention. It is cut out with a
/// hard disk of `radius` cycles per pixel, transformed back and divided by
/// `R*`.
pub fn fourier_reconstruct(
    h: &RealField,
    beam: &ReferenceBeam,
    radius: f64,
) -> Result<ComplexField> {
    if !(radius > 0.0 && radius < 0.5) {
        bail!(
            InvalidConfig,
            "filter radius must lie in (0, 0.5), got {radius}"
        );
    }
    let (cx, cy) = (-beam.tilt_x, -beam.tilt_y);
    let dc_distance = freq_distance(cx, 0.0).hypot(freq_distance(cy, 0.0));
    if radius >= dc_distance {
        bail!(
            InvalidConfig,
            "filter radius {radius} reaches the DC term {dc_distance:.4} cycles/px away"
        );
    }
    let grid = h.grid();
    let (w, ht) = (grid.width, grid.height);
    let plan = Fft2::new(w, ht)?;
    let mut spec = h.to_complex().into_vec();
    plan.forward(&mut spec);
    for ky in 0..ht {
        let dy = freq_distance(bin_frequency(ky, ht), cy);
        for kx in 0..w {
            let dx = freq_distance(bin_frequency(kx, w), cx);
            if dx.hypot(dy) >= radius {
                spec[ky * w + kx] = Complex64::new(0.0, 0.0);
            }
        }
    }
    plan.inverse(&mut spec);
    let r = make_reference(grid, *beam);
    let data = spec
        .iter()
        .zip(r.as_slice())
        .map(|(&v, &rv)| v * rv / rv.norm_sqr())
        .collect();
    Field::from_vec(grid, data)
}

/// Four-quadrant phase in `(-π, π]`, plus a validity flag that is false
/// where `|O| = 0` (phase set to 0 there).
pub fn wrapped_phase(o: &ComplexField) -> (PhaseMap, Vec<bool>) {
    let mut valid = Vec::with_capacity(o.grid().len());
    let data = o
        .as_slice()
        .iter()
        .map(|v| {
            if v.re == 0.0 && v.im == 0.0 {
                valid.push(false);
                return 0.0;
            }
            valid.push(true);
            let a = v.im.atan2(v.re);
            if a <= -PI {
                PI
            } else {
                a
            }
        })
        .collect();
    let phase = PhaseMap::wrapped(Field::from_raw(o.grid(), data)).expect("atan2 range");
    (phase, valid)
}

/// `δ = c · median_pixels sqrt(|∂x O|² + |∂y O|²)`.
pub fn select_delta(o: &ComplexField, factor: f64) -> Result<f64> {
    if !(factor > 0.0) {
        bail!(InvalidInput, "delta factor must be positive");
    }
    let (gx, gy) = gradient(o);
    let mut mags: Vec<f64> = gx
        .as_slice()
        .iter()
        .zip(gy.as_slice())
        .map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt())
        .collect();
    let n = mags.len();
    let mid = n / 2;
    let (_, &mut upper, _) = mags.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if n % 2 == 1 {
        upper
    } else {
        let lower = mags[..mid].iter().cloned().fold(f64::MIN, f64::max);
        (lower + upper) / 2.0
    };
    let delta = factor * median;
    if !(delta > 0.0) {
        bail!(
            Degenerate,
            "median gradient magnitude is zero; delta would vanish"
        );
    }
    Ok(delta)
}

/// Cost evaluation and gradients for one hologram / reference pair.
#[derive(Debug)]
struct Problem<'a> {
    grid: Grid,
    h: &'a [f64],
    r: Vec<Complex64>,
    delta: f64,
}

impl<'a> Problem<'a> {
    fn new(h: &'a RealField, reference: Vec<Complex64>, delta: f64) -> Self {
        Self {
            grid: h.grid(),
            h: h.as_slice(),
            r: reference,
            delta,
        }
    }

    fn cost(&self, o: &[Complex64]) -> CostBreakdown {
        let (w, ht) = (self.grid.width, self.grid.height);
        let inv_d2 = 1.0 / (self.delta * self.delta);
        let mut c1 = 0.0;
        let mut c2 = 0.0;
        for row in 0..ht {
            for col in 0..w {
                let i = row * w + col;
                let e = self.h[i] - (self.r[i] + o[i]).norm_sqr();
                c1 += e * e;
                let gx = if col + 1 < w {
                    o[i + 1] - o[i]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let gy = if row + 1 < ht {
                    o[i + w] - o[i]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let q = (gx.norm_sqr() + gy.norm_sqr()) * inv_d2;
                // sqrt(1 + q) - 1 without cancellation for small q
                c2 += q / ((1.0 + q).sqrt() + 1.0);
            }
        }
        CostBreakdown {
            c1,
            c2,
            total: c1 + c2,
        }
    }

    fn data_gradient(&self, o: &[Complex64], out: &mut [Complex64]) {
        for (((g, &ov), &rv), &hv) in out.iter_mut().zip(o).zip(&self.r).zip(self.h) {
            let s = rv + ov;
            *g = s * (-2.0 * (hv - s.norm_sqr()));
        }
    }

    fn penalty_gradient(
        &self,
        o: &[Complex64],
        out: &mut [Complex64],
        wx: &mut [Complex64],
        wy: &mut [Complex64],
    ) {
        let (w, ht) = (self.grid.width, self.grid.height);
        let inv_d2 = 1.0 / (self.delta * self.delta);
        for row in 0..ht {
            for col in 0..w {
                let i = row * w + col;
                let gx = if col + 1 < w {
                    o[i + 1] - o[i]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let gy = if row + 1 < ht {
                    o[i + w] - o[i]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let s = (1.0 + (gx.norm_sqr() + gy.norm_sqr()) * inv_d2).sqrt();
                let weight = inv_d2 / s;
                wx[i] = gx * weight;
                wy[i] = gy * weight;
            }
        }
        divergence_into(self.grid, wx, wy, out);
        for g in out.iter_mut() {
            *g *= -0.5;
        }
    }
}

fn reference_samples(grid: Grid, beam: &ReferenceBeam) -> Vec<Complex64> {
    make_reference(grid, *beam).into_vec()
}

/// `C1 + C2` at `o` for the given reference field.
pub fn cost(
    h: &RealField,
    o: &ComplexField,
    r: &ComplexField,
    delta: f64,
) -> Result<CostBreakdown> {
    check_same_grid(&h.grid(), &o.grid())?;
    check_same_grid(&h.grid(), &r.grid())?;
    if !(delta > 0.0) {
        bail!(InvalidInput, "delta must be positive, got {delta}");
    }
    Ok(Problem::new(h, r.as_slice().to_vec(), delta).cost(o.as_slice()))
}

/// Conjugate-field gradient of [`cost`]:
/// `-2 (H - |R+O|²)(R+O) - ½ div(∇O / (δ² sqrt(1 + |∇O|²/δ²)))`.
pub fn cost_gradient(
    h: &RealField,
    o: &ComplexField,
    r: &ComplexField,
    delta: f64,
) -> Result<ComplexField> {
    let (g1, g2) = cost_gradient_parts(h, o, r, delta)?;
    g1.zip_map(&g2, |a, b| a + b)
}

/// Data and penalty parts of [`cost_gradient`], separately.
pub fn cost_gradient_parts(
    h: &RealField,
    o: &ComplexField,
    r: &ComplexField,
    delta: f64,
) -> Result<(ComplexField, ComplexField)> {
    check_same_grid(&h.grid(), &o.grid())?;
    check_same_grid(&h.grid(), &r.grid())?;
    if !(delta > 0.0) {
        bail!(InvalidInput, "delta must be positive, got {delta}");
    }
    let p = Problem::new(h, r.as_slice().to_vec(), delta);
    let n = o.grid().len();
    let zero = Complex64::new(0.0, 0.0);
    let (mut g1, mut g2) = (vec![zero; n], vec![zero; n]);
    let (mut wx, mut wy) = (vec![zero; n], vec![zero; n]);
    p.data_gradient(o.as_slice(), &mut g1);
    p.penalty_gradient(o.as_slice(), &mut g2, &mut wx, &mut wy);
    Ok((Field::from_raw(o.grid(), g1), Field::from_raw(o.grid(), g2)))
}

/// Fourier-initialized regularized reconstruction.
pub fn optimize_reconstruct(
    h: &RealField,
    beam: &ReferenceBeam,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    let init = fourier_reconstruct(h, beam, cfg.filter_radius(beam))?;
    optimize_from(h, beam, cfg, init)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Term {
    Data,
    Penalty,
}

/// Regularized reconstruction from an explicit starting field.
///
/// Each outer iteration takes `c1_steps` steps along the negative data-term
/// gradient, then `c2_steps` along the negative penalty gradient. Every step
/// is an Armijo backtracking search on the total cost (halving from twice the
/// last accepted step of the same kind); a direction that is not a descent
/// direction of the total is skipped. The total cost is therefore
/// non-increasing as long as δ is held fixed.
pub fn optimize_from(
    h: &RealField,
    beam: &ReferenceBeam,
    cfg: &ReconConfig,
    init: ComplexField,
) -> Result<Reconstruction> {
    cfg.validate()?;
    check_same_grid(&h.grid(), &init.grid())?;
    let grid = h.grid();
    let n = grid.len();
    let mut delta = select_delta(&init, cfg.delta_factor)?;
    let mut problem = Problem::new(h, reference_samples(grid, beam), delta);

    let zero = Complex64::new(0.0, 0.0);
    let mut o = init.into_vec();
    let mut g_data = vec![zero; n];
    let mut g_pen = vec![zero; n];
    let mut trial = vec![zero; n];
    let (mut wx, mut wy) = (vec![zero; n], vec![zero; n]);
    let mut steps = [1.0f64, 1.0f64];

    let mut cost = problem.cost(&o);
    if !cost.total.is_finite() {
        return Err(Error::Divergence("initial cost is not finite".into()));
    }
    let mut trace = Vec::with_capacity(cfg.max_outer_iterations + 1);
    trace.push(IterationRecord {
        iteration: 0,
        cost,
        delta,
        c1_step: 0.0,
        c2_step: 0.0,
    });
    let mut converged = false;

    for iteration in 1..=cfg.max_outer_iterations {
        if cfg.refresh_delta && iteration > 1 {
            let field = Field::from_raw(grid, o.clone());
            delta = select_delta(&field, cfg.delta_factor)?;
            problem.delta = delta;
            cost = problem.cost(&o);
        }
        let start = cost.total;
        let schedule = [(Term::Data, cfg.c1_steps), (Term::Penalty, cfg.c2_steps)];
        for (term, count) in schedule {
            let slot = term as usize;
            for _ in 0..count {
                problem.data_gradient(&o, &mut g_data);
                problem.penalty_gradient(&o, &mut g_pen, &mut wx, &mut wy);
                let dir = if term == Term::Data { &g_data } else { &g_pen };
                // d/dt C(O - t·dir) at t = 0
                let slope: f64 = -2.0
                    * g_data
                        .iter()
                        .zip(&g_pen)
                        .zip(dir.iter())
                        .map(|((a, b), d)| {
                            let g = a + b;
                            g.re * d.re + g.im * d.im
                        })
                        .sum::<f64>();
                if !(slope < 0.0) {
                    break;
                }
                let mut t = steps[slot] * 2.0;
                let mut accepted = None;
                let mut finite_seen = false;
                for _ in 0..MAX_HALVINGS {
                    for ((x, &ov), &d) in trial.iter_mut().zip(&o).zip(dir.iter()) {
                        *x = ov - d * t;
                    }
                    let c = problem.cost(&trial);
                    if c.total.is_finite() {
                        finite_seen = true;
                        if c.total <= cost.total + ARMIJO * t * slope {
                            accepted = Some(c);
                            break;
                        }
                    }
                    t *= 0.5;
                }
                match accepted {
                    Some(c) => {
                        core::mem::swap(&mut o, &mut trial);
                        cost = c;
                        steps[slot] = t;
                    }
                    None if !finite_seen => {
                        return Err(Error::Divergence(alloc::format!(
                            "cost stayed non-finite over {MAX_HALVINGS} step halvings at iteration {iteration}"
                        )));
                    }
                    None => break,
                }
            }
        }
        trace.push(IterationRecord {
            iteration,
            cost,
            delta,
            c1_step: steps[0],
            c2_step: steps[1],
        });
        let change = (start - cost.total).abs() / start.abs().max(f64::MIN_POSITIVE);
        if change < cfg.relative_cost_tolerance {
            converged = true;
            break;
        }
    }

    Ok(Reconstruction {
        field: Field::from_vec(grid, o)?,
        trace,
        delta,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holo::{
        empty_object, make_phantom, synthesize_hologram, OpticalConfig, PhantomSpec,
    };
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn uniform(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn random_complex(n: usize, scale: f64, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(Grid::square(n), |_, _| {
            Complex64::new(uniform(&mut rng), uniform(&mut rng)) * scale
        })
    }

    #[test]
    fn wrapped_phase_special_values() {
        let g = Grid::square(2);
        let (p, v) = wrapped_phase(&ComplexField::filled(g, Complex64::new(1.0, 0.0)));
        assert!(p.values().as_slice().iter().all(|&x| x == 0.0) && v.iter().all(|&b| b));
        let (p, _) = wrapped_phase(&ComplexField::filled(g, Complex64::new(0.0, -1.0)));
        assert!((p.values().get(0, 0) + PI / 2.0).abs() < 1e-15);
        let (p, _) = wrapped_phase(&ComplexField::filled(g, Complex64::from_polar(3.0, 2.5)));
        assert!((p.values().get(1, 1) - 2.5).abs() < 1e-14);
        let (p, _) = wrapped_phase(&ComplexField::filled(g, Complex64::new(-1.0, -0.0)));
        assert_eq!(p.values().get(0, 0), PI);
        let (p, v) = wrapped_phase(&ComplexField::zeros(g));
        assert_eq!(p.values().get(0, 0), 0.0);
        assert!(v.iter().all(|&b| !b));
    }

    #[test]
    fn delta_of_unit_ramp_and_homogeneity() {
        let ramp = ComplexField::from_fn(Grid::square(9), |r, c| {
            Complex64::new(c as f64, r as f64 * 0.0)
        });
        // last column has zero gradient; the median over 81 pixels is still 1
        assert_eq!(select_delta(&ramp, 1.0).unwrap(), 1.0);
        let f = random_complex(8, 1.0, 2);
        let d1 = select_delta(&f, 1.5).unwrap();
        let d2 = select_delta(&f.map(|v| v * 2.0), 1.5).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-12 * d1);
        assert!(matches!(
            select_delta(
                &ComplexField::filled(Grid::square(4), Complex64::new(1.0, 1.0)),
                1.0
            ),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn delta_matches_sort_median() {
        for (n, seed) in [(7usize, 1u64), (8, 2)] {
            let f = random_complex(n, 1.0, seed);
            let (gx, gy) = gradient(&f);
            let mut m: Vec<f64> = gx
                .as_slice()
                .iter()
                .zip(gy.as_slice())
                .map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt())
                .collect();
            m.sort_by(f64::total_cmp);
            let k = m.len();
            let median = if k % 2 == 1 {
                m[k / 2]
            } else {
                (m[k / 2 - 1] + m[k / 2]) / 2.0
            };
            assert!((select_delta(&f, 0.7).unwrap() - 0.7 * median).abs() < 1e-15);
        }
    }

    #[test]
    fn cost_matches_direct_summation() {
        let n = 6;
        let o = random_complex(n, 2.0, 5);
        let r = make_reference(Grid::square(n), ReferenceBeam::new(3.0, 0.2, 0.1));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = RealField::from_fn(Grid::square(n), |_, _| 10.0 + 5.0 * uniform(&mut rng));
        let delta = 0.8;
        let got = cost(&h, &o, &r, delta).unwrap();
        let (mut c1, mut c2) = (0.0, 0.0);
        for row in 0..n {
            for col in 0..n {
                let e = h.get(row, col) - (r.get(row, col) + o.get(row, col)).norm_sqr();
                c1 += e * e;
                let gx = if col + 1 < n {
                    o.get(row, col + 1) - o.get(row, col)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let gy = if row + 1 < n {
                    o.get(row + 1, col) - o.get(row, col)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                c2 += (1.0 + (gx.norm_sqr() + gy.norm_sqr()) / (delta * delta)).sqrt() - 1.0;
            }
        }
        assert!(((got.c1 - c1) / c1).abs() < 1e-12);
        assert!(((got.c2 - c2) / c2).abs() < 1e-12);
        assert_eq!(got.total, got.c1 + got.c2);
        assert!(cost(&h, &o, &r, 0.0).is_err());
    }

    #[test]
    fn exact_constant_field_is_stationary() {
        let g = Grid::square(8);
        let o = ComplexField::filled(g, Complex64::from_polar(2.0, 0.7));
        let r = make_reference(g, ReferenceBeam::new(2.0, 0.25, 0.0));
        let h = synthesize_hologram(&o, &r, 0.0, 0).unwrap();
        let c = cost(&h, &o, &r, 0.3).unwrap();
        assert!(c.c1 < 1e-20 && c.c2 == 0.0);
        let grad = cost_gradient(&h, &o, &r, 0.3).unwrap();
        assert!(grad.as_slice().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let n = 10;
        let o = random_complex(n, 1.0, 12);
        let r = make_reference(Grid::square(n), ReferenceBeam::new(1.5, 0.15, 0.2));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = RealField::from_fn(Grid::square(n), |_, _| 3.0 + uniform(&mut rng));
        let delta = 0.5;
        let g = cost_gradient(&h, &o, &r, delta).unwrap();
        let eps = 1e-6;
        for i in [0usize, 7, 33, 55, 99] {
            for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                let mut plus = o.clone();
                plus.as_mut_slice()[i] += dir * eps;
                let mut minus = o.clone();
                minus.as_mut_slice()[i] -= dir * eps;
                let fd = (cost(&h, &plus, &r, delta).unwrap().total
                    - cost(&h, &minus, &r, delta).unwrap().total)
                    / (2.0 * eps);
                let gi = g.as_slice()[i];
                let analytic = 2.0 * (gi.re * dir.re + gi.im * dir.im);
                assert!(
                    (fd - analytic).abs() <= 1e-5 * analytic.abs().max(1.0),
                    "{i}: {fd} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn penalty_gradient_quadratic_limit() {
        let n = 8;
        let o = random_complex(n, 1.0, 3);
        let r = ComplexField::zeros(Grid::square(n));
        let h = RealField::zeros(Grid::square(n));
        let delta = 1e4;
        let (_, g2) = cost_gradient_parts(&h, &o, &r, delta).unwrap();
        let (gx, gy) = gradient(&o);
        let lap = crate::field::divergence(&gx, &gy).unwrap();
        for (a, l) in g2.as_slice().iter().zip(lap.as_slice()) {
            let expected = -*l / (2.0 * delta * delta);
            assert!((a - expected).norm() <= 1e-6 * expected.norm().max(1e-30));
        }
    }

    #[test]
    fn huber_summand_limits() {
        let summand = |g: f64, d: f64| (1.0 + g * g / (d * d)).sqrt() - 1.0;
        let (g, d) = (0.3, 3.0);
        assert!((summand(g, d) / (g * g / (2.0 * d * d)) - 1.0).abs() < 0.01);
        let (g, d) = (5.0, 0.05);
        assert!((summand(g, d) / (g / d - 1.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn calibration_recovers_integer_tilt() {
        let cfg = OpticalConfig {
            grid: Grid::square(128),
            tilt_x: 0.125,
            tilt_y: 0.0625,
            ..OpticalConfig::default()
        };
        let r = make_reference(cfg.grid, cfg.reference());
        let h = synthesize_hologram(&empty_object(&cfg), &r, 0.0, 0).unwrap();
        let cal = calibrate_reference(&h).unwrap();
        let tol = 1.0 / (4.0 * 128.0);
        assert!((cal.beam.tilt_x - 0.125).abs() < tol);
        assert!((cal.beam.tilt_y - 0.0625).abs() < tol);
        assert!((cal.beam.amplitude - 10.0).abs() < 1e-9);
    }

    #[test]
    fn calibration_resolves_carrier_between_bins() {
        for (fx, fy) in [(0.15, 0.15), (0.1313, 0.1771), (0.2049, -0.1102)] {
            let cfg = OpticalConfig {
                grid: Grid::new(96, 80, 3.5).unwrap(),
                tilt_x: fx,
                tilt_y: fy,
                ..OpticalConfig::default()
            };
            let r = make_reference(cfg.grid, cfg.reference());
            let h = synthesize_hologram(&empty_object(&cfg), &r, 0.0, 0).unwrap();
            let cal = calibrate_reference(&h).unwrap();
            assert!((cal.beam.tilt_x - fx).abs() < 1e-3 / 96.0, "{cal:?}");
            assert!((cal.beam.tilt_y - fy).abs() < 1e-3 / 80.0, "{cal:?}");
        }
    }

    #[test]
    fn calibration_amplitude_documents_balanced_arm_assumption() {
        // R0 = 2 with a unit object wave: mean(H) = 4 + 1, so sqrt(mean/2) = 1.58.
        let g = Grid::square(64);
        let r = make_reference(g, ReferenceBeam::new(2.0, 0.125, 0.0));
        let h = synthesize_hologram(
            &ComplexField::filled(g, Complex64::new(1.0, 0.0)),
            &r,
            0.0,
            0,
        )
        .unwrap();
        let cal = calibrate_reference(&h).unwrap();
        assert!((h.mean() - 5.0).abs() < 1e-9);
        assert!((cal.beam.amplitude - (2.5f64).sqrt()).abs() < 1e-9);
        // Balanced arms are exact.
        let h = synthesize_hologram(
            &ComplexField::filled(g, Complex64::new(2.0, 0.0)),
            &r,
            0.0,
            0,
        )
        .unwrap();
        assert!((calibrate_reference(&h).unwrap().beam.amplitude - 2.0).abs() / 2.0 < 0.05);
    }

    #[test]
    fn calibration_rejects_untilted_and_small_tilt() {
        let g = Grid::square(64);
        let h = RealField::filled(g, 8.0);
        assert!(matches!(
            calibrate_reference(&h),
            Err(Error::Calibration(_))
        ));
        let r = make_reference(g, ReferenceBeam::new(1.0, 2.0 / 64.0, 0.0));
        let h = synthesize_hologram(
            &ComplexField::filled(g, Complex64::new(1.0, 0.0)),
            &r,
            0.0,
            0,
        )
        .unwrap();
        assert!(matches!(
            calibrate_reference(&h),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn fourier_recovers_constant_field() {
        // Whole fringe periods across the grid: the cross-term lobe is a
        // single bin and nothing leaks past the window.
        let cfg = OpticalConfig {
            grid: Grid::square(64),
            tilt_x: 0.125,
            tilt_y: 0.125,
            ..OpticalConfig::default()
        };
        let c = Complex64::from_polar(7.0, 0.9);
        let o = ComplexField::filled(cfg.grid, c);
        let beam = cfg.reference();
        let h = synthesize_hologram(&o, &make_reference(cfg.grid, beam), 0.0, 0).unwrap();
        let est = fourier_reconstruct(&h, &beam, beam.carrier_frequency() / 2.0).unwrap();
        for row in 8..56 {
            for col in 8..56 {
                assert!((est.get(row, col) - c).norm() < 1e-9 * c.norm());
            }
        }
    }

    #[test]
    fn fourier_rejects_window_over_dc() {
        let beam = ReferenceBeam::new(1.0, 0.1, 0.0);
        let h = RealField::filled(Grid::square(32), 2.0);
        assert!(matches!(
            fourier_reconstruct(&h, &beam, 0.1),
            Err(Error::InvalidConfig(_))
        ));
        assert!(fourier_reconstruct(&h, &beam, 0.09).is_ok());
    }

    #[test]
    fn fourier_dome_phase_is_accurate() {
        let cfg = OpticalConfig {
            grid: Grid::square(128),
            ..OpticalConfig::default()
        };
        let spec = PhantomSpec {
            nucleus_radius: 30.0,
            peak_phase: 2.5,
            ..PhantomSpec::default()
        };
        let t = make_phantom(&spec, 1, &cfg).unwrap();
        let beam = cfg.reference();
        let h =
            synthesize_hologram(&t.object_field, &make_reference(cfg.grid, beam), 0.0, 0).unwrap();
        let est = fourier_reconstruct(&h, &beam, beam.carrier_frequency() / 2.0).unwrap();
        let err = crate::metrics::masked_phase_rmse(&est, &t.object_field, t.mask.bits()).unwrap();
        assert!(err < 0.1, "{err}");
    }

    #[test]
    fn optimization_fixed_point_at_truth() {
        let cfg = OpticalConfig {
            grid: Grid::square(32),
            ..OpticalConfig::default()
        };
        let o = ComplexField::from_fn(cfg.grid, |_, c| {
            Complex64::from_polar(10.0, 0.01 * c as f64)
        });
        let beam = cfg.reference();
        let h = synthesize_hologram(&o, &make_reference(cfg.grid, beam), 0.0, 0).unwrap();
        let rc = ReconConfig {
            max_outer_iterations: 20,
            ..ReconConfig::default()
        };
        let out = optimize_from(&h, &beam, &rc, o.clone()).unwrap();
        assert!(out.trace[0].cost.c1 < 1e-18);
        let n = o.grid().len() as f64;
        let rms_dev = (out
            .field
            .as_slice()
            .iter()
            .zip(o.as_slice())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / n)
            .sqrt();
        // The ramp is not penalty-flat at the Neumann border, so the iterate
        // drifts slightly there; the data term stays tiny.
        assert!(rms_dev < 0.02, "{rms_dev}");
        assert!(out.trace.last().unwrap().cost.c1 / n < 0.01);
    }

    #[test]
    fn optimization_cost_is_monotone() {
        let cfg = OpticalConfig {
            grid: Grid::square(64),
            ..OpticalConfig::default()
        };
        let spec = PhantomSpec {
            nucleus_radius: 14.0,
            texture_amplitude: 0.3,
            ..PhantomSpec::default()
        };
        let t = make_phantom(&spec, 4, &cfg).unwrap();
        let beam = cfg.reference();
        let h =
            synthesize_hologram(&t.object_field, &make_reference(cfg.grid, beam), 1.0, 4).unwrap();
        let rc = ReconConfig {
            max_outer_iterations: 30,
            ..ReconConfig::default()
        };
        let out = optimize_reconstruct(&h, &beam, &rc).unwrap();
        for pair in out.trace.windows(2) {
            assert!(pair[1].cost.total <= pair[0].cost.total);
        }
        assert!(out.trace.last().unwrap().cost.total < out.trace[0].cost.total);
    }

    #[test]
    fn config_validation() {
        assert!(ReconConfig::default().validate().is_ok());
        assert!(ReconConfig {
            delta_factor: 0.0,
            ..ReconConfig::default()
        }
        .validate()
        .is_err());
        assert!(ReconConfig {
            c2_steps: 0,
            ..ReconConfig::default()
        }
        .validate()
        .is_err());
        assert!(ReconConfig {
            fourier_filter_radius: Some(0.5),
            ..ReconConfig::default()
        }
        .validate()
        .is_err());
    }
}
