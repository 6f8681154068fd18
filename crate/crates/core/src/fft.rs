//! Discrete Fourier transforms of arbitrary length.
//!
//! Power-of-two lengths use an iterative radix-2 kernel; every other length
//! goes through Bluestein's chirp-z algorithm on a power-of-two convolution.
//! The 2D transforms are unitary (`1/sqrt(N)` per axis).

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::field::{ComplexField, Field};

/// A planned 1D transform of fixed length (unnormalized).
#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    kernel: Kernel,
}

#[derive(Debug, Clone)]
enum Kernel {
    Radix2 {
        twiddles: Vec<Complex64>,
        bitrev: Vec<usize>,
    },
    Bluestein {
        chirp: Vec<Complex64>,
        filter: Vec<Complex64>,
        inner: Box<Fft>,
    },
}

impl Fft {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "transform length must be positive");
        if len.is_power_of_two() {
            let bits = len.trailing_zeros();
            let bitrev = (0..len)
                .map(|i| {
                    if bits == 0 {
                        0
                    } else {
                        i.reverse_bits() >> (usize::BITS - bits)
                    }
                })
                .collect();
            let twiddles = (0..len / 2)
                .map(|k| {
                    let a = -2.0 * PI * k as f64 / len as f64;
                    Complex64::new(a.cos(), a.sin())
                })
                .collect();
            return Self {
                len,
                kernel: Kernel::Radix2 { twiddles, bitrev },
            };
        }
        let m = (2 * len - 1).next_power_of_two();
        // w_n = exp(i pi n^2 / N); n^2 reduced mod 2N keeps the angle small.
        let chirp: Vec<Complex64> = (0..len)
            .map(|n| {
                let q = (n as u128 * n as u128 % (2 * len as u128)) as f64;
                let a = PI * q / len as f64;
                Complex64::new(a.cos(), a.sin())
            })
            .collect();
        let inner = Box::new(Fft::new(m));
        let mut filter = vec![Complex64::new(0.0, 0.0); m];
        filter[0] = chirp[0];
        for n in 1..len {
            filter[n] = chirp[n];
            filter[m - n] = chirp[n];
        }
        inner.forward(&mut filter);
        Self {
            len,
            kernel: Kernel::Bluestein {
                chirp,
                filter,
                inner,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, `X_k = Σ x_n exp(-2πi kn/N)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len);
        match &self.kernel {
            Kernel::Radix2 { twiddles, bitrev } => radix2(buf, twiddles, bitrev),
            Kernel::Bluestein {
                chirp,
                filter,
                inner,
            } => {
                let m = filter.len();
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for (n, (w, &x)) in work.iter_mut().zip(buf.iter()).enumerate() {
                    *w = x * chirp[n].conj();
                }
                inner.forward(&mut work);
                for (w, f) in work.iter_mut().zip(filter) {
                    *w *= f;
                }
                inner.inverse(&mut work);
                let scale = 1.0 / m as f64;
                for (k, x) in buf.iter_mut().enumerate() {
                    *x = work[k] * chirp[k].conj() * scale;
                }
            }
        }
    }

    /// In-place inverse transform without the `1/N` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for x in buf.iter_mut() {
            *x = x.conj();
        }
        self.forward(buf);
        for x in buf.iter_mut() {
            *x = x.conj();
        }
    }
}

fn radix2(buf: &mut [Complex64], twiddles: &[Complex64], bitrev: &[usize]) {
    let n = buf.len();
    for (i, &j) in bitrev.iter().enumerate() {
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let stride = n / size;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let t = twiddles[k * stride] * buf[start + k + half];
                let u = buf[start + k];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        size *= 2;
    }
}

/// Planned unitary 2D transform for a fixed `width x height`.
#[derive(Debug, Clone)]
pub struct Fft2 {
    width: usize,
    height: usize,
    rows: Fft,
    cols: Fft,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            bail!(
                InvalidInput,
                "2D transform needs at least 2x2 samples, got {width}x{height}"
            );
        }
        Ok(Self {
            width,
            height,
            rows: Fft::new(width),
            cols: Fft::new(height),
        })
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, false);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, true);
    }

    fn apply(&self, data: &mut [Complex64], inverse: bool) {
        let (w, h) = (self.width, self.height);
        assert_eq!(data.len(), w * h);
        for row in data.chunks_exact_mut(w) {
            if inverse {
                self.rows.inverse(row);
            } else {
                self.rows.forward(row);
            }
        }
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for (r, v) in column.iter_mut().enumerate() {
                *v = data[r * w + c];
            }
            if inverse {
                self.cols.inverse(&mut column);
            } else {
                self.cols.forward(&mut column);
            }
            for (r, v) in column.iter().enumerate() {
                data[r * w + c] = *v;
            }
        }
        let scale = 1.0 / ((w * h) as f64).sqrt();
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Unitary forward 2D DFT.
pub fn fft2(f: &ComplexField) -> Result<ComplexField> {
    let plan = Fft2::new(f.width(), f.height())?;
    let mut data = f.as_slice().to_vec();
    plan.forward(&mut data);
    Ok(Field::from_raw(f.grid(), data))
}

/// Unitary inverse 2D DFT.
pub fn ifft2(f: &ComplexField) -> Result<ComplexField> {
    let plan = Fft2::new(f.width(), f.height())?;
    let mut data = f.as_slice().to_vec();
    plan.inverse(&mut data);
    Ok(Field::from_raw(f.grid(), data))
}

/// Signed frequency (cycles per sample) of DFT bin `k` on an `n`-point axis.
#[inline]
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64 / n as f64
    } else {
        k as f64 / n as f64 - 1.0
    }
}
