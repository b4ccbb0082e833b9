//! Iterative radix-2 Cooley-Tukey FFT.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::FeatureError;

/// Precomputed twiddles and bit-reversal permutation for one transform size.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self, FeatureError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(FeatureError::NotPowerOfTwo(n));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        // Each twiddle evaluated directly; a recurrence would drift at large n.
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Ok(Self {
            n,
            twiddles,
            bitrev,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, X[k] = sum x[i] e^{-2 pi i k / n}.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    /// In-place inverse transform including the 1/n scaling.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        for i in 0..self.n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < self.n {
            let stride = self.n / (2 * half);
            for start in (0..self.n).step_by(2 * half) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }

    /// Power spectrum |X[k]|^2 for k in [0, n/2] of a real frame.
    pub fn power(&self, frame: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if frame.len() != self.n {
            return Err(FeatureError::LengthMismatch {
                expected: self.n,
                got: frame.len(),
            });
        }
        let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        Ok(buf[..=self.n / 2].iter().map(|c| c.norm_sqr()).collect())
    }
}

/// One-shot power spectrum of a frame whose length is a power of two.
pub fn fft_power(frame: &[f64]) -> Result<Vec<f64>, FeatureError> {
    FftPlan::new(frame.len())?.power(frame)
}

/// Linear convolution via zero-padded FFT, output length a.len() + b.len() - 1.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let plan = FftPlan::new(n).expect("power of two");
    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(n, Complex64::default());
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(n, Complex64::default());
    plan.forward(&mut fa);
    plan.forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    plan.inverse(&mut fa);
    fa[..out_len].iter().map(|c| c.re).collect()
}
