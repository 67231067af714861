//! Uniform periodic grids on the torus [0, L)^d and their dual lattices.
//!
//! Transforms follow F v(ξ) = ∫ v(x) e^{−i2πx·ξ} dx: on the grid
//! v̂(ξ_k) ≈ h^d · DFT(v)_k with x_j = j·h and ξ_k = k/L, and k taking FFT
//! order along each axis (0, 1, …, n/2−1, −n/2, …, −1).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub dim: usize,
    pub n: usize,
    pub period: f64,
    /// Row-major values, last axis fastest.
    pub values: Vec<Complex64>,
}

/// A GridFunction per time stamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGridFunction {
    pub times: Vec<f64>,
    pub slices: Vec<GridFunction>,
}

/// Signed integer frequency for index j of an n-point axis.
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

fn fft_plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = FftPlanner::new();
    if inverse {
        p.plan_fft_inverse(n)
    } else {
        p.plan_fft_forward(n)
    }
}

/// In-place unnormalized DFT along every axis of a row-major n^d array.
pub fn fft_nd(data: &mut [Complex64], dim: usize, n: usize, inverse: bool) {
    let plan = fft_plan(n, inverse);
    let total = data.len();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = stride * n;
        for start in (0..total).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                if stride == 1 {
                    plan.process_with_scratch(&mut data[base..base + n], &mut scratch);
                } else {
                    for (i, b) in buf.iter_mut().enumerate() {
                        *b = data[base + i * stride];
                    }
                    plan.process_with_scratch(&mut buf, &mut scratch);
                    for (i, b) in buf.iter().enumerate() {
                        data[base + i * stride] = *b;
                    }
                }
            }
        }
    }
}

impl GridFunction {
    pub fn check_shape(dim: usize, n: usize, period: f64) -> Result<()> {
        if dim == 0 || n < 4 || !n.is_power_of_two() || !(period > 0.0) {
            return Err(Error::Shape(format!(
                "grid needs d ≥ 1, n ≥ 4 a power of two and L > 0 (got d={dim}, n={n}, L={period})"
            )));
        }
        Ok(())
    }

    pub fn zeros(dim: usize, n: usize, period: f64) -> Result<Self> {
        Self::check_shape(dim, n, period)?;
        Ok(GridFunction {
            dim,
            n,
            period,
            values: vec![Complex64::new(0.0, 0.0); n.pow(dim as u32)],
        })
    }

    pub fn from_values(dim: usize, n: usize, period: f64, values: Vec<Complex64>) -> Result<Self> {
        Self::check_shape(dim, n, period)?;
        if values.len() != n.pow(dim as u32) {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                n.pow(dim as u32),
                values.len()
            )));
        }
        Ok(GridFunction {
            dim,
            n,
            period,
            values,
        })
    }

    pub fn from_fn<F: Fn(&[f64]) -> Complex64>(
        dim: usize,
        n: usize,
        period: f64,
        f: F,
    ) -> Result<Self> {
        let mut g = Self::zeros(dim, n, period)?;
        let h = g.spacing();
        let mut x = vec![0.0; dim];
        for idx in 0..g.values.len() {
            g.unravel_into(idx, &mut x);
            for v in x.iter_mut() {
                *v *= h;
            }
            g.values[idx] = f(&x);
        }
        Ok(g)
    }

    pub fn from_real_fn<F: Fn(&[f64]) -> f64>(
        dim: usize,
        n: usize,
        period: f64,
        f: F,
    ) -> Result<Self> {
        Self::from_fn(dim, n, period, |x| Complex64::new(f(x), 0.0))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Integer multi-index of a flat index.
    pub fn unravel_into(&self, mut idx: usize, out: &mut [f64]) {
        for a in (0..self.dim).rev() {
            out[a] = (idx % self.n) as f64;
            idx /= self.n;
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.unravel_into(idx, &mut x);
        let h = self.spacing();
        x.iter().map(|v| v * h).collect()
    }

    /// Periodic representative of the grid point in [−L/2, L/2)^d.
    pub fn signed_point(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.unravel_into(idx, &mut x);
        let h = self.spacing();
        x.iter()
            .map(|v| wavenumber(*v as usize, self.n) as f64 * h)
            .collect()
    }

    /// Dual-lattice frequency ξ_k of a flat index.
    pub fn freq(&self, mut idx: usize) -> Vec<f64> {
        let mut xi = vec![0.0; self.dim];
        for a in (0..self.dim).rev() {
            xi[a] = wavenumber(idx % self.n, self.n) as f64 / self.period;
            idx /= self.n;
        }
        xi
    }

    pub fn frequencies(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.freq(i)).collect()
    }

    /// True when some axis sits at the Nyquist index.
    pub fn is_nyquist(&self, mut idx: usize) -> bool {
        for _ in 0..self.dim {
            if idx % self.n == self.n / 2 {
                return true;
            }
            idx /= self.n;
        }
        false
    }

    pub fn same_shape(&self, other: &GridFunction) -> Result<()> {
        if self.dim != other.dim
            || self.n != other.n
            || (self.period - other.period).abs() > 1e-12 * self.period
        {
            return Err(Error::Shape(
                "grid functions live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// Unnormalized DFT coefficients.
    pub fn dft(&self) -> Vec<Complex64> {
        let mut d = self.values.clone();
        fft_nd(&mut d, self.dim, self.n, false);
        d
    }

    /// Inverse of [`GridFunction::dft`].
    pub fn from_dft(dim: usize, n: usize, period: f64, mut coeffs: Vec<Complex64>) -> Result<Self> {
        fft_nd(&mut coeffs, dim, n, true);
        let s = 1.0 / n.pow(dim as u32) as f64;
        for c in coeffs.iter_mut() {
            *c *= s;
        }
        Self::from_values(dim, n, period, coeffs)
    }

    /// Fourier transform samples v̂(ξ_k) = h^d·DFT(v)_k.
    pub fn fourier(&self) -> Vec<Complex64> {
        let h = self.cell_volume();
        self.dft().into_iter().map(|c| c * h).collect()
    }

    /// Applies the Fourier multiplier m(ξ) given per flat frequency index.
    pub fn apply_multiplier_values(&self, m: &[Complex64]) -> Result<GridFunction> {
        if m.len() != self.len() {
            return Err(Error::Shape("multiplier length mismatch".into()));
        }
        let mut c = self.dft();
        for (a, b) in c.iter_mut().zip(m) {
            *a *= b;
        }
        Self::from_dft(self.dim, self.n, self.period, c)
    }

    /// Applies m(ξ); Nyquist modes use the average over ±ξ along the
    /// Nyquist axes so real inputs stay real for Hermitian m.
    pub fn apply_multiplier<F: Fn(&[f64]) -> Complex64>(&self, m: F) -> Result<GridFunction> {
        let vals: Vec<Complex64> = (0..self.len())
            .map(|i| self.symmetric_value(i, &m))
            .collect();
        self.apply_multiplier_values(&vals)
    }

    /// m at ξ_i, averaged over sign flips of Nyquist axes.
    pub fn symmetric_value<F: Fn(&[f64]) -> Complex64>(&self, i: usize, m: &F) -> Complex64 {
        let xi = self.freq(i);
        let nyq: Vec<usize> = (0..self.dim)
            .filter(|&a| (xi[a] * self.period).round() as i64 == -(self.n as i64 / 2))
            .collect();
        if nyq.is_empty() {
            return m(&xi);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let combos = 1usize << nyq.len();
        for mask in 0..combos {
            let mut x = xi.clone();
            for (b, &a) in nyq.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    x[a] = -x[a];
                }
            }
            acc += m(&x);
        }
        acc / combos as f64
    }

    /// u(· + y) by trigonometric interpolation.
    pub fn shifted(&self, y: &[f64]) -> Result<GridFunction> {
        let two_pi = 2.0 * std::f64::consts::PI;
        self.apply_multiplier(|xi| {
            let ph: f64 = xi.iter().zip(y).map(|(a, b)| a * b).sum();
            Complex64::from_polar(1.0, two_pi * ph)
        })
    }

    /// ∂_axis u spectrally.
    pub fn derivative(&self, axis: usize) -> Result<GridFunction> {
        let two_pi = 2.0 * std::f64::consts::PI;
        self.apply_multiplier(|xi| Complex64::new(0.0, two_pi * xi[axis]))
    }

    /// Grid L_p norm (h^d Σ|v|^p)^{1/p}; p = ∞ gives the max.
    pub fn norm(&self, p: f64) -> f64 {
        norm_p(&self.values, self.cell_volume(), p)
    }

    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.cell_volume()
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, c| m.max(c.im.abs()))
    }

    pub fn scale(&self, s: Complex64) -> GridFunction {
        let mut g = self.clone();
        for v in g.values.iter_mut() {
            *v *= s;
        }
        g
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.same_shape(other)?;
        let mut g = self.clone();
        for (a, b) in g.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(g)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Band-limited evaluation at an arbitrary point via the trigonometric
    /// interpolant.
    pub fn interpolate(&self, x: &[f64], coeffs: &[Complex64]) -> Complex64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        let scale = 1.0 / self.len() as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, c) in coeffs.iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let v = self.symmetric_value(i, &|xi: &[f64]| {
                let ph: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum();
                Complex64::from_polar(1.0, two_pi * ph)
            });
            acc += c * v;
        }
        acc * scale
    }

    /// CSV with one row per grid point: coordinates, Re, Im.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for a in 0..self.dim {
            s.push_str(&format!("x{a},"));
        }
        s.push_str("re,im\n");
        for i in 0..self.len() {
            for x in self.point(i) {
                s.push_str(&format!("{x:.16e},"));
            }
            s.push_str(&format!(
                "{:.16e},{:.16e}\n",
                self.values[i].re, self.values[i].im
            ));
        }
        s
    }
}

pub fn norm_p(values: &[Complex64], cell: f64, p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |m, c| m.max(c.norm()))
    } else {
        (values.iter().map(|c| c.norm().powf(p)).sum::<f64>() * cell).powf(1.0 / p)
    }
}
