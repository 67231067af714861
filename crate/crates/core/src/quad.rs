//! Quadrature primitives: adaptive Gauss–Kronrod (7/15) for vector-valued
//! integrands, Gauss–Legendre rules, and log-radial integration with
//! power-law tail extrapolation.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts {
            abs_tol: 1e-300,
            rel_tol: 1e-11,
            max_intervals: 4000,
        }
    }
}

impl QuadOpts {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOpts {
            rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<const K: usize> {
    pub value: [f64; K],
    pub error: f64,
    pub intervals: usize,
    pub converged: bool,
}

impl<const K: usize> QuadResult<K> {
    pub fn require(self, what: &str) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::Accuracy {
                message: format!("{what}: panel refinement limit reached"),
                achieved: self.error,
            })
        }
    }
}

#[derive(Clone, Copy)]
struct Panel<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: f64,
}

fn gk15<const K: usize, F: FnMut(f64) -> [f64; K]>(f: &mut F, a: f64, b: f64) -> Panel<K> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = [0.0; K];
    let mut g = [0.0; K];
    let fc = f(c);
    for i in 0..K {
        k[i] = WGK[7] * fc[i];
        g[i] = WG[3] * fc[i];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for i in 0..K {
            let s = f1[i] + f2[i];
            k[i] += WGK[j] * s;
            if j % 2 == 1 {
                g[i] += WG[j / 2] * s;
            }
        }
    }
    let mut err = 0.0f64;
    for i in 0..K {
        k[i] *= h;
        g[i] *= h;
        err = err.max((k[i] - g[i]).abs());
    }
    Panel {
        a,
        b,
        value: k,
        error: err,
    }
}

fn norm<const K: usize>(v: &[f64; K]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Adaptive Gauss–Kronrod integration of a vector-valued integrand over
/// `[a, b]`, starting from the partition given by `breaks` (which must
/// include the end points in increasing order).
pub fn adaptive_breaks<const K: usize, F: FnMut(f64) -> [f64; K]>(
    mut f: F,
    breaks: &[f64],
    opts: QuadOpts,
) -> QuadResult<K> {
    let mut panels: Vec<Panel<K>> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk15(&mut f, w[0], w[1]))
        .collect();
    if panels.is_empty() {
        return QuadResult {
            value: [0.0; K],
            error: 0.0,
            intervals: 0,
            converged: true,
        };
    }
    loop {
        let total = sum_panels(&panels);
        let err: f64 = panels.iter().map(|p| p.error).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * norm(&total));
        if err <= tol || panels.len() >= opts.max_intervals {
            panels.sort_by(|x, y| x.a.total_cmp(&y.a));
            return QuadResult {
                value: sum_panels(&panels),
                error: err,
                intervals: panels.len(),
                converged: err <= tol,
            };
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, be), (i, p)| {
                if p.error > be {
                    (i, p.error)
                } else {
                    (bi, be)
                }
            });
        let p = panels.swap_remove(idx);
        let m = 0.5 * (p.a + p.b);
        if !(m > p.a && m < p.b) {
            // Interval can no longer be split in floating point.
            panels.push(Panel { error: 0.0, ..p });
            continue;
        }
        panels.push(gk15(&mut f, p.a, m));
        panels.push(gk15(&mut f, m, p.b));
    }
}

fn sum_panels<const K: usize>(panels: &[Panel<K>]) -> [f64; K] {
    let mut s = [0.0; K];
    let mut c = [0.0; K];
    for p in panels {
        for i in 0..K {
            // Neumaier compensated summation.
            let t = s[i] + p.value[i];
            if s[i].abs() >= p.value[i].abs() {
                c[i] += (s[i] - t) + p.value[i];
            } else {
                c[i] += (p.value[i] - t) + s[i];
            }
            s[i] = t;
        }
    }
    for i in 0..K {
        s[i] += c[i];
    }
    s
}

pub fn adaptive<const K: usize, F: FnMut(f64) -> [f64; K]>(
    f: F,
    a: f64,
    b: f64,
    opts: QuadOpts,
) -> QuadResult<K> {
    adaptive_breaks(f, &[a, b], opts)
}

/// Scalar convenience wrapper around [`adaptive`].
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOpts) -> QuadResult<1> {
    adaptive(|x| [f(x)], a, b, opts)
}

/// Integrates `f(r) dr` over `[ra, rb]` in the variable `u = ln r`, with one
/// initial panel per decade.
pub fn log_radial<const K: usize, F: FnMut(f64) -> [f64; K]>(
    mut f: F,
    ra: f64,
    rb: f64,
    opts: QuadOpts,
) -> QuadResult<K> {
    if !(rb > ra) || ra <= 0.0 {
        return QuadResult {
            value: [0.0; K],
            error: 0.0,
            intervals: 0,
            converged: true,
        };
    }
    let (ua, ub) = (ra.ln(), rb.ln());
    let panels = (((ub - ua) / std::f64::consts::LN_10).ceil() as usize).max(1);
    let breaks: Vec<f64> = (0..=panels)
        .map(|i| ua + (ub - ua) * i as f64 / panels as f64)
        .collect();
    adaptive_breaks(
        |u| {
            let r = u.exp();
            let mut v = f(r);
            for x in v.iter_mut() {
                *x *= r;
            }
            v
        },
        &breaks,
        opts,
    )
}

/// Local log-log slope of a positive function at `r`.
pub fn local_exponent<F: Fn(f64) -> f64>(f: &F, r: f64) -> Option<f64> {
    let q = 1.02f64;
    let (a, b) = (f(r / q), f(r * q));
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Some((b / a).ln() / (2.0 * q.ln()))
    } else {
        None
    }
}

/// Integral of a power-law continuation of `f` over `(0, r0]`; `None` when
/// the local exponent makes it divergent.
pub fn head_tail<F: Fn(f64) -> f64>(f: &F, r0: f64) -> Option<f64> {
    let v = f(r0);
    if v == 0.0 {
        return Some(0.0);
    }
    let p = local_exponent(&|r| f(r).abs(), r0)?;
    if p <= -1.0 + 1e-9 {
        None
    } else {
        Some(v * r0 / (p + 1.0))
    }
}

/// Integral of a power-law continuation of `f` over `[r0, ∞)`; `None` when
/// divergent.
pub fn far_tail<F: Fn(f64) -> f64>(f: &F, r0: f64) -> Option<f64> {
    let v = f(r0);
    if v == 0.0 {
        return Some(0.0);
    }
    let p = local_exponent(&|r| f(r).abs(), r0)?;
    if p >= -1.0 - 1e-9 {
        None
    } else {
        Some(-v * r0 / (p + 1.0))
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_gl(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(c + 0.5 * h * xi);
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Geometric grid of `n` points from `a` to `b` inclusive.
pub fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Cubic (four-point Lagrange) interpolation of samples on a uniform grid,
/// with linear extrapolation from the end intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformCubic {
    pub x0: f64,
    pub dx: f64,
    pub y: Vec<f64>,
}

impl UniformCubic {
    pub fn new(x0: f64, dx: f64, y: Vec<f64>) -> Self {
        assert!(y.len() >= 4, "UniformCubic needs at least four samples");
        UniformCubic { x0, dx, y }
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.dx * (self.y.len() - 1) as f64
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let s = (x - self.x0) / self.dx;
        if s <= 0.0 {
            let slope = (self.y[1] - self.y[0]) / self.dx;
            return self.y[0] + slope * (x - self.x0);
        }
        if s >= (n - 1) as f64 {
            let slope = (self.y[n - 1] - self.y[n - 2]) / self.dx;
            return self.y[n - 1] + slope * (x - self.x_max());
        }
        let i = (s.floor() as usize).clamp(1, n - 3);
        let t = s - i as f64;
        let (y0, y1, y2, y3) = (self.y[i - 1], self.y[i], self.y[i + 1], self.y[i + 2]);
        // Nodes at -1, 0, 1, 2 relative to i.
        let l0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let l1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let l2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let l3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        y0 * l0 + y1 * l1 + y2 * l2 + y3 * l3
    }

    /// Derivative of the interpolant (central difference of the cubic).
    pub fn slope(&self, x: f64) -> f64 {
        let e = 1e-4 * self.dx;
        (self.eval(x + e) - self.eval(x - e)) / (2.0 * e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_polynomial_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, QuadOpts::default());
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r.value[0] - exact).abs() < 1e-13);
    }

    #[test]
    fn gk_endpoint_singularity() {
        let r = integrate(|x| x.powf(-0.5), 0.0, 1.0, QuadOpts::rel(1e-10));
        assert!((r.value[0] - 2.0).abs() < 1e-8, "{}", r.value[0]);
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
            if n >= 3 {
                assert!((m4 - 0.4).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn log_radial_power_law_with_tails() {
        let f = |r: f64| r.powf(-1.5);
        let body = log_radial(|r| [f(r)], 1.0, 1e4, QuadOpts::default());
        let tail = far_tail(&f, 1e4).unwrap();
        assert!((body.value[0] + tail - 2.0).abs() < 1e-10);
        assert!(head_tail(&f, 1e-3).is_none());
        let g = |r: f64| r.powf(-0.5);
        assert!((head_tail(&g, 1e-2).unwrap() - 0.2).abs() < 1e-10);
    }

    #[test]
    fn uniform_cubic_reproduces_cubics_and_extrapolates_linearly() {
        let f = |x: f64| 0.5 * x * x * x - x + 2.0;
        let y: Vec<f64> = (0..10).map(|i| f(i as f64 * 0.5)).collect();
        let t = UniformCubic::new(0.0, 0.5, y);
        for x in [0.1, 1.3, 2.77, 4.4] {
            assert!((t.eval(x) - f(x)).abs() < 1e-12);
        }
        let lin = UniformCubic::new(0.0, 1.0, vec![0.0, 1.0, 2.0, 3.0]);
        assert!((lin.eval(10.0) - 10.0).abs() < 1e-12);
        assert!((lin.eval(-2.0) + 2.0).abs() < 1e-12);
    }
}
