//! Hörmander integral of the solver kernel in rescaled coordinates.
//!
//! For a radius δ the kernel is k(t, x) = e^{−λκ(δ)t}·L⁰p*(t, x)·1{t > ε/κ(δ)}
//! with L⁰ = L^{π̃₀} and p* the density of the reflected measure, both for
//! the measures rescaled by (δ, κ(δ)); its spatial transform is
//! ψ₀(ξ)·exp{tψ(ξ)}·e^{−λκ(δ)t}. The integral
//!
//!   B(ŝ, ŷ) = ∫∫_{G^c} |k(t − ŝ, x − ŷ) − k(t, x)| dx dt,  G = (−c̄, c̄) × B_c,
//!
//! splits into B₁ (|t| < c̄, |x| ≥ c) and B₂ (t ≥ c̄). Spatial integrals use
//! periodic lattices whose period is doubled until the estimated mass
//! beyond L/2 falls below EXTENT_TOL of the integral; the B₂ time tail uses
//! doubling panels with a geometric remainder.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{auto_grid, MAX_POINTS};
use crate::error::{Error, Result};
use crate::grid::{fft_nd, wavenumber};
use crate::measure::LevyMeasureSpec;
use crate::quad::{composite_gl, gauss_legendre};
use crate::report::{spread, EstimateReport};
use crate::scaling::ScalingFunction;
use crate::symbol::{evaluate, FreqGrid};

/// Largest accepted ratio of estimated truncated mass to the integral.
pub const EXTENT_TOL: f64 = 1e-3;
/// Largest accepted max/min ratio across radii.
pub const DELTA_VARIATION: f64 = 2.0;
const PANEL_ORDER: usize = 8;
const TAIL_ORDER: usize = 12;
const MAX_DOUBLINGS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HormanderOpts {
    pub lambda: f64,
    /// Truncation level ε of the kernel.
    pub eps: f64,
    /// c > 4; c̄ = 1/l(1/c).
    pub c_factor: f64,
    /// Number of shift samples (ŝ, ŷ); corners of the unit box come first.
    pub shifts: usize,
    pub seed: u64,
    /// Kernel times below this are cut (k = 0 for t ≤ max(ε/κ(δ), tau_floor)).
    pub tau_floor: f64,
}

impl Default for HormanderOpts {
    fn default() -> Self {
        HormanderOpts {
            lambda: 0.0,
            eps: 1e-3,
            c_factor: 5.0,
            shifts: 8,
            seed: 0,
            tau_floor: 1e-2,
        }
    }
}

struct Lattice {
    n: usize,
    period: f64,
    psi: Vec<Complex64>,
    psi0: Vec<Complex64>,
    radius: Vec<f64>,
    nyquist: Vec<bool>,
    freq: Vec<Vec<f64>>,
}

struct Kernel {
    dim: usize,
    spec: LevyMeasureSpec,
    spec0: LevyMeasureSpec,
    /// λκ(δ).
    damp: f64,
    cut: f64,
    c: f64,
    cache: Mutex<HashMap<(usize, u64), Arc<Lattice>>>,
}

/// Integrals of one time slice.
#[derive(Clone, Copy, Default)]
struct Slice {
    value: f64,
    /// Estimated mass beyond L/2.
    tail: f64,
}

impl Kernel {
    fn lattice(&self, n: usize, period: f64) -> Result<Arc<Lattice>> {
        let key = (n, period.to_bits());
        if let Some(l) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(l.clone());
        }
        let grid = FreqGrid::Lattice {
            dim: self.dim,
            n,
            period,
        };
        let psi = evaluate(&self.spec, &grid)?.psi;
        let psi0 = evaluate(&self.spec0, &grid)?.psi;
        let total = n.pow(self.dim as u32);
        let h = period / n as f64;
        let mut radius = Vec::with_capacity(total);
        let mut nyquist = Vec::with_capacity(total);
        let mut freq = Vec::with_capacity(total);
        for i in 0..total {
            let mut j = i;
            let mut r2 = 0.0;
            let mut nyq = false;
            let mut xi = vec![0.0; self.dim];
            for a in (0..self.dim).rev() {
                let k = j % n;
                j /= n;
                let w = wavenumber(k, n);
                r2 += (w as f64 * h).powi(2);
                nyq |= k == n / 2;
                xi[a] = w as f64 / period;
            }
            radius.push(r2.sqrt());
            nyquist.push(nyq);
            freq.push(xi);
        }
        let l = Arc::new(Lattice {
            n,
            period,
            psi,
            psi0,
            radius,
            nyquist,
            freq,
        });
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, l.clone());
        Ok(l)
    }

    /// Lattice resolving the kernel for times in [tau_lo, tau_hi].
    fn lattice_for(&self, tau_lo: f64, tau_hi: f64, doublings: usize) -> Result<Arc<Lattice>> {
        let small = auto_grid(&self.spec, tau_lo, 0.0)?;
        let big = auto_grid(&self.spec, tau_hi, 0.0)?;
        let min_period = (64.0 * big.scale).max(16.0 * self.c);
        let period = 2f64.powi(min_period.log2().ceil() as i32 + doublings as i32);
        let n = ((2.0 * period * small.xi_max).ceil() as usize)
            .max(16)
            .next_power_of_two();
        if n.checked_pow(self.dim as u32)
            .is_none_or(|p| p > MAX_POINTS)
        {
            return Err(Error::CostGuard(format!(
                "Hörmander lattice needs n = {n} per axis (period {period:e})"
            )));
        }
        self.lattice(n, period)
    }

    /// k(τ, · − shift) on the lattice (zero when τ ≤ cut).
    fn values(&self, lat: &Lattice, tau: f64, shift: &[f64]) -> Vec<f64> {
        let total = lat.psi.len();
        if tau <= self.cut {
            return vec![0.0; total];
        }
        let h_d = (lat.period / lat.n as f64).powi(self.dim as i32);
        let scale = (-self.damp * tau).exp() / h_d;
        let mut c: Vec<Complex64> = (0..total)
            .map(|i| {
                if lat.nyquist[i] {
                    return Complex64::new(0.0, 0.0);
                }
                let mut v = lat.psi0[i] * (lat.psi[i] * tau).exp() * scale;
                if shift.iter().any(|s| *s != 0.0) {
                    let ph: f64 = lat.freq[i].iter().zip(shift).map(|(a, b)| a * b).sum();
                    v *= Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * ph);
                }
                v
            })
            .collect();
        fft_nd(&mut c, self.dim, lat.n, true);
        let inv = 1.0 / total as f64;
        c.into_iter().map(|z| z.re * inv).collect()
    }

    /// ∫_{|x| ≥ r0} |k(a, x − ŷ) − k(b, x)| dx with a shell-based tail estimate.
    fn slice(&self, lat: &Lattice, a: f64, y: &[f64], b: f64, r0: f64, sub: bool) -> Slice {
        let ka = self.values(lat, a, y);
        let kb = if sub {
            self.values(lat, b, &vec![0.0; self.dim])
        } else {
            vec![0.0; ka.len()]
        };
        let h_d = (lat.period / lat.n as f64).powi(self.dim as i32);
        let (l8, l4, l2) = (lat.period / 8.0, lat.period / 4.0, lat.period / 2.0);
        let (mut v, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for ((p, q), r) in ka.iter().zip(&kb).zip(&lat.radius) {
            if *r < r0 {
                continue;
            }
            let w = (p - q).abs();
            v += w;
            if *r >= l8 && *r < l4 {
                s1 += w;
            } else if *r >= l4 && *r < l2 {
                s2 += w;
            }
        }
        let tail = if s2 == 0.0 {
            0.0
        } else if s2 < s1 {
            let r = s2 / s1;
            s2 * r / (1.0 - r)
        } else {
            f64::INFINITY
        };
        Slice {
            value: v * h_d,
            tail: tail * h_d,
        }
    }

    /// Σ_nodes w·slice over one time panel, refining the period until the
    /// tail estimate is below EXTENT_TOL of the panel integral.
    fn panel(
        &self,
        t0: f64,
        t1: f64,
        order: usize,
        shift_t: f64,
        y: &[f64],
        r0: f64,
        abs_only: bool,
    ) -> Result<(f64, f64)> {
        let (x, w) = composite_gl(t0, t1, 1, order);
        let taus: Vec<f64> = x
            .iter()
            .flat_map(|t| [*t, t - shift_t])
            .filter(|t| *t > self.cut)
            .collect();
        if taus.is_empty() {
            return Ok((0.0, 0.0));
        }
        let lo = taus.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = taus.iter().cloned().fold(0.0, f64::max);
        let mut last = (0.0, 0.0);
        for doubling in 0..=MAX_DOUBLINGS {
            let lat = self.lattice_for(lo, hi, doubling)?;
            let parts: Vec<Slice> = x
                .par_iter()
                .map(|t| {
                    if abs_only {
                        self.slice(&lat, *t, y, 0.0, r0, false)
                    } else {
                        self.slice(&lat, t - shift_t, y, *t, r0, true)
                    }
                })
                .collect();
            let v: f64 = parts.iter().zip(&w).map(|(p, w)| p.value * w).sum();
            let tail: f64 = parts.iter().zip(&w).map(|(p, w)| p.tail * w).sum();
            last = (v, tail);
            if tail <= EXTENT_TOL * v || v == 0.0 {
                return Ok(last);
            }
        }
        Err(Error::Extent(format!(
            "spatial tail {:.3e} of {:.3e} on t ∈ [{t0:.3e}, {t1:.3e}] after {MAX_DOUBLINGS} period doublings",
            last.1, last.0
        )))
    }

    /// ∫ over [a, b] split at the breakpoints, unit-or-smaller panels.
    fn time_integral(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        shift_t: f64,
        y: &[f64],
        r0: f64,
        abs_only: bool,
    ) -> Result<(f64, f64)> {
        let mut pts: Vec<f64> = vec![a, b];
        pts.extend(breaks.iter().filter(|p| **p > a && **p < b));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut acc = (0.0, 0.0);
        for seg in pts.windows(2) {
            let panels = ((seg[1] - seg[0]).ceil() as usize).max(2);
            let h = (seg[1] - seg[0]) / panels as f64;
            for k in 0..panels {
                let p = self.panel(
                    seg[0] + k as f64 * h,
                    seg[0] + (k + 1) as f64 * h,
                    PANEL_ORDER,
                    shift_t,
                    y,
                    r0,
                    abs_only,
                )?;
                acc.0 += p.0;
                acc.1 += p.1;
            }
        }
        Ok(acc)
    }
}

/// Σ over doubling panels [a·2^j, a·2^{j+1}] plus a geometric remainder.
fn doubling_tail(a: f64, mut panel: impl FnMut(f64, f64) -> Result<f64>) -> Result<(f64, f64)> {
    let mut acc = 0.0;
    let mut prev = f64::NAN;
    let mut lo = a;
    for j in 0..200 {
        let v = panel(lo, 2.0 * lo)?;
        acc += v;
        lo *= 2.0;
        if v == 0.0 {
            return Ok((acc, 0.0));
        }
        if j >= 2 {
            let r = v / prev;
            if r < 0.9 {
                let rem = v * r / (1.0 - r);
                if rem <= 1e-6 * acc || j >= 60 {
                    return Ok((acc + rem, rem));
                }
            }
        }
        prev = v;
    }
    Err(Error::Extent(format!(
        "time tail from {a:e} does not decay geometrically"
    )))
}

fn gl_integral(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, order: usize) -> Result<f64> {
    let (x, w) = gauss_legendre(order);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        s += wi * f(c + h * xi)?;
    }
    Ok(s * h)
}

/// Envelope integrals E₁ = ∫_0^{c̄+1}(1 + tγ^{−α₁} + 1_{σ>1}γ^{−1}) and
/// E₂ = 1 + ∫_{c̄−1}^∞(γ^{−2α₂} + γ^{−1−α₂}).
fn envelopes(sf: &ScalingFunction, sigma: f64, c_bar: f64) -> Result<(f64, f64)> {
    let (a1, a2) = (sf.alpha1, sf.alpha2);
    let f1 = |t: f64| -> Result<f64> {
        let g = sf.gamma(t)?;
        Ok(1.0 + t * g.powf(-a1) + if sigma > 1.0 { 1.0 / g } else { 0.0 })
    };
    // t = s⁶ smooths the integrable endpoint singularity.
    let top = (c_bar + 1.0).powf(1.0 / 6.0);
    let (x, w) = composite_gl(0.0, top, 64, 10);
    let mut e1 = 0.0;
    for (s, wi) in x.iter().zip(&w) {
        e1 += wi * f1(s.powi(6))? * 6.0 * s.powi(5);
    }
    let f2 = |t: f64| -> Result<f64> {
        let g = sf.gamma(t)?;
        Ok(g.powf(-2.0 * a2) + g.powf(-1.0 - a2))
    };
    let (e2, _) = doubling_tail(c_bar - 1.0, |a, b| gl_integral(&f2, a, b, 16))?;
    Ok((e1, 1.0 + e2))
}

fn shift_samples(dim: usize, count: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
    let mut out = Vec::new();
    for s in [1.0, -1.0] {
        for y in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[0] = y;
            out.push((s, v));
        }
    }
    out.push((1.0, vec![0.0; dim]));
    let mut e = vec![0.0; dim];
    e[dim - 1] = 1.0;
    out.push((0.0, e));
    out.truncate(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        let s = rng.random_range(-1.0..=1.0);
        let y = loop {
            let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            if y.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break y;
            }
        };
        out.push((s, y));
    }
    out
}

/// B₁ and B₂ for one radius and shift.
struct ShiftResult {
    b1: f64,
    b2: f64,
    tail: f64,
}

fn evaluate_shift(k: &Kernel, c_bar: f64, s: f64, y: &[f64]) -> Result<ShiftResult> {
    if s == 0.0 && y.iter().all(|v| *v == 0.0) {
        return Ok(ShiftResult {
            b1: 0.0,
            b2: 0.0,
            tail: 0.0,
        });
    }
    let lo = k.cut + s.min(0.0);
    let (b1, t1) = if lo < c_bar {
        k.time_integral(lo, c_bar, &[k.cut, k.cut + s.max(0.0)], s, y, k.c, false)?
    } else {
        (0.0, 0.0)
    };
    let mut tail = t1;
    let (b2, _) = doubling_tail(c_bar, |a, b| {
        let (v, t) = k.panel(a, b, TAIL_ORDER, s, y, 0.0, false)?;
        tail += t;
        Ok(v)
    })?;
    Ok(ShiftResult { b1, b2, tail })
}

/// Sup over shift samples of B for each δ. Passes iff every value is finite,
/// max/min across δ is below DELTA_VARIATION, B₁ ≤ J₁ = 2∫_cut^{c̄+1}∫_{|x|>2}|k|,
/// and the ratios B₁/E₁ and B₂/E₂ vary by less than DELTA_VARIATION.
pub fn hormander_check(
    spec: &LevyMeasureSpec,
    spec0: &LevyMeasureSpec,
    sf: &ScalingFunction,
    delta_list: &[f64],
    opts: &HormanderOpts,
) -> Result<EstimateReport> {
    if spec.dim != spec0.dim {
        return Err(Error::Shape(
            "spec and spec0 live in different dimensions".into(),
        ));
    }
    if !(opts.c_factor > 4.0) {
        return Err(Error::Validation(format!(
            "c = {} must exceed 4",
            opts.c_factor
        )));
    }
    if delta_list.is_empty() || opts.shifts == 0 {
        return Err(Error::Validation(
            "need at least one radius and one shift".into(),
        ));
    }
    if opts.lambda < 0.0 || !(opts.eps > 0.0) || !(opts.tau_floor > 0.0) {
        return Err(Error::Domain(
            "λ ≥ 0, ε > 0 and tau_floor > 0 required".into(),
        ));
    }
    let c_bar = 1.0 / sf.l(1.0 / opts.c_factor)?;
    if !(c_bar > 3.0) {
        return Err(Error::Validation(format!(
            "c̄ = 1/l(1/c) = {c_bar} must exceed 3"
        )));
    }
    let (e1, e2) = envelopes(sf, spec0.order, c_bar)?;
    let shifts = shift_samples(spec.dim, opts.shifts, opts.seed);
    let mut sup = Vec::new();
    let mut b1s = Vec::new();
    let mut b2s = Vec::new();
    let mut j1s = Vec::new();
    let mut tails = Vec::new();
    let mut cuts = Vec::new();
    let mut argmax = Vec::new();
    for &delta in delta_list {
        let kd = sf.kappa(delta)?;
        let k = Kernel {
            dim: spec.dim,
            spec: spec.rescaled(delta, kd)?,
            spec0: spec0.rescaled(delta, kd)?,
            damp: opts.lambda * kd,
            cut: (opts.eps / kd).max(opts.tau_floor),
            c: opts.c_factor,
            cache: Mutex::new(HashMap::new()),
        };
        if k.cut >= c_bar {
            return Err(Error::Validation(format!(
                "kernel cut {:e} is beyond c̄ = {c_bar}",
                k.cut
            )));
        }
        let mut best: Option<(usize, ShiftResult)> = None;
        for (i, (s, y)) in shifts.iter().enumerate() {
            let r = evaluate_shift(&k, c_bar, *s, y)?;
            if best.as_ref().is_none_or(|(_, b)| r.b1 + r.b2 > b.b1 + b.b2) {
                best = Some((i, r));
            }
        }
        let (i, r) = best.expect("one shift");
        let (j1, _) = k.time_integral(
            k.cut,
            c_bar + 1.0,
            &[],
            0.0,
            &vec![0.0; spec.dim],
            2.0,
            true,
        )?;
        sup.push(r.b1 + r.b2);
        b1s.push(r.b1);
        b2s.push(r.b2);
        j1s.push(2.0 * j1);
        tails.push(r.tail / (r.b1 + r.b2).max(f64::MIN_POSITIVE));
        cuts.push(k.cut);
        argmax.push(i as f64);
    }
    let finite = sup.iter().all(|v| v.is_finite() && *v > 0.0);
    let variation = spread(&sup);
    let b1_ok = b1s.iter().zip(&j1s).all(|(b, j)| *b <= j * (1.0 + 1e-9));
    let r1: Vec<f64> = b1s.iter().map(|b| b / e1).collect();
    let r2: Vec<f64> = b2s.iter().map(|b| b / e2).collect();
    let track = |r: &[f64]| r.iter().all(|v| *v == 0.0) || spread(r) < DELTA_VARIATION;
    let pass = finite && variation < DELTA_VARIATION && b1_ok && track(&r1) && track(&r2);
    let a = sup.iter().cloned().fold(0.0, f64::max);
    Ok(
        EstimateReport::fitted("hormander", sup.clone(), vec![a; sup.len()], Some(a), pass)
            .with_sweep("delta", delta_list.to_vec())
            .with_sweep("b1", b1s)
            .with_sweep("b2", b2s)
            .with_sweep("j1", j1s)
            .with_sweep("b1_over_e1", r1)
            .with_sweep("b2_over_e2", r2)
            .with_sweep("tail_fraction", tails)
            .with_sweep("cut", cuts)
            .with_sweep("argmax_shift", argmax)
            .with_diag("c", opts.c_factor)
            .with_diag("c_bar", c_bar)
            .with_diag("e1", e1)
            .with_diag("e2", e2)
            .with_diag("variation", variation)
            .with_diag("b1_le_j1", b1_ok)
            .with_diag("shifts", &shifts)
            .with_diag("opts", opts)
            .with_provenance("spec_digest", spec.digest())
            .with_provenance("spec0_digest", spec0.digest()),
    )
}
