//! Lévy symbols ψ(ξ) = ∫[e^{i2πξ·y} − 1 − i2πχ_σ(y)ξ·y] π(dy).
//!
//! For polar measures ψ(ξ) = ∫_S A(w) I(2πξ·w) S(dw) with the radial profile
//! I(a) = ∫[e^{iar} − 1 − iarχ(r)] ρ(r) dr. I(a) is computed in x = ar:
//! a Taylor series for x < 1e−4, Gauss–Kronrod on log panels up to π and
//! half-period panels up to 128π, then an integration-by-parts expansion of
//! the oscillatory tail plus non-oscillatory tail integrals. On a Lebesgue
//! sphere in d ≥ 2 the angular integral is split at the zeros of ξ·w and
//! integrated with sigmoid-mapped Gauss–Legendre rules.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::measure::{Cutoff, LevyMeasureSpec, RadialView, SphereMeasure};
use crate::quad::{self, QuadOpts, UniformCubic};
use crate::report::EstimateReport;
use crate::scaling::ScalingFunction;

/// Switch to the Taylor form below this value of |2πξ·y|.
pub const TAYLOR_SWITCH: f64 = 1e-4;
/// End of explicit oscillatory quadrature in x = ar.
pub const X_OSC: f64 = 128.0 * PI;
const PROFILE_PER_DECADE: f64 = 32.0;
const SIGMOID_POWER: i32 = 3;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Clone)]
struct Profile {
    ln_a_lo: f64,
    ln_a_hi: f64,
    ln_re: UniformCubic,
    im_ratio: UniformCubic,
}

#[derive(Clone)]
enum Kind {
    Atomic(Vec<(Vec<f64>, f64)>),
    Radial {
        view: RadialView,
        profile: Option<Profile>,
    },
}

/// Evaluates ψ for one measure; immutable and shareable across threads.
#[derive(Clone)]
pub struct SymbolEvaluator {
    pub dim: usize,
    pub cutoff: Cutoff,
    kind: Kind,
    lebesgue_order: usize,
}

impl SymbolEvaluator {
    pub fn new(spec: &LevyMeasureSpec) -> Result<Self> {
        let kind = match spec.atoms() {
            Some(a) => Kind::Atomic(a),
            None => Kind::Radial {
                view: spec.radial_view()?.expect("non-atomic"),
                profile: None,
            },
        };
        let lebesgue_order = match &spec.form {
            crate::measure::MeasureForm::Subordinated {
                sphere: SphereMeasure::Lebesgue { order },
                ..
            } => (*order).max(16),
            _ => 32,
        };
        Ok(SymbolEvaluator {
            dim: spec.dim,
            cutoff: spec.cutoff,
            kind,
            lebesgue_order,
        })
    }

    /// Tabulates I(a) on [a_lo, a_hi] (32 nodes per decade, cubic in
    /// log-log) for fast repeated evaluation.
    pub fn with_profile(mut self, a_lo: f64, a_hi: f64) -> Result<Self> {
        let Kind::Radial { view, profile } = &mut self.kind else {
            return Ok(self);
        };
        let (l0, l1) = (a_lo.ln(), a_hi.ln());
        let n =
            (((l1 - l0) / std::f64::consts::LN_10 * PROFILE_PER_DECADE).ceil() as usize).max(4) + 1;
        let dx = (l1 - l0) / (n - 1) as f64;
        let cutoff = self.cutoff;
        let vals: Vec<Result<Complex64>> = (0..n)
            .into_par_iter()
            .map(|i| radial_profile(view, cutoff, (l0 + dx * i as f64).exp()))
            .collect();
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for v in vals {
            let v = v?;
            let m = (-v.re).max(1e-300);
            re.push(m.ln());
            im.push(v.im / m);
        }
        *profile = Some(Profile {
            ln_a_lo: l0,
            ln_a_hi: l1,
            ln_re: UniformCubic::new(l0, dx, re),
            im_ratio: UniformCubic::new(l0, dx, im),
        });
        Ok(self)
    }

    /// I(a) for real a (conjugate for a < 0).
    fn profile_at(
        &self,
        view: &RadialView,
        profile: &Option<Profile>,
        a: f64,
    ) -> Result<Complex64> {
        if a == 0.0 {
            return Ok(c(0.0, 0.0));
        }
        let aa = a.abs();
        let v = match profile {
            Some(p) if aa.ln() <= p.ln_a_hi + 1e-12 && aa.ln() >= p.ln_a_lo - 1e-12 => {
                let la = aa.ln();
                let m = p.ln_re.eval(la).exp();
                c(-m, m * p.im_ratio.eval(la))
            }
            _ => radial_profile(view, self.cutoff, aa)?,
        };
        Ok(if a < 0.0 { v.conj() } else { v })
    }

    pub fn eval(&self, xi: &[f64]) -> Result<Complex64> {
        if xi.len() != self.dim {
            return Err(Error::Shape(format!(
                "frequency of length {} in d={}",
                xi.len(),
                self.dim
            )));
        }
        let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(c(0.0, 0.0));
        }
        match &self.kind {
            Kind::Atomic(atoms) => Ok(atomic_symbol(atoms, self.cutoff, xi)),
            Kind::Radial { view, profile } => {
                if view.sphere_is_lebesgue() && self.dim >= 2 {
                    self.lebesgue_symbol(view, profile, xi, norm)
                } else {
                    let mut acc = c(0.0, 0.0);
                    for (w, m) in view.sphere_nodes() {
                        let dot: f64 = xi.iter().zip(&w).map(|(a, b)| a * b).sum();
                        acc += m * self.profile_at(view, profile, 2.0 * PI * dot)?;
                    }
                    Ok(acc)
                }
            }
        }
    }

    fn lebesgue_symbol(
        &self,
        view: &RadialView,
        profile: &Option<Profile>,
        xi: &[f64],
        norm: f64,
    ) -> Result<Complex64> {
        let (s, ws) = sigmoid_rule(self.lebesgue_order);
        let e3: Vec<f64> = xi.iter().map(|x| x / norm).collect();
        let mut acc = c(0.0, 0.0);
        if self.dim == 2 {
            let th0 = e3[1].atan2(e3[0]);
            for (lo, hi) in [(-PI / 2.0, PI / 2.0), (PI / 2.0, 1.5 * PI)] {
                for (si, wi) in s.iter().zip(&ws) {
                    let th = lo + (hi - lo) * si;
                    let w = [(th0 + th).cos(), (th0 + th).sin()];
                    let a = 2.0 * PI * norm * th.cos();
                    acc += wi * (hi - lo) * view.angular(&w) * self.profile_at(view, profile, a)?;
                }
            }
            return Ok(acc);
        }
        // d = 3: polar axis along ξ, z = cos θ split at 0, trapezoid in azimuth.
        let (e1, e2) = orthonormal_complement(&e3);
        let nphi = self.lebesgue_order;
        for (lo, hi) in [(-1.0, 0.0), (0.0, 1.0)] {
            for (si, wi) in s.iter().zip(&ws) {
                let z: f64 = lo + (hi - lo) * si;
                let rr = (1.0 - z * z).max(0.0).sqrt();
                let mut ang = 0.0;
                for k in 0..nphi {
                    let ph = 2.0 * PI * (k as f64 + 0.5) / nphi as f64;
                    let w: Vec<f64> = (0..3)
                        .map(|i| rr * (ph.cos() * e1[i] + ph.sin() * e2[i]) + z * e3[i])
                        .collect();
                    ang += view.angular(&w);
                }
                ang *= 2.0 * PI / nphi as f64;
                acc +=
                    wi * (hi - lo) * ang * self.profile_at(view, profile, 2.0 * PI * norm * z)?;
            }
        }
        Ok(acc)
    }

    /// Smallest and largest |a| = |2πξ·w| the evaluator will request for
    /// frequencies with the given norm range.
    pub fn a_range(&self, xi_min: f64, xi_max: f64) -> (f64, f64) {
        let lo = if self.dim >= 2 { 1e-12 } else { 1.0 };
        (
            2.0 * PI * xi_min * lo * (1.0 - 1e-9),
            2.0 * PI * xi_max * (1.0 + 1e-9),
        )
    }
}

fn orthonormal_complement(e3: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pick = if e3[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let dot: f64 = pick.iter().zip(e3).map(|(a, b)| a * b).sum();
    let mut e1: Vec<f64> = pick.iter().zip(e3).map(|(a, b)| a - dot * b).collect();
    let n = e1.iter().map(|x| x * x).sum::<f64>().sqrt();
    e1.iter_mut().for_each(|x| *x /= n);
    let e2 = vec![
        e3[1] * e1[2] - e3[2] * e1[1],
        e3[2] * e1[0] - e3[0] * e1[2],
        e3[0] * e1[1] - e3[1] * e1[0],
    ];
    (e1, e2)
}

/// Gauss–Legendre on [0, 1] composed with v(s) = s^p/(s^p + (1−s)^p);
/// returns mapped nodes v(s_i) and weights w_i·v′(s_i).
pub fn sigmoid_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = quad::gauss_legendre(order);
    let p = SIGMOID_POWER;
    x.iter()
        .zip(&w)
        .map(|(xi, wi)| {
            let s = 0.5 * (xi + 1.0);
            let (a, b) = (s.powi(p), (1.0 - s).powi(p));
            let v = a / (a + b);
            let dv = p as f64 * s.powi(p - 1) * (1.0 - s).powi(p - 1) / (a + b).powi(2);
            (v, 0.5 * wi * dv)
        })
        .unzip()
}

pub fn atomic_symbol(atoms: &[(Vec<f64>, f64)], cutoff: Cutoff, xi: &[f64]) -> Complex64 {
    let mut acc = c(0.0, 0.0);
    for (y, m) in atoms {
        let dot: f64 = xi.iter().zip(y).map(|(a, b)| a * b).sum();
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x = 2.0 * PI * dot;
        // e^{ix} − 1 = 2i sin(x/2) e^{ix/2}
        let e = c(0.0, 2.0 * (0.5 * x).sin()) * Complex64::from_polar(1.0, 0.5 * x);
        acc += m * (e - c(0.0, cutoff.chi(r) * x));
    }
    acc
}

/// I(a) = ∫₀^cap [e^{iar} − 1 − iarχ(r)] ρ(r) dr for a > 0.
pub fn radial_profile(view: &RadialView, cutoff: Cutoff, a: f64) -> Result<Complex64> {
    debug_assert!(a > 0.0);
    let cap = view.cap;
    let chi = |r: f64| cutoff.chi(r);
    // Taylor region r ≤ r0.
    let r0 = (TAYLOR_SWITCH / a).min(cap);
    let taylor = |lo: f64, hi: f64, chi_v: f64| -> Result<Complex64> {
        let re = view.radial_integral(
            |r| {
                let x2 = (a * r).powi(2);
                -x2 / 2.0 * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0))
            },
            lo,
            hi,
        )?;
        let im = view.radial_integral(
            |r| {
                let x = a * r;
                let x2 = x * x;
                x * (1.0 - chi_v) - x * x2 / 6.0 * (1.0 - x2 / 20.0)
            },
            lo,
            hi,
        )?;
        Ok(c(re, im))
    };
    let mut total = if cutoff == Cutoff::UnitBall && r0 > 1.0 {
        taylor(0.0, 1.0, 1.0)? + taylor(1.0, r0, 0.0)?
    } else {
        taylor(0.0, r0, chi(r0 * (1.0 - 1e-15)))?
    };
    if r0 >= cap {
        return Ok(total);
    }
    // Oscillatory region in x = ar.
    let x0 = TAYLOR_SWITCH;
    let xe = (a * cap).min(X_OSC);
    let mut breaks = Vec::new();
    let log_end = xe.min(PI);
    let decades = ((log_end / x0).log10().ceil() as usize).max(1);
    for i in 0..=decades {
        breaks.push(x0 * (log_end / x0).powf(i as f64 / decades as f64));
    }
    let mut x = 2.0 * PI;
    while x < xe {
        breaks.push(x);
        x += PI;
    }
    if xe > PI {
        breaks.push(xe);
    }
    if cutoff == Cutoff::UnitBall && a > x0 && a < xe {
        breaks.push(a);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let g = |x: f64| view.rho(x / a) / a;
    let osc = quad::adaptive_breaks(
        |x| {
            let gv = g(x);
            let s = (0.5 * x).sin();
            [-2.0 * s * s * gv, (x.sin() - x * chi(x / a)) * gv]
        },
        &breaks,
        QuadOpts {
            abs_tol: 1e-300,
            rel_tol: 1e-13,
            max_intervals: 20_000,
        },
    );
    if !osc.converged {
        return Err(Error::Accuracy {
            message: format!("oscillatory symbol quadrature at a={a:e}"),
            achieved: osc.error,
        });
    }
    total += c(osc.value[0], osc.value[1]);
    if a * cap <= X_OSC {
        return Ok(total);
    }
    // Tail x > X_OSC: ∫ e^{ix} g by parts, minus ∫ g and ∫ xχg.
    let b = a * cap;
    total += ibp_tail(&g, X_OSC);
    if b.is_finite() {
        total -= ibp_tail(&g, b);
    }
    let r1 = X_OSC / a;
    let mass = view.radial_integral(|_| 1.0, r1, cap)?;
    let drift = match cutoff {
        Cutoff::None => 0.0,
        Cutoff::UnitBall => {
            if r1 < 1.0 {
                a * view.radial_integral(|r| r, r1, cap.min(1.0))?
            } else {
                0.0
            }
        }
        Cutoff::AllSpace => a * view.radial_integral(|r| r, r1, cap)?,
    };
    total += c(-mass, -drift);
    Ok(total)
}

/// Asymptotic value of ∫_X^∞ e^{ix} g(x) dx: e^{iX}[i g − g′ − i g″ + g‴].
pub(crate) fn ibp_tail<G: Fn(f64) -> f64>(g: &G, x: f64) -> Complex64 {
    let h = 1e-2 * x;
    let (gm2, gm1, g0, gp1, gp2) = (g(x - 2.0 * h), g(x - h), g(x), g(x + h), g(x + 2.0 * h));
    let d1 = (gp1 - gm1) / (2.0 * h);
    let d2 = (gp1 - 2.0 * g0 + gm1) / (h * h);
    let d3 = (gp2 - 2.0 * gp1 + 2.0 * gm1 - gm2) / (2.0 * h * h * h);
    Complex64::from_polar(1.0, x) * c(-d1 + d3, g0 - d2)
}

/// Frequency set of a symbol table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreqGrid {
    /// Dual lattice of a periodic grid, in GridFunction index order.
    Lattice {
        dim: usize,
        n: usize,
        period: f64,
    },
    List {
        points: Vec<Vec<f64>>,
    },
}

impl FreqGrid {
    pub fn dual_of(u: &GridFunction) -> Self {
        FreqGrid::Lattice {
            dim: u.dim,
            n: u.n,
            period: u.period,
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            FreqGrid::List { points } => points.clone(),
            FreqGrid::Lattice { dim, n, period } => {
                let g = GridFunction {
                    dim: *dim,
                    n: *n,
                    period: *period,
                    values: Vec::new(),
                };
                (0..n.pow(*dim as u32)).map(|i| g.freq(i)).collect()
            }
        }
    }

    pub fn matches(&self, u: &GridFunction) -> bool {
        matches!(self, FreqGrid::Lattice { dim, n, period }
            if *dim == u.dim && *n == u.n && (period - u.period).abs() <= 1e-12 * period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolTable {
    pub grid: FreqGrid,
    pub psi: Vec<Complex64>,
    pub spec_digest: String,
    pub profile_used: bool,
}

impl SymbolTable {
    pub fn psi_tilde(&self) -> Vec<f64> {
        self.psi.iter().map(|p| p.re).collect()
    }

    pub fn phi_im(&self) -> Vec<f64> {
        self.psi.iter().map(|p| p.im).collect()
    }

    /// Cache key: digest of the spec identity and the frequency grid.
    pub fn cache_key(&self) -> String {
        crate::report::digest_json(&(&self.spec_digest, &self.grid))
    }

    /// Compact binary form: u64 row count, then (Re, Im) little-endian
    /// f64 pairs; the grid and spec are carried by the cache key.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(8 + 16 * self.psi.len());
        b.extend_from_slice(&(self.psi.len() as u64).to_le_bytes());
        for v in &self.psi {
            b.extend_from_slice(&v.re.to_le_bytes());
            b.extend_from_slice(&v.im.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(grid: FreqGrid, spec_digest: String, bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Io("malformed symbol cache".into());
        let n = u64::from_le_bytes(
            bytes
                .get(..8)
                .ok_or_else(bad)?
                .try_into()
                .map_err(|_| bad())?,
        ) as usize;
        if bytes.len() != 8 + 16 * n {
            return Err(bad());
        }
        let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let psi = (0..n).map(|k| c(f(8 + 16 * k), f(16 + 16 * k))).collect();
        Ok(SymbolTable {
            grid,
            psi,
            spec_digest,
            profile_used: false,
        })
    }

    pub fn to_csv(&self) -> String {
        let pts = self.grid.points();
        let d = pts.first().map_or(1, |p| p.len());
        let mut s = String::new();
        for a in 0..d {
            s.push_str(&format!("xi{a},"));
        }
        s.push_str("re_psi,im_psi\n");
        for (p, v) in pts.iter().zip(&self.psi) {
            for x in p {
                s.push_str(&format!("{x:.16e},"));
            }
            s.push_str(&format!("{:.16e},{:.16e}\n", v.re, v.im));
        }
        s
    }
}

/// Above this many radial evaluations the tabulated profile is used.
pub const PROFILE_THRESHOLD: usize = 4096;

pub fn evaluate(spec: &LevyMeasureSpec, grid: &FreqGrid) -> Result<SymbolTable> {
    let pts = grid.points();
    let mut ev = SymbolEvaluator::new(spec)?;
    let mut profile_used = false;
    if !spec.is_atomic() {
        let nodes = if spec.dim == 1 { 2 } else { 64 };
        if pts.len() * nodes > PROFILE_THRESHOLD {
            let norms: Vec<f64> = pts
                .iter()
                .map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt())
                .filter(|v| *v > 0.0)
                .collect();
            if !norms.is_empty() {
                let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = norms.iter().cloned().fold(0.0, f64::max);
                let (alo, ahi) = ev.a_range(lo, hi);
                ev = ev.with_profile(alo, ahi)?;
                profile_used = true;
            }
        }
    }
    let psi: Vec<Result<Complex64>> = pts.par_iter().map(|p| ev.eval(p)).collect();
    let psi = psi.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SymbolTable {
        grid: grid.clone(),
        psi,
        spec_digest: spec.digest(),
        profile_used,
    })
}

/// Symbol on the dual lattice of a grid.
pub fn evaluate_on(spec: &LevyMeasureSpec, u: &GridFunction) -> Result<SymbolTable> {
    evaluate(spec, &FreqGrid::dual_of(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparability {
    pub c1_hat: f64,
    pub c2_hat: f64,
}

pub fn comparability(
    a: &LevyMeasureSpec,
    b: &LevyMeasureSpec,
    grid: &FreqGrid,
) -> Result<Comparability> {
    comparability_tables(&evaluate(a, grid)?, &evaluate(b, grid)?)
}

/// min/max of |ψ_A|/|ψ_B| over nonzero grid frequencies.
pub fn comparability_tables(a: &SymbolTable, b: &SymbolTable) -> Result<Comparability> {
    if a.grid != b.grid {
        return Err(Error::Shape("symbol tables on different grids".into()));
    }
    let pts = a.grid.points();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for ((p, x), y) in pts.iter().zip(&a.psi).zip(&b.psi) {
        if p.iter().all(|v| *v == 0.0) {
            continue;
        }
        if y.norm() == 0.0 {
            return Err(Error::Degenerate(format!(
                "reference symbol vanishes at ξ={p:?}"
            )));
        }
        let r = x.norm() / y.norm();
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok(Comparability {
        c1_hat: lo,
        c2_hat: hi,
    })
}

pub fn symbol_bounds(
    spec: &LevyMeasureSpec,
    sf: &ScalingFunction,
    grid: &FreqGrid,
) -> Result<EstimateReport> {
    symbol_bounds_table(&evaluate(spec, grid)?, sf)
}

/// Ratios −ψ̃(ξ)·κ(|ξ|⁻¹) and |Im ψ(ξ)|·κ(|ξ|⁻¹) over the grid, with
/// κ(∞)⁻¹ = 0 at ξ = 0. Bounded means positive and finite everywhere with
/// no power-law drift at either end of the |ξ| range: the log-log slope of
/// the ratio over the lowest and highest quarter of the sweep stays below
/// [`DRIFT_SLOPE`].
pub fn symbol_bounds_table(table: &SymbolTable, sf: &ScalingFunction) -> Result<EstimateReport> {
    let pts = table.grid.points();
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (p, v) in pts.iter().zip(&table.psi) {
        let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            if v.norm() != 0.0 {
                return Ok(EstimateReport::fitted(
                    "symbol_bounds",
                    vec![v.norm()],
                    vec![0.0],
                    None,
                    false,
                )
                .with_diag("offending_xi", p));
            }
            continue;
        }
        let k = sf.kappa(1.0 / n)?;
        rows.push((n, -v.re * k, v.im.abs() * k));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let norms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let im_ratios: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let im_hi = im_ratios.iter().cloned().fold(0.0, f64::max);
    let finite = lo > 0.0 && hi.is_finite() && im_hi.is_finite();
    let q = (rows.len() / 4).max(2).min(rows.len());
    let end_slope = |r: &[(f64, f64, f64)]| {
        let x: Vec<f64> = r.iter().map(|v| v.0).collect();
        let y: Vec<f64> = r.iter().map(|v| v.1.max(v.2)).collect();
        crate::report::loglog_slope(&x, &y)
    };
    let (s_lo, s_hi) = if rows.len() >= 4 && norms[0] < norms[rows.len() - 1] {
        (end_slope(&rows[..q]), end_slope(&rows[rows.len() - q..]))
    } else {
        (0.0, 0.0)
    };
    let drift = |s: f64| s.is_finite() && s.abs() < DRIFT_SLOPE;
    let pass = finite && drift(s_lo) && drift(s_hi);
    let offending = if !finite {
        rows.iter()
            .find(|r| !(r.1 > 0.0 && r.1.is_finite() && r.2.is_finite()))
            .map(|r| r.0)
    } else if !drift(s_lo) {
        norms.first().copied()
    } else if !drift(s_hi) {
        norms.last().copied()
    } else {
        None
    };
    let mut rep = EstimateReport::fitted(
        "symbol_bounds",
        ratios.clone(),
        vec![hi.max(im_hi); ratios.len()],
        Some(hi.max(im_hi)),
        pass,
    )
    .with_sweep("xi_norm", norms)
    .with_sweep("im_ratio", im_ratios)
    .with_diag("c_lower", lo)
    .with_diag("c_upper", hi.max(im_hi))
    .with_diag("slope_low_end", s_lo)
    .with_diag("slope_high_end", s_hi);
    if let Some(x) = offending {
        rep = rep.with_diag("offending_xi_norm", x);
    }
    Ok(rep)
}

/// Largest admissible log-log drift of the κ-normalized symbol.
pub const DRIFT_SLOPE: f64 = 0.1;

pub fn real_dominates(spec: &LevyMeasureSpec, grid: &FreqGrid) -> Result<f64> {
    Ok(real_dominates_table(&evaluate(spec, grid)?))
}

/// min over nonzero ξ of |ψ̃|/|ψ|.
pub fn real_dominates_table(table: &SymbolTable) -> f64 {
    table
        .psi
        .iter()
        .filter(|v| v.norm() > 0.0)
        .map(|v| v.re.abs() / v.norm())
        .fold(1.0, f64::min)
}

/// The stable constant c with ψ(ξ) = −c|ξ|^σ, evaluated at ξ = e₁.
pub fn stable_constant(d: usize, sigma: f64) -> Result<f64> {
    let s = crate::measure::build_stable(d, sigma, 1.0)?;
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    Ok(-SymbolEvaluator::new(&s)?.eval(&e1)?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::BernsteinSpec;
    use crate::measure::{build_atomic, build_stable, build_subordinated, Modifier};
    use statrs::function::gamma::gamma;

    /// ∫₀^∞ (1 − cos r) r^{−1−σ} dr = −Γ(−σ)cos(πσ/2) (π/2 at σ = 1).
    fn cos_moment(sigma: f64) -> f64 {
        if sigma == 1.0 {
            PI / 2.0
        } else {
            -gamma(-sigma) * (PI * sigma / 2.0).cos()
        }
    }

    #[test]
    fn stable_1d_matches_gamma_closed_form() {
        for sigma in [0.5, 1.0, 1.5] {
            let s = build_stable(1, sigma, 1.0).unwrap();
            let ev = SymbolEvaluator::new(&s).unwrap();
            for xi in [0.01, 1.0, 37.0] {
                let v = ev.eval(&[xi]).unwrap();
                let oracle = -2.0 * (2.0 * PI * xi).powf(sigma) * cos_moment(sigma);
                assert!(
                    (v.re / oracle - 1.0).abs() < 1e-9,
                    "σ={sigma} ξ={xi} {v} {oracle}"
                );
                assert!(v.im.abs() < 1e-12 * v.re.abs());
            }
        }
    }

    #[test]
    fn stable_2d_matches_closed_form() {
        let sigma = 1.5;
        let s = build_stable(2, sigma, 1.0).unwrap();
        let ev = SymbolEvaluator::new(&s).unwrap();
        let ang = 2.0 * PI.sqrt() * gamma((sigma + 1.0) / 2.0) / gamma(sigma / 2.0 + 1.0);
        for xi in [[1.0f64, 0.0], [0.3, -2.0]] {
            let n = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            let oracle = -ang * (2.0 * PI * n).powf(sigma) * cos_moment(sigma);
            let v = ev.eval(&xi).unwrap();
            assert!((v.re / oracle - 1.0).abs() < 1e-7, "{v} {oracle}");
        }
    }

    #[test]
    fn atomic_half_frequency() {
        let a = build_atomic(1, vec![(vec![1.0], 1.0)], 0.0).unwrap();
        let v = SymbolEvaluator::new(&a).unwrap().eval(&[0.5]).unwrap();
        assert!((v - c(-2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn truncated_measure_profile_matches_direct_cosine_integral() {
        // Capped stable, unit density per direction: ψ = 2∫₀^{0.7} (cos ar − 1) r^{−1.5} dr.
        let s = build_stable(1, 0.5, 1.0).unwrap().restricted(0.7, 1.0);
        let ev = SymbolEvaluator::new(&s).unwrap();
        let a = 2.0 * PI * 3.0;
        let oracle = quad::integrate(
            |r| 2.0 * (-2.0 * (0.5 * a * r).sin().powi(2)) * r.powf(-1.5),
            1e-12,
            0.7,
            QuadOpts::rel(1e-12),
        );
        let head = 2.0 * (-(a * a) / 2.0) * (1e-12f64).powf(1.5) / 1.5;
        let v = ev.eval(&[3.0]).unwrap();
        assert!(
            (v.re / (oracle.value[0] + head) - 1.0).abs() < 1e-8,
            "{v} {}",
            oracle.value[0] + head
        );
    }

    #[test]
    fn profile_table_agrees_with_direct() {
        let b = BernsteinSpec::ShiftedPower {
            alpha: 0.5,
            beta: 0.5,
        };
        let s = build_subordinated(1, b, Modifier::Unit, SphereMeasure::lebesgue()).unwrap();
        let direct = SymbolEvaluator::new(&s).unwrap();
        let tab = direct
            .clone()
            .with_profile(2.0 * PI * 0.1, 2.0 * PI * 200.0)
            .unwrap();
        for xi in [0.13, 1.0, 7.7, 150.0] {
            let a = direct.eval(&[xi]).unwrap();
            let b = tab.eval(&[xi]).unwrap();
            assert!((a - b).norm() < 1e-7 * a.norm(), "{xi} {a} {b}");
        }
    }

    #[test]
    fn reflection_conjugates_symbol() {
        let b = BernsteinSpec::PowerSum {
            exponents: vec![0.3],
        };
        let s = build_subordinated(
            2,
            b,
            Modifier::Directional {
                floor: 0.2,
                axis: vec![1.0, 0.0],
            },
            SphereMeasure::lebesgue(),
        )
        .unwrap();
        let r = s.reflect();
        let e = SymbolEvaluator::new(&s).unwrap();
        let er = SymbolEvaluator::new(&r).unwrap();
        for xi in [[0.7f64, 0.2], [-1.1, 2.0]] {
            let a = er.eval(&xi).unwrap();
            let b = e.eval(&[-xi[0], -xi[1]]).unwrap();
            assert!((a - b).norm() < 1e-10 * a.norm(), "{a} {b}");
            let cs = e.eval(&xi).unwrap().conj();
            assert!((cs - b).norm() < 1e-10 * a.norm());
            assert!(a.re <= 0.0);
        }
    }
    fn list(v: &[f64]) -> FreqGrid {
        FreqGrid::List {
            points: v.iter().map(|x| vec![*x]).collect(),
        }
    }

    #[test]
    fn stable_half_order_is_power_law_with_single_constant() {
        let s = build_stable(1, 0.5, 1.0).unwrap();
        let ev = SymbolEvaluator::new(&s).unwrap();
        // Oracle: plain adaptive quadrature of 2∫(cos 2πr − 1) r^{−1.5} dr at ξ = 1.
        let mut breaks = crate::quad::geomspace(1e-10, 1.0, 11);
        breaks.extend((2..=10_000).map(|k| k as f64));
        let body = quad::adaptive_breaks(
            |r| [2.0 * (-2.0 * (PI * r).sin().powi(2)) * r.powf(-1.5)],
            &breaks,
            QuadOpts::rel(1e-13),
        );
        let head = 2.0 * (-(2.0 * PI).powi(2) / 2.0) * (1e-10f64).powf(1.5) / 1.5;
        // ∫_N^∞ (cos 2πr − 1) r^{−1.5} dr = −2N^{−0.5} + O(N^{−2.5}) at integer N.
        let tail = 2.0 * -2.0 * (1e4f64).powf(-0.5);
        let c_oracle = -(body.value[0] + head + tail);
        let got = -ev.eval(&[1.0]).unwrap().re;
        assert!(
            (got / c_oracle - 1.0).abs() < 1e-6,
            "{got} {c_oracle} {}",
            body.converged
        );
        let xs = crate::quad::geomspace(1e-3, 1e3, 20);
        let ratios: Vec<f64> = xs
            .iter()
            .map(|x| -ev.eval(&[*x]).unwrap().re / x.sqrt())
            .collect();
        assert!(crate::report::spread(&ratios) - 1.0 < 1e-6);
        assert_eq!(ev.eval(&[0.0]).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn comparability_examples() {
        let s = build_stable(2, 0.7, 1.0).unwrap();
        let g = FreqGrid::List {
            points: vec![
                vec![0.0, 0.0],
                vec![1.0, 0.5],
                vec![-3.0, 0.1],
                vec![0.0, 20.0],
            ],
        };
        let same = comparability(&s, &s, &g).unwrap();
        assert_eq!((same.c1_hat, same.c2_hat), (1.0, 1.0));
        let two = comparability(&s.scaled(2.0), &s, &g).unwrap();
        assert!((two.c1_hat - 2.0).abs() < 1e-9 && (two.c2_hat - 2.0).abs() < 1e-9);

        let b = BernsteinSpec::PowerSum {
            exponents: vec![0.35],
        };
        let floor = 0.3;
        let m = Modifier::Directional {
            floor,
            axis: vec![0.0, 1.0],
        };
        let a = build_subordinated(2, b.clone(), m, SphereMeasure::lebesgue()).unwrap();
        let base = build_subordinated(2, b, Modifier::Unit, SphereMeasure::lebesgue()).unwrap();
        let r = comparability(&a, &base, &g).unwrap();
        assert!(r.c1_hat >= floor - 1e-9 && r.c2_hat <= 1.0 + 1e-9, "{r:?}");
    }

    #[test]
    fn real_dominates_examples() {
        let xs: Vec<f64> = (1..40)
            .map(|k| 0.137 * k as f64)
            .filter(|x| (x - x.round()).abs() > 1e-6)
            .collect();
        let a = build_atomic(1, vec![(vec![1.0], 1.0)], 0.0).unwrap();
        let got = real_dominates(&a, &list(&xs)).unwrap();
        let oracle = xs.iter().map(|x| (PI * x).sin().abs()).fold(1.0, f64::min);
        assert!((got - oracle).abs() < 1e-12);
        let s = build_stable(2, 1.2, 1.0).unwrap();
        let g = FreqGrid::Lattice {
            dim: 2,
            n: 8,
            period: 2.0,
        };
        assert!((real_dominates(&s, &g).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stable_bounds_ratio_flat_and_im_vanishes() {
        let s = build_stable(1, 0.5, 1.0).unwrap();
        let sf = ScalingFunction::stable(0.5, 0.6, 0.45);
        let xs = crate::quad::geomspace(1e-2, 1e2, 25);
        let mut pts = vec![0.0];
        pts.extend(xs);
        let rep = symbol_bounds(&s, &sf, &list(&pts)).unwrap();
        assert!(rep.pass);
        assert!(crate::report::spread(&rep.lhs) - 1.0 < 1e-6);
        assert!(rep.sweep["im_ratio"].iter().all(|v| *v < 1e-10));
        // Deliberate mismatch κ(R) = R^{0.8} drifts and fails.
        let bad = ScalingFunction::stable(0.8, 0.9, 0.7);
        assert!(!symbol_bounds(&s, &bad, &list(&pts)).unwrap().pass);
    }

    #[test]
    fn rescaled_symbol_is_kappa_times_dilated_symbol() {
        let b = BernsteinSpec::PowerSum {
            exponents: vec![0.4],
        };
        let specs = [
            build_stable(2, 1.5, 1.0).unwrap(),
            build_subordinated(2, b, Modifier::Unit, SphereMeasure::lebesgue()).unwrap(),
        ];
        for s in specs {
            let (rr, k) = (3.0, 2.7);
            let t = s.rescaled(rr, k).unwrap();
            let (e, et) = (
                SymbolEvaluator::new(&s).unwrap(),
                SymbolEvaluator::new(&t).unwrap(),
            );
            for xi in [[0.4, 1.0], [5.0, -0.2]] {
                let lhs = et.eval(&xi).unwrap();
                let rhs = k * e.eval(&[xi[0] / rr, xi[1] / rr]).unwrap();
                assert!((lhs - rhs).norm() < 1e-8 * rhs.norm(), "{lhs} {rhs}");
            }
        }
    }

    #[test]
    fn binary_cache_roundtrip() {
        let s = build_stable(1, 0.5, 1.0).unwrap();
        let g = list(&[0.0, 1.0, 2.5]);
        let t = evaluate(&s, &g).unwrap();
        let back = SymbolTable::from_bytes(g, t.spec_digest.clone(), &t.to_bytes()).unwrap();
        assert_eq!(back.psi, t.psi);
        assert_eq!(back.cache_key(), t.cache_key());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn real_part_nonpositive_and_conjugate_symmetric(
                x in -30.0f64..30.0, y in -30.0f64..30.0, floor in 0.05f64..1.0, beta in 0.1f64..0.9,
            ) {
                let b = BernsteinSpec::PowerSum { exponents: vec![beta] };
                let m = Modifier::Directional { floor, axis: vec![0.6, 0.8] };
                let s = build_subordinated(2, b, m, SphereMeasure::lebesgue()).unwrap();
                let e = SymbolEvaluator::new(&s).unwrap();
                let p = e.eval(&[x, y]).unwrap();
                let q = e.eval(&[-x, -y]).unwrap();
                prop_assert!(p.re <= 0.0);
                prop_assert!((p.conj() - q).norm() <= 1e-10 * p.norm().max(1e-300));
            }
        }
    }
}
