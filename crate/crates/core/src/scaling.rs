//! Scaling functions κ with scaling factors l and generalized inverses γ,
//! and numerical checks of the H, G, A₀ and D(κ, l) conditions.

use serde::{Deserialize, Serialize};

use crate::bernstein::{kernel_table, BernsteinSpec};
use crate::error::{Error, Result};
use crate::measure::{Cutoff, LevyMeasureSpec, MeasureForm, Modifier, SphereMeasure};
use crate::quad::{self, QuadOpts};
use crate::report::EstimateReport;
use crate::symbol::SymbolEvaluator;

/// A positive function of one positive variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleFn {
    /// coef·x^exponent.
    Power {
        coef: f64,
        exponent: f64,
    },
    /// coef·x^below for x ≤ 1, coef·x^above for x > 1.
    Piecewise {
        coef: f64,
        below: f64,
        above: f64,
    },
    /// 1/(j(x)·x^d) for a subordinated kernel j.
    KernelInverse {
        bernstein: BernsteinSpec,
        dim: usize,
    },
    Constant {
        value: f64,
    },
}

impl ScaleFn {
    pub fn power(exponent: f64) -> Self {
        ScaleFn::Power {
            coef: 1.0,
            exponent,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(match self {
            ScaleFn::Power { coef, exponent } => coef * x.powf(*exponent),
            ScaleFn::Piecewise { coef, below, above } => {
                coef * x.powf(if x <= 1.0 { *below } else { *above })
            }
            ScaleFn::KernelInverse { bernstein, dim } => {
                let t = kernel_table(bernstein, *dim)?;
                1.0 / (t.j(x) * x.powi(*dim as i32))
            }
            ScaleFn::Constant { value } => *value,
        })
    }
}

/// Constants reported alongside a scaling function.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConstants {
    pub n: Option<f64>,
    pub n0: Option<f64>,
    pub n1: Option<f64>,
    pub c1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingFunction {
    pub kappa: ScaleFn,
    pub l: ScaleFn,
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(default)]
    pub delta: Option<(f64, f64)>,
    #[serde(default)]
    pub constants: ScalingConstants,
}

impl ScalingFunction {
    /// κ(R) = R^σ, l(ε) = ε^σ (exact for stable measures of order σ).
    pub fn stable(sigma: f64, alpha1: f64, alpha2: f64) -> Self {
        ScalingFunction {
            kappa: ScaleFn::power(sigma),
            l: ScaleFn::power(sigma),
            alpha1,
            alpha2,
            delta: None,
            constants: ScalingConstants::default(),
        }
    }

    pub fn kappa(&self, r: f64) -> Result<f64> {
        self.kappa.eval(r)
    }

    pub fn l(&self, eps: f64) -> Result<f64> {
        self.l.eval(eps)
    }

    pub fn gamma(&self, t: f64) -> Result<f64> {
        gamma_inverse(&self.l, t)
    }

    /// Samples the scaling-function invariants: κ(εr) ≤ l(ε)κ(r), limits of
    /// κ and l at the grid extremes, monotone l, and the γ Galois relations.
    pub fn validate(&self) -> Result<()> {
        let grid = quad::geomspace(1e-6, 1e6, 37);
        let k0 = self.kappa(1e-8)?;
        let k1 = self.kappa(1e8)?;
        if !(k0 < 1e-3 * self.kappa(1.0)? && k1 > 1e3 * self.kappa(1.0)?) {
            return Err(Error::Validation("κ must tend to 0 at 0 and ∞ at ∞".into()));
        }
        let mut prev = 0.0;
        for &e in &grid {
            let le = self.l(e)?;
            if le < prev * (1.0 - 1e-12) {
                return Err(Error::Validation(format!("l decreases at ε={e:e}")));
            }
            prev = le;
            for &r in &grid {
                let lhs = self.kappa(e * r)?;
                let rhs = le * self.kappa(r)?;
                if lhs > rhs * (1.0 + 1e-9) {
                    return Err(Error::Validation(format!(
                        "κ(εr) ≤ l(ε)κ(r) fails at ε={e:e}, r={r:e}: {lhs:e} > {rhs:e}"
                    )));
                }
            }
        }
        if self.l(1e-8)? > 1e-3 * self.l(1.0)? {
            return Err(Error::Validation("l(ε) must tend to 0".into()));
        }
        for &t in &grid {
            let g = self.gamma(t)?;
            if self.l(g * (1.0 + 1e-9))? < t * (1.0 - 1e-9) {
                return Err(Error::Validation(format!("l(γ(t)) < t at t={t:e}")));
            }
        }
        Ok(())
    }
}

/// γ(t) = inf{s > 0 : l(s) > t} by bisection in ln s.
pub fn gamma_inverse(l: &ScaleFn, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("γ(t) needs t > 0, got {t}")));
    }
    let (mut lo, mut hi) = (-70.0f64, 70.0f64);
    if l.eval(hi.exp())? <= t {
        return Err(Error::Unbounded(format!(
            "l stays ≤ {t} on the whole search range, γ undefined"
        )));
    }
    if l.eval(lo.exp())? > t {
        return Ok(lo.exp());
    }
    while hi - lo > 1e-14 * (1.0 + hi.abs().max(lo.abs())) {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if l.eval(m.exp())? > t {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok(hi.exp())
}

/// κ(R) = 1/(j(R) R^d) with j by direct quadrature.
pub fn kappa_from_kernel(b: &BernsteinSpec, d: usize, r: f64) -> Result<f64> {
    let j = b.j_direct(r, d)?;
    if !(j > 0.0) {
        return Err(Error::Validation(format!(
            "kernel j({r}) = {j} not positive"
        )));
    }
    Ok(1.0 / (j * r.powi(d as i32)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HReport {
    pub n: f64,
    pub n_kernel: f64,
    pub n_ratio: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub pass: bool,
}

pub const DELTA_SLACK: f64 = 1e-3;

/// Assumption H on a log grid: δ₁/δ₂ as inf/sup of pairwise log-ratios of φ
/// over pairs with R/r ≥ 10, N as the largest two-sided defect.
pub fn check_h(b: &BernsteinSpec, d: usize, r_grid: &[f64]) -> Result<HReport> {
    b.validate()?;
    if r_grid.len() < 2 || r_grid[r_grid.len() - 1] / r_grid[0] < 1e6 * (1.0 - 1e-12) {
        return Err(Error::Validation(
            "H check needs a grid spanning ≥ 6 decades".into(),
        ));
    }
    let phi: Vec<f64> = r_grid.iter().map(|&r| b.phi(r)).collect();
    for w in phi.windows(2) {
        if !(w[1] >= w[0]) || !(w[0] > 0.0) {
            return Err(Error::Validation(
                "φ samples are not positive and nondecreasing".into(),
            ));
        }
    }
    let mut d1 = f64::INFINITY;
    let mut d2 = f64::NEG_INFINITY;
    for i in 0..r_grid.len() {
        for k in i + 1..r_grid.len() {
            if r_grid[k] / r_grid[i] >= 10.0 * (1.0 - 1e-12) {
                let e = (phi[k] / phi[i]).ln() / (r_grid[k] / r_grid[i]).ln();
                d1 = d1.min(e);
                d2 = d2.max(e);
            }
        }
    }
    let mut n_ratio = 1.0f64;
    for i in 0..r_grid.len() {
        for k in i + 1..r_grid.len() {
            let q = r_grid[k] / r_grid[i];
            let p = phi[k] / phi[i];
            n_ratio = n_ratio.max(q.powf(d1) / p).max(p / q.powf(d2));
        }
    }
    let table = kernel_table(b, d)?;
    let mut n_kernel = 1.0f64;
    for &r in r_grid {
        let q = table.j(r) * r.powi(d as i32) / b.phi(r.powi(-2));
        n_kernel = n_kernel.max(q).max(1.0 / q);
    }
    let n = n_ratio.max(n_kernel);
    let pass = d1 > DELTA_SLACK && d1 <= d2 && d2 < 1.0 - DELTA_SLACK && n.is_finite();
    Ok(HReport {
        n,
        n_kernel,
        n_ratio,
        delta1: d1,
        delta2: d2,
        pass,
    })
}

/// Unit frequency directions for sphere minima: ±1 in d = 1, `n` angles in
/// [0, π) in d = 2 (including the axes when n is even).
pub fn sphere_grid(d: usize, n: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::PI;
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let th = PI * k as f64 / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => crate::measure::lebesgue_nodes(d, n.max(16))
            .into_iter()
            .map(|(w, _)| w)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GReport {
    pub min_value: f64,
    pub argmin: Vec<f64>,
    pub pass: bool,
}

/// Assumption G: min over unit ξ of ∫|ξ·w|²ρ₀(w)S(dw), after sampling the
/// envelope ρ₀(w) ≤ a(r, w) ≤ 1.
pub fn check_g(a: &Modifier, s: &SphereMeasure, d: usize, xi_grid: &[Vec<f64>]) -> Result<GReport> {
    s.validate(d)?;
    let nodes = s.nodes(d);
    for r in quad::geomspace(1e-6, 1e6, 49) {
        for (w, _) in &nodes {
            let v = a.eval(r, w);
            let r0 = a.rho0(w);
            if !(r0 <= v * (1.0 + 1e-12) && v <= 1.0) {
                return Err(Error::Validation(format!(
                    "envelope ρ₀ ≤ a ≤ 1 fails at r={r:e}, w={w:?}: ρ₀={r0}, a={v}"
                )));
            }
        }
    }
    let mut min_value = f64::INFINITY;
    let mut argmin = Vec::new();
    for xi in xi_grid {
        let v: f64 = nodes
            .iter()
            .map(|(w, m)| {
                let dot: f64 = xi.iter().zip(w).map(|(x, y)| x * y).sum();
                dot * dot * a.rho0(w) * m
            })
            .sum();
        if v < min_value {
            min_value = v;
            argmin = xi.clone();
        }
    }
    Ok(GReport {
        min_value,
        argmin,
        pass: min_value > 1e-12,
    })
}

/// μ⁰ of the A₀ condition: a Lévy measure supported in the closed unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorizingMeasure {
    pub mu0: LevyMeasureSpec,
    pub n0: Option<f64>,
    pub c1: Option<f64>,
}

impl MinorizingMeasure {
    pub fn new(mu0: LevyMeasureSpec) -> Result<Self> {
        let cap = mu0.transform.cap.unwrap_or(f64::INFINITY);
        let outside = if cap <= 1.0 { 0.0 } else { mu0.tail_mass(1.0)? };
        if outside != 0.0 {
            return Err(Error::Validation(
                "μ⁰ must be supported in the unit ball".into(),
            ));
        }
        Ok(MinorizingMeasure {
            mu0,
            n0: None,
            c1: None,
        })
    }

    /// ½·(ρ₀-weighted π̃_1) restricted to the unit ball.
    pub fn default_for(spec: &LevyMeasureSpec, sf: &ScalingFunction) -> Result<Self> {
        let mut base = spec.rescaled(1.0, sf.kappa(1.0)?)?;
        if let MeasureForm::Subordinated { modifier, .. } = &mut base.form {
            if let Modifier::RadialWave { floor } = modifier {
                *modifier = Modifier::Constant { value: *floor };
            }
        }
        MinorizingMeasure::new(base.restricted(1.0, 0.5))
    }

    /// ζ(ξ) = ∫_{|y|≤1} χ_σ(y)|y|(|ξ||y| ∧ 1) μ⁰(dy).
    pub fn zeta(&self, xi_norm: f64, sigma: f64) -> Result<f64> {
        if Cutoff::for_order(sigma) == Cutoff::None || xi_norm == 0.0 {
            return Ok(0.0);
        }
        let rc = (1.0 / xi_norm).min(1.0);
        let a = self
            .mu0
            .integrate_polar(|r| xi_norm * r * r, |_| 1.0, 0.0, rc)?;
        let b = self.mu0.integrate_polar(|r| r, |_| 1.0, rc, 1.0)?;
        Ok(a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A0Report {
    pub moment: f64,
    pub frequency_integral: f64,
    pub n0: f64,
    pub c1: f64,
    pub pass: bool,
    pub note: String,
}

/// Assumption A₀: the σ-dependent moment of μ⁰ plus
/// ∫|ξ|^q[1+ζ]^{d+3}e^{−φ₀}dξ (q = 2 for σ < 1, 4 otherwise), and the sphere
/// lower bound c₁ = min_{|ξ|=1} ∫|ξ·y|²dμ⁰.
pub fn check_a0(mu0: &MinorizingMeasure, sigma: f64, xi_dirs: &[Vec<f64>]) -> Result<A0Report> {
    let spec = &mu0.mu0;
    let d = spec.dim;
    let q = if sigma < 1.0 { 2.0 } else { 4.0 };
    let moment = spec.integrate_polar(|r| r.powf(q / 2.0), |_| 1.0, 0.0, 1.0)?;
    let mut c1 = f64::INFINITY;
    for xi in xi_dirs {
        let v = spec.integrate_polar(
            |r| r * r,
            |w| {
                let dot: f64 = xi.iter().zip(w).map(|(a, b)| a * b).sum();
                dot * dot
            },
            0.0,
            1.0,
        )?;
        c1 = c1.min(v);
    }
    if !(c1 > 0.0) {
        return Ok(A0Report {
            moment,
            frequency_integral: f64::INFINITY,
            n0: f64::INFINITY,
            c1: c1.max(0.0),
            pass: false,
            note: "degenerate μ⁰: sphere lower bound vanishes".into(),
        });
    }
    let ev = SymbolEvaluator::new(spec)?;
    let dirs: Vec<(Vec<f64>, f64)> = match d {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        _ => crate::measure::lebesgue_nodes(d, 32),
    };
    let integrand = |rho: f64| -> Result<f64> {
        let z = mu0.zeta(rho, sigma)?;
        let mut s = 0.0;
        for (w, m) in &dirs {
            let xi: Vec<f64> = w.iter().map(|x| x * rho).collect();
            let phi0 = -ev.eval(&xi)?.re;
            s += m * (-phi0).exp();
        }
        Ok(rho.powf(q + d as f64 - 1.0) * (1.0 + z).powi(d as i32 + 3) * s)
    };
    // Decade-by-decade accumulation until the last decade is negligible.
    let lo = 1e-4;
    let mut total = integrand(lo)? * lo / (q + d as f64);
    let mut r0 = lo;
    let mut converged = false;
    let mut err = None;
    while r0 < 1e8 {
        let r1 = r0 * 10.0;
        let mut failure = None;
        let part = quad::log_radial(
            |r| match integrand(r) {
                Ok(v) => [v],
                Err(e) => {
                    failure.get_or_insert(e);
                    [0.0]
                }
            },
            r0,
            r1,
            QuadOpts::rel(1e-8),
        );
        if let Some(e) = failure {
            err = Some(e);
            break;
        }
        total += part.value[0];
        r0 = r1;
        if r0 > 10.0 && part.value[0].abs() < 1e-12 * total.abs() {
            converged = true;
            break;
        }
    }
    if let Some(e) = err {
        return Err(e);
    }
    let (frequency_integral, note) = if converged {
        (total, String::new())
    } else {
        (
            f64::INFINITY,
            format!("frequency integral not converged by |ξ| = {r0:e} (partial {total:e})"),
        )
    };
    let n0 = moment + frequency_integral;
    Ok(A0Report {
        moment,
        frequency_integral,
        n0,
        c1,
        pass: n0.is_finite() && c1 > 0.0,
        note,
    })
}

/// A cell of the minorization partition where domination failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub r: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub cap: usize,
    pub mass_rescaled: f64,
    pub mass_mu0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DReport {
    pub minorization_pass: bool,
    pub counterexample: Option<Counterexample>,
    pub annulus_mean_pass: bool,
    /// N(R) = ∫_{|z|≤1}|z|^{α₁}dπ̃_R + ∫_{|z|>1}|z|^{α₂}dπ̃_R per grid R.
    pub n_per_r: Vec<f64>,
    pub n: f64,
    pub n_spread: f64,
    pub n1_small: f64,
    pub n1_large: f64,
    pub n1: f64,
    pub gamma_galois_pass: bool,
    pub pass: bool,
}

fn cap_index(w: &[f64], d: usize) -> usize {
    use std::f64::consts::PI;
    match d {
        1 => usize::from(w[0] > 0.0),
        2 => {
            let th = w[1].atan2(w[0]).rem_euclid(2.0 * PI);
            ((th / (2.0 * PI) * 16.0) as usize).min(15)
        }
        _ => {
            let (k, v) = w.iter().enumerate().fold((0, 0.0f64), |(bk, bv), (k, v)| {
                if v.abs() > bv.abs() {
                    (k, *v)
                } else {
                    (bk, bv)
                }
            });
            2 * k + usize::from(v > 0.0)
        }
    }
}

fn n_caps(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 16,
        _ => 2 * d,
    }
}

/// Integral over I₁ or I₂ by log-radial quadrature with power-law tails.
fn gamma_integral<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64) -> f64 {
    let g = |t: f64| f(t).unwrap_or(f64::NAN);
    let body = quad::log_radial(|t| [g(t)], a, b, QuadOpts::rel(1e-10));
    if !body.converged || !body.value[0].is_finite() {
        return f64::INFINITY;
    }
    body.value[0]
}

/// Assumption D(κ, l): (i) cell-wise minorization π̃_R ≥ 1_{|y|≤1}μ⁰ on 24
/// log-annuli × caps per R (plus vanishing μ⁰ annulus means for σ = 1);
/// (ii) R-uniform moment sums N(R); (iii) the γ-integrals over I₁, I₂.
pub fn check_d(
    spec: &LevyMeasureSpec,
    sf: &ScalingFunction,
    mu0: &MinorizingMeasure,
    r_grid: &[f64],
    t_grid: &[f64],
) -> Result<DReport> {
    let sigma = spec.order;
    let (a1, a2) = (sf.alpha1, sf.alpha2);
    let ok_exponents = if sigma < 1.0 {
        a1 > 0.0 && a1 <= 1.0 && a2 > 0.0 && a2 <= 1.0
    } else if sigma > 1.0 {
        a1 > 1.0 && a1 <= 2.0 && a2 > 1.0 && a2 <= 2.0
    } else {
        a1 > 1.0 && a1 <= 2.0 && (0.0..1.0).contains(&a2)
    };
    if !ok_exponents {
        return Err(Error::Validation(format!(
            "exponents (α₁, α₂) = ({a1}, {a2}) inconsistent with σ = {sigma}"
        )));
    }
    let d = spec.dim;
    let edges = quad::geomspace(1e-6, 1.0, 25);
    let caps = n_caps(d);
    let cell_masses = |m: &LevyMeasureSpec| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(24 * caps);
        for e in edges.windows(2) {
            for c in 0..caps {
                out.push(m.integrate_polar(
                    |_| 1.0,
                    |w| if cap_index(w, d) == c { 1.0 } else { 0.0 },
                    e[0],
                    e[1],
                )?);
            }
        }
        Ok(out)
    };
    let mu_cells = cell_masses(&mu0.mu0)?;
    let mut counterexample = None;
    let mut n_per_r = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let tilde = spec.rescaled(r, sf.kappa(r)?)?;
        if counterexample.is_none() {
            let cells = cell_masses(&tilde)?;
            for (i, (a, b)) in cells.iter().zip(&mu_cells).enumerate() {
                if *a < b * (1.0 - 1e-9) {
                    counterexample = Some(Counterexample {
                        r,
                        r_lo: edges[i / caps],
                        r_hi: edges[i / caps + 1],
                        cap: i % caps,
                        mass_rescaled: *a,
                        mass_mu0: *b,
                    });
                    break;
                }
            }
        }
        let inner = tilde.integrate_polar(|z| z.powf(a1), |_| 1.0, 0.0, 1.0)?;
        let outer = tilde.integrate_polar(|z| z.powf(a2), |_| 1.0, 1.0, f64::INFINITY)?;
        n_per_r.push(inner + outer);
    }
    let annulus_mean_pass = if sigma == 1.0 {
        let scale = mu0
            .mu0
            .integrate_polar(|r| r, |_| 1.0, 0.0, 1.0)?
            .max(1e-300);
        mu0.mu0
            .annulus_means(&quad::geomspace(1e-4, 1.0, 11))?
            .iter()
            .all(|m| m.iter().all(|x| x.abs() <= 1e-9 * scale))
    } else {
        true
    };
    let n = n_per_r.iter().cloned().fold(0.0, f64::max);
    let n_spread = n_per_r
        .iter()
        .map(|v| (v / n_per_r[0] - 1.0).abs())
        .fold(0.0, f64::max);

    let t_star = sf.l(1.0)?;
    let gam = |t: f64| sf.gamma(t);
    let sig12 = sigma > 1.0 && sigma < 2.0;
    let f1 = |t: f64| -> Result<f64> {
        let g = gam(t)?;
        Ok(t * g.powf(-a1) + if sig12 { 1.0 / g } else { 0.0 })
    };
    let f2 = |t: f64| -> Result<f64> {
        let g = gam(t)?;
        Ok(g.powf(-(1.0 + a2)) + g.powf(-2.0 * a2))
    };
    let t_lo = 1e-10;
    let head = {
        let v = f1(t_lo)?;
        let p = quad::local_exponent(&|t| f1(t).unwrap_or(f64::NAN), t_lo);
        match p {
            Some(p) if p > -1.0 => v * t_lo / (p + 1.0),
            _ => f64::INFINITY,
        }
    };
    let n1_small = head + gamma_integral(f1, t_lo, t_star);
    let t_hi = 1e12_f64.max(1e4 * t_star);
    let tail = {
        let v = f2(t_hi)?;
        let p = quad::local_exponent(&|t| f2(t).unwrap_or(f64::NAN), t_hi);
        match p {
            Some(p) if p < -1.0 => -v * t_hi / (p + 1.0),
            _ => f64::INFINITY,
        }
    };
    let n1_large = gamma_integral(f2, t_star, t_hi) + tail;
    let n1 = n1_small.max(n1_large);
    let mut gamma_galois_pass = true;
    for &t in t_grid {
        let g = gam(t)?;
        if sf.l(g * (1.0 + 1e-9))? < t * (1.0 - 1e-9) {
            gamma_galois_pass = false;
        }
    }
    let minorization_pass = counterexample.is_none();
    let pass = minorization_pass
        && annulus_mean_pass
        && n.is_finite()
        && n1.is_finite()
        && gamma_galois_pass;
    Ok(DReport {
        minorization_pass,
        counterexample,
        annulus_mean_pass,
        n_per_r,
        n,
        n_spread,
        n1_small,
        n1_large,
        n1,
        gamma_galois_pass,
        pass,
    })
}

impl DReport {
    pub fn to_report(&self) -> EstimateReport {
        EstimateReport::fitted(
            "assumption_D",
            self.n_per_r.clone(),
            vec![self.n; self.n_per_r.len()],
            Some(self.n),
            self.pass,
        )
        .with_diag("minorization_pass", self.minorization_pass)
        .with_diag("counterexample", &self.counterexample)
        .with_diag("annulus_mean_pass", self.annulus_mean_pass)
        .with_diag("n_spread", self.n_spread)
        .with_diag("n1", self.n1)
        .with_diag("n1_small", self.n1_small)
        .with_diag("n1_large", self.n1_large)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::build_stable;

    #[test]
    fn gamma_inverse_examples() {
        let g = gamma_inverse(&ScaleFn::power(2.0), 0.25).unwrap();
        assert!((g - 0.5).abs() < 1e-10 * 0.5);
        let l = ScaleFn::Piecewise {
            coef: 1.0,
            below: 0.6,
            above: 0.8,
        };
        let g = gamma_inverse(&l, 2.0).unwrap();
        assert!((g / 2f64.powf(1.0 / 0.8) - 1.0).abs() < 1e-10);
        let g = gamma_inverse(&ScaleFn::power(1.0), 1e-6).unwrap();
        assert!((g / 1e-6 - 1.0).abs() < 1e-10);
        assert!(matches!(
            gamma_inverse(&ScaleFn::Constant { value: 1.0 }, 2.0),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn kappa_from_single_atom() {
        let b = BernsteinSpec::Tabulated {
            atoms: vec![(1.0, 1.0)],
        };
        let k = kappa_from_kernel(&b, 1, 1.0).unwrap();
        let oracle = (4.0 * std::f64::consts::PI).sqrt() * 0.25f64.exp();
        assert!((k / oracle - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kappa_from_power_kernel_ratio() {
        let b = BernsteinSpec::PowerSum {
            exponents: vec![0.4],
        };
        let r = kappa_from_kernel(&b, 1, 2.0).unwrap() / kappa_from_kernel(&b, 1, 1.0).unwrap();
        assert!((r / 2f64.powf(0.8) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn check_h_power_and_linear() {
        let grid = quad::geomspace(1e-4, 1e4, 33);
        let r = check_h(
            &BernsteinSpec::PowerSum {
                exponents: vec![0.4],
            },
            1,
            &grid,
        )
        .unwrap();
        assert!(r.pass);
        assert!((r.delta1 - 0.4).abs() < 1e-9 && (r.delta2 - 0.4).abs() < 1e-9);
    }

    #[test]
    fn check_g_examples() {
        let xi = sphere_grid(2, 16);
        let r = check_g(&Modifier::Unit, &SphereMeasure::lebesgue(), 2, &xi).unwrap();
        assert!((r.min_value - std::f64::consts::PI).abs() < 1e-12 && r.pass);
        let one = SphereMeasure::Atoms {
            atoms: vec![(vec![1.0, 0.0], 1.0)],
        };
        let r = check_g(&Modifier::Unit, &one, 2, &xi).unwrap();
        assert!(r.min_value.abs() < 1e-30 && !r.pass);
        let two = SphereMeasure::Atoms {
            atoms: vec![(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0)],
        };
        let r = check_g(&Modifier::Unit, &two, 2, &xi).unwrap();
        assert!((r.min_value - 1.0).abs() < 1e-12 && r.pass);
    }

    #[test]
    fn d_rejects_alpha1_below_order() {
        let s = build_stable(1, 0.5, 1.0).unwrap();
        let sf = ScalingFunction::stable(0.5, 0.45, 0.45);
        let mu0 = MinorizingMeasure::default_for(&s, &sf).unwrap();
        let r = check_d(&s, &sf, &mu0, &[1.0], &[1.0]);
        assert!(matches!(r, Err(Error::Divergence { .. })), "{r:?}");
    }
}
