//! Bernstein functions φ(r) = ∫(1 − e^{−rt}) μ(dt) and the subordinated heat
//! kernel j(r) = ∫(4πt)^{−d/2} exp(−r²/4t) μ(dt).
//!
//! The Lévy density of μ is closed-form for sums of powers; for the other
//! parametric families it is recovered from φ′ by fixed-Talbot Laplace
//! inversion (t·μ(t) is the inverse transform of φ′), tabulated once on a
//! log grid. j is tabulated per dimension in log-log coordinates.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad::{self, QuadOpts, UniformCubic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BernsteinSpec {
    /// Family (0): Σ r^{α_i}.
    PowerSum { exponents: Vec<f64> },
    /// Family (1): (r + r^α)^β.
    ShiftedPower { alpha: f64, beta: f64 },
    /// Family (2): r^α (ln(1+r))^β with β < 1 − α.
    PowerLog { alpha: f64, beta: f64 },
    /// Family (3): [ln cosh √r]^α.
    LogCosh { alpha: f64 },
    /// μ given as atoms (t, mass) on (0, ∞).
    Tabulated { atoms: Vec<(f64, f64)> },
}

fn in_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

const TALBOT_M: usize = 24;
const MU_LOG_T_MIN: f64 = -70.0;
const MU_LOG_T_MAX: f64 = 28.0;
const MU_PER_UNIT: f64 = 14.0;

impl BernsteinSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            BernsteinSpec::PowerSum { exponents } => {
                !exponents.is_empty() && exponents.iter().all(|&a| in_unit(a))
            }
            BernsteinSpec::ShiftedPower { alpha, beta } => in_unit(*alpha) && in_unit(*beta),
            BernsteinSpec::PowerLog { alpha, beta } => {
                in_unit(*alpha) && *beta > 0.0 && *beta < 1.0 - alpha
            }
            BernsteinSpec::LogCosh { alpha } => in_unit(*alpha),
            BernsteinSpec::Tabulated { atoms } => {
                !atoms.is_empty() && atoms.iter().all(|&(t, m)| t > 0.0 && m > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "Bernstein parameters outside the admissible range: {self:?}"
            )))
        }
    }

    /// φ(r) for r ≥ 0.
    pub fn phi(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            BernsteinSpec::PowerSum { exponents } => exponents.iter().map(|a| r.powf(*a)).sum(),
            BernsteinSpec::ShiftedPower { alpha, beta } => (r + r.powf(*alpha)).powf(*beta),
            BernsteinSpec::PowerLog { alpha, beta } => r.powf(*alpha) * r.ln_1p().powf(*beta),
            BernsteinSpec::LogCosh { alpha } => ln_cosh_sqrt(r).powf(*alpha),
            BernsteinSpec::Tabulated { atoms } => {
                atoms.iter().map(|&(t, m)| -m * (-r * t).exp_m1()).sum()
            }
        }
    }

    /// φ′ continued to the cut plane C ∖ (−∞, 0].
    pub fn dphi_complex(&self, s: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        match self {
            BernsteinSpec::PowerSum { exponents } => {
                exponents.iter().map(|&a| a * s.powf(a - 1.0)).sum()
            }
            BernsteinSpec::ShiftedPower { alpha, beta } => {
                let inner = s + s.powf(*alpha);
                *beta * inner.powf(beta - 1.0) * (one + *alpha * s.powf(alpha - 1.0))
            }
            BernsteinSpec::PowerLog { alpha, beta } => {
                let l = ln_1p_complex(s);
                *alpha * s.powf(alpha - 1.0) * l.powf(*beta)
                    + s.powf(*alpha) * *beta * l.powf(beta - 1.0) / (one + s)
            }
            BernsteinSpec::LogCosh { alpha } => {
                let z = s.sqrt();
                let e = (-2.0 * z).exp();
                let g = if z.norm() < 1e-2 {
                    let z2 = z * z;
                    z2 * (0.5 - z2 * (1.0 / 12.0 - z2 / 45.0))
                } else {
                    z + (one + e).ln() - std::f64::consts::LN_2
                };
                let tanh = (one - e) / (one + e);
                *alpha * g.powf(alpha - 1.0) * tanh / (2.0 * z)
            }
            BernsteinSpec::Tabulated { atoms } => {
                atoms.iter().map(|&(t, m)| m * t * (-s * t).exp()).sum()
            }
        }
    }

    /// Lévy density of μ at t (None for atomic μ). Non-closed-form families
    /// use the cached Talbot table.
    pub fn levy_density(&self, t: f64) -> Option<f64> {
        self.levy_density_fn().map(|f| f(t))
    }

    /// The Lévy density of μ as a reusable closure (None for atomic μ).
    pub fn levy_density_fn(&self) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        match self {
            BernsteinSpec::PowerSum { exponents } => {
                let coefs: Vec<(f64, f64)> =
                    exponents.iter().map(|&a| (a / gamma(1.0 - a), a)).collect();
                Some(Box::new(move |t: f64| {
                    coefs.iter().map(|&(c, a)| c * t.powf(-1.0 - a)).sum()
                }))
            }
            BernsteinSpec::Tabulated { .. } => None,
            _ => {
                let table = self.mu_table();
                Some(Box::new(move |t: f64| table.eval(t.ln()).exp() / t))
            }
        }
    }

    /// t·μ(t) by fixed-Talbot inversion of φ′, without tabulation.
    pub fn levy_density_talbot(&self, t: f64) -> f64 {
        talbot(|s| self.dphi_complex(s), t, TALBOT_M) / t
    }

    fn mu_table(&self) -> Arc<UniformCubic> {
        type Cache = std::sync::Mutex<Vec<(String, Arc<UniformCubic>)>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let key = serde_json::to_string(self).expect("serializable");
        let cache = CACHE.get_or_init(Default::default);
        if let Some((_, t)) = cache
            .lock()
            .expect("density cache poisoned")
            .iter()
            .find(|(k, _)| *k == key)
        {
            return t.clone();
        }
        let n = ((MU_LOG_T_MAX - MU_LOG_T_MIN) * MU_PER_UNIT) as usize + 1;
        let dx = (MU_LOG_T_MAX - MU_LOG_T_MIN) / (n - 1) as f64;
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let t = (MU_LOG_T_MIN + dx * i as f64).exp();
                talbot(|s| self.dphi_complex(s), t, TALBOT_M)
                    .max(1e-300)
                    .ln()
            })
            .collect();
        let table = Arc::new(UniformCubic::new(MU_LOG_T_MIN, dx, y));
        cache
            .lock()
            .expect("density cache poisoned")
            .push((key, table.clone()));
        table
    }

    /// j(r) in dimension d by direct quadrature over μ.
    pub fn j_direct(&self, r: f64, d: usize) -> Result<f64> {
        let heat = |t: f64| (4.0 * PI * t).powf(-(d as f64) / 2.0) * (-r * r / (4.0 * t)).exp();
        if let BernsteinSpec::Tabulated { atoms } = self {
            return Ok(atoms.iter().map(|&(t, m)| m * heat(t)).sum());
        }
        let m = self.levy_density_fn().expect("non-atomic family");
        let h = |t: f64| heat(t) * m(t);
        let t_lo = r * r / 400.0;
        let t_hi = r * r * 1e14;
        let body = quad::log_radial(|t| [h(t)], t_lo, t_hi, QuadOpts::rel(1e-11))
            .require("kernel j quadrature")?;
        let tail = quad::far_tail(&h, t_hi).ok_or_else(|| Error::Divergence {
            message: "kernel j: μ-tail not integrable against the heat kernel".into(),
            partial_sums: vec![body.value[0]],
        })?;
        Ok(body.value[0] + tail)
    }

    /// Smallest and largest exponents governing φ near ∞ and near 0, i.e.
    /// the nominal (δ₁, δ₂) envelope.
    pub fn nominal_exponents(&self) -> (f64, f64) {
        match self {
            BernsteinSpec::PowerSum { exponents } => {
                let lo = exponents.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = exponents.iter().cloned().fold(0.0, f64::max);
                (lo, hi)
            }
            BernsteinSpec::ShiftedPower { alpha, beta } => (alpha * beta, *beta),
            BernsteinSpec::PowerLog { alpha, beta } => (*alpha, alpha + beta),
            BernsteinSpec::LogCosh { alpha } => (alpha / 2.0, *alpha),
            BernsteinSpec::Tabulated { .. } => (0.0, 1.0),
        }
    }
}

fn ln_1p_complex(s: Complex64) -> Complex64 {
    if s.norm() < 1e-3 {
        s * (1.0 - s * (0.5 - s * (1.0 / 3.0 - s * 0.25)))
    } else {
        (1.0 + s).ln()
    }
}

/// ln cosh √r, stable for large r.
fn ln_cosh_sqrt(r: f64) -> f64 {
    let z = r.sqrt();
    if z < 1e-4 {
        return r / 2.0 - r * r / 12.0;
    }
    z + (-2.0 * z).exp().ln_1p() - std::f64::consts::LN_2
}

/// Fixed-Talbot inversion of a Laplace transform `f_hat` at time `t`.
pub fn talbot<F: Fn(Complex64) -> Complex64>(f_hat: F, t: f64, m: usize) -> f64 {
    let r = 2.0 * m as f64 / (5.0 * t);
    let mut acc = 0.5 * (f_hat(Complex64::new(r, 0.0)) * (r * t).exp()).re;
    for k in 1..m {
        let th = k as f64 * PI / m as f64;
        let cot = th.cos() / th.sin();
        let s = Complex64::new(r * th * cot, r * th);
        let sig = th + (th * cot - 1.0) * cot;
        let term = (s * t).exp() * f_hat(s) * Complex64::new(1.0, sig);
        acc += term.re;
    }
    acc * r / m as f64
}

/// j(r) tabulated as ln j against ln r.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub dim: usize,
    table: UniformCubic,
}

pub const KERNEL_LOG_R_MIN: f64 = -25.0;
pub const KERNEL_LOG_R_MAX: f64 = 25.0;

impl KernelTable {
    pub fn build(b: &BernsteinSpec, dim: usize) -> Result<Self> {
        b.validate()?;
        let per_unit = 14.0;
        let n = ((KERNEL_LOG_R_MAX - KERNEL_LOG_R_MIN) * per_unit) as usize + 1;
        let dx = (KERNEL_LOG_R_MAX - KERNEL_LOG_R_MIN) / (n - 1) as f64;
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let r = (KERNEL_LOG_R_MIN + dx * i as f64).exp();
            let j = b.j_direct(r, dim)?;
            if !(j > 0.0) {
                return Err(Error::Validation(format!(
                    "kernel j nonpositive at r={r:e}"
                )));
            }
            y.push(j.ln());
        }
        Ok(KernelTable {
            dim,
            table: UniformCubic::new(KERNEL_LOG_R_MIN, dx, y),
        })
    }

    pub fn j(&self, r: f64) -> f64 {
        self.table.eval(r.ln()).exp()
    }

    /// d ln j / d ln r.
    pub fn log_slope(&self, r: f64) -> f64 {
        self.table.slope(r.ln())
    }
}

/// Process-wide cache of kernel tables keyed by (Bernstein spec, dimension).
pub fn kernel_table(b: &BernsteinSpec, dim: usize) -> Result<Arc<KernelTable>> {
    static CACHE: OnceLock<std::sync::Mutex<Vec<(String, Arc<KernelTable>)>>> = OnceLock::new();
    let key = format!("{}#{dim}", serde_json::to_string(b).expect("serializable"));
    let cache = CACHE.get_or_init(Default::default);
    {
        let guard = cache.lock().expect("kernel cache poisoned");
        if let Some((_, t)) = guard.iter().find(|(k, _)| *k == key) {
            return Ok(t.clone());
        }
    }
    let table = Arc::new(KernelTable::build(b, dim)?);
    cache
        .lock()
        .expect("kernel cache poisoned")
        .push((key, table.clone()));
    Ok(table)
}
