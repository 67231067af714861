//! Lévy measures π on R^d ∖ {0}: stable, Bernstein-subordinated
//! radial-angular, and atomic forms, with rescaling π̃_R = κ(R)π(R·), point
//! reflection, truncation to a ball, moments and order estimation.
//!
//! Non-atomic measures are stored in separable polar form
//! `π(dr, dw) = A(w) ρ(r) dr S(dw)`; the transform (length scale, mass
//! factor, support cap, reflection) is applied lazily.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bernstein::{kernel_table, BernsteinSpec, KernelTable};
use crate::error::{Error, Result};
use crate::quad::{self, QuadOpts};
use crate::scaling::ScalingFunction;

/// Default radial quadrature window; tails beyond it are extrapolated.
pub const R_MIN: f64 = 1e-8;
pub const R_MAX: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// χ_σ ≡ 0 (σ < 1).
    None,
    /// χ_σ = 1_{|y| ≤ 1} (σ = 1).
    UnitBall,
    /// χ_σ ≡ 1 (σ ∈ (1, 2)).
    AllSpace,
}

impl Cutoff {
    pub fn for_order(sigma: f64) -> Cutoff {
        if sigma < 1.0 {
            Cutoff::None
        } else if sigma == 1.0 {
            Cutoff::UnitBall
        } else {
            Cutoff::AllSpace
        }
    }

    /// χ_σ(y) as a function of |y|.
    pub fn chi(&self, r: f64) -> f64 {
        match self {
            Cutoff::None => 0.0,
            Cutoff::UnitBall => {
                if r <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Cutoff::AllSpace => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SphereMeasure {
    /// Weighted unit directions.
    Atoms { atoms: Vec<(Vec<f64>, f64)> },
    /// Surface measure, discretized with a rule of the given order.
    Lebesgue { order: usize },
}

impl SphereMeasure {
    pub fn lebesgue() -> Self {
        SphereMeasure::Lebesgue { order: 32 }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            SphereMeasure::Atoms { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Validation("sphere measure has no atoms".into()));
                }
                for (w, m) in atoms {
                    let n2: f64 = w.iter().map(|x| x * x).sum();
                    if w.len() != d || (n2.sqrt() - 1.0).abs() > 1e-12 || !(*m > 0.0) {
                        return Err(Error::Validation(format!(
                            "sphere atom ({w:?}, {m}) is not a positive weight on a unit direction in R^{d}"
                        )));
                    }
                }
                Ok(())
            }
            SphereMeasure::Lebesgue { order } => {
                if d > 3 {
                    return Err(Error::Validation(
                        "Lebesgue sphere quadrature implemented for d ≤ 3".into(),
                    ));
                }
                if d >= 2 && *order < 16 {
                    return Err(Error::Validation(
                        "sphere quadrature order must be ≥ 16".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Quadrature nodes (w, weight); exact for atoms.
    pub fn nodes(&self, d: usize) -> Vec<(Vec<f64>, f64)> {
        match self {
            SphereMeasure::Atoms { atoms } => atoms.clone(),
            SphereMeasure::Lebesgue { order } => lebesgue_nodes(d, *order),
        }
    }

    pub fn is_lebesgue(&self) -> bool {
        matches!(self, SphereMeasure::Lebesgue { .. })
    }
}

pub fn lebesgue_nodes(d: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    use std::f64::consts::PI;
    match d {
        1 => vec![(vec![-1.0], 1.0), (vec![1.0], 1.0)],
        2 => (0..order)
            .map(|k| {
                let th = 2.0 * PI * (k as f64 + 0.5) / order as f64;
                (vec![th.cos(), th.sin()], 2.0 * PI / order as f64)
            })
            .collect(),
        _ => {
            let (z, wz) = quad::gauss_legendre(order.div_ceil(2));
            let mut out = Vec::new();
            for (zi, wi) in z.iter().zip(&wz) {
                let s = (1.0 - zi * zi).sqrt();
                for k in 0..order {
                    let ph = 2.0 * PI * (k as f64 + 0.5) / order as f64;
                    out.push((
                        vec![s * ph.cos(), s * ph.sin(), *zi],
                        wi * 2.0 * PI / order as f64,
                    ));
                }
            }
            out
        }
    }
}

/// Surface area of the unit sphere in R^d.
pub fn sphere_area(d: usize) -> f64 {
    use statrs::function::gamma::gamma;
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// Density modifier a(r, w) ∈ (0, 1]; every variant factors as
/// a_ang(w)·a_rad(r).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modifier {
    Unit,
    Constant {
        value: f64,
    },
    /// floor + (1 − floor)(1 + w·axis)/2.
    Directional {
        floor: f64,
        axis: Vec<f64>,
    },
    /// floor + (1 − floor)(1 + sin ln r)/2.
    RadialWave {
        floor: f64,
    },
}

impl Modifier {
    pub fn angular(&self, w: &[f64]) -> f64 {
        match self {
            Modifier::Constant { value } => *value,
            Modifier::Directional { floor, axis } => {
                let dot: f64 = w.iter().zip(axis).map(|(a, b)| a * b).sum();
                floor + (1.0 - floor) * 0.5 * (1.0 + dot)
            }
            _ => 1.0,
        }
    }

    pub fn radial(&self, r: f64) -> f64 {
        match self {
            Modifier::RadialWave { floor } => floor + (1.0 - floor) * 0.5 * (1.0 + r.ln().sin()),
            _ => 1.0,
        }
    }

    pub fn eval(&self, r: f64, w: &[f64]) -> f64 {
        self.angular(w) * self.radial(r)
    }

    /// ρ₀(w) = inf_r a(r, w).
    pub fn rho0(&self, w: &[f64]) -> f64 {
        match self {
            Modifier::RadialWave { floor } => *floor,
            _ => self.angular(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureForm {
    Stable {
        scale: f64,
    },
    Subordinated {
        bernstein: BernsteinSpec,
        modifier: Modifier,
        sphere: SphereMeasure,
    },
    Atomic {
        atoms: Vec<(Vec<f64>, f64)>,
    },
}

/// Lazy transform ν(Γ) = factor·π(length·Γ) restricted to |y| ≤ cap and
/// optionally reflected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transform {
    pub length: f64,
    pub factor: f64,
    pub cap: Option<f64>,
    pub reflected: bool,
}

impl Default for Transform {
    fn default() -> Self {
        Transform {
            length: 1.0,
            factor: 1.0,
            cap: None,
            reflected: false,
        }
    }
}

impl Transform {
    fn is_identity(&self) -> bool {
        *self == Transform::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyMeasureSpec {
    pub dim: usize,
    /// σ; 0 for finite-activity atomic fixtures without a compensator.
    pub order: f64,
    pub cutoff: Cutoff,
    pub form: MeasureForm,
    #[serde(default, skip_serializing_if = "Transform::is_identity")]
    pub transform: Transform,
}

/// Order estimate with its bracketing tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub sigma: f64,
    pub tolerance: f64,
    pub finite_activity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// |y| ≤ 1.
    Inner,
    /// |y| > 1.
    Outer,
}

#[derive(Clone)]
enum RadialBase {
    Power {
        coef: f64,
        sigma: f64,
    },
    Kernel {
        table: Arc<KernelTable>,
        modifier: Modifier,
        dim: usize,
    },
}

/// Polar view of a non-atomic measure: density A(w)·ρ(r) against dr S(dw).
#[derive(Clone)]
pub struct RadialView {
    pub dim: usize,
    base: RadialBase,
    modifier: Modifier,
    sphere: SphereMeasure,
    length: f64,
    factor: f64,
    pub cap: f64,
    reflected: bool,
}

impl RadialView {
    /// Radial density ρ(r) (per unit angular weight).
    pub fn rho(&self, r: f64) -> f64 {
        if !(r > 0.0) || r > self.cap {
            return 0.0;
        }
        let s = self.length * r;
        let base = match &self.base {
            RadialBase::Power { coef, sigma } => coef * s.powf(-1.0 - sigma),
            RadialBase::Kernel {
                table,
                modifier,
                dim,
            } => modifier.radial(s) * table.j(s) * s.powi(*dim as i32 - 1),
        };
        self.factor * self.length * base
    }

    /// Angular density A(w) against S(dw), after reflection.
    pub fn angular(&self, w: &[f64]) -> f64 {
        if self.reflected {
            let m: Vec<f64> = w.iter().map(|x| -x).collect();
            self.modifier.angular(&m)
        } else {
            self.modifier.angular(w)
        }
    }

    pub fn sphere_is_lebesgue(&self) -> bool {
        self.sphere.is_lebesgue()
    }

    /// Sphere quadrature nodes with weights multiplied by A(w).
    pub fn sphere_nodes(&self) -> Vec<(Vec<f64>, f64)> {
        self.sphere
            .nodes(self.dim)
            .into_iter()
            .map(|(w, m)| {
                let w = if self.reflected && !self.sphere.is_lebesgue() {
                    w.iter().map(|x| -x).collect()
                } else {
                    w
                };
                let a = self.angular(&w);
                (w, m * a)
            })
            .collect()
    }

    /// ∫_S g(w) A(w) S(dw).
    pub fn sphere_integral<G: Fn(&[f64]) -> f64>(&self, g: G) -> f64 {
        self.sphere_nodes().iter().map(|(w, m)| m * g(w)).sum()
    }

    /// ∫_a^b f(r) ρ(r) dr over (a, b] ∩ (0, cap], with power-law
    /// extrapolation below R_MIN and above R_MAX.
    pub fn radial_integral<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        let b = b.min(self.cap);
        if !(b > a) {
            return Ok(0.0);
        }
        let g = |r: f64| f(r) * self.rho(r);
        let opts = QuadOpts::rel(1e-12);
        let mut total = 0.0;
        let mut partial = Vec::new();
        let lo = if a > 0.0 { a } else { R_MIN.min(b) };
        let hi = if b.is_finite() { b } else { R_MAX.max(lo) };
        if a <= 0.0 {
            let h = quad::head_tail(&g, lo).ok_or_else(|| Error::Divergence {
                message: format!("radial integral diverges at the origin (r < {lo:e})"),
                partial_sums: partial.clone(),
            })?;
            total += h;
            partial.push(total);
        }
        let body = quad::log_radial(|r| [g(r)], lo, hi, opts);
        if !body.converged {
            return Err(Error::Accuracy {
                message: "radial moment quadrature".into(),
                achieved: body.error,
            });
        }
        total += body.value[0];
        partial.push(total);
        if !b.is_finite() {
            let t = quad::far_tail(&g, hi).ok_or_else(|| Error::Divergence {
                message: format!("radial integral diverges at infinity (r > {hi:e})"),
                partial_sums: partial.clone(),
            })?;
            total += t;
        }
        Ok(total)
    }
}

pub fn build_stable(d: usize, sigma: f64, scale: f64) -> Result<LevyMeasureSpec> {
    if d == 0 {
        return Err(Error::Domain("dimension must be ≥ 1".into()));
    }
    if !(sigma > 0.0 && sigma < 2.0) {
        return Err(Error::Domain(format!(
            "stable order σ={sigma} outside (0,2)"
        )));
    }
    if !(scale > 0.0) {
        return Err(Error::Domain(format!(
            "stable scale {scale} must be positive"
        )));
    }
    Ok(LevyMeasureSpec {
        dim: d,
        order: sigma,
        cutoff: Cutoff::for_order(sigma),
        form: MeasureForm::Stable { scale },
        transform: Transform::default(),
    })
}

/// Orders within this distance of 1 are treated as exactly 1.
pub const ORDER_SNAP: f64 = 1e-3;

pub fn build_subordinated(
    d: usize,
    b: BernsteinSpec,
    a: Modifier,
    s: SphereMeasure,
) -> Result<LevyMeasureSpec> {
    if d == 0 {
        return Err(Error::Domain("dimension must be ≥ 1".into()));
    }
    b.validate()?;
    s.validate(d)?;
    if let Modifier::Directional { axis, floor } = &a {
        let n2: f64 = axis.iter().map(|x| x * x).sum();
        if axis.len() != d || (n2.sqrt() - 1.0).abs() > 1e-12 || !(*floor > 0.0) {
            return Err(Error::Validation(
                "directional modifier needs a unit axis and floor > 0".into(),
            ));
        }
    }
    let nodes = s.nodes(d);
    for r in quad::geomspace(1e-6, 1e6, 49) {
        for (w, _) in &nodes {
            let v = a.eval(r, w);
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Validation(format!(
                    "modifier a(r={r:e}, w={w:?}) = {v} outside (0, 1]"
                )));
            }
        }
    }
    let mut spec = LevyMeasureSpec {
        dim: d,
        order: 1.0,
        cutoff: Cutoff::UnitBall,
        form: MeasureForm::Subordinated {
            bernstein: b,
            modifier: a,
            sphere: s,
        },
        transform: Transform::default(),
    };
    let est = spec.order_estimate()?;
    let sigma = if (est.sigma - 1.0).abs() < ORDER_SNAP {
        1.0
    } else {
        est.sigma
    };
    if !(sigma > 0.0 && sigma < 2.0) {
        return Err(Error::Validation(format!(
            "estimated order {sigma} outside (0,2)"
        )));
    }
    spec.order = sigma;
    spec.cutoff = Cutoff::for_order(sigma);
    spec.validate()?;
    Ok(spec)
}

/// Atomic fixture. `order_flag` selects the compensator exactly as σ would
/// (0 means no compensator).
pub fn build_atomic(
    d: usize,
    atoms: Vec<(Vec<f64>, f64)>,
    order_flag: f64,
) -> Result<LevyMeasureSpec> {
    if atoms.is_empty() {
        return Err(Error::Validation(
            "atomic measure needs at least one atom".into(),
        ));
    }
    for (y, m) in &atoms {
        let n2: f64 = y.iter().map(|x| x * x).sum();
        if y.len() != d || n2 == 0.0 || !(*m > 0.0) {
            return Err(Error::Validation(format!("invalid atom ({y:?}, {m})")));
        }
    }
    if !(0.0..2.0).contains(&order_flag) {
        return Err(Error::Domain(format!(
            "order flag {order_flag} outside [0,2)"
        )));
    }
    let spec = LevyMeasureSpec {
        dim: d,
        order: order_flag,
        cutoff: Cutoff::for_order(order_flag),
        form: MeasureForm::Atomic { atoms },
        transform: Transform::default(),
    };
    spec.validate()?;
    Ok(spec)
}

impl LevyMeasureSpec {
    pub fn is_atomic(&self) -> bool {
        matches!(self.form, MeasureForm::Atomic { .. })
    }

    /// Checks the class invariants: finite ∫(|y|²∧1)dπ, the σ-dependent
    /// outer first moment and the vanishing annulus means for σ = 1.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Domain("dimension must be ≥ 1".into()));
        }
        if self.cutoff != Cutoff::for_order(self.order) {
            return Err(Error::Validation(
                "cutoff kind inconsistent with the order".into(),
            ));
        }
        self.moment(2.0, Region::Inner)?;
        self.moment(0.0, Region::Outer)?;
        if self.cutoff == Cutoff::AllSpace {
            self.moment(1.0, Region::Outer)?;
        }
        if self.cutoff == Cutoff::UnitBall {
            let means = self.annulus_means(&quad::geomspace(1e-4, 1.0, 11))?;
            for m in means {
                let scale = self.moment(1.0, Region::Inner).unwrap_or(1.0).max(1e-300);
                if m.iter().any(|x| x.abs() > 1e-9 * scale) {
                    return Err(Error::Validation(
                        "σ = 1 requires vanishing annulus means ∫_{R<|y|≤R′} y dπ".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Atoms after applying the transform (atomic form only).
    pub fn atoms(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        let MeasureForm::Atomic { atoms } = &self.form else {
            return None;
        };
        let t = &self.transform;
        let sgn = if t.reflected { -1.0 } else { 1.0 };
        Some(
            atoms
                .iter()
                .map(|(y, m)| {
                    (
                        y.iter().map(|v| sgn * v / t.length).collect::<Vec<f64>>(),
                        m * t.factor,
                    )
                })
                .filter(|(y, _)| t.cap.is_none_or(|c| norm(y) <= c))
                .collect(),
        )
    }

    /// Polar view for non-atomic forms.
    pub fn radial_view(&self) -> Result<Option<RadialView>> {
        let t = &self.transform;
        let (base, modifier, sphere) = match &self.form {
            MeasureForm::Atomic { .. } => return Ok(None),
            MeasureForm::Stable { scale } => (
                RadialBase::Power {
                    coef: *scale,
                    sigma: self.order,
                },
                Modifier::Unit,
                SphereMeasure::Lebesgue { order: 32 },
            ),
            MeasureForm::Subordinated {
                bernstein,
                modifier,
                sphere,
            } => (
                RadialBase::Kernel {
                    table: kernel_table(bernstein, self.dim)?,
                    modifier: modifier.clone(),
                    dim: self.dim,
                },
                modifier.clone(),
                sphere.clone(),
            ),
        };
        Ok(Some(RadialView {
            dim: self.dim,
            base,
            modifier,
            sphere,
            length: t.length,
            factor: t.factor,
            cap: t.cap.unwrap_or(f64::INFINITY),
            reflected: t.reflected,
        }))
    }

    /// ∫ f(|y|) g(y/|y|) π(dy) over a < |y| ≤ b.
    pub fn integrate_polar<F, G>(&self, f: F, g: G, a: f64, b: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
        G: Fn(&[f64]) -> f64,
    {
        if let Some(atoms) = self.atoms() {
            return Ok(atoms
                .iter()
                .filter_map(|(y, m)| {
                    let r = norm(y);
                    if r > a && r <= b {
                        let w: Vec<f64> = y.iter().map(|v| v / r).collect();
                        Some(m * f(r) * g(&w))
                    } else {
                        None
                    }
                })
                .sum());
        }
        let v = self.radial_view()?.expect("non-atomic");
        let ang = v.sphere_integral(&g);
        if ang == 0.0 {
            return Ok(0.0);
        }
        Ok(ang * v.radial_integral(f, a, b)?)
    }

    /// ∫_{region} |y|^α dπ.
    pub fn moment(&self, alpha: f64, region: Region) -> Result<f64> {
        let (a, b) = match region {
            Region::Inner => (0.0, 1.0),
            Region::Outer => (1.0, f64::INFINITY),
        };
        self.integrate_polar(|r| r.powf(alpha), |_| 1.0, a, b)
            .map_err(|e| match e {
                Error::Divergence { partial_sums, .. } => Error::Divergence {
                    message: format!("moment of order {alpha} over the {region:?} region diverges"),
                    partial_sums,
                },
                other => other,
            })
    }

    /// Tail mass Λ(r) = π({|y| > r}).
    pub fn tail_mass(&self, r: f64) -> Result<f64> {
        self.integrate_polar(|_| 1.0, |_| 1.0, r, f64::INFINITY)
    }

    /// ∫_{R<|y|≤R′} y dπ for consecutive radii.
    pub fn annulus_means(&self, radii: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        for w in radii.windows(2) {
            let mut v = Vec::with_capacity(self.dim);
            for k in 0..self.dim {
                v.push(self.integrate_polar(|r| r, |u| u[k], w[0], w[1])?);
            }
            out.push(v);
        }
        Ok(out)
    }

    /// π̃_R = κ_R·π(R·) with κ_R = κ(R) supplied.
    pub fn rescaled(&self, r: f64, kappa_r: f64) -> Result<LevyMeasureSpec> {
        if !(r > 0.0 && kappa_r > 0.0) {
            return Err(Error::Domain("rescaling needs R > 0 and κ(R) > 0".into()));
        }
        let mut out = self.clone();
        let t = &mut out.transform;
        t.cap = t.cap.map(|c| c / r);
        match &mut out.form {
            MeasureForm::Stable { scale } => {
                *scale *= kappa_r * r.powf(-self.order);
            }
            MeasureForm::Atomic { atoms } => {
                let len = t.length;
                for (y, m) in atoms.iter_mut() {
                    for v in y.iter_mut() {
                        *v /= len * r;
                    }
                    *m *= kappa_r * t.factor;
                }
                t.length = 1.0;
                t.factor = 1.0;
            }
            MeasureForm::Subordinated { .. } => {
                t.length *= r;
                t.factor *= kappa_r;
            }
        }
        Ok(out)
    }

    /// ν = factor·π restricted to |y| ≤ cap.
    pub fn restricted(&self, cap: f64, factor: f64) -> LevyMeasureSpec {
        let mut out = self.clone();
        out.transform.cap = Some(out.transform.cap.map_or(cap, |c| c.min(cap)));
        match &mut out.form {
            MeasureForm::Stable { scale } => *scale *= factor,
            _ => out.transform.factor *= factor,
        }
        out
    }

    /// Multiplies the measure by a positive constant.
    pub fn scaled(&self, factor: f64) -> LevyMeasureSpec {
        let mut out = self.clone();
        match &mut out.form {
            MeasureForm::Stable { scale } => *scale *= factor,
            _ => out.transform.factor *= factor,
        }
        out
    }

    /// π*(Γ) = π(−Γ).
    pub fn reflect(&self) -> LevyMeasureSpec {
        let mut out = self.clone();
        match &mut out.form {
            MeasureForm::Stable { .. } => {}
            MeasureForm::Atomic { atoms } => {
                for (y, _) in atoms.iter_mut() {
                    for v in y.iter_mut() {
                        *v = -*v;
                    }
                }
            }
            MeasureForm::Subordinated {
                sphere, modifier, ..
            } => {
                if let SphereMeasure::Atoms { atoms } = sphere {
                    for (w, _) in atoms.iter_mut() {
                        for v in w.iter_mut() {
                            *v = -*v;
                        }
                    }
                    if let Modifier::Directional { axis, .. } = modifier {
                        for v in axis.iter_mut() {
                            *v = -*v;
                        }
                    }
                } else {
                    out.transform.reflected = !out.transform.reflected;
                }
            }
        }
        out
    }

    /// Symmetric under y ↦ −y.
    pub fn is_symmetric(&self) -> bool {
        match &self.form {
            MeasureForm::Stable { .. } => true,
            MeasureForm::Atomic { .. } => {
                let a = self.atoms().unwrap_or_default();
                a.iter().all(|(y, m)| {
                    a.iter().any(|(z, n)| {
                        (m - n).abs() <= 1e-12 * m.abs()
                            && y.iter()
                                .zip(z)
                                .all(|(u, v)| (u + v).abs() <= 1e-12 * (1.0 + u.abs()))
                    })
                })
            }
            MeasureForm::Subordinated { .. } => match self.radial_view() {
                Ok(Some(v)) => {
                    let nodes = v.sphere_nodes();
                    if v.sphere_is_lebesgue() {
                        nodes.iter().all(|(w, _)| {
                            let m: Vec<f64> = w.iter().map(|x| -x).collect();
                            (v.angular(w) - v.angular(&m)).abs() < 1e-12
                        })
                    } else {
                        nodes.iter().all(|(w, m)| {
                            nodes.iter().any(|(z, n)| {
                                (m - n).abs() <= 1e-12 * m
                                    && w.iter().zip(z).all(|(u, v)| (u + v).abs() < 1e-12)
                            })
                        })
                    }
                }
                _ => false,
            },
        }
    }

    /// Order estimate σ̂: exact for the stable form, 0 for atoms, otherwise
    /// the blow-up exponent of α ↦ ∫_{|y|≤1}|y|^α dπ located from the
    /// ratio of two innermost-decade contributions on an α grid.
    pub fn order_estimate(&self) -> Result<OrderEstimate> {
        match &self.form {
            MeasureForm::Stable { .. } => Ok(OrderEstimate {
                sigma: self.order,
                tolerance: 0.0,
                finite_activity: false,
            }),
            MeasureForm::Atomic { .. } => Ok(OrderEstimate {
                sigma: 0.0,
                tolerance: 0.0,
                finite_activity: true,
            }),
            MeasureForm::Subordinated { .. } => {
                let v = self.radial_view()?.expect("non-atomic");
                let decade = |alpha: f64, lo: f64| -> Result<f64> {
                    let q = quad::log_radial(
                        |r| [r.powf(alpha) * v.rho(r)],
                        lo,
                        10.0 * lo,
                        QuadOpts::rel(1e-12),
                    );
                    Ok(q.require("order estimate")?.value[0])
                };
                // g(α) = log10(inner decade / outer decade) = σ − α for a power law.
                let g = |alpha: f64| -> Result<f64> {
                    Ok((decade(alpha, R_MIN)? / decade(alpha, 10.0 * R_MIN)?).log10())
                };
                let mut prev: Option<(f64, f64)> = None;
                for i in 0..=39 {
                    let alpha = 0.05 * i as f64;
                    let gv = g(alpha)?;
                    if gv <= 0.0 {
                        let sigma = match prev {
                            Some((a0, g0)) => a0 + 0.05 * g0 / (g0 - gv),
                            None => 0.0,
                        };
                        return Ok(OrderEstimate {
                            sigma,
                            tolerance: 0.05,
                            finite_activity: false,
                        });
                    }
                    prev = Some((alpha, gv));
                }
                Ok(OrderEstimate {
                    sigma: 2.0,
                    tolerance: 0.05,
                    finite_activity: false,
                })
            }
        }
    }

    /// Second-moment tensor ∫_{|y|≤ε} y yᵀ dπ (row-major d×d).
    pub fn small_jump_covariance(&self, eps: f64) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut c = vec![0.0; d * d];
        for j in 0..d {
            for k in j..d {
                let v = self.integrate_polar(|r| r * r, |w| w[j] * w[k], 0.0, eps)?;
                c[j * d + k] = v;
                c[k * d + j] = v;
            }
        }
        Ok(c)
    }

    /// ∫_{a<|y|≤b} χ_σ(y) y dπ.
    pub fn compensator_drift(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        let cut = self.cutoff;
        let (a, b) = match cut {
            Cutoff::None => return Ok(vec![0.0; self.dim]),
            Cutoff::UnitBall => (a.min(1.0), b.min(1.0)),
            Cutoff::AllSpace => (a, b),
        };
        (0..self.dim)
            .map(|k| self.integrate_polar(|r| r, |w| w[k], a, b))
            .collect()
    }

    /// Stable content digest of the spec (hex SHA-256 of its JSON form).
    pub fn digest(&self) -> String {
        crate::report::digest_json(self)
    }
}

pub fn norm(y: &[f64]) -> f64 {
    y.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// π̃_R = κ(R)π_R for a scaling function.
pub fn rescale(spec: &LevyMeasureSpec, r: f64, sf: &ScalingFunction) -> Result<LevyMeasureSpec> {
    spec.rescaled(r, sf.kappa(r)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_cutoffs_and_domain() {
        assert_eq!(build_stable(1, 0.5, 1.0).unwrap().cutoff, Cutoff::None);
        assert_eq!(build_stable(2, 1.5, 1.0).unwrap().cutoff, Cutoff::AllSpace);
        assert_eq!(build_stable(1, 1.0, 1.0).unwrap().cutoff, Cutoff::UnitBall);
        assert!(matches!(build_stable(1, 2.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn stable_moments_match_antiderivatives() {
        let s = build_stable(1, 0.5, 1.0).unwrap();
        // ∫₀¹ 2 r^{α−1−σ} dr = 2/(α−σ).
        let m = s.moment(1.0, Region::Inner).unwrap();
        assert!((m - 4.0).abs() < 4e-8, "{m}");
        assert!(matches!(
            s.moment(0.25, Region::Inner),
            Err(Error::Divergence { .. })
        ));
        // ∫₁^∞ 2 r^{α−1−σ} dr = 2/(σ−α).
        let o = s.moment(0.25, Region::Outer).unwrap();
        assert!((o - 8.0).abs() < 8e-8, "{o}");
        let s2 = build_stable(2, 1.5, 1.0).unwrap();
        let m2 = s2.moment(2.0, Region::Inner).unwrap();
        let oracle = 2.0 * std::f64::consts::PI / 0.5;
        assert!((m2 / oracle - 1.0).abs() < 1e-8);
    }

    #[test]
    fn atomic_moment_and_rescale() {
        let a = build_atomic(1, vec![(vec![2.0], 3.0)], 0.0).unwrap();
        assert_eq!(a.moment(2.0, Region::Outer).unwrap(), 12.0);
        let b = build_atomic(1, vec![(vec![1.0], 2.0)], 0.0).unwrap();
        let r = b.rescaled(2.0, 5.0).unwrap();
        assert_eq!(r.atoms().unwrap(), vec![(vec![0.5], 10.0)]);
        assert_eq!(b.rescaled(1.0, 1.0).unwrap(), b);
        assert_eq!(b.reflect().atoms().unwrap(), vec![(vec![-1.0], 2.0)]);
        assert!(b.order_estimate().unwrap().finite_activity);
    }

    #[test]
    fn stable_is_self_similar_fixed_point() {
        let s = build_stable(1, 0.5, 1.0).unwrap();
        let r = s.rescaled(4.0, 2.0).unwrap();
        assert_eq!(r, s);
        assert_eq!(s.reflect(), s);
    }

    #[test]
    fn subordinated_power_family_order() {
        let b = BernsteinSpec::PowerSum {
            exponents: vec![0.4],
        };
        let s = build_subordinated(1, b, Modifier::Unit, SphereMeasure::lebesgue()).unwrap();
        assert!((s.order - 0.8).abs() < 0.05, "{}", s.order);
        assert_eq!(s.cutoff, Cutoff::None);
    }

    #[test]
    fn subordinated_family_two_order_in_delta_bracket() {
        let b = BernsteinSpec::PowerLog {
            alpha: 0.3,
            beta: 0.2,
        };
        let s = build_subordinated(2, b, Modifier::Unit, SphereMeasure::lebesgue()).unwrap();
        assert!(
            s.order >= 0.6 - 0.05 && s.order <= 1.0 + 0.05,
            "{}",
            s.order
        );
    }

    #[test]
    fn modifier_above_one_rejected() {
        let b = BernsteinSpec::PowerSum {
            exponents: vec![0.3],
        };
        let r = build_subordinated(
            1,
            b,
            Modifier::Constant { value: 1.5 },
            SphereMeasure::lebesgue(),
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn reflect_subordinated_atom_direction() {
        let b = BernsteinSpec::PowerSum {
            exponents: vec![0.3],
        };
        let s = build_subordinated(
            2,
            b,
            Modifier::Unit,
            SphereMeasure::Atoms {
                atoms: vec![(vec![1.0, 0.0], 1.0)],
            },
        )
        .unwrap();
        let r = s.reflect();
        match &r.form {
            MeasureForm::Subordinated {
                sphere: SphereMeasure::Atoms { atoms },
                ..
            } => assert_eq!(atoms[0].0, vec![-1.0, 0.0]),
            _ => panic!(),
        }
        let m = s.moment(1.0, Region::Inner).unwrap();
        let mr = r.reflect().moment(1.0, Region::Inner).unwrap();
        assert!((m - mr).abs() <= 1e-12 * m);
    }

    #[test]
    fn sigma_one_requires_symmetric_sphere() {
        let b = BernsteinSpec::PowerSum {
            exponents: vec![0.5],
        };
        let one_sided = build_subordinated(
            1,
            b.clone(),
            Modifier::Unit,
            SphereMeasure::Atoms {
                atoms: vec![(vec![1.0], 1.0)],
            },
        );
        assert!(matches!(one_sided, Err(Error::Validation(_))));
        let sym = build_subordinated(1, b, Modifier::Unit, SphereMeasure::lebesgue()).unwrap();
        assert_eq!(sym.order, 1.0);
        for m in sym.annulus_means(&quad::geomspace(1e-3, 1.0, 10)).unwrap() {
            assert!(m[0].abs() < 1e-14);
        }
    }
}
