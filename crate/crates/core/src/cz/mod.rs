//! Anisotropic space-time cylinders Q_δ(t, x) = (t − κ(δ), t + κ(δ)) × B_δ(x)
//! and the covering machinery built on them: engulfing, Vitali selection,
//! maximal functions, the Calderón–Zygmund decomposition, and the Hörmander
//! integral of the solver kernel.
//!
//! Containment, intersection and disjointness use exact interval and ball
//! arithmetic. Set measures use lattice rasterization.

mod decompose;
mod hormander;
mod maximal;

pub use decompose::{cz_decompose, whitney_params, BadPart, CzDecomposition, WhitneyParams};
pub use hormander::{hormander_check, HormanderOpts};
pub use maximal::{
    critical_deltas, maximal_function, weak11_and_lp_check, MaximalMode, MaximalOutput,
    SpaceTimeGrid,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::EstimateReport;
use crate::scaling::{ScaleFn, ScalingFunction};

/// Largest K₀ tried by the engulfing search.
pub const K0_MAX: f64 = 1e12;
/// Cap on raster cells for union measures.
pub const RASTER_CELLS: usize = 1 << 24;

/// Volume of the unit ball in R^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// κ⁻¹(s) for increasing κ (closed form for powers, bisection otherwise).
pub fn kappa_inverse(kappa: &ScaleFn, s: f64) -> Result<f64> {
    if s <= 0.0 {
        return Ok(0.0);
    }
    if let ScaleFn::Power { coef, exponent } = kappa {
        return Ok((s / coef).powf(1.0 / exponent));
    }
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let mut k = 0;
    while kappa.eval(hi)? < s {
        hi *= 2.0;
        k += 1;
        if k > 2000 {
            return Err(Error::Unbounded(format!("κ stays below {s:e}")));
        }
    }
    while kappa.eval(lo)? >= s {
        lo /= 2.0;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kappa.eval(mid)? < s {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub t: f64,
    pub x: Vec<f64>,
    pub delta: f64,
    /// κ(δ).
    pub half_width: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

impl Cylinder {
    pub fn new(t: f64, x: Vec<f64>, delta: f64, kappa: &ScaleFn) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Domain(format!(
                "cylinder radius δ = {delta} must be positive"
            )));
        }
        let half_width = kappa.eval(delta)?;
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Domain(format!(
                "κ(δ) = {half_width} must be positive"
            )));
        }
        Ok(Cylinder {
            t,
            x,
            delta,
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// c₀κ(δ)δ^d with c₀ = 2|B₁|.
    pub fn volume(&self) -> f64 {
        2.0 * unit_ball_volume(self.dim()) * self.half_width * self.delta.powi(self.dim() as i32)
    }

    pub fn contains(&self, s: f64, y: &[f64]) -> bool {
        (s - self.t).abs() < self.half_width && dist(y, &self.x) < self.delta
    }

    pub fn intersects(&self, o: &Cylinder) -> bool {
        (self.t - o.t).abs() < self.half_width + o.half_width
            && dist(&self.x, &o.x) < self.delta + o.delta
    }

    /// o ⊆ self for the open sets.
    pub fn contains_cylinder(&self, o: &Cylinder) -> bool {
        (self.t - o.t).abs() + o.half_width <= self.half_width
            && dist(&self.x, &o.x) + o.delta <= self.delta
    }

    /// Same center, radius factor·δ.
    pub fn dilate(&self, factor: f64, kappa: &ScaleFn) -> Result<Cylinder> {
        Cylinder::new(self.t, self.x.clone(), factor * self.delta, kappa)
    }
}

/// Smallest K₀ ≥ 3 with [2l(1) + 1]·l(1/K₀) ≤ 1: doubling search, then
/// bisection to relative width 1e−14.
pub fn engulfing_constant(l: &ScaleFn) -> Result<f64> {
    let a = 2.0 * l.eval(1.0)? + 1.0;
    let ok = |k: f64| -> Result<bool> { Ok(a * l.eval(1.0 / k)? <= 1.0) };
    if ok(3.0)? {
        return Ok(3.0);
    }
    let (mut lo, mut hi) = (3.0f64, 6.0f64);
    while !ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > K0_MAX {
            return Err(Error::Unbounded(format!(
                "[2l(1)+1]·l(1/K) ≤ 1 has no solution K ≤ {K0_MAX:e}"
            )));
        }
    }
    while hi / lo - 1.0 > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// c = K₀^d·l(K₀).
pub fn doubling_constant(sf: &ScalingFunction, d: usize) -> Result<(f64, f64)> {
    let k0 = engulfing_constant(&sf.l)?;
    Ok((k0, k0.powi(d as i32) * sf.l(k0)?))
}

fn random_in(rng: &mut ChaCha8Rng, c: &Cylinder) -> (f64, Vec<f64>) {
    let s = c.t + c.half_width * rng.random_range(-1.0..1.0);
    loop {
        let y: Vec<f64> =
            c.x.iter()
                .map(|v| v + c.delta * rng.random_range(-1.0..1.0))
                .collect();
        if dist(&y, &c.x) < c.delta {
            return (s, y);
        }
    }
}

/// Random intersecting pairs Q_δ(t,x), Q_δ′(r,z) with δ′ ≤ δ: checks
/// Q_δ′ ⊆ Q_{K₀δ}(t,x) exactly and on sampled points, and the volume bound
/// |Q_{K₀δ}| ≤ K₀^d l(K₀)|Q_δ|.
pub fn engulfing_check(
    sf: &ScalingFunction,
    d: usize,
    pairs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    let (k0, c) = doubling_constant(sf, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exact_fail = 0usize;
    let mut sample_fail = 0usize;
    let mut vol_ratio = 0.0f64;
    for _ in 0..pairs {
        let delta = 10f64.powf(rng.random_range(-2.0..2.0));
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        let q = Cylinder::new(rng.random_range(-10.0..10.0), x, delta, &sf.kappa)?;
        let (s, y) = random_in(&mut rng, &q);
        let dp = delta * rng.random_range(1e-3..=1.0);
        let probe = Cylinder::new(0.0, vec![0.0; d], dp, &sf.kappa)?;
        let (ds, dy) = random_in(&mut rng, &probe);
        let small = Cylinder::new(
            s - ds,
            y.iter().zip(&dy).map(|(a, b)| a - b).collect(),
            dp,
            &sf.kappa,
        )?;
        debug_assert!(small.intersects(&q));
        let big = q.dilate(k0, &sf.kappa)?;
        if !(big.contains_cylinder(&small) && big.contains_cylinder(&q)) {
            exact_fail += 1;
        }
        for _ in 0..16 {
            let (a, b) = random_in(&mut rng, &small);
            if !big.contains(a, &b) {
                sample_fail += 1;
            }
        }
        vol_ratio = vol_ratio.max(big.volume() / q.volume());
    }
    Ok(EstimateReport::inequality(
        "engulfing",
        vec![exact_fail as f64, sample_fail as f64, vol_ratio],
        vec![0.0, 0.0, c],
        1e-12,
    )
    .with_diag("k0", k0)
    .with_diag("pairs", pairs)
    .with_diag(
        "rows",
        [
            "exact_containment_failures",
            "sampled_membership_failures",
            "volume_ratio",
        ],
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitaliResult {
    pub selected: Vec<usize>,
    /// Σ|Q^k| of the selected cylinders (exact volumes).
    pub selected_volume: f64,
    /// |∪Q′| by rasterization.
    pub union_volume: f64,
    pub ratio: f64,
    /// 1/(K₀^d l(K₀)).
    pub c: f64,
    pub pass: bool,
}

/// Greedy Vitali selection: repeatedly take the largest remaining radius
/// among the cylinders disjoint from those already taken (ties by index).
pub fn vitali_cover(cyls: &[Cylinder], sf: &ScalingFunction) -> Result<VitaliResult> {
    if cyls.is_empty() {
        return Err(Error::Validation(
            "Vitali covering needs a nonempty list".into(),
        ));
    }
    let d = cyls[0].dim();
    if cyls.iter().any(|c| c.dim() != d) {
        return Err(Error::Shape("cylinders of mixed dimension".into()));
    }
    let (_, cdb) = doubling_constant(sf, d)?;
    let mut order: Vec<usize> = (0..cyls.len()).collect();
    order.sort_by(|a, b| cyls[*b].delta.total_cmp(&cyls[*a].delta).then(a.cmp(b)));
    let mut selected: Vec<usize> = Vec::new();
    for i in order {
        if selected.iter().all(|j| !cyls[*j].intersects(&cyls[i])) {
            selected.push(i);
        }
    }
    let selected_volume: f64 = selected.iter().map(|i| cyls[*i].volume()).sum();
    let union_volume = raster_union(cyls)?;
    let ratio = selected_volume / union_volume;
    let c = 1.0 / cdb;
    Ok(VitaliResult {
        selected,
        selected_volume,
        union_volume,
        ratio,
        c,
        pass: ratio >= c,
    })
}

/// Measure of a union of cylinders on a lattice of cell centers with cells
/// at most a quarter of the smallest half-widths (capped at RASTER_CELLS).
pub fn raster_union(cyls: &[Cylinder]) -> Result<f64> {
    let d = cyls[0].dim();
    let axes = d + 1;
    let mut lo = vec![f64::INFINITY; axes];
    let mut hi = vec![f64::NEG_INFINITY; axes];
    let mut h_min = vec![f64::INFINITY; axes];
    for c in cyls {
        lo[0] = lo[0].min(c.t - c.half_width);
        hi[0] = hi[0].max(c.t + c.half_width);
        h_min[0] = h_min[0].min(c.half_width / 4.0);
        for a in 0..d {
            lo[a + 1] = lo[a + 1].min(c.x[a] - c.delta);
            hi[a + 1] = hi[a + 1].max(c.x[a] + c.delta);
            h_min[a + 1] = h_min[a + 1].min(c.delta / 4.0);
        }
    }
    let cap = (RASTER_CELLS as f64).powf(1.0 / axes as f64).floor() as usize;
    let counts: Vec<usize> = (0..axes)
        .map(|a| (((hi[a] - lo[a]) / h_min[a]).ceil() as usize).clamp(1, cap))
        .collect();
    let h: Vec<f64> = (0..axes)
        .map(|a| (hi[a] - lo[a]) / counts[a] as f64)
        .collect();
    let total: usize = counts.iter().product();
    let mut mark = vec![false; total];
    let mut p = vec![0.0; axes];
    for c in cyls {
        let mut r_lo = vec![0usize; axes];
        let mut r_hi = vec![0usize; axes];
        for a in 0..axes {
            let (ctr, w) = if a == 0 {
                (c.t, c.half_width)
            } else {
                (c.x[a - 1], c.delta)
            };
            r_lo[a] = (((ctr - w - lo[a]) / h[a]).floor().max(0.0)) as usize;
            r_hi[a] = ((((ctr + w - lo[a]) / h[a]).ceil()) as usize).min(counts[a]);
        }
        for_each_in_box(&r_lo, &r_hi, |idx| {
            for a in 0..axes {
                p[a] = lo[a] + (idx[a] as f64 + 0.5) * h[a];
            }
            if c.contains(p[0], &p[1..]) {
                let flat = idx
                    .iter()
                    .zip(&counts)
                    .fold(0usize, |acc, (i, n)| acc * n + i);
                mark[flat] = true;
            }
        });
    }
    let cell: f64 = h.iter().product();
    Ok(mark.iter().filter(|m| **m).count() as f64 * cell)
}

/// Calls f on every multi-index in the half-open box [lo, hi).
pub(crate) fn for_each_in_box(lo: &[usize], hi: &[usize], mut f: impl FnMut(&[usize])) {
    if lo.iter().zip(hi).any(|(a, b)| a >= b) {
        return;
    }
    let mut idx = lo.to_vec();
    loop {
        f(&idx);
        let mut a = idx.len();
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < hi[a] {
                break;
            }
            idx[a] = lo[a];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::ScalingConstants;

    fn sf_with(kappa: ScaleFn, l: ScaleFn) -> ScalingFunction {
        ScalingFunction {
            kappa,
            l,
            alpha1: 1.0,
            alpha2: 1.0,
            delta: None,
            constants: ScalingConstants::default(),
        }
    }

    #[test]
    fn engulfing_constants() {
        assert_eq!(engulfing_constant(&ScaleFn::power(1.0)).unwrap(), 3.0);
        let k = engulfing_constant(&ScaleFn::power(0.5)).unwrap();
        assert!((k - 9.0).abs() < 1e-9, "{k}");
        assert!(matches!(
            engulfing_constant(&ScaleFn::Constant { value: 1.0 }),
            Err(Error::Unbounded(_))
        ));
        // σ = 1.5: l(1/K) = K^{-1.5} ≤ 1/3 ⇒ K = 3^{2/3} < 3.
        assert_eq!(engulfing_constant(&ScaleFn::power(1.5)).unwrap(), 3.0);
    }

    #[test]
    fn kappa_inverse_matches_power() {
        let k = ScaleFn::Piecewise {
            coef: 2.0,
            below: 0.5,
            above: 1.5,
        };
        for s in [0.01, 0.7, 2.0, 9.0, 300.0] {
            let r = kappa_inverse(&k, s).unwrap();
            assert!((k.eval(r).unwrap() / s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn engulfing_on_random_pairs() {
        for (sigma, d) in [(0.5, 1), (1.0, 1), (1.5, 2)] {
            let sf = ScalingFunction::stable(sigma, 1.0, 1.0);
            let r = engulfing_check(&sf, d, 1000, 17).unwrap();
            assert!(r.pass, "{}", r.render_text());
            assert_eq!(r.lhs[0], 0.0);
        }
        let sf = sf_with(
            ScaleFn::Piecewise {
                coef: 1.0,
                below: 0.4,
                above: 1.2,
            },
            ScaleFn::Piecewise {
                coef: 1.0,
                below: 0.4,
                above: 1.2,
            },
        );
        assert!(engulfing_check(&sf, 1, 1000, 3).unwrap().pass);
    }

    #[test]
    fn cylinder_geometry() {
        let k = ScaleFn::power(2.0);
        let q = Cylinder::new(0.0, vec![0.0], 1.0, &k).unwrap();
        assert_eq!(q.volume(), 4.0);
        assert!(q.contains(0.99, &[-0.99]));
        assert!(!q.contains(1.0, &[0.0]));
        let r = Cylinder::new(2.0, vec![0.0], 1.0, &k).unwrap();
        assert!(!q.intersects(&r));
        assert!(q.dilate(2.0, &k).unwrap().contains_cylinder(&q));
        assert!(Cylinder::new(0.0, vec![0.0], 0.0, &k).is_err());
        assert!((unit_ball_volume(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn vitali_trivial_cases() {
        let sf = ScalingFunction::stable(1.0, 1.0, 1.0);
        let k = &sf.kappa;
        let disjoint: Vec<Cylinder> = (0..5)
            .map(|i| Cylinder::new(3.0 * i as f64, vec![0.0], 1.0, k).unwrap())
            .collect();
        let r = vitali_cover(&disjoint, &sf).unwrap();
        assert_eq!(r.selected.len(), 5);
        assert!((r.ratio - 1.0).abs() < 0.02 && r.pass);
        let copies = vec![disjoint[0].clone(); 7];
        let r = vitali_cover(&copies, &sf).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert!((r.ratio - 1.0).abs() < 0.02);
        assert!(vitali_cover(&[], &sf).is_err());
    }

    #[test]
    fn vitali_random_cloud() {
        let sf = ScalingFunction::stable(1.0, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cyls: Vec<Cylinder> = (0..100)
            .map(|_| {
                let delta = 10f64.powf(rng.random_range(-1.0..0.5));
                Cylinder::new(
                    rng.random_range(0.0..10.0),
                    vec![rng.random_range(0.0..10.0)],
                    delta,
                    &sf.kappa,
                )
                .unwrap()
            })
            .collect();
        let r = vitali_cover(&cyls, &sf).unwrap();
        assert!((r.c - 1.0 / 9.0).abs() < 1e-15);
        assert!(r.pass, "{r:?}");
        for (n, i) in r.selected.iter().enumerate() {
            for j in &r.selected[n + 1..] {
                assert!(!cyls[*i].intersects(&cyls[*j]));
            }
        }
        // Every input meets a selected cylinder of at least its radius.
        for c in &cyls {
            assert!(r
                .selected
                .iter()
                .any(|i| cyls[*i].intersects(c) && cyls[*i].delta >= c.delta));
        }
    }

    #[test]
    fn raster_union_of_overlapping_pair() {
        let k = ScaleFn::power(1.0);
        let a = Cylinder::new(0.0, vec![0.0], 1.0, &k).unwrap();
        let b = Cylinder::new(1.0, vec![1.0], 1.0, &k).unwrap();
        // Two 2×2 squares overlapping in a unit square.
        let v = raster_union(&[a, b]).unwrap();
        assert!((v - 7.0).abs() < 1e-2, "{v}");
    }
}
