//! Whitney covering of {ℳ̃f > α} and the Calderón–Zygmund splitting f = g + Σb_k.
//!
//! Sets are lattice-point sets of the working grid. A cylinder's lattice set
//! is its stencil; |·|_r is point count times cell measure. D(p) is exact:
//! the infimum over δ with Q_δ(p) meeting F is min over q ∈ F of
//! max(|x_p − x_q|, κ⁻¹(|t_p − t_q|)).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::maximal::{lattice_doubling, stencil_cells, stencil_for, Stencil};
use super::{
    critical_deltas, doubling_constant, engulfing_constant, kappa_inverse, maximal_function,
};
use super::{Cylinder, MaximalMode, SpaceTimeGrid};
use crate::error::{Error, Result};
use crate::report::EstimateReport;
use crate::scaling::{ScaleFn, ScalingFunction};

/// Radius factors ε < 1/2 < A of Q^k, Q*^k, Q**^k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitneyParams {
    pub k0: f64,
    pub a: f64,
    pub eps: f64,
}

/// A: smallest power of two with l(1/A) < 1. ε: 1/(4AK₀³), halved until
/// l(2K₀ε) < 1.
pub fn whitney_params(l: &ScaleFn) -> Result<WhitneyParams> {
    let k0 = engulfing_constant(l)?;
    let mut a = 2.0f64;
    while l.eval(1.0 / a)? >= 1.0 {
        a *= 2.0;
        if a > 1e12 {
            return Err(Error::Unbounded("no A with l(1/A) < 1".into()));
        }
    }
    let mut eps = 1.0 / (4.0 * a * k0.powi(3));
    while l.eval(2.0 * k0 * eps)? >= 1.0 {
        eps *= 0.5;
        if eps < 1e-300 {
            return Err(Error::Unbounded("no ε with l(2K₀ε) < 1".into()));
        }
    }
    Ok(WhitneyParams { k0, a, eps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadPart {
    /// Flat index of the center (t_k, x_k).
    pub center: usize,
    /// D(t_k, x_k).
    pub d: f64,
    /// Flat index of a point of F closest in the cylinder metric.
    pub witness: usize,
    pub q: Cylinder,
    pub q_star: Cylinder,
    pub q_star2: Cylinder,
    /// Flat indices of C^k, increasing.
    pub cells: Vec<usize>,
    /// Mean of f over C^k.
    pub mean: f64,
    /// b_k on `cells`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzDecomposition {
    /// Input on the working grid (padded when requested).
    pub f: SpaceTimeGrid,
    pub g_part: SpaceTimeGrid,
    pub bad_parts: Vec<BadPart>,
    pub params: WhitneyParams,
    pub alpha: f64,
    /// Padding added in time and space cells per side.
    pub pad: [usize; 2],
    /// |O_α|_r.
    pub open_volume: f64,
    /// Σ|Q*^k|_r.
    pub star_volume: f64,
    pub report: EstimateReport,
}

impl CzDecomposition {
    /// Σ_k b_k on the working grid.
    pub fn bad_sum(&self) -> SpaceTimeGrid {
        let mut v = vec![0.0; self.f.len()];
        for b in &self.bad_parts {
            for (i, x) in b.cells.iter().zip(&b.values) {
                v[*i] += x;
            }
        }
        self.f.with_values(v)
    }
}

const ROWS: [&str; 12] = [
    "wh_a_overlapping_pairs",
    "wh_b_uncovered_or_outside",
    "wh_c_star2_missing_f",
    "ck_violations",
    "reconstruction_max_abs",
    "i_avg_star2_abs_f",
    "i_max_abs_g",
    "ii_rel_mean_b",
    "ii_l1_b_over_star2",
    "iii_open_volume",
    "iii_star_over_open",
    "iii_star_volume",
];

/// Decomposes f at level α. With `pad`, zero cells are added so that
/// O_α stays away from the box edge; without it, O_α touching the outer
/// layer is a Boundary error.
pub fn cz_decompose(
    f: &SpaceTimeGrid,
    alpha: f64,
    sf: &ScalingFunction,
    pad: bool,
) -> Result<CzDecomposition> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("level α = {alpha} must be positive")));
    }
    let kappa = &sf.kappa;
    let params = whitney_params(&sf.l)?;
    let d = f.dim;
    let l1 = f.norm(1.0);
    let cell = f.cell_measure();

    let deltas = if l1 > 0.0 {
        critical_deltas(f, kappa, l1 / alpha)?
    } else {
        vec![0.5 * f.dx.min(kappa_inverse(kappa, f.dt)?)]
    };
    let (pt, px) = if pad {
        let (kt, ks) = stencil_for(f, kappa, *deltas.last().expect("nonempty"))?.reach();
        (2 * kt as usize + 1, 2 * ks as usize + 1)
    } else {
        (0, 0)
    };
    let h = f.padded(pt, px);
    let m = maximal_function(&h, kappa, &deltas, MaximalMode::Noncentered)?;
    let open: Vec<bool> = m.values.values.iter().map(|v| *v > alpha).collect();
    let open_idx: Vec<usize> = (0..h.len()).filter(|i| open[*i]).collect();
    let closed_idx: Vec<usize> = (0..h.len()).filter(|i| !open[*i]).collect();
    if closed_idx.is_empty() {
        return Err(Error::Boundary(format!(
            "O_α covers the whole grid at α = {alpha:e}"
        )));
    }
    if !pad {
        let shape = h.shape();
        let touches = open_idx.iter().any(|i| {
            h.unravel(*i)
                .iter()
                .zip(&shape)
                .any(|(j, n)| *j == 0 || *j + 1 == *n)
        });
        if touches {
            return Err(Error::Boundary(format!(
                "O_α reaches the box edge at α = {alpha:e}"
            )));
        }
    }

    // Exact D and a nearest F point for every open point.
    let kinv: Vec<f64> = (0..h.nt)
        .map(|k| kappa_inverse(kappa, k as f64 * h.dt))
        .collect::<Result<_>>()?;
    let closed_pos: Vec<Vec<usize>> = closed_idx.iter().map(|i| h.unravel(*i)).collect();
    let dist: Vec<(f64, usize)> = open_idx
        .par_iter()
        .map(|i| {
            let p = h.unravel(*i);
            let mut best = (f64::INFINITY, 0usize);
            for (q, qi) in closed_pos.iter().zip(&closed_idx) {
                let n2: usize = p[1..]
                    .iter()
                    .zip(&q[1..])
                    .map(|(a, b)| a.abs_diff(*b).pow(2))
                    .sum();
                let v = ((n2 as f64).sqrt() * h.dx).max(kinv[p[0].abs_diff(q[0])]);
                if v < best.0 {
                    best = (v, *qi);
                }
            }
            best
        })
        .collect();

    let cyl = |i: usize, r: f64| -> Result<Cylinder> {
        let (t, x) = h.point(i);
        Cylinder::new(t, x, r, kappa)
    };

    // Greedy maximal disjoint subfamily of {Q_{εD(p)}(p)}, largest first.
    let mut order: Vec<usize> = (0..open_idx.len()).collect();
    order.sort_by(|a, b| dist[*b].0.total_cmp(&dist[*a].0).then(a.cmp(b)));
    let mut chosen: Vec<(usize, Cylinder)> = Vec::new();
    for o in order {
        let q = cyl(open_idx[o], params.eps * dist[o].0)?;
        if chosen.iter().all(|(_, c)| !c.intersects(&q)) {
            chosen.push((o, q));
        }
    }

    let mut parts: Vec<BadPart> = Vec::with_capacity(chosen.len());
    let mut stencils: Vec<(Stencil, Stencil, Stencil)> = Vec::with_capacity(chosen.len());
    for (o, q) in chosen {
        let (dd, witness) = dist[o];
        let center = open_idx[o];
        stencils.push((
            stencil_for(&h, kappa, params.eps * dd)?,
            stencil_for(&h, kappa, 0.5 * dd)?,
            stencil_for(&h, kappa, params.a * dd)?,
        ));
        parts.push(BadPart {
            center,
            d: dd,
            witness,
            q,
            q_star: cyl(center, 0.5 * dd)?,
            q_star2: cyl(center, params.a * dd)?,
            cells: Vec::new(),
            mean: 0.0,
            values: Vec::new(),
        });
    }

    // Lattice sets of Q^k and Q*^k; C^k = Q*^k ∖ (∪_{j<k} C^j ∪ ∪_{j>k} Q^j).
    let none = usize::MAX;
    let mut q_label = vec![none; h.len()];
    let mut q_overlap = 0usize;
    let q_cells: Vec<Vec<usize>> = parts
        .iter()
        .zip(&stencils)
        .map(|(b, s)| stencil_cells(&h, &s.0, b.center))
        .collect();
    for (k, cells) in q_cells.iter().enumerate() {
        for i in cells {
            if q_label[*i] != none {
                q_overlap += 1;
            }
            q_label[*i] = k;
        }
    }
    let star_cells: Vec<Vec<usize>> = parts
        .iter()
        .zip(&stencils)
        .map(|(b, s)| stencil_cells(&h, &s.1, b.center))
        .collect();
    let mut c_label = vec![none; h.len()];
    let mut star_outside = 0usize;
    for (k, cells) in star_cells.iter().enumerate() {
        for i in cells {
            if !open[*i] {
                star_outside += 1;
            }
            if c_label[*i] == none && (q_label[*i] == none || q_label[*i] <= k) {
                c_label[*i] = k;
            }
        }
    }
    for (k, b) in parts.iter_mut().enumerate() {
        b.cells = star_cells[k]
            .iter()
            .copied()
            .filter(|i| c_label[*i] == k)
            .collect();
        b.cells.sort_unstable();
    }

    // Decomposition properties (i)-(iii).
    let mut overlapping = 0usize;
    for k in 0..parts.len() {
        for j in k + 1..parts.len() {
            if parts[k].q.intersects(&parts[j].q) {
                overlapping += 1;
            }
        }
    }
    overlapping += q_overlap;
    let uncovered = open_idx.iter().filter(|i| c_label[**i] == none).count();
    let missing_f = parts
        .iter()
        .filter(|b| {
            let (t, x) = h.point(b.witness);
            open[b.witness] || !b.q_star2.contains(t, &x)
        })
        .count();
    let mut ck_bad = 0usize;
    let inside = |c: &Cylinder, i: usize| {
        let (t, x) = h.point(i);
        c.contains(t, &x)
    };
    for (k, b) in parts.iter().enumerate() {
        ck_bad += q_cells[k]
            .iter()
            .filter(|i| c_label[**i] != k || !inside(&b.q, **i))
            .count();
        ck_bad += b.cells.iter().filter(|i| !inside(&b.q_star, **i)).count();
    }
    ck_bad += (0..h.len())
        .filter(|i| (c_label[*i] != none) != open[*i])
        .count();

    // g and b_k.
    let mut gv = h.values.clone();
    let mut rel_mean = 0.0f64;
    let mut l1_b_ratio = 0.0f64;
    let mut avg_star2 = 0.0f64;
    let mut g_ratio = 0.0f64;
    let mut star_vol = 0.0;
    let mut star_over_q = 0.0f64;
    for (k, b) in parts.iter_mut().enumerate() {
        let (sq, ss, s2) = &stencils[k];
        let n = b.cells.len() as f64;
        b.mean = b.cells.iter().map(|i| h.values[*i]).sum::<f64>() / n;
        b.values = b.cells.iter().map(|i| h.values[*i] - b.mean).collect();
        for i in &b.cells {
            gv[*i] = b.mean;
        }
        let abs_c: f64 = b.cells.iter().map(|i| h.values[*i].abs()).sum();
        let sum_b: f64 = b.values.iter().sum();
        if abs_c > 0.0 {
            rel_mean = rel_mean.max(sum_b.abs() / abs_c);
        }
        let l1_b: f64 = b.values.iter().map(|v| v.abs()).sum::<f64>() * cell;
        let star2_cells = stencil_cells(&h, s2, b.center);
        let abs_star2: f64 = star2_cells.iter().map(|i| h.values[*i].abs()).sum();
        avg_star2 = avg_star2.max(abs_star2 / s2.count as f64);
        l1_b_ratio = l1_b_ratio.max(l1_b / (s2.count as f64 * cell));
        g_ratio = g_ratio.max(s2.count as f64 / n);
        star_vol += ss.count as f64 * cell;
        star_over_q = star_over_q.max(ss.count as f64 / sq.count as f64);
    }
    let g_part = h.with_values(gv);
    let bad = {
        let mut v = vec![0.0; h.len()];
        for b in &parts {
            for (i, x) in b.cells.iter().zip(&b.values) {
                v[*i] += x;
            }
        }
        v
    };
    let recon = h
        .values
        .iter()
        .zip(&g_part.values)
        .zip(&bad)
        .map(|((f, g), b)| ((f - g) - b).abs())
        .fold(0.0, f64::max);
    let max_g = g_part.norm(f64::INFINITY);

    // Constants: proof values, raised to the lattice ratios where those are larger.
    let (k0, c_db) = doubling_constant(sf, d)?;
    let c_lat = lattice_doubling(&h, kappa, &deltas, k0)?;
    let c_w = c_db.max(c_lat).powi(2);
    let r_g = params.a / params.eps;
    let c_g = (r_g.powi(d as i32) * sf.l(r_g)?).max(g_ratio);
    let r_s = 0.5 / params.eps;
    let c_s = (r_s.powi(d as i32) * sf.l(r_s)?).max(star_over_q);
    let open_volume = open_idx.len() as f64 * cell;

    let lhs = vec![
        overlapping as f64,
        (uncovered + star_outside) as f64,
        missing_f as f64,
        ck_bad as f64,
        recon,
        avg_star2,
        max_g,
        rel_mean,
        l1_b_ratio,
        open_volume,
        star_vol,
        star_vol,
    ];
    let bound = vec![
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        alpha,
        c_g * alpha,
        1e-12,
        2.0 * alpha,
        c_w / alpha * l1,
        c_s * open_volume,
        c_s * c_w / alpha * l1,
    ];
    let report = EstimateReport::inequality("cz_decompose", lhs, bound, 1e-12)
        .with_diag("rows", ROWS)
        .with_diag("alpha", alpha)
        .with_diag("params", params)
        .with_diag("parts", parts.len())
        .with_diag("c_weak", c_w)
        .with_diag("c_g", c_g)
        .with_diag("c_star", c_s)
        .with_diag("critical_radii", deltas.len());
    Ok(CzDecomposition {
        f: h,
        g_part,
        bad_parts: parts,
        params,
        alpha,
        pad: [pt, px],
        open_volume,
        star_volume: star_vol,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::loglog_slope;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sf1() -> ScalingFunction {
        ScalingFunction::stable(1.0, 1.0, 1.0)
    }

    fn spike(n: usize, mass: f64) -> SpaceTimeGrid {
        let mut g =
            SpaceTimeGrid::zeros(1, 0.0, 1.0 / n as f64, n, 0.0, 1.0 / n as f64, n).unwrap();
        let i = g.ravel(&[n / 2, n / 2]);
        g.values[i] = mass / g.cell_measure();
        g
    }

    #[test]
    fn whitney_parameters() {
        let p = whitney_params(&ScaleFn::power(1.0)).unwrap();
        assert_eq!((p.k0, p.a), (3.0, 2.0));
        assert_eq!(p.eps, 1.0 / 216.0);
        let p = whitney_params(&ScaleFn::power(0.5)).unwrap();
        assert!((p.k0 - 9.0).abs() < 1e-9);
        assert!(p.eps <= 1.0 / (4.0 * p.a * p.k0.powi(3)));
        assert!((2.0 * p.k0 * p.eps).sqrt() < 1.0);
    }

    #[test]
    fn below_level_has_no_bad_parts() {
        let g =
            SpaceTimeGrid::from_fn(1, 0.0, 0.1, 10, 0.0, 0.1, 10, |t, x| (t * x[0]).sin()).unwrap();
        let r = cz_decompose(&g, 2.0, &sf1(), true).unwrap();
        assert!(r.bad_parts.is_empty());
        assert_eq!(r.g_part, r.f);
        assert!(r.report.pass);
    }

    #[test]
    fn spike_decomposition_properties() {
        let g = spike(32, 1.0);
        let r = cz_decompose(&g, 4.0, &sf1(), true).unwrap();
        assert!(!r.bad_parts.is_empty());
        assert!(r.report.pass, "{}", r.report.render_text());
        assert_eq!(r.report.lhs[4], 0.0);
        let sum = r.bad_sum();
        for i in 0..r.f.len() {
            assert_eq!((r.f.values[i] - r.g_part.values[i]) - sum.values[i], 0.0);
        }
    }

    #[test]
    fn spike_star_volume_slope() {
        let g = spike(32, 1.0);
        let alphas: Vec<f64> = (0..7).map(|k| 2f64.powf(1.0 + 0.5 * k as f64)).collect();
        let mut open = Vec::new();
        let mut star = Vec::new();
        for a in &alphas {
            let r = cz_decompose(&g, *a, &sf1(), true).unwrap();
            assert!(r.report.pass, "{}", r.report.render_text());
            open.push(r.open_volume);
            star.push(r.star_volume);
        }
        // εD is below one cell here, so every open point is its own Q^k and
        // Σ|Q*| grows like |O|²/cell; the 1/α rate is carried by |O_α|.
        let s = loglog_slope(&alphas, &open);
        assert!((s + 1.0).abs() < 0.15, "slope {s} {open:?}");
        assert!(star.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn random_input_two_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sf = ScalingFunction::stable(1.5, 1.5, 1.5);
        let mut g = SpaceTimeGrid::zeros(2, 0.0, 0.05, 10, 0.0, 0.1, 10).unwrap();
        g.values
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-1.0..1.0) * rng.random_range(0.0f64..1.0).powi(6));
        let r = cz_decompose(&g, 0.5, &sf, true).unwrap();
        assert!(r.report.pass, "{}", r.report.render_text());
        let mut all: Vec<usize> = r.bad_parts.iter().flat_map(|b| b.cells.clone()).collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn unpadded_open_set_at_edge_is_boundary_error() {
        let mut g = SpaceTimeGrid::zeros(1, 0.0, 0.1, 8, 0.0, 0.1, 8).unwrap();
        g.values[0] = 100.0;
        assert!(matches!(
            cz_decompose(&g, 1.0, &sf1(), false),
            Err(Error::Boundary(_))
        ));
        let ones = SpaceTimeGrid::from_fn(1, 0.0, 0.1, 8, 0.0, 0.1, 8, |_, _| 1.0).unwrap();
        assert!(matches!(
            cz_decompose(&ones, 0.5, &sf1(), false),
            Err(Error::Boundary(_))
        ));
        assert!(cz_decompose(&ones, 0.5, &sf1(), true).unwrap().report.pass);
    }
}
