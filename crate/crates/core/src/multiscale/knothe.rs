//! Knothe-Rosenblatt transport between piecewise-constant densities on a
//! regular grid of a square.

const FLAT_TOL: f64 = 1e-4;

/// Mass-level pieces `(t0, t1, i, j)` of the monotone coupling between two
/// histograms of unit mass.
fn monotone_pieces(a: &[f64], b: &[f64]) -> Vec<(f64, f64, usize, usize)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let (mut ea, mut eb) = (a[0], b[0]);
    let mut t = 0.0;
    let la = a.iter().rposition(|&m| m > 0.0).unwrap_or(0);
    let lb = b.iter().rposition(|&m| m > 0.0).unwrap_or(0);
    loop {
        while i < la && ea <= t {
            i += 1;
            ea += a[i];
        }
        while j < lb && eb <= t {
            j += 1;
            eb += b[j];
        }
        let last = i == la && j == lb;
        let end = if last { ea.max(eb) } else if i == la { eb } else if j == lb { ea } else { ea.min(eb) };
        if end > t {
            out.push((t, end, i, j));
        }
        if last {
            break;
        }
        t = end;
    }
    out
}

/// `∫_{t0}^{t1} |D(t)|^p dt` for an affine displacement with endpoint values
/// `d0`, `d1`.
fn affine_power_integral(d0: f64, d1: f64, len: f64, p: f64) -> f64 {
    let scale = d0.abs().max(d1.abs());
    if scale == 0.0 {
        return 0.0;
    }
    if (d1 - d0).abs() <= FLAT_TOL * scale {
        let mid = 0.5 * (d0 + d1);
        return len * (d0.abs().powf(p) + 4.0 * mid.abs().powf(p) + d1.abs().powf(p)) / 6.0;
    }
    let g = |u: f64| u * u.abs().powf(p) / (p + 1.0);
    len * (g(d1) - g(d0)) / (d1 - d0)
}

/// One-dimensional monotone cost between histograms with bins of width `w`.
fn axis_cost(a: &[f64], b: &[f64], pieces: &[(f64, f64, usize, usize)], w: f64, p: f64) -> f64 {
    let mut start_a = vec![0.0; a.len()];
    let mut start_b = vec![0.0; b.len()];
    for k in 1..a.len() {
        start_a[k] = start_a[k - 1] + a[k - 1];
        start_b[k] = start_b[k - 1] + b[k - 1];
    }
    // x(t) = w (i + (t − A_i)/a_i); ends are clamped to the bin.
    let pos = |t: f64, k: usize, start: &[f64], mass: &[f64]| -> f64 {
        let frac = if mass[k] > 0.0 { ((t - start[k]) / mass[k]).clamp(0.0, 1.0) } else { 0.5 };
        w * (k as f64 + frac)
    };
    pieces
        .iter()
        .map(|&(t0, t1, i, j)| {
            let d0 = pos(t0, j, &start_b, b) - pos(t0, i, &start_a, a);
            let d1 = pos(t1, j, &start_b, b) - pos(t1, i, &start_a, a);
            affine_power_integral(d0, d1, t1 - t0, p)
        })
        .sum()
}

fn recurse(f: &[f64], h: &[f64], dims: usize, per_axis: usize, w: f64, p: f64) -> f64 {
    let stride = f.len() / per_axis;
    let marginal = |v: &[f64]| -> Vec<f64> { v.chunks_exact(stride).map(|c| c.iter().sum()).collect() };
    let a = marginal(f);
    let b = marginal(h);
    let pieces = monotone_pieces(&a, &b);
    let mut cost = axis_cost(&a, &b, &pieces, w, p);
    if dims > 1 {
        for &(t0, t1, i, j) in &pieces {
            if a[i] <= 0.0 || b[j] <= 0.0 {
                continue;
            }
            let cf: Vec<f64> = f[i * stride..(i + 1) * stride].iter().map(|x| x / a[i]).collect();
            let ch: Vec<f64> = h[j * stride..(j + 1) * stride].iter().map(|x| x / b[j]).collect();
            cost += (t1 - t0) * recurse(&cf, &ch, dims - 1, per_axis, w, p);
        }
    }
    cost
}

/// Upper bound on `W_p^p` between two probability densities that are constant
/// on the cells of a `per_axis^d` grid of side `w`, given by their cell masses
/// in row-major order.
///
/// Sums the per-axis costs of the Knothe-Rosenblatt map and converts to the
/// Euclidean cost with `|u|^p ≤ max(1, d^{p/2−1}) Σ_i |u_i|^p`.
pub fn knothe_rosenblatt_cost(f: &[f64], h: &[f64], d: usize, per_axis: usize, w: f64, p: f64) -> f64 {
    debug_assert_eq!(f.len(), per_axis.pow(d as u32));
    debug_assert_eq!(h.len(), f.len());
    let factor = (d as f64).powf(p / 2.0 - 1.0).max(1.0);
    factor * recurse(f, h, d, per_axis, w, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_densities_cost_nothing() {
        let f = [0.1, 0.2, 0.3, 0.4];
        assert!(knothe_rosenblatt_cost(&f, &f, 2, 2, 1.0, 2.0).abs() < 1e-15);
    }

    #[test]
    fn point_mass_spread_on_segment() {
        // Uniform on [0,2] to uniform on [0,1]: map x -> x/2, cost ∫_0^2 (x/2)^2 dx/2 = 1/3.
        let f = [0.5, 0.5];
        let h = [1.0, 0.0];
        let c = knothe_rosenblatt_cost(&f, &h, 1, 2, 1.0, 2.0);
        assert!((c - 1.0 / 3.0).abs() < 1e-12, "{c}");
        // p = 1: ∫ x/2 dx/2 over [0,2] = 1/2.
        let c1 = knothe_rosenblatt_cost(&f, &h, 1, 2, 1.0, 1.0);
        assert!((c1 - 0.5).abs() < 1e-12, "{c1}");
    }

    #[test]
    fn translation_between_bins() {
        let f = [1.0, 0.0, 0.0];
        let h = [0.0, 0.0, 1.0];
        for p in [1.0, 2.0, 3.0] {
            let c = knothe_rosenblatt_cost(&f, &h, 1, 3, 0.5, p);
            assert!((c - 1f64.powf(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_change_inside_piece() {
        // Uniform on [0,1] to uniform on [1/4, 3/4] scaled: D(t) = 1/4 − t/2 changes sign.
        let f = [0.25, 0.25, 0.25, 0.25];
        let h = [0.0, 0.5, 0.5, 0.0];
        let c = knothe_rosenblatt_cost(&f, &h, 1, 4, 0.25, 2.0);
        // ∫_0^1 (1/4 − t/2)^2 dt = 1/48.
        assert!((c - 1.0 / 48.0).abs() < 1e-12, "{c}");
    }

    #[test]
    fn product_densities_add_axis_costs() {
        let f = [0.25, 0.25, 0.25, 0.25];
        let h = [1.0, 0.0, 0.0, 0.0];
        // Each axis costs 1/3 of a unit bin, squared cost adds.
        let c = knothe_rosenblatt_cost(&f, &h, 2, 2, 1.0, 2.0);
        assert!((c - 2.0 / 3.0).abs() < 1e-12, "{c}");
    }

    #[test]
    fn pieces_cover_unit_mass() {
        let a = [0.2, 0.0, 0.5, 0.3];
        let b = [0.6, 0.1, 0.3, 0.0];
        let ps = monotone_pieces(&a, &b);
        let total: f64 = ps.iter().map(|(t0, t1, _, _)| t1 - t0).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(ps.iter().all(|&(_, _, i, j)| a[i] > 0.0 && b[j] > 0.0));
    }

    #[test]
    fn never_below_a_certified_lower_bound() {
        use crate::transport::{exact_wp, DiscreteMeasure, GroundMetric};
        use rand::{Rng, SeedableRng};

        let (per_axis, sub) = (2usize, 6usize);
        let w = 1.0;
        let fine_side = w / sub as f64;
        let atoms = |m: &[f64]| -> DiscreteMeasure {
            let mut pts = Vec::new();
            let mut masses = Vec::new();
            for (c, &mass) in m.iter().enumerate() {
                let (i, j) = (c / per_axis, c % per_axis);
                for a in 0..sub {
                    for b in 0..sub {
                        pts.push(vec![
                            i as f64 * w + (a as f64 + 0.5) * fine_side,
                            j as f64 * w + (b as f64 + 0.5) * fine_side,
                        ]);
                        masses.push(mass / (sub * sub) as f64);
                    }
                }
            }
            DiscreteMeasure::new(&pts, masses).unwrap()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let mut draw = || -> Vec<f64> {
                let v: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect()
            };
            let (f, h) = (draw(), draw());
            for p in [1.0, 2.0, 3.0] {
                let kr = knothe_rosenblatt_cost(&f, &h, 2, per_axis, w, p);
                let q = exact_wp(&atoms(&f), &atoms(&h), p, GroundMetric::Euclidean).unwrap().cost_p;
                let e = 0.5 * fine_side * 2f64.sqrt();
                let lower = (q.powf(1.0 / p) - 2.0 * e).max(0.0).powf(p);
                assert!(kr >= lower * (1.0 - 1e-9), "p={p}: {kr} < {lower}");
                assert!(kr >= 0.0);
            }
        }
    }
}
