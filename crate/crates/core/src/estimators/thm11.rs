use crate::geometry::{gradient_hessian, levelset_surface_integral, GeometryError, LevelSetOptions, Quadrature, Region, ScalarField};

use super::thm12::fmt;
use super::{EstimateError, ReportEntry};

/// Half the upper end of the admissible range `(0, 4/(3n-2))`.
pub fn thm11_gamma_default(n: usize) -> f64 {
    0.5 * 4.0 / (3.0 * n as f64 - 2.0)
}

fn grad_norm(u: &ScalarField) -> ScalarField {
    gradient_hessian(u).0.norm()
}

/// `||grad u||_{L^{2+gamma}(B_1/2)}` against `||u||_{L^1}`. A `gamma`
/// outside the range is flagged in the params but still evaluated.
pub fn thm11_energy(u: &ScalarField, gamma: f64) -> Result<ReportEntry, EstimateError> {
    let grid = u.grid();
    let n = grid.dim();
    let g = grad_norm(u);
    let p = 2.0 + gamma;
    let lhs = Quadrature::volume(grid, &Region::centered(n, 0.5))?
        .integrate_with(|i| g.get(i).powf(p))
        .powf(1.0 / p);
    let rhs = Quadrature::volume(grid, &Region::Whole)?.integrate_with(|i| u.get(i).abs());
    let mut e = ReportEntry::new("thm11.energy", "thm:holder", lhs, rhs, lhs.max(rhs)).param("gamma", gamma);
    let upper = 4.0 / (3.0 * n as f64 - 2.0);
    if !(gamma > 0.0 && gamma < upper) {
        e = e.param("gamma_warning", format!("outside (0, {upper:.6})"));
    }
    Ok(e)
}

/// `||grad u||_{L^2(B_1/2)}` against `||u||_{L^1}`.
pub fn lemma31_l2l1(u: &ScalarField, eps: f64) -> Result<ReportEntry, EstimateError> {
    let grid = u.grid();
    let n = grid.dim();
    let g = grad_norm(u);
    let lhs = Quadrature::volume(grid, &Region::centered(n, 0.5))?
        .integrate_with(|i| g.get(i).powi(2))
        .sqrt();
    let rhs = Quadrature::volume(grid, &Region::Whole)?.integrate_with(|i| u.get(i).abs());
    Ok(ReportEntry::new("lemma31.l2l1", "lemma:l2l1", lhs, rhs, lhs.max(rhs)).param("eps", eps))
}

/// Per-level results of the level-set energy bound.
#[derive(Debug, Clone)]
pub struct LevelSetReport {
    /// `(t, ratio)` for accepted levels.
    pub levels: Vec<(f64, f64)>,
    /// Levels skipped because the band was near-critical.
    pub skipped: usize,
    pub entry: ReportEntry,
}

/// `int_{{u=t} ∩ B_1/2} |grad u|²` over `||grad u||²_{L^2}` for `levels`
/// quantiles of `u` on `B_1/2`.
pub fn levelset_step1(u: &ScalarField, levels: usize) -> Result<LevelSetReport, EstimateError> {
    let grid = u.grid();
    let n = grid.dim();
    let g = grad_norm(u);
    let g2 = g.map(|v| v * v);
    let energy = Quadrature::volume(grid, &Region::Whole)?.integrate(&g2);
    let half = Region::centered(n, 0.5);
    let mut vals: Vec<f64> = Quadrature::volume(grid, &half)?
        .nodes()
        .iter()
        .map(|&(i, _)| u.get(i))
        .collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    let mut out = Vec::new();
    let mut skipped = 0;
    if energy > 0.0 && !vals.is_empty() {
        for k in 1..=levels {
            let q = k as f64 / (levels + 1) as f64;
            let t = vals[((vals.len() - 1) as f64 * q).round() as usize];
            match levelset_surface_integral(u, &g2, t, &half, LevelSetOptions::default()) {
                Ok(s) => out.push((t, s / energy)),
                Err(GeometryError::DegenerateLevelSet { .. }) => skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }
    let (tmax, rmax) = out.iter().copied().fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let entry = ReportEntry::new("thm11.levelset", "thm:holder", rmax * energy, energy, energy)
        .param("t_max", fmt(tmax))
        .param("levels", out.len())
        .param("skipped", skipped);
    Ok(LevelSetReport {
        levels: out,
        skipped,
        entry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};

    #[test]
    fn gamma_default_in_range() {
        for n in 1..=3 {
            let g = thm11_gamma_default(n);
            assert!(g > 0.0 && g < 4.0 / (3.0 * n as f64 - 2.0));
        }
    }

    #[test]
    fn scaling_invariance() {
        let g = build_grid(&DomainSpec::half_ball(2, 1.0), 1.0 / 32.0).unwrap();
        let u = ScalarField::from_fn(&g, |x| x[1] * (1.0 - x[0] * x[0] - x[1] * x[1]));
        let a = lemma31_l2l1(&u, 0.0).unwrap();
        let b = lemma31_l2l1(&u.scale(3.0), 0.0).unwrap();
        assert!((a.ratio - b.ratio).abs() < 1e-12 * a.ratio);
        let z = thm11_energy(&ScalarField::zeros(&g), thm11_gamma_default(2)).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        assert!(thm11_energy(&u, 5.0).unwrap().params.contains_key("gamma_warning"));
    }

    #[test]
    fn levels_above_max_are_empty() {
        let g = build_grid(&DomainSpec::half_ball(2, 1.0), 1.0 / 32.0).unwrap();
        let u = ScalarField::from_fn(&g, |x| x[1] * (1.0 - x[0] * x[0] - x[1] * x[1]));
        let rep = levelset_step1(&u, 32).unwrap();
        assert!(!rep.levels.is_empty());
        assert!(rep.entry.ratio.is_finite());
        let g2 = u.map(|_| 1.0);
        let above = levelset_surface_integral(&u, &g2, 10.0, &Region::Whole, LevelSetOptions::default()).unwrap();
        assert_eq!(above, 0.0);
    }
}
