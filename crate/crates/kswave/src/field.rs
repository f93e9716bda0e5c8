//! Discrete differential operators on strip fields.
//!
//! Scalar fields are `Array2<f64>` with shape `(nz, ny)`; the z-direction is
//! non-periodic (second-order centered stencils, one-sided at the ends) and
//! the y-direction is periodic (centered by default, trigonometric on
//! request). The steppers additionally use fourth-order z-stencils, kept
//! `pub(crate)` here so every module shares one stencil algebra.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{StripGrid, YScheme};

pub type Field = Array2<f64>;

pub fn check_dims(field: &Field, grid: &StripGrid) -> Result<()> {
    if field.dim() != grid.shape() {
        return Err(Error::DimensionMismatch {
            expected: grid.shape(),
            found: field.dim(),
        });
    }
    Ok(())
}

/// First z-derivative, second-order centered, one-sided at the boundaries.
pub fn dz1(f: &Field, grid: &StripGrid) -> Result<Field> {
    check_dims(f, grid)?;
    let (nz, ny) = grid.shape();
    let dz = grid.dz;
    let mut g = Field::zeros((nz, ny));
    for j in 0..ny {
        for i in 1..nz - 1 {
            g[(i, j)] = (f[(i + 1, j)] - f[(i - 1, j)]) / (2.0 * dz);
        }
        g[(0, j)] = (-3.0 * f[(0, j)] + 4.0 * f[(1, j)] - f[(2, j)]) / (2.0 * dz);
        g[(nz - 1, j)] =
            (3.0 * f[(nz - 1, j)] - 4.0 * f[(nz - 2, j)] + f[(nz - 3, j)]) / (2.0 * dz);
    }
    Ok(g)
}

/// Second z-derivative, second-order centered, one-sided at the boundaries.
pub fn dz2(f: &Field, grid: &StripGrid) -> Result<Field> {
    check_dims(f, grid)?;
    let (nz, ny) = grid.shape();
    let dz2 = grid.dz * grid.dz;
    let mut g = Field::zeros((nz, ny));
    for j in 0..ny {
        for i in 1..nz - 1 {
            g[(i, j)] = (f[(i + 1, j)] - 2.0 * f[(i, j)] + f[(i - 1, j)]) / dz2;
        }
        g[(0, j)] = (2.0 * f[(0, j)] - 5.0 * f[(1, j)] + 4.0 * f[(2, j)] - f[(3, j)]) / dz2;
        g[(nz - 1, j)] = (2.0 * f[(nz - 1, j)] - 5.0 * f[(nz - 2, j)] + 4.0 * f[(nz - 3, j)]
            - f[(nz - 4, j)])
            / dz2;
    }
    Ok(g)
}

/// First y-derivative on the periodic direction, honoring the grid's scheme.
pub fn dy1(f: &Field, grid: &StripGrid) -> Result<Field> {
    check_dims(f, grid)?;
    match grid.y_scheme {
        YScheme::Centered => Ok(dy1_centered(f, grid)),
        YScheme::Spectral => Ok(spectral_dy(f, grid, 1)),
    }
}

/// Second y-derivative on the periodic direction.
pub fn dy2(f: &Field, grid: &StripGrid) -> Result<Field> {
    check_dims(f, grid)?;
    match grid.y_scheme {
        YScheme::Centered => Ok(dy2_centered(f, grid)),
        YScheme::Spectral => Ok(spectral_dy(f, grid, 2)),
    }
}

pub(crate) fn dy1_centered(f: &Field, grid: &StripGrid) -> Field {
    let (nz, ny) = grid.shape();
    let two_dy = 2.0 * grid.dy;
    let mut g = Field::zeros((nz, ny));
    for i in 0..nz {
        for j in 0..ny {
            let jp = (j + 1) % ny;
            let jm = (j + ny - 1) % ny;
            g[(i, j)] = (f[(i, jp)] - f[(i, jm)]) / two_dy;
        }
    }
    g
}

pub(crate) fn dy2_centered(f: &Field, grid: &StripGrid) -> Field {
    let (nz, ny) = grid.shape();
    let dy2 = grid.dy * grid.dy;
    let mut g = Field::zeros((nz, ny));
    for i in 0..nz {
        for j in 0..ny {
            let jp = (j + 1) % ny;
            let jm = (j + ny - 1) % ny;
            g[(i, j)] = (f[(i, jp)] - 2.0 * f[(i, j)] + f[(i, jm)]) / dy2;
        }
    }
    g
}

/// Trigonometric-interpolation y-derivative of order 1 or 2 (plain DFT sums;
/// the transversal node counts here never justify an FFT). The Nyquist mode
/// follows the usual convention: dropped from odd derivatives.
fn spectral_dy(f: &Field, grid: &StripGrid, order: u8) -> Field {
    let (nz, ny) = grid.shape();
    let half = ny / 2;
    let base = 2.0 * std::f64::consts::PI / grid.lambda;
    let mut g = Field::zeros((nz, ny));
    let angle = |k: usize, j: usize| base * k as f64 * grid.y(j);

    for i in 0..nz {
        for k in 1..=half {
            let mut a = 0.0;
            let mut b = 0.0;
            for j in 0..ny {
                let th = angle(k, j);
                a += f[(i, j)] * th.cos();
                b += f[(i, j)] * th.sin();
            }
            let weight = if k == half { 1.0 } else { 2.0 };
            let om = base * k as f64;
            for j in 0..ny {
                let th = angle(k, j);
                match order {
                    1 => {
                        if k != half {
                            g[(i, j)] += weight / ny as f64 * om * (-a * th.sin() + b * th.cos());
                        }
                    }
                    _ => {
                        g[(i, j)] -=
                            weight / ny as f64 * om * om * (a * th.cos() + b * th.sin());
                    }
                }
            }
        }
    }
    g
}

/// Gradient `(∂z f, ∂y f)`.
pub fn grad(f: &Field, grid: &StripGrid) -> Result<(Field, Field)> {
    Ok((dz1(f, grid)?, dy1(f, grid)?))
}

/// Divergence `∂z g1 + ∂y g2`.
pub fn div(g1: &Field, g2: &Field, grid: &StripGrid) -> Result<Field> {
    let mut out = dz1(g1, grid)?;
    out += &dy1(g2, grid)?;
    Ok(out)
}

/// Laplacian `∂zz f + ∂yy f`; consistent with `div(grad(f))` to stencil order.
pub fn laplacian(f: &Field, grid: &StripGrid) -> Result<Field> {
    let mut out = dz2(f, grid)?;
    out += &dy2(f, grid)?;
    Ok(out)
}

/// Scalar curl `∂z g2 - ∂y g1` of a planar vector field.
pub fn curl(g1: &Field, g2: &Field, grid: &StripGrid) -> Result<Field> {
    let mut out = dz1(g2, grid)?;
    out -= &dy1(g1, grid)?;
    Ok(out)
}

/// Trapezoid weights in z (the y quadrature is the plain periodic rectangle
/// rule, weight `dy` everywhere).
pub fn quad_weights_z(grid: &StripGrid) -> Vec<f64> {
    let mut w = vec![grid.dz; grid.nz];
    w[0] = 0.5 * grid.dz;
    w[grid.nz - 1] = 0.5 * grid.dz;
    w
}

/// `∫ f dz dy` over the strip (trapezoid in z, rectangle in y).
pub fn integrate(f: &Field, grid: &StripGrid) -> Result<f64> {
    check_dims(f, grid)?;
    let wz = quad_weights_z(grid);
    let mut total = 0.0;
    for i in 0..grid.nz {
        let mut row = 0.0;
        for j in 0..grid.ny {
            row += f[(i, j)];
        }
        total += wz[i] * row;
    }
    Ok(total * grid.dy)
}

pub fn sup_norm(f: &Field) -> f64 {
    f.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

// --- fourth-order z stencils (steppers only) -------------------------------
//
// Interior five-point formulas; the rows adjacent to the boundary fall back
// to the three-point forms. The profile tails are exponentially flat there,
// so the lower-order closure contributes nothing measurable.

pub(crate) fn dz1_fourth(f: &Field, grid: &StripGrid) -> Field {
    let (nz, ny) = grid.shape();
    let dz = grid.dz;
    let mut g = Field::zeros((nz, ny));
    for j in 0..ny {
        for i in 2..nz - 2 {
            g[(i, j)] = (f[(i - 2, j)] - 8.0 * f[(i - 1, j)] + 8.0 * f[(i + 1, j)]
                - f[(i + 2, j)])
                / (12.0 * dz);
        }
        g[(1, j)] = (f[(2, j)] - f[(0, j)]) / (2.0 * dz);
        g[(nz - 2, j)] = (f[(nz - 1, j)] - f[(nz - 3, j)]) / (2.0 * dz);
        g[(0, j)] = (-3.0 * f[(0, j)] + 4.0 * f[(1, j)] - f[(2, j)]) / (2.0 * dz);
        g[(nz - 1, j)] =
            (3.0 * f[(nz - 1, j)] - 4.0 * f[(nz - 2, j)] + f[(nz - 3, j)]) / (2.0 * dz);
    }
    g
}

/// Coefficient bands of the fourth-order second-derivative matrix in z,
/// offsets -2..=+2, with identity rows at the clamped boundary nodes.
/// Shared by the explicit evaluation and the implicit solves.
pub(crate) fn dz2_fourth_bands(grid: &StripGrid) -> [Vec<f64>; 5] {
    let nz = grid.nz;
    let c = 1.0 / (12.0 * grid.dz * grid.dz);
    let mut l2 = vec![0.0; nz];
    let mut l1 = vec![0.0; nz];
    let mut d0 = vec![0.0; nz];
    let mut u1 = vec![0.0; nz];
    let mut u2 = vec![0.0; nz];
    for i in 2..nz - 2 {
        l2[i] = -c;
        l1[i] = 16.0 * c;
        d0[i] = -30.0 * c;
        u1[i] = 16.0 * c;
        u2[i] = -c;
    }
    let c3 = 1.0 / (grid.dz * grid.dz);
    for i in [1, nz - 2] {
        l1[i] = c3;
        d0[i] = -2.0 * c3;
        u1[i] = c3;
    }
    // boundary rows stay zero: clamped nodes do not evolve
    [l2, l1, d0, u1, u2]
}

pub(crate) fn apply_z_bands(f: &Field, bands: &[Vec<f64>; 5]) -> Field {
    let (nz, ny) = f.dim();
    let mut g = Field::zeros((nz, ny));
    for j in 0..ny {
        for i in 0..nz {
            let mut acc = bands[2][i] * f[(i, j)];
            if i >= 1 {
                acc += bands[1][i] * f[(i - 1, j)];
            }
            if i >= 2 {
                acc += bands[0][i] * f[(i - 2, j)];
            }
            if i + 1 < nz {
                acc += bands[3][i] * f[(i + 1, j)];
            }
            if i + 2 < nz {
                acc += bands[4][i] * f[(i + 2, j)];
            }
            g[(i, j)] = acc;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> StripGrid {
        StripGrid::new(5.0, 101, 0.7, 16).unwrap()
    }

    fn smooth_bump(grid: &StripGrid) -> Field {
        let (nz, ny) = grid.shape();
        let mut f = Field::zeros((nz, ny));
        for i in 0..nz {
            let z = grid.z(i);
            for j in 0..ny {
                let y = grid.y(j);
                f[(i, j)] = (-z * z).exp()
                    * (1.0 + 0.3 * (2.0 * std::f64::consts::PI * y / grid.lambda).cos());
            }
        }
        f
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = grid();
        let f = Field::from_elem(g.shape(), 4.2);
        let (gz, gy) = grad(&f, &g).unwrap();
        // one-sided boundary rows leave pure cancellation roundoff
        assert!(sup_norm(&gz) < 1e-13);
        assert_eq!(sup_norm(&gy), 0.0);
    }

    #[test]
    fn laplacian_of_transversal_eigenfunction() {
        let g = grid();
        let (nz, ny) = g.shape();
        let om = 2.0 * std::f64::consts::PI / g.lambda;
        let mut f = Field::zeros((nz, ny));
        for i in 0..nz {
            for j in 0..ny {
                f[(i, j)] = (om * g.y(j)).sin();
            }
        }
        let lap = laplacian(&f, &g).unwrap();
        let mut worst = 0.0f64;
        for i in 0..nz {
            for j in 0..ny {
                worst = worst.max((lap[(i, j)] + om * om * f[(i, j)]).abs());
            }
        }
        // centered stencil: relative error ~ (om dy)^2 / 12
        let expect = om * om * (om * g.dy).powi(2) / 12.0;
        assert!(worst < 1.5 * expect, "worst {worst}, expect about {expect}");
    }

    #[test]
    fn spectral_derivative_is_exact_on_resolved_modes() {
        let g = grid().with_y_scheme(YScheme::Spectral);
        let (nz, ny) = g.shape();
        let om = 2.0 * std::f64::consts::PI / g.lambda;
        let mut f = Field::zeros((nz, ny));
        for i in 0..nz {
            for j in 0..ny {
                f[(i, j)] = (3.0 * om * g.y(j)).sin() + 0.5 * (2.0 * om * g.y(j)).cos();
            }
        }
        let d1 = dy1(&f, &g).unwrap();
        let d2 = dy2(&f, &g).unwrap();
        let mut worst1 = 0.0f64;
        let mut worst2 = 0.0f64;
        for i in 0..nz {
            for j in 0..ny {
                let y = g.y(j);
                let e1 = 3.0 * om * (3.0 * om * y).cos() - om * (2.0 * om * y).sin();
                let e2 = -9.0 * om * om * (3.0 * om * y).sin() - 2.0 * om * om * (2.0 * om * y).cos();
                worst1 = worst1.max((d1[(i, j)] - e1).abs());
                worst2 = worst2.max((d2[(i, j)] - e2).abs());
            }
        }
        assert!(worst1 < 1e-9 * om, "d1 error {worst1}");
        assert!(worst2 < 1e-8 * om * om, "d2 error {worst2}");
    }

    #[test]
    fn div_grad_consistent_with_laplacian_under_refinement() {
        // convergence-order fit across three grids
        let mut errors = Vec::new();
        for &(nz, ny) in &[(65usize, 8usize), (129, 16), (257, 32)] {
            let g = StripGrid::new(5.0, nz, 0.7, ny).unwrap();
            let f = smooth_bump(&g);
            let (gz, gy) = grad(&f, &g).unwrap();
            let dg = div(&gz, &gy, &g).unwrap();
            let lap = laplacian(&f, &g).unwrap();
            let mut diff = dg;
            diff -= &lap;
            errors.push(sup_norm(&diff));
        }
        let order1 = (errors[0] / errors[1]).log2();
        let order2 = (errors[1] / errors[2]).log2();
        assert!(
            order1 > 1.7 && order2 > 1.7,
            "orders {order1}, {order2}, errors {errors:?}"
        );
    }

    #[test]
    fn y_operators_commute_with_cyclic_shift() {
        let g = grid();
        let f = smooth_bump(&g);
        let shift = |f: &Field| -> Field {
            let (nz, ny) = f.dim();
            let mut out = Field::zeros((nz, ny));
            for i in 0..nz {
                for j in 0..ny {
                    out[(i, j)] = f[(i, (j + 1) % ny)];
                }
            }
            out
        };
        for op in [dy1, dy2] {
            let a = op(&shift(&f), &g).unwrap();
            let b = shift(&op(&f, &g).unwrap());
            let mut diff = a;
            diff -= &b;
            assert_eq!(sup_norm(&diff), 0.0);
        }
    }

    #[test]
    fn summation_by_parts_duality() {
        // <grad f, G> = -<f, div G> for fields vanishing near the z-ends
        let g = grid();
        let f = smooth_bump(&g);
        let (nz, ny) = g.shape();
        let mut g1 = Field::zeros((nz, ny));
        let mut g2 = Field::zeros((nz, ny));
        for i in 0..nz {
            let z = g.z(i);
            for j in 0..ny {
                let y = g.y(j);
                let th = 2.0 * std::f64::consts::PI * y / g.lambda;
                g1[(i, j)] = (-0.7 * z * z).exp() * (0.5 + th.cos()) * z;
                g2[(i, j)] = (-0.9 * z * z).exp() * (1.0 + 0.3 * th.sin());
            }
        }
        let (fz, fy) = grad(&f, &g).unwrap();
        let dv = div(&g1, &g2, &g).unwrap();
        let mut lhs_f = Field::zeros((nz, ny));
        let mut rhs_f = Field::zeros((nz, ny));
        for i in 0..nz {
            for j in 0..ny {
                lhs_f[(i, j)] = fz[(i, j)] * g1[(i, j)] + fy[(i, j)] * g2[(i, j)];
                rhs_f[(i, j)] = f[(i, j)] * dv[(i, j)];
            }
        }
        let lhs = integrate(&lhs_f, &g).unwrap();
        let rhs = -integrate(&rhs_f, &g).unwrap();
        assert!(lhs.abs() > 1e-3, "pairing degenerated: {lhs}");
        assert!(
            (lhs - rhs).abs() < 1e-8 * (lhs.abs() + rhs.abs() + 1.0),
            "duality defect: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn grad_output_is_curl_free_to_roundoff() {
        let g = grid();
        let f = smooth_bump(&g);
        let (gz, gy) = grad(&f, &g).unwrap();
        let c = curl(&gz, &gy, &g).unwrap();
        // mixed centered stencils commute exactly away from the one-sided rows
        let mut worst = 0.0f64;
        for i in 1..g.nz - 1 {
            for j in 0..g.ny {
                worst = worst.max(c[(i, j)].abs());
            }
        }
        assert!(worst < 1e-12, "interior curl {worst}");
    }

    #[test]
    fn fourth_order_stencils_beat_second_order() {
        let g = StripGrid::new(5.0, 129, 0.7, 8).unwrap();
        let f = smooth_bump(&g);
        let d2 = dz2(&f, &g).unwrap();
        let bands = dz2_fourth_bands(&g);
        let d4 = apply_z_bands(&f, &bands);
        let mut worst2 = 0.0f64;
        let mut worst4 = 0.0f64;
        for i in 4..g.nz - 4 {
            for j in 0..g.ny {
                let z = g.z(i);
                let y = g.y(j);
                let amp = 1.0 + 0.3 * (2.0 * std::f64::consts::PI * y / g.lambda).cos();
                let exact = amp * (-z * z).exp() * (4.0 * z * z - 2.0);
                worst2 = worst2.max((d2[(i, j)] - exact).abs());
                worst4 = worst4.max((d4[(i, j)] - exact).abs());
            }
        }
        assert!(worst4 < 0.05 * worst2, "4th {worst4} vs 2nd {worst2}");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = grid();
        let f = Field::zeros((10, 10));
        assert!(dz1(&f, &g).is_err());
    }
}
