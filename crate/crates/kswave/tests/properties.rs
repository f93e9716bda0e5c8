//! Property tests for the structural identities the discrete operators and
//! norms must satisfy on arbitrary smooth data.

use proptest::prelude::*;

use kswave::energy::weighted_sobolev_norm;
use kswave::field::{self, Field};
use kswave::grid::StripGrid;
use kswave::state::{cole_hopf_forward, cole_hopf_inverse, CURL_TOLERANCE};
use kswave::wave::{chemical_from_p, explicit_wave_eps0_on_nodes, WaveTable};

fn grid() -> StripGrid {
    StripGrid::new(6.0, 81, 0.7, 12).unwrap()
}

/// Smooth compactly-supported-ish field from a handful of random parameters.
fn make_field(grid: &StripGrid, amp: f64, decay: f64, k: usize, phase: f64, shift: f64) -> Field {
    let (nz, ny) = grid.shape();
    let mut f = Field::zeros((nz, ny));
    for i in 0..nz {
        let z = grid.z(i) - shift;
        for j in 0..ny {
            let y = grid.y(j);
            f[(i, j)] = amp
                * (-decay * z * z).exp()
                * (k as f64 * 2.0 * std::f64::consts::TAU / 2.0 * y / grid.lambda + phase).cos();
        }
    }
    f
}

fn params() -> impl Strategy<Value = (f64, f64, usize, f64, f64)> {
    (
        0.1f64..2.0,
        0.6f64..1.6,
        0usize..3,
        0.0f64..std::f64::consts::TAU,
        -1.0f64..1.0,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn duality_holds_for_random_fields(a in params(), b in params(), c in params()) {
        let g = grid();
        let f = make_field(&g, a.0, a.1, a.2, a.3, a.4);
        let g1 = make_field(&g, b.0, b.1, b.2, b.3, b.4);
        let g2 = make_field(&g, c.0, c.1, c.2, c.3, c.4);
        let (fz, fy) = field::grad(&f, &g).unwrap();
        let dv = field::div(&g1, &g2, &g).unwrap();
        let (nz, ny) = g.shape();
        let mut lhs_f = Field::zeros((nz, ny));
        let mut rhs_f = Field::zeros((nz, ny));
        for i in 0..nz {
            for j in 0..ny {
                lhs_f[(i, j)] = fz[(i, j)] * g1[(i, j)] + fy[(i, j)] * g2[(i, j)];
                rhs_f[(i, j)] = f[(i, j)] * dv[(i, j)];
            }
        }
        let lhs = field::integrate(&lhs_f, &g).unwrap();
        let rhs = -field::integrate(&rhs_f, &g).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs() + rhs.abs()));
    }

    #[test]
    fn grad_is_curl_free_and_invertible(a in params()) {
        let g = grid();
        let f = make_field(&g, a.0, a.1, a.2, a.3, a.4);
        let (p1, p2) = cole_hopf_forward(&f, &g).unwrap();
        let c = field::curl(&p1, &p2, &g).unwrap();
        let mut interior_curl = 0.0f64;
        for i in 1..g.nz - 1 {
            for j in 0..g.ny {
                interior_curl = interior_curl.max(c[(i, j)].abs());
            }
        }
        prop_assert!(interior_curl < 1e-11 * (1.0 + a.0));

        let back = cole_hopf_inverse(&p1, &p2, f[(g.nz - 1, 0)], &g, CURL_TOLERANCE).unwrap();
        let mut worst = 0.0f64;
        for i in 0..g.nz {
            for j in 0..g.ny {
                worst = worst.max((back[(i, j)] - f[(i, j)]).abs());
            }
        }
        // second-order line integration with derivative bounds from the family
        let omega = (a.2 as f64) * std::f64::consts::PI / g.lambda * 2.0;
        let bound = a.0
            * (g.dz * g.dz / 6.0 * 10.0 * 2.0 * g.l_z
                + g.dy * g.dy / 12.0 * (omega.powi(3) + 1.0) * g.lambda)
            * 4.0;
        prop_assert!(worst < bound, "round trip {worst:.3e} vs bound {bound:.3e}");
    }

    #[test]
    fn norms_are_monotone_in_order_and_weight_bounded(a in params()) {
        let g = grid();
        let f = make_field(&g, a.0, a.1, a.2, a.3, a.4);
        let wave = WaveTable::from_profile(
            &explicit_wave_eps0_on_nodes(1.0, 1.0, &g.z_nodes()).unwrap(),
        );
        let mut prev = -1.0;
        for k in 0..=3usize {
            let weighted = weighted_sobolev_norm(&[&f], k, Some(&wave.w), &g).unwrap();
            prop_assert!(weighted >= prev);
            prev = weighted;
            let plain = weighted_sobolev_norm(&[&f], k, None, &g).unwrap();
            prop_assert!(plain <= wave.params.n_minus() * weighted * (1.0 + 1e-12));
        }
    }

    #[test]
    fn quadratic_norm_homogeneity(a in params(), scale in 0.1f64..10.0) {
        let g = grid();
        let f = make_field(&g, a.0, a.1, a.2, a.3, a.4);
        let scaled = f.mapv(|v| scale * v);
        let n1 = weighted_sobolev_norm(&[&f], 2, None, &g).unwrap();
        let n2 = weighted_sobolev_norm(&[&scaled], 2, None, &g).unwrap();
        prop_assert!((n2 - scale * scale * n1).abs() <= 1e-10 * (1.0 + n2));
    }

    #[test]
    fn chemical_reconstruction_inverts_its_defining_relation(
        tail in 0.5f64..2.0,
        c_plus in 0.2f64..5.0,
    ) {
        // P with an integrable right tail; the recomputed -C'/C must match it
        let z: Vec<f64> = (0..2001).map(|i| -10.0 + i as f64 * 0.01).collect();
        let p: Vec<f64> = z.iter().map(|&zz| -tail / (1.0 + (zz).exp())).collect();
        let (c, log_c, under) = chemical_from_p(&p, c_plus, &z).unwrap();
        prop_assert!(!under);
        prop_assert!((c.last().unwrap() - c_plus).abs() < 1e-14 * c_plus);
        for w in c.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
        // 2nd-order derivative check away from the ends
        for i in (100..1900).step_by(97) {
            let d = (log_c[i + 1] - log_c[i - 1]) / 0.02;
            prop_assert!((-d - p[i]).abs() < 1e-4 * tail);
        }
    }
}
