//! Banded direct solvers for the implicit sweeps: tridiagonal, cyclic
//! tridiagonal (periodic) and pentadiagonal lines.

/// Tridiagonal solve `Ax = d` (Thomas algorithm), diagonals `(a, b, c)` in
/// offsets -1, 0, +1. `a[0]` and `c[n-1]` are ignored. Solution overwrites `d`.
pub fn tdma(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64], scratch: &mut Vec<f64>) {
    let n = d.len();
    debug_assert!(n >= 2 && a.len() == n && b.len() == n && c.len() == n);
    scratch.clear();
    scratch.resize(n, 0.0);
    let w = scratch;

    let mut beta = b[0];
    d[0] /= beta;
    for i in 1..n {
        w[i] = c[i - 1] / beta;
        beta = b[i] - a[i] * w[i];
        d[i] = (d[i] - a[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= w[i + 1] * d[i + 1];
    }
}

/// Cyclic tridiagonal solve for periodic lines via the Sherman–Morrison
/// correction. `a[i]` couples to `i-1` (wrapping), `c[i]` to `i+1`.
pub fn cyclic_tdma(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64], scratch: &mut Vec<f64>) {
    let n = d.len();
    debug_assert!(n >= 3);

    // A = T + u v^T with u = (gamma, 0, .., 0, c[n-1])^T, v = (1, 0, .., 0, a[0]/gamma)^T
    let gamma = -b[0];
    let mut bb: Vec<f64> = b.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= a[0] * c[n - 1] / gamma;

    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c[n - 1];

    tdma(a, &bb, c, d, scratch);
    tdma(a, &bb, c, &mut u, scratch);

    let vy = d[0] + a[0] / gamma * d[n - 1];
    let vq = u[0] + a[0] / gamma * u[n - 1];
    let factor = vy / (1.0 + vq);
    for i in 0..n {
        d[i] -= factor * u[i];
    }
}

/// Pentadiagonal solve, diagonals `(l2, l1, d0, u1, u2)` in offsets -2..=+2.
/// Out-of-range entries are ignored. No pivoting; intended for the
/// diagonally dominant implicit diffusion lines. Solution overwrites `rhs`.
pub fn pdma(
    l2: &[f64],
    l1: &[f64],
    d0: &[f64],
    u1: &[f64],
    u2: &[f64],
    rhs: &mut [f64],
    scratch: &mut Vec<f64>,
) {
    let n = rhs.len();
    debug_assert!(n >= 4);
    scratch.clear();
    scratch.resize(3 * n, 0.0);
    let (al, rest) = scratch.split_at_mut(n);
    let (be, mu) = rest.split_at_mut(n);

    mu[0] = d0[0];
    al[0] = u1[0] / mu[0];
    be[0] = u2[0] / mu[0];
    rhs[0] /= mu[0];

    let mut ga = l1[1];
    mu[1] = d0[1] - al[0] * ga;
    al[1] = (u1[1] - be[0] * ga) / mu[1];
    be[1] = u2[1] / mu[1];
    rhs[1] = (rhs[1] - rhs[0] * ga) / mu[1];

    for i in 2..n {
        ga = l1[i] - al[i - 2] * l2[i];
        mu[i] = d0[i] - be[i - 2] * l2[i] - al[i - 1] * ga;
        if i < n - 1 {
            al[i] = (u1[i] - be[i - 1] * ga) / mu[i];
        }
        if i < n - 2 {
            be[i] = u2[i] / mu[i];
        }
        rhs[i] = (rhs[i] - rhs[i - 2] * l2[i] - rhs[i - 1] * ga) / mu[i];
    }

    rhs[n - 2] -= al[n - 2] * rhs[n - 1];
    for i in (0..n - 2).rev() {
        rhs[i] -= al[i] * rhs[i + 1] + be[i] * rhs[i + 2];
    }
}
