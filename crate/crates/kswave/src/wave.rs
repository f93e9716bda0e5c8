//! Traveling-wave profiles of the front system in the co-moving frame.
//!
//! The wave `(N, P)` solves the planar reduction
//!
//! ```text
//!   N' = -(s + P) N
//!   P' = (eps P^2 - s P - N) / eps
//! ```
//!
//! obtained from the second-order profile equations by integrating once with
//! the zero boundary data at `z -> +inf`. The system has a saddle at
//! `((1+eps) s^2, -s)` and a stable node at the origin; the profile is the
//! heteroclinic orbit connecting them, computed here by launching along the
//! saddle's 1D unstable manifold and integrating with an adaptive embedded
//! Runge-Kutta pair. The free translation is fixed by placing the point
//! `P = -s/2` at `z = 0`. The chemical profile is reconstructed from `P`
//! by quadrature of `P = -C'/C` from the right end.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Hard ceiling on the chemical-reconstruction exponent, in natural-log units.
pub const LOG_EXPONENT_CLAMP: f64 = 700.0;

/// Default upper bound on the chemical diffusion rate; the wave existence
/// theory needs small `eps`, and empirically the connection degrades well
/// below this.
pub const DEFAULT_EPS_MAX: f64 = 0.5;

/// Below this `eps` the stable node at the origin is stiff enough
/// (`|eigenvalue| = s/eps`) that the explicit integrator refuses by default.
pub const DEFAULT_MIN_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    /// Wave speed, > 0.
    pub s: f64,
    /// Chemical diffusion rate, >= 0.
    pub eps: f64,
    /// Right chemical limit, > 0; used only for reconstructing the chemical.
    pub c_plus: f64,
}

impl WaveParams {
    pub fn new(s: f64, eps: f64, c_plus: f64) -> Result<Self> {
        let p = Self { s, eps, c_plus };
        p.validate(DEFAULT_EPS_MAX)?;
        Ok(p)
    }

    pub fn validate(&self, eps_max: f64) -> Result<()> {
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(Error::InvalidParams(format!("wave speed s = {}", self.s)));
        }
        if !(self.c_plus > 0.0) || !self.c_plus.is_finite() {
            return Err(Error::InvalidParams(format!("c_plus = {}", self.c_plus)));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidParams(format!("eps = {}", self.eps)));
        }
        if self.eps > eps_max {
            return Err(Error::InvalidParams(format!(
                "eps = {} exceeds eps_max = {eps_max}; the existence theory needs small eps",
                self.eps
            )));
        }
        Ok(())
    }

    /// Cell density behind the front, `(1 + eps) s^2`.
    pub fn n_minus(&self) -> f64 {
        (1.0 + self.eps) * self.s * self.s
    }
}

/// Uniform symmetric 1D output grid: `2 * round(half_length / dz) + 1` nodes,
/// so `z = 0` is always a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec1d {
    pub half_length: f64,
    pub dz: f64,
}

impl GridSpec1d {
    pub fn nodes(&self) -> Result<Vec<f64>> {
        if !(self.half_length > 0.0) || !(self.dz > 0.0) {
            return Err(Error::InvalidParams(format!(
                "grid spec: half_length = {}, dz = {}",
                self.half_length, self.dz
            )));
        }
        let half = (self.half_length / self.dz).round() as i64;
        if half < 4 {
            return Err(Error::InvalidParams(
                "grid spec: fewer than 9 nodes".into(),
            ));
        }
        Ok((-half..=half).map(|i| i as f64 * self.dz).collect())
    }
}

/// Tuning knobs for the heteroclinic solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative integration tolerance (also the default validation residual scale).
    pub tol: f64,
    /// Radius of the detection ball around the rest state, relative to `s^2`.
    pub tail_ball: f64,
    /// Launch offset along the unstable eigenvector, relative to `s^2`.
    pub offset_delta: f64,
    /// Refuse `eps` below this (stiffness guard); lower it knowingly.
    pub min_eps: f64,
    /// Reject `eps` above this.
    pub eps_max: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            tail_ball: 1e-9,
            offset_delta: 1e-6,
            min_eps: DEFAULT_MIN_EPS,
            eps_max: DEFAULT_EPS_MAX,
        }
    }
}

/// Right-hand side of the planar wave system. Requires `eps > 0`;
/// the `eps = 0` wave is algebraic and handled by [`explicit_wave_eps0`].
pub fn wave_ode_rhs(n: f64, p: f64, params: &WaveParams) -> Result<(f64, f64)> {
    if params.eps <= 0.0 {
        return Err(Error::InvalidParams(
            "wave_ode_rhs needs eps > 0; use explicit_wave_eps0 for eps = 0".into(),
        ));
    }
    Ok(rhs_unchecked(n, p, params.s, params.eps))
}

#[inline]
fn rhs_unchecked(n: f64, p: f64, s: f64, eps: f64) -> (f64, f64) {
    (-(s + p) * n, (eps * p * p - s * p - n) / eps)
}

/// One equilibrium of the planar system with its local linearization.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: [f64; 2],
    pub jacobian: [[f64; 2]; 2],
    /// Real eigenvalues, sorted descending.
    pub eigenvalues: [f64; 2],
    /// Unit eigenvectors, column `k` belongs to `eigenvalues[k]`. When the
    /// Jacobian is defective the second column is a generalized eigenvector.
    pub eigenvectors: [[f64; 2]; 2],
    pub defective: bool,
}

/// Both equilibria: the invaded state behind the front (a saddle) and the
/// vacuum rest state ahead of it (a stable node).
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub behind: Equilibrium,
    pub ahead: Equilibrium,
}

fn eigen_2x2(j: [[f64; 2]; 2], scale: f64) -> Result<([f64; 2], [[f64; 2]; 2], bool)> {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        return Err(Error::InvalidParams(format!(
            "complex eigenvalues (disc = {disc}) in wave linearization"
        )));
    }
    let sq = disc.sqrt();
    let l1 = 0.5 * (tr + sq);
    let l2 = 0.5 * (tr - sq);

    let vector_for = |lam: f64| -> [f64; 2] {
        // rows of (J - lam I) are parallel; take the larger cross form
        let v_a = [j[0][1], lam - j[0][0]];
        let v_b = [lam - j[1][1], j[1][0]];
        let v = if v_a[0].abs() + v_a[1].abs() >= v_b[0].abs() + v_b[1].abs() {
            v_a
        } else {
            v_b
        };
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / norm, v[1] / norm]
    };

    let defective = sq <= 1e-12 * scale.max(tr.abs());
    let v1 = vector_for(l1);
    let v2 = if defective {
        // generalized eigenvector: (J - lam I) g = v1, solved in the least
        // awkward component, then normalized
        let a = j[0][0] - l1;
        let b = j[0][1];
        let g = if b.abs() > a.abs() {
            [0.0, v1[0] / b]
        } else if a.abs() > 0.0 {
            [v1[0] / a, 0.0]
        } else {
            [0.0, 1.0]
        };
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt().max(1e-300);
        [g[0] / norm, g[1] / norm]
    } else {
        vector_for(l2)
    };
    Ok(([l1, l2], [v1, v2], defective))
}

/// Equilibria of the planar system with Jacobians, eigenvalues and unit
/// eigenvectors; preprocessing for the unstable-manifold launch.
pub fn equilibria_and_linearization(params: &WaveParams) -> Result<Linearization> {
    if params.eps <= 0.0 {
        return Err(Error::InvalidParams(
            "linearization needs eps > 0".into(),
        ));
    }
    let s = params.s;
    let eps = params.eps;
    let n_minus = params.n_minus();
    let scale = (s / eps).max(s);

    // d(N')/dN = -(s+P), d(N')/dP = -N, d(P')/dN = -1/eps, d(P')/dP = 2P - s/eps
    let j_behind = [[0.0, -n_minus], [-1.0 / eps, -(2.0 * eps + 1.0) * s / eps]];
    let j_ahead = [[-s, 0.0], [-1.0 / eps, -s / eps]];

    let (ev_b, vec_b, def_b) = eigen_2x2(j_behind, scale)?;
    let (ev_a, vec_a, def_a) = eigen_2x2(j_ahead, scale)?;

    Ok(Linearization {
        behind: Equilibrium {
            state: [n_minus, -s],
            jacobian: j_behind,
            eigenvalues: ev_b,
            eigenvectors: vec_b,
            defective: def_b,
        },
        ahead: Equilibrium {
            state: [0.0, 0.0],
            jacobian: j_ahead,
            eigenvalues: ev_a,
            eigenvectors: vec_a,
            defective: def_a,
        },
    })
}

/// Discretized heteroclinic wave on a 1D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    pub params: WaveParams,
    pub z: Vec<f64>,
    /// Cell density samples, decreasing from `(1+eps) s^2` to 0.
    pub n: Vec<f64>,
    /// Transformed chemical-gradient samples, increasing from `-s` to 0.
    pub p: Vec<f64>,
    /// Chemical samples, increasing to `c_plus` (0-clamped on underflow).
    pub c: Vec<f64>,
    /// `ln C`, kept separately so the left tail survives the underflow clamp.
    pub log_c: Vec<f64>,
    /// Translation anchor: the z where `P = -s/2` (always 0 for solved waves).
    pub z_center: f64,
    /// True when the chemical underflowed the exponent clamp somewhere.
    pub c_underflow: bool,
}

// ---------------------------------------------------------------------------
// adaptive Dormand-Prince integration of the unstable manifold

struct OdeSample {
    z: f64,
    y: [f64; 2],
    f: [f64; 2],
}

fn hermite(a: &OdeSample, b: &OdeSample, z: f64) -> [f64; 2] {
    let h = b.z - a.z;
    let t = (z - a.z) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let mut out = [0.0; 2];
    for k in 0..2 {
        out[k] = h00 * a.y[k] + h10 * h * a.f[k] + h01 * b.y[k] + h11 * h * b.f[k];
    }
    out
}

fn integrate_manifold(params: &WaveParams, opts: &SolveOptions) -> Result<(Vec<OdeSample>, f64)> {
    let s = params.s;
    let eps = params.eps;
    let s2 = s * s;
    let lin = equilibria_and_linearization(params)?;

    let mu = lin.behind.eigenvalues[0];
    debug_assert!(mu > 0.0, "saddle must have an unstable direction");
    let mut v = lin.behind.eigenvectors[0];
    // orient into the box: N decreasing, P increasing
    if v[0] > 0.0 {
        v = [-v[0], -v[1]];
    }

    let delta = opts.offset_delta * s2;
    let mut y = [lin.behind.state[0] + delta * v[0], lin.behind.state[1] + delta * v[1]];
    let mut z = 0.0;
    let mut f = {
        let (a, b) = rhs_unchecked(y[0], y[1], s, eps);
        [a, b]
    };

    let rtol = opts.tol;
    let atol = 1e-14 * s2;
    // the stiffness cap keeps the explicit pair stable near the rest state;
    // the accuracy cap keeps the dense-output derivative residual of the
    // resampled profile near 10 * tol (the cubic's slope error scales like
    // s^4 h^3 / 96)
    let accuracy_cap = (960.0 * rtol).cbrt() / s.powf(4.0 / 3.0);
    let max_step = (eps / (4.0 * s)).min(accuracy_cap);
    let z_hard = 400.0 / s + 400.0 / mu;
    let ball = opts.tail_ball;
    let n_minus = params.n_minus();
    let margin = 10.0 * delta + 1e-12 * s2;

    // Dormand-Prince 5(4) tableau
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];

    let mut h = (max_step * 1e-2).min(0.1 / mu);
    let mut samples = vec![OdeSample { z, y, f }];
    let mut z_event: Option<f64> = None;

    let in_ball = |y: &[f64; 2]| (y[0].abs() / s2).max(y[1].abs() / s) <= ball;

    while !in_ball(&y) {
        if z > z_hard {
            return Err(Error::NonConvergence(format!(
                "trajectory failed to reach the rest state by z = {z_hard}"
            )));
        }
        let min_step = 1e-13 * (1.0 + z.abs());
        if h < min_step {
            return Err(Error::StepUnderflow { z, min_step });
        }
        h = h.min(max_step);

        let mut k = [[0.0f64; 2]; 7];
        k[0] = f;
        for stage in 0..6 {
            let mut yy = y;
            for (m, kk) in k.iter().enumerate().take(stage + 1) {
                yy[0] += h * A[stage][m] * kk[0];
                yy[1] += h * A[stage][m] * kk[1];
            }
            let (a, b) = rhs_unchecked(yy[0], yy[1], s, eps);
            k[stage + 1] = [a, b];
        }
        // stage 6 state is the 5th-order solution (FSAL)
        let mut y_new = y;
        for (m, kk) in k.iter().enumerate().take(6) {
            y_new[0] += h * A[5][m] * kk[0];
            y_new[1] += h * A[5][m] * kk[1];
        }

        let mut err: f64 = 0.0;
        for i in 0..2 {
            let mut e = 0.0;
            for (m, kk) in k.iter().enumerate() {
                e += E[m] * kk[i];
            }
            e *= h;
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }

        if err <= 1.0 {
            let z_new = z + h;
            let f_new = k[6];
            let prev = OdeSample { z, y, f };
            let next = OdeSample {
                z: z_new,
                y: y_new,
                f: f_new,
            };

            // event: P crosses -s/2 (monotone increasing along the orbit)
            if z_event.is_none() && (y[1] + 0.5 * s) <= 0.0 && (y_new[1] + 0.5 * s) > 0.0 {
                let mut lo = z;
                let mut hi = z_new;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if hermite(&prev, &next, mid)[1] + 0.5 * s <= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * (1.0 + z_new.abs()) {
                        break;
                    }
                }
                z_event = Some(0.5 * (lo + hi));
            }

            if !(y_new[0] > -margin
                && y_new[0] < n_minus + margin
                && y_new[1] > -s - margin
                && y_new[1] < margin)
            {
                return Err(Error::NonConvergence(format!(
                    "trajectory left the invariant box at z = {z_new}: (N, P) = ({}, {})",
                    y_new[0], y_new[1]
                )));
            }

            samples.push(OdeSample {
                z: z_new,
                y: y_new,
                f: f_new,
            });
            z = z_new;
            y = y_new;
            f = f_new;
            h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 0.9);
        }
    }

    let z_event = z_event.ok_or_else(|| {
        Error::NonConvergence("orbit reached the rest state without crossing P = -s/2".into())
    })?;
    Ok((samples, z_event))
}

/// Solve the heteroclinic wave and resample it onto the uniform grid given by
/// `spec`; `tol` is the integration tolerance. All profile invariants hold on
/// the returned value (checkable via [`validate_profile`]).
pub fn solve_wave(params: &WaveParams, spec: &GridSpec1d, tol: f64) -> Result<WaveProfile> {
    let opts = SolveOptions {
        tol,
        ..SolveOptions::default()
    };
    solve_wave_on_nodes(params, &spec.nodes()?, &opts)
}

/// As [`solve_wave`], on caller-supplied strictly increasing nodes.
pub fn solve_wave_on_nodes(
    params: &WaveParams,
    z_nodes: &[f64],
    opts: &SolveOptions,
) -> Result<WaveProfile> {
    params.validate(opts.eps_max)?;
    if params.eps == 0.0 {
        return Err(Error::InvalidParams(
            "eps = 0 wave is closed-form; use explicit_wave_eps0".into(),
        ));
    }
    if params.eps < opts.min_eps {
        return Err(Error::TooStiff {
            eps: params.eps,
            floor: opts.min_eps,
        });
    }
    if z_nodes.len() < 9 || z_nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(
            "output grid must be strictly increasing with at least 9 nodes".into(),
        ));
    }

    let (samples, z_event) = integrate_manifold(params, opts)?;
    let s = params.s;
    let s2 = s * s;
    let n_minus = params.n_minus();
    let lin = equilibria_and_linearization(params)?;
    let mu = lin.behind.eigenvalues[0];
    let mut v = lin.behind.eigenvectors[0];
    if v[0] > 0.0 {
        v = [-v[0], -v[1]];
    }
    let delta = opts.offset_delta * s2;

    // shifted coordinates: event sits at z = 0
    let z_launch = samples[0].z - z_event;
    let last = samples.last().unwrap();
    let (z_ball, y_ball) = (last.z - z_event, last.y);

    let mut n = Vec::with_capacity(z_nodes.len());
    let mut p = Vec::with_capacity(z_nodes.len());
    let mut cursor = 0usize;
    for &zg in z_nodes {
        if zg < z_launch {
            // linearized unstable manifold behind the launch point
            let a = delta * (mu * (zg - z_launch)).exp();
            n.push(n_minus + a * v[0]);
            p.push(-s + a * v[1]);
        } else if zg > z_ball {
            // slow-eigenvalue decay ahead of the detection ball
            let a = (-s * (zg - z_ball)).exp();
            n.push(y_ball[0] * a);
            p.push(y_ball[1] * a);
        } else {
            let zt = zg + z_event;
            while cursor + 2 < samples.len() && samples[cursor + 1].z < zt {
                cursor += 1;
            }
            let y = hermite(&samples[cursor], &samples[cursor + 1], zt);
            n.push(y[0]);
            p.push(y[1]);
        }
    }

    let (c, log_c, c_underflow) = chemical_from_p(&p, params.c_plus, z_nodes)?;
    Ok(WaveProfile {
        params: *params,
        z: z_nodes.to_vec(),
        n,
        p,
        c,
        log_c,
        z_center: 0.0,
        c_underflow,
    })
}

/// Numerically stable sigmoid.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Closed-form wave at `eps = 0`:
/// `N = s^2 / (1 + e^{sz})`, `P = -N / s`, `C = c_plus / (1 + e^{-sz})`.
///
/// At `eps = 0` the second profile equation degenerates to `P = -N/s`, and
/// substituting into `N' = -(s+P) N` leaves a logistic equation solved by the
/// form above; the anchor `P(0) = -s/2` holds by construction.
pub fn explicit_wave_eps0(s: f64, c_plus: f64, spec: &GridSpec1d) -> Result<WaveProfile> {
    explicit_wave_eps0_on_nodes(s, c_plus, &spec.nodes()?)
}

/// As [`explicit_wave_eps0`], on caller-supplied nodes.
pub fn explicit_wave_eps0_on_nodes(s: f64, c_plus: f64, z_nodes: &[f64]) -> Result<WaveProfile> {
    let params = WaveParams::new(s, 0.0, c_plus)?;
    let mut n = Vec::with_capacity(z_nodes.len());
    let mut p = Vec::with_capacity(z_nodes.len());
    let mut c = Vec::with_capacity(z_nodes.len());
    let mut log_c = Vec::with_capacity(z_nodes.len());
    let mut c_underflow = false;
    for &z in z_nodes {
        let sig = sigmoid(-s * z);
        n.push(s * s * sig);
        p.push(-s * sig);
        // ln C = ln c_plus - ln(1 + e^{-sz})
        let lc = c_plus.ln() - (-s * z).exp().ln_1p();
        log_c.push(lc);
        if lc < c_plus.ln() - LOG_EXPONENT_CLAMP {
            c_underflow = true;
            c.push(0.0);
        } else {
            c.push(lc.exp());
        }
    }
    Ok(WaveProfile {
        params,
        z: z_nodes.to_vec(),
        n,
        p,
        c,
        log_c,
        z_center: 0.0,
        c_underflow,
    })
}

/// Reconstruct the chemical from `P = -C'/C`:
/// `C(z) = c_plus * exp( integral_z^{z_max} P )`, by composite 4th-order
/// quadrature from the right end. Returns `(c, log_c, underflow_flag)`;
/// on exponent underflow `c` is clamped to 0 (never negative) and flagged.
pub fn chemical_from_p(p: &[f64], c_plus: f64, z_nodes: &[f64]) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let m = p.len();
    if m != z_nodes.len() || m < 4 {
        return Err(Error::InvalidParams(
            "chemical_from_p needs matching p and z arrays with at least 4 nodes".into(),
        ));
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParams("non-finite P sample".into()));
    }
    if !(c_plus > 0.0) {
        return Err(Error::InvalidParams(format!("c_plus = {c_plus}")));
    }
    let dz = z_nodes[1] - z_nodes[0];

    // cell integrals of the cubic through the four nearest samples
    let cell = |i: usize| -> f64 {
        if i == 0 {
            dz / 24.0 * (9.0 * p[0] + 19.0 * p[1] - 5.0 * p[2] + p[3])
        } else if i + 2 >= m {
            dz / 24.0 * (p[m - 4] - 5.0 * p[m - 3] + 19.0 * p[m - 2] + 9.0 * p[m - 1])
        } else {
            dz / 24.0 * (-p[i - 1] + 13.0 * p[i] + 13.0 * p[i + 1] - p[i + 2])
        }
    };

    let mut integral = vec![0.0; m];
    for i in (0..m - 1).rev() {
        integral[i] = integral[i + 1] - cell(i);
    }
    // integral[i] now holds -(int_{z_i}^{z_max} P); flip sign
    let ln_cp = c_plus.ln();
    let mut c = Vec::with_capacity(m);
    let mut log_c = Vec::with_capacity(m);
    let mut underflow = false;
    for i in 0..m {
        let expo = -integral[i];
        let lc = ln_cp + expo;
        log_c.push(lc);
        if expo < -LOG_EXPONENT_CLAMP {
            underflow = true;
            c.push(0.0);
        } else {
            c.push(lc.exp());
        }
    }
    Ok((c, log_c, underflow))
}

// ---------------------------------------------------------------------------
// validation

/// One named validation check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// Measured residual or margin (sign convention per check).
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Empirical suprema of the first two profile derivatives (the theory asserts
/// a uniform bound without giving its value, so these are reported, not
/// asserted).
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeSups {
    pub dn: f64,
    pub d2n: f64,
    pub dp: f64,
    pub d2p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub checks: Vec<Check>,
    pub sups: DerivativeSups,
}

impl ProfileReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Fourth-order first derivative of uniform samples (one-sided at the edges).
pub(crate) fn d1_fourth(f: &[f64], dz: f64) -> Vec<f64> {
    let n = f.len();
    let mut g = vec![0.0; n];
    for i in 2..n - 2 {
        g[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * dz);
    }
    g[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * dz);
    g[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * dz);
    g[n - 2] =
        (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]) / (12.0 * dz);
    g[n - 1] = (25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4]
        + 3.0 * f[n - 5])
        / (12.0 * dz);
    g
}

/// Cubic interpolation of uniform samples at an arbitrary point.
fn interp_cubic(z_nodes: &[f64], f: &[f64], z: f64) -> f64 {
    let n = f.len();
    let dz = z_nodes[1] - z_nodes[0];
    let fi = ((z - z_nodes[0]) / dz).floor();
    let i = (fi as isize).clamp(1, n as isize - 3) as usize;
    let t = (z - z_nodes[i]) / dz;
    // Lagrange cubic on nodes i-1 .. i+2
    let fm1 = f[i - 1];
    let f0 = f[i];
    let f1 = f[i + 1];
    let f2 = f[i + 2];
    -fm1 * t * (t - 1.0) * (t - 2.0) / 6.0 + f0 * (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
        - f1 * (t + 1.0) * t * (t - 2.0) / 2.0
        + f2 * (t + 1.0) * t * (t - 1.0) / 6.0
}

/// Threshold below which the Lemma-2.4 anchor and weight-bound checks apply
/// (they are theorems only for small `eps`).
pub const CENTER_CHECK_EPS_MAX: f64 = 0.1;

/// Run every profile invariant and the weight-bound checks; failures are
/// report entries, never errors.
pub fn validate_profile(profile: &WaveProfile, tol: f64) -> ProfileReport {
    let s = profile.params.s;
    let eps = profile.params.eps;
    let s2 = s * s;
    let n_minus = profile.params.n_minus();
    let z = &profile.z;
    let n = &profile.n;
    let p = &profile.p;
    let c = &profile.c;
    let m = n.len();
    let dz = z[1] - z[0];

    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, threshold: f64| {
        checks.push(Check {
            name: name.to_string(),
            value,
            threshold,
            pass: value <= threshold,
        });
    };

    // strict monotonicity: largest adjacent violation, negative when strict
    let worst_up = n
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    push("n_strictly_decreasing", worst_up, -f64::MIN_POSITIVE);
    let worst_down = p
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    push("p_strictly_increasing", worst_down, -f64::MIN_POSITIVE);

    // endpoint limits, relative to the natural scales
    push("n_left_limit", (n[0] - n_minus).abs() / n_minus, tol);
    push("p_left_limit", (p[0] + s).abs() / s, tol);
    push("n_right_limit", n[m - 1].abs() / s2, tol);
    push("p_right_limit", p[m - 1].abs() / s, tol);

    // pointwise residuals of the two integrated profile relations
    let dn = d1_fourth(n, dz);
    let dp = d1_fourth(p, dz);
    let res1 = (0..m)
        .map(|i| (-dn[i] / n[i] - (s + p[i])).abs())
        .fold(0.0, f64::max);
    push("relation_density_gradient", res1, tol);
    let res2 = (0..m)
        .map(|i| (-s * p[i] - eps * dp[i] - (n[i] - eps * p[i] * p[i])).abs())
        .fold(0.0, f64::max);
    push("relation_chemical_gradient", res2, tol);

    // translation anchor P(z_center) = -s/2, Lemma-2.4 density bound
    let p_center = interp_cubic(z, p, profile.z_center);
    push("center_anchor", (p_center + 0.5 * s).abs() / s, tol.max(1e-9));
    if eps <= CENTER_CHECK_EPS_MAX {
        let n_center = interp_cubic(z, n, profile.z_center);
        push(
            "center_density_lower_bound",
            s2 / 4.0 * (1.0 - tol) - n_center,
            0.0,
        );
    }

    // chemical: strictly increasing where unclamped, right end equals c_plus
    let first_pos = c.iter().position(|&x| x > 0.0).unwrap_or(0);
    let worst_c = c[first_pos..]
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    push("c_strictly_increasing", worst_c, -f64::MIN_POSITIVE);
    push(
        "c_right_limit",
        (c[m - 1] - profile.params.c_plus).abs() / profile.params.c_plus,
        tol,
    );

    // weight bounds from the transition-layer remark, valid for small eps
    if eps <= CENTER_CHECK_EPS_MAX {
        let w: Vec<f64> = n.iter().map(|x| 1.0 / x).collect();
        let dw = d1_fourth(&w, dz);
        let i0 = z.partition_point(|&zz| zz < profile.z_center);
        let worst_right = (i0..m)
            .map(|i| 0.5 * s - dw[i] / w[i])
            .fold(f64::NEG_INFINITY, f64::max);
        push("weight_growth_right_of_center", worst_right, tol * s);
        let worst_left = (0..i0.min(m))
            .map(|i| w[i] - 16.0 / (s2 * s2) * n[i] * (1.0 + tol))
            .fold(f64::NEG_INFINITY, f64::max);
        push("weight_comparison_left_of_center", worst_left, 0.0);
    }

    let d2n = d1_fourth(&dn, dz);
    let d2p = d1_fourth(&dp, dz);
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    ProfileReport {
        checks,
        sups: DerivativeSups {
            dn: sup(&dn),
            d2n: sup(&d2n),
            dp: sup(&dp),
            d2p: sup(&d2p),
        },
    }
}

// ---------------------------------------------------------------------------
// wave sampled on an evolution grid

/// Profile samples and analytic derivative coefficients on the z-nodes of an
/// evolution grid. Derivatives come from the reduced ODE right-hand side
/// evaluated at the stored samples, not from differencing.
#[derive(Debug, Clone)]
pub struct WaveTable {
    pub params: WaveParams,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    pub p: Vec<f64>,
    pub log_c: Vec<f64>,
    pub dn: Vec<f64>,
    pub dp: Vec<f64>,
    /// Weight samples `w = 1/N`.
    pub w: Vec<f64>,
}

impl WaveTable {
    pub fn from_profile(profile: &WaveProfile) -> Self {
        let params = profile.params;
        let s = params.s;
        let eps = params.eps;
        let dn: Vec<f64> = profile
            .n
            .iter()
            .zip(&profile.p)
            .map(|(&n, &p)| -(s + p) * n)
            .collect();
        let dp: Vec<f64> = if eps > 0.0 {
            profile
                .n
                .iter()
                .zip(&profile.p)
                .map(|(&n, &p)| (eps * p * p - s * p - n) / eps)
                .collect()
        } else {
            profile.p.iter().map(|&p| -p * (s + p)).collect()
        };
        let w: Vec<f64> = profile.n.iter().map(|&n| 1.0 / n).collect();
        Self {
            params,
            z: profile.z.clone(),
            n: profile.n.clone(),
            p: profile.p.clone(),
            log_c: profile.log_c.clone(),
            dn,
            dp,
            w,
        }
    }

    /// Solve (or evaluate, at `eps = 0`) the wave on the z-nodes of `grid`.
    pub fn for_grid(params: &WaveParams, grid: &crate::grid::StripGrid) -> Result<Self> {
        let nodes = grid.z_nodes();
        let profile = if params.eps == 0.0 {
            explicit_wave_eps0_on_nodes(params.s, params.c_plus, &nodes)?
        } else {
            solve_wave_on_nodes(params, &nodes, &SolveOptions::default())?
        };
        Ok(Self::from_profile(&profile))
    }
}

// ---------------------------------------------------------------------------
// profile export / import

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ProfileMeta {
    s: f64,
    eps: f64,
    c_plus: f64,
    dz: f64,
    z_min: f64,
    z_max: f64,
    z_center: f64,
    tol: f64,
    c_underflow: bool,
}

fn meta_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("meta.json")
}

impl WaveProfile {
    /// Write the profile as `z,N,P,C` CSV (17 significant digits) plus a
    /// `.meta.json` sidecar with the parameters.
    pub fn write_csv(&self, path: &Path, tol: f64) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "z,N,P,C")?;
        for i in 0..self.z.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.z[i], self.n[i], self.p[i], self.c[i]
            )?;
        }
        out.flush()?;
        let meta = ProfileMeta {
            s: self.params.s,
            eps: self.params.eps,
            c_plus: self.params.c_plus,
            dz: self.z[1] - self.z[0],
            z_min: self.z[0],
            z_max: *self.z.last().unwrap(),
            z_center: self.z_center,
            tol,
            c_underflow: self.c_underflow,
        };
        let f = std::fs::File::create(meta_path(path))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &meta)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    /// Strict inverse of [`WaveProfile::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let meta: ProfileMeta = serde_json::from_reader(BufReader::new(std::fs::File::open(
            meta_path(path),
        )?))
        .map_err(|e| Error::Format(format!("bad profile metadata: {e}")))?;

        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty profile file".into()))??;
        if header.trim() != "z,N,P,C" {
            return Err(Error::Format(format!("bad profile header: {header}")));
        }
        let (mut z, mut n, mut p, mut c) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Format(format!("row {}: expected 4 columns", ln + 2)));
            }
            let parse = |s: &str| -> Result<f64> {
                let v: f64 = s
                    .trim()
                    .parse()
                    .map_err(|e| Error::Format(format!("row {}: {e}", ln + 2)))?;
                if v.is_nan() {
                    return Err(Error::Format(format!("row {}: NaN entry", ln + 2)));
                }
                Ok(v)
            };
            z.push(parse(cols[0])?);
            n.push(parse(cols[1])?);
            p.push(parse(cols[2])?);
            c.push(parse(cols[3])?);
        }
        if z.len() < 9 {
            return Err(Error::Format("profile has fewer than 9 rows".into()));
        }
        let dz = z[1] - z[0];
        if dz <= 0.0 || z.windows(2).any(|w| ((w[1] - w[0]) - dz).abs() > 1e-9 * dz.abs()) {
            return Err(Error::Format("profile z grid is not uniform increasing".into()));
        }
        if ((dz - meta.dz) / meta.dz).abs() > 1e-9
            || (z[0] - meta.z_min).abs() > 1e-9 * (1.0 + meta.z_min.abs())
        {
            return Err(Error::Format("profile metadata disagrees with the data".into()));
        }
        let params = WaveParams::new(meta.s, meta.eps, meta.c_plus)?;
        // log C is re-derived from P so the left tail survives the clamp
        let (_, log_c, c_underflow) = chemical_from_p(&p, meta.c_plus, &z)?;
        Ok(Self {
            params,
            z,
            n,
            p,
            c,
            log_c,
            z_center: meta.z_center,
            c_underflow: c_underflow || meta.c_underflow,
        })
    }
}
