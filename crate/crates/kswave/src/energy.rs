//! Weighted-Sobolev diagnostics: the norms entering the stability functional,
//! the running supremum `M(t)`, time-integrated dissipation, and the
//! localized integrals whose positivity drives the zero-order estimate.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{self, Field};
use crate::grid::StripGrid;
use crate::state::{cole_hopf_inverse, PerturbState, PrimitiveFields, PrimitiveState};
use crate::wave::WaveTable;

/// Sharp Poincaré constant for zero-mean periodic functions; equality at the
/// first Fourier mode. The theory never pins the constant, so this concrete
/// choice is recorded in every report.
pub const POINCARE_CONSTANT: f64 = 1.0 / (2.0 * std::f64::consts::PI);

/// The smallness hypothesis `s * lambda * C_p <= 1/16`.
pub fn smallness_satisfied(s: f64, lambda: f64) -> bool {
    s * lambda * POINCARE_CONSTANT <= 1.0 / 16.0 + 1e-15
}

/// Largest admissible period for a given wave speed under the smallness
/// hypothesis.
pub fn smallness_max_lambda(s: f64) -> f64 {
    1.0 / (16.0 * s * POINCARE_CONSTANT)
}

// ---------------------------------------------------------------------------
// weight field

/// Samples of the weight `w(z) = 1/N(z)`, broadcast in y.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub w: Vec<f64>,
    pub n_minus: f64,
}

impl WeightField {
    pub fn from_wave(wave: &WaveTable) -> Self {
        Self {
            w: wave.w.clone(),
            n_minus: wave.params.n_minus(),
        }
    }

    /// Monotonicity, the lower bound `w >= 1/n_minus`, and `w * N = 1`.
    pub fn validate(&self, wave: &WaveTable, tol: f64) -> Vec<String> {
        let mut failures = Vec::new();
        if self.w.windows(2).any(|p| p[1] <= p[0]) {
            failures.push("weight not strictly increasing".into());
        }
        let floor = (1.0 - tol) / self.n_minus;
        if self.w.iter().any(|&w| w < floor) {
            failures.push("weight below 1/n_minus".into());
        }
        let worst = self
            .w
            .iter()
            .zip(&wave.n)
            .map(|(&w, &n)| (w * n - 1.0).abs())
            .fold(0.0, f64::max);
        if worst > 1e-12 {
            failures.push(format!("w * N deviates from 1 by {worst}"));
        }
        failures
    }
}

// ---------------------------------------------------------------------------
// mixed-derivative tables and quadrature

/// All mixed derivatives `d[i][j] = dz^i dy^j f` with `i + j <= order`.
pub struct DerivTable {
    order: usize,
    d: Vec<Vec<Option<Field>>>,
}

impl DerivTable {
    pub fn build(f: &Field, grid: &StripGrid, order: usize) -> Result<Self> {
        field::check_dims(f, grid)?;
        let mut d: Vec<Vec<Option<Field>>> = vec![vec![None; order + 1]; order + 1];
        d[0][0] = Some(f.clone());
        for total in 1..=order {
            for i in 0..=total {
                let j = total - i;
                let val = if i > 0 {
                    field::dz1(d[i - 1][j].as_ref().unwrap(), grid)?
                } else {
                    field::dy1(d[0][j - 1].as_ref().unwrap(), grid)?
                };
                d[i][j] = Some(val);
            }
        }
        Ok(Self { order, d })
    }

    pub fn get(&self, i: usize, j: usize) -> &Field {
        assert!(i + j <= self.order, "derivative order exceeds table");
        self.d[i][j].as_ref().unwrap()
    }
}

/// `∫ f^2 w dz dy` with trapezoid-z, rectangle-y quadrature.
fn weighted_square(f: &Field, weight: Option<&[f64]>, grid: &StripGrid) -> f64 {
    let wz = field::quad_weights_z(grid);
    let mut total = 0.0;
    for i in 0..grid.nz {
        let wrow = wz[i] * weight.map_or(1.0, |w| w[i]);
        let mut row = 0.0;
        for j in 0..grid.ny {
            let v = f[(i, j)];
            row += v * v;
        }
        total += wrow * row;
    }
    total * grid.dy
}

/// Squared (weighted) Sobolev norm of order `k <= 3`: the sum over all mixed
/// derivatives `i + j <= k` of their weighted L2 squares, over all listed
/// field components.
pub fn weighted_sobolev_norm(
    fields: &[&Field],
    k: usize,
    weight: Option<&[f64]>,
    grid: &StripGrid,
) -> Result<f64> {
    if k > 3 {
        return Err(Error::InvalidParams(format!(
            "Sobolev order {k} exceeds the supported maximum 3"
        )));
    }
    if let Some(w) = weight {
        if w.len() != grid.nz {
            return Err(Error::DimensionMismatch {
                expected: (grid.nz, 0),
                found: (w.len(), 0),
            });
        }
    }
    let mut total = 0.0;
    for f in fields {
        let table = DerivTable::build(f, grid, k)?;
        for i in 0..=k {
            for j in 0..=(k - i) {
                total += weighted_square(table.get(i, j), weight, grid);
            }
        }
    }
    Ok(total)
}

/// Squared weighted norm of the order-`l` gradient block:
/// the sum over `i + j = l` of the weighted L2 squares. `l <= 4`.
pub fn grad_block_norm(
    fields: &[&Field],
    l: usize,
    weight: Option<&[f64]>,
    grid: &StripGrid,
) -> Result<f64> {
    if l > 4 {
        return Err(Error::InvalidParams(format!("gradient order {l} > 4")));
    }
    let mut total = 0.0;
    for f in fields {
        let table = DerivTable::build(f, grid, l)?;
        for i in 0..=l {
            total += weighted_square(table.get(i, l - i), weight, grid);
        }
    }
    Ok(total)
}

/// Fourier-coefficient form of the squared `H^k` norm: for each transversal
/// integer mode `n`, `sum_{i+j<=k} lambda n^{2j} ∫ |dz^i f_n|^2 dz`. Agrees
/// with the mixed-derivative form up to the transversal length scale; used as
/// a cross-check only.
pub fn fourier_sobolev_norm(
    fields: &[&Field],
    k: usize,
    weight: Option<&[f64]>,
    grid: &StripGrid,
) -> Result<f64> {
    if k > 3 {
        return Err(Error::InvalidParams(format!("Sobolev order {k} > 3")));
    }
    let (nz, ny) = grid.shape();
    let half = ny / 2;
    let wz = field::quad_weights_z(grid);

    let d1_vec = |v: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; nz];
        for i in 1..nz - 1 {
            g[i] = (v[i + 1] - v[i - 1]) / (2.0 * grid.dz);
        }
        g[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * grid.dz);
        g[nz - 1] = (3.0 * v[nz - 1] - 4.0 * v[nz - 2] + v[nz - 3]) / (2.0 * grid.dz);
        g
    };

    let mut total = 0.0;
    for f in fields {
        field::check_dims(f, grid)?;
        for mode in 0..=half {
            // real/imaginary parts of the mode-`mode` coefficient along z
            let mut re = vec![0.0; nz];
            let mut im = vec![0.0; nz];
            for i in 0..nz {
                for j in 0..ny {
                    let th = 2.0 * std::f64::consts::PI * mode as f64 * j as f64 / ny as f64;
                    re[i] += f[(i, j)] * th.cos() / ny as f64;
                    im[i] -= f[(i, j)] * th.sin() / ny as f64;
                }
            }
            let multiplicity = if mode == 0 || mode == half { 1.0 } else { 2.0 };
            let mut dre = re;
            let mut dim = im;
            for i_ord in 0..=k {
                for j_ord in 0..=(k - i_ord) {
                    let factor = (mode as f64).powi(2 * j_ord as i32);
                    let mut sum = 0.0;
                    for i in 0..nz {
                        let wrow = wz[i] * weight.map_or(1.0, |w| w[i]);
                        sum += wrow * (dre[i] * dre[i] + dim[i] * dim[i]);
                    }
                    total += multiplicity * grid.lambda * factor * sum;
                }
                if i_ord < k {
                    dre = d1_vec(&dre);
                    dim = d1_vec(&dim);
                }
            }
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// per-snapshot diagnostics

/// Everything the energy report records about one snapshot. Entries that a
/// representation cannot provide (the antiderivative norms, for primitive
/// states) are NaN.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotDiagnostics {
    pub phi_h3w: f64,
    pub psi_h3: f64,
    pub gradpsi_h2w: f64,
    pub diss_phi_rate: f64,
    pub diss_psi_rate: f64,
    pub diss_eps_psi4_rate: f64,
    pub lem31_a: f64,
    pub lem31_b: f64,
    pub lem31_c: f64,
    pub eps_p_psi2: f64,
    pub dy_n_l2: f64,
    pub dy_psi_l2: f64,
    /// Largest field magnitude in the z-boundary buffer (should stay tiny).
    pub buffer_magnitude: f64,
    /// Largest weight actually multiplied by a nonzero sample.
    pub max_weight_on_support: f64,
}

impl SnapshotDiagnostics {
    pub fn m_sum(&self) -> f64 {
        self.phi_h3w + self.psi_h3 + self.gradpsi_h2w
    }
}

/// Dissipation coefficients of the zero-order estimate, in forms that stay
/// finite in the vacuum tail:
/// `(N')^2/N^3 = (s+P)^2 / N`, `P'/N`, `P N'/N^2 = -P (s+P) / N`.
pub fn lemma_coefficients(wave: &WaveTable) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let s = wave.params.s;
    let a = wave
        .n
        .iter()
        .zip(&wave.p)
        .map(|(&n, &p)| (s + p) * (s + p) / n)
        .collect();
    let b = wave.dp.iter().zip(&wave.n).map(|(&dp, &n)| dp / n).collect();
    let c = wave
        .n
        .iter()
        .zip(&wave.p)
        .map(|(&n, &p)| -p * (s + p) / n)
        .collect();
    (a, b, c)
}

fn weighted_square_coef(f: &Field, coef: &[f64], grid: &StripGrid) -> f64 {
    weighted_square(f, Some(coef), grid)
}

fn max_weight_on_support(fields: &[&Field], w: &[f64], grid: &StripGrid) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..grid.nz {
        let nonzero = fields
            .iter()
            .any(|f| (0..grid.ny).any(|j| f[(i, j)] != 0.0));
        if nonzero {
            worst = worst.max(w[i]);
        }
    }
    worst
}

/// Localized lemma integrals for a perturbation snapshot, with the wave
/// coefficients evaluated from the reduced ODE (never by differencing).
/// Also verifies the coefficient positivity observation.
pub fn lemma_diagnostics(
    state: &PerturbState,
    wave: &WaveTable,
) -> Result<(f64, f64, f64, f64, bool)> {
    let grid = &state.grid;
    let (ca, cb, cc) = lemma_coefficients(wave);
    let positive = ca.iter().chain(&cb).chain(&cc).all(|&v| v > 0.0);
    // |phi|^2 needs both components under coefficient a
    let a = weighted_square_coef(&state.phi1, &ca, grid)
        + weighted_square_coef(&state.phi2, &ca, grid);
    let b = weighted_square_coef(&state.phi1, &cb, grid);
    let c = weighted_square_coef(&state.phi2, &cc, grid);
    let eps_p_psi2 =
        wave.params.eps * weighted_square_coef(&state.psi, &wave.dp, grid);
    Ok((a, b, c, eps_p_psi2, positive))
}

/// Full diagnostics for a perturbation snapshot.
pub fn evaluate_perturbation(state: &PerturbState, wave: &WaveTable) -> Result<SnapshotDiagnostics> {
    let grid = &state.grid;
    let w = &wave.w;
    let eps = wave.params.eps;

    let phi1_t = DerivTable::build(&state.phi1, grid, 4)?;
    let phi2_t = DerivTable::build(&state.phi2, grid, 4)?;
    let psi_t = DerivTable::build(&state.psi, grid, 4)?;

    let sum_block = |table: &DerivTable, l: usize, weight: Option<&[f64]>| -> f64 {
        let mut total = 0.0;
        for i in 0..=l {
            total += weighted_square(table.get(i, l - i), weight, grid);
        }
        total
    };
    let sum_upto = |table: &DerivTable, k: usize, weight: Option<&[f64]>| -> f64 {
        (0..=k).map(|l| sum_block(table, l, weight)).sum()
    };

    let phi_h3w = sum_upto(&phi1_t, 3, Some(w)) + sum_upto(&phi2_t, 3, Some(w));
    let psi_h3 = sum_upto(&psi_t, 3, None);
    // H^2_w of (psi_z, psi_y): every derivative of total order 1..=3 of psi,
    // counted once per component path
    let mut gradpsi_h2w = 0.0;
    for i in 0..=2usize {
        for j in 0..=(2 - i) {
            gradpsi_h2w += weighted_square(psi_t.get(i + 1, j), Some(w), grid);
            gradpsi_h2w += weighted_square(psi_t.get(i, j + 1), Some(w), grid);
        }
    }

    let diss_phi_rate: f64 = (1..=4)
        .map(|l| sum_block(&phi1_t, l, Some(w)) + sum_block(&phi2_t, l, Some(w)))
        .sum();
    let diss_psi_rate: f64 = (1..=3).map(|l| sum_block(&psi_t, l, Some(w))).sum();
    let diss_eps_psi4_rate = eps * sum_block(&psi_t, 4, Some(w));

    let (lem31_a, lem31_b, lem31_c, eps_p_psi2, coef_positive) = lemma_diagnostics(state, wave)?;
    if !coef_positive {
        return Err(Error::InvalidParams(
            "non-positive dissipation coefficient; wave profile corrupted".into(),
        ));
    }

    // transversal decay witnesses: n - N = div(phi), so dy n = dy(div phi)
    let div_phi = field::div(&state.phi1, &state.phi2, grid)?;
    let dy_n = field::dy1(&div_phi, grid)?;
    let dy_n_l2 = weighted_square(&dy_n, None, grid);
    let dy_psi_l2 = weighted_square(psi_t.get(0, 1), None, grid);

    Ok(SnapshotDiagnostics {
        phi_h3w,
        psi_h3,
        gradpsi_h2w,
        diss_phi_rate,
        diss_psi_rate,
        diss_eps_psi4_rate,
        lem31_a,
        lem31_b,
        lem31_c,
        eps_p_psi2,
        dy_n_l2,
        dy_psi_l2,
        buffer_magnitude: state.buffer_magnitude(),
        max_weight_on_support: max_weight_on_support(&state.fields(), w, grid),
    })
}

/// Diagnostics for a primitive snapshot. The chemical antiderivative `psi`
/// is recovered exactly for the log-chemical form (`psi = log C - log c`) and
/// by path integration for the gradient form; the cell antiderivative is not
/// recoverable, so the phi-entries are NaN.
pub fn evaluate_primitive(state: &PrimitiveState, wave: &WaveTable) -> Result<SnapshotDiagnostics> {
    let grid = &state.grid;
    let w = &wave.w;
    let eps = wave.params.eps;

    let psi = match &state.fields {
        PrimitiveFields::Nc { log_c, .. } => {
            let mut psi = Field::zeros(grid.shape());
            for i in 0..grid.nz {
                for j in 0..grid.ny {
                    psi[(i, j)] = wave.log_c[i] - log_c[(i, j)];
                }
            }
            psi
        }
        PrimitiveFields::Np { p1, p2, .. } => {
            let mut v1 = p1.clone();
            for i in 0..grid.nz {
                for j in 0..grid.ny {
                    v1[(i, j)] -= wave.p[i];
                }
            }
            // grad psi = p - P; anchor psi = 0 at the right end where the
            // perturbation has decayed
            let minus = cole_hopf_inverse(&v1, p2, 0.0, grid, crate::state::CURL_TOLERANCE)?;
            let mut psi = minus;
            for v in psi.iter_mut() {
                *v = -*v;
            }
            psi
        }
    };

    let psi_t = DerivTable::build(&psi, grid, 4)?;
    let sum_block = |table: &DerivTable, l: usize, weight: Option<&[f64]>| -> f64 {
        (0..=l)
            .map(|i| weighted_square(table.get(i, l - i), weight, grid))
            .sum()
    };
    let psi_h3: f64 = (0..=3).map(|l| sum_block(&psi_t, l, None)).sum();
    let mut gradpsi_h2w = 0.0;
    for i in 0..=2usize {
        for j in 0..=(2 - i) {
            gradpsi_h2w += weighted_square(psi_t.get(i + 1, j), Some(w), grid);
            gradpsi_h2w += weighted_square(psi_t.get(i, j + 1), Some(w), grid);
        }
    }
    let diss_psi_rate: f64 = (1..=3).map(|l| sum_block(&psi_t, l, Some(w))).sum();
    let diss_eps_psi4_rate = eps * sum_block(&psi_t, 4, Some(w));
    let eps_p_psi2 = eps * weighted_square(&psi, Some(&wave.dp), grid);

    let dy_n = field::dy1(state.n(), grid)?;
    let dy_n_l2 = weighted_square(&dy_n, None, grid);
    let dy_psi_l2 = weighted_square(psi_t.get(0, 1), None, grid);

    Ok(SnapshotDiagnostics {
        phi_h3w: f64::NAN,
        psi_h3,
        gradpsi_h2w,
        diss_phi_rate: f64::NAN,
        diss_psi_rate,
        diss_eps_psi4_rate,
        lem31_a: f64::NAN,
        lem31_b: f64::NAN,
        lem31_c: f64::NAN,
        eps_p_psi2,
        dy_n_l2,
        dy_psi_l2,
        buffer_magnitude: f64::NAN,
        max_weight_on_support: f64::NAN,
    })
}

// ---------------------------------------------------------------------------
// time series

#[derive(Debug, Clone, Copy)]
pub struct EnergyRow {
    pub t: f64,
    pub phi_h3w: f64,
    pub psi_h3: f64,
    pub gradpsi_h2w: f64,
    pub m: f64,
    pub diss_phi: f64,
    pub diss_psi: f64,
    pub diss_eps_psi4: f64,
    pub lem31_a: f64,
    pub lem31_b: f64,
    pub lem31_c: f64,
    pub eps_p_psi2: f64,
    pub dy_n_l2: f64,
    pub dy_psi_l2: f64,
}

pub const ENERGY_CSV_HEADER: &str = "t,phi_H3w,psi_H3,gradpsi_H2w,M,diss_phi,diss_psi,diss_eps_psi4,lem31_a,lem31_b,lem31_c,eps_P_psi2,dy_n_L2,dy_psi_L2";

/// Time series of norms, the running supremum `M(t)`, and trapezoid-in-time
/// dissipation accumulators.
#[derive(Debug, Clone, Default)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    m_sup: f64,
    acc: [f64; 3],
    prev: Option<(f64, [f64; 3])>,
}

impl EnergyReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append one snapshot's diagnostics, updating `M` and the accumulators.
    /// Rejects a non-increasing time sequence.
    pub fn push(&mut self, t: f64, d: &SnapshotDiagnostics) -> Result<()> {
        if let Some((t_prev, rates_prev)) = self.prev {
            if t <= t_prev {
                return Err(Error::InvalidParams(format!(
                    "non-monotone snapshot times: {t_prev} then {t}"
                )));
            }
            let rates = [d.diss_phi_rate, d.diss_psi_rate, d.diss_eps_psi4_rate];
            for k in 0..3 {
                self.acc[k] += 0.5 * (rates_prev[k] + rates[k]) * (t - t_prev);
            }
        }
        self.prev = Some((t, [d.diss_phi_rate, d.diss_psi_rate, d.diss_eps_psi4_rate]));
        let m_val = d.m_sum();
        self.m_sup = if m_val.is_nan() || self.m_sup.is_nan() {
            f64::NAN
        } else {
            self.m_sup.max(m_val)
        };
        self.rows.push(EnergyRow {
            t,
            phi_h3w: d.phi_h3w,
            psi_h3: d.psi_h3,
            gradpsi_h2w: d.gradpsi_h2w,
            m: self.m_sup,
            diss_phi: self.acc[0],
            diss_psi: self.acc[1],
            diss_eps_psi4: self.acc[2],
            lem31_a: d.lem31_a,
            lem31_b: d.lem31_b,
            lem31_c: d.lem31_c,
            eps_p_psi2: d.eps_p_psi2,
            dy_n_l2: d.dy_n_l2,
            dy_psi_l2: d.dy_psi_l2,
        });
        Ok(())
    }

    pub fn m_series(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, r.m)).collect()
    }

    pub fn dy_n_series(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, r.dy_n_l2)).collect()
    }

    pub fn dy_psi_series(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, r.dy_psi_l2)).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{ENERGY_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t,
                r.phi_h3w,
                r.psi_h3,
                r.gradpsi_h2w,
                r.m,
                r.diss_phi,
                r.diss_psi,
                r.diss_eps_psi4,
                r.lem31_a,
                r.lem31_b,
                r.lem31_c,
                r.eps_p_psi2,
                r.dy_n_l2,
                r.dy_psi_l2
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parse a file written by [`EnergyReport::write_csv`]; used to verify the
    /// summary arithmetic is recomputable from the CSV alone.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty energy file".into()))??;
        if header.trim() != ENERGY_CSV_HEADER {
            return Err(Error::Format(format!("bad energy header: {header}")));
        }
        let mut report = Self::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Format(format!("bad energy row: {e}")))?;
            if vals.len() != 14 {
                return Err(Error::Format("energy row needs 14 columns".into()));
            }
            report.rows.push(EnergyRow {
                t: vals[0],
                phi_h3w: vals[1],
                psi_h3: vals[2],
                gradpsi_h2w: vals[3],
                m: vals[4],
                diss_phi: vals[5],
                diss_psi: vals[6],
                diss_eps_psi4: vals[7],
                lem31_a: vals[8],
                lem31_b: vals[9],
                lem31_c: vals[10],
                eps_p_psi2: vals[11],
                dy_n_l2: vals[12],
                dy_psi_l2: vals[13],
            });
        }
        Ok(report)
    }
}

// ---------------------------------------------------------------------------
// Poincaré battery

#[derive(Debug, Clone)]
pub struct PoincareReport {
    pub c_p: f64,
    /// Worst ratio `|f - mean| / (lambda |f'|)` over the battery.
    pub worst_ratio: f64,
    /// Ratio achieved by the extremal first mode.
    pub extremal_ratio: f64,
    pub samples: usize,
    pub lambda: f64,
}

/// Evaluate the interval Poincaré ratio on the extremal mode plus a battery of
/// seeded random trigonometric polynomials up to mode `ny/2 - 1`. Derivatives
/// are analytic, so the periodic rectangle quadrature is exact for every
/// battery member.
pub fn poincare_check(lambda: f64, ny: usize, samples: usize, seed: u64) -> Result<PoincareReport> {
    if ny < 4 || !ny.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!("poincare battery needs even ny >= 4, got {ny}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kmax = ny / 2 - 1;
    let om = 2.0 * std::f64::consts::PI / lambda;
    let dy = lambda / ny as f64;

    let ratio_of = |coeffs: &[(f64, f64)]| -> f64 {
        // coeffs[k-1] = (a_k, b_k) for modes 1..=kmax; the constant drops out
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..ny {
            let y = j as f64 * dy;
            let mut f = 0.0;
            let mut df = 0.0;
            for (k, &(a, b)) in coeffs.iter().enumerate() {
                let th = om * (k + 1) as f64 * y;
                f += a * th.cos() + b * th.sin();
                df += om * (k + 1) as f64 * (-a * th.sin() + b * th.cos());
            }
            num += f * f * dy;
            den += df * df * dy;
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt() / lambda
        }
    };

    let mut extremal = vec![(0.0, 0.0); kmax.max(1)];
    extremal[0] = (0.0, 1.0); // sin(2 pi y / lambda)
    let extremal_ratio = ratio_of(&extremal);

    let mut worst = extremal_ratio;
    for _ in 0..samples {
        let coeffs: Vec<(f64, f64)> = (0..kmax)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        worst = worst.max(ratio_of(&coeffs));
    }

    Ok(PoincareReport {
        c_p: POINCARE_CONSTANT,
        worst_ratio: worst,
        extremal_ratio,
        samples: samples + 1,
        lambda,
    })
}
