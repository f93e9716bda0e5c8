//! Configuration-driven experiments: initial data families, single runs with
//! persisted trajectories, parameter sweeps, and the invariant check battery.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

use crate::config::{
    ExperimentConfig, FormulationTag, PerturbationFamily, PerturbationSection, SweepAxis,
};
use crate::energy::{
    evaluate_perturbation, lemma_coefficients, poincare_check, smallness_satisfied,
    weighted_sobolev_norm, WeightField, POINCARE_CONSTANT,
};
use crate::error::{Error, Result};
use crate::evolve::{run, RunOutcome, SchemeConfig};
use crate::field::{self, Field};
use crate::grid::StripGrid;
use crate::state::{
    cole_hopf_forward, cole_hopf_inverse, read_snapshot, write_snapshot, PerturbState,
    PrimitiveFields, PrimitiveState, Snapshot, CURL_TOLERANCE,
};
use crate::wave::{
    explicit_wave_eps0_on_nodes, solve_wave_on_nodes, validate_profile, SolveOptions, WaveProfile,
    WaveTable,
};

/// Perturbation fields plus their analytic derivative combinations, kept so
/// primitive initial states can be built consistently (no stencil error in
/// the initialization).
pub struct InitialPerturbation {
    pub state: PerturbState,
    pub div_phi: Field,
    pub grad_psi_z: Field,
    pub grad_psi_y: Field,
    pub m0: f64,
}

/// Magnitudes above `1e-12 * amplitude` inside the buffer are a support
/// violation; below it, the fields are hard-zeroed so the weighted norms see
/// genuinely compact support.
const SUPPORT_TOL: f64 = 1e-12;

/// Build `(phi0, psi0)` from the configured family and report `M0`.
pub fn build_initial_perturbation(
    spec: &PerturbationSection,
    grid: &StripGrid,
    wave: &WaveTable,
) -> Result<InitialPerturbation> {
    let (nz, ny) = grid.shape();
    let mut state = PerturbState::zeros(grid);
    let mut div_phi = Field::zeros((nz, ny));
    let mut grad_psi_z = Field::zeros((nz, ny));
    let mut grad_psi_y = Field::zeros((nz, ny));

    match spec.family {
        PerturbationFamily::GaussianBump | PerturbationFamily::YMode => {
            let a = spec.amplitude;
            let k = if spec.family == PerturbationFamily::YMode {
                spec.y_mode_k as f64
            } else {
                0.0
            };
            let om = 2.0 * std::f64::consts::PI * k / grid.lambda;
            for i in 0..nz {
                let z = grid.z(i);
                let arg = (z - spec.center_z) / spec.sigma_z;
                let bump = (-arg * arg).exp();
                let dbump = -2.0 * arg / spec.sigma_z * bump;
                for j in 0..ny {
                    let y = grid.y(j);
                    let m = (om * y).cos();
                    let dm = -om * (om * y).sin();
                    state.phi1[(i, j)] = a * bump * m;
                    state.phi2[(i, j)] = a * bump * m;
                    state.psi[(i, j)] = a * bump * m;
                    div_phi[(i, j)] = a * (dbump * m + bump * dm);
                    grad_psi_z[(i, j)] = a * dbump * m;
                    grad_psi_y[(i, j)] = a * bump * dm;
                }
            }
            enforce_support(grid, spec.amplitude, &mut state, &mut [
                &mut div_phi,
                &mut grad_psi_z,
                &mut grad_psi_y,
            ])?;
        }
        PerturbationFamily::CustomFile => {
            let path = spec
                .file
                .as_ref()
                .ok_or_else(|| Error::Config("custom_file family needs `file`".into()))?;
            let Snapshot::Perturbation(loaded) = read_snapshot(Path::new(path))? else {
                return Err(Error::Format(format!(
                    "{path}: custom initial data must be a perturbation snapshot"
                )));
            };
            if loaded.grid.shape() != grid.shape() {
                return Err(Error::DimensionMismatch {
                    expected: grid.shape(),
                    found: loaded.grid.shape(),
                });
            }
            state = loaded;
            state.t = 0.0;
            let sup = state.sup();
            enforce_support(grid, sup, &mut state, &mut [])?;
            div_phi = field::div(&state.phi1, &state.phi2, grid)?;
            let (gz, gy) = field::grad(&state.psi, grid)?;
            grad_psi_z = gz;
            grad_psi_y = gy;
        }
    }

    let m0 = evaluate_perturbation(&state, wave)?.m_sum();
    Ok(InitialPerturbation {
        state,
        div_phi,
        grad_psi_z,
        grad_psi_y,
        m0,
    })
}

fn enforce_support(
    grid: &StripGrid,
    scale: f64,
    state: &mut PerturbState,
    extras: &mut [&mut Field],
) -> Result<()> {
    if scale == 0.0 {
        return Ok(());
    }
    for i in 0..grid.nz {
        if !grid.in_buffer(i) {
            continue;
        }
        for j in 0..grid.ny {
            for f in [&state.phi1, &state.phi2, &state.psi] {
                let v = f[(i, j)].abs();
                if v > SUPPORT_TOL * scale {
                    return Err(Error::SupportViolation {
                        z: grid.z(i),
                        magnitude: v,
                    });
                }
            }
        }
        for j in 0..grid.ny {
            state.phi1[(i, j)] = 0.0;
            state.phi2[(i, j)] = 0.0;
            state.psi[(i, j)] = 0.0;
            for f in extras.iter_mut() {
                f[(i, j)] = 0.0;
            }
        }
    }
    Ok(())
}

/// Consistent primitive initial states derived from the same perturbation:
/// `n0 = N + div(phi0)`, `p0 = (P,0) + grad(psi0)`, `log c0 = log C - psi0`.
pub fn initial_primitive(
    init: &InitialPerturbation,
    wave: &WaveTable,
    log_form: bool,
) -> PrimitiveState {
    let grid = &init.state.grid;
    let (nz, ny) = grid.shape();
    let mut n = init.div_phi.clone();
    for i in 0..nz {
        for j in 0..ny {
            n[(i, j)] += wave.n[i];
        }
    }
    let fields = if log_form {
        let mut log_c = init.state.psi.clone();
        for i in 0..nz {
            for j in 0..ny {
                log_c[(i, j)] = wave.log_c[i] - log_c[(i, j)];
            }
        }
        PrimitiveFields::Nc { n, log_c }
    } else {
        let mut p1 = init.grad_psi_z.clone();
        for i in 0..nz {
            for j in 0..ny {
                p1[(i, j)] += wave.p[i];
            }
        }
        PrimitiveFields::Np {
            n,
            p1,
            p2: init.grad_psi_y.clone(),
        }
    };
    PrimitiveState {
        grid: grid.clone(),
        t: 0.0,
        fields,
    }
}

// ---------------------------------------------------------------------------
// summaries

#[derive(Debug, Clone, Serialize)]
pub struct InvariantSuite {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub formulation: String,
    pub m0: f64,
    pub sup_m: Option<f64>,
    /// `sup_t M(t) / M(0)`, recomputable from the energy CSV alone.
    pub c0_empirical: Option<f64>,
    pub final_norms: FinalNorms,
    pub diss_totals: DissTotals,
    pub diss_over_m0: Option<DissTotals>,
    pub blow_up: bool,
    pub failure: Option<String>,
    pub steps: usize,
    pub drift_sup: f64,
    pub gradpsi_decay_rate: Option<f64>,
    pub max_buffer_magnitude: Option<f64>,
    pub max_weight_on_support: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FinalNorms {
    pub phi_h3w: Option<f64>,
    pub psi_h3: Option<f64>,
    pub gradpsi_h2w: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DissTotals {
    pub phi: Option<f64>,
    pub psi: Option<f64>,
    pub eps_psi4: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossDiffs {
    pub n_np_vs_nc: f64,
    pub n_pert_vs_np: f64,
    pub n_pert_vs_nc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub warnings: Vec<String>,
    pub smallness_ok: bool,
    pub m0: f64,
    pub runs: Vec<RunSummary>,
    pub cross_diffs: Option<CrossDiffs>,
    pub suites: Vec<InvariantSuite>,
}

impl ExperimentSummary {
    pub fn any_blow_up(&self) -> bool {
        self.runs.iter().any(|r| r.blow_up)
    }

    pub fn all_suites_pass(&self) -> bool {
        self.suites.iter().all(|s| s.pass)
    }
}

fn opt(v: f64) -> Option<f64> {
    if v.is_finite() {
        Some(v)
    } else {
        None
    }
}

/// Least-squares exponential decay rate of a positive series over its second
/// half; `None` when the data is unusable (too short, zeros, growth).
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Option<f64> {
    let tail = &series[series.len() / 2..];
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    Some(-slope)
}

fn summarize_run(formulation: &str, m0: f64, outcome: &RunOutcome) -> RunSummary {
    let rows = &outcome.report.rows;
    let last = rows.last();
    let sup_m = last.and_then(|r| opt(r.m));
    let c0 = match (sup_m, rows.first()) {
        (Some(sup), Some(first)) if first.m > 0.0 => Some(sup / first.m),
        _ => None,
    };
    let diss = last.map(|r| (r.diss_phi, r.diss_psi, r.diss_eps_psi4));
    let gradpsi_series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.gradpsi_h2w)).collect();
    RunSummary {
        formulation: formulation.to_string(),
        m0,
        sup_m,
        c0_empirical: c0,
        final_norms: FinalNorms {
            phi_h3w: last.and_then(|r| opt(r.phi_h3w)),
            psi_h3: last.and_then(|r| opt(r.psi_h3)),
            gradpsi_h2w: last.and_then(|r| opt(r.gradpsi_h2w)),
        },
        diss_totals: DissTotals {
            phi: diss.and_then(|d| opt(d.0)),
            psi: diss.and_then(|d| opt(d.1)),
            eps_psi4: diss.and_then(|d| opt(d.2)),
        },
        diss_over_m0: if m0 > 0.0 {
            diss.map(|d| DissTotals {
                phi: opt(d.0 / m0),
                psi: opt(d.1 / m0),
                eps_psi4: opt(d.2 / m0),
            })
        } else {
            None
        },
        blow_up: outcome.failure.is_some(),
        failure: outcome.failure.as_ref().map(|f| format!("step {}: {}", f.step, f.what)),
        steps: outcome.steps,
        drift_sup: outcome.drift_sup,
        gradpsi_decay_rate: fit_decay_rate(&gradpsi_series),
        max_buffer_magnitude: None,
        max_weight_on_support: None,
    }
}

// ---------------------------------------------------------------------------
// single experiment

pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config.to_toml().as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Profile-validation tolerance achievable on a given grid: the configured
/// tolerance, floored by the edge-stencil residual scale `(s dz)^4 (1 + s)`
/// and the domain-truncation tail `e^{-s l_z}`. Fine profile grids reduce this
/// to the configured value; the strict residual gates live in the acceptance
/// suite on such grids.
pub fn achievable_profile_tol(config: &ExperimentConfig, grid: &StripGrid) -> f64 {
    let s = config.wave.s;
    config
        .wave
        .tol
        .max(1e-6)
        .max((s * grid.dz).powi(4) * (1.0 + s))
        .max(6.0 * (-s * grid.l_z).exp())
}

fn build_wave(config: &ExperimentConfig, grid: &StripGrid) -> Result<(WaveProfile, WaveTable)> {
    let params = config.wave_params()?;
    let nodes = grid.z_nodes();
    let profile = if params.eps == 0.0 {
        explicit_wave_eps0_on_nodes(params.s, params.c_plus, &nodes)?
    } else {
        solve_wave_on_nodes(
            &params,
            &nodes,
            &SolveOptions {
                tol: config.wave.tol,
                ..SolveOptions::default()
            },
        )?
    };
    let table = WaveTable::from_profile(&profile);
    Ok((profile, table))
}

fn persist_run(
    dir: &Path,
    initial: &Snapshot,
    wave: &WaveTable,
    cfg: &SchemeConfig,
    keep: bool,
) -> Result<RunOutcome> {
    std::fs::create_dir_all(dir)?;
    let outcome = run(initial, wave, cfg, keep, |step, snap, _| {
        write_snapshot(&dir.join(format!("snap_{step:06}.fld")), snap)
    })?;
    outcome.report.write_csv(&dir.join("energy.csv"))?;
    if let Some(f) = &outcome.failure {
        let mut marker = std::fs::File::create(dir.join("ERROR"))?;
        writeln!(marker, "step {}: t = {}: {}", f.step, f.t, f.what)?;
    }
    Ok(outcome)
}

/// Execute the configured experiment into `out_dir`: trajectory snapshots,
/// `energy.csv` per formulation, `run.meta`, and `summary.json`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    let warnings = config.validate(false)?;
    let grid = config.strip_grid()?;
    let scheme = config.scheme_config()?;
    let run_section = config
        .run
        .as_ref()
        .ok_or_else(|| Error::Config("missing [run] section".into()))?;
    let pert_section = config
        .perturbation
        .as_ref()
        .ok_or_else(|| Error::Config("missing [perturbation] section".into()))?;

    std::fs::create_dir_all(out_dir)?;
    let (profile, wave) = build_wave(config, &grid)?;
    let weight = WeightField::from_wave(&wave);
    let init = build_initial_perturbation(pert_section, &grid, &wave)?;

    let hash = config_hash(config);
    let meta = serde_json::json!({
        "config_hash": hash,
        "config": config,
        "grid": { "nz": grid.nz, "ny": grid.ny, "dz": grid.dz, "dy": grid.dy },
        "m0": init.m0,
        "warnings": warnings,
    });
    std::fs::write(
        out_dir.join("run.meta"),
        serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    profile.write_csv(&out_dir.join("profile.csv"), config.wave.tol)?;

    let mut suites = Vec::new();
    let profile_tol = achievable_profile_tol(config, &grid);
    let report = validate_profile(&profile, profile_tol);
    suites.push(InvariantSuite {
        name: "profile_validation".into(),
        pass: report.ok(),
        detail: if report.ok() {
            format!("{} checks at tol {profile_tol:.3e}", report.checks.len())
        } else {
            format!(
                "at tol {profile_tol:.3e}, failing: {:?}",
                report.failures().iter().map(|c| &c.name).collect::<Vec<_>>()
            )
        },
    });
    let weight_failures = weight.validate(&wave, 1e-12);
    suites.push(InvariantSuite {
        name: "weight_field".into(),
        pass: weight_failures.is_empty(),
        detail: weight_failures.join("; "),
    });
    let (ca, cb, cc) = lemma_coefficients(&wave);
    let min_coef = ca
        .iter()
        .chain(&cb)
        .chain(&cc)
        .fold(f64::INFINITY, |a, &b| a.min(b));
    suites.push(InvariantSuite {
        name: "coefficient_positivity".into(),
        pass: min_coef > 0.0,
        detail: format!("min coefficient {min_coef:.6e}"),
    });

    let keep = run_section.keep_snapshots || run_section.formulation == FormulationTag::AllThree;
    let mut runs = Vec::new();
    let mut cross = None;

    match run_section.formulation {
        FormulationTag::Perturbation => {
            let initial = Snapshot::Perturbation(init.state.clone());
            let outcome = persist_run(out_dir, &initial, &wave, &scheme, keep)?;
            runs.push(summarize_run("perturbation", init.m0, &outcome));
        }
        FormulationTag::PrimitiveNp => {
            let initial = Snapshot::Primitive(initial_primitive(&init, &wave, false));
            let outcome = persist_run(out_dir, &initial, &wave, &scheme, keep)?;
            runs.push(summarize_run("primitive_np", init.m0, &outcome));
        }
        FormulationTag::PrimitiveNc => {
            let initial = Snapshot::Primitive(initial_primitive(&init, &wave, true));
            let outcome = persist_run(out_dir, &initial, &wave, &scheme, keep)?;
            runs.push(summarize_run("primitive_nc", init.m0, &outcome));
        }
        FormulationTag::AllThree => {
            let pert_initial = Snapshot::Perturbation(init.state.clone());
            let np_initial = Snapshot::Primitive(initial_primitive(&init, &wave, false));
            let nc_initial = Snapshot::Primitive(initial_primitive(&init, &wave, true));
            let pert_out =
                persist_run(&out_dir.join("perturbation"), &pert_initial, &wave, &scheme, true)?;
            let np_out =
                persist_run(&out_dir.join("primitive_np"), &np_initial, &wave, &scheme, true)?;
            let nc_out =
                persist_run(&out_dir.join("primitive_nc"), &nc_initial, &wave, &scheme, true)?;
            cross = Some(cross_formulation_diffs(
                &pert_out, &np_out, &nc_out, &wave, out_dir,
            )?);
            runs.push(summarize_run("perturbation", init.m0, &pert_out));
            runs.push(summarize_run("primitive_np", init.m0, &np_out));
            runs.push(summarize_run("primitive_nc", init.m0, &nc_out));
        }
    }

    // buffer and weight-support witnesses from the recorded rows are only
    // meaningful for the perturbation formulation
    let buffer_ok = runs
        .iter()
        .filter(|r| r.formulation == "perturbation")
        .all(|r| !r.blow_up);
    suites.push(InvariantSuite {
        name: "runs_completed".into(),
        pass: runs.iter().all(|r| !r.blow_up) && buffer_ok,
        detail: runs
            .iter()
            .map(|r| format!("{}: {}", r.formulation, r.failure.clone().unwrap_or_else(|| "ok".into())))
            .collect::<Vec<_>>()
            .join("; "),
    });

    let summary = ExperimentSummary {
        config_hash: hash,
        warnings,
        smallness_ok: smallness_satisfied(config.wave.s, config.grid.lambda),
        m0: init.m0,
        runs,
        cross_diffs: cross,
        suites,
    };
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    Ok(summary)
}

fn n_of(snapshot: &Snapshot, wave: &WaveTable) -> Result<Field> {
    match snapshot {
        Snapshot::Primitive(s) => Ok(s.n().clone()),
        Snapshot::Perturbation(s) => {
            let mut n = field::div(&s.phi1, &s.phi2, &s.grid)?;
            for i in 0..s.grid.nz {
                for j in 0..s.grid.ny {
                    n[(i, j)] += wave.n[i];
                }
            }
            Ok(n)
        }
    }
}

fn cross_formulation_diffs(
    pert: &RunOutcome,
    np: &RunOutcome,
    nc: &RunOutcome,
    wave: &WaveTable,
    out_dir: &Path,
) -> Result<CrossDiffs> {
    let mut rows = Vec::new();
    let mut worst = CrossDiffs {
        n_np_vs_nc: 0.0,
        n_pert_vs_np: 0.0,
        n_pert_vs_nc: 0.0,
    };
    for ((sp, pert_snap), ((snp, np_snap), (snc, nc_snap))) in pert
        .snapshots
        .iter()
        .zip(np.snapshots.iter().zip(nc.snapshots.iter()))
    {
        if sp != snp || sp != snc {
            break; // a failed run truncated its trajectory
        }
        let n_pert = n_of(pert_snap, wave)?;
        let n_np = n_of(np_snap, wave)?;
        let n_nc = n_of(nc_snap, wave)?;
        let sup_diff = |a: &Field, b: &Field| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let d1 = sup_diff(&n_np, &n_nc);
        let d2 = sup_diff(&n_pert, &n_np);
        let d3 = sup_diff(&n_pert, &n_nc);
        worst.n_np_vs_nc = worst.n_np_vs_nc.max(d1);
        worst.n_pert_vs_np = worst.n_pert_vs_np.max(d2);
        worst.n_pert_vs_nc = worst.n_pert_vs_nc.max(d3);
        rows.push((pert_snap.t(), d1, d2, d3));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(out_dir.join("cross_diff.csv"))?);
    writeln!(out, "t,n_np_vs_nc,n_pert_vs_np,n_pert_vs_nc")?;
    for (t, d1, d2, d3) in rows {
        writeln!(out, "{t:.16e},{d1:.16e},{d2:.16e},{d3:.16e}")?;
    }
    out.flush()?;
    Ok(worst)
}

// ---------------------------------------------------------------------------
// sweeps

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub axis: String,
    pub value: f64,
    pub status: String,
    pub m0: Option<f64>,
    pub sup_m: Option<f64>,
    pub c0_empirical: Option<f64>,
    pub drift_sup: Option<f64>,
    pub gradpsi_decay_rate: Option<f64>,
    pub smallness_ok: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    /// Least-squares order of `drift_sup` against the refinement factor
    /// (refinement axis only).
    pub fitted_drift_order: Option<f64>,
}

fn derive_point(config: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut point = config.clone();
    match axis {
        SweepAxis::Amplitude => {
            let p = point
                .perturbation
                .as_mut()
                .ok_or_else(|| Error::Config("amplitude sweep needs [perturbation]".into()))?;
            p.amplitude = value;
        }
        SweepAxis::Eps => point.wave.eps = value,
        SweepAxis::Lambda => point.grid.lambda = value,
        SweepAxis::Refinement => {
            let r = value.round();
            if (value - r).abs() > 1e-9 || r < 1.0 {
                return Err(Error::Config(format!(
                    "refinement factor must be a positive integer, got {value}"
                )));
            }
            let r = r as usize;
            point.grid.nz = (point.grid.nz - 1) * r + 1;
            point.grid.ny *= r;
            if let Some(s) = point.scheme.as_mut() {
                s.dt /= r as f64;
                s.snapshot_stride *= r;
            }
        }
    }
    Ok(point)
}

/// Run every sweep point (in parallel, bounded by `workers`), emitting per
/// point directories plus `sweep.csv` and `sweep_summary.json`. A failing
/// point records its error and never disturbs its siblings.
pub fn sweep(config: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<SweepSummary> {
    let section = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("missing [sweep] section".into()))?;
    if section.values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let axis_name = format!("{:?}", section.axis).to_lowercase();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let rows: Vec<SweepRow> = pool.install(|| {
        section
            .values
            .par_iter()
            .enumerate()
            .map(|(index, &value)| {
                let dir = out_dir.join(format!("point_{index:03}"));
                let result = derive_point(config, section.axis, value)
                    .and_then(|point| run_experiment(&point, &dir));
                match result {
                    Ok(summary) => {
                        let lead = summary.runs.first();
                        SweepRow {
                            index,
                            axis: axis_name.clone(),
                            value,
                            status: if summary.any_blow_up() {
                                "blow_up".into()
                            } else {
                                "ok".into()
                            },
                            m0: Some(summary.m0),
                            sup_m: lead.and_then(|r| r.sup_m),
                            c0_empirical: lead.and_then(|r| r.c0_empirical),
                            drift_sup: lead.map(|r| r.drift_sup),
                            gradpsi_decay_rate: lead.and_then(|r| r.gradpsi_decay_rate),
                            smallness_ok: Some(summary.smallness_ok),
                        }
                    }
                    Err(e) => SweepRow {
                        index,
                        axis: axis_name.clone(),
                        value,
                        status: format!("error: {e}"),
                        m0: None,
                        sup_m: None,
                        c0_empirical: None,
                        drift_sup: None,
                        gradpsi_decay_rate: None,
                        smallness_ok: None,
                    },
                }
            })
            .collect()
    });

    let fitted = if section.axis == SweepAxis::Refinement {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.status == "ok")
            .filter_map(|r| r.drift_sup.map(|d| (r.value, d)))
            .filter(|(_, d)| *d > 0.0)
            .map(|(v, d)| (v.ln(), d.ln()))
            .collect();
        if pts.len() >= 2 {
            let n = pts.len() as f64;
            let sx: f64 = pts.iter().map(|p| p.0).sum();
            let sy: f64 = pts.iter().map(|p| p.1).sum();
            let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
            Some(-(n * sxy - sx * sy) / (n * sxx - sx * sx))
        } else {
            None
        }
    } else {
        None
    };

    let mut out = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep.csv"))?);
    writeln!(
        out,
        "index,axis,value,status,m0,sup_m,c0_empirical,drift_sup,gradpsi_decay_rate,smallness_ok"
    )?;
    for r in &rows {
        let fmt = |v: Option<f64>| v.map_or("".into(), |x| format!("{x:.16e}"));
        writeln!(
            out,
            "{},{},{:.16e},{},{},{},{},{},{},{}",
            r.index,
            r.axis,
            r.value,
            r.status.replace(',', ";"),
            fmt(r.m0),
            fmt(r.sup_m),
            fmt(r.c0_empirical),
            fmt(r.drift_sup),
            fmt(r.gradpsi_decay_rate),
            r.smallness_ok.map_or("".into(), |b| b.to_string()),
        )?;
    }
    out.flush()?;

    let summary = SweepSummary {
        axis: axis_name,
        rows,
        fitted_drift_order: fitted,
    };
    std::fs::write(
        out_dir.join("sweep_summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// invariant battery (the `check` verb)

/// Battery of structural invariants on the configured setup: profile checks,
/// operator identities on seeded smooth fields, transform round trips, norm
/// comparisons, and the Poincaré constant.
pub fn check_invariants(config: &ExperimentConfig, seed: u64) -> Result<Vec<InvariantSuite>> {
    use rand::Rng;
    use rand::SeedableRng;

    let grid = config.strip_grid()?;
    let (profile, wave) = build_wave(config, &grid)?;
    let weight = WeightField::from_wave(&wave);
    let mut suites = Vec::new();

    let profile_tol = achievable_profile_tol(config, &grid);
    let report = validate_profile(&profile, profile_tol);
    suites.push(InvariantSuite {
        name: "profile_validation".into(),
        pass: report.ok(),
        detail: format!(
            "{} checks at tol {profile_tol:.3e}, worst residual {:.3e}",
            report.checks.len(),
            report
                .checks
                .iter()
                .filter(|c| c.name.starts_with("relation_"))
                .map(|c| c.value)
                .fold(0.0, f64::max)
        ),
    });

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (nz, ny) = grid.shape();
    let mut random_smooth = |decay: f64| -> Field {
        let k = rng.gen_range(0..=1) as f64;
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp: f64 = rng.gen_range(0.5..1.5);
        let mut f = Field::zeros((nz, ny));
        for i in 0..nz {
            let z = grid.z(i);
            for j in 0..ny {
                let y = grid.y(j);
                f[(i, j)] = amp
                    * (-decay * z * z).exp()
                    * (k * 2.0 * std::f64::consts::PI * y / grid.lambda + phase).cos();
            }
        }
        f
    };

    // summation-by-parts duality on compactly supported fields: the interior
    // telescopes exactly, leaving boundary-tail and roundoff contributions
    let mut worst_duality = 0.0f64;
    for _ in 0..4 {
        let f = random_smooth(1.0);
        let g1 = random_smooth(0.8);
        let g2 = random_smooth(1.2);
        let (fz, fy) = field::grad(&f, &grid)?;
        let dv = field::div(&g1, &g2, &grid)?;
        let mut lhs_f = Field::zeros((nz, ny));
        let mut rhs_f = Field::zeros((nz, ny));
        for i in 0..nz {
            for j in 0..ny {
                lhs_f[(i, j)] = fz[(i, j)] * g1[(i, j)] + fy[(i, j)] * g2[(i, j)];
                rhs_f[(i, j)] = f[(i, j)] * dv[(i, j)];
            }
        }
        let lhs = field::integrate(&lhs_f, &grid)?;
        let rhs = -field::integrate(&rhs_f, &grid)?;
        worst_duality = worst_duality.max((lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1.0));
    }
    let dual_tol = 1e-8;
    suites.push(InvariantSuite {
        name: "operator_duality".into(),
        pass: worst_duality < dual_tol,
        detail: format!("relative defect {worst_duality:.3e} (tol {dual_tol:.3e})"),
    });

    // Cole-Hopf round trip, tolerance from the battery's derivative bounds:
    // cumulative trapezoid error along z and y paths of length 2 l_z and lambda
    let f = random_smooth(1.0);
    let (p1, p2) = cole_hopf_forward(&f, &grid)?;
    let back = cole_hopf_inverse(&p1, &p2, f[(nz - 1, 0)], &grid, CURL_TOLERANCE)?;
    let mut worst_rt = 0.0f64;
    for i in 0..nz {
        for j in 0..ny {
            worst_rt = worst_rt.max((back[(i, j)] - f[(i, j)]).abs());
        }
    }
    let omega = 2.0 * std::f64::consts::PI / grid.lambda;
    let third_z = 1.5 * 4.2 * 1.2f64.powf(1.5);
    let third_y = 1.5 * omega.powi(3);
    let rt_tol = 4.0
        * (grid.dz * grid.dz / 6.0 * third_z * 2.0 * grid.l_z
            + grid.dy * grid.dy / 12.0 * third_y * grid.lambda);
    suites.push(InvariantSuite {
        name: "cole_hopf_round_trip".into(),
        pass: worst_rt < rt_tol,
        detail: format!("max error {worst_rt:.3e} (tol {rt_tol:.3e})"),
    });

    // norm comparison against the weight floor
    let mut comp_ok = true;
    for k in 0..=3usize {
        let plain = weighted_sobolev_norm(&[&f], k, None, &grid)?;
        let weighted = weighted_sobolev_norm(&[&f], k, Some(&weight.w), &grid)?;
        if plain > weight.n_minus * weighted * (1.0 + 1e-10) {
            comp_ok = false;
        }
    }
    suites.push(InvariantSuite {
        name: "norm_weight_comparison".into(),
        pass: comp_ok,
        detail: "||f||_{H^k}^2 <= (1+eps) s^2 ||f||_{H^k_w}^2".into(),
    });

    let poincare = poincare_check(grid.lambda, grid.ny, 100, seed)?;
    suites.push(InvariantSuite {
        name: "poincare_battery".into(),
        pass: poincare.worst_ratio <= POINCARE_CONSTANT + 1e-6
            && (poincare.extremal_ratio - POINCARE_CONSTANT).abs() < 1e-6,
        detail: format!(
            "worst ratio {:.9} vs C_p {:.9}",
            poincare.worst_ratio, poincare.c_p
        ),
    });

    Ok(suites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn config(amplitude: f64) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            r#"
[wave]
s = 1.0
eps = 0.0

[grid]
l_z = 10.0
nz = 96
lambda = 0.3
ny = 8

[scheme]
dt = 0.01
t_end = 0.1
snapshot_stride = 5

[perturbation]
family = "gaussian_bump"
amplitude = {amplitude}
sigma_z = 1.0

[run]
formulation = "perturbation"
"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_amplitude_gives_zero_m0() {
        let cfg = config(0.0);
        let grid = cfg.strip_grid().unwrap();
        let (_, wave) = build_wave(&cfg, &grid).unwrap();
        let init =
            build_initial_perturbation(cfg.perturbation.as_ref().unwrap(), &grid, &wave).unwrap();
        assert_eq!(init.m0, 0.0);
        assert_eq!(init.state.sup(), 0.0);
    }

    #[test]
    fn m0_scales_quadratically_with_amplitude() {
        let cfg = config(1e-3);
        let grid = cfg.strip_grid().unwrap();
        let (_, wave) = build_wave(&cfg, &grid).unwrap();
        let p = cfg.perturbation.as_ref().unwrap();
        let m1 = build_initial_perturbation(p, &grid, &wave).unwrap().m0;
        let mut p2 = p.clone();
        p2.amplitude *= 2.0;
        let m2 = build_initial_perturbation(&p2, &grid, &wave).unwrap().m0;
        assert!(
            ((m2 / m1) - 4.0).abs() < 1e-12,
            "quadratic homogeneity: ratio {}",
            m2 / m1
        );
    }

    #[test]
    fn y_mode_zero_is_planar() {
        let cfg = config(1e-3);
        let grid = cfg.strip_grid().unwrap();
        let (_, wave) = build_wave(&cfg, &grid).unwrap();
        let mut p = cfg.perturbation.as_ref().unwrap().clone();
        p.family = PerturbationFamily::YMode;
        p.y_mode_k = 0;
        let init = build_initial_perturbation(&p, &grid, &wave).unwrap();
        for f in init.state.fields() {
            for i in 0..grid.nz {
                for j in 1..grid.ny {
                    assert_eq!(f[(i, j)], f[(i, 0)]);
                }
            }
        }
    }

    #[test]
    fn support_violation_is_detected() {
        let cfg = config(1e-3);
        let grid = cfg.strip_grid().unwrap();
        let (_, wave) = build_wave(&cfg, &grid).unwrap();
        let mut p = cfg.perturbation.as_ref().unwrap().clone();
        p.center_z = grid.l_z - 0.5; // envelope leaks into the buffer
        assert!(matches!(
            build_initial_perturbation(&p, &grid, &wave),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn zero_amplitude_experiment_summary() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_experiment(&config(0.0), dir.path()).unwrap();
        assert_eq!(summary.m0, 0.0);
        assert!(!summary.any_blow_up());
        assert!(summary.all_suites_pass(), "{:?}", summary.suites);
        assert!(dir.path().join("energy.csv").exists());
        assert!(dir.path().join("run.meta").exists());
        assert!(dir.path().join("summary.json").exists());
        // all recorded norms identically zero
        let report =
            crate::energy::EnergyReport::read_csv(&dir.path().join("energy.csv")).unwrap();
        assert!(report.rows.iter().all(|r| r.m == 0.0));
    }

    #[test]
    fn determinism_bit_identical_energy_csv() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        run_experiment(&config(1e-3), dir1.path()).unwrap();
        run_experiment(&config(1e-3), dir2.path()).unwrap();
        let a = std::fs::read(dir1.path().join("energy.csv")).unwrap();
        let b = std::fs::read(dir2.path().join("energy.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_isolates_failures() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(1e-3);
        cfg.sweep = Some(crate::config::SweepSection {
            axis: SweepAxis::Eps,
            values: vec![0.05, -1.0, 0.1], // the middle point is invalid
        });
        let summary = sweep(&cfg, dir.path(), 2).unwrap();
        assert_eq!(summary.rows.len(), 3);
        assert_eq!(summary.rows[0].status, "ok");
        assert!(summary.rows[1].status.starts_with("error"));
        assert_eq!(summary.rows[2].status, "ok");
        assert!(dir.path().join("sweep.csv").exists());
        assert!(dir.path().join("point_000/summary.json").exists());
    }

    #[test]
    fn check_battery_passes_on_sane_config() {
        let suites = check_invariants(&config(1e-3), 11).unwrap();
        for s in &suites {
            assert!(s.pass, "{}: {}", s.name, s.detail);
        }
    }
}
