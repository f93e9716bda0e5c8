//! Evolution invariants beyond the acceptance gate: linearization
//! consistency, cross-formulation agreement under refinement, transversal
//! mode ordering, the diffusion-free stability run, and the summary
//! arithmetic being recomputable from the energy CSV.

use kswave::config::{ExperimentConfig, PerturbationFamily, PerturbationSection};
use kswave::energy::EnergyReport;
use kswave::evolve::{run, SchemeConfig};
use kswave::experiment::{build_initial_perturbation, initial_primitive, run_experiment};
use kswave::grid::StripGrid;
use kswave::state::Snapshot;
use kswave::wave::{WaveParams, WaveTable};

fn spec(amplitude: f64, k: usize, sigma: f64) -> PerturbationSection {
    PerturbationSection {
        family: if k == 0 {
            PerturbationFamily::GaussianBump
        } else {
            PerturbationFamily::YMode
        },
        amplitude,
        center_z: 0.0,
        sigma_z: sigma,
        y_mode_k: k,
        file: None,
    }
}

fn cfg(dt: f64, t_end: f64, stride: usize) -> SchemeConfig {
    SchemeConfig {
        dt,
        t_end,
        snapshot_stride: stride,
        ..SchemeConfig::default()
    }
}

fn final_fields(out: &kswave::evolve::RunOutcome) -> Vec<kswave::field::Field> {
    match &out.final_state {
        Snapshot::Perturbation(s) => vec![s.phi1.clone(), s.phi2.clone(), s.psi.clone()],
        Snapshot::Primitive(s) => s.field_list().into_iter().cloned().collect(),
    }
}

#[test]
fn linearization_consistency() {
    // the nonlinearity is quadratic: sol(2a) - 2 sol(a) shrinks like a^2
    let grid = StripGrid::new(12.0, 128, 0.3, 8).unwrap();
    let params = WaveParams::new(1.0, 0.05, 1.0).unwrap();
    let wave = WaveTable::for_grid(&params, &grid).unwrap();
    let scheme = cfg(0.01, 0.5, 1000);

    let solve = |a: f64| -> Vec<kswave::field::Field> {
        let init = build_initial_perturbation(&spec(a, 0, 1.5), &grid, &wave).unwrap();
        let out = run(
            &Snapshot::Perturbation(init.state.clone()),
            &wave,
            &scheme,
            false,
            |_, _, _| Ok(()),
        )
        .unwrap();
        assert!(out.failure.is_none());
        final_fields(&out)
    };

    let defect = |a: f64| -> f64 {
        let big = solve(2.0 * a);
        let small = solve(a);
        big.iter()
            .zip(&small)
            .flat_map(|(fb, fs)| fb.iter().zip(fs.iter()).map(|(b, s)| (b - 2.0 * s).abs()))
            .fold(0.0, f64::max)
    };

    let d3 = defect(1e-3);
    let d4 = defect(1e-4);
    assert!(
        d4 * 5.0 <= d3 && d3 > 0.0,
        "quadratic defect did not shrink linearly in amplitude: {d3:.3e} -> {d4:.3e}"
    );
}

#[test]
fn formulation_equivalence_converges() {
    // pairwise n-field distance at fixed time shrinks at scheme order
    let distance = |nz: usize, ny: usize, dt: f64| -> f64 {
        let grid = StripGrid::new(12.0, nz, 0.3, ny).unwrap();
        let params = WaveParams::new(1.0, 0.05, 1.0).unwrap();
        let wave = WaveTable::for_grid(&params, &grid).unwrap();
        let scheme = cfg(dt, 0.5, 1000);
        let init = build_initial_perturbation(&spec(2e-3, 1, 1.5), &grid, &wave).unwrap();

        let pert_out = run(
            &Snapshot::Perturbation(init.state.clone()),
            &wave,
            &scheme,
            false,
            |_, _, _| Ok(()),
        )
        .unwrap();
        let np_out = run(
            &Snapshot::Primitive(initial_primitive(&init, &wave, false)),
            &wave,
            &scheme,
            false,
            |_, _, _| Ok(()),
        )
        .unwrap();
        let nc_out = run(
            &Snapshot::Primitive(initial_primitive(&init, &wave, true)),
            &wave,
            &scheme,
            false,
            |_, _, _| Ok(()),
        )
        .unwrap();
        for out in [&pert_out, &np_out, &nc_out] {
            assert!(out.failure.is_none());
        }

        // n from the perturbation run via reconstruction
        let Snapshot::Perturbation(pert_final) = &pert_out.final_state else {
            unreachable!()
        };
        let (prim, _) = kswave::state::reconstruct_primitive(pert_final, &wave).unwrap();
        let n_pert = prim.n().clone();
        let n_np = match &np_out.final_state {
            Snapshot::Primitive(s) => s.n().clone(),
            _ => unreachable!(),
        };
        let n_nc = match &nc_out.final_state {
            Snapshot::Primitive(s) => s.n().clone(),
            _ => unreachable!(),
        };
        let sup = |a: &kswave::field::Field, b: &kswave::field::Field| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        sup(&n_pert, &n_np).max(sup(&n_np, &n_nc)).max(sup(&n_pert, &n_nc))
    };

    let coarse = distance(97, 8, 2e-2);
    let fine = distance(193, 16, 1e-2);
    assert!(
        fine * 3.0 <= coarse,
        "cross-formulation distance did not converge: {coarse:.3e} -> {fine:.3e}"
    );
}

#[test]
fn higher_transversal_modes_decay_faster() {
    let grid = StripGrid::new(12.0, 128, 0.35, 16).unwrap();
    let params = WaveParams::new(1.0, 0.05, 1.0).unwrap();
    let wave = WaveTable::for_grid(&params, &grid).unwrap();
    let scheme = cfg(2e-4, 0.05, 25);

    let rate_of = |k: usize| -> f64 {
        let init = build_initial_perturbation(&spec(1e-4, k, 1.5), &grid, &wave).unwrap();
        let out = run(
            &Snapshot::Perturbation(init.state.clone()),
            &wave,
            &scheme,
            false,
            |_, _, _| Ok(()),
        )
        .unwrap();
        assert!(out.failure.is_none());
        let series = out.report.dy_psi_series();
        kswave::experiment::fit_decay_rate(&series).expect("fit")
    };

    let r1 = rate_of(1);
    let r2 = rate_of(2);
    assert!(
        r2 > 2.0 * r1 && r1 > 0.0,
        "diffusive mode ordering violated: rate(k=1) = {r1:.3}, rate(k=2) = {r2:.3}"
    );
}

#[test]
fn diffusion_free_perturbation_run_decays() {
    // eps = 0: no chemical diffusion anywhere; the cell-equation dissipation
    // still damps the perturbation, witnessed by the saturating accumulator
    let grid = StripGrid::new(14.0, 160, 0.3, 8).unwrap();
    let params = WaveParams::new(1.0, 0.0, 1.0).unwrap();
    let wave = WaveTable::for_grid(&params, &grid).unwrap();
    let scheme = cfg(5e-3, 8.0, 40);
    let init = build_initial_perturbation(&spec(1e-3, 0, 1.5), &grid, &wave).unwrap();
    let out = run(
        &Snapshot::Perturbation(init.state.clone()),
        &wave,
        &scheme,
        false,
        |_, _, _| Ok(()),
    )
    .unwrap();
    assert!(out.failure.is_none(), "{:?}", out.failure);

    let rows = &out.report.rows;
    let m_final = rows.last().unwrap().m;
    assert!(m_final.is_finite() && m_final > 0.0);
    // gradient-accumulator increments over successive time windows shrink
    let quarter = rows.len() / 4;
    let inc = |a: usize, b: usize| rows[b].diss_phi - rows[a].diss_phi;
    let first = inc(0, quarter);
    let last = inc(3 * quarter, rows.len() - 1);
    assert!(
        last < 0.5 * first,
        "dissipation increments not decaying: {first:.3e} then {last:.3e}"
    );
}

#[test]
fn all_three_experiment_with_cross_series() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_toml_str(
        r#"
[wave]
s = 1.0
eps = 0.05

[grid]
l_z = 12.0
nz = 128
lambda = 0.3
ny = 8

[scheme]
dt = 0.01
t_end = 0.3
snapshot_stride = 10

[perturbation]
family = "gaussian_bump"
amplitude = 1e-3
sigma_z = 1.5

[run]
formulation = "all_three"
"#,
    )
    .unwrap();
    let summary = run_experiment(&config, dir.path()).unwrap();
    assert_eq!(summary.runs.len(), 3);
    assert!(!summary.any_blow_up());
    let cross = summary.cross_diffs.expect("cross diffs for all_three");
    // scheme-order agreement at these resolutions
    assert!(cross.n_np_vs_nc < 1e-4, "np vs nc: {}", cross.n_np_vs_nc);
    assert!(dir.path().join("cross_diff.csv").exists());
    for sub in ["perturbation", "primitive_np", "primitive_nc"] {
        assert!(dir.path().join(sub).join("energy.csv").exists());
        assert!(dir.path().join(sub).join("snap_000000.fld").exists());
    }
}

#[test]
fn summary_c0_recomputable_from_energy_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_toml_str(
        r#"
[wave]
s = 1.0
eps = 0.05

[grid]
l_z = 12.0
nz = 128
lambda = 0.3
ny = 8

[scheme]
dt = 0.01
t_end = 0.5
snapshot_stride = 5

[perturbation]
family = "gaussian_bump"
amplitude = 2e-3
sigma_z = 1.5

[run]
formulation = "perturbation"
"#,
    )
    .unwrap();
    let summary = run_experiment(&config, dir.path()).unwrap();
    let run_summary = &summary.runs[0];
    let report = EnergyReport::read_csv(&dir.path().join("energy.csv")).unwrap();
    let m_col: Vec<f64> = report.rows.iter().map(|r| r.m).collect();
    let recomputed = m_col.iter().fold(0.0f64, |a, &b| a.max(b)) / m_col[0];
    let c0 = run_summary.c0_empirical.expect("perturbation run has C0");
    assert!(
        ((c0 - recomputed) / recomputed).abs() < 1e-12,
        "summary C0 {c0} vs CSV-recomputed {recomputed}"
    );
}
