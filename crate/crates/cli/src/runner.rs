//! Executes a [`RunConfig`] and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use nelson_fk::analysis::{
    dispersion_scan, evolution_check, fk_vs_oracle, flow_check, ground_state, log_slope, oracle_expm,
    positivity_audit, positivity_audit_estimate, renorm_scan, trotter_check, FkOptions, FlowMode, RenormEstimator,
};
use nelson_fk::fock::{binomial, enumerate_basis_capped, FockBasis};
use nelson_fk::io::{basis_legend_csv, matrix_csv, table_csv};
use nelson_fk::levy::{empirical_char_test, ig_moment_test, LevyProcessSpec};
use nelson_fk::model::{build_hamiltonian, renorm_energy, Model, RenormMethod};
use nelson_fk::pathint::{mc_semigroup, McParams};

use crate::config::{AuditSource, Experiment, FlowModeConfig, RenormEstimatorConfig, RunConfig};
use crate::error::CliError;

/// Outcome of a numerical test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 2,
        }
    }

    fn of(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// Files written by a run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub output_dir: PathBuf,
    pub files: Vec<String>,
}

struct Artifacts {
    report: Value,
    tables: Vec<(String, String)>,
    pass: bool,
}

impl Artifacts {
    fn new(report: impl Serialize, pass: bool) -> Self {
        Self { report: serde_json::to_value(report).expect("reports serialize"), tables: vec![], pass }
    }

    fn table(mut self, name: &str, body: String) -> Self {
        self.tables.push((name.to_string(), body));
        self
    }
}

fn fmt<T: ToString>(x: T) -> String {
    x.to_string()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Dense-matrix memory estimate: eight complex `D × D` work matrices.
fn dense_bytes(dim: u128) -> u128 {
    8 * 16 * dim * dim
}

fn basis_dim(modes: usize, n: usize) -> u128 {
    binomial((modes + n) as u64, n as u64).unwrap_or(u128::MAX)
}

fn check_caps(cfg: &RunConfig, model: &Model) -> Result<(), CliError> {
    let modes = model.num_modes();
    let mut dims = vec![basis_dim(modes, cfg.max_bosons)];
    match &cfg.experiment {
        Experiment::FkVsOracle { extra_bosons, .. } => dims.push(basis_dim(modes, cfg.max_bosons + extra_bosons)),
        Experiment::FlowCheck { mode: FlowModeConfig::Mc, extra_bosons, .. } => {
            dims.push(basis_dim(modes, cfg.max_bosons + extra_bosons))
        }
        Experiment::RenormScan { cutoffs, refinement, estimator, .. } => {
            for &l in cutoffs {
                let m = refinement.spec_at(&cfg.model, l)?.build()?.num_modes();
                let n = if matches!(estimator, RenormEstimatorConfig::Dense) { cfg.max_bosons } else { 0 };
                dims.push(basis_dim(m, n));
            }
        }
        Experiment::ValidateLevy { .. } => dims.clear(),
        _ => {}
    }
    for &d in &dims {
        if d > cfg.limits.max_basis as u128 {
            return Err(nelson_fk::Error::BasisTooLarge { size: d, cap: cfg.limits.max_basis }.into());
        }
        let bytes = dense_bytes(d);
        if bytes > cfg.limits.max_memory_bytes as u128 {
            return Err(nelson_fk::Error::MemoryLimit { bytes, limit: cfg.limits.max_memory_bytes as u128 }.into());
        }
    }
    Ok(())
}

fn basis(cfg: &RunConfig, model: &Model) -> Result<Arc<FockBasis>, CliError> {
    Ok(enumerate_basis_capped(model.num_modes(), cfg.max_bosons, cfg.limits.max_basis)?)
}

fn mc(cfg: &RunConfig, n_paths: usize, steps: usize) -> McParams {
    // the runner's pool is current while experiments execute
    McParams::new(n_paths, steps, cfg.seed)
}

fn estimate_tables(est: &nelson_fk::pathint::SemigroupEstimate) -> Vec<(String, String)> {
    let (re, im, se) = est.to_csv();
    vec![("mean_re.csv".into(), re), ("mean_im.csv".into(), im), ("std_err.csv".into(), se)]
}

fn execute(cfg: &RunConfig, model: &Model) -> Result<Artifacts, CliError> {
    let levy_report = |spec: &LevyProcessSpec, ks: &[Vec<f64>], times: &[f64], n: usize, z_max: f64| -> Result<Artifacts, CliError> {
        let reports = ks
            .iter()
            .map(|k| empirical_char_test(spec, k, times, n, cfg.seed))
            .collect::<Result<Vec<_>, _>>()?;
        let ig = match *spec {
            LevyProcessSpec::RelativisticSR { mass, .. } if mass > 0.0 => Some(ig_moment_test(mass, 1.0, 1.0, n, cfg.seed)?),
            _ => None,
        };
        let max_z = reports.iter().map(|r| r.max_abs_z()).fold(0.0, f64::max);
        let ig_ok = ig.map_or(true, |r| r.mean_z <= z_max && r.laplace_z <= z_max && r.min_sample > 0.0);
        let mut rows = vec![];
        for r in &reports {
            for row in &r.rows {
                rows.push(vec![join(&r.k), fmt(row.time), fmt(row.mean.re), fmt(row.mean.im), fmt(row.std_err), fmt(row.target), fmt(row.z)]);
            }
        }
        let pass = max_z <= z_max && ig_ok;
        Ok(Artifacts::new(json!({ "process": spec, "max_abs_z": max_z, "z_max": z_max, "char_tests": reports, "ig": ig }), pass)
            .table("char_test.csv", table_csv(&["k", "t", "mean_re", "mean_im", "std_err", "target", "z"], &rows)))
    };

    Ok(match &cfg.experiment {
        Experiment::ValidateLevy { ks, times, n_samples, z_max } => levy_report(&model.levy(), ks, times, *n_samples, *z_max)?,
        Experiment::BuildHamiltonian { momentum } => {
            let b = basis(cfg, model)?;
            let h = build_hamiltonian(model, momentum, &b)?;
            let gs = ground_state(&h, None)?;
            let m = h.to_dense();
            let n = m.nrows();
            Artifacts::new(
                json!({
                    "dim": n,
                    "hermitian": h.is_hermitian(),
                    "ground_energy": gs.energy,
                    "gap": gs.gap,
                    "perron": gs.perron,
                    "e_lambda": renorm_energy(model, RenormMethod::GridSum)?,
                    "momentum": momentum,
                }),
                true,
            )
            .table("hamiltonian_re.csv", matrix_csv(n, |i, j| m[(i, j)].re))
            .table("hamiltonian_im.csv", matrix_csv(n, |i, j| m[(i, j)].im))
        }
        Experiment::McRun { momentum, window, n_paths, steps, profile } => {
            let b = basis(cfg, model)?;
            let prof = profile.build(model)?;
            let est = mc_semigroup(model, &prof, &b, momentum, (window[0], window[1]), &mc(cfg, *n_paths, *steps))?;
            let mut a = Artifacts::new(est.meta(), true);
            a.tables = estimate_tables(&est);
            a
        }
        Experiment::FkVsOracle { momentum, t, n_paths, steps, extra_bosons, negative_control, z_max } => {
            let b = basis(cfg, model)?;
            let opts = FkOptions { extra_bosons: *extra_bosons, negative_control: *negative_control, z_max: *z_max };
            let r = fk_vs_oracle(model, momentum, *t, &b, &mc(cfg, *n_paths, *steps), &opts)?;
            let rows: Vec<Vec<String>> = r
                .entries
                .iter()
                .map(|e| {
                    vec![
                        fmt(e.row),
                        fmt(e.col),
                        fmt(e.oracle[0]),
                        fmt(e.oracle[1]),
                        fmt(e.estimate[0]),
                        fmt(e.estimate[1]),
                        fmt(e.std_err),
                        fmt(e.quadrature_bias),
                        fmt(e.z_refined),
                        fmt(e.pass),
                    ]
                })
                .collect();
            let pass = r.pass;
            Artifacts::new(&r, pass).table(
                "entries.csv",
                table_csv(
                    &["row", "col", "oracle_re", "oracle_im", "mean_re", "mean_im", "std_err", "quadrature_bias", "z_refined", "pass"],
                    &rows,
                ),
            )
        }
        Experiment::PositivityAudit { momentum, t, source, tolerance, n_paths, steps, expect } => {
            let b = basis(cfg, model)?;
            let (report, tables) = match source {
                AuditSource::Oracle => {
                    let s = oracle_expm(&build_hamiltonian(model, momentum, &b)?, *t)?;
                    let m = s.to_dense();
                    let n = m.nrows();
                    (positivity_audit(&s, *tolerance, &model.fingerprint()), vec![("semigroup.csv".to_string(), matrix_csv(n, |i, j| m[(i, j)].re))])
                }
                AuditSource::Mc => {
                    let prof = nelson_fk::pathint::TimeProfile::nelson(model);
                    let params = mc(cfg, n_paths.unwrap_or(0), steps.unwrap_or(0));
                    let est = mc_semigroup(model, &prof, &b, momentum, (0.0, *t), &params)?;
                    (positivity_audit_estimate(&est, *tolerance), estimate_tables(&est))
                }
            };
            let pass = expect.map_or(true, |e| e == report.classification);
            let mut a = Artifacts::new(json!({ "audit": report, "expect": expect, "t": t, "momentum": momentum }), pass);
            a.tables = tables;
            a
        }
        Experiment::DispersionScan { momenta, t_power } => {
            let b = basis(cfg, model)?;
            let r = dispersion_scan(model, momenta, &b, *t_power)?;
            let rows: Vec<Vec<String>> =
                r.rows.iter().map(|row| vec![join(&row.momentum), fmt(row.energy), fmt(row.gap), fmt(row.perron)]).collect();
            Artifacts::new(&r, true).table("dispersion.csv", table_csv(&["momentum", "energy", "gap", "perron"], &rows))
        }
        Experiment::RenormScan { cutoffs, refinement, momentum, t, estimator } => {
            let est = match *estimator {
                RenormEstimatorConfig::Dense => RenormEstimator::Dense { max_bosons: cfg.max_bosons },
                RenormEstimatorConfig::VacuumMc { n_paths, steps } => RenormEstimator::VacuumMc { mc: mc(cfg, n_paths, steps) },
            };
            let r = renorm_scan(&cfg.model, cutoffs, *refinement, momentum, *t, est)?;
            let slope = log_slope(&cfg.model.particle, &cfg.model.boson, &cfg.model.coupling, cfg.model.d, cutoffs).ok();
            let rows: Vec<Vec<String>> = r
                .rows
                .iter()
                .map(|row| {
                    vec![
                        fmt(row.cutoff),
                        fmt(row.modes),
                        fmt(row.e_lambda),
                        fmt(row.e_lambda_radial),
                        fmt(row.e0),
                        fmt(row.renormalized),
                        fmt(row.std_err),
                        row.difference.map(fmt).unwrap_or_default(),
                    ]
                })
                .collect();
            let pass = r.cauchy;
            Artifacts::new(json!({ "scan": r, "log_slope": slope }), pass).table(
                "renorm.csv",
                table_csv(&["cutoff", "modes", "e_lambda", "e_lambda_radial", "e0", "e0_minus_e_lambda", "std_err", "difference"], &rows),
            )
        }
        Experiment::TrotterCheck { p1, p2, theta1, theta2, window, n_list } => {
            let b = basis(cfg, model)?;
            let r = trotter_check(model, p1, p2, theta1, theta2, (window[0], window[1]), n_list, &b)?;
            let rows: Vec<Vec<String>> = r
                .n_values
                .iter()
                .zip(&r.errors)
                .enumerate()
                .map(|(i, (n, e))| vec![fmt(n), fmt(e), r.ratios.get(i.wrapping_sub(1)).map(|x| fmt(*x)).unwrap_or_default()])
                .collect();
            let pass = r.monotone;
            Artifacts::new(&r, pass).table("trotter.csv", table_csv(&["n", "error", "ratio_to_previous"], &rows))
        }
        Experiment::FlowCheck { momentum, times, mode, profile, n_paths, steps, extra_bosons } => {
            let b = basis(cfg, model)?;
            let prof = profile.build(model)?;
            let mode = match mode {
                FlowModeConfig::Oracle => FlowMode::Oracle,
                FlowModeConfig::Mc => FlowMode::Mc {
                    mc: mc(cfg, n_paths.unwrap_or(0), steps.unwrap_or(0)),
                    extra_bosons: *extra_bosons,
                },
            };
            let r = flow_check(model, &prof, momentum, (times[0], times[1], times[2]), mode, &b)?;
            let pass = r.pass;
            Artifacts::new(&r, pass)
        }
        Experiment::EvolutionCheck { momentum, window, deltas, profile, min_order } => {
            let b = basis(cfg, model)?;
            let prof = profile.build(model)?;
            let r = evolution_check(model, &prof, momentum, (window[0], window[1]), deltas, &b)?;
            let rows: Vec<Vec<String>> = r.deltas.iter().zip(&r.residuals).map(|(d, res)| vec![fmt(d), fmt(res)]).collect();
            let pass = r.fitted_order >= *min_order && r.initial_defect <= 1e-12;
            Artifacts::new(&r, pass).table("evolution.csv", table_csv(&["delta", "residual"], &rows))
        }
    })
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// Runs the configured experiment and writes `result.json`, tables, the basis
/// legend and `manifest.json` into the output directory.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let model = cfg.model.build()?;
    check_caps(cfg, &model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("workers: {e}")))?;
    let artifacts = pool.install(|| execute(cfg, &model))?;

    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: cfg.output_dir.clone(), source })?;
    let status = Status::of(artifacts.pass);
    let result = json!({
        "kind": cfg.experiment.kind(),
        "status": status,
        "seed": cfg.seed,
        "model": cfg.model,
        "max_bosons": cfg.max_bosons,
        "report": artifacts.report,
    });
    let mut files = vec!["result.json".to_string()];
    write(&dir, "result.json", &serde_json::to_string_pretty(&result).expect("json"))?;
    for (name, body) in &artifacts.tables {
        write(&dir, name, body)?;
        files.push(name.clone());
    }
    if !matches!(cfg.experiment, Experiment::ValidateLevy { .. }) {
        let b = enumerate_basis_capped(model.num_modes(), cfg.max_bosons, cfg.limits.max_basis)?;
        write(&dir, "basis.csv", &basis_legend_csv(&b, Some(model.grid())))?;
        files.push("basis.csv".into());
    }
    let manifest = json!({
        "tool": "nelson-fk",
        "version": env!("CARGO_PKG_VERSION"),
        "library_version": nelson_fk::VERSION,
        "config": cfg,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "status": status,
        "exit_code": status.exit_code(),
        "files": files,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    write(&dir, "manifest.json", &serde_json::to_string_pretty(&manifest).expect("json"))?;
    files.push("manifest.json".into());
    Ok(Outcome { status, output_dir: dir, files })
}
