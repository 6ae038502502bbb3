//! Orchestration of one experiment: diagnostics, integration, outputs.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::output::{
    snapshot_file, true_kernel_file, write_timeseries, Diagnostics, FinalErrors, Manifest,
    PeSummary, RunStatus, StepCounts, ERRORS_FILE, PE_SCAN_FILE, PE_SIGNAL_FILE,
};
use crate::coupled::{CoupledState, CoupledSystem};
use crate::error::{Error, Result};
use crate::grid::{write_kernel_csv, CircleGrid, KernelMatrix, PowerIteration};
use crate::integrator::{integrate_with, StepControl, StepStats};
use crate::observer::{gain_condition, ErrorRecord, GainCondition, ObserverState};
use crate::pe::{
    pe_scan, write_pe_scan, write_signal_csv, PeScan, SignalTrajectory, WeightOperator,
};
use crate::plant::PlantState;

/// Sample times closer than this (relative to `max(1, |t|)`) are merged.
const MERGE_TOL: f64 = 1e-9;

/// Initial activity of both populations.
const Z_INIT: f64 = 1.0;

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub diagnostics: GainCondition,
    pub records: Vec<ErrorRecord>,
    pub final_record: ErrorRecord,
    pub stats: StepStats,
    pub pe_scan: Option<PeScan>,
}

/// Dissipativity and gain-condition diagnostics, without integrating.
pub fn check_experiment(cfg: &ExperimentConfig) -> Result<GainCondition> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let truth = cfg.plant_params(&grid)?;
    gain_condition(
        &truth,
        &cfg.observer_gains()?,
        &grid,
        PowerIteration::default(),
    )
}

#[derive(Debug, Clone, Copy, Default)]
struct Roles {
    record: bool,
    pe: bool,
    /// Configured snapshot time, kept verbatim for the file name.
    snapshot: Option<f64>,
}

/// Every time at which the integrator has to stop, with what to do there.
#[derive(Debug, Default)]
struct Schedule {
    times: Vec<f64>,
    roles: Vec<Roles>,
}

/// `0, stride, 2 stride, ...` up to `end`, computed by multiplication so
/// that the points do not drift.
fn lattice(stride: f64, end: f64) -> Vec<f64> {
    let count = (end / stride * (1.0 + MERGE_TOL)).floor() as usize;
    (0..=count)
        .map(|k| k as f64 * stride)
        .filter(|&t| t <= end)
        .collect()
}

impl Schedule {
    fn build(cfg: &ExperimentConfig) -> Self {
        let tf = cfg.integration.t_final;
        let mut events: Vec<(f64, Roles)> = Vec::new();
        let mut records = lattice(cfg.integration.sample_stride, tf);
        if records.last().is_none_or(|&t| t < tf) {
            records.push(tf);
        }
        events.extend(records.into_iter().map(|t| {
            (
                t,
                Roles {
                    record: true,
                    ..Roles::default()
                },
            )
        }));
        let pe_end = cfg.pe.horizon.min(tf);
        events.extend(lattice(cfg.pe.sample_stride, pe_end).into_iter().map(|t| {
            (
                t,
                Roles {
                    pe: true,
                    ..Roles::default()
                },
            )
        }));
        events.extend(cfg.snapshots.times.iter().map(|&t| {
            (
                t,
                Roles {
                    snapshot: Some(t),
                    ..Roles::default()
                },
            )
        }));
        events.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut schedule = Self::default();
        for (t, r) in events {
            match schedule.times.last() {
                Some(&last) if t - last <= MERGE_TOL * last.abs().max(1.0) => {
                    let merged = schedule.roles.last_mut().unwrap();
                    merged.record |= r.record;
                    merged.pe |= r.pe;
                    merged.snapshot = merged.snapshot.or(r.snapshot);
                }
                _ => {
                    schedule.times.push(t);
                    schedule.roles.push(r);
                }
            }
        }
        schedule
    }
}

/// Mutable bookkeeping shared by the sample callback and the failure path.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    records: Vec<ErrorRecord>,
    pe_times: Vec<f64>,
    pe_values: Vec<Vec<f64>>,
}

impl Outputs {
    fn write_kernel(&mut self, name: String, w: &KernelMatrix, grid: &CircleGrid) -> Result<()> {
        write_kernel_csv(&self.dir.join(&name), w, grid)?;
        self.files.push(name);
        Ok(())
    }

    fn flush_series(&mut self) -> Result<Option<SignalTrajectory>> {
        write_timeseries(&self.records, &self.dir.join(ERRORS_FILE))?;
        self.files.push(ERRORS_FILE.into());
        if self.pe_times.is_empty() {
            return Ok(None);
        }
        let traj = SignalTrajectory::new(
            std::mem::take(&mut self.pe_times),
            std::mem::take(&mut self.pe_values),
        )?;
        write_signal_csv(&self.dir.join(PE_SIGNAL_FILE), &traj)?;
        self.files.push(PE_SIGNAL_FILE.into());
        Ok(Some(traj))
    }
}

/// Runs the configured experiment and writes all outputs into
/// `cfg.output.directory`.
///
/// Both populations start at 1, the observer states and kernel estimates at
/// 0. If integration fails, the samples gathered so far are still written and
/// the manifest is marked as failed before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let truth = cfg.plant_params(&grid)?;
    let gains = cfg.observer_gains()?;
    let (u1, u2) = cfg.inputs();
    let diagnostics = gain_condition(&truth, &gains, &grid, PowerIteration::default())?;

    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut manifest = Manifest {
        status: RunStatus::Running,
        error: None,
        files: Vec::new(),
        diagnostics: Diagnostics::from(&diagnostics),
        steps: None,
        final_errors: None,
        pe: None,
        config: cfg.clone(),
    };
    manifest.write(&dir)?;

    let mut out = Outputs {
        dir: dir.clone(),
        files: Vec::new(),
        records: Vec::new(),
        pe_times: Vec::new(),
        pe_values: Vec::new(),
    };
    for (name, w) in [
        ("11", &truth.w11),
        ("12", &truth.w12),
        ("21", &truth.w21),
        ("22", &truth.w22),
    ] {
        out.write_kernel(true_kernel_file(name), w, &grid)?;
    }

    let system = CoupledSystem::new(grid.clone(), truth, gains, u1, u2)?;
    let y0 = CoupledState {
        plant: PlantState::constant(&grid, Z_INIT, Z_INIT),
        observer: ObserverState::zeros(&grid),
    }
    .flatten();
    let schedule = Schedule::build(cfg);
    let ctl = StepControl::with_tolerances(cfg.integration.rtol, cfg.integration.atol);
    let sqrt_dr = grid.spacing().sqrt();

    let mut cursor = 0;
    let integration = integrate_with(
        &|t, y: &[f64], dy: &mut [f64]| system.rhs(t, y, dy),
        &y0,
        0.0,
        cfg.integration.t_final,
        &schedule.times,
        &ctl,
        |t, y| {
            let roles = schedule.roles[cursor];
            cursor += 1;
            CoupledSystem::check_finite(y)?;
            if roles.record {
                out.records.push(system.errors(t, y)?);
            }
            if let Some(ts) = roles.snapshot {
                let (w21, w22) = system.kernel_estimates(y)?;
                out.write_kernel(snapshot_file("21", ts), &w21, &grid)?;
                out.write_kernel(snapshot_file("22", ts), &w22, &grid)?;
            }
            if roles.pe {
                let (g1, g2) = system.regressor(y)?;
                out.pe_times.push(t);
                out.pe_values
                    .push(g1.iter().chain(&g2).map(|v| v * sqrt_dr).collect());
            }
            Ok(())
        },
    );

    let stats = match integration {
        Ok(stats) => stats,
        Err(err) => {
            // Best effort: the integration error is what the caller needs.
            let _ = out.flush_series();
            manifest.status = RunStatus::Failed;
            manifest.error = Some(err.to_string());
            manifest.final_errors = out.records.last().map(FinalErrors::from);
            manifest.files = out.files;
            let _ = manifest.write(&dir);
            return Err(err);
        }
    };

    let traj = out.flush_series()?;
    let weight = WeightOperator::identity(2 * grid.n_points());
    let scan = match traj {
        Some(traj) if traj.times().last().unwrap() - traj.times()[0] >= cfg.pe.window => {
            let scan = pe_scan(
                &traj,
                cfg.pe.window,
                &weight,
                cfg.pe.kappa,
                cfg.pe.scan_stride,
            )?;
            write_pe_scan(&dir.join(PE_SCAN_FILE), &scan)?;
            out.files.push(PE_SCAN_FILE.into());
            Some(scan)
        }
        _ => None,
    };

    let final_record = *out
        .records
        .last()
        .expect("the final time is always a record time");
    manifest.status = RunStatus::Completed;
    manifest.steps = Some(StepCounts::from(stats));
    manifest.final_errors = Some(FinalErrors::from(&final_record));
    manifest.pe = Some(PeSummary {
        windows: scan.as_ref().map_or(0, |s| s.entries.len()),
        min_margin: scan.as_ref().map(PeScan::min_margin),
        weight: "identity".into(),
    });
    manifest.files = out.files;
    manifest.write(&dir)?;

    Ok(RunSummary {
        output_dir: dir,
        diagnostics,
        records: out.records,
        final_record,
        stats,
        pe_scan: scan,
    })
}

/// Recomputes the PE scan of a finished run from its stored regressor.
pub fn rescan_pe(run_dir: &Path, window: f64, kappa: f64, stride: f64) -> Result<PeScan> {
    let traj = crate::pe::read_signal_csv(&run_dir.join(PE_SIGNAL_FILE))?;
    let weight = WeightOperator::identity(traj.dim());
    pe_scan(&traj, window, &weight, kappa, stride)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_hits_end_points_exactly() {
        assert_eq!(lattice(0.05, 1.0).len(), 21);
        assert_eq!(*lattice(0.05, 1.0).last().unwrap(), 20.0 * 0.05);
        assert_eq!(lattice(1.0, 0.0), vec![0.0]);
        assert_eq!(lattice(0.3, 1.0), vec![0.0, 0.3, 0.6, 0.8999999999999999]);
    }

    #[test]
    fn schedule_merges_coincident_roles() {
        let mut cfg = ExperimentConfig::bundled("table1_ci").unwrap();
        cfg.integration.t_final = 2.0;
        cfg.snapshots.times = vec![0.0, 1.0];
        cfg.pe.sample_stride = 0.5;
        let s = Schedule::build(&cfg);
        assert_eq!(s.times, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let r = s.roles[2];
        assert!(r.record && r.pe && r.snapshot == Some(1.0));
        assert!(!s.roles[1].record && s.roles[1].pe);
    }

    #[test]
    fn final_time_is_recorded_off_lattice() {
        let mut cfg = ExperimentConfig::bundled("table1_ci").unwrap();
        cfg.integration.t_final = 2.5;
        cfg.snapshots.times.clear();
        let s = Schedule::build(&cfg);
        let recorded: Vec<f64> = s
            .times
            .iter()
            .zip(&s.roles)
            .filter(|(_, r)| r.record)
            .map(|(t, _)| *t)
            .collect();
        assert_eq!(recorded, vec![0.0, 1.0, 2.0, 2.5]);
    }
}
