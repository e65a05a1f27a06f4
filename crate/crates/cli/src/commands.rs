use std::path::{Path, PathBuf};

use diffcontact::learn::{evaluate, fit_with_progress, FitReport};
use diffcontact::model::{PhysParams, Trajectory};
use diffcontact::plan::{plan, rollout, PlanTask};
use diffcontact::rng::seeded_rng;
use diffcontact::sim::{constraint_residuals, energies, generate_dataset, simulate, Dataset, SimOptions, SCHEMA_VERSION};
use diffcontact::systems::{preset, preset_file_name, sample_initial_condition, Preset, PRESET_NAMES};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{write_failed, CliError};

/// Offset that keeps the noise stream apart from the initial-guess stream.
const NOISE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| write_failed(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> Result<(), CliError> {
    let text = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    }
    .map_err(|e| CliError::Config(format!("cannot serialize {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|e| write_failed(path, e))
}

/// Writes `rows` under `header`; floats use the shortest round-trip form.
fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_failed(path, e))?;
    w.write_record(header).map_err(|e| write_failed(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| write_failed(path, e))?;
    }
    w.flush().map_err(|e| write_failed(path, e))
}

fn load_preset(cfg: &RunConfig) -> Result<Preset, CliError> {
    let name = cfg.preset.as_deref().ok_or_else(|| {
        CliError::Config(format!("no preset given (available: {})", PRESET_NAMES.join(", ")))
    })?;
    Ok(preset(name)?)
}

fn read_input(path: &Path, what: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::MissingInput(format!("cannot read {what} {}: {e}", path.display())))
}

fn load_dataset(path: Option<&PathBuf>, command: &str) -> Result<Dataset, CliError> {
    let path = path.ok_or_else(|| CliError::MissingInput(format!("{command} needs --dataset")))?;
    let text = read_input(path, "dataset")?;
    Ok(Dataset::from_json(&text)?)
}

fn load_fit(path: &Path) -> Result<FitReport, CliError> {
    let text = read_input(path, "fit report")?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("fit report {}: {e}", path.display())))
}

#[derive(Serialize)]
struct TrajectoryFile<'a> {
    schema_version: u32,
    preset: &'a str,
    seed: u64,
    options: &'a SimOptions,
    trajectory: &'a Trajectory,
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let p = load_preset(cfg)?;
    let s0 = sample_initial_condition(&p, &mut seeded_rng(cfg.seed))?;
    let mut traj = simulate(&p.spec, &p.params, &s0, &cfg.sim)?;
    traj.meta.seed = Some(cfg.seed);
    let energy = energies(&p.spec, &p.params, &traj)?;
    let phi = constraint_residuals(&p.spec, &traj);
    let dir = out_dir(cfg)?;
    write_json(
        &dir.join("trajectory.json"),
        &TrajectoryFile {
            schema_version: SCHEMA_VERSION,
            preset: &p.name,
            seed: cfg.seed,
            options: &cfg.sim,
            trajectory: &traj,
        },
        false,
    )?;
    let rows = traj.states.iter().enumerate().map(|(i, s)| {
        vec![
            s.t.to_string(),
            energy[i].to_string(),
            phi[i].to_string(),
            traj.events[i].max_penetration.to_string(),
        ]
    });
    write_csv(&dir.join("energy.csv"), &["t", "E", "phi_inf", "penetration_max"], rows)?;
    let drift = energy.iter().map(|e| (e - energy[0]).abs()).fold(0.0, f64::max);
    println!("{}: {} steps, max |E - E0| = {drift:e}", p.name, cfg.sim.n_steps);
    Ok(())
}

pub fn generate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let p = load_preset(cfg)?;
    let data = generate_dataset(&p, &cfg.dataset, cfg.seed)?;
    let dir = out_dir(cfg)?;
    write_json(&dir.join("dataset.json"), &data, false)?;
    println!(
        "{}: {} windows from {} trajectories, collision fraction {:.3}",
        p.name,
        data.chunks.len(),
        cfg.dataset.n_traj,
        data.collision_fraction()
    );
    Ok(())
}

pub fn fit_cmd(cfg: &RunConfig, dataset: Option<&PathBuf>) -> Result<(), CliError> {
    let mut data = load_dataset(dataset, "fit")?;
    if let Some(name) = &cfg.preset {
        if !name.eq_ignore_ascii_case(&data.preset.name) {
            return Err(CliError::Config(format!("dataset holds {}, not {name}", data.preset.name)));
        }
    }
    if cfg.noise_sigma > 0.0 {
        data.add_noise(cfg.noise_sigma, &mut seeded_rng(cfg.seed ^ NOISE_STREAM));
    }
    let report = fit_with_progress(&data, cfg.seed, &cfg.fit, |epoch, loss| {
        if epoch % 100 == 0 {
            eprintln!("epoch {epoch}: loss {loss:e}");
        }
    })?;
    let dir = out_dir(cfg)?;
    write_json(&dir.join("fit.json"), &report, true)?;
    let rows = report
        .losses
        .iter()
        .zip(&report.relative_errors)
        .enumerate()
        .map(|(i, (l, r))| vec![i.to_string(), l.to_string(), r.to_string()]);
    write_csv(&dir.join("losses.csv"), &["epoch", "loss", "rel_err"], rows)?;
    println!(
        "{}: {} epochs, loss {:e}, mu {:?}, e_p {:?}, mass ratios {:?}",
        report.preset, report.epochs_run, report.final_loss, report.params.mu, report.params.e_p, report.mass_ratios
    );
    Ok(())
}

pub fn eval_cmd(cfg: &RunConfig, dataset: Option<&PathBuf>, fit: Option<&PathBuf>) -> Result<(), CliError> {
    let data = load_dataset(dataset, "eval")?;
    let params: PhysParams = match fit {
        Some(path) => load_fit(path)?.params,
        None => data.preset.params.clone(),
    };
    let report = evaluate(&params, &data, &cfg.sim)?;
    let dir = out_dir(cfg)?;
    write_json(&dir.join("eval.json"), &report, true)?;
    let rows = report.classes.iter().map(|c| {
        vec![
            c.class.clone(),
            c.mu_learned.to_string(),
            c.mu_true.to_string(),
            c.e_learned.to_string(),
            c.e_true.to_string(),
        ]
    });
    write_csv(&dir.join("eval.csv"), &["class", "mu_learned", "mu_true", "e_learned", "e_true"], rows)?;
    let rows = report
        .relative_errors
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), r.to_string()]);
    write_csv(&dir.join("relative_errors.csv"), &["window", "rel_err"], rows)?;
    println!("{}: mean relative error {:e}", report.preset, report.mean_relative_error);
    Ok(())
}

#[derive(Serialize)]
struct RolloutFile<'a> {
    schema_version: u32,
    decision: &'a [f64],
    trajectory: &'a Trajectory,
}

pub fn plan_cmd(cfg: &RunConfig, task: &str, fit: Option<&PathBuf>) -> Result<(), CliError> {
    let task = PlanTask::by_name(task)?;
    let p = task.preset();
    let params = match fit {
        Some(path) => load_fit(path)?.params,
        None => p.params.clone(),
    };
    let report = plan(&task, &params, &task.default_decision(), &cfg.plan)?;
    let traj = rollout(&task, &report.decision, &p.spec, &params, &cfg.plan.sim)?;
    let dir = out_dir(cfg)?;
    write_json(&dir.join("plan.json"), &report, true)?;
    let rows = report
        .losses
        .iter()
        .zip(&report.best_so_far)
        .enumerate()
        .map(|(i, (l, b))| vec![i.to_string(), l.to_string(), b.to_string()]);
    write_csv(&dir.join("loss.csv"), &["iter", "loss", "best"], rows)?;
    write_json(
        &dir.join("rollout.json"),
        &RolloutFile {
            schema_version: SCHEMA_VERSION,
            decision: &report.decision,
            trajectory: &traj,
        },
        false,
    )?;
    println!("{:?}: objective {:e} at decision {:?}", task.kind, report.loss, report.decision);
    Ok(())
}

pub fn export_presets_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    for name in PRESET_NAMES {
        let path = dir.join(preset_file_name(name));
        write_json(&path, &preset(name)?, true)?;
        println!("{}", path.display());
    }
    Ok(())
}
