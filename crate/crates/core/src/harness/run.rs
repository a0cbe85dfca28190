//! Task runners. Each run writes one CSV, optional plot data and a JSON
//! manifest into the configured output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use super::config::{
    DecayTaskConfig, ExperimentConfig, MomentTaskConfig, MsaTaskConfig, SpectrumTaskConfig, TaskConfig,
};
use crate::disorder::sample;
use crate::error::{Error, Result};
use crate::geometry::{sup_norm, ConfigPoint};
use crate::msa::{msa_report, MsaParams};
use crate::observables::{
    decay_fit_vector, disorder_averaged_moment, usable_shells, DecayOptions, MomentMethod, MomentOptions,
    MomentTask,
};
use crate::operator::HamiltonianMatrix;
use crate::parallel::{map_indexed, Workers};
use crate::spectral::eigensolve;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Also write two-column plot data files.
    pub plot: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub task: String,
    /// Canonical text of the configuration that was run.
    pub config: String,
    pub master_seed: u64,
    pub workers: usize,
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// Fixed-width scientific notation used by every numeric output column.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn table(&mut self, name: &str, columns: &str, rows: &[String]) -> Result<()> {
        let mut text = format!("# {columns}\n");
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        let path = self.dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        self.written.push(path);
        Ok(())
    }

    fn plot(&mut self, name: &str, header: &str, points: &[(f64, f64)]) -> Result<()> {
        let rows: Vec<String> = points.iter().map(|(x, y)| format!("{} {}", fmt_f64(*x), fmt_f64(*y))).collect();
        self.table(name, header, &rows)
    }
}

/// Runs the configured task and returns its manifest, which is also written
/// to `manifest.json` in the output directory.
pub fn run(cfg: &ExperimentConfig, options: RunOptions) -> Result<RunManifest> {
    let start = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    fs::create_dir_all(&cfg.run.output)?;
    let mut out = Outputs { dir: cfg.run.output.clone(), written: Vec::new() };
    let summary = match &cfg.task {
        TaskConfig::Msa(t) => run_msa(cfg, t, options, &mut out)?,
        TaskConfig::Decay(t) => run_decay(cfg, t, options, &mut out)?,
        TaskConfig::Moment(t) => run_moment(cfg, t, options, &mut out)?,
        TaskConfig::Spectrum(t) => run_spectrum(cfg, t, options, &mut out)?,
    };
    let manifest_path = out.dir.join("manifest.json");
    out.written.push(manifest_path.clone());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        task: cfg.task.kind().name().to_string(),
        config: cfg.to_string(),
        master_seed: cfg.run.master_seed,
        workers: Workers(cfg.run.workers).resolved(),
        started_unix,
        wall_seconds: start.elapsed().as_secs_f64(),
        outputs: out.written,
        summary,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.into()))?;
    write_atomic(&manifest_path, text.as_bytes())?;
    Ok(manifest)
}

fn workers(cfg: &ExperimentConfig) -> Workers {
    Workers(cfg.run.workers)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn run_msa(cfg: &ExperimentConfig, t: &MsaTaskConfig, options: RunOptions, out: &mut Outputs) -> Result<serde_json::Value> {
    let m = &cfg.model;
    let params = MsaParams {
        total_particles: m.total_particles,
        n: m.n,
        d: m.d,
        mass: t.mass,
        p: t.p,
        coupling: m.coupling,
        energy_lo: t.energy_lo,
        energy_hi: t.energy_hi,
        grid_step: t.grid_step,
        radii: t.scales.radii(),
        realizations: cfg.run.realizations,
        mode: t.mode,
        master_seed: cfg.run.master_seed,
        dense_limit: m.dense_limit,
        workers: workers(cfg),
    };
    let report = msa_report(&params, &cfg.disorder, &cfg.interaction)?;
    let rows: Vec<String> = report
        .iter()
        .map(|e| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                e.radius,
                m.n,
                m.total_particles,
                fmt_f64(e.estimate),
                fmt_f64(e.ci_low),
                fmt_f64(e.ci_high),
                fmt_f64(e.target),
                e.samples_used,
                e.energy_points_used,
                cfg.run.master_seed
            )
        })
        .collect();
    out.table("msa.csv", "L,n,N,estimate,ci_low,ci_high,target,samples,energy_points,seed", &rows)?;
    if options.plot {
        let log10 = |p: f64| if p > 0.0 { p.log10() } else { f64::NAN };
        let est: Vec<(f64, f64)> = report.iter().map(|e| (f64::from(e.radius), log10(e.estimate))).collect();
        let tgt: Vec<(f64, f64)> = report.iter().map(|e| (f64::from(e.radius), log10(e.target))).collect();
        out.plot("msa_estimate.dat", "L log10(estimate)", &est)?;
        out.plot("msa_target.dat", "L log10(target)", &tgt)?;
    }
    Ok(json!({ "estimates": report }))
}

struct DecayRow {
    line: String,
    fit: Option<(f64, f64)>,
}

fn run_decay(cfg: &ExperimentConfig, t: &DecayTaskConfig, options: RunOptions, out: &mut Outputs) -> Result<serde_json::Value> {
    let m = &cfg.model;
    let region = t.region.rectangle(m.n, m.d);
    let projection = region.particle_projection();
    let opts = DecayOptions { r_min: t.r_min, r_max: t.r_max, floor: t.floor };
    let seed = cfg.run.master_seed;
    let per_real = map_indexed(cfg.run.realizations, workers(cfg), |r| {
        let real = sample(&cfg.disorder, &projection, seed, r as u64)?;
        let hm = HamiltonianMatrix::build(&region, &real, &cfg.interaction, m.coupling)?;
        let spec = eigensolve(&hm, m.dense_limit)?;
        let indices = match t.window {
            Some((lo, hi)) => spec.indices_in(lo, hi),
            None => 0..spec.len(),
        };
        let mut rows = Vec::with_capacity(indices.len());
        for j in indices {
            let energy = fmt_f64(spec.eigenvalues[j]);
            rows.push(match decay_fit_vector(&region, spec.vector(j), None, &opts) {
                Ok(fit) => {
                    let center: Vec<String> = fit.center.coords().iter().map(ToString::to_string).collect();
                    DecayRow {
                        line: format!(
                            "{r},{j},{energy},ok,{},{},{},{},{}",
                            fmt_f64(fit.rate),
                            fmt_f64(fit.intercept),
                            fmt_f64(fit.r_squared),
                            fit.shells_used,
                            center.join(" ")
                        ),
                        fit: Some((fit.rate, fit.r_squared)),
                    }
                }
                Err(Error::TooFewShells { usable }) => DecayRow {
                    line: format!("{r},{j},{energy},too_few_shells,,,,{usable},"),
                    fit: None,
                },
                Err(e) => return Err(e),
            });
        }
        let plot = if options.plot && r == 0 && t.plot_index < spec.len() {
            let psi = spec.vector(t.plot_index);
            match decay_fit_vector(&region, psi, None, &opts) {
                Ok(fit) => {
                    let shells = usable_shells(&region, psi, &fit.center, &opts)?;
                    Some((shells, fit))
                }
                Err(_) => None,
            }
        } else {
            None
        };
        Ok((rows, plot))
    })?;

    let mut lines = Vec::new();
    let mut rates = Vec::new();
    let mut r2 = Vec::new();
    let mut skipped = 0usize;
    for (rows, _) in &per_real {
        for row in rows {
            lines.push(row.line.clone());
            match row.fit {
                Some((rate, rsq)) => {
                    rates.push(rate);
                    r2.push(rsq);
                }
                None => skipped += 1,
            }
        }
    }
    out.table(
        "decay.csv",
        "realization,index,energy,status,rate,intercept,r_squared,shells,center",
        &lines,
    )?;
    if let Some((shells, fit)) = per_real.first().and_then(|p| p.1.as_ref()) {
        let data: Vec<(f64, f64)> = shells.iter().map(|(r, mr)| (f64::from(*r), mr.ln())).collect();
        let line: Vec<(f64, f64)> = shells
            .iter()
            .map(|(r, _)| (f64::from(*r), fit.intercept - fit.rate * f64::from(*r)))
            .collect();
        out.plot("decay_shells.dat", "r ln(max shell amplitude)", &data)?;
        out.plot("decay_fit.dat", "r fitted ln amplitude", &line)?;
    }
    Ok(json!({
        "fitted": rates.len(),
        "skipped": skipped,
        "median_rate": median(rates),
        "median_r_squared": median(r2),
    }))
}

fn run_moment(cfg: &ExperimentConfig, t: &MomentTaskConfig, options: RunOptions, out: &mut Outputs) -> Result<serde_json::Value> {
    let m = &cfg.model;
    let region = t.region.rectangle(m.n, m.d);
    let origin = ConfigPoint::new(t.origin.clone(), m.n, m.d)?;
    let mut k_sites = Vec::new();
    for x in region.sites() {
        if sup_norm(&x, &origin)? <= i64::from(t.k_radius) {
            k_sites.push(x);
        }
    }
    let task = MomentTask {
        region,
        k_sites,
        interval: (t.energy_lo, t.energy_hi),
        s: t.s,
        coupling: m.coupling,
        dense_limit: m.dense_limit,
        options: MomentOptions { origin: Some(origin), vertex_limit: t.vertex_limit },
        realizations: cfg.run.realizations,
        master_seed: cfg.run.master_seed,
        workers: workers(cfg),
    };
    let avg = disorder_averaged_moment(&task, &cfg.disorder, &cfg.interaction)?;
    let rows: Vec<String> = avg
        .per_realization
        .iter()
        .map(|r| {
            let method = match r.method {
                MomentMethod::ExactVertex => "exact_vertex",
                MomentMethod::UpperBound => "upper_bound",
            };
            format!(
                "{},{},{},{},{},{},{}",
                r.realization_index,
                r.master_seed,
                fmt_f64(r.value),
                method,
                r.multiplicity,
                r.k_size,
                r.degenerate_pairs
            )
        })
        .collect();
    out.table("moment.csv", "realization,seed,value,method,multiplicity,k_size,degenerate_pairs", &rows)?;
    if options.plot {
        let pts: Vec<(f64, f64)> =
            avg.per_realization.iter().map(|r| (r.realization_index as f64, r.value)).collect();
        out.plot("moment_values.dat", "realization value", &pts)?;
    }
    let upper_bounds = avg.per_realization.iter().filter(|r| r.method == MomentMethod::UpperBound).count();
    Ok(json!({ "mean": avg.mean, "std_error": avg.std_error, "upper_bound_realizations": upper_bounds }))
}

fn run_spectrum(
    cfg: &ExperimentConfig,
    t: &SpectrumTaskConfig,
    options: RunOptions,
    out: &mut Outputs,
) -> Result<serde_json::Value> {
    let m = &cfg.model;
    let region = t.region.rectangle(m.n, m.d);
    let projection = region.particle_projection();
    let seed = cfg.run.master_seed;
    let spectra = map_indexed(cfg.run.realizations, workers(cfg), |r| {
        let real = sample(&cfg.disorder, &projection, seed, r as u64)?;
        let hm = HamiltonianMatrix::build(&region, &real, &cfg.interaction, m.coupling)?;
        let spec = eigensolve(&hm, m.dense_limit)?;
        Ok((spec.eigenvalues.clone(), spec.residual_bound))
    })?;
    let mut rows = Vec::new();
    for (r, (evs, _)) in spectra.iter().enumerate() {
        for (j, e) in evs.iter().enumerate() {
            rows.push(format!("{r},{j},{}", fmt_f64(*e)));
        }
    }
    out.table("spectrum.csv", "realization,index,eigenvalue", &rows)?;
    if options.plot {
        let pts: Vec<(f64, f64)> = spectra[0].0.iter().enumerate().map(|(j, e)| (j as f64, *e)).collect();
        out.plot("spectrum.dat", "index eigenvalue", &pts)?;
    }
    let residual = spectra.iter().map(|s| s.1).fold(0.0f64, f64::max);
    Ok(json!({ "size": region.len(), "max_residual": residual }))
}
