//! Command implementations. Each writes its artifacts into `out`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use delayrc::dynamics::{
    bifurcation_sweep, classify_regime, cobweb, integrate_dde, write_bifurcation_csv, write_cobweb_csv,
    write_regime_csv,
};
use delayrc::experiment::{DataSource, Experiment};
use delayrc::hyperopt::{
    linear_grid, resonance_sweep, run_study, write_trial, ObjectiveDescriptor, RunOptions, Study, TrialStatus,
};

use crate::config::ExperimentConfig;
use crate::{CliError, DynamicsCommand};

/// Creates `out/name`, writes the provenance comment (plus `extra`) and
/// hands the writer to `body`.
fn write_artifact(
    out: &Path,
    name: &str,
    cfg: &ExperimentConfig,
    extra: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> delayrc::Result<()>,
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(out.join(name))?);
    writeln!(w, "{}{extra}", cfg.provenance_line())?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn dynamics(which: DynamicsCommand, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let d = &cfg.dynamics;
    let p = &d.params;
    p.validate()?;
    match which {
        DynamicsCommand::Cobweb => {
            let pts = cobweb(d.x0, d.steps, p);
            write_artifact(out, "cobweb.csv", cfg, "", |w| write_cobweb_csv(&pts, w))?;
            println!("cobweb: {} points from x0 = {}", pts.len(), d.x0);
        }
        DynamicsCommand::Bifurcation => {
            let rows = bifurcation_sweep(d.axis, (d.from, d.to), d.points, p, d.max_period)?;
            write_artifact(out, "bifurcation.csv", cfg, "", |w| write_bifurcation_csv(&rows, w))?;
            println!("bifurcation: {} parameter values in [{}, {}]", rows.len(), d.from, d.to);
        }
        DynamicsCommand::Regime => {
            let report = classify_regime(p);
            println!(
                "regime: {} (lyapunov {:.6}) at G = {}, M = {}, x_b = {}",
                report.regime, report.lyapunov, p.gain, p.modulation_depth, p.bias
            );
            write_artifact(out, "regime.csv", cfg, "", |w| write_regime_csv(&[(*p, report)], w))?;
        }
        DynamicsCommand::Dde => {
            let v0 = d.x0 * p.half_wave_voltage;
            let trace = integrate_dde(p, |_| v0, d.duration, d.dt)?;
            write_artifact(out, "dde.csv", cfg, "", |w| {
                writeln!(w, "t,v")?;
                for (t, v) in trace.times().zip(&trace.values) {
                    writeln!(w, "{t},{v}")?;
                }
                Ok(())
            })?;
            println!("dde: {} samples, dt = {} s", trace.values.len(), d.dt);
        }
    }
    Ok(())
}

fn source_name(s: DataSource) -> &'static str {
    match s {
        DataSource::Generated => "generated",
        DataSource::VowelFiles => "files",
        DataSource::SyntheticVowels => "synthetic",
    }
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let exp = Experiment::<f64>::prepare(cfg.task, &cfg.data, cfg.data_seed)?;
    let outcome = exp.evaluate(&cfg.reservoir, cfg.lambda)?;
    let d = cfg.reservoir.sample_delay()?;

    let mut metrics = format!(
        "task = {}\ndata_source = {}\nd = {d}\ntau_over_t = {}\nnmse = {}\nnrmse = {}\ntrain_nmse = {}\n",
        cfg.task,
        source_name(exp.source),
        cfg.reservoir.delay_ratio(),
        outcome.nmse,
        outcome.nrmse,
        outcome.train_nmse
    );
    if let Some(wer) = outcome.wer {
        metrics.push_str(&format!("wer = {wer}\n"));
    }
    std::fs::write(out.join("metrics.txt"), &metrics)?;
    print!("{metrics}");

    let test = &outcome.test;
    let pred = &outcome.readout;
    write_artifact(out, "trace.csv", cfg, "", |w| {
        write!(w, "step,u")?;
        for o in 0..test.outputs() {
            write!(w, ",target_{o}")?;
        }
        for o in 0..pred.rows() {
            write!(w, ",readout_{o}")?;
        }
        writeln!(w, ",segment_id")?;
        let mut seg = 0;
        for n in 0..test.len() {
            write!(w, "{n},{}", test.input[n])?;
            for o in 0..test.outputs() {
                write!(w, ",{}", test.target[(o, n)])?;
            }
            for o in 0..pred.rows() {
                write!(w, ",{}", pred[(o, n)])?;
            }
            while seg < test.segments.len() && test.segments[seg].end <= n {
                seg += 1;
            }
            if seg < test.segments.len() {
                writeln!(w, ",{seg}")?;
            } else {
                writeln!(w, ",")?;
            }
        }
        Ok(())
    })?;
    write_artifact(out, "weights.csv", cfg, "", |w| outcome.weights.write_csv(w))
}

fn objective_descriptor(cfg: &ExperimentConfig) -> ObjectiveDescriptor {
    let fixed = cfg
        .canonical()
        .into_iter()
        .filter(|(k, _)| {
            k.starts_with("data.")
                || k == "seed.mask"
                || ["reservoir.k", "reservoir.theta", "reservoir.beta", "reservoir.depth", "reservoir.washout"]
                    .contains(&k.as_str())
        })
        .collect();
    ObjectiveDescriptor { task: cfg.task.to_string(), data_seed: cfg.data_seed, template: fixed }
}

pub fn optimize(cfg: &ExperimentConfig, out: &Path, resume: bool) -> Result<(), CliError> {
    let exp = Experiment::<f64>::prepare(cfg.task, &cfg.data, cfg.data_seed)?;
    let fresh = Study::new(cfg.space, objective_descriptor(cfg), cfg.sampler)?;
    let path = out.join("study.jsonl");
    let mut study = if resume && path.exists() {
        let old = Study::read_jsonl(BufReader::new(File::open(&path)?))?;
        if old.header != fresh.header {
            return Err(CliError::Config(format!("{} was written with a different configuration", path.display())));
        }
        old
    } else {
        fresh
    };
    let mut log = BufWriter::new(File::create(&path)?);
    study.write_jsonl(&mut log)?;
    log.flush()?;
    let resumed_from = study.trials.len();

    let options = RunOptions { budget: cfg.budget, record_wall_time: cfg.record_wall_time };
    run_study(&exp, &cfg.reservoir, &mut study, options, |t| {
        write_trial(&mut log, t)?;
        log.flush()?;
        Ok(())
    })?;
    drop(log);

    write_artifact(out, "trials.csv", cfg, "", |w| {
        writeln!(w, "id,rho,gain,phi0,tau_over_t,d,lambda,loss,status,origin")?;
        for t in &study.trials {
            let d = t.params.apply(&cfg.reservoir).sample_delay().map(|d| d.to_string()).unwrap_or_default();
            let p = &t.params;
            let status = match &t.status {
                TrialStatus::Ok => "ok",
                TrialStatus::Failed(_) => "failed",
            };
            writeln!(
                w,
                "{},{},{},{},{},{d},{},{},{status},{:?}",
                t.id,
                p.rho,
                p.gain,
                p.phi0,
                p.tau_over_t,
                p.lambda,
                t.loss.map(|l| l.to_string()).unwrap_or_default(),
                t.origin
            )?;
        }
        Ok(())
    })?;

    let best = study
        .best()
        .ok_or_else(|| CliError::Runtime(format!("none of the {} trials succeeded", study.trials.len())))?;
    let p = best.params;
    std::fs::write(out.join("best_config.txt"), cfg.with_params(&p).canonical_text())?;
    println!(
        "trials: {} ({} new)\nbest trial {}: nmse = {}\n  rho = {}, gain = {}, phi0 = {}, tau_over_t = {}, lambda = {}",
        study.trials.len(),
        study.trials.len() - resumed_from,
        best.id,
        best.loss.unwrap_or(f64::NAN),
        p.rho,
        p.gain,
        p.phi0,
        p.tau_over_t,
        p.lambda
    );
    Ok(())
}

pub fn sweep_delay(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let s = &cfg.sweep;
    let grid = linear_grid(s.start, s.stop, s.step)?;
    let seeds: Vec<u64> = (0..s.repeats as u64).map(|i| cfg.data_seed.wrapping_add(i)).collect();
    let table = resonance_sweep(cfg.task, &cfg.data, &cfg.reservoir, cfg.lambda, &grid, &seeds)?;
    let extra = format!(" grid_points={} collapsed={}", grid.len(), table.collapsed);
    write_artifact(out, "sweep.csv", cfg, &extra, |w| {
        writeln!(w, "tau_over_t,d,nmse_mean,nmse_std,repeats")?;
        for r in &table.rows {
            writeln!(w, "{},{},{},{},{}", r.tau_over_t, r.d, r.nmse_mean, r.nmse_std, r.repeats)?;
        }
        Ok(())
    })?;
    let worst = table.rows.iter().max_by(|a, b| a.nmse_mean.total_cmp(&b.nmse_mean));
    println!("sweep: {} rows ({} grid values collapsed)", table.rows.len(), table.collapsed);
    if let Some(r) = worst {
        println!("highest mean nmse {} at tau_over_t = {} (d = {})", r.nmse_mean, r.tau_over_t, r.d);
    }
    Ok(())
}
