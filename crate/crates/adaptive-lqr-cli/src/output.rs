//! Flat-file emission: full-precision trajectory CSV, downsampled plot
//! file, certificate report, and provenance metadata.
//!
//! Floats are written with Rust's shortest round-trip `Display`
//! formatting, so re-parsing a CSV reproduces every value bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use adaptive_lqr::diagnostics::{CertificateReport, SlackSeries};
use adaptive_lqr::sim::{PlantKind, SimConfig, StepRecord, TrajectoryLog};
use nalgebra::DVector;
use sha2::{Digest, Sha256};

pub fn csv_header(n: usize, m: usize, p: usize) -> String {
    let mut h = String::from("k");
    for i in 0..n {
        let _ = write!(h, ",x{i}");
    }
    for i in 0..m {
        let _ = write!(h, ",u{i}");
    }
    for i in 0..p {
        let _ = write!(h, ",theta{i}");
    }
    for i in 0..p {
        let _ = write!(h, ",theta_hat{i}");
    }
    for i in 0..n {
        let _ = write!(h, ",w{i}");
    }
    for i in 0..n {
        let _ = write!(h, ",e1_{i}");
    }
    h.push_str(",V,stepsize_ok,diverged");
    h
}

fn push_vec(line: &mut String, v: &DVector<f64>) {
    for x in v.iter() {
        let _ = write!(line, ",{x}");
    }
}

pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let first = &log.steps[0];
    let mut out = csv_header(first.x.len(), first.u.len(), first.theta.len());
    out.push('\n');
    for rec in &log.steps {
        let mut line = format!("{}", rec.k);
        push_vec(&mut line, &rec.x);
        push_vec(&mut line, &rec.u);
        push_vec(&mut line, &rec.theta);
        push_vec(&mut line, &rec.theta_hat);
        push_vec(&mut line, &rec.w);
        push_vec(&mut line, &rec.e1);
        let _ = write!(
            line,
            ",{},{},{}",
            rec.v,
            rec.stepsize_ok as u8,
            log.diverged as u8
        );
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Every `ceil(T / max_rows)`-th row of the full CSV — same columns,
/// gnuplot-friendly size.
pub fn plot_csv(full: &str, max_rows: usize) -> String {
    let mut lines = full.lines();
    let header = lines.next().unwrap_or_default();
    let data: Vec<&str> = lines.collect();
    let stride = data.len().div_ceil(max_rows.max(1)).max(1);
    let mut out = String::from(header);
    out.push('\n');
    for line in data.iter().step_by(stride) {
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Reads a trajectory CSV back into a log. The final log entry of the
/// file becomes the terminal state, so certificates see exactly the
/// transitions the file contains. Stage costs are not stored in the CSV
/// and come back as NaN.
pub fn parse_trajectory_csv(text: &str, cfg: &SimConfig) -> Result<TrajectoryLog, String> {
    let n = cfg.par.state_dim();
    let m = cfg.par.input_dim();
    let p = cfg.par.param_dim();
    let expected_cols = 1 + 2 * n + m + 2 * p + n + 3;
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if header != csv_header(n, m, p) {
        return Err("header does not match the configured dimensions".into());
    }
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut diverged = false;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(format!("line {}: expected {expected_cols} fields", lineno + 2));
        }
        let mut it = fields.into_iter();
        let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 2));
        let k = it
            .next()
            .unwrap()
            .parse::<usize>()
            .map_err(|e| format!("line {}: {e}", lineno + 2))?;
        let mut take = |len: usize| -> Result<DVector<f64>, String> {
            let mut v = DVector::zeros(len);
            for i in 0..len {
                v[i] = parse(it.next().ok_or("short line")?)?;
            }
            Ok(v)
        };
        let x = take(n)?;
        let u = take(m)?;
        let theta = take(p)?;
        let theta_hat = take(p)?;
        let w = take(n)?;
        let e1 = take(n)?;
        let v = parse(it.next().ok_or("short line")?)?;
        let stepsize_ok = it.next().ok_or("short line")? == "1";
        diverged = it.next().ok_or("short line")? == "1";
        let phi = &theta_hat - &theta;
        steps.push(StepRecord {
            k,
            x,
            u,
            theta,
            theta_hat,
            w,
            e1,
            phi,
            v,
            stage_cost: f64::NAN,
            stepsize_ok,
        });
    }
    let last = steps.pop().ok_or("no data rows")?;
    if steps.is_empty() {
        return Err("need at least two data rows".into());
    }
    Ok(TrajectoryLog {
        final_x: last.x,
        final_theta: last.theta,
        final_theta_hat: last.theta_hat,
        final_v: last.v,
        steps,
        diverged,
        mode: cfg.mode,
        mu: cfg.mu,
        q: cfg.q.clone(),
        r: cfg.r.clone(),
        param_diameter: cfg.param_box.diameter(),
        disturbance_free: cfg.disturbance == adaptive_lqr::plant::DisturbanceModel::None,
        linear_plant: !matches!(cfg.plant, PlantKind::NonlinearQuadrotor(_)),
        explored: cfg.exploration_std.is_some(),
    })
}

pub fn config_sha256(config_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    format!("{:x}", hasher.finalize())
}

pub fn metadata(command: &str, config_hash: &str, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "command = {command:?}");
    let _ = writeln!(out, "config_sha256 = {config_hash:?}");
    let _ = writeln!(out, "seed = {seed}");
    out.push_str("# defaults below are implementation choices (non-paper values)\n");
    for item in crate::config::NON_PAPER_DEFAULTS {
        let _ = writeln!(out, "non_paper_default = {item:?}");
    }
    out
}

pub fn series_lines(out: &mut String, name: &str, series: &SlackSeries) {
    let _ = writeln!(out, "{name}.ok = {}", series.ok());
    let _ = writeln!(
        out,
        "{name}.min_slack = {}",
        series.min_slack.map_or_else(|| "none".into(), |s| s.to_string())
    );
    let _ = writeln!(
        out,
        "{name}.first_violation = {}",
        series.first_violation.map_or_else(|| "none".into(), |k| k.to_string())
    );
    let _ = writeln!(
        out,
        "{name}.preconditions_held_fraction = {}",
        series.fraction_preconditions_held
    );
}

pub fn report_lines(out: &mut String, rep: &CertificateReport) {
    let _ = writeln!(out, "l2.sum_x_sq = {}", rep.sum_x_sq);
    let _ = writeln!(out, "l2.sum_w_sq = {}", rep.sum_w_sq);
    let _ = writeln!(out, "l2.sum_dtheta = {}", rep.sum_dtheta);
    let _ = writeln!(out, "l2.sum_e1_sq = {}", rep.sum_e1_sq);
    let _ = writeln!(out, "l2.empirical_gain = {}", rep.empirical_gain);
    let _ = writeln!(out, "l2.state_tail_fraction = {}", rep.state_tail_fraction);
    let _ = writeln!(out, "l2.w_l2_empirical = {}", rep.w_l2_empirical);
    let _ = writeln!(out, "l2.dtheta_l1_empirical = {}", rep.dtheta_l1_empirical);
    let _ = writeln!(out, "l2.bounded = {}", rep.bounded);
    let _ = writeln!(out, "l2.diverged = {}", rep.diverged);
    let _ = writeln!(out, "l2.max_state_norm = {}", rep.max_state_norm);
}

pub fn write(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}
