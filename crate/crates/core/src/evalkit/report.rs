//! Report files for a run directory: CSV tables and SVG line plots.
//!
//! A run directory holds either `log.jsonl` (one seed) or subdirectories
//! each holding one (several seeds). Outputs go to `<run>/report/`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{cross_seed_curves, score, LearningCurve, ScoreReport, SCORE_WINDOW, SMOOTHING_COEFF};
use crate::agents::{read_log, LogRecord};
use crate::error::{Error, Result};

pub const LOG_FILE: &str = "log.jsonl";

pub struct RunLogs {
    pub name: String,
    pub records: Vec<LogRecord>,
}

fn find_logs(run_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let single = run_dir.join(LOG_FILE);
    if single.is_file() {
        let name = run_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        return Ok(vec![(name, single)]);
    }
    let mut found = Vec::new();
    let mut missing = vec![single.display().to_string()];
    if let Ok(entries) = fs::read_dir(run_dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                let log = p.join(LOG_FILE);
                if log.is_file() {
                    found.push((e.file_name().to_string_lossy().into_owned(), log));
                } else {
                    missing.push(log.display().to_string());
                }
            }
        }
    }
    if found.is_empty() {
        return Err(Error::data(format!("no training logs found; looked for {}", missing.join(", "))));
    }
    found.sort();
    Ok(found)
}

pub fn load_runs(run_dir: &Path) -> Result<Vec<RunLogs>> {
    find_logs(run_dir)?
        .into_iter()
        .map(|(name, path)| {
            Ok(RunLogs {
                name,
                records: read_log(&path)?,
            })
        })
        .collect()
}

fn eval_curve(run: &RunLogs) -> LearningCurve {
    let (steps, returns) = run
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Eval { step, mean_return, .. } => Some((*step, *mean_return)),
            _ => None,
        })
        .unzip();
    LearningCurve {
        seed: run.name.clone(),
        steps,
        returns,
    }
}

fn approval_curve(run: &RunLogs) -> (Vec<usize>, Vec<f64>) {
    run.records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Step { step, approval, .. } => Some((*step, *approval)),
            _ => None,
        })
        .unzip()
}

/// Evaluation learning curves of every seed in a run directory.
pub fn load_run_curves(run_dir: &Path) -> Result<Vec<LearningCurve>> {
    Ok(load_runs(run_dir)?.iter().map(eval_curve).collect())
}

fn score_row(metric: &str, s: &ScoreReport) -> String {
    format!("{metric},{},{},{},{},{}\n", s.mean, s.spread, s.ci95, s.n_seeds, s.window)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn svg_plot(title: &str, xs: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let finite = |v: &&f64| v.is_finite();
    let x_lo = xs.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let x_hi = xs.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max);
    let ys = series.iter().flat_map(|s| s.1.iter()).filter(finite);
    let (mut y_lo, mut y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(y_lo.is_finite() && y_hi.is_finite()) {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let px = |x: f64| pad + (x - x_lo) / x_span * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y_lo) / (y_hi - y_lo) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{title}</text>"#, w / 2.0);
    let _ = writeln!(s, r#"<text x="{pad}" y="{}" font-size="11">{x_lo}</text>"#, h - pad + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{x_hi}</text>"#, w - pad, h - pad + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.3}</text>"#, pad - 4.0, h - pad, y_lo);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.3}</text>"#, pad - 4.0, pad + 4.0, y_hi);
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{name}</text>"#,
            w - pad - 120.0,
            pad + 16.0 + 14.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

fn stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len().max(1) as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Writes `scores.csv`, `curves.csv`, `approval.csv`, `histograms.csv`,
/// `curves.svg` and `approval.svg` under `<run_dir>/report/` and returns
/// their paths. Output depends only on the logs, so reruns are byte-identical.
pub fn emit_report(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let runs = load_runs(run_dir)?;
    let out_dir = run_dir.join("report");
    fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };

    let curves: Vec<LearningCurve> = runs.iter().map(eval_curve).collect();
    let have_evals = curves.iter().all(|c| !c.steps.is_empty());

    let mut scores = String::from("metric,mean,two_std,ci95,n_seeds,window\n");
    if have_evals {
        scores += &score_row("return", &score(&curves, SCORE_WINDOW)?);
    }
    let approvals: Vec<(Vec<usize>, Vec<f64>)> = runs.iter().map(approval_curve).collect();
    let time_avg: Vec<f64> = approvals.iter().map(|(_, a)| stats(a).0).collect();
    let (m, sd) = stats(&time_avg);
    scores += &format!("mean_approval,{m},{},,{},\n", 2.0 * sd, runs.len());
    put("scores.csv", scores)?;

    if have_evals {
        let (mean, std) = cross_seed_curves(&curves, SMOOTHING_COEFF)?;
        let smoothed: Vec<Vec<f64>> = curves
            .iter()
            .map(|c| super::smooth(&c.returns, SMOOTHING_COEFF))
            .collect::<Result<_>>()?;
        let mut csv = String::from("step");
        for c in &curves {
            let _ = write!(csv, ",{0}_return,{0}_smoothed", c.seed);
        }
        csv.push_str(",mean_smoothed,std_smoothed\n");
        for t in 0..mean.len() {
            let _ = write!(csv, "{}", curves[0].steps[t]);
            for (c, s) in curves.iter().zip(&smoothed) {
                let _ = write!(csv, ",{},{}", c.returns[t], s[t]);
            }
            let _ = writeln!(csv, ",{},{}", mean[t], std[t]);
        }
        put("curves.csv", csv)?;
        let xs: Vec<f64> = curves[0].steps.iter().map(|&s| s as f64).collect();
        let mut series: Vec<(String, Vec<f64>)> =
            curves.iter().zip(&smoothed).map(|(c, s)| (c.seed.clone(), s.clone())).collect();
        if curves.len() > 1 {
            series.push(("mean".into(), mean));
        }
        put("curves.svg", svg_plot("smoothed evaluation return", &xs, &series))?;
    }

    let steps = &approvals[0].0;
    if approvals.iter().any(|(s, _)| s != steps) {
        return Err(Error::data("approval logs of the runs are not aligned"));
    }
    let mut csv = String::from("step");
    for r in &runs {
        let _ = write!(csv, ",{}", r.name);
    }
    csv.push_str(",mean\n");
    let mut mean_curve = Vec::with_capacity(steps.len());
    for (t, step) in steps.iter().enumerate() {
        let _ = write!(csv, "{step}");
        let col: Vec<f64> = approvals.iter().map(|(_, a)| a[t]).collect();
        for v in &col {
            let _ = write!(csv, ",{v}");
        }
        let m = stats(&col).0;
        mean_curve.push(m);
        let _ = writeln!(csv, ",{m}");
    }
    put("approval.csv", csv)?;
    let xs: Vec<f64> = steps.iter().map(|&s| s as f64).collect();
    put(
        "approval.svg",
        svg_plot("actor batch approval fraction", &xs, &[("mean".into(), mean_curve)]),
    )?;

    let mut csv = String::from("run,step,bin,lo,hi,count\n");
    for r in &runs {
        for rec in &r.records {
            if let LogRecord::Histogram { step, edges, counts, .. } = rec {
                for (i, c) in counts.iter().enumerate() {
                    let _ = writeln!(csv, "{},{step},{i},{},{},{c}", r.name, edges[i], edges[i + 1]);
                }
            }
        }
    }
    put("histograms.csv", csv)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::TrainLog;

    fn write_run(dir: &Path, offset: f64) {
        fs::create_dir_all(dir).unwrap();
        let mut log = TrainLog::to_file(&dir.join(LOG_FILE)).unwrap();
        for k in 1..=12 {
            log.push(LogRecord::Step {
                step: k * 10,
                critic_loss: 1.0,
                actor_loss: 2.0,
                approval: 0.25 + offset * 0.01,
                mean_advantage: 0.0,
                mean_q: 0.0,
            })
            .unwrap();
            log.push(LogRecord::Eval {
                step: k * 10,
                mean_return: k as f64 + offset,
                returns: vec![k as f64 + offset],
                goals: 0,
            })
            .unwrap();
        }
        log.push(LogRecord::Histogram {
            step: 120,
            edges: vec![-1.0, 0.0, 1.0],
            counts: vec![3, 4],
            negative_fraction: 3.0 / 7.0,
        })
        .unwrap();
    }

    #[test]
    fn idempotent_and_round_trips_scores() {
        let tmp = tempfile::tempdir().unwrap();
        write_run(&tmp.path().join("seed-1"), 0.0);
        write_run(&tmp.path().join("seed-2"), 3.0);
        let files = emit_report(tmp.path()).unwrap();
        let first: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
        let files2 = emit_report(tmp.path()).unwrap();
        let second: Vec<Vec<u8>> = files2.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first, second);

        let csv = fs::read_to_string(tmp.path().join("report/curves.csv")).unwrap();
        let mut curves = vec![
            LearningCurve { seed: "seed-1".into(), steps: vec![], returns: vec![] },
            LearningCurve { seed: "seed-2".into(), steps: vec![], returns: vec![] },
        ];
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            for (k, c) in curves.iter_mut().enumerate() {
                c.steps.push(f[0].parse().unwrap());
                c.returns.push(f[1 + 2 * k].parse().unwrap());
            }
        }
        let s = score(&curves, SCORE_WINDOW).unwrap();
        let scores = fs::read_to_string(tmp.path().join("report/scores.csv")).unwrap();
        assert!(scores.contains(&score_row("return", &s)));
    }

    #[test]
    fn missing_logs_are_listed() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir_all(tmp.path().join("seed-1")).unwrap();
        let err = emit_report(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("log.jsonl"), "{err}");
    }
}
