//! CSV and JSON artifacts.
//!
//! CSV files start with `# key: value` comment lines (fingerprint, status),
//! followed by one header row. Floats are written with 17 significant digits,
//! which round-trips every `f64`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use crate::abm::{RunStatus, StepSummary, Trajectory};
use crate::config::Format;
use crate::error::{Error, Result};
use crate::phase::PhaseDiagram;
use crate::Complex64;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

const SUMMARY_COLUMNS: [&str; 10] = [
    "wage_growth",
    "savings",
    "labor_supply",
    "labor_demand",
    "hired",
    "unemployment",
    "total_profit",
    "total_excess",
    "mean_profit_ratio",
    "mean_excess_ratio",
];

fn summary_values(s: &StepSummary) -> [f64; 10] {
    [
        s.wage_growth,
        s.savings,
        s.labor_supply,
        s.labor_demand,
        s.hired,
        s.unemployment,
        s.total_profit,
        s.total_excess,
        s.mean_profit_ratio,
        s.mean_excess_ratio,
    ]
}

fn summary_from(v: &[f64]) -> StepSummary {
    StepSummary {
        wage_growth: v[0],
        savings: v[1],
        labor_supply: v[2],
        labor_demand: v[3],
        hired: v[4],
        unemployment: v[5],
        total_profit: v[6],
        total_excess: v[7],
        mean_profit_ratio: v[8],
        mean_excess_ratio: v[9],
    }
}

fn status_text(s: &RunStatus) -> String {
    match s {
        RunStatus::Completed => "completed".into(),
        RunStatus::Diverged { step } => format!("diverged@{step}"),
    }
}

/// Columns: `step, p_0.., gamma_0.., <summary columns>`.
pub fn write_trajectory_csv<W: Write>(tr: &Trajectory, fingerprint: &str, mut w: W) -> Result<()> {
    let n = tr.prices.first().map(|r| r.len()).unwrap_or(0);
    writeln!(w, "# fingerprint: {fingerprint}")?;
    writeln!(w, "# status: {}", status_text(&tr.status))?;
    writeln!(w, "# length: {}", tr.length)?;
    let mut header = vec!["step".to_string()];
    header.extend((0..n).map(|i| format!("p_{i}")));
    header.extend((0..n).map(|i| format!("gamma_{i}")));
    header.extend(SUMMARY_COLUMNS.iter().map(|s| s.to_string()));
    writeln!(w, "{}", header.join(","))?;
    for k in 0..tr.len() {
        let mut row = vec![tr.steps[k].to_string()];
        row.extend(tr.prices[k].iter().map(|x| fmt_f64(*x)));
        row.extend(tr.gammas[k].iter().map(|x| fmt_f64(*x)));
        row.extend(summary_values(&tr.summaries[k]).iter().map(|x| fmt_f64(*x)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads back a file written by [`write_trajectory_csv`]; returns the fingerprint too.
pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<(Trajectory, String)> {
    let bad = |m: String| Error::Io(format!("malformed trajectory csv: {m}"));
    let mut fingerprint = String::new();
    let mut status = RunStatus::Completed;
    let mut length = 0;
    let mut n = None;
    let mut tr = Trajectory {
        steps: Vec::new(),
        prices: Vec::new(),
        gammas: Vec::new(),
        summaries: Vec::new(),
        profit_ratios: Vec::new(),
        excess_ratios: Vec::new(),
        status,
        length,
    };
    for line in r.lines() {
        let line = line?;
        if let Some(meta) = line.strip_prefix("# ") {
            let (key, value) = meta.split_once(": ").ok_or_else(|| bad(line.clone()))?;
            match key {
                "fingerprint" => fingerprint = value.to_string(),
                "length" => length = value.parse().map_err(|_| bad(line.clone()))?,
                "status" => {
                    status = match value.strip_prefix("diverged@") {
                        Some(s) => RunStatus::Diverged { step: s.parse().map_err(|_| bad(line.clone()))? },
                        None => RunStatus::Completed,
                    }
                }
                _ => {}
            }
            continue;
        }
        if n.is_none() {
            let cols = line.split(',').count();
            let k = cols.checked_sub(1 + SUMMARY_COLUMNS.len()).ok_or_else(|| bad("short header".into()))?;
            if k % 2 != 0 {
                return Err(bad("odd number of firm columns".into()));
            }
            n = Some(k / 2);
            continue;
        }
        let n = n.expect("header read");
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + 2 * n + SUMMARY_COLUMNS.len() {
            return Err(bad(format!("row has {} fields", fields.len())));
        }
        tr.steps.push(fields[0].parse().map_err(|_| bad(fields[0].into()))?);
        let vals: Vec<f64> = fields[1..].iter().map(|f| f.parse::<f64>().map_err(|_| bad(f.to_string()))).collect::<Result<_>>()?;
        tr.prices.push(vals[..n].to_vec());
        tr.gammas.push(vals[n..2 * n].to_vec());
        tr.summaries.push(summary_from(&vals[2 * n..]));
    }
    tr.status = status;
    tr.length = length;
    Ok((tr, fingerprint))
}

/// Columns: `ix, iy, <x param>, <y param>, label, votes, distance, mean_inflation, period, amplitude`.
pub fn write_phase_diagram_csv<W: Write>(d: &PhaseDiagram, mut w: W) -> Result<()> {
    writeln!(w, "# fingerprint: {}", d.meta.fingerprint)?;
    writeln!(w, "# thresholds: {}", serde_json::to_string(&d.meta.thresholds).map_err(|e| Error::Io(e.to_string()))?)?;
    writeln!(w, "ix,iy,{},{},label,votes,distance,mean_inflation,period,amplitude", d.x.param.name(), d.y.param.name())?;
    for c in &d.cells {
        let votes: Vec<&str> = c.votes.iter().map(|v| v.as_str()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            c.ix,
            c.iy,
            fmt_f64(c.x),
            fmt_f64(c.y),
            c.label,
            votes.join(";"),
            fmt_opt(c.summary.distance),
            fmt_f64(c.summary.mean_inflation),
            fmt_opt(c.summary.period),
            fmt_f64(c.summary.amplitude)
        )?;
    }
    Ok(())
}

/// Columns: `index, re, im`.
pub fn write_spectrum_csv<W: Write>(eigs: &[Complex64], fingerprint: &str, mut w: W) -> Result<()> {
    writeln!(w, "# fingerprint: {fingerprint}")?;
    writeln!(w, "index,re,im")?;
    for (k, z) in eigs.iter().enumerate() {
        writeln!(w, "{k},{},{}", fmt_f64(z.re), fmt_f64(z.im))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, value).map_err(|e| Error::Io(e.to_string()))
}

/// Writes `value` to `path` with `write_csv` or as JSON.
pub fn emit<T: Serialize>(value: &T, path: &Path, format: Format, write_csv: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(&mut buf)?,
        Format::Json => write_json(value, &mut buf)?,
    }
    std::fs::write(path, buf).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(rows: usize, n: usize, seed: f64) -> Trajectory {
        let v = |k: usize, i: usize| (seed + k as f64 * 0.37 + i as f64).sin() * 1e3_f64.powf((k % 5) as f64 - 2.0) + 1.0 / 3.0;
        let s = |k: usize| StepSummary {
            wage_growth: -v(k, 0) * 1e-7,
            savings: v(k, 1),
            labor_supply: 1.0 / 7.0,
            labor_demand: v(k, 2),
            hired: 0.1,
            unemployment: 0.0,
            total_profit: -0.0,
            total_excess: 1e-300,
            mean_profit_ratio: v(k, 3),
            mean_excess_ratio: f64::MIN_POSITIVE,
        };
        Trajectory {
            steps: (0..rows).map(|k| 10 * k).collect(),
            prices: (0..rows).map(|k| (0..n).map(|i| v(k, i)).collect()).collect(),
            gammas: (0..rows).map(|k| (0..n).map(|i| v(k, i + n)).collect()).collect(),
            summaries: (0..rows).map(s).collect(),
            profit_ratios: Vec::new(),
            excess_ratios: Vec::new(),
            status: RunStatus::Diverged { step: 10 * rows },
            length: 10 * rows,
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(rows in 1usize..20, n in 1usize..6, seed in -10.0f64..10.0) {
            let tr = traj(rows, n, seed);
            let mut buf = Vec::new();
            write_trajectory_csv(&tr, "abc", &mut buf).unwrap();
            let (back, fp) = read_trajectory_csv(&buf[..]).unwrap();
            prop_assert_eq!(fp, "abc");
            prop_assert_eq!(back, tr);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let tr = traj(7, 3, 0.25);
        let s = serde_json::to_string(&tr).unwrap();
        let back: Trajectory = serde_json::from_str(&s).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn stride_keeps_endpoints() {
        let tr = traj(23, 2, 1.0);
        let d = tr.downsample(10);
        assert_eq!(d.steps, vec![0, 100, 200, 220]);
        let d1 = tr.downsample(22);
        assert_eq!(d1.steps, vec![0, 220]);
        assert_eq!(tr.downsample(1), tr);
    }

    #[test]
    fn io_errors_surface() {
        let tr = traj(2, 1, 0.0);
        let err = emit(&tr, Path::new("/nonexistent-dir/x.csv"), Format::Csv, |b| write_trajectory_csv(&tr, "f", b)).unwrap_err();
        assert!(matches!(err, Error::Io(ref m) if m.contains("/nonexistent-dir/x.csv")), "{err}");
    }
}
