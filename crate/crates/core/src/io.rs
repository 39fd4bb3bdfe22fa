//! Text formats for configurations, trajectories, ledgers and histograms.
//!
//! Configuration file: a header line `d r n box` (`box` is `free` or the
//! periodic side length) followed by `n` lines of `d` coordinates.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BallConfiguration, Boundary};
use crate::gibbs::HistogramBin;
use crate::skorohod::ReflectionLedger;
use crate::trajectory::Trajectory;

pub fn format_config(config: &BallConfiguration) -> String {
    let mut s = String::new();
    let bx = match config.boundary() {
        Boundary::Free => "free".to_string(),
        Boundary::Periodic(l) => format!("{l:.16e}"),
    };
    let _ = writeln!(s, "{} {:.16e} {} {}", config.dim(), config.radius(), config.n_balls(), bx);
    for j in 0..config.n_balls() {
        let row: Vec<String> = config.position(j).iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn parse_config(text: &str) -> Result<BallConfiguration> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| Error::Input("empty configuration file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(Error::Input(format!("line {hl}: expected header `d r n box`")));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Input(format!("line {hl}: bad {what} `{s}`")))
    };
    let dim: usize = fields[0].parse().map_err(|_| Error::Input(format!("line {hl}: bad dimension")))?;
    let radius = num(fields[1], "radius")?;
    let n: usize = fields[2].parse().map_err(|_| Error::Input(format!("line {hl}: bad ball count")))?;
    let boundary = match fields[3] {
        "free" => Boundary::Free,
        s => Boundary::Periodic(num(s, "box side")?),
    };
    let mut pos = Vec::with_capacity(n * dim);
    for (ln, line) in lines {
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != dim {
            return Err(Error::Input(format!("line {ln}: expected {dim} coordinates")));
        }
        for v in row {
            pos.push(v.parse::<f64>().map_err(|_| Error::Input(format!("line {ln}: bad coordinate `{v}`")))?);
        }
    }
    if pos.len() != n * dim {
        return Err(Error::Input(format!("expected {n} balls, found {}", pos.len() / dim.max(1))));
    }
    BallConfiguration::new(dim, radius, pos, boundary)
}

pub fn read_config(path: &Path) -> Result<BallConfiguration> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// `step,time,ball,x0,...` one row per ball per frame.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    let mut header = String::from("step,time,ball");
    for a in 0..traj.dim() {
        let _ = write!(header, ",x{a}");
    }
    writeln!(out, "{header}")?;
    let mut line = String::new();
    for k in 0..traj.n_frames() {
        for j in 0..traj.n_balls() {
            line.clear();
            let _ = write!(line, "{k},{},{j}", traj.times()[k]);
            for v in traj.position(k, j) {
                let _ = write!(line, ",{v}");
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// `step,time,j,k,dL,L` for every positive local-time increment; `time` is the step's right end.
pub fn write_ledger_csv<W: Write>(ledger: &ReflectionLedger, step_size: f64, mut out: W) -> Result<()> {
    writeln!(out, "step,time,j,k,dL,L")?;
    let mut cumulative = std::collections::BTreeMap::new();
    for (s, step) in ledger.steps().iter().enumerate() {
        for p in &step.pairs {
            let total = cumulative.entry((p.j, p.k)).or_insert(0.0);
            *total += p.dl;
            writeln!(out, "{},{},{},{},{},{}", s + 1, (s + 1) as f64 * step_size, p.j, p.k, p.dl, total)?;
        }
    }
    Ok(())
}

pub fn write_histograms_csv<W: Write>(bins: &[HistogramBin], mut out: W) -> Result<()> {
    writeln!(out, "bin_left,bin_right,count_before,count_after")?;
    for b in bins {
        writeln!(out, "{},{},{},{}", b.left, b.right, b.before, b.after)?;
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}
