//! CSV layout of run traces.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One outer iteration as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// Decision `theta_k` before the update.
    pub theta: Vec<f64>,
    pub t_k: usize,
    pub epsilon_k_bound: f64,
    /// `|x_eps(theta_k) - x(theta_k)|^2`, on diagnostic iterations.
    pub epsilon_k_measured: Option<f64>,
    /// Social cost at the inexact equilibrium of `theta_k`.
    pub social_cost: f64,
    pub player_costs: Vec<f64>,
    /// Norm of the applied update direction.
    pub grad_norm: f64,
    pub dist_theta: f64,
    /// Monte-Carlo norm of the smoothed gradient, on diagnostic iterations.
    pub stat_mc_norm: Option<f64>,
}

fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a string");
}

fn opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        num(out, v);
    }
}

/// Header for `theta_dim` decision coordinates and `n_players` players.
pub fn csv_header(theta_dim: usize, n_players: usize) -> String {
    let mut cols = vec!["k".to_string()];
    cols.extend((0..theta_dim).map(|j| format!("theta_{j}")));
    cols.extend(["t_k", "eps_bound", "eps_measured", "social_cost"].map(String::from));
    cols.extend((1..=n_players).map(|i| format!("cost_{i}")));
    cols.extend(["grad_norm", "dist_theta", "stat_mc_norm"].map(String::from));
    cols.join(",")
}

/// One CSV row; reals carry 17 significant digits, absent values are empty.
pub fn csv_row(r: &IterationRecord) -> String {
    let mut out = r.k.to_string();
    for v in &r.theta {
        out.push(',');
        num(&mut out, *v);
    }
    write!(out, ",{},", r.t_k).expect("writing to a string");
    num(&mut out, r.epsilon_k_bound);
    out.push(',');
    opt(&mut out, r.epsilon_k_measured);
    out.push(',');
    num(&mut out, r.social_cost);
    for v in &r.player_costs {
        out.push(',');
        num(&mut out, *v);
    }
    out.push(',');
    num(&mut out, r.grad_norm);
    out.push(',');
    num(&mut out, r.dist_theta);
    out.push(',');
    opt(&mut out, r.stat_mc_norm);
    out
}

pub fn write_csv<W: Write>(mut w: W, theta_dim: usize, n_players: usize, records: &[IterationRecord]) -> Result<()> {
    writeln!(w, "{}", csv_header(theta_dim, n_players))?;
    for r in records {
        writeln!(w, "{}", csv_row(r))?;
    }
    w.flush()?;
    Ok(())
}

fn bad(line: usize, what: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("trace line {line}: {what}"))
}

/// Parse a trace written by [`write_csv`]; dimensions come from the header.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<IterationRecord>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad(1, "missing header"))??;
    let cols: Vec<&str> = header.split(',').collect();
    let theta_dim = cols.iter().filter(|c| c.starts_with("theta_")).count();
    let n_players = cols.iter().filter(|c| c.starts_with("cost_")).count();
    if header != csv_header(theta_dim, n_players) {
        return Err(bad(1, "unexpected header"));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(lineno, format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let real = |s: &str| s.parse::<f64>().map_err(|e| bad(lineno, format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(lineno, format!("{s:?}: {e}")));
        let optional = |s: &str| if s.is_empty() { Ok(None) } else { real(s).map(Some) };
        let mut it = fields.into_iter();
        let mut next = || it.next().expect("field count checked");
        let k = int(next())?;
        let theta = (0..theta_dim).map(|_| real(next())).collect::<Result<Vec<_>>>()?;
        let t_k = int(next())?;
        let epsilon_k_bound = real(next())?;
        let epsilon_k_measured = optional(next())?;
        let social_cost = real(next())?;
        let player_costs = (0..n_players).map(|_| real(next())).collect::<Result<Vec<_>>>()?;
        records.push(IterationRecord {
            k,
            theta,
            t_k,
            epsilon_k_bound,
            epsilon_k_measured,
            social_cost,
            player_costs,
            grad_norm: real(next())?,
            dist_theta: real(next())?,
            stat_mc_norm: optional(next())?,
        });
    }
    Ok(records)
}
