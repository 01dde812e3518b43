//! Columnar plot data from traces: whitespace-separated text with a
//! `#`-prefixed header line naming the columns.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::meanfield::{advantages, MeanFieldState};
use crate::trace::{Layout, Snapshot, TrajectoryTrace};

/// One columnar table.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// File suffix, e.g. `leaders`.
    pub name: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Rows dropped because a log argument was nonpositive or an advantage
    /// was undefined.
    pub omitted: usize,
}

impl Panel {
    fn new(name: &'static str, columns: Vec<String>) -> Self {
        Panel { name, columns, rows: Vec::new(), omitted: 0 }
    }

    fn push(&mut self, row: Option<Vec<f64>>) {
        match row {
            Some(r) => self.rows.push(r),
            None => self.omitted += 1,
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn render(&self) -> String {
        let mut out = format!("# {}\n", self.columns.join(" "));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn leaders_row(snap: &Snapshot, layout: &Layout) -> Vec<f64> {
    let s = layout.s as f64;
    let beta: f64 = (1..=layout.bins()).map(|j| snap.value(layout, layout.beta(j))).sum();
    vec![
        snap.t,
        snap.value(layout, Layout::ALPHA) * s,
        beta * s / (s - 1.0),
        snap.value(layout, Layout::DELTA) * s,
        snap.value(layout, layout.u()),
    ]
}

fn finite_all(row: Vec<f64>) -> Option<Vec<f64>> {
    row.iter().all(|x| x.is_finite()).then_some(row)
}

fn log_ratio_row(snap: &Snapshot, layout: &Layout) -> Option<Vec<f64>> {
    let decisive = 1.0 / layout.s as f64 - snap.value(layout, Layout::DELTA);
    if decisive.is_nan() || decisive <= 0.0 {
        return None;
    }
    let mut row = vec![snap.t, snap.ln_value(layout, Layout::ALPHA) - decisive.ln()];
    for j in 1..=layout.bins() {
        let g = snap.fractions[layout.gamma(j)];
        if g.is_nan() || g <= 0.0 {
            return None;
        }
        row.push(snap.ln_value(layout, layout.beta(j)) - g.ln());
    }
    finite_all(row)
}

fn advantage_row(snap: &Snapshot, s: usize) -> Option<Vec<f64>> {
    let view = advantages(&MeanFieldState::from_snapshot(snap, s)).ok()?;
    let mut row = vec![snap.t, view.xi];
    row.extend(view.eta);
    Some(row)
}

fn bins_row(snap: &Snapshot, layout: &Layout) -> Vec<f64> {
    let mut row = vec![snap.t];
    row.extend((1..=layout.bins() + 1).map(|j| snap.value(layout, layout.beta(j))));
    row.extend((1..=layout.bins()).map(|j| snap.fractions[layout.gamma(j)]));
    row
}

/// The four panels of one trace:
///
/// - `leaders`: `α·s`, `β·s/(s-1)`, `δ·s`, `u` (β sums the informed wrong followers)
/// - `logratios`: `log(α/(1/s-δ))` and `log(β_j/γ_j)`
/// - `advantages`: `ξ` and `η_j`
/// - `bins`: raw `β_j` and `γ_j`
pub fn panels(trace: &TrajectoryTrace) -> Vec<Panel> {
    let layout = trace.layout();
    let bins = layout.bins();
    let names = |prefix: &'static str, upto: usize| (1..=upto).map(move |j| format!("{prefix}_{j}"));
    let mut leaders = Panel::new(
        "leaders",
        ["t", "alpha_s", "beta_s_over_s_minus_1", "delta_s", "u"].map(String::from).to_vec(),
    );
    let mut logs = Panel::new(
        "logratios",
        ["t".to_string(), "log_alpha_over_decisive".to_string()].into_iter().chain(names("log_beta_over_gamma", bins)).collect(),
    );
    let mut adv = Panel::new(
        "advantages",
        ["t".to_string(), "xi".to_string()].into_iter().chain(names("eta", bins)).collect(),
    );
    let mut raw = Panel::new(
        "bins",
        std::iter::once("t".to_string()).chain(names("beta", bins + 1)).chain(names("gamma", bins)).collect(),
    );
    for snap in &trace.samples {
        leaders.push(Some(leaders_row(snap, &layout)));
        logs.push(log_ratio_row(snap, &layout));
        adv.push(advantage_row(snap, trace.s));
        raw.push(Some(bins_row(snap, &layout)));
    }
    vec![leaders, logs, adv, raw]
}

/// Files written for one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotFile {
    pub path: PathBuf,
    pub rows: usize,
    pub omitted: usize,
}

/// Write `<dir>/<stem>.<panel>.dat` for every panel of `trace`.
pub fn write_panels(trace: &TrajectoryTrace, dir: &Path, stem: &str) -> std::io::Result<Vec<PlotFile>> {
    let mut out = Vec::new();
    for panel in panels(trace) {
        let path = dir.join(format!("{stem}.{}.dat", panel.name));
        std::fs::write(&path, panel.render())?;
        out.push(PlotFile { path, rows: panel.rows.len(), omitted: panel.omitted });
    }
    Ok(out)
}

/// Columnar rendering of arbitrary named series sharing one row count.
pub fn render_columns(columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from("#");
    for (name, _) in columns {
        let _ = write!(out, " {name}");
    }
    out.push('\n');
    let rows = columns.iter().map(|c| c.1.len()).min().unwrap_or(0);
    for k in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| format!("{:e}", c.1[k])).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::integrate_sampled;

    #[test]
    fn unanimous_alpha_column_is_zero() {
        let tr = integrate_sampled(&MeanFieldState::initial(3, 1.0), 5.0, 0.1, 5).unwrap();
        let p = &panels(&tr)[0];
        assert!(p.column("alpha_s").unwrap().iter().all(|&x| x == 0.0));
        // every log(α / ...) is -inf, so all log-ratio rows are dropped
        assert_eq!(panels(&tr)[1].omitted, tr.len());
    }

    #[test]
    fn header_and_arity() {
        let tr = integrate_sampled(&MeanFieldState::initial(2, 0.2), 1.0, 0.1, 2).unwrap();
        for p in panels(&tr) {
            let text = p.render();
            let mut lines = text.lines();
            let header: Vec<&str> = lines.next().unwrap().trim_start_matches('#').split_whitespace().collect();
            assert_eq!(header.len(), p.columns.len());
            for l in lines {
                assert_eq!(l.split_whitespace().count(), header.len());
            }
        }
    }

    #[test]
    fn column_helper() {
        let text = render_columns(&[("a", &[1.0, 2.0]), ("b", &[3.0, 4.0, 5.0])]);
        assert_eq!(text, "# a b\n1e0 3e0\n2e0 4e0\n");
    }
}
