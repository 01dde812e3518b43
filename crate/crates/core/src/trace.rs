//! Shared trajectory schema for both engines and its on-disk text format.
//!
//! A trace file is plain text. Header lines start with `#` and carry
//! `key: value` pairs; the last header line names the columns. Every data row
//! is whitespace separated, in the fixed column order
//! `t alpha delta beta_1..beta_{8s+1} gamma_1..gamma_{8s} u comms scale_exp2`.
//! Floats are written in Rust's shortest round-trip decimal form, so
//! `read_trace(write_trace(x)) == x` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &str = "popcon-trace v1";

/// Which engine produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemTag {
    Random,
    Meanfield,
}

impl SystemTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SystemTag::Random => "random",
            SystemTag::Meanfield => "meanfield",
        }
    }
}

/// Index arithmetic for the fraction vector of a snapshot.
///
/// Order: `alpha, delta, beta_1..beta_{8s+1}, gamma_1..gamma_{8s}, u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub s: usize,
}

impl Layout {
    pub fn new(s: usize) -> Self {
        Layout { s }
    }

    /// Number of counter bins, `8s`.
    pub fn bins(&self) -> usize {
        8 * self.s
    }

    pub const ALPHA: usize = 0;
    pub const DELTA: usize = 1;

    /// Index of `beta_j`, `j` in `1..=8s+1`.
    pub fn beta(&self, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.bins() + 1);
        1 + j
    }

    /// Index of `gamma_j`, `j` in `1..=8s`.
    pub fn gamma(&self, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.bins());
        self.bins() + 2 + j
    }

    pub fn u(&self) -> usize {
        2 * self.bins() + 3
    }

    /// Length of the fraction vector, `16s + 4`.
    pub fn len(&self) -> usize {
        2 * self.bins() + 4
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index range of `beta_1..=beta_{8s+1}`.
    pub fn beta_range(&self) -> std::ops::Range<usize> {
        2..self.bins() + 3
    }

    /// Index range of `gamma_1..=gamma_{8s}`.
    pub fn gamma_range(&self) -> std::ops::Range<usize> {
        self.bins() + 3..2 * self.bins() + 3
    }

    /// Whether a fraction index belongs to the wrong/undecided side
    /// (`alpha`, `delta`, `beta_j`), the coordinates affected by `scale_exp2`.
    pub fn is_wrong_side(&self, idx: usize) -> bool {
        idx < self.bins() + 3
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        names.push("alpha".to_string());
        names.push("delta".to_string());
        for j in 1..=self.bins() + 1 {
            names.push(format!("beta_{j}"));
        }
        for j in 1..=self.bins() {
            names.push(format!("gamma_{j}"));
        }
        names.push("u".to_string());
        names
    }
}

/// One time-indexed sample.
///
/// Wrong-side coordinates (`alpha`, `delta`, `beta_j`) are stored multiplied
/// by `2^scale_exp2`; the true fraction is `fractions[i] * 2^-scale_exp2`.
/// Random traces and young mean-field traces always have `scale_exp2 == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub fractions: Vec<f64>,
    pub comms: u64,
    pub scale_exp2: i32,
}

impl Snapshot {
    /// True value of a coordinate (may underflow to zero for deeply scaled
    /// wrong-side coordinates).
    pub fn value(&self, layout: &Layout, idx: usize) -> f64 {
        let v = self.fractions[idx];
        if self.scale_exp2 != 0 && layout.is_wrong_side(idx) {
            v * exp2i(-self.scale_exp2)
        } else {
            v
        }
    }

    /// Natural log of the true value of a coordinate, exact even when the
    /// value itself is below the `f64` range.
    pub fn ln_value(&self, layout: &Layout, idx: usize) -> f64 {
        let v = self.fractions[idx].ln();
        if layout.is_wrong_side(idx) {
            v - f64::from(self.scale_exp2) * std::f64::consts::LN_2
        } else {
            v
        }
    }

    /// `1/s + sum(gamma_j) + u - 1`: zero when leaders, informed followers
    /// and uninformed followers account for the whole population.
    pub fn mass_defect(&self, layout: &Layout) -> f64 {
        let gamma: f64 = self.fractions[layout.gamma_range()].iter().sum();
        1.0 / layout.s as f64 + gamma + self.fractions[layout.u()] - 1.0
    }
}

/// `2^e` for any `i32`, flushing to zero or infinity outside the `f64` range.
pub fn exp2i(e: i32) -> f64 {
    if e > 1023 {
        f64::INFINITY
    } else if e < -1074 {
        0.0
    } else if e < -1022 {
        f64::from_bits(1u64 << (e + 1074) as u32)
    } else {
        f64::from_bits(((e + 1023) as u64) << 52)
    }
}

/// Time-indexed samples of either engine in one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTrace {
    pub system: SystemTag,
    pub s: usize,
    /// Population size for random traces; the nominal `n` for mean-field ones.
    pub n: Option<u64>,
    pub rho: f64,
    /// `None` for mean-field traces.
    pub seed: Option<u64>,
    /// Integration step (mean-field) or sample interval (random).
    pub step: f64,
    pub samples: Vec<Snapshot>,
}

impl TrajectoryTrace {
    pub fn new(system: SystemTag, s: usize, n: Option<u64>, rho: f64, seed: Option<u64>, step: f64) -> Self {
        TrajectoryTrace { system, s, n, rho, seed, step, samples: Vec::new() }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.s)
    }

    pub fn sample_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|x| x.t)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.samples.last()
    }

    /// Snapshots with `t` inside `[t_a, t_b]` (with a small tolerance).
    pub fn window(&self, t_a: f64, t_b: f64) -> impl Iterator<Item = &Snapshot> {
        self.samples.iter().filter(move |x| x.t >= t_a - TIME_EPS && x.t <= t_b + TIME_EPS)
    }
}

/// Tolerance used when matching sample times across engines.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}: line {line}: expected {expected} columns, found {found}")]
    Arity { path: PathBuf, line: usize, expected: usize, found: usize },
    #[error("{path}: line {line}: time {t} does not increase")]
    NonMonotoneTime { path: PathBuf, line: usize, t: f64 },
    #[error("{path}: line {line}: cannot parse `{token}`")]
    BadNumber { path: PathBuf, line: usize, token: String },
}

/// Serialize a trace to its text form. Same trace, same bytes.
pub fn format_trace(trace: &TrajectoryTrace) -> String {
    let layout = trace.layout();
    let mut out = String::new();
    let _ = writeln!(out, "# {MAGIC}");
    let _ = writeln!(out, "# system: {}", trace.system.as_str());
    match trace.n {
        Some(n) => {
            let _ = writeln!(out, "# n: {n}");
        }
        None => {
            let _ = writeln!(out, "# n: -");
        }
    }
    let _ = writeln!(out, "# s: {}", trace.s);
    let _ = writeln!(out, "# rho: {:?}", trace.rho);
    match trace.seed {
        Some(seed) => {
            let _ = writeln!(out, "# seed: {seed}");
        }
        None => {
            let _ = writeln!(out, "# seed: meanfield");
        }
    }
    let _ = writeln!(out, "# step: {:?}", trace.step);
    let _ = write!(out, "# columns: t");
    for name in layout.column_names() {
        let _ = write!(out, " {name}");
    }
    let _ = writeln!(out, " comms scale_exp2");
    for snap in &trace.samples {
        let _ = write!(out, "{:?}", snap.t);
        for v in &snap.fractions {
            let _ = write!(out, " {v:?}");
        }
        let _ = writeln!(out, " {} {}", snap.comms, snap.scale_exp2);
    }
    out
}

pub fn write_trace(trace: &TrajectoryTrace, path: &Path) -> Result<(), TraceError> {
    fs::write(path, format_trace(trace)).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })
}

pub fn read_trace(path: &Path) -> Result<TrajectoryTrace, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
    parse_trace(&text, path)
}

/// Parse the text form; `origin` is only used to name the source in errors.
pub fn parse_trace(text: &str, origin: &Path) -> Result<TrajectoryTrace, TraceError> {
    let path = origin.to_path_buf();
    let header_err = |reason: String| TraceError::MalformedHeader { path: path.clone(), reason };

    let mut lines = text.lines().enumerate().peekable();
    let mut fields: Vec<(String, String)> = Vec::new();
    while let Some((_, line)) = lines.peek() {
        let Some(rest) = line.strip_prefix('#') else { break };
        fields.push(match rest.trim().split_once(':') {
            Some((k, v)) => (k.trim().to_string(), v.trim().to_string()),
            None => (rest.trim().to_string(), String::new()),
        });
        lines.next();
    }
    if fields.first().map(|f| f.0.as_str()) != Some(MAGIC) {
        return Err(header_err(format!("missing `# {MAGIC}` line")));
    }
    let get = |key: &str| -> Result<&str, TraceError> {
        fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| header_err(format!("missing `{key}`")))
    };
    fn num<T: FromStr>(v: &str, key: &str) -> Result<T, String> {
        v.parse().map_err(|_| format!("bad `{key}` value `{v}`"))
    }

    let system = match get("system")? {
        "random" => SystemTag::Random,
        "meanfield" => SystemTag::Meanfield,
        other => return Err(header_err(format!("unknown system `{other}`"))),
    };
    let n = match get("n")? {
        "-" => None,
        v => Some(num::<u64>(v, "n").map_err(header_err)?),
    };
    let s: usize = num(get("s")?, "s").map_err(header_err)?;
    if s == 0 {
        return Err(header_err("s must be positive".into()));
    }
    let rho: f64 = num(get("rho")?, "rho").map_err(header_err)?;
    let seed = match get("seed")? {
        "meanfield" => None,
        v => Some(num::<u64>(v, "seed").map_err(header_err)?),
    };
    let step: f64 = num(get("step")?, "step").map_err(header_err)?;

    let layout = Layout::new(s);
    let mut expected_cols = vec!["t".to_string()];
    expected_cols.extend(layout.column_names());
    expected_cols.push("comms".into());
    expected_cols.push("scale_exp2".into());
    let columns: Vec<String> = get("columns")?.split_whitespace().map(str::to_string).collect();
    if columns != expected_cols {
        return Err(header_err(format!(
            "column list does not match s = {s} (expected {} columns, found {})",
            expected_cols.len(),
            columns.len()
        )));
    }

    let arity = expected_cols.len();
    let mut trace = TrajectoryTrace::new(system, s, n, rho, seed, step);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != arity {
            return Err(TraceError::Arity { path, line: line_no, expected: arity, found: tokens.len() });
        }
        let bad = |token: &str| TraceError::BadNumber { path: path.clone(), line: line_no, token: token.to_string() };
        let t: f64 = tokens[0].parse().map_err(|_| bad(tokens[0]))?;
        if let Some(prev) = trace.samples.last() {
            if t.is_nan() || t <= prev.t {
                return Err(TraceError::NonMonotoneTime { path, line: line_no, t });
            }
        }
        let mut fractions = Vec::with_capacity(layout.len());
        for tok in &tokens[1..arity - 2] {
            fractions.push(tok.parse::<f64>().map_err(|_| bad(tok))?);
        }
        let comms: u64 = tokens[arity - 2].parse().map_err(|_| bad(tokens[arity - 2]))?;
        let scale_exp2: i32 = tokens[arity - 1].parse().map_err(|_| bad(tokens[arity - 1]))?;
        trace.samples.push(Snapshot { t, fractions, comms, scale_exp2 });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_trace(s: usize, rows: usize) -> TrajectoryTrace {
        let layout = Layout::new(s);
        let mut trace = TrajectoryTrace::new(SystemTag::Random, s, Some(20), 0.1, Some(7), 0.05);
        for k in 0..rows {
            let fractions = (0..layout.len()).map(|i| (i as f64 + 0.1) / (k as f64 + 3.0)).collect();
            trace.samples.push(Snapshot { t: k as f64 * 0.05, fractions, comms: k as u64, scale_exp2: 0 });
        }
        trace
    }

    #[test]
    fn layout_indices_are_contiguous() {
        let l = Layout::new(2);
        assert_eq!(l.beta(1), 2);
        assert_eq!(l.beta(17), 18);
        assert_eq!(l.gamma(1), 19);
        assert_eq!(l.gamma(16), 34);
        assert_eq!(l.u(), 35);
        assert_eq!(l.len(), 36);
        assert_eq!(l.column_names().len(), l.len());
    }

    #[test]
    fn exp2i_matches_powi() {
        for e in [-1074, -1060, -1022, -300, -1, 0, 1, 52, 1023] {
            assert_eq!(exp2i(e), 2f64.powi(e), "e = {e}");
        }
        assert_eq!(exp2i(-5000), 0.0);
    }

    #[test]
    fn empty_trace_round_trips() {
        let trace = TrajectoryTrace::new(SystemTag::Meanfield, 5, None, 0.1, None, 0.01);
        let text = format_trace(&trace);
        assert_eq!(parse_trace(&text, Path::new("mem")).unwrap(), trace);
    }

    #[test]
    fn random_trace_round_trips_bit_exactly() {
        let trace = sample_trace(2, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        write_trace(&trace, &path).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back, trace);
        assert_eq!(format_trace(&back), format_trace(&trace));
    }

    #[test]
    fn wrong_arity_names_the_line() {
        let mut text = format_trace(&sample_trace(2, 2));
        text.push_str("1.0 2.0 3.0\n");
        let err = parse_trace(&text, Path::new("bad.trace")).unwrap_err();
        let header_lines = 8;
        match err {
            TraceError::Arity { line, expected, found, .. } => {
                assert_eq!(line, header_lines + 3);
                assert_eq!(expected, 39);
                assert_eq!(found, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_time_is_rejected() {
        let mut trace = sample_trace(2, 3);
        trace.samples[2].t = trace.samples[1].t;
        let err = parse_trace(&format_trace(&trace), Path::new("x")).unwrap_err();
        assert!(matches!(err, TraceError::NonMonotoneTime { line: 11, .. }), "{err:?}");
    }

    #[test]
    fn malformed_header_is_rejected() {
        let err = parse_trace("# something else\n0 1 2\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, TraceError::MalformedHeader { .. }));
        let text = format_trace(&sample_trace(2, 1)).replace("# s: 2", "# s: 3");
        let err = parse_trace(&text, Path::new("x")).unwrap_err();
        assert!(matches!(err, TraceError::MalformedHeader { .. }), "{err:?}");
    }

    #[test]
    fn error_names_the_file() {
        let err = read_trace(Path::new("/nonexistent/dir/run.trace")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/run.trace"));
    }

    proptest! {
        #[test]
        fn arbitrary_finite_values_round_trip(
            vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 36),
            comms in any::<u64>(),
            scale in any::<i32>(),
        ) {
            let mut trace = TrajectoryTrace::new(SystemTag::Meanfield, 2, Some(64), 0.3, None, 1e-3);
            trace.samples.push(Snapshot { t: 0.0, fractions: vals.clone(), comms, scale_exp2: scale });
            trace.samples.push(Snapshot { t: 1e-3, fractions: vals, comms, scale_exp2: scale });
            let back = parse_trace(&format_trace(&trace), Path::new("p")).unwrap();
            prop_assert_eq!(back, trace);
        }
    }
}
