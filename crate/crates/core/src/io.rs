//! File formats: state snapshots (`x,eta,u` CSV plus a JSON sidecar),
//! branch tables, gnuplot `.dat` columns, run reports and strict configs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dcurve::{d_table, Branch, BranchFailure, BranchPoint};
use crate::error::{Error, Result};
use crate::evolution::EvolutionTrace;
use crate::functionals::FunctionalReport;
use crate::model::{eps_from_omega, ModelParams};
use crate::spectral::{make_grid, Grid, RealField, StatePair};
use crate::wave::{residual, SolitaryWave};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Periodic cell `[-L/2, L/2)` sampled at `N` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl GridSpec {
    pub fn of(grid: &Grid) -> Self {
        Self { length: grid.length(), n: grid.n() }
    }

    pub fn build(&self) -> Result<Arc<Grid>> {
        make_grid(self.length, self.n)
    }
}

/// Sidecar of a state snapshot. Wave-specific fields are absent for
/// arbitrary states such as evolution output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMeta {
    pub version: String,
    pub params: ModelParams,
    pub grid: GridSpec,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub residual: Option<f64>,
    #[serde(default)]
    pub functionals: Option<FunctionalReport>,
    #[serde(default)]
    pub time: Option<f64>,
}

impl StateMeta {
    pub fn for_state(u: &StatePair, params: &ModelParams) -> Self {
        Self {
            version: VERSION.to_string(),
            params: *params,
            grid: GridSpec::of(u.grid()),
            omega: None,
            eps: None,
            residual: None,
            functionals: None,
            time: None,
        }
    }

    pub fn for_wave(w: &SolitaryWave) -> Self {
        Self {
            omega: Some(w.omega),
            eps: Some(w.eps),
            residual: Some(w.residual_norm),
            functionals: Some(w.functionals),
            ..Self::for_state(&w.profile, &w.params)
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedState {
    pub state: StatePair,
    pub meta: Option<StateMeta>,
    pub warnings: Vec<String>,
}

impl LoadedState {
    /// Rebuilds the wave record; needs a sidecar with `omega`.
    pub fn into_wave(self) -> Result<SolitaryWave> {
        let meta = self.meta.ok_or_else(|| Error::invalid("state has no metadata sidecar"))?;
        let omega = meta.omega.ok_or_else(|| Error::invalid("metadata carries no omega; not a wave snapshot"))?;
        SolitaryWave::from_profile(&meta.params, omega, self.state)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "nan".into())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Strict JSON decoding; the error names the file, line and column.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{origin}: {e}")))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_json(&text, &path.display().to_string())
}

/// Writes `x,eta,u` rows with 17 significant digits and, when `meta` is
/// given, the `<path>.meta.json` sidecar.
pub fn write_state(path: &Path, u: &StatePair, meta: Option<&StateMeta>) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "x,eta,u")?;
    let x = u.grid().x();
    for ((xi, e), v) in x.iter().zip(u.first.values()).zip(u.second.values()) {
        writeln!(out, "{},{},{}", num(*xi), num(*e), num(*v))?;
    }
    out.flush()?;
    if let Some(m) = meta {
        write_json(&sidecar_path(path), m)?;
    }
    Ok(())
}

pub fn write_wave(path: &Path, w: &SolitaryWave) -> Result<()> {
    write_state(path, &w.profile, Some(&StateMeta::for_wave(w)))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(File::open(path)?))
}

fn check_header(rdr: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Parse(format!("{}: header {:?}, expected {:?}", path.display(), got, expected)));
    }
    Ok(())
}

/// Numeric rows; `row` in errors counts data rows from 1.
fn read_rows(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, expected, path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse(format!("{}: row {row}: {e}", path.display())))?;
        if rec.len() != expected.len() {
            return Err(Error::Parse(format!(
                "{}: row {row}: {} fields, expected {}",
                path.display(),
                rec.len(),
                expected.len()
            )));
        }
        let vals = rec
            .iter()
            .zip(expected)
            .map(|(s, col)| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("{}: row {row}, column {col}: cannot parse {s:?}", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    Ok(rows)
}

/// Reads a snapshot and its sidecar if present. The grid comes from the
/// sidecar, or is inferred from the `x` column, and every `x` is checked
/// against it. A sidecar `omega` whose recomputed residual is far above
/// the recorded one produces a warning, not an error.
pub fn read_state(path: &Path) -> Result<LoadedState> {
    let rows = read_rows(path, &["x", "eta", "u"])?;
    let side = sidecar_path(path);
    let meta: Option<StateMeta> = if side.exists() { Some(read_json(&side)?) } else { None };
    let n = rows.len();
    let spec = match &meta {
        Some(m) => {
            if m.grid.n != n {
                return Err(Error::Parse(format!(
                    "{}: {n} data rows but the sidecar declares N = {} (truncated file?)",
                    path.display(),
                    m.grid.n
                )));
            }
            m.grid
        }
        None => {
            if n < 2 {
                return Err(Error::Parse(format!("{}: need at least two rows", path.display())));
            }
            let dx = (rows[n - 1][0] - rows[0][0]) / (n - 1) as f64;
            GridSpec { length: dx * n as f64, n }
        }
    };
    let grid = spec.build()?;
    let tol = 1e-9 * grid.length();
    for (j, (row, x)) in rows.iter().zip(grid.x()).enumerate() {
        if (row[0] - x).abs() > tol {
            return Err(Error::GridMismatch(format!(
                "{}: row {}: x = {} but the grid has {}",
                path.display(),
                j + 1,
                row[0],
                x
            )));
        }
    }
    let eta = RealField::new(grid.clone(), rows.iter().map(|r| r[1]).collect())?;
    let u = RealField::new(grid.clone(), rows.iter().map(|r| r[2]).collect())?;
    let state = StatePair::new(eta, u)?;
    let mut warnings = Vec::new();
    if let Some(m) = &meta {
        if let Some(omega) = m.omega {
            let r = residual(&state, &m.params, omega)?.norm;
            let recorded = m.residual.unwrap_or(0.0);
            if !(r <= 10.0 * recorded + 1e-9) {
                warnings.push(format!("residual at the recorded omega = {omega} is {r:.3e} (recorded {recorded:.3e}); omega may not match the profile"));
            }
            if let (Some(eps), Ok(e)) = (m.eps, eps_from_omega(omega, m.params.p)) {
                if (eps - e).abs() > 1e-12 * e.max(1.0) {
                    warnings.push(format!("recorded eps = {eps} disagrees with omega ({e})"));
                }
            }
        }
    }
    Ok(LoadedState { state, meta, warnings })
}

pub const BRANCH_COLUMNS: [&str; 12] =
    ["omega", "eps", "Iw_min", "I2w", "G", "H", "Q", "d", "dprime_fd", "dprime_Q", "dsecond_fd", "residual"];

/// Sidecar of a branch table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchMeta {
    pub version: String,
    pub params: ModelParams,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub failure: Option<BranchFailure>,
}

/// One row per point; the derivative columns are `nan` at the end points.
pub fn write_branch(path: &Path, branch: &Branch, params: &ModelParams) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", BRANCH_COLUMNS.join(","))?;
    for row in d_table(branch) {
        let q = row.point;
        let cols = [
            num(q.omega),
            num(q.eps),
            num(q.iw_min),
            num(q.i2w),
            num(q.g),
            num(q.h),
            num(q.q),
            num(q.d),
            opt_num(row.dprime.map(|d| d.fd)),
            opt_num(row.dprime.map(|d| d.via_charge)),
            opt_num(row.dsecond_fd),
            num(q.residual),
        ];
        writeln!(out, "{}", cols.join(","))?;
    }
    out.flush()?;
    let meta = BranchMeta {
        version: VERSION.to_string(),
        params: *params,
        grid: branch.waves.first().map(|w| GridSpec::of(w.grid())),
        failure: branch.failure.clone(),
    };
    write_json(&sidecar_path(path), &meta)
}

#[derive(Debug, Clone)]
pub struct LoadedBranch {
    pub branch: Branch,
    pub meta: BranchMeta,
}

/// Reads a branch table; the sidecar supplies `p`. Derivative columns are
/// recomputed from the point data, not read back.
pub fn read_branch(path: &Path) -> Result<LoadedBranch> {
    let rows = read_rows(path, &BRANCH_COLUMNS)?;
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(Error::Parse(format!("{}: missing sidecar {}", path.display(), side.display())));
    }
    let meta: BranchMeta = read_json(&side)?;
    let points = rows
        .iter()
        .map(|r| BranchPoint {
            omega: r[0],
            eps: r[1],
            iw_min: r[2],
            i2w: r[3],
            g: r[4],
            h: r[5],
            q: r[6],
            d: r[7],
            residual: r[11],
        })
        .collect();
    let mut branch = Branch::from_points(meta.params.p, points)?;
    branch.failure = meta.failure.clone();
    Ok(LoadedBranch { branch, meta })
}

/// Whitespace-separated columns with a `#` header line, for gnuplot.
pub fn write_dat(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) || header.len() != columns.len() {
        return Err(Error::invalid("dat columns must have equal length and one header each"));
    }
    let mut out = create(path)?;
    writeln!(out, "# {}", header.join(" "))?;
    for i in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| num(c[i])).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

/// `t,H,Q,x_norm[,orbit_distance]` rows of an evolution trace.
pub fn write_trace(path: &Path, trace: &EvolutionTrace) -> Result<()> {
    let mut out = create(path)?;
    let orbit = trace.orbit_distance.as_deref();
    writeln!(out, "t,H,Q,x_norm{}", if orbit.is_some() { ",orbit_distance" } else { "" })?;
    for i in 0..trace.len() {
        write!(out, "{},{},{},{}", num(trace.times[i]), num(trace.h[i]), num(trace.q[i]), num(trace.x_norm[i]))?;
        if let Some(d) = orbit {
            write!(out, ",{}", num(d[i]))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// One audited invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl CheckOutcome {
    /// Passes when `value <= tol`.
    pub fn at_most(name: &str, value: f64, tol: f64) -> Self {
        Self { name: name.to_string(), value, tol, passed: value <= tol }
    }

    pub fn flag(name: &str, passed: bool) -> Self {
        Self { name: name.to_string(), value: if passed { 1.0 } else { 0.0 }, tol: 1.0, passed }
    }
}

/// Machine-readable record of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub tolerances: serde_json::Value,
    pub checks: Vec<CheckOutcome>,
    pub results: serde_json::Value,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, config: &impl Serialize, tolerances: &impl Serialize) -> Result<Self> {
        Ok(Self {
            version: VERSION.to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            tolerances: serde_json::to_value(tolerances)?,
            checks: Vec::new(),
            results: serde_json::Value::Null,
            warnings: Vec::new(),
        })
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::localized_state;

    #[test]
    fn state_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let grid = make_grid(37.3, 128).unwrap();
        let u = localized_state(&grid, 11, 2.0, 0.7);
        let params = ModelParams::reference(1.0);
        write_state(&path, &u, Some(&StateMeta::for_state(&u, &params))).unwrap();
        let back = read_state(&path).unwrap();
        assert_eq!(back.state.first.values(), u.first.values());
        assert_eq!(back.state.second.values(), u.second.values());
        assert_eq!(back.state.grid().length(), 37.3);
        assert!(back.warnings.is_empty());
        // without the sidecar the grid is inferred from x
        std::fs::remove_file(sidecar_path(&path)).unwrap();
        let back = read_state(&path).unwrap();
        assert_eq!(back.state.second.values(), u.second.values());
        assert!((back.state.grid().length() - 37.3).abs() < 1e-12);
    }

    #[test]
    fn truncated_csv_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "x,eta,u\n-1.0,0.0,0.0\n-0.5,1.0,2.0\n0.0,3.0e-").unwrap();
        let err = read_state(&path).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        std::fs::write(&path, "x,eta,u\n-1.0,0.0,0.0\n-0.5,1.0").unwrap();
        let err = read_state(&path).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn strict_config_rejects_unknown_keys() {
        let err = parse_json::<ModelParams>("{\"a\": -0.1,\n \"b\": 0.1, \"c\": -0.1, \"p\": 1, \"q\": 2}", "cfg").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown field") && msg.contains("line 2"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn dat_rejects_ragged_columns() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_dat(&dir.path().join("a.dat"), &["x", "y"], &[&[1.0, 2.0], &[1.0]]).is_err());
        write_dat(&dir.path().join("b.dat"), &["x", "y"], &[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("b.dat")).unwrap();
        assert!(text.starts_with("# x y\n"));
    }
}
