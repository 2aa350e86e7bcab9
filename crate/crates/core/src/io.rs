//! File formats: dataset CSV, prediction-point CSV, prediction output CSV and
//! the fitted-model JSON file.
//!
//! Dataset columns: `component` (1 or 2), `z`, `u_1..u_q`, `x_1..x_p` and an
//! optional `exposure`. An intercept column is prepended to `U` unless
//! disabled. Row numbers in errors count data rows from 1.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::FittedModel;
use crate::likelihood::{Component, Dataset};
use crate::prediction::{NewPoint, PredictionResult};

fn numbered(header: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    let mut cols: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.trim().strip_prefix(prefix).and_then(|k| k.parse::<usize>().ok()).map(|k| (k, i)))
        .collect();
    cols.sort();
    for (expected, (k, _)) in cols.iter().enumerate() {
        if *k != expected + 1 {
            return Err(Error::Format(format!("columns `{prefix}N` must be numbered 1, 2, ... without gaps")));
        }
    }
    Ok(cols.into_iter().map(|(_, i)| i).collect())
}

fn column(header: &csv::StringRecord, name: &str) -> Option<usize> {
    header.iter().position(|h| h.trim() == name)
}

fn parse_f64(s: &str, row: usize, what: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Row { row, message: format!("{what} `{s}` is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Row { row, message: format!("{what} is not finite") });
    }
    Ok(v)
}

struct Rows {
    z: Vec<u64>,
    u: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    e: Vec<f64>,
}

fn into_component(r: Rows, intercept: bool, which: usize) -> Result<Component> {
    if r.z.is_empty() {
        return Err(Error::InvalidData(format!("component {which} has no rows")));
    }
    let extra = r.u[0].len();
    let q = extra + usize::from(intercept);
    if q == 0 {
        return Err(Error::InvalidData("no mean covariates: add `u_` columns or keep the intercept".into()));
    }
    let u = DMatrix::from_fn(r.z.len(), q, |i, j| match (intercept, j) {
        (true, 0) => 1.0,
        (true, j) => r.u[i][j - 1],
        (false, j) => r.u[i][j],
    });
    Component::with_exposure(r.z, u, r.x, r.e)
}

/// Reads a dataset CSV.
pub fn read_dataset<R: Read>(reader: R, intercept: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let comp_col = column(&header, "component").ok_or_else(|| Error::Format("missing required column `component`".into()))?;
    let z_col = column(&header, "z").ok_or_else(|| Error::Format("missing required column `z`".into()))?;
    let u_cols = numbered(&header, "u_")?;
    let x_cols = numbered(&header, "x_")?;
    if x_cols.is_empty() {
        return Err(Error::Format("missing covariance input columns `x_1..x_p`".into()));
    }
    let e_col = column(&header, "exposure");
    let mut rows = [0, 1].map(|_| Rows { z: vec![], u: vec![], x: vec![], e: vec![] });
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Row { row, message: e.to_string() })?;
        let field = |c: usize| rec.get(c).ok_or_else(|| Error::Row { row, message: "too few fields".into() });
        let comp = match field(comp_col)? {
            "1" => 0,
            "2" => 1,
            other => return Err(Error::Row { row, message: format!("component `{other}` must be 1 or 2") }),
        };
        let zs = field(z_col)?;
        let z: u64 = zs.parse().map_err(|_| Error::Row { row, message: format!("count `{zs}` is not a nonnegative integer") })?;
        let u = u_cols.iter().map(|&c| parse_f64(field(c)?, row, "covariate")).collect::<Result<Vec<_>>>()?;
        let x = x_cols.iter().map(|&c| parse_f64(field(c)?, row, "input")).collect::<Result<Vec<_>>>()?;
        let e = match e_col {
            Some(c) => {
                let e = parse_f64(field(c)?, row, "exposure")?;
                if e <= 0.0 {
                    return Err(Error::Row { row, message: format!("exposure {e} must be positive") });
                }
                e
            }
            None => 1.0,
        };
        let r = &mut rows[comp];
        r.z.push(z);
        r.u.push(u);
        r.x.push(x);
        r.e.push(e);
    }
    let [r1, r2] = rows;
    Dataset::new(into_component(r1, intercept, 1)?, into_component(r2, intercept, 2)?)
}

pub fn load_dataset(path: &Path, intercept: bool) -> Result<Dataset> {
    read_dataset(File::open(path)?, intercept)
}

/// Writes a dataset CSV. With `intercept` set the first `U` column is assumed
/// to be the intercept and is omitted, so reading back with an intercept
/// restores the same design.
pub fn write_dataset<W: Write>(data: &Dataset, w: W, intercept: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let skip = usize::from(intercept);
    let q = data.components[0].q();
    if data.components[1].q() != q {
        return Err(Error::Format("components with different covariate counts cannot share one file".into()));
    }
    let p = data.dim();
    let mut header = vec!["component".to_string(), "z".to_string()];
    header.extend((1..=q - skip).map(|j| format!("u_{j}")));
    header.extend((1..=p).map(|j| format!("x_{j}")));
    header.push("exposure".into());
    out.write_record(&header)?;
    for (a, c) in data.components.iter().enumerate() {
        for i in 0..c.len() {
            let mut rec = vec![(a + 1).to_string(), c.z[i].to_string()];
            rec.extend((skip..q).map(|j| c.u[(i, j)].to_string()));
            rec.extend(c.x[i].iter().map(|v| v.to_string()));
            rec.push(c.exposure[i].to_string());
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads prediction points: `x1_1..x1_p`, `x2_1..x2_p`, covariates
/// `u1_*`/`u2_*` (without intercept) and optional `exposure1`/`exposure2`.
pub fn read_points<R: Read>(reader: R, q: [usize; 2], intercept: bool) -> Result<Vec<NewPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let x_cols = [numbered(&header, "x1_")?, numbered(&header, "x2_")?];
    let u_cols = [numbered(&header, "u1_")?, numbered(&header, "u2_")?];
    let e_cols = [column(&header, "exposure1"), column(&header, "exposure2")];
    let skip = usize::from(intercept);
    for a in 0..2 {
        if x_cols[a].is_empty() {
            return Err(Error::Format(format!("missing input columns `x{}_1..`", a + 1)));
        }
        if u_cols[a].len() + skip != q[a] {
            return Err(Error::Format(format!(
                "component {} needs {} covariate columns `u{}_*`, found {}",
                a + 1,
                q[a] - skip.min(q[a]),
                a + 1,
                u_cols[a].len()
            )));
        }
    }
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Row { row, message: e.to_string() })?;
        let get =
            |c: usize, what: &str| parse_f64(rec.get(c).ok_or_else(|| Error::Row { row, message: "too few fields".into() })?, row, what);
        let mut p = NewPoint { u: [vec![], vec![]], x: [vec![], vec![]], exposure: [1.0, 1.0] };
        for a in 0..2 {
            if intercept {
                p.u[a].push(1.0);
            }
            for &c in &u_cols[a] {
                p.u[a].push(get(c, "covariate")?);
            }
            p.x[a] = x_cols[a].iter().map(|&c| get(c, "input")).collect::<Result<_>>()?;
            if let Some(c) = e_cols[a] {
                let e = get(c, "exposure")?;
                if e <= 0.0 {
                    return Err(Error::Row { row, message: format!("exposure {e} must be positive") });
                }
                p.exposure[a] = e;
            }
        }
        points.push(p);
    }
    Ok(points)
}

/// Writes `row,mean1,mean2,var1,var2,cov12`.
pub fn write_predictions<W: Write>(preds: &[PredictionResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "mean1", "mean2", "var1", "var2", "cov12"])?;
    for (i, p) in preds.iter().enumerate() {
        out.write_record([
            (i + 1).to_string(),
            format!("{:.12e}", p.mean[0]),
            format!("{:.12e}", p.mean[1]),
            format!("{:.12e}", p.var[0][0]),
            format!("{:.12e}", p.var[1][1]),
            format!("{:.12e}", p.var[0][1]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub const MODEL_FORMAT: &str = "mcgpp-fitted-model";
pub const MODEL_VERSION: u32 = 1;

/// Self-describing fitted-model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    /// Whether `U` carries an automatically added intercept column.
    pub intercept: bool,
    pub aic: f64,
    pub model: FittedModel,
}

impl ModelFile {
    pub fn new(model: FittedModel, intercept: bool) -> Self {
        ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, intercept, aic: model.aic(), model }
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.model.loglik.is_finite() {
            return Err(Error::Format("cannot store a model with non-finite log-likelihood".into()));
        }
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(s)?;
        if f.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a fitted-model file (format `{}`)", f.format)));
        }
        if f.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model file version {}", f.version)));
        }
        f.model.data.validate()?;
        f.model.theta.validate()?;
        f.model.theta.check_kind(&f.model.kind)?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Short human-readable description of a fit.
pub fn summary(model: &FittedModel) -> String {
    let mut s = String::new();
    let mut line = |l: String| {
        s.push_str(&l);
        s.push('\n');
    };
    line(format!("model: {}", model.kind.name()));
    line(format!("observations: n1 = {}, n2 = {}", model.data.n1(), model.data.n2()));
    line(format!("log marginal likelihood (Laplace): {:.6}", model.loglik));
    line(format!("free parameters: {}", model.n_params));
    line(format!("AIC: {:.6}", model.aic()));
    line(format!("converged: {} after {} iterations", model.converged, model.iterations));
    for (a, b) in model.beta.beta.iter().enumerate() {
        let v: Vec<String> = b.iter().map(|x| format!("{x:.6}")).collect();
        line(format!("beta{}: [{}]", a + 1, v.join(", ")));
    }
    line(format!("theta: {}", serde_json::to_string(&model.theta).unwrap_or_default()));
    s
}
