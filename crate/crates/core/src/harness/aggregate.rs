use std::fs;
use std::path::Path;

use super::{Arm, HarnessError};
use crate::agents::RunResult;
use crate::stats::{mean, std_error};

/// One per-seed curve read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedCurve {
    pub seed: u64,
    pub index: Vec<u64>,
    pub ret: Vec<f64>,
    pub rho: Vec<Option<f64>>,
    pub steps: Vec<u64>,
}

fn csv_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Csv(e.to_string())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, HarnessError> {
    headers.iter().position(|h| h == name).ok_or_else(|| HarnessError::MissingColumn(name.to_string()))
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T, HarnessError> {
    field.parse().map_err(|_| HarnessError::Csv(format!("bad {what} value {field:?}")))
}

fn parse_opt(field: &str, what: &str) -> Result<Option<f64>, HarnessError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse(field, what).map(Some)
    }
}

pub fn read_curve_csv(path: &Path) -> Result<SeedCurve, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let [c_seed, c_idx, c_ret, c_rho, c_steps] =
        ["seed", "episode_or_window", "return", "rho", "steps"].map(|n| column(&headers, n));
    let (c_seed, c_idx, c_ret, c_rho, c_steps) = (c_seed?, c_idx?, c_ret?, c_rho?, c_steps?);
    let mut curve = SeedCurve { seed: 0, index: vec![], ret: vec![], rho: vec![], steps: vec![] };
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        curve.seed = parse(&rec[c_seed], "seed")?;
        curve.index.push(parse(&rec[c_idx], "episode_or_window")?);
        curve.ret.push(parse(&rec[c_ret], "return")?);
        curve.rho.push(parse_opt(&rec[c_rho], "rho")?);
        curve.steps.push(parse(&rec[c_steps], "steps")?);
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub x: u64,
    pub seeds: usize,
    pub return_mean: f64,
    pub return_se: f64,
    pub rho_mean: Option<f64>,
    pub rho_se: Option<f64>,
}

/// Across-seed mean and standard error per point of the x axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// `episode_or_window`, or `frames` for frame-budget runs.
    pub x_column: String,
    pub rows: Vec<AggregateRow>,
}

pub const AGGREGATE_TAIL: [&str; 5] = ["seeds", "return_mean", "return_se", "rho_mean", "rho_se"];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl Aggregate {
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec![self.x_column.as_str()];
        header.extend(AGGREGATE_TAIL);
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.x.to_string(),
                r.seeds.to_string(),
                r.return_mean.to_string(),
                r.return_se.to_string(),
                opt(r.rho_mean),
                opt(r.rho_se),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = r.headers().map_err(csv_err)?.clone();
        let x_column = headers.get(0).ok_or_else(|| HarnessError::MissingColumn("x".into()))?.to_string();
        let cols: Vec<usize> = AGGREGATE_TAIL.iter().map(|n| column(&headers, n)).collect::<Result<_, _>>()?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            rows.push(AggregateRow {
                x: parse(&rec[0], &x_column)?,
                seeds: parse(&rec[cols[0]], "seeds")?,
                return_mean: parse(&rec[cols[1]], "return_mean")?,
                return_se: parse(&rec[cols[2]], "return_se")?,
                rho_mean: parse_opt(&rec[cols[3]], "rho_mean")?,
                rho_se: parse_opt(&rec[cols[4]], "rho_se")?,
            });
        }
        Ok(Self { x_column, rows })
    }
}

fn row(x: u64, rets: &[f64], rhos: &[Option<f64>]) -> AggregateRow {
    let rho: Option<Vec<f64>> = rhos.iter().copied().collect();
    AggregateRow {
        x,
        seeds: rets.len(),
        return_mean: mean(rets),
        return_se: std_error(rets),
        rho_mean: rho.as_deref().map(mean),
        rho_se: rho.as_deref().map(std_error),
    }
}

/// Per-seed bin values: mean return and mean rho of the points closing in
/// `((b-1) w, b w]`; empty bins carry the previous bin forward.
fn binned(curve: &SeedCurve, width: u64, bins: u64) -> Vec<Option<(f64, Option<f64>)>> {
    let mut out = Vec::with_capacity(bins as usize);
    let mut last = None;
    let mut k = 0;
    for b in 1..=bins {
        let edge = b * width;
        let (mut rets, mut rhos) = (Vec::new(), Vec::new());
        while k < curve.steps.len() && curve.steps[k] <= edge {
            rets.push(curve.ret[k]);
            rhos.push(curve.rho[k]);
            k += 1;
        }
        if !rets.is_empty() {
            let rho: Option<Vec<f64>> = rhos.into_iter().collect();
            last = Some((mean(&rets), rho.as_deref().map(mean)));
        }
        out.push(last);
    }
    out
}

/// Reads the per-seed CSV files and reduces them to across-seed statistics.
/// With `frame_bin` set the x axis is frames in bins of that width,
/// otherwise points align on their episode or window index.
pub fn aggregate_files(paths: &[impl AsRef<Path>], frame_bin: Option<u64>) -> Result<Aggregate, HarnessError> {
    let curves: Vec<SeedCurve> = paths.iter().map(|p| read_curve_csv(p.as_ref())).collect::<Result<_, _>>()?;
    Ok(aggregate_curves(&curves, frame_bin))
}

pub fn aggregate_curves(curves: &[SeedCurve], frame_bin: Option<u64>) -> Aggregate {
    let mut rows = Vec::new();
    match frame_bin {
        None => {
            let len = curves.iter().map(|c| c.ret.len()).min().unwrap_or(0);
            for i in 0..len {
                let rets: Vec<f64> = curves.iter().map(|c| c.ret[i]).collect();
                let rhos: Vec<Option<f64>> = curves.iter().map(|c| c.rho[i]).collect();
                rows.push(row(curves[0].index[i], &rets, &rhos));
            }
            Aggregate { x_column: "episode_or_window".into(), rows }
        }
        Some(width) => {
            let max_steps = curves.iter().filter_map(|c| c.steps.last().copied()).max().unwrap_or(0);
            let bins = max_steps.div_ceil(width);
            let per_seed: Vec<_> = curves.iter().map(|c| binned(c, width, bins)).collect();
            for b in 0..bins as usize {
                let present: Vec<(f64, Option<f64>)> = per_seed.iter().filter_map(|s| s[b]).collect();
                if present.is_empty() {
                    continue;
                }
                let rets: Vec<f64> = present.iter().map(|p| p.0).collect();
                let rhos: Vec<Option<f64>> = present.iter().map(|p| p.1).collect();
                rows.push(row((b as u64 + 1) * width, &rets, &rhos));
            }
            Aggregate { x_column: "frames".into(), rows }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub value: String,
    pub arm: Arm,
    pub final_mean: f64,
    pub final_se: f64,
    pub overall_mean: f64,
    pub overall_se: f64,
}

/// Per-seed mean over the last tenth of the curve and over all of it,
/// reduced across seeds.
pub fn summarize(value: &str, arm: Arm, runs: &[RunResult]) -> SummaryRow {
    let finals: Vec<f64> = runs
        .iter()
        .map(|r| {
            let n = r.curve.len();
            let tail = (n / 10).max(1).min(n);
            mean(&r.returns()[n - tail..])
        })
        .collect();
    let overall: Vec<f64> = runs.iter().map(|r| mean(&r.returns())).collect();
    SummaryRow {
        value: value.to_string(),
        arm,
        final_mean: mean(&finals),
        final_se: std_error(&finals),
        overall_mean: mean(&overall),
        overall_se: std_error(&overall),
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["value", "arm", "final_mean", "final_se", "overall_mean", "overall_se"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.value.clone(),
            r.arm.name().to_string(),
            r.final_mean.to_string(),
            r.final_se.to_string(),
            r.overall_mean.to_string(),
            r.overall_se.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(seed: u64, ret: &[f64], rho: Option<&[f64]>, steps: &[u64]) -> SeedCurve {
        SeedCurve {
            seed,
            index: (0..ret.len() as u64).collect(),
            ret: ret.to_vec(),
            rho: match rho {
                Some(r) => r.iter().map(|&x| Some(x)).collect(),
                None => vec![None; ret.len()],
            },
            steps: steps.to_vec(),
        }
    }

    #[test]
    fn index_axis_truncates_to_shortest_seed() {
        let a = curve(0, &[1.0, 2.0, 3.0], Some(&[0.0, 0.5, 1.0]), &[1, 2, 3]);
        let b = curve(1, &[3.0, 4.0], Some(&[0.0, 1.5]), &[1, 2]);
        let agg = aggregate_curves(&[a, b], None);
        assert_eq!(agg.rows.len(), 2);
        assert_eq!(agg.rows[1].return_mean, 3.0);
        assert_eq!(agg.rows[1].return_se, 1.0);
        assert_eq!(agg.rows[1].rho_mean, Some(1.0));
    }

    #[test]
    fn baseline_has_no_rho_column_values() {
        let a = curve(0, &[1.0], None, &[1]);
        let agg = aggregate_curves(&[a], None);
        assert_eq!(agg.rows[0].rho_mean, None);
        assert_eq!(agg.rows[0].return_se, 0.0);
    }

    #[test]
    fn frame_bins_carry_forward() {
        let a = curve(0, &[1.0, 3.0, 5.0], None, &[5, 8, 35]);
        let agg = aggregate_curves(&[a], Some(10));
        let xs: Vec<u64> = agg.rows.iter().map(|r| r.x).collect();
        let ys: Vec<f64> = agg.rows.iter().map(|r| r.return_mean).collect();
        assert_eq!(xs, vec![10, 20, 30, 40]);
        assert_eq!(ys, vec![2.0, 2.0, 2.0, 5.0]);
    }

    #[test]
    fn aggregate_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let a = curve(0, &[1.0, 2.5], Some(&[0.1, 0.2]), &[3, 9]);
        let b = curve(1, &[0.5, 0.25], Some(&[0.3, 0.7]), &[4, 7]);
        let agg = aggregate_curves(&[a, b], None);
        let path = dir.path().join("agg.csv");
        agg.write_csv(&path).unwrap();
        assert_eq!(Aggregate::read_csv(&path).unwrap(), agg);
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "seed,return\n0,1\n").unwrap();
        assert!(matches!(read_curve_csv(&path), Err(HarnessError::MissingColumn(c)) if c == "episode_or_window"));
    }
}
