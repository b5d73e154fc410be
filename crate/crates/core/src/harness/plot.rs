use std::path::{Path, PathBuf};

use plotters::prelude::*;
use plotters::series::DashedLineSeries;

use super::aggregate::{Aggregate, AggregateRow};
use super::{Arm, HarnessError};

/// Trailing mean over the last `w` values (fewer at the start).
pub fn trailing_mean(xs: &[f64], w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

fn smoothing_window(x_column: &str) -> (usize, &'static str) {
    match x_column {
        "episode_or_window" => (100, "100 points"),
        _ => (10, "10 bins"),
    }
}

struct Series {
    arm: Arm,
    x: Vec<f64>,
    mean: Vec<f64>,
    se: Vec<f64>,
    rho: Option<Vec<f64>>,
    seeds: usize,
}

fn smooth(arm: Arm, agg: &Aggregate) -> Series {
    let (w, _) = smoothing_window(&agg.x_column);
    let pick = |f: fn(&AggregateRow) -> f64| trailing_mean(&agg.rows.iter().map(f).collect::<Vec<_>>(), w);
    let rho: Option<Vec<f64>> = agg.rows.iter().map(|r| r.rho_mean).collect();
    Series {
        arm,
        x: agg.rows.iter().map(|r| r.x as f64).collect(),
        mean: pick(|r| r.return_mean),
        se: pick(|r| r.return_se),
        rho: rho.filter(|r| !r.is_empty()).map(|r| trailing_mean(&r, w)),
        seeds: agg.rows.iter().map(|r| r.seeds).max().unwrap_or(0),
    }
}

fn plot_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Plot(e.to_string())
}

/// Draws `curves.svg` in `dir` from the `<arm>/aggregate.csv` files found
/// there: mean return with a standard-error band per arm, plus the threshold
/// as a dashed line. Everything is read back from CSV.
pub fn emit_plots(dir: &Path) -> Result<PathBuf, HarnessError> {
    let mut series = Vec::new();
    let mut x_column = String::new();
    for arm in [Arm::Baseline, Arm::Sibre] {
        let path = dir.join(arm.name()).join("aggregate.csv");
        if path.exists() {
            let agg = Aggregate::read_csv(&path)?;
            x_column = agg.x_column.clone();
            series.push(smooth(arm, &agg));
        }
    }
    if series.iter().all(|s| s.x.is_empty()) {
        return Err(HarnessError::Plot(format!("no aggregate.csv with data under {}", dir.display())));
    }
    let (_, smoothing) = smoothing_window(&x_column);
    let finite = |v: f64| v.is_finite();
    let mut ys: Vec<f64> = Vec::new();
    for s in &series {
        ys.extend(s.mean.iter().zip(&s.se).flat_map(|(m, e)| [m - e, m + e]));
        if let Some(r) = &s.rho {
            ys.extend(r);
        }
    }
    let ys: Vec<f64> = ys.into_iter().filter(|&v| finite(v)).collect();
    let (mut lo, mut hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let x_max = series.iter().filter_map(|s| s.x.last().copied()).fold(1.0, f64::max);
    let x_min = series.iter().filter_map(|s| s.x.first().copied()).fold(x_max, f64::min);

    let out = dir.join("curves.svg");
    let root = SVGBackend::new(&out, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let seeds = series.iter().map(|s| s.seeds).max().unwrap_or(0);
    let caption = format!("mean +/- s.e. over {seeds} seeds, trailing mean over {smoothing}; dashed: threshold");
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 16))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_min..x_max, (lo - pad)..(hi + pad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(if x_column == "frames" { "frames" } else { "episode or window" })
        .y_desc("return")
        .draw()
        .map_err(plot_err)?;

    for s in &series {
        let color = match s.arm {
            Arm::Baseline => BLUE,
            Arm::Sibre => RED,
        };
        let band: Vec<(f64, f64)> =
            s.x.iter()
                .zip(s.mean.iter().zip(&s.se))
                .map(|(&x, (m, e))| (x, m + e))
                .chain(s.x.iter().zip(s.mean.iter().zip(&s.se)).rev().map(|(&x, (m, e))| (x, m - e)))
                .collect();
        chart.draw_series(std::iter::once(Polygon::new(band, color.mix(0.2)))).map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(s.x.iter().copied().zip(s.mean.iter().copied()), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.arm.name())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        if let Some(rho) = &s.rho {
            chart
                .draw_series(DashedLineSeries::new(s.x.iter().copied().zip(rho.iter().copied()), 6, 4, color.into()))
                .map_err(plot_err)?
                .label(format!("{} threshold", s.arm.name()))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 8, y)], color));
        }
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    drop(chart);
    drop(root);
    Ok(out)
}

/// Runs [`emit_plots`] on `root` and every directory below it that holds
/// per-arm aggregates, so sweep and transfer layouts plot in one call.
pub fn emit_plot_tree(root: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let has_aggregate =
        |d: &Path| [Arm::Baseline, Arm::Sibre].iter().any(|a| d.join(a.name()).join("aggregate.csv").exists());
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if has_aggregate(&dir) {
            out.push(emit_plots(&dir)?);
        }
        let mut children: Vec<PathBuf> =
            std::fs::read_dir(&dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
        children.sort();
        stack.extend(children.into_iter().rev());
    }
    if out.is_empty() {
        return Err(HarnessError::Plot(format!("no aggregate.csv under {}", root.display())));
    }
    Ok(out)
}
