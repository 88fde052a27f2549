use std::collections::BTreeSet;
use std::path::Path;

use plotters::prelude::*;

use super::CoverageRow;
use crate::error::{Error, Result};

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Numerical(format!("plotting failed: {e}"))
}

/// Empirical coverage against `n`, one line per `p`, with the nominal level dashed.
pub fn plot_coverage_svg(path: &Path, rows: &[CoverageRow], nominal: f64) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no coverage rows to plot".into()));
    }
    let n_max = rows.iter().map(|r| r.n).max().unwrap_or(1) as f64;
    let n_min = rows.iter().map(|r| r.n).min().unwrap_or(0) as f64;
    let pad = ((n_max - n_min) * 0.05).max(1.0);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d((n_min - pad)..(n_max + pad), 0.0..1.0)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("n").y_desc("coverage").draw().map_err(plot_err)?;
    chart
        .draw_series(DashedLineSeries::new(
            [(n_min - pad, nominal), (n_max + pad, nominal)],
            6,
            4,
            BLACK.stroke_width(1),
        ))
        .map_err(plot_err)?;
    let ps: BTreeSet<usize> = rows.iter().map(|r| r.p).collect();
    for (k, p) in ps.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let mut pts: Vec<(f64, f64)> =
            rows.iter().filter(|r| r.p == *p && r.coverage.is_finite()).map(|r| (r.n as f64, r.coverage)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        chart.draw_series(LineSeries::new(pts, color.stroke_width(2))).map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}
