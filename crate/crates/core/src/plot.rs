//! Plot output: SVG images, or gnuplot data files plus a script.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use plotters::coord::combinators::IntoLogRange;
use plotters::prelude::*;

use crate::analysis::{SuccessCurve, TailStats};
use crate::error::{MapfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Svg,
    Gnuplot,
    None,
}

impl std::str::FromStr for PlotFormat {
    type Err = MapfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svg" => Ok(PlotFormat::Svg),
            "gnuplot" => Ok(PlotFormat::Gnuplot),
            "none" => Ok(PlotFormat::None),
            other => Err(MapfError::Usage(format!("unknown plot format {other}"))),
        }
    }
}

fn plot_error(e: impl std::fmt::Display) -> MapfError {
    MapfError::Io(std::io::Error::other(e.to_string()))
}

/// Success rate against agent count, one series per `solver/highway/mode/k`.
pub fn success_series(curve: &SuccessCurve) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &curve.rows {
        let label = format!("{}(w={}) hwy={} {} k={}", r.solver, r.w, r.highway, r.mode, r.k);
        series.entry(label).or_default().push((r.agents as f64, r.rate));
    }
    series
}

/// Writes `<stem>.svg`, or `<stem>.dat` and `<stem>.gp`, into `dir`.
pub fn plot_success(curve: &SuccessCurve, dir: &Path, stem: &str, format: PlotFormat) -> Result<()> {
    let series = success_series(curve);
    match format {
        PlotFormat::None => Ok(()),
        PlotFormat::Gnuplot => write_gnuplot(&series, dir, stem, "agents", "success rate", false),
        PlotFormat::Svg => {
            let path = dir.join(format!("{stem}.svg"));
            let root = SVGBackend::new(&path, (800, 500)).into_drawing_area();
            root.fill(&WHITE).map_err(plot_error)?;
            let xmax = series.values().flatten().map(|p| p.0).fold(1.0, f64::max);
            let mut chart = ChartBuilder::on(&root)
                .margin(10)
                .x_label_area_size(40)
                .y_label_area_size(50)
                .build_cartesian_2d(0.0..xmax, 0.0..1.05)
                .map_err(plot_error)?;
            chart
                .configure_mesh()
                .x_desc("agents")
                .y_desc("success rate")
                .draw()
                .map_err(plot_error)?;
            draw_series(&mut chart, &series)?;
            root.present().map_err(plot_error)
        }
    }
}

/// Log-log survival curves, one per labelled sample.
pub fn plot_survival(curves: &[(String, TailStats)], dir: &Path, stem: &str, format: PlotFormat) -> Result<()> {
    let series: BTreeMap<String, Vec<(f64, f64)>> = curves
        .iter()
        .map(|(label, s)| {
            let pts = s.survival.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
            (label.clone(), pts)
        })
        .collect();
    match format {
        PlotFormat::None => Ok(()),
        PlotFormat::Gnuplot => write_gnuplot(&series, dir, stem, "runtime (ms)", "P(runtime > t)", true),
        PlotFormat::Svg => {
            let path = dir.join(format!("{stem}.svg"));
            let root = SVGBackend::new(&path, (800, 500)).into_drawing_area();
            root.fill(&WHITE).map_err(plot_error)?;
            let pts = series.values().flatten();
            let (xmin, xmax) = pts.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
            let ymin = series.values().flatten().map(|p| p.1).fold(1.0, f64::min);
            let (xmin, xmax) = if xmin.is_finite() { (xmin, xmax.max(xmin * 10.0)) } else { (1.0, 10.0) };
            let mut chart = ChartBuilder::on(&root)
                .margin(10)
                .x_label_area_size(40)
                .y_label_area_size(60)
                .build_cartesian_2d((xmin..xmax).log_scale(), (ymin.min(0.1)..1.0).log_scale())
                .map_err(plot_error)?;
            chart
                .configure_mesh()
                .x_desc("runtime (ms)")
                .y_desc("P(runtime > t)")
                .draw()
                .map_err(plot_error)?;
            draw_series(&mut chart, &series)?;
            root.present().map_err(plot_error)
        }
    }
}

fn draw_series<'a, DB, CT>(
    chart: &mut ChartContext<'a, DB, CT>,
    series: &BTreeMap<String, Vec<(f64, f64)>>,
) -> Result<()>
where
    DB: DrawingBackend + 'a,
    CT: CoordTranslate<From = (f64, f64)>,
{
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(plot_error)?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_error)
}

fn write_gnuplot(
    series: &BTreeMap<String, Vec<(f64, f64)>>,
    dir: &Path,
    stem: &str,
    xlabel: &str,
    ylabel: &str,
    loglog: bool,
) -> Result<()> {
    // one data block per series, separated by two blank lines for `index`
    let mut data = String::new();
    for (label, pts) in series {
        writeln!(data, "# {label}").ok();
        for (x, y) in pts {
            writeln!(data, "{x} {y}").ok();
        }
        data.push_str("\n\n");
    }
    std::fs::write(dir.join(format!("{stem}.dat")), data)?;

    let mut script = String::new();
    writeln!(script, "set terminal pngcairo size 800,500").ok();
    writeln!(script, "set output '{stem}.png'").ok();
    writeln!(script, "set xlabel '{xlabel}'").ok();
    writeln!(script, "set ylabel '{ylabel}'").ok();
    if loglog {
        writeln!(script, "set logscale xy").ok();
    }
    let plots: Vec<String> = series
        .keys()
        .enumerate()
        .map(|(i, label)| format!("'{stem}.dat' index {i} with linespoints title '{}'", label.replace('\'', "")))
        .collect();
    if !plots.is_empty() {
        writeln!(script, "plot {}", plots.join(", \\\n     ")).ok();
    }
    std::fs::write(dir.join(format!("{stem}.gp")), script)?;
    Ok(())
}
