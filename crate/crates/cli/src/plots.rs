//! Static SVG time-series plots.

use cotrans_sim::{Sample, Trajectory};
use plotters::prelude::*;

use crate::CliError;

type Panel = (&'static str, fn(&Sample) -> f64);

const PANELS: [Panel; 4] = [
    ("X [m]", |s| s.world.x),
    ("Y [m]", |s| s.world.y),
    ("Z [m]", |s| s.world.z),
    ("psi [rad]", |s| s.attitude.z),
];

/// Position and yaw against time, one panel each, with event times marked
/// by vertical lines.
pub fn trajectory_svg(traj: &Trajectory, title: &str) -> Result<String, CliError> {
    let mut svg = String::new();
    draw(traj, title, &mut svg).map_err(|e| CliError::Output(format!("plot: {e}")))?;
    Ok(svg)
}

fn draw(traj: &Trajectory, title: &str, svg: &mut String) -> Result<(), Box<dyn std::error::Error>> {
    let root = SVGBackend::with_string(svg, (900, 1000)).into_drawing_area();
    root.fill(&WHITE)?;
    let root = root.titled(title, ("sans-serif", 22))?;
    let t_end = traj.samples.last().map_or(1.0, |s| s.t.max(1e-3));
    let events: Vec<f64> = traj
        .samples
        .iter()
        .filter(|s| !s.events.is_empty())
        .map(|s| s.t)
        .collect();

    for (area, (label, read)) in root.split_evenly((4, 1)).iter().zip(PANELS) {
        let values: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, read(s))).collect();
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, v)| {
                (a.min(v), b.max(v))
            });
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        let pad = 0.1 * (hi - lo).max(0.1);
        let (lo, hi) = (lo - pad, hi + pad);

        let mut chart = ChartBuilder::on(area)
            .margin(8)
            .x_label_area_size(28)
            .y_label_area_size(56)
            .build_cartesian_2d(0.0..t_end, lo..hi)?;
        chart
            .configure_mesh()
            .x_desc("t [s]")
            .y_desc(label)
            .light_line_style(WHITE)
            .draw()?;
        for &t in &events {
            chart.draw_series(LineSeries::new([(t, lo), (t, hi)], RGBColor(190, 190, 190)))?;
        }
        chart.draw_series(LineSeries::new(values, BLUE.stroke_width(2)))?;
    }
    root.present()?;
    Ok(())
}
