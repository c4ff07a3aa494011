use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};

const SIZE: (u32, u32) = (900, 520);

/// One line per case over the horizon.
pub struct Chart<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    pub series: Vec<(String, Vec<f64>)>,
}

fn draw_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Render(format!("{e:?}"))
}

/// Renders `chart` as SVG markup.
pub fn render_svg(chart: &Chart) -> Result<String> {
    let horizon = chart.series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let values = chart.series.iter().flat_map(|(_, v)| v.iter().copied());
    let (mut lo, mut hi) = values
        .filter(|v| v.is_finite())
        .fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = (hi - lo) * 0.05;
    lo = if lo < 0.0 { lo - pad } else { lo };
    hi += pad;
    let x_max = horizon.saturating_sub(1).max(1) as f64;

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let mut ctx = ChartBuilder::on(&root)
            .caption(chart.title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(64)
            .build_cartesian_2d(0.0..x_max, lo..hi)
            .map_err(draw_err)?;
        ctx.configure_mesh()
            .x_desc("period")
            .y_desc(chart.y_label)
            .x_labels(horizon.clamp(2, 13))
            .x_label_formatter(&|x| format!("{x:.0}"))
            .draw()
            .map_err(draw_err)?;
        for (i, (name, v)) in chart.series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            ctx.draw_series(LineSeries::new(
                v.iter().enumerate().map(|(t, y)| (t as f64, *y)),
                color.stroke_width(2),
            ))
            .map_err(draw_err)?
            .label(name.as_str())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
            });
        }
        ctx.configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .position(SeriesLabelPosition::UpperLeft)
            .draw()
            .map_err(draw_err)?;
        root.present().map_err(draw_err)?;
    }
    Ok(svg)
}

pub fn write_svg(path: &Path, chart: &Chart) -> Result<()> {
    let svg = render_svg(chart)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
