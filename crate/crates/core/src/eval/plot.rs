//! F-score-by-version line charts rendered to SVG.

use std::fs;
use std::path::Path;

use plotters::prelude::*;

use super::CsvRow;
use crate::error::{Error, Result};

type Column = Box<dyn Fn(&CsvRow) -> Option<f64>>;

fn draw_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::State(format!("chart rendering failed: {e:?}"))
}

/// Renders one chart with a line per series: model F-score, the NEW and
/// EXISTING splits when present, and the coverage baseline. Target versions
/// appear on the x axis in row order.
pub fn render_f_scores(rows: &[CsvRow], title: &str) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::validation("no report rows to plot"));
    }
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let n = rows.len();
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 22))
            .margin(16)
            .x_label_area_size(40)
            .y_label_area_size(48)
            .build_cartesian_2d(-0.5f64..(n as f64 - 0.5).max(0.5), 0.0f64..1.0)
            .map_err(draw_err)?;
        let labels: Vec<String> = rows.iter().map(|r| r.target.clone()).collect();
        chart
            .configure_mesh()
            .x_desc("target version")
            .y_desc("F-score")
            .x_labels(n.min(20))
            .x_label_formatter(&|x| {
                let i = x.round();
                if (x - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < labels.len() {
                    labels[i as usize].clone()
                } else {
                    String::new()
                }
            })
            .draw()
            .map_err(draw_err)?;

        let series: [(&str, RGBColor, Column); 4] = [
            ("model", BLUE, Box::new(|r| Some(r.f_score))),
            ("existing tests", GREEN, Box::new(|r| r.f_existing)),
            ("new tests", MAGENTA, Box::new(|r| r.f_new)),
            ("coverage baseline", RED, Box::new(|r| r.baseline_f_score)),
        ];
        for (label, colour, get) in series {
            let points: Vec<(f64, f64)> =
                rows.iter().enumerate().filter_map(|(i, r)| get(r).map(|y| (i as f64, y))).collect();
            if points.is_empty() {
                continue;
            }
            chart
                .draw_series(LineSeries::new(points.clone(), colour.stroke_width(2)))
                .map_err(draw_err)?
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], colour.stroke_width(2)));
            chart
                .draw_series(points.into_iter().map(|p| Circle::new(p, 3, colour.filled())))
                .map_err(draw_err)?;
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::LowerRight)
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(draw_err)?;
        root.present().map_err(draw_err)?;
    }
    Ok(svg)
}

pub fn plot_f_scores(rows: &[CsvRow], title: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = render_f_scores(rows, title)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(target: &str, f: f64) -> CsvRow {
        CsvRow {
            train: "base".into(),
            target: target.into(),
            f_score: f,
            precision: f,
            recall: f,
            f_existing: Some(f),
            f_new: None,
            ms_real: 90.0,
            ms_pred: 91.0,
            ms_error: 1.0,
            baseline: "coverage".into(),
            baseline_f_score: Some(0.5),
        }
    }

    #[test]
    fn renders_svg() {
        let svg = render_f_scores(&[row("v1", 0.8), row("v2", 0.7)], "F-score").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("coverage baseline"));
        assert!(svg.contains("v2"));
        assert!(!svg.contains("new tests"));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(render_f_scores(&[], "x").is_err());
    }
}
