//! Fixed inputs whose rendered SVG and CSV are pinned under `tests/golden/`.

use return_landscape::io::csv::{self, Table};
use return_landscape::io::svg::{emit_svg, Axes, Plot};

pub struct Rendered {
    pub name: &'static str,
    pub svg: String,
    pub csv: String,
}

fn three_point_scatter() -> Rendered {
    let points = vec![(120.5, 0.25), (300.0, 0.0), (210.75, 0.125)];
    let plot = Plot::Scatter { axes: Axes::new("three checkpoints", "mean return", "ltp"), points: points.clone(), highlight: vec![1] };
    let mut t = Table::new(&csv::SCATTER);
    for (k, (m, l)) in points.iter().enumerate() {
        t.push(vec![
            format!("s0-t{}", (k + 1) * 1000).into(),
            ((k + 1) * 1000).into(),
            100usize.into(),
            (*m).into(),
            (m / 10.0).into(),
            (-0.5 * k as f64).into(),
            (*m).into(),
            Some(*l).into(),
            true.into(),
            (m * 0.5).into(),
            Some(m - 1.0).into(),
            Some(m + 1.0).into(),
        ])
        .unwrap();
    }
    Rendered { name: "scatter", svg: emit_svg(&plot).unwrap(), csv: t.to_csv() }
}

fn small_heatmap() -> Rendered {
    let axis = vec![-1.0, 0.0, 1.0];
    let values: Vec<f64> = (0..9).map(|k| ((k * 7) % 9) as f64 * 12.5).collect();
    let plot = Plot::Heatmap { axes: Axes::new("3x3 slice", "alpha", "beta"), xs: axis.clone(), ys: axis.clone(), values: values.clone() };
    let mut t = Table::new(&csv::GRID);
    for (k, v) in values.iter().enumerate() {
        t.push(vec![axis[k / 3].into(), axis[k % 3].into(), (*v).into()]).unwrap();
    }
    Rendered { name: "heatmap", svg: emit_svg(&plot).unwrap(), csv: t.to_csv() }
}

fn padded_race() -> Rendered {
    let points = vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.5, 1.0)];
    let plot = Plot::RaceCurve { axes: Axes::new("race", "successful", "failing"), points: points.clone() };
    let mut t = Table::new(&csv::RACE);
    for (k, (s, f)) in points.iter().enumerate() {
        t.push(vec![(k + 1).into(), (*s).into(), (*f).into()]).unwrap();
    }
    Rendered { name: "race", svg: emit_svg(&plot).unwrap(), csv: t.to_csv() }
}

pub fn all() -> Vec<Rendered> {
    vec![three_point_scatter(), small_heatmap(), padded_race()]
}
