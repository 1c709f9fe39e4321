//! SVG figures: budget curves, value histograms, paired scatter plots and
//! rollout trajectories.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use plotters::prelude::*;
use relay_core::calibration::BudgetTable;
use relay_core::eval::{self, EpisodeRecord};
use relay_core::{ScenarioParams, Vec2};

const SIZE: (u32, u32) = (800, 600);

type Chart<'a> = ChartContext<
    'a,
    SVGBackend<'a>,
    Cartesian2d<plotters::coord::types::RangedCoordf64, plotters::coord::types::RangedCoordf64>,
>;

fn draw_err<E: std::error::Error + Send + Sync + 'static>(
    e: DrawingAreaErrorKind<E>,
) -> anyhow::Error {
    anyhow!("drawing failed: {e}")
}

fn padded(lo: f64, hi: f64, frac: f64) -> (f64, f64) {
    let pad = ((hi - lo) * frac).max(1e-6);
    (lo - pad, hi + pad)
}

/// All `budget_K*.json` tables in `dir`, keyed by `K`.
pub fn load_budget_tables(dir: &Path) -> Result<BTreeMap<usize, BudgetTable>> {
    let mut tables = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if name.starts_with("budget_K") && name.ends_with(".json") {
            let t =
                BudgetTable::load(&path).with_context(|| format!("reading {}", path.display()))?;
            tables.insert(t.agents, t);
        }
    }
    Ok(tables)
}

/// Fitted budget against `R`, one curve per `K`, raw samples as dots.
pub fn budget_curves(tables: &BTreeMap<usize, BudgetTable>, path: &Path) -> Result<()> {
    if tables.is_empty() {
        bail!("no budget tables");
    }
    let x_lo = tables
        .values()
        .map(|t| t.r_min)
        .fold(f64::INFINITY, f64::min);
    let x_hi = tables
        .values()
        .map(|t| t.r_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let y_hi = tables
        .values()
        .flat_map(|t| t.samples.iter().map(|s| s.raw).chain([t.evaluate(t.r_max)]))
        .fold(0.0, f64::max);

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Terminal budget", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_lo..x_hi, 0.0..y_hi * 1.05)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("R")
        .y_desc("budget(R, 1; K)")
        .draw()
        .map_err(draw_err)?;

    for (i, (k, t)) in tables.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let n = 200;
        let curve = (0..=n).map(|j| {
            let r = t.r_min + (t.r_max - t.r_min) * j as f64 / n as f64;
            (r, t.evaluate(r))
        });
        chart
            .draw_series(LineSeries::new(curve, color.stroke_width(2)))
            .map_err(draw_err)?
            .label(format!("K = {k}"))
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
        chart
            .draw_series(
                t.samples
                    .iter()
                    .map(|s| Circle::new((s.r, s.raw), 2, color.filled())),
            )
            .map_err(draw_err)?;
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

/// Histogram of `V` over successful episodes; negative values are clipped
/// to zero for display.
pub fn value_histogram(records: &[EpisodeRecord], title: &str, path: &Path) -> Result<()> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.success)
        .map(|r| r.value.max(0.0))
        .collect();
    if values.is_empty() {
        bail!("no successful episodes");
    }
    let bins = 40;
    let hi = values.iter().copied().fold(0.0, f64::max).max(1e-9);
    let width = hi / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in &values {
        counts[((v / width) as usize).min(bins - 1)] += 1;
    }
    let top = *counts.iter().max().unwrap_or(&1) as f64;

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..hi, 0.0..top * 1.05)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("V")
        .y_desc("episodes")
        .draw()
        .map_err(draw_err)?;
    chart
        .draw_series(counts.iter().enumerate().map(|(i, &c)| {
            let x0 = i as f64 * width;
            Rectangle::new([(x0, 0.0), (x0 + width, c as f64)], BLUE.mix(0.6).filled())
        }))
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

/// Per-episode `V` of run `a` against run `b` over episodes both solved,
/// with the diagonal for reference. Negative values are clipped to zero.
pub fn paired_scatter(
    a: &[EpisodeRecord],
    b: &[EpisodeRecord],
    labels: (&str, &str),
    path: &Path,
) -> Result<()> {
    let rows = eval::compare(a, b).map_err(|e| anyhow!(e))?;
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.success_a && r.success_b)
        .map(|r| (r.value_a.max(0.0), r.value_b.max(0.0)))
        .collect();
    if points.is_empty() {
        bail!("no episode solved by both runs");
    }
    let hi = points.iter().fold(0.0f64, |m, p| m.max(p.0).max(p.1)) * 1.05;

    let root = SVGBackend::new(path, (700, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!("V per episode: {} vs {}", labels.0, labels.1),
            ("sans-serif", 20),
        )
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..hi, 0.0..hi)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc(labels.0)
        .y_desc(labels.1)
        .draw()
        .map_err(draw_err)?;
    chart
        .draw_series(LineSeries::new([(0.0, 0.0), (hi, hi)], BLACK.mix(0.5)))
        .map_err(draw_err)?;
    chart
        .draw_series(
            points
                .iter()
                .map(|&p| Circle::new(p, 2, BLUE.mix(0.4).filled())),
        )
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

fn disk(center: Vec2, radius: f64) -> Vec<(f64, f64)> {
    (0..72)
        .map(|i| {
            let a = TAU * i as f64 / 72.0;
            (center.x + radius * a.cos(), center.y + radius * a.sin())
        })
        .collect()
}

fn shade(chart: &mut Chart<'_>, center: Vec2, radius: f64, color: RGBAColor) -> Result<()> {
    chart
        .draw_series(std::iter::once(Polygon::new(
            disk(center, radius),
            color.mix(0.12).filled(),
        )))
        .map_err(draw_err)?;
    Ok(())
}

fn capsule_outline(a: Vec2, b: Vec2, radius: f64) -> Vec<(f64, f64)> {
    let half = |c: Vec2, from: f64| {
        (0..=36).map(move |i| {
            let t = from + std::f64::consts::PI * i as f64 / 36.0;
            (c.x + radius * t.cos(), c.y + radius * t.sin())
        })
    };
    let mut pts: Vec<(f64, f64)> = half(b, -std::f64::consts::FRAC_PI_2).collect();
    pts.extend(half(a, std::f64::consts::FRAC_PI_2));
    pts.push(pts[0]);
    pts
}

/// Bases, jammer capsule, shaded communication ranges and the agent and
/// jammer paths of a recorded rollout. Filled markers show carrying agents.
pub fn trajectory(log: &Path, path: &Path) -> Result<()> {
    let f = File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let (header, steps) = eval::read_trajectory(f).map_err(|e| anyhow!(e))?;
    let Some(last) = steps.last() else {
        bail!("trajectory has no steps");
    };
    let params = ScenarioParams::for_scenario(header.scenario);
    let r = header.base_distance;
    let capsule = params.capsule(r);
    let (sender, receiver) = (Vec2::ZERO, Vec2::new(r, 0.0));

    let mut xs = vec![capsule.a.x - capsule.radius, capsule.b.x + capsule.radius];
    let mut ys = vec![-capsule.radius, capsule.radius];
    for s in &steps {
        xs.extend(s.positions.iter().map(|p| p.x));
        ys.extend(s.positions.iter().map(|p| p.y));
    }
    let (x_lo, x_hi) = padded(
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        0.04,
    );
    let (y_lo, y_hi) = padded(
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        0.04,
    );
    let width = 900u32;
    let height =
        ((width as f64 - 80.0) * (y_hi - y_lo) / (x_hi - x_lo) + 100.0).clamp(300.0, 1400.0) as u32;

    let root = SVGBackend::new(path, (width, height)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let delivered = steps.iter().position(|s| s.w != relay_core::Phase::Active);
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!(
                "{} K={} episode {} (R = {:.2}{})",
                header.scenario,
                header.agents,
                header.episode_id,
                r,
                delivered.map_or(", not delivered".to_string(), |t| format!(
                    ", delivered at t = {t}"
                ))
            ),
            ("sans-serif", 18),
        )
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .disable_mesh()
        .draw()
        .map_err(draw_err)?;

    let base_color = RGBAColor(40, 40, 40, 1.0);
    shade(&mut chart, sender, params.r_com, base_color)?;
    shade(&mut chart, receiver, params.r_com, base_color)?;
    for (i, p) in last.positions.iter().enumerate() {
        shade(&mut chart, *p, params.r_com, Palette99::pick(i).to_rgba())?;
    }
    if params.jammed {
        chart
            .draw_series(std::iter::once(PathElement::new(
                capsule_outline(capsule.a, capsule.b, capsule.radius),
                RED.mix(0.5).stroke_width(1),
            )))
            .map_err(draw_err)?;
        let jammer: Vec<(f64, f64)> = steps.iter().map(|s| (s.jammer.x, s.jammer.y)).collect();
        chart
            .draw_series(LineSeries::new(jammer.clone(), RED.stroke_width(1)))
            .map_err(draw_err)?;
        chart
            .draw_series(
                jammer
                    .last()
                    .map(|&p| Cross::new(p, 6, RED.stroke_width(2))),
            )
            .map_err(draw_err)?;
    }
    for k in 0..header.agents {
        let color = Palette99::pick(k).to_rgba();
        let path_pts: Vec<(f64, f64)> = steps
            .iter()
            .map(|s| (s.positions[k].x, s.positions[k].y))
            .collect();
        chart
            .draw_series(LineSeries::new(path_pts, color.stroke_width(2)))
            .map_err(draw_err)?
            .label(format!("agent {}", k + 1))
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
        chart
            .draw_series(steps.iter().map(|s| {
                let p = (s.positions[k].x, s.positions[k].y);
                let style = if s.carrying[k] {
                    color.filled()
                } else {
                    color.stroke_width(1)
                };
                Circle::new(p, 3, style)
            }))
            .map_err(draw_err)?;
    }
    chart
        .draw_series([sender, receiver].map(|b| {
            let d = 0.05 * r.max(1.0);
            Rectangle::new([(b.x - d, b.y - d), (b.x + d, b.y + d)], BLACK.filled())
        }))
        .map_err(draw_err)?;
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("input")
        .to_string()
}

/// Inputs of the `plot` command.
#[derive(Debug, Default)]
pub struct PlotInputs {
    pub budgets: Option<PathBuf>,
    pub results: Vec<PathBuf>,
    pub trajectories: Vec<PathBuf>,
}

/// Emits every plot the inputs allow. Plots whose inputs are missing or
/// unusable are skipped with a message; returns the files written.
pub fn plot_all(inputs: &PlotInputs, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    let mut attempt = |name: String, f: &dyn Fn(&Path) -> Result<()>| {
        let path = out.join(name);
        match f(&path) {
            Ok(()) => written.push(path),
            Err(e) => eprintln!("skipping {}: {e:#}", path.display()),
        }
    };

    if let Some(dir) = &inputs.budgets {
        attempt("budget.svg".into(), &|p| {
            budget_curves(&load_budget_tables(dir)?, p)
        });
    }
    let mut loaded = Vec::new();
    for file in &inputs.results {
        // results files of different runs share names; prefix the run directory
        let clash = inputs
            .results
            .iter()
            .filter(|f| stem(f) == stem(file))
            .count()
            > 1;
        let name = match file
            .parent()
            .and_then(|d| d.file_name())
            .and_then(|d| d.to_str())
        {
            Some(dir) if clash => format!("{dir}_{}", stem(file)),
            _ => stem(file),
        };
        match crate::commands::read_results_file(file) {
            Ok(r) => loaded.push((name, r)),
            Err(e) => eprintln!("skipping {}: {e:#}", file.display()),
        }
    }
    for (name, records) in &loaded {
        attempt(format!("hist_{name}.svg"), &|p| {
            value_histogram(records, name, p)
        });
    }
    for (i, (na, a)) in loaded.iter().enumerate() {
        for (nb, b) in &loaded[i + 1..] {
            attempt(format!("scatter_{na}_vs_{nb}.svg"), &|p| {
                paired_scatter(a, b, (na, nb), p)
            });
        }
    }
    for log in &inputs.trajectories {
        attempt(format!("trajectory_{}.svg", stem(log)), &|p| {
            trajectory(log, p)
        });
    }
    Ok(written)
}
