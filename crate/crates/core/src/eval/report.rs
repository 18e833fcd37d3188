//! Result containers and the CSV / SVG report.

use std::fs;
use std::path::Path;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::StrategyId;
use super::metrics::{mean_std, to_db};
use super::EvalError;
use crate::validate::{FlagKind, ValidationReport};

/// Validator outcomes over a set of estimates. Type counts refer to the
/// first draw; `residual` counts estimates still flagged after resampling.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCounts {
    pub n: usize,
    pub any: usize,
    pub constraint: usize,
    pub fabricated: usize,
    pub context: usize,
    pub residual: usize,
}

impl FlagCounts {
    pub fn add(&mut self, first: &ValidationReport, final_passed: bool) {
        self.n += 1;
        self.any += usize::from(!first.passed);
        self.constraint += usize::from(first.has(FlagKind::Constraint));
        self.fabricated += usize::from(first.has(FlagKind::Fabricated));
        self.context += usize::from(first.has(FlagKind::Context));
        self.residual += usize::from(!final_passed);
    }

    pub fn merge(&mut self, other: &FlagCounts) {
        self.n += other.n;
        self.any += other.any;
        self.constraint += other.constraint;
        self.fabricated += other.fabricated;
        self.context += other.context;
        self.residual += other.residual;
    }

    /// `(type, rate)` rows in report order.
    pub fn rates(&self) -> Vec<(&'static str, f64)> {
        let r = |c: usize| if self.n == 0 { 0.0 } else { c as f64 / self.n as f64 };
        vec![
            (FlagKind::Constraint.key(), r(self.constraint)),
            (FlagKind::Fabricated.key(), r(self.fabricated)),
            (FlagKind::Context.key(), r(self.context)),
            ("ANY", r(self.any)),
            ("RESIDUAL", r(self.residual)),
        ]
    }
}

/// NMSE at one SNR, pooled over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseCell {
    pub snr_db: f64,
    /// Per-observation NMSE, seeds in order.
    pub values: Vec<f64>,
    pub seed_means: Vec<f64>,
}

impl NmseCell {
    pub fn mean(&self) -> f64 {
        mean_std(&self.values).0
    }

    pub fn std(&self) -> f64 {
        mean_std(&self.values).1
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn std_error(&self) -> f64 {
        self.std() / (self.n() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: StrategyId,
    pub seeds: Vec<u64>,
    /// Mean diffusion training loss per epoch over models and seeds.
    pub loss: Vec<f64>,
    pub cells: Vec<NmseCell>,
    pub flags: FlagCounts,
}

impl StrategyResult {
    pub fn cell(&self, snr_db: f64) -> Option<&NmseCell> {
        self.cells.iter().find(|c| c.snr_db == snr_db)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub strategies: Vec<StrategyResult>,
}

impl EvalResult {
    pub fn get(&self, strategy: StrategyId) -> Option<&StrategyResult> {
        self.strategies.iter().find(|s| s.strategy == strategy)
    }

    pub fn mean_nmse(&self, strategy: StrategyId, snr_db: f64) -> Option<f64> {
        self.get(strategy)?.cell(snr_db).map(NmseCell::mean)
    }

    pub fn cell_count(&self) -> usize {
        self.strategies.iter().map(|s| s.cells.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Config(format!("result file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        Self::from_json(&text)
    }
}

pub const NMSE_HEADER: [&str; 6] = ["strategy", "snr_db", "nmse_mean", "nmse_std", "n", "nmse_mean_db"];
pub const LOSS_HEADER: [&str; 3] = ["strategy", "epoch", "loss"];
pub const FLAGS_HEADER: [&str; 3] = ["strategy", "type", "rate"];

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| EvalError::io(path, e))?;
    w.write_record(header).map_err(|e| EvalError::io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| EvalError::io(path, e))?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))
}

/// Shortest text that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v}")
}

fn nmse_rows(result: &EvalResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in &result.strategies {
        for c in &s.cells {
            let (mean, std) = mean_std(&c.values);
            rows.push(vec![
                s.strategy.key().to_string(),
                num(c.snr_db),
                num(mean),
                num(std),
                c.n().to_string(),
                num(to_db(mean)),
            ]);
        }
    }
    rows
}

pub const RESULT_FILE: &str = "result.json";

/// Writes `nmse.csv`, `loss.csv`, `flags.csv`, the full result as
/// `result.json` and, for non-empty results, `nmse.svg` and `loss.svg`.
pub fn emit_report(result: &EvalResult, dir: &Path) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let json = dir.join(RESULT_FILE);
    fs::write(&json, result.to_json()).map_err(|e| EvalError::io(&json, e))?;
    write_csv(&dir.join("nmse.csv"), &NMSE_HEADER, nmse_rows(result))?;
    let loss_rows = result
        .strategies
        .iter()
        .flat_map(|s| {
            s.loss
                .iter()
                .enumerate()
                .map(move |(e, l)| vec![s.strategy.key().to_string(), (e + 1).to_string(), num(*l)])
        })
        .collect();
    write_csv(&dir.join("loss.csv"), &LOSS_HEADER, loss_rows)?;
    let flag_rows = result
        .strategies
        .iter()
        .flat_map(|s| {
            s.flags
                .rates()
                .into_iter()
                .map(move |(t, r)| vec![s.strategy.key().to_string(), t.to_string(), num(r)])
        })
        .collect();
    write_csv(&dir.join("flags.csv"), &FLAGS_HEADER, flag_rows)?;
    if result.cell_count() > 0 {
        plot_nmse(result, &dir.join("nmse.svg"))?;
    }
    if result.strategies.iter().any(|s| !s.loss.is_empty()) {
        plot_loss(result, &dir.join("loss.svg"))?;
    }
    Ok(())
}

fn colour(strategy: StrategyId) -> RGBColor {
    match strategy {
        StrategyId::Hallucination => RGBColor(200, 60, 40),
        StrategyId::NoAttention => RGBColor(230, 150, 20),
        StrategyId::NoLlm => RGBColor(60, 120, 200),
        StrategyId::Integrated => RGBColor(30, 150, 70),
    }
}

fn plot_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::io(path, format!("plot: {e}"))
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// NMSE (dB) against SNR, one line per strategy.
fn plot_nmse(result: &EvalResult, path: &Path) -> Result<(), EvalError> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let cells = result.strategies.iter().flat_map(|s| s.cells.iter());
    let (x0, x1) = finite_range(cells.clone().map(|c| c.snr_db));
    let (y0, y1) = finite_range(cells.map(|c| to_db(c.mean())));
    let mut chart = ChartBuilder::on(&root)
        .caption("NMSE vs SNR", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("SNR (dB)")
        .y_desc("NMSE (dB)")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for s in &result.strategies {
        let c = colour(s.strategy);
        let points: Vec<(f64, f64)> = s.cells.iter().map(|cell| (cell.snr_db, to_db(cell.mean()))).collect();
        chart
            .draw_series(LineSeries::new(points.clone(), c.stroke_width(2)))
            .map_err(|e| plot_err(path, e))?
            .label(s.strategy.key())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], c.stroke_width(2)));
        chart
            .draw_series(points.into_iter().map(|p| Circle::new(p, 3, c.filled())))
            .map_err(|e| plot_err(path, e))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

/// Training loss per epoch, one line per strategy.
fn plot_loss(result: &EvalResult, path: &Path) -> Result<(), EvalError> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let epochs = result.strategies.iter().map(|s| s.loss.len()).max().unwrap_or(1).max(2);
    let (y0, y1) = finite_range(result.strategies.iter().flat_map(|s| s.loss.iter().copied()));
    let mut chart = ChartBuilder::on(&root)
        .caption("Diffusion training loss", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(1f64..epochs as f64, y0..y1)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc("noise-prediction MSE")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for s in &result.strategies {
        let c = colour(s.strategy);
        let points: Vec<(f64, f64)> = s.loss.iter().enumerate().map(|(e, l)| ((e + 1) as f64, *l)).collect();
        chart
            .draw_series(LineSeries::new(points, c.stroke_width(2)))
            .map_err(|e| plot_err(path, e))?
            .label(s.strategy.key())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], c.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}
