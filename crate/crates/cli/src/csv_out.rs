//! CSV exports: comma-separated, header row, LF line endings.

use std::fs::File;
use std::path::Path;

use modalmeta_core::analysis::{Curves, EmbeddingRow, Projection};
use modalmeta_core::meta::TrainLog;

use crate::error::{AppError, AppResult};
use crate::format::fmt_f64;

fn writer(path: &Path) -> AppResult<csv::Writer<File>> {
    let file = File::create(path).map_err(AppError::io(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_all(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> AppResult<()> {
    let to_err = |e: csv::Error| AppError::Io {
        path: path.into(),
        source: e.into(),
    };
    let mut w = writer(path)?;
    w.write_record(&header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(AppError::io(path))
}

pub fn write_train_log(path: &Path, log: &TrainLog) -> AppResult<()> {
    let header = ["iteration", "mean_loss", "wall_time_secs"]
        .map(String::from)
        .to_vec();
    let rows = log.records.iter().map(|r| {
        vec![
            r.iteration.to_string(),
            fmt_f64(r.mean_loss),
            fmt_f64(r.wall_time_secs),
        ]
    });
    write_all(path, header, rows)
}

/// One row per task: mode, family, the four task parameters `(A, w, b, c)`
/// (blank where the family has none), then the embedding entries.
pub fn write_embeddings(path: &Path, rows: &[EmbeddingRow]) -> AppResult<()> {
    let dim = rows.first().map_or(0, |r| r.embedding.len());
    let mut header: Vec<String> = ["mode", "family", "A", "w", "b", "c"].map(String::from).to_vec();
    header.extend((0..dim).map(|i| format!("u{i}")));
    let body = rows.iter().map(|r| {
        let mut row = vec![
            r.task.mode_index.to_string(),
            r.task.function.family_name().into(),
        ];
        row.extend(
            r.task
                .function
                .parameters()
                .iter()
                .map(|p| p.map(fmt_f64).unwrap_or_default()),
        );
        row.extend(r.embedding.iter().map(|&v| fmt_f64(v)));
        row
    });
    write_all(path, header, body)
}

pub fn write_projection(path: &Path, rows: &[EmbeddingRow], projection: &Projection) -> AppResult<()> {
    let header = ["mode", "pc1", "pc2"].map(String::from).to_vec();
    let body = rows
        .iter()
        .zip(&projection.coordinates)
        .map(|(r, c)| vec![r.task.mode_index.to_string(), fmt_f64(c[0]), fmt_f64(c[1])]);
    write_all(path, header, body)
}

/// `x`, the noise-free target, then one column per adaptation step.
pub fn write_curves(path: &Path, curves: &Curves) -> AppResult<()> {
    let mut header: Vec<String> = vec!["x".into(), "true".into()];
    header.extend((0..curves.steps.len()).map(|s| format!("step{s}")));
    let body = curves.x.iter().enumerate().map(|(i, &x)| {
        let mut row = vec![fmt_f64(x), fmt_f64(curves.truth[i])];
        row.extend(curves.steps.iter().map(|s| fmt_f64(s[i])));
        row
    });
    write_all(path, header, body)
}

pub fn write_support(path: &Path, curves: &Curves) -> AppResult<()> {
    let header = vec!["x".into(), "y".into()];
    let body = curves
        .support_x
        .iter()
        .zip(&curves.support_y)
        .map(|(&x, &y)| vec![fmt_f64(x), fmt_f64(y)]);
    write_all(path, header, body)
}
