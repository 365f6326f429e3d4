//! Commands behind the `scod` binary and the file formats they read and write.
//!
//! Exit codes: 0 on success, 1 when a check or the run itself fails, 2 on usage
//! or parse errors.

pub mod analysis;
pub mod annotations;
pub mod config;
pub mod gradcheck;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::SqueezeRatio;
use crate::scale_plan::{derive_ranges, label_ranges};
use crate::toy::{beta_sweep, gen_scene, train, SweepRow, ToyModel, TrainReport};
use crate::weakseg::{generate_labels, grid_extent, LabelGrid};

pub use analysis::{fig4_rows, rows_to_csv, AnalysisRow};
pub use annotations::{parse_annotations, parse_annotations_str, write_annotations, AnnotatedImage};
pub use config::{LayerConfig, RunConfig, ToySettings};
pub use gradcheck::{run_gradcheck, GradcheckReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] crate::error::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("check failed")]
    CheckFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed | CliError::Core(_) | CliError::Io { .. } => 1,
            CliError::Parse(_) | CliError::Usage(_) => 2,
        }
    }

    fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// ASCII `P2` raster: header, then one text line per grid row.
pub fn label_grid_to_pgm(grid: &LabelGrid, maxval: u32) -> String {
    let mut out = format!("P2\n{} {}\n{}\n", grid.width, grid.height, maxval.max(1));
    for row in grid.labels.chunks(grid.width.max(1)) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a `P2` raster back into `(width, height, maxval, values)`.
pub fn parse_pgm(text: &str) -> CliResult<(usize, usize, u32, Vec<u32>)> {
    let mut tokens = text.split_ascii_whitespace();
    if tokens.next() != Some("P2") {
        return Err(CliError::Parse("not a P2 raster".into()));
    }
    let mut num = |what: &str| -> CliResult<u64> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| CliError::Parse(format!("pgm: bad {what}")))
    };
    let w = num("width")? as usize;
    let h = num("height")? as usize;
    let maxval = num("maxval")? as u32;
    let values = (0..w * h)
        .map(|_| num("pixel").map(|v| v as u32))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((w, h, maxval, values))
}

pub fn parse_betas(text: &str) -> CliResult<Vec<SqueezeRatio>> {
    text.split(',')
        .map(|t| {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad beta value {t:?}")))?;
            SqueezeRatio::new(v).map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

/// Per-layer area ranges as CSV.
pub fn cmd_ranges(cfg: &RunConfig) -> CliResult<String> {
    let specs = cfg.anchor_specs();
    let ranges = derive_ranges(&specs)?;
    let mut out = String::from("layer,stride,a_min,a_max,s_l,s_h\n");
    for (s, r) in specs.iter().zip(&ranges) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.layer_index, s.stride, s.a_min, s.a_max, r.s_l, r.s_h
        )
        .unwrap();
    }
    Ok(out)
}

/// Label rasters for every (image, layer), named `image{ID}_layer{i}.pgm`.
pub fn cmd_labels(cfg: &RunConfig, images: &[AnnotatedImage], out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let specs = cfg.anchor_specs();
    let ranges = label_ranges(&derive_ranges(&specs)?);
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(format!("cannot create {}", out_dir.display()), e))?;
    let mut written = Vec::new();
    for img in images {
        let scene = &img.scene;
        for (spec, range) in specs.iter().zip(&ranges) {
            let w = grid_extent(scene.width(), spec.stride);
            let h = grid_extent(scene.height(), spec.stride);
            let grid = generate_labels(scene, range, h, w, spec.stride)?;
            let path = out_dir.join(format!("image{}_layer{}.pgm", img.id, range.layer_index));
            write_file(&path, &label_grid_to_pgm(&grid, scene.num_classes() as u32))?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn cmd_fig4(cfg: &RunConfig, n_pairs: usize, betas: &[SqueezeRatio], out: &Path) -> CliResult<Vec<AnalysisRow>> {
    if n_pairs == 0 {
        return Err(CliError::Usage("--pairs must be >= 1".into()));
    }
    let rows = fig4_rows(cfg.seed, n_pairs, betas, config::DEFAULT_CANVAS);
    write_file(out, &rows_to_csv(&rows))?;
    Ok(rows)
}

pub fn cmd_gradcheck(cfg: &RunConfig, n_samples: usize, flip_sign: bool) -> CliResult<GradcheckReport> {
    if n_samples == 0 {
        return Err(CliError::Usage("--samples must be >= 1".into()));
    }
    let grad: gradcheck::BoxGradFn = if flip_sign {
        gradcheck::sign_flipped_grad
    } else {
        gradcheck::analytic_grad
    };
    Ok(run_gradcheck(cfg.seed, n_samples, grad))
}

pub const SWEEP_HEADER: &str = "beta,trials,mean_final_iou,mean_steps_to_0_9,reached_0_9";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            analysis::fmt6(r.beta),
            r.trials,
            analysis::fmt6(r.mean_final_iou),
            analysis::fmt6(r.mean_steps_to_0_9),
            r.reached_0_9
        )
        .unwrap();
    }
    out
}

pub fn cmd_beta_sweep(cfg: &RunConfig, betas: &[SqueezeRatio], out: &Path) -> CliResult<Vec<SweepRow>> {
    cfg.validate_toy()?;
    let t = &cfg.toy;
    let values: Vec<f64> = betas.iter().map(|b| b.get()).collect();
    let rows = beta_sweep(&values, t.trials, cfg.seed, t.fit_lr, t.fit_steps)?;
    write_file(out, &sweep_to_csv(&rows))?;
    Ok(rows)
}

pub const TRAIN_HEADER: &str = "step,total,cls,scws,box,mean_iou";

pub fn report_to_csv(report: &TrainReport) -> String {
    let mut out = format!("{TRAIN_HEADER}\n");
    for k in 0..report.len() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            k,
            analysis::fmt6(report.total[k]),
            analysis::fmt6(report.cls[k]),
            analysis::fmt6(report.scws[k]),
            analysis::fmt6(report.box_loss[k]),
            analysis::fmt6(report.mean_iou[k])
        )
        .unwrap();
    }
    out
}

/// Trains the toy detector on the seeded synthetic scene. Returns the report
/// and whether the box term had no matched anchors.
pub fn cmd_train_toy(cfg: &RunConfig, out: &Path) -> CliResult<(TrainReport, bool)> {
    cfg.validate_toy()?;
    let data = gen_scene(cfg.seed, &cfg.scene_config())?;
    let tc = cfg.train_config();
    let mut model = ToyModel::new(&data, &tc)?;
    let no_matches = model.matched.is_empty();
    let report = train(&mut model, &data, &tc)?;
    write_file(out, &report_to_csv(&report))?;
    Ok((report, no_matches))
}
