use std::fs;
use std::path::{Path, PathBuf};

use hdp::fxp::FxpFormat;
use hdp::hdp::BlockMask;
use hdp::tensorio::{gen_synthetic, save_tensor, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::eval::{evaluate, PointResult, Workload};

/// Artifact names inside `out_dir`.
pub const OUT_TENSOR: &str = "out.hdpt";
pub const MASKS_CSV: &str = "masks.csv";
pub const STATS_CSV: &str = "stats.csv";
pub const SIM_CSV: &str = "sim_report.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const COMPARE_CSV: &str = "compare.csv";
pub const MASK_DIR: &str = "masks";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Mask file of one head at one grid point.
pub fn mask_path(out_dir: &Path, point: usize, head: usize, kind: &str) -> PathBuf {
    out_dir.join(MASK_DIR).join(format!("point{point:03}_head{head}_{kind}.csv"))
}

fn write_masks(out_dir: &Path, r: &PointResult) -> Result<(), CliError> {
    for (kind, masks) in [("hdp", &r.hdp_masks), ("topk", &r.topk_masks)] {
        for (h, m) in masks.iter().enumerate() {
            write_file(&mask_path(out_dir, r.point, h, kind), &m.to_csv())?;
        }
    }
    Ok(())
}

/// One block of one head in `masks.csv`.
#[derive(Serialize)]
struct MaskCell {
    head: usize,
    block_row: usize,
    block_col: usize,
    keep: u8,
}

fn write_mask_table(path: &Path, masks: &[BlockMask]) -> Result<(), CliError> {
    let cells: Vec<MaskCell> = masks
        .iter()
        .enumerate()
        .flat_map(|(head, m)| {
            (0..m.side()).flat_map(move |i| {
                (0..m.side()).map(move |j| MaskCell { head, block_row: i, block_col: j, keep: m.get(i, j) as u8 })
            })
        })
        .collect();
    write_rows(path, &cells)
}

/// Reads a per-head mask written by `sweep` or `compare`.
pub fn read_mask(path: &Path) -> Result<BlockMask, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(BlockMask::from_csv(&text)?)
}

/// `(rho_b, tau_h)` pairs, `tau_h` varying fastest.
pub fn grid(cfg: &RunConfig) -> Vec<(f64, f64)> {
    cfg.rho_b.iter().flat_map(|&r| cfg.tau_h.iter().map(move |&t| (r, t))).collect()
}

fn evaluate_grid(cfg: &RunConfig, w: &Workload, self_compare: bool) -> Result<Vec<PointResult>, CliError> {
    let points = grid(cfg);
    let params = points.iter().map(|&(r, t)| cfg.params(r, t)).collect::<Result<Vec<_>, _>>()?;
    params
        .par_iter()
        .enumerate()
        .map(|(i, p)| evaluate(w, i, p, cfg.simulate, self_compare))
        .collect()
}

pub fn cmd_run(cfg: &RunConfig) -> Result<String, CliError> {
    let (rho, tau) = cfg.single_point()?;
    let params = cfg.params(rho, tau)?;
    let w = Workload::new(cfg)?;
    let r = evaluate(&w, 0, &params, cfg.simulate, false)?;
    let out = &cfg.out_dir;
    create_dir(out)?;
    save_tensor(&out.join(OUT_TENSOR), &r.layer.output)?;
    write_mask_table(&out.join(MASKS_CSV), &r.hdp_masks)?;
    let row = r.row(&w);
    write_rows(&out.join(STATS_CSV), std::slice::from_ref(&row))?;
    if let Some(sim) = &r.sim {
        write_rows(&out.join(SIM_CSV), &sim.report.rows())?;
    }
    Ok(format!(
        "run: l={} d={} heads={} rho_b={} tau_h={} blocks_pruned={}/{} heads_pruned={}/{} max_abs_err={} -> {}",
        cfg.seq_len,
        cfg.dim,
        cfg.heads,
        rho,
        tau,
        row.blocks_pruned,
        row.blocks_total,
        row.heads_pruned,
        row.heads_total,
        row.max_abs_err,
        out.display()
    ))
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let w = Workload::new(cfg)?;
    let results = evaluate_grid(cfg, &w, false)?;
    let out = &cfg.out_dir;
    create_dir(&out.join(MASK_DIR))?;
    for r in &results {
        write_masks(out, r)?;
    }
    let rows: Vec<_> = results.iter().map(|r| r.row(&w)).collect();
    write_rows(&out.join(SWEEP_CSV), &rows)?;
    Ok(format!(
        "sweep: {} points ({} rho_b x {} tau_h) -> {}",
        rows.len(),
        cfg.rho_b.len(),
        cfg.tau_h.len(),
        out.join(SWEEP_CSV).display()
    ))
}

pub fn cmd_compare(cfg: &RunConfig, self_compare: bool) -> Result<String, CliError> {
    let w = Workload::new(cfg)?;
    let results = evaluate_grid(cfg, &w, self_compare)?;
    let out = &cfg.out_dir;
    create_dir(&out.join(MASK_DIR))?;
    let mut rows = Vec::with_capacity(results.len());
    for r in &results {
        write_masks(out, r)?;
        rows.push(r.compare_row(&w, &cfg.params(r.rho_b, r.tau_h)?)?);
    }
    write_rows(&out.join(COMPARE_CSV), &rows)?;
    let min = rows.iter().map(|r| r.overlap).fold(f64::INFINITY, f64::min);
    Ok(format!(
        "compare{}: {} points, min overlap {} -> {}",
        if self_compare { " (top-k vs top-k)" } else { "" },
        rows.len(),
        min,
        out.join(COMPARE_CSV).display()
    ))
}

pub fn cmd_gen(
    rows: usize,
    cols: usize,
    dist: Distribution,
    seed: u64,
    format: FxpFormat,
    path: &Path,
) -> Result<String, CliError> {
    let m = gen_synthetic(rows, cols, dist, seed, format)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_tensor(path, &m)?;
    Ok(format!("gen: {rows}x{cols} {format} {dist} seed={seed} -> {}", path.display()))
}
