//! Experiment drivers: reproducible CSV/raster studies of rank structure,
//! coherence, block completion sweeps, the full matrix-completion
//! pipeline, inversion comparisons, transport surveys, and the
//! mesh-refinement consistency table.
//!
//! Every stochastic path is seeded explicitly; rerunning a config
//! reproduces byte-identical CSVs. Wall-clock timings live only in the run
//! manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::completion::{
    complete_ito_matrix, coherence_report, success_ratio_sweep, sweep_to_csv, CompletionConfig,
};
use crate::container;
use crate::fem::{assemble_dtn, dtn_block};
use crate::grid::{
    boundary_project, shepp_logan_conductivity, smooth_bump_conductivity, two_blob_conductivity,
    ConductivityField, GridSpec,
};
use crate::hpartition::{build_partition, rank_survey, Admissibility};
use crate::inversion::{compare_reconstructions, gauss_newton, InversionConfig, MisfitTarget};
use crate::rte::{assemble_albedo, rte_success_sweep, RteProblem};
use crate::sampling::{build_mask, mask_density, BudgetRule, MaskedMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    RankSurvey,
    Coherence,
    BlockSweep,
    FullPipeline,
    InversionCompare,
    RteSurvey,
    RefinementConsistency,
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentId::RankSurvey => "rank-survey",
            ExperimentId::Coherence => "coherence",
            ExperimentId::BlockSweep => "block-sweep",
            ExperimentId::FullPipeline => "full-pipeline",
            ExperimentId::InversionCompare => "inversion-compare",
            ExperimentId::RteSurvey => "rte-survey",
            ExperimentId::RefinementConsistency => "refinement-consistency",
        };
        write!(f, "{s}")
    }
}

fn default_levels() -> Vec<u32> {
    vec![5, 6, 7]
}
fn default_p_grid() -> Vec<f64> {
    vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5]
}
fn default_trials() -> usize {
    20
}
fn default_eps() -> f64 {
    crate::hpartition::DEFAULT_EPS_RANK
}
fn default_success_tol() -> f64 {
    crate::completion::DEFAULT_SUCCESS_TOL
}
fn default_min_block() -> usize {
    crate::hpartition::DEFAULT_MIN_BLOCK
}
fn default_admissibility() -> Admissibility {
    Admissibility::StrongPeriodic
}
fn default_budget() -> BudgetRule {
    BudgetRule::Bernoulli { p: 0.35 }
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_sweep_max_iter() -> usize {
    2500
}
fn default_param_resolution() -> usize {
    16
}
fn default_knudsen() -> Vec<f64> {
    vec![1.0, 0.03125]
}
fn default_rte_space() -> usize {
    16
}
fn default_rte_angles() -> usize {
    16
}

/// One configuration drives one experiment run. Fields irrelevant to the
/// chosen experiment keep their defaults and do not affect it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Explicit seed; no wall-clock seeding anywhere.
    pub seed: u64,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_p_grid")]
    pub p_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    #[serde(default = "default_min_block")]
    pub min_block: usize,
    #[serde(default = "default_admissibility")]
    pub admissibility: Admissibility,
    /// Mask rule for full-pipeline and inversion-compare.
    #[serde(default = "default_budget")]
    pub budget: BudgetRule,
    /// Completion iteration cap used inside sweep cells.
    #[serde(default = "default_sweep_max_iter")]
    pub sweep_max_iter: usize,
    #[serde(default = "default_param_resolution")]
    pub param_resolution: usize,
    /// Knudsen numbers for the transport survey.
    #[serde(default = "default_knudsen")]
    pub knudsen: Vec<f64>,
    #[serde(default = "default_rte_space")]
    pub rte_space: usize,
    #[serde(default = "default_rte_angles")]
    pub rte_angles: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId, seed: u64) -> Self {
        Self {
            experiment,
            seed,
            levels: default_levels(),
            p_grid: default_p_grid(),
            trials: default_trials(),
            eps: default_eps(),
            success_tol: default_success_tol(),
            min_block: default_min_block(),
            admissibility: default_admissibility(),
            budget: default_budget(),
            sweep_max_iter: default_sweep_max_iter(),
            param_resolution: default_param_resolution(),
            knudsen: default_knudsen(),
            rte_space: default_rte_space(),
            rte_angles: default_rte_angles(),
            out_dir: default_out_dir(),
        }
    }

    /// Stable hash of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        hex_lower(&h.finalize())
    }
}

fn hex_lower(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestStep {
    pub step: String,
    pub status: String,
    pub seconds: f64,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub ok: bool,
    pub steps: Vec<ManifestStep>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }
}

struct StepRecorder {
    dir: PathBuf,
    steps: Vec<ManifestStep>,
}

impl StepRecorder {
    fn run<F: FnOnce(&Path, &mut Vec<String>) -> Result<()>>(
        &mut self,
        name: &str,
        f: F,
    ) -> Result<()> {
        let t0 = Instant::now();
        let mut artifacts = Vec::new();
        let result = f(&self.dir, &mut artifacts);
        self.steps.push(ManifestStep {
            step: name.to_string(),
            status: match &result {
                Ok(()) => "ok".to_string(),
                Err(e) => format!("error: {e}"),
            },
            seconds: t0.elapsed().as_secs_f64(),
            artifacts,
        });
        result
    }
}

fn write_artifact(dir: &Path, name: &str, contents: &str, artifacts: &mut Vec<String>) -> Result<()> {
    std::fs::write(dir.join(name), contents)?;
    artifacts.push(name.to_string());
    Ok(())
}

/// Reference off-diagonal study blocks of the DtN matrix at one level:
/// block "a" (side n/4) spans rows `[0, n/4)`, cols `[n/2, 3n/4)`; block
/// "b" (side n/8) spans rows `[0, n/8)`, cols `[n/4, 3n/8)`. Both satisfy
/// the strong-periodic admissibility rule.
pub fn study_block_a(grid: &GridSpec, a: &ConductivityField) -> Result<DMatrix<f64>> {
    let n = grid.boundary_count();
    dtn_block(grid, a, 0..n / 4, n / 2..3 * n / 4)
}

pub fn study_block_b(grid: &GridSpec, a: &ConductivityField) -> Result<DMatrix<f64>> {
    let n = grid.boundary_count();
    dtn_block(grid, a, 0..n / 8, n / 4..3 * n / 8)
}

/// Dispatch one experiment, writing CSVs, rasters and the manifest under
/// `cfg.out_dir/<experiment>/`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let dir = cfg.out_dir.join(cfg.experiment.to_string());
    std::fs::create_dir_all(&dir)?;
    let mut rec = StepRecorder {
        dir: dir.clone(),
        steps: Vec::new(),
    };
    let result = match cfg.experiment {
        ExperimentId::RankSurvey => run_rank_survey(cfg, &mut rec),
        ExperimentId::Coherence => run_coherence(cfg, &mut rec),
        ExperimentId::BlockSweep => run_block_sweep(cfg, &mut rec),
        ExperimentId::FullPipeline => run_full_pipeline(cfg, &mut rec),
        ExperimentId::InversionCompare => run_inversion_compare(cfg, &mut rec),
        ExperimentId::RteSurvey => run_rte_survey(cfg, &mut rec),
        ExperimentId::RefinementConsistency => run_refinement_consistency(cfg, &mut rec),
    };
    let manifest = RunManifest {
        experiment: cfg.experiment.to_string(),
        config_hash: cfg.hash(),
        ok: result.is_ok(),
        steps: rec.steps,
    };
    manifest.write(&dir)?;
    result.map(|()| manifest)
}

fn run_rank_survey(cfg: &ExperimentConfig, rec: &mut StepRecorder) -> Result<()> {
    for &level in &cfg.levels {
        rec.run(&format!("rank-survey-l{level}"), |dir, artifacts| {
            let grid = GridSpec::new(level)?;
            let a = shepp_logan_conductivity(grid.cells_per_dim());
            let dtn = assemble_dtn(&grid, &a)?;
            let partition = build_partition(grid.boundary_count(), cfg.admissibility, cfg.min_block)?;
            let report = rank_survey(&dtn.entries, &partition, cfg.eps)?;
            write_artifact(dir, &format!("ranks_l{level}.csv"), &report.to_csv(), artifacts)?;
            write_artifact(
                dir,
                &format!("partition_l{level}.csv"),
                &partition.to_csv(),
                artifacts,
            )?;
            let pgm = format!("dtn_l{level}.pgm");
            container::write_matrix_pgm(&dir.join(&pgm), &dtn.entries)?;
            artifacts.push(pgm);
            Ok(())
        })?;
    }
    Ok(())
}

fn run_coherence(cfg: &ExperimentConfig, rec: &mut StepRecorder) -> Result<()> {
    let mut csv =
        String::from("level,block,dim,eps_rank,mu_row,mu_col,mu_row_normalized,max_uv\n");
    for &level in &cfg.levels {
        let grid = GridSpec::new(level)?;
        let a = shepp_logan_conductivity(grid.cells_per_dim());
        for (name, block) in [
            ("a", study_block_a(&grid, &a)?),
            ("b", study_block_b(&grid, &a)?),
        ] {
            let r = coherence_report(&block, cfg.eps)?;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                level, name, r.nrows, r.r, r.mu_row, r.mu_col, r.mu_row_normalized, r.max_uv
            ));
        }
    }
    rec.run("coherence-table", |dir, artifacts| {
        write_artifact(dir, "coherence.csv", &csv, artifacts)
    })
}

fn run_block_sweep(cfg: &ExperimentConfig, rec: &mut StepRecorder) -> Result<()> {
    let mut blocks = Vec::new();
    for &level in &cfg.levels {
        let grid = GridSpec::new(level)?;
        let a = shepp_logan_conductivity(grid.cells_per_dim());
        blocks.push((level, study_block_a(&grid, &a)?));
    }
    let solver = CompletionConfig {
        max_iter: cfg.sweep_max_iter,
        ..Default::default()
    };
    let cells = success_ratio_sweep(
        &blocks,
        &cfg.p_grid,
        cfg.trials,
        cfg.success_tol,
        &solver,
        cfg.seed,
    );
    rec.run("block-sweep-table", |dir, artifacts| {
        write_artifact(dir, "success_ratio.csv", &sweep_to_csv(&cells), artifacts)
    })
}

fn run_full_pipeline(cfg: &ExperimentConfig, rec: &mut StepRecorder) -> Result<()> {
    let level = *cfg.levels.first().ok_or_else(|| {
        Error::InvalidConfig("full-pipeline needs at least one level".into())
    })?;
    let grid = GridSpec::new(level)?;
    let a = shepp_logan_conductivity(grid.cells_per_dim());
    let dtn = assemble_dtn(&grid, &a)?;
    let partition = build_partition(grid.boundary_count(), cfg.admissibility, cfg.min_block)?;
    let mask = build_mask(&partition, &cfg.budget, cfg.seed)?;
    let density = mask_density(&mask, &partition)?;

    rec.run("mask", |dir, artifacts| {
        write_artifact(dir, "mask.csv", &mask.to_csv(), artifacts)?;
        write_artifact(dir, "mask.json", &mask.sidecar_json(), artifacts)?;
        write_artifact(
            dir,
            "density.json",
            &serde_json::to_string_pretty(&density).expect("density serializes"),
            artifacts,
        )
    })?;

    let observed = MaskedMatrix::observe(&dtn.entries, mask)?;
    let solver = CompletionConfig {
        max_iter: cfg.sweep_max_iter,
        ..Default::default()
    };
    let (completed, report) =
        complete_ito_matrix(&observed, &partition, &solver, Some(&dtn.entries), cfg.success_tol)?;

    rec.run("complete", |dir, artifacts| {
        container::write_matrix(
            &dir.join("completed.itom"),
            &completed,
            container::ContainerKind::Dtn,
        )?;
        artifacts.push("completed.itom".to_string());
        write_artifact(dir, "blocks.csv", &report.to_csv(), artifacts)?;
        let err = (&completed - &dtn.entries).norm();
        write_artifact(
            dir,
            "summary.json",
            &serde_json::json!({
                "level": level,
                "frobenius_error": err,
                "all_blocks_converged": report.all_converged(),
                "all_blocks_success": report.all_success(),
            })
            .to_string(),
            artifacts,
        )
    })
}

/// Fields written by the inversion comparison, in order: ground truth,
/// reconstruction from the exact matrix, from the completed matrix, from
/// the raw subsampled entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InversionCompareSummary {
    pub completed_vs_exact_l2: f64,
    pub raw_vs_exact_l2: f64,
    /// `raw / completed` distance ratio.
    pub separation: f64,
    pub all_blocks_success: bool,
}

pub fn inversion_compare(
    cfg: &ExperimentConfig,
) -> Result<(
    [ConductivityField; 4],
    InversionCompareSummary,
)> {
    let level = *cfg.levels.first().unwrap_or(&6);
    let grid = GridSpec::new(level)?;
    let truth = two_blob_conductivity(grid.cells_per_dim());
    let dtn = assemble_dtn(&grid, &truth)?;
    let partition = build_partition(grid.boundary_count(), cfg.admissibility, cfg.min_block)?;
    let mask = build_mask(&partition, &cfg.budget, cfg.seed)?;
    let observed = MaskedMatrix::observe(&dtn.entries, mask)?;

    let solver = CompletionConfig {
        max_iter: cfg.sweep_max_iter,
        ..Default::default()
    };
    let (completed, report) =
        complete_ito_matrix(&observed, &partition, &solver, Some(&dtn.entries), cfg.success_tol)?;

    let inv = InversionConfig {
        param_resolution: cfg.param_resolution,
        max_iter: 40,
        ..Default::default()
    };
    let (recon_exact, _) = gauss_newton(&MisfitTarget::Full(&dtn.entries), &inv, &grid)?;
    let (recon_completed, _) = gauss_newton(&MisfitTarget::Full(&completed), &inv, &grid)?;
    let (recon_raw, _) = gauss_newton(&MisfitTarget::Masked(&observed), &inv, &grid)?;

    let d_completed = compare_reconstructions(&recon_exact, &recon_completed)?;
    let d_raw = compare_reconstructions(&recon_exact, &recon_raw)?;
    let truth_coarse = two_blob_conductivity(cfg.param_resolution);
    let summary = InversionCompareSummary {
        completed_vs_exact_l2: d_completed.relative_l2,
        raw_vs_exact_l2: d_raw.relative_l2,
        separation: d_raw.relative_l2 / d_completed.relative_l2.max(1e-300),
        all_blocks_success: report.all_success(),
    };
    Ok(([truth_coarse, recon_exact, recon_completed, recon_raw], summary))
}

fn run_inversion_compare(cfg: &ExperimentConfig, rec: &mut StepRecorder) -> Result<()> {
    let (fields, summary) = inversion_compare(cfg)?;
    rec.run("inversion-compare", |dir, artifacts| {
        for (name, field) in ["truth", "recon_exact", "recon_completed", "recon_raw"]
            .iter()
            .zip(&fields)
        {
            let base = format!("{name}.itom");
            container::write_field(&dir.join(&base), field)?;
            artifacts.push(base);
            let pgm = format!("{name}.pgm");
            container::write_pgm(
                &dir.join(&pgm),
                field.resolution(),
                field.resolution(),
                field.values(),
            )?;
            artifacts.push(pgm);
        }
        write_artifact(
            dir,
            "summary.json",
            &serde_json::to_string_pretty(&summary).expect("summary serializes"),
            artifacts,
        )
    })
}

fn run_rte_survey(cfg: &ExperimentConfig, rec: &mut StepRecorder) -> Result<()> {
    for &kn in &cfg.knudsen {
        rec.run(&format!("albedo-kn{kn}"), |dir, artifacts| {
            let problem = RteProblem::constant_sigma(1.0, kn, cfg.rte_space, cfg.rte_angles)?;
            let albedo = assemble_albedo(&problem)?;
            let tag = format!("{kn}").replace('.', "_");
            let pgm = format!("albedo_kn{tag}.pgm");
            container::write_matrix_pgm(&dir.join(&pgm), &albedo.entries)?;
            artifacts.push(pgm);
            write_artifact(
                dir,
                &format!("albedo_kn{tag}.json"),
                &albedo.ordinates_sidecar_json(),
                artifacts,
            )?;

            // Global and per-block epsilon-rank diagnostics.
            let dim = albedo.dim();
            let global_rank = crate::hpartition::epsilon_rank(&albedo.entries, cfg.eps);
            let partition = build_partition(dim, cfg.admissibility, cfg.min_block)?;
            let report = rank_survey(&albedo.entries, &partition, cfg.eps)?;
            write_artifact(dir, &format!("albedo_ranks_kn{tag}.csv"), &report.to_csv(), artifacts)?;
            write_artifact(
                dir,
                &format!("albedo_summary_kn{tag}.json"),
                &serde_json::json!({
                    "dim": dim,
                    "global_eps_rank": global_rank,
                    "max_admissible_rank": report.max_admissible_rank(),
                })
                .to_string(),
                artifacts,
            )
        })?;
    }

    // Success sweep over two consecutive refinements at Kn = 1.
    rec.run("rte-success-sweep", |dir, artifacts| {
        let problems = vec![
            (
                0u32,
                RteProblem::constant_sigma(1.0, 1.0, cfg.rte_space / 2, cfg.rte_angles / 2)?,
            ),
            (
                1u32,
                RteProblem::constant_sigma(1.0, 1.0, cfg.rte_space, cfg.rte_angles)?,
            ),
        ];
        let solver = CompletionConfig {
            max_iter: cfg.sweep_max_iter,
            ..Default::default()
        };
        let cells = rte_success_sweep(
            &problems,
            &cfg.p_grid,
            cfg.trials,
            cfg.success_tol,
            &solver,
            cfg.seed,
        )?;
        write_artifact(dir, "rte_success_ratio.csv", &sweep_to_csv(&cells), artifacts)
    })
}

/// One row of the refinement-consistency table: the dual-norm discrepancy
/// between the Neumann outputs of two consecutive discretizations applied
/// to a fixed family of low-frequency boundary data.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub level_coarse: u32,
    pub level_fine: u32,
    pub discrepancy: f64,
}

/// Number of trigonometric test data (cos/sin pairs) and output modes used
/// by the discrepancy functional.
const CONSISTENCY_MODES: usize = 4;
const CONSISTENCY_KMAX: usize = 12;

/// Fourier coefficients of the Neumann output: the dual vector pairs with
/// trigonometric test functions through nodal summation, which is
/// level-consistent.
fn output_fourier(grid: &GridSpec, d: &[f64], kmax: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let mut re = 0.0;
        let mut im = 0.0;
        for (j, &dj) in d.iter().enumerate() {
            let t = grid.boundary_arclength(j) / 4.0;
            let ang = 2.0 * std::f64::consts::PI * k as f64 * t;
            re += dj * ang.cos();
            im -= dj * ang.sin();
        }
        out.push((re, im));
    }
    out
}

/// Apply the DtN matrices of consecutive levels to a fixed low-frequency
/// trigonometric family and report the Fourier-weighted dual-norm
/// discrepancy per level pair. The coefficient's pixel grid must divide
/// the coarsest level's cell grid.
pub fn refinement_consistency(
    a: &ConductivityField,
    levels: &[u32],
) -> Result<Vec<ConsistencyRow>> {
    if levels.len() < 2 {
        return Err(Error::InvalidConfig(
            "refinement consistency needs at least two levels".into(),
        ));
    }
    // Output Fourier tables per level, for each test datum.
    let mut tables: Vec<Vec<Vec<(f64, f64)>>> = Vec::new();
    for &level in levels {
        let grid = GridSpec::new(level)?;
        let dtn = assemble_dtn(&grid, a)?;
        let mut per_datum = Vec::new();
        for m in 1..=CONSISTENCY_MODES {
            for phase in [false, true] {
                let phi = boundary_project(&grid, |p| {
                    let ang = 2.0 * std::f64::consts::PI * m as f64 * p.arclength / 4.0;
                    if phase {
                        ang.sin()
                    } else {
                        ang.cos()
                    }
                });
                let d = &dtn.entries * nalgebra::DVector::from_vec(phi);
                per_datum.push(output_fourier(&grid, d.as_slice(), CONSISTENCY_KMAX));
            }
        }
        tables.push(per_datum);
    }

    let mut rows = Vec::new();
    for w in 0..levels.len() - 1 {
        let (coarse, fine) = (&tables[w], &tables[w + 1]);
        if levels[w] == levels[w + 1] {
            rows.push(ConsistencyRow {
                level_coarse: levels[w],
                level_fine: levels[w + 1],
                discrepancy: 0.0,
            });
            continue;
        }
        let mut acc = 0.0;
        for (fc, ff) in coarse.iter().zip(fine) {
            for (k, ((re_c, im_c), (re_f, im_f))) in fc.iter().zip(ff).enumerate() {
                let wgt = 1.0 / (1.0 + k as f64);
                acc += wgt * ((re_c - re_f).powi(2) + (im_c - im_f).powi(2));
            }
        }
        rows.push(ConsistencyRow {
            level_coarse: levels[w],
            level_fine: levels[w + 1],
            discrepancy: acc.sqrt(),
        });
    }
    Ok(rows)
}

pub fn consistency_to_csv(rows: &[ConsistencyRow]) -> String {
    let mut s = String::from("level_coarse,level_fine,discrepancy\n");
    for r in rows {
        s.push_str(&format!("{},{},{:e}\n", r.level_coarse, r.level_fine, r.discrepancy));
    }
    s
}

/// Discrete Rayleigh quotient of the DtN form on the interpolated datum
/// `sin(pi x)` supported on the bottom edge, against the lumped boundary
/// mass. For the unit coefficient the separable harmonic extension gives
/// the exact value `pi * coth(pi)`.
pub fn dtn_rayleigh_bottom_sine(grid: &GridSpec, a: &ConductivityField) -> Result<f64> {
    let dtn = assemble_dtn(grid, a)?;
    let phi: Vec<f64> = (0..grid.boundary_count())
        .map(|k| {
            let (ix, iy) = grid.boundary_node(k);
            if iy == 0 {
                (std::f64::consts::PI * ix as f64 * grid.mesh_size()).sin()
            } else {
                0.0
            }
        })
        .collect();
    let v = nalgebra::DVector::from_vec(phi);
    let energy = (v.transpose() * &dtn.entries * &v)[(0, 0)];
    let mass = grid.mesh_size() * v.iter().map(|x| x * x).sum::<f64>();
    Ok(energy / mass)
}

fn run_refinement_consistency(cfg: &ExperimentConfig, rec: &mut StepRecorder) -> Result<()> {
    let coarse_cells = 1usize << cfg.levels.iter().min().copied().unwrap_or(3);
    let res = cfg.param_resolution.min(coarse_cells).max(1);
    for (name, field) in [
        ("ones", ConductivityField::constant(res, 1.0)?),
        ("bump", smooth_bump_conductivity(res)),
    ] {
        let rows = refinement_consistency(&field, &cfg.levels)?;
        rec.run(&format!("consistency-{name}"), |dir, artifacts| {
            write_artifact(
                dir,
                &format!("consistency_{name}.csv"),
                &consistency_to_csv(&rows),
                artifacts,
            )
        })?;
    }
    // Lowest-mode oracle value alongside the discrete quotients.
    let mut csv = String::from("level,rayleigh,oracle\n");
    let oracle = std::f64::consts::PI / std::f64::consts::PI.tanh();
    for &level in &cfg.levels {
        let grid = GridSpec::new(level)?;
        let a = ConductivityField::constant(grid.cells_per_dim(), 1.0)?;
        let r = dtn_rayleigh_bottom_sine(&grid, &a)?;
        csv.push_str(&format!("{level},{r},{oracle}\n"));
    }
    rec.run("rayleigh-oracle", |dir, artifacts| {
        write_artifact(dir, "rayleigh.csv", &csv, artifacts)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_levels_have_zero_discrepancy() {
        let a = ConductivityField::constant(8, 1.0).unwrap();
        let rows = refinement_consistency(&a, &[3, 3]).unwrap();
        assert_eq!(rows[0].discrepancy, 0.0);
    }

    #[test]
    fn discrepancy_decreases_under_refinement_for_unit_coefficient() {
        let a = ConductivityField::constant(8, 1.0).unwrap();
        let rows = refinement_consistency(&a, &[3, 4, 5]).unwrap();
        assert!(rows[0].discrepancy > rows[1].discrepancy, "{rows:?}");
    }

    #[test]
    fn rayleigh_quotient_approaches_the_separable_oracle() {
        // Exact value for the unit coefficient: pi * coth(pi).
        let oracle = std::f64::consts::PI / std::f64::consts::PI.tanh();
        let mut errs = Vec::new();
        for level in [3u32, 4, 5] {
            let grid = GridSpec::new(level).unwrap();
            let a = ConductivityField::constant(grid.cells_per_dim(), 1.0).unwrap();
            let r = dtn_rayleigh_bottom_sine(&grid, &a).unwrap();
            errs.push((r - oracle).abs() / oracle);
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[2] < 0.01, "level-5 error {:.3e}", errs[2]);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::new(ExperimentId::RankSurvey, 7);
        let b = ExperimentConfig::new(ExperimentId::RankSurvey, 7);
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::new(ExperimentId::RankSurvey, 8);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rank_survey_experiment_writes_reproducible_csvs() {
        let tmp = std::env::temp_dir().join("itomc-exp-test");
        let _ = std::fs::remove_dir_all(&tmp);
        let mut cfg = ExperimentConfig::new(ExperimentId::RankSurvey, 3);
        cfg.levels = vec![4];
        cfg.out_dir = tmp.clone();
        let m1 = run_experiment(&cfg).unwrap();
        assert!(m1.ok);
        let p = tmp.join("rank-survey/ranks_l4.csv");
        let first = std::fs::read(&p).unwrap();
        run_experiment(&cfg).unwrap();
        let second = std::fs::read(&p).unwrap();
        assert_eq!(first, second);
    }
}
