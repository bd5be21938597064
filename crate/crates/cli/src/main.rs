//! Command-line front end: forward solves, partitioning, masks, block
//! completion, inversion, transport, and the scripted experiments.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use itomc_core::completion::{complete_ito_matrix, CompletionConfig};
use itomc_core::container;
use itomc_core::experiments::{run_experiment, ExperimentConfig, ExperimentId};
use itomc_core::fem::assemble_dtn;
use itomc_core::grid::{
    shepp_logan_conductivity, smooth_bump_conductivity, two_blob_conductivity, ConductivityField,
    GridSpec,
};
use itomc_core::hpartition::{build_partition, rank_survey, Admissibility};
use itomc_core::inversion::{gauss_newton, InversionConfig, MisfitTarget};
use itomc_core::rte::{assemble_albedo, RteProblem};
use itomc_core::sampling::{build_mask, mask_density, BudgetRule, MaskedMatrix, SamplingMask};

#[derive(Parser)]
#[command(
    name = "itomc",
    version,
    about = "Hierarchical-block completion of PDE input-to-output matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdmissibilityArg {
    Weak,
    StrongPeriodic,
}

impl From<AdmissibilityArg> for Admissibility {
    fn from(a: AdmissibilityArg) -> Self {
        match a {
            AdmissibilityArg::Weak => Admissibility::Weak,
            AdmissibilityArg::StrongPeriodic => Admissibility::StrongPeriodic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomArg {
    Ones,
    SheppLogan,
    TwoBlob,
    Bump,
}

#[derive(Args)]
struct MaskRuleArgs {
    /// Bernoulli sampling probability for admissible blocks.
    #[arg(long, conflicts_with_all = ["uniform_m", "budget_c"])]
    p: Option<f64>,
    /// Exact per-block sample count, uniform without replacement.
    #[arg(long, conflicts_with = "budget_c")]
    uniform_m: Option<usize>,
    /// Theorem-budget constant C (samples = ceil(C r s^(6/5) ln s)).
    #[arg(long)]
    budget_c: Option<f64>,
    /// Rank guess r of the theorem budget.
    #[arg(long, default_value_t = 5)]
    budget_r: usize,
    /// Probability exponent beta of the theorem budget.
    #[arg(long, default_value_t = 2.1)]
    budget_beta: f64,
}

impl MaskRuleArgs {
    fn rule(&self) -> anyhow::Result<BudgetRule> {
        match (self.p, self.uniform_m, self.budget_c) {
            (Some(p), None, None) => Ok(BudgetRule::Bernoulli { p }),
            (None, Some(m), None) => Ok(BudgetRule::UniformM { m }),
            (None, None, Some(c)) => Ok(BudgetRule::TheoremBudget {
                c,
                r: self.budget_r,
                beta: self.budget_beta,
            }),
            (None, None, None) => Ok(BudgetRule::Bernoulli { p: 0.35 }),
            _ => bail!("choose exactly one of --p, --uniform-m, --budget-c"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a DtN matrix for a phantom or a stored coefficient field.
    Forward {
        #[arg(long)]
        level: u32,
        #[arg(long, value_enum, default_value = "shepp-logan")]
        phantom: PhantomArg,
        /// Coefficient field container overriding the phantom.
        #[arg(long)]
        field: Option<PathBuf>,
        /// Output matrix container.
        #[arg(long)]
        out: PathBuf,
        /// Also export the matrix as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build a hierarchical partition and export it as CSV, or rank-survey
    /// a stored matrix against it.
    Partition {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "strong-periodic")]
        admissibility: AdmissibilityArg,
        #[arg(long, default_value_t = 8)]
        min_block: usize,
        #[arg(long)]
        out: PathBuf,
        /// Matrix container to rank-survey against the partition.
        #[arg(long)]
        survey: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
    },
    /// Draw an observation mask over a partition.
    Mask {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "strong-periodic")]
        admissibility: AdmissibilityArg,
        #[arg(long, default_value_t = 8)]
        min_block: usize,
        #[command(flatten)]
        rule: MaskRuleArgs,
        #[arg(long)]
        seed: u64,
        /// Output CSV path; the JSON sidecar lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Subsample a stored matrix and recover it block by block.
    Complete {
        /// Ground-truth matrix container.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_enum, default_value = "strong-periodic")]
        admissibility: AdmissibilityArg,
        #[arg(long, default_value_t = 8)]
        min_block: usize,
        #[command(flatten)]
        rule: MaskRuleArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        success_tol: f64,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        /// Output directory for the completed matrix and reports.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Reconstruct the coefficient from a stored matrix (optionally
    /// restricted to a mask).
    Invert {
        /// Target matrix container.
        #[arg(long)]
        target: PathBuf,
        /// Restrict the misfit to the entries of this mask CSV.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        level: u32,
        #[arg(long, default_value_t = 16)]
        param_res: usize,
        #[arg(long, default_value_t = 1.0)]
        init: f64,
        #[arg(long, default_value_t = 60)]
        max_iter: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Assemble a transport albedo matrix.
    Rte {
        #[arg(long, default_value_t = 16)]
        n_space: usize,
        #[arg(long, default_value_t = 16)]
        n_angles: usize,
        #[arg(long)]
        kn: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scripted experiment (config file or flags).
    Experiment {
        /// TOML config file; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',')]
        p_grid: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        /// Output root; defaults to $ITOMC_OUT or ./out.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load_field(
    level: u32,
    phantom: PhantomArg,
    field: &Option<PathBuf>,
) -> anyhow::Result<ConductivityField> {
    if let Some(path) = field {
        return Ok(container::read_field(path)?);
    }
    let grid = GridSpec::new(level)?;
    let cells = grid.cells_per_dim();
    Ok(match phantom {
        PhantomArg::Ones => ConductivityField::constant(cells, 1.0)?,
        PhantomArg::SheppLogan => shepp_logan_conductivity(cells),
        PhantomArg::TwoBlob => two_blob_conductivity(cells),
        PhantomArg::Bump => smooth_bump_conductivity(cells),
    })
}

fn parse_mask_csv(text: &str, n: usize) -> anyhow::Result<Vec<(u32, u32)>> {
    let mut entries = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("i,") {
            continue;
        }
        let (i, j) = line
            .split_once(',')
            .with_context(|| format!("mask line {} is not 'i,j'", ln + 1))?;
        let i: u32 = i.trim().parse()?;
        let j: u32 = j.trim().parse()?;
        if i as usize >= n || j as usize >= n {
            bail!("mask entry ({i},{j}) outside {n}x{n}");
        }
        entries.push((i, j));
    }
    Ok(entries)
}

fn experiment_id(name: &str) -> anyhow::Result<ExperimentId> {
    Ok(match name {
        "rank-survey" => ExperimentId::RankSurvey,
        "coherence" => ExperimentId::Coherence,
        "block-sweep" => ExperimentId::BlockSweep,
        "full-pipeline" => ExperimentId::FullPipeline,
        "inversion-compare" => ExperimentId::InversionCompare,
        "rte-survey" => ExperimentId::RteSurvey,
        "refinement-consistency" => ExperimentId::RefinementConsistency,
        other => bail!("unknown experiment id '{other}'"),
    })
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Forward {
            level,
            phantom,
            field,
            out,
            csv,
        } => {
            let grid = GridSpec::new(level)?;
            let a = load_field(level, phantom, &field)?;
            let dtn = assemble_dtn(&grid, &a)?;
            container::write_ito(&out, &dtn)?;
            if let Some(csv_path) = csv {
                std::fs::write(&csv_path, container::matrix_to_csv(&dtn.entries))?;
            }
            println!(
                "dtn level {level}: {n}x{n} written to {}",
                out.display(),
                n = grid.boundary_count()
            );
        }
        Command::Partition {
            n,
            admissibility,
            min_block,
            out,
            survey,
            eps,
        } => {
            let partition = build_partition(n, admissibility.into(), min_block)?;
            match survey {
                Some(matrix_path) => {
                    let (m, _) = container::read_matrix(&matrix_path)?;
                    let report = rank_survey(&m, &partition, eps)?;
                    std::fs::write(&out, report.to_csv())?;
                    println!(
                        "rank survey: {} blocks, max admissible eps-rank {}",
                        partition.blocks().len(),
                        report.max_admissible_rank()
                    );
                }
                None => {
                    std::fs::write(&out, partition.to_csv())?;
                    println!("partition: {} blocks written", partition.blocks().len());
                }
            }
        }
        Command::Mask {
            n,
            admissibility,
            min_block,
            rule,
            seed,
            out,
        } => {
            let partition = build_partition(n, admissibility.into(), min_block)?;
            let mask = build_mask(&partition, &rule.rule()?, seed)?;
            std::fs::write(&out, mask.to_csv())?;
            let sidecar = out.with_extension("json");
            std::fs::write(&sidecar, mask.sidecar_json())?;
            let density = mask_density(&mask, &partition)?;
            println!(
                "mask: {} entries ({:.2}% fill), sidecar {}",
                mask.len(),
                100.0 * density.global,
                sidecar.display()
            );
        }
        Command::Complete {
            matrix,
            admissibility,
            min_block,
            rule,
            seed,
            success_tol,
            max_iter,
            out_dir,
        } => {
            let (truth, kind) = container::read_matrix(&matrix)?;
            let partition = build_partition(truth.nrows(), admissibility.into(), min_block)?;
            let mask = build_mask(&partition, &rule.rule()?, seed)?;
            let observed = MaskedMatrix::observe(&truth, mask)?;
            let cfg = CompletionConfig {
                max_iter,
                ..Default::default()
            };
            let (completed, report) =
                complete_ito_matrix(&observed, &partition, &cfg, Some(&truth), success_tol)?;
            std::fs::create_dir_all(&out_dir)?;
            container::write_matrix(&out_dir.join("completed.itom"), &completed, kind)?;
            std::fs::write(out_dir.join("blocks.csv"), report.to_csv())?;
            let err = (&completed - &truth).norm();
            println!(
                "completed: frobenius error {err:.3e}, all blocks within tolerance: {}",
                report.all_success()
            );
            if !report.all_success() {
                std::process::exit(1);
            }
        }
        Command::Invert {
            target,
            mask,
            level,
            param_res,
            init,
            max_iter,
            out_dir,
        } => {
            let grid = GridSpec::new(level)?;
            let (matrix, _) = container::read_matrix(&target)?;
            let cfg = InversionConfig {
                init_value: init,
                param_resolution: param_res,
                max_iter,
                ..Default::default()
            };
            std::fs::create_dir_all(&out_dir)?;
            let masked = match &mask {
                Some(mask_path) => {
                    let entries =
                        parse_mask_csv(&std::fs::read_to_string(mask_path)?, matrix.nrows())?;
                    let m = SamplingMask::from_entries(matrix.nrows(), entries)?;
                    Some(MaskedMatrix::observe(&matrix, m)?)
                }
                None => None,
            };
            let target_ref = match &masked {
                Some(mm) => MisfitTarget::Masked(mm),
                None => MisfitTarget::Full(&matrix),
            };
            let (recon, trace) = gauss_newton(&target_ref, &cfg, &grid)?;
            container::write_field(&out_dir.join("reconstruction.itom"), &recon)?;
            container::write_pgm(
                &out_dir.join("reconstruction.pgm"),
                recon.resolution(),
                recon.resolution(),
                recon.values(),
            )?;
            std::fs::write(out_dir.join("trace.csv"), trace.to_csv())?;
            println!(
                "inversion: {:?} after {} records; outputs in {}",
                trace.status,
                trace.records.len(),
                out_dir.display()
            );
        }
        Command::Rte {
            n_space,
            n_angles,
            kn,
            sigma,
            out,
        } => {
            let problem = RteProblem::constant_sigma(sigma, kn, n_space, n_angles)?;
            let albedo = assemble_albedo(&problem)?;
            let sidecar = out.with_extension("json");
            std::fs::write(&sidecar, albedo.ordinates_sidecar_json())?;
            container::write_matrix(&out, &albedo.entries, container::ContainerKind::Albedo)?;
            println!(
                "albedo: {d}x{d} (Kn {kn}), sidecar {}",
                sidecar.display(),
                d = albedo.dim()
            );
        }
        Command::Experiment {
            config,
            id,
            seed,
            levels,
            p_grid,
            trials,
            out_dir,
        } => {
            let mut cfg: ExperimentConfig = match (&config, &id) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str(&text).with_context(|| "parsing experiment config")?
                }
                (None, Some(name)) => {
                    let seed = seed.context("--seed is required without a config file")?;
                    ExperimentConfig::new(experiment_id(name)?, seed)
                }
                (None, None) => bail!("provide --config or --id"),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(l) = levels {
                cfg.levels = l;
            }
            if let Some(p) = p_grid {
                cfg.p_grid = p;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            } else if let Ok(root) = std::env::var("ITOMC_OUT") {
                cfg.out_dir = PathBuf::from(root);
            }
            let manifest = run_experiment(&cfg)?;
            println!(
                "experiment {} finished: {} steps, config hash {}",
                manifest.experiment,
                manifest.steps.len(),
                &manifest.config_hash[..12]
            );
            if !manifest.ok {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
