use itomc_core::completion::{complete_ito_matrix, CompletionConfig};
use itomc_core::fem::assemble_dtn;
use itomc_core::grid::{two_blob_conductivity, GridSpec};
use itomc_core::hpartition::{build_partition, epsilon_rank, Admissibility};
use itomc_core::sampling::{build_mask, BudgetRule, MaskedMatrix};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let p: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let mb: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let max_iter: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2500);
    let grid = GridSpec::new(6).unwrap();
    let truth = two_blob_conductivity(grid.cells_per_dim());
    let dtn = assemble_dtn(&grid, &truth).unwrap();
    let partition = build_partition(grid.boundary_count(), Admissibility::StrongPeriodic, mb).unwrap();
    let mask = build_mask(&partition, &BudgetRule::Bernoulli { p }, 2024).unwrap();
    let observed = MaskedMatrix::observe(&dtn.entries, mask).unwrap();
    let cfg = CompletionConfig { max_iter, ..Default::default() };
    let (completed, report) = complete_ito_matrix(&observed, &partition, &cfg, Some(&dtn.entries), 1e-4).unwrap();
    println!("total fro err {:.3e}", (&completed - &dtn.entries).norm());
    for b in &report.per_block {
        if b.block.is_diagonal() { continue; }
        let d = b.distance.unwrap();
        let blk = b.block.extract(&dtn.entries);
        let gap = {
            let fwd = (b.block.col_start + partition.n() - b.block.row_start) % partition.n();
            fwd.min(partition.n() - fwd)
        };
        if d > 1e-4 || !b.info.converged {
            println!("FAIL block lvl{} ({:3},{:3}) side {:3} gapidx {:3}: dist {:.2e} iters {} conv {} rank {} fro {:.2e} erank {}",
                b.block.level, b.block.row_start, b.block.col_start, b.block.row_len, gap,
                d, b.info.iterations, b.info.converged, b.info.rank, blk.norm(), epsilon_rank(&blk, 1e-6));
        }
    }
}
