//! Where OAUSA's expected utility stays positive over (c_p, c_coll).

use oausa::experiments::{feasibility_map, FeasibilityConfig, SweepRange};

fn main() -> oausa::Result<()> {
    let config = FeasibilityConfig {
        c_p: SweepRange::new(0.0, 0.1, 6),
        c_coll: SweepRange::new(0.0, 10_000.0, 5),
        ..FeasibilityConfig::default()
    };
    let map = feasibility_map(&config)?;
    println!("N = {}, k = {}, E[w_max] = {:.6}", map.n_crs, map.stats.k, map.expected_wmax);
    for cell in &map.cells {
        println!(
            "c_p = {:.3}  c_coll = {:>7.0}  T = {:+.5}  {}",
            cell.c_p,
            cell.c_coll,
            cell.t_term,
            if cell.feasible { "feasible" } else { "-" }
        );
    }
    for c_coll in [0.0, 5000.0, 10_000.0] {
        println!("boundary c_p at c_coll = {c_coll}: {:.5}", map.boundary_cp(c_coll));
    }
    Ok(())
}
