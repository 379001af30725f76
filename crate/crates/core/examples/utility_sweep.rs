//! Moderator utility as the sensors' false-alarm rate varies, with the
//! modified VCG baseline on the same draws.

use oausa::experiments::{run_sweep, SweepConfig, SweepParam, SweepRange};

fn main() -> oausa::Result<()> {
    let config = SweepConfig {
        param: SweepParam::Pf,
        range: SweepRange::new(0.01, 0.5, 8),
        n_trials: 4000,
        seed: 7,
        ..SweepConfig::default()
    };
    let result = run_sweep(&config)?;
    println!("{:>8} {:>3} {:>10} {:>10} {:>10}", "pf", "k", "U0", "ci95", "U0 vcg");
    for row in &result.rows {
        println!(
            "{:>8.4} {:>3} {:>10.5} {:>10.5} {:>10.5}",
            row.sweep_value,
            row.k_opt().map_or("-".into(), |k| k.to_string()),
            row.u0_mean,
            row.u0_ci95,
            row.u0_vcg
        );
    }
    println!("k changes at rows {:?}", result.k_change_points());
    print!("{}", result.to_csv_string()?);
    Ok(())
}
