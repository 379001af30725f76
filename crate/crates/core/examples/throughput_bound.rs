//! Throughput of the OAUSA winner against the highest-valuation CR for
//! heterogeneous uniform valuations, plus the throughput valuation itself.

use oausa::auction::CostModel;
use oausa::experiments::{throughput_experiment, ThroughputConfig};
use oausa::valuation::{throughput_valuation, ThroughputParams, ValuationModel};

fn main() -> oausa::Result<()> {
    for snr in [0.5, 1.0, 3.0, 10.0] {
        let t = throughput_valuation(ThroughputParams::new(2.0, snr)?);
        println!("c = 2, snr = {snr:>4}: t = {t:.4}");
    }

    let config = ThroughputConfig {
        models: vec![
            ValuationModel::uniform(0.0, 2.0)?,
            ValuationModel::uniform(1.0, 1.6)?,
            ValuationModel::truncated_exponential(0.0, 2.0, 1.5)?,
        ],
        scale: 2.0,
        pi0: 0.8,
        pf: 0.1,
        pd: 0.9,
        costs: CostModel::new(0.02, 5.0)?,
        n_trials: 20_000,
        seed: 3,
    };
    let s = throughput_experiment(&config)?;
    println!(
        "regular = {}, bound holds in {}/{} allocated trials, same choice {}/{}",
        s.regular, s.holds, s.eligible, s.same_choice, s.n_trials
    );
    println!("mean gap {:.5}, max gap {:.5}", s.mean_gap, s.max_gap);
    Ok(())
}
