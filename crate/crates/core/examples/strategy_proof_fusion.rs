//! Winner sensing deviations under standard and strategy-proof fusion, and
//! the utility the moderator gives up by ignoring the winner's report.

use oausa::auction::{CostModel, Moderator, SensingMode};
use oausa::experiments::utility_gap;
use oausa::sensing::{ChannelPrior, FusionMode, SensingSetup, SensorProfile};
use oausa::valuation::ValuationModel;
use oausa::verifier::{check_sensing_truthfulness, policy_grid};

fn main() -> oausa::Result<()> {
    let sensing = SensingSetup::new(ChannelPrior::new(0.8)?, SensorProfile::new(0.1, 0.9)?);
    let costs = CostModel::new(0.02, 5.0)?;
    let n = 5;
    let models = vec![ValuationModel::uniform(0.0, 1.0)?; n];

    for mode in [FusionMode::Standard, FusionMode::StrategyProof] {
        let m = Moderator::oausa(sensing, costs, mode, n)?;
        println!("{mode:?} fusion:");
        for d in check_sensing_truthfulness(&m, &models, &policy_grid(), 20_000, 11)? {
            println!(
                "  alpha = ({:.1}, {:.1})  gain = {:+.6}  se = {:.6}{}",
                d.policy.alpha1,
                d.policy.alpha2,
                d.gain,
                d.se,
                if d.profitable { "  profitable" } else { "" }
            );
        }
    }

    for n in [3, 5, 10] {
        let models = vec![ValuationModel::uniform(0.0, 1.0)?; n];
        let g = utility_gap(sensing, costs, &models, 20_000, 11, SensingMode::Integrated)?;
        println!(
            "N = {n:>2}: U0 = {:.5}, strategy-proof U0 = {:.5}, gap = {:.3e} (bound {:.3})",
            g.u0_standard, g.u0_strategy_proof, g.gap, g.bound
        );
    }
    Ok(())
}
