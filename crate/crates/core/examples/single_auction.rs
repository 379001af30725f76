//! One OAUSA round with three CRs, once with an idle inference and once
//! with a busy one.

use oausa::auction::{run_oausa, BidProfile, CostModel};
use oausa::sensing::{ChannelPrior, FusionMode, SensingSetup, SensorProfile};
use oausa::valuation::ValuationModel;

fn main() -> oausa::Result<()> {
    let sensing = SensingSetup::new(ChannelPrior::new(0.8)?, SensorProfile::new(0.1, 0.9)?);
    let costs = CostModel::new(0.02, 5.0)?;
    let models = vec![ValuationModel::uniform(0.0, 1.0)?; 3];
    let valuations = vec![0.9, 0.4, 0.7];

    for decisions in [vec![false, false, true], vec![true, true, true]] {
        let bids = BidProfile::new(valuations.clone(), decisions.clone(), models.clone())?;
        let out = run_oausa(&bids, sensing, costs, FusionMode::Standard)?;
        println!(
            "decisions {:?}: busy = {}, k = {}, reserve w = {:.4}, winners = {:?}",
            decisions, out.busy, out.stats.k, out.reserve_w, out.winners
        );
        for (i, (psi, b)) in out.psi.iter().zip(&out.payments).enumerate() {
            println!("  CR {i}  t = {:.2}  psi = {psi}  b = {b:.4}", valuations[i]);
        }
    }
    Ok(())
}
