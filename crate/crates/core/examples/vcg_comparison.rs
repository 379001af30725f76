//! OAUSA against the modified VCG auction and against selling without
//! collaborative sensing.

use oausa::auction::{expected_utilities, CostModel, Mechanism, Moderator, SensingMode};
use oausa::comparison::{sensing_merit, traditional_utilities};
use oausa::sensing::{ChannelPrior, FusionMode, SensingSetup, SensorProfile};
use oausa::valuation::ValuationModel;

fn main() -> oausa::Result<()> {
    let prior = ChannelPrior::new(0.8)?;
    let sensing = SensingSetup::new(prior, SensorProfile::new(0.1, 0.9)?);
    let n = 10;
    let models = vec![ValuationModel::uniform(0.0, 1.0)?; n];

    for c_coll in [5.0, 100.0, 1000.0] {
        let costs = CostModel::new(0.02, c_coll)?;
        let oausa = Moderator::oausa(sensing, costs, FusionMode::Standard, n)?;
        let vcg = Moderator::new(sensing, costs, Mechanism::ModifiedVcg, FusionMode::Standard, n)?;
        let r = expected_utilities(&oausa, &models, 20_000, 5, SensingMode::Integrated)?;
        let v = expected_utilities(&vcg, &models, 20_000, 5, SensingMode::Integrated)?;
        let trad = traditional_utilities(&r, prior, r.stats.q1, costs, n);
        println!(
            "c_coll = {c_coll:>6}: U0 oausa = {:.5} ± {:.5}, vcg = {:.5}, no sensing = {:.5}, sensing pays: {}",
            r.u0,
            r.ci95,
            v.u0,
            trad.u0_hat,
            sensing_merit(prior, r.stats.q1, costs, n)
        );
    }
    Ok(())
}
