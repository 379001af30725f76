//! Statistical IC and IR audit of OAUSA against a first-price control.

use oausa::auction::{CostModel, Mechanism, Moderator};
use oausa::sensing::{ChannelPrior, FusionMode, SensingSetup, SensorProfile};
use oausa::valuation::ValuationModel;
use oausa::verifier::{check_ic, check_ir};

fn main() -> oausa::Result<()> {
    let sensing = SensingSetup::new(ChannelPrior::new(0.8)?, SensorProfile::new(0.1, 0.9)?);
    let costs = CostModel::new(0.02, 5.0)?;
    let models = vec![ValuationModel::uniform(0.0, 1.0)?; 3];

    for mechanism in [Mechanism::default(), Mechanism::FirstPrice] {
        let m = Moderator::new(sensing, costs, mechanism, FusionMode::Standard, 3)?;
        let ic = check_ic(&m, &models, 6, 8, 5000, 3)?;
        let ir = check_ir(&m, &models, 6, 5000, 3)?;
        let worst = ic
            .iter()
            .max_by(|a, b| {
                let ga = a.utility_best_misreport - a.utility_truth;
                let gb = b.utility_best_misreport - b.utility_truth;
                ga.total_cmp(&gb)
            })
            .expect("non-empty grid");
        println!(
            "{mechanism}: IC violations {}/{}, IR violations {}/{}",
            ic.iter().filter(|r| r.violated).count(),
            ic.len(),
            ir.iter().filter(|r| r.violated).count(),
            ir.len()
        );
        println!(
            "  largest gain: CR {} at t = {:.3} reporting {:.3}: {:+.5} (se {:.5})",
            worst.cr_index,
            worst.true_value,
            worst.best_misreport,
            worst.utility_best_misreport - worst.utility_truth,
            worst.standard_error
        );
    }
    Ok(())
}
