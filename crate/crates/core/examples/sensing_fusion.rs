//! Optimal k-out-of-N threshold and the resulting global operating point
//! for a few network sizes.

use oausa::sensing::{fuse, global_roc, optimal_k, ChannelPrior, FusionStats, SensorProfile};

fn main() -> oausa::Result<()> {
    let prior = ChannelPrior::new(0.8)?;
    let sensor = SensorProfile::new(0.1, 0.9)?;
    println!("{:>3} {:>3} {:>12} {:>12} {:>12} {:>12}", "N", "k", "Qf", "Qd", "q0", "q1");
    for n in [1, 2, 5, 10, 20] {
        let k = optimal_k(prior, sensor, n)?;
        let s = FusionStats::new(prior, sensor, k, n)?;
        println!("{n:>3} {k:>3} {:>12.4e} {:>12.6} {:>12.6} {:>12.4e}", s.qf, s.qd, s.q0, s.q1);
    }

    let (qf, qd) = global_roc(5, 10, sensor)?;
    println!("ROC at k = 5 of 10: Qf = {qf:.4e}, Qd = {qd:.6}");
    let reports = [true, false, true, true, false, false, true, false, true, false];
    println!("five of ten reports busy -> fused busy: {}", fuse(&reports, 5)?);
    Ok(())
}
