//! Virtual valuations and their inverses for the built-in families.

use oausa::valuation::ValuationModel;

fn main() -> oausa::Result<()> {
    let models = [
        ("uniform[0,1]", ValuationModel::uniform(0.0, 1.0)?),
        ("uniform[0.5,0.8]", ValuationModel::uniform(0.5, 0.8)?),
        ("texp[0,1] rate 2", ValuationModel::truncated_exponential(0.0, 1.0, 2.0)?),
    ];
    for (name, m) in &models {
        println!("{name}: regular = {}", m.is_regular());
        let (a, z) = m.support();
        for i in 0..=4 {
            let t = a + (z - a) * i as f64 / 4.0;
            let w = m.virtual_valuation(t)?;
            let back = m.inverse_virtual(w).t;
            println!("  t = {t:.3}  w(t) = {w:+.4}  w^-1(w) = {back:.4}");
        }
    }
    Ok(())
}
