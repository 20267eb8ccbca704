//! Monte Carlo check that perfectly aligning to the reference model leaves a
//! calibration error equal to the disagreement rate times the accuracy gap.
//!
//! ```text
//! cargo run --release --example aligned_ece
//! ```

use calign::synthetic::{verify_aligned_ece, MixtureConfig};

fn main() -> calign::Result<()> {
    println!("   pi   gap   measured  predicted  |diff|   tol");
    for pi in [0.1, 0.3, 0.6, 1.0] {
        for (f_dis, g_dis) in [(0.4, 0.4), (0.35, 0.55), (0.3, 0.7)] {
            let cfg = MixtureConfig {
                pi,
                n: 40_000,
                k: 4,
                seed: 1,
                acc_f_agree: 0.7,
                acc_g_agree: 0.7,
                acc_f_dis: f_dis,
                acc_g_dis: g_dis,
                conf_sharpness: 1.0,
            };
            let r = verify_aligned_ece(&cfg)?;
            println!(
                "{pi:>5.2} {:>5.2}   {:.5}    {:.5}  {:.5}  {:.4} {}",
                g_dis - f_dis,
                r.measured,
                r.predicted,
                r.gap,
                r.tolerance,
                if r.passed { "ok" } else { "FAIL" }
            );
        }
    }
    Ok(())
}
