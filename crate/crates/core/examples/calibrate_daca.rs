//! Fit a temperature on unlabeled validation logits with the agreement-aware
//! objective, then compare test calibration before and after.
//!
//! ```text
//! cargo run --example calibrate_daca
//! ```

use calign::align::{optimize, Objective, OptimizerConfig, ScalingParams, Shape};
use calign::metrics::{default_thresholds, evaluate, DEFAULT_BINS};
use calign::prob::Split;
use calign::synthetic::{generate_split, MixtureConfig};

fn main() -> calign::Result<()> {
    // The post-trained model is 2.5x sharper than the calibrated reference.
    let cfg = MixtureConfig {
        pi: 0.25,
        n: 3000,
        k: 4,
        seed: 7,
        acc_f_agree: 0.7,
        acc_g_agree: 0.7,
        acc_f_dis: 0.3,
        acc_g_dis: 0.55,
        conf_sharpness: 2.5,
    };
    let val = generate_split(&cfg, Split::Validation)?;
    let test = generate_split(&cfg, Split::Test)?;

    let trace = optimize(
        &val,
        Objective::Daca,
        Shape::Scalar,
        &OptimizerConfig::default(),
    )?;
    println!(
        "fitted on {} agreement records ({} disagreement records filtered)",
        trace.examples_used, trace.filtered_out
    );
    println!(
        "temperature = {:.4}",
        trace.final_params.temperature().unwrap()
    );

    let thresholds = default_thresholds();
    let before = evaluate(
        &test,
        &ScalingParams::Scalar(1.0),
        DEFAULT_BINS,
        &thresholds,
    )?;
    let after = evaluate(&test, &trace.final_params, DEFAULT_BINS, &thresholds)?;
    for (name, e) in [("before", &before), ("after", &after)] {
        let m = &e.metrics;
        println!(
            "{name:>6}: acc {:.4}  ece {:.4}  mce {:.4}  aece {:.4}  brier {:.4}  nll {:.4}",
            m.accuracy, m.ece, m.mce, m.aece, m.brier, m.nll
        );
    }
    Ok(())
}
