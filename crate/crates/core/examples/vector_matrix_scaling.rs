//! Compare scalar, vector and matrix scaling fitted with each objective on
//! the same validation split.
//!
//! ```text
//! cargo run --release --example vector_matrix_scaling
//! ```

use calign::align::{optimize, Objective, OptimizerConfig, Shape};
use calign::metrics::{default_thresholds, evaluate, DEFAULT_BINS};
use calign::prob::Split;
use calign::synthetic::{generate_split, MixtureConfig};

fn main() -> calign::Result<()> {
    let cfg = MixtureConfig {
        pi: 0.2,
        n: 3000,
        k: 5,
        seed: 11,
        acc_f_agree: 0.8,
        acc_g_agree: 0.8,
        acc_f_dis: 0.3,
        acc_g_dis: 0.6,
        conf_sharpness: 2.0,
    };
    let val = generate_split(&cfg, Split::Validation)?;
    let test = generate_split(&cfg, Split::Test)?;
    let opt = OptimizerConfig::default();

    println!("objective   shape    params  fit loss  test ECE");
    for objective in [Objective::Daca, Objective::Naive, Objective::SupervisedNll] {
        for shape in [Shape::Scalar, Shape::Vector, Shape::Matrix] {
            let trace = optimize(&val, objective, shape, &opt)?;
            let eval = evaluate(
                &test,
                &trace.final_params,
                DEFAULT_BINS,
                &default_thresholds(),
            )?;
            println!(
                "{:<11} {:<8} {:>6}  {:.5}   {:.4}",
                objective.to_string(),
                shape.to_string(),
                shape.num_raw(val.k()),
                trace.final_loss,
                eval.metrics.ece
            );
        }
    }
    Ok(())
}
