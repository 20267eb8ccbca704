//! Naive temperature fits on the agreement subset, the disagreement subset
//! and the full set. Disagreement records push the temperature up, so the
//! full-set fit lands above the agreement-only one.
//!
//! ```text
//! cargo run --release --example temperature_dynamics
//! ```

use calign::align::OptimizerConfig;
use calign::synthetic::{generate_mixture, temperature_trace, MixtureConfig, Subset};

fn main() -> calign::Result<()> {
    let cfg = MixtureConfig {
        pi: 0.3,
        n: 2000,
        k: 4,
        seed: 3,
        acc_f_agree: 0.75,
        acc_g_agree: 0.75,
        acc_f_dis: 0.35,
        acc_g_dis: 0.5,
        conf_sharpness: 1.5,
    };
    let ds = generate_mixture(&cfg)?;
    let opt = OptimizerConfig {
        epochs: 2000,
        ..Default::default()
    };
    let traces = temperature_trace(
        &ds,
        &[Subset::Agreement, Subset::Disagreement, Subset::All],
        &opt,
    )?;

    println!("epoch   agreement  disagreement        all");
    let series: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            t.trace
                .as_ref()
                .map(|t| t.temperatures())
                .unwrap_or_default()
        })
        .collect();
    for epoch in [0, 10, 50, 100, 500, 1000, 1999] {
        let cell = |s: &Vec<f64>| s.get(epoch).map_or("-".to_string(), |t| format!("{t:.4}"));
        println!(
            "{epoch:>5} {:>11} {:>13} {:>10}",
            cell(&series[0]),
            cell(&series[1]),
            cell(&series[2])
        );
    }
    for t in &traces {
        if let Some(w) = &t.warning {
            println!("{:?}: {w}", t.subset);
        }
    }
    Ok(())
}
