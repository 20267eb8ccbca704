//! Naive alignment on a record where the two models disagree: the loss keeps
//! falling as the temperature grows, and the optimizer reports divergence.
//!
//! ```text
//! cargo run --release --example divergence
//! ```

use calign::align::{
    naive_alignment_loss, optimize, Objective, OptimizerConfig, ScalingParams, Shape,
};
use calign::prob::Dataset;
use calign::synthetic::{make_divergent_record, naive_alignment_diverges};

fn main() -> calign::Result<()> {
    let rec = make_divergent_record(4, 0)?;
    println!("reference logits    {:?}", rec.plm_logits);
    println!("post-trained logits {:?}", rec.polm_logits);
    println!(
        "loss decreasing in tau everywhere: {}",
        naive_alignment_diverges(&rec)
    );

    let ds = Dataset::new(vec![rec])?;
    for tau in [0.5, 1.0, 10.0, 1e3, 1e6] {
        let loss = naive_alignment_loss(&ds, &ScalingParams::Scalar(tau))?;
        println!("  tau {tau:>9}: loss {loss:.6}");
    }

    let cfg = OptimizerConfig {
        epochs: 50_000,
        ..Default::default()
    };
    let trace = optimize(&ds, Objective::Naive, Shape::Scalar, &cfg)?;
    let taus = trace.temperatures();
    for i in [0, 10, 100, 1000, 10_000]
        .into_iter()
        .filter(|&i| i < taus.len())
    {
        println!("  epoch {i:>6}: tau {:.4e}", taus[i]);
    }
    println!(
        "diverged = {} after {} epochs (tau = {:.3e})",
        trace.diverged,
        trace.epochs_run(),
        taus.last().unwrap()
    );
    Ok(())
}
