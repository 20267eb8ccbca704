//! Reliability diagram, binned calibration errors and selective accuracy
//! for a hand-written set of predictions.
//!
//! ```text
//! cargo run --example metrics_report
//! ```

use calign::metrics::{
    aece, brier, ece, mce, partition, reliability_table, selective_accuracy, BinScheme, EvalSample,
};

fn main() -> calign::Result<()> {
    let raw = [
        (0.95, true),
        (0.92, true),
        (0.90, false),
        (0.85, true),
        (0.80, false),
        (0.72, true),
        (0.65, false),
        (0.60, true),
        (0.55, false),
        (0.40, false),
        (0.35, true),
        (1.00, true),
    ];
    let samples: Vec<EvalSample> = raw
        .iter()
        .map(|&(confidence, correct)| EvalSample {
            prediction: 0,
            confidence,
            correct,
        })
        .collect();

    for scheme in [BinScheme::EqualWidth, BinScheme::EqualMass] {
        let bins = partition(&samples, scheme, 5)?;
        println!("{scheme:?} bins");
        println!("  bin  range          n   conf    acc");
        for row in reliability_table(&samples, &bins) {
            let fmt = |v: Option<f64>| v.map_or("   -  ".to_string(), |x| format!("{x:.3}"));
            println!(
                "  {:>3}  [{:.2}, {:.2}]  {:>3}  {}  {}",
                row.bin,
                row.lower,
                row.upper,
                row.count,
                fmt(row.confidence),
                fmt(row.accuracy)
            );
        }
    }

    let width = partition(&samples, BinScheme::EqualWidth, 5)?;
    println!(
        "ECE {:.4}  MCE {:.4}  AECE {:.4}  Brier {:.4}",
        ece(&samples, &width),
        mce(&samples, &width),
        aece(&samples, 5)?,
        brier(&samples)
    );

    println!("threshold  coverage  accuracy");
    for p in selective_accuracy(&samples, &[0.5, 0.7, 0.9]) {
        println!(
            "     {:.2}     {:.3}     {}",
            p.threshold,
            p.coverage,
            p.accuracy.map_or("-".into(), |a| format!("{a:.3}"))
        );
    }
    Ok(())
}
