//! Write a synthetic split in the logits JSONL format, read it back and
//! report agreement counts.
//!
//! ```text
//! cargo run --example jsonl_roundtrip -- /tmp/val.jsonl
//! ```

use calign::io::{read_logits_jsonl, write_logits_jsonl};
use calign::prob::Split;
use calign::synthetic::{generate_split, MixtureConfig};

fn main() -> calign::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "val.jsonl".into());
    let cfg = MixtureConfig {
        pi: 0.3,
        n: 500,
        k: 3,
        seed: 0,
        acc_f_agree: 0.7,
        acc_g_agree: 0.7,
        acc_f_dis: 0.35,
        acc_g_dis: 0.45,
        conf_sharpness: 1.5,
    };
    let ds = generate_split(&cfg, Split::Validation)?;
    write_logits_jsonl(&path, &ds)?;

    let back = read_logits_jsonl(&path)?;
    assert_eq!(back.records(), ds.records());
    println!(
        "{path}: {} records, k = {}, {} agree, labelled = {}",
        back.len(),
        back.k(),
        back.agreement_count(),
        back.is_labeled()
    );
    println!(
        "first record: {}",
        serde_json::to_string(&back.records()[0])?
    );
    Ok(())
}
