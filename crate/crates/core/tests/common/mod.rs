#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use calign::synthetic::MixtureConfig;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_calign"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("failed to spawn calign")
}

pub fn schema_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/calibration_report.schema.json")
}

/// Validation errors of `instance` against the shipped report schema.
pub fn schema_errors(instance: &serde_json::Value) -> Vec<String> {
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(schema_path()).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    validator
        .iter_errors(instance)
        .map(|e| e.to_string())
        .collect()
}

/// Calibrated reference, over-confident post-trained model.
pub fn overconfident_mixture(seed: u64) -> MixtureConfig {
    MixtureConfig {
        pi: 0.25,
        n: 3000,
        k: 4,
        seed,
        acc_f_agree: 0.7,
        acc_g_agree: 0.7,
        acc_f_dis: 0.3,
        acc_g_dis: 0.55,
        conf_sharpness: 2.5,
    }
}
