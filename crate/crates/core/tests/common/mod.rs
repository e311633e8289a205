//! Fixtures shared by the golden and acceptance tests.
#![allow(dead_code)]

use std::path::PathBuf;

use cdlab::attacks::AttackConfig;
use cdlab::harness::{AccuracyCell, CellKey, Metadata, Rate, Report};
use cdlab::ratecontrol::Codec;

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

pub fn matches_golden(name: &str, actual: &[u8]) -> bool {
    std::fs::read(golden_path(name)).is_ok_and(|g| g == actual)
}

const ATTACKS: [(bool, f64); 4] = [(true, 20.0), (true, 10.0), (true, 5.0), (false, 15.0)];

const PSNR_TABLE: [(Codec, f64, [f64; 4]); 8] = [
    (Codec::Dct, 23.0, [0.361, 0.415, 0.379, 0.393]),
    (Codec::Dct, 25.0, [0.317, 0.457, 0.499, 0.452]),
    (Codec::Dct, 28.0, [0.283, 0.319, 0.502, 0.229]),
    (Codec::Dct, 31.0, [0.283, 0.260, 0.369, 0.031]),
    (Codec::Wavelet, 23.0, [0.339, 0.473, 0.513, 0.461]),
    (Codec::Wavelet, 25.0, [0.337, 0.436, 0.577, 0.429]),
    (Codec::Wavelet, 28.0, [0.283, 0.346, 0.490, 0.164]),
    (Codec::Wavelet, 31.0, [0.281, 0.265, 0.378, 0.045]),
];

const MAX_TABLE: [(Codec, [f64; 4]); 2] = [
    (Codec::Wavelet, [0.428, 0.523, 0.634, 0.511]),
    (Codec::Dct, [0.378, 0.400, 0.475, 0.229]),
];

const UNCOMPRESSED: [f64; 4] = [0.266, 0.244, 0.221, 0.016];

fn attack(i: usize) -> AttackConfig {
    let (fgsm, eps) = ATTACKS[i];
    if fgsm {
        AttackConfig::fgsm(eps)
    } else {
        AttackConfig::bim(eps)
    }
}

fn cell(attack: AttackConfig, codec: Option<Codec>, rate: Rate, accuracy: f64) -> AccuracyCell {
    AccuracyCell {
        key: CellKey {
            attack,
            codec,
            rate,
        },
        accuracy: Some(accuracy),
        correct: (accuracy * 1000.0).round() as usize,
        count: 1000,
        excluded: 0,
        mean_psnr: None,
        mean_bytes: None,
        exact_hit_rate: None,
    }
}

fn reference(summary: Vec<AccuracyCell>) -> Report {
    Report {
        metadata: Metadata {
            tool_version: "reference".into(),
            dataset_hash: String::new(),
            image_count: 1000,
            seeds: vec![],
            clean_reference: false,
        },
        runs: vec![],
        summary,
    }
}

pub fn psnr_table_report() -> Report {
    let mut cells = Vec::new();
    for (codec, db, row) in PSNR_TABLE {
        for (i, v) in row.iter().enumerate() {
            cells.push(cell(attack(i), Some(codec), Rate::Target(db), *v));
        }
    }
    for (i, v) in UNCOMPRESSED.iter().enumerate() {
        cells.push(cell(attack(i), None, Rate::None, *v));
    }
    reference(cells)
}

pub fn max_table_report() -> Report {
    let mut cells = Vec::new();
    for (codec, row) in MAX_TABLE {
        for (i, v) in row.iter().enumerate() {
            cells.push(cell(attack(i), Some(codec), Rate::Max, *v));
        }
    }
    for (i, v) in UNCOMPRESSED.iter().enumerate() {
        cells.push(cell(attack(i), None, Rate::None, *v));
    }
    reference(cells)
}
