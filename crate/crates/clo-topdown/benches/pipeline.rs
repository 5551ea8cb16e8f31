//! Benchmarks for the calibration, risk-sweep, and synthetic-matrix paths.
//!
//! The bump sweeps and matrix rows are data-parallel; run once with the
//! default `parallel` feature and once with `--no-default-features` to
//! compare the rayon and sequential builds:
//!
//! ```text
//! cargo bench -p clo-topdown
//! cargo bench -p clo-topdown --no-default-features
//! ```
//!
//! Bench ids carry the active mode so both sets of results can sit side by
//! side in the criterion report.

use std::path::Path;

use criterion::{criterion_group, criterion_main, Criterion};

use clo_topdown::deal::{load_pv_matrix, load_quotes, load_scenarios};
use clo_topdown::pricing::{calibrate_index, BespokeSpec};
use clo_topdown::risk::{loan_price_delta, tranche01, BumpConfig, RiskConstraintMode};
use clo_topdown::synth::{build_pv_matrix, SyntheticDealSpec};
use clo_topdown::SolverSettings;

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn bench_pipeline(c: &mut Criterion) {
    let scenarios = load_scenarios(fixture("scenarios.csv")).unwrap();
    let pv = load_pv_matrix(fixture("clo_idx_pv.csv"), &scenarios).unwrap();
    let quotes = load_quotes(fixture("clo_idx_quotes.csv")).unwrap();
    let bespoke_pv = load_pv_matrix(fixture("clo_bspk_pv.csv"), &scenarios).unwrap();
    let settings = SolverSettings::default();

    c.bench_function(&format!("calibrate_index/{MODE}"), |b| {
        b.iter(|| calibrate_index(&scenarios, &pv, &quotes, &settings).unwrap())
    });

    let index = calibrate_index(&scenarios, &pv, &quotes, &settings).unwrap();
    let bespoke = BespokeSpec {
        pv: bespoke_pv,
        market_loan_price: Some(87.84),
        manager_adjustment: 0.0,
        pinned_tranches: vec![("A".into(), 89.35)],
    };

    c.bench_function(&format!("loan_price_delta/{MODE}"), |b| {
        b.iter(|| loan_price_delta(&index, &bespoke, &BumpConfig::default(), &settings).unwrap())
    });

    let t01_config = BumpConfig {
        constraint_mode: RiskConstraintMode::Soft { weight: 1.0 },
        ..BumpConfig::default()
    };
    c.bench_function(&format!("tranche01/{MODE}"), |b| {
        b.iter(|| {
            tranche01(&scenarios, &pv, &quotes, &settings, &bespoke, &t01_config).unwrap()
        })
    });

    let spec = SyntheticDealSpec::load(fixture("lcdx_spec.toml")).unwrap();
    c.bench_function(&format!("synth_pv_matrix/{MODE}"), |b| {
        b.iter(|| build_pv_matrix(&spec, &scenarios, spec.periods()).unwrap())
    });

    // Fine evaluation grid: enough per-row work for the parallel split to
    // matter, unlike the frugal 60-period fixture case.
    c.bench_function(&format!("synth_pv_matrix_fine/{MODE}"), |b| {
        b.iter(|| build_pv_matrix(&spec, &scenarios, 2400).unwrap())
    });
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
