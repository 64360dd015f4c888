use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gasmld::channel::{generate_instance_with_id, random_slot, SystemConfig};
use gasmld::gas::AmplitudeBackend;
use gasmld::harness::{run_query_cdf, Detector, ExperimentSpec, GasVariant};
use gasmld::hubo::{build_hubo, Preparation, SearchSpace};
use gasmld::indicators::calibrate;
use gasmld::parallel::Parallelism;
use gasmld::statevector::GroverCircuit;
use gasmld::thresholds::{y_mvd, MvdParams};

const MODES: [(&str, Parallelism); 2] = [("parallel", Parallelism::Parallel), ("sequential", Parallelism::Sequential)];

fn config(n_users: usize, tau_max: usize) -> SystemConfig {
    SystemConfig { n_rx: 2, n_users, tau_max, seed: 7, ..SystemConfig::default() }
}

fn amplitude_landscape(c: &mut Criterion) {
    let cfg = config(4, 5);
    let inst = generate_instance_with_id(&cfg, 0).unwrap();
    let rx = random_slot(&inst, 0);
    let (poly, reg) = build_hubo(&inst, &rx.r, rx.t, false).unwrap();
    let space = SearchSpace::new(&reg, Preparation::WStateReduced).unwrap();
    let mut g = c.benchmark_group("amplitude_landscape");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| AmplitudeBackend::new(&poly, &space, mode).unwrap())
        });
    }
    g.finish();
}

fn grover_iterate(c: &mut Criterion) {
    let cfg = config(4, 1);
    let inst = generate_instance_with_id(&cfg, 0).unwrap();
    let rx = random_slot(&inst, 0);
    let (poly, reg) = build_hubo(&inst, &rx.r, rx.t, false).unwrap();
    let y = y_mvd(&MvdParams::from_config(&cfg, 1e-3)).unwrap();
    let mut g = c.benchmark_group("grover_iterate");
    g.sample_size(20);
    for (name, mode) in MODES {
        let circuit = GroverCircuit::new(&reg, &poly, Preparation::WStateReduced, y, 10, mode).unwrap();
        let mut sv = circuit.initial_state().clone();
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| circuit.iterate(&mut sv)));
    }
    g.finish();
}

fn query_trials(c: &mut Criterion) {
    let variant = GasVariant {
        name: "w_rand".into(),
        threshold: gasmld::gas::ThresholdPolicy::Random,
        lmin: gasmld::gas::LminPolicy::Zero,
        restart: false,
        ..GasVariant::default()
    };
    let spec = ExperimentSpec {
        system: config(4, 2),
        trials: 32,
        detectors: vec![Detector::Gas(variant)],
        gas: gasmld::harness::GasSettings {
            backend: Some(gasmld::gas::BackendKind::AmplitudeLevel),
            ..Default::default()
        },
        ..ExperimentSpec::default()
    };
    let mut g = c.benchmark_group("query_cdf_32_trials");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_query_cdf(&spec, mode).unwrap()));
    }
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let cfg = config(4, 1);
    let mut g = c.benchmark_group("calibrate_200");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| calibrate(&cfg, 200, 1e-3, mode).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, amplitude_landscape, grover_iterate, query_trials, calibration);
criterion_main!(benches);
