use super::*;
use crate::basis::pauli_basis;
use crate::linalg::{kron, max_abs, r, sigma_x, sigma_z};
use crate::model::{custom_system, nv_system, NvParams};
use crate::pulse::{derive_seed, sample_pulse, sample_pulse_set, PulseSamplingSpec};
use crate::state::{fidelity, random_mixed_state, random_pure_state, to_bloch};
use rand::Rng;

fn nv() -> ControlledSystem {
    nv_system(&NvParams::experimental()).unwrap()
}

fn design(seed: u64, duration: f64, times: Vec<f64>) -> RecordDesign {
    let pulses = sample_pulse_set(&PulseSamplingSpec::experimental(seed), duration, 15).unwrap();
    RecordDesign::new(pulses, times, PropagationSpec::default()).unwrap()
}

/// Overlap Tr{ρ̂ ρ}; equals the fidelity when ρ is pure.
fn overlap(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    trace_product(a.matrix(), b.matrix()).re
}

#[test]
fn identity_evolution_gives_rank_one_matrix() {
    let basis = pauli_basis(2).unwrap();
    let m = build_matrix(&nv(), &design(1, 0.7e-6, vec![0.0]), &basis, 0).unwrap();
    let zi = basis.index_of("zI").unwrap();
    for n in 0..15 {
        for col in 0..15 {
            let expect = if col == zi { 2.0 } else { 0.0 };
            assert!((m.entries()[(n, col)] - expect).abs() < 1e-12);
        }
    }
    let s = m.singular_values();
    assert!(s[0] > 1.0 && s[1] < 1e-12);
}

#[test]
fn design_rejects_bad_times_and_row_counts() {
    let pulses = sample_pulse_set(&PulseSamplingSpec::experimental(0), 0.5e-6, 15).unwrap();
    let spec = PropagationSpec::default();
    assert!(RecordDesign::new(pulses.clone(), vec![], spec).is_err());
    assert!(RecordDesign::new(pulses.clone(), vec![0.2e-6, 0.1e-6], spec).is_err());
    assert!(RecordDesign::new(pulses.clone(), vec![0.6e-6], spec).is_err());
    let short = RecordDesign::new(pulses[..14].to_vec(), vec![0.5e-6], spec).unwrap();
    let basis = pauli_basis(2).unwrap();
    assert!(build_matrix(&nv(), &short, &basis, 0).is_err());
    let ok = RecordDesign::new(pulses, vec![0.5e-6], spec).unwrap();
    assert!(build_matrix(&nv(), &ok, &basis, 1).is_err());
}

#[test]
fn noiseless_record_is_matrix_times_bloch() {
    let basis = pauli_basis(2).unwrap();
    let mut rng = rng_from_seed(5);
    let rho = random_mixed_state(4, &mut rng);
    let rec = simulate_record(&nv(), &design(2, 0.4e-6, vec![0.4e-6]), &rho, &basis, 0, &NoiseSpec::None).unwrap();
    let bloch = to_bloch(&rho, &basis).unwrap();
    let pred = rec.matrix.apply(bloch.components());
    for (p, y) in pred.iter().zip(&rec.y) {
        assert!((p - y).abs() < 1e-10);
    }
    let mixed = DensityMatrix::maximally_mixed(4);
    let zero = simulate_record(&nv(), &design(2, 0.4e-6, vec![0.4e-6]), &mixed, &basis, 0, &NoiseSpec::None).unwrap();
    assert!(zero.y.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn build_matrices_matches_single_builds() {
    let basis = pauli_basis(2).unwrap();
    let d = design(3, 0.3e-6, vec![0.1e-6, 0.25e-6, 0.3e-6]);
    let all = build_matrices(&nv(), &d, &basis).unwrap();
    for (j, m) in all.iter().enumerate() {
        let single = build_matrix(&nv(), &d, &basis, j).unwrap();
        assert_eq!(m.sample_index(), j);
        assert!((m.entries() - single.entries()).abs().max() < 1e-12);
    }
}

#[test]
fn linear_inversion_round_trip() {
    let basis = pauli_basis(2).unwrap();
    let mut rng = rng_from_seed(8);
    let rho = random_pure_state(4, &mut rng);
    let d = design(4, 0.7e-6, vec![0.5e-6, 0.6e-6, 0.7e-6]);
    let recs = simulate_records(&nv(), &d, &rho, &basis, &NoiseSpec::None).unwrap();
    let single = reconstruct_linear(&recs[2..], &basis).unwrap();
    assert!(overlap(&single.rho, &rho) >= 1.0 - 1e-8);
    let stacked = reconstruct_linear(&recs, &basis).unwrap();
    assert!(max_abs(&(stacked.rho.matrix() - single.rho.matrix())) < 1e-8);
    let est = linear_estimate(&recs[..1], &basis).unwrap();
    let truth = to_bloch(&rho, &basis).unwrap();
    assert!(est.singular_values.last().unwrap() > &1e-4);
    for (a, b) in est.bloch.components().iter().zip(truth.components()) {
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn decoupled_system_is_informationally_incomplete() {
    let basis = pauli_basis(2).unwrap();
    let zi = kron(&sigma_z(), &crate::linalg::identity(2));
    let xi = kron(&sigma_x(), &crate::linalg::identity(2));
    let sys = custom_system(zi.clone() * r(2e7), xi * r(3e7), zi).unwrap();
    let d = design(6, 0.7e-6, vec![0.7e-6]);
    let recs = simulate_records(&sys, &d, &DensityMatrix::maximally_mixed(4), &basis, &NoiseSpec::None).unwrap();
    match reconstruct_linear(&recs, &basis) {
        Err(Error::InformationallyIncomplete { null_dim, .. }) => assert_eq!(null_dim, 12),
        other => panic!("expected incomplete, got {other:?}"),
    }
}

#[test]
fn linear_error_bounded_by_inverse_norm() {
    let basis = pauli_basis(2).unwrap();
    let mut rng = rng_from_seed(12);
    for seed in 0..10 {
        let rho = random_mixed_state(4, &mut rng);
        let d = design(100 + seed, 0.7e-6, vec![0.7e-6]);
        let clean = simulate_record(&nv(), &d, &rho, &basis, 0, &NoiseSpec::None).unwrap();
        let noisy = simulate_record(&nv(), &d, &rho, &basis, 0, &NoiseSpec::Gaussian { sigma: 0.02, seed }).unwrap();
        let eps: f64 = noisy.y.iter().zip(&clean.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let est = linear_estimate(&[noisy.clone()], &basis).unwrap();
        let truth = to_bloch(&rho, &basis).unwrap();
        let err: f64 = est.bloch.components().iter().zip(truth.components()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let inv = inverse_norm(&noisy.matrix).unwrap();
        assert!(err <= inv * eps * (1.0 + 1e-9), "{err} > {inv} * {eps}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let basis = pauli_basis(2).unwrap();
    let mut rng = rng_from_seed(21);
    let rho = random_mixed_state(4, &mut rng);
    let d = design(7, 0.7e-6, vec![0.6e-6, 0.7e-6]);
    let recs = simulate_records(&nv(), &d, &rho, &basis, &NoiseSpec::Gaussian { sigma: 0.05, seed: 3 }).unwrap();
    for _ in 0..10 {
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = objective_and_gradient(&recs, &basis, &x).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..16)
            .map(|k| {
                let mut p = x.clone();
                let mut m = x.clone();
                p[k] += h;
                m[k] -= h;
                (objective_and_gradient(&recs, &basis, &p).unwrap().0 - objective_and_gradient(&recs, &basis, &m).unwrap().0) / (2.0 * h)
            })
            .collect();
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff <= 1e-5 * scale, "{diff} vs {scale}");
    }
}

#[test]
fn factor_parameters_round_trip() {
    let mut rng = rng_from_seed(30);
    let rho = random_mixed_state(4, &mut rng);
    let p = params_from_state(rho.matrix()).unwrap();
    assert_eq!(p.len(), 16);
    let back = state_from_params(&p, 4).unwrap();
    assert!(max_abs(&(back - rho.matrix())) < 1e-12);
    assert!(state_from_params(&[0.0; 16], 4).is_err());
}

#[test]
fn constrained_recovers_pure_state_noiseless() {
    let basis = pauli_basis(2).unwrap();
    let mut rng = rng_from_seed(40);
    let rho = random_pure_state(4, &mut rng);
    let d = design(9, 0.7e-6, crate::propagator::uniform_times(0.52e-6, 0.7e-6, 20e-9).unwrap());
    let recs = simulate_records(&nv(), &d, &rho, &basis, &NoiseSpec::None).unwrap();
    let res = reconstruct_constrained(&recs, &basis, &SolverOptions::default()).unwrap();
    assert_eq!(res.method, ReconstructionMethod::FactorParametrized);
    assert!(overlap(&res.rho, &rho) >= 0.999);
    assert!((res.rho.matrix().trace().re - 1.0).abs() < 1e-12);
    assert!(crate::linalg::eigvalsh(res.rho.matrix())[0] >= -1e-12);
}

#[test]
fn constrained_zero_record_gives_maximally_mixed() {
    let basis = pauli_basis(2).unwrap();
    let m = build_matrix(&nv(), &design(10, 0.7e-6, vec![0.7e-6]), &basis, 0).unwrap();
    let rec = MeasurementRecord::new(vec![0.0; 15], m, NoiseSpec::None).unwrap();
    let res = reconstruct_constrained(&[rec], &basis, &SolverOptions::default()).unwrap();
    let mixed = DensityMatrix::maximally_mixed(4);
    assert!(max_abs(&(res.rho.matrix() - mixed.matrix())) < 1e-6);
}

#[test]
fn constrained_falls_back_when_linear_fails() {
    // A single row cannot be inverted; the solver still returns a valid state.
    let basis = pauli_basis(2).unwrap();
    let full = build_matrix(&nv(), &design(11, 0.7e-6, vec![0.7e-6]), &basis, 0).unwrap();
    let row = MeasurementMatrix::new(full.entries().rows(0, 1).into_owned(), 0).unwrap();
    let rec = MeasurementRecord::new(vec![0.3], row, NoiseSpec::None).unwrap();
    let res = reconstruct_constrained(&[rec], &basis, &SolverOptions::default()).unwrap();
    assert!(res.residual < 1e-12);
    assert!((res.rho.matrix().trace().re - 1.0).abs() < 1e-12);
}

#[test]
fn shot_noise_variance_matches_binomial() {
    let basis = pauli_basis(2).unwrap();
    let mut rng = rng_from_seed(50);
    let rho = random_pure_state(4, &mut rng);
    let d = design(12, 0.3e-6, vec![0.3e-6]);
    let clean = simulate_record(&nv(), &d, &rho, &basis, 0, &NoiseSpec::None).unwrap();
    let shots = 10_000;
    let samples: Vec<Vec<f64>> = (0..100)
        .map(|s| simulate_record(&nv(), &d, &rho, &basis, 0, &NoiseSpec::Shots { shots, seed: s }).unwrap().y)
        .collect();
    for n in 0..15 {
        let mean = samples.iter().map(|y| y[n]).sum::<f64>() / 100.0;
        let var = samples.iter().map(|y| (y[n] - mean).powi(2)).sum::<f64>() / 99.0;
        let oracle = ((1.0 - clean.y[n].powi(2)) / shots as f64).sqrt();
        assert!((var.sqrt() - oracle).abs() <= 0.2 * oracle, "row {n}: {} vs {oracle}", var.sqrt());
    }
}

#[test]
fn shot_noise_requires_unit_spectrum() {
    let basis = pauli_basis(2).unwrap();
    let zz = kron(&sigma_z(), &sigma_z());
    let obs = kron(&sigma_z(), &crate::linalg::identity(2)) + zz.clone();
    let sys = custom_system(nv().drift().clone(), nv().control().clone(), obs).unwrap();
    let d = design(13, 0.3e-6, vec![0.3e-6]);
    let err = simulate_record(&sys, &d, &DensityMatrix::maximally_mixed(4), &basis, 0, &NoiseSpec::Shots { shots: 10, seed: 0 });
    assert!(matches!(err, Err(Error::ShotNoiseUnsupported)));
}

#[test]
fn single_pulse_layout_reconstructs() {
    let basis = pauli_basis(2).unwrap();
    let pulse = sample_pulse(&PulseSamplingSpec::experimental(14), 1.5e-6).unwrap();
    let times: Vec<f64> = (1..=15).map(|n| n as f64 * 0.1e-6).collect();
    let d = RecordDesign::single_pulse(pulse, times, PropagationSpec::default()).unwrap();
    assert_eq!((d.num_rows(), d.num_records()), (15, 1));
    let mut rng = rng_from_seed(60);
    let rho = random_mixed_state(4, &mut rng);
    let recs = simulate_records(&nv(), &d, &rho, &basis, &NoiseSpec::None).unwrap();
    let res = reconstruct_linear(&recs, &basis).unwrap();
    assert!(fidelity(&res.rho, &rho).unwrap() > 1.0 - 1e-8);
}

#[test]
fn record_json_and_csv() {
    let basis = pauli_basis(2).unwrap();
    let d = design(15, 0.2e-6, vec![0.2e-6]);
    let rec = simulate_record(&nv(), &d, &DensityMatrix::basis_state(4, 0).unwrap(), &basis, 0, &NoiseSpec::Gaussian { sigma: 0.01, seed: 4 }).unwrap();
    let json = serde_json::to_string(&rec.to_json()).unwrap();
    let back = MeasurementRecord::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back, rec);
    let csv = rec.to_csv(&["seed=15".into()]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# seed=15");
    assert!(lines[2].starts_with("row,y,m_1,"));
    assert_eq!(lines.len(), 3 + 15);
}

#[test]
fn gaussian_noise_is_seeded() {
    let basis = pauli_basis(2).unwrap();
    let d = design(16, 0.2e-6, vec![0.1e-6, 0.2e-6]);
    let rho = DensityMatrix::basis_state(4, 0).unwrap();
    let noise = NoiseSpec::Gaussian { sigma: 0.1, seed: 9 };
    let a = simulate_records(&nv(), &d, &rho, &basis, &noise).unwrap();
    let b = simulate_records(&nv(), &d, &rho, &basis, &noise).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].y, a[1].y);
    assert!(NoiseSpec::Gaussian { sigma: -1.0, seed: 0 }.validate().is_err());
}

#[test]
fn conditioning_tiny_duration_is_singular() {
    let basis = pauli_basis(2).unwrap();
    let rows = conditioning_study(&nv(), &PulseSamplingSpec::experimental(1), &[1e-15], 4, &basis, &PropagationSpec::default()).unwrap();
    assert_eq!(rows[0].singular_count, 4);
    assert_eq!(rows[0].finite_count, 0);
}

#[test]
fn conditioning_is_deterministic() {
    let basis = pauli_basis(2).unwrap();
    let spec = PulseSamplingSpec::experimental(2);
    let a = conditioning_study(&nv(), &spec, &[0.3e-6], 6, &basis, &PropagationSpec::default()).unwrap();
    let b = conditioning_study(&nv(), &spec, &[0.3e-6], 6, &basis, &PropagationSpec::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].finite_count, 6);
    assert!(a[0].mean_inv_norm.is_finite() && a[0].mean_log_inv_norm <= a[0].mean_inv_norm.ln() + 1e-12);
    let csv = conditioning_csv(&a, &[]);
    assert!(csv.starts_with("duration_s,mean_log_inv_norm,std,singular_count\n"));
}

#[test]
fn protocol_reconstructs_ground_state() {
    let basis = pauli_basis(2).unwrap();
    let rho = DensityMatrix::basis_state(4, 0).unwrap();
    let proto = ProtocolSpec::default();
    let times = proto.sample_times().unwrap();
    assert_eq!(times.len(), 10);
    assert!((times[0] - 0.52e-6).abs() < 1e-15 && (times[9] - 0.7e-6).abs() < 1e-18);
    let out = experiment_protocol(
        &nv(),
        &rho,
        &basis,
        &PulseSamplingSpec::experimental(17),
        &proto,
        &NoiseSpec::None,
        PropagationSpec::default(),
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(out.records.len(), 10);
    assert!(overlap(&out.result.rho, &rho) >= 0.999);
}

#[test]
fn heisenberg_components_are_real() {
    let basis = pauli_basis(2).unwrap();
    let sys = nv();
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let pulse = sample_pulse(&PulseSamplingSpec::experimental(1000 + seed), 0.7e-6).unwrap();
        let u = crate::propagator::propagate(&sys, &pulse, 0.7e-6, &PropagationSpec::default()).unwrap();
        let (_, imag) = basis.components(&crate::propagator::heisenberg(sys.observable(), &u)).unwrap();
        worst = worst.max(imag);
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn protocol_with_shot_noise() {
    let basis = pauli_basis(2).unwrap();
    let rho = DensityMatrix::basis_state(4, 0).unwrap();
    let mut fids: Vec<f64> = (0..20u64)
        .map(|trial| {
            let out = experiment_protocol(
                &nv(),
                &rho,
                &basis,
                &PulseSamplingSpec::experimental(derive_seed(500, trial)),
                &ProtocolSpec::default(),
                &NoiseSpec::Shots { shots: 100_000, seed: derive_seed(600, trial) },
                PropagationSpec::default(),
                &SolverOptions::default(),
            )
            .unwrap();
            fidelity(&out.result.rho, &rho).unwrap()
        })
        .collect();
    fids.sort_by(f64::total_cmp);
    let median = (fids[9] + fids[10]) / 2.0;
    assert!(median >= 0.98, "median {median}");
}

#[test]
fn conditioning_mean_is_stable_under_more_realizations() {
    let basis = pauli_basis(2).unwrap();
    let spec = PulseSamplingSpec::experimental(77);
    let step = PropagationSpec::default();
    let small = &conditioning_study(&nv(), &spec, &[0.5e-6], 40, &basis, &step).unwrap()[0];
    let large = &conditioning_study(&nv(), &spec.with_seed(78), &[0.5e-6], 80, &basis, &step).unwrap()[0];
    let se = (small.std_error_log().powi(2) + large.std_error_log().powi(2)).sqrt();
    assert!((small.mean_log_inv_norm - large.mean_log_inv_norm).abs() < 2.0 * se, "{small:?} {large:?}");
}
