//! Derivative-free search over truncated Fourier pulses.
//!
//! Each component is encoded by three unconstrained reals: a softmax logit for
//! the amplitude, a logistic coordinate for the frequency and the raw phase.
//! The search is an adaptive Nelder–Mead run from several random starts.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::OperatorBasis;
use crate::error::{invalid, Error, Result};
use crate::model::ControlledSystem;
use crate::propagator::{propagate, PropagationSpec};
use crate::pulse::{derive_seed, sample_pulse_set, FourierComponent, FourierPulse, PulseSamplingSpec};
use crate::state::{concurrence, DensityMatrix};
use crate::tomography::{build_matrix, inverse_norm, RecordDesign, SINGULAR_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    MaxConcurrence,
    MinInverseNorm,
}

impl Objective {
    fn maximizes(self) -> bool {
        matches!(self, Objective::MaxConcurrence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationSpec {
    pub objective: Objective,
    /// Fourier components per pulse.
    pub k: usize,
    /// Pulse length in seconds.
    pub duration: f64,
    /// Angular frequency range in rad/s.
    pub freq_range: (f64, f64),
    pub restarts: usize,
    /// Objective evaluations per restart.
    pub max_evals: usize,
    pub seed: u64,
    pub step: PropagationSpec,
}

impl OptimizationSpec {
    pub fn new(objective: Objective, duration: f64, seed: u64) -> Self {
        OptimizationSpec {
            objective,
            k: 10,
            duration,
            freq_range: (0.0, TAU * 4e6),
            restarts: 20,
            max_evals: 2000,
            seed,
            step: PropagationSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid(format!("optimization duration must be positive, got {}", self.duration)));
        }
        if self.restarts == 0 || self.max_evals == 0 || self.k == 0 {
            return Err(invalid("restarts, max_evals and k must be at least 1"));
        }
        let (lo, hi) = self.freq_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("frequency range must be finite with lo < hi"));
        }
        self.step.validate()
    }

    fn sampling(&self, seed: u64) -> Result<PulseSamplingSpec> {
        PulseSamplingSpec::new(self.k, self.freq_range, seed)
    }
}

/// One evaluation in the merged log, restarts concatenated in index order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub eval: usize,
    pub objective: f64,
    pub best: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationOutcome {
    pub pulses: Vec<FourierPulse>,
    /// Objective value of `pulses` in its natural sign.
    pub achieved: f64,
    pub best_restart: usize,
    pub log: Vec<LogEntry>,
}

pub fn log_csv(log: &[LogEntry], header_lines: &[String]) -> String {
    let mut out = String::new();
    for line in header_lines {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("eval,objective,best\n");
    for e in log {
        let _ = writeln!(out, "{},{:.17e},{:.17e}", e.eval, e.objective, e.best);
    }
    out
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn encode(pulses: &[FourierPulse], range: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = range;
    let mut x = Vec::with_capacity(pulses.len() * pulses[0].k() * 3);
    for p in pulses {
        for c in p.components() {
            x.push(c.amplitude.max(1e-300).ln());
            let s = ((c.frequency - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
            x.push((s / (1.0 - s)).ln());
            x.push(c.phase);
        }
    }
    x
}

fn decode(x: &[f64], count: usize, k: usize, range: (f64, f64), duration: f64) -> Result<Vec<FourierPulse>> {
    let (lo, hi) = range;
    x.chunks(3 * k)
        .take(count)
        .map(|chunk| {
            let top = chunk.iter().step_by(3).copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = chunk.iter().step_by(3).map(|a| (a - top).exp()).collect();
            let total: f64 = weights.iter().sum();
            let comps = chunk
                .chunks(3)
                .zip(&weights)
                .map(|(c, w)| FourierComponent {
                    amplitude: w / total,
                    frequency: lo + (hi - lo) * sigmoid(c[1]),
                    phase: c[2].rem_euclid(TAU),
                })
                .collect();
            FourierPulse::new(comps, duration)
        })
        .collect()
}

/// Adaptive Nelder–Mead minimization of `f` from `x0`, at most `max_evals`
/// evaluations. Every evaluation is reported to `record`.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    scale: f64,
    max_evals: usize,
    record: &mut dyn FnMut(f64),
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        record(v);
        v
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        if evals >= max_evals {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += scale;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let best_of = |s: &[(Vec<f64>, f64)]| {
        s.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|(x, v)| (x.clone(), *v)).expect("non-empty simplex")
    };
    if simplex.len() < n + 1 {
        return best_of(&simplex);
    }

    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect() };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= 1e-14 * simplex[0].1.abs().max(1e-300) && size < 1e-10 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let worst = simplex[n].clone();
        let xr = point(&centroid, &worst.0, -alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= max_evals {
                simplex[n] = (xr, fr);
                break;
            }
            let xe = point(&centroid, &worst.0, -alpha * beta);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        if evals >= max_evals {
            break;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = point(&centroid, &worst.0, -alpha * gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = point(&centroid, &worst.0, gamma);
            (xc.clone(), eval(&xc, &mut evals))
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        // Shrink towards the best vertex.
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evals >= max_evals {
                break;
            }
            let x = point(&best, &vertex.0, delta);
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }
    best_of(&simplex)
}

struct RestartResult {
    x: Vec<f64>,
    value: f64,
    trace: Vec<f64>,
}

/// Runs all restarts for a minimization objective over `count` pulses.
fn optimize_pulses(
    spec: &OptimizationSpec,
    count: usize,
    objective: &(dyn Fn(&[FourierPulse]) -> Result<f64> + Sync),
) -> Result<OptimizationOutcome> {
    spec.validate()?;
    let sign = if spec.objective.maximizes() { -1.0 } else { 1.0 };
    let runs: Vec<RestartResult> = (0..spec.restarts)
        .into_par_iter()
        .map(|i| {
            let sampling = spec.sampling(derive_seed(spec.seed, i as u64))?;
            let start = sample_pulse_set(&sampling, spec.duration, count)?;
            let x0 = encode(&start, spec.freq_range);
            let f = |x: &[f64]| match decode(x, count, spec.k, spec.freq_range, spec.duration).and_then(|p| objective(&p)) {
                Ok(v) => sign * v,
                Err(e) => {
                    log::debug!("objective evaluation failed: {e}");
                    f64::INFINITY
                }
            };
            let mut trace = Vec::with_capacity(spec.max_evals);
            let (x, value) = nelder_mead(&f, &x0, 0.5, spec.max_evals, &mut |v| trace.push(v));
            Ok(RestartResult { x, value, trace })
        })
        .collect::<Result<_>>()?;

    let mut best_restart = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.value < runs[best_restart].value {
            best_restart = i;
        }
    }
    let mut log = Vec::new();
    let mut best = f64::INFINITY;
    for run in &runs {
        for &v in &run.trace {
            best = best.min(v);
            log.push(LogEntry { eval: log.len() + 1, objective: sign * v, best: sign * best });
        }
    }
    let winner = &runs[best_restart];
    if !winner.value.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(OptimizationOutcome {
        pulses: decode(&winner.x, count, spec.k, spec.freq_range, spec.duration)?,
        achieved: sign * winner.value,
        best_restart,
        log,
    })
}

/// Concurrence of `U_T ρ₀ U_T†` for a single pulse.
pub fn preparation_concurrence(
    system: &ControlledSystem,
    rho0: &DensityMatrix,
    pulse: &FourierPulse,
    step: &PropagationSpec,
) -> Result<f64> {
    let u = propagate(system, pulse, pulse.duration(), step)?;
    concurrence(&rho0.evolve(&u)?)
}

/// Single pulse maximizing the concurrence reached from `rho0`.
pub fn optimize_preparation(system: &ControlledSystem, rho0: &DensityMatrix, spec: &OptimizationSpec) -> Result<OptimizationOutcome> {
    if spec.objective != Objective::MaxConcurrence {
        return Err(invalid("optimize_preparation needs the max-concurrence objective"));
    }
    if system.dim() != 4 || rho0.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: system.dim().max(rho0.dim()) });
    }
    optimize_pulses(spec, 1, &|p| preparation_concurrence(system, rho0, &p[0], &spec.step))
}

/// `‖ℳ⁻¹‖` of a pulse set measured at its final time, capped for singular sets.
pub fn pulse_set_inverse_norm(
    system: &ControlledSystem,
    pulses: &[FourierPulse],
    basis: &OperatorBasis,
    step: &PropagationSpec,
) -> Result<f64> {
    let t = pulses.iter().map(FourierPulse::duration).fold(f64::INFINITY, f64::min);
    let design = RecordDesign::new(pulses.to_vec(), vec![t], *step)?;
    Ok(inverse_norm(&build_matrix(system, &design, basis, 0)?).unwrap_or(SINGULAR_CAP))
}

/// d²−1 pulses optimized jointly for a well-conditioned measurement matrix.
pub fn optimize_tomography_pulse(system: &ControlledSystem, spec: &OptimizationSpec, basis: &OperatorBasis) -> Result<OptimizationOutcome> {
    if spec.objective != Objective::MinInverseNorm {
        return Err(invalid("optimize_tomography_pulse needs the min-inverse-norm objective"));
    }
    optimize_pulses(spec, basis.len(), &|p| pulse_set_inverse_norm(system, p, basis, &spec.step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::pauli_basis;
    use crate::model::{nv_system, NvParams};
    use crate::pulse::sample_pulse;

    fn nv() -> ControlledSystem {
        nv_system(&NvParams::experimental()).unwrap()
    }

    fn small(objective: Objective, duration: f64, restarts: usize, max_evals: usize) -> OptimizationSpec {
        OptimizationSpec { k: 3, restarts, max_evals, ..OptimizationSpec::new(objective, duration, 11) }
    }

    #[test]
    fn encode_decode_round_trip() {
        let spec = PulseSamplingSpec::experimental(4);
        let p = sample_pulse(&spec, 1e-6).unwrap();
        let back = decode(&encode(&[p.clone()], spec.freq_range), 1, 10, spec.freq_range, 1e-6).unwrap();
        for (a, b) in p.components().iter().zip(back[0].components()) {
            assert!((a.amplitude - b.amplitude).abs() < 1e-12);
            assert!((a.frequency - b.frequency).abs() < 1e-6 * spec.freq_range.1);
            assert!((a.phase - b.phase).abs() < 1e-12);
        }
    }

    #[test]
    fn nelder_mead_minimizes_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + (x[2] - 0.5).powi(2);
        let (x, v) = nelder_mead(&f, &[0.0, 0.0, 0.0], 0.5, 2000, &mut |_| {});
        assert!(v < 1e-12, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn nelder_mead_respects_budget() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let mut count = 0;
        nelder_mead(&f, &[1.0; 5], 0.5, 37, &mut |_| count += 1);
        assert_eq!(count, 37);
    }

    #[test]
    fn preparation_value_is_reproducible() {
        let rho0 = DensityMatrix::basis_state(4, 0).unwrap();
        let spec = small(Objective::MaxConcurrence, 0.5e-6, 2, 60);
        let a = optimize_preparation(&nv(), &rho0, &spec).unwrap();
        let b = optimize_preparation(&nv(), &rho0, &spec).unwrap();
        assert_eq!(a.achieved, b.achieved);
        assert_eq!(a.pulses, b.pulses);
        let again = preparation_concurrence(&nv(), &rho0, &a.pulses[0], &spec.step).unwrap();
        assert!((again - a.achieved).abs() < 1e-10);
        assert_eq!(a.log.len(), 120);
        assert!(a.log.windows(2).all(|w| w[1].best >= w[0].best));
        assert_eq!(a.log.last().unwrap().best, a.achieved);
    }

    #[test]
    fn short_preparation_cannot_entangle() {
        let rho0 = DensityMatrix::basis_state(4, 0).unwrap();
        let out = optimize_preparation(&nv(), &rho0, &small(Objective::MaxConcurrence, 1e-9, 2, 40)).unwrap();
        assert!(out.achieved < 0.05, "{}", out.achieved);
    }

    #[test]
    fn more_evaluations_never_hurt() {
        let rho0 = DensityMatrix::basis_state(4, 0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for evals in [10, 40, 80] {
            let out = optimize_preparation(&nv(), &rho0, &small(Objective::MaxConcurrence, 0.4e-6, 2, evals)).unwrap();
            assert!(out.achieved >= prev);
            prev = out.achieved;
        }
    }

    #[test]
    fn wrong_objective_is_rejected() {
        let rho0 = DensityMatrix::basis_state(4, 0).unwrap();
        let basis = pauli_basis(2).unwrap();
        assert!(optimize_preparation(&nv(), &rho0, &small(Objective::MinInverseNorm, 1e-7, 1, 5)).is_err());
        assert!(optimize_tomography_pulse(&nv(), &small(Objective::MaxConcurrence, 1e-7, 1, 5), &basis).is_err());
        let mut bad = small(Objective::MaxConcurrence, 1e-7, 1, 5);
        bad.restarts = 0;
        assert!(optimize_preparation(&nv(), &rho0, &bad).is_err());
    }

    #[test]
    fn tomography_pulse_improves_on_its_start() {
        let basis = pauli_basis(2).unwrap();
        let spec = small(Objective::MinInverseNorm, 0.2e-6, 1, 150);
        let out = optimize_tomography_pulse(&nv(), &spec, &basis).unwrap();
        assert_eq!(out.pulses.len(), 15);
        assert!(out.achieved <= out.log[0].objective);
        let again = pulse_set_inverse_norm(&nv(), &out.pulses, &basis, &spec.step).unwrap();
        assert!((again - out.achieved).abs() <= 1e-10 * again);
    }

    #[test]
    fn optimized_set_beats_random_median() {
        let basis = pauli_basis(2).unwrap();
        let spec = OptimizationSpec { restarts: 4, max_evals: 40, ..OptimizationSpec::new(Objective::MinInverseNorm, 0.3e-6, 5) };
        let out = optimize_tomography_pulse(&nv(), &spec, &basis).unwrap();
        let mut baseline: Vec<f64> = (0..100)
            .map(|i| {
                let set = sample_pulse_set(&PulseSamplingSpec::experimental(derive_seed(900, i)), 0.3e-6, 15).unwrap();
                pulse_set_inverse_norm(&nv(), &set, &basis, &spec.step).unwrap()
            })
            .collect();
        baseline.sort_by(f64::total_cmp);
        let median = (baseline[49] + baseline[50]) / 2.0;
        assert!(out.achieved <= median, "{} > {median}", out.achieved);
    }

    #[test]
    fn tiny_tomography_duration_stays_singular() {
        let basis = pauli_basis(2).unwrap();
        let out = optimize_tomography_pulse(&nv(), &small(Objective::MinInverseNorm, 1e-15, 1, 20), &basis).unwrap();
        assert!(out.achieved >= 1e6, "{}", out.achieved);
    }
}
