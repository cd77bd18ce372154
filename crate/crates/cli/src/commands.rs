use std::path::Path;

use randtomo::codec::MatrixJson;
use randtomo::controllability::{lie_closure, DEFAULT_TOL};
use randtomo::optimizer::{log_csv, optimize_preparation, optimize_tomography_pulse, Objective};
use randtomo::propagator::{expectation_trace, uniform_times};
use randtomo::pulse::derive_seed;
use randtomo::state::{concurrence, fidelity, DensityMatrix};
use randtomo::tomography::{
    conditioning_csv, conditioning_study, experiment_protocol, linear_estimate, reconstruct_constrained, simulate_records,
    MeasurementRecord, RecordJson, ReconstructionMethod, TomographyResult,
};
use randtomo::Error;
use serde::{Deserialize, Serialize};

use crate::config::{stream, ExperimentConfig, Resolved};
use crate::error::CliError;
use crate::output::{read_json, Writer};

pub fn simulate(cfg: &ExperimentConfig, res: &Resolved, out: &Writer) -> Result<(), CliError> {
    let design = cfg.protocol.design(&res.pulse_spec, res.step)?;
    let times = uniform_times(0.0, cfg.protocol.duration(), cfg.protocol.spacing())?;
    for (n, pulse) in design.pulses().iter().enumerate() {
        let mut json = pulse.to_json();
        json.seed = Some(derive_seed(res.pulse_spec.seed, n as u64));
        out.json(&format!("pulse_{:02}.json", n + 1), json)?;
        let trace = expectation_trace(&res.system, pulse, &res.state, &times, &res.step)?;
        out.csv(&format!("trace_{:02}.csv", n + 1), &trace.to_csv())?;
    }
    let records = simulate_records(&res.system, &design, &res.state, &res.basis, &res.noise)?;
    out.json("records.json", records.iter().map(MeasurementRecord::to_json).collect::<Vec<_>>())?;
    out.json("state.json", res.state.to_json())?;
    println!("simulated {} pulses, {} records", design.pulses().len(), records.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ResultJson {
    rho: MatrixJson,
    bloch: Vec<f64>,
    residual: f64,
    method: ReconstructionMethod,
    iterations: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity_vs_reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    concurrence: Option<f64>,
}

/// A reference state given either as a bare matrix or inside an output envelope.
#[derive(Deserialize)]
#[serde(untagged)]
enum ReferenceFile {
    Wrapped { data: MatrixJson },
    Bare(MatrixJson),
}

fn load_reference(path: &Path) -> Result<DensityMatrix, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let matrix = match serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))? {
        ReferenceFile::Wrapped { data } | ReferenceFile::Bare(data) => data,
    };
    DensityMatrix::new(matrix.decode()?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub struct ReconstructArgs<'a> {
    pub records: Option<&'a Path>,
    pub end_to_end: bool,
    pub reference: Option<&'a Path>,
}

pub fn reconstruct(cfg: &ExperimentConfig, res: &Resolved, out: &Writer, args: ReconstructArgs) -> Result<(), CliError> {
    let mut reference = args.reference.map(load_reference).transpose()?;
    let result: TomographyResult = match (args.records, args.end_to_end) {
        (Some(_), true) | (None, false) => {
            return Err(CliError::Config("reconstruct needs exactly one of --records FILE or --end-to-end".into()))
        }
        (Some(path), false) => {
            let env = read_json::<Vec<RecordJson>>(path)?;
            let records = env
                .data
                .iter()
                .map(MeasurementRecord::from_json)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            check_complete(&records, res)?;
            reconstruct_constrained(&records, &res.basis, &cfg.solver)?
        }
        (None, true) => {
            reference.get_or_insert_with(|| res.state.clone());
            let outcome = experiment_protocol(
                &res.system,
                &res.state,
                &res.basis,
                &res.pulse_spec,
                &cfg.protocol,
                &res.noise,
                res.step,
                &cfg.solver,
            )?;
            check_complete(&outcome.records, res)?;
            outcome.result
        }
    };
    if let Some(r) = &reference {
        if r.dim() != result.rho.dim() {
            return Err(CliError::Config(format!("reference has dimension {}, reconstruction {}", r.dim(), result.rho.dim())));
        }
    }
    let fid = reference.as_ref().map(|r| fidelity(&result.rho, r)).transpose()?;
    let conc = if result.rho.dim() == 4 { Some(concurrence(&result.rho)?) } else { None };
    out.json(
        "result.json",
        ResultJson {
            rho: result.rho.to_json(),
            bloch: result.bloch.components().to_vec(),
            residual: result.residual,
            method: result.method,
            iterations: result.iterations,
            converged: result.converged,
            fidelity_vs_reference: fid,
            concurrence: conc,
        },
    )?;
    match fid {
        Some(f) => println!("reconstructed with residual {:e}, fidelity {f:.6}", result.residual),
        None => println!("reconstructed with residual {:e}", result.residual),
    }
    if !result.converged {
        return Err(CliError::Flagged(format!(
            "solver stopped after {} iterations without reaching gtol {:e}",
            result.iterations, cfg.solver.gtol
        )));
    }
    Ok(())
}

/// Surfaces rank deficiency of the stacked records before the solver hides it.
fn check_complete(records: &[MeasurementRecord], res: &Resolved) -> Result<(), CliError> {
    match linear_estimate(records, &res.basis) {
        Err(e @ Error::InformationallyIncomplete { .. }) => Err(CliError::Numerical(e)),
        _ => Ok(()),
    }
}

pub fn controllability(res: &Resolved, out: &Writer) -> Result<(), CliError> {
    let closure = lie_closure(res.system.drift(), res.system.control(), DEFAULT_TOL)?;
    let report = closure.report();
    out.json("controllability.json", &report)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

pub fn conditioning(cfg: &ExperimentConfig, res: &Resolved, out: &Writer) -> Result<(), CliError> {
    let spec = res.pulse_spec.with_seed(cfg.stream_seed(stream::CONDITIONING));
    let durations: Vec<f64> = cfg.conditioning.durations_us.iter().map(|t| t * 1e-6).collect();
    let rows = conditioning_study(&res.system, &spec, &durations, cfg.conditioning.realizations, &res.basis, &res.step)?;
    out.csv("conditioning.csv", &conditioning_csv(&rows, &[]))?;
    out.json("conditioning.json", &rows)?;
    println!("conditioning study over {} durations written", rows.len());
    Ok(())
}

#[derive(Serialize)]
struct OptimizationSummary {
    objective: Objective,
    achieved: f64,
    best_restart: usize,
    evaluations: usize,
}

pub fn optimize(res: &Resolved, out: &Writer) -> Result<(), CliError> {
    let spec = &res.optimizer;
    let outcome = match spec.objective {
        Objective::MaxConcurrence => optimize_preparation(&res.system, &res.state, spec)?,
        Objective::MinInverseNorm => optimize_tomography_pulse(&res.system, spec, &res.basis)?,
    };
    if outcome.pulses.len() == 1 {
        out.json("optimized_pulse.json", outcome.pulses[0].to_json())?;
    } else {
        for (n, p) in outcome.pulses.iter().enumerate() {
            out.json(&format!("optimized_pulse_{:02}.json", n + 1), p.to_json())?;
        }
    }
    out.csv("optimization_log.csv", &log_csv(&outcome.log, &[]))?;
    out.json(
        "optimization.json",
        OptimizationSummary {
            objective: spec.objective,
            achieved: outcome.achieved,
            best_restart: outcome.best_restart,
            evaluations: outcome.log.len(),
        },
    )?;
    println!("best objective {:.6} (restart {})", outcome.achieved, outcome.best_restart);
    Ok(())
}
