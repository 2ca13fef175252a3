//! Resolution of a config into a validated plan, and execution of the plan.
//! Everything that can be rejected without numerics is rejected in `plan`.

use std::f64::consts::PI;

use jchsim::hamiltonians::rabi_frequency;
use jchsim::perturbation::{exact_comparison, log_log_slope, perturbation_report, PerturbationOptions};
use jchsim::polariton_basis::{PolaritonBasis, PolaritonLabel};
use jchsim::protocols::{
    analytic_variance, driven_oscillation_run, driven_params, effective_model,
    hopping_interchange_probe, mechanism_table, numeric_variance, probe_params, ramp_experiment,
    reference_curves, DiagonalForm, ProductState, RampSchedule, DRIVEN_SAMPLES, DRIVEN_WINDOW,
    KEY_STATES,
};
use jchsim::spectroscopy::{absorption_spectrum_analytic, default_frequency_grid, find_peaks, numeric_spectrum};
use jchsim::{Branch, SystemParams};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::output::{Artifact, Cell, Provenance};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Job {
    Spectrum {
        omega_min: f64,
        omega_max: f64,
        points: usize,
    },
    Driven {
        t_max: f64,
        samples: usize,
    },
    Probe {
        initial: String,
        target: String,
    },
    Ramp {
        schedule: RampSchedule,
        initial: ProductState,
        time_dependent: bool,
        strict: bool,
    },
    Table,
    Variance {
        j_values: Vec<f64>,
        delta_values: Vec<f64>,
        diagonal_form: DiagonalForm,
    },
    Perturbation {
        epsilon_values: Vec<f64>,
        delta_c: f64,
        include_third_manifold: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub experiment: Experiment,
    /// Parameters the operation runs at; swept fields take their swept values.
    pub params: Option<SystemParams>,
    pub job: Job,
}

/// Switches that come from the command line rather than the file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunFlags {
    pub strict_ramp: bool,
}

fn base_params(e: Experiment) -> Option<SystemParams> {
    let open = |p: SystemParams| SystemParams {
        gamma: 0.5,
        kappa: 0.5,
        ..p
    };
    match e {
        Experiment::Spectrum => Some(open(SystemParams::single_cavity())),
        Experiment::TwoCavitySpectrum => Some(SystemParams {
            j: 1.0,
            ..open(SystemParams::two_cavity())
        }),
        Experiment::DrivenOscillation => Some(driven_params(0.0)),
        Experiment::RwaProbe | Experiment::Ramp => Some(probe_params()),
        Experiment::Table1 => None,
        Experiment::VarianceCompare => Some(SystemParams::two_cavity()),
        Experiment::PerturbationReport => Some(SystemParams::single_cavity()),
    }
}

fn resolve_params(c: &ExperimentConfig) -> Result<Option<SystemParams>, CliError> {
    let Some(mut p) = base_params(c.experiment) else {
        return Ok(None);
    };
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut p.omega_c, c.omega_c);
    set(&mut p.delta, c.delta);
    set(&mut p.j, c.j);
    set(&mut p.gamma, c.gamma);
    set(&mut p.kappa, c.kappa);
    set(&mut p.omega_drive, c.omega_drive);
    set(&mut p.alpha, c.alpha);
    if let Some(n) = c.n_fock {
        p.n_fock = n;
    }
    p = match c.experiment {
        Experiment::DrivenOscillation => {
            p.with_drive_detunings(c.delta_a.unwrap_or(500.0), c.delta_c.unwrap_or(500.0))
        }
        _ => SystemParams {
            omega_l: p.omega_c,
            omega_p: p.omega_c,
            ..p
        },
    };
    p.validate().map_err(|e| CliError::invalid("SystemParams::validate", e))?;
    Ok(Some(p))
}

fn positive_list(name: &str, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("{name} must be a non-empty list of finite numbers")));
    }
    Ok(())
}

fn two_sites(s: &ProductState) -> Result<(), CliError> {
    if s.labels().len() != 2 {
        return Err(CliError::Config(format!("'{s}' must name one label per cavity")));
    }
    Ok(())
}

fn ramp_schedule(m: u32, params: &SystemParams, deltas: Option<&Vec<f64>>) -> Result<RampSchedule, CliError> {
    let s = match deltas {
        None => RampSchedule::standard(m, params),
        Some(d) => {
            let law = PI * (2 * m + 1) as f64 / 2.0;
            let s = RampSchedule {
                m,
                delta_values: d.clone(),
                pulse_times: d.iter().map(|x| law / x).collect(),
                t1: PI / (2.0 * params.g),
                tau: 1.0 / params.j,
            };
            s.validate().map(|_| s)
        }
    };
    s.map_err(|e| CliError::invalid("RampSchedule::validate", e))
}

/// Validates a config and fills in every default.
pub fn plan(c: &ExperimentConfig, flags: RunFlags) -> Result<Plan, CliError> {
    let params = resolve_params(c)?;
    let job = match c.experiment {
        Experiment::Spectrum | Experiment::TwoCavitySpectrum => {
            let p = params.as_ref().expect("spectra have params");
            let grid = default_frequency_grid(p);
            let job = Job::Spectrum {
                omega_min: c.omega_min.unwrap_or(grid[0]),
                omega_max: c.omega_max.unwrap_or(grid[grid.len() - 1]),
                points: c.points.unwrap_or(grid.len()),
            };
            if let Job::Spectrum { omega_min, omega_max, points } = job {
                if points < 3 || !omega_min.is_finite() || !omega_max.is_finite() || omega_max <= omega_min {
                    return Err(CliError::Config(
                        "spectrum grid needs omega_max > omega_min and points >= 3".into(),
                    ));
                }
            }
            job
        }
        Experiment::DrivenOscillation => {
            let (t_max, samples) = (c.t_max.unwrap_or(DRIVEN_WINDOW), c.samples.unwrap_or(DRIVEN_SAMPLES));
            if !t_max.is_finite() || t_max <= 0.0 || samples < 3 {
                return Err(CliError::Config("t_max must be positive and samples >= 3".into()));
            }
            Job::Driven { t_max, samples }
        }
        Experiment::RwaProbe => {
            let initial = c.initial.clone().unwrap_or_else(|| "1-,0".into());
            let target = c.target.clone().unwrap_or_else(|| "0,1+".into());
            let nf = params.as_ref().expect("probe has params").n_fock;
            for s in [&initial, &target] {
                let st: ProductState = s.parse().map_err(|e| CliError::invalid("ProductState", e))?;
                st.index(nf).map_err(|e| CliError::invalid("ProductState", e))?;
                two_sites(&st)?;
            }
            Job::Probe { initial, target }
        }
        Experiment::Ramp => {
            let p = params.as_ref().expect("ramp has params");
            let schedule = ramp_schedule(c.m.unwrap_or(1), p, c.delta_values.as_ref())?;
            let initial: ProductState = c
                .initial
                .as_deref()
                .unwrap_or("1-,1-")
                .parse()
                .map_err(|e| CliError::invalid("ProductState", e))?;
            initial.index(p.n_fock).map_err(|e| CliError::invalid("ProductState", e))?;
            two_sites(&initial)?;
            Job::Ramp {
                schedule,
                initial,
                time_dependent: c.time_dependent.unwrap_or(true),
                strict: c.strict.unwrap_or(false) || flags.strict_ramp,
            }
        }
        Experiment::Table1 => Job::Table,
        Experiment::VarianceCompare => {
            let j_values = c.j_values.clone().unwrap_or_else(|| vec![0.02, 0.05, 0.1]);
            let delta_values = c.delta_values.clone().unwrap_or_else(|| vec![0.0, 1.0, 5.0]);
            positive_list("j_values", &j_values)?;
            positive_list("delta_values", &delta_values)?;
            if j_values.iter().any(|j| *j <= 0.0) {
                return Err(CliError::Config("j_values must be positive".into()));
            }
            Job::Variance {
                j_values,
                delta_values,
                diagonal_form: c.diagonal_form.unwrap_or_default(),
            }
        }
        Experiment::PerturbationReport => {
            let epsilon_values = c.epsilon_values.clone().unwrap_or_else(|| vec![0.04, 0.02, 0.01]);
            positive_list("epsilon_values", &epsilon_values)?;
            if epsilon_values.iter().any(|e| *e <= 0.0) {
                return Err(CliError::Config("epsilon_values must be positive".into()));
            }
            Job::Perturbation {
                epsilon_values,
                delta_c: c.delta_c.unwrap_or(0.3),
                include_third_manifold: c.include_third_manifold.unwrap_or(false),
            }
        }
    };
    Ok(Plan {
        experiment: c.experiment,
        params,
        job,
    })
}

struct Output {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    summary: Value,
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| min + (max - min) * k as f64 / (points - 1) as f64)
        .collect()
}

fn spectrum(e: Experiment, p: &SystemParams, min: f64, max: f64, points: usize) -> jchsim::Result<Output> {
    let w = grid(min, max, points);
    let num = numeric_spectrum(p, &w)?;
    let peaks = find_peaks(&num)?;
    if e == Experiment::TwoCavitySpectrum {
        let rows = w.iter().zip(&num.values).map(|(x, y)| vec![(*x).into(), (*y).into()]).collect();
        return Ok(Output {
            columns: cols(&["omega", "S_numeric"]),
            rows,
            summary: json!({ "peaks": peaks.peaks, "asymmetry": peaks.asymmetry }),
        });
    }
    let ana = absorption_spectrum_analytic(p, &w)?;
    let scale = ana.max_value();
    let linf = num
        .values
        .iter()
        .zip(&ana.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let rows = w
        .iter()
        .zip(num.values.iter().zip(&ana.values))
        .map(|(x, (a, b))| vec![(*x).into(), (*a).into(), (*b).into()])
        .collect();
    Ok(Output {
        columns: cols(&["omega", "S_numeric", "S_analytic"]),
        rows,
        summary: json!({
            "peaks": peaks.peaks,
            "asymmetry": peaks.asymmetry,
            "relative_linf_numeric_vs_analytic": linf / scale,
        }),
    })
}

fn driven(p: &SystemParams, t_max: f64, samples: usize) -> jchsim::Result<Output> {
    let run = driven_oscillation_run(p, t_max, samples)?;
    let mut traj = run.trajectory.expect("driven run keeps its trajectory");
    let basis = PolaritonBasis::from_params(p)?;
    let lower = traj
        .add_observable("P_1-", &basis.ket(PolaritonLabel::minus(1))?.projector())?
        .to_vec();
    let ground = traj
        .add_observable("P_G", &basis.ket(PolaritonLabel::Ground)?.projector())?
        .to_vec();
    let rows = (0..run.times.len())
        .map(|k| {
            vec![
                run.times[k].into(),
                run.upper_population[k].into(),
                lower[k].into(),
                ground[k].into(),
                run.coherence[k].into(),
            ]
        })
        .collect();
    Ok(Output {
        columns: cols(&["t", "P_1plus", "P_1minus", "P_ground", "coherence"]),
        rows,
        summary: json!({
            "period": run.period,
            "maxima": run.maxima,
            "analytic": rabi_frequency(p).ok(),
        }),
    })
}

fn probe(p: &SystemParams, initial: &str, target: &str) -> jchsim::Result<Output> {
    let r = hopping_interchange_probe(p, initial, target)?;
    Ok(Output {
        columns: cols(&["initial", "target", "max_probability", "time_of_max", "window"]),
        rows: vec![vec![
            r.initial.to_string().into(),
            r.target.to_string().into(),
            r.max_probability.into(),
            r.time_of_max.into(),
            r.window.into(),
        ]],
        summary: serde_json::to_value(&r).expect("probe serializes"),
    })
}

fn ramp(
    p: &SystemParams,
    schedule: &RampSchedule,
    initial: &ProductState,
    time_dependent: bool,
    strict: bool,
) -> jchsim::Result<Output> {
    let points = ramp_experiment(schedule, p, initial, time_dependent, strict)?;
    let (lp, up) = reference_curves(schedule, p)?;
    let mut columns = cols(&[
        "delta", "pulse_time", "var_tau", "var_lp_reference", "var_up_reference", "lower_branch",
        "upper_branch", "excitation_drift",
    ]);
    columns.extend(KEY_STATES.iter().map(|s| format!("P({s})")));
    let (mut near_lp, mut near_up) = (0usize, 0usize);
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let (l, u) = (lp[i].var_tau, up[i].var_tau);
            if (q.var_tau - l).abs() <= (q.var_tau - u).abs() {
                near_lp += 1;
            } else {
                near_up += 1;
            }
            let mut row: Vec<Cell> = vec![
                q.delta.into(),
                schedule.pulse_times[i].into(),
                q.var_tau.into(),
                l.into(),
                u.into(),
                q.branch_populations.lower.into(),
                q.branch_populations.upper.into(),
                q.excitation_drift.into(),
            ];
            row.extend(KEY_STATES.iter().map(|s| Cell::Num(q.state_probabilities[*s])));
            row
        })
        .collect();
    Ok(Output {
        columns,
        rows,
        summary: json!({
            "points": points.len(),
            "nearest_lp_reference": near_lp,
            "nearest_up_reference": near_up,
            "max_var_tau": points.iter().map(|q| q.var_tau).fold(0.0, f64::max),
        }),
    })
}

fn table() -> jchsim::Result<Output> {
    let rows = mechanism_table()?;
    let out = rows
        .iter()
        .map(|r| {
            vec![
                r.mechanism.to_string().into(),
                r.control.clone().into(),
                r.initial.to_string().into(),
                r.target.to_string().into(),
                r.coherence.into(),
                r.interchange.into(),
                r.reference_coherence.into(),
                r.reference_interchange.into(),
            ]
        })
        .collect();
    let worst = rows
        .iter()
        .map(|r| {
            (r.coherence - r.reference_coherence)
                .abs()
                .max((r.interchange - r.reference_interchange).abs())
        })
        .fold(0.0, f64::max);
    Ok(Output {
        columns: cols(&[
            "mechanism", "control", "initial", "target", "coherence", "interchange",
            "reference_coherence", "reference_interchange",
        ]),
        rows: out,
        summary: json!({ "max_deviation_from_reference": worst }),
    })
}

fn variance(base: &SystemParams, js: &[f64], deltas: &[f64], form: DiagonalForm) -> jchsim::Result<Output> {
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &j in js {
        for &delta in deltas {
            for branch in [Branch::Minus, Branch::Plus] {
                let p = SystemParams { j, delta, ..base.clone() };
                let selected = analytic_variance(&effective_model(&p, branch, form)?, j)?;
                let doubled = analytic_variance(&effective_model(&p, branch, DiagonalForm::Doubled)?, j)?;
                let numeric = numeric_variance(&p, branch)?;
                let rel = (selected - numeric).abs() / numeric.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                let name = if branch == Branch::Minus { "1-,1-" } else { "1+,1+" };
                rows.push(vec![
                    j.into(),
                    delta.into(),
                    name.into(),
                    selected.into(),
                    doubled.into(),
                    numeric.into(),
                    rel.into(),
                ]);
            }
        }
    }
    Ok(Output {
        columns: cols(&[
            "j", "delta", "initial", "var_analytic", "var_analytic_doubled", "var_numeric",
            "relative_error",
        ]),
        rows,
        summary: json!({ "diagonal_form": form, "max_relative_error": worst }),
    })
}

fn perturbation(base: &SystemParams, eps: &[f64], delta_c: f64, third: bool) -> jchsim::Result<Output> {
    let options = PerturbationOptions {
        include_third_manifold: third,
    };
    let at = |e: f64| {
        SystemParams {
            omega_drive: e,
            alpha: e,
            ..base.clone()
        }
        .with_cavity_detuning(delta_c)
    };
    let mut rows = Vec::new();
    let mut residuals: Vec<(String, Vec<f64>)> = Vec::new();
    for &e in eps {
        for (k, c) in exact_comparison(&at(e), options)?.iter().enumerate() {
            if residuals.len() <= k {
                residuals.push((c.label.to_string(), Vec::new()));
            }
            residuals[k].1.push(c.residual);
            rows.push(vec![
                e.into(),
                c.label.to_string().into(),
                c.e_perturbative.into(),
                c.e_exact.into(),
                c.residual.into(),
                c.overlap.into(),
            ]);
        }
    }
    let smallest = eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let report = perturbation_report(&at(smallest), options)?;
    let mut slopes = Map::new();
    if eps.len() >= 2 {
        for (label, r) in &residuals {
            slopes.insert(label.clone(), json!(log_log_slope(eps, r)));
        }
    }
    Ok(Output {
        columns: cols(&["epsilon", "label", "e_perturbative", "e_exact", "residual", "overlap"]),
        rows,
        summary: json!({
            "residual_slopes": slopes,
            "report_epsilon": smallest,
            "labels": report.labels,
            "terms": report.terms,
        }),
    })
}

/// Runs the plan's operation and packs the result with its provenance.
pub fn execute(plan: &Plan, config_name: Option<String>) -> Result<Artifact, CliError> {
    let e = plan.experiment;
    let p = plan.params.as_ref();
    let need = || p.expect("plan carries params");
    let out = match &plan.job {
        Job::Spectrum { omega_min, omega_max, points } => spectrum(e, need(), *omega_min, *omega_max, *points),
        Job::Driven { t_max, samples } => driven(need(), *t_max, *samples),
        Job::Probe { initial, target } => probe(need(), initial, target),
        Job::Ramp { schedule, initial, time_dependent, strict } => {
            ramp(need(), schedule, initial, *time_dependent, *strict)
        }
        Job::Table => table(),
        Job::Variance { j_values, delta_values, diagonal_form } => {
            variance(need(), j_values, delta_values, *diagonal_form)
        }
        Job::Perturbation { epsilon_values, delta_c, include_third_manifold } => {
            perturbation(need(), epsilon_values, *delta_c, *include_third_manifold)
        }
    }
    .map_err(CliError::numerical(e.operation()))?;
    let settings = match serde_json::to_value(&plan.job).expect("job serializes") {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    Ok(Artifact {
        provenance: Provenance {
            engine: format!("jchsim {}", env!("CARGO_PKG_VERSION")),
            experiment: e,
            operation: e.operation().to_string(),
            config: config_name,
            params: plan.params.clone(),
            settings,
        },
        columns: out.columns,
        rows: out.rows,
        summary: out.summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn every_experiment_plans_with_defaults() {
        for e in Experiment::ALL {
            let plan = plan(&ExperimentConfig::new(e), RunFlags::default()).unwrap();
            let expected = match e {
                Experiment::Spectrum | Experiment::TwoCavitySpectrum => {
                    matches!(plan.job, Job::Spectrum { .. })
                }
                Experiment::DrivenOscillation => matches!(plan.job, Job::Driven { .. }),
                Experiment::RwaProbe => matches!(plan.job, Job::Probe { .. }),
                Experiment::Ramp => matches!(plan.job, Job::Ramp { .. }),
                Experiment::Table1 => matches!(plan.job, Job::Table),
                Experiment::VarianceCompare => matches!(plan.job, Job::Variance { .. }),
                Experiment::PerturbationReport => matches!(plan.job, Job::Perturbation { .. }),
            };
            assert!(expected, "{e} mapped to {:?}", plan.job);
        }
    }

    #[test]
    fn operations_name_library_functions() {
        let names: BTreeSet<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        assert_eq!(names.len(), Experiment::ALL.len());
        for e in Experiment::ALL {
            let (module, func) = e.operation().split_once("::").unwrap();
            assert!(["spectroscopy", "protocols", "perturbation"].contains(&module), "{e}");
            assert!(!func.is_empty());
        }
    }

    #[test]
    fn invalid_inputs_are_config_errors() {
        let mut c = ExperimentConfig::new(Experiment::RwaProbe);
        c.initial = Some("7x,0".into());
        assert!(matches!(plan(&c, RunFlags::default()), Err(CliError::Config(_))));
        let mut c = ExperimentConfig::new(Experiment::Ramp);
        c.delta_values = Some(vec![1.0, 5.0]);
        assert!(matches!(plan(&c, RunFlags::default()), Err(CliError::Config(_))));
        let mut c = ExperimentConfig::new(Experiment::Spectrum);
        c.gamma = Some(-1.0);
        assert!(matches!(plan(&c, RunFlags::default()), Err(CliError::Config(_))));
    }

    #[test]
    fn strict_flag_reaches_the_ramp() {
        let c = ExperimentConfig::new(Experiment::Ramp);
        let p = plan(&c, RunFlags { strict_ramp: true }).unwrap();
        assert!(matches!(p.job, Job::Ramp { strict: true, .. }));
    }

    #[test]
    fn driven_default_matches_reference_period() {
        let c = ExperimentConfig::new(Experiment::DrivenOscillation);
        let a = execute(&plan(&c, RunFlags::default()).unwrap(), None).unwrap();
        let period = a.summary["period"].as_f64().unwrap();
        assert!((period - 0.627).abs() < 0.03 * 0.627, "{period}");
        assert_eq!(a.columns, ["t", "P_1plus", "P_1minus", "P_ground", "coherence"]);
    }

    #[test]
    fn numerical_failure_names_the_operation() {
        let mut c = ExperimentConfig::new(Experiment::DrivenOscillation);
        c.t_max = Some(0.1);
        let err = execute(&plan(&c, RunFlags::default()).unwrap(), None).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("protocols::driven_oscillation_run"));
    }
}
