//! Invariant suite run by `jchsim selfcheck`: trace preservation, snapshot
//! positivity, polariton diagonalization, ladder reconstruction, steady-state
//! existence and branch separability.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hamiltonians::{build_h_jc, build_h_jch, SystemParams};
use crate::lindblad::{build_liouvillian, evolve, standard_channels, steady_state};
use crate::operator_core::DensityMatrix;
use crate::polariton_basis::{
    ladder_families, reconstruction_residual, CoefficientTable, LadderKind, PolaritonBasis,
    PolaritonLabel,
};
use crate::protocols::{branch_leakage, ProductState};

pub const TRACE_DRIFT_MAX: f64 = 1e-8;
pub const POSITIVITY_MIN: f64 = -1e-7;
pub const DIAGONALIZATION_MAX: f64 = 1e-10;
pub const RECONSTRUCTION_MAX: f64 = 1e-10;
pub const LEAKAGE_MAX: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    TracePreservation,
    Positivity,
    Diagonalization,
    LadderReconstruction,
    ZeroMode,
    BranchSeparability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn below(kind: CheckKind, name: &str, value: f64, threshold: f64) -> Self {
        Self {
            kind,
            name: name.to_string(),
            value,
            threshold,
            passed: value < threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub checks: Vec<CheckResult>,
}

impl SelfcheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Deliberate damage to a coefficient table, to prove the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub manifold: usize,
    pub offset: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckOptions {
    pub corrupt_coefficient: Option<Corruption>,
}

fn open_params() -> SystemParams {
    SystemParams {
        delta: 0.7,
        gamma: 0.4,
        kappa: 0.25,
        ..SystemParams::single_cavity()
    }
}

fn evolution_checks() -> Result<Vec<CheckResult>> {
    let p = open_params();
    let basis = PolaritonBasis::from_params(&p)?;
    let l = build_liouvillian(&build_h_jc(&p)?, &standard_channels(&p)?)?;
    let rho0 = DensityMatrix::pure(&basis.ket(PolaritonLabel::minus(2))?);
    let grid: Vec<f64> = (0..=400).map(|k| 0.025 * k as f64).collect();
    let traj = evolve(&l, &rho0, &grid)?;
    Ok(vec![
        CheckResult::below(
            CheckKind::TracePreservation,
            "trace drift along an open single-cavity run",
            traj.diagnostics.max_trace_drift,
            TRACE_DRIFT_MAX,
        ),
        CheckResult {
            kind: CheckKind::Positivity,
            name: "smallest snapshot eigenvalue".into(),
            value: traj.min_eigenvalue()?,
            threshold: POSITIVITY_MIN,
            passed: traj.min_eigenvalue()? >= POSITIVITY_MIN,
        },
    ])
}

fn diagonalization_check() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for delta in [0.0, 0.7, -2.5] {
        let p = SystemParams {
            delta,
            ..SystemParams::single_cavity()
        };
        let basis = PolaritonBasis::from_params(&p)?;
        let hp = basis.to_polariton(&build_h_jc(&p)?)?;
        let d = hp.data();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if i != j {
                    worst = worst.max(d[[i, j]].norm());
                }
            }
        }
    }
    Ok(CheckResult::below(
        CheckKind::Diagonalization,
        "largest off-diagonal of U^dagger H_JC U",
        worst,
        DIAGONALIZATION_MAX,
    ))
}

fn reconstruction_checks(options: &SelfcheckOptions) -> Result<Vec<CheckResult>> {
    let p = SystemParams {
        delta: 0.7,
        ..SystemParams::single_cavity()
    };
    let basis = PolaritonBasis::from_params(&p)?;
    let mut table = CoefficientTable::new(&basis)?;
    if let Some(c) = options.corrupt_coefficient {
        if let Some(e) = table.entries_mut().get_mut(c.manifold.saturating_sub(1)) {
            e.c_plus += c.offset;
            e.ca_plus += c.offset;
        }
    }
    [(LadderKind::Photonic, "a^dagger"), (LadderKind::Atomic, "sigma^+")]
        .into_iter()
        .map(|(kind, name)| {
            let fam = ladder_families(&basis, &table, kind)?;
            Ok(CheckResult::below(
                CheckKind::LadderReconstruction,
                &format!("{name} rebuilt from polariton families"),
                reconstruction_residual(&fam, kind),
                RECONSTRUCTION_MAX,
            ))
        })
        .collect()
}

fn zero_mode_check() -> Result<CheckResult> {
    let p = SystemParams {
        j: 0.3,
        gamma: 0.5,
        kappa: 0.2,
        ..SystemParams::two_cavity()
    };
    let l = build_liouvillian(&build_h_jch(&p)?, &standard_channels(&p)?)?;
    let residual = match steady_state(&l) {
        Ok(ss) => l.residual(&ss),
        Err(_) => f64::INFINITY,
    };
    Ok(CheckResult::below(
        CheckKind::ZeroMode,
        "steady-state residual of the open two-cavity Liouvillian",
        residual,
        1e-8,
    ))
}

fn separability_check() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for (delta, start) in [(0.0, "1-,1-"), (0.0, "1+,1+"), (1.0, "1-,1-"), (1.0, "1+,1+")] {
        let p = SystemParams {
            delta,
            j: 0.1,
            ..SystemParams::two_cavity()
        };
        let s: ProductState = start.parse()?;
        worst = worst.max(branch_leakage(&p, &s, 10.0 / p.j, 2001)?);
    }
    Ok(CheckResult::below(
        CheckKind::BranchSeparability,
        "opposite-branch weight from a one-branch state, J = 0.1g, t <= 10/J",
        worst,
        LEAKAGE_MAX,
    ))
}

/// Runs every suite; suites execute in parallel and report in fixed order.
pub fn run_selfcheck(options: &SelfcheckOptions) -> Result<SelfcheckReport> {
    type Suite<'a> = Box<dyn Fn() -> Result<Vec<CheckResult>> + Send + Sync + 'a>;
    let suites: Vec<Suite> = vec![
        Box::new(evolution_checks),
        Box::new(|| Ok(vec![diagonalization_check()?])),
        Box::new(|| reconstruction_checks(options)),
        Box::new(|| Ok(vec![zero_mode_check()?])),
        Box::new(|| Ok(vec![separability_check()?])),
    ];
    let results = suites.par_iter().map(|s| s()).collect::<Result<Vec<_>>>()?;
    Ok(SelfcheckReport {
        checks: results.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        let r = run_selfcheck(&SelfcheckOptions::default()).unwrap();
        assert_eq!(r.checks.len(), 7);
        assert!(r.all_passed(), "{:?}", r.failures());
    }

    #[test]
    fn corrupted_table_is_caught() {
        let opts = SelfcheckOptions {
            corrupt_coefficient: Some(Corruption { manifold: 2, offset: 1e-3 }),
        };
        let r = run_selfcheck(&opts).unwrap();
        let bad = r.failures();
        assert_eq!(bad.len(), 2);
        assert!(bad.iter().all(|c| c.kind == CheckKind::LadderReconstruction));
    }
}
