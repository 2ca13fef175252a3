//! Experiment configuration files: flat TOML, one experiment per file, all
//! physical quantities in units of g.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use jchsim::protocols::DiagonalForm;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Spectrum,
    TwoCavitySpectrum,
    DrivenOscillation,
    RwaProbe,
    Ramp,
    Table1,
    VarianceCompare,
    PerturbationReport,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Spectrum,
        Experiment::TwoCavitySpectrum,
        Experiment::DrivenOscillation,
        Experiment::RwaProbe,
        Experiment::Ramp,
        Experiment::Table1,
        Experiment::VarianceCompare,
        Experiment::PerturbationReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::TwoCavitySpectrum => "two_cavity_spectrum",
            Experiment::DrivenOscillation => "driven_oscillation",
            Experiment::RwaProbe => "rwa_probe",
            Experiment::Ramp => "ramp",
            Experiment::Table1 => "table1",
            Experiment::VarianceCompare => "variance_compare",
            Experiment::PerturbationReport => "perturbation_report",
        }
    }

    /// The library operation this experiment runs.
    pub fn operation(self) -> &'static str {
        match self {
            Experiment::Spectrum | Experiment::TwoCavitySpectrum => "spectroscopy::numeric_spectrum",
            Experiment::DrivenOscillation => "protocols::driven_oscillation_run",
            Experiment::RwaProbe => "protocols::hopping_interchange_probe",
            Experiment::Ramp => "protocols::ramp_experiment",
            Experiment::Table1 => "protocols::mechanism_table",
            Experiment::VarianceCompare => "protocols::numeric_variance",
            Experiment::PerturbationReport => "perturbation::exact_comparison",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Spectrum => "single-cavity absorption spectrum, numeric and closed form",
            Experiment::TwoCavitySpectrum => "absorption spectrum of cavity 0 in the hopping pair",
            Experiment::DrivenOscillation => "P(1+) under strong detuned drives, with its period",
            Experiment::RwaProbe => "largest transfer probability under hopping alone",
            Experiment::Ramp => "order parameter along a detuning ramp",
            Experiment::Table1 => "coherence and interchange for the four mechanisms",
            Experiment::VarianceCompare => "effective-model variance against full dynamics",
            Experiment::PerturbationReport => "second-order energies against exact diagonalization",
        }
    }

    /// Keys accepted besides `experiment`, `output` and `format`.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Experiment::Spectrum => {
                &["omega_c", "delta", "gamma", "kappa", "n_fock", "omega_min", "omega_max", "points"]
            }
            Experiment::TwoCavitySpectrum => &[
                "omega_c", "delta", "j", "gamma", "kappa", "n_fock", "omega_min", "omega_max", "points",
            ],
            Experiment::DrivenOscillation => &[
                "omega_c", "delta", "gamma", "kappa", "omega_drive", "alpha", "delta_a", "delta_c",
                "n_fock", "t_max", "samples",
            ],
            Experiment::RwaProbe => &["omega_c", "delta", "j", "n_fock", "initial", "target"],
            Experiment::Ramp => &[
                "omega_c", "j", "n_fock", "m", "initial", "time_dependent", "strict", "delta_values",
            ],
            Experiment::Table1 => &[],
            Experiment::VarianceCompare => {
                &["omega_c", "n_fock", "j_values", "delta_values", "diagonal_form"]
            }
            Experiment::PerturbationReport => &[
                "omega_c", "delta", "delta_c", "n_fock", "epsilon_values", "include_third_manifold",
            ],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// File stem of the artifacts; defaults to the experiment name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_drive: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fock: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_dependent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal_form: Option<DiagonalForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_third_manifold: Option<bool>,
}

impl ExperimentConfig {
    /// A config naming only the experiment, everything else at defaults.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            output: None,
            format: None,
            omega_c: None,
            delta: None,
            j: None,
            gamma: None,
            kappa: None,
            omega_drive: None,
            alpha: None,
            delta_a: None,
            delta_c: None,
            n_fock: None,
            omega_min: None,
            omega_max: None,
            points: None,
            t_max: None,
            samples: None,
            initial: None,
            target: None,
            m: None,
            time_dependent: None,
            strict: None,
            delta_values: None,
            j_values: None,
            epsilon_values: None,
            diagonal_form: None,
            include_third_manifold: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        config.check_keys()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Keys that are set but mean nothing for this experiment.
    fn check_keys(&self) -> Result<(), CliError> {
        let value = serde_json::to_value(self).expect("config serializes");
        let allowed = self.experiment.keys();
        let stray: Vec<&String> = value
            .as_object()
            .expect("config is a table")
            .keys()
            .filter(|k| !["experiment", "output", "format"].contains(&k.as_str()))
            .filter(|k| !allowed.contains(&k.as_str()))
            .collect();
        if stray.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "key(s) {stray:?} not used by experiment '{}'",
                self.experiment
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_flat_file() {
        let c = ExperimentConfig::parse(
            "experiment = \"ramp\"\nj = 0.1\nm = 2\ndelta_values = [10.0, 1.0]\nformat = \"json\"\n",
        )
        .unwrap();
        assert_eq!(c.experiment, Experiment::Ramp);
        assert_eq!(c.m, Some(2));
        assert_eq!(c.delta_values, Some(vec![10.0, 1.0]));
        assert_eq!(c.format, Some(Format::Json));
    }

    #[test]
    fn rejects_unknown_and_misplaced_keys() {
        assert!(matches!(
            ExperimentConfig::parse("experiment = \"spectrum\"\nbogus = 1\n"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("experiment = \"table1\"\ndelta = 1.0\n"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("experiment = \"nope\"\n"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn every_declared_key_exists() {
        let fields = [
            "omega_c", "delta", "j", "gamma", "kappa", "omega_drive", "alpha", "delta_a", "delta_c",
            "n_fock", "omega_min", "omega_max", "points", "t_max", "samples", "initial", "target",
            "m", "time_dependent", "strict", "delta_values", "j_values", "epsilon_values",
            "diagonal_form", "include_third_manifold",
        ];
        for e in Experiment::ALL {
            for k in e.keys() {
                assert!(fields.contains(k), "{e}: {k}");
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
            let c: ExperimentConfig = toml::from_str(&format!("experiment = \"{e}\"")).unwrap();
            assert_eq!(c, ExperimentConfig::new(e));
        }
    }
}
