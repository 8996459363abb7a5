//! Resolution of `--scenario` / `--process` / `--instruments` / `--cone`
//! into a library [`Instance`].

use std::fmt;
use std::path::{Path, PathBuf};

use causalcert::catalog::{Instance, InstrumentSet, Scenario};
use causalcert::error::ValidationReport;
use causalcert::hilbert::LabeledOperator;
use causalcert::process::{process_report, validate_process, ProcessDoc, ProcessMatrix, ScenarioKind, ScenarioParams};
use causalcert::sdp::ConeKind;
use clap::Args;

use crate::commands::CliError;

#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    /// Built-in scenario (see `causalcert list`).
    #[arg(long, conflicts_with = "process")]
    pub scenario: Option<String>,
    /// Process-matrix JSON file.
    #[arg(long)]
    pub process: Option<PathBuf>,
    /// Instrument-set JSON file {alice, bob: [...], fiona: [...]}; with
    /// --process, certifies the induced D-POVM.
    #[arg(long, requires = "process")]
    pub instruments: Option<PathBuf>,
    /// Cone to certify against; must fit the target.
    #[arg(long)]
    pub cone: Option<String>,
    /// Mixing weight of the perturbed bipartite family.
    #[arg(long)]
    pub q: Option<f64>,
    /// Perturbation of the bipartite family.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Bob's state parameter in the perturbed-family instruments.
    #[arg(long)]
    pub xi: Option<f64>,
}

/// What the arguments name, before any noise is mixed in.
pub enum Target {
    Scenario(Scenario, ScenarioParams),
    Process { path: PathBuf, w: LabeledOperator, kind: ScenarioKind, instruments: Option<Box<InstrumentSet>>, cone: Option<ConeKind> },
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Scenario(s, _) => write!(f, "{s}"),
            Target::Process { path, instruments, .. } => {
                write!(f, "{}", path.display())?;
                if instruments.is_some() {
                    write!(f, " with instruments")?;
                }
                Ok(())
            }
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))
}

fn parse_cone(name: &str) -> Result<ConeKind, CliError> {
    ConeKind::from_name(name).ok_or_else(|| CliError::Parse(format!("unknown cone {name:?}")))
}

impl TargetArgs {
    pub fn resolve(&self) -> Result<Target, CliError> {
        let cone = self.cone.as_deref().map(parse_cone).transpose()?;
        if let Some(name) = &self.scenario {
            let scenario: Scenario = name.parse().map_err(|e: causalcert::Error| CliError::Parse(e.to_string()))?;
            let mut params = ScenarioParams::default();
            params.q = self.q.unwrap_or(params.q);
            params.epsilon = self.epsilon.unwrap_or(params.epsilon);
            params.xi = self.xi.unwrap_or(params.xi);
            if let Some(kind) = cone {
                let native = scenario.instance(&params)?.cone.kind;
                if kind != native {
                    return Err(CliError::Parse(format!("scenario {scenario} is certified in the {} cone", native.name())));
                }
            }
            return Ok(Target::Scenario(scenario, params));
        }
        let Some(path) = &self.process else {
            return Err(CliError::Parse("give --scenario or --process".into()));
        };
        if self.q.is_some() || self.epsilon.is_some() || self.xi.is_some() {
            return Err(CliError::Parse("--q, --epsilon and --xi apply to built-in scenarios only".into()));
        }
        let doc: ProcessDoc = serde_json::from_str(&read(path)?)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let w = LabeledOperator::try_from(doc.op).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let kind = ScenarioKind::from_factors(w.factors())?;
        if kind.variant != doc.kind {
            return Err(CliError::Parse(format!("{}: declared kind does not match the factors", path.display())));
        }
        let instruments = match &self.instruments {
            Some(p) => Some(Box::new(
                InstrumentSet::from_json(&read(p)?).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?,
            )),
            None => None,
        };
        Ok(Target::Process { path: path.clone(), w, kind, instruments, cone })
    }
}

impl Target {
    /// Validity checks of the ingredients, without failing on them.
    pub fn report(&self) -> Result<ValidationReport, CliError> {
        match self {
            Target::Scenario(s, p) => Ok(s.instance(p)?.report),
            Target::Process { w, kind, .. } => {
                let report = process_report(w, *kind)?;
                if !report.is_valid() {
                    return Ok(report);
                }
                Ok(self.instance(0.0)?.report)
            }
        }
    }

    /// Object at noise weight `r`, with its noise and cone. Invalid
    /// ingredients are an error.
    pub fn instance(&self, r: f64) -> Result<Instance, CliError> {
        let instance = match self {
            Target::Scenario(s, p) => s.instance(&ScenarioParams { r, ..*p })?,
            Target::Process { w, kind, instruments, cone, .. } => {
                let w: ProcessMatrix = validate_process(w.clone(), *kind)?;
                match (instruments, cone) {
                    (Some(set), _) => {
                        let inst = set.instance(&w, r)?;
                        if let Some(c) = cone.filter(|c| *c != inst.cone.kind) {
                            return Err(CliError::Parse(format!(
                                "the induced object is certified in the {} cone, not {}",
                                inst.cone.kind.name(),
                                c.name()
                            )));
                        }
                        inst
                    }
                    (None, Some(ConeKind::MdciElement)) => Instance::teleported(&w, r)?,
                    (None, c) => {
                        let inst = Instance::from_process(&w, r)?;
                        if let Some(c) = c.filter(|c| *c != inst.cone.kind) {
                            return Err(CliError::Parse(format!(
                                "a process file is certified in the {} or {} cone, not {}",
                                inst.cone.kind.name(),
                                ConeKind::MdciElement.name(),
                                c.name()
                            )));
                        }
                        inst
                    }
                }
            }
        };
        instance.report.clone().into_result()?;
        Ok(instance)
    }

    /// Default scan bracket.
    pub fn bracket(&self) -> (f64, f64) {
        match self {
            Target::Scenario(s, _) => s.bracket(),
            Target::Process { .. } => (0.0, 2.0),
        }
    }
}
