//! Command-line front end: loads a scenario, runs one analysis and writes
//! CSV and JSON artifacts.

mod commands;
pub mod error;
pub mod output;
pub mod overrides;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use sha2::{Digest, Sha256};
use pointer_sim_core::{model::ScenarioDocument, Scenario};

pub use error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CommandKind {
    Run,
    Branches,
    SaddleCompare,
    Orthogonality,
    Decoherence,
    Sweep,
    Validate,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Run => "run",
            CommandKind::Branches => "branches",
            CommandKind::SaddleCompare => "saddle-compare",
            CommandKind::Orthogonality => "orthogonality",
            CommandKind::Decoherence => "decoherence",
            CommandKind::Sweep => "sweep",
            CommandKind::Validate => "validate",
        }
    }
}

/// One invocation of the tool.
#[derive(Clone, Debug, Parser)]
#[command(name = "pointer-sim", version, about = "Mean-field branch dynamics of a qubit coupled to an environment")]
pub struct RunManifest {
    #[arg(value_enum)]
    pub command: CommandKind,

    /// Scenario TOML file.
    #[arg(long = "scenario")]
    pub scenario_path: PathBuf,

    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,

    /// Dotted-path override, e.g. `interaction.coupling.value=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[arg(long, default_value_t = 1)]
    pub workers: usize,

    /// Recorded in the metadata; the dynamics are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A scenario ready to run, with the tree it was built from.
pub struct Loaded {
    pub manifest: RunManifest,
    pub tree: toml::Value,
    pub scenario: Scenario,
    pub input_hash: String,
}

/// sha256 over the scenario bytes followed by each override.
pub fn input_hash(bytes: &[u8], overrides: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    for o in overrides {
        h.update(b"\n--set ");
        h.update(o.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn load(manifest: RunManifest) -> CliResult<Loaded> {
    let bytes = std::fs::read(&manifest.scenario_path).map_err(|e| CliError::io(&manifest.scenario_path, e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| pointer_sim_core::Error::Parse("scenario file is not valid UTF-8".into()))?;
    let mut tree: toml::Value = toml::from_str::<toml::Table>(&text)
        .map(toml::Value::Table)
        .map_err(|e| pointer_sim_core::Error::Parse(e.to_string()))?;
    for o in &manifest.overrides {
        let (key, value) = overrides::parse_assignment(o)?;
        overrides::set_path(&mut tree, &key, value)?;
    }
    let scenario = ScenarioDocument::from_value(tree.clone())?.to_scenario()?;
    let input_hash = input_hash(&bytes, &manifest.overrides);
    Ok(Loaded {
        manifest,
        tree,
        scenario,
        input_hash,
    })
}

/// Runs the command and writes its artifacts; nothing is written on failure.
pub fn run(manifest: RunManifest) -> CliResult<Vec<PathBuf>> {
    if manifest.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.workers)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| {
        let ctx = load(manifest)?;
        let artifacts = commands::execute(&ctx)?;
        output::write_artifacts(&ctx.manifest.out, &artifacts)?;
        Ok(artifacts.iter().map(|a| ctx.manifest.out.join(&a.name)).collect())
    })
}
