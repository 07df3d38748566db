//! Experiment strategies. Each kind of run implements [`Experiment`] and is
//! registered here by name; configs and CLI verbs select one at runtime.

pub mod cooling;
pub mod dynamics;
pub mod phase_diagram;
pub mod pulse;
pub mod sweep;

use crate::config::{CliError, ResolvedConfig};
use crate::output::RunContext;

/// One runnable experiment kind. Implementations are stateless: the registry
/// hands out shared static instances.
pub trait Experiment: Sync {
    /// Name used in config `kind` fields and to pick the strategy.
    fn kind(&self) -> &'static str;
    /// Runs the experiment, writing outputs under the config's directory and
    /// printing a one-line summary per stage.
    fn run(&self, cfg: &ResolvedConfig, ctx: &RunContext) -> Result<(), CliError>;
}

pub fn registry() -> &'static [&'static dyn Experiment] {
    &[
        &dynamics::Dynamics,
        &sweep::MeanFieldSweep,
        &phase_diagram::PhaseDiagram,
        &cooling::Cooling,
        &pulse::Pulse,
    ]
}

pub fn find(kind: &str) -> Option<&'static dyn Experiment> {
    registry().iter().copied().find(|e| e.kind() == kind)
}
