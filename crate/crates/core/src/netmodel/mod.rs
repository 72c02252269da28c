//! Radial feeder and agent data model, validation and file ingestion.
//!
//! Three plain-text inputs describe a scenario: a feeder file (node, line and
//! generator tables), a profile file (interval-by-series matrix) and a TOML
//! scenario config. See [`io`] for the schemas.

mod profiles;
mod topology;
mod types;

pub mod io;

use std::fmt;
use std::path::PathBuf;

pub use io::{load_scenario, parse_feeder, parse_profiles, write_feeder};
pub use profiles::Profiles;
pub use topology::{validate_radial, Violation};
pub use types::{AgentRole, Generator, GeneratorKind, Line, Network, Node, NodeId, ZoneId};

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("network is not a tree: {}", join(.0))]
    NotATree(Vec<Violation>),
    #[error("invalid data: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is the root and has no ancestor")]
    RootHasNoAncestor(NodeId),
    #[error("profile invariant violated: {0}")]
    Profile(String),
    #[error("config invariant violated: {0}")]
    Config(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

impl LoadError {
    pub(crate) fn parse(file: &str, line: usize, message: impl fmt::Display) -> Self {
        LoadError::Parse { file: file.to_string(), line, message: message.to_string() }
    }

    /// True for syntax-level failures (as opposed to semantic validation).
    pub fn is_parse(&self) -> bool {
        matches!(self, LoadError::Io { .. } | LoadError::Parse { .. })
    }
}
