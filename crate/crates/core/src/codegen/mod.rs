//! User-guided code generation: reachable states of a partial
//! implementation at a magic block, a partition of them by a common winning
//! action, a synthesised `if`/`else` statement, and finally C output.

pub mod cache;
mod emit_c;
mod partial;
mod reach;
mod synth;

pub use emit_c::{emit_c, CModule};
pub use partial::{
    compile_source, site_refs, Compiled, Fill, Origin, PartialImpl, Segment, SiteRef,
};
pub use reach::{check_winning, simulate_reachable, PathStep, Reach, WinCheck};
pub use synth::{
    apply_patch, auto_complete, complete_with, generate, partition, ArgBinding, Branch, CallSpec,
    CodePatch, Decision, Part,
};

use std::path::PathBuf;

use thiserror::Error;
use tslsynth_bdd::BddError;

use crate::encode::{encode, EncodeError, Encoding, DEFAULT_NODE_LIMIT};
use crate::solver::{solve, Solution, SolveError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("compile error: {0}")]
    Compile(String),
    #[error("unknown magic block `{0}`")]
    UnknownSite(String),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("magic block {0} belongs to a template with several instances")]
    SharedTemplate(SiteRef),
    #[error("magic block {0} is closed by user code, which is read-only")]
    ReadOnly(SiteRef),
    #[error("magic block {0} is already complete")]
    SiteClosed(SiteRef),
    #[error("patch for {0} was computed for a different version of the block")]
    StalePatch(SiteRef),
    #[error("the implementation is not winning: {} step(s) lead to a losing state", path.len().saturating_sub(1))]
    NotWinning { path: Vec<PathStep> },
    #[error("no goal named `{0}`")]
    UnknownGoal(String),
    #[error("states of {site} that need different actions differ only in {detail}")]
    Inexpressible { site: SiteRef, detail: String },
    #[error("open magic blocks remain: {0}")]
    OpenSites(String),
    #[error("cannot translate to C: {0}")]
    Unsupported(String),
    #[error("capacity exceeded: {0}")]
    Capacity(#[from] BddError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<EncodeError> for CodegenError {
    fn from(e: EncodeError) -> Self {
        match e {
            EncodeError::Capacity(b) => CodegenError::Capacity(b),
            other => CodegenError::Compile(other.to_string()),
        }
    }
}

impl From<SolveError> for CodegenError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Capacity(b) => CodegenError::Capacity(b),
        }
    }
}

pub type Result<T> = std::result::Result<T, CodegenError>;

/// Game construction options shared by every analysis of a project.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameOptions {
    /// Keep only this goal.
    pub goal: Option<String>,
    pub node_limit: usize,
    /// Directory of cached certificates.
    pub cache_dir: Option<PathBuf>,
}

impl Default for GameOptions {
    fn default() -> Self {
        GameOptions {
            goal: None,
            node_limit: DEFAULT_NODE_LIMIT,
            cache_dir: None,
        }
    }
}

/// A compiled, encoded and solved implementation.
pub struct Analysis {
    pub compiled: Compiled,
    pub enc: Encoding,
    pub solution: Solution,
}

/// Encodes `c` and keeps only the selected goal.
pub fn encode_with(c: &Compiled, opts: &GameOptions) -> Result<Encoding> {
    let mut enc = encode(&c.model, &c.cfas, opts.node_limit)?;
    if let Some(name) = &opts.goal {
        let g = &mut enc.game;
        let k = g
            .goal_names
            .iter()
            .position(|n| n == name || n.rsplit('.').next() == Some(name.as_str()))
            .ok_or_else(|| CodegenError::UnknownGoal(name.clone()))?;
        g.goals = vec![g.goals[k]];
        g.goal_names = vec![g.goal_names[k].clone()];
    }
    Ok(enc)
}

pub fn analyze(imp: &PartialImpl, opts: &GameOptions) -> Result<Analysis> {
    analyze_compiled(imp.compile()?, opts)
}

pub fn analyze_compiled(compiled: Compiled, opts: &GameOptions) -> Result<Analysis> {
    let mut enc = encode_with(&compiled, opts)?;
    let solution = match &opts.cache_dir {
        Some(dir) => {
            let key = cache::cache_key(&compiled, opts, &enc);
            match cache::load(dir, &key, &mut enc) {
                Some(s) => s,
                None => {
                    let s = solve(&mut enc.game)?;
                    cache::store(dir, &key, &enc, &s);
                    s
                }
            }
        }
        None => solve(&mut enc.game)?,
    };
    Ok(Analysis {
        compiled,
        enc,
        solution,
    })
}
