//! Interactive counterexample debugging. The user plays the controller by
//! typing controllable calls (or `exit`) at magic blocks; the engine answers
//! with environment moves taken from the spoiling strategy, or, in free-play
//! mode, from the whole environment relation. Every explored transition is
//! kept in a trace graph the user can revisit.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tslsynth_bdd::{BddError, CubePolicy, NodeRef};

use crate::cfa::{Cfas, LocKind};
use crate::encode::{Action, EncodeError, Encoding};
use crate::frontend::{flatten::Ctx, Pos};
use crate::interp::{eval, EventKind, Interp, Move, NoChoices, ProgState, StepEvent};
use crate::model::{MStmtKind, SpecModel};
use crate::solver::{CounterStrategy, EnvMemory, SolveError, Verdict};

pub const DEFAULT_TRACE_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The engine follows the spoiling strategy of an unrealizable game.
    Counterexample,
    /// The engine takes the lowest environment move of `δu`.
    FreePlay,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DebugError {
    #[error("every initial state is winning: there is no counterexample to explore")]
    NoLosingInitial,
    #[error("the game has no initial state")]
    NoInitial,
    #[error("the active state belongs to the controller; enter an action")]
    NotEnvironmentTurn,
    #[error("the active state belongs to the environment")]
    NotControllerTurn,
    #[error("no environment move is enabled")]
    Stuck,
    #[error("cannot parse action: {0}")]
    Parse(String),
    #[error("not a controllable call: `{0}`")]
    NotAnAction(String),
    #[error("action arguments must not contain `*`")]
    NondeterministicArgument,
    #[error("action `{0}` is not allowed in this state")]
    IllegalAction(String),
    #[error("assertion violated at {file}:{line}:{col}")]
    AssertionViolation {
        file: String,
        line: u32,
        col: u32,
        /// Error node the trace moved to.
        node: usize,
    },
    #[error("unknown trace node {0}")]
    UnknownNode(usize),
    #[error("unknown trace edge {0}")]
    UnknownEdge(usize),
    #[error("trace graph is full ({0} nodes)")]
    TraceFull(usize),
    #[error("interpreter and encoding disagree on move {0}")]
    EncodingMismatch(String),
    #[error("engine move left the losing region")]
    LeftLosingRegion,
    #[error("capacity exceeded: {0}")]
    Capacity(#[from] BddError),
}

impl From<EncodeError> for DebugError {
    fn from(e: EncodeError) -> Self {
        match e {
            EncodeError::Capacity(b) => DebugError::Capacity(b),
            other => DebugError::EncodingMismatch(other.to_string()),
        }
    }
}

impl From<SolveError> for DebugError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Capacity(b) => DebugError::Capacity(b),
        }
    }
}

pub type Result<T> = std::result::Result<T, DebugError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceNode {
    pub id: usize,
    pub state: ProgState,
    pub label: String,
    /// Spoiling-strategy memory on entering this node.
    pub memory: EnvMemory,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEdge {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    #[serde(rename = "move")]
    pub mv: Move,
    pub label: String,
    pub events: Vec<StepEvent>,
}

/// Explored transitions. Nodes are identified by state and strategy memory,
/// so revisiting a state closes a cycle instead of growing the graph.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TraceGraph {
    pub nodes: Vec<TraceNode>,
    pub edges: Vec<TraceEdge>,
    pub active: usize,
    #[serde(skip)]
    index: HashMap<(ProgState, EnvMemory), usize>,
}

impl TraceGraph {
    fn node_for(
        &mut self,
        state: ProgState,
        memory: EnvMemory,
        label: String,
        depth: usize,
        cap: usize,
    ) -> Result<usize> {
        if let Some(&id) = self.index.get(&(state.clone(), memory)) {
            return Ok(id);
        }
        if self.nodes.len() >= cap {
            return Err(DebugError::TraceFull(cap));
        }
        let id = self.nodes.len();
        self.index.insert((state.clone(), memory), id);
        self.nodes.push(TraceNode {
            id,
            state,
            label,
            memory,
            depth,
        });
        Ok(id)
    }

    pub fn edge_between(&self, from: usize, mv: &Move) -> Option<&TraceEdge> {
        self.edges.iter().find(|e| e.from == from && e.mv == *mv)
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &TraceEdge> {
        self.edges.iter().filter(move |e| e.from == node)
    }
}

/// One statement of a replayed move.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepView {
    pub file: String,
    pub line: u32,
    pub col: u32,
    /// Variable writes as `(name, value)`.
    pub writes: Vec<(String, String)>,
    pub branch: Option<bool>,
    pub assert: Option<bool>,
    /// Control left the segment (pause, magic block or end).
    pub stop: bool,
}

/// Result of an engine or user move.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveOutcome {
    pub edge: usize,
    pub node: usize,
    #[serde(rename = "move")]
    pub mv: Move,
    pub label: String,
}

#[derive(Clone, Debug)]
struct Replay {
    edge: usize,
    cursor: usize,
}

pub struct Session {
    model: Arc<SpecModel>,
    cfas: Arc<Cfas>,
    enc: Encoding,
    mode: Mode,
    w: NodeRef,
    strategy: Option<CounterStrategy>,
    trace: TraceGraph,
    cap: usize,
    replay: Option<Replay>,
    policy: CubePolicy,
}

impl Session {
    /// Opens a session on `enc`, whose game was solved with outcome
    /// `verdict`. In counterexample mode the root is the lowest losing
    /// initial state, otherwise the lowest initial state.
    pub fn start(
        model: Arc<SpecModel>,
        cfas: Arc<Cfas>,
        mut enc: Encoding,
        verdict: &Verdict,
        mode: Mode,
    ) -> Result<Session> {
        let w = verdict.w();
        let strategy = match verdict {
            Verdict::Unrealizable(c) => Some(c.strategy.clone()),
            Verdict::Realizable(_) => None,
        };
        let g = &mut enc.game;
        let root_set = match mode {
            Mode::Counterexample => {
                let lose = g.mgr.not(w)?;
                let s = g.mgr.and(g.init, lose)?;
                if s.is_false() || strategy.is_none() {
                    return Err(DebugError::NoLosingInitial);
                }
                s
            }
            Mode::FreePlay => g.init,
        };
        let root = enc.pick_state(root_set).ok_or(DebugError::NoInitial)?;
        let mut s = Session {
            model,
            cfas,
            enc,
            mode,
            w,
            strategy,
            trace: TraceGraph::default(),
            cap: DEFAULT_TRACE_CAP,
            replay: None,
            policy: CubePolicy::PreferLow,
        };
        let label = s.state_label(&root);
        s.trace
            .node_for(root, EnvMemory::default(), label, 0, usize::MAX)?;
        Ok(s)
    }

    pub fn with_cap(mut self, cap: usize) -> Session {
        self.cap = cap.max(1);
        self
    }

    /// How the engine breaks ties between environment moves.
    pub fn with_policy(mut self, policy: CubePolicy) -> Session {
        self.policy = policy;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn trace(&self) -> &TraceGraph {
        &self.trace
    }

    pub fn model(&self) -> &SpecModel {
        &self.model
    }

    pub fn active(&self) -> usize {
        self.trace.active
    }

    pub fn state(&self) -> &ProgState {
        &self.trace.nodes[self.trace.active].state
    }

    fn interp(&self) -> Interp<'_> {
        Interp::new(&self.model, &self.cfas)
    }

    pub fn is_controller_turn(&self) -> bool {
        self.interp().is_turn(self.state())
    }

    /// Lets the environment move once.
    pub fn env_step(&mut self) -> Result<MoveOutcome> {
        let s = self.state().clone();
        if self.interp().is_turn(&s) {
            return Err(DebugError::NotEnvironmentTurn);
        }
        let mem = self.trace.nodes[self.trace.active].memory;
        let xl = self.enc.map.state_lits(&s);
        let g = &mut self.enc.game;
        let (bits, next_mem) = match (&self.strategy, self.mode) {
            (Some(st), Mode::Counterexample) => st
                .choose_with(g, &xl, mem, self.policy)?
                .ok_or(DebugError::Stuck)?,
            _ => {
                let moves = g.mgr.restrict(g.delta_u, &xl)?;
                let q = g.cube_xp;
                let yu = g.mgr.exists(moves, q)?;
                let bits = g
                    .mgr
                    .pick_cube(yu, &g.yu, self.policy)
                    .ok_or(DebugError::Stuck)?;
                (bits, mem)
            }
        };
        let val: BTreeMap<u32, bool> = g.yu.iter().copied().zip(bits).collect();
        let (process, choices) = self
            .enc
            .map
            .decode_env(&self.cfas, &s, |i| val.get(&i).copied().unwrap_or(false));
        let mv = Move::Env { process, choices };
        let out = self.extend(&s, mv, next_mem)?;
        if self.mode == Mode::Counterexample {
            let t = &self.trace.nodes[out.node].state;
            let tl = self.enc.map.state_lits(t);
            let g = &self.enc.game;
            let val: BTreeMap<u32, bool> = tl.into_iter().collect();
            if g.mgr
                .eval(self.w, |i| val.get(&i).copied().unwrap_or(false))
            {
                return Err(DebugError::LeftLosingRegion);
            }
        }
        Ok(out)
    }

    /// Performs a controller action typed as source text: `exit` or a single
    /// call of a controllable task, written in the scope of the magic block.
    pub fn user_action(&mut self, text: &str) -> Result<MoveOutcome> {
        let s = self.state().clone();
        let interp = self.interp();
        let p = match interp.magic_process(&s) {
            Some(p) if interp.is_turn(&s) => p,
            _ => return Err(DebugError::NotControllerTurn),
        };
        let text = text.trim();
        let bare = text.trim_end_matches(';').trim();
        let mv = if bare == "exit" {
            Move::Ctrl {
                action: Action::Exit(p),
                args: Vec::new(),
            }
        } else {
            let LocKind::Magic(site) = self.cfas.procs[p].locations[s.pcs[p]].kind else {
                unreachable!("magic process sits at a magic location")
            };
            let site = &self.model.magic_sites[site];
            let ctx = Ctx {
                inst: site.instance,
                task: site.task,
                process: site.process,
            };
            let src = if text.ends_with(';') {
                text.to_string()
            } else {
                format!("{text};")
            };
            let stmts = crate::frontend::compile_statements(&self.model, &ctx, &src)
                .map_err(|e| DebugError::Parse(e.message()))?;
            let [stmt] = stmts.as_slice() else {
                return Err(DebugError::NotAnAction(bare.to_string()));
            };
            let MStmtKind::Call { task, args } = &stmt.kind else {
                return Err(DebugError::NotAnAction(bare.to_string()));
            };
            if !self.model.tasks[*task].controllable {
                return Err(DebugError::NotAnAction(bare.to_string()));
            }
            if args.iter().any(|a| a.has_nondet()) {
                return Err(DebugError::NondeterministicArgument);
            }
            let args = args
                .iter()
                .map(|a| eval(a, &s.vars, &[], &mut NoChoices))
                .collect();
            Move::Ctrl {
                action: Action::Call(*task),
                args,
            }
        };
        if let Move::Ctrl { action, .. } = &mv {
            if self.enc.map.action_index(*action).is_none() {
                return Err(DebugError::IllegalAction(bare.to_string()));
            }
        }
        let mem = self.trace.nodes[self.trace.active].memory;
        let out = self.extend(&s, mv, mem).map_err(|e| match e {
            DebugError::EncodingMismatch(_) => DebugError::IllegalAction(bare.to_string()),
            e => e,
        })?;
        let edge = &self.trace.edges[out.edge];
        if self.trace.nodes[out.node].state.err {
            let pos = edge
                .events
                .iter()
                .find(|e| e.kind == EventKind::Assert { holds: false })
                .map(|e| e.pos)
                .unwrap_or_default();
            return Err(DebugError::AssertionViolation {
                file: self.file_name(pos),
                line: pos.line,
                col: pos.col,
                node: out.node,
            });
        }
        Ok(out)
    }

    /// Executes `mv` from `s` (the active state), checks it against the game
    /// and records it.
    fn extend(&mut self, s: &ProgState, mv: Move, memory: EnvMemory) -> Result<MoveOutcome> {
        let from = self.trace.active;
        let mut events = Vec::new();
        let t = self.interp().apply(s, &mv, Some(&mut events));
        let label = self.move_label(s, &mv);
        if !self.enc.holds(&self.model, &self.cfas, s, &mv, &t)? {
            return Err(DebugError::EncodingMismatch(label));
        }
        let edge = match self.trace.edge_between(from, &mv) {
            Some(e) => e.id,
            None => {
                let to = if t == *s && memory == self.trace.nodes[from].memory {
                    from
                } else {
                    let depth = self.trace.nodes[from].depth + 1;
                    let nl = self.state_label(&t);
                    self.trace.node_for(t, memory, nl, depth, self.cap)?
                };
                let id = self.trace.edges.len();
                self.trace.edges.push(TraceEdge {
                    id,
                    from,
                    to,
                    mv: mv.clone(),
                    label: label.clone(),
                    events,
                });
                id
            }
        };
        let to = self.trace.edges[edge].to;
        self.trace.active = to;
        self.replay = Some(Replay { edge, cursor: 0 });
        Ok(MoveOutcome {
            edge,
            node: to,
            mv,
            label,
        })
    }

    /// Makes `node` the active node; the rest of the graph is kept.
    pub fn goto_node(&mut self, node: usize) -> Result<()> {
        if node >= self.trace.nodes.len() {
            return Err(DebugError::UnknownNode(node));
        }
        if node != self.trace.active {
            self.trace.active = node;
            self.replay = None;
        }
        Ok(())
    }

    /// Selects the edge whose statements [`Session::single_step`] replays.
    pub fn replay_edge(&mut self, edge: usize) -> Result<()> {
        if edge >= self.trace.edges.len() {
            return Err(DebugError::UnknownEdge(edge));
        }
        self.replay = Some(Replay { edge, cursor: 0 });
        Ok(())
    }

    /// Next statement of the move being replayed (by default the last one
    /// taken), or `None` once it is exhausted.
    pub fn single_step(&mut self) -> Option<StepView> {
        let r = self.replay.as_mut()?;
        let ev = self.trace.edges[r.edge].events.get(r.cursor)?.clone();
        r.cursor += 1;
        let mut view = StepView {
            file: self.file_name(ev.pos),
            line: ev.pos.line,
            col: ev.pos.col,
            writes: Vec::new(),
            branch: None,
            assert: None,
            stop: false,
        };
        match ev.kind {
            EventKind::Write { var, value } => {
                let v = &self.model.vars[var];
                view.writes
                    .push((v.name.clone(), self.model.display_value(&v.ty, value)));
            }
            EventKind::Local { slot, value } => {
                view.writes.push((format!("${slot}"), value.to_string()))
            }
            EventKind::Branch { taken } => view.branch = Some(taken),
            EventKind::Assert { holds } => view.assert = Some(holds),
            EventKind::Stop => view.stop = true,
        }
        Some(view)
    }

    /// Recomputes every edge from its source and compares with the recorded
    /// target.
    pub fn check_replay(&self) -> std::result::Result<(), usize> {
        let interp = self.interp();
        for e in &self.trace.edges {
            let s = &self.trace.nodes[e.from].state;
            if interp.apply(s, &e.mv, None) != self.trace.nodes[e.to].state {
                return Err(e.id);
            }
        }
        Ok(())
    }

    fn file_name(&self, pos: Pos) -> String {
        self.model
            .files
            .get(pos.file as usize)
            .cloned()
            .unwrap_or_else(|| "<input>".to_string())
    }

    fn state_label(&self, s: &ProgState) -> String {
        if s.err {
            return "error".to_string();
        }
        let parts: Vec<String> = self
            .cfas
            .procs
            .iter()
            .zip(&s.pcs)
            .map(|(c, &l)| {
                let loc = &c.locations[l];
                let what = match loc.kind {
                    LocKind::Initial => "start",
                    LocKind::Pause => "pause",
                    LocKind::Magic(_) => "magic",
                    LocKind::Final => "end",
                };
                format!("{}: {} line {}", c.name, what, loc.pos.line)
            })
            .collect();
        parts.join(", ")
    }

    fn move_label(&self, s: &ProgState, mv: &Move) -> String {
        match mv {
            Move::Env { process, choices } => {
                let Some(cfa) = self.cfas.procs.get(*process) else {
                    return format!("process {process}");
                };
                if !self.interp().runnable(s, *process) {
                    return format!("{} (stutter)", cfa.name);
                }
                let prog = &cfa.program;
                let vals: Vec<String> = choices
                    .iter()
                    .map(|(&c, &v)| {
                        let line = (0..prog.instrs.len())
                            .find(|&i| prog.choices_in(i).contains(&c))
                            .map(|i| prog.pos[i].line)
                            .unwrap_or(0);
                        format!("*@{line}={}", self.model.display_value(&prog.choices[c], v))
                    })
                    .collect();
                if vals.is_empty() {
                    cfa.name.clone()
                } else {
                    format!("{} [{}]", cfa.name, vals.join(", "))
                }
            }
            Move::Ctrl {
                action: Action::Exit(_),
                ..
            } => "exit".to_string(),
            Move::Ctrl {
                action: Action::Call(t),
                args,
            } => {
                let task = &self.model.tasks[*t];
                let a: Vec<String> = task
                    .params
                    .iter()
                    .zip(args)
                    .map(|(p, &v)| self.model.display_value(&p.ty, v))
                    .collect();
                format!("{}({})", task.name, a.join(", "))
            }
        }
    }

    /// Named view of a state: variables, process locations and ownership.
    pub fn state_json(&self, s: &ProgState) -> Value {
        let vars: serde_json::Map<String, Value> = self
            .model
            .vars
            .iter()
            .zip(&s.vars)
            .map(|(d, &v)| {
                (
                    d.name.clone(),
                    Value::String(self.model.display_value(&d.ty, v)),
                )
            })
            .collect();
        let pcs: Vec<Value> = self
            .cfas
            .procs
            .iter()
            .zip(&s.pcs)
            .map(|(c, &l)| {
                let loc = &c.locations[l];
                let site = match loc.kind {
                    LocKind::Magic(id) => Some(id),
                    _ => None,
                };
                json!({
                    "process": c.name,
                    "location": l,
                    "file": self.file_name(loc.pos),
                    "line": loc.pos.line,
                    "col": loc.pos.col,
                    "magic_site": site,
                })
            })
            .collect();
        json!({
            "vars": vars,
            "pcs": pcs,
            "error": s.err,
            "turn": if self.interp().is_turn(s) { "controller" } else { "environment" },
        })
    }

    pub fn trace_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .trace
            .nodes
            .iter()
            .map(|n| {
                json!({
                    "id": n.id,
                    "label": n.label,
                    "depth": n.depth,
                    "memory": n.memory,
                    "state": self.state_json(&n.state),
                })
            })
            .collect();
        let edges: Vec<Value> = self
            .trace
            .edges
            .iter()
            .map(
                |e| json!({"id": e.id, "from": e.from, "to": e.to, "label": e.label, "move": e.mv}),
            )
            .collect();
        json!({"nodes": nodes, "edges": edges, "active": self.trace.active})
    }

    /// Full session view for clients.
    pub fn snapshot(&self) -> Value {
        json!({
            "mode": self.mode,
            "active": self.trace.active,
            "state": self.state_json(self.state()),
            "trace": self.trace_json(),
        })
    }
}
