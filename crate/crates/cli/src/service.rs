//! Project registry and request dispatch for the JSON service.
//!
//! Requests and responses are JSON objects, one per line:
//! `{"id": .., "op": "solve", "project": 1}` is answered by
//! `{"id": .., "v": 1, "ok": true, "result": {..}}` or
//! `{"id": .., "v": 1, "ok": false, "error": {"kind": .., "message": ..}}`.
//! Requests on one project are serialised by the project's lock; distinct
//! projects proceed concurrently.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use tslsynth::codegen::{
    analyze, apply_patch, check_winning, emit_c, generate, simulate_reachable, CodePatch,
    CodegenError, GameOptions, PartialImpl, SiteRef,
};
use tslsynth::debug::{DebugError, Mode, Session};
use tslsynth::frontend::SourceSpec;
use tslsynth_bdd::CubePolicy;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("unknown project {0}")]
    UnknownProject(u64),
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Debug(#[from] DebugError),
}

impl ServiceError {
    /// Structured payload mirroring the error case.
    pub fn payload(&self) -> Value {
        let (kind, extra) = match self {
            ServiceError::BadRequest(_) => ("bad_request", json!({})),
            ServiceError::UnknownOp(_) => ("unknown_op", json!({})),
            ServiceError::UnknownProject(p) => ("unknown_project", json!({ "project": p })),
            ServiceError::UnknownSession(s) => ("unknown_session", json!({ "session": s })),
            ServiceError::Io { path, .. } => ("io", json!({ "path": path })),
            ServiceError::Codegen(e) => match e {
                CodegenError::Compile(_) => ("compile_error", json!({})),
                CodegenError::UnknownSite(s) => ("unknown_site", json!({ "site": s })),
                CodegenError::InvalidEdit(_) => ("invalid_edit", json!({})),
                CodegenError::SharedTemplate(s) => ("shared_template", json!({ "site": s })),
                CodegenError::ReadOnly(s) => ("read_only", json!({ "site": s })),
                CodegenError::SiteClosed(s) => ("site_closed", json!({ "site": s })),
                CodegenError::StalePatch(s) => ("stale_patch", json!({ "site": s })),
                CodegenError::NotWinning { path } => ("not_winning", json!({ "path": path })),
                CodegenError::UnknownGoal(g) => ("unknown_goal", json!({ "goal": g })),
                CodegenError::Inexpressible { site, detail } => {
                    ("inexpressible", json!({ "site": site, "detail": detail }))
                }
                CodegenError::OpenSites(s) => ("open_sites", json!({ "sites": s })),
                CodegenError::Unsupported(_) => ("unsupported", json!({})),
                CodegenError::Capacity(_) => ("capacity", json!({})),
                CodegenError::Internal(_) => ("internal", json!({})),
            },
            ServiceError::Debug(e) => match e {
                DebugError::AssertionViolation {
                    file,
                    line,
                    col,
                    node,
                } => (
                    "assertion_violation",
                    json!({ "file": file, "line": line, "col": col, "node": node }),
                ),
                DebugError::NoLosingInitial => ("no_losing_initial", json!({})),
                DebugError::NoInitial => ("no_initial", json!({})),
                DebugError::NotEnvironmentTurn => ("not_environment_turn", json!({})),
                DebugError::NotControllerTurn => ("not_controller_turn", json!({})),
                DebugError::Stuck => ("stuck", json!({})),
                DebugError::Parse(_) => ("parse_error", json!({})),
                DebugError::NotAnAction(_) => ("not_an_action", json!({})),
                DebugError::NondeterministicArgument => ("nondeterministic_argument", json!({})),
                DebugError::IllegalAction(_) => ("illegal_action", json!({})),
                DebugError::UnknownNode(n) => ("unknown_node", json!({ "node": n })),
                DebugError::UnknownEdge(n) => ("unknown_edge", json!({ "edge": n })),
                DebugError::TraceFull(n) => ("trace_full", json!({ "nodes": n })),
                DebugError::EncodingMismatch(_) => ("internal", json!({})),
                DebugError::LeftLosingRegion => ("internal", json!({})),
                DebugError::Capacity(_) => ("capacity", json!({})),
            },
        };
        let mut v = json!({ "kind": kind, "message": self.to_string() });
        if let (Value::Object(m), Value::Object(x)) = (&mut v, extra) {
            m.extend(x);
        }
        v
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;

/// One specification under development.
pub struct Project {
    pub imp: PartialImpl,
    pub opts: GameOptions,
    sessions: HashMap<u64, Session>,
}

impl Project {
    pub fn new(source: SourceSpec, opts: GameOptions) -> Result<Project> {
        Ok(Project {
            imp: PartialImpl::new(source)?,
            opts,
            sessions: HashMap::new(),
        })
    }

    fn open_sites(&self) -> Result<Vec<String>> {
        Ok(self
            .imp
            .compile()?
            .open_sites()
            .into_iter()
            .map(|(s, _)| s.to_string())
            .collect())
    }

    fn source_json(&self) -> Result<Value> {
        let r = self.imp.render();
        let fills: HashMap<String, _> = self
            .imp
            .fills()
            .iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Ok(json!({
            "files": r.files,
            "entry": r.entry,
            "sites": self.imp.site_refs().iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            "open_sites": self.open_sites()?,
            "fills": fills,
        }))
    }

    fn session(&mut self, id: u64) -> Result<&mut Session> {
        self.sessions
            .get_mut(&id)
            .ok_or(ServiceError::UnknownSession(id))
    }
}

#[derive(Default)]
pub struct Registry {
    next: AtomicU64,
    projects: Mutex<HashMap<u64, Arc<Mutex<Project>>>>,
    /// Session id to project id.
    sessions: Mutex<HashMap<u64, u64>>,
    cache_dir: Option<PathBuf>,
}

#[derive(Deserialize)]
struct Req {
    op: String,
    #[serde(default)]
    project: Option<u64>,
    #[serde(default)]
    session: Option<u64>,
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    files: Option<Vec<(String, String)>>,
    #[serde(default)]
    entry: Option<String>,
    #[serde(default)]
    goal: Option<String>,
    #[serde(default)]
    mode: Option<Mode>,
    #[serde(default)]
    policy: Option<String>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    node: Option<usize>,
    #[serde(default)]
    site: Option<String>,
    #[serde(default)]
    patch: Option<CodePatch>,
    #[serde(default)]
    module: Option<String>,
}

fn need<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| ServiceError::BadRequest(format!("missing field `{field}`")))
}

/// `low` or `high`: the value preferred for unconstrained bits when the
/// debugger picks environment moves.
pub fn parse_policy(s: &str) -> Result<CubePolicy> {
    match s {
        "low" => Ok(CubePolicy::PreferLow),
        "high" => Ok(CubePolicy::PreferHigh),
        _ => Err(ServiceError::BadRequest(format!("unknown policy `{s}`"))),
    }
}

fn site_ref(s: Option<String>) -> Result<SiteRef> {
    Ok(need(s, "site")?.parse()?)
}

impl Registry {
    pub fn new(cache_dir: Option<PathBuf>) -> Registry {
        Registry {
            next: AtomicU64::new(1),
            cache_dir,
            ..Registry::default()
        }
    }

    fn fresh_id(&self) -> u64 {
        self.next.fetch_add(1, Ordering::Relaxed).max(1)
    }

    fn project(&self, id: Option<u64>) -> Result<Arc<Mutex<Project>>> {
        let id = need(id, "project")?;
        self.projects
            .lock()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or(ServiceError::UnknownProject(id))
    }

    fn project_of_session(&self, id: Option<u64>) -> Result<(u64, Arc<Mutex<Project>>)> {
        let id = need(id, "session")?;
        let p = *self
            .sessions
            .lock()
            .unwrap()
            .get(&id)
            .ok_or(ServiceError::UnknownSession(id))?;
        Ok((id, self.project(Some(p))?))
    }

    /// Answers one request line.
    pub fn handle_line(&self, line: &str) -> Value {
        let req: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return response(Value::Null, Err(ServiceError::BadRequest(e.to_string()))),
        };
        let id = req.get("id").cloned().unwrap_or(Value::Null);
        response(id, self.handle(req))
    }

    pub fn handle(&self, req: Value) -> Result<Value> {
        let r: Req =
            serde_json::from_value(req).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        match r.op.as_str() {
            "create_project" => {
                let source = match (r.path, r.files) {
                    (_, Some(files)) => SourceSpec {
                        files,
                        entry: r.entry.unwrap_or_else(|| "main".into()),
                    },
                    (Some(path), None) => {
                        let text =
                            std::fs::read_to_string(&path).map_err(|e| ServiceError::Io {
                                path: path.clone(),
                                message: e.to_string(),
                            })?;
                        let mut s = SourceSpec::single(path, text);
                        if let Some(e) = r.entry {
                            s.entry = e;
                        }
                        s
                    }
                    (None, None) => {
                        return Err(ServiceError::BadRequest("give `path` or `files`".into()))
                    }
                };
                let opts = GameOptions {
                    goal: r.goal,
                    cache_dir: self.cache_dir.clone(),
                    ..GameOptions::default()
                };
                let p = Project::new(source, opts)?;
                let src = p.source_json()?;
                let id = self.fresh_id();
                self.projects
                    .lock()
                    .unwrap()
                    .insert(id, Arc::new(Mutex::new(p)));
                Ok(json!({ "project": id, "source": src }))
            }
            "get_source" => {
                let p = self.project(r.project)?;
                let p = p.lock().unwrap();
                p.source_json()
            }
            "edit_site" => {
                let p = self.project(r.project)?;
                let mut p = p.lock().unwrap();
                let s = site_ref(r.site)?;
                p.imp.edit_site(&s, &need(r.text, "text")?)?;
                p.source_json()
            }
            "solve" => {
                let p = self.project(r.project)?;
                let p = p.lock().unwrap();
                let an = analyze(&p.imp, &p.opts)?;
                Ok(json!({
                    "realizable": an.solution.verdict.is_realizable(),
                    "stats": an.solution.stats,
                    "encoding": an.enc.stats(),
                    "goals": an.enc.game.goal_names,
                }))
            }
            "check_winning" => {
                let p = self.project(r.project)?;
                let p = p.lock().unwrap();
                let mut an = analyze(&p.imp, &p.opts)?;
                let sites: Vec<_> = an
                    .compiled
                    .open_sites()
                    .into_iter()
                    .flat_map(|(_, ids)| ids)
                    .collect();
                Ok(serde_json::to_value(check_winning(&mut an, &sites)?).expect("serialisable"))
            }
            "create_session" => {
                let pa = self.project(r.project)?;
                let mut p = pa.lock().unwrap();
                let an = analyze(&p.imp, &p.opts)?;
                let mode = r.mode.unwrap_or(if an.solution.verdict.is_realizable() {
                    Mode::FreePlay
                } else {
                    Mode::Counterexample
                });
                let s = Session::start(
                    Arc::new(an.compiled.model),
                    Arc::new(an.compiled.cfas),
                    an.enc,
                    &an.solution.verdict,
                    mode,
                )?
                .with_policy(parse_policy(r.policy.as_deref().unwrap_or("low"))?);
                let snapshot = s.snapshot();
                let id = self.fresh_id();
                p.sessions.insert(id, s);
                self.sessions
                    .lock()
                    .unwrap()
                    .insert(id, r.project.expect("checked"));
                Ok(json!({ "session": id, "snapshot": snapshot }))
            }
            "env_step" | "user_action" => {
                let (sid, p) = self.project_of_session(r.session)?;
                let mut p = p.lock().unwrap();
                let s = p.session(sid)?;
                let out = if r.op == "env_step" {
                    s.env_step()
                } else {
                    s.user_action(&need(r.text, "text")?)
                };
                let out = out?;
                Ok(json!({ "outcome": out, "state": s.state_json(s.state()) }))
            }
            "single_step" => {
                let (sid, p) = self.project_of_session(r.session)?;
                let mut p = p.lock().unwrap();
                let s = p.session(sid)?;
                Ok(json!({ "step": s.single_step() }))
            }
            "goto_node" => {
                let (sid, p) = self.project_of_session(r.session)?;
                let mut p = p.lock().unwrap();
                let s = p.session(sid)?;
                s.goto_node(need(r.node, "node")?)?;
                Ok(json!({ "active": s.active(), "state": s.state_json(s.state()) }))
            }
            "get_trace" => {
                let (sid, p) = self.project_of_session(r.session)?;
                let mut p = p.lock().unwrap();
                Ok(p.session(sid)?.trace_json())
            }
            "simulate_reachable" => {
                let p = self.project(r.project)?;
                let p = p.lock().unwrap();
                let sref = site_ref(r.site)?;
                let mut an = analyze(&p.imp, &p.opts)?;
                let ids = an.compiled.sites_of(&sref);
                if ids.is_empty() {
                    return Err(CodegenError::UnknownSite(sref.to_string()).into());
                }
                let reach = simulate_reachable(&mut an, &ids)?;
                let x = an.enc.map.x();
                let states = an.enc.game.mgr.sat_count(reach.r_l, &x);
                let sample = an.enc.pick_state(reach.r_l);
                Ok(json!({
                    "site": sref,
                    "states": states,
                    "empty": states == 0,
                    "sample": sample,
                }))
            }
            "generate_statement" => {
                let p = self.project(r.project)?;
                let p = p.lock().unwrap();
                let patch = generate(&p.imp, &site_ref(r.site)?, &p.opts)?;
                let notice = (patch.reachable_states == 0).then_some(
                    "no reachable state enters this magic block; the statement is empty",
                );
                Ok(json!({ "patch": patch, "notice": notice }))
            }
            "apply_patch" => {
                let p = self.project(r.project)?;
                let mut p = p.lock().unwrap();
                let patch = need(r.patch, "patch")?;
                let opts = p.opts.clone();
                apply_patch(&mut p.imp, &patch, &opts)?;
                p.source_json()
            }
            "emit_c" => {
                let p = self.project(r.project)?;
                let p = p.lock().unwrap();
                let m = emit_c(&p.imp, &need(r.module, "module")?)?;
                Ok(json!({
                    "header_name": m.header_name,
                    "header": m.header,
                    "source_name": m.source_name,
                    "source": m.source,
                }))
            }
            other => Err(ServiceError::UnknownOp(other.to_string())),
        }
    }
}

fn response(id: Value, r: Result<Value>) -> Value {
    match r {
        Ok(result) => json!({ "id": id, "v": PROTOCOL_VERSION, "ok": true, "result": result }),
        Err(e) => json!({ "id": id, "v": PROTOCOL_VERSION, "ok": false, "error": e.payload() }),
    }
}
