use std::sync::Arc;

use tslsynth::cfa::build_cfas;
use tslsynth::debug::{DebugError, Mode, Session};
use tslsynth::encode::{encode, Action, DEFAULT_NODE_LIMIT};
use tslsynth::frontend::{compile, SourceSpec};
use tslsynth::interp::Move;
use tslsynth::solver::solve;

const JUKEBOX: &str = include_str!("data/jukebox.tsl");
const JUKEBOX_BUG: &str = include_str!("data/jukebox_bug.tsl");

fn session(text: &str, mode: Mode) -> Result<Session, DebugError> {
    let m = compile(&SourceSpec::single("jukebox.tsl", text)).unwrap();
    let c = build_cfas(&m).unwrap();
    let mut enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let sol = solve(&mut enc.game).unwrap();
    Session::start(Arc::new(m), Arc::new(c), enc, &sol.verdict, mode)
}

fn var(s: &Session, name: &str) -> String {
    s.state_json(s.state())["vars"][name]
        .as_str()
        .unwrap()
        .to_string()
}

fn line_of(text: &str, needle: &str) -> u32 {
    text.lines().position(|l| l.contains(needle)).unwrap() as u32 + 1
}

/// Site id of the magic block the controller process waits in, if any.
fn magic_site(s: &Session) -> Option<u64> {
    let st = s.state_json(s.state());
    st["pcs"]
        .as_array()
        .unwrap()
        .iter()
        .find_map(|p| p["magic_site"].as_u64())
}

fn site_of_task(s: &Session, task: &str) -> u64 {
    let m = s.model();
    m.magic_sites
        .iter()
        .find(|site| site.task.is_some_and(|t| m.tasks[t].name.ends_with(task)))
        .unwrap()
        .id as u64
}

#[test]
fn defective_jukebox_walkthrough() {
    let mut s = session(JUKEBOX_BUG, Mode::Counterexample).unwrap();
    // Root: the arm is up and the drum sits at position 0.
    assert_eq!(var(&s, "jb.arm_down"), "false");
    assert_eq!(var(&s, "jb.position"), "0");
    assert!(!s.is_controller_turn());

    // The engine requests record 0 and lands in evt_selection's magic block.
    let out = s.env_step().unwrap();
    let Move::Env { choices, .. } = &out.mv else {
        panic!("engine moves are environment moves")
    };
    assert_eq!(
        choices.values().copied().collect::<Vec<_>>(),
        vec![1, 0],
        "{}",
        out.label
    );
    assert_eq!(
        out.label,
        format!(
            "{} [*@{}=true, *@{}=0]",
            s.model().processes[0].name,
            line_of(JUKEBOX_BUG, "if (*)"),
            line_of(JUKEBOX_BUG, "selection = *")
        )
    );
    assert_eq!(var(&s, "jb.have_selection"), "true");
    assert_eq!(var(&s, "jb.selection"), "0");
    assert!(s.is_controller_turn());
    assert_eq!(magic_site(&s), Some(site_of_task(&s, "evt_selection")));
    let pre_put = s.active();

    // The user issues cmd_put and single-steps it: no write to `state`.
    let put = s.user_action("jb.cmd_put()").unwrap();
    assert_eq!(
        put.mv,
        Move::Ctrl {
            action: Action::Call(s.model().task_by_name("jb.cmd_put").unwrap()),
            args: vec![]
        }
    );
    let mut steps = Vec::new();
    while let Some(v) = s.single_step() {
        steps.push(v);
    }
    assert_eq!(steps.first().unwrap().assert, Some(true));
    assert_eq!(
        steps.first().unwrap().line,
        line_of(JUKEBOX_BUG, "cmd_put()") + 1
    );
    assert!(steps.iter().all(|v| v.writes.is_empty()), "{steps:?}");
    assert_eq!(var(&s, "jb.state"), "idle");

    // Leaving the magic block: the engine keeps looping without callbacks.
    s.user_action("exit").unwrap();
    let parked = site_of_task(&s, "evt_parked");
    for _ in 0..20 {
        assert!(!s.is_controller_turn(), "engine invoked a callback");
        s.env_step().unwrap();
        assert_ne!(magic_site(&s), Some(parked));
    }
    let last = s.trace().edges.last().unwrap().clone();
    assert_eq!(
        last.from, last.to,
        "the forever loop closes into a self-loop"
    );
    assert_eq!(var(&s, "jb.state"), "idle");

    // Back to the selection and try rotating instead: a new branch.
    let edges = s.trace().edges.len();
    s.goto_node(pre_put).unwrap();
    let rot = s.user_action("jb.cmd_rotate(0)").unwrap();
    assert_ne!(rot.node, put.node);
    assert_eq!(s.trace().edges.len(), edges + 1);
    assert_eq!(var(&s, "jb.state"), "spin");
    // cmd_put left the state unchanged, so `exit` also started here.
    assert_eq!(put.node, pre_put);
    assert_eq!(s.trace().out_edges(pre_put).count(), 3);

    // Re-issuing a known move reuses the edge.
    s.goto_node(pre_put).unwrap();
    let again = s.user_action("jb.cmd_put();").unwrap();
    assert_eq!(again.edge, put.edge);
    assert_eq!(s.trace().edges.len(), edges + 1);

    s.check_replay().unwrap();
}

#[test]
fn playing_with_the_arm_up_violates_the_assertion() {
    let mut s = session(JUKEBOX_BUG, Mode::Counterexample).unwrap();
    s.env_step().unwrap();
    let err = s.user_action("jb.cmd_play()").unwrap_err();
    let DebugError::AssertionViolation {
        file, line, node, ..
    } = err
    else {
        panic!("{err}")
    };
    assert_eq!(file, "jukebox.tsl");
    assert_eq!(line, line_of(JUKEBOX_BUG, "assert(have_selection") - 1);
    assert_eq!(s.active(), node);
    assert_eq!(s.state_json(s.state())["error"], true);
    // Error states stutter.
    let out = s.env_step().unwrap();
    assert_eq!(out.node, node);
}

#[test]
fn user_input_is_validated() {
    let mut s = session(JUKEBOX_BUG, Mode::Counterexample).unwrap();
    assert_eq!(
        s.user_action("exit").unwrap_err(),
        DebugError::NotControllerTurn
    );
    s.env_step().unwrap();
    assert_eq!(s.env_step().unwrap_err(), DebugError::NotEnvironmentTurn);
    assert!(matches!(
        s.user_action("jb.cmd_rotate(").unwrap_err(),
        DebugError::Parse(_)
    ));
    assert!(matches!(
        s.user_action("jb.nonexistent()").unwrap_err(),
        DebugError::Parse(_)
    ));
    assert!(matches!(
        s.user_action("jb.position = 3;").unwrap_err(),
        DebugError::NotAnAction(_)
    ));
    assert!(matches!(
        s.user_action("jb.cmd_put(); jb.cmd_put();").unwrap_err(),
        DebugError::NotAnAction(_)
    ));
    assert_eq!(
        s.user_action("jb.cmd_rotate(*)").unwrap_err(),
        DebugError::NondeterministicArgument
    );
    assert_eq!(s.goto_node(999).unwrap_err(), DebugError::UnknownNode(999));
    let here = s.active();
    s.goto_node(here).unwrap();
    assert_eq!(s.active(), here);
    // Arguments may refer to program state.
    s.user_action("jb.cmd_rotate(jb.selection)").unwrap();
    assert_eq!(var(&s, "jb.position"), var(&s, "jb.selection"));
}

#[test]
fn realizable_game_has_no_counterexample_but_free_play_works() {
    assert_eq!(
        session(JUKEBOX, Mode::Counterexample).err(),
        Some(DebugError::NoLosingInitial)
    );
    let mut s = session(JUKEBOX, Mode::FreePlay).unwrap();
    assert_eq!(var(&s, "jb.state"), "idle");
    // The lowest environment move stutters in the forever loop.
    for _ in 0..5 {
        s.env_step().unwrap();
    }
    assert!(!s.is_controller_turn());
    s.check_replay().unwrap();
}

#[test]
fn trace_cap_is_enforced() {
    let mut s = session(JUKEBOX_BUG, Mode::Counterexample)
        .unwrap()
        .with_cap(2);
    s.env_step().unwrap();
    let err = s.user_action("jb.cmd_rotate(3)").unwrap_err();
    assert_eq!(err, DebugError::TraceFull(2));
}

#[test]
fn snapshot_is_json_with_named_values() {
    let mut s = session(JUKEBOX_BUG, Mode::Counterexample).unwrap();
    s.env_step().unwrap();
    s.user_action("jb.cmd_put()").unwrap();
    let v = s.snapshot();
    let text = serde_json::to_string(&v).unwrap();
    let back: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(back, v);
    assert_eq!(v["mode"], "counterexample");
    assert_eq!(v["state"]["vars"]["jb.state"], "idle");
    // cmd_put does not change the state: a self-loop.
    assert_eq!(v["trace"]["nodes"].as_array().unwrap().len(), 2);
    assert_eq!(v["trace"]["edges"][1]["move"]["kind"], "ctrl");
}
