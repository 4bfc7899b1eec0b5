//! Reachable states of a partial implementation and the check that they
//! are all winning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tslsynth_bdd::{CubePolicy, NodeRef};

use super::{Analysis, Result};
use crate::encode::{Action, Encoding};
use crate::interp::{Move, ProgState};
use crate::model::SiteId;
use crate::solver::Verdict;

/// States reachable in the game (`r`) and those among them that enter the
/// given magic block (`r_l`).
#[derive(Clone, Copy, Debug)]
pub struct Reach {
    pub r: NodeRef,
    pub r_l: NodeRef,
}

/// One state of a path and the move leaving it (`None` on the last).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub state: ProgState,
    #[serde(rename = "move")]
    pub mv: Option<Move>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum WinCheck {
    Ok,
    /// A path from an initial state to a reachable losing state, ending in
    /// an assertion failure when one is reachable.
    Violation {
        path: Vec<PathStep>,
    },
}

/// Controller moves over `(X, Yc)` that open magic blocks take while
/// simulating: the strategy of the first goal when the game is realizable,
/// any move otherwise.
fn ctrl_moves(an: &Analysis) -> NodeRef {
    match &an.solution.verdict {
        Verdict::Realizable(c) => c.rho[0],
        Verdict::Unrealizable(_) => an.enc.game.mgr.constant(true),
    }
}

/// Action bits selecting an `exit`.
pub(crate) fn exit_actions(enc: &mut Encoding) -> Result<NodeRef> {
    let mut acc = enc.game.mgr.constant(false);
    for (k, a) in enc.map.actions.clone().into_iter().enumerate() {
        if matches!(a, Action::Exit(_)) {
            let c = action_is(enc, k)?;
            acc = enc.game.mgr.or(acc, c)?;
        }
    }
    Ok(acc)
}

/// `action == k` over the action bits.
pub(crate) fn action_is(enc: &mut Encoding, k: usize) -> Result<NodeRef> {
    let lits: Vec<(u32, bool)> = enc
        .map
        .action
        .iter()
        .enumerate()
        .map(|(b, &i)| (i, (k >> b) & 1 == 1))
        .collect();
    Ok(enc.game.mgr.cube_lits(&lits)?)
}

/// Successors (over `X`) of `states` under `rel ∧ moves`, where `rel` is
/// `δu` or `δc` and `q` quantifies `X` and the matching action bits.
fn img(
    enc: &mut Encoding,
    states: NodeRef,
    rel: NodeRef,
    moves: NodeRef,
    q: NodeRef,
) -> Result<NodeRef> {
    let g = &mut enc.game;
    let s = g.mgr.and(states, moves)?;
    let n = g.mgr.and_exists(rel, s, q)?;
    Ok(g.mgr.swap_prime(n)?)
}

fn quantifiers(enc: &mut Encoding) -> Result<(NodeRef, NodeRef)> {
    let g = &mut enc.game;
    let qu = g.mgr.and(g.cube_x, g.cube_yu)?;
    let qc = g.mgr.and(g.cube_x, g.cube_yc)?;
    Ok((qu, qc))
}

/// `R`: least fixpoint from `I` under environment moves and the simulated
/// controller moves; `R_l`: states of `R` at one of `sites` entered from
/// outside the block (initially, by an environment move or by an `exit`).
pub fn simulate_reachable(an: &mut Analysis, sites: &[SiteId]) -> Result<Reach> {
    let ctrl = ctrl_moves(an);
    let enc = &mut an.enc;
    let (qu, qc) = quantifiers(enc)?;
    let t = enc.game.mgr.constant(true);
    let (du, dc, init) = (enc.game.delta_u, enc.game.delta_c, enc.game.init);
    let mut r = init;
    loop {
        let a = img(enc, r, du, t, qu)?;
        let b = img(enc, r, dc, ctrl, qc)?;
        let n = enc.game.mgr.or_all([r, a, b])?;
        if n == r {
            break;
        }
        r = n;
    }
    let locs: Vec<(usize, usize)> = sites
        .iter()
        .flat_map(|&s| an.compiled.cfas.site_locations(s))
        .collect();
    let at = enc.at_locations(&locs)?;
    let exits = exit_actions(enc)?;
    let exit_moves = enc.game.mgr.and(ctrl, exits)?;
    let by_env = img(enc, r, du, t, qu)?;
    let by_exit = img(enc, r, dc, exit_moves, qc)?;
    let entry = enc.game.mgr.or_all([init, by_env, by_exit])?;
    let r_l = enc.game.mgr.and_all([at, r, entry])?;
    Ok(Reach { r, r_l })
}

/// Checks that every state entering `sites` is winning. When the
/// implementation is not winning at all, the returned path leads from an
/// initial state to a failed assertion if one is reachable, and otherwise
/// is a losing initial state.
pub fn check_winning(an: &mut Analysis, sites: &[SiteId]) -> Result<WinCheck> {
    let w = an.solution.verdict.w();
    let reach = simulate_reachable(an, sites)?;
    let enc = &mut an.enc;
    let lose = enc.game.mgr.not(w)?;
    let bad = enc.game.mgr.and(reach.r_l, lose)?;
    let init_bad = enc.game.mgr.and(enc.game.init, lose)?;
    if bad.is_false() && init_bad.is_false() {
        return Ok(WinCheck::Ok);
    }
    let error = enc.game.error;
    let f = enc.game.mgr.constant(false);
    let err_next = enc.game.mgr.swap_prime(error)?;
    let no_err = enc.game.mgr.not(err_next)?;
    let safe_ctrl = enc.game.mgr.and(enc.game.delta_c, no_err)?;
    let ctrl = ctrl_moves(an);
    let enc = &mut an.enc;
    let strat = enc.game.mgr.and(enc.game.delta_c, ctrl)?;
    let attempts = [(error, f), (error, safe_ctrl), (bad, strat)];
    for (target, ctrl_rel) in attempts {
        if target.is_false() {
            continue;
        }
        if let Some(path) = shortest_path(an, target, ctrl_rel)? {
            return Ok(WinCheck::Violation { path });
        }
    }
    let enc = &an.enc;
    let s = enc.pick_state(init_bad).expect("checked nonempty above");
    Ok(WinCheck::Violation {
        path: vec![PathStep { state: s, mv: None }],
    })
}

/// Shortest path from `I` to `target` under `δu ∪ ctrl_rel`, where
/// `ctrl_rel` is a subrelation of `δc`.
fn shortest_path(
    an: &mut Analysis,
    target: NodeRef,
    ctrl_rel: NodeRef,
) -> Result<Option<Vec<PathStep>>> {
    let enc = &mut an.enc;
    let (qu, qc) = quantifiers(enc)?;
    let t = enc.game.mgr.constant(true);
    let du = enc.game.delta_u;
    let mut rings = vec![enc.game.init];
    loop {
        let last = *rings.last().unwrap();
        let hit = enc.game.mgr.and(last, target)?;
        if !hit.is_false() {
            break;
        }
        let a = img(enc, last, du, t, qu)?;
        let b = img(enc, last, ctrl_rel, t, qc)?;
        let n = enc.game.mgr.or_all([last, a, b])?;
        if n == last {
            return Ok(None);
        }
        rings.push(n);
    }
    let k = rings.len() - 1;
    let hit = enc.game.mgr.and(rings[k], target)?;
    let mut cur = enc.pick_state(hit).expect("nonempty");
    let mut steps = vec![PathStep {
        state: cur.clone(),
        mv: None,
    }];
    for j in (0..k).rev() {
        let (s, mv) = predecessor(an, rings[j], &cur, du, ctrl_rel)?;
        steps.push(PathStep {
            state: s.clone(),
            mv: Some(mv),
        });
        cur = s;
    }
    steps.reverse();
    Ok(Some(steps))
}

/// Some state of `within` with a move to `t`, and that move.
fn predecessor(
    an: &mut Analysis,
    within: NodeRef,
    t: &ProgState,
    du: NodeRef,
    ctrl_rel: NodeRef,
) -> Result<(ProgState, Move)> {
    let enc = &mut an.enc;
    let tl = enc.map.next_lits(t);
    for (rel, env) in [(du, true), (ctrl_rel, false)] {
        let g = &mut enc.game;
        let into = g.mgr.restrict(rel, &tl)?;
        let q = if env { g.cube_yu } else { g.cube_yc };
        let pre = g.mgr.exists(into, q)?;
        let pre = g.mgr.and(pre, within)?;
        let Some(s) = enc.pick_state(pre) else {
            continue;
        };
        let mut lits = enc.map.state_lits(&s);
        lits.extend(tl.iter().copied());
        let g = &mut enc.game;
        let ys = g.mgr.restrict(rel, &lits)?;
        let vars = if env { g.yu.clone() } else { g.yc.clone() };
        let bits = g
            .mgr
            .pick_cube(ys, &vars, CubePolicy::PreferLow)
            .expect("move exists");
        let val: BTreeMap<u32, bool> = vars.into_iter().zip(bits).collect();
        let get = |i: u32| val.get(&i).copied().unwrap_or(false);
        let mv = if env {
            let (process, choices) = enc.map.decode_env(&an.compiled.cfas, &s, get);
            Move::Env { process, choices }
        } else {
            let (action, args) = enc.map.decode_ctrl(&an.compiled.model, get);
            Move::Ctrl { action, args }
        };
        return Ok((s, mv));
    }
    unreachable!("every state of a ring after the first has a predecessor in the previous ring")
}
