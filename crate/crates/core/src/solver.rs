//! GR(1) game solving: winning region, controller strategy, environment
//! counterstrategy and certificate checking.
//!
//! The winning region is `νZ. ∩i μY. ∪j νX. (γi ∧ cpre(Z)) ∨ step(Y, X, j)`,
//! where at environment states `step` requires every move to land in `Y`
//! or, violating fairness condition `j`, in `X`; at controller states some
//! move must land in `Y`. Controller moves satisfy every fairness condition.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tslsynth_bdd::{BddError, CubePolicy, NodeRef};

use crate::game::SymbolicGame;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("capacity exceeded: {0}")]
    Capacity(#[from] BddError),
}

pub type Result<T> = std::result::Result<T, SolveError>;

/// Controller certificate: winning region, one move relation per goal
/// over `(X, Yc)`, and the ring structure justifying progress.
#[derive(Clone, Debug)]
pub struct WinningCert {
    pub w: NodeRef,
    pub rho: Vec<NodeRef>,
    /// `y_rings[i][k]`: the k-th μ-iterate for goal `i` (index 0 is empty).
    pub y_rings: Vec<Vec<NodeRef>>,
    /// `x_rings[i][k][j]`: the ν-layer for fairness `j` that produced
    /// `y_rings[i][k + 1]`.
    pub x_rings: Vec<Vec<Vec<NodeRef>>>,
}

/// Environment strategy with memory `(goal, fairness)`.
///
/// The losing region is built bottom-up in levels; inside a level the
/// environment starves one goal while cycling through the fairness
/// conditions, and otherwise drops to a lower level.
#[derive(Clone, Debug)]
pub struct CounterStrategy {
    /// Cumulative levels, `levels[0]` empty.
    pub levels: Vec<NodeRef>,
    /// `trap[m][i]`: states of level `m` where goal `i` can be starved.
    pub trap: Vec<Vec<NodeRef>>,
    /// `ranks[m][i][j][r]`: μ-iterates towards fairness `j` inside the trap.
    pub ranks: Vec<Vec<Vec<Vec<NodeRef>>>>,
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct EnvMemory {
    pub goal: usize,
    pub fair: usize,
}

#[derive(Clone, Debug)]
pub struct SpoilingCert {
    pub w: NodeRef,
    /// `¬W`.
    pub losing: NodeRef,
    /// `¬W` restricted to states reachable from the initial states.
    pub reachable_losing: NodeRef,
    /// Memoryless over-approximation of the strategy over `(X, Yu)`: every
    /// move the strategy may take under some memory value.
    pub counter_moves: NodeRef,
    pub strategy: CounterStrategy,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Realizable(WinningCert),
    Unrealizable(SpoilingCert),
}

impl Verdict {
    pub fn is_realizable(&self) -> bool {
        matches!(self, Verdict::Realizable(_))
    }

    pub fn w(&self) -> NodeRef {
        match self {
            Verdict::Realizable(c) => c.w,
            Verdict::Unrealizable(c) => c.w,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub z_iterations: usize,
    pub y_iterations: usize,
    pub x_iterations: usize,
    pub peak_nodes: usize,
    pub millis: u128,
}

pub struct Solution {
    pub verdict: Verdict,
    pub stats: SolveStats,
}

impl Solution {
    pub fn stats_json(&self) -> serde_json::Value {
        serde_json::json!({
            "realizable": self.verdict.is_realizable(),
            "stats": self.stats,
        })
    }
}

/// `X` renamed to `X'`.
fn primed(g: &mut SymbolicGame, s: NodeRef) -> Result<NodeRef> {
    Ok(g.mgr.swap_prime(s)?)
}

/// Controllable predecessor: controller states with some move into `s`,
/// environment states all of whose moves land in `s`.
pub fn cpre(g: &mut SymbolicGame, s: NodeRef) -> Result<NodeRef> {
    let sp = primed(g, s)?;
    let c = ctrl_pre(g, sp)?;
    let e = env_forced(g, sp, None)?;
    Ok(g.mgr.or(c, e)?)
}

/// `turn ∧ ∃Yc X'. δc ∧ target'`.
fn ctrl_pre(g: &mut SymbolicGame, target_p: NodeRef) -> Result<NodeRef> {
    let q = g.mgr.and(g.cube_yc, g.cube_xp)?;
    let e = g.mgr.and_exists(g.delta_c, target_p, q)?;
    Ok(g.mgr.and(g.turn, e)?)
}

/// Environment states all of whose moves satisfy `good` (over `X, Yu, X'`),
/// or land in `target'` when `good` is `None`.
fn env_forced(g: &mut SymbolicGame, target_p: NodeRef, good: Option<NodeRef>) -> Result<NodeRef> {
    let good = good.unwrap_or(target_p);
    let bad = g.mgr.not(good)?;
    let q = g.mgr.and(g.cube_yu, g.cube_xp)?;
    let escape = g.mgr.and_exists(g.delta_u, bad, q)?;
    let nt = g.mgr.not(g.turn)?;
    Ok(g.mgr.diff(nt, escape)?)
}

/// Environment states with some move satisfying `good`.
fn env_some(g: &mut SymbolicGame, good: NodeRef) -> Result<NodeRef> {
    let q = g.mgr.and(g.cube_yu, g.cube_xp)?;
    let e = g.mgr.and_exists(g.delta_u, good, q)?;
    let nt = g.mgr.not(g.turn)?;
    Ok(g.mgr.and(nt, e)?)
}

/// Controller states all of whose moves land in `target'`.
fn ctrl_forced(g: &mut SymbolicGame, target_p: NodeRef) -> Result<NodeRef> {
    let bad = g.mgr.not(target_p)?;
    let q = g.mgr.and(g.cube_yc, g.cube_xp)?;
    let escape = g.mgr.and_exists(g.delta_c, bad, q)?;
    Ok(g.mgr.diff(g.turn, escape)?)
}

struct Rings {
    w: NodeRef,
    y: Vec<Vec<NodeRef>>,
    x: Vec<Vec<Vec<NodeRef>>>,
}

fn fixpoint(g: &mut SymbolicGame, stats: &mut SolveStats) -> Result<Rings> {
    let t = g.mgr.constant(true);
    let f = g.mgr.constant(false);
    let mut z = t;
    loop {
        stats.z_iterations += 1;
        let cz = cpre(g, z)?;
        let mut znew = t;
        let mut ys = Vec::new();
        let mut xs = Vec::new();
        for i in 0..g.goals.len() {
            let goal = g.mgr.and(g.goals[i], cz)?;
            let mut y = f;
            let mut yl = vec![f];
            let mut xl = Vec::new();
            loop {
                stats.y_iterations += 1;
                let yp = primed(g, y)?;
                let ctrl = ctrl_pre(g, yp)?;
                let base = g.mgr.or(goal, ctrl)?;
                let mut ynew = f;
                let mut layers = Vec::new();
                for j in 0..g.fairness.len() {
                    let nphi = g.mgr.not(g.fairness[j])?;
                    let mut x = t;
                    loop {
                        stats.x_iterations += 1;
                        stats.peak_nodes = stats.peak_nodes.max(g.mgr.allocated());
                        g.maybe_collect(|| {
                            let mut v = vec![z, cz, znew, goal, y, yp, ctrl, base, ynew, nphi, x];
                            v.extend(ys.iter().flatten());
                            v.extend(xs.iter().flatten().flatten());
                            v.extend(&yl);
                            v.extend(xl.iter().flatten());
                            v.extend(&layers);
                            v
                        });
                        let xp = primed(g, x)?;
                        let wait = g.mgr.and(nphi, xp)?;
                        let good = g.mgr.or(yp, wait)?;
                        let env = env_forced(g, yp, Some(good))?;
                        let xn = g.mgr.or(base, env)?;
                        if xn == x {
                            break;
                        }
                        debug_assert!(g.mgr.leq(xn, x)?, "X-iterates must shrink");
                        x = xn;
                    }
                    layers.push(x);
                    ynew = g.mgr.or(ynew, x)?;
                }
                if ynew == y {
                    break;
                }
                debug_assert!(g.mgr.leq(y, ynew)?, "Y-iterates must grow");
                y = ynew;
                yl.push(y);
                xl.push(layers);
            }
            znew = g.mgr.and(znew, y)?;
            ys.push(yl);
            xs.push(xl);
        }
        stats.peak_nodes = stats.peak_nodes.max(g.mgr.allocated());
        if znew == z {
            return Ok(Rings { w: z, y: ys, x: xs });
        }
        debug_assert!(g.mgr.leq(znew, z)?, "Z-iterates must shrink");
        z = znew;
    }
}

/// Winning region only.
pub fn winning_region(g: &mut SymbolicGame) -> Result<NodeRef> {
    Ok(fixpoint(g, &mut SolveStats::default())?.w)
}

fn strategy_from(g: &mut SymbolicGame, r: Rings) -> Result<WinningCert> {
    let mut rho = Vec::new();
    let q = g.cube_xp;
    let wp = primed(g, r.w)?;
    let stay = g.mgr.and_exists(g.delta_c, wp, q)?;
    for (i, yl) in r.y.iter().enumerate() {
        // In the goal: stay in W. From ring k otherwise: move into ring k - 1.
        let goal = g.mgr.and_all([g.goals[i], r.w, g.turn])?;
        let mut rel = g.mgr.and(goal, stay)?;
        for k in 1..yl.len() {
            let ring = g.mgr.diff(yl[k], yl[k - 1])?;
            let ring = g.mgr.diff(ring, goal)?;
            let ring = g.mgr.and(ring, g.turn)?;
            let lower = primed(g, yl[k - 1])?;
            let mv = g.mgr.and_exists(g.delta_c, lower, q)?;
            let t = g.mgr.and(ring, mv)?;
            rel = g.mgr.or(rel, t)?;
        }
        rho.push(rel);
    }
    Ok(WinningCert {
        w: r.w,
        rho,
        y_rings: r.y,
        x_rings: r.x,
    })
}

/// States reachable from `from` under both players' moves.
pub fn reachable(g: &mut SymbolicGame, from: NodeRef) -> Result<NodeRef> {
    let mut r = from;
    loop {
        let img = image(g, r)?;
        let n = g.mgr.or(r, img)?;
        if n == r {
            return Ok(r);
        }
        r = n;
    }
}

/// One-step successors of `s` (over `X`).
pub fn image(g: &mut SymbolicGame, s: NodeRef) -> Result<NodeRef> {
    let qu = g.mgr.and(g.cube_x, g.cube_yu)?;
    let qc = g.mgr.and(g.cube_x, g.cube_yc)?;
    let a = g.mgr.and_exists(g.delta_u, s, qu)?;
    let b = g.mgr.and_exists(g.delta_c, s, qc)?;
    let n = g.mgr.or(a, b)?;
    primed(g, n)
}

pub fn solve(g: &mut SymbolicGame) -> Result<Solution> {
    let start = Instant::now();
    let mut stats = SolveStats::default();
    let rings = fixpoint(g, &mut stats)?;
    let w = rings.w;
    let verdict = if g.mgr.leq(g.init, w)? {
        Verdict::Realizable(strategy_from(g, rings)?)
    } else {
        Verdict::Unrealizable(counterstrategy(g, w)?)
    };
    stats.peak_nodes = stats.peak_nodes.max(g.mgr.allocated());
    stats.millis = start.elapsed().as_millis();
    Ok(Solution { verdict, stats })
}

/// Environment counterstrategy on `¬w`, computed as the dual fixpoint
/// `μZ. ∪i νY. ∩j μX. (¬γi ∨ upre(Z)) ∧ estep(Y, X, j)`.
pub fn counterstrategy(g: &mut SymbolicGame, w: NodeRef) -> Result<SpoilingCert> {
    let f = g.mgr.constant(false);
    let losing = g.mgr.not(w)?;
    let mut levels = vec![f];
    let mut trap = vec![Vec::new()];
    let mut ranks = vec![Vec::new()];
    loop {
        let z = *levels.last().expect("non-empty");
        let zp = primed(g, z)?;
        let up_e = env_some(g, zp)?;
        let up_c = ctrl_forced(g, zp)?;
        let upre = g.mgr.or(up_e, up_c)?;
        let mut znew = z;
        let mut traps = Vec::new();
        let mut rk = Vec::new();
        for i in 0..g.goals.len() {
            let ng = g.mgr.not(g.goals[i])?;
            let avoid = g.mgr.or(ng, upre)?;
            let mut y = losing;
            let mut per_j;
            loop {
                let yp = primed(g, y)?;
                let stay_c = ctrl_forced(g, yp)?;
                per_j = Vec::new();
                let mut ynew = y;
                for j in 0..g.fairness.len() {
                    let mut x = f;
                    let mut rl = vec![f];
                    loop {
                        g.maybe_collect(|| {
                            let mut v = vec![
                                w, losing, z, zp, upre, znew, ng, avoid, y, yp, stay_c, ynew, x,
                            ];
                            v.extend(&levels);
                            v.extend(trap.iter().flatten());
                            v.extend(ranks.iter().flatten().flatten().flatten());
                            v.extend(&traps);
                            v.extend(rk.iter().flatten().flatten());
                            v.extend(per_j.iter().flatten());
                            v.extend(&rl);
                            v
                        });
                        let xp = primed(g, x)?;
                        let ok = g.mgr.or(g.fairness[j], xp)?;
                        let good = g.mgr.and(yp, ok)?;
                        let stay_e = env_some(g, good)?;
                        let step = g.mgr.or(stay_e, stay_c)?;
                        let xn = g.mgr.and(avoid, step)?;
                        let xn = g.mgr.and(xn, y)?;
                        if xn == x {
                            break;
                        }
                        x = xn;
                        rl.push(x);
                    }
                    ynew = g.mgr.and(ynew, x)?;
                    per_j.push(rl);
                }
                if ynew == y {
                    break;
                }
                y = ynew;
            }
            znew = g.mgr.or(znew, y)?;
            traps.push(y);
            rk.push(per_j);
        }
        if znew == z {
            break;
        }
        levels.push(znew);
        trap.push(traps);
        ranks.push(rk);
    }
    let strategy = CounterStrategy {
        levels,
        trap,
        ranks,
    };
    let counter_moves = strategy.move_union(g)?;
    let reach = reachable(g, g.init)?;
    let reachable_losing = g.mgr.and(reach, losing)?;
    Ok(SpoilingCert {
        w,
        losing,
        reachable_losing,
        counter_moves,
        strategy,
    })
}

impl CounterStrategy {
    /// The environment's region: the top level.
    pub fn region(&self) -> NodeRef {
        *self.levels.last().expect("non-empty")
    }

    /// Every move the strategy may pick under some memory value.
    fn move_union(&self, g: &mut SymbolicGame) -> Result<NodeRef> {
        let mut all = g.mgr.constant(false);
        let nt = g.mgr.not(g.turn)?;
        for m in 1..self.levels.len() {
            let fresh = g.mgr.diff(self.levels[m], self.levels[m - 1])?;
            let fresh = g.mgr.and(fresh, nt)?;
            let lower = primed(g, self.levels[m - 1])?;
            let desc = g.mgr.and(g.delta_u, lower)?;
            let desc = g.mgr.and(desc, fresh)?;
            all = g.mgr.or(all, desc)?;
            let q = g.mgr.and(g.cube_yu, g.cube_xp)?;
            let can_desc = g.mgr.exists(desc, q)?;
            let rest = g.mgr.diff(fresh, can_desc)?;
            for i in 0..self.trap[m].len() {
                let yp = primed(g, self.trap[m][i])?;
                let inside = g.mgr.and(rest, self.trap[m][i])?;
                for j in 0..self.ranks[m][i].len() {
                    let rl = &self.ranks[m][i][j];
                    for r in 1..rl.len() {
                        let at = g.mgr.diff(rl[r], rl[r - 1])?;
                        let at = g.mgr.and(at, inside)?;
                        let lower = primed(g, rl[r - 1])?;
                        let ok = g.mgr.or(g.fairness[j], lower)?;
                        let good = g.mgr.and(yp, ok)?;
                        let mv = g.mgr.and(g.delta_u, good)?;
                        let mv = g.mgr.and(mv, at)?;
                        all = g.mgr.or(all, mv)?;
                    }
                }
            }
        }
        let q = g.cube_xp;
        Ok(g.mgr.exists(all, q)?)
    }

    fn level_of(&self, g: &SymbolicGame, val: &dyn Fn(u32) -> bool) -> Option<usize> {
        (1..self.levels.len()).find(|&m| g.mgr.eval(self.levels[m], val))
    }

    /// Environment move at the concrete state `x` (an assignment to `X`).
    /// Returns the `Yu` assignment (in `g.yu` order) and the updated memory,
    /// or `None` when `x` is controller-owned or outside the region.
    pub fn choose(
        &self,
        g: &mut SymbolicGame,
        x: &[(u32, bool)],
        mem: EnvMemory,
    ) -> Result<Option<(Vec<bool>, EnvMemory)>> {
        self.choose_with(g, x, mem, CubePolicy::PreferLow)
    }

    /// [`Self::choose`] with `policy` deciding among equally good moves.
    pub fn choose_with(
        &self,
        g: &mut SymbolicGame,
        x: &[(u32, bool)],
        mem: EnvMemory,
        policy: CubePolicy,
    ) -> Result<Option<(Vec<bool>, EnvMemory)>> {
        let n = g.mgr.num_vars() as usize;
        let mut a = vec![false; n];
        for &(i, v) in x {
            a[i as usize] = v;
        }
        let val = |i: u32| a[i as usize];
        if g.mgr.eval(g.turn, val) {
            return Ok(None);
        }
        let Some(m) = self.level_of(g, &val) else {
            return Ok(None);
        };
        let moves = g.mgr.restrict(g.delta_u, x)?;
        let pick = |g: &mut SymbolicGame, rel: NodeRef| -> Result<Option<Vec<bool>>> {
            let q = g.cube_xp;
            let yu = g.mgr.exists(rel, q)?;
            Ok(g.mgr.pick_cube(yu, &g.yu, policy))
        };
        let lower = primed(g, self.levels[m - 1])?;
        let desc = g.mgr.and(moves, lower)?;
        if let Some(yu) = pick(g, desc)? {
            return Ok(Some((yu, mem)));
        }
        let goals = self.trap[m].len();
        let i = (0..goals)
            .map(|k| (mem.goal + k) % goals)
            .find(|&i| g.mgr.eval(self.trap[m][i], val))
            .expect("state of a level lies in one of its traps");
        let nf = self.ranks[m][i].len();
        let j = mem.fair % nf;
        let rl = &self.ranks[m][i][j];
        let r = (1..rl.len())
            .find(|&r| g.mgr.eval(rl[r], val))
            .expect("trap state has a rank");
        let yp = primed(g, self.trap[m][i])?;
        let phi = g.mgr.restrict(g.fairness[j], x)?;
        let fair = g.mgr.and_all([moves, yp, phi])?;
        if let Some(yu) = pick(g, fair)? {
            let next = EnvMemory {
                goal: i,
                fair: (j + 1) % nf,
            };
            return Ok(Some((yu, next)));
        }
        let lower = primed(g, rl[r - 1])?;
        let closer = g.mgr.and_all([moves, yp, lower])?;
        let yu = pick(g, closer)?.expect("rank guarantees a move");
        Ok(Some((yu, EnvMemory { goal: i, fair: j })))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("initial state outside the winning region: {state:?}")]
    InitialLosing { state: Vec<bool> },
    #[error("{what}: state {state:?}, move {mv:?}")]
    Violation {
        what: String,
        state: Vec<bool>,
        mv: Vec<bool>,
    },
    #[error(transparent)]
    Capacity(#[from] SolveError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub goals: usize,
    pub rings: Vec<usize>,
}

impl From<BddError> for VerifyError {
    fn from(e: BddError) -> Self {
        VerifyError::Capacity(e.into())
    }
}

fn violation(
    g: &mut SymbolicGame,
    what: &str,
    bad: NodeRef,
    mv_vars: &[u32],
) -> std::result::Result<(), VerifyError> {
    if bad.is_false() {
        return Ok(());
    }
    let x = g.x.clone();
    let mut care = x.clone();
    care.extend_from_slice(mv_vars);
    let cube = g
        .mgr
        .pick_cube(bad, &care, CubePolicy::PreferLow)
        .expect("non-empty");
    Err(VerifyError::Violation {
        what: what.to_string(),
        state: cube[..x.len()].to_vec(),
        mv: cube[x.len()..].to_vec(),
    })
}

/// Checks a controller certificate: `I ⊆ W`, `W` closed under play with the
/// strategy, and every move from a ring makes progress towards its goal.
pub fn verify_strategy(
    g: &mut SymbolicGame,
    cert: &WinningCert,
) -> std::result::Result<VerifyReport, VerifyError> {
    let w = cert.w;
    let out = g.mgr.diff(g.init, w)?;
    if !out.is_false() {
        let x = g.x.clone();
        let state = g
            .mgr
            .pick_cube(out, &x, CubePolicy::PreferLow)
            .expect("non-empty");
        return Err(VerifyError::InitialLosing { state });
    }
    let wp = primed(g, w)?;
    let nwp = g.mgr.not(wp)?;
    let yu = g.yu.clone();
    let yc = g.yc.clone();
    // Environment moves from W stay in W.
    let env_w = g.mgr.and_all([w, g.delta_u, nwp])?;
    let q = g.cube_xp;
    let env_w = g.mgr.exists(env_w, q)?;
    violation(g, "environment leaves the winning region", env_w, &yu)?;
    for (i, &rho) in cert.rho.iter().enumerate() {
        // Strategy moves are legal, defined everywhere on controller states
        // of W, and stay in W.
        let ctrl_w = g.mgr.and(w, g.turn)?;
        let legal = g.mgr.exists(g.delta_c, q)?;
        let illegal = g.mgr.diff(rho, legal)?;
        violation(
            g,
            &format!("goal {i}: strategy move not in δc"),
            illegal,
            &yc,
        )?;
        let qc = g.cube_yc;
        let defined = g.mgr.exists(rho, qc)?;
        let undefined = g.mgr.diff(ctrl_w, defined)?;
        violation(g, &format!("goal {i}: no strategy move"), undefined, &[])?;
        let leave = g.mgr.and_all([ctrl_w, rho, g.delta_c, nwp])?;
        let leave = g.mgr.exists(leave, q)?;
        violation(
            g,
            &format!("goal {i}: strategy leaves the winning region"),
            leave,
            &yc,
        )?;
        // Progress: from ring k (outside the goal), each strategy move lands
        // in ring k - 1; environment moves land in ring k - 1 or, violating
        // fairness j, stay in the layer.
        let yl = &cert.y_rings[i];
        let goal = g.goals[i];
        for k in 1..yl.len() {
            let lower = primed(g, yl[k - 1])?;
            let nlower = g.mgr.not(lower)?;
            let ring = g.mgr.diff(yl[k], yl[k - 1])?;
            let ring = g.mgr.diff(ring, goal)?;
            let stall = g.mgr.and_all([ring, g.turn, rho, g.delta_c, nlower])?;
            let stall = g.mgr.exists(stall, q)?;
            violation(
                g,
                &format!("goal {i}: strategy move does not descend from ring {k}"),
                stall,
                &yc,
            )?;
            let nt = g.mgr.not(g.turn)?;
            let env_ring = g.mgr.and(ring, nt)?;
            let mut covered = g.mgr.constant(false);
            for (j, &layer) in cert.x_rings[i][k - 1].iter().enumerate() {
                let here = g.mgr.and(env_ring, layer)?;
                let lp = primed(g, layer)?;
                let nphi = g.mgr.not(g.fairness[j])?;
                let wait = g.mgr.and(nphi, lp)?;
                let ok = g.mgr.or(lower, wait)?;
                let nok = g.mgr.not(ok)?;
                let bad = g.mgr.and_all([here, g.delta_u, nok])?;
                let bad = g.mgr.exists(bad, q)?;
                violation(
                    g,
                    &format!("goal {i}: environment escapes layer {j} of ring {k}"),
                    bad,
                    &yu,
                )?;
                covered = g.mgr.or(covered, here)?;
            }
            let uncovered = g.mgr.diff(env_ring, covered)?;
            violation(
                g,
                &format!("goal {i}: ring {k} state in no layer"),
                uncovered,
                &[],
            )?;
        }
        let top = *yl.last().expect("non-empty");
        let missing = g.mgr.diff(w, top)?;
        violation(
            g,
            &format!("goal {i}: winning state outside the rings"),
            missing,
            &[],
        )?;
    }
    Ok(VerifyReport {
        goals: cert.rho.len(),
        rings: cert.y_rings.iter().map(|r| r.len() - 1).collect(),
    })
}

/// Nesting of certificate BDDs inside a [`CertDump`]: leaves index the
/// snapshot roots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shape {
    Leaf(usize),
    List(Vec<Shape>),
}

trait Nested: Sized {
    fn flatten(&self, out: &mut Vec<NodeRef>) -> Shape;
    fn rebuild(shape: &Shape, refs: &[NodeRef]) -> Option<Self>;
}

impl Nested for NodeRef {
    fn flatten(&self, out: &mut Vec<NodeRef>) -> Shape {
        out.push(*self);
        Shape::Leaf(out.len() - 1)
    }

    fn rebuild(shape: &Shape, refs: &[NodeRef]) -> Option<Self> {
        match shape {
            Shape::Leaf(k) => refs.get(*k).copied(),
            Shape::List(_) => None,
        }
    }
}

impl<T: Nested> Nested for Vec<T> {
    fn flatten(&self, out: &mut Vec<NodeRef>) -> Shape {
        Shape::List(self.iter().map(|x| x.flatten(out)).collect())
    }

    fn rebuild(shape: &Shape, refs: &[NodeRef]) -> Option<Self> {
        match shape {
            Shape::List(items) => items.iter().map(|s| T::rebuild(s, refs)).collect(),
            Shape::Leaf(_) => None,
        }
    }
}

/// A solved game's certificate in manager-independent form, for caching.
/// Fields of the certificate are stored in declaration order in `fields`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertDump {
    pub realizable: bool,
    pub fields: Vec<Shape>,
    pub bdds: tslsynth_bdd::Snapshot,
    pub stats: SolveStats,
}

impl Solution {
    pub fn export(&self, g: &SymbolicGame) -> CertDump {
        let mut roots = Vec::new();
        let fields = match &self.verdict {
            Verdict::Realizable(c) => vec![
                c.w.flatten(&mut roots),
                c.rho.flatten(&mut roots),
                c.y_rings.flatten(&mut roots),
                c.x_rings.flatten(&mut roots),
            ],
            Verdict::Unrealizable(c) => vec![
                c.w.flatten(&mut roots),
                c.losing.flatten(&mut roots),
                c.reachable_losing.flatten(&mut roots),
                c.counter_moves.flatten(&mut roots),
                c.strategy.levels.flatten(&mut roots),
                c.strategy.trap.flatten(&mut roots),
                c.strategy.ranks.flatten(&mut roots),
            ],
        };
        CertDump {
            realizable: self.verdict.is_realizable(),
            fields,
            bdds: g.mgr.export(&roots),
            stats: self.stats.clone(),
        }
    }
}

impl CertDump {
    /// Rebuilds the certificate in `g`'s manager, which must use the
    /// variable order the dump was made with.
    pub fn load(&self, g: &mut SymbolicGame) -> std::result::Result<Solution, BddError> {
        let refs = g.mgr.import(&self.bdds)?;
        let bad = || BddError::Snapshot("certificate layout".into());
        let f = |k: usize| self.fields.get(k).ok_or_else(bad);
        let verdict = if self.realizable {
            Verdict::Realizable(WinningCert {
                w: Nested::rebuild(f(0)?, &refs).ok_or_else(bad)?,
                rho: Nested::rebuild(f(1)?, &refs).ok_or_else(bad)?,
                y_rings: Nested::rebuild(f(2)?, &refs).ok_or_else(bad)?,
                x_rings: Nested::rebuild(f(3)?, &refs).ok_or_else(bad)?,
            })
        } else {
            Verdict::Unrealizable(SpoilingCert {
                w: Nested::rebuild(f(0)?, &refs).ok_or_else(bad)?,
                losing: Nested::rebuild(f(1)?, &refs).ok_or_else(bad)?,
                reachable_losing: Nested::rebuild(f(2)?, &refs).ok_or_else(bad)?,
                counter_moves: Nested::rebuild(f(3)?, &refs).ok_or_else(bad)?,
                strategy: CounterStrategy {
                    levels: Nested::rebuild(f(4)?, &refs).ok_or_else(bad)?,
                    trap: Nested::rebuild(f(5)?, &refs).ok_or_else(bad)?,
                    ranks: Nested::rebuild(f(6)?, &refs).ok_or_else(bad)?,
                },
            })
        };
        Ok(Solution {
            verdict,
            stats: self.stats.clone(),
        })
    }
}
