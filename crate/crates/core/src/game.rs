//! Symbolic GR(1) games over bit-blasted variables.

use serde::{Deserialize, Serialize};
use tslsynth_bdd::{Manager, NodeRef, Result, Snapshot};

/// `⟨X, I, Yc, Yu, δc, δu, Γ, Φ⟩` with an explicit turn predicate: the
/// controller moves in states satisfying `turn`, the environment elsewhere.
///
/// * `delta_u` ranges over `X, Yu, X'`, `delta_c` over `X, Yc, X'`.
/// * Goals range over `X`, fairness conditions over `X, Yu`.
#[derive(Clone)]
pub struct SymbolicGame {
    pub mgr: Manager,
    pub x: Vec<u32>,
    pub xp: Vec<u32>,
    pub yu: Vec<u32>,
    pub yc: Vec<u32>,
    pub init: NodeRef,
    pub turn: NodeRef,
    /// States in which an assertion has failed.
    pub error: NodeRef,
    pub delta_u: NodeRef,
    pub delta_c: NodeRef,
    pub goals: Vec<NodeRef>,
    pub fairness: Vec<NodeRef>,
    pub goal_names: Vec<String>,
    pub fairness_names: Vec<String>,
    pub var_names: Vec<String>,
    pub cube_x: NodeRef,
    pub cube_xp: NodeRef,
    pub cube_yu: NodeRef,
    pub cube_yc: NodeRef,
    /// Extra BDDs kept alive by garbage collection (held by callers across
    /// solver runs).
    pub pinned: Vec<NodeRef>,
}

/// Variables of a game before its relations are built.
pub struct GameVars {
    pub x: Vec<u32>,
    pub xp: Vec<u32>,
    pub yu: Vec<u32>,
    pub yc: Vec<u32>,
    pub names: Vec<String>,
}

impl SymbolicGame {
    /// A manager sized for `vars` with the prime pairing registered.
    pub fn manager_for(vars: &GameVars, node_limit: usize) -> Result<Manager> {
        let n = vars.names.len() as u32;
        let mut mgr = Manager::with_node_limit(n, node_limit);
        let pairs: Vec<(u32, u32)> = vars
            .x
            .iter()
            .copied()
            .zip(vars.xp.iter().copied())
            .collect();
        mgr.set_prime_pairs(&pairs)?;
        Ok(mgr)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mut mgr: Manager,
        vars: GameVars,
        init: NodeRef,
        turn: NodeRef,
        error: NodeRef,
        delta_u: NodeRef,
        delta_c: NodeRef,
        goals: Vec<(String, NodeRef)>,
        fairness: Vec<(String, NodeRef)>,
    ) -> Result<SymbolicGame> {
        let cube_x = mgr.cube(&vars.x)?;
        let cube_xp = mgr.cube(&vars.xp)?;
        let cube_yu = mgr.cube(&vars.yu)?;
        let cube_yc = mgr.cube(&vars.yc)?;
        let (goal_names, goals) = goals.into_iter().unzip();
        let (fairness_names, fairness) = fairness.into_iter().unzip();
        Ok(SymbolicGame {
            mgr,
            x: vars.x,
            xp: vars.xp,
            yu: vars.yu,
            yc: vars.yc,
            init,
            turn,
            error,
            delta_u,
            delta_c,
            goals,
            fairness,
            goal_names,
            fairness_names,
            var_names: vars.names,
            cube_x,
            cube_xp,
            cube_yu,
            cube_yc,
            pinned: Vec::new(),
        })
    }

    /// Renames `X` to `X'` (and back; the map is an involution).
    pub fn prime(&mut self, f: NodeRef) -> Result<NodeRef> {
        self.mgr.swap_prime(f)
    }

    /// Every BDD the game itself owns.
    pub fn roots(&self) -> Vec<NodeRef> {
        let mut r = vec![
            self.init,
            self.turn,
            self.error,
            self.delta_u,
            self.delta_c,
            self.cube_x,
            self.cube_xp,
            self.cube_yu,
            self.cube_yc,
        ];
        r.extend(&self.goals);
        r.extend(&self.fairness);
        r.extend(&self.pinned);
        r
    }

    /// Collects garbage if the manager asks for it, keeping the game's own
    /// BDDs and everything in `live`.
    pub fn maybe_collect(&mut self, live: impl FnOnce() -> Vec<NodeRef>) {
        if self.mgr.should_collect() {
            let mut roots = self.roots();
            roots.extend(live());
            self.mgr.collect_garbage(&roots);
        }
    }

    /// Serialisable form of the whole game.
    pub fn dump(&self) -> GameDump {
        let mut roots = vec![self.init, self.turn, self.error, self.delta_u, self.delta_c];
        roots.extend(&self.goals);
        roots.extend(&self.fairness);
        GameDump {
            var_names: self.var_names.clone(),
            x: self.x.clone(),
            xp: self.xp.clone(),
            yu: self.yu.clone(),
            yc: self.yc.clone(),
            goal_names: self.goal_names.clone(),
            fairness_names: self.fairness_names.clone(),
            bdds: self.mgr.export(&roots),
        }
    }
}

/// JSON-friendly dump of a [`SymbolicGame`]. Roots are, in order: init,
/// turn, error, δu, δc, goals, fairness conditions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameDump {
    pub var_names: Vec<String>,
    pub x: Vec<u32>,
    pub xp: Vec<u32>,
    pub yu: Vec<u32>,
    pub yc: Vec<u32>,
    pub goal_names: Vec<String>,
    pub fairness_names: Vec<String>,
    pub bdds: Snapshot,
}

impl GameDump {
    pub fn load(&self, node_limit: usize) -> Result<SymbolicGame> {
        let vars = GameVars {
            x: self.x.clone(),
            xp: self.xp.clone(),
            yu: self.yu.clone(),
            yc: self.yc.clone(),
            names: self.var_names.clone(),
        };
        let mut mgr = SymbolicGame::manager_for(&vars, node_limit)?;
        let roots = mgr.import(&self.bdds)?;
        let ng = self.goal_names.len();
        let goals = self
            .goal_names
            .iter()
            .cloned()
            .zip(roots[5..5 + ng].iter().copied())
            .collect();
        let fairness = self
            .fairness_names
            .iter()
            .cloned()
            .zip(roots[5 + ng..].iter().copied())
            .collect();
        SymbolicGame::new(
            mgr, vars, roots[0], roots[1], roots[2], roots[3], roots[4], goals, fairness,
        )
    }
}
