//! Shared jukebox workflow: completion of the controller and lockstep
//! simulation against the reference controller.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tslsynth::codegen::{auto_complete, CodePatch, Compiled, GameOptions, PartialImpl, SiteRef};
use tslsynth::frontend::SourceSpec;
use tslsynth::interp::{eval, random_value, Interp, NoChoices, ProgState, RandomChoices};

pub const JUKEBOX: &str = include_str!("../data/jukebox.tsl");
pub const JUKEBOX_BUG: &str = include_str!("../data/jukebox_bug.tsl");
pub const JUKEBOX_FIG1: &str = include_str!("../data/jukebox_fig1.tsl");

pub fn jukebox_impl() -> PartialImpl {
    PartialImpl::new(SourceSpec::single("jukebox.tsl", JUKEBOX)).unwrap()
}

pub fn sref(s: &str) -> SiteRef {
    s.parse().unwrap()
}

/// The documented manual edit followed by automatic completion.
pub fn complete_jukebox() -> (PartialImpl, Vec<CodePatch>) {
    let mut imp = jukebox_impl();
    imp.edit_site(&sref("controller.evt_playback_complete"), "jb.cmd_lift();")
        .unwrap();
    let patches = auto_complete(&mut imp, &GameOptions::default()).unwrap();
    (imp, patches)
}

pub fn compile_text(text: &str) -> Compiled {
    tslsynth::codegen::compile_source(&SourceSpec::single("ref.tsl", text)).unwrap()
}

#[derive(Debug, Default)]
pub struct LockstepStats {
    pub schedules: usize,
    pub steps: usize,
    pub goal_visits: usize,
    /// Longest stretch of steps without a goal state.
    pub max_goal_gap: usize,
}

/// Random initial state shared by two models with the same variables.
pub fn random_initial(i: &Interp, rng: &mut impl Rng) -> ProgState {
    i.initial_state(|_, ty| random_value(rng, ty))
}

/// Runs `a` and `b` (closed programs over the same variables) side by side
/// under identical random schedules and choices; variables and error flags
/// must agree after every step. Goal visits are counted on `a`.
pub fn lockstep(
    a: &Compiled,
    b: &Compiled,
    schedules: usize,
    steps: usize,
    seed: u64,
) -> Result<LockstepStats, String> {
    let ia = Interp::new(&a.model, &a.cfas);
    let ib = Interp::new(&b.model, &b.cfas);
    if a.model.vars.len() != b.model.vars.len() || a.cfas.procs.len() != b.cfas.procs.len() {
        return Err("models differ in shape".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = LockstepStats::default();
    for run in 0..schedules {
        let mut sa = random_initial(&ia, &mut rng);
        let mut sb = sa.clone();
        sb.pcs = vec![0; b.cfas.procs.len()];
        let mut gap = 0;
        for step in 0..steps {
            if ia.is_turn(&sa) || ib.is_turn(&sb) {
                return Err(format!(
                    "run {run} step {step}: open magic block in a closed program"
                ));
            }
            let p = rng.gen_range(0..a.cfas.procs.len());
            let seed: u64 = rng.gen();
            sa = ia.env_step(
                &sa,
                p,
                &mut RandomChoices(ChaCha8Rng::seed_from_u64(seed)),
                None,
            );
            sb = ib.env_step(
                &sb,
                p,
                &mut RandomChoices(ChaCha8Rng::seed_from_u64(seed)),
                None,
            );
            stats.steps += 1;
            if sa.vars != sb.vars || sa.err != sb.err {
                return Err(format!("run {run} step {step}: {:?} vs {:?}", sa, sb));
            }
            if sa.err {
                return Err(format!("run {run} step {step}: assertion failure"));
            }
            let goal = a
                .model
                .goals
                .iter()
                .all(|g| eval(&g.expr, &sa.vars, &[], &mut NoChoices) != 0);
            if goal {
                stats.goal_visits += 1;
                gap = 0;
            } else {
                gap += 1;
                stats.max_goal_gap = stats.max_goal_gap.max(gap);
            }
        }
        stats.schedules += 1;
    }
    Ok(stats)
}
