//! Partitioning the states entering a magic block by a common winning
//! action and turning the partition into an `if`/`else` statement.

use std::cmp::Reverse;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use tslsynth_bdd::{CubePolicy, Manager, NodeRef};

use super::partial::{Fill, Origin, Segment};
use super::reach::{action_is, check_winning, simulate_reachable, WinCheck};
use super::{analyze, Analysis, CodegenError, GameOptions, PartialImpl, Result, SiteRef};
use crate::encode::{Action, Encoding};
use crate::frontend::flatten::Ctx;
use crate::frontend::{compile_condition, Type};
use crate::model::{SiteId, SpecModel, TaskId, VarId};
use crate::solver::Verdict;

/// How a call argument is computed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgBinding {
    /// The current value of a program variable.
    Var(VarId),
    Lit(u64),
}

/// A controllable call with symbolic arguments, or an `exit`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSpec {
    pub action: Action,
    pub args: Vec<ArgBinding>,
}

/// One block of a partition: states over `X` sharing the call.
#[derive(Clone, Debug)]
pub struct Part {
    pub set: NodeRef,
    pub call: CallSpec,
    pub states: u128,
    /// Candidate rank: action index, then argument options.
    order: (usize, Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    /// `None` for a final `else`.
    pub condition: Option<String>,
    /// `None` when the branch leaves the block without a call.
    pub call: Option<String>,
    /// Entering states handled by this branch.
    pub states: u128,
}

/// A statement generated for one magic block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodePatch {
    pub site: SiteRef,
    /// Block content the statement is appended to.
    pub base: Fill,
    /// Pretty-printed statement; empty when every state leaves the block.
    pub text: String,
    /// The block is complete after this statement.
    pub closes: bool,
    pub branches: Vec<Branch>,
    /// Number of states entering the block.
    pub reachable_states: u128,
}

struct Candidate {
    call: CallSpec,
    /// `(X, Yc)` predicate selecting the call's action and arguments.
    m: NodeRef,
    order: (usize, Vec<usize>),
}

fn site_ctx(an: &Analysis, site: SiteId) -> Ctx {
    let s = &an.compiled.model.magic_sites[site];
    Ctx {
        inst: s.instance,
        task: s.task,
        process: s.process,
    }
}

/// Variables nameable from `ctx`, with their names.
fn visible_vars(an: &Analysis, ctx: &Ctx) -> Vec<(VarId, String)> {
    let m = &an.compiled.model;
    (0..m.vars.len())
        .filter_map(|v| {
            let name = m.local_var_name(ctx.inst, v);
            compile_condition(m, ctx, &format!("{name} == {name}"))
                .ok()
                .map(|_| (v, name))
        })
        .collect()
}

/// Candidate calls used by the strategy on `rem`, in discovery order.
fn candidates(
    an: &mut Analysis,
    rho: NodeRef,
    rem: NodeRef,
    vars: &[(VarId, String)],
) -> Result<Vec<Candidate>> {
    let model = &an.compiled.model;
    let enc = &mut an.enc;
    let avail = enc.game.mgr.and(rho, rem)?;
    let mut out = Vec::new();
    for (k, action) in enc.map.actions.clone().into_iter().enumerate() {
        let ak = action_is(enc, k)?;
        let ck = enc.game.mgr.and(avail, ak)?;
        if ck.is_false() {
            continue;
        }
        let params: Vec<Type> = match action {
            Action::Call(t) => model.tasks[t].params.iter().map(|p| p.ty.clone()).collect(),
            Action::Exit(_) => Vec::new(),
        };
        // Options per parameter: same-typed variables, then one literal.
        let mut options: Vec<Vec<ArgBinding>> = Vec::new();
        let mut off = 0usize;
        for ty in &params {
            let w = ty.width() as usize;
            let idx: Vec<u32> = enc.map.args[off..off + w].to_vec();
            let mut opts: Vec<ArgBinding> = vars
                .iter()
                .filter(|(v, _)| model.vars[*v].ty == *ty)
                .map(|(v, _)| ArgBinding::Var(*v))
                .collect();
            let bits = enc
                .game
                .mgr
                .pick_cube(ck, &idx, CubePolicy::PreferLow)
                .expect("nonempty");
            let lit = bits
                .iter()
                .enumerate()
                .fold(0u64, |a, (b, &x)| a | ((x as u64) << b));
            opts.push(ArgBinding::Lit(lit));
            options.push(opts);
            off += w;
        }
        for choice in product(&options.iter().map(Vec::len).collect::<Vec<_>>(), 256) {
            let args: Vec<ArgBinding> = choice
                .iter()
                .enumerate()
                .map(|(p, &o)| options[p][o].clone())
                .collect();
            let call = CallSpec { action, args };
            let m = call_predicate(model, enc, k, &call)?;
            out.push(Candidate {
                call,
                m,
                order: (k, choice),
            });
        }
    }
    Ok(out)
}

/// Index tuples of a product of ranges, lexicographic, at most `cap`.
fn product(sizes: &[usize], cap: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        let mut next = Vec::new();
        for p in &out {
            for i in 0..n {
                if next.len() >= cap {
                    break;
                }
                let mut q = p.clone();
                q.push(i);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// `action == k` with each argument equal to its binding and unused
/// argument bits zero.
fn call_predicate(
    model: &SpecModel,
    enc: &mut Encoding,
    k: usize,
    call: &CallSpec,
) -> Result<NodeRef> {
    let mut acc = action_is(enc, k)?;
    let widths: Vec<usize> = match call.action {
        Action::Call(t) => model.tasks[t]
            .params
            .iter()
            .map(|p| p.ty.width() as usize)
            .collect(),
        Action::Exit(_) => Vec::new(),
    };
    let mut off = 0usize;
    for (w, b) in widths.iter().zip(&call.args) {
        for bit in 0..*w {
            let a = enc.map.args[off + bit];
            let lit = match b {
                ArgBinding::Lit(v) => enc.game.mgr.literal(a, (v >> bit) & 1 == 1)?,
                ArgBinding::Var(v) => {
                    let x = enc.map.vars[*v].cur[bit];
                    let av = enc.game.mgr.var(a)?;
                    let xv = enc.game.mgr.var(x)?;
                    enc.game.mgr.iff(av, xv)?
                }
            };
            acc = enc.game.mgr.and(acc, lit)?;
        }
        off += w;
    }
    let rest: Vec<(u32, bool)> = enc.map.args[off..].iter().map(|&i| (i, false)).collect();
    let z = enc.game.mgr.cube_lits(&rest)?;
    Ok(enc.game.mgr.and(acc, z)?)
}

/// Successors over `X` of `states` under the calls selected by `m`.
fn post(an: &mut Analysis, states: NodeRef, m: NodeRef) -> Result<NodeRef> {
    let g = &mut an.enc.game;
    let q = g.mgr.and(g.cube_x, g.cube_yc)?;
    let s = g.mgr.and(states, m)?;
    let n = g.mgr.and_exists(g.delta_c, s, q)?;
    Ok(g.mgr.swap_prime(n)?)
}

/// Greedy partition of `r_l`: repeatedly take the call the strategy uses
/// on the most remaining states, then extend its block by the remaining
/// states from which that call reaches only states it already reaches from
/// the block.
pub fn partition(an: &mut Analysis, site: SiteId, r_l: NodeRef) -> Result<Vec<Part>> {
    let Verdict::Realizable(cert) = &an.solution.verdict else {
        return Err(CodegenError::NotWinning { path: Vec::new() });
    };
    let rho = cert.rho[0];
    let ctx = site_ctx(an, site);
    let vars = visible_vars(an, &ctx);
    let x = an.enc.game.x.clone();
    let mut rem = r_l;
    let mut parts = Vec::new();
    while !rem.is_false() {
        let cands = candidates(an, rho, rem, &vars)?;
        let mut best: Option<(u128, usize, NodeRef)> = None;
        for (i, c) in cands.iter().enumerate() {
            let g = &mut an.enc.game;
            let rc = g.mgr.and(rho, c.m)?;
            let covered = g.mgr.exists(rc, g.cube_yc)?;
            let strict = g.mgr.and(rem, covered)?;
            let n = g.mgr.sat_count(strict, &x);
            if n > 0 && best.is_none_or(|(b, _, _)| n > b) {
                best = Some((n, i, strict));
            }
        }
        let Some((_, i, strict)) = best else {
            return Err(CodegenError::Internal(
                "strategy has no move on reachable states".into(),
            ));
        };
        let c = &cands[i];
        let target = post(an, strict, c.m)?;
        let g = &mut an.enc.game;
        let tp = g.mgr.swap_prime(target)?;
        let q = g.mgr.and(g.cube_yc, g.cube_xp)?;
        let moves = g.mgr.and(g.delta_c, c.m)?;
        let has = g.mgr.exists(moves, q)?;
        let out = g.mgr.not(tp)?;
        let escape = g.mgr.and(moves, out)?;
        let bad = g.mgr.exists(escape, q)?;
        let nb = g.mgr.not(bad)?;
        let ext = g.mgr.and_all([rem, has, nb])?;
        let set = g.mgr.or(strict, ext)?;
        let states = g.mgr.sat_count(set, &x);
        rem = g.mgr.diff(rem, set)?;
        parts.push(Part {
            set,
            call: c.call.clone(),
            states,
            order: c.order.clone(),
        });
    }
    // Calls by decreasing size, then discovery order; exits last.
    parts.sort_by_key(|p| {
        (
            matches!(p.call.action, Action::Exit(_)),
            Reverse(p.states),
            p.order.clone(),
        )
    });
    Ok(parts)
}

/// Candidate condition atoms, most preferred first.
struct Atom {
    text: String,
    /// Negated form, when nicer than `!text`.
    negated: Option<String>,
    bdd: NodeRef,
}

fn atoms(an: &mut Analysis, ctx: &Ctx, vars: &[(VarId, String)]) -> Result<(Vec<Atom>, usize)> {
    let model = an.compiled.model.clone();
    let mut texts: Vec<Vec<(String, Option<String>)>> = vec![Vec::new(); 4];
    for (v, name) in vars {
        let ty = &model.vars[*v].ty;
        match ty {
            Type::Enum { size, .. } => {
                for k in 0..*size as u64 {
                    if let Some(lit) = model.enum_literal(ty, k) {
                        texts[0]
                            .push((format!("{name} == {lit}"), Some(format!("{name} != {lit}"))));
                    }
                }
            }
            Type::Bool => texts[2].push((name.clone(), Some(format!("!{name}")))),
            Type::Uint(1) => texts[3].push((format!("{name} == 1"), Some(format!("{name} == 0")))),
            Type::Uint(w) => {
                for b in 0..*w {
                    texts[3].push((
                        format!("{name}[{b}] == 1"),
                        Some(format!("{name}[{b}] == 0")),
                    ));
                }
            }
        }
    }
    for (i, (v, a)) in vars.iter().enumerate() {
        for (u, b) in &vars[i + 1..] {
            // Boolean variables are tested directly instead.
            if model.vars[*v].ty == model.vars[*u].ty && model.vars[*v].ty != Type::Bool {
                texts[1].push((format!("{a} == {b}"), Some(format!("{a} != {b}"))));
            }
        }
    }
    let mut out = Vec::new();
    let mut fallback_from = 0;
    for (group, list) in texts.into_iter().enumerate() {
        if group == 3 {
            fallback_from = out.len();
        }
        for (text, negated) in list {
            let Ok(e) = compile_condition(&model, ctx, &text) else {
                continue;
            };
            let bdd = an.enc.predicate(&model, &an.compiled.cfas, &e)?;
            out.push(Atom { text, negated, bdd });
        }
    }
    Ok((out, fallback_from))
}

/// Lower and upper bound (in `small`, variable `i` standing for
/// `atoms[i]`) of a condition true on `on` and false on `off`; `None` when
/// the atoms cannot separate them or the search budget runs out.
#[allow(clippy::too_many_arguments)]
fn classify(
    an: &mut Analysis,
    small: &mut Manager,
    atoms: &[NodeRef],
    i: usize,
    on: NodeRef,
    off: NodeRef,
    memo: &mut HashMap<(usize, NodeRef, NodeRef), Option<(NodeRef, NodeRef)>>,
    budget: &mut usize,
) -> Result<Option<(NodeRef, NodeRef)>> {
    let (t, f) = (small.constant(true), small.constant(false));
    if on.is_false() {
        return Ok(Some((f, if off.is_false() { t } else { f })));
    }
    if off.is_false() {
        return Ok(Some((t, t)));
    }
    if i == atoms.len() || *budget == 0 {
        return Ok(None);
    }
    if let Some(r) = memo.get(&(i, on, off)) {
        return Ok(*r);
    }
    *budget -= 1;
    let g = &mut an.enc.game;
    let a = atoms[i];
    let on1 = g.mgr.and(on, a)?;
    let off1 = g.mgr.and(off, a)?;
    let on0 = g.mgr.diff(on, a)?;
    let off0 = g.mgr.diff(off, a)?;
    let r = match classify(an, small, atoms, i + 1, on1, off1, memo, budget)? {
        None => None,
        Some((l1, u1)) => match classify(an, small, atoms, i + 1, on0, off0, memo, budget)? {
            None => None,
            Some((l0, u0)) => {
                let v = small.var(i as u32)?;
                Some((small.ite(v, l1, l0)?, small.ite(v, u1, u0)?))
            }
        },
    };
    memo.insert((i, on, off), r);
    Ok(r)
}

fn separates(
    an: &mut Analysis,
    atoms: &[NodeRef],
    on: NodeRef,
    off: NodeRef,
) -> Result<Option<(Manager, NodeRef, NodeRef)>> {
    let mut small = Manager::new(atoms.len() as u32);
    let mut budget = 200_000;
    let r = classify(
        an,
        &mut small,
        atoms,
        0,
        on,
        off,
        &mut HashMap::new(),
        &mut budget,
    )?;
    Ok(r.map(|(l, u)| (small, l, u)))
}

/// Source text of a condition true on `on` and false on `off`, over the
/// most preferred atoms possible.
fn condition(
    an: &mut Analysis,
    sref: &SiteRef,
    all: &[Atom],
    fallback_from: usize,
    on: NodeRef,
    off: NodeRef,
) -> Result<String> {
    let mut chosen: Vec<usize> = (0..fallback_from).collect();
    let bdds = |c: &[usize]| c.iter().map(|&i| all[i].bdd).collect::<Vec<_>>();
    if separates(an, &bdds(&chosen), on, off)?.is_none() {
        chosen = (0..all.len()).collect();
        if separates(an, &bdds(&chosen), on, off)?.is_none() {
            return Err(CodegenError::Inexpressible {
                site: sref.clone(),
                detail: "control locations or hidden state".into(),
            });
        }
    }
    for k in (0..chosen.len()).rev() {
        let mut fewer = chosen.clone();
        fewer.remove(k);
        if separates(an, &bdds(&fewer), on, off)?.is_some() {
            chosen = fewer;
        }
    }
    let (mut small, l, u) = separates(an, &bdds(&chosen), on, off)?.expect("kept separable");
    let (_, cubes) = small.isop(l, u)?;
    let render = |cube: &Vec<(u32, bool)>| -> Vec<String> {
        let mut lits = cube.clone();
        lits.sort();
        lits.iter()
            .map(|&(v, pos)| {
                let a = &all[chosen[v as usize]];
                match (pos, &a.negated) {
                    (true, _) => a.text.clone(),
                    (false, Some(n)) => n.clone(),
                    (false, None) => format!("!({})", a.text),
                }
            })
            .collect()
    };
    let text = match cubes.len() {
        0 => "false".to_string(),
        1 if cubes[0].is_empty() => "true".to_string(),
        1 => render(&cubes[0]).join(" && "),
        _ => cubes
            .iter()
            .map(|c| {
                let lits = render(c);
                if lits.len() > 1 {
                    format!("({})", lits.join(" && "))
                } else {
                    lits.join("")
                }
            })
            .collect::<Vec<_>>()
            .join(" || "),
    };
    Ok(text)
}

fn call_text(an: &Analysis, ctx: &Ctx, call: &CallSpec) -> Option<String> {
    let m = &an.compiled.model;
    let Action::Call(t) = call.action else {
        return None;
    };
    let args: Vec<String> = m.tasks[t]
        .params
        .iter()
        .zip(&call.args)
        .map(|(p, a)| match a {
            ArgBinding::Var(v) => m.local_var_name(ctx.inst, *v),
            ArgBinding::Lit(x) => m.display_value(&p.ty, *x),
        })
        .collect();
    Some(format!(
        "{}({});",
        m.local_task_name(ctx.inst, t as TaskId),
        args.join(", ")
    ))
}

/// Pretty-prints branches as an `if`/`else if` chain, one level of
/// indentation below `indent`.
fn render_statement(branches: &[Branch], indent: &str) -> String {
    let calls: Vec<&Branch> = branches.iter().filter(|b| b.call.is_some()).collect();
    match calls.as_slice() {
        [] => String::new(),
        [b] if b.condition.is_none() => b.call.clone().unwrap(),
        _ => {
            let mut s = String::new();
            for (i, b) in calls.iter().enumerate() {
                let head = match (&b.condition, i) {
                    (Some(c), 0) => format!("if ({c})"),
                    (Some(c), _) => format!("else if ({c})"),
                    (None, _) => "else".to_string(),
                };
                if i > 0 {
                    s.push('\n');
                    s.push_str(indent);
                }
                s.push_str(&head);
                s.push('\n');
                s.push_str(indent);
                s.push_str("  ");
                s.push_str(b.call.as_deref().unwrap());
            }
            s
        }
    }
}

/// Generates the next statement for the magic block `sref`. Generated
/// code already in the block is discarded and regenerated; user code is
/// kept in front of it.
pub fn generate(imp: &PartialImpl, sref: &SiteRef, opts: &GameOptions) -> Result<CodePatch> {
    let fill = imp.fill(sref);
    let base = fill.without_generated();
    if !base.open {
        return Err(if fill.segments.is_empty() {
            CodegenError::SiteClosed(sref.clone())
        } else {
            CodegenError::ReadOnly(sref.clone())
        });
    }
    let mut work = imp.clone();
    if base != fill {
        work.set_fill(sref, base.clone())?;
    }
    let indent = work.indent_of(sref)?;
    let mut an = analyze(&work, opts)?;
    let sites = an.compiled.sites_of(sref);
    let site = match sites.as_slice() {
        [] => return Err(CodegenError::UnknownSite(sref.to_string())),
        [s] => *s,
        _ => return Err(CodegenError::SharedTemplate(sref.clone())),
    };
    if let WinCheck::Violation { path } = check_winning(&mut an, &[site])? {
        return Err(CodegenError::NotWinning { path });
    }
    let reach = simulate_reachable(&mut an, &[site])?;
    let x = an.enc.game.x.clone();
    let reachable_states = an.enc.game.mgr.sat_count(reach.r_l, &x);
    let parts = partition(&mut an, site, reach.r_l)?;
    let ctx = site_ctx(&an, site);
    let vars = visible_vars(&an, &ctx);
    let (atoms, fallback_from) = atoms(&mut an, &ctx, &vars)?;

    let calls = parts
        .iter()
        .filter(|p| matches!(p.call.action, Action::Call(_)))
        .count();
    let has_exit = calls < parts.len();
    let mut branches = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        let g = &mut an.enc.game;
        let later = g.mgr.or_all(parts[i + 1..].iter().map(|q| q.set))?;
        let last_call = i + 1 == calls && !has_exit;
        let condition = if i >= calls || last_call {
            None
        } else {
            let c = condition(&mut an, sref, &atoms, fallback_from, p.set, later)?;
            check_faithful(&mut an, &ctx, sref, &c, p.set, later)?;
            Some(c)
        };
        branches.push(Branch {
            condition,
            call: call_text(&an, &ctx, &p.call),
            states: p.states,
        });
    }
    let text = render_statement(&branches, &indent);

    // The block is complete when the strategy may leave it after the call.
    let mut after = an.enc.game.mgr.constant(false);
    for (k, p) in parts.iter().enumerate() {
        if let Action::Call(_) = p.call.action {
            let idx = an
                .enc
                .map
                .action_index(p.call.action)
                .expect("candidate action");
            let m = call_predicate(&an.compiled.model, &mut an.enc, idx, &parts[k].call)?;
            let n = post(&mut an, p.set, m)?;
            after = an.enc.game.mgr.or(after, n)?;
        }
    }
    let closes = after.is_false() || {
        let Verdict::Realizable(cert) = &an.solution.verdict else {
            unreachable!()
        };
        let rho = cert.rho[0];
        let exits = super::reach::exit_actions(&mut an.enc)?;
        let g = &mut an.enc.game;
        let ex = g.mgr.and(rho, exits)?;
        let may_exit = g.mgr.exists(ex, g.cube_yc)?;
        g.mgr.leq(after, may_exit)?
    };
    Ok(CodePatch {
        site: sref.clone(),
        base,
        text,
        closes,
        branches,
        reachable_states,
    })
}

/// The condition text, compiled back and encoded, must pick out `on` from
/// `on ∪ off`.
fn check_faithful(
    an: &mut Analysis,
    ctx: &Ctx,
    sref: &SiteRef,
    text: &str,
    on: NodeRef,
    off: NodeRef,
) -> Result<()> {
    let model = &an.compiled.model;
    let e = compile_condition(model, ctx, text)
        .map_err(|e| CodegenError::Internal(format!("generated `{text}`: {}", e.message())))?;
    let f = an.enc.predicate(model, &an.compiled.cfas, &e)?;
    let g = &mut an.enc.game;
    let care = g.mgr.or(on, off)?;
    let got = g.mgr.and(f, care)?;
    if got != on {
        return Err(CodegenError::Internal(format!(
            "condition `{text}` at {sref} is not faithful"
        )));
    }
    Ok(())
}

/// Appends the patch's statement to its block and checks that the
/// implementation stays winning; on failure nothing changes.
pub fn apply_patch(imp: &mut PartialImpl, patch: &CodePatch, opts: &GameOptions) -> Result<()> {
    let cur = imp.fill(&patch.site);
    if !cur.open
        && cur
            .segments
            .last()
            .is_some_and(|s| s.origin == Origin::User)
    {
        return Err(CodegenError::ReadOnly(patch.site.clone()));
    }
    if cur.without_generated() != patch.base {
        return Err(CodegenError::StalePatch(patch.site.clone()));
    }
    let mut fill = patch.base.clone();
    if !patch.text.is_empty() {
        fill.segments.push(Segment {
            origin: Origin::Generated,
            text: patch.text.clone(),
        });
    }
    fill.open = !patch.closes;
    let before = cur;
    imp.set_fill(&patch.site, fill)?;
    let mut an = analyze(imp, opts)?;
    if !an.solution.verdict.is_realizable() {
        let path = match check_winning(&mut an, &[])? {
            WinCheck::Violation { path } => path,
            WinCheck::Ok => Vec::new(),
        };
        imp.set_fill(&patch.site, before)?;
        return Err(CodegenError::NotWinning { path });
    }
    Ok(())
}

/// What to do with a generated statement during guided completion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept,
    /// Replace the block's content by user text (see
    /// [`PartialImpl::edit_site`]).
    Edit(String),
    Stop,
}

/// Fills every open block without user interaction. Blocks no state
/// reaches are postponed while others make progress and finally closed
/// empty.
pub fn auto_complete(imp: &mut PartialImpl, opts: &GameOptions) -> Result<Vec<CodePatch>> {
    complete_with(imp, opts, |_| Decision::Accept)
}

/// Visits open blocks in the order of [`auto_complete`], asking `decide`
/// about each generated statement. Returns the accepted patches; stops
/// early on [`Decision::Stop`].
pub fn complete_with(
    imp: &mut PartialImpl,
    opts: &GameOptions,
    mut decide: impl FnMut(&CodePatch) -> Decision,
) -> Result<Vec<CodePatch>> {
    let mut applied = Vec::new();
    let limit = 64 * imp.site_refs().len().max(1);
    let mut rounds = 0;
    'outer: while rounds < limit {
        rounds += 1;
        let open = imp.compile()?.open_sites();
        if open.is_empty() {
            return Ok(applied);
        }
        let mut postponed = Vec::new();
        for (sref, _) in &open {
            let patch = generate(imp, sref, opts)?;
            if patch.reachable_states == 0 {
                postponed.push(patch);
                continue;
            }
            if !resolve(imp, opts, patch, &mut decide, &mut applied)? {
                return Ok(applied);
            }
            continue 'outer;
        }
        for patch in postponed {
            if !resolve(imp, opts, patch, &mut decide, &mut applied)? {
                return Ok(applied);
            }
        }
    }
    Err(CodegenError::Internal(
        "automatic completion does not terminate".into(),
    ))
}

/// Applies `decide`'s choice for `patch`; `false` means stop.
fn resolve(
    imp: &mut PartialImpl,
    opts: &GameOptions,
    patch: CodePatch,
    decide: &mut impl FnMut(&CodePatch) -> Decision,
    applied: &mut Vec<CodePatch>,
) -> Result<bool> {
    match decide(&patch) {
        Decision::Accept => {
            apply_patch(imp, &patch, opts)?;
            applied.push(patch);
        }
        Decision::Edit(text) => {
            let before = imp.fill(&patch.site);
            imp.edit_site(&patch.site, &text)?;
            let mut an = analyze(imp, opts)?;
            if !an.solution.verdict.is_realizable() {
                let path = match check_winning(&mut an, &[])? {
                    WinCheck::Violation { path } => path,
                    WinCheck::Ok => Vec::new(),
                };
                imp.set_fill(&patch.site, before)?;
                return Err(CodegenError::NotWinning { path });
            }
        }
        Decision::Stop => return Ok(false),
    }
    Ok(true)
}
