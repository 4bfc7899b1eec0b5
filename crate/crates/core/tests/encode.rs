use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tslsynth::cfa::{build_cfas, Cfas, Instr, LocKind};
use tslsynth::encode::{encode, Action, Encoding, DEFAULT_NODE_LIMIT};
use tslsynth::frontend::{compile, SourceSpec, Type};
use tslsynth::game::GameDump;
use tslsynth::interp::{random_value, FixedChoices, Interp, ProgState};
use tslsynth::model::SpecModel;
use tslsynth_bdd::NodeRef;

const JUKEBOX: &str = include_str!("data/jukebox.tsl");

const TWO_PROCS: &str = "
template main
  typedef enum { a, b, c } mode_t;
  mode_t m;
  uint4 n = 3;
  uint3 k;
  bool flag;
  process left {
    forever {
      if (*) { m = *; } else { n[2:1] = k[1:0]; };
      if (flag) { ctl_wait(); };
      pause;
      assert(n != 15);
    };
  };
  process right {
    forever {
      k = *;
      if (k > n) { flag = !flag; n = k; } else { done(); };
      pause;
    };
  };
  task void ctl_wait() { ...; n = 1; };
  task void done() { ...; };
  task controllable void set(mode_t v, uint3 w) {
    assert(m != v || w < 6);
    m = v;
    k = w;
  };
  task controllable void bump() { n = n[2:0]; flag = false; };
  goal g = (m == a && flag);
endtemplate";

fn setup(text: &str) -> (SpecModel, Cfas) {
    let m = compile(&SourceSpec::single("t.tsl", text)).unwrap();
    let c = build_cfas(&m).unwrap();
    (m, c)
}

fn assignment(n: u32, lits: &[(u32, bool)]) -> Vec<bool> {
    let mut a = vec![false; n as usize];
    for &(i, v) in lits {
        a[i as usize] = v;
    }
    a
}

fn holds(enc: &Encoding, f: NodeRef, lits: &[(u32, bool)]) -> bool {
    let a = assignment(enc.map.num_vars(), lits);
    enc.game.mgr.eval(f, |i| a[i as usize])
}

fn random_state(m: &SpecModel, c: &Cfas, rng: &mut ChaCha8Rng) -> ProgState {
    ProgState {
        vars: m.vars.iter().map(|v| random_value(rng, &v.ty)).collect(),
        pcs: c
            .procs
            .iter()
            .map(|p| rng.gen_range(0..p.locations.len()))
            .collect(),
        err: rng.gen_bool(0.05),
    }
}

/// Number of successors of `rel` once `lits` fix everything but `X'`.
fn successors(enc: &mut Encoding, rel: NodeRef, lits: &[(u32, bool)]) -> u128 {
    let r = enc.game.mgr.restrict(rel, lits).unwrap();
    enc.game.mgr.sat_count(r, &enc.game.xp)
}

fn check_env_steps(text: &str, n: usize, seed: u64) {
    let (m, c) = setup(text);
    let mut enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let interp = Interp::new(&m, &c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let du = enc.game.delta_u;
    for _ in 0..n {
        let s = random_state(&m, &c, &mut rng);
        let p = rng.gen_range(0..c.procs.len());
        let mut choices = BTreeMap::new();
        for (id, ty) in c.procs[p].program.choices.iter().enumerate() {
            choices.insert(id, random_value(&mut rng, ty));
        }
        let mut lits = enc.map.state_lits(&s);
        lits.extend(enc.map.env_lits(&c, &s, p, &choices));
        if interp.is_turn(&s) {
            assert_eq!(successors(&mut enc, du, &lits), 0, "{s:?}");
            continue;
        }
        let next = interp.env_step(&s, p, &mut FixedChoices(choices), None);
        let mut full = lits.clone();
        full.extend(enc.map.next_lits(&next));
        assert!(holds(&enc, du, &full), "{s:?} p={p} -> {next:?}");
        assert_eq!(successors(&mut enc, du, &lits), 1, "{s:?}");
    }
}

fn check_ctrl_steps(text: &str, n: usize, seed: u64) {
    let (m, c) = setup(text);
    let mut enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let interp = Interp::new(&m, &c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dc = enc.game.delta_c;
    let mut checked = 0;
    while checked < n {
        let mut s = random_state(&m, &c, &mut rng);
        // Put one process into a magic block most of the time.
        let p = rng.gen_range(0..c.procs.len());
        let magic: Vec<usize> = (0..c.procs[p].locations.len())
            .filter(|&l| c.procs[p].is_magic(l))
            .collect();
        if !magic.is_empty() && rng.gen_bool(0.9) {
            for (q, pc) in s.pcs.iter_mut().enumerate() {
                if c.procs[q].is_magic(*pc) {
                    *pc = 0;
                }
            }
            s.pcs[p] = magic[rng.gen_range(0..magic.len())];
        }
        let k = rng.gen_range(0..enc.map.actions.len());
        let args: Vec<u64> = match enc.map.actions[k] {
            Action::Call(t) => m.tasks[t]
                .params
                .iter()
                .map(|p| random_value(&mut rng, &p.ty))
                .collect(),
            Action::Exit(_) => Vec::new(),
        };
        let mut lits = enc.map.state_lits(&s);
        lits.extend(enc.map.ctrl_lits(k, &args, &m));
        let next = if !interp.is_turn(&s) {
            None
        } else {
            match enc.map.actions[k] {
                Action::Call(t) => Some(interp.ctrl_call(&s, t, &args, None)),
                Action::Exit(q) if c.procs[q].is_magic(s.pcs[q]) => {
                    Some(interp.ctrl_exit(&s, q, None))
                }
                Action::Exit(_) => None,
            }
        };
        match next {
            None => assert_eq!(successors(&mut enc, dc, &lits), 0, "{s:?} action {k}"),
            Some(next) => {
                let mut full = lits.clone();
                full.extend(enc.map.next_lits(&next));
                assert!(
                    holds(&enc, dc, &full),
                    "{s:?} action {k} {args:?} -> {next:?}"
                );
                assert_eq!(successors(&mut enc, dc, &lits), 1);
            }
        }
        checked += 1;
    }
}

#[test]
fn environment_moves_agree_with_interpreter() {
    check_env_steps(JUKEBOX, 4000, 1);
    check_env_steps(TWO_PROCS, 4000, 2);
}

#[test]
fn controller_moves_agree_with_interpreter() {
    check_ctrl_steps(JUKEBOX, 1000, 3);
    check_ctrl_steps(TWO_PROCS, 1000, 4);
}

#[test]
fn jukebox_bit_counts() {
    let (m, c) = setup(JUKEBOX);
    let enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    // state_t (5 values) 3 + have_selection 1 + selection 8 + arm_down 1 + position 8
    assert_eq!(enc.map.data_bits(), 21);
    let locs = c.procs[0].locations.len() as u32;
    let pc_bits = 32 - (locs - 1).leading_zeros();
    assert_eq!(enc.map.pcs[0].width, pc_bits);
    assert_eq!(enc.map.state_bits(), 21 + pc_bits + 1);
    // One process: no scheduler bits. Four commands plus exit.
    assert!(enc.map.sched.is_empty());
    assert_eq!(enc.map.actions.len(), 5);
    assert_eq!(enc.map.action.len(), 3);
    assert_eq!(enc.map.args.len(), 8);
}

#[test]
fn small_variable_widths() {
    let (m, c) = setup("template main bool b; process p { pause; }; endtemplate");
    assert_eq!(
        encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap().map.data_bits(),
        1
    );
    let (m, c) =
        setup("template main typedef enum { x, y } t; t v; process p { pause; }; endtemplate");
    assert_eq!(
        encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap().map.data_bits(),
        1
    );
}

fn state_of(m: &SpecModel, vals: &[(&str, u64)], pcs: Vec<usize>) -> ProgState {
    let mut vars = vec![0; m.vars.len()];
    for (name, v) in vals {
        vars[m.var_by_name(name).unwrap()] = *v;
    }
    ProgState {
        vars,
        pcs,
        err: false,
    }
}

fn literal(m: &SpecModel, var: &str, lit: &str) -> u64 {
    let ty = &m.vars[m.var_by_name(var).unwrap()].ty;
    (0..ty.cardinality())
        .find(|&v| m.enum_literal(ty, v).as_deref() == Some(lit))
        .unwrap()
}

#[test]
fn spinning_drum_completes_into_rotated_callback() {
    let (m, c) = setup(JUKEBOX);
    let mut enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let pause = c.procs[0]
        .locations
        .iter()
        .find(|l| l.kind == LocKind::Pause)
        .unwrap()
        .id;
    let spin = literal(&m, "jb.state", "spin");
    let idle = literal(&m, "jb.state", "idle");
    let s = state_of(
        &m,
        &[("jb.state", spin), ("jb.have_selection", 1)],
        vec![pause],
    );
    let mut lits = enc.map.state_lits(&s);
    lits.extend(enc.map.env_lits(&c, &s, 0, &BTreeMap::new()));
    let du = enc.game.delta_u;
    let img = enc.game.mgr.restrict(du, &lits).unwrap();
    let cube = enc
        .game
        .mgr
        .pick_cube(img, &enc.game.xp, tslsynth_bdd::CubePolicy::PreferLow)
        .unwrap();
    let val: BTreeMap<u32, bool> = enc.game.xp.iter().copied().zip(cube).collect();
    let next = enc.map.decode_next(|i| val[&i]);
    assert_eq!(next.vars[m.var_by_name("jb.state").unwrap()], idle);
    let rotated = m
        .magic_sites
        .iter()
        .find(|s| s.task.map(|t| m.tasks[t].name.as_str()) == Some("ctl.evt_rotated"));
    let site = rotated.unwrap().id;
    assert_eq!(c.procs[0].locations[next.pcs[0]].kind, LocKind::Magic(site));
    assert_eq!(successors(&mut enc, du, &lits), 1);
}

#[test]
fn play_on_wrong_record_fails_assertion() {
    let (m, c) = setup(JUKEBOX);
    let enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let magic = (0..c.procs[0].locations.len())
        .find(|&l| c.procs[0].is_magic(l))
        .unwrap();
    let s = state_of(
        &m,
        &[
            ("jb.arm_down", 1),
            ("jb.have_selection", 1),
            ("jb.position", 4),
            ("jb.selection", 5),
        ],
        vec![magic],
    );
    let play = m.task_by_name("jb.cmd_play").unwrap();
    let k = enc.map.action_index(Action::Call(play)).unwrap();
    let mut bad = s.clone();
    bad.err = true;
    let mut lits = enc.map.state_lits(&s);
    lits.extend(enc.map.ctrl_lits(k, &[], &m));
    lits.extend(enc.map.next_lits(&bad));
    assert!(holds(&enc, enc.game.delta_c, &lits));
}

#[test]
fn idle_process_keeps_data() {
    let (m, c) =
        setup("template main uint8 x; bool b; process p { forever { pause; }; }; endtemplate");
    let mut enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let g = &mut enc.game;
    let mut same = g.mgr.constant(true);
    for v in &enc.map.vars {
        for (&a, &b) in v.cur.iter().zip(&v.next) {
            let (x, y) = (g.mgr.var(a).unwrap(), g.mgr.var(b).unwrap());
            let e = g.mgr.iff(x, y).unwrap();
            same = g.mgr.and(same, e).unwrap();
        }
    }
    assert!(g.mgr.leq(g.delta_u, same).unwrap());
}

#[test]
fn goal_and_fairness_shape() {
    let (m, c) = setup(JUKEBOX);
    let mut enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    assert_eq!(enc.game.goal_names, ["ctl.play_selection"]);
    assert_eq!(enc.game.fairness.len(), 1);
    // have_selection == false, outside errors and controller turns.
    let g = &mut enc.game;
    let hs = enc.map.vars[m.var_by_name("jb.have_selection").unwrap()].cur[0];
    let nhs = g.mgr.nvar(hs).unwrap();
    let ne = g.mgr.not(g.error).unwrap();
    let nt = g.mgr.not(g.turn).unwrap();
    let want = g.mgr.and_all([nhs, ne, nt]).unwrap();
    assert_eq!(g.goals[0], want);

    let (m, c) = setup("template main bool b; process p { forever { pause; }; }; endtemplate");
    let mut enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let g = &mut enc.game;
    let ne = g.mgr.not(g.error).unwrap();
    let nt = g.mgr.not(g.turn).unwrap();
    let want = g.mgr.and(ne, nt).unwrap();
    assert_eq!(g.goals, [want]);
}

fn check_structure(text: &str) {
    let (m, c) = setup(text);
    let mut enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let g = &mut enc.game;
    let mgr = &mut g.mgr;
    // Ownership and totality.
    let yu_xp = mgr.and(g.cube_yu, g.cube_xp).unwrap();
    let yc_xp = mgr.and(g.cube_yc, g.cube_xp).unwrap();
    let env_has = mgr.exists(g.delta_u, yu_xp).unwrap();
    let ctrl_has = mgr.exists(g.delta_c, yc_xp).unwrap();
    let nt = mgr.not(g.turn).unwrap();
    assert_eq!(env_has, nt);
    assert_eq!(ctrl_has, g.turn);
    // Error states are absorbing.
    let from_err = mgr.and(g.delta_u, g.error).unwrap();
    let img = mgr.exists(from_err, g.cube_x).unwrap();
    let img = mgr.exists(img, g.cube_yu).unwrap();
    let img = mgr.swap_prime(img).unwrap();
    assert!(mgr.leq(img, g.error).unwrap());
    let dc_err = mgr.and(g.delta_c, g.error).unwrap();
    assert!(dc_err.is_false());
    // Frame: variables not written on a segment keep their value.
    for (p, cfa) in c.procs.iter().enumerate() {
        for loc in &cfa.locations {
            let seg = &cfa.segments[loc.id];
            let written: Vec<usize> = seg
                .instrs
                .iter()
                .filter_map(|&i| match &cfa.program.instrs[i] {
                    Instr::Assign { var, .. } => Some(*var),
                    _ => None,
                })
                .collect();
            let at = mgr
                .cube_lits(
                    &enc.map.pcs[p]
                        .cur
                        .iter()
                        .enumerate()
                        .map(|(b, &i)| (i, (loc.id >> b) & 1 == 1))
                        .collect::<Vec<_>>(),
                )
                .unwrap();
            let rel = if cfa.is_magic(loc.id) {
                g.delta_c
            } else {
                g.delta_u
            };
            let sched: Vec<(u32, bool)> = enc
                .map
                .sched
                .iter()
                .enumerate()
                .map(|(b, &i)| (i, (p >> b) & 1 == 1))
                .collect();
            let sel = mgr.cube_lits(&sched).unwrap();
            let mut t = mgr.and(rel, at).unwrap();
            if !cfa.is_magic(loc.id) {
                t = mgr.and(t, sel).unwrap();
            }
            for (k, v) in enc.map.vars.iter().enumerate() {
                if written.contains(&k) {
                    continue;
                }
                for (&a, &b) in v.cur.iter().zip(&v.next) {
                    let (x, y) = (mgr.var(a).unwrap(), mgr.var(b).unwrap());
                    let differ = mgr.xor(x, y).unwrap();
                    let on_exit = if cfa.is_magic(loc.id) {
                        // Exit moves only; calls may write anything.
                        let exit = enc.map.action_index(Action::Exit(p)).unwrap();
                        let lits: Vec<(u32, bool)> = enc
                            .map
                            .action
                            .iter()
                            .enumerate()
                            .map(|(bit, &i)| (i, (exit >> bit) & 1 == 1))
                            .collect();
                        mgr.cube_lits(&lits).unwrap()
                    } else {
                        mgr.constant(true)
                    };
                    let bad = mgr.and_all([t, differ, on_exit]).unwrap();
                    assert!(
                        bad.is_false(),
                        "{} changes on segment from {}",
                        v.name,
                        loc.id
                    );
                }
            }
        }
    }
}

#[test]
fn ownership_totality_absorption_and_frame() {
    check_structure(JUKEBOX);
    check_structure(TWO_PROCS);
}

#[test]
fn dump_round_trips_through_json() {
    let (m, c) = setup(TWO_PROCS);
    let enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let text = serde_json::to_string(&enc.game.dump()).unwrap();
    let dump: GameDump = serde_json::from_str(&text).unwrap();
    let g2 = dump.load(DEFAULT_NODE_LIMIT).unwrap();
    let g = &enc.game;
    let pairs = [
        (g.init, g2.init),
        (g.turn, g2.turn),
        (g.error, g2.error),
        (g.delta_u, g2.delta_u),
        (g.delta_c, g2.delta_c),
    ];
    for (a, b) in pairs {
        assert_eq!(g.mgr.node_count(a), g2.mgr.node_count(b));
        assert_eq!(g.mgr.sat_count(a, &all(g)), g2.mgr.sat_count(b, &all(&g2)));
    }
    assert_eq!(g.goal_names, g2.goal_names);
    let json = enc.dump_json();
    assert_eq!(json["stats"]["data_bits"], 4 + 3 + 2 + 1);
}

fn all(g: &tslsynth::game::SymbolicGame) -> Vec<u32> {
    (0..g.var_names.len() as u32).collect()
}

#[test]
fn enum_choices_stay_in_range() {
    let (m, c) = setup(TWO_PROCS);
    let mut enc = encode(&m, &c, DEFAULT_NODE_LIMIT).unwrap();
    let g = &mut enc.game;
    let mv = &enc.map.vars[m.var_by_name("m").unwrap()];
    let valid = {
        let hi = g.mgr.var(mv.next[1]).unwrap();
        let lo = g.mgr.var(mv.next[0]).unwrap();
        let both = g.mgr.and(hi, lo).unwrap();
        g.mgr.not(both).unwrap()
    };
    let cur_valid = g.mgr.swap_prime(valid).unwrap();
    let from_valid = g.mgr.and(g.delta_u, cur_valid).unwrap();
    assert!(g.mgr.leq(from_valid, valid).unwrap());
    assert!(matches!(
        m.vars[m.var_by_name("m").unwrap()].ty,
        Type::Enum { size: 3, .. }
    ));
}
