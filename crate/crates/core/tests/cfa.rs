use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tslsynth::cfa::{build_cfas, LocKind};
use tslsynth::frontend::ast::BinOp;
use tslsynth::frontend::{compile, SourceSpec, Type};
use tslsynth::interp::{ChoiceSource, Interp};
use tslsynth::model::{MExpr, MExprKind, MStmt, MStmtKind, SpecModel};

const JUKEBOX: &str = include_str!("data/jukebox.tsl");

fn model(text: &str) -> SpecModel {
    compile(&SourceSpec::single("t.tsl", text)).unwrap()
}

#[test]
fn jukebox_initial_segment_reaches_selection_magic_or_pause() {
    let m = model(JUKEBOX);
    let c = build_cfas(&m).unwrap();
    let cfa = &c.procs[0];
    let targets: Vec<(LocKind, u32)> = cfa.segments[0]
        .to
        .iter()
        .map(|&l| (cfa.locations[l].kind, cfa.locations[l].pos.line))
        .collect();
    assert!(targets.contains(&(LocKind::Magic(0), 78)), "{targets:?}");
    assert!(targets.contains(&(LocKind::Pause, 50)), "{targets:?}");
    // The segment may also stop at the completion events' magic blocks.
    for (kind, _) in &targets {
        assert!(matches!(kind, LocKind::Magic(_) | LocKind::Pause));
    }
}

#[test]
fn every_jukebox_site_has_a_location() {
    let m = model(JUKEBOX);
    let c = build_cfas(&m).unwrap();
    for site in &m.magic_sites {
        assert!(!c.site_locations(site.id).is_empty(), "site {}", site.id);
    }
    // evt_parked is called from two places in the process.
    assert_eq!(c.site_locations(2).len(), 2);
}

#[test]
fn two_sequential_pauses_form_a_chain() {
    let m = model("template main process p { pause; pause; } endtemplate");
    let c = build_cfas(&m).unwrap();
    let cfa = &c.procs[0];
    let kinds: Vec<LocKind> = cfa.locations.iter().map(|l| l.kind).collect();
    // Hand enumeration: the start, one location after each pause, and the
    // termination sink.
    assert_eq!(
        kinds,
        [
            LocKind::Initial,
            LocKind::Pause,
            LocKind::Pause,
            LocKind::Final
        ]
    );
    assert_eq!(cfa.segments[0].to, [1]);
    assert_eq!(cfa.segments[1].to, [2]);
    assert_eq!(cfa.segments[2].to, [3]);
    assert!(cfa.segments[3].to.is_empty());
}

#[test]
fn segments_contain_no_pause_or_magic_inside() {
    let m = model(JUKEBOX);
    let c = build_cfas(&m).unwrap();
    for cfa in &c.procs {
        for seg in &cfa.segments {
            for &i in &seg.instrs {
                let stops = cfa.program.successors(i).is_empty();
                if stops {
                    assert!(seg.to.iter().any(|&l| cfa.stop_loc.get(&i) == Some(&l)));
                }
            }
        }
    }
}

// Direct evaluation of statement trees, written independently of the
// compiled instruction form.
struct Tree<'a> {
    m: &'a SpecModel,
    vars: Vec<u64>,
    choices: Vec<u64>,
    next_choice: usize,
    failed: bool,
}

impl Tree<'_> {
    fn value(&mut self, e: &MExpr) -> u64 {
        let w = e.ty.width();
        let m = if w == 64 { u64::MAX } else { (1 << w) - 1 };
        match &e.kind {
            MExprKind::Const(v) => *v,
            MExprKind::Var(v) => self.vars[*v],
            MExprKind::Nondet => {
                let v = self.choices[self.next_choice] & m;
                self.next_choice += 1;
                v
            }
            MExprKind::Not(a) => (self.value(a) == 0) as u64,
            MExprKind::Bin(op, a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                (match op {
                    BinOp::And => x != 0 && y != 0,
                    BinOp::Or => x != 0 || y != 0,
                    BinOp::Eq => x == y,
                    BinOp::Ne => x != y,
                    BinOp::Lt => x < y,
                    BinOp::Le => x <= y,
                    BinOp::Gt => x > y,
                    BinOp::Ge => x >= y,
                }) as u64
            }
            MExprKind::Slice(a, hi, lo) => {
                let n = hi - lo + 1;
                (self.value(a) >> lo) & ((1u64 << n) - 1)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn run(&mut self, stmts: &[MStmt]) {
        for s in stmts {
            if self.failed {
                return;
            }
            match &s.kind {
                MStmtKind::If { cond, then, els } => {
                    if self.value(cond) != 0 {
                        self.run(then);
                    } else {
                        self.run(els);
                    }
                }
                MStmtKind::Block(b) => self.run(b),
                MStmtKind::Assert(c) => {
                    if self.value(c) == 0 {
                        self.failed = true;
                    }
                }
                MStmtKind::Assign { var, slice, rhs } => {
                    let v = self.value(rhs);
                    let w = self.m.vars[*var].ty.width();
                    let full = if w == 64 { u64::MAX } else { (1 << w) - 1 };
                    self.vars[*var] = match slice {
                        None => v & full,
                        Some((hi, lo)) => {
                            let mask = ((1u64 << (hi - lo + 1)) - 1) << lo;
                            (self.vars[*var] & !mask) | ((v << lo) & mask)
                        }
                    };
                }
                other => panic!("not straight-line: {other:?}"),
            }
        }
    }
}

/// Choices in order of evaluation, as consumed by the compiled program.
struct Seq(Vec<u64>, usize);

impl ChoiceSource for Seq {
    fn choose(&mut self, _choice: usize, _ty: &Type) -> u64 {
        self.1 += 1;
        self.0[self.1 - 1]
    }
}

const STRAIGHT: &str = "
template main
  typedef enum { r, g, b } colour;
  colour c = r;
  uint4 x;
  uint8 y;
  bool f;
  process p {
    if (x[3:2] == 2 || f) { y[7:4] = x; c = g; } else { y = y[3:0]; };
    if (*) { f = !f; } else { x = *; };
    assert(y < 200 || c == g);
    if (c != r && x >= 3) { y[0] = x[2]; } else if (y > x) { c = b; };
    x[1] = *;
    pause;
  };
endtemplate";

#[test]
fn compiled_segment_agrees_with_tree_evaluation() {
    let m = model(STRAIGHT);
    let c = build_cfas(&m).unwrap();
    let interp = Interp::new(&m, &c);
    let body = &m.processes[0].body;
    let straight = &body[..body.len() - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..2000 {
        let s0 = interp.initial_state(|_, ty| rng.gen_range(0..ty.cardinality()));
        let choices: Vec<u64> = (0..3).map(|_| rng.gen_range(0..16)).collect();
        let mut tree = Tree {
            m: &m,
            vars: s0.vars.clone(),
            choices: choices.clone(),
            next_choice: 0,
            failed: false,
        };
        tree.run(straight);
        let s1 = interp.env_step(&s0, 0, &mut Seq(choices, 0), None);
        assert_eq!(s1.err, tree.failed);
        if tree.failed {
            assert_eq!(s1.vars, s0.vars);
        } else {
            assert_eq!(s1.vars, tree.vars);
            assert_eq!(c.procs[0].locations[s1.pcs[0]].kind, LocKind::Pause);
        }
    }
}
