//! Truth-table oracles for the BDD engine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tslsynth_bdd::{CubePolicy, Manager, NodeRef};

#[derive(Clone, Debug)]
enum Formula {
    Var(u32),
    Const(bool),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Xor(Box<Formula>, Box<Formula>),
    Ite(Box<Formula>, Box<Formula>, Box<Formula>),
}

impl Formula {
    fn random(rng: &mut impl Rng, vars: u32, depth: u32) -> Formula {
        if depth == 0 || rng.gen_ratio(1, 5) {
            return if rng.gen_ratio(1, 10) {
                Formula::Const(rng.gen())
            } else {
                Formula::Var(rng.gen_range(0..vars))
            };
        }
        let op = rng.gen_range(0..5);
        let mut sub = || Box::new(Formula::random(rng, vars, depth - 1));
        match op {
            0 => Formula::Not(sub()),
            1 => Formula::And(sub(), sub()),
            2 => Formula::Or(sub(), sub()),
            3 => Formula::Xor(sub(), sub()),
            _ => Formula::Ite(sub(), sub(), sub()),
        }
    }

    fn eval(&self, bits: u64) -> bool {
        match self {
            Formula::Var(v) => bits >> v & 1 == 1,
            Formula::Const(b) => *b,
            Formula::Not(a) => !a.eval(bits),
            Formula::And(a, b) => a.eval(bits) && b.eval(bits),
            Formula::Or(a, b) => a.eval(bits) || b.eval(bits),
            Formula::Xor(a, b) => a.eval(bits) ^ b.eval(bits),
            Formula::Ite(c, t, e) => {
                if c.eval(bits) {
                    t.eval(bits)
                } else {
                    e.eval(bits)
                }
            }
        }
    }

    fn build(&self, m: &mut Manager) -> NodeRef {
        match self {
            Formula::Var(v) => m.var(*v).unwrap(),
            Formula::Const(b) => m.constant(*b),
            Formula::Not(a) => {
                let a = a.build(m);
                m.not(a).unwrap()
            }
            Formula::And(a, b) => {
                let (a, b) = (a.build(m), b.build(m));
                m.and(a, b).unwrap()
            }
            Formula::Or(a, b) => {
                let (a, b) = (a.build(m), b.build(m));
                m.or(a, b).unwrap()
            }
            Formula::Xor(a, b) => {
                let (a, b) = (a.build(m), b.build(m));
                m.xor(a, b).unwrap()
            }
            Formula::Ite(c, t, e) => {
                let (c, t, e) = (c.build(m), t.build(m), e.build(m));
                m.ite(c, t, e).unwrap()
            }
        }
    }

    fn table(&self, vars: u32) -> Vec<bool> {
        (0..1u64 << vars).map(|b| self.eval(b)).collect()
    }
}

fn bdd_table(m: &Manager, f: NodeRef, vars: u32) -> Vec<bool> {
    (0..1u64 << vars)
        .map(|b| m.eval(f, |v| b >> v & 1 == 1))
        .collect()
}

#[test]
fn evaluation_matches_truth_tables_on_four_variables() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = Manager::new(4);
    for _ in 0..2000 {
        let f = Formula::random(&mut rng, 4, 5);
        let g = f.build(&mut m);
        assert_eq!(bdd_table(&m, g, 4), f.table(4), "{f:?}");
    }
    m.check_integrity().unwrap();
}

#[test]
fn canonicity_exhaustive_to_five_variables() {
    // Every one of the 2^(2^3) functions of three variables gets a distinct
    // handle, and rebuilding any function from its minterms hits the same one.
    let mut m = Manager::new(3);
    let mut handles = std::collections::HashMap::new();
    for table in 0u32..256 {
        let mut f = NodeRef::FALSE;
        for row in 0..8u32 {
            if table >> row & 1 == 1 {
                let lits: Vec<_> = (0..3).map(|v| (v, row >> v & 1 == 1)).collect();
                let c = m.cube_lits(&lits).unwrap();
                f = m.or(f, c).unwrap();
            }
        }
        assert!(
            handles.insert(f, table).is_none(),
            "two tables share a handle"
        );
    }
    assert_eq!(handles.len(), 256);

    // Random pairs over five variables: handle equality iff table equality.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut m = Manager::new(5);
    let formulas: Vec<_> = (0..400).map(|_| Formula::random(&mut rng, 5, 4)).collect();
    let built: Vec<_> = formulas
        .iter()
        .map(|f| (f.build(&mut m), f.table(5)))
        .collect();
    for (i, (a, ta)) in built.iter().enumerate() {
        for (b, tb) in &built[i + 1..] {
            assert_eq!(a == b, ta == tb);
        }
    }
    m.check_integrity().unwrap();
}

#[test]
fn algebraic_identities_hold_on_random_trials() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut m = Manager::new(6);
    for trial in 0..10_000 {
        let a = Formula::random(&mut rng, 6, 3).build(&mut m);
        let b = Formula::random(&mut rng, 6, 3).build(&mut m);
        let c = Formula::random(&mut rng, 6, 3).build(&mut m);

        // De Morgan
        let ab = m.and(a, b).unwrap();
        let lhs = m.not(ab).unwrap();
        let na = m.not(a).unwrap();
        let nb = m.not(b).unwrap();
        let rhs = m.or(na, nb).unwrap();
        assert_eq!(lhs, rhs, "De Morgan, trial {trial}");

        // Distributivity
        let bc = m.or(b, c).unwrap();
        let lhs = m.and(a, bc).unwrap();
        let ac = m.and(a, c).unwrap();
        let rhs = m.or(ab, ac).unwrap();
        assert_eq!(lhs, rhs, "distributivity, trial {trial}");

        // Quantifier duality
        let vars: Vec<u32> = (0..6).filter(|_| rng.gen_bool(0.4)).collect();
        let cube = m.cube(&vars).unwrap();
        let fa = m.forall(a, cube).unwrap();
        let ex = m.exists(na, cube).unwrap();
        let nex = m.not(ex).unwrap();
        assert_eq!(fa, nex, "duality, trial {trial}");

        // Relational product
        let composed = m.exists(ab, cube).unwrap();
        assert_eq!(
            m.and_exists(a, b, cube).unwrap(),
            composed,
            "and_exists, trial {trial}"
        );

        if trial % 1000 == 0 {
            m.clear_cache();
        }
    }
    m.check_integrity().unwrap();
}

#[test]
fn and_exists_matches_composition_on_six_variable_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m = Manager::new(6);
    for _ in 0..100 {
        let f = Formula::random(&mut rng, 6, 5).build(&mut m);
        let g = Formula::random(&mut rng, 6, 5).build(&mut m);
        let vars: Vec<u32> = (0..6).filter(|_| rng.gen_bool(0.5)).collect();
        let cube = m.cube(&vars).unwrap();
        let fg = m.and(f, g).unwrap();
        assert_eq!(
            m.and_exists(f, g, cube).unwrap(),
            m.exists(fg, cube).unwrap()
        );
    }
}

#[test]
fn swap_prime_is_an_involution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut m = Manager::new(6);
    m.set_prime_pairs(&[(0, 1), (2, 3), (4, 5)]).unwrap();
    for _ in 0..100 {
        let f = Formula::random(&mut rng, 6, 5);
        let g = f.build(&mut m);
        let s = m.swap_prime(g).unwrap();
        assert_eq!(m.swap_prime(s).unwrap(), g);
        // semantic check: s(b) = f(b with pairs swapped)
        for bits in 0..64u64 {
            let swapped = (bits & 0b010101) << 1 | (bits & 0b101010) >> 1;
            assert_eq!(m.eval(s, |v| bits >> v & 1 == 1), f.eval(swapped));
        }
    }
}

#[test]
fn picked_cubes_satisfy_their_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut m = Manager::new(6);
    let care: Vec<u32> = (0..6).collect();
    for _ in 0..1000 {
        let f = Formula::random(&mut rng, 6, 5);
        let g = f.build(&mut m);
        for policy in [CubePolicy::PreferLow, CubePolicy::PreferHigh] {
            match m.pick_cube(g, &care, policy) {
                None => assert!(g.is_false()),
                Some(a) => {
                    let bits: u64 = a.iter().enumerate().map(|(i, &b)| (b as u64) << i).sum();
                    assert!(f.eval(bits));
                }
            }
        }
    }
}

#[test]
fn prefer_low_picks_the_lexicographically_smallest_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut m = Manager::new(5);
    let care: Vec<u32> = (0..5).collect();
    for _ in 0..300 {
        let f = Formula::random(&mut rng, 5, 4);
        let g = f.build(&mut m);
        // Oracle: smallest model with variable 0 as the most significant digit.
        let key = |bits: u64| (0..5).map(|v| bits >> v & 1).collect::<Vec<_>>();
        let best = (0..32u64).filter(|&b| f.eval(b)).min_by_key(|&b| key(b));
        let picked = m.pick_cube(g, &care, CubePolicy::PreferLow).map(|a| {
            a.iter()
                .enumerate()
                .map(|(i, &b)| (b as u64) << i)
                .sum::<u64>()
        });
        assert_eq!(picked, best);
    }
}

#[test]
fn sat_count_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut m = Manager::new(6);
    let all: Vec<u32> = (0..6).collect();
    for _ in 0..300 {
        let f = Formula::random(&mut rng, 6, 5);
        let g = f.build(&mut m);
        let expected = (0..64u64).filter(|&b| f.eval(b)).count() as u128;
        assert_eq!(m.sat_count(g, &all), expected);
    }
}

/// Every cube over `vars` variables as (mask, values): literal present iff
/// bit set in mask.
fn all_cubes(vars: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for mask in 0..1u32 << vars {
        for vals in 0..1u32 << vars {
            if vals & !mask == 0 {
                out.push((mask, vals));
            }
        }
    }
    out
}

fn cube_covers(cube: (u32, u32), row: u32) -> bool {
    row & cube.0 == cube.1
}

#[test]
fn covers_are_correct_and_irredundant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vars = 4;
    let mut m = Manager::new(vars);
    for _ in 0..300 {
        let f = Formula::random(&mut rng, vars, 4);
        let care = Formula::random(&mut rng, vars, 3);
        let (fb, cb) = (f.build(&mut m), care.build(&mut m));
        if cb.is_false() {
            continue;
        }
        let (g, cubes) = m.extract_cover(fb, cb).unwrap();
        assert_eq!(g, m.cover_to_bdd(&cubes).unwrap());
        let covered = |cs: &[Vec<(u32, bool)>], row: u32| {
            cs.iter()
                .any(|c| c.iter().all(|&(v, b)| (row >> v & 1 == 1) == b))
        };
        for row in 0..1u32 << vars {
            if care.eval(row as u64) {
                assert_eq!(covered(&cubes, row), f.eval(row as u64));
            } else if covered(&cubes, row) {
                // outside the care set the cover must stay below f ∨ ¬care
                // which is vacuous; nothing to check
            }
        }
        // no cube can be dropped without losing an on-set care point
        for skip in 0..cubes.len() {
            let rest: Vec<_> = cubes
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, c)| c.clone())
                .collect();
            let loses = (0..1u32 << vars)
                .any(|r| care.eval(r as u64) && f.eval(r as u64) && !covered(&rest, r));
            assert!(loses, "cube {skip} of {cubes:?} is redundant");
        }
    }
}

#[test]
fn merged_cover_is_minimal_for_x_and_y_or_x_and_not_y() {
    // x∧y ∨ x∧¬y: the exhaustive minimum cover over two variables has one
    // cube, and the extracted cover matches it.
    let mut m = Manager::new(2);
    let x = m.var(0).unwrap();
    let y = m.var(1).unwrap();
    let ny = m.not(y).unwrap();
    let a = m.and(x, y).unwrap();
    let b = m.and(x, ny).unwrap();
    let f = m.or(a, b).unwrap();
    let on: Vec<u32> = (0..4).filter(|&r| r & 1 == 1).collect();
    let cubes = all_cubes(2);
    let valid: Vec<_> = cubes
        .iter()
        .copied()
        .filter(|&c| (0..4).all(|r| !cube_covers(c, r) || on.contains(&r)))
        .collect();
    let mut minimum = usize::MAX;
    for subset in 1u32..1 << valid.len() {
        let chosen: Vec<_> = (0..valid.len()).filter(|i| subset >> i & 1 == 1).collect();
        if on
            .iter()
            .all(|&r| chosen.iter().any(|&i| cube_covers(valid[i], r)))
        {
            minimum = minimum.min(chosen.len());
        }
    }
    let (_, got) = m.extract_cover(f, NodeRef::TRUE).unwrap();
    assert_eq!(minimum, 1);
    assert_eq!(got, vec![vec![(0, true)]]);
}

#[test]
fn garbage_collection_keeps_roots_and_reuses_slots() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut m = Manager::new(6);
    let keep: Vec<Formula> = (0..5).map(|_| Formula::random(&mut rng, 6, 5)).collect();
    let roots: Vec<NodeRef> = keep.iter().map(|f| f.build(&mut m)).collect();
    for _ in 0..50 {
        let f = Formula::random(&mut rng, 6, 6);
        f.build(&mut m);
    }
    let before = m.allocated();
    let freed = m.collect_garbage(&roots);
    assert!(freed > 0);
    assert_eq!(m.allocated(), before - freed);
    m.check_integrity().unwrap();
    for (f, &r) in keep.iter().zip(&roots) {
        assert_eq!(bdd_table(&m, r, 6), f.table(6));
    }
    // Rebuilding the kept formulas finds the same canonical nodes.
    for (f, &r) in keep.iter().zip(&roots) {
        assert_eq!(f.build(&mut m), r);
    }
    // New nodes go into freed slots without breaking canonicity.
    for _ in 0..20 {
        let f = Formula::random(&mut rng, 6, 6);
        let r = f.build(&mut m);
        assert_eq!(bdd_table(&m, r, 6), f.table(6));
    }
    m.check_integrity().unwrap();
}
