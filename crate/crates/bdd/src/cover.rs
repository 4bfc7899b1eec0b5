//! Irredundant sum-of-products extraction (Minato–Morreale).

use rustc_hash::FxHashMap;

use crate::{Manager, NodeRef, Result};

/// A conjunction of literals, sorted by variable.
pub type Cube = Vec<(u32, bool)>;

impl Manager {
    /// Computes an irredundant cover `g` with `lower ≤ g ≤ upper`. Returns the
    /// cover as a BDD together with its cubes.
    pub fn isop(&mut self, lower: NodeRef, upper: NodeRef) -> Result<(NodeRef, Vec<Cube>)> {
        let mut memo = FxHashMap::default();
        let (g, cubes) = self.isop_rec(lower, upper, &mut memo)?;
        Ok((g, cubes))
    }

    fn isop_rec(
        &mut self,
        lower: NodeRef,
        upper: NodeRef,
        memo: &mut FxHashMap<(NodeRef, NodeRef), (NodeRef, Vec<Cube>)>,
    ) -> Result<(NodeRef, Vec<Cube>)> {
        if lower.is_false() {
            return Ok((NodeRef::FALSE, Vec::new()));
        }
        if upper.is_true() {
            return Ok((NodeRef::TRUE, vec![Vec::new()]));
        }
        if let Some(r) = memo.get(&(lower, upper)) {
            return Ok(r.clone());
        }
        let var = match (self.top_var(lower), self.top_var(upper)) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => unreachable!("constant interval handled above"),
        };
        let (l0, l1) = self.cofactors(lower, var);
        let (u0, u1) = self.cofactors(upper, var);

        let l0_only = self.diff(l0, u1)?;
        let (c0, cubes0) = self.isop_rec(l0_only, u0, memo)?;
        let l1_only = self.diff(l1, u0)?;
        let (c1, cubes1) = self.isop_rec(l1_only, u1, memo)?;

        let rest0 = self.diff(l0, c0)?;
        let rest1 = self.diff(l1, c1)?;
        let rest = self.or(rest0, rest1)?;
        let both = self.and(u0, u1)?;
        let (cd, cubesd) = self.isop_rec(rest, both, memo)?;

        let v = self.var(var)?;
        let t1 = self.and(v, c1)?;
        let nv = self.not(v)?;
        let t0 = self.and(nv, c0)?;
        let g = self.or(t0, t1)?;
        let g = self.or(g, cd)?;

        let mut cubes = Vec::with_capacity(cubes0.len() + cubes1.len() + cubesd.len());
        for mut c in cubes0 {
            c.insert(0, (var, false));
            cubes.push(c);
        }
        for mut c in cubes1 {
            c.insert(0, (var, true));
            cubes.push(c);
        }
        cubes.extend(cubesd);
        memo.insert((lower, upper), (g, cubes.clone()));
        Ok((g, cubes))
    }

    /// Irredundant sum-of-products for some `g` that agrees with `f` on
    /// `care` (don't-cares outside `care` are exploited).
    pub fn extract_cover(&mut self, f: NodeRef, care: NodeRef) -> Result<(NodeRef, Vec<Cube>)> {
        let lower = self.and(f, care)?;
        let ncare = self.not(care)?;
        let upper = self.or(f, ncare)?;
        self.isop(lower, upper)
    }

    /// BDD of a disjunction of cubes.
    pub fn cover_to_bdd(&mut self, cubes: &[Cube]) -> Result<NodeRef> {
        let mut r = NodeRef::FALSE;
        for c in cubes {
            let t = self.cube_lits(c)?;
            r = self.or(r, t)?;
        }
        Ok(r)
    }
}
