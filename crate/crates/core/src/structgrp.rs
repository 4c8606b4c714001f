//! Structure trees for iterated extensions, their finite realizations as
//! Cayley tables, presentation checking and an isomorphism test.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::intmat::{int, kernel, quotient_coords, smith_normal_form, IntMatrix, Mat2, SnfResult, Vec2};
use crate::sapphire::SapphireGroup;
use crate::torusbundle::TorusBundleGroup;
use crate::words::{equal_mod_inner, format_word, Automorphism, Group, Word};

/// Default cap for isomorphism testing.
pub const ISO_CAP: usize = 2048;

/// Associativity is checked exhaustively up to this order and sampled above.
const EXHAUSTIVE_AXIOMS: usize = 512;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StructureTree {
    Trivial,
    /// Infinite cyclic group on one generator.
    Integers { gen: String },
    Cyclic { gen: String, n: u64 },
    /// Free abelian group on two generators.
    Lattice { gens: [String; 2] },
    /// `Z^2 / L` where the columns of `relations` span `L`.
    Quotient { gens: [String; 2], relations: Mat2 },
    /// `normal` extended by `top`, which acts on the generators of `normal`
    /// by `action` (one image word per normal generator, in order). For a
    /// finite top, `top^order = power`; an empty power word is a split
    /// extension. `order: None` is an infinite cyclic top.
    Extension { normal: Box<StructureTree>, top: String, order: Option<u64>, action: Vec<Word>, power: Word },
}

impl StructureTree {
    pub fn generators(&self) -> Vec<String> {
        match self {
            StructureTree::Trivial => vec![],
            StructureTree::Integers { gen } | StructureTree::Cyclic { gen, .. } => vec![gen.clone()],
            StructureTree::Lattice { gens } | StructureTree::Quotient { gens, .. } => gens.to_vec(),
            StructureTree::Extension { normal, top, .. } => {
                let mut g = normal.generators();
                g.push(top.clone());
                g
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            StructureTree::Trivial | StructureTree::Cyclic { .. } => true,
            StructureTree::Integers { .. } | StructureTree::Lattice { .. } => false,
            StructureTree::Quotient { relations, .. } => !relations.det().is_zero(),
            StructureTree::Extension { normal, order, .. } => order.is_some() && normal.is_finite(),
        }
    }

    /// Product of the factor orders.
    pub fn order(&self) -> Option<BigInt> {
        match self {
            StructureTree::Trivial => Some(BigInt::one()),
            StructureTree::Cyclic { n, .. } => Some(BigInt::from(*n)),
            StructureTree::Integers { .. } | StructureTree::Lattice { .. } => None,
            StructureTree::Quotient { relations, .. } => {
                let d = relations.det().abs();
                (!d.is_zero()).then_some(d)
            }
            StructureTree::Extension { normal, order, .. } => Some(normal.order()? * BigInt::from((*order)?)),
        }
    }

    /// A split extension `normal x| <top>`.
    pub fn semidirect(normal: StructureTree, top: &str, order: Option<u64>, action: Vec<Word>) -> StructureTree {
        StructureTree::Extension { normal: Box::new(normal), top: top.into(), order, action, power: Vec::new() }
    }

    /// The trivial action on every generator of `normal`.
    pub fn identity_action(normal: &StructureTree) -> Vec<Word> {
        normal.generators().into_iter().map(|g| vec![(g, BigInt::one())]).collect()
    }

    pub fn presentation(&self) -> Presentation {
        let mut rels: Vec<(Word, Word)> = Vec::new();
        self.collect_relations(&mut rels);
        Presentation { generators: self.generators(), relations: rels }
    }

    fn collect_relations(&self, rels: &mut Vec<(Word, Word)>) {
        let one = BigInt::one;
        match self {
            StructureTree::Trivial | StructureTree::Integers { .. } => {}
            StructureTree::Cyclic { gen, n } => rels.push((vec![(gen.clone(), BigInt::from(*n))], vec![])),
            StructureTree::Lattice { gens } => rels.push(commutator(&gens[0], &gens[1])),
            StructureTree::Quotient { gens, relations } => {
                rels.push(commutator(&gens[0], &gens[1]));
                for j in 0..2 {
                    let c = relations.col(j);
                    let w: Word = [(gens[0].clone(), c.x), (gens[1].clone(), c.y)]
                        .into_iter()
                        .filter(|(_, e)| !e.is_zero())
                        .collect();
                    if !w.is_empty() {
                        rels.push((w, vec![]));
                    }
                }
            }
            StructureTree::Extension { normal, top, order, action, power } => {
                normal.collect_relations(rels);
                for (g, img) in normal.generators().iter().zip(action) {
                    let lhs = vec![(top.clone(), one()), (g.clone(), one()), (top.clone(), -one())];
                    rels.push((lhs, img.clone()));
                }
                if let Some(n) = order {
                    rels.push((vec![(top.clone(), BigInt::from(*n))], power.clone()));
                }
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let words = |ws: &[Word]| -> Value { Value::Array(ws.iter().map(|w| json!(format_word(w))).collect()) };
        match self {
            StructureTree::Trivial => json!({"node": "trivial"}),
            StructureTree::Integers { gen } => json!({"node": "integers", "generator": gen}),
            StructureTree::Cyclic { gen, n } => json!({"node": "cyclic", "generator": gen, "order": n.to_string()}),
            StructureTree::Lattice { gens } => json!({"node": "lattice", "generators": gens}),
            StructureTree::Quotient { gens, relations } => json!({
                "node": "quotient",
                "generators": gens,
                "relations": relations.to_arg(),
                "invariant_factors": quotient_factors(relations).iter().map(|d| d.to_string()).collect::<Vec<_>>(),
            }),
            StructureTree::Extension { normal, top, order, action, power } => json!({
                "node": if power.is_empty() { "semidirect" } else { "extension" },
                "normal": normal.to_json(),
                "top": top,
                "top_order": order.map_or("infinite".to_string(), |n| n.to_string()),
                "action": words(action),
                "power": format_word(power),
            }),
        }
    }
}

fn commutator(x: &str, y: &str) -> (Word, Word) {
    let one = BigInt::one();
    (vec![(x.into(), one.clone()), (y.into(), one.clone())], vec![(y.into(), one.clone()), (x.into(), one)])
}

/// Nontrivial invariant factors of `Z^2 / L`; 0 marks a free factor.
pub fn quotient_factors(relations: &Mat2) -> Vec<BigInt> {
    smith_normal_form(relations).invariant_factors().into_iter().filter(|d| !d.is_one()).collect()
}

fn cyclic_name(n: &BigInt) -> String {
    if n.is_zero() {
        "Z".into()
    } else {
        format!("Z{n}")
    }
}

impl fmt::Display for StructureTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureTree::Trivial => f.write_str("1"),
            StructureTree::Integers { .. } => f.write_str("Z"),
            StructureTree::Cyclic { n, .. } => write!(f, "Z{n}"),
            StructureTree::Lattice { .. } => f.write_str("Z^2"),
            StructureTree::Quotient { relations, .. } => {
                let parts: Vec<String> = quotient_factors(relations).iter().map(cyclic_name).collect();
                if parts.is_empty() {
                    f.write_str("1")
                } else {
                    write!(f, "({})", parts.join(" + "))
                }
            }
            StructureTree::Extension { normal, order, power, .. } => {
                let top = order.map_or("Z".to_string(), |n| format!("Z{n}"));
                let op = if power.is_empty() { "x|" } else { "." };
                write!(f, "({normal} {op} {top})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Presentation {
    pub generators: Vec<String>,
    /// Relations `lhs = rhs`; an empty side is the identity.
    pub relations: Vec<(Word, Word)>,
}

impl fmt::Display for Presentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rels: Vec<String> =
            self.relations.iter().map(|(l, r)| format!("{} = {}", format_word(l), format_word(r))).collect();
        write!(f, "< {} | {} >", self.generators.join(", "), rels.join(", "))
    }
}

impl Presentation {
    pub fn to_json(&self) -> Value {
        json!({
            "generators": self.generators,
            "relations": self.relations.iter().map(|(l, r)| format!("{} = {}", format_word(l), format_word(r))).collect::<Vec<_>>(),
        })
    }
}

/// A finite group as a Cayley table; element 0 is the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteGroup {
    n: usize,
    table: Vec<u32>,
    inv: Vec<u32>,
    pub gens: Vec<(String, u32)>,
}

impl FiniteGroup {
    /// Builds a group from a full table, checking identity and inverses.
    pub fn from_table(n: usize, table: Vec<u32>, gens: Vec<(String, u32)>) -> Result<FiniteGroup> {
        if table.len() != n * n || n == 0 {
            return Err(Error::Inconsistent("table has wrong size".into()));
        }
        let mut inv = vec![u32::MAX; n];
        for x in 0..n {
            if table[x] as usize != x || table[x * n] as usize != x {
                return Err(Error::Inconsistent("element 0 is not the identity".into()));
            }
            for y in 0..n {
                if table[x * n + y] == 0 {
                    inv[x] = y as u32;
                    break;
                }
            }
            if inv[x] == u32::MAX {
                return Err(Error::Inconsistent(format!("element {x} has no inverse")));
            }
        }
        Ok(FiniteGroup { n, table, inv, gens })
    }

    pub fn trivial() -> FiniteGroup {
        FiniteGroup { n: 1, table: vec![0], inv: vec![0], gens: vec![] }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn mul(&self, x: u32, y: u32) -> u32 {
        self.table[x as usize * self.n + y as usize]
    }

    pub fn inv(&self, x: u32) -> u32 {
        self.inv[x as usize]
    }

    pub fn pow(&self, x: u32, e: &BigInt) -> u32 {
        let ord = BigInt::from(self.element_order(x));
        let e = e.mod_floor(&ord).to_u64().expect("reduced exponent");
        let mut acc = 0u32;
        for _ in 0..e {
            acc = self.mul(acc, x);
        }
        acc
    }

    pub fn element_order(&self, x: u32) -> u64 {
        let mut y = x;
        let mut k = 1u64;
        while y != 0 {
            y = self.mul(y, x);
            k += 1;
        }
        k
    }

    pub fn generator(&self, name: &str) -> Option<u32> {
        self.gens.iter().find(|(g, _)| g == name).map(|(_, x)| *x)
    }

    pub fn assignment(&self) -> BTreeMap<String, u32> {
        self.gens.iter().cloned().collect()
    }

    pub fn eval_word(&self, assignment: &BTreeMap<String, u32>, w: &Word) -> Result<u32> {
        let mut acc = 0u32;
        for (g, e) in w {
            let x = *assignment.get(g).ok_or_else(|| Error::Inconsistent(format!("unassigned generator {g}")))?;
            acc = self.mul(acc, self.pow(x, e));
        }
        Ok(acc)
    }

    /// Closure of `gens` under multiplication.
    pub fn subgroup(&self, gens: &[u32]) -> Vec<u32> {
        let mut seen = vec![false; self.n];
        seen[0] = true;
        let mut out = vec![0u32];
        let mut queue = VecDeque::from([0u32]);
        while let Some(x) = queue.pop_front() {
            for &g in gens {
                let y = self.mul(x, g);
                if !seen[y as usize] {
                    seen[y as usize] = true;
                    out.push(y);
                    queue.push_back(y);
                }
            }
        }
        out
    }

    pub fn is_abelian(&self) -> bool {
        (0..self.n as u32).all(|x| (0..self.n as u32).all(|y| self.mul(x, y) == self.mul(y, x)))
    }

    pub fn center_order(&self) -> usize {
        (0..self.n as u32).filter(|&x| (0..self.n as u32).all(|y| self.mul(x, y) == self.mul(y, x))).count()
    }

    pub fn derived_order(&self) -> usize {
        let mut comms: Vec<u32> = Vec::new();
        let mut seen = vec![false; self.n];
        for x in 0..self.n as u32 {
            for y in 0..self.n as u32 {
                let c = self.mul(self.mul(x, y), self.mul(self.inv(x), self.inv(y)));
                if !seen[c as usize] {
                    seen[c as usize] = true;
                    comms.push(c);
                }
            }
        }
        self.subgroup(&comms).len()
    }

    /// Sorted multiset of element orders.
    pub fn order_histogram(&self) -> BTreeMap<u64, usize> {
        let mut h = BTreeMap::new();
        for x in 0..self.n as u32 {
            *h.entry(self.element_order(x)).or_insert(0) += 1;
        }
        h
    }

    /// Associativity, exhaustively up to order 512 and on seeded samples above.
    pub fn check_associativity(&self, seed: u64) -> bool {
        let n = self.n as u32;
        let assoc = |x: u32, y: u32, z: u32| self.mul(self.mul(x, y), z) == self.mul(x, self.mul(y, z));
        if self.n <= EXHAUSTIVE_AXIOMS {
            (0..n).all(|x| (0..n).all(|y| (0..n).all(|z| assoc(x, y, z))))
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200_000).all(|_| assoc(rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n)))
        }
    }
}

/// Materializes a finite structure tree.
pub fn realize(tree: &StructureTree) -> Result<FiniteGroup> {
    if !tree.is_finite() {
        return Err(Error::InfiniteTree);
    }
    match tree {
        StructureTree::Trivial => Ok(FiniteGroup::trivial()),
        StructureTree::Cyclic { gen, n } => {
            let n = *n as usize;
            let table = (0..n * n).map(|i| ((i / n + i % n) % n) as u32).collect();
            FiniteGroup::from_table(n, table, vec![(gen.clone(), (1 % n) as u32)])
        }
        StructureTree::Quotient { gens, relations } => realize_quotient(gens, relations),
        StructureTree::Extension { normal, top, order, action, power } => {
            let n = order.ok_or(Error::InfiniteTree)?;
            realize_extension(&realize(normal)?, top, n, action, power)
        }
        StructureTree::Integers { .. } | StructureTree::Lattice { .. } => Err(Error::InfiniteTree),
    }
}

fn realize_quotient(gens: &[String; 2], relations: &Mat2) -> Result<FiniteGroup> {
    let snf = smith_normal_form(relations);
    let [d1, d2] = snf.invariant_factors();
    let (d1, d2) = (d1.to_usize().ok_or(Error::InfiniteTree)?, d2.to_usize().ok_or(Error::InfiniteTree)?);
    let n = d1 * d2;
    let index = |a: usize, b: usize| (a % d1) + d1 * (b % d2);
    let mut table = vec![0u32; n * n];
    for x in 0..n {
        for y in 0..n {
            table[x * n + y] = index(x % d1 + y % d1, x / d1 + y / d1) as u32;
        }
    }
    let coords = |w: Vec2| {
        let (a, b) = quotient_coords(&snf, &w);
        index(
            a.mod_floor(&int(d1 as i64)).to_usize().expect("reduced"),
            b.mod_floor(&int(d2 as i64)).to_usize().expect("reduced"),
        ) as u32
    };
    let g = vec![(gens[0].clone(), coords(Vec2::e1())), (gens[1].clone(), coords(Vec2::e2()))];
    FiniteGroup::from_table(n, table, g)
}

/// Extends generator images to an automorphism of `g`, if they define one.
fn extend_to_automorphism(g: &FiniteGroup, images: &[u32]) -> Result<Vec<u32>> {
    let n = g.order();
    let mut phi = vec![u32::MAX; n];
    phi[0] = 0;
    let mut queue = VecDeque::from([0u32]);
    while let Some(x) = queue.pop_front() {
        for (gi, (_, gen)) in g.gens.iter().enumerate() {
            let y = g.mul(x, *gen);
            let img = g.mul(phi[x as usize], images[gi]);
            if phi[y as usize] == u32::MAX {
                phi[y as usize] = img;
                queue.push_back(y);
            } else if phi[y as usize] != img {
                return Err(Error::Inconsistent("action does not respect the relations".into()));
            }
        }
    }
    if phi.contains(&u32::MAX) {
        return Err(Error::Inconsistent("named generators do not generate the normal factor".into()));
    }
    let mut hit = vec![false; n];
    for &y in &phi {
        hit[y as usize] = true;
    }
    if hit.contains(&false) {
        return Err(Error::Inconsistent("action is not bijective".into()));
    }
    Ok(phi)
}

fn realize_extension(normal: &FiniteGroup, top: &str, n: u64, action: &[Word], power: &Word) -> Result<FiniteGroup> {
    let m = normal.order();
    let n = n as usize;
    let assign = normal.assignment();
    if action.len() != normal.gens.len() {
        return Err(Error::Inconsistent(format!("action of {top} needs {} images", normal.gens.len())));
    }
    let images = action.iter().map(|w| normal.eval_word(&assign, w)).collect::<Result<Vec<_>>>()?;
    let phi = extend_to_automorphism(normal, &images)?;
    let z = normal.eval_word(&assign, power)?;
    if phi[z as usize] != z {
        return Err(Error::Inconsistent(format!("{top}^{n} is not fixed by the action")));
    }
    // phi^i for i in 0..n, and phi^n must be conjugation by z.
    let mut powers: Vec<Vec<u32>> = vec![(0..m as u32).collect()];
    for i in 1..=n {
        powers.push(powers[i - 1].iter().map(|&x| phi[x as usize]).collect());
    }
    let zinv = normal.inv(z);
    for x in 0..m as u32 {
        if powers[n][x as usize] != normal.mul(normal.mul(z, x), zinv) {
            return Err(Error::Inconsistent(format!("{top}^{n} does not act as conjugation by its power")));
        }
    }
    let total = m * n;
    // Element (i, m1) has index i * |N| + m1.
    let mut table = vec![0u32; total * total];
    for x in 0..total {
        let (i, m1) = (x / m, x % m);
        for y in 0..total {
            let (j, m2) = (y / m, y % m);
            let mut prod = normal.mul(m1 as u32, powers[i][m2]);
            if i + j >= n {
                prod = normal.mul(prod, z);
            }
            table[x * total + y] = (((i + j) % n) * m) as u32 + prod;
        }
    }
    let mut gens: Vec<(String, u32)> = normal.gens.clone();
    gens.push((top.to_string(), if n > 1 { m as u32 } else { 0 }));
    FiniteGroup::from_table(total, table, gens)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresentationReport {
    /// Each relation with its verdict.
    pub relations: Vec<(String, bool)>,
    pub generates: bool,
}

impl PresentationReport {
    pub fn passed(&self) -> bool {
        self.generates && self.relations.iter().all(|(_, ok)| *ok)
    }

    pub fn failures(&self) -> Vec<String> {
        self.relations.iter().filter(|(_, ok)| !ok).map(|(r, _)| r.clone()).collect()
    }
}

pub fn verify_presentation(p: &Presentation, g: &FiniteGroup, assignment: &BTreeMap<String, u32>) -> Result<PresentationReport> {
    let mut relations = Vec::new();
    for (l, r) in &p.relations {
        let ok = g.eval_word(assignment, l)? == g.eval_word(assignment, r)?;
        relations.push((format!("{} = {}", format_word(l), format_word(r)), ok));
    }
    let gens: Vec<u32> = p
        .generators
        .iter()
        .map(|name| assignment.get(name).copied().ok_or_else(|| Error::Inconsistent(format!("unassigned {name}"))))
        .collect::<Result<_>>()?;
    let generates = g.subgroup(&gens).len() == g.order();
    Ok(PresentationReport { relations, generates })
}

/// Invariant screening, then a backtracking search for an isomorphism.
pub fn isomorphic(g1: &FiniteGroup, g2: &FiniteGroup, cap: usize) -> Result<bool> {
    if g1.order() > cap || g2.order() > cap {
        return Err(Error::TooLarge(g1.order().max(g2.order()), cap));
    }
    if g1.order() != g2.order()
        || g1.order_histogram() != g2.order_histogram()
        || g1.center_order() != g2.center_order()
        || g1.derived_order() != g2.derived_order()
    {
        return Ok(false);
    }
    let gens = small_generating_set(g1);
    let orders2: Vec<u64> = (0..g2.order() as u32).map(|x| g2.element_order(x)).collect();
    let mut images = Vec::new();
    Ok(search_iso(g1, g2, &gens, &orders2, &mut images))
}

/// Greedy generating set, preferring elements of large order.
fn small_generating_set(g: &FiniteGroup) -> Vec<u32> {
    let mut elems: Vec<u32> = (1..g.order() as u32).collect();
    elems.sort_by_key(|&x| std::cmp::Reverse(g.element_order(x)));
    let mut gens = Vec::new();
    let mut span = g.subgroup(&gens);
    for x in elems {
        if span.len() == g.order() {
            break;
        }
        if !span.contains(&x) {
            gens.push(x);
            span = g.subgroup(&gens);
        }
    }
    gens
}

/// Extends `gens[i] -> images[i]` to a homomorphism on the generated subgroup.
fn partial_hom(g1: &FiniteGroup, g2: &FiniteGroup, gens: &[u32], images: &[u32]) -> Option<HashMap<u32, u32>> {
    let mut map = HashMap::from([(0u32, 0u32)]);
    let mut queue = VecDeque::from([0u32]);
    while let Some(x) = queue.pop_front() {
        let fx = map[&x];
        for (g, h) in gens.iter().zip(images) {
            let y = g1.mul(x, *g);
            let fy = g2.mul(fx, *h);
            match map.get(&y) {
                Some(&prev) if prev != fy => return None,
                Some(_) => {}
                None => {
                    map.insert(y, fy);
                    queue.push_back(y);
                }
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    map.values().all(|v| seen.insert(*v)).then_some(map)
}

fn search_iso(g1: &FiniteGroup, g2: &FiniteGroup, gens: &[u32], orders2: &[u64], images: &mut Vec<u32>) -> bool {
    if images.len() == gens.len() {
        return partial_hom(g1, g2, gens, images).is_some_and(|m| m.len() == g1.order());
    }
    let want = g1.element_order(gens[images.len()]);
    for cand in 0..g2.order() as u32 {
        if orders2[cand as usize] != want {
            continue;
        }
        images.push(cand);
        if partial_hom(g1, g2, &gens[..images.len()], images).is_some() && search_iso(g1, g2, gens, orders2, images) {
            return true;
        }
        images.pop();
    }
    false
}

/// Upper bound on the number of Out classes the closure enumeration explores.
pub const OUT_CAP: usize = 4096;

/// Every unit `X` in a box around a reduced basis of the solutions of
/// `X theta = theta X` (sign 1) or `X theta = theta^-1 X` (sign -1).
pub fn unit_candidates(theta: &Mat2) -> Result<Vec<(Mat2, i64)>> {
    let inv = theta.inverse()?;
    let bound = 2 + theta.max_abs().to_i64().ok_or_else(|| Error::CapExceeded("matrix entries too large".into()))?;
    let mut out = Vec::new();
    for (sigma, left) in [(1i64, theta.clone()), (-1, inv)] {
        // Columns are the images of the four elementary matrices under X -> X theta - left X.
        let mut sys = IntMatrix::zeros(4, 4);
        for j in 0..4 {
            let mut e = [BigInt::zero(), BigInt::zero(), BigInt::zero(), BigInt::zero()];
            e[j] = BigInt::one();
            let [a, b, c, d] = e;
            let x = Mat2::new(a, b, c, d);
            let img = &(&x * theta) - &(&left * &x);
            for (i, v) in img.entries().into_iter().enumerate() {
                sys.set(i, j, v.clone());
            }
        }
        let basis = kernel(&sys);
        if basis.len() != 2 {
            continue;
        }
        let (p, q) = gauss_reduce(basis[0].clone(), basis[1].clone());
        for i in -bound..=bound {
            for j in -bound..=bound {
                let v: Vec<BigInt> = (0..4).map(|k| int(i) * &p[k] + int(j) * &q[k]).collect();
                let x = Mat2::new(v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone());
                if x.det().abs().is_one() {
                    out.push((x, sigma));
                }
            }
        }
    }
    Ok(out)
}

fn dot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lagrange-Gauss reduction of a rank-2 lattice basis.
fn gauss_reduce(mut p: Vec<BigInt>, mut q: Vec<BigInt>) -> (Vec<BigInt>, Vec<BigInt>) {
    loop {
        if dot(&p, &p) > dot(&q, &q) {
            std::mem::swap(&mut p, &mut q);
        }
        let num = dot(&p, &q);
        let den = dot(&p, &p);
        // Nearest integer to num / den.
        let mu = (int(2) * &num + &den).div_floor(&(int(2) * &den));
        if mu.is_zero() {
            return (p, q);
        }
        for k in 0..4 {
            let t = &mu * &p[k];
            q[k] -= t;
        }
    }
}

/// Out(E) materialized as a Cayley table of classes of automorphisms.
#[derive(Clone, Debug)]
pub struct OutEnumeration {
    pub group: FiniteGroup,
    /// One automorphism per class; `reps[0]` is the identity.
    pub reps: Vec<Automorphism>,
    buckets: HashMap<Vec<BigInt>, Vec<u32>>,
    snf: Option<SnfResult>,
}

impl OutEnumeration {
    pub fn order(&self) -> usize {
        self.reps.len()
    }

    /// The class of `phi`, by exact comparison modulo inner automorphisms.
    pub fn class_of(&self, phi: &Automorphism) -> Option<u32> {
        let key = out_key(phi, self.snf.as_ref());
        self.buckets.get(&key)?.iter().copied().find(|&j| equal_mod_inner(phi, &self.reps[j as usize]).is_some())
    }
}

/// Invariants of the Out class: the sign of `v` and the translation modulo
/// `(I - theta) Z^2` for torus bundles; the grade parity and the restriction
/// mod 2 for sapphires (inner restrictions are `theta^i J^e`, both `I` mod 2).
fn out_key(phi: &Automorphism, snf: Option<&SnfResult>) -> Vec<BigInt> {
    match snf {
        Some(snf) => {
            let (x, y) = quotient_coords(snf, phi.translation());
            vec![int(phi.sigma()), x, y]
        }
        None => {
            let m = phi.matrix().mod2();
            vec![int(phi.grade().rem_euclid(2)), m.a, m.b, m.c, m.d]
        }
    }
}

/// Closes `gens` under composition modulo inner automorphisms.
pub fn out_closure(group: &Arc<Group>, gens: &[Automorphism], cap: usize) -> Result<OutEnumeration> {
    let snf = (!group.is_sapphire()).then(|| smith_normal_form(&(&Mat2::identity() - &group.theta)));
    let mut en = OutEnumeration { group: FiniteGroup::trivial(), reps: Vec::new(), buckets: HashMap::new(), snf };
    let insert = |en: &mut OutEnumeration, phi: Automorphism| -> u32 {
        let id = en.reps.len() as u32;
        en.buckets.entry(out_key(&phi, en.snf.as_ref())).or_default().push(id);
        en.reps.push(phi);
        id
    };
    insert(&mut en, Automorphism::identity(group));
    // Distinct nontrivial generator classes.
    let mut gen_reps: Vec<Automorphism> = Vec::new();
    for g in gens {
        if en.class_of(g).is_none() && !gen_reps.iter().any(|h| equal_mod_inner(g, h).is_some()) {
            gen_reps.push(g.clone());
        }
    }
    let mut edges: Vec<Vec<u32>> = Vec::new();
    let mut parent: Vec<(u32, usize)> = vec![(0, usize::MAX)];
    let mut i = 0;
    while i < en.reps.len() {
        let mut row = Vec::with_capacity(gen_reps.len());
        for (gi, g) in gen_reps.iter().enumerate() {
            let next = en.reps[i].compose(g);
            let j = match en.class_of(&next) {
                Some(j) => j,
                None => {
                    if en.reps.len() >= cap {
                        return Err(Error::CapExceeded(format!("more than {cap} outer classes")));
                    }
                    parent.push((i as u32, gi));
                    insert(&mut en, next)
                }
            };
            row.push(j);
        }
        edges.push(row);
        i += 1;
    }
    // rep_j is exactly the product of the generators on its tree path.
    let n = en.reps.len();
    let paths: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            let mut path = Vec::new();
            let mut x = j;
            while x != 0 {
                let (p, g) = parent[x];
                path.push(g);
                x = p as usize;
            }
            path.reverse();
            path
        })
        .collect();
    let mut table = vec![0u32; n * n];
    for x in 0..n {
        for (y, path) in paths.iter().enumerate() {
            table[x * n + y] = path.iter().fold(x as u32, |acc, &g| edges[acc as usize][g]);
        }
    }
    let names = (0..gen_reps.len())
        .map(|gi| (format!("g{gi}"), edges[0][gi]))
        .collect();
    en.group = FiniteGroup::from_table(n, table, names)?;
    Ok(en)
}

/// The group whose outer automorphisms are enumerated.
#[derive(Clone, Copy, Debug)]
pub enum OutSource<'a> {
    TorusBundle(&'a TorusBundleGroup),
    Sapphire(&'a SapphireGroup),
}

/// Independent enumeration of Out(E) from unit restrictions and the
/// extension solver; it never consults the named generators or the trees.
pub fn out_bruteforce(source: OutSource<'_>) -> Result<OutEnumeration> {
    match source {
        OutSource::TorusBundle(g) => out_closure(&g.group, &g.oracle_generators()?, OUT_CAP),
        OutSource::Sapphire(g) => out_closure(&g.group, &g.oracle_generators()?, OUT_CAP),
    }
}
