//! Exact arithmetic in the torus-bundle group `Z^2 x|_theta Z` and the
//! sapphire group, and endomorphisms given by generator images.
//!
//! Elements are kept in the normal form `d^x b^y v^k a^e` with `e` in {0,1}.
//! Conjugation by `a` acts on the index-2 subgroup `N = <d, b, v>` by
//! `tau(w, k) = (J w, 0) (z0, -1)^k` with `J = diag(1, -1)`, so the product
//! `(n1 a^e1)(n2 a^e2) = n1 tau^e1(n2) a^(e1+e2)` and `a^2 = d` closes the
//! normal form.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::gl2z::discrete_log;
use crate::intmat::{int, solve_system, IntMatrix, Mat2, SystemSolution, Vec2};

/// Precomputed powers `theta^k` for `|k| <= POWER_CACHE`.
const POWER_CACHE: i64 = 8;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element {
    pub w: Vec2,
    pub k: i64,
    /// Exponent of `a`; always 0 in a torus-bundle group.
    pub a: u8,
}

impl Element {
    pub fn new(x: impl Into<BigInt>, y: impl Into<BigInt>, k: i64, a: u8) -> Element {
        Element { w: Vec2::new(x, y), k, a }
    }

    pub fn lattice(w: Vec2) -> Element {
        Element { w, k: 0, a: 0 }
    }

    pub fn is_identity(&self) -> bool {
        self.w.is_zero() && self.k == 0 && self.a == 0
    }

    /// True for elements of the normal subgroup `<d, b>`.
    pub fn in_lattice(&self) -> bool {
        self.k == 0 && self.a == 0
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        let mut push = |name: &str, e: &BigInt| {
            if e.is_one() {
                parts.push(name.to_string());
            } else if !e.is_zero() {
                parts.push(format!("{name}^{e}"));
            }
        };
        push("d", &self.w.x);
        push("b", &self.w.y);
        push("v", &int(self.k));
        push("a", &int(i64::from(self.a)));
        if parts.is_empty() {
            f.write_str("1")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gen {
    D,
    B,
    V,
    A,
}

impl Gen {
    pub fn name(self) -> &'static str {
        match self {
            Gen::D => "d",
            Gen::B => "b",
            Gen::V => "v",
            Gen::A => "a",
        }
    }
}

/// A word in the group generators, `[(g, e)]` meaning `g1^e1 g2^e2 ...`.
pub type GenWord = Vec<(Gen, BigInt)>;

fn format_gen_word(w: &GenWord) -> String {
    if w.is_empty() {
        return "1".into();
    }
    w.iter()
        .map(|(g, e)| if e.is_one() { g.name().to_string() } else { format!("{}^{}", g.name(), e) })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relator {
    pub lhs: GenWord,
    pub rhs: GenWord,
}

impl fmt::Display for Relator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", format_gen_word(&self.lhs), format_gen_word(&self.rhs))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupKind {
    TorusBundle,
    /// Sapphire with gluing matrix `b`.
    Sapphire { b: Mat2, z0: Vec2 },
}

/// A torus-bundle group `Z^2 x|_theta Z` or a sapphire group.
#[derive(Clone, Debug)]
pub struct Group {
    pub kind: GroupKind,
    pub theta: Mat2,
    powers: Vec<Mat2>,
}

impl PartialEq for Group {
    fn eq(&self, other: &Group) -> bool {
        self.kind == other.kind && self.theta == other.theta
    }
}

impl Eq for Group {}

/// `diag(1, -1)`, the action of `a` on `<d, b>`.
pub fn j_matrix() -> Mat2 {
    Mat2::new(1, 0, 0, -1)
}

/// `theta` and `z0` of the sapphire with gluing matrix `(r,s;t,u)`.
pub fn sapphire_data(b: &Mat2) -> (Mat2, Vec2) {
    let (r, s, t, u) = (&b.a, &b.b, &b.c, &b.d);
    let diag = r * u + s * t;
    let theta = Mat2::new(diag.clone(), int(-2) * r * t, int(-2) * s * u, diag.clone());
    let z0 = Vec2::new(r - &diag, s - int(2) * s * u);
    (theta, z0)
}

impl Group {
    pub fn torus_bundle(theta: Mat2) -> Result<Group> {
        if !theta.is_unimodular() {
            return Err(Error::NotUnimodular);
        }
        Ok(Group::with_kind(GroupKind::TorusBundle, theta))
    }

    /// Sapphire group with gluing matrix `b`; `theta` is derived from `b`.
    pub fn sapphire(b: Mat2) -> Result<Group> {
        if !b.is_unimodular() {
            return Err(Error::NotUnimodular);
        }
        let (theta, z0) = sapphire_data(&b);
        Ok(Group::with_kind(GroupKind::Sapphire { b, z0 }, theta))
    }

    fn with_kind(kind: GroupKind, theta: Mat2) -> Group {
        let powers = (-POWER_CACHE..=POWER_CACHE)
            .map(|k| theta.power(k).expect("theta is unimodular"))
            .collect();
        Group { kind, theta, powers }
    }

    pub fn is_sapphire(&self) -> bool {
        matches!(self.kind, GroupKind::Sapphire { .. })
    }

    pub fn theta_power(&self, k: i64) -> Mat2 {
        if k.abs() <= POWER_CACHE {
            self.powers[(k + POWER_CACHE) as usize].clone()
        } else {
            self.theta.power(k).expect("theta is unimodular")
        }
    }

    fn z0(&self) -> &Vec2 {
        match &self.kind {
            GroupKind::Sapphire { z0, .. } => z0,
            GroupKind::TorusBundle => panic!("z0 of a torus-bundle group"),
        }
    }

    pub fn generators(&self) -> Vec<Gen> {
        if self.is_sapphire() {
            vec![Gen::D, Gen::B, Gen::V, Gen::A]
        } else {
            vec![Gen::D, Gen::B, Gen::V]
        }
    }

    pub fn gen(&self, g: Gen) -> Element {
        match g {
            Gen::D => Element::new(1, 0, 0, 0),
            Gen::B => Element::new(0, 1, 0, 0),
            Gen::V => Element::new(0, 0, 1, 0),
            Gen::A => Element::new(0, 0, 0, 1),
        }
    }

    pub fn identity(&self) -> Element {
        Element::new(0, 0, 0, 0)
    }

    /// Rejects elements that cannot belong to this group.
    pub fn check(&self, g: &Element) -> Result<()> {
        if g.a > 1 || (g.a == 1 && !self.is_sapphire()) {
            return Err(Error::GroupMismatch);
        }
        Ok(())
    }

    fn n_mul(&self, w1: &Vec2, k1: i64, w2: &Vec2, k2: i64) -> (Vec2, i64) {
        (w1 + &(&self.theta_power(k1) * w2), k1 + k2)
    }

    fn n_pow(&self, w: &Vec2, k: i64, n: u64) -> (Vec2, i64) {
        let mut acc = (Vec2::zero(), 0i64);
        let mut base = (w.clone(), k);
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = self.n_mul(&acc.0, acc.1, &base.0, base.1);
            }
            n >>= 1;
            if n > 0 {
                base = self.n_mul(&base.0, base.1, &base.0, base.1);
            }
        }
        acc
    }

    /// Conjugation by `a` on the index-2 subgroup.
    fn tau(&self, w: &Vec2, k: i64) -> (Vec2, i64) {
        let jw = Vec2::new(w.x.clone(), -&w.y);
        let z0 = self.z0();
        let step = if k >= 0 {
            self.n_pow(z0, -1, k as u64)
        } else {
            // (z0, -1)^-1 = (-theta z0, 1)
            self.n_pow(&-&(&self.theta * z0), 1, k.unsigned_abs())
        };
        self.n_mul(&jw, 0, &step.0, step.1)
    }

    pub fn mul(&self, g: &Element, h: &Element) -> Element {
        let (w2, k2) = if g.a == 1 { self.tau(&h.w, h.k) } else { (h.w.clone(), h.k) };
        let (mut w, k) = self.n_mul(&g.w, g.k, &w2, k2);
        let mut a = g.a + h.a;
        if a == 2 {
            // a^2 = d, and d is fixed by theta^k only after moving it left: n d = (w + theta^k e1, k).
            w = &w + &(&self.theta_power(k) * &Vec2::e1());
            a = 0;
        }
        Element { w, k, a }
    }

    pub fn inv(&self, g: &Element) -> Element {
        let wi = -&(&self.theta_power(-g.k) * &g.w);
        let ni = Element { w: wi, k: -g.k, a: 0 };
        if g.a == 0 {
            ni
        } else {
            // (n a)^-1 = a^-1 n^-1 = d^-1 a n^-1
            let dinv_a = Element::new(-1, 0, 0, 1);
            self.mul(&dinv_a, &ni)
        }
    }

    pub fn checked_mul(&self, g: &Element, h: &Element) -> Result<Element> {
        self.check(g)?;
        self.check(h)?;
        Ok(self.mul(g, h))
    }

    pub fn pow(&self, g: &Element, n: &BigInt) -> Element {
        if g.in_lattice() {
            return Element::lattice(g.w.scale(n));
        }
        let base = if n.is_negative() { self.inv(g) } else { g.clone() };
        let mut e = n.abs();
        let mut acc = self.identity();
        let mut sq = base;
        while !e.is_zero() {
            if (&e & BigInt::one()).is_one() {
                acc = self.mul(&acc, &sq);
            }
            e >>= 1;
            if !e.is_zero() {
                sq = self.mul(&sq, &sq);
            }
        }
        acc
    }

    pub fn conj(&self, g: &Element, x: &Element) -> Element {
        self.mul(&self.mul(g, x), &self.inv(g))
    }

    pub fn eval_word(&self, images: &dyn Fn(Gen) -> Element, word: &GenWord) -> Element {
        word.iter().fold(self.identity(), |acc, (g, e)| self.mul(&acc, &self.pow(&images(*g), e)))
    }

    pub fn relators(&self) -> Vec<Relator> {
        let one = BigInt::one();
        let neg = -BigInt::one();
        let th = &self.theta;
        let mut rels = vec![
            Relator {
                lhs: vec![(Gen::D, one.clone()), (Gen::B, one.clone())],
                rhs: vec![(Gen::B, one.clone()), (Gen::D, one.clone())],
            },
            Relator {
                lhs: vec![(Gen::V, one.clone()), (Gen::D, one.clone()), (Gen::V, neg.clone())],
                rhs: vec![(Gen::D, th.a.clone()), (Gen::B, th.c.clone())],
            },
            Relator {
                lhs: vec![(Gen::V, one.clone()), (Gen::B, one.clone()), (Gen::V, neg.clone())],
                rhs: vec![(Gen::D, th.b.clone()), (Gen::B, th.d.clone())],
            },
        ];
        if self.is_sapphire() {
            let z0 = self.z0();
            rels.push(Relator { lhs: vec![(Gen::A, int(2))], rhs: vec![(Gen::D, one.clone())] });
            rels.push(Relator {
                lhs: vec![(Gen::A, one.clone()), (Gen::B, one.clone())],
                rhs: vec![(Gen::B, neg.clone()), (Gen::A, one.clone())],
            });
            rels.push(Relator {
                lhs: vec![(Gen::A, one.clone()), (Gen::V, one.clone()), (Gen::A, neg.clone())],
                rhs: vec![(Gen::D, z0.x.clone()), (Gen::B, z0.y.clone()), (Gen::V, neg)],
            });
        }
        rels
    }
}

/// Why a set of generator images fails to define an automorphism.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    WrongArity { expected: usize, got: usize },
    /// Every relator whose image fails.
    Relators(Vec<String>),
    /// Images of `d`, `b` leave `<d,b>`, or `v`, `a` land in the wrong coset.
    Structure(String),
    NotInvertible,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongArity { expected, got } => write!(f, "expected {expected} images, got {got}"),
            Violation::Relators(r) => write!(f, "relators fail: {}", r.join("; ")),
            Violation::Structure(s) => write!(f, "{s}"),
            Violation::NotInvertible => write!(f, "restriction to <d,b> is not unimodular"),
        }
    }
}

/// A verified automorphism, stored with the verified images of its inverse.
#[derive(Clone, Debug)]
pub struct Automorphism {
    pub group: Arc<Group>,
    /// Images of `d, b, v[, a]`.
    pub images: Vec<Element>,
    inverse: Vec<Element>,
}

impl PartialEq for Automorphism {
    fn eq(&self, other: &Automorphism) -> bool {
        self.images == other.images && self.group == other.group
    }
}

impl Eq for Automorphism {}

impl fmt::Display for Automorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .group
            .generators()
            .iter()
            .zip(&self.images)
            .map(|(g, im)| format!("{} -> {}", g.name(), im))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

fn gen_index(g: Gen) -> usize {
    match g {
        Gen::D => 0,
        Gen::B => 1,
        Gen::V => 2,
        Gen::A => 3,
    }
}

/// Checks that `images` respect every relator and that the map has a
/// two-sided inverse, which is computed and verified.
pub fn check_endomorphism(group: &Arc<Group>, images: Vec<Element>) -> std::result::Result<Automorphism, Violation> {
    let n = group.generators().len();
    if images.len() != n {
        return Err(Violation::WrongArity { expected: n, got: images.len() });
    }
    for im in &images {
        if group.check(im).is_err() {
            return Err(Violation::Structure(format!("{im} is not an element of the group")));
        }
    }
    let lookup = |g: Gen| images[gen_index(g)].clone();
    let failed: Vec<String> = group
        .relators()
        .into_iter()
        .filter(|rel| group.eval_word(&lookup, &rel.lhs) != group.eval_word(&lookup, &rel.rhs))
        .map(|rel| rel.to_string())
        .collect();
    if !failed.is_empty() {
        return Err(Violation::Relators(failed));
    }
    if !images[0].in_lattice() || !images[1].in_lattice() {
        return Err(Violation::Structure("images of d and b must lie in <d,b>".into()));
    }
    if images[2].k.abs() != 1 || images[2].a != 0 {
        return Err(Violation::Structure("image of v must be w v^(+-1)".into()));
    }
    if n == 4 && images[3].a != 1 {
        return Err(Violation::Structure("image of a must lie in the coset of a".into()));
    }
    let m = Mat2::from_cols(&images[0].w, &images[1].w);
    if !m.is_unimodular() {
        return Err(Violation::NotInvertible);
    }
    let inverse = inverse_images(group, &m, &images);
    let phi = Automorphism { group: group.clone(), images, inverse };
    for g in group.generators() {
        let x = group.gen(g);
        let there = phi.apply(&phi.apply_inverse(&x));
        let back = phi.apply_inverse(&phi.apply(&x));
        if there != x || back != x {
            return Err(Violation::NotInvertible);
        }
    }
    Ok(phi)
}

/// Inverse images from the induced data: `M^-1` on `<d,b>`, and the
/// translation parts of `v`, `a` pulled back through `M`.
fn inverse_images(group: &Group, m: &Mat2, images: &[Element]) -> Vec<Element> {
    let minv = m.inverse().expect("checked unimodular");
    let eval = |x: &Element| apply_with(group, m, images, x);
    let sigma = images[2].k;
    let mut out = vec![Element::lattice(minv.col(0)), Element::lattice(minv.col(1))];
    // psi(v) = (x, 0) v^sigma with (M x, 0) = v (phi(v)^sigma)^-1.
    let vs = group.pow(&images[2], &int(sigma));
    let t = group.mul(&group.gen(Gen::V), &group.inv(&vs));
    out.push(Element { w: &minv * &t.w, k: sigma, a: 0 });
    if images.len() == 4 {
        // psi(a) = (y, j) a with j = -grade * sigma.
        let j = -images[3].k * sigma;
        let q = eval(&Element { w: Vec2::zero(), k: j, a: 1 });
        let t = group.mul(&group.gen(Gen::A), &group.inv(&q));
        out.push(Element { w: &minv * &t.w, k: j, a: 1 });
    }
    out
}

fn apply_with(group: &Group, m: &Mat2, images: &[Element], x: &Element) -> Element {
    let mut acc = Element::lattice(m * &x.w);
    if x.k != 0 {
        acc = group.mul(&acc, &group.pow(&images[2], &int(x.k)));
    }
    if x.a == 1 {
        acc = group.mul(&acc, &images[3]);
    }
    acc
}

impl Automorphism {
    pub fn identity(group: &Arc<Group>) -> Automorphism {
        let images: Vec<Element> = group.generators().into_iter().map(|g| group.gen(g)).collect();
        Automorphism { group: group.clone(), inverse: images.clone(), images }
    }

    /// Restriction to `<d, b>`.
    pub fn matrix(&self) -> Mat2 {
        Mat2::from_cols(&self.images[0].w, &self.images[1].w)
    }

    /// Sign of the induced map on the quotient `Z` generated by `v`.
    pub fn sigma(&self) -> i64 {
        self.images[2].k
    }

    /// Translation part `c` of `phi(v) = d^c1 b^c2 v^sigma`.
    pub fn translation(&self) -> &Vec2 {
        &self.images[2].w
    }

    /// The `v`-exponent `k` of `phi(a) = d^m b^n v^k a` (sapphires only).
    pub fn grade(&self) -> i64 {
        self.images.get(3).map_or(0, |a| a.k)
    }

    pub fn image(&self, g: Gen) -> &Element {
        &self.images[gen_index(g)]
    }

    pub fn apply(&self, x: &Element) -> Element {
        apply_with(&self.group, &self.matrix(), &self.images, x)
    }

    pub fn checked_apply(&self, x: &Element) -> Result<Element> {
        self.group.check(x)?;
        Ok(self.apply(x))
    }

    fn apply_inverse(&self, x: &Element) -> Element {
        let m = Mat2::from_cols(&self.inverse[0].w, &self.inverse[1].w);
        apply_with(&self.group, &m, &self.inverse, x)
    }

    pub fn inverse(&self) -> Automorphism {
        Automorphism { group: self.group.clone(), images: self.inverse.clone(), inverse: self.images.clone() }
    }

    /// `self o other`.
    pub fn compose(&self, other: &Automorphism) -> Automorphism {
        assert!(self.group == other.group, "automorphisms of different groups");
        let images = other.images.iter().map(|x| self.apply(x)).collect();
        let inverse = self.inverse.iter().map(|x| other.apply_inverse(x)).collect();
        Automorphism { group: self.group.clone(), images, inverse }
    }

    pub fn checked_compose(&self, other: &Automorphism) -> Result<Automorphism> {
        if self.group != other.group {
            return Err(Error::GroupMismatch);
        }
        Ok(self.compose(other))
    }

    pub fn pow(&self, n: &BigInt) -> Automorphism {
        let base = if n.is_negative() { self.inverse() } else { self.clone() };
        let mut e = n.abs();
        let mut acc = Automorphism::identity(&self.group);
        let mut sq = base;
        while !e.is_zero() {
            if (&e & BigInt::one()).is_one() {
                acc = acc.compose(&sq);
            }
            e >>= 1;
            if !e.is_zero() {
                sq = sq.compose(&sq);
            }
        }
        acc
    }

    pub fn is_identity(&self) -> bool {
        self.group.generators().iter().zip(&self.images).all(|(g, im)| *im == self.group.gen(*g))
    }
}

/// Invert through the induced data, then verify.
pub fn invert(phi: &Automorphism) -> Result<Automorphism> {
    let m = phi.matrix();
    if !m.is_unimodular() {
        return Err(Error::NotInvertible);
    }
    let images = inverse_images(&phi.group, &m, &phi.images);
    check_endomorphism(&phi.group, images).map_err(|_| Error::NotInvertible)
}

/// The inner automorphism `x -> g x g^-1`.
pub fn inner(group: &Arc<Group>, g: &Element) -> Automorphism {
    let ginv = group.inv(g);
    let images = group.generators().into_iter().map(|x| group.conj(g, &group.gen(x))).collect();
    let inverse = group.generators().into_iter().map(|x| group.conj(&ginv, &group.gen(x))).collect();
    Automorphism { group: group.clone(), images, inverse }
}

/// Some `g` with `phi = inner(g) o psi`.
pub fn equal_mod_inner(phi: &Automorphism, psi: &Automorphism) -> Option<Element> {
    let group = &phi.group;
    // Conjugation by `a` flips the sign of v, so only the grade parity is a quick invariant.
    if group != &psi.group || phi.grade().rem_euclid(2) != psi.grade().rem_euclid(2) {
        return None;
    }
    let r = &phi.matrix() * &psi.matrix().inverse().ok()?;
    let mut shifts: Vec<(i64, u8)> = discrete_log(&group.theta, &r).map(|i| (i, 0)).into_iter().collect();
    if group.is_sapphire() {
        if let Some(i) = discrete_log(&group.theta, &(&r * &j_matrix())) {
            shifts.push((i, 1));
        }
    }
    for (i, e) in shifts {
        let h = Element { w: Vec2::zero(), k: i, a: e };
        let chi = inner(group, &h).compose(psi);
        if let Some(u) = lattice_conjugator(group, phi, &chi) {
            let g = group.mul(&Element::lattice(u), &h);
            debug_assert!(inner(group, &g).compose(psi) == *phi);
            return Some(g);
        }
    }
    None
}

/// `u` with `phi = inner((u, 0)) o chi`, given equal restrictions.
fn lattice_conjugator(group: &Group, phi: &Automorphism, chi: &Automorphism) -> Option<Vec2> {
    if phi.matrix() != chi.matrix() {
        return None;
    }
    // inner((u,0)) sends (w, j, e) to (w + (I - theta^j J^e) u, j, e).
    let gens: Vec<usize> = if group.is_sapphire() { vec![2, 3] } else { vec![2] };
    let mut sys = IntMatrix::zeros(2 * gens.len(), 2);
    let mut rhs = Vec::new();
    for (row, &i) in gens.iter().enumerate() {
        let (p, c) = (&phi.images[i], &chi.images[i]);
        if p.k != c.k || p.a != c.a {
            return None;
        }
        let mut act = group.theta_power(p.k);
        if p.a == 1 {
            act = &act * &j_matrix();
        }
        let coef = &Mat2::identity() - &act;
        sys.set(2 * row, 0, coef.a.clone());
        sys.set(2 * row, 1, coef.b.clone());
        sys.set(2 * row + 1, 0, coef.c.clone());
        sys.set(2 * row + 1, 1, coef.d.clone());
        let diff = &p.w - &c.w;
        rhs.push(diff.x);
        rhs.push(diff.y);
    }
    match solve_system(&sys, &rhs) {
        SystemSolution::Inconsistent => None,
        SystemSolution::Affine { particular, .. } => Some(Vec2::new(particular[0].clone(), particular[1].clone())),
    }
}

/// A word in named automorphisms, composed left to right as maps:
/// `[(x, 1), (y, 2)]` is `x o y o y`.
pub type Word = Vec<(String, BigInt)>;

pub fn eval_auto_word(
    group: &Arc<Group>,
    named: &BTreeMap<String, Automorphism>,
    word: &Word,
) -> Result<Automorphism> {
    let mut acc = Automorphism::identity(group);
    for (name, e) in word {
        let phi = named.get(name).ok_or_else(|| Error::Inconsistent(format!("unknown generator {name}")))?;
        acc = acc.compose(&phi.pow(e));
    }
    Ok(acc)
}

pub fn format_word(word: &Word) -> String {
    if word.is_empty() {
        return "1".into();
    }
    word.iter()
        .map(|(g, e)| if e.is_one() { g.clone() } else { format!("{g}^{e}") })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds a word from `(name, exponent)` pairs, dropping zero exponents.
pub fn word(parts: &[(&str, i64)]) -> Word {
    parts.iter().filter(|(_, e)| *e != 0).map(|(g, e)| (g.to_string(), int(*e))).collect()
}

/// Converts a small exponent, panicking only on absurd sizes.
pub fn small(e: &BigInt) -> i64 {
    e.to_i64().expect("exponent fits in i64")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sap(r: i64, s: i64, t: i64, u: i64) -> Arc<Group> {
        Arc::new(Group::sapphire(Mat2::new(r, s, t, u)).unwrap())
    }

    fn tb(r: i64, s: i64, t: i64, u: i64) -> Arc<Group> {
        Arc::new(Group::torus_bundle(Mat2::new(r, s, t, u)).unwrap())
    }

    #[test]
    fn sapphire_relations() {
        let g = sap(1, 2, 1, 1);
        let a = g.gen(Gen::A);
        let b = g.gen(Gen::B);
        assert_eq!(g.mul(&a, &a), Element::new(1, 0, 0, 0));
        assert_eq!(g.mul(&a, &b), Element::new(0, -1, 0, 1));
        for rel in g.relators() {
            let lookup = |x: Gen| g.gen(x);
            assert_eq!(g.eval_word(&lookup, &rel.lhs), g.eval_word(&lookup, &rel.rhs), "{rel}");
        }
    }

    #[test]
    fn torus_bundle_conjugation() {
        let g = tb(2, 1, 1, 1);
        let v = g.gen(Gen::V);
        assert_eq!(g.conj(&v, &g.gen(Gen::D)), Element::new(2, 1, 0, 0));
        assert_eq!(g.conj(&v, &g.gen(Gen::B)), Element::new(1, 1, 0, 0));
    }

    #[test]
    fn gamma_minus_application() {
        let g = tb(2, 1, 1, 1);
        let phi = check_endomorphism(
            &g,
            vec![Element::new(-1, 0, 0, 0), Element::new(0, -1, 0, 0), Element::new(0, 0, 1, 0)],
        )
        .unwrap();
        assert_eq!(phi.apply(&Element::new(2, 3, 1, 0)), Element::new(-2, -3, 1, 0));
        assert!(phi.compose(&phi).is_identity());
    }

    #[test]
    fn omega_case_one_verifies_and_corruption_is_reported() {
        // B = (3,2;4,3) = (r,-t;-s,r) with M = (r,s;t,r) = (3,-4;-2,3) and M^2 = theta.
        // omega(v) = d^(r^2-r+st) b^(t(2r-1)) v = d^14 b^-10 v.
        let g = sap(3, 2, 4, 3);
        let images = |a_img: Element| {
            vec![Element::new(3, -2, 0, 0), Element::new(-4, 3, 0, 0), Element::new(14, -10, 1, 0), a_img]
        };
        let omega = check_endomorphism(&g, images(Element::new(0, 0, 1, 1))).unwrap();
        assert_eq!(omega.grade(), 1);
        assert_eq!(omega.compose(&omega).grade(), 2);
        match check_endomorphism(&g, images(Element::new(0, 0, 2, 1))) {
            Err(Violation::Relators(r)) => assert_eq!(r, vec!["a^2 = d", "a b = b^-1 a"]),
            other => panic!("unexpected {other:?}"),
        }
        let ident = check_endomorphism(&g, g.generators().into_iter().map(|x| g.gen(x)).collect()).unwrap();
        assert!(ident.is_identity());
    }

    #[test]
    fn inner_and_equal_mod_inner() {
        let g = tb(3, -2, -4, 3);
        let id = Automorphism::identity(&g);
        let kd = inner(&g, &g.gen(Gen::D));
        let w = equal_mod_inner(&kd, &id).unwrap();
        assert_eq!(inner(&g, &w), kd);
        assert_eq!(equal_mod_inner(&id, &id), Some(g.identity()));
        let kv = inner(&g, &g.gen(Gen::V));
        assert!(equal_mod_inner(&kv, &id).is_some());
        let s = sap(2, 1, 1, 1);
        let ka = inner(&s, &s.gen(Gen::A));
        let w = equal_mod_inner(&ka, &Automorphism::identity(&s)).unwrap();
        assert_eq!(inner(&s, &w), ka);
    }

    #[test]
    fn inverse_law() {
        let g = sap(2, 1, 1, 1);
        let x = Element::new(3, -2, 2, 1);
        assert!(g.mul(&x, &g.inv(&x)).is_identity());
        assert!(g.mul(&g.inv(&x), &x).is_identity());
        let phi = inner(&g, &x);
        let psi = invert(&phi).unwrap();
        assert!(phi.compose(&psi).is_identity());
        assert_eq!(psi, phi.inverse());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn groups() -> Vec<Arc<Group>> {
            vec![sap(2, 1, 1, 1), sap(3, 2, 4, 3), sap(-2, 3, 1, -2), tb(2, 1, 1, 1), tb(3, -2, -4, 3)]
        }

        fn element(sapphire: bool) -> impl Strategy<Value = Element> {
            (-20i64..=20, -20i64..=20, -3i64..=3, 0u8..=1)
                .prop_map(move |(x, y, k, a)| Element::new(x, y, k, if sapphire { a } else { 0 }))
        }

        fn triple() -> impl Strategy<Value = (usize, Element, Element, Element)> {
            (0usize..5).prop_flat_map(|i| {
                let s = i < 3;
                (Just(i), element(s), element(s), element(s))
            })
        }

        proptest! {
            #[test]
            fn multiplication_is_associative((i, x, y, z) in triple()) {
                let g = &groups()[i];
                prop_assert_eq!(g.mul(&g.mul(&x, &y), &z), g.mul(&x, &g.mul(&y, &z)));
            }

            #[test]
            fn inverses_and_identity((i, x, _y, _z) in triple()) {
                let g = &groups()[i];
                prop_assert!(g.mul(&x, &g.inv(&x)).is_identity());
                prop_assert!(g.mul(&g.inv(&x), &x).is_identity());
                prop_assert_eq!(g.mul(&g.identity(), &x), x.clone());
            }

            #[test]
            fn normal_form_matches_generator_word((i, x, _y, _z) in triple()) {
                // d^x b^y v^k a^e evaluated letter by letter lands on the same normal form.
                let g = &groups()[i];
                let w: GenWord = vec![
                    (Gen::D, x.w.x.clone()),
                    (Gen::B, x.w.y.clone()),
                    (Gen::V, BigInt::from(x.k)),
                    (Gen::A, BigInt::from(x.a)),
                ];
                prop_assert_eq!(g.eval_word(&|h| g.gen(h), &w), x);
            }

            #[test]
            fn automorphisms_are_homomorphisms((i, x, y, z) in triple()) {
                let g = &groups()[i];
                let phi = inner(g, &z).compose(&inner(g, &x));
                prop_assert_eq!(phi.apply(&g.mul(&x, &y)), g.mul(&phi.apply(&x), &phi.apply(&y)));
                prop_assert_eq!(phi.inverse().apply(&phi.apply(&y)), y);
            }

            #[test]
            fn inner_twist_is_trivial_mod_inner((i, x, y, _z) in triple()) {
                let g = &groups()[i];
                let phi = inner(g, &x);
                let psi = phi.compose(&inner(g, &y));
                prop_assert!(equal_mod_inner(&psi, &Automorphism::identity(g)).is_some());
            }
        }
    }
}
