//! Torus-bundle groups `E = Z^2 x|_theta Z` for Anosov `theta`: named
//! automorphisms and the structure of `Aut(E)` and `Out(E)`.
//!
//! An automorphism is a triple `(c, M, sigma)` with `phi(w) = M w` on
//! `<d, b>` and `phi(v) = (c, sigma)`; `M` commutes with `theta` when
//! `sigma = 1` and reverses it when `sigma = -1`. Inner automorphisms are
//! `((I - theta) u, theta^i, 1)`, so `Out(E)` is `H x| Q` with
//! `H = Z^2 / (I - theta) Z^2` and `Q = (C(theta) u R(theta)) / <theta>`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::gl2z::{
    classify, find_reverser, primitive_root, reverser_of_family, signed_log, Family, MatrixClass, PrimitiveRootData,
    ReverserData,
};
use crate::intmat::{int, smith_normal_form, Mat2, Vec2};
use crate::structgrp::{Presentation, StructureTree};
use crate::words::{equal_mod_inner, eval_auto_word, inner, word, Automorphism, Element, Gen, Group, Word};

#[derive(Clone, Debug)]
pub struct TorusBundleGroup {
    pub theta: Mat2,
    pub root: PrimitiveRootData,
    pub reverser: ReverserData,
    pub group: Arc<Group>,
}

/// Case numbering of the Aut theorem; the Out theorem shifts it by one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AutCase {
    NoReverser,
    /// Conjugate to `(x,y;z,x)`: family F2.
    CaseIEqualDiagonal,
    /// Conjugate to `(x,y;y,z)`: family F1.
    CaseIISymmetric,
    /// Conjugate to `(x,y;w-x,w)`: family F3.
    CaseIIIThirdFamily,
}

impl AutCase {
    pub fn from_family(f: Option<Family>) -> AutCase {
        match f {
            None => AutCase::NoReverser,
            Some(Family::F2) => AutCase::CaseIEqualDiagonal,
            Some(Family::F1) => AutCase::CaseIISymmetric,
            Some(Family::F3) => AutCase::CaseIIIThirdFamily,
        }
    }

    /// Label in the Aut theorem's numbering.
    pub fn aut_label(self) -> &'static str {
        match self {
            AutCase::NoReverser => "none",
            AutCase::CaseIEqualDiagonal => "I",
            AutCase::CaseIISymmetric => "II",
            AutCase::CaseIIIThirdFamily => "III",
        }
    }

    /// Label in the Out theorem's numbering, without the a/b subtag.
    pub fn out_label(self) -> &'static str {
        match self {
            AutCase::NoReverser => "I",
            AutCase::CaseIEqualDiagonal => "II",
            AutCase::CaseIISymmetric => "III",
            AutCase::CaseIIIThirdFamily => "IV",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseTags {
    pub case: AutCase,
    /// `'a'` when `theta = M0^l`, `'b'` when `theta = -M0^l`.
    pub sub: char,
    /// All reverser families, reported in full even though one is used.
    pub families: BTreeSet<Family>,
}

impl CaseTags {
    pub fn aut_label(&self) -> String {
        self.case.aut_label().to_string()
    }

    pub fn out_label(&self) -> String {
        format!("{}({})", self.case.out_label(), self.sub)
    }
}

impl fmt::Display for CaseTags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Aut case {}, Out case {}", self.aut_label(), self.out_label())
    }
}

/// `H = Z^2 / (I - theta) Z^2` with the action of `M0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HGroup {
    /// Invariant factors `n1 | n2`.
    pub factors: [BigInt; 2],
    pub order: BigInt,
    /// `M0` acting on `Z^2`; it preserves `(I - theta) Z^2`.
    pub action: Mat2,
}

pub fn build(theta: &Mat2) -> Result<TorusBundleGroup> {
    match classify(theta)? {
        MatrixClass::Anosov => {}
        MatrixClass::Exceptional(_) => return Err(Error::NotSol),
    }
    let root = primitive_root(theta)?;
    let reverser = find_reverser(theta)?;
    let group = Arc::new(Group::torus_bundle(theta.clone())?);
    Ok(TorusBundleGroup { theta: theta.clone(), root, reverser, group })
}

impl TorusBundleGroup {
    pub fn eps(&self) -> i8 {
        self.root.eps
    }

    pub fn ell(&self) -> u64 {
        self.root.ell
    }

    /// `I - theta`, whose columns span the inner translation lattice.
    pub fn inner_lattice(&self) -> Mat2 {
        &Mat2::identity() - &self.theta
    }

    pub fn h_group(&self) -> HGroup {
        let l = self.inner_lattice();
        let factors = smith_normal_form(&l).invariant_factors();
        HGroup { factors, order: l.det().abs(), action: self.root.m0.clone() }
    }

    /// Reverser family used for reporting: F2, then F1, then F3.
    pub fn primary_family(&self) -> Option<Family> {
        [Family::F2, Family::F1, Family::F3].into_iter().find(|f| self.reverser.families.contains(f))
    }

    pub fn case_tags(&self) -> CaseTags {
        CaseTags {
            case: AutCase::from_family(self.primary_family()),
            sub: if self.eps() > 0 { 'a' } else { 'b' },
            families: self.reverser.families.clone(),
        }
    }

    /// The automorphism `(c, M, sigma)`, verified.
    pub fn automorphism(&self, c: &Vec2, m: &Mat2, sigma: i64) -> Result<Automorphism> {
        let images = vec![Element::lattice(m.col(0)), Element::lattice(m.col(1)), Element { w: c.clone(), k: sigma, a: 0 }];
        crate::words::check_endomorphism(&self.group, images).map_err(|v| Error::Inconsistent(v.to_string()))
    }

    /// The canonical reverser of the given family.
    pub fn reverser_for(&self, family: Family) -> Result<Option<Mat2>> {
        if !self.reverser.families.contains(&family) {
            return Ok(None);
        }
        if self.reverser.witness.as_ref().is_some_and(|w| crate::gl2z::reverser_family(w) == family) {
            return Ok(self.reverser.witness.clone());
        }
        reverser_of_family(&self.theta, family)
    }

    /// `alpha, beta, gamma_plus, gamma_minus`, and `xi` when a reverser exists.
    pub fn named_automorphisms(&self) -> Result<BTreeMap<String, Automorphism>> {
        let mut named = BTreeMap::new();
        let i = Mat2::identity();
        named.insert("alpha".into(), self.automorphism(&Vec2::e1(), &i, 1)?);
        named.insert("beta".into(), self.automorphism(&Vec2::e2(), &i, 1)?);
        named.insert("gamma_plus".into(), self.automorphism(&Vec2::zero(), &self.root.m0, 1)?);
        named.insert("gamma_minus".into(), self.automorphism(&Vec2::zero(), &Mat2::scalar(-1), 1)?);
        if let Some(f) = self.primary_family() {
            let b0 = self.reverser_for(f)?.expect("family has a reverser");
            named.insert("xi".into(), self.automorphism(&Vec2::zero(), &b0, -1)?);
        }
        Ok(named)
    }

    /// Reverser data for the witness of one family.
    pub fn reverser_shape(&self, family: Family) -> Result<Option<ReverserShape>> {
        let Some(b0) = self.reverser_for(family)? else { return Ok(None) };
        let m0 = &self.root.m0;
        let conj = &(&b0 * m0) * &b0.inverse()?;
        let m0inv = m0.inverse()?;
        let s = if conj == m0inv { 1 } else { -1 };
        debug_assert!(s == 1 || conj == -&m0inv);
        let sq = &b0 * &b0;
        let b = if sq.is_identity() { 1 } else { -1 };
        // (xi gamma_plus^j)^2 restricts to s^j b I.
        let lift = if b == 1 {
            Some(0)
        } else if s == -1 {
            Some(1)
        } else {
            None
        };
        Ok(Some(ReverserShape { family, b0, s, b, lift }))
    }

    /// Exact word for `(c, M, 1)` with `M = delta M0^j`:
    /// `alpha^c1 beta^c2 gamma_plus^j gamma_minus^[delta = -1]`.
    pub fn decompose_aut(&self, phi: &Automorphism) -> Result<Word> {
        if phi.sigma() != 1 {
            return Err(Error::Inconsistent("decomposition needs sigma = 1".into()));
        }
        let (delta, j) = signed_log(&self.root.m0, &phi.matrix())
            .ok_or_else(|| Error::Inconsistent(format!("{} is not in C(theta)", phi.matrix())))?;
        let c = phi.translation();
        let mut w = lattice_word(c);
        push(&mut w, "gamma_plus", int(j));
        if delta < 0 {
            push(&mut w, "gamma_minus", int(1));
        }
        Ok(w)
    }

    /// Word equal to `phi` modulo inner automorphisms, in the generators of
    /// the Out tree: `gamma_minus` is absent when `theta = -M0^l`, where it
    /// coincides with `gamma_plus^l`.
    pub fn decompose_out(&self, phi: &Automorphism) -> Result<Word> {
        if phi.sigma() != 1 {
            return Err(Error::Inconsistent("decomposition needs sigma = 1".into()));
        }
        let (delta, j) = signed_log(&self.root.m0, &phi.matrix())
            .ok_or_else(|| Error::Inconsistent(format!("{} is not in C(theta)", phi.matrix())))?;
        let ell = self.ell() as i64;
        let c = self.reduce_translation(phi.translation());
        let mut w = lattice_word(&c);
        if self.eps() > 0 {
            push(&mut w, "gamma_plus", int(j.rem_euclid(ell)));
            if delta < 0 {
                push(&mut w, "gamma_minus", int(1));
            }
        } else {
            let j = if delta < 0 { j + ell } else { j };
            push(&mut w, "gamma_plus", int(j.rem_euclid(2 * ell)));
        }
        Ok(w)
    }

    /// A short representative of `c` modulo `(I - theta) Z^2`.
    fn reduce_translation(&self, c: &Vec2) -> Vec2 {
        let l = self.inner_lattice();
        let snf = smith_normal_form(&l);
        let (a, b) = crate::intmat::quotient_coords(&snf, c);
        // Back to standard coordinates through U^-1.
        let uinv = snf.u.inverse().expect("unimodular");
        &uinv * &Vec2::new(a, b)
    }

    fn conj(&self, x: &Automorphism, y: &Automorphism) -> Automorphism {
        x.compose(y).compose(&x.inverse())
    }

    fn action(&self, top: &Automorphism, normal: &[&Automorphism], out: bool) -> Result<Vec<Word>> {
        normal
            .iter()
            .map(|g| {
                let c = self.conj(top, g);
                if out {
                    self.decompose_out(&c)
                } else {
                    self.decompose_aut(&c)
                }
            })
            .collect()
    }

    fn h_tree(&self) -> StructureTree {
        StructureTree::Quotient { gens: ["alpha".into(), "beta".into()], relations: self.inner_lattice() }
    }

    /// Out tree built from the witness of one family (or none).
    pub fn out_tree_for(&self, family: Option<Family>) -> Result<OutBuild> {
        let named = self.named_automorphisms()?;
        let (alpha, beta, gp, gm) = (&named["alpha"], &named["beta"], &named["gamma_plus"], &named["gamma_minus"]);
        let ell = self.ell();
        let mut extra = BTreeMap::new();
        let base = if self.eps() > 0 {
            let t1 = StructureTree::semidirect(self.h_tree(), "gamma_plus", Some(ell), self.action(gp, &[alpha, beta], true)?);
            Some(t1)
        } else {
            None
        };
        let core = match &base {
            Some(t1) => StructureTree::semidirect(t1.clone(), "gamma_minus", Some(2), self.action(gm, &[alpha, beta, gp], true)?),
            None => StructureTree::semidirect(self.h_tree(), "gamma_plus", Some(2 * ell), self.action(gp, &[alpha, beta], true)?),
        };
        let core_gens: Vec<&Automorphism> =
            if self.eps() > 0 { vec![alpha, beta, gp, gm] } else { vec![alpha, beta, gp] };
        let Some(family) = family else {
            return Ok(OutBuild { tree: core, shape: None, extra, beyond_paper: false });
        };
        let shape = self.reverser_shape(family)?.ok_or_else(|| Error::Inconsistent("family without reverser".into()))?;
        let xi = self.automorphism(&Vec2::zero(), &shape.b0, -1)?;
        let id = Automorphism::identity(&self.group);
        let mut beyond_paper = false;
        let tree = if let Some(j) = shape.lift {
            let lift = xi.compose(&gp.pow(&int(j)));
            debug_assert!(equal_mod_inner(&lift.compose(&lift), &id).is_some());
            let name = if j == 0 { "xi" } else { "xi_prime" };
            if j != 0 {
                extra.insert(name.to_string(), lift.clone());
            } else {
                extra.insert("xi".to_string(), xi.clone());
            }
            StructureTree::semidirect(core, name, Some(2), self.action(&lift, &core_gens, true)?)
        } else if let Some(t1) = base {
            // xi^2 = gamma_minus and xi^4 = 1: a cyclic top of order 4 over H x| Z_l.
            extra.insert("xi".to_string(), xi.clone());
            StructureTree::semidirect(t1, "xi", Some(4), self.action(&xi, &[alpha, beta, gp], true)?)
        } else {
            // xi^2 = gamma_minus = gamma_plus^l modulo inner automorphisms.
            extra.insert("xi".to_string(), xi.clone());
            beyond_paper = true;
            let power = self.decompose_out(&xi.compose(&xi))?;
            StructureTree::Extension {
                normal: Box::new(core),
                top: "xi".into(),
                order: Some(2),
                action: self.action(&xi, &core_gens, true)?,
                power,
            }
        };
        Ok(OutBuild { tree, shape: Some(shape), extra, beyond_paper })
    }

    pub fn out_structure(&self) -> Result<OutStructure> {
        let tags = self.case_tags();
        let primary = self.primary_family();
        let build = self.out_tree_for(primary)?;
        let order = build.tree.order().ok_or_else(|| Error::Inconsistent("Out tree is infinite".into()))?;
        // Every applicable family must describe a group of the same order.
        let mut alternatives = Vec::new();
        for f in &self.reverser.families {
            if Some(*f) == primary {
                continue;
            }
            let alt = self.out_tree_for(Some(*f))?;
            let alt_order = alt.tree.order().expect("finite");
            if alt_order != order {
                return Err(Error::Inconsistent(format!("families disagree on |Out|: {order} vs {alt_order}")));
            }
            alternatives.push((*f, alt.tree));
        }
        let mut named = self.named_automorphisms()?;
        named.extend(build.extra.clone());
        let stated = stated_out_shape(&tags);
        let mut notes = Vec::new();
        if let Some(shape) = &build.shape {
            let ours = shape_kind(&build, self.eps());
            if ours != stated.1 {
                notes.push(format!(
                    "stated shape {} does not match the conjugation action of the {} reverser {} (B0^2 = {}I, B0 M0 B0^-1 = {}M0^-1); using {}",
                    stated.0,
                    shape.family,
                    shape.b0,
                    sign_str(shape.b),
                    sign_str(shape.s),
                    build.tree
                ));
            }
        }
        Ok(OutStructure {
            presentation: build.tree.presentation(),
            tree: build.tree,
            order,
            tags,
            stated_shape: stated.0,
            notes,
            beyond_paper: build.beyond_paper,
            named,
            alternatives,
        })
    }

    pub fn aut_structure(&self) -> Result<AutStructure> {
        let tags = self.case_tags();
        let named = self.named_automorphisms()?;
        let (alpha, beta, gp, gm) = (&named["alpha"], &named["beta"], &named["gamma_plus"], &named["gamma_minus"]);
        let lattice = StructureTree::Lattice { gens: ["alpha".into(), "beta".into()] };
        let t1 = StructureTree::semidirect(lattice, "gamma_plus", None, self.action(gp, &[alpha, beta], false)?);
        let aut0 = StructureTree::semidirect(t1.clone(), "gamma_minus", Some(2), self.action(gm, &[alpha, beta, gp], false)?);
        let mut extra = BTreeMap::new();
        let mut notes = Vec::new();
        let stated = stated_aut_shape(tags.case);
        let tree = match self.primary_family() {
            None => aut0,
            Some(f) => {
                let shape = self.reverser_shape(f)?.expect("family has a reverser");
                let xi = self.automorphism(&Vec2::zero(), &shape.b0, -1)?;
                match shape.lift {
                    Some(j) => {
                        let lift = xi.compose(&gp.pow(&int(j)));
                        debug_assert!(lift.compose(&lift).is_identity());
                        let name = if j == 0 { "xi" } else { "xi_prime" };
                        extra.insert(name.to_string(), lift.clone());
                        if tags.case == AutCase::CaseIISymmetric {
                            notes.push(format!(
                                "stated shape {} needs B0 M0 B0^-1 = M0^-1; here B0 M0 B0^-1 = -M0^-1, so xi gamma_plus has order 2 and the tree splits over Aut0",
                                stated
                            ));
                        }
                        StructureTree::semidirect(aut0, name, Some(2), self.action(&lift, &[alpha, beta, gp, gm], false)?)
                    }
                    None => {
                        extra.insert("xi".to_string(), xi.clone());
                        StructureTree::semidirect(t1, "xi", Some(4), self.action(&xi, &[alpha, beta, gp], false)?)
                    }
                }
            }
        };
        let mut all = named;
        all.extend(extra);
        Ok(AutStructure { presentation: tree.presentation(), tree, tags, stated_shape: stated.to_string(), notes, named: all })
    }

    /// Generators for the independent Out enumeration: the two lattice
    /// translations and every unit restriction found by `unit_candidates`.
    pub fn oracle_generators(&self) -> Result<Vec<Automorphism>> {
        let i = Mat2::identity();
        let mut gens = vec![self.automorphism(&Vec2::e1(), &i, 1)?, self.automorphism(&Vec2::e2(), &i, 1)?];
        for (x, sigma) in crate::structgrp::unit_candidates(&self.theta)? {
            gens.push(self.automorphism(&Vec2::zero(), &x, sigma)?);
        }
        Ok(gens)
    }

    /// `kappa_g` as a word in `alpha, beta, gamma_plus, gamma_minus`, exactly.
    pub fn kappa_word(&self, g: &Element) -> Result<Word> {
        self.decompose_aut(&inner(&self.group, g))
    }

    /// Stated words: `kappa_d = alpha^(1-r) beta^-t`, `kappa_b = alpha^-s beta^(1-u)`,
    /// `kappa_v = gamma_plus^l` or `gamma_minus gamma_plus^l`.
    pub fn stated_kappa_words(&self) -> [(Gen, Word); 3] {
        let th = &self.theta;
        let (r, s, t, u) = (small(&th.a), small(&th.b), small(&th.c), small(&th.d));
        let ell = self.ell() as i64;
        let kv = if self.eps() > 0 {
            word(&[("gamma_plus", ell)])
        } else {
            word(&[("gamma_minus", 1), ("gamma_plus", ell)])
        };
        [
            (Gen::D, word(&[("alpha", 1 - r), ("beta", -t)])),
            (Gen::B, word(&[("alpha", -s), ("beta", 1 - u)])),
            (Gen::V, kv),
        ]
    }

    /// Checks every stated inner-automorphism word as an exact equality.
    pub fn check_kappa_identities(&self) -> Result<Vec<(String, bool)>> {
        let named = self.named_automorphisms()?;
        let mut out = Vec::new();
        for (g, w) in self.stated_kappa_words() {
            let lhs = inner(&self.group, &self.group.gen(g));
            let rhs = eval_auto_word(&self.group, &named, &w)?;
            out.push((format!("kappa_{} = {}", g.name(), crate::words::format_word(&w)), lhs == rhs));
        }
        Ok(out)
    }
}

fn small(x: &BigInt) -> i64 {
    crate::words::small(x)
}

fn sign_str(x: i8) -> &'static str {
    if x > 0 {
        "+"
    } else {
        "-"
    }
}

fn push(w: &mut Word, g: &str, e: BigInt) {
    if !e.is_zero() {
        w.push((g.to_string(), e));
    }
}

fn lattice_word(c: &Vec2) -> Word {
    let mut w = Vec::new();
    push(&mut w, "alpha", c.x.clone());
    push(&mut w, "beta", c.y.clone());
    w
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReverserShape {
    pub family: Family,
    pub b0: Mat2,
    /// `B0 M0 B0^-1 = s M0^-1`.
    pub s: i8,
    /// `B0^2 = b I`.
    pub b: i8,
    /// `j` with `xi gamma_plus^j` an involution, if one exists in `{0, 1}`.
    pub lift: Option<i64>,
}

#[derive(Clone, Debug)]
pub struct OutBuild {
    pub tree: StructureTree,
    pub shape: Option<ReverserShape>,
    /// Generators introduced by the reverser layer.
    pub extra: BTreeMap<String, Automorphism>,
    /// Non-split reverser layer, a shape the case list does not state.
    pub beyond_paper: bool,
}

#[derive(Clone, Debug)]
pub struct OutStructure {
    pub tree: StructureTree,
    pub presentation: Presentation,
    pub order: BigInt,
    pub tags: CaseTags,
    /// The shape the case list states, verbatim.
    pub stated_shape: String,
    pub notes: Vec<String>,
    pub beyond_paper: bool,
    /// Automorphisms assigned to the tree's generators.
    pub named: BTreeMap<String, Automorphism>,
    /// Trees built from the other applicable reverser families.
    pub alternatives: Vec<(Family, StructureTree)>,
}

#[derive(Clone, Debug)]
pub struct AutStructure {
    pub tree: StructureTree,
    pub presentation: Presentation,
    pub tags: CaseTags,
    pub stated_shape: String,
    pub notes: Vec<String>,
    pub named: BTreeMap<String, Automorphism>,
}

/// Shape kinds used to compare computed trees with the stated ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ShapeKind {
    Split2,
    Cyclic4,
    NonSplit2,
}

fn shape_kind(build: &OutBuild, eps: i8) -> ShapeKind {
    let shape = build.shape.as_ref().expect("reverser layer present");
    match shape.lift {
        Some(_) => ShapeKind::Split2,
        None if eps > 0 => ShapeKind::Cyclic4,
        None => ShapeKind::NonSplit2,
    }
}

fn stated_out_shape(tags: &CaseTags) -> (String, ShapeKind) {
    let a = tags.sub == 'a';
    match (tags.case, a) {
        (AutCase::NoReverser, true) => ("(H x|_M0 Z_l) x| Z2".into(), ShapeKind::Split2),
        (AutCase::NoReverser, false) => ("H x|_M0 Z_2l".into(), ShapeKind::Split2),
        (AutCase::CaseIISymmetric, true) => ("(H x|_M0 Z_l) x| Z4".into(), ShapeKind::Cyclic4),
        (_, true) => ("((H x|_M0 Z_l) x| Z2) x| Z2".into(), ShapeKind::Split2),
        (_, false) => ("(H x|_M0 Z_2l) x| Z2".into(), ShapeKind::Split2),
    }
}

fn stated_aut_shape(case: AutCase) -> &'static str {
    match case {
        AutCase::NoReverser => "((Z+Z) x|_M0 Z) x| Z2",
        AutCase::CaseIISymmetric => "((Z+Z) x|_M0 Z) x|_w Z4",
        _ => "Aut0(E) x|_w Z2",
    }
}
