//! Sapphire groups: `Z^2 x|_theta Z` extended by `a` with `a^2 = d`,
//! `a b a^-1 = b^-1` and `a v a^-1 = d^z0x b^z0y v^-1`, where `theta` and
//! `z0` come from a gluing matrix `B = (r,s;t,u)` of determinant 1.
//!
//! `Aut0^k` is the stratum of automorphisms with `phi(v) = d^p b^q v` and
//! `phi(a) = d^m b^n v^k a`. Everything here is generated by `alpha, beta, rho`
//! (grade 0), one grade generator `omega`, and the type II involution `zeta`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::gl2z::{classify, discrete_log, primitive_root, sqrt_matrices, MatrixClass, PrimitiveRootData};
use crate::intmat::{int, solve_system, IntMatrix, Mat2, SystemSolution, Vec2};
use crate::structgrp::{realize, Presentation, StructureTree};
use crate::words::{
    check_endomorphism, eval_auto_word, format_word, inner, j_matrix, small, word, Automorphism, Element, Gen, Group,
    Word,
};

#[derive(Clone, Debug)]
pub struct SapphireGroup {
    pub b: Mat2,
    pub theta: Mat2,
    pub root: PrimitiveRootData,
    pub group: Arc<Group>,
}

/// Gluing-matrix shapes for which closed formulas of a grade-1 `omega` exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcase {
    /// `B = (r,-t;-s,r)`, `theta = M^2` with `M = (r,s;t,r)`, `det M = 1`.
    SquareRoot,
    /// `B = (r,-t;s,-r)`, `theta = -M^2` with `M = (r,s;t,r)`, `det M = -1`.
    NegSquareRoot,
}

/// Case of the Out computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutCase {
    /// `Aut0^1` empty: `omega` has grade 2 and is inner modulo grade 0.
    I,
    /// Grade-1 `omega` from the `theta = M^2` family.
    II,
    /// Grade-1 `omega` from the `theta = -M^2` family.
    III,
    /// `Aut0^1` nonempty for a `B` outside both families.
    BeyondPaper,
}

impl fmt::Display for OutCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OutCase::I => "I",
            OutCase::II => "II",
            OutCase::III => "III",
            OutCase::BeyondPaper => "beyond-paper-case",
        };
        f.write_str(s)
    }
}

pub fn build(b: &Mat2) -> Result<SapphireGroup> {
    let det = b.det();
    if det == int(-1) {
        return Err(Error::DetMinusOne);
    }
    if !det.is_one() {
        return Err(Error::NotUnimodular);
    }
    if b.entries().iter().any(|x| x.is_zero()) {
        return Err(Error::TorusBundleDegenerate);
    }
    let group = Arc::new(Group::sapphire(b.clone())?);
    let theta = group.theta.clone();
    match classify(&theta)? {
        MatrixClass::Anosov => {}
        MatrixClass::Exceptional(_) => return Err(Error::NotSol),
    }
    let root = primitive_root(&theta)?;
    Ok(SapphireGroup { b: b.clone(), theta, root, group })
}

/// Affine image data `(m, n, p, q)`: `phi(a) = d^m b^n v^k a`, `phi(v) = d^p b^q v^sigma`.
fn images(matrix: &Mat2, sigma: i64, k: i64, x: &[BigInt]) -> Vec<Element> {
    vec![
        Element::lattice(matrix.col(0)),
        Element::lattice(matrix.col(1)),
        Element { w: Vec2::new(x[2].clone(), x[3].clone()), k: sigma, a: 0 },
        Element { w: Vec2::new(x[0].clone(), x[1].clone()), k, a: 1 },
    ]
}

fn params_of(phi: &Automorphism) -> Vec<BigInt> {
    let a = phi.image(Gen::A);
    let v = phi.image(Gen::V);
    vec![a.w.x.clone(), a.w.y.clone(), v.w.x.clone(), v.w.y.clone()]
}

/// Relator residuals `lhs rhs^-1`; `None` when a residual leaves the lattice.
fn residual(group: &Group, imgs: &[Element]) -> Option<Vec<BigInt>> {
    let lookup = |g: Gen| imgs[g as usize].clone();
    let mut out = Vec::new();
    for rel in group.relators() {
        let l = group.eval_word(&lookup, &rel.lhs);
        let r = group.eval_word(&lookup, &rel.rhs);
        let e = group.mul(&l, &group.inv(&r));
        if e.k != 0 || e.a != 0 {
            return None;
        }
        out.push(e.w.x);
        out.push(e.w.y);
    }
    Some(out)
}

/// The linear system for the unknowns `(m, n, p, q)` of a fixed restriction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtensionProblem {
    pub k: i64,
    pub delta: i8,
    /// Exponent of `M0` in the restriction `delta M0^ell`.
    pub ell: i64,
    pub matrix: Mat2,
    pub sigma: i64,
    pub system: IntMatrix,
    pub rhs: Vec<BigInt>,
}

/// All extensions of one restriction: `particular + span(kernel)`.
#[derive(Clone, Debug)]
pub struct ExtensionFamily {
    pub problem: ExtensionProblem,
    pub particular: Vec<BigInt>,
    pub kernel: Vec<Vec<BigInt>>,
    /// Composed with `rho` after solving; the parameters then describe `rho o phi`.
    pub sign_flip: Option<Automorphism>,
    pub representative: Automorphism,
}

impl ExtensionFamily {
    /// The member `particular + sum c_i kernel_i`, verified.
    pub fn member(&self, coeffs: &[BigInt]) -> Result<Automorphism> {
        let mut x = self.particular.clone();
        for (c, v) in coeffs.iter().zip(&self.kernel) {
            for i in 0..4 {
                x[i] += c * &v[i];
            }
        }
        let p = &self.problem;
        let phi = verified(&self.representative.group, images(&p.matrix, p.sigma, p.k, &x))?;
        Ok(match &self.sign_flip {
            Some(rho) => rho.compose(&phi),
            None => phi,
        })
    }

    pub fn contains(&self, phi: &Automorphism) -> bool {
        let base = match &self.sign_flip {
            Some(rho) => rho.compose(phi),
            None => phi.clone(),
        };
        let p = &self.problem;
        if base.matrix() != p.matrix || base.sigma() != p.sigma || base.grade() != p.k {
            return false;
        }
        let x = params_of(&base);
        let diff: Vec<BigInt> = x.iter().zip(&self.particular).map(|(a, b)| a - b).collect();
        if self.kernel.is_empty() {
            return diff.iter().all(|d| d.is_zero());
        }
        let mut m = IntMatrix::zeros(4, self.kernel.len());
        for (j, v) in self.kernel.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                m.set(i, j, x.clone());
            }
        }
        !matches!(solve_system(&m, &diff), SystemSolution::Inconsistent)
    }
}

fn verified(group: &Arc<Group>, imgs: Vec<Element>) -> Result<Automorphism> {
    check_endomorphism(group, imgs).map_err(|v| Error::Inconsistent(v.to_string()))
}

/// Solves for every extension of `d, b -> M` with `v` of sign `sigma` and `a` of grade `k`.
pub fn solve_restriction(group: &Arc<Group>, matrix: &Mat2, sigma: i64, k: i64) -> Result<Option<ExtensionFamily>> {
    let zero = vec![BigInt::zero(); 4];
    let Some(r0) = residual(group, &images(matrix, sigma, k, &zero)) else { return Ok(None) };
    let mut system = IntMatrix::zeros(r0.len(), 4);
    for i in 0..4 {
        let mut e = zero.clone();
        e[i] = BigInt::one();
        let ri = residual(group, &images(matrix, sigma, k, &e)).expect("lattice residual is independent of (m,n,p,q)");
        for (row, (a, b)) in ri.iter().zip(&r0).enumerate() {
            system.set(row, i, a - b);
        }
    }
    let rhs: Vec<BigInt> = r0.iter().map(|x| -x).collect();
    let problem = ExtensionProblem { k, delta: 1, ell: 0, matrix: matrix.clone(), sigma, system, rhs };
    let (particular, kernel) = match solve_system(&problem.system, &problem.rhs) {
        SystemSolution::Inconsistent => return Ok(None),
        SystemSolution::Affine { particular, basis } => (particular, basis),
    };
    // The residuals are affine in (m,n,p,q); the checks below confirm it.
    let representative = verified(group, images(matrix, sigma, k, &particular))?;
    let fam = ExtensionFamily { problem, particular, kernel, sign_flip: None, representative };
    for i in 0..fam.kernel.len() {
        let mut c = vec![BigInt::zero(); fam.kernel.len()];
        c[i] = BigInt::one();
        fam.member(&c)?;
    }
    Ok(Some(fam))
}

/// Result of the grade-1 existence decision.
#[derive(Clone, Debug)]
pub struct Aut01Verdict {
    pub nonempty: bool,
    /// Square roots of `theta` or `-theta` exist and the fundamental condition holds for `k = 1`.
    pub filter: bool,
    /// `false` when the negative filter verdict made the exact solve unnecessary.
    pub solved: bool,
    pub certificate: Option<Automorphism>,
}

/// A stated equality between automorphism words.
#[derive(Clone, Debug)]
pub struct StatedIdentity {
    pub label: String,
    pub lhs: Word,
    pub rhs: Word,
}

#[derive(Clone, Debug)]
pub struct IdentityCheck {
    pub label: String,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct SapphireAut {
    pub tree: StructureTree,
    pub presentation: Presentation,
    /// Grade of the `Z` generator `omega`: 1 or 2.
    pub omega_grade: i64,
    pub named: BTreeMap<String, Automorphism>,
}

#[derive(Clone, Debug)]
pub struct SapphireOut {
    pub tree: StructureTree,
    pub presentation: Presentation,
    pub order: BigInt,
    pub case: OutCase,
    pub beyond_paper: bool,
    /// Inner automorphisms as words: `kappa_d, kappa_b, kappa_v, kappa_a`.
    pub kappa: Vec<(String, Word)>,
    pub stated_shape: String,
    pub stated_order: Option<BigInt>,
    /// The case's displayed presentation with this group's integers substituted.
    pub stated_presentation: Option<Presentation>,
    pub named: BTreeMap<String, Automorphism>,
    pub notes: Vec<String>,
}

impl SapphireGroup {
    pub fn rstu(&self) -> (i64, i64, i64, i64) {
        (small(&self.b.a), small(&self.b.b), small(&self.b.c), small(&self.b.d))
    }

    pub fn subcase(&self) -> Option<Subcase> {
        let (r, _, _, u) = self.rstu();
        if r == u {
            Some(Subcase::SquareRoot)
        } else if u == -r {
            Some(Subcase::NegSquareRoot)
        } else {
            None
        }
    }

    /// `M = (r,s;t,r)` with `theta = +-M^2`, for the two families.
    pub fn subcase_root(&self) -> Option<Mat2> {
        let b = &self.b;
        match self.subcase()? {
            Subcase::SquareRoot => Some(Mat2::new(b.a.clone(), -&b.c, -&b.b, b.a.clone())),
            Subcase::NegSquareRoot => Some(Mat2::new(b.a.clone(), b.c.clone(), -&b.b, b.a.clone())),
        }
    }

    /// `2 ell = k ell0` and `eps^k det(M0)^ell = 1`.
    pub fn fundamental_condition(&self, k: i64, ell: i64) -> bool {
        let ell0 = self.root.ell as i64;
        if 2 * ell != k * ell0 {
            return false;
        }
        let eps: i64 = if self.root.eps < 0 && k.rem_euclid(2) == 1 { -1 } else { 1 };
        let det: i64 = if self.root.m0.det() == int(-1) && ell.rem_euclid(2) == 1 { -1 } else { 1 };
        eps * det == 1
    }

    /// Extensions of `delta M0^ell` with `ell = k ell0 / 2`; `delta = -1`
    /// is obtained from `delta = 1` by composing with `rho`.
    pub fn solve_extension(&self, k: i64, delta: i8) -> Result<Option<ExtensionFamily>> {
        let ell0 = self.root.ell as i64;
        if (k * ell0) % 2 != 0 {
            return Ok(None);
        }
        let ell = k * ell0 / 2;
        let m = self.root.m0.power(ell)?;
        let Some(mut fam) = solve_restriction(&self.group, &m, 1, k)? else { return Ok(None) };
        fam.problem.ell = ell;
        if k == 0 && fam.contains(&Automorphism::identity(&self.group)) {
            fam.particular = vec![BigInt::zero(); 4];
            fam.representative = Automorphism::identity(&self.group);
        }
        if delta < 0 {
            let rho = self.rho()?;
            fam.problem.delta = -1;
            fam.representative = rho.compose(&fam.representative);
            fam.sign_flip = Some(rho);
        }
        Ok(Some(fam))
    }

    pub fn aut01_filter(&self) -> Result<bool> {
        let ell0 = self.root.ell as i64;
        if ell0 % 2 != 0 || !self.fundamental_condition(1, ell0 / 2) {
            return Ok(false);
        }
        Ok(!sqrt_matrices(&self.theta)?.is_empty() || !sqrt_matrices(&-&self.theta)?.is_empty())
    }

    /// Exact solve for `k = 1`, independent of the filter.
    pub fn aut01_exact(&self) -> Result<Option<ExtensionFamily>> {
        match self.solve_extension(1, 1)? {
            Some(f) => Ok(Some(f)),
            None => self.solve_extension(1, -1),
        }
    }

    pub fn aut01_nonempty(&self) -> Result<Aut01Verdict> {
        let filter = self.aut01_filter()?;
        if !filter {
            return Ok(Aut01Verdict { nonempty: false, filter, solved: false, certificate: None });
        }
        let Some(fam) = self.aut01_exact()? else {
            return Ok(Aut01Verdict { nonempty: false, filter, solved: true, certificate: None });
        };
        let certificate = match self.family_omega()? {
            Some(w) => {
                let flipped = self.rho()?.compose(&w);
                if !fam.contains(&w) && !fam.contains(&flipped) {
                    return Err(Error::Inconsistent("closed-form omega is outside the solved family".into()));
                }
                w
            }
            None => fam.representative.clone(),
        };
        Ok(Aut01Verdict { nonempty: true, filter, solved: true, certificate: Some(certificate) })
    }

    fn exp(&self, x: i64, y: i64, k: i64, a: u8) -> Element {
        Element::new(x, y, k, a)
    }

    pub fn alpha(&self) -> Result<Automorphism> {
        let (r, s, t, _) = self.rstu();
        let i = Mat2::identity();
        verified(&self.group, vec![
            Element::lattice(i.col(0)),
            Element::lattice(i.col(1)),
            self.exp(r * t, -s * t, 1, 0),
            self.exp(0, 1, 0, 1),
        ])
    }

    pub fn beta(&self) -> Result<Automorphism> {
        let (_, _, t, u) = self.rstu();
        let i = Mat2::identity();
        verified(&self.group, vec![
            Element::lattice(i.col(0)),
            Element::lattice(i.col(1)),
            self.exp(t, -u, 1, 0),
            self.exp(0, 0, 0, 1),
        ])
    }

    pub fn rho(&self) -> Result<Automorphism> {
        let (r, s, _, u) = self.rstu();
        verified(&self.group, vec![
            self.exp(-1, 0, 0, 0),
            self.exp(0, -1, 0, 0),
            self.exp(r * (u - 1), s * (1 - u), 1, 0),
            self.exp(-1, 0, 0, 1),
        ])
    }

    pub fn zeta(&self) -> Result<Automorphism> {
        self.zeta_lambda(self.rstu().1)
    }

    /// The type II map with `zeta(v) = d^p b^q v^-1`, `p = r-(ru+st)+lambda t`,
    /// `q = (s-2su)+lambda u`; `lambda = s` is the involution `zeta`.
    pub fn zeta_lambda(&self, lambda: i64) -> Result<Automorphism> {
        let (r, s, t, u) = self.rstu();
        let p = r - (r * u + s * t) + lambda * t;
        let q = (s - 2 * s * u) + lambda * u;
        verified(&self.group, vec![self.exp(1, 0, 0, 0), self.exp(0, -1, 0, 0), self.exp(p, q, -1, 0), self.exp(0, 0, 0, 1)])
    }

    /// Closed-form grade-1 `omega` for the two families.
    pub fn family_omega(&self) -> Result<Option<Automorphism>> {
        let Some(m) = self.subcase_root() else { return Ok(None) };
        let (r, s, t) = (small(&m.a), small(&m.b), small(&m.c));
        let v = match self.subcase().expect("root implies subcase") {
            Subcase::SquareRoot => self.exp(r * r - r + s * t, t * (2 * r - 1), 1, 0),
            Subcase::NegSquareRoot => self.exp(-r, -t, 1, 0),
        };
        verified(&self.group, vec![Element::lattice(m.col(0)), Element::lattice(m.col(1)), v, self.exp(0, 0, 1, 1)])
            .map(Some)
    }

    /// Grade-2 `omega` acting on the lattice by `theta`.
    pub fn grade_two_omega(&self) -> Result<Automorphism> {
        let (r, s, t, u) = self.rstu();
        let th = &self.theta;
        verified(&self.group, vec![
            Element::lattice(th.col(0)),
            Element::lattice(th.col(1)),
            self.exp(4 * r * s * t, 2 * s - 4 * r * s * u, 1, 0),
            self.exp(r * u + s * t - r, s - 2 * s * u, 2, 1),
        ])
    }

    /// `omega`: the closed form for the two families, the solver's
    /// representative beyond them, and the grade-2 map when `Aut0^1` is empty.
    pub fn omega(&self) -> Result<Automorphism> {
        match self.aut01_nonempty()?.certificate {
            Some(w) => Ok(w),
            None => self.grade_two_omega(),
        }
    }

    pub fn named_automorphisms(&self) -> Result<BTreeMap<String, Automorphism>> {
        let mut m = BTreeMap::new();
        m.insert("alpha".to_string(), self.alpha()?);
        m.insert("beta".to_string(), self.beta()?);
        m.insert("rho".to_string(), self.rho()?);
        m.insert("omega".to_string(), self.omega()?);
        m.insert("zeta".to_string(), self.zeta()?);
        Ok(m)
    }

    pub fn out_case(&self) -> Result<OutCase> {
        if !self.aut01_nonempty()?.nonempty {
            return Ok(OutCase::I);
        }
        Ok(match self.subcase() {
            Some(Subcase::SquareRoot) => OutCase::II,
            Some(Subcase::NegSquareRoot) => OutCase::III,
            None => OutCase::BeyondPaper,
        })
    }

    /// `alpha^x beta^y rho^e` for a grade-0 automorphism of sign 1.
    pub fn decompose_grade0(&self, phi: &Automorphism) -> Result<Word> {
        let fail = || Error::Inconsistent(format!("{phi} is not in Aut0^0"));
        if phi.sigma() != 1 || phi.grade() != 0 {
            return Err(fail());
        }
        let rho = self.rho()?;
        let (psi, e) = if phi.matrix().is_identity() {
            (phi.clone(), 0)
        } else if phi.matrix() == Mat2::scalar(-1) {
            (phi.compose(&rho), 1)
        } else {
            return Err(fail());
        };
        let (r, s, t, u) = self.rstu();
        let a = psi.image(Gen::A);
        if !a.w.x.is_zero() {
            return Err(fail());
        }
        let x = a.w.y.clone();
        let c = psi.translation();
        let cx = &c.x - &x * int(r * t);
        let cy = &c.y + &x * int(s * t);
        let (y, rem) = num_integer::Integer::div_rem(&cx, &int(t));
        if !rem.is_zero() || cy != -&y * int(u) {
            return Err(fail());
        }
        let mut w = Vec::new();
        for (g, ex) in [("alpha", x), ("beta", y), ("rho", int(e))] {
            if !ex.is_zero() {
                w.push((g.to_string(), ex));
            }
        }
        let named = BTreeMap::from([
            ("alpha".to_string(), self.alpha()?),
            ("beta".to_string(), self.beta()?),
            ("rho".to_string(), rho),
        ]);
        if eval_auto_word(&self.group, &named, &w)? != *phi {
            return Err(fail());
        }
        Ok(w)
    }

    /// Word in `alpha, beta, rho, omega, zeta` equal to `phi`.
    pub fn decompose(&self, phi: &Automorphism, omega: &Automorphism) -> Result<Word> {
        if phi.sigma() < 0 {
            let zeta = self.zeta()?;
            let mut w = self.decompose(&phi.compose(&zeta), omega)?;
            w.push(("zeta".to_string(), BigInt::one()));
            return Ok(w);
        }
        let g = omega.grade();
        if phi.grade() % g != 0 {
            return Err(Error::Inconsistent(format!("grade {} is not a multiple of {g}", phi.grade())));
        }
        let j = phi.grade() / g;
        let mut w = self.decompose_grade0(&phi.compose(&omega.pow(&int(-j))))?;
        if j != 0 {
            w.push(("omega".to_string(), int(j)));
        }
        Ok(w)
    }

    fn conj_words(&self, top: &Automorphism, gens: &[&Automorphism], omega: &Automorphism) -> Result<Vec<Word>> {
        gens.iter().map(|g| self.decompose(&top.compose(g).compose(&top.inverse()), omega)).collect()
    }

    pub fn aut_structure(&self) -> Result<SapphireAut> {
        let named = self.named_automorphisms()?;
        let (alpha, beta, rho, omega, zeta) = (&named["alpha"], &named["beta"], &named["rho"], &named["omega"], &named["zeta"]);
        let lattice = StructureTree::Lattice { gens: ["alpha".into(), "beta".into()] };
        let aut00 = StructureTree::semidirect(lattice, "rho", Some(2), self.conj_words(rho, &[alpha, beta], omega)?);
        let aut0 = StructureTree::semidirect(aut00, "omega", None, self.conj_words(omega, &[alpha, beta, rho], omega)?);
        let tree =
            StructureTree::semidirect(aut0, "zeta", Some(2), self.conj_words(zeta, &[alpha, beta, rho, omega], omega)?);
        Ok(SapphireAut { presentation: tree.presentation(), tree, omega_grade: omega.grade(), named })
    }

    pub fn out_structure(&self) -> Result<SapphireOut> {
        let named = self.named_automorphisms()?;
        let (alpha, beta, rho, omega, zeta) = (&named["alpha"], &named["beta"], &named["rho"], &named["omega"], &named["zeta"]);
        let g = &self.group;
        let kd = self.decompose_grade0(&inner(g, &g.gen(Gen::D)))?;
        let kb = self.decompose_grade0(&inner(g, &g.gen(Gen::B)))?;
        let kv = self.decompose(&inner(g, &g.gen(Gen::V)), omega)?;
        let ka = self.decompose(&inner(g, &g.gen(Gen::A)), omega)?;
        let coeff = |w: &Word, name: &str| -> BigInt {
            w.iter().filter(|(n, _)| n == name).map(|(_, e)| e.clone()).sum()
        };
        for w in [&kd, &kb] {
            if w.iter().any(|(n, _)| n == "rho") {
                return Err(Error::Inconsistent("kappa_d or kappa_b involves rho".into()));
            }
        }
        let relations = Mat2::from_cols(
            &Vec2::new(coeff(&kd, "alpha"), coeff(&kd, "beta")),
            &Vec2::new(coeff(&kb, "alpha"), coeff(&kb, "beta")),
        );
        let q = StructureTree::Quotient { gens: ["alpha".into(), "beta".into()], relations };
        let k = StructureTree::semidirect(q, "rho", Some(2), self.conj_words(rho, &[alpha, beta], omega)?);
        let m = 2 / omega.grade();
        let tree = if m == 1 {
            k
        } else {
            // omega^2 = w_v^-1 o kappa_v, so omega^2 is w_v^-1 modulo inner automorphisms.
            let power = self.decompose_grade0(&omega.pow(&int(2)).compose(&inner(g, &g.gen(Gen::V)).inverse()))?;
            let action = self.conj_words(omega, &[alpha, beta, rho], omega)?;
            let kg = realize(&k)?;
            let trivial = kg.eval_word(&kg.assignment(), &power)? == 0;
            StructureTree::Extension {
                normal: Box::new(k),
                top: "omega".into(),
                order: Some(2),
                action,
                power: if trivial { Vec::new() } else { power },
            }
        };
        let _ = zeta;
        let order = tree.order().ok_or_else(|| Error::Inconsistent("Out tree is infinite".into()))?;
        let case = self.out_case()?;
        let (stated_shape, stated_order, stated_presentation) = self.stated_out(case);
        let mut notes = Vec::new();
        if case == OutCase::BeyondPaper {
            notes.push(format!(
                "Aut0^1 is nonempty for B = {} outside both closed-form families; the tree is derived from the solver's omega",
                self.b
            ));
        }
        if let Some(so) = &stated_order {
            if *so != order {
                notes.push(format!("stated order {so} differs from the computed order {order}"));
            }
        }
        Ok(SapphireOut {
            presentation: tree.presentation(),
            tree,
            order,
            beyond_paper: case == OutCase::BeyondPaper,
            case,
            kappa: vec![
                ("kappa_d".into(), kd),
                ("kappa_b".into(), kb),
                ("kappa_v".into(), kv),
                ("kappa_a".into(), ka),
            ],
            stated_shape,
            stated_order,
            stated_presentation,
            named,
            notes,
        })
    }

    /// Stated shape, order and presentation of a case, with integers substituted.
    fn stated_out(&self, case: OutCase) -> (String, Option<BigInt>, Option<Presentation>) {
        let comm = (word(&[("alpha", 1), ("beta", 1)]), word(&[("beta", 1), ("alpha", 1)]));
        let rho_rels = |n: i64| {
            vec![
                (word(&[("alpha", 2)]), vec![]),
                (word(&[("beta", n)]), vec![]),
                (word(&[("rho", 2)]), vec![]),
                comm.clone(),
                (word(&[("rho", 1), ("alpha", 1), ("rho", 1)]), word(&[("alpha", 1)])),
                (word(&[("rho", 1), ("beta", 1), ("rho", 1)]), word(&[("beta", -1)])),
            ]
        };
        match case {
            OutCase::I => {
                let s = self.rstu().1;
                let p = Presentation { generators: vec!["alpha".into(), "beta".into(), "rho".into()], relations: rho_rels(2 * s) };
                (format!("(Z2 + Z{}) x|_-1 Z2", 2 * s.abs()), Some(int(8 * s.abs())), Some(p))
            }
            OutCase::II | OutCase::III => {
                let m = self.subcase_root().expect("family case");
                let (r, s, t) = (small(&m.a), small(&m.b), small(&m.c));
                let mut rels = rho_rels(2 * t);
                let conj = |x: &str| word(&[("omega", 1), (x, 1), ("omega", -1)]);
                if case == OutCase::II {
                    rels.push((word(&[("omega", 2)]), vec![]));
                } else {
                    rels.push((word(&[("omega", 2)]), word(&[("beta", t), ("rho", 1)])));
                }
                rels.push((conj("alpha"), word(&[("alpha", r), ("beta", s * t)])));
                rels.push((conj("beta"), word(&[("alpha", 1), ("beta", r)])));
                rels.push((conj("rho"), word(&[("alpha", t), ("beta", t * (r + 1)), ("rho", 1)])));
                let p = Presentation {
                    generators: vec!["alpha".into(), "beta".into(), "rho".into(), "omega".into()],
                    relations: rels,
                };
                let shape = if case == OutCase::II {
                    format!("[(Z2 + Z{}) x|_-1 Z2] x|_omega Z2", 2 * t.abs())
                } else {
                    format!("extension of (Z2 + Z{}) x|_-1 Z2 by Z2 with omega^2 = beta^{t} rho", 2 * t.abs())
                };
                (shape, Some(int(16 * t.abs())), Some(p))
            }
            OutCase::BeyondPaper => ("not covered by the case list".into(), None, None),
        }
    }

    /// Displayed conjugation identities for this group's case, as exact equalities in `Aut(E)`.
    /// The `omega rho omega^-1` line appears with both signs; `sign_variant` marks those.
    pub fn stated_identities(&self) -> Result<Vec<StatedIdentity>> {
        let id = |label: String, lhs: Word, rhs: Word| StatedIdentity { label, lhs, rhs };
        let conj = |x: &str, y: &str| word(&[(x, 1), (y, 1), (x, -1)]);
        let zc = |y: &str| word(&[("zeta", 1), (y, 1), ("zeta", 1)]);
        let mut out = vec![
            id("rho^2 = 1".into(), word(&[("rho", 2)]), vec![]),
            id("zeta^2 = 1".into(), word(&[("zeta", 2)]), vec![]),
            id("zeta alpha zeta = alpha^-1".into(), zc("alpha"), word(&[("alpha", -1)])),
            id("zeta beta zeta = beta".into(), zc("beta"), word(&[("beta", 1)])),
            id("zeta rho zeta = rho".into(), zc("rho"), word(&[("rho", 1)])),
        ];
        match self.out_case()? {
            OutCase::I => {
                let (r, s, t, u) = self.rstu();
                let d = r * u + s * t;
                out.push(id(
                    format!("omega alpha omega^-1 = alpha^{d} beta^{}", 2 * r * s * t),
                    conj("omega", "alpha"),
                    word(&[("alpha", d), ("beta", 2 * r * s * t)]),
                ));
                out.push(id(
                    format!("omega beta omega^-1 = alpha^{} beta^{d}", 2 * u),
                    conj("omega", "beta"),
                    word(&[("alpha", 2 * u), ("beta", d)]),
                ));
                let (x, y) = (2 * s * (u + 1), 2 * r * s * (u + 1));
                out.push(id(
                    format!("omega rho omega^-1 = alpha^{x} beta^{y} rho"),
                    conj("omega", "rho"),
                    word(&[("alpha", x), ("beta", y), ("rho", 1)]),
                ));
                out.push(id(
                    format!("zeta omega zeta = alpha^{} beta^{y} omega^-1", -x),
                    zc("omega"),
                    word(&[("alpha", -x), ("beta", y), ("omega", -1)]),
                ));
            }
            OutCase::II | OutCase::III => {
                let m = self.subcase_root().expect("family case");
                let (r, s, t) = (small(&m.a), small(&m.b), small(&m.c));
                out.push(id(
                    format!("omega alpha omega^-1 = alpha^{r} beta^{}", s * t),
                    conj("omega", "alpha"),
                    word(&[("alpha", r), ("beta", s * t)]),
                ));
                out.push(id(format!("omega beta omega^-1 = alpha beta^{r}"), conj("omega", "beta"), word(&[("alpha", 1), ("beta", r)])));
                if self.out_case()? == OutCase::II {
                    out.push(id(
                        format!("zeta omega zeta = alpha^{t} beta^{} omega^-1", -t * (r + 1)),
                        zc("omega"),
                        word(&[("alpha", t), ("beta", -t * (r + 1)), ("omega", -1)]),
                    ));
                } else {
                    out.push(id(
                        format!("zeta omega zeta = alpha^{t} beta^{} rho omega^-1", -r * t),
                        zc("omega"),
                        word(&[("alpha", t), ("beta", -r * t), ("rho", 1), ("omega", -1)]),
                    ));
                }
            }
            OutCase::BeyondPaper => {}
        }
        Ok(out)
    }

    /// The two signed versions of the `omega rho omega^-1` identity for the families.
    pub fn omega_rho_variants(&self) -> Result<Option<[StatedIdentity; 2]>> {
        if !matches!(self.out_case()?, OutCase::II | OutCase::III) {
            return Ok(None);
        }
        let m = self.subcase_root().expect("family case");
        let (r, t) = (small(&m.a), small(&m.c));
        let lhs = word(&[("omega", 1), ("rho", 1), ("omega", -1)]);
        let mk = |sg: i64| StatedIdentity {
            label: format!("omega rho omega^-1 = alpha^{} beta^{} rho", sg * t, sg * t * (r + 1)),
            lhs: lhs.clone(),
            rhs: word(&[("alpha", sg * t), ("beta", sg * t * (r + 1)), ("rho", 1)]),
        };
        Ok(Some([mk(-1), mk(1)]))
    }

    /// Stated inner-automorphism words for this group's case.
    pub fn stated_kappa(&self) -> Result<Vec<StatedIdentity>> {
        let mk = |g: &str, rhs: Word| StatedIdentity { label: format!("kappa_{g} = {}", format_word(&rhs)), lhs: vec![], rhs };
        Ok(match self.out_case()? {
            OutCase::I => {
                let (r, s, _, _) = self.rstu();
                vec![
                    mk("d", word(&[("beta", -2 * s)])),
                    mk("b", word(&[("alpha", 2)])),
                    mk("v", word(&[("alpha", -2 * s), ("beta", -2 * r * s), ("omega", 1)])),
                    mk("a", word(&[("beta", -s), ("zeta", 1)])),
                ]
            }
            OutCase::II | OutCase::III => {
                let m = self.subcase_root().expect("family case");
                let (r, t) = (small(&m.a), small(&m.c));
                let kv = if self.out_case()? == OutCase::II {
                    word(&[("alpha", 2 * t), ("beta", 2 * r * t), ("omega", 2)])
                } else {
                    word(&[("beta", -t), ("rho", 1), ("omega", 2)])
                };
                vec![
                    mk("d", word(&[("beta", 2 * t)])),
                    mk("b", word(&[("alpha", 2)])),
                    mk("v", kv),
                    mk("a", word(&[("beta", t), ("zeta", 1)])),
                ]
            }
            OutCase::BeyondPaper => vec![],
        })
    }

    pub fn check_identities(&self, ids: &[StatedIdentity]) -> Result<Vec<IdentityCheck>> {
        let named = self.named_automorphisms()?;
        ids.iter()
            .map(|i| {
                let l = eval_auto_word(&self.group, &named, &i.lhs)?;
                let r = eval_auto_word(&self.group, &named, &i.rhs)?;
                Ok(IdentityCheck { label: i.label.clone(), holds: l == r })
            })
            .collect()
    }

    /// Checks each stated `kappa_g` word against conjugation by `g`.
    pub fn check_kappa(&self) -> Result<Vec<IdentityCheck>> {
        let named = self.named_automorphisms()?;
        let g = &self.group;
        self.stated_kappa()?
            .into_iter()
            .zip([Gen::D, Gen::B, Gen::V, Gen::A])
            .map(|(i, x)| {
                let r = eval_auto_word(g, &named, &i.rhs)?;
                Ok(IdentityCheck { label: i.label, holds: inner(g, &g.gen(x)) == r })
            })
            .collect()
    }

    /// Stated images of `omega^-1` on `v` and `a` for this group's case.
    pub fn stated_omega_inverse(&self) -> Result<Option<[Element; 2]>> {
        let e = |x: i64, y: i64, k: i64, a: u8| Element::new(x, y, k, a);
        Ok(match self.out_case()? {
            OutCase::I => {
                let (r, s, t, u) = self.rstu();
                Some([e(0, 2 * s, 1, 0), e(-8 * r * s * t * u + r - 1, 4 * s * u - 8 * r * s * u * u + s, -2, 1)])
            }
            OutCase::II | OutCase::III => {
                let m = self.subcase_root().expect("family case");
                let (r, s, t) = (small(&m.a), small(&m.b), small(&m.c));
                if self.out_case()? == OutCase::II {
                    Some([e(1 - r, -t, 1, 0), e(-2 * s * t + r - 1, t * (2 * r - 1), -1, 1)])
                } else {
                    Some([e(1, 0, 1, 0), e(2 * s * t - 1, -2 * r * t, -1, 1)])
                }
            }
            OutCase::BeyondPaper => None,
        })
    }

    /// Generators for the independent Out enumeration: every extension
    /// family of every unit restriction in a box around the lattice bases
    /// of `C(theta)` and `R(theta)`.
    pub fn oracle_generators(&self) -> Result<Vec<Automorphism>> {
        let mut gens = Vec::new();
        for (m, sigma) in crate::structgrp::unit_candidates(&self.theta)? {
            let target = &(&(&m * &j_matrix()) * &m.inverse()?) * &j_matrix();
            let Some(k) = discrete_log(&self.theta, &target) else { continue };
            if let Some(fam) = solve_restriction(&self.group, &m, sigma, k)? {
                gens.push(fam.representative.clone());
                for i in 0..fam.kernel.len() {
                    let mut c = vec![BigInt::zero(); fam.kernel.len()];
                    c[i] = BigInt::one();
                    gens.push(fam.member(&c)?);
                }
            }
        }
        Ok(gens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sap(r: i64, s: i64, t: i64, u: i64) -> SapphireGroup {
        build(&Mat2::new(r, s, t, u)).unwrap()
    }

    #[test]
    fn build_validation() {
        let g = Group::sapphire(Mat2::new(1, 2, 1, 1)).unwrap();
        assert_eq!(g.theta, Mat2::new(3, -2, -4, 3));
        assert_eq!(build(&Mat2::new(1, 2, 1, 1)).unwrap_err(), Error::DetMinusOne);
        assert_eq!(build(&Mat2::new(1, 1, 0, 1)).unwrap_err(), Error::TorusBundleDegenerate);
        assert_eq!(build(&Mat2::new(2, 2, 1, 1)).unwrap_err(), Error::NotUnimodular);
        assert_eq!(sap(2, 1, 1, 1).theta, Mat2::new(3, -4, -2, 3));
    }

    #[test]
    fn fundamental_condition_examples() {
        let g = sap(2, 1, 1, 1);
        assert!(g.fundamental_condition(0, 0));
        assert!(g.fundamental_condition(2, g.root.ell as i64));
        assert!(!g.fundamental_condition(1, 1));
        assert!(!g.aut01_filter().unwrap());
        assert!(g.aut01_exact().unwrap().is_none());
    }

    #[test]
    fn grade_zero_family_matches_closed_form() {
        let g = sap(2, 1, 1, 1);
        let fam = g.solve_extension(0, 1).unwrap().unwrap();
        assert!(fam.representative.is_identity());
        let (r, s, t, u) = g.rstu();
        for (n, c) in [(1i64, 0i64), (0, 1), (-3, 2), (5, -7)] {
            let phi = verified(&g.group, vec![
                Element::new(1, 0, 0, 0),
                Element::new(0, 1, 0, 0),
                Element::new(r * t * n + c * t, -s * t * n - c * u, 1, 0),
                Element::new(0, n, 0, 1),
            ])
            .unwrap();
            assert!(fam.contains(&phi));
        }
        assert!(g.solve_extension(2, 1).unwrap().is_some());
        assert!(g.solve_extension(2, -1).unwrap().unwrap().representative.matrix() == -&g.theta);
    }

    #[test]
    fn families_have_grade_one_omega() {
        let g = sap(3, 2, 4, 3);
        let v = g.aut01_nonempty().unwrap();
        assert!(v.nonempty && v.filter);
        let w = v.certificate.unwrap();
        assert_eq!(w.grade(), 1);
        assert_eq!(w.image(Gen::V), &Element::new(14, -10, 1, 0));
        assert_eq!(g.out_case().unwrap(), OutCase::II);
    }

    #[test]
    fn zeta_family() {
        let g = sap(2, 1, 1, 1);
        for l in -4..=4 {
            assert_eq!(g.zeta_lambda(l).unwrap().sigma(), -1);
        }
        let z = g.zeta().unwrap();
        assert!(z.compose(&z).is_identity());
    }

    #[test]
    fn out_case_one_order() {
        let g = sap(2, 1, 1, 1);
        let out = g.out_structure().unwrap();
        assert_eq!(out.case, OutCase::I);
        assert_eq!(out.order, int(8));
        assert!(out.notes.is_empty());
        for c in g.check_kappa().unwrap() {
            assert!(c.holds, "{}", c.label);
        }
    }
}
