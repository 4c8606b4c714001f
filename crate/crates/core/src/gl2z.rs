//! Structure theory of GL2(Z): classification, centralizers and primitive
//! roots, reversers, square roots and conjugacy.
//!
//! Conjugacy and reverser questions are reduced to one problem: the
//! solutions of a linear matrix equation `P A = B P` form a rank-2 lattice
//! with basis `P1, P2`, and a unimodular solution exists iff the binary
//! quadratic form `det(x P1 + y P2)` represents +1 or -1. That last
//! question is decided exactly by form reduction.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::intmat::{int, kernel, solve_linear, IntMatrix, LinearSolution, Mat2, Vec2};

/// Default cap on the centralizer coefficient scanned by `primitive_root`.
pub const DEFAULT_MAX_BETA: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExceptionalKind {
    /// Conjugate to (0,-1;1,0).
    Rotation4,
    /// Conjugate to (0,-1;1,1), order 6.
    Rotation6,
    /// Conjugate to -(0,-1;1,1), order 3.
    Rotation3,
    /// Conjugate to sign * (1,n;0,1), n >= 0.
    Parabolic { sign: i8, n: BigInt },
    /// Conjugate to (1,0;0,-1).
    Reflection,
    /// Conjugate to (1,1;0,-1).
    GlideReflection,
}

impl ExceptionalKind {
    pub fn representative(&self) -> Mat2 {
        match self {
            ExceptionalKind::Rotation4 => Mat2::new(0, -1, 1, 0),
            ExceptionalKind::Rotation6 => Mat2::new(0, -1, 1, 1),
            ExceptionalKind::Rotation3 => Mat2::new(0, 1, -1, -1),
            ExceptionalKind::Parabolic { sign, n } => {
                Mat2::new(1, n.clone(), 0, 1).scale(&int(i64::from(*sign)))
            }
            ExceptionalKind::Reflection => Mat2::new(1, 0, 0, -1),
            ExceptionalKind::GlideReflection => Mat2::new(1, 1, 0, -1),
        }
    }
}

impl fmt::Display for ExceptionalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExceptionalKind::Rotation4 => write!(f, "rotation of order 4"),
            ExceptionalKind::Rotation6 => write!(f, "rotation of order 6"),
            ExceptionalKind::Rotation3 => write!(f, "rotation of order 3"),
            ExceptionalKind::Parabolic { sign, n } => {
                let s = if *sign > 0 { "" } else { "-" };
                write!(f, "parabolic {s}(1,{n};0,1)")
            }
            ExceptionalKind::Reflection => write!(f, "reflection"),
            ExceptionalKind::GlideReflection => write!(f, "glide reflection"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MatrixClass {
    Exceptional(ExceptionalKind),
    Anosov,
}

pub fn classify(a: &Mat2) -> Result<MatrixClass> {
    let det = a.det();
    let tr = a.trace();
    if det.is_one() {
        let kind = match tr.to_i64() {
            Some(0) => ExceptionalKind::Rotation4,
            Some(1) => ExceptionalKind::Rotation6,
            Some(-1) => ExceptionalKind::Rotation3,
            Some(t @ (2 | -2)) => {
                let sign: i8 = if t > 0 { 1 } else { -1 };
                let n = (&a.scale(&int(i64::from(sign))) - &Mat2::identity())
                    .entries()
                    .into_iter()
                    .fold(BigInt::zero(), |g, e| g.gcd(e));
                ExceptionalKind::Parabolic { sign, n }
            }
            _ => return Ok(MatrixClass::Anosov),
        };
        Ok(MatrixClass::Exceptional(kind))
    } else if (-&det).is_one() {
        if !tr.is_zero() {
            return Ok(MatrixClass::Anosov);
        }
        let kind = if a.mod2().is_identity() {
            ExceptionalKind::Reflection
        } else {
            ExceptionalKind::GlideReflection
        };
        Ok(MatrixClass::Exceptional(kind))
    } else {
        Err(Error::NotUnimodular)
    }
}

pub fn is_anosov(a: &Mat2) -> bool {
    matches!(classify(a), Ok(MatrixClass::Anosov))
}

fn require_anosov(a: &Mat2) -> Result<()> {
    match classify(a)? {
        MatrixClass::Anosov => Ok(()),
        MatrixClass::Exceptional(_) => Err(Error::NotAnosov),
    }
}

/// `A = eps * m0^ell` with `m0` a primitive root of positive trace, `ell > 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimitiveRootData {
    pub m0: Mat2,
    pub ell: u64,
    pub eps: i8,
}

/// `(g, A')` with `A = d I + g A'`; the integer centralizer of a
/// non-scalar `A` is `{ p I + q A' }`.
pub fn centralizer_lattice(a: &Mat2) -> (BigInt, Mat2) {
    let g = a.b.gcd(&a.c).gcd(&(&a.a - &a.d));
    let shifted = a - &Mat2::scalar(a.d.clone());
    let prim = shifted.div_exact(&g).expect("gcd divides every entry");
    (g, prim)
}

pub fn primitive_root(a: &Mat2) -> Result<PrimitiveRootData> {
    primitive_root_capped(a, DEFAULT_MAX_BETA)
}

pub fn primitive_root_capped(a: &Mat2, max_beta: u64) -> Result<PrimitiveRootData> {
    require_anosov(a)?;
    let (g, ap) = centralizer_lattice(a);
    let tp = ap.trace();
    let dp = ap.det();
    let limit = g.to_u64().map_or(max_beta, |g| g.min(max_beta));
    let mut found: Vec<Mat2> = Vec::new();
    for q in 1..=limit {
        let q = int(q as i64);
        found = units_with_coefficient(&q, &tp, &dp)
            .into_iter()
            .map(|p| &Mat2::scalar(p) + &ap.scale(&q))
            .collect();
        if !found.is_empty() {
            break;
        }
    }
    if found.is_empty() {
        return Err(Error::CapExceeded(format!("no unit with coefficient <= {max_beta}")));
    }
    found.sort_by(|x, y| x.trace().abs().cmp(&y.trace().abs()).then_with(|| x.cmp(y)));
    let mut m = found.swap_remove(0);
    if m.trace().is_negative() {
        m = -&m;
    }
    orient_root(a, m)
}

/// Integers `p` with `det(p I + q A') = p^2 + p q tr' + q^2 det' = +-1`.
fn units_with_coefficient(q: &BigInt, tp: &BigInt, dp: &BigInt) -> Vec<BigInt> {
    let mut out = Vec::new();
    let qt = q * tp;
    for target in [1i64, -1] {
        let disc = &qt * &qt - int(4) * (q * q * dp - int(target));
        if disc.is_negative() {
            continue;
        }
        let s = disc.sqrt();
        if &s * &s != disc {
            continue;
        }
        for num in [-&qt + &s, -&qt - &s] {
            if num.is_even() {
                let p: BigInt = num / 2;
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Given a primitive root `m` of positive trace, find `ell > 0` and the
/// sign, replacing `m` by the positive-trace root of the opposite
/// orientation when `A` is a negative power of `m`.
fn orient_root(a: &Mat2, m: Mat2) -> Result<PrimitiveRootData> {
    let minv = m.inverse()?;
    let target = a.trace().abs();
    let mut fwd = m.clone();
    let mut bwd = minv.clone();
    let neg_a = -a;
    for ell in 1u64.. {
        if &fwd == a || fwd == neg_a {
            let eps = if &fwd == a { 1 } else { -1 };
            return Ok(PrimitiveRootData { m0: m, ell, eps });
        }
        if &bwd == a || bwd == neg_a {
            let root = if minv.trace().is_negative() { -&minv } else { minv };
            let pw = root.power(ell as i64)?;
            let eps = if &pw == a { 1 } else { -1 };
            return Ok(PrimitiveRootData { m0: root, ell, eps });
        }
        if ell >= 2 && fwd.trace().abs() > target && bwd.trace().abs() > target {
            break;
        }
        fwd = &fwd * &m;
        bwd = &bwd * &minv;
    }
    Err(Error::Inconsistent(format!("{a} is not a power of the unit {m}")))
}

/// `Some(i)` with `theta^i = r`, for Anosov `theta`.
pub fn discrete_log(theta: &Mat2, r: &Mat2) -> Option<i64> {
    if r.is_identity() {
        return Some(0);
    }
    if !r.commutes_with(theta) || !r.is_unimodular() {
        return None;
    }
    let inv = theta.inverse().ok()?;
    let target = r.trace().abs();
    let mut fwd = theta.clone();
    let mut bwd = inv.clone();
    for i in 1i64.. {
        if &fwd == r {
            return Some(i);
        }
        if &bwd == r {
            return Some(-i);
        }
        if i >= 2 && fwd.trace().abs() > target && bwd.trace().abs() > target {
            return None;
        }
        fwd = &fwd * theta;
        bwd = &bwd * &inv;
    }
    None
}

/// `Some((sign, j))` with `x = sign * m0^j`.
pub fn signed_log(m0: &Mat2, x: &Mat2) -> Option<(i8, i64)> {
    if let Some(j) = discrete_log_unit(m0, x) {
        return Some((1, j));
    }
    discrete_log_unit(m0, &-x).map(|j| (-1, j))
}

/// Like `discrete_log` but for an arbitrary hyperbolic unit base.
fn discrete_log_unit(m: &Mat2, r: &Mat2) -> Option<i64> {
    if r.is_identity() {
        return Some(0);
    }
    if !r.commutes_with(m) {
        return None;
    }
    let inv = m.inverse().ok()?;
    let target = r.trace().abs();
    let mut fwd = m.clone();
    let mut bwd = inv.clone();
    for i in 1i64.. {
        if &fwd == r {
            return Some(i);
        }
        if &bwd == r {
            return Some(-i);
        }
        if i >= 3 && fwd.trace().abs() > target && bwd.trace().abs() > target {
            return None;
        }
        fwd = &fwd * m;
        bwd = &bwd * &inv;
    }
    None
}

pub fn centralizer_contains(a: &Mat2, x: &Mat2) -> Result<bool> {
    let root = primitive_root(a)?;
    let commutes = x.is_unimodular() && x.commutes_with(a);
    let is_power = x.is_unimodular() && signed_log(&root.m0, x).is_some();
    if commutes != is_power {
        return Err(Error::Inconsistent(format!(
            "commutation and power tests disagree for {x} in C({a})"
        )));
    }
    Ok(commutes)
}

/// Binary quadratic form `a x^2 + b x y + c y^2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Form {
    pub a: BigInt,
    pub b: BigInt,
    pub c: BigInt,
}

impl Form {
    pub fn eval(&self, x: &BigInt, y: &BigInt) -> BigInt {
        &self.a * x * x + &self.b * x * y + &self.c * y * y
    }

    pub fn discriminant(&self) -> BigInt {
        &self.b * &self.b - int(4) * &self.a * &self.c
    }

    /// The form `(x, y) -> self(M (x, y))`.
    fn transform(&self, m: &Mat2) -> Form {
        let (p, q, r, s) = (&m.a, &m.b, &m.c, &m.d);
        Form {
            a: self.eval(p, r),
            b: int(2) * &self.a * p * q + &self.b * (p * s + q * r) + int(2) * &self.c * r * s,
            c: self.eval(q, s),
        }
    }
}

/// A primitive vector `(x, y)` with `f(x, y) = +-1`, if one exists.
pub fn represent_unit(f: &Form) -> Option<(BigInt, BigInt)> {
    let content = f.a.gcd(&f.b).gcd(&f.c);
    if !content.is_one() {
        return None;
    }
    let disc = f.discriminant();
    let w = if disc.is_negative() {
        definite_unit(f)
    } else if disc.is_zero() {
        degenerate_unit(f)
    } else {
        let s = disc.sqrt();
        if &s * &s == disc {
            split_unit(f, &s)
        } else {
            indefinite_unit(f, &s)
        }
    }?;
    debug_assert!(f.eval(&w.0, &w.1).abs().is_one());
    Some(w)
}

fn definite_unit(f: &Form) -> Option<(BigInt, BigInt)> {
    let sign = if f.a.is_positive() { int(1) } else { int(-1) };
    let mut g = Form { a: &f.a * &sign, b: &f.b * &sign, c: &f.c * &sign };
    let mut t = Mat2::identity();
    loop {
        if g.a > g.c {
            // Swap via (x, y) -> (-y, x).
            let m = Mat2::new(0, -1, 1, 0);
            g = g.transform(&m);
            t = &t * &m;
            continue;
        }
        let two_a = int(2) * &g.a;
        if g.b.abs() > g.a {
            // Translate b into (-a, a].
            let k = -(&g.b + &g.a).div_floor(&two_a);
            let m = Mat2::new(1, k, 0, 1);
            g = g.transform(&m);
            t = &t * &m;
            continue;
        }
        break;
    }
    g.a.is_one().then(|| (t.a.clone(), t.c.clone()))
}

fn degenerate_unit(f: &Form) -> Option<(BigInt, BigInt)> {
    // f = k (alpha x + beta y)^2 with k = +-1 and gcd(alpha, beta) = 1.
    let k = if f.a.is_positive() || (f.a.is_zero() && f.c.is_positive()) { int(1) } else { int(-1) };
    let alpha = (&f.a * &k).sqrt();
    let mut beta = (&f.c * &k).sqrt();
    if (&f.b * &k).is_negative() {
        beta = -beta;
    }
    let eg = alpha.extended_gcd(&beta);
    if !eg.gcd.abs().is_one() {
        return None;
    }
    Some((eg.x * &eg.gcd, eg.y * &eg.gcd))
}

fn split_unit(f: &Form, sqrt_disc: &BigInt) -> Option<(BigInt, BigInt)> {
    // Write f = k * (m1 x - n1 y) * (m2 x - n2 y) and make both factors units.
    let (l1, l2) = if f.a.is_zero() {
        // f = y (b x + c y)
        ((int(0), int(-1)), (f.b.clone(), -&f.c))
    } else {
        let two_a = int(2) * &f.a;
        let mut roots = Vec::new();
        for num in [-&f.b + sqrt_disc, -&f.b - sqrt_disc] {
            let g = num.gcd(&two_a);
            let (mut n, mut m) = (&num / &g, &two_a / &g);
            if m.is_negative() {
                n = -n;
                m = -m;
            }
            roots.push((m, n));
        }
        let k = &f.a / (&roots[0].0 * &roots[1].0);
        if !k.abs().is_one() {
            return None;
        }
        (roots[0].clone(), roots[1].clone())
    };
    let mat = Mat2::new(l1.0.clone(), -&l1.1, l2.0.clone(), -&l2.1);
    for (e1, e2) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        if let LinearSolution::Unique(v) = solve_linear(&mat, &Vec2::new(e1, e2)) {
            if f.eval(&v.x, &v.y).abs().is_one() {
                return Some((v.x, v.y));
            }
        }
    }
    None
}

fn indefinite_unit(f: &Form, s: &BigInt) -> Option<(BigInt, BigInt)> {
    let mut g = f.clone();
    let mut t = Mat2::identity();
    let hit = |g: &Form, t: &Mat2| {
        if g.a.abs().is_one() {
            Some((t.a.clone(), t.c.clone()))
        } else if g.c.abs().is_one() {
            Some((t.b.clone(), t.d.clone()))
        } else {
            None
        }
    };
    let is_reduced = |g: &Form| {
        let two_a = int(2) * g.a.abs();
        g.b.is_positive() && &g.b <= s && two_a > s - &g.b && two_a <= s + &g.b
    };
    let mut steps = 0usize;
    while !is_reduced(&g) {
        if let Some(w) = hit(&g, &t) {
            return Some(w);
        }
        rho_step(&mut g, &mut t, s);
        steps += 1;
        assert!(steps < 100_000, "form reduction failed to terminate");
    }
    let start = g.clone();
    loop {
        if let Some(w) = hit(&g, &t) {
            return Some(w);
        }
        rho_step(&mut g, &mut t, s);
        if g == start {
            return None;
        }
        steps += 1;
        assert!(steps < 10_000_000, "reduced cycle failed to close");
    }
}

/// One reduction step `(a, b, c) -> (c, b', (b'^2 - D) / 4c)`.
fn rho_step(g: &mut Form, t: &mut Mat2, s: &BigInt) {
    let c = g.c.clone();
    let two_c = int(2) * c.abs();
    let base = -&g.b;
    let b_new = if c.abs() > *s {
        // Representative of -b mod 2|c| in (-|c|, |c|].
        let r = (&base + c.abs() - int(1)).mod_floor(&two_c);
        r - c.abs() + int(1)
    } else {
        // Representative of -b mod 2|c| in (s - 2|c|, s].
        s - (s - &base).mod_floor(&two_c)
    };
    let tt = (&b_new + &g.b) / (int(2) * &c);
    let m = Mat2::new(0, -1, 1, tt);
    *g = g.transform(&m);
    *t = &*t * &m;
    debug_assert_eq!(g.b, b_new);
}

/// The lattice of integer solutions of `P A = B P`, as a basis.
fn intertwiner_basis(a: &Mat2, b: &Mat2) -> Vec<Mat2> {
    let units = [Mat2::new(1, 0, 0, 0), Mat2::new(0, 1, 0, 0), Mat2::new(0, 0, 1, 0), Mat2::new(0, 0, 0, 1)];
    let mut sys = IntMatrix::zeros(4, 4);
    for (k, e) in units.iter().enumerate() {
        let img = &(e * a) - &(b * e);
        for (i, v) in img.entries().into_iter().enumerate() {
            sys.set(i, k, v.clone());
        }
    }
    kernel(&sys)
        .into_iter()
        .map(|v| Mat2::new(v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone()))
        .collect()
}

/// The form `det(x P1 + y P2)`.
fn det_form(p1: &Mat2, p2: &Mat2) -> Form {
    Form {
        a: p1.det(),
        b: &p1.a * &p2.d + &p1.d * &p2.a - &p1.b * &p2.c - &p1.c * &p2.b,
        c: p2.det(),
    }
}

/// Some unimodular `P` with `P A P^-1 = B`.
pub fn conjugacy_test(a: &Mat2, b: &Mat2) -> Option<Mat2> {
    if a.det() != b.det() || a.trace() != b.trace() {
        return None;
    }
    if a == b {
        return Some(Mat2::identity());
    }
    let basis = intertwiner_basis(a, b);
    let p = match basis.len() {
        1 => basis[0].is_unimodular().then(|| basis[0].clone())?,
        2 => {
            let (x, y) = represent_unit(&det_form(&basis[0], &basis[1]))?;
            &basis[0].scale(&x) + &basis[1].scale(&y)
        }
        _ => return None,
    };
    let pinv = p.inverse().ok()?;
    (&(&p * a) * &pinv == *b).then_some(p)
}

pub fn homeo_test_torus_bundles(a: &Mat2, b: &Mat2) -> Result<bool> {
    require_anosov(a)?;
    require_anosov(b)?;
    Ok(conjugacy_test(a, b).is_some() || conjugacy_test(a, &b.inverse()?).is_some())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    /// Some reverser has det +1 (conjugate to the order-4 rotation).
    F1,
    /// Some reverser has det -1 and is the identity mod 2.
    F2,
    /// Some reverser has det -1 and is not the identity mod 2.
    F3,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::F1 => "F1",
            Family::F2 => "F2",
            Family::F3 => "F3",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReverserData {
    pub exists: bool,
    pub witness: Option<Mat2>,
    pub families: BTreeSet<Family>,
    /// `witness^2 = square_sign * I`.
    pub square_sign: Option<i8>,
}

pub fn reverser_family(x: &Mat2) -> Family {
    if x.det().is_one() {
        Family::F1
    } else if x.mod2().is_identity() {
        Family::F2
    } else {
        Family::F3
    }
}

fn square_sign(x: &Mat2) -> Option<i8> {
    let sq = x * x;
    if sq.is_identity() {
        Some(1)
    } else if (-&sq).is_identity() {
        Some(-1)
    } else {
        None
    }
}

/// Ordering used to pick a canonical representative: small entries first,
/// then a sign convention, then lexicographic.
fn witness_key(x: &Mat2) -> (BigInt, BigInt, Mat2) {
    (x.max_abs(), x.sum_abs(), x.clone())
}

fn sign_normalize(x: Mat2) -> Mat2 {
    let lead = if x.a.is_zero() { &x.c } else { &x.a };
    if lead.is_negative() {
        -&x
    } else {
        x
    }
}

/// Smallest element of `{ +- x m0^j }` under `witness_key`.
pub fn canonical_coset_rep(x: &Mat2, m0: &Mat2) -> Mat2 {
    let minv = m0.inverse().expect("primitive roots are unimodular");
    let size = |j: i64| -> BigInt {
        let p = if j >= 0 { m0.power(j) } else { minv.power(-j) }.expect("unimodular");
        (x * &p).max_abs()
    };
    // The entries of x m0^j grow geometrically away from a single valley.
    let mut center = 0i64;
    for dir in [1i64, -1] {
        while size(center + dir) < size(center) {
            center += dir;
        }
    }
    let mut best: Option<Mat2> = None;
    for j in center - 3..=center + 3 {
        let p = if j >= 0 { m0.power(j) } else { minv.power(-j) }.expect("unimodular");
        let cand = sign_normalize(x * &p);
        if best.as_ref().is_none_or(|b| witness_key(&cand) < witness_key(b)) {
            best = Some(cand);
        }
    }
    best.expect("window is nonempty")
}

pub fn find_reverser(a: &Mat2) -> Result<ReverserData> {
    require_anosov(a)?;
    let none = ReverserData { exists: false, witness: None, families: BTreeSet::new(), square_sign: None };
    if !a.det().is_one() {
        return Ok(none);
    }
    let ainv = a.inverse()?;
    let Some(raw) = conjugacy_test(a, &ainv) else { return Ok(none) };
    let root = primitive_root(a)?;
    let witness = canonical_coset_rep(&raw, &root.m0);
    debug_assert_eq!(&(&witness * a) * &witness.inverse()?, ainv);
    let families = families_from_witness(&witness, &root.m0);
    Ok(ReverserData { exists: true, square_sign: square_sign(&witness), witness: Some(witness), families })
}

/// Every reverser is `+- b0 m0^j`; its (det, mod 2) type is periodic in j
/// with period dividing 6.
fn families_from_witness(b0: &Mat2, m0: &Mat2) -> BTreeSet<Family> {
    let mut out = BTreeSet::new();
    let mut x = b0.clone();
    for _ in 0..6 {
        out.insert(reverser_family(&x));
        x = &x * m0;
    }
    out
}

pub fn family_membership(a: &Mat2) -> Result<BTreeSet<Family>> {
    let data = find_reverser(a)?;
    if !data.exists {
        return Err(Error::NoReverser);
    }
    Ok(data.families)
}

/// Some reverser of `a` of the given family, if any.
pub fn reverser_of_family(a: &Mat2, family: Family) -> Result<Option<Mat2>> {
    let data = find_reverser(a)?;
    let Some(b0) = data.witness else { return Ok(None) };
    let root = primitive_root(a)?;
    let mut x = b0;
    for _ in 0..6 {
        if reverser_family(&x) == family {
            return Ok(Some(canonical_coset_rep_same_family(&x, &root.m0, family)));
        }
        x = &x * &root.m0;
    }
    Ok(None)
}

/// Canonical representative among `+- x m0^(j)` restricted to one family.
fn canonical_coset_rep_same_family(x: &Mat2, m0: &Mat2, family: Family) -> Mat2 {
    let minv = m0.inverse().expect("unimodular");
    let mut best: Option<Mat2> = None;
    let mut consider = |cand: Mat2| {
        if reverser_family(&cand) == family && best.as_ref().is_none_or(|b| witness_key(&cand) < witness_key(b)) {
            best = Some(cand);
        }
    };
    let mut fwd = x.clone();
    let mut bwd = x.clone();
    for _ in 0..12 {
        consider(sign_normalize(fwd.clone()));
        consider(sign_normalize(bwd.clone()));
        fwd = &fwd * m0;
        bwd = &bwd * &minv;
    }
    best.unwrap_or_else(|| x.clone())
}

pub fn reidemeister_finite_flag(a: &Mat2, b: &Mat2) -> Result<bool> {
    let binv = b.inverse().map_err(|_| Error::NotAReverser)?;
    if &(b * a) * &binv != a.inverse()? {
        return Err(Error::NotAReverser);
    }
    Ok(!(&Mat2::identity() - &(b * a)).det().is_zero())
}

/// All integer `X` with `X^2 = A`, sorted.
pub fn sqrt_matrices(a: &Mat2) -> Result<Vec<Mat2>> {
    if a.is_scalar() {
        return Err(Error::DegenerateInput(format!("{a} is scalar")));
    }
    let det = a.det();
    if det.is_negative() {
        return Ok(Vec::new());
    }
    let root_det = det.sqrt();
    if &root_det * &root_det != det {
        return Ok(Vec::new());
    }
    let mut out: Vec<Mat2> = Vec::new();
    for delta in [root_det.clone(), -&root_det] {
        // X^2 - t X + delta I = 0 gives A = t X - delta I and t^2 = tr A + 2 delta.
        let t2 = a.trace() + int(2) * &delta;
        if t2.is_negative() {
            continue;
        }
        let t = t2.sqrt();
        if &t * &t != t2 || t.is_zero() {
            continue;
        }
        let Some(x) = (a + &Mat2::scalar(delta.clone())).div_exact(&t) else { continue };
        for cand in [x.clone(), -&x] {
            if &cand * &cand == *a && !out.contains(&cand) {
                out.push(cand);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(a: i64, b: i64, c: i64, d: i64) -> Mat2 {
        Mat2::new(a, b, c, d)
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&m(0, -1, 1, 0)).unwrap(), MatrixClass::Exceptional(ExceptionalKind::Rotation4));
        assert_eq!(classify(&m(2, 1, 1, 1)).unwrap(), MatrixClass::Anosov);
        assert_eq!(classify(&m(1, 0, 0, -1)).unwrap(), MatrixClass::Exceptional(ExceptionalKind::Reflection));
        assert_eq!(
            classify(&m(1, 1, 0, -1)).unwrap(),
            MatrixClass::Exceptional(ExceptionalKind::GlideReflection)
        );
        assert_eq!(
            classify(&m(-1, 3, 0, -1)).unwrap(),
            MatrixClass::Exceptional(ExceptionalKind::Parabolic { sign: -1, n: int(3) })
        );
        assert_eq!(classify(&m(1, 0, 0, 2)), Err(Error::NotUnimodular));
        assert_eq!(classify(&m(1, 1, 1, 0)).unwrap(), MatrixClass::Anosov);
    }

    #[test]
    fn primitive_root_examples() {
        let r = primitive_root(&m(2, 1, 1, 1)).unwrap();
        assert_eq!(r, PrimitiveRootData { m0: m(1, 1, 1, 0), ell: 2, eps: 1 });
        let r = primitive_root(&m(3, -2, -4, 3)).unwrap();
        assert_eq!(r, PrimitiveRootData { m0: m(1, -1, -2, 1), ell: 2, eps: 1 });
        let r = primitive_root(&m(1, 1, 1, 0)).unwrap();
        assert_eq!(r, PrimitiveRootData { m0: m(1, 1, 1, 0), ell: 1, eps: 1 });
        assert_eq!(primitive_root(&m(0, -1, 1, 0)), Err(Error::NotAnosov));
    }

    #[test]
    fn primitive_root_negative_power() {
        // -(2,1;1,1) = -(1,1;1,0)^2
        let r = primitive_root(&m(-2, -1, -1, -1)).unwrap();
        assert_eq!(r.ell, 2);
        assert_eq!(r.eps, -1);
        // (1,-1;-1,2) is the inverse of (2,1;1,1): a positive power of (0,1;1,-1)'s negative.
        let a = m(1, -1, -1, 2);
        let r = primitive_root(&a).unwrap();
        let pw = r.m0.power(r.ell as i64).unwrap().scale(&int(i64::from(r.eps)));
        assert_eq!(pw, a);
        assert!(r.m0.trace().is_positive());
    }

    #[test]
    fn centralizer_examples() {
        let a = m(2, 1, 1, 1);
        assert!(centralizer_contains(&a, &a).unwrap());
        assert!(centralizer_contains(&a, &m(-1, 0, 0, -1)).unwrap());
        assert!(!centralizer_contains(&a, &m(0, -1, 1, 0)).unwrap());
    }

    #[test]
    fn reverser_examples() {
        let r = find_reverser(&m(2, 1, 1, 1)).unwrap();
        assert_eq!(r.witness, Some(m(0, -1, 1, 0)));
        assert_eq!(r.square_sign, Some(-1));
        let r = find_reverser(&m(2, 5, 1, 3)).unwrap();
        assert_eq!(r.witness, Some(m(1, 1, 0, -1)));
        assert_eq!(r.square_sign, Some(1));
        let r = find_reverser(&m(1, 1, 1, 0)).unwrap();
        assert!(!r.exists);
    }

    #[test]
    fn families_examples() {
        let f = family_membership(&m(1, 1, 1, 2)).unwrap();
        assert_eq!(f, [Family::F1, Family::F3].into_iter().collect());
        let f = family_membership(&m(2, 5, 1, 3)).unwrap();
        assert_eq!(f, [Family::F3].into_iter().collect());
        assert!(family_membership(&m(2, 1, 1, 1)).unwrap().contains(&Family::F1));
        assert_eq!(family_membership(&m(1, 1, 1, 0)), Err(Error::NoReverser));
    }

    #[test]
    fn sqrt_examples() {
        assert_eq!(sqrt_matrices(&m(3, -2, -4, 3)).unwrap(), vec![m(-1, 1, 2, -1), m(1, -1, -2, 1)]);
        assert_eq!(sqrt_matrices(&m(2, 1, 1, 1)).unwrap(), vec![m(-1, -1, -1, 0), m(1, 1, 1, 0)]);
        assert!(!sqrt_matrices(&m(3, 2, 4, 3)).unwrap().is_empty());
        assert!(sqrt_matrices(&m(2, 5, 1, 3)).unwrap().is_empty());
        assert!(matches!(sqrt_matrices(&Mat2::identity()), Err(Error::DegenerateInput(_))));
        assert!(matches!(sqrt_matrices(&m(-1, 0, 0, -1)), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn conjugacy_examples() {
        let a = m(2, 1, 1, 1);
        assert_eq!(conjugacy_test(&a, &a), Some(Mat2::identity()));
        let p = m(1, 1, 0, 1);
        let b = &(&p * &a) * &p.inverse().unwrap();
        let w = conjugacy_test(&a, &b).unwrap();
        assert_eq!(&(&w * &a) * &w.inverse().unwrap(), b);
        // No symmetric det-1 trace-5 matrix is conjugate to (2,5;1,3).
        for x in -6i64..=11 {
            let d = 5 - x;
            let bb = x * d - 1;
            if bb < 0 {
                continue;
            }
            let y = (bb as f64).sqrt().round() as i64;
            if y * y == bb {
                assert!(conjugacy_test(&m(2, 5, 1, 3), &m(x, y, y, d)).is_none());
            }
        }
    }

    #[test]
    fn homeo_examples() {
        let a = m(2, 1, 1, 1);
        assert!(homeo_test_torus_bundles(&a, &a.inverse().unwrap()).unwrap());
        assert!(homeo_test_torus_bundles(&a, &a).unwrap());
        assert!(!homeo_test_torus_bundles(&a, &m(3, 2, 4, 3)).unwrap());
    }

    #[test]
    fn reidemeister_examples() {
        let a = m(2, 1, 1, 1);
        assert!(reidemeister_finite_flag(&a, &m(0, -1, 1, 0)).unwrap());
        let a = m(3, 2, 4, 3);
        assert!(!reidemeister_finite_flag(&a, &m(1, 0, 0, -1)).unwrap());
        // (a,b;d-a,d) with B = (1,1;0,-1)
        let a = m(2, 5, 1, 3);
        assert!(!reidemeister_finite_flag(&a, &m(1, 1, 0, -1)).unwrap());
        assert_eq!(reidemeister_finite_flag(&a, &Mat2::identity()), Err(Error::NotAReverser));
    }

    #[test]
    fn forms() {
        // x^2 - 5 y^2 represents -1 at (2,1).
        let f = Form { a: int(1), b: int(0), c: int(-5) };
        assert!(represent_unit(&f).is_some());
        // 3x^2 - y^2... content 1, D = 12; 3x^2 - y^2 = -1 at (0,1).
        assert!(represent_unit(&Form { a: int(3), b: int(0), c: int(-1) }).is_some());
        // 3x^2 - 5y^2 is +-1 only if 3x^2 = +-1 mod 5, and 2, 3 are not squares mod 5.
        assert!(represent_unit(&Form { a: int(3), b: int(0), c: int(-5) }).is_none());
        assert!(represent_unit(&Form { a: int(2), b: int(0), c: int(-3) }).is_some());
        // Definite forms.
        assert!(represent_unit(&Form { a: int(2), b: int(2), c: int(1) }).is_some());
        assert!(represent_unit(&Form { a: int(2), b: int(1), c: int(3) }).is_none());
        // Square discriminants.
        assert!(represent_unit(&Form { a: int(0), b: int(1), c: int(0) }).is_some());
        // (2x + y)(x + 3y): the factor system has determinant 5.
        assert!(represent_unit(&Form { a: int(2), b: int(7), c: int(3) }).is_none());
        assert!(represent_unit(&Form { a: int(1), b: int(2), c: int(1) }).is_some());
    }

    #[test]
    fn forms_agree_with_box_search() {
        // Any unit value found in a box must also be found by reduction.
        for a in -6i64..=6 {
            for b in -6i64..=6 {
                for c in -6i64..=6 {
                    let f = Form { a: int(a), b: int(b), c: int(c) };
                    if !f.a.gcd(&f.b).gcd(&f.c).is_one() {
                        continue;
                    }
                    let boxed = (-30i64..=30).any(|x| {
                        (-30i64..=30).any(|y| f.eval(&int(x), &int(y)).abs().is_one())
                    });
                    let found = represent_unit(&f);
                    if let Some((x, y)) = &found {
                        assert!(f.eval(x, y).abs().is_one(), "{f:?}");
                    }
                    if boxed {
                        assert!(found.is_some(), "{f:?}");
                    }
                }
            }
        }
    }
}
