//! Exact 2x2 integer matrices, small dense integer matrices, Smith normal
//! form and linear Diophantine systems.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub fn int(v: i64) -> BigInt {
    BigInt::from(v)
}

/// Column vector of two integers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vec2 {
    pub x: BigInt,
    pub y: BigInt,
}

impl Vec2 {
    pub fn new(x: impl Into<BigInt>, y: impl Into<BigInt>) -> Self {
        Vec2 { x: x.into(), y: y.into() }
    }

    pub fn zero() -> Self {
        Vec2::new(0, 0)
    }

    pub fn e1() -> Self {
        Vec2::new(1, 0)
    }

    pub fn e2() -> Self {
        Vec2::new(0, 1)
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero() && self.y.is_zero()
    }

    pub fn scale(&self, k: &BigInt) -> Vec2 {
        Vec2 { x: &self.x * k, y: &self.y * k }
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl Add for &Vec2 {
    type Output = Vec2;
    fn add(self, o: &Vec2) -> Vec2 {
        Vec2 { x: &self.x + &o.x, y: &self.y + &o.y }
    }
}

impl Sub for &Vec2 {
    type Output = Vec2;
    fn sub(self, o: &Vec2) -> Vec2 {
        Vec2 { x: &self.x - &o.x, y: &self.y - &o.y }
    }
}

impl Neg for &Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2 { x: -&self.x, y: -&self.y }
    }
}

/// 2x2 integer matrix `(a,b;c,d)`, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mat2 {
    pub a: BigInt,
    pub b: BigInt,
    pub c: BigInt,
    pub d: BigInt,
}

impl Mat2 {
    pub fn new(
        a: impl Into<BigInt>,
        b: impl Into<BigInt>,
        c: impl Into<BigInt>,
        d: impl Into<BigInt>,
    ) -> Self {
        Mat2 { a: a.into(), b: b.into(), c: c.into(), d: d.into() }
    }

    pub fn identity() -> Self {
        Mat2::new(1, 0, 0, 1)
    }

    pub fn zero() -> Self {
        Mat2::new(0, 0, 0, 0)
    }

    pub fn scalar(k: impl Into<BigInt>) -> Self {
        let k = k.into();
        Mat2 { a: k.clone(), b: BigInt::zero(), c: BigInt::zero(), d: k }
    }

    /// Matrix with the given columns.
    pub fn from_cols(c1: &Vec2, c2: &Vec2) -> Self {
        Mat2 { a: c1.x.clone(), b: c2.x.clone(), c: c1.y.clone(), d: c2.y.clone() }
    }

    pub fn col(&self, j: usize) -> Vec2 {
        match j {
            0 => Vec2 { x: self.a.clone(), y: self.c.clone() },
            _ => Vec2 { x: self.b.clone(), y: self.d.clone() },
        }
    }

    pub fn entries(&self) -> [&BigInt; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }

    pub fn det(&self) -> BigInt {
        &self.a * &self.d - &self.b * &self.c
    }

    pub fn trace(&self) -> BigInt {
        &self.a + &self.d
    }

    pub fn adjugate(&self) -> Mat2 {
        Mat2 { a: self.d.clone(), b: -&self.b, c: -&self.c, d: self.a.clone() }
    }

    pub fn is_unimodular(&self) -> bool {
        self.det().abs().is_one()
    }

    pub fn inverse(&self) -> Result<Mat2> {
        let det = self.det();
        if det.is_one() {
            Ok(self.adjugate())
        } else if (-&det).is_one() {
            Ok(-&self.adjugate())
        } else {
            Err(Error::NotUnimodular)
        }
    }

    /// Exact power; negative exponents require a unimodular matrix.
    pub fn power(&self, k: i64) -> Result<Mat2> {
        let base = if k < 0 { self.inverse()? } else { self.clone() };
        let mut e = k.unsigned_abs();
        let mut acc = Mat2::identity();
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &sq;
            }
            e >>= 1;
            if e > 0 {
                sq = &sq * &sq;
            }
        }
        Ok(acc)
    }

    pub fn scale(&self, k: &BigInt) -> Mat2 {
        Mat2 { a: &self.a * k, b: &self.b * k, c: &self.c * k, d: &self.d * k }
    }

    /// Entrywise exact division, `None` if some entry is not divisible.
    pub fn div_exact(&self, k: &BigInt) -> Option<Mat2> {
        if k.is_zero() {
            return None;
        }
        let mut out = Vec::with_capacity(4);
        for e in self.entries() {
            let (q, r) = e.div_rem(k);
            if !r.is_zero() {
                return None;
            }
            out.push(q);
        }
        let d = out.pop()?;
        let c = out.pop()?;
        let b = out.pop()?;
        let a = out.pop()?;
        Some(Mat2 { a, b, c, d })
    }

    pub fn is_identity(&self) -> bool {
        self.a.is_one() && self.d.is_one() && self.b.is_zero() && self.c.is_zero()
    }

    pub fn is_scalar(&self) -> bool {
        self.b.is_zero() && self.c.is_zero() && self.a == self.d
    }

    pub fn max_abs(&self) -> BigInt {
        self.entries().iter().map(|e| e.abs()).max().unwrap_or_default()
    }

    pub fn sum_abs(&self) -> BigInt {
        self.entries().iter().map(|e| e.abs()).sum()
    }

    /// Entrywise reduction to residues in {0,1}.
    pub fn mod2(&self) -> Mat2 {
        let two = int(2);
        Mat2 {
            a: self.a.mod_floor(&two),
            b: self.b.mod_floor(&two),
            c: self.c.mod_floor(&two),
            d: self.d.mod_floor(&two),
        }
    }

    pub fn commutes_with(&self, other: &Mat2) -> bool {
        self * other == other * self
    }

    /// Canonical CLI form `a,b;c,d`.
    pub fn to_arg(&self) -> String {
        format!("{},{};{},{}", self.a, self.b, self.c, self.d)
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{};{},{})", self.a, self.b, self.c, self.d)
    }
}

impl FromStr for Mat2 {
    type Err = Error;

    /// Parses `a,b;c,d`; whitespace anywhere and one pair of enclosing
    /// parentheses are tolerated.
    fn from_str(s: &str) -> Result<Mat2> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let body = compact
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .unwrap_or(&compact);
        let rows: Vec<&str> = body.split(';').collect();
        if rows.len() != 2 {
            return Err(Error::Parse(format!("expected two rows separated by ';' in {s:?}")));
        }
        let mut vals = Vec::with_capacity(4);
        for row in rows {
            let cells: Vec<&str> = row.split(',').collect();
            if cells.len() != 2 {
                return Err(Error::Parse(format!("expected two entries per row in {s:?}")));
            }
            for cell in cells {
                let v = cell
                    .parse::<BigInt>()
                    .map_err(|_| Error::Parse(format!("bad integer {cell:?}")))?;
                vals.push(v);
            }
        }
        let d = vals.pop().unwrap_or_default();
        let c = vals.pop().unwrap_or_default();
        let b = vals.pop().unwrap_or_default();
        let a = vals.pop().unwrap_or_default();
        Ok(Mat2 { a, b, c, d })
    }
}

impl Mul for &Mat2 {
    type Output = Mat2;
    fn mul(self, o: &Mat2) -> Mat2 {
        Mat2 {
            a: &self.a * &o.a + &self.b * &o.c,
            b: &self.a * &o.b + &self.b * &o.d,
            c: &self.c * &o.a + &self.d * &o.c,
            d: &self.c * &o.b + &self.d * &o.d,
        }
    }
}

impl Mul<&Vec2> for &Mat2 {
    type Output = Vec2;
    fn mul(self, v: &Vec2) -> Vec2 {
        Vec2 { x: &self.a * &v.x + &self.b * &v.y, y: &self.c * &v.x + &self.d * &v.y }
    }
}

impl Add for &Mat2 {
    type Output = Mat2;
    fn add(self, o: &Mat2) -> Mat2 {
        Mat2 { a: &self.a + &o.a, b: &self.b + &o.b, c: &self.c + &o.c, d: &self.d + &o.d }
    }
}

impl Sub for &Mat2 {
    type Output = Mat2;
    fn sub(self, o: &Mat2) -> Mat2 {
        Mat2 { a: &self.a - &o.a, b: &self.b - &o.b, c: &self.c - &o.c, d: &self.d - &o.d }
    }
}

impl Neg for &Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2 { a: -&self.a, b: -&self.b, c: -&self.c, d: -&self.d }
    }
}

/// Small dense integer matrix used for stacked linear systems.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IntMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, BigInt::one());
        }
        m
    }

    pub fn from_rows(rows: &[Vec<BigInt>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut m = IntMatrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, v.clone());
            }
        }
        m
    }

    pub fn from_mat2(m: &Mat2) -> Self {
        IntMatrix::from_rows(&[vec![m.a.clone(), m.b.clone()], vec![m.c.clone(), m.d.clone()]])
    }

    pub fn to_mat2(&self) -> Mat2 {
        assert!(self.rows == 2 && self.cols == 2);
        Mat2::new(self.get(0, 0).clone(), self.get(0, 1).clone(), self.get(1, 0).clone(), self.get(1, 1).clone())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigInt) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul(&self, o: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, o.rows);
        let mut out = IntMatrix::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let x = self.get(i, k);
                if x.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let idx = i * out.cols + j;
                    out.data[idx] += x * o.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * &v[j]).sum())
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<BigInt> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    fn swap_rows(&mut self, i: usize, k: usize) {
        if i == k {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(i * self.cols + j, k * self.cols + j);
        }
    }

    fn swap_cols(&mut self, j: usize, k: usize) {
        if j == k {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + j, i * self.cols + k);
        }
    }

    /// row_i += q * row_k
    fn add_row(&mut self, i: usize, k: usize, q: &BigInt) {
        for j in 0..self.cols {
            let t = self.get(k, j) * q;
            self.data[i * self.cols + j] += t;
        }
    }

    /// col_j += q * col_k
    fn add_col(&mut self, j: usize, k: usize, q: &BigInt) {
        for i in 0..self.rows {
            let t = self.get(i, k) * q;
            self.data[i * self.cols + j] += t;
        }
    }

    fn negate_row(&mut self, i: usize) {
        for j in 0..self.cols {
            let idx = i * self.cols + j;
            self.data[idx] = -&self.data[idx];
        }
    }
}

/// `U * A * V = S` with `U`, `V` unimodular and `S` diagonal with
/// nonnegative entries `s_0 | s_1 | ...`; the first `rank` are nonzero.
#[derive(Clone, Debug)]
pub struct Smith {
    pub u: IntMatrix,
    pub s: IntMatrix,
    pub v: IntMatrix,
    pub rank: usize,
}

impl Smith {
    pub fn diagonal(&self) -> Vec<BigInt> {
        (0..self.s.rows.min(self.s.cols)).map(|i| self.s.get(i, i).clone()).collect()
    }
}

pub fn smith(a: &IntMatrix) -> Smith {
    let (m, n) = (a.rows, a.cols);
    let mut s = a.clone();
    let mut u = IntMatrix::identity(m);
    let mut v = IntMatrix::identity(n);
    let mut t = 0;
    while t < m.min(n) {
        // Pivot: smallest nonzero entry of the trailing block.
        let mut best: Option<(usize, usize)> = None;
        for i in t..m {
            for j in t..n {
                let x = s.get(i, j);
                if !x.is_zero() && best.is_none_or(|(bi, bj)| x.abs() < s.get(bi, bj).abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        s.swap_rows(t, pi);
        u.swap_rows(t, pi);
        s.swap_cols(t, pj);
        v.swap_cols(t, pj);
        loop {
            let p = s.get(t, t).clone();
            let mut clean = true;
            for i in t + 1..m {
                if s.get(i, t).is_zero() {
                    continue;
                }
                let q = -s.get(i, t).div_floor(&p);
                s.add_row(i, t, &q);
                u.add_row(i, t, &q);
                if !s.get(i, t).is_zero() {
                    clean = false;
                }
            }
            for j in t + 1..n {
                if s.get(t, j).is_zero() {
                    continue;
                }
                let q = -s.get(t, j).div_floor(&p);
                s.add_col(j, t, &q);
                v.add_col(j, t, &q);
                if !s.get(t, j).is_zero() {
                    clean = false;
                }
            }
            if !clean {
                // A remainder smaller than the pivot survived; move it in.
                let mut best: Option<(usize, usize)> = None;
                let cands = (t + 1..m).map(|i| (i, t)).chain((t + 1..n).map(|j| (t, j)));
                for (i, j) in cands {
                    let x = s.get(i, j);
                    if !x.is_zero() && best.is_none_or(|(bi, bj)| x.abs() < s.get(bi, bj).abs()) {
                        best = Some((i, j));
                    }
                }
                if let Some((i, j)) = best {
                    if j == t {
                        s.swap_rows(t, i);
                        u.swap_rows(t, i);
                    } else {
                        s.swap_cols(t, j);
                        v.swap_cols(t, j);
                    }
                }
                continue;
            }
            // Divisibility chain: fold an offending row into row t.
            let mut offending = None;
            'scan: for i in t + 1..m {
                for j in t + 1..n {
                    if !s.get(i, j).mod_floor(&p).is_zero() {
                        offending = Some(i);
                        break 'scan;
                    }
                }
            }
            match offending {
                Some(i) => {
                    let one = BigInt::one();
                    s.add_row(t, i, &one);
                    u.add_row(t, i, &one);
                }
                None => break,
            }
        }
        if s.get(t, t).is_negative() {
            s.negate_row(t);
            u.negate_row(t);
        }
        t += 1;
    }
    Smith { u, s, v, rank: t }
}

/// Integer solution set of `A x = b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SystemSolution {
    Inconsistent,
    /// `{ particular + sum_i t_i basis_i : t in Z^k }`; the basis spans
    /// the integer kernel of `A`.
    Affine { particular: Vec<BigInt>, basis: Vec<Vec<BigInt>> },
}

pub fn solve_system(a: &IntMatrix, b: &[BigInt]) -> SystemSolution {
    assert_eq!(a.rows, b.len());
    let sm = smith(a);
    let c = sm.u.mul_vec(b);
    let mut y = vec![BigInt::zero(); a.cols];
    for (i, ci) in c.iter().enumerate() {
        if i < sm.rank {
            let (q, r) = ci.div_rem(sm.s.get(i, i));
            if !r.is_zero() {
                return SystemSolution::Inconsistent;
            }
            y[i] = q;
        } else if !ci.is_zero() {
            return SystemSolution::Inconsistent;
        }
    }
    let particular = sm.v.mul_vec(&y);
    let basis = (sm.rank..a.cols).map(|j| sm.v.column(j)).collect();
    SystemSolution::Affine { particular, basis }
}

/// Basis of the integer kernel of `A`.
pub fn kernel(a: &IntMatrix) -> Vec<Vec<BigInt>> {
    let sm = smith(a);
    (sm.rank..a.cols).map(|j| sm.v.column(j)).collect()
}

/// Smith form of a 2x2 matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnfResult {
    pub u: Mat2,
    pub s: Mat2,
    pub v: Mat2,
}

impl SnfResult {
    /// Orders of the cyclic factors of the cokernel; 0 stands for Z.
    pub fn invariant_factors(&self) -> [BigInt; 2] {
        [self.s.a.clone(), self.s.d.clone()]
    }
}

pub fn smith_normal_form(a: &Mat2) -> SnfResult {
    let sm = smith(&IntMatrix::from_mat2(a));
    SnfResult { u: sm.u.to_mat2(), s: sm.s.to_mat2(), v: sm.v.to_mat2() }
}

/// Integer solutions of a 2x2 system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinearSolution {
    NoSolution,
    Unique(Vec2),
    /// `{ particular + t * direction : t in Z }`
    Line { particular: Vec2, direction: Vec2 },
    /// Every vector solves the system (A = 0, b = 0).
    All,
}

impl LinearSolution {
    pub fn contains(&self, w: &Vec2) -> bool {
        match self {
            LinearSolution::NoSolution => false,
            LinearSolution::All => true,
            LinearSolution::Unique(p) => p == w,
            LinearSolution::Line { particular, direction } => {
                let diff = w - particular;
                // diff must be an integer multiple of direction.
                let cross = &diff.x * &direction.y - &diff.y * &direction.x;
                if !cross.is_zero() {
                    return false;
                }
                let (num, den) = if !direction.x.is_zero() {
                    (&diff.x, &direction.x)
                } else {
                    (&diff.y, &direction.y)
                };
                num.mod_floor(den).is_zero()
            }
        }
    }
}

pub fn solve_linear(a: &Mat2, b: &Vec2) -> LinearSolution {
    let rhs = [b.x.clone(), b.y.clone()];
    match solve_system(&IntMatrix::from_mat2(a), &rhs) {
        SystemSolution::Inconsistent => LinearSolution::NoSolution,
        SystemSolution::Affine { particular, basis } => {
            let p = Vec2::new(particular[0].clone(), particular[1].clone());
            match basis.len() {
                0 => LinearSolution::Unique(p),
                1 => LinearSolution::Line {
                    particular: p,
                    direction: Vec2::new(basis[0][0].clone(), basis[0][1].clone()),
                },
                _ => LinearSolution::All,
            }
        }
    }
}

/// Canonical residue of `w` in `Z^2 / L Z^2` for a nonsingular `L`:
/// coordinates reduced modulo the invariant factors.
pub fn quotient_coords(snf: &SnfResult, w: &Vec2) -> (BigInt, BigInt) {
    let c = &snf.u * w;
    (c.x.mod_floor(&snf.s.a), c.y.mod_floor(&snf.s.d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(a: i64, b: i64, c: i64, d: i64) -> Mat2 {
        Mat2::new(a, b, c, d)
    }

    #[test]
    fn products() {
        let x = m(3, -7, 2, 5);
        assert_eq!(&Mat2::identity() * &x, x);
        assert_eq!(&m(1, 1, 1, 0) * &m(1, 1, 1, 0), m(2, 1, 1, 1));
        assert_eq!(&m(0, -1, 1, 0) * &m(2, 1, 1, 1), m(-1, -1, 2, 1));
    }

    #[test]
    fn det_trace_inverse() {
        assert_eq!(m(2, 1, 1, 1).det(), int(1));
        assert_eq!(m(2, 1, 1, 1).trace(), int(3));
        assert_eq!(m(2, 5, 1, 3).inverse().unwrap(), m(3, -5, -1, 2));
        assert_eq!(m(2, 0, 0, 2).inverse(), Err(Error::NotUnimodular));
        assert_eq!(m(1, 1, 1, 0).inverse().unwrap(), m(0, 1, 1, -1));
    }

    #[test]
    fn powers() {
        let x = m(4, 9, -2, 7);
        assert_eq!(x.power(0).unwrap(), Mat2::identity());
        assert_eq!(m(1, 1, 1, 0).power(2).unwrap(), m(2, 1, 1, 1));
        assert_eq!(m(2, 1, 1, 1).power(-1).unwrap(), m(1, -1, -1, 2));
        assert_eq!(m(2, 0, 0, 2).power(-1), Err(Error::NotUnimodular));
        assert_eq!(m(2, 0, 0, 2).power(10).unwrap(), Mat2::scalar(1024));
    }

    #[test]
    fn snf_examples() {
        let r = smith_normal_form(&Mat2::identity());
        assert_eq!(r.s, Mat2::identity());
        let r = smith_normal_form(&m(-1, -1, -1, 0));
        assert_eq!(r.s, Mat2::identity());
        let r = smith_normal_form(&m(2, 0, 0, 4));
        assert_eq!(r.s, m(2, 0, 0, 4));
        let a = m(-2, 2, 4, -2);
        let r = smith_normal_form(&a);
        assert_eq!(r.s, m(2, 0, 0, 2));
        assert_eq!(&(&r.u * &a) * &r.v, r.s);
    }

    #[test]
    fn snf_rectangular() {
        let a = IntMatrix::from_rows(&[
            vec![int(2), int(4), int(4)],
            vec![int(-6), int(6), int(12)],
            vec![int(10), int(-4), int(-16)],
        ]);
        let sm = smith(&a);
        assert_eq!(sm.u.mul(&a).mul(&sm.v), sm.s);
        assert_eq!(sm.diagonal(), vec![int(2), int(6), int(12)]);
    }

    #[test]
    fn linear_examples() {
        assert_eq!(
            solve_linear(&Mat2::identity(), &Vec2::new(3, 4)),
            LinearSolution::Unique(Vec2::new(3, 4))
        );
        assert_eq!(solve_linear(&m(2, 0, 0, 0), &Vec2::new(1, 0)), LinearSolution::NoSolution);
        assert_eq!(solve_linear(&Mat2::zero(), &Vec2::zero()), LinearSolution::All);
    }

    #[test]
    fn rank_one_family_matches_parametrization() {
        // u p + t q = t n with B = (r,s;t,u) = (1,2;1,3), n = 2.
        let (r, s, t, u, n) = (1i64, 2i64, 1i64, 3i64, 2i64);
        let sol = solve_linear(&m(u, t, 0, 0), &Vec2::new(t * n, 0));
        let LinearSolution::Line { direction, .. } = &sol else { panic!("expected a line") };
        assert_eq!(direction.x.abs(), int(t));
        assert_eq!(direction.y.abs(), int(u));
        for c in -5..=5 {
            let p = r * t * n + c * t;
            let q = -s * t * n - c * u;
            assert!(sol.contains(&Vec2::new(p, q)));
        }
    }

    #[test]
    fn mod2_examples() {
        assert_eq!(m(1, 0, 0, -1).mod2(), Mat2::identity());
        assert_eq!(m(1, 1, 0, -1).mod2(), m(1, 1, 0, 1));
        assert_eq!(m(2, 2, 2, 2).mod2(), Mat2::zero());
    }

    #[test]
    fn parse_round_trip() {
        let x: Mat2 = " 2, -1 ; 10 ,3".parse().unwrap();
        assert_eq!(x, m(2, -1, 10, 3));
        assert_eq!(x.to_arg(), "2,-1;10,3");
        assert_eq!(x.to_arg().parse::<Mat2>().unwrap(), x);
        assert!("1,2,3;4".parse::<Mat2>().is_err());
        assert!("a,b;c,d".parse::<Mat2>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn parse_print_round_trip(a in any::<i64>(), b in any::<i64>(), c in any::<i64>(), d in any::<i64>()) {
                let x = m(a, b, c, d);
                prop_assert_eq!(x.to_arg().parse::<Mat2>().unwrap(), x.clone());
                prop_assert_eq!(format!("({} , {} ; {},{})", a, b, c, d).parse::<Mat2>().unwrap(), x);
            }

            #[test]
            fn unimodular_inverse(p in -50i64..=50, q in -50i64..=50, r in -50i64..=50, flip in any::<bool>()) {
                let x = &(&m(1, p, 0, 1) * &m(1, 0, q, 1)) * &m(1, r, 0, if flip { -1 } else { 1 });
                let y = x.inverse().unwrap();
                prop_assert!((&x * &y).is_identity());
            }
        }
    }
}
