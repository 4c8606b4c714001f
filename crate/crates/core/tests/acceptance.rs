//! Acceptance gate: one PASS/FAIL line per criterion, details indented below.
//! All comparisons are exact integer equalities; sample sizes and scan
//! bounds are pinned as constants.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use solgroups::cli::{random_anosov, random_unimodular};
use solgroups::error::Error;
use solgroups::gl2z::{
    classify, family_membership, find_reverser, homeo_test_torus_bundles, sqrt_matrices, Family, MatrixClass,
};
use solgroups::intmat::{int, Mat2};
use solgroups::sapphire::{self, OutCase, SapphireGroup, Subcase};
use solgroups::structgrp::{isomorphic, out_bruteforce, realize, OutSource, ISO_CAP};
use solgroups::torusbundle::{self, TorusBundleGroup};
use solgroups::words::{check_endomorphism, Element, Gen};

const SAPPHIRE_BOX: i64 = 4;
const TB_BOX: i64 = 8;
/// Admissible sapphires (det 1, rstu != 0, theta Anosov) in the box.
const SAPPHIRE_COUNT: usize = 112;
/// Anosov torus-bundle matrices in the box.
const TB_COUNT: usize = 1016;
const SQRT_SAMPLES: usize = 500;
const SQUARE_FAMILY_SAMPLE_LAMBDA: i64 = 10;
const SQUARE_FAMILY_LAMBDA: i64 = 6;
/// Cofactor range used when `lambda^2 - 1 = 0` leaves the other factor free.
const SQUARE_FAMILY_FREE_FACTOR: i64 = 10;
const SQRT_ANOSOV_BOUND: i64 = 30;
const REVERSER_SAMPLES: usize = 500;
const REVERSER_INPUT_BOUND: i64 = 10;
const REVERSER_SCAN_BOUND: i64 = 30;
const HOMEO_PAIRS: usize = 200;
const HOMEO_INPUT_BOUND: i64 = 20;
const SEED: u64 = 20_240_611;

struct Outcome {
    passed: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(failures: &[String], summary: String) -> Outcome {
        Outcome { passed: failures.is_empty(), summary, details: failures.iter().take(10).cloned().collect() }
    }
}

fn m(a: i64, b: i64, c: i64, d: i64) -> Mat2 {
    Mat2::new(a, b, c, d)
}

fn sapphires() -> Vec<SapphireGroup> {
    let n = SAPPHIRE_BOX;
    let mut out = Vec::new();
    for r in -n..=n {
        for s in -n..=n {
            for t in -n..=n {
                for u in -n..=n {
                    if let Ok(g) = sapphire::build(&m(r, s, t, u)) {
                        out.push(g);
                    }
                }
            }
        }
    }
    out
}

fn torus_bundles() -> Vec<TorusBundleGroup> {
    let n = TB_BOX;
    let mut out = Vec::new();
    for a in -n..=n {
        for b in -n..=n {
            for c in -n..=n {
                for d in -n..=n {
                    let x = m(a, b, c, d);
                    if x.is_unimodular() && matches!(classify(&x), Ok(MatrixClass::Anosov)) {
                        out.push(torusbundle::build(&x).expect("Anosov theta builds"));
                    }
                }
            }
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let groups = sapphires();
    let mut failures = Vec::new();
    let (mut identities, mut sign_checks) = (0, 0);
    if groups.len() != SAPPHIRE_COUNT {
        failures.push(format!("expected {SAPPHIRE_COUNT} admissible sapphires, found {}", groups.len()));
    }
    for g in &groups {
        let ids = g.stated_identities().expect("identities");
        for c in g.check_identities(&ids).expect("evaluate") {
            identities += 1;
            if !c.holds {
                failures.push(format!("B = {}: {} fails", g.b, c.label));
            }
        }
        // The Aut0 derivation's sign must hold exactly; the other sign is an Out-level statement.
        if let Some(v) = g.omega_rho_variants().expect("variants") {
            sign_checks += 1;
            let r = g.check_identities(&v).expect("evaluate");
            if !r[0].holds {
                failures.push(format!("B = {}: {} fails", g.b, r[0].label));
            }
        }
    }
    Outcome::new(
        &failures,
        format!("{} sapphires, {identities} identities exact, {sign_checks} omega rho omega^-1 sign checks", groups.len()),
    )
}

fn criterion_2() -> Outcome {
    let mut failures = Vec::new();
    let tbs = torus_bundles();
    if tbs.len() != TB_COUNT {
        failures.push(format!("expected {TB_COUNT} Anosov matrices, found {}", tbs.len()));
    }
    let mut n = 0;
    for g in &tbs {
        for (label, ok) in g.check_kappa_identities().expect("kappa") {
            n += 1;
            if !ok {
                failures.push(format!("theta = {}: {label} fails", g.theta));
            }
        }
    }
    let saps = sapphires();
    for g in &saps {
        for c in g.check_kappa().expect("kappa") {
            n += 1;
            if !c.holds {
                failures.push(format!("B = {}: {} fails", g.b, c.label));
            }
        }
    }
    Outcome::new(&failures, format!("{n} inner-automorphism words exact over {} torus bundles and {} sapphires", tbs.len(), saps.len()))
}

fn compare_out(tree: &solgroups::structgrp::StructureTree, source: OutSource<'_>) -> Result<usize, String> {
    let order = tree.order().ok_or("infinite tree")?;
    let real = realize(tree).map_err(|e| e.to_string())?;
    let bf = out_bruteforce(source).map_err(|e| e.to_string())?;
    if order != int(bf.order() as i64) {
        return Err(format!("tree order {order}, oracle {}", bf.order()));
    }
    if bf.order() > ISO_CAP {
        return Err(format!("order {} beyond the isomorphism cap", bf.order()));
    }
    if !isomorphic(&real, &bf.group, ISO_CAP).map_err(|e| e.to_string())? {
        return Err(format!("not isomorphic (order {order})"));
    }
    Ok(bf.order())
}

fn criterion_3() -> Outcome {
    let mut failures = Vec::new();
    let mut max_order = 0;
    let tbs = torus_bundles();
    for g in &tbs {
        let out = g.out_structure().expect("out");
        match compare_out(&out.tree, OutSource::TorusBundle(g)) {
            Ok(o) => max_order = max_order.max(o),
            Err(e) => failures.push(format!("theta = {}: {e}", g.theta)),
        }
    }
    let saps = sapphires();
    for g in &saps {
        let out = g.out_structure().expect("out");
        match compare_out(&out.tree, OutSource::Sapphire(g)) {
            Ok(o) => max_order = max_order.max(o),
            Err(e) => failures.push(format!("B = {}: {e}", g.b)),
        }
    }

    let tb = torusbundle::build(&m(2, 1, 1, 1)).expect("build");
    let tb_order = tb.out_structure().expect("out").order;
    if tb_order != int(8) {
        failures.push(format!("anchor theta = (2,1;1,1): |Out| = {tb_order}, want 8"));
    }

    let sap = sapphire::build(&m(2, 1, 1, 1)).expect("build");
    let out = sap.out_structure().expect("out");
    // (Z2 + Z_2|s|) x| Z2 with s = 1.
    let expected_tree = "((Z2 + Z2) x| Z2)";
    if out.order != int(8) || out.case != OutCase::I || out.tree.to_string() != expected_tree {
        failures.push(format!(
            "anchor sapphire (2,1;1,1): |Out| = {}, case {}, tree {}; want 8, I, {expected_tree}",
            out.order, out.case, out.tree
        ));
    }

    let mut notes = Vec::new();
    match sapphire::build(&m(1, 2, 1, 1)) {
        Ok(g) => {
            let out = g.out_structure().expect("out");
            if out.order != int(32) || out.case != OutCase::II {
                failures.push(format!("anchor sapphire (1,2;1,1): |Out| = {}, case {}; want 32, II", out.order, out.case));
            }
        }
        Err(e) => {
            failures.push(format!("anchor sapphire (1,2;1,1): rejected ({e}); want |Out| = 32, case II"));
            for alt in [m(3, 2, 4, 3), m(1, -2, 1, -1)] {
                let g = sapphire::build(&alt).expect("build");
                let o = g.out_structure().expect("out");
                notes.push(format!("reference: sapphire {alt} has |Out| = {}, case {}", o.order, o.case));
            }
        }
    }
    let mut outcome = Outcome::new(
        &failures,
        format!(
            "{} torus bundles and {} sapphires match the oracle in order and isomorphism type (max order {max_order}); 3 anchors",
            tbs.len(),
            saps.len()
        ),
    );
    outcome.details.extend(notes);
    outcome
}

fn criterion_4() -> Outcome {
    let mut failures = Vec::new();
    let cases = [
        (m(1, 1, 1, 2), BTreeSet::from([Family::F1, Family::F3])),
        (m(2, 5, 1, 3), BTreeSet::from([Family::F3])),
    ];
    for (a, want) in &cases {
        match family_membership(a) {
            Ok(got) if &got == want => {}
            Ok(got) => failures.push(format!("{a}: families {got:?}, want {want:?}")),
            Err(e) => failures.push(format!("{a}: {e}")),
        }
    }
    Outcome::new(&failures, "(1,1;1,2) in F1 and F3; (2,5;1,3) in F3 only".into())
}

/// All `X` with `X^2 = A`, entries in `[-k, k]` with `k = 1 + max|A|`, for
/// non-scalar `A`. A root with zero trace would force `A` scalar, so the
/// trace is nonzero and the off-diagonal entries follow from the diagonal.
fn sqrt_bruteforce(a: &Mat2) -> Vec<Mat2> {
    let e: Vec<i64> = a.entries().iter().map(|x| i64::try_from(*x).expect("small")).collect();
    let k = 1 + e.iter().map(|x| x.abs()).max().unwrap_or(0);
    let mut out = Vec::new();
    for p in -k..=k {
        for s in -k..=k {
            let tr = p + s;
            if tr == 0 || e[1] % tr != 0 || e[2] % tr != 0 {
                continue;
            }
            let (q, r) = (e[1] / tr, e[2] / tr);
            if p * p + q * r == e[0] && s * s + q * r == e[3] {
                out.push(m(p, q, r, s));
            }
        }
    }
    out.sort_by_key(|x| x.to_arg());
    out
}

fn sorted(mut v: Vec<Mat2>) -> Vec<Mat2> {
    v.sort_by_key(|x| x.to_arg());
    v
}

/// `(2l^2 +- 1, 2l y1; 2l z1, 2l^2 +- 1)` with `y1 z1 = l^2 +- 1`: the `(x, 2y; 2z, x)` matrices that have square roots.
fn square_family(lambda: i64, plus: bool, y1: i64, z1: i64) -> Mat2 {
    let diag = 2 * lambda * lambda + if plus { 1 } else { -1 };
    m(diag, 2 * lambda * y1, 2 * lambda * z1, diag)
}

/// Every `(y1, z1)` with `y1 z1 = n`; for `n = 0` one factor is zero and the other ranges freely.
fn factorizations(n: i64) -> Vec<(i64, i64)> {
    if n == 0 {
        let mut v: Vec<(i64, i64)> = (-SQUARE_FAMILY_FREE_FACTOR..=SQUARE_FAMILY_FREE_FACTOR).map(|z| (0, z)).collect();
        v.extend((-SQUARE_FAMILY_FREE_FACTOR..=SQUARE_FAMILY_FREE_FACTOR).filter(|y| *y != 0).map(|y| (y, 0)));
        return v;
    }
    let mut v = Vec::new();
    for y in 1..=n.abs() {
        if n % y == 0 {
            v.push((y, n / y));
            v.push((-y, -n / y));
        }
    }
    v
}

fn criterion_5() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let check = |a: &Mat2, failures: &mut Vec<String>, must_have_root: bool| match sqrt_matrices(a) {
        Ok(got) => {
            let got = sorted(got);
            let want = sqrt_bruteforce(a);
            if got != want {
                failures.push(format!("{a}: sqrt {got:?}, scan {want:?}"));
            }
            if must_have_root && got.is_empty() {
                failures.push(format!("{a}: no root reported"));
            }
        }
        Err(e) => failures.push(format!("{a}: {e}")),
    };
    for _ in 0..SQRT_SAMPLES {
        let lambda = loop {
            let l = rng.gen_range(-SQUARE_FAMILY_SAMPLE_LAMBDA..=SQUARE_FAMILY_SAMPLE_LAMBDA);
            if l != 0 {
                break l;
            }
        };
        let plus = rng.gen_bool(0.5);
        let f = factorizations(lambda * lambda + if plus { 1 } else { -1 });
        let (y1, z1) = f[rng.gen_range(0..f.len())];
        check(&square_family(lambda, plus, y1, z1), &mut failures, true);
    }
    for _ in 0..SQRT_SAMPLES {
        let a = random_anosov(&mut rng, SQRT_ANOSOV_BOUND);
        check(&a, &mut failures, false);
    }
    let mut instances = 0;
    for lambda in -SQUARE_FAMILY_LAMBDA..=SQUARE_FAMILY_LAMBDA {
        for plus in [true, false] {
            for (y1, z1) in factorizations(lambda * lambda + if plus { 1 } else { -1 }) {
                let a = square_family(lambda, plus, y1, z1);
                instances += 1;
                if a.is_scalar() {
                    // A = +-I (lambda = 0, or y1 = z1 = 0): infinitely many roots, rejected as
                    // degenerate; I^2 = I and J^2 = -I witness existence.
                    let witness = if a.is_identity() { Mat2::identity() } else { m(0, -1, 1, 0) };
                    let degenerate = matches!(sqrt_matrices(&a), Err(Error::DegenerateInput(_)));
                    if !degenerate || &witness * &witness != a {
                        failures.push(format!("{a}: scalar instance not handled as degenerate"));
                    }
                } else {
                    check(&a, &mut failures, true);
                }
            }
        }
    }
    Outcome::new(
        &failures,
        format!("{SQRT_SAMPLES} square-family and {SQRT_SAMPLES} Anosov samples match the scan; {instances} square-family instances with lambda in [-{SQUARE_FAMILY_LAMBDA},{SQUARE_FAMILY_LAMBDA}] have roots (scalar ones via the degenerate path)"),
    )
}

fn small_entries(a: &Mat2) -> [i64; 4] {
    let e = a.entries();
    [0, 1, 2, 3].map(|i| i64::try_from(e[i]).expect("small"))
}

/// Every unimodular `B` with entries in `[-k, k]` and `B A = A^-1 B`.
fn reversers_bruteforce(a: &Mat2, k: i64) -> Vec<[i64; 4]> {
    let [a0, a1, a2, a3] = small_entries(a);
    let [i0, i1, i2, i3] = small_entries(&a.inverse().expect("unit"));
    let mut out = Vec::new();
    let mut test = |b: [i64; 4]| {
        let [p, q, r, s] = b;
        let lhs = [p * a0 + q * a2, p * a1 + q * a3, r * a0 + s * a2, r * a1 + s * a3];
        let rhs = [i0 * p + i1 * r, i0 * q + i1 * s, i2 * p + i3 * r, i2 * q + i3 * s];
        if lhs == rhs {
            out.push(b);
        }
    };
    for p in -k..=k {
        for q in -k..=k {
            for r in -k..=k {
                for det in [1, -1] {
                    if p == 0 {
                        if q * r == -det {
                            for s in -k..=k {
                                test([p, q, r, s]);
                            }
                        }
                    } else if (det + q * r) % p == 0 {
                        let s = (det + q * r) / p;
                        if s.abs() <= k {
                            test([p, q, r, s]);
                        }
                    }
                }
            }
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut found = 0;
    for _ in 0..REVERSER_SAMPLES {
        let a = random_anosov(&mut rng, REVERSER_INPUT_BOUND);
        let data = match find_reverser(&a) {
            Ok(d) => d,
            Err(e) => {
                failures.push(format!("{a}: {e}"));
                continue;
            }
        };
        let brute = reversers_bruteforce(&a, REVERSER_SCAN_BOUND);
        if data.exists != !brute.is_empty() {
            failures.push(format!("{a}: exists = {}, scan found {}", data.exists, brute.len()));
        }
        for [p, q, r, s] in &brute {
            let b = m(*p, *q, *r, *s);
            let sq = &b * &b;
            if !(sq.is_identity() || sq == Mat2::scalar(-1)) {
                failures.push(format!("{a}: scanned reverser {b} has B^2 = {sq}"));
            }
        }
        if let Some(b) = &data.witness {
            found += 1;
            let sq = b * b;
            let ok = &(b * &a) * &b.inverse().expect("unit") == a.inverse().expect("unit")
                && (sq.is_identity() || sq == Mat2::scalar(-1))
                && *b != Mat2::scalar(-1);
            if !ok {
                failures.push(format!("{a}: witness {b} fails"));
            }
        }
    }
    Outcome::new(
        &failures,
        format!("{REVERSER_SAMPLES} random Anosov matrices agree with the scan over entries <= {REVERSER_SCAN_BOUND}; {found} witnesses verified"),
    )
}

/// Images of the closed-form `omega` from the family tables, built directly from `B`.
fn omega_table(g: &SapphireGroup) -> [Element; 4] {
    let [r, s, t, _] = small_entries(&g.b);
    let (rr, ss, tt, v) = match g.subcase().expect("family") {
        // M = (r,-t;-s,r)
        Subcase::SquareRoot => {
            let (rr, ss, tt) = (r, -t, -s);
            (rr, ss, tt, Element::new(rr * rr - rr + ss * tt, tt * (2 * rr - 1), 1, 0))
        }
        // M = (r,t;-s,r)
        Subcase::NegSquareRoot => {
            let (rr, ss, tt) = (r, t, -s);
            (rr, ss, tt, Element::new(-rr, -tt, 1, 0))
        }
    };
    [Element::new(rr, tt, 0, 0), Element::new(ss, rr, 0, 0), v, Element::new(0, 0, 1, 1)]
}

fn criterion_7() -> Outcome {
    let mut failures = Vec::new();
    let (mut agree, mut families) = (0, 0);
    for g in sapphires() {
        let filter = g.aut01_filter().expect("filter");
        let exact = g.aut01_exact().expect("solver").is_some();
        if !filter && exact {
            failures.push(format!("B = {}: filter rejects but the solver finds a grade-1 map", g.b));
        }
        if filter == exact {
            agree += 1;
        }
        if g.subcase().is_some() {
            families += 1;
            let verdict = g.aut01_nonempty().expect("verdict");
            let want = omega_table(&g);
            match verdict.certificate {
                Some(w) if verdict.nonempty => {
                    let images: Vec<Element> = [Gen::D, Gen::B, Gen::V, Gen::A].iter().map(|x| w.image(*x).clone()).collect();
                    if check_endomorphism(&g.group, images.clone()).is_err() {
                        failures.push(format!("B = {}: omega fails the relators", g.b));
                    }
                    if images != want {
                        failures.push(format!("B = {}: omega images {images:?}, table {want:?}", g.b));
                    }
                }
                _ => failures.push(format!("B = {}: family member reported empty", g.b)),
            }
        }
    }
    Outcome::new(
        &failures,
        format!("filter never contradicts the solver ({agree} exact agreements); {families} family members have a verified omega matching the tables"),
    )
}

fn companion(a: &Mat2) -> Mat2 {
    Mat2::new(int(0), -a.det(), int(1), a.trace())
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut verdicts: BTreeMap<bool, usize> = BTreeMap::new();
    let homeo = |x: &Mat2, y: &Mat2| homeo_test_torus_bundles(x, y).expect("Anosov inputs");
    for _ in 0..HOMEO_PAIRS {
        let a = random_anosov(&mut rng, HOMEO_INPUT_BOUND);
        let p = random_unimodular(&mut rng, 8);
        let q = random_unimodular(&mut rng, 8);
        let conj = |x: &Mat2, p: &Mat2| &(p * x) * &p.inverse().expect("unit");
        if !homeo(&a, &a.inverse().expect("unit")) {
            failures.push(format!("{a}: not homeomorphic to its inverse"));
        }
        if !homeo(&a, &conj(&a, &p)) {
            failures.push(format!("{a}: not homeomorphic to its conjugate by {p}"));
        }
        // Same characteristic polynomial, so the verdict is a genuine class comparison.
        let b = if rng.gen_bool(0.5) { companion(&a) } else { random_anosov(&mut rng, HOMEO_INPUT_BOUND) };
        let v = homeo(&a, &b);
        *verdicts.entry(v).or_default() += 1;
        if v != homeo(&b, &a) {
            failures.push(format!("({a}, {b}): not symmetric"));
        }
        if v != homeo(&conj(&a, &p), &conj(&b, &q)) {
            failures.push(format!("({a}, {b}): not conjugation invariant"));
        }
    }
    let yes = verdicts.get(&true).copied().unwrap_or(0);
    let no = verdicts.get(&false).copied().unwrap_or(0);
    Outcome::new(&failures, format!("{HOMEO_PAIRS} constructed pairs; symmetry and invariance over {yes} positive and {no} negative verdicts"))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("presentation identities", criterion_1),
        ("inner-automorphism words", criterion_2),
        ("Out order cross-validation", criterion_3),
        ("family memberships", criterion_4),
        ("square roots", criterion_5),
        ("reversers", criterion_6),
        ("extension solver consistency", criterion_7),
        ("homeomorphism criterion", criterion_8),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(f)).collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    let mut all = true;
    for (i, ((name, _), r)) in criteria.iter().zip(&results).enumerate() {
        all &= r.passed;
        println!("criterion {} {name}: {} ({})", i + 1, if r.passed { "PASS" } else { "FAIL" }, r.summary);
        for d in &r.details {
            println!("    {d}");
        }
    }
    if !all {
        std::process::exit(1);
    }
}
