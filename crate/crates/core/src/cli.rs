//! Command-line surface: argument parsing, report documents and exit codes.
//!
//! Exit codes: 0 success, 1 internal failure or failed selftest, 2 parse or
//! usage error, 3 non-unimodular input, 4 verification mismatch, 5 input that
//! is not a Sol group of the requested kind.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::Error;
use crate::gl2z::{
    classify, conjugacy_test, find_reverser, homeo_test_torus_bundles, primitive_root_capped, sqrt_matrices,
    MatrixClass, PrimitiveRootData, ReverserData, DEFAULT_MAX_BETA,
};
use crate::intmat::{int, Mat2};
use crate::sapphire::{self, SapphireGroup};
use crate::structgrp::{isomorphic, out_bruteforce, realize, verify_presentation, OutSource, Presentation, ISO_CAP};
use crate::torusbundle::{self, TorusBundleGroup};
use crate::words::{check_endomorphism, eval_auto_word, Automorphism};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "solgroups", version, about = "Automorphism and outer automorphism groups of Sol 3-manifold groups")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Cross-check against the brute-force oracle and verify presentations.
    #[arg(long, global = true)]
    pub verify: bool,
    /// Batch input: one matrix per line; blank lines and `#` comments are skipped.
    #[arg(long, global = true)]
    pub file: Option<PathBuf>,
    /// Cap on the centralizer scan of the primitive-root search.
    #[arg(long, global = true)]
    pub max_beta: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Anosov/exceptional verdict, primitive root, reversers, families, square roots.
    Classify {
        #[arg(allow_hyphen_values = true)]
        matrix: Option<String>,
    },
    /// Structure tree and presentation of Aut(E).
    Aut {
        kind: Kind,
        #[arg(allow_hyphen_values = true)]
        matrix: Option<String>,
    },
    /// Structure tree, presentation and order of Out(E).
    Out {
        kind: Kind,
        #[arg(allow_hyphen_values = true)]
        matrix: Option<String>,
    },
    /// Whether the torus bundles of two Anosov matrices are homeomorphic.
    Homeo {
        #[arg(allow_hyphen_values = true)]
        a: String,
        #[arg(allow_hyphen_values = true)]
        b: String,
    },
    /// Runs the invariant suite over all matrices with entries in [-bound, bound].
    Selftest {
        #[arg(long, default_value_t = 3)]
        bound: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replaces gamma_plus by its square in the presentation checks.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    TorusBundle,
    Sapphire,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::TorusBundle => "torus-bundle",
            Kind::Sapphire => "sapphire",
        }
    }
}

/// An error with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> CliError {
        CliError { code, message: message.into() }
    }

    fn from_error(e: Error, kind: Option<Kind>) -> CliError {
        let code = match &e {
            Error::Parse(_) => 2,
            Error::NotUnimodular => 3,
            Error::DetMinusOne | Error::TorusBundleDegenerate | Error::NotSol | Error::NotAnosov => 5,
            _ => 1,
        };
        let message = match (&e, kind) {
            (Error::DetMinusOne, _) => {
                "sapphire matrix has det -1; only det +1 gluing matrices are supported (normalizing moves are out of scope)".into()
            }
            (_, Some(k)) => format!("{} input rejected: {e}", k.name()),
            _ => e.to_string(),
        };
        CliError::new(code, message)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// One verification verdict.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Check {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

fn checks_json(performed: bool, checks: &[Check]) -> Value {
    json!({
        "performed": performed,
        "passed": checks.iter().all(|c| c.passed),
        "checks": checks.iter().map(|c| json!({"name": c.name, "passed": c.passed, "detail": c.detail})).collect::<Vec<_>>(),
    })
}

fn checks_text(checks: &[Check]) -> String {
    let ok = checks.iter().all(|c| c.passed);
    let mut s = format!("verification: {} ({} checks)\n", if ok { "passed" } else { "FAILED" }, checks.len());
    for c in checks {
        s.push_str(&format!("  [{}] {}: {}\n", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail));
    }
    s
}

fn big(x: &BigInt) -> Value {
    json!(x.to_string())
}

fn mat(m: &Mat2) -> Value {
    json!(m.to_arg())
}

fn parse_matrix(s: &str) -> CliResult<Mat2> {
    s.parse::<Mat2>().map_err(|e| CliError::from_error(e, None))
}

/// A rendered report for one input.
struct Report {
    input: Value,
    result: Value,
    verification: Value,
    text: String,
    verify_failed: bool,
}

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok((doc, code)) => {
            let _ = out.write_all(doc.as_bytes());
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn flags_json(cli: &Cli) -> Value {
    json!({
        "format": match cli.format { Format::Text => "text", Format::Json => "json" },
        "verify": cli.verify,
        "max_beta": cli.max_beta.map(|b| b.to_string()),
        "file": cli.file.as_ref().map(|p| p.display().to_string()),
    })
}

/// Renders the whole output up front, so error paths print nothing to stdout.
fn execute(cli: &Cli) -> CliResult<(String, i32)> {
    let (command, inputs): (&str, Vec<String>) = match &cli.command {
        Command::Classify { matrix } => ("classify", gather(matrix, &cli.file)?),
        Command::Aut { matrix, .. } => ("aut", gather(matrix, &cli.file)?),
        Command::Out { matrix, .. } => ("out", gather(matrix, &cli.file)?),
        Command::Homeo { a, b } => ("homeo", vec![format!("{a} | {b}")]),
        Command::Selftest { .. } => ("selftest", vec![]),
    };
    let mut reports = Vec::new();
    match &cli.command {
        Command::Classify { .. } => {
            for s in &inputs {
                reports.push(cmd_classify(&parse_matrix(s)?, cli.max_beta.unwrap_or(DEFAULT_MAX_BETA))?);
            }
        }
        Command::Aut { kind, .. } => {
            for s in &inputs {
                reports.push(cmd_aut(*kind, &parse_matrix(s)?, cli.verify)?);
            }
        }
        Command::Out { kind, .. } => {
            for s in &inputs {
                reports.push(cmd_out(*kind, &parse_matrix(s)?, cli.verify)?);
            }
        }
        Command::Homeo { a, b } => reports.push(cmd_homeo(&parse_matrix(a)?, &parse_matrix(b)?)?),
        Command::Selftest { bound, seed, inject_fault } => {
            let st = selftest(*bound, *seed, *inject_fault);
            let doc = match cli.format {
                Format::Json => {
                    let d = json!({
                        "version": VERSION,
                        "input": {"bound": bound.to_string(), "seed": seed.to_string()},
                        "command": "selftest",
                        "result": st.to_json(),
                        "verification": checks_json(true, &st.checks()),
                        "flags": flags_json(cli),
                    });
                    serde_json::to_string_pretty(&d).expect("serializable") + "\n"
                }
                Format::Text => st.text(),
            };
            return Ok((doc, if st.passed() { 0 } else { 1 }));
        }
    }
    let code = if reports.iter().any(|r| r.verify_failed) { 4 } else { 0 };
    let doc = match cli.format {
        Format::Json => {
            let docs: Vec<Value> = reports
                .iter()
                .map(|r| {
                    json!({
                        "version": VERSION,
                        "input": r.input,
                        "command": command,
                        "result": r.result,
                        "verification": r.verification,
                        "flags": flags_json(cli),
                    })
                })
                .collect();
            let v = if cli.file.is_some() { Value::Array(docs) } else { docs.into_iter().next().expect("one report") };
            serde_json::to_string_pretty(&v).expect("serializable") + "\n"
        }
        Format::Text => reports.iter().map(|r| r.text.clone()).collect::<Vec<_>>().join("\n"),
    };
    Ok((doc, code))
}

fn gather(matrix: &Option<String>, file: &Option<PathBuf>) -> CliResult<Vec<String>> {
    match (matrix, file) {
        (Some(m), None) => Ok(vec![m.clone()]),
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::new(2, format!("cannot read {}: {e}", p.display())))?;
            Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect())
        }
        (Some(_), Some(_)) => Err(CliError::new(2, "give either a matrix or --file, not both")),
        (None, None) => Err(CliError::new(2, "missing matrix argument")),
    }
}

fn root_json(r: &PrimitiveRootData) -> Value {
    json!({"m0": mat(&r.m0), "ell": r.ell.to_string(), "eps": r.eps.to_string()})
}

fn reverser_json(r: &ReverserData) -> Value {
    json!({
        "exists": r.exists,
        "witness": r.witness.as_ref().map(mat),
        "families": r.families.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
        "square_sign": r.square_sign.map(|s| s.to_string()),
    })
}

fn cmd_classify(m: &Mat2, max_beta: u64) -> CliResult<Report> {
    let e = |x| CliError::from_error(x, None);
    let class = classify(m).map_err(e)?;
    let mut text = format!("matrix: {m}\ndet: {}, trace: {}\n", m.det(), m.trace());
    let sqrt = match sqrt_matrices(m) {
        Ok(v) => Some(v),
        Err(Error::DegenerateInput(_)) => None,
        Err(x) => return Err(e(x)),
    };
    let sqrt_json = match &sqrt {
        Some(v) => json!(v.iter().map(mat).collect::<Vec<_>>()),
        None => json!("infinitely many"),
    };
    let sqrt_text = match &sqrt {
        Some(v) if v.is_empty() => "none".to_string(),
        Some(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "),
        None => "infinitely many (scalar matrix)".to_string(),
    };
    let result = match &class {
        MatrixClass::Exceptional(kind) => {
            text.push_str(&format!("class: exceptional ({kind})\nsquare roots: {sqrt_text}\n"));
            json!({"matrix": mat(m), "det": big(&m.det()), "trace": big(&m.trace()), "class": "exceptional",
                   "exceptional_kind": kind.to_string(), "square_roots": sqrt_json})
        }
        MatrixClass::Anosov => {
            let root = primitive_root_capped(m, max_beta).map_err(e)?;
            let rev = find_reverser(m).map_err(e)?;
            let fams: Vec<String> = rev.families.iter().map(|f| f.to_string()).collect();
            text.push_str(&format!(
                "class: Anosov\nprimitive root: M0 = {}, ell = {}, eps = {}\nreverser: {}\nfamilies: {}\nsquare roots: {sqrt_text}\n",
                root.m0,
                root.ell,
                root.eps,
                rev.witness.as_ref().map_or("none".to_string(), |w| w.to_string()),
                if fams.is_empty() { "none".to_string() } else { fams.join(", ") },
            ));
            json!({"matrix": mat(m), "det": big(&m.det()), "trace": big(&m.trace()), "class": "anosov",
                   "primitive_root": root_json(&root), "reverser": reverser_json(&rev), "square_roots": sqrt_json})
        }
    };
    Ok(Report { input: json!(m.to_arg()), result, verification: checks_json(false, &[]), text, verify_failed: false })
}

fn cmd_homeo(a: &Mat2, b: &Mat2) -> CliResult<Report> {
    let e = |x| CliError::from_error(x, Some(Kind::TorusBundle));
    let verdict = homeo_test_torus_bundles(a, b).map_err(e)?;
    let binv = b.inverse().map_err(e)?;
    let (witness, relation) = match (conjugacy_test(a, b), conjugacy_test(a, &binv)) {
        (Some(p), _) => (Some(p), "P A P^-1 = B"),
        (None, Some(p)) => (Some(p), "P A P^-1 = B^-1"),
        (None, None) => (None, ""),
    };
    let text = match &witness {
        Some(p) => format!("A = {a}, B = {b}\nhomeomorphic: yes\nwitness: P = {p} with {relation}\n"),
        None => format!("A = {a}, B = {b}\nhomeomorphic: no\n"),
    };
    let result = json!({
        "homeomorphic": verdict,
        "witness": witness.as_ref().map(mat),
        "relation": if witness.is_some() { Some(relation) } else { None },
    });
    Ok(Report {
        input: json!({"a": a.to_arg(), "b": b.to_arg()}),
        result,
        verification: checks_json(false, &[]),
        text,
        verify_failed: false,
    })
}

fn autos_json(named: &BTreeMap<String, Automorphism>) -> Value {
    Value::Object(named.iter().map(|(k, v)| (k.clone(), json!(v.to_string()))).collect())
}

fn autos_text(named: &BTreeMap<String, Automorphism>) -> String {
    named.iter().map(|(k, v)| format!("  {k}: {v}\n")).collect()
}

/// Every relation of an Aut presentation as an exact equality of automorphisms.
fn exact_presentation_check(
    group: &std::sync::Arc<crate::words::Group>,
    named: &BTreeMap<String, Automorphism>,
    p: &Presentation,
) -> Check {
    let mut failed = Vec::new();
    for (l, r) in &p.relations {
        let ok = match (eval_auto_word(group, named, l), eval_auto_word(group, named, r)) {
            (Ok(x), Ok(y)) => x == y,
            _ => false,
        };
        if !ok {
            failed.push(format!("{} = {}", crate::words::format_word(l), crate::words::format_word(r)));
        }
    }
    let detail = if failed.is_empty() {
        format!("{} relations hold exactly", p.relations.len())
    } else {
        format!("failing: {}", failed.join("; "))
    };
    Check::new("presentation holds in Aut(E)", failed.is_empty(), detail)
}

fn reverify_named(named: &BTreeMap<String, Automorphism>) -> Check {
    let bad: Vec<&String> = named
        .iter()
        .filter(|(_, phi)| {
            let imgs = phi.group.generators().into_iter().map(|g| phi.image(g).clone()).collect();
            check_endomorphism(&phi.group, imgs).is_err()
        })
        .map(|(k, _)| k)
        .collect();
    Check::new(
        "named automorphisms verified",
        bad.is_empty(),
        if bad.is_empty() { format!("{} automorphisms", named.len()) } else { format!("failing: {bad:?}") },
    )
}

fn identity_checks(name: &str, checks: &[(String, bool)]) -> Check {
    let bad: Vec<&String> = checks.iter().filter(|(_, ok)| !ok).map(|(l, _)| l).collect();
    Check::new(
        name,
        bad.is_empty(),
        if bad.is_empty() { format!("{} identities hold exactly", checks.len()) } else { format!("failing: {bad:?}") },
    )
}

fn build_tb(m: &Mat2) -> CliResult<TorusBundleGroup> {
    torusbundle::build(m).map_err(|e| CliError::from_error(e, Some(Kind::TorusBundle)))
}

fn build_sap(m: &Mat2) -> CliResult<SapphireGroup> {
    sapphire::build(m).map_err(|e| CliError::from_error(e, Some(Kind::Sapphire)))
}

fn internal(e: Error) -> CliError {
    CliError::from_error(e, None)
}

fn cmd_aut(kind: Kind, m: &Mat2, verify: bool) -> CliResult<Report> {
    let mut checks = Vec::new();
    let (result, mut text) = match kind {
        Kind::TorusBundle => {
            let g = build_tb(m)?;
            let aut = g.aut_structure().map_err(internal)?;
            if verify {
                checks.push(reverify_named(&aut.named));
                checks.push(exact_presentation_check(&g.group, &aut.named, &aut.presentation));
                let k = g.check_kappa_identities().map_err(internal)?;
                checks.push(identity_checks("inner automorphism words", &k));
            }
            let text = format!(
                "torus bundle theta = {m}\ncase: Aut {}, Out {}\nstated shape: {}\nstructure: {}\npresentation: {}\ngenerators:\n{}{}",
                aut.tags.aut_label(),
                aut.tags.out_label(),
                aut.stated_shape,
                aut.tree,
                aut.presentation,
                autos_text(&aut.named),
                aut.notes.iter().map(|n| format!("note: {n}\n")).collect::<String>(),
            );
            let result = json!({
                "kind": "torus-bundle",
                "theta": mat(m),
                "primitive_root": root_json(&g.root),
                "case": case_json(&aut.tags),
                "stated_shape": aut.stated_shape,
                "structure": aut.tree.to_json(),
                "structure_text": aut.tree.to_string(),
                "presentation": aut.presentation.to_json(),
                "order": "infinite",
                "generators": autos_json(&aut.named),
                "notes": aut.notes,
                "beyond_paper_case": false,
            });
            (result, text)
        }
        Kind::Sapphire => {
            let g = build_sap(m)?;
            let aut = g.aut_structure().map_err(internal)?;
            let case = g.out_case().map_err(internal)?;
            if verify {
                checks.push(reverify_named(&aut.named));
                checks.push(exact_presentation_check(&g.group, &aut.named, &aut.presentation));
                checks.extend(sapphire_identity_checks(&g)?);
            }
            let text = format!(
                "sapphire B = {m}, theta = {}\ncase: {case}\nomega grade: {}\nstructure: {}\npresentation: {}\ngenerators:\n{}",
                g.theta,
                aut.omega_grade,
                aut.tree,
                aut.presentation,
                autos_text(&aut.named),
            );
            let result = json!({
                "kind": "sapphire",
                "b": mat(m),
                "theta": mat(&g.theta),
                "primitive_root": root_json(&g.root),
                "case": case.to_string(),
                "omega_grade": aut.omega_grade.to_string(),
                "stated_shape": "[((Z+Z) x|_-I Z2) x|_omega Z] x|_zeta Z2",
                "structure": aut.tree.to_json(),
                "structure_text": aut.tree.to_string(),
                "presentation": aut.presentation.to_json(),
                "order": "infinite",
                "generators": autos_json(&aut.named),
                "beyond_paper_case": case == sapphire::OutCase::BeyondPaper,
            });
            (result, text)
        }
    };
    let failed = checks.iter().any(|c| !c.passed);
    if verify {
        text.push_str(&checks_text(&checks));
    }
    Ok(Report { input: json!({"kind": kind.name(), "matrix": m.to_arg()}), result, verification: checks_json(verify, &checks), text, verify_failed: failed })
}

fn case_json(tags: &torusbundle::CaseTags) -> Value {
    json!({
        "aut": tags.aut_label(),
        "out": tags.out_label(),
        "families": tags.families.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
    })
}

fn sapphire_identity_checks(g: &SapphireGroup) -> CliResult<Vec<Check>> {
    let mut checks = Vec::new();
    let ids = g.stated_identities().map_err(internal)?;
    let r = g.check_identities(&ids).map_err(internal)?;
    checks.push(identity_checks("conjugation identities", &r.into_iter().map(|c| (c.label, c.holds)).collect::<Vec<_>>()));
    let k = g.check_kappa().map_err(internal)?;
    checks.push(identity_checks("inner automorphism words", &k.into_iter().map(|c| (c.label, c.holds)).collect::<Vec<_>>()));
    if let Some(v) = g.omega_rho_variants().map_err(internal)? {
        let r = g.check_identities(&v).map_err(internal)?;
        let held: Vec<String> = r.iter().filter(|c| c.holds).map(|c| c.label.clone()).collect();
        checks.push(Check::new("omega rho omega^-1 (one sign holds exactly)", !held.is_empty(), held.join("; ")));
    }
    let filter = g.aut01_filter().map_err(internal)?;
    let exact = g.aut01_exact().map_err(internal)?.is_some();
    checks.push(Check::new(
        "Aut0^1 filter agrees with solver",
        filter || !exact,
        format!("filter {filter}, solver {exact}"),
    ));
    Ok(checks)
}

/// Assigns each named generator its class in the oracle's enumeration.
fn oracle_assignment(
    en: &crate::structgrp::OutEnumeration,
    named: &BTreeMap<String, Automorphism>,
) -> BTreeMap<String, u32> {
    named.iter().filter_map(|(k, phi)| en.class_of(phi).map(|c| (k.clone(), c))).collect()
}

fn out_checks(
    source: OutSource<'_>,
    tree: &crate::structgrp::StructureTree,
    presentation: &Presentation,
    named: &BTreeMap<String, Automorphism>,
    stated: Option<&Presentation>,
) -> CliResult<Vec<Check>> {
    let mut checks = Vec::new();
    let order = tree.order().ok_or_else(|| CliError::new(1, "Out tree is infinite"))?;
    let real = realize(tree).map_err(internal)?;
    let rp = verify_presentation(presentation, &real, &real.assignment()).map_err(internal)?;
    checks.push(Check::new(
        "presentation holds in the realization",
        rp.passed(),
        if rp.passed() { "all relations hold; generators generate".to_string() } else { format!("{:?}", rp.failures()) },
    ));
    let bf = out_bruteforce(source).map_err(internal)?;
    checks.push(Check::new(
        "order matches brute-force oracle",
        order == int(bf.order() as i64),
        format!("tree {order}, oracle {}", bf.order()),
    ));
    let iso = isomorphic(&real, &bf.group, ISO_CAP).map_err(internal)?;
    checks.push(Check::new("isomorphic to brute-force oracle", iso, format!("order {}", bf.order())));
    let asg = oracle_assignment(&bf, named);
    let op = verify_presentation(presentation, &bf.group, &asg).map_err(internal)?;
    checks.push(Check::new(
        "presentation holds in Out(E) for the named generators",
        op.passed(),
        if op.passed() { "all relations hold; generators generate".to_string() } else { format!("{:?}", op.failures()) },
    ));
    if let Some(p) = stated {
        let sp = verify_presentation(p, &bf.group, &asg).map_err(internal)?;
        checks.push(Check::new(
            "stated presentation holds in Out(E)",
            sp.passed(),
            if sp.passed() { "all relations hold".to_string() } else { format!("{:?}", sp.failures()) },
        ));
    }
    Ok(checks)
}

fn cmd_out(kind: Kind, m: &Mat2, verify: bool) -> CliResult<Report> {
    let mut checks = Vec::new();
    let (result, mut text) = match kind {
        Kind::TorusBundle => {
            let g = build_tb(m)?;
            let out = g.out_structure().map_err(internal)?;
            let h = g.h_group();
            if verify {
                checks.extend(out_checks(OutSource::TorusBundle(&g), &out.tree, &out.presentation, &out.named, None)?);
                let k = g.check_kappa_identities().map_err(internal)?;
                checks.push(identity_checks("inner automorphism words", &k));
            }
            let text = format!(
                "torus bundle theta = {m}\nprimitive root: M0 = {}, ell = {}, eps = {}\nH = Z^2/(I - theta)Z^2: Z{} + Z{}, order {}\ncase: Aut {}, Out {}\nstated shape: {}\nstructure: {}\norder: {}\npresentation: {}\n{}",
                g.root.m0,
                g.root.ell,
                g.root.eps,
                h.factors[0],
                h.factors[1],
                h.order,
                out.tags.aut_label(),
                out.tags.out_label(),
                out.stated_shape,
                out.tree,
                out.order,
                out.presentation,
                out.notes.iter().map(|n| format!("note: {n}\n")).collect::<String>(),
            );
            let result = json!({
                "kind": "torus-bundle",
                "theta": mat(m),
                "primitive_root": root_json(&g.root),
                "h": {"factors": [big(&h.factors[0]), big(&h.factors[1])], "order": big(&h.order)},
                "case": case_json(&out.tags),
                "stated_shape": out.stated_shape,
                "structure": out.tree.to_json(),
                "structure_text": out.tree.to_string(),
                "presentation": out.presentation.to_json(),
                "order": big(&out.order),
                "generators": autos_json(&out.named),
                "notes": out.notes,
                "beyond_paper_case": out.beyond_paper,
                "alternative_families": out.alternatives.iter().map(|(f, t)| json!({"family": f.to_string(), "structure_text": t.to_string()})).collect::<Vec<_>>(),
            });
            (result, text)
        }
        Kind::Sapphire => {
            let g = build_sap(m)?;
            let out = g.out_structure().map_err(internal)?;
            if verify {
                checks.extend(out_checks(
                    OutSource::Sapphire(&g),
                    &out.tree,
                    &out.presentation,
                    &out.named,
                    out.stated_presentation.as_ref(),
                )?);
                checks.extend(sapphire_identity_checks(&g)?);
            }
            let kappa: Vec<String> =
                out.kappa.iter().map(|(k, w)| format!("{k} = {}", crate::words::format_word(w))).collect();
            let text = format!(
                "sapphire B = {m}, theta = {}\ncase: {}\nstated shape: {}\nstructure: {}\norder: {}\npresentation: {}\ninner: {}\n{}",
                g.theta,
                out.case,
                out.stated_shape,
                out.tree,
                out.order,
                out.presentation,
                kappa.join(", "),
                out.notes.iter().map(|n| format!("note: {n}\n")).collect::<String>(),
            );
            let result = json!({
                "kind": "sapphire",
                "b": mat(m),
                "theta": mat(&g.theta),
                "primitive_root": root_json(&g.root),
                "case": out.case.to_string(),
                "stated_shape": out.stated_shape,
                "stated_order": out.stated_order.as_ref().map(big),
                "stated_presentation": out.stated_presentation.as_ref().map(|p| p.to_json()),
                "structure": out.tree.to_json(),
                "structure_text": out.tree.to_string(),
                "presentation": out.presentation.to_json(),
                "order": big(&out.order),
                "inner": Value::Object(out.kappa.iter().map(|(k, w)| (k.clone(), json!(crate::words::format_word(w)))).collect()),
                "generators": autos_json(&out.named),
                "notes": out.notes,
                "beyond_paper_case": out.beyond_paper,
            });
            (result, text)
        }
    };
    let failed = checks.iter().any(|c| !c.passed);
    if verify {
        text.push_str(&checks_text(&checks));
    }
    Ok(Report { input: json!({"kind": kind.name(), "matrix": m.to_arg()}), result, verification: checks_json(verify, &checks), text, verify_failed: failed })
}

/// Outcome of one selftest family of checks.
#[derive(Clone, Debug, Default)]
pub struct SuiteLine {
    pub cases: usize,
    pub failures: usize,
    /// Smallest failing input (by max entry) and reason.
    pub first_failure: Option<(String, String)>,
    failure_size: BigInt,
}

#[derive(Clone, Debug, Default)]
pub struct SelftestReport {
    pub bound: i64,
    pub seed: u64,
    pub lines: BTreeMap<String, SuiteLine>,
    pub warnings: Vec<String>,
}

impl SelftestReport {
    fn record(&mut self, name: &str, input: &Mat2, result: std::result::Result<(), String>) {
        let line = self.lines.entry(name.to_string()).or_default();
        line.cases += 1;
        if let Err(why) = result {
            line.failures += 1;
            let size = input.max_abs();
            if line.first_failure.is_none() || size < line.failure_size {
                line.first_failure = Some((input.to_arg(), why));
                line.failure_size = size;
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.lines.values().all(|l| l.failures == 0)
    }

    fn checks(&self) -> Vec<Check> {
        self.lines
            .iter()
            .map(|(name, l)| {
                let detail = match &l.first_failure {
                    Some((i, w)) => format!("{}/{} failed; first: {i}: {w}", l.failures, l.cases),
                    None => format!("{} cases", l.cases),
                };
                Check::new(name, l.failures == 0, detail)
            })
            .collect()
    }

    fn to_json(&self) -> Value {
        json!({
            "passed": self.passed(),
            "warnings": self.warnings,
            "suites": Value::Object(self.lines.iter().map(|(k, l)| (k.clone(), json!({
                "cases": l.cases.to_string(),
                "failures": l.failures.to_string(),
                "first_failure": l.first_failure.as_ref().map(|(i, w)| json!({"input": i, "reason": w})),
            }))).collect()),
        })
    }

    fn text(&self) -> String {
        let mut s = format!("selftest bound {} seed {}\n", self.bound, self.seed);
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s.push_str(&checks_text(&self.checks()));
        s.push_str(if self.passed() { "selftest passed\n" } else { "selftest FAILED\n" });
        s
    }
}

fn ensure(ok: bool, why: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn anosov_invariants(rep: &mut SelftestReport, a: &Mat2) {
    let key = a;
    let root = primitive_root_capped(a, DEFAULT_MAX_BETA);
    rep.record("primitive root reproduces A", key, match &root {
        Ok(r) => {
            let p = r.m0.power(r.ell as i64).expect("unit");
            ensure((if r.eps > 0 { p } else { -&p }) == *a, || format!("eps M0^ell != A for M0 = {}", r.m0))
        }
        Err(e) => Err(e.to_string()),
    });
    let rev = find_reverser(a);
    rep.record("reverser witness", key, match &rev {
        Ok(d) => match &d.witness {
            Some(b) => {
                let ok = &(b * a) * &b.inverse().expect("unit") == a.inverse().expect("unit");
                let sq = b * b;
                ensure(ok && (sq.is_identity() || sq == Mat2::scalar(-1)) && *b != Mat2::scalar(-1), || format!("bad witness {b}"))
            }
            None => ensure(!d.exists, || "exists without witness".into()),
        },
        Err(e) => Err(e.to_string()),
    });
    rep.record("square roots square to A", key, match sqrt_matrices(a) {
        Ok(v) => ensure(v.iter().all(|x| &(x * x) == a), || "a returned root does not square to A".into()),
        Err(e) => Err(e.to_string()),
    });
    let inv = a.inverse().expect("unit");
    rep.record("homeomorphic to inverse", key, match homeo_test_torus_bundles(a, &inv) {
        Ok(v) => ensure(v, || "A and A^-1 reported non-homeomorphic".into()),
        Err(e) => Err(e.to_string()),
    });
}

fn tb_invariants(rep: &mut SelftestReport, a: &Mat2, inject_fault: bool) {
    let key = a;
    let Ok(g) = torusbundle::build(a) else { return };
    rep.record("torus-bundle inner automorphism words", key, match g.check_kappa_identities() {
        Ok(v) => ensure(v.iter().all(|(_, ok)| *ok), || format!("{:?}", v.iter().filter(|c| !c.1).collect::<Vec<_>>())),
        Err(e) => Err(e.to_string()),
    });
    let res = (|| -> std::result::Result<(), String> {
        let out = g.out_structure().map_err(|e| e.to_string())?;
        let mut named = out.named.clone();
        if inject_fault {
            let gp = named["gamma_plus"].clone();
            named.insert("gamma_plus".into(), gp.compose(&gp));
        }
        let checks = out_checks(OutSource::TorusBundle(&g), &out.tree, &out.presentation, &named, None)
            .map_err(|e| e.message)?;
        match checks.iter().find(|c| !c.passed) {
            Some(c) => Err(format!("{}: {}", c.name, c.detail)),
            None => Ok(()),
        }
    })();
    rep.record("torus-bundle Out matches oracle", key, res);
}

fn sapphire_invariants(rep: &mut SelftestReport, b: &Mat2) {
    let key = b;
    let Ok(g) = sapphire::build(b) else { return };
    let res = (|| -> std::result::Result<(), String> {
        for c in sapphire_identity_checks(&g).map_err(|e| e.message)? {
            if !c.passed {
                return Err(format!("{}: {}", c.name, c.detail));
            }
        }
        Ok(())
    })();
    rep.record("sapphire identities", key, res);
    let res = (|| -> std::result::Result<(), String> {
        let out = g.out_structure().map_err(|e| e.to_string())?;
        let checks = out_checks(
            OutSource::Sapphire(&g),
            &out.tree,
            &out.presentation,
            &out.named,
            out.stated_presentation.as_ref(),
        )
        .map_err(|e| e.message)?;
        match checks.iter().find(|c| !c.passed) {
            Some(c) => Err(format!("{}: {}", c.name, c.detail)),
            None => Ok(()),
        }
    })();
    rep.record("sapphire Out matches oracle", key, res);
}

/// Random Anosov matrix with entries bounded by `bound`.
pub fn random_anosov(rng: &mut ChaCha8Rng, bound: i64) -> Mat2 {
    loop {
        let (a, b, c) = (rng.gen_range(-bound..=bound), rng.gen_range(-bound..=bound), rng.gen_range(-bound..=bound));
        if a == 0 {
            continue;
        }
        let det: i64 = if rng.gen_bool(0.5) { 1 } else { -1 };
        // d from a d - b c = det.
        let num = det + b * c;
        if num % a != 0 {
            continue;
        }
        let m = Mat2::new(a, b, c, num / a);
        if matches!(classify(&m), Ok(MatrixClass::Anosov)) {
            return m;
        }
    }
}

/// Random unimodular matrix as a product of elementary moves.
pub fn random_unimodular(rng: &mut ChaCha8Rng, steps: usize) -> Mat2 {
    let moves = [Mat2::new(1, 1, 0, 1), Mat2::new(1, 0, 1, 1), Mat2::new(1, -1, 0, 1), Mat2::new(1, 0, -1, 1), Mat2::new(0, 1, 1, 0)];
    let mut p = Mat2::identity();
    for _ in 0..steps {
        p = &p * &moves[rng.gen_range(0..moves.len())];
    }
    p
}

pub fn selftest(bound: i64, seed: u64, inject_fault: bool) -> SelftestReport {
    let mut rep = SelftestReport { bound, seed, ..Default::default() };
    if bound <= 0 {
        rep.warnings.push("bound 0 leaves no matrices to check".into());
        return rep;
    }
    for a in -bound..=bound {
        for b in -bound..=bound {
            for c in -bound..=bound {
                for d in -bound..=bound {
                    let m = Mat2::new(a, b, c, d);
                    if !m.is_unimodular() {
                        continue;
                    }
                    if matches!(classify(&m), Ok(MatrixClass::Anosov)) {
                        anosov_invariants(&mut rep, &m);
                        tb_invariants(&mut rep, &m, inject_fault);
                    }
                    sapphire_invariants(&mut rep, &m);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let a = random_anosov(&mut rng, 50);
        anosov_invariants(&mut rep, &a);
        let p = random_unimodular(&mut rng, 8);
        let conj = &(&p * &a) * &p.inverse().expect("unit");
        rep.record("homeomorphic to conjugate", &a, match homeo_test_torus_bundles(&a, &conj) {
            Ok(v) => ensure(v, || format!("A and PAP^-1 reported non-homeomorphic for P = {p}")),
            Err(e) => Err(e.to_string()),
        });
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("solgroups").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn json_of(args: &[&str]) -> (i32, Value, String) {
        let mut full = args.to_vec();
        full.extend(["--format", "json"]);
        let (code, out, _) = call(&full);
        let v: Value = serde_json::from_str(&out).unwrap();
        (code, v, out)
    }

    #[test]
    fn classify_examples() {
        let (code, v, _) = json_of(&["classify", "2,1;1,1"]);
        assert_eq!(code, 0);
        assert_eq!(v["result"]["class"], "anosov");
        assert_eq!(v["result"]["primitive_root"]["m0"], "1,1;1,0");
        assert_eq!(v["result"]["primitive_root"]["ell"], "2");
        assert!(v["result"]["reverser"]["families"].as_array().unwrap().contains(&json!("F1")));
        let (code, out, _) = call(&["classify", "0,-1;1,0"]);
        assert_eq!(code, 0);
        assert!(out.contains("exceptional (rotation of order 4)"), "{out}");
    }

    #[test]
    fn exit_codes_and_silence_on_error() {
        for (args, want) in [
            (vec!["classify", "1,0;0,2"], 3),
            (vec!["classify", "1,2;3"], 2),
            (vec!["classify", "x,1;1,1"], 2),
            (vec!["frobnicate"], 2),
            (vec!["out", "sapphire", "1,1;0,1"], 5),
            (vec!["out", "sapphire", "1,2;1,1"], 5),
            (vec!["aut", "torus-bundle", "1,1;0,1"], 5),
            (vec!["homeo", "2,1;1,1", "1,0;0,2"], 3),
        ] {
            let (code, out, err) = call(&args);
            assert_eq!(code, want, "{args:?}: {err}");
            assert!(out.is_empty(), "{args:?} printed {out}");
            assert!(!err.is_empty());
        }
    }

    #[test]
    fn out_examples_verify() {
        let (code, v, _) = json_of(&["out", "torus-bundle", "2,1;1,1", "--verify"]);
        assert_eq!(code, 0);
        assert_eq!(v["result"]["order"], "8");
        assert_eq!(v["verification"]["passed"], true);
        assert_eq!(v["result"]["case"]["out"], "III(a)");
        assert_eq!(v["result"]["case"]["aut"], "II");
        let (code, v, _) = json_of(&["out", "sapphire", "2,1;1,1", "--verify"]);
        assert_eq!(code, 0);
        assert_eq!(v["result"]["order"], "8");
        assert_eq!(v["result"]["case"], "I");
        assert_eq!(v["verification"]["passed"], true);
    }

    #[test]
    fn aut_verify_passes() {
        for args in [["aut", "torus-bundle", "3,2;4,3"], ["aut", "sapphire", "3,2;4,3"], ["aut", "sapphire", "2,1;1,1"]] {
            let (code, v, _) = json_of(&[args[0], args[1], args[2], "--verify"]);
            assert_eq!(code, 0, "{args:?}");
            assert_eq!(v["verification"]["passed"], true);
        }
    }

    #[test]
    fn homeo_examples() {
        let (_, v, _) = json_of(&["homeo", "2,1;1,1", "1,-1;-1,2"]);
        assert_eq!(v["result"]["homeomorphic"], true);
        let (_, v, _) = json_of(&["homeo", "2,1;1,1", "3,2;4,3"]);
        assert_eq!(v["result"]["homeomorphic"], false);
        assert_eq!(v["result"]["witness"], Value::Null);
        // P = (1,1;0,1): P A P^-1 = (3,-1;1,0).
        let (_, v, _) = json_of(&["homeo", "2,1;1,1", "3,-1;1,0"]);
        assert_eq!(v["result"]["homeomorphic"], true);
        let p: Mat2 = v["result"]["witness"].as_str().unwrap().parse().unwrap();
        let a = Mat2::new(2, 1, 1, 1);
        assert_eq!(&(&p * &a) * &p.inverse().unwrap(), Mat2::new(3, -1, 1, 0));
    }

    #[test]
    fn json_round_trip_and_schema() {
        for args in [
            vec!["classify", "2,1;1,1"],
            vec!["out", "sapphire", "3,2;4,3", "--verify"],
            vec!["aut", "torus-bundle", "2,1;1,1"],
            vec!["homeo", "2,1;1,1", "3,2;4,3"],
        ] {
            let (_, v, raw) = json_of(&args);
            assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", raw);
            let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
            assert_eq!(keys, ["command", "flags", "input", "result", "verification", "version"]);
        }
        let (_, v, _) = json_of(&["out", "torus-bundle", "3,2;4,3"]);
        assert_eq!(v["result"]["order"], "32");
        assert_eq!(v["result"]["h"]["order"], "4");
    }

    #[test]
    fn deterministic_output() {
        let a = call(&["out", "torus-bundle", "5,2;2,1", "--format", "json"]);
        let b = call(&["out", "torus-bundle", "5,2;2,1", "--format", "json"]);
        assert_eq!(a, b);
    }

    #[test]
    fn batch_file_keeps_input_order() {
        let path = std::env::temp_dir().join(format!("solgroups-batch-{}.txt", std::process::id()));
        std::fs::write(&path, "# torus bundles\n3,2;4,3\n\n2,1;1,1\n").unwrap();
        let p = path.to_str().unwrap();
        let (code, v, _) = json_of(&["out", "torus-bundle", "--file", p]);
        assert_eq!(code, 0);
        let orders: Vec<&str> = v.as_array().unwrap().iter().map(|d| d["result"]["order"].as_str().unwrap()).collect();
        assert_eq!(orders, ["32", "8"]);
        std::fs::write(&path, "2,1;1,1\n1,1;0,1\n").unwrap();
        let (code, out, _) = call(&["out", "torus-bundle", "--file", p]);
        std::fs::remove_file(&path).unwrap();
        assert_eq!(code, 5);
        assert!(out.is_empty());
    }

    #[test]
    fn selftest_examples() {
        let (code, out, _) = call(&["selftest", "--bound", "0"]);
        assert_eq!(code, 0);
        assert!(out.contains("warning"));
        let (code, _, _) = call(&["selftest", "--bound", "2", "--seed", "7"]);
        assert_eq!(code, 0);
    }

    #[test]
    fn selftest_catches_injected_fault() {
        let (code, v, _) = json_of(&["selftest", "--bound", "2", "--inject-fault"]);
        assert_eq!(code, 1);
        let line = &v["result"]["suites"]["torus-bundle Out matches oracle"];
        assert_ne!(line["failures"], "0");
        assert!(line["first_failure"]["input"].is_string());
    }

    #[test]
    fn selftest_is_seed_deterministic() {
        let a = selftest(1, 11, false);
        let b = selftest(1, 11, false);
        assert_eq!(a.text(), b.text());
        assert!(a.passed());
    }
}
