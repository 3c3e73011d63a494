use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use biquad::forms::verify_sos;
use biquad::gram::{build_family, factor_gram, find_psd_point, min_rank_search, reduce_to_boundary};
use biquad::linalg;
use biquad::meig::meig_solve;
use biquad::partsym::{
    check_psd, detect_x_symmetric, random_psd_monic, sos_decompose_general_with, sos_decompose_naive,
    sos_decompose_structured, Method, PsdCertificate,
};
use biquad::sampling;
use biquad::simple::{exact_sos_rank_simple, gen_simple, lower_bound_certificate, SupportSet};
use biquad::{BiquadraticForm, Error, SosDecomposition, Tolerances, XSymmetricData};
use serde_json::{json, Value};

use crate::io::{load, write_atomic, Input};
use crate::{Cli, Command, MethodArg, Outcome, Status};

/// Relative tolerance for recognizing x-symmetric structure in a form file.
const DETECT_TOL: f64 = 1e-12;
/// Points used to re-verify every decomposition before it is reported.
const VERIFY_POINTS: usize = 1000;

pub fn run(cli: &Cli, tol: &Tolerances) -> Result<Outcome> {
    match &cli.command {
        Command::CheckPsd { file, transpose } => check_psd_cmd(&load(file, *transpose)?, tol),
        Command::Decompose {
            file,
            method,
            transpose,
            out,
        } => decompose(&load(file, *transpose)?, *method, out.as_deref(), cli.seed, tol),
        Command::GenSimple {
            m,
            n,
            s,
            out,
            support_out,
        } => gen_simple_cmd(*m, *n, *s, out.as_deref(), support_out.as_deref()),
        Command::SosRank { file, transpose } => sos_rank(&load(file, *transpose)?.form, cli, tol),
        Command::ReduceRank { file, transpose, out } => reduce_rank(&load(file, *transpose)?.form, out.as_deref(), cli, tol),
        Command::Meig { file, transpose } => meig(&load(file, *transpose)?.form, cli, tol),
        Command::Bench { m, n, trials } => bench(*m, *n, *trials, cli.seed, tol),
    }
}

fn not_x_symmetric() -> Outcome {
    let msg = "form is not x-symmetric; use `sos-rank` for general forms (or --transpose for y-symmetric ones)";
    Outcome {
        status: Status::Error,
        exit: 3,
        payload: json!({ "error": msg }),
        summary: vec![msg.to_string()],
        seed_used: false,
    }
}

fn x_symmetric(input: &Input) -> Option<XSymmetricData> {
    input.xsym.clone().or_else(|| detect_x_symmetric(&input.form, DETECT_TOL))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|e| format!("{e:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn not_psd(cert: &PsdCertificate) -> Result<Outcome> {
    let mut summary = vec!["verdict: NOT PSD".to_string()];
    if let Some(w) = &cert.witness {
        summary.push(format!("witness: P(x, y) = {:.6e} at x = {}, y = {}", w.value, fmt_vec(&w.x), fmt_vec(&w.y)));
    }
    Ok(Outcome {
        status: Status::NotPsd,
        exit: 2,
        payload: json!({ "certificate": cert }),
        summary,
        seed_used: false,
    })
}

fn check_psd_cmd(input: &Input, tol: &Tolerances) -> Result<Outcome> {
    let Some(x) = x_symmetric(input) else {
        return Ok(not_x_symmetric());
    };
    let cert = check_psd(&x, tol)?;
    if !cert.is_psd() {
        let mut out = not_psd(&cert)?;
        out.payload["monic"] = json!(x.is_monic());
        return Ok(out);
    }
    let summary = vec![
        "verdict: PSD".to_string(),
        format!("eig(Q) = {}", fmt_vec(&cert.q_eigenvalues)),
        format!("eig(R) = {}", fmt_vec(&cert.r_eigenvalues)),
    ];
    Ok(Outcome::ok(json!({ "monic": x.is_monic(), "certificate": cert }), summary))
}

fn verified(p: &BiquadraticForm, d: &SosDecomposition, seed: u64) -> Result<biquad::SosCheck> {
    let check = verify_sos(p, d, VERIFY_POINTS, seed)?;
    if !check.passed {
        bail!(
            "decomposition failed re-verification (max residual {:e} > {:e})",
            check.max_residual,
            check.threshold
        );
    }
    Ok(check)
}

fn decompose(input: &Input, method: MethodArg, out: Option<&Path>, seed: u64, tol: &Tolerances) -> Result<Outcome> {
    let Some(x) = x_symmetric(input) else {
        return Ok(not_x_symmetric());
    };
    let method = match method {
        MethodArg::Naive => Method::Naive,
        MethodArg::Structured | MethodArg::Auto => Method::Structured,
    };
    let d = match sos_decompose_general_with(&x, tol, method) {
        Ok(d) => d,
        Err(Error::FormNotPsd(cert)) => return not_psd(&cert),
        Err(e) => return Err(e.into()),
    };
    let check = verified(&input.form, &d, seed)?;
    let mut payload = json!({
        "method": method,
        "factors": d.len(),
        "max_residual": check.max_residual,
        "threshold": check.threshold,
    });
    let mut summary = vec![
        format!("factors: {}", d.len()),
        format!("max verification residual: {:.3e} (threshold {:.3e})", check.max_residual, check.threshold),
    ];
    match out {
        Some(path) => {
            write_atomic(path, &d.to_json())?;
            payload["out"] = json!(path.display().to_string());
            summary.push(format!("written to {}", path.display()));
        }
        None => payload["decomposition"] = serde_json::from_str(&d.to_json())?,
    }
    Ok(Outcome::ok(payload, summary).with_seed())
}

fn polynomial(p: &BiquadraticForm) -> String {
    let terms: Vec<String> = p
        .terms()
        .iter()
        .map(|t| {
            let xs = if t.i == t.k {
                format!("x{}^2", t.i + 1)
            } else {
                format!("x{} x{}", t.i + 1, t.k + 1)
            };
            let ys = if t.j == t.l {
                format!("y{}^2", t.j + 1)
            } else {
                format!("y{} y{}", t.j + 1, t.l + 1)
            };
            if t.c == 1.0 {
                format!("{xs} {ys}")
            } else {
                format!("{} {xs} {ys}", t.c)
            }
        })
        .collect();
    if terms.is_empty() {
        "0".to_string()
    } else {
        terms.join(" + ")
    }
}

fn gen_simple_cmd(m: usize, n: usize, s: usize, out: Option<&Path>, support_out: Option<&Path>) -> Result<Outcome> {
    let support = gen_simple(m, n, s)?;
    let form = support.to_form();
    let rank = exact_sos_rank_simple(&support);
    if let Some(path) = out {
        write_atomic(path, &form.to_json())?;
    }
    if let Some(path) = support_out {
        write_atomic(path, &serde_json::to_string(&support)?)?;
    }
    let pairs: Vec<String> = support.pairs().iter().map(|(i, j)| format!("({},{})", i + 1, j + 1)).collect();
    let summary = vec![
        format!("P_{{{m},{n},{s}}} = {}", polynomial_in_order(&support)),
        format!("support: {}", pairs.join(" ")),
        match rank {
            biquad::SimpleRank::Exact(r) => format!("SOS rank: {r} (exact, rectangle-free support)"),
            biquad::SimpleRank::UpperBoundOnly(r) => format!("SOS rank: at most {r} (support contains a rectangle)"),
        },
    ];
    let payload = json!({
        "support": support,
        "form": serde_json::from_str::<Value>(&form.to_json())?,
        "sos_rank": rank,
    });
    Ok(Outcome::ok(payload, summary))
}

/// The support's terms in generation order.
fn polynomial_in_order(support: &SupportSet) -> String {
    let terms: Vec<String> = support
        .pairs()
        .iter()
        .map(|(i, j)| format!("x{}^2 y{}^2", i + 1, j + 1))
        .collect();
    if terms.is_empty() {
        polynomial(&support.to_form())
    } else {
        terms.join(" + ")
    }
}

fn inconclusive(restarts: usize) -> Outcome {
    let msg = format!("no PSD Gram point found after {restarts} restarts; the form may be non-PSD or PSD but not SOS");
    Outcome {
        status: Status::Inconclusive,
        exit: 4,
        payload: json!({ "reason": msg }),
        summary: vec![format!("inconclusive: {msg}")],
        seed_used: true,
    }
}

fn sos_rank(p: &BiquadraticForm, cli: &Cli, tol: &Tolerances) -> Result<Outcome> {
    let family = build_family(p);
    let (m, n) = (p.m(), p.n());
    let search = match min_rank_search(&family, cli.restarts, cli.seed, tol) {
        Ok(r) => r,
        Err(Error::NoPsdPointFound { restarts }) => return Ok(inconclusive(restarts)),
        Err(e) => return Err(e.into()),
    };
    let d = factor_gram(&family, &search.best, tol)?;
    verified(p, &d, cli.seed)?;

    let start = find_psd_point(&family, cli.restarts, cli.seed, tol)?;
    let boundary_rank = match reduce_to_boundary(&family, &start, cli.seed, tol) {
        Ok(point) => Some(point.rank(tol)?),
        Err(Error::CannotReduce(_)) => None,
        Err(e) => return Err(e.into()),
    };

    let mut upper = search.rank;
    let structured = x_symmetric_bound(p, tol)?;
    if let Some(s) = structured {
        upper = upper.min(s);
    }
    let lower = SupportSet::from_form(p).and_then(|s| lower_bound_certificate(&s).bound);
    let exact = lower.filter(|l| *l == upper);

    let mut summary = vec![format!("upper bound (Gram search): {}", search.rank)];
    if let Some(s) = structured {
        summary.push(format!("upper bound (x-symmetric structure): {s}"));
    }
    if let Some(b) = boundary_rank {
        summary.push(format!("boundary-reduced rank: {b}"));
    }
    match lower {
        Some(l) => summary.push(format!("lower bound (rectangle-free support): {l}")),
        None => summary.push("lower bound: none available".to_string()),
    }
    summary.push(match exact {
        Some(r) => format!("SOS rank: {r} (exact)"),
        None => format!("SOS rank: at most {upper}"),
    });
    let payload = json!({
        "upper_bound": upper,
        "best": search.best.record(tol)?,
        "restart_ranks": search.restart_ranks,
        "structured_bound": structured,
        "boundary_rank": boundary_rank,
        "universal_bound": (m >= 2 && n >= 2).then_some(m * n - 1),
        "lower_bound": lower,
        "exact": exact,
    });
    Ok(Outcome::ok(payload, summary).with_seed())
}

/// Factor count of the structured decomposition when `p` is x-symmetric and PSD.
fn x_symmetric_bound(p: &BiquadraticForm, tol: &Tolerances) -> Result<Option<usize>> {
    let Some(x) = detect_x_symmetric(p, DETECT_TOL) else {
        return Ok(None);
    };
    match biquad::partsym::sos_decompose_general(&x, tol) {
        Ok(d) => Ok(Some(d.len())),
        Err(Error::FormNotPsd(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn reduce_rank(p: &BiquadraticForm, out: Option<&Path>, cli: &Cli, tol: &Tolerances) -> Result<Outcome> {
    let family = build_family(p);
    let start = match find_psd_point(&family, cli.restarts, cli.seed, tol) {
        Ok(s) => s,
        Err(Error::NoPsdPointFound { restarts }) => return Ok(inconclusive(restarts)),
        Err(e) => return Err(e.into()),
    };
    let point = reduce_to_boundary(&family, &start, cli.seed, tol)?;
    let d = factor_gram(&family, &point, tol)?;
    let check = verified(p, &d, cli.seed)?;
    let (start_rec, end_rec) = (start.record(tol)?, point.record(tol)?);
    let mut summary = vec![
        format!("start rank: {}", start_rec.rank),
        format!("boundary rank: {} (order {})", end_rec.rank, family.order()),
        format!("max verification residual: {:.3e}", check.max_residual),
    ];
    let mut payload = json!({
        "start": start_rec,
        "result": end_rec,
        "factors": d.len(),
        "max_residual": check.max_residual,
    });
    if let Some(path) = out {
        write_atomic(path, &d.to_json())?;
        payload["out"] = json!(path.display().to_string());
        summary.push(format!("written to {}", path.display()));
    }
    Ok(Outcome::ok(payload, summary).with_seed())
}

fn meig(p: &BiquadraticForm, cli: &Cli, tol: &Tolerances) -> Result<Outcome> {
    let pairs = meig_solve(p, cli.restarts, cli.seed, tol.eps_rank)?;
    let mut summary: Vec<String> = pairs
        .iter()
        .map(|e| {
            format!(
                "lambda = {:.9}  x = {}  y = {}  residuals ({:.1e}, {:.1e})",
                e.lambda,
                fmt_vec(&e.x),
                fmt_vec(&e.y),
                e.residual_x,
                e.residual_y
            )
        })
        .collect();
    let min = pairs.first().map(|e| e.lambda);
    if let Some(v) = min {
        summary.push(format!("smallest M-eigenvalue found (upper bound on the true minimum): {v:.9}"));
    }
    Ok(Outcome::ok(json!({ "eigenpairs": pairs, "min_lambda_upper_bound": min }), summary).with_seed())
}

/// Largest relative gap `‖(G₁ − G₂)v‖ / ‖G₁v‖` over a few random probes, without forming either Gram matrix.
fn gram_gap(a: &SosDecomposition, b: &SosDecomposition, seed: u64) -> f64 {
    let apply = |d: &SosDecomposition, v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for w in d.factors() {
            let c = linalg::dot(w, v);
            out.iter_mut().zip(w).for_each(|(o, wi)| *o += c * wi);
        }
        out
    };
    let dim = a.m() * a.n();
    let mut rng = sampling::rng(seed);
    (0..4)
        .map(|_| {
            let v = sampling::normal_vec(&mut rng, dim);
            let (ga, gb) = (apply(a, &v), apply(b, &v));
            let diff: Vec<f64> = ga.iter().zip(&gb).map(|(x, y)| x - y).collect();
            linalg::norm(&diff) / linalg::norm(&ga).max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

fn bench(m: usize, n: usize, trials: usize, seed: u64, tol: &Tolerances) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut summary = vec![format!("{:>5} {:>14} {:>14} {:>9} {:>10}", "trial", "structured ms", "naive ms", "factors", "gram gap")];
    for trial in 0..trials.max(1) {
        let mut rng = sampling::sub_rng(seed, trial as u64);
        let x = random_psd_monic(m, n, n, n, &mut rng).context("generating a bench instance")?;
        let t0 = Instant::now();
        let fast = sos_decompose_structured(&x, tol)?;
        let structured_ms = t0.elapsed().as_secs_f64() * 1e3;
        let t1 = Instant::now();
        let naive = sos_decompose_naive(&x, tol)?;
        let naive_ms = t1.elapsed().as_secs_f64() * 1e3;
        let gap = gram_gap(&naive, &fast, seed ^ trial as u64);
        summary.push(format!("{trial:>5} {structured_ms:>14.3} {naive_ms:>14.3} {:>9} {gap:>10.2e}", fast.len()));
        rows.push(json!({
            "trial": trial,
            "structured_ms": structured_ms,
            "naive_ms": naive_ms,
            "factors": fast.len(),
            "naive_factors": naive.len(),
            "gram_gap": gap,
        }));
    }
    Ok(Outcome::ok(json!({ "m": m, "n": n, "trials": rows }), summary).with_seed())
}
