//! `qimap`: reproducible runs of the quantized-map library. Every command
//! writes deterministic output (17 significant digits, comma-separated CSV)
//! and exits 2 on any validation or audit failure.

use std::io::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use qimap_core::cylinder::Strings;
use qimap_core::entropy::{
    bound_thm2, bound_thm3, build_quantum_partition, eup_audit, invariance_defect,
    norm_bound_check, slope_weights, state_weights, Flavor,
};
use qimap_core::families::{
    conditional_entropy_rate, example1_state, example2_state, example3_state,
    family_entropy_rate, fig4_scan, CycleFamily,
};
use qimap_core::linalg::{eigensolve, unitarity_residual, C64, DenseOp, LinearOp};
use qimap_core::map::{build_map, cylinder_interval, decompose, PiecewiseLinearMap};
use qimap_core::observable::{egorov_defect, exact_egorov_check};
use qimap_core::quantize::{quantize_general, quantize_uniform, verify_quantization};
use qimap_core::site::dft;
use qimap_core::tensorial::TensorialUnitary;
use qimap_core::tower::{
    abramov_audit, branch_prefixes, build_classical_tower, first_return_matches_map,
    gram_residual, lift_eigenstate, tower_entropy_bound_audit, tower_evolution, tower_measures,
};
use qimap_core::transfer::transfer_matrix;

#[derive(Parser)]
#[command(name = "qimap", about = "quantized piecewise-linear expanding maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Worker threads (or QMEL_THREADS); computations are sequential and
    /// deterministic, the value is validated and recorded only.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Emit machine-readable JSON on stdout where applicable.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Uniform,
    General,
    Tensorial,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact branch data and the available quantization route.
    MapInfo {
        #[arg(long, default_value = "2,4,4")]
        slopes: String,
    },
    /// Build a unitary quantization and verify it against the transfer matrix.
    Quantize {
        #[arg(long, default_value = "2,4,4")]
        slopes: String,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Scheme::Tensorial)]
        scheme: Scheme,
        /// Grid size for the general scheme (defaults to a valid multiple).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Eigenphases (CSV: index, phase, residual).
    Spectrum {
        #[arg(long, default_value = "2,4,4")]
        slopes: String,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Scheme::Tensorial)]
        scheme: Scheme,
        #[arg(long)]
        out: Option<String>,
    },
    /// Branch-cylinder weights of a closed-form eigenstate (CSV).
    Measure {
        #[arg(long, default_value = "2,4,4")]
        slopes: String,
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// example1 | example2 | example3
        #[arg(long, default_value = "example1")]
        state: String,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
        z: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        which: usize,
        #[arg(long)]
        out: Option<String>,
    },
    /// Entropy rates of a closed-form eigenstate with both bounds (CSV).
    Entropy {
        #[arg(long, default_value = "2,4,4")]
        slopes: String,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value = "example1")]
        state: String,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
        z: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        which: usize,
        #[arg(long)]
        out: Option<String>,
    },
    /// Named pass/fail audits; exits 2 when the audited inequality fails.
    Audit {
        /// unitarity | bmatrix | egorov | exact-egorov | eup | nalini |
        /// invariance | tower | prop13 | abramov
        name: String,
        #[arg(long, default_value = "2,4,4")]
        slopes: String,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
    /// Entropy-vs-bound sweep of the third family (CSV + SVG).
    Fig4 {
        #[arg(long, default_value_t = -3.0)]
        z_min: f64,
        #[arg(long, default_value_t = 3.0)]
        z_max: f64,
        #[arg(long, default_value_t = 241)]
        z_steps: usize,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Output basename; writes <out>.csv and <out>.svg.
        #[arg(long, default_value = "fig4")]
        out: String,
    },
    /// Lift a closed-form eigenstate to the two-level tower and audit it.
    Tower {
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value = "example1")]
        state: String,
        #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
        z: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        which: usize,
    },
}

fn parse_slopes(s: &str) -> Result<PiecewiseLinearMap> {
    let slopes: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse::<u64>().context("slope list must be integers"))
        .collect::<Result<_>>()?;
    Ok(build_map(&slopes)?)
}

fn fmt(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Write once, atomically: compose in memory, then a single rename.
fn write_atomic(path: &str, content: &str) -> Result<()> {
    let tmp = format!("{}.tmp", path);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn emit(out: &Option<String>, content: String) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, &content),
        None => {
            print!("{}", content);
            Ok(())
        }
    }
}

fn build_unitary(map: &PiecewiseLinearMap, scheme: Scheme, k: usize, n: Option<usize>) -> Result<Box<dyn LinearOp>> {
    match scheme {
        Scheme::Tensorial => {
            let base = map.uniform_base().ok_or_else(|| anyhow!("map is not uniform-base"))?;
            let n_max = *base.exponents.iter().max().unwrap() as usize;
            let site = dft(base.p as usize)?;
            let sites = vec![site; n_max];
            Ok(Box::new(TensorialUnitary::nonuniform(map, &sites, k)?))
        }
        Scheme::Uniform => {
            let base = map.uniform_base().ok_or_else(|| anyhow!("map is not uniform-base"))?;
            let dim = (base.p as usize).pow(k as u32);
            Ok(Box::new(quantize_uniform(map, dim)?))
        }
        Scheme::General => {
            let dim = n.unwrap_or_else(|| {
                let lcm = map.slopes().iter().fold(1u64, |a, &b| num::integer::lcm(a, b));
                (lcm * lcm) as usize
            });
            Ok(Box::new(quantize_general(map, dim)?))
        }
    }
}

/// Closed-form family on the 2/4/4 map selected by name.
fn build_family(name: &str, k: usize, z: f64, alpha: f64, which: usize) -> Result<(PiecewiseLinearMap, Box<dyn LinearOp>, CycleFamily, f64)> {
    match name {
        "example1" => {
            let site = dft(2)?.phased(std::f64::consts::FRAC_PI_2);
            let (map, u, fam) = example1_state(&site, k)?;
            let theta = fam.phase;
            Ok((map, Box::new(u), fam, theta))
        }
        "example2" => {
            let site = dft(2)?;
            let ex = example2_state(&site, which, k)?;
            let theta = ex.gamma_phase;
            Ok((ex.map, Box::new(ex.u), ex.family, theta))
        }
        "example3" => {
            let ex = example3_state(C64::new(z, 0.0), alpha, k)?;
            let theta = ex.family.phase;
            Ok((ex.map, Box::new(ex.u), ex.family, theta))
        }
        other => bail!("unknown state '{}'; use example1|example2|example3", other),
    }
}

fn cmd_map_info(slopes: &str) -> Result<serde_json::Value> {
    let map = parse_slopes(slopes)?;
    let branches: Vec<serde_json::Value> = map
        .branches()
        .iter()
        .zip(map.slopes().iter().zip(map.offsets().iter()))
        .map(|((lo, hi), (s, b))| {
            json!({
                "interval": [lo.to_string(), hi.to_string()],
                "slope": s,
                "offset": b.to_string(),
            })
        })
        .collect();
    let route = if let Some(base) = map.uniform_base() {
        json!({
            "kind": "tensorial",
            "p": base.p,
            "exponents": base.exponents,
        })
    } else {
        let dec = decompose(&map)?;
        json!({
            "kind": "composition",
            "p": dec.p,
            "blocks": dec.blocks.len(),
        })
    };
    Ok(json!({
        "slopes": map.slopes(),
        "branches": branches,
        "route": route,
    }))
}

fn cmd_quantize(slopes: &str, k: usize, scheme: Scheme, n: Option<usize>) -> Result<serde_json::Value> {
    let map = parse_slopes(slopes)?;
    let u = build_unitary(&map, scheme, k, n)?;
    let b = transfer_matrix(&map, u.dim())?;
    let rep = verify_quantization(u.as_ref(), &b)?;
    let pass = rep.passes(1e-12);
    let out = json!({
        "dim": u.dim(),
        "max_modulus_residual": rep.max_modulus_residual,
        "max_unitarity_residual": rep.max_unitarity_residual,
        "support_match": rep.support_match,
        "pass": pass,
    });
    if !pass {
        bail!("quantization verification failed: {}", out);
    }
    Ok(out)
}

fn cmd_spectrum(slopes: &str, k: usize, scheme: Scheme, out: &Option<String>) -> Result<()> {
    let map = parse_slopes(slopes)?;
    let u = build_unitary(&map, scheme, k, None)?;
    let dense = u.to_dense()?;
    let states = eigensolve(&dense)?;
    let mut csv = String::from("index,phase,residual\n");
    for (i, st) in states.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", i, fmt(st.phase), fmt(st.residual)));
    }
    emit(out, csv)
}

fn cmd_measure(
    slopes: &str,
    k: usize,
    state: &str,
    n: usize,
    z: f64,
    alpha: f64,
    which: usize,
    out: &Option<String>,
) -> Result<()> {
    let map = parse_slopes(slopes)?;
    let (fmap, u, fam, _) = build_family(state, k, z, alpha, which)?;
    if fmap.slopes() != map.slopes() {
        bail!("state '{}' is defined on the 2,4,4 map", state);
    }
    let part = build_quantum_partition(u.as_ref(), &map, n, 0.0, Flavor::Forward)?;
    let table = state_weights(&part, &fam.psi);
    let prefixes = branch_prefixes(&map)?;
    let mut csv = String::from("cylinder,weight,closed_form\n");
    for eps in Strings::new(map.branch_count(), n) {
        let w = table.get(&eps);
        let digits: Vec<u8> = eps
            .iter()
            .flat_map(|&e| prefixes[e as usize].iter().copied())
            .collect();
        let closed = fam.measure_limit(&digits);
        let label: String = eps.iter().map(|d| char::from(b'0' + d)).collect();
        csv.push_str(&format!("{},{},{}\n", label, fmt(w), fmt(closed)));
    }
    emit(out, csv)
}

fn cmd_entropy(
    slopes: &str,
    k: usize,
    state: &str,
    n: usize,
    z: f64,
    alpha: f64,
    which: usize,
    out: &Option<String>,
) -> Result<()> {
    let map = parse_slopes(slopes)?;
    let (fmap, _, fam, _) = build_family(state, k, z, alpha, which)?;
    if fmap.slopes() != map.slopes() {
        bail!("state '{}' is defined on the 2,4,4 map", state);
    }
    let prefixes = branch_prefixes(&map)?;
    let branch_weights: Vec<f64> = prefixes.iter().map(|c| fam.measure_limit(c)).collect();
    let b2 = bound_thm2(&branch_weights, &map)?;
    let b3 = bound_thm3(&branch_weights, &map)?;
    let rates = family_entropy_rate(&map, &fam, n)?;
    let mut csv = String::from("n,rate,conditional_rate,closed_form,bound_thm2,bound_thm3\n");
    for (i, r) in rates.iter().enumerate() {
        let cond = conditional_entropy_rate(&rates[..=i]);
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            fmt(*r),
            fmt(cond),
            fmt(fam.entropy),
            fmt(b2),
            fmt(b3)
        ));
    }
    emit(out, csv)
}

fn cmd_audit(name: &str, slopes: &str, k: usize, delta: f64, n: usize) -> Result<serde_json::Value> {
    let map = parse_slopes(slopes)?;
    match name {
        "unitarity" => {
            let u = build_unitary(&map, Scheme::Tensorial, k, None)?;
            let r = unitarity_residual(u.as_ref())?;
            audit_result(name, r < 1e-12, json!({ "residual": r }))
        }
        "bmatrix" => {
            let b = transfer_matrix(&map, 1usize << k)?;
            let ok = b.is_doubly_stochastic();
            audit_result(name, ok, json!({ "size": b.size(), "doubly_stochastic": ok }))
        }
        "egorov" => {
            let u = build_unitary(&map, Scheme::Tensorial, k, None)?;
            let f = |x: f64| (std::f64::consts::TAU * x).sin();
            let mut rows = Vec::new();
            for m in 1..=n.min(3) {
                let d = egorov_defect(u.as_ref(), &map, &f, &[], m)?;
                rows.push(json!({ "n": m, "defect": d }));
            }
            audit_result(name, true, json!({ "rows": rows }))
        }
        "exact-egorov" => {
            let u = build_unitary(&map, Scheme::Tensorial, k, None)?;
            let base = map.uniform_base().ok_or_else(|| anyhow!("needs a uniform base"))?;
            let mut worst = 0.0f64;
            for m in 1..=2usize {
                for x in Strings::new(base.p as usize, m) {
                    let iv = cylinder_interval(base.p, &x)?;
                    for step in 1..=((k - m) / 2).min(3) {
                        worst = worst.max(exact_egorov_check(u.as_ref(), &map, &iv, step)?);
                    }
                }
            }
            audit_result(name, worst < 1e-12, json!({ "max_residual": worst }))
        }
        "eup" => {
            let u = build_unitary(&map, Scheme::Tensorial, k, None)?;
            let dense = u.to_dense()?;
            let states = eigensolve(&dense)?;
            let v = slope_weights(&map);
            let fwd = build_quantum_partition(u.as_ref(), &map, n, delta, Flavor::Forward)?;
            let rev = build_quantum_partition(u.as_ref(), &map, n, delta, Flavor::Reversed)?;
            let mut un = DenseOp::new(dense.clone());
            for _ in 1..n {
                un = DenseOp::new(un.mat.dot(&dense));
            }
            let mut worst = f64::INFINITY;
            for st in states.iter().step_by(8) {
                let rep = eup_audit(&fwd, &rev, &v, &v, &un, &st.vector)?;
                worst = worst.min(rep.margin);
            }
            audit_result(name, worst >= -1e-10, json!({ "min_margin": worst }))
        }
        "nalini" => {
            let u = build_unitary(&map, Scheme::Tensorial, k, None)?;
            let mut ok = true;
            let mut rows = Vec::new();
            for m in 1..=n.min(2) {
                for eps in Strings::new(map.branch_count(), m) {
                    let (meas, bound) = norm_bound_check(u.as_ref(), &map, &eps, delta)?;
                    ok &= meas <= bound * (1.0 + 1e-9);
                    rows.push(json!({ "eps": eps, "norm": meas, "bound": bound }));
                }
            }
            audit_result(name, ok, json!({ "rows": rows }))
        }
        "invariance" => {
            let u = build_unitary(&map, Scheme::Tensorial, k, None)?;
            let dense = u.to_dense()?;
            let states = eigensolve(&dense)?;
            let mut worst = 0.0f64;
            for eps in Strings::new(map.branch_count(), 1) {
                let d = invariance_defect(u.as_ref(), &map, &states[0].vector, &eps, 1, delta, Flavor::Forward)?;
                worst = worst.max(d);
            }
            audit_result(name, worst < 1e-10, json!({ "max_defect": worst }))
        }
        "tower" => {
            let tower = build_classical_tower(&map)?;
            let classical = first_return_matches_map(&map, &tower, 6).is_ok();
            let (_, u, fam, theta) = build_family("example1", k, 0.0, 0.0, 0)?;
            drop(u);
            let site = dft(2)?.phased(std::f64::consts::FRAC_PI_2);
            let ev = tower_evolution(k, theta, &[site.clone(), site])?;
            let gram = gram_residual(&ev.basis());
            let phi = lift_eigenstate(&ev, &fam.psi)?;
            let res = ev
                .apply(&phi)
                .sub(&phi.scale(C64::from_polar(1.0, theta)))
                .norm();
            audit_result(
                name,
                classical && gram < 1e-12 && res < 1e-10,
                json!({ "first_return_ok": classical, "gram_residual": gram, "lift_residual": res }),
            )
        }
        "prop13" => {
            let (_, _, fam, theta) = build_family("example1", k, 0.0, 0.0, 0)?;
            let site = dft(2)?.phased(std::f64::consts::FRAC_PI_2);
            let ev = tower_evolution(k, theta, &[site.clone(), site])?;
            let phi = lift_eigenstate(&ev, &fam.psi)?;
            let rep = tower_entropy_bound_audit(&ev, &phi, k)?;
            audit_result(name, rep.holds, json!({ "h_top": rep.h_top, "bound": rep.bound }))
        }
        "abramov" => {
            let oracle = |s: &[u8]| 0.5f64.powi(s.len() as i32);
            let rep = abramov_audit(&map, &oracle, n.max(6))?;
            let last = *rep.gaps.last().unwrap();
            audit_result(
                name,
                last < 5e-2,
                json!({ "gamma": rep.gamma, "gap": last, "log_height": rep.log_height }),
            )
        }
        other => bail!(
            "unknown audit '{}'; names: unitarity bmatrix egorov exact-egorov eup nalini invariance tower prop13 abramov",
            other
        ),
    }
}

fn audit_result(name: &str, pass: bool, detail: serde_json::Value) -> Result<serde_json::Value> {
    let out = json!({ "audit": name, "pass": pass, "detail": detail });
    if !pass {
        println!("{}", serde_json::to_string_pretty(&out)?);
        bail!("audit '{}' failed", name);
    }
    Ok(out)
}

fn cmd_tower(k: usize, state: &str, z: f64, alpha: f64, which: usize) -> Result<serde_json::Value> {
    let (_, _, fam, theta) = build_family(state, k, z, alpha, which)?;
    let sites: [qimap_core::site::SiteUnitary; 2] = match state {
        "example1" => {
            let s = dft(2)?.phased(std::f64::consts::FRAC_PI_2);
            [s.clone(), s]
        }
        "example2" => {
            let s = dft(2)?;
            [s.clone(), s.phased(-theta)]
        }
        _ => {
            let s = qimap_core::families::example3_site(alpha);
            [s.clone(), s]
        }
    };
    let ev = tower_evolution(k, theta, &sites)?;
    let phi = lift_eigenstate(&ev, &fam.psi)?;
    let res = ev
        .apply(&phi)
        .sub(&phi.scale(C64::from_polar(1.0, theta)))
        .norm();
    let rep = tower_entropy_bound_audit(&ev, &phi, k)?;
    let (_, bar) = tower_measures(&ev, &phi, 2);
    let base_weights: Vec<serde_json::Value> = Strings::new(2, 2)
        .map(|x| {
            let label: String = x.iter().map(|d| char::from(b'0' + d)).collect();
            json!({ "cylinder": label, "weight": bar.get(&x) })
        })
        .collect();
    let pass = res < 1e-10 && rep.holds;
    let out = json!({
        "state": state,
        "theta": theta,
        "lift_residual": res,
        "entropy_top": rep.h_top,
        "entropy_bound": rep.bound,
        "base_weights": base_weights,
        "pass": pass,
    });
    if !pass {
        bail!("tower audit failed: {}", out);
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<Option<serde_json::Value>> {
    if let Some(t) = cli
        .threads
        .or_else(|| std::env::var("QMEL_THREADS").ok().and_then(|s| s.parse().ok()))
    {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
    }
    match cli.cmd {
        Cmd::MapInfo { slopes } => cmd_map_info(&slopes).map(Some),
        Cmd::Quantize { slopes, k, scheme, n } => cmd_quantize(&slopes, k, scheme, n).map(Some),
        Cmd::Spectrum { slopes, k, scheme, out } => cmd_spectrum(&slopes, k, scheme, &out).map(|_| None),
        Cmd::Measure { slopes, k, state, n, z, alpha, which, out } => {
            cmd_measure(&slopes, k, &state, n, z, alpha, which, &out).map(|_| None)
        }
        Cmd::Entropy { slopes, k, state, n, z, alpha, which, out } => {
            cmd_entropy(&slopes, k, &state, n, z, alpha, which, &out).map(|_| None)
        }
        Cmd::Audit { name, slopes, k, delta, n } => cmd_audit(&name, &slopes, k, delta, n).map(Some),
        Cmd::Fig4 { z_min, z_max, z_steps, alpha, k, n, out } => {
            let scan = fig4_scan(z_min, z_max, z_steps, alpha, k, n)?;
            write_atomic(&format!("{}.csv", out), &scan.to_csv())?;
            write_atomic(&format!("{}.svg", out), &scan.to_svg())?;
            Ok(Some(json!({
                "points": scan.rows.len(),
                "csv": format!("{}.csv", out),
                "svg": format!("{}.svg", out),
            })))
        }
        Cmd::Tower { k, state, z, alpha, which } => cmd_tower(k, &state, z, alpha, which).map(Some),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Some(v)) => println!("{}", serde_json::to_string_pretty(&v).unwrap()),
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {:#}", e);
            std::process::exit(2);
        }
    }
}
