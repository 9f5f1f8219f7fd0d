//! One PASS/FAIL line per acceptance criterion; fails at the end if any is red.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use submis::bounds::{self, AlphaPolicy, BoundEvaluator, Tolerances};
use submis::experiments::{self, catalog, catalog_instance, PhaseConfig, SynthConfig};
use submis::expansion::{self, Verdict};
use submis::numlin;
use submis::subspace;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn run_bin(args: &[&str]) -> (Option<i32>, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_submis"))
        .args(args)
        .env_remove("SUBMIS_SEED")
        .output()
        .expect("binary runs");
    (o.status.code(), String::from_utf8(o.stdout).unwrap())
}

fn criterion1() -> Outcome {
    let mut notes = Vec::new();
    for (name, floor) in [("tableIII-a", true), ("tableIII-b", false), ("tableIII-c", true), ("tableIII-d", false)] {
        let start = Instant::now();
        let (code, _) = run_bin(&["check", "--catalog", name]);
        ensure(code == Some(if floor { 2 } else { 0 }), format!("{name}: check exit {code:?}"))?;
        let (code, tsv) = run_bin(&["simulate", "--catalog", name, "--grid", "80", "--trials", "100000", "--seed", "1"]);
        ensure(code == Some(0), format!("{name}: simulate exit {code:?}"))?;
        let err: f64 = tsv.lines().nth(1).and_then(|l| l.split('\t').nth(1)).and_then(|v| v.parse().ok()).ok_or("bad TSV")?;
        let ok = if floor { err > 1e-2 } else { err < 1e-3 };
        ensure(ok, format!("{name}: mc_error {err:e} at 80 dB"))?;
        let secs = start.elapsed().as_secs_f64();
        ensure(secs <= 60.0, format!("{name}: {secs:.1}s"))?;
        notes.push(format!("{name} {} err={err:.2e}", if floor { "floor" } else { "no-floor" }));
    }
    Ok(notes.join(", "))
}

fn criterion2() -> Outcome {
    let policy = AlphaPolicy::default();
    let tol = Tolerances::default();
    let mut notes = Vec::new();
    for (name, d) in [("rob1", 0.5), ("rob2", 1.0), ("rob3", 1.5)] {
        let inst = catalog_instance(name).unwrap().instance;
        let rep = expansion::expand(&inst, &policy, &tol).map_err(|e| e.to_string())?;
        ensure(rep.verdict == Verdict::NoFloor && rep.d == d, format!("{name}: d = {}", rep.d))?;
        let eval = BoundEvaluator::new(&inst, &policy, &tol).map_err(|e| e.to_string())?;
        let pts = (0..=30)
            .map(|k| eval.at(10f64.powf(-9.0 + 0.1 * k as f64)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let slope = experiments::fit_decay_exponent(&pts, 1e-9, 1e-6).map_err(|e| e.to_string())?;
        ensure((slope - d).abs() <= 0.05, format!("{name}: slope {slope}"))?;
        notes.push(format!("{name} d={d} slope={slope:.4}"));
    }
    Ok(notes.join(", "))
}

fn criterion3() -> Outcome {
    let start = Instant::now();
    let policy = AlphaPolicy::default();
    let tol = Tolerances::default();
    let grid: Vec<f64> = (0..10).map(|k| 10.0 * k as f64).collect();
    let mut worst = f64::NEG_INFINITY;
    for named in catalog() {
        let rows = experiments::sweep_noise(&named.instance, &grid, 100_000, 11, &policy, &tol).map_err(|e| e.to_string())?;
        for r in rows {
            let mc = r.mc.unwrap();
            let slack = mc.overall_error - (r.bound.bound + 3.0 * mc.std_error);
            worst = worst.max(slack);
            ensure(
                slack <= 0.0,
                format!("{} at {} dB: mc {} > bound {}", named.name, r.inv_sigma2_db, mc.overall_error, r.bound.bound),
            )?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs <= 600.0, format!("took {secs:.0}s"))?;
    Ok(format!("{} instances x 10 points, worst mc - bound - 3se = {worst:.2e}, {secs:.1}s", catalog().len()))
}

fn criterion4() -> Outcome {
    let policy = AlphaPolicy::default();
    let tol = Tolerances::default();
    let s2: f64 = 1e-10;
    let mut notes = Vec::new();
    for named in catalog() {
        let rep = expansion::expand(&named.instance, &policy, &tol).map_err(|e| e.to_string())?;
        if rep.verdict != Verdict::NoFloor {
            continue;
        }
        let b = bounds::theorem1_bound(&named.instance, s2, &policy, &tol).map_err(|e| e.to_string())?;
        let log_ratio = b.log10_bound * std::f64::consts::LN_10 - rep.log_a.unwrap() - rep.d * s2.ln();
        let ratio = log_ratio.exp();
        ensure((0.95..=1.05).contains(&ratio), format!("{}: ratio {ratio}", named.name))?;
        notes.push(format!("{} {ratio:.6}", named.name));
    }
    ensure(!notes.is_empty(), "no NoFloor catalog instance".into())?;
    Ok(notes.join(", "))
}

fn criterion5() -> Outcome {
    let policy = AlphaPolicy::default();
    let tol = Tolerances::default();
    let mut pairs = 0;
    for named in catalog() {
        let inst = &named.instance;
        for (i, j) in inst.ordered_pairs() {
            let g = bounds::pair_geometry(inst, i, j, &policy, &tol).map_err(|e| e.to_string())?;
            if !g.conditions_hold() {
                continue;
            }
            pairs += 1;
            let tag = format!("{} ({i},{j})", named.name);
            let k = bounds::k_ij(inst, &g);
            let eig = numlin::sym_eig(&k).map_err(|e| e.to_string())?;
            let rank = numlin::rank_with_tol(&eig.eigenvalues, 1e-10);
            let expected = inst.ambient_dim + g.s_v() - inst.true_models[i].rank();
            ensure(rank == expected, format!("{tag}: rank K {rank} != {expected}"))?;

            let c = expansion::expansion_constant(inst, &g, &tol).map_err(|e| e.to_string())?;
            let s2: f64 = 1e-8;
            let m = bounds::l_ij(inst, i, j, g.alpha, s2) + &k / s2;
            let lhs = rank as f64 * s2.ln() + common::det_lu(&m).ln();
            ensure((lhs - c.log_v_ij).exp_m1().abs() <= 0.01, format!("{tag}: det limit off by {}", (lhs - c.log_v_ij).exp_m1()))?;

            let lt = inst.mismatched_models[i].smallest_eigenvalue().unwrap();
            let hi = (((1.0 - g.alpha) / g.alpha) * lt).min(1.0);
            for step in 1..=10 {
                let s2 = hi * step as f64 / 10.5;
                let s = bounds::sigma_ij(inst, i, j, g.alpha, s2).map_err(|e| e.to_string())?;
                ensure(numlin::is_pd(&s, None), format!("{tag}: Sigma not PD at {s2}"))?;
            }
        }
    }
    Ok(format!("{pairs} catalog pairs: rank, determinant limit, PD interval"))
}

fn criterion6() -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let policy = AlphaPolicy::default();
    let mut rng = common::rng(20240611);
    let (mut c1n, mut c2n) = (0, 0);
    for t in 0..1000 {
        let inst = common::random_instance(&mut rng);
        for (i, j) in inst.ordered_pairs() {
            let g = bounds::pair_geometry(&inst, i, j, &policy, &tol).map_err(|e| e.to_string())?;
            let (rti, rtj) = (inst.mismatched_models[i].rank(), inst.mismatched_models[j].rank());
            ensure(
                g.r_shared() + g.r_exclusive_ij() == rti
                    && g.r_shared() + g.r_exclusive_ji() == rtj
                    && g.s_w() + g.s_v() == inst.true_models[i].rank(),
                format!("instance {t} ({i},{j}): dimension bookkeeping"),
            )?;
            let u = &inst.true_models[i].basis;
            let ut = &inst.mismatched_models[j].basis;
            let pa = subspace::principal_angles(u, ut).map_err(|e| e.to_string())?;
            let gram = ut.basis().transpose() * u.basis() * u.basis().transpose() * ut.basis();
            let mut oracle: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
            oracle.sort_by(|a, b| b.total_cmp(a));
            for (c, o) in pa.cosines.iter().zip(&oracle) {
                // near-1 cosines lose half their digits in the Gram oracle
                ensure((c - o).abs() <= 1e-8 || (c * c - o * o).abs() <= 1e-14, format!("instance {t}: cosine {c} vs {o}"))?;
            }
        }
        let c1 = expansion::check_corollary1(&inst, &tol).map_err(|e| e.to_string())?;
        let c2 = expansion::check_corollary2(&inst, &tol).map_err(|e| e.to_string())?;
        ensure(!c2 || c1, format!("instance {t}: angle check without pairwise check"))?;
        let v = expansion::expand(&inst, &policy, &tol).map_err(|e| format!("instance {t}: {e}"))?.verdict;
        ensure(!c1 || v == Verdict::NoFloor, format!("instance {t}: pairwise check without NoFloor"))?;
        c1n += c1 as usize;
        c2n += c2 as usize;
    }
    let mut rng = common::rng(77);
    for t in 0..1000 {
        let inst = common::random_diagonal_instance(&mut rng);
        let c1 = expansion::check_corollary1(&inst, &tol).map_err(|e| e.to_string())?;
        let c3 = expansion::check_corollary3(&inst).map_err(|e| e.to_string())?;
        ensure(c1 == c3, format!("diagonal instance {t}: diagonal check {c3} vs pairwise check {c1}"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs <= 60.0, format!("took {secs:.1}s"))?;
    Ok(format!("1000 random + 1000 diagonal instances, angle check held on {c2n}, pairwise check on {c1n}, {secs:.1}s"))
}

fn criterion7() -> Outcome {
    let start = Instant::now();
    let data = experiments::synthetic_union_of_subspaces(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let cfg = PhaseConfig {
        rank: 4,
        mismatched_rank: 4,
        n_grid: vec![vec![8; 3], vec![50; 3]],
        runs: 100,
        p_p: 0.9,
        sigma2_eval: 1e-4,
        test_per_class: 100,
        seed: 7,
    };
    let cells = experiments::phase_transition(&data, &cfg).map_err(|e| e.to_string())?;
    let (at8, at50) = (&cells[0], &cells[1]);
    ensure(
        at50.cond_pass_fraction > at8.cond_pass_fraction,
        format!("pass fraction {} at 50 vs {} at 8", at50.cond_pass_fraction, at8.cond_pass_fraction),
    )?;
    ensure(at50.quantile_error < 0.05, format!("0.9-quantile error {} at 50", at50.quantile_error))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs <= 300.0, format!("took {secs:.0}s"))?;
    Ok(format!(
        "pass {:.2} -> {:.2}, quantile error at 50 = {:.4}, {secs:.1}s",
        at8.cond_pass_fraction, at50.cond_pass_fraction, at50.quantile_error
    ))
}

fn criterion8() -> Outcome {
    let dir = std::env::temp_dir().join(format!("submis-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let data = dir.join("synth.csv");
    let data = data.to_str().unwrap();
    let (code, _) = run_bin(&["gen-synth", "--seed", "3", "-o", data]);
    ensure(code == Some(0), "gen-synth failed".into())?;
    let commands: [Vec<&str>; 3] = [
        vec!["simulate", "--catalog", "tableIII-c", "--grid", "0:90:30", "--trials", "20000", "--seed", "9"],
        vec!["bound", "--catalog", "rob2", "--grid", "0:90:10"],
        vec!["phase", "--data", data, "--rank", "4", "--n-grid", "4,8", "--runs", "20", "--sigma2-eval", "1e-4", "--seed", "4"],
    ];
    for cmd in &commands {
        let mut outs = Vec::new();
        for threads in ["1", "1", "4"] {
            let mut args = vec!["--threads", threads];
            args.extend(cmd.iter().copied());
            let (code, out) = run_bin(&args);
            ensure(code == Some(0) && !out.is_empty(), format!("{} failed", cmd[0]))?;
            outs.push(out);
        }
        ensure(outs[0] == outs[1], format!("{}: repeated runs differ", cmd[0]))?;
        ensure(outs[0] == outs[2], format!("{}: 1 vs 4 threads differ", cmd[0]))?;
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok("simulate, bound, phase byte-identical across reruns and 1 vs 4 threads".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("worked-example verdicts and 80 dB errors", criterion1),
        ("decay exponents of rob1-rob3", criterion2),
        ("bound dominates simulation", criterion3),
        ("expansion anchors the bound", criterion4),
        ("kernel rank, determinant limit, PD interval", criterion5),
        ("random geometry oracles", criterion6),
        ("phase transition on synthetic data", criterion7),
        ("determinism", criterion8),
    ];
    // written to the raw handle so the lines show up without --nocapture
    let mut out = std::io::stdout();
    let mut failed = Vec::new();
    for (k, (title, f)) in criteria.iter().enumerate() {
        let n = k + 1;
        match f() {
            Ok(detail) => writeln!(out, "criterion {n}: PASS  {title}: {detail}").unwrap(),
            Err(why) => {
                writeln!(out, "criterion {n}: FAIL  {title}: {why}").unwrap();
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
