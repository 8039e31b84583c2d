//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary always prints; the
//! process exits non-zero when any criterion fails.

mod common;

use common::*;
use eprsim_core::analysis::{estimate_variances, AxisFits, Measurement, VarianceInputs};
use eprsim_core::events_io::{read_all, write_events, RunMetadata};
use eprsim_core::model::{composite_variances, epr_lifetime, pair_rate_factor, EprLifetime};
use eprsim_core::simulate::{Arm, DetectionEvent, DetectorConfig, Frame};
use eprsim_core::{Basis, DiffusionModel, EprGaussianState};
use eprsim_oracles::{fft_duality, quadrature_moments, random_states};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};
use tempfile::tempdir;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    if took > budget {
        return Err(format!("took {took:.2?}, budget {budget:?}"));
    }
    Ok(took)
}

fn reference() -> (EprGaussianState, DiffusionModel) {
    (
        EprGaussianState::new(1.0, 0.2, 0.4878f64.sqrt()).unwrap(),
        DiffusionModel::new(0.0137, 2.0).unwrap(),
    )
}

fn zero_delay_calibration() -> Outcome {
    let tmp = tempdir().unwrap();
    let start = Instant::now();
    eprsim_ok(&["theory", "--config", "table1-demo.json", "--tau", "0", "--out", path_str(tmp.path())]);
    let took = within_budget(start, Duration::from_secs(1))?;
    let t = Csv::read(&tmp.path().join("theory.csv"));
    let mut parts = Vec::new();
    for (col, want) in [
        ("var_diff_pos_mm2", 0.040),
        ("var_sum_mom_hbar2_per_mm2", 2.05),
        ("product_hbar2", 0.082),
        ("dimension", 12.2),
    ] {
        let got = t.num(0, col);
        ensure!(rel(got, want) <= 0.01, "{col} = {got}, want {want} within 1%");
        parts.push(format!("{col}={got:.4}"));
    }
    Ok(format!("{} in {took:.2?}", parts.join(" ")))
}

fn fourier_duality() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (state, diff) in random_states(2, 20, 16.0) {
        for tau in [0.0, 1.0, 5.0] {
            let cmp = fft_duality(&state, &diff, tau, 256);
            ensure!(cmp.max_rel_error <= 1e-6, "{state:?} tau={tau}: error {}", cmp.max_rel_error);
            worst = worst.max(cmp.max_rel_error);
        }
    }
    let took = within_budget(start, Duration::from_secs(30))?;
    Ok(format!("max relative error {worst:.1e} over 60 cases in {took:.2?}"))
}

fn saturation() -> Outcome {
    let start = Instant::now();
    let taus: Vec<f64> = (0..50).map(|i| 0.2 * i as f64).collect();
    let mut worst_at_zero: f64 = 0.0;
    for (state, diff) in random_states(3, 100, 64.0) {
        for &tau in &taus {
            let c = composite_variances(&state, &diff, tau).map_err(|e| e.to_string())?;
            for product in [c.var_diff_pos * c.var_diff_mom, c.var_sum_pos * c.var_sum_mom] {
                if tau == 0.0 {
                    ensure!((product - 1.0).abs() <= 1e-9, "{state:?}: conjugate product {product} at tau=0");
                    worst_at_zero = worst_at_zero.max((product - 1.0).abs());
                } else {
                    ensure!(product >= 1.0, "{state:?} tau={tau}: conjugate product {product} < hbar^2");
                }
            }
        }
    }
    let took = within_budget(start, Duration::from_secs(5))?;
    Ok(format!("|product - 1| <= {worst_at_zero:.1e} at tau=0, >= 1 elsewhere, 5000 cases in {took:.2?}"))
}

fn quadrature() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (i, (state, diff)) in random_states(4, 20, 16.0).into_iter().enumerate() {
        let tau = 0.5 * i as f64;
        let q = quadrature_moments(&state, &diff, tau);
        let c = composite_variances(&state, &diff, tau).map_err(|e| e.to_string())?;
        let eta = pair_rate_factor(&state, &diff, tau).map_err(|e| e.to_string())?;
        for (name, num, closed) in [
            ("var_diff_pos", q.var_diff_pos, c.var_diff_pos),
            ("var_sum_pos", q.var_sum_pos, c.var_sum_pos),
            ("var_sum_mom", q.var_sum_mom, c.var_sum_mom),
            ("var_diff_mom", q.var_diff_mom, c.var_diff_mom),
            ("pair_rate", q.pair_rate, eta),
        ] {
            let e = rel(num, closed);
            ensure!(e <= 1e-6, "{name} at tau={tau}: quadrature {num} vs closed form {closed}");
            worst = worst.max(e);
        }
    }
    let took = within_budget(start, Duration::from_secs(60))?;
    Ok(format!("max relative error {worst:.1e} at 20 points in {took:.2?}"))
}

/// Simulates and analyzes 2e5 frames per basis at τ = 0.25 us.
fn reference_run(dir: &Path, extra: &[&str]) -> serde_json::Value {
    let (sim, an) = (dir.join("sim"), dir.join("an"));
    let mut args = vec![
        "simulate", "--config", "table1-demo.json", "--tau", "0.25", "--frames", "200000", "--seed", "42", "--out",
        path_str(&sim),
    ];
    args.extend(extra);
    eprsim_ok(&args);
    let mut events: Vec<String> = fs::read_dir(&sim)
        .unwrap()
        .map(|e| e.unwrap().path().to_string_lossy().into_owned())
        .collect();
    events.sort();
    let mut args: Vec<&str> = vec!["analyze"];
    args.extend(events.iter().map(String::as_str));
    args.extend(["--out", path_str(&an)]);
    eprsim_ok(&args);
    read_json(&an.join("report.json"))
}

fn monte_carlo_recovery() -> Outcome {
    let tmp = tempdir().unwrap();
    let start = Instant::now();
    let report = reference_run(tmp.path(), &[]);
    let took = within_budget(start, Duration::from_secs(120))?;
    let (state, diff) = reference();
    let model = composite_variances(&state, &diff, 0.25).unwrap();
    let mut parts = Vec::new();
    for (key, want) in [("var_diff_pos", model.var_diff_pos), ("var_sum_mom", model.var_sum_mom)] {
        let (v, s) = measurement(&report[key]);
        let pull = (v - want) / s;
        ensure!(pull.abs() <= 3.0, "{key} = {v} +- {s}, model {want} ({pull:+.2} SE)");
        parts.push(format!("{key}={v:.4}+-{s:.4} ({pull:+.2} SE)"));
    }
    ensure!(report["regime"] == "EprParadox", "regime {}", report["regime"]);
    let (p, ps) = measurement(&report["product"]);
    Ok(format!("{} product={p:.4}+-{ps:.4} EprParadox in {took:.2?}", parts.join(" ")))
}

fn crossing(t0: f64, p0: f64, t1: f64, p1: f64, level: f64) -> f64 {
    t0 + (level - p0) * (t1 - t0) / (p1 - p0)
}

/// One scan over the decay delays plus τ = 0 for the pair-rate reference.
struct Scan {
    csv: Csv,
    took: Duration,
}

const SCAN_TAUS: [f64; 8] = [0.25, 1.0, 2.0, 3.0, 4.5, 6.0, 7.5, 9.0];

fn run_scan(dir: &Path) -> Scan {
    let start = Instant::now();
    eprsim_ok(&[
        "scan", "--config", "table1-demo.json", "--tau", "0,0.25,1,2,3,4.5,6,7.5,9", "--frames", "800000",
        "--seed", "42", "--out", path_str(dir),
    ]);
    Scan {
        csv: Csv::read(&dir.join("scan.csv")),
        took: start.elapsed(),
    }
}

fn decay_scan(scan: &Scan) -> Outcome {
    ensure!(scan.took <= Duration::from_secs(600), "scan took {:.2?}", scan.took);
    let c = &scan.csv;
    let rows: Vec<usize> = SCAN_TAUS
        .iter()
        .map(|&t| (0..c.rows.len()).find(|&r| c.num(r, "tau_us") == t).expect("scheduled delay"))
        .collect();
    for &r in &rows {
        ensure!(c.text(r, "status") == "ok", "tau={}: status {}", c.num(r, "tau_us"), c.text(r, "status"));
    }
    for w in rows.windows(2) {
        let (p0, s0) = (c.num(w[0], "product_hbar2"), c.num(w[0], "product_hbar2_err"));
        let (p1, s1) = (c.num(w[1], "product_hbar2"), c.num(w[1], "product_hbar2_err"));
        ensure!(
            p1 >= p0 - 3.0 * s0.hypot(s1),
            "product falls from {p0}+-{s0} to {p1}+-{s1} between tau={} and {}",
            c.num(w[0], "tau_us"),
            c.num(w[1], "tau_us")
        );
    }
    let regimes: Vec<&str> = rows.iter().map(|&r| c.text(r, "regime")).collect();
    let first_after = regimes.iter().position(|g| *g != "EprParadox");
    let Some(k) = first_after.filter(|&k| k > 0) else {
        return Err(format!("no EprParadox -> InseparableOnly transition: {regimes:?}"));
    };
    ensure!(
        regimes[k..].iter().all(|g| *g == "InseparableOnly"),
        "regime sequence is not a single transition: {regimes:?}"
    );
    let (a, b) = (rows[k - 1], rows[k]);
    let t_cross = crossing(
        c.num(a, "tau_us"),
        c.num(a, "product_hbar2"),
        c.num(b, "tau_us"),
        c.num(b, "product_hbar2"),
        0.25,
    );
    let (state, diff) = reference();
    let EprLifetime::At(t_star) = epr_lifetime(&state, &diff).unwrap() else {
        return Err("reference state has no finite EPR lifetime".into());
    };
    ensure!(
        (t_cross - t_star).abs() <= 0.75,
        "measured transition at {t_cross:.3} us, analytic {t_star:.3} us"
    );
    Ok(format!(
        "monotone within 3 SE; transition between tau={} and {} at {t_cross:.2} us (analytic {t_star:.3}) in {:.2?}",
        c.num(a, "tau_us"),
        c.num(b, "tau_us"),
        scan.took
    ))
}

fn uncertainty_arithmetic() -> Outcome {
    let m = |v, s| Some(Measurement::new(v, s));
    let report = estimate_variances(&VarianceInputs {
        tau: Some(0.25),
        x: AxisFits {
            var_diff_pos: m(0.040, 0.004),
            var_sum_mom: m(2.6, 0.1),
        },
        y: AxisFits {
            var_diff_pos: m(0.040, 0.004),
            var_sum_mom: m(1.5, 0.04),
        },
    });
    let px = report.x.product.ok_or("x-row product missing")?;
    let shown = format!("{:.2}({:.0})", px.value, px.sigma * 100.0);
    ensure!(shown == "0.10(1)", "x-row product {px:?} shows as {shown}");
    let mom = report.var_sum_mom.ok_or("averaged momentum-sum variance missing")?;
    let shown_mom = format!("{:.2}", mom.value);
    ensure!(shown_mom == "2.05", "momentum-sum average {mom:?} shows as {shown_mom}");
    let dim = Measurement::new(0.082, 0.006).reciprocal_scaled(1.0);
    let shown_dim = format!("{:.1} +- {:.1}", dim.value, dim.sigma);
    ensure!(shown_dim == "12.2 +- 0.9", "dimension {dim:?} shows as {shown_dim}");
    Ok(format!("product {shown}, average {shown_mom}, dimension {shown_dim}"))
}

fn background_robustness() -> Outcome {
    let tmp = tempdir().unwrap();
    let free = reference_run(&tmp.path().join("free"), &[]);
    let dark = reference_run(&tmp.path().join("dark"), &["--set", "detector.dark_rate=0.5"]);
    let accidental = |r: &serde_json::Value| r["coincidences"]["near_field"]["accidental"].as_u64().unwrap();
    ensure!(
        accidental(&dark) > 2 * accidental(&free),
        "dark counts did not raise the accidental floor"
    );
    let mut worst: f64 = 0.0;
    for axis in ["x", "y"] {
        for key in ["var_diff_pos", "var_sum_mom"] {
            let (a, sa) = measurement(&free[axis][key]);
            let (b, sb) = measurement(&dark[axis][key]);
            let z = (b - a) / sa.hypot(sb);
            ensure!(z.abs() <= 3.0, "{axis}.{key}: dark {b}+-{sb} vs dark-free {a}+-{sa} ({z:+.2} SE)");
            worst = worst.max(z.abs());
        }
    }
    Ok(format!("largest shift {worst:.2} combined SE over 4 fitted variances"))
}

fn pair_rate(scan: &Scan) -> Outcome {
    let c = &scan.csv;
    let zero = (0..c.rows.len()).find(|&r| c.num(r, "tau_us") == 0.0).expect("tau=0 row");
    let (c0, s0) = (c.num(zero, "coincidences"), c.num(zero, "coincidences_err"));
    let mut worst: f64 = 0.0;
    for r in 0..c.rows.len() {
        if r == zero {
            continue;
        }
        let eta = c.num(r, "model_pair_rate");
        let (n, s) = (c.num(r, "coincidences"), c.num(r, "coincidences_err"));
        let z = (n - eta * c0) / s.hypot(eta * s0);
        ensure!(z.abs() <= 3.0, "tau={}: {n}+-{s} vs {eta}*{c0} ({z:+.2} SE)", c.num(r, "tau_us"));
        worst = worst.max(z.abs());
    }
    Ok(format!("{} delays, largest deviation {worst:.2} SE", c.rows.len() - 1))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn rerun_identical(args: &[&str], out: &Path) -> Result<usize, String> {
    let mut snaps = Vec::new();
    for _ in 0..2 {
        let mut a = args.to_vec();
        a.extend(["--out", path_str(out)]);
        eprsim_ok(&a);
        snaps.push(dir_bytes(out));
    }
    ensure!(snaps[0] == snaps[1], "{args:?}: rerun output differs");
    Ok(snaps[0].len())
}

fn arb_coord() -> impl Strategy<Value = f64> {
    use proptest::num::f64::{NEGATIVE, NORMAL, POSITIVE, SUBNORMAL, ZERO};
    POSITIVE | NEGATIVE | NORMAL | SUBNORMAL | ZERO
}

fn arb_run() -> impl Strategy<Value = (RunMetadata, Vec<Frame>)> {
    let event = (any::<bool>(), arb_coord(), arb_coord()).prop_map(|(s, u, v)| DetectionEvent {
        arm: if s { Arm::Stokes } else { Arm::AntiStokes },
        coord: [u, v],
    });
    (
        any::<bool>(),
        0.0f64..100.0,
        0u64..u64::MAX / 2,
        prop::collection::vec(prop::collection::vec(event, 0..5), 1..25),
        any::<u64>(),
    )
        .prop_map(|(near, tau, first, events, seed)| {
            let basis = if near { Basis::Position } else { Basis::Momentum };
            let frames: Vec<Frame> = events
                .into_iter()
                .enumerate()
                .map(|(i, events)| Frame {
                    frame_id: first + i as u64,
                    events,
                })
                .collect();
            let mut meta = RunMetadata::new(basis, tau, first, frames.len() as u64);
            meta.master_seed = Some(seed);
            meta.detector = Some(DetectorConfig::table1_demo(basis, 12));
            (meta, frames)
        })
}

fn events_roundtrip_property() -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&arb_run(), |(meta, frames)| {
            let bytes = write_events(&frames, &meta, Vec::new()).unwrap();
            let (m2, f2) = read_all(bytes.as_slice()).unwrap();
            prop_assert_eq!(&m2, &meta);
            let canonical: Vec<Frame> = frames
                .into_iter()
                .map(|mut f| {
                    f.canonicalize();
                    f
                })
                .collect();
            prop_assert_eq!(&f2, &canonical);
            prop_assert_eq!(write_events(&f2, &m2, Vec::new()).unwrap(), bytes);
            Ok(())
        })
        .map_err(|e| format!("events round trip: {e}"))
}

fn exit_codes() -> Result<usize, String> {
    let tmp = tempdir().unwrap();
    let sim = tmp.path().join("sim");
    eprsim_ok(&[
        "simulate", "--config", "table1-demo.json", "--tau", "0.25", "--frames", "500", "--basis", "near", "--out",
        path_str(&sim),
    ]);
    let good = sim.join("events_near_tau0.25.events.csv");
    let text = fs::read_to_string(&good).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let corrupt = |name: &str, content: String| {
        let p = tmp.path().join(name);
        fs::write(&p, content).unwrap();
        p
    };
    let mut bad_row = lines.clone();
    bad_row[5] = "3,S,0.1";
    let mut bad_arm = lines.clone();
    bad_arm[6] = "3,Q,0.1,0.2";
    let mut out_of_range = lines.clone();
    out_of_range[7] = "999999,S,0.1,0.2";
    let inputs = [
        corrupt("row.events.csv", bad_row.join("\n") + "\n"),
        corrupt("arm.events.csv", bad_arm.join("\n") + "\n"),
        corrupt("range.events.csv", out_of_range.join("\n") + "\n"),
        corrupt("header.events.csv", lines[1..].join("\n") + "\n"),
        corrupt("meta.events.csv", format!("#meta {{not json\n{}\n", lines[1..].join("\n"))),
        corrupt("truncated.events.csv", text[..text.len() - 3].to_string()),
        corrupt("empty.events.csv", String::new()),
        tmp.path().join("missing.events.csv"),
    ];
    let blocker = corrupt("blocker", String::new());
    let cfg_missing = edited_config(tmp.path(), "nosigma.json", |d| {
        d["state"].as_object_mut().unwrap().remove("sigma_plus");
    });
    let out = tmp.path().join("out");
    let mut cases: Vec<(Vec<String>, i32)> = inputs
        .iter()
        .map(|p| (vec!["analyze".into(), p.to_string_lossy().into_owned(), "--out".into(), path_str(&out).into()], 4))
        .collect();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<String>>();
    cases.extend([
        (s(&["simulate", "--config", path_str(&cfg_missing), "--out", path_str(&out)]), 2),
        (s(&["simulate", "--config", "no-such-config.json"]), 2),
        (s(&["scan", "--config", "table1-demo.json", "--tau", "1"]), 2),
        (s(&["theory", "--config", "table1-demo.json", "--tau-step", "0"]), 2),
        (s(&["simulate", "--config", "table1-demo.json", "--tau", "0.25,x"]), 2),
        (s(&["analyze", path_str(&good), "--shift", "0", "--out", path_str(&out)]), 2),
        (s(&["frobnicate"]), 2),
        (s(&["theory", "--config", "table1-demo.json", "--out", path_str(&blocker.join("x"))]), 3),
        (s(&["simulate", "--config", "table1-demo.json", "--frames", "10", "--out", path_str(&blocker)]), 3),
    ]);
    for (args, want) in &cases {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        let got = eprsim(&a);
        ensure!(
            got.status.code() == Some(*want),
            "{args:?}: exit {:?}, want {want}; stderr: {}",
            got.status.code(),
            stderr(&got)
        );
    }
    Ok(cases.len())
}

fn determinism_and_parsing() -> Outcome {
    let tmp = tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let run = ["--config", "table1-demo.json", "--tau", "0.25,3", "--frames", "20000", "--seed", "42"];
    let mut files = 0;
    files += rerun_identical(&[&["simulate"][..], &run[..]].concat(), &sim)?;
    let events: Vec<String> = dir_bytes(&sim).into_iter().map(|(n, _)| path_str(&sim.join(n)).to_string()).collect();
    let mut analyze = vec!["analyze"];
    analyze.extend(events.iter().filter(|e| e.contains("tau3.")).map(String::as_str));
    files += rerun_identical(&analyze, &tmp.path().join("an"))?;
    files += rerun_identical(&[&["scan"][..], &run[..]].concat(), &tmp.path().join("scan"))?;
    files += rerun_identical(&["theory", "--config", "table1-demo.json"], &tmp.path().join("theory"))?;
    events_roundtrip_property()?;
    let cases = exit_codes()?;
    Ok(format!(
        "{files} output files byte-identical on rerun; 1000 round-trip cases; {cases} exit-code cases"
    ))
}

fn main() {
    // Criteria 6 and 9 read the same scan.
    let scan_dir = tempdir().unwrap();
    let scan = std::cell::OnceCell::new();
    let get_scan = || scan.get_or_init(|| run_scan(scan_dir.path()));

    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "zero-delay calibration", Box::new(zero_delay_calibration)),
        (2, "Fourier duality", Box::new(fourier_duality)),
        (3, "saturation and uncertainty", Box::new(saturation)),
        (4, "closed form vs quadrature", Box::new(quadrature)),
        (5, "Monte Carlo recovery", Box::new(monte_carlo_recovery)),
        (6, "decay scan", Box::new(|| decay_scan(get_scan()))),
        (7, "uncertainty arithmetic", Box::new(uncertainty_arithmetic)),
        (8, "background robustness", Box::new(background_robustness)),
        (9, "pair rate", Box::new(|| pair_rate(get_scan()))),
        (10, "determinism and parsing", Box::new(determinism_and_parsing)),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
