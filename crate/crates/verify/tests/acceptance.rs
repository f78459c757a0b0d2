//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints its PASS/FAIL line whatever the outcome. Each criterion
//! holds the measured values to tolerances pinned here, independently of
//! the bounds the library reports.

use polygrowth_verify::{criterion, frozen_oscillatory_integral, Outcome};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

fn report(id: u8) -> Outcome {
    let outcome = criterion(id);
    for c in &outcome.checks {
        println!("    {:<55} {:>12.5e}  bound {:>12.5e}  {}", c.label, c.measured, c.bound, if c.pass { "ok" } else { "FAIL" });
    }
    outcome
}

fn measured(outcome: &Outcome, label: &str) -> f64 {
    outcome
        .check(label)
        .unwrap_or_else(|| panic!("criterion {}: no check {label:?}; notes {:?}", outcome.id, outcome.notes))
        .measured
}

fn finish(outcome: &Outcome) {
    assert!(outcome.pass, "{}", outcome.summary());
}

fn criterion_01_harmonic_oracle() {
    let o = report(1);
    for d in [2, 4] {
        let ratio = measured(&o, &format!("d={d} refinement ratio"));
        assert!((ratio - 4.0).abs() <= 0.2 * 4.0, "d={d} ratio {ratio}");
        for level in ["coarse", "fine"] {
            let c = o.check(&format!("d={d} {level} sup|u-phi|")).unwrap();
            assert!(c.bound >= 1e-8 * 50f64.powi(d));
            assert!(c.measured <= c.bound);
        }
    }
    finish(&o);
}

fn criterion_02_green_identity() {
    let o = report(2);
    for r in [10, 20, 40] {
        assert!(measured(&o, &format!("r={r} |lhs - rhs_identity| / max(lhs, r^2)")) <= 1e-3);
    }
    finish(&o);
}

fn criterion_03_energy_bound() {
    let o = report(3);
    for r in [10.0f64, 20.0, 40.0, 80.0] {
        let c = o.check(&format!("r={r} lhs")).unwrap();
        // 2 osc(F) π r² with osc = 2 on the grid circle nearest r
        assert!((c.bound / (4.0 * PI * r * r) - 1.0).abs() < 0.05);
        assert!(c.measured <= c.bound);
    }
    finish(&o);
}

fn criterion_04_lemma32_exponent() {
    let o = report(4);
    assert!(measured(&o, "slope of sup_{B_r/2} |phi^r - u|") <= 1.6);
    finish(&o);
}

fn criterion_05_growth_exponents() {
    let o = report(5);
    assert!(measured(&o, "d=2 growth exponent") <= 1.6);
    assert!(measured(&o, "d=4 growth exponent") <= 0.15);
    assert!(measured(&o, "d=6 growth exponent") <= -0.7);
    finish(&o);
}

fn criterion_06_selection_rule() {
    let o = report(6);
    for d in [2, 3, 4] {
        assert!(measured(&o, &format!("d={d} forbidden-mode ratio")) < 1e-8);
    }
    finish(&o);
}

fn criterion_07_decay_of_profile() {
    let o = report(7);
    for d in [3.0f64, 4.0] {
        assert!(measured(&o, &format!("d={d} decay exponent of sup|v - cos d theta|")) <= (1.5 - d) + 0.4);
    }
    finish(&o);
}

fn criterion_08_principal_mode() {
    let o = report(8);
    for d in [3.0f64, 4.0] {
        assert!((measured(&o, &format!("d={d} limit of c_d")) - 1.0).abs() <= 0.02);
        assert!(measured(&o, &format!("d={d} decay exponent of c_d - 1")) <= -(1.5 * d - 2.0) + 0.5);
    }
    finish(&o);
}

fn criterion_09_oscillatory_integral() {
    let o = report(9);
    assert!(measured(&o, "frozen profile I_d exponent") <= -4.0 / 2.0 + 0.4);
    for d in [3.0f64, 4.0] {
        assert!(measured(&o, &format!("d={d} g_d exponent")) <= -(1.5 * d - 2.0) + 0.5);
    }
    // the frozen integral is 2π J_1(e^{dt}); J_1 values from scipy.special.j1
    let oracle = [
        (10.0, 0.04347274616886141),
        (31.6, -0.0789198089227851),
        (100.0, -0.0771453520141123),
        (1000.0, 0.00472831190708902),
    ];
    for (x, j1) in oracle {
        let (_, integral) = frozen_oscillatory_integral(4, x, 2.0 * x, 2, 8192).unwrap();
        assert!((integral[0] - 2.0 * PI * j1).abs() < 1e-10, "x = {x}: {} vs {}", integral[0], 2.0 * PI * j1);
    }
    finish(&o);
}

fn criterion_10_mode_ode_residual() {
    let o = report(10);
    for level in ["coarse residual", "fine residual"] {
        let c = o.check(level).unwrap();
        assert!(c.measured <= c.bound, "{level}");
    }
    let ratio = measured(&o, "refinement ratio");
    assert!((ratio - 4.0).abs() <= 0.3 * 4.0, "{ratio}");
    finish(&o);
}

fn criterion_11_rotating_solution() {
    let o = report(11);
    if o.checks.len() > 1 {
        assert!(measured(&o, "first-integral defect") <= 1e-6);
        assert!(measured(&o, "deviation") < PI);
        assert!(measured(&o, "min e.grad u for e.a > 0") >= -1e-6);
        assert!(measured(&o, "max |e.grad u| for e.a = 0") <= 1e-6);
    }
    finish(&o);
}

fn criterion_12_determinism() {
    let o = report(12);
    assert_eq!(measured(&o, "identical bytes"), 1.0);
    finish(&o);
}

type Criterion = (&'static str, fn());

const CRITERIA: [Criterion; 12] = [
    ("criterion_01_harmonic_oracle", criterion_01_harmonic_oracle),
    ("criterion_02_green_identity", criterion_02_green_identity),
    ("criterion_03_energy_bound", criterion_03_energy_bound),
    ("criterion_04_lemma32_exponent", criterion_04_lemma32_exponent),
    ("criterion_05_growth_exponents", criterion_05_growth_exponents),
    ("criterion_06_selection_rule", criterion_06_selection_rule),
    ("criterion_07_decay_of_profile", criterion_07_decay_of_profile),
    ("criterion_08_principal_mode", criterion_08_principal_mode),
    ("criterion_09_oscillatory_integral", criterion_09_oscillatory_integral),
    ("criterion_10_mode_ode_residual", criterion_10_mode_ode_residual),
    ("criterion_11_rotating_solution", criterion_11_rotating_solution),
    ("criterion_12_determinism", criterion_12_determinism),
];

fn main() -> ExitCode {
    // positional arguments filter by name, as with the usual harness
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<&Criterion> = CRITERIA
        .iter()
        .filter(|(name, _)| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str())))
        .collect();
    // the failing assertion is the useful part; skip backtraces
    std::panic::set_hook(Box::new(|info| println!("    {info}")));
    let mut failed = Vec::new();
    for (name, body) in &selected {
        let ok = catch_unwind(AssertUnwindSafe(body)).is_ok();
        println!("{name}: {}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(*name);
        }
    }
    println!(
        "\nacceptance: {} passed, {} failed{}",
        selected.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
