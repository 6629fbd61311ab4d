//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use statrs::function::gamma::{gamma_lr, ln_gamma};
use vmnet_core::arrivals::{intensity, simulate_arrivals, DeltaRule, IntensityParams};
use vmnet_core::network::{simulate_contracts, simulate_network, NodeSet, Simulation, SimulationConfig};
use vmnet_core::oracle::{best_predictor, best_predictor_profile, error_study, prepare_book, OracleConfig};
use vmnet_core::rates::{
    cir_conditional_moments, sample_cir_path, BondBook, BondPricer, CirParams, RatePath, TimeGrid, DT,
};
use vmnet_core::streams::{derive_seed, stream_rng, Stream};
use vmnet_core::swaps::{fair_rate, OisContract};
use vmnet_core::Execution;

fn report(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn reference_config(years: usize, bond_paths: usize, seed: u64) -> SimulationConfig {
    SimulationConfig {
        cir: CirParams::default(),
        intensity: IntensityParams::default(),
        nodes: NodeSet::new(5, 2).unwrap(),
        n_days: 365 * years,
        bond_paths,
        delta_rule: DeltaRule::Coin,
        seed,
    }
}

/// Five nodes over sixty years with a light bond book; shared by the structural checks.
fn sixty_year_run() -> &'static Simulation {
    static SIM: OnceLock<Simulation> = OnceLock::new();
    SIM.get_or_init(|| simulate_network(&reference_config(60, 16, 42), Execution::Parallel).unwrap())
}

/// CDF of `scale * chi'^2_dof(nc)` as a Poisson mixture of central chi-squares.
fn ncx2_cdf(x: f64, scale: f64, dof: f64, nc: f64) -> f64 {
    let half = x / scale / 2.0;
    let mu = nc / 2.0;
    let k0 = mu.floor() as i64;
    let span = (12.0 * mu.sqrt()).ceil() as i64 + 40;
    let log_w = |k: i64| -mu + k as f64 * mu.ln() - ln_gamma(k as f64 + 1.0);
    let log_term = |k: i64| {
        let a = dof / 2.0 + k as f64;
        a * half.ln() - half - ln_gamma(a + 1.0)
    };
    let q0 = gamma_lr(dof / 2.0 + k0 as f64, half);
    let mut total = log_w(k0).exp() * q0;
    let mut q = q0;
    for k in k0 + 1..=k0 + span {
        q -= log_term(k - 1).exp();
        total += log_w(k).exp() * q.max(0.0);
    }
    q = q0;
    for k in ((k0 - span).max(0)..k0).rev() {
        q += log_term(k).exp();
        total += log_w(k).exp() * q.min(1.0);
    }
    total
}

#[test]
fn cir_exactness() {
    let p = CirParams::default();
    let n = 100_000;
    let r0 = p.r0;
    let tr = p.transition(DT);
    let mut rng = stream_rng(2024, Stream::Rates, &[]);
    let mut xs: Vec<f64> = (0..n).map(|_| tr.sample(r0, &mut rng).unwrap()).collect();
    let positive = xs.iter().all(|&x| x > 0.0);
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let (em, ev) = cir_conditional_moments(&p, r0, DT).unwrap();
    let z_mean = (mean - em) / (ev / nf).sqrt();
    let z_var = (var - ev) / ((m4 - var * var) / nf).sqrt();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nc = tr.noncentrality(r0);
    let ks = xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = ncx2_cdf(x, tr.scale, tr.dof, nc);
        d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf)
    });
    let critical = 1.628 / nf.sqrt();
    report(
        "cir_exactness",
        positive && z_mean.abs() < 4.0 && z_var.abs() < 4.0 && ks < critical,
        format!("z_mean={z_mean:.2} z_var={z_var:.2} ks={ks:.5} (crit {critical:.5}) positive={positive}"),
    );
}

#[test]
fn inception_zero() {
    let sim = sixty_year_run();
    let mut worst_leg: f64 = 0.0;
    let mut nonzero = 0;
    for c in &sim.contracts {
        if c.value(c.start, &sim.path, &sim.book).unwrap() != 0.0 {
            nonzero += 1;
        }
        let leg = c.leg_difference(c.start, &sim.path, sim.book.price(c.start, c.maturity).unwrap()).unwrap();
        worst_leg = worst_leg.max(leg.abs());
    }
    let pass = !sim.contracts.is_empty() && nonzero == 0 && worst_leg <= 8.0 * f64::EPSILON;
    report(
        "inception_zero",
        pass,
        format!("{} contracts, {nonzero} with V(start) != 0, max raw leg difference {worst_leg:.2e}", sim.contracts.len()),
    );
}

#[test]
fn conservation() {
    let sim = sixty_year_run();
    let mut worst: f64 = 0.0;
    let mut active_days = 0;
    for row in &sim.labels[1..] {
        let scale: f64 = row.iter().map(|x| x.abs()).sum();
        let total: f64 = row.iter().sum();
        if scale > 0.0 {
            active_days += 1;
            worst = worst.max(total.abs() / scale);
        } else if total != 0.0 {
            worst = f64::INFINITY;
        }
    }
    report(
        "conservation",
        worst <= 1e-10 && sim.labels.len() == sim.n_days() + 1,
        format!("{} days ({active_days} with margin), max |sum|/sum|M| = {worst:.2e}", sim.n_days()),
    );
}

#[test]
fn martingale() {
    let p = CirParams::default();
    let (start, maturity, l) = (0usize, 365usize, 300usize);
    let base = sample_cir_path(&p, TimeGrid::new(l).unwrap(), 77).unwrap();
    let r_l = base.rate(l);
    let p0 = BondPricer::new(p, 20_000, 1).unwrap().price(start, maturity, p.r0).unwrap();
    let k = fair_rate(start, maturity, p0.price).unwrap();
    let contract = OisContract { id: 0, i: 0, j: 1, start, maturity, principal: 1.0, fair_rate: k, delta_i: 1 };
    let p_l = BondPricer::new(p, 1_000_000, 2).unwrap().price(l, maturity, r_l).unwrap();

    let n_futures = 10_000u64;
    let tr = p.transition(DT);
    let inner_paths = 100;
    let samples = Execution::Parallel.map(n_futures as usize, |f| {
        let mut rng = stream_rng(3, Stream::Rates, &[f as u64]);
        let r_next = tr.sample(r_l, &mut rng).unwrap();
        let mut rates = base.rates().to_vec();
        rates.push(r_next);
        let path = RatePath::from_rates(rates).unwrap();
        let inner = BondPricer::new(p, inner_paths, derive_seed(4, Stream::Bonds, &[f as u64]))
            .unwrap()
            .with_execution(Execution::Sequential);
        let mut book = BondBook::new();
        book.insert(l, maturity, p_l);
        book.insert(l + 1, maturity, inner.price(l + 1, maturity, r_next).unwrap());
        contract.margin(l + 1, &path, &book).unwrap() / (1.0 + r_next * DT)
    });
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // V(l) enters every sample through the shared p(l, T) estimate.
    let shared = (1.0 + k * contract.tenor()) * p_l.std_error;
    let se = (var / n + shared * shared).sqrt();
    report(
        "martingale",
        mean.abs() < 4.0 * se,
        format!("mean discounted margin {mean:.3e}, se {se:.3e}, z={:.2}", mean / se),
    );
}

#[test]
fn poisson_check() {
    let params = IntensityParams::default();
    let days = 365 * 10;
    let path = RatePath::constant(0.04, days).unwrap();
    let lambda_t = intensity(&params, 0.04, 1.0) * days as f64 * DT;
    let n = 10_000u64;
    let total: usize = (0..n).map(|s| simulate_arrivals(&params, &path, 1.0, s).unwrap().len()).sum();
    let mean = total as f64 / n as f64;
    let z = (mean - lambda_t) / (lambda_t / n as f64).sqrt();
    report("poisson_check", z.abs() < 4.0, format!("mean count {mean:.4} vs lambda T {lambda_t:.4}, z={z:.2}"));
}

#[test]
fn one_step_oracle_identity() {
    let mut sim = simulate_network(&reference_config(10, 64, 7), Execution::Parallel).unwrap();
    let bases: Vec<usize> = (0..sim.n_days()).collect();
    prepare_book(&mut sim, &bases, 1, Execution::Parallel).unwrap();
    let cfg = OracleConfig::for_simulation(&sim, 16, 5);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for &l in &bases {
        let profile = best_predictor_profile(&sim, &cfg, l, 1).unwrap();
        for node in 0..sim.n_nodes() {
            let realized = sim.labels[l + 1][node] / (1.0 + sim.path.rate(l + 1) * DT);
            let got = profile[0][node].value;
            let err = (got - realized).abs() / realized.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(if got == realized { 0.0 } else { err });
            checked += 1;
        }
    }
    for &(l, node) in &[(100, 0), (1800, 3), (3600, 4)] {
        let e = best_predictor(&sim, &cfg, node, l, 1).unwrap();
        let realized = sim.labels[l + 1][node] / (1.0 + sim.path.rate(l + 1) * DT);
        worst = worst.max((e.value - realized).abs() / realized.abs().max(f64::MIN_POSITIVE));
    }
    report(
        "one_step_oracle_identity",
        worst <= 1e-10 && checked == sim.n_days() * sim.n_nodes(),
        format!("{checked} node/days, {} contracts, max relative error {worst:.2e}", sim.contracts.len()),
    );
}

#[test]
fn error_study_reproduction() {
    let (m, n_sims, repeats) = (21, 1000, 100);
    let mut sim = simulate_contracts(&reference_config(60, 10_000, 2024), Execution::Parallel).unwrap();
    let bases: Vec<usize> = (0..60).step_by(3).map(|y| 365 * y + 180).collect();
    prepare_book(&mut sim, &bases, m, Execution::Parallel).unwrap();
    let cfg = OracleConfig::for_simulation(&sim, n_sims, 99);
    let rows = error_study(&sim, &cfg, &bases, &[m], &[n_sims], repeats).unwrap();
    let evaluated: Vec<_> = rows.iter().filter(|r| r.fixed_component != 0.0).collect();
    let below = evaluated.iter().filter(|r| r.rel_err < 0.02).count();
    let share = below as f64 / evaluated.len().max(1) as f64;
    let mut failing: Vec<String> = evaluated
        .iter()
        .filter(|r| r.rel_err >= 0.02)
        .map(|r| format!("(day {} node {} mean {:.2e} std {:.2e})", r.base_day, r.node, r.mean, r.std))
        .collect();
    failing.truncate(6);
    report(
        "error_study_reproduction",
        !evaluated.is_empty() && share >= 0.9,
        format!(
            "{below}/{} rows with nonzero mean below 2% ({:.1}%); {} contracts; worst: {}",
            evaluated.len(),
            100.0 * share,
            sim.contracts.len(),
            failing.join(" ")
        ),
    );
}

fn run_pipeline(root: &Path) {
    let sim = root.join("simulation");
    let ds = root.join("dataset");
    let bench = root.join("benchmark");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let steps: [Vec<String>; 3] = [
        vec!["simulate", "--seed", "11", "--nodes", "5", "--hubs", "2", "--years", "3", "--gamma", "20", "--bond-paths", "64", "--out"]
            .into_iter()
            .map(String::from)
            .chain([s(&sim)])
            .collect(),
        vec!["export".into(), "--sim".into(), s(&sim), "--out".into(), s(&ds), "--steps-ahead".into(), "4".into()],
        vec![
            "benchmark".into(), "--dataset".into(), s(&ds), "--out".into(), s(&bench), "--n-sims".into(), "50".into(),
            "--repeats".into(), "3".into(), "--max-windows".into(), "20".into(), "--stride".into(), "7".into(),
        ],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_vmnet")).args(&args).env_remove("VMNET_OUTPUT_ROOT").output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["simulation", "dataset", "benchmark"] {
        let mut entries: Vec<_> = std::fs::read_dir(root.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            let name = format!("{sub}/{}", p.file_name().unwrap().to_string_lossy());
            out.push((name, std::fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&a);
    run_pipeline(&b);
    let (fa, fb) = (files(&a), files(&b));
    let differing: Vec<_> = fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| x.0.clone()).collect();
    let pass = fa.len() == fb.len() && differing.is_empty() && fa.iter().any(|(n, _)| n == "benchmark/error_study.csv");
    report(
        "determinism",
        pass,
        format!("{} artifacts compared, differing: {differing:?}", fa.len()),
    );
}
