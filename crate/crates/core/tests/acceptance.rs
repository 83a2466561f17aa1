//! Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.

use mkv_core::bsde::{default_schedule, dpp_check, dual_check, minimal_solution, DppInner, JumpHistoryTree};
use mkv_core::control_opt::{
    enumerate_step_controls, fitted_constant, joint_mkv_value, stability_probe, value_direct, value_mkv,
    ControlCatalog, Perturbation,
};
use mkv_core::forward_sim::flow_check;
use mkv_core::lattice::DEFAULT_STATE_CAP;
use mkv_core::measures::transport_lp;
use mkv_core::problem::{lookup, registry};
use mkv_core::randomized::{
    girsanov_weight, sample_poisson_path, value_randomized, ConstantIntensity, InitialControl, IntensityPolicy,
    IntensityTable, Jump, MarkIntensity, NuEntry, NuTable, RandomizedConfig,
};
use mkv_core::stats::{combined_ci, mean_var, SeedSummary};
use mkv_core::{
    wasserstein2, BenchmarkProblem, EmpiricalMeasure, Result, SimConfig, StepControl, TimeGrid, XiSampler,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

const SEEDS: u64 = 8;
const TOY_X: [f64; 1] = [0.2];
const TOY_RATE: f64 = 2.0;

fn toy_xi() -> XiSampler {
    XiSampler::Gaussian {
        mean: vec![0.0],
        std_dev: 0.5,
    }
}

fn toy_cfg(seed: u64, steps: usize) -> SimConfig {
    SimConfig {
        n_steps: steps,
        n_xi: 2000,
        n_x: 2000,
        seed: 1000 + seed,
    }
}

fn toy_rcfg(initial: InitialControl) -> RandomizedConfig {
    RandomizedConfig {
        k_max: 3,
        lo: 0.1,
        hi: 50.0,
        initial,
        state_cap: DEFAULT_STATE_CAP,
    }
}

fn toy() -> (BenchmarkProblem, ControlCatalog, MarkIntensity) {
    let p = lookup("two-action-toy").unwrap();
    let cat = enumerate_step_controls(2, p.horizon, 2, 1, 100).unwrap();
    let lam = MarkIntensity::uniform(cat.len(), TOY_RATE).unwrap();
    (p, cat, lam)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn equivalence() -> Result<Outcome> {
    let (p, cat, lam) = toy();
    let mut d = Vec::new();
    let mut r = Vec::new();
    for s in 0..SEEDS {
        let cfg = toy_cfg(s, 20);
        d.push(value_direct(&p, 0.0, &TOY_X, &toy_xi(), &cat, &cfg)?.value);
        r.push(value_randomized(&p, 0.0, &TOY_X, &toy_xi(), &lam, &cat, &toy_rcfg(InitialControl::Catalog(0)), &cfg)?.value);
    }
    let (d, r) = (SeedSummary::new(d), SeedSummary::new(r));
    let diff = (d.mean - r.mean).abs();
    let tol = (0.02 * d.mean.abs()).max(2.0 * combined_ci(d.ci, r.ci));
    Ok(Outcome {
        pass: diff <= tol,
        detail: format!("V_direct={:.5}±{:.5} V_rand={:.5}±{:.5} |Δ|={diff:.2e} tol={tol:.2e}", d.mean, d.ci, r.mean, r.ci),
    })
}

fn feynman_kac() -> Result<Outcome> {
    let (p, cat, lam) = toy();
    let mut d = Vec::new();
    let mut y = Vec::new();
    let mut monotone = true;
    let mut worst_u: f64 = 0.0;
    for s in 0..SEEDS {
        let cfg = toy_cfg(s, 20);
        d.push(value_direct(&p, 0.0, &TOY_X, &toy_xi(), &cat, &cfg)?.value);
        let tree = JumpHistoryTree::build(&p, 0.0, &TOY_X, &toy_xi(), &lam, &cat, &toy_rcfg(InitialControl::Catalog(0)), &cfg)?;
        match minimal_solution(&tree, &default_schedule(), 0.0) {
            Ok(m) => {
                let last = m.trace.last().expect("schedule ran");
                worst_u = worst_u.max(last.max_u_plus);
                monotone &= m.trace.windows(2).all(|w| w[1].root >= w[0].root - 1e-9);
                y.push(m.value);
            }
            Err(mkv_core::Error::SchemeInconsistency(_)) => {
                monotone = false;
                y.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    let (d, y) = (SeedSummary::new(d), SeedSummary::new(y));
    let diff = (d.mean - y.mean).abs();
    let tol = (0.02 * d.mean.abs()).max(2.0 * combined_ci(d.ci, y.ci));
    let u_tol = 10.0 / 256.0;
    Ok(Outcome {
        pass: diff <= tol && monotone && worst_u <= u_tol,
        detail: format!(
            "Y={:.5}±{:.5} V_direct={:.5} |Δ|={diff:.2e} tol={tol:.2e} monotone={monotone} max(U)+={worst_u:.2e} (≤{u_tol:.2e})",
            y.mean, y.ci, d.mean
        ),
    })
}

fn dual_formula() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for p in registry() {
        let dim = p.state_dim();
        let cat = enumerate_step_controls(p.actions.len(), p.horizon, 2, 1, 100)?;
        let lam = MarkIntensity::uniform(cat.len(), 1.0)?;
        let cfg = SimConfig {
            n_steps: 10,
            n_xi: 64,
            n_x: 64,
            seed: 3,
        };
        let xi = XiSampler::Gaussian {
            mean: vec![0.0; dim],
            std_dev: 0.3,
        };
        let rcfg = RandomizedConfig {
            k_max: 2,
            ..toy_rcfg(InitialControl::Catalog(0))
        };
        let tree = JumpHistoryTree::build(&p, 0.0, &vec![0.1; dim], &xi, &lam, &cat, &rcfg, &cfg)?;
        for n in default_schedule() {
            let r = dual_check(n, &tree)?;
            if r.rel > worst {
                worst = r.rel;
                worst_at = format!("{} n={n}", p.name);
            }
        }
    }
    Ok(Outcome {
        pass: worst <= 1e-6,
        detail: format!("max relative discrepancy {worst:.2e} ({worst_at}) over 5 problems × 9 levels"),
    })
}

fn dpp() -> Result<Outcome> {
    let (p, cat, lam) = toy();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut nodes = 0;
    for s in 0..SEEDS {
        let cfg = toy_cfg(s, 20);
        let r = dpp_check(
            &p,
            0.0,
            0.5 * p.horizon,
            &TOY_X,
            &toy_xi(),
            &lam,
            &cat,
            &toy_rcfg(InitialControl::Catalog(0)),
            DppInner::default(),
            &cfg,
        )?;
        lhs.push(r.lhs);
        rhs.push(r.rhs);
        nodes = r.boundary_nodes;
    }
    let (l, r) = (SeedSummary::new(lhs), SeedSummary::new(rhs));
    let res = (l.mean - r.mean).abs();
    let tol = (0.03 * l.mean.abs()).max(2.0 * combined_ci(l.ci, r.ci));
    Ok(Outcome {
        pass: res <= tol,
        detail: format!(
            "V={:.5}±{:.5} RHS={:.5}±{:.5} residual={res:.2e} tol={tol:.2e} ({nodes} nodes at s=T/2)",
            l.mean, l.ci, r.mean, r.ci
        ),
    })
}

fn lq_oracle() -> Result<Outcome> {
    let p = lookup("systemic-risk-lq")?;
    let x = [0.6];
    let xi = XiSampler::Gaussian {
        mean: vec![0.0],
        std_dev: 0.2,
    };
    let law = EmpiricalMeasure::dirac(&[0.0])?;
    let oracle = p.analytic_value(0.0, &x, &law).expect("LQ oracle")?;
    let cfg = SimConfig {
        n_steps: 20,
        n_xi: 10_000,
        n_x: 10_000,
        seed: 7,
    };
    let mut gaps = Vec::new();
    let mut parts = Vec::new();
    for (k, l) in [(1, 1), (2, 1), (4, 2)] {
        let cat = enumerate_step_controls(p.actions.len(), p.horizon, k, l, 8192)?;
        let v = value_direct(&p, 0.0, &x, &xi, &cat, &cfg)?.value;
        let gap = (v - oracle).abs() / oracle.abs();
        parts.push(format!("(k={k},L={l}) {v:.5} gap {:.2}%", 100.0 * gap));
        gaps.push(gap);
    }
    let shrinking = gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(Outcome {
        pass: *gaps.last().unwrap() <= 0.05 && shrinking,
        detail: format!("oracle {oracle:.5}; {}; shrinking={shrinking}", parts.join(", ")),
    })
}

fn flow() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for p in registry() {
        let dim = p.state_dim();
        let last = p.actions.len() - 1;
        let ctrl = StepControl::piecewise(p.horizon, &[0, last, 0, last])?;
        let cfg = SimConfig {
            n_steps: 20,
            n_xi: 64,
            n_x: 64,
            seed: 11,
        };
        let xi = XiSampler::Gaussian {
            mean: vec![0.0; dim],
            std_dev: 0.4,
        };
        for frac in [0.25, 0.5, 0.75] {
            let r = flow_check(&p, 0.0, frac * p.horizon, &vec![0.3; dim], &xi, &ctrl, &cfg)?;
            worst = worst.max(r.max());
        }
    }
    Ok(Outcome {
        pass: worst <= 1e-10,
        detail: format!("max discrepancy {worst:.2e} over 5 problems × 3 restart times"),
    })
}

fn disintegration() -> Result<Outcome> {
    let (p, cat, _) = toy();
    let law = EmpiricalMeasure::new(vec![vec![-0.5], vec![0.5]], vec![0.3, 0.7])?;
    let xi = XiSampler::empirical(law);
    let mut joint = Vec::new();
    let mut atoms = Vec::new();
    let mut argmax = Vec::new();
    for s in 0..SEEDS {
        let cfg = toy_cfg(s, 20);
        let j = joint_mkv_value(&p, 0.0, &xi, &cat, &cfg, None)?;
        argmax = j.argmax.clone();
        joint.push(j.value);
        atoms.push(value_mkv(&p, 0.0, &xi, &cat, &cfg)?.value);
    }
    let (j, a) = (SeedSummary::new(joint), SeedSummary::new(atoms));
    let diff = (j.mean - a.mean).abs();
    let tol = combined_ci(j.ci, a.ci);
    Ok(Outcome {
        pass: diff <= tol,
        detail: format!(
            "joint={:.5}±{:.5} Σp_k V_k={:.5}±{:.5} |Δ|={diff:.2e} tol={tol:.2e} joint argmax {argmax:?}",
            j.mean, j.ci, a.mean, a.ci
        ),
    })
}

struct Alternating;

impl IntensityPolicy for Alternating {
    fn bounds(&self) -> (f64, f64) {
        (0.5, 2.0)
    }

    fn intensity(&self, history: &[Jump], interval: usize, mark: usize) -> f64 {
        if (interval + mark + history.len()).is_multiple_of(2) {
            2.0
        } else {
            0.5
        }
    }
}

fn girsanov() -> Result<Outcome> {
    let grid = TimeGrid::new(0.0, 1.0, 20)?;
    let table = IntensityTable::new(
        &NuTable {
            lo: 0.2,
            hi: 5.0,
            entries: (0..20)
                .flat_map(|i| {
                    [
                        NuEntry {
                            history: String::new(),
                            interval: i,
                            mark: 0,
                            nu: if i < 10 { 5.0 } else { 0.2 },
                        },
                        NuEntry {
                            history: "0".into(),
                            interval: i,
                            mark: 0,
                            nu: 3.0,
                        },
                    ]
                })
                .collect(),
        },
        1.0,
    )?;
    let settings: Vec<(&str, MarkIntensity, Box<dyn IntensityPolicy>)> = vec![
        ("alternating ν∈[0.5,2], λ uniform 4×2", MarkIntensity::uniform(4, 2.0)?, Box::new(Alternating)),
        (
            "ν≡0.3, λ=(1,0.5,1.5)",
            MarkIntensity::new(vec![0, 1, 2], vec![1.0, 0.5, 1.5])?,
            Box::new(ConstantIntensity::new(0.3, 0.1, 1.0)?),
        ),
        ("tabulated ν∈[0.2,5], single mark rate 3", MarkIntensity::new(vec![0], vec![3.0])?, Box::new(table)),
    ];
    let n = 100_000;
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (name, lam, nu)) in settings.iter().enumerate() {
        let w: Vec<f64> = (0..n)
            .map(|i| {
                let path = sample_poisson_path(lam, 0.0, 1.0, 200, 0, (k as u64) << 32 | i);
                girsanov_weight(&path, nu.as_ref(), lam, &grid, 1.0)
            })
            .collect::<Result<_>>()?;
        let (m, v) = mean_var(&w);
        let se = (v / n as f64).sqrt();
        let z = (m - 1.0).abs() / se;
        pass &= z <= 3.0 && w.iter().all(|x| *x > 0.0);
        parts.push(format!("{name}: mean {m:.4} ({z:.2} s.e.)"));
    }
    let lam = MarkIntensity::uniform(4, 2.0)?;
    let unit_exact = (0..1000).all(|i| {
        let path = sample_poisson_path(&lam, 0.0, 1.0, 200, 0, i);
        girsanov_weight(&path, &ConstantIntensity::unit(), &lam, &grid, 1.0) == Ok(1.0)
    });
    pass &= unit_exact;
    Ok(Outcome {
        pass,
        detail: format!("{}; ν≡1 exact={unit_exact}", parts.join("; ")),
    })
}

fn independence() -> Result<Outcome> {
    let (p, cat, lam) = toy();
    let lam_b = MarkIntensity::new(vec![0, 1, 2, 3], vec![1.0, 2.0, 3.0, 2.0])?;
    let run = |t: f64, lam: &MarkIntensity, init: InitialControl| -> Result<SeedSummary> {
        let steps = ((p.horizon - t) / (p.horizon / 20.0)).round() as usize;
        let v = (0..SEEDS)
            .map(|s| value_randomized(&p, t, &TOY_X, &toy_xi(), lam, &cat, &toy_rcfg(init), &toy_cfg(s, steps)).map(|v| v.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(SeedSummary::new(v))
    };
    let t_shift = 0.25 * p.horizon;
    let pairs = [
        ("a₀ (t=T/4, a₀=−1 vs +1)", run(t_shift, &lam, InitialControl::Action(0))?, run(t_shift, &lam, InitialControl::Action(1))?),
        ("λ (uniform vs (1,2,3,2))", run(0.0, &lam, InitialControl::Catalog(0))?, run(0.0, &lam_b, InitialControl::Catalog(0))?),
        ("ᾱ (entry 0 vs 3)", run(0.0, &lam, InitialControl::Catalog(0))?, run(0.0, &lam, InitialControl::Catalog(3))?),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, a, b) in pairs.iter() {
        let d = (a.mean - b.mean).abs();
        let tol = 2.0 * combined_ci(a.ci, b.ci);
        pass &= d <= tol;
        parts.push(format!("{name}: {:.5} vs {:.5}, |Δ|={d:.2e} tol={tol:.2e}", a.mean, b.mean));
    }
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
    })
}

fn stability() -> Result<Outcome> {
    let p = lookup("drift-only")?;
    let alpha = StepControl::piecewise(p.horizon, &[1, 1])?;
    let sched = Perturbation {
        interval: 1,
        levels: vec![1, 2, 3, 4],
    };
    let cfg = SimConfig {
        n_steps: 32,
        n_xi: 16,
        n_x: 16,
        seed: 5,
    };
    let rows = stability_probe(&p, 0.0, &[0.0], &XiSampler::dirac(&[0.0]), &alpha, &sched, &cfg)?;
    let c = fitted_constant(&rows);
    let bounded = rows.iter().all(|r| r.delta_j <= c * r.rho_tilde + 1e-12);
    let shrinking = rows.windows(2).all(|w| w[1].delta_j < w[0].delta_j);
    let table: Vec<String> = rows.iter().map(|r| format!("ρ̃={:.4} |ΔJ|={:.4}", r.rho_tilde, r.delta_j)).collect();
    Ok(Outcome {
        pass: c.is_finite() && c > 0.0 && bounded && shrinking,
        detail: format!("C={c:.3}; {}", table.join(", ")),
    })
}

fn random_measure(rng: &mut ChaCha8Rng, dim: usize, n: usize, uniform: bool) -> EmpiricalMeasure {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let w: Vec<f64> = if uniform {
        vec![1.0 / n as f64; n]
    } else {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    };
    EmpiricalMeasure::new(pts, w).expect("valid measure")
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn north_west_cost(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        total += m * cost[i * b.len() + j];
        ra -= m;
        rb -= m;
        if ra <= rb {
            i += 1;
            ra = a.get(i).copied().unwrap_or(0.0);
        } else {
            j += 1;
            rb = b.get(j).copied().unwrap_or(0.0);
        }
    }
    total
}

fn w2_suite() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = 1000;
    let mut failures = Vec::new();
    let tol = 1e-9;
    for case in 0..cases {
        let dim = rng.random_range(1..=3);
        let uniform = case % 2 == 0;
        let n = rng.random_range(1..=6);
        let m = if uniform { n } else { rng.random_range(1..=6) };
        let mu = random_measure(&mut rng, dim, n, uniform);
        let nu = random_measure(&mut rng, dim, m, uniform);
        let k = rng.random_range(1..=6);
        let rho = random_measure(&mut rng, dim, k, false);
        let w = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| wasserstein2(a, b);
        let (mn, nm, mr, nr, mm) = (w(&mu, &nu)?, w(&nu, &mu)?, w(&mu, &rho)?, w(&nu, &rho)?, w(&mu, &mu)?);
        if mm > tol {
            failures.push(format!("case {case}: W(μ,μ)={mm:e}"));
        }
        if mn < 0.0 || (mn - nm).abs() > tol {
            failures.push(format!("case {case}: symmetry {mn} vs {nm}"));
        }
        if mr > mn + nr + tol {
            failures.push(format!("case {case}: triangle {mr} > {mn} + {nr}"));
        }
        let cost: Vec<f64> = mu.points().flat_map(|p| nu.points().map(move |q| sq(p, q))).collect();
        if dim == 1 {
            // The quantile coupling must agree with the transportation LP.
            let lp = transport_lp(mu.weights(), nu.weights(), &cost);
            if (lp - mn * mn).abs() > tol {
                failures.push(format!("case {case}: LP {lp} vs quantile W² {}", mn * mn));
            }
        }
        // Any feasible coupling bounds W² from above: use the north-west corner rule.
        let nw = north_west_cost(mu.weights(), nu.weights(), &cost);
        if mn * mn > nw + tol {
            failures.push(format!("case {case}: coupling bound {} > {nw}", mn * mn));
        }
        if uniform {
            // Index coupling bounds W², and the best permutation attains it.
            let paired: f64 = (0..n).map(|i| sq(mu.point(i), nu.point(i))).sum::<f64>() / n as f64;
            if mn * mn > paired + tol {
                failures.push(format!("case {case}: coupling bound {} > {paired}", mn * mn));
            }
            let brute = permutations(n)
                .iter()
                .map(|s| (0..n).map(|i| sq(mu.point(i), nu.point(s[i]))).sum::<f64>() / n as f64)
                .fold(f64::INFINITY, f64::min);
            if (brute - mn * mn).abs() > tol {
                failures.push(format!("case {case}: permutation oracle {brute} vs {}", mn * mn));
            }
        }
    }
    Ok(Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{cases} cases, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    })
}

fn main() {
    let criteria: Vec<(&str, fn() -> Result<Outcome>)> = vec![
        ("equivalence of direct and randomized values", equivalence),
        ("Feynman-Kac limit of penalized BSDEs", feynman_kac),
        ("dual formula for penalized BSDEs", dual_formula),
        ("randomized dynamic programming", dpp),
        ("LQ Riccati oracle", lq_oracle),
        ("flow property", flow),
        ("disintegration", disintegration),
        ("Girsanov martingale", girsanov),
        ("a₀/λ/ᾱ independence", independence),
        ("stability in the Krylov metric", stability),
        ("W₂ metric suite", w2_suite),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| *x == id || name.contains(x.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (status, detail) = match f() {
            Ok(o) => (if o.pass { "PASS" } else { "FAIL" }, o.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {id:>2} [{status}] {name} ({:.1}s): {detail}", start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
