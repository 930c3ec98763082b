//! Acceptance checks. Each test prints one `criterion N: PASS|FAIL` line
//! (run with `--nocapture` to see them) and fails when the check fails.
//! The real-data selection check takes about an hour per repetition on one
//! core and is ignored by default.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use mixcopula::eval::presets::example1;
use mixcopula::eval::study::{median_of, run_simulation_study, Study, DEFAULT_KL_DRAWS};
use mixcopula::eval::oracle_logpdf_quadrature;
use mixcopula::gauss::{inverse_wishart_sample, normalize_to_correlation, BoxAccuracy};
use mixcopula::margins::MarginPrior;
use mixcopula::model::{component_logpdf, generate};
use mixcopula::rng::stream;
use mixcopula::sampler::{margin_log_acceptance, sample_proportions, Chain};
use mixcopula::selection::{bic, icl, param_count};
use mixcopula::viz::{component_pca, correlation_circle, project};
use mixcopula::{
    fit, load_dataset, ChainConfig, ComponentParams, CorrelationMatrix, Family, MarginParams, MixedDataset, MixtureParams,
    Schema, VariableKind,
};

/// Written to the stdout handle directly so the line shows without
/// `--nocapture`.
fn report(n: u32, ok: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
}

fn random_correlation<R: Rng>(e: usize, rng: &mut R) -> CorrelationMatrix {
    let a = DMatrix::<f64>::from_fn(e, e, |_, _| rng.sample(StandardNormal));
    let s = &a * a.transpose() + DMatrix::<f64>::identity(e, e) * 0.3;
    normalize_to_correlation(&s).unwrap()
}

fn random_margin<R: Rng>(kind: VariableKind, rng: &mut R) -> MarginParams {
    match kind {
        VariableKind::Continuous => MarginParams::Gaussian {
            mu: rng.random_range(-3.0..3.0),
            sigma: rng.random_range(0.3..3.0),
        },
        VariableKind::Integer => MarginParams::Poisson {
            lambda: rng.random_range(0.3..25.0),
        },
        VariableKind::Ordinal { levels } => {
            let w: Vec<f64> = (0..levels).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            MarginParams::Ordinal {
                probs: w.iter().map(|v| v / s).collect(),
            }
        }
    }
}

fn random_discrete_kind<R: Rng>(rng: &mut R) -> VariableKind {
    if rng.random_bool(0.5) {
        VariableKind::Integer
    } else {
        VariableKind::Ordinal {
            levels: rng.random_range(2..6),
        }
    }
}

/// `c` continuous kinds then `d` discrete ones, with an integer column
/// whenever there is no continuous one.
fn random_kinds<R: Rng>(c: usize, d: usize, rng: &mut R) -> Vec<VariableKind> {
    (0..c + d)
        .map(|j| match j {
            j if j < c => VariableKind::Continuous,
            0 => VariableKind::Integer,
            _ => random_discrete_kind(rng),
        })
        .collect()
}

/// Schema with `c` continuous then `d` discrete columns, and one draw of a
/// matching component.
fn random_instance<R: Rng>(c: usize, d: usize, identity: bool, rng: &mut R) -> (Schema, ComponentParams, Vec<f64>) {
    let names: Vec<String> = (0..c + d).map(|j| format!("v{j}")).collect();
    let kinds = random_kinds(c, d, rng);
    let pairs: Vec<(&str, VariableKind)> = names.iter().map(String::as_str).zip(kinds.iter().copied()).collect();
    let schema = Schema::from_kinds(&pairs).unwrap();
    let corr = if identity {
        CorrelationMatrix::identity(c + d)
    } else {
        random_correlation(c + d, rng)
    };
    let alpha = ComponentParams::new(corr, kinds.iter().map(|&k| random_margin(k, rng)).collect());
    let theta = MixtureParams::new(Family::Heteroscedastic, vec![1.0], vec![alpha.clone()]).unwrap();
    let x = generate(1, &theta, &schema, rng).unwrap().data.row(0).to_vec();
    (schema, alpha, x)
}

#[test]
fn criterion_1_independence_factorization() {
    let t = Instant::now();
    let mut rng = stream(101, &[]);
    let acc = BoxAccuracy::default();
    let mut worst = 0.0f64;
    let mut families = [0usize; 3];
    for _ in 0..500 {
        let e = rng.random_range(1..7);
        let c = rng.random_range(0..=e);
        let (_, alpha, x) = random_instance(c, e - c, true, &mut rng);
        let got = component_logpdf(&x, &alpha, &acc).unwrap().value;
        let want: f64 = alpha.margins.iter().zip(&x).map(|(m, v)| m.logpdf(*v).unwrap()).sum();
        for m in &alpha.margins {
            families[match m {
                MarginParams::Gaussian { .. } => 0,
                MarginParams::Poisson { .. } => 1,
                MarginParams::Ordinal { .. } => 2,
            }] += 1;
        }
        worst = worst.max((got - want).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = worst <= 1e-10 && families.iter().all(|&f| f > 0) && secs < 10.0;
    report(1, ok, &format!("max |diff| {worst:.2e} over 500 instances, margins per family {families:?}, {secs:.2} s"));
    assert!(ok);
}

#[test]
fn criterion_2_oracle_equivalence() {
    let t = Instant::now();
    let mut rng = stream(102, &[]);
    let acc = BoxAccuracy::default();
    let mut worst = 0.0f64;
    let mut failures = 0;
    let (_, ex1) = example1();
    let mut cases: Vec<(ComponentParams, Vec<f64>)> = ex1
        .components
        .iter()
        .flat_map(|a| [(a.clone(), vec![-2.0, 5.0, 1.0]), (a.clone(), vec![2.0, 15.0, 2.0])])
        .collect();
    while cases.len() < 200 {
        let c = rng.random_range(0..=2);
        let d = rng.random_range(if c == 0 { 1 } else { 0 }..=2);
        let (_, alpha, x) = random_instance(c, d, false, &mut rng);
        cases.push((alpha, x));
    }
    for (alpha, x) in &cases {
        let got = component_logpdf(x, alpha, &acc).unwrap();
        let want = oracle_logpdf_quadrature(x, alpha).unwrap();
        let diff = (got.value - want).abs();
        if diff > 1e-6f64.max(3.0 * got.std_error) {
            failures += 1;
        }
        worst = worst.max(diff);
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = failures == 0 && secs < 120.0;
    report(2, ok, &format!("{failures} of {} outside tolerance, max |Δ log p| {worst:.2e}, {secs:.1} s", cases.len()));
    assert!(ok);
}

/// Mean and standard error of a sample.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn criterion_3_conjugate_updates() {
    const DRAWS: usize = 100_000;
    let t = Instant::now();
    let mut rng = stream(103, &[]);
    let mut lines = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, draws: &[f64], want: f64| {
        let (m, se) = mean_se(draws);
        let good = (m - want).abs() <= 3.0 * se;
        ok &= good;
        lines.push(format!("{name} {m:.5}/{want:.5}"));
    };

    // Dirichlet with 3 and 1 assignments: parameters (3.5, 1.5).
    let z = [0usize, 0, 0, 1];
    let d: Vec<f64> = (0..DRAWS).map(|_| sample_proportions(&z, 2, &mut rng)[0]).collect();
    check("dirichlet", &d, 3.5 / 5.0);

    // Gamma(1, 0.5) prior and counts summing to 12 over 4 rows: Gamma(13, 4.5).
    let prior = MarginPrior::Poisson { a0: 1.0, aa0: 0.5 };
    let values = [2.0, 5.0, 1.0, 4.0];
    let g: Vec<f64> = (0..DRAWS)
        .map(|_| match prior.sample_posterior(&values, &mut rng) {
            MarginParams::Poisson { lambda } => lambda,
            _ => unreachable!(),
        })
        .collect();
    check("gamma", &g, 13.0 / 4.5);

    // Inverse-Wishart: E[Λ] = S / (df − p − 1).
    let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, -0.3, 0.5, 1.5, 0.2, -0.3, 0.2, 1.0]);
    let df = 9.0;
    let draws: Vec<DMatrix<f64>> = (0..DRAWS).map(|_| inverse_wishart_sample(df, &s, &mut rng).unwrap()).collect();
    for (i, j) in [(0, 0), (0, 1), (1, 2), (2, 2)] {
        let v: Vec<f64> = draws.iter().map(|m| m[(i, j)]).collect();
        check(&format!("iw[{i}{j}]"), &v, s[(i, j)] / (df - 3.0 - 1.0));
    }

    // Under Γ = I the margin acceptance ratio is identically one.
    let mut max_log_ratio = 0.0f64;
    let post = MarginPrior::Poisson { a0: 1.0, aa0: 0.2 };
    let obs = [3.0, 7.0, 0.0, 5.0, 4.0];
    let old = MarginParams::Poisson { lambda: 4.0 };
    let cond = vec![0.0; obs.len()];
    let mut accepted = 0usize;
    for _ in 0..DRAWS {
        let cand = post.sample_posterior(&obs, &mut rng);
        let lr = margin_log_acceptance(&old, &cand, &obs, &cond, 1.0, 10.0).unwrap();
        max_log_ratio = max_log_ratio.max(lr.abs());
        if lr >= 0.0 || rng.random::<f64>().ln() < lr {
            accepted += 1;
        }
    }
    let rho_ok = max_log_ratio < 1e-12 && accepted == DRAWS;
    ok &= rho_ok;
    lines.push(format!("rho2 max |log ratio| {max_log_ratio:.1e}, accepted {accepted}/{DRAWS}"));

    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    report(3, ok, &format!("{}; {secs:.1} s", lines.join(", ")));
    assert!(ok);
}

#[test]
fn criterion_4_simulation_study() {
    let sizes = [100, 400, 1600];
    let mut cfg = ChainConfig::new(2, Family::Heteroscedastic);
    cfg.iterations = 1000;
    cfg.burn_in = 100;
    cfg.n_chains = 1;
    let t = Instant::now();
    let recs = run_simulation_study(Study::Example1, &sizes, 20, &cfg, 104, DEFAULT_KL_DRAWS).unwrap();
    let med = |n, m| median_of(&recs, n, m).unwrap_or(f64::NAN);
    // Error of the fitted MAP rule on an independent sample; the in-sample
    // rate is printed alongside.
    let miss: Vec<f64> = sizes.iter().map(|&n| med(n, "misclassification_test")).collect();
    let in_sample: Vec<f64> = sizes.iter().map(|&n| med(n, "misclassification")).collect();
    let kl: Vec<f64> = sizes.iter().map(|&n| med(n, "kl")).collect();
    let secs: Vec<f64> = sizes.iter().map(|&n| med(n, "fit_secs")).collect();
    let decreasing = miss[0] >= miss[1] && miss[1] >= miss[2] && miss[0] > miss[2];
    let ok = decreasing && miss[2] <= 0.03 && kl[2] <= kl[0] / 3.0 && secs[0] <= 75.0 && secs[2] <= 320.0;
    report(
        4,
        ok,
        &format!(
            "median misclassification {miss:.4?} (in-sample {in_sample:.4?}), median KL {kl:.4?}, median fit seconds {secs:.1?}, total {:.0} s",
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_5_robustness_study() {
    let mut cfg = ChainConfig::new(2, Family::Heteroscedastic);
    cfg.iterations = 1000;
    cfg.burn_in = 100;
    cfg.n_chains = 1;
    let t = Instant::now();
    let recs = run_simulation_study(Study::Karlis, &[1600], 20, &cfg, 105, DEFAULT_KL_DRAWS).unwrap();
    let med = |m| median_of(&recs, 1600, m).unwrap_or(f64::NAN);
    let (miss, gamma, lambda, secs) = (med("misclassification_test"), med("gamma1_12"), med("margin1"), med("fit_secs"));
    let in_sample = med("misclassification");
    let target = 3.0 / 20f64.sqrt();
    let ok = (miss - 0.0967).abs() <= 0.03 && (gamma - target).abs() <= 0.1 && (lambda - 4.0).abs() <= 0.4 && secs <= 320.0;
    report(
        5,
        ok,
        &format!(
            "median misclassification {miss:.4} (in-sample {in_sample:.4}), Γ₁[1,2] {gamma:.4} (target {target:.4}), λ₁₁ {lambda:.3}, fit {secs:.1} s, total {:.0} s",
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}

fn saheart() -> MixedDataset {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    load_dataset(&dir.join("saheart.csv"), &dir.join("saheart.schema"), None).unwrap()
}

#[test]
fn criterion_6_parameter_counts() {
    let data = saheart();
    let s = data.schema();
    let counts = [
        param_count(s, 3, Family::LocalIndependence),
        param_count(s, 3, Family::Homoscedastic),
        param_count(s, 3, Family::Heteroscedastic),
    ];
    let mut rng = stream(106, &[]);
    let mut ordered = true;
    for _ in 0..1000 {
        let e = rng.random_range(1..10);
        let names: Vec<String> = (0..e).map(|j| format!("v{j}")).collect();
        let kinds: Vec<(&str, VariableKind)> = names
            .iter()
            .enumerate()
            .map(|(j, n)| {
                let k = match rng.random_range(0..3) {
                    0 => VariableKind::Continuous,
                    1 => VariableKind::Integer,
                    _ if j == 0 => VariableKind::Integer,
                    _ => VariableKind::Ordinal {
                        levels: rng.random_range(2..8),
                    },
                };
                (n.as_str(), k)
            })
            .collect();
        let schema = Schema::from_kinds(&kinds).unwrap();
        let g = rng.random_range(1..8);
        let v: Vec<usize> = Family::ALL.iter().map(|&f| param_count(&schema, g, f)).collect();
        ordered &= v[0] <= v[1] && v[1] <= v[2];
    }
    let ok = counts == [47, 83, 155] && ordered;
    report(6, ok, &format!("SA Heart g=3 counts {counts:?}, ordering over 1000 random schemas: {ordered}"));
    assert!(ok);
}

/// One repetition of the real-data protocol: every family and g in 1..=5,
/// 10 chains of 1000 iterations. Returns (best BIC cell, best ICL cell,
/// BIC of homoscedastic g = 3).
fn saheart_protocol(data: &MixedDataset, seed: u64) -> ((Family, usize), (Family, usize), f64) {
    let mut best_bic = (f64::NEG_INFINITY, (Family::LocalIndependence, 0));
    let mut best_icl = best_bic;
    let mut ho3 = f64::NAN;
    for family in Family::ALL {
        for g in 1..=5 {
            let mut cfg = ChainConfig::new(g, family);
            cfg.iterations = 1000;
            cfg.burn_in = 100;
            cfg.n_chains = 10;
            cfg.seed = seed;
            let t = Instant::now();
            let Ok(r) = fit(data, &cfg) else {
                println!("  {family} g={g}: failed");
                continue;
            };
            let b = bic(r.loglik, param_count(data.schema(), g, family), data.n());
            let i = icl(b, &r.posterior);
            println!("  {family} g={g}: BIC {b:.2}, ICL {i:.2} ({:.0} s)", t.elapsed().as_secs_f64());
            if b > best_bic.0 {
                best_bic = (b, (family, g));
            }
            if i > best_icl.0 {
                best_icl = (i, (family, g));
            }
            if family == Family::Homoscedastic && g == 3 {
                ho3 = b;
            }
        }
    }
    (best_bic.1, best_icl.1, ho3)
}

#[test]
fn criterion_7_requires_ignored_run() {
    if std::env::var_os("SAHEART_REPETITIONS").is_none() {
        report(7, false, "not run by default: about an hour per repetition; pass --ignored to run the protocol");
    }
}

#[test]
#[ignore = "about an hour per repetition on one core; set SAHEART_REPETITIONS for more than one"]
fn criterion_7_real_data_selection() {
    let data = saheart();
    let reps: u64 = std::env::var("SAHEART_REPETITIONS").ok().and_then(|v| v.parse().ok()).unwrap_or(1);
    let reference = -12739.94;
    let mut hits = 0;
    let mut within = 0;
    for rep in 0..reps {
        let (b, i, ho3) = saheart_protocol(&data, 1000 + rep);
        let selected = b == (Family::Homoscedastic, 3) && i == (Family::Homoscedastic, 3);
        let close = ((ho3 - reference) / reference).abs() <= 0.015;
        println!("  repetition {rep}: BIC picks {:?}, ICL picks {:?}, homo g=3 BIC {ho3:.2}", b, i);
        hits += selected as u64;
        within += close as u64;
    }
    let needed = (7 * reps).div_ceil(10);
    let ok = hits >= needed && within == reps;
    report(7, ok, &format!("selection held in {hits}/{reps} repetitions, BIC within 1.5% in {within}/{reps}"));
    assert!(ok);
}

#[test]
fn criterion_8_sampler_invariants() {
    let t = Instant::now();
    let mut rng = stream(108, &[]);
    let mut sweeps = 0usize;
    let mut violations = 0usize;
    let mut reproducible = true;
    for case in 0..60u64 {
        let c = rng.random_range(0..3);
        let d = rng.random_range(if c == 0 { 1 } else { 0 }..4);
        let g = rng.random_range(1..4);
        let family = Family::ALL[case as usize % 3];
        let n = rng.random_range(30..80);
        let names: Vec<String> = (0..c + d).map(|j| format!("v{j}")).collect();
        let kinds = random_kinds(c, d, &mut rng);
        let pairs: Vec<(&str, VariableKind)> = names.iter().map(String::as_str).zip(kinds.iter().copied()).collect();
        let schema = Schema::from_kinds(&pairs).unwrap();
        let comps: Vec<ComponentParams> = (0..g)
            .map(|_| ComponentParams::new(random_correlation(c + d, &mut rng), kinds.iter().map(|&k| random_margin(k, &mut rng)).collect()))
            .collect();
        let truth = MixtureParams::new(Family::Heteroscedastic, vec![1.0 / g as f64; g], comps).unwrap();
        let Ok(gen) = generate(n, &truth, &schema, &mut rng) else { continue };
        // Degenerate draws (a constant column) are not valid sampler input.
        if (0..c).any(|j| {
            let col = gen.data.column(j);
            col.iter().all(|v| *v == col[0])
        }) || (0..c + d).any(|j| kinds[j] == VariableKind::Integer && gen.data.column(j).iter().all(|v| *v == 0.0))
        {
            continue;
        }
        let mut cfg = ChainConfig::new(g, family);
        cfg.seed = case;
        cfg.em_restarts = 2;
        cfg.mh_latent_threshold = if case % 4 == 0 { 0 } else { 6 };
        let run = |cfg: &ChainConfig| -> Option<(MixtureParams, Vec<Vec<f64>>, usize, usize)> {
            let mut chain = Chain::new(&gen.data, cfg, 0).ok()?;
            let (mut bad, mut count) = (0, 0);
            for _ in 0..20 {
                chain.iterate().unwrap();
                count += 1;
                let th = chain.theta();
                let simplex = th.pi.iter().all(|p| *p > 0.0) && (th.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12;
                let spd = th.components.iter().all(|a| {
                    let m = a.correlation.matrix();
                    (0..m.nrows()).all(|i| m[(i, i)] == 1.0) && nalgebra::Cholesky::new(m.clone()).is_some()
                });
                let shared = th.family != Family::Homoscedastic
                    || th.components.windows(2).all(|w| w[0].correlation == w[1].correlation);
                let local = th.family != Family::LocalIndependence || th.components.iter().all(|a| a.correlation.is_identity());
                let rows = chain.invariant_violations().unwrap().len();
                if !(simplex && spd && shared && local) || rows > 0 {
                    bad += 1;
                }
            }
            Some((chain.theta().clone(), chain.latent().to_vec(), bad, count))
        };
        let Some((theta_a, latent_a, bad, count)) = run(&cfg) else { continue };
        let (theta_b, latent_b, _, _) = run(&cfg).unwrap();
        reproducible &= theta_a == theta_b && latent_a == latent_b;
        violations += bad;
        sweeps += count;
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = violations == 0 && reproducible && sweeps >= 500 && secs < 120.0;
    report(8, ok, &format!("{violations} sweeps with violations out of {sweeps}, reproducible: {reproducible}, {secs:.1} s"));
    assert!(ok);
}

#[test]
fn criterion_9_visualization() {
    let t = Instant::now();
    let mut rng = stream(109, &[]);
    let mut recon = 0.0f64;
    let mut max_norm = 0.0f64;
    for _ in 0..200 {
        let e = rng.random_range(2..8);
        let gm = random_correlation(e, &mut rng);
        let p = component_pca(&gm).unwrap();
        let v = DMatrix::from_fn(e, e, |i, j| p.eigenvectors[i][j]);
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(p.eigenvalues.clone()));
        recon = recon.max((&v * l * v.transpose() - gm.matrix()).amax());
        let names: Vec<String> = (0..e).map(|j| format!("v{j}")).collect();
        for a in 0..e - 1 {
            for load in correlation_circle(&p, (a, a + 1), &names).unwrap() {
                max_norm = max_norm.max((load.load_a.powi(2) + load.load_b.powi(2)).sqrt());
            }
        }
    }

    let (schema, theta) = example1();
    let k = 1;
    let own = MixtureParams::new(Family::Heteroscedastic, vec![1.0], vec![theta.components[k].clone()]).unwrap();
    let gen = generate(10_000, &own, &schema, &mut rng).unwrap();
    let (_, rows) = project(&gen.data, &theta, k, (0, 1), 200, 109).unwrap();
    let n = rows.len() as f64;
    let ma = rows.iter().map(|r| r.score_a).sum::<f64>() / n;
    let mb = rows.iter().map(|r| r.score_b).sum::<f64>() / n;
    let centre = (ma * ma + mb * mb).sqrt();

    let secs = t.elapsed().as_secs_f64();
    let ok = recon <= 1e-10 && max_norm <= 1.0 + 1e-12 && centre < 0.1 && secs < 60.0;
    report(
        9,
        ok,
        &format!("reconstruction {recon:.1e}, max loading norm {max_norm:.6}, self-projection centre norm {centre:.4}, {secs:.1} s"),
    );
    assert!(ok);
}
