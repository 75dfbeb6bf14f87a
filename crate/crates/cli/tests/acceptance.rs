//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::time::{Duration, Instant};

use bandlet::estimator::{risk_of, Estimator, EstimatorConfig};
use bandlet::geometry::{
    alpert_forward, build_alpert, enumerate_flows, DyadicSquare, FlowAxis, FlowConfig, SubbandId,
};
use bandlet::pyramid::{dwt2, idwt2, FilterPair, Orientation, WaveletPyramid};
use bandlet::selection::{best_geometry, threshold_select, Dictionary, PenalizedCost};
use bandlet::synthlab::{
    concentration_experiment, observe_with, render_scene, risk_curve, RiskOptions, SceneSpec,
};
use bandlet::Image;
use bandlet_cli::{run, BENCH_LAMBDA, BENCH_ORDER};
use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_image(side: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(side, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
}

fn orthonormality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut round, mut parseval, mut gram) = (0.0f64, 0.0f64, 0.0f64);
    for p in 1..=8 {
        let filt = FilterPair::daubechies(p).unwrap();
        for side in [8usize, 32, 64] {
            let img = random_image(side, &mut rng);
            for depth in [1, side.trailing_zeros() as usize] {
                let pyr = dwt2(&img, depth, &filt).unwrap();
                round = round.max(idwt2(&pyr, &filt).unwrap().max_abs_diff(&img));
                parseval = parseval.max((pyr.norm_sq() - img.norm_sq()).abs() / img.norm_sq());
            }
        }
        // Synthesis images of all 64 unit atoms of an 8×8, depth-2 pyramid.
        let atoms: Vec<Image> = (0..64)
            .map(|i| {
                let mut flat = vec![0.0; 64];
                flat[i] = 1.0;
                idwt2(&WaveletPyramid::from_flat(8, 2, &flat).unwrap(), &filt).unwrap()
            })
            .collect();
        for (i, a) in atoms.iter().enumerate() {
            for (j, b) in atoms.iter().enumerate() {
                let dot: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| x * y).sum();
                gram = gram.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    outcome(
        round <= 1e-10 && parseval <= 1e-10 && gram <= 1e-8,
        format!("p=1..8: round trip {round:.2e}, Parseval {parseval:.2e}, Gram {gram:.2e}"),
    )
}

fn alpert() -> Outcome {
    let (mut ortho, mut annihil, mut count) = (0.0f64, 0.0f64, 0usize);
    for p in [2usize, 3] {
        for q in 1..=5 {
            let cfg = FlowConfig {
                max_degree: 1,
                levels: q,
                ..FlowConfig::for_order(p)
            };
            for w in [2usize, 4, 8] {
                for flow in enumerate_flows(w, &cfg).into_iter().flatten() {
                    let basis = build_alpert(w, &flow, p).unwrap();
                    let m = basis.matrix();
                    let n = w * w;
                    for i in 0..n {
                        for j in 0..n {
                            let dot: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                            ortho = ortho.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
                        }
                    }
                    // Polynomials of degree < p in the along-flow coordinate.
                    let mask = basis.detail_mask();
                    for deg in 0..p {
                        let block: Vec<f64> = (0..n)
                            .map(|k| {
                                let (r, c) = (k / w, k % w);
                                let t = if flow.axis == FlowAxis::Vertical {
                                    c
                                } else {
                                    r
                                } as f64;
                                (t / w as f64 - 0.3).powi(deg as i32)
                            })
                            .collect();
                        let coeffs = alpert_forward(&block, &basis).unwrap();
                        for (c, d) in coeffs.iter().zip(&mask) {
                            if *d {
                                annihil = annihil.max(c.abs());
                            }
                        }
                    }
                    count += 1;
                }
            }
        }
    }
    outcome(
        ortho <= 1e-10 && annihil <= 1e-9,
        format!("{count} operators: orthogonality {ortho:.2e}, annihilation {annihil:.2e}"),
    )
}

/// `min_I Σ_{n∉I} c_n² + |I|·T²` over all subsets, with the sum taken in
/// index order as in the cost type.
fn subset_minimum(c: &[f64], t: f64) -> f64 {
    (0u32..1 << c.len())
        .map(|mask| {
            let mut residual = 0.0;
            for (i, v) in c.iter().enumerate() {
                if mask >> i & 1 == 0 {
                    residual += v * v;
                }
            }
            PenalizedCost::new(residual, mask.count_ones() as usize, t).total
        })
        .fold(f64::INFINITY, f64::min)
}

fn thresholding_lemma() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut cases = 0;
    for t in [0.1, 1.0, 10.0] {
        for _ in 0..100 {
            let c: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0 * t..3.0 * t)).collect();
            let (_, cost) = threshold_select(&c, t).unwrap();
            if cost.total != subset_minimum(&c, t) {
                mismatches += 1;
            }
            cases += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{cases} vectors, {mismatches} differ from the exhaustive minimum"),
    )
}

/// Every dyadic partition of `sq` into squares of width ≥ 2.
fn partitions(sq: DyadicSquare) -> Vec<Vec<DyadicSquare>> {
    let mut out = vec![vec![sq]];
    if sq.width >= 4 {
        let kids = sq.children().map(partitions);
        for a in &kids[0] {
            for b in &kids[1] {
                for c in &kids[2] {
                    for d in &kids[3] {
                        out.push([a.clone(), b.clone(), c.clone(), d.clone()].concat());
                    }
                }
            }
        }
    }
    out
}

fn best_basis() -> Outcome {
    let cfg = FlowConfig {
        max_degree: 0,
        levels: 3,
        max_tree_depth: Some(2),
        ..FlowConfig::for_order(2)
    };
    let dict = Dictionary::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = 1.0;
    let mut worst = 0.0f64;
    let mut subbands = 0;
    let mut partition_counts = Vec::new();
    while subbands < 20 {
        let flat: Vec<f64> = (0..256).map(|_| rng.gen_range(-2.5..2.5)).collect();
        let pyr = WaveletPyramid::from_flat(16, 1, &flat).unwrap();
        let search = best_geometry(&pyr, t, &dict).unwrap().cost.total;
        let mut exhaustive = pyr.approx().len() as f64 * t * t;
        for o in Orientation::ALL {
            let band = pyr.subband(1, o);
            let parts = partitions(DyadicSquare::root(
                SubbandId {
                    depth: 1,
                    orientation: o,
                },
                8,
            ));
            partition_counts.push(parts.len());
            // A flow assignment picks one flow per leaf and the cost is a sum
            // over leaves, so its minimum is the sum of per-leaf minima.
            let best = parts
                .iter()
                .map(|leaves| {
                    leaves
                        .iter()
                        .map(|sq| {
                            let block: Vec<f64> = band
                                .slice(s![sq.y..sq.y + sq.width, sq.x..sq.x + sq.width])
                                .iter()
                                .copied()
                                .collect();
                            enumerate_flows(sq.width, &cfg)
                                .iter()
                                .map(|flow| {
                                    let c = match flow {
                                        None => block.clone(),
                                        Some(f) => alpert_forward(
                                            &block,
                                            &build_alpert(sq.width, f, 2).unwrap(),
                                        )
                                        .unwrap(),
                                    };
                                    c.iter()
                                        .map(|v| if v.abs() > t { t * t } else { v * v })
                                        .sum::<f64>()
                                })
                                .fold(f64::INFINITY, f64::min)
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            exhaustive += best;
            subbands += 1;
        }
        worst = worst.max((search - exhaustive).abs());
    }
    let all17 = partition_counts.iter().all(|&n| n == 17);
    outcome(
        worst <= 1e-12 && all17,
        format!("{subbands} subbands x 17 partitions x 7 flows per leaf: max |diff| {worst:.2e}"),
    )
}

fn concentration() -> Outcome {
    let dims: Vec<usize> = (1..=64).collect();
    let mut lines = Vec::new();
    let mut pass = true;
    for u in [0.0, 2.0] {
        let r = concentration_experiment(64, &dims, u, 10_000, 5).unwrap();
        let limit = r.bound() + 3.0 * r.binomial_stderr();
        pass &= r.frequency() <= limit;
        lines.push(format!("u={u}: {:.4} <= {:.4}", r.frequency(), limit));
    }
    outcome(
        pass,
        format!(
            "K=64, all coordinate subspaces, 10^4 trials: {}",
            lines.join(", ")
        ),
    )
}

fn oracle_inequality() -> Outcome {
    let est = Estimator::new(EstimatorConfig::for_order(BENCH_ORDER)).unwrap();
    let sigma = 0.0625;
    let probe = est
        .plan_from_sigma(sigma, 1.0)
        .unwrap()
        .with_side(64, &est)
        .unwrap();
    let plan = est
        .plan_from_sigma(sigma, probe.regime_lambda)
        .unwrap()
        .with_side(64, &est)
        .unwrap();
    let f = render_scene(&SceneSpec::curved_edge(2.0), 64).unwrap();
    let oracle = est.oracle_cost(&f, plan.threshold, sigma).unwrap();
    let trials = 200;
    let risks: Vec<f64> = (0..trials)
        .map(|t| {
            let obs = observe_with(&f, sigma, &mut bandlet::rng::substream(6, t)).unwrap();
            risk_of(&f, &est.denoise(&obs, &plan).unwrap().0).unwrap()
        })
        .collect();
    let n = trials as f64;
    let mean = risks.iter().sum::<f64>() / n;
    let se = (risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let bound = 4.0 * oracle.oracle_total + 64.0 * sigma * sigma * 2.0 / plan.k_n as f64 + 3.0 * se;
    outcome(
        plan.in_regime() && mean <= bound,
        format!(
            "lambda={:.3}, T={:.4}: mean risk {mean:.4} (se {se:.1e}) <= {bound:.4} (oracle_total {:.4})",
            plan.lambda_tilde, plan.threshold, oracle.oracle_total
        ),
    )
}

fn rate() -> Outcome {
    let est = Estimator::new(EstimatorConfig::for_order(BENCH_ORDER)).unwrap();
    let opts = RiskOptions {
        trials: 50,
        lambda_tilde: BENCH_LAMBDA,
        seed: 1,
        compare_baseline: true,
    };
    let sigmas = [0.25, 0.125, 0.0625, 0.03125];
    let report = risk_curve(&SceneSpec::curved_edge(2.0), &sigmas, &opts, &est).unwrap();
    let baseline = report.baseline.as_ref().unwrap();
    let dominated = report
        .rows
        .iter()
        .zip(baseline)
        .all(|(a, b)| a.mse_mean <= b.mse_mean);
    let pairs: Vec<String> = report
        .rows
        .iter()
        .zip(baseline)
        .map(|(a, b)| format!("{:.3}/{:.3}", a.mse_mean, b.mse_mean))
        .collect();
    let slope = report.fit.slope;
    outcome(
        (0.5..=0.9).contains(&slope) && dominated,
        format!(
            "p={BENCH_ORDER}, lambda={BENCH_LAMBDA}, 50 trials: slope {slope:.3} (95% CI {:.3}..{:.3}); bandlet/wavelet mse {}",
            report.fit.ci.0,
            report.fit.ci.1,
            pairs.join(" ")
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bench = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let args = [
            "bandlet",
            "--threads",
            threads,
            "bench",
            "--trials",
            "10",
            "--seed",
            "42",
            "--compare-baseline",
            "--out",
            path.to_str().unwrap(),
        ];
        let code = run(args, &mut Vec::new(), &mut Vec::new());
        (code, std::fs::read(&path).unwrap_or_default())
    };
    let runs = [
        bench("a.csv", "1"),
        bench("b.csv", "1"),
        bench("c.csv", "4"),
        bench("d.csv", "4"),
    ];
    let ok = runs
        .iter()
        .all(|(code, bytes)| *code == 0 && !bytes.is_empty() && *bytes == runs[0].1);
    outcome(
        ok,
        format!(
            "4 bench runs (threads 1,1,4,4), {} CSV bytes each, identical: {ok}",
            runs[0].1.len()
        ),
    )
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("orthonormality", Duration::from_secs(5), orthonormality),
        ("alpert", Duration::from_secs(30), alpert),
        (
            "thresholding lemma",
            Duration::from_secs(10),
            thresholding_lemma,
        ),
        ("best-basis oracle", Duration::from_secs(60), best_basis),
        (
            "concentration lemma",
            Duration::from_secs(30),
            concentration,
        ),
        (
            "oracle inequality",
            Duration::from_secs(600),
            oracle_inequality,
        ),
        ("rate experiment", Duration::from_secs(1800), rate),
        ("determinism", Duration::from_secs(300), determinism),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= *budget;
        if !pass {
            failures += 1;
        }
        println!(
            "{} [{}] {name}: {} ({:.2} s, budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
