//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ama_core::agent::{bandit_select, gae, BanditValues};
use ama_core::env::{Action, GridConfig, GridWorld};
use ama_core::experiment::{
    hetero_gradcheck, merge_rows, run_seeds, thread_budget, to_csv, Experiment, ExperimentConfig, Method,
    RunOutput,
};
use ama_core::nn::Optimizer;
use ama_core::predict::{heteroscedastic_loss_grad, DualHeadPredictor, DualPrediction, PredictorConfig};
use ama_core::reward::{intrinsic_reward, prediction_errors, RewardConfig, RewardShaper, RunningMoments};
use ama_core::{RngStream, Tensor};
use rand::Rng;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: u32, name: &'static str, checks: &[(bool, String)]) -> Verdict {
    Verdict {
        id,
        name,
        pass: checks.iter().all(|c| c.0),
        detail: checks.iter().map(|c| c.1.as_str()).collect::<Vec<_>>().join("; "),
    }
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (elapsed < limit, format!("runtime {:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn runs(experiment: Experiment, method: Method, seeds: &[u64], overrides: &[&str]) -> Vec<RunOutput> {
    let mut cfg = ExperimentConfig::new(experiment, method).with_overrides(overrides).expect("config");
    cfg.seeds = seeds.to_vec();
    run_seeds(&cfg, thread_budget()).expect("experiment run")
}

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for lambda in [0.1, 1.0] {
        for dim in [4, 64] {
            for batch in [1, 32] {
                let err = hetero_gradcheck(lambda, dim, batch, 0).expect("gradcheck");
                if err > worst || worst_case.is_empty() {
                    worst = worst.max(err);
                    worst_case = format!("lambda={lambda} D={dim} batch={batch}");
                }
            }
        }
    }
    verdict(
        1,
        "heteroscedastic loss gradients match finite differences",
        &[
            (worst < 1e-4, format!("max relative error {worst:.3e} at {worst_case} (< 1e-4)")),
            within(start.elapsed(), Duration::from_secs(60)),
        ],
    )
}

fn variance_optimum() -> Verdict {
    let start = Instant::now();
    let mut checks = Vec::new();
    for (i, (e2, lambda)) in [(1.0f64, 1.0), (4.0, 0.5), (0.25, 2.0)].into_iter().enumerate() {
        let mut rng = RngStream::from_seed(100 + i as u64);
        let cfg = PredictorConfig {
            state_dim: 1,
            num_actions: 0,
            hidden: vec![16],
            activation: ama_core::nn::Activation::Tanh,
            dual: true,
            state_skip: false,
        };
        let p = DualHeadPredictor::new(cfg, &mut rng).expect("predictor");
        let s = Tensor::row(vec![0.3]);
        let mean = p.predict_mean(&s, None).expect("mean").data()[0];
        let target = Tensor::row(vec![mean + e2.sqrt()]);
        let feat = p.trunk().infer(&s).expect("trunk");
        let mut head = p.variance_head().expect("dual").clone();
        let mut opt = Optimizer::adam(0.01);
        for _ in 0..5000 {
            let log_variance = head.forward(&feat).expect("forward");
            let pred = DualPrediction {
                mean: Tensor::row(vec![mean]),
                log_variance,
            };
            let (_, _, g) = heteroscedastic_loss_grad(&pred, &target, lambda).expect("loss");
            let grads = head.backward(&g).expect("backward");
            opt.step_flat(head.params_mut(), &grads.params).expect("step");
        }
        let var = head.infer(&feat).expect("infer").data()[0].exp();
        let want = e2 / lambda;
        let rel = (var - want).abs() / want;
        checks.push((rel < 1e-3, format!("e2={e2} lambda={lambda}: {var:.6} vs {want} (rel {rel:.1e})")));
    }
    checks.push(within(start.elapsed(), Duration::from_secs(60)));
    verdict(2, "variance head converges to e^2/lambda", &checks)
}

fn noisy_pairs() -> (Verdict, Vec<RunOutput>) {
    let start = Instant::now();
    let seeds = [0, 1, 2];
    let ama = runs(Experiment::NoisyPairs, Method::Ama, &seeds, &[]);
    let mse = runs(Experiment::NoisyPairs, Method::Mse, &seeds, &[]);
    let mut checks = Vec::new();
    for (a, m) in ama.iter().zip(&mse) {
        let (ad, as_) = (a.summary("reward_deterministic"), a.summary("reward_stochastic"));
        let ratio = as_ / ad;
        checks.push((
            (0.5..=2.0).contains(&ratio),
            format!("seed {} ama stoch/det {ratio:.3} ({as_:.3e}/{ad:.3e})", a.log.seed()),
        ));
        let (md, ms) = (m.summary("reward_deterministic"), m.summary("reward_stochastic"));
        checks.push((ms >= 10.0 * md, format!("mse stoch/det {:.1}", ms / md)));
    }
    checks.push(within(start.elapsed(), Duration::from_secs(600)));
    let mut outputs = ama;
    outputs.extend(mse);
    (verdict(3, "noisy pairs: AMA rewards converge, MSE stochastic reward dominates", &checks), outputs)
}

fn gridworld() -> (Verdict, Verdict, Vec<RunOutput>) {
    let start = Instant::now();
    let seeds = [0, 1, 2, 3, 4];
    let med = |method, tv: bool| -> (f64, Vec<RunOutput>) {
        let o = runs(Experiment::Gridworld, method, &seeds, &[if tv { "noisy_tv=true" } else { "noisy_tv=false" }]);
        (median(o.iter().map(|r| r.summary("unique_states")).collect()), o)
    };
    let (ama_tv, o1) = med(Method::Ama, true);
    let (mse_tv, o2) = med(Method::Mse, true);
    let (ama, o3) = med(Method::Ama, false);
    let (mse, o4) = med(Method::Mse, false);
    let (none, o5) = med(Method::None, false);
    let elapsed = start.elapsed();
    let c4 = verdict(
        4,
        "gridworld with noisy TV: AMA explores, MSE is trapped",
        &[
            (ama_tv >= 2.0 * mse_tv, format!("median ama-tv {ama_tv} vs mse-tv {mse_tv} (need >= 2x)")),
            (mse_tv <= 0.6 * mse, format!("mse-tv {mse_tv} vs mse {mse} (need <= 0.6x)")),
            within(elapsed, Duration::from_secs(7200)),
        ],
    );
    let ratio = ama.max(mse) / ama.min(mse);
    let c5 = verdict(
        5,
        "gridworld without TV: curiosity beats no intrinsic reward",
        &[
            (ama >= 1.3 * none, format!("median ama {ama} vs none {none} (need >= 1.3x)")),
            (mse >= 1.3 * none, format!("median mse {mse} vs none {none} (need >= 1.3x)")),
            (ratio <= 1.5, format!("ama/mse spread {ratio:.2} (need <= 1.5)")),
        ],
    );
    let outputs = [o1, o2, o3, o4, o5].into_iter().flatten().collect();
    (c4, c5, outputs)
}

fn tv_isolation() -> Verdict {
    let mut checks = Vec::new();
    let mut steps = 0;
    for seed in 0..4u64 {
        for rooms in [4, 6] {
            let base = GridConfig {
                rooms,
                max_steps: 100,
                ..GridConfig::default()
            };
            let mut off = GridWorld::new(base.clone(), seed).expect("grid");
            let mut on = GridWorld::new(GridConfig { noisy_tv: true, ..base }, seed).expect("grid");
            off.reset();
            on.reset();
            let mut actions = RngStream::from_seed(1000 + seed);
            let mut same = true;
            for _ in 0..3000 {
                let a = Action::ALL[actions.random_range(0..Action::COUNT)];
                let (x, y) = (off.step(a), on.step(a));
                same &= off.state_key() == on.state_key() && x.reward == y.reward && x.terminal == y.terminal;
                if x.terminal {
                    off.reset();
                    on.reset();
                    same &= off.state_key() == on.state_key();
                }
                steps += 1;
            }
            checks.push((same, format!("seed {seed} rooms {rooms}")));
        }
    }
    let pass = checks.iter().all(|c| c.0);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.0).map(|c| c.1.as_str()).collect();
    let detail = if pass {
        format!("{steps} steps over {} worlds, identical keys and rewards", checks.len())
    } else {
        format!("diverged: {}", failed.join(", "))
    };
    verdict(6, "noisy TV never touches hidden state", &[(pass, detail)])
}

fn bandit() -> (Verdict, Vec<RunOutput>) {
    let start = Instant::now();
    let seeds = [0, 1, 2];
    let ama = runs(Experiment::Bandit, Method::Ama, &seeds, &[]);
    let ens = runs(Experiment::Bandit, Method::Ensemble, &seeds, &[]);
    let mut checks = Vec::new();
    for r in &ama {
        let (a0, a, b) = (r.summary("initial_zone_a"), r.summary("final_zone_a"), r.summary("final_zone_b"));
        checks.push((b >= 5.0 * a, format!("seed {} ama zone B/A {:.2}", r.log.seed(), b / a)));
        checks.push((a < 0.2 * a0, format!("ama zone A final/initial {:.3}", a / a0)));
    }
    for r in &ens {
        let ra = r.summary("final_zone_a") / r.summary("initial_zone_a");
        let rb = r.summary("final_zone_b") / r.summary("initial_zone_b");
        checks.push((
            ra < 0.2 && rb < 0.2,
            format!("seed {} ensemble final/initial A {ra:.3} B {rb:.3}", r.log.seed()),
        ));
    }
    checks.push(within(start.elapsed(), Duration::from_secs(600)));
    let mut outputs = ama;
    outputs.extend(ens);
    (verdict(7, "bandit: aleatoric vs epistemic uncertainty by zone", &checks), outputs)
}

fn decomposition() -> Verdict {
    let start = Instant::now();
    let out = runs(Experiment::Decomposition, Method::Mse, &[0], &[]).remove(0);
    let (d, se) = (out.summary("discrepancy"), out.summary("standard_error"));
    verdict(
        8,
        "noise + bias^2 + variance matches total error",
        &[
            (
                d.abs() <= 3.0 * se,
                format!(
                    "noise {:.4} bias2 {:.4} variance {:.4} total {:.4}; |d| {:.4} <= 3 se {:.4}",
                    out.summary("noise"),
                    out.summary("bias2"),
                    out.summary("variance"),
                    out.summary("total"),
                    d.abs(),
                    3.0 * se
                ),
            ),
            within(start.elapsed(), Duration::from_secs(300)),
        ],
    )
}

fn oracle_equivalences() -> Verdict {
    let mut rng = RngStream::from_seed(9);
    let mut checks = Vec::new();

    let xs: Vec<f64> = (0..10_000).map(|_| rng.random_range(-50.0..150.0)).collect();
    let mut m = RunningMoments::new();
    xs.iter().for_each(|&x| m.update(x));
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    let werr = ((m.mean - mean).abs() / mean.abs()).max((m.variance() - var).abs() / var);
    checks.push((werr <= 1e-9, format!("welford rel err {werr:.1e}")));

    let mut gerr = 0.0f64;
    for _ in 0..200 {
        let t = rng.random_range(1..=10);
        let rewards: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bootstrap = rng.random_range(-1.0..1.0);
        let gamma = rng.random_range(0.5..1.0);
        let (adv, _) = gae(&rewards, &values, &vec![false; t], bootstrap, gamma, 1.0).expect("gae");
        for k in 0..t {
            let mut ret = gamma.powi((t - k) as i32) * bootstrap;
            for (j, r) in rewards.iter().enumerate().skip(k) {
                ret += gamma.powi((j - k) as i32) * r;
            }
            gerr = gerr.max((adv[k] - (ret - values[k])).abs());
        }
    }
    checks.push((gerr <= 1e-12, format!("gae(1) vs monte carlo max err {gerr:.1e}")));

    let mut exact = true;
    for _ in 0..200 {
        let d = rng.random_range(1..20);
        let next = Tensor::row((0..d).map(|_| rng.random_range(-2.0..2.0)).collect());
        let pred = DualPrediction {
            mean: Tensor::row((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()),
            log_variance: Tensor::row((0..d).map(|_| rng.random_range(-3.0..3.0)).collect()),
        };
        let mut shaper = RewardShaper::new(RewardConfig {
            eta: 0.0,
            clip_below_zero: false,
            normalize: false,
            reward_scaling: 1.0,
            ..RewardConfig::default()
        })
        .expect("shaper");
        let r = intrinsic_reward(&next, &pred, &mut shaper).expect("reward");
        exact &= r == prediction_errors(&next, &pred.mean).expect("mse")[0];
    }
    checks.push((exact, "eta=0 reward equals mse bit-for-bit".into()));

    let pulls = 10_000;
    let b = BanditValues::new(10, 1.0).expect("bandit");
    let mut counts = [0usize; 10];
    for _ in 0..pulls {
        counts[bandit_select(&b, &mut rng)] += 1;
    }
    let band = 3.0 * (pulls as f64 * 0.1 * 0.9).sqrt();
    let spread = counts.iter().map(|&c| (c as f64 - 1000.0).abs()).fold(0.0, f64::max);
    checks.push((spread <= band, format!("eps=1 max |count-1000| {spread} <= {band}")));

    let mut greedy = BanditValues::new(3, 0.0).expect("bandit");
    greedy.values = vec![0.0, 5.0, 3.0];
    let hits = (0..pulls).filter(|_| bandit_select(&greedy, &mut rng) == 1).count();
    checks.push((hits == pulls, format!("eps=0 argmax {hits}/{pulls}")));

    verdict(9, "oracle equivalences", &checks)
}

fn determinism(first: &[RunOutput]) -> Verdict {
    let mut checks = Vec::new();
    for (experiment, method, tv) in [
        (Experiment::NoisyPairs, Method::Ama, false),
        (Experiment::Gridworld, Method::Ama, true),
        (Experiment::Bandit, Method::Ama, false),
    ] {
        let overrides: &[&str] = if tv { &["noisy_tv=true"] } else { &[] };
        let rerun = runs(experiment, method, &[0], overrides);
        let id = rerun[0].log.run_id().to_string();
        let Some(original) = first.iter().find(|o| o.log.run_id() == id) else {
            checks.push((false, format!("{id}: no first run")));
            continue;
        };
        let same = to_csv(&merge_rows(std::slice::from_ref(original))) == to_csv(&merge_rows(&rerun));
        checks.push((same, format!("{id} identical={same}")));
    }
    verdict(10, "reruns produce bit-identical metrics", &checks)
}

fn main() -> ExitCode {
    let report = |v: &Verdict| {
        println!(
            "{} criterion {:>2}: {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            v.id,
            v.name,
            v.detail
        );
    };
    let mut verdicts = Vec::new();
    let mut record = |v: Verdict| {
        report(&v);
        verdicts.push(v.pass);
    };
    record(gradient_correctness());
    record(variance_optimum());
    let (c3, mut kept) = noisy_pairs();
    record(c3);
    let (c4, c5, grid) = gridworld();
    record(c4);
    record(c5);
    kept.extend(grid);
    record(tv_isolation());
    let (c7, bandit_runs) = bandit();
    record(c7);
    kept.extend(bandit_runs);
    record(decomposition());
    record(oracle_equivalences());
    record(determinism(&kept));
    let failed = verdicts.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
