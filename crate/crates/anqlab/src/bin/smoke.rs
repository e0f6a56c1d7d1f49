// temporary calibration harness, removed before release
use anqlab::data::{collect_dataset, mix_datasets, BehaviorPolicy, MixtureRecipe};
use anqlab::env::make_env;
use anqlab::learner::{Learner, MuMode, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let env_name = args.get(1).map(String::as_str).unwrap_or("reacher_1d");
    let iters: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let lambda: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let ratio: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let mu_zero = args.get(5).map(|s| s == "zero").unwrap_or(false);

    let mut env = make_env(env_name).unwrap();
    let expert = collect_dataset(env.as_mut(), BehaviorPolicy::Expert, 10_000, 1).unwrap();
    let random = collect_dataset(env.as_mut(), BehaviorPolicy::Random, 10_000, 2).unwrap();
    let recipe = MixtureRecipe { expert_ratio: ratio, total_size: 10_000, discard_ratio: 0.0 };
    let ds = mix_datasets(&expert, &random, &recipe, 3).unwrap();

    let mut cfg = TrainConfig::for_env(env_name).unwrap();
    cfg.hidden_dims = vec![48, 48];
    cfg.batch_size = 192;
    cfg.iterations = iters;
    cfg.lambda = lambda;
    cfg.seed = 0;
    if let Ok(lr) = std::env::var("LR") { cfg.lr = lr.parse().unwrap(); }
    if let Ok(lr) = std::env::var("MULR") { cfg.mu_lr = Some(lr.parse().unwrap()); }
    if std::env::var("CLIPLO1").is_ok() { cfg.adv_weight_clip.0 = 1.0; }
    let mode = if mu_zero { MuMode::Zero } else { MuMode::Learned };
    let mut learner = Learner::new(cfg, &ds, mode).unwrap();
    let data = learner.prepare(&ds).unwrap();

    let t0 = Instant::now();
    for i in 0..iters {
        let m = learner.train_step(&data).unwrap();
        if i % 1000 == 0 || i == iters - 1 {
            let eval = learner.evaluate_policy(env.as_mut(), 10, 12345).unwrap();
            println!(
                "iter {:5}  v {:7.3} q {:8.3} mu|{:.4}| meanQ {:8.3} -> return {:7.3} score {:6.1}  [{:.1?}]",
                i, m.v_loss, m.q_loss, m.mean_mu_norm, m.mean_q, eval.mean_return, eval.score, t0.elapsed()
            );
        }
    }
    println!("total {:?} for {} iters", t0.elapsed(), iters);
}
