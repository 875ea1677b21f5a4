use npvsched::agent::*;
use npvsched::instance::Instance;
use std::time::Instant;

fn probe(lr: f64, update_every: usize, episodes: usize, seed: u64) {
    let instance = Instance::example1();
    let cfg = AgentConfig { episodes, lr, update_every, seed, ..AgentConfig::default() };
    let t0 = Instant::now();
    let res = train(&instance, &cfg).unwrap();
    let eval = evaluate(&res.params, &instance, 0, 0).unwrap();
    eprintln!(
        "lr={lr:.0e} ue={update_every} eps={episodes} seed={seed}: ENPV={:+9.2} per-scen={:?} env_steps={} grad_steps={} wall={:.0}s",
        eval.mean,
        eval.per_scenario.as_ref().unwrap().iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
        res.env_steps,
        res.gradient_steps,
        t0.elapsed().as_secs_f64()
    );
}

#[test]
fn learning_probe() {
    // Reference points: rigid = 44.18, exact MDP = 100.57, EV|PI = 132.72.
    probe(1e-5, 8, 20000, 1);
    probe(1e-5, 8, 20000, 2);
}
