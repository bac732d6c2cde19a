use rvid_core::model::plan::{init_params, plan_model};
use rvid_core::model::loss::supervised_loss;
use rvid_core::model::ModelConfig;
use rvid_core::session::Session;
use rvid_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let cfg = ModelConfig::micro();
    let plan = plan_model(&cfg).unwrap();
    let store = init_params(&plan, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noisy = Tensor::from_fn(vec![6, 4, 32, 32], |_| rng.random_range(0.05..0.95f32));
    let clean = Tensor::from_fn(vec![6, 4, 32, 32], |_| rng.random_range(0.05..0.95f32));
    // forward only (no-grad)
    let t0 = Instant::now();
    for _ in 0..5 {
        let mut sess = Session::inference(&store);
        let _ = rvid_core::model::forward_clip(&mut sess, &plan, &noisy, false).unwrap();
    }
    println!("fwd inference: {:.3}", t0.elapsed().as_secs_f64()/5.0);
    // forward recorded
    let t0 = Instant::now();
    for _ in 0..5 {
        let mut sess = Session::new(&store);
        let _ = supervised_loss(&mut sess, &plan, &noisy, &clean, 0.5, false).unwrap();
    }
    println!("fwd recorded: {:.3}", t0.elapsed().as_secs_f64()/5.0);
    // forward + backward
    let t0 = Instant::now();
    for _ in 0..5 {
        let mut sess = Session::new(&store);
        let loss = supervised_loss(&mut sess, &plan, &noisy, &clean, 0.5, false).unwrap();
        let _ = sess.grads(loss).unwrap();
    }
    println!("fwd+bwd: {:.3}", t0.elapsed().as_secs_f64()/5.0);
}
