//! Scratch: find eval episodes where a stored model underperforms and show
//! where its actions diverge from the scripted teacher.

use treerl::env::{teachers, EnvKind, Environment};
use treerl::policy::InferenceMode;
use treerl::rng;
use treerl::tree::serialize::load_model;

fn main() {
    let path = std::env::args().nth(1).expect("model path");
    let model = load_model(std::path::Path::new(&path)).unwrap();
    let kind = EnvKind::Cartpole;
    let mut env = kind.build();
    for e in 0..100u64 {
        let seed = rng::sub_seed(0, "eval-episode", e);
        let mut state = env.reset(seed);
        let start = state.clone();
        let mut total = 0.0;
        let mut disagreements = 0;
        loop {
            let a = model.act(&state, InferenceMode::Soft).unwrap();
            if a != teachers::heuristic_cartpole(&state) {
                disagreements += 1;
            }
            let step = env.step(a).unwrap();
            total += step.reward;
            if step.done {
                if total < 500.0 {
                    println!(
                        "episode {e}: reward {total}, start {start:?}, last {:?}, disagreements {disagreements}",
                        step.state
                    );
                }
                break;
            }
            state = step.state;
        }
    }
    println!("done");
}
