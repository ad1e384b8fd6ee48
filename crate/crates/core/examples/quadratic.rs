//! Rediscovers `y = 2.5·x0² + 1.3` from 100 samples on [−2, 2].
//!
//! cargo run --release --example quadratic -- [seed] [generations]

use std::time::Instant;

use momes_core::datasets::synthetic_univariate;
use momes_core::{run, CgpParams, ConstInit, KernelSet, MomesConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let generations: usize = args.next().map_or(5000, |s| s.parse().expect("generations"));

    let data = synthetic_univariate(100, 42, (-2.0, 2.0), |x| 2.5 * x * x + 1.3);
    let kernels = KernelSet::from_names(&["add", "sub", "mul", "div"]).unwrap();
    let cfg = MomesConfig {
        population_size: 40,
        generations,
        max_mutations: 4,
        cgp: CgpParams::new(1, 5, 2, 20, 20, kernels).unwrap(),
        const_init: ConstInit::default(),
        seed,
    };
    let start = Instant::now();
    let result = run(&data, &cfg).unwrap();
    println!("{} generations in {:.1?}", generations, start.elapsed());
    for m in &result.front.members {
        println!("{:>4}  {:>12.4e}  {}", m.complexity, m.loss, m.infix);
    }
}
