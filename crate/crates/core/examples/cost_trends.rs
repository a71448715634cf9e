//! Runs a reduced cost sweep and prints the mean per-value cost by trie
//! depth and by batch size.

use smartsync::bench::{
    mean_cost_by_batch, mean_cost_by_depth, run_multi_suite, run_single_suite, BenchConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BenchConfig {
        single_sizes: vec![100, 2_000],
        samples_per_size: 20,
        multi_sizes: vec![2_000],
        batch_sizes: vec![1, 10, 100],
        repetitions: 2,
        ..BenchConfig::default()
    };

    println!("size  depth  mean cost per value");
    for ((size, depth), cost) in mean_cost_by_depth(&run_single_suite(&cfg)?) {
        println!("{size:>5} {depth:>6}  {cost:>10.0}");
    }
    println!();
    println!("size  batch  mean cost per value");
    for ((size, batch), cost) in mean_cost_by_batch(&run_multi_suite(&cfg)?) {
        println!("{size:>5} {batch:>6}  {cost:>10.0}");
    }
    Ok(())
}
