use graphmix::em::{fit, EmConfig};
use graphmix::model::PenaltyConfig;
use graphmix::data::DataMatrix;
use graphmix::seed::rng_from;

fn blobs(n_each: usize, offset: f64, seed: u64) -> (DataMatrix, Vec<usize>) {
    let mut rng = rng_from(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..2usize {
        let center = if c == 0 { -offset } else { offset };
        for _ in 0..n_each {
            let x: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
            let y: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
            rows.push(vec![center + x, center + y]);
            labels.push(c);
        }
    }
    (DataMatrix::from_rows(&rows).unwrap(), labels)
}

fn main() {
    for seed in [11u64, 21, 33] {
        let (data, truth) = blobs(50, 5.0, 21);
        let penalty = PenaltyConfig::new(0.1, true).unwrap();
        let mut cfg = EmConfig::new(2, penalty);
        cfg.restarts = 25;
        cfg.seed = seed;
        let fitted = fit(&data, &cfg).unwrap();
        let labels = fitted.labels();
        let agree: usize = labels.iter().zip(&truth).filter(|(a,b)| a==b).count();
        let agree = agree.max(data.n()-agree);
        println!("seed {seed}: restart {} pll {:.3} agree {agree}/{} mean0[0] {:.2}", fitted.restart_index, fitted.final_pll(), data.n(), fitted.model.components()[0].mean()[0]);
    }
}
