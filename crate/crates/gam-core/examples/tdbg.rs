use gam_core::demo::*;
use gam_core::types::GamConfig;

fn main() {
    for seed in 1u64..=16 {
        let samples = generate_shapes(60, 0.02, seed).unwrap();
        let config = GamConfig { n_centers: 48, k_neighbors: 24, radius: 0.6, seed, ..reference_config() };
        let r = train_classifier(&samples, &config, 30, 1.0, true).unwrap();
        println!("seed={seed}: train {:.3} test {:.3} loss ->{:.4}",
            r.final_train_accuracy, r.final_test_accuracy,
            r.per_epoch.last().unwrap().loss_mean);
    }
}
