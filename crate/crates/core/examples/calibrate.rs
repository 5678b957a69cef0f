use std::time::Instant;

use nwn_core::experiment::sweep::cell_seed;
use nwn_core::experiment::{forecast_on, lorenz_data, ExperimentConfig};
use nwn_core::rng::derive_seed;
use nwn_core::topology::{edges_for_density, NetworkGraph};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::default();
    let mut densities = vec![0.017, 0.08, 0.99];
    let mut seeds = 3u64;
    let mut n_nodes = 500;
    for a in &args {
        let (k, v) = a.split_once('=').expect("key=value");
        match k {
            "k_grow" => cfg.memristor.k_grow = v.parse().unwrap(),
            "k_decay" => cfg.memristor.k_decay = v.parse().unwrap(),
            "g_off" => cfg.memristor.g_off = v.parse().unwrap(),
            "vth" => cfg.memristor.v_threshold = v.parse().unwrap(),
            "vs" => cfg.forecast.voltage_scale = v.parse().unwrap(),
            "win" => cfg.wiring.win_range = v.parse().unwrap(),
            "bias" => cfg.wiring.bias_range = v.parse().unwrap(),
            "nin" => cfg.wiring.n_inputs = v.parse().unwrap(),
            "ngr" => cfg.wiring.n_grounds = v.parse().unwrap(),
            "spin" => cfg.forecast.spinup_steps = v.parse().unwrap(),
            "train" => cfg.forecast.train_steps = v.parse().unwrap(),
            "fc" => cfg.forecast.forecast_steps = v.parse().unwrap(),
            "tik" => cfg.ridge.tikhonov = v.parse().unwrap(),
            "n" => n_nodes = v.parse().unwrap(),
            "seeds" => seeds = v.parse().unwrap(),
            "d" => densities = v.split(',').map(|x| x.parse().unwrap()).collect(),
            _ => panic!("unknown {k}"),
        }
    }
    cfg.forecast.stop_at_crossing = true;
    let data = lorenz_data(&cfg).unwrap();
    for &d in densities.iter() {
        let m = edges_for_density(n_nodes, d);
        let mut tfs = Vec::new();
        for s in 0..seeds {
            let seed = cell_seed(cfg.base_seed, m, s as usize);
            let g = NetworkGraph::random_connected(n_nodes, m, derive_seed(seed, &[0])).unwrap();
            let t0 = Instant::now();
            let out = forecast_on(&cfg, &g, derive_seed(seed, &[1]), &data).unwrap();
            println!(
                "d={d} m={m} seed={s} tf={:.3} nmse={:.2e} act={:.3} div={:?} {:.1}s",
                out.forecast_time,
                out.train_nmse,
                out.mean_activity,
                out.diverged_at,
                t0.elapsed().as_secs_f64()
            );
            tfs.push(out.forecast_time);
        }
        let mean = tfs.iter().sum::<f64>() / tfs.len() as f64;
        let best = tfs.iter().cloned().fold(0.0, f64::max);
        println!("== d={d} mean={mean:.3} best={best:.3}");
    }
}
