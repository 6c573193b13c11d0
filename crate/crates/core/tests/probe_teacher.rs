use chanforge_core::channel::dataset::generate_dataset;
use chanforge_core::channel::{FrameConfig, Generator, ScenarioConfig};
use chanforge_core::diffusion::predictor::{DmDenoiser, NoisePredictor, PredictorConfig};
use chanforge_core::diffusion::sampler::generate_channels;
use chanforge_core::diffusion::train::{train_dm, DmTrainConfig};
use chanforge_core::diffusion::unet::UNetConfig;
use chanforge_core::diffusion::{DiffusionSchedule, Preconditioner};

#[test]
fn probe_quality_ceiling() {
    let sc = vec![ScenarioConfig {
        name: "t".into(), center: (40.0, 30.0), extent_m: 20.0, n_clusters: 3,
        los: true, delay_spread_s: 0.05e-6, angular_spread_rad: 0.2, decay_exponent: 1.0, seed: 5,
    }];
    let frame = FrameConfig::tiny();
    let ds = generate_dataset(&sc, 256, &[5.0, 30.0], &frame, 6).unwrap();
    let precond = Preconditioner::standard();
    let schedule = DiffusionSchedule::standard(40);
    let data_energy = ds.samples.iter().map(|s| s.energy()).sum::<f64>() / ds.len() as f64;
    for (widths, attn, epochs) in [(vec![16usize, 32], true, 400usize), (vec![16, 32], true, 800)] {
        let cfg = PredictorConfig {
            unet: UNetConfig { widths: widths.clone(), emb_dim: 32, freqs_per_input: 6, attention: attn },
            conditional: true,
            sigma_data: 0.5,
        };
        let mut teacher = NoisePredictor::init(&frame, cfg, 17).unwrap();
        let tc = DmTrainConfig { epochs, batch_size: 32, lr: 1e-2, lr_min_fraction: 0.01, seed: 2 };
        let log = train_dm(&mut teacher, &ds, &schedule, &precond, &tc).unwrap();
        let den = DmDenoiser::new(&teacher, precond);
        let gen = generate_channels(&den, &frame, &ds.labels[..32], &schedule, 77, Generator::Dm, 32, teacher.data_scale).unwrap();
        let gen_energy = gen.samples.iter().map(|s| s.energy()).sum::<f64>() / 32.0;
        println!("widths={widths:?} attn={attn} epochs={epochs}: dsm {:.3}, gen energy {gen_energy:.1} vs data {data_energy:.1}", log.epoch_loss.last().unwrap());
    }
}
