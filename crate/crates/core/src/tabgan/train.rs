//! Adversarial training loop: `critic_steps` discriminator updates per
//! generator update, single-threaded so loss histories replay bit-exactly.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::discriminator::DiscriminatorParams;
use super::generator::GeneratorParams;
use super::optim::{clip_weights, FlatParams, Momentum, Optimizer, RmsProp};
use super::{
    build_schema, encode_row, GanError, GanModel, LossMode, TrainConfig, GAN_FORMAT,
};
use crate::gmm::GmmColumnModel;
use crate::ingest::Dataset;

/// One generator update's losses; `d_loss` averages the critic steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn draw_noise(rng: &mut ChaCha20Rng, batch: usize, z_dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((batch, z_dim), |_| rng.sample(StandardNormal))
}

fn gather_batch(encoded: &Array2<f64>, rng: &mut ChaCha20Rng, batch: usize) -> Array2<f64> {
    let n = encoded.nrows();
    let mut out = Array2::zeros((batch, encoded.ncols()));
    for b in 0..batch {
        let pick = rng.gen_range(0..n);
        out.row_mut(b).assign(&encoded.row(pick));
    }
    out
}

/// Trains the GAN on malicious rows. Every row must carry label 1 and the
/// batch must fit the dataset. RNG use is ordered (generator init, critic
/// init, encode noise, then the training stream), so a seed pins the run.
pub fn train(
    data: &Dataset,
    gmms: &[Option<GmmColumnModel>],
    cfg: &TrainConfig,
) -> Result<GanModel, GanError> {
    train_with_observer(data, gmms, cfg, |_, _| {})
}

/// `train` with a probe invoked after every discriminator update (post
/// optimizer step and, in clipped mode, post clip), receiving the critic and
/// the zero-based update counter.
pub fn train_with_observer<F>(
    data: &Dataset,
    gmms: &[Option<GmmColumnModel>],
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<GanModel, GanError>
where
    F: FnMut(&DiscriminatorParams, usize),
{
    cfg.validate()?;
    if data.rows.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    let non_malicious = data.rows.iter().filter(|r| r.label != 1).count();
    if non_malicious > 0 {
        return Err(GanError::NonMaliciousRows { count: non_malicious });
    }
    if cfg.batch_size > data.rows.len() {
        return Err(GanError::BatchTooLarge { batch: cfg.batch_size, rows: data.rows.len() });
    }

    let feature_columns: Vec<_> = data.feature_columns().into_iter().cloned().collect();
    let schema = build_schema(&feature_columns, gmms)?;
    let width = schema.encoded_width();

    let mut master = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut g_init = ChaCha20Rng::seed_from_u64(master.gen());
    let mut d_init = ChaCha20Rng::seed_from_u64(master.gen());
    let mut encode_rng = ChaCha20Rng::seed_from_u64(master.gen());
    let mut stream = ChaCha20Rng::seed_from_u64(master.gen());

    let mut generator =
        GeneratorParams::new(&schema, cfg.z_dim, cfg.hidden, cfg.use_attention, &mut g_init);
    let mut discriminator = DiscriminatorParams::new(width, &cfg.d_hidden, &mut d_init);

    let mut real = Array2::zeros((data.rows.len(), width));
    for (i, row) in data.rows.iter().enumerate() {
        let enc = encode_row(row, &schema, gmms, cfg.cat_noise, &mut encode_rng)?;
        real.row_mut(i).assign(&Array1::from(enc));
    }

    let (mut d_opt, mut g_opt) = match cfg.loss_mode {
        LossMode::Wgan => (
            Optimizer::Rms(RmsProp::new(&discriminator, cfg.d_lr)),
            Optimizer::Rms(RmsProp::new(&generator, cfg.g_lr)),
        ),
        LossMode::Standard => (
            Optimizer::Momentum(Momentum::new(&discriminator, cfg.d_lr)),
            Optimizer::Momentum(Momentum::new(&generator, cfg.g_lr)),
        ),
    };

    let batch = cfg.batch_size;
    let inv_b = 1.0 / batch as f64;
    let steps_per_epoch = (data.rows.len() / batch).max(1);
    let mut history = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    let mut step = 0usize;
    let mut d_updates = 0usize;

    for _ in 0..cfg.epochs {
        for _ in 0..steps_per_epoch {
            let mut d_loss_sum = 0.0;
            for _ in 0..cfg.critic_steps {
                let real_batch = gather_batch(&real, &mut stream, batch);
                let z = draw_noise(&mut stream, batch, cfg.z_dim);
                let (fake, _) = generator.forward(&z, &schema);

                let joined = concatenate(Axis(0), &[real_batch.view(), fake.view()]).unwrap();
                let (scores, cache) = discriminator.forward(&joined);
                let (d_loss, dscore) = match cfg.loss_mode {
                    LossMode::Wgan => {
                        // Minimize mean(fake score) − mean(real score).
                        let loss = (scores.slice(ndarray::s![batch..]).sum()
                            - scores.slice(ndarray::s![..batch]).sum())
                            * inv_b;
                        let mut ds = Array1::zeros(2 * batch);
                        ds.slice_mut(ndarray::s![..batch]).fill(-inv_b);
                        ds.slice_mut(ndarray::s![batch..]).fill(inv_b);
                        (loss, ds)
                    }
                    LossMode::Standard => {
                        let mut loss = 0.0;
                        let mut ds = Array1::zeros(2 * batch);
                        for b in 0..batch {
                            let s_real = scores[b];
                            let s_fake = scores[batch + b];
                            loss += (softplus(-s_real) + softplus(s_fake)) * inv_b;
                            ds[b] = (sigmoid(s_real) - 1.0) * inv_b;
                            ds[batch + b] = sigmoid(s_fake) * inv_b;
                        }
                        (loss, ds)
                    }
                };
                let (d_grads, _) = discriminator.backward(&cache, &dscore);
                d_opt.step(&mut discriminator, &d_grads);
                if cfg.loss_mode == LossMode::Wgan {
                    clip_weights(&mut discriminator, cfg.clip_c);
                }
                if !discriminator.all_finite() {
                    return Err(GanError::Diverged { step });
                }
                observe(&discriminator, d_updates);
                d_updates += 1;
                d_loss_sum += d_loss;
            }

            let z = draw_noise(&mut stream, batch, cfg.z_dim);
            let (fake, g_cache) = generator.forward(&z, &schema);
            let (scores, d_cache) = discriminator.forward(&fake);
            let (g_loss, dscore) = match cfg.loss_mode {
                LossMode::Wgan => {
                    // Maximize the critic on fakes.
                    let loss = -scores.sum() * inv_b;
                    (loss, Array1::from_elem(batch, -inv_b))
                }
                LossMode::Standard => {
                    let mut loss = 0.0;
                    let mut ds = Array1::zeros(batch);
                    for b in 0..batch {
                        loss += softplus(-scores[b]) * inv_b;
                        ds[b] = (sigmoid(scores[b]) - 1.0) * inv_b;
                    }
                    (loss, ds)
                }
            };
            let (_, d_input) = discriminator.backward(&d_cache, &dscore);
            let g_grads = generator.backward(&schema, &g_cache, &d_input);
            g_opt.step(&mut generator, &g_grads);
            if !generator.all_finite() {
                return Err(GanError::Diverged { step });
            }

            history.push(LossRecord {
                step,
                d_loss: d_loss_sum / cfg.critic_steps as f64,
                g_loss,
            });
            step += 1;
        }
    }

    Ok(GanModel {
        format: GAN_FORMAT.to_string(),
        schema,
        gmms: gmms.to_vec(),
        generator,
        discriminator,
        config: cfg.clone(),
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Column, FlowRecord};
    use crate::tabgan::{fit_column_models, sample_rows};

    fn two_mode_dataset(n: usize, seed: u64) -> (Dataset, Vec<Option<GmmColumnModel>>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let columns = vec![Column::numeric("x"), Column::label("Label")];
        let rows: Vec<FlowRecord> = (0..n)
            .map(|i| {
                let center = if i % 2 == 0 { 0.0 } else { 10.0 };
                let jitter: f64 = rng.sample(StandardNormal);
                FlowRecord::new(vec![center + 0.5 * jitter], 1)
            })
            .collect();
        let data = Dataset::from_rows(columns, rows);
        let gmms = fit_column_models(&data, 2, seed).unwrap();
        (data, gmms)
    }

    fn desk_config() -> TrainConfig {
        TrainConfig {
            loss_mode: LossMode::Wgan,
            clip_c: 0.1,
            critic_steps: 2,
            d_lr: 1e-3,
            g_lr: 1e-3,
            batch_size: 64,
            epochs: 3,
            z_dim: 8,
            hidden: 16,
            d_hidden: vec![24],
            cat_noise: 0.2,
            use_attention: true,
            seed: 7,
        }
    }

    /// Two-sample KS statistic by a sorted merge sweep.
    fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (n, m) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j) = (0usize, 0usize);
        let mut d = 0.0f64;
        while i < a.len() && j < b.len() {
            let v = a[i].min(b[j]);
            while i < a.len() && a[i] == v {
                i += 1;
            }
            while j < b.len() && b[j] == v {
                j += 1;
            }
            d = d.max((i as f64 / n - j as f64 / m).abs());
        }
        d
    }

    #[test]
    fn critic_weights_stay_clipped_after_every_update() {
        let (data, gmms) = two_mode_dataset(128, 3);
        let cfg = desk_config();
        let mut updates = 0usize;
        let model = train_with_observer(&data, &gmms, &cfg, |critic, _| {
            assert!(critic.max_abs() <= cfg.clip_c + 1e-12, "critic escaped the clip bound");
            updates += 1;
        })
        .unwrap();
        let steps_per_epoch = data.rows.len() / cfg.batch_size;
        assert_eq!(updates, cfg.epochs * steps_per_epoch * cfg.critic_steps);
        assert!(model.discriminator.max_abs() <= cfg.clip_c + 1e-12);
    }

    #[test]
    fn fixed_seed_replays_history_and_samples() {
        let (data, gmms) = two_mode_dataset(128, 5);
        let cfg = desk_config();
        let a = train(&data, &gmms, &cfg).unwrap();
        let b = train(&data, &gmms, &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        let sa = sample_rows(50, &a.generator, &a.gmms, &a.schema, 11);
        let sb = sample_rows(50, &b.generator, &b.gmms, &b.schema, 11);
        assert_eq!(sa.encoded, sb.encoded);
        for (ra, rb) in sa.rows.iter().zip(&sb.rows) {
            assert_eq!(ra.features, rb.features);
        }
    }

    #[test]
    fn history_covers_every_generator_update() {
        let (data, gmms) = two_mode_dataset(150, 9);
        let mut cfg = desk_config();
        cfg.loss_mode = LossMode::Standard;
        cfg.epochs = 2;
        let model = train(&data, &gmms, &cfg).unwrap();
        let steps_per_epoch = 150 / cfg.batch_size;
        assert_eq!(model.loss_history.len(), cfg.epochs * steps_per_epoch);
        for (i, rec) in model.loss_history.iter().enumerate() {
            assert_eq!(rec.step, i);
            assert!(rec.d_loss.is_finite() && rec.g_loss.is_finite());
        }
    }

    #[test]
    fn batch_bigger_than_dataset_is_rejected() {
        let (data, gmms) = two_mode_dataset(32, 1);
        let cfg = desk_config();
        match train(&data, &gmms, &cfg) {
            Err(GanError::BatchTooLarge { batch: 64, rows: 32 }) => {}
            other => panic!("expected BatchTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn benign_rows_are_rejected() {
        let (mut data, gmms) = two_mode_dataset(64, 1);
        data.rows[3].label = 0;
        data.rows[17].label = 0;
        let cfg = desk_config();
        match train(&data, &gmms, &cfg) {
            Err(GanError::NonMaliciousRows { count: 2 }) => {}
            other => panic!("expected NonMaliciousRows, got {other:?}"),
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let columns = vec![Column::numeric("x"), Column::label("Label")];
        let data = Dataset::from_rows(columns, Vec::new());
        let cfg = desk_config();
        match train(&data, &[None], &cfg) {
            Err(GanError::EmptyDataset) => {}
            other => panic!("expected EmptyDataset, got {other:?}"),
        }
    }

    #[test]
    fn runaway_rate_reports_divergence() {
        let (data, gmms) = two_mode_dataset(64, 2);
        let mut cfg = desk_config();
        cfg.g_lr = f64::MAX;
        cfg.epochs = 1;
        match train(&data, &gmms, &cfg) {
            Err(GanError::Diverged { step: 0 }) => {}
            other => panic!("expected Diverged at step 0, got {other:?}"),
        }
    }

    #[test]
    fn standard_mode_trains_without_clipping_bound() {
        let (data, gmms) = two_mode_dataset(128, 13);
        let mut cfg = desk_config();
        cfg.loss_mode = LossMode::Standard;
        cfg.d_lr = 1e-2;
        cfg.g_lr = 1e-2;
        let model = train(&data, &gmms, &cfg).unwrap();
        assert!(model.generator.all_finite());
        assert!(model.discriminator.all_finite());
    }

    #[test]
    fn learned_generator_tracks_a_two_mode_column() {
        let (data, gmms) = two_mode_dataset(1000, 21);
        let holdout: Vec<f64> = {
            let (extra, _) = two_mode_dataset(1000, 22);
            extra.rows.iter().map(|r| r.features[0]).collect()
        };
        let cfg = TrainConfig {
            loss_mode: LossMode::Wgan,
            clip_c: 0.1,
            critic_steps: 3,
            d_lr: 1e-3,
            g_lr: 1e-3,
            batch_size: 100,
            epochs: 60,
            z_dim: 8,
            hidden: 24,
            d_hidden: vec![32],
            cat_noise: 0.2,
            use_attention: true,
            seed: 17,
        };
        let model = train(&data, &gmms, &cfg).unwrap();
        let batch = sample_rows(1000, &model.generator, &model.gmms, &model.schema, 33);
        let generated: Vec<f64> = batch.rows.iter().map(|r| r.features[0]).collect();
        let d = ks_statistic(&generated, &holdout);
        assert!(d < 0.35, "KS distance {d:.3} too large");
    }
}
