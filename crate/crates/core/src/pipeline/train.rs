use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::assemble::{apply_ablation, extract_features, fit_codebook, to_sample, FeatureScaler, ProviderSet};
use super::checkpoint::Checkpoint;
use super::config::PipelineConfig;
use super::format::{Dataset, VideoRecord};
use crate::error::{Error, Result};
use crate::sequence_model::{loss_and_grad, AdamState, ModelDims, ModelParams, SequenceSample};

/// Model, optimizer and generator after fitting.
#[derive(Debug, Clone)]
pub struct Fit {
    pub params: ModelParams,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn model_dims(cfg: &PipelineConfig, classes: usize) -> ModelDims {
    ModelDims {
        input_dim: cfg.person_dim(),
        descriptor_dim: cfg.descriptor_dim(),
        sub_hidden: cfg.model.sub_hidden,
        fusion_hidden: cfg.model.fusion_hidden,
        persons: cfg.persons,
        classes,
        share_sub: cfg.model.share_sub,
    }
}

/// Initializes a model from `cfg.seed` and runs `cfg.train.epochs` epochs
/// of shuffled minibatch Adam.
pub fn fit_samples(samples: &[SequenceSample], dims: ModelDims, cfg: &PipelineConfig) -> Result<Fit> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let finite = samples.iter().flat_map(|s| s.segments.iter().flatten()).all(|seg| {
        seg.descriptor.iter().chain(seg.persons.iter().flatten().flatten()).all(|v| v.is_finite())
    });
    if !finite {
        return Err(Error::Numeric("non-finite value in the training inputs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(dims, &cfg.model.init, &mut rng)?;
    let mut adam = AdamState::new(&params, cfg.optimizer);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.train.epochs);
    for epoch in 0..cfg.train.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.train.batch_size) {
            let batch: Vec<SequenceSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (loss, grads) = loss_and_grad(&params, &batch, cfg.train.lambda_loss)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss became {loss} in epoch {}", epoch + 1)));
            }
            adam.step(&mut params, &grads)?;
            total += loss * chunk.len() as f64;
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!("parameters diverged in epoch {}", epoch + 1)));
        }
        let mean = total / samples.len() as f64;
        log::info!("epoch {}: loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
    }
    Ok(Fit {
        params,
        adam,
        rng,
        epoch_losses,
    })
}

/// Fits the codebook, scaler and model on `data` and packs a checkpoint.
pub fn train(data: &Dataset, cfg: &PipelineConfig, providers: &ProviderSet) -> Result<Checkpoint> {
    cfg.validate()?;
    if data.classes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 2 classes, found {}",
            data.classes.len()
        )));
    }
    if data.records.is_empty() {
        return Err(Error::InvalidArgument("no training records".into()));
    }
    let features = data
        .records
        .iter()
        .map(|rec| extract_features(rec, cfg, providers.for_record(rec)?.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let codebook = fit_codebook(&features, cfg)?;
    let mut samples = features
        .iter()
        .map(|f| to_sample(f, &codebook, cfg))
        .collect::<Result<Vec<_>>>()?;
    let scaler = if cfg.train.standardize {
        FeatureScaler::fit(&samples, cfg.person_dim(), cfg.descriptor_dim())
    } else {
        FeatureScaler::identity(cfg.person_dim(), cfg.descriptor_dim())
    };
    for s in &mut samples {
        scaler.apply(s);
        apply_ablation(s, cfg.ablation);
    }
    let fit = fit_samples(&samples, model_dims(cfg, data.classes.len()), cfg)?;
    Ok(Checkpoint {
        config: cfg.clone(),
        classes: data.classes.clone(),
        codebook,
        scaler,
        params: fit.params,
        adam: fit.adam,
        rng: fit.rng,
        epoch_losses: fit.epoch_losses,
    })
}

impl Checkpoint {
    /// Builds the model input for `rec` exactly as training did.
    pub fn prepare(&self, rec: &VideoRecord, providers: &ProviderSet) -> Result<SequenceSample> {
        let features = extract_features(rec, &self.config, providers.for_record(rec)?.as_ref())?;
        let mut s = to_sample(&features, &self.codebook, &self.config)?;
        self.scaler.apply(&mut s);
        apply_ablation(&mut s, self.config.ablation);
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence_model::testutil::{random_sample, tiny_dims};

    #[test]
    fn loss_falls_between_epochs() {
        let dims = tiny_dims(true);
        let samples: Vec<SequenceSample> = (0..8).map(|i| random_sample(&dims, 3, i % 3, i as u64)).collect();
        let mut cfg = PipelineConfig::desk();
        cfg.train.epochs = 2;
        cfg.train.batch_size = 4;
        cfg.optimizer.lr = 1e-2;
        let fit = fit_samples(&samples, dims, &cfg).unwrap();
        assert_eq!(fit.epoch_losses.len(), 2);
        assert!(fit.epoch_losses[1] < fit.epoch_losses[0], "{:?}", fit.epoch_losses);
    }

    #[test]
    fn fitting_is_deterministic() {
        let dims = tiny_dims(false);
        let samples: Vec<SequenceSample> = (0..6).map(|i| random_sample(&dims, 2, i % 2, 100 + i as u64)).collect();
        let mut cfg = PipelineConfig::desk();
        cfg.train.epochs = 3;
        cfg.train.batch_size = 4;
        let a = fit_samples(&samples, dims, &cfg).unwrap();
        let b = fit_samples(&samples, dims, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        assert_eq!(a.rng, b.rng);
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let dims = tiny_dims(true);
        let mut samples = vec![random_sample(&dims, 2, 0, 1)];
        samples[0].segments[0].as_mut().unwrap().descriptor[0] = f64::INFINITY;
        let cfg = PipelineConfig { train: crate::pipeline::TrainConfig { epochs: 1, ..Default::default() }, ..PipelineConfig::desk() };
        assert!(matches!(fit_samples(&samples, dims, &cfg), Err(Error::Numeric(_))));
    }
}
