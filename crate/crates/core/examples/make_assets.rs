//! Regenerates the files under `assets/`: the default basis model fitted on
//! the synthetic darkening task, its enhancement config, an example fit
//! config and the embedding fixtures.
//!
//! ```text
//! cargo run --release -p wavelut --example make_assets -- [assets-dir]
//! ```

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavelut::fit::{fit_basis_model, synthetic_pairs, synthetic_training_set, Degradation, FitConfig};
use wavelut::lattice::io::save_wlut4d;
use wavelut::lattice::{Lattice4D, MergeMode};
use wavelut::losses::{varpi_from_embeddings, write_embeddings, EmbeddingSource, EmbeddingVector};
use wavelut::metrics::psnr;
use wavelut::pipeline::{enhance_clip, ClipSequence, EnhanceConfig, Enhancer, DEFAULT_N};
use wavelut::prior::{save_predictor_params, LinearMap, PredictorParams};

const BASES: usize = 3;
const EMBEDDING_LEN: usize = 512;

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn main() -> Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "assets".into()));
    let default_dir = root.join("default");
    std::fs::create_dir_all(&default_dir)?;
    std::fs::create_dir_all(root.join("embeddings"))?;

    let fit_cfg = FitConfig {
        steps: 300,
        warmup_steps: 600,
        batch_frames: 4,
        crop: 96,
        warmup_crop: 64,
        ..FitConfig::default()
    };
    write_json(&root.join("fit.json"), &fit_cfg)?;
    fit_default_model(&default_dir, &fit_cfg)?;
    write_embedding_fixtures(&root.join("embeddings").join("fixtures.emb"))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Starting bases: the identity and two brightening tone curves.
fn initial_bases() -> Result<Vec<Lattice4D>> {
    let axes = Lattice4D::uniform_axes(DEFAULT_N)?;
    let curve = |gamma: f32| {
        Lattice4D::from_fn(axes.clone(), move |r, g, b, _| [r.powf(gamma), g.powf(gamma), b.powf(gamma)])
    };
    Ok(vec![Lattice4D::identity(DEFAULT_N)?, curve(0.7)?, curve(0.45)?])
}

fn fit_default_model(dir: &Path, cfg: &FitConfig) -> Result<()> {
    let degradation = Degradation::default();
    let train = synthetic_training_set(8, 96, 96, degradation, 101)?;
    let equal = vec![1.0 / BASES as f32; BASES];
    let predictor = PredictorParams::new(
        LinearMap::zeros_with_bias(equal.clone())?,
        LinearMap::zeros_with_bias(equal)?,
    )?;
    let start = Instant::now();
    let out = fit_basis_model(&initial_bases()?, &predictor, MergeMode::Mean, &train, cfg)?;
    println!(
        "basis fit: loss {:.4} -> {:.4} in {:.1} s",
        out.initial_loss,
        out.best_loss,
        start.elapsed().as_secs_f64()
    );

    let mut names = Vec::new();
    for (i, lut) in out.bases.iter().enumerate() {
        let name = format!("basis_{i}.wlut4d");
        save_wlut4d(lut, dir.join(&name))?;
        names.push(PathBuf::from(name));
    }
    save_predictor_params(&out.predictor, dir.join("predictor.json"))?;
    let enhance = EnhanceConfig {
        basis_luts: names,
        predictor_params: Some("predictor.json".into()),
        n: DEFAULT_N,
        merge_mode: MergeMode::Mean,
        ..EnhanceConfig::default()
    };
    write_json(&dir.join("enhance.json"), &enhance)?;

    // Held-out check of the shipped model through the enhancement pipeline.
    let test = synthetic_pairs(4, 96, 96, degradation, 202)?;
    let (clean, dark): (Vec<_>, Vec<_>) = test.into_iter().unzip();
    let enhancer = Enhancer::from_config(&EnhanceConfig::load(dir.join("enhance.json"))?)?;
    let (enhanced, _) = enhance_clip(&ClipSequence::new(dark.clone(), 30.0)?, &enhancer)?;
    let mean_psnr = |frames: &[wavelut::Frame]| -> Result<f64> {
        let mut sum = 0.0;
        for (a, b) in frames.iter().zip(&clean) {
            sum += psnr(a, b, 1.0)?;
        }
        Ok(sum / clean.len() as f64)
    };
    println!(
        "held-out PSNR: darkened {:.2} dB, enhanced {:.2} dB",
        mean_psnr(&dark)?,
        mean_psnr(enhanced.frames())?
    );
    Ok(())
}

fn unit(v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Synthetic stand-ins for encoder outputs: two prompt vectors and image
/// vectors built as noisy mixtures of them, so the similarities differ.
fn write_embedding_fixtures(path: &Path) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut gaussian = || -> Vec<f32> {
        (0..EMBEDDING_LEN)
            .map(|_| {
                let (u, v): (f32, f32) = (rng.random_range(1e-7..1.0), rng.random());
                (-2.0 * u.ln()).sqrt() * (std::f32::consts::TAU * v).cos()
            })
            .collect()
    };
    let (t1, t2) = (unit(gaussian()), unit(gaussian()));
    let mut mix = |a: f32, b: f32| -> Vec<f32> {
        let noise = unit(gaussian());
        unit((0..EMBEDDING_LEN).map(|i| a * t1[i] + b * t2[i] + noise[i]).collect())
    };
    let reference = mix(0.9, 0.8);
    let enhanced = mix(0.6, 0.5);
    let low_light = mix(0.1, 0.2);

    let text = |name: &str, v: &[f32]| EmbeddingVector::new(name, v.to_vec(), EmbeddingSource::Text);
    let image = |name: &str, v: Vec<f32>| EmbeddingVector::new(name, v, EmbeddingSource::Image);
    let items = vec![
        text("high light image", &t1)?,
        text("clean image", &t2)?,
        image("reference", reference)?,
        image("enhanced", enhanced)?,
        image("low light", low_light)?,
    ];
    write_embeddings(&mut BufWriter::new(File::create(path)?), &items)?;
    let varpi = varpi_from_embeddings(&items[2], &items[3], &items[0], &items[1])?;
    println!("embedding fixtures: varpi(reference, enhanced) = {varpi:.4}");
    Ok(())
}
