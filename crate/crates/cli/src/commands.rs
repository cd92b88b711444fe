use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use sis_core::crf::refine_saliency;
use sis_core::io::{write_npy, write_pnm, ImageBuffer};
use sis_core::metrics::{evaluate, EvalSample, DEFAULT_BETA2, DEFAULT_IOU_THRESHOLDS};
use sis_core::netblocks::{
    dense_block_forward, finite_diff_check, se_forward, se_gate, weighted_cross_entropy, CrossEntropyMap,
    DenseLayerParams, ParamManifest, SeParams, DEFAULT_REDUCTION,
};
use sis_core::pipeline::{reconcile, run_pipeline, PipelineConfig};
use sis_core::slic::{mask_by_saliency, rgb_to_lab, slic_segment};
use sis_core::spectral::InstanceSegmentation;
use sis_core::synth::{synth_fixture, SynthSpec};
use sis_core::{Matrix, Tensor};

use crate::inputs::{
    check_writable, encode_json, encode_labels, encode_map, load_confidences, load_config, load_features, load_image,
    load_k_sidecar, load_labels, load_map, parse_k, sidecar_path, write_all, Confidences,
};
use crate::{CrfArgs, EvalArgs, NetcheckArgs, SegmentArgs, SlicArgs, SynthArgs, TuningArgs};

/// Config file first, then flags on top.
fn tuned_config(t: &TuningArgs) -> Result<PipelineConfig> {
    let mut config = load_config(t.config.as_deref())?;
    if let Some(n) = t.superpixels {
        config.n_superpixels = n;
    }
    if let Some(l) = t.lambda {
        config.lambda = l;
    }
    if let Some(s) = t.sigma2 {
        config.sigma2 = s;
    }
    config.validate()?;
    Ok(config)
}

pub fn segment(a: SegmentArgs) -> Result<()> {
    let mut config = tuned_config(&a.tuning)?;
    if a.refine_crf {
        config.refine_crf = true;
    }
    let k = match (&a.k, &a.k_file) {
        (Some(k), _) => {
            // an explicit flag beats the config file's override
            config.k_override = None;
            parse_k(k)?
        }
        (None, Some(path)) => load_k_sidecar(path)?,
        (None, None) => match config.k_override {
            Some(k) => k,
            None => bail!("no instance count: pass --k, --k-file, or set k_override in the config"),
        },
    };
    let confidences_path = sidecar_path(&a.out);
    check_writable(&a.out)?;
    check_writable(&confidences_path)?;

    let image = load_image(&a.image)?;
    let saliency = load_map(&a.saliency)?;
    let features = load_features(&a.features)?;
    let seg = run_pipeline(&image, &saliency, &features, k, &config)?;
    let k_used = config.effective_k(k);
    info!("segmented {} into {} instances", a.image.display(), seg.instance_count());

    write_all(&[
        (a.out.clone(), encode_labels(seg.height(), seg.width(), seg.labels())?),
        (confidences_path, encode_json(&Confidences::from_segmentation(&seg, k_used))?),
    ])
}

pub fn crf(a: CrfArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    config.validate()?;
    let mut params = config.crf;
    if let Some(iters) = a.iters {
        params.iters = iters;
    }
    params.validate()?;
    check_writable(&a.out)?;
    let image = load_image(&a.image)?;
    let (h, w, _) = image.hwc()?;
    let saliency = reconcile(&load_map(&a.saliency)?, h, w)?;
    let refined = refine_saliency(&saliency, &image, &params, config.crf_max_side)?;
    write_all(&[(a.out.clone(), encode_map(&a.out, &refined)?)])
}

pub fn slic(a: SlicArgs) -> Result<()> {
    let mut config = tuned_config(&a.tuning)?;
    if let Some(c) = a.compactness {
        config.compactness = c;
    }
    config.validate()?;
    check_writable(&a.out)?;
    let mut image = load_image(&a.image)?;
    let (h, w, _) = image.hwc()?;
    if let Some(path) = &a.saliency {
        let saliency = reconcile(&load_map(path)?, h, w)?;
        image = mask_by_saliency(&image, &saliency, config.saliency_threshold)?;
    }
    let part = slic_segment(
        &rgb_to_lab(&image)?,
        config.n_superpixels.min(h * w),
        config.compactness,
        config.slic_iterations,
    )?;
    ensure!(
        part.n_superpixels() <= u16::MAX as usize + 1,
        "{} superpixels do not fit a 16-bit label map",
        part.n_superpixels()
    );
    let labels: Vec<u16> = part.labels().iter().map(|&l| l as u16).collect();
    info!("{} superpixels", part.n_superpixels());
    write_all(&[(a.out.clone(), encode_labels(h, w, &labels)?)])
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: Option<String>,
    prediction: PathBuf,
    ground_truth: PathBuf,
    /// Saliency map scored by maxF and MAE; the predicted foreground when absent.
    saliency: Option<PathBuf>,
    /// Confidences written by `segment`; all instances score 1 when absent.
    confidences: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalManifest {
    images: Vec<ManifestEntry>,
}

fn load_sample(root: &Path, e: &ManifestEntry) -> Result<EvalSample> {
    let (ph, pw, pred) = load_labels(&root.join(&e.prediction))?;
    let (gh, gw, gt) = load_labels(&root.join(&e.ground_truth))?;
    ensure!(
        (ph, pw) == (gh, gw),
        "{}: prediction is {ph}x{pw} but ground truth is {gh}x{gw}",
        e.prediction.display()
    );
    let max = pred.iter().copied().max().unwrap_or(0) as usize;
    let mut scores = vec![1.0; max];
    if let Some(path) = &e.confidences {
        for rec in load_confidences(&root.join(path))?.instances {
            if let Some(slot) = scores.get_mut((rec.label as usize).wrapping_sub(1)) {
                *slot = rec.confidence;
            }
        }
    }
    let saliency = match &e.saliency {
        Some(path) => reconcile(&load_map(&root.join(path))?, ph, pw)?,
        None => Tensor::new(
            vec![ph, pw],
            pred.iter().map(|&l| if l > 0 { 1.0 } else { 0.0 }).collect(),
        )?,
    };
    Ok(EvalSample {
        name: e.name.clone().unwrap_or_else(|| e.prediction.display().to_string()),
        saliency,
        prediction: InstanceSegmentation::new(ph, pw, pred, scores)?,
        ground_truth: InstanceSegmentation::from_labels(gh, gw, gt)?,
    })
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let text = fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let manifest: EvalManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.manifest.display()))?;
    let thresholds = if a.iou.is_empty() {
        DEFAULT_IOU_THRESHOLDS.to_vec()
    } else {
        a.iou.clone()
    };
    if let Some(out) = &a.out {
        check_writable(out)?;
    }
    let root = a.manifest.parent().unwrap_or(Path::new("."));
    let samples = manifest
        .images
        .iter()
        .map(|e| load_sample(root, e))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&samples, &thresholds, DEFAULT_BETA2)?;
    let bytes = encode_json(&report)?;
    match &a.out {
        Some(out) => write_all(&[(out.clone(), bytes)]),
        None => {
            print!("{}", String::from_utf8(bytes)?);
            Ok(())
        }
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        count: a.count,
        height: a.height.unwrap_or(a.size),
        width: a.width.unwrap_or(a.size),
        seed: a.seed,
        kind: a.shape.into(),
    };
    ensure!(a.out_dir.is_dir(), "output directory {} does not exist", a.out_dir.display());
    let f = synth_fixture(&spec)?;
    let (h, w) = (spec.height, spec.width);
    write_all(&[
        (a.out_dir.join("image.ppm"), write_pnm(&ImageBuffer::from_unit_tensor(&f.image, 255)?)),
        (a.out_dir.join("saliency.pgm"), write_pnm(&ImageBuffer::from_unit_tensor(&f.saliency, 255)?)),
        (a.out_dir.join("features.npy"), write_npy(&f.features)),
        (a.out_dir.join("gt.pgm"), encode_labels(h, w, f.ground_truth.labels())?),
        (a.out_dir.join("k.json"), encode_json(&serde_json::json!({ "k": spec.count }))?),
    ])
}

struct CheckLine {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn random_se(rng: &mut ChaCha8Rng, channels: usize, reduction: usize, scale: f64) -> Result<SeParams> {
    let hidden = channels / reduction;
    let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-scale..scale)).collect::<Vec<f64>>();
    Ok(SeParams::new(
        Matrix::from_vec(hidden, channels, draw(hidden * channels))?,
        draw(hidden),
        Matrix::from_vec(channels, hidden, draw(hidden * channels))?,
        draw(channels),
        reduction,
    )?)
}

fn builtin_checks(rng: &mut ChaCha8Rng) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();

    let mut inside = true;
    for _ in 0..1000 {
        let scale = rng.gen_range(0.1..20.0);
        let p = random_se(rng, 32, DEFAULT_REDUCTION, scale)?;
        let x = Tensor::from_fn(vec![3, 3, 32], |_| rng.gen_range(-5.0..5.0));
        inside &= se_gate(&x, &p)?.iter().all(|&g| g > 0.0 && g < 1.0);
    }
    lines.push(CheckLine {
        name: "se-gate-range",
        pass: inside,
        detail: "1000 random inputs".into(),
    });

    let x = Tensor::from_fn(vec![4, 4, 32], |_| rng.gen_range(-5.0..5.0));
    let y = se_forward(&x, &SeParams::zeros(32, DEFAULT_REDUCTION)?)?;
    lines.push(CheckLine {
        name: "se-zero-weights",
        pass: y.data().iter().zip(x.data()).all(|(a, b)| *a == 0.5 * b),
        detail: "output equals 0.5x".into(),
    });

    let mut shapes_ok = true;
    for layers in 0..=5 {
        let (c0, g) = (4, 12);
        let block: Vec<DenseLayerParams> = (0..layers)
            .map(|l| {
                let cin = c0 + l * g;
                DenseLayerParams::new(
                    vec![1.0; cin],
                    vec![0.0; cin],
                    vec![0.0; cin],
                    vec![1.0; cin],
                    Tensor::from_fn(vec![3, 3, cin, g], |_| rng.gen_range(-0.1..0.1)),
                )
            })
            .collect::<sis_core::Result<_>>()?;
        let out = dense_block_forward(&Tensor::from_fn(vec![5, 5, c0], |_| rng.gen::<f64>()), &block)?;
        shapes_ok &= out.shape() == [5, 5, c0 + layers * g];
    }
    lines.push(CheckLine {
        name: "dense-channels",
        pass: shapes_ok,
        detail: "C0 + L*g for L = 0..5".into(),
    });

    let (n, c) = (8, 3);
    let mut yhat = Vec::with_capacity(n * c);
    let mut target = vec![0.0; n * c];
    for i in 0..n {
        let logits: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        yhat.extend(logits.iter().map(|v| v.exp() / z));
        target[i * c + rng.gen_range(0..c)] = 1.0;
    }
    let weights = [1.0, 2.0, 0.5];
    let map = CrossEntropyMap::new(Tensor::new(vec![n, c], target)?, Some(&weights))?;
    let worst = finite_diff_check(&map, &Tensor::new(vec![n, c], yhat)?, 1e-6)?;
    lines.push(CheckLine {
        name: "cross-entropy-gradient",
        pass: worst <= 1e-6,
        detail: format!("max deviation {worst:.2e}"),
    });

    let uniform = Tensor::filled(vec![4, 2], 0.5);
    let onehot = Tensor::from_fn(vec![4, 2], |i| if i % 2 == 0 { 1.0 } else { 0.0 });
    let loss = weighted_cross_entropy(&uniform, &onehot, None)?.loss;
    lines.push(CheckLine {
        name: "cross-entropy-uniform",
        pass: (loss - std::f64::consts::LN_2).abs() <= 1e-12,
        detail: format!("loss {loss}"),
    });
    Ok(lines)
}

fn manifest_checks(a: &NetcheckArgs, rng: &mut ChaCha8Rng) -> Result<Vec<CheckLine>> {
    let Some(path) = &a.params else {
        ensure!(
            a.se_prefix.is_none() && a.dense_prefix.is_none(),
            "--se-prefix and --dense-prefix need --params"
        );
        return Ok(Vec::new());
    };
    let manifest = ParamManifest::load(path)?;
    let mut lines = Vec::new();
    if let Some(prefix) = &a.se_prefix {
        let w1 = manifest.tensor(&format!("{prefix}.w1"))?;
        let &[hidden, channels] = w1.shape() else {
            bail!("{prefix}.w1 must be 2-D, got {:?}", w1.shape());
        };
        ensure!(hidden > 0, "{prefix}.w1 has no rows");
        let p = manifest.se_params(prefix, channels / hidden)?;
        let x = Tensor::from_fn(vec![4, 4, channels], |_| rng.gen_range(-1.0..1.0));
        let gate = se_gate(&x, &p)?;
        lines.push(CheckLine {
            name: "manifest-se",
            pass: gate.iter().all(|&g| g > 0.0 && g < 1.0),
            detail: format!("{prefix}: {channels} channels, reduction {}", p.reduction()),
        });
    }
    if let Some(prefix) = &a.dense_prefix {
        let layers = manifest.dense_layers(prefix)?;
        ensure!(!layers.is_empty(), "no layers named {prefix}.0.* in the manifest");
        let c0 = layers[0].in_channels();
        let out = dense_block_forward(&Tensor::from_fn(vec![4, 4, c0], |_| rng.gen::<f64>()), &layers)?;
        let expected = c0 + layers.iter().map(|l| l.growth()).sum::<usize>();
        lines.push(CheckLine {
            name: "manifest-dense",
            pass: out.shape()[2] == expected,
            detail: format!("{prefix}: {} layers, {} output channels", layers.len(), out.shape()[2]),
        });
    }
    Ok(lines)
}

pub fn netcheck(a: NetcheckArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut lines = builtin_checks(&mut rng)?;
    lines.extend(manifest_checks(&a, &mut rng)?);
    for l in &lines {
        println!("{} {} {}", if l.pass { "ok" } else { "FAILED" }, l.name, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    ensure!(failed == 0, "{failed} netblock checks failed");
    Ok(())
}
