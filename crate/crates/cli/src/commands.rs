use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use nnnf_core::channels::{compute_channels, dump_channels};
use nnnf_core::detect::{detect_with_stats, read_detections, write_detections};
use nnnf_core::eval::{apply_min_height, format_lamr, load_annotations, roc, write_curve, write_plot_data};
use nnnf_core::featpool::gen_pool;
use nnnf_core::synth::{self, average_positive_channels, sidf_class_fractions, ternary_from_average, SceneParams};
use nnnf_core::train::{self, feature_usage, non_neighboring_fraction, positive_cells, train_with_mining, write_trace};
use nnnf_core::{BoostedModel, Error, FeatureKind, FeaturePool, Result, RunConfig};

use crate::data::{self, io_error};
use crate::{base_config, Cli, Command, ScanFlags};

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = base_config(cli)?;
    match &cli.command {
        Command::Pool { out } => cmd_pool(&cfg, out),
        Command::Train(a) => {
            if let Some(r) = &a.rounds {
                cfg.set("train.rounds", r)?;
                cfg.validate()?;
            }
            cmd_train(&cfg, a)
        }
        Command::Detect(a) => {
            apply_scan(&mut cfg, &a.scan)?;
            if let Some(o) = a.nms_overlap {
                cfg.set("detect.nms_overlap", &o.to_string())?;
            }
            cfg.validate()?;
            cmd_detect(&cfg, a)
        }
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Synth(a) => cmd_synth(cli.seed.unwrap_or(cfg.train.seed), a),
        Command::AnalyzeSidf(a) => cmd_analyze(&cfg, a),
        Command::Bench(a) => {
            apply_scan(&mut cfg, &a.scan)?;
            cfg.validate()?;
            cmd_bench(&cfg, a)
        }
    }
}

fn apply_scan(cfg: &mut RunConfig, f: &ScanFlags) -> Result<()> {
    if let Some(v) = f.stride {
        cfg.set("detect.stride", &v.to_string())?;
    }
    if let Some(v) = f.scales_per_octave {
        cfg.set("detect.scales_per_octave", &v.to_string())?;
    }
    if let Some(v) = f.upsample_octaves {
        cfg.set("detect.upsample_octaves", &v.to_string())?;
    }
    if let Some(v) = f.threshold {
        cfg.detect.accept_threshold = v;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

/// Run `f` against the file at `path`, or stdout when there is none.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(p, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

fn cmd_pool(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pool = gen_pool(&cfg.pool)?;
    pool.save(out)?;
    println!("{}", describe_pool(&pool));
    Ok(())
}

fn describe_pool(pool: &FeaturePool) -> String {
    let mut counts = nnnf_core::featpool::KindCounts::default();
    for d in &pool.descriptors {
        *counts.get_mut(d.kind()) += 1;
    }
    format!("pool descriptors={} {}", pool.len(), describe_counts(&counts))
}

fn describe_counts(c: &nnnf_core::featpool::KindCounts) -> String {
    [
        FeatureKind::LocalMean,
        FeatureKind::NeighborDiff,
        FeatureKind::Sidf,
        FeatureKind::Ssf,
    ]
    .iter()
    .map(|&k| format!("{}={}", k.name(), c.get(k)))
    .collect::<Vec<_>>()
    .join(" ")
}

fn cmd_train(cfg: &RunConfig, a: &crate::TrainArgs) -> Result<()> {
    let positives: Vec<_> = data::load_dataset(&a.data)?.into_iter().map(|(_, i)| i).collect();
    let mut negatives = positives.clone();
    if let Some(dir) = &a.negatives {
        negatives.extend(data::load_negatives(dir)?);
    }
    let pool = match &a.pool {
        Some(p) => FeaturePool::load(p)?,
        None => gen_pool(&cfg.pool)?,
    };
    let out = train_with_mining(&positives, &negatives, &pool, &cfg.train)?;
    out.model.save(&a.out)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| a.out.with_extension("trace.csv"));
    with_output(Some(&trace_path), |w| write_trace(w, &out.trace))?;
    let (_, distinct) = feature_usage(&out.model);
    println!(
        "model trees={} used {} non_neighboring_fraction={:.4}",
        out.model.trees.len(),
        describe_counts(&distinct),
        non_neighboring_fraction(&distinct)
    );
    Ok(())
}

fn cmd_detect(cfg: &RunConfig, a: &crate::DetectArgs) -> Result<()> {
    let model = BoostedModel::load(&a.model)?;
    let inputs = data::expand_inputs(&a.inputs)?;
    let mut rows = Vec::new();
    for (name, path) in &inputs {
        let img = nnnf_core::image::decode_image(path)?;
        if let Some(dir) = &a.dump_channels {
            let stem = Path::new(name).file_stem().unwrap_or_default();
            dump_channels(&compute_channels(&img, &model.channel_config), dir.join(stem))?;
        }
        let (dets, _) = detect_with_stats(&model, &img, &cfg.detect)?;
        rows.extend(nnnf_core::nms(&dets, cfg.nms_overlap).into_iter().map(|d| (name.clone(), d)));
    }
    with_output(a.out.as_deref(), |w| write_detections(w, &rows))
}

fn cmd_eval(cfg: &RunConfig, a: &crate::EvalArgs) -> Result<()> {
    let dets = read_detections(&a.detections)?;
    let gts = load_annotations(&a.annotations)?;
    let min_height = a.min_height.or(cfg.eval_min_height);
    let (dets, gts) = match min_height {
        Some(h) => apply_min_height(&dets, &gts, h),
        None => (dets, gts),
    };
    let images: Vec<String> = match &a.images {
        Some(dir) => data::list_images(dir)?
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        None => Vec::new(),
    };
    let curve = roc(&dets, &gts, &images, a.iou.unwrap_or(cfg.eval_iou))?;
    if let Some(p) = &a.plot_data {
        with_output(Some(p), |w| write_plot_data(w, &curve))?;
    }
    if let Some(p) = &a.out {
        with_output(Some(p), |w| write_curve(w, &curve))?;
    }
    println!("{}", format_lamr(curve.lamr));
    Ok(())
}

fn cmd_synth(seed: u64, a: &crate::SynthArgs) -> Result<()> {
    let base = SceneParams {
        width: a.width,
        height: a.height,
        ..SceneParams::default()
    };
    let scenes = synth::gen_dataset(seed, a.count, a.max_targets, &base)?;
    synth::write_dataset(&a.out_dir, &scenes)?;
    let boxes: usize = scenes.iter().map(|s| s.boxes.len()).sum();
    println!("synth scenes={} boxes={} dir={}", scenes.len(), boxes, a.out_dir.display());
    Ok(())
}

fn cmd_analyze(cfg: &RunConfig, a: &crate::AnalyzeArgs) -> Result<()> {
    let model = BoostedModel::load(&a.model)?;
    let images: Vec<_> = data::load_dataset(&a.data)?.into_iter().map(|(_, i)| i).collect();
    let tcfg = train::TrainConfig {
        template: model.template,
        cell_size: model.cell_size,
        channel_config: model.channel_config,
        ..cfg.train.clone()
    };
    let cells = positive_cells(&images, &tcfg)?;
    let tm = ternary_from_average(&average_positive_channels(&cells)?)?;
    let descriptors: Vec<_> = if a.all_candidates {
        model.pool.descriptors.iter().collect()
    } else {
        model.used_features().into_iter().map(|i| &model.pool.descriptors[i]).collect()
    };
    let (f, n) = sidf_class_fractions(descriptors, &tm);
    if n == 0 {
        return Err(Error::EmptyInput("model has no SIDF features".into()));
    }
    with_output(a.out.as_deref(), |w| {
        writeln!(w, "class,percent,count")?;
        for (name, frac) in ["CI", "BP", "O"].iter().zip(f) {
            writeln!(w, "{name},{:.2},{}", frac * 100.0, (frac * n as f64).round() as usize)?;
        }
        Ok(())
    })
}

fn cmd_bench(cfg: &RunConfig, a: &crate::BenchArgs) -> Result<()> {
    let mut model = BoostedModel::load(&a.model)?;
    if a.no_cascade {
        model = model.without_cascade();
    }
    if a.repeats == 0 {
        return Err(Error::InvalidArgument("--repeats must be positive".into()));
    }
    let images = data::load_images(&a.inputs)?;
    let mut hist = vec![0u64; model.trees.len() + 1];
    let mut windows = 0u64;
    let t0 = Instant::now();
    for _ in 0..a.repeats {
        let stats: Vec<_> = images
            .par_iter()
            .map(|(_, img)| detect_with_stats(&model, img, &cfg.detect).map(|(_, s)| s))
            .collect::<Result<_>>()?;
        for s in stats {
            windows += s.windows;
            for (h, v) in hist.iter_mut().zip(&s.depth_histogram) {
                *h += v;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64().max(1e-9);
    let n_images = images.len() * a.repeats;
    println!(
        "bench images={} windows={} seconds={:.3} images_per_s={:.3} windows_per_s={:.1} cascade={}",
        n_images,
        windows,
        secs,
        n_images as f64 / secs,
        windows as f64 / secs,
        !a.no_cascade
    );
    println!("depth,windows");
    for (d, c) in hist.iter().enumerate() {
        if *c > 0 {
            println!("{},{}", d, c);
        }
    }
    Ok(())
}
