use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use interflow::data::{flow_quadruple, write_corpus, generate_synthetic_corpus, Dataset, Split};
use interflow::evaluation::{
    compare_pretrained_vs_scratch, eval_flow, eval_interpolation, flow_for_sequence, low_data_sweep, predict_flow,
    svg_line_chart, FlowEvalSet, InterpEvalSet, Series,
};
use interflow::flowio::{flow_to_color, read_color_frame, read_gray_frame, write_color_png, write_flo, write_rgb_png};
use interflow::model::interpolate_color;
use interflow::training::{Checkpoint, History, TrainOptions, Trainer};
use interflow::{ColorFrame, Head, Network};
use serde::Serialize;

use crate::config::{dump, layered, GenConfig, Overrides, RunConfig, CONFIG_SNAPSHOT};
use crate::{Command, Common, TrainArgs, UsageError};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic { common } => gen_synthetic(&common),
        Command::Pretrain(args) => train(&args, None, Head::Interpolation),
        Command::Finetune { train: args, init } => train(&args, Some(init), Head::Flow),
        Command::Scratch(args) => train(&args, None, Head::Flow),
        Command::EvalInterp { common, checkpoint } => eval_interp(&common, &checkpoint),
        Command::EvalFlow { common, checkpoint } => eval_flow_cmd(&common, &checkpoint),
        Command::Sweep {
            common,
            checkpoint,
            sizes,
            repeats,
            epochs,
        } => sweep(&common, &checkpoint, sizes, repeats, epochs),
        Command::Compare { common, init, epochs } => compare(&common, init, epochs),
        Command::Infer {
            checkpoint,
            out,
            force,
            frames,
        } => infer(&checkpoint, &out, force, &frames),
    }
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    interflow::Error::Config(msg.into()).into()
}

fn check_device(device: &str) -> Result<()> {
    if device != "cpu" {
        return Err(config_err(format!("device {device:?} is not available; only `cpu` is supported")));
    }
    Ok(())
}

/// Create `dir`, refusing a non-empty one unless `force` is set.
fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if !force && dir.is_dir() && std::fs::read_dir(dir)?.next().is_some() {
        return Err(config_err(format!(
            "output directory {} is not empty; pass --force to write into it",
            dir.display()
        )));
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn out_dir(common: &Common, name: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name))
}

fn write(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    write(path, s)
}

fn common_overrides(common: &Common, epochs: Option<usize>) -> Overrides {
    let mut o = Overrides::default();
    if let Some(s) = common.seed {
        o.set("seed", s as i64);
    }
    if let Some(w) = common.workers {
        o.set("workers", w as i64);
    }
    if let Some(d) = &common.data_root {
        o.set("data_root", d.display().to_string());
    }
    if let Some(e) = epochs {
        o.set("schedule.total_epochs", e as i64);
    }
    o
}

fn run_config(common: &Common, defaults: &RunConfig, overrides: Overrides) -> Result<RunConfig> {
    check_device(&common.device)?;
    let cfg = layered(defaults, common.config.as_deref(), overrides.into_table())?;
    cfg.schedule.validate()?;
    if cfg.workers == 0 {
        return Err(config_err("workers must be at least 1"));
    }
    Ok(cfg)
}

fn snapshot(dir: &Path, cfg: &impl Serialize) -> Result<()> {
    write(dir.join(CONFIG_SNAPSHOT), dump(cfg)?)
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    Ok(cfg.data.load(cfg.data_root.as_deref())?)
}

fn log_split(split: &Split) {
    for w in &split.warnings {
        log::warn!("{w}");
    }
    log::info!("{} training and {} validation samples", split.train.len(), split.val.len());
}

fn train_options(cfg: &RunConfig, run_dir: &Path) -> TrainOptions {
    TrainOptions {
        workers: cfg.workers,
        run_dir: Some(run_dir.to_path_buf()),
        max_val_samples: cfg.max_val_samples,
        ..TrainOptions::new(cfg.schedule.clone(), cfg.augment, cfg.seed)
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn require_head(net: &Network, head: Head, command: &str) -> Result<()> {
    if net.head() != head {
        return Err(interflow::Error::State(format!(
            "{command} needs a {head:?} checkpoint, got a {:?} one",
            net.head()
        ))
        .into());
    }
    Ok(())
}

fn gen_synthetic(common: &Common) -> Result<()> {
    check_device(&common.device)?;
    let mut o = Overrides::default();
    if let Some(s) = common.seed {
        o.set("seed", s as i64);
    }
    let cfg: GenConfig = layered(&GenConfig::default(), common.config.as_deref(), o.into_table())?;
    cfg.synthetic.validate()?;
    let out = out_dir(common, "synthetic");
    prepare_out(&out, common.force)?;
    let seqs = generate_synthetic_corpus(&cfg.synthetic, cfg.seed)?;
    let entries = write_corpus(&out, &cfg.corpus, &seqs)?;
    snapshot(&out, &cfg)?;
    log::info!("wrote {} sequences to {}", entries.len(), out.display());
    Ok(())
}

fn train(args: &TrainArgs, init: Option<Option<PathBuf>>, head: Head) -> Result<()> {
    let common = &args.common;
    let defaults = match head {
        Head::Interpolation => RunConfig::default(),
        Head::Flow => RunConfig::flow_defaults(),
    };
    let mut o = common_overrides(common, args.epochs);
    if let Some(Some(p)) = &init {
        o.set("init", p.display().to_string());
    }
    let cfg = run_config(common, &defaults, o)?;
    let name = match (head, &init) {
        (Head::Interpolation, _) => "pretrain",
        (Head::Flow, Some(_)) => "finetune",
        (Head::Flow, None) => "scratch",
    };
    let out = out_dir(common, name);
    prepare_out(&out, common.force || args.resume.is_some())?;
    snapshot(&out, &cfg)?;

    let data = load_data(&cfg)?;
    let split = match head {
        Head::Interpolation => data.interpolation_split(&cfg.data.policies, cfg.data.default_policy, cfg.seed),
        Head::Flow => data.flow_split(cfg.data.flow_val_fraction, cfg.seed),
    };
    log_split(&split);
    let opts = train_options(&cfg, &out);

    let mut trainer = if let Some(path) = &args.resume {
        let ckpt = load_checkpoint(path)?;
        log::info!("resuming after epoch {}", ckpt.epoch);
        Trainer::resume(ckpt, opts)?
    } else {
        let net = match (head, &init) {
            (Head::Flow, Some(_)) => {
                let path = cfg
                    .init
                    .as_ref()
                    .ok_or_else(|| config_err("finetune needs --init or `init` in the config"))?;
                let net = load_checkpoint(path)?.network;
                match net.head() {
                    Head::Interpolation => net.swap_head(cfg.head_seed)?,
                    Head::Flow => net,
                }
            }
            _ => Network::new(cfg.network.spec(head)?, cfg.network.init_seed)?,
        };
        log::info!("{} parameters", net.parameter_count());
        Trainer::new(net, opts)?
    };
    trainer.run(&data, &split.train, &split.val)?;
    trainer.checkpoint().save(out.join("final.ckpt"))?;
    write_json(out.join("history.json"), trainer.history())?;
    if let Some(v) = trainer.history().final_val() {
        println!("final validation {}: {v:.5}", if head == Head::Flow { "EPE" } else { "loss" });
    }
    Ok(())
}

fn eval_interp(common: &Common, checkpoint: &Path) -> Result<()> {
    let cfg = run_config(common, &RunConfig::default(), common_overrides(common, None))?;
    let net = load_checkpoint(checkpoint)?.network;
    require_head(&net, Head::Interpolation, "eval-interp")?;
    let out = out_dir(common, "eval-interp");
    prepare_out(&out, common.force)?;
    snapshot(&out, &cfg)?;
    let data = load_data(&cfg)?;
    let sets: Vec<InterpEvalSet> = data
        .corpora()
        .iter()
        .map(|tag| InterpEvalSet::adjacent(tag.clone(), data.corpus(tag)))
        .collect();
    let report = eval_interpolation(&net, &sets)?;
    write(out.join("interp_report.toml"), report.network.to_kv()?)?;
    write(out.join("blend_report.toml"), report.linear_blend.to_kv()?)?;
    let table = report.to_table();
    write(out.join("interp_table.txt"), &table)?;
    write_jsonl(out.join("interp_samples.jsonl"), &report.samples)?;
    print!("{table}");
    Ok(())
}

fn eval_flow_cmd(common: &Common, checkpoint: &Path) -> Result<()> {
    let cfg = run_config(common, &RunConfig::flow_defaults(), common_overrides(common, None))?;
    let net = load_checkpoint(checkpoint)?.network;
    require_head(&net, Head::Flow, "eval-flow")?;
    let out = out_dir(common, "eval-flow");
    prepare_out(&out, common.force)?;
    snapshot(&out, &cfg)?;
    let data = load_data(&cfg)?;
    let sets: Vec<FlowEvalSet> = data
        .corpora()
        .iter()
        .map(|tag| FlowEvalSet {
            name: tag.clone(),
            data: data.corpus(tag),
        })
        .collect();
    let result = eval_flow(&net, &sets)?;
    write(out.join("flow_report.toml"), result.report.to_kv()?)?;
    let table = result.report.to_table();
    write(out.join("flow_table.txt"), &table)?;
    write_jsonl(out.join("flow_samples.jsonl"), &result.samples)?;

    let vis = out.join("vis");
    std::fs::create_dir_all(&vis)?;
    for (i, seq) in data.sequences.iter().enumerate() {
        let Some(t) = (0..seq.flows.len()).find(|&t| seq.flows[t].is_some()) else {
            continue;
        };
        let gt = seq.flows[t].as_ref().expect("found above");
        let q = flow_quadruple(t, seq.len()).map(|k| &seq.gray[k]);
        let pred = predict_flow(&net, &q)?;
        let max = (0..gt.len())
            .filter(|&k| gt.valid[k])
            .map(|k| gt.u[k].hypot(gt.v[k]))
            .fold(1e-3f32, f32::max);
        write_rgb_png(vis.join(format!("{i:03}_{t:06}_gt.png")), &flow_to_color(gt, Some(max)))?;
        write_rgb_png(vis.join(format!("{i:03}_{t:06}_pred.png")), &flow_to_color(&pred, Some(max)))?;
    }
    print!("{table}");
    Ok(())
}

fn start_network(path: &Path) -> Result<Network> {
    Ok(load_checkpoint(path)?.network)
}

fn sweep(
    common: &Common,
    checkpoint: &Path,
    sizes: Option<Vec<usize>>,
    repeats: Option<usize>,
    epochs: Option<usize>,
) -> Result<()> {
    let mut o = common_overrides(common, epochs);
    if let Some(s) = sizes {
        o.set("sweep.sizes", s.into_iter().map(|n| n as i64).collect::<Vec<_>>());
    }
    if let Some(r) = repeats {
        o.set("sweep.repeats", r as i64);
    }
    o.set("init", checkpoint.display().to_string());
    let cfg = run_config(common, &RunConfig::flow_defaults(), o)?;
    let out = out_dir(common, "sweep");
    prepare_out(&out, common.force)?;
    snapshot(&out, &cfg)?;
    let net = start_network(checkpoint)?;
    let data = load_data(&cfg)?;
    let split = data.flow_split(cfg.data.flow_val_fraction, cfg.seed);
    log_split(&split);
    let result = low_data_sweep(
        &net,
        cfg.head_seed,
        &data,
        &split,
        &cfg.sweep.sizes,
        cfg.sweep.repeats,
        &train_options(&cfg, &out),
    )?;
    write_json(out.join("sweep.json"), &result)?;

    let mut csv = String::from("n_frames,mean_epe,repeat_epe\n");
    let mut requested = cfg.sweep.sizes.clone();
    requested.sort_unstable();
    requested.dedup();
    for n in requested {
        match result.points.iter().find(|p| p.n_frames == n) {
            Some(p) => {
                let reps: Vec<String> = p.repeat_epe.iter().map(|v| format!("{v:.6}")).collect();
                let _ = writeln!(csv, "{n},{:.6},{}", p.mean_epe, reps.join(";"));
            }
            None => {
                let _ = writeln!(csv, "{n},,dropped");
            }
        }
    }
    write(out.join("sweep.csv"), &csv)?;
    let curve = Series {
        name: "fine-tuned".into(),
        points: result.points.iter().map(|p| (p.n_frames as f64, p.mean_epe)).collect(),
        dashed: false,
    };
    let xs = curve.points.iter().map(|p| p.0);
    let (lo, hi) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(0.0, f64::max));
    let full = Series {
        name: format!("all {} pairs", result.full_set_frames),
        points: vec![(lo, result.full_set_epe), (hi, result.full_set_epe)],
        dashed: true,
    };
    write(
        out.join("sweep.svg"),
        svg_line_chart("Validation EPE by training-set size", "training pairs", "EPE (px)", &[curve, full]),
    )?;
    print!("{csv}");
    Ok(())
}

fn compare(common: &Common, init: Option<PathBuf>, epochs: Option<usize>) -> Result<()> {
    let mut o = common_overrides(common, epochs);
    if let Some(p) = &init {
        o.set("init", p.display().to_string());
    }
    let cfg = run_config(common, &RunConfig::flow_defaults(), o)?;
    let path = cfg
        .init
        .clone()
        .ok_or_else(|| config_err("compare needs --init or `init` in the config"))?;
    let out = out_dir(common, "compare");
    prepare_out(&out, common.force)?;
    snapshot(&out, &cfg)?;
    let net = start_network(&path)?;
    let data = load_data(&cfg)?;
    let split = data.flow_split(cfg.data.flow_val_fraction, cfg.seed);
    log_split(&split);
    let cmp = compare_pretrained_vs_scratch(
        &net,
        cfg.head_seed,
        cfg.scratch_seed,
        &data,
        &split,
        &train_options(&cfg, &out),
    )?;
    write_json(out.join("comparison.json"), &cmp)?;
    let curve = |name: &str, h: &History| Series {
        name: name.into(),
        points: h
            .records
            .iter()
            .filter_map(|r| r.val_metric.map(|v| ((r.epoch + 1) as f64, v)))
            .collect(),
        dashed: false,
    };
    write(
        out.join("curves.svg"),
        svg_line_chart(
            "Validation EPE during fine-tuning",
            "epoch",
            "EPE (px)",
            &[curve("pretrained", &cmp.pretrained), curve("from scratch", &cmp.scratch)],
        ),
    )?;
    println!(
        "pretrained {:.4}  scratch {:.4}  scratch/pretrained {:.3}",
        cmp.pretrained_final, cmp.scratch_final, cmp.ratio
    );
    Ok(())
}

fn infer(checkpoint: &Path, out: &Path, force: bool, frames: &[PathBuf]) -> Result<()> {
    let net = start_network(checkpoint)?;
    match net.head() {
        Head::Interpolation => {
            if frames.len() != 4 {
                return Err(UsageError(format!(
                    "interpolation needs exactly 4 frames, got {}",
                    frames.len()
                ))
                .into());
            }
            let inputs = frames
                .iter()
                .map(|p| read_color_frame(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<ColorFrame>>>()?;
            prepare_out(out, force)?;
            let center = interpolate_color(&net, &inputs)?;
            write_color_png(out.join("center.png"), &center)?;
            log::info!("wrote {}", out.join("center.png").display());
        }
        Head::Flow => {
            if frames.len() < 2 {
                return Err(UsageError(format!("flow needs at least 2 frames, got {}", frames.len())).into());
            }
            let planes = frames
                .iter()
                .map(|p| read_gray_frame(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            prepare_out(out, force)?;
            let flows = flow_for_sequence(&net, &planes)?;
            for (t, f) in flows.iter().enumerate() {
                write_flo(out.join(format!("flow_{t:06}.flo")), f)?;
                write_rgb_png(out.join(format!("flow_{t:06}.png")), &flow_to_color(f, None))?;
            }
            log::info!("wrote {} flow fields to {}", flows.len(), out.display());
        }
    }
    Ok(())
}
