use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use csireid::csi::{parse_log, write_log, Condition, CsiLog};
use csireid::mlp::{
    self, load_model, save_model, write_history_csv, MlpArchitecture, MlpModel, TrainConfig,
};
use csireid::reid::{
    self, evaluate, probe_score, split, write_cmc_csv, write_cmc_svg, write_report_csv,
    Aggregation, EvalReport, SplitSpec,
};
use csireid::{FeatureMode, FeatureSet, SynthesisConfig};

use crate::failure::{CliResult, Failure};
use crate::{EvalArgs, GenerateArgs, PredictArgs, SplitOpts, TrainArgs, TrainOpts};

/// Writes every output only after all of them have been produced in memory.
fn write_outputs(outputs: Vec<(PathBuf, Vec<u8>)>) -> CliResult<()> {
    for (path, bytes) in outputs {
        std::fs::write(&path, bytes)
            .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn read_log(path: &Path) -> CliResult<CsiLog> {
    let file = File::open(path)
        .map_err(|e| Failure::data(format!("cannot open {}: {e}", path.display())))?;
    parse_log(&mut BufReader::new(file))
        .map_err(|e| Failure::from(e).context(format!("reading {}", path.display())))
}

fn read_model(path: &Path) -> CliResult<MlpModel> {
    let file = File::open(path)
        .map_err(|e| Failure::data(format!("cannot open {}: {e}", path.display())))?;
    load_model(&mut BufReader::new(file))
        .map_err(|e| Failure::from(e).context(format!("reading {}", path.display())))
}

fn feature_mode(name: &str) -> CliResult<FeatureMode> {
    FeatureMode::from_name(name)
        .ok_or_else(|| Failure::usage(format!("unknown feature mode {name:?} (mean, per-subcarrier)")))
}

fn aggregation(name: &str) -> CliResult<Aggregation> {
    Aggregation::from_name(name)
        .ok_or_else(|| Failure::usage(format!("unknown aggregation {name:?} (mean, vote)")))
}

/// Feature mode whose dimension on `log`'s geometry matches the model input.
fn mode_for_model(model: &MlpModel, log: &CsiLog) -> CliResult<FeatureMode> {
    let g = log.geometry;
    [FeatureMode::MeanBroadcast, FeatureMode::PerSubcarrier]
        .into_iter()
        .find(|m| m.dim(g.n_pairs(), g.n_subcarriers) == model.input_dim())
        .ok_or_else(|| {
            Failure::data(format!(
                "model expects {} features but data geometry {g} gives {} (mean) or {} (per-subcarrier)",
                model.input_dim(),
                FeatureMode::MeanBroadcast.dim(g.n_pairs(), g.n_subcarriers),
                FeatureMode::PerSubcarrier.dim(g.n_pairs(), g.n_subcarriers),
            ))
        })
}

fn parse_counts(text: &str, what: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| Failure::usage(format!("{what}: {s:?} is not a positive integer")))
        })
        .collect()
}

fn synthesis_config(a: &GenerateArgs) -> CliResult<SynthesisConfig> {
    let mut cfg = SynthesisConfig::default();
    let mut set = |key: &str, value: Option<String>| -> CliResult<()> {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
        Ok(())
    };
    set("identities", a.identities.map(|v| v.to_string()))?;
    set("conditions", a.conditions.clone())?;
    set("acquisitions", a.acquisitions.map(|v| v.to_string()))?;
    set("packets", a.packets.map(|v| v.to_string()))?;
    set("duration_s", a.duration_s.map(|v| v.to_string()))?;
    set("carrier_hz", a.carrier_hz.map(|v| v.to_string()))?;
    set("subcarrier_spacing_hz", a.subcarrier_spacing_hz.map(|v| v.to_string()))?;
    set("jitter_rad", a.jitter_rad.map(|v| v.to_string()))?;
    set("noise_power", a.noise_power.map(|v| v.to_string()))?;
    set("estimation_error_variance", a.estimation_error_variance.map(|v| v.to_string()))?;
    set("seed", a.seed.map(|v| v.to_string()))?;
    set("n_tx", a.n_tx.map(|v| v.to_string()))?;
    set("n_rx", a.n_rx.map(|v| v.to_string()))?;
    set("n_subcarriers", a.n_subcarriers.map(|v| v.to_string()))?;
    set("pilots", a.pilots.map(|v| v.to_string()))?;
    set("pilot_power", a.pilot_power.map(|v| v.to_string()))?;
    set("pose_delay_jitter_ns", a.pose_delay_jitter_ns.map(|v| v.to_string()))?;
    set("pose_gain_jitter", a.pose_gain_jitter.map(|v| v.to_string()))?;
    if !a.no_empty && !cfg.conditions.contains(&Condition::Empty) {
        cfg.conditions.insert(0, Condition::Empty);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let cfg = synthesis_config(a)?;
    let log = csireid::generate_dataset(&cfg)?;
    let mut bytes = Vec::new();
    write_log(&log, &mut bytes)?;
    write_outputs(vec![(a.out.clone(), bytes)])?;
    println!(
        "wrote {} records ({}) to {}",
        log.record_count(),
        log.geometry,
        a.out.display()
    );
    for (c, n) in log.condition_counts() {
        println!("  {:<16} {n}", c.name());
    }
    Ok(())
}

fn train_config(t: &TrainOpts, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        seed,
        shuffle: !t.no_shuffle,
        patience: t.patience,
        learning_rate: t.learning_rate,
    }
}

fn hidden_dims(t: &TrainOpts) -> CliResult<[usize; 2]> {
    let dims = parse_counts(&t.hidden, "--hidden")?;
    <[usize; 2]>::try_from(dims)
        .map_err(|_| Failure::usage("--hidden takes exactly two widths, e.g. 128,64"))
}

fn split_spec(s: &SplitOpts) -> SplitSpec {
    SplitSpec {
        train_fraction: s.train_fraction,
        seed: s.seed,
    }
}

/// Features of `log`, limited to `--packets-per-id`, and their train /
/// validation split.
fn prepared(
    log: &CsiLog,
    mode: FeatureMode,
    s: &SplitOpts,
) -> CliResult<(FeatureSet, FeatureSet)> {
    let mut data = FeatureSet::from_log(log, mode)?;
    if let Some(n) = s.packets_per_id {
        if n == 0 {
            return Err(Failure::usage("--packets-per-id must be >= 1"));
        }
        data = data.limit_packets_per_identity(n);
    }
    let (t, v) = split(&data, &split_spec(s))?;
    Ok((data.subset(&t), data.subset(&v)))
}

fn fit(
    train_set: &FeatureSet,
    arch: MlpArchitecture,
    t: &TrainOpts,
    seed: u64,
) -> CliResult<(MlpModel, mlp::TrainHistory)> {
    let cfg = train_config(t, seed);
    cfg.validate()?;
    let mut model = MlpModel::init(arch, seed)?;
    let history = mlp::train(&mut model, &train_set.x, &train_set.labels, &cfg)?;
    Ok((model, history))
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let mode = feature_mode(&a.feature_mode)?;
    let hidden = hidden_dims(&a.train)?;
    train_config(&a.train, a.split.seed).validate()?;
    let log = read_log(&a.data)?;
    let (train_set, _) = prepared(&log, mode, &a.split)?;
    let arch = MlpArchitecture::new(train_set.dim(), train_set.n_classes()).with_hidden(hidden);
    let (model, history) = fit(&train_set, arch, &a.train, a.split.seed)?;

    let mut model_bytes = Vec::new();
    save_model(&model, &mut model_bytes)?;
    let mut outputs = vec![(a.model.clone(), model_bytes)];
    if let Some(path) = &a.history {
        let mut csv = Vec::new();
        write_history_csv(&history, &mut csv).map_err(Failure::data)?;
        outputs.push((path.clone(), csv));
    }
    write_outputs(outputs)?;

    let last = history.last().expect("at least one epoch");
    println!(
        "trained on {} packets ({} classes, {} features, {}) for {} epochs: loss {:.6}, train_acc {:.4}",
        train_set.len(),
        model.n_classes(),
        model.input_dim(),
        mode.name(),
        history.epochs.len(),
        last.loss,
        last.train_acc
    );
    println!("wrote model to {}", a.model.display());
    Ok(())
}

fn report_bytes(report: &EvalReport) -> CliResult<(Vec<u8>, Vec<u8>)> {
    let mut r = Vec::new();
    let mut c = Vec::new();
    write_report_csv(report, &mut r).map_err(Failure::data)?;
    write_cmc_csv(report, &mut c).map_err(Failure::data)?;
    Ok((r, c))
}

fn summary(report: &EvalReport) -> String {
    format!(
        "rank1 {:.4} rank5 {:.4} rank10 {:.4} val_acc {:.4} n_probes {}",
        report.rank_k[&1],
        report.rank_k[&5],
        report.rank_k[&10],
        report.val_accuracy.unwrap_or(f64::NAN),
        report.n_probes
    )
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let agg = aggregation(&a.aggregate)?;
    if a.packets_per_probe == 0 {
        return Err(Failure::usage("--packets-per-probe must be >= 1"));
    }
    if let Some(sweep) = &a.sweep {
        return eval_sweep(a, &parse_counts(sweep, "--sweep")?, agg);
    }
    let model_path = a
        .model
        .as_ref()
        .ok_or_else(|| Failure::usage("eval needs --model (or --sweep)"))?;
    let on_all = match a.on.as_str() {
        "validation" => false,
        "all" => true,
        other => return Err(Failure::usage(format!("--on takes validation or all, not {other:?}"))),
    };
    let model = read_model(model_path)?;
    let log = read_log(&a.data)?;
    let mode = mode_for_model(&model, &log)?;
    let target = if on_all {
        let data = FeatureSet::from_log(&log, mode)?;
        match a.split.packets_per_id {
            Some(n) => data.limit_packets_per_identity(n),
            None => data,
        }
    } else {
        prepared(&log, mode, &a.split)?.1
    };
    let report = evaluate(&model, &target, a.packets_per_probe, agg)?;

    let (r, c) = report_bytes(&report)?;
    let mut outputs = vec![(a.report.clone(), r), (a.cmc.clone(), c)];
    if let Some(svg) = &a.svg {
        let mut buf = Vec::new();
        let title = format!("CMC, {} packet(s) per probe", a.packets_per_probe);
        write_cmc_svg(&report, &title, &mut buf).map_err(Failure::data)?;
        outputs.push((svg.clone(), buf));
    }
    write_outputs(outputs)?;
    println!("{}", summary(&report));
    Ok(())
}

/// One freshly trained model per packets-per-id value, each scored on its
/// own validation split.
fn eval_sweep(a: &EvalArgs, counts: &[usize], agg: Aggregation) -> CliResult<()> {
    let hidden = hidden_dims(&a.train)?;
    train_config(&a.train, a.split.seed).validate()?;
    let template = a.model.as_deref().map(read_model).transpose()?;
    let log = read_log(&a.data)?;
    let mode = match &template {
        Some(m) => mode_for_model(m, &log)?,
        None => feature_mode(&a.feature_mode)?,
    };
    if !a.out_dir.is_dir() {
        return Err(Failure::data(format!(
            "output directory {} does not exist",
            a.out_dir.display()
        )));
    }

    let mut outputs = Vec::new();
    let mut table = String::from("packets,val_acc,rank1,rank5,rank10,n_probes\n");
    for &n in counts {
        let opts = SplitOpts {
            packets_per_id: Some(n),
            train_fraction: a.split.train_fraction,
            seed: a.split.seed,
        };
        let (train_set, val_set) = prepared(&log, mode, &opts)?;
        let arch = match &template {
            Some(m) => MlpArchitecture {
                n_classes: m.n_classes().max(train_set.n_classes()),
                ..m.arch.clone()
            },
            None => MlpArchitecture::new(train_set.dim(), train_set.n_classes()).with_hidden(hidden),
        };
        let (model, _) = fit(&train_set, arch, &a.train, a.split.seed)?;
        let report = evaluate(&model, &val_set, a.packets_per_probe, agg)?;
        let (r, c) = report_bytes(&report)?;
        outputs.push((a.out_dir.join(format!("report_{n}.csv")), r));
        outputs.push((a.out_dir.join(format!("cmc_{n}.csv")), c));
        let _ = writeln!(
            table,
            "{n},{},{},{},{},{}",
            report.val_accuracy.unwrap_or(f64::NAN),
            report.rank_k[&1],
            report.rank_k[&5],
            report.rank_k[&10],
            report.n_probes
        );
        println!("packets {n}: {}", summary(&report));
    }
    outputs.push((a.out_dir.join("sweep.csv"), table.into_bytes()));
    write_outputs(outputs)
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let agg = match a.aggregate.as_str() {
        "none" => None,
        other => Some(aggregation(other)?),
    };
    let model = read_model(&a.model)?;
    let log = read_log(&a.data)?;
    if log.is_empty() {
        return Err(Failure::data(format!("{} contains no packets", a.data.display())));
    }
    let mode = mode_for_model(&model, &log)?;
    let data = FeatureSet::from_log(&log, mode)?;

    let mut out = String::new();
    match agg {
        None => {
            let probs = model.predict_proba(&data.x)?;
            out.push_str("packet,label,probability\n");
            for i in 0..probs.rows() {
                let label = reid::argmax(probs.row(i));
                let _ = writeln!(out, "{i},{label},{}", probs.get(i, label));
            }
        }
        Some(agg) => {
            let scores = probe_score(&model, &data.x, agg)?;
            let label = reid::argmax(&scores);
            out.push_str("label,score\n");
            let _ = writeln!(out, "{label},{}", scores[label]);
        }
    }
    print!("{out}");
    Ok(())
}
