use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::config::RunConfig;
use super::output::{Report, Staging};
use super::{CliError, EvalArgs, SynthArgs, SynthKind};
use crate::ba::{BaConfig, BaState};
use crate::data::checkpoint::Checkpoint;
use crate::data::synth::{base_curves, synth_curves, synth_points2d, two_ring_groups, CurveSynthConfig};
use crate::data::{self, read_idx_labels, read_labels, write_pgm, Dataset, Format};
use crate::error::Error;
use crate::item::Shape;
use crate::jac::{ClusterId, JacConfig, JacState, PlugIn, RunTrace, Sampler};
use crate::metrics;
use crate::model::{DataModel, Priors};
use crate::transforms::TransformFamily;

type CliResult<T> = Result<T, CliError>;

fn load_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("--in is required".into()))?;
    let path = data::resolve_path(input);
    let format = cfg.format.unwrap_or_else(|| Format::detect(&path));
    let mut d = data::load(&path, format, cfg.labels.as_deref()).map_err(CliError::Data)?;
    if let Some(class) = cfg.class {
        let Some(labels) = &d.labels else {
            return Err(CliError::Config("--class needs --labels".into()));
        };
        let keep: Vec<usize> = (0..d.len()).filter(|&i| labels[i] == class).collect();
        if keep.is_empty() {
            return Err(CliError::Data(Error::invalid(format!("no items with label {class}"))));
        }
        d = d.subset(&keep);
    }
    if d.is_empty() {
        return Err(CliError::Data(Error::invalid("dataset has no items")));
    }
    Ok(d)
}

fn setup(cfg: &RunConfig, d: &Dataset) -> CliResult<(TransformFamily, Priors)> {
    let family = d
        .family(cfg.family.as_deref())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let priors = Priors::resolve(
        &cfg.hyper,
        DataModel::for_shape(d.shape),
        &d.items,
        d.shape.len(),
        &family,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    Ok((family, priors))
}

fn out_dir(cfg: &RunConfig) -> CliResult<&Path> {
    cfg.out
        .as_deref()
        .ok_or_else(|| CliError::Config("--out is required".into()))
}

fn csv_rows(rows: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

fn mean_of<'a>(items: impl Iterator<Item = &'a Vec<f64>>, dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for x in items {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
        n += 1;
    }
    if n > 0 {
        mean.iter_mut().for_each(|m| *m /= n as f64);
    }
    mean
}

/// Writes the aligned items in the input's own kind of format.
fn write_aligned(stage: &Staging, shape: Shape, aligned: &[Vec<f64>]) -> CliResult<()> {
    let d = Dataset::new(shape, aligned.to_vec(), None)?;
    match shape {
        Shape::Image { .. } => data::save(&d, &stage.path("aligned.idx"), Format::Idx)?,
        Shape::Point2 => data::save(&d, &stage.path("aligned.csv"), Format::CsvPoints)?,
        _ => data::save(&d, &stage.path("aligned.csv"), Format::CsvCurves)?,
    }
    Ok(())
}

/// Spread summary suited to the data kind: mean pixel entropy for images,
/// the stddev score otherwise.
fn spread(shape: Shape, items: &[Vec<f64>]) -> Option<(&'static str, f64)> {
    match shape {
        Shape::Image { .. } => metrics::mean_pixel_entropy(items).ok().map(|v| ("entropy", v)),
        _ => metrics::stddev_score(items).ok().map(|v| ("stddev", v)),
    }
}

pub fn ba(cfg: &RunConfig) -> CliResult<()> {
    let d = load_dataset(cfg)?;
    let out = out_dir(cfg)?;
    let (family, priors) = setup(cfg, &d)?;
    let start = Instant::now();
    let mut state = BaState::new(d.items.clone(), family, priors, cfg.seed)?;
    let config = BaConfig {
        sweeps: cfg.iters.unwrap_or(BaConfig::default().sweeps),
        ..BaConfig::default()
    };
    let trace = state.run(&config)?;

    let stage = Staging::new(out)?;
    let dim = d.shape.len();
    stage.write("rho.csv", csv_rows(state.rho()))?;
    write_aligned(&stage, d.shape, state.aligned())?;
    let before = mean_of(d.items.iter(), dim);
    let after = mean_of(state.aligned().iter(), dim);
    match d.shape {
        Shape::Image { width, height } => {
            write_pgm(&stage.path("mean_before.pgm"), width, height, &before)?;
            write_pgm(&stage.path("mean_after.pgm"), width, height, &after)?;
        }
        _ => stage.write("means.csv", csv_rows(&[before, after]))?,
    }
    let mut t = String::from("sweep,score\n");
    for (k, s) in trace.iter().enumerate() {
        let _ = writeln!(t, "{k},{s:?}");
    }
    stage.write("trace.csv", t)?;

    let mut r = Report::default();
    r.add("command", "ba");
    r.add("items", d.len());
    r.add("family", state.family().name());
    r.add("sweeps", trace.len() - 1);
    r.add("score_before", trace[0]);
    r.add("score_after", trace[trace.len() - 1]);
    if let Some((name, v)) = spread(d.shape, &d.items) {
        r.add(&format!("{name}_before"), v);
    }
    if let Some((name, v)) = spread(d.shape, state.aligned()) {
        r.add(&format!("{name}_after"), v);
    }
    finish(stage, r, start)
}

fn finish(stage: Staging, r: Report, start: Instant) -> CliResult<()> {
    let text = r.render();
    stage.write("report.tsv", &text)?;
    stage.commit()?;
    print!("{text}");
    eprintln!("elapsed {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

/// `item,label` pairs, one per line; blank lines and `#` comments skipped.
fn read_seeds(path: &Path) -> CliResult<Vec<(usize, usize)>> {
    let path = data::resolve_path(path);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Data(Error::io(&path, e)))?;
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let bad = || {
            CliError::Data(Error::format(
                path.display().to_string(),
                format!("line {}: expected 'item,label'", n + 1),
            ))
        };
        if fields.len() != 2 {
            return Err(bad());
        }
        let item = fields[0].parse().map_err(|_| bad())?;
        let label = fields[1].parse().map_err(|_| bad())?;
        pairs.push((item, label));
    }
    if pairs.is_empty() {
        return Err(CliError::Data(Error::format(path.display().to_string(), "no seeds")));
    }
    Ok(pairs)
}

/// Dense labels in cluster-id order for an assignment vector; unassigned
/// items are written as `-1`.
fn dense_labels(z: &[Option<ClusterId>]) -> Vec<i64> {
    let ids: BTreeMap<ClusterId, i64> = {
        let mut ids: Vec<ClusterId> = z.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().enumerate().map(|(k, id)| (id, k as i64)).collect()
    };
    z.iter().map(|z| z.map_or(-1, |id| ids[&id])).collect()
}

fn label_lines(labels: &[i64]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacMode {
    Fit,
    Save,
    Load,
}

pub fn jac(cfg: &RunConfig, mode: JacMode) -> CliResult<()> {
    if mode != JacMode::Fit && cfg.checkpoint.is_none() {
        return Err(CliError::Config("--checkpoint is required".into()));
    }
    let d = load_dataset(cfg)?;
    let start = Instant::now();
    let jc = JacConfig {
        sampler: cfg.sampler,
        samples: cfg.samples,
        plug_in: cfg.plug_in,
        ..JacConfig::default()
    };
    let (mut state, loaded) = if mode == JacMode::Load {
        let path = data::resolve_path(cfg.checkpoint.as_deref().expect("checked"));
        let ck = Checkpoint::load(&path).map_err(CliError::Data)?;
        if ck.shape != d.shape {
            return Err(CliError::Data(Error::invalid(format!(
                "checkpoint was saved for {:?} items, input has {:?}",
                ck.shape, d.shape
            ))));
        }
        let state = ck.into_state(d.items.clone(), cfg.seed)?;
        (state, Some(ck))
    } else {
        let (family, priors) = setup(cfg, &d)?;
        let mut state = JacState::new(
            d.items.clone(),
            family,
            priors,
            cfg.gamma_init,
            (cfg.hyper.gamma_a, cfg.hyper.gamma_b),
            cfg.seed,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(path) = &cfg.seeds {
            let pairs = read_seeds(path)?;
            state
                .seed_clusters(&pairs, cfg.replication)
                .map_err(CliError::Data)?;
        }
        (state, None)
    };

    // Loading must not alter the stored statistics.
    let identity = loaded.as_ref().map(|ck| {
        let clusters: Vec<_> = state.clusters().values().map(|c| c.stats().clone()).collect();
        ck.clusters.iter().map(|c| &c.stats).eq(clusters.iter())
    });

    let iters = cfg
        .iters
        .unwrap_or(if mode == JacMode::Load { 1 } else { 100 });
    let trace = if cfg.parallel {
        state.run_parallel(iters, cfg.workers, &jc)?
    } else {
        state.run(iters, &jc)?
    };

    if mode == JacMode::Save {
        let path = cfg.checkpoint.as_deref().expect("checked");
        let ck = Checkpoint::from_state(&state, d.shape);
        let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
        ck.save(&tmp)?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    }

    let mut r = Report::default();
    r.add(
        "command",
        match mode {
            JacMode::Fit => "jac",
            JacMode::Save => "checkpoint-save",
            JacMode::Load => "checkpoint-load",
        },
    );
    if let Some(ok) = identity {
        r.add("stats_identity", if ok { "ok" } else { "FAILED" });
    }
    match cfg.out.as_deref() {
        Some(out) => {
            let stage = Staging::new(out)?;
            write_jac_outputs(&stage, cfg, &d, &state, &trace, &mut r)?;
            finish(stage, r, start)?;
        }
        None if mode == JacMode::Fit => return Err(CliError::Config("--out is required".into())),
        None => {
            summarize(cfg, &d, &state, &trace, &mut r)?;
            print!("{}", r.render());
        }
    }
    if identity == Some(false) {
        return Err(CliError::Runtime(Error::Checkpoint(
            "loaded statistics differ from the stored ones".into(),
        )));
    }
    Ok(())
}

fn summarize(
    cfg: &RunConfig,
    d: &Dataset,
    state: &JacState,
    trace: &RunTrace,
    r: &mut Report,
) -> CliResult<()> {
    let last = state.summary();
    r.add("items", d.len());
    r.add("family", state.family().name());
    r.add(
        "sampler",
        match cfg.sampler {
            Sampler::Blocked => "1",
            Sampler::Importance => "2",
        },
    );
    r.add("L", cfg.samples);
    r.add(
        "plug_in",
        match cfg.plug_in {
            PlugIn::Mode => "mode",
            PlugIn::Predictive => "predictive",
        },
    );
    r.add("schedule", if cfg.parallel { "parallel" } else { "sequential" });
    r.add("iterations", trace.iterations.len());
    r.add("seed", cfg.seed);
    r.add("clusters", last.clusters);
    r.add("gamma", last.gamma);
    r.add("score", last.score);
    r.add("transform_calls", state.transform_calls());
    let z = dense_labels(state.assignments());
    let best = trace.best.as_ref();
    if let Some(b) = best {
        r.add("best_iteration", b.iteration);
        r.add("best_score", b.score);
    }
    if let Some(truth) = &d.labels {
        if d.len() >= 2 {
            r.add("rand_index", metrics::rand_index(&z, truth)?);
            if let Some(b) = best {
                r.add("best_rand_index", metrics::rand_index(&dense_labels(&b.assignments), truth)?);
            }
        }
    }
    if let Ok(a) = metrics::alignment_score(state.aligned(), &z) {
        r.add("alignment_mean", a.mean);
        r.add("alignment_std", a.std);
        r.add("alignment_stderr", a.stderr);
    }
    Ok(())
}

fn write_jac_outputs(
    stage: &Staging,
    cfg: &RunConfig,
    d: &Dataset,
    state: &JacState,
    trace: &RunTrace,
    r: &mut Report,
) -> CliResult<()> {
    summarize(cfg, d, state, trace, r)?;
    let z = dense_labels(state.assignments());
    stage.write("z.csv", label_lines(&z))?;
    if let Some(b) = &trace.best {
        stage.write("z_best.csv", label_lines(&dense_labels(&b.assignments)))?;
    }
    stage.write("rho.csv", csv_rows(state.rho()))?;
    write_aligned(stage, d.shape, state.aligned())?;
    let dim = d.shape.len();
    let k = z.iter().copied().max().map_or(0, |m| m + 1);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            mean_of(
                state.aligned().iter().zip(&z).filter(|(_, &l)| l == c).map(|(y, _)| y),
                dim,
            )
        })
        .collect();
    match d.shape {
        Shape::Image { width, height } => {
            for (c, m) in means.iter().enumerate() {
                write_pgm(&stage.path(&format!("mean_{c}.pgm")), width, height, m)?;
            }
        }
        _ => stage.write("means.csv", csv_rows(&means))?,
    }
    let mut t = String::from("iteration,clusters,score,gamma\n");
    for s in &trace.iterations {
        let _ = writeln!(t, "{},{},{:?},{:?}", s.iteration, s.clusters, s.score, s.gamma);
    }
    stage.write("trace.csv", t)?;
    Ok(())
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let start = Instant::now();
    let d = match args.kind {
        SynthKind::Curves => {
            let bases = match &args.bases {
                Some(p) => {
                    data::load(p, Format::CsvCurves, None)
                        .map_err(CliError::Data)?
                        .items
                }
                None => base_curves(),
            };
            let config = CurveSynthConfig {
                count: args.count,
                magnitude: args.magnitude,
                noise_fraction: args.noise,
                seed: args.seed,
            };
            synth_curves(&bases, &config).map_err(|e| CliError::Config(e.to_string()))?
        }
        SynthKind::Points => synth_points2d(&two_ring_groups(args.count), args.seed)
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    let stage = Staging::new(&args.out)?;
    let (file, format) = match d.shape {
        Shape::Point2 => ("points.csv", "csv-points"),
        _ => ("curves.csv", "csv-curves"),
    };
    stage.write(file, csv_rows(&d.items))?;
    let labels = d.labels.as_deref().unwrap_or(&[]);
    stage.write("labels.txt", labels.iter().map(|l| format!("{l}\n")).collect::<String>())?;
    let mut r = Report::default();
    r.add("command", "synth");
    r.add("items", d.len());
    r.add("data", file);
    r.add("format", format);
    r.add("seed", args.seed);
    finish(stage, r, start)
}

fn read_label_file(path: &Path) -> CliResult<Vec<usize>> {
    let path = data::resolve_path(path);
    match Format::detect(&path) {
        Format::Idx => read_idx_labels(&path),
        _ => read_labels(&path),
    }
    .map_err(CliError::Data)
}

/// Predicted labels may use `-1` for unassigned items.
fn read_pred_file(path: &Path) -> CliResult<Vec<i64>> {
    let path = data::resolve_path(path);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Data(Error::io(&path, e)))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse().map_err(|_| {
                CliError::Data(Error::format(path.display().to_string(), format!("bad label '{l}'")))
            })
        })
        .collect()
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    if args.pred.is_none() && args.aligned.is_none() {
        return Err(CliError::Config("eval needs --pred and/or --aligned".into()));
    }
    let format = args
        .format
        .as_deref()
        .map(Format::from_name)
        .transpose()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let pred = args.pred.as_deref().map(read_pred_file).transpose()?;
    let truth = args.truth.as_deref().map(read_label_file).transpose()?;
    let mut r = Report::default();
    r.add("command", "eval");
    if let (Some(p), Some(t)) = (&pred, &truth) {
        r.add("rand_index", metrics::rand_index(p, t).map_err(CliError::Data)?);
    }
    if let Some(path) = &args.aligned {
        let path = data::resolve_path(path);
        let fmt = format.unwrap_or_else(|| Format::detect(&path));
        let d = data::load(&path, fmt, None).map_err(CliError::Data)?;
        r.add("items", d.len());
        if let Some((name, v)) = spread(d.shape, &d.items) {
            r.add(name, v);
        }
        let groups: Vec<i64> = pred.clone().unwrap_or_else(|| vec![0; d.len()]);
        match metrics::alignment_score(&d.items, &groups) {
            Ok(a) => {
                r.add("alignment_mean", a.mean);
                r.add("alignment_std", a.std);
                r.add("alignment_stderr", a.stderr);
                r.add("alignment_pairs", a.pairs);
            }
            Err(e @ Error::DimensionMismatch { .. }) => return Err(CliError::Data(e)),
            Err(_) => {}
        }
    }
    let text = r.render();
    if let Some(out) = &args.out {
        let tmp = out.with_extension(format!("tmp-{}", std::process::id()));
        std::fs::write(&tmp, &text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, out).map_err(|e| Error::io(out, e))?;
    }
    print!("{text}");
    Ok(())
}
