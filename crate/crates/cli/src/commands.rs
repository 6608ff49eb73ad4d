use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nrerank_core::datagen::{generate, SynthSpec};
use nrerank_core::eval::evaluate;
use nrerank_core::io::{
    read_features_file, read_labels_file, read_npy_file, write_labels_file, write_npy_file,
    Precision, ReportDocument,
};
use nrerank_core::tensor::pairwise_sq_euclidean;
use nrerank_core::{DistanceMatrix, FeatureMatrix, SampleLabels};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    DataSource, DistancesArgs, EvalArgs, PipelineArgs, RerankArgs, SweepArgs, SynthArgs,
};
use crate::config::PipelineConfig;
use crate::error::{labels_error, npy_error, CliError, CliResult};
use crate::manifest::{read_json, write_json, RerankManifest, SynthManifest, TOOL, VERSION};
use crate::pipeline::{ablation, rerank, rerank_and_evaluate, sweep, AblationRow, Dataset, SweepGrid};

pub const QUERY_FILE: &str = "q.npy";
pub const GALLERY_FILE: &str = "g.npy";
pub const QUERY_LABELS_FILE: &str = "q_labels.csv";
pub const GALLERY_LABELS_FILE: &str = "g_labels.csv";
pub const DIST_FILE: &str = "dist.npy";
pub const MANIFEST_FILE: &str = "manifest.json";

fn load_features(path: &Path) -> CliResult<FeatureMatrix> {
    read_features_file(path).map_err(|e| npy_error(path, e))
}

fn load_labels(path: &Path) -> CliResult<SampleLabels> {
    read_labels_file(path).map_err(|e| labels_error(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn save_matrix(path: &Path, m: &ndarray::Array2<f64>, precision: Precision) -> CliResult<()> {
    write_npy_file(path, m.view(), precision).map_err(|e| CliError::io(path, e))
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let spec = args.synth.spec();
    let set = generate(&spec)?;
    let precision = Precision::from(args.precision);
    let dir = &args.out;
    ensure_dir(dir)?;
    save_matrix(&dir.join(QUERY_FILE), set.query.as_array(), precision)?;
    save_matrix(&dir.join(GALLERY_FILE), set.gallery.as_array(), precision)?;
    for (name, labels) in [
        (QUERY_LABELS_FILE, &set.query_labels),
        (GALLERY_LABELS_FILE, &set.gallery_labels),
    ] {
        let path = dir.join(name);
        write_labels_file(&path, labels).map_err(|e| CliError::io(&path, e))?;
    }
    let files = [QUERY_FILE, GALLERY_FILE, QUERY_LABELS_FILE, GALLERY_LABELS_FILE]
        .map(String::from)
        .to_vec();
    write_json(
        &dir.join(MANIFEST_FILE),
        &SynthManifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            spec,
            precision,
            files: files.clone(),
        },
    )?;
    print_json(&json!({
        "out": dir,
        "files": files,
        "queries": set.query.rows(),
        "gallery": set.gallery.rows(),
    }))
}

/// Resolves the effective run description of a `rerank` invocation.
pub fn rerank_manifest(args: &RerankArgs) -> CliResult<RerankManifest> {
    if let Some(path) = &args.manifest {
        let mut m: RerankManifest = read_json(path)?;
        if let Some(out) = &args.out {
            m.output = out.clone();
        }
        m.config.validate()?;
        return Ok(m);
    }
    let missing = |flag: &str| CliError::Config(format!("--{flag} is required"));
    let config = if args.baseline {
        let mut tuned = args.tuning.clone();
        tuned.no_dmon = true;
        tuned.no_aro = true;
        tuned.config()?
    } else {
        let cfg = args.tuning.config()?;
        if cfg.is_baseline() {
            return Err(CliError::Config(
                "both stages disabled; pass --baseline for plain ranking".into(),
            ));
        }
        cfg
    };
    Ok(RerankManifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        query: args.query.clone().ok_or_else(|| missing("query"))?,
        gallery: args.gallery.clone().ok_or_else(|| missing("gallery"))?,
        output: args.out.clone().ok_or_else(|| missing("out"))?,
        precision: args.precision.into(),
        config,
    })
}

pub fn run_rerank(m: &RerankManifest) -> CliResult<DistanceMatrix> {
    let query = load_features(&m.query)?;
    let gallery = load_features(&m.gallery)?;
    let d = rerank(&query, &gallery, &m.config)?;
    ensure_dir(&m.output)?;
    save_matrix(&m.output.join(DIST_FILE), d.as_array(), m.precision)?;
    write_json(&m.output.join(MANIFEST_FILE), m)?;
    Ok(d)
}

pub fn rerank_cmd(args: &RerankArgs) -> CliResult<()> {
    let manifest = rerank_manifest(args)?;
    let start = Instant::now();
    let d = run_rerank(&manifest)?;
    print_json(&json!({
        "dist": manifest.output.join(DIST_FILE),
        "manifest": manifest.output.join(MANIFEST_FILE),
        "shape": [d.rows(), d.cols()],
        "seconds": start.elapsed().as_secs_f64(),
    }))
}

pub fn eval(args: &EvalArgs) -> CliResult<ReportDocument> {
    let raw = read_npy_file(&args.dist).map_err(|e| npy_error(&args.dist, e))?;
    let d = DistanceMatrix::new(raw, true)?;
    let q = load_labels(&args.query_labels)?;
    let g = load_labels(&args.gallery_labels)?;
    let report = evaluate(&d, &q, &g, args.max_rank)?;
    let sibling = args
        .dist
        .parent()
        .map(|p| p.join(MANIFEST_FILE))
        .filter(|p| p.is_file());
    let rerank = match sibling {
        Some(p) => read_json::<serde_json::Value>(&p).unwrap_or(serde_json::Value::Null),
        None => serde_json::Value::Null,
    };
    let doc = ReportDocument::new(
        report,
        json!({
            "dist": args.dist,
            "max_rank": args.max_rank,
            "rerank": rerank,
        }),
    );
    Ok(doc)
}

pub fn eval_cmd(args: &EvalArgs) -> CliResult<()> {
    let doc = eval(args)?;
    if let Some(out) = &args.out {
        write_json(out, &doc)?;
    }
    print_json(&doc)
}

fn dataset(source: &DataSource, spec: &SynthSpec) -> CliResult<Dataset> {
    match (&source.query, &source.gallery, &source.query_labels, &source.gallery_labels) {
        (Some(q), Some(g), Some(ql), Some(gl)) => Ok(Dataset {
            query: load_features(q)?,
            query_labels: load_labels(ql)?,
            gallery: load_features(g)?,
            gallery_labels: load_labels(gl)?,
        }),
        (None, None, None, None) => Ok(generate(spec)?.into()),
        _ => Err(CliError::Config(
            "--query, --gallery, --query-labels and --gallery-labels go together".into(),
        )),
    }
}

pub fn sweep_table(args: &SweepArgs) -> CliResult<Vec<crate::pipeline::SweepRow>> {
    let mut base = args.preset.map(|p| p.config()).unwrap_or_default();
    if let Some(s) = args.sigma {
        base.dmon.sigma = s;
        base.dmon.sigma_mode = nrerank_core::SigmaMode::Fixed;
    }
    if let Some(f) = args.fill {
        base.aro.fill_value = f;
    }
    if let Some(b) = args.batch_size {
        base.dmon.batch_size = Some(b);
    }
    if let Some(r) = args.max_rank {
        base.max_rank = r;
    }
    let grid = SweepGrid {
        k1: args.k1.clone().unwrap_or_else(|| vec![base.dmon.k1]),
        k2: args.k2.clone().unwrap_or_else(|| vec![base.aro.k2]),
        gamma: args.gamma.clone().unwrap_or_else(|| vec![base.dmon.gamma]),
        orders: args.orders.clone().unwrap_or_else(|| vec![base.dmon.orders]),
    };
    if grid.cells().is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    for (k1, k2, gamma, orders) in grid.cells() {
        let mut cfg = base.clone();
        cfg.dmon.k1 = k1;
        cfg.aro.k2 = k2;
        cfg.dmon.gamma = gamma;
        cfg.dmon.orders = orders;
        cfg.validate()?;
    }
    let data = dataset(&args.data, &args.synth.spec())?;
    Ok(sweep(&data, &base, &grid)?)
}

fn write_csv<T: Serialize, W: Write>(w: W, rows: &[T]) -> CliResult<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn sweep_cmd(args: &SweepArgs) -> CliResult<()> {
    let rows = sweep_table(args)?;
    match &args.out {
        Some(path) if path.extension().is_some_and(|e| e == "json") => write_json(path, &rows),
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
            write_csv(std::io::BufWriter::new(file), &rows)
        }
        None => write_csv(std::io::stdout().lock(), &rows),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PipelineReport {
    pub tool: String,
    pub version: String,
    pub spec: SynthSpec,
    pub config: PipelineConfig,
    pub rows: Vec<AblationRow>,
}

pub fn pipeline(args: &PipelineArgs) -> CliResult<PipelineReport> {
    let config = args.tuning.config()?;
    let data: Dataset = generate(&args.synth.spec())?.into();
    let rows = if args.ablation {
        ablation(&data, &config)?
    } else {
        let base = rerank_and_evaluate(&data, &config.with_stages(false, false))?;
        let method = rerank_and_evaluate(&data, &config)?;
        let name = match (config.dmon_on, config.aro_on) {
            (false, false) => "baseline",
            (false, true) => "+ARO",
            (true, false) => "+DMON",
            (true, true) => "+DMON+ARO",
        };
        vec![
            AblationRow {
                model: "baseline".into(),
                map: base.map,
                rank1: base.rank1(),
            },
            AblationRow {
                model: name.into(),
                map: method.map,
                rank1: method.rank1(),
            },
        ]
    };
    Ok(PipelineReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        spec: args.synth.spec(),
        config,
        rows,
    })
}

pub fn pipeline_cmd(args: &PipelineArgs) -> CliResult<()> {
    let report = pipeline(args)?;
    let mut err = std::io::stderr().lock();
    writeln!(err, "{:<12} {:>8} {:>8}", "model", "mAP", "rank-1")?;
    for row in &report.rows {
        writeln!(err, "{:<12} {:>8.4} {:>8.4}", row.model, row.map, row.rank1)?;
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    print_json(&report)
}

pub fn distances_cmd(args: &DistancesArgs) -> CliResult<()> {
    let q = load_features(&args.query)?;
    let g = load_features(&args.gallery)?;
    let start = Instant::now();
    let d = pairwise_sq_euclidean(&q, &g, args.block)?;
    let seconds = start.elapsed().as_secs_f64();
    let checksum: f64 = d.as_slice().iter().sum();
    if let Some(out) = &args.out {
        save_matrix(out, d.as_array(), args.precision.into())?;
    }
    print_json(&json!({
        "rows": d.rows(),
        "cols": d.cols(),
        "block": args.block,
        "seconds": seconds,
        "checksum": checksum,
        "out": args.out.as_ref().map(PathBuf::from),
    }))
}
