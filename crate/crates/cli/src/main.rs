mod args;

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use mfseg::artifacts::{write_json, ArtifactDir};
use mfseg::bench::{sweep, BenchRow};
use mfseg::ingest::{generate_synthetic, SyntheticSpec};
use mfseg::pipeline::{features_for, reload_dataset, run_features, run_merge, run_segment, SegmentRequest};
use mfseg::postproc::{query_centers, CenterQuery};
use mfseg_service::{ServiceConfig, Session};
use serde::Serialize;

use args::{BenchArgs, Cli, Command, GenArgs, MergeArgs, OutArgs, QueryArgs, SegmentArgs, ServeArgs, Switch};

type CmdResult = Result<(), Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Segment(a) => segment(a),
        Command::Merge(a) => merge(a),
        Command::Features(a) => features(a),
        Command::Query(a) => query(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn read_spec(path: &Path) -> Result<SyntheticSpec, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let spec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
    } else {
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
    };
    Ok(spec)
}

fn gen(a: GenArgs) -> CmdResult {
    let mut spec = read_spec(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let data = generate_synthetic(&spec)?;
    data.write(&a.out)?;
    println!(
        "wrote {} field samples and {} point samples to {}",
        data.field.sample_count(),
        data.points.len(),
        a.out.display()
    );
    Ok(())
}

fn segment(a: SegmentArgs) -> CmdResult {
    let request = SegmentRequest {
        source: a.input.source(),
        params: a.params.params(),
        exec: a.exec.exec(),
    };
    let out = ArtifactDir::new(&a.out);
    let (doc, report) = run_segment(&request, &out, &mut |p| {
        log::info!("iteration {} max center change {:.6}", p.iteration, p.max_center_delta);
    })?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let state = if doc.converged { "converged" } else { "stopped" };
    println!(
        "{state} after {} iterations: {} clusters over {} point and {} field samples, written to {}",
        doc.iterations_used,
        doc.centers.len(),
        doc.n_point_samples,
        doc.n_field_samples,
        a.out.display()
    );
    Ok(())
}

fn merge(a: MergeArgs) -> CmdResult {
    let out = ArtifactDir::new(&a.out);
    let eps = match a.eps_m {
        Some(eps) => eps,
        None => out.read_segmentation()?.0.params.merge_eps,
    };
    let merge = run_merge(&out, eps)?;
    println!(
        "{} clusters merged into {} features at eps_m = {eps}",
        merge.merge_map.0.len(),
        merge.feature_count()
    );
    Ok(())
}

fn features(a: OutArgs) -> CmdResult {
    let export = run_features(&ArtifactDir::new(&a.out))?;
    println!("{} features written to {}", export.features.len(), a.out.display());
    Ok(())
}

fn query(a: QueryArgs) -> CmdResult {
    // parse first so a bad predicate fails before any data is read
    let query = CenterQuery::parse(&a.predicates)?;
    let out = ArtifactDir::new(&a.out);
    let (doc, seg) = out.read_segmentation()?;
    let dataset = reload_dataset(&doc)?;
    let export = features_for(&dataset, &seg, out.read_merge()?.as_ref())?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for id in query_centers(&export.centers, &query) {
        writeln!(w, "{id}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Machine {
    os: &'static str,
    arch: &'static str,
    available_parallelism: usize,
}

#[derive(Serialize)]
struct BenchReport {
    machine: Machine,
    workers: usize,
    chunk_size: Option<usize>,
    reps: usize,
    seed: u64,
    rows: Vec<BenchRow>,
}

fn bench(a: BenchArgs) -> CmdResult {
    let ks = if a.k.is_empty() { vec![[4, 4, 4, 4], [8, 8, 8, 4]] } else { a.k.clone() };
    let exec = a.exec.exec();
    let rows = sweep(&a.samples, &ks, exec, a.reps, a.seed)?;
    let report = BenchReport {
        machine: Machine {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
        workers: exec.workers,
        chunk_size: exec.chunk_size,
        reps: a.reps,
        seed: a.seed,
        rows,
    };
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn serve(a: ServeArgs) -> CmdResult {
    let session = Session::open(ServiceConfig {
        source: a.input.source(),
        out: a.out.clone(),
        exec: a.exec.exec(),
        normalize: a.normalize == Switch::On,
    })?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    eprintln!("serving on http://{}", a.addr);
    runtime.block_on(mfseg_service::serve(Arc::new(session), a.addr))?;
    Ok(())
}
