//! Command line driver for the policy-frames pipeline.

pub mod server;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use policy_frames::corpus::SubsetId;
use policy_frames::json;
use policy_frames::pipeline::config::GridConfig;
use policy_frames::pipeline::{write_atomic, Pipeline, PipelineConfig, ResultBundle};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "policy-frames", version, about = "Topic models and policy-frame comparison for template-structured plans")]
pub struct Cli {
    /// Pipeline config (TOML or JSON).
    #[arg(long, global = true, default_value = "policy-frames.toml")]
    pub config: PathBuf,
    /// Overrides the sampler and embedding seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for stage artifacts, the cache and the bundle.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sectionize, tokenize and build the per-subset corpora.
    Ingest,
    /// Train one topic model per configured subset.
    Train,
    /// Coherence grid over K, alpha and seeds.
    Gridsearch {
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Limit to these subsets (all modeled subsets by default).
        #[arg(long, value_delimiter = ',')]
        subset: Vec<SubsetId>,
    },
    /// Topic labels, relevance keywords and saliency.
    Interpret,
    /// Agenda vectors, distances, dendrograms, clusters, inconsistency and correlations.
    Analyze,
    /// Two-dimensional embeddings of each subset's distance matrix.
    Embed,
    /// Write the bundle and CSV tables; with --bundle, re-export an existing bundle.
    Export {
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Serve a bundle over the read-only HTTP API.
    Serve {
        /// Defaults to the bundle written by `run`.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Allowed CORS origin; any origin when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
    },
    /// Full pipeline: every stage, then export.
    Run,
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.tsne.seed = seed;
    }
    Ok(cfg)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_atomic(path, &json::to_vec(value)?).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn summarize(bundle: &ResultBundle, path: &Path) {
    println!("bundle: {}", path.display());
    println!("documents: {} ({} dropped)", bundle.corpus.documents.len(), bundle.corpus.dropped_documents.len());
    for (s, r) in &bundle.subsets {
        let clusters = r.clusters.as_ref().map_or(0, |c| c.num_clusters());
        println!(
            "{s}: K={} docs={} cv={:.4} umass={:.4} clusters={clusters}",
            r.model.num_topics(),
            r.model.doc_keys.len(),
            r.coherence.cv.aggregate,
            r.coherence.umass.aggregate
        );
    }
}

fn pick<T: Clone>(flag: &[T], from: Option<Vec<T>>) -> Vec<T> {
    if flag.is_empty() {
        from.unwrap_or_default()
    } else {
        flag.to_vec()
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let out = cli.out.clone();
    match &cli.command {
        Command::Serve { bundle, host, port, cors_origin } => {
            let path = match bundle {
                Some(p) => p.clone(),
                None => out.join(PipelineConfig::default().output.bundle),
            };
            let b = ResultBundle::read(&path)?;
            if let Err(errs) = b.validate() {
                bail!("{} failed validation: {}", path.display(), errs.join("; "));
            }
            let app = server::router(Arc::new(b), server::cors_layer(cors_origin.as_deref())?);
            let rt = tokio::runtime::Runtime::new()?;
            return rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), *port)).await.with_context(|| format!("binding {host}:{port}"))?;
                server::serve(listener, app).await
            });
        }
        Command::Export { bundle: Some(src) } => {
            let b = ResultBundle::read(src)?;
            if let Err(errs) = b.validate() {
                bail!("{} failed validation: {}", src.display(), errs.join("; "));
            }
            let dest = out.join(PipelineConfig::default().output.bundle);
            b.write(&dest)?;
            b.write_tables(&out)?;
            summarize(&b, &dest);
            return Ok(());
        }
        _ => {}
    }

    let mut cfg = load_config(&cli)?;
    if let Command::Gridsearch { k, alpha, seeds, subset } = &cli.command {
        if !k.is_empty() || !alpha.is_empty() || !seeds.is_empty() {
            let base = cfg.grid.clone();
            cfg.grid = Some(GridConfig {
                k_grid: pick(k, base.as_ref().map(|g| g.k_grid.clone())),
                alpha_grid: pick(alpha, base.as_ref().map(|g| g.alpha_grid.clone()).or(Some(vec![cfg.lda.alpha]))),
                seeds: pick(seeds, base.as_ref().map(|g| g.seeds.clone()).or(Some(vec![cfg.seed]))),
                subsets: subset.clone(),
            });
        } else if let Some(g) = cfg.grid.as_mut() {
            if !subset.is_empty() {
                g.subsets = subset.clone();
            }
        }
        match &cfg.grid {
            Some(g) if !g.k_grid.is_empty() => {}
            _ => bail!("gridsearch needs a [grid] section in the config or --k"),
        }
        cfg.validate().map_err(|e| anyhow::anyhow!("{}: {e}", cli.config.display()))?;
    }

    let p = Pipeline::new(cfg, &out);
    match &cli.command {
        Command::Ingest => {
            let ing = p.ingest()?;
            write_json(&out.join("ingest.json"), &ing.value)?;
            println!("documents: {}", ing.value.documents.len());
            for (s, sc) in &ing.value.subcorpora {
                println!("{s}: {} documents, {} words, {} tokens", sc.num_docs(), sc.vocab_size(), sc.num_tokens());
            }
            for u in &ing.value.unassigned {
                println!("unassigned: {} line {} ({} characters)", u.country, u.start_line + 1, u.characters);
            }
        }
        Command::Train => {
            let models = p.train(&p.ingest()?)?;
            for (s, m) in &models.value {
                write_json(&out.join("models").join(format!("{s}.json")), m)?;
            }
        }
        Command::Gridsearch { .. } => {
            let grid = p.gridsearch(&p.ingest()?)?;
            for (s, g) in &grid.value {
                write_json(&out.join("grid").join(format!("{s}.json")), g)?;
                write_text(&out.join("grid").join(format!("{s}.csv")), &g.to_csv()?)?;
                if let Some(best) = g.ranking.first().map(|&i| &g.entries[i]) {
                    println!("{s}: best K={} alpha={} seed={} ({:?} {:.4})", best.k, best.alpha, best.seed, g.metric, best.score(g.metric));
                }
            }
        }
        Command::Interpret => {
            let interp = p.interpret(&p.train(&p.ingest()?)?)?;
            for (s, i) in &interp.value {
                write_json(&out.join("interpret").join(format!("{s}.json")), i)?;
                for t in &i.topics {
                    println!("{s} topic {}: {} [{}]", t.topic_id, t.label, t.keywords.join(", "));
                }
            }
        }
        Command::Analyze => {
            let analysis = p.analyze(&p.train(&p.ingest()?)?)?;
            let a = &analysis.value;
            write_json(&out.join("analysis.json"), a)?;
            write_text(&out.join("inconsistency.csv"), &a.inconsistency.to_csv())?;
            for (s, c) in &a.correlations {
                write_text(&out.join(format!("correlations_{s}.csv")), &c.to_csv())?;
            }
        }
        Command::Embed => {
            let emb = p.embed(&p.analyze(&p.train(&p.ingest()?)?)?)?;
            for (s, e) in &emb.value {
                write_json(&out.join("embeddings").join(format!("{s}.json")), e)?;
            }
        }
        Command::Export { .. } | Command::Run => {
            let (b, path) = p.run()?;
            b.write_tables(&out)?;
            summarize(&b, &path);
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
    Ok(())
}
