use std::collections::HashMap;
use std::path::Path;

use serde_json::json;

use routekit::clustering::{fit_kmeans, ClusterModel, KMeansConfig};
use routekit::datamodel::{load_dataset, load_label_table, load_pairwise, load_pool, load_prompts};
use routekit::evaluation::{
    default_candidates, default_lambda_grid, metrics, peak_quality, select_k, sweep as sweep_curve, zero_router_curve,
    zero_router_hull_curve, RouterKind, SelectionConfig, TuneData,
};
use routekit::features::{btl_cluster_scores, cluster_error_features, raw_error_features, BtlConfig};
use routekit::fmt::{num, round_sig, SIG_DIGITS};
use routekit::learned_map::{learned_gamma, train_map, Arch, MapParams, Optimizer, TrainConfig};
use routekit::routing::{build_zero_router, cluster_gamma, knn_gamma, route as route_one, GammaEstimator, PoolEntry};
use routekit::synth::{generate_stream, MixtureSpec};
use routekit::{Error, Result};

use crate::inputs::{
    chosen_ids, embeddings, labels_for, load_features, load_json, pool_entries, read_text, restrict_pool,
};
use crate::output::{emit, write_atomic};
use crate::{
    ArchArg, ClusterArgs, CompareArgs, EmbedArgs, FeatureKindArg, OptimizerArg, ReportArgs, RouteArgs, RouterArg,
    RouterArgs, SweepArgs, SynthArgs, TuneArgs, TuneRouterArg, ValidateArgs,
};

fn to_json_line<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::Validation(e.to_string()))
}

fn rounded(v: f64) -> f64 {
    round_sig(v, SIG_DIGITS)
}

fn arch(a: ArchArg) -> Arch {
    match a {
        ArchArg::Linear => Arch::LinearSoftmax,
        ArchArg::TwoHidden => Arch::TwoHidden,
    }
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut spec: MixtureSpec = load_json(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let splits: Vec<(Option<&str>, usize, u64, &str)> = match args.n_prompts {
        Some(n) => vec![(None, n, 0, "p")],
        None => vec![
            (Some("train"), args.n_train.unwrap_or(0), 0, "tr"),
            (Some("val"), args.n_val.unwrap_or(0), 1, "va"),
            (Some("test"), args.n_test.unwrap_or(0), 2, "te"),
        ],
    };
    let data = splits
        .iter()
        .map(|&(_, n, stream, prefix)| generate_stream(&spec, n, stream, prefix))
        .collect::<Result<Vec<_>>>()?;
    for ((sub, ..), d) in splits.iter().zip(&data) {
        let dir = match sub {
            Some(s) => args.out.join(s),
            None => args.out.clone(),
        };
        d.save(&dir)?;
    }
    Ok(())
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let (prompts, labels, pool) = load_dataset(&args.prompts, &args.labels, &args.pool)?;
    let n = prompts.len();
    let llms: Vec<_> = pool
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let observed = labels.column(j).iter().flatten().count();
            json!({
                "id": p.id,
                "cost": p.cost,
                "observed": observed,
                "missing_rate": rounded(1.0 - observed as f64 / n.max(1) as f64),
                "mean_loss": labels.column_mean(j).map(rounded),
            })
        })
        .collect();
    let cells = n * pool.len();
    let mut summary = json!({
        "n_prompts": n,
        "n_llms": pool.len(),
        "dim": prompts.first().map_or(0, |p| p.embedding.len()),
        "observed": labels.observed_count(),
        "missing_rate": rounded(1.0 - labels.observed_count() as f64 / cells.max(1) as f64),
        "llms": llms,
    });
    if let Some(path) = &args.pairwise {
        let records = load_pairwise(path)?;
        let prompt_ids: std::collections::HashSet<&str> = prompts.iter().map(|p| p.id.as_str()).collect();
        let llm_ids: std::collections::HashSet<&str> = pool.iter().map(|p| p.id.as_str()).collect();
        for r in &records {
            if !prompt_ids.contains(r.prompt_id.as_str()) {
                return Err(Error::Consistency(format!(
                    "comparison names unknown prompt {:?}",
                    r.prompt_id
                )));
            }
            for id in [&r.llm_a, &r.llm_b] {
                if !llm_ids.contains(id.as_str()) {
                    return Err(Error::Consistency(format!("comparison names unknown LLM {id:?}")));
                }
            }
        }
        summary["n_pairwise"] = json!(records.len());
    }
    emit(None, &to_json_line(&summary)?)
}

pub fn cluster(args: ClusterArgs) -> Result<()> {
    let prompts = load_prompts(&args.prompts)?;
    let points = embeddings(&prompts);
    let config = KMeansConfig {
        max_iter: args.max_iter,
        rel_tol: args.tol,
        ..KMeansConfig::new(args.k, args.seed).with_restarts(args.restarts)
    };
    let model = fit_kmeans(&points, &config)?;

    let map = match (&args.map_out, &args.labels) {
        (Some(_), Some(labels_path)) => {
            let table = load_label_table(labels_path)?;
            let ids = chosen_ids(&args.llms, &table.llm_ids)?;
            let labels = labels_for(&table, &prompts, &ids)?;
            let features = cluster_error_features(&model, &points, &labels, &ids)?;
            let train = TrainConfig {
                epochs: args.epochs,
                batch_size: args.batch_size,
                learning_rate: args.lr,
                optimizer: match args.optimizer {
                    OptimizerArg::Adam => Optimizer::Adam,
                    OptimizerArg::Sgd => Optimizer::Sgd,
                },
                clamp_eps: args.clamp_eps,
                seed: args.seed,
            };
            Some(train_map(&points, &labels, &features, arch(args.arch), &train)?)
        }
        _ => None,
    };

    write_atomic(&args.out, to_json_line(&model)?.as_bytes())?;
    if let (Some(path), Some(map)) = (&args.map_out, map) {
        write_atomic(path, to_json_line(&map)?.as_bytes())?;
    }
    Ok(())
}

pub fn embed_llm(args: EmbedArgs) -> Result<()> {
    let prompts = load_prompts(&args.prompts)?;
    let points = embeddings(&prompts);
    let model = args.model.as_deref().map(load_json::<ClusterModel>).transpose()?;
    if let Some(m) = &model {
        m.validate()?;
    }
    let features = match args.kind {
        FeatureKindArg::RawError | FeatureKindArg::ClusterError => {
            let path = args
                .labels
                .as_deref()
                .ok_or_else(|| Error::Argument("--labels is required for this feature kind".into()))?;
            let table = load_label_table(path)?;
            let ids = chosen_ids(&args.llms, &table.llm_ids)?;
            let labels = labels_for(&table, &prompts, &ids)?;
            match &model {
                Some(m) if args.kind == FeatureKindArg::ClusterError => {
                    cluster_error_features(m, &points, &labels, &ids)?
                }
                _ => raw_error_features(&labels, &ids)?,
            }
        }
        FeatureKindArg::BtlCluster => {
            let m = model
                .as_ref()
                .ok_or_else(|| Error::Argument("--model is required for btl-cluster".into()))?;
            let path = args
                .pairwise
                .as_deref()
                .ok_or_else(|| Error::Argument("--pairwise is required for btl-cluster".into()))?;
            let records = load_pairwise(path)?;
            let assignments: HashMap<String, usize> = prompts
                .iter()
                .map(|p| m.assign(&p.embedding).map(|z| (p.id.clone(), z)))
                .collect::<Result<_>>()?;
            let mut all: Vec<String> = Vec::new();
            for r in &records {
                for id in [&r.llm_a, &r.llm_b] {
                    if !all.contains(id) {
                        all.push(id.clone());
                    }
                }
            }
            let ids = chosen_ids(&args.llms, &all)?;
            let config = BtlConfig {
                pseudo_count: args.pseudo_count,
                ..BtlConfig::default()
            };
            let scores = btl_cluster_scores(&records, &assignments, &all, m.k, &config)?;
            ids.iter()
                .map(|id| {
                    scores
                        .iter()
                        .find(|f| &f.llm_id == id)
                        .cloned()
                        .expect("id drawn from all")
                })
                .collect()
        }
    };
    let mut out = String::new();
    for f in &features {
        out.push_str(&to_json_line(f)?);
    }
    write_atomic(&args.out, out.as_bytes())
}

fn estimator(args: &RouterArgs) -> Result<Box<dyn GammaEstimator>> {
    match args.router {
        RouterArg::Cluster => {
            let m: ClusterModel = load_json(args.model.as_deref().expect("required by clap"))?;
            m.validate()?;
            Ok(Box::new(cluster_gamma(m)))
        }
        RouterArg::Learned => {
            let p: MapParams = load_json(args.model.as_deref().expect("required by clap"))?;
            p.validate()?;
            Ok(Box::new(learned_gamma(p)))
        }
        RouterArg::Knn => {
            let val = load_prompts(args.val_prompts.as_deref().expect("required by clap"))?;
            Ok(Box::new(knn_gamma(
                embeddings(&val),
                args.k_neighbors.expect("required by clap"),
            )?))
        }
        RouterArg::Zero => Err(Error::Argument("the zero router is only available in sweep".into())),
    }
}

fn live_pool(args: &RouterArgs) -> Result<Vec<PoolEntry>> {
    pool_entries(load_features(&args.features)?, &load_pool(&args.pool)?)
}

pub fn route(args: RouteArgs) -> Result<()> {
    if args.lambda.is_nan() || args.lambda < 0.0 {
        return Err(Error::Argument(format!("lambda {} must be non-negative", args.lambda)));
    }
    let gamma = estimator(&args.router)?;
    let pool = live_pool(&args.router)?;
    let prompts = load_prompts(&args.prompts)?;
    let mut out = String::new();
    for p in &prompts {
        let d = route_one(gamma.as_ref(), &p.embedding, &pool, args.lambda)?;
        let line = json!({
            "prompt_id": p.id,
            "llm_id": pool[d.llm_index].id(),
            "llm_index": d.llm_index,
            "lambda": rounded(d.lambda),
            "adjusted_scores": d.adjusted_scores.iter().map(|&v| rounded(v)).collect::<Vec<_>>(),
        });
        out.push_str(&to_json_line(&line)?);
    }
    emit(args.out.as_deref(), &out)
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let pool = live_pool(&args.router)?;
    let prompts = load_prompts(&args.prompts)?;
    let table = load_label_table(&args.labels)?;
    let ids: Vec<String> = pool.iter().map(|e| e.id().to_string()).collect();
    let labels = labels_for(&table, &prompts, &ids)?;
    let costs: Vec<f64> = pool.iter().map(|e| e.cost).collect();

    let curve = if args.router.router == RouterArg::Zero {
        let points: Vec<(usize, f64, f64)> = pool
            .iter()
            .enumerate()
            .map(|(j, e)| (j, e.cost, e.feature.mean_loss()))
            .collect();
        let policy = build_zero_router(&points)?;
        let max_cost = costs.iter().cloned().fold(0.0, f64::max);
        let max_cost = if max_cost > 0.0 { max_cost } else { 1.0 };
        if args.budgets.is_empty() {
            zero_router_hull_curve(&policy, &labels, max_cost)?
        } else {
            zero_router_curve(&policy, &labels, &args.budgets, max_cost)?
        }
    } else {
        let gamma = estimator(&args.router)?;
        let lambdas = if args.lambdas.is_empty() {
            default_lambda_grid(&costs)
        } else {
            args.lambdas.clone()
        };
        sweep_curve(gamma.as_ref(), &embeddings(&prompts), &labels, &pool, &lambdas)?
    };
    if curve.skipped > 0 {
        eprintln!("{}", json!({ "warning": "skipped_prompts", "count": curve.skipped }));
    }
    emit(args.out.as_deref(), &curve.to_csv())
}

pub fn tune(args: TuneArgs) -> Result<()> {
    let pool = restrict_pool(load_pool(&args.pool)?, &args.llms)?;
    let ids: Vec<String> = pool.iter().map(|p| p.id.clone()).collect();
    let costs: Vec<f64> = pool.iter().map(|p| p.cost).collect();
    let train_prompts = load_prompts(&args.train_prompts)?;
    let val_prompts = load_prompts(&args.val_prompts)?;
    let train_labels = labels_for(&load_label_table(&args.train_labels)?, &train_prompts, &ids)?;
    let val_labels = labels_for(&load_label_table(&args.val_labels)?, &val_prompts, &ids)?;
    let kind = match args.router {
        TuneRouterArg::Knn => RouterKind::Knn,
        TuneRouterArg::Cluster => RouterKind::KmeansCluster,
        TuneRouterArg::Learned => RouterKind::LearnedMap,
    };
    let candidates = if args.candidates.is_empty() {
        default_candidates(kind, val_prompts.len())
    } else {
        args.candidates.clone()
    };
    let config = SelectionConfig {
        seed: args.seed,
        kmeans_restarts: args.restarts,
        lambdas: (!args.lambdas.is_empty()).then(|| args.lambdas.clone()),
        arch: arch(args.arch),
        train: TrainConfig {
            epochs: args.epochs,
            seed: args.seed,
            ..TrainConfig::default()
        },
    };
    let (train_emb, val_emb) = (embeddings(&train_prompts), embeddings(&val_prompts));
    let data = TuneData {
        train_embeddings: &train_emb,
        train_labels: &train_labels,
        val_embeddings: &val_emb,
        val_labels: &val_labels,
        llm_ids: &ids,
        costs: &costs,
    };
    let selection = select_k(&candidates, kind, data, &config)?;
    let mut out = String::from("k,area,selected\n");
    if selection.fallback {
        out.push_str(&format!("{},,1\n", selection.chosen));
    }
    for (k, area) in &selection.areas {
        out.push_str(&format!("{k},{},{}\n", num(*area), u8::from(*k == selection.chosen)));
    }
    emit(args.out.as_deref(), &out)
}

fn best_quality(labels_path: &Path, llms: &[String]) -> Result<f64> {
    let table = load_label_table(labels_path)?;
    let ids = chosen_ids(llms, &table.llm_ids)?;
    let cols: Vec<usize> = ids
        .iter()
        .map(|id| {
            table
                .llm_ids
                .iter()
                .position(|c| c == id)
                .expect("checked by chosen_ids")
        })
        .collect();
    let rows: Vec<Vec<Option<f64>>> = table
        .rows
        .iter()
        .map(|r| cols.iter().map(|&c| r[c]).collect())
        .collect();
    peak_quality(&routekit::datamodel::LabelMatrix::from_rows(&rows, cols.len())?)
}

pub fn report(args: ReportArgs) -> Result<()> {
    let curve = routekit::evaluation::DeferralCurve::from_csv(&read_text(&args.curve)?)?;
    let peak = match (args.peak_quality, &args.labels) {
        (Some(q), _) => q,
        (None, Some(path)) => best_quality(path, &args.llms)?,
        (None, None) => unreachable!("clap requires one of --peak-quality and --labels"),
    };
    emit(args.out.as_deref(), &(metrics(&curve, peak)?.to_json() + "\n"))
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let path = &args.input;
    let csv_err = |e: csv::Error| Error::Parse {
        path: path.clone(),
        line: e.position().map_or(0, |p| p.line()),
        field: "csv".into(),
        message: e.to_string(),
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: 1,
            field: name.into(),
            message: "no such column".into(),
        })
    };
    let (ia, ib) = (col(&args.a)?, col(&args.b)?);
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize, name: &str| -> Result<f64> {
            let cell = rec.get(i).unwrap_or("").trim();
            cell.parse().map_err(|_| Error::Parse {
                path: path.clone(),
                line,
                field: name.into(),
                message: format!("not a number: {cell:?}"),
            })
        };
        pairs.push((get(ia, &args.a)?, get(ib, &args.b)?));
    }
    let p = routekit::evaluation::sign_test(&pairs)?;
    let wins = pairs.iter().filter(|(a, b)| a > b).count();
    let losses = pairs.iter().filter(|(a, b)| a < b).count();
    let doc = json!({
        "n": pairs.len(),
        "wins": wins,
        "losses": losses,
        "ties": pairs.len() - wins - losses,
        "p_value": rounded(p),
    });
    emit(args.out.as_deref(), &to_json_line(&doc)?)
}
