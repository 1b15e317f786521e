use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context as _};
use cotmol_core::energy::{
    bond_energies, build_path_graph, concentration_mc, ergodic_energy_sim, ordering_report_with, read_attention,
    read_spans, rope_mc, routing_check, sample_bound, softmin_energy, BondEnergySample, BondOptions,
    ConcentrationReport, ErgodicConfig, ErgodicReport, ExploreOrientation, OrderingReport, RhoFamily, RopeConfig,
    RopeReport, RopeSampler, RoutingCheck, Rotation, Spread,
};
use cotmol_core::geometry::read_embeddings;
use cotmol_core::BehaviorLabel;
use serde::Serialize;

use super::common::{labeled_corpus, load_graph, parse_f64};
use crate::args::{EmpiricalArgs, ErgodicArgs, Orientation, PathsArgs, RopeArgs, Sampler};
use crate::context::{cell, opt_cell, usage, CmdResult, Ctx, Outcome, Payload, Table};

#[derive(Serialize)]
struct EmpiricalReport {
    ordering: OrderingReport,
    samples: Vec<BondEnergySample>,
}

fn attention_file(dir: &std::path::Path, id: &str) -> Option<PathBuf> {
    [format!("{id}.catt"), format!("{id}.attn.jsonl")]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
}

pub fn empirical(ctx: &mut Ctx, a: &EmpiricalArgs) -> CmdResult<Outcome> {
    if a.resamples < 2 {
        return usage("--resamples must be at least 2");
    }
    if !a.attention_dir.is_dir() {
        return usage(format!("{} is not a directory", a.attention_dir.display()));
    }
    let corpus = labeled_corpus(ctx, &a.labeled)?;
    let embs = match &a.embeddings {
        Some(p) => read_embeddings(ctx.input(p)?)?,
        None => Vec::new(),
    };
    let by_id: HashMap<&str, &[Vec<f64>]> = embs.iter().map(|e| (e.trace_id.as_str(), e.vectors.as_slice())).collect();
    let opts = BondOptions {
        explore: match a.explore {
            Orientation::Forward => ExploreOrientation::Forward,
            Orientation::Backward => ExploreOrientation::Backward,
        },
    };
    let mut samples = Vec::new();
    for lt in &corpus {
        let id = lt.trace().id();
        let attn_path = attention_file(&a.attention_dir, id)
            .ok_or_else(|| anyhow!("no attention file for trace {id:?} in {}", a.attention_dir.display()))?;
        let spans_path = a.attention_dir.join(format!("{id}.spans.json"));
        let mut attn = read_attention(ctx.input(&attn_path)?).with_context(|| attn_path.display().to_string())?;
        if a.weights {
            attn = attn.from_weights()?;
        }
        let spans = read_spans(ctx.input(&spans_path)?).with_context(|| spans_path.display().to_string())?;
        let s = bond_energies(lt, &attn, &spans, by_id.get(id).copied(), opts)
            .with_context(|| format!("trace {id:?}"))?;
        samples.extend(s);
    }
    let ordering = ordering_report_with(&samples, ctx.task_seed("bootstrap"), a.resamples, ctx.exec)?;
    let mut t = Table::new(&["trace_id", "edge", "bond", "energy", "query_token", "key_token"]);
    for s in &samples {
        t.push(vec![
            s.trace_id.clone(),
            s.edge_index.to_string(),
            s.bond.code().into(),
            cell(s.energy),
            s.query_token.to_string(),
            s.key_token.to_string(),
        ]);
    }
    let line = format!("{} bond energies, deep < reflect < explore: {}", samples.len(), ordering.ordering_holds);
    Ok(Outcome {
        primary: Payload::report(&EmpiricalReport { ordering, samples }, Some(t))?,
        extras: vec![],
        summary: line,
    })
}

fn parse_rho(s: &str) -> CmdResult<RhoFamily> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let nums: Vec<&str> = rest.split(',').filter(|x| !x.is_empty()).collect();
    match (kind.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
        ("geom" | "geometric", [r, g]) => Ok(RhoFamily::Geometric {
            rho0: parse_f64("--rho", r)?,
            gamma: parse_f64("--rho", g)?,
        }),
        ("const" | "constant", [r]) => Ok(RhoFamily::Constant {
            rho: parse_f64("--rho", r)?,
        }),
        _ => usage(format!("--rho expects geom:RHO0,GAMMA or const:RHO, got {s:?}")),
    }
}

fn parse_rotation(s: &str) -> CmdResult<Rotation> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind.trim().to_ascii_lowercase().as_str() {
        "identity" if rest.is_empty() => Ok(Rotation::Identity),
        "rotary" if rest.is_empty() => Ok(Rotation::default()),
        "rotary" => Ok(Rotation::Rotary {
            base: parse_f64("--rotation", rest)?,
        }),
        _ => usage(format!("--rotation expects rotary[:BASE] or identity, got {s:?}")),
    }
}

#[derive(Serialize)]
struct RopeOutput {
    config: RopeConfig,
    report: RopeReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    concentration: Option<ConcentrationReport>,
}

pub fn rope(ctx: &mut Ctx, a: &RopeArgs) -> CmdResult<Outcome> {
    let distances: [usize; 3] = match a.distances.as_slice() {
        [x, y, z] => [*x, *y, *z],
        _ => return usage("--distances takes exactly three values"),
    };
    if a.experiments > 0 && !(a.sigma > 0.0 && a.epsilon > 0.0 && a.delta > 0.0 && a.delta < 1.0) {
        return usage("--sigma and --epsilon must be positive and --delta in (0, 1)");
    }
    let cfg = RopeConfig {
        d_k: a.dk,
        rho: parse_rho(&a.rho)?,
        rotation: parse_rotation(&a.rotation)?,
        distances,
        samples: a.n,
        seed: ctx.master_seed("rope-mc"),
        sampler: match a.sampler {
            Sampler::Full => RopeSampler::Full,
            Sampler::Reduced => RopeSampler::Reduced,
        },
    };
    let report = rope_mc(&cfg, ctx.exec)?;
    let concentration = if a.experiments > 0 {
        let means = [0, 1, 2].map(|k| report.estimates[k].theory_logit);
        Some(concentration_mc(
            means,
            a.sigma,
            a.epsilon,
            a.delta,
            a.experiments,
            ctx.task_seed("concentration"),
            ctx.exec,
        )?)
    } else {
        None
    };
    let mut t = Table::new(&[
        "distance", "rho", "mu", "theory_logit", "mean_logit", "sd", "tolerance", "within_tolerance",
    ]);
    for e in &report.estimates {
        t.push(vec![
            e.distance.to_string(),
            cell(e.rho),
            cell(e.mu),
            cell(e.theory_logit),
            cell(e.mean_logit),
            cell(e.sd),
            cell(e.tolerance),
            e.within_tolerance.to_string(),
        ]);
    }
    let mut line = format!(
        "ordering holds: {}, all within tolerance: {}",
        report.ordering_holds,
        report.estimates.iter().all(|e| e.within_tolerance)
    );
    if let Some(c) = &concentration {
        line.push_str(&format!(
            "; N = {} ({} from the bound), failure rate {:.4}",
            c.n,
            sample_bound(a.sigma, a.epsilon, a.delta)?,
            c.failure_rate
        ));
    }
    Ok(Outcome {
        primary: Payload::report(&RopeOutput { config: cfg, report, concentration }, Some(t))?,
        extras: vec![],
        summary: line,
    })
}

fn parse_mu(items: &[String]) -> CmdResult<Vec<f64>> {
    if items.iter().all(|s| s.contains('=')) && !items.is_empty() {
        let mut mu = [None; 4];
        for s in items {
            let (k, v) = s.split_once('=').expect("checked");
            let b: BehaviorLabel = match k.parse() {
                Ok(b) => b,
                Err(e) => return usage(e.to_string()),
            };
            mu[b.index()] = Some(parse_f64("--mu", v)?);
        }
        return mu
            .iter()
            .enumerate()
            .map(|(i, m)| match m {
                Some(v) => Ok(*v),
                None => usage(format!("--mu is missing behavior {}", BehaviorLabel::ALL[i].code())),
            })
            .collect();
    }
    if items.len() != 4 {
        return usage("--mu takes four values in N,D,R,E order or BEHAVIOR=VALUE pairs");
    }
    items.iter().map(|s| parse_f64("--mu", s)).collect()
}

fn parse_spread(s: &str) -> CmdResult<Spread> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let vals = || -> CmdResult<Vec<f64>> {
        let v: Vec<f64> = rest.split(',').map(|x| parse_f64("--spread", x)).collect::<CmdResult<_>>()?;
        match v.len() {
            1 => Ok(vec![v[0]; 4]),
            4 => Ok(v),
            _ => usage("--spread takes one value or four values"),
        }
    };
    match kind.trim().to_ascii_lowercase().as_str() {
        "zero" if rest.is_empty() => Ok(Spread::Zero),
        "normal" => Ok(Spread::Normal { sd: vals()? }),
        "uniform" => Ok(Spread::Uniform { half_width: vals()? }),
        _ => usage(format!("--spread expects zero, normal:SD.. or uniform:HW.., got {s:?}")),
    }
}

#[derive(Serialize)]
struct ErgodicOutput {
    ergodic: ErgodicReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    routing: Option<RoutingCheck>,
}

pub fn ergodic(ctx: &mut Ctx, a: &ErgodicArgs) -> CmdResult<Outcome> {
    let mu = parse_mu(&a.mu)?;
    let spread = parse_spread(&a.spread)?;
    if a.steps == 0 {
        return usage("--steps must be positive");
    }
    let (p, _) = load_graph(ctx, &a.graph, 0.0)?;
    let cfg = ErgodicConfig {
        mu: mu.clone(),
        spread,
        steps: a.steps,
        seed: ctx.master_seed("ergodic"),
    };
    let rep = ergodic_energy_sim(&p.chain(), &cfg)?;
    let routing = if a.routing_trials > 0 {
        Some(routing_check(a.routing_trials, a.routing_candidates, ctx.task_seed("routing"), ctx.exec)?)
    } else {
        None
    };
    let mut t = Table::new(&["behavior", "mu", "stationary", "frequency", "class_mean"]);
    for b in BehaviorLabel::ALL {
        let i = b.index();
        t.push(vec![
            b.code().into(),
            cell(mu[i]),
            cell(rep.stationary[i]),
            cell(rep.frequencies[i]),
            opt_cell(rep.class_means[i]),
        ]);
    }
    let line = format!(
        "E_hat {:.6} vs limit {:.6}, gap {:.2e} (bound {:.2e})",
        rep.e_hat, rep.e_limit, rep.gap, rep.bound
    );
    Ok(Outcome {
        primary: Payload::report(&ErgodicOutput { ergodic: rep, routing }, Some(t))?,
        extras: vec![],
        summary: line,
    })
}

pub fn paths(ctx: &mut Ctx, a: &PathsArgs) -> CmdResult<Outcome> {
    if !(a.edge_threshold >= 0.0 && a.edge_threshold < 1.0) {
        return usage("--edge-threshold must lie in [0, 1)");
    }
    let mut attn = read_attention(ctx.input(&a.attention)?)?;
    if a.weights {
        attn = attn.from_weights()?;
    }
    let spans = read_spans(ctx.input(&a.spans)?)?;
    let steps = spans.0.len();
    if steps == 0 {
        return Err(anyhow!("{} lists no steps", a.spans.display()).into());
    }
    let target = a.target.unwrap_or(steps - 1);
    if a.source >= steps || target >= steps {
        return usage(format!("--source and --target must be below the step count {steps}"));
    }
    let g = build_path_graph(&attn, &spans, a.edge_threshold)?;
    let sm = softmin_energy(&g, a.source, target, a.limit)?;
    let mut t = Table::new(&["path", "energy"]);
    for (p, e) in sm.paths.iter().flatten() {
        let nodes: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        t.push(vec![nodes.join("-"), cell(*e)]);
    }
    let line = format!("{} paths, soft-min energy {:.6}", sm.path_count, sm.e_star);
    Ok(Outcome {
        primary: Payload::report(&sm, Some(t))?,
        extras: vec![],
        summary: line,
    })
}
