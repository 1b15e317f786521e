use cotmol_core::bondgraph::{
    estimate_with, pearson, pearson_restricted, stability_curve, total_variation, StabilityConfig, TransferGraph, K,
};
use cotmol_core::synth::distribution_shift;
use cotmol_core::BehaviorLabel;
use serde::Serialize;

use super::common::{behaviors, check_smoothing, labeled_corpus, load_graph};
use crate::args::{CompareArgs, EstimateArgs, ShiftArgs, StabilityArgs};
use crate::context::{cell, usage, CmdResult, Ctx, Outcome, Payload, Table};

pub fn estimate(ctx: &mut Ctx, a: &EstimateArgs) -> CmdResult<Outcome> {
    check_smoothing(a.smoothing)?;
    let corpus = labeled_corpus(ctx, &a.input)?;
    let (p, pi) = estimate_with(&corpus, a.smoothing, ctx.exec)?;
    let graph = TransferGraph::new(&p, &pi);
    let mut t = Table::new(&["from", "to", "count", "p"]);
    for from in BehaviorLabel::ALL {
        for to in BehaviorLabel::ALL {
            t.push(vec![
                from.code().into(),
                to.code().into(),
                p.counts()[from.index()][to.index()].to_string(),
                cell(p.get(from, to)),
            ]);
        }
    }
    let erg = p.ergodicity();
    let unseen: Vec<&str> = BehaviorLabel::ALL
        .iter()
        .filter(|b| p.zero_evidence()[b.index()])
        .map(|b| b.code())
        .collect();
    let mut summary = format!(
        "{} traces, {} transitions, ergodic: {}",
        corpus.len(),
        p.counts().iter().flatten().sum::<u64>(),
        erg.ergodic
    );
    if !unseen.is_empty() {
        summary.push_str(&format!("; rows without evidence (uniform): {}", unseen.join(",")));
    }
    Ok(Outcome {
        primary: Payload::report(&graph, Some(t))?,
        extras: vec![],
        summary,
    })
}

#[derive(Serialize)]
struct Comparison {
    pearson: f64,
    behaviors: Vec<BehaviorLabel>,
    pearson_restricted: f64,
    marginal_tv: f64,
    /// Total variation between corresponding rows.
    row_tv: Vec<f64>,
    max_abs_diff: f64,
}

pub fn compare(ctx: &mut Ctx, a: &CompareArgs) -> CmdResult<Outcome> {
    check_smoothing(a.smoothing)?;
    let keep = behaviors(&a.behaviors)?;
    let (pa, pia) = load_graph(ctx, &a.a, a.smoothing)?;
    let (pb, pib) = load_graph(ctx, &a.b, a.smoothing)?;
    let row_tv: Vec<f64> = (0..K).map(|i| total_variation(&pa.p()[i], &pb.p()[i])).collect();
    let max_abs_diff = pa
        .flattened()
        .iter()
        .zip(pb.flattened())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let c = Comparison {
        pearson: pearson(&pa, &pb)?,
        pearson_restricted: pearson_restricted(&pa, &pb, &keep)?,
        behaviors: keep,
        marginal_tv: pia.total_variation(&pib),
        row_tv,
        max_abs_diff,
    };
    let mut t = Table::new(&["metric", "value"]);
    t.push(vec!["pearson".into(), cell(c.pearson)]);
    t.push(vec!["pearson_restricted".into(), cell(c.pearson_restricted)]);
    t.push(vec!["marginal_tv".into(), cell(c.marginal_tv)]);
    t.push(vec!["max_abs_diff".into(), cell(c.max_abs_diff)]);
    for (b, v) in BehaviorLabel::ALL.iter().zip(&c.row_tv) {
        t.push(vec![format!("row_tv_{}", b.code()), cell(*v)]);
    }
    let summary = format!("pearson {:.4}, marginal TV {:.4}", c.pearson, c.marginal_tv);
    Ok(Outcome {
        primary: Payload::report(&c, Some(t))?,
        extras: vec![],
        summary,
    })
}

pub fn stability(ctx: &mut Ctx, a: &StabilityArgs) -> CmdResult<Outcome> {
    check_smoothing(a.smoothing)?;
    if a.trials < 2 {
        return usage("--trials must be at least 2");
    }
    if a.sizes.is_empty() || a.sizes.windows(2).any(|w| w[0] >= w[1]) || a.sizes[0] == 0 {
        return usage("--sizes must be positive and strictly increasing");
    }
    let keep = behaviors(&a.behaviors)?;
    let corpus = labeled_corpus(ctx, &a.input)?;
    let cfg = StabilityConfig {
        sizes: a.sizes.clone(),
        trials: a.trials,
        seed: ctx.master_seed("stability"),
        smoothing: a.smoothing,
        behaviors: if keep.len() == K { Vec::new() } else { keep },
        exec: ctx.exec,
    };
    let curve = stability_curve(&corpus, &cfg)?;
    let mut t = Table::new(&["sample_size", "mean_pearson", "std", "trials"]);
    for p in &curve.points {
        t.push(vec![p.sample_size.to_string(), cell(p.mean_pearson), cell(p.std), p.trials.to_string()]);
    }
    let summary = curve
        .points
        .iter()
        .map(|p| format!("N={}: {:.4}", p.sample_size, p.mean_pearson))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome {
        primary: Payload::report(&curve, Some(t))?,
        extras: vec![],
        summary,
    })
}

pub fn shift(ctx: &mut Ctx, a: &ShiftArgs) -> CmdResult<Outcome> {
    check_smoothing(a.smoothing)?;
    let (pa, pia) = load_graph(ctx, &a.a, a.smoothing)?;
    let (pb, pib) = load_graph(ctx, &a.b, a.smoothing)?;
    let r = distribution_shift(&pia, &pib, &pa, &pb)?;
    let mut t = Table::new(&["metric", "value"]);
    t.push(vec!["tv".into(), cell(r.tv)]);
    t.push(vec!["pearson".into(), cell(r.pearson)]);
    let summary = format!("TV {:.4}, pearson {:.4}", r.tv, r.pearson);
    Ok(Outcome {
        primary: Payload::report(&r, Some(t))?,
        extras: vec![],
        summary,
    })
}
