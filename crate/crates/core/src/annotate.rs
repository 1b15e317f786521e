//! Edge labelling: the annotation prompt, verdict parsing, corpus annotation
//! through a pluggable classifier, and agreement scoring.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trace::{BehaviorLabel, LabeledTrace, Trace};

pub const START_OF_TRACE: &str = "(start of trace)";

const VERDICT_PREFIX: &str = "### behavior:";

/// Maps a (previous step, current step) pair to a behavior label.
///
/// Implementations own their retry policy; an `Err` means the edge is
/// exhausted and is surfaced as [`Error::AnnotationFailed`].
pub trait BehaviorClassifier: Sync {
    fn classify(&self, previous: &str, current: &str) -> std::result::Result<BehaviorLabel, String>;
}

impl<F> BehaviorClassifier for F
where
    F: Fn(&str, &str) -> std::result::Result<BehaviorLabel, String> + Sync,
{
    fn classify(&self, previous: &str, current: &str) -> std::result::Result<BehaviorLabel, String> {
        self(previous, current)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationVerdict {
    pub label: BehaviorLabel,
    pub raw_response: String,
}

pub fn build_annotation_prompt(prev_step: &str, cur_step: &str) -> String {
    let prev = if prev_step.trim().is_empty() {
        START_OF_TRACE
    } else {
        prev_step
    };
    let mut p = String::with_capacity(2048 + prev.len() + cur_step.len());
    p.push_str("You are an expert annotator. Classify the CURRENT STEP into exactly one of the following categories of reasoning/behavior:\n");
    for label in BehaviorLabel::ALL {
        p.push_str(&format!("- {} — {}\n", label.canonical(), label.definition()));
    }
    p.push_str(
        "\nDecision rules:\n\
(1) If multiple categories seem to overlap, choose the most specific match based on intent:\n\
  - If the text is about reasoning itself → self-reflection.\n\
  - If the text is branching or speculating → exploration.\n\
  - If the text is extending the reasoning chain with deeper causality or hidden steps → deep reasoning.\n\
  - Otherwise, if it's just direct calculation or straightforward logic → normal operation.\n\
(2) Do not label based on correctness of the reasoning — only on the behavioral style of thinking.\n\
(3) Ignore surface complexity (e.g., long math steps may still be normal operation if they are straightforward).\n\
(4) If mixed, choose the dominant intent; break ties with this priority: self-reflection > exploration > deep reasoning > normal operation.\n\
\n\
Output format (strict):\n\
\n\
Return exactly one line and nothing else:\n\
\n\
### Behavior: {normal operation | deep reasoning | self-reflection | exploration}\n\
\n\
PREVIOUS STEP:\n",
    );
    p.push_str(prev);
    p.push_str("\n\nCURRENT STEP:\n");
    p.push_str(cur_step);
    p.push('\n');
    p
}

/// The line a well-behaved annotator returns for `label`.
pub fn render_verdict(label: BehaviorLabel) -> String {
    format!("### Behavior: {}", label.canonical())
}

pub fn parse_verdict(response: &str) -> Result<BehaviorLabel> {
    let unparsable = || Error::UnparsableVerdict {
        raw: response.to_string(),
    };
    // markdown emphasis around the header is tolerated
    let line = response
        .lines()
        .map(|l| l.replace('*', ""))
        .map(|l| l.trim_start().to_string())
        .find(|l| {
            l.len() >= VERDICT_PREFIX.len()
                && l.is_char_boundary(VERDICT_PREFIX.len())
                && l[..VERDICT_PREFIX.len()].eq_ignore_ascii_case(VERDICT_PREFIX)
        })
        .ok_or_else(unparsable)?;
    let rest = line[VERDICT_PREFIX.len()..].trim();
    let rest = rest.trim_end_matches('.').trim();
    BehaviorLabel::ALL
        .into_iter()
        .find(|l| rest.eq_ignore_ascii_case(l.canonical()))
        .ok_or_else(unparsable)
}

/// Parses and keeps the raw response alongside the label.
pub fn parse_annotation(response: &str) -> Result<AnnotationVerdict> {
    Ok(AnnotationVerdict {
        label: parse_verdict(response)?,
        raw_response: response.to_string(),
    })
}

/// Labels every edge of `trace`; edge `t` sees step `t` as PREVIOUS and
/// step `t + 1` as CURRENT.
pub fn annotate_trace(trace: &Trace, classifier: &dyn BehaviorClassifier) -> Result<LabeledTrace> {
    if trace.len() < 2 {
        return Err(Error::InvalidTrace(format!(
            "trace {:?} has {} step(s); at least 2 are needed to label an edge",
            trace.id(),
            trace.len()
        )));
    }
    let steps = trace.steps();
    let mut labels = Vec::with_capacity(steps.len() - 1);
    for (edge, pair) in steps.windows(2).enumerate() {
        let label = classifier
            .classify(&pair[0].text, &pair[1].text)
            .map_err(|reason| Error::AnnotationFailed {
                trace_id: trace.id().to_string(),
                edge,
                reason,
            })?;
        labels.push(label);
    }
    LabeledTrace::new(trace.clone(), labels)
}

/// Annotates a corpus with up to `workers` edges in flight. The output is
/// identical to annotating every trace sequentially; on failure the error of
/// the lowest (trace, edge) position is returned.
pub fn annotate_corpus(
    traces: &[Trace],
    classifier: &dyn BehaviorClassifier,
    workers: usize,
) -> Result<Vec<LabeledTrace>> {
    for t in traces {
        if t.len() < 2 {
            return Err(Error::InvalidTrace(format!(
                "trace {:?} has {} step(s); at least 2 are needed to label an edge",
                t.id(),
                t.len()
            )));
        }
    }
    let jobs: Vec<(usize, usize)> = traces
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.len() - 1).map(move |e| (ti, e)))
        .collect();
    let results: Mutex<Vec<Option<std::result::Result<BehaviorLabel, String>>>> =
        Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(ti, e)) = jobs.get(k) else { break };
                let steps = traces[ti].steps();
                let r = classifier.classify(&steps[e].text, &steps[e + 1].text);
                results.lock().expect("poisoned")[k] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("poisoned");

    let mut out = Vec::with_capacity(traces.len());
    let mut k = 0;
    for t in traces {
        let mut labels = Vec::with_capacity(t.len() - 1);
        for edge in 0..t.len() - 1 {
            match results[k].clone().expect("every job ran") {
                Ok(l) => labels.push(l),
                Err(reason) => {
                    return Err(Error::AnnotationFailed {
                        trace_id: t.id().to_string(),
                        edge,
                        reason,
                    })
                }
            }
            k += 1;
        }
        out.push(LabeledTrace::new(t.clone(), labels)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    /// F1 for every class seen in gold or predictions.
    pub per_class_f1: BTreeMap<BehaviorLabel, f64>,
    /// Unweighted mean of F1 over classes present in gold.
    pub macro_f1: f64,
    /// `confusion[gold][pred]`, indexed in `N, D, R, E` order.
    pub confusion: [[u64; 4]; 4],
}

pub fn macro_f1(pred: &[BehaviorLabel], gold: &[BehaviorLabel]) -> Result<AgreementReport> {
    if pred.len() != gold.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::shape("no labels to compare"));
    }
    let mut confusion = [[0u64; 4]; 4];
    for (p, g) in pred.iter().zip(gold) {
        confusion[g.index()][p.index()] += 1;
    }
    let mut per_class_f1 = BTreeMap::new();
    let mut macro_sum = 0.0;
    let mut gold_classes = 0usize;
    for label in BehaviorLabel::ALL {
        let c = label.index();
        let tp = confusion[c][c] as f64;
        let gold_count: u64 = confusion[c].iter().sum();
        let pred_count: u64 = confusion.iter().map(|row| row[c]).sum();
        if gold_count == 0 && pred_count == 0 {
            continue;
        }
        let precision = if pred_count > 0 { tp / pred_count as f64 } else { 0.0 };
        let recall = if gold_count > 0 { tp / gold_count as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class_f1.insert(label, f1);
        if gold_count > 0 {
            macro_sum += f1;
            gold_classes += 1;
        }
    }
    Ok(AgreementReport {
        per_class_f1,
        macro_f1: macro_sum / gold_classes as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use BehaviorLabel::*;

    #[test]
    fn prompt_contains_definitions_and_steps() {
        let p = build_annotation_prompt("step A", "step B");
        assert!(p.starts_with("You are an expert annotator."));
        assert!(p.contains("self-reflection > exploration > deep reasoning > normal operation"));
        assert!(p.contains("PREVIOUS STEP:\nstep A\n"));
        assert!(p.contains("CURRENT STEP:\nstep B\n"));
        for l in BehaviorLabel::ALL {
            assert!(p.contains(l.definition()));
        }
        assert_eq!(p, build_annotation_prompt("step A", "step B"));
    }

    #[test]
    fn prompt_marks_start_of_trace() {
        let p = build_annotation_prompt("", "first step");
        assert!(p.contains("PREVIOUS STEP:\n(start of trace)\n"));
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(parse_verdict("### Behavior: deep reasoning").unwrap(), Deep);
        assert_eq!(parse_verdict("### behavior:  Exploration ").unwrap(), Explore);
        assert!(matches!(
            parse_verdict("I think it is reflection"),
            Err(Error::UnparsableVerdict { .. })
        ));
        assert_eq!(parse_verdict("preamble\n### **Behavior:** self-reflection\n").unwrap(), Reflect);
        assert!(parse_verdict("### Behavior: reflection").is_err());
    }

    #[test]
    fn verdict_roundtrip() {
        for l in BehaviorLabel::ALL {
            assert_eq!(parse_verdict(&render_verdict(l)).unwrap(), l);
            assert_eq!(parse_annotation(&render_verdict(l)).unwrap().label, l);
        }
    }

    fn scripted(labels: Vec<std::result::Result<BehaviorLabel, String>>) -> impl BehaviorClassifier {
        let calls = AtomicUsize::new(0);
        move |_: &str, _: &str| labels[calls.fetch_add(1, Ordering::SeqCst)].clone()
    }

    #[test]
    fn annotate_passthrough() {
        let t = Trace::new("t", "q", ["a", "b", "c"], None).unwrap();
        let c = scripted(vec![Ok(Deep), Ok(Reflect)]);
        let lt = annotate_trace(&t, &c).unwrap();
        assert_eq!(lt.labels(), [Deep, Reflect]);
    }

    #[test]
    fn annotate_rejects_single_step() {
        let t = Trace::new("t", "q", ["only"], None).unwrap();
        let c = scripted(vec![]);
        assert!(matches!(annotate_trace(&t, &c), Err(Error::InvalidTrace(_))));
    }

    #[test]
    fn annotate_surfaces_failed_edge() {
        let t = Trace::new("t", "q", ["a", "b", "c"], None).unwrap();
        let c = scripted(vec![Ok(Deep), Err("exhausted".into())]);
        assert!(matches!(
            annotate_trace(&t, &c),
            Err(Error::AnnotationFailed { edge: 1, .. })
        ));
    }

    #[test]
    fn corpus_annotation_is_order_independent() {
        let traces: Vec<Trace> = (0..6)
            .map(|i| Trace::new(format!("t{i}"), "q", (0..=i + 1).map(|k| format!("{i}-{k}")), None).unwrap())
            .collect();
        // label depends only on the step text, so any completion order works
        let c = |_: &str, cur: &str| -> std::result::Result<BehaviorLabel, String> {
            let k: usize = cur.split('-').nth(1).unwrap().parse().unwrap();
            Ok(BehaviorLabel::ALL[k % 4])
        };
        let seq: Vec<_> = traces.iter().map(|t| annotate_trace(t, &c).unwrap()).collect();
        assert_eq!(annotate_corpus(&traces, &c, 4).unwrap(), seq);
        assert_eq!(annotate_corpus(&traces, &c, 1).unwrap(), seq);
    }

    #[test]
    fn corpus_annotation_reports_lowest_failure() {
        let traces: Vec<Trace> = (0..3)
            .map(|i| Trace::new(format!("t{i}"), "q", ["a", "b", &format!("fail{i}")], None).unwrap())
            .collect();
        let c = |_: &str, cur: &str| -> std::result::Result<BehaviorLabel, String> {
            if cur.starts_with("fail") && cur != "fail0" {
                Err("boom".into())
            } else {
                Ok(Normal)
            }
        };
        match annotate_corpus(&traces, &c, 3) {
            Err(Error::AnnotationFailed { trace_id, edge, .. }) => {
                assert_eq!(trace_id, "t1");
                assert_eq!(edge, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn macro_f1_identity() {
        let gold = [Normal, Deep, Reflect, Explore, Deep];
        let r = macro_f1(&gold, &gold).unwrap();
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn macro_f1_hand_computed() {
        // D: P=1, R=1/2 -> 2/3; R: P=2/3, R=1 -> 4/5; mean 11/15
        let r = macro_f1(&[Deep, Reflect, Reflect, Reflect], &[Deep, Deep, Reflect, Reflect]).unwrap();
        assert!((r.per_class_f1[&Deep] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class_f1[&Reflect] - 0.8).abs() < 1e-12);
        assert!((r.macro_f1 - 11.0 / 15.0).abs() < 1e-12);
        assert_eq!(r.confusion[Deep.index()][Reflect.index()], 1);
    }

    #[test]
    fn macro_f1_disjoint_and_errors() {
        let r = macro_f1(&[Reflect; 3], &[Deep; 3]).unwrap();
        assert_eq!(r.macro_f1, 0.0);
        assert!(matches!(macro_f1(&[Deep], &[Deep, Deep]), Err(Error::Shape(_))));
    }
}
