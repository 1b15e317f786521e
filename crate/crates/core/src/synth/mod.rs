//! Trace synthesis by random walks over a target transfer graph, plus
//! keyword and summarization transforms.

mod keywords;
mod prompts;

pub use keywords::{
    apply_keyword_plan, find_keywords, remove_keywords, residual_originals, rewrite_text, KeywordMatch,
    KeywordRow, KeywordTable, PlanId, Rewrite,
};
pub use prompts::{directive, render_behavior_prompt, summarization_prompt, EMPTY_RATIONALE};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bondgraph::{pearson, total_variation, MarginalDistribution, TransitionMatrix, K};
use crate::error::{Error, Result};
use crate::seed;
use crate::trace::{extract_boxed, BehaviorLabel, LabeledTrace, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub transition: TransitionMatrix,
    pub start: BehaviorLabel,
    pub max_steps: usize,
    pub stop_on_boxed: bool,
    pub seed: u64,
    /// Only the last `n` steps go into the rationale; all of them if `None`.
    pub rationale_window: Option<usize>,
}

impl SynthesisConfig {
    pub fn new(transition: TransitionMatrix, max_steps: usize, seed: u64) -> Self {
        SynthesisConfig {
            transition,
            start: BehaviorLabel::Explore,
            max_steps,
            stop_on_boxed: true,
            seed,
            rationale_window: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::bad_config("max_steps must be at least 1"));
        }
        for (i, row) in self.transition.p().iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::bad_config(format!("transition row {i} is not a distribution")));
            }
        }
        Ok(())
    }
}

/// Behavior sequence of one walk: `max_steps` labels starting at `start`.
pub fn sample_walk(cfg: &SynthesisConfig) -> Result<Vec<BehaviorLabel>> {
    cfg.validate()?;
    let chain = cfg.transition.chain();
    let mut rng = seed::task_rng(cfg.seed, "walk", 0);
    let mut cur = cfg.start.index();
    let mut out = Vec::with_capacity(cfg.max_steps);
    out.push(cfg.start);
    while out.len() < cfg.max_steps {
        cur = chain.sample_next(cur, &mut rng);
        out.push(BehaviorLabel::from_index(cur).expect("four states"));
    }
    Ok(out)
}

/// Text generation backend. An `Err` means retries are exhausted.
pub trait Generator: Sync {
    fn generate(&self, prompt: &str) -> std::result::Result<String, String>;
}

impl<F> Generator for F
where
    F: Fn(&str) -> std::result::Result<String, String> + Sync,
{
    fn generate(&self, prompt: &str) -> std::result::Result<String, String> {
        self(prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Boxed,
    MaxSteps,
    ClientFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticStep {
    pub behavior: BehaviorLabel,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTrace {
    pub question: String,
    pub steps: Vec<SyntheticStep>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_answer: Option<String>,
    pub terminated_by: Termination,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl SyntheticTrace {
    pub fn behaviors(&self) -> Vec<BehaviorLabel> {
        self.steps.iter().map(|s| s.behavior).collect()
    }

    /// As a trace whose edge `t` carries the behavior of step `t + 1`.
    pub fn to_labeled(&self, id: impl Into<String>) -> Result<LabeledTrace> {
        let trace = Trace::new(
            id,
            self.question.clone(),
            self.steps.iter().map(|s| s.text.as_str()),
            self.final_answer.clone(),
        )?;
        LabeledTrace::new(trace, self.steps.iter().skip(1).map(|s| s.behavior).collect())
    }
}

fn rationale(steps: &[SyntheticStep], window: Option<usize>) -> String {
    let skip = window.map_or(0, |w| steps.len().saturating_sub(w));
    steps[skip..]
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Walks the chain, asking `generator` for one step per behavior until a
/// boxed answer appears or the walk ends. A generator failure ends the trace
/// with the steps produced so far.
pub fn synthesize(question: &str, cfg: &SynthesisConfig, generator: &dyn Generator) -> Result<SyntheticTrace> {
    let walk = sample_walk(cfg)?;
    let mut steps: Vec<SyntheticStep> = Vec::with_capacity(walk.len());
    for &behavior in &walk {
        let prompt = render_behavior_prompt(behavior, question, &rationale(&steps, cfg.rationale_window));
        let text = match generator.generate(&prompt) {
            Ok(t) => t,
            Err(e) => {
                return Ok(SyntheticTrace {
                    question: question.to_string(),
                    steps,
                    final_answer: None,
                    terminated_by: Termination::ClientFailure,
                    seed: cfg.seed,
                    error: Some(e),
                })
            }
        };
        // an unclosed box is just text without an answer
        let answer = if cfg.stop_on_boxed {
            extract_boxed(&text).ok().flatten()
        } else {
            None
        };
        steps.push(SyntheticStep { behavior, text });
        if let Some(a) = answer {
            return Ok(SyntheticTrace {
                question: question.to_string(),
                steps,
                final_answer: Some(a),
                terminated_by: Termination::Boxed,
                seed: cfg.seed,
                error: None,
            });
        }
    }
    Ok(SyntheticTrace {
        question: question.to_string(),
        steps,
        final_answer: None,
        terminated_by: Termination::MaxSteps,
        seed: cfg.seed,
        error: None,
    })
}

/// Synthesizes every question with `workers` threads; question `i` uses the
/// seed derived from `(cfg.seed, i)`. Output order follows the input.
pub fn synthesize_batch(
    questions: &[String],
    cfg: &SynthesisConfig,
    generator: &dyn Generator,
    workers: usize,
) -> Result<Vec<SyntheticTrace>> {
    cfg.validate()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SyntheticTrace>>>> = Mutex::new((0..questions.len()).map(|_| None).collect());
    let run = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= questions.len() {
            break;
        }
        let qcfg = SynthesisConfig {
            seed: seed::derive(cfg.seed, "synth", i as u64),
            ..cfg.clone()
        };
        let r = synthesize(&questions[i], &qcfg, generator);
        slots.lock().expect("result lock")[i] = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(questions.len().max(1)) {
            s.spawn(run);
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every question processed"))
        .collect()
}

/// Sets `P(target | b) = prob` in every row and rescales the other entries
/// to fill the rest; rows with no other mass spread it uniformly.
pub fn override_transition(p: &TransitionMatrix, target: BehaviorLabel, prob: f64) -> Result<TransitionMatrix> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::bad_config(format!("override probability must lie in [0, 1], got {prob}")));
    }
    let t = target.index();
    let mut out = *p.p();
    for row in out.iter_mut() {
        let rest: f64 = (0..K).filter(|&j| j != t).map(|j| row[j]).sum();
        for j in 0..K {
            if j == t {
                row[j] = prob;
            } else if rest > 0.0 {
                row[j] *= (1.0 - prob) / rest;
            } else {
                row[j] = (1.0 - prob) / (K - 1) as f64;
            }
        }
    }
    TransitionMatrix::from_probabilities(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftReport {
    pub tv: f64,
    pub pearson: f64,
}

/// Marginal total variation and transition-matrix Pearson between two
/// transfer graphs.
pub fn distribution_shift(
    pi_a: &MarginalDistribution,
    pi_b: &MarginalDistribution,
    p_a: &TransitionMatrix,
    p_b: &TransitionMatrix,
) -> Result<ShiftReport> {
    Ok(ShiftReport {
        tv: total_variation(&pi_a.pi, &pi_b.pi),
        pearson: pearson(p_a, p_b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use BehaviorLabel::*;

    fn det(pairs: &[(BehaviorLabel, BehaviorLabel)]) -> TransitionMatrix {
        let mut p = [[0.25; K]; K];
        for &(a, b) in pairs {
            p[a.index()] = [0.0; K];
            p[a.index()][b.index()] = 1.0;
        }
        TransitionMatrix::from_probabilities(p).unwrap()
    }

    #[test]
    fn absorbing_and_cycle() {
        let cfg = SynthesisConfig::new(det(&[(Explore, Explore)]), 5, 0);
        assert_eq!(sample_walk(&cfg).unwrap(), vec![Explore; 5]);
        let cyc = SynthesisConfig::new(det(&[(Explore, Deep), (Deep, Reflect), (Reflect, Explore)]), 4, 9);
        assert_eq!(sample_walk(&cyc).unwrap(), vec![Explore, Deep, Reflect, Explore]);
        let zero = SynthesisConfig::new(det(&[]), 0, 0);
        assert!(sample_walk(&zero).is_err());
    }

    #[test]
    fn scripted_termination() {
        let cfg = SynthesisConfig::new(TransitionMatrix::uniform(), 10, 3);
        let calls = AtomicUsize::new(0);
        let gen = |_: &str| -> std::result::Result<String, String> {
            let n = calls.fetch_add(1, Ordering::SeqCst) + 1;
            Ok(if n == 3 { "so \\boxed{7}".into() } else { format!("step {n}") })
        };
        let t = synthesize("q", &cfg, &gen).unwrap();
        assert_eq!(t.steps.len(), 3);
        assert_eq!(t.final_answer.as_deref(), Some("7"));
        assert_eq!(t.terminated_by, Termination::Boxed);
        assert_eq!(t.steps[0].behavior, Explore);
    }

    #[test]
    fn cap_and_failure() {
        let cfg = SynthesisConfig::new(TransitionMatrix::uniform(), 4, 3);
        let never = |_: &str| -> std::result::Result<String, String> { Ok("thinking".into()) };
        let t = synthesize("q", &cfg, &never).unwrap();
        assert_eq!((t.steps.len(), t.terminated_by), (4, Termination::MaxSteps));

        let calls = AtomicUsize::new(0);
        let flaky = |_: &str| -> std::result::Result<String, String> {
            if calls.fetch_add(1, Ordering::SeqCst) == 1 {
                Err("exhausted".into())
            } else {
                Ok("fine".into())
            }
        };
        let t = synthesize("q", &cfg, &flaky).unwrap();
        assert_eq!((t.steps.len(), t.terminated_by), (1, Termination::ClientFailure));
    }

    #[test]
    fn prompts_carry_rationale() {
        let mut cfg = SynthesisConfig::new(TransitionMatrix::uniform(), 3, 1);
        cfg.rationale_window = Some(1);
        let seen = Mutex::new(Vec::new());
        let gen = |p: &str| -> std::result::Result<String, String> {
            let mut s = seen.lock().unwrap();
            s.push(p.to_string());
            Ok(format!("text{}", s.len()))
        };
        synthesize("what?", &cfg, &gen).unwrap();
        let s = seen.lock().unwrap();
        assert!(s[0].contains("Rationale:\n(none yet)"));
        assert!(s[2].contains("Rationale:\ntext2\n") && !s[2].contains("text1"));
    }

    #[test]
    fn override_rows() {
        let p = override_transition(&TransitionMatrix::uniform(), Deep, 0.5).unwrap();
        for row in p.p() {
            assert!((row[Deep.index()] - 0.5).abs() < 1e-12);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((row[Normal.index()] - 0.5 / 3.0).abs() < 1e-12);
        }
        let q = override_transition(&det(&[(Deep, Deep)]), Deep, 0.4).unwrap();
        assert!((q.get(Deep, Normal) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn shift_examples() {
        let a = MarginalDistribution::new([0.25; 4]).unwrap();
        let b = MarginalDistribution::new([0.55, 0.15, 0.15, 0.15]).unwrap();
        let p = det(&[(Deep, Reflect)]);
        let s = distribution_shift(&a, &b, &p, &p).unwrap();
        assert!((s.tv - 0.30).abs() < 1e-12);
        assert!((s.pearson - 1.0).abs() < 1e-12);
        assert_eq!(distribution_shift(&a, &a, &p, &p).unwrap().tv, 0.0);
    }

    #[test]
    fn batch_is_ordered_and_seeded() {
        let cfg = SynthesisConfig::new(TransitionMatrix::uniform(), 6, 5);
        let echo = |p: &str| -> std::result::Result<String, String> { Ok(format!("{}", p.len())) };
        let qs: Vec<String> = (0..7).map(|i| format!("q{i}")).collect();
        let a = synthesize_batch(&qs, &cfg, &echo, 3).unwrap();
        let b = synthesize_batch(&qs, &cfg, &echo, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[4].question, "q4");
        assert_eq!(a[4].seed, seed::derive(5, "synth", 4));
    }
}
