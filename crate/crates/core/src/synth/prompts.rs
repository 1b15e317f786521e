use crate::trace::{BehaviorLabel, Trace};

pub const EMPTY_RATIONALE: &str = "(none yet)";
const TRACE_SLOT: &str = "[Insert Full Trace Here]";

const SUMMARIZE_TEMPLATE: &str = "You are an expert summarizer. Below is a Long Chain-of-Thought reasoning trace generated by an AI model to solve a complex problem. Your task is to compress this reasoning process into a concise summary.

Input Long Chain-of-Thought Trace:

[Insert Full Trace Here]

Summary:
";

/// What the model is asked to do for each behavior.
pub fn directive(behavior: BehaviorLabel) -> &'static str {
    match behavior {
        BehaviorLabel::Normal => "conduct normal operation on the response",
        BehaviorLabel::Deep => "further deepen the reasoning on the response",
        BehaviorLabel::Reflect => "reflect on the response and provide a self-reflection",
        BehaviorLabel::Explore => "explore a novel reasoning path in the response",
    }
}

/// Generation prompt for one synthesized step.
pub fn render_behavior_prompt(behavior: BehaviorLabel, question: &str, rationale: &str) -> String {
    let d = directive(behavior);
    let mut p = String::with_capacity(1536 + question.len() + rationale.len());
    p.push_str(&format!(
        "Assume that you are a helpful assistant. You will receive a question and a previously reasoned rationale. \
If you can directly get the answer, please output the concise answer with \\boxed{{}}. Otherwise, please {d}.\n\n\
Here are some reasoning behavior definitions:\n"
    ));
    for label in BehaviorLabel::ALL {
        p.push_str(&format!("- {} — {}\n", label.canonical(), label.definition()));
    }
    p.push_str(&format!(
        "\nYou should conduct {} behavior now.\n\nPlease {d}.\n\n",
        behavior.canonical()
    ));
    let rationale = if rationale.trim().is_empty() {
        EMPTY_RATIONALE
    } else {
        rationale
    };
    p.push_str(&format!("Question:\n{question}\n\nRationale:\n{rationale}\n"));
    p
}

/// Summarization prompt with the steps joined by blank lines.
pub fn summarization_prompt(trace: &Trace) -> String {
    let body = trace.step_texts().collect::<Vec<_>>().join("\n\n");
    SUMMARIZE_TEMPLATE.replace(TRACE_SLOT, &body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use BehaviorLabel::*;

    #[test]
    fn behavior_prompts() {
        let p = render_behavior_prompt(Reflect, "q", "r");
        assert!(p.contains("Please reflect on the response and provide a self-reflection."));
        assert!(p.contains("You should conduct self-reflection behavior now."));
        assert!(p.contains("concise answer with \\boxed{}."));
        let d = render_behavior_prompt(Deep, "q", "r");
        assert!(d.contains("Please further deepen the reasoning on the response."));
        for l in BehaviorLabel::ALL {
            assert!(d.contains(l.definition()));
        }
        assert!(render_behavior_prompt(Explore, "q", "").contains("Rationale:\n(none yet)\n"));
    }

    #[test]
    fn summary_embeds_trace() {
        let t = Trace::new("t", "q", ["step one", "step two"], None).unwrap();
        let p = summarization_prompt(&t);
        assert!(p.contains("Input Long Chain-of-Thought Trace:\n\nstep one\n\nstep two\n\nSummary:"));
        assert!(!p.contains(TRACE_SLOT));
    }
}
