//! Bridges from a chat client to the pipeline capabilities in `cotmol_core`.

use cotmol_core::annotate::{build_annotation_prompt, parse_verdict, BehaviorClassifier};
use cotmol_core::synth::Generator;
use cotmol_core::BehaviorLabel;

use crate::client::ChatCompletion;

pub struct LlmClassifier<C> {
    client: C,
    system: Option<String>,
}

impl<C: ChatCompletion> LlmClassifier<C> {
    pub fn new(client: C) -> Self {
        LlmClassifier { client, system: None }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }
}

impl<C: ChatCompletion> BehaviorClassifier for LlmClassifier<C> {
    fn classify(&self, previous: &str, current: &str) -> Result<BehaviorLabel, String> {
        let prompt = build_annotation_prompt(previous, current);
        let ex = self
            .client
            .complete(self.system.as_deref(), &prompt)
            .map_err(|e| e.to_string())?;
        parse_verdict(&ex.response).map_err(|e| e.to_string())
    }
}

pub struct LlmGenerator<C> {
    client: C,
    system: Option<String>,
}

impl<C: ChatCompletion> LlmGenerator<C> {
    pub fn new(client: C) -> Self {
        LlmGenerator { client, system: None }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }
}

impl<C: ChatCompletion> Generator for LlmGenerator<C> {
    fn generate(&self, prompt: &str) -> Result<String, String> {
        self.client
            .complete(self.system.as_deref(), prompt)
            .map(|ex| ex.response)
            .map_err(|e| e.to_string())
    }
}
