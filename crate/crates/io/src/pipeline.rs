//! End-to-end construction of cases from questions and live endpoints.

use futures::stream::{self, StreamExt, TryStreamExt};
use xcheck_core::{QuestionCase, SamplingConfig};

use crate::cache::MatrixCache;
use crate::client::{EntailClient, GenerationClient};
use crate::error::Result;

/// Questions processed concurrently; requests stay bounded by each
/// endpoint's in-flight limit.
const QUESTION_CONCURRENCY: usize = 32;

pub struct Pipeline<'a> {
    pub target: &'a GenerationClient,
    pub verifier: Option<&'a GenerationClient>,
    pub entail: &'a EntailClient,
    pub cache: Option<&'a MatrixCache>,
    pub sampling: SamplingConfig,
}

impl Pipeline<'_> {
    /// Fills answers and matrices. Other fields of each input case (label,
    /// unknown fields) are kept. Output order follows input order.
    pub async fn run(&self, questions: Vec<QuestionCase>) -> Result<Vec<QuestionCase>> {
        self.sampling.validate()?;
        stream::iter(questions)
            .map(|case| self.complete(case))
            .buffered(QUESTION_CONCURRENCY)
            .try_collect()
            .await
    }

    pub async fn complete(&self, mut case: QuestionCase) -> Result<QuestionCase> {
        let s = &self.sampling;
        let low = self.target.sample_answers(&case.question, 1, s.tau).await?;
        let samples = self.target.sample_answers(&case.question, s.m, s.tau_prime).await?;
        let verifier_samples = match self.verifier {
            Some(v) => Some(v.sample_answers(&case.question, s.m, s.tau_prime).await?),
            None => None,
        };
        let p_self = self.entail.entail_matrix(&samples, None, self.cache).await?;
        let p_cross = match &verifier_samples {
            Some(vs) => Some(self.entail.entail_matrix(&samples, Some(vs), self.cache).await?),
            None => None,
        };
        case.low_temp_answer = low.into_iter().next();
        case.target_samples = Some(samples);
        case.verifier_samples = verifier_samples;
        case.p_self = Some(p_self);
        case.p_cross = p_cross;
        Ok(case)
    }
}
