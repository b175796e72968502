//! Caption augmentation through an LLM rewrite service.
//!
//! The flow is: parse an image-caption corpus, ask a chat-completion
//! endpoint to rewrite each caption, keep a rewrite only when its sentence
//! embedding stays close enough to the original, then draw per-epoch
//! training manifests that mix original and rewritten captions.
//!
//! [`retrieval_math`] holds the numeric side: the mixed text/image
//! similarity matrix, the symmetric temperature-scaled contrastive loss with
//! its analytic gradient, and Rank-K / mAP retrieval metrics.
//!
//! [`testkit`] provides deterministic mock endpoints (in-process or over a
//! local socket) and naive reference implementations used by the tests.

pub mod corpus;
pub mod embed_gateway;
pub mod faithfulness;
pub mod llm_gateway;
pub mod pipeline;
pub mod rate_limit;
pub mod retrieval_math;
pub mod sampler;
pub mod testkit;

mod stable_hash;
pub mod transport;

pub use corpus::{CaptionRecord, CorpusFormat, CorpusReport, Split};
pub use embed_gateway::{cosine_similarity, EmbedGateway, Embedding};
pub use faithfulness::{augment_with_retry, judge, AugmentationOutcome, FaithfulnessVerdict};
pub use llm_gateway::{GatewayConfig, LlmGateway, PromptTemplate, RewriteCandidate};
pub use retrieval_math::{FeatureVector, GroundTruth, SimilarityMatrix};
pub use sampler::{bss_select, materialize_epoch, BssChoice, EpochManifest};
