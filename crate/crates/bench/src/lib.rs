//! Shared fixtures for the benchmarks.

use bundleseq_core::dataio::{split, Dataset, FeatureEncoder, FeatureSpec, Split};
use bundleseq_core::seqmodels::{ModelConfig, ModelKind, TransformerConfig};
use bundleseq_core::synthgen::{generate, GeneratorSpec};
use bundleseq_core::{Playlist, Session};

pub struct Fixture {
    pub spec: GeneratorSpec,
    pub data: Dataset,
    pub playlist: Playlist,
}

impl Fixture {
    /// Calibrated first-order sessions on `n` tracks, split 90/10.
    pub fn table6(n: usize, sessions: usize) -> Self {
        let spec = GeneratorSpec::table6(n, sessions, 1);
        let data = split(&generate(&spec).expect("valid spec"), 0.9, 1).expect("valid fraction");
        let playlist = spec.playlist().expect("valid playlist");
        Fixture { spec, data, playlist }
    }

    pub fn train(&self) -> Vec<&Session> {
        self.data.sessions_in(&self.spec.playlist_id, Split::Train)
    }

    pub fn test(&self) -> Vec<&Session> {
        self.data.sessions_in(&self.spec.playlist_id, Split::Test)
    }

    pub fn encoder(&self) -> FeatureEncoder {
        FeatureEncoder::fit(FeatureSpec::default(), &self.train(), &self.playlist).expect("training sessions")
    }
}

/// The model size used in the acceptance run on second-order data.
pub fn small_transformer(kind: ModelKind, input_dim: usize) -> ModelConfig {
    let mut c = ModelConfig::new(kind, input_dim);
    c.transformer = TransformerConfig {
        embed_dim: 32,
        n_blocks: 2,
        n_heads: 4,
        head_dim: 8,
        ff_dim: 64,
        ..TransformerConfig::default()
    };
    c.lstm.hidden = 32;
    c.mlp.hidden = 32;
    c
}
