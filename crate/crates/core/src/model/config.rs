use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decoder-only transformer shape.
///
/// Embeddings are tied with the output projection and no layer carries a
/// bias, so the parameter count has the closed form of
/// [`ModelConfig::parameter_count`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    /// Width of the gated MLP.
    pub intermediate_size: usize,
    pub num_heads: usize,
    pub head_size: usize,
    pub num_kv_heads: usize,
    pub max_seq_len: usize,
    pub rope_theta: f64,
    pub rmsnorm_eps: f64,
    pub vocab_size: usize,
    /// MLP gate nonlinearity; only the tanh-approximated GELU is implemented.
    pub mlp_activation: String,
}

/// The toy shape with `vocab_size` 0, to be filled in from a tokenizer.
impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy(0)
    }
}

impl ModelConfig {
    /// The 18-layer reference shape.
    pub fn reference(vocab_size: usize) -> Self {
        Self {
            hidden_dim: 2048,
            num_layers: 18,
            intermediate_size: 16384,
            num_heads: 8,
            head_size: 256,
            num_kv_heads: 1,
            max_seq_len: 2048,
            rope_theta: 10_000.0,
            rmsnorm_eps: 1e-6,
            vocab_size,
            mlp_activation: "gelu_tanh".into(),
        }
    }

    /// A desk-scale shape of the same family.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            hidden_dim: 128,
            num_layers: 4,
            intermediate_size: 256,
            num_heads: 4,
            head_size: 32,
            num_kv_heads: 1,
            max_seq_len: 256,
            rope_theta: 10_000.0,
            rmsnorm_eps: 1e-6,
            vocab_size,
            mlp_activation: "gelu_tanh".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("intermediate_size", self.intermediate_size),
            ("num_heads", self.num_heads),
            ("head_size", self.head_size),
            ("num_kv_heads", self.num_kv_heads),
            ("max_seq_len", self.max_seq_len),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.num_heads % self.num_kv_heads != 0 {
            return Err(Error::config(format!(
                "num_kv_heads {} must divide num_heads {}",
                self.num_kv_heads, self.num_heads
            )));
        }
        if self.head_size % 2 != 0 {
            return Err(Error::config("head_size must be even for rotary embeddings"));
        }
        if !(self.rope_theta > 0.0 && self.rmsnorm_eps > 0.0) {
            return Err(Error::config("rope_theta and rmsnorm_eps must be positive"));
        }
        if self.mlp_activation != "gelu_tanh" {
            return Err(Error::config(format!(
                "unsupported mlp_activation {:?}",
                self.mlp_activation
            )));
        }
        Ok(())
    }

    pub fn q_dim(&self) -> usize {
        self.num_heads * self.head_size
    }

    pub fn kv_dim(&self) -> usize {
        self.num_kv_heads * self.head_size
    }

    /// Heads sharing one key/value head.
    pub fn group_size(&self) -> usize {
        self.num_heads / self.num_kv_heads
    }

    pub fn total_heads(&self) -> usize {
        self.num_layers * self.num_heads
    }

    /// `V d + L (2d + d q + 2 d kv + q d + 3 d I) + d`.
    pub fn parameter_count(&self) -> u64 {
        let d = self.hidden_dim as u64;
        let q = self.q_dim() as u64;
        let kv = self.kv_dim() as u64;
        let i = self.intermediate_size as u64;
        let per_layer = 2 * d + d * q + 2 * d * kv + q * d + 3 * d * i;
        self.vocab_size as u64 * d + self.num_layers as u64 * per_layer + d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scale_count() {
        assert_eq!(ModelConfig::reference(32_000).parameter_count(), 2_047_420_416);
    }

    #[test]
    fn toy_count_by_hand() {
        let c = ModelConfig {
            hidden_dim: 32,
            num_layers: 2,
            intermediate_size: 64,
            num_heads: 2,
            head_size: 16,
            num_kv_heads: 1,
            vocab_size: 300,
            ..ModelConfig::toy(300)
        };
        // embed 300*32 = 9600; per layer: norms 64, q 1024, k 512, v 512, o 1024,
        // mlp 3*32*64 = 6144 -> 9280; final norm 32.
        assert_eq!(c.parameter_count(), 9600 + 2 * 9280 + 32);
    }

    #[test]
    fn kv_heads_must_divide() {
        let mut c = ModelConfig::toy(300);
        c.num_kv_heads = 3;
        assert!(c.validate().is_err());
        c.num_kv_heads = 2;
        assert!(c.validate().is_ok());
    }
}
