use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::{self, KvConfig};

/// Layer widths and sequence lengths of the generator and discriminator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub state_dim: usize,
    pub embed_dim: usize,
    /// Width of the encoder and decoder recurrent cells.
    pub hidden_dim: usize,
    /// Width of the attention space and of the pooled vector.
    pub pool_dim: usize,
    pub noise_dim: usize,
    pub code_dim: usize,
    /// Hidden widths of the decoder head; the last entry is the output width (2).
    pub decoder_head_dims: Vec<usize>,
    /// Width of the discriminator's projection blocks.
    pub disc_proj_dim: usize,
    pub obs_len: usize,
    pub pred_len: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            state_dim: 4,
            embed_dim: 128,
            hidden_dim: 128,
            pool_dim: 64,
            noise_dim: 62,
            code_dim: 2,
            decoder_head_dims: vec![64, 32, 2],
            disc_proj_dim: 64,
            obs_len: 8,
            pred_len: 12,
        }
    }
}

/// Slope of every LeakyReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.1;

impl ModelDims {
    /// Width of the per-step decoder input `[h | pooled | z | c]`.
    pub fn decoder_input_dim(&self) -> usize {
        self.hidden_dim + self.pool_dim + self.noise_dim + self.code_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.state_dim != 4 {
            return bad(format!("state_dim must be 4, got {}", self.state_dim));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("pool_dim", self.pool_dim),
            ("disc_proj_dim", self.disc_proj_dim),
            ("pred_len", self.pred_len),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.obs_len < 2 {
            return bad(format!("obs_len must be >= 2, got {}", self.obs_len));
        }
        match self.decoder_head_dims.last() {
            Some(2) => {}
            _ => return bad("decoder_head_dims must end with 2".into()),
        }
        if self.decoder_head_dims.contains(&0) {
            return bad("decoder_head_dims entries must be >= 1".into());
        }
        Ok(())
    }
}

impl KvConfig for ModelDims {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "embed_dim" => self.embed_dim = kv::value(key, v)?,
            "hidden_dim" => self.hidden_dim = kv::value(key, v)?,
            "pool_dim" => self.pool_dim = kv::value(key, v)?,
            "noise_dim" => self.noise_dim = kv::value(key, v)?,
            "code_dim" => self.code_dim = kv::value(key, v)?,
            "decoder_head_dims" => self.decoder_head_dims = kv::list(key, v)?,
            "disc_proj_dim" => self.disc_proj_dim = kv::value(key, v)?,
            "obs_len" => self.obs_len = kv::value(key, v)?,
            "pred_len" => self.pred_len = kv::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        let head: Vec<String> = self.decoder_head_dims.iter().map(|d| d.to_string()).collect();
        [
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("pool_dim", self.pool_dim.to_string()),
            ("noise_dim", self.noise_dim.to_string()),
            ("code_dim", self.code_dim.to_string()),
            ("decoder_head_dims", head.join(",")),
            ("disc_proj_dim", self.disc_proj_dim.to_string()),
            ("obs_len", self.obs_len.to_string()),
            ("pred_len", self.pred_len.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}
