//! Flat `key=value` configuration files and the model architecture config.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected 'key=value', found '{text}'")]
    BadLine { line: usize, text: String },
    #[error("config key '{key}': cannot parse '{value}' as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("config: unknown key '{0}'")]
    UnknownKey(String),
}

/// Parse `key=value` lines; `#` starts a comment, blank lines are ignored.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                return Err(ConfigError::BadLine {
                    line: idx + 1,
                    text: raw.to_string(),
                })
            }
        }
    }
    Ok(map)
}

fn parse_field<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
    default: T,
    expected: &'static str,
) -> Result<T, ConfigError> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
            key: key.to_string(),
            value: v.clone(),
            expected,
        }),
    }
}

fn parse_list4(
    map: &BTreeMap<String, String>,
    key: &str,
    default: [usize; 4],
) -> Result<[usize; 4], ConfigError> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => {
            let parts: Vec<usize> = v
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.clone(),
                    expected: "four comma-separated integers",
                })?;
            parts.try_into().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.clone(),
                expected: "four comma-separated integers",
            })
        }
    }
}

/// Architecture knobs. The default is the desk-scale model: quarter-width
/// trunks with every structural element intact. `widths = [64,128,256,512]`
/// restores full trunk widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Channel widths of the four trunk stages (shared by the visual and
    /// audio trunks).
    pub widths: [usize; 4],
    /// Residual blocks per visual trunk stage.
    pub visual_blocks: [usize; 4],
    /// Residual blocks per audio trunk stage.
    pub audio_blocks: [usize; 4],
    /// Per-stream embedding width.
    pub embed_dim: usize,
    /// Squeeze-and-excitation bottleneck ratio.
    pub se_ratio: usize,
    /// Attention heads in every self-attention site.
    pub heads: usize,
    /// Self-attention after the face/body temporal networks.
    pub visual_attention: bool,
    /// Self-attention over the fused sequence.
    pub fused_attention: bool,
    /// Sinusoidal positional encoding before the fused attention.
    pub fused_pos_enc: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            widths: [16, 32, 64, 128],
            visual_blocks: [2, 2, 2, 2],
            audio_blocks: [3, 4, 6, 3],
            embed_dim: 128,
            se_ratio: 16,
            heads: 8,
            visual_attention: true,
            fused_attention: true,
            fused_pos_enc: true,
        }
    }
}

impl ModelConfig {
    /// Width of the fused sequence (three concatenated streams).
    pub fn fused_dim(&self) -> usize {
        3 * self.embed_dim
    }

    /// Tiny configuration for finite-difference checks.
    pub fn miniature() -> Self {
        ModelConfig {
            widths: [4, 4, 8, 8],
            visual_blocks: [1, 1, 1, 1],
            audio_blocks: [1, 1, 1, 1],
            embed_dim: 8,
            se_ratio: 2,
            heads: 2,
            visual_attention: true,
            fused_attention: true,
            fused_pos_enc: true,
        }
    }

    pub fn from_kv(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let d = ModelConfig::default();
        Ok(ModelConfig {
            widths: parse_list4(map, "widths", d.widths)?,
            visual_blocks: parse_list4(map, "visual_blocks", d.visual_blocks)?,
            audio_blocks: parse_list4(map, "audio_blocks", d.audio_blocks)?,
            embed_dim: parse_field(map, "embed_dim", d.embed_dim, "integer")?,
            se_ratio: parse_field(map, "se_ratio", d.se_ratio, "integer")?,
            heads: parse_field(map, "heads", d.heads, "integer")?,
            visual_attention: parse_field(map, "visual_attention", d.visual_attention, "bool")?,
            fused_attention: parse_field(map, "fused_attention", d.fused_attention, "bool")?,
            fused_pos_enc: parse_field(map, "fused_pos_enc", d.fused_pos_enc, "bool")?,
        })
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let list = |v: &[usize; 4]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        BTreeMap::from([
            ("widths".into(), list(&self.widths)),
            ("visual_blocks".into(), list(&self.visual_blocks)),
            ("audio_blocks".into(), list(&self.audio_blocks)),
            ("embed_dim".into(), self.embed_dim.to_string()),
            ("se_ratio".into(), self.se_ratio.to_string()),
            ("heads".into(), self.heads.to_string()),
            ("visual_attention".into(), self.visual_attention.to_string()),
            ("fused_attention".into(), self.fused_attention.to_string()),
            ("fused_pos_enc".into(), self.fused_pos_enc.to_string()),
        ])
    }
}

/// Render a key/value map as a config file body.
pub fn render_kv(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}
