//! Parameter containers and the binary checkpoint format.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! "BPCK" | version u32 | d_z u32 | h u32 | T u32 | n u32 | N_ref u32 | block count u32
//! per block: name len u32 | name bytes | rank u32 | dims u32 x rank | f64 payload
//! ```

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Linear, Mlp};
use super::ModelError;
use crate::context::{BOMB_FEATURES, NOTE_FEATURES, OBSTACLE_FEATURES};
use crate::pose::FRAME_FEATURES;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Latent width.
    pub d_z: usize,
    /// Hidden width of every perceptron.
    pub hidden: usize,
    /// History length `h` (windows of `h + 1` frames).
    pub history: usize,
    /// Predicted frames `T`.
    pub future: usize,
    /// Context rows per category.
    pub n: usize,
    pub n_ref: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_z: 32,
            hidden: 64,
            history: 15,
            future: 30,
            n: 4,
            n_ref: 4,
        }
    }
}

impl ModelConfig {
    /// Smallest configuration used for gradient checks.
    pub fn toy() -> Self {
        ModelConfig {
            d_z: 4,
            hidden: 8,
            history: 2,
            future: 3,
            n: 2,
            n_ref: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameEncoder {
    pub note: Mlp,
    pub bomb: Mlp,
    pub obstacle: Mlp,
    /// Pooled `[notes | bombs | obstacles]` to `d_z`.
    pub out: Linear,
}

/// Weights of the four networks. The same type doubles as a gradient
/// accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub pose_encoder: Mlp,
    pub game_encoder: GameEncoder,
    pub style_encoder: Mlp,
    pub decoder: Mlp,
}

/// Borrowed view of one named parameter block.
pub struct Block<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

fn linear_blocks<'a>(prefix: &str, l: &'a Linear, out: &mut Vec<Block<'a>>) {
    out.push(Block {
        name: format!("{prefix}.weight"),
        shape: vec![l.outputs, l.inputs],
        data: &l.weight,
    });
    out.push(Block {
        name: format!("{prefix}.bias"),
        shape: vec![l.outputs],
        data: &l.bias,
    });
}

fn mlp_blocks<'a>(prefix: &str, m: &'a Mlp, out: &mut Vec<Block<'a>>) {
    linear_blocks(&format!("{prefix}.hidden"), &m.hidden, out);
    linear_blocks(&format!("{prefix}.output"), &m.output, out);
}

fn linear_slices_mut<'a>(l: &'a mut Linear, out: &mut Vec<&'a mut [f64]>) {
    out.push(&mut l.weight);
    out.push(&mut l.bias);
}

fn mlp_slices_mut<'a>(m: &'a mut Mlp, out: &mut Vec<&'a mut [f64]>) {
    linear_slices_mut(&mut m.hidden, out);
    linear_slices_mut(&mut m.output, out);
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let (h, d) = (cfg.hidden, cfg.d_z);
        ModelParams {
            pose_encoder: Mlp::init(FRAME_FEATURES, h, d, rng),
            game_encoder: GameEncoder {
                note: Mlp::init(NOTE_FEATURES, h, h, rng),
                bomb: Mlp::init(BOMB_FEATURES, h, h, rng),
                obstacle: Mlp::init(OBSTACLE_FEATURES, h, h, rng),
                out: Linear::init(3 * h, d, rng),
            },
            style_encoder: Mlp::init(FRAME_FEATURES, h, d, rng),
            decoder: Mlp::init(3 * d, h, cfg.future * FRAME_FEATURES, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let g = &self.game_encoder;
        ModelParams {
            pose_encoder: self.pose_encoder.zeros_like(),
            game_encoder: GameEncoder {
                note: g.note.zeros_like(),
                bomb: g.bomb.zeros_like(),
                obstacle: g.obstacle.zeros_like(),
                out: Linear::zeros(g.out.inputs, g.out.outputs),
            },
            style_encoder: self.style_encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }

    /// Named blocks in a fixed order (also the checkpoint order).
    pub fn blocks(&self) -> Vec<Block<'_>> {
        let mut out = Vec::new();
        mlp_blocks("pose_encoder", &self.pose_encoder, &mut out);
        mlp_blocks("game_encoder.note", &self.game_encoder.note, &mut out);
        mlp_blocks("game_encoder.bomb", &self.game_encoder.bomb, &mut out);
        mlp_blocks(
            "game_encoder.obstacle",
            &self.game_encoder.obstacle,
            &mut out,
        );
        linear_blocks("game_encoder.out", &self.game_encoder.out, &mut out);
        mlp_blocks("style_encoder", &self.style_encoder, &mut out);
        mlp_blocks("decoder", &self.decoder, &mut out);
        out
    }

    /// Mutable slices in the same order as [`ModelParams::blocks`].
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        mlp_slices_mut(&mut self.pose_encoder, &mut out);
        mlp_slices_mut(&mut self.game_encoder.note, &mut out);
        mlp_slices_mut(&mut self.game_encoder.bomb, &mut out);
        mlp_slices_mut(&mut self.game_encoder.obstacle, &mut out);
        linear_slices_mut(&mut self.game_encoder.out, &mut out);
        mlp_slices_mut(&mut self.style_encoder, &mut out);
        mlp_slices_mut(&mut self.decoder, &mut out);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    /// `self += other * scale`, block by block.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let theirs = other.blocks();
        for (mine, b) in self.slices_mut().into_iter().zip(&theirs) {
            for (m, t) in mine.iter_mut().zip(b.data) {
                *m += t * scale;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for block in self.slices_mut() {
            for v in block.iter_mut() {
                *v *= s;
            }
        }
    }

    /// Name of the first block holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.blocks()
            .into_iter()
            .find(|b| !b.data.iter().all(|v| v.is_finite()))
            .map(|b| b.name)
    }

    pub fn config_hidden(&self) -> usize {
        self.pose_encoder.hidden.outputs
    }
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<(), ModelError> {
    let v =
        u32::try_from(v).map_err(|_| ModelError::Checkpoint(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn write_checkpoint(
    w: &mut impl Write,
    cfg: &ModelConfig,
    params: &ModelParams,
) -> Result<(), ModelError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for v in [cfg.d_z, cfg.history, cfg.future, cfg.n, cfg.n_ref] {
        put_u32(w, v)?;
    }
    let blocks = params.blocks();
    put_u32(w, blocks.len())?;
    for b in blocks {
        put_u32(w, b.name.len())?;
        w.write_all(b.name.as_bytes())?;
        put_u32(w, b.shape.len())?;
        for d in &b.shape {
            put_u32(w, *d)?;
        }
        for v in b.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<(ModelConfig, ModelParams), ModelError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("bad magic, not a checkpoint".into()));
    }
    let version = get_u32(r)? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let d_z = get_u32(r)?;
    let history = get_u32(r)?;
    let future = get_u32(r)?;
    let n = get_u32(r)?;
    let n_ref = get_u32(r)?;
    let count = get_u32(r)?;
    let mut stored = Vec::with_capacity(count);
    for _ in 0..count {
        let len = get_u32(r)?;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| ModelError::Checkpoint("block name is not UTF-8".into()))?;
        let rank = get_u32(r)?;
        let shape = (0..rank)
            .map(|_| get_u32(r))
            .collect::<Result<Vec<_>, _>>()?;
        let mut data = vec![0.0; shape.iter().product()];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        stored.push((name, shape, data));
    }
    let hidden = stored
        .iter()
        .find(|(name, ..)| name == "pose_encoder.hidden.weight")
        .map(|(_, shape, _)| shape[0])
        .ok_or_else(|| ModelError::Checkpoint("missing pose_encoder.hidden.weight".into()))?;
    let cfg = ModelConfig {
        d_z,
        hidden,
        history,
        future,
        n,
        n_ref,
    };
    let mut params = ModelParams::init(&cfg, &mut rand::rngs::mock::StepRng::new(0, 0));
    {
        let expected = params
            .blocks()
            .into_iter()
            .map(|b| (b.name, b.shape))
            .collect::<Vec<_>>();
        if expected.len() != stored.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameter blocks, found {}",
                expected.len(),
                stored.len()
            )));
        }
        for ((name, shape), (got_name, got_shape, _)) in expected.iter().zip(&stored) {
            if name != got_name || shape != got_shape {
                return Err(ModelError::Checkpoint(format!(
                    "block {got_name} {got_shape:?} does not match expected {name} {shape:?}"
                )));
            }
        }
    }
    for (slot, (_, _, data)) in params.slices_mut().into_iter().zip(stored) {
        slot.copy_from_slice(&data);
    }
    Ok((cfg, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let cfg = ModelConfig::toy();
        let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &params).unwrap();
        assert_eq!(&buf[..4], b"BPCK");
        let (cfg2, params2) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params, params2);
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut buf = Vec::new();
        let cfg = ModelConfig::toy();
        write_checkpoint(
            &mut buf,
            &cfg,
            &ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)),
        )
        .unwrap();
        buf[0] = b'X';
        assert!(matches!(
            read_checkpoint(&mut buf.as_slice()),
            Err(ModelError::Checkpoint(_))
        ));
    }

    #[test]
    fn blocks_and_slices_align() {
        let cfg = ModelConfig::toy();
        let mut params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let lens: Vec<usize> = params.blocks().iter().map(|b| b.data.len()).collect();
        let slice_lens: Vec<usize> = params.slices_mut().iter().map(|s| s.len()).collect();
        assert_eq!(lens, slice_lens);
        assert!(params
            .blocks()
            .iter()
            .all(|b| b.shape.iter().product::<usize>() == b.data.len()));
    }
}
