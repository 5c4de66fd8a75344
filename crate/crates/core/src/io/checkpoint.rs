//! Binary checkpoint files.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! magic     8 bytes  "RLCKPT\0\0"
//! version   u32
//! flags     u32      bit 0: full learner state follows the actor
//! shape     str      JSON of the network shape
//! shape_id  str      shape descriptor, checked against `shape` on load
//! env       str
//! config    str      config hash
//! step      u64
//! seed      u64
//! actor     reals
//! [learner state]
//! crc32     u32      over every preceding byte
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8; `reals` is a u64 count
//! followed by that many f64 values.

use std::fs;
use std::path::Path;

use crate::env::{EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::learner::{AdamState, Checkpoint, ReplayBuffer, Td3Config, Td3State};
use crate::policy::{MlpShape, ParamVector};
use crate::rng::{RngSnapshot, RngStream};

pub const MAGIC: &[u8; 8] = b"RLCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_FULL: u32 = 1;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn reals(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }
    fn bools(&mut self, v: &[bool]) {
        self.u64(v.len() as u64);
        self.buf.extend(v.iter().map(|&b| b as u8));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Corrupt(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Corrupt("size overflow".into()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Corrupt(format!("invalid boolean byte {b}"))),
        }
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Corrupt("invalid UTF-8".into()))
    }
    fn reals(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn bools(&mut self) -> Result<Vec<bool>> {
        let n = self.usize()?;
        self.take(n)?
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Corrupt(format!("invalid boolean byte {b}"))),
            })
            .collect()
    }
    fn params(&mut self, shape: &MlpShape) -> Result<ParamVector> {
        let v = self.reals()?;
        if v.len() != shape.param_count() {
            return Err(Error::Corrupt(format!("{} values for shape {}", v.len(), shape.descriptor())));
        }
        ParamVector::new(v, shape.id())
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Corrupt(format!("embedded JSON: {e}")))
}

fn write_adam(w: &mut Writer, a: &AdamState) {
    w.reals(&a.m);
    w.reals(&a.v);
    w.u64(a.t);
}

fn read_adam(r: &mut Reader<'_>, n: usize) -> Result<AdamState> {
    let a = AdamState { m: r.reals()?, v: r.reals()?, t: r.u64()? };
    if a.m.len() != n || a.v.len() != n {
        return Err(Error::Corrupt("optimizer moments do not match network size".into()));
    }
    Ok(a)
}

fn write_state(w: &mut Writer, st: &Td3State) -> Result<()> {
    if st.buffer.open_marks() != 0 {
        return Err(Error::Contract("cannot save a learner with an open revert point".into()));
    }
    w.str(&json(&st.env));
    w.str(&json(&st.cfg));
    for p in [&st.actor, &st.critic1, &st.critic2, &st.target_actor, &st.target_critic1, &st.target_critic2] {
        w.reals(p.values());
    }
    for a in [&st.actor_opt, &st.critic1_opt, &st.critic2_opt] {
        write_adam(w, a);
    }
    let snap = st.rng.snapshot();
    w.u64(snap.key);
    w.u128(snap.word_pos);
    let b = &st.buffer;
    let (states, actions, rewards, next_states, dones) = b.raw_parts();
    w.u64(b.capacity() as u64);
    w.u64(b.cursor() as u64);
    w.u64(b.insert_count());
    w.reals(states);
    w.reals(actions);
    w.reals(rewards);
    w.reals(next_states);
    w.bools(dones);
    w.reals(&st.env_state.s);
    w.u64(st.env_state.t as u64);
    w.u8(st.env_state.terminated as u8);
    w.u64(st.env_steps);
    w.u64(st.updates);
    w.f64(st.episode_return);
    w.u64(st.episodes);
    Ok(())
}

fn read_state(r: &mut Reader<'_>) -> Result<Td3State> {
    let env: EnvSpec = from_json(&r.str()?)?;
    let cfg: Td3Config = from_json(&r.str()?)?;
    let actor_shape = MlpShape::policy(env.state_dim, env.action_dim, &cfg.hidden, env.action_bound);
    let critic_shape = MlpShape::critic(env.state_dim, env.action_dim, &cfg.hidden);
    let actor = r.params(&actor_shape)?;
    let critic1 = r.params(&critic_shape)?;
    let critic2 = r.params(&critic_shape)?;
    let target_actor = r.params(&actor_shape)?;
    let target_critic1 = r.params(&critic_shape)?;
    let target_critic2 = r.params(&critic_shape)?;
    let actor_opt = read_adam(r, actor.len())?;
    let critic1_opt = read_adam(r, critic1.len())?;
    let critic2_opt = read_adam(r, critic2.len())?;
    let rng = RngStream::restore(RngSnapshot { key: r.u64()?, word_pos: r.u128()? });
    let capacity = r.usize()?;
    let cursor = r.usize()?;
    let insert_count = r.u64()?;
    let buffer = ReplayBuffer::from_raw_parts(
        capacity,
        env.state_dim,
        env.action_dim,
        cursor,
        insert_count,
        r.reals()?,
        r.reals()?,
        r.reals()?,
        r.reals()?,
        r.bools()?,
    )?;
    let env_state = EnvState { s: r.reals()?, t: r.usize()?, terminated: r.bool()? };
    Ok(Td3State {
        env,
        cfg,
        actor,
        critic1,
        critic2,
        target_actor,
        target_critic1,
        target_critic2,
        actor_opt,
        critic1_opt,
        critic2_opt,
        rng,
        buffer,
        env_state,
        env_steps: r.u64()?,
        updates: r.u64()?,
        episode_return: r.f64()?,
        episodes: r.u64()?,
    })
}

/// Byte image of a learner, as stored in full-state checkpoints.
pub fn state_bytes(st: &Td3State) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    write_state(&mut w, st)?;
    Ok(w.buf)
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    if ck.actor.len() != ck.shape.param_count() {
        return Err(Error::ShapeMismatch(format!("{} values for {}", ck.actor.len(), ck.shape.descriptor())));
    }
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(if ck.state.is_some() { FLAG_FULL } else { 0 });
    w.str(&json(&ck.shape));
    w.str(&ck.shape.descriptor());
    w.str(&ck.env_name);
    w.str(&ck.config_hash);
    w.u64(ck.step);
    w.u64(ck.seed);
    w.reals(ck.actor.values());
    if let Some(st) = &ck.state {
        write_state(&mut w, st)?;
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    Ok(w.buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Corrupt("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: FORMAT_VERSION });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 12 };
    let flags = r.u32()?;
    let shape: MlpShape = from_json(&r.str()?)?;
    shape.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    let descriptor = r.str()?;
    if descriptor != shape.descriptor() {
        return Err(Error::Corrupt(format!("descriptor {descriptor} does not match stored shape")));
    }
    let env_name = r.str()?;
    let config_hash = r.str()?;
    let step = r.u64()?;
    let seed = r.u64()?;
    let actor = r.params(&shape)?;
    let state = if flags & FLAG_FULL != 0 { Some(Box::new(read_state(&mut r)?)) } else { None };
    if r.pos != body.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(Checkpoint { step, actor, shape, env_name, seed, config_hash, state })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ck)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

/// Loads a checkpoint and checks it against the shape a config expects.
pub fn load_checkpoint_expecting(path: &Path, expected: &MlpShape) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if &ck.shape != expected {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint holds {}, config expects {}",
            ck.shape.descriptor(),
            expected.descriptor()
        )));
    }
    Ok(ck)
}

/// Human-readable dump of a checkpoint header and actor, for debugging.
pub fn checkpoint_json(ck: &Checkpoint) -> serde_json::Value {
    serde_json::json!({
        "format_version": FORMAT_VERSION,
        "id": ck.id(),
        "shape": ck.shape,
        "descriptor": ck.shape.descriptor(),
        "env": ck.env_name,
        "config_hash": ck.config_hash,
        "step": ck.step,
        "seed": ck.seed,
        "actor": ck.actor.values(),
        "full_state": ck.state.is_some(),
    })
}
