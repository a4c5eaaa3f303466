//! Binary agent checkpoints.
//!
//! Layout (little-endian): magic, version, algorithm name, JSON config echo,
//! then named parameter blocks `name, layer sizes, length, values`.
//! Optimizer moments are not stored; a loaded agent starts with fresh Adam
//! state.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentConfig, Algorithm, ValueBoost};
use crate::approx::{Adam, CriticNet, Mlp, PolicyNet};
use crate::data::io::{Reader, Writer};
use crate::env::ActionSpace;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"O2ORLCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// An agent plus any extra named networks (e.g. an evaluator).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub algorithm: Algorithm,
    pub agent: Agent,
    pub extras: Vec<(String, Mlp)>,
}

#[derive(Serialize, Deserialize)]
struct Echo {
    algorithm: Algorithm,
    config: AgentConfig,
    action_space: ActionSpace,
    state_dim: usize,
    boost_amount: Option<f64>,
    boost_states: Vec<usize>,
}

fn blocks(c: &Checkpoint) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let a = &c.agent;
    let mut out = Vec::new();
    let mut push = |name: String, net: &Mlp| out.push((name, net.sizes().to_vec(), net.params().to_vec()));
    push("actor".into(), a.actor.net());
    for (k, critic) in a.critics.iter().enumerate() {
        push(format!("critic.{k}"), &critic.net);
    }
    for (k, target) in a.targets.iter().enumerate() {
        push(format!("target.{k}"), &target.net);
    }
    if let Some(v) = &a.value {
        push("value".into(), v);
    }
    if let Some(b) = &a.behavior {
        push("behavior".into(), b.net());
    }
    if let Some(t) = &a.trust {
        push("trust".into(), t.net());
    }
    if let Some(t) = &a.anchor {
        push("anchor".into(), t.net());
    }
    for (name, net) in &c.extras {
        push(format!("extra.{name}"), net);
    }
    out.push(("log_alpha".into(), vec![1], vec![a.log_alpha]));
    if let Some(b) = &a.boost {
        let flags = b.touched.iter().map(|&t| f64::from(u8::from(t))).collect::<Vec<_>>();
        out.push(("boost.touched".into(), vec![flags.len()], flags));
    }
    out
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let a = &checkpoint.agent;
    let echo = Echo {
        algorithm: checkpoint.algorithm,
        config: a.config.clone(),
        action_space: a.space.clone(),
        state_dim: a.state_dim,
        boost_amount: a.boost.as_ref().map(|b| b.amount),
        boost_states: a.boost.as_ref().map(|b| b.states.clone()).unwrap_or_default(),
    };
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.bytes(checkpoint.algorithm.name().as_bytes());
    w.bytes(serde_json::to_string(&echo)?.as_bytes());
    let blocks = blocks(checkpoint);
    w.u32(blocks.len() as u32);
    for (name, sizes, params) in &blocks {
        w.bytes(name.as_bytes());
        w.u32(sizes.len() as u32);
        for s in sizes {
            w.u32(*s as u32);
        }
        w.u64(params.len() as u64);
        w.f64s(params);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, &w.0)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(format!("checkpoint {}", path.display()))
        } else {
            e.into()
        }
    })?;
    let mut r = Reader::new(&bytes, path);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return r.fail(format!("unsupported version {version}"));
    }
    let name = String::from_utf8(r.bytes()?.to_vec()).or_else(|_| r.fail("algorithm name is not UTF-8"))?;
    let algorithm = match Algorithm::parse(&name) {
        Some(a) => a,
        None => return r.fail(format!("unknown algorithm {name:?}")),
    };
    let echo: Echo = serde_json::from_slice(r.bytes()?).or_else(|e| r.fail(format!("config echo: {e}")))?;
    if echo.algorithm != algorithm {
        return r.fail("algorithm tag disagrees with config echo");
    }
    let count = r.u32()? as usize;
    let mut nets: Vec<(String, Mlp)> = Vec::with_capacity(count);
    let mut log_alpha = None;
    let mut touched = None;
    for _ in 0..count {
        let name = String::from_utf8(r.bytes()?.to_vec()).or_else(|_| r.fail("block name is not UTF-8"))?;
        let n_sizes = r.u32()? as usize;
        let sizes = (0..n_sizes).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        let len = r.u64()? as usize;
        if len > bytes.len() / 8 {
            return r.fail(format!("block {name} claims {len} values"));
        }
        let params = r.f64s(len)?;
        match name.as_str() {
            "log_alpha" => log_alpha = params.first().copied(),
            "boost.touched" => touched = Some(params.iter().map(|&x| x != 0.0).collect::<Vec<bool>>()),
            _ => {
                let net = Mlp::from_params(&sizes, params).or_else(|e| r.fail(format!("block {name}: {e}")))?;
                nets.push((name, net));
            }
        }
    }
    r.finish()?;

    let mut take = |name: &str| -> Option<Mlp> {
        let i = nets.iter().position(|(n, _)| n == name)?;
        Some(nets.remove(i).1)
    };
    let missing = |what: &str| Error::Format {
        path: path.to_path_buf(),
        reason: format!("missing block {what}"),
    };
    let space = echo.action_space;
    let config = echo.config;
    let actor = PolicyNet::from_mlp(&space, take("actor").ok_or_else(|| missing("actor"))?);
    let discrete = space.is_discrete();
    let mut critics = Vec::new();
    let mut targets = Vec::new();
    for k in 0..config.ensemble {
        let c = take(&format!("critic.{k}")).ok_or_else(|| missing(&format!("critic.{k}")))?;
        let t = take(&format!("target.{k}")).ok_or_else(|| missing(&format!("target.{k}")))?;
        critics.push(CriticNet { net: c, discrete });
        targets.push(CriticNet { net: t, discrete });
    }
    let value = take("value");
    let behavior = take("behavior").map(|n| PolicyNet::from_mlp(&space, n));
    let trust = take("trust").map(|n| PolicyNet::from_mlp(&space, n));
    let anchor = take("anchor").map(|n| PolicyNet::from_mlp(&space, n));
    let boost = match (echo.boost_amount, touched) {
        (Some(amount), Some(touched)) if touched.len() == echo.boost_states.len() => Some(ValueBoost {
            amount,
            states: echo.boost_states,
            touched,
        }),
        (None, None) => None,
        _ => return Err(missing("consistent boost state")),
    };
    let extras = nets
        .into_iter()
        .filter_map(|(n, net)| n.strip_prefix("extra.").map(|s| (s.to_string(), net)))
        .collect();
    let adam = config.adam;
    let agent = Agent {
        actor_opt: Adam::new(actor.net().len(), adam),
        critic_opts: critics.iter().map(|c| Adam::new(c.net.len(), adam)).collect(),
        value_opt: value.as_ref().map(|v| Adam::new(v.len(), adam)),
        behavior_opt: behavior.as_ref().map(|b| Adam::new(b.net().len(), adam)),
        alpha_opt: Adam::new(1, adam),
        log_alpha: log_alpha.ok_or_else(|| missing("log_alpha"))?,
        state_dim: echo.state_dim,
        space,
        config,
        actor,
        critics,
        targets,
        value,
        behavior,
        trust,
        anchor,
        boost,
    };
    Ok(Checkpoint {
        algorithm,
        agent,
        extras,
    })
}
