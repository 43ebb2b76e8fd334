//! Plain-text encoder checkpoints.
//!
//! ```text
//! condssl-encoder 1
//! input <d>
//! hidden <h>
//! output <e>
//! temperature <tau>
//! momentum <mu>
//! epoch <n>
//! queue_capacity <Q>
//! query <p_0> <p_1> ...
//! key <p_0> <p_1> ...
//! queue <k_0> ... <k_{e-1}>      (one line per queued key, oldest first)
//! ```
//!
//! Numbers use Rust's shortest round-trip decimal form, so a checkpoint reloads
//! bit-identically.

use std::path::Path;

use super::{EncoderState, KeyQueue};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::nn::Mlp;

const MAGIC: &str = "condssl-encoder 1";

pub fn save_checkpoint(state: &EncoderState, path: &Path) -> Result<()> {
    let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    atomic_write(path, |w| {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "input {}", state.query.input)?;
        writeln!(w, "hidden {}", state.query.hidden)?;
        writeln!(w, "output {}", state.query.output)?;
        writeln!(w, "temperature {}", state.temperature)?;
        writeln!(w, "momentum {}", state.momentum)?;
        writeln!(w, "epoch {}", state.epoch)?;
        writeln!(w, "queue_capacity {}", state.queue.capacity())?;
        writeln!(w, "query {}", join(&state.query.params))?;
        writeln!(w, "key {}", join(&state.key.params))?;
        for k in state.queue.iter() {
            writeln!(w, "queue {}", join(k))?;
        }
        Ok(())
    })
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message: msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(err(1, format!("expected header {MAGIC:?}"))),
    }
    let mut scalar = |name: &str| -> Result<(usize, String)> {
        let (n, l) = lines.next().ok_or_else(|| err(0, format!("missing {name}")))?;
        let rest = l
            .strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| err(n, format!("expected {name}")))?;
        Ok((n, rest.to_string()))
    };
    fn num<T: std::str::FromStr>(v: (usize, String), err: &dyn Fn(usize, String) -> Error) -> Result<T> {
        v.1.parse().map_err(|_| err(v.0, format!("invalid number {:?}", v.1)))
    }
    let input: usize = num(scalar("input")?, &err)?;
    let hidden: usize = num(scalar("hidden")?, &err)?;
    let output: usize = num(scalar("output")?, &err)?;
    let temperature: f64 = num(scalar("temperature")?, &err)?;
    let momentum: f64 = num(scalar("momentum")?, &err)?;
    let epoch: usize = num(scalar("epoch")?, &err)?;
    let capacity: usize = num(scalar("queue_capacity")?, &err)?;
    let n_params = Mlp::n_params(input, hidden, output);

    let mut vector = |name: &str, len: usize| -> Result<Vec<f64>> {
        let (n, rest) = scalar(name)?;
        let v: Vec<f64> = rest
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| err(n, format!("invalid number {s:?}"))))
            .collect::<Result<_>>()?;
        if v.len() != len {
            return Err(err(n, format!("{name} has {} values, expected {len}", v.len())));
        }
        Ok(v)
    };
    let query = vector("query", n_params)?;
    let key = vector("key", n_params)?;
    let mut queue = KeyQueue::new(capacity, output);
    let mut keys = Vec::new();
    for (n, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let rest = l.strip_prefix("queue ").ok_or_else(|| err(n, "expected queue entry".into()))?;
        let k: Vec<f64> = rest
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| err(n, format!("invalid number {s:?}"))))
            .collect::<Result<_>>()?;
        if k.len() != output {
            return Err(err(n, format!("queue entry has {} values, expected {output}", k.len())));
        }
        keys.push(k);
    }
    queue.push_batch(&keys);
    let net = |params| Mlp {
        input,
        hidden,
        output,
        params,
    };
    Ok(EncoderState {
        query: net(query),
        key: net(key),
        queue,
        temperature,
        momentum,
        epoch,
    })
}

/// Writes `epoch,loss` rows, epochs counted from 1.
pub fn save_loss_trace(trace: &[f64], path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "epoch,loss")?;
        for (i, l) in trace.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, l)?;
        }
        Ok(())
    })
}
