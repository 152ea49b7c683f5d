use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use super::NumError;

/// Handle to a named tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

struct Entry {
    name: String,
    value: Tensor,
    grad: Option<Tensor>,
    m: Tensor,
    v: Tensor,
    trainable: bool,
}

/// Named parameter map with Adam moments and gradient slots.
///
/// Buffers (running statistics, target-network copies) live alongside
/// trainable parameters but are skipped by the optimizer.
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), index: HashMap::new(), step: 0 }
    }

    pub fn add_param(&mut self, name: &str, value: Tensor) -> ParamId {
        self.insert(name, value, true)
    }

    pub fn add_buffer(&mut self, name: &str, value: Tensor) -> ParamId {
        self.insert(name, value, false)
    }

    fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name: {name}"
        );
        let (r, c) = value.shape();
        let id = ParamId(self.entries.len());
        self.index.insert(name.to_string(), id.0);
        self.entries.push(Entry {
            name: name.to_string(),
            value,
            grad: None,
            m: Tensor::zeros(r, c),
            v: Tensor::zeros(r, c),
            trainable,
        });
        id
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) {
        assert_eq!(self.entries[id.0].value.shape(), value.shape());
        self.entries[id.0].value = value;
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.entries[id.0].grad.as_ref()
    }

    pub fn accumulate_grad(&mut self, id: ParamId, grad: &Tensor) {
        let entry = &mut self.entries[id.0];
        match &mut entry.grad {
            Some(g) => g.axpy(1.0, grad),
            None => entry.grad = Some(grad.clone()),
        }
    }

    pub fn clear_grads(&mut self) {
        for e in &mut self.entries {
            e.grad = None;
        }
    }

    pub fn param_ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.trainable && e.name.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    /// Drop accumulated gradients for every entry whose name does not
    /// start with one of `prefixes`. Lets a shared graph update only one
    /// parameter group.
    pub fn retain_grads_with_prefixes(&mut self, prefixes: &[&str]) {
        for e in &mut self.entries {
            if !prefixes.iter().any(|p| e.name.starts_with(p)) {
                e.grad = None;
            }
        }
    }

    /// One Adam step over every trainable parameter with a populated
    /// gradient. Gradients are cleared afterwards.
    pub fn adam_step(&mut self, lr: f64) -> Result<(), NumError> {
        for e in &self.entries {
            if let Some(g) = &e.grad {
                if !g.is_finite() {
                    return Err(NumError::NonFiniteGradient(e.name.clone()));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for e in &mut self.entries {
            if !e.trainable {
                continue;
            }
            let Some(g) = e.grad.take() else { continue };
            for i in 0..g.len() {
                let gi = g.data()[i];
                let m = ADAM_BETA1 * e.m.data()[i] + (1.0 - ADAM_BETA1) * gi;
                let v = ADAM_BETA2 * e.v.data()[i] + (1.0 - ADAM_BETA2) * gi * gi;
                e.m.data_mut()[i] = m;
                e.v.data_mut()[i] = v;
                let mhat = m / bc1;
                let vhat = v / bc2;
                e.value.data_mut()[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        self.clear_grads();
        Ok(())
    }

    /// `dst = (1 - tau) * dst + tau * src` for every entry pair under the
    /// two prefixes, matched by suffix.
    pub fn polyak_update(&mut self, src_prefix: &str, dst_prefix: &str, tau: f64) {
        let pairs: Vec<(usize, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let suffix = e.name.strip_prefix(src_prefix)?;
                let dst = self.index.get(&format!("{dst_prefix}{suffix}"))?;
                Some((i, *dst))
            })
            .collect();
        for (src, dst) in pairs {
            let blended = {
                let s = &self.entries[src].value;
                let d = &self.entries[dst].value;
                d.zip(s, |dv, sv| (1.0 - tau) * dv + tau * sv)
            };
            self.entries[dst].value = blended;
        }
    }

    /// Copy every `src_prefix` entry value onto the matching `dst_prefix`
    /// entry (polyak with tau = 1).
    pub fn copy_prefix(&mut self, src_prefix: &str, dst_prefix: &str) {
        self.polyak_update(src_prefix, dst_prefix, 1.0);
    }

    pub fn save(&self, path: &Path) -> Result<(), NumError> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "gpide-checkpoint v1")?;
        writeln!(w, "step {}", self.step)?;
        for e in &self.entries {
            let (r, c) = e.value.shape();
            let kind = if e.trainable { "param" } else { "buffer" };
            writeln!(w, "{kind} {} {r} {c}", e.name)?;
        }
        for e in &self.entries {
            if e.trainable {
                let (r, c) = e.m.shape();
                writeln!(w, "moment adam.m/{} {r} {c}", e.name)?;
                writeln!(w, "moment adam.v/{} {r} {c}", e.name)?;
            }
        }
        writeln!(w, "data")?;
        let mut write_tensor = |t: &Tensor| -> std::io::Result<()> {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        };
        for e in &self.entries {
            write_tensor(&e.value)?;
        }
        for e in &self.entries {
            if e.trainable {
                write_tensor(&e.m)?;
                write_tensor(&e.v)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NumError> {
        let file = std::fs::File::open(path)?;
        let mut r = BufReader::new(file);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim() != "gpide-checkpoint v1" {
            return Err(NumError::Checkpoint("bad magic line".into()));
        }
        line.clear();
        r.read_line(&mut line)?;
        let step: u64 = line
            .trim()
            .strip_prefix("step ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| NumError::Checkpoint("missing step line".into()))?;

        struct Decl {
            kind: String,
            name: String,
            rows: usize,
            cols: usize,
        }
        let mut decls: Vec<Decl> = Vec::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(NumError::Checkpoint("truncated manifest".into()));
            }
            let t = line.trim();
            if t == "data" {
                break;
            }
            let mut parts = t.split_whitespace();
            let kind = parts.next().unwrap_or("").to_string();
            let name = parts
                .next()
                .ok_or_else(|| NumError::Checkpoint(format!("bad manifest line: {t}")))?
                .to_string();
            let rows: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| NumError::Checkpoint(format!("bad manifest line: {t}")))?;
            let cols: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| NumError::Checkpoint(format!("bad manifest line: {t}")))?;
            decls.push(Decl { kind, name, rows, cols });
        }

        let mut read_tensor = |rows: usize, cols: usize| -> Result<Tensor, NumError> {
            let mut buf = vec![0u8; rows * cols * 8];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Tensor::new(rows, cols, data))
        };

        let mut store = ParamStore::new();
        store.step = step;
        for d in &decls {
            if d.kind == "moment" {
                continue;
            }
            let t = read_tensor(d.rows, d.cols)?;
            match d.kind.as_str() {
                "param" => {
                    store.add_param(&d.name, t);
                }
                "buffer" => {
                    store.add_buffer(&d.name, t);
                }
                other => {
                    return Err(NumError::Checkpoint(format!("unknown entry kind: {other}")))
                }
            }
        }
        for d in &decls {
            if d.kind != "moment" {
                continue;
            }
            let t = read_tensor(d.rows, d.cols)?;
            let (ns, base) = d
                .name
                .split_once('/')
                .ok_or_else(|| NumError::Checkpoint(format!("bad moment name: {}", d.name)))?;
            let id = store
                .lookup(base)
                .ok_or_else(|| NumError::Checkpoint(format!("moment without param: {base}")))?;
            match ns {
                "adam.m" => store.entries[id.0].m = t,
                "adam.v" => store.entries[id.0].v = t,
                other => {
                    return Err(NumError::Checkpoint(format!("unknown moment namespace: {other}")))
                }
            }
        }
        Ok(store)
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}
