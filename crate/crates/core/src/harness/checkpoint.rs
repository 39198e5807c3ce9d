//! Run checkpoints and stored policies, in the nets snapshot format.
//!
//! ```text
//! checkpoint <iteration>
//! policy
//! mlp ... / log_std ...
//! vfa            (optional)
//! mlp ...
//! pevfa          (optional)
//! layer ... / layer ... / mlp ...
//! encoder none | opr <layers> <extra> | spr
//! end
//! ```

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::nets::snapshot::{write_layer, write_mlp, write_values, SnapshotReader};
use crate::nets::{GaussianPolicy, MlpParams, PeVFAParams};
use crate::policy_repr::{Encoder, OprEncoder, PolicyRecord, SprEncoder};

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub policy: GaussianPolicy,
    pub vfa: Option<MlpParams>,
    pub pevfa: Option<PeVFAParams>,
    pub encoder: Option<Encoder>,
}

fn parse_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

fn num<T: std::str::FromStr>(tok: Option<&String>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("checkpoint: bad or missing {what}")))
}

pub fn write_policy(w: &mut impl Write, p: &GaussianPolicy) -> Result<()> {
    write_mlp(w, &p.mean)?;
    write_values(w, "log_std", p.log_std.data())
}

pub fn read_policy<R: BufRead>(r: &mut SnapshotReader<R>) -> Result<GaussianPolicy> {
    let mean = r.mlp()?;
    let log_std = r.values("log_std", mean.output_dim())?;
    GaussianPolicy::new(mean, log_std)
}

impl Checkpoint {
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "checkpoint {}", self.iteration)?;
        writeln!(w, "policy")?;
        write_policy(w, &self.policy)?;
        if let Some(v) = &self.vfa {
            writeln!(w, "vfa")?;
            write_mlp(w, v)?;
        }
        if let Some(p) = &self.pevfa {
            writeln!(w, "pevfa")?;
            write_layer(w, &p.state_stream)?;
            write_layer(w, &p.embed_stream)?;
            write_mlp(w, &p.trunk)?;
        }
        match &self.encoder {
            None => writeln!(w, "encoder none")?,
            Some(Encoder::Opr(e)) => {
                writeln!(w, "encoder opr {} {}", e.element.len(), e.extra_dim())?;
                for m in &e.element {
                    write_mlp(w, m)?;
                }
                write_mlp(w, &e.post)?;
            }
            Some(Encoder::Spr(e)) => {
                writeln!(w, "encoder spr")?;
                write_mlp(w, &e.pair)?;
                write_mlp(w, &e.post)?;
            }
        }
        writeln!(w, "end")?;
        Ok(())
    }

    pub fn read(input: impl BufRead) -> Result<Self> {
        let mut r = SnapshotReader::new(input);
        let head = r.header("checkpoint")?;
        let iteration = num(head.first(), "iteration")?;
        r.header("policy")?;
        let policy = read_policy(&mut r)?;
        let (mut vfa, mut pevfa, mut encoder) = (None, None, None);
        loop {
            let toks = r.next_line()?;
            match toks[0].as_str() {
                "vfa" => vfa = Some(r.mlp()?),
                "pevfa" => {
                    let s = r.layer()?;
                    let e = r.layer()?;
                    pevfa = Some(PeVFAParams::new(s, e, r.mlp()?)?);
                }
                "encoder" => {
                    encoder = match toks.get(1).map(String::as_str) {
                        Some("none") => None,
                        Some("opr") => {
                            let layers: usize = num(toks.get(2), "OPR layer count")?;
                            let extra: usize = num(toks.get(3), "OPR extra width")?;
                            let element = (0..layers).map(|_| r.mlp()).collect::<Result<Vec<_>>>()?;
                            Some(Encoder::Opr(OprEncoder::new(element, r.mlp()?, extra)?))
                        }
                        Some("spr") => {
                            let pair = r.mlp()?;
                            Some(Encoder::Spr(SprEncoder::new(pair, r.mlp()?)?))
                        }
                        other => return parse_err(format!("checkpoint: unknown encoder {other:?}")),
                    }
                }
                "end" => break,
                other => return parse_err(format!("checkpoint: unexpected section `{other}`")),
            }
        }
        Ok(Self {
            iteration,
            policy,
            vfa,
            pevfa,
            encoder,
        })
    }
}

/// A policy kept for later embedding: parameters plus a few of its
/// state-action pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredPolicy {
    pub id: u64,
    pub iteration: usize,
    pub avg_return: f64,
    pub policy: GaussianPolicy,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl StoredPolicy {
    /// Keeps `pairs` evenly strided pairs of the record.
    pub fn from_record(r: &PolicyRecord, pairs: usize) -> Self {
        let n = r.steps();
        let k = pairs.clamp(1, n);
        let idx: Vec<usize> = (0..k).map(|i| i * n / k).collect();
        Self {
            id: r.id,
            iteration: r.iteration,
            avg_return: r.avg_return,
            policy: r.policy.clone(),
            states: idx.iter().map(|&i| r.states[i].clone()).collect(),
            actions: idx.iter().map(|&i| r.actions[i].clone()).collect(),
        }
    }

    /// A record for re-encoding; the returns are placeholders.
    pub fn to_record(&self) -> Result<PolicyRecord> {
        PolicyRecord::new(
            self.id,
            self.iteration,
            self.policy.clone(),
            self.states.clone(),
            self.actions.clone(),
            vec![0.0; self.states.len()],
            self.avg_return,
        )
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "stored {} {} {} {}", self.id, self.iteration, self.avg_return, self.states.len())?;
        write_policy(w, &self.policy)?;
        let flat = |rows: &[Vec<f64>]| rows.iter().flatten().copied().collect::<Vec<_>>();
        write_values(w, "states", &flat(&self.states))?;
        write_values(w, "actions", &flat(&self.actions))
    }

    pub fn read_all(input: impl BufRead) -> Result<Vec<Self>> {
        let mut r = SnapshotReader::new(input);
        let mut out = Vec::new();
        loop {
            let head = match r.next_line() {
                Ok(t) => t,
                Err(Error::Parse(_)) => break,
                Err(e) => return Err(e),
            };
            if head.first().map(String::as_str) != Some("stored") {
                return parse_err(format!("stored policies: expected `stored`, found {:?}", head.first()));
            }
            let id = num(head.get(1), "policy id")?;
            let iteration = num(head.get(2), "iteration")?;
            let avg_return = num(head.get(3), "average return")?;
            let n: usize = num(head.get(4), "pair count")?;
            let policy = read_policy(&mut r)?;
            let (sd, ad) = (policy.obs_dim(), policy.act_dim());
            let states = r.values("states", n * sd)?.chunks(sd).map(<[f64]>::to_vec).collect();
            let actions = r.values("actions", n * ad)?.chunks(ad).map(<[f64]>::to_vec).collect();
            out.push(Self {
                id,
                iteration,
                avg_return,
                policy,
                states,
                actions,
            });
        }
        Ok(out)
    }
}
