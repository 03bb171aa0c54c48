//! Builds the simulated processes of a run.

use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use super::config::{Algorithm, ConfigError, ConsensusImpl, RunConfig};
use crate::substrate::sim::SimMemory;
use crate::substrate::{CasConsensus, Memory, Site};
use crate::universal::{Invocation, SequentialSpec, SpecRegistry, Universal};
use crate::weaklog::{AppendedValue, CasLog, ConsensusLog, LogKind, Token, WeakLog};

pub(crate) type Task = Pin<Box<dyn Future<Output = ()>>>;

pub(crate) struct Instance {
    pub tasks: Vec<Task>,
    /// Quiescent structure description, or a corruption message.
    pub snapshot: Box<dyn Fn() -> Result<Json, String>>,
}

/// An operation with its token assigned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct PlannedOp {
    pub token: u64,
    pub op: String,
    pub arg: Option<i64>,
}

/// Tokens are dense and assigned process by process. Generated arguments
/// are `token + 1`, so no two operations share an argument.
pub(crate) fn plan(
    config: &RunConfig,
    spec: Option<&SequentialSpec>,
) -> Result<Vec<Vec<PlannedOp>>, ConfigError> {
    if !config.ops.is_empty() {
        if config.ops.len() != config.procs {
            return Err(ConfigError::Invalid(format!(
                "{} operation lists for {} processes",
                config.ops.len(),
                config.procs
            )));
        }
        let mut token = 0;
        return Ok(config
            .ops
            .iter()
            .map(|ops| {
                ops.iter()
                    .map(|o| {
                        token += 1;
                        PlannedOp {
                            token: token - 1,
                            op: o.op.clone(),
                            arg: o.arg,
                        }
                    })
                    .collect()
            })
            .collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.schedule.seed ^ 0x6f70_735f_7365_6564);
    let mut out = Vec::with_capacity(config.procs);
    for pid in 0..config.procs {
        let mut ops = Vec::with_capacity(config.ops_per_proc);
        for k in 0..config.ops_per_proc {
            let token = (pid * config.ops_per_proc + k) as u64;
            let arg = token as i64 + 1;
            ops.push(match (&config.algorithm, spec) {
                (Algorithm::Universal(_), Some(spec)) => {
                    let inv = spec.sample_op(&mut rng, token, arg);
                    PlannedOp {
                        token,
                        op: inv.op.to_string(),
                        arg: inv.arg,
                    }
                }
                (Algorithm::Consensus, _) => PlannedOp {
                    token,
                    op: "propose".into(),
                    arg: Some(arg),
                },
                _ => PlannedOp {
                    token,
                    op: "append".into(),
                    arg: Some(arg),
                },
            });
        }
        out.push(ops);
    }
    Ok(out)
}

pub(crate) fn instantiate(
    config: &RunConfig,
    registry: &SpecRegistry,
    sim: &SimMemory,
) -> Result<Instance, ConfigError> {
    let spec = match &config.algorithm {
        Algorithm::Universal(name) => Some(
            registry
                .get(name)
                .ok_or_else(|| ConfigError::UnknownSpec(name.clone()))?,
        ),
        _ => None,
    };
    let plan = plan(config, spec.as_deref())?;
    match config.consensus {
        ConsensusImpl::Native => build(sim.clone(), sim, config, spec, plan),
        ConsensusImpl::OverCas => build(CasConsensus::new(sim.clone()), sim, config, spec, plan),
    }
}

fn build<M: Memory>(
    mem: M,
    sim: &SimMemory,
    config: &RunConfig,
    spec: Option<Arc<SequentialSpec>>,
    plan: Vec<Vec<PlannedOp>>,
) -> Result<Instance, ConfigError> {
    let model = |e: crate::substrate::ModelError| ConfigError::Invalid(e.to_string());
    match &config.algorithm {
        Algorithm::Consensus => {
            let cell = mem.alloc_consensus::<i64>().map_err(model)?;
            let tasks = per_process(sim, plan, {
                let mem = mem.clone();
                move |sim: SimMemory, ops: Vec<PlannedOp>| {
                    let mem = mem.clone();
                    Box::pin(async move {
                        for op in ops {
                            let v = op.arg.unwrap_or(op.token as i64);
                            sim.log_invoke(json!({ "op": "propose", "token": op.token, "arg": v }));
                            let decided = mem.propose(cell, v, Site::Other).await;
                            sim.log_respond(json!(decided));
                        }
                    }) as Task
                }
            });
            let snapshot =
                Box::new(move || Ok(json!({ "kind": "cell", "decided": mem.peek_decided(cell) })));
            Ok(Instance { tasks, snapshot })
        }
        Algorithm::WeaklogCons => {
            let log = Rc::new(ConsensusLog::new(mem).map_err(model)?);
            Ok(log_instance(log, sim, plan))
        }
        Algorithm::WeaklogCas => {
            let log = Rc::new(CasLog::new(mem).map_err(model)?);
            Ok(log_instance(log, sim, plan))
        }
        Algorithm::Universal(_) => {
            let spec = spec.expect("universal runs resolve their spec");
            match config.announcements {
                LogKind::Consensus => {
                    let obj = Universal::over_consensus_log(mem, spec).map_err(model)?;
                    Ok(universal_instance(Rc::new(obj), sim, plan))
                }
                LogKind::Cas => {
                    let obj = Universal::over_cas_log(mem, spec).map_err(model)?;
                    Ok(universal_instance(Rc::new(obj), sim, plan))
                }
            }
        }
    }
}

fn per_process<F>(sim: &SimMemory, plan: Vec<Vec<PlannedOp>>, make: F) -> Vec<Task>
where
    F: Fn(SimMemory, Vec<PlannedOp>) -> Task,
{
    plan.into_iter().map(|ops| make(sim.clone(), ops)).collect()
}

fn log_instance<L>(log: Rc<L>, sim: &SimMemory, plan: Vec<Vec<PlannedOp>>) -> Instance
where
    L: WeakLog<AppendedValue> + 'static,
{
    let tasks = per_process(sim, plan, |sim, ops| {
        let log = log.clone();
        Box::pin(async move {
            for op in ops {
                let v = AppendedValue::new(op.token, op.arg.unwrap_or(op.token as i64));
                sim.log_invoke(json!({ "op": "append", "token": v.token, "payload": v.payload }));
                match log.append(v).await {
                    Ok(seq) => {
                        sim.log_respond(json!(seq.iter().map(|v| v.token).collect::<Vec<Token>>()))
                    }
                    Err(e) => return sim.log_failure(e.to_string()),
                }
            }
        }) as Task
    });
    let snapshot = Box::new(move || {
        log.snapshot()
            .map(|s| s.to_json())
            .map_err(|e| e.to_string())
    });
    Instance { tasks, snapshot }
}

fn universal_instance<M, L>(
    obj: Rc<Universal<M, L>>,
    sim: &SimMemory,
    plan: Vec<Vec<PlannedOp>>,
) -> Instance
where
    M: Memory,
    L: WeakLog<Invocation> + 'static,
{
    let tasks = per_process(sim, plan, |sim, ops| {
        let obj = obj.clone();
        Box::pin(async move {
            for op in ops {
                let inv = Invocation::new(op.token, &op.op, op.arg);
                sim.log_invoke(json!({ "op": &*inv.op, "arg": inv.arg, "token": inv.token }));
                match obj.apply(inv).await {
                    Ok(r) => sim.log_respond(serde_json::to_value(r).expect("responses serialize")),
                    Err(e) => return sim.log_failure(e.to_string()),
                }
            }
        }) as Task
    });
    let snapshot = Box::new(move || {
        let chain = obj.decided_chain().map_err(|e| e.to_string())?;
        let log = obj.announcements().snapshot().map_err(|e| e.to_string())?;
        Ok(json!({
            "kind": "universal",
            "chain": chain.iter().map(|i| i.token).collect::<Vec<_>>(),
            "announcements": log.to_json(),
        }))
    });
    Instance { tasks, snapshot }
}
