use thiserror::Error;

use crate::event::{EnvState, Likelihood, Registry, Value, SYMBOLIC_SENSOR};
use crate::lang::{Call, CallKind, Cond, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown channel `{sensor}.{event}`")]
pub struct UnknownChannel {
    pub sensor: String,
    pub event: String,
}

/// Evaluates `cond` against the environment.
///
/// `s.e()` holds when the latest reading on `(s, e)` has a likelihood of at
/// least `threshold`; `s.e(v)` additionally requires the reading to equal `v`.
/// Both sides of `&` and `|` are always evaluated. Unknown `symbolic` events
/// are simply false.
pub fn evaluate_cond(
    cond: &Cond,
    env: &EnvState,
    registry: &Registry,
    threshold: Likelihood,
) -> Result<bool, UnknownChannel> {
    Ok(match cond {
        Cond::Atom(call) => atom(call, env, registry, threshold)?,
        Cond::Not(inner) => !evaluate_cond(inner, env, registry, threshold)?,
        Cond::Group(inner) => evaluate_cond(inner, env, registry, threshold)?,
        Cond::And(l, r) => {
            let l = evaluate_cond(l, env, registry, threshold)?;
            let r = evaluate_cond(r, env, registry, threshold)?;
            l && r
        }
        Cond::Or(l, r) => {
            let l = evaluate_cond(l, env, registry, threshold)?;
            let r = evaluate_cond(r, env, registry, threshold)?;
            l || r
        }
    })
}

fn atom(
    call: &Call,
    env: &EnvState,
    registry: &Registry,
    threshold: Likelihood,
) -> Result<bool, UnknownChannel> {
    if call.target != SYMBOLIC_SENSOR && registry.event_type(&call.target, &call.function).is_none() {
        return Err(UnknownChannel {
            sensor: call.target.clone(),
            event: call.function.clone(),
        });
    }
    let Some(reading) = env.get(&call.target, &call.function) else {
        return Ok(false);
    };
    if reading.likelihood < threshold {
        return Ok(false);
    }
    match call.arg() {
        None => Ok(true),
        Some(arg) => Ok(read_variable(arg, env, registry, threshold)?.as_ref() == Some(&reading.value)),
    }
}

/// Value of an argument, or `None` when it reads a channel with no reading.
///
/// Boolean arguments evaluate to 1 or 0.
pub fn read_variable(
    var: &Variable,
    env: &EnvState,
    registry: &Registry,
    threshold: Likelihood,
) -> Result<Option<Value>, UnknownChannel> {
    let flag = |b: bool| Some(Value::Int(b as i64));
    Ok(match var {
        Variable::Number(n) => Some(Value::Int(i64::from(*n))),
        Variable::IntegerCall(call) if call.kind == Some(CallKind::Boolean) => {
            flag(atom(call, env, registry, threshold)?)
        }
        Variable::IntegerCall(call) => {
            if call.target != SYMBOLIC_SENSOR
                && registry.event_type(&call.target, &call.function).is_none()
            {
                return Err(UnknownChannel {
                    sensor: call.target.clone(),
                    event: call.function.clone(),
                });
            }
            env.get(&call.target, &call.function).map(|r| r.value.clone())
        }
        Variable::CondArg(cond) => flag(evaluate_cond(cond, env, registry, threshold)?),
    })
}
