//! Generation traces: line-delimited structured text, one event per line,
//! `kind key=value ...` with a fixed key order per kind. Events carry logical
//! indices only (no wall times, no floats) so a run's trace is byte-stable
//! and diffable. Policy metadata lives in file names, not in the stream,
//! which keeps degenerate runs identical across methods.

use crate::cache::MinRuleDecision;
use crate::error::{Error, Result};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerToken {
    Wait,
    ThinkEnd,
}

impl TriggerToken {
    fn tag(self) -> &'static str {
        match self {
            TriggerToken::Wait => "wait",
            TriggerToken::ThinkEnd => "think_end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectReason {
    Continue,
    RcLimit,
    TokenLimit,
    MissingThinkEnd,
}

impl InjectReason {
    fn tag(self) -> &'static str {
        match self {
            InjectReason::Continue => "continue",
            InjectReason::RcLimit => "rc_limit",
            InjectReason::TokenLimit => "token_limit",
            InjectReason::MissingThinkEnd => "missing_think_end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoneStatus {
    Answered,
    Runaway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentTag {
    Anchor,
    Cycle,
    Answer,
}

impl SegmentTag {
    fn tag(self) -> &'static str {
        match self {
            SegmentTag::Anchor => "anchor",
            SegmentTag::Cycle => "cycle",
            SegmentTag::Answer => "answer",
        }
    }
}

/// The phase machine a structurally valid trace must walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Thinking,
    Finalizing,
    Answering,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Begin { prompt_len: usize },
    Token { idx: usize, id: u32 },
    ThinkEnd { idx: usize },
    Inject { token: TriggerToken, idx: usize, reason: InjectReason },
    MinRule { decision: MinRuleDecision, new_len: usize, old_len: Option<usize>, kept_cycle: usize, kept_len: usize },
    Evict { cycle: usize, offset: usize, rows: usize },
    Materialize { rows: usize },
    /// Committed segment record. `offset` is the cache row offset at commit
    /// time, `start` the transcript index of the segment's first token.
    Segment { kind: SegmentTag, index: Option<usize>, len: usize, offset: usize, start: usize },
    MissingThinkEnd { segment: SegmentTag, index: Option<usize>, rows: usize },
    AnswerStart { idx: usize },
    Cache { rows: usize, state: String },
    Truncate { tokens: usize },
    Done { status: DoneStatus, tokens: usize, cycles: usize },
}

impl TraceEvent {
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        match self {
            TraceEvent::Begin { prompt_len } => {
                write!(s, "begin prompt_len={}", prompt_len).unwrap()
            }
            TraceEvent::Token { idx, id } => write!(s, "token idx={} id={}", idx, id).unwrap(),
            TraceEvent::ThinkEnd { idx } => write!(s, "think_end idx={}", idx).unwrap(),
            TraceEvent::Inject { token, idx, reason } => write!(
                s,
                "inject token={} idx={} reason={}",
                token.tag(),
                idx,
                reason.tag()
            )
            .unwrap(),
            TraceEvent::MinRule { decision, new_len, old_len, kept_cycle, kept_len } => {
                let d = match decision {
                    MinRuleDecision::KeptOld => "kept_old",
                    MinRuleDecision::ReplacedWithNew => "replaced_with_new",
                };
                let old = old_len.map_or("none".to_string(), |v| v.to_string());
                write!(
                    s,
                    "min_rule decision={} new_len={} old_len={} kept_cycle={} kept_len={}",
                    d, new_len, old, kept_cycle, kept_len
                )
                .unwrap()
            }
            TraceEvent::Evict { cycle, offset, rows } => {
                write!(s, "evict cycle={} offset={} rows={}", cycle, offset, rows).unwrap()
            }
            TraceEvent::Materialize { rows } => write!(s, "materialize rows={}", rows).unwrap(),
            TraceEvent::Segment { kind, index, len, offset, start } => {
                write!(s, "segment kind={}", kind.tag()).unwrap();
                if let Some(i) = index {
                    write!(s, " index={}", i).unwrap();
                }
                write!(s, " len={} offset={} start={}", len, offset, start).unwrap()
            }
            TraceEvent::MissingThinkEnd { segment, index, rows } => {
                write!(s, "missing_think_end segment={}", segment.tag()).unwrap();
                if let Some(i) = index {
                    write!(s, " index={}", i).unwrap();
                }
                write!(s, " rows={}", rows).unwrap()
            }
            TraceEvent::AnswerStart { idx } => write!(s, "answer_start idx={}", idx).unwrap(),
            TraceEvent::Cache { rows, state } => {
                write!(s, "cache rows={} state={}", rows, state).unwrap()
            }
            TraceEvent::Truncate { tokens } => write!(s, "truncate tokens={}", tokens).unwrap(),
            TraceEvent::Done { status, tokens, cycles } => {
                let st = match status {
                    DoneStatus::Answered => "answered",
                    DoneStatus::Runaway => "runaway",
                };
                write!(s, "done status={} tokens={} cycles={}", st, tokens, cycles).unwrap()
            }
        }
        s
    }

    pub fn parse_line(line: &str) -> Result<TraceEvent> {
        let bad = |msg: &str| Error::Trace(format!("{}: {:?}", msg, line));
        let mut parts = line.split_whitespace();
        let kind = parts.next().ok_or_else(|| bad("empty line"))?;
        let mut fields: Vec<(&str, &str)> = Vec::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| bad("field without ="))?;
            fields.push((k, v));
        }
        let get = |key: &str| -> Result<&str> {
            fields
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Trace(format!("missing field {} in {:?}", key, line)))
        };
        let get_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Trace(format!("bad number for {} in {:?}", key, line)))
        };
        let ev = match kind {
            "begin" => TraceEvent::Begin { prompt_len: get_usize("prompt_len")? },
            "token" => TraceEvent::Token {
                idx: get_usize("idx")?,
                id: get("id")?
                    .parse()
                    .map_err(|_| bad("bad token id"))?,
            },
            "think_end" => TraceEvent::ThinkEnd { idx: get_usize("idx")? },
            "inject" => TraceEvent::Inject {
                token: match get("token")? {
                    "wait" => TriggerToken::Wait,
                    "think_end" => TriggerToken::ThinkEnd,
                    _ => return Err(bad("unknown trigger token")),
                },
                idx: get_usize("idx")?,
                reason: match get("reason")? {
                    "continue" => InjectReason::Continue,
                    "rc_limit" => InjectReason::RcLimit,
                    "token_limit" => InjectReason::TokenLimit,
                    "missing_think_end" => InjectReason::MissingThinkEnd,
                    _ => return Err(bad("unknown inject reason")),
                },
            },
            "min_rule" => TraceEvent::MinRule {
                decision: match get("decision")? {
                    "kept_old" => MinRuleDecision::KeptOld,
                    "replaced_with_new" => MinRuleDecision::ReplacedWithNew,
                    _ => return Err(bad("unknown decision")),
                },
                new_len: get_usize("new_len")?,
                old_len: match get("old_len")? {
                    "none" => None,
                    v => Some(v.parse().map_err(|_| bad("bad old_len"))?),
                },
                kept_cycle: get_usize("kept_cycle")?,
                kept_len: get_usize("kept_len")?,
            },
            "evict" => TraceEvent::Evict {
                cycle: get_usize("cycle")?,
                offset: get_usize("offset")?,
                rows: get_usize("rows")?,
            },
            "materialize" => TraceEvent::Materialize { rows: get_usize("rows")? },
            "segment" => {
                let tag = match get("kind")? {
                    "anchor" => SegmentTag::Anchor,
                    "cycle" => SegmentTag::Cycle,
                    "answer" => SegmentTag::Answer,
                    _ => return Err(bad("unknown segment kind")),
                };
                let index = if fields.iter().any(|(k, _)| *k == "index") {
                    Some(get_usize("index")?)
                } else {
                    None
                };
                TraceEvent::Segment {
                    kind: tag,
                    index,
                    len: get_usize("len")?,
                    offset: get_usize("offset")?,
                    start: get_usize("start")?,
                }
            }
            "missing_think_end" => {
                let tag = match get("segment")? {
                    "anchor" => SegmentTag::Anchor,
                    "cycle" => SegmentTag::Cycle,
                    "answer" => SegmentTag::Answer,
                    _ => return Err(bad("unknown segment kind")),
                };
                let index = if fields.iter().any(|(k, _)| *k == "index") {
                    Some(get_usize("index")?)
                } else {
                    None
                };
                TraceEvent::MissingThinkEnd { segment: tag, index, rows: get_usize("rows")? }
            }
            "answer_start" => TraceEvent::AnswerStart { idx: get_usize("idx")? },
            "cache" => TraceEvent::Cache {
                rows: get_usize("rows")?,
                state: get("state")?.to_string(),
            },
            "truncate" => TraceEvent::Truncate { tokens: get_usize("tokens")? },
            "done" => TraceEvent::Done {
                status: match get("status")? {
                    "answered" => DoneStatus::Answered,
                    "runaway" => DoneStatus::Runaway,
                    _ => return Err(bad("unknown done status")),
                },
                tokens: get_usize("tokens")?,
                cycles: get_usize("cycles")?,
            },
            _ => return Err(bad("unknown event kind")),
        };
        Ok(ev)
    }
}

pub fn render_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(TraceEvent::parse_line)
        .collect()
}

/// Walk the phase machine over a trace, returning the phase after each
/// event. Rejects traces that inject in the wrong phase, answer twice,
/// continue past termination, or end without Done/Truncate.
pub fn replay_phases(events: &[TraceEvent]) -> Result<Vec<Phase>> {
    let mut phase = Phase::Thinking;
    let mut seen_begin = false;
    let mut phases = Vec::with_capacity(events.len());
    let mut terminated = false;
    for (i, ev) in events.iter().enumerate() {
        let fail = |msg: &str| Error::Trace(format!("event {}: {} ({:?})", i, msg, ev.to_line()));
        if terminated {
            return Err(fail("event after termination"));
        }
        if !seen_begin {
            match ev {
                TraceEvent::Begin { .. } => seen_begin = true,
                _ => return Err(fail("trace must start with begin")),
            }
            phases.push(phase);
            continue;
        }
        match ev {
            TraceEvent::Begin { .. } => return Err(fail("duplicate begin")),
            TraceEvent::Token { .. } | TraceEvent::Cache { .. } | TraceEvent::Segment { .. } => {}
            TraceEvent::ThinkEnd { .. } => {
                if phase == Phase::Answering {
                    return Err(fail("think_end boundary during the answer"));
                }
            }
            TraceEvent::MinRule { .. } | TraceEvent::Evict { .. } | TraceEvent::Materialize { .. } => {
                if phase == Phase::Answering {
                    return Err(fail("cache surgery during the answer"));
                }
            }
            TraceEvent::MissingThinkEnd { .. } => {
                if phase == Phase::Answering {
                    return Err(fail("missing_think_end during the answer"));
                }
            }
            TraceEvent::Inject { token, reason, .. } => match (token, reason) {
                (TriggerToken::Wait, InjectReason::Continue) => {
                    if phase != Phase::Thinking {
                        return Err(fail("continuation outside thinking"));
                    }
                }
                (TriggerToken::Wait, _) => {
                    if phase != Phase::Thinking {
                        return Err(fail("final-cycle injection outside thinking"));
                    }
                    phase = Phase::Finalizing;
                }
                (TriggerToken::ThinkEnd, InjectReason::Continue) => {
                    return Err(fail("think_end cannot be a continuation"))
                }
                (TriggerToken::ThinkEnd, _) => {
                    if phase == Phase::Answering {
                        return Err(fail("second finalization"));
                    }
                    phase = Phase::Finalizing;
                }
            },
            TraceEvent::AnswerStart { .. } => {
                if phase != Phase::Finalizing {
                    return Err(fail("answer_start outside finalizing"));
                }
                phase = Phase::Answering;
            }
            TraceEvent::Truncate { .. } => {
                phase = Phase::Done;
                terminated = true;
            }
            TraceEvent::Done { status, .. } => {
                match status {
                    DoneStatus::Answered => {
                        if phase != Phase::Answering {
                            return Err(fail("answered without an answer phase"));
                        }
                    }
                    DoneStatus::Runaway => {
                        if phase == Phase::Answering {
                            return Err(fail("runaway after answering began"));
                        }
                    }
                }
                phase = Phase::Done;
                terminated = true;
            }
        }
        phases.push(phase);
    }
    if !terminated {
        return Err(Error::Trace("trace does not end in done or truncate".into()));
    }
    Ok(phases)
}
