//! The sequential scaling loop: decode, react to think-end boundaries by
//! injecting a continuation or finalization trigger, enforce the stopping
//! conditions, and drive the retention rule on the cache.
//!
//! A sampled think_end never enters the cache itself: its transcript slot is
//! taken by the injected trigger (wait to keep thinking, think_end to start
//! the answer), which is the first row of the segment it opens. A sampled
//! eos terminates the answer without entering the cache or the transcript.

use crate::cache::{CacheBound, DualKvCache, MemoryStats, Segment, SegmentKind};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{Logits, Model};
use crate::sampling::{sample, SampleMode};
use crate::script::{ScriptSpec, ScriptedSource};
use crate::segmenter::{classify, BoundaryKind};
use crate::trace::{DoneStatus, InjectReason, SegmentTag, TraceEvent, TriggerToken};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

pub const DEFAULT_TOKEN_LIMIT: usize = 1 << 15;
pub const DEFAULT_SEGMENT_CAP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MinSeek,
    BudgetForcing,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxRc {
    Bounded(usize),
    Unbounded,
}

#[derive(Debug, Clone, Copy)]
pub struct ScalingPolicy {
    pub method: Method,
    /// Finalization mode, Min-Seek only: One runs a last uncounted cycle
    /// before the answer, Two forces the answer immediately.
    pub variant: Variant,
    pub max_rc: MaxRc,
    /// Generated-token budget checked at cycle boundaries; 4x this is the
    /// absolute cap that truncates mid-segment.
    pub token_limit: usize,
    /// Per-segment row cap u.
    pub segment_cap: usize,
}

impl ScalingPolicy {
    pub fn min_seek(variant: Variant, max_rc: MaxRc) -> Self {
        ScalingPolicy {
            method: Method::MinSeek,
            variant,
            max_rc,
            token_limit: DEFAULT_TOKEN_LIMIT,
            segment_cap: DEFAULT_SEGMENT_CAP,
        }
    }

    pub fn budget_forcing(max_rc: MaxRc) -> Self {
        ScalingPolicy {
            method: Method::BudgetForcing,
            variant: Variant::Two,
            max_rc,
            token_limit: DEFAULT_TOKEN_LIMIT,
            segment_cap: DEFAULT_SEGMENT_CAP,
        }
    }

    pub fn standard() -> Self {
        ScalingPolicy {
            method: Method::Standard,
            variant: Variant::Two,
            max_rc: MaxRc::Bounded(0),
            token_limit: DEFAULT_TOKEN_LIMIT,
            segment_cap: DEFAULT_SEGMENT_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_limit == 0 {
            return Err(Error::InvalidConfig("token_limit must be at least 1".into()));
        }
        if self.segment_cap < 2 {
            return Err(Error::InvalidConfig(
                "segment_cap below 2 leaves no room for a trigger plus content".into(),
            ));
        }
        Ok(())
    }

    /// Standard generation is the degenerate zero-cycle policy.
    pub fn effective_max_rc(&self) -> MaxRc {
        match self.method {
            Method::Standard => MaxRc::Bounded(0),
            _ => self.max_rc,
        }
    }

    fn scaling_enabled(&self) -> bool {
        !matches!(self.effective_max_rc(), MaxRc::Bounded(0))
    }

    fn may_continue(&self, rc_count: usize) -> bool {
        match self.effective_max_rc() {
            MaxRc::Bounded(m) => rc_count < m,
            MaxRc::Unbounded => true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum TokenSource {
    Sampled(SampleMode),
    Scripted(ScriptSpec),
}

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    pub source: TokenSource,
    pub seed: u64,
    /// Run the cache's internal consistency assertions and the row-bound
    /// checks on every step.
    pub checked: bool,
    /// Fault injection: materialization reuses stale position ids instead of
    /// renumbering. For negative-control tests only.
    pub stale_position_fault: bool,
    pub retained_cycle_max: usize,
}

impl GenerationOptions {
    pub fn sampled(mode: SampleMode, seed: u64) -> Self {
        GenerationOptions {
            source: TokenSource::Sampled(mode),
            seed,
            checked: true,
            stale_position_fault: false,
            retained_cycle_max: 1,
        }
    }

    pub fn scripted(spec: ScriptSpec) -> Self {
        GenerationOptions {
            source: TokenSource::Scripted(spec),
            seed: 0,
            checked: true,
            stale_position_fault: false,
            retained_cycle_max: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Answered,
    RunawayAccepted,
    Truncated,
}

/// Snapshot taken right after a trigger token was processed: the state the
/// recompute oracles are checked against.
#[derive(Debug, Clone)]
pub struct BoundaryRecord {
    pub transcript_index: usize,
    pub cache_token_ids: Vec<u32>,
    pub logits: Logits,
    /// True while no eviction has renumbered surviving rows, i.e. while a
    /// from-scratch forward over the surviving ids is expected to match.
    pub clean_history: bool,
    pub rows: usize,
}

/// Everything the independent replay oracle needs to rebuild the cache state
/// from scratch, in the order it happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryOp {
    Append { token_id: u32 },
    Evict { offset: usize, rows: usize },
    /// Compare replayed logits against boundaries[index] now.
    Boundary { index: usize },
}

/// Per-processed-token cost sample. Injected triggers are included: their
/// attention work is real even though they were not sampled.
#[derive(Debug, Clone, Copy)]
pub struct CostRecord {
    pub generated_index: usize,
    pub cache_rows: usize,
    pub scores: u64,
    pub cumulative_scores: u64,
    /// Cycle the token decoded in; None for the first thought and answer.
    pub cycle: Option<usize>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub transcript: Vec<u32>,
    pub prompt_len: usize,
    /// Transcript indices of injected triggers, in order.
    pub injections: Vec<usize>,
    pub events: Vec<TraceEvent>,
    pub status: RunStatus,
    pub rc_count: usize,
    pub tokens_generated: usize,
    pub max_materialized_position: usize,
    pub boundaries: Vec<BoundaryRecord>,
    pub history: Vec<HistoryOp>,
    pub costs: Vec<CostRecord>,
    /// The cache's surviving segment table at the end of the run.
    pub final_segments: Vec<Segment>,
    pub memory_mid_decode: MemoryStats,
    pub memory_after_discard: MemoryStats,
}

impl RunOutcome {
    pub fn trace_text(&self) -> String {
        crate::trace::render_trace(&self.events)
    }
}

enum SourceState {
    Sampled { mode: SampleMode, rng: ChaCha8Rng },
    Scripted(ScriptedSource),
}

fn segment_tag(kind: SegmentKind) -> SegmentTag {
    match kind {
        SegmentKind::Anchor => SegmentTag::Anchor,
        SegmentKind::Cycle => SegmentTag::Cycle,
        SegmentKind::Answer => SegmentTag::Answer,
    }
}

struct Runner<'m> {
    model: &'m Model,
    policy: ScalingPolicy,
    bound: CacheBound,
    checked: bool,
    cache: DualKvCache,
    source: SourceState,
    transcript: Vec<u32>,
    prompt_len: usize,
    injections: Vec<usize>,
    events: Vec<TraceEvent>,
    history: Vec<HistoryOp>,
    boundaries: Vec<BoundaryRecord>,
    costs: Vec<CostRecord>,
    rc_count: usize,
    cycles_started: usize,
    tokens_generated: usize,
    cumulative_scores: u64,
    last_logits: Logits,
    in_prefill: bool,
    answering: bool,
    /// Variant 1's uncounted last cycle, along with the finalize reason that
    /// started it.
    final_cycle_reason: Option<InjectReason>,
    segment_rows: usize,
    segment_start_transcript: usize,
    current_cycle: Option<usize>,
    started: Instant,
    memory_mid_decode: Option<MemoryStats>,
}

/// Run one full generation session over a fresh cache.
pub fn run_generation(
    model: &Model,
    prompt: &[u32],
    policy: ScalingPolicy,
    options: GenerationOptions,
) -> Result<RunOutcome> {
    policy.validate()?;
    let config = &model.config;
    if prompt.is_empty() {
        return Err(Error::Generation("the prompt must hold at least one token".into()));
    }
    if prompt.len() > policy.segment_cap {
        return Err(Error::Generation(format!(
            "prompt of {} tokens exceeds the per-segment cap {}",
            prompt.len(),
            policy.segment_cap
        )));
    }
    for &t in prompt {
        if t as usize >= config.vocab_size {
            return Err(Error::Generation(format!("prompt token {} outside the vocabulary", t)));
        }
    }
    if options.retained_cycle_max == 0 {
        return Err(Error::InvalidConfig("retained_cycle_max must be positive".into()));
    }
    let bound = CacheBound::new(policy.segment_cap, options.retained_cycle_max)?;
    if policy.method == Method::MinSeek && policy.scaling_enabled() {
        bound.check_config(config.max_context_length)?;
        if policy.variant == Variant::One {
            let need = (options.retained_cycle_max + 3) * policy.segment_cap;
            if need > config.max_context_length {
                return Err(Error::BoundViolation(format!(
                    "the final-cycle variant needs ({} + 3) * {} = {} rows, above max context length {}",
                    options.retained_cycle_max, policy.segment_cap, need, config.max_context_length
                )));
            }
        }
    }
    let source = match options.source {
        TokenSource::Sampled(mode) => SourceState::Sampled {
            mode,
            rng: ChaCha8Rng::seed_from_u64(options.seed),
        },
        TokenSource::Scripted(spec) => SourceState::Scripted(ScriptedSource::new(
            spec,
            config.sentinels,
            config.vocab_size,
        )?),
    };
    let mut cache = DualKvCache::new(config, options.checked);
    cache.set_stale_position_fault(options.stale_position_fault);
    let runner = Runner {
        model,
        policy,
        bound,
        checked: options.checked,
        cache,
        source,
        transcript: Vec::new(),
        prompt_len: prompt.len(),
        injections: Vec::new(),
        events: Vec::new(),
        history: Vec::new(),
        boundaries: Vec::new(),
        costs: Vec::new(),
        rc_count: 0,
        cycles_started: 0,
        tokens_generated: 0,
        cumulative_scores: 0,
        last_logits: Vec::new(),
        in_prefill: true,
        answering: false,
        final_cycle_reason: None,
        segment_rows: 0,
        segment_start_transcript: 0,
        current_cycle: None,
        started: Instant::now(),
        memory_mid_decode: None,
    };
    runner.run(prompt)
}

impl<'m> Runner<'m> {
    fn run(mut self, prompt: &[u32]) -> Result<RunOutcome> {
        self.events.push(TraceEvent::Begin { prompt_len: prompt.len() });
        self.cache.begin_segment(SegmentKind::Anchor, 0)?;
        for &t in prompt {
            self.feed(t, false)?;
        }
        self.in_prefill = false;
        self.segment_rows = prompt.len();
        self.memory_mid_decode = Some(self.cache.memory_stats());
        loop {
            if self.tokens_generated >= 4 * self.policy.token_limit {
                return self.truncate();
            }
            let token = self.next_source_token()?;
            self.tokens_generated += 1;
            if self.answering {
                if classify(token, &self.model.config.sentinels) == BoundaryKind::Eos {
                    return self.finish_answered();
                }
                if self.segment_rows == self.policy.segment_cap {
                    return self.truncate();
                }
                self.feed(token, true)?;
            } else if classify(token, &self.model.config.sentinels) == BoundaryKind::ThinkEnd {
                if let Some(outcome) = self.on_think_end()? {
                    return Ok(outcome);
                }
            } else if self.segment_rows == self.policy.segment_cap {
                if let Some(outcome) = self.on_missing_think_end()? {
                    return Ok(outcome);
                }
            } else {
                self.feed(token, true)?;
            }
        }
    }

    fn next_source_token(&mut self) -> Result<u32> {
        match &mut self.source {
            SourceState::Sampled { mode, rng } => sample(&self.last_logits, mode, rng),
            SourceState::Scripted(src) => {
                if self.answering {
                    src.next_answer_token()
                } else {
                    src.next_thinking_token()
                }
            }
        }
    }

    /// Process one token through the model and record it. Trigger feeds pass
    /// emit_token_event = false; their inject event is written separately.
    fn feed(&mut self, token_id: u32, emit_token_event: bool) -> Result<()> {
        if emit_token_event {
            self.events.push(TraceEvent::Token { idx: self.transcript.len(), id: token_id });
        }
        self.transcript.push(token_id);
        self.last_logits = self.model.forward_step(token_id, &mut self.cache)?;
        self.history.push(HistoryOp::Append { token_id });
        self.segment_rows += 1;
        if !self.in_prefill {
            let rows = self.cache.rows();
            let scores =
                (rows * self.model.config.n_layers * self.model.config.n_heads) as u64;
            self.cumulative_scores += scores;
            self.costs.push(CostRecord {
                generated_index: self.costs.len() + 1,
                cache_rows: rows,
                scores,
                cumulative_scores: self.cumulative_scores,
                cycle: self.current_cycle,
                elapsed: self.started.elapsed(),
            });
        }
        if self.checked && self.policy.method == Method::MinSeek && self.policy.scaling_enabled() {
            let mut allowed = self.bound.max_rows();
            if self.answering && self.final_cycle_reason.is_some() {
                allowed += self.policy.segment_cap;
            }
            self.cache.check_rows(&self.bound, allowed)?;
        }
        Ok(())
    }

    fn commit_current_segment(&mut self) -> Result<Segment> {
        let seg = self.cache.commit_segment(self.segment_rows)?;
        self.events.push(TraceEvent::Segment {
            kind: segment_tag(seg.kind),
            index: (seg.kind == SegmentKind::Cycle).then_some(seg.cycle_index),
            len: seg.token_len,
            offset: seg.offset,
            start: self.segment_start_transcript,
        });
        Ok(seg)
    }

    /// A sampled think_end during reasoning. Returns the finished outcome if
    /// this boundary ends the run's decode loop by way of truncation only;
    /// normal finalization continues into the answer loop.
    fn on_think_end(&mut self) -> Result<Option<RunOutcome>> {
        let idx = self.transcript.len();
        self.events.push(TraceEvent::ThinkEnd { idx });
        let seg = self.commit_current_segment()?;
        if let Some(reason) = self.final_cycle_reason {
            // variant 1's last cycle is exempt from the retention rule
            self.start_answer(reason)?;
            return Ok(None);
        }
        if !self.policy.scaling_enabled() {
            self.start_answer(InjectReason::RcLimit)?;
            return Ok(None);
        }
        if seg.kind == SegmentKind::Cycle && self.policy.method == Method::MinSeek {
            self.apply_retention(&seg)?;
        }
        if self.policy.may_continue(self.rc_count)
            && self.tokens_generated <= self.policy.token_limit
        {
            self.rc_count += 1;
            self.cycles_started += 1;
            let cycle_index = self.cycles_started;
            self.current_cycle = Some(cycle_index);
            self.start_segment(
                SegmentKind::Cycle,
                cycle_index,
                TriggerToken::Wait,
                InjectReason::Continue,
            )?;
            if let SourceState::Scripted(src) = &mut self.source {
                src.start_next_thought();
            }
            return Ok(None);
        }
        let reason = if !self.policy.may_continue(self.rc_count) {
            InjectReason::RcLimit
        } else {
            InjectReason::TokenLimit
        };
        if self.policy.method == Method::MinSeek && self.policy.variant == Variant::One {
            self.final_cycle_reason = Some(reason);
            self.cycles_started += 1;
            let cycle_index = self.cycles_started;
            self.current_cycle = Some(cycle_index);
            self.start_segment(SegmentKind::Cycle, cycle_index, TriggerToken::Wait, reason)?;
            if let SourceState::Scripted(src) = &mut self.source {
                src.start_next_thought();
            }
            return Ok(None);
        }
        self.start_answer(reason)?;
        Ok(None)
    }

    fn apply_retention(&mut self, seg: &Segment) -> Result<()> {
        let outcome = self
            .cache
            .apply_min_rule(seg.creation_order, self.bound.retained_cycle_max)?;
        self.events.push(TraceEvent::MinRule {
            decision: outcome.decision,
            new_len: outcome.new_len,
            old_len: outcome.old_len,
            kept_cycle: outcome.kept_cycle_index,
            kept_len: outcome.kept_len,
        });
        if let Some(ev) = outcome.evicted {
            self.events.push(TraceEvent::Evict {
                cycle: ev.cycle_index,
                offset: ev.offset,
                rows: ev.rows,
            });
            self.history.push(HistoryOp::Evict { offset: ev.offset, rows: ev.rows });
            self.cache.materialize_all()?;
            self.events.push(TraceEvent::Materialize { rows: self.cache.rows() });
        }
        Ok(())
    }

    /// Open a segment with its trigger token: the bookkeeping shared by
    /// continuation, variant 1's final cycle, and answer starts.
    fn start_segment(
        &mut self,
        kind: SegmentKind,
        cycle_index: usize,
        trigger: TriggerToken,
        reason: InjectReason,
    ) -> Result<()> {
        let idx = self.transcript.len();
        self.injections.push(idx);
        self.cache.begin_segment(kind, cycle_index)?;
        self.segment_rows = 0;
        self.segment_start_transcript = idx;
        let token_id = match trigger {
            TriggerToken::Wait => self.model.config.sentinels.wait,
            TriggerToken::ThinkEnd => self.model.config.sentinels.think_end,
        };
        self.events.push(TraceEvent::Inject { token: trigger, idx, reason });
        self.feed(token_id, false)?;
        self.boundaries.push(BoundaryRecord {
            transcript_index: idx,
            cache_token_ids: self.cache.token_ids().to_vec(),
            logits: self.last_logits.clone(),
            clean_history: self.cache.history_contiguous(),
            rows: self.cache.rows(),
        });
        self.history.push(HistoryOp::Boundary { index: self.boundaries.len() - 1 });
        self.events.push(TraceEvent::Cache {
            rows: self.cache.rows(),
            state: self.cache.state_summary(),
        });
        Ok(())
    }

    fn start_answer(&mut self, reason: InjectReason) -> Result<()> {
        self.current_cycle = None;
        self.start_segment(SegmentKind::Answer, 0, TriggerToken::ThinkEnd, reason)?;
        self.events.push(TraceEvent::AnswerStart {
            idx: *self.injections.last().unwrap(),
        });
        self.answering = true;
        if let SourceState::Scripted(src) = &mut self.source {
            src.start_answer();
        }
        Ok(())
    }

    /// The current segment hit its row cap without a think_end.
    fn on_missing_think_end(&mut self) -> Result<Option<RunOutcome>> {
        let (tag, index) = match self.current_cycle {
            Some(c) => (SegmentTag::Cycle, Some(c)),
            None => (SegmentTag::Anchor, None),
        };
        self.events.push(TraceEvent::MissingThinkEnd {
            segment: tag,
            index,
            rows: self.segment_rows,
        });
        let is_first_thought = self.current_cycle.is_none();
        let rollback = self.policy.method == Method::MinSeek
            && self.policy.variant == Variant::Two
            && self.final_cycle_reason.is_none()
            && !is_first_thought;
        if !rollback {
            // the runaway text stands as the final output
            self.commit_current_segment()?;
            return Ok(Some(self.finish(RunStatus::RunawayAccepted, DoneStatus::Runaway)?));
        }
        let rows = self.cache.abort_segment()?;
        let offset = self.cache.rows();
        self.events.push(TraceEvent::Evict {
            cycle: self.current_cycle.unwrap(),
            offset,
            rows,
        });
        self.history.push(HistoryOp::Evict { offset, rows });
        self.cache.materialize_all()?;
        self.events.push(TraceEvent::Materialize { rows: self.cache.rows() });
        // the transcript loses the runaway cycle with its wait trigger; the
        // forced think_end takes the trigger's place, and the erased cycle
        // no longer counts toward the cycle tally
        self.transcript.truncate(self.segment_start_transcript);
        self.injections.pop();
        self.rc_count -= 1;
        self.current_cycle = None;
        self.start_answer(InjectReason::MissingThinkEnd)?;
        Ok(None)
    }

    fn finish_answered(mut self) -> Result<RunOutcome> {
        // the sampled eos terminates the answer without becoming a row
        self.commit_current_segment()?;
        self.finish(RunStatus::Answered, DoneStatus::Answered)
    }

    fn finish(&mut self, status: RunStatus, done: DoneStatus) -> Result<RunOutcome> {
        self.cache.discard_materialized();
        self.events.push(TraceEvent::Done {
            status: done,
            tokens: self.tokens_generated,
            cycles: self.rc_count,
        });
        Ok(self.build_outcome(status))
    }

    fn truncate(mut self) -> Result<RunOutcome> {
        // commit whatever was decoding; truncation keeps the partial text
        self.commit_current_segment()?;
        self.cache.discard_materialized();
        self.events.push(TraceEvent::Truncate { tokens: self.tokens_generated });
        Ok(self.build_outcome(RunStatus::Truncated))
    }

    fn build_outcome(&mut self, status: RunStatus) -> RunOutcome {
        RunOutcome {
            transcript: std::mem::take(&mut self.transcript),
            prompt_len: self.prompt_len,
            injections: std::mem::take(&mut self.injections),
            events: std::mem::take(&mut self.events),
            status,
            rc_count: self.rc_count,
            tokens_generated: self.tokens_generated,
            max_materialized_position: self.cache.max_position_applied(),
            boundaries: std::mem::take(&mut self.boundaries),
            history: std::mem::take(&mut self.history),
            costs: std::mem::take(&mut self.costs),
            final_segments: self.cache.segments().to_vec(),
            memory_mid_decode: self.memory_mid_decode.expect("sampled after prefill"),
            memory_after_discard: self.cache.memory_stats(),
        }
    }
}

/// Convenience used by fixtures: a short ordinary-token prompt.
pub fn default_prompt(config: &ModelConfig, len: usize) -> Vec<u32> {
    (0..len)
        .map(|i| crate::script::filler_token(1000 + i, &config.sentinels, config.vocab_size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::{ScriptedAnswer, ScriptedThought};
    use crate::trace::Phase;

    fn toy_model() -> Model {
        Model::from_seed(ModelConfig::toy(), 7).unwrap()
    }

    fn spec_of(lens: &[usize], answer_len: usize) -> ScriptSpec {
        ScriptSpec {
            thoughts: lens.iter().map(|&len| ScriptedThought { len, terminates: true }).collect(),
            answer: ScriptedAnswer { len: answer_len, eos: true },
        }
    }

    fn policy(method: Method, variant: Variant, m: usize) -> ScalingPolicy {
        ScalingPolicy {
            method,
            variant,
            max_rc: MaxRc::Bounded(m),
            token_limit: DEFAULT_TOKEN_LIMIT,
            segment_cap: 16,
        }
    }

    fn run_scripted(p: ScalingPolicy, spec: ScriptSpec) -> RunOutcome {
        let model = toy_model();
        let prompt = default_prompt(&model.config, 4);
        run_generation(&model, &prompt, p, GenerationOptions::scripted(spec)).unwrap()
    }

    fn count_events(outcome: &RunOutcome, f: impl Fn(&TraceEvent) -> bool) -> usize {
        outcome.events.iter().filter(|e| f(e)).count()
    }

    #[test]
    fn zero_cycles_identical_across_methods() {
        let spec = spec_of(&[6], 5);
        let configs = [
            policy(Method::MinSeek, Variant::One, 0),
            policy(Method::MinSeek, Variant::Two, 0),
            policy(Method::BudgetForcing, Variant::Two, 0),
            ScalingPolicy { segment_cap: 16, ..ScalingPolicy::standard() },
        ];
        let runs: Vec<RunOutcome> =
            configs.iter().map(|&p| run_scripted(p, spec.clone())).collect();
        for r in &runs[1..] {
            assert_eq!(r.transcript, runs[0].transcript, "transcripts must agree at zero cycles");
            assert_eq!(
                r.trace_text(),
                runs[0].trace_text(),
                "traces must be byte-identical at zero cycles"
            );
        }
        assert_eq!(runs[0].status, RunStatus::Answered);
        assert_eq!(runs[0].rc_count, 0);
    }

    #[test]
    fn two_cycle_run_counts_injections_and_decisions() {
        let out = run_scripted(policy(Method::MinSeek, Variant::Two, 2), spec_of(&[6, 5, 4], 5));
        let continues = count_events(&out, |e| {
            matches!(e, TraceEvent::Inject { reason: InjectReason::Continue, .. })
        });
        let decisions = count_events(&out, |e| matches!(e, TraceEvent::MinRule { .. }));
        assert_eq!(continues, 2, "exactly one continuation per allowed cycle");
        assert_eq!(decisions, 2, "every completed cycle gets a retention decision");
        assert_eq!(out.rc_count, 2);
        assert_eq!(out.status, RunStatus::Answered);
        crate::trace::replay_phases(&out.events).expect("trace must replay");
    }

    #[test]
    fn budget_forcing_keeps_every_segment() {
        let out =
            run_scripted(policy(Method::BudgetForcing, Variant::Two, 2), spec_of(&[6, 5, 4], 5));
        assert_eq!(count_events(&out, |e| matches!(e, TraceEvent::MinRule { .. })), 0);
        assert_eq!(count_events(&out, |e| matches!(e, TraceEvent::Evict { .. })), 0);
        assert_eq!(count_events(&out, |e| matches!(e, TraceEvent::Materialize { .. })), 0);
        assert!(
            out.history.iter().all(|h| !matches!(h, HistoryOp::Evict { .. })),
            "the baseline never evicts, so positions are never re-encoded"
        );
        assert_eq!(out.final_segments.len(), 4, "anchor, two cycles, answer all retained");
        let rows: Vec<usize> = out.costs.iter().map(|c| c.cache_rows).collect();
        assert!(rows.windows(2).all(|w| w[1] > w[0]), "rows grow monotonically");
    }

    #[test]
    fn retention_keeps_cache_to_three_segments() {
        let out = run_scripted(
            policy(Method::MinSeek, Variant::Two, 6),
            spec_of(&[6, 9, 5, 8, 5, 7, 4], 5),
        );
        assert_eq!(out.rc_count, 6);
        assert_eq!(
            out.final_segments.len(),
            3,
            "anchor, one kept cycle, answer: {:?}",
            out.final_segments
        );
        let cap = 16usize;
        for c in &out.costs {
            assert!(c.cache_rows <= 3 * cap, "row count {} above the 3u ceiling", c.cache_rows);
        }
        let kept: Vec<&TraceEvent> =
            out.events.iter().filter(|e| matches!(e, TraceEvent::MinRule { .. })).collect();
        assert_eq!(kept.len(), 6);
        if let TraceEvent::MinRule { kept_len, .. } = kept[5] {
            assert_eq!(*kept_len, 4, "the shortest cycle length survives");
        }
    }

    #[test]
    fn variant_one_runs_an_uncounted_final_cycle() {
        let out = run_scripted(policy(Method::MinSeek, Variant::One, 1), spec_of(&[6, 5, 7], 5));
        assert_eq!(out.rc_count, 1, "the final cycle is not counted");
        let finalizing_wait = count_events(&out, |e| {
            matches!(
                e,
                TraceEvent::Inject {
                    token: TriggerToken::Wait,
                    reason: InjectReason::RcLimit,
                    ..
                }
            )
        });
        assert_eq!(finalizing_wait, 1, "finalization injects one last wait");
        assert_eq!(
            count_events(&out, |e| matches!(e, TraceEvent::MinRule { .. })),
            1,
            "the final cycle is exempt from the retention rule"
        );
        assert_eq!(
            out.final_segments.len(),
            4,
            "anchor, kept cycle, final cycle, answer: {:?}",
            out.final_segments
        );
        let phases = crate::trace::replay_phases(&out.events).unwrap();
        assert!(phases.contains(&Phase::Finalizing));
        assert_eq!(out.status, RunStatus::Answered);
    }

    #[test]
    fn runaway_cycle_rolls_back_under_variant_two() {
        let spec = ScriptSpec {
            thoughts: vec![
                ScriptedThought { len: 6, terminates: true },
                ScriptedThought { len: 99, terminates: false },
            ],
            answer: ScriptedAnswer { len: 5, eos: true },
        };
        let out = run_scripted(policy(Method::MinSeek, Variant::Two, 2), spec);
        assert_eq!(out.status, RunStatus::Answered);
        assert_eq!(
            count_events(&out, |e| matches!(e, TraceEvent::MissingThinkEnd { .. })),
            1
        );
        assert_eq!(
            count_events(&out, |e| {
                matches!(e, TraceEvent::Inject { reason: InjectReason::MissingThinkEnd, .. })
            }),
            1,
            "the wait is replaced by a forced think_end"
        );
        assert_eq!(
            out.final_segments.len(),
            2,
            "runaway cycle fully evicted, answer runs from the anchor alone"
        );
        // transcript shows no trace of the rolled-back cycle
        let wait = toy_model().config.sentinels.wait;
        assert!(!out.transcript.contains(&wait), "the replaced wait must not remain");
        crate::trace::replay_phases(&out.events).expect("rollback trace must replay");
    }

    #[test]
    fn runaway_is_accepted_by_baseline_and_variant_one() {
        let spec = ScriptSpec {
            thoughts: vec![
                ScriptedThought { len: 6, terminates: true },
                ScriptedThought { len: 99, terminates: false },
            ],
            answer: ScriptedAnswer { len: 5, eos: true },
        };
        for p in [
            policy(Method::MinSeek, Variant::One, 2),
            policy(Method::BudgetForcing, Variant::Two, 2),
        ] {
            let out = run_scripted(p, spec.clone());
            assert_eq!(out.status, RunStatus::RunawayAccepted);
            assert!(matches!(
                out.events.last(),
                Some(TraceEvent::Done { status: DoneStatus::Runaway, .. })
            ));
            assert_eq!(
                count_events(&out, |e| matches!(e, TraceEvent::Evict { .. })),
                0,
                "nothing is rolled back when the runaway is accepted"
            );
        }
    }

    #[test]
    fn runaway_first_thought_accepted_by_every_method() {
        let spec = ScriptSpec {
            thoughts: vec![ScriptedThought { len: 99, terminates: false }],
            answer: ScriptedAnswer { len: 5, eos: true },
        };
        for p in [
            policy(Method::MinSeek, Variant::One, 2),
            policy(Method::MinSeek, Variant::Two, 2),
            policy(Method::BudgetForcing, Variant::Two, 2),
        ] {
            let out = run_scripted(p, spec.clone());
            assert_eq!(out.status, RunStatus::RunawayAccepted);
            assert_eq!(out.final_segments.len(), 1, "only the anchor exists");
            assert_eq!(out.final_segments[0].token_len, 16, "anchor filled to the cap");
        }
    }

    #[test]
    fn token_limit_finalizes_unbounded_runs() {
        let p = ScalingPolicy {
            method: Method::MinSeek,
            variant: Variant::Two,
            max_rc: MaxRc::Unbounded,
            token_limit: 30,
            segment_cap: 16,
        };
        let out = run_scripted(p, spec_of(&[8; 40], 5));
        assert_eq!(out.status, RunStatus::Answered);
        assert!(
            count_events(&out, |e| {
                matches!(e, TraceEvent::Inject { reason: InjectReason::TokenLimit, .. })
            }) == 1,
            "the run must finalize through the token budget"
        );
        assert!(out.tokens_generated > 30, "the boundary check is a soft limit");
    }

    #[test]
    fn hard_cap_truncates_endless_generation() {
        let p = ScalingPolicy {
            method: Method::BudgetForcing,
            variant: Variant::Two,
            max_rc: MaxRc::Bounded(0),
            token_limit: 5,
            segment_cap: 64,
        };
        let spec = ScriptSpec {
            thoughts: vec![ScriptedThought { len: 99, terminates: false }],
            answer: ScriptedAnswer { len: 5, eos: true },
        };
        let model = toy_model();
        let prompt = default_prompt(&model.config, 4);
        let out = run_generation(&model, &prompt, p, GenerationOptions::scripted(spec)).unwrap();
        assert_eq!(out.status, RunStatus::Truncated);
        assert_eq!(out.tokens_generated, 20, "four times the token budget");
        assert!(matches!(out.events.last(), Some(TraceEvent::Truncate { .. })));
    }

    #[test]
    fn sampled_runs_are_reproducible() {
        let model = toy_model();
        let prompt = default_prompt(&model.config, 4);
        let p = policy(Method::MinSeek, Variant::Two, 2);
        let opts = || GenerationOptions::sampled(SampleMode::default_nucleus(), 11);
        let a = run_generation(&model, &prompt, p, opts()).unwrap();
        let b = run_generation(&model, &prompt, p, opts()).unwrap();
        assert_eq!(a.transcript, b.transcript, "same seed, same tokens");
        assert_eq!(a.trace_text(), b.trace_text(), "same seed, same trace bytes");
    }

    #[test]
    fn misconfigured_runs_rejected_before_decoding() {
        let model = toy_model();
        let prompt = default_prompt(&model.config, 4);
        let small = ModelConfig { max_context_length: 100, ..ModelConfig::toy() };
        let small_model = Model::from_seed(small, 7).unwrap();
        let p1 = ScalingPolicy {
            method: Method::MinSeek,
            variant: Variant::One,
            max_rc: MaxRc::Bounded(2),
            token_limit: DEFAULT_TOKEN_LIMIT,
            segment_cap: 32,
        };
        let spec = || spec_of(&[4, 4, 4], 4);
        let err = run_generation(&small_model, &prompt, p1, GenerationOptions::scripted(spec()))
            .unwrap_err();
        assert!(
            matches!(err, Error::BoundViolation(_)),
            "variant 1 needs final-cycle headroom, got {:?}",
            err
        );
        let p2 = ScalingPolicy { variant: Variant::Two, ..p1 };
        run_generation(&small_model, &prompt, p2, GenerationOptions::scripted(spec()))
            .expect("variant 2 fits in the same context");
        let long_prompt = default_prompt(&model.config, 40);
        let p3 = policy(Method::MinSeek, Variant::Two, 2);
        assert!(run_generation(&model, &long_prompt, p3, GenerationOptions::scripted(spec()))
            .is_err());
    }

    #[test]
    fn costs_accumulate_strictly() {
        let out = run_scripted(policy(Method::MinSeek, Variant::Two, 3), spec_of(&[6, 5, 4, 6], 5));
        assert!(!out.costs.is_empty());
        let mut prev = 0;
        for c in &out.costs {
            assert!(c.cumulative_scores > prev);
            assert_eq!(
                c.scores,
                (c.cache_rows * 4 * 4) as u64,
                "score count is rows x layers x heads"
            );
            prev = c.cumulative_scores;
        }
    }

    #[test]
    fn boundary_records_snapshot_the_cache() {
        let out = run_scripted(policy(Method::MinSeek, Variant::Two, 2), spec_of(&[6, 5, 4], 5));
        assert_eq!(out.boundaries.len(), 3, "two continuations plus the answer start");
        for b in &out.boundaries {
            assert_eq!(b.cache_token_ids.len(), b.rows);
            assert_eq!(b.logits.len(), 256);
        }
        let first = &out.boundaries[0];
        let wait = toy_model().config.sentinels.wait;
        assert_eq!(*first.cache_token_ids.last().unwrap(), wait);
        assert!(first.clean_history, "nothing evicted before the first cycle");
    }

    #[test]
    fn offline_split_matches_online_segments() {
        let model = toy_model();
        let out = run_scripted(policy(Method::MinSeek, Variant::Two, 3), spec_of(&[6, 5, 4, 3], 5));
        let spans = crate::segmenter::split_transcript(
            &out.transcript,
            &out.injections,
            &model.config.sentinels,
        )
        .unwrap();
        let committed: Vec<(SegmentTag, usize, usize)> = out
            .events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Segment { kind, len, start, .. } => Some((*kind, *len, *start)),
                _ => None,
            })
            .collect();
        assert_eq!(spans.pt1.len(), committed[0].1);
        assert_eq!(spans.pt1.start, committed[0].2);
        let cycle_records: Vec<&(SegmentTag, usize, usize)> =
            committed.iter().filter(|(k, _, _)| *k == SegmentTag::Cycle).collect();
        assert_eq!(spans.cycles.len(), cycle_records.len());
        for (span, rec) in spans.cycles.iter().zip(&cycle_records) {
            assert_eq!(span.len(), rec.1, "cycle span length matches committed rows");
            assert_eq!(span.start, rec.2);
        }
        let answer = spans.answer.clone().expect("run answered");
        let answer_rec =
            committed.iter().find(|(k, _, _)| *k == SegmentTag::Answer).expect("answer committed");
        assert_eq!(answer.len(), answer_rec.1);
        assert_eq!(answer.start, answer_rec.2);
        assert_eq!(spans.total_len(), out.transcript.len());
    }

    #[test]
    fn memory_ratio_doubles_during_decode_and_settles_after() {
        let out = run_scripted(policy(Method::MinSeek, Variant::Two, 2), spec_of(&[6, 5, 4], 5));
        assert!((out.memory_mid_decode.key_to_value_ratio() - 2.0).abs() < 1e-9);
        assert!((out.memory_after_discard.key_to_value_ratio() - 1.0).abs() < 1e-9);
    }
}
