//! Boundary detection over the generated token stream, and the offline
//! transcript splitter used to cross-check the controller's own segment
//! records.
//!
//! Sentinels are single token ids. During thinking only think_end is
//! structural; during answering only eos is. Everything else is content.

use crate::config::SentinelTokens;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    ThinkEnd,
    AnswerStart,
    Eos,
    Ordinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEvent {
    pub kind: BoundaryKind,
    pub token_index: usize,
}

pub fn classify(token_id: u32, sentinels: &SentinelTokens) -> BoundaryKind {
    if token_id == sentinels.think_end {
        BoundaryKind::ThinkEnd
    } else if token_id == sentinels.answer_start {
        BoundaryKind::AnswerStart
    } else if token_id == sentinels.eos {
        BoundaryKind::Eos
    } else {
        BoundaryKind::Ordinary
    }
}

/// Classifies a stream token by token, tracking the running index.
pub struct StreamScanner {
    sentinels: SentinelTokens,
    next_index: usize,
}

impl StreamScanner {
    pub fn new(sentinels: SentinelTokens) -> Self {
        StreamScanner { sentinels, next_index: 0 }
    }

    pub fn scan(&mut self, token_id: u32) -> BoundaryEvent {
        let ev = BoundaryEvent {
            kind: classify(token_id, &self.sentinels),
            token_index: self.next_index,
        };
        self.next_index += 1;
        ev
    }
}

/// Spans into a transcript. Each trigger token (the wait that opens a cycle,
/// the think_end that opens the answer) is the first token of its span, so
/// span lengths line up with cache segment row counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptSpans {
    pub pt1: std::ops::Range<usize>,
    pub cycles: Vec<std::ops::Range<usize>>,
    pub answer: Option<std::ops::Range<usize>>,
}

impl TranscriptSpans {
    pub fn total_len(&self) -> usize {
        self.pt1.len()
            + self.cycles.iter().map(|c| c.len()).sum::<usize>()
            + self.answer.as_ref().map_or(0, |a| a.len())
    }
}

/// Split a transcript at the recorded injection positions. The last injected
/// token decides the tail: think_end means the final span is the answer,
/// anything else means the run ended inside reasoning (runaway accepted) and
/// every span after PT1 is a cycle.
pub fn split_transcript(
    tokens: &[u32],
    injections: &[usize],
    sentinels: &SentinelTokens,
) -> Result<TranscriptSpans> {
    for w in injections.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Segment(format!(
                "injection positions out of order: {} then {}",
                w[0], w[1]
            )));
        }
    }
    if let Some(&last) = injections.last() {
        if last >= tokens.len() {
            return Err(Error::Segment(format!(
                "injection at {} beyond transcript of length {}",
                last,
                tokens.len()
            )));
        }
    }
    if let Some(&first) = injections.first() {
        if first == 0 {
            return Err(Error::Segment("injection cannot precede the prompt".into()));
        }
    }
    let Some(&first) = injections.first() else {
        // no boundaries were ever reached: the whole stream is PT1
        return Ok(TranscriptSpans { pt1: 0..tokens.len(), cycles: Vec::new(), answer: None });
    };
    let pt1 = 0..first;
    let mut spans = Vec::new();
    for (i, &start) in injections.iter().enumerate() {
        let end = injections.get(i + 1).copied().unwrap_or(tokens.len());
        spans.push(start..end);
    }
    let last_start = *injections.last().unwrap();
    let answer = if classify(tokens[last_start], sentinels) == BoundaryKind::ThinkEnd {
        spans.pop()
    } else {
        None
    };
    Ok(TranscriptSpans { pt1, cycles: spans, answer })
}
