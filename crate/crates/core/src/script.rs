//! Deterministic scripted token sources for controller tests: each thought is
//! a length plus whether it terminates with think_end, the answer is a length
//! plus whether it ends with eos. Filler ids walk a fixed stride over the
//! vocabulary, skipping sentinels, so scripted runs never touch the rng.

use crate::config::SentinelTokens;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedThought {
    /// Number of generated tokens in the thought, counting its think_end.
    pub len: usize,
    /// False models a runaway thought: fillers forever, no think_end.
    pub terminates: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedAnswer {
    /// Number of generated answer tokens, counting answer_start and eos.
    /// Without eos the answer runs away: answer_start then fillers for as
    /// long as the controller keeps asking, and len is only descriptive.
    pub len: usize,
    pub eos: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptSpec {
    pub thoughts: Vec<ScriptedThought>,
    pub answer: ScriptedAnswer,
}

impl ScriptSpec {
    /// Uniform fixture: a first thought plus `cycles` reconstruction cycles,
    /// all of one length, and a terminating answer.
    pub fn constant(cycles: usize, thought_len: usize, answer_len: usize) -> Self {
        ScriptSpec {
            thoughts: vec![ScriptedThought { len: thought_len, terminates: true }; cycles + 1],
            answer: ScriptedAnswer { len: answer_len, eos: true },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thoughts.is_empty() {
            return Err(Error::Script("a script needs at least one thought".into()));
        }
        for (i, t) in self.thoughts.iter().enumerate() {
            if t.terminates && t.len == 0 {
                return Err(Error::Script(format!(
                    "thought {} has length 0; a terminating thought is at least its think_end",
                    i
                )));
            }
            if !t.terminates && i + 1 != self.thoughts.len() {
                return Err(Error::Script(format!(
                    "thought {} never terminates, so no thought may follow it",
                    i
                )));
            }
        }
        if self.answer.len == 0 {
            return Err(Error::Script("answer length must be at least 1".into()));
        }
        if self.answer.eos && self.answer.len < 2 {
            return Err(Error::Script(
                "an eos-terminated answer needs length >= 2 (answer_start then eos)".into(),
            ));
        }
        Ok(())
    }

    /// Plain text form, one item per line:
    /// ```text
    /// script v1
    /// thought 12 end
    /// thought 8 runaway
    /// answer 6 eos
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::from("script v1\n");
        for t in &self.thoughts {
            out.push_str(&format!(
                "thought {} {}\n",
                t.len,
                if t.terminates { "end" } else { "runaway" }
            ));
        }
        out.push_str(&format!(
            "answer {}{}\n",
            self.answer.len,
            if self.answer.eos { " eos" } else { "" }
        ));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        match lines.next() {
            Some(h) if h.trim() == "script v1" => {}
            other => {
                return Err(Error::Script(format!(
                    "expected header 'script v1', found {:?}",
                    other.unwrap_or("")
                )))
            }
        }
        let mut thoughts = Vec::new();
        let mut answer = None;
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["thought", len, kind] => {
                    if answer.is_some() {
                        return Err(Error::Script("thought after answer".into()));
                    }
                    let len: usize = len
                        .parse()
                        .map_err(|_| Error::Script(format!("bad thought length {:?}", len)))?;
                    let terminates = match *kind {
                        "end" => true,
                        "runaway" => false,
                        other => {
                            return Err(Error::Script(format!(
                                "thought kind must be end or runaway, found {:?}",
                                other
                            )))
                        }
                    };
                    thoughts.push(ScriptedThought { len, terminates });
                }
                ["answer", len] | ["answer", len, "eos"] => {
                    if answer.is_some() {
                        return Err(Error::Script("duplicate answer line".into()));
                    }
                    let n: usize = len
                        .parse()
                        .map_err(|_| Error::Script(format!("bad answer length {:?}", len)))?;
                    answer = Some(ScriptedAnswer { len: n, eos: parts.len() == 3 });
                }
                _ => return Err(Error::Script(format!("unrecognized script line {:?}", line))),
            }
        }
        let answer = answer.ok_or_else(|| Error::Script("script has no answer line".into()))?;
        let spec = ScriptSpec { thoughts, answer };
        spec.validate()?;
        Ok(spec)
    }
}

/// Picks content token ids deterministically, never landing on a sentinel.
pub fn filler_token(counter: usize, sentinels: &SentinelTokens, vocab_size: usize) -> u32 {
    let mut id = ((counter * 13 + 5) % vocab_size) as u32;
    while sentinels.all().contains(&id) {
        id = (id + 1) % vocab_size as u32;
    }
    id
}

/// Replays a ScriptSpec token by token. The controller tells the source when
/// a new thought or the answer begins; the source only hands out tokens.
pub struct ScriptedSource {
    spec: ScriptSpec,
    sentinels: SentinelTokens,
    vocab_size: usize,
    thought: usize,
    emitted_in_thought: usize,
    in_answer: bool,
    emitted_in_answer: usize,
    filler_counter: usize,
}

impl ScriptedSource {
    pub fn new(spec: ScriptSpec, sentinels: SentinelTokens, vocab_size: usize) -> Result<Self> {
        spec.validate()?;
        Ok(ScriptedSource {
            spec,
            sentinels,
            vocab_size,
            thought: 0,
            emitted_in_thought: 0,
            in_answer: false,
            emitted_in_answer: 0,
            filler_counter: 0,
        })
    }

    fn filler(&mut self) -> u32 {
        let id = filler_token(self.filler_counter, &self.sentinels, self.vocab_size);
        self.filler_counter += 1;
        id
    }

    pub fn next_thinking_token(&mut self) -> Result<u32> {
        if self.in_answer {
            return Err(Error::Script("asked for a thinking token during the answer".into()));
        }
        let t = *self
            .spec
            .thoughts
            .get(self.thought)
            .ok_or_else(|| Error::Script(format!("script exhausted at thought {}", self.thought)))?;
        if !t.terminates {
            self.emitted_in_thought += 1;
            return Ok(self.filler());
        }
        self.emitted_in_thought += 1;
        if self.emitted_in_thought > t.len {
            return Err(Error::Script(format!(
                "thought {} already emitted its think_end",
                self.thought
            )));
        }
        if self.emitted_in_thought == t.len {
            Ok(self.sentinels.think_end)
        } else {
            Ok(self.filler())
        }
    }

    pub fn start_next_thought(&mut self) {
        self.thought += 1;
        self.emitted_in_thought = 0;
    }

    pub fn start_answer(&mut self) {
        self.in_answer = true;
        self.emitted_in_answer = 0;
    }

    pub fn next_answer_token(&mut self) -> Result<u32> {
        if !self.in_answer {
            return Err(Error::Script("answer token requested before start_answer".into()));
        }
        let a = self.spec.answer;
        self.emitted_in_answer += 1;
        if self.emitted_in_answer == 1 {
            return Ok(self.sentinels.answer_start);
        }
        if a.eos {
            if self.emitted_in_answer > a.len {
                return Err(Error::Script("answer script exhausted".into()));
            }
            if self.emitted_in_answer == a.len {
                return Ok(self.sentinels.eos);
            }
        }
        Ok(self.filler())
    }
}
