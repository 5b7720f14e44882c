//! Dual-representation KV store. Every appended row keeps two key copies:
//! `k_no_pos` (no position encoding, the durable ground truth) and a
//! materialized copy whose rotations can be rebuilt for any contiguous
//! renumbering after rows are evicted. Values carry no position information
//! and are stored once.
//!
//! Rows are grouped into segments: one Anchor (prompt plus first thought),
//! reconstruction Cycle segments, and one Answer. Segments tile the row space
//! contiguously; eviction is physical row removal.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rope;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Anchor,
    Cycle,
    Answer,
}

impl SegmentKind {
    pub fn tag(&self) -> &'static str {
        match self {
            SegmentKind::Anchor => "anchor",
            SegmentKind::Cycle => "cycle",
            SegmentKind::Answer => "answer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    /// 1-based cycle number for Cycle segments, 0 otherwise.
    pub cycle_index: usize,
    /// Row count. For a Cycle this equals its generated token count: the
    /// trigger row stands in for the think_end the trigger replaced.
    pub token_len: usize,
    pub creation_order: usize,
    /// First row index. Segments tile the cache: offset = previous offset +
    /// previous token_len.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy)]
struct PendingSegment {
    kind: SegmentKind,
    cycle_index: usize,
    start: usize,
}

/// Sizing rule for a bounded run: one anchor, up to `retained_cycle_max` kept
/// cycles, plus the segment currently being decoded, each at most
/// `segment_cap` rows.
#[derive(Debug, Clone, Copy)]
pub struct CacheBound {
    pub segment_cap: usize,
    pub retained_cycle_max: usize,
}

impl CacheBound {
    pub fn new(segment_cap: usize, retained_cycle_max: usize) -> Result<Self> {
        if segment_cap == 0 {
            return Err(Error::InvalidConfig("segment_cap must be positive".into()));
        }
        if retained_cycle_max == 0 {
            return Err(Error::InvalidConfig("retained_cycle_max must be positive".into()));
        }
        Ok(CacheBound { segment_cap, retained_cycle_max })
    }

    pub fn max_rows(&self) -> usize {
        (self.retained_cycle_max + 2) * self.segment_cap
    }

    /// Hard configuration-time check: the bounded cache must fit strictly
    /// inside the position space.
    pub fn check_config(&self, max_context_length: usize) -> Result<()> {
        let need = self.max_rows();
        if need >= max_context_length {
            return Err(Error::BoundViolation(format!(
                "({} + 2) * {} = {} rows does not fit strictly under max context length {}",
                self.retained_cycle_max, self.segment_cap, need, max_context_length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinRuleDecision {
    KeptOld,
    ReplacedWithNew,
}

#[derive(Debug, Clone, Copy)]
pub struct EvictedSegment {
    pub cycle_index: usize,
    pub offset: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MinRuleOutcome {
    pub decision: MinRuleDecision,
    /// Length of the cycle that just completed.
    pub new_len: usize,
    /// Length of the retained cycle it was compared against, if any.
    pub old_len: Option<usize>,
    /// None while the retained set is still filling up.
    pub evicted: Option<EvictedSegment>,
    /// Shortest retained cycle after the decision (oldest on ties).
    pub kept_cycle_index: usize,
    pub kept_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryStats {
    pub rows: usize,
    pub k_no_pos_bytes: usize,
    pub k_materialized_bytes: usize,
    pub v_bytes: usize,
}

impl MemoryStats {
    pub fn key_to_value_ratio(&self) -> f64 {
        (self.k_no_pos_bytes + self.k_materialized_bytes) as f64 / self.v_bytes as f64
    }
}

struct LayerSlab {
    k_no_pos: Vec<f32>,
    v: Vec<f32>,
    k_mat: Option<Vec<f32>>,
}

pub struct DualKvCache {
    d_model: usize,
    n_heads: usize,
    theta: f32,
    max_context: usize,
    checked: bool,
    /// When set, rebuilds reuse each row's last applied position instead of
    /// its contiguous index. This is the injectable "skipped re-encoding"
    /// fault the validator's negative control relies on; never enable it in
    /// a real run.
    stale_position_fault: bool,
    layers: Vec<LayerSlab>,
    token_ids: Vec<u32>,
    /// Position whose rotation each materialized row currently carries.
    applied_positions: Vec<usize>,
    segments: Vec<Segment>,
    pending: Option<PendingSegment>,
    next_creation_order: usize,
    max_position_applied: usize,
    /// True while every surviving row was generated attending to exactly the
    /// rows that now precede it. Evicting anywhere but the tail clears it.
    history_contiguous: bool,
}

impl DualKvCache {
    pub fn new(config: &ModelConfig, checked: bool) -> Self {
        let layers = (0..config.n_layers)
            .map(|_| LayerSlab { k_no_pos: Vec::new(), v: Vec::new(), k_mat: Some(Vec::new()) })
            .collect();
        DualKvCache {
            d_model: config.d_model,
            n_heads: config.n_heads,
            theta: config.rope_theta,
            max_context: config.max_context_length,
            checked,
            stale_position_fault: false,
            layers,
            token_ids: Vec::new(),
            applied_positions: Vec::new(),
            segments: Vec::new(),
            pending: None,
            next_creation_order: 0,
            max_position_applied: 0,
            history_contiguous: true,
        }
    }

    pub fn set_stale_position_fault(&mut self, on: bool) {
        self.stale_position_fault = on;
    }

    pub fn rows(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_materialized(&self) -> bool {
        self.layers.iter().all(|l| l.k_mat.is_some())
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn history_contiguous(&self) -> bool {
        self.history_contiguous
    }

    pub fn max_position_applied(&self) -> usize {
        self.max_position_applied
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Reserve the next row. Returns the position id the row's key must be
    /// rotated at (the current materialized length). Every row belongs to a
    /// segment, so a segment must be open.
    pub fn register_row(&mut self, token_id: u32) -> Result<usize> {
        if self.pending.is_none() {
            return Err(Error::Segment("no open segment to receive a row".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.k_no_pos.len() != self.token_ids.len() * self.d_model {
                return Err(Error::CacheInconsistency(format!(
                    "layer {} missed an update for the previous row",
                    i
                )));
            }
        }
        let position = self.token_ids.len();
        if position >= self.max_context {
            return Err(Error::PositionOverflow { position, max_context: self.max_context });
        }
        self.token_ids.push(token_id);
        self.applied_positions.push(position);
        self.max_position_applied = self.max_position_applied.max(position);
        Ok(position)
    }

    /// Append one row's key/value for a layer and hand back the full
    /// materialized keys and values for attention.
    pub fn update(
        &mut self,
        layer_id: usize,
        k_rot: &[f32],
        k_no_pos: &[f32],
        v: &[f32],
    ) -> Result<(&[f32], &[f32])> {
        let d = self.d_model;
        if k_rot.len() != d || k_no_pos.len() != d || v.len() != d {
            return Err(Error::LengthMismatch(format!(
                "row vectors must have length {}, got {}/{}/{}",
                d,
                k_rot.len(),
                k_no_pos.len(),
                v.len()
            )));
        }
        if layer_id >= self.layers.len() {
            return Err(Error::CacheInconsistency(format!("layer {} out of range", layer_id)));
        }
        let row = self.layers[layer_id].k_no_pos.len() / d;
        if row + 1 != self.token_ids.len() {
            return Err(Error::CacheInconsistency(format!(
                "layer {} update out of step: cache has {} registered rows but layer holds {}",
                layer_id,
                self.token_ids.len(),
                row
            )));
        }
        if self.layers[layer_id].k_mat.is_none() {
            return Err(Error::CacheInconsistency(
                "decode step against a discarded materialized copy; materialize first".into(),
            ));
        }
        if self.checked {
            let expect = self.rotate_row(k_no_pos, self.applied_positions[row])?;
            let drift = k_rot
                .iter()
                .zip(&expect)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            if drift > 1e-6 {
                return Err(Error::CacheInconsistency(format!(
                    "rotated key disagrees with rotation of the stored key by {}",
                    drift
                )));
            }
        }
        let slab = &mut self.layers[layer_id];
        slab.k_no_pos.extend_from_slice(k_no_pos);
        slab.v.extend_from_slice(v);
        slab.k_mat.as_mut().unwrap().extend_from_slice(k_rot);
        let slab = &self.layers[layer_id];
        Ok((slab.k_mat.as_ref().unwrap().as_slice(), slab.v.as_slice()))
    }

    fn rotate_row(&self, k_no_pos: &[f32], position: usize) -> Result<Vec<f32>> {
        rotate_heads(k_no_pos, position, self.theta, self.n_heads)
    }

    /// Rebuild the materialized keys for every row: contiguous positions
    /// 0..rows-1 normally, each row's stale position under the injected
    /// fault. Idempotent.
    pub fn materialize_all(&mut self) -> Result<()> {
        let rows = self.rows();
        let d = self.d_model;
        let positions: Vec<usize> = if self.stale_position_fault {
            self.applied_positions.clone()
        } else {
            (0..rows).collect()
        };
        for p in &positions {
            if *p >= self.max_context {
                return Err(Error::PositionOverflow { position: *p, max_context: self.max_context });
            }
        }
        for li in 0..self.layers.len() {
            let mut mat = Vec::with_capacity(rows * d);
            for r in 0..rows {
                let k_no = self.layers[li].k_no_pos[r * d..(r + 1) * d].to_vec();
                let rotated = self.rotate_row(&k_no, positions[r])?;
                mat.extend_from_slice(&rotated);
            }
            self.layers[li].k_mat = Some(mat);
        }
        self.applied_positions = positions;
        if let Some(m) = self.applied_positions.iter().max() {
            self.max_position_applied = self.max_position_applied.max(*m);
        }
        Ok(())
    }

    /// Drop the rotated key copies, keeping (k_no_pos, v). No-op when already
    /// discarded or never materialized.
    pub fn discard_materialized(&mut self) {
        for l in &mut self.layers {
            l.k_mat = None;
        }
    }

    pub fn begin_segment(&mut self, kind: SegmentKind, cycle_index: usize) -> Result<()> {
        if let Some(p) = self.pending {
            return Err(Error::Segment(format!(
                "segment already open ({} starting at row {})",
                p.kind.tag(),
                p.start
            )));
        }
        match kind {
            SegmentKind::Anchor => {
                if !self.segments.is_empty() || self.rows() != 0 {
                    return Err(Error::Segment("anchor must be the first segment".into()));
                }
            }
            SegmentKind::Cycle | SegmentKind::Answer => {
                if self.segments.is_empty() {
                    return Err(Error::Segment("anchor segment must exist first".into()));
                }
            }
        }
        if kind == SegmentKind::Cycle && cycle_index == 0 {
            return Err(Error::Segment("cycle segments take a 1-based index".into()));
        }
        self.pending = Some(PendingSegment { kind, cycle_index, start: self.rows() });
        Ok(())
    }

    pub fn commit_segment(&mut self, token_len: usize) -> Result<Segment> {
        let pending = self
            .pending
            .ok_or_else(|| Error::Segment("no open segment to commit".into()))?;
        let appended = self.rows() - pending.start;
        if token_len != appended {
            return Err(Error::Segment(format!(
                "commit length {} does not match appended row count {}",
                token_len, appended
            )));
        }
        if token_len == 0 {
            return Err(Error::Segment("cannot commit an empty segment".into()));
        }
        let seg = Segment {
            kind: pending.kind,
            cycle_index: pending.cycle_index,
            token_len,
            creation_order: self.next_creation_order,
            offset: pending.start,
        };
        self.next_creation_order += 1;
        self.segments.push(seg);
        self.pending = None;
        Ok(seg)
    }

    /// Throw away an in-progress segment's rows (runaway rollback). Returns
    /// the number of rows removed.
    pub fn abort_segment(&mut self) -> Result<usize> {
        let pending = self
            .pending
            .ok_or_else(|| Error::Segment("no open segment to abort".into()))?;
        let rows = self.rows() - pending.start;
        self.remove_rows(pending.start, rows);
        self.pending = None;
        Ok(rows)
    }

    fn remove_rows(&mut self, offset: usize, rows: usize) {
        if rows == 0 {
            return;
        }
        let tail = offset + rows == self.rows();
        let d = self.d_model;
        for l in &mut self.layers {
            l.k_no_pos.drain(offset * d..(offset + rows) * d);
            l.v.drain(offset * d..(offset + rows) * d);
            // whatever rotations remain are unusable until the next rebuild
            l.k_mat = None;
        }
        self.token_ids.drain(offset..offset + rows);
        self.applied_positions.drain(offset..offset + rows);
        for s in &mut self.segments {
            if s.offset > offset {
                s.offset -= rows;
            }
        }
        if !tail {
            self.history_contiguous = false;
        }
    }

    fn segment_position(&self, creation_order: usize) -> Option<usize> {
        self.segments.iter().position(|s| s.creation_order == creation_order)
    }

    /// Committed cycles other than `exclude`, oldest first.
    fn retained_cycles(&self, exclude: usize) -> Vec<Segment> {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Cycle && s.creation_order != exclude)
            .cloned()
            .collect()
    }

    /// The retention decision for a just-committed cycle. With a full
    /// retained set, the longest retained cycle (newest on ties) is compared
    /// against the new one; the strictly shorter side survives and ties keep
    /// the old. Evicted rows are physically removed and the materialized
    /// copy is dropped for the caller to rebuild.
    pub fn apply_min_rule(
        &mut self,
        new_cycle_order: usize,
        retained_cycle_max: usize,
    ) -> Result<MinRuleOutcome> {
        if self.pending.is_some() {
            return Err(Error::Segment("close the open segment before applying the min rule".into()));
        }
        let new_pos = self
            .segment_position(new_cycle_order)
            .ok_or_else(|| Error::Segment(format!("no committed segment {}", new_cycle_order)))?;
        let new_seg = self.segments[new_pos];
        if new_seg.kind != SegmentKind::Cycle {
            return Err(Error::Segment("the min rule applies to cycle segments".into()));
        }
        let retained = self.retained_cycles(new_cycle_order);
        if retained.len() < retained_cycle_max {
            let (kept_cycle_index, kept_len) = self.shortest_retained();
            return Ok(MinRuleOutcome {
                decision: MinRuleDecision::ReplacedWithNew,
                new_len: new_seg.token_len,
                old_len: None,
                evicted: None,
                kept_cycle_index,
                kept_len,
            });
        }
        // longest retained cycle; among equals the newest goes first
        let victim = *retained
            .iter()
            .max_by(|a, b| {
                a.token_len
                    .cmp(&b.token_len)
                    .then(a.creation_order.cmp(&b.creation_order))
            })
            .unwrap();
        let outcome = if victim.token_len <= new_seg.token_len {
            // old stays (ties keep the old), the new cycle goes
            let evicted = self.evict_segment_at(new_pos);
            MinRuleOutcome {
                decision: MinRuleDecision::KeptOld,
                new_len: new_seg.token_len,
                old_len: Some(victim.token_len),
                evicted: Some(evicted),
                kept_cycle_index: 0,
                kept_len: 0,
            }
        } else {
            let victim_pos = self.segment_position(victim.creation_order).unwrap();
            let evicted = self.evict_segment_at(victim_pos);
            MinRuleOutcome {
                decision: MinRuleDecision::ReplacedWithNew,
                new_len: new_seg.token_len,
                old_len: Some(victim.token_len),
                evicted: Some(evicted),
                kept_cycle_index: 0,
                kept_len: 0,
            }
        };
        let (kept_cycle_index, kept_len) = self.shortest_retained();
        Ok(MinRuleOutcome { kept_cycle_index, kept_len, ..outcome })
    }

    /// Shortest committed cycle, oldest on ties: (cycle_index, token_len).
    fn shortest_retained(&self) -> (usize, usize) {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Cycle)
            .min_by(|a, b| {
                a.token_len
                    .cmp(&b.token_len)
                    .then(a.creation_order.cmp(&b.creation_order))
            })
            .map(|s| (s.cycle_index, s.token_len))
            .unwrap_or((0, 0))
    }

    fn evict_segment_at(&mut self, pos: usize) -> EvictedSegment {
        let seg = self.segments.remove(pos);
        self.remove_rows(seg.offset, seg.token_len);
        EvictedSegment {
            cycle_index: seg.cycle_index,
            offset: seg.offset,
            rows: seg.token_len,
        }
    }

    /// Explicitly remove a committed cycle. The anchor and the answer are
    /// never evictable.
    pub fn drop_segment(&mut self, creation_order: usize) -> Result<EvictedSegment> {
        let pos = self
            .segment_position(creation_order)
            .ok_or_else(|| Error::Segment(format!("no committed segment {}", creation_order)))?;
        match self.segments[pos].kind {
            SegmentKind::Anchor => {
                return Err(Error::Segment("the anchor segment is not removable".into()))
            }
            SegmentKind::Answer => {
                return Err(Error::Segment("the answer segment is not removable".into()))
            }
            SegmentKind::Cycle => {}
        }
        Ok(self.evict_segment_at(pos))
    }

    /// Assert the sizing rule: every segment (the open one included) within
    /// the per-segment cap, and the whole cache within `allowed_total` rows.
    pub fn check_rows(&self, bound: &CacheBound, allowed_total: usize) -> Result<()> {
        for s in &self.segments {
            if s.token_len > bound.segment_cap {
                return Err(Error::BoundViolation(format!(
                    "{} segment holds {} rows, cap is {}",
                    s.kind.tag(),
                    s.token_len,
                    bound.segment_cap
                )));
            }
        }
        if let Some(p) = self.pending {
            let partial = self.rows() - p.start;
            if partial > bound.segment_cap {
                return Err(Error::BoundViolation(format!(
                    "open {} segment holds {} rows, cap is {}",
                    p.kind.tag(),
                    partial,
                    bound.segment_cap
                )));
            }
        }
        if self.rows() > allowed_total {
            return Err(Error::BoundViolation(format!(
                "cache holds {} rows, allowed {}",
                self.rows(),
                allowed_total
            )));
        }
        Ok(())
    }

    pub fn check_bound(&self, bound: &CacheBound) -> Result<()> {
        self.check_rows(bound, bound.max_rows())
    }

    pub fn memory_stats(&self) -> MemoryStats {
        let f = std::mem::size_of::<f32>();
        let mut k_no_pos = 0;
        let mut k_mat = 0;
        let mut v = 0;
        for l in &self.layers {
            k_no_pos += l.k_no_pos.len() * f;
            v += l.v.len() * f;
            k_mat += l.k_mat.as_ref().map_or(0, |m| m.len() * f);
        }
        MemoryStats {
            rows: self.rows(),
            k_no_pos_bytes: k_no_pos,
            k_materialized_bytes: k_mat,
            v_bytes: v,
        }
    }

    /// Compact one-line structural dump, e.g. `anchor:12@0,cycle:2:5@12`.
    pub fn state_summary(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        for s in &self.segments {
            let name = match s.kind {
                SegmentKind::Cycle => format!("cycle:{}", s.cycle_index),
                k => k.tag().to_string(),
            };
            parts.push(format!("{}:{}@{}", name, s.token_len, s.offset));
        }
        if let Some(p) = self.pending {
            let name = match p.kind {
                SegmentKind::Cycle => format!("cycle:{}", p.cycle_index),
                k => k.tag().to_string(),
            };
            parts.push(format!("{}*:{}@{}", name, self.rows() - p.start, p.start));
        }
        parts.join(",")
    }

    /// Per-layer materialized keys and values, for attention outside the
    /// update path.
    pub fn layer_views(&self, layer_id: usize) -> Result<(&[f32], &[f32])> {
        let l = self
            .layers
            .get(layer_id)
            .ok_or_else(|| Error::CacheInconsistency(format!("layer {} out of range", layer_id)))?;
        let mat = l.k_mat.as_ref().ok_or_else(|| {
            Error::CacheInconsistency("materialized keys absent; materialize first".into())
        })?;
        Ok((mat.as_slice(), l.v.as_slice()))
    }

    /// Stored position-free keys for a layer (oracle and test access).
    pub fn k_no_pos(&self, layer_id: usize) -> &[f32] {
        &self.layers[layer_id].k_no_pos
    }
}

/// Rotate a full row one head at a time, matching the per-head rotation the
/// attention path applies.
pub fn rotate_heads(row: &[f32], position: usize, theta: f32, n_heads: usize) -> Result<Vec<f32>> {
    let d_head = row.len() / n_heads;
    let mut out = Vec::with_capacity(row.len());
    for h in 0..n_heads {
        let head = &row[h * d_head..(h + 1) * d_head];
        out.extend(rope::apply_rope(head, position, theta)?);
    }
    Ok(out)
}
