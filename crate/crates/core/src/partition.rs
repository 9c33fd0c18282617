//! Good partitions of the non-canonical set `J` and the canonical set `K`.
//!
//! A good partition splits the target set into groups of five admissible
//! shapes. Every shape except [`Shape::NegativeSingleton`] and
//! [`Shape::LTriple`] has factor product at most 1; those two ("heavy")
//! shapes have product at most 2. A partition of `K` must contain exactly
//! `min(alpha + 1, beta)` heavy groups, and a partition of `J` none.
//!
//! [`build_eta`] runs the inductive case ladder over the negative pairs of
//! `K` in `≺` order. [`search_partition`] is an exhaustive backtracking
//! search over every admissible grouping and serves as the independent
//! oracle and as the fallback when the ladder finds no applicable operation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signs::{classify_pairs, heavy_target, stability_table, PairIndex, Sign, SignVector};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    PositiveSingleton,
    MixedPair,
    RectangleQuad,
    NegativeSingleton,
    LTriple,
}

impl Shape {
    pub fn size(self) -> usize {
        match self {
            Shape::PositiveSingleton | Shape::NegativeSingleton => 1,
            Shape::MixedPair => 2,
            Shape::LTriple => 3,
            Shape::RectangleQuad => 4,
        }
    }

    pub fn is_heavy(self) -> bool {
        matches!(self, Shape::NegativeSingleton | Shape::LTriple)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    J,
    K,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::J => "J",
            Target::K => "K",
        }
    }

    fn contains(self, sigma: &SignVector, p: PairIndex) -> bool {
        sigma.canonical_unchecked(p.i, p.j) == (self == Target::K)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One block of a good partition.
///
/// Constructors fix the member order: positives before negatives for pairs,
/// `[(i,j)+, (i-l,j)-, (i,j+l')-, (i-l,j+l')+]` for rectangles and
/// `[(i,j)+, (i+l,j)-, (i,j-l')-]` for L-triples. [`PartitionGroup::shape_violation`]
/// does not depend on that order.
///
/// L-triples are admissible only when `i + l <= j - l' + 1`, i.e. the blocks
/// of the two negative pairs meet or overlap.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionGroup {
    pub shape: Shape,
    pub members: Vec<PairIndex>,
}

impl PartitionGroup {
    pub fn positive(p: PairIndex) -> Self {
        PartitionGroup {
            shape: Shape::PositiveSingleton,
            members: vec![p],
        }
    }

    pub fn negative(p: PairIndex) -> Self {
        PartitionGroup {
            shape: Shape::NegativeSingleton,
            members: vec![p],
        }
    }

    pub fn mixed(pos: PairIndex, neg: PairIndex) -> Self {
        PartitionGroup {
            shape: Shape::MixedPair,
            members: vec![pos, neg],
        }
    }

    pub fn quad(
        lower_pos: PairIndex,
        lower_neg: PairIndex,
        upper_neg: PairIndex,
        upper_pos: PairIndex,
    ) -> Self {
        PartitionGroup {
            shape: Shape::RectangleQuad,
            members: vec![lower_pos, lower_neg, upper_neg, upper_pos],
        }
    }

    pub fn ltriple(pos: PairIndex, row_neg: PairIndex, col_neg: PairIndex) -> Self {
        PartitionGroup {
            shape: Shape::LTriple,
            members: vec![pos, row_neg, col_neg],
        }
    }

    pub fn is_heavy(&self) -> bool {
        self.shape.is_heavy()
    }

    /// First member under `≺`.
    pub fn anchor(&self) -> PairIndex {
        *self.members.iter().min().expect("groups are never empty")
    }

    /// Checks size, product signs and geometry against the shape's rule.
    /// Members must already be in range for `sigma`.
    pub fn shape_violation(&self, sigma: &SignVector) -> Option<String> {
        if self.members.len() != self.shape.size() {
            return Some(format!(
                "{:?} needs {} members, has {}",
                self.shape,
                self.shape.size(),
                self.members.len()
            ));
        }
        let sign = |p: PairIndex| sigma.sign_unchecked(p.i, p.j);
        let (pos, neg): (Vec<PairIndex>, Vec<PairIndex>) =
            self.members.iter().partition(|p| sign(**p) == Sign::Plus);
        let want = match self.shape {
            Shape::PositiveSingleton => (1, 0),
            Shape::NegativeSingleton => (0, 1),
            Shape::MixedPair => (1, 1),
            Shape::LTriple => (1, 2),
            Shape::RectangleQuad => (2, 2),
        };
        if (pos.len(), neg.len()) != want {
            return Some(format!(
                "{:?} needs {} positive and {} negative members, found {} and {}",
                self.shape,
                want.0,
                want.1,
                pos.len(),
                neg.len()
            ));
        }
        let ok = match self.shape {
            Shape::PositiveSingleton | Shape::NegativeSingleton => true,
            Shape::MixedPair => {
                let (p, q) = (pos[0], neg[0]);
                (q.i < p.i && q.j == p.j) || (q.i == p.i && p.j < q.j)
            }
            Shape::RectangleQuad => {
                // (i,j)+ has the larger start index of the two positives.
                let (a, b) = if pos[0].i > pos[1].i {
                    (pos[0], pos[1])
                } else {
                    (pos[1], pos[0])
                };
                let corners_ok = b.i < a.i && b.j > a.j;
                let expect: BTreeSet<PairIndex> =
                    [PairIndex::new(b.i, a.j), PairIndex::new(a.i, b.j)]
                        .into_iter()
                        .collect();
                let found: BTreeSet<PairIndex> = neg.iter().copied().collect();
                corners_ok && expect == found
            }
            Shape::LTriple => {
                let p = pos[0];
                let row = neg.iter().find(|q| q.j == p.j && q.i > p.i);
                let col = neg.iter().find(|q| q.i == p.i && q.j < p.j);
                // The row negative may not start past the column negative's
                // row plus one: with a gap between the two negative blocks
                // the product of the three factors approaches 4.
                matches!((row, col), (Some(r), Some(c)) if r.i <= c.j + 1)
            }
        };
        if ok {
            None
        } else {
            Some(format!(
                "{:?} members {:?} do not have the required geometry",
                self.shape, self.members
            ))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodPartition {
    pub target: Target,
    pub groups: Vec<PartitionGroup>,
    pub heavy_count: usize,
}

impl GoodPartition {
    /// Groups are sorted by their `≺`-first member.
    pub fn new(target: Target, mut groups: Vec<PartitionGroup>) -> Self {
        groups.sort_by_key(|g| g.anchor());
        let heavy_count = groups.iter().filter(|g| g.is_heavy()).count();
        GoodPartition {
            target,
            groups,
            heavy_count,
        }
    }
}

pub fn heavy_count(part: &GoodPartition) -> usize {
    part.groups.iter().filter(|g| g.is_heavy()).count()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending group index, if the rule concerns a single group.
    pub group: Option<usize>,
    pub rule: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

pub fn validate_partition(sigma: &SignVector, part: &GoodPartition) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |group: Option<usize>, rule: String| violations.push(Violation { group, rule });
    let mut seen: BTreeMap<PairIndex, usize> = BTreeMap::new();

    for (gi, g) in part.groups.iter().enumerate() {
        if let Some(p) = g.members.iter().find(|p| sigma.check_pair(**p).is_err()) {
            push(Some(gi), format!("member {p} out of range"));
            continue;
        }
        if part.target == Target::J && g.is_heavy() {
            push(
                Some(gi),
                format!("{:?} is not admissible in a partition of J", g.shape),
            );
        }
        if let Some(msg) = g.shape_violation(sigma) {
            push(Some(gi), msg);
        }
        for &p in &g.members {
            if !part.target.contains(sigma, p) {
                push(Some(gi), format!("member {p} is not in {}", part.target));
            }
            if let Some(prev) = seen.insert(p, gi) {
                push(Some(gi), format!("member {p} already used by group {prev}"));
            }
        }
    }

    for p in sigma.pairs().filter(|p| part.target.contains(sigma, *p)) {
        if !seen.contains_key(&p) {
            push(None, format!("pair {p} of {} is not covered", part.target));
        }
    }

    let actual = heavy_count(part);
    if actual != part.heavy_count {
        push(
            None,
            format!(
                "recorded heavy_count {} but {} heavy groups present",
                part.heavy_count, actual
            ),
        );
    }
    if part.target == Target::K {
        let want = heavy_target(sigma);
        if actual != want {
            push(
                None,
                format!("heavy_count {actual} differs from min(alpha+1, beta) = {want}"),
            );
        }
    }

    ValidationReport {
        ok: violations.is_empty(),
        violations,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub negative: PairIndex,
    pub case: u8,
    pub operation: u8,
    pub consumed: Vec<PartitionGroup>,
    pub produced: PartitionGroup,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructionTrace {
    pub steps: Vec<TraceStep>,
    pub op3_uses: usize,
}

#[inline]
fn tri(p: PairIndex) -> usize {
    p.j * (p.j - 1) / 2 + p.i - 1
}

fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Mutable partition under construction: a slot per group and, per pair,
/// the slot that currently holds it.
struct Workspace<'a> {
    sigma: &'a SignVector,
    target: Target,
    owner: Vec<Option<usize>>,
    slots: Vec<Option<PartitionGroup>>,
}

impl<'a> Workspace<'a> {
    /// Starts from every positive pair of the target set as a singleton.
    fn new(sigma: &'a SignVector, target: Target) -> Self {
        let mut ws = Workspace {
            sigma,
            target,
            owner: vec![None; tri_len(sigma.len())],
            slots: Vec::new(),
        };
        for p in sigma.pairs() {
            if ws.in_target(p) && ws.sign(p) == Sign::Plus {
                ws.insert(PartitionGroup::positive(p));
            }
        }
        ws
    }

    fn sign(&self, p: PairIndex) -> Sign {
        self.sigma.sign_unchecked(p.i, p.j)
    }

    fn in_target(&self, p: PairIndex) -> bool {
        self.target.contains(self.sigma, p)
    }

    fn is_target_positive(&self, p: PairIndex) -> bool {
        self.in_target(p) && self.sign(p) == Sign::Plus
    }

    fn group_of(&self, p: PairIndex) -> Option<&PartitionGroup> {
        self.owner[tri(p)].and_then(|s| self.slots[s].as_ref())
    }

    fn shape_of(&self, p: PairIndex) -> Option<Shape> {
        self.group_of(p).map(|g| g.shape)
    }

    fn insert(&mut self, g: PartitionGroup) {
        let slot = self.slots.len();
        for &p in &g.members {
            self.owner[tri(p)] = Some(slot);
        }
        self.slots.push(Some(g));
    }

    /// Removes the groups holding `holders` and inserts `produced`.
    fn replace(&mut self, holders: &[PairIndex], produced: PartitionGroup) -> Vec<PartitionGroup> {
        let mut consumed = Vec::with_capacity(holders.len());
        for &h in holders {
            let slot = self.owner[tri(h)].expect("holder must be grouped");
            let g = self.slots[slot].take().expect("slot must be live");
            for &p in &g.members {
                self.owner[tri(p)] = None;
            }
            consumed.push(g);
        }
        self.insert(produced.clone());
        consumed
    }

    fn into_partition(self) -> GoodPartition {
        GoodPartition::new(self.target, self.slots.into_iter().flatten().collect())
    }

    /// Positive singleton in the same row to the right of `neg`, closest first.
    fn row_singleton(&self, neg: PairIndex) -> Option<PairIndex> {
        ((neg.i + 1)..=neg.j)
            .map(|i| PairIndex::new(i, neg.j))
            .find(|&p| {
                self.is_target_positive(p) && self.shape_of(p) == Some(Shape::PositiveSingleton)
            })
    }

    /// Operation 1 along the column or Operation 2, through the positive
    /// pair `(neg.i, l)` below `neg`. Returns the operation number applied.
    fn absorb_via_column(
        &mut self,
        neg: PairIndex,
        l: usize,
    ) -> Option<(u8, Vec<PartitionGroup>, PartitionGroup)> {
        if l < neg.i || l >= neg.j {
            return None;
        }
        let below = PairIndex::new(neg.i, l);
        if !self.is_target_positive(below) {
            return None;
        }
        let group = self.group_of(below)?.clone();
        match group.shape {
            Shape::PositiveSingleton => {
                let produced = PartitionGroup::mixed(below, neg);
                let consumed = self.replace(&[below], produced.clone());
                Some((1, consumed, produced))
            }
            Shape::MixedPair => {
                let partner = *group.members.iter().find(|p| **p != below)?;
                // Horizontal pair: its negative sits to the left in row l.
                if partner.j != l || partner.i >= neg.i {
                    return None;
                }
                let corner = PairIndex::new(partner.i, neg.j);
                if !self.is_target_positive(corner)
                    || self.shape_of(corner) != Some(Shape::PositiveSingleton)
                {
                    return None;
                }
                let produced = PartitionGroup::quad(below, partner, neg, corner);
                let consumed = self.replace(&[below, corner], produced.clone());
                Some((2, consumed, produced))
            }
            _ => None,
        }
    }

    /// Operation 4: `(i', i-1)` a negative singleton and `(i', j)` a positive
    /// singleton for some `i' < i`.
    fn absorb_via_ltriple(
        &mut self,
        neg: PairIndex,
    ) -> Option<(Vec<PartitionGroup>, PartitionGroup)> {
        if neg.i < 2 {
            return None;
        }
        let below_row = neg.i - 1;
        let start = (1..neg.i).find(|&ip| {
            let lower = PairIndex::new(ip, below_row);
            let upper = PairIndex::new(ip, neg.j);
            self.shape_of(lower) == Some(Shape::NegativeSingleton)
                && self.is_target_positive(upper)
                && self.shape_of(upper) == Some(Shape::PositiveSingleton)
        })?;
        let lower = PairIndex::new(start, below_row);
        let upper = PairIndex::new(start, neg.j);
        let produced = PartitionGroup::ltriple(upper, neg, lower);
        let consumed = self.replace(&[lower, upper], produced.clone());
        Some((consumed, produced))
    }
}

/// Runs the case ladder on the negative pairs of `K`.
///
/// Negative pairs are handled row by row, right to left. A negative first
/// tries to pair with the nearest free positive singleton to its right
/// (Case 1). The negatives of a row for which that fails are handled by
/// level stability: on an unstable level the first becomes a negative
/// singleton (Case 2), the second is absorbed down its column (Case 3) and
/// later ones through the row used by Case 3 (Case 4); on a stable level the
/// first joins an L-triple with the negative singleton of row `i - 1`
/// (Case 5) and later ones are absorbed through that row (Case 6).
///
/// The result is validated; any failure is reported as
/// [`Error::LadderStuck`].
pub fn build_eta(sigma: &SignVector) -> Result<(GoodPartition, ConstructionTrace)> {
    let stable = stability_table(sigma);
    let mut ws = Workspace::new(sigma, Target::K);
    let mut trace = ConstructionTrace::default();
    let stuck = |at: PairIndex| Error::LadderStuck {
        sigma: sigma.clone(),
        at,
    };

    for j in 1..=sigma.len() {
        // Row used by Case 3 (resp. Case 5) for this row's later negatives.
        let mut link_row: Option<usize> = None;
        let mut unmatched = 0usize;
        for i in (1..=j).rev() {
            let neg = PairIndex::new(i, j);
            if !ws.in_target(neg) || ws.sign(neg) != Sign::Minus {
                continue;
            }
            let (case, operation, consumed, produced) = if let Some(pos) = ws.row_singleton(neg) {
                let produced = PartitionGroup::mixed(pos, neg);
                let consumed = ws.replace(&[pos], produced.clone());
                (1, 1, consumed, produced)
            } else {
                unmatched += 1;
                match (stable[j], unmatched) {
                    (false, 1) => {
                        let produced = PartitionGroup::negative(neg);
                        ws.insert(produced.clone());
                        trace.op3_uses += 1;
                        (2, 3, Vec::new(), produced)
                    }
                    (false, 2) => {
                        let (op, consumed, produced) = (i..j)
                            .rev()
                            .find_map(|l| ws.absorb_via_column(neg, l).map(|r| (l, r)))
                            .map(|(l, r)| {
                                link_row = Some(l);
                                r
                            })
                            .ok_or_else(|| stuck(neg))?;
                        (3, op, consumed, produced)
                    }
                    (false, _) => {
                        let l = link_row.ok_or_else(|| stuck(neg))?;
                        let (op, consumed, produced) =
                            ws.absorb_via_column(neg, l).ok_or_else(|| stuck(neg))?;
                        (4, op, consumed, produced)
                    }
                    (true, 1) => {
                        let (consumed, produced) =
                            ws.absorb_via_ltriple(neg).ok_or_else(|| stuck(neg))?;
                        link_row = Some(i - 1);
                        (5, 4, consumed, produced)
                    }
                    (true, _) => {
                        let l = link_row.ok_or_else(|| stuck(neg))?;
                        let (op, consumed, produced) =
                            ws.absorb_via_column(neg, l).ok_or_else(|| stuck(neg))?;
                        (6, op, consumed, produced)
                    }
                }
            };
            trace.steps.push(TraceStep {
                negative: neg,
                case,
                operation,
                consumed,
                produced,
            });
        }
    }

    let part = ws.into_partition();
    let report = validate_partition(sigma, &part);
    if !report.ok {
        let at = trace
            .steps
            .last()
            .map(|s| s.negative)
            .unwrap_or(PairIndex::new(0, 0));
        return Err(stuck(at));
    }
    Ok((part, trace))
}

/// Outcome of [`build_eta_with_fallback`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EtaOutcome {
    pub partition: GoodPartition,
    /// Present when the ladder succeeded.
    pub trace: Option<ConstructionTrace>,
    pub ladder: bool,
}

/// Case ladder, falling back to [`search_partition`] with budget
/// `min(alpha + 1, beta)` when the ladder gets stuck.
pub fn build_eta_with_fallback(sigma: &SignVector) -> Result<EtaOutcome> {
    match build_eta(sigma) {
        Ok((partition, trace)) => Ok(EtaOutcome {
            partition,
            trace: Some(trace),
            ladder: true,
        }),
        Err(Error::LadderStuck { .. }) => {
            let partition =
                search_partition(sigma, Target::K, heavy_target(sigma)).ok_or_else(|| {
                    Error::SearchExhausted {
                        sigma: sigma.clone(),
                        target: Target::K.name(),
                    }
                })?;
            Ok(EtaOutcome {
                partition,
                trace: None,
                ladder: false,
            })
        }
        Err(e) => Err(e),
    }
}

/// Greedy partition of `J`, delegating to [`search_partition`] when the
/// greedy pass cannot place a negative pair.
pub fn build_pi(sigma: &SignVector) -> Result<GoodPartition> {
    if let Some(part) = greedy_pi(sigma) {
        return Ok(part);
    }
    search_partition(sigma, Target::J, 0).ok_or_else(|| Error::SearchExhausted {
        sigma: sigma.clone(),
        target: Target::J.name(),
    })
}

/// The greedy pass alone; `None` when it cannot place some negative pair.
pub fn greedy_pi(sigma: &SignVector) -> Option<GoodPartition> {
    let mut ws = Workspace::new(sigma, Target::J);
    for neg in sigma.pairs() {
        if !ws.in_target(neg) || ws.sign(neg) != Sign::Minus {
            continue;
        }
        if let Some(pos) = ws.row_singleton(neg) {
            ws.replace(&[pos], PartitionGroup::mixed(pos, neg));
            continue;
        }
        let below = (neg.i..neg.j)
            .rev()
            .map(|l| PairIndex::new(neg.i, l))
            .find(|&p| {
                ws.is_target_positive(p) && ws.shape_of(p) == Some(Shape::PositiveSingleton)
            });
        if let Some(pos) = below {
            ws.replace(&[pos], PartitionGroup::mixed(pos, neg));
            continue;
        }
        (neg.i..neg.j)
            .rev()
            .find_map(|l| ws.absorb_via_column(neg, l))?;
    }
    let part = ws.into_partition();
    validate_partition(sigma, &part).ok.then_some(part)
}

/// Exhaustive backtracking over every admissible grouping of `target`.
///
/// The `≺`-first uncovered negative pair is placed in turn into a mixed
/// pair, a rectangle, an L-triple (with both partners above it) or a
/// negative singleton, in that order; the last two only for `K` and while
/// heavy groups remain in `heavy_budget`. Leftover positives become
/// singletons. Returns the first partition whose heavy count is exactly
/// `heavy_budget`, or `None` if none exists.
pub fn search_partition(
    sigma: &SignVector,
    target: Target,
    heavy_budget: usize,
) -> Option<GoodPartition> {
    let (j_set, k_set) = classify_pairs(sigma);
    let members = if target == Target::K { k_set } else { j_set };
    let negatives: Vec<PairIndex> = members
        .iter()
        .filter(|p| p.product_sign == Sign::Minus)
        .map(|p| p.pair)
        .collect();
    let mut search = Search {
        sigma,
        target,
        budget: if target == Target::J { 0 } else { heavy_budget },
        covered: vec![0u64; tri_len(sigma.len()).div_ceil(64).max(1)],
        negatives,
        chosen: Vec::new(),
        failed: HashSet::new(),
    };
    if !search.run(0, 0) {
        return None;
    }
    let mut groups = std::mem::take(&mut search.chosen);
    for info in &members {
        if info.product_sign == Sign::Plus && !search.is_covered(info.pair) {
            groups.push(PartitionGroup::positive(info.pair));
        }
    }
    Some(GoodPartition::new(target, groups))
}

struct Search<'a> {
    sigma: &'a SignVector,
    target: Target,
    budget: usize,
    covered: Vec<u64>,
    negatives: Vec<PairIndex>,
    chosen: Vec<PartitionGroup>,
    failed: HashSet<(Vec<u64>, usize)>,
}

impl Search<'_> {
    fn is_covered(&self, p: PairIndex) -> bool {
        let t = tri(p);
        self.covered[t / 64] >> (t % 64) & 1 == 1
    }

    fn toggle(&mut self, g: &PartitionGroup) {
        for p in &g.members {
            let t = tri(*p);
            self.covered[t / 64] ^= 1 << (t % 64);
        }
    }

    fn free(&self, p: PairIndex, sign: Sign) -> bool {
        p.i >= 1
            && p.i <= p.j
            && p.j <= self.sigma.len()
            && self.target.contains(self.sigma, p)
            && self.sigma.sign_unchecked(p.i, p.j) == sign
            && !self.is_covered(p)
    }

    /// Every admissible group containing `neg` whose other members are free
    /// and come after `neg` (all earlier negatives are already covered).
    fn options(&self, neg: PairIndex, heavy_left: bool) -> Vec<PartitionGroup> {
        let n = self.sigma.len();
        let (a, b) = (neg.i, neg.j);
        let mut out = Vec::new();
        // Mixed pairs: positive to the right in the row, or below in the column.
        for i in (a + 1)..=b {
            let p = PairIndex::new(i, b);
            if self.free(p, Sign::Plus) {
                out.push(PartitionGroup::mixed(p, neg));
            }
        }
        for j in (a..b).rev() {
            let p = PairIndex::new(a, j);
            if self.free(p, Sign::Plus) {
                out.push(PartitionGroup::mixed(p, neg));
            }
        }
        // Rectangles with `neg` as the lower-left negative corner.
        for i in (a + 1)..=b {
            let lower_pos = PairIndex::new(i, b);
            if !self.free(lower_pos, Sign::Plus) {
                continue;
            }
            for top in (b + 1)..=n {
                let upper_neg = PairIndex::new(i, top);
                let upper_pos = PairIndex::new(a, top);
                if self.free(upper_neg, Sign::Minus) && self.free(upper_pos, Sign::Plus) {
                    out.push(PartitionGroup::quad(lower_pos, neg, upper_neg, upper_pos));
                }
            }
        }
        if self.target == Target::K && heavy_left {
            // L-triples with `neg` as the column negative.
            for top in (b + 1)..=n {
                let pos = PairIndex::new(a, top);
                if !self.free(pos, Sign::Plus) {
                    continue;
                }
                for i in (a + 1)..=(b + 1) {
                    let row_neg = PairIndex::new(i, top);
                    if self.free(row_neg, Sign::Minus) {
                        out.push(PartitionGroup::ltriple(pos, row_neg, neg));
                    }
                }
            }
            out.push(PartitionGroup::negative(neg));
        }
        out
    }

    fn run(&mut self, from: usize, heavy: usize) -> bool {
        let Some(offset) = self.negatives[from..]
            .iter()
            .position(|p| !self.is_covered(*p))
        else {
            return heavy == self.budget;
        };
        let idx = from + offset;
        let remaining = self.negatives[idx..]
            .iter()
            .filter(|p| !self.is_covered(**p))
            .count();
        if heavy + remaining < self.budget {
            return false;
        }
        let key = (self.covered.clone(), heavy);
        if self.failed.contains(&key) {
            return false;
        }
        let neg = self.negatives[idx];
        for g in self.options(neg, heavy < self.budget) {
            let h = heavy + usize::from(g.is_heavy());
            self.toggle(&g);
            self.chosen.push(g);
            if self.run(idx + 1, h) {
                return true;
            }
            let g = self.chosen.pop().expect("pushed above");
            self.toggle(&g);
        }
        self.failed.insert(key);
        false
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantViolation {
    /// Trace step index, when the violation is tied to one step.
    pub step: Option<usize>,
    pub check: String,
    pub detail: String,
}

/// Negative and positive counts over the row tail `(i+1..=j, j)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailCounts {
    pub negatives: usize,
    pub positives: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailRecord {
    pub step: usize,
    pub case: u8,
    /// Counts over canonical pairs only.
    pub canonical: TailCounts,
    /// Counts over every pair of the tail.
    pub all_pairs: TailCounts,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub ok: bool,
    pub violations: Vec<InvariantViolation>,
    /// Tail counts wherever the all-pairs count missed the expected
    /// relation, with the canonical-only count alongside.
    pub tail_log: Vec<TailRecord>,
}

fn tail_counts(sigma: &SignVector, neg: PairIndex, canonical_only: bool) -> TailCounts {
    let mut c = TailCounts {
        negatives: 0,
        positives: 0,
    };
    for i in (neg.i + 1)..=neg.j {
        if canonical_only && !sigma.canonical_unchecked(i, neg.j) {
            continue;
        }
        if sigma.sign_unchecked(i, neg.j) == Sign::Plus {
            c.positives += 1;
        } else {
            c.negatives += 1;
        }
    }
    c
}

/// Runtime assertions over a ladder trace:
///
/// - `minimal_pairs`: the tail of a Case 2/5 negative is balanced, and the
///   tail of a Case 3 negative has exactly two more negatives than
///   positives, counting every pair of the tail (over `K` alone the
///   Case 3 gap is 1);
/// - `same_column`: no two Case 2/5 negatives share a column;
/// - `row_connectivity`: every row shares groups with at most one lower
///   and one higher row;
/// - `order`, `heavy_delta`, `shape`: steps follow `≺`, operations change
///   the heavy count by their fixed amount, and produced groups are well
///   formed.
pub fn check_construction_invariants(
    sigma: &SignVector,
    trace: &ConstructionTrace,
) -> InvariantReport {
    let mut violations = Vec::new();
    let mut tail_log = Vec::new();
    let mut fail = |step: Option<usize>, check: &str, detail: String| {
        violations.push(InvariantViolation {
            step,
            check: check.to_string(),
            detail,
        })
    };

    let mut minimal_columns: BTreeMap<usize, usize> = BTreeMap::new();
    let mut lower: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut upper: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut op3 = 0usize;

    for (idx, step) in trace.steps.iter().enumerate() {
        let neg = step.negative;
        if sigma.check_pair(neg).is_err() {
            fail(Some(idx), "range", format!("negative {neg} out of range"));
            continue;
        }
        if idx > 0 && trace.steps[idx - 1].negative >= neg {
            fail(
                Some(idx),
                "order",
                format!("{neg} does not follow {}", trace.steps[idx - 1].negative),
            );
        }

        if matches!(step.case, 2 | 3 | 5) {
            let expected_gap = if step.case == 3 { 2 } else { 0 };
            let all_pairs = tail_counts(sigma, neg, false);
            if all_pairs.negatives != all_pairs.positives + expected_gap {
                let canonical = tail_counts(sigma, neg, true);
                tail_log.push(TailRecord {
                    step: idx,
                    case: step.case,
                    canonical,
                    all_pairs,
                });
                fail(
                    Some(idx),
                    "minimal_pairs",
                    format!(
                        "case {} at {neg}: tail has {} negatives and {} positives, expected gap {expected_gap}",
                        step.case, all_pairs.negatives, all_pairs.positives
                    ),
                );
            }
        }
        if matches!(step.case, 2 | 5) {
            if let Some(prev) = minimal_columns.insert(neg.i, idx) {
                fail(
                    Some(idx),
                    "same_column",
                    format!("{neg} shares column {} with step {prev}", neg.i),
                );
            }
        }

        let consumed_heavy = step.consumed.iter().filter(|g| g.is_heavy()).count();
        let delta = usize::from(step.produced.is_heavy()) as isize - consumed_heavy as isize;
        let want = match step.operation {
            3 => 1,
            _ => 0,
        };
        if delta != want {
            fail(
                Some(idx),
                "heavy_delta",
                format!(
                    "operation {} changed heavy count by {delta}",
                    step.operation
                ),
            );
        }
        if step.operation == 3 {
            op3 += 1;
        }
        if step
            .produced
            .members
            .iter()
            .any(|p| sigma.check_pair(*p).is_err())
        {
            fail(
                Some(idx),
                "shape",
                "produced group has out-of-range members".to_string(),
            );
        } else if let Some(msg) = step.produced.shape_violation(sigma) {
            fail(Some(idx), "shape", msg);
        }

        let rows: BTreeSet<usize> = step.produced.members.iter().map(|p| p.j).collect();
        for &r in &rows {
            for &s in &rows {
                if s < r {
                    lower.entry(r).or_default().insert(s);
                } else if s > r {
                    upper.entry(r).or_default().insert(s);
                }
            }
        }
    }

    for (row, set) in &lower {
        if set.len() > 1 {
            fail(
                None,
                "row_connectivity",
                format!("row {row} connected to lower rows {set:?}"),
            );
        }
    }
    for (row, set) in &upper {
        if set.len() > 1 {
            fail(
                None,
                "row_connectivity",
                format!("row {row} connected to higher rows {set:?}"),
            );
        }
    }
    if op3 != trace.op3_uses {
        fail(
            None,
            "op3_uses",
            format!("trace records {} uses, steps show {op3}", trace.op3_uses),
        );
    }

    InvariantReport {
        ok: violations.is_empty(),
        violations,
        tail_log,
    }
}
