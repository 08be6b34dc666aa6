//! Static description of an intersection: lanes, moves, the move
//! compatibility relation and the transmission environment.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Opaque lane label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(transparent)
)]
pub struct LaneId(pub u16);

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A traversal of the intersection from an approach lane to a departure lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Move {
    pub source: LaneId,
    pub target: LaneId,
}

impl Move {
    pub const fn new(source: u16, target: u16) -> Self {
        Move {
            source: LaneId(source),
            target: LaneId(target),
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("lane {0} is declared more than once")]
    DuplicateLane(LaneId),
    #[error("lane {0} is declared both as an approach and a departure lane")]
    Overlap(LaneId),
    #[error("an intersection needs at least two approach lanes, got {0}")]
    TooFewInLanes(usize),
    #[error("an intersection needs at least one departure lane")]
    NoOutLanes,
    #[error("{0} is not a move of this intersection")]
    NotAMove(Move),
    #[error("lane {0} is not an approach lane")]
    NotAnApproachLane(LaneId),
    #[error("queue position {position} exceeds the declared depth {max_depth}")]
    TooDeep { position: u32, max_depth: u32 },
    #[error("front-to-front pair ({0},0) -> ({1},0) cannot be removed")]
    ForcedPairRemoved(LaneId, LaneId),
}

/// Unvalidated intersection description, as read from a scenario.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RawIntersection {
    pub lanes_in: Vec<LaneId>,
    pub lanes_out: Vec<LaneId>,
    pub compat: Vec<(Move, Move)>,
}

/// A validated intersection. The order of `lanes_in` is the cyclic priority
/// order used by `next` functions and the Pos procedures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntersectionSpec {
    lanes_in: Vec<LaneId>,
    lanes_out: Vec<LaneId>,
    compat: BTreeSet<(Move, Move)>,
}

pub fn validate_intersection(raw: &RawIntersection) -> Result<IntersectionSpec, TopologyError> {
    let mut seen = BTreeSet::new();
    for &lane in raw.lanes_in.iter().chain(raw.lanes_out.iter()) {
        if !seen.insert(lane) {
            if raw.lanes_in.contains(&lane) && raw.lanes_out.contains(&lane) {
                return Err(TopologyError::Overlap(lane));
            }
            return Err(TopologyError::DuplicateLane(lane));
        }
    }
    if raw.lanes_in.len() < 2 {
        return Err(TopologyError::TooFewInLanes(raw.lanes_in.len()));
    }
    if raw.lanes_out.is_empty() {
        return Err(TopologyError::NoOutLanes);
    }
    let mut lanes_out = raw.lanes_out.clone();
    lanes_out.sort();
    let mut spec = IntersectionSpec {
        lanes_in: raw.lanes_in.clone(),
        lanes_out,
        compat: BTreeSet::new(),
    };
    for &(a, b) in &raw.compat {
        for mv in [a, b] {
            if !spec.is_move(mv) {
                return Err(TopologyError::NotAMove(mv));
            }
        }
        spec.compat.insert((a, b));
        spec.compat.insert((b, a));
    }
    debug_assert!(spec
        .compat
        .iter()
        .all(|&(a, b)| spec.compat.contains(&(b, a))));
    Ok(spec)
}

impl IntersectionSpec {
    pub fn lanes_in(&self) -> &[LaneId] {
        &self.lanes_in
    }

    pub fn lanes_out(&self) -> &[LaneId] {
        &self.lanes_out
    }

    /// Compatible pairs, both orientations.
    pub fn compat_pairs(&self) -> impl Iterator<Item = &(Move, Move)> {
        self.compat.iter()
    }

    pub fn is_in_lane(&self, lane: LaneId) -> bool {
        self.lanes_in.contains(&lane)
    }

    pub fn is_out_lane(&self, lane: LaneId) -> bool {
        self.lanes_out.binary_search(&lane).is_ok()
    }

    pub fn is_move(&self, mv: Move) -> bool {
        self.is_in_lane(mv.source) && self.is_out_lane(mv.target)
    }

    /// Every move, approach lanes in priority order, departure lanes ascending.
    pub fn moves(&self) -> Vec<Move> {
        self.lanes_in
            .iter()
            .flat_map(|&s| {
                self.lanes_out.iter().map(move |&t| Move {
                    source: s,
                    target: t,
                })
            })
            .collect()
    }

    pub fn moves_from(&self, lane: LaneId) -> impl Iterator<Item = Move> + '_ {
        self.lanes_out.iter().map(move |&t| Move {
            source: lane,
            target: t,
        })
    }

    /// Index of an approach lane in the priority order.
    pub fn lane_index(&self, lane: LaneId) -> Option<usize> {
        self.lanes_in.iter().position(|&l| l == lane)
    }

    /// The approach lane `steps` positions after `lane` in the cyclic order.
    pub fn lane_after(&self, lane: LaneId, steps: usize) -> LaneId {
        let k = self.lanes_in.len();
        let idx = self.lane_index(lane).expect("approach lane");
        self.lanes_in[(idx + steps) % k]
    }

    /// Lanes of the cyclic interval `[from, to)`; empty when `from == to`.
    pub fn cyclic_interval(&self, from: LaneId, to: LaneId) -> Vec<LaneId> {
        let k = self.lanes_in.len();
        let (Some(start), Some(end)) = (self.lane_index(from), self.lane_index(to)) else {
            return Vec::new();
        };
        let len = (end + k - start) % k;
        (0..len).map(|s| self.lanes_in[(start + s) % k]).collect()
    }

    /// Whether `lane` lies in the cyclic interval `[from, to)`.
    pub fn in_cyclic_interval(&self, lane: LaneId, from: LaneId, to: LaneId) -> bool {
        let k = self.lanes_in.len();
        match (
            self.lane_index(lane),
            self.lane_index(from),
            self.lane_index(to),
        ) {
            (Some(l), Some(s), Some(e)) => (l + k - s) % k < (e + k - s) % k,
            _ => false,
        }
    }

    pub fn compatible(&self, a: Move, b: Move) -> bool {
        self.compat.contains(&(a, b))
    }

    pub fn compatible_with_set<'a, I>(&self, a: Move, set: I) -> bool
    where
        I: IntoIterator<Item = &'a Move>,
    {
        set.into_iter().all(|&b| self.compatible(a, b))
    }

    /// Moves from one lane never execute together (one front per lane), so
    /// only cross-lane incompatibility is a conflict.
    pub fn conflicts(&self, a: Move, b: Move) -> bool {
        a.source != b.source && !self.compatible(a, b)
    }

    /// True iff the moves are pairwise compatible (distinct positions only).
    pub fn pairwise_compatible(&self, moves: &[Move]) -> bool {
        moves
            .iter()
            .enumerate()
            .all(|(i, &a)| moves[i + 1..].iter().all(|&b| self.compatible(a, b)))
    }
}

/// A queue slot: lane and position, front is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Slot {
    pub lane: LaneId,
    pub position: u32,
}

impl Slot {
    pub const fn new(lane: u16, position: u32) -> Self {
        Slot {
            lane: LaneId(lane),
            position,
        }
    }
}

/// Unvalidated transmission environment. `absent` lists pairs the user
/// requires to be missing; requiring a front-to-front pair to be missing is
/// an error.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RawTransmission {
    #[cfg_attr(feature = "serde", serde(default))]
    pub reach: Vec<(Slot, Slot)>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub absent: Vec<(Slot, Slot)>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub max_depth: u32,
}

/// Which broadcasts reach whom, stored extensionally up to `max_depth`.
/// Pairs deeper than `max_depth` are absent.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransmissionEnv {
    reach: BTreeSet<(Slot, Slot)>,
    max_depth: u32,
}

pub fn validate_transmission_env(
    raw: &RawTransmission,
    spec: &IntersectionSpec,
) -> Result<TransmissionEnv, TopologyError> {
    let check = |slot: Slot| {
        if !spec.is_in_lane(slot.lane) {
            return Err(TopologyError::NotAnApproachLane(slot.lane));
        }
        if slot.position > raw.max_depth {
            return Err(TopologyError::TooDeep {
                position: slot.position,
                max_depth: raw.max_depth,
            });
        }
        Ok(())
    };
    let mut reach = BTreeSet::new();
    for &(from, to) in &raw.reach {
        check(from)?;
        check(to)?;
        reach.insert((from, to));
    }
    for &(from, to) in &raw.absent {
        check(from)?;
        check(to)?;
        if from.position == 0 && to.position == 0 {
            return Err(TopologyError::ForcedPairRemoved(from.lane, to.lane));
        }
        reach.remove(&(from, to));
    }
    for &a in spec.lanes_in() {
        for &b in spec.lanes_in() {
            reach.insert((
                Slot {
                    lane: a,
                    position: 0,
                },
                Slot {
                    lane: b,
                    position: 0,
                },
            ));
        }
    }
    Ok(TransmissionEnv {
        reach,
        max_depth: raw.max_depth,
    })
}

impl TransmissionEnv {
    /// Only the forced front-to-front pairs.
    pub fn front_only(spec: &IntersectionSpec) -> Self {
        validate_transmission_env(&RawTransmission::default(), spec)
            .expect("front-only env is valid")
    }

    pub fn reaches(&self, from: Slot, to: Slot) -> bool {
        self.reach.contains(&(from, to))
    }

    pub fn pairs(&self) -> impl Iterator<Item = &(Slot, Slot)> {
        self.reach.iter()
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lanes(ids: &[u16]) -> Vec<LaneId> {
        ids.iter().copied().map(LaneId).collect()
    }

    fn fig1(compat: Vec<(Move, Move)>) -> RawIntersection {
        RawIntersection {
            lanes_in: lanes(&[1, 2, 3, 4]),
            lanes_out: lanes(&[5, 6, 7, 8]),
            compat,
        }
    }

    #[test]
    fn four_way_intersection_is_valid() {
        let spec = validate_intersection(&fig1(vec![(Move::new(1, 5), Move::new(3, 7))])).unwrap();
        assert_eq!(spec.moves().len(), 16);
        assert!(spec.compatible(Move::new(3, 7), Move::new(1, 5)));
    }

    #[test]
    fn single_approach_lane_is_rejected() {
        let raw = RawIntersection {
            lanes_in: lanes(&[0]),
            lanes_out: lanes(&[1]),
            compat: vec![],
        };
        assert_eq!(
            validate_intersection(&raw),
            Err(TopologyError::TooFewInLanes(1))
        );
    }

    #[test]
    fn overlapping_partition_is_rejected() {
        let raw = RawIntersection {
            lanes_in: lanes(&[1, 2]),
            lanes_out: lanes(&[2, 3]),
            compat: vec![],
        };
        assert_eq!(
            validate_intersection(&raw),
            Err(TopologyError::Overlap(LaneId(2)))
        );
    }

    #[test]
    fn compat_pair_must_reference_moves() {
        let raw = fig1(vec![(Move::new(5, 1), Move::new(2, 6))]);
        assert_eq!(
            validate_intersection(&raw),
            Err(TopologyError::NotAMove(Move::new(5, 1)))
        );
    }

    #[test]
    fn compat_is_symmetrically_closed() {
        let spec = validate_intersection(&fig1(vec![(Move::new(1, 5), Move::new(2, 6))])).unwrap();
        assert!(spec.compatible(Move::new(1, 5), Move::new(2, 6)));
        assert!(spec.compatible(Move::new(2, 6), Move::new(1, 5)));
        assert!(!spec.compatible(Move::new(1, 5), Move::new(3, 6)));
    }

    #[test]
    fn compatible_with_set_cases() {
        let spec = validate_intersection(&fig1(vec![(Move::new(1, 5), Move::new(2, 6))])).unwrap();
        let a = Move::new(1, 5);
        assert!(spec.compatible_with_set(a, &[]));
        assert!(spec.compatible_with_set(a, &[Move::new(2, 6)]));
        assert!(!spec.compatible_with_set(a, &[Move::new(2, 6), Move::new(3, 7)]));
    }

    #[test]
    fn cyclic_intervals() {
        let spec = validate_intersection(&fig1(vec![])).unwrap();
        assert!(spec.cyclic_interval(LaneId(2), LaneId(2)).is_empty());
        assert_eq!(
            spec.cyclic_interval(LaneId(3), LaneId(2)),
            lanes(&[3, 4, 1])
        );
        assert!(spec.in_cyclic_interval(LaneId(1), LaneId(3), LaneId(2)));
        assert!(!spec.in_cyclic_interval(LaneId(2), LaneId(3), LaneId(2)));
        assert_eq!(spec.lane_after(LaneId(4), 1), LaneId(1));
    }

    #[test]
    fn front_to_front_pairs_are_forced() {
        let raw = RawIntersection {
            lanes_in: lanes(&[1, 2]),
            lanes_out: lanes(&[3]),
            compat: vec![],
        };
        let spec = validate_intersection(&raw).unwrap();
        let env = validate_transmission_env(&RawTransmission::default(), &spec).unwrap();
        for a in [1, 2] {
            for b in [1, 2] {
                assert!(env.reaches(Slot::new(a, 0), Slot::new(b, 0)));
            }
        }
        assert_eq!(env.pairs().count(), 4);
    }

    #[test]
    fn transmission_env_errors_and_superset() {
        let raw = RawIntersection {
            lanes_in: lanes(&[1, 2]),
            lanes_out: lanes(&[3]),
            compat: vec![],
        };
        let spec = validate_intersection(&raw).unwrap();
        let out_source = RawTransmission {
            reach: vec![(Slot::new(3, 0), Slot::new(1, 0))],
            ..Default::default()
        };
        assert_eq!(
            validate_transmission_env(&out_source, &spec),
            Err(TopologyError::NotAnApproachLane(LaneId(3)))
        );
        let deeper = RawTransmission {
            reach: vec![(Slot::new(1, 1), Slot::new(1, 0))],
            absent: vec![],
            max_depth: 1,
        };
        let env = validate_transmission_env(&deeper, &spec).unwrap();
        assert!(env.reaches(Slot::new(1, 1), Slot::new(1, 0)));
        let too_deep = RawTransmission {
            max_depth: 0,
            ..deeper.clone()
        };
        assert!(matches!(
            validate_transmission_env(&too_deep, &spec),
            Err(TopologyError::TooDeep { .. })
        ));
        let removal = RawTransmission {
            absent: vec![(Slot::new(1, 0), Slot::new(2, 0))],
            ..Default::default()
        };
        assert_eq!(
            validate_transmission_env(&removal, &spec),
            Err(TopologyError::ForcedPairRemoved(LaneId(1), LaneId(2)))
        );
    }

    fn arb_compat() -> impl Strategy<Value = Vec<(Move, Move)>> {
        let mv = (1u16..=3, 4u16..=5).prop_map(|(s, t)| Move::new(s, t));
        proptest::collection::vec((mv.clone(), mv), 0..12)
    }

    proptest! {
        #[test]
        fn compat_symmetric_after_validation(compat in arb_compat()) {
            let raw = RawIntersection { lanes_in: lanes(&[1, 2, 3]), lanes_out: lanes(&[4, 5]), compat };
            let spec = validate_intersection(&raw).unwrap();
            for a in spec.moves() {
                for b in spec.moves() {
                    prop_assert_eq!(spec.compatible(a, b), spec.compatible(b, a));
                }
            }
        }

        #[test]
        fn compatible_with_union_is_conjunction(
            compat in arb_compat(),
            left in proptest::collection::vec(0usize..6, 0..4),
            right in proptest::collection::vec(0usize..6, 0..4),
            probe in 0usize..6,
        ) {
            let raw = RawIntersection { lanes_in: lanes(&[1, 2, 3]), lanes_out: lanes(&[4, 5]), compat };
            let spec = validate_intersection(&raw).unwrap();
            let all = spec.moves();
            let s: Vec<Move> = left.iter().map(|&i| all[i]).collect();
            let t: Vec<Move> = right.iter().map(|&i| all[i]).collect();
            let union: Vec<Move> = s.iter().chain(t.iter()).copied().collect();
            let a = all[probe];
            prop_assert_eq!(
                spec.compatible_with_set(a, &union),
                spec.compatible_with_set(a, &s) && spec.compatible_with_set(a, &t)
            );
        }
    }
}
