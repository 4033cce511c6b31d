//! SaySelect: a speaker sees five balls, two of them blue, and sends one
//! number per turn; the listener picks a ball or quits.
//!
//! Balls and messages are numbered 1..=5 in the public API. Internally the
//! listener's action ids are `0..5` for balls 1..=5 and `5` for quit.

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::rng::SimRng;

pub const NUM_BALLS: usize = 5;
pub const NUM_MESSAGES: usize = 5;
/// Listener actions: five balls plus quit.
pub const NUM_LISTENER_ACTIONS: usize = 6;
pub const QUIT_ACTION: usize = 5;
/// Unordered pairs of blue balls.
pub const NUM_PAIRS: usize = 10;
/// Speaker states: blue pair times which of the two blues are collected.
pub const NUM_SPEAKER_STATES: usize = NUM_PAIRS * 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaySelectConfig {
    pub horizon: u32,
    pub reward_blue: f64,
    pub reward_wrong: f64,
    pub reward_quit: f64,
}

impl Default for SaySelectConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            reward_blue: 1.0,
            reward_wrong: -1.0,
            reward_quit: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ListenerAction {
    Pick(u8),
    Quit,
}

impl ListenerAction {
    pub fn from_id(id: usize) -> Result<Self, EnvError> {
        match id {
            0..=4 => Ok(ListenerAction::Pick(id as u8 + 1)),
            QUIT_ACTION => Ok(ListenerAction::Quit),
            _ => Err(EnvError::InvalidAction(format!("listener action id {id}"))),
        }
    }

    pub fn id(self) -> usize {
        match self {
            ListenerAction::Pick(b) => b as usize - 1,
            ListenerAction::Quit => QUIT_ACTION,
        }
    }

    pub fn label(self) -> String {
        match self {
            ListenerAction::Pick(b) => b.to_string(),
            ListenerAction::Quit => "quit".to_string(),
        }
    }
}

/// Labels of the listener's actions, in action-id order.
pub fn listener_labels() -> Vec<String> {
    (0..NUM_LISTENER_ACTIONS)
        .map(|i| ListenerAction::from_id(i).unwrap().label())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaySelectState {
    /// `balls[i]` is true when ball `i + 1` is blue.
    pub balls: [bool; NUM_BALLS],
    /// Collected ball numbers (1..=5), in collection order.
    pub collected: Vec<u8>,
    pub last_message: Option<u8>,
    pub turn: u32,
    pub done: bool,
}

impl SaySelectState {
    /// Start state with the given two blue balls (1-based).
    pub fn new(blues: (u8, u8)) -> Result<Self, EnvError> {
        let (a, b) = blues;
        if a == b || !(1..=5).contains(&a) || !(1..=5).contains(&b) {
            return Err(EnvError::Config(format!("invalid blue pair {a},{b}")));
        }
        let mut balls = [false; NUM_BALLS];
        balls[a as usize - 1] = true;
        balls[b as usize - 1] = true;
        Ok(Self {
            balls,
            collected: Vec::new(),
            last_message: None,
            turn: 0,
            done: false,
        })
    }

    pub fn random(rng: &mut SimRng) -> Self {
        let (a, b) = pair_from_index(rng.below(NUM_PAIRS));
        Self::new((a, b)).expect("valid pair")
    }

    /// Blue balls in ascending order.
    pub fn blues(&self) -> (u8, u8) {
        let mut it = (0..NUM_BALLS).filter(|&i| self.balls[i]).map(|i| i as u8 + 1);
        (it.next().unwrap(), it.next().unwrap())
    }

    pub fn is_collected(&self, ball: u8) -> bool {
        self.collected.contains(&ball)
    }

    /// Speaker's state id: pair index and a two-bit collected mask.
    pub fn speaker_state(&self) -> usize {
        let (a, b) = self.blues();
        let mask = usize::from(self.is_collected(a)) | (usize::from(self.is_collected(b)) << 1);
        pair_index(a, b) * 4 + mask
    }

    pub fn first_uncollected_blue(&self) -> Option<u8> {
        let (a, b) = self.blues();
        [a, b].into_iter().find(|x| !self.is_collected(*x))
    }
}

/// Index of the unordered pair `{a, b}` in lexicographic order of (lo, hi).
pub fn pair_index(a: u8, b: u8) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mut idx = 0;
    for i in 1..=5u8 {
        for j in (i + 1)..=5u8 {
            if (i, j) == (lo, hi) {
                return idx;
            }
            idx += 1;
        }
    }
    unreachable!("invalid pair {a},{b}")
}

pub fn pair_from_index(idx: usize) -> (u8, u8) {
    let mut k = 0;
    for i in 1..=5u8 {
        for j in (i + 1)..=5u8 {
            if k == idx {
                return (i, j);
            }
            k += 1;
        }
    }
    panic!("pair index {idx} out of range")
}

/// Apply one turn: the speaker has sent `speaker_msg`, the listener answers.
pub fn sayselect_step(
    state: &SaySelectState,
    speaker_msg: u8,
    listener_action: ListenerAction,
    config: &SaySelectConfig,
) -> Result<(SaySelectState, f64, bool), EnvError> {
    if state.done || state.turn >= config.horizon {
        return Err(EnvError::Finished);
    }
    if !(1..=5).contains(&speaker_msg) {
        return Err(EnvError::InvalidAction(format!("message {speaker_msg}")));
    }
    let mut next = state.clone();
    next.last_message = Some(speaker_msg);
    next.turn += 1;
    let reward = match listener_action {
        ListenerAction::Quit => {
            next.done = true;
            config.reward_quit
        }
        ListenerAction::Pick(b) => {
            if !(1..=5).contains(&b) {
                return Err(EnvError::InvalidAction(format!("ball {b}")));
            }
            if state.balls[b as usize - 1] && !state.is_collected(b) {
                next.collected.push(b);
                config.reward_blue
            } else {
                config.reward_wrong
            }
        }
    };
    let both = next.collected.len() == 2;
    next.done = next.done || both || next.turn >= config.horizon;
    let done = next.done;
    Ok((next, reward, done))
}

/// A bijection on the ball numbers 1..=5.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Permutation {
    /// `map[b - 1]` is the image of `b`.
    map: [u8; 5],
}

impl Permutation {
    pub fn new(images: &[u8]) -> Result<Self, EnvError> {
        if images.len() != 5 {
            return Err(EnvError::Config(format!(
                "permutation needs 5 entries, got {}",
                images.len()
            )));
        }
        let mut seen = [false; 5];
        let mut map = [0u8; 5];
        for (i, &x) in images.iter().enumerate() {
            if !(1..=5).contains(&x) || seen[x as usize - 1] {
                return Err(EnvError::Config(format!(
                    "not a bijection on 1..=5: {images:?}"
                )));
            }
            seen[x as usize - 1] = true;
            map[i] = x;
        }
        Ok(Self { map })
    }

    pub fn identity() -> Self {
        Self { map: [1, 2, 3, 4, 5] }
    }

    pub fn random(rng: &mut SimRng) -> Self {
        let mut map = [1, 2, 3, 4, 5];
        rng.shuffle(&mut map);
        Self { map }
    }

    pub fn apply(&self, b: u8) -> u8 {
        self.map[b as usize - 1]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = [0u8; 5];
        for (i, &x) in self.map.iter().enumerate() {
            inv[x as usize - 1] = i as u8 + 1;
        }
        Self { map: inv }
    }

    pub fn images(&self) -> [u8; 5] {
        self.map
    }
}

impl TryFrom<Vec<u8>> for Permutation {
    type Error = EnvError;
    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        Permutation::new(&v)
    }
}

impl From<Permutation> for Vec<u8> {
    fn from(p: Permutation) -> Self {
        p.map.to_vec()
    }
}

/// Who decides the speaker's messages.
pub enum SpeakerKind<'a> {
    /// Greedy message per speaker state, read from the speaker's Q-table.
    Learned(&'a dyn Fn(usize) -> u8),
    /// The message for blue ball `b` is `perm(b)`.
    FixedPermutation(Permutation),
}

impl std::fmt::Debug for SpeakerKind<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpeakerKind::Learned(_) => f.write_str("Learned"),
            SpeakerKind::FixedPermutation(p) => write!(f, "FixedPermutation({:?})", p.images()),
        }
    }
}

impl SpeakerKind<'_> {
    /// Message sent in `state`.
    pub fn message(&self, state: &SaySelectState) -> u8 {
        match self {
            SpeakerKind::Learned(f) => f(state.speaker_state()),
            SpeakerKind::FixedPermutation(p) => {
                p.apply(state.first_uncollected_blue().unwrap_or(state.blues().0))
            }
        }
    }
}

/// Messages the speaker sends over an episode in which the listener collects
/// each blue ball on the turn it is signalled.
pub fn sayselect_speaker_policy(kind: &SpeakerKind<'_>, blues: (u8, u8)) -> Vec<u8> {
    let config = SaySelectConfig::default();
    let mut state = SaySelectState::new(blues).expect("valid blue pair");
    let mut messages = Vec::new();
    while let Some(target) = state.first_uncollected_blue() {
        let m = kind.message(&state);
        messages.push(m);
        let (next, _, done) =
            sayselect_step(&state, m, ListenerAction::Pick(target), &config).expect("valid step");
        state = next;
        if done {
            break;
        }
    }
    messages
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blue_pick_rewards_and_collects() {
        let cfg = SaySelectConfig::default();
        let s = SaySelectState::new((2, 4)).unwrap();
        let (n, r, done) = sayselect_step(&s, 2, ListenerAction::Pick(2), &cfg).unwrap();
        assert_eq!(r, 1.0);
        assert_eq!(n.collected, vec![2]);
        assert!(!done);
    }

    #[test]
    fn wrong_pick_penalized() {
        let cfg = SaySelectConfig::default();
        let s = SaySelectState::new((2, 4)).unwrap();
        let (_, r, _) = sayselect_step(&s, 1, ListenerAction::Pick(3), &cfg).unwrap();
        assert_eq!(r, -1.0);
    }

    #[test]
    fn repeated_pick_penalized() {
        let cfg = SaySelectConfig::default();
        let s = SaySelectState::new((2, 4)).unwrap();
        let (s, _, _) = sayselect_step(&s, 2, ListenerAction::Pick(2), &cfg).unwrap();
        let (_, r, _) = sayselect_step(&s, 2, ListenerAction::Pick(2), &cfg).unwrap();
        assert_eq!(r, -1.0);
    }

    #[test]
    fn quit_ends_with_zero() {
        let cfg = SaySelectConfig::default();
        let s = SaySelectState::new((1, 5)).unwrap();
        let (_, r, done) = sayselect_step(&s, 1, ListenerAction::Quit, &cfg).unwrap();
        assert_eq!(r, 0.0);
        assert!(done);
    }

    #[test]
    fn horizon_ends_episode_and_rejects_more_steps() {
        let cfg = SaySelectConfig::default();
        let mut s = SaySelectState::new((1, 2)).unwrap();
        for _ in 0..5 {
            let (n, _, _) = sayselect_step(&s, 1, ListenerAction::Pick(3), &cfg).unwrap();
            s = n;
        }
        assert!(s.done);
        assert_eq!(
            sayselect_step(&s, 1, ListenerAction::Pick(1), &cfg),
            Err(EnvError::Finished)
        );
    }

    #[test]
    fn invalid_action_ids() {
        assert!(ListenerAction::from_id(6).is_err());
        let cfg = SaySelectConfig::default();
        let s = SaySelectState::new((1, 2)).unwrap();
        assert!(sayselect_step(&s, 1, ListenerAction::Pick(9), &cfg).is_err());
        assert!(sayselect_step(&s, 0, ListenerAction::Pick(1), &cfg).is_err());
    }

    /// Enumerate every pair of listener actions for two turns; the best total
    /// is 2, reached only by picking both blues.
    #[test]
    fn optimal_two_turn_total_is_two() {
        let cfg = SaySelectConfig::default();
        for p in 0..NUM_PAIRS {
            let blues = pair_from_index(p);
            let mut best = f64::NEG_INFINITY;
            for a1 in 0..NUM_LISTENER_ACTIONS {
                for a2 in 0..NUM_LISTENER_ACTIONS {
                    let s = SaySelectState::new(blues).unwrap();
                    let (s, r1, d) =
                        sayselect_step(&s, 1, ListenerAction::from_id(a1).unwrap(), &cfg).unwrap();
                    let total = if d {
                        r1
                    } else {
                        let (_, r2, _) =
                            sayselect_step(&s, 1, ListenerAction::from_id(a2).unwrap(), &cfg)
                                .unwrap();
                        r1 + r2
                    };
                    best = best.max(total);
                }
            }
            assert_eq!(best, 2.0);
        }
    }

    #[test]
    fn pair_index_roundtrip() {
        for i in 0..NUM_PAIRS {
            let (a, b) = pair_from_index(i);
            assert_eq!(pair_index(a, b), i);
            assert_eq!(pair_index(b, a), i);
        }
    }

    #[test]
    fn speaker_states_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..NUM_PAIRS {
            let s = SaySelectState::new(pair_from_index(i)).unwrap();
            assert!(seen.insert(s.speaker_state()));
            assert!(s.speaker_state() < NUM_SPEAKER_STATES);
        }
    }

    #[test]
    fn identity_speaker_messages() {
        let k = SpeakerKind::FixedPermutation(Permutation::identity());
        assert_eq!(sayselect_speaker_policy(&k, (1, 5)), vec![1, 5]);
    }

    #[test]
    fn permuted_speaker_message() {
        let k = SpeakerKind::FixedPermutation(Permutation::new(&[3, 4, 5, 1, 2]).unwrap());
        let s = SaySelectState::new((1, 4)).unwrap();
        assert_eq!(k.message(&s), 3);
    }

    #[test]
    fn seeded_random_permutation_repeats() {
        let p1 = Permutation::random(&mut SimRng::seed_from_u64(5));
        let p2 = Permutation::random(&mut SimRng::seed_from_u64(5));
        let k1 = SpeakerKind::FixedPermutation(p1);
        let k2 = SpeakerKind::FixedPermutation(p2);
        assert_eq!(
            sayselect_speaker_policy(&k1, (2, 3)),
            sayselect_speaker_policy(&k2, (2, 3))
        );
    }

    #[test]
    fn non_bijective_permutation_rejected() {
        assert!(Permutation::new(&[1, 1, 2, 3, 4]).is_err());
        assert!(Permutation::new(&[1, 2, 3]).is_err());
        assert!(Permutation::new(&[0, 1, 2, 3, 4]).is_err());
    }

    #[test]
    fn inverse_composes_to_identity() {
        let p = Permutation::new(&[3, 4, 5, 1, 2]).unwrap();
        let inv = p.inverse();
        for b in 1..=5 {
            assert_eq!(inv.apply(p.apply(b)), b);
        }
    }

    #[test]
    fn learned_speaker_reads_its_table() {
        let greedy = |s: usize| (s % 5) as u8 + 1;
        let k = SpeakerKind::Learned(&greedy);
        let msgs = sayselect_speaker_policy(&k, (1, 2));
        assert_eq!(msgs.len(), 2);
        assert!(msgs.iter().all(|m| (1..=5).contains(m)));
    }
}
