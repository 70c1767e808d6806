//! Fully enumerated episodic constrained MDPs.
//!
//! An [`ExplicitCmdp`] stores the complete transition table of a finite
//! episodic CMDP: per-state admissible actions, per-pair reward and constraint
//! cost, an absorbing set, an initial state, and a deterministic stopping
//! horizon. It is the input language of the dynamic-programming solver and the
//! brute-force oracle, and the export target of the vehicle-sharing
//! environment.

use std::fmt::Write as _;

use thiserror::Error;

/// Absolute tolerance for stochasticity and zero checks during validation.
pub const VALIDATION_TOL: f64 = 1e-12;

/// One admissible action at a state: its action index, immediate reward,
/// immediate constraint cost, and sparse successor distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionEntry {
    pub action: usize,
    pub reward: f64,
    pub constraint_cost: f64,
    /// Sparse `(next_state, probability)` pairs.
    pub transitions: Vec<(usize, f64)>,
}

/// A fully enumerated episodic CMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitCmdp {
    state_count: usize,
    /// Per state, the admissible actions with their data.
    actions: Vec<Vec<ActionEntry>>,
    absorbing: Vec<bool>,
    initial_state: usize,
    horizon: usize,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("model failed validation: {0:?}")]
    Invalid(Vec<Violation>),
}

/// A single violated model invariant, named for reporting.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Transition row of (state, action) does not sum to one or has a
    /// negative entry.
    NotStochastic { state: usize, action: usize, row_sum: f64 },
    /// Absorbing state does not self-loop with probability one.
    AbsorbingNotSelfLoop { state: usize },
    /// Absorbing state has nonzero reward or constraint cost.
    AbsorbingNotZero { state: usize, reward: f64, constraint_cost: f64 },
    /// State cannot be guaranteed to reach the absorbing set within the
    /// horizon (a transient cycle or an over-long path exists).
    AbsorptionNotGuaranteed { state: usize },
    /// State has no admissible action.
    NoAction { state: usize },
    /// Transition entry points outside the state space.
    DanglingTransition { state: usize, action: usize, next: usize },
}

impl ExplicitCmdp {
    pub fn new(
        actions: Vec<Vec<ActionEntry>>,
        absorbing: Vec<bool>,
        initial_state: usize,
        horizon: usize,
    ) -> Result<Self, ModelError> {
        let state_count = actions.len();
        if absorbing.len() != state_count {
            return Err(ModelError::StateOutOfRange(absorbing.len()));
        }
        if initial_state >= state_count {
            return Err(ModelError::StateOutOfRange(initial_state));
        }
        let model = Self { state_count, actions, absorbing, initial_state, horizon };
        let report = model.validate();
        if report.is_empty() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    /// Builds without validating; used by tests that need deliberately broken
    /// models for [`ExplicitCmdp::validate`].
    pub fn new_unchecked(
        actions: Vec<Vec<ActionEntry>>,
        absorbing: Vec<bool>,
        initial_state: usize,
        horizon: usize,
    ) -> Self {
        let state_count = actions.len();
        Self { state_count, actions, absorbing, initial_state, horizon }
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        self.absorbing[state]
    }

    pub fn transient_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.state_count).filter(|&x| !self.absorbing[x])
    }

    /// Admissible action entries at a state.
    pub fn entries(&self, state: usize) -> &[ActionEntry] {
        &self.actions[state]
    }

    /// Admissible action indices at a state.
    pub fn action_set(&self, state: usize) -> Vec<usize> {
        self.actions[state].iter().map(|e| e.action).collect()
    }

    pub fn entry(&self, state: usize, action: usize) -> Option<&ActionEntry> {
        self.actions[state].iter().find(|e| e.action == action)
    }

    /// Returns all violated invariants; empty iff the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        for x in 0..self.state_count {
            if self.actions[x].is_empty() {
                report.push(Violation::NoAction { state: x });
            }
            for e in &self.actions[x] {
                let mut sum = 0.0;
                let mut bad = false;
                for &(next, p) in &e.transitions {
                    if next >= self.state_count {
                        report.push(Violation::DanglingTransition {
                            state: x,
                            action: e.action,
                            next,
                        });
                    }
                    if p < 0.0 {
                        bad = true;
                    }
                    sum += p;
                }
                if bad || (sum - 1.0).abs() > VALIDATION_TOL {
                    report.push(Violation::NotStochastic { state: x, action: e.action, row_sum: sum });
                }
                if self.absorbing[x] {
                    let self_loop = e.transitions.len() == 1
                        && e.transitions[0].0 == x
                        && (e.transitions[0].1 - 1.0).abs() <= VALIDATION_TOL;
                    if !self_loop {
                        report.push(Violation::AbsorbingNotSelfLoop { state: x });
                    }
                    if e.reward.abs() > VALIDATION_TOL || e.constraint_cost.abs() > VALIDATION_TOL {
                        report.push(Violation::AbsorbingNotZero {
                            state: x,
                            reward: e.reward,
                            constraint_cost: e.constraint_cost,
                        });
                    }
                }
            }
        }
        // Absorption within the horizon along every support path: the depth
        // (longest support path to the absorbing set) must be finite and at
        // most `horizon` for every state.
        match self.depths() {
            Ok(depths) => {
                for (x, d) in depths.iter().enumerate() {
                    if *d > self.horizon {
                        report.push(Violation::AbsorptionNotGuaranteed { state: x });
                    }
                }
            }
            Err(cyclic) => {
                for x in cyclic {
                    report.push(Violation::AbsorptionNotGuaranteed { state: x });
                }
            }
        }
        report
    }

    /// Longest support-path distance from each state to the absorbing set.
    ///
    /// Absorbing states have depth 0. For a transient state the depth is
    /// `1 + max` over all support successors across all actions. `Err` returns
    /// the states involved in (or leading into) a transient cycle, for which
    /// no finite depth exists.
    pub fn depths(&self) -> Result<Vec<usize>, Vec<usize>> {
        let n = self.state_count;
        let mut depth = vec![None::<usize>; n];
        for x in 0..n {
            if self.absorbing[x] {
                depth[x] = Some(0);
            }
        }
        // Iteratively relax; a transient DAG of n states settles in <= n passes.
        for _ in 0..n {
            let mut changed = false;
            for x in 0..n {
                if self.absorbing[x] || depth[x].is_some() {
                    continue;
                }
                let mut worst = 0usize;
                let mut all_known = true;
                for e in &self.actions[x] {
                    for &(next, p) in &e.transitions {
                        if p <= 0.0 || next >= n {
                            continue;
                        }
                        match depth[next] {
                            Some(d) => worst = worst.max(d),
                            None => {
                                all_known = false;
                            }
                        }
                    }
                }
                if all_known {
                    depth[x] = Some(1 + worst);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if depth.iter().all(|d| d.is_some()) {
            Ok(depth.into_iter().map(|d| d.unwrap()).collect())
        } else {
            Err((0..n).filter(|&x| depth[x].is_none()).collect())
        }
    }

    /// Serializes to the structured text model format.
    ///
    /// Layout: a header with the dimensions, the absorbing flags, then one
    /// record per (state, action) with reward, constraint cost, and sparse
    /// transition entries. Probabilities are printed with 17 significant
    /// digits so the round-trip is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "cmdp v1").unwrap();
        writeln!(
            out,
            "states {} horizon {} initial {}",
            self.state_count, self.horizon, self.initial_state
        )
        .unwrap();
        let flags: Vec<String> =
            self.absorbing.iter().map(|&a| if a { "1".into() } else { "0".into() }).collect();
        writeln!(out, "absorbing {}", flags.join(" ")).unwrap();
        for x in 0..self.state_count {
            for e in &self.actions[x] {
                write!(
                    out,
                    "pair {} {} reward {:.16e} cost {:.16e} next",
                    x, e.action, e.reward, e.constraint_cost
                )
                .unwrap();
                for &(next, p) in &e.transitions {
                    write!(out, " {} {:.16e}", next, p).unwrap();
                }
                writeln!(out).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ParseError> {
        let mut lines = text.lines().enumerate();
        fn expect<T>(line: Option<T>) -> Result<T, ParseError> {
            line.ok_or(ParseError::UnexpectedEnd)
        }
        let (_, magic) = expect(lines.next())?;
        if magic.trim() != "cmdp v1" {
            return Err(ParseError::BadHeader(magic.to_string()));
        }
        let (ln, header) = expect(lines.next())?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 6 || toks[0] != "states" || toks[2] != "horizon" || toks[4] != "initial" {
            return Err(ParseError::Malformed(ln + 1));
        }
        let state_count: usize = toks[1].parse().map_err(|_| ParseError::Malformed(ln + 1))?;
        let horizon: usize = toks[3].parse().map_err(|_| ParseError::Malformed(ln + 1))?;
        let initial_state: usize = toks[5].parse().map_err(|_| ParseError::Malformed(ln + 1))?;
        let (ln, flag_line) = expect(lines.next())?;
        let mut flag_toks = flag_line.split_whitespace();
        if flag_toks.next() != Some("absorbing") {
            return Err(ParseError::Malformed(ln + 1));
        }
        let absorbing: Vec<bool> = flag_toks.map(|t| t == "1").collect();
        if absorbing.len() != state_count {
            return Err(ParseError::Malformed(ln + 1));
        }
        let mut actions: Vec<Vec<ActionEntry>> = vec![Vec::new(); state_count];
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < 8
                || toks[0] != "pair"
                || toks[3] != "reward"
                || toks[5] != "cost"
                || toks[7] != "next"
            {
                return Err(ParseError::Malformed(ln + 1));
            }
            let state: usize = toks[1].parse().map_err(|_| ParseError::Malformed(ln + 1))?;
            let action: usize = toks[2].parse().map_err(|_| ParseError::Malformed(ln + 1))?;
            let reward: f64 = toks[4].parse().map_err(|_| ParseError::Malformed(ln + 1))?;
            let constraint_cost: f64 = toks[6].parse().map_err(|_| ParseError::Malformed(ln + 1))?;
            let rest = &toks[8..];
            if rest.len() % 2 != 0 {
                return Err(ParseError::Malformed(ln + 1));
            }
            let mut transitions = Vec::with_capacity(rest.len() / 2);
            for chunk in rest.chunks(2) {
                let next: usize = chunk[0].parse().map_err(|_| ParseError::Malformed(ln + 1))?;
                let p: f64 = chunk[1].parse().map_err(|_| ParseError::Malformed(ln + 1))?;
                transitions.push((next, p));
            }
            if state >= state_count {
                return Err(ParseError::Malformed(ln + 1));
            }
            actions[state].push(ActionEntry { action, reward, constraint_cost, transitions });
        }
        Ok(Self::new_unchecked(actions, absorbing, initial_state, horizon))
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("bad header line: {0:?}")]
    BadHeader(String),
    #[error("malformed model file at line {0}")]
    Malformed(usize),
}

/// Builder helpers for small hand-written models.
pub struct ModelBuilder {
    actions: Vec<Vec<ActionEntry>>,
    absorbing: Vec<bool>,
    initial_state: usize,
    horizon: usize,
}

impl ModelBuilder {
    pub fn new(state_count: usize, initial_state: usize, horizon: usize) -> Self {
        Self {
            actions: vec![Vec::new(); state_count],
            absorbing: vec![false; state_count],
            initial_state,
            horizon,
        }
    }

    /// Marks a state absorbing and installs its mandatory zero self-loop.
    pub fn absorbing(mut self, state: usize) -> Self {
        self.absorbing[state] = true;
        self.actions[state] = vec![ActionEntry {
            action: 0,
            reward: 0.0,
            constraint_cost: 0.0,
            transitions: vec![(state, 1.0)],
        }];
        self
    }

    pub fn action(
        mut self,
        state: usize,
        action: usize,
        reward: f64,
        constraint_cost: f64,
        transitions: Vec<(usize, f64)>,
    ) -> Self {
        self.actions[state].push(ActionEntry { action, reward, constraint_cost, transitions });
        self
    }

    pub fn build(self) -> Result<ExplicitCmdp, ModelError> {
        ExplicitCmdp::new(self.actions, self.absorbing, self.initial_state, self.horizon)
    }

    pub fn build_unchecked(self) -> ExplicitCmdp {
        ExplicitCmdp::new_unchecked(self.actions, self.absorbing, self.initial_state, self.horizon)
    }
}
