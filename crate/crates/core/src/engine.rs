//! The interactive loop: sample, pick a question, ask, update.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::lang::{matches, parse_sketch, print_sketch, Completion, ParseError, Sketch};
use crate::questions::{candidate_questions, estimate_scores, select_question, Question, QuestionError};
use crate::sampler::{SamplerConfig, SamplerError, Skeleton};
use crate::scalar::Scalar;
use crate::softsem::{precompute_theta, ThetaTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub sampler: SamplerConfig,
    /// Weight of completion size in the score.
    pub lambda: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            sampler: SamplerConfig::default(),
            lambda: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingAnswer,
    Complete,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    NoValidExpansion,
    RejectionExhausted,
    NoCandidates,
    InvalidConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
    /// Rejected questions in force when the session failed.
    pub negatives: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub question: Question,
    pub pi_plus_hat: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub sketch: Sketch,
    pub negatives: Vec<Question>,
    pub pending: Option<Pending>,
    pub status: Status,
    pub failure: Option<Failure>,
    rng: ChaCha8Rng,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub accept: bool,
    /// State right before the answer.
    pub before: SessionState,
}

/// One answered question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub sketch: String,
    pub question: String,
    pub result: String,
    pub answer: bool,
    pub pi_plus_hat: f64,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("the session is already complete")]
    SessionComplete,
    #[error("the session has failed: {0}")]
    SessionFailed(String),
    #[error("nothing to undo")]
    EmptyHistory,
    #[error("the ground truth is not a completion of the sketch")]
    GroundTruthNotDerivable,
    #[error("invalid sketch: {0}")]
    InvalidSketch(String),
    #[error("malformed session snapshot: {0}")]
    Snapshot(#[from] serde_json::Error),
}

/// A synthesis session over a shared catalog.
#[derive(Clone)]
pub struct Session<S> {
    catalog: Arc<Catalog>,
    theta: Arc<ThetaTable<S>>,
    config: EngineConfig,
    initial: Sketch,
    state: SessionState,
    history: Vec<HistoryEntry>,
}

#[derive(Serialize, Deserialize)]
struct SessionSnapshot {
    config: EngineConfig,
    initial: Sketch,
    state: SessionState,
    history: Vec<HistoryEntry>,
}

impl<S: Scalar> Session<S> {
    pub fn start(catalog: Arc<Catalog>, sketch: Sketch, config: EngineConfig) -> Result<Self, EngineError> {
        let theta = Arc::new(precompute_theta(&sketch, &catalog));
        Self::with_theta(catalog, sketch, config, theta)
    }

    pub fn start_text(catalog: Arc<Catalog>, text: &str, config: EngineConfig) -> Result<Self, EngineError> {
        let sketch = parse_sketch(text, &catalog)?;
        Self::start(catalog, sketch, config)
    }

    /// Starts with a θ computed elsewhere, e.g. loaded from a cache.
    pub fn with_theta(
        catalog: Arc<Catalog>,
        sketch: Sketch,
        config: EngineConfig,
        theta: Arc<ThetaTable<S>>,
    ) -> Result<Self, EngineError> {
        if sketch.holes().iter().filter(|h| h.kind == crate::lang::HoleKind::Table).count() > 1 {
            return Err(EngineError::InvalidSketch("at most one table hole is supported".into()));
        }
        let state = SessionState {
            sketch: sketch.clone(),
            negatives: Vec::new(),
            pending: None,
            status: Status::AwaitingAnswer,
            failure: None,
            rng: ChaCha8Rng::seed_from_u64(config.sampler.seed),
        };
        let mut session = Session {
            catalog,
            theta,
            config,
            initial: sketch,
            state,
            history: Vec::new(),
        };
        session.advance();
        Ok(session)
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn initial(&self) -> &Sketch {
        &self.initial
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn status(&self) -> Status {
        self.state.status
    }

    pub fn sketch(&self) -> &Sketch {
        &self.state.sketch
    }

    pub fn pending(&self) -> Option<&Pending> {
        self.state.pending.as_ref()
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn completion(&self) -> Option<Completion> {
        (self.state.status == Status::Complete).then(|| Completion::try_from(self.state.sketch.clone()).expect("complete"))
    }

    pub fn answer(&mut self, accept: bool) -> Result<&SessionState, EngineError> {
        let pending = match self.state.status {
            Status::Complete => return Err(EngineError::SessionComplete),
            Status::Failed => {
                let why = self.state.failure.as_ref().map(|f| f.message.clone()).unwrap_or_default();
                return Err(EngineError::SessionFailed(why));
            }
            Status::AwaitingAnswer => self.state.pending.clone().expect("awaiting sessions have a question"),
        };
        self.history.push(HistoryEntry {
            accept,
            before: self.state.clone(),
        });
        let q = pending.question;
        if accept {
            self.state.sketch = q.sketch;
            let holes: Vec<String> = self.state.sketch.holes().into_iter().map(|h| h.name).collect();
            self.state
                .negatives
                .retain(|n| n.targets().all(|t| holes.iter().any(|h| h == t)));
        } else {
            self.state.negatives.push(q);
        }
        self.advance();
        Ok(&self.state)
    }

    pub fn undo(&mut self) -> Result<&SessionState, EngineError> {
        let entry = self.history.pop().ok_or(EngineError::EmptyHistory)?;
        self.state = entry.before;
        Ok(&self.state)
    }

    pub fn trace(&self) -> Vec<TraceRecord> {
        self.history
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let p = h.before.pending.as_ref().expect("answered states had a question");
                TraceRecord {
                    step: i + 1,
                    sketch: print_sketch(&h.before.sketch),
                    question: p.question.summary(),
                    result: print_sketch(&p.question.sketch),
                    answer: h.accept,
                    pi_plus_hat: p.pi_plus_hat,
                    score: p.score,
                }
            })
            .collect()
    }

    /// The trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.trace()
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace serializes") + "\n")
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SessionSnapshot {
            config: self.config.clone(),
            initial: self.initial.clone(),
            state: self.state.clone(),
            history: self.history.clone(),
        })
        .expect("session serializes")
    }

    /// Restores a session saved by [`Session::to_json`]; θ is recomputed.
    pub fn from_json(catalog: Arc<Catalog>, json: &str) -> Result<Self, EngineError> {
        let snap: SessionSnapshot = serde_json::from_str(json)?;
        let theta = Arc::new(precompute_theta(&snap.initial, &catalog));
        Ok(Session {
            catalog,
            theta,
            config: snap.config,
            initial: snap.initial,
            state: snap.state,
            history: snap.history,
        })
    }

    fn fail(&mut self, kind: FailureKind, message: String) {
        let st = &mut self.state;
        st.status = Status::Failed;
        st.pending = None;
        st.failure = Some(Failure {
            kind,
            message,
            negatives: st.negatives.iter().map(Question::summary).collect(),
        });
    }

    /// Computes the next question, or completes or fails the session.
    fn advance(&mut self) {
        let st = &mut self.state;
        st.pending = None;
        if st.sketch.is_complete() {
            st.status = Status::Complete;
            return;
        }
        let seed: u64 = st.rng.gen();
        let cfg = &self.config.sampler;
        let sk = match Skeleton::compile(
            &st.sketch,
            &self.catalog,
            &self.theta,
            S::lit(self.config.lambda),
            cfg.max_join_depth,
        ) {
            Ok(sk) => sk,
            Err(e) => return self.fail_sampler(e),
        };
        let negatives: Vec<Sketch> = st.negatives.iter().map(|q| q.sketch.clone()).collect();
        let samples = match sk.sample(&negatives, cfg, seed) {
            Ok(s) => s,
            Err(e) => return self.fail_sampler(e),
        };
        let candidates = match candidate_questions(&sk, &self.catalog, &st.negatives) {
            Ok(c) => c,
            Err(e) => return self.fail_questions(e),
        };
        let scored = estimate_scores::<S>(&candidates, &samples);
        let best = match select_question(&scored) {
            Ok(b) => b,
            Err(e) => return self.fail_questions(e),
        };
        st.pending = Some(Pending {
            question: best.question.clone(),
            pi_plus_hat: best.pi_plus_hat.to_f64_lossy(),
            score: best.score_hat.to_f64_lossy(),
        });
        st.status = Status::AwaitingAnswer;
    }

    fn fail_sampler(&mut self, e: SamplerError) {
        let kind = match e {
            SamplerError::NoValidExpansion(_) => FailureKind::NoValidExpansion,
            SamplerError::RejectionExhausted { .. } => FailureKind::RejectionExhausted,
            SamplerError::InvalidConfig(_) => FailureKind::InvalidConfig,
        };
        self.fail(kind, e.to_string());
    }

    fn fail_questions(&mut self, e: QuestionError) {
        self.fail(FailureKind::NoCandidates, e.to_string());
    }
}

pub trait Oracle {
    fn answer(&mut self, q: &Question) -> bool;
}

/// Accepts exactly the questions the ground truth derives from.
pub struct GroundTruthOracle {
    pub truth: Completion,
}

impl Oracle for GroundTruthOracle {
    fn answer(&mut self, q: &Question) -> bool {
        matches(&q.sketch, &self.truth)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Full,
    NoSoft,
    /// Only correct questions are asked; counts the minimum work.
    Perfect,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchLimits {
    pub max_iterations: usize,
    pub time_budget: Option<Duration>,
}

impl Default for BatchLimits {
    fn default() -> Self {
        BatchLimits {
            max_iterations: 50,
            time_budget: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStatus {
    Complete,
    Failed,
    Timeout,
}

#[derive(Clone, Debug)]
pub struct BatchOutcome {
    pub completion: Option<Completion>,
    pub iterations: usize,
    pub accepts: usize,
    pub rejects: usize,
    pub status: BatchStatus,
    pub failure: Option<Failure>,
    pub trace: Vec<TraceRecord>,
    pub elapsed: Duration,
}

/// Drives a session with the ground-truth oracle until it completes,
/// fails, or exceeds `limits`.
pub fn run_batch<S: Scalar>(
    catalog: Arc<Catalog>,
    sketch: &Sketch,
    truth: &Completion,
    config: &EngineConfig,
    mode: Mode,
    limits: &BatchLimits,
) -> Result<BatchOutcome, EngineError> {
    if !matches(sketch, truth) {
        return Err(EngineError::GroundTruthNotDerivable);
    }
    let started = Instant::now();
    let (sketch, truth) = match mode {
        Mode::NoSoft => (
            sketch.strip_soft(),
            Completion::try_from(truth.strip_soft()).expect("stripping keeps completeness"),
        ),
        _ => (sketch.clone(), truth.clone()),
    };
    if mode == Mode::Perfect {
        return perfect_run::<S>(catalog, sketch, &truth, config, limits, started);
    }
    let mut session = Session::<S>::start(catalog, sketch, config.clone())?;
    let mut oracle = GroundTruthOracle { truth };
    let (mut accepts, mut rejects) = (0, 0);
    let status = loop {
        match session.status() {
            Status::Complete => break BatchStatus::Complete,
            Status::Failed => break BatchStatus::Failed,
            Status::AwaitingAnswer => {}
        }
        let over_time = limits.time_budget.is_some_and(|b| started.elapsed() >= b);
        if accepts + rejects >= limits.max_iterations || over_time {
            break BatchStatus::Timeout;
        }
        let q = &session.pending().expect("awaiting").question;
        let yes = oracle.answer(q);
        if yes {
            accepts += 1;
        } else {
            rejects += 1;
        }
        session.answer(yes)?;
    };
    Ok(BatchOutcome {
        completion: session.completion(),
        iterations: accepts + rejects,
        accepts,
        rejects,
        status,
        failure: session.state().failure.clone(),
        trace: session.trace(),
        elapsed: started.elapsed(),
    })
}

/// Accepts, at each step, the first candidate the truth derives from.
fn perfect_run<S: Scalar>(
    catalog: Arc<Catalog>,
    mut sketch: Sketch,
    truth: &Completion,
    config: &EngineConfig,
    limits: &BatchLimits,
    started: Instant,
) -> Result<BatchOutcome, EngineError> {
    let theta = precompute_theta::<S>(&sketch, &catalog);
    let mut trace = Vec::new();
    let outcome = |sketch: Sketch, trace: Vec<TraceRecord>, status, failure| BatchOutcome {
        completion: Completion::try_from(sketch).ok(),
        iterations: trace.len(),
        accepts: trace.len(),
        rejects: 0,
        status,
        failure,
        trace,
        elapsed: started.elapsed(),
    };
    while !sketch.is_complete() {
        let over_time = limits.time_budget.is_some_and(|b| started.elapsed() >= b);
        if trace.len() >= limits.max_iterations || over_time {
            return Ok(outcome(sketch, trace, BatchStatus::Timeout, None));
        }
        let sk = Skeleton::compile(
            &sketch,
            &catalog,
            &theta,
            S::lit(config.lambda),
            config.sampler.max_join_depth,
        );
        let found = sk
            .ok()
            .and_then(|sk| candidate_questions(&sk, &catalog, &[]).ok())
            .and_then(|cs| cs.into_iter().find(|q| matches(&q.sketch, truth)));
        let Some(q) = found else {
            let failure = Failure {
                kind: FailureKind::NoCandidates,
                message: "no candidate question leads to the ground truth".into(),
                negatives: Vec::new(),
            };
            return Ok(outcome(sketch, trace, BatchStatus::Failed, Some(failure)));
        };
        trace.push(TraceRecord {
            step: trace.len() + 1,
            sketch: print_sketch(&sketch),
            question: q.summary(),
            result: print_sketch(&q.sketch),
            answer: true,
            pi_plus_hat: 1.0,
            score: 0.0,
        });
        sketch = q.sketch;
    }
    Ok(outcome(sketch, trace, BatchStatus::Complete, None))
}

/// The iteration bound `(n + m) · |P̄*|²` for `n` tables and `m` columns.
pub fn iteration_bound(catalog: &Catalog, truth: &Completion) -> usize {
    (catalog.table_count() + catalog.column_count()) * truth.size().pow(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::tests::{library, library_dir};
    use crate::lang::{derives, parse_completion};

    fn read(name: &str) -> String {
        std::fs::read_to_string(library_dir().join(name)).unwrap()
    }

    fn small() -> EngineConfig {
        EngineConfig {
            sampler: SamplerConfig {
                sample_count: 40,
                mh_steps: 60,
                seed: 3,
                ..SamplerConfig::default()
            },
            lambda: 0.0,
        }
    }

    #[test]
    fn hole_free_sketch_completes_immediately() {
        let cat = Arc::new(library());
        let s = Session::<f64>::start_text(cat, &read("author.truth"), small()).unwrap();
        assert_eq!(s.status(), Status::Complete);
        assert!(s.pending().is_none());
        assert!(s.completion().is_some());
    }

    #[test]
    fn author_sketch_reaches_the_ground_truth() {
        let cat = Arc::new(library());
        let p = parse_sketch(&read("author.sketch"), &cat).unwrap();
        let truth = parse_completion(&read("author.truth"), &cat).unwrap();
        let out = run_batch::<f64>(cat.clone(), &p, &truth, &small(), Mode::Full, &BatchLimits::default()).unwrap();
        assert_eq!(out.status, BatchStatus::Complete);
        assert_eq!(out.completion.as_ref(), Some(&truth));
        assert!(out.iterations <= iteration_bound(&cat, &truth));
        assert_eq!(out.trace.len(), out.iterations);
    }

    #[test]
    fn perfect_mode_counts_filled_holes() {
        let cat = Arc::new(library());
        let p = parse_sketch(&read("author.sketch"), &cat).unwrap();
        let truth = parse_completion(&read("author.truth"), &cat).unwrap();
        let out = run_batch::<f64>(cat, &p, &truth, &small(), Mode::Perfect, &BatchLimits::default()).unwrap();
        // c_name, c_year, then the three-table chain as an open join and its tail.
        assert_eq!(out.iterations, 4);
        assert_eq!(out.rejects, 0);
        assert_eq!(out.completion, Some(truth));
    }

    #[test]
    fn ground_truth_must_derive_from_sketch() {
        let cat = Arc::new(library());
        let p = parse_sketch("SELECT authors.aid FROM (??t:table)", &cat).unwrap();
        let truth = parse_completion(&read("author.truth"), &cat).unwrap();
        let err = run_batch::<f64>(cat, &p, &truth, &small(), Mode::Full, &BatchLimits::default()).unwrap_err();
        assert!(matches!(err, EngineError::GroundTruthNotDerivable));
    }

    #[test]
    fn undo_restores_previous_states_exactly() {
        let cat = Arc::new(library());
        let mut s = Session::<f64>::start_text(cat, &read("author.sketch"), small()).unwrap();
        assert!(matches!(s.undo(), Err(EngineError::EmptyHistory)));
        let initial = s.state().clone();
        s.answer(true).unwrap();
        let one = s.state().clone();
        s.answer(false).unwrap();
        s.undo().unwrap();
        assert_eq!(*s.state(), one);
        s.undo().unwrap();
        assert_eq!(*s.state(), initial);
        // Replaying gives the same states again.
        s.answer(true).unwrap();
        assert_eq!(*s.state(), one);
    }

    #[test]
    fn rejections_exhaust_candidates_then_fail() {
        let cat = Arc::new(library());
        let mut s = Session::<f64>::start_text(cat, &read("author.sketch"), small()).unwrap();
        let mut rounds = 0;
        while s.status() == Status::AwaitingAnswer {
            let q = s.pending().unwrap().question.clone();
            s.answer(false).unwrap();
            assert!(s.state().negatives.contains(&q));
            if let Some(p) = s.pending() {
                for n in &s.state().negatives {
                    assert!(!derives(&n.sketch, &p.question.sketch));
                }
            }
            rounds += 1;
            assert!(rounds < 100);
        }
        assert_eq!(s.status(), Status::Failed);
        let f = s.state().failure.as_ref().unwrap();
        assert!(matches!(f.kind, FailureKind::NoCandidates | FailureKind::RejectionExhausted | FailureKind::NoValidExpansion));
        assert!(matches!(s.answer(true), Err(EngineError::SessionFailed(_))));
    }

    #[test]
    fn accept_drops_negatives_on_filled_holes() {
        let cat = Arc::new(library());
        let mut s = Session::<f64>::start_text(cat, &read("author.sketch"), small()).unwrap();
        let first = s.pending().unwrap().question.clone();
        s.answer(false).unwrap();
        let target = first.seq.target.clone();
        // Accept until the rejected question's hole is filled.
        while s.status() == Status::AwaitingAnswer && s.sketch().holes().iter().any(|h| h.name == target) {
            s.answer(true).unwrap();
        }
        assert!(s.state().negatives.iter().all(|n| n.seq.target != target));
    }

    #[test]
    fn complete_session_rejects_answers() {
        let cat = Arc::new(library());
        let mut s = Session::<f64>::start_text(cat, &read("author.truth"), small()).unwrap();
        assert!(matches!(s.answer(true), Err(EngineError::SessionComplete)));
    }

    #[test]
    fn snapshot_round_trip() {
        let cat = Arc::new(library());
        let mut s = Session::<f64>::start_text(cat.clone(), &read("author.sketch"), small()).unwrap();
        s.answer(true).unwrap();
        let json = s.to_json();
        let mut r = Session::<f64>::from_json(cat, &json).unwrap();
        assert_eq!(r.state(), s.state());
        assert_eq!(r.history(), s.history());
        s.answer(false).unwrap();
        r.answer(false).unwrap();
        assert_eq!(r.state(), s.state());
        assert_eq!(s.trace_jsonl().lines().count(), 2);
    }
}
