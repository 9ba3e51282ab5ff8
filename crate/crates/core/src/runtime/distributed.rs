use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::mpsc::{channel, sync_channel, Receiver, RecvTimeoutError, Sender, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::manager::Manager;
use super::single::spawn_manager;
use super::{
    Actor, ConsumedBatch, ParamUpdateMsg, Result, RunMode, RunOptions, RunSummary, RuntimeError, Session,
    TrainSettings, TransitionBatchMsg,
};
use crate::agents::LearnCadence;
use crate::config::ConfigTree;
use crate::envs::build_env;

enum ActorMsg {
    Batch(TransitionBatchMsg),
    Failed { actor_id: usize, message: String },
}

/// Actor threads. Each produces a block, sends it, then waits for new
/// parameters before the next block.
struct Pool {
    rx: Option<Receiver<ActorMsg>>,
    param_txs: Vec<Sender<ParamUpdateMsg>>,
    handles: Vec<JoinHandle<()>>,
}

impl Pool {
    fn spawn(tree: &ConfigTree, settings: &TrainSettings, session: &Session, opts: &RunOptions) -> Result<Self> {
        let n = settings.num_workers;
        let (tx, rx) = sync_channel::<ActorMsg>(n);
        let mut param_txs = Vec::with_capacity(n);
        let mut handles = Vec::with_capacity(n);
        for id in 0..n {
            let actor = Actor::new(id, build_env(&tree.env)?, session.agent.policy(), settings.seed, n)
                .with_faults(opts.stall, opts.failure);
            let (ptx, prx) = channel();
            param_txs.push(ptx);
            let tx = tx.clone();
            let block = settings.update_period;
            handles.push(
                std::thread::Builder::new()
                    .name(format!("actor-{id}"))
                    .spawn(move || actor_loop(actor, block, tx, prx))
                    .expect("spawn actor thread"),
            );
        }
        Ok(Self {
            rx: Some(rx),
            param_txs,
            handles,
        })
    }

    fn rx(&self) -> &Receiver<ActorMsg> {
        self.rx.as_ref().expect("open until drop")
    }

    fn reply(&self, actor_id: usize, msg: ParamUpdateMsg) {
        let _ = self.param_txs[actor_id].send(msg);
    }
}

impl Drop for Pool {
    fn drop(&mut self) {
        self.param_txs.clear();
        self.rx.take();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

fn actor_loop(mut actor: Actor, block: usize, tx: SyncSender<ActorMsg>, params: Receiver<ParamUpdateMsg>) {
    let id = actor.id;
    let body = catch_unwind(AssertUnwindSafe(|| -> Result<()> {
        let mut version = 0;
        loop {
            let transitions = actor.run_block(block)?;
            let msg = TransitionBatchMsg {
                actor_id: id,
                transitions,
                actor_step: actor.steps(),
                param_version: version,
            };
            if tx.send(ActorMsg::Batch(msg)).is_err() {
                return Ok(());
            }
            match params.recv() {
                Ok(p) => {
                    actor.set_params(&p.params)?;
                    version = p.version;
                }
                Err(_) => return Ok(()),
            }
        }
    }));
    let failure = match body {
        Ok(Ok(())) => None,
        Ok(Err(RuntimeError::Actor { message, .. })) => Some(message),
        Ok(Err(e)) => Some(e.to_string()),
        Err(panic) => Some(
            panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panicked".into()),
        ),
    };
    if let Some(message) = failure {
        let _ = tx.send(ActorMsg::Failed { actor_id: id, message });
    }
}

fn unwrap_msg(msg: ActorMsg) -> Result<TransitionBatchMsg> {
    match msg {
        ActorMsg::Batch(b) => Ok(b),
        ActorMsg::Failed { actor_id, message } => Err(RuntimeError::Actor { actor_id, message }),
    }
}

fn all_actors_gone() -> RuntimeError {
    RuntimeError::Parameter("every actor disconnected".into())
}

/// Learner-side bookkeeping shared by both distributed modes.
struct Learner<'a> {
    session: Session,
    manager: Manager,
    settings: &'a TrainSettings,
    opts: &'a RunOptions,
    started: Instant,
    step: u64,
    version: u64,
    losses: Vec<f64>,
    rounds: Vec<usize>,
    consumed: Vec<ConsumedBatch>,
    checkpoints: Vec<PathBuf>,
    last_eval: u64,
    last_save: u64,
}

impl<'a> Learner<'a> {
    fn new(tree: &ConfigTree, settings: &'a TrainSettings, opts: &'a RunOptions) -> Result<Self> {
        let mut session = Session::open(tree, settings, opts)?;
        session.agent.set_cadence(LearnCadence::PerBatch);
        let manager = spawn_manager(tree, settings, &session, opts)?;
        Ok(Self {
            session,
            manager,
            settings,
            opts,
            started: Instant::now(),
            step: 0,
            version: 0,
            losses: Vec::new(),
            rounds: Vec::new(),
            consumed: Vec::new(),
            checkpoints: Vec::new(),
            last_eval: 0,
            last_save: 0,
        })
    }

    fn out_of_time(&self) -> bool {
        self.opts.time_limit.is_some_and(|l| self.started.elapsed() >= l)
    }

    fn done(&self) -> bool {
        self.step >= self.settings.run_step || self.manager.should_stop() || self.out_of_time()
    }

    fn consume(&mut self, msg: TransitionBatchMsg) -> Result<()> {
        if let Some(tap) = &self.opts.tap {
            for t in &msg.transitions {
                let _ = tap.send((msg.actor_id, t.clone()));
            }
        }
        self.consumed.push(ConsumedBatch {
            actor_id: msg.actor_id,
            len: msg.transitions.len(),
            actor_step: msg.actor_step,
            param_version: msg.param_version,
            learner_version: self.version,
        });
        let before = self.step;
        self.step += msg.transitions.len() as u64;
        if let Some(stats) = self.session.agent.process(msg.actor_id, msg.transitions)? {
            self.losses.push(stats.loss);
        }
        let (pp, sp) = (self.settings.print_period, self.settings.save_period);
        if self.step / pp != before / pp {
            self.session.log_train(self.step, &mut self.losses)?;
            let traj = self.step / sp != before / sp || self.step >= self.settings.run_step;
            self.manager.request(self.step, self.session.agent.policy_params(), traj);
            self.last_eval = self.step;
        }
        if self.step / sp != before / sp {
            self.checkpoints.push(self.session.checkpoint(self.step)?);
            self.last_save = self.step;
        }
        Ok(())
    }

    fn publish(&mut self) -> ParamUpdateMsg {
        self.version += 1;
        ParamUpdateMsg {
            version: self.version,
            params: Arc::new(self.session.agent.policy_params()),
        }
    }

    fn finish(mut self, mode: RunMode) -> Result<RunSummary> {
        if self.last_eval != self.step {
            self.manager.request(self.step, self.session.agent.policy_params(), true);
        }
        if self.last_save != self.step {
            self.checkpoints.push(self.session.checkpoint(self.step)?);
        }
        let evals = self.manager.finish();
        Ok(RunSummary {
            mode,
            learner_updates: self.session.agent.learn_count(),
            run_dir: self.session.run_dir,
            steps: self.step,
            rounds: self.rounds,
            consumed: self.consumed,
            evals,
            checkpoints: self.checkpoints,
            final_version: self.version,
            workers: self.settings.num_workers,
        })
    }
}

/// Rounds behind a full barrier: every actor contributes one block per
/// round, all produced under the same parameter version.
pub(crate) fn run_sync(tree: &ConfigTree, settings: &TrainSettings, opts: &RunOptions) -> Result<RunSummary> {
    let mut learner = Learner::new(tree, settings, opts)?;
    let pool = Pool::spawn(tree, settings, &learner.session, opts)?;
    let n = settings.num_workers;
    while !learner.done() {
        let mut msgs = Vec::with_capacity(n);
        while msgs.len() < n {
            let msg = pool.rx().recv().map_err(|_| all_actors_gone())?;
            msgs.push(unwrap_msg(msg)?);
        }
        msgs.sort_by_key(|m| m.actor_id);
        learner.rounds.push(msgs.iter().map(|m| m.transitions.len()).sum());
        for m in msgs {
            learner.consume(m)?;
        }
        let update = learner.publish();
        for id in 0..n {
            pool.reply(id, update.clone());
        }
    }
    drop(pool);
    learner.finish(RunMode::Sync)
}

/// Time windows: after the first batch arrives the learner keeps collecting
/// until the window closes or every actor has reported, then replies only to
/// the actors it consumed from.
pub(crate) fn run_async(tree: &ConfigTree, settings: &TrainSettings, opts: &RunOptions) -> Result<RunSummary> {
    if !(settings.window_ms.is_finite() && settings.window_ms > 0.0) {
        return Err(RuntimeError::Parameter(format!(
            "train.window_ms must be positive, got {}",
            settings.window_ms
        )));
    }
    let window = Duration::from_secs_f64(settings.window_ms / 1000.0);
    let poll = Duration::from_millis(20);
    let mut learner = Learner::new(tree, settings, opts)?;
    let pool = Pool::spawn(tree, settings, &learner.session, opts)?;
    let n = settings.num_workers;
    'outer: while !learner.done() {
        let first = loop {
            match pool.rx().recv_timeout(poll) {
                Ok(m) => break m,
                Err(RecvTimeoutError::Timeout) if learner.out_of_time() => break 'outer,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return Err(all_actors_gone()),
            }
        };
        let deadline = Instant::now() + window;
        let mut msgs = vec![unwrap_msg(first)?];
        while msgs.len() < n {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            match pool.rx().recv_timeout(left) {
                Ok(m) => msgs.push(unwrap_msg(m)?),
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => return Err(all_actors_gone()),
            }
        }
        learner.rounds.push(msgs.iter().map(|m| m.transitions.len()).sum());
        let ids: Vec<usize> = msgs.iter().map(|m| m.actor_id).collect();
        for m in msgs {
            learner.consume(m)?;
        }
        let update = learner.publish();
        for id in ids {
            pool.reply(id, update.clone());
        }
    }
    drop(pool);
    learner.finish(RunMode::Async)
}
