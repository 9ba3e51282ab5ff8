use std::time::Instant;

use super::manager::{evaluate, Manager, ManagerSetup};
use super::{Actor, Result, RunMode, RunOptions, RunSummary, RuntimeError, Session, TrainSettings};
use crate::config::ConfigTree;
use crate::envs::build_env;
use crate::logging::{
    load_checkpoint, make_run_dir, MetricRecord, MetricsWriter, TrajectoryWriter,
};

pub(crate) fn spawn_manager(tree: &ConfigTree, settings: &TrainSettings, session: &Session, opts: &RunOptions) -> Result<Manager> {
    Ok(Manager::spawn(ManagerSetup {
        policy: session.agent.policy(),
        env: build_env(&tree.env)?,
        episodes: settings.eval_iteration,
        seed: settings.seed,
        run_dir: session.run_dir.clone(),
        clock: session.clock.clone(),
        stop_score: opts.stop_score,
    })?)
}

/// One actor interleaved with the learner: act, store, learn, every step.
pub(crate) fn run_single(tree: &ConfigTree, settings: &TrainSettings, opts: &RunOptions) -> Result<RunSummary> {
    let mut session = Session::open(tree, settings, opts)?;
    let manager = spawn_manager(tree, settings, &session, opts)?;
    let mut actor = Actor::new(0, build_env(&tree.env)?, session.agent.policy(), settings.seed, 1)
        .with_faults(opts.stall, opts.failure);
    let started = Instant::now();
    let mut losses = Vec::new();
    let mut checkpoints = Vec::new();
    let (mut last_eval, mut last_save) = (0, 0);
    let mut step = 0;
    while step < settings.run_step {
        let t = actor.step()?;
        if let Some(tap) = &opts.tap {
            let _ = tap.send((0, t.clone()));
        }
        let before = session.agent.learn_count();
        if let Some(stats) = session.agent.process(0, vec![t])? {
            losses.push(stats.loss);
        }
        if session.agent.learn_count() != before {
            actor.set_params(&session.agent.policy_params())?;
        }
        step += 1;
        if step % settings.print_period == 0 {
            session.log_train(step, &mut losses)?;
            let final_eval = step == settings.run_step;
            manager.request(step, session.agent.policy_params(), final_eval || step % settings.save_period == 0);
            last_eval = step;
        }
        if step % settings.save_period == 0 {
            checkpoints.push(session.checkpoint(step)?);
            last_save = step;
        }
        if manager.should_stop() || opts.time_limit.is_some_and(|l| started.elapsed() >= l) {
            break;
        }
    }
    if last_eval != step {
        manager.request(step, session.agent.policy_params(), true);
    }
    if last_save != step {
        checkpoints.push(session.checkpoint(step)?);
    }
    let evals = manager.finish();
    Ok(RunSummary {
        mode: RunMode::Single,
        run_dir: session.run_dir,
        steps: step,
        learner_updates: session.agent.learn_count(),
        rounds: Vec::new(),
        consumed: Vec::new(),
        evals,
        checkpoints,
        final_version: session.agent.learn_count(),
        workers: 1,
    })
}

/// Scores the checkpoint at `train.load_path` without training or writing
/// checkpoints.
pub(crate) fn run_eval(tree: &ConfigTree, settings: &TrainSettings, opts: &RunOptions) -> Result<RunSummary> {
    let path = settings
        .load_path
        .as_ref()
        .ok_or_else(|| RuntimeError::Parameter("evaluation needs train.load_path".into()))?;
    let mut env = build_env(&tree.env)?;
    let mut agent = crate::agents::build_agent(tree, env.spec(), settings.seed)?;
    let ckpt = load_checkpoint(path)?;
    crate::logging::apply_checkpoint(agent.as_mut(), &ckpt)?;
    let run_dir = make_run_dir(&opts.logs_root, &env.spec().name, agent.name(), opts.clock.as_ref(), tree)?;
    let mut policy = agent.policy();
    let mut writer = TrajectoryWriter::create(&run_dir.trajectory_path(ckpt.step))?;
    let outcome = evaluate(policy.as_mut(), env.as_mut(), settings.eval_iteration, settings.seed, ckpt.step, Some(&mut writer))?;
    writer.finish()?;
    let mut log = MetricsWriter::open(&run_dir.eval_metrics_path())?;
    log.append(&MetricRecord {
        step: ckpt.step,
        name: "score".into(),
        value: outcome.mean,
        wall_time: opts.clock.elapsed(),
    })?;
    log::info!("evaluated {} at step {}: score {:.2}", path.display(), ckpt.step, outcome.mean);
    Ok(RunSummary {
        mode: RunMode::Eval,
        run_dir,
        steps: 0,
        learner_updates: 0,
        rounds: Vec::new(),
        consumed: Vec::new(),
        evals: vec![(ckpt.step, outcome.mean)],
        checkpoints: Vec::new(),
        final_version: 0,
        workers: 0,
    })
}
