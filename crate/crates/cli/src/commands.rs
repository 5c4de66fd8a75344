//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use return_landscape::connectivity::{
    aggregate_btp, btp, cross_run_pairs, interpolate_profile, same_run_pairs, EnvBtp, PairIndex, MIN_CHECKPOINT_GAP,
};
use return_landscape::env::{env_by_name, EnvSpec};
use return_landscape::failure::{race_curve, select_pair_resim};
use return_landscape::failure::ltp_over_states;
use return_landscape::io::checkpoint::{decode_checkpoint, encode_checkpoint};
use return_landscape::io::config::BcTeacher;
use return_landscape::io::csv::{self, Cell, Table};
use return_landscape::io::svg::{Axes, Plot};
use return_landscape::io::ExperimentConfig;
use return_landscape::landscape::{map_slice, zoom, LandscapeGrid};
use return_landscape::learner::{bc_clone, td3_train, Checkpoint, UpdateFamily};
use return_landscape::purd::{estimate_purd, scatter_entry};
use return_landscape::rng::RngStream;
use return_landscape::rollout::{PolicyReturn, ReturnFn};
use return_landscape::stabilizer::{ltp_reduction_report, rank_by_cvar, stabilize, ReductionEntry};
use return_landscape::stats::{ltp, mean, pearson, std_dev};
use return_landscape::{Error, Result};
use serde_json::{json, Value};

use crate::out::OutDir;
use crate::Opts;

pub fn run(name: &str, opts: &Opts) -> Result<String> {
    let cfg = opts.config(name)?;
    let root = PathBuf::from(&cfg.out_dir);
    let mut out = OutDir::create(&root.join(name))?;
    out.text("config.toml", &cfg.to_toml())?;
    let detail = match name {
        "train" => train(&cfg, &mut out)?,
        _ => {
            let ckpts = load_checkpoints(opts, &cfg, &root)?;
            match name {
                "purd" => purd(&cfg, &ckpts, &mut out)?,
                "map" => map(&cfg, &ckpts, &mut out)?,
                "interpolate" => interpolate(&cfg, &ckpts, &mut out)?,
                "failures" => failures(&cfg, &ckpts, &mut out)?,
                "stabilize" => stabilize_cmd(&cfg, &ckpts, &mut out)?,
                "clone" => clone_cmd(&cfg, &ckpts, &mut out)?,
                "rank" => rank(&cfg, &ckpts, &mut out)?,
                other => return Err(Error::InvalidConfig(format!("unknown subcommand `{other}`"))),
            }
        }
    };
    let files = out.finish()?;
    Ok(json!({ "command": name, "files": files, "config_hash": cfg.hash(), "detail": detail }).to_string())
}

fn collect_files(path: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        entries.sort();
        for e in entries {
            collect_files(&e, found)?;
        }
    } else if path.extension().is_some_and(|x| x == "ckpt") {
        found.push(path.to_path_buf());
    }
    Ok(())
}

/// Checkpoints from `--ckpt` or `<out>/train/checkpoints`, ordered by (env, seed, step).
fn load_checkpoints(opts: &Opts, cfg: &ExperimentConfig, root: &Path) -> Result<Vec<Checkpoint>> {
    let sources = if opts.ckpt.is_empty() { vec![root.join("train").join("checkpoints")] } else { opts.ckpt.clone() };
    let mut files = Vec::new();
    for s in &sources {
        if !s.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("checkpoint path {} does not exist", s.display()),
            )));
        }
        collect_files(s, &mut files)?;
    }
    let mut ckpts = files.iter().map(|f| Ok(decode_checkpoint(&fs::read(f)?)?)).collect::<Result<Vec<_>>>()?;
    if ckpts.is_empty() {
        return Err(Error::Empty("checkpoint files"));
    }
    if opts.env.is_some() {
        if let Some(c) = ckpts.iter().find(|c| c.env_name != cfg.env) {
            return Err(Error::Contract(format!("checkpoint {} is for {}, not {}", c.id(), c.env_name, cfg.env)));
        }
    }
    ckpts.sort_by(|a, b| (&a.env_name, a.seed, a.step).cmp(&(&b.env_name, b.seed, b.step)));
    ckpts.dedup_by(|a, b| a.env_name == b.env_name && a.seed == b.seed && a.step == b.step);
    Ok(ckpts)
}

fn by_env(ckpts: &[Checkpoint]) -> BTreeMap<String, Vec<&Checkpoint>> {
    let mut m: BTreeMap<String, Vec<&Checkpoint>> = BTreeMap::new();
    for c in ckpts {
        m.entry(c.env_name.clone()).or_default().push(c);
    }
    m
}

fn seed_for(cfg: &ExperimentConfig, what: &str, id: &str) -> u64 {
    RngStream::root(cfg.seed).child(what).child(id).key()
}

fn deterministic_return(env: &EnvSpec, ck: &Checkpoint) -> Result<f64> {
    Ok(PolicyReturn::new(env, &ck.shape)?.evaluate(&ck.actor))
}

fn train(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Value> {
    let env = cfg.env_spec()?;
    let hash = cfg.hash();
    let mut table = Table::new(&csv::TRAINING);
    let mut per_index: Vec<Vec<f64>> = Vec::new();
    let mut steps = Vec::new();
    let mut ids = Vec::new();
    for r in 0..cfg.runs {
        let seed = cfg.seed + r as u64;
        log::info!("training run {r} (seed {seed})");
        let res = td3_train(&env, &cfg.learner, seed, &hash)?;
        for (k, ck) in res.checkpoints.iter().enumerate() {
            out.bytes(&format!("checkpoints/run{r}/{}.ckpt", ck.id()), &encode_checkpoint(ck)?)?;
            let ret = deterministic_return(&env, ck)?;
            table.push(vec![ck.id().into(), r.into(), ck.step.into(), ret.into()])?;
            if per_index.len() <= k {
                per_index.push(Vec::new());
                steps.push(ck.step as f64);
            }
            per_index[k].push(ret);
            ids.push(ck.id());
        }
    }
    out.csv("training.csv", &table)?;
    let ys: Vec<f64> = per_index.iter().map(|v| mean(v)).collect();
    let band: Vec<f64> = per_index.iter().map(|v| if v.len() > 1 { std_dev(v) } else { 0.0 }).collect();
    out.svg(
        "training.svg",
        &Plot::LineBand { axes: Axes::new(&format!("TD3 on {}", env.name), "environment steps", "return"), xs: steps, ys, band: Some(band) },
    )?;
    Ok(json!({ "env": env.name, "runs": cfg.runs, "checkpoints": ids }))
}

fn purd(cfg: &ExperimentConfig, ckpts: &[Checkpoint], out: &mut OutDir) -> Result<Value> {
    let fam = cfg.update.family(None)?;
    let stats_cfg = cfg.analysis.stats();
    let mut table = Table::new(&csv::SCATTER);
    let mut rows = Vec::new();
    for ck in ckpts {
        let env = env_by_name(&ck.env_name)?;
        let (row, set) = scatter_entry(ck, &fam, cfg.analysis.n, &env, cfg.seed, &stats_cfg)?;
        let s = &row.stats;
        table.push(vec![
            row.checkpoint_id.clone().into(),
            row.step.into(),
            s.n.into(),
            s.mean.into(),
            s.std.into(),
            s.skewness.into(),
            s.mode.into(),
            s.ltp.into(),
            s.ltp.is_some().into(),
            s.cvar.into(),
            s.bootstrap.as_ref().map(|b| b.mean_ci.0).into(),
            s.bootstrap.as_ref().map(|b| b.mean_ci.1).into(),
        ])?;
        let mut samples = Table::new(&csv::SAMPLES);
        for (i, v) in set.samples.iter().enumerate() {
            samples.push(vec![i.into(), (*v).into()])?;
        }
        let id = &row.checkpoint_id;
        out.csv(&format!("samples/{}-{id}.csv", ck.env_name), &samples)?;
        out.svg(
            &format!("samples/{}-{id}.svg", ck.env_name),
            &Plot::Histogram {
                axes: Axes::new(&format!("post-update returns, {id}"), "return", "count"),
                samples: set.samples.clone(),
                bins: 50,
            },
        )?;
        rows.push(json!({ "env": ck.env_name, "row": row }));
    }
    out.csv("scatter.csv", &table)?;
    out.json("scatter.json", &rows)?;
    let pick = |f: &dyn Fn(&Value) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter_map(|r| Some((r["row"]["stats"]["mean"].as_f64()?, f(r)?))).collect()
    };
    for (name, key) in [("std", "std"), ("skewness", "skewness"), ("ltp", "ltp")] {
        let points = pick(&|r: &Value| r["row"]["stats"][key].as_f64());
        out.svg(
            &format!("scatter_{name}.svg"),
            &Plot::Scatter { axes: Axes::new("post-update return distributions", "mean return", name), points, highlight: vec![] },
        )?;
    }
    Ok(json!({ "checkpoints": ckpts.len(), "family": fam.name() }))
}

fn grid_outputs(out: &mut OutDir, prefix: &str, g: &LandscapeGrid, title: &str) -> Result<()> {
    let mut t = Table::new(&csv::GRID);
    for c in g.cells() {
        t.push(vec![c.alpha.into(), c.beta.into(), c.value.into()])?;
    }
    out.csv(&format!("{prefix}.csv"), &t)?;
    out.svg(
        &format!("{prefix}.svg"),
        &Plot::Heatmap {
            axes: Axes::new(title, "alpha (update 1)", "beta (update 2)"),
            xs: g.alphas.clone(),
            ys: g.betas.clone(),
            values: g.returns.clone(),
        },
    )
}

fn map(cfg: &ExperimentConfig, ckpts: &[Checkpoint], out: &mut OutDir) -> Result<Value> {
    let fam = cfg.update.family(None)?;
    let a = &cfg.analysis;
    let mut summary = Vec::new();
    for ck in ckpts {
        let env = env_by_name(&ck.env_name)?;
        let id = format!("{}-{}", ck.env_name, ck.id());
        let mut g = map_slice(ck, &fam, a.grid_res, a.range, &env, seed_for(cfg, "map", &ck.id()))?;
        grid_outputs(out, &format!("{id}/grid"), &g, &format!("return landscape, {}", ck.id()))?;
        let mut windows = vec![g.range];
        for (k, f) in a.zoom.iter().enumerate() {
            g = zoom(&g, *f, &env, &ck.shape)?;
            windows.push(g.range);
            grid_outputs(out, &format!("{id}/zoom{}", k + 1), &g, &format!("zoom {}, {}", k + 1, ck.id()))?;
        }
        summary.push(json!({
            "checkpoint": ck.id(),
            "env": ck.env_name,
            "origin_return": g.at(0.0, 0.0),
            "degenerate": g.degenerate,
            "windows": windows,
        }));
    }
    out.json("slices.json", &summary)?;
    Ok(json!({ "checkpoints": ckpts.len(), "family": fam.name() }))
}

fn interpolate(cfg: &ExperimentConfig, ckpts: &[Checkpoint], out: &mut OutDir) -> Result<Value> {
    let icfg = cfg.analysis.interp();
    let mut table = Table::new(&csv::BTP);
    let mut per_env: BTreeMap<String, EnvBtp> = BTreeMap::new();
    for (env_name, cks) in by_env(ckpts) {
        let env = env_by_name(&env_name)?;
        let mut runs: BTreeMap<u64, Vec<&Checkpoint>> = BTreeMap::new();
        for c in cks {
            runs.entry(c.seed).or_default().push(c);
        }
        let runs: Vec<Vec<&Checkpoint>> = runs.into_values().collect();
        let lens: Vec<usize> = runs.iter().map(Vec::len).collect();
        let pair_rng = RngStream::root(cfg.seed).child("pairs").child(&env_name);
        let same = same_run_pairs(&lens, cfg.analysis.pairs, MIN_CHECKPOINT_GAP, &mut pair_rng.child("same"));
        let diff = cross_run_pairs(&lens, cfg.analysis.pairs, &mut pair_rng.child("diff"));
        let entry = per_env.entry(env_name.clone()).or_default();
        for (cond, pairs) in [("same-run", &same), ("diff-run", &diff)] {
            for (k, p) in pairs.iter().enumerate() {
                let PairIndex { run_a, ckpt_a, run_b, ckpt_b } = *p;
                let (a, b) = (runs[run_a][ckpt_a], runs[run_b][ckpt_b]);
                let seed = RngStream::root(cfg.seed).child("interp").child(&env_name).child(cond).indexed(k as u64).key();
                let prof = interpolate_profile(a, b, &icfg, &env, seed)?;
                let value = btp(&prof, icfg.threshold_frac);
                table.push(vec![env_name.clone().into(), cond.into(), a.id().into(), b.id().into(), value.into()])?;
                if cond == "same-run" {
                    entry.same_run.push(value);
                } else {
                    entry.diff_run.push(value);
                }
                let mut pt = Table::new(&csv::PROFILE);
                for i in 0..prof.len() {
                    let sd = prof.stds.as_ref().map(|s| s[i]);
                    pt.push(vec![prof.alphas[i].into(), prof.returns[i].into(), sd.into(), prof.collapse_flags[i].into()])?;
                }
                let stem = format!("profiles/{env_name}/{cond}-{k:03}");
                out.csv(&format!("{stem}.csv"), &pt)?;
                if k == 0 {
                    out.svg(
                        &format!("{stem}.svg"),
                        &Plot::LineBand {
                            axes: Axes::new(&format!("{} to {}", a.id(), b.id()), "interpolation coefficient", "return"),
                            xs: prof.alphas.clone(),
                            ys: prof.returns.clone(),
                            band: prof.stds.clone(),
                        },
                    )?;
                }
            }
        }
    }
    out.csv("btp.csv", &table)?;
    let complete = per_env.values().all(|e| !e.same_run.is_empty() && !e.diff_run.is_empty());
    let report = if complete {
        json!(aggregate_btp(&per_env, cfg.analysis.n_boot, cfg.seed)?)
    } else {
        log::warn!("some environment lacks same-run or cross-run pairs; no aggregate reported");
        Value::Null
    };
    out.json("btp.json", &json!({ "per_pair": per_env, "aggregate": report }))?;
    Ok(json!({ "pairs": table.rows.len() }))
}

fn failures(cfg: &ExperimentConfig, ckpts: &[Checkpoint], out: &mut OutDir) -> Result<Value> {
    let fam = cfg.update.family(None)?;
    let a = &cfg.analysis;
    let mut summary = Vec::new();
    for ck in ckpts {
        let env = env_by_name(&ck.env_name)?;
        let id = ck.id();
        let dir = format!("{}-{id}", ck.env_name);
        let seed = seed_for(cfg, "failures", &id);
        let set = estimate_purd(ck, &fam, a.n, &env, seed, None, false)?;
        let l = ltp(&set.samples, a.ltp_alpha, env.return_lower_bound());
        let eligible = l.is_some_and(|v| v * set.len() as f64 >= 1.0);
        let mut entry = json!({ "checkpoint": id, "env": ck.env_name, "ltp": l, "eligible": eligible });
        match select_pair_resim(&set, ck, &fam, &env)? {
            Err(reason) => entry["pair"] = json!({ "none": reason }),
            Ok(pair) => {
                let curve = race_curve(&pair.successful, &pair.failing);
                let mut rt = Table::new(&csv::RACE);
                for (t, (s, f)) in curve.points.iter().enumerate() {
                    rt.push(vec![(t + 1).into(), (*s).into(), (*f).into()])?;
                }
                out.csv(&format!("{dir}/race.csv"), &rt)?;
                out.svg(
                    &format!("{dir}/race.svg"),
                    &Plot::RaceCurve { axes: Axes::new(&format!("race curve, {id}"), "successful R<=t", "failing R<=t"), points: curve.points },
                )?;
                let (sr, fr) = (&pair.successful.rewards, &pair.failing.rewards);
                let mut wt = Table::new(&csv::REWARDS);
                for t in 0..sr.len().max(fr.len()) {
                    wt.push(vec![(t + 1).into(), sr.get(t).copied().into(), fr.get(t).copied().into()])?;
                }
                out.csv(&format!("{dir}/rewards.csv"), &wt)?;
                for (which, rewards) in [("successful", sr), ("failing", fr)] {
                    out.svg(
                        &format!("{dir}/rewards_{which}.svg"),
                        &Plot::LineBand {
                            axes: Axes::new(&format!("{which} episode, {id}"), "time step", "reward"),
                            xs: (1..=rewards.len()).map(|t| t as f64).collect(),
                            ys: rewards.clone(),
                            band: None,
                        },
                    )?;
                }
                entry["pair"] = json!({
                    "choice": pair.choice,
                    "successful_return": pair.successful.total_return(),
                    "failing_return": pair.failing.total_return(),
                    "failing_terminated_at": pair.failing.terminated_at,
                });
            }
        }
        if let Some(st) = &ck.state {
            let rows = ltp_over_states(ck, &fam, &st.buffer, a.stride, a.state_n, a.ltp_alpha, &env, seed)?;
            let mut t = Table::new(&csv::STATE_LTP);
            for r in &rows {
                t.push(vec![r.buffer_index.into(), r.ltp.into(), r.ltp.is_some().into()])?;
            }
            out.csv(&format!("{dir}/state_ltp.csv"), &t)?;
        }
        summary.push(entry);
    }
    out.json("pairs.json", &summary)?;
    Ok(json!({ "checkpoints": ckpts.len() }))
}

fn stabilize_cmd(cfg: &ExperimentConfig, ckpts: &[Checkpoint], out: &mut OutDir) -> Result<Value> {
    let learners: Vec<&Checkpoint> = ckpts.iter().filter(|c| c.state.is_some()).collect();
    if learners.is_empty() {
        return Err(Error::MissingLearnerState("stabilize"));
    }
    let mut traces = Vec::new();
    let mut entries = Vec::new();
    let mut arrows: BTreeMap<bool, Vec<((f64, f64), (f64, f64))>> = BTreeMap::new();
    for ck in learners {
        let env = env_by_name(&ck.env_name)?;
        let seed = seed_for(cfg, "stabilize", &ck.id());
        for enabled in [true, false] {
            let rc = return_landscape::stabilizer::RejectionConfig { rejection_enabled: enabled, ..cfg.rejection.clone() };
            let (_, trace) = stabilize(ck, &rc, &env, seed)?;
            let mut t = Table::new(&csv::TRACE);
            for (k, r) in trace.records.iter().enumerate() {
                t.push(vec![k.into(), r.accepted.into(), r.cvar_before.into(), r.cvar_after.into()])?;
            }
            let cond = if enabled { "rejection" } else { "baseline" };
            out.csv(&format!("traces/{}-{}-{cond}.csv", ck.env_name, ck.id()), &t)?;
            if let Some(e) = ReductionEntry::from_trace(&ck.env_name, &trace) {
                entries.push(e);
            }
            if let (Some(lb), Some(la)) = (trace.ltp_before, trace.ltp_after) {
                arrows.entry(enabled).or_default().push(((trace.mean_before, lb), (trace.mean_after, la)));
            }
            traces.push(json!({ "env": ck.env_name, "trace": trace }));
        }
    }
    out.json("traces.json", &traces)?;
    let report = if entries.is_empty() { Value::Null } else { json!(ltp_reduction_report(&entries, cfg.analysis.n_boot, cfg.seed)?) };
    out.json("reduction.json", &report)?;
    for (enabled, pairs) in arrows {
        let cond = if enabled { "rejection" } else { "baseline" };
        out.svg(
            &format!("arrows_{cond}.svg"),
            &Plot::Arrows { axes: Axes::new(&format!("before and after, {cond}"), "mean return", "left-tail probability"), pairs },
        )?;
    }
    Ok(json!({ "traces": traces.len() }))
}

fn clone_cmd(cfg: &ExperimentConfig, ckpts: &[Checkpoint], out: &mut OutDir) -> Result<Value> {
    let teachers: Vec<&Checkpoint> = ckpts.iter().filter(|c| c.state.is_some()).collect();
    if teachers.is_empty() {
        return Err(Error::MissingLearnerState("clone"));
    }
    let teacher_fam = cfg.update.family(None)?;
    let a = &cfg.analysis;
    let mut rows = Vec::new();
    let (mut tm, mut sm, mut tl, mut sl) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in teachers {
        let env = env_by_name(&t.env_name)?;
        let st = t.state.as_deref().expect("filtered");
        let student = bc_clone(t, &st.buffer, &cfg.bc, seed_for(cfg, "clone", &t.id()))?;
        let states: Vec<f64> = (0..st.buffer.len()).flat_map(|i| st.buffer.state_at(i).expect("index below len").to_vec()).collect();
        let teacher = BcTeacher { shape: Arc::new(t.shape.clone()), actor: Arc::new(t.actor.clone()), states: Arc::new(states) };
        let student_fam = UpdateFamily::BcMinibatch {
            teacher_shape: teacher.shape,
            teacher: teacher.actor,
            states: teacher.states,
            batch_size: cfg.bc.batch_size,
            lr: cfg.bc.lr,
        };
        let lb = env.return_lower_bound();
        let ts = estimate_purd(t, &teacher_fam, a.n, &env, seed_for(cfg, "clone-teacher", &t.id()), None, false)?;
        let ss = estimate_purd(&student, &student_fam, a.n, &env, seed_for(cfg, "clone-student", &t.id()), None, false)?;
        let (tlv, slv) = (ltp(&ts.samples, a.ltp_alpha, lb), ltp(&ss.samples, a.ltp_alpha, lb));
        out.bytes(&format!("students/{}-{}.ckpt", t.env_name, t.id()), &encode_checkpoint(&student)?)?;
        tm.push(mean(&ts.samples));
        sm.push(mean(&ss.samples));
        if let (Some(x), Some(y)) = (tlv, slv) {
            tl.push(x);
            sl.push(y);
        }
        rows.push(json!({
            "env": t.env_name,
            "teacher": t.id(),
            "teacher_mean": mean(&ts.samples),
            "student_mean": mean(&ss.samples),
            "teacher_ltp": tlv,
            "student_ltp": slv,
        }));
    }
    let r = |x: &[f64], y: &[f64]| if x.len() >= 2 { pearson(x, y).ok() } else { None };
    out.json("clone.json", &json!({ "pairs": rows, "pearson_mean": r(&tm, &sm), "pearson_ltp": r(&tl, &sl) }))?;
    Ok(json!({ "students": rows.len() }))
}

fn rank(cfg: &ExperimentConfig, ckpts: &[Checkpoint], out: &mut OutDir) -> Result<Value> {
    let fam = cfg.update.family(None)?;
    let mut table = Table::new(&csv::RANK);
    let mut all = Vec::new();
    for (env_name, cks) in by_env(ckpts) {
        let env = env_by_name(&env_name)?;
        let owned: Vec<Checkpoint> = cks.into_iter().cloned().collect();
        let ranked = rank_by_cvar(&owned, &fam, cfg.analysis.n, cfg.analysis.cvar_alpha, &env, cfg.seed)?;
        for (k, (id, c)) in ranked.iter().enumerate() {
            table.push(vec![(k + 1).into(), env_name.clone().into(), id.clone().into(), Cell::Real(*c)])?;
        }
        all.push(json!({ "env": env_name, "alpha": cfg.analysis.cvar_alpha, "ranking": ranked }));
    }
    out.csv("rank.csv", &table)?;
    out.json("rank.json", &all)?;
    Ok(json!({ "ranked": table.rows.len() }))
}
