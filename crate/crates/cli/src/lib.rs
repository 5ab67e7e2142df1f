//! Experiment driver behind the `sensel` command.
//!
//! [`run`] turns a [`Config`] into a [`Report`]; the binary only parses
//! arguments and writes the report.

pub mod config;
mod pool;
pub mod report;

use std::time::Instant;

use anyhow::{bail, Context};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

use sensel::evaluation::{
    binomial, clique_value, estimate_roc, exhaustive_opt, exhaustive_values, hardness_instance, interpolate_pd, subsets,
    SimpleGraph,
};
use sensel::generate::generate_instance;
use sensel::meandiff::{md_c, md_kl};
use sensel::rounding::{r_c, r_kl, worst_case};
use sensel::{chernoff_distance, kl_distance, Criterion, PipelineParams, PipelineResult, ProblemInstance, SelectionMatrix};

pub use config::{AlgorithmArg, Config, CriterionArg, Format, KRuleArg, Mode};
pub use report::Report;

use report::number;

/// Points of the P_FA grid on which ROC envelopes are reported.
pub const ENVELOPE_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Robust,
    MeanDiff,
}

#[derive(Debug, Clone, Copy)]
struct Solver {
    family: Family,
    criterion: Criterion,
}

impl Solver {
    fn name(&self) -> String {
        let prefix = match self.family {
            Family::Robust => "R",
            Family::MeanDiff => "MD",
        };
        format!("{prefix}-{}", self.criterion.label())
    }

    fn run(&self, inst: &ProblemInstance) -> sensel::Result<PipelineResult> {
        let params = PipelineParams::default();
        match (self.family, self.criterion) {
            (Family::Robust, Criterion::Kl) => r_kl(inst, &params),
            (Family::Robust, Criterion::Chernoff) => r_c(inst, &params),
            (Family::MeanDiff, Criterion::Kl) => md_kl(inst),
            (Family::MeanDiff, Criterion::Chernoff) => md_c(inst),
        }
    }
}

fn solvers(config: &Config, exact: bool) -> anyhow::Result<Vec<Solver>> {
    let families = match config.algorithm {
        AlgorithmArg::R => vec![Family::Robust],
        AlgorithmArg::Md if !exact => {
            bail!("the mean-difference solvers need exact means; use --k-rule infinity or --algorithm r")
        }
        AlgorithmArg::Md => vec![Family::MeanDiff],
        AlgorithmArg::Both if exact => vec![Family::Robust, Family::MeanDiff],
        AlgorithmArg::Both => vec![Family::Robust],
    };
    let mut out = Vec::new();
    for family in families {
        for criterion in config.criterion.criteria() {
            out.push(Solver { family, criterion });
        }
    }
    Ok(out)
}

/// The instances of a run with their seeds: the `--instance` file, or
/// `instances` generated ones with seeds `seed, seed + 1, …`.
pub fn load_instances(config: &Config) -> anyhow::Result<Vec<(u64, ProblemInstance)>> {
    if let Some(path) = &config.instance {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut inst = ProblemInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        if config.p.is_some() || config.p_frac.is_some() {
            let p = config.resolve_p(inst.n())?;
            inst = ProblemInstance::new(inst.pair, inst.uncertainty, p)?;
        }
        return Ok(vec![(config.seed, inst)]);
    }
    let p = config.resolve_p(config.n)?;
    (0..config.instances as u64)
        .map(|i| {
            let seed = config.seed.wrapping_add(i);
            Ok((seed, generate_instance(config.n, p, seed, config.k_rule.0)?))
        })
        .collect()
}

/// Executes the configured experiment.
pub fn run(config: &Config) -> anyhow::Result<Report> {
    config.validate()?;
    match config.mode {
        Mode::Solve => solve(config),
        Mode::OracleCompare => oracle_compare(config),
        Mode::RandomCompare => random_compare(config),
        Mode::DetectionEval => detection_eval(config),
        Mode::Hardness => hardness(config),
        Mode::Sweep => sweep(config),
    }
}

fn labels(sel: &SelectionMatrix) -> String {
    sel.one_based().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

fn solve(config: &Config) -> anyhow::Result<Report> {
    let instances = load_instances(config)?;
    let mut report = Report::new(
        config,
        &["instance", "seed", "algorithm", "selection", "objective", "stiefel_objective", "projection_objective", "millis"],
    );
    let rows = pool::par_map(instances.len(), |i| -> anyhow::Result<Vec<Vec<Value>>> {
        let (seed, inst) = &instances[i];
        let mut rows = Vec::new();
        for solver in solvers(config, inst.uncertainty.is_exact())? {
            let res = solver.run(inst)?;
            rows.push(vec![
                Value::from(i),
                Value::from(*seed),
                Value::from(res.algorithm.clone()),
                Value::from(labels(&res.selection)),
                number(res.objective),
                number(res.stiefel_objective),
                number(res.projection_objective()),
                number(res.total_millis()),
            ]);
        }
        Ok(rows)
    })?;
    report.rows = rows.into_iter().flatten().collect();
    Ok(report)
}

fn oracle_compare(config: &Config) -> anyhow::Result<Report> {
    let instances = load_instances(config)?;
    let exact = instances.iter().all(|(_, inst)| inst.uncertainty.is_exact());
    let solvers = solvers(config, exact)?;
    let criteria = config.criterion.criteria();
    let mut columns: Vec<String> = vec!["instance".into(), "seed".into()];
    columns.extend(criteria.iter().map(|c| format!("opt_{}", c.label())));
    columns.extend(solvers.iter().map(|s| format!("r_{}", s.name())));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut report = Report::new(config, &cols);
    report.rows = pool::par_map(instances.len(), |i| -> anyhow::Result<Vec<Value>> {
        let (seed, inst) = &instances[i];
        let mut row = vec![Value::from(i), Value::from(*seed)];
        let mut opt = Vec::new();
        for &c in &criteria {
            let (_, v) = exhaustive_opt(inst, c, config.oracle_cap)?;
            opt.push((c, v));
            row.push(number(v));
        }
        for s in &solvers {
            let best = opt.iter().find(|(c, _)| *c == s.criterion).map(|(_, v)| *v).unwrap();
            row.push(number(ratio(s.run(inst)?.objective, best)));
        }
        Ok(row)
    })?;
    let ratio_cols: Vec<String> = solvers.iter().map(|s| format!("r_{}", s.name())).collect();
    report.summarize(&ratio_cols.iter().map(String::as_str).collect::<Vec<_>>());
    Ok(report)
}

/// `value / reference`, taken as 1 when the reference is not positive.
fn ratio(value: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        value / reference
    } else {
        1.0
    }
}

/// Random selections for random-compare: every selection when the budget
/// covers them, a sample without replacement when they are few enough to
/// list, and independent draws otherwise.
pub fn random_selections(n: usize, p: usize, budget: usize, seed: u64) -> anyhow::Result<Vec<SelectionMatrix>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let total = binomial(n, p);
    let subsets_of = |v: Vec<Vec<usize>>| v.into_iter().map(SelectionMatrix::new).collect::<sensel::Result<Vec<_>>>();
    if total <= budget as u128 {
        return Ok(subsets_of(subsets(n, p).collect())?);
    }
    if total <= 4 * budget as u128 {
        let mut all: Vec<Vec<usize>> = subsets(n, p).collect();
        let (picked, _) = all.partial_shuffle(&mut rng, budget);
        return Ok(subsets_of(picked.to_vec())?);
    }
    let draws = (0..budget)
        .map(|_| {
            let mut v = index::sample(&mut rng, n, p).into_vec();
            v.sort_unstable();
            v
        })
        .collect();
    Ok(subsets_of(draws)?)
}

fn random_compare(config: &Config) -> anyhow::Result<Report> {
    let instances = load_instances(config)?;
    let exact = instances.iter().all(|(_, inst)| inst.uncertainty.is_exact());
    let solvers = solvers(config, exact)?;
    let mut columns: Vec<String> = vec!["instance".into(), "seed".into(), "budget".into()];
    for s in &solvers {
        columns.push(format!("rho_{}", s.name()));
        columns.push(format!("time_ratio_{}", s.name()));
    }
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut report = Report::new(config, &cols);
    report.rows = pool::par_map(instances.len(), |i| -> anyhow::Result<Vec<Value>> {
        let (seed, inst) = &instances[i];
        let picks = random_selections(inst.n(), inst.p, config.random_budget, *seed)?;
        let mut row = vec![Value::from(i), Value::from(*seed), Value::from(picks.len())];
        let mut best = Vec::new();
        for c in config.criterion.criteria() {
            let t = Instant::now();
            let mut top = f64::NEG_INFINITY;
            for sel in &picks {
                top = top.max(worst_case(c, sel, &inst.pair, &inst.uncertainty)?);
            }
            best.push((c, top, t.elapsed().as_secs_f64() * 1e3));
        }
        for s in &solvers {
            let &(_, top, millis) = best.iter().find(|(c, _, _)| *c == s.criterion).unwrap();
            let res = s.run(inst)?;
            row.push(number(ratio(res.objective, top)));
            row.push(number(res.total_millis() / millis.max(1e-9)));
        }
        Ok(row)
    })?;
    let stat_cols: Vec<String> = columns[3..].to_vec();
    report.summarize(&stat_cols.iter().map(String::as_str).collect::<Vec<_>>());
    Ok(report)
}

fn detection_eval(config: &Config) -> anyhow::Result<Report> {
    let mut config_one = config.clone();
    config_one.instances = 1;
    let (seed, inst) = load_instances(&config_one)?.remove(0);
    let mut report = Report::new(config, &["record", "selection", "kl", "chernoff", "pe", "pfa", "pd"]);
    let all = exhaustive_values(&inst, Criterion::Kl, config.oracle_cap)?;
    let stats = pool::par_map(all.len(), |k| -> anyhow::Result<_> {
        let sel = &all[k].0;
        // Detection uses the nominal means; the same seed for every
        // selection gives common random numbers across the comparison.
        let kl = kl_distance(&inst.pair, sel)?;
        let c = chernoff_distance(&inst.pair, sel)?.value;
        Ok((kl, c, estimate_roc(sel, &inst.pair, config.trials, seed)?))
    })?;
    for ((sel, _), (kl, c, st)) in all.iter().zip(&stats) {
        report.rows.push(vec![
            Value::from("selection"),
            Value::from(labels(sel)),
            number(*kl),
            number(*c),
            number(st.pe),
            Value::Null,
            Value::Null,
        ]);
    }
    let pick = |key: &dyn Fn(usize) -> f64| (0..all.len()).fold(0, |b, j| if key(j) > key(b) { j } else { b });
    let summary = [
        ("kl-best", pick(&|j| stats[j].0)),
        ("c-best", pick(&|j| stats[j].1)),
        ("bayes-best", pick(&|j| -stats[j].2.pe)),
        ("worst", pick(&|j| stats[j].2.pe)),
    ];
    for (name, j) in summary {
        report.rows.push(vec![
            Value::from(name),
            Value::from(labels(&all[j].0)),
            number(stats[j].0),
            number(stats[j].1),
            number(stats[j].2.pe),
            Value::Null,
            Value::Null,
        ]);
    }
    let avg = stats.iter().map(|s| s.2.pe).sum::<f64>() / stats.len() as f64;
    report.rows.push(vec![
        Value::from("average"),
        Value::from(""),
        Value::Null,
        Value::Null,
        number(avg),
        Value::Null,
        Value::Null,
    ]);
    for ((sel, _), (_, _, st)) in all.iter().zip(&stats) {
        for r in &st.roc {
            report.rows.push(vec![
                Value::from("roc"),
                Value::from(labels(sel)),
                Value::Null,
                Value::Null,
                Value::Null,
                number(r.pfa),
                number(r.pd),
            ]);
        }
    }
    for k in 0..ENVELOPE_POINTS {
        let pfa = k as f64 / (ENVELOPE_POINTS - 1) as f64;
        let pd = stats.iter().map(|s| interpolate_pd(&s.2, pfa).pd).fold(f64::NEG_INFINITY, f64::max);
        report.rows.push(vec![
            Value::from("envelope"),
            Value::from(""),
            Value::Null,
            Value::Null,
            Value::Null,
            number(pfa),
            number(pd),
        ]);
    }
    Ok(report)
}

/// Parses `Kn` (complete), `Pn` (path), `En` (empty), or `n:a-b,c-d,…`.
pub fn parse_graph(spec: &str) -> anyhow::Result<SimpleGraph> {
    let spec = spec.trim();
    let size = |s: &str| -> anyhow::Result<usize> { s.parse().with_context(|| format!("bad graph size {s:?}")) };
    if let Some((n, edges)) = spec.split_once(':') {
        let mut list = Vec::new();
        for e in edges.split(',').filter(|e| !e.trim().is_empty()) {
            let (a, b) = e.split_once('-').with_context(|| format!("bad edge {e:?}"))?;
            list.push((size(a.trim())?, size(b.trim())?));
        }
        return Ok(SimpleGraph::new(size(n)?, list)?);
    }
    let (kind, n) = spec.split_at(1.min(spec.len()));
    match kind {
        "K" => Ok(SimpleGraph::complete(size(n)?)),
        "P" => Ok(SimpleGraph::path(size(n)?)),
        "E" => Ok(SimpleGraph::empty(size(n)?)),
        _ => bail!("unknown graph {spec:?} (Kn, Pn, En, or n:a-b,…)"),
    }
}

fn hardness(config: &Config) -> anyhow::Result<Report> {
    let graph = match &config.graph {
        Some(g) => parse_graph(g)?,
        None => SimpleGraph::complete(config.n),
    };
    let name = config.graph.clone().unwrap_or_else(|| format!("K{}", config.n));
    let n = graph.n_vertices();
    let p = config.resolve_p(n)?;
    let inst = hardness_instance(&graph, p)?;
    let mut report = Report::new(
        config,
        &["graph", "n", "p", "criterion", "optimum", "clique_value", "clique_found", "has_clique", "selection"],
    );
    for c in config.criterion.criteria() {
        let (sel, v) = exhaustive_opt(&inst, c, config.oracle_cap)?;
        let target = clique_value(n, p, c);
        report.rows.push(vec![
            Value::from(name.clone()),
            Value::from(n),
            Value::from(p),
            Value::from(c.label()),
            number(v),
            number(target),
            Value::from(v >= target - 1e-9),
            Value::from(graph.has_clique(p)),
            Value::from(labels(&sel)),
        ]);
    }
    Ok(report)
}

fn sweep(config: &Config) -> anyhow::Result<Report> {
    let p_max = config.resolve_p(config.n)?;
    let mut report = Report::new(config, &["p", "algorithm", "instances", "avg_objective", "avg_millis"]);
    let exact = matches!(config.k_rule.0, sensel::generate::KRule::Infinity);
    let solvers = solvers(config, exact)?;
    for p in 1..=p_max {
        let sub = Config {
            p: Some(p),
            p_frac: None,
            instance: None,
            ..config.clone()
        };
        let instances = load_instances(&sub)?;
        let results = pool::par_map(instances.len(), |i| -> anyhow::Result<Vec<(f64, f64)>> {
            solvers
                .iter()
                .map(|s| {
                    let r = s.run(&instances[i].1)?;
                    Ok((r.objective, r.total_millis()))
                })
                .collect()
        })?;
        for (k, s) in solvers.iter().enumerate() {
            let objs: Vec<f64> = results.iter().map(|r| r[k].0).collect();
            let times: Vec<f64> = results.iter().map(|r| r[k].1).collect();
            report.rows.push(vec![
                Value::from(p),
                Value::from(s.name()),
                Value::from(objs.len()),
                number(report::statistic("avg", &objs)),
                number(report::statistic("avg", &times)),
            ]);
        }
    }
    Ok(report)
}
