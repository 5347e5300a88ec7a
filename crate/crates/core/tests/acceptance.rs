//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach stdout.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchql::bench::{
    load_manifest, median, metrics_jsonl, run_case, synthetic_case, synthetic_suite, BenchCase, CaseStatus,
    SynthParams,
};
use sketchql::engine::{iteration_bound, run_batch, BatchLimits, BatchStatus, EngineConfig, Mode, Session, Status};
use sketchql::eval::evaluate_table;
use sketchql::lang::{derives, matches, ColumnExpr, Completion, Primitive, SoftOp, TableExpr};
use sketchql::questions::{candidate_questions, estimate_scores, select_question};
use sketchql::sampler::{SamplerConfig, Skeleton};
use sketchql::softsem::{precompute_theta, score_completion, score_primitive};
use sketchql::{load_database, parse_sketch, Catalog, ColumnName, Value};

type Check = Result<String, String>;

fn library_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/library")
}

fn library() -> Catalog {
    let dir = library_dir();
    load_database(&dir.join("schema.json"), &dir).unwrap()
}

fn read(name: &str) -> String {
    std::fs::read_to_string(library_dir().join(name)).unwrap()
}

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

fn small_config(seed: u64) -> EngineConfig {
    EngineConfig {
        sampler: SamplerConfig {
            sample_count: 30,
            mh_steps: 100,
            seed,
            ..SamplerConfig::default()
        },
        lambda: 0.0,
    }
}

const THREE_WAY: &str = "SELECT name FROM (authors INNER-JOIN (writes INNER-JOIN publications \
                         ON writes.pid = publications.pid) ON authors.aid = writes.aid)";

fn join_golden() -> Check {
    let started = Instant::now();
    let cat = library();
    let q = parse_sketch(THREE_WAY, &cat).map_err(|e| e.to_string())?;
    let t = evaluate_table(&q.select.source.expr, &cat).map_err(|e| e.to_string())?;
    let (headers, rows) = t.display();
    let elapsed = started.elapsed();
    let s = |x: &str| Value::Str(x.into());
    let i = Value::Int;
    // Rows of the three CSV files joined by hand.
    let expected = vec![
        vec![i(0), s("Alan M. Turing"), i(0), s("Computability and λ-definability"), i(1937)],
        vec![i(0), s("Alan M. Turing"), i(1), s("Intelligent machinery"), i(1948)],
        vec![i(1), s("Alonzo Church"), i(2), s("A set of postulates for the foundation of logic"), i(1932)],
    ];
    ensure(headers == ["aid", "name", "pid", "title", "year"], || format!("headers {headers:?}"))?;
    ensure(rows == expected, || format!("rows {rows:?}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("3 rows, {elapsed:?}"))
}

fn soft_semantics() -> Check {
    let cat = library();
    let q = parse_sketch(THREE_WAY, &cat).map_err(|e| e.to_string())?;
    let t = evaluate_table(&q.select.source.expr, &cat).map_err(|e| e.to_string())?;
    let name = ColumnExpr::Const(ColumnName::new("authors", "name"));
    let year = ColumnExpr::Const(ColumnName::new("publications", "year"));
    let cmp = |op, v| Primitive::Compare {
        column: year.clone(),
        op,
        value: sketchql::lang::Literal::Int(v),
    };
    let church = Primitive::Contains {
        column: name,
        pattern: ".*Church.*".into(),
    };
    let got = |p: &Primitive| score_primitive::<f64>(p, &t).map_err(|e| e.to_string());
    let (c, ge, le, le1940) = (
        got(&church)?,
        got(&cmp(SoftOp::Ge, 1900))?,
        got(&cmp(SoftOp::Le, 2020))?,
        got(&cmp(SoftOp::Le, 1940))?,
    );
    ensure(c == 1.0 && ge == 1.0 && le == 1.0, || format!("{c} {ge} {le}"))?;
    // Two of the three years (1937, 1932) are at most 1940.
    ensure((le1940 - 2.0 / 3.0).abs() <= 1e-12, || format!("year <= 1940 gave {le1940}"))?;
    Ok(format!("contains=1 >=1900=1 <=2020=1 <=1940={le1940:.12}"))
}

struct SuiteRuns {
    cases: usize,
    exact: usize,
    bound_ok: usize,
    worst: String,
    elapsed: Duration,
}

fn run_suite() -> SuiteRuns {
    let started = Instant::now();
    let cases = synthetic_suite(1000, 200, &SynthParams::default());
    let limits = BatchLimits {
        max_iterations: usize::MAX,
        time_budget: None,
    };
    let mut out = SuiteRuns {
        cases: cases.len(),
        exact: 0,
        bound_ok: 0,
        worst: String::new(),
        elapsed: Duration::ZERO,
    };
    let mut worst_ratio = 0.0;
    for (k, case) in cases.iter().enumerate() {
        let res = run_batch::<f64>(case.catalog.clone(), &case.sketch, &case.truth, &small_config(k as u64), Mode::Full, &limits);
        let Ok(res) = res else { continue };
        if res.status == BatchStatus::Complete && res.completion.as_ref() == Some(&case.truth) {
            out.exact += 1;
        }
        let bound = iteration_bound(&case.catalog, &case.truth);
        if res.iterations <= bound {
            out.bound_ok += 1;
        }
        let ratio = res.iterations as f64 / bound as f64;
        if ratio > worst_ratio {
            worst_ratio = ratio;
            out.worst = format!("{} iterations vs bound {bound}", res.iterations);
        }
    }
    out.elapsed = started.elapsed();
    out
}

fn recovers_truth(r: &SuiteRuns) -> Check {
    ensure(r.cases >= 200, || format!("only {} cases", r.cases))?;
    ensure(r.exact == r.cases, || format!("{} of {} returned the ground truth", r.exact, r.cases))?;
    ensure(r.elapsed < Duration::from_secs(300), || format!("took {:?}", r.elapsed))?;
    Ok(format!("{}/{} exact, {:?}", r.exact, r.cases, r.elapsed))
}

fn within_bound(r: &SuiteRuns) -> Check {
    ensure(r.bound_ok == r.cases, || format!("{} of {} within bound", r.bound_ok, r.cases))?;
    Ok(format!("{}/{} within bound, tightest {}", r.bound_ok, r.cases, r.worst))
}

fn score_law() -> Check {
    let mut checked = 0;
    let mut dropped = 0;
    let mut inputs: Vec<BenchCase> = synthetic_suite(2000, 10, &SynthParams::default());
    for e in load_manifest(&library_dir().join("manifest.json")).map_err(|e| e.to_string())? {
        inputs.push(BenchCase::load(&e).map_err(|e| e.to_string())?);
    }
    for (k, case) in inputs.iter().enumerate() {
        let theta = precompute_theta::<f64>(&case.sketch, &case.catalog);
        let cfg = SamplerConfig {
            sample_count: 50,
            mh_steps: 200,
            seed: k as u64,
            ..SamplerConfig::default()
        };
        let sk = Skeleton::compile(&case.sketch, &case.catalog, &theta, 0.0, cfg.max_join_depth).map_err(|e| e.to_string())?;
        let samples = sk.sample(&[], &cfg, cfg.seed).map_err(|e| e.to_string())?;
        let candidates = candidate_questions(&sk, &case.catalog, &[]).map_err(|e| e.to_string())?;
        let scored = estimate_scores::<f64>(&candidates, &samples);
        for q in &candidates {
            let hits = samples.iter().filter(|s| matches(&q.sketch, s)).count();
            let found = scored.iter().find(|s| s.question == *q);
            match (hits, found) {
                (0, None) => dropped += 1,
                (0, Some(_)) => return Err(format!("{}: zero-support candidate kept", q.summary())),
                (_, None) => return Err(format!("{}: supported candidate dropped", q.summary())),
                (h, Some(s)) => {
                    let p = h as f64 / samples.len() as f64;
                    ensure(s.pi_plus_hat == p, || format!("{}: pi {} vs {p}", q.summary(), s.pi_plus_hat))?;
                    ensure(s.score_hat == 2.0 * p * (1.0 - p), || format!("{}: score {}", q.summary(), s.score_hat))?;
                    checked += 1;
                }
            }
        }
        let best = select_question(&scored).map_err(|e| e.to_string())?;
        let max = scored.iter().map(|s| s.score_hat).fold(f64::NEG_INFINITY, f64::max);
        ensure(best.score_hat == max, || format!("selected {} below max {max}", best.score_hat))?;
    }
    Ok(format!("{checked} scored, {dropped} zero-support dropped, {} sketches", inputs.len()))
}

/// Every completion of the author sketch with chains of at most three tables,
/// built from the grammar alone: any columns, any table sequence, any join
/// columns. Ill-formed ones score -inf.
fn enumerate_author(cat: &Catalog) -> Vec<Completion> {
    let p = parse_sketch(&read("author.sketch"), cat).unwrap();
    let cols: Vec<ColumnName> = cat.columns().iter().map(|c| c.qualified()).collect();
    let tables: Vec<String> = cat.tables().iter().map(|t| t.name.clone()).collect();
    let mut chains: Vec<TableExpr> = Vec::new();
    fn extend(cat: &Catalog, seq: Vec<&str>, out: &mut Vec<TableExpr>) {
        let cols_of = |t: &str| -> Vec<ColumnName> {
            cat.table_by_name(t)
                .unwrap()
                .columns
                .iter()
                .map(|c| ColumnName::new(t, c.column_name.clone()))
                .collect()
        };
        // All join-column choices along the sequence, built right to left.
        let mut exprs = vec![TableExpr::Base(seq[seq.len() - 1].to_string())];
        for w in (0..seq.len() - 1).rev() {
            let mut next = Vec::new();
            for e in &exprs {
                for l in cols_of(seq[w]) {
                    for r in cols_of(seq[w + 1]) {
                        next.push(TableExpr::join(
                            seq[w],
                            ColumnExpr::Const(l.clone()),
                            ColumnExpr::Const(r.clone()),
                            e.clone(),
                        ));
                    }
                }
            }
            exprs = next;
        }
        out.extend(exprs);
    }
    for a in &tables {
        extend(cat, vec![a], &mut chains);
        for b in &tables {
            if b != a {
                extend(cat, vec![a, b], &mut chains);
                for c in &tables {
                    if c != a && c != b {
                        extend(cat, vec![a, b, c], &mut chains);
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    for chain in &chains {
        for n in &cols {
            for y in &cols {
                let mut s = p.clone();
                s.map_columns(&mut |c| {
                    if let ColumnExpr::Hole(h) = c {
                        *c = ColumnExpr::Const(if h == "c_name" { n.clone() } else { y.clone() });
                    }
                });
                s.tail_node_mut().expr = chain.clone();
                out.push(Completion::try_from(s).unwrap());
            }
        }
    }
    out
}

fn sampler_fidelity() -> Check {
    let started = Instant::now();
    let cat = library();
    let p = parse_sketch(&read("author.sketch"), &cat).unwrap();
    let theta = precompute_theta::<f64>(&p, &cat);

    let mut exact: HashMap<TableExpr, f64> = HashMap::new();
    let mut z = 0.0;
    let space = enumerate_author(&cat);
    for c in &space {
        let w = score_completion(c, &theta, &cat, 0.0).exp();
        z += w;
        *exact.entry(c.select.source.expr.clone()).or_default() += w;
    }
    exact.values_mut().for_each(|w| *w /= z);

    let cfg = SamplerConfig {
        sample_count: 2000,
        mh_steps: 1000,
        max_join_depth: 3,
        seed: 17,
        ..SamplerConfig::default()
    };
    let sk = Skeleton::compile(&p, &cat, &theta, 0.0, cfg.max_join_depth).map_err(|e| e.to_string())?;
    let samples = sk.sample(&[], &cfg, cfg.seed).map_err(|e| e.to_string())?;
    let mut empirical: HashMap<TableExpr, f64> = HashMap::new();
    for s in &samples {
        *empirical.entry(s.select.source.expr.clone()).or_default() += 1.0 / samples.len() as f64;
    }
    let mut keys: Vec<&TableExpr> = exact.keys().chain(empirical.keys()).collect();
    keys.sort_by_key(|k| format!("{k:?}"));
    keys.dedup();
    let tv: f64 = keys
        .iter()
        .map(|k| (exact.get(*k).unwrap_or(&0.0) - empirical.get(*k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
        / 2.0;
    let support = exact.values().filter(|w| **w > 0.0).count();
    let elapsed = started.elapsed();
    ensure(tv < 0.1, || format!("total variation {tv:.4}"))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "TV {tv:.4} over {support} chains, {} completions enumerated, {elapsed:?}",
        space.len()
    ))
}

fn negative_soundness() -> Check {
    let mut sequences = 0;
    let mut rejections = 0;
    let mut checks = 0;
    for i in 0..100u64 {
        let case = if i % 4 == 0 {
            BenchCase::load(&load_manifest(&library_dir().join("manifest.json")).unwrap()[0]).unwrap()
        } else {
            synthetic_case(3000 + i, &SynthParams::default())
        };
        let config = small_config(i);
        let theta = precompute_theta::<f64>(&case.sketch, &case.catalog);
        let mut session = Session::<f64>::start(case.catalog.clone(), case.sketch.clone(), config.clone())
            .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        sequences += 1;
        for step in 0..8 {
            if session.status() != Status::AwaitingAnswer {
                break;
            }
            let accept = rng.gen_bool(0.3);
            rejections += !accept as usize;
            session.answer(accept).map_err(|e| e.to_string())?;
            let st = session.state();
            let negatives: Vec<_> = st.negatives.iter().map(|q| q.sketch.clone()).collect();
            if let Some(p) = &st.pending {
                for n in &negatives {
                    ensure(!derives(n, &p.question.sketch), || format!("seq {i}: asked a rejected question"))?;
                }
            }
            if st.status != Status::AwaitingAnswer {
                break;
            }
            let sk = Skeleton::compile(&st.sketch, &case.catalog, &theta, 0.0, config.sampler.max_join_depth)
                .map_err(|e| e.to_string())?;
            let samples = sk.sample(&negatives, &config.sampler, 77 + step).map_err(|e| e.to_string())?;
            let candidates = candidate_questions(&sk, &case.catalog, &st.negatives).map_err(|e| e.to_string())?;
            for n in &negatives {
                for s in &samples {
                    ensure(!matches(n, s), || format!("seq {i}: sample matches a rejected question"))?;
                }
                for q in &candidates {
                    ensure(*n != q.sketch && !derives(n, &q.sketch), || {
                        format!("seq {i}: candidate {} matches a rejected question", q.summary())
                    })?;
                }
                checks += 1;
            }
        }
    }
    ensure(sequences >= 100, || format!("only {sequences} sequences"))?;
    Ok(format!("{sequences} sequences, {rejections} rejections, {checks} negative checks"))
}

fn baseline_direction() -> Check {
    let cases = synthetic_suite(5000, 20, &SynthParams::default());
    let config = EngineConfig {
        sampler: SamplerConfig {
            seed: 1,
            ..SamplerConfig::default()
        },
        lambda: 0.0,
    };
    let limits = BatchLimits::default();
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for case in &cases {
        let a = run_case::<f64>(case, &config, Mode::Full, &limits, false);
        let b = run_case::<f64>(case, &config, Mode::NoSoft, &limits, false);
        ensure(a.status == CaseStatus::Complete, || format!("{}: {:?}", a.case, a.status))?;
        with.push(a.iterations);
        without.push(b.iterations);
    }
    let (m_with, m_without) = (median(&mut with), median(&mut without));
    ensure(m_with <= m_without, || format!("median {m_with} with soft vs {m_without} without"))?;
    ensure(2.0 * m_with <= m_without, || format!("median {m_with} with soft vs {m_without} without"))?;
    Ok(format!("median iterations {m_with} with soft, {m_without} without"))
}

fn determinism() -> Check {
    let mut cases: Vec<BenchCase> = load_manifest(&library_dir().join("manifest.json"))
        .map_err(|e| e.to_string())?
        .iter()
        .map(|e| BenchCase::load(e).unwrap())
        .collect();
    cases.extend(synthetic_suite(6000, 5, &SynthParams::default()));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in 0..2 {
        let mut rows = Vec::new();
        for case in &cases {
            for mode in [Mode::Full, Mode::NoSoft, Mode::Perfect] {
                rows.push(run_case::<f64>(case, &small_config(42), mode, &BatchLimits::default(), false));
            }
        }
        let path = dir.path().join(format!("metrics-{run}.jsonl"));
        std::fs::write(&path, metrics_jsonl(&rows)).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], || "metrics files differ".to_string())?;
    Ok(format!("{} bytes identical across two runs", files[0].len()))
}

fn main() {
    let suite = run_suite();
    let checks: Vec<(&str, Box<dyn FnOnce() -> Check + '_>)> = vec![
        ("three-way join golden", Box::new(join_golden)),
        ("soft semantics on the join", Box::new(soft_semantics)),
        ("ground truth recovered (synthetic suite)", Box::new(|| recovers_truth(&suite))),
        ("iteration bound", Box::new(|| within_bound(&suite))),
        ("question score law", Box::new(score_law)),
        ("sampler fidelity", Box::new(sampler_fidelity)),
        ("negative-set soundness", Box::new(negative_soundness)),
        ("soft constraints beat baseline", Box::new(baseline_direction)),
        ("bench determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
