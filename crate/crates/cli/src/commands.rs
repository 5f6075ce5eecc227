use std::fs;

use refine_core::graph::{edge_homophily, Label, LabelCounts, LabeledGraph};
use refine_core::io::{self, OutputPaths, RunConfig};
use refine_core::kernel::write_kernel_dump;
use refine_core::partition;
use refine_core::pipeline::{run_refine, EpsilonSpec};
use refine_core::rational::{to_f64, Rational, RationalValue};
use refine_core::reference::{
    build_reference, build_reference_over_clusters, evaluate_conditions, select_epsilon, ReferenceConfig,
};
use refine_core::report::RewireReport;
use refine_core::rewire::{candidate_pool, Direction};
use refine_core::synth::{self, FeatureModel, PerturbedReferenceSpec, SbmSpec, SplitFractions};
use refine_core::validate;
use serde::Serialize;

use crate::args::*;
use crate::CliError;

type CmdResult = Result<(), CliError>;

// Stdout write failures (a closed pipe, usually) are not worth a panic.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! say_raw {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) -> CmdResult {
    if json {
        say!("{}", serde_json::to_string_pretty(value).map_err(refine_core::Error::from)?);
    } else {
        say_raw!("{}", text());
    }
    Ok(())
}

fn fmt_h(r: &Option<Rational>) -> String {
    r.map_or_else(|| "undefined".into(), |r| format!("{:.4} ({}/{})", to_f64(&r), r.numer(), r.denom()))
}

fn run_config(direction: Option<DirectionArg>, k: Option<&str>, opts: &ReferenceOpts) -> Result<RunConfig, CliError> {
    let mut cfg = match &opts.config {
        // A config that exists but does not parse is a usage mistake.
        Some(path) => RunConfig::from_json_file(path).map_err(|e| match e {
            refine_core::Error::Json(_) => CliError::usage(e),
            e => CliError::Core(e),
        })?,
        None => RunConfig::default(),
    };
    if let Some(e) = &opts.epsilon {
        cfg.epsilon = io::parse_epsilon(e).map_err(CliError::usage)?;
    }
    if let Some(k) = k {
        cfg.k = io::parse_budget(k).map_err(CliError::usage)?;
    }
    if let Some(c) = &opts.cluster_size {
        cfg.cluster_size = io::parse_cluster_size(c).map_err(CliError::usage)?;
    }
    if let Some(d) = direction {
        cfg.direction = d.into();
    }
    if let Some(kernel) = opts.kernel {
        cfg.kernel = kernel.into();
    }
    if let Some(m) = opts.metric {
        cfg.metric = m.into();
    }
    if let Some(s) = opts.symmetrization {
        cfg.symmetrization = s.into();
    }
    if let Some(e) = opts.evaluation {
        cfg.evaluation = e.into();
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(CliError::usage)?;
    Ok(cfg)
}

pub fn rewire(args: RewireArgs, json: bool) -> CmdResult {
    let cfg = run_config(args.direction, args.k.as_deref(), &args.reference)?;
    let (g, load) = io::load_dataset(&args.input)?;
    let out = run_refine(&g, &cfg.refine_config())?;
    let paths = OutputPaths::new(args.output.unwrap_or(args.input));
    fs::create_dir_all(&paths.dir).map_err(refine_core::Error::from)?;
    io::write_edges_file(out.graph.edges(), &paths.rewired_edges())?;
    let report = RewireReport::new(&cfg, &load, &out, args.allow_degraded);
    let body = report.to_json().map_err(refine_core::Error::from)?;
    fs::write(paths.report(), &body).map_err(refine_core::Error::from)?;

    if json {
        say_raw!("{body}");
    } else {
        let passed = out.clusters.iter().filter(|c| c.pass_through.is_some()).count();
        say!(
            "nodes {}  edges {} -> {} ({} {})",
            g.node_count(),
            g.edges().len(),
            out.graph.edges().len(),
            out.applied.len(),
            if cfg.direction == Direction::Add { "added" } else { "deleted" }
        );
        say!(
            "clusters {} (target size {}), epsilon {:e}",
            out.partition.cluster_count(),
            out.cluster_size,
            out.epsilon
        );
        say!("homophily {} -> {}", fmt_h(&out.input_homophily), fmt_h(&out.output_homophily));
        say!(
            "estimates: graph {}, reference {}",
            fmt_h(&out.conditions.graph_homophily),
            fmt_h(&out.conditions.reference_homophily)
        );
        let check = match cfg.direction {
            Direction::Add => &out.conditions.addition,
            Direction::Delete => &out.conditions.deletion,
        };
        say!("{} condition: {:?} (margin {})", cfg.direction.as_str(), check.verdict, fmt_h(&check.margin));
        if passed > 0 {
            say!("{passed} cluster(s) passed through unchanged");
        }
        say!("wrote {} and {}", paths.rewired_edges().display(), paths.report().display());
    }
    if out.degraded() && !args.allow_degraded {
        return Err(CliError::Degraded);
    }
    Ok(())
}

#[derive(Serialize)]
struct HomophilyOut {
    nodes: usize,
    edges: u64,
    same_label_edges: u64,
    unknown_label_edges: u64,
    homophily: RationalValue,
    self_loops_dropped: usize,
}

pub fn homophily(args: HomophilyArgs, json: bool) -> CmdResult {
    let (g, load) = io::load_dataset(&args.input)?;
    let labels = match args.labels {
        LabelScope::All => g.labels().to_vec(),
        LabelScope::Evaluation => g.evaluation_labels(),
    };
    let r = edge_homophily(g.edges(), &labels)?;
    let out = HomophilyOut {
        nodes: g.node_count(),
        edges: r.edge_count,
        same_label_edges: r.same_label_edges,
        unknown_label_edges: r.unknown_label_edges,
        homophily: RationalValue(r.homophily),
        self_loops_dropped: load.self_loops_dropped,
    };
    emit(json, &out, || {
        format!(
            "nodes {}  edges {}  same-label {}  unknown {}\nhomophily {}\n",
            out.nodes,
            out.edges,
            out.same_label_edges,
            out.unknown_label_edges,
            fmt_h(&Some(r.homophily))
        )
    })
}

#[derive(Serialize)]
struct ReferenceOut {
    nodes: usize,
    clusters: usize,
    epsilon: f64,
    reference_edges: usize,
    graph_edges: usize,
    reference_homophily: Option<RationalValue>,
    sampled_graph_homophily: Option<RationalValue>,
    sampled_reference_homophily: Option<RationalValue>,
    addition_pool: usize,
    deletion_pool: usize,
    kernel_dump: bool,
}

pub fn reference(args: ReferenceArgs, json: bool) -> CmdResult {
    let cfg = run_config(None, None, &args.reference)?;
    let (g, _) = io::load_dataset(&args.input)?;
    let features = g
        .features()
        .ok_or_else(|| refine_core::Error::MissingLabels("node features (required for the kernel)".into()))?;
    let refine = cfg.refine_config();
    let n = g.node_count();
    let c = cfg.cluster_size.resolve(n);
    let part = if c >= n {
        partition::Partition::single(g.edges())
    } else {
        partition::partition(g.edges(), c, cfg.seed)?
    };
    let epsilon = match &refine.epsilon {
        EpsilonSpec::Value(e) => *e,
        EpsilonSpec::Grid(grid) => select_epsilon(&g, part.clusters(), grid, &refine.reference, cfg.seed)?.epsilon,
    };
    let ref_cfg = ReferenceConfig { epsilon, ..refine.reference };
    let paths = OutputPaths::new(args.output.unwrap_or(args.input));
    fs::create_dir_all(&paths.dir).map_err(refine_core::Error::from)?;

    let reference = if args.dump_kernel {
        if part.cluster_count() != 1 {
            return Err(CliError::Usage(format!(
                "--dump-kernel needs a single cluster; pass --cluster-size {n} or larger"
            )));
        }
        let build = build_reference(features.view(), &g.train_labels(), &ref_cfg)?;
        write_kernel_dump(&build.gamma, epsilon, &paths.kernel_bin(), &paths.kernel_meta())?;
        build.reference
    } else {
        build_reference_over_clusters(&g, part.clusters(), &ref_cfg)?
    };
    io::write_edges_file(&reference.edges, &paths.reference_edges())?;

    let labeled = g.with_labels(match cfg.evaluation {
        refine_core::pipeline::Evaluation::Exact => g.labels().to_vec(),
        refine_core::pipeline::Evaluation::Sampled => g.evaluation_labels(),
    })?;
    let conditions = evaluate_conditions(&labeled, &reference, refine.evaluation_mode()).ok();
    let out = ReferenceOut {
        nodes: n,
        clusters: part.cluster_count(),
        epsilon,
        reference_edges: reference.edges.len(),
        graph_edges: g.edges().len(),
        reference_homophily: LabelCounts::of(&reference.edges, labeled.labels()).homophily().map(RationalValue),
        sampled_graph_homophily: conditions.as_ref().and_then(|c| c.graph_homophily).map(RationalValue),
        sampled_reference_homophily: conditions.as_ref().and_then(|c| c.reference_homophily).map(RationalValue),
        addition_pool: candidate_pool(g.edges(), &reference.edges, Direction::Add)?.len(),
        deletion_pool: candidate_pool(g.edges(), &reference.edges, Direction::Delete)?.len(),
        kernel_dump: args.dump_kernel,
    };
    emit(json, &out, || {
        let mut s = format!(
            "reference edges {} (graph {}), clusters {}, epsilon {:e}\nreference homophily {}\npools: add {}  delete {}\nwrote {}\n",
            out.reference_edges,
            out.graph_edges,
            out.clusters,
            epsilon,
            fmt_h(&out.reference_homophily.as_ref().map(|r| r.0)),
            out.addition_pool,
            out.deletion_pool,
            paths.reference_edges().display()
        );
        if args.dump_kernel {
            s.push_str(&format!("wrote {} and {}\n", paths.kernel_bin().display(), paths.kernel_meta().display()));
        }
        s
    })
}

#[derive(Serialize, Default)]
struct ValidateOut {
    #[serde(skip_serializing_if = "Option::is_none")]
    propositions: Option<validate::PropositionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theorem: Option<validate::TheoremSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    monte_carlo: Vec<validate::MonteCarloOutcome>,
    passed: bool,
}

/// Largest z-score accepted by the Monte Carlo suite.
const MONTE_CARLO_Z: f64 = 4.0;

pub fn validate_cmd(args: ValidateArgs, json: bool) -> CmdResult {
    let all = !(args.propositions || args.theorem || args.monte_carlo);
    if !(2..=validate::ORACLE_MAX_NODES).contains(&args.n_max) {
        return Err(CliError::Usage(format!("--n-max must lie in 2..={}", validate::ORACLE_MAX_NODES)));
    }
    if args.max_pool > 20 {
        return Err(CliError::Usage("--max-pool above 20 is too expensive to enumerate".into()));
    }
    let mut out = ValidateOut {
        passed: true,
        ..Default::default()
    };
    if all || args.propositions {
        let cases = validate::random_cases(args.cases, args.n_max, args.max_pool, args.seed)?;
        let s = validate::check_propositions(&cases)?;
        out.passed &= s.passed();
        out.propositions = Some(s);
    }
    if all || args.theorem {
        let s = validate::check_theorem(args.theorem_trials, args.theorem_n_max, args.seed)?;
        out.passed &= s.passed();
        out.theorem = Some(s);
    }
    if all || args.monte_carlo {
        for (i, c) in validate::monte_carlo_configs(args.mc_configs, args.seed)?.iter().enumerate() {
            let seed = refine_core::seed::trial_seed(args.seed, 4, i);
            let r = validate::monte_carlo_check(&c.graph, &c.reference, c.direction, c.k, args.mc_executions, seed)?;
            out.passed &= r.z <= MONTE_CARLO_Z;
            out.monte_carlo.push(r);
        }
    }
    emit(json, &out, || {
        let mut s = String::new();
        if let Some(p) = &out.propositions {
            s.push_str(&format!(
                "propositions: {} cases, {} expectation checks over {} subsets, {} mismatches; {} monotonicity checks, {} violations\n",
                p.cases, p.expectation_checks, p.subsets_enumerated, p.expectation_mismatches, p.monotonicity_checks,
                p.monotonicity_violations
            ));
            for f in &p.failures {
                s.push_str(&format!("  {f}\n"));
            }
        }
        if let Some(t) = &out.theorem {
            s.push_str(&format!(
                "theorem: {} trials, {} violations, min slack {:.6}; path case energy {} bound {}\n",
                t.trials, t.violations, t.min_slack, t.path_case.energy, t.path_case.bound
            ));
        }
        for (i, m) in out.monte_carlo.iter().enumerate() {
            s.push_str(&format!(
                "monte carlo {i}: k={} mean {:.6} expected {:.6} z {:.2}\n",
                m.k, m.mean, m.expected, m.z
            ));
        }
        s.push_str(if out.passed { "PASS\n" } else { "FAIL\n" });
        s
    })?;
    if out.passed {
        Ok(())
    } else {
        Err(CliError::ChecksFailed)
    }
}

fn sbm_spec(o: &SbmOpts) -> Result<SbmSpec, CliError> {
    let class_sizes = match &o.sizes {
        Some(s) => parse_list::<usize>(s, "class size")?,
        None => vec![o.class_size; o.classes],
    };
    let spec = SbmSpec {
        class_sizes,
        intra_p: o.intra_p,
        inter_p: o.inter_p,
        features: FeatureModel {
            dim: o.dim,
            separation: o.separation,
            noise: o.noise,
        },
        splits: SplitFractions {
            train: o.train,
            val: o.val,
        },
        seed: o.seed,
    };
    spec.validate().map_err(CliError::usage)?;
    Ok(spec)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| CliError::Usage(format!("invalid {what} {v:?}"))))
        .collect()
}

#[derive(Serialize)]
struct SynthOut {
    nodes: usize,
    edges: usize,
    classes: usize,
    homophily: Option<RationalValue>,
    output: String,
}

pub fn synth_cmd(args: SynthArgs, json: bool) -> CmdResult {
    let spec = sbm_spec(&args.sbm)?;
    let g = synth::generate_sbm(&spec)?;
    io::save_dataset(&g, &args.output)?;
    fs::write(
        args.output.join("spec.json"),
        serde_json::to_string_pretty(&spec).map_err(refine_core::Error::from)? + "\n",
    )
    .map_err(refine_core::Error::from)?;
    let out = SynthOut {
        nodes: g.node_count(),
        edges: g.edges().len(),
        classes: spec.class_sizes.len(),
        homophily: g.homophily().ok().map(|r| RationalValue(r.homophily)),
        output: args.output.display().to_string(),
    };
    emit(json, &out, || {
        format!(
            "nodes {}  edges {}  classes {}  homophily {}\nwrote {}\n",
            out.nodes,
            out.edges,
            out.classes,
            fmt_h(&out.homophily.as_ref().map(|r| r.0)),
            out.output
        )
    })
}

#[derive(Serialize)]
pub struct SweepCurve {
    pub p: f64,
    pub direction: Direction,
    pub file: String,
    pub graph_homophily: RationalValue,
    pub reference_homophily: Option<RationalValue>,
    pub pool_homophily: Option<RationalValue>,
    pub pool_size: usize,
    /// Whether the pool condition for this direction holds.
    pub condition_holds: bool,
    pub spearman: Option<f64>,
}

fn full_labels(g: &LabeledGraph) -> Result<Vec<Label>, CliError> {
    g.labels()
        .iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| refine_core::Error::MissingLabels(format!("label of node {v}")).into()))
        .collect()
}

pub fn sweep(args: SweepArgs, json: bool) -> CmdResult {
    let ps: Vec<f64> = parse_list(&args.p, "flip rate")?;
    let fractions: Vec<f64> = parse_list(&args.k_fractions, "k fraction")?;
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(CliError::Usage("k fractions must lie in [0, 1]".into()));
    }
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let g = match &args.input {
        Some(dir) => io::load_dataset(dir)?.0,
        None => synth::generate_sbm(&sbm_spec(&args.sbm)?)?,
    };
    let labels = full_labels(&g)?;
    let opt: Vec<_> = g.labels().to_vec();
    let graph_h = edge_homophily(g.edges(), &opt)?.homophily;
    let ideal = synth::ideal_reference(&labels);
    let directions: &[Direction] = match args.direction {
        SweepDirection::Add => &[Direction::Add],
        SweepDirection::Delete => &[Direction::Delete],
        SweepDirection::Both => &[Direction::Add, Direction::Delete],
    };
    fs::create_dir_all(&args.output).map_err(refine_core::Error::from)?;
    let seed = args.sbm.seed;
    let mut curves = Vec::new();
    for (pi, &p) in ps.iter().enumerate() {
        let spec = PerturbedReferenceSpec::new(p, refine_core::seed::trial_seed(seed, pi, 0)).map_err(CliError::usage)?;
        let mut reference = synth::perturb_reference(&ideal, &labels, &spec)?;
        if let Some(keep) = args.sparsify {
            reference = synth::sparsify_reference(&reference, keep, refine_core::seed::trial_seed(seed, pi, 1))?;
        }
        for &direction in directions {
            let pool = candidate_pool(g.edges(), &reference.edges, direction)?;
            let cap = match direction {
                Direction::Add => pool.len(),
                Direction::Delete => pool.len().min(g.edges().len().saturating_sub(1)),
            };
            let mut ks = vec![0usize];
            for f in &fractions {
                let k = ((f * pool.len() as f64).round() as usize).min(cap);
                if k > 0 && !ks.contains(&k) {
                    ks.push(k);
                }
            }
            let rows = synth::homophily_curve(&g, &reference, direction, &ks, args.trials, seed)?;
            let file = args.output.join(curve_file_name(p, direction));
            let mut buf = Vec::new();
            synth::write_curve_csv(&rows, &mut buf).map_err(refine_core::Error::from)?;
            fs::write(&file, buf).map_err(refine_core::Error::from)?;
            let pool_h = LabelCounts::of(&pool, &opt).homophily();
            let holds = match (direction, pool_h) {
                (Direction::Add, Some(h)) => h > graph_h,
                (Direction::Delete, Some(h)) => h < graph_h,
                (_, None) => false,
            };
            let xs: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.mean_h).collect();
            curves.push(SweepCurve {
                p,
                direction,
                file: file.display().to_string(),
                graph_homophily: RationalValue(graph_h),
                reference_homophily: LabelCounts::of(&reference.edges, &opt).homophily().map(RationalValue),
                pool_homophily: pool_h.map(RationalValue),
                pool_size: pool.len(),
                condition_holds: holds,
                spearman: synth::spearman(&xs, &ys),
            });
        }
    }
    emit(json, &curves, || {
        let mut s = format!("graph homophily {}\n", fmt_h(&Some(graph_h)));
        for c in &curves {
            s.push_str(&format!(
                "p={} {}: reference H {}, condition {}, spearman {}  -> {}\n",
                c.p,
                c.direction.as_str(),
                fmt_h(&c.reference_homophily.as_ref().map(|r| r.0)),
                if c.condition_holds { "holds" } else { "fails" },
                c.spearman.map_or_else(|| "undefined".into(), |r| format!("{r:.3}")),
                c.file
            ));
        }
        s
    })
}

pub fn curve_file_name(p: f64, direction: Direction) -> String {
    format!("sweep_p{p}_{}.csv", direction.as_str())
}
