//! `qnn`: command-line driver for wide quantum neural network experiments.

mod io;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qnn_core::lightcone::{cardinality_report, prune, pruned_dump};
use qnn_core::linearized::{gp_empirical_check, gp_posterior, GpCheckConfig, TimeKind};
use qnn_core::ntk::{analytic_ntk_mc, empirical_ntk};
use qnn_core::reproduce::{default_nk, reproduce, DEFAULT_SEED};
use qnn_core::rng::{self, tag};
use qnn_core::sim::calibrate_normalization;
use qnn_core::stats::{
    build_dependency_graph, cumulants, janson_diagnostic, normality_tests, sample_init_ensemble, InitLaw, SampleEnsemble,
};
use qnn_core::training::{probe_inputs, train, NoiseModel, TrainConfig, TrainMode, VarianceSchedule, DEFAULT_PROBES};
use qnn_core::{Family, FamilyParams, ParamVector, Qnn, QnnError};

use io::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "qnn", version, about = "Wide quantum neural networks: light cones, NTK, lazy training and GP checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or validate circuit files.
    #[command(subcommand)]
    Circuit(CircuitCmd),
    /// Light-cone cardinalities and pruned circuits.
    #[command(subcommand)]
    Lightcone(LightconeCmd),
    /// Model evaluation and normalization calibration.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Empirical and Monte-Carlo tangent kernels.
    #[command(subcommand)]
    Ntk(NtkCmd),
    /// Train a circuit on a labelled dataset.
    Train(TrainArgs),
    /// Time-t Gaussian process posterior and its empirical check.
    #[command(subcommand)]
    Gp(GpCmd),
    /// Initialization ensembles and their statistics.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Run an acceptance criterion (A1..A11) or `all`.
    Reproduce {
        suite: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Print results as JSON instead of one line per criterion.
        #[arg(long)]
        json: bool,
    },
    /// Execute an experiment config file.
    Run { config: PathBuf },
}

#[derive(Subcommand)]
enum CircuitCmd {
    /// Build a circuit from a named family.
    Gen {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        m: usize,
        #[arg(long = "L", alias = "layers")]
        layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        input_dim: usize,
        /// Append the mean-zero layer.
        #[arg(long)]
        mean_zero: bool,
        /// Output file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a circuit file against the structural rules.
    Validate { circuit: PathBuf },
}

#[derive(Subcommand)]
enum LightconeCmd {
    /// Cardinality report as JSON.
    Report { circuit: PathBuf },
    /// Pruned circuit of one observable in the circuit file format.
    Dump {
        circuit: PathBuf,
        #[arg(long)]
        qubit: usize,
    },
}

#[derive(Args)]
struct ThetaArg {
    /// Parameter CSV (`theta` column) or an integer seed for uniform draws.
    #[arg(long, default_value = "0")]
    theta: String,
}

#[derive(Subcommand)]
enum SimCmd {
    /// Evaluate the model at one input.
    Eval {
        circuit: PathBuf,
        #[command(flatten)]
        theta: ThetaArg,
        /// Comma-separated input vector.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        x: String,
    },
    /// Monte-Carlo covariance of the model over uniform parameters.
    Calibrate {
        circuit: PathBuf,
        /// Probe inputs CSV; defaults to quasi-random probes.
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Covariance CSV; stdout summary only if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum NtkCmd {
    /// Kernel at one parameter point.
    Empirical {
        circuit: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[command(flatten)]
        theta: ThetaArg,
        #[arg(long)]
        nk: Option<f64>,
        /// Leading inputs forming the training block (default: all).
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo average over uniform parameters.
    Analytic {
        circuit: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        nk: Option<f64>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Flow,
    Gd,
    NoisyGd,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Synthetic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Gaussian,
    Trainability,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    circuit: PathBuf,
    /// Dataset CSV with columns x0.., y.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    eta0: f64,
    #[arg(long)]
    steps: usize,
    /// `auto` inverts the variance schedule each step; `fixed:<M>` uses M shots.
    #[arg(long)]
    shots_schedule: Option<String>,
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
    /// Multiplier on the schedule variance for synthetic noise.
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    schedule: ScheduleArg,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Kernel normalization; Monte-Carlo default if absent.
    #[arg(long)]
    nk: Option<f64>,
    /// Track NTK drift and the linearization gap on probe inputs.
    #[arg(long)]
    diagnostics: bool,
    /// Flow step size.
    #[arg(long)]
    flow_h: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum GpCmd {
    /// Mean and covariance of the time-t process from kernel tables.
    Posterior {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        cov0: PathBuf,
        /// Training labels: dataset CSV whose rows are the leading kernel inputs.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eta0: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, conflicts_with = "continuous")]
        discrete: bool,
        #[arg(long)]
        continuous: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train many seeds and compare with the process built from MC kernels.
    Check {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seeds: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0.4)]
        eta0: f64,
        #[arg(long, default_value_t = 2)]
        probes: usize,
        #[arg(long, default_value_t = 400)]
        kernel_samples: usize,
        #[arg(long, default_value_t = 2000)]
        cov_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Uniform,
    Pathological,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Sample model values at random initializations.
    InitEnsemble {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PROBES)]
        probes: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "uniform")]
        law: LawArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-statistics with jackknife errors per probe.
    Cumulants {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
    },
    /// Lilliefors, Anderson-Darling and Mardia tests.
    Normality {
        #[arg(long)]
        ensemble: PathBuf,
    },
    /// Cumulant of the unnormalized sum against the dependency-graph bound.
    Janson {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
    },
}

fn load_qnn(path: &Path) -> CliResult<Qnn> {
    Ok(Qnn::new(io::read_circuit(path)?)?)
}

fn theta_for(qnn: &Qnn, arg: &ThetaArg) -> CliResult<Vec<f64>> {
    let theta = match arg.theta.parse::<u64>() {
        Ok(seed) => ParamVector::uniform(&qnn.spec, &mut rng::stream(seed, &[tag::PARAMS])).values,
        Err(_) => io::read_theta(&PathBuf::from(&arg.theta))?,
    };
    ParamVector::from_values(&qnn.spec, theta.clone())?;
    Ok(theta)
}

fn print_json<T: serde::Serialize>(v: &T) {
    print!("{}", io::to_json(v));
}

fn ensemble_from(path: &Path, m: usize, normalization: f64) -> CliResult<SampleEnsemble> {
    let values = io::read_ensemble(path)?;
    if values.is_empty() || values.iter().any(|v| v.len() != values[0].len()) {
        return Err(CliError::at(path, "ensemble needs the same number of samples for every probe"));
    }
    Ok(SampleEnsemble {
        m,
        layers: 0,
        normalization,
        seed: 0,
        probes: Vec::new(),
        values,
    })
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Circuit(CircuitCmd::Gen {
            family,
            m,
            layers,
            seed,
            input_dim,
            mean_zero,
            out,
        }) => {
            let mut spec = FamilyParams::new(family, m, layers, seed).with_input_dim(input_dim).build()?;
            if mean_zero {
                spec = spec.append_mean_zero_layer();
            }
            match out {
                Some(p) => io::write_json(&p, &spec)?,
                None => print_json(&spec),
            }
        }
        Command::Circuit(CircuitCmd::Validate { circuit }) => {
            let spec = io::read_circuit(&circuit)?;
            let report = spec.validate();
            let ok = report.is_empty();
            print_json(&serde_json::json!({ "valid": ok, "violations": report.violations }));
            if !ok {
                return Ok(1);
            }
        }
        Command::Lightcone(LightconeCmd::Report { circuit }) => {
            let qnn = load_qnn(&circuit)?;
            print_json(&cardinality_report(&qnn.lci));
        }
        Command::Lightcone(LightconeCmd::Dump { circuit, qubit }) => {
            let spec = io::read_circuit(&circuit)?;
            spec.ensure_valid()?;
            if qubit >= spec.num_qubits {
                return Err(QnnError::Index(format!("qubit {qubit} out of range 0..{}", spec.num_qubits)).into());
            }
            let lci = qnn_core::build_lightcones(&spec);
            let pruned = prune(&spec, qubit, &lci)?;
            print_json(&pruned_dump(&spec, &pruned));
        }
        Command::Sim(SimCmd::Eval { circuit, theta, x }) => {
            let qnn = load_qnn(&circuit)?;
            let theta = theta_for(&qnn, &theta)?;
            let x = io::parse_vector(&x)?;
            if x.len() != qnn.spec.input_dim {
                return Err(CliError::config(format!("input has length {}, circuit expects {}", x.len(), qnn.spec.input_dim)));
            }
            print_json(&qnn.eval_model(&theta, &x));
        }
        Command::Sim(SimCmd::Calibrate {
            circuit,
            inputs,
            samples,
            seed,
            out,
        }) => {
            let qnn = load_qnn(&circuit)?;
            let probes = match inputs {
                Some(p) => io::read_inputs(&p)?,
                None => probe_inputs(DEFAULT_PROBES, qnn.spec.input_dim),
            };
            let c = calibrate_normalization(&qnn, &probes, samples, seed)?;
            if let Some(p) = out {
                let m = qnn_core::nalgebra::DMatrix::from_fn(probes.len(), probes.len(), |a, b| c.covariance[a][b]);
                io::write_matrix(&p, &m)?;
            }
            print_json(&c);
        }
        Command::Ntk(NtkCmd::Empirical {
            circuit,
            inputs,
            theta,
            nk,
            n_train,
            seed,
            out,
        }) => {
            let qnn = load_qnn(&circuit)?;
            let xs = io::read_inputs(&inputs)?;
            let theta = theta_for(&qnn, &theta)?;
            let nk = match nk {
                Some(v) => v,
                None => default_nk(&qnn, &xs, 64, seed)?,
            };
            let k = empirical_ntk(&qnn, &theta, &xs, n_train.unwrap_or(xs.len()), nk)?;
            if let Some(p) = out {
                io::write_matrix(&p, &k.entries)?;
            }
            print_json(&serde_json::json!({
                "kind": k.kind, "nk": k.nk, "n_train": k.n_train,
                "lambda_min": k.lambda_min, "lambda_max": k.lambda_max,
                "entries": k.entries.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            }));
        }
        Command::Ntk(NtkCmd::Analytic {
            circuit,
            inputs,
            samples,
            seed,
            nk,
            n_train,
            out,
        }) => {
            let qnn = load_qnn(&circuit)?;
            let xs = io::read_inputs(&inputs)?;
            let a = analytic_ntk_mc(&qnn, &xs, n_train.unwrap_or(xs.len()), samples, seed, nk)?;
            if let Some(p) = out {
                io::write_matrix(&p, &a.matrix.entries)?;
            }
            let k = &a.matrix;
            print_json(&serde_json::json!({
                "kind": k.kind, "nk": k.nk, "n_train": k.n_train,
                "lambda_min": k.lambda_min, "lambda_max": k.lambda_max,
                "entries": k.entries.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                "std_err": k.std_err.as_ref().map(|e| e.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()),
                "sandwich": a.sandwich,
            }));
        }
        Command::Train(args) => {
            let qnn = load_qnn(&args.circuit)?;
            let data = io::read_dataset(&args.data)?;
            let nk = match args.nk {
                Some(v) => v,
                None => default_nk(&qnn, &data.inputs, 64, args.seed)?,
            };
            let mut cfg = TrainConfig::gd(args.eta0, args.steps, nk, args.seed);
            cfg.mode = match args.mode {
                ModeArg::Flow => TrainMode::Flow,
                ModeArg::Gd => TrainMode::Gd,
                ModeArg::NoisyGd => TrainMode::NoisyGd,
            };
            cfg.flow_h = args.flow_h;
            cfg.delta = args.delta;
            cfg.schedule = match args.schedule {
                ScheduleArg::Gaussian => VarianceSchedule::Gaussian,
                ScheduleArg::Trainability => VarianceSchedule::Trainability,
            };
            cfg.noise = match (&args.shots_schedule, args.noise) {
                (Some(_), Some(_)) => return Err(CliError::config("--shots-schedule and --noise are exclusive")),
                (Some(s), None) if s == "auto" => NoiseModel::Shots { fixed: None },
                (Some(s), None) => match s.strip_prefix("fixed:").and_then(|v| v.parse::<u64>().ok()) {
                    Some(m) if m > 0 => NoiseModel::Shots { fixed: Some(m) },
                    _ => return Err(CliError::config(format!("bad --shots-schedule {s:?}; use auto or fixed:<M>"))),
                },
                (None, _) => NoiseModel::Synthetic { scale: args.noise_scale },
            };
            cfg.diagnostics = args.diagnostics;
            cfg.probes = probe_inputs(DEFAULT_PROBES, qnn.spec.input_dim);
            let theta0 = ParamVector::uniform(&qnn.spec, &mut rng::stream(args.seed, &[tag::PARAMS])).values;
            let tr = train(&qnn, &theta0, &data, &cfg)?;
            run::write_trace(&args.out, &tr)?;
            let mut summary = serde_json::json!({
                "final_loss": tr.final_loss(),
                "lambda_min": tr.lambda_min,
                "lambda_max": tr.lambda_max,
                "eta0_in_window": tr.eta0_in_window,
                "warnings": tr.warnings,
                "total_shots": tr.total_shots,
                "planned_shots": tr.planned_shots,
                "shots_capped": tr.shots_capped,
            });
            if cfg.diagnostics {
                summary["diagnostics"] =
                    serde_json::to_value(qnn_core::training::diagnostics(&tr, &qnn, data.len(), &cfg)).expect("serializable");
            }
            for w in &tr.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&summary);
        }
        Command::Gp(GpCmd::Posterior {
            kernel,
            cov0,
            data,
            eta0,
            t,
            discrete,
            continuous,
            out,
        }) => {
            let kbar = io::read_matrix(&kernel)?;
            let k0 = io::read_matrix(&cov0)?;
            let d = io::read_dataset(&data)?;
            let kind = match (discrete, continuous) {
                (true, _) => TimeKind::Discrete,
                (_, true) => TimeKind::Continuous,
                _ => return Err(CliError::config("pass --discrete or --continuous")),
            };
            let post = gp_posterior(&kbar, &k0, d.len(), &d.labels, eta0, t, kind)?;
            let n = post.mean.len();
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|a| {
                    let mut r = vec![a as f64, post.mean[a]];
                    r.extend(post.covariance.row(a).iter());
                    r
                })
                .collect();
            let names: Vec<String> = (0..n).map(|j| format!("c{j}")).collect();
            let mut header = vec!["input", "mean"];
            header.extend(names.iter().map(String::as_str));
            io::write_table(&out, &header, &rows)?;
            print_json(&serde_json::json!({ "jitter": post.jitter, "condition": post.condition }));
        }
        Command::Gp(GpCmd::Check {
            circuit,
            data,
            seeds,
            t,
            eta0,
            probes,
            kernel_samples,
            cov_samples,
            seed,
            out,
        }) => {
            let qnn = load_qnn(&circuit)?;
            let d = io::read_dataset(&data)?;
            let cfg = GpCheckConfig {
                eta0,
                steps: t,
                num_seeds: seeds,
                kernel_samples,
                cov_samples,
                nk: None,
                seed,
            };
            let r = gp_empirical_check(&qnn, &d, &probe_inputs(probes, qnn.spec.input_dim), &cfg)?;
            match out {
                Some(p) => io::write_json(&p, &r)?,
                None => print_json(&r),
            }
        }
        Command::Stats(StatsCmd::InitEnsemble {
            circuit,
            inputs,
            probes,
            samples,
            seed,
            law,
            out,
        }) => {
            let qnn = load_qnn(&circuit)?;
            let xs = match inputs {
                Some(p) => io::read_inputs(&p)?,
                None => probe_inputs(probes, qnn.spec.input_dim),
            };
            let law = match law {
                LawArg::Uniform => InitLaw::Uniform,
                LawArg::Pathological => InitLaw::Pathological,
            };
            let ens = sample_init_ensemble(&qnn, &xs, samples, seed, law)?;
            io::write_ensemble(&out, &ens)?;
            print_json(&serde_json::json!({
                "samples": ens.samples(), "probes": xs.len(), "within_bound": ens.within_bound(),
            }));
        }
        Command::Stats(StatsCmd::Cumulants { ensemble, order }) => {
            let ens = ensemble_from(&ensemble, 0, 1.0)?;
            print_json(&cumulants(&ens, order)?);
        }
        Command::Stats(StatsCmd::Normality { ensemble }) => {
            let ens = ensemble_from(&ensemble, 0, 1.0)?;
            print_json(&normality_tests(&ens)?);
        }
        Command::Stats(StatsCmd::Janson { ensemble, circuit, order }) => {
            let qnn = load_qnn(&circuit)?;
            let ens = ensemble_from(&ensemble, qnn.m(), qnn.normalization())?;
            let g = build_dependency_graph(&qnn.lci);
            print_json(&serde_json::json!({
                "max_degree": g.max_degree,
                "degree_bound": g.degree_bound,
                "reports": janson_diagnostic(&ens, &g, order)?,
            }));
        }
        Command::Reproduce { suite, seed, json } => {
            let results = reproduce(&suite, seed)?;
            if json {
                print_json(&results);
            } else {
                for r in &results {
                    println!("{r}");
                }
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(1);
            }
        }
        Command::Run { config } => {
            let out = run::run_config(&config)?;
            print_json(&serde_json::json!({ "output_dir": out.display().to_string() }));
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
