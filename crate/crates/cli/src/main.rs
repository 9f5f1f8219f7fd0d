use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use submis::bounds::{AlphaPolicy, Tolerances};
use submis::expansion::{self, ExpansionReport};
use submis::experiments::{self, PhaseConfig, SweepRow, SynthConfig};
use submis::io;
use submis::model::ProblemInstance;
use submis::numlin;
use submis::subspace::{self, Subspace};

mod grid;

#[derive(Parser, Debug)]
#[command(name = "submis", version, about = "Error floors of Gaussian classifiers trained on mismatched low-rank models")]
struct Cli {
    /// Worker threads for Monte Carlo and phase runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[arg(long, value_enum, global = true)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether the error vanishes at low noise. Exit 0: no floor, 2: floor, 1: error.
    Check(InstanceArgs),
    /// Report the decay exponent, expansion constant and per-pair diagnostics.
    Expand(InstanceArgs),
    /// Evaluate the union bound on a grid of 1/sigma^2 values in dB.
    Bound {
        #[command(flatten)]
        inst: InstanceArgs,
        /// dB grid: `0,10,20` or `start:stop:step`.
        #[arg(long, default_value = "0:90:10")]
        grid: String,
    },
    /// Bound plus Monte Carlo error of the mismatched classifier.
    Simulate {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, default_value = "0:90:10")]
        grid: String,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, env = "SUBMIS_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Principal angles and correlation distances between two bases (CSV, one row per ambient coordinate).
    Angles {
        a: PathBuf,
        b: PathBuf,
        /// Use the columns as given (must be orthonormal) instead of orthonormalizing.
        #[arg(long)]
        orthonormal: bool,
    },
    /// Condition pass rate and quantile test error against training set size.
    Phase {
        /// Dataset CSV: label in the first column, features after it.
        #[arg(long)]
        data: PathBuf,
        /// Rank of the models fitted to the whole training pool.
        #[arg(long)]
        rank: usize,
        /// Rank of the models fitted to the sampled training rows (default: --rank).
        #[arg(long)]
        mismatched_rank: Option<usize>,
        /// Cells separated by commas; a cell is one count for every class or
        /// per-class counts joined by `/`, e.g. `4,8,16/16/20,50`.
        #[arg(long, default_value = "4,8,16,50")]
        n_grid: String,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0.9)]
        p_p: f64,
        /// Noise variance of the evaluation classifier.
        #[arg(long)]
        sigma2_eval: f64,
        #[arg(long, default_value_t = 100)]
        test_per_class: usize,
        #[arg(long, env = "SUBMIS_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic union-of-subspaces dataset as CSV.
    GenSynth {
        #[arg(long, default_value_t = 30)]
        ambient_dim: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        /// Per-class signal eigenvalues; their count is the class rank.
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.2,0.05")]
        eigenvalues: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        samples_per_class: usize,
        #[arg(long, default_value_t = 5e-3)]
        noise_var: f64,
        /// Draw class subspaces independently instead of mutually orthogonal.
        #[arg(long)]
        generic: bool,
        #[arg(long, env = "SUBMIS_SEED", default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone)]
struct InstanceArgs {
    /// Named built-in instance (tableIII-a..d, rob1..3, example1, example1-modified, example2).
    #[arg(long, conflicts_with = "instance", required_unless_present = "instance")]
    catalog: Option<String>,
    /// Instance JSON file.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// JSON file with `alpha` and `tolerances` settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fraction of the admissible alpha interval, in (0, 1).
    #[arg(long)]
    alpha_scale: Option<f64>,
    /// Same alpha for every pair.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Cosine slack for deciding that two subspaces share a direction.
    #[arg(long)]
    cos_tol: Option<f64>,
    /// Absolute positive-definiteness threshold.
    #[arg(long)]
    pd_tol: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    alpha: Option<AlphaPolicy>,
    tolerances: Option<Tolerances>,
}

struct Setup {
    instance: ProblemInstance,
    policy: AlphaPolicy,
    tol: Tolerances,
}

impl InstanceArgs {
    fn setup(&self) -> Result<Setup> {
        let instance = match (&self.catalog, &self.instance) {
            (Some(name), _) => experiments::catalog_instance(name)?.instance,
            (None, Some(path)) => {
                io::load_instance(path).with_context(|| format!("loading {}", path.display()))?
            }
            (None, None) => bail!("pass --catalog or --instance"),
        };
        let cfg: ConfigFile = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ConfigFile::default(),
        };
        let mut policy = cfg.alpha.unwrap_or_default();
        if let Some(s) = self.alpha_scale {
            policy.scale = s;
        }
        if self.alpha.is_some() {
            policy.fixed = self.alpha;
        }
        let mut tol = cfg.tolerances.unwrap_or_default();
        if let Some(v) = self.rank_tol {
            tol.rank_rel = v;
        }
        if let Some(v) = self.cos_tol {
            tol.cos = v;
        }
        if self.pd_tol.is_some() {
            tol.pd = self.pd_tol;
        }
        policy.validate()?;
        tol.validate()?;
        Ok(Setup { instance, policy, tol })
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn expansion_tsv(rep: &ExpansionReport) -> String {
    let mut out = String::from("i\tj\td_ij\tnec_holds\tsuff_holds\tcorollary2_holds\ts_w\ts_v\talpha\ta_ij\n");
    for p in &rep.pairs {
        let a = p.a_ij.map_or_else(|| "nan".to_string(), |v| format!("{v:e}"));
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:e}\t{a}\n",
            p.i, p.j, p.d_ij, p.nec_holds, p.suff_holds, p.corollary2_holds, p.s_w, p.s_v, p.alpha
        ));
    }
    out
}

fn sweep_json(rows: &[SweepRow]) -> String {
    serde_json::to_string_pretty(rows).expect("plain data serializes")
}

#[derive(Serialize)]
struct AnglesReport {
    dim_a: usize,
    dim_b: usize,
    cosines: Vec<f64>,
    angles: Vec<f64>,
    d_max: f64,
    d_min: f64,
}

fn read_basis(path: &Path, orthonormal: bool) -> Result<Subspace> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m = numlin::parse_matrix_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    let s = if orthonormal {
        Subspace::from_orthonormal(m)?
    } else {
        Subspace::from_spanning(&m)?
    };
    Ok(s)
}

/// Returns the process exit code on success.
fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let format = cli.format;
    match cli.command {
        Command::Check(args) => {
            let s = args.setup()?;
            let rep = expansion::expand(&s.instance, &s.policy, &s.tol)?;
            emit(&cli.output, &(rep.to_json() + "\n"))?;
            Ok(if rep.verdict.has_floor() { 2 } else { 0 })
        }
        Command::Expand(args) => {
            let s = args.setup()?;
            let rep = expansion::expand(&s.instance, &s.policy, &s.tol)?;
            let text = match format.unwrap_or(Format::Json) {
                Format::Json => rep.to_json() + "\n",
                Format::Tsv => expansion_tsv(&rep),
            };
            emit(&cli.output, &text)?;
            Ok(0)
        }
        Command::Bound { inst, grid } => {
            let s = inst.setup()?;
            let g = grid::parse_db_grid(&grid)?;
            let rows = experiments::sweep_bound(&s.instance, &g, &s.policy, &s.tol)?;
            let text = match format.unwrap_or(Format::Tsv) {
                Format::Tsv => experiments::bound_tsv(&s.instance, &rows),
                Format::Json => sweep_json(&rows) + "\n",
            };
            emit(&cli.output, &text)?;
            Ok(0)
        }
        Command::Simulate { inst, grid, trials, seed } => {
            let s = inst.setup()?;
            if trials == 0 {
                bail!("--trials must be at least 1");
            }
            let g = grid::parse_db_grid(&grid)?;
            let rows = experiments::sweep_noise(&s.instance, &g, trials, seed, &s.policy, &s.tol)?;
            let text = match format.unwrap_or(Format::Tsv) {
                Format::Tsv => experiments::simulate_tsv(&s.instance, &rows),
                Format::Json => sweep_json(&rows) + "\n",
            };
            emit(&cli.output, &text)?;
            Ok(0)
        }
        Command::Angles { a, b, orthonormal } => {
            let ua = read_basis(&a, orthonormal)?;
            let ub = read_basis(&b, orthonormal)?;
            if ua.is_trivial() || ub.is_trivial() {
                bail!("both bases need at least one nonzero column");
            }
            let pa = subspace::principal_angles(&ua, &ub)?;
            let rep = AnglesReport {
                dim_a: ua.dim(),
                dim_b: ub.dim(),
                d_max: subspace::d_max(&ua, &ub)?,
                d_min: subspace::d_min(&ua, &ub)?,
                cosines: pa.cosines,
                angles: pa.angles,
            };
            let text = match format.unwrap_or(Format::Json) {
                Format::Json => serde_json::to_string_pretty(&rep)? + "\n",
                Format::Tsv => {
                    let mut t = String::from("k\tcosine\tangle\n");
                    for (k, (c, th)) in rep.cosines.iter().zip(&rep.angles).enumerate() {
                        t.push_str(&format!("{k}\t{c:e}\t{th:e}\n"));
                    }
                    t
                }
            };
            emit(&cli.output, &text)?;
            Ok(0)
        }
        Command::Phase {
            data,
            rank,
            mismatched_rank,
            n_grid,
            runs,
            p_p,
            sigma2_eval,
            test_per_class,
            seed,
        } => {
            let text = fs::read_to_string(&data).with_context(|| format!("reading {}", data.display()))?;
            let ds = io::parse_dataset_csv(&text).with_context(|| format!("parsing {}", data.display()))?;
            let cfg = PhaseConfig {
                rank,
                mismatched_rank: mismatched_rank.unwrap_or(rank),
                n_grid: grid::parse_n_grid(&n_grid, ds.num_classes())?,
                runs,
                p_p,
                sigma2_eval,
                test_per_class,
                seed,
            };
            let cells = experiments::phase_transition(&ds, &cfg)?;
            let text = match format.unwrap_or(Format::Tsv) {
                Format::Tsv => experiments::phase_tsv(&cells),
                Format::Json => serde_json::to_string_pretty(&cells)? + "\n",
            };
            emit(&cli.output, &text)?;
            Ok(0)
        }
        Command::GenSynth {
            ambient_dim,
            classes,
            eigenvalues,
            samples_per_class,
            noise_var,
            generic,
            seed,
        } => {
            if format == Some(Format::Json) {
                bail!("gen-synth writes CSV only");
            }
            let cfg = SynthConfig {
                ambient_dim,
                classes,
                eigenvalues,
                samples_per_class,
                noise_var,
                orthogonal: !generic,
                seed,
            };
            let ds = experiments::synthetic_union_of_subspaces(&cfg)?;
            emit(&cli.output, &io::write_dataset_csv(&ds))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which would read as "floor predicted"
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
