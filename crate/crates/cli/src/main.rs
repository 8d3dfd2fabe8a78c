use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cgolab_core::cgo::{self, NeumannOptions};
use cgolab_core::inverse::{identity_lhs, identity_rhs, reconstruct_born_with, EPS_FLOOR};
use cgolab_core::io::spiral_modes;
use cgolab_core::multiplier::BenchOptions;
use cgolab_core::{
    bench_multiplier_norm, evolve, gen_dataset, reconstruct_iterative, save_field, uniqueness_gap, AnyField, Basis,
    Complex64, Dataset, Error, Potential, ReconOptions, RunConfig, SpatialField, StateMap,
};

#[derive(Parser, Debug)]
#[command(name = "cgolab", version, about = "Schrodinger potentials, CGO solutions and Born reconstruction")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Direction, e.g. "2,0".
    #[arg(long, global = true, allow_hyphen_values = true)]
    nu: Option<String>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward solve; writes the trajectory.
    Simulate {
        /// Initial mode "k1,k2"; a centred Gaussian packet when absent.
        #[arg(long, allow_hyphen_values = true)]
        mode: Option<String>,
    },
    /// Generates an initial-to-final-state dataset.
    GenData {
        #[arg(long, default_value_t = 25)]
        n: usize,
        #[arg(long, value_enum, default_value_t = BasisArg::Fourier)]
        basis: BasisArg,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Builds a CGO solution and writes iteration diagnostics.
    Cgo {
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        sign: i8,
        /// Width of the transverse Gaussian amplitude.
        #[arg(long, default_value_t = 1.0)]
        width: f64,
    },
    /// Compares both sides of the orthogonality identity on mode pairs.
    VerifyIdentity {
        #[arg(long, default_value_t = 3)]
        probes: usize,
    },
    /// Empirical Y/X ratios of the multiplier.
    BenchMultiplier {
        #[arg(long, default_value_t = 8)]
        trials: usize,
    },
    /// Recovers the potential from a dataset or a simulated map.
    Reconstruct {
        #[arg(long, value_enum, default_value_t = MethodArg::Born)]
        method: MethodArg,
        #[arg(long)]
        time_independent: bool,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        iters: usize,
    },
    /// Lower bound on the distance between two initial-to-final-state maps.
    UniquenessGap {
        #[arg(long, default_value_t = 4)]
        probes: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BasisArg {
    Fourier,
    Gaussian,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Born,
    Iterative,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| Error::Config(format!("cannot parse {p:?} in {s:?}"))))
        .collect()
}

fn out_path(cli: &Cli, cfg: &RunConfig, default: &str) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.paths.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(default))
}

fn with_suffix(p: &PathBuf, suffix: &str) -> PathBuf {
    let mut s = p.clone().into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.theta {
        cfg.theta = t;
    }
    if let Some(t) = cli.tol {
        cfg.tol = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let grid = cfg.grid;
    let nu = || -> Result<Vec<f64>, Error> {
        let v = match &cli.nu {
            Some(s) => parse_list::<f64>(s)?,
            None => {
                let mut v = vec![0.0; grid.n_dim];
                v[grid.n_dim - 1] = 8.0;
                v
            }
        };
        if v.len() != grid.n_dim {
            return Err(Error::Config(format!("nu needs {} components", grid.n_dim)));
        }
        Ok(v)
    };
    match &cli.cmd {
        Command::Simulate { mode } => {
            let v = cfg.potential.build(grid)?;
            let f = match mode {
                Some(s) => {
                    let k = parse_list::<i64>(s)?;
                    if k.len() != grid.n_dim {
                        return Err(Error::Config("mode dimension differs from grid".into()));
                    }
                    SpatialField::mode(grid, &k)
                }
                None => SpatialField::from_fn(grid, |x| {
                    Complex64::new((-x.iter().map(|a| a * a).sum::<f64>() / 2.0).exp(), 0.0)
                }),
            };
            let traj = evolve(&f, &v)?;
            let out = out_path(cli, &cfg, "trajectory.cgf");
            save_field(&out, &AnyField::SpaceTime(traj.to_field()))?;
            println!("wrote {}", out.display());
        }
        Command::GenData { n, basis, noise } => {
            let v = cfg.potential.build(grid)?;
            let b = match basis {
                BasisArg::Fourier => Basis::Fourier,
                BasisArg::Gaussian => Basis::Gaussian,
            };
            let ds = gen_dataset(&v, b, *n, cfg.seed, *noise)?;
            let out = out_path(cli, &cfg, "dataset.cgd");
            ds.save(&out)?;
            println!("wrote {} entries to {}", ds.entries.len(), out.display());
        }
        Command::Cgo { sign, width } => {
            let v = cfg.potential.build(grid)?;
            let opts = NeumannOptions {
                theta: cfg.theta,
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                delta: cfg.delta,
                ..Default::default()
            };
            let psi = cgo::transverse_gaussian(&grid, *width);
            let sol = cgo::construct(&v, &psi, &nu()?, *sign, &opts)?;
            let mut csv = String::from("iter,increment_y_norm,residual\n");
            for (i, (a, r)) in sol.increment_history.iter().zip(&sol.residual_history).enumerate() {
                writeln!(csv, "{},{:e},{:e}", i + 1, a, r).expect("string write");
            }
            let out = out_path(cli, &cfg, "cgo.csv");
            fs::write(&out, csv)?;
            let summary = json!({
                "nu": sol.phase.nu,
                "sign": sol.phase.sign,
                "theta": opts.theta,
                "tol": opts.tol,
                "converged": sol.converged,
                "iterations": sol.iterations,
                "contraction": sol.contraction,
                "y_norm_flat": sol.y_norm_flat,
                "x_norm_source": sol.x_norm_source,
                "c_bench": sol.c_bench,
                "residual": sol.residual,
                "weighted_residual": cgo::weighted_residual(&sol)?,
                "multiplication_bound": sol.multiplication_bound,
                "summability": sol.summability,
            });
            fs::write(with_suffix(&out, ".json"), serde_json::to_string_pretty(&summary).expect("json"))?;
            if !sol.converged {
                return Err(Error::NeumannDivergence {
                    iterations: sol.iterations,
                    contraction: sol.contraction,
                });
            }
            println!("converged in {} iterations; wrote {}", sol.iterations, out.display());
        }
        Command::VerifyIdentity { probes } => {
            let v1 = cfg.potential.build(grid)?;
            let v2 = cfg.potential2.build(grid)?;
            let modes: Vec<Vec<i64>> = spiral_modes(&grid).into_iter().take(*probes).collect();
            let mut csv = String::from("f,g,lhs_re,lhs_im,rhs_re,rhs_im,rel_gap\n");
            let mut worst: f64 = 0.0;
            for (i, kf) in modes.iter().enumerate() {
                for (j, kg) in modes.iter().enumerate() {
                    let f = SpatialField::mode(grid, kf);
                    let g = SpatialField::mode(grid, kg);
                    let l = identity_lhs(&v1, &v2, &f, &g)?;
                    let r = identity_rhs(&v1, &v2, &f, &g)?;
                    let gap = (l - r).norm() / l.norm().max(r.norm()).max(EPS_FLOOR);
                    worst = worst.max(gap);
                    writeln!(csv, "{i},{j},{:e},{:e},{:e},{:e},{:e}", l.re, l.im, r.re, r.im, gap).expect("string write");
                }
            }
            let out = out_path(cli, &cfg, "identity.csv");
            fs::write(&out, csv)?;
            if worst > 1e-3 {
                return Err(Error::Tolerance(format!("identity gap {worst:e} exceeds 1e-3")));
            }
            println!("max relative gap {worst:e}; wrote {}", out.display());
        }
        Command::BenchMultiplier { trials } => {
            let opts = BenchOptions {
                delta: cfg.delta.max(f64::MIN_POSITIVE),
                ..Default::default()
            };
            let rep = bench_multiplier_norm(&grid, &nu()?, cfg.theta, *trials, cfg.seed, &opts)?;
            let out = out_path(cli, &cfg, "bench.csv");
            fs::write(&out, rep.csv())?;
            println!("max ratio {:e}; wrote {}", rep.max, out.display());
        }
        Command::Reconstruct { method, time_independent, dataset, iters } => {
            let ds_path = dataset.clone().or_else(|| cfg.paths.dataset.as_ref().map(PathBuf::from));
            let ds;
            let solver;
            let map: &dyn StateMap = match ds_path {
                Some(p) => {
                    ds = Dataset::load(p)?;
                    &ds
                }
                None => {
                    solver = cfg.potential.build(grid)?;
                    &solver
                }
            };
            let opts = if *time_independent {
                ReconOptions::time_independent()
            } else {
                ReconOptions::time_dependent()
            };
            let out = out_path(cli, &cfg, "estimate.cgf");
            let mut samples = String::from("tau");
            for a in 0..map.grid().n_dim {
                write!(samples, ",xi{}", a + 1).expect("string write");
            }
            samples.push_str(",re,im,weight\n");
            let rep = match method {
                MethodArg::Born => {
                    let mut sink = |s: &cgolab_core::FrequencySample| {
                        write!(samples, "{:e}", s.tau).expect("string write");
                        for x in &s.xi {
                            write!(samples, ",{x:e}").expect("string write");
                        }
                        writeln!(samples, ",{:e},{:e},{:e}", s.value.re, s.value.im, s.weight).expect("string write");
                    };
                    reconstruct_born_with(map, &opts, Some(&mut sink))?
                }
                MethodArg::Iterative => reconstruct_iterative(map, &Potential::zero(map.grid()), *iters, &opts)?,
            };
            let mut rep = rep;
            if dataset.is_none() && cfg.paths.dataset.is_none() {
                let truth = cfg.potential.build(grid)?;
                if truth.max_abs() > 0.0 {
                    rep.score(&truth)?;
                }
            }
            save_field(&out, &AnyField::SpaceTime(rep.estimate.slab_field()))?;
            let report = json!({
                "method": rep.method,
                "relative_l2_error": rep.relative_l2_error,
                "samples_used": rep.samples_used,
                "conditioning": rep.conditioning,
                "rank_deficient": rep.rank_deficient,
                "misfit_history": rep.misfit_history,
                "early_stop": rep.early_stop,
            });
            fs::write(with_suffix(&out, ".json"), serde_json::to_string_pretty(&report).expect("json"))?;
            if matches!(method, MethodArg::Born) {
                fs::write(with_suffix(&out, ".samples.csv"), samples)?;
            }
            println!("wrote {}", out.display());
        }
        Command::UniquenessGap { probes } => {
            let v1 = cfg.potential.build(grid)?;
            let v2 = cfg.potential2.build(grid)?;
            let gap = uniqueness_gap(&v1, &v2, *probes, cfg.seed)?;
            println!("{gap:e}");
            if cli.out.is_some() || cfg.paths.out.is_some() {
                fs::write(out_path(cli, &cfg, "gap.txt"), format!("{gap:e}\n"))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
