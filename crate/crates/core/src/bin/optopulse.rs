use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use optopulse::bch::{compile_linear_beamsplitter, compile_nonlinear_swap, trotterize, Compensation, Sideband};
use optopulse::harness::{
    self, feasibility_csv, feasibility_table, linear_swap_prediction, opt_scenario, optimizer_settings, reproduce_fig1,
    reproduce_fig2, reproduce_fig4, run_scenario, run_swap, write_report, Fig1Config, Fig2Config, Fig4Config, RunDir,
};
use optopulse::optimize::{kappa_sweep, optimize, OptScenario, Strategy, SweepStrategy};
use optopulse::params::{derive_g0, FeasibilityInput, SystemParams};
use optopulse::scenario::{ControlSource, Scenario};
use optopulse::{Error, Result, PERIOD};

#[derive(Parser)]
#[command(name = "optopulse", version, about = "Pulsed optomechanical cooling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a scenario with its engine and control source.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Parent directory of the timestamped run directory.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Optimize the coupling schedule of a scenario.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; defaults to `report.json` in the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        run_dir: PathBuf,
    },
    /// Every protocol arm at every κ (initial n, G_max and length from the scenario).
    SweepKappa {
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
        kappas: Vec<f64>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Table path; defaults to `sweep.csv` in the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        run_dir: PathBuf,
    },
    /// Compile an analytical pulse sequence to JSON.
    CompileBch {
        /// Scenario with a compiler control source or a swap block.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        g: f64,
        #[arg(long, default_value_t = 0.01)]
        t1: f64,
        #[arg(long, default_value_t = 0.1)]
        tf: f64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, value_enum, default_value_t = SidebandArg::Red)]
        sideband: SidebandArg,
        #[arg(long, value_enum, default_value_t = CompensationArg::Concurrent)]
        compensation: CompensationArg,
        #[arg(long, default_value_t = 1.0)]
        repetitions: f64,
        /// Print only the predicted effective terms.
        #[arg(long)]
        emit_predicted: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nested double-cavity swap in the Fock simulator.
    FockSwap {
        #[arg(long)]
        scenario: PathBuf,
        /// Drop the β p_a counter-drive.
        #[arg(long)]
        without_counter_drive: bool,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Feasibility numbers, or g0 for a custom setup.
    Feasibility {
        /// JSON FeasibilityInput.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Regenerate a figure's data set.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SidebandArg {
    Red,
    Blue,
}

#[derive(Clone, Copy, ValueEnum)]
enum CompensationArg {
    Concurrent,
    Separate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Fig1,
    Fig2,
    Fig4,
    Feasibility,
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let (dir, summary) = run_scenario(&sc, &out)?;
            eprintln!("run directory: {}", dir.display());
            print_json(&summary);
        }
        Command::Optimize {
            scenario,
            strategy,
            budget,
            seed,
            out,
            run_dir,
        } => {
            let mut sc = Scenario::load(&scenario)?;
            if let (Some(s), Some(block)) = (&strategy, sc.optimizer.as_mut()) {
                block.strategy = s.parse()?;
            }
            let (opt, initial) = opt_scenario(&sc)?;
            let strategy = sc.optimizer.as_ref().map_or(Strategy::AnalyticSeed, |b| b.strategy);
            let settings = optimizer_settings(&sc, budget, seed);
            let report = optimize(&initial, &opt, strategy, &settings)?;
            let mut dir = RunDir::create(&run_dir, &format!("optimize-{}", sc.name), "optimize", settings.seed)?;
            dir.write("scenario.json", sc.to_json().as_bytes(), "resolved scenario", &[])?;
            write_report(&mut dir, "", &report, &opt)?;
            if let Some(p) = out {
                write_out(&p, report.to_json().as_bytes())?;
            }
            eprintln!("run directory: {}", dir.finish()?.display());
            println!(
                "initial {:.6e} -> best {:.6e} after {} evaluations",
                report.initial_objective, report.best_objective, report.evaluations
            );
        }
        Command::SweepKappa {
            kappas,
            scenario,
            budget,
            seed,
            out,
            run_dir,
        } => {
            let defaults = Fig2Config::default();
            let (template, g_max) = match scenario {
                Some(p) => {
                    let sc = Scenario::load(&p)?;
                    let (opt, _) = opt_scenario(&sc)?;
                    let g = sc.optimizer.as_ref().map_or(defaults.g_max, |b| b.g_max_nu);
                    (opt, g)
                }
                None => (
                    OptScenario::thermal(SystemParams::default(), defaults.n0, defaults.periods * PERIOD),
                    defaults.g_max,
                ),
            };
            let settings = defaults.settings.with_budget(budget).with_seed(seed);
            let table = kappa_sweep(&template, g_max, &kappas, &SweepStrategy::ALL, &settings)?;
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            let mut dir = RunDir::create(&run_dir, "sweep-kappa", "sweep-kappa", seed)?;
            dir.write_csv("sweep.csv", &csv, "final occupations per κ and protocol arm")?;
            dir.write_json("sweep.json", &table, "sweep table with trend violations")?;
            if let Some(p) = out {
                write_out(&p, &csv)?;
            }
            eprintln!("run directory: {}", dir.finish()?.display());
            print!("{}", String::from_utf8_lossy(&csv));
            for v in &table.trend_violations {
                eprintln!("trend: {v}");
            }
        }
        Command::CompileBch {
            scenario,
            g,
            t1,
            tf,
            delta,
            sideband,
            compensation,
            repetitions,
            emit_predicted,
            out,
        } => {
            let schedule = match scenario {
                Some(p) => {
                    let sc = Scenario::load(&p)?;
                    match (&sc.control, &sc.swap) {
                        (ControlSource::Compiler { linear }, _) => linear.compile(&sc.params)?,
                        (_, Some(swap)) => compile_nonlinear_swap(&sc.params, &swap.spec(&sc.params)?)?,
                        _ => {
                            return Err(Error::schema(
                                "control",
                                "compile-bch needs a compiler control source or a swap block",
                            ))
                        }
                    }
                }
                None => {
                    let params = SystemParams {
                        delta,
                        ..Default::default()
                    };
                    let sb = match sideband {
                        SidebandArg::Red => Sideband::Red,
                        SidebandArg::Blue => Sideband::Blue,
                    };
                    let comp = match compensation {
                        CompensationArg::Concurrent => Compensation::Concurrent,
                        CompensationArg::Separate => Compensation::Separate,
                    };
                    let cycle = compile_linear_beamsplitter(&params, g, t1, tf, sb, comp)?;
                    if repetitions == 1.0 {
                        cycle
                    } else {
                        trotterize(&cycle, repetitions)?
                    }
                }
            };
            for w in &schedule.warnings {
                eprintln!("warning: {w}");
            }
            let text = if emit_predicted {
                serde_json::to_string_pretty(&schedule.predicted.terms()).expect("terms serialize")
            } else {
                schedule.to_json()
            };
            match out {
                Some(p) => write_out(&p, text.as_bytes())?,
                None => println!("{text}"),
            }
        }
        Command::FockSwap {
            scenario,
            without_counter_drive,
            out,
        } => {
            let sc = Scenario::load(&scenario)?;
            let swap = sc
                .swap
                .as_ref()
                .ok_or_else(|| Error::schema("swap", "fock-swap needs a swap block"))?;
            let r = run_swap(&sc.params, swap, without_counter_drive)?;
            let prediction = linear_swap_prediction(&sc.params, swap, r.cycles)?;
            let mut dir = RunDir::create(&out, &format!("fock-swap-{}", sc.name), "fock-swap", sc.seed)?;
            dir.write("scenario.json", sc.to_json().as_bytes(), "resolved scenario", &[])?;
            let mut csv = Vec::new();
            r.trajectory.write_csv(&mut csv)?;
            dir.write_csv("trajectory.csv", &csv, "mode occupations in the Fock simulator")?;
            let mut pcsv = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut pcsv);
                w.write_record(["t", "n_s", "n_m"]).map_err(Error::from)?;
                for (t, ns, nm) in &prediction {
                    w.write_record([t.to_string(), ns.to_string(), nm.to_string()])
                        .map_err(Error::from)?;
                }
                w.flush()?;
            }
            dir.write_csv("linear_prediction.csv", &pcsv, "Gaussian prediction at cycle ends")?;
            let summary = serde_json::json!({
                "cycles": r.cycles,
                "swap_time": r.schedule.total_time(),
                "initial_n_m": r.initial_n_m,
                "final_n_m": r.final_n_m,
                "final_n_s": r.final_n_s,
                "final_n_a": r.final_n_a,
                "transfer": r.transfer(),
                "without_counter_drive": without_counter_drive,
            });
            dir.write_json("summary.json", &summary, "swap summary")?;
            eprintln!("run directory: {}", dir.finish()?.display());
            print_json(&summary);
        }
        Command::Feasibility { input } => match input {
            Some(p) => {
                let text = std::fs::read_to_string(&p)?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                let f: FeasibilityInput = serde_path_to_error::deserialize(de)
                    .map_err(|e| Error::schema(e.path().to_string(), e.inner().to_string()))?;
                let g0 = derive_g0(&f)?;
                let params = SystemParams::from_feasibility(&f, 1.0)?;
                print_json(&serde_json::json!({
                    "g0_hz": g0,
                    "g0_nu": params.g0,
                    "kappa_nu": params.kappa,
                    "gamma_m_nu": params.gamma_m,
                    "nbar_env": params.nbar_env,
                    "regime": params.regime(),
                }));
            }
            None => {
                let t = feasibility_table()?;
                print!("{}", String::from_utf8_lossy(&feasibility_csv(&t)?));
            }
        },
        Command::Reproduce {
            target,
            budget,
            seed,
            out,
        } => reproduce(target, budget, seed, &out)?,
    }
    Ok(())
}

fn reproduce(target: Target, budget: Option<usize>, seed: u64, out: &Path) -> Result<()> {
    match target {
        Target::Fig1 => {
            let mut cfg = Fig1Config::default();
            cfg.settings = cfg.settings.with_seed(seed);
            if let Some(b) = budget {
                cfg.settings.budget = b;
            }
            let (res, sc) = reproduce_fig1(&cfg)?;
            let mut dir = RunDir::create(out, "fig1", "reproduce fig1", seed)?;
            write_report(&mut dir, "", &res.report, &sc)?;
            dir.write_csv("seed_control.csv", &harness::control_csv(&res.seed)?, "analytic seed")?;
            dir.write_json("fig1.json", &res, "configuration, seed and result")?;
            eprintln!("run directory: {}", dir.finish()?.display());
            println!(
                "final thermal occupation {:.3e} (total {:.3e}) in {:.3} periods, Γ = {:?}",
                res.report.best_objective,
                res.report.final_phonon_number,
                res.report.total_time_periods,
                res.cooling_rate
            );
        }
        Target::Fig2 => {
            let mut cfg = Fig2Config::default();
            cfg.settings = cfg.settings.with_seed(seed);
            if let Some(b) = budget {
                cfg.settings.budget = b;
            }
            let res = reproduce_fig2(&cfg)?;
            let mut csv = Vec::new();
            res.table.write_csv(&mut csv)?;
            let mut dir = RunDir::create(out, "fig2", "reproduce fig2", seed)?;
            dir.write_csv("sweep.csv", &csv, "final occupations per κ and protocol arm")?;
            dir.write_json("fig2.json", &res, "sweep, reference point and continuation")?;
            eprintln!("run directory: {}", dir.finish()?.display());
            print!("{}", String::from_utf8_lossy(&csv));
            for v in &res.table.trend_violations {
                eprintln!("trend: {v}");
            }
        }
        Target::Fig4 => {
            let cfg = Fig4Config::default();
            let (res, traj) = reproduce_fig4(&cfg)?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv)?;
            let mut dir = RunDir::create(out, "fig4", "reproduce fig4", seed)?;
            dir.write_csv("trajectory.csv", &csv, "mode occupations during the swap")?;
            dir.write_json("fig4.json", &res, "swap transfer and truncation check")?;
            eprintln!("run directory: {}", dir.finish()?.display());
            print_json(&res);
        }
        Target::Feasibility => {
            let t = feasibility_table()?;
            let csv = feasibility_csv(&t)?;
            let mut dir = RunDir::create(out, "feasibility", "reproduce feasibility", seed)?;
            dir.write_csv("feasibility.csv", &csv, "feasibility line items")?;
            eprintln!("run directory: {}", dir.finish()?.display());
            print!("{}", String::from_utf8_lossy(&csv));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
