use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lotsizing::demand::DemandModel;
use lotsizing::experiment::{
    example_4period, generate_mvn_bed, generate_ts_bed, instance_seed, run, write_csv, write_summary, Instance,
    KLevels, Method, Partition, RunConfig, SolverSpec,
};
use lotsizing::loss::LossMode;
use lotsizing::policy::{cycle_cost, solve_rs, SolverSettings, UnitCostVariant};
use lotsizing::sdp::{solve_sdp, SdpConfig};
use lotsizing::simulate::{simulate_rhc, simulate_rs, simulate_sdp, RhcOptions, SimOptions};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Stochastic lot sizing with (R,S) policies under correlated demand.
#[derive(Parser)]
#[command(name = "lotsizing", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_name = "N")]
    parallel: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SolverArgs {
    /// Piecewise segments W.
    #[arg(long, value_name = "W")]
    segments: Option<usize>,
    /// exact | piecewise
    #[arg(long)]
    mode: Option<LossMode>,
    /// minimax | equal
    #[arg(long)]
    partition: Option<Partition>,
    /// expected | complementary
    #[arg(long)]
    unit_cost_variant: Option<UnitCostVariant>,
}

impl SolverArgs {
    fn apply(&self, spec: &mut SolverSpec) {
        if let Some(w) = self.segments {
            spec.segments = w;
        }
        if let Some(m) = self.mode {
            spec.mode = m;
        }
        if let Some(p) = self.partition {
            spec.partition = p;
        }
        if let Some(u) = self.unit_cost_variant {
            spec.unit_cost = u;
        }
    }
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long, default_value_t = 100_000, value_name = "N")]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct SdpArgs {
    /// Demand cells per period.
    #[arg(long, default_value_t = SdpConfig::default().demand_cells)]
    cells: usize,
    /// Grid points for the conditional-mean state.
    #[arg(long, default_value_t = SdpConfig::default().info_points)]
    info_points: usize,
    /// Inventory lattice step.
    #[arg(long)]
    step: Option<f64>,
}

impl SdpArgs {
    fn config(&self) -> SdpConfig {
        SdpConfig {
            demand_cells: self.cells,
            info_points: self.info_points,
            inventory_step: self.step,
            ..SdpConfig::default()
        }
    }
}

#[derive(Args, Clone)]
struct RhcArgs {
    /// Target relative 95% half-width.
    #[arg(long, default_value_t = 0.0003)]
    precision: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_reps: usize,
}

impl RhcArgs {
    fn options(&self, seed: u64) -> RhcOptions {
        RhcOptions {
            seed,
            rel_precision: self.precision,
            max_replications: self.max_reps,
            ..RhcOptions::default()
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated subset of rs,simulate,sdp,rhc.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Fixed-cost levels: tables (200/300) or prose (200/400).
    #[arg(long, default_value = "tables")]
    k_levels: KLevels,
    /// Keep only these patterns or processes.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<String>>,
    /// Fill the t_solve_s and t_sdp_s columns.
    #[arg(long)]
    record_times: bool,
    /// Write the per-factor means next to the rows.
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
    /// Write the generated instances as JSON and exit.
    #[arg(long, value_name = "FILE")]
    emit_instances: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    sdp: SdpArgs,
    #[command(flatten)]
    rhc: RhcArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the static (R,S) plan of each instance in a JSON file.
    Solve {
        instances: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Solve the dynamic-programming benchmark.
    Sdp {
        instances: PathBuf,
        #[command(flatten)]
        sdp: SdpArgs,
        /// Also simulate the optimal policy.
        #[arg(long)]
        simulate: bool,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Solve and simulate the (R,S) plan.
    Simulate {
        instances: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Simulate receding-horizon control.
    Rhc {
        instances: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        rhc: RhcArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the 320-instance correlated-normal bed.
    BenchMvn(BenchArgs),
    /// Run the 112-instance time-series bed.
    BenchTs(BenchArgs),
    /// Reproduce the 4-period worked example.
    #[command(name = "example-4period")]
    Example4period {
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        sdp: SdpArgs,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn emit_json(value: &Value, path: &Option<PathBuf>) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn load(path: &Path, solver: &SolverArgs) -> Result<Vec<Instance>> {
    let mut list = Instance::load(path).with_context(|| format!("reading {}", path.display()))?;
    for inst in &mut list {
        solver.apply(&mut inst.solver);
    }
    Ok(list)
}

fn seed_for(inst: &Instance, master: u64) -> u64 {
    inst.seed.unwrap_or_else(|| instance_seed(master, &inst.id))
}

fn each<F>(list: &[Instance], f: F) -> Result<Value>
where
    F: Fn(&Instance, &DemandModel, &SolverSettings) -> Result<Value>,
{
    let mut out = Vec::with_capacity(list.len());
    for inst in list {
        let model = inst.model()?;
        let settings = inst.solver.settings()?;
        let mut v = f(inst, &model, &settings).with_context(|| format!("instance `{}`", inst.id))?;
        v["id"] = json!(inst.id);
        out.push(v);
    }
    Ok(Value::Array(out))
}

fn bench(args: BenchArgs, mut bed: Vec<Instance>, default_methods: &[Method]) -> Result<()> {
    if let Some(only) = &args.only {
        bed.retain(|i| only.iter().any(|o| o == i.demand.label()));
        if bed.is_empty() {
            bail!("no instance matches {only:?}");
        }
    }
    for inst in &mut bed {
        args.solver.apply(&mut inst.solver);
    }
    if let Some(path) = &args.emit_instances {
        return emit_json(&serde_json::to_value(&bed)?, &Some(path.clone()));
    }
    let cfg = RunConfig {
        methods: args.methods.clone().unwrap_or_else(|| default_methods.to_vec()),
        replications: args.sim.reps,
        seed: args.sim.seed,
        record_times: args.record_times,
        sdp: args.sdp.config(),
        rhc: args.rhc.options(0),
    };
    let rows = run(&bed, &cfg);
    write_csv(&rows, output(&args.out)?)?;
    if let Some(path) = &args.summary {
        write_summary(&rows, output(&Some(path.clone()))?)?;
    }
    for r in rows.iter().filter(|r| !r.note.is_empty()) {
        eprintln!("{}: {}", r.instance_id, r.note);
    }
    Ok(())
}

fn example(solver: SolverArgs, sim: SimArgs, sdp: SdpArgs) -> Result<()> {
    let mut inst = example_4period();
    solver.apply(&mut inst.solver);
    let model = inst.model()?;
    let mvn = model.planning_mvn()?;
    let settings = inst.solver.settings()?;
    let p = &inst.costs;
    let single = p.fixed + cycle_cost(&mvn, 1, 4, 160.0, p, &settings, true)?;
    let two = 2.0 * p.fixed
        + cycle_cost(&mvn, 1, 2, 60.0, p, &settings, false)?
        + cycle_cost(&mvn, 3, 4, 100.0, p, &settings, true)?;
    let pol = solve_rs(&mvn, p, &settings)?;
    let opts = SimOptions::new(sim.reps, sim.seed);
    let rs_sim = simulate_rs(&pol, &model, p, &opts)?;
    let sol = solve_sdp(&mvn, p, &sdp.config())?;
    let sdp_sim = simulate_sdp(&sol, &model, p, &opts)?;
    println!("single cycle, S=160 at period 1     {single:10.2}");
    println!("two cycles, S=60 at 1 and S=100 at 3 {two:10.2}");
    println!("(R,S) reviews {:?}", pol.plan.order_periods());
    let levels: Vec<String> = pol.order_up_to.iter().map(|s| format!("{s:.2}")).collect();
    println!("(R,S) levels  [{}]", levels.join(", "));
    println!("(R,S) planned cost                   {:10.2}", pol.planned_cost);
    println!(
        "(R,S) simulated cost                 {:10.2} +- {:.2}",
        rs_sim.mean_cost, rs_sim.half_width_95
    );
    println!("SDP expected cost                    {:10.2}", sol.expected_total_cost);
    println!(
        "SDP simulated cost                   {:10.2} +- {:.2}",
        sdp_sim.mean_cost, sdp_sim.half_width_95
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.parallel {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Solve { instances, solver, out } => {
            let list = load(&instances, &solver)?;
            let v = each(&list, |inst, model, settings| {
                let pol = solve_rs(&model.planning_mvn()?, &inst.costs, settings)?;
                Ok(serde_json::to_value(pol)?)
            })?;
            emit_json(&v, &out)
        }
        Command::Sdp {
            instances,
            sdp,
            simulate,
            sim,
            out,
        } => {
            let list = load(&instances, &SolverArgs::default())?;
            let cfg = sdp.config();
            let v = each(&list, |inst, model, _| {
                let sol = solve_sdp(&model.planning_mvn()?, &inst.costs, &cfg)?;
                let mut v = json!({
                    "expected_total_cost": sol.expected_total_cost,
                    "truncated": sol.truncated,
                    "first_action": sol.decide(1, inst.costs.initial_inventory, &[])?,
                });
                if simulate {
                    let r = simulate_sdp(
                        &sol,
                        model,
                        &inst.costs,
                        &SimOptions::new(sim.reps, seed_for(inst, sim.seed)),
                    )?;
                    v["simulated"] = serde_json::to_value(r)?;
                }
                Ok(v)
            })?;
            emit_json(&v, &out)
        }
        Command::Simulate {
            instances,
            solver,
            sim,
            out,
        } => {
            let list = load(&instances, &solver)?;
            let v = each(&list, |inst, model, settings| {
                let pol = solve_rs(&model.planning_mvn()?, &inst.costs, settings)?;
                let r = simulate_rs(
                    &pol,
                    model,
                    &inst.costs,
                    &SimOptions::new(sim.reps, seed_for(inst, sim.seed)),
                )?;
                Ok(json!({ "policy": pol, "simulated": r }))
            })?;
            emit_json(&v, &out)
        }
        Command::Rhc {
            instances,
            solver,
            seed,
            rhc,
            out,
        } => {
            let list = load(&instances, &solver)?;
            let v = each(&list, |inst, model, settings| {
                let r = simulate_rhc(model, &inst.costs, settings, &rhc.options(seed_for(inst, seed)))?;
                Ok(serde_json::to_value(r)?)
            })?;
            emit_json(&v, &out)
        }
        Command::BenchMvn(args) => {
            let bed = generate_mvn_bed(args.k_levels, SolverSpec::default());
            bench(args, bed, &[Method::Rs, Method::Simulate, Method::Sdp])
        }
        Command::BenchTs(args) => {
            let bed = generate_ts_bed(args.k_levels, SolverSpec::default());
            bench(args, bed, &[Method::Rs, Method::Simulate])
        }
        Command::Example4period { solver, sim, sdp } => example(solver, sim, sdp),
    }
}
