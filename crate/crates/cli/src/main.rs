use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gasmld::channel::{generate_instance_with_id, random_slot};
use gasmld::gas::BackendKind;
use gasmld::harness::{
    self, resolve_table, run_variant, summarize_queries, write_ber_csv, write_query_csv, write_scatter_csv,
    ExperimentSpec, Prepared, Slot,
};
use gasmld::parallel::Parallelism;
use gasmld::statevector::GroverCircuit;
use gasmld::{Error, Result};

#[derive(Parser)]
#[command(name = "gasmld", version, about = "Grover adaptive search MIMO detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect one slot with every configured search variant and print the traces.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Instance index to solve.
        #[arg(long, default_value_t = 0)]
        instance: u64,
        /// Write the final circuit-level statevector (little-endian f64, re/im interleaved).
        #[arg(long)]
        dump_state: Option<PathBuf>,
    },
    /// Query complexity to the optimum per trial and variant.
    QueryCdf(Common),
    /// Bit error rate of every detector over the SNR sweep.
    Ber(Common),
    /// Indicator calibration table and scatter data.
    Calibrate(Common),
    /// Gate-count reports for the configured cases.
    GateCount(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run every trial on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Auto,
    Circuit,
    Amplitude,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path)?,
            None => ExperimentSpec::default(),
        };
        if let Some(seed) = self.seed {
            spec.system.seed = seed;
        }
        if let Some(trials) = self.trials {
            spec.trials = trials;
        }
        if let Some(b) = self.backend {
            spec.gas.backend = match b {
                BackendArg::Auto => None,
                BackendArg::Circuit => Some(BackendKind::CircuitLevel),
                BackendArg::Amplitude => Some(BackendKind::AmplitudeLevel),
            };
        }
        if let Some(out) = &self.out {
            spec.output_dir = out.clone();
        }
        spec.validate()?;
        Ok(spec)
    }

    fn mode(&self) -> Parallelism {
        if self.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn solve(common: &Common, instance: u64, dump_state: Option<&Path>) -> Result<()> {
    let spec = common.spec()?;
    let mode = common.mode();
    let cfg = &spec.system;
    let inst = generate_instance_with_id(cfg, instance)?;
    let rx = random_slot(&inst, instance % cfg.payload_len as u64);
    let slot = Slot::new(cfg, &inst, &rx)?;
    let table = resolve_table(&spec, cfg, mode)?;
    let write_files = common.out.is_some() || common.config.is_some();
    if write_files {
        let dir = &spec.output_dir;
        create(dir, "instance.json")?.write_all(inst.to_json()?.as_bytes())?;
        create(dir, "polynomial.json")?.write_all(slot.poly.to_json()?.as_bytes())?;
    }
    let stdout = io::stdout();
    let mut last_circuit = None;
    for v in spec.gas_variants() {
        let prepared = Prepared::new(&slot.poly, &slot.reg, v.preparation, mode)?;
        let run = run_variant(&slot, &prepared, v, &spec.gas, table.as_ref(), false, mode)?;
        if write_files {
            let mut w = create(&spec.output_dir, &format!("trace_{}.jsonl", v.name))?;
            run.trace.write_jsonl(&mut w)?;
            w.flush()?;
        } else {
            run.trace.write_jsonl(stdout.lock())?;
        }
        let found = run.trace.detection_output(&slot.reg).map(|x| slot.reg.decode(x).b);
        eprintln!(
            "{}: backend={:?} y0={:.6} l_min={} iterations={} rotations={} restarts={} optimum={} bits={:?} truth={:?}",
            v.name,
            run.backend,
            run.start.y0,
            run.start.l_min,
            run.trace.cd_queries,
            run.trace.qd_rotations,
            run.trace.restarts,
            run.converged(),
            found,
            rx.b_true
        );
        if let (Some(q_v), Some(last)) = (run.q_v, run.trace.records.last()) {
            last_circuit = Some((v.preparation, q_v, last.y, last.l));
        }
    }
    if let Some(path) = dump_state {
        let (prep, q_v, y, l) = last_circuit.ok_or_else(|| {
            Error::InvalidConfig("--dump-state needs a circuit-level run with at least one iteration".into())
        })?;
        GroverCircuit::new(&slot.reg, &slot.poly, prep, y, q_v, mode)?.state_after(l).write_binary(path)?;
    }
    Ok(())
}

fn query_cdf(common: &Common) -> Result<()> {
    let spec = common.spec()?;
    let rows = harness::run_query_cdf(&spec, common.mode())?;
    let mut w = create(&spec.output_dir, "query_cdf.csv")?;
    write_query_csv(&rows, &mut w)?;
    w.flush()?;
    println!("variant,trials,converged,median_cd,median_qd,qd_full_convergence");
    for s in summarize_queries(&rows) {
        let full = s.qd_full_convergence.map_or_else(|| "none".into(), |q| q.to_string());
        println!("{},{},{},{},{},{}", s.variant, s.trials, s.converged, s.median_cd, s.median_qd, full);
    }
    Ok(())
}

fn ber(common: &Common) -> Result<()> {
    let spec = common.spec()?;
    let rows = harness::run_ber(&spec, common.mode())?;
    let mut w = create(&spec.output_dir, "ber.csv")?;
    write_ber_csv(&rows, &mut w)?;
    w.flush()?;
    write_ber_csv(&rows, io::stdout().lock())
}

fn calibrate(common: &Common) -> Result<()> {
    let spec = common.spec()?;
    let run = harness::run_calibration(&spec, common.mode())?;
    fs::create_dir_all(&spec.output_dir)?;
    run.table.save(&spec.output_dir.join("calibration.csv"))?;
    let mut w = create(&spec.output_dir, "calibration_scatter.csv")?;
    write_scatter_csv(&run.samples, &mut w)?;
    w.flush()?;
    println!("samples={} c_prime_max={} delta={}", run.samples.len(), run.table.c_prime_max, run.table.delta);
    for (name, spread) in &run.spreads {
        println!("spread[{name}]={spread:.6}");
    }
    Ok(())
}

fn gate_count(common: &Common) -> Result<()> {
    let spec = common.spec()?;
    let reports = harness::run_gate_count(&spec)?;
    let mut w = create(&spec.output_dir, "gate_count.json")?;
    serde_json::to_writer_pretty(&mut w, &reports)?;
    w.flush()?;
    for r in &reports {
        println!("{}", r.to_table());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Solve { common, instance, dump_state } => solve(common, *instance, dump_state.as_deref()),
        Command::QueryCdf(c) => query_cdf(c),
        Command::Ber(c) => ber(c),
        Command::Calibrate(c) => calibrate(c),
        Command::GateCount(c) => gate_count(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_capacity() { 2 } else { 1 })
        }
    }
}
