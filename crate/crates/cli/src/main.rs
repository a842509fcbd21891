//! `rpw`: assemble, run, evolve, scan and analyze meta-language organisms.
//!
//! Exit codes: 0 success, 1 the organism faulted, 2 usage or input error.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rpw_core::analysis::{
    count_moments, distribution_csv, distribution_text, genome_layout, kinship_matrix, mutation_distribution,
    non_minor, region_density, region_robustness, LayoutRegion, Sample, NON_MINOR_THRESHOLD,
};
use rpw_core::assembler::{assemble, build_ancestor, disassemble_genome};
use rpw_core::chemistry::Api;
use rpw_core::mutation::{micro_control_scan, robustness_scan, ScanOptions, ScanReport};
use rpw_core::translator::{Genome, Region, GENOME_LEN};
use rpw_core::world::{evolve, EvolveOptions, GuardConfig, Isolate, IsolateOutcome, World};

#[derive(Parser)]
#[command(name = "rpw", version, about = "Evolvable meta-language organisms in a virtual world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a listing into a genome file.
    Asm {
        input: PathBuf,
        /// Defaults to the input path with a `.rpw` extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Disassemble a genome file into a listing.
    Disasm {
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one organism alone in a private filesystem.
    Run {
        genome: PathBuf,
        #[arg(long, default_value_t = 5_000_000)]
        budget: u64,
        /// Print one register dump per micro-op to stderr.
        #[arg(long)]
        trace: bool,
    },
    /// Run a seeded world and record its history.
    Evolve {
        #[arg(long, required_unless_present = "resume")]
        seed: Option<u64>,
        /// Guard configuration (`key = value` lines).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ticks: u64,
        #[arg(long)]
        out: PathBuf,
        /// Number of ancestor copies started at the beginning.
        #[arg(long, default_value_t = 10)]
        bootstrap: usize,
        /// Genome to bootstrap with; the built-in ancestor by default.
        #[arg(long)]
        ancestor: Option<PathBuf>,
        /// Ticks between full snapshots; 0 disables them.
        #[arg(long, default_value_t = 0)]
        snapshot_every: u64,
        /// Continue from a snapshot directory instead of bootstrapping.
        #[arg(long, conflicts_with_all = ["seed", "config", "ancestor"])]
        resume: Option<PathBuf>,
    },
    /// Exhaustive single-bit robustness scan.
    Scan {
        /// Genome to scan; the built-in ancestor by default.
        #[arg(long)]
        genome: Option<PathBuf>,
        /// meta-code, alphabet, data, padding, header or whole.
        #[arg(long, default_value = "meta-code")]
        region: String,
        /// Also scan the translated micro-code.
        #[arg(long, value_enum)]
        control: Option<Control>,
        #[arg(long, default_value_t = 5_000_000)]
        budget: u64,
        /// Run every mutant to the end instead of stopping at its first offspring.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        sequential: bool,
        /// CSV destination; stdout by default.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Population statistics.
    Analyze {
        #[arg(value_enum)]
        report: Report,
        #[arg(long)]
        population: PathBuf,
        /// Reference genome; the built-in ancestor by default.
        #[arg(long)]
        ancestor: Option<PathBuf>,
        /// Count differing bits instead of bytes.
        #[arg(long)]
        bits: bool,
        /// Density reports only count offsets shared by more than this many files.
        #[arg(long, default_value_t = NON_MINOR_THRESHOLD)]
        threshold: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Control {
    Micro,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Report {
    Hamming,
    Moments,
    Dist,
    Density,
    Robustness,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Text,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("RPW_LOG")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Asm { input, output } => cmd_asm(&input, output),
        Command::Disasm { input, output } => cmd_disasm(&input, output),
        Command::Run { genome, budget, trace } => cmd_run(&genome, budget, trace),
        Command::Evolve {
            seed,
            config,
            ticks,
            out,
            bootstrap,
            ancestor,
            snapshot_every,
            resume,
        } => {
            let world = match resume {
                Some(dir) => World::restore(&dir).with_context(|| format!("restoring {}", dir.display()))?,
                None => {
                    let config = match config {
                        Some(path) => GuardConfig::parse(&read_text(&path)?)
                            .with_context(|| format!("parsing {}", path.display()))?,
                        None => GuardConfig::default(),
                    };
                    let mut w = World::new(seed.expect("clap requires a seed"), config);
                    w.bootstrap(&reference_genome(ancestor.as_deref())?, bootstrap);
                    w
                }
            };
            cmd_evolve(world, ticks, &out, snapshot_every)
        }
        Command::Scan {
            genome,
            region,
            control,
            budget,
            full,
            sequential,
            csv,
        } => {
            let opts = ScanOptions {
                budget,
                stop_at_first_offspring: !full,
                parallel: !sequential,
            };
            cmd_scan(genome.as_deref(), &region, control.is_some(), &opts, csv.as_deref())
        }
        Command::Analyze {
            report,
            population,
            ancestor,
            bits,
            threshold,
            format,
        } => {
            let sample = Sample::load_dir(&population, reference_genome(ancestor.as_deref())?)?;
            let text = analyze(report, &sample, bits, threshold, format)?;
            io::stdout().write_all(text.as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn reference_genome(path: Option<&Path>) -> Result<Vec<u8>> {
    match path {
        Some(p) => {
            let bytes = read_bytes(p)?;
            Genome::parse(&bytes).with_context(|| format!("{} is not a genome", p.display()))?;
            Ok(bytes)
        }
        None => Ok(build_ancestor().to_bytes()),
    }
}

fn cmd_asm(input: &Path, output: Option<PathBuf>) -> Result<ExitCode> {
    let src = read_text(input)?;
    let genome = assemble(&src)
        .and_then(|a| a.to_genome())
        .with_context(|| format!("assembling {}", input.display()))?;
    let output = output.unwrap_or_else(|| input.with_extension("rpw"));
    write_bytes(&output, &genome.to_bytes())?;
    log::info!("wrote {}", output.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_disasm(input: &Path, output: Option<PathBuf>) -> Result<ExitCode> {
    let genome = Genome::parse(&read_bytes(input)?).with_context(|| format!("parsing {}", input.display()))?;
    let listing = disassemble_genome(&genome);
    match output {
        Some(path) => write_bytes(&path, listing.as_bytes())?,
        None => io::stdout().write_all(listing.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(path: &Path, budget: u64, trace: bool) -> Result<ExitCode> {
    let bytes = read_bytes(path)?;
    let mut iso = Isolate::new(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let report = if trace {
        let mut err = BufWriter::new(io::stderr().lock());
        iso.run_traced(budget, &mut err)?
    } else {
        iso.run(budget)
    };
    let mut out = io::stdout().lock();
    match &report.outcome {
        IsolateOutcome::Fault { kind, ip } => writeln!(out, "outcome: fault {kind} at {ip:#06x}")?,
        other => writeln!(out, "outcome: {}", other.label())?,
    }
    writeln!(out, "instructions: {}", report.instructions)?;
    writeln!(out, "virtual time: {} ms", report.clock_ms)?;
    writeln!(out, "offspring: {}", report.offspring_count())?;
    for name in &report.spawned {
        writeln!(out, "  {name}")?;
    }
    writeln!(out, "files written: {}", report.files_created.len())?;
    let calls: Vec<String> = Api::ALL
        .iter()
        .zip(report.syscall_counts)
        .filter(|(_, n)| *n > 0)
        .map(|(api, n)| format!("{}={n}", api.name()))
        .collect();
    writeln!(out, "syscalls: {}", if calls.is_empty() { "none".into() } else { calls.join(" ") })?;
    let random = iso.state().read32(rpw_core::chemistry::DATA_OFFSET + 4).unwrap_or(0);
    writeln!(out, "RandomNumber: {random:#010x} ({random})")?;
    Ok(match report.outcome {
        IsolateOutcome::Fault { .. } => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    })
}

fn cmd_evolve(mut world: World, ticks: u64, out: &Path, snapshot_every: u64) -> Result<ExitCode> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log_path = out.join("events.jsonl");
    let file = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    write_bytes(&out.join("config.txt"), world.config().to_text().as_bytes())?;
    let opts = EvolveOptions {
        ticks,
        snapshot_every,
        out_dir: Some(out.to_path_buf()),
    };
    let summary = evolve(&mut world, &opts, &mut BufWriter::new(file))?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn scan_region(genome: &Genome, region: &str, opts: &ScanOptions) -> Result<ScanReport> {
    if region == "whole" {
        let mut rows = Vec::new();
        for r in Region::ALL {
            rows.extend(robustness_scan(genome, r, opts).rows);
        }
        return Ok(ScanReport { rows });
    }
    let r: Region = region.parse()?;
    Ok(robustness_scan(genome, r, opts))
}

fn cmd_scan(genome: Option<&Path>, region: &str, control: bool, opts: &ScanOptions, csv: Option<&Path>) -> Result<ExitCode> {
    let bytes = reference_genome(genome)?;
    let genome = Genome::parse(&bytes)?;
    let mut summary = Vec::new();
    let mut report = scan_region(&genome, region, opts)?;
    summary.push(format!("R({region}) = {:.6} ({}/{})", report.robustness(), report.viable(), report.total()));
    if control {
        let micro = micro_control_scan(&genome, opts);
        summary.push(format!("R(micro-code) = {:.6} ({}/{})", micro.robustness(), micro.viable(), micro.total()));
        report.rows.extend(micro.rows);
    }
    let text = report.to_csv();
    match csv {
        Some(path) => {
            write_bytes(path, text.as_bytes())?;
            for line in summary {
                println!("{line}");
            }
        }
        None => {
            io::stdout().write_all(text.as_bytes())?;
            for line in summary {
                eprintln!("{line}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn non_minor_layout_densities(sample: &Sample, threshold: usize) -> Result<Vec<rpw_core::analysis::RegionDensity>> {
    let dist = mutation_distribution(sample)?;
    let offsets = non_minor(&dist, threshold);
    let mut layout = vec![LayoutRegion::new("whole", 0..GENOME_LEN)];
    layout.extend(genome_layout());
    Ok(region_density(&offsets, &layout))
}

fn analyze(report: Report, sample: &Sample, bits: bool, threshold: usize, format: Format) -> Result<String> {
    if sample.is_empty() {
        bail!("population directory is empty");
    }
    Ok(match report {
        Report::Hamming => {
            let k = kinship_matrix(sample, bits)?;
            match format {
                Format::Json => json(&k)?,
                _ => k.to_csv(),
            }
        }
        Report::Moments => {
            let m = count_moments(&sample.distances_to_reference()?)?;
            match format {
                Format::Json => json(&m)?,
                _ => format!("n,mean,stddev\n{},{},{}\n", sample.len(), m.mean, m.stddev),
            }
        }
        Report::Dist => {
            let d = mutation_distribution(sample)?;
            match format {
                Format::Json => json(&d)?,
                Format::Csv => distribution_csv(&d),
                Format::Text => distribution_text(&d),
            }
        }
        Report::Density => {
            let d = non_minor_layout_densities(sample, threshold)?;
            match format {
                Format::Json => json(&d)?,
                _ => {
                    let mut s = String::from("region,mutations,size,density\n");
                    for r in d {
                        s += &format!("{},{},{},{}\n", r.region, r.mutations, r.size, r.density);
                    }
                    s
                }
            }
        }
        Report::Robustness => {
            let d = non_minor_layout_densities(sample, threshold)?;
            let r = region_robustness(&d, Region::Padding.name())?;
            match format {
                Format::Json => json(&r)?,
                _ => {
                    let mut s = String::from("region,robustness\n");
                    for (name, v) in r {
                        s += &format!("{name},{v}\n");
                    }
                    s
                }
            }
        }
    })
}
