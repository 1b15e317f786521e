mod args;
mod commands;
mod context;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command, EnergyCmd, GeometryCmd, GraphCmd, TransformCmd};
use commands::{corpus, energy, geometry, graph, replay, synth};
use context::{CmdResult, Ctx, Failure, Outcome};

/// Default output file stem and extension per command.
fn default_output(cmd: &Command) -> (&'static str, &'static str) {
    match cmd {
        Command::Segment(_) => ("segmented", "jsonl"),
        Command::Annotate(_) => ("labeled", "jsonl"),
        Command::Graph(GraphCmd::Estimate(_)) => ("transfer_graph", "json"),
        Command::Graph(GraphCmd::Compare(_)) => ("compare", "json"),
        Command::Graph(GraphCmd::Stability(_)) => ("stability", "json"),
        Command::Geometry(GeometryCmd::Fold(_)) => ("fold", "json"),
        Command::Geometry(GeometryCmd::Meb(_)) => ("meb", "json"),
        Command::Geometry(GeometryCmd::Phase(_)) => ("phase", "json"),
        Command::Energy(EnergyCmd::Empirical(_)) => ("bond_energies", "json"),
        Command::Energy(EnergyCmd::RopeMc(_)) => ("rope_mc", "json"),
        Command::Energy(EnergyCmd::Ergodic(_)) => ("ergodic", "json"),
        Command::Energy(EnergyCmd::Paths(_)) => ("paths", "json"),
        Command::Synth(_) => ("synthetic", "jsonl"),
        Command::Transform(TransformCmd::Keywords(_)) => ("keywords", "jsonl"),
        Command::Transform(TransformCmd::Summarize(_)) => ("summarized", "jsonl"),
        Command::Transform(TransformCmd::Shift(_)) => ("shift", "json"),
        Command::Replay(_) => ("replay_check", "json"),
    }
}

fn execute(ctx: &mut Ctx, cmd: &Command) -> CmdResult<Outcome> {
    match cmd {
        Command::Segment(a) => corpus::segment(ctx, a),
        Command::Annotate(a) => corpus::annotate(ctx, a),
        Command::Graph(GraphCmd::Estimate(a)) => graph::estimate(ctx, a),
        Command::Graph(GraphCmd::Compare(a)) => graph::compare(ctx, a),
        Command::Graph(GraphCmd::Stability(a)) => graph::stability(ctx, a),
        Command::Geometry(GeometryCmd::Fold(a)) => geometry::fold(ctx, a),
        Command::Geometry(GeometryCmd::Meb(a)) => geometry::meb_cmd(ctx, a),
        Command::Geometry(GeometryCmd::Phase(a)) => geometry::phase(ctx, a),
        Command::Energy(EnergyCmd::Empirical(a)) => energy::empirical(ctx, a),
        Command::Energy(EnergyCmd::RopeMc(a)) => energy::rope(ctx, a),
        Command::Energy(EnergyCmd::Ergodic(a)) => energy::ergodic(ctx, a),
        Command::Energy(EnergyCmd::Paths(a)) => energy::paths(ctx, a),
        Command::Synth(a) => synth::synth(ctx, a),
        Command::Transform(TransformCmd::Keywords(a)) => corpus::keywords(ctx, a),
        Command::Transform(TransformCmd::Summarize(a)) => corpus::summarize(ctx, a),
        Command::Transform(TransformCmd::Shift(a)) => graph::shift(ctx, a),
        Command::Replay(a) => replay::replay(ctx, a),
    }
}

fn run(cli: Cli, argv: Vec<String>) -> CmdResult<()> {
    let arguments = serde_json::to_value(&cli.command)?;
    let (stem, ext) = default_output(&cli.command);
    let mut ctx = Ctx::new(cli.global.clone(), argv);
    let outcome = execute(&mut ctx, &cli.command)?;
    ctx.finish(stem, ext, outcome, cli.command.name(), arguments)
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            if code == 2 && e.kind() == ErrorKind::InvalidSubcommand {
                eprintln!();
                let _ = Cli::command().print_help();
            }
            return ExitCode::from(code);
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let jobs = cli.global.jobs;
    match cotmol_core::exec::with_jobs(jobs, move || run(cli, argv)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
