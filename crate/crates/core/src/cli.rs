//! `gen` and `eval` subcommands: the generator writes a graph file, the
//! evaluator answers queries against it.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::graph::{build_graph_with, deserialize, BuildOptions};
use crate::net::parse_net;
use crate::proptool::{evaluate, parse_query};
use crate::rational::{parse_rational, Rational};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INCOMPLETE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tbcover",
    version,
    about = "Time-coverage reachability graphs for Time-Basic Petri nets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the coverage graph of a net.
    Gen(GenArgs),
    /// Evaluate queries against a graph file.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Net description.
    #[arg(short = 'i', long = "input")]
    pub input: PathBuf,
    /// Graph file to write.
    #[arg(short = 'o', long = "output")]
    pub output: PathBuf,
    /// Also write a Graphviz rendering.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// Disable time-anonymous token detection.
    #[arg(long)]
    pub no_ta: bool,
    /// Leave states whose TL - T0 is always beyond this value unexpanded.
    #[arg(long, value_parser = rational_arg)]
    pub time_limit: Option<Rational>,
    /// Stop after this many nodes (the graph is then incomplete).
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Print node counts and elapsed time.
    #[arg(long)]
    pub stats: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Graph file written by `gen`.
    #[arg(short = 'g', long = "graph")]
    pub graph: PathBuf,
    /// Inline query; may be repeated.
    #[arg(short = 'q', long = "query")]
    pub queries: Vec<String>,
    /// File with one query per line; may be repeated.
    #[arg(long = "query-file")]
    pub query_files: Vec<PathBuf>,
}

fn rational_arg(s: &str) -> Result<Rational, String> {
    match parse_rational(s) {
        Some(v) if v > Rational::from_integer(0.into()) => Ok(v),
        Some(_) => Err("time limit must be positive".into()),
        None => Err(format!("`{s}` is not a rational number")),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Gen(a) => run_gen(&a, out, err),
        Command::Eval(a) => run_eval(&a, out, err),
    }
}

pub fn run_gen(args: &GenArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", args.input.display());
            return EXIT_IO;
        }
    };
    let net = match parse_net(&text) {
        Ok(n) => n,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", args.input.display());
            return EXIT_INVALID;
        }
    };
    let opts = BuildOptions {
        use_ta: !args.no_ta,
        time_limit: args.time_limit.clone(),
        max_nodes: args.max_nodes,
    };
    let start = Instant::now();
    let graph = match build_graph_with(&net, &opts, &mut |p| {
        let _ = writeln!(
            err,
            "progress built={} nodes={} frontier={}",
            p.built, p.nodes, p.frontier
        );
    }) {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INVALID;
        }
    };
    let elapsed = start.elapsed();
    if let Err(e) = fs::write(&args.output, graph.serialize()) {
        let _ = writeln!(err, "error: cannot write {}: {e}", args.output.display());
        return EXIT_IO;
    }
    if let Some(dot) = &args.dot {
        if let Err(e) = fs::write(dot, graph.to_dot()) {
            let _ = writeln!(err, "error: cannot write {}: {e}", dot.display());
            return EXIT_IO;
        }
    }
    if args.stats {
        let _ = writeln!(
            out,
            "built={} final={} elapsed={:.3}s",
            graph.built,
            graph.final_count(),
            elapsed.as_secs_f64()
        );
    }
    if graph.complete {
        EXIT_OK
    } else {
        let _ = writeln!(err, "warning: node budget exhausted, graph is incomplete");
        EXIT_INCOMPLETE
    }
}

pub fn run_eval(args: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let graph = match fs::read_to_string(&args.graph) {
        Ok(t) => match deserialize(&t) {
            Ok(g) => g,
            Err(e) => {
                let _ = writeln!(err, "error: {}: {e}", args.graph.display());
                return EXIT_IO;
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", args.graph.display());
            return EXIT_IO;
        }
    };
    let mut queries: Vec<(String, usize)> = args.queries.iter().map(|q| (q.clone(), 1)).collect();
    for path in &args.query_files {
        match fs::read_to_string(path) {
            Ok(t) => queries.extend(
                t.lines()
                    .enumerate()
                    .filter(|(_, l)| !l.trim().is_empty())
                    .map(|(i, l)| (l.to_string(), i + 1)),
            ),
            Err(e) => {
                let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
                return EXIT_IO;
            }
        }
    }
    if queries.is_empty() {
        let _ = writeln!(err, "error: no queries given");
        return EXIT_INVALID;
    }
    // Parse everything first so a typo does not leave half the answers printed.
    let mut parsed = Vec::new();
    for (text, line) in &queries {
        match parse_query(text, &graph.places, *line) {
            Ok(q) => parsed.push(q),
            Err(e) => {
                let _ = writeln!(err, "error: query `{text}`: {e}");
                return EXIT_INVALID;
            }
        }
    }
    for (q, (text, _)) in parsed.iter().zip(&queries) {
        match evaluate(&graph, q) {
            Ok(o) => {
                let _ = writeln!(out, "{}", o.render(&graph));
            }
            Err(e) => {
                let _ = writeln!(err, "error: query `{text}`: {e}");
                return EXIT_INVALID;
            }
        }
    }
    EXIT_OK
}
