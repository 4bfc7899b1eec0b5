use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tslsynth::codegen::{
    analyze, check_winning, complete_with, emit_c, CodePatch, CodegenError, Decision, GameOptions,
    PartialImpl, WinCheck,
};
use tslsynth::debug::{Mode, Session};
use tslsynth::frontend::{self, SourceSpec};
use tslsynth_bdd::CubePolicy;
use tslsynth_cli::server;
use tslsynth_cli::service::Registry;

#[derive(Parser)]
#[command(
    name = "tslsynth",
    version,
    about = "Synthesise and debug reactive controllers"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Low,
    High,
}

impl From<Policy> for CubePolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Low => CubePolicy::PreferLow,
            Policy::High => CubePolicy::PreferHigh,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the game and complete every magic block.
    Synth {
        spec: PathBuf,
        /// Keep only this goal.
        #[arg(long)]
        goal: Option<String>,
        /// Accept every generated statement without asking.
        #[arg(long)]
        auto: bool,
        /// Also write the symbolic game as JSON.
        #[arg(long, value_name = "FILE")]
        dump_game: Option<PathBuf>,
        /// Reuse solved games from this directory.
        #[arg(long, value_name = "DIR")]
        cache_dir: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Base name of the emitted C files (default: the input file's stem).
        #[arg(long)]
        module: Option<String>,
    },
    /// Step through a counterexample (or play freely if realizable).
    Debug {
        spec: PathBuf,
        #[arg(long)]
        goal: Option<String>,
        /// Preferred value for bits the debugger is free to choose.
        #[arg(long, value_enum, default_value = "low")]
        seed_policy: Policy,
    },
    /// Emit C for a complete implementation.
    EmitC {
        spec: PathBuf,
        #[arg(long)]
        module: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Serve the JSON protocol on 127.0.0.1.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, value_name = "DIR")]
        cache_dir: Option<PathBuf>,
    },
}

/// Reason to stop with a non-zero status.
enum Fail {
    /// Input problem: missing file, syntax or type error, open blocks.
    Input,
    /// The specification or an edit is not realizable.
    Unrealizable,
    Capacity,
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Input => 1,
            Fail::Unrealizable => 2,
            Fail::Capacity => 3,
        }
    }
}

fn report(e: CodegenError) -> Fail {
    eprintln!("ERROR {e}");
    match e {
        CodegenError::NotWinning { path } => {
            for (i, step) in path.iter().enumerate() {
                eprintln!("  {i}: {}", json!(step));
            }
            Fail::Unrealizable
        }
        CodegenError::Capacity(_) => Fail::Capacity,
        _ => Fail::Input,
    }
}

fn load(spec: &Path) -> Result<SourceSpec, Fail> {
    let text = std::fs::read_to_string(spec).map_err(|e| {
        eprintln!("ERROR {}: {e}", spec.display());
        Fail::Input
    })?;
    let src = SourceSpec::single(spec.display().to_string(), text);
    if let Err(e) = frontend::compile(&src) {
        eprintln!("{}", e.diagnostic(&src));
        return Err(Fail::Input);
    }
    Ok(src)
}

fn stem(spec: &Path) -> String {
    spec.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "spec".into())
}

fn write(path: &Path, text: &str) -> Result<(), Fail> {
    std::fs::write(path, text).map_err(|e| {
        eprintln!("ERROR {}: {e}", path.display());
        Fail::Input
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn describe(p: &CodePatch) {
    eprintln!("-- {} ({} entering states)", p.site, p.reachable_states);
    if p.text.is_empty() {
        eprintln!("   <empty>");
    }
    for line in p.text.lines() {
        eprintln!("   {line}");
    }
}

/// Asks about each statement on stdin: empty or `y` accepts, `e <text>`
/// replaces the block by `<text>`, `q` stops. End of input accepts the rest.
fn ask(p: &CodePatch, eof: &mut bool) -> Decision {
    describe(p);
    if *eof {
        return Decision::Accept;
    }
    loop {
        eprint!("accept? [Y/e <text>/q] ");
        let _ = io::stderr().flush();
        let mut line = String::new();
        match io::stdin().lock().read_line(&mut line) {
            Ok(0) | Err(_) => {
                *eof = true;
                return Decision::Accept;
            }
            Ok(_) => {}
        }
        let line = line.trim();
        match line {
            "" | "y" | "Y" => return Decision::Accept,
            "q" => return Decision::Stop,
            _ => {
                if let Some(text) = line.strip_prefix("e ") {
                    return Decision::Edit(text.to_string());
                }
                eprintln!("unrecognised answer");
            }
        }
    }
}

fn emit(imp: &PartialImpl, module: &str, out: &Path) -> Result<(), Fail> {
    let m = emit_c(imp, module).map_err(report)?;
    write(&out.join(&m.header_name), &m.header)?;
    write(&out.join(&m.source_name), &m.source)
}

#[allow(clippy::too_many_arguments)]
fn synth(
    spec: &Path,
    goal: Option<String>,
    auto: bool,
    dump_game: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    out: &Path,
    module: Option<String>,
) -> Result<(), Fail> {
    let src = load(spec)?;
    let stem = stem(spec);
    let opts = GameOptions {
        goal,
        cache_dir,
        ..GameOptions::default()
    };
    let mut imp = PartialImpl::new(src).map_err(report)?;
    let mut an = analyze(&imp, &opts).map_err(report)?;
    if let Some(path) = dump_game {
        let dump = serde_json::to_string_pretty(&an.enc.game.dump()).expect("serialisable");
        write(&path, &dump)?;
    }
    let stats = an.solution.stats_json();
    if !an.solution.verdict.is_realizable() {
        let path = match check_winning(&mut an, &[]).map_err(report)? {
            WinCheck::Violation { path } => path,
            WinCheck::Ok => Vec::new(),
        };
        let counter = json!({
            "realizable": false,
            "stats": stats["stats"],
            "counterexample": path,
            "encoding": an.enc.dump_json(),
        });
        write(
            &out.join(format!("{stem}.counter.json")),
            &serde_json::to_string_pretty(&counter).expect("serialisable"),
        )?;
        eprintln!(
            "unrealizable: a counterexample path of {} states was written; run `tslsynth debug` to play against the counterstrategy",
            path.len()
        );
        return Err(Fail::Unrealizable);
    }
    let cert = an.solution.export(&an.enc.game);
    write(
        &out.join(format!("{stem}.cert.json")),
        &serde_json::to_string(&cert).expect("serialisable"),
    )?;
    println!("realizable ({} ms)", an.solution.stats.millis);
    drop(an);

    let mut eof = false;
    let patches = complete_with(&mut imp, &opts, |p| {
        if auto {
            describe(p);
            Decision::Accept
        } else {
            ask(p, &mut eof)
        }
    })
    .map_err(report)?;
    println!("{} statements generated", patches.len());
    let rendered = imp.render();
    for (_, text) in &rendered.files {
        write(&out.join(format!("{stem}.impl.tsl")), text)?;
    }
    let open = imp.compile().map_err(report)?.open_sites();
    if !open.is_empty() {
        let names: Vec<String> = open.iter().map(|(r, _)| r.to_string()).collect();
        eprintln!("stopped with open magic blocks: {}", names.join(", "));
        return Err(Fail::Input);
    }
    emit(&imp, module.as_deref().unwrap_or(&stem), out)
}

const DEBUG_HELP: &str = "commands: step | single | goto N | trace | state | help | quit; \
anything else is a controller action such as `jb.cmd_put()` or `exit`";

fn debug(spec: &Path, goal: Option<String>, policy: Policy) -> Result<(), Fail> {
    let src = load(spec)?;
    let opts = GameOptions {
        goal,
        ..GameOptions::default()
    };
    let imp = PartialImpl::new(src).map_err(report)?;
    let an = analyze(&imp, &opts).map_err(report)?;
    let mode = if an.solution.verdict.is_realizable() {
        Mode::FreePlay
    } else {
        Mode::Counterexample
    };
    let mut s = Session::start(
        Arc::new(an.compiled.model),
        Arc::new(an.compiled.cfas),
        an.enc,
        &an.solution.verdict,
        mode,
    )
    .map_err(|e| {
        eprintln!("ERROR {e}");
        Fail::Input
    })?
    .with_policy(policy.into());
    println!("{mode:?} session; {DEBUG_HELP}");
    println!("{}", s.state_json(s.state()));
    let stdin = io::stdin();
    loop {
        print!("> ");
        let _ = io::stdout().flush();
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).unwrap_or(0) == 0 {
            return Ok(());
        }
        let line = line.trim();
        let shown = match line {
            "" => continue,
            "quit" | "q" => return Ok(()),
            "help" => Ok(json!(DEBUG_HELP)),
            "state" => Ok(s.state_json(s.state())),
            "trace" => Ok(s.trace_json()),
            "single" => Ok(json!(s.single_step())),
            "step" => s
                .env_step()
                .map(|o| json!({ "outcome": o, "state": s.state_json(s.state()) })),
            _ => match line.strip_prefix("goto ") {
                Some(n) => match n.trim().parse() {
                    Ok(n) => s.goto_node(n).map(|_| s.state_json(s.state())),
                    Err(_) => Ok(json!("goto expects a node number")),
                },
                None => s
                    .user_action(line)
                    .map(|o| json!({ "outcome": o, "state": s.state_json(s.state()) })),
            },
        };
        match shown {
            Ok(v) => println!("{v}"),
            Err(e) => println!("error: {e}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), Fail> {
    match cli.cmd {
        Cmd::Synth {
            spec,
            goal,
            auto,
            dump_game,
            cache_dir,
            out,
            module,
        } => synth(&spec, goal, auto, dump_game, cache_dir, &out, module),
        Cmd::Debug {
            spec,
            goal,
            seed_policy,
        } => debug(&spec, goal, seed_policy),
        Cmd::EmitC { spec, module, out } => {
            let src = load(&spec)?;
            let imp = PartialImpl::new(src).map_err(report)?;
            emit(&imp, module.as_deref().unwrap_or(&stem(&spec)), &out)
        }
        Cmd::Serve { port, cache_dir } => {
            let listener = server::bind(port).map_err(|e| {
                eprintln!("ERROR cannot bind port {port}: {e}");
                Fail::Input
            })?;
            let addr = listener.local_addr().expect("bound");
            println!("listening on {addr}");
            let _ = io::stdout().flush();
            server::serve(listener, Arc::new(Registry::new(cache_dir))).map_err(|e| {
                eprintln!("ERROR {e}");
                Fail::Input
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => ExitCode::from(f.code()),
    }
}
