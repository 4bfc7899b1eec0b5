//! Drives an emitted C controller from Rust over pipes.
//!
//! The generated harness reads commands on stdin:
//! `i` (re-initialise), `s <var> <value>` (set a mirror), `h <handler>`
//! (run a handler, answered by `done`). A callback prints
//! `c <name> <args...>` and then serves `s` commands until `r`.
//! `assertion_failed` prints `a <line>`.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tslsynth::cfa::LocKind;
use tslsynth::codegen::{CModule, Compiled};
use tslsynth::interp::{Interp, ProgState, RandomChoices};

pub fn ident(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

pub fn have_cc() -> bool {
    Command::new("cc")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

/// Compiles `m` with strict C99 warnings as errors; returns the object
/// directory.
pub fn compile_module(m: &CModule, tag: &str) -> Result<PathBuf, String> {
    let dir = std::env::temp_dir().join(format!("tslsynth-c-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    std::fs::write(dir.join(&m.header_name), &m.header).map_err(|e| e.to_string())?;
    std::fs::write(dir.join(&m.source_name), &m.source).map_err(|e| e.to_string())?;
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-pedantic", "-c"])
        .arg(&m.source_name)
        .current_dir(&dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(dir)
}

struct Decls {
    module: String,
    /// Mirror setters: var identifier and C type.
    setters: Vec<(String, String)>,
    handlers: Vec<String>,
    /// Callback name and parameter types.
    callbacks: Vec<(String, Vec<String>)>,
}

fn parse_header(m: &CModule) -> Decls {
    let module = m.header_name.trim_end_matches(".h").to_string();
    let mut d = Decls {
        module: module.clone(),
        setters: Vec::new(),
        handlers: Vec::new(),
        callbacks: Vec::new(),
    };
    let set = format!("void {module}_set_");
    let handler = format!("void {module}_");
    for line in m.header.lines().map(str::trim) {
        if let Some(rest) = line.strip_prefix(&set) {
            let (name, args) = rest.split_once('(').unwrap();
            let ty = args.trim_end_matches(");").rsplit_once(' ').unwrap().0;
            d.setters.push((name.to_string(), ty.to_string()));
        } else if let Some(rest) = line.strip_prefix("void (*") {
            let (name, args) = rest.split_once(")(").unwrap();
            if name == "assertion_failed" {
                continue;
            }
            let args = args.trim_end_matches(");");
            let tys = if args == "void" {
                Vec::new()
            } else {
                args.split(", ")
                    .map(|a| a.rsplit_once(' ').unwrap().0.to_string())
                    .collect()
            };
            d.callbacks.push((name.to_string(), tys));
        } else if let Some(rest) = line.strip_prefix(&handler) {
            if rest.ends_with("(void);")
                && !rest.starts_with("init")
                && !rest.starts_with("set_")
                && !rest.starts_with("get_")
            {
                d.handlers
                    .push(rest.trim_end_matches("(void);").to_string());
            }
        }
    }
    d
}

fn harness_source(d: &Decls) -> String {
    let m = &d.module;
    let mut s = String::new();
    s.push_str(&format!(
        "#include <stdio.h>\n#include <stdlib.h>\n#include <string.h>\n#include \"{m}.h\"\n\n"
    ));
    s.push_str("static void set_mirror(const char *name, unsigned long long v)\n{\n");
    for (v, ty) in &d.setters {
        s.push_str(&format!(
            "    if (!strcmp(name, \"{v}\")) {{ {m}_set_{v}(({ty})v); return; }}\n"
        ));
    }
    s.push_str("    fprintf(stderr, \"unknown mirror %s\\n\", name);\n    exit(3);\n}\n\n");
    s.push_str(
        "static int serve(void)\n{\n    char cmd[128], name[128];\n    unsigned long long v;\n    for (;;) {\n        if (scanf(\"%127s\", cmd) != 1) exit(0);\n        if (!strcmp(cmd, \"r\")) return 0;\n        if (!strcmp(cmd, \"s\")) {\n            if (scanf(\"%127s %llu\", name, &v) != 2) exit(4);\n            set_mirror(name, v);\n        } else {\n            return 1;\n        }\n    }\n}\n\n",
    );
    for (name, tys) in &d.callbacks {
        let params: Vec<String> = tys
            .iter()
            .enumerate()
            .map(|(k, t)| format!("{t} a{k}"))
            .collect();
        let params = if params.is_empty() {
            "void".to_string()
        } else {
            params.join(", ")
        };
        s.push_str(&format!(
            "static void cb_{name}({params})\n{{\n    printf(\"c {name}"
        ));
        for _ in tys {
            s.push_str(" %llu");
        }
        s.push_str("\\n\"");
        for k in 0..tys.len() {
            s.push_str(&format!(", (unsigned long long)a{k}"));
        }
        s.push_str(");\n    fflush(stdout);\n    if (serve()) exit(5);\n}\n\n");
    }
    s.push_str("static void cb_assertion_failed(unsigned line)\n{\n    printf(\"a %u\\n\", line);\n    fflush(stdout);\n}\n\n");
    s.push_str(&format!("static const {m}_callbacks table = {{\n"));
    for (name, _) in &d.callbacks {
        s.push_str(&format!("    cb_{name},\n"));
    }
    s.push_str("    cb_assertion_failed,\n};\n\n");
    s.push_str(&format!(
        "int main(void)\n{{\n    char cmd[128], name[128];\n    unsigned long long v;\n    {m}_init(&table);\n    while (scanf(\"%127s\", cmd) == 1) {{\n        if (!strcmp(cmd, \"i\")) {{\n            {m}_init(&table);\n        }} else if (!strcmp(cmd, \"s\")) {{\n            if (scanf(\"%127s %llu\", name, &v) != 2) return 4;\n            set_mirror(name, v);\n        }} else if (!strcmp(cmd, \"h\")) {{\n            if (scanf(\"%127s\", name) != 1) return 4;\n"
    ));
    for h in &d.handlers {
        s.push_str(&format!(
            "            if (!strcmp(name, \"{h}\")) {m}_{h}();\n"
        ));
    }
    s.push_str("            printf(\"done\\n\");\n            fflush(stdout);\n        } else {\n            return 2;\n        }\n    }\n    return 0;\n}\n");
    s
}

/// A running harness process.
pub struct Harness {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    decls: Decls,
}

impl Harness {
    pub fn build(m: &CModule, dir: &Path) -> Result<Harness, String> {
        let decls = parse_header(m);
        std::fs::write(dir.join("harness.c"), harness_source(&decls)).map_err(|e| e.to_string())?;
        let out = Command::new("cc")
            .args([
                "-std=c99",
                "-Wall",
                "-Wextra",
                "-Werror",
                "-O1",
                "-o",
                "harness",
                "harness.c",
            ])
            .arg(&m.source_name)
            .current_dir(dir)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        let mut child = Command::new(dir.join("harness"))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?;
        let stdin = BufWriter::new(child.stdin.take().unwrap());
        let stdout = BufReader::new(child.stdout.take().unwrap());
        Ok(Harness {
            child,
            stdin,
            stdout,
            decls,
        })
    }

    fn send(&mut self, line: &str) {
        writeln!(self.stdin, "{line}").unwrap();
    }

    fn recv(&mut self) -> String {
        self.stdin.flush().unwrap();
        let mut l = String::new();
        self.stdout.read_line(&mut l).unwrap();
        l.trim().to_string()
    }
}

impl Drop for Harness {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Default)]
pub struct CLockstepStats {
    pub runs: usize,
    pub steps: usize,
    pub handler_calls: usize,
    pub callbacks: usize,
}

/// Lockstep of the C module against `reference` (the completed
/// implementation run by the interpreter). The environment is simulated
/// by the interpreter on `env` (the specification with open magic blocks);
/// whenever it waits in a magic block the C handler of the enclosing task
/// decides the calls, with mirrors refreshed before the handler and after
/// every callback.
pub fn c_lockstep(
    m: &CModule,
    dir: &Path,
    env: &Compiled,
    reference: &Compiled,
    runs: usize,
    steps: usize,
    seed: u64,
) -> Result<CLockstepStats, String> {
    let mut h = Harness::build(m, dir)?;
    let ie = Interp::new(&env.model, &env.cfas);
    let ir = Interp::new(&reference.model, &reference.cfas);
    let mirrors: Vec<(String, usize)> = h
        .decls
        .setters
        .iter()
        .map(|(n, _)| {
            let v = env
                .model
                .vars
                .iter()
                .position(|v| ident(&v.name) == *n)
                .expect("mirrored variable exists");
            (n.clone(), v)
        })
        .collect();
    let callbacks: BTreeMap<String, usize> = env
        .model
        .tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.controllable)
        .map(|(k, t)| (ident(&t.name), k))
        .collect();
    let handler_of = |s: &ProgState| -> Option<String> {
        let p = ie.magic_process(s)?;
        let LocKind::Magic(site) = env.cfas.procs[p].locations[s.pcs[p]].kind else {
            return None;
        };
        let t = env.model.magic_sites[site].task?;
        Some(ident(&env.model.tasks[t].name))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = CLockstepStats::default();
    for run in 0..runs {
        h.send("i");
        let mut s = ie.initial_state(|_, ty| tslsynth::interp::random_value(&mut rng, ty));
        let mut r = ProgState {
            vars: s.vars.clone(),
            pcs: vec![0; reference.cfas.procs.len()],
            err: false,
        };
        for step in 0..steps {
            let p = rng.gen_range(0..env.cfas.procs.len());
            let cs: u64 = rng.gen();
            s = ie.env_step(
                &s,
                p,
                &mut RandomChoices(ChaCha8Rng::seed_from_u64(cs)),
                None,
            );
            r = ir.env_step(
                &r,
                p,
                &mut RandomChoices(ChaCha8Rng::seed_from_u64(cs)),
                None,
            );
            stats.steps += 1;
            while ie.is_turn(&s) {
                let handler = handler_of(&s).ok_or("magic block outside a task")?;
                for (n, v) in &mirrors {
                    h.send(&format!("s {n} {}", s.vars[*v]));
                }
                h.send(&format!("h {handler}"));
                stats.handler_calls += 1;
                loop {
                    let line = h.recv();
                    let mut words = line.split_whitespace();
                    match words.next() {
                        Some("done") => break,
                        Some("a") => {
                            return Err(format!(
                                "run {run} step {step}: C assertion failed at line {line}"
                            ))
                        }
                        Some("c") => {
                            let name = words.next().unwrap_or_default();
                            let &t = callbacks
                                .get(name)
                                .ok_or_else(|| format!("unknown callback {name}"))?;
                            let args: Vec<u64> = words.map(|w| w.parse().unwrap()).collect();
                            s = ie.ctrl_call(&s, t, &args, None);
                            stats.callbacks += 1;
                            for (n, v) in &mirrors {
                                h.send(&format!("s {n} {}", s.vars[*v]));
                            }
                            h.send("r");
                        }
                        _ => return Err(format!("run {run} step {step}: harness said `{line}`")),
                    }
                }
                if s.err {
                    return Err(format!(
                        "run {run} step {step}: a C callback violated an assertion"
                    ));
                }
                let p = ie.magic_process(&s).unwrap();
                s = ie.ctrl_exit(&s, p, None);
            }
            if s.vars != r.vars || s.err != r.err {
                return Err(format!(
                    "run {run} step {step}: C {:?} vs interpreter {:?}",
                    s, r
                ));
            }
            if s.err {
                return Err(format!("run {run} step {step}: assertion failure"));
            }
        }
        stats.runs += 1;
    }
    Ok(stats)
}
