//! Command-line surface for the nonsig library. Every command reads and
//! writes the shared exchange formats (JSON tables, decompositions, specs,
//! quantum scenarios) and is deterministic given its arguments and seed.
//!
//! Exit codes: 0 success, 1 domain error (a violated precondition or a
//! failed check), 2 usage error (bad arguments or unparseable input).

use std::collections::BTreeSet;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use nonsig::catalog::{
    barrett_box, enumerate_classes, from_xor_characterization, pr_box, table2_box, BarrettSpec,
    ExtremalSpec,
};
use nonsig::format::{
    decomposition_from_json, decomposition_to_json, mix_components,
    scenario_from_json, spec_from_json, spec_to_json, table_from_json, table_to_json,
    table_to_text,
};
use nonsig::interconvert::{box_count, simulate_exact, simulate_sampled};
use nonsig::model::{CorrelationTable, Scenario, DEFAULT_ORBIT_BUDGET};
use nonsig::onezero::{decompose_to_table2, DecomposeError, DEFAULT_LEAF_BUDGET};
use nonsig::polytope::{
    caratheodory_decompose, enumerate_vertices, is_extremal, is_local, ExtremalityResult,
    LocalityResult, DEFAULT_LOCAL_BUDGET, DEFAULT_VERTEX_CAP,
};
use nonsig::quantum::{preset, quantum_to_prbox_report};
use nonsig::rational::format_rational;
use nonsig::Error;

#[derive(Parser)]
#[command(name = "nonsig", version, about = "Exact tools for nonsignaling correlation tables")]
struct Cli {
    /// Output serialization
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct TableInput {
    /// Table JSON file; reads standard input when omitted or "-"
    file: Option<PathBuf>,
    /// Accept unnormalized fractions in the input
    #[arg(long)]
    lenient: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check positivity and per-cell normalization
    Validate(TableInput),
    /// Per-party outcome distributions (requires a nonsignaling table)
    Marginals(TableInput),
    /// Check the nonsignaling equalities
    Nonsignaling(TableInput),
    /// Decide membership in the local polytope; emits a model or a
    /// separating inequality
    Local {
        #[command(flatten)]
        input: TableInput,
        #[arg(long, default_value_t = DEFAULT_LOCAL_BUDGET)]
        budget: usize,
    },
    /// Decide whether the table is an extreme point
    Extremal(TableInput),
    /// Lexicographic minimum over all local relabelings
    Canonical {
        #[command(flatten)]
        input: TableInput,
        #[arg(long, default_value_t = DEFAULT_ORBIT_BUDGET)]
        budget: u128,
    },
    /// Construct a named table
    Make {
        #[command(subcommand)]
        what: MakeCommand,
    },
    /// Convex decomposition into extreme points
    Decompose {
        #[command(flatten)]
        input: TableInput,
        #[arg(long, value_enum, default_value_t = Method::Appendix)]
        method: Method,
        #[arg(long, default_value_t = DEFAULT_LEAF_BUDGET)]
        budget: usize,
    },
    /// Mix a decomposition document back into a single table
    Reconstruct {
        file: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
    },
    /// Run the PR-box protocol for one cell of a nonlocal box
    Simulate {
        /// "pr", a spec JSON file, or inline spec JSON
        #[arg(long)]
        spec: String,
        #[arg(long)]
        x: usize,
        #[arg(long)]
        y: usize,
        /// 0 selects exact marginalization; positive values sample
        #[arg(long, default_value_t = 0)]
        trials: u64,
        /// Required when trials > 0
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Enumerate every extreme point of the nonsignaling polytope
    Vertices {
        #[arg(long)]
        dx: usize,
        #[arg(long)]
        dy: usize,
        #[arg(long)]
        da: usize,
        #[arg(long)]
        db: usize,
        #[arg(long, default_value_t = DEFAULT_VERTEX_CAP)]
        cap: usize,
    },
    /// One spec per equivalence class of binary-output extreme points
    Classes {
        #[arg(long)]
        dx: usize,
        #[arg(long)]
        dy: usize,
        #[arg(long, default_value_t = DEFAULT_ORBIT_BUDGET)]
        budget: u128,
    },
    /// Locality/decomposition/box-count report for a quantum scenario
    QuantumReport {
        /// Preset name or scenario JSON file
        #[arg(long)]
        scenario: String,
    },
}

#[derive(Subcommand)]
enum MakeCommand {
    /// The PR box
    Pr,
    /// The k-outcome generalization of the PR box
    Barrett {
        #[arg(long)]
        k: usize,
    },
    /// A catalog box from its spec
    Table2 {
        /// Spec JSON file or inline JSON
        #[arg(long)]
        spec: String,
    },
    /// Fully nondeterministic box from its anticorrelated-cell set
    Xor {
        #[arg(long)]
        dx: usize,
        #[arg(long)]
        dy: usize,
        /// Cells as "x,y;x,y;..." (empty for none)
        #[arg(long, default_value = "")]
        q: String,
    },
    /// Born-rule table of a named quantum preset
    QuantumPreset { name: String },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Method {
    Appendix,
    Caratheodory,
}

/// Domain failure (exit 1) as opposed to usage failure (exit 2).
enum CliError {
    Domain(String),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(m) => CliError::Usage(m),
            other => CliError::Domain(other.to_string()),
        }
    }
}

fn read_input(path: &Option<PathBuf>) -> Result<String, CliError> {
    match path {
        Some(p) if p.as_os_str() != "-" => std::fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display()))),
        _ => {
            let mut buf = String::new();
            std::io::stdin()
                .read_to_string(&mut buf)
                .map_err(|e| CliError::Usage(format!("cannot read standard input: {e}")))?;
            Ok(buf)
        }
    }
}

fn parse_json(text: &str) -> Result<Value, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Usage(format!("invalid JSON at line {}, column {}: {e}", e.line(), e.column()))
    })
}

fn load_table(input: &TableInput) -> Result<CorrelationTable, CliError> {
    let text = read_input(&input.file)?;
    let v = parse_json(&text)?;
    table_from_json(&v, !input.lenient).map_err(CliError::from)
}

/// Accepts "pr", a file path, or inline JSON starting with '{'.
fn load_spec(arg: &str) -> Result<ExtremalSpec, CliError> {
    if arg == "pr" {
        return Ok(ExtremalSpec::pr());
    }
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg)
            .map_err(|e| CliError::Usage(format!("cannot read {arg}: {e}")))?
    };
    spec_from_json(&parse_json(&text)?).map_err(CliError::from)
}

fn emit(format: Format, v: &Value, text: String) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(v).unwrap()),
        Format::Text => print!("{text}"),
    }
}

fn emit_table(format: Format, t: &CorrelationTable) {
    emit(format, &table_to_json(t), table_to_text(t));
}

fn run(cli: Cli) -> Result<(), CliError> {
    let format = cli.format;
    match cli.command {
        Command::Validate(input) => {
            let t = load_table(&input)?;
            let report = t.validate();
            let text = if report.ok() {
                "valid\n".to_string()
            } else {
                report
                    .violations
                    .iter()
                    .map(|v| format!("{v:?}\n"))
                    .collect()
            };
            emit(
                format,
                &json!({
                    "valid": report.ok(),
                    "violations": report.violations.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>(),
                }),
                text,
            );
            if !report.ok() {
                return Err(CliError::Domain("table is not a probability table".into()));
            }
        }
        Command::Nonsignaling(input) => {
            let t = load_table(&input)?;
            let violations = t.signaling_violations();
            emit(
                format,
                &json!({
                    "nonsignaling": violations.is_empty(),
                    "violations": violations.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>(),
                }),
                if violations.is_empty() {
                    "nonsignaling\n".to_string()
                } else {
                    violations.iter().map(|v| format!("{v:?}\n")).collect()
                },
            );
            if !violations.is_empty() {
                return Err(CliError::Domain("table is signaling".into()));
            }
        }
        Command::Marginals(input) => {
            let t = load_table(&input)?;
            let m = t.marginals()?;
            let fmt_side = |side: &Vec<Vec<nonsig::Rational>>| -> Vec<Vec<String>> {
                side.iter().map(|d| d.iter().map(format_rational).collect()).collect()
            };
            let alice = fmt_side(&m.alice);
            let bob = fmt_side(&m.bob);
            let mut text = String::new();
            for (x, d) in alice.iter().enumerate() {
                text.push_str(&format!("alice x={x}: {}\n", d.join(" ")));
            }
            for (y, d) in bob.iter().enumerate() {
                text.push_str(&format!("bob y={y}: {}\n", d.join(" ")));
            }
            emit(format, &json!({ "alice": alice, "bob": bob }), text);
        }
        Command::Local { input, budget } => {
            let t = load_table(&input)?;
            match is_local(&t, budget)? {
                LocalityResult::Local(model) => {
                    let weights: Vec<Value> = model
                        .weights
                        .iter()
                        .map(|(w, f, g)| json!({"weight": format_rational(w), "alice": f, "bob": g}))
                        .collect();
                    emit(
                        format,
                        &json!({ "local": true, "model": weights }),
                        format!("local ({} deterministic strategies)\n", model.weights.len()),
                    );
                }
                LocalityResult::Nonlocal(cert) => {
                    let coeffs: Vec<String> = cert.coeffs.iter().map(format_rational).collect();
                    emit(
                        format,
                        &json!({
                            "local": false,
                            "certificate": { "coeffs": coeffs, "offset": format_rational(&cert.offset) },
                            "value": format_rational(&cert.evaluate(&t)),
                        }),
                        format!(
                            "nonlocal (separating inequality violated by {})\n",
                            format_rational(&cert.evaluate(&t))
                        ),
                    );
                }
            }
        }
        Command::Extremal(input) => {
            let t = load_table(&input)?;
            match is_extremal(&t) {
                ExtremalityResult::Extremal { tight } => emit(
                    format,
                    &json!({ "extremal": true, "tight_zero_entries": tight.len() }),
                    "extremal\n".to_string(),
                ),
                ExtremalityResult::NotExtremal { direction } => emit(
                    format,
                    &json!({
                        "extremal": false,
                        "direction": direction.iter().map(format_rational).collect::<Vec<_>>(),
                    }),
                    "not extremal\n".to_string(),
                ),
            }
        }
        Command::Canonical { input, budget } => {
            let t = load_table(&input)?;
            let (canon, _) = t.canonical_form(budget)?;
            emit_table(format, &canon);
        }
        Command::Make { what } => {
            let t = match what {
                MakeCommand::Pr => pr_box(),
                MakeCommand::Barrett { k } => barrett_box(BarrettSpec { k })?,
                MakeCommand::Table2 { spec } => table2_box(&load_spec(&spec)?)?,
                MakeCommand::Xor { dx, dy, q } => {
                    let mut cells = BTreeSet::new();
                    for part in q.split(';').filter(|p| !p.trim().is_empty()) {
                        let (xs, ys) = part
                            .split_once(',')
                            .ok_or_else(|| CliError::Usage(format!("bad cell {part:?}")))?;
                        let x = xs.trim().parse().map_err(|_| CliError::Usage(format!("bad cell {part:?}")))?;
                        let y = ys.trim().parse().map_err(|_| CliError::Usage(format!("bad cell {part:?}")))?;
                        cells.insert((x, y));
                    }
                    from_xor_characterization(dx, dy, &cells)?
                }
                MakeCommand::QuantumPreset { name } => {
                    nonsig::quantum::born_table(&preset(&name)?)?
                }
            };
            emit_table(format, &t);
        }
        Command::Decompose { input, method, budget } => {
            let t = load_table(&input)?;
            let d = match method {
                Method::Appendix => decompose_to_table2(&t, budget).map_err(|e| match e {
                    DecomposeError::Budget { .. } => CliError::Domain(e.to_string()),
                    DecomposeError::Other(inner) => CliError::from(inner),
                })?
                .decomposition,
                Method::Caratheodory => caratheodory_decompose(&t)?,
            };
            let text: String = d
                .components
                .iter()
                .enumerate()
                .map(|(i, (w, c))| {
                    format!("component {i} weight {}\n{}", format_rational(w), table_to_text(c))
                })
                .collect();
            emit(format, &decomposition_to_json(&d.components), text);
        }
        Command::Reconstruct { file, lenient } => {
            let text = read_input(&file)?;
            let parts = decomposition_from_json(&parse_json(&text)?, !lenient)?;
            let t = mix_components(&parts)?;
            emit_table(format, &t);
        }
        Command::Simulate { spec, x, y, trials, seed } => {
            let spec = load_spec(&spec)?;
            if trials == 0 {
                let cell = simulate_exact(&spec, x, y)?;
                let strings: Vec<String> = cell.iter().map(format_rational).collect();
                emit(
                    format,
                    &json!({ "x": x, "y": y, "exact": true, "cell": strings }),
                    format!("{} {} / {} {}\n", strings[0], strings[1], strings[2], strings[3]),
                );
            } else {
                let seed = seed
                    .ok_or_else(|| CliError::Usage("--seed is required when sampling".into()))?;
                let (runs, freq) = simulate_sampled(&spec, x, y, trials, seed)?;
                let strings: Vec<String> = freq.iter().map(format_rational).collect();
                let transcript: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
                emit(
                    format,
                    &json!({
                        "x": x, "y": y, "exact": false, "trials": trials, "seed": seed,
                        "frequencies": strings,
                        "transcript": transcript,
                    }),
                    transcript
                        .iter()
                        .map(|line| format!("{line}\n"))
                        .chain([format!(
                            "frequencies: {} {} / {} {}\n",
                            strings[0], strings[1], strings[2], strings[3]
                        )])
                        .collect(),
                );
            }
        }
        Command::Vertices { dx, dy, da, db, cap } => {
            let s = Scenario::new(dx, dy, da, db)?;
            let vertices = enumerate_vertices(s, cap)?;
            let text: String = vertices
                .iter()
                .enumerate()
                .map(|(i, v)| format!("vertex {i}\n{}", table_to_text(v)))
                .chain([format!("total {}\n", vertices.len())])
                .collect();
            emit(
                format,
                &json!({
                    "count": vertices.len(),
                    "vertices": vertices.iter().map(table_to_json).collect::<Vec<_>>(),
                }),
                text,
            );
        }
        Command::Classes { dx, dy, budget } => {
            let classes = enumerate_classes(dx, dy, budget)?;
            let mut rows = Vec::new();
            let mut text = String::new();
            for spec in &classes {
                let boxes = if spec.is_nonlocal() {
                    Some(box_count(spec)?)
                } else {
                    None
                };
                text.push_str(&format!(
                    "gx={} gy={} anticorrelated={:?} pr_boxes={}\n",
                    spec.gx,
                    spec.gy,
                    spec.anticorrelated.iter().collect::<Vec<_>>(),
                    boxes.map_or("0".to_string(), |b| b.used.to_string()),
                ));
                rows.push(json!({
                    "spec": spec_to_json(spec),
                    "nonlocal": spec.is_nonlocal(),
                    "pr_boxes": boxes.map_or(0, |b| b.used),
                }));
            }
            text.push_str(&format!("total {}\n", classes.len()));
            emit(format, &json!({ "count": classes.len(), "classes": rows }), text);
        }
        Command::QuantumReport { scenario } => {
            let sc = match preset(&scenario) {
                Ok(sc) => sc,
                Err(Error::Parameter(_)) => {
                    let text = std::fs::read_to_string(&scenario).map_err(|e| {
                        CliError::Usage(format!("not a preset and cannot read {scenario}: {e}"))
                    })?;
                    scenario_from_json(&parse_json(&text)?)?
                }
                Err(e) => return Err(e.into()),
            };
            let report = quantum_to_prbox_report(&sc)?;
            let decomposition = report
                .decomposition
                .as_ref()
                .map(|d| decomposition_to_json(&d.components));
            let mut text = format!(
                "local: {}\nnonlocal weight: {}\npr boxes sufficient: {}\n",
                report.local,
                format_rational(&report.nonlocal_weight),
                report.pr_boxes
            );
            text.push_str(&table_to_text(&report.table));
            emit(
                format,
                &json!({
                    "local": report.local,
                    "nonlocal_weight": format_rational(&report.nonlocal_weight),
                    "pr_boxes": report.pr_boxes,
                    "table": table_to_json(&report.table),
                    "decomposition": decomposition,
                }),
                text,
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
