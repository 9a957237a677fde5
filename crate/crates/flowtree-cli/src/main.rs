//! Command-line front end: field-file parsing, subcommand orchestration,
//! machine-readable outputs.
//!
//! Exit codes: 0 success, 1 usage/schema error, 2 numeric failure (blow-up
//! or resonance where forbidden), 3 verification failure. Diagnostics go to
//! standard error; data goes to standard output or `--output`.
//!
//! Setting `FLOWTREE_RATIONAL=1` switches the linearize/resonances
//! subcommands to exact rational arithmetic internally (outputs keep the
//! same floating format). Diagram weights in `series` dumps are exact
//! fractions regardless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowtree::{
    build_series, deformed_initial_conditions, evaluate_series, find_resonance_diagrams,
    find_resonance_relations, linearizing_map, parse_field, radius_estimate,
    resonant_generator_catalog, trajectory_csv, FlowError, IntegratorConfig, Scalar, Trajectory,
    VectorField, C64, CQ, DEFAULT_CATALOG_ORDER, DEFAULT_MAX_ORDER,
};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "flowtree",
    version,
    about = "Tree-indexed series expansions for polynomial ODE flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FieldArg {
    /// Path to a field file: JSON {"dimension", "terms": [...], "spectrum"?}
    #[arg(long)]
    field: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the evolution series on a time grid, optionally against an
    /// adaptive Runge-Kutta oracle (CSV output).
    Evolve {
        #[command(flatten)]
        field: FieldArg,
        /// Initial point: comma-separated components, each `re` or `re:im`
        #[arg(long)]
        x0: String,
        /// Final time
        #[arg(long)]
        t: f64,
        /// Truncation order (diagram count grows fast; 8-12 is typical)
        #[arg(long, default_value_t = 8)]
        order: usize,
        /// Also integrate numerically and fill the `err` column
        #[arg(long)]
        oracle: bool,
        /// Number of grid intervals between 0 and t
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Write the CSV here instead of standard output
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Dump every diagram of the series with its exact weight (JSON).
    Series {
        #[command(flatten)]
        field: FieldArg,
        /// Truncation order; default 8 for quadratic fields, 6 otherwise
        #[arg(long)]
        order: Option<usize>,
    },
    /// Convergence-radius and blow-up-time estimates (JSON).
    Radius {
        #[command(flatten)]
        field: FieldArg,
        /// Initial point; its sup-norm feeds the time bound (default norm 1)
        #[arg(long)]
        x0: Option<String>,
    },
    /// Linearizing map near the fixed point at the origin (JSON).
    Linearize {
        #[command(flatten)]
        field: FieldArg,
        /// Skeleton order of the map
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// Also emit the deformed initial condition f⁻¹(x0)
        #[arg(long)]
        x0: Option<String>,
    },
    /// Resonance relations of the spectrum with diagram witnesses (JSON).
    Resonances {
        #[command(flatten)]
        field: FieldArg,
        /// Largest |n|₁ scanned for relations (λ, n−e_i) = 0
        #[arg(long, default_value_t = 4)]
        bound: usize,
        /// Largest diagram order searched for witnesses
        #[arg(long, default_value_t = DEFAULT_MAX_ORDER)]
        max_order: usize,
    },
    /// Resonant generator sets for λ = (i, ±ik) against the bundled
    /// reference lists (CSV).
    Catalog {
        /// Nonlinearity degree: 2 or 3
        #[arg(long)]
        degree: usize,
        /// Frequency ratio k (3 through 8)
        #[arg(long)]
        k: usize,
        /// Largest diagram order used as witness evidence
        #[arg(long, default_value_t = DEFAULT_CATALOG_ORDER)]
        max_order: usize,
    },
    /// Run the full acceptance battery; one line per criterion.
    Verify {
        /// Reseed the randomized criteria (default: pinned seeds)
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Failure { code: EXIT_NUMERIC, message: message.into() }
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        let code = match &e {
            FlowError::ResonanceEncountered { .. }
            | FlowError::BlowUp(_)
            | FlowError::OutsideRadius(_) => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the error path too.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Evolve { field, x0, t, order, oracle, samples, output } => {
            cmd_evolve(&field, &x0, t, order, oracle, samples, output)
        }
        Command::Series { field, order } => cmd_series(&field, order),
        Command::Radius { field, x0 } => cmd_radius(&field, x0.as_deref()),
        Command::Linearize { field, order, x0 } => cmd_linearize(&field, order, x0.as_deref()),
        Command::Resonances { field, bound, max_order } => {
            cmd_resonances(&field, bound, max_order)
        }
        Command::Catalog { degree, k, max_order } => cmd_catalog(degree, k, max_order),
        Command::Verify { seed } => cmd_verify(seed),
    }
}

fn exact_mode() -> bool {
    std::env::var("FLOWTREE_RATIONAL").map(|v| v == "1").unwrap_or(false)
}

fn load_field<S: Scalar>(arg: &FieldArg) -> Result<VectorField<S>, Failure> {
    let text = std::fs::read_to_string(&arg.field)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", arg.field.display())))?;
    Ok(parse_field(&text)?)
}

/// Parses `re` or `re:im` components separated by commas.
fn parse_x0(text: &str, dimension: usize) -> Result<Vec<C64>, Failure> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != dimension {
        return Err(Failure::usage(format!(
            "x0 has {} components, field dimension is {dimension}",
            parts.len()
        )));
    }
    parts
        .iter()
        .map(|p| {
            let (re, im) = match p.split_once(':') {
                Some((r, i)) => (r, i),
                None => (*p, "0"),
            };
            let re: f64 =
                re.trim().parse().map_err(|_| Failure::usage(format!("bad x0 component {p:?}")))?;
            let im: f64 =
                im.trim().parse().map_err(|_| Failure::usage(format!("bad x0 component {p:?}")))?;
            Ok(C64::new(re, im))
        })
        .collect()
}

/// The spectrum from the field file, or the diagonal linear part if the
/// file omitted the explicit claim.
fn spectrum_of<S: Scalar>(field: &VectorField<S>) -> Result<Vec<S>, Failure> {
    if let Some(s) = field.spectrum() {
        return Ok(s.to_vec());
    }
    let mut diag = vec![S::zero(); field.dimension()];
    for term in field.terms() {
        if term.degree() != 1 {
            continue;
        }
        let j = term.exponents.iter().position(|&e| e == 1).expect("degree-1 term");
        if j != term.target {
            return Err(Failure::usage(format!(
                "linear part is not diagonal ({}); supply a diagonalized field",
                term.describe()
            )));
        }
        diag[j] = term.coeff.clone();
    }
    Ok(diag)
}

/// Writes to standard output; a closed pipe (e.g. `| head`) ends the
/// process quietly instead of panicking.
fn print_out(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
        std::process::exit(0);
    }
}

fn emit(text: &str, output: Option<PathBuf>) -> Result<(), Failure> {
    match output {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print_out(text);
            Ok(())
        }
    }
}

fn cmd_evolve(
    field_arg: &FieldArg,
    x0_text: &str,
    t: f64,
    order: usize,
    oracle: bool,
    samples: usize,
    output: Option<PathBuf>,
) -> Result<u8, Failure> {
    if !t.is_finite() || t < 0.0 {
        return Err(Failure::usage("t must be finite and non-negative"));
    }
    if samples == 0 {
        return Err(Failure::usage("need at least one sample interval"));
    }
    let field: VectorField<C64> = load_field(field_arg)?;
    let x0 = parse_x0(x0_text, field.dimension())?;
    let series = build_series(&field, order);

    let mut times = Vec::with_capacity(samples + 1);
    let mut states = Vec::with_capacity(samples + 1);
    for k in 0..=samples {
        let tk = t * k as f64 / samples as f64;
        let x = evaluate_series(&series, &x0, &C64::new(tk, 0.0))?;
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Failure::numeric(format!("series value is not finite at t = {tk}")));
        }
        times.push(tk);
        states.push(x);
    }

    let errors = if oracle {
        // One fixed-step integration whose steps land exactly on the grid.
        let per_sample = ((t / samples as f64) / 1e-3).ceil().max(1.0) as usize;
        let h = t / (samples as f64 * per_sample as f64);
        let traj = flowtree::numeric::integrate(&field, &x0, t, &IntegratorConfig::rk4(h))?;
        if !traj.complete {
            return Err(Failure::numeric(format!(
                "oracle integration stopped early (blow-up before t = {t})"
            )));
        }
        let mut errs = Vec::with_capacity(samples + 1);
        for k in 0..=samples {
            let oracle_state = &traj.states[k * per_sample];
            let err = states[k]
                .iter()
                .zip(oracle_state)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        Some(errs)
    } else {
        None
    };

    let trajectory = Trajectory { times, states, complete: true };
    let csv = trajectory_csv(&trajectory, errors.as_deref());
    emit(&csv, output)?;
    Ok(0)
}

fn cmd_series(field_arg: &FieldArg, order: Option<usize>) -> Result<u8, Failure> {
    let field: VectorField<C64> = load_field(field_arg)?;
    let max_arity = field.arities().into_iter().max().unwrap_or(2);
    let order = order.unwrap_or(if max_arity >= 3 { 6 } else { 8 });
    let series = build_series(&field, order);
    let orders: Vec<serde_json::Value> = series
        .orders()
        .iter()
        .map(|group| {
            let diagrams: Vec<serde_json::Value> = group
                .diagrams
                .iter()
                .map(|(d, w)| {
                    serde_json::json!({
                        "diagram": d.to_text(),
                        "open_edges": d.open_edges(),
                        "tree_factorial": d.tree_factorial().to_string(),
                        "weight": w.to_string(),
                    })
                })
                .collect();
            serde_json::json!({ "order": group.order, "diagrams": diagrams })
        })
        .collect();
    let doc = serde_json::json!({
        "dimension": field.dimension(),
        "truncation": series.truncation(),
        "diagram_count": series.diagram_count(),
        "orders": orders,
    });
    print_out(&format!("{}\n", serde_json::to_string_pretty(&doc).expect("series dump serialization")));
    Ok(0)
}

fn cmd_radius(field_arg: &FieldArg, x0_text: Option<&str>) -> Result<u8, Failure> {
    let field: VectorField<C64> = load_field(field_arg)?;
    let x0_norm = match x0_text {
        Some(text) => parse_x0(text, field.dimension())?
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max),
        None => 1.0,
    };
    let report = radius_estimate(&field, x0_norm)?;
    let doc = serde_json::json!({
        "degree": report.degree,
        "x0_norm": x0_norm,
        "norm_bound": report.norm_bound,
        "corrected_bound": report.corrected_bound,
        "uncorrected_bound": report.uncorrected_bound,
        "time_bound": report.time_bound,
        "empirical_blowup": report.empirical_blowup,
    });
    print_out(&format!("{}\n", serde_json::to_string_pretty(&doc).expect("radius serialization")));
    Ok(0)
}

fn linearize_doc<S: Scalar>(
    field: &VectorField<S>,
    order: usize,
    x0: Option<&[C64]>,
) -> Result<serde_json::Value, Failure> {
    let spectrum = spectrum_of(field)?;
    let series = linearizing_map(field, &spectrum, order)?;
    let terms: Vec<serde_json::Value> = series
        .terms()
        .iter()
        .map(|(skeleton, c)| {
            let z = c.to_c64();
            serde_json::json!({
                "skeleton": skeleton.to_text(),
                "target": skeleton.target(),
                "open_counts": skeleton.open_counts(field.dimension()),
                "coeff": [z.re, z.im],
            })
        })
        .collect();
    let c0 = match x0 {
        Some(point) => {
            let exact: Vec<S> =
                point.iter().map(|z| S::from_f64_parts(z.re, z.im)).collect();
            let c0 = deformed_initial_conditions(&series, &exact, order)?;
            Some(c0.iter().map(|v| { let z = v.to_c64(); [z.re, z.im] }).collect::<Vec<_>>())
        }
        None => None,
    };
    Ok(serde_json::json!({
        "order": order,
        "dimension": field.dimension(),
        "spectrum": spectrum.iter().map(|l| { let z = l.to_c64(); [z.re, z.im] }).collect::<Vec<_>>(),
        "terms": terms,
        "c0": c0,
    }))
}

fn cmd_linearize(field_arg: &FieldArg, order: usize, x0_text: Option<&str>) -> Result<u8, Failure> {
    let doc = if exact_mode() {
        let field: VectorField<CQ> = load_field(field_arg)?;
        let x0 = x0_text.map(|t| parse_x0(t, field.dimension())).transpose()?;
        linearize_doc(&field, order, x0.as_deref())?
    } else {
        let field: VectorField<C64> = load_field(field_arg)?;
        let x0 = x0_text.map(|t| parse_x0(t, field.dimension())).transpose()?;
        linearize_doc(&field, order, x0.as_deref())?
    };
    print_out(&format!("{}\n", serde_json::to_string_pretty(&doc).expect("linearize serialization")));
    Ok(0)
}

fn resonances_doc<S: Scalar>(
    field: &VectorField<S>,
    bound: usize,
    max_order: usize,
) -> Result<serde_json::Value, Failure> {
    let spectrum = spectrum_of(field)?;
    let relations = find_resonance_relations(&spectrum, bound)?;
    let witnesses = find_resonance_diagrams(field, &spectrum, max_order)?;
    let mut witness_by_key: BTreeMap<(Vec<u32>, usize), String> = BTreeMap::new();
    for w in &witnesses {
        if let Some(skeleton) = &w.witness {
            witness_by_key
                .entry((w.n.clone(), w.target))
                .or_insert_with(|| skeleton.to_text());
        }
    }
    let rows: Vec<serde_json::Value> = relations
        .iter()
        .map(|r| {
            serde_json::json!({
                "n": r.n,
                "target": r.target,
                "approximate": r.approximate,
                "witness": witness_by_key.get(&(r.n.clone(), r.target)),
            })
        })
        .collect();
    Ok(serde_json::json!({
        "bound": bound,
        "max_order": max_order,
        "relations": rows,
    }))
}

fn cmd_resonances(field_arg: &FieldArg, bound: usize, max_order: usize) -> Result<u8, Failure> {
    let doc = if exact_mode() {
        let field: VectorField<CQ> = load_field(field_arg)?;
        resonances_doc(&field, bound, max_order)?
    } else {
        let field: VectorField<C64> = load_field(field_arg)?;
        resonances_doc(&field, bound, max_order)?
    };
    print_out(&format!("{}\n", serde_json::to_string_pretty(&doc).expect("resonances serialization")));
    Ok(0)
}

fn cmd_catalog(degree: usize, k: usize, max_order: usize) -> Result<u8, Failure> {
    let row = resonant_generator_catalog(degree, k, max_order)?;
    let mut csv = String::from("degree,k,sign,generators,computed,reference\n");
    let reference = row.reference.clone().unwrap_or_default();
    for (sign, sets) in [("+", &row.plus_sets), ("-", &row.minus_sets)] {
        // Union of computed and reference sets, deterministically ordered.
        let mut universe: Vec<Vec<String>> = Vec::new();
        for s in sets {
            universe.push(s.generators.iter().cloned().collect());
        }
        for r in &reference {
            let v: Vec<String> = r.iter().cloned().collect();
            if !universe.contains(&v) {
                universe.push(v);
            }
        }
        universe.sort();
        for gens in universe {
            let in_computed = sets.iter().any(|s| {
                s.generators.iter().cloned().collect::<Vec<_>>() == gens
            });
            let in_reference = reference.iter().any(|r| {
                r.iter().cloned().collect::<Vec<_>>() == gens
            });
            let _ = writeln!(
                csv,
                "{degree},{k},{sign},{},{},{}",
                gens.join(" "),
                in_computed,
                in_reference
            );
        }
    }
    print_out(&csv);
    let matched = match row.matching_convention {
        Some(c) => format!("computed sets match the reference under the {c:?} convention"),
        None => "computed sets do not match the reference under either convention".to_string(),
    };
    eprintln!("{matched}");
    Ok(0)
}

fn cmd_verify(seed: Option<u64>) -> Result<u8, Failure> {
    let results = flowtree::run_all_seeded(seed);
    let mut failed = 0usize;
    for r in &results {
        print_out(&format!(
            "criterion {:02} {} {:<28} :: {}\n",
            r.id,
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        ));
        if !r.passed {
            failed += 1;
        }
    }
    print_out(&format!("{} of {} criteria passed\n", results.len() - failed, results.len()));
    if failed > 0 {
        eprintln!("verification failed on {failed} criterion(s)");
        return Ok(EXIT_VERIFICATION);
    }
    Ok(0)
}
