//! Command-line front door: one subcommand per pipeline, deterministic
//! machine-readable output (JSON by default, CSV/DOT where natural).
//!
//! Exit codes: 0 success, 2 violated precondition, 3 precision or
//! enumeration bound exhausted, 4 internal invariant breach.

use arbor_p::config::{OutputFormat, RunConfig};
use arbor_p::padic::PadicError;
use arbor_p::quadforms::{self, FormError};
use arbor_p::quatdef::QuatError;
use arbor_p::report;
use arbor_p::shimura::{self, ShimuraError};
use arbor_p::volcano::{self, DomainBox};
use arbor_p::bttree::TreeError;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "arbor-p", version, about = "Exact arithmetic on the tree of PGL2(Qp): class groups, volcanoes, quaternion orders, and equidistribution statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Working precision in base-p digits.
    #[arg(long, global = true, default_value_t = 32)]
    precision: u32,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Seed echoed into artifacts (pipelines are deterministic).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Parallel width for per-discriminant maps.
    #[arg(long, global = true, default_value_t = 1)]
    parallelism: usize,
    /// Statistical warning tolerance.
    #[arg(long, global = true, default_value_t = 0.05)]
    tolerance: f64,
    /// Write to a file instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<std::path::PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, PartialEq)]
enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Reduced forms and class number of a negative discriminant.
    Classgroup {
        #[arg(short, long, allow_hyphen_values = true)]
        d: i128,
    },
    /// Rim length k and the Picard data of the Z[1/p]-order.
    Pic {
        #[arg(short, long, allow_hyphen_values = true)]
        d: i128,
        #[arg(short, long)]
        p: u64,
    },
    /// The (p+1)-volcano of a split discriminant to a given depth.
    Volcano {
        #[arg(short, long, allow_hyphen_values = true)]
        d: i128,
        #[arg(short, long)]
        p: u64,
        #[arg(long, default_value_t = 1)]
        depth: u32,
        /// Emit DOT (same as --format dot).
        #[arg(long)]
        dot: bool,
    },
    /// The rim cycles of a split discriminant.
    Iscycles {
        #[arg(short, long, allow_hyphen_values = true)]
        d: i128,
        #[arg(short, long)]
        p: u64,
    },
    /// Equidistribution statistic of CM points over a discriminant range.
    Duke {
        #[arg(long, allow_hyphen_values = true)]
        dmin: i128,
        #[arg(long, allow_hyphen_values = true)]
        dmax: i128,
        #[arg(short, long)]
        p: u64,
        /// Height threshold Y (>= 1) as N or N/D.
        #[arg(long = "Y", default_value = "2")]
        y: String,
    },
    /// The finite quotient graph of the tree with stabilizer masses.
    Quotient {
        #[arg(short, long)]
        q: u64,
        #[arg(short, long)]
        p: u64,
    },
    /// Heegner points of one discriminant on the quotient graph.
    Heegner {
        #[arg(short, long, allow_hyphen_values = true)]
        d: i128,
        #[arg(short, long)]
        q: u64,
        #[arg(short, long)]
        p: u64,
    },
    /// Distribution of Heegner points over quotient classes for a range.
    Equidist {
        #[arg(short, long)]
        q: u64,
        #[arg(short, long)]
        p: u64,
        #[arg(long, allow_hyphen_values = true)]
        dmax: i128,
        #[arg(long, allow_hyphen_values = true, default_value_t = -3)]
        dmin: i128,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            match &cli.common.output {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, out) {
                        eprintln!("error: cannot write output: {}", e);
                        return ExitCode::from(4);
                    }
                }
                None => print!("{}", out),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn precondition(msg: String) -> CliError {
        CliError { code: 2, message: msg }
    }
    fn precision(msg: String) -> CliError {
        CliError { code: 3, message: msg }
    }
    fn internal(msg: String) -> CliError {
        CliError { code: 4, message: msg }
    }
}

fn form_error(e: FormError) -> CliError {
    match e {
        FormError::Padic(PadicError::PrecisionExhausted) => CliError::precision(e.to_string()),
        _ => CliError::precondition(e.to_string()),
    }
}

fn quat_error(e: QuatError) -> CliError {
    CliError::precondition(e.to_string())
}

fn volcano_error(e: volcano::VolcanoError) -> CliError {
    match e {
        volcano::VolcanoError::Form(f) => form_error(f),
        volcano::VolcanoError::Embed(inner) => CliError::precision(inner.to_string()),
        volcano::VolcanoError::Tree(TreeError::Padic(_)) => {
            CliError::precision("p-adic precision exhausted in the tree computation".into())
        }
        volcano::VolcanoError::Tree(t) => CliError::internal(t.to_string()),
    }
}

fn shimura_error(e: ShimuraError) -> CliError {
    match e {
        ShimuraError::SplitAtP => CliError::precondition(e.to_string()),
        ShimuraError::Quat(q) => quat_error(q),
        ShimuraError::Padic(_) | ShimuraError::EnumerationBoundExceeded { .. } => {
            CliError::precision(e.to_string())
        }
        ShimuraError::Tree(TreeError::Padic(_)) => CliError::precision(e.to_string()),
        ShimuraError::Tree(t) => CliError::internal(t.to_string()),
    }
}

fn config_of(c: &Common, p: u64, depth: u32) -> RunConfig {
    RunConfig {
        prime: p,
        precision: c.precision,
        depth,
        tolerance: c.tolerance,
        format: match c.format {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
            Format::Dot => OutputFormat::Dot,
        },
        seed: c.seed,
        parallelism: c.parallelism.max(1),
    }
}

fn config_line(cfg: &RunConfig) -> String {
    format!(
        "arbor-p/1 p={} precision={} depth={} seed={} parallelism={}",
        cfg.prime, cfg.precision, cfg.depth, cfg.seed, cfg.parallelism
    )
}

fn parse_ratio(s: &str) -> Result<(i64, i64), CliError> {
    let parts: Vec<&str> = s.split('/').collect();
    let parse = |t: &str| {
        t.trim()
            .parse::<i64>()
            .map_err(|_| CliError::precondition(format!("cannot parse rational '{}'", s)))
    };
    match parts.as_slice() {
        [n] => Ok((parse(n)?, 1)),
        [n, d] => Ok((parse(n)?, parse(d)?)),
        _ => Err(CliError::precondition(format!("cannot parse rational '{}'", s))),
    }
}

fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Classgroup { d } => {
            let cfg = config_of(&cli.common, 2, 0);
            let cg = quadforms::class_group(*d).map_err(form_error)?;
            match cli.common.format {
                Format::Csv => {
                    let mut s = format!("# {}\n", config_line(&cfg));
                    s.push_str("d,h,a,b,c\n");
                    for f in &cg.reduced_forms {
                        s.push_str(&format!("{},{},{},{},{}\n", cg.d, cg.h, f.a, f.b, f.c));
                    }
                    Ok(s)
                }
                _ => {
                    let payload = json!({
                        "d": cg.d,
                        "h": cg.h,
                        "forms": cg.reduced_forms.iter()
                            .map(|f| json!([f.a.to_string(), f.b.to_string(), f.c.to_string()]))
                            .collect::<Vec<_>>(),
                    });
                    Ok(report::to_string_pretty(&report::envelope(&cfg, "classgroup", &payload)))
                }
            }
        }
        Command::Pic { d, p } => {
            let cfg = config_of(&cli.common, *p, 0);
            let pic = quadforms::pic_of_s_order(*d, *p).map_err(form_error)?;
            match cli.common.format {
                Format::Csv => quadforms::pic_csv(&[(*d, *p)], &config_line(&cfg)).map_err(form_error),
                _ => {
                    let cert = match pic.certificate {
                        quadforms::PicCertificate::SplitGenerator { x, y, k } => json!({
                            "kind": "split",
                            "x": x.to_string(),
                            "y": y.to_string(),
                            "norm": format!("{}^{}", p, k),
                        }),
                        quadforms::PicCertificate::InertPrincipal { p } => json!({
                            "kind": "inert",
                            "generator": p.to_string(),
                        }),
                    };
                    let payload = json!({
                        "d": pic.d,
                        "p": pic.p,
                        "h": pic.h,
                        "k": pic.k,
                        "h_prime": pic.h_prime,
                        "certificate": cert,
                        "cosets": pic.cosets.iter().map(|c| c.iter()
                            .map(|f| json!([f.a.to_string(), f.b.to_string(), f.c.to_string()]))
                            .collect::<Vec<_>>()).collect::<Vec<_>>(),
                    });
                    Ok(report::to_string_pretty(&report::envelope(&cfg, "pic", &payload)))
                }
            }
        }
        Command::Volcano { d, p, depth, dot } => {
            let cfg = config_of(&cli.common, *p, *depth);
            let v = volcano::build_volcano(*d, *p, *depth).map_err(volcano_error)?;
            if *dot || cli.common.format == Format::Dot {
                return Ok(v.dot(&config_line(&cfg)));
            }
            let payload = json!({
                "d": v.d,
                "p": v.p,
                "k": v.k,
                "depth": v.depth,
                "vertices": v.vertices.iter().map(|a| json!({
                    "rim": a.rim,
                    "word": a.word,
                })).collect::<Vec<_>>(),
                "edges": v.edges,
            });
            Ok(report::to_string_pretty(&report::envelope(&cfg, "volcano", &payload)))
        }
        Command::Iscycles { d, p } => {
            let cfg = config_of(&cli.common, *p, 0);
            let cycles = volcano::is_cycles(*d, *p).map_err(volcano_error)?;
            let payload = json!({
                "d": d,
                "p": p,
                "cycle_count": cycles.len(),
                "k": cycles.first().map_or(0, |c| c.coset.len()),
                "cycles": cycles.iter().map(|c| json!({
                    "classes": c.coset.iter()
                        .map(|f| json!([f.a.to_string(), f.b.to_string(), f.c.to_string()]))
                        .collect::<Vec<_>>(),
                    "cm_points": c.cm_points.iter().map(|t| json!({
                        "re": format!("{}/{}", t.re_num, t.den),
                        "im_sq": format!("{}/{}", t.im_sq_num, t.den * t.den),
                    })).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            });
            Ok(report::to_string_pretty(&report::envelope(&cfg, "iscycles", &payload)))
        }
        Command::Duke { dmin, dmax, p, y } => {
            let cfg = config_of(&cli.common, *p, 0);
            let (yn, yd) = parse_ratio(y)?;
            if yn <= 0 || yd <= 0 || yn < yd {
                return Err(CliError::precondition(
                    "the height threshold Y must be a rational >= 1".into(),
                ));
            }
            if dmin > dmax {
                return Err(CliError::precondition("dmin must be <= dmax".into()));
            }
            let ds = eligible_split_discriminants(*dmin, *dmax, *p);
            let boxes = default_boxes();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.parallelism)
                .build()
                .map_err(|e| CliError::internal(e.to_string()))?;
            let report_data = pool
                .install(|| volcano::duke_statistic(&ds, *p, (yn, yd), &boxes))
                .map_err(volcano_error)?;
            Ok(report::to_string_pretty(&report::envelope(&cfg, "duke", &report_data)))
        }
        Command::Quotient { q, p } => {
            let cfg = config_of(&cli.common, *p, 0);
            if q == p {
                return Err(CliError::precondition(
                    "q and p must be distinct primes".into(),
                ));
            }
            let g = shimura::quotient_graph(*q, *p, cli.common.precision).map_err(shimura_error)?;
            let payload = json!({
                "q": g.q,
                "p": g.p,
                "vertices": g.classes.iter().map(|c| json!({
                    "id": c.id,
                    "representative": c.representative,
                    "stab": c.stabilizer_order,
                    "mass": report::rational_string_u64(c.mass),
                })).collect::<Vec<_>>(),
                "edges": (0..g.classes.len()).flat_map(|i| {
                    let adjacency = &g.adjacency;
                    let row = adjacency[i].clone();
                    row.into_iter().enumerate().filter_map(move |(j, c)| {
                        (c > 0).then(|| json!({"from": i, "to": j, "count": c}))
                    })
                }).collect::<Vec<_>>(),
                "total_mass": report::rational_string_u64(g.total_mass()),
                "eichler_mass": report::rational_string_u64(shimura::eichler_mass(*q)),
            });
            Ok(report::to_string_pretty(&report::envelope(&cfg, "quotient", &payload)))
        }
        Command::Heegner { d, q, p } => {
            let cfg = config_of(&cli.common, *p, 0);
            let g = shimura::quotient_graph(*q, *p, cli.common.precision).map_err(shimura_error)?;
            let pts = shimura::heegner_set(*d, &g).map_err(shimura_error)?;
            let payload = json!({
                "d": d,
                "q": q,
                "p": p,
                "count": pts.len(),
                "points": pts.iter().map(|pt| json!({
                    "embedding_class": pt.embedding_class,
                    "quotient_class": pt.quotient_class,
                    "reduced_vertex": pt.reduced_vertex.label(),
                    "tau": {
                        "x": report::padic_json(&pt.tau.x),
                        "y": report::padic_json(&pt.tau.y),
                    },
                    "direction": [pt.direction.0, pt.direction.1],
                })).collect::<Vec<_>>(),
            });
            Ok(report::to_string_pretty(&report::envelope(&cfg, "heegner", &payload)))
        }
        Command::Equidist { q, p, dmax, dmin } => {
            let cfg = config_of(&cli.common, *p, 0);
            if dmin > dmax {
                return Err(CliError::precondition("dmin must be <= dmax".into()));
            }
            let g = shimura::quotient_graph(*q, *p, cli.common.precision).map_err(shimura_error)?;
            let ds = eligible_inert_discriminants(*dmin, *dmax, *q, *p);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.parallelism)
                .build()
                .map_err(|e| CliError::internal(e.to_string()))?;
            // Parallel over discriminants against the immutable graph,
            // collected in input order.
            let rows: Result<Vec<_>, ShimuraError> = pool.install(|| {
                ds.par_iter()
                    .map(|&d| shimura::heegner_set(d, &g).map(|pts| (d, pts)))
                    .collect()
            });
            let rows = rows.map_err(shimura_error)?;
            let report_data = assemble_equidist(&g, &rows);
            Ok(report::to_string_pretty(&report::envelope(&cfg, "equidist", &report_data)))
        }
    }
}

/// Fundamental discriminants in [dmin, dmax] split at p (with p prime to
/// the conductor, vacuous for fundamental d).
fn eligible_split_discriminants(dmin: i128, dmax: i128, p: u64) -> Vec<i128> {
    (dmin..=dmax)
        .filter(|&d| d < 0 && quadforms::is_fundamental(d))
        .filter(|&d| quadforms::splitting_type(d, p) == quadforms::SplittingType::Split)
        .collect()
}

/// Fundamental discriminants in [dmin, dmax], coprime to 2qp, inert at
/// both p and q.
fn eligible_inert_discriminants(dmin: i128, dmax: i128, q: u64, p: u64) -> Vec<i128> {
    (dmin..=dmax)
        .filter(|&d| d < 0 && quadforms::is_fundamental(d))
        .filter(|&d| d % 2 != 0 && d % (q as i128) != 0 && d % (p as i128) != 0)
        .filter(|&d| quadforms::splitting_type(d, p) == quadforms::SplittingType::Inert)
        .filter(|&d| quadforms::splitting_type(d, q) == quadforms::SplittingType::Inert)
        .collect()
}

fn default_boxes() -> Vec<DomainBox> {
    vec![
        DomainBox {
            x0: (-1, 2),
            x1: (1, 2),
            y0: (1, 1),
            y1: Some((3, 2)),
            label: "band 1 <= Im < 3/2".into(),
        },
        DomainBox {
            x0: (0, 1),
            x1: (1, 2),
            y0: (1, 1),
            y1: None,
            label: "right half, Im >= 1".into(),
        },
        DomainBox {
            x0: (-1, 2),
            x1: (0, 1),
            y0: (1, 1),
            y1: Some((2, 1)),
            label: "left half, 1 <= Im < 2".into(),
        },
    ]
}

fn assemble_equidist(
    g: &shimura::QuotientGraph,
    rows: &[(i128, Vec<shimura::HeegnerPoint>)],
) -> serde_json::Value {
    let nclasses = g.classes.len();
    let total_mass = g.total_mass();
    let pred: Vec<f64> = g
        .classes
        .iter()
        .map(|c| (1.0 / c.stabilizer_order as f64) / (total_mass.0 as f64 / total_mass.1 as f64))
        .collect();
    let mut pooled = vec![0usize; nclasses];
    let mut out_rows = Vec::new();
    for (d, pts) in rows {
        if pts.is_empty() {
            continue;
        }
        let mut counts = vec![0usize; nclasses];
        for pt in pts {
            counts[pt.quotient_class] += 1;
        }
        let n = pts.len() as f64;
        let tv = 0.5
            * counts
                .iter()
                .zip(&pred)
                .map(|(&c, &q)| (c as f64 / n - q).abs())
                .sum::<f64>();
        for (i, c) in counts.iter().enumerate() {
            pooled[i] += c;
        }
        out_rows.push(json!({
            "d": d,
            "count": pts.len(),
            "classes": counts,
            "tv": tv,
        }));
    }
    let total: usize = pooled.iter().sum();
    let pooled_tv = if total == 0 {
        0.0
    } else {
        0.5 * pooled
            .iter()
            .zip(&pred)
            .map(|(&c, &q)| (c as f64 / total as f64 - q).abs())
            .sum::<f64>()
    };
    json!({
        "q": g.q,
        "p": g.p,
        "masses": g.classes.iter().map(|c| report::rational_string_u64(c.mass)).collect::<Vec<_>>(),
        "predicted": pred,
        "rows": out_rows,
        "pooled_counts": pooled,
        "pooled_tv": pooled_tv,
    })
}
